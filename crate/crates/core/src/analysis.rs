//! Extrapolation condition number, Gram-weighted error functionals and the
//! bound checks relating `Ω`-error to `Ξ`-error.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bases::{BasisFamily, FunctionHandle, Point};
use crate::domains::{gram_matrix, Domain, GramMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub kappa: f64,
    /// `max_k ‖φ_k‖²_Ξ`
    pub max_xi_norm_sq: f64,
    /// `min_k ‖φ_k‖²_Ω`
    pub min_omega_norm_sq: f64,
    pub dim: usize,
    pub omega_norms_sq: Vec<f64>,
    pub xi_norms_sq: Vec<f64>,
}

impl ConditionReport {
    pub fn from_norms(omega_norms_sq: Vec<f64>, xi_norms_sq: Vec<f64>) -> Result<Self> {
        if omega_norms_sq.len() != xi_norms_sq.len() || omega_norms_sq.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: omega_norms_sq.len(),
                got: xi_norms_sq.len(),
            });
        }
        let min_omega_norm_sq = omega_norms_sq.iter().copied().fold(f64::INFINITY, f64::min);
        let max_xi_norm_sq = xi_norms_sq.iter().copied().fold(0.0, f64::max);
        if !(min_omega_norm_sq > 0.0) {
            return Err(Error::Precondition(
                "a basis member has zero norm on the data domain".into(),
            ));
        }
        let dim = omega_norms_sq.len();
        Ok(ConditionReport {
            kappa: dim as f64 * max_xi_norm_sq / min_omega_norm_sq,
            max_xi_norm_sq,
            min_omega_norm_sq,
            dim,
            omega_norms_sq,
            xi_norms_sq,
        })
    }

    pub fn from_grams(omega: &GramMatrix, xi: &GramMatrix) -> Result<Self> {
        Self::from_norms(omega.diagonal(), xi.diagonal())
    }
}

/// `κ = d · max_k ‖φ_k‖²_Ξ / min_k ‖φ_k‖²_Ω`. Orthogonality is not required.
pub fn condition_number(
    family: &BasisFamily,
    omega: &Domain,
    xi: &Domain,
) -> Result<ConditionReport> {
    ConditionReport::from_grams(&gram_matrix(omega, family)?, &gram_matrix(xi, family)?)
}

/// `Δᵀ G Δ`: the squared norm of `Σ Δ_k φ_k` over the Gram matrix's domain.
pub fn error_quadratic(delta: &[f64], gram: &GramMatrix) -> Result<f64> {
    if delta.len() != gram.dim() {
        return Err(Error::DimensionMismatch {
            expected: gram.dim(),
            got: delta.len(),
        });
    }
    Ok(gram.bilinear(delta, delta))
}

/// `(Σ_k Σ_{j≠k} a_k a_j + Σ a_k²) / Σ a_k² = ‖a‖₁² / ‖a‖₂²`, at most `len(a)`.
pub fn lemma1_ratio(a: &[f64]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty vector".into()));
    }
    if let Some(bad) = a.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "entries must be positive, found {bad}"
        )));
    }
    let l1: f64 = a.iter().sum();
    let l2sq: f64 = a.iter().map(|v| v * v).sum();
    Ok(l1 * l1 / l2sq)
}

/// `true` if off-diagonal entries are below `tol` relative to the diagonal.
pub fn is_orthogonal(gram: &GramMatrix, tol: f64) -> bool {
    let d = gram.dim();
    (0..d).all(|i| {
        (0..d).all(|j| {
            i == j || gram.get(i, j).abs() <= tol * (gram.get(i, i) * gram.get(j, j)).sqrt()
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub kappa: f64,
    pub dim: usize,
    pub trials: usize,
    pub doubly_orthogonal: bool,
    /// Largest observed `E_Ξ / E_Ω`.
    pub max_ratio: f64,
    /// Trials with `E_Ξ > κ E_Ω` beyond slack.
    pub violations: usize,
    /// Trials with `E_Ξ > (κ/d) E_Ω` beyond slack (doubly orthogonal only).
    pub strict_violations: usize,
}

/// Samples random coefficient pairs and checks `E_Ξ ≤ κ E_Ω`, and
/// `E_Ξ ≤ (κ/d) E_Ω` when the family is orthogonal on `Ξ` as well.
pub fn verify_theorem1<R: Rng + ?Sized>(
    family: &BasisFamily,
    omega: &Domain,
    xi: &Domain,
    trials: usize,
    rng: &mut R,
) -> Result<Theorem1Report> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let g_omega = gram_matrix(omega, family)?;
    let g_xi = gram_matrix(xi, family)?;
    if !is_orthogonal(&g_omega, 1e-8) {
        return Err(Error::Precondition(
            "family is not orthogonal on the data domain".into(),
        ));
    }
    let doubly_orthogonal = is_orthogonal(&g_xi, 1e-8);
    let cond = ConditionReport::from_grams(&g_omega, &g_xi)?;
    let d = family.dim();
    let mut report = Theorem1Report {
        kappa: cond.kappa,
        dim: d,
        trials,
        doubly_orthogonal,
        max_ratio: 0.0,
        violations: 0,
        strict_violations: 0,
    };
    for _ in 0..trials {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let g_hat: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let delta: Vec<f64> = g_hat.iter().zip(&g).map(|(a, b)| a - b).collect();
        let e_xi = error_quadratic(&delta, &g_xi)?;
        let e_omega = error_quadratic(&delta, &g_omega)?;
        if e_omega == 0.0 {
            continue;
        }
        let slack = 1e-9 * e_omega;
        report.max_ratio = report.max_ratio.max(e_xi / e_omega);
        if e_xi > cond.kappa * e_omega + slack {
            report.violations += 1;
        }
        if doubly_orthogonal && e_xi > cond.kappa / d as f64 * e_omega + slack {
            report.strict_violations += 1;
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSplit {
    /// Coefficients of `f_∥` in the family.
    pub coefficients: Vec<f64>,
    /// `‖f_⊥‖²` over the projection domain.
    pub residual_norm_sq: f64,
}

impl ProjectionSplit {
    pub fn parallel(&self, family: &BasisFamily) -> FunctionHandle {
        FunctionHandle::combination(&self.coefficients, family.members())
    }

    /// `‖f − f_∥‖²` over another domain.
    pub fn residual_norm_sq_on(
        &self,
        f: &FunctionHandle,
        family: &BasisFamily,
        dom: &Domain,
    ) -> Result<f64> {
        dom.integrate(|p: Point| {
            let r = f.eval(p)? - family.eval_function(&self.coefficients, p)?;
            Ok(r * r)
        })
    }
}

/// Best `L²(dom)` approximation of `f` from the family.
pub fn projection_split(
    f: &FunctionHandle,
    family: &BasisFamily,
    dom: &Domain,
) -> Result<ProjectionSplit> {
    let gram = gram_matrix(dom, family)?;
    let d = family.dim();
    let mut rhs = vec![0.0; d];
    let mut values = vec![0.0; d];
    for (p, w) in dom.nodes().iter().zip(dom.weights()) {
        family.eval_all(*p, &mut values)?;
        let fv = f.eval(*p)?;
        for (r, v) in rhs.iter_mut().zip(&values) {
            *r += w * fv * v;
        }
    }
    let chol = gram
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("Gram matrix on projection domain is singular".into()))?;
    let coefficients: Vec<f64> = chol
        .solve(&DVector::from_vec(rhs))
        .iter()
        .copied()
        .collect();
    let mut split = ProjectionSplit {
        coefficients,
        residual_norm_sq: 0.0,
    };
    split.residual_norm_sq = split.residual_norm_sq_on(f, family, dom)?;
    Ok(split)
}

/// Smallest and largest Gram eigenvalue, handy for rank diagnostics.
pub fn gram_spectrum(gram: &GramMatrix) -> (f64, f64) {
    let ev = gram.eigenvalues();
    (ev[0], ev[ev.len() - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use crate::bases::trig_member;
    use crate::domains::orthogonalize;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn kappa_examples() {
        let one = BasisFamily::trigonometric(1).unwrap();
        let same = Domain::interval(0.0, 1.0).unwrap();
        assert!((condition_number(&one, &same, &same).unwrap().kappa - 1.0).abs() < 1e-14);

        let r = condition_number(
            &one,
            &Domain::interval(0.0, 2.0).unwrap(),
            &Domain::interval(2.0, 3.0).unwrap(),
        )
        .unwrap();
        assert!((r.kappa - 0.5).abs() < 1e-14);
        assert_eq!(r.kappa, r.dim as f64 * r.max_xi_norm_sq / r.min_omega_norm_sq);

        let sc = BasisFamily::combination(vec![trig_member(1), trig_member(2)]).unwrap();
        let r = condition_number(
            &sc,
            &Domain::interval(0.0, 2.0 * PI).unwrap(),
            &Domain::interval(2.0 * PI, 3.0 * PI).unwrap(),
        )
        .unwrap();
        // M_Ξ = π/2, m_Ω = π
        assert!((r.max_xi_norm_sq - PI / 2.0).abs() < 1e-12);
        assert!((r.kappa - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_member_rejected() {
        let fam = BasisFamily::combination(vec![
            FunctionHandle::Constant { value: 1.0 },
            FunctionHandle::Constant { value: 0.0 },
        ])
        .unwrap();
        let d = Domain::interval(0.0, 1.0).unwrap();
        assert!(matches!(
            condition_number(&fam, &d, &d),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn error_quadratic_examples() {
        let id = GramMatrix::identity(2);
        assert_eq!(error_quadratic(&[0.0, 0.0], &id).unwrap(), 0.0);
        assert_eq!(error_quadratic(&[1.0, 1.0], &id).unwrap(), 2.0);
        let g = GramMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]))
            .unwrap();
        assert_eq!(error_quadratic(&[1.0, -1.0], &g).unwrap(), 3.0);
        assert!(error_quadratic(&[1.0], &g).is_err());
    }

    #[test]
    fn lemma1_examples() {
        assert!((lemma1_ratio(&[1.0; 7]).unwrap() - 7.0).abs() < 1e-12);
        assert_eq!(lemma1_ratio(&[4.2]).unwrap(), 1.0);
        assert!((lemma1_ratio(&[3.0, 4.0]).unwrap() - 1.96).abs() < 1e-15);
        assert!(lemma1_ratio(&[1.0, 0.0]).is_err());
        assert!(lemma1_ratio(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn theorem1_on_orthonormal_chebyshev() {
        let omega = Domain::interval(-1.0, 0.5).unwrap();
        let xi = Domain::interval(0.5, 1.0).unwrap();
        let fam = orthogonalize(&BasisFamily::chebyshev(7), &omega).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rep = verify_theorem1(&fam, &omega, &xi, 200, &mut rng).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.max_ratio <= rep.kappa);
        assert!(!rep.doubly_orthogonal);

        let raw = BasisFamily::chebyshev(7);
        assert!(matches!(
            verify_theorem1(&raw, &omega, &xi, 10, &mut rng),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn theorem1_doubly_orthogonal() {
        let fam = BasisFamily::combination((1..=6).map(trig_member).collect()).unwrap();
        let omega = Domain::interval(0.0, 2.0 * PI).unwrap();
        let xi = Domain::interval(2.0 * PI, 4.0 * PI).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rep = verify_theorem1(&fam, &omega, &xi, 100, &mut rng).unwrap();
        assert!(rep.doubly_orthogonal);
        assert_eq!(rep.strict_violations, 0);
        let cond = condition_number(&fam, &omega, &xi).unwrap();
        assert!(rep.max_ratio <= cond.max_xi_norm_sq / cond.min_omega_norm_sq + 1e-9);
    }

    #[test]
    fn projection_examples() {
        let dom = Domain::interval(0.0, 2.0).unwrap();
        let one = BasisFamily::trigonometric(1).unwrap();
        let split = projection_split(&FunctionHandle::Identity, &one, &dom).unwrap();
        assert!((split.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((split.residual_norm_sq - 2.0 / 3.0).abs() < 1e-12);

        let cheb = BasisFamily::chebyshev(3);
        let f = FunctionHandle::combination(&[0.5, -1.0, 0.0, 2.0], cheb.members());
        let split = projection_split(&f, &cheb, &dom).unwrap();
        assert!(split.residual_norm_sq.sqrt() < 1e-8);

        // residual is orthogonal to every member
        let f = FunctionHandle::LogSquared;
        let split = projection_split(&f, &cheb, &dom).unwrap();
        let fp = split.parallel(&cheb);
        for m in cheb.members() {
            let ip = dom
                .integrate(|p| Ok((f.eval(p)? - fp.eval(p)?) * m.eval(p)?))
                .unwrap();
            assert!(ip.abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn lemma1_bounded_by_length(a in proptest::collection::vec(1e-3f64..1e3, 1..20)) {
            let r = lemma1_ratio(&a).unwrap();
            prop_assert!(r <= a.len() as f64 + 1e-9);
            prop_assert!(r >= 1.0 - 1e-12);
        }

        #[test]
        fn kappa_invariant_under_reordering(perm_seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let fam = BasisFamily::chebyshev(5);
            let mut members = fam.members().to_vec();
            members.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
            let shuffled = BasisFamily::combination(members).unwrap();
            let omega = Domain::interval(-1.0, 0.5).unwrap();
            let xi = Domain::interval(0.5, 1.0).unwrap();
            let a = condition_number(&fam, &omega, &xi).unwrap().kappa;
            let b = condition_number(&shuffled, &omega, &xi).unwrap().kappa;
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn kappa_scales_with_xi_norms() {
        // Scaling the member attaining M_Ξ by √s while it does not attain m_Ω scales κ by s.
        let omega = Domain::interval(1.0, 2.0).unwrap();
        let xi = Domain::interval(2.0, 3.0).unwrap();
        let base = BasisFamily::combination(vec![
            FunctionHandle::Constant { value: 1.0 },
            FunctionHandle::Identity,
        ])
        .unwrap();
        let k0 = condition_number(&base, &omega, &xi).unwrap();
        let s: f64 = 1.7;
        let scaled = BasisFamily::combination(vec![
            FunctionHandle::Constant { value: 1.0 },
            FunctionHandle::Identity.scaled(s.sqrt()),
        ])
        .unwrap();
        let k1 = condition_number(&scaled, &omega, &xi).unwrap();
        assert_eq!(k0.min_omega_norm_sq, k1.min_omega_norm_sq);
        assert!((k1.kappa - s * k0.kappa).abs() < 1e-12 * k1.kappa);
    }
}
