//! `Ξ`-weighted coefficient loss and the monotonicity penalty.

use crate::bases::{BasisFamily, Point};
use crate::domains::GramMatrix;
use crate::error::{Error, Result};

/// `ΔᵀGΔ` with `Δ = pred − truth`, and its gradient `2GΔ` w.r.t. `pred`.
pub fn loss_core(pred: &[f64], truth: &[f64], gram_xi: &GramMatrix) -> Result<(f64, Vec<f64>)> {
    let d = gram_xi.dim();
    if pred.len() != d || truth.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if pred.len() != d { pred.len() } else { truth.len() },
        });
    }
    let delta: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| p - t).collect();
    let g_delta = gram_xi.apply(&delta);
    let value = delta.iter().zip(&g_delta).map(|(a, b)| a * b).sum();
    Ok((value, g_delta.into_iter().map(|v| 2.0 * v).collect()))
}

/// Penalizes a predicted function that decreases between probe points.
///
/// With two points this is `relu(ĝ(x_start) − ĝ(x_end))`; with a grid it sums
/// the same term over consecutive pairs. Basis values at the probes are
/// cached, so the penalty and its gradient are linear-algebra only.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotonePenalty {
    /// Row `i` holds `φ(x_i)`.
    basis_at: Vec<Vec<f64>>,
}

impl MonotonePenalty {
    /// `points` must be increasing and lie in `Ξ`; the caller checks membership.
    pub fn new(family: &BasisFamily, points: &[Point]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(
                "monotone penalty needs at least two probe points".into(),
            ));
        }
        let mut basis_at = Vec::with_capacity(points.len());
        for p in points {
            let mut row = vec![0.0; family.dim()];
            family.eval_all(*p, &mut row)?;
            basis_at.push(row);
        }
        Ok(MonotonePenalty { basis_at })
    }

    pub fn probes(&self) -> usize {
        self.basis_at.len()
    }

    /// Value and gradient w.r.t. the predicted coefficients. The subgradient
    /// at the kink is zero.
    pub fn eval(&self, pred: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = self.basis_at[0].len();
        if pred.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: pred.len(),
            });
        }
        let g: Vec<f64> = self
            .basis_at
            .iter()
            .map(|row| row.iter().zip(pred).map(|(a, b)| a * b).sum())
            .collect();
        let mut value = 0.0;
        let mut grad = vec![0.0; d];
        for i in 0..g.len() - 1 {
            let drop = g[i] - g[i + 1];
            if drop > 0.0 {
                value += drop;
                for (k, gk) in grad.iter_mut().enumerate() {
                    *gk += self.basis_at[i][k] - self.basis_at[i + 1][k];
                }
            }
        }
        Ok((value, grad))
    }
}

/// `relu(ĝ(x_start) − ĝ(x_end))` for the expansion of `pred`.
pub fn loss_ext_monotone(
    pred: &[f64],
    family: &BasisFamily,
    x_start: Point,
    x_end: Point,
) -> Result<(f64, Vec<f64>)> {
    MonotonePenalty::new(family, &[x_start, x_end])?.eval(pred)
}

/// Weights of the two loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub core: f64,
    pub ext: f64,
}

/// Batch mean of `λ_core·L_core + λ_ext·L_ext` and its gradient w.r.t. the
/// row-major predictions (`batch × d`).
pub fn total_loss(
    pred: &[f64],
    truth: &[f64],
    batch: usize,
    gram_xi: &GramMatrix,
    penalty: Option<&MonotonePenalty>,
    weights: LossWeights,
) -> Result<(f64, Vec<f64>)> {
    let d = gram_xi.dim();
    if batch == 0 || pred.len() != batch * d || truth.len() != batch * d {
        return Err(Error::DimensionMismatch {
            expected: batch * d,
            got: pred.len(),
        });
    }
    let inv = 1.0 / batch as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for ((p, t), g) in pred
        .chunks_exact(d)
        .zip(truth.chunks_exact(d))
        .zip(grad.chunks_exact_mut(d))
    {
        let (v, dg) = loss_core(p, t, gram_xi)?;
        value += weights.core * v;
        for (gi, di) in g.iter_mut().zip(&dg) {
            *gi += weights.core * inv * di;
        }
        if let (Some(pen), true) = (penalty, weights.ext != 0.0) {
            let (v, dg) = pen.eval(p)?;
            value += weights.ext * v;
            for (gi, di) in g.iter_mut().zip(&dg) {
                *gi += weights.ext * inv * di;
            }
        }
    }
    Ok((value * inv, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::error_quadratic;
    use crate::domains::{gram_matrix, Domain};
    use nalgebra::DMatrix;

    #[test]
    fn core_examples() {
        let g = GramMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0])).unwrap();
        let (v, dg) = loss_core(&[1.0, -1.0], &[0.0, 0.0], &g).unwrap();
        assert_eq!(v, 3.0);
        assert_eq!(dg, vec![2.0, -4.0]);
        let (v, dg) = loss_core(&[0.3, 0.4], &[0.3, 0.4], &g).unwrap();
        assert_eq!(v, 0.0);
        assert!(dg.iter().all(|x| *x == 0.0));
        let (v, _) = loss_core(&[1.0, 2.0], &[0.0, 0.0], &GramMatrix::identity(2)).unwrap();
        assert_eq!(v, 5.0);
        assert!(loss_core(&[1.0], &[1.0, 2.0], &g).is_err());
    }

    #[test]
    fn core_matches_quadrature() {
        let fam = BasisFamily::chebyshev(5);
        let xi = Domain::interval(0.5, 1.0).unwrap();
        let g = gram_matrix(&xi, &fam).unwrap();
        let pred = [0.2, -0.4, 1.0, 0.0, 0.3, -0.1];
        let truth = [0.0, 0.1, 0.9, 0.2, -0.3, 0.0];
        let (v, _) = loss_core(&pred, &truth, &g).unwrap();
        let brute = xi
            .integrate(|p| {
                Ok((fam.eval_function(&pred, p)? - fam.eval_function(&truth, p)?).powi(2))
            })
            .unwrap();
        assert!((v - brute).abs() < 1e-8 * brute);
        let delta: Vec<f64> = pred.iter().zip(&truth).map(|(a, b)| a - b).collect();
        assert!((v - error_quadratic(&delta, &g).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn monotone_penalty_examples() {
        let fam = BasisFamily::chebyshev(1);
        let (a, b) = (Point::Line(0.5), Point::Line(1.0));
        // ĝ = x, increasing
        assert_eq!(loss_ext_monotone(&[0.0, 1.0], &fam, a, b).unwrap().0, 0.0);
        // ĝ = −0.6x drops by 0.3 between the probes
        let (v, g) = loss_ext_monotone(&[0.0, -0.6], &fam, a, b).unwrap();
        assert!((v - 0.3).abs() < 1e-15);
        assert_eq!(g, vec![0.0, -0.5]);
    }

    #[test]
    fn grid_penalty_zero_iff_monotone() {
        let fam = BasisFamily::chebyshev(2);
        let grid: Vec<Point> = (0..50).map(|i| Point::Line(0.5 + 0.5 * i as f64 / 49.0)).collect();
        let pen = MonotonePenalty::new(&fam, &grid).unwrap();
        // 2x² − 1 increases on [0.5, 1]
        assert_eq!(pen.eval(&[0.0, 0.0, 1.0]).unwrap().0, 0.0);
        // −2x² + 1.6x peaks at 0.8
        assert!(pen.eval(&[-1.0, 1.6, -1.0]).unwrap().0 > 0.0);
    }

    #[test]
    fn total_loss_combines_terms() {
        let g = GramMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0])).unwrap();
        let fam = BasisFamily::chebyshev(1);
        let pen = MonotonePenalty::new(&fam, &[Point::Line(0.5), Point::Line(1.0)]).unwrap();
        let pred = [1.0, -0.6];
        let truth = [0.0, 0.4];
        // Δ = (1, −1) → core 3; penalty 0.3
        let w = LossWeights { core: 1.0, ext: 2.0 };
        let (v, _) = total_loss(&pred, &truth, 1, &g, Some(&pen), w).unwrap();
        assert!((v - 3.6).abs() < 1e-14);
        let (v, _) = total_loss(&pred, &truth, 1, &g, Some(&pen), LossWeights { core: 1.0, ext: 0.0 }).unwrap();
        assert_eq!(v, 3.0);
        let (v, dg) = total_loss(&truth, &truth, 1, &g, None, w).unwrap();
        assert_eq!(v, 0.0);
        assert!(dg.iter().all(|x| *x == 0.0));
    }
}
