//! Least-squares baseline: fit coefficients on `Ω` samples, evaluate on `Ξ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bases::{BasisFamily, Point};
use crate::datagen::SampleSet;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsSolution {
    pub coefficients: Vec<f64>,
    /// `‖y − Φα‖₂` over the samples.
    pub residual_norm: f64,
    /// Number of singular values above the cutoff.
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

impl LsSolution {
    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.coefficients.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LsOptions {
    /// Tikhonov parameter; `0` gives the plain minimum-norm solution.
    pub ridge: f64,
}

/// Plain least squares via SVD, minimum-norm on rank deficiency.
pub fn fit_ls(samples: &SampleSet, family: &BasisFamily) -> Result<LsSolution> {
    fit_ls_with(samples, family, LsOptions::default())
}

pub fn fit_ls_with(samples: &SampleSet, family: &BasisFamily, opts: LsOptions) -> Result<LsSolution> {
    let design = family.design_matrix(&samples.points)?;
    fit_design(&design, &samples.values, family.dim(), opts)
}

/// Least squares against a precomputed row-major `N × d` design matrix.
pub fn fit_design(design: &[f64], values: &[f64], d: usize, opts: LsOptions) -> Result<LsSolution> {
    let n = values.len();
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("empty least-squares problem".into()));
    }
    if design.len() != n * d {
        return Err(Error::DimensionMismatch {
            expected: n * d,
            got: design.len(),
        });
    }
    if design.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares data"));
    }
    if !(opts.ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ridge must be nonnegative, got {}",
            opts.ridge
        )));
    }
    let a = DMatrix::from_row_slice(n, d, design);
    let y = DVector::from_column_slice(values);
    let svd = a.clone().svd(true, true);
    let (u, v_t) = match (&svd.u, &svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::InvalidArgument("SVD did not converge".into())),
    };
    let sigma = &svd.singular_values;
    let s_max = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = n.max(d) as f64 * f64::EPSILON * s_max;
    let uty = u.transpose() * &y;
    let mut scaled = DVector::zeros(sigma.len());
    let mut rank = 0;
    for (i, &s) in sigma.iter().enumerate() {
        if s > cutoff {
            rank += 1;
            scaled[i] = uty[i] * s / (s * s + opts.ridge);
        }
    }
    let x = v_t.transpose() * scaled;
    let residual_norm = (&y - &a * &x).norm();
    let mut singular_values: Vec<f64> = sigma.iter().copied().collect();
    singular_values.sort_by(|p, q| q.total_cmp(p));
    Ok(LsSolution {
        coefficients: x.iter().copied().collect(),
        residual_norm,
        rank,
        singular_values,
    })
}

/// The fitted expansion at each point.
pub fn extrapolate_ls(sol: &LsSolution, family: &BasisFamily, points: &[Point]) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|p| family.eval_function(&sol.coefficients, *p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::FunctionHandle;
    use crate::domains::{grid_points, Domain};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn samples_of(family: &BasisFamily, c: &[f64], points: Vec<Point>) -> SampleSet {
        let values = points
            .iter()
            .map(|p| family.eval_function(c, *p).unwrap())
            .collect();
        SampleSet::new(points, values, None).unwrap()
    }

    /// Degree-5 validation functions at SNR 35, full degree-7 fit, 1000
    /// equispaced samples. With 100 samples the error is about 0.86.
    #[test]
    fn noisy_degree5_band() {
        use crate::datagen::{BatchGenerator, GenConfig};
        let fam = BasisFamily::chebyshev(7);
        let omega = Domain::half_open(-1.0, 0.5).unwrap();
        let xi = Domain::interval(0.5, 1.0).unwrap();
        let cfg = GenConfig {
            n_high: 5,
            ..GenConfig::default()
        };
        let gen = BatchGenerator::new(cfg, fam.clone(), grid_points(&omega, 1000).unwrap(), &omega, &xi, 11)
            .unwrap();
        let grid = grid_points(&xi, 1000).unwrap();
        let mut total = 0.0;
        for (set, c) in gen.sample_sets(0, 100).unwrap() {
            let pred = extrapolate_ls(&fit_ls(&set, &fam).unwrap(), &fam, &grid).unwrap();
            let ss: f64 = grid
                .iter()
                .zip(&pred)
                .map(|(p, y)| (fam.eval_function(&c, *p).unwrap() - y).powi(2))
                .sum();
            total += (ss / grid.len() as f64).sqrt();
        }
        let mean = total / 100.0;
        assert!((0.1..=0.6).contains(&mean), "{mean}");
    }

    #[test]
    fn recovers_t2() {
        let fam = BasisFamily::chebyshev(7);
        let omega = Domain::half_open(-1.0, 0.5).unwrap();
        let mut c = vec![0.0; 8];
        c[2] = 1.0;
        let s = samples_of(&fam, &c, grid_points(&omega, 100).unwrap());
        let sol = fit_ls(&s, &fam).unwrap();
        for (got, want) in sol.coefficients.iter().zip(&c) {
            assert!((got - want).abs() < 1e-10);
        }
        assert_eq!(sol.rank, 8);
        let xi = grid_points(&Domain::interval(0.5, 1.0).unwrap(), 50).unwrap();
        let pred = extrapolate_ls(&sol, &fam, &xi).unwrap();
        for (p, x) in pred.iter().zip(&xi) {
            let x = x.line().unwrap();
            assert!((p - (2.0 * x * x - 1.0)).abs() < 1e-9);
        }
        assert!(sol.residual_norm < 1e-10);
    }

    #[test]
    fn collinear_points() {
        let fam = BasisFamily::combination(vec![
            FunctionHandle::Constant { value: 1.0 },
            FunctionHandle::Identity,
        ])
        .unwrap();
        let s = SampleSet::new(
            vec![Point::Line(0.0), Point::Line(1.0), Point::Line(2.0)],
            vec![0.0, 1.0, 2.0],
            None,
        )
        .unwrap();
        let sol = fit_ls(&s, &fam).unwrap();
        assert!(sol.coefficients[0].abs() < 1e-12);
        assert!((sol.coefficients[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_coefficients_extrapolate_to_zero() {
        let fam = BasisFamily::chebyshev(3);
        let sol = LsSolution {
            coefficients: vec![0.0; 4],
            residual_norm: 0.0,
            rank: 4,
            singular_values: vec![],
        };
        let out = extrapolate_ls(&sol, &fam, &[Point::Line(0.7), Point::Line(0.9)]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn rank_deficiency_gives_minimum_norm() {
        // duplicated member: any split of the weight fits, the minimum-norm one
        // halves it
        let fam = BasisFamily::combination(vec![
            FunctionHandle::Identity,
            FunctionHandle::Identity,
        ])
        .unwrap();
        let s = SampleSet::new(
            vec![Point::Line(1.0), Point::Line(2.0)],
            vec![2.0, 4.0],
            None,
        )
        .unwrap();
        let sol = fit_ls(&s, &fam).unwrap();
        assert_eq!(sol.rank, 1);
        assert!(sol.is_rank_deficient());
        assert!((sol.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((sol.coefficients[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_shrinks() {
        let fam = BasisFamily::chebyshev(3);
        let omega = Domain::half_open(-1.0, 0.5).unwrap();
        let s = samples_of(&fam, &[1.0, 2.0, -1.0, 0.5], grid_points(&omega, 40).unwrap());
        let plain = fit_ls(&s, &fam).unwrap();
        let ridge = fit_ls_with(&s, &fam, LsOptions { ridge: 1.0 }).unwrap();
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        assert!(n(&ridge.coefficients) < n(&plain.coefficients));
        assert!(fit_ls_with(&s, &fam, LsOptions { ridge: -1.0 }).is_err());
    }

    #[test]
    fn residual_is_minimal_among_perturbations() {
        let fam = BasisFamily::chebyshev(5);
        let omega = Domain::half_open(-1.0, 0.5).unwrap();
        let points = grid_points(&omega, 60).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let values: Vec<f64> = points.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = SampleSet::new(points.clone(), values.clone(), None).unwrap();
        let sol = fit_ls(&s, &fam).unwrap();
        for _ in 0..100 {
            let c: Vec<f64> = sol
                .coefficients
                .iter()
                .map(|v| v + rng.random_range(-1e-3..1e-3))
                .collect();
            let r: f64 = points
                .iter()
                .zip(&values)
                .map(|(p, y)| (y - fam.eval_function(&c, *p).unwrap()).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(r >= sol.residual_norm - 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn invariant_under_sample_order(seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let fam = BasisFamily::chebyshev(4);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points = grid_points(&Domain::half_open(-1.0, 0.5).unwrap(), 30).unwrap();
            let values: Vec<f64> = points.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut pairs: Vec<(Point, f64)> = points.into_iter().zip(values).collect();
            let a = fit_ls(&SampleSet::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect(), None).unwrap(), &fam).unwrap();
            pairs.shuffle(&mut rng);
            let b = fit_ls(&SampleSet::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect(), None).unwrap(), &fam).unwrap();
            for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn noiseless_in_span_has_tiny_residual(c in proptest::collection::vec(-3.0f64..3.0, 6)) {
            let fam = BasisFamily::chebyshev(5);
            let s = samples_of(&fam, &c, grid_points(&Domain::half_open(-1.0, 0.5).unwrap(), 50).unwrap());
            let scale = s.values.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            prop_assert!(fit_ls(&s, &fam).unwrap().residual_norm <= 1e-10 * scale);
        }
    }
}
