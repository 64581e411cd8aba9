//! Synthetic training and validation functions: random coefficients,
//! norm calibration, monotone projection and noise at a fixed SNR.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bases::{chebyshev_all, BasisFamily, FamilySpec, Point};
use crate::domains::{gram_matrix, grid_points, Domain, GramMatrix};
use crate::error::{Error, Result};

/// Grid size used to locate the derivative minimum in [`project_monotone`].
pub const MONOTONE_GRID: usize = 1000;

/// What `α` calibrates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    /// Euclidean norm of the coefficient vector.
    #[default]
    Coeff,
    /// `L²(Ω)` norm of the expanded function.
    FunctionOmega,
}

impl std::str::FromStr for NormKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coeff" => Ok(NormKind::Coeff),
            "function-omega" => Ok(NormKind::FunctionOmega),
            other => Err(Error::Parse(format!("unknown norm kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub r_m: f64,
    pub r_sigma: f64,
    /// First active index (0-based, inclusive).
    pub n_low: usize,
    /// Last active index (0-based, inclusive).
    pub n_high: usize,
    pub batch_size: usize,
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
    pub monotone: bool,
    pub norm: NormKind,
    /// Draw the top active index uniformly from `[n_low, n_high]` for every
    /// function instead of always activating the full range.
    pub random_degree: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            r_m: 1.0,
            r_sigma: 0.25,
            n_low: 0,
            n_high: 7,
            batch_size: 128,
            snr_db: Some(35.0),
            monotone: false,
            norm: NormKind::Coeff,
            random_degree: false,
        }
    }
}

impl GenConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |key: &str, reason: String| {
            Err(Error::InvalidKey {
                key: key.into(),
                reason,
            })
        };
        if !(self.r_m > 0.0) || !self.r_m.is_finite() {
            return bad("r_m", format!("must be positive, got {}", self.r_m));
        }
        if !(self.r_sigma >= 0.0) || !self.r_sigma.is_finite() {
            return bad("r_sigma", format!("must be nonnegative, got {}", self.r_sigma));
        }
        if self.n_low > self.n_high {
            return bad(
                "n_low",
                format!("{} exceeds n_high = {}", self.n_low, self.n_high),
            );
        }
        if self.n_high >= d {
            return bad(
                "n_high",
                format!("{} is out of range for a family of dimension {d}", self.n_high),
            );
        }
        if self.monotone && self.n_high == 0 {
            return bad("n_high", "monotone generation needs n_high ≥ 1".into());
        }
        if self.monotone && self.n_high + 2 > d {
            return bad(
                "n_high",
                format!("monotone generation needs n_high ≤ d − 2 = {}", d as i64 - 2),
            );
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if let Some(s) = self.snr_db {
            if s.is_nan() {
                return bad("snr_db", "NaN".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub points: Vec<Point>,
    pub values: Vec<f64>,
    pub snr_db: Option<f64>,
}

impl SampleSet {
    pub fn new(points: Vec<Point>, values: Vec<f64>, snr_db: Option<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: values.len(),
            });
        }
        Ok(SampleSet {
            points,
            values,
            snr_db,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// i.i.d. standard normal entries on `[n_low, n_high]`, zero elsewhere.
pub fn sample_coefficients<R: Rng + ?Sized>(cfg: &GenConfig, d: usize, rng: &mut R) -> Result<Vec<f64>> {
    if cfg.n_high >= d || cfg.n_low > cfg.n_high {
        return Err(Error::InvalidKey {
            key: "n_high".into(),
            reason: format!(
                "index range [{}, {}] does not fit dimension {d}",
                cfg.n_low, cfg.n_high
            ),
        });
    }
    let top = if cfg.random_degree {
        // a constant derivative projects to the zero function
        let lowest = if cfg.monotone { cfg.n_low.max(1) } else { cfg.n_low };
        rng.random_range(lowest.min(cfg.n_high)..=cfg.n_high)
    } else {
        cfg.n_high
    };
    let mut c = vec![0.0; d];
    for v in &mut c[cfg.n_low..=top] {
        *v = rng.sample(StandardNormal);
    }
    Ok(c)
}

/// `|a|` with `a ~ N(r_m, r_σ²)`.
pub fn sample_alpha<R: Rng + ?Sized>(cfg: &GenConfig, rng: &mut R) -> Result<f64> {
    let normal = Normal::new(cfg.r_m, cfg.r_sigma)
        .map_err(|e| Error::InvalidArgument(format!("alpha distribution: {e}")))?;
    Ok(normal.sample(rng).abs())
}

/// `c · α / ‖c‖₂`.
pub fn normalize_coefficients(c: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    scale_to(c, norm, alpha)
}

/// `c · α / ‖Σ c_k φ_k‖` with the norm taken from a Gram matrix.
pub fn normalize_function(c: &[f64], gram: &GramMatrix, alpha: f64) -> Result<Vec<f64>> {
    if c.len() != gram.dim() {
        return Err(Error::DimensionMismatch {
            expected: gram.dim(),
            got: c.len(),
        });
    }
    scale_to(c, gram.bilinear(c, c).max(0.0).sqrt(), alpha)
}

fn scale_to(c: &[f64], norm: f64, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "target norm must be positive, got {alpha}"
        )));
    }
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("cannot normalize a zero vector".into()));
    }
    let s = alpha / norm;
    Ok(c.iter().map(|v| v * s).collect())
}

/// Chebyshev coefficients of `∫₀ Σ c_k T_k`, up to the constant (which is 0).
///
/// The output has one more entry than `c`.
pub fn chebyshev_antiderivative(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let at = |k: usize| c.get(k).copied().unwrap_or(0.0);
    let mut b = vec![0.0; n + 1];
    if n == 0 {
        return b;
    }
    b[1] = at(0) - at(2) / 2.0;
    for k in 2..=n {
        b[k] = (at(k - 1) - at(k + 1)) / (2.0 * k as f64);
    }
    b
}

/// Shifts the constant term so the polynomial's minimum over `grid` is zero,
/// then integrates. The result is nondecreasing wherever the shifted
/// polynomial is nonnegative.
pub fn project_monotone_on_grid(c: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let d = c.len();
    if d < 2 || c[d - 1] != 0.0 {
        return Err(Error::Precondition(
            "monotone projection needs the top Chebyshev coefficient free for the degree raise"
                .into(),
        ));
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let mut t = vec![0.0; d];
    let mut eval = |x: f64| {
        chebyshev_all(x, &mut t);
        t.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()
    };
    let values: Vec<f64> = grid.iter().map(|x| eval(*x)).collect();
    let mut min = values.iter().copied().fold(f64::INFINITY, f64::min);
    // A grid minimum can sit up to half a cell away from the true one, which
    // leaves a sliver of negative derivative; polish every local minimum.
    for i in 0..grid.len() {
        let left = values[i.saturating_sub(1)];
        let right = values[(i + 1).min(grid.len() - 1)];
        if values[i] <= left && values[i] <= right {
            let lo = grid[i.saturating_sub(1)];
            let hi = grid[(i + 1).min(grid.len() - 1)];
            min = min.min(golden_min(&mut eval, lo, hi));
        }
    }
    let mut shifted = c[..d - 1].to_vec();
    shifted[0] -= min;
    Ok(chebyshev_antiderivative(&shifted))
}

fn golden_min(f: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    f1.min(f2)
}

/// [`project_monotone_on_grid`] with the minimum searched on a
/// [`MONOTONE_GRID`]-point grid over `dom` (normally `Ω ∪ Ξ`).
pub fn project_monotone(c: &[f64], family: &BasisFamily, dom: &Domain) -> Result<Vec<f64>> {
    if !matches!(family.spec(), FamilySpec::Chebyshev { .. }) {
        return Err(Error::InvalidArgument(
            "monotone projection is defined for Chebyshev families only".into(),
        ));
    }
    if c.len() != family.dim() {
        return Err(Error::DimensionMismatch {
            expected: family.dim(),
            got: c.len(),
        });
    }
    project_monotone_on_grid(c, &line_grid(dom)?)
}

fn line_grid(dom: &Domain) -> Result<Vec<f64>> {
    grid_points(dom, MONOTONE_GRID)?
        .into_iter()
        .map(Point::line)
        .collect()
}

/// `10 log₁₀(‖s‖² / ‖n‖²)`.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    let ps: f64 = signal.iter().map(|v| v * v).sum();
    let pn: f64 = noise.iter().map(|v| v * v).sum();
    10.0 * (ps / pn).log10()
}

/// Adds Gaussian noise rescaled so the realized SNR equals `snr_db` exactly.
/// An infinite `snr_db` returns the values unchanged.
pub fn add_noise<R: Rng + ?Sized>(values: &[f64], snr_db: f64, rng: &mut R) -> Result<Vec<f64>> {
    if snr_db == f64::INFINITY {
        return Ok(values.to_vec());
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid SNR {snr_db}")));
    }
    let ps: f64 = values.iter().map(|v| v * v).sum();
    if !(ps > 0.0) {
        return Err(Error::InvalidArgument("signal has zero power".into()));
    }
    let noise: Vec<f64> = values.iter().map(|_| rng.sample(StandardNormal)).collect();
    let pn: f64 = noise.iter().map(|v| v * v).sum();
    if !(pn > 0.0) {
        return Err(Error::InvalidArgument("drew an all-zero noise vector".into()));
    }
    let scale = (ps / 10f64.powf(snr_db / 10.0) / pn).sqrt();
    Ok(values
        .iter()
        .zip(&noise)
        .map(|(v, e)| v + scale * e)
        .collect())
}

/// Derives an independent 64-bit seed for a labelled purpose.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finalizer over the mixed pair
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The RNG stream owned by pair `index` under `seed`.
pub fn pair_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Repeatedly draws `(Y_Ω, g)` pairs for a fixed family and sample layout.
#[derive(Clone, Debug)]
pub struct BatchGenerator {
    cfg: GenConfig,
    family: BasisFamily,
    points: Vec<Point>,
    /// Row-major `N × d`.
    design: Vec<f64>,
    omega_gram: Option<GramMatrix>,
    monotone_grid: Option<Vec<f64>>,
    seed: u64,
    next_pair: u64,
}

/// Row-major inputs (`count × N`) and coefficient targets (`count × d`).
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub count: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl BatchGenerator {
    /// `omega` is used for the function norm; `omega ∪ xi` for the monotone
    /// minimum search.
    pub fn new(
        cfg: GenConfig,
        family: BasisFamily,
        points: Vec<Point>,
        omega: &Domain,
        xi: &Domain,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate(family.dim())?;
        if points.is_empty() {
            return Err(Error::InvalidArgument("no sample points".into()));
        }
        if let Some(p) = points.iter().find(|p| !omega.contains(**p)) {
            return Err(Error::InvalidArgument(format!(
                "sample point {p:?} lies outside the data domain"
            )));
        }
        if cfg.monotone && !matches!(family.spec(), FamilySpec::Chebyshev { .. }) {
            return Err(Error::InvalidKey {
                key: "monotone".into(),
                reason: "only Chebyshev families support monotone generation".into(),
            });
        }
        let design = family.design_matrix(&points)?;
        let omega_gram = match cfg.norm {
            NormKind::FunctionOmega => Some(gram_matrix(omega, &family)?),
            NormKind::Coeff => None,
        };
        let monotone_grid = if cfg.monotone {
            Some(line_grid(&omega.union(xi)?)?)
        } else {
            None
        };
        Ok(BatchGenerator {
            cfg,
            family,
            points,
            design,
            omega_gram,
            monotone_grid,
            seed,
            next_pair: 0,
        })
    }

    pub fn config(&self) -> &GenConfig {
        &self.cfg
    }

    pub fn family(&self) -> &BasisFamily {
        &self.family
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn input_dim(&self) -> usize {
        self.points.len()
    }

    /// Number of pairs drawn so far.
    pub fn position(&self) -> u64 {
        self.next_pair
    }

    /// Coefficients and noisy sample values for pair `index`. Depends only on
    /// `(seed, index)`.
    pub fn pair(&self, index: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rng = pair_rng(self.seed, index);
        let d = self.family.dim();
        let raw = sample_coefficients(&self.cfg, d, &mut rng)?;
        let alpha = sample_alpha(&self.cfg, &mut rng)?;
        let mut coeffs = match &self.omega_gram {
            Some(g) => normalize_function(&raw, g, alpha)?,
            None => normalize_coefficients(&raw, alpha)?,
        };
        if let Some(grid) = &self.monotone_grid {
            coeffs = project_monotone_on_grid(&coeffs, grid)?;
        }
        let clean: Vec<f64> = self
            .design
            .chunks_exact(d)
            .map(|row| row.iter().zip(&coeffs).map(|(a, b)| a * b).sum())
            .collect();
        let values = match self.cfg.snr_db {
            Some(s) => add_noise(&clean, s, &mut rng)?,
            None => clean,
        };
        Ok((coeffs, values))
    }

    /// The next `batch_size` pairs.
    pub fn next_batch(&mut self) -> Result<Batch> {
        let n = self.cfg.batch_size;
        let batch = self.batch_at(self.next_pair, n)?;
        self.next_pair += n as u64;
        Ok(batch)
    }

    /// `count` pairs starting at `first`, without advancing.
    pub fn batch_at(&self, first: u64, count: usize) -> Result<Batch> {
        let mut inputs = Vec::with_capacity(count * self.input_dim());
        let mut targets = Vec::with_capacity(count * self.family.dim());
        for i in 0..count as u64 {
            let (c, y) = self.pair(first + i)?;
            inputs.extend_from_slice(&y);
            targets.extend_from_slice(&c);
        }
        Ok(Batch {
            count,
            inputs,
            targets,
        })
    }

    /// Pairs `[first, first + count)` as sample sets.
    pub fn sample_sets(&self, first: u64, count: usize) -> Result<Vec<(SampleSet, Vec<f64>)>> {
        (first..first + count as u64)
            .map(|i| {
                let (c, y) = self.pair(i)?;
                Ok((SampleSet::new(self.points.clone(), y, self.cfg.snr_db)?, c))
            })
            .collect()
    }
}

/// One batch of `cfg.batch_size` pairs. The pair streams are keyed by a seed
/// drawn from `rng`, so the result is reproducible from `rng`'s state.
pub fn make_batch<R: Rng + ?Sized>(
    cfg: &GenConfig,
    family: &BasisFamily,
    sample_points: &[Point],
    omega: &Domain,
    xi: &Domain,
    rng: &mut R,
) -> Result<Vec<(SampleSet, Vec<f64>)>> {
    let gen = BatchGenerator::new(
        cfg.clone(),
        family.clone(),
        sample_points.to_vec(),
        omega,
        xi,
        rng.next_u64(),
    )?;
    gen.sample_sets(0, cfg.batch_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::chebyshev_t;
    use proptest::prelude::*;

    fn omega() -> Domain {
        Domain::half_open(-1.0, 0.5).unwrap()
    }
    fn xi() -> Domain {
        Domain::interval(0.5, 1.0).unwrap()
    }
    fn points(n: usize) -> Vec<Point> {
        grid_points(&omega(), n).unwrap()
    }

    #[test]
    fn coefficient_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = GenConfig {
            n_low: 3,
            n_high: 3,
            ..GenConfig::default()
        };
        let c = sample_coefficients(&cfg, 8, &mut rng).unwrap();
        assert!(c.iter().enumerate().all(|(i, v)| (i == 3) == (*v != 0.0)));

        let full = sample_coefficients(&GenConfig::default(), 8, &mut rng).unwrap();
        assert!(full.iter().all(|v| *v != 0.0));

        let again = sample_coefficients(&GenConfig::default(), 8, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        let twice = sample_coefficients(&GenConfig::default(), 8, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        assert_eq!(again, twice);

        assert!(sample_coefficients(&GenConfig::default(), 7, &mut rng).is_err());
    }

    #[test]
    fn random_degree_support_is_a_prefix() {
        let cfg = GenConfig {
            n_low: 1,
            n_high: 6,
            random_degree: true,
            ..GenConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tops = [0usize; 8];
        for _ in 0..600 {
            let c = sample_coefficients(&cfg, 8, &mut rng).unwrap();
            assert_eq!(c[0], 0.0);
            assert_eq!(c[7], 0.0);
            let top = (0..8).rev().find(|i| c[*i] != 0.0).unwrap();
            assert!(c[1..=top].iter().all(|v| *v != 0.0));
            tops[top] += 1;
        }
        assert!(tops[1..=6].iter().all(|n| *n > 50));
    }

    #[test]
    fn normalize_examples() {
        let c = normalize_coefficients(&[3.0, 4.0], 1.0).unwrap();
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
        let same = normalize_coefficients(&[0.6, 0.8], 1.0).unwrap();
        assert!((same[0] - 0.6).abs() < 1e-12 && (same[1] - 0.8).abs() < 1e-12);
        assert!(normalize_coefficients(&[0.0, 0.0], 1.0).is_err());
        assert!(normalize_coefficients(&[1.0], 0.0).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = GenConfig {
            r_m: 0.1,
            r_sigma: 1.0,
            ..GenConfig::default()
        };
        assert!((0..1000).all(|_| sample_alpha(&cfg, &mut rng).unwrap() >= 0.0));
    }

    #[test]
    fn function_norm_normalization() {
        let fam = BasisFamily::chebyshev(3);
        let g = gram_matrix(&omega(), &fam).unwrap();
        let c = normalize_function(&[0.3, -1.0, 0.2, 0.5], &g, 2.0).unwrap();
        let norm = omega()
            .integrate(|p| Ok(fam.eval_function(&c, p)?.powi(2)))
            .unwrap()
            .sqrt();
        assert!((norm - 2.0).abs() < 1e-12);
    }

    #[test]
    fn antiderivative_matches_closed_forms() {
        // ∫ T_0 = T_1, ∫ T_1 = T_2/4 + const
        assert_eq!(chebyshev_antiderivative(&[1.0]), vec![0.0, 1.0]);
        let b = chebyshev_antiderivative(&[0.0, 1.0, 0.0]);
        assert_eq!(b, vec![0.0, 0.0, 0.25, 0.0]);
        // derivative of the antiderivative reproduces the input
        let c = [0.3, -0.7, 1.1, 0.4, -0.2];
        let b = chebyshev_antiderivative(&c);
        let h = 1e-5;
        for &x in &[-0.9, -0.3, 0.2, 0.8] {
            let g = |x: f64| (0..b.len()).map(|k| b[k] * chebyshev_t(k, x)).sum::<f64>();
            let p: f64 = (0..c.len()).map(|k| c[k] * chebyshev_t(k, x)).sum();
            assert!(((g(x + h) - g(x - h)) / (2.0 * h) - p).abs() < 1e-8);
        }
    }

    #[test]
    fn monotone_examples() {
        let fam = BasisFamily::chebyshev(3);
        let whole = Domain::interval(-1.0, 1.0).unwrap();
        // p(x) = x, shifted to x + 1, integrates to x²/2 + x
        let g = project_monotone(&[0.0, 1.0, 0.0, 0.0], &fam, &whole).unwrap();
        for &x in &[-1.0, -0.25, 0.5, 1.0] {
            let got = fam.eval_function(&g, Point::Line(x)).unwrap()
                - fam.eval_function(&g, Point::Line(0.0)).unwrap();
            assert!((got - (x * x / 2.0 + x)).abs() < 1e-12, "x = {x}");
        }
        // constant derivative collapses to a constant
        let g = project_monotone(&[1.0, 0.0, 0.0, 0.0], &fam, &whole).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        // degree raise needs room
        assert!(project_monotone(&[0.0, 0.0, 0.0, 1.0], &fam, &whole).is_err());
        assert!(project_monotone(&[1.0, 0.0], &BasisFamily::trigonometric(2).unwrap(), &whole)
            .is_err());
    }

    #[test]
    fn snr_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).sin() + 0.2).collect();
        for &s in &[20.0, 35.0, 50.0] {
            let noisy = add_noise(&y, s, &mut rng).unwrap();
            let noise: Vec<f64> = noisy.iter().zip(&y).map(|(a, b)| a - b).collect();
            assert!((snr_db(&y, &noise) - s).abs() < 1e-9);
        }
        assert_eq!(add_noise(&y, f64::INFINITY, &mut rng).unwrap(), y);
        assert!(add_noise(&[0.0; 4], 35.0, &mut rng).is_err());
    }

    #[test]
    fn batches_are_deterministic_and_pairwise_independent() {
        let fam = BasisFamily::chebyshev(7);
        let cfg = GenConfig {
            batch_size: 4,
            ..GenConfig::default()
        };
        let mut a = BatchGenerator::new(cfg.clone(), fam.clone(), points(100), &omega(), &xi(), 7)
            .unwrap();
        let b = BatchGenerator::new(cfg.clone(), fam.clone(), points(100), &omega(), &xi(), 7)
            .unwrap();
        let first = a.next_batch().unwrap();
        let second = a.next_batch().unwrap();
        assert_eq!(first, b.batch_at(0, 4).unwrap());
        assert_eq!(second, b.batch_at(4, 4).unwrap());
        // pair 5 alone equals its slot inside a batch
        let (c5, y5) = b.pair(5).unwrap();
        assert_eq!(&second.targets[8..16], &c5[..]);
        assert_eq!(&second.inputs[100..200], &y5[..]);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let one = make_batch(
            &GenConfig {
                batch_size: 1,
                ..cfg.clone()
            },
            &fam,
            &points(10),
            &omega(),
            &xi(),
            &mut rng,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let again = make_batch(
            &GenConfig {
                batch_size: 1,
                ..cfg
            },
            &fam,
            &points(10),
            &omega(),
            &xi(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(one, again);
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn mean_norm_close_to_r_m() {
        let fam = BasisFamily::chebyshev(7);
        let gen = BatchGenerator::new(
            GenConfig::default(),
            fam,
            points(100),
            &omega(),
            &xi(),
            11,
        )
        .unwrap();
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|i| {
                let (c, _) = gen.pair(i).unwrap();
                c.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn monotone_batches_pass_grid_oracle() {
        let fam = BasisFamily::chebyshev(7);
        let cfg = GenConfig {
            n_high: 6,
            monotone: true,
            ..GenConfig::default()
        };
        let gen = BatchGenerator::new(cfg, fam.clone(), points(100), &omega(), &xi(), 2).unwrap();
        let grid: Vec<f64> = (0..1000).map(|i| -1.0 + 2.0 * i as f64 / 999.0).collect();
        for i in 0..200 {
            let (c, _) = gen.pair(i).unwrap();
            let vals: Vec<f64> = grid
                .iter()
                .map(|x| fam.eval_function(&c, Point::Line(*x)).unwrap())
                .collect();
            assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-9), "pair {i}");
        }
    }

    #[test]
    fn invalid_configs() {
        let fam = BasisFamily::chebyshev(7);
        let monotone_full = GenConfig {
            monotone: true,
            ..GenConfig::default()
        };
        assert!(matches!(
            BatchGenerator::new(monotone_full, fam.clone(), points(10), &omega(), &xi(), 0),
            Err(Error::InvalidKey { .. })
        ));
        let outside = vec![Point::Line(0.7)];
        assert!(
            BatchGenerator::new(GenConfig::default(), fam, outside, &omega(), &xi(), 0).is_err()
        );
        assert!("coeff".parse::<NormKind>().is_ok());
        assert!("l1".parse::<NormKind>().is_err());
    }

    proptest! {
        #[test]
        fn normalization_hits_alpha(c in proptest::collection::vec(-5.0f64..5.0, 1..10), alpha in 0.01f64..10.0) {
            prop_assume!(c.iter().any(|v| v.abs() > 1e-3));
            let n = normalize_coefficients(&c, alpha).unwrap();
            let norm = n.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - alpha).abs() <= 1e-12 * alpha.max(1.0));
        }

        #[test]
        fn projected_polynomials_are_monotone(c in proptest::collection::vec(-2.0f64..2.0, 7)) {
            let mut c = c;
            c.push(0.0);
            let grid: Vec<f64> = (0..1000).map(|i| -1.0 + 2.0 * i as f64 / 999.0).collect();
            let g = project_monotone_on_grid(&c, &grid).unwrap();
            let vals: Vec<f64> = grid
                .iter()
                .map(|x| (0..g.len()).map(|k| g[k] * chebyshev_t(k, *x)).sum::<f64>())
                .collect();
            prop_assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        }
    }
}
