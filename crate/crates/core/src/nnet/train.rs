//! Training loop, inference and finite-difference gradient checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{total_loss, LossWeights, MonotonePenalty};
use super::mlp::{Activation, LayerDef, Mlp};
use crate::bases::{BasisFamily, Point};
use crate::datagen::{derive_seed, BatchGenerator, GenConfig, SampleSet};
use crate::domains::{gram_matrix, grid_points, Domain, GramMatrix, Region};
use crate::error::{Error, Result};

const INIT_STREAM: u64 = 1;
const DATA_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from the base rate to zero over `max_steps`.
    Cosine,
}

/// Where the monotonicity penalty probes the prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ExtProbe {
    /// Start and end of `Ξ`.
    Endpoints,
    /// Equispaced grid over `Ξ`.
    Grid { points: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub snake_beta: f64,
    pub learn_beta: bool,
    pub lambda_core: f64,
    pub lambda_ext: f64,
    pub ext_probe: ExtProbe,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub adam: AdamConfig,
    pub max_steps: usize,
    /// Moving-average window for the convergence test.
    pub window: usize,
    /// Relative improvement of the windowed loss that counts as progress.
    pub tolerance: f64,
    /// Consecutive windows without progress before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![256, 256],
            activation: Activation::Relu,
            snake_beta: 1.0,
            learn_beta: true,
            lambda_core: 1.0,
            lambda_ext: 0.0,
            ext_probe: ExtProbe::Endpoints,
            learning_rate: 1e-3,
            lr_schedule: LrSchedule::Cosine,
            adam: AdamConfig::default(),
            max_steps: 20_000,
            window: 200,
            tolerance: 1e-5,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| {
            Err(Error::InvalidKey {
                key: key.into(),
                reason: reason.into(),
            })
        };
        if !(self.lambda_core > 0.0) {
            return bad("lambda_core", "must be positive");
        }
        if !(self.lambda_ext >= 0.0) {
            return bad("lambda_ext", "must be nonnegative");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", "must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden", "layer widths must be positive");
        }
        if self.activation == Activation::Identity && !self.hidden.is_empty() {
            return bad("activation", "hidden layers need a nonlinearity");
        }
        if self.max_steps == 0 || self.window == 0 {
            return bad("max_steps", "max_steps and window must be positive");
        }
        if let ExtProbe::Grid { points } = self.ext_probe {
            if points < 2 {
                return bad("ext_probe", "grid needs at least two points");
            }
        }
        Ok(())
    }

    pub fn layer_defs(&self, outputs: usize) -> Vec<LayerDef> {
        self.hidden
            .iter()
            .map(|&w| LayerDef {
                outputs: w,
                activation: self.activation,
                beta: self.snake_beta,
                learn_beta: self.learn_beta,
            })
            .chain(std::iter::once(LayerDef {
                outputs,
                activation: Activation::Identity,
                beta: 1.0,
                learn_beta: false,
            }))
            .collect()
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let t = step as f64 / self.max_steps as f64;
                // keep the last step strictly positive
                (0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos()))
                    .max(self.learning_rate * 1e-4)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Batch loss at every step.
    pub losses: Vec<f64>,
    pub steps: usize,
    /// `true` if the moving-average test stopped training before the cap.
    pub converged: bool,
}

impl TrainLog {
    pub fn final_window_mean(&self, window: usize) -> f64 {
        let n = self.losses.len();
        let tail = &self.losses[n.saturating_sub(window)..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Windowed moving-average convergence test.
#[derive(Clone, Debug)]
struct Convergence {
    window: usize,
    tolerance: f64,
    patience: usize,
    acc: f64,
    filled: usize,
    best: f64,
    stale: usize,
}

impl Convergence {
    fn new(cfg: &TrainConfig) -> Self {
        Convergence {
            window: cfg.window,
            tolerance: cfg.tolerance,
            patience: cfg.patience,
            acc: 0.0,
            filled: 0,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Feeds one loss; returns `true` once training should stop.
    fn push(&mut self, loss: f64) -> bool {
        self.acc += loss;
        self.filled += 1;
        if self.filled < self.window {
            return false;
        }
        let mean = self.acc / self.window as f64;
        self.acc = 0.0;
        self.filled = 0;
        if mean < self.best * (1.0 - self.tolerance) {
            self.best = mean;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.patience > 0 && self.stale >= self.patience
    }
}

/// Everything needed to train one network.
pub struct TrainSetup {
    pub generator: BatchGenerator,
    pub gram_xi: GramMatrix,
    pub penalty: Option<MonotonePenalty>,
}

impl TrainSetup {
    pub fn new(
        gen_cfg: &GenConfig,
        train_cfg: &TrainConfig,
        family: &BasisFamily,
        omega: &Domain,
        xi: &Domain,
        sample_points: &[Point],
        seed: u64,
    ) -> Result<Self> {
        train_cfg.validate()?;
        let generator = BatchGenerator::new(
            gen_cfg.clone(),
            family.clone(),
            sample_points.to_vec(),
            omega,
            xi,
            derive_seed(seed, DATA_STREAM),
        )?;
        let gram_xi = gram_matrix(xi, family)?;
        let penalty = if train_cfg.lambda_ext > 0.0 {
            Some(MonotonePenalty::new(family, &probe_points(xi, train_cfg.ext_probe)?)?)
        } else {
            None
        };
        Ok(TrainSetup {
            generator,
            gram_xi,
            penalty,
        })
    }
}

/// Probe points of the monotone penalty inside `Ξ`.
pub fn probe_points(xi: &Domain, probe: ExtProbe) -> Result<Vec<Point>> {
    match probe {
        ExtProbe::Grid { points } => grid_points(xi, points),
        ExtProbe::Endpoints => match xi.region() {
            Region::IntervalUnion { segments } => {
                let first = segments.first().unwrap();
                let last = segments.last().unwrap();
                // stay inside Ξ when its right end is open
                let end = if last.closed_end {
                    last.end
                } else {
                    last.end - 1e-9 * (last.end - last.start)
                };
                Ok(vec![Point::Line(first.start), Point::Line(end)])
            }
            Region::SphereBand { .. } => Err(Error::InvalidArgument(
                "the monotone penalty needs an interval extrapolation domain".into(),
            )),
        },
    }
}

/// Trains a network per the configs; the seed fixes both initialization and
/// the training data stream.
pub fn train(
    gen_cfg: &GenConfig,
    train_cfg: &TrainConfig,
    family: &BasisFamily,
    omega: &Domain,
    xi: &Domain,
    sample_points: &[Point],
    seed: u64,
) -> Result<(Mlp, TrainLog)> {
    let mut setup = TrainSetup::new(gen_cfg, train_cfg, family, omega, xi, sample_points, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, INIT_STREAM));
    let net = Mlp::init_uniform(
        sample_points.len(),
        &train_cfg.layer_defs(family.dim()),
        &mut rng,
    )?;
    train_from(net, &mut setup, train_cfg)
}

/// Continues training `net` on `setup`'s data stream.
pub fn train_from(mut net: Mlp, setup: &mut TrainSetup, cfg: &TrainConfig) -> Result<(Mlp, TrainLog)> {
    cfg.validate()?;
    if net.input_dim() != setup.generator.input_dim() || net.output_dim() != setup.gram_xi.dim() {
        return Err(Error::DimensionMismatch {
            expected: setup.generator.input_dim(),
            got: net.input_dim(),
        });
    }
    let weights = LossWeights {
        core: cfg.lambda_core,
        ext: cfg.lambda_ext,
    };
    let mask = net.trainable_mask();
    let mut adam = AdamState::new(cfg.adam, net.params().len());
    let mut conv = Convergence::new(cfg);
    let mut losses = Vec::with_capacity(cfg.max_steps);
    let mut converged = false;
    for step in 0..cfg.max_steps {
        let batch = setup.generator.next_batch()?;
        let (pred, cache) = match net.forward(&batch.inputs, batch.count) {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => {
                return Err(Error::Diverged {
                    step,
                    loss: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        };
        let (loss, grad_out) = total_loss(
            &pred,
            &batch.targets,
            batch.count,
            &setup.gram_xi,
            setup.penalty.as_ref(),
            weights,
        )?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        let grads = net.backward(&cache, &grad_out)?;
        adam_step(net.params_mut(), &grads, &mut adam, cfg.lr_at(step), Some(&mask))?;
        losses.push(loss);
        if conv.push(loss) {
            converged = true;
            break;
        }
    }
    let steps = losses.len();
    Ok((
        net,
        TrainLog {
            losses,
            steps,
            converged,
        },
    ))
}

/// Coefficients predicted for each row of `inputs` (row-major `batch × N`).
pub fn predict_coefficients(net: &Mlp, inputs: &[f64], batch: usize) -> Result<Vec<f64>> {
    Ok(net.forward(inputs, batch)?.0)
}

/// Predicted function values at `eval_points`.
pub fn predict_extrapolation(
    net: &Mlp,
    samples: &SampleSet,
    family: &BasisFamily,
    eval_points: &[Point],
) -> Result<Vec<f64>> {
    if samples.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: samples.len(),
        });
    }
    if family.dim() != net.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.output_dim(),
            got: family.dim(),
        });
    }
    let coeffs = predict_coefficients(net, &samples.values, 1)?;
    eval_points
        .iter()
        .map(|p| family.eval_function(&coeffs, *p))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub worst_param: usize,
    pub params_checked: usize,
}

/// Compares backpropagated gradients of [`total_loss`] with central
/// differences of step `eps`, over every trainable parameter.
#[allow(clippy::too_many_arguments)]
pub fn gradcheck(
    net: &Mlp,
    inputs: &[f64],
    targets: &[f64],
    batch: usize,
    gram_xi: &GramMatrix,
    penalty: Option<&MonotonePenalty>,
    weights: LossWeights,
    eps: f64,
) -> Result<GradcheckReport> {
    let loss_of = |n: &Mlp| -> Result<f64> {
        let (pred, _) = n.forward(inputs, batch)?;
        Ok(total_loss(&pred, targets, batch, gram_xi, penalty, weights)?.0)
    };
    let (pred, cache) = net.forward(inputs, batch)?;
    let (_, grad_out) = total_loss(&pred, targets, batch, gram_xi, penalty, weights)?;
    let analytic = net.backward(&cache, &grad_out)?;
    let mask = net.trainable_mask();
    let mut probe = net.clone();
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst_param: 0,
        params_checked: 0,
    };
    for i in 0..net.params().len() {
        if !mask[i] {
            continue;
        }
        let orig = net.params()[i];
        probe.params_mut()[i] = orig + eps;
        let up = loss_of(&probe)?;
        probe.params_mut()[i] = orig - eps;
        let down = loss_of(&probe)?;
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(1e-7);
        let rel = (a - numeric).abs() / denom;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_param = i;
        }
        report.params_checked += 1;
    }
    Ok(report)
}

/// Gradient check of a random net with two hidden layers (7 and 6 wide) on
/// a batch of 4, with the monotone penalty switched on so every loss term is
/// exercised.
pub fn gradcheck_random(activation: Activation, seed: u64) -> Result<GradcheckReport> {
    let fam = BasisFamily::chebyshev(2);
    let xi = Domain::interval(0.5, 1.0)?;
    let gram = gram_matrix(&xi, &fam)?;
    let penalty = MonotonePenalty::new(&fam, &probe_points(&xi, ExtProbe::Endpoints)?)?;
    let cfg = TrainConfig {
        hidden: vec![7, 6],
        activation,
        snake_beta: 1.3,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::init_uniform(5, &cfg.layer_defs(fam.dim()), &mut rng)?;
    let x: Vec<f64> = (0..4 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t: Vec<f64> = (0..4 * fam.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    gradcheck(
        &net,
        &x,
        &t,
        4,
        &gram,
        Some(&penalty),
        LossWeights { core: 1.0, ext: 0.5 },
        1e-6,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::FunctionHandle;

    fn check(act: Activation) -> f64 {
        (0..3)
            .map(|seed| gradcheck_random(act, seed).unwrap().max_rel_error)
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for act in [Activation::Relu, Activation::Tanh, Activation::Snake] {
            let e = check(act);
            assert!(e < 1e-4, "{act}: {e}");
        }
    }

    #[test]
    fn frozen_beta_has_zero_gradient() {
        let cfg = TrainConfig {
            hidden: vec![4],
            activation: Activation::Snake,
            learn_beta: false,
            ..TrainConfig::default()
        };
        let net = Mlp::init_uniform(2, &cfg.layer_defs(1), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let (_, cache) = net.forward(&[0.3, -0.8], 1).unwrap();
        let g = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g[net.layers()[0].beta_offset.unwrap()], 0.0);
        assert!(!net.trainable_mask()[net.layers()[0].beta_offset.unwrap()]);
    }

    #[test]
    fn cosine_schedule_decays() {
        let cfg = TrainConfig {
            max_steps: 100,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.lr_at(0), 1e-3);
        assert!((cfg.lr_at(50) - 5e-4).abs() < 1e-12);
        assert!(cfg.lr_at(99) > 0.0 && cfg.lr_at(99) < 1e-5);
    }

    #[test]
    fn convergence_rule() {
        let cfg = TrainConfig {
            window: 2,
            patience: 2,
            ..TrainConfig::default()
        };
        let mut c = Convergence::new(&cfg);
        // windows: 2.0, 1.0, 1.0, 1.0 → stops after two stale windows
        let seq = [2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let stops: Vec<bool> = seq.iter().map(|l| c.push(*l)).collect();
        assert_eq!(stops, vec![false, false, false, false, false, false, false, true]);
    }

    #[test]
    fn one_member_sanity() {
        // d = 1, N = 4, noiseless: the map is linear in the sample values
        let fam = BasisFamily::combination(vec![FunctionHandle::Identity]).unwrap();
        let omega = Domain::half_open(0.0, 1.0).unwrap();
        let xi = Domain::interval(1.0, 2.0).unwrap();
        let points = grid_points(&omega, 4).unwrap();
        let gen_cfg = GenConfig {
            n_low: 0,
            n_high: 0,
            batch_size: 32,
            snr_db: None,
            ..GenConfig::default()
        };
        let train_cfg = TrainConfig {
            hidden: vec![16],
            max_steps: 1500,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let (net, log) = train(&gen_cfg, &train_cfg, &fam, &omega, &xi, &points, 3).unwrap();
        assert_eq!(log.steps, log.losses.len());
        let setup = TrainSetup::new(&gen_cfg, &train_cfg, &fam, &omega, &xi, &points, 99).unwrap();
        let val = setup.generator.batch_at(0, 100).unwrap();
        let pred = predict_coefficients(&net, &val.inputs, 100).unwrap();
        let rmse = (pred
            .iter()
            .zip(&val.targets)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / 100.0)
            .sqrt();
        assert!(rmse < 0.05, "coefficient rmse {rmse}");

        let again = train(&gen_cfg, &train_cfg, &fam, &omega, &xi, &points, 3).unwrap().0;
        assert_eq!(again.params(), net.params());
    }

    #[test]
    fn prediction_checks_shapes() {
        let fam = BasisFamily::chebyshev(2);
        let net = Mlp::zeros(
            4,
            &TrainConfig {
                hidden: vec![3],
                ..TrainConfig::default()
            }
            .layer_defs(3),
        )
        .unwrap();
        let s = SampleSet::new(vec![Point::Line(0.0); 4], vec![0.0; 4], None).unwrap();
        let out = predict_extrapolation(&net, &s, &fam, &[Point::Line(0.7)]).unwrap();
        assert_eq!(out, vec![0.0]);
        let short = SampleSet::new(vec![Point::Line(0.0); 3], vec![0.0; 3], None).unwrap();
        assert!(predict_extrapolation(&net, &short, &fam, &[Point::Line(0.7)]).is_err());
    }

    #[test]
    fn endpoint_probes() {
        let xi = Domain::interval(0.5, 1.0).unwrap();
        assert_eq!(
            probe_points(&xi, ExtProbe::Endpoints).unwrap(),
            vec![Point::Line(0.5), Point::Line(1.0)]
        );
        assert_eq!(probe_points(&xi, ExtProbe::Grid { points: 5 }).unwrap().len(), 5);
    }
}
