//! Scenario execution: builds the families and validation sets, trains the
//! networks, fits least squares and scores everything on equispaced grids.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use super::anchors::{anchor_frame, far_domain_shift, target_function};
use super::config::{AnchorSetting, BasisKind, Method, ScenarioConfig, ScenarioKind};
use super::report::{ExperimentReport, ModelSummary, ReportRow};
use crate::analysis::condition_number;
use crate::bases::{BasisFamily, FunctionHandle, Point};
use crate::datagen::{add_noise, derive_seed, pair_rng, BatchGenerator, GenConfig};
use crate::domains::{grid_points, Domain};
use crate::error::{Error, Result};
use crate::lsfit::{fit_design, LsOptions};
use crate::nnet::{predict_coefficients, train, Mlp, ModelFile, TrainConfig, TrainLog};

const VALIDATION_STREAM: u64 = 1000;
const ANCHOR_STREAM: u64 = 2000;
const MODEL_STREAM: u64 = 100;

/// `sqrt(mean((truth − pred)²))`.
pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("rmse of empty vectors".into()));
    }
    let ss: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((ss / truth.len() as f64).sqrt())
}

/// `total` equispaced points; on the sphere `total` must be a square and the
/// grid is `√total × √total`.
pub fn layout_points(dom: &Domain, total: usize) -> Result<Vec<Point>> {
    if dom.is_spherical() {
        let side = (total as f64).sqrt().round() as usize;
        if side * side != total {
            return Err(Error::InvalidArgument(format!(
                "{total} points do not form a square grid"
            )));
        }
        grid_points(dom, side)
    } else {
        grid_points(dom, total)
    }
}

/// A family on fixed domains with its sample layout and evaluation grids.
#[derive(Clone, Debug)]
pub struct EvalContext {
    pub family: BasisFamily,
    pub omega: Domain,
    pub xi: Domain,
    pub sample_points: Vec<Point>,
    pub xi_grid: Vec<Point>,
    pub omega_grid: Vec<Point>,
    pub kappa: f64,
    sample_design: Vec<f64>,
    xi_design: Vec<f64>,
    omega_design: Vec<f64>,
}

impl EvalContext {
    pub fn new(
        family: BasisFamily,
        omega: &Domain,
        xi: &Domain,
        samples: usize,
        eval_points: usize,
    ) -> Result<Self> {
        let sample_points = layout_points(omega, samples)?;
        let xi_grid = layout_points(xi, eval_points)?;
        let omega_grid = layout_points(omega, eval_points)?;
        let kappa = condition_number(&family, omega, xi)?.kappa;
        Ok(EvalContext {
            sample_design: family.design_matrix(&sample_points)?,
            xi_design: family.design_matrix(&xi_grid)?,
            omega_design: family.design_matrix(&omega_grid)?,
            family,
            omega: omega.clone(),
            xi: xi.clone(),
            sample_points,
            xi_grid,
            omega_grid,
            kappa,
        })
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn on_xi(&self, coeffs: &[f64]) -> Vec<f64> {
        apply(&self.xi_design, coeffs)
    }

    pub fn on_omega(&self, coeffs: &[f64]) -> Vec<f64> {
        apply(&self.omega_design, coeffs)
    }

    pub fn on_samples(&self, coeffs: &[f64]) -> Vec<f64> {
        apply(&self.sample_design, coeffs)
    }

    pub fn ls_coefficients(&self, values: &[f64]) -> Result<Vec<f64>> {
        Ok(fit_design(&self.sample_design, values, self.dim(), LsOptions::default())?.coefficients)
    }
}

fn apply(design: &[f64], coeffs: &[f64]) -> Vec<f64> {
    design
        .chunks_exact(coeffs.len())
        .map(|row| row.iter().zip(coeffs).map(|(a, b)| a * b).sum())
        .collect()
}

/// One validation function: noisy samples and the truth on both grids.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationCase {
    pub values: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub xi_truth: Vec<f64>,
    pub omega_truth: Vec<f64>,
}

/// Mean per-function RMSEs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub xi_rmse: f64,
    pub coeff_rmse: f64,
    pub omega_rmse: f64,
}

/// Scores predicted coefficients against the cases, one prediction per case.
pub fn score(ctx: &EvalContext, cases: &[ValidationCase], preds: &[Vec<f64>]) -> Result<Metrics> {
    if cases.len() != preds.len() || cases.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: cases.len(),
            got: preds.len(),
        });
    }
    let per_case = par_map(&(0..cases.len()).collect::<Vec<_>>(), |&i| {
        let (c, p) = (&cases[i], &preds[i]);
        Ok([
            rmse(&c.xi_truth, &ctx.on_xi(p))?,
            rmse(&c.coefficients, p)?,
            rmse(&c.omega_truth, &ctx.on_omega(p))?,
        ])
    })?;
    let n = per_case.len() as f64;
    let mean = |k: usize| per_case.iter().map(|m| m[k]).sum::<f64>() / n;
    Ok(Metrics {
        xi_rmse: mean(0),
        coeff_rmse: mean(1),
        omega_rmse: mean(2),
    })
}

/// Network predictions for every case, in order.
pub fn next_predictions(net: &Mlp, cases: &[ValidationCase]) -> Result<Vec<Vec<f64>>> {
    let inputs: Vec<f64> = cases.iter().flat_map(|c| c.values.iter().copied()).collect();
    let out = predict_coefficients(net, &inputs, cases.len())?;
    Ok(out.chunks_exact(net.output_dim()).map(<[f64]>::to_vec).collect())
}

pub fn ls_predictions(ctx: &EvalContext, cases: &[ValidationCase]) -> Result<Vec<Vec<f64>>> {
    par_map(cases, |c| ctx.ls_coefficients(&c.values))
}

/// Validation functions drawn like training data but with a fixed top
/// degree. `degree` is the top active index after any monotone integration.
pub fn generated_cases(
    ctx: &EvalContext,
    base: &GenConfig,
    degree: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<ValidationCase>> {
    let mut gen = base.clone();
    gen.random_degree = false;
    gen.n_high = if gen.monotone {
        degree.checked_sub(1).ok_or_else(|| {
            Error::InvalidArgument("monotone validation needs degree ≥ 1".into())
        })?
    } else {
        degree
    };
    gen.n_low = gen.n_low.min(gen.n_high);
    let generator = BatchGenerator::new(
        gen,
        ctx.family.clone(),
        ctx.sample_points.clone(),
        &ctx.omega,
        &ctx.xi,
        seed,
    )?;
    let indices: Vec<u64> = (0..count as u64).collect();
    par_map(&indices, |&i| {
        let (coefficients, values) = generator.pair(i)?;
        Ok(ValidationCase {
            xi_truth: ctx.on_xi(&coefficients),
            omega_truth: ctx.on_omega(&coefficients),
            values,
            coefficients,
        })
    })
}

/// `count` noisy sample sets of one fixed function. The truth coefficients
/// are the minimum-norm least-squares fit to it on the `Ξ` grid; frames are
/// often too close to dependent on `Ξ` for a Gram solve.
pub fn function_cases(
    ctx: &EvalContext,
    f: &FunctionHandle,
    snr_db: Option<f64>,
    count: usize,
    seed: u64,
) -> Result<Vec<ValidationCase>> {
    let eval = |pts: &[Point]| pts.iter().map(|p| f.eval(*p)).collect::<Result<Vec<_>>>();
    let clean = eval(&ctx.sample_points)?;
    let xi_truth = eval(&ctx.xi_grid)?;
    let omega_truth = eval(&ctx.omega_grid)?;
    let coefficients = fit_design(&ctx.xi_design, &xi_truth, ctx.dim(), LsOptions::default())?.coefficients;
    (0..count as u64)
        .map(|i| {
            let values = match snr_db {
                Some(s) => add_noise(&clean, s, &mut pair_rng(seed, i))?,
                None => clean.clone(),
            };
            Ok(ValidationCase {
                values,
                coefficients: coefficients.clone(),
                xi_truth: xi_truth.clone(),
                omega_truth: omega_truth.clone(),
            })
        })
        .collect()
}

/// The validation set the runner uses for a generated-function setting.
pub fn scenario_cases(
    cfg: &ScenarioConfig,
    ctx: &EvalContext,
    degree: usize,
    snr_db: Option<f64>,
) -> Result<Vec<ValidationCase>> {
    let mut gen = cfg.gen_config(ctx.dim());
    gen.monotone = cfg.monotone;
    gen.snr_db = snr_db;
    generated_cases(
        ctx,
        &gen,
        degree,
        cfg.validation_count,
        derive_seed(cfg.seed, VALIDATION_STREAM + degree as u64),
    )
}

/// Maps `f` over `items` on scoped threads; results keep the input order.
fn par_map<T, U, F>(items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync,
{
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(f).collect::<Result<Vec<U>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("validation worker panicked")?);
        }
        Ok(out)
    })
}

/// Seed of the `index`-th network a scenario trains.
pub fn model_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, MODEL_STREAM + index as u64)
}

/// The context of a scenario's first setting: its family on `Ω`/`Ξ`, or
/// for anchor scenarios the first anchor setting at the first distance.
pub fn scenario_context(cfg: &ScenarioConfig) -> Result<EvalContext> {
    cfg.validate()?;
    if cfg.basis != BasisKind::AnchorFrame {
        return EvalContext::new(cfg.family()?, &cfg.omega, &cfg.xi, cfg.samples, cfg.eval_points);
    }
    let xi = match cfg.distances.first() {
        Some(&d) if cfg.scenario == ScenarioKind::FarDomains => far_domain_shift(&cfg.omega, &cfg.xi, d)?,
        _ => cfg.xi.clone(),
    };
    EvalContext::new(cfg.anchor_family(cfg.anchor_settings[0])?, &cfg.omega, &xi, cfg.samples, cfg.eval_points)
}

/// A network trained for one method of a scenario, with its model record.
pub struct TrainedModel {
    pub net: Mlp,
    pub log: TrainLog,
    pub file: ModelFile,
    pub wall_time_s: f64,
}

/// Trains the network `method` calls for on `ctx`. `next-monotone` draws
/// monotone training data; `next` in a monotone scenario drops the monotone
/// penalty.
pub fn train_method(
    cfg: &ScenarioConfig,
    ctx: &EvalContext,
    method: Method,
    seed: u64,
) -> Result<TrainedModel> {
    let d = ctx.dim();
    let mut gen = cfg.gen_config(d);
    let mut tc: TrainConfig = cfg.train_config();
    match method {
        Method::NextMonotone => {
            gen.monotone = true;
            gen.n_high = cfg.monotone_n_high.min(d.saturating_sub(2));
            gen.n_low = gen.n_low.min(gen.n_high);
        }
        Method::Next if cfg.monotone => tc.lambda_ext = 0.0,
        Method::Next => {}
        Method::Ls | Method::LsAnchors => {
            return Err(Error::InvalidArgument(format!(
                "`{}` does not train a network",
                method.name()
            )))
        }
    }
    let start = Instant::now();
    let (net, log) = train(&gen, &tc, &ctx.family, &ctx.omega, &ctx.xi, &ctx.sample_points, seed)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let file = ModelFile::new(&net, &ctx.family, &ctx.omega, &ctx.xi, &ctx.sample_points, &tc, &gen, seed);
    Ok(TrainedModel {
        net,
        log,
        file,
        wall_time_s,
    })
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    model_dir: Option<&'a Path>,
    report: ExperimentReport,
}

impl<'a> Runner<'a> {
    fn train_model(&mut self, name: &str, ctx: &EvalContext, method: Method) -> Result<Mlp> {
        let cfg = self.cfg;
        let seed = model_seed(cfg.seed, self.report.models.len());
        let trained = train_method(cfg, ctx, method, seed)?;
        let file = match self.model_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(model_file_name(cfg.scenario, name));
                trained.file.save(&path)?;
                Some(path)
            }
            None => None,
        };
        self.report.models.push(ModelSummary {
            name: name.to_string(),
            steps: trained.log.steps,
            converged: trained.log.converged,
            final_loss: trained.log.final_window_mean(cfg.window),
            wall_time_s: trained.wall_time_s,
            file,
        });
        Ok(trained.net)
    }

    fn push(&mut self, method: Method, setting: &str, kappa: f64, m: Metrics, wall: f64) {
        let cfg = self.cfg;
        self.report.rows.push(ReportRow {
            scenario: cfg.scenario.to_string(),
            method: method.name().to_string(),
            degree_or_setting: setting.to_string(),
            xi_rmse: m.xi_rmse,
            coeff_rmse: m.coeff_rmse,
            omega_rmse: m.omega_rmse,
            kappa,
            seed: cfg.seed,
            wall_time_s: if cfg.timing { wall } else { 0.0 },
        });
        self.report.measured_wall_time_s.push(wall);
    }

    /// Scores every method on one validation set. Networks are trained
    /// lazily and cached in `models` by method.
    fn evaluate(
        &mut self,
        setting: &str,
        ctx: &EvalContext,
        cases: &[ValidationCase],
        models: &mut BTreeMap<&'static str, Mlp>,
        model_suffix: &str,
        anchors_only: Option<&(EvalContext, Vec<ValidationCase>)>,
    ) -> Result<()> {
        for &method in &self.cfg.methods.clone() {
            let start = Instant::now();
            let (metrics, kappa) = match method {
                Method::Next | Method::NextMonotone => {
                    if !models.contains_key(method.name()) {
                        let name = format!("{}{model_suffix}", method.name());
                        let trained = self.train_model(&name, ctx, method)?;
                        models.insert(method.name(), trained);
                    }
                    let preds = next_predictions(&models[method.name()], cases)?;
                    (score(ctx, cases, &preds)?, ctx.kappa)
                }
                Method::Ls => (score(ctx, cases, &ls_predictions(ctx, cases)?)?, ctx.kappa),
                Method::LsAnchors => {
                    let (actx, acases) = anchors_only.ok_or_else(|| Error::InvalidKey {
                        key: "methods".into(),
                        reason: "ls-anchors needs an anchor scenario".into(),
                    })?;
                    (score(actx, acases, &ls_predictions(actx, acases)?)?, actx.kappa)
                }
            };
            let wall = start.elapsed().as_secs_f64();
            self.push(method, setting, kappa, metrics, wall);
        }
        Ok(())
    }

    fn run_generated(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let ctx = EvalContext::new(cfg.family()?, &cfg.omega, &cfg.xi, cfg.samples, cfg.eval_points)?;
        let mut models = BTreeMap::new();
        let levels: Vec<Option<f64>> = if cfg.scenario == ScenarioKind::NoiseSweep {
            cfg.sweep_snr_db.iter().map(|&s| (s != f64::INFINITY).then_some(s)).collect()
        } else {
            vec![cfg.snr()]
        };
        for &degree in &cfg.validation_degrees {
            for &level in &levels {
                let cases = scenario_cases(cfg, &ctx, degree, level)?;
                let label = setting_label(cfg, degree, level);
                self.evaluate(&label, &ctx, &cases, &mut models, "", None)?;
            }
        }
        Ok(())
    }

    fn run_anchor_setting(
        &mut self,
        setting: AnchorSetting,
        xi: &Domain,
        label: &str,
    ) -> Result<()> {
        let cfg = self.cfg;
        let f = target_function();
        let seed = derive_seed(cfg.seed, ANCHOR_STREAM);
        let ctx = EvalContext::new(cfg.anchor_family(setting)?, &cfg.omega, xi, cfg.samples, cfg.eval_points)?;
        let cases = function_cases(&ctx, &f, cfg.snr(), cfg.validation_count, seed)?;
        let anchors_only = if cfg.methods.contains(&Method::LsAnchors) {
            let actx = EvalContext::new(
                anchor_frame(setting.set, 0, cfg.include_constant)?,
                &cfg.omega,
                xi,
                cfg.samples,
                cfg.eval_points,
            )?;
            let acases = function_cases(&actx, &f, cfg.snr(), cfg.validation_count, seed)?;
            Some((actx, acases))
        } else {
            None
        };
        let mut models = BTreeMap::new();
        let suffix = format!("@{label}");
        self.evaluate(label, &ctx, &cases, &mut models, &suffix, anchors_only.as_ref())?;
        self.note_better_frame(label);
        Ok(())
    }

    fn note_better_frame(&mut self, label: &str) {
        let (Some(ls), Some(la)) = (
            self.report.row(Method::Ls.name(), label),
            self.report.row(Method::LsAnchors.name(), label),
        ) else {
            return;
        };
        let better = if ls.xi_rmse <= la.xi_rmse { "ls" } else { "ls-anchors" };
        self.report
            .notes
            .insert(format!("better_ls_frame@{label}"), better.to_string());
    }

    fn run_anchors(&mut self) -> Result<()> {
        let cfg = self.cfg;
        for &setting in &cfg.anchor_settings {
            self.run_anchor_setting(setting, &cfg.xi, &setting.label())?;
        }
        Ok(())
    }

    fn run_far_domains(&mut self) -> Result<()> {
        let cfg = self.cfg;
        for &setting in &cfg.anchor_settings {
            for &distance in &cfg.distances {
                let xi = far_domain_shift(&cfg.omega, &cfg.xi, distance)?;
                let label = if cfg.anchor_settings.len() == 1 {
                    format!("distance={distance}")
                } else {
                    format!("{};distance={distance}", setting.label())
                };
                self.run_anchor_setting(setting, &xi, &label)?;
            }
        }
        Ok(())
    }
}

fn setting_label(cfg: &ScenarioConfig, degree: usize, snr: Option<f64>) -> String {
    let base = if cfg.basis == BasisKind::SphericalHarmonic {
        format!("coefficients={}", degree + 1)
    } else {
        format!("degree={degree}")
    };
    if cfg.scenario != ScenarioKind::NoiseSweep {
        return base;
    }
    let level = snr.map_or("inf".to_string(), |s| s.to_string());
    if cfg.validation_degrees.len() == 1 {
        format!("snr={level}")
    } else {
        format!("{base};snr={level}")
    }
}

fn model_file_name(kind: ScenarioKind, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("{kind}-{clean}.json")
}

/// Runs one scenario end to end. Trained networks are written to
/// `model_dir` when given.
pub fn run_scenario(cfg: &ScenarioConfig, model_dir: Option<&Path>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut runner = Runner {
        cfg,
        model_dir,
        report: ExperimentReport {
            scenario: cfg.scenario,
            seed: cfg.seed,
            rows: vec![],
            measured_wall_time_s: vec![],
            models: vec![],
            notes: BTreeMap::new(),
            config: cfg.clone(),
        },
    };
    match cfg.basis {
        BasisKind::AnchorFrame if cfg.scenario == ScenarioKind::FarDomains => runner.run_far_domains()?,
        BasisKind::AnchorFrame => runner.run_anchors()?,
        _ => runner.run_generated()?,
    }
    Ok(runner.report)
}
