//! Flat key/value scenario configuration.
//!
//! A config file names a `scenario` and a `seed`; every other key overrides
//! the scenario's preset. Unknown keys are rejected.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::anchors::{anchor_frame, AnchorSet};
use crate::bases::BasisFamily;
use crate::datagen::{GenConfig, NormKind};
use crate::domains::Domain;
use crate::error::{Error, Result};
use crate::nnet::{Activation, AdamConfig, ExtProbe, LrSchedule, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    ChebNoisy,
    ChebMonotone,
    Anchors,
    FarDomains,
    NoiseSweep,
    Sphere,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::ChebNoisy,
        ScenarioKind::ChebMonotone,
        ScenarioKind::Anchors,
        ScenarioKind::FarDomains,
        ScenarioKind::NoiseSweep,
        ScenarioKind::Sphere,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::ChebNoisy => "cheb-noisy",
            ScenarioKind::ChebMonotone => "cheb-monotone",
            ScenarioKind::Anchors => "anchors",
            ScenarioKind::FarDomains => "far-domains",
            ScenarioKind::NoiseSweep => "noise-sweep",
            ScenarioKind::Sphere => "sphere",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown scenario `{s}`")))
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Network trained on the scenario's (whole) function space.
    Next,
    /// Network trained on monotone functions with the monotone penalty.
    NextMonotone,
    /// Least squares on the scenario's family.
    Ls,
    /// Least squares on the anchors alone, without fillers.
    LsAnchors,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Next => "next",
            Method::NextMonotone => "next-monotone",
            Method::Ls => "ls",
            Method::LsAnchors => "ls-anchors",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Chebyshev,
    Trigonometric,
    SphericalHarmonic,
    AnchorFrame,
}

/// One anchor-scenario setting: an anchor set with or without fillers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AnchorSetting {
    pub set: AnchorSet,
    pub fillers: bool,
}

impl AnchorSetting {
    pub fn label(self) -> String {
        format!(
            "{}{}",
            self.set.name(),
            if self.fillers { "+fillers" } else { "" }
        )
    }
}

impl TryFrom<String> for AnchorSetting {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        let (name, fillers) = match s.strip_suffix("+fillers") {
            Some(n) => (n, true),
            None => (s.as_str(), false),
        };
        Ok(AnchorSetting {
            set: name.parse()?,
            fillers,
        })
    }
}

impl From<AnchorSetting> for String {
    fn from(a: AnchorSetting) -> String {
        a.label()
    }
}

/// Every knob of a scenario run, as one flat record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,

    pub omega: Domain,
    pub xi: Domain,
    pub basis: BasisKind,
    /// Chebyshev degree, harmonic `l_max`, or trigonometric member count.
    pub degree: usize,
    pub anchor_settings: Vec<AnchorSetting>,
    pub fillers: usize,
    pub include_constant: bool,
    pub distances: Vec<f64>,

    pub samples: usize,
    pub eval_points: usize,
    pub validation_count: usize,
    /// Top active index of each validation set (for monotone sets, the
    /// degree after integration).
    pub validation_degrees: Vec<usize>,
    pub sweep_snr_db: Vec<f64>,
    pub methods: Vec<Method>,
    /// Write measured wall times into the CSV instead of zeros.
    pub timing: bool,

    pub r_m: f64,
    pub r_sigma: f64,
    pub n_low: usize,
    pub n_high: usize,
    /// `n_high` of the monotone-trained model (before integration).
    pub monotone_n_high: usize,
    pub batch_size: usize,
    /// `inf` means noiseless.
    pub snr_db: f64,
    pub monotone: bool,
    pub norm: NormKind,
    pub random_degree: bool,

    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub snake_beta: f64,
    pub learn_beta: bool,
    pub lambda_core: f64,
    pub lambda_ext: f64,
    /// `0` probes the endpoints of `Ξ`, otherwise an equispaced grid.
    pub ext_probe_points: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub max_steps: usize,
    pub window: usize,
    pub tolerance: f64,
    pub patience: usize,
}

const REQUIRED: [&str; 2] = ["scenario", "seed"];

impl ScenarioConfig {
    /// Defaults for a scenario.
    pub fn preset(kind: ScenarioKind, seed: u64) -> Self {
        let train = TrainConfig::default();
        let gen = GenConfig::default();
        let mut cfg = ScenarioConfig {
            scenario: kind,
            seed,
            omega: Domain::half_open(-1.0, 0.5).unwrap(),
            xi: Domain::interval(0.5, 1.0).unwrap(),
            basis: BasisKind::Chebyshev,
            degree: 7,
            anchor_settings: vec![],
            fillers: 7,
            include_constant: true,
            distances: vec![],
            samples: 100,
            eval_points: 1000,
            validation_count: 100,
            validation_degrees: vec![3, 5, 7],
            sweep_snr_db: vec![],
            methods: vec![Method::Next, Method::Ls],
            timing: false,
            r_m: gen.r_m,
            r_sigma: gen.r_sigma,
            n_low: gen.n_low,
            n_high: gen.n_high,
            monotone_n_high: 6,
            batch_size: gen.batch_size,
            snr_db: 35.0,
            monotone: false,
            norm: gen.norm,
            random_degree: true,
            hidden: train.hidden.clone(),
            activation: train.activation,
            snake_beta: train.snake_beta,
            learn_beta: train.learn_beta,
            lambda_core: train.lambda_core,
            lambda_ext: train.lambda_ext,
            ext_probe_points: 0,
            learning_rate: train.learning_rate,
            lr_schedule: train.lr_schedule,
            adam_beta1: train.adam.beta1,
            adam_beta2: train.adam.beta2,
            adam_epsilon: train.adam.epsilon,
            max_steps: train.max_steps,
            window: train.window,
            tolerance: train.tolerance,
            patience: train.patience,
        };
        let anchors_omega = Domain::half_open(0.0, 1.5 * PI).unwrap();
        let anchors_xi = Domain::interval(1.5 * PI, 2.0 * PI).unwrap();
        match kind {
            ScenarioKind::ChebNoisy => {}
            ScenarioKind::ChebMonotone => {
                cfg.monotone = true;
                cfg.lambda_ext = 1.0;
                cfg.methods = vec![Method::NextMonotone, Method::Next, Method::Ls];
            }
            ScenarioKind::Anchors => {
                cfg.omega = anchors_omega;
                cfg.xi = anchors_xi;
                cfg.basis = BasisKind::AnchorFrame;
                cfg.anchor_settings = ["decaying", "decaying+fillers", "non-decaying", "non-decaying+fillers"]
                    .iter()
                    .map(|s| AnchorSetting::try_from(s.to_string()).unwrap())
                    .collect();
                cfg.n_high = 9;
                cfg.validation_degrees = vec![];
            }
            ScenarioKind::FarDomains => {
                cfg.omega = anchors_omega;
                cfg.xi = anchors_xi;
                cfg.basis = BasisKind::AnchorFrame;
                cfg.anchor_settings =
                    vec![AnchorSetting::try_from("non-decaying+fillers".to_string()).unwrap()];
                cfg.distances = vec![1.0, 3.0, 7.0];
                cfg.n_high = 9;
                cfg.validation_degrees = vec![];
                cfg.methods = vec![Method::Next, Method::Ls, Method::LsAnchors];
            }
            ScenarioKind::NoiseSweep => {
                cfg.validation_degrees = vec![5];
                cfg.sweep_snr_db = vec![f64::INFINITY, 50.0, 40.0, 35.0, 30.0, 20.0];
            }
            ScenarioKind::Sphere => {
                cfg.omega = Domain::sphere_band(-1.0, -1.0 / 3.0).unwrap();
                cfg.xi = Domain::sphere_band(0.0, 1.0).unwrap();
                cfg.basis = BasisKind::SphericalHarmonic;
                cfg.degree = 2;
                cfg.n_high = 8;
                cfg.eval_points = 10_000;
                cfg.validation_degrees = vec![4, 8];
            }
        }
        cfg
    }

    /// Parses a config: `scenario` and `seed` are required, the rest
    /// overrides the preset.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        for key in REQUIRED {
            if !table.contains_key(key) {
                return Err(Error::MissingKey(key.into()));
            }
        }
        let kind: ScenarioKind = table["scenario"]
            .as_str()
            .ok_or_else(|| Error::InvalidKey {
                key: "scenario".into(),
                reason: "expected a string".into(),
            })?
            .parse()?;
        let seed = table["seed"]
            .as_integer()
            .filter(|s| *s >= 0)
            .ok_or_else(|| Error::InvalidKey {
                key: "seed".into(),
                reason: "expected a nonnegative integer".into(),
            })?;
        let mut merged = toml::Table::try_from(Self::preset(kind, seed as u64))
            .map_err(|e| Error::Parse(e.to_string()))?;
        for (k, v) in table {
            if !merged.contains_key(&k) {
                return Err(Error::InvalidKey {
                    key: k,
                    reason: "unknown key".into(),
                });
            }
            merged.insert(k, v);
        }
        let cfg: ScenarioConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| {
            Err(Error::InvalidKey {
                key: key.into(),
                reason: reason.into(),
            })
        };
        if self.samples == 0 || self.eval_points == 0 || self.validation_count == 0 {
            return bad("samples", "samples, eval_points and validation_count must be positive");
        }
        if self.methods.is_empty() {
            return bad("methods", "at least one method is required");
        }
        let sphere = self.basis == BasisKind::SphericalHarmonic;
        if sphere != self.omega.is_spherical() || sphere != self.xi.is_spherical() {
            return bad("basis", "spherical bases need spherical domains and vice versa");
        }
        if sphere {
            for (key, n) in [("samples", self.samples), ("eval_points", self.eval_points)] {
                let r = (n as f64).sqrt().round() as usize;
                if r * r != n {
                    return bad(key, "must be a perfect square on the sphere");
                }
            }
        }
        if self.basis == BasisKind::AnchorFrame && self.anchor_settings.is_empty() {
            return bad("anchor_settings", "anchor scenarios need at least one setting");
        }
        if self.snr_db.is_nan() {
            return bad("snr_db", "NaN");
        }
        if self.scenario == ScenarioKind::NoiseSweep && self.sweep_snr_db.is_empty() {
            return bad("sweep_snr_db", "the noise sweep needs at least one level");
        }
        if self.scenario == ScenarioKind::FarDomains && self.distances.is_empty() {
            return bad("distances", "need at least one distance");
        }
        self.train_config().validate()?;
        Ok(())
    }

    /// The family for non-anchor scenarios.
    pub fn family(&self) -> Result<BasisFamily> {
        match self.basis {
            BasisKind::Chebyshev => Ok(BasisFamily::chebyshev(self.degree)),
            BasisKind::Trigonometric => BasisFamily::trigonometric(self.degree),
            BasisKind::SphericalHarmonic => Ok(BasisFamily::spherical_harmonic(self.degree)),
            BasisKind::AnchorFrame => Err(Error::InvalidKey {
                key: "basis".into(),
                reason: "anchor frames are built per setting".into(),
            }),
        }
    }

    pub fn anchor_family(&self, setting: AnchorSetting) -> Result<BasisFamily> {
        anchor_frame(
            setting.set,
            if setting.fillers { self.fillers } else { 0 },
            self.include_constant,
        )
    }

    pub fn snr(&self) -> Option<f64> {
        (self.snr_db != f64::INFINITY).then_some(self.snr_db)
    }

    /// Training data config; `n_high` is clamped to the family.
    pub fn gen_config(&self, d: usize) -> GenConfig {
        GenConfig {
            r_m: self.r_m,
            r_sigma: self.r_sigma,
            n_low: self.n_low,
            n_high: self.n_high.min(d.saturating_sub(1)),
            batch_size: self.batch_size,
            snr_db: self.snr(),
            monotone: false,
            norm: self.norm,
            random_degree: self.random_degree,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            hidden: self.hidden.clone(),
            activation: self.activation,
            snake_beta: self.snake_beta,
            learn_beta: self.learn_beta,
            lambda_core: self.lambda_core,
            lambda_ext: self.lambda_ext,
            ext_probe: match self.ext_probe_points {
                0 => ExtProbe::Endpoints,
                points => ExtProbe::Grid { points },
            },
            learning_rate: self.learning_rate,
            lr_schedule: self.lr_schedule,
            adam: AdamConfig {
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                epsilon: self.adam_epsilon,
            },
            max_steps: self.max_steps,
            window: self.window,
            tolerance: self.tolerance,
            patience: self.patience,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for kind in ScenarioKind::ALL {
            let cfg = ScenarioConfig::preset(kind, 1);
            cfg.validate().unwrap();
            assert_eq!(kind.name().parse::<ScenarioKind>().unwrap(), kind);
        }
    }

    #[test]
    fn round_trip_is_idempotent() {
        for kind in ScenarioKind::ALL {
            let cfg = ScenarioConfig::preset(kind, 5);
            let text = cfg.to_toml_string().unwrap();
            let back = ScenarioConfig::from_toml_str(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_toml_string().unwrap(), text);
        }
    }

    #[test]
    fn overrides_and_errors() {
        let cfg = ScenarioConfig::from_toml_str(
            "scenario = \"cheb-noisy\"\nseed = 3\nmax_steps = 10\nsnr_db = inf\nomega = \"interval:-1:0.25)\"\n",
        )
        .unwrap();
        assert_eq!(cfg.max_steps, 10);
        assert_eq!(cfg.snr(), None);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.omega, Domain::half_open(-1.0, 0.25).unwrap());

        match ScenarioConfig::from_toml_str("scenario = \"cheb-noisy\"\n") {
            Err(Error::MissingKey(k)) => assert_eq!(k, "seed"),
            other => panic!("{other:?}"),
        }
        match ScenarioConfig::from_toml_str("seed = 1\n") {
            Err(Error::MissingKey(k)) => assert_eq!(k, "scenario"),
            other => panic!("{other:?}"),
        }
        match ScenarioConfig::from_toml_str("scenario = \"sphere\"\nseed = 1\nbogus = 2\n") {
            Err(Error::InvalidKey { key, .. }) => assert_eq!(key, "bogus"),
            other => panic!("{other:?}"),
        }
        assert!(ScenarioConfig::from_toml_str("scenario = \"nope\"\nseed = 1\n").is_err());
        assert!(ScenarioConfig::from_toml_str("scenario = \"sphere\"\nseed = 1\nsamples = 99\n").is_err());
    }

    #[test]
    fn anchor_setting_labels() {
        let s = AnchorSetting::try_from("non-decaying+fillers".to_string()).unwrap();
        assert_eq!(s.set, AnchorSet::NonDecaying);
        assert!(s.fillers);
        assert_eq!(s.label(), "non-decaying+fillers");
        assert!(AnchorSetting::try_from("rising".to_string()).is_err());
    }
}
