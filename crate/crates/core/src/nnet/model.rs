//! On-disk model record. See `docs/model-format.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, LayerSpec, Mlp};
use super::train::TrainConfig;
use crate::bases::{BasisFamily, FamilyDescriptor, Point};
use crate::datagen::GenConfig;
use crate::domains::Domain;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub learn_beta: bool,
    /// Row-major `inputs × outputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub family: FamilyDescriptor,
    pub omega: Domain,
    pub xi: Domain,
    pub sample_points: Vec<Point>,
    pub layers: Vec<LayerRecord>,
    pub train_config: TrainConfig,
    pub gen_config: GenConfig,
    pub seed: u64,
}

impl ModelFile {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        net: &Mlp,
        family: &BasisFamily,
        omega: &Domain,
        xi: &Domain,
        sample_points: &[Point],
        train_config: &TrainConfig,
        gen_config: &GenConfig,
        seed: u64,
    ) -> Self {
        let layers = (0..net.layers().len())
            .map(|i| {
                let l = &net.layers()[i];
                LayerRecord {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    activation: l.activation,
                    beta: net.beta(i),
                    learn_beta: l.learn_beta,
                    weights: net.weights(i).to_vec(),
                    bias: net.bias(i).to_vec(),
                }
            })
            .collect();
        ModelFile {
            schema_version: SCHEMA_VERSION,
            family: family.descriptor(),
            omega: omega.clone(),
            xi: xi.clone(),
            sample_points: sample_points.to_vec(),
            layers,
            train_config: train_config.clone(),
            gen_config: gen_config.clone(),
            seed,
        }
    }

    pub fn network(&self) -> Result<Mlp> {
        let mut specs = Vec::with_capacity(self.layers.len());
        let mut params = Vec::new();
        for l in &self.layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::DimensionMismatch {
                    expected: l.inputs * l.outputs,
                    got: l.weights.len(),
                });
            }
            let w_offset = params.len();
            params.extend_from_slice(&l.weights);
            let b_offset = params.len();
            params.extend_from_slice(&l.bias);
            let beta_offset = match (l.activation, l.beta) {
                (Activation::Snake, Some(b)) => {
                    params.push(b);
                    Some(params.len() - 1)
                }
                (Activation::Snake, None) => {
                    return Err(Error::Parse("snake layer without `beta`".into()))
                }
                (_, Some(_)) => return Err(Error::Parse("`beta` on a non-snake layer".into())),
                (_, None) => None,
            };
            specs.push(LayerSpec {
                inputs: l.inputs,
                outputs: l.outputs,
                activation: l.activation,
                learn_beta: l.learn_beta && beta_offset.is_some(),
                w_offset,
                b_offset,
                beta_offset,
            });
        }
        let net = Mlp::from_parts(specs, params)?;
        if net.input_dim() != self.sample_points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.sample_points.len(),
                got: net.input_dim(),
            });
        }
        Ok(net)
    }

    pub fn basis(&self) -> Result<BasisFamily> {
        let fam = BasisFamily::from_descriptor(&self.family)?;
        if fam.dim() != self.layers.last().map(|l| l.outputs).unwrap_or(0) {
            return Err(Error::DimensionMismatch {
                expected: fam.dim(),
                got: self.layers.last().map(|l| l.outputs).unwrap_or(0),
            });
        }
        Ok(fam)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model schema version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::grid_points;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_file(act: Activation) -> (ModelFile, Mlp) {
        let fam = BasisFamily::chebyshev(3);
        let omega = Domain::half_open(-1.0, 0.5).unwrap();
        let xi = Domain::interval(0.5, 1.0).unwrap();
        let points = grid_points(&omega, 6).unwrap();
        let cfg = TrainConfig {
            hidden: vec![5, 4],
            activation: act,
            snake_beta: 0.7,
            ..TrainConfig::default()
        };
        let net = Mlp::init_uniform(6, &cfg.layer_defs(4), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let file = ModelFile::new(&net, &fam, &omega, &xi, &points, &cfg, &GenConfig::default(), 42);
        (file, net)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for act in [Activation::Relu, Activation::Snake] {
            let (file, net) = sample_file(act);
            let text = file.to_json().unwrap();
            let back = ModelFile::from_json(&text).unwrap();
            assert_eq!(back, file);
            assert_eq!(back.to_json().unwrap(), text);
            let restored = back.network().unwrap();
            assert_eq!(restored, net);
            assert!(restored
                .params()
                .iter()
                .zip(net.params())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn rejects_other_versions_and_bad_shapes() {
        let (mut file, _) = sample_file(Activation::Tanh);
        file.schema_version = 99;
        let text = serde_json::to_string(&file).unwrap();
        assert!(ModelFile::from_json(&text).is_err());
        let (mut file, _) = sample_file(Activation::Tanh);
        file.layers[0].weights.pop();
        assert!(file.network().is_err());
        let (mut file, _) = sample_file(Activation::Tanh);
        file.layers[0].beta = Some(1.0);
        assert!(file.network().is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let (file, _) = sample_file(Activation::Snake);
        file.save(&path).unwrap();
        assert_eq!(ModelFile::load(&path).unwrap(), file);
        assert_eq!(file.basis().unwrap().dim(), 4);
    }
}
