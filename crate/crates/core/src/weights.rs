//! Float weight bundles.
//!
//! On disk a bundle is a directory holding `manifest.json` plus, for the i-th
//! parameterized layer, `layer{i}_w.bin` and `layer{i}_b.bin` (raw
//! little-endian f32). Conv weights are `[out_ch][in_ch][kh][kw]`, dense
//! weights `[out][in]`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::{read_f32_file, write_bytes, write_f32_file};
use crate::error::{Error, Result};
use crate::model::{LayerSpec, NetworkSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    /// Index of the layer in `NetworkSpec::layers`.
    pub layer: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightBundle {
    /// One entry per parameterized layer, in network order.
    pub layers: Vec<LayerWeights>,
}

/// `(weight count, bias count)` a layer expects given the inferred shapes.
pub fn expected_counts(spec: &NetworkSpec, layer: usize) -> (usize, usize) {
    let input = spec.shapes[layer].input;
    match spec.layers[layer] {
        LayerSpec::Conv2d {
            out_channels,
            kernel,
            bias,
            ..
        } => (
            out_channels * input.channels * kernel * kernel,
            if bias { out_channels } else { 0 },
        ),
        LayerSpec::Dense { units, bias } => (units * input.len(), if bias { units } else { 0 }),
        _ => (0, 0),
    }
}

impl WeightBundle {
    /// Validate counts and finiteness against `spec`.
    pub fn new(spec: &NetworkSpec, layers: Vec<LayerWeights>) -> Result<Self> {
        let param_layers = spec.param_layers();
        if layers.len() != param_layers.len() {
            return Err(Error::invalid(format!(
                "expected {} parameterized layers, got {}",
                param_layers.len(),
                layers.len()
            )));
        }
        for (i, (lw, &net_index)) in layers.iter().zip(&param_layers).enumerate() {
            if lw.layer != net_index {
                return Err(Error::Weights {
                    layer: i,
                    message: format!("bound to network layer {} instead of {net_index}", lw.layer),
                });
            }
            let (nw, nb) = expected_counts(spec, net_index);
            if lw.weights.len() != nw || lw.bias.len() != nb {
                return Err(Error::Weights {
                    layer: i,
                    message: format!(
                        "{}: expected {nw} weights + {nb} biases, found {} weights + {} biases",
                        spec.layers[net_index].kind(),
                        lw.weights.len(),
                        lw.bias.len()
                    ),
                });
            }
            let flat = lw.weights.iter().chain(&lw.bias);
            if let Some(pos) = flat.clone().position(|v| !v.is_finite()) {
                let value = flat.clone().nth(pos).copied().unwrap_or_default();
                return Err(Error::Weights {
                    layer: i,
                    message: format!("non-finite value {value} at flat index {pos}"),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Uniform weights and biases in `[-scale, scale]` from a seeded stream.
    pub fn random(spec: &NetworkSpec, seed: u64, scale: f32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .param_layers()
            .into_iter()
            .map(|layer| {
                let (nw, nb) = expected_counts(spec, layer);
                let mut draw = |n: usize| -> Vec<f32> {
                    (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
                };
                let weights = draw(nw);
                let bias = draw(nb);
                LayerWeights {
                    layer,
                    weights,
                    bias,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = spec
            .param_layers()
            .into_iter()
            .map(|layer| {
                let (nw, nb) = expected_counts(spec, layer);
                LayerWeights {
                    layer,
                    weights: vec![0.0; nw],
                    bias: vec![0.0; nb],
                }
            })
            .collect();
        Self { layers }
    }

    /// Weights of network layer `layer`, if it is parameterized.
    pub fn for_layer(&self, layer: usize) -> Option<&LayerWeights> {
        self.layers.iter().find(|l| l.layer == layer)
    }

    pub fn total_floats(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn save(&self, spec: &NetworkSpec, dir: &Path) -> Result<()> {
        write_bytes(&dir.join("manifest.json"), spec.to_manifest_json().as_bytes())?;
        for (i, lw) in self.layers.iter().enumerate() {
            write_f32_file(&dir.join(format!("layer{i}_w.bin")), &lw.weights)?;
            if !lw.bias.is_empty() {
                write_f32_file(&dir.join(format!("layer{i}_b.bin")), &lw.bias)?;
            }
        }
        Ok(())
    }
}

/// Load and validate a bundle directory against `spec`.
pub fn load_weights(dir: &Path, spec: &NetworkSpec) -> Result<WeightBundle> {
    let mut layers = Vec::new();
    for (i, layer) in spec.param_layers().into_iter().enumerate() {
        let weights = read_f32_file(&dir.join(format!("layer{i}_w.bin")))?;
        let bias_path = dir.join(format!("layer{i}_b.bin"));
        let bias = if spec.layers[layer].has_bias() || bias_path.exists() {
            read_f32_file(&bias_path)?
        } else {
            Vec::new()
        };
        layers.push(LayerWeights {
            layer,
            weights,
            bias,
        });
    }
    WeightBundle::new(spec, layers)
}

/// Read `manifest.json` from a bundle directory, infer shapes, load weights.
pub fn load_model(dir: &Path) -> Result<(NetworkSpec, WeightBundle)> {
    let spec = NetworkSpec::from_manifest_file(&dir.join("manifest.json"))?;
    let weights = load_weights(dir, &spec)?;
    Ok((spec, weights))
}
