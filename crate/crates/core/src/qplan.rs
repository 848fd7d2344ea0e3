//! Per-layer fixed-point format assignment and its `qplan.json` form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{read_json, write_json};
use crate::error::{Error, Result};
use crate::fixed::{choose_weight_format, QFormat};
use crate::model::NetworkSpec;
use crate::weights::WeightBundle;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerFormats {
    /// Format after the layer's precision-adjust unit.
    pub activation: QFormat,
    /// Weight ROM format; `None` for parameter-free layers.
    pub weight: Option<QFormat>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QPlan {
    pub width: u32,
    pub input: QFormat,
    /// One entry per network layer.
    pub layers: Vec<LayerFormats>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    index: usize,
    activation_f: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight_f: Option<u32>,
}

#[derive(Serialize, Deserialize)]
struct QPlanDoc {
    width: u32,
    input_f: u32,
    layers: Vec<LayerDoc>,
}

/// Analytic weight formats for every parameterized layer (`None` elsewhere).
pub fn weight_formats(spec: &NetworkSpec, weights: &WeightBundle, width: u32) -> Result<Vec<Option<QFormat>>> {
    (0..spec.layers.len())
        .map(|i| match weights.for_layer(i) {
            Some(lw) => choose_weight_format(&lw.weights, width).map(Some),
            None if spec.layers[i].is_parameterized() => Err(Error::Weights {
                layer: i,
                message: "no weights bound to this layer".into(),
            }),
            None => Ok(None),
        })
        .collect()
}

impl QPlan {
    /// Same activation fraction bits for the input and every layer.
    pub fn uniform(spec: &NetworkSpec, weights: &WeightBundle, width: u32, frac_bits: u32) -> Result<Self> {
        let act = QFormat::new(width, frac_bits)?;
        let layers = weight_formats(spec, weights, width)?
            .into_iter()
            .map(|weight| LayerFormats {
                activation: act,
                weight,
            })
            .collect();
        Ok(Self {
            width,
            input: act,
            layers,
        })
    }

    /// The naive baseline: `F = W / 2` for the input and every activation.
    pub fn mid_split(spec: &NetworkSpec, weights: &WeightBundle, width: u32) -> Result<Self> {
        Self::uniform(spec, weights, width, width / 2)
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::invalid(format!(
                "qplan covers {} layers, network has {}",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        let formats = std::iter::once(self.input)
            .chain(self.layers.iter().flat_map(|l| std::iter::once(l.activation).chain(l.weight)));
        for f in formats {
            if f.width != self.width {
                return Err(Error::invalid(format!(
                    "qplan mixes widths: {} in a {}-bit plan",
                    f, self.width
                )));
            }
        }
        for (i, (lf, layer)) in self.layers.iter().zip(&spec.layers).enumerate() {
            if lf.weight.is_some() != layer.is_parameterized() {
                return Err(Error::invalid(format!(
                    "qplan layer {i}: weight format presence does not match a {} layer",
                    layer.kind()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("qplan serializes")
    }

    fn to_doc(&self) -> QPlanDoc {
        QPlanDoc {
            width: self.width,
            input_f: self.input.frac_bits,
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(index, l)| LayerDoc {
                    index,
                    activation_f: l.activation.frac_bits,
                    weight_f: l.weight.map(|w| w.frac_bits),
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: QPlanDoc =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("malformed qplan: {e}")))?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: QPlanDoc) -> Result<Self> {
        let width = doc.width;
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (pos, l) in doc.layers.into_iter().enumerate() {
            if l.index != pos {
                return Err(Error::invalid(format!(
                    "qplan layer entries must be in order; entry {pos} has index {}",
                    l.index
                )));
            }
            layers.push(LayerFormats {
                activation: QFormat::new(width, l.activation_f)?,
                weight: l.weight_f.map(|f| QFormat::new(width, f)).transpose()?,
            });
        }
        Ok(Self {
            width,
            input: QFormat::new(width, doc.input_f)?,
            layers,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &self.to_doc())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_doc(read_json(path)?)
    }

    /// Format of the tensor feeding layer `index`.
    pub fn input_format_of(&self, index: usize) -> QFormat {
        if index == 0 {
            self.input
        } else {
            self.layers[index - 1].activation
        }
    }
}

impl Serialize for QPlan {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_doc().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for QPlan {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = QPlanDoc::deserialize(deserializer)?;
        QPlan::from_doc(doc).map_err(serde::de::Error::custom)
    }
}
