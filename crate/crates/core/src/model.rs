//! Network description: manifest parsing, shape inference and parameter counting.
//!
//! Tensors are laid out channel-major throughout the crate: the flat index of
//! element `(ch, row, col)` is `ch * h * w + row * w + col`. Flatten relies on
//! this ordering and so do the memfiles emitted for the dense ROMs.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl TensorShape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    /// Shape used for the output of Flatten and Dense layers.
    pub const fn flat(len: usize) -> Self {
        Self::new(1, 1, len)
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub const fn is_flat(&self) -> bool {
        self.height == 1 && self.width == 1
    }

    pub fn index(&self, ch: usize, row: usize, col: usize) -> usize {
        debug_assert!(ch < self.channels && row < self.height && col < self.width);
        (ch * self.height + row) * self.width + col
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_flat() {
            write!(f, "({})", self.channels)
        } else {
            write!(f, "({}, {}, {})", self.height, self.width, self.channels)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Same,
}

fn default_kernel() -> usize {
    3
}

fn default_bias() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        #[serde(default = "default_kernel")]
        kernel: usize,
        #[serde(default)]
        padding: Padding,
        #[serde(default = "default_bias")]
        bias: bool,
    },
    Relu,
    #[serde(rename = "maxpool")]
    MaxPool { size: usize },
    Flatten,
    Dense {
        units: usize,
        #[serde(default = "default_bias")]
        bias: bool,
    },
}

impl LayerSpec {
    pub fn conv(out_channels: usize, kernel: usize) -> Self {
        LayerSpec::Conv2d {
            out_channels,
            kernel,
            padding: Padding::Same,
            bias: true,
        }
    }

    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units, bias: true }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }

    /// Output shape for `input`; `None` when a pool size does not divide it.
    pub fn output_shape(&self, input: TensorShape) -> Option<TensorShape> {
        match *self {
            LayerSpec::Conv2d { out_channels, .. } => Some(TensorShape::new(input.height, input.width, out_channels)),
            LayerSpec::Relu => Some(input),
            LayerSpec::MaxPool { size } => (input.height.is_multiple_of(size) && input.width.is_multiple_of(size))
                .then(|| TensorShape::new(input.height / size, input.width / size, input.channels)),
            LayerSpec::Flatten => Some(TensorShape::flat(input.len())),
            LayerSpec::Dense { units, .. } => Some(TensorShape::flat(units)),
        }
    }

    /// Conv2d and Dense carry weights; everything else is parameter-free.
    pub fn is_parameterized(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    pub fn is_spatial(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::MaxPool { .. })
    }

    pub fn has_bias(&self) -> bool {
        match *self {
            LayerSpec::Conv2d { bias, .. } | LayerSpec::Dense { bias, .. } => bias,
            _ => false,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        match *self {
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                ..
            } => {
                if out_channels == 0 {
                    return Err(Error::manifest(index, "conv2d out_channels must be >= 1"));
                }
                if kernel == 0 || kernel % 2 == 0 {
                    return Err(Error::manifest(
                        index,
                        format!("conv2d kernel must be odd and >= 1, got {kernel}"),
                    ));
                }
            }
            LayerSpec::MaxPool { size: 0 } => {
                return Err(Error::manifest(index, "maxpool size must be >= 1"));
            }
            LayerSpec::Dense { units: 0, .. } => {
                return Err(Error::manifest(index, "dense units must be >= 1"));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShapes {
    pub input: TensorShape,
    pub output: TensorShape,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub name: String,
    pub input_shape: TensorShape,
    pub layers: Vec<LayerSpec>,
    /// Empty until [`infer_shapes`] runs.
    pub shapes: Vec<LayerShapes>,
}

#[derive(Serialize, Deserialize)]
struct ManifestDoc<L> {
    name: String,
    input: TensorShape,
    layers: Vec<L>,
}

/// Parse a JSON manifest. Shapes are not inferred.
pub fn parse_manifest(text: &str) -> Result<NetworkSpec> {
    let doc: ManifestDoc<serde_json::Value> = serde_json::from_str(text)
        .map_err(|e| Error::manifest(None, format!("malformed manifest: {e}")))?;
    let input = doc.input;
    if input.is_empty() {
        return Err(Error::manifest(None, "input dimensions must all be >= 1"));
    }
    if doc.layers.is_empty() {
        return Err(Error::manifest(None, "network has no layers"));
    }
    let layers = doc
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, value)| {
            serde_json::from_value::<LayerSpec>(value)
                .map_err(|e| Error::manifest(i, format!("invalid layer: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = NetworkSpec {
        name: doc.name,
        input_shape: input,
        layers,
        shapes: Vec::new(),
    };
    spec.validate_structure()?;
    Ok(spec)
}

pub fn infer_shapes(spec: NetworkSpec) -> Result<NetworkSpec> {
    spec.infer_shapes()
}

/// Weight plus bias count of one layer given its input shape.
pub fn param_count(layer: &LayerSpec, in_shape: TensorShape) -> u64 {
    match *layer {
        LayerSpec::Conv2d {
            out_channels,
            kernel,
            bias,
            ..
        } => {
            let taps = (in_shape.channels * kernel * kernel) as u64;
            out_channels as u64 * (taps + u64::from(bias))
        }
        LayerSpec::Dense { units, bias } => units as u64 * (in_shape.len() as u64 + u64::from(bias)),
        LayerSpec::Relu | LayerSpec::MaxPool { .. } | LayerSpec::Flatten => 0,
    }
}

pub fn total_params(spec: &NetworkSpec) -> u64 {
    spec.layers
        .iter()
        .zip(&spec.shapes)
        .map(|(layer, shapes)| param_count(layer, shapes.input))
        .sum()
}

impl NetworkSpec {
    pub fn from_manifest_str(text: &str) -> Result<Self> {
        parse_manifest(text)?.infer_shapes()
    }

    pub fn from_manifest_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_manifest_str(&text)
    }

    pub fn to_manifest_json(&self) -> String {
        let doc = ManifestDoc {
            name: self.name.clone(),
            input: self.input_shape,
            layers: self.layers.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("manifest serializes")
    }

    pub fn is_inferred(&self) -> bool {
        self.shapes.len() == self.layers.len()
    }

    pub fn output_shape(&self) -> TensorShape {
        self.shapes
            .last()
            .map(|s| s.output)
            .unwrap_or(self.input_shape)
    }

    /// Network-layer indices of Conv2d and Dense layers, in order. The
    /// position in this list is the layer's index in the weight bundle.
    pub fn param_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_parameterized())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn conv_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Conv2d { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    /// Layer-level invariants plus Flatten placement: at most one Flatten,
    /// no spatial layer after it, no Dense before it.
    fn validate_structure(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::manifest(None, "network has no layers"));
        }
        let mut flatten_at = None;
        let mut first_dense = None;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate(i)?;
            match layer {
                LayerSpec::Flatten => {
                    if let Some(prev) = flatten_at {
                        return Err(Error::manifest(
                            i,
                            format!("flatten misplaced: second flatten (first at layer {prev})"),
                        ));
                    }
                    if let Some(d) = first_dense {
                        return Err(Error::manifest(
                            i,
                            format!("flatten misplaced: appears after dense layer {d}"),
                        ));
                    }
                    flatten_at = Some(i);
                }
                LayerSpec::Dense { .. } => {
                    first_dense.get_or_insert(i);
                }
                l if l.is_spatial() => {
                    if let Some(f) = flatten_at {
                        return Err(Error::manifest(
                            f,
                            format!("flatten misplaced: {} layer {i} follows it", l.kind()),
                        ));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Populate per-layer input/output shapes. Idempotent.
    pub fn infer_shapes(mut self) -> Result<Self> {
        self.validate_structure()?;
        if self.input_shape.is_empty() {
            return Err(Error::manifest(None, "input dimensions must all be >= 1"));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input_shape;
        for (index, layer) in self.layers.iter().enumerate() {
            if matches!(layer, LayerSpec::Dense { .. }) && !self.layers[..index].contains(&LayerSpec::Flatten) {
                return Err(Error::Shape {
                    index,
                    message: "dense encountered before flatten".into(),
                });
            }
            let out = layer.output_shape(cur).ok_or_else(|| Error::Shape {
                index,
                message: match layer {
                    LayerSpec::MaxPool { size } => {
                        format!("pool size {size} does not divide input {}x{}", cur.height, cur.width)
                    }
                    _ => format!("{} layer cannot consume a {cur} input", layer.kind()),
                },
            })?;
            shapes.push(LayerShapes {
                input: cur,
                output: out,
            });
            cur = out;
        }
        self.shapes = shapes;
        Ok(self)
    }

    pub fn total_params(&self) -> u64 {
        total_params(self)
    }
}
