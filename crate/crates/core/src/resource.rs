//! BRAM and DSP accounting against a device budget.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::read_json;
use crate::error::{Error, Result};
use crate::model::{param_count, LayerSpec, NetworkSpec, TensorShape};

/// Bits in one half of a 36-Kbit block RAM.
pub const HALF_BLOCK_BITS: u64 = 18_432;
pub const DEFAULT_DSP_CONV: usize = 64;
pub const DEFAULT_DSP_DENSE: usize = 16;
pub const DEFAULT_CLOCK_MHZ: f64 = 100.0;
pub const DEFAULT_C_ROW: u64 = 4;
pub const DEFAULT_A_ARB: u64 = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub name: String,
    #[serde(rename = "bram36")]
    pub bram36_count: u64,
    pub bram36_bits: u64,
    #[serde(rename = "dsp")]
    pub dsp_count: u64,
    #[serde(rename = "clock_mhz")]
    pub default_clock_mhz: f64,
}

impl DeviceSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let dev: Self = serde_json::from_str(text).map_err(|e| Error::invalid(format!("malformed device spec: {e}")))?;
        dev.validate()?;
        Ok(dev)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let dev: Self = read_json(path)?;
        dev.validate()?;
        Ok(dev)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bram36_count == 0 || self.bram36_bits == 0 || self.dsp_count == 0 {
            return Err(Error::invalid(format!("device {}: counts must be >= 1", self.name)));
        }
        if !(self.default_clock_mhz.is_finite() && self.default_clock_mhz > 0.0) {
            return Err(Error::invalid(format!("device {}: clock must be positive", self.name)));
        }
        Ok(())
    }

    pub fn bram_bits(&self) -> u64 {
        self.bram36_count * self.bram36_bits
    }

    /// Half-block capacity, assuming every block splits into two halves.
    pub fn half_blocks(&self) -> u64 {
        2 * self.bram36_count
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvMode {
    /// One arbitrated convolution unit for every conv layer.
    #[default]
    Shared,
    /// One dedicated convolution unit per conv layer.
    Exclusive,
}

impl fmt::Display for ConvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConvMode::Shared => "shared",
            ConvMode::Exclusive => "exclusive",
        })
    }
}

impl std::str::FromStr for ConvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "shared" => Ok(ConvMode::Shared),
            "exclusive" => Ok(ConvMode::Exclusive),
            other => Err(Error::invalid(format!("unknown conv mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardwareConfig {
    pub conv_mode: ConvMode,
    /// Shared: one value. Exclusive: one per conv layer, or one value for all.
    pub dsp_per_conv: Vec<usize>,
    pub dsp_dense: usize,
    pub clock_mhz: f64,
    /// Ping-pong fmap RAMs (doubles fmap bits).
    pub double_buffer: bool,
    /// Row-handoff cycles per (output row, input channel, output channel).
    pub c_row: u64,
    /// Arbitration cycles per conv layer in shared mode.
    pub a_arb: u64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self {
            conv_mode: ConvMode::Shared,
            dsp_per_conv: vec![DEFAULT_DSP_CONV],
            dsp_dense: DEFAULT_DSP_DENSE,
            clock_mhz: DEFAULT_CLOCK_MHZ,
            double_buffer: false,
            c_row: DEFAULT_C_ROW,
            a_arb: DEFAULT_A_ARB,
        }
    }
}

/// Largest useful lane count for a conv layer: every tap of every input pixel.
pub fn conv_dsp_bound(in_shape: TensorShape, kernel: usize) -> usize {
    in_shape.pixels() * kernel * kernel
}

impl HardwareConfig {
    pub fn with_mode(conv_mode: ConvMode, dsp_per_conv: Vec<usize>) -> Self {
        Self {
            conv_mode,
            dsp_per_conv,
            ..Self::default()
        }
    }

    /// DSP lanes of the unit serving the `ordinal`-th conv layer.
    pub fn conv_dsp(&self, ordinal: usize) -> usize {
        match self.dsp_per_conv.as_slice() {
            [d] => *d,
            ds => ds[ordinal],
        }
    }

    /// Check lane counts against the network they will drive.
    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        let convs = spec.conv_layers();
        match (self.conv_mode, self.dsp_per_conv.len()) {
            (_, 0) => return Err(Error::invalid("no DSP allocation given for the conv unit")),
            (ConvMode::Shared, 1) => {}
            (ConvMode::Shared, n) => {
                return Err(Error::invalid(format!(
                    "shared mode takes one DSP count, got {n}"
                )))
            }
            (ConvMode::Exclusive, n) if n == 1 || n == convs.len() => {}
            (ConvMode::Exclusive, n) => {
                return Err(Error::invalid(format!(
                    "exclusive mode needs 1 or {} DSP counts, got {n}",
                    convs.len()
                )))
            }
        }
        if !(self.clock_mhz.is_finite() && self.clock_mhz > 0.0) {
            return Err(Error::invalid(format!("clock must be positive, got {}", self.clock_mhz)));
        }
        for (ordinal, &l) in convs.iter().enumerate() {
            let LayerSpec::Conv2d { kernel, .. } = spec.layers[l] else {
                unreachable!()
            };
            let bound = conv_dsp_bound(spec.shapes[l].input, kernel);
            let d = self.conv_dsp(ordinal);
            if d == 0 || d > bound {
                return Err(Error::invalid(format!(
                    "layer {l}: conv DSP count {d} outside 1..={bound}"
                )));
            }
        }
        if self.dsp_dense == 0 {
            return Err(Error::invalid("dense DSP count must be >= 1"));
        }
        for (l, layer) in spec.layers.iter().enumerate() {
            if let LayerSpec::Dense { .. } = layer {
                let bound = spec.shapes[l].input.len();
                if self.dsp_dense > bound {
                    return Err(Error::invalid(format!(
                        "layer {l}: dense DSP count {} exceeds input length {bound}",
                        self.dsp_dense
                    )));
                }
            }
        }
        Ok(())
    }

    /// Shared: `D`. Exclusive: sum over conv layers. Plus the dense unit.
    pub fn dsp_needed(&self, spec: &NetworkSpec) -> u64 {
        let conv = match self.conv_mode {
            ConvMode::Shared => self.conv_dsp(0) as u64,
            ConvMode::Exclusive => (0..spec.conv_layers().len()).map(|i| self.conv_dsp(i) as u64).sum(),
        };
        conv + self.dsp_dense as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    WeightRom,
    FmapRam,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub layer: usize,
    pub kind: MemoryKind,
    pub words: u64,
    pub bits: u64,
    pub half_blocks: u64,
}

impl MemoryEntry {
    fn new(layer: usize, kind: MemoryKind, words: u64, width: u32, copies: u64) -> Self {
        let bits = words * u64::from(width) * copies;
        Self {
            layer,
            kind,
            words,
            bits,
            half_blocks: bits.div_ceil(HALF_BLOCK_BITS),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub memories: Vec<MemoryEntry>,
    pub weight_bits: u64,
    pub fmap_bits: u64,
    pub half_blocks: u64,
}

impl Footprint {
    fn from_memories(memories: Vec<MemoryEntry>) -> Self {
        let sum_bits = |kind| memories.iter().filter(|m| m.kind == kind).map(|m| m.bits).sum();
        Self {
            weight_bits: sum_bits(MemoryKind::WeightRom),
            fmap_bits: sum_bits(MemoryKind::FmapRam),
            half_blocks: memories.iter().map(|m| m.half_blocks).sum(),
            memories,
        }
    }

    pub fn total_bits(&self) -> u64 {
        self.weight_bits + self.fmap_bits
    }

    /// Whole 36-Kbit blocks at half-block granularity.
    pub fn bram36_blocks(&self) -> f64 {
        self.half_blocks as f64 / 2.0
    }
}

/// Memories owned by one layer: its weight ROM and the fmap RAM buffering
/// its input. Only conv and dense layers have either.
pub fn layer_memories(index: usize, layer: &LayerSpec, in_shape: TensorShape, width: u32, double_buffer: bool) -> Vec<MemoryEntry> {
    if !layer.is_parameterized() {
        return Vec::new();
    }
    let copies = if double_buffer { 2 } else { 1 };
    vec![
        MemoryEntry::new(index, MemoryKind::WeightRom, param_count(layer, in_shape), width, 1),
        MemoryEntry::new(index, MemoryKind::FmapRam, in_shape.len() as u64, width, copies),
    ]
}

pub fn memory_footprint(spec: &NetworkSpec, width: u32, config: &HardwareConfig) -> Footprint {
    let memories = spec
        .layers
        .iter()
        .zip(&spec.shapes)
        .enumerate()
        .flat_map(|(i, (layer, shapes))| layer_memories(i, layer, shapes.input, width, config.double_buffer))
        .collect();
    Footprint::from_memories(memories)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resource {
    #[serde(rename = "BRAM")]
    Bram,
    #[serde(rename = "DSP")]
    Dsp,
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resource::Bram => "BRAM",
            Resource::Dsp => "DSP",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub fits: bool,
    pub device: String,
    pub width: u32,
    pub footprint: Footprint,
    pub half_blocks_available: u64,
    pub bram_bits_available: u64,
    pub dsp_needed: u64,
    pub dsp_available: u64,
    /// Resources whose budget is exceeded; empty iff `fits`.
    pub binding: Vec<Resource>,
}

impl FitResult {
    pub fn weight_bits(&self) -> u64 {
        self.footprint.weight_bits
    }

    pub fn fmap_bits(&self) -> u64 {
        self.footprint.fmap_bits
    }

    pub fn total_bram_blocks_needed(&self) -> f64 {
        self.footprint.bram36_blocks()
    }
}

pub fn check_fit(spec: &NetworkSpec, device: &DeviceSpec, width: u32, config: &HardwareConfig) -> FitResult {
    let footprint = memory_footprint(spec, width, config);
    let dsp_needed = config.dsp_needed(spec);
    let mut binding = Vec::new();
    if footprint.half_blocks > device.half_blocks() {
        binding.push(Resource::Bram);
    }
    if dsp_needed > device.dsp_count {
        binding.push(Resource::Dsp);
    }
    FitResult {
        fits: binding.is_empty(),
        device: device.name.clone(),
        width,
        footprint,
        half_blocks_available: device.half_blocks(),
        bram_bits_available: device.bram_bits(),
        dsp_needed,
        dsp_available: device.dsp_count,
        binding,
    }
}
