//! Closed-form cycle estimates for both conv modes.
//!
//! Conv: `ceil(out_h·out_w·out_ch·in_ch·K² / D) + C_row·out_h·in_ch·out_ch`.
//! Dense: `ceil(in·out / D) + out`. Relu, maxpool and flatten take one cycle
//! per output element; requantization is pipelined into the producing unit.
//!
//! Shared mode runs layers back to back and pays `A_arb` per conv layer.
//! Exclusive mode is a pipeline whose per-image interval is its slowest
//! stage. Each conv layer opens a stage that absorbs the parameter-free
//! layers after it; layers ahead of the first conv join the first stage and
//! the dense layers with everything after them form the last stage.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LayerSpec, NetworkSpec, TensorShape};
use crate::resource::{conv_dsp_bound, ConvMode, HardwareConfig};

/// Software reference runtime used when none is given.
pub const DEFAULT_SW_BASELINE_MS: f64 = 42.54;

pub fn layer_cycles(layer: &LayerSpec, in_shape: TensorShape, dsp: usize, c_row: u64) -> Result<u64> {
    let out_shape = layer
        .output_shape(in_shape)
        .ok_or_else(|| Error::invalid(format!("{} layer cannot consume a {in_shape} input", layer.kind())))?;
    match *layer {
        LayerSpec::Conv2d { kernel, .. } => {
            let bound = conv_dsp_bound(in_shape, kernel);
            if dsp == 0 || dsp > bound {
                return Err(Error::invalid(format!("conv DSP count {dsp} outside 1..={bound}")));
            }
            let macs = (out_shape.len() * in_shape.channels * kernel * kernel) as u64;
            let handoff = c_row * (out_shape.height * in_shape.channels * out_shape.channels) as u64;
            Ok(macs.div_ceil(dsp as u64) + handoff)
        }
        LayerSpec::Dense { units, .. } => {
            let inputs = in_shape.len();
            if dsp == 0 || dsp > inputs {
                return Err(Error::invalid(format!("dense DSP count {dsp} outside 1..={inputs}")));
            }
            Ok(((inputs * units) as u64).div_ceil(dsp as u64) + units as u64)
        }
        LayerSpec::Relu | LayerSpec::MaxPool { .. } | LayerSpec::Flatten => Ok(out_shape.len() as u64),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerPerf {
    pub index: usize,
    pub kind: String,
    /// Lanes used by the layer's unit, for conv and dense.
    pub dsp: Option<usize>,
    pub cycles: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagePerf {
    pub layers: Vec<usize>,
    pub cycles: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub mode: ConvMode,
    pub layers: Vec<LayerPerf>,
    /// Pipeline stages (exclusive mode only).
    pub stages: Vec<StagePerf>,
    pub arbitration_cycles: u64,
    pub total_cycles: u64,
    pub clock_mhz: f64,
    pub runtime_ms: f64,
}

/// Group layer indices into exclusive-mode pipeline stages.
pub fn pipeline_stages(spec: &NetworkSpec) -> Vec<Vec<usize>> {
    let mut stages: Vec<Vec<usize>> = Vec::new();
    let mut lead = Vec::new();
    let mut in_tail = false;
    for (i, layer) in spec.layers.iter().enumerate() {
        match layer {
            LayerSpec::Dense { .. } if !in_tail => {
                in_tail = true;
                let mut stage = std::mem::take(&mut lead);
                stage.push(i);
                stages.push(stage);
            }
            LayerSpec::Conv2d { .. } => {
                let mut stage = std::mem::take(&mut lead);
                stage.push(i);
                stages.push(stage);
            }
            _ => match stages.last_mut() {
                Some(stage) => stage.push(i),
                None => lead.push(i),
            },
        }
    }
    if !lead.is_empty() {
        stages.push(lead);
    }
    stages
}

pub fn total_cycles(spec: &NetworkSpec, config: &HardwareConfig) -> Result<PerfReport> {
    config.validate(spec)?;
    let mut layers = Vec::with_capacity(spec.layers.len());
    let mut conv_ordinal = 0;
    for (i, (layer, shapes)) in spec.layers.iter().zip(&spec.shapes).enumerate() {
        let dsp = match layer {
            LayerSpec::Conv2d { .. } => {
                conv_ordinal += 1;
                Some(config.conv_dsp(conv_ordinal - 1))
            }
            LayerSpec::Dense { .. } => Some(config.dsp_dense),
            _ => None,
        };
        let cycles = layer_cycles(layer, shapes.input, dsp.unwrap_or(1), config.c_row)
            .map_err(|e| Error::invalid(format!("layer {i}: {e}")))?;
        layers.push(LayerPerf {
            index: i,
            kind: layer.kind().to_string(),
            dsp,
            cycles,
        });
    }
    let (stages, arbitration_cycles, total) = match config.conv_mode {
        ConvMode::Shared => {
            let arb = config.a_arb * conv_ordinal as u64;
            (Vec::new(), arb, layers.iter().map(|l| l.cycles).sum::<u64>() + arb)
        }
        ConvMode::Exclusive => {
            let stages: Vec<StagePerf> = pipeline_stages(spec)
                .into_iter()
                .map(|members| StagePerf {
                    cycles: members.iter().map(|&i| layers[i].cycles).sum(),
                    layers: members,
                })
                .collect();
            let max = stages.iter().map(|s| s.cycles).max().unwrap_or(0);
            (stages, 0, max)
        }
    };
    Ok(PerfReport {
        mode: config.conv_mode,
        layers,
        stages,
        arbitration_cycles,
        total_cycles: total,
        clock_mhz: config.clock_mhz,
        runtime_ms: runtime_ms(total, config.clock_mhz),
    })
}

pub fn runtime_ms(cycles: u64, clock_mhz: f64) -> f64 {
    cycles as f64 / (clock_mhz * 1000.0)
}

/// Ratio of software to hardware runtime. Formats with two decimals unless a
/// precision is given.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Speedup(pub f64);

impl Speedup {
    pub fn new(sw_ms: f64, hw_ms: f64) -> Result<Self> {
        if !(sw_ms.is_finite() && sw_ms > 0.0 && hw_ms.is_finite() && hw_ms > 0.0) {
            return Err(Error::invalid(format!(
                "speedup needs positive runtimes, got sw={sw_ms} ms hw={hw_ms} ms"
            )));
        }
        Ok(Self(sw_ms / hw_ms))
    }
}

impl fmt::Display for Speedup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prec = f.precision().unwrap_or(2);
        write!(f, "{:.*}×", prec, self.0)
    }
}

pub fn speedup_report(hw: &PerfReport, sw_baseline_ms: f64) -> Result<Speedup> {
    Speedup::new(sw_baseline_ms, hw.runtime_ms)
}
