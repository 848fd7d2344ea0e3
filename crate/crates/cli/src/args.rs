use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tinycnn_core::perf::DEFAULT_SW_BASELINE_MS;
use tinycnn_core::resource::{ConvMode, DEFAULT_A_ARB, DEFAULT_C_ROW, DEFAULT_DSP_CONV, DEFAULT_DSP_DENSE};

#[derive(Debug, Parser)]
#[command(name = "tinycnn", version, about = "Fit, tune, simulate and emit CNN accelerators for small FPGAs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args)]
pub struct GlobalArgs {
    /// Model directory (manifest.json, plus layer weights for numeric commands).
    #[arg(long, global = true, default_value = "models/table1")]
    pub model: PathBuf,

    /// Device spec: a JSON path, or a name looked up in the device directory.
    #[arg(long, global = true, default_value = "xc7z020")]
    pub device: String,

    #[arg(long, global = true, env = "TINYCNN_DEVICE_DIR", default_value = "devices", hide = true)]
    pub device_dir: PathBuf,

    /// Word width W. Commands that read a qplan take it from the plan.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(4..=32))]
    pub width: Option<u32>,

    #[arg(long, global = true, default_value_t = ConvMode::Shared, value_parser = parse_mode)]
    pub mode: ConvMode,

    /// Conv lanes: one value, or one per conv layer in exclusive mode.
    #[arg(long, global = true, value_delimiter = ',', default_values_t = [DEFAULT_DSP_CONV])]
    pub dsp: Vec<usize>,

    #[arg(long, global = true, default_value_t = DEFAULT_DSP_DENSE)]
    pub dsp_dense: usize,

    /// Clock in MHz; defaults to the device's clock.
    #[arg(long, global = true)]
    pub clock_mhz: Option<f64>,

    /// Ping-pong feature-map RAMs.
    #[arg(long, global = true)]
    pub double_buffer: bool,

    #[arg(long, global = true, default_value_t = DEFAULT_C_ROW)]
    pub c_row: u64,

    #[arg(long, global = true, default_value_t = DEFAULT_A_ARB)]
    pub a_arb: u64,

    #[arg(long, global = true, default_value_t = DEFAULT_SW_BASELINE_MS)]
    pub sw_baseline_ms: f64,

    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,

    /// Output directory for reports and artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

fn parse_mode(s: &str) -> Result<ConvMode, String> {
    s.parse().map_err(|e: tinycnn_core::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check whether the model fits the device.
    Check,
    /// Build the float verification set under OUT/verif.
    Verifset(VerifsetArgs),
    /// Tune per-layer Q-formats; writes OUT/qplan.json and OUT/tune_report.json.
    Tune(TuneArgs),
    /// Compare the fixed-point engine against the float references.
    Simulate(PlanArgs),
    /// Estimate cycles, runtime and speedup.
    Perf,
    /// Generate the Verilog tree into OUT.
    Emit(PlanArgs),
    /// Summarize the reports found in OUT.
    Report,
    /// Write a seeded random weight bundle for the model into OUT.
    InitWeights(InitWeightsArgs),
}

#[derive(Clone, Debug, Args)]
pub struct VerifsetArgs {
    /// Number of seeded uniform random images in [0, 1).
    #[arg(long, conflicts_with = "images")]
    pub random: Option<usize>,

    /// Raw float32 images, concatenated in channel-major order.
    #[arg(long)]
    pub images: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct TuneArgs {
    /// Verification directory; defaults to OUT/verif.
    #[arg(long)]
    pub verif: Option<PathBuf>,

    #[arg(long, default_value_t = 5)]
    pub max_passes: usize,
}

#[derive(Clone, Debug, Args)]
pub struct PlanArgs {
    /// Q-format plan; defaults to OUT/qplan.json.
    #[arg(long)]
    pub qplan: Option<PathBuf>,

    /// Verification directory; defaults to OUT/verif.
    #[arg(long)]
    pub verif: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct InitWeightsArgs {
    /// Weights and biases are uniform in [-scale, scale].
    #[arg(long, default_value_t = 0.5)]
    pub scale: f32,
}
