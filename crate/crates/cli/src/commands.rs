use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;
use tinycnn_core::binio::{read_f32_file, read_json, write_json};
use tinycnn_core::datapath::export_fixed_traces;
use tinycnn_core::hdl::{emit_all, EmitPlan};
use tinycnn_core::perf::{speedup_report, total_cycles, PerfReport};
use tinycnn_core::reference::{
    classification_agreement, forward_float, load_verification_set, make_verification_set, random_images,
};
use tinycnn_core::resource::{check_fit, DeviceSpec, FitResult, HardwareConfig, MemoryKind};
use tinycnn_core::tuner::{evaluate_plan, run_fixed, tune as run_tuner, TuneOptions, TuneReport};
use tinycnn_core::weights::load_model;
use tinycnn_core::{NetworkSpec, QPlan, Tensor, WeightBundle};

use crate::args::{GlobalArgs, InitWeightsArgs, PlanArgs, TuneArgs, VerifsetArgs};
use crate::format::thousands;
use crate::{DEFAULT_VERIF_IMAGES, EXIT_DOMAIN, EXIT_OK};

const FIT_REPORT: &str = "fit_report.json";
const TUNE_REPORT: &str = "tune_report.json";
const SIMULATE_REPORT: &str = "simulate_report.json";
const PERF_REPORT: &str = "perf_report.json";
const SUMMARY_REPORT: &str = "report.json";
const QPLAN_FILE: &str = "qplan.json";

fn load_spec(g: &GlobalArgs) -> Result<NetworkSpec> {
    let path = g.model.join("manifest.json");
    NetworkSpec::from_manifest_file(&path).with_context(|| format!("loading model {}", g.model.display()))
}

fn load_bundle(g: &GlobalArgs) -> Result<(NetworkSpec, WeightBundle)> {
    load_model(&g.model).with_context(|| {
        format!(
            "loading weights from {} (tinycnn init-weights writes a random bundle)",
            g.model.display()
        )
    })
}

/// `--device` as a path when it exists, else `<device dir>/<name>[.json]`.
fn resolve_device(g: &GlobalArgs) -> Result<DeviceSpec> {
    let direct = PathBuf::from(&g.device);
    let candidates = [
        direct.clone(),
        g.device_dir.join(&g.device),
        g.device_dir.join(format!("{}.json", g.device)),
    ];
    let path = candidates
        .iter()
        .find(|p| p.is_file())
        .with_context(|| format!("device {:?} not found (also searched {})", g.device, g.device_dir.display()))?;
    Ok(DeviceSpec::load(path)?)
}

fn hardware(g: &GlobalArgs, device: &DeviceSpec) -> HardwareConfig {
    HardwareConfig {
        conv_mode: g.mode,
        dsp_per_conv: g.dsp.clone(),
        dsp_dense: g.dsp_dense,
        clock_mhz: g.clock_mhz.unwrap_or(device.default_clock_mhz),
        double_buffer: g.double_buffer,
        c_row: g.c_row,
        a_arb: g.a_arb,
    }
}

fn width(g: &GlobalArgs) -> u32 {
    g.width.unwrap_or(tinycnn_core::fixed::DEFAULT_WIDTH)
}

fn verif_dir(g: &GlobalArgs, given: &Option<PathBuf>) -> PathBuf {
    given.clone().unwrap_or_else(|| g.out.join("verif"))
}

fn load_plan(g: &GlobalArgs, given: &Option<PathBuf>, spec: &NetworkSpec) -> Result<QPlan> {
    let path = given.clone().unwrap_or_else(|| g.out.join(QPLAN_FILE));
    let plan = QPlan::load(&path).with_context(|| format!("loading qplan {}", path.display()))?;
    plan.validate(spec)?;
    if let Some(w) = g.width {
        if w != plan.width {
            bail!("--width {w} disagrees with the qplan width {}", plan.width);
        }
    }
    Ok(plan)
}

fn save<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    write_json(&path, value)?;
    Ok(path)
}

pub fn check(g: &GlobalArgs) -> Result<u8> {
    let spec = load_spec(g)?;
    let device = resolve_device(g)?;
    let hw = hardware(g, &device);
    hw.validate(&spec)?;
    let fit = check_fit(&spec, &device, width(g), &hw);
    print_fit(&spec, &hw, &fit);
    save(&g.out, FIT_REPORT, &fit)?;
    Ok(if fit.fits { EXIT_OK } else { EXIT_DOMAIN })
}

fn print_fit(spec: &NetworkSpec, hw: &HardwareConfig, fit: &FitResult) {
    println!(
        "{} ({} layers, {} parameters) on {}, W={}, {} mode",
        spec.name,
        spec.layers.len(),
        thousands(spec.total_params()),
        fit.device,
        fit.width,
        hw.conv_mode
    );
    println!("  {:>5}  {:<8}  {:<10}  {:>10}  {:>12}  {:>6}", "layer", "kind", "memory", "words", "bits", "halves");
    for m in &fit.footprint.memories {
        let kind = match m.kind {
            MemoryKind::WeightRom => "weight ROM",
            MemoryKind::FmapRam => "fmap RAM",
        };
        println!(
            "  {:>5}  {:<8}  {:<10}  {:>10}  {:>12}  {:>6}",
            m.layer,
            spec.layers[m.layer].kind(),
            kind,
            thousands(m.words),
            thousands(m.bits),
            m.half_blocks
        );
    }
    println!("weight bits: {}", thousands(fit.weight_bits()));
    println!("fmap bits: {}", thousands(fit.fmap_bits()));
    println!(
        "BRAM: {} of {} half-blocks ({} of {} bits)",
        fit.footprint.half_blocks,
        fit.half_blocks_available,
        thousands(fit.footprint.total_bits()),
        thousands(fit.bram_bits_available)
    );
    println!("DSP: {} of {}", fit.dsp_needed, fit.dsp_available);
    if fit.fits {
        println!("fits");
    } else {
        let names: Vec<String> = fit.binding.iter().map(|r| r.to_string()).collect();
        println!("does not fit: {} is binding", names.join(" and "));
    }
}

pub fn verifset(g: &GlobalArgs, a: &VerifsetArgs) -> Result<u8> {
    let (spec, weights) = load_bundle(g)?;
    let images = match &a.images {
        Some(path) => {
            let data = read_f32_file(path)?;
            let len = spec.input_shape.len();
            if data.len() % len != 0 {
                bail!("{}: {} floats is not a whole number of {} images", path.display(), data.len(), spec.input_shape);
            }
            data.chunks_exact(len).map(|c| Tensor::new(spec.input_shape, c.to_vec())).collect()
        }
        None => random_images(spec.input_shape, a.random.unwrap_or(DEFAULT_VERIF_IMAGES), g.seed),
    };
    let dir = g.out.join("verif");
    let set = make_verification_set(&spec, &weights, images, &dir)?;
    let mut counts = vec![0usize; spec.output_shape().len()];
    for c in set.classes() {
        counts[c] += 1;
    }
    println!("wrote {} verification images to {}", set.len(), dir.display());
    println!("reference class histogram: {counts:?}");
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct TuneSummary<'a> {
    #[serde(flatten)]
    tuned: &'a TuneReport,
    mid_split_final_nmse: f64,
    mid_split_agreement: f64,
}

pub fn tune(g: &GlobalArgs, a: &TuneArgs) -> Result<u8> {
    let (spec, weights) = load_bundle(g)?;
    let dir = verif_dir(g, &a.verif);
    let set = load_verification_set(&spec, &dir).with_context(|| format!("loading verification set {}", dir.display()))?;
    let opts = TuneOptions {
        width: width(g),
        max_passes: a.max_passes,
    };
    let report = run_tuner(&spec, &weights, &set, opts)?;
    let mid = evaluate_plan(&spec, &weights, &set, &QPlan::mid_split(&spec, &weights, opts.width)?)?;
    for p in &report.passes {
        println!(
            "pass {}: final NMSE {:.6e}, {} layer(s) changed, input F={}",
            p.pass,
            p.final_nmse,
            p.changed.len(),
            p.input_f
        );
    }
    println!(
        "{} after {} pass(es)",
        if report.converged { "converged" } else { "stopped unconverged" },
        report.pass_count
    );
    println!("activation F per layer: {:?}", report.qplan.layers.iter().map(|l| l.activation.frac_bits).collect::<Vec<_>>());
    println!("tuned NMSE {:.6e} vs mid-split NMSE {:.6e}", report.final_nmse, mid.final_nmse);
    println!("classification agreement {:.4} (mid-split {:.4})", report.agreement, mid.agreement);
    report.qplan.save(&g.out.join(QPLAN_FILE))?;
    save(
        &g.out,
        TUNE_REPORT,
        &TuneSummary {
            tuned: &report,
            mid_split_final_nmse: mid.final_nmse,
            mid_split_agreement: mid.agreement,
        },
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SimulateReport {
    count: usize,
    width: u32,
    float_agreement: f64,
    fixed_agreement: f64,
    final_nmse: f64,
    layer_nmse: Vec<f64>,
    input_saturated: u64,
    saturated: Vec<u64>,
}

pub fn simulate(g: &GlobalArgs, a: &PlanArgs) -> Result<u8> {
    let (spec, weights) = load_bundle(g)?;
    let plan = load_plan(g, &a.qplan, &spec)?;
    let dir = verif_dir(g, &a.verif);
    let set = load_verification_set(&spec, &dir).with_context(|| format!("loading verification set {}", dir.display()))?;
    let float_classes = set
        .inputs
        .iter()
        .map(|img| forward_float(&spec, &weights, img).map(|t| t.class))
        .collect::<tinycnn_core::Result<Vec<_>>>()?;
    let float_agreement = classification_agreement(&float_classes, &set.classes())?;
    let traces = run_fixed(&spec, &weights, &set, &plan)?;
    let eval = tinycnn_core::tuner::evaluate_traces(&spec, &set, &plan, &traces)?;
    export_fixed_traces(&g.out.join("fixed"), &plan, &traces)?;
    let report = SimulateReport {
        count: set.len(),
        width: plan.width,
        float_agreement,
        fixed_agreement: eval.agreement,
        final_nmse: eval.final_nmse,
        layer_nmse: eval.layer_nmse.clone(),
        input_saturated: eval.input_saturation.saturated,
        saturated: eval.saturation.iter().map(|s| s.saturated).collect(),
    };
    println!("{} images, W={}", report.count, report.width);
    println!("float vs reference agreement: {:.4}", report.float_agreement);
    println!("fixed vs float agreement: {:.4}", report.fixed_agreement);
    for (l, (nmse, sat)) in report.layer_nmse.iter().zip(&report.saturated).enumerate() {
        println!("  layer {l:>2} {:<8} NMSE {nmse:.6e}  saturated {sat}", spec.layers[l].kind());
    }
    save(&g.out, SIMULATE_REPORT, &report)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct PerfFile<'a> {
    model: &'a str,
    device: &'a str,
    #[serde(flatten)]
    report: &'a PerfReport,
    sw_baseline_ms: f64,
    speedup: f64,
    speedup_text: String,
}

pub fn perf(g: &GlobalArgs) -> Result<u8> {
    let spec = load_spec(g)?;
    let device = resolve_device(g)?;
    let hw = hardware(g, &device);
    let report = total_cycles(&spec, &hw)?;
    let speedup = speedup_report(&report, g.sw_baseline_ms)?;
    println!("{} on {}, {} mode, {} MHz", spec.name, device.name, report.mode, report.clock_mhz);
    for l in &report.layers {
        let lanes = l.dsp.map_or_else(|| "-".to_string(), |d| d.to_string());
        println!("  layer {:>2} {:<8} lanes {:>5}  cycles {:>12}", l.index, l.kind, lanes, thousands(l.cycles));
    }
    for (i, s) in report.stages.iter().enumerate() {
        println!("  stage {i} {:?}: {} cycles", s.layers, thousands(s.cycles));
    }
    if report.arbitration_cycles > 0 {
        println!("arbitration cycles: {}", thousands(report.arbitration_cycles));
    }
    println!("total cycles: {}", thousands(report.total_cycles));
    println!("runtime: {:.4} ms", report.runtime_ms);
    let text = format!("{speedup:.3}");
    println!("speedup vs {} ms software: {text}", g.sw_baseline_ms);
    save(
        &g.out,
        PERF_REPORT,
        &PerfFile {
            model: &spec.name,
            device: &device.name,
            report: &report,
            sw_baseline_ms: g.sw_baseline_ms,
            speedup: speedup.0,
            speedup_text: text,
        },
    )?;
    Ok(EXIT_OK)
}

pub fn emit(g: &GlobalArgs, a: &PlanArgs) -> Result<u8> {
    let (spec, weights) = load_bundle(g)?;
    let plan = load_plan(g, &a.qplan, &spec)?;
    let device = resolve_device(g)?;
    let hw = hardware(g, &device);
    let emit_plan = EmitPlan::new(&spec, &weights, &plan, &hw, &device)?;
    let manifest = emit_all(&emit_plan, &g.out)?;
    println!(
        "wrote {} files to {} ({} mode, W={})",
        manifest.files.len(),
        g.out.display(),
        hw.conv_mode,
        plan.width
    );
    Ok(EXIT_OK)
}

pub fn report(g: &GlobalArgs) -> Result<u8> {
    let mut summary = serde_json::Map::new();
    for (key, file) in [("fit", FIT_REPORT), ("tune", TUNE_REPORT), ("simulate", SIMULATE_REPORT), ("perf", PERF_REPORT)] {
        let path = g.out.join(file);
        if path.is_file() {
            summary.insert(key.into(), read_json::<Value>(&path)?);
        }
    }
    if summary.is_empty() {
        bail!("no reports found in {}; run check, tune, simulate or perf first", g.out.display());
    }
    let num = |key: &str, field: &str| summary.get(key).and_then(|v| v.get(field)).and_then(Value::as_f64);
    if let Some(fit) = summary.get("fit") {
        let fits = fit.get("fits").and_then(Value::as_bool).unwrap_or(false);
        let bits = fit.pointer("/footprint/weight_bits").and_then(Value::as_u64).unwrap_or(0);
        println!("fit: {} ({} weight bits)", if fits { "yes" } else { "no" }, thousands(bits));
    }
    if let (Some(t), Some(m)) = (num("tune", "final_nmse"), num("tune", "mid_split_final_nmse")) {
        println!("tuned NMSE {t:.6e} (mid-split {m:.6e})");
    }
    if let Some(a) = num("simulate", "fixed_agreement") {
        println!("fixed vs float agreement {a:.4}");
    }
    if let Some(text) = summary.get("perf").and_then(|p| p.get("speedup_text")).and_then(Value::as_str) {
        println!("runtime {:.4} ms, speedup {text}", num("perf", "runtime_ms").unwrap_or(f64::NAN));
    }
    save(&g.out, SUMMARY_REPORT, &Value::Object(summary))?;
    Ok(EXIT_OK)
}

pub fn init_weights(g: &GlobalArgs, a: &InitWeightsArgs) -> Result<u8> {
    if !(a.scale.is_finite() && a.scale > 0.0) {
        bail!("--scale must be positive, got {}", a.scale);
    }
    let spec = load_spec(g)?;
    let bundle = WeightBundle::random(&spec, g.seed, a.scale);
    bundle.save(&spec, &g.out)?;
    println!(
        "wrote {} random parameters for {} to {}",
        thousands(bundle.total_floats() as u64),
        spec.name,
        g.out.display()
    );
    Ok(EXIT_OK)
}
