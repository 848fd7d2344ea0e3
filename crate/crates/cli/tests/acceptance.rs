//! Acceptance suite: one PASS/FAIL line per criterion, each checked
//! against its runtime budget. Exits nonzero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use num_rational::BigRational;
use num_traits::Signed;
use rand::Rng;
use tinycnn_core::datapath::{
    conv_accumulate, conv_accumulate_windowed, conv_fixed, dense_fixed, forward_fixed, maxpool_fixed,
};
use tinycnn_core::fixed::{dequantize, quantize, QFormat, SaturationCounter};
use tinycnn_core::hdl::{emit_all, emit_memfile, lint_tree, parse_memfile, render, EmitPlan};
use tinycnn_core::model::{param_count, LayerSpec, TensorShape};
use tinycnn_core::perf::{speedup_report, total_cycles, PerfReport, Speedup};
use tinycnn_core::qplan::QPlan;
use tinycnn_core::reference::{build_verification_set, forward_float, random_images, top1_margin};
use tinycnn_core::resource::{check_fit, ConvMode, DeviceSpec, HardwareConfig, Resource};
use tinycnn_core::tuner::{evaluate_plan, tune, TuneOptions};
use tinycnn_core::WeightBundle;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn zynq() -> DeviceSpec {
    DeviceSpec::load(&workspace_root().join("devices/xc7z020.json")).unwrap()
}

// Output sizes and param counts per layer, flatten excluded.
const TABLE1_ROWS: [(&str, (usize, usize, usize), u64); 16] = [
    ("conv2d", (32, 32, 32), 320),
    ("relu", (32, 32, 32), 0),
    ("maxpool", (16, 16, 32), 0),
    ("conv2d", (16, 16, 64), 18_496),
    ("relu", (16, 16, 64), 0),
    ("maxpool", (8, 8, 64), 0),
    ("conv2d", (8, 8, 128), 73_856),
    ("relu", (8, 8, 128), 0),
    ("maxpool", (4, 4, 128), 0),
    ("conv2d", (4, 4, 128), 147_584),
    ("relu", (4, 4, 128), 0),
    ("maxpool", (2, 2, 128), 0),
    ("dense", (1, 1, 100), 51_300),
    ("relu", (1, 1, 100), 0),
    ("dense", (1, 1, 10), 1_010),
    ("relu", (1, 1, 10), 0),
];

fn c1_table1() -> Outcome {
    let spec = table1();
    let rows: Vec<usize> = (0..spec.layers.len()).filter(|&i| spec.layers[i] != LayerSpec::Flatten).collect();
    ensure!(rows.len() == TABLE1_ROWS.len(), "{} non-flatten layers", rows.len());
    for (&i, &(kind, (h, w, c), params)) in rows.iter().zip(&TABLE1_ROWS) {
        let out = spec.shapes[i].output;
        let got_params = param_count(&spec.layers[i], spec.shapes[i].input);
        ensure!(spec.layers[i].kind() == kind, "layer {i} is {}", spec.layers[i].kind());
        ensure!(
            (out.height, out.width, out.channels) == (h, w, c) || (out.is_flat() && out.len() == c && h == 1),
            "layer {i} output {out}, expected ({h}, {w}, {c})"
        );
        ensure!(got_params == params, "layer {i} has {got_params} params, expected {params}");
    }
    ensure!(spec.total_params() == 292_566, "total {}", spec.total_params());
    Ok("6 parameterized layers match, total 292,566".into())
}

fn cli_check(width: &str, out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_tinycnn"))
        .current_dir(workspace_root())
        .args(["check", "--width", width, "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stdout).into_owned())
}

fn c2_resources() -> Outcome {
    let spec = table1();
    let device = zynq();
    // independent tally: every parameter stored as one W-bit word
    let params: u64 = spec.layers.iter().zip(&spec.shapes).map(|(l, s)| param_count(l, s.input)).sum();
    let oracle_bits = params * 16;
    let device_bits = 140 * 36_864;
    ensure!(oracle_bits == 4_681_056, "oracle weight bits {oracle_bits}");
    let fit = check_fit(&spec, &device, 16, &HardwareConfig::default());
    ensure!(fit.weight_bits() == oracle_bits, "model weight bits {}", fit.weight_bits());
    ensure!(fit.bram_bits_available == device_bits, "device bits {}", fit.bram_bits_available);
    ensure!(oracle_bits <= device_bits && fit.fits, "W=16 does not fit");
    let wide = check_fit(&spec, &device, 32, &HardwareConfig::default());
    ensure!(!wide.fits && wide.binding == vec![Resource::Bram], "W=32 binding {:?}", wide.binding);

    let tmp = tempfile::tempdir().unwrap();
    let (code16, text16) = cli_check("16", tmp.path());
    ensure!(code16 == 0, "check at W=16 exited {code16}");
    ensure!(text16.contains("4,681,056"), "weight-bit line missing");
    let (code32, text32) = cli_check("32", tmp.path());
    ensure!(code32 == 1, "check at W=32 exited {code32}");
    ensure!(text32.contains("BRAM is binding"), "BRAM not named");
    Ok("4,681,056 <= 5,160,960 bits; W=32 exits 1 on BRAM".into())
}

fn cycles(spec: &tinycnn_core::NetworkSpec, cfg: &HardwareConfig) -> Result<PerfReport, String> {
    total_cycles(spec, cfg).map_err(|e| e.to_string())
}

fn c3_speedup() -> Outcome {
    let a = Speedup::new(42.54, 2.70).unwrap().to_string();
    let b = Speedup::new(42.54, 8.12).unwrap().to_string();
    ensure!(a == "15.76×", "got {a}");
    ensure!(b == "5.24×", "got {b}");
    let report = PerfReport {
        mode: ConvMode::Exclusive,
        layers: vec![],
        stages: vec![],
        arbitration_cycles: 0,
        total_cycles: 270_000,
        clock_mhz: 100.0,
        runtime_ms: 2.70,
    };
    let via_report = speedup_report(&report, 42.54).unwrap().to_string();
    ensure!(via_report == "15.76×", "speedup_report gave {via_report}");

    let spec = table1();
    let mut r = rng(3);
    let configs = 250;
    for _ in 0..configs {
        let d = r.random_range(1..=144);
        let d_more = r.random_range(d..=144);
        let base = HardwareConfig {
            dsp_dense: r.random_range(1..=100),
            c_row: r.random_range(0..=8),
            a_arb: r.random_range(0..=64),
            clock_mhz: r.random_range(50.0..250.0),
            ..HardwareConfig::default()
        };
        let with = |mode, lanes: Vec<usize>| HardwareConfig {
            conv_mode: mode,
            dsp_per_conv: lanes,
            ..base.clone()
        };
        let shared = cycles(&spec, &with(ConvMode::Shared, vec![d]))?;
        let excl = cycles(&spec, &with(ConvMode::Exclusive, vec![d]))?;
        ensure!(
            excl.total_cycles <= shared.total_cycles,
            "D={d}: exclusive {} > shared {}",
            excl.total_cycles,
            shared.total_cycles
        );
        for mode in [ConvMode::Shared, ConvMode::Exclusive] {
            let slow = cycles(&spec, &with(mode, vec![d]))?;
            let fast = cycles(&spec, &with(mode, vec![d_more]))?;
            ensure!(fast.total_cycles <= slow.total_cycles, "{mode}: D {d}->{d_more} raised cycles");
        }
        // per-layer lanes: raising any one layer's D never slows the pipeline
        let lanes: Vec<usize> = (0..4).map(|_| r.random_range(1..=144)).collect();
        let mut raised = lanes.clone();
        let k = r.random_range(0..4);
        raised[k] = r.random_range(lanes[k]..=144);
        let before = cycles(&spec, &with(ConvMode::Exclusive, lanes))?;
        let after = cycles(&spec, &with(ConvMode::Exclusive, raised))?;
        ensure!(after.total_cycles <= before.total_cycles, "per-layer D raise slowed exclusive mode");
    }
    Ok(format!("15.76× and 5.24×; {configs} random configs ordered and monotone"))
}

fn c4_agreement() -> Outcome {
    let nets = 24;
    let margin = 2f64.powi(-6);
    let mut confident = 0;
    for n in 0..nets {
        let mut r = rng(1000 + n as u64);
        let spec = random_small_net(&mut r, n);
        let weights = WeightBundle::random(&spec, 2000 + n as u64, 0.5);
        let set = build_verification_set(&spec, &weights, random_images(spec.input_shape, 64, 3000 + n as u64))
            .map_err(|e| e.to_string())?;
        let report = tune(&spec, &weights, &set, TuneOptions::default()).map_err(|e| e.to_string())?;
        let mid = QPlan::mid_split(&spec, &weights, 16).map_err(|e| e.to_string())?;
        let mid = evaluate_plan(&spec, &weights, &set, &mid).map_err(|e| e.to_string())?;
        ensure!(
            report.final_nmse <= mid.final_nmse,
            "net {n}: tuned NMSE {:e} > mid-split {:e}",
            report.final_nmse,
            mid.final_nmse
        );
        for (i, img) in set.inputs.iter().enumerate() {
            let float = forward_float(&spec, &weights, img).map_err(|e| e.to_string())?;
            if top1_margin(&float.final_output().data) <= margin {
                continue;
            }
            confident += 1;
            let fixed = forward_fixed(&spec, &weights, &report.qplan, img).map_err(|e| e.to_string())?;
            ensure!(fixed.class == float.class, "net {n} image {i}: fixed class {} vs float {}", fixed.class, float.class);
        }
    }
    Ok(format!("{nets} nets, {confident} confident inputs all agree, tuned <= mid-split"))
}

fn c5_oracles() -> Outcome {
    let mut r = rng(5);
    let instances = 1200;
    for i in 0..instances {
        let width = [8, 12, 16, 24][r.random_range(0..4)];
        let fin = QFormat::new(width, r.random_range(0..width)).unwrap();
        let fout = QFormat::new(width, r.random_range(0..width)).unwrap();
        let mut sat = SaturationCounter::default();

        let shape = TensorShape::new(r.random_range(1..=6), r.random_range(1..=6), r.random_range(1..=3));
        let kernel = [1, 3, 5][r.random_range(0..3)];
        let out_ch = r.random_range(1..=3);
        let input = random_fixed(&mut r, shape, fin);
        let n_bias = if r.random_bool(0.8) { out_ch } else { 0 };
        let q = random_qlayer(&mut r, out_ch * shape.channels * kernel * kernel, n_bias, width, fin);
        let got = conv_fixed(&input, out_ch, kernel, &q, fout, &mut sat).map_err(|e| e.to_string())?;
        ensure!(got.raws == oracle_conv(&input, out_ch, kernel, &q, fout), "conv instance {i} differs");
        let windowed = conv_accumulate_windowed(&input, out_ch, kernel, &q).map_err(|e| e.to_string())?;
        let direct = conv_accumulate(&input, out_ch, kernel, &q).map_err(|e| e.to_string())?;
        ensure!(windowed == direct, "windowed conv instance {i} differs");

        let len = r.random_range(1..=48);
        let units = r.random_range(1..=8);
        let input = random_fixed(&mut r, TensorShape::flat(len), fin);
        let q = random_qlayer(&mut r, len * units, units, width, fin);
        let got = dense_fixed(&input, units, &q, fout, &mut sat).map_err(|e| e.to_string())?;
        ensure!(got.raws == oracle_dense(&input, units, &q, fout), "dense instance {i} differs");

        let size = r.random_range(1..=3);
        let shape = TensorShape::new(size * r.random_range(1..=4), size * r.random_range(1..=4), r.random_range(1..=3));
        let input = random_fixed(&mut r, shape, fin);
        let got = maxpool_fixed(&input, size).map_err(|e| e.to_string())?;
        ensure!(got.raws == oracle_maxpool(&input, size), "maxpool instance {i} differs");
    }
    let samples = 100_000;
    for _ in 0..samples {
        let w = r.random_range(2..=32);
        let q = QFormat::new(w, r.random_range(0..w)).unwrap();
        let x = r.random_range(q.min_value()..=q.max_value());
        let back = dequantize(quantize(x, q));
        let err = (BigRational::from_float(back).unwrap() - BigRational::from_float(x).unwrap()).abs();
        ensure!(err <= pow2(-(i64::from(q.frac_bits) + 1)), "round trip of {x} in Q{}.{} off by {err}", q.int_bits(), q.frac_bits);
    }
    Ok(format!("{instances} conv/dense/maxpool/window instances exact; {samples} round trips bounded"))
}

fn c6_tuner() -> Outcome {
    let mut checked = 0;
    for n in 0..12 {
        let mut r = rng(600 + n as u64);
        let spec = random_small_net(&mut r, n);
        let weights = WeightBundle::random(&spec, 700 + n as u64, 0.5);
        let set = build_verification_set(&spec, &weights, random_images(spec.input_shape, 32, 800 + n as u64))
            .map_err(|e| e.to_string())?;
        let a = tune(&spec, &weights, &set, TuneOptions::default()).map_err(|e| e.to_string())?;
        let b = tune(&spec, &weights, &set, TuneOptions::default()).map_err(|e| e.to_string())?;
        ensure!(a.qplan == b.qplan && a.passes == b.passes, "net {n}: tuning not deterministic");
        ensure!(a.pass_count <= 5, "net {n}: {} passes", a.pass_count);
        for pair in a.passes.windows(2) {
            ensure!(
                pair[1].final_nmse <= pair[0].final_nmse,
                "net {n}: pass {} NMSE {:e} > {:e}",
                pair[1].pass,
                pair[1].final_nmse,
                pair[0].final_nmse
            );
        }
        checked += 1;
    }
    for width in [4, 8, 16, 24, 32] {
        let spec = net("relu", TensorShape::new(8, 8, 2), vec![LayerSpec::Relu]);
        let weights = WeightBundle::zeros(&spec);
        let set = build_verification_set(&spec, &weights, random_images(spec.input_shape, 16, 9)).map_err(|e| e.to_string())?;
        let report = tune(&spec, &weights, &set, TuneOptions { width, max_passes: 5 }).map_err(|e| e.to_string())?;
        let f = report.qplan.layers[0].activation.frac_bits;
        ensure!(f == width - 1, "relu net at W={width} tuned to F={f}");
    }
    Ok(format!("{checked} nets deterministic and non-increasing; relu net F = W-1 for W in 4..32"))
}

fn c7_emitter() -> Outcome {
    let mut r = rng(7);
    for width in 2..=32 {
        let raws = random_raws(&mut r, 500, width);
        let text = emit_memfile(&raws, width).map_err(|e| e.to_string())?;
        ensure!(parse_memfile(&text, width).map_err(|e| e.to_string())? == raws, "memfile W={width} round trip differs");
    }
    let spec = table1();
    let weights = WeightBundle::random(&spec, 11, 0.5);
    let plan = QPlan::mid_split(&spec, &weights, 16).map_err(|e| e.to_string())?;
    let device = zynq();
    let mut lint_count = 0;
    let mut tops = BTreeMap::new();
    for (mode, d) in [(ConvMode::Shared, 64), (ConvMode::Exclusive, 32)] {
        let hw = HardwareConfig::with_mode(mode, vec![d]);
        let emit = EmitPlan::new(&spec, &weights, &plan, &hw, &device).map_err(|e| e.to_string())?;
        let files = render(&emit).map_err(|e| e.to_string())?;
        let issues = lint_tree(&files);
        ensure!(issues.is_empty(), "{mode}: lint {:?}", issues);
        lint_count += files.len();
        let mem_lines: usize = files.iter().filter(|(p, _)| p.ends_with(".mem")).map(|(_, t)| t.lines().count()).sum();
        ensure!(mem_lines == 292_566, "{mode}: {mem_lines} memfile lines");
        for (i, q) in emit.layers.iter().enumerate() {
            let Some(q) = q else { continue };
            let text = &files.iter().find(|(p, _)| *p == format!("weights/layer{i}.mem")).unwrap().1;
            ensure!(parse_memfile(text, 16).map_err(|e| e.to_string())? == q.rom_words(), "layer {i} memfile differs");
        }
        let tmp = tempfile::tempdir().unwrap();
        let a = emit_all(&emit, &tmp.path().join("a")).map_err(|e| e.to_string())?;
        let b = emit_all(&emit, &tmp.path().join("b")).map_err(|e| e.to_string())?;
        ensure!(a == b, "{mode}: manifests differ");
        for f in &a.files {
            let x = std::fs::read(tmp.path().join("a").join(&f.path)).unwrap();
            let y = std::fs::read(tmp.path().join("b").join(&f.path)).unwrap();
            ensure!(x == y, "{mode}: {} differs between emissions", f.path);
        }
        tops.insert(mode.to_string(), files.into_iter().find(|(p, _)| p == "top.v").unwrap().1);
    }
    let count = |top: &str, module: &str| {
        top.lines()
            .filter(|l| l.trim_start().starts_with(&format!("{module} ")) && l.contains(" u_"))
            .count()
    };
    let (excl, shared) = (&tops["exclusive"], &tops["shared"]);
    ensure!(count(excl, "conv_unit") == 4, "exclusive has {} conv units", count(excl, "conv_unit"));
    ensure!(count(excl, "conv_arbiter") == 0, "exclusive has an arbiter");
    ensure!(count(shared, "conv_unit") == 1, "shared has {} conv units", count(shared, "conv_unit"));
    ensure!(shared.contains("conv_arbiter #(.N(4)) u_arbiter"), "shared lacks a 4-client arbiter");
    Ok(format!("292,566 memfile lines, re-emission identical, {lint_count} files lint clean"))
}

struct Criterion {
    id: u8,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "reference network shapes and parameter counts", budget: Duration::from_secs(1), run: c1_table1 },
        Criterion { id: 2, name: "BRAM arithmetic and check exit codes", budget: Duration::from_secs(1), run: c2_resources },
        Criterion { id: 3, name: "speedup rounding and cycle-model order", budget: Duration::from_secs(30), run: c3_speedup },
        Criterion { id: 4, name: "fixed/float agreement on random nets", budget: Duration::from_secs(120), run: c4_agreement },
        Criterion { id: 5, name: "numeric core against exact oracles", budget: Duration::from_secs(60), run: c5_oracles },
        Criterion { id: 6, name: "tuner determinism and monotonicity", budget: Duration::from_secs(60), run: c6_tuner },
        Criterion { id: 7, name: "emitter round trip, determinism, lint", budget: Duration::from_secs(30), run: c7_emitter },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}, but over budget")),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{tag} criterion {}: {} [{:.2}s / {}s] {detail}",
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
