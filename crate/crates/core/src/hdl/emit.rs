//! Whole-design emission: units, top level, memfiles and the manifest.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::lint::lint_tree;
use super::memfile::emit_memfile;
use super::units::{self, LayerRom, UnitKind};
use crate::binio::{write_bytes, write_json};
use crate::datapath::{FixedModel, QuantizedLayer};
use crate::error::{Error, Result};
use crate::fixed::accumulator_bits;
use crate::model::{LayerSpec, NetworkSpec};
use crate::qplan::QPlan;
use crate::resource::{check_fit, ConvMode, DeviceSpec, FitResult, HardwareConfig};
use crate::weights::WeightBundle;

pub const MANIFEST_FILE: &str = "emit_manifest.json";

/// Everything needed to generate one accelerator.
#[derive(Clone, Debug)]
pub struct EmitPlan {
    pub spec: NetworkSpec,
    pub qplan: QPlan,
    pub hardware: HardwareConfig,
    pub device: String,
    pub fit: FitResult,
    /// Quantized ROM contents per network layer (`None` for parameter-free).
    pub layers: Vec<Option<QuantizedLayer>>,
}

impl EmitPlan {
    /// Validate and quantize. Fails with [`Error::DoesNotFit`] when the
    /// design exceeds the device.
    pub fn new(
        spec: &NetworkSpec,
        weights: &WeightBundle,
        qplan: &QPlan,
        hardware: &HardwareConfig,
        device: &DeviceSpec,
    ) -> Result<Self> {
        hardware.validate(spec)?;
        let fit = check_fit(spec, device, qplan.width, hardware);
        if !fit.fits {
            let names: Vec<String> = fit.binding.iter().map(|r| r.to_string()).collect();
            return Err(Error::DoesNotFit(format!(
                "design does not fit {}: {} exceeded",
                device.name,
                names.join(" and ")
            )));
        }
        if hardware.conv_mode == ConvMode::Shared {
            let kernels: BTreeSet<usize> = spec.conv_layers().iter().map(|&l| conv_kernel(spec, l)).collect();
            if kernels.len() > 1 {
                return Err(Error::invalid("shared conv mode needs one kernel size across conv layers"));
            }
        }
        let model = FixedModel::new(spec, weights, qplan)?;
        Ok(Self {
            spec: spec.clone(),
            qplan: qplan.clone(),
            hardware: hardware.clone(),
            device: device.name.clone(),
            fit,
            layers: model.layers,
        })
    }

    pub fn width(&self) -> u32 {
        self.qplan.width
    }
}

fn conv_kernel(spec: &NetworkSpec, layer: usize) -> usize {
    match spec.layers[layer] {
        LayerSpec::Conv2d { kernel, .. } => kernel,
        _ => unreachable!("not a conv layer"),
    }
}

pub fn memfile_path(layer: usize) -> String {
    format!("weights/layer{layer}.mem")
}

fn unit_path(module: &str) -> String {
    format!("units/{module}.v")
}

/// Conv unit module name per conv layer. A single shape keeps the plain
/// `conv_unit` name; mixed shapes get `conv_unit_k{K}_d{D}` variants.
fn conv_unit_names(plan: &EmitPlan) -> Vec<(usize, usize, String)> {
    let convs = plan.spec.conv_layers();
    let shapes: Vec<(usize, usize)> = convs
        .iter()
        .enumerate()
        .map(|(ordinal, &l)| {
            let d = match plan.hardware.conv_mode {
                ConvMode::Shared => plan.hardware.conv_dsp(0),
                ConvMode::Exclusive => plan.hardware.conv_dsp(ordinal),
            };
            (conv_kernel(&plan.spec, l), d)
        })
        .collect();
    let distinct: BTreeSet<_> = shapes.iter().collect();
    shapes
        .iter()
        .map(|&(k, d)| {
            let name = if distinct.len() == 1 {
                "conv_unit".to_string()
            } else {
                format!("conv_unit_k{k}_d{d}")
            };
            (k, d, name)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmitConfig {
    pub device: String,
    pub width: u32,
    pub hardware: HardwareConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmitManifest {
    pub files: Vec<ManifestFile>,
    pub qplan: QPlan,
    pub config: EmitConfig,
}

fn layer_rom(index: usize, q: &QuantizedLayer) -> LayerRom {
    LayerRom {
        index,
        memfile: memfile_path(index),
        weight_words: q.weights.len(),
        bias_words: q.bias.len(),
        bias_shift: q.bias_format.map_or(0, |bf| q.acc_frac_bits - bf.frac_bits),
    }
}

/// Render every file of the design in path order. Nothing touches disk.
pub fn render(plan: &EmitPlan) -> Result<Vec<(String, String)>> {
    let width = plan.width();
    let acc_bits = accumulator_bits(width);
    let mut files = std::collections::BTreeMap::new();
    let conv_names = conv_unit_names(plan);
    for (k, d, name) in &conv_names {
        files
            .entry(unit_path(name))
            .or_insert(units::conv_unit(name, *d, width, acc_bits, *k)?);
    }
    let n_conv = conv_names.len();
    if plan.hardware.conv_mode == ConvMode::Shared && n_conv > 0 {
        files.insert(unit_path("conv_arbiter"), units::emit_unit(UnitKind::Arbiter(n_conv), width)?);
    }
    for (i, (layer, shapes)) in plan.spec.layers.iter().zip(&plan.spec.shapes).enumerate() {
        let input = shapes.input;
        match (*layer, &plan.layers[i]) {
            (LayerSpec::Conv2d { out_channels, kernel, .. }, Some(q)) => {
                let rom = layer_rom(i, q);
                files.insert(
                    unit_path(&format!("ff_l{i}")),
                    units::feedforward(&rom, input.height, input.width, input.channels, out_channels, kernel, width, acc_bits),
                );
                files.insert(rom.memfile.clone(), emit_memfile(&q.rom_words(), width)?);
            }
            (LayerSpec::Dense { units: n, .. }, Some(q)) => {
                let rom = layer_rom(i, q);
                files.insert(
                    unit_path(&format!("dense_l{i}")),
                    units::dense(&rom, input.len(), n, plan.hardware.dsp_dense, width, acc_bits)?,
                );
                files.insert(rom.memfile.clone(), emit_memfile(&q.rom_words(), width)?);
            }
            (LayerSpec::Relu, _) => {
                files.insert(unit_path("relu"), units::emit_unit(UnitKind::Relu, width)?);
            }
            (LayerSpec::MaxPool { size }, _) => {
                files.insert(unit_path(&units::maxpool_name(size)), units::emit_unit(UnitKind::MaxPool(size), width)?);
            }
            (LayerSpec::Flatten, _) => {}
            _ => {
                return Err(Error::Weights {
                    layer: i,
                    message: "parameterized layer has no quantized weights".into(),
                })
            }
        }
        let (in_frac, in_bits) = match &plan.layers[i] {
            Some(q) => (q.acc_frac_bits, acc_bits),
            None => (plan.qplan.input_format_of(i).frac_bits, width),
        };
        let shift = in_frac as i32 - plan.qplan.layers[i].activation.frac_bits as i32;
        files.insert(
            unit_path(&format!("adjust_l{i}")),
            units::emit_unit(UnitKind::PrecisionAdjust { index: i, shift, in_bits }, width)?,
        );
    }
    files.insert("top.v".to_string(), top(plan, &conv_names));
    Ok(files.into_iter().collect())
}

fn top(plan: &EmitPlan, conv_names: &[(usize, usize, String)]) -> String {
    let spec = &plan.spec;
    let n = spec.layers.len();
    let width = plan.width();
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(
        w,
        "// Accelerator top level for {}: {} layers, {} conv mode.",
        spec.name,
        n,
        plan.hardware.conv_mode
    );
    let _ = writeln!(w, "module top #(");
    let _ = writeln!(w, "    parameter W = {width},");
    let _ = writeln!(w, "    parameter ACC_W = {}", accumulator_bits(width));
    let _ = writeln!(w, ") (");
    for (dir, ty, name) in [
        ("input ", "wire        ", "clk,"),
        ("input ", "wire        ", "rst,"),
        ("input ", "wire [W-1:0]", "in_data,"),
        ("input ", "wire        ", "in_valid,"),
        ("output", "wire        ", "in_ready,"),
        ("output", "wire [W-1:0]", "out_data,"),
        ("output", "wire        ", "out_valid,"),
        ("input ", "wire        ", "out_ready"),
    ] {
        let _ = writeln!(w, "    {dir} {ty} {name}");
    }
    let _ = writeln!(w, ");");

    for i in 0..=n {
        let _ = writeln!(w, "    wire [W-1:0] s{i}_data;");
        let _ = writeln!(w, "    wire s{i}_valid;");
        let _ = writeln!(w, "    wire s{i}_ready;");
    }
    for (i, layer) in spec.layers.iter().enumerate() {
        let bits = if layer.is_parameterized() { "ACC_W" } else { "W" };
        let _ = writeln!(w, "    wire [{bits}-1:0] a{i}_data;");
        let _ = writeln!(w, "    wire a{i}_valid;");
        let _ = writeln!(w, "    wire a{i}_ready;");
    }
    let _ = writeln!(w);
    let _ = writeln!(w, "    assign s0_data = in_data;");
    let _ = writeln!(w, "    assign s0_valid = in_valid;");
    let _ = writeln!(w, "    assign in_ready = s0_ready;");
    let _ = writeln!(w, "    assign out_data = s{n}_data;");
    let _ = writeln!(w, "    assign out_valid = s{n}_valid;");
    let _ = writeln!(w, "    assign s{n}_ready = out_ready;");

    let convs = spec.conv_layers();
    for &i in &convs {
        let k = conv_kernel(spec, i);
        for (name, bits) in [
            ("win", format!("{k}*{k}*W")),
            ("filt", format!("{k}*{k}*W")),
            ("seed", "ACC_W".to_string()),
            ("row", "ACC_W".to_string()),
        ] {
            let _ = writeln!(w, "    wire [{bits}-1:0] w{i}_{name};");
        }
        for name in ["win_valid", "win_ready", "filt_valid", "filt_ready", "row_valid", "row_ready", "req", "grant"] {
            let _ = writeln!(w, "    wire w{i}_{name};");
        }
    }

    for (i, (layer, shapes)) in spec.layers.iter().zip(&spec.shapes).enumerate() {
        let _ = writeln!(w);
        let _ = writeln!(w, "    // layer {i}: {}", layer.kind());
        let stream_in = format!(".in_data(s{i}_data), .in_valid(s{i}_valid), .in_ready(s{i}_ready)");
        let acc_out = format!(".out_data(a{i}_data), .out_valid(a{i}_valid), .out_ready(a{i}_ready)");
        match *layer {
            LayerSpec::Conv2d { .. } => {
                let _ = writeln!(w, "    ff_l{i} u_ff_l{i} (");
                let _ = writeln!(w, "        .clk(clk), .rst(rst),");
                let _ = writeln!(w, "        {stream_in},");
                let _ = writeln!(w, "        .req(w{i}_req), .grant(w{i}_grant),");
                let _ = writeln!(w, "        .win_data(w{i}_win), .win_valid(w{i}_win_valid), .win_ready(w{i}_win_ready),");
                let _ = writeln!(w, "        .filt_data(w{i}_filt), .filt_valid(w{i}_filt_valid), .filt_ready(w{i}_filt_ready),");
                let _ = writeln!(w, "        .acc_seed(w{i}_seed),");
                let _ = writeln!(w, "        .row_data(w{i}_row), .row_valid(w{i}_row_valid), .row_ready(w{i}_row_ready),");
                let _ = writeln!(w, "        {acc_out}");
                let _ = writeln!(w, "    );");
            }
            LayerSpec::Relu => {
                let _ = writeln!(w, "    relu #(.W(W)) u_relu_l{i} ({stream_in}, {acc_out});");
            }
            LayerSpec::MaxPool { size } => {
                let inp = shapes.input;
                let _ = writeln!(
                    w,
                    "    {} #(.W(W), .IN_H({}), .IN_W({}), .CH({})) u_pool_l{i} (",
                    units::maxpool_name(size),
                    inp.height,
                    inp.width,
                    inp.channels
                );
                let _ = writeln!(w, "        .clk(clk), .rst(rst), {stream_in}, {acc_out}");
                let _ = writeln!(w, "    );");
            }
            LayerSpec::Flatten => {
                let _ = writeln!(w, "    assign a{i}_data = s{i}_data;");
                let _ = writeln!(w, "    assign a{i}_valid = s{i}_valid;");
                let _ = writeln!(w, "    assign s{i}_ready = a{i}_ready;");
            }
            LayerSpec::Dense { .. } => {
                let _ = writeln!(w, "    dense_l{i} u_dense_l{i} (");
                let _ = writeln!(w, "        .clk(clk), .rst(rst), {stream_in}, {acc_out}");
                let _ = writeln!(w, "    );");
            }
        }
        let _ = writeln!(w, "    adjust_l{i} u_adjust_l{i} (");
        let _ = writeln!(w, "        .in_data(a{i}_data), .in_valid(a{i}_valid), .in_ready(a{i}_ready),");
        let j = i + 1;
        let _ = writeln!(w, "        .out_data(s{j}_data), .out_valid(s{j}_valid), .out_ready(s{j}_ready)");
        let _ = writeln!(w, "    );");
    }

    if !convs.is_empty() {
        let _ = writeln!(w);
        match plan.hardware.conv_mode {
            ConvMode::Exclusive => top_exclusive(w, &convs, conv_names),
            ConvMode::Shared => top_shared(w, spec, &convs, &conv_names[0].2),
        }
    }
    let _ = writeln!(w, "endmodule");
    s
}

fn conv_ports(prefix: &str) -> [String; 3] {
    [
        format!(".win_data({prefix}win), .win_valid({prefix}win_valid), .win_ready({prefix}win_ready),"),
        format!(".filt_data({prefix}filt), .filt_valid({prefix}filt_valid), .filt_ready({prefix}filt_ready),"),
        format!(".acc_seed({prefix}seed), .row_data({prefix}row), .row_valid({prefix}row_valid), .row_ready({prefix}row_ready)"),
    ]
}

fn top_exclusive(w: &mut String, convs: &[usize], conv_names: &[(usize, usize, String)]) {
    let _ = writeln!(w, "    // one convolution unit per conv layer");
    for (&i, (_, _, name)) in convs.iter().zip(conv_names) {
        let _ = writeln!(w, "    assign w{i}_grant = 1'b1;");
        let _ = writeln!(w, "    {name} u_conv_l{i} (");
        let _ = writeln!(w, "        .clk(clk), .rst(rst),");
        for line in conv_ports(&format!("w{i}_")) {
            let _ = writeln!(w, "        {line}");
        }
        let _ = writeln!(w, "    );");
    }
}

fn top_shared(w: &mut String, spec: &NetworkSpec, convs: &[usize], name: &str) {
    let n = convs.len();
    let k = conv_kernel(spec, convs[0]);
    // Bus order puts the lowest layer at bit 0, the arbiter's top priority.
    let bus = |field: &str| -> String {
        let parts: Vec<String> = convs.iter().rev().map(|i| format!("w{i}_{field}")).collect();
        format!("{{{}}}", parts.join(", "))
    };
    let mux = |field: &str, bits: &str| -> String {
        convs
            .iter()
            .enumerate()
            .map(|(c, i)| format!("({{{bits}{{conv_grant[{c}]}}}} & w{i}_{field})"))
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let kkw = format!("{k}*{k}*W");
    let _ = writeln!(w, "    // one convolution unit shared through a fixed-priority arbiter");
    let _ = writeln!(w, "    wire [{n}-1:0] conv_req = {};", bus("req"));
    let _ = writeln!(w, "    wire [{n}-1:0] conv_grant;");
    let _ = writeln!(w, "    conv_arbiter #(.N({n})) u_arbiter (.clk(clk), .rst(rst), .req(conv_req), .grant(conv_grant));");
    let _ = writeln!(w, "    wire [{kkw}-1:0] cu_win = {};", mux("win", &kkw));
    let _ = writeln!(w, "    wire [{kkw}-1:0] cu_filt = {};", mux("filt", &kkw));
    let _ = writeln!(w, "    wire [ACC_W-1:0] cu_seed = {};", mux("seed", "ACC_W"));
    let _ = writeln!(w, "    wire cu_win_valid = |(conv_grant & {});", bus("win_valid"));
    let _ = writeln!(w, "    wire cu_filt_valid = |(conv_grant & {});", bus("filt_valid"));
    let _ = writeln!(w, "    wire cu_row_ready = |(conv_grant & {});", bus("row_ready"));
    let _ = writeln!(w, "    wire cu_win_ready;");
    let _ = writeln!(w, "    wire cu_filt_ready;");
    let _ = writeln!(w, "    wire [ACC_W-1:0] cu_row;");
    let _ = writeln!(w, "    wire cu_row_valid;");
    for (c, i) in convs.iter().enumerate() {
        let _ = writeln!(w, "    assign w{i}_grant = conv_grant[{c}];");
        let _ = writeln!(w, "    assign w{i}_win_ready = conv_grant[{c}] & cu_win_ready;");
        let _ = writeln!(w, "    assign w{i}_filt_ready = conv_grant[{c}] & cu_filt_ready;");
        let _ = writeln!(w, "    assign w{i}_row = cu_row;");
        let _ = writeln!(w, "    assign w{i}_row_valid = conv_grant[{c}] & cu_row_valid;");
    }
    let _ = writeln!(w, "    {name} u_conv (");
    let _ = writeln!(w, "        .clk(clk), .rst(rst),");
    for line in conv_ports("cu_") {
        let _ = writeln!(w, "        {line}");
    }
    let _ = writeln!(w, "    );");
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Render, lint and write the design under `out`.
pub fn emit_all(plan: &EmitPlan, out: &Path) -> Result<EmitManifest> {
    let files = render(plan)?;
    let issues = lint_tree(&files);
    if !issues.is_empty() {
        let list: Vec<String> = issues.iter().map(|i| format!("{}: {}", i.file, i.message)).collect();
        return Err(Error::invalid(format!("emitted design failed lint:\n{}", list.join("\n"))));
    }
    let mut entries = Vec::with_capacity(files.len());
    for (path, text) in &files {
        write_bytes(&out.join(path), text.as_bytes())?;
        entries.push(ManifestFile {
            path: path.clone(),
            sha256: sha256_hex(text.as_bytes()),
        });
    }
    let manifest = EmitManifest {
        files: entries,
        qplan: plan.qplan.clone(),
        config: EmitConfig {
            device: plan.device.clone(),
            width: plan.width(),
            hardware: plan.hardware.clone(),
        },
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
