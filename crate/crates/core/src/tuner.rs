//! Per-layer precision adjustment.
//!
//! Coordinate descent over the activation fraction bits. Layers are visited
//! front to back; for each one every `F` in `0..W` is tried with all other
//! formats held, and the value minimizing the normalized squared error of
//! that layer's output against the float references is kept (larger `F`
//! wins ties). A layer's output depends only on upstream formats, so the
//! sweep reuses the layer's accumulator values and only re-runs the
//! precision-adjust step per candidate. Passes repeat until one changes
//! nothing or `max_passes` is reached.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datapath::{accumulate_layer, adjust, quantize_layer, AccTensor, FixedModel, FixedTensor, FixedTrace};
use crate::error::{Error, Result};
use crate::fixed::{quantize, saturate, shift_round, QFormat, SaturationCounter};
use crate::model::NetworkSpec;
use crate::qplan::{weight_formats, QPlan};
use crate::reference::{classification_agreement, VerificationSet};
use crate::tensor::Tensor;
use crate::weights::WeightBundle;

/// Denominator floor for NMSE.
pub const NMSE_FLOOR: f64 = 1e-12;
/// Relative tolerance under which two NMSE values count as tied.
pub const TIE_EPSILON: f64 = 1e-9;
pub const DEFAULT_MAX_PASSES: usize = 5;

/// Running `Σ(x - ref)²` and `Σ ref²`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorSum {
    pub err: f64,
    pub energy: f64,
}

impl ErrorSum {
    pub fn add(&mut self, value: f64, reference: f64) {
        let d = value - reference;
        self.err += d * d;
        self.energy += reference * reference;
    }

    pub fn merge(mut self, other: ErrorSum) -> Self {
        self.err += other.err;
        self.energy += other.energy;
        self
    }

    pub fn nmse(&self) -> f64 {
        self.err / self.energy.max(NMSE_FLOOR)
    }
}

/// NMSE of dequantized fixed outputs against float references over a set.
pub fn layer_error(fixed_out: &[Vec<f64>], float_ref: &[Vec<f32>]) -> Result<f64> {
    if fixed_out.len() != float_ref.len() {
        return Err(Error::invalid(format!(
            "layer_error: {} fixed tensors vs {} references",
            fixed_out.len(),
            float_ref.len()
        )));
    }
    let mut sum = ErrorSum::default();
    for (f, r) in fixed_out.iter().zip(float_ref) {
        if f.len() != r.len() {
            return Err(Error::invalid(format!(
                "layer_error: tensor of {} elements vs reference of {}",
                f.len(),
                r.len()
            )));
        }
        for (&x, &y) in f.iter().zip(r) {
            sum.add(x, f64::from(y));
        }
    }
    Ok(sum.nmse())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub pass: usize,
    pub input_f: u32,
    /// Activation fraction bits after this pass, per layer.
    pub activation_f: Vec<u32>,
    /// Layers whose format changed in this pass.
    pub changed: Vec<usize>,
    pub layer_nmse: Vec<f64>,
    pub final_nmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub qplan: QPlan,
    pub passes: Vec<PassRecord>,
    pub pass_count: usize,
    pub converged: bool,
    pub layer_nmse: Vec<f64>,
    pub final_nmse: f64,
    pub agreement: f64,
    pub input_saturation: SaturationCounter,
    pub saturation: Vec<SaturationCounter>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuneOptions {
    pub width: u32,
    pub max_passes: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            width: crate::fixed::DEFAULT_WIDTH,
            max_passes: DEFAULT_MAX_PASSES,
        }
    }
}

// Per-image sums are computed in parallel but folded in image order so the
// totals do not depend on the thread schedule.

/// Error of requantizing every accumulator tensor to `out`.
fn requantize_error(accs: &[AccTensor], refs: &[&[f32]], out: QFormat) -> ErrorSum {
    accs.par_iter()
        .zip(refs.par_iter())
        .map(|(acc, r)| {
            let shift = acc.frac_bits as i32 - out.frac_bits as i32;
            let res = out.resolution();
            let mut sum = ErrorSum::default();
            for (&raw, &y) in acc.raws.iter().zip(r.iter()) {
                let (v, _) = saturate(shift_round(raw, shift), out.width);
                sum.add(v as f64 * res, f64::from(y));
            }
            sum
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(ErrorSum::default(), ErrorSum::merge)
}

/// Error of quantizing the float inputs to `out`.
fn input_error(inputs: &[Tensor], out: QFormat) -> ErrorSum {
    inputs
        .par_iter()
        .map(|t| {
            let mut sum = ErrorSum::default();
            for &x in &t.data {
                sum.add(quantize(f64::from(x), out).to_f64(), f64::from(x));
            }
            sum
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(ErrorSum::default(), ErrorSum::merge)
}

/// Best fraction-bit count under `error_of`; ties go to the larger `F`.
fn best_format(width: u32, error_of: impl Fn(QFormat) -> ErrorSum) -> Result<(QFormat, f64)> {
    let candidates = (0..width)
        .map(|f| {
            let q = QFormat::new(width, f)?;
            Ok((q, error_of(q).nmse()))
        })
        .collect::<Result<Vec<_>>>()?;
    let min = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let tol = min * TIE_EPSILON;
    Ok(*candidates
        .iter()
        .rev()
        .find(|c| c.1 <= min + tol)
        .expect("at least one candidate"))
}

/// Run the coordinate-descent loop and report on the resulting plan.
pub fn tune(spec: &NetworkSpec, weights: &WeightBundle, verif: &VerificationSet, opts: TuneOptions) -> Result<TuneReport> {
    if verif.is_empty() {
        return Err(Error::invalid("verification set must be non-empty"));
    }
    if opts.max_passes == 0 {
        return Err(Error::invalid("max_passes must be >= 1"));
    }
    let width = opts.width;
    let wformats = weight_formats(spec, weights, width)?;
    let mut plan = QPlan::mid_split(spec, weights, width)?;
    let mut passes = Vec::new();
    let mut converged = false;

    for pass in 1..=opts.max_passes {
        let mut changed = Vec::new();
        let (input_q, _) = best_format(width, |q| input_error(&verif.inputs, q))?;
        let input_changed = input_q != plan.input;
        plan.input = input_q;
        let mut prev: Vec<FixedTensor> = verif
            .inputs
            .iter()
            .map(|t| FixedTensor::quantize(t, input_q, &mut SaturationCounter::default()))
            .collect();
        let mut layer_nmse = Vec::with_capacity(spec.layers.len());
        for (l, layer) in spec.layers.iter().enumerate() {
            let qlayer = match (weights.for_layer(l), wformats[l]) {
                (Some(lw), Some(wf)) => Some(quantize_layer(lw, wf, prev[0].format)?),
                _ => None,
            };
            let accs = prev
                .par_iter()
                .map(|input| accumulate_layer(layer, input, qlayer.as_ref()))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&[f32]> = verif
                .references
                .iter()
                .map(|r| r.outputs[l].data.as_slice())
                .collect();
            let (q, nmse) = best_format(width, |q| requantize_error(&accs, &refs, q))?;
            if q != plan.layers[l].activation {
                plan.layers[l].activation = q;
                changed.push(l);
            }
            layer_nmse.push(nmse);
            prev = accs
                .iter()
                .map(|acc| adjust(acc, q, &mut SaturationCounter::default()))
                .collect();
        }
        let final_nmse = *layer_nmse.last().expect("non-empty network");
        let done = changed.is_empty() && !input_changed;
        passes.push(PassRecord {
            pass,
            input_f: plan.input.frac_bits,
            activation_f: plan.layers.iter().map(|l| l.activation.frac_bits).collect(),
            changed,
            layer_nmse,
            final_nmse,
        });
        if done {
            converged = true;
            break;
        }
    }

    let mut report = evaluate_plan(spec, weights, verif, &plan)?;
    report.pass_count = passes.len();
    report.passes = passes;
    report.converged = converged;
    Ok(report)
}

/// Run the fixed engine for every verification input (parallel, order kept).
pub fn run_fixed(spec: &NetworkSpec, weights: &WeightBundle, verif: &VerificationSet, plan: &QPlan) -> Result<Vec<FixedTrace>> {
    let model = FixedModel::new(spec, weights, plan)?;
    verif
        .inputs
        .par_iter()
        .map(|img| model.forward(img))
        .collect()
}

/// One evaluation of `plan` with no adjustment.
pub fn evaluate_plan(spec: &NetworkSpec, weights: &WeightBundle, verif: &VerificationSet, plan: &QPlan) -> Result<TuneReport> {
    if verif.is_empty() {
        return Err(Error::invalid("verification set must be non-empty"));
    }
    let traces = run_fixed(spec, weights, verif, plan)?;
    evaluate_traces(spec, verif, plan, &traces)
}

pub fn evaluate_traces(spec: &NetworkSpec, verif: &VerificationSet, plan: &QPlan, traces: &[FixedTrace]) -> Result<TuneReport> {
    let n_layers = spec.layers.len();
    let mut sums = vec![ErrorSum::default(); n_layers];
    let mut saturation = vec![SaturationCounter::default(); n_layers];
    let mut input_saturation = SaturationCounter::default();
    for (trace, reference) in traces.iter().zip(&verif.references) {
        input_saturation.merge(trace.input_saturation);
        for l in 0..n_layers {
            let out = &trace.outputs[l];
            let res = out.format.resolution();
            for (&raw, &y) in out.raws.iter().zip(&reference.outputs[l].data) {
                sums[l].add(raw as f64 * res, f64::from(y));
            }
            saturation[l].merge(trace.saturation[l]);
        }
    }
    let layer_nmse: Vec<f64> = sums.iter().map(ErrorSum::nmse).collect();
    let fixed_classes: Vec<usize> = traces.iter().map(|t| t.class).collect();
    let agreement = classification_agreement(&fixed_classes, &verif.classes())?;
    Ok(TuneReport {
        qplan: plan.clone(),
        passes: Vec::new(),
        pass_count: 0,
        converged: true,
        final_nmse: *layer_nmse.last().expect("non-empty network"),
        layer_nmse,
        agreement,
        input_saturation,
        saturation,
    })
}
