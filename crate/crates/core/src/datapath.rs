//! Bit-accurate behavioral models of the accelerator units.
//!
//! Every parameterized layer multiplies `W`-bit activations by `W`-bit
//! weights into a wide accumulator whose scale is `F_in + F_w`; biases are
//! stored as `W`-bit words and shifted left into that scale, so adding them
//! is exact. Each layer ends in a precision-adjust unit ([`adjust`]) that
//! rounds and saturates to the layer's activation format from the [`QPlan`].
//! The DSP count and shared/exclusive mode only affect timing, never values.

use std::path::Path;

use crate::binio::write_bytes;
use crate::error::{Error, Result};
use crate::fixed::{
    accumulator_bits, choose_weight_format, quantize, saturate, shift_round, QFormat,
    SaturationCounter,
};
use crate::model::{LayerSpec, NetworkSpec, TensorShape};
use crate::qplan::QPlan;
use crate::tensor::{argmax, Tensor};
use crate::weights::{LayerWeights, WeightBundle};

/// Tensor of `W`-bit raws sharing one format, channel-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedTensor {
    pub shape: TensorShape,
    pub raws: Vec<i64>,
    pub format: QFormat,
}

impl FixedTensor {
    pub fn quantize(t: &Tensor, format: QFormat, sat: &mut SaturationCounter) -> Self {
        let raws = t
            .data
            .iter()
            .map(|&x| {
                let (v, s) = crate::fixed::quantize_counted(f64::from(x), format);
                sat.record(s);
                v.raw
            })
            .collect();
        Self {
            shape: t.shape,
            raws,
            format,
        }
    }

    pub fn dequantize(&self) -> Vec<f64> {
        let r = self.format.resolution();
        self.raws.iter().map(|&raw| raw as f64 * r).collect()
    }

    pub fn at(&self, ch: usize, row: usize, col: usize) -> i64 {
        self.raws[self.shape.index(ch, row, col)]
    }
}

/// Pre-adjust layer output: wide accumulator values at one scale.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccTensor {
    pub shape: TensorShape,
    pub raws: Vec<i128>,
    pub frac_bits: u32,
}

impl AccTensor {
    /// View a fixed tensor as an accumulator at its own scale (parameter-free layers).
    pub fn from_fixed(t: &FixedTensor) -> Self {
        Self {
            shape: t.shape,
            raws: t.raws.iter().map(|&r| i128::from(r)).collect(),
            frac_bits: t.format.frac_bits,
        }
    }
}

/// Weights of one layer as ROM words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedLayer {
    pub weight_format: QFormat,
    pub weights: Vec<i64>,
    /// `None` when the layer has no bias.
    pub bias_format: Option<QFormat>,
    pub bias: Vec<i64>,
    /// Fraction bits of the MAC accumulator, `F_in + F_w`.
    pub acc_frac_bits: u32,
}

impl QuantizedLayer {
    /// Bias raw lifted to the accumulator scale.
    pub fn bias_at_acc(&self, index: usize) -> i128 {
        match self.bias_format {
            Some(bf) => i128::from(self.bias[index]) << (self.acc_frac_bits - bf.frac_bits),
            None => 0,
        }
    }

    /// All ROM words in address order: weights, then biases.
    pub fn rom_words(&self) -> Vec<i64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }
}

/// Bias word format: the analytic weight rule, capped so the bias never
/// carries more fraction bits than the accumulator.
pub fn bias_format(bias: &[f32], width: u32, acc_frac_bits: u32) -> Result<Option<QFormat>> {
    if bias.is_empty() {
        return Ok(None);
    }
    let f = choose_weight_format(bias, width)?;
    Ok(Some(QFormat::new(width, f.frac_bits.min(acc_frac_bits))?))
}

/// Quantize one layer's weights and biases for an input of format `input`.
pub fn quantize_layer(lw: &LayerWeights, weight_format: QFormat, input: QFormat) -> Result<QuantizedLayer> {
    let acc_frac_bits = input.frac_bits + weight_format.frac_bits;
    let bias_format = bias_format(&lw.bias, weight_format.width, acc_frac_bits)?;
    let weights = lw
        .weights
        .iter()
        .map(|&w| quantize(f64::from(w), weight_format).raw)
        .collect();
    let bias = match bias_format {
        Some(bf) => lw.bias.iter().map(|&b| quantize(f64::from(b), bf).raw).collect(),
        None => Vec::new(),
    };
    Ok(QuantizedLayer {
        weight_format,
        weights,
        bias_format,
        bias,
        acc_frac_bits,
    })
}

fn overflow_guard(raw: i128, limit: i128, bits: u32) -> Result<()> {
    if raw >= limit || raw < -limit {
        Err(Error::AccumulatorOverflow { value: raw, bits })
    } else {
        Ok(())
    }
}

/// Convolution MACs: same padding, stride 1, canonical tap order.
pub fn conv_accumulate(
    input: &FixedTensor,
    out_channels: usize,
    kernel: usize,
    q: &QuantizedLayer,
) -> Result<AccTensor> {
    let s = input.shape;
    let (h, w, cin) = (s.height, s.width, s.channels);
    if q.weights.len() != out_channels * cin * kernel * kernel {
        return Err(Error::invalid("conv weight count does not match the layer shape"));
    }
    if q.acc_frac_bits != input.format.frac_bits + q.weight_format.frac_bits {
        return Err(Error::invalid("accumulator scale must equal F_in + F_w"));
    }
    let bits = accumulator_bits(input.format.width.max(q.weight_format.width));
    let limit = 1i128 << (bits - 1);
    let pad = kernel / 2;
    let out_shape = TensorShape::new(h, w, out_channels);
    let mut raws = Vec::with_capacity(out_shape.len());
    for oc in 0..out_channels {
        for y in 0..h {
            // Kernel rows that stay inside the image for this output row.
            let ky_lo = pad.saturating_sub(y);
            let ky_hi = kernel.min(h + pad - y);
            for x in 0..w {
                let kx_lo = pad.saturating_sub(x);
                let kx_hi = kernel.min(w + pad - x);
                let mut acc = q.bias_at_acc(oc);
                for ic in 0..cin {
                    let wbase = (oc * cin + ic) * kernel * kernel;
                    let ibase = ic * h * w;
                    for ky in ky_lo..ky_hi {
                        let row = ibase + (y + ky - pad) * w;
                        for kx in kx_lo..kx_hi {
                            let a = input.raws[row + x + kx - pad];
                            let b = q.weights[wbase + ky * kernel + kx];
                            acc += i128::from(a * b);
                            overflow_guard(acc, limit, bits)?;
                        }
                    }
                }
                raws.push(acc);
            }
        }
    }
    Ok(AccTensor {
        shape: out_shape,
        raws,
        frac_bits: q.acc_frac_bits,
    })
}

/// Precision-adjust unit: round half away from zero and saturate to `out`.
pub fn adjust(acc: &AccTensor, out: QFormat, sat: &mut SaturationCounter) -> FixedTensor {
    let shift = acc.frac_bits as i32 - out.frac_bits as i32;
    let raws = acc
        .raws
        .iter()
        .map(|&r| {
            let (v, s) = saturate(shift_round(r, shift), out.width);
            sat.record(s);
            v
        })
        .collect();
    FixedTensor {
        shape: acc.shape,
        raws,
        format: out,
    }
}

pub fn conv_fixed(
    input: &FixedTensor,
    out_channels: usize,
    kernel: usize,
    q: &QuantizedLayer,
    out: QFormat,
    sat: &mut SaturationCounter,
) -> Result<FixedTensor> {
    Ok(adjust(&conv_accumulate(input, out_channels, kernel, q)?, out, sat))
}

/// `K` consecutive zero-padded rows of one input channel together with the
/// filter taps applied to them. Rows carry `(K-1)/2` zero columns per side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineWindow {
    /// Output row this window produces.
    pub row: usize,
    pub channel: usize,
    pub lines: Vec<Vec<i64>>,
    pub taps: Vec<i64>,
}

/// The feedforward unit's output side: one window per output row of
/// `channel`, read from the fully buffered fmap. With a 3x3 kernel each
/// window holds three lines and the first and last carry one zero pad row.
pub fn feed_windows(fmap: &FixedTensor, channel: usize, kernel: usize, taps: &[i64]) -> Vec<LineWindow> {
    let s = fmap.shape;
    let pad = kernel / 2;
    let padded_width = s.width + 2 * pad;
    let line = |r: isize| -> Vec<i64> {
        let mut out = vec![0; padded_width];
        if r >= 0 && (r as usize) < s.height {
            let start = s.index(channel, r as usize, 0);
            out[pad..pad + s.width].copy_from_slice(&fmap.raws[start..start + s.width]);
        }
        out
    };
    (0..s.height)
        .map(|row| LineWindow {
            row,
            channel,
            lines: (0..kernel)
                .map(|k| line(row as isize + k as isize - pad as isize))
                .collect(),
            taps: taps.to_vec(),
        })
        .collect()
}

/// Convolution unit applied to one window: per-pixel partial sums for the row.
pub fn convolve_window(window: &LineWindow) -> Vec<i128> {
    let kernel = window.lines.len();
    let width = window.lines[0].len() + 1 - kernel;
    (0..width)
        .map(|x| {
            let mut acc = 0i128;
            for (ky, line) in window.lines.iter().enumerate() {
                for kx in 0..kernel {
                    acc += i128::from(line[x + kx] * window.taps[ky * kernel + kx]);
                }
            }
            acc
        })
        .collect()
}

/// Convolution assembled from the feedforward/convolution unit pair:
/// for each output channel, windows of every input channel are convolved
/// and summed onto the bias.
pub fn conv_accumulate_windowed(
    input: &FixedTensor,
    out_channels: usize,
    kernel: usize,
    q: &QuantizedLayer,
) -> Result<AccTensor> {
    let s = input.shape;
    let bits = accumulator_bits(input.format.width.max(q.weight_format.width));
    let limit = 1i128 << (bits - 1);
    let out_shape = TensorShape::new(s.height, s.width, out_channels);
    let mut raws = vec![0i128; out_shape.len()];
    for oc in 0..out_channels {
        raws[oc * s.pixels()..(oc + 1) * s.pixels()].fill(q.bias_at_acc(oc));
        for ic in 0..s.channels {
            let k2 = kernel * kernel;
            let base = (oc * s.channels + ic) * k2;
            for window in feed_windows(input, ic, kernel, &q.weights[base..base + k2]) {
                for (x, partial) in convolve_window(&window).into_iter().enumerate() {
                    let slot = &mut raws[out_shape.index(oc, window.row, x)];
                    *slot += partial;
                    overflow_guard(*slot, limit, bits)?;
                }
            }
        }
    }
    Ok(AccTensor {
        shape: out_shape,
        raws,
        frac_bits: q.acc_frac_bits,
    })
}

pub fn relu_fixed(t: &FixedTensor) -> FixedTensor {
    FixedTensor {
        shape: t.shape,
        raws: t.raws.iter().map(|&r| r.max(0)).collect(),
        format: t.format,
    }
}

/// Window max with stride `size`; valid on raws because the whole tensor
/// shares one format.
pub fn maxpool_fixed(t: &FixedTensor, size: usize) -> Result<FixedTensor> {
    let s = t.shape;
    if size == 0 || !s.height.is_multiple_of(size) || !s.width.is_multiple_of(size) {
        return Err(Error::invalid(format!(
            "pool size {size} does not divide {}x{}",
            s.height, s.width
        )));
    }
    let out_shape = TensorShape::new(s.height / size, s.width / size, s.channels);
    let mut raws = Vec::with_capacity(out_shape.len());
    for c in 0..s.channels {
        for y in 0..out_shape.height {
            for x in 0..out_shape.width {
                let mut best = i64::MIN;
                for dy in 0..size {
                    for dx in 0..size {
                        best = best.max(t.at(c, y * size + dy, x * size + dx));
                    }
                }
                raws.push(best);
            }
        }
    }
    Ok(FixedTensor {
        shape: out_shape,
        raws,
        format: t.format,
    })
}

pub fn dense_accumulate(input: &FixedTensor, units: usize, q: &QuantizedLayer) -> Result<AccTensor> {
    let n = input.raws.len();
    if q.weights.len() != units * n {
        return Err(Error::invalid("dense weight count does not match the layer shape"));
    }
    if q.acc_frac_bits != input.format.frac_bits + q.weight_format.frac_bits {
        return Err(Error::invalid("accumulator scale must equal F_in + F_w"));
    }
    let bits = accumulator_bits(input.format.width.max(q.weight_format.width));
    let limit = 1i128 << (bits - 1);
    let mut raws = Vec::with_capacity(units);
    for o in 0..units {
        let row = &q.weights[o * n..(o + 1) * n];
        let mut acc = q.bias_at_acc(o);
        for (&w, &x) in row.iter().zip(&input.raws) {
            acc += i128::from(w * x);
            overflow_guard(acc, limit, bits)?;
        }
        raws.push(acc);
    }
    Ok(AccTensor {
        shape: TensorShape::flat(units),
        raws,
        frac_bits: q.acc_frac_bits,
    })
}

pub fn dense_fixed(
    input: &FixedTensor,
    units: usize,
    q: &QuantizedLayer,
    out: QFormat,
    sat: &mut SaturationCounter,
) -> Result<FixedTensor> {
    Ok(adjust(&dense_accumulate(input, units, q)?, out, sat))
}

/// Everything a layer computes before its precision-adjust unit.
pub fn accumulate_layer(layer: &LayerSpec, input: &FixedTensor, q: Option<&QuantizedLayer>) -> Result<AccTensor> {
    let need_q = || q.ok_or_else(|| Error::invalid(format!("{} layer needs quantized weights", layer.kind())));
    match *layer {
        LayerSpec::Conv2d {
            out_channels,
            kernel,
            ..
        } => conv_accumulate(input, out_channels, kernel, need_q()?),
        LayerSpec::Dense { units, .. } => dense_accumulate(input, units, need_q()?),
        LayerSpec::Relu => Ok(AccTensor::from_fixed(&relu_fixed(input))),
        LayerSpec::MaxPool { size } => Ok(AccTensor::from_fixed(&maxpool_fixed(input, size)?)),
        LayerSpec::Flatten => {
            let mut t = AccTensor::from_fixed(input);
            t.shape = TensorShape::flat(input.raws.len());
            Ok(t)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedTrace {
    pub outputs: Vec<FixedTensor>,
    pub class: usize,
    /// Saturations in each layer's precision-adjust unit.
    pub saturation: Vec<SaturationCounter>,
    pub input_saturation: SaturationCounter,
}

/// Network with weights quantized once for a given plan.
#[derive(Clone, Debug)]
pub struct FixedModel<'a> {
    pub spec: &'a NetworkSpec,
    pub plan: QPlan,
    /// Indexed by network layer; `None` for parameter-free layers.
    pub layers: Vec<Option<QuantizedLayer>>,
}

impl<'a> FixedModel<'a> {
    pub fn new(spec: &'a NetworkSpec, weights: &WeightBundle, plan: &QPlan) -> Result<Self> {
        plan.validate(spec)?;
        let layers = (0..spec.layers.len())
            .map(|i| match (weights.for_layer(i), plan.layers[i].weight) {
                (Some(lw), Some(wf)) => quantize_layer(lw, wf, plan.input_format_of(i)).map(Some),
                (None, None) => Ok(None),
                _ => Err(Error::Weights {
                    layer: i,
                    message: "weights and qplan disagree on parameterized layers".into(),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            plan: plan.clone(),
            layers,
        })
    }

    pub fn forward(&self, image: &Tensor) -> Result<FixedTrace> {
        if image.shape != self.spec.input_shape {
            return Err(Error::invalid(format!(
                "image shape {} does not match network input {}",
                image.shape, self.spec.input_shape
            )));
        }
        let mut input_saturation = SaturationCounter::default();
        let input = FixedTensor::quantize(image, self.plan.input, &mut input_saturation);
        let mut outputs: Vec<FixedTensor> = Vec::with_capacity(self.spec.layers.len());
        let mut saturation = Vec::with_capacity(self.spec.layers.len());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let prev = outputs.last().unwrap_or(&input);
            let acc = accumulate_layer(layer, prev, self.layers[i].as_ref())?;
            let mut sat = SaturationCounter::default();
            outputs.push(adjust(&acc, self.plan.layers[i].activation, &mut sat));
            saturation.push(sat);
        }
        let class = argmax(&outputs.last().expect("non-empty network").raws);
        Ok(FixedTrace {
            outputs,
            class,
            saturation,
            input_saturation,
        })
    }
}

/// Quantize the input, run every unit, requantize after each layer.
pub fn forward_fixed(spec: &NetworkSpec, weights: &WeightBundle, plan: &QPlan, image: &Tensor) -> Result<FixedTrace> {
    FixedModel::new(spec, weights, plan)?.forward(image)
}

/// Write `fixed_layer{l}.bin` for a batch of traces (`[N][shape]`, raws as
/// little-endian two's complement: 16-bit words up to `W = 16`, 32-bit above)
/// plus the plan as `qplan.json`.
pub fn export_fixed_traces(dir: &Path, plan: &QPlan, traces: &[FixedTrace]) -> Result<()> {
    let layers = traces.first().map_or(0, |t| t.outputs.len());
    for l in 0..layers {
        let mut bytes = Vec::new();
        for t in traces {
            for &raw in &t.outputs[l].raws {
                if plan.width <= 16 {
                    bytes.extend_from_slice(&(raw as i16).to_le_bytes());
                } else {
                    bytes.extend_from_slice(&(raw as i32).to_le_bytes());
                }
            }
        }
        write_bytes(&dir.join(format!("fixed_layer{l}.bin")), &bytes)?;
    }
    plan.save(&dir.join("qplan.json"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::random_images;

    fn q(w: u32, f: u32) -> QFormat {
        QFormat::new(w, f).unwrap()
    }

    fn fixed(shape: TensorShape, raws: Vec<i64>, f: u32) -> FixedTensor {
        FixedTensor {
            shape,
            raws,
            format: q(16, f),
        }
    }

    fn layer_q(weights: Vec<i64>, wf: u32, in_f: u32, bias: Vec<i64>) -> QuantizedLayer {
        QuantizedLayer {
            weight_format: q(16, wf),
            weights,
            bias_format: if bias.is_empty() { None } else { Some(q(16, wf)) },
            bias,
            acc_frac_bits: in_f + wf,
        }
    }

    #[test]
    fn zero_conv_gives_zeros() {
        let input = fixed(TensorShape::new(4, 4, 2), vec![0; 32], 8);
        let ql = layer_q(vec![0; 3 * 2 * 9], 8, 8, vec![0; 3]);
        let mut sat = SaturationCounter::default();
        let out = conv_fixed(&input, 3, 3, &ql, q(16, 8), &mut sat).unwrap();
        assert!(out.raws.iter().all(|&r| r == 0));
        assert_eq!(sat.saturated, 0);
    }

    #[test]
    fn delta_kernel_passes_input_through() {
        let shape = TensorShape::new(3, 4, 1);
        let raws: Vec<i64> = (0..12).map(|i| i * 37 - 200).collect();
        let input = fixed(shape, raws.clone(), 8);
        let mut taps = vec![0; 9];
        taps[4] = 1 << 14; // 1.0 at F=14
        let ql = layer_q(taps, 14, 8, vec![]);
        let out = conv_fixed(&input, 1, 3, &ql, q(16, 8), &mut SaturationCounter::default()).unwrap();
        assert_eq!(out.raws, raws);
    }

    #[test]
    fn window_structure() {
        let shape = TensorShape::new(4, 2, 1);
        let t = fixed(shape, (1..=8).collect(), 0);
        let wins = feed_windows(&t, 0, 3, &[0; 9]);
        assert_eq!(wins.len(), 4);
        assert_eq!(wins[0].lines, vec![vec![0, 0, 0, 0], vec![0, 1, 2, 0], vec![0, 3, 4, 0]]);
        assert_eq!(wins[3].lines[2], vec![0, 0, 0, 0]);

        let one = fixed(TensorShape::new(1, 3, 1), vec![5, 6, 7], 0);
        let wins = feed_windows(&one, 0, 3, &[0; 9]);
        assert_eq!(wins.len(), 1);
        assert_eq!(wins[0].lines, vec![vec![0; 5], vec![0, 5, 6, 7, 0], vec![0; 5]]);
    }

    #[test]
    fn relu_and_pool_basics() {
        let t = fixed(TensorShape::new(1, 2, 1), vec![-5, 17], 4);
        assert_eq!(relu_fixed(&t).raws, vec![0, 17]);
        assert_eq!(relu_fixed(&relu_fixed(&t)), relu_fixed(&t));

        let t = fixed(TensorShape::new(2, 2, 1), vec![1, 9, 3, 7], 4);
        assert_eq!(maxpool_fixed(&t, 2).unwrap().raws, vec![9]);
        let c = fixed(TensorShape::new(4, 4, 2), vec![-3; 32], 4);
        let p = maxpool_fixed(&c, 2).unwrap();
        assert_eq!(p.shape, TensorShape::new(2, 2, 2));
        assert!(p.raws.iter().all(|&r| r == -3));
        assert!(maxpool_fixed(&fixed(TensorShape::new(3, 3, 1), vec![0; 9], 0), 2).is_err());
    }

    #[test]
    fn dense_zero_weights_give_requantized_bias() {
        let input = fixed(TensorShape::flat(3), vec![100, -7, 3], 8);
        // bias 0.5 and -0.25 at F=12
        let ql = layer_q(vec![0; 6], 12, 8, vec![2048, -1024]);
        let out = dense_fixed(&input, 2, &ql, q(16, 8), &mut SaturationCounter::default()).unwrap();
        assert_eq!(out.raws, vec![128, -64]);
    }

    #[test]
    fn one_hot_dense_permutes() {
        let input = fixed(TensorShape::flat(3), vec![11, -22, 33], 8);
        let one = 1 << 10;
        let ql = layer_q(vec![0, 0, one, one, 0, 0, 0, one, 0], 10, 8, vec![]);
        let out = dense_fixed(&input, 3, &ql, q(16, 8), &mut SaturationCounter::default()).unwrap();
        assert_eq!(out.raws, vec![33, 11, -22]);
    }

    #[test]
    fn overflow_is_reported() {
        // 2^18 products of 2^30 reach 2^48, past the 48-bit accumulator.
        let n = 1 << 18;
        let huge = QuantizedLayer {
            acc_frac_bits: 0,
            bias_format: None,
            bias: vec![],
            weight_format: q(16, 0),
            weights: vec![-(1 << 15); n],
        };
        let wide = FixedTensor {
            shape: TensorShape::flat(n),
            raws: vec![-(1 << 15); n],
            format: q(16, 0),
        };
        assert!(matches!(
            dense_accumulate(&wide, 1, &huge),
            Err(Error::AccumulatorOverflow { bits: 48, .. })
        ));
        let short = FixedTensor {
            shape: TensorShape::flat(1024),
            raws: vec![-(1 << 15); 1024],
            format: q(16, 0),
        };
        let ok = QuantizedLayer {
            weights: vec![-(1 << 15); 1024],
            ..huge
        };
        assert_eq!(dense_accumulate(&short, 1, &ok).unwrap().raws, vec![1i128 << 40]);
    }

    #[test]
    fn forward_zero_network() {
        let spec = NetworkSpec::from_manifest_str(include_str!("../../../models/table1/manifest.json")).unwrap();
        let w = WeightBundle::zeros(&spec);
        let plan = QPlan::mid_split(&spec, &w, 16).unwrap();
        let trace = forward_fixed(&spec, &w, &plan, &Tensor::zeros(spec.input_shape)).unwrap();
        assert_eq!(trace.class, 0);
        assert!(trace.outputs.iter().all(|t| t.raws.iter().all(|&r| r == 0)));
    }

    #[test]
    fn bias_is_stored_in_word_width() {
        let lw = LayerWeights {
            layer: 0,
            weights: vec![0.25, -0.5],
            bias: vec![3.2],
        };
        let ql = quantize_layer(&lw, q(16, 15), q(16, 10)).unwrap();
        assert_eq!(ql.acc_frac_bits, 25);
        let bf = ql.bias_format.unwrap();
        assert_eq!(bf.frac_bits, 13);
        assert!(bf.contains_raw(ql.bias[0]));
        assert_eq!(ql.bias_at_acc(0), i128::from(ql.bias[0]) << 12);
        // Accumulator with few fraction bits caps the bias format.
        let ql = quantize_layer(&lw, q(16, 2), q(16, 1)).unwrap();
        assert_eq!(ql.bias_format.unwrap().frac_bits, 3);
    }

    #[test]
    fn export_writes_word_sized_files() {
        let spec = NetworkSpec {
            name: "e".into(),
            input_shape: TensorShape::new(2, 2, 1),
            layers: vec![LayerSpec::Relu],
            shapes: vec![],
        }
        .infer_shapes()
        .unwrap();
        let w = WeightBundle::zeros(&spec);
        let plan = QPlan::uniform(&spec, &w, 16, 15).unwrap();
        let traces: Vec<_> = random_images(spec.input_shape, 3, 1)
            .iter()
            .map(|img| forward_fixed(&spec, &w, &plan, img).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        export_fixed_traces(dir.path(), &plan, &traces).unwrap();
        let bytes = std::fs::read(dir.path().join("fixed_layer0.bin")).unwrap();
        assert_eq!(bytes.len(), 3 * 4 * 2);
        let first = i16::from_le_bytes([bytes[0], bytes[1]]);
        assert_eq!(i64::from(first), traces[0].outputs[0].raws[0]);
        assert_eq!(QPlan::load(&dir.path().join("qplan.json")).unwrap(), plan);
    }
}
