//! Reference oracles and generators shared by the integration suites.
//!
//! The oracles compute every output as an exact rational, round it once
//! with `BigRational::round` (half away from zero) and clamp. They share no
//! code with the crate's shift/round path.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tinycnn_core::datapath::{FixedTensor, QuantizedLayer};
use tinycnn_core::fixed::QFormat;
use tinycnn_core::model::{LayerSpec, NetworkSpec, TensorShape};

pub fn pow2(exp: i64) -> BigRational {
    let two = BigRational::from_integer(BigInt::from(2));
    if exp >= 0 {
        (0..exp).fold(BigRational::one(), |acc, _| acc * &two)
    } else {
        BigRational::one() / pow2(-exp)
    }
}

pub fn ratio(raw: i128, frac_bits: u32) -> BigRational {
    BigRational::from_integer(BigInt::from(raw)) * pow2(-i64::from(frac_bits))
}

/// Exact value to raw of `out`: one rounding, then clamp.
pub fn to_raw(value: &BigRational, out: QFormat) -> i64 {
    let scaled = (value * pow2(i64::from(out.frac_bits))).round();
    let max = BigRational::from_integer(BigInt::from((1i64 << (out.width - 1)) - 1));
    let min = BigRational::from_integer(BigInt::from(-(1i64 << (out.width - 1))));
    let clamped = if scaled > max {
        max
    } else if scaled < min {
        min
    } else {
        scaled
    };
    clamped.to_integer().to_i64().unwrap()
}

fn bias_value(q: &QuantizedLayer, index: usize) -> BigRational {
    match q.bias_format {
        Some(bf) => ratio(i128::from(q.bias[index]), bf.frac_bits),
        None => BigRational::zero(),
    }
}

pub fn oracle_conv(input: &FixedTensor, out_channels: usize, kernel: usize, q: &QuantizedLayer, out: QFormat) -> Vec<i64> {
    let s = input.shape;
    let (h, w, cin) = (s.height as i64, s.width as i64, s.channels);
    let pad = (kernel / 2) as i64;
    let mut result = Vec::new();
    for oc in 0..out_channels {
        for y in 0..h {
            for x in 0..w {
                let mut total = bias_value(q, oc);
                for ic in 0..cin {
                    for ky in 0..kernel as i64 {
                        for kx in 0..kernel as i64 {
                            let (r, c) = (y + ky - pad, x + kx - pad);
                            if r < 0 || c < 0 || r >= h || c >= w {
                                continue;
                            }
                            let a = input.raws[(ic as i64 * h * w + r * w + c) as usize];
                            let widx = ((oc * cin + ic) as i64 * kernel as i64 + ky) * kernel as i64 + kx;
                            let b = q.weights[widx as usize];
                            total += ratio(i128::from(a), input.format.frac_bits)
                                * ratio(i128::from(b), q.weight_format.frac_bits);
                        }
                    }
                }
                result.push(to_raw(&total, out));
            }
        }
    }
    result
}

pub fn oracle_dense(input: &FixedTensor, units: usize, q: &QuantizedLayer, out: QFormat) -> Vec<i64> {
    let n = input.raws.len();
    (0..units)
        .map(|o| {
            let mut total = bias_value(q, o);
            for i in 0..n {
                total += ratio(i128::from(input.raws[i]), input.format.frac_bits)
                    * ratio(i128::from(q.weights[o * n + i]), q.weight_format.frac_bits);
            }
            to_raw(&total, out)
        })
        .collect()
}

pub fn oracle_maxpool(input: &FixedTensor, size: usize) -> Vec<i64> {
    let s = input.shape;
    let mut result = Vec::new();
    for ch in 0..s.channels {
        for oy in 0..s.height / size {
            for ox in 0..s.width / size {
                let mut best = None;
                for dy in 0..size {
                    for dx in 0..size {
                        let v = input.raws[(ch * s.height + oy * size + dy) * s.width + ox * size + dx];
                        best = Some(best.map_or(v, |b: i64| b.max(v)));
                    }
                }
                result.push(best.unwrap());
            }
        }
    }
    result
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_raws(rng: &mut impl Rng, n: usize, width: u32) -> Vec<i64> {
    let lim = 1i64 << (width - 1);
    (0..n).map(|_| rng.random_range(-lim..lim)).collect()
}

pub fn random_fixed(rng: &mut impl Rng, shape: TensorShape, format: QFormat) -> FixedTensor {
    FixedTensor {
        shape,
        raws: random_raws(rng, shape.len(), format.width),
        format,
    }
}

/// Random quantized layer with `n_weights` taps and `n_bias` biases. The
/// bias format never exceeds the accumulator scale, and a bias is never
/// larger than the largest possible product (as with real weights).
pub fn random_qlayer(rng: &mut impl Rng, n_weights: usize, n_bias: usize, width: u32, input: QFormat) -> QuantizedLayer {
    let weight_format = QFormat::new(width, rng.random_range(0..width)).unwrap();
    let acc_frac_bits = input.frac_bits + weight_format.frac_bits;
    let coarsest = acc_frac_bits.saturating_sub(width - 1);
    let finest = acc_frac_bits.min(width - 1);
    let bias_format = (n_bias > 0).then(|| QFormat::new(width, rng.random_range(coarsest..=finest)).unwrap());
    QuantizedLayer {
        weight_format,
        weights: random_raws(rng, n_weights, width),
        bias_format,
        bias: random_raws(rng, n_bias, width),
        acc_frac_bits,
    }
}

pub fn net(name: &str, input: TensorShape, layers: Vec<LayerSpec>) -> NetworkSpec {
    NetworkSpec {
        name: name.into(),
        input_shape: input,
        layers,
        shapes: Vec::new(),
    }
    .infer_shapes()
    .unwrap()
}

/// Small classifier: one or two conv blocks, flatten, one or two dense
/// layers. Every dimension stays at or below 16.
pub fn random_small_net(rng: &mut impl Rng, index: usize) -> NetworkSpec {
    let side = [4, 8, 16][rng.random_range(0..3)];
    let input = TensorShape::new(side, side, rng.random_range(1..=3));
    let mut layers = Vec::new();
    let mut cur = side;
    for _ in 0..rng.random_range(1..=2) {
        layers.push(LayerSpec::conv(rng.random_range(1..=8), [1, 3, 5][rng.random_range(0..3)]));
        layers.push(LayerSpec::Relu);
        if cur >= 4 && rng.random_bool(0.7) {
            layers.push(LayerSpec::MaxPool { size: 2 });
            cur /= 2;
        }
    }
    layers.push(LayerSpec::Flatten);
    if rng.random_bool(0.5) {
        layers.push(LayerSpec::dense(rng.random_range(4..=16)));
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::dense(rng.random_range(2..=10)));
    net(&format!("small{index}"), input, layers)
}

pub fn table1() -> NetworkSpec {
    NetworkSpec::from_manifest_str(include_str!("../../../../models/table1/manifest.json")).unwrap()
}

pub fn workspace_root() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}
