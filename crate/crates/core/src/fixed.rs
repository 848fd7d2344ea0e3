//! Signed two's-complement fixed-point arithmetic.
//!
//! A [`QFormat`] with width `W` and `F` fraction bits stores `raw * 2^-F` in
//! a `W`-bit word with one sign bit and `I = W - 1 - F` integer bits.
//! Rounding is half away from zero everywhere and overflow saturates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_WIDTH: u32 = 2;
pub const MAX_WIDTH: u32 = 32;
pub const DEFAULT_WIDTH: u32 = 16;
/// DSP48-style accumulator width used for words up to 16 bits.
pub const DSP_ACC_BITS: u32 = 48;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QFormat {
    pub width: u32,
    pub frac_bits: u32,
}

impl QFormat {
    pub fn new(width: u32, frac_bits: u32) -> Result<Self> {
        if !(MIN_WIDTH..=MAX_WIDTH).contains(&width) {
            return Err(Error::invalid(format!(
                "fixed-point width must be in {MIN_WIDTH}..={MAX_WIDTH}, got {width}"
            )));
        }
        if frac_bits >= width {
            return Err(Error::invalid(format!(
                "fraction bits {frac_bits} leave no sign bit in a {width}-bit word"
            )));
        }
        Ok(Self { width, frac_bits })
    }

    pub fn int_bits(&self) -> u32 {
        self.width - 1 - self.frac_bits
    }

    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.width - 1)) - 1
    }

    pub fn min_raw(&self) -> i64 {
        -(1i64 << (self.width - 1))
    }

    pub fn resolution(&self) -> f64 {
        (-f64::from(self.frac_bits)).exp2()
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.resolution()
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 * self.resolution()
    }

    pub fn contains_raw(&self, raw: i64) -> bool {
        (self.min_raw()..=self.max_raw()).contains(&raw)
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{} (W={})", self.int_bits(), self.frac_bits, self.width)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FixedValue {
    pub raw: i64,
    pub format: QFormat,
}

impl FixedValue {
    pub fn to_f64(self) -> f64 {
        dequantize(self)
    }
}

/// Tally of saturating conversions. Each caller owns its counter; merge
/// per-thread counters with [`SaturationCounter::merge`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaturationCounter {
    pub saturated: u64,
    pub total: u64,
}

impl SaturationCounter {
    pub fn record(&mut self, saturated: bool) {
        self.total += 1;
        self.saturated += u64::from(saturated);
    }

    pub fn merge(&mut self, other: SaturationCounter) {
        self.saturated += other.saturated;
        self.total += other.total;
    }
}

/// Clamp to the `width`-bit two's-complement range.
pub fn saturate(raw: i128, width: u32) -> (i64, bool) {
    let max = (1i128 << (width - 1)) - 1;
    let min = -(1i128 << (width - 1));
    if raw > max {
        (max as i64, true)
    } else if raw < min {
        (min as i64, true)
    } else {
        (raw as i64, false)
    }
}

/// Arithmetic shift by `shift` bits (right when positive), rounding half
/// away from zero. Left shifts are exact.
pub fn shift_round(raw: i128, shift: i32) -> i128 {
    match shift {
        0 => raw,
        s if s < 0 => raw << (-s) as u32,
        s => {
            let half = 1i128 << (s - 1);
            if raw >= 0 {
                (raw + half) >> s
            } else {
                -((-raw + half) >> s)
            }
        }
    }
}

pub fn quantize_counted(x: f64, q: QFormat) -> (FixedValue, bool) {
    debug_assert!(x.is_finite(), "quantize of non-finite value");
    let scaled = (x * f64::from(q.frac_bits).exp2()).round();
    let (raw, sat) = if scaled > q.max_raw() as f64 {
        (q.max_raw(), true)
    } else if scaled < q.min_raw() as f64 {
        (q.min_raw(), true)
    } else {
        (scaled as i64, false)
    };
    (FixedValue { raw, format: q }, sat)
}

/// Round `x * 2^F` half away from zero and saturate into `W` bits.
pub fn quantize(x: f64, q: QFormat) -> FixedValue {
    quantize_counted(x, q).0
}

/// `raw * 2^-F`, exact in f64 for every width this crate supports.
pub fn dequantize(v: FixedValue) -> f64 {
    v.raw as f64 * v.format.resolution()
}

/// Pick the format for a weight array: enough integer bits to cover the
/// largest magnitude, the rest fraction.
pub fn choose_weight_format(values: &[f32], width: u32) -> Result<QFormat> {
    if values.is_empty() {
        return Err(Error::invalid("cannot choose a format for an empty value list"));
    }
    let max_abs = values.iter().fold(0.0f64, |m, &v| m.max(f64::from(v).abs()));
    if !max_abs.is_finite() {
        return Err(Error::invalid("cannot choose a format for non-finite values"));
    }
    let int_bits = if max_abs >= 1.0 {
        (max_abs.log2().floor() as u32 + 1).min(width - 1)
    } else {
        0
    };
    QFormat::new(width, width - 1 - int_bits)
}

/// Accumulator width for products of two `width`-bit words: the 48-bit DSP
/// accumulator up to 16-bit words, `2W + 16` beyond that.
pub fn accumulator_bits(width: u32) -> u32 {
    DSP_ACC_BITS.max(2 * width + 16)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Accumulator {
    pub raw: i128,
    pub frac_bits: u32,
    pub bits: u32,
}

impl Accumulator {
    pub fn zero(frac_bits: u32, bits: u32) -> Self {
        Self {
            raw: 0,
            frac_bits,
            bits,
        }
    }

    /// Accumulator sized for the product of two `width`-bit operands.
    pub fn for_product(a: QFormat, b: QFormat) -> Self {
        Self::zero(a.frac_bits + b.frac_bits, accumulator_bits(a.width.max(b.width)))
    }

    pub fn to_f64(self) -> f64 {
        self.raw as f64 * (-f64::from(self.frac_bits)).exp2()
    }
}

pub fn check_accumulator(raw: i128, bits: u32) -> Result<()> {
    let limit = 1i128 << (bits - 1);
    if raw >= limit || raw < -limit {
        Err(Error::AccumulatorOverflow { value: raw, bits })
    } else {
        Ok(())
    }
}

/// `acc += a * b`, exact. Fails when the sum leaves the accumulator range.
pub fn mac(acc: Accumulator, a: FixedValue, b: FixedValue) -> Result<Accumulator> {
    if acc.frac_bits != a.format.frac_bits + b.format.frac_bits {
        return Err(Error::invalid(format!(
            "accumulator has {} fraction bits, operands need {}",
            acc.frac_bits,
            a.format.frac_bits + b.format.frac_bits
        )));
    }
    let raw = acc.raw + i128::from(a.raw) * i128::from(b.raw);
    check_accumulator(raw, acc.bits)?;
    Ok(Accumulator { raw, ..acc })
}

pub fn requantize_counted(acc: Accumulator, out: QFormat) -> (FixedValue, bool) {
    let shift = acc.frac_bits as i32 - out.frac_bits as i32;
    let (raw, sat) = saturate(shift_round(acc.raw, shift), out.width);
    (FixedValue { raw, format: out }, sat)
}

/// The precision-adjust primitive: shift from the accumulator scale to
/// `out`, rounding half away from zero, then saturate.
pub fn requantize(acc: Accumulator, out: QFormat) -> FixedValue {
    requantize_counted(acc, out).0
}
