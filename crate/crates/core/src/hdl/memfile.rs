//! `$readmemh` word files: one two's-complement word per line.

use crate::error::{Error, Result};
use crate::fixed::QFormat;

/// Hex digits per word for a `width`-bit raw.
pub fn digits(width: u32) -> usize {
    width.div_ceil(4) as usize
}

fn check_raw(raw: i64, width: u32) -> Result<()> {
    let fmt = QFormat::new(width, 0)?;
    if fmt.contains_raw(raw) {
        Ok(())
    } else {
        Err(Error::RawOutOfRange { raw, width })
    }
}

pub fn emit_memfile(raws: &[i64], width: u32) -> Result<String> {
    let n = digits(width);
    let mask = (1u64 << width) - 1;
    let mut text = String::with_capacity(raws.len() * (n + 1));
    for &raw in raws {
        check_raw(raw, width)?;
        let word = raw as u64 & mask;
        text.push_str(&format!("{word:0n$x}\n"));
    }
    Ok(text)
}

pub fn parse_memfile(text: &str, width: u32) -> Result<Vec<i64>> {
    QFormat::new(width, 0)?;
    let n = digits(width);
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let bad = |why: &str| Error::invalid(format!("memfile line {}: {why}: {line:?}", i + 1));
            if line.len() != n || !line.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
                return Err(bad(&format!("expected {n} lowercase hex digits")));
            }
            let word = u64::from_str_radix(line, 16).map_err(|_| bad("not hex"))?;
            if word >> width != 0 {
                return Err(bad(&format!("word exceeds {width} bits")));
            }
            let shift = 64 - width;
            Ok(((word << shift) as i64) >> shift)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(emit_memfile(&[0], 16).unwrap(), "0000\n");
        assert_eq!(emit_memfile(&[-1], 16).unwrap(), "ffff\n");
        assert_eq!(emit_memfile(&[-1, 5], 6).unwrap(), "3f\n05\n");
        assert_eq!(emit_memfile(&[-(1 << 31)], 32).unwrap(), "80000000\n");
        assert_eq!(emit_memfile(&[], 16).unwrap(), "");
        assert!(matches!(emit_memfile(&[32768], 16), Err(Error::RawOutOfRange { .. })));
    }

    #[test]
    fn parse_rejects_junk() {
        assert_eq!(parse_memfile("ffff\n8000\n7fff\n", 16).unwrap(), vec![-1, -32768, 32767]);
        assert!(parse_memfile("FFFF\n", 16).is_err());
        assert!(parse_memfile("fff\n", 16).is_err());
        assert!(parse_memfile("7f\n", 6).is_err());
    }
}
