//! Byte-level metadata tokenizer and the coefficient-string convention.

use std::collections::BTreeMap;

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
const BYTE_OFFSET: u32 = 2;
pub const VOCAB_SIZE: usize = 258;

/// Byte-level tokenization with a leading BOS; overlong strings truncate
/// to `max_len` with a warning.
pub fn tokenize(s: &str, max_len: usize) -> Vec<u32> {
    let mut ids = Vec::with_capacity(s.len().min(max_len) + 1);
    ids.push(BOS_ID);
    for b in s.bytes() {
        if ids.len() >= max_len {
            log::warn!("metadata string truncated to {max_len} tokens: {s:?}");
            break;
        }
        ids.push(b as u32 + BYTE_OFFSET);
    }
    ids
}

pub fn detokenize(ids: &[u32]) -> String {
    let bytes: Vec<u8> = ids
        .iter()
        .filter(|&&id| id >= BYTE_OFFSET)
        .map(|&id| (id - BYTE_OFFSET) as u8)
        .collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

/// Deterministic metadata string: family name then sorted `key=value`
/// coefficients with 6-significant-digit formatting.
pub fn format_metadata(family: &str, coefficients: &BTreeMap<String, f64>) -> String {
    let mut s = family.to_string();
    for (k, v) in coefficients {
        s.push(' ');
        s.push_str(k);
        s.push('=');
        s.push_str(&format!("{v:.5e}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let s = "burgers nu=1.00000e-3";
        let ids = tokenize(s, 64);
        assert_eq!(ids[0], BOS_ID);
        assert_eq!(detokenize(&ids), s);
    }

    #[test]
    fn identical_strings_identical_ids() {
        assert_eq!(tokenize("abc", 16), tokenize("abc", 16));
    }

    #[test]
    fn different_families_differ_in_tokens() {
        let a = tokenize("advection beta=4.00000e-1", 64);
        let b = tokenize("burgers nu=1.00000e-3", 64);
        assert_ne!(a, b);
    }

    #[test]
    fn truncation_caps_length() {
        let long = "x".repeat(500);
        let ids = tokenize(&long, 32);
        assert_eq!(ids.len(), 32);
    }

    #[test]
    fn metadata_format_is_sorted_and_fixed_width() {
        let mut c = BTreeMap::new();
        c.insert("nu".to_string(), 0.001);
        c.insert("beta".to_string(), 0.4);
        let s = format_metadata("demo", &c);
        assert_eq!(s, "demo beta=4.00000e-1 nu=1.00000e-3");
    }
}
