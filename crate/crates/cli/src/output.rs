//! CSV formatting and witness fingerprints.

use privregion::Channel64;
use sha2::{Digest, Sha256};

const SIG_DIGITS: usize = 9;

/// `v` with 9 significant digits in plain decimal notation (scientific for
/// very small or very large magnitudes), trailing zeros removed.
pub fn sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, v);
    let (_, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..=SIG_DIGITS as i32).contains(&exp) {
        return trim_mantissa(&sci);
    }
    let rounded: f64 = sci.parse().expect("round trip");
    let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
    trim(format!("{rounded:.decimals$}"))
}

fn trim(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn trim_mantissa(sci: &str) -> String {
    let (m, e) = sci.split_once('e').expect("exponent present");
    format!("{}e{e}", trim(m.to_string()))
}

/// First 16 hex digits of the SHA-256 of the channel's shape and entries,
/// each printed with 9 significant digits.
pub fn witness_hash(w: &Channel64) -> String {
    let mut h = Sha256::new();
    h.update(format!("{}x{}", w.rows(), w.cols()));
    for &p in w.probs() {
        h.update(b";");
        h.update(sig(p));
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}
