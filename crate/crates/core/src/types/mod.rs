//! Types, conditional types and strong typicality of finite-alphabet
//! sequences, plus exhaustive checks of the typical-set lemmas at small
//! blocklength (see [`lemmas`]).
//!
//! Typicality tests compare `|N - n P|` against `n delta` in the scalar's own
//! arithmetic, so with [`Rational64`](crate::Rational64) every decision,
//! including the boundary cases, is exact.

pub mod lemmas;

pub use lemmas::{
    check_delta_schedule, check_entropy_continuity, check_lemma_cardinality,
    check_lemma_cardinality_cond, check_lemma_implications, check_lemma_probability,
    CardinalityReport, CardinalityRow, CondProbability, ContinuityReport, ImplicationCount,
    ImplicationReport, ProbabilityReport, ScheduleReport, ScheduleRow,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::prob::{Channel, Pmf};
use crate::scalar::Scalar;

/// A sequence `x^n` of alphabet indices.
pub type Sequence = Vec<usize>;

/// Largest number of sequences an exhaustive scan may visit.
pub const ENUMERATION_BUDGET: f64 = 1e8;

/// Symbol counts `N(a | x^n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeStats {
    counts: Vec<usize>,
    n: usize,
}

impl TypeStats {
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn count(&self, a: usize) -> usize {
        self.counts[a]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alphabet(&self) -> usize {
        self.counts.len()
    }

    /// The type `P_{x^n}(a) = N(a) / n`.
    pub fn pmf<T: Scalar>(&self) -> Pmf<T> {
        let n = T::from_count(self.n);
        Pmf::new(self.counts.iter().map(|&c| T::from_count(c) / n).collect())
            .expect("a type is a pmf")
    }
}

/// Joint counts `N(a, b | x^n, y^n)` and the conditional type of `y^n` given
/// `x^n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondTypeStats {
    x_alphabet: usize,
    y_alphabet: usize,
    joint: Vec<usize>,
    x_counts: Vec<usize>,
    n: usize,
}

impl CondTypeStats {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self, a: usize, b: usize) -> usize {
        self.joint[a * self.y_alphabet + b]
    }

    pub fn x_count(&self, a: usize) -> usize {
        self.x_counts[a]
    }

    /// Row-major `|X| x |Y|` joint counts.
    pub fn joint_counts(&self) -> &[usize] {
        &self.joint
    }

    /// `V(. | a) = N(a, .) / N(a)`, or `None` when `a` does not occur in `x^n`.
    pub fn conditional<T: Scalar>(&self, a: usize) -> Option<Vec<T>> {
        let na = self.x_counts[a];
        (na > 0).then(|| {
            let d = T::from_count(na);
            (0..self.y_alphabet)
                .map(|b| T::from_count(self.count(a, b)) / d)
                .collect()
        })
    }

    /// All rows of the conditional type; undefined rows are `None`.
    pub fn matrix<T: Scalar>(&self) -> Vec<Option<Vec<T>>> {
        (0..self.x_alphabet).map(|a| self.conditional(a)).collect()
    }
}

fn check_symbols(x: &[usize], alphabet: usize, what: &str) -> Result<()> {
    if let Some(pos) = x.iter().position(|&s| s >= alphabet) {
        return usage(format!(
            "{what}: symbol {} at position {pos} is outside an alphabet of size {alphabet}",
            x[pos]
        ));
    }
    Ok(())
}

pub fn type_of(x: &[usize], alphabet: usize) -> Result<TypeStats> {
    if x.is_empty() {
        return usage("type of an empty sequence");
    }
    check_symbols(x, alphabet, "type_of")?;
    let mut counts = vec![0; alphabet];
    for &s in x {
        counts[s] += 1;
    }
    Ok(TypeStats { counts, n: x.len() })
}

pub fn cond_type_of(
    x: &[usize],
    x_alphabet: usize,
    y: &[usize],
    y_alphabet: usize,
) -> Result<CondTypeStats> {
    if x.len() != y.len() {
        return usage(format!("sequence lengths differ: {} vs {}", x.len(), y.len()));
    }
    if x.is_empty() {
        return usage("conditional type of empty sequences");
    }
    check_symbols(x, x_alphabet, "cond_type_of x")?;
    check_symbols(y, y_alphabet, "cond_type_of y")?;
    let mut joint = vec![0; x_alphabet * y_alphabet];
    let mut x_counts = vec![0; x_alphabet];
    for (&a, &b) in x.iter().zip(y) {
        joint[a * y_alphabet + b] += 1;
        x_counts[a] += 1;
    }
    Ok(CondTypeStats {
        x_alphabet,
        y_alphabet,
        joint,
        x_counts,
        n: x.len(),
    })
}

/// Typicality of a count vector: `|N(a) - n P(a)| <= n delta` for every `a`
/// and `N(a) = 0` wherever `P(a) = 0`.
pub fn counts_typical<T: Scalar>(counts: &[usize], n: usize, p: &[T], delta: T) -> bool {
    let nt = T::from_count(n);
    let slack = nt * delta;
    counts.len() == p.len()
        && counts.iter().zip(p).all(|(&c, &pa)| {
            if pa.is_zero() && c > 0 {
                return false;
            }
            (T::from_count(c) - nt * pa).abs() <= slack
        })
}

/// Conditional typicality of joint counts (`|X| x |Y|`, row-major) given the
/// row totals: `|N(a,b) - N(a) W(b|a)| <= n delta`, and `N(a,b) = 0` wherever
/// `W(b|a) = 0`.
pub fn joint_counts_cond_typical<T: Scalar>(
    joint: &[usize],
    x_counts: &[usize],
    n: usize,
    w: &Channel<T>,
    delta: T,
) -> bool {
    let slack = T::from_count(n) * delta;
    let cols = w.cols();
    x_counts.iter().enumerate().all(|(a, &na)| {
        row_typical(&joint[a * cols..(a + 1) * cols], na, w.row(a), slack)
    })
}

/// One row of the conditional test with the absolute slack `n delta` given.
pub(crate) fn row_typical<T: Scalar>(row: &[usize], na: usize, w_row: &[T], slack: T) -> bool {
    let nat = T::from_count(na);
    row.iter().zip(w_row).all(|(&k, &wb)| {
        if wb.is_zero() && k > 0 {
            return false;
        }
        (T::from_count(k) - nat * wb).abs() <= slack
    })
}

/// Whether `x^n` lies in `T_delta^n(P)`. Sequences with symbols outside the
/// alphabet of `p`, and the empty sequence, are not typical.
pub fn is_typical<T: Scalar>(x: &[usize], p: &Pmf<T>, delta: T) -> bool {
    match type_of(x, p.len()) {
        Ok(t) => counts_typical(&t.counts, t.n, p.probs(), delta),
        Err(_) => false,
    }
}

/// Whether `y^n` lies in `T_delta^n(W | x^n)`.
pub fn is_cond_typical<T: Scalar>(y: &[usize], x: &[usize], w: &Channel<T>, delta: T) -> Result<bool> {
    if x.len() != y.len() {
        return usage(format!("sequence lengths differ: {} vs {}", x.len(), y.len()));
    }
    Ok(match cond_type_of(x, w.rows(), y, w.cols()) {
        Ok(ct) => joint_counts_cond_typical(&ct.joint, &ct.x_counts, ct.n, w, delta),
        Err(_) => false,
    })
}

/// A typical set listed in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypicalSet {
    pub n: usize,
    pub alphabet: usize,
    pub members: Vec<Sequence>,
}

impl TypicalSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// `m^n` as a float, for budget checks.
pub(crate) fn space_size(m: usize, n: usize) -> f64 {
    (m as f64).powi(n as i32)
}

pub(crate) fn check_budget(what: &str, required: f64) -> Result<()> {
    if required > ENUMERATION_BUDGET {
        return Err(Error::Budget {
            what: what.to_string(),
            required,
            limit: ENUMERATION_BUDGET,
        });
    }
    Ok(())
}

/// Writes the base-`m` digits of `idx` (most significant first) into `out`.
pub(crate) fn decode_index(mut idx: u64, m: usize, out: &mut [usize]) {
    for d in out.iter_mut().rev() {
        *d = (idx % m as u64) as usize;
        idx /= m as u64;
    }
}

/// Advances `digits` to the next sequence in lexicographic order.
pub(crate) fn advance(digits: &mut [usize], m: usize) {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < m {
            return;
        }
        *d = 0;
    }
}

/// Visits every sequence in `{0..m}^n` in parallel blocks, keeping the
/// sequences accepted by `keep` in lexicographic order.
fn scan<F>(m: usize, n: usize, keep: F) -> Vec<Sequence>
where
    F: Fn(&[usize]) -> bool + Sync,
{
    let total = (m as u64).pow(n as u32);
    let blocks = total.min(256);
    let per = total.div_ceil(blocks);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let (lo, hi) = (b * per, ((b + 1) * per).min(total));
            let mut out = Vec::new();
            let mut digits = vec![0; n];
            if lo < hi {
                decode_index(lo, m, &mut digits);
            }
            for _ in lo..hi {
                if keep(&digits) {
                    out.push(digits.clone());
                }
                advance(&mut digits, m);
            }
            out
        })
        .collect::<Vec<_>>()
        .concat()
}

/// `T_delta^n(P)` by exhaustive scan.
pub fn enumerate_typical<T: Scalar>(p: &Pmf<T>, delta: T, n: usize) -> Result<TypicalSet> {
    if n == 0 {
        return usage("blocklength must be positive");
    }
    let m = p.len();
    check_budget("typical-set scan", space_size(m, n))?;
    let members = scan(m, n, |x| {
        let mut counts = vec![0; m];
        x.iter().for_each(|&s| counts[s] += 1);
        counts_typical(&counts, n, p.probs(), delta)
    });
    Ok(TypicalSet { n, alphabet: m, members })
}

/// `T_delta^n(W | x^n)` by exhaustive scan over `y^n`.
pub fn enumerate_cond_typical<T: Scalar>(w: &Channel<T>, x: &[usize], delta: T) -> Result<TypicalSet> {
    let n = x.len();
    if n == 0 {
        return usage("blocklength must be positive");
    }
    check_symbols(x, w.rows(), "enumerate_cond_typical x")?;
    let m = w.cols();
    check_budget("conditional typical-set scan", space_size(m, n))?;
    let members = scan(m, n, |y| {
        is_cond_typical(y, x, w, delta).expect("lengths match")
    });
    Ok(TypicalSet { n, alphabet: m, members })
}

/// Every composition of `n` into `m` nonnegative parts, in lexicographic
/// order.
pub fn compositions(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(left - k, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if m > 0 {
        rec(n, m, &mut Vec::with_capacity(m), &mut out);
    }
    out
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// `n! / prod k_i!` for `n = sum k_i`.
pub fn multinomial(k: &[usize]) -> u128 {
    let mut left = 0;
    let mut acc: u128 = 1;
    for &ki in k {
        left += ki;
        acc = acc
            .checked_mul(binomial(left, ki))
            .expect("multinomial overflows u128");
    }
    acc
}

/// Size of `T_delta^n(P)` by summing type-class sizes.
pub fn typical_set_size<T: Scalar>(p: &[T], delta: T, n: usize) -> u128 {
    compositions(n, p.len())
        .iter()
        .filter(|k| counts_typical(k, n, p, delta))
        .map(|k| multinomial(k))
        .sum()
}

/// Size of `T_delta^n(W | x^n)`, which depends on `x^n` only through its
/// counts: a product over input symbols of the number of admissible rows.
pub fn cond_typical_set_size<T: Scalar>(w: &Channel<T>, x_counts: &[usize], delta: T) -> u128 {
    let n: usize = x_counts.iter().sum();
    let slack = T::from_count(n) * delta;
    x_counts
        .iter()
        .enumerate()
        .map(|(a, &na)| {
            compositions(na, w.cols())
                .iter()
                .filter(|k| row_typical(k, na, w.row(a), slack))
                .map(|k| multinomial(k))
                .sum::<u128>()
        })
        .product()
}

/// `delta(n) = (c / sqrt n) log2 n`.
pub fn delta_schedule(n: usize, c: f64) -> Result<f64> {
    if n < 2 {
        return usage(format!("delta schedule needs n >= 2, got {n}"));
    }
    if !(c > 0.0) {
        return usage(format!("schedule constant must be positive, got {c}"));
    }
    let nf = n as f64;
    Ok(c / nf.sqrt() * nf.log2())
}

/// Typicality constant, the tolerance `tau`, and the schedule constant `c`,
/// with the derived constants used by the achievability argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypicalityParams {
    pub delta: f64,
    pub tau: f64,
    pub c: f64,
}

impl TypicalityParams {
    pub fn new(delta: f64, tau: f64, c: f64) -> Result<Self> {
        let p = Self { delta, tau, c };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `delta` taken from the schedule at blocklength `n`.
    pub fn at_blocklength(n: usize, tau: f64, c: f64) -> Result<Self> {
        Self::new(delta_schedule(n, c)?, tau, c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return usage(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.tau > 0.0 && self.tau < 0.5) {
            return usage(format!("tau must lie in (0, 1/2), got {}", self.tau));
        }
        if !(self.c > 0.0) {
            return usage(format!("c must be positive, got {}", self.c));
        }
        Ok(())
    }

    /// `(|X_E| - |X_R|) delta`, the slack in the distortion bound of the code.
    pub fn delta1(&self, e_size: usize, r_size: usize) -> f64 {
        e_size.saturating_sub(r_size) as f64 * self.delta
    }

    /// `|Y| delta`: marginal slack when projecting a jointly typical pair.
    pub fn delta1_lemma(&self, y_size: usize) -> f64 {
        y_size as f64 * self.delta
    }

    /// `(|Y| + 1) delta`: conditional slack when projecting a jointly typical
    /// pair.
    pub fn delta2_lemma(&self, y_size: usize) -> f64 {
        (y_size + 1) as f64 * self.delta
    }

    /// `delta / |X_{E^c}|`, the per-symbol slack for the unencoded attributes.
    /// Not the same quantity as [`delta2_lemma`](Self::delta2_lemma).
    pub fn delta2_app_c(&self, ec_size: usize) -> f64 {
        self.delta / ec_size.max(1) as f64
    }

    /// `(|X_H| + 1) 2 delta`.
    pub fn delta3(&self, h_size: usize) -> f64 {
        (h_size + 1) as f64 * 2.0 * self.delta
    }

    /// `tau (log|X_H| + 5) + 4 tau log(|X_H| 2^R / (2 tau))`, the equivocation
    /// loss that must stay below `epsilon`.
    pub fn tau_loss(&self, rate: f64, h_size: usize) -> f64 {
        let lh = (h_size as f64).log2();
        self.tau * (lh + 5.0) + 4.0 * self.tau * (lh + rate - (2.0 * self.tau).log2())
    }

    pub fn tau_admissible(&self, epsilon: f64, rate: f64, h_size: usize) -> bool {
        self.tau_loss(rate, h_size) < epsilon
    }
}
