//! Executable checks of the typical-set lemmas: cardinality, entropy
//! continuity, the three projection/extension implications, and the
//! probability of the typical set.
//!
//! Cardinalities and probabilities are computed by summing over type classes,
//! which is exact; exhaustive sequence scans serve as the cross-check where
//! the budget allows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_budget, compositions, cond_typical_set_size, counts_typical, decode_index,
    delta_schedule, multinomial, row_typical, space_size, type_of, typical_set_size, Sequence,
};
use crate::error::{usage, Result};
use crate::prob::{entropy_of, variational_distance, Channel, JointPmf, Pmf};
use crate::scalar::Scalar;

/// Sequences up to this count are also enumerated directly as a cross-check
/// of the type-class sum.
const SCAN_CROSSCHECK: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityRow {
    pub n: usize,
    pub delta: f64,
    /// `|T_delta^n|` by type-class counting.
    pub size: u128,
    /// The same size by direct enumeration, when small enough to scan.
    pub scan_size: Option<u128>,
    /// `log2 |T| / n`; `None` when the set is empty.
    pub rate: Option<f64>,
    /// `H(P)` or `H(W | P)`.
    pub entropy: f64,
    /// Realized `|rate - entropy|`.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityReport {
    pub rows: Vec<CardinalityRow>,
    pub empty_sets: usize,
    /// Number of consecutive defined gaps that went up.
    pub increases: usize,
    /// Last defined gap is at most the first.
    pub nonincreasing_trend: bool,
}

impl CardinalityReport {
    fn from_rows(rows: Vec<CardinalityRow>) -> Self {
        let gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap).collect();
        let increases = gaps.windows(2).filter(|w| w[1] > w[0]).count();
        let nonincreasing_trend = match (gaps.first(), gaps.last()) {
            (Some(a), Some(b)) => b <= a,
            _ => false,
        };
        Self {
            empty_sets: rows.iter().filter(|r| r.size == 0).count(),
            rows,
            increases,
            nonincreasing_trend,
        }
    }

    pub fn scans_agree(&self) -> bool {
        self.rows.iter().all(|r| r.scan_size.map_or(true, |s| s == r.size))
    }
}

fn row(n: usize, delta: f64, size: u128, scan_size: Option<u128>, entropy: f64) -> CardinalityRow {
    let rate = (size > 0).then(|| (size as f64).log2() / n as f64);
    CardinalityRow {
        n,
        delta,
        size,
        scan_size,
        rate,
        entropy,
        gap: rate.map(|r| (r - entropy).abs()),
    }
}

/// Realized cardinality gaps `|1/n log2 |T_delta(n)^n(P)| - H(P)|` along the
/// schedule `delta(n) = (c / sqrt n) log2 n`.
pub fn check_lemma_cardinality(p: &Pmf<f64>, n_list: &[usize], c: f64) -> Result<CardinalityReport> {
    let h = entropy_of(p.probs());
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let delta = delta_schedule(n, c)?;
        let size = typical_set_size(p.probs(), delta, n);
        let scan = (space_size(p.len(), n) <= SCAN_CROSSCHECK)
            .then(|| super::enumerate_typical(p, delta, n).map(|s| s.len() as u128))
            .transpose()?;
        rows.push(row(n, delta, size, scan, h));
    }
    Ok(CardinalityReport::from_rows(rows))
}

/// Conditional variant: for each `x^n`, the gap between `1/n log2 |T(W|x^n)|`
/// and `H(W | P)` with `P` the type of `x^n`.
pub fn check_lemma_cardinality_cond(
    w: &Channel<f64>,
    xs: &[Sequence],
    c: f64,
) -> Result<CardinalityReport> {
    let mut rows = Vec::with_capacity(xs.len());
    for x in xs {
        let n = x.len();
        let delta = delta_schedule(n, c)?;
        let t = type_of(x, w.rows())?;
        let h: f64 = (0..w.rows())
            .map(|a| t.count(a) as f64 / n as f64 * entropy_of(w.row(a)))
            .sum();
        let size = cond_typical_set_size(w, t.counts(), delta);
        let scan = (space_size(w.cols(), n) <= SCAN_CROSSCHECK)
            .then(|| super::enumerate_cond_typical(w, x, delta).map(|s| s.len() as u128))
            .transpose()?;
        rows.push(row(n, delta, size, scan, h));
    }
    Ok(CardinalityReport::from_rows(rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest `|H(P) - H(Q)| / (-d log2(d / |X|))` over pairs with `d > 0`.
    pub max_ratio: f64,
    pub largest_distance: f64,
}

fn random_pmf(rng: &mut ChaCha8Rng, m: usize, sparse: bool) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..m)
            .map(|_| {
                if sparse && rng.gen_bool(0.3) {
                    0.0
                } else {
                    -(1.0 - rng.gen::<f64>()).ln()
                }
            })
            .collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 {
            v.iter_mut().for_each(|x| *x /= s);
            return v;
        }
    }
}

/// Random pairs `(P, Q)` with L1 distance `d < 1/2`, checked against
/// `|H(P) - H(Q)| <= -d log2(d / |X|)`.
pub fn check_entropy_continuity(alphabet_sizes: &[usize], trials: usize, seed: u64) -> Result<ContinuityReport> {
    if alphabet_sizes.is_empty() || alphabet_sizes.iter().any(|&m| m < 2) {
        return usage("alphabet sizes must be at least 2");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ContinuityReport {
        trials,
        violations: 0,
        max_ratio: 0.0,
        largest_distance: 0.0,
    };
    for t in 0..trials {
        let m = alphabet_sizes[t % alphabet_sizes.len()];
        let sparse = t % 3 == 0;
        let p = random_pmf(&mut rng, m, sparse);
        let r = random_pmf(&mut rng, m, sparse);
        let pr = Pmf::new(p.clone())?;
        let full = variational_distance(&pr, &Pmf::new(r.clone())?)?;
        // Shrinking toward P keeps d = lambda * full below 1/2.
        let lambda = rng.gen::<f64>() * (0.4999 / full).min(1.0);
        let q: Vec<f64> = p.iter().zip(&r).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect();
        let d = variational_distance(&pr, &Pmf::new(q.clone())?)?;
        let lhs = (entropy_of(&p) - entropy_of(&q)).abs();
        let rhs = if d > 0.0 { -d * (d / m as f64).log2() } else { 0.0 };
        if lhs > rhs + 1e-12 {
            report.violations += 1;
        }
        if d > 0.0 {
            report.max_ratio = report.max_ratio.max(lhs / rhs);
        }
        report.largest_distance = report.largest_distance.max(d);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplicationCount {
    /// Pairs satisfying the hypothesis.
    pub premises: u64,
    pub counterexamples: u64,
}

impl ImplicationCount {
    fn add(self, o: Self) -> Self {
        Self {
            premises: self.premises + o.premises,
            counterexamples: self.counterexamples + o.counterexamples,
        }
    }

    fn record(&mut self, premise: bool, conclusion: bool) {
        if premise {
            self.premises += 1;
            if !conclusion {
                self.counterexamples += 1;
            }
        }
    }
}

/// Exhaustive check over all `(x^n, y^n)` of:
///
/// - extension: `x ∈ T_d(X)`, `y ∈ T_d(W|x)` imply `(x,y) ∈ T_2d(XY)` and
///   `y ∈ T_{2d|X|}(Y)`;
/// - projection: `(x,y) ∈ T_d(XY)` implies `x ∈ T_{|Y|d}(X)` and
///   `y ∈ T_{(|Y|+1)d}(W|x)`;
/// - contrapositive: `y ∈ T_d(Y)`, `(x,y) ∉ T_2d(XY)` imply `x ∉ T_d(V|y)`;
///
/// with `W = P_{Y|X}` and `V = P_{X|Y}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicationReport {
    pub n: usize,
    pub delta: f64,
    pub x_alphabet: usize,
    pub y_alphabet: usize,
    pub pairs: u64,
    pub extension: ImplicationCount,
    pub projection: ImplicationCount,
    pub contrapositive: ImplicationCount,
    /// Lexicographically first failing pair, if any.
    pub first_counterexample: Option<(Sequence, Sequence)>,
}

impl ImplicationReport {
    pub fn all_hold(&self) -> bool {
        self.extension.counterexamples == 0
            && self.projection.counterexamples == 0
            && self.contrapositive.counterexamples == 0
    }
}

/// Row-normalizes a joint matrix; rows with zero mass become uniform (they
/// never matter: a typical sequence does not contain such symbols).
fn conditional_rows<T: Scalar>(joint: &[T], rows: usize, cols: usize) -> Result<Channel<T>> {
    let mut out = Vec::with_capacity(rows * cols);
    for a in 0..rows {
        let r = &joint[a * cols..(a + 1) * cols];
        let s = r.iter().fold(T::zero(), |acc, &v| acc + v);
        if s.is_zero() {
            out.extend(std::iter::repeat(T::one() / T::from_count(cols)).take(cols));
        } else {
            out.extend(r.iter().map(|&v| v / s));
        }
    }
    Channel::new(rows, cols, out)
}

struct SeqInfo {
    digits: Vec<usize>,
    counts: Vec<usize>,
    typical: bool,
    typical_wide: bool,
}

fn seq_infos<T: Scalar>(m: usize, n: usize, p: &[T], d: T, d_wide: T) -> Vec<SeqInfo> {
    let total = (m as u64).pow(n as u32);
    (0..total)
        .map(|i| {
            let mut digits = vec![0; n];
            decode_index(i, m, &mut digits);
            let mut counts = vec![0; m];
            digits.iter().for_each(|&s| counts[s] += 1);
            SeqInfo {
                typical: counts_typical(&counts, n, p, d),
                typical_wide: counts_typical(&counts, n, p, d_wide),
                digits,
                counts,
            }
        })
        .collect()
}

pub fn check_lemma_implications<T: Scalar>(p_xy: &JointPmf<T>, n: usize, delta: T) -> Result<ImplicationReport> {
    if p_xy.num_axes() != 2 {
        return usage("implication check needs a joint over exactly two axes");
    }
    if n == 0 || !(delta > T::zero()) {
        return usage("n and delta must be positive");
    }
    let (mx, my) = (p_xy.shape()[0], p_xy.shape()[1]);
    check_budget("typical pair scan", space_size(mx, n) * space_size(my, n))?;
    let joint = p_xy.probs();
    let px = p_xy.marginal_pmf(&[0])?;
    let py = p_xy.marginal_pmf(&[1])?;
    let w = conditional_rows(joint, mx, my)?;
    let mut transposed = Vec::with_capacity(mx * my);
    for b in 0..my {
        for a in 0..mx {
            transposed.push(joint[a * my + b]);
        }
    }
    let v = conditional_rows(&transposed, my, mx)?;

    let two = T::one() + T::one();
    let d_xy = T::from_count(my) * delta;
    let d_y = two * delta * T::from_count(mx);
    let slack = T::from_count(n) * delta;
    let slack_w2 = T::from_count(n) * T::from_count(my + 1) * delta;
    let xs = seq_infos(mx, n, px.probs(), delta, d_xy);
    let ys = seq_infos(my, n, py.probs(), delta, d_y);

    let parts: Vec<_> = xs
        .par_iter()
        .enumerate()
        .map(|(xi, x)| {
            let mut ext = ImplicationCount::default();
            let mut proj = ImplicationCount::default();
            let mut contra = ImplicationCount::default();
            let mut first = None;
            let mut nxy = vec![0usize; mx * my];
            let mut nyx = vec![0usize; my * mx];
            for (yi, y) in ys.iter().enumerate() {
                nxy.iter_mut().for_each(|c| *c = 0);
                for (&a, &b) in x.digits.iter().zip(&y.digits) {
                    nxy[a * my + b] += 1;
                }
                for a in 0..mx {
                    for b in 0..my {
                        nyx[b * mx + a] = nxy[a * my + b];
                    }
                }
                let jt = counts_typical(&nxy, n, joint, delta);
                let jt2 = counts_typical(&nxy, n, joint, two * delta);
                let y_given_x = |s: T| {
                    (0..mx).all(|a| row_typical(&nxy[a * my..(a + 1) * my], x.counts[a], w.row(a), s))
                };
                let x_given_y =
                    (0..my).all(|b| row_typical(&nyx[b * mx..(b + 1) * mx], y.counts[b], v.row(b), slack));
                let before = ext.counterexamples + proj.counterexamples + contra.counterexamples;
                ext.record(x.typical && y_given_x(slack), jt2 && y.typical_wide);
                proj.record(jt, x.typical_wide && y_given_x(slack_w2));
                contra.record(y.typical && !jt2, !x_given_y);
                let after = ext.counterexamples + proj.counterexamples + contra.counterexamples;
                if after > before && first.is_none() {
                    first = Some((xi, yi));
                }
            }
            (ext, proj, contra, first)
        })
        .collect();

    let mut report = ImplicationReport {
        n,
        delta: delta.to_f64_lossy(),
        x_alphabet: mx,
        y_alphabet: my,
        pairs: (xs.len() * ys.len()) as u64,
        extension: ImplicationCount::default(),
        projection: ImplicationCount::default(),
        contrapositive: ImplicationCount::default(),
        first_counterexample: None,
    };
    for (e, p, c, first) in parts {
        report.extension = report.extension.add(e);
        report.projection = report.projection.add(p);
        report.contrapositive = report.contrapositive.add(c);
        if report.first_counterexample.is_none() {
            report.first_counterexample =
                first.map(|(xi, yi)| (xs[xi].digits.clone(), ys[yi].digits.clone()));
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondProbability {
    /// Smallest `Pr{Y^n ∈ T_delta(W|x^n) | x^n}` over all `x^n`.
    pub worst_probability: f64,
    pub worst_x_counts: Vec<usize>,
    /// `1 - 2|X||Y| exp(-2 delta^2 n)`.
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityReport {
    pub n: usize,
    pub delta: f64,
    /// `Pr{X^n ∈ T_delta^n(P)}`, exact in the scalar type used.
    pub probability: f64,
    /// `1 - 2|X| exp(-2 delta^2 n)`.
    pub bound: f64,
    pub holds: bool,
    pub conditional: Option<CondProbability>,
}

fn pow<T: Scalar>(x: T, k: usize) -> T {
    (0..k).fold(T::one(), |acc, _| acc * x)
}

fn class_mass<T: Scalar>(k: &[usize], p: &[T]) -> T {
    let count = T::from_u128(multinomial(k)).expect("multinomial fits the scalar type");
    k.iter().zip(p).fold(count, |acc, (&ki, &pi)| acc * pow(pi, ki))
}

/// Probability of the typical set, and with `w` the worst case over `x^n` of
/// the conditional typical set, both summed over type classes.
pub fn check_lemma_probability<T: Scalar>(
    p: &Pmf<T>,
    w: Option<&Channel<T>>,
    n: usize,
    delta: T,
) -> Result<ProbabilityReport> {
    if n == 0 || !(delta > T::zero()) {
        return usage("n and delta must be positive");
    }
    let df = delta.to_f64_lossy();
    let decay = (-2.0 * df * df * n as f64).exp();
    let probability = compositions(n, p.len())
        .iter()
        .filter(|k| counts_typical(k, n, p.probs(), delta))
        .fold(T::zero(), |acc, k| acc + class_mass(k, p.probs()))
        .to_f64_lossy();
    let bound = 1.0 - 2.0 * p.len() as f64 * decay;

    let conditional = match w {
        None => None,
        Some(w) => {
            if w.rows() != p.len() {
                return usage("channel rows must match the alphabet of p");
            }
            let slack = T::from_count(n) * delta;
            let mut worst: Option<(f64, Vec<usize>)> = None;
            for xc in compositions(n, w.rows()) {
                let pr = xc
                    .iter()
                    .enumerate()
                    .fold(T::one(), |acc, (a, &na)| {
                        let row_mass = compositions(na, w.cols())
                            .iter()
                            .filter(|k| row_typical(k, na, w.row(a), slack))
                            .fold(T::zero(), |s, k| s + class_mass(k, w.row(a)));
                        acc * row_mass
                    })
                    .to_f64_lossy();
                if worst.as_ref().map_or(true, |(wp, _)| pr < *wp) {
                    worst = Some((pr, xc));
                }
            }
            let (worst_probability, worst_x_counts) = worst.expect("at least one type");
            let bound = 1.0 - 2.0 * (w.rows() * w.cols()) as f64 * decay;
            Some(CondProbability {
                worst_probability,
                worst_x_counts,
                bound,
                holds: worst_probability >= bound,
            })
        }
    };
    Ok(ProbabilityReport {
        n,
        delta: df,
        probability,
        bound,
        holds: probability >= bound,
        conditional,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub n: usize,
    pub delta: f64,
    pub sqrt_n_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub rows: Vec<ScheduleRow>,
    /// `delta(n)` strictly decreasing along the rows with `n >= 8`.
    pub delta_decreasing: bool,
    /// `sqrt(n) delta(n)` strictly increasing along all rows.
    pub sqrt_n_delta_increasing: bool,
}

/// The schedule on `n = 2^k`, `k = 1..=max_k`.
pub fn check_delta_schedule(c: f64, max_k: u32) -> Result<ScheduleReport> {
    if max_k == 0 || max_k > 62 {
        return usage("max_k must lie in 1..=62");
    }
    let rows = (1..=max_k)
        .map(|k| {
            let n = 1usize << k;
            let delta = delta_schedule(n, c)?;
            Ok(ScheduleRow {
                n,
                delta,
                sqrt_n_delta: (n as f64).sqrt() * delta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tail: Vec<&ScheduleRow> = rows.iter().filter(|r| r.n >= 8).collect();
    Ok(ScheduleReport {
        delta_decreasing: tail.windows(2).all(|w| w[1].delta < w[0].delta),
        sqrt_n_delta_increasing: rows.windows(2).all(|w| w[1].sqrt_n_delta > w[0].sqrt_n_delta),
        rows,
    })
}
