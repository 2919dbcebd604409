//! Exhaustive measurement over every source block.
//!
//! When all source probabilities are rationals with a small common
//! denominator `Q`, block probabilities are integers over `Q^n` and every set
//! measure is summed exactly in `u128`; otherwise the same code runs in `f64`.

use std::collections::BTreeMap;
use std::ops::{Add, Mul};
use std::sync::atomic::{AtomicU32, Ordering};

use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_codebook, Codebook, EmpiricalMeasures, MeasureMode};
use crate::error::Result;
use crate::model::{EncodedSet, EncodedView, SourceModel};
use crate::prob::{entropy_of, Channel};
use crate::types::{advance, check_budget, compositions, decode_index, row_typical, space_size};

/// Largest denominator tried when recovering rational probabilities.
const MAX_DENOMINATOR: u64 = 1_000_000;

/// Per-`j` dense buckets over `X_H^n` up to this many cells; sparse beyond.
const DENSE_BUCKETS: usize = 1 << 22;

/// Set measures and sizes of the partitions induced by one codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSets {
    pub n: usize,
    pub m_n: usize,
    /// `index_of_e[x]` is the 0-based index of the set `A(j)` containing the
    /// `x`-th block of `X_E^n` in lexicographic order.
    pub index_of_e: Vec<u32>,
    /// `Pr{J = j}`, from the encoder output over all `x_K^n`.
    pub pr_j: Vec<f64>,
    /// `Pr{X_E^n ∈ A(j)}`, from the `X_E` marginal.
    pub pr_a: Vec<f64>,
    /// `Pr{X_K^n ∈ B(j)}`, from the full joint.
    pub pr_b: Vec<f64>,
    /// `Pr{X_K^n ∈ Ã(j)}`.
    pub pr_tilde: Vec<f64>,
    pub a_sizes: Vec<u64>,
    pub b_sizes: Vec<u64>,
    pub tilde_sizes: Vec<u64>,
    /// The three routes to `Pr{J = j}` agree (bit for bit in exact mode).
    pub mass_identity: bool,
    pub max_identity_diff: f64,
    pub exact_arithmetic: bool,
}

impl PartitionSets {
    /// `A(j)` as 0-based lexicographic indices into `X_E^n`.
    pub fn a_members(&self, j: usize) -> Vec<u64> {
        self.index_of_e
            .iter()
            .enumerate()
            .filter(|(_, &i)| i as usize == j)
            .map(|(x, _)| x as u64)
            .collect()
    }

    /// `|Ã(j)| <= |B(j)|` and `Pr Ã(j) <= Pr B(j)` for every `j < m_n`, as
    /// implied by `Ã(j) ⊆ B(j)`.
    pub fn tilde_within_b(&self) -> bool {
        (0..self.m_n - 1).all(|j| self.tilde_sizes[j] <= self.b_sizes[j] && self.pr_tilde[j] <= self.pr_b[j])
    }

    pub fn a_is_partition(&self) -> bool {
        self.index_of_e.iter().all(|&j| (j as usize) < self.m_n)
            && self.a_sizes.iter().sum::<u64>() == self.index_of_e.len() as u64
    }
}

trait Mass: Copy + Send + Sync + PartialEq + Add<Output = Self> + Mul<Output = Self> {
    const ZERO: Self;
    const ONE: Self;
    fn ratio(self, total: Self) -> f64;
}

impl Mass for u128 {
    const ZERO: Self = 0;
    const ONE: Self = 1;
    fn ratio(self, total: Self) -> f64 {
        self as f64 / total as f64
    }
}

impl Mass for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn ratio(self, total: Self) -> f64 {
        self / total
    }
}

/// Best rational approximation with denominator at most `max_den`, by
/// continued fractions; `None` unless it reproduces `x` to 1e-12.
fn small_rational(x: f64, max_den: u64) -> Option<(u64, u64)> {
    if !(0.0..=1.0).contains(&x) {
        return None;
    }
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut v = x;
    for _ in 0..64 {
        let a = v.floor();
        if a > max_den as f64 {
            break;
        }
        let a = a as u64;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > max_den {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        if (x - p1 as f64 / q1 as f64).abs() <= 1e-12 {
            return Some((p1, q1));
        }
        let frac = v - a as f64;
        if frac <= 0.0 {
            break;
        }
        v = 1.0 / frac;
    }
    (q1 > 0 && (x - p1 as f64 / q1 as f64).abs() <= 1e-12).then_some((p1, q1))
}

/// Integer weights `c_k` with `p_k = c_k / Q`, when `Q^n` fits in `u128`.
fn integer_weights(p: &[f64], n: usize) -> Option<Vec<u128>> {
    let fracs: Vec<(u64, u64)> = p.iter().map(|&x| small_rational(x, MAX_DENOMINATOR)).collect::<Option<_>>()?;
    let q = fracs.iter().try_fold(1u64, |acc, &(_, d)| {
        let l = acc.lcm(&d);
        (l <= MAX_DENOMINATOR).then_some(l)
    })?;
    if n as f64 * (q as f64).log2() > 126.0 {
        return None;
    }
    let c: Vec<u128> = fracs.iter().map(|&(a, d)| (a * (q / d)) as u128).collect();
    (c.iter().sum::<u128>() == q as u128).then_some(c)
}

struct Ctx<'a> {
    view: &'a EncodedView<f64>,
    cb: &'a Codebook,
    n: usize,
    /// `k_of[e * c_size + c]`.
    k_of: Vec<usize>,
    /// `P(x_K | x̂)` as a `recon x k_size` channel.
    backward_k: Channel<f64>,
    slack2: f64,
    h_space: usize,
}

struct Raw<M> {
    pr_j: Vec<M>,
    pr_a: Vec<M>,
    pr_b: Vec<M>,
    pr_tilde: Vec<M>,
    a_sizes: Vec<u64>,
    b_sizes: Vec<u64>,
    tilde_sizes: Vec<u64>,
    /// `sum_j Pr B(j) H(X_H^n | B(j))` in bits.
    cond_entropy: f64,
    /// `E sum_t d` (not yet divided by `n`).
    distortion: f64,
}

/// Per-`j` accumulation over `B(j)`.
struct JStats<M> {
    pr_b: M,
    b_size: u64,
    pr_tilde_j: M,
    tilde_size_j: u64,
    pr_tilde_fallback: M,
    tilde_size_fallback: u64,
    entropy_term: f64,
    distortion: f64,
}

fn entropy_bits<M: Mass>(masses: impl Iterator<Item = M>, total: M) -> f64 {
    let probs: Vec<f64> = masses.map(|m| m.ratio(total)).collect();
    entropy_of(&probs)
}

impl Ctx<'_> {
    fn tilde_typical(&self, xk: &[usize], word: &[usize], joint: &mut [usize], word_counts: &[usize]) -> bool {
        let ks = self.view.k_size;
        joint.iter_mut().for_each(|c| *c = 0);
        for (&b, &k) in word.iter().zip(xk) {
            joint[b * ks + k] += 1;
        }
        word_counts
            .iter()
            .enumerate()
            .all(|(b, &nb)| row_typical(&joint[b * ks..(b + 1) * ks], nb, self.backward_k.row(b), self.slack2))
    }

    fn run<M: Mass>(&self, per_k: &[M], total: M) -> (Raw<M>, Vec<u32>) {
        let view = self.view;
        let n = self.n;
        let m_n = self.cb.m_n;
        let fallback = m_n - 1;
        let c_space = view.c_size.pow(n as u32);

        let mut per_e = vec![M::ZERO; view.e_size];
        for (k, &c) in per_k.iter().enumerate() {
            per_e[view.e_of_k[k]] = per_e[view.e_of_k[k]] + c;
        }

        let index_of_e = index_map(self.cb, view.e_size);

        // Members of each A(j), in lexicographic order.
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); m_n];
        for (x, &j) in index_of_e.iter().enumerate() {
            members[j as usize].push(x as u32);
        }

        let word_counts: Vec<Vec<usize>> = self
            .cb
            .words
            .iter()
            .map(|w| {
                let mut c = vec![0; view.recon_size];
                w.iter().for_each(|&b| c[b] += 1);
                c
            })
            .collect();

        // Route A and the per-j pass over B(j).
        let per_j: Vec<(M, JStats<M>)> = members
            .par_iter()
            .enumerate()
            .map(|(j, xs)| {
                let word = &self.cb.words[j];
                let mut pr_a = M::ZERO;
                let mut stats = JStats {
                    pr_b: M::ZERO,
                    b_size: 0,
                    pr_tilde_j: M::ZERO,
                    tilde_size_j: 0,
                    pr_tilde_fallback: M::ZERO,
                    tilde_size_fallback: 0,
                    entropy_term: 0.0,
                    distortion: 0.0,
                };
                if xs.is_empty() {
                    return (pr_a, stats);
                }
                let dense = self.h_space <= DENSE_BUCKETS;
                let mut dense_buckets = if dense { vec![M::ZERO; self.h_space] } else { Vec::new() };
                let mut sparse_buckets: BTreeMap<usize, M> = BTreeMap::new();
                let mut xe = vec![0; n];
                let mut xc = vec![0; n];
                let mut xk = vec![0; n];
                let mut joint = vec![0; view.recon_size * view.k_size];
                for &x in xs {
                    decode_index(x as u64, view.e_size, &mut xe);
                    pr_a = pr_a + xe.iter().fold(M::ONE, |acc, &a| acc * per_e[a]);
                    xc.iter_mut().for_each(|d| *d = 0);
                    for _ in 0..c_space {
                        let mut weight = M::ONE;
                        let mut h_idx = 0usize;
                        let mut dsum = 0.0;
                        for t in 0..n {
                            let k = self.k_of[xe[t] * view.c_size + xc[t]];
                            xk[t] = k;
                            weight = weight * per_k[k];
                            h_idx = h_idx * view.h_size + view.h_of_k[k];
                            dsum += view.cost(xe[t], word[t]);
                        }
                        advance(&mut xc, view.c_size);
                        stats.pr_b = stats.pr_b + weight;
                        stats.b_size += 1;
                        stats.distortion += weight.ratio(total) * dsum;
                        if dense {
                            dense_buckets[h_idx] = dense_buckets[h_idx] + weight;
                        } else {
                            let slot = sparse_buckets.entry(h_idx).or_insert(M::ZERO);
                            *slot = *slot + weight;
                        }
                        if j < fallback && self.tilde_typical(&xk, word, &mut joint, &word_counts[j]) {
                            stats.pr_tilde_j = stats.pr_tilde_j + weight;
                            stats.tilde_size_j += 1;
                        } else {
                            stats.pr_tilde_fallback = stats.pr_tilde_fallback + weight;
                            stats.tilde_size_fallback += 1;
                        }
                    }
                }
                let h = if dense {
                    entropy_bits(dense_buckets.into_iter().filter(|&m| m != M::ZERO), stats.pr_b)
                } else {
                    entropy_bits(sparse_buckets.into_values(), stats.pr_b)
                };
                stats.entropy_term = stats.pr_b.ratio(total) * h;
                (pr_a, stats)
            })
            .collect();

        // Route J: every x_K^n in lexicographic order, independently of the
        // grouping by index.
        let k_space = view.k_size.pow(n as u32) as u64;
        let mut pr_j = vec![M::ZERO; m_n];
        for part in block_ranges_capped(k_space, m_n)
            .par_iter()
            .map(|&(lo, hi)| {
                let mut acc = vec![M::ZERO; m_n];
                let mut digits = vec![0; n];
                decode_index(lo, view.k_size, &mut digits);
                for _ in lo..hi {
                    let mut weight = M::ONE;
                    let mut e_idx = 0usize;
                    for &k in &digits {
                        weight = weight * per_k[k];
                        e_idx = e_idx * view.e_size + view.e_of_k[k];
                    }
                    let j = index_of_e[e_idx] as usize;
                    acc[j] = acc[j] + weight;
                    advance(&mut digits, view.k_size);
                }
                acc
            })
            .collect::<Vec<_>>()
        {
            for (s, v) in pr_j.iter_mut().zip(part) {
                *s = *s + v;
            }
        }

        let mut raw = Raw {
            pr_j,
            pr_a: Vec::with_capacity(m_n),
            pr_b: Vec::with_capacity(m_n),
            pr_tilde: vec![M::ZERO; m_n],
            a_sizes: members.iter().map(|m| m.len() as u64).collect(),
            b_sizes: Vec::with_capacity(m_n),
            tilde_sizes: vec![0; m_n],
            cond_entropy: 0.0,
            distortion: 0.0,
        };
        for (j, (pa, s)) in per_j.into_iter().enumerate() {
            raw.pr_a.push(pa);
            raw.pr_b.push(s.pr_b);
            raw.b_sizes.push(s.b_size);
            raw.pr_tilde[j] = raw.pr_tilde[j] + s.pr_tilde_j;
            raw.tilde_sizes[j] += s.tilde_size_j;
            raw.pr_tilde[fallback] = raw.pr_tilde[fallback] + s.pr_tilde_fallback;
            raw.tilde_sizes[fallback] += s.tilde_size_fallback;
            raw.cond_entropy += s.entropy_term;
            raw.distortion += s.distortion;
        }
        (raw, index_of_e)
    }
}

/// Rearranges `v` into the next permutation in lexicographic order; returns
/// `false` (leaving `v` sorted) after the last one.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        v.reverse();
        return false;
    };
    let k = v.iter().rposition(|&x| x > v[i]).expect("a larger element exists");
    v.swap(i, k);
    v[i + 1..].reverse();
    true
}

/// Encoder output for every block of `X_E^n`, in lexicographic order.
///
/// Instead of testing every block against every word, each word's
/// conditional typical set is listed directly: it is a product over output
/// symbols `b` of the admissible arrangements on the positions where the
/// word equals `b`. Each block keeps the smallest index that lists it, which
/// is the encoder's rule.
pub(crate) fn index_map(cb: &Codebook, e_size: usize) -> Vec<u32> {
    let n = cb.n;
    let fallback = (cb.m_n - 1) as u32;
    let best: Vec<AtomicU32> = (0..e_size.pow(n as u32)).map(|_| AtomicU32::new(fallback)).collect();
    let slack = n as f64 * cb.delta;
    let place: Vec<u64> = (0..n).map(|t| (e_size as u64).pow((n - 1 - t) as u32)).collect();
    (0..fallback as usize).into_par_iter().for_each(|j| {
        let word = &cb.words[j];
        let mut lists: Vec<Vec<u64>> = Vec::new();
        for b in 0..cb.recon_size() {
            let pos: Vec<usize> = (0..n).filter(|&t| word[t] == b).collect();
            if pos.is_empty() {
                continue;
            }
            let mut offsets = Vec::new();
            for k in compositions(pos.len(), e_size) {
                if !row_typical(&k, pos.len(), cb.backward.row(b), slack) {
                    continue;
                }
                let mut arr: Vec<usize> = k
                    .iter()
                    .enumerate()
                    .flat_map(|(a, &c)| std::iter::repeat(a).take(c))
                    .collect();
                loop {
                    offsets.push(pos.iter().zip(&arr).map(|(&t, &a)| a as u64 * place[t]).sum());
                    if !next_permutation(&mut arr) {
                        break;
                    }
                }
            }
            if offsets.is_empty() {
                return;
            }
            lists.push(offsets);
        }
        let mut at = vec![0usize; lists.len()];
        loop {
            let x: u64 = lists.iter().zip(&at).map(|(l, &i)| l[i]).sum();
            best[x as usize].fetch_min(j as u32, Ordering::Relaxed);
            let mut d = lists.len();
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                at[d] += 1;
                if at[d] < lists[d].len() {
                    break;
                }
                at[d] = 0;
            }
        }
    });
    best.into_iter().map(AtomicU32::into_inner).collect()
}

/// Fixed partition of `0..total` into contiguous blocks, independent of the
/// thread count; fewer blocks when each carries an `m`-long accumulator.
fn block_ranges_capped(total: u64, m: usize) -> Vec<(u64, u64)> {
    let blocks = total.clamp(1, 256).min(((1usize << 24) / m.max(1)).max(1) as u64);
    let per = total.div_ceil(blocks).max(1);
    (0..blocks)
        .map(|b| (b * per, ((b + 1) * per).min(total)))
        .filter(|(lo, hi)| lo < hi)
        .collect()
}

/// Exact `(r_n, u_n, e_n)` of the code defined by `cb`, by enumerating every
/// `x_K^n`, together with the index sets and the three routes to
/// `Pr{J = j}`.
pub fn measure_exact(
    src: &SourceModel<f64>,
    e: &EncodedSet,
    w: &Channel<f64>,
    cb: &Codebook,
) -> Result<(EmpiricalMeasures, PartitionSets)> {
    let view = src.view(e)?;
    check_codebook(&view, w, cb)?;
    let n = cb.n;
    check_budget(
        "exact codec measurement (use Monte-Carlo mode instead)",
        space_size(view.k_size, n),
    )?;

    let mut k_of = vec![0; view.e_size * view.c_size];
    for k in 0..view.k_size {
        k_of[view.e_of_k[k] * view.c_size + view.c_of_k[k]] = k;
    }
    let mut joint_k = vec![0.0; view.k_size * view.recon_size];
    for k in 0..view.k_size {
        for b in 0..view.recon_size {
            joint_k[k * view.recon_size + b] = view.p_k[k] * w.get(view.e_of_k[k], b);
        }
    }
    let ctx = Ctx {
        view: &view,
        cb,
        n,
        k_of,
        backward_k: super::backward_channel(&joint_k, view.k_size, view.recon_size),
        slack2: n as f64 * 2.0 * cb.delta,
        h_space: view.h_size.pow(n as u32),
    };

    let (measures, sets) = match integer_weights(&view.p_k, n) {
        Some(c) => {
            let total = c.iter().sum::<u128>().pow(n as u32);
            let (raw, index_of_e) = ctx.run(&c, total);
            let identical = raw.pr_j == raw.pr_a && raw.pr_a == raw.pr_b;
            finish(&ctx, src, raw, index_of_e, total, true, identical)
        }
        None => {
            let (raw, index_of_e) = ctx.run(&view.p_k, 1.0);
            let diff = max_diff(&raw);
            finish(&ctx, src, raw, index_of_e, 1.0, false, diff <= 1e-12)
        }
    };
    Ok((measures, sets))
}

fn max_diff(raw: &Raw<f64>) -> f64 {
    raw.pr_j
        .iter()
        .zip(&raw.pr_a)
        .zip(&raw.pr_b)
        .map(|((a, b), c)| (a - b).abs().max((b - c).abs()))
        .fold(0.0, f64::max)
}

fn finish<M: Mass>(
    ctx: &Ctx,
    src: &SourceModel<f64>,
    raw: Raw<M>,
    index_of_e: Vec<u32>,
    total: M,
    exact: bool,
    identical: bool,
) -> (EmpiricalMeasures, PartitionSets) {
    let to_f = |v: &[M]| v.iter().map(|m| m.ratio(total)).collect::<Vec<f64>>();
    let (pr_j, pr_a, pr_b) = (to_f(&raw.pr_j), to_f(&raw.pr_a), to_f(&raw.pr_b));
    let max_identity_diff = pr_j
        .iter()
        .zip(&pr_a)
        .zip(&pr_b)
        .map(|((a, b), c)| (a - b).abs().max((b - c).abs()))
        .fold(0.0, f64::max);
    let n = ctx.n;
    let h = src.hidden_entropy();
    let e_n = raw.cond_entropy / n as f64;
    let measures = EmpiricalMeasures {
        n,
        m_n: ctx.cb.m_n,
        rate_target: ctx.cb.rate_target,
        r_n: ctx.cb.r_n(),
        u_n: raw.distortion / n as f64,
        u_n_stderr: None,
        e_n: Some(e_n),
        l_n: Some(h - e_n),
        hidden_entropy: h,
        mode: MeasureMode::Exact,
        exact_arithmetic: exact,
        trials: None,
    };
    let sets = PartitionSets {
        n,
        m_n: ctx.cb.m_n,
        index_of_e,
        pr_tilde: to_f(&raw.pr_tilde),
        pr_j,
        pr_a,
        pr_b,
        a_sizes: raw.a_sizes,
        b_sizes: raw.b_sizes,
        tilde_sizes: raw.tilde_sizes,
        mass_identity: identical,
        max_identity_diff,
        exact_arithmetic: exact,
    };
    (measures, sets)
}

#[cfg(test)]
mod tests {
    use super::super::tests::source3;
    use super::super::generate_codebook;
    use super::*;
    use crate::prob::{conditional_entropy, JointPmf};

    #[test]
    fn permutations_of_a_multiset() {
        let mut v = vec![0, 0, 1, 2];
        let mut seen = vec![v.clone()];
        while next_permutation(&mut v) {
            seen.push(v.clone());
        }
        assert_eq!(seen.len(), 12);
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(v, vec![0, 0, 1, 2]);
    }

    #[test]
    fn index_map_matches_forward_encoder() {
        let src = source3();
        for (attrs, n, rate, delta) in [(vec![0, 1], 5, 0.6, 0.25), (vec![0, 1, 2], 4, 0.75, 0.3), (vec![0], 6, 0.5, 0.1)] {
            let e = EncodedSet::new(attrs);
            let view = src.view(&e).unwrap();
            let rows: Vec<Vec<f64>> = (0..view.e_size)
                .map(|i| if i % 3 == 0 { vec![0.7, 0.3] } else { vec![0.25, 0.75] })
                .collect();
            let w = Channel::from_rows(&rows).unwrap();
            let cb = generate_codebook(&src, &e, &w, n, rate, delta, 5).unwrap();
            let map = index_map(&cb, view.e_size);
            let mut x = vec![0; n];
            for (i, &j) in map.iter().enumerate() {
                decode_index(i as u64, view.e_size, &mut x);
                assert_eq!(super::super::encode(&cb, &x).unwrap(), j as usize + 1);
            }
        }
    }

    #[test]
    fn rational_recovery() {
        assert_eq!(small_rational(0.125, 1000), Some((1, 8)));
        assert_eq!(small_rational(0.3, 1000), Some((3, 10)));
        assert_eq!(small_rational(1.0 / 3.0, 1000), Some((1, 3)));
        assert_eq!(small_rational(0.0, 10), Some((0, 1)));
        assert_eq!(small_rational(std::f64::consts::FRAC_1_SQRT_2, 1000), None);
        let c = integer_weights(&[0.2, 0.05, 0.1, 0.15, 0.05, 0.1, 0.05, 0.3], 8).unwrap();
        assert_eq!(c, vec![4, 1, 2, 3, 1, 2, 1, 6]);
        assert!(integer_weights(&[0.5, 0.5], 200).is_none());
    }

    fn bsc(eps: f64) -> Channel<f64> {
        Channel::from_rows(&[vec![1.0 - eps, eps], vec![eps, 1.0 - eps]]).unwrap()
    }

    #[test]
    fn single_codeword_leaks_nothing() {
        let src = source3();
        let e = EncodedSet::new(vec![0, 1]);
        let w = Channel::from_rows(&[vec![0.9, 0.1], vec![0.7, 0.3], vec![0.2, 0.8], vec![0.4, 0.6]]).unwrap();
        let cb = generate_codebook(&src, &e, &w, 5, 0.0, 0.3, 2).unwrap();
        let (m, sets) = measure_exact(&src, &e, &w, &cb).unwrap();
        assert!(m.exact_arithmetic && sets.mass_identity);
        assert!((m.e_n.unwrap() - src.hidden_entropy()).abs() < 1e-12);
        assert_eq!(sets.pr_b, vec![1.0]);
    }

    #[test]
    fn blocklength_one_matches_single_letter_entropy() {
        let src = source3();
        let e = EncodedSet::new(vec![0, 1]);
        let w = Channel::from_rows(&[vec![0.9, 0.1], vec![0.7, 0.3], vec![0.2, 0.8], vec![0.4, 0.6]]).unwrap();
        let cb = generate_codebook(&src, &e, &w, 1, 1.0, 0.6, 4).unwrap();
        let (m, sets) = measure_exact(&src, &e, &w, &cb).unwrap();
        // Oracle: H(X_H | f(X_E)) from the joint of (X_H, f(X_E)).
        let view = src.view(&e).unwrap();
        let mut joint = vec![0.0; view.h_size * cb.m_n];
        for k in 0..view.k_size {
            let f = sets.index_of_e[view.e_of_k[k]] as usize;
            joint[view.h_of_k[k] * cb.m_n + f] += view.p_k[k];
        }
        let j = JointPmf::new(vec![view.h_size, cb.m_n], joint).unwrap();
        let want = conditional_entropy(&j, &[0], &[1]).unwrap();
        assert!((m.e_n.unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn identities_and_bounds_on_small_matrix() {
        let src = source3();
        let view_h_given_e = |e: &EncodedSet| {
            let v = src.view(e).unwrap();
            let j = JointPmf::new(vec![v.h_size, v.e_size], v.p_he.clone()).unwrap();
            conditional_entropy(&j, &[0], &[1]).unwrap()
        };
        for attrs in [vec![0], vec![0, 1], vec![0, 1, 2]] {
            let e = EncodedSet::new(attrs);
            let view = src.view(&e).unwrap();
            let rows: Vec<Vec<f64>> = (0..view.e_size)
                .map(|i| if view.r_of_e[i] == 0 { vec![0.85, 0.15] } else { vec![0.2, 0.8] })
                .collect();
            let w = Channel::from_rows(&rows).unwrap();
            for n in [3, 5] {
                let cb = generate_codebook(&src, &e, &w, n, 0.5, 0.3, 7).unwrap();
                let (m, sets) = measure_exact(&src, &e, &w, &cb).unwrap();
                assert!(sets.exact_arithmetic && sets.mass_identity, "{sets:?}");
                assert_eq!(sets.max_identity_diff, 0.0);
                assert!(sets.a_is_partition());
                assert_eq!(sets.b_sizes.iter().sum::<u64>(), 8u64.pow(n as u32));
                assert_eq!(sets.tilde_sizes.iter().sum::<u64>(), 8u64.pow(n as u32));
                assert!(sets.tilde_within_b());
                let e_n = m.e_n.unwrap();
                assert!(e_n >= view_h_given_e(&e) - 1e-9 && e_n <= src.hidden_entropy() + 1e-9);
                assert!(m.u_n >= 0.0 && m.u_n <= 1.0);
            }
        }
    }

    #[test]
    fn float_mode_when_source_is_not_rational() {
        let p = 0.1 * std::f64::consts::PI / 3.0;
        let src = crate::model::SourceSpec {
            sizes: vec![2, 2],
            revealed: vec![0],
            hidden: vec![1],
            joint: vec![p, 0.3, 0.3, 0.4 - p],
            recon_size: None,
            distortion: None,
        }
        .build()
        .unwrap();
        let e = EncodedSet::new(vec![0]);
        let w = bsc(0.1);
        let cb = generate_codebook(&src, &e, &w, 4, 0.5, 0.3, 1).unwrap();
        let (m, sets) = measure_exact(&src, &e, &w, &cb).unwrap();
        assert!(!m.exact_arithmetic);
        assert!(sets.mass_identity && sets.max_identity_diff < 1e-12);
    }
}
