//! The random-coding scheme behind achievability: a codebook of `m_n` words
//! drawn uniformly from the typical set of `X̂`, a typicality encoder with a
//! reserved fallback index, and a table-lookup decoder.
//!
//! [`measure_exact`] enumerates every source block and reports `r_n`, `u_n`
//! and the equivocation `e_n = H(X_H^n | J_n) / n` exactly, together with the
//! index sets `A(j)`, `B(j)` and `Ã(j)`. [`measure_mc`] estimates `u_n` by
//! sampling when the block space is too large.
//!
//! Indices are 1-based in the public API, so the fallback index is `m_n`.

mod bounds;
mod exact;

pub use bounds::{check_achievability_bounds, achievability_bounds, BoundCheck, BoundStatus, BoundsReport};
pub use exact::{measure_exact, PartitionSets};
pub use crate::types::delta_schedule;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::model::{EncodedSet, EncodedView, SourceModel};
use crate::prob::Channel;
use crate::types::{compositions, counts_typical, row_typical, Sequence};

/// Largest codebook [`generate_codebook`] will build.
pub const CODEBOOK_LIMIT: f64 = 1e6;

/// `m_n = ceil(2^{nR})`.
pub fn codeword_count(n: usize, rate: f64) -> Result<usize> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return usage(format!("rate must be a finite nonnegative number, got {rate}"));
    }
    let exponent = n as f64 * rate;
    if exponent > CODEBOOK_LIMIT.log2() {
        return Err(Error::Budget {
            what: "codebook".into(),
            required: exponent.exp2(),
            limit: CODEBOOK_LIMIT,
        });
    }
    Ok(exponent.exp2().ceil() as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Codebook {
    pub n: usize,
    pub rate_target: f64,
    pub m_n: usize,
    /// `words[j - 1]` is codeword `j`.
    pub words: Vec<Sequence>,
    pub delta: f64,
    pub seed: u64,
    /// Marginal of `X̂` the words are typical for.
    pub recon_marginal: Vec<f64>,
    /// Marginal of `X_E`.
    pub e_marginal: Vec<f64>,
    /// `P(x_E | x̂)`, the law the encoder tests `x_E^n` against.
    pub backward: Channel<f64>,
}

impl Codebook {
    /// `(1/n) log2 m_n`.
    pub fn r_n(&self) -> f64 {
        (self.m_n as f64).log2() / self.n as f64
    }

    pub fn e_size(&self) -> usize {
        self.backward.cols()
    }

    pub fn recon_size(&self) -> usize {
        self.backward.rows()
    }
}

/// Row-normalizes the columns of a row-major `rows x cols` joint: returns
/// `P(row | col)` as a `cols x rows` channel. Columns with no mass get a
/// uniform row.
pub(crate) fn backward_channel(joint: &[f64], rows: usize, cols: usize) -> Channel<f64> {
    let mut probs = Vec::with_capacity(rows * cols);
    for b in 0..cols {
        let mass: f64 = (0..rows).map(|a| joint[a * cols + b]).sum();
        for a in 0..rows {
            probs.push(if mass > 0.0 {
                joint[a * cols + b] / mass
            } else {
                1.0 / rows as f64
            });
        }
    }
    Channel::from_raw(cols, rows, probs)
}

fn checked_multinomial(k: &[usize]) -> Option<u128> {
    let mut left = 0;
    let mut acc: u128 = 1;
    for &ki in k {
        left += ki;
        let mut b: u128 = 1;
        for i in 0..ki.min(left - ki) {
            b = b.checked_mul((left - i) as u128)? / (i + 1) as u128;
        }
        acc = acc.checked_mul(b)?;
    }
    Some(acc)
}

pub fn generate_codebook(
    src: &SourceModel<f64>,
    e: &EncodedSet,
    w: &Channel<f64>,
    n: usize,
    rate: f64,
    delta: f64,
    seed: u64,
) -> Result<Codebook> {
    if n == 0 || !(delta > 0.0) {
        return usage("blocklength and delta must be positive");
    }
    let view = src.view(e)?;
    view.check_channel(w)?;
    let m_n = codeword_count(n, rate)?;
    let q = view.output_marginal(w.probs());
    let joint = view.encoded_joint(w);
    let backward = backward_channel(&joint, view.e_size, view.recon_size);

    let overflow = || Error::Budget {
        what: "typical-set size".into(),
        required: (q.len() as f64).powi(n as i32),
        limit: u128::MAX as f64,
    };
    let mut classes = Vec::new();
    let mut total: u128 = 0;
    for k in compositions(n, q.len()) {
        if counts_typical(&k, n, &q, delta) {
            let size = checked_multinomial(&k).ok_or_else(overflow)?;
            total = total.checked_add(size).ok_or_else(overflow)?;
            classes.push((total, k));
        }
    }
    if total == 0 {
        return Err(Error::EmptyTypicalSet { n, delta });
    }

    let words = (0..m_n)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let r = rng.gen_range(0..total);
            let at = classes.partition_point(|(upto, _)| *upto <= r);
            let counts = &classes[at].1;
            let mut word: Sequence = counts
                .iter()
                .enumerate()
                .flat_map(|(b, &c)| std::iter::repeat(b).take(c))
                .collect();
            word.shuffle(&mut rng);
            word
        })
        .collect();

    Ok(Codebook {
        n,
        rate_target: rate,
        m_n,
        words,
        delta,
        seed,
        recon_marginal: q,
        e_marginal: view.p_e.clone(),
        backward,
    })
}

/// Encoder state precomputed from a codebook.
pub(crate) struct Encoder<'a> {
    cb: &'a Codebook,
    word_counts: Vec<Vec<usize>>,
    slack: f64,
    /// `None` when some word is not delta-typical, so the filter would be
    /// unsound.
    prefilter_slack: Option<f64>,
}

impl<'a> Encoder<'a> {
    pub(crate) fn new(cb: &'a Codebook) -> Self {
        let r = cb.recon_size();
        let word_counts: Vec<Vec<usize>> = cb
            .words
            .iter()
            .map(|w| {
                let mut c = vec![0; r];
                w.iter().for_each(|&b| c[b] += 1);
                c
            })
            .collect();
        let n = cb.n as f64;
        let typical_words = word_counts
            .iter()
            .all(|c| counts_typical(c, cb.n, &cb.recon_marginal, cb.delta));
        Self {
            cb,
            word_counts,
            slack: n * cb.delta,
            // With every word delta-typical, any x_E conditionally typical
            // with one of them is 2 delta |X̂|-typical for P_E.
            prefilter_slack: typical_words.then(|| n * 2.0 * cb.delta * r as f64 + 1e-9),
        }
    }

    fn prefilter(&self, x: &[usize]) -> bool {
        let Some(slack) = self.prefilter_slack else {
            return true;
        };
        let mut counts = vec![0usize; self.cb.e_size()];
        x.iter().for_each(|&a| counts[a] += 1);
        let n = self.cb.n as f64;
        counts.iter().zip(&self.cb.e_marginal).all(|(&c, &p)| {
            !(p == 0.0 && c > 0) && (c as f64 - n * p).abs() <= slack
        })
    }

    fn matches(&self, x: &[usize], j: usize, joint: &mut [usize]) -> bool {
        let es = self.cb.e_size();
        joint.iter_mut().for_each(|c| *c = 0);
        for (&b, &a) in self.cb.words[j].iter().zip(x) {
            joint[b * es + a] += 1;
        }
        self.word_counts[j]
            .iter()
            .enumerate()
            .all(|(b, &nb)| row_typical(&joint[b * es..(b + 1) * es], nb, self.cb.backward.row(b), self.slack))
    }

    /// 0-based index; `m_n - 1` is the fallback.
    pub(crate) fn encode_digits(&self, x: &[usize], joint: &mut [usize]) -> usize {
        let fallback = self.cb.m_n - 1;
        if !self.prefilter(x) {
            return fallback;
        }
        (0..self.cb.m_n).find(|&j| self.matches(x, j, joint)).unwrap_or(fallback)
    }

    pub(crate) fn scratch(&self) -> Vec<usize> {
        vec![0; self.cb.recon_size() * self.cb.e_size()]
    }
}

/// Smallest 1-based `j` with `x_e ∈ T_delta^n(X_E | word j)`, or `m_n` when
/// no word qualifies. Uses the codebook's `delta`.
pub fn encode(cb: &Codebook, x_e: &[usize]) -> Result<usize> {
    if x_e.len() != cb.n {
        return usage(format!("block has length {}, codebook expects {}", x_e.len(), cb.n));
    }
    if x_e.iter().any(|&a| a >= cb.e_size()) {
        return usage("block symbol outside X_E");
    }
    let enc = Encoder::new(cb);
    let mut scratch = enc.scratch();
    Ok(enc.encode_digits(x_e, &mut scratch) + 1)
}

/// Codeword `j` (1-based).
pub fn decode(cb: &Codebook, j: usize) -> Result<&Sequence> {
    if j == 0 || j > cb.m_n {
        return usage(format!("index {j} outside 1..={}", cb.m_n));
    }
    Ok(&cb.words[j - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasures {
    pub n: usize,
    pub m_n: usize,
    pub rate_target: f64,
    /// `(1/n) log2 m_n`.
    pub r_n: f64,
    /// Expected per-symbol distortion.
    pub u_n: f64,
    /// Standard error of `u_n` (Monte Carlo with at least two trials).
    pub u_n_stderr: Option<f64>,
    /// `(1/n) H(X_H^n | J_n)`; exact mode only.
    pub e_n: Option<f64>,
    /// `H(X_H) - e_n`.
    pub l_n: Option<f64>,
    pub hidden_entropy: f64,
    pub mode: MeasureMode,
    /// Probabilities were summed as integers over a common denominator.
    pub exact_arithmetic: bool,
    pub trials: Option<usize>,
}

pub(crate) fn check_codebook(view: &EncodedView<f64>, w: &Channel<f64>, cb: &Codebook) -> Result<()> {
    view.check_channel(w)?;
    if cb.e_size() != view.e_size || cb.recon_size() != view.recon_size {
        return usage("codebook was generated for a different encoded set or reconstruction alphabet");
    }
    if cb.words.len() != cb.m_n || cb.m_n == 0 {
        return usage("codebook has an inconsistent number of words");
    }
    Ok(())
}

/// Monte-Carlo estimate of `u_n`. Trial `t` draws its block from its own
/// stream of the seeded generator, so the result does not depend on the
/// number of threads.
pub fn measure_mc(
    src: &SourceModel<f64>,
    e: &EncodedSet,
    w: &Channel<f64>,
    cb: &Codebook,
    trials: usize,
    seed: u64,
) -> Result<EmpiricalMeasures> {
    if trials == 0 {
        return usage("trials must be at least 1");
    }
    let view = src.view(e)?;
    check_codebook(&view, w, cb)?;
    let sampler = WeightedIndex::new(&view.p_k).map_err(|e| Error::InvalidPmf(e.to_string()))?;
    let enc = Encoder::new(cb);
    let n = cb.n;
    let per_trial: Vec<f64> = (0..trials)
        .into_par_iter()
        .map_init(
            || (vec![0usize; n], enc.scratch()),
            |(xe, scratch), t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let xk: Vec<usize> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
                for (d, &k) in xe.iter_mut().zip(&xk) {
                    *d = view.e_of_k[k];
                }
                let word = &cb.words[enc.encode_digits(xe, scratch)];
                xk.iter()
                    .zip(word)
                    .map(|(&k, &b)| view.cost(view.e_of_k[k], b))
                    .sum::<f64>()
                    / n as f64
            },
        )
        .collect();
    let mean = per_trial.iter().sum::<f64>() / trials as f64;
    let stderr = (trials > 1).then(|| {
        let var = per_trial.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        (var / trials as f64).sqrt()
    });
    Ok(EmpiricalMeasures {
        n,
        m_n: cb.m_n,
        rate_target: cb.rate_target,
        r_n: cb.r_n(),
        u_n: mean,
        u_n_stderr: stderr,
        e_n: None,
        l_n: None,
        hidden_entropy: src.hidden_entropy(),
        mode: MeasureMode::MonteCarlo,
        exact_arithmetic: false,
        trials: Some(trials),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SourceSpec;
    use crate::types::{is_cond_typical, is_typical};
    use crate::Pmf64;

    pub(crate) fn source3() -> SourceModel<f64> {
        SourceSpec {
            sizes: vec![2, 2, 2],
            revealed: vec![0],
            hidden: vec![1, 2],
            joint: vec![0.20, 0.05, 0.10, 0.15, 0.05, 0.10, 0.05, 0.30],
            recon_size: None,
            distortion: None,
        }
        .build()
        .unwrap()
    }

    fn bsc(eps: f64) -> Channel<f64> {
        Channel::from_rows(&[vec![1.0 - eps, eps], vec![eps, 1.0 - eps]]).unwrap()
    }

    #[test]
    fn codeword_counts() {
        assert_eq!(codeword_count(8, 0.0).unwrap(), 1);
        assert_eq!(codeword_count(8, 0.75).unwrap(), 64);
        assert_eq!(codeword_count(6, 0.5).unwrap(), 8);
        assert_eq!(codeword_count(5, 0.5).unwrap(), 6);
        assert!(matches!(codeword_count(40, 1.0), Err(Error::Budget { .. })));
    }

    #[test]
    fn codebook_words_are_typical_and_reproducible() {
        let src = source3();
        let e = EncodedSet::new(vec![0]);
        let w = bsc(0.2);
        let cb = generate_codebook(&src, &e, &w, 8, 0.5, 0.15, 11).unwrap();
        assert_eq!(cb.m_n, 16);
        let q = Pmf64::new(cb.recon_marginal.clone()).unwrap();
        assert!(cb.words.iter().all(|x| is_typical(x, &q, 0.15)));
        let again = generate_codebook(&src, &e, &w, 8, 0.5, 0.15, 11).unwrap();
        assert_eq!(format!("{:?}", cb.words), format!("{:?}", again.words));
        let other = generate_codebook(&src, &e, &w, 8, 0.5, 0.15, 12).unwrap();
        assert_ne!(cb.words, other.words);
    }

    #[test]
    fn constant_channel_gives_constant_words() {
        let src = source3();
        let e = EncodedSet::new(vec![0]);
        let w = Channel::constant(2, 2, 1);
        let cb = generate_codebook(&src, &e, &w, 6, 0.5, 0.1, 0).unwrap();
        assert!(cb.words.iter().all(|x| x.iter().all(|&b| b == 1)));
        let cb = generate_codebook(&src, &e, &w, 6, 0.0, 0.1, 0).unwrap();
        assert_eq!(cb.m_n, 1);
    }

    #[test]
    fn empty_typical_set_is_reported() {
        let src = source3();
        let e = EncodedSet::new(vec![0]);
        // Marginal of X̂ is (0.5, 0.5) only approximately reachable at odd n.
        let w = Channel::identity(2);
        let r = generate_codebook(&src, &e, &w, 3, 0.5, 0.01, 0);
        assert!(matches!(r, Err(Error::EmptyTypicalSet { n: 3, .. })));
    }

    #[test]
    fn encoder_picks_smallest_qualifying_index() {
        let src = source3();
        let e = EncodedSet::new(vec![0]);
        let w = bsc(0.2);
        let mut cb = generate_codebook(&src, &e, &w, 4, 0.5, 0.3, 1).unwrap();
        cb.words = vec![vec![0, 1, 0, 1], vec![0, 1, 0, 1], vec![1, 1, 0, 0], vec![0, 0, 1, 1]];
        // x_E equal to the first word qualifies for words 1 and 2.
        let x = [0, 1, 0, 1];
        assert!(is_cond_typical(&x, &cb.words[0], &cb.backward, cb.delta).unwrap());
        assert_eq!(encode(&cb, &x).unwrap(), 1);
        // Oracle: scan every word with the conditional-typicality test.
        let mut xe = vec![0; 4];
        for idx in 0..16u64 {
            crate::types::decode_index(idx, 2, &mut xe);
            let want = (0..cb.m_n)
                .find(|&j| is_cond_typical(&xe, &cb.words[j], &cb.backward, cb.delta).unwrap())
                .map_or(cb.m_n, |j| j + 1);
            assert_eq!(encode(&cb, &xe).unwrap(), want, "x_E = {xe:?}");
        }
    }

    #[test]
    fn encoder_falls_back_to_last_index() {
        let src = source3();
        let e = EncodedSet::new(vec![0]);
        let w = bsc(0.0);
        let cb = generate_codebook(&src, &e, &w, 4, 0.25, 0.1, 3).unwrap();
        // With a noiseless channel only an exact copy of a word qualifies.
        let x: Vec<usize> = cb.words[0].iter().map(|&b| 1 - b).collect();
        assert_eq!(encode(&cb, &x).unwrap(), cb.m_n);
        assert_eq!(decode(&cb, cb.m_n).unwrap(), &cb.words[cb.m_n - 1]);
        assert!(decode(&cb, 0).is_err() && decode(&cb, cb.m_n + 1).is_err());
        assert!(encode(&cb, &[0, 1]).is_err());
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let src = source3();
        let e = EncodedSet::new(vec![0, 1]);
        let w = Channel::from_rows(&[vec![0.9, 0.1], vec![0.8, 0.2], vec![0.1, 0.9], vec![0.3, 0.7]]).unwrap();
        let cb = generate_codebook(&src, &e, &w, 10, 0.5, 0.2, 5).unwrap();
        let a = measure_mc(&src, &e, &w, &cb, 500, 9).unwrap();
        let b = measure_mc(&src, &e, &w, &cb, 500, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.u_n >= 0.0 && a.u_n <= 1.0);
        assert!(a.u_n_stderr.unwrap() > 0.0);
        let one = measure_mc(&src, &e, &w, &cb, 1, 9).unwrap();
        assert!(one.u_n_stderr.is_none());
        assert_eq!(one.u_n * 10.0, (one.u_n * 10.0).round());
    }
}
