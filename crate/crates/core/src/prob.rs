//! Finite-alphabet probability vectors, joint distributions, channels and the
//! information measures built on them. All logarithms are base 2.

use crate::error::{usage, Error, Result};
use crate::scalar::{Real, Scalar};

/// Probability vector over `{0, .., m-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf<T> {
    probs: Vec<T>,
}

fn check_probs<T: Scalar>(probs: &[T], what: &str) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidPmf(format!("{what} is empty")));
    }
    let mut sum = T::zero();
    for (i, &p) in probs.iter().enumerate() {
        if p < T::zero() {
            return Err(Error::InvalidPmf(format!(
                "{what}: entry {i} is negative ({p:?})"
            )));
        }
        sum += p;
    }
    if (sum - T::one()).abs() > T::tolerance() {
        return Err(Error::InvalidPmf(format!(
            "{what}: entries sum to {sum:?}, not 1"
        )));
    }
    Ok(())
}

impl<T: Scalar> Pmf<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        check_probs(&probs, "pmf")?;
        Ok(Self { probs })
    }

    pub fn uniform(m: usize) -> Self {
        assert!(m > 0);
        Self {
            probs: vec![T::one() / T::from_count(m); m],
        }
    }

    pub fn point_mass(m: usize, at: usize) -> Self {
        assert!(at < m);
        let mut probs = vec![T::zero(); m];
        probs[at] = T::one();
        Self { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn get(&self, i: usize) -> T {
        self.probs[i]
    }

    pub fn into_vec(self) -> Vec<T> {
        self.probs
    }

    /// View as a one-axis joint distribution.
    pub fn to_joint(&self) -> JointPmf<T> {
        JointPmf {
            shape: vec![self.probs.len()],
            probs: self.probs.clone(),
        }
    }
}

/// Distribution over a product of finite alphabets, stored row-major
/// (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf<T> {
    shape: Vec<usize>,
    probs: Vec<T>,
}

impl<T: Scalar> JointPmf<T> {
    pub fn new(shape: Vec<usize>, probs: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return usage(format!("joint shape {shape:?} must be nonempty with positive sizes"));
        }
        let cells: usize = shape.iter().product();
        if cells != probs.len() {
            return usage(format!(
                "joint shape {shape:?} has {cells} cells but {} probabilities were given",
                probs.len()
            ));
        }
        check_probs(&probs, "joint pmf")?;
        Ok(Self { shape, probs })
    }

    /// Product distribution of independent factors, axes in argument order.
    pub fn product(factors: &[&Pmf<T>]) -> Self {
        let mut shape = Vec::with_capacity(factors.len());
        let mut probs = vec![T::one()];
        for f in factors {
            shape.push(f.len());
            probs = probs
                .iter()
                .flat_map(|&a| f.probs().iter().map(move |&b| a * b))
                .collect();
        }
        Self { shape, probs }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn num_axes(&self) -> usize {
        self.shape.len()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for a in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.shape[a + 1];
        }
        strides
    }

    pub fn get(&self, index: &[usize]) -> T {
        let flat = index
            .iter()
            .zip(self.strides())
            .map(|(i, s)| i * s)
            .sum::<usize>();
        self.probs[flat]
    }

    fn check_axes(&self, axes: &[usize], what: &str) -> Result<()> {
        for (k, &a) in axes.iter().enumerate() {
            if a >= self.shape.len() {
                return usage(format!("{what}: axis {a} out of range for {} axes", self.shape.len()));
            }
            if axes[..k].contains(&a) {
                return usage(format!("{what}: axis {a} listed twice"));
            }
        }
        Ok(())
    }

    /// Sums out every axis not in `keep`. The result's axes follow the order
    /// of `keep`.
    pub fn marginalize(&self, keep: &[usize]) -> Result<JointPmf<T>> {
        if keep.is_empty() {
            return usage("marginalize needs at least one axis to keep");
        }
        self.check_axes(keep, "marginalize")?;
        let out_shape: Vec<usize> = keep.iter().map(|&a| self.shape[a]).collect();
        let out_cells: usize = out_shape.iter().product();
        let mut out = vec![T::zero(); out_cells];
        let mut out_strides = vec![1; keep.len()];
        for k in (0..keep.len().saturating_sub(1)).rev() {
            out_strides[k] = out_strides[k + 1] * out_shape[k + 1];
        }
        let mut idx = vec![0usize; self.shape.len()];
        for &p in &self.probs {
            let o: usize = keep.iter().zip(&out_strides).map(|(&a, s)| idx[a] * s).sum();
            out[o] += p;
            odometer_step(&mut idx, &self.shape);
        }
        Ok(JointPmf {
            shape: out_shape,
            probs: out,
        })
    }

    /// Flattens the kept axes into a single probability vector.
    pub fn marginal_pmf(&self, keep: &[usize]) -> Result<Pmf<T>> {
        Ok(Pmf {
            probs: self.marginalize(keep)?.probs,
        })
    }
}

/// Advances a mixed-radix counter (last digit fastest). Returns false when it
/// wraps to all zeros.
pub(crate) fn odometer_step(idx: &mut [usize], radix: &[usize]) -> bool {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < radix[a] {
            return true;
        }
        idx[a] = 0;
    }
    false
}

/// Row-stochastic matrix `W(y | x)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Channel<T> {
    rows: usize,
    cols: usize,
    probs: Vec<T>,
}

impl<T: Scalar> Channel<T> {
    pub fn new(rows: usize, cols: usize, probs: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 || probs.len() != rows * cols {
            return usage(format!(
                "channel {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                probs.len()
            ));
        }
        for r in 0..rows {
            check_probs(&probs[r * cols..(r + 1) * cols], &format!("channel row {r}"))?;
        }
        Ok(Self { rows, cols, probs })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return usage("channel rows have unequal lengths");
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn identity(m: usize) -> Self {
        let mut probs = vec![T::zero(); m * m];
        for i in 0..m {
            probs[i * m + i] = T::one();
        }
        Self { rows: m, cols: m, probs }
    }

    /// Every input mapped to output `b` with certainty.
    pub fn constant(rows: usize, cols: usize, b: usize) -> Self {
        assert!(b < cols);
        let mut probs = vec![T::zero(); rows * cols];
        for r in 0..rows {
            probs[r * cols + b] = T::one();
        }
        Self { rows, cols, probs }
    }

    /// Deterministic channel `x -> map[x]`.
    pub fn deterministic(map: &[usize], cols: usize) -> Self {
        let mut probs = vec![T::zero(); map.len() * cols];
        for (r, &b) in map.iter().enumerate() {
            probs[r * cols + b] = T::one();
        }
        Self {
            rows: map.len(),
            cols,
            probs,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.probs[x * self.cols + y]
    }

    pub fn row(&self, x: usize) -> &[T] {
        &self.probs[x * self.cols..(x + 1) * self.cols]
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, probs: Vec<T>) -> Self {
        debug_assert_eq!(probs.len(), rows * cols);
        Self { rows, cols, probs }
    }
}

/// `-sum p log2 p` of a raw vector, with `0 log 0 = 0`.
pub fn entropy_of<T: Real>(probs: &[T]) -> T {
    let mut h = T::zero();
    for &p in probs {
        if p > T::zero() {
            h -= p * p.log2();
        }
    }
    h
}

/// Shannon entropy in bits.
pub fn entropy<T: Real>(p: &Pmf<T>) -> T {
    entropy_of(p.probs())
}

fn disjoint(a: &[usize], b: &[usize], what: &str) -> Result<()> {
    if let Some(x) = a.iter().find(|x| b.contains(x)) {
        return usage(format!("{what}: axis {x} appears in both axis sets"));
    }
    Ok(())
}

/// Joint entropy of a set of axes. An empty set has entropy zero.
pub fn joint_entropy<T: Real>(j: &JointPmf<T>, axes: &[usize]) -> Result<T> {
    if axes.is_empty() {
        j.check_axes(axes, "joint_entropy")?;
        return Ok(T::zero());
    }
    Ok(entropy_of(j.marginalize(axes)?.probs()))
}

/// `H(target | given) = H(target, given) - H(given)`.
pub fn conditional_entropy<T: Real>(
    j: &JointPmf<T>,
    target: &[usize],
    given: &[usize],
) -> Result<T> {
    disjoint(target, given, "conditional_entropy")?;
    let both: Vec<usize> = target.iter().chain(given).copied().collect();
    let h = joint_entropy(j, &both)? - joint_entropy(j, given)?;
    Ok(h.max(T::zero()))
}

/// `I(A; B) = H(A) + H(B) - H(A, B)`, clamped at zero.
pub fn mutual_information<T: Real>(j: &JointPmf<T>, a: &[usize], b: &[usize]) -> Result<T> {
    disjoint(a, b, "mutual_information")?;
    let both: Vec<usize> = a.iter().chain(b).copied().collect();
    let i = joint_entropy(j, a)? + joint_entropy(j, b)? - joint_entropy(j, &both)?;
    Ok(i.max(T::zero()))
}

/// L1 distance `sum |p - q|`.
pub fn variational_distance<T: Scalar>(p: &Pmf<T>, q: &Pmf<T>) -> Result<T> {
    if p.len() != q.len() {
        return usage(format!(
            "variational_distance: alphabet sizes differ ({} vs {})",
            p.len(),
            q.len()
        ));
    }
    Ok(p.probs()
        .iter()
        .zip(q.probs())
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b).abs()))
}

/// Joint of `(input, output)` with entries `p(x) W(y|x)`.
pub fn compose<T: Scalar>(input: &Pmf<T>, w: &Channel<T>) -> Result<JointPmf<T>> {
    if input.len() != w.rows() {
        return usage(format!(
            "compose: input alphabet {} does not match channel rows {}",
            input.len(),
            w.rows()
        ));
    }
    let mut probs = Vec::with_capacity(w.rows() * w.cols());
    for x in 0..w.rows() {
        for y in 0..w.cols() {
            probs.push(input.get(x) * w.get(x, y));
        }
    }
    Ok(JointPmf {
        shape: vec![w.rows(), w.cols()],
        probs,
    })
}
