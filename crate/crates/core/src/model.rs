//! Source model: attributes, the revealed/hidden partition, the encoded set,
//! the source distribution and the distortion measure, plus evaluation of a
//! single test channel `W(x̂_R | x_E)`.
//!
//! Product alphabets are flattened row-major over attribute indices in
//! ascending order, so `X_E` for `E = {0, 2}` enumerates `(x_0, x_2)` with
//! `x_2` fastest.

use std::fmt;

use crate::error::{usage, Error, Result};
use crate::prob::{
    conditional_entropy, joint_entropy, mutual_information, odometer_step, Channel, JointPmf, Pmf,
};
use crate::scalar::{Real, Scalar};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSchema {
    sizes: Vec<usize>,
}

impl AttributeSchema {
    pub fn new(sizes: Vec<usize>) -> Self {
        Self { sizes }
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Size of the product alphabet over `attrs`.
    pub fn alphabet_size(&self, attrs: &[usize]) -> usize {
        attrs.iter().map(|&a| self.sizes[a]).product()
    }
}

/// Revealed attributes `R` and hidden attributes `H`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSpec {
    pub revealed: Vec<usize>,
    pub hidden: Vec<usize>,
}

impl PartitionSpec {
    pub fn new(mut revealed: Vec<usize>, mut hidden: Vec<usize>) -> Self {
        revealed.sort_unstable();
        hidden.sort_unstable();
        Self { revealed, hidden }
    }

    /// `H = K \ R`.
    pub fn from_revealed(k: usize, revealed: Vec<usize>) -> Self {
        let hidden = (0..k).filter(|a| !revealed.contains(a)).collect();
        Self::new(revealed, hidden)
    }
}

/// Attributes observed by the encoder, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedSet {
    encoded: Vec<usize>,
}

impl EncodedSet {
    pub fn new(mut encoded: Vec<usize>) -> Self {
        encoded.sort_unstable();
        encoded.dedup();
        Self { encoded }
    }

    pub fn attrs(&self) -> &[usize] {
        &self.encoded
    }

    pub fn is_subset_of(&self, other: &EncodedSet) -> bool {
        self.encoded.iter().all(|a| other.encoded.contains(a))
    }
}

impl fmt::Display for EncodedSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.encoded.iter().map(usize::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Schema,
    Partition,
    EncodedSet,
    Joint,
    Distortion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

/// Unvalidated source description, as read from a configuration file.
#[derive(Debug, Clone)]
pub struct SourceSpec<T> {
    pub sizes: Vec<usize>,
    pub revealed: Vec<usize>,
    pub hidden: Vec<usize>,
    /// Flat row-major joint over all attributes.
    pub joint: Vec<T>,
    /// Reproduction alphabet size; defaults to `|X_R|`.
    pub recon_size: Option<usize>,
    /// `|X_R|` rows by `recon_size` columns; defaults to Hamming.
    pub distortion: Option<Vec<Vec<T>>>,
}

fn push(out: &mut Vec<Violation>, kind: ViolationKind, message: String) {
    out.push(Violation { kind, message });
}

impl<T: Scalar> SourceSpec<T> {
    /// Lists every violated invariant of the source and of each encoded set.
    pub fn validate(&self, encoded: &[EncodedSet]) -> Vec<Violation> {
        use ViolationKind::*;
        let mut out = Vec::new();
        let k = self.sizes.len();
        if k < 2 {
            push(&mut out, Schema, format!("need at least 2 attributes, got {k}"));
        }
        for (a, &s) in self.sizes.iter().enumerate() {
            if s < 2 {
                push(&mut out, Schema, format!("attribute {a} has alphabet size {s} < 2"));
            }
        }
        let in_range = |a: &usize| *a < k;
        if self.revealed.is_empty() {
            push(&mut out, Partition, "revealed set R is empty".into());
        }
        if self.hidden.is_empty() {
            push(&mut out, Partition, "hidden set H is empty".into());
        }
        for a in self.revealed.iter().chain(&self.hidden) {
            if !in_range(a) {
                push(&mut out, Partition, format!("attribute index {a} out of range"));
            }
        }
        for a in &self.revealed {
            if self.hidden.contains(a) {
                push(&mut out, Partition, format!("attribute {a} is in both R and H"));
            }
        }
        for a in 0..k {
            if !self.revealed.contains(&a) && !self.hidden.contains(&a) {
                push(&mut out, Partition, format!("attribute {a} is in neither R nor H"));
            }
        }
        for e in encoded {
            for a in &self.revealed {
                if !e.attrs().contains(a) {
                    push(&mut out, EncodedSet, format!("encoded set {e} misses revealed attribute {a}"));
                }
            }
            for a in e.attrs() {
                if !in_range(a) {
                    push(&mut out, EncodedSet, format!("encoded set {e} has out-of-range attribute {a}"));
                }
            }
        }
        if out.iter().any(|v| v.kind == Schema) {
            return out;
        }
        let cells: usize = self.sizes.iter().product();
        if self.joint.len() != cells {
            push(
                &mut out,
                Joint,
                format!("joint has {} entries, schema needs {cells}", self.joint.len()),
            );
        } else if let Err(e) = Pmf::new(self.joint.clone()) {
            push(&mut out, Joint, e.to_string());
        }
        if self.revealed.iter().all(in_range) {
            let r_size: usize = self.revealed.iter().map(|&a| self.sizes[a]).product();
            let recon = self.recon_size.unwrap_or(r_size);
            if recon == 0 {
                push(&mut out, Distortion, "reproduction alphabet is empty".into());
            }
            match &self.distortion {
                None if recon != r_size => push(
                    &mut out,
                    Distortion,
                    format!("Hamming default needs recon_size = |X_R| = {r_size}, got {recon}"),
                ),
                None => {}
                Some(d) => {
                    if d.len() != r_size {
                        push(
                            &mut out,
                            Distortion,
                            format!("distortion has {} rows, |X_R| = {r_size}", d.len()),
                        );
                    }
                    for (i, row) in d.iter().enumerate() {
                        if row.len() != recon {
                            push(
                                &mut out,
                                Distortion,
                                format!("distortion row {i} has {} entries, expected {recon}", row.len()),
                            );
                        }
                        for (j, &v) in row.iter().enumerate() {
                            if v < T::zero() {
                                push(&mut out, Distortion, format!("distortion entry ({i},{j}) is negative"));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn build(&self) -> Result<SourceModel<T>> {
        let violations = self.validate(&[]);
        if !violations.is_empty() {
            let msgs: Vec<String> = violations.iter().map(Violation::to_string).collect();
            return usage(msgs.join("; "));
        }
        let schema = AttributeSchema::new(self.sizes.clone());
        let partition = PartitionSpec::new(self.revealed.clone(), self.hidden.clone());
        let joint = JointPmf::new(self.sizes.clone(), self.joint.clone())?;
        let r_size = schema.alphabet_size(&partition.revealed);
        let recon_size = self.recon_size.unwrap_or(r_size);
        let distortion: Vec<T> = match &self.distortion {
            Some(d) => d.concat(),
            None => (0..r_size)
                .flat_map(|a| (0..recon_size).map(move |b| if a == b { T::zero() } else { T::one() }))
                .collect(),
        };
        let d_max = distortion.iter().fold(T::zero(), |m, &v| m.max_of(v));
        Ok(SourceModel {
            schema,
            partition,
            joint,
            recon_size,
            distortion,
            d_max,
        })
    }
}

/// Validated source model.
#[derive(Debug, Clone)]
pub struct SourceModel<T> {
    schema: AttributeSchema,
    partition: PartitionSpec,
    joint: JointPmf<T>,
    recon_size: usize,
    /// Row-major `|X_R| x recon_size`.
    distortion: Vec<T>,
    d_max: T,
}

impl<T: Scalar> SourceModel<T> {
    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn partition(&self) -> &PartitionSpec {
        &self.partition
    }

    pub fn joint(&self) -> &JointPmf<T> {
        &self.joint
    }

    pub fn recon_size(&self) -> usize {
        self.recon_size
    }

    pub fn d_max(&self) -> T {
        self.d_max
    }

    pub fn distortion(&self, x_r: usize, x_hat: usize) -> T {
        self.distortion[x_r * self.recon_size + x_hat]
    }

    pub fn revealed_set(&self) -> EncodedSet {
        EncodedSet::new(self.partition.revealed.clone())
    }

    pub fn full_set(&self) -> EncodedSet {
        EncodedSet::new((0..self.schema.k()).collect())
    }

    pub fn check_encoded(&self, e: &EncodedSet) -> Result<()> {
        let k = self.schema.k();
        if e.attrs().iter().any(|&a| a >= k) {
            return usage(format!("encoded set {e} has attributes outside 0..{k}"));
        }
        if !self.partition.revealed.iter().all(|a| e.attrs().contains(a)) {
            return usage(format!("encoded set {e} must contain every revealed attribute"));
        }
        Ok(())
    }

    /// Precomputes projections and marginals for encoded set `e`.
    pub fn view(&self, e: &EncodedSet) -> Result<EncodedView<T>> {
        self.check_encoded(e)?;
        let sizes = self.schema.sizes();
        let k = sizes.len();
        let rev = &self.partition.revealed;
        let hid = &self.partition.hidden;
        let enc = e.attrs();
        let comp: Vec<usize> = (0..k).filter(|a| !enc.contains(a)).collect();
        let flat = |digits: &[usize], attrs: &[usize]| {
            attrs.iter().fold(0usize, |acc, &a| acc * sizes[a] + digits[a])
        };
        let k_size = self.schema.alphabet_size(&(0..k).collect::<Vec<_>>());
        let e_size = self.schema.alphabet_size(enc);
        let r_size = self.schema.alphabet_size(rev);
        let h_size = self.schema.alphabet_size(hid);
        let c_size = self.schema.alphabet_size(&comp);
        let mut e_of_k = Vec::with_capacity(k_size);
        let mut r_of_k = Vec::with_capacity(k_size);
        let mut h_of_k = Vec::with_capacity(k_size);
        let mut c_of_k = Vec::with_capacity(k_size);
        let mut r_of_e = vec![0usize; e_size];
        let mut p_e = vec![T::zero(); e_size];
        let mut p_h = vec![T::zero(); h_size];
        let mut p_he = vec![T::zero(); h_size * e_size];
        let mut digits = vec![0usize; k];
        for kk in 0..k_size {
            let (ei, ri, hi, ci) = (
                flat(&digits, enc),
                flat(&digits, rev),
                flat(&digits, hid),
                flat(&digits, &comp),
            );
            let p = self.joint.probs()[kk];
            e_of_k.push(ei);
            r_of_k.push(ri);
            h_of_k.push(hi);
            c_of_k.push(ci);
            r_of_e[ei] = ri;
            p_e[ei] += p;
            p_h[hi] += p;
            p_he[hi * e_size + ei] += p;
            odometer_step(&mut digits, sizes);
        }
        let recon = self.recon_size;
        let cost = (0..e_size)
            .flat_map(|ei| (0..recon).map(move |b| (ei, b)))
            .map(|(ei, b)| self.distortion(r_of_e[ei], b))
            .collect();
        Ok(EncodedView {
            encoded: e.clone(),
            k_size,
            e_size,
            r_size,
            h_size,
            c_size,
            recon_size: recon,
            e_of_k,
            r_of_k,
            h_of_k,
            c_of_k,
            r_of_e,
            p_k: self.joint.probs().to_vec(),
            p_e,
            p_h,
            p_he,
            cost,
            d_max: self.d_max,
        })
    }

    /// Joint over `(x_1, .., x_K, x̂)` with entries `p(x_K) W(x̂ | x_E)`, so
    /// that `X_{E^c} - X_E - X̂` is a Markov chain.
    pub fn induced_joint(&self, e: &EncodedSet, w: &Channel<T>) -> Result<JointPmf<T>> {
        let view = self.view(e)?;
        view.check_channel(w)?;
        let mut shape = self.schema.sizes().to_vec();
        shape.push(self.recon_size);
        let mut probs = Vec::with_capacity(view.k_size * self.recon_size);
        for kk in 0..view.k_size {
            let p = view.p_k[kk];
            let row = w.row(view.e_of_k[kk]);
            probs.extend(row.iter().map(|&q| p * q));
        }
        JointPmf::new(shape, probs)
    }

    /// Re-expresses a channel on `X_R` as a channel on `X_E` that ignores the
    /// hidden attributes in `E`.
    pub fn lift_channel(&self, e: &EncodedSet, w: &Channel<T>) -> Result<Channel<T>> {
        let view = self.view(e)?;
        if w.rows() != view.r_size || w.cols() != self.recon_size {
            return usage(format!(
                "lift_channel: expected a {}x{} channel on X_R, got {}x{}",
                view.r_size,
                self.recon_size,
                w.rows(),
                w.cols()
            ));
        }
        let probs = view
            .r_of_e
            .iter()
            .flat_map(|&r| w.row(r).iter().copied())
            .collect();
        Ok(Channel::from_raw(view.e_size, self.recon_size, probs))
    }
}

impl<T: Real> SourceModel<T> {
    pub fn hidden_entropy(&self) -> T {
        joint_entropy(&self.joint, &self.partition.hidden).expect("hidden axes are valid")
    }

    /// Rate, distortion, equivocation and leakage of one test channel,
    /// computed from the induced joint distribution.
    pub fn eval_point(&self, e: &EncodedSet, w: &Channel<T>) -> Result<PointEval<T>> {
        let joint = self.induced_joint(e, w)?;
        let recon_axis = [self.schema.k()];
        let rate = mutual_information(&joint, e.attrs(), &recon_axis)?;
        let rx = self.partition.revealed.clone();
        let mut axes = rx.clone();
        axes.push(self.schema.k());
        let pr = joint.marginalize(&axes)?;
        let recon = self.recon_size;
        let distortion = pr
            .probs()
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, &p)| acc + p * self.distortion(i / recon, i % recon));
        let equivocation = conditional_entropy(&joint, &self.partition.hidden, &recon_axis)?;
        let leakage = (self.hidden_entropy() - equivocation).max(T::zero());
        Ok(PointEval {
            rate,
            distortion,
            equivocation,
            leakage,
        })
    }
}

/// Coordinates of one test channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEval<T> {
    /// `I(X_E; X̂_R)` in bits.
    pub rate: T,
    /// `E d(X_R, X̂_R)`.
    pub distortion: T,
    /// `H(X_H | X̂_R)` in bits.
    pub equivocation: T,
    /// `I(X_H; X̂_R) = H(X_H) - H(X_H | X̂_R)` in bits.
    pub leakage: T,
}

/// Flattened projections and marginals of a source for one encoded set.
#[derive(Debug, Clone)]
pub struct EncodedView<T> {
    pub encoded: EncodedSet,
    pub k_size: usize,
    pub e_size: usize,
    pub r_size: usize,
    pub h_size: usize,
    /// `|X_{E^c}|` (1 when `E = K`).
    pub c_size: usize,
    pub recon_size: usize,
    pub e_of_k: Vec<usize>,
    pub r_of_k: Vec<usize>,
    pub h_of_k: Vec<usize>,
    pub c_of_k: Vec<usize>,
    pub r_of_e: Vec<usize>,
    pub p_k: Vec<T>,
    pub p_e: Vec<T>,
    pub p_h: Vec<T>,
    /// Row-major `h_size x e_size`.
    pub p_he: Vec<T>,
    /// Row-major `e_size x recon_size`: `d(r(e), x̂)`.
    pub cost: Vec<T>,
    pub d_max: T,
}

impl<T: Scalar> EncodedView<T> {
    pub fn check_channel(&self, w: &Channel<T>) -> Result<()> {
        if w.rows() != self.e_size || w.cols() != self.recon_size {
            return Err(Error::Usage(format!(
                "channel is {}x{} but X_E x X̂_R is {}x{}",
                w.rows(),
                w.cols(),
                self.e_size,
                self.recon_size
            )));
        }
        Ok(())
    }

    pub fn cost(&self, e: usize, b: usize) -> T {
        self.cost[e * self.recon_size + b]
    }

    /// `E d(X_R, X̂)` under channel probabilities `w` (row-major).
    pub fn expected_distortion(&self, w: &[T]) -> T {
        let mut d = T::zero();
        for (i, &p) in w.iter().enumerate() {
            d += self.p_e[i / self.recon_size] * p * self.cost[i];
        }
        d
    }

    /// Smallest distortion of any channel: every row on its cheapest output.
    pub fn min_distortion(&self) -> T {
        let mut total = T::zero();
        for e in 0..self.e_size {
            let best = (0..self.recon_size)
                .map(|b| self.cost(e, b))
                .fold(None, |m: Option<T>, c| Some(match m {
                    Some(m) if m <= c => m,
                    _ => c,
                }))
                .unwrap();
            total += self.p_e[e] * best;
        }
        total
    }

    /// `min_b E d(X_R, b)` and the minimizing `b` (smallest index on ties):
    /// the distortion reached by a constant reproduction.
    pub fn constant_distortion(&self) -> (T, usize) {
        let mut best: Option<(T, usize)> = None;
        for b in 0..self.recon_size {
            let mut d = T::zero();
            for e in 0..self.e_size {
                d += self.p_e[e] * self.cost(e, b);
            }
            if best.map_or(true, |(m, _)| d < m) {
                best = Some((d, b));
            }
        }
        best.unwrap()
    }

    /// Marginal of `X̂` under channel `w`.
    pub fn output_marginal(&self, w: &[T]) -> Vec<T> {
        let r = self.recon_size;
        let mut q = vec![T::zero(); r];
        for e in 0..self.e_size {
            for b in 0..r {
                q[b] += self.p_e[e] * w[e * r + b];
            }
        }
        q
    }

    /// Joint of `(X_E, X̂)`.
    pub fn encoded_joint(&self, w: &Channel<T>) -> Vec<T> {
        let r = self.recon_size;
        let mut j = vec![T::zero(); self.e_size * r];
        for e in 0..self.e_size {
            for b in 0..r {
                j[e * r + b] = self.p_e[e] * w.get(e, b);
            }
        }
        j
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn binary3(joint: Vec<f64>) -> SourceModel<f64> {
        SourceSpec {
            sizes: vec![2, 2, 2],
            revealed: vec![0],
            hidden: vec![1, 2],
            joint,
            recon_size: None,
            distortion: None,
        }
        .build()
        .unwrap()
    }

    fn sample_joint() -> Vec<f64> {
        vec![0.20, 0.05, 0.10, 0.15, 0.05, 0.10, 0.05, 0.30]
    }

    #[test]
    fn validate_accepts_well_formed_source() {
        let spec = SourceSpec {
            sizes: vec![2, 2, 2],
            revealed: vec![0],
            hidden: vec![1, 2],
            joint: sample_joint(),
            recon_size: None,
            distortion: None,
        };
        assert!(spec.validate(&[EncodedSet::new(vec![0, 1])]).is_empty());
    }

    #[test]
    fn validate_reports_partition_overlap() {
        let spec = SourceSpec {
            sizes: vec![2, 2, 2],
            revealed: vec![0, 1],
            hidden: vec![1, 2],
            joint: sample_joint(),
            recon_size: None,
            distortion: None,
        };
        let v = spec.validate(&[]);
        assert!(v.iter().any(|v| v.kind == ViolationKind::Partition));
    }

    #[test]
    fn validate_reports_negative_distortion() {
        let spec = SourceSpec {
            sizes: vec![2, 2],
            revealed: vec![0],
            hidden: vec![1],
            joint: vec![0.25; 4],
            recon_size: Some(2),
            distortion: Some(vec![vec![0.0, -1.0], vec![1.0, 0.0]]),
        };
        let v = spec.validate(&[]);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::Distortion);
        assert!(spec.build().is_err());
    }

    #[test]
    fn validate_reports_encoded_set_missing_revealed() {
        let spec = SourceSpec {
            sizes: vec![2, 2],
            revealed: vec![0],
            hidden: vec![1],
            joint: vec![0.25; 4],
            recon_size: None,
            distortion: None,
        };
        let v = spec.validate(&[EncodedSet::new(vec![1])]);
        assert!(v.iter().any(|v| v.kind == ViolationKind::EncodedSet));
    }

    #[test]
    fn induced_joint_matches_triple_product() {
        let src = binary3(sample_joint());
        let e = EncodedSet::new(vec![0, 2]);
        let w = Channel::new(4, 2, vec![0.9, 0.1, 0.7, 0.3, 0.2, 0.8, 0.4, 0.6]).unwrap();
        let j = src.induced_joint(&e, &w).unwrap();
        for x0 in 0..2 {
            for x1 in 0..2 {
                for x2 in 0..2 {
                    for b in 0..2 {
                        let p = src.joint().get(&[x0, x1, x2]);
                        let want = p * w.get(x0 * 2 + x2, b);
                        assert!((j.get(&[x0, x1, x2, b]) - want).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn identity_on_revealed_gives_zero_distortion() {
        let src = binary3(sample_joint());
        let e = src.revealed_set();
        let pt = src.eval_point(&e, &Channel::identity(2)).unwrap();
        let jr = src.joint().marginal_pmf(&[0]).unwrap();
        let hr = crate::prob::entropy(&jr);
        assert!(pt.distortion.abs() < 1e-15);
        assert!((pt.rate - hr).abs() < 1e-12);
        let h_cond = conditional_entropy(src.joint(), &[1, 2], &[0]).unwrap();
        assert!((pt.equivocation - h_cond).abs() < 1e-12);
    }

    #[test]
    fn constant_channel_point() {
        let src = binary3(sample_joint());
        let e = src.full_set();
        let pt = src.eval_point(&e, &Channel::constant(8, 2, 1)).unwrap();
        assert!(pt.rate.abs() < 1e-12);
        assert!(pt.leakage.abs() < 1e-12);
        assert!((pt.equivocation - src.hidden_entropy()).abs() < 1e-12);
    }

    #[test]
    fn lift_identity_and_full_set() {
        let src = binary3(sample_joint());
        let w = Channel::new(2, 2, vec![0.8, 0.2, 0.3, 0.7]).unwrap();
        let lifted = src.lift_channel(&src.revealed_set(), &w).unwrap();
        assert_eq!(lifted, w);
        let det = src.lift_channel(&src.full_set(), &Channel::identity(2)).unwrap();
        for e in 0..8 {
            let x0 = e / 4;
            assert_eq!(det.get(e, x0), 1.0);
        }
    }

    #[test]
    fn channel_shape_mismatch_is_usage_error() {
        let src = binary3(sample_joint());
        let e = src.full_set();
        assert!(matches!(
            src.eval_point(&e, &Channel::identity(2)),
            Err(Error::Usage(_))
        ));
    }
}
