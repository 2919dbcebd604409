//! Log-barrier Newton method for
//!
//! ```text
//! minimize    a I(X_E; X̂) + b I(X_H; X̂)
//! subject to  E d <= budget,  [I(X_H; X̂) <= l_max],  W row-stochastic
//! ```
//!
//! used to polish Frank-Wolfe solutions and for the rate stage of the table.
//! The channel has few entries, so every Newton step solves the dense KKT
//! system of the equality-constrained barrier problem. Both information
//! terms have Hessians that only couple entries sharing an output symbol.

use super::objective::Weights;
use crate::model::EncodedView;
use nalgebra::{DMatrix, DVector};

const LN2: f64 = std::f64::consts::LN_2;

struct Terms {
    rate: f64,
    leak: f64,
    dist: f64,
    g_rate: Vec<f64>,
    g_leak: Vec<f64>,
    h_rate: DMatrix<f64>,
    h_leak: DMatrix<f64>,
}

pub(crate) struct Barrier<'a> {
    view: &'a EncodedView<f64>,
    /// Flat channel index of every variable.
    vars: Vec<usize>,
    /// Whether the distortion constraint is kept (it is dropped, and costly
    /// entries removed, when the budget equals the minimum distortion).
    with_dist: bool,
    budget: f64,
    l_max: Option<f64>,
    weights: Weights,
}

impl<'a> Barrier<'a> {
    pub fn new(
        view: &'a EncodedView<f64>,
        weights: Weights,
        budget: f64,
        l_max: Option<f64>,
    ) -> Self {
        let (e, r) = (view.e_size, view.recon_size);
        let d_min = view.min_distortion();
        let with_dist = budget > d_min + 1e-12;
        let mut vars = Vec::new();
        for x in 0..e {
            let m = (0..r).map(|b| view.cost(x, b)).fold(f64::INFINITY, f64::min);
            for b in 0..r {
                if with_dist || view.cost(x, b) <= m + 1e-12 || view.p_e[x] == 0.0 {
                    vars.push(x * r + b);
                }
            }
        }
        Self {
            view,
            vars,
            with_dist,
            budget,
            l_max,
            weights,
        }
    }

    fn full(&self, v: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.view.e_size * self.view.recon_size];
        for (i, &j) in self.vars.iter().enumerate() {
            w[j] = v[i];
        }
        w
    }

    fn terms(&self, v: &[f64]) -> Terms {
        let view = self.view;
        let (e, r, h) = (view.e_size, view.recon_size, view.h_size);
        let w = self.full(v);
        let mut q = vec![0.0; r];
        let mut p = vec![0.0; h * r];
        for x in 0..e {
            for b in 0..r {
                let wb = w[x * r + b];
                q[b] += view.p_e[x] * wb;
                for hh in 0..h {
                    p[hh * r + b] += view.p_he[hh * e + x] * wb;
                }
            }
        }
        let lg = |v: f64| if v > 0.0 { v.log2() } else { 0.0 };
        let mut rate = 0.0;
        for x in 0..e {
            for b in 0..r {
                let wb = w[x * r + b];
                if wb > 0.0 {
                    rate += view.p_e[x] * wb * (wb / q[b]).log2();
                }
            }
        }
        let mut leak = 0.0;
        for hh in 0..h {
            for b in 0..r {
                let j = p[hh * r + b];
                if j > 0.0 {
                    leak += j * (j / (view.p_h[hh] * q[b])).log2();
                }
            }
        }
        let n = self.vars.len();
        let mut g_rate = vec![0.0; n];
        let mut g_leak = vec![0.0; n];
        let mut h_rate = DMatrix::zeros(n, n);
        let mut h_leak = DMatrix::zeros(n, n);
        for (i, &fi) in self.vars.iter().enumerate() {
            let (x, b) = (fi / r, fi % r);
            let pe = view.p_e[x];
            g_rate[i] = pe * (lg(w[fi]) - lg(q[b]));
            let mut gl = -pe * lg(q[b]);
            for hh in 0..h {
                gl += view.p_he[hh * e + x] * lg(p[hh * r + b]);
            }
            g_leak[i] = gl;
            for (k, &fk) in self.vars.iter().enumerate() {
                let (y, c) = (fk / r, fk % r);
                if c != b {
                    continue;
                }
                let pf = view.p_e[y];
                let cross = if q[b] > 0.0 { pe * pf / q[b] } else { 0.0 };
                let mut hr = -cross;
                if x == y && w[fi] > 0.0 {
                    hr += pe / w[fi];
                }
                let mut hl = -cross;
                for hh in 0..h {
                    let j = p[hh * r + b];
                    if j > 0.0 {
                        hl += view.p_he[hh * e + x] * view.p_he[hh * e + y] / j;
                    }
                }
                h_rate[(i, k)] = hr / LN2;
                h_leak[(i, k)] = hl / LN2;
            }
        }
        Terms {
            rate: rate.max(0.0),
            leak: leak.max(0.0),
            dist: view.expected_distortion(&w),
            g_rate,
            g_leak,
            h_rate,
            h_leak,
        }
    }

    fn dist_grad(&self) -> Vec<f64> {
        let r = self.view.recon_size;
        self.vars
            .iter()
            .map(|&f| self.view.p_e[f / r] * self.view.cost[f])
            .collect()
    }

    fn strictly_feasible(&self, v: &[f64], t: &Terms) -> bool {
        v.iter().all(|&x| x > 0.0)
            && self.l_max.map_or(true, |l| t.leak < l)
            && (!self.with_dist || t.dist < self.budget)
    }

    /// Barrier value; `None` outside the interior.
    fn phi(&self, v: &[f64], tt: f64) -> Option<(f64, Terms)> {
        let t = self.terms(v);
        if !self.strictly_feasible(v, &t) {
            return None;
        }
        let mut f = tt * self.weights.apply_parts(t.rate, t.leak);
        if let Some(l) = self.l_max {
            f -= (l - t.leak).ln();
        }
        if self.with_dist {
            f -= (self.budget - t.dist).ln();
        }
        f -= v.iter().map(|x| x.ln()).sum::<f64>();
        Some((f, t))
    }

    /// Strictly feasible point near `w` (a full row-major channel that
    /// satisfies both constraints, possibly on their boundary).
    fn interior_start(&self, w: &[f64]) -> Option<Vec<f64>> {
        let view = self.view;
        let (e, r) = (view.e_size, view.recon_size);
        // an entrywise positive channel with slack in the distortion constraint
        let mut u = vec![0.0; e * r];
        let per_row: Vec<usize> = (0..e)
            .map(|x| self.vars.iter().filter(|&&f| f / r == x).count())
            .collect();
        for &f in &self.vars {
            u[f] = 1.0 / per_row[f / r] as f64;
        }
        if self.with_dist {
            let mut vmin = vec![0.0; e * r];
            for x in 0..e {
                let best = (0..r)
                    .min_by(|&a, &b| view.cost(x, a).total_cmp(&view.cost(x, b)))
                    .unwrap();
                vmin[x * r + best] = 1.0;
            }
            let (d0, du) = (view.expected_distortion(&vmin), view.expected_distortion(&u));
            let kappa = if du > d0 {
                (0.5 * (self.budget - d0) / (du - d0)).min(0.5)
            } else {
                0.5
            };
            for i in 0..u.len() {
                u[i] = (1.0 - kappa) * vmin[i] + kappa * u[i];
            }
        }
        let mut eta = 1e-3;
        for _ in 0..60 {
            let mixed: Vec<f64> = w.iter().zip(&u).map(|(a, b)| (1.0 - eta) * a + eta * b).collect();
            let v: Vec<f64> = self.vars.iter().map(|&f| mixed[f]).collect();
            let t = self.terms(&v);
            if self.strictly_feasible(&v, &t) {
                return Some(v);
            }
            eta *= 0.5;
        }
        None
    }

    /// Runs the barrier method from `w`. Returns the final full channel and
    /// whether the barrier's duality bound reached `tol`, or `None` when no
    /// strictly feasible start exists near `w`.
    pub fn solve(&self, w: &[f64], tol: f64, max_newton: usize) -> Option<(Vec<f64>, bool)> {
        let mut v = self.interior_start(w)?;
        let n = v.len();
        let e = self.view.e_size;
        let r = self.view.recon_size;
        let m = (n + usize::from(self.with_dist) + usize::from(self.l_max.is_some())) as f64;
        let dg = self.dist_grad();
        let mut tt = 1.0;
        let mut steps = 0;
        loop {
            loop {
                if steps >= max_newton {
                    return Some((self.full(&v), false));
                }
                steps += 1;
                let (phi0, t) = self.phi(&v, tt).expect("iterate stays interior");
                let sd = self.budget - t.dist;
                let (wr, wl) = (self.weights.rate, self.weights.leakage);
                let mut hm = &t.h_rate * (tt * wr) + &t.h_leak * (tt * wl);
                let mut g = DVector::zeros(n);
                for i in 0..n {
                    g[i] = tt * (wr * t.g_rate[i] + wl * t.g_leak[i]) - 1.0 / v[i];
                    if self.with_dist {
                        g[i] += dg[i] / sd;
                    }
                    hm[(i, i)] += 1.0 / (v[i] * v[i]);
                }
                if let Some(l) = self.l_max {
                    let sl = l - t.leak;
                    hm += &t.h_leak / sl;
                    for i in 0..n {
                        g[i] += t.g_leak[i] / sl;
                        for k in 0..n {
                            hm[(i, k)] += t.g_leak[i] * t.g_leak[k] / (sl * sl);
                        }
                    }
                }
                if self.with_dist {
                    for i in 0..n {
                        for k in 0..n {
                            hm[(i, k)] += dg[i] * dg[k] / (sd * sd);
                        }
                    }
                }
                // scaled variables v = diag(v) y keep the system well conditioned
                // near the boundary of the positive orthant
                let vs = DVector::from_column_slice(&v);
                let mut kkt = DMatrix::zeros(n + e, n + e);
                for i in 0..n {
                    for k in 0..n {
                        kkt[(i, k)] = vs[i] * hm[(i, k)] * vs[k];
                    }
                }
                for (i, &f) in self.vars.iter().enumerate() {
                    kkt[(n + f / r, i)] = vs[i];
                    kkt[(i, n + f / r)] = vs[i];
                }
                let mut rhs = DVector::zeros(n + e);
                for i in 0..n {
                    rhs[i] = -vs[i] * g[i];
                }
                let lu = kkt.clone().lu();
                let Some(mut sol) = lu.solve(&rhs) else {
                    return Some((self.full(&v), false));
                };
                if let Some(fix) = lu.solve(&(&rhs - &kkt * &sol)) {
                    sol += fix;
                }
                for i in 0..n {
                    sol[i] *= vs[i];
                }
                let dx: Vec<f64> = sol.rows(0, n).iter().copied().collect();
                let slope: f64 = g.iter().zip(&dx).map(|(a, b)| a * b).sum();
                if -slope / 2.0 <= 1e-12 {
                    break;
                }
                let mut s = 1.0;
                let mut moved = false;
                for _ in 0..60 {
                    let cand: Vec<f64> = v.iter().zip(&dx).map(|(x, d)| x + s * d).collect();
                    if let Some((phi1, _)) = self.phi(&cand, tt) {
                        if phi1 <= phi0 + 0.25 * s * slope + 1e-13 * phi0.abs() {
                            // a step that leaves phi unchanged means the
                            // decrement is below its rounding noise
                            moved = phi1 < phi0;
                            v = cand;
                            break;
                        }
                    }
                    s *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            if m / tt <= tol {
                return Some((self.full(&v), true));
            }
            tt *= 10.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EncodedSet, SourceSpec};

    #[test]
    fn without_leakage_pressure_recovers_rate_distortion() {
        // uniform binary X_R, Hamming: R(D) = 1 - h(D)
        let src = SourceSpec {
            sizes: vec![2, 2],
            revealed: vec![0],
            hidden: vec![1],
            joint: vec![0.3, 0.2, 0.1, 0.4],
            recon_size: None,
            distortion: None,
        }
        .build()
        .unwrap();
        let view = src.view(&EncodedSet::new(vec![0, 1])).unwrap();
        let stage = Barrier::new(&view, Weights::rate_only(), 0.1, Some(10.0));
        let start = vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let (w, converged) = stage.solve(&start, 1e-10, 500).unwrap();
        assert!(converged);
        let t = stage.terms(&w.iter().copied().collect::<Vec<_>>());
        let h = -(0.1f64 * 0.1f64.log2() + 0.9 * 0.9f64.log2());
        assert!((t.rate - (1.0 - h)).abs() < 1e-8, "{}", t.rate);
    }
}
