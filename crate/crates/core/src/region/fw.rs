//! Away-step Frank-Wolfe over the channel polytope
//! `{W : every row in the simplex, E d(X_R, X̂) <= D}`.
//!
//! The linear minimization oracle is solved exactly. For a multiplier
//! `mu >= 0` each row independently picks the output minimizing
//! `G(e, b) + mu * p(e) d(r(e), b)`; sweeping `mu` upward through the
//! breakpoints of the per-row lower envelopes lowers the distortion
//! monotonically, and the first breakpoint that crosses the budget is split
//! between its two outputs. The result is a vertex of the polytope with at
//! most one fractional row.

use super::objective::{Objective, Weights};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Breakpoint {
    mu: f64,
    row: usize,
    from: usize,
    to: usize,
}

/// Exact linear minimization over the distortion-constrained polytope.
pub(crate) struct Lmo {
    e: usize,
    r: usize,
    /// `p(e) d(r(e), b)`, row-major.
    costs: Vec<f64>,
    budget: f64,
}

impl Lmo {
    pub fn new(costs: Vec<f64>, e: usize, r: usize, budget: f64) -> Result<Self> {
        let min_distortion: f64 = (0..e)
            .map(|x| costs[x * r..(x + 1) * r].iter().cloned().fold(f64::INFINITY, f64::min))
            .sum();
        if budget < min_distortion - 1e-12 {
            return Err(Error::Infeasible {
                requested: budget,
                minimum: min_distortion,
            });
        }
        Ok(Self {
            e,
            r,
            costs,
            budget: budget.max(min_distortion),
        })
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn distortion(&self, w: &[f64]) -> f64 {
        w.iter().zip(&self.costs).map(|(a, b)| a * b).sum()
    }

    /// Deterministic channel of minimum distortion (cheapest output per row,
    /// smallest index on ties).
    pub fn min_distortion_vertex(&self) -> Vec<f64> {
        let (e, r) = (self.e, self.r);
        let mut v = vec![0.0; e * r];
        for x in 0..e {
            let row = &self.costs[x * r..(x + 1) * r];
            let mut best = 0;
            for b in 1..r {
                if row[b] < row[best] {
                    best = b;
                }
            }
            v[x * r + best] = 1.0;
        }
        v
    }

    /// Minimizes `<grad, S>` over the polytope.
    pub fn solve(&self, grad: &[f64]) -> Vec<f64> {
        let (e, r) = (self.e, self.r);
        let mut choice = vec![0usize; e];
        let mut total = 0.0;
        for x in 0..e {
            let g = &grad[x * r..(x + 1) * r];
            let c = &self.costs[x * r..(x + 1) * r];
            let mut best = 0;
            for b in 1..r {
                if g[b] < g[best] || (g[b] == g[best] && c[b] < c[best]) {
                    best = b;
                }
            }
            choice[x] = best;
            total += c[best];
        }
        let mut s = vec![0.0; e * r];
        if total <= self.budget {
            for x in 0..e {
                s[x * r + choice[x]] = 1.0;
            }
            return s;
        }
        let mut events = Vec::new();
        for x in 0..e {
            let g = &grad[x * r..(x + 1) * r];
            let c = &self.costs[x * r..(x + 1) * r];
            let mut cur = choice[x];
            let mut mu = 0.0;
            loop {
                let mut next: Option<(f64, usize)> = None;
                for b in 0..r {
                    if c[b] >= c[cur] {
                        continue;
                    }
                    let m = ((g[b] - g[cur]) / (c[cur] - c[b])).max(mu);
                    let better = match next {
                        None => true,
                        Some((nm, nb)) => m < nm || (m == nm && c[b] < c[nb]),
                    };
                    if better {
                        next = Some((m, b));
                    }
                }
                match next {
                    Some((m, b)) => {
                        events.push(Breakpoint {
                            mu: m,
                            row: x,
                            from: cur,
                            to: b,
                        });
                        cur = b;
                        mu = m;
                    }
                    None => break,
                }
            }
        }
        events.sort_by(|a, b| a.mu.total_cmp(&b.mu).then(a.row.cmp(&b.row)));
        let mut split: Option<(usize, usize, usize, f64)> = None;
        for ev in &events {
            let drop = self.costs[ev.row * r + ev.from] - self.costs[ev.row * r + ev.to];
            if total - drop <= self.budget {
                let alpha = ((total - self.budget) / drop).clamp(0.0, 1.0);
                split = Some((ev.row, ev.from, ev.to, alpha));
                break;
            }
            total -= drop;
            choice[ev.row] = ev.to;
        }
        for x in 0..e {
            s[x * r + choice[x]] = 1.0;
        }
        if let Some((x, from, to, alpha)) = split {
            s[x * r + from] = 1.0 - alpha;
            s[x * r + to] = alpha;
        }
        s
    }

    /// Mixes `w` toward the minimum-distortion vertex until the budget holds.
    pub fn repair(&self, w: &mut [f64]) {
        let d = self.distortion(w);
        if d <= self.budget {
            return;
        }
        let v = self.min_distortion_vertex();
        let dv = self.distortion(&v);
        // the margin keeps rounding from leaving the result just over budget
        let alpha = if d - dv > 0.0 {
            ((self.budget - dv) / (d - dv) * (1.0 - 1e-12)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        for (a, b) in w.iter_mut().zip(&v) {
            *a = alpha * *a + (1.0 - alpha) * b;
        }
    }
}

pub(crate) struct FwOptions {
    pub gap_tol: f64,
    pub objective_tol: f64,
    pub max_iters: usize,
    /// Stop as soon as an iterate satisfies this predicate.
    pub early_exit: Option<Box<dyn Fn(&super::objective::Values) -> bool + Send + Sync>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes the weighted objective starting from a feasible `start` and
/// returns the last iterate.
pub(crate) fn minimize(
    obj: &mut Objective<'_>,
    lmo: &Lmo,
    wt: Weights,
    start: Vec<f64>,
    opts: &FwOptions,
) -> Vec<f64> {
    let n = start.len();
    let mut x = start.clone();
    let mut atoms: Vec<(Vec<f64>, f64)> = vec![(start, 1.0)];
    let mut grad = vec![0.0; n];
    let mut value = wt.apply(&obj.values(&x));
    let mut stall = 0usize;
    let mut trial = vec![0.0; n];
    for _ in 0..opts.max_iters {
        if let Some(pred) = &opts.early_exit {
            if pred(&obj.values(&x)) {
                return x;
            }
        }
        obj.gradient(&x, wt, &mut grad);
        let s = lmo.solve(&grad);
        let gx = dot(&grad, &x);
        let gap = gx - dot(&grad, &s);
        if gap <= opts.gap_tol {
            return x;
        }
        let (away_idx, away_val) = atoms
            .iter()
            .enumerate()
            .map(|(i, (a, _))| (i, dot(&grad, a)))
            .fold((0, f64::NEG_INFINITY), |m, c| if c.1 > m.1 { c } else { m });
        let away_gap = away_val - gx;
        let use_fw = gap >= away_gap || atoms.len() == 1;
        let (dir, gmax): (Vec<f64>, f64) = if use_fw {
            (s.iter().zip(&x).map(|(a, b)| a - b).collect(), 1.0)
        } else {
            let (v, alpha) = &atoms[away_idx];
            let gmax = if *alpha >= 1.0 { f64::INFINITY } else { alpha / (1.0 - alpha) };
            (x.iter().zip(v).map(|(a, b)| a - b).collect(), gmax.min(1e12))
        };
        let gamma = line_search(obj, wt, &x, &dir, gmax, &mut grad, &mut trial);
        if gamma <= 0.0 {
            stall += 1;
            if stall > 3 {
                return x;
            }
            continue;
        }
        for (xi, di) in x.iter_mut().zip(&dir) {
            *xi = (*xi + gamma * di).max(0.0);
        }
        if use_fw {
            if gamma >= 1.0 {
                atoms.clear();
                atoms.push((s, 1.0));
            } else {
                for (_, a) in atoms.iter_mut() {
                    *a *= 1.0 - gamma;
                }
                match atoms.iter_mut().find(|(a, _)| *a == s) {
                    Some((_, a)) => *a += gamma,
                    None => atoms.push((s, gamma)),
                }
            }
        } else {
            for (_, a) in atoms.iter_mut() {
                *a *= 1.0 + gamma;
            }
            atoms[away_idx].1 -= gamma;
            if gamma >= gmax || atoms[away_idx].1 <= 1e-15 {
                atoms.remove(away_idx);
            }
        }
        let new_value = wt.apply(&obj.values(&x));
        if value - new_value < opts.objective_tol {
            stall += 1;
        } else {
            stall = 0;
        }
        value = new_value.min(value);
        if stall >= 50 {
            return x;
        }
    }
    x
}

/// Frank-Wolfe duality gap at `x`: an upper bound on `f(x) - min f`.
pub(crate) fn duality_gap(obj: &mut Objective<'_>, lmo: &Lmo, wt: Weights, x: &[f64]) -> f64 {
    let mut grad = vec![0.0; x.len()];
    obj.gradient(x, wt, &mut grad);
    let s = lmo.solve(&grad);
    (dot(&grad, x) - dot(&grad, &s)).max(0.0)
}

/// Exact line search on a convex one-dimensional restriction: bisection on
/// the sign of the directional derivative.
fn line_search(
    obj: &mut Objective<'_>,
    wt: Weights,
    x: &[f64],
    dir: &[f64],
    gmax: f64,
    grad: &mut [f64],
    trial: &mut [f64],
) -> f64 {
    let deriv = |g: f64, obj: &mut Objective<'_>, grad: &mut [f64], trial: &mut [f64]| {
        for i in 0..x.len() {
            trial[i] = (x[i] + g * dir[i]).max(0.0);
        }
        obj.gradient(trial, wt, grad);
        dot(grad, dir)
    };
    if deriv(0.0, obj, grad, trial) >= 0.0 {
        return 0.0;
    }
    if deriv(gmax, obj, grad, trial) <= 0.0 {
        return gmax;
    }
    let (mut lo, mut hi) = (0.0, gmax);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid, obj, grad, trial) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * gmax.max(1.0) {
            break;
        }
    }
    // guard against bisection error on a flat stretch
    let f0 = wt.apply(&obj.values(x));
    for i in 0..x.len() {
        trial[i] = (x[i] + lo * dir[i]).max(0.0);
    }
    if wt.apply(&obj.values(trial)) > f0 {
        return 0.0;
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force LP over deterministic maps and single-row splits.
    fn lp_brute(grad: &[f64], costs: &[f64], e: usize, r: usize, budget: f64) -> f64 {
        let mut best = f64::INFINITY;
        let maps = r.pow(e as u32);
        for m in 0..maps {
            let mut ch = vec![0usize; e];
            let mut t = m;
            for slot in ch.iter_mut() {
                *slot = t % r;
                t /= r;
            }
            let val: f64 = (0..e).map(|x| grad[x * r + ch[x]]).sum();
            let d: f64 = (0..e).map(|x| costs[x * r + ch[x]]).sum();
            if d <= budget + 1e-12 {
                best = best.min(val);
            }
            // split one row between two outputs
            for x in 0..e {
                for b in 0..r {
                    let d2 = d - costs[x * r + ch[x]] + costs[x * r + b];
                    let v2 = val - grad[x * r + ch[x]] + grad[x * r + b];
                    if (d <= budget) == (d2 <= budget) || d == d2 {
                        continue;
                    }
                    let a = (budget - d) / (d2 - d);
                    best = best.min(val + a * (v2 - val));
                }
            }
        }
        best
    }

    #[test]
    fn lmo_matches_brute_force_lp() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let e = rng.gen_range(1..4);
            let r = rng.gen_range(2..4);
            let grad: Vec<f64> = (0..e * r).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let costs: Vec<f64> = (0..e * r).map(|_| rng.gen_range(0.0..1.0)).collect();
            let lmo_min: f64 = (0..e)
                .map(|x| costs[x * r..(x + 1) * r].iter().cloned().fold(f64::INFINITY, f64::min))
                .sum();
            let budget = lmo_min + rng.gen_range(0.0..1.0);
            let lmo = Lmo::new(costs.clone(), e, r, budget).unwrap();
            let s = lmo.solve(&grad);
            assert!(lmo.distortion(&s) <= budget + 1e-12);
            for x in 0..e {
                let sum: f64 = s[x * r..(x + 1) * r].iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
            let got = dot(&grad, &s);
            let want = lp_brute(&grad, &costs, e, r, budget);
            assert!(got <= want + 1e-9, "lmo {got} brute {want}");
        }
    }

    #[test]
    fn infeasible_budget_is_reported() {
        let costs = vec![0.5, 1.0, 0.2, 0.3];
        assert!(matches!(
            Lmo::new(costs, 2, 2, 0.5),
            Err(Error::Infeasible { .. })
        ));
    }
}
