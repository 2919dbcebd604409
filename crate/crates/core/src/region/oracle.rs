//! Exhaustive reference for [`super::min_leakage`]: every channel whose rows
//! lie on the grid `{0, step, 2 step, .., 1}` of the simplex is evaluated.
//!
//! The grid optimum `L_grid` is an upper bound on the true minimum. A lower
//! bound comes from convexity: for every grid cell (a box of side `step`
//! around a lattice point in the free row coordinates) that may meet the
//! feasible set, the tangent plane of the leakage at an interior point near
//! the cell centre is minimized over the box. The smallest such value bounds
//! the minimum over the whole feasible set from below. The reported
//! resolution is `L_grid - lower_bound` plus a floating-point allowance.

use crate::error::{usage, Error, Result};
use crate::model::{EncodedSet, EncodedView, SourceModel};
use crate::prob::Channel;
use rayon::prelude::*;
use serde::Serialize;

/// Largest number of grid channels the oracle will enumerate.
pub const ORACLE_BUDGET: f64 = 1e8;

/// Allowance for rounding in the oracle's own arithmetic.
const FLOAT_ALLOWANCE: f64 = 1e-9;

/// Relative tolerance for ties between grid channels.
const TIE: f64 = 1e-12;

/// Shift of tangent points toward the uniform row, keeping them interior.
const INTERIOR_SHIFT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub budget: f64,
    pub step: f64,
    /// Minimum leakage over grid channels with distortion at most `budget`.
    pub leakage: f64,
    /// Lowest rate among the grid minimizers.
    pub rate: f64,
    /// Rigorous lower bound on the minimum leakage over all channels.
    pub lower_bound: f64,
    /// `leakage - lower_bound` plus a floating-point allowance.
    pub resolution: f64,
    /// Grid channels within the budget.
    pub evaluated: u64,
    #[serde(skip)]
    pub witness: Channel<f64>,
}

/// `(1/step + 1)^(|X_E| (|X̂| - 1))`, the enumeration size the budget applies to.
pub fn grid_oracle_budget(e_size: usize, recon_size: usize, step: f64) -> f64 {
    (1.0 / step + 1.0).powf((e_size * (recon_size - 1)) as f64)
}

/// Points of `{x in Z^r : x >= 0, sum x = m}` in lexicographic order.
fn compositions(m: usize, r: usize) -> Vec<Vec<usize>> {
    if r == 1 {
        return vec![vec![m]];
    }
    let mut out = Vec::new();
    for first in 0..=m {
        for mut rest in compositions(m - first, r - 1) {
            let mut v = vec![first];
            v.append(&mut rest);
            out.push(v);
        }
    }
    out
}

/// Free-coordinate lattice points whose box can meet the simplex.
fn cells(m: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; r - 1];
    loop {
        let low: f64 = cur.iter().map(|&c| (c as f64 - 0.5).max(0.0)).sum();
        if low <= m as f64 {
            out.push(cur.clone());
        }
        let mut i = r - 1;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < m {
                cur[i] += 1;
                break;
            }
            cur[i] = 0;
        }
    }
}

#[derive(Clone, Copy)]
struct Cand {
    leak: f64,
    rate: f64,
    index: u64,
}

fn better(a: &Cand, b: &Cand) -> bool {
    if a.leak < b.leak - TIE {
        return true;
    }
    if a.leak > b.leak + TIE {
        return false;
    }
    if a.rate < b.rate - TIE {
        return true;
    }
    if a.rate > b.rate + TIE {
        return false;
    }
    a.index < b.index
}

/// Per-row data of one grid choice.
struct RowTerm {
    /// `p(h, e) W(b | e)`, row-major `h x r`, followed by `p(e) W(b | e)`.
    mass: Vec<f64>,
    dist: f64,
    /// `p(e) sum_b W log2 W`.
    neg_ent: f64,
}

struct Grid<'a> {
    view: &'a EncodedView<f64>,
    budget: f64,
    terms: Vec<Vec<RowTerm>>,
    /// `min_rest[l]`: smallest distortion rows `l..` can contribute.
    min_rest: Vec<f64>,
}

impl<'a> Grid<'a> {
    fn new(view: &'a EncodedView<f64>, budget: f64, rows: &[Vec<f64>]) -> Self {
        let (h, r) = (view.h_size, view.recon_size);
        let terms: Vec<Vec<RowTerm>> = (0..view.e_size)
            .map(|x| {
                rows.iter()
                    .map(|w| {
                        let mut mass = vec![0.0; h * r + r];
                        for hh in 0..h {
                            for b in 0..r {
                                mass[hh * r + b] = view.p_he[hh * view.e_size + x] * w[b];
                            }
                        }
                        for b in 0..r {
                            mass[h * r + b] = view.p_e[x] * w[b];
                        }
                        let dist = (0..r).map(|b| view.p_e[x] * view.cost(x, b) * w[b]).sum();
                        let neg_ent = view.p_e[x]
                            * w.iter().filter(|&&v| v > 0.0).map(|v| v * v.log2()).sum::<f64>();
                        RowTerm { mass, dist, neg_ent }
                    })
                    .collect()
            })
            .collect();
        let mut min_rest = vec![0.0; view.e_size + 1];
        for x in (0..view.e_size).rev() {
            let m = terms[x].iter().map(|t| t.dist).fold(f64::INFINITY, f64::min);
            min_rest[x] = min_rest[x + 1] + m;
        }
        Self {
            view,
            budget,
            terms,
            min_rest,
        }
    }

    fn leaf(&self, mass: &[f64]) -> (f64, f64) {
        let (h, r) = (self.view.h_size, self.view.recon_size);
        let q = &mass[h * r..];
        let mut leak = 0.0;
        for hh in 0..h {
            for b in 0..r {
                let j = mass[hh * r + b];
                if j > 0.0 {
                    leak += j * (j / (self.view.p_h[hh] * q[b])).log2();
                }
            }
        }
        let hq: f64 = q.iter().filter(|&&v| v > 0.0).map(|v| -v * v.log2()).sum();
        (leak.max(0.0), hq)
    }

    /// Depth-first scan of rows `level..` under a fixed prefix.
    #[allow(clippy::too_many_arguments)]
    fn scan(
        &self,
        level: usize,
        index: u64,
        mass: &[f64],
        dist: f64,
        neg_ent: f64,
        best: &mut Option<Cand>,
        count: &mut u64,
    ) {
        let n = self.terms[level].len() as u64;
        let mut acc = vec![0.0; mass.len()];
        for (c, t) in self.terms[level].iter().enumerate() {
            let d = dist + t.dist;
            if d + self.min_rest[level + 1] > self.budget + 1e-12 {
                continue;
            }
            for ((a, m), tm) in acc.iter_mut().zip(mass).zip(&t.mass) {
                *a = m + tm;
            }
            let idx = index * n + c as u64;
            let ne = neg_ent + t.neg_ent;
            if level + 1 == self.terms.len() {
                *count += 1;
                let (leak, hq) = self.leaf(&acc);
                let cand = Cand {
                    leak,
                    rate: (ne + hq).max(0.0),
                    index: idx,
                };
                if best.as_ref().map_or(true, |b| better(&cand, b)) {
                    *best = Some(cand);
                }
            } else {
                self.scan(level + 1, idx, &acc, d, ne, best, count);
            }
        }
    }
}

/// Tangent-plane lower bound over all cells meeting the feasible set.
fn lower_bound(view: &EncodedView<f64>, budget: f64, m: usize) -> f64 {
    let (e, r, h) = (view.e_size, view.recon_size, view.h_size);
    let s = 1.0 / m as f64;
    let cell_list = cells(m, r);
    // per cell: interior tangent point and the box of free coordinates
    struct Cell {
        point: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    }
    let cell_data: Vec<Cell> = cell_list
        .iter()
        .map(|c| {
            let centre: Vec<f64> = c.iter().map(|&v| v as f64 * s).collect();
            let sum: f64 = centre.iter().sum();
            let mut p: Vec<f64> = if sum > 1.0 {
                centre.iter().map(|v| v / sum).collect()
            } else {
                centre.clone()
            };
            let rest = 1.0 - p.iter().sum::<f64>();
            p.push(rest.max(0.0));
            let point = p
                .iter()
                .map(|v| (1.0 - INTERIOR_SHIFT) * v + INTERIOR_SHIFT / r as f64)
                .collect();
            let lo = centre.iter().map(|v| (v - s / 2.0).max(0.0)).collect();
            let hi = centre.iter().map(|v| (v + s / 2.0).min(1.0)).collect();
            Cell { point, lo, hi }
        })
        .collect();
    // smallest distortion of each row over each cell box
    let row_min_dist: Vec<Vec<f64>> = (0..e)
        .map(|x| {
            cell_data
                .iter()
                .map(|c| {
                    let last = view.cost(x, r - 1);
                    let mut d = last;
                    for b in 0..r - 1 {
                        let k = view.cost(x, b) - last;
                        d += k * if k >= 0.0 { c.lo[b] } else { c.hi[b] };
                    }
                    view.p_e[x] * d
                })
                .collect()
        })
        .collect();
    let mut min_rest = vec![0.0; e + 1];
    for x in (0..e).rev() {
        min_rest[x] = min_rest[x + 1] + row_min_dist[x].iter().cloned().fold(f64::INFINITY, f64::min);
    }
    let nc = cell_data.len();

    let eval = |choice: &[usize]| -> f64 {
        let mut phb = vec![0.0; h * r];
        let mut q = vec![0.0; r];
        for (x, &c) in choice.iter().enumerate() {
            let w = &cell_data[c].point;
            for b in 0..r {
                q[b] += view.p_e[x] * w[b];
                for hh in 0..h {
                    phb[hh * r + b] += view.p_he[hh * e + x] * w[b];
                }
            }
        }
        let mut f = 0.0;
        for hh in 0..h {
            for b in 0..r {
                let j = phb[hh * r + b];
                if j > 0.0 {
                    f += j * (j / (view.p_h[hh] * q[b])).log2();
                }
            }
        }
        let lq: Vec<f64> = q.iter().map(|v| v.log2()).collect();
        let lj: Vec<f64> = phb.iter().map(|&v| if v > 0.0 { v.log2() } else { 0.0 }).collect();
        for (x, &c) in choice.iter().enumerate() {
            if view.p_e[x] == 0.0 {
                continue;
            }
            let cell = &cell_data[c];
            let g: Vec<f64> = (0..r)
                .map(|b| {
                    let mut v = -view.p_e[x] * lq[b];
                    for hh in 0..h {
                        let p = view.p_he[hh * e + x];
                        if p > 0.0 {
                            v += p * lj[hh * r + b];
                        }
                    }
                    v
                })
                .collect();
            for b in 0..r - 1 {
                let k = g[b] - g[r - 1];
                let x_at = if k >= 0.0 { cell.lo[b] } else { cell.hi[b] };
                f += k * (x_at - cell.point[b]);
            }
        }
        f
    };

    fn walk(
        level: usize,
        choice: &mut Vec<usize>,
        dist: f64,
        budget: f64,
        rows: &[Vec<f64>],
        min_rest: &[f64],
        eval: &(dyn Fn(&[usize]) -> f64 + Sync),
        best: &mut f64,
    ) {
        for c in 0..rows[level].len() {
            let d = dist + rows[level][c];
            if d + min_rest[level + 1] > budget + 1e-12 {
                continue;
            }
            choice.push(c);
            if level + 1 == rows.len() {
                *best = best.min(eval(choice));
            } else {
                walk(level + 1, choice, d, budget, rows, min_rest, eval, best);
            }
            choice.pop();
        }
    }

    (0..nc)
        .into_par_iter()
        .map(|c0| {
            let mut best = f64::INFINITY;
            let d0 = row_min_dist[0][c0];
            if d0 + min_rest[1] <= budget + 1e-12 {
                let mut choice = vec![c0];
                if e == 1 {
                    best = eval(&choice);
                } else {
                    walk(1, &mut choice, d0, budget, &row_min_dist, &min_rest, &eval, &mut best);
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Minimum leakage over grid channels with distortion at most `budget`, the
/// lowest rate among the minimizers, and a bound on the distance to the true
/// minimum. Ties go to the lowest rate, then the lexicographically smallest
/// matrix.
pub fn grid_oracle(
    src: &SourceModel<f64>,
    e: &EncodedSet,
    budget: f64,
    step: f64,
) -> Result<OracleResult> {
    if !(step > 0.0 && step <= 1.0) {
        return usage(format!("grid step must lie in (0, 1], got {step}"));
    }
    let m = (1.0 / step).round() as usize;
    if ((m as f64) * step - 1.0).abs() > 1e-9 {
        return usage(format!("grid step {step} does not divide 1"));
    }
    let view = src.view(e)?;
    let (e_size, r) = (view.e_size, view.recon_size);
    let required = grid_oracle_budget(e_size, r, step);
    if required > ORACLE_BUDGET {
        return Err(Error::Budget {
            what: format!("grid oracle over {e_size}x{r} channels at step {step}"),
            required,
            limit: ORACLE_BUDGET,
        });
    }
    let min_d = view.min_distortion();
    if budget < min_d - 1e-12 {
        return Err(Error::Infeasible {
            requested: budget,
            minimum: min_d,
        });
    }
    let comps = compositions(m, r);
    let rows: Vec<Vec<f64>> = comps
        .iter()
        .map(|c| c.iter().map(|&v| v as f64 / m as f64).collect())
        .collect();
    let grid = Grid::new(&view, budget, &rows);
    let width = view.h_size * r + r;
    let n = rows.len() as u64;
    let chunks: Vec<(Option<Cand>, u64)> = (0..rows.len())
        .into_par_iter()
        .map(|c0| {
            let mut best = None;
            let mut count = 0;
            let t = &grid.terms[0][c0];
            if t.dist + grid.min_rest[1] <= budget + 1e-12 {
                if e_size == 1 {
                    count = 1;
                    let (leak, hq) = grid.leaf(&t.mass);
                    best = Some(Cand {
                        leak,
                        rate: (t.neg_ent + hq).max(0.0),
                        index: c0 as u64,
                    });
                } else {
                    let zero = vec![0.0; width];
                    let mut acc = zero.clone();
                    for (a, v) in acc.iter_mut().zip(&t.mass) {
                        *a = *v;
                    }
                    grid.scan(1, c0 as u64, &acc, t.dist, t.neg_ent, &mut best, &mut count);
                }
            }
            (best, count)
        })
        .collect();
    let evaluated = chunks.iter().map(|c| c.1).sum();
    let best = chunks
        .into_iter()
        .filter_map(|c| c.0)
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .ok_or(Error::Infeasible {
            requested: budget,
            minimum: min_d,
        })?;
    let mut digits = vec![0usize; e_size];
    let mut idx = best.index;
    for slot in digits.iter_mut().rev() {
        *slot = (idx % n) as usize;
        idx /= n;
    }
    let probs = digits.iter().flat_map(|&d| rows[d].iter().copied()).collect();
    let lb = lower_bound(&view, budget, m).max(0.0).min(best.leak);
    Ok(OracleResult {
        budget,
        step,
        leakage: best.leak,
        rate: best.rate,
        lower_bound: lb,
        resolution: best.leak - lb + FLOAT_ALLOWANCE,
        evaluated,
        witness: Channel::from_raw(e_size, r, probs),
    })
}
