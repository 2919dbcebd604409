//! Rate-distortion function `R(D) = min I(X_E; X̂)` subject to
//! `E d(X_R, X̂) <= D`, by Blahut-Arimoto over the slope family
//! `W(x̂ | e) ∝ q(x̂) 2^{-s d(r(e), x̂)}`.
//!
//! For each requested `D` the slope is bisected until the iteration's
//! distortion lands on `D`. Every solved slope is an achievable point; the
//! reported curve is the lower convex envelope of those points together with
//! the two endpoints `(D_min, R(D_min))` and `(min_b E d(X_R, b), 0)`,
//! interpolated onto the grid. The witness at a grid point is the matching
//! mixture of the two neighbouring channels.

use super::{SolveStatus, SolverParams};
use crate::error::{usage, Result};
use crate::model::{EncodedSet, EncodedView, SourceModel};
use crate::prob::Channel;
use serde::Serialize;

/// One point of the rate-distortion curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdPoint {
    pub distortion: f64,
    /// `NaN` when the budget is below the smallest achievable distortion.
    pub rate: f64,
    pub status: SolveStatus,
    #[serde(skip)]
    pub witness: Option<Channel<f64>>,
}

struct Solved {
    w: Vec<f64>,
    q: Vec<f64>,
    rate: f64,
    distortion: f64,
    converged: bool,
}

/// Blahut-Arimoto at slope `s` (`None`: infinite slope, i.e. only outputs of
/// minimum cost per row are allowed).
fn blahut(
    view: &EncodedView<f64>,
    slope: Option<f64>,
    q0: &[f64],
    tol: f64,
    max_iters: usize,
) -> Solved {
    let (e, r) = (view.e_size, view.recon_size);
    // a(e, b) = 2^{-s (d(e, b) - min_b d(e, b))}
    let mut a = vec![0.0; e * r];
    for x in 0..e {
        let row = &view.cost[x * r..(x + 1) * r];
        let m = row.iter().cloned().fold(f64::INFINITY, f64::min);
        for b in 0..r {
            a[x * r + b] = match slope {
                Some(s) => (-(s * (row[b] - m))).exp2(),
                None if row[b] - m <= 1e-12 => 1.0,
                None => 0.0,
            };
        }
    }
    let mut q = q0.to_vec();
    let mut w = vec![0.0; e * r];
    let mut c = vec![0.0; r];
    let mut converged = false;
    for _ in 0..max_iters {
        c.iter_mut().for_each(|v| *v = 0.0);
        for x in 0..e {
            let row = &a[x * r..(x + 1) * r];
            let z: f64 = row.iter().zip(&q).map(|(ai, qi)| ai * qi).sum();
            for b in 0..r {
                w[x * r + b] = q[b] * row[b] / z;
                c[b] += view.p_e[x] * row[b] / z;
            }
        }
        // Blahut's bracket on the Lagrangian: log max c - sum q log c
        let cmax = c.iter().cloned().fold(0.0, f64::max);
        let avg: f64 = q
            .iter()
            .zip(&c)
            .filter(|(qi, _)| **qi > 0.0)
            .map(|(qi, ci)| qi * ci.log2())
            .sum();
        for b in 0..r {
            q[b] *= c[b];
        }
        if cmax.log2() - avg <= tol {
            converged = true;
            break;
        }
    }
    let s: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= s);
    let (rate, distortion) = rate_and_distortion(view, &w);
    Solved {
        w,
        q,
        rate,
        distortion,
        converged,
    }
}

fn rate_and_distortion(view: &EncodedView<f64>, w: &[f64]) -> (f64, f64) {
    let q = view.output_marginal(w);
    let r = view.recon_size;
    let mut rate = 0.0;
    for x in 0..view.e_size {
        for b in 0..r {
            let v = w[x * r + b];
            if v > 0.0 && view.p_e[x] > 0.0 {
                rate += view.p_e[x] * v * (v / q[b]).log2();
            }
        }
    }
    (rate.max(0.0), view.expected_distortion(w))
}

#[derive(Clone)]
struct Anchor {
    d: f64,
    rate: f64,
    w: Vec<f64>,
    converged: bool,
}

/// Lower convex hull of anchors sorted by distortion.
fn lower_hull(mut pts: Vec<Anchor>) -> Vec<Anchor> {
    pts.sort_by(|a, b| a.d.total_cmp(&b.d).then(a.rate.total_cmp(&b.rate)));
    let mut hull: Vec<Anchor> = Vec::new();
    for p in pts {
        if hull.last().is_some_and(|h| h.d == p.d) {
            continue;
        }
        while hull.len() >= 2 {
            let (o, a) = (&hull[hull.len() - 2], &hull[hull.len() - 1]);
            let cross = (a.d - o.d) * (p.rate - o.rate) - (a.rate - o.rate) * (p.d - o.d);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// `R(D)` on `d_grid` for encoded set `e`.
pub fn rd_curve(
    src: &SourceModel<f64>,
    e: &EncodedSet,
    d_grid: &[f64],
    params: &SolverParams,
) -> Result<Vec<RdPoint>> {
    params.validate()?;
    if d_grid.iter().any(|d| !d.is_finite()) {
        return usage("distortion grid must be finite");
    }
    let view = src.view(e)?;
    let (e_size, r) = (view.e_size, view.recon_size);
    let tol = params.objective_tol;
    let iters = params.max_iters.max(1000) * 10;
    let d_min = view.min_distortion();
    let (d_const, b_const) = view.constant_distortion();
    let uniform = vec![1.0 / r as f64; r];

    let mut anchors = Vec::new();
    let top = blahut(&view, None, &uniform, tol, iters);
    anchors.push(Anchor {
        d: top.distortion,
        rate: top.rate,
        w: top.w,
        converged: top.converged,
    });
    let mut constant = vec![0.0; e_size * r];
    for x in 0..e_size {
        constant[x * r + b_const] = 1.0;
    }
    anchors.push(Anchor {
        d: d_const,
        rate: 0.0,
        w: constant,
        converged: true,
    });

    for &d in d_grid {
        if d <= d_min + 1e-12 || d >= d_const {
            continue;
        }
        // D(s) is nonincreasing in s; bracket then bisect.
        let mut q = uniform.clone();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        loop {
            let sol = blahut(&view, Some(hi), &q, tol, iters);
            q = sol.q.clone();
            let done = sol.distortion <= d;
            anchors.push(Anchor {
                d: sol.distortion,
                rate: sol.rate,
                w: sol.w,
                converged: sol.converged,
            });
            if done || hi > 1e6 {
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let sol = blahut(&view, Some(mid), &q, tol, iters);
            q = sol.q.clone();
            let gap = sol.distortion - d;
            anchors.push(Anchor {
                d: sol.distortion,
                rate: sol.rate,
                w: sol.w,
                converged: sol.converged,
            });
            if gap.abs() <= 1e-12 {
                break;
            }
            if gap > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    let hull = lower_hull(anchors);
    let mut out = Vec::with_capacity(d_grid.len());
    for &d in d_grid {
        if d < d_min - 1e-12 {
            out.push(RdPoint {
                distortion: d,
                rate: f64::NAN,
                status: SolveStatus::Infeasible,
                witness: None,
            });
            continue;
        }
        let i = hull.partition_point(|a| a.d <= d);
        let (rate, w, ok) = if i == 0 {
            let a = &hull[0];
            (a.rate, a.w.clone(), a.converged)
        } else if i == hull.len() {
            let a = &hull[i - 1];
            (a.rate, a.w.clone(), a.converged)
        } else {
            let (a, b) = (&hull[i - 1], &hull[i]);
            let t = (d - a.d) / (b.d - a.d);
            let rate = (1.0 - t) * a.rate + t * b.rate;
            let w = a.w.iter().zip(&b.w).map(|(x, y)| (1.0 - t) * x + t * y).collect();
            (rate, w, a.converged && b.converged)
        };
        out.push(RdPoint {
            distortion: d,
            rate: rate.max(0.0),
            status: if ok {
                SolveStatus::Converged
            } else {
                SolveStatus::NotConverged
            },
            witness: Some(Channel::from_raw(e_size, r, w)),
        });
    }
    Ok(out)
}
