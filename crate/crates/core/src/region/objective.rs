//! Rate, leakage and distortion of a channel given as a flat row-major
//! `|X_E| x |X̂|` vector, with gradients. Both information terms are convex
//! in the channel for a fixed source.

use crate::model::EncodedView;

/// Floor for logarithm arguments so gradients stay finite at the boundary.
const LOG_FLOOR: f64 = 1e-300;

fn lg(x: f64) -> f64 {
    x.max(LOG_FLOOR).log2()
}

/// Source data needed to evaluate a channel, plus scratch space.
#[derive(Debug, Clone)]
pub(crate) struct Objective<'a> {
    view: &'a EncodedView<f64>,
    pub(crate) e: usize,
    pub(crate) r: usize,
    h: usize,
    q: Vec<f64>,
    phb: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Values {
    pub rate: f64,
    pub leakage: f64,
    pub distortion: f64,
}

/// Weights of the scalarized objective `rate_w * rate + leak_w * leakage`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Weights {
    pub rate: f64,
    pub leakage: f64,
}

impl Weights {
    pub fn leakage_only() -> Self {
        Self { rate: 0.0, leakage: 1.0 }
    }

    pub fn rate_only() -> Self {
        Self { rate: 1.0, leakage: 0.0 }
    }

    /// `(1 - theta) * rate + theta * leakage`.
    pub fn blend(theta: f64) -> Self {
        Self {
            rate: 1.0 - theta,
            leakage: theta,
        }
    }

    pub fn apply(&self, v: &Values) -> f64 {
        self.apply_parts(v.rate, v.leakage)
    }

    pub fn apply_parts(&self, rate: f64, leakage: f64) -> f64 {
        self.rate * rate + self.leakage * leakage
    }
}

impl<'a> Objective<'a> {
    pub fn new(view: &'a EncodedView<f64>) -> Self {
        Self {
            view,
            e: view.e_size,
            r: view.recon_size,
            h: view.h_size,
            q: vec![0.0; view.recon_size],
            phb: vec![0.0; view.h_size * view.recon_size],
        }
    }

    /// Probability-weighted cost `p(e) d(r(e), b)`, the coefficients of the
    /// linear distortion constraint.
    pub fn weighted_costs(&self) -> Vec<f64> {
        (0..self.e * self.r)
            .map(|i| self.view.p_e[i / self.r] * self.view.cost[i])
            .collect()
    }

    fn fill_marginals(&mut self, w: &[f64]) {
        let (e, r, h) = (self.e, self.r, self.h);
        self.q.iter_mut().for_each(|v| *v = 0.0);
        self.phb.iter_mut().for_each(|v| *v = 0.0);
        for x in 0..e {
            let pe = self.view.p_e[x];
            if pe == 0.0 {
                continue;
            }
            let row = &w[x * r..(x + 1) * r];
            for b in 0..r {
                self.q[b] += pe * row[b];
            }
            for hh in 0..h {
                let phe = self.view.p_he[hh * e + x];
                if phe == 0.0 {
                    continue;
                }
                for b in 0..r {
                    self.phb[hh * r + b] += phe * row[b];
                }
            }
        }
    }

    pub fn values(&mut self, w: &[f64]) -> Values {
        self.fill_marginals(w);
        let (e, r) = (self.e, self.r);
        let mut rate = 0.0;
        for x in 0..e {
            let pe = self.view.p_e[x];
            if pe == 0.0 {
                continue;
            }
            for b in 0..r {
                let v = w[x * r + b];
                if v > 0.0 {
                    rate += pe * v * (v / self.q[b]).log2();
                }
            }
        }
        let mut leak = 0.0;
        for hh in 0..self.h {
            let ph = self.view.p_h[hh];
            for b in 0..r {
                let j = self.phb[hh * r + b];
                if j > 0.0 {
                    leak += j * (j / (ph * self.q[b])).log2();
                }
            }
        }
        Values {
            rate: rate.max(0.0),
            leakage: leak.max(0.0),
            distortion: self.view.expected_distortion(w),
        }
    }

    /// Gradient of the weighted objective with respect to each channel entry,
    /// up to a per-row constant (irrelevant on a product of simplices).
    pub fn gradient(&mut self, w: &[f64], wt: Weights, grad: &mut [f64]) {
        self.fill_marginals(w);
        let (e, r) = (self.e, self.r);
        let lq: Vec<f64> = self.q.iter().map(|&q| lg(q)).collect();
        let lphb: Vec<f64> = self.phb.iter().map(|&v| lg(v)).collect();
        for x in 0..e {
            let pe = self.view.p_e[x];
            for b in 0..r {
                let i = x * r + b;
                if pe == 0.0 {
                    grad[i] = 0.0;
                    continue;
                }
                let mut g = 0.0;
                if wt.rate != 0.0 {
                    g += wt.rate * pe * (lg(w[i]) - lq[b]);
                }
                if wt.leakage != 0.0 {
                    let mut s = -pe * lq[b];
                    for hh in 0..self.h {
                        let phe = self.view.p_he[hh * e + x];
                        if phe != 0.0 {
                            s += phe * lphb[hh * r + b];
                        }
                    }
                    g += wt.leakage * s;
                }
                grad[i] = g;
            }
        }
    }
}
