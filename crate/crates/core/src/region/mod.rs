//! Boundary curves and membership for the achievable region of a source and
//! an encoded set `E`: all `(R, D, L)` with
//!
//! ```text
//! R >= I(X_E; X̂),   D >= E d(X_R, X̂),   L >= I(X_H; X̂)
//! ```
//!
//! for some test channel `W = p(x̂ | x_E)`. Leakage `L` is the complement of
//! the equivocation: `L = H(X_H) - H(X_H | X̂)`.
//!
//! - [`rd_curve`]: rate-distortion function by Blahut-Arimoto.
//! - [`min_leakage`], [`rate_at_min_leakage`]: the `(L*, R)` table at a given
//!   distortion, by Frank-Wolfe with away steps and a log-barrier Newton
//!   method for the rate stage.
//! - [`membership`], [`inclusion_check`], [`convexity_certificate`].
//! - [`grid_oracle`]: exhaustive search over a discretized channel polytope,
//!   with a rigorous bound on how far it can be from the true optimum.

mod barrier;
mod blahut;
mod fw;
mod objective;
mod oracle;
mod solver;

pub use blahut::{rd_curve, RdPoint};
pub use oracle::{grid_oracle, grid_oracle_budget, OracleResult, ORACLE_BUDGET};
pub use solver::{
    convexity_certificate, inclusion_check, leakage_curve, lift_between, membership, min_leakage,
    min_leakage_cases, min_leakage_with_starts, rate_at_min_leakage, ConvexityReport,
    ConvexityTrial, InclusionReport, InclusionRow, LeakageSolution, Membership, MixtureWitness,
};

use crate::error::{usage, Result};
use serde::{Deserialize, Serialize};

/// Knobs shared by the region solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Frank-Wolfe stops once the duality gap falls below this value, or when
    /// the objective improves by less than it for many iterations in a row.
    /// Blahut-Arimoto uses it as the bound on its rate gap.
    pub objective_tol: f64,
    pub max_iters: usize,
    /// Number of Frank-Wolfe starts per problem (warm starts included).
    pub restarts: usize,
    /// Grid oracle discretization; must divide 1 evenly.
    pub grid_step: f64,
    /// Leakage slack allowed in the second (rate) stage of the table.
    pub lex_slack: f64,
    /// Seed for the randomized starts.
    pub seed: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            objective_tol: 1e-9,
            max_iters: 20_000,
            restarts: 16,
            grid_step: 0.05,
            lex_slack: 1e-7,
            seed: 0,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.objective_tol > 0.0) || !(self.lex_slack > 0.0) {
            return usage("objective_tol and lex_slack must be positive");
        }
        if self.max_iters == 0 || self.restarts == 0 {
            return usage("max_iters and restarts must be positive");
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 0.25) {
            return usage(format!("grid_step must lie in (0, 0.25], got {}", self.grid_step));
        }
        Ok(())
    }

    /// Final duality gap below which a solve counts as converged.
    pub fn certificate_tol(&self) -> f64 {
        (1e3 * self.objective_tol).max(1e-9)
    }
}

/// Outcome of a single solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// The iteration limit was hit before the gap certificate; the value is
    /// still attained by the witness but may be suboptimal.
    NotConverged,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "ok",
            SolveStatus::NotConverged => "not_converged",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

/// A `(rate, distortion, leakage)` triple. Equivocation is `H(X_H) - leakage`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub rate: f64,
    pub distortion: f64,
    pub leakage: f64,
}

impl TradeoffPoint {
    pub fn new(rate: f64, distortion: f64, leakage: f64) -> Self {
        Self {
            rate,
            distortion,
            leakage,
        }
    }

    pub fn equivocation(&self, hidden_entropy: f64) -> f64 {
        hidden_entropy - self.leakage
    }

    /// `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &TradeoffPoint, lambda: f64) -> TradeoffPoint {
        let m = |a: f64, b: f64| lambda * a + (1.0 - lambda) * b;
        TradeoffPoint {
            rate: m(self.rate, other.rate),
            distortion: m(self.distortion, other.distortion),
            leakage: m(self.leakage, other.leakage),
        }
    }
}

impl From<crate::model::PointEval<f64>> for TradeoffPoint {
    fn from(p: crate::model::PointEval<f64>) -> Self {
        Self::new(p.rate, p.distortion, p.leakage)
    }
}
