//! Minimum leakage, the rate stage of the table, membership, inclusion and
//! convexity checks, all on top of the Frank-Wolfe engine.

use super::barrier::Barrier;
use super::fw::{duality_gap, minimize, FwOptions, Lmo};
use super::objective::{Objective, Values, Weights};
use super::{SolveStatus, SolverParams, TradeoffPoint};
use crate::error::{usage, Error, Result};
use crate::model::{EncodedSet, EncodedView, SourceModel};
use crate::prob::Channel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Result of a leakage or rate solve at one distortion budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageSolution {
    pub budget: f64,
    pub leakage: f64,
    pub rate: f64,
    pub distortion: f64,
    /// Duality gap of the minimized objective at the witness.
    pub gap: f64,
    pub status: SolveStatus,
    #[serde(skip)]
    pub witness: Channel<f64>,
}

impl LeakageSolution {
    pub fn point(&self) -> TradeoffPoint {
        TradeoffPoint::new(self.rate, self.distortion, self.leakage)
    }
}

/// Row-normalized channel from a Frank-Wolfe iterate.
fn to_channel(w: &[f64], rows: usize, cols: usize) -> Channel<f64> {
    let mut probs = w.to_vec();
    for row in probs.chunks_mut(cols) {
        row.iter_mut().for_each(|v| *v = v.max(0.0));
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    Channel::from_raw(rows, cols, probs)
}

/// Random channel with exponential row weights.
fn random_channel(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..rows * cols)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    for row in w.chunks_mut(cols) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    w
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn constant_vec(rows: usize, cols: usize, b: usize) -> Vec<f64> {
    let mut w = vec![0.0; rows * cols];
    for x in 0..rows {
        w[x * cols + b] = 1.0;
    }
    w
}

/// Mixture of the minimum-distortion vertex and the best constant channel
/// whose distortion equals the budget.
fn threshold_start(view: &EncodedView<f64>, lmo: &Lmo) -> Vec<f64> {
    let (dc, b) = view.constant_distortion();
    let mut w = constant_vec(view.e_size, view.recon_size, b);
    if dc > lmo.budget() {
        lmo.repair(&mut w);
    }
    w
}

fn fw_options(params: &SolverParams) -> FwOptions {
    FwOptions {
        gap_tol: params.objective_tol,
        objective_tol: params.objective_tol,
        max_iters: params.max_iters,
        early_exit: None,
    }
}

/// Rounding allowance when re-checking the distortion of a stored channel.
const FEAS_TOL: f64 = 1e-12;

/// Frank-Wolfe iterations per start before the best start is polished.
const SCREEN_ITERS: usize = 50;

struct Solved {
    w: Vec<f64>,
    values: Values,
    objective: f64,
    gap: f64,
}

/// Runs Frank-Wolfe from every start in parallel and keeps the best result
/// (lowest objective, earliest start on ties).
fn solve_multi(
    view: &EncodedView<f64>,
    lmo: &Lmo,
    wt: Weights,
    starts: Vec<Vec<f64>>,
    params: &SolverParams,
    max_iters: usize,
) -> Solved {
    let opts = FwOptions {
        max_iters,
        ..fw_options(params)
    };
    let results: Vec<Solved> = starts
        .into_par_iter()
        .map(|start| {
            let mut obj = Objective::new(view);
            let w = minimize(&mut obj, lmo, wt, start, &opts);
            let values = obj.values(&w);
            let gap = duality_gap(&mut obj, lmo, wt, &w);
            Solved {
                objective: wt.apply(&values),
                values,
                gap,
                w,
            }
        })
        .collect();
    results
        .into_iter()
        .reduce(|best, cur| if cur.objective < best.objective { cur } else { best })
        .expect("at least one start")
}

fn status_of(gap: f64, params: &SolverParams) -> SolveStatus {
    if gap <= params.certificate_tol() {
        SolveStatus::Converged
    } else {
        SolveStatus::NotConverged
    }
}

fn starts_for(
    view: &EncodedView<f64>,
    lmo: &Lmo,
    warm: &[Channel<f64>],
    params: &SolverParams,
    stream: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut starts = Vec::with_capacity(params.restarts.max(warm.len() + 1));
    for w in warm {
        view.check_channel(w)?;
        let mut v = w.probs().to_vec();
        lmo.repair(&mut v);
        starts.push(v);
    }
    starts.push(threshold_start(view, lmo));
    let mut rng = rng_for(params.seed, stream);
    while starts.len() < params.restarts {
        let mut v = random_channel(&mut rng, view.e_size, view.recon_size);
        lmo.repair(&mut v);
        starts.push(v);
    }
    Ok(starts)
}

fn lmo_for(view: &EncodedView<f64>, budget: f64) -> Result<Lmo> {
    if !budget.is_finite() {
        return usage(format!("distortion budget must be finite, got {budget}"));
    }
    let obj = Objective::new(view);
    Lmo::new(obj.weighted_costs(), view.e_size, view.recon_size, budget)
}

fn constant_solution(view: &EncodedView<f64>, budget: f64) -> LeakageSolution {
    let (dc, b) = view.constant_distortion();
    LeakageSolution {
        budget,
        leakage: 0.0,
        rate: 0.0,
        distortion: dc,
        gap: 0.0,
        status: SolveStatus::Converged,
        witness: Channel::constant(view.e_size, view.recon_size, b),
    }
}

/// Minimum of `I(X_H; X̂)` over channels `p(x̂ | x_E)` with distortion at most
/// `budget`.
pub fn min_leakage(
    src: &SourceModel<f64>,
    e: &EncodedSet,
    budget: f64,
    params: &SolverParams,
) -> Result<LeakageSolution> {
    min_leakage_with_starts(src, e, budget, params, &[])
}

/// [`min_leakage`] with extra feasible starts (for instance witnesses of a
/// smaller encoded set lifted by [`lift_between`]). The result is never worse
/// than the best start.
pub fn min_leakage_with_starts(
    src: &SourceModel<f64>,
    e: &EncodedSet,
    budget: f64,
    params: &SolverParams,
    warm: &[Channel<f64>],
) -> Result<LeakageSolution> {
    params.validate()?;
    let view = src.view(e)?;
    solve_leakage(&view, budget, params, warm)
}

fn solve_leakage(
    view: &EncodedView<f64>,
    budget: f64,
    params: &SolverParams,
    warm: &[Channel<f64>],
) -> Result<LeakageSolution> {
    let lmo = lmo_for(view, budget)?;
    if view.constant_distortion().0 <= budget {
        return Ok(constant_solution(view, budget));
    }
    let starts = starts_for(view, &lmo, warm, params, 0)?;
    // Leakage is convex in the channel: every start is screened with a short
    // run, the best is polished, and only an uncertified result gets the full
    // iteration budget.
    let wt = Weights::leakage_only();
    let screen = SCREEN_ITERS.min(params.max_iters);
    let mut best = solve_multi(view, &lmo, wt, starts, params, screen);
    if best.gap > params.objective_tol && best.values.leakage > 0.0 {
        polish(view, &lmo, budget, params, &mut best);
    }
    if best.gap > params.certificate_tol() {
        let more = solve_multi(view, &lmo, wt, vec![best.w.clone()], params, params.max_iters);
        if more.objective < best.objective {
            best = more;
        }
    }
    Ok(LeakageSolution {
        budget,
        leakage: best.values.leakage,
        rate: best.values.rate,
        distortion: best.values.distortion,
        gap: best.gap,
        status: status_of(best.gap, params),
        witness: to_channel(&best.w, view.e_size, view.recon_size),
    })
}

/// Newton refinement of a Frank-Wolfe minimum-leakage point. Frank-Wolfe
/// closes the last digits of the gap slowly when the optimum sits on a face
/// of the polytope; the barrier method converges there quadratically.
fn polish(
    view: &EncodedView<f64>,
    lmo: &Lmo,
    budget: f64,
    params: &SolverParams,
    best: &mut Solved,
) {
    let stage = Barrier::new(view, Weights::leakage_only(), budget, None);
    let Some((w, _)) = stage.solve(&best.w, params.objective_tol, params.max_iters.min(2000)) else {
        return;
    };
    let mut obj = Objective::new(view);
    let values = obj.values(&w);
    if values.distortion <= budget && values.leakage < best.values.leakage {
        let gap = duality_gap(&mut obj, lmo, Weights::leakage_only(), &w);
        *best = Solved {
            objective: values.leakage,
            values,
            gap,
            w,
        };
    }
}

/// Minimum rate among channels with distortion at most `budget` and leakage
/// at most `l_star + lex_slack`: the second stage of the lexicographic
/// (leakage first, then rate) table entry.
///
/// The stage starts from the best feasible warm start and runs a log-barrier
/// Newton method on the two constraints. `warm` should contain a
/// minimum-leakage witness; without one the first stage is solved here.
pub fn rate_at_min_leakage(
    src: &SourceModel<f64>,
    e: &EncodedSet,
    budget: f64,
    l_star: f64,
    params: &SolverParams,
    warm: &[Channel<f64>],
) -> Result<LeakageSolution> {
    params.validate()?;
    let view = src.view(e)?;
    solve_rate_stage(&view, budget, l_star, params, warm)
}

fn solve_rate_stage(
    view: &EncodedView<f64>,
    budget: f64,
    l_star: f64,
    params: &SolverParams,
    warm: &[Channel<f64>],
) -> Result<LeakageSolution> {
    let lmo = lmo_for(view, budget)?;
    if view.constant_distortion().0 <= budget {
        return Ok(constant_solution(view, budget));
    }
    let limit = l_star + params.lex_slack;
    let mut obj = Objective::new(view);
    let mut best: Option<(Vec<f64>, Values)> = None;
    let consider = |best: &mut Option<(Vec<f64>, Values)>, w: &[f64], obj: &mut Objective<'_>| {
        let v = obj.values(w);
        if v.leakage <= limit
            && v.distortion <= budget + FEAS_TOL
            && best.as_ref().map_or(true, |(_, b)| v.rate < b.rate)
        {
            *best = Some((w.to_vec(), v));
        }
    };
    for w in warm {
        view.check_channel(w)?;
        let mut v = w.probs().to_vec();
        lmo.repair(&mut v);
        consider(&mut best, &v, &mut obj);
    }
    if best.is_none() {
        let first = solve_leakage(view, budget, params, warm)?;
        consider(&mut best, first.witness.probs(), &mut obj);
        if best.is_none() {
            // l_star is below what the solver reaches; report its witness
            return Ok(LeakageSolution {
                status: SolveStatus::NotConverged,
                ..first
            });
        }
    }
    let stage = Barrier::new(view, Weights::rate_only(), budget, Some(limit));
    let start = best.as_ref().expect("a feasible start exists").0.clone();
    let refined = stage.solve(&start, params.objective_tol, params.max_iters.min(2000));
    let converged = refined.as_ref().is_some_and(|(_, ok)| *ok);
    if let Some((w, _)) = refined {
        consider(&mut best, &w, &mut obj);
    }
    let (w, v) = best.expect("a feasible start exists");
    Ok(LeakageSolution {
        budget,
        leakage: v.leakage,
        rate: v.rate,
        distortion: v.distortion,
        gap: duality_gap(&mut obj, &lmo, Weights::leakage_only(), &w),
        status: if converged {
            SolveStatus::Converged
        } else {
            SolveStatus::NotConverged
        },
        witness: to_channel(&w, view.e_size, view.recon_size),
    })
}

/// Re-expresses a channel on `X_{e1}` as a channel on `X_{e2}` (`e1 ⊆ e2`)
/// that ignores the attributes of `e2` outside `e1`. Every coordinate of the
/// evaluated point is unchanged.
pub fn lift_between(
    src: &SourceModel<f64>,
    e1: &EncodedSet,
    e2: &EncodedSet,
    w: &Channel<f64>,
) -> Result<Channel<f64>> {
    if !e1.is_subset_of(e2) {
        return usage(format!("lift_between: {e1} is not a subset of {e2}"));
    }
    let v1 = src.view(e1)?;
    let v2 = src.view(e2)?;
    v1.check_channel(w)?;
    let mut map = vec![0usize; v2.e_size];
    for k in 0..v1.k_size {
        map[v2.e_of_k[k]] = v1.e_of_k[k];
    }
    let probs = map.iter().flat_map(|&x| w.row(x).iter().copied()).collect();
    Ok(Channel::from_raw(v2.e_size, v2.recon_size, probs))
}

/// Minimum-leakage curve over `d_grid` for one encoded set. Budgets are
/// solved in ascending order and each witness warm-starts the next budget,
/// so the curve is nonincreasing in `D` by construction.
pub fn leakage_curve(
    src: &SourceModel<f64>,
    e: &EncodedSet,
    d_grid: &[f64],
    params: &SolverParams,
) -> Result<Vec<Result<LeakageSolution>>> {
    let mut out = min_leakage_cases(src, std::slice::from_ref(e), d_grid, params, false)?;
    Ok(out.pop().unwrap().into_iter().map(|r| r.map(|(l, _)| l)).collect())
}

type CaseRow = Result<(LeakageSolution, Option<LeakageSolution>)>;

/// Minimum leakage (and, when `with_rate`, the rate stage) for several
/// encoded sets over a list of budgets. Cases are solved in order of size;
/// witnesses of every already-solved subset case are lifted and used as
/// starts, so `L*` never increases along a chain `E1 ⊆ E2`. Results are
/// indexed like `cases` and `d_list`.
pub fn min_leakage_cases(
    src: &SourceModel<f64>,
    cases: &[EncodedSet],
    d_list: &[f64],
    params: &SolverParams,
    with_rate: bool,
) -> Result<Vec<Vec<CaseRow>>> {
    params.validate()?;
    let views: Vec<EncodedView<f64>> = cases.iter().map(|e| src.view(e)).collect::<Result<_>>()?;
    let mut case_order: Vec<usize> = (0..cases.len()).collect();
    case_order.sort_by_key(|&i| cases[i].attrs().len());
    let mut d_order: Vec<usize> = (0..d_list.len()).collect();
    d_order.sort_by(|&a, &b| d_list[a].total_cmp(&d_list[b]));

    let mut results: Vec<Option<Vec<CaseRow>>> = vec![None; cases.len()];
    for &ci in &case_order {
        let view = &views[ci];
        let mut rows: Vec<Option<CaseRow>> = vec![None; d_list.len()];
        let mut prev: Option<Channel<f64>> = None;
        for &di in &d_order {
            let d = d_list[di];
            let mut warm = Vec::new();
            if let Some(p) = &prev {
                warm.push(p.clone());
            }
            for (cj, done) in results.iter().enumerate() {
                let Some(done) = done else { continue };
                if cj == ci || !cases[cj].is_subset_of(&cases[ci]) {
                    continue;
                }
                if let Ok((sol, _)) = &done[di] {
                    warm.push(lift_between(src, &cases[cj], &cases[ci], &sol.witness)?);
                }
            }
            let row = solve_leakage(view, d, params, &warm).and_then(|sol| {
                let rate = if with_rate {
                    Some(solve_rate_stage(
                        view,
                        d,
                        sol.leakage,
                        params,
                        std::slice::from_ref(&sol.witness),
                    )?)
                } else {
                    None
                };
                Ok((sol, rate))
            });
            if let Ok((sol, _)) = &row {
                prev = Some(sol.witness.clone());
            }
            rows[di] = Some(row);
        }
        results[ci] = Some(rows.into_iter().map(Option::unwrap).collect());
    }
    Ok(results.into_iter().map(Option::unwrap).collect())
}

/// Outcome of a membership query.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub member: bool,
    /// For non-members: whether a dual bound proves that no channel reaches
    /// the point (otherwise the search was merely unsuccessful).
    pub certified: bool,
    pub witness: Option<Channel<f64>>,
    pub achieved: Option<TradeoffPoint>,
}

impl Membership {
    fn non_member(certified: bool) -> Self {
        Self {
            member: false,
            certified,
            witness: None,
            achieved: None,
        }
    }
}

/// Whether some channel reaches rate `<= R + tol`, distortion `<= D + tol`
/// and leakage `<= L + tol`.
///
/// At distortion budget `D + tol` the achievable `(rate, leakage)` pairs form
/// a convex set, so the search bisects on the weight `theta` of the
/// scalarization `(1 - theta) rate + theta leakage`. A minimized value (minus
/// its duality gap) above the same combination of the targets certifies
/// non-membership.
pub fn membership(
    src: &SourceModel<f64>,
    e: &EncodedSet,
    point: &TradeoffPoint,
    tol: f64,
    params: &SolverParams,
) -> Result<Membership> {
    params.validate()?;
    if !(tol >= 0.0) {
        return usage("membership tolerance must be nonnegative");
    }
    let view = src.view(e)?;
    let budget = point.distortion + tol;
    let lmo = match lmo_for(&view, budget) {
        Ok(l) => l,
        Err(Error::Infeasible { .. }) => return Ok(Membership::non_member(true)),
        Err(err) => return Err(err),
    };
    let (rt, lt) = (point.rate + tol, point.leakage + tol);
    let ok = move |v: &Values| v.rate <= rt && v.leakage <= lt;
    let mut obj = Objective::new(&view);
    let found = |w: &[f64], v: Values| Membership {
        member: true,
        certified: true,
        witness: Some(to_channel(w, view.e_size, view.recon_size)),
        achieved: Some(TradeoffPoint::new(v.rate, v.distortion, v.leakage)),
    };
    let candidates = [
        threshold_start(&view, &lmo),
        lmo.min_distortion_vertex(),
    ];
    for w in &candidates {
        let v = obj.values(w);
        if ok(&v) {
            return Ok(found(w, v));
        }
    }
    let mut warm = candidates[0].clone();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..40 {
        let theta = 0.5 * (lo + hi);
        let wt = Weights::blend(theta);
        let opts = FwOptions {
            early_exit: Some(Box::new(ok)),
            ..fw_options(params)
        };
        let w = minimize(&mut obj, &lmo, wt, warm.clone(), &opts);
        let v = obj.values(&w);
        if ok(&v) {
            return Ok(found(&w, v));
        }
        let gap = duality_gap(&mut obj, &lmo, wt, &w);
        let target = wt.apply(&Values {
            rate: rt,
            leakage: lt,
            distortion: 0.0,
        });
        if wt.apply(&v) - gap > target {
            return Ok(Membership::non_member(true));
        }
        if v.rate > rt {
            hi = theta;
        } else {
            lo = theta;
        }
        warm = w;
    }
    Ok(Membership::non_member(false))
}

/// One row of an inclusion check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionRow {
    pub budget: f64,
    pub smaller: f64,
    pub larger: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionReport {
    pub smaller_set: String,
    pub larger_set: String,
    pub rows: Vec<InclusionRow>,
    pub all_hold: bool,
}

/// Checks `L*_{e2}(D) <= L*_{e1}(D) + tol` on `d_grid` for `e1 ⊆ e2`, where
/// `tol` is the solver's certificate tolerance. Infeasible budgets are
/// skipped.
pub fn inclusion_check(
    src: &SourceModel<f64>,
    e1: &EncodedSet,
    e2: &EncodedSet,
    d_grid: &[f64],
    params: &SolverParams,
) -> Result<InclusionReport> {
    if !e1.is_subset_of(e2) {
        return usage(format!("inclusion_check: {e1} is not a subset of {e2}"));
    }
    let cases = [e1.clone(), e2.clone()];
    let table = min_leakage_cases(src, &cases, d_grid, params, false)?;
    let tol = params.certificate_tol();
    let mut rows = Vec::new();
    for (di, &d) in d_grid.iter().enumerate() {
        match (&table[0][di], &table[1][di]) {
            (Ok((a, _)), Ok((b, _))) => rows.push(InclusionRow {
                budget: d,
                smaller: a.leakage,
                larger: b.leakage,
                holds: b.leakage <= a.leakage + tol,
            }),
            (Err(Error::Infeasible { .. }), _) | (_, Err(Error::Infeasible { .. })) => {}
            (Err(err), _) | (_, Err(err)) => return Err(err.clone()),
        }
    }
    let all_hold = rows.iter().all(|r| r.holds);
    Ok(InclusionReport {
        smaller_set: e1.to_string(),
        larger_set: e2.to_string(),
        rows,
        all_hold,
    })
}

/// A channel whose point dominates a mixture of two achievable points.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWitness {
    pub lambda: f64,
    pub channel: Channel<f64>,
    pub achieved: TradeoffPoint,
}

impl MixtureWitness {
    /// Rate, distortion and leakage no larger than the mixture's (within
    /// `tol`); equivalently equivocation no smaller.
    pub fn dominates(&self, mixture: &TradeoffPoint, tol: f64) -> bool {
        self.achieved.rate <= mixture.rate + tol
            && self.achieved.distortion <= mixture.distortion + tol
            && self.achieved.leakage <= mixture.leakage + tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityTrial {
    pub first: TradeoffPoint,
    pub second: TradeoffPoint,
    pub lambda: f64,
    pub mixture: TradeoffPoint,
    pub witness: Option<MixtureWitness>,
}

impl ConvexityTrial {
    pub fn passed(&self) -> bool {
        self.witness.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub trials: Vec<ConvexityTrial>,
}

impl ConvexityReport {
    pub fn all_pass(&self) -> bool {
        self.trials.iter().all(ConvexityTrial::passed)
    }

    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| !t.passed()).count()
    }
}

/// Mixes pairs of points of random channels with a random weight and asks
/// [`membership`] for a channel reaching the mixture. Trials are independent
/// and seeded per index from `params.seed`.
pub fn convexity_certificate(
    src: &SourceModel<f64>,
    e: &EncodedSet,
    trials: usize,
    tol: f64,
    params: &SolverParams,
) -> Result<ConvexityReport> {
    if trials == 0 {
        return usage("convexity_certificate needs at least one trial");
    }
    params.validate()?;
    let view = src.view(e)?;
    let trials: Vec<Result<ConvexityTrial>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(params.seed, 1_000_000 + t as u64);
            let w1 = random_channel(&mut rng, view.e_size, view.recon_size);
            let w2 = random_channel(&mut rng, view.e_size, view.recon_size);
            let lambda: f64 = rng.gen_range(0.0..1.0);
            let mut obj = Objective::new(&view);
            let p = |v: Values| TradeoffPoint::new(v.rate, v.distortion, v.leakage);
            let first = p(obj.values(&w1));
            let second = p(obj.values(&w2));
            let mixture = first.mix(&second, lambda);
            let m = membership(src, e, &mixture, tol, params)?;
            let witness = match (m.member, m.witness) {
                (true, Some(channel)) => {
                    let achieved: TradeoffPoint = src.eval_point(e, &channel)?.into();
                    let mw = MixtureWitness {
                        lambda,
                        channel,
                        achieved,
                    };
                    mw.dominates(&mixture, tol + 1e-9).then_some(mw)
                }
                _ => None,
            };
            Ok(ConvexityTrial {
                first,
                second,
                lambda,
                mixture,
                witness,
            })
        })
        .collect();
    Ok(ConvexityReport {
        trials: trials.into_iter().collect::<Result<_>>()?,
    })
}
