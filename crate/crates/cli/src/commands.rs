use privregion::codec::{
    achievability_bounds, generate_codebook, measure_exact, measure_mc, BoundsReport, EmpiricalMeasures,
};
use privregion::prob::{joint_entropy, JointPmf, Pmf};
use privregion::region::{
    convexity_certificate, inclusion_check, min_leakage_cases, rate_at_min_leakage, rd_curve, min_leakage,
    InclusionReport, SolveStatus,
};
use privregion::types::{
    check_delta_schedule, check_entropy_continuity, check_lemma_cardinality, check_lemma_implications,
    check_lemma_probability, delta_schedule, CardinalityReport, ContinuityReport, ImplicationReport,
    ProbabilityReport, ScheduleReport,
};
use privregion::{Channel64, Error, Rational64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error as ThisError;

use crate::config::{Experiment, SimMode};
use crate::output::{csv, sig, witness_hash};

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(Error::Budget { .. }) => 3,
            CliError::Core(Error::NonConvergence { .. }) => 4,
            CliError::Core(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// A command's rendered output, and whether some solve stopped before its
/// convergence certificate.
pub struct Output {
    pub text: String,
    pub unconverged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CurveKind {
    Rd,
    Ld,
}

struct Record {
    case: String,
    d: f64,
    cells: Vec<String>,
}

fn sorted_rows(mut records: Vec<Record>) -> Vec<Vec<String>> {
    records.sort_by(|a, b| a.case.cmp(&b.case).then(a.d.total_cmp(&b.d)));
    records
        .into_iter()
        .map(|r| {
            let mut row = vec![r.case, sig(r.d)];
            row.extend(r.cells);
            row
        })
        .collect()
}

fn infeasible_cells(width: usize) -> Vec<String> {
    let mut cells = vec![String::new(); width];
    cells[width - 2] = SolveStatus::Infeasible.as_str().into();
    cells
}

/// `0, step, 2 step, ...` up to the distortion of the best constant
/// reconstruction of `X_R`, beyond which every curve is flat.
pub fn stepped_grid(exp: &Experiment, step: f64) -> CliResult<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(CliError::Config(vec![format!("--grid-step must be positive, got {step}")]));
    }
    let view = exp.source.view(&exp.source.revealed_set())?;
    let top = view.constant_distortion().0;
    let count = (top / step + 1e-9).floor() as usize;
    if count > 100_000 {
        return Err(CliError::Config(vec![format!("--grid-step {step} gives more than 1e5 points")]));
    }
    Ok((0..=count).map(|i| i as f64 * step).collect())
}

pub fn curve(exp: &Experiment, kind: CurveKind, grid: &[f64]) -> CliResult<Output> {
    let src = &exp.source;
    let params = &exp.config.solver;
    let mut records = Vec::new();
    let mut unconverged = false;
    match kind {
        CurveKind::Rd => {
            let curves: Vec<_> = exp.sets.par_iter().map(|e| rd_curve(src, e, grid, params)).collect();
            for (case, curve) in exp.config.cases.iter().zip(curves) {
                for (&d, p) in grid.iter().zip(curve?) {
                    unconverged |= p.status == SolveStatus::NotConverged;
                    let cells = match (&p.witness, p.status) {
                        (Some(w), s) if s != SolveStatus::Infeasible => {
                            vec![sig(p.rate), s.as_str().into(), witness_hash(w)]
                        }
                        _ => infeasible_cells(3),
                    };
                    records.push(Record { case: case.name.clone(), d, cells });
                }
            }
        }
        CurveKind::Ld => {
            let table = min_leakage_cases(src, &exp.sets, grid, params, false)?;
            for (case, rows) in exp.config.cases.iter().zip(table) {
                for (&d, row) in grid.iter().zip(rows) {
                    let cells = match row {
                        Ok((sol, _)) => {
                            unconverged |= sol.status == SolveStatus::NotConverged;
                            vec![sig(sol.leakage), sol.status.as_str().into(), witness_hash(&sol.witness)]
                        }
                        Err(Error::Infeasible { .. }) => infeasible_cells(3),
                        Err(e) => return Err(e.into()),
                    };
                    records.push(Record { case: case.name.clone(), d, cells });
                }
            }
        }
    }
    Ok(Output {
        text: csv(&["case", "D", "value", "status", "witness_hash"], &sorted_rows(records)),
        unconverged,
    })
}

fn worse(a: SolveStatus, b: SolveStatus) -> SolveStatus {
    if a == SolveStatus::Converged {
        b
    } else {
        a
    }
}

pub fn table(exp: &Experiment, d_list: &[f64]) -> CliResult<Output> {
    let table = min_leakage_cases(&exp.source, &exp.sets, d_list, &exp.config.solver, true)?;
    let mut records = Vec::new();
    let mut unconverged = false;
    for (case, rows) in exp.config.cases.iter().zip(table) {
        for (&d, row) in d_list.iter().zip(rows) {
            let cells = match row {
                Ok((sol, Some(rate))) => {
                    let status = worse(sol.status, rate.status);
                    unconverged |= status == SolveStatus::NotConverged;
                    vec![
                        sig(sol.leakage),
                        sig(rate.rate),
                        status.as_str().into(),
                        witness_hash(&rate.witness),
                    ]
                }
                Ok((_, None)) => unreachable!("rate stage was requested"),
                Err(Error::Infeasible { .. }) => infeasible_cells(4),
                Err(e) => return Err(e.into()),
            };
            records.push(Record { case: case.name.clone(), d, cells });
        }
    }
    Ok(Output {
        text: csv(&["case", "D", "leakage", "rate", "status", "witness_hash"], &sorted_rows(records)),
        unconverged,
    })
}

#[derive(Debug, Serialize)]
struct PartitionSummary {
    mass_identity: bool,
    max_identity_diff: f64,
    tilde_within_b: bool,
    a_is_partition: bool,
    exact_arithmetic: bool,
}

#[derive(Debug, Serialize)]
struct SimRun {
    n: usize,
    delta: f64,
    status: &'static str,
    m_n: Option<usize>,
    measures: Option<EmpiricalMeasures>,
    partition: Option<PartitionSummary>,
    bounds: Option<BoundsReport>,
    /// `H(X_H | X_E) <= e_n <= H(X_H)`, up to 1e-9.
    equivocation_in_range: Option<bool>,
}

#[derive(Debug, Serialize)]
struct Trend {
    n: Vec<usize>,
    values: Vec<f64>,
    /// Last value no larger than the first.
    nonincreasing: bool,
}

impl Trend {
    fn new(points: Vec<(usize, f64)>) -> Option<Self> {
        if points.len() < 2 {
            return None;
        }
        let (n, values): (Vec<usize>, Vec<f64>) = points.into_iter().unzip();
        let nonincreasing = values[values.len() - 1] <= values[0];
        Some(Self { n, values, nonincreasing })
    }
}

#[derive(Debug, Serialize)]
struct ChannelReport {
    rows: usize,
    cols: usize,
    probs: Vec<f64>,
    hash: String,
}

impl From<&Channel64> for ChannelReport {
    fn from(w: &Channel64) -> Self {
        Self {
            rows: w.rows(),
            cols: w.cols(),
            probs: w.probs().to_vec(),
            hash: witness_hash(w),
        }
    }
}

#[derive(Debug, Serialize)]
struct SimReport {
    case: String,
    encoded: String,
    distortion_budget: f64,
    channel: ChannelReport,
    channel_status: &'static str,
    rate: f64,
    distortion: f64,
    leakage: f64,
    equivocation: f64,
    hidden_entropy: f64,
    hidden_given_encoded: f64,
    rate_target: f64,
    c: f64,
    tau: f64,
    seed: u64,
    runs: Vec<SimRun>,
    /// `u_n - E d(X_R, X̂)` per measured `n`.
    distortion_gap: Option<Trend>,
    /// `H(X_H | X̂) - e_n` per exactly measured `n`.
    equivocation_gap: Option<Trend>,
    /// Every exact identity held in every exact run.
    pass: bool,
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

pub fn simulate(exp: &Experiment) -> CliResult<Output> {
    let Some(sim) = &exp.config.simulation else {
        return Err(CliError::Config(vec!["simulate needs a \"simulation\" section".into()]));
    };
    let src = &exp.source;
    let params = &exp.config.solver;
    let ci = exp.case_index(&sim.case).expect("validated case name");
    let e = &exp.sets[ci];

    let first = min_leakage(src, e, sim.distortion, params)?;
    let sol = rate_at_min_leakage(src, e, sim.distortion, first.leakage, params, std::slice::from_ref(&first.witness))?;
    let status = worse(first.status, sol.status);
    let w = &sol.witness;
    let point = src.eval_point(e, w)?;
    // E may contain hidden attributes, so H(X_H | X_E) = H(X_{H ∪ E}) - H(X_E).
    let mut union: Vec<usize> = src.partition().hidden.iter().chain(e.attrs()).copied().collect();
    union.sort_unstable();
    union.dedup();
    let h_given_e = joint_entropy(src.joint(), &union)? - joint_entropy(src.joint(), e.attrs())?;

    let mut runs = Vec::new();
    for &n in &sim.n_list {
        let delta = delta_schedule(n, sim.c)?;
        let mut run = SimRun {
            n,
            delta,
            status: "ok",
            m_n: None,
            measures: None,
            partition: None,
            bounds: None,
            equivocation_in_range: None,
        };
        let cb = match generate_codebook(src, e, w, n, sim.rate, delta, sim.seed) {
            Ok(cb) => cb,
            Err(Error::EmptyTypicalSet { .. }) => {
                run.status = "empty_typical_set";
                runs.push(run);
                continue;
            }
            Err(err) => return Err(err.into()),
        };
        run.m_n = Some(cb.m_n);
        let exact = match sim.mode {
            SimMode::MonteCarlo => None,
            SimMode::Exact => Some(measure_exact(src, e, w, &cb)?),
            SimMode::Auto => match measure_exact(src, e, w, &cb) {
                Ok(r) => Some(r),
                Err(Error::Budget { .. }) => None,
                Err(err) => return Err(err.into()),
            },
        };
        match exact {
            Some((m, sets)) => {
                let e_n = m.e_n.expect("exact mode measures e_n");
                run.equivocation_in_range =
                    Some(e_n >= h_given_e - 1e-9 && e_n <= src.hidden_entropy() + 1e-9);
                run.bounds = Some(achievability_bounds(src, e, w, &cb, &m, &sets, sim.tau)?);
                run.partition = Some(PartitionSummary {
                    mass_identity: sets.mass_identity,
                    max_identity_diff: sets.max_identity_diff,
                    tilde_within_b: sets.tilde_within_b(),
                    a_is_partition: sets.a_is_partition(),
                    exact_arithmetic: sets.exact_arithmetic,
                });
                run.measures = Some(m);
            }
            None => {
                let mc_seed = sim.seed ^ 0x9e37_79b9_7f4a_7c15;
                run.measures = Some(measure_mc(src, e, w, &cb, sim.trials, mc_seed)?);
            }
        }
        runs.push(run);
    }

    let measured = || runs.iter().filter_map(|r| r.measures.as_ref());
    let distortion_gap = Trend::new(measured().map(|m| (m.n, m.u_n - point.distortion)).collect());
    let equivocation_gap =
        Trend::new(measured().filter_map(|m| m.e_n.map(|e_n| (m.n, point.equivocation - e_n))).collect());
    let pass = runs.iter().all(|r| {
        r.bounds.as_ref().map_or(true, BoundsReport::exact_hold) && r.equivocation_in_range != Some(false)
    });
    let report = SimReport {
        case: sim.case.clone(),
        encoded: e.to_string(),
        distortion_budget: sim.distortion,
        channel: w.into(),
        channel_status: status.as_str(),
        rate: point.rate,
        distortion: point.distortion,
        leakage: point.leakage,
        equivocation: point.equivocation,
        hidden_entropy: src.hidden_entropy(),
        hidden_given_encoded: h_given_e,
        rate_target: sim.rate,
        c: sim.c,
        tau: sim.tau,
        seed: sim.seed,
        distortion_gap,
        equivocation_gap,
        pass,
        runs,
    };
    Ok(Output {
        text: json(&report),
        unconverged: status == SolveStatus::NotConverged,
    })
}

#[derive(Debug, Serialize)]
struct ConvexitySummary {
    case: String,
    trials: usize,
    failures: usize,
    all_pass: bool,
}

#[derive(Debug, Serialize)]
struct LemmaSummary {
    implication_scans: usize,
    implication_counterexamples: u64,
    probability_checks: usize,
    probability_violations: usize,
    continuity_violations: usize,
    cardinality_scans_agree: bool,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    seed: u64,
    summary: LemmaSummary,
    implications: Vec<ImplicationReport>,
    probability: Vec<ProbabilityReport>,
    continuity: ContinuityReport,
    cardinality: CardinalityReport,
    schedule: ScheduleReport,
    convexity: Vec<ConvexitySummary>,
    inclusion: Vec<InclusionReport>,
    /// Every check that is exact at finite `n` passed.
    pass: bool,
}

/// Random joint on `x_size × y_size` with small integer weights, in exact
/// arithmetic.
fn random_joint(rng: &mut ChaCha8Rng, x_size: usize, y_size: usize) -> JointPmf<Rational64> {
    let weights: Vec<i64> = (0..x_size * y_size).map(|_| rng.gen_range(1..=6)).collect();
    let total: i64 = weights.iter().sum();
    let probs = weights.iter().map(|&w| Rational64::new(w, total)).collect();
    JointPmf::new(vec![x_size, y_size], probs).expect("weights are positive")
}

/// Binary pmf in tenths, with both symbols possible.
fn random_tenths(rng: &mut ChaCha8Rng) -> Vec<Rational64> {
    let k = rng.gen_range(1..=9);
    vec![Rational64::new(k, 10), Rational64::new(10 - k, 10)]
}

pub fn verify(exp: &Experiment) -> CliResult<Output> {
    let v = &exp.config.verify;
    let src = &exp.source;
    let params = &exp.config.solver;
    let mut rng = ChaCha8Rng::seed_from_u64(v.seed);
    let deltas: Vec<Rational64> = v.deltas.iter().map(|&(p, q)| Rational64::new(p, q)).collect();

    let mut scans = Vec::new();
    for (x_size, max_n) in [(2, v.binary_max_n), (3, v.ternary_max_n)] {
        let joint = random_joint(&mut rng, x_size, 2);
        for n in 1..=max_n {
            for &d in &deltas {
                scans.push((joint.clone(), n, d));
            }
        }
    }
    let implications: Vec<ImplicationReport> = scans
        .par_iter()
        .map(|(j, n, d)| check_lemma_implications(j, *n, *d))
        .collect::<Result<_, _>>()?;

    let p = Pmf::new(random_tenths(&mut rng))?;
    let w = privregion::ChannelQ::from_rows(&[random_tenths(&mut rng), random_tenths(&mut rng)])?;
    let mut probability = Vec::new();
    for n in 1..=v.probability_max_n {
        for &d in &deltas {
            probability.push(check_lemma_probability(&p, Some(&w), n, d)?);
        }
    }

    let continuity = check_entropy_continuity(&[2, 3, 4], v.continuity_trials, v.seed)?;
    let hidden = src.joint().marginal_pmf(&src.partition().hidden)?;
    let cardinality = check_lemma_cardinality(&hidden, &v.cardinality_n, v.schedule_c)?;
    let schedule = check_delta_schedule(v.schedule_c, v.schedule_max_k)?;

    let mut convexity = Vec::new();
    for (case, e) in exp.config.cases.iter().zip(&exp.sets) {
        let report = convexity_certificate(src, e, v.convexity_trials, v.convexity_tol, params)?;
        convexity.push(ConvexitySummary {
            case: case.name.clone(),
            trials: report.trials.len(),
            failures: report.failures(),
            all_pass: report.all_pass(),
        });
    }

    let mut inclusion = Vec::new();
    for e1 in &exp.sets {
        for e2 in &exp.sets {
            if e1.is_subset_of(e2) {
                inclusion.push(inclusion_check(src, e1, e2, &exp.config.d_grid, params)?);
            }
        }
    }

    let summary = LemmaSummary {
        implication_scans: implications.len(),
        implication_counterexamples: implications
            .iter()
            .map(|r| r.extension.counterexamples + r.projection.counterexamples + r.contrapositive.counterexamples)
            .sum(),
        probability_checks: probability.len(),
        probability_violations: probability
            .iter()
            .filter(|r| !r.holds || r.conditional.as_ref().is_some_and(|c| !c.holds))
            .count(),
        continuity_violations: continuity.violations,
        cardinality_scans_agree: cardinality.scans_agree(),
    };
    let pass = summary.implication_counterexamples == 0
        && summary.probability_violations == 0
        && summary.continuity_violations == 0
        && summary.cardinality_scans_agree
        && convexity.iter().all(|c| c.all_pass)
        && inclusion.iter().all(|r| r.all_hold);
    let report = VerifyReport {
        seed: v.seed,
        summary,
        implications,
        probability,
        continuity,
        cardinality,
        schedule,
        convexity,
        inclusion,
        pass,
    };
    Ok(Output {
        text: json(&report),
        unconverged: false,
    })
}
