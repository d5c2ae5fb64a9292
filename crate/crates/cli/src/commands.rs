use std::io::Write;
use std::path::Path;

use posobs_core::certify::DEFAULT_MARGIN;
use posobs_core::fixtures;
use posobs_core::sim::{
    make_discrete_switching_signal, make_switching_signal, simulate_continuous, simulate_discrete,
    verify_bracket, BracketReport, SimulationTrace, TrueSystem,
};
use posobs_core::synth::{
    build_observer, check_conditions, run_design_procedure, ConditionReport, Domain,
    IntervalSystem, ObserverRealization, SynthError,
};

use crate::problem::{Derived, ObserverBlock, ProblemFile};
use crate::{CliError, Status};

pub const DEFAULT_BUDGET: usize = 2000;
pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 1.0;
pub const DEFAULT_STEPS: usize = 50;

fn io_err(e: std::io::Error) -> CliError {
    CliError::Input(format!("i/o error: {e}"))
}

fn observer_from(
    sys: &IntervalSystem,
    problem: &ProblemFile,
) -> Result<ObserverRealization, CliError> {
    let block = problem
        .observer
        .as_ref()
        .ok_or_else(|| CliError::Input("problem file has no observer block".into()))?;
    build_observer(sys, &block.l, &block.omega0_lower, &block.omega0_upper)
        .map_err(|e| CliError::Input(e.to_string()))
}

fn evaluate(sys: &IntervalSystem, obs: &ObserverRealization) -> Result<ConditionReport, CliError> {
    check_conditions(sys, obs, DEFAULT_MARGIN).map_err(|e| CliError::Input(e.to_string()))
}

pub fn check(problem: &ProblemFile, out: &mut dyn Write) -> Result<Status, CliError> {
    let sys = problem.system()?;
    let obs = observer_from(&sys, problem)?;
    let report = evaluate(&sys, &obs)?;
    writeln!(out, "{report}").map_err(io_err)?;
    Ok(Status::from_pass(report.passed()))
}

pub fn check_file(path: &Path, out: &mut dyn Write) -> Result<Status, CliError> {
    check(&ProblemFile::read(path)?, out)
}

/// Runs the design procedure and returns the problem with a fresh observer
/// block. Initial states already in the file are kept; otherwise the tight
/// bounds implied by the initial-state box are used.
pub fn synthesize(
    problem: &ProblemFile,
    budget: usize,
    seed: u64,
    log: &mut dyn Write,
) -> Result<(Status, Option<ProblemFile>), CliError> {
    let sys = problem.system()?;
    let omega = problem
        .observer
        .as_ref()
        .map(|o| (o.omega0_lower.clone(), o.omega0_upper.clone()));
    match run_design_procedure(&sys, None, omega, budget, seed) {
        Ok(outcome) => {
            for line in &outcome.log {
                writeln!(log, "{line}").map_err(io_err)?;
            }
            writeln!(log, "{}", outcome.report).map_err(io_err)?;
            if !outcome.report.passed() {
                return Ok((Status::Fail, None));
            }
            let obs = &outcome.observer;
            let mut emitted = problem.clone();
            emitted.observer = Some(ObserverBlock {
                l: obs.gain_l.clone(),
                omega0_lower: obs.omega0_lower.clone(),
                omega0_upper: obs.omega0_upper.clone(),
                derived: Some(Derived::from(obs)),
            });
            Ok((Status::Pass, Some(emitted)))
        }
        Err(e @ SynthError::NotFound { .. }) => {
            writeln!(log, "synthesis failed: {e}").map_err(io_err)?;
            Ok((Status::Fail, None))
        }
        Err(e) => Err(CliError::Input(e.to_string())),
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub sample_truth: Option<u64>,
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    pub steps: Option<usize>,
    pub tol: Option<f64>,
}

pub fn default_tol(domain: Domain) -> f64 {
    match domain {
        Domain::Continuous => 1e-6,
        Domain::Discrete => 1e-12,
    }
}

pub fn run_simulation(
    problem: &ProblemFile,
    opts: &SimOptions,
) -> Result<(SimulationTrace, BracketReport), CliError> {
    let sys = problem.system()?;
    let obs = observer_from(&sys, problem)?;
    let truth = match opts.sample_truth {
        Some(seed) => TrueSystem::sample(&sys, seed),
        None => problem.truth_system(&sys)?.ok_or_else(|| {
            CliError::Input("problem file has no truth block; pass --sample-truth SEED".into())
        })?,
    };
    let sw = problem.switching.as_ref();
    let seed = sw.map_or(0, |s| s.seed);
    let sim_err = |e: posobs_core::sim::SimError| CliError::Input(e.to_string());
    let trace = match sys.domain() {
        Domain::Continuous => {
            let horizon = opts
                .horizon
                .or(sw.and_then(|s| s.horizon))
                .unwrap_or(DEFAULT_HORIZON);
            let step = opts
                .step
                .or(problem.sim.as_ref().map(|s| s.step))
                .unwrap_or(DEFAULT_STEP);
            let dwell = sw.map_or(horizon / 10.0, |s| s.min_dwell);
            let sig =
                make_switching_signal(sys.subsystems(), horizon, dwell, seed).map_err(sim_err)?;
            simulate_continuous(&sys, &truth, &obs, &sig, step, horizon)
        }
        Domain::Discrete => {
            let steps = opts
                .steps
                .or(sw.and_then(|s| s.steps))
                .unwrap_or(DEFAULT_STEPS);
            let dwell = sw.map_or(1.0, |s| s.min_dwell);
            if !(dwell >= 0.0 && dwell.is_finite()) {
                return Err(CliError::Input(format!("invalid min_dwell {dwell}")));
            }
            let sig = make_discrete_switching_signal(
                sys.subsystems(),
                steps,
                dwell.round() as usize,
                seed,
            )
            .map_err(sim_err)?;
            simulate_discrete(&sys, &truth, &obs, &sig, steps)
        }
    };
    let trace = match trace {
        Ok(t) => t,
        Err(e @ posobs_core::sim::SimError::NonFinite { .. }) => {
            return Err(CliError::Method(e.to_string()))
        }
        Err(e) => return Err(sim_err(e)),
    };
    let tol = opts.tol.unwrap_or_else(|| default_tol(sys.domain()));
    let report = verify_bracket(&trace, tol);
    Ok((trace, report))
}

pub fn format_bracket(r: &BracketReport) -> String {
    let mut s = format!(
        "samples: {}\ntolerance: {:e}\nviolations: {} (0 <= xhat_lower: {}, xhat_lower <= x: {}, x <= xhat_upper: {})\n",
        r.samples,
        r.tol,
        r.total_violations(),
        r.violations[0],
        r.violations[1],
        r.violations[2]
    );
    if let Some(w) = &r.worst {
        s += &format!(
            "worst: {} by {:e} at t = {} (component {})\n",
            w.layer.label(),
            w.magnitude,
            w.time,
            w.component + 1
        );
    }
    s += &format!(
        "|xi| start {:.6e}, end {:.6e}, sup {:.6e}\noutputs match: {}\nbracket: {}",
        r.xi_norm_start,
        r.xi_norm_end,
        r.sup_xi_norm,
        r.outputs_match,
        if r.passed() { "pass" } else { "FAIL" }
    );
    s
}

/// Writes the trace CSV to `csv` and the bracket report to `report`.
pub fn simulate(
    problem: &ProblemFile,
    opts: &SimOptions,
    csv: &mut dyn Write,
    report: &mut dyn Write,
) -> Result<Status, CliError> {
    let (trace, bracket) = run_simulation(problem, opts)?;
    trace.write_csv(csv).map_err(io_err)?;
    writeln!(report, "{}", format_bracket(&bracket)).map_err(io_err)?;
    Ok(Status::from_pass(bracket.passed()))
}

pub fn bundled(id: &str) -> Result<(ProblemFile, f64), CliError> {
    // second value: required ratio |xi(end)| / |xi(0)|
    match id {
        "4.1" => Ok((ProblemFile::parse(crate::CONTINUOUS_EXAMPLE)?, 1.0)),
        "4.2" => Ok((ProblemFile::parse(crate::DISCRETE_EXAMPLE)?, 0.05)),
        other => Err(CliError::Input(format!(
            "unknown example '{other}', expected 4.1 or 4.2"
        ))),
    }
}

pub fn reproduce(id: &str, out: &mut dyn Write) -> Result<Status, CliError> {
    let (problem, decay) = bundled(id)?;
    let sys = problem.system()?;
    let obs = observer_from(&sys, &problem)?;
    let report = evaluate(&sys, &obs)?;
    let (_, bracket) = run_simulation(&problem, &SimOptions::default())?;
    let decayed = bracket.xi_norm_end < decay * bracket.xi_norm_start;
    let mark = |b: bool| if b { "pass" } else { "FAIL" };
    let w = |e| io_err(e);
    writeln!(out, "example {id} ({})", sys.domain()).map_err(w)?;
    for (cid, ok) in report.verdicts() {
        writeln!(out, "  condition {cid:<5} {}", mark(ok)).map_err(w)?;
    }
    writeln!(out, "  |xi| at start       {:.6e}", bracket.xi_norm_start).map_err(w)?;
    writeln!(out, "  |xi| at end         {:.6e}", bracket.xi_norm_end).map_err(w)?;
    writeln!(out, "  sup |xi|            {:.6e}", bracket.sup_xi_norm).map_err(w)?;
    writeln!(
        out,
        "  bracket violations  {} (tol {:e})",
        bracket.total_violations(),
        bracket.tol
    )
    .map_err(w)?;
    writeln!(out, "  decay below {decay}x     {}", mark(decayed)).map_err(w)?;
    let ok = report.passed() && bracket.passed() && decayed;
    writeln!(out, "reproduction: {}", mark(ok)).map_err(w)?;
    Ok(Status::from_pass(ok))
}

/// The bundled example files mirror the core fixtures.
pub fn example_problem(domain: Domain) -> ProblemFile {
    match domain {
        Domain::Continuous => ProblemFile::from_example(&fixtures::continuous_example()),
        Domain::Discrete => ProblemFile::from_example(&fixtures::discrete_example()),
    }
}
