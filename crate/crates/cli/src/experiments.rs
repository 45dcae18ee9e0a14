//! The four experiments. Every task (grid point, method, trial) owns its
//! channel draw and random streams, so rows do not depend on scheduling;
//! rayon collects them back in (grid, method, trial) order.

use rayon::prelude::*;
use secrecy_core::channel::{
    db_to_linear, sample_channels, sample_error, ChannelSet, ErrorKind, SystemConfig, TransmitCovariances,
    UncertaintySpec,
};
use secrecy_core::dc::{build_anchors, lift_b};
use secrecy_core::linalg::LN2;
use secrecy_core::optimizer::{
    build_markov_subproblem, build_sdp_subproblem, dc_optimize, lemma2_witness, optimize, witness_point, DcSettings,
    MethodKind,
};
use secrecy_core::rng::substream;
use secrecy_core::solver::{check_feasible, evaluate, solve};
use secrecy_core::validation::{mc_outage, trace_identity_test, worst_case_expectation_check, MarkovCase};

use crate::config::{ExperimentKind, ExperimentSpec};
use crate::output::ResultRow;
use crate::CliError;

/// Rows of a run and whether every contract held.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub rows: Vec<ResultRow>,
    pub passed: bool,
}

/// Offset separating Monte Carlo seeds from channel-draw seeds.
const MC_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn run(spec: &ExperimentSpec) -> Result<RunOutcome, CliError> {
    match spec.kind {
        ExperimentKind::PowerSweep => run_power_sweep(spec).map(|rows| RunOutcome { rows, passed: true }),
        ExperimentKind::EpsilonSweep => run_epsilon_sweep(spec).map(|rows| RunOutcome { rows, passed: true }),
        ExperimentKind::Convergence => run_convergence(spec).map(|rows| RunOutcome { rows, passed: true }),
        ExperimentKind::Validate => run_validate(spec),
    }
}

fn dc_settings(spec: &ExperimentSpec) -> DcSettings {
    DcSettings { max_iters: spec.max_dc_iters, ..DcSettings::default() }
}

/// Channels of trial `trial`. The actual eavesdropper channels are the
/// estimates plus one Gaussian error draw from `uncertainty`.
pub fn trial_channels(
    cfg: &SystemConfig,
    uncertainty: &UncertaintySpec,
    seed: u64,
    trial: usize,
) -> Result<ChannelSet, CliError> {
    let mut rng = substream(seed, trial as u64);
    let ch = sample_channels(cfg, &mut rng);
    let (e1, e2) = sample_error(uncertainty, cfg.n_e, ErrorKind::Gaussian, &mut rng)?;
    Ok(ch.with_true_error(&e1, &e2))
}

fn mc_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add(MC_SEED_OFFSET).wrapping_add(trial as u64)
}

struct Task {
    sweep_value: f64,
    method: MethodKind,
    trial: usize,
    cfg: SystemConfig,
    uncertainty: UncertaintySpec,
}

fn run_task(spec: &ExperimentSpec, task: &Task) -> ResultRow {
    let mut row = ResultRow {
        experiment: spec.kind.name().into(),
        method: task.method.name().into(),
        sweep_value: task.sweep_value,
        trial: task.trial,
        rate_bits: None,
        iterations: None,
        mc_outage: None,
        status: String::new(),
        seed: spec.seed,
    };
    let outcome = trial_channels(&task.cfg, &task.uncertainty, spec.seed, task.trial).and_then(|ch| {
        let r = optimize(&ch, &task.uncertainty, &task.cfg, task.method, &dc_settings(spec))?;
        // Half-duplex designs span two slots; no single-covariance outage applies.
        let single_slot = !matches!(task.method, MethodKind::HdMarkov | MethodKind::HdSdp);
        let outage = if single_slot && spec.mc_samples > 0 {
            let est = mc_outage(
                &r.q,
                r.secrecy_rate_surrogate,
                &ch,
                &task.uncertainty,
                &task.cfg,
                ErrorKind::Gaussian,
                spec.mc_samples,
                mc_seed(spec.seed, task.trial),
            )?;
            Some(est.p_outage)
        } else {
            None
        };
        Ok((r, outage))
    });
    match outcome {
        Ok((r, outage)) => {
            row.rate_bits = Some(r.secrecy_rate_surrogate);
            row.iterations = Some(r.iterations);
            row.mc_outage = outage;
            row.status = r.status.name().into();
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

fn sweep(spec: &ExperimentSpec, point: impl Fn(f64) -> Result<(SystemConfig, UncertaintySpec), CliError>) -> Result<Vec<ResultRow>, CliError> {
    let mut tasks = Vec::new();
    for &v in &spec.grid {
        let (cfg, uncertainty) = point(v)?;
        for &method in &spec.methods {
            for trial in 0..spec.trials {
                tasks.push(Task { sweep_value: v, method, trial, cfg: cfg.clone(), uncertainty: uncertainty.clone() });
            }
        }
    }
    Ok(tasks.par_iter().map(|t| run_task(spec, t)).collect())
}

/// Rate against the per-node power budget `P_1 = P_2` (grid in dB).
pub fn run_power_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, CliError> {
    sweep(spec, |db| {
        let p = db_to_linear(db);
        let cfg = spec.system.with_power(p, p);
        cfg.validate()?;
        let u = spec.uncertainty.build(&cfg, None)?;
        Ok((cfg, u))
    })
}

/// Rate against the error level `epsilon`, with `Omega_i = epsilon I`.
pub fn run_epsilon_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, CliError> {
    sweep(spec, |eps| {
        let cfg = spec.system.clone();
        cfg.validate()?;
        let u = spec.uncertainty.build(&cfg, Some(eps))?;
        Ok((cfg, u))
    })
}

/// One row per DC iteration with the best certified rate so far;
/// `sweep_value` is the iteration number.
pub fn run_convergence(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, CliError> {
    let cfg = spec.system.clone();
    cfg.validate()?;
    let uncertainty = spec.uncertainty.build(&cfg, None)?;
    let jobs: Vec<(MethodKind, usize)> =
        spec.methods.iter().flat_map(|&m| (0..spec.trials).map(move |t| (m, t))).collect();
    let per_job: Vec<Vec<ResultRow>> = jobs
        .par_iter()
        .map(|&(method, trial)| {
            let row = |iteration: usize, rate: Option<f64>, total: Option<usize>, status: String| ResultRow {
                experiment: spec.kind.name().into(),
                method: method.name().into(),
                sweep_value: iteration as f64,
                trial,
                rate_bits: rate,
                iterations: total,
                mc_outage: None,
                status,
                seed: spec.seed,
            };
            let result = trial_channels(&cfg, &uncertainty, spec.seed, trial)
                .and_then(|ch| Ok(optimize(&ch, &uncertainty, &cfg, method, &dc_settings(spec))?));
            match result {
                Ok(r) => r
                    .per_iteration_rates
                    .iter()
                    .enumerate()
                    .map(|(i, &rate)| row(i + 1, Some(rate.max(0.0)), Some(r.iterations), r.status.name().into()))
                    .collect(),
                Err(e) => vec![row(1, None, None, format!("error: {e}"))],
            }
        })
        .collect();
    Ok(per_job.into_iter().flatten().collect())
}

/// Markov bound cases per distribution kind in the validation suite.
pub const MARKOV_CASES: usize = 20;
pub const TRACE_TRIALS: usize = 100;
/// Draws for the SDP certificate audit.
pub const CERTIFICATE_SAMPLES: usize = 1000;

fn check_row(spec: &ExperimentSpec, check: &str, trial: usize, value: f64, pass: Result<bool, String>) -> ResultRow {
    ResultRow {
        experiment: spec.kind.name().into(),
        method: check.into(),
        sweep_value: value,
        trial,
        rate_bits: None,
        iterations: None,
        mc_outage: None,
        status: match pass {
            Ok(true) => "pass".into(),
            Ok(false) => "fail".into(),
            Err(e) => format!("fail: {e}"),
        },
        seed: spec.seed,
    }
}

/// Witness transfer and SDP certificate audit at the first anchor of a trial.
fn anchor_checks(spec: &ExperimentSpec, cfg: &SystemConfig, u: &UncertaintySpec, trial: usize) -> Vec<ResultRow> {
    let settings = DcSettings::default().solver;
    let witness = || -> Result<(f64, bool), CliError> {
        let ch = trial_channels(cfg, u, spec.seed, trial)?;
        let model = build_anchors(&ch, &TransmitCovariances::half_budget_isotropic(cfg), u, cfg)?;
        let markov = build_markov_subproblem(&model, &ch, cfg)?;
        let sol = solve(&markov.program, &settings, Some(&markov.start))?;
        let (m, mu) = lemma2_witness(&markov, &sol.point, &model, cfg)?;
        let sdp = build_sdp_subproblem(&model, &ch, cfg)?;
        let point = witness_point(&sdp, &markov.covariances(&sol.point, cfg), markov.t(&sol.point), m, mu);
        let eval = evaluate(&sdp.program, &point)?;
        Ok((eval.worst_lmi_min_eig, check_feasible(&sdp.program, &point, 1e-8)))
    };
    let certificate = || -> Result<(f64, bool), CliError> {
        let ch = trial_channels(cfg, u, spec.seed, trial)?;
        let model = build_anchors(&ch, &TransmitCovariances::half_budget_isotropic(cfg), u, cfg)?;
        let sub = build_sdp_subproblem(&model, &ch, cfg)?;
        let sol = solve(&sub.program, &settings, Some(&sub.start))?;
        let q = sub.covariances(&sol.point, cfg);
        let (b1, b2) = lift_b(&q, &model.a_e);
        let m = &sol.point.matrices[sub.vars.m.expect("SDP program has M")];
        let mu = sol.point.scalars[sub.vars.mu.expect("SDP program has mu")];
        let g_constant = -(sub.t(&sol.point) + model.beta - model.alpha) * LN2;
        let c = worst_case_expectation_check(
            &b1,
            &b2,
            g_constant,
            u,
            &model.h_bar1,
            &model.h_bar2,
            mu,
            m,
            ErrorKind::Gaussian,
            CERTIFICATE_SAMPLES,
            mc_seed(spec.seed, trial),
        )?;
        Ok((c.sample_mean - c.bound, c.passed()))
    };
    let outage = || -> Result<(f64, bool, f64, usize), CliError> {
        let ch = trial_channels(cfg, u, spec.seed, trial)?;
        let r = dc_optimize(&ch, u, cfg, MethodKind::Sdp, &dc_settings(spec))?;
        let est = mc_outage(
            &r.q,
            r.secrecy_rate_surrogate,
            &ch,
            u,
            cfg,
            ErrorKind::Gaussian,
            spec.mc_samples,
            mc_seed(spec.seed, trial),
        )?;
        Ok((est.p_outage, est.complies(cfg.rho), r.secrecy_rate_surrogate, r.iterations))
    };
    let as_row = |name: &str, r: Result<(f64, bool), CliError>| match r {
        Ok((v, ok)) => check_row(spec, name, trial, v, Ok(ok)),
        Err(e) => check_row(spec, name, trial, f64::NAN, Err(e.to_string())),
    };
    let mut rows = vec![as_row("lemma2-witness", witness()), as_row("sdp-certificate", certificate())];
    rows.push(match outage() {
        Ok((p, ok, rate, iterations)) => ResultRow {
            rate_bits: Some(rate),
            iterations: Some(iterations),
            mc_outage: Some(p),
            ..check_row(spec, "mc-outage", trial, p, Ok(ok))
        },
        Err(e) => check_row(spec, "mc-outage", trial, f64::NAN, Err(e.to_string())),
    });
    rows
}

/// Trace identity, Markov bound sweep, witness transfer, certificate audit
/// and Monte Carlo outage. `passed` is false if any row fails.
pub fn run_validate(spec: &ExperimentSpec) -> Result<RunOutcome, CliError> {
    let mut rows = Vec::new();
    let err = trace_identity_test(TRACE_TRIALS, spec.seed);
    rows.push(check_row(spec, "trace-identity", 0, err, Ok(err <= 1e-10)));

    let cfg = spec.system.clone();
    let checked = cfg.validate().map_err(CliError::from).and_then(|()| Ok(spec.uncertainty.build(&cfg, None)?));
    let u = match checked {
        Ok(u) => {
            rows.push(check_row(spec, "config", 0, 0.0, Ok(true)));
            Some(u)
        }
        Err(e) => {
            rows.push(check_row(spec, "config", 0, f64::NAN, Err(e.to_string())));
            None
        }
    };
    if let Some(u) = u {
        if spec.mc_samples == 0 {
            return Err(CliError::Usage("validate needs --mc-samples of at least 1".into()));
        }
        let markov: Vec<ResultRow> = (0..MARKOV_CASES * ErrorKind::ALL.len())
            .into_par_iter()
            .map(|i| {
                let (case_index, kind) = (i / ErrorKind::ALL.len(), ErrorKind::ALL[i % ErrorKind::ALL.len()]);
                let case = MarkovCase::random(&cfg, &mut substream(spec.seed ^ MC_SEED_OFFSET, case_index as u64));
                match case.check(kind, spec.mc_samples, mc_seed(spec.seed, i)) {
                    Ok(c) => check_row(spec, &format!("markov-bound-{}", kind.name()), case_index, c.empirical - c.bound, Ok(c.holds())),
                    Err(e) => check_row(spec, &format!("markov-bound-{}", kind.name()), case_index, f64::NAN, Err(e.to_string())),
                }
            })
            .collect();
        rows.extend(markov);
        let per_trial: Vec<Vec<ResultRow>> =
            (0..spec.trials).into_par_iter().map(|t| anchor_checks(spec, &cfg, &u, t)).collect();
        rows.extend(per_trial.into_iter().flatten());
    }
    let passed = rows.iter().all(|r| r.status == "pass");
    Ok(RunOutcome { rows, passed })
}
