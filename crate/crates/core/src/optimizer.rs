//! Robust transmit-covariance design: convex subproblems at a fixed anchor
//! and the DC loop that re-anchors them, plus the baselines.
//!
//! Every subproblem maximizes `f(Q) - alpha + beta - t` in bits. The
//! guaranteed secrecy rate of a solution is `f(Q) - t`; with probability at
//! least `1 - rho` the linearized eavesdropper term stays below
//! `t + beta - alpha`, and the linearization over-estimates the true
//! eavesdropper rate, so the same guarantee holds for the exact rate.

use rand::Rng;

use crate::channel::{
    gaussian_matrix, sum_secrecy_rate, ChannelSet, SystemConfig, TransmitCovariances, UncertaintySpec,
};
use crate::dc::{build_anchors, eve_gradient, lift_b, lift_b_adjoint, surrogate_f, LinearizedModel};
use crate::error::{Error, Result};
use crate::linalg::{block_diag, hermitize, ComplexMatrix, HermitianMatrix, LN2};
use crate::rng::stream;
use crate::solver::{
    check_feasible, solve, AffineMatrix, AffineScalar, ConicProgram, LogDetTerm, MatrixMap, Point, SolveStatus,
    SolverSettings,
};

/// `Tr(M)` is capped at this multiple of `1 + Tr(A_e)(P_1 + P_2)`.
pub const M_TRACE_CAP: f64 = 1e3;

/// Keeps `t + beta - alpha` strictly positive in the Markov program.
pub const DENOMINATOR_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    Markov,
    Sdp,
    PerfectCsi,
    HdMarkov,
    HdSdp,
}

impl MethodKind {
    pub const ALL: [MethodKind; 5] =
        [MethodKind::Markov, MethodKind::Sdp, MethodKind::PerfectCsi, MethodKind::HdMarkov, MethodKind::HdSdp];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Markov => "markov",
            MethodKind::Sdp => "sdp",
            MethodKind::PerfectCsi => "perfect-csi",
            MethodKind::HdMarkov => "hd-markov",
            MethodKind::HdSdp => "hd-sdp",
        }
    }

    /// The full-duplex robust method a half-duplex variant runs per slot.
    fn per_slot(self) -> Option<MethodKind> {
        match self {
            MethodKind::HdMarkov => Some(MethodKind::Markov),
            MethodKind::HdSdp => Some(MethodKind::Sdp),
            _ => None,
        }
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcSettings {
    /// Stop when the rate changes by at most this many bits.
    pub tolerance: f64,
    pub max_iters: usize,
    pub solver: SolverSettings,
    /// Draw the first anchor at random from this seed instead of the
    /// isotropic half-budget point.
    pub random_anchor_seed: Option<u64>,
}

impl DcSettings {
    /// Barrier schedule used for the subproblems: a smaller initial weight
    /// and a faster decrease than the generic solver defaults need fewer
    /// Newton steps on these programs at the same gap tolerance.
    pub fn subproblem_solver() -> SolverSettings {
        SolverSettings { barrier_initial: 0.1, barrier_decrease_factor: 0.05, ..SolverSettings::default() }
    }
}

impl Default for DcSettings {
    fn default() -> Self {
        Self { tolerance: 1e-4, max_iters: 20, solver: Self::subproblem_solver(), random_anchor_seed: None }
    }
}

/// Variable indices of a built subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubproblemVars {
    pub q1: Option<usize>,
    pub q2: Option<usize>,
    /// Absent in the perfect-CSI program.
    pub t: Option<usize>,
    pub m: Option<usize>,
    pub mu: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Subproblem {
    pub program: ConicProgram,
    pub vars: SubproblemVars,
    /// Strictly feasible starting point.
    pub start: Point,
    /// `alpha - beta`: adding it to the objective gives the secrecy rate.
    pub rate_offset: f64,
}

impl Subproblem {
    pub fn covariances(&self, point: &Point, cfg: &SystemConfig) -> TransmitCovariances {
        let pick = |v: Option<usize>, n: usize| match v {
            Some(i) => point.matrices[i].clone(),
            None => HermitianMatrix::zeros(n),
        };
        TransmitCovariances { q1: pick(self.vars.q1, cfg.n_t1), q2: pick(self.vars.q2, cfg.n_t2) }
    }

    pub fn t(&self, point: &Point) -> f64 {
        self.vars.t.map_or(0.0, |i| point.scalars[i])
    }
}

/// Adds `Q_1`, `Q_2` (for nodes with positive power), their budgets, and the
/// concave part `f - alpha + beta` of the objective.
fn base_program(model: &LinearizedModel, ch: &ChannelSet, cfg: &SystemConfig) -> (ConicProgram, SubproblemVars) {
    let mut p = ConicProgram::default();
    let q1 = (cfg.p1 > 0.0).then(|| p.add_matrix_var("Q1", cfg.n_t1));
    let q2 = (cfg.p2 > 0.0).then(|| p.add_matrix_var("Q2", cfg.n_t2));

    let mut r1 = AffineMatrix::new(HermitianMatrix::scaled_identity(cfg.n_r1, cfg.sigma1_sq));
    let mut r2 = AffineMatrix::new(HermitianMatrix::scaled_identity(cfg.n_r2, cfg.sigma2_sq));
    let mut linear = AffineScalar::constant(model.f_constant - model.alpha + model.beta);
    if let Some(v) = q1 {
        if cfg.xi1 > 0.0 {
            r1 = r1.with_matrix(v, MatrixMap::Congruence(ch.h11.clone()), cfg.xi1, 0);
        }
        r2 = r2.with_matrix(v, MatrixMap::Congruence(ch.h12.clone()), 1.0, 0);
        linear = linear.with_matrix(v, model.si_grad1.scale(-1.0));
        p.scalar_ineqs.push(AffineScalar::constant(-cfg.p1).with_matrix(v, HermitianMatrix::identity(cfg.n_t1)));
    }
    if let Some(v) = q2 {
        if cfg.xi2 > 0.0 {
            r2 = r2.with_matrix(v, MatrixMap::Congruence(ch.h22.clone()), cfg.xi2, 0);
        }
        r1 = r1.with_matrix(v, MatrixMap::Congruence(ch.h21.clone()), 1.0, 0);
        linear = linear.with_matrix(v, model.si_grad2.scale(-1.0));
        p.scalar_ineqs.push(AffineScalar::constant(-cfg.p2).with_matrix(v, HermitianMatrix::identity(cfg.n_t2)));
    }
    p.log_dets.push(LogDetTerm { weight: 1.0 / LN2, arg: r1 });
    p.log_dets.push(LogDetTerm { weight: 1.0 / LN2, arg: r2 });
    p.linear = linear;
    (p, SubproblemVars { q1, q2, t: None, m: None, mu: None })
}

fn seed_covariances(p: &ConicProgram, vars: &SubproblemVars, cfg: &SystemConfig) -> Vec<HermitianMatrix> {
    let iso = TransmitCovariances::half_budget_isotropic(cfg);
    let mut out = vec![HermitianMatrix::zeros(1); p.matrix_vars.len()];
    if let Some(v) = vars.q1 {
        out[v] = iso.q1.clone();
    }
    if let Some(v) = vars.q2 {
        out[v] = iso.q2.clone();
    }
    out
}

/// Markov-inequality subproblem: the expected linearized leakage
/// `Tr(B_1 Gamma_1) + Tr(B_2 Gamma_2)` must not exceed `(t + beta - alpha) rho ln 2`.
pub fn build_markov_subproblem(model: &LinearizedModel, ch: &ChannelSet, cfg: &SystemConfig) -> Result<Subproblem> {
    let (mut p, mut vars) = base_program(model, ch, cfg);
    let gap = model.beta - model.alpha;
    let t = p.add_scalar_var("t", Some((-gap + DENOMINATOR_MARGIN).max(0.0)));
    vars.t = Some(t);
    p.linear = p.linear.clone().with_scalar(t, -1.0);

    let k1 = lift_b_adjoint(&model.a_e, &model.gamma1, cfg.n_t1);
    let k2 = lift_b_adjoint(&model.a_e, &model.gamma2, cfg.n_t2);
    let mut markov = AffineScalar::constant(-gap * cfg.rho * LN2).with_scalar(t, -cfg.rho * LN2);
    if let Some(v) = vars.q1 {
        markov = markov.with_matrix(v, k1.clone());
    }
    if let Some(v) = vars.q2 {
        markov = markov.with_matrix(v, k2.clone());
    }
    p.scalar_ineqs.push(markov);

    let mut matrices = seed_covariances(&p, &vars, cfg);
    let seeded = TransmitCovariances {
        q1: vars.q1.map_or(HermitianMatrix::zeros(cfg.n_t1), |v| matrices[v].clone()),
        q2: vars.q2.map_or(HermitianMatrix::zeros(cfg.n_t2), |v| matrices[v].clone()),
    };
    let leak = k1.inner(&seeded.q1) + k2.inner(&seeded.q2);
    let lower = p.scalar_vars[t].lower.unwrap_or(0.0);
    let t0 = (leak / (cfg.rho * LN2) - gap).max(lower) + 1.0;
    let start = Point { matrices: std::mem::take(&mut matrices), scalars: vec![t0] };
    Ok(Subproblem { program: p, vars, start, rate_offset: -gap })
}

/// Worst-case CVaR subproblem: `mu + Tr(Pi M) / rho <= 0` and
/// `M - blockdiag(B_1, B_2, -(t + beta - alpha) ln 2 - mu) >= 0`, `M >= 0`.
pub fn build_sdp_subproblem(model: &LinearizedModel, ch: &ChannelSet, cfg: &SystemConfig) -> Result<Subproblem> {
    let (mut p, mut vars) = base_program(model, ch, cfg);
    let gap = model.beta - model.alpha;
    // Only transmitting nodes contribute a block; a silent node's channel
    // does not enter the leakage.
    let full1 = cfg.n_t1 * cfg.n_e;
    let full2 = cfg.n_t2 * cfg.n_e;
    let d1 = if vars.q1.is_some() { full1 } else { 0 };
    let d2 = if vars.q2.is_some() { full2 } else { 0 };
    let n = d1 + d2 + 1;
    let m = p.add_matrix_var("M", n);
    let t = p.add_scalar_var("t", Some(0.0));
    let mu = p.add_scalar_var("mu", None);
    vars.t = Some(t);
    vars.m = Some(m);
    vars.mu = Some(mu);
    p.linear = p.linear.clone().with_scalar(t, -1.0);

    let keep: Vec<usize> = (0..d1).chain(full1..full1 + d2).chain(std::iter::once(full1 + full2)).collect();
    let pi = hermitize(&model.pi.as_matrix().select_rows(&keep).select_columns(&keep))?;
    let pi = &pi;
    p.scalar_ineqs.push(AffineScalar::constant(0.0).with_scalar(mu, 1.0).with_matrix(m, pi.scale(1.0 / cfg.rho)));
    // With a singular `Pi` (no uncertainty) `M` can grow without bound along
    // directions `Pi` does not see; the cap restricts, never relaxes, the set.
    let cap = M_TRACE_CAP * (1.0 + model.a_e.trace() * (cfg.p1 + cfg.p2));
    p.scalar_ineqs.push(AffineScalar::constant(-cap).with_matrix(m, HermitianMatrix::identity(n)));

    let corner = |v: f64| {
        let mut d = vec![0.0; n];
        d[n - 1] = v;
        HermitianMatrix::from_real_diagonal(&d)
    };
    let a_e_t = model.a_e.as_matrix().transpose();
    let mut lmi = AffineMatrix::new(corner(gap * LN2))
        .with_matrix(m, MatrixMap::Identity, 1.0, 0)
        .with_scalar(t, corner(LN2))
        .with_scalar(mu, corner(1.0));
    if let Some(v) = vars.q1 {
        lmi = lmi.with_matrix(v, MatrixMap::KronLeft(a_e_t.clone()), -1.0, 0);
    }
    if let Some(v) = vars.q2 {
        lmi = lmi.with_matrix(v, MatrixMap::KronLeft(a_e_t), -1.0, d1);
    }
    p.lmis.push(lmi);

    let mut matrices = seed_covariances(&p, &vars, cfg);
    let seeded = TransmitCovariances {
        q1: vars.q1.map_or(HermitianMatrix::zeros(cfg.n_t1), |v| matrices[v].clone()),
        q2: vars.q2.map_or(HermitianMatrix::zeros(cfg.n_t2), |v| matrices[v].clone()),
    };
    let (b1, b2) = lift_b(&seeded, &model.a_e);
    let m0 = hermitize(&block_diag(&[
        &(b1.as_matrix() + ComplexMatrix::identity(full1, full1)).view((0, 0), (d1, d1)).into_owned(),
        &(b2.as_matrix() + ComplexMatrix::identity(full2, full2)).view((0, 0), (d2, d2)).into_owned(),
        &ComplexMatrix::identity(1, 1),
    ]))?;
    let mu0 = -pi.inner(&m0) / cfg.rho - 1.0;
    // The corner of the LMI at the seed is 1 + (t0 + beta - alpha) ln 2 + mu0.
    let t0 = ((-mu0) / LN2 - gap).max(0.0) + 1.0;
    matrices[m] = m0;
    let start = Point { matrices, scalars: vec![t0, mu0] };
    Ok(Subproblem { program: p, vars, start, rate_offset: -gap })
}

/// Embedding of a Markov-feasible point into the SDP feasible
/// set: `M = blockdiag(B_1, B_2, 0)` and `mu = -(t + beta - alpha) ln 2`.
pub fn lemma2_witness(
    markov: &Subproblem,
    point: &Point,
    model: &LinearizedModel,
    cfg: &SystemConfig,
) -> Result<(HermitianMatrix, f64)> {
    if !check_feasible(&markov.program, point, 1e-8) {
        return Err(Error::InvalidArgument("point is not feasible for the Markov program".into()));
    }
    let q = markov.covariances(point, cfg);
    let t = markov.t(point);
    let (b1, b2) = lift_b(&q, &model.a_e);
    let m = hermitize(&block_diag(&[b1.as_matrix(), b2.as_matrix(), &ComplexMatrix::zeros(1, 1)]))?;
    let mu = -(t + model.beta - model.alpha) * LN2;
    Ok((m, mu))
}

/// SDP point carrying the Markov solution and its witness.
pub fn witness_point(sdp: &Subproblem, q: &TransmitCovariances, t: f64, m: HermitianMatrix, mu: f64) -> Point {
    let mut point = sdp.program.zero_point();
    if let Some(v) = sdp.vars.q1 {
        point.matrices[v] = q.q1.clone();
    }
    if let Some(v) = sdp.vars.q2 {
        point.matrices[v] = q.q2.clone();
    }
    point.matrices[sdp.vars.m.expect("SDP program has M")] = m;
    point.scalars[sdp.vars.t.expect("SDP program has t")] = t;
    point.scalars[sdp.vars.mu.expect("SDP program has mu")] = mu;
    point
}

/// Perfect-CSI subproblem: the eavesdropper rate is linearized at the
/// actual channels and no outage variable is needed.
pub fn build_perfect_subproblem(model: &LinearizedModel, ch: &ChannelSet, cfg: &SystemConfig) -> Result<Subproblem> {
    let (mut p, vars) = base_program(model, ch, cfg);
    let mut linear = p.linear.clone();
    if let Some(v) = vars.q1 {
        linear = linear.with_matrix(v, eve_gradient(&ch.he1_bar, &model.a_e).scale(-1.0));
    }
    if let Some(v) = vars.q2 {
        linear = linear.with_matrix(v, eve_gradient(&ch.he2_bar, &model.a_e).scale(-1.0));
    }
    p.linear = linear;
    let matrices = seed_covariances(&p, &vars, cfg);
    let start = Point { matrices, scalars: vec![] };
    Ok(Subproblem { program: p, vars, start, rate_offset: 0.0 })
}

/// Iterate history of one DC run.
///
/// Re-anchoring changes the eavesdropper linearization, so the rate certified
/// by consecutive subproblems need not increase. The run therefore keeps the
/// best certified iterate: `rate_history` is the best rate so far and
/// `raw_rate_history` the rate certified at each iteration.
#[derive(Debug, Clone)]
pub struct DcState {
    pub iteration: usize,
    /// Anchor of the last subproblem.
    pub anchor: TransmitCovariances,
    /// Solution of the last subproblem; the next anchor.
    pub current_q: TransmitCovariances,
    /// Best certified iterate and its outage variables.
    pub best_q: TransmitCovariances,
    pub t: f64,
    pub mu: Option<f64>,
    pub m: Option<HermitianMatrix>,
    pub rate_history: Vec<f64>,
    pub raw_rate_history: Vec<f64>,
    /// Worst solver status seen.
    pub status: SolveStatus,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub q: TransmitCovariances,
    /// Guaranteed rate at convergence, clamped at zero.
    pub secrecy_rate_surrogate: f64,
    /// Exact secrecy rate at the channels the method optimizes against.
    pub secrecy_rate_exact_at_estimate: f64,
    pub iterations: usize,
    pub per_iteration_rates: Vec<f64>,
    pub status: SolveStatus,
    /// Final DC state, absent for the trivial zero-power case and the
    /// two-slot half-duplex runs.
    pub state: Option<DcState>,
}

impl OptimizeResult {
    fn zero(cfg: &SystemConfig) -> Self {
        Self {
            q: TransmitCovariances::zeros(cfg),
            secrecy_rate_surrogate: 0.0,
            secrecy_rate_exact_at_estimate: 0.0,
            iterations: 1,
            per_iteration_rates: vec![0.0],
            status: SolveStatus::Optimal,
            state: None,
        }
    }
}

fn worse(a: SolveStatus, b: SolveStatus) -> SolveStatus {
    let rank = |s| match s {
        SolveStatus::Optimal => 0,
        SolveStatus::MaxIters => 1,
        SolveStatus::Infeasible => 2,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

/// PSD matrix with trace drawn uniformly in `(0, budget]`.
fn random_covariance(rng: &mut impl Rng, n: usize, budget: f64) -> HermitianMatrix {
    let g = gaussian_matrix(rng, n, n);
    let w = hermitize(&(&g * g.adjoint())).expect("square");
    let share: f64 = rng.gen_range(0.05..1.0);
    w.scale(share * budget / w.trace())
}

fn initial_anchor(cfg: &SystemConfig, settings: &DcSettings) -> TransmitCovariances {
    match settings.random_anchor_seed {
        None => TransmitCovariances::half_budget_isotropic(cfg),
        Some(seed) => {
            let mut rng = stream(seed);
            TransmitCovariances {
                q1: random_covariance(&mut rng, cfg.n_t1, cfg.p1),
                q2: random_covariance(&mut rng, cfg.n_t2, cfg.p2),
            }
        }
    }
}

/// Shared DC iteration: build at the anchor, solve, re-anchor at the
/// solution. Stops when the certified rate changes by at most the tolerance.
fn dc_loop(
    cfg: &SystemConfig,
    settings: &DcSettings,
    build: &dyn Fn(&TransmitCovariances) -> Result<Subproblem>,
) -> Result<DcState> {
    let anchor = initial_anchor(cfg, settings);
    let mut state = DcState {
        iteration: 0,
        anchor: anchor.clone(),
        current_q: anchor.clone(),
        best_q: anchor,
        t: 0.0,
        mu: None,
        m: None,
        rate_history: Vec::new(),
        raw_rate_history: Vec::new(),
        status: SolveStatus::Optimal,
    };
    for k in 1..=settings.max_iters {
        let sub = build(&state.current_q)?;
        let sol = solve(&sub.program, &settings.solver, Some(&sub.start))?;
        if sol.status == SolveStatus::Infeasible {
            return Err(Error::Infeasible { iteration: k });
        }
        let rate = sol.objective + sub.rate_offset;
        let q = sub.covariances(&sol.point, cfg);
        state.anchor = std::mem::replace(&mut state.current_q, q.clone());
        state.status = worse(state.status, sol.status);
        state.iteration = k;
        let best = state.rate_history.last().copied().unwrap_or(f64::NEG_INFINITY);
        if rate > best {
            state.best_q = q;
            state.t = sub.t(&sol.point);
            state.mu = sub.vars.mu.map(|i| sol.point.scalars[i]);
            state.m = sub.vars.m.map(|i| sol.point.matrices[i].clone());
        }
        state.rate_history.push(rate.max(best));
        let prev = state.raw_rate_history.last().copied();
        state.raw_rate_history.push(rate);
        if prev.is_some_and(|prev| (rate - prev).abs() <= settings.tolerance) {
            break;
        }
    }
    Ok(state)
}

fn finish(state: DcState, exact: f64) -> OptimizeResult {
    let last = *state.rate_history.last().expect("at least one iteration");
    OptimizeResult {
        q: state.best_q.clone(),
        secrecy_rate_surrogate: last.max(0.0),
        secrecy_rate_exact_at_estimate: exact,
        iterations: state.iteration,
        per_iteration_rates: state.rate_history.clone(),
        status: state.status,
        state: Some(state),
    }
}

/// Robust DC design with the Markov or SDP subproblem.
pub fn dc_optimize(
    ch: &ChannelSet,
    spec: &UncertaintySpec,
    cfg: &SystemConfig,
    method: MethodKind,
    settings: &DcSettings,
) -> Result<OptimizeResult> {
    let builder: fn(&LinearizedModel, &ChannelSet, &SystemConfig) -> Result<Subproblem> = match method {
        MethodKind::Markov => build_markov_subproblem,
        MethodKind::Sdp => build_sdp_subproblem,
        other => return Err(Error::InvalidArgument(format!("dc_optimize does not run '{other}'"))),
    };
    cfg.validate()?;
    ch.check_dims(cfg)?;
    spec.validate(cfg)?;
    if cfg.p1 == 0.0 && cfg.p2 == 0.0 {
        return Ok(OptimizeResult::zero(cfg));
    }
    let state = dc_loop(cfg, settings, &|anchor| builder(&build_anchors(ch, anchor, spec, cfg)?, ch, cfg))?;
    let exact = sum_secrecy_rate(ch, &state.best_q, cfg, false)?;
    Ok(finish(state, exact))
}

/// Baseline that knows the actual eavesdropper channels.
pub fn perfect_csi_optimize(ch: &ChannelSet, cfg: &SystemConfig, settings: &DcSettings) -> Result<OptimizeResult> {
    cfg.validate()?;
    ch.check_dims(cfg)?;
    let known = ch.perfectly_known()?;
    if cfg.p1 == 0.0 && cfg.p2 == 0.0 {
        return Ok(OptimizeResult::zero(cfg));
    }
    let none = UncertaintySpec::isotropic(cfg, 0.0);
    let state =
        dc_loop(cfg, settings, &|anchor| build_perfect_subproblem(&build_anchors(&known, anchor, &none, cfg)?, &known, cfg))?;
    let exact = sum_secrecy_rate(ch, &state.best_q, cfg, true)?;
    Ok(finish(state, exact))
}

/// Configuration of half-duplex slot `k` (0 or 1): only node `k + 1`
/// transmits, so no self-interference arises.
pub fn hd_slot_config(cfg: &SystemConfig, slot: usize) -> SystemConfig {
    let mut c = cfg.clone();
    c.xi1 = 0.0;
    c.xi2 = 0.0;
    if slot == 0 {
        c.p2 = 0.0;
    } else {
        c.p1 = 0.0;
    }
    c
}

/// Half-duplex time sharing: two half-length slots, one transmitter each.
pub fn hd_optimize(
    ch: &ChannelSet,
    spec: &UncertaintySpec,
    cfg: &SystemConfig,
    method: MethodKind,
    settings: &DcSettings,
) -> Result<OptimizeResult> {
    let per_slot = method
        .per_slot()
        .ok_or_else(|| Error::InvalidArgument(format!("hd_optimize does not run '{method}'")))?;
    let slots = [0, 1]
        .map(|k| dc_optimize(ch, spec, &hd_slot_config(cfg, k), per_slot, settings));
    let [a, b] = slots;
    let (a, b) = (a?, b?);
    let len = a.per_iteration_rates.len().max(b.per_iteration_rates.len());
    let at = |r: &[f64], i: usize| r[i.min(r.len() - 1)].max(0.0);
    let per_iteration_rates =
        (0..len).map(|i| 0.5 * (at(&a.per_iteration_rates, i) + at(&b.per_iteration_rates, i))).collect();
    Ok(OptimizeResult {
        q: TransmitCovariances { q1: a.q.q1, q2: b.q.q2 },
        secrecy_rate_surrogate: 0.5 * (a.secrecy_rate_surrogate + b.secrecy_rate_surrogate),
        secrecy_rate_exact_at_estimate: 0.5 * (a.secrecy_rate_exact_at_estimate + b.secrecy_rate_exact_at_estimate),
        iterations: a.iterations.max(b.iterations),
        per_iteration_rates,
        status: worse(a.status, b.status),
        state: None,
    })
}

/// Runs any method. Perfect CSI reads the actual channels from `ch`.
pub fn optimize(
    ch: &ChannelSet,
    spec: &UncertaintySpec,
    cfg: &SystemConfig,
    method: MethodKind,
    settings: &DcSettings,
) -> Result<OptimizeResult> {
    match method {
        MethodKind::Markov | MethodKind::Sdp => dc_optimize(ch, spec, cfg, method, settings),
        MethodKind::PerfectCsi => perfect_csi_optimize(ch, cfg, settings),
        MethodKind::HdMarkov | MethodKind::HdSdp => hd_optimize(ch, spec, cfg, method, settings),
    }
}

/// `f(Q) - t` for a subproblem point, recomputed from the model.
pub fn guaranteed_rate(
    sub: &Subproblem,
    point: &Point,
    model: &LinearizedModel,
    ch: &ChannelSet,
    cfg: &SystemConfig,
) -> Result<f64> {
    Ok(surrogate_f(&sub.covariances(point, cfg), model, ch, cfg)? - sub.t(point))
}
