//! End-to-end checks through the public API on a small system.

use secrecy_core::channel::{
    sample_channels, sample_error, sum_secrecy_rate, ErrorKind, ErrorSampler, SystemConfig, TransmitCovariances,
    UncertaintySpec,
};
use secrecy_core::dc::build_anchors;
use secrecy_core::linalg::{c64, Complex64, ComplexMatrix, ComplexVector, HermitianMatrix};
use secrecy_core::optimizer::{
    build_markov_subproblem, build_sdp_subproblem, lemma2_witness, optimize, witness_point, DcSettings, MethodKind,
};
use secrecy_core::rng::substream;
use secrecy_core::solver::{check_feasible, solve, SolveStatus};
use secrecy_core::validation::mc_outage;

fn small() -> SystemConfig {
    SystemConfig { n_t1: 3, n_t2: 3, ..SystemConfig::default() }
}

fn draw(cfg: &SystemConfig, spec: &UncertaintySpec, trial: u64) -> secrecy_core::channel::ChannelSet {
    let mut rng = substream(7, trial);
    let ch = sample_channels(cfg, &mut rng);
    let (e1, e2) = sample_error(spec, cfg.n_e, ErrorKind::Gaussian, &mut rng).unwrap();
    ch.with_true_error(&e1, &e2)
}

#[test]
fn robust_designs_respect_budgets_and_outage_target() {
    let cfg = small();
    let spec = UncertaintySpec::isotropic(&cfg, 0.005);
    let settings = DcSettings::default();
    for trial in 0..2 {
        let ch = draw(&cfg, &spec, trial);
        for method in [MethodKind::Markov, MethodKind::Sdp] {
            let r = optimize(&ch, &spec, &cfg, method, &settings).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!(r.q.is_feasible(&cfg));
            assert!(r.secrecy_rate_surrogate >= 0.0);
            // The certified rate never exceeds the rate at the nominal channel.
            assert!(r.secrecy_rate_surrogate <= r.secrecy_rate_exact_at_estimate + 1e-6);
            assert!(r.per_iteration_rates.windows(2).all(|w| w[1] >= w[0] - 1e-9));
            let est = mc_outage(&r.q, r.secrecy_rate_surrogate, &ch, &spec, &cfg, ErrorKind::Gaussian, 4000, trial)
                .unwrap();
            assert!(est.complies(cfg.rho), "{method:?} trial {trial}: outage {}", est.p_outage);
        }
    }
}

#[test]
fn sdp_certifies_at_least_the_markov_rate_from_the_same_anchor() {
    let cfg = small();
    let spec = UncertaintySpec::isotropic(&cfg, 0.01);
    let solver = DcSettings::default().solver;
    let ch = draw(&cfg, &spec, 3);
    let model = build_anchors(&ch, &TransmitCovariances::half_budget_isotropic(&cfg), &spec, &cfg).unwrap();
    let markov = build_markov_subproblem(&model, &ch, &cfg).unwrap();
    let sdp = build_sdp_subproblem(&model, &ch, &cfg).unwrap();
    let ms = solve(&markov.program, &solver, Some(&markov.start)).unwrap();
    let ss = solve(&sdp.program, &solver, Some(&sdp.start)).unwrap();
    assert_eq!((ms.status, ss.status), (SolveStatus::Optimal, SolveStatus::Optimal));

    let (m, mu) = lemma2_witness(&markov, &ms.point, &model, &cfg).unwrap();
    let w = witness_point(&sdp, &markov.covariances(&ms.point, &cfg), markov.t(&ms.point), m, mu);
    assert!(check_feasible(&sdp.program, &w, 1e-8));
    assert!(ss.objective + sdp.rate_offset >= ms.objective + markov.rate_offset - 1e-5);
}

#[test]
fn perfect_csi_bounds_robust_rates_at_the_true_channel() {
    let cfg = small();
    let spec = UncertaintySpec::isotropic(&cfg, 0.005);
    let settings = DcSettings::default();
    let ch = draw(&cfg, &spec, 5);
    let perfect = optimize(&ch, &spec, &cfg, MethodKind::PerfectCsi, &settings).unwrap();
    let exact = sum_secrecy_rate(&ch, &perfect.q, &cfg, true).unwrap();
    assert!((exact - perfect.secrecy_rate_exact_at_estimate).abs() < 1e-9);
    let sdp = optimize(&ch, &spec, &cfg, MethodKind::Sdp, &settings).unwrap();
    assert!(sdp.secrecy_rate_surrogate <= perfect.secrecy_rate_surrogate + 1e-3);
}

#[test]
fn half_duplex_slots_each_use_one_transmitter() {
    let cfg = small();
    let spec = UncertaintySpec::isotropic(&cfg, 0.005);
    let ch = draw(&cfg, &spec, 1);
    let r = optimize(&ch, &spec, &cfg, MethodKind::HdMarkov, &DcSettings::default()).unwrap();
    assert!(r.state.is_none());
    assert!(r.q.q1.trace() <= cfg.p1 + 1e-6 && r.q.q2.trace() <= cfg.p2 + 1e-6);
    assert!(r.secrecy_rate_surrogate >= 0.0);
}

#[test]
fn zero_power_gives_zero_rate() {
    let cfg = small().with_power(0.0, 0.0);
    let spec = UncertaintySpec::isotropic(&cfg, 0.005);
    let ch = draw(&cfg, &spec, 0);
    let r = optimize(&ch, &spec, &cfg, MethodKind::Sdp, &DcSettings::default()).unwrap();
    assert_eq!(r.secrecy_rate_surrogate, 0.0);
    assert_eq!(r.q.q1.trace() + r.q.q2.trace(), 0.0);
}

#[test]
fn same_substream_gives_identical_designs() {
    let cfg = small();
    let spec = UncertaintySpec::isotropic(&cfg, 0.005);
    let run = || optimize(&draw(&cfg, &spec, 2), &spec, &cfg, MethodKind::Markov, &DcSettings::default()).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.q, b.q);
    assert_eq!(a.per_iteration_rates, b.per_iteration_rates);
}

#[test]
fn error_draws_match_requested_moments() {
    let cfg = SystemConfig { n_t1: 1, n_t2: 1, n_e: 2, ..SystemConfig::default() };
    let mut spec = UncertaintySpec::isotropic(&cfg, 0.0);
    spec.phi1[0] = c64(0.3, -0.1);
    spec.omega1 = HermitianMatrix::new(ComplexMatrix::from_row_slice(
        2,
        2,
        &[c64(0.02, 0.0), c64(0.005, 0.004), c64(0.005, -0.004), c64(0.01, 0.0)],
    ))
    .unwrap();
    let sampler = ErrorSampler::new(&spec, cfg.n_e).unwrap();
    let n = 40_000;
    for kind in ErrorKind::ALL {
        let mut rng = substream(11, kind as u64);
        let draws: Vec<_> = (0..n).map(|_| sampler.sample_vecs(kind, &mut rng).0).collect();
        let mean = draws.iter().fold(ComplexVector::zeros(2), |acc, d| acc + d) / c64(n as f64, 0.0);
        assert!((&mean - &spec.phi1).iter().all(|z| z.norm() < 3e-3), "{kind:?} mean {mean}");
        for i in 0..2 {
            for j in 0..2 {
                let cov = draws.iter().map(|d| (d[i] - mean[i]) * (d[j] - mean[j]).conj()).sum::<Complex64>() / n as f64;
                let want = spec.omega1.as_matrix()[(i, j)];
                assert!((cov - want).norm() < 1.5e-3, "{kind:?} cov[{i},{j}] {cov} vs {want}");
            }
        }
    }
}
