//! First-order surrogate of the sum secrecy rate around an anchor
//! covariance pair, and the quadratic-form data of the eavesdropper term.
//!
//! The self-interference log-dets and the eavesdropper log-det are
//! linearized at the anchor; the two legitimate log-dets stay exact. All
//! quantities are in bits, so every trace correction carries `1 / ln 2`.
//! The eavesdropper leakage is written as `h^H B h` with
//! `B = A_e^T (x) Q` and `h = vec(H_e)`.

use crate::channel::{si_plus_noise, ChannelSet, SystemConfig, TransmitCovariances, UncertaintySpec};
use crate::error::Result;
use crate::linalg::{
    block_diag, c64, hermitize, inverse_hpd, kron, logdet_bits, ComplexMatrix, ComplexVector, HermitianMatrix,
    LN2,
};

/// Anchor `(Q~_1, Q~_2)` of the linearization.
pub type LinearizationPoint = TransmitCovariances;

/// Everything the convex subproblems need from one anchor.
#[derive(Debug, Clone)]
pub struct LinearizedModel {
    pub anchor: LinearizationPoint,
    /// `(sigma_1^2 I + xi_1 H11^H Q~_1 H11)^{-1}`
    pub a1: HermitianMatrix,
    pub a2: HermitianMatrix,
    /// Eavesdropper whitening at the anchor, including the `1 / sigma_e^2` factor.
    pub a_e: HermitianMatrix,
    /// Eavesdropper log-det at the anchor (bits).
    pub alpha: f64,
    /// Trace linearization constant (bits).
    pub beta: f64,
    pub h_bar1: ComplexVector,
    pub h_bar2: ComplexVector,
    /// `E[h_i h_i^H]`
    pub gamma1: HermitianMatrix,
    pub gamma2: HermitianMatrix,
    /// Joint second moment of `[h_1; h_2; 1]`.
    pub pi: HermitianMatrix,
    /// `(xi_i / ln 2) H_ii A_i H_ii^H`: `f` decreases by `Re Tr(si_grad_i Q_i)`.
    pub si_grad1: HermitianMatrix,
    pub si_grad2: HermitianMatrix,
    /// Anchor-only terms of `f`.
    pub f_constant: f64,
}

/// `A_e`, `alpha` and `beta` for eavesdropper channels `(h1, h2)` at `anchor`.
pub fn eve_linearization(
    h1: &ComplexMatrix,
    h2: &ComplexMatrix,
    anchor: &TransmitCovariances,
    sigma_e_sq: f64,
) -> Result<(HermitianMatrix, f64, f64)> {
    let n_e = h1.ncols();
    let received = anchor.q1.congruence(h1).add(&anchor.q2.congruence(h2));
    let whitened = HermitianMatrix::identity(n_e).add(&received.scale(1.0 / sigma_e_sq));
    let alpha = logdet_bits(&whitened)?;
    let a_e = inverse_hpd(&whitened)?.scale(1.0 / sigma_e_sq);
    let beta = a_e.inner(&received) / LN2;
    Ok((a_e, alpha, beta))
}

/// `(1 / ln 2) H A_e H^H`, the coefficient of `Q` in the linearized leakage
/// `(1 / ln 2) Tr(A_e H^H Q H)`.
pub fn eve_gradient(h: &ComplexMatrix, a_e: &HermitianMatrix) -> HermitianMatrix {
    hermitize(&(h * a_e.as_matrix() * h.adjoint())).expect("square").scale(1.0 / LN2)
}

pub fn build_anchors(
    ch: &ChannelSet,
    anchor: &LinearizationPoint,
    spec: &UncertaintySpec,
    cfg: &SystemConfig,
) -> Result<LinearizedModel> {
    let noise1 = si_plus_noise(cfg.sigma1_sq, cfg.xi1, &ch.h11, &anchor.q1);
    let noise2 = si_plus_noise(cfg.sigma2_sq, cfg.xi2, &ch.h22, &anchor.q2);
    let a1 = inverse_hpd(&noise1)?;
    let a2 = inverse_hpd(&noise2)?;
    let (a_e, alpha, beta) = eve_linearization(&ch.he1_bar, &ch.he2_bar, anchor, cfg.sigma_e_sq)?;
    let (h_bar1, h_bar2) = ch.h_bar_vecs();
    let (gamma1, gamma2) = second_moments(spec, &h_bar1, &h_bar2);
    let pi = pi_matrix(spec, &h_bar1, &h_bar2);

    let si_grad1 = hermitize(&(&ch.h11 * a1.as_matrix() * ch.h11.adjoint()))?.scale(cfg.xi1 / LN2);
    let si_grad2 = hermitize(&(&ch.h22 * a2.as_matrix() * ch.h22.adjoint()))?.scale(cfg.xi2 / LN2);
    let f_constant = -logdet_bits(&noise1)? - logdet_bits(&noise2)?
        + si_grad1.inner(&anchor.q1)
        + si_grad2.inner(&anchor.q2);

    Ok(LinearizedModel {
        anchor: anchor.clone(),
        a1,
        a2,
        a_e,
        alpha,
        beta,
        h_bar1,
        h_bar2,
        gamma1,
        gamma2,
        pi,
        si_grad1,
        si_grad2,
        f_constant,
    })
}

/// `sigma_1^2 I + xi_1 H11^H Q_1 H11 + H21^H Q_2 H21` (signal plus
/// interference plus noise at node 1) and its node-2 mirror.
pub fn received_covariances(
    ch: &ChannelSet,
    q: &TransmitCovariances,
    cfg: &SystemConfig,
) -> (HermitianMatrix, HermitianMatrix) {
    let r1 = si_plus_noise(cfg.sigma1_sq, cfg.xi1, &ch.h11, &q.q1).add(&q.q2.congruence(&ch.h21));
    let r2 = si_plus_noise(cfg.sigma2_sq, cfg.xi2, &ch.h22, &q.q2).add(&q.q1.congruence(&ch.h12));
    (r1, r2)
}

/// Concave surrogate `f(Q_1, Q_2)` of `R_1 + R_2` (bits). Equal to
/// `R_1 + R_2` at the anchor and a global lower bound elsewhere.
pub fn surrogate_f(
    q: &TransmitCovariances,
    model: &LinearizedModel,
    ch: &ChannelSet,
    cfg: &SystemConfig,
) -> Result<f64> {
    let (r1, r2) = received_covariances(ch, q, cfg);
    Ok(logdet_bits(&r1)? + logdet_bits(&r2)? + model.f_constant
        - model.si_grad1.inner(&q.q1)
        - model.si_grad2.inner(&q.q2))
}

/// Linearized eavesdropper leakage `(1 / ln 2) Tr(A_e H^H Q H)` summed over
/// both nodes, for explicit channels.
pub fn linearized_leakage(
    q: &TransmitCovariances,
    a_e: &HermitianMatrix,
    h1: &ComplexMatrix,
    h2: &ComplexMatrix,
) -> f64 {
    eve_gradient(h1, a_e).inner(&q.q1) + eve_gradient(h2, a_e).inner(&q.q2)
}

/// `B_i = A_e^T (x) Q_i`
pub fn lift_b(q: &TransmitCovariances, a_e: &HermitianMatrix) -> (HermitianMatrix, HermitianMatrix) {
    (lift_one(&q.q1, a_e), lift_one(&q.q2, a_e))
}

pub fn lift_one(q: &HermitianMatrix, a_e: &HermitianMatrix) -> HermitianMatrix {
    hermitize(&kron(&a_e.as_matrix().transpose(), q.as_matrix())).expect("square")
}

/// Adjoint of `Q -> A_e^T (x) Q` against `gamma`: the Hermitian `K` with
/// `Tr((A_e^T (x) Q) Gamma) = Re Tr(Q K)` for every Hermitian `Q`.
/// `K = sum_{a,b} A_e[a,b] Gamma_{(a,b)}` over the `nT x nT` blocks of `Gamma`.
pub fn lift_b_adjoint(a_e: &HermitianMatrix, gamma: &HermitianMatrix, n_t: usize) -> HermitianMatrix {
    let n_e = a_e.dim();
    let g = gamma.as_matrix();
    let mut k = ComplexMatrix::zeros(n_t, n_t);
    for a in 0..n_e {
        for b in 0..n_e {
            let w = a_e.as_matrix()[(a, b)];
            k += g.view((a * n_t, b * n_t), (n_t, n_t)) * w;
        }
    }
    hermitize(&k).expect("square")
}

/// `Gamma_i = Omega_i + (h_bar_i + phi_i)(h_bar_i + phi_i)^H`
pub fn second_moments(
    spec: &UncertaintySpec,
    h_bar1: &ComplexVector,
    h_bar2: &ComplexVector,
) -> (HermitianMatrix, HermitianMatrix) {
    let m1 = h_bar1 + &spec.phi1;
    let m2 = h_bar2 + &spec.phi2;
    (spec.omega1.add(&HermitianMatrix::outer(&m1)), spec.omega2.add(&HermitianMatrix::outer(&m2)))
}

/// `blockdiag(Omega_1, Omega_2, 0) + v v^H` with `v = [h_bar_1 + phi_1; h_bar_2 + phi_2; 1]`.
pub fn pi_matrix(spec: &UncertaintySpec, h_bar1: &ComplexVector, h_bar2: &ComplexVector) -> HermitianMatrix {
    let d1 = h_bar1.len();
    let d2 = h_bar2.len();
    let mut v = ComplexVector::zeros(d1 + d2 + 1);
    v.rows_mut(0, d1).copy_from(&(h_bar1 + &spec.phi1));
    v.rows_mut(d1, d2).copy_from(&(h_bar2 + &spec.phi2));
    v[d1 + d2] = c64(1.0, 0.0);
    let zero = ComplexMatrix::zeros(1, 1);
    let base = block_diag(&[spec.omega1.as_matrix(), spec.omega2.as_matrix(), &zero]);
    hermitize(&(base + &v * v.adjoint())).expect("square")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gaussian_matrix, rate_eve, rate_u1, rate_u2, sample_channels, sum_secrecy_rate, ErrorKind, ErrorSampler};
    use crate::linalg::{is_psd, max_abs, vec};
    use crate::rng::stream;
    use rand::Rng;

    fn random_psd(rng: &mut impl Rng, n: usize, trace: f64) -> HermitianMatrix {
        let g = gaussian_matrix(rng, n, n);
        let m = hermitize(&(&g * g.adjoint())).unwrap();
        let t = m.trace();
        m.scale(trace / t)
    }

    fn random_q(rng: &mut impl Rng, cfg: &SystemConfig) -> TransmitCovariances {
        let s1 = rng.gen_range(0.1..1.0) * cfg.p1;
        let s2 = rng.gen_range(0.1..1.0) * cfg.p2;
        TransmitCovariances { q1: random_psd(rng, cfg.n_t1, s1), q2: random_psd(rng, cfg.n_t2, s2) }
    }

    fn random_hermitian(rng: &mut impl Rng, n: usize) -> HermitianMatrix {
        hermitize(&gaussian_matrix(rng, n, n)).unwrap()
    }

    #[test]
    fn zero_anchor_model() {
        let cfg = SystemConfig { sigma1_sq: 2.0, sigma_e_sq: 4.0, ..SystemConfig::default() };
        let ch = sample_channels(&cfg, &mut stream(1));
        let spec = UncertaintySpec::isotropic(&cfg, 0.005);
        let m = build_anchors(&ch, &TransmitCovariances::zeros(&cfg), &spec, &cfg).unwrap();
        assert!(max_abs(&(m.a1.as_matrix() - HermitianMatrix::scaled_identity(2, 0.5).as_matrix())) < 1e-15);
        assert!(max_abs(&(m.a_e.as_matrix() - HermitianMatrix::scaled_identity(2, 0.25).as_matrix())) < 1e-15);
        assert_eq!(m.alpha, 0.0);
        assert_eq!(m.beta, 0.0);
    }

    #[test]
    fn scalar_anchor_arithmetic() {
        let one = ComplexMatrix::from_element(1, 1, c64(1.0, 0.0));
        let cfg = SystemConfig { n_t1: 1, n_t2: 1, n_r1: 1, n_r2: 1, n_e: 1, xi1: 0.01, ..SystemConfig::default() };
        let ch = ChannelSet {
            h12: one.clone(),
            h21: one.clone(),
            h11: one.clone(),
            h22: one.clone(),
            he1_bar: one.clone(),
            he2_bar: one.clone(),
            he1_true: None,
            he2_true: None,
        };
        let anchor = TransmitCovariances {
            q1: HermitianMatrix::scaled_identity(1, 100.0),
            q2: HermitianMatrix::zeros(1),
        };
        let spec = UncertaintySpec::isotropic(&cfg, 0.0);
        let m = build_anchors(&ch, &anchor, &spec, &cfg).unwrap();
        assert!((m.a1.as_matrix()[(0, 0)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn alpha_equals_eve_rate_at_anchor() {
        let cfg = SystemConfig::default();
        let mut rng = stream(2);
        for _ in 0..5 {
            let ch = sample_channels(&cfg, &mut rng);
            let anchor = random_q(&mut rng, &cfg);
            let spec = UncertaintySpec::isotropic(&cfg, 0.005);
            let m = build_anchors(&ch, &anchor, &spec, &cfg).unwrap();
            let re = rate_eve(&ch.he1_bar, &ch.he2_bar, &anchor, cfg.sigma_e_sq).unwrap();
            assert!((m.alpha - re).abs() < 1e-12);
        }
    }

    #[test]
    fn surrogate_is_exact_at_anchor() {
        let cfg = SystemConfig::default();
        let mut rng = stream(3);
        for _ in 0..5 {
            let ch = sample_channels(&cfg, &mut rng);
            let anchor = random_q(&mut rng, &cfg);
            let spec = UncertaintySpec::isotropic(&cfg, 0.005);
            let m = build_anchors(&ch, &anchor, &spec, &cfg).unwrap();
            let f = surrogate_f(&anchor, &m, &ch, &cfg).unwrap();
            let legit = rate_u1(&ch, &anchor, &cfg).unwrap() + rate_u2(&ch, &anchor, &cfg).unwrap();
            assert!((f - legit).abs() < 1e-10);

            // f - alpha + beta - gamma reproduces the exact secrecy rate when errors vanish.
            let gamma = linearized_leakage(&anchor, &m.a_e, &ch.he1_bar, &ch.he2_bar);
            let r_tilde = f - m.alpha + m.beta - gamma;
            let exact = legit - rate_eve(&ch.he1_bar, &ch.he2_bar, &anchor, 1.0).unwrap();
            assert!((r_tilde - exact).abs() < 1e-9);
            if exact > 0.0 {
                assert!((r_tilde - sum_secrecy_rate(&ch, &anchor, &cfg, false).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn surrogate_without_self_interference_is_exact_everywhere() {
        let cfg = SystemConfig { xi1: 0.0, xi2: 0.0, ..SystemConfig::default() };
        let mut rng = stream(4);
        let ch = sample_channels(&cfg, &mut rng);
        let anchor = random_q(&mut rng, &cfg);
        let m = build_anchors(&ch, &anchor, &UncertaintySpec::isotropic(&cfg, 0.005), &cfg).unwrap();
        for _ in 0..5 {
            let q = random_q(&mut rng, &cfg);
            let legit = rate_u1(&ch, &q, &cfg).unwrap() + rate_u2(&ch, &q, &cfg).unwrap();
            assert!((surrogate_f(&q, &m, &ch, &cfg).unwrap() - legit).abs() < 1e-10);
        }
    }

    #[test]
    fn surrogate_is_lower_bound_and_concave() {
        let cfg = SystemConfig { xi1: 0.3, xi2: 0.2, ..SystemConfig::default() };
        let mut rng = stream(5);
        let ch = sample_channels(&cfg, &mut rng);
        let anchor = random_q(&mut rng, &cfg);
        let m = build_anchors(&ch, &anchor, &UncertaintySpec::isotropic(&cfg, 0.005), &cfg).unwrap();
        for _ in 0..20 {
            let qa = random_q(&mut rng, &cfg);
            let qb = random_q(&mut rng, &cfg);
            let legit = rate_u1(&ch, &qa, &cfg).unwrap() + rate_u2(&ch, &qa, &cfg).unwrap();
            let fa = surrogate_f(&qa, &m, &ch, &cfg).unwrap();
            assert!(fa <= legit + 1e-10);
            let lam: f64 = rng.gen();
            let mix = TransmitCovariances {
                q1: qa.q1.scale(lam).add(&qb.q1.scale(1.0 - lam)),
                q2: qa.q2.scale(lam).add(&qb.q2.scale(1.0 - lam)),
            };
            let fb = surrogate_f(&qb, &m, &ch, &cfg).unwrap();
            let fm = surrogate_f(&mix, &m, &ch, &cfg).unwrap();
            assert!(fm >= lam * fa + (1.0 - lam) * fb - 1e-9);
        }
    }

    /// Central differences of `log2 |sigma^2 I + xi H^H Q H|` at the anchor
    /// against the linearized trace coefficient.
    #[test]
    fn si_gradient_matches_finite_differences() {
        let cfg = SystemConfig { xi1: 0.05, xi2: 0.02, ..SystemConfig::default() };
        let mut rng = stream(6);
        let step = 1e-6;
        for _ in 0..10 {
            let ch = sample_channels(&cfg, &mut rng);
            let anchor = random_q(&mut rng, &cfg);
            let m = build_anchors(&ch, &anchor, &UncertaintySpec::isotropic(&cfg, 0.005), &cfg).unwrap();
            let dir = random_hermitian(&mut rng, cfg.n_t1);
            let si = |q: &HermitianMatrix| logdet_bits(&si_plus_noise(cfg.sigma1_sq, cfg.xi1, &ch.h11, q)).unwrap();
            let fd = (si(&anchor.q1.add(&dir.scale(step))) - si(&anchor.q1.sub(&dir.scale(step)))) / (2.0 * step);
            let analytic = m.si_grad1.inner(&dir);
            assert!((fd - analytic).abs() <= 1e-5 * analytic.abs().max(1e-3), "{fd} vs {analytic}");
        }
    }

    #[test]
    fn lift_examples() {
        let q = TransmitCovariances {
            q1: HermitianMatrix::zeros(2),
            q2: HermitianMatrix::from_real_diagonal(&[1.0, 2.0]),
        };
        let (b1, b2) = lift_b(&q, &HermitianMatrix::identity(2));
        assert_eq!(b1.max_abs(), 0.0);
        assert_eq!(b2, HermitianMatrix::from_real_diagonal(&[1.0, 2.0, 1.0, 2.0]));
    }

    #[test]
    fn lift_quadratic_form_matches_trace() {
        let cfg = SystemConfig::default();
        let mut rng = stream(7);
        for _ in 0..10 {
            let ch = sample_channels(&cfg, &mut rng);
            let q = random_q(&mut rng, &cfg);
            let (a_e, _, _) = eve_linearization(&ch.he1_bar, &ch.he2_bar, &random_q(&mut rng, &cfg), 1.0).unwrap();
            let (b1, _) = lift_b(&q, &a_e);
            let h = vec(&ch.he1_bar);
            let quad = (h.adjoint() * b1.as_matrix() * &h)[(0, 0)];
            let tr = (a_e.as_matrix() * ch.he1_bar.adjoint() * q.q1.as_matrix() * &ch.he1_bar).trace();
            assert!((quad - tr).norm() < 1e-10);
            assert!(is_psd(&b1));
        }
    }

    #[test]
    fn lift_is_linear_and_adjoint_matches() {
        let cfg = SystemConfig::default();
        let mut rng = stream(8);
        let ch = sample_channels(&cfg, &mut rng);
        let (a_e, _, _) = eve_linearization(&ch.he1_bar, &ch.he2_bar, &random_q(&mut rng, &cfg), 1.0).unwrap();
        let spec = UncertaintySpec::isotropic(&cfg, 0.01);
        let (g1, _) = second_moments(&spec, &vec(&ch.he1_bar), &vec(&ch.he2_bar));
        for _ in 0..5 {
            let x = random_hermitian(&mut rng, 5);
            let y = random_hermitian(&mut rng, 5);
            let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let lhs = lift_one(&x.scale(a).add(&y.scale(b)), &a_e);
            let rhs = lift_one(&x, &a_e).scale(a).add(&lift_one(&y, &a_e).scale(b));
            assert!(lhs.sub(&rhs).max_abs() < 1e-12);

            let k = lift_b_adjoint(&a_e, &g1, 5);
            assert!((lift_one(&x, &a_e).inner(&g1) - x.inner(&k)).abs() < 1e-10);
        }
    }

    #[test]
    fn second_moment_examples() {
        let cfg = SystemConfig::default();
        let mut rng = stream(9);
        let ch = sample_channels(&cfg, &mut rng);
        let (h1, h2) = ch.h_bar_vecs();
        let spec = UncertaintySpec::isotropic(&cfg, 0.005);
        let (g1, g2) = second_moments(&spec, &h1, &h2);
        let want = HermitianMatrix::scaled_identity(10, 0.005).add(&HermitianMatrix::outer(&h1));
        assert!(g1.sub(&want).max_abs() < 1e-15);
        assert!(is_psd(&g2));

        let zero = ComplexVector::zeros(10);
        let (g0, _) = second_moments(&spec, &zero, &zero);
        assert_eq!(g0, spec.omega1);
    }

    #[test]
    fn second_moment_matches_monte_carlo() {
        let cfg = SystemConfig::default();
        let mut rng = stream(10);
        let ch = sample_channels(&cfg, &mut rng);
        let (h1, h2) = ch.h_bar_vecs();
        let g = gaussian_matrix(&mut rng, 10, 10);
        let omega = hermitize(&(&g * g.adjoint() * c64(0.02, 0.0))).unwrap();
        let phi = ErrorKind::Gaussian.standardized(&mut rng, 10) * c64(0.2, 0.0);
        let spec = UncertaintySpec { phi1: phi.clone(), phi2: phi, omega1: omega.clone(), omega2: omega };
        let (g1, _) = second_moments(&spec, &h1, &h2);
        let sampler = ErrorSampler::new(&spec, cfg.n_e).unwrap();
        let n = 100_000;
        let mut acc = ComplexMatrix::zeros(10, 10);
        for _ in 0..n {
            let (e1, _) = sampler.sample_vecs(ErrorKind::Gaussian, &mut rng);
            let h = &h1 + e1;
            acc += &h * h.adjoint();
        }
        acc /= c64(n as f64, 0.0);
        let rel = max_abs(&(acc - g1.as_matrix())) / g1.max_abs();
        assert!(rel < 0.05, "relative error {rel}");
    }

    #[test]
    fn pi_examples() {
        let cfg = SystemConfig::default();
        let spec = UncertaintySpec::isotropic(&cfg, 0.0);
        let zero = ComplexVector::zeros(10);
        let pi = pi_matrix(&spec, &zero, &zero);
        assert_eq!(pi.dim(), 21);
        let mut corner = ComplexMatrix::zeros(21, 21);
        corner[(20, 20)] = c64(1.0, 0.0);
        assert_eq!(pi.as_matrix(), &corner);
    }

    #[test]
    fn pi_trace_matches_block_moments() {
        let cfg = SystemConfig::default();
        let mut rng = stream(11);
        for _ in 0..5 {
            let ch = sample_channels(&cfg, &mut rng);
            let (h1, h2) = ch.h_bar_vecs();
            let spec = UncertaintySpec::isotropic(&cfg, rng.gen_range(0.001..0.05));
            let pi = pi_matrix(&spec, &h1, &h2);
            assert!(is_psd(&pi));
            assert_eq!(pi.as_matrix()[(20, 20)], c64(1.0, 0.0));
            let (g1, g2) = second_moments(&spec, &h1, &h2);
            let q = random_q(&mut rng, &cfg);
            let (a_e, _, _) = eve_linearization(&ch.he1_bar, &ch.he2_bar, &q, 1.0).unwrap();
            let (b1, b2) = lift_b(&q, &a_e);
            let zero = ComplexMatrix::zeros(1, 1);
            let big = hermitize(&block_diag(&[b1.as_matrix(), b2.as_matrix(), &zero])).unwrap();
            let lhs = pi.inner(&big);
            let rhs = b1.inner(&g1) + b2.inner(&g2);
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
