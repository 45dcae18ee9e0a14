//! Independent checks of the optimizer output: Monte Carlo outage
//! estimates, the Markov bound on quadratic forms, sample CVaR, the
//! worst-case expectation bound behind the SDP program, and the
//! trace/Kronecker identity used to write the leakage as a quadratic form.
//!
//! Sampling is split into fixed-size chunks, each drawing from its own
//! substream, so results depend only on the seed.

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{
    gaussian_matrix, legit_sum_rate, rate_eve, ChannelSet, ErrorKind, ErrorSampler, SystemConfig,
    TransmitCovariances, UncertaintySpec,
};
use crate::dc::pi_matrix;
use crate::error::{Error, Result};
use crate::linalg::{c64, kron, vec, ComplexMatrix, ComplexVector, HermitianMatrix};
use crate::rng::{substream, StreamRng};

/// Samples per substream.
const CHUNK: usize = 512;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Runs `f` over chunks of `n` samples in parallel; results come back in
/// chunk order.
fn chunked<T: Send>(n: usize, seed: u64, f: impl Fn(&mut StreamRng, usize) -> T + Sync) -> Vec<T> {
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(n - c * CHUNK);
            f(&mut substream(seed, c as u64), len)
        })
        .collect()
}

/// Half-width of the 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_half_width(k: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z95 * Z95;
    Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageEstimate {
    pub p_outage: f64,
    pub n_samples: usize,
    pub wilson_half_width: f64,
}

impl OutageEstimate {
    pub fn from_counts(outages: usize, n: usize) -> Self {
        let p_outage = if n == 0 { 0.0 } else { outages as f64 / n as f64 };
        Self { p_outage, n_samples: n, wilson_half_width: wilson_half_width(outages, n) }
    }

    /// `p_outage <= rho + half-width`.
    pub fn complies(&self, rho: f64) -> bool {
        self.p_outage <= rho + self.wilson_half_width
    }
}

/// Fraction of error draws for which the secrecy rate at `H_bar + E`
/// falls below `r_s`.
#[allow(clippy::too_many_arguments)]
pub fn mc_outage(
    q: &TransmitCovariances,
    r_s: f64,
    ch: &ChannelSet,
    spec: &UncertaintySpec,
    cfg: &SystemConfig,
    kind: ErrorKind,
    n_samples: usize,
    seed: u64,
) -> Result<OutageEstimate> {
    if !(r_s >= 0.0) {
        return Err(Error::InvalidArgument(format!("target rate must be nonnegative, got {r_s}")));
    }
    let sampler = ErrorSampler::new(spec, cfg.n_e)?;
    let legit = legit_sum_rate(ch, q, cfg)?;
    let counts = chunked(n_samples, seed, |rng, len| -> Result<usize> {
        let mut k = 0;
        for _ in 0..len {
            let (e1, e2) = sampler.sample(kind, rng);
            let eve = rate_eve(&(&ch.he1_bar + e1), &(&ch.he2_bar + e2), q, cfg.sigma_e_sq)?;
            if (legit - eve).max(0.0) < r_s {
                k += 1;
            }
        }
        Ok(k)
    });
    let outages = counts.into_iter().sum::<Result<usize>>()?;
    Ok(OutageEstimate::from_counts(outages, n_samples))
}

/// Empirical `Pr{h^H B h <= threshold}` next to its Markov lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovCheck {
    pub empirical: f64,
    pub bound: f64,
    pub half_width: f64,
}

impl MarkovCheck {
    /// `empirical >= bound - 3 * half_width`.
    pub fn holds(&self) -> bool {
        self.empirical >= self.bound - 3.0 * self.half_width
    }
}

fn quad(b: &HermitianMatrix, h: &ComplexVector) -> f64 {
    (h.adjoint() * b.as_matrix() * h)[(0, 0)].re
}

/// Samples `h_i = h_bar_i + e_i` and compares `Pr{h_1^H B_1 h_1 + h_2^H B_2 h_2 <= threshold}`
/// with `1 - (Tr(B_1 Gamma_1) + Tr(B_2 Gamma_2)) / threshold`.
#[allow(clippy::too_many_arguments)]
pub fn markov_bound_check(
    b1: &HermitianMatrix,
    b2: &HermitianMatrix,
    spec: &UncertaintySpec,
    h_bar1: &ComplexVector,
    h_bar2: &ComplexVector,
    threshold: f64,
    kind: ErrorKind,
    n_samples: usize,
    seed: u64,
) -> Result<MarkovCheck> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {threshold}")));
    }
    if b1.dim() != h_bar1.len() || b2.dim() != h_bar2.len() {
        return Err(Error::DimensionMismatch("quadratic form and channel sizes differ".into()));
    }
    if spec.phi1.len() != h_bar1.len() || spec.phi2.len() != h_bar2.len() {
        return Err(Error::DimensionMismatch("uncertainty and channel sizes differ".into()));
    }
    let sampler = ErrorSampler::new(spec, 1)?;
    let (g1, g2) = crate::dc::second_moments(spec, h_bar1, h_bar2);
    let bound = 1.0 - (b1.inner(&g1) + b2.inner(&g2)) / threshold;
    let hits: usize = chunked(n_samples, seed, |rng, len| {
        (0..len)
            .filter(|_| {
                let (e1, e2) = sampler.sample_vecs(kind, rng);
                quad(b1, &(h_bar1 + e1)) + quad(b2, &(h_bar2 + e2)) <= threshold
            })
            .count()
    })
    .into_iter()
    .sum();
    Ok(MarkovCheck {
        empirical: hits as f64 / n_samples.max(1) as f64,
        bound,
        half_width: wilson_half_width(hits, n_samples),
    })
}

/// A random instance for [`markov_bound_check`].
#[derive(Debug, Clone)]
pub struct MarkovCase {
    pub b1: HermitianMatrix,
    pub b2: HermitianMatrix,
    pub spec: UncertaintySpec,
    pub h_bar1: ComplexVector,
    pub h_bar2: ComplexVector,
    pub threshold: f64,
}

impl MarkovCase {
    /// Rank-deficient PSD forms of the eavesdropper dimensions of `cfg`, a
    /// random mean offset and error level, and a threshold between 1 and 20
    /// times the mean of the form.
    pub fn random(cfg: &SystemConfig, rng: &mut impl Rng) -> Self {
        let d1 = cfg.n_t1 * cfg.n_e;
        let d2 = cfg.n_t2 * cfg.n_e;
        let psd = |rng: &mut _, d: usize| {
            let g = gaussian_matrix(rng, d, (d / 2).max(1));
            crate::linalg::hermitize(&(&g * g.adjoint())).expect("square")
        };
        let b1 = psd(rng, d1);
        let b2 = psd(rng, d2);
        let eps: f64 = rng.gen_range(0.01..1.0);
        let mut spec = UncertaintySpec::isotropic(cfg, eps);
        spec.phi1 = gaussian_matrix(rng, d1, 1).column(0) * c64(0.1, 0.0);
        spec.phi2 = gaussian_matrix(rng, d2, 1).column(0) * c64(0.1, 0.0);
        let h_bar1 = gaussian_matrix(rng, d1, 1).column(0).into_owned();
        let h_bar2 = gaussian_matrix(rng, d2, 1).column(0).into_owned();
        let (g1, g2) = crate::dc::second_moments(&spec, &h_bar1, &h_bar2);
        let threshold = (b1.inner(&g1) + b2.inner(&g2)) * rng.gen_range(1.0..20.0);
        Self { b1, b2, spec, h_bar1, h_bar2, threshold }
    }

    pub fn check(&self, kind: ErrorKind, n_samples: usize, seed: u64) -> Result<MarkovCheck> {
        markov_bound_check(&self.b1, &self.b2, &self.spec, &self.h_bar1, &self.h_bar2, self.threshold, kind, n_samples, seed)
    }
}

/// Sample CVaR at level `rho`: `min_mu mu + E[(f - mu)^+] / rho` over the
/// empirical distribution, evaluated at the sample `(1 - rho)`-quantile.
pub fn cvar_sample(values: &[f64], rho: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0, 1), got {rho}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len() as f64;
    let k = ((rho * n).ceil() as usize).clamp(1, sorted.len());
    let var = sorted[k - 1];
    let excess: f64 = sorted[..k].iter().map(|v| v - var).sum();
    Ok(var + excess / (rho * n))
}

/// Outcome of [`worst_case_expectation_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseCheck {
    /// Largest `g(h) - mu - [h; 1]^H M [h; 1]` over the draws.
    pub max_violation: f64,
    /// Sample mean of `(g(h) - mu)^+`.
    pub sample_mean: f64,
    /// `Tr(Pi M)`.
    pub bound: f64,
    /// Three standard errors of the sample mean.
    pub slack: f64,
    pub majorization_holds: bool,
    pub bound_holds: bool,
}

impl WorstCaseCheck {
    pub fn passed(&self) -> bool {
        self.majorization_holds && self.bound_holds
    }
}

/// Audits an SDP certificate `(M, mu)` for
/// `g(h) = h_1^H B_1 h_1 + h_2^H B_2 h_2 + g_constant`:
/// `[h; 1]^H M [h; 1] >= g(h) - mu` on sampled `h` (within `1e-8` relative),
/// and the sample mean of `(g(h) - mu)^+` stays below `Tr(Pi M)` plus slack.
#[allow(clippy::too_many_arguments)]
pub fn worst_case_expectation_check(
    b1: &HermitianMatrix,
    b2: &HermitianMatrix,
    g_constant: f64,
    spec: &UncertaintySpec,
    h_bar1: &ComplexVector,
    h_bar2: &ComplexVector,
    mu: f64,
    m: &HermitianMatrix,
    kind: ErrorKind,
    n_samples: usize,
    seed: u64,
) -> Result<WorstCaseCheck> {
    let (d1, d2) = (h_bar1.len(), h_bar2.len());
    if b1.dim() != d1 || b2.dim() != d2 || m.dim() != d1 + d2 + 1 || spec.phi1.len() != d1 || spec.phi2.len() != d2
    {
        return Err(Error::DimensionMismatch(format!(
            "certificate must be {}x{} for blocks {d1} and {d2}",
            d1 + d2 + 1,
            d1 + d2 + 1
        )));
    }
    if n_samples == 0 {
        return Err(Error::EmptyInput);
    }
    let sampler = ErrorSampler::new(spec, 1)?;
    let bound = pi_matrix(spec, h_bar1, h_bar2).inner(m);
    let per_chunk = chunked(n_samples, seed, |rng, len| {
        let mut worst = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut lifted = ComplexVector::zeros(d1 + d2 + 1);
        lifted[d1 + d2] = c64(1.0, 0.0);
        for _ in 0..len {
            let (e1, e2) = sampler.sample_vecs(kind, rng);
            let h1 = h_bar1 + e1;
            let h2 = h_bar2 + e2;
            let g = quad(b1, &h1) + quad(b2, &h2) + g_constant;
            lifted.rows_mut(0, d1).copy_from(&h1);
            lifted.rows_mut(d1, d2).copy_from(&h2);
            let form = quad(m, &lifted);
            worst = worst.max((g - mu - form) / (1.0 + form.abs()));
            let excess = (g - mu).max(0.0);
            sum += excess;
            sum_sq += excess * excess;
        }
        (worst, sum, sum_sq)
    });
    let (mut worst, mut sum, mut sum_sq) = (f64::NEG_INFINITY, 0.0, 0.0);
    for (w, s, s2) in per_chunk {
        worst = worst.max(w);
        sum += s;
        sum_sq += s2;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let slack = 3.0 * (var / n).sqrt();
    Ok(WorstCaseCheck {
        max_violation: worst,
        sample_mean: mean,
        bound,
        slack,
        majorization_holds: worst <= 1e-8,
        bound_holds: mean <= bound + slack + 1e-12 * bound.abs(),
    })
}

/// `|Tr(ABCD) - vec(A^H)^H (D^T (x) B) vec(C)|` for conformable `A, B, C, D`.
pub fn trace_identity_error(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    c: &ComplexMatrix,
    d: &ComplexMatrix,
) -> Result<f64> {
    if a.ncols() != b.nrows() || b.ncols() != c.nrows() || c.ncols() != d.nrows() || d.ncols() != a.nrows() {
        return Err(Error::DimensionMismatch("A B C D are not conformable".into()));
    }
    let direct = (a * b * c * d).trace();
    let lifted = (vec(&a.adjoint()).adjoint() * kron(&d.transpose(), b) * vec(c))[(0, 0)];
    Ok((direct - lifted).norm())
}

/// Largest [`trace_identity_error`] over random complex quadruples with
/// dimensions between 1 and 6.
pub fn trace_identity_test(n_trials: usize, seed: u64) -> f64 {
    let mut rng = crate::rng::stream(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_trials {
        let [m, n, p, r] = [0; 4].map(|_| rng.gen_range(1..=6usize));
        let a = gaussian_matrix(&mut rng, m, n);
        let b = gaussian_matrix(&mut rng, n, p);
        let c = gaussian_matrix(&mut rng, p, r);
        let d = gaussian_matrix(&mut rng, r, m);
        worst = worst.max(trace_identity_error(&a, &b, &c, &d).expect("conformable by construction"));
    }
    worst
}
