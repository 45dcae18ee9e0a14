//! System configuration, channel draws, moment-based error sampling, and
//! the exact rate expressions of the two-way full-duplex link.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{
    c64, cholesky_lower, hermitize, logdet_bits, psd_sqrt, unvec, vec, ComplexMatrix, ComplexVector,
    HermitianMatrix,
};

/// Antenna counts, noise levels, self-interference factors, power budgets
/// (linear scale) and outage level.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n_t1: usize,
    pub n_t2: usize,
    pub n_r1: usize,
    pub n_r2: usize,
    pub n_e: usize,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub sigma_e_sq: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub p1: f64,
    pub p2: f64,
    pub rho: f64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl Default for SystemConfig {
    /// Five transmit and two receive antennas per node, a two-antenna
    /// eavesdropper, unit noise, `xi = 0.01`, `P = 5 dB`, `rho = 0.05`.
    fn default() -> Self {
        let p = db_to_linear(5.0);
        Self {
            n_t1: 5,
            n_t2: 5,
            n_r1: 2,
            n_r2: 2,
            n_e: 2,
            sigma1_sq: 1.0,
            sigma2_sq: 1.0,
            sigma_e_sq: 1.0,
            xi1: 0.01,
            xi2: 0.01,
            p1: p,
            p2: p,
            rho: 0.05,
        }
    }
}

impl SystemConfig {
    /// Checks the configuration invariants. `xi = 0` is accepted: it is the
    /// self-interference-free limit used by the half-duplex baseline.
    pub fn validate(&self) -> Result<()> {
        let counts = [self.n_t1, self.n_t2, self.n_r1, self.n_r2, self.n_e];
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidConfig("antenna counts must be at least 1".into()));
        }
        for (name, v) in [("sigma1Sq", self.sigma1_sq), ("sigma2Sq", self.sigma2_sq), ("sigmaESq", self.sigma_e_sq)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("xi1", self.xi1), ("xi2", self.xi2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        for (name, v) in [("p1", self.p1), ("p2", self.p2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        Ok(())
    }

    pub fn with_power(&self, p1: f64, p2: f64) -> Self {
        Self { p1, p2, ..self.clone() }
    }
}

/// Channel matrices, each stored transmit-antennas x receive-antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h12: ComplexMatrix,
    pub h21: ComplexMatrix,
    pub h11: ComplexMatrix,
    pub h22: ComplexMatrix,
    /// Estimated eavesdropper channels.
    pub he1_bar: ComplexMatrix,
    pub he2_bar: ComplexMatrix,
    /// Actual eavesdropper channels, when known.
    pub he1_true: Option<ComplexMatrix>,
    pub he2_true: Option<ComplexMatrix>,
}

impl ChannelSet {
    pub fn check_dims(&self, cfg: &SystemConfig) -> Result<()> {
        let want = [
            ("h12", &self.h12, cfg.n_t1, cfg.n_r2),
            ("h21", &self.h21, cfg.n_t2, cfg.n_r1),
            ("h11", &self.h11, cfg.n_t1, cfg.n_r1),
            ("h22", &self.h22, cfg.n_t2, cfg.n_r2),
            ("he1_bar", &self.he1_bar, cfg.n_t1, cfg.n_e),
            ("he2_bar", &self.he2_bar, cfg.n_t2, cfg.n_e),
        ];
        for (name, m, r, c) in want {
            if m.shape() != (r, c) {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(())
    }

    /// Sets the actual eavesdropper channels to the estimate plus `(e1, e2)`.
    pub fn with_true_error(mut self, e1: &ComplexMatrix, e2: &ComplexMatrix) -> Self {
        self.he1_true = Some(&self.he1_bar + e1);
        self.he2_true = Some(&self.he2_bar + e2);
        self
    }

    /// Copy in which the estimate is replaced by the actual channels.
    pub fn perfectly_known(&self) -> Result<Self> {
        let (t1, t2) = self.true_eve()?;
        Ok(Self { he1_bar: t1.clone(), he2_bar: t2.clone(), ..self.clone() })
    }

    pub fn true_eve(&self) -> Result<(&ComplexMatrix, &ComplexMatrix)> {
        match (&self.he1_true, &self.he2_true) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::InvalidArgument("actual eavesdropper channels are not available".into())),
        }
    }

    /// `vec` of the estimated eavesdropper channels.
    pub fn h_bar_vecs(&self) -> (ComplexVector, ComplexVector) {
        (vec(&self.he1_bar), vec(&self.he2_bar))
    }
}

/// Mean and covariance of `vec(E_1)` and `vec(E_2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySpec {
    pub phi1: ComplexVector,
    pub phi2: ComplexVector,
    pub omega1: HermitianMatrix,
    pub omega2: HermitianMatrix,
}

impl UncertaintySpec {
    /// Zero-mean errors with covariance `eps * I`.
    pub fn isotropic(cfg: &SystemConfig, eps: f64) -> Self {
        let d1 = cfg.n_t1 * cfg.n_e;
        let d2 = cfg.n_t2 * cfg.n_e;
        Self {
            phi1: ComplexVector::zeros(d1),
            phi2: ComplexVector::zeros(d2),
            omega1: HermitianMatrix::scaled_identity(d1, eps),
            omega2: HermitianMatrix::scaled_identity(d2, eps),
        }
    }

    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        let d1 = cfg.n_t1 * cfg.n_e;
        let d2 = cfg.n_t2 * cfg.n_e;
        if self.phi1.len() != d1 || self.omega1.dim() != d1 || self.phi2.len() != d2 || self.omega2.dim() != d2 {
            return Err(Error::DimensionMismatch(format!(
                "uncertainty dimensions must be {d1} and {d2}"
            )));
        }
        for om in [&self.omega1, &self.omega2] {
            let m = crate::linalg::min_eigenvalue(om);
            if !crate::linalg::is_psd(om) {
                return Err(Error::IndefiniteCovariance(m));
            }
        }
        Ok(())
    }
}

/// Transmit covariance pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitCovariances {
    pub q1: HermitianMatrix,
    pub q2: HermitianMatrix,
}

impl TransmitCovariances {
    pub fn zeros(cfg: &SystemConfig) -> Self {
        Self { q1: HermitianMatrix::zeros(cfg.n_t1), q2: HermitianMatrix::zeros(cfg.n_t2) }
    }

    /// `Q_i = P_i / (2 nT_i) I`, strictly inside the power budget.
    pub fn half_budget_isotropic(cfg: &SystemConfig) -> Self {
        Self {
            q1: HermitianMatrix::scaled_identity(cfg.n_t1, cfg.p1 / (2.0 * cfg.n_t1 as f64)),
            q2: HermitianMatrix::scaled_identity(cfg.n_t2, cfg.p2 / (2.0 * cfg.n_t2 as f64)),
        }
    }

    pub fn scale(&self, s1: f64, s2: f64) -> Self {
        Self { q1: self.q1.scale(s1), q2: self.q2.scale(s2) }
    }

    /// PSD within tolerance and `Tr(Q_i) <= P_i + 1e-8`.
    pub fn is_feasible(&self, cfg: &SystemConfig) -> bool {
        crate::linalg::is_psd(&self.q1)
            && crate::linalg::is_psd(&self.q2)
            && self.q1.trace() <= cfg.p1 + 1e-8
            && self.q2.trace() <= cfg.p2 + 1e-8
    }
}

/// Shape of the standardized draws behind [`sample_error`]. All kinds have
/// zero mean and identity covariance before the affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Gaussian,
    /// Real and imaginary parts uniform on `[-sqrt(3/2), sqrt(3/2)]`.
    UniformScaled,
    /// Independent random signs.
    TwoPoint,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 3] = [ErrorKind::Gaussian, ErrorKind::UniformScaled, ErrorKind::TwoPoint];

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Gaussian => "gaussian",
            ErrorKind::UniformScaled => "uniform-scaled",
            ErrorKind::TwoPoint => "two-point",
        }
    }

    pub fn standardized(self, rng: &mut impl Rng, n: usize) -> ComplexVector {
        let half = std::f64::consts::FRAC_1_SQRT_2;
        let bound = 1.5f64.sqrt();
        ComplexVector::from_fn(n, |_, _| match self {
            ErrorKind::Gaussian => {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                c64(re * half, im * half)
            }
            ErrorKind::UniformScaled => c64(rng.gen_range(-bound..bound), rng.gen_range(-bound..bound)),
            ErrorKind::TwoPoint => c64(if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0),
        })
    }
}

impl std::str::FromStr for ErrorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ErrorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown error distribution '{s}'")))
    }
}

/// Circularly-symmetric unit-variance complex Gaussian matrix.
pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
    let v = ErrorKind::Gaussian.standardized(rng, rows * cols);
    ComplexMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Draws every channel entry i.i.d. `CN(0, 1)`. The actual eavesdropper
/// channels start out equal to the estimates.
pub fn sample_channels(cfg: &SystemConfig, rng: &mut impl Rng) -> ChannelSet {
    let h12 = gaussian_matrix(rng, cfg.n_t1, cfg.n_r2);
    let h21 = gaussian_matrix(rng, cfg.n_t2, cfg.n_r1);
    let h11 = gaussian_matrix(rng, cfg.n_t1, cfg.n_r1);
    let h22 = gaussian_matrix(rng, cfg.n_t2, cfg.n_r2);
    let he1_bar = gaussian_matrix(rng, cfg.n_t1, cfg.n_e);
    let he2_bar = gaussian_matrix(rng, cfg.n_t2, cfg.n_e);
    ChannelSet {
        he1_true: Some(he1_bar.clone()),
        he2_true: Some(he2_bar.clone()),
        h12,
        h21,
        h11,
        h22,
        he1_bar,
        he2_bar,
    }
}

/// Precomputed affine maps `e = phi + Omega^{1/2} z` for repeated sampling.
#[derive(Debug, Clone)]
pub struct ErrorSampler {
    phi1: ComplexVector,
    phi2: ComplexVector,
    root1: ComplexMatrix,
    root2: ComplexMatrix,
    n_e: usize,
}

impl ErrorSampler {
    pub fn new(spec: &UncertaintySpec, n_e: usize) -> Result<Self> {
        if n_e == 0 || spec.phi1.len() % n_e != 0 || spec.phi2.len() % n_e != 0 {
            return Err(Error::DimensionMismatch("error dimension not divisible by nE".into()));
        }
        Ok(Self {
            phi1: spec.phi1.clone(),
            phi2: spec.phi2.clone(),
            root1: psd_sqrt(&spec.omega1)?,
            root2: psd_sqrt(&spec.omega2)?,
            n_e,
        })
    }

    /// Error vectors `(vec E_1, vec E_2)`.
    pub fn sample_vecs(&self, kind: ErrorKind, rng: &mut impl Rng) -> (ComplexVector, ComplexVector) {
        let z1 = kind.standardized(rng, self.phi1.len());
        let z2 = kind.standardized(rng, self.phi2.len());
        (&self.phi1 + &self.root1 * z1, &self.phi2 + &self.root2 * z2)
    }

    pub fn sample(&self, kind: ErrorKind, rng: &mut impl Rng) -> (ComplexMatrix, ComplexMatrix) {
        let (e1, e2) = self.sample_vecs(kind, rng);
        let n_e = self.n_e;
        (
            unvec(&e1, e1.len() / n_e, n_e).expect("length checked"),
            unvec(&e2, e2.len() / n_e, n_e).expect("length checked"),
        )
    }
}

/// One draw of `(E_1, E_2)` with exact first and second moments `(phi_i, Omega_i)`.
pub fn sample_error(
    spec: &UncertaintySpec,
    n_e: usize,
    kind: ErrorKind,
    rng: &mut impl Rng,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    Ok(ErrorSampler::new(spec, n_e)?.sample(kind, rng))
}

/// `log2 |I + N^{-1} S|` computed by whitening with the Cholesky factor of `N`.
fn whitened_rate(noise: &HermitianMatrix, signal: &HermitianMatrix) -> Result<f64> {
    let l = cholesky_lower(noise.as_matrix()).ok_or(Error::InvalidConfig(
        "interference-plus-noise matrix is not positive definite".into(),
    ))?;
    let n = noise.dim();
    let mut x = signal.as_matrix().clone();
    l.solve_lower_triangular_mut(&mut x);
    let mut y = x.adjoint();
    l.solve_lower_triangular_mut(&mut y);
    let w = hermitize(&(ComplexMatrix::identity(n, n) + y))?;
    logdet_bits(&w)
}

/// `sigma^2 I + xi H^H Q H`
pub fn si_plus_noise(sigma_sq: f64, xi: f64, h_self: &ComplexMatrix, q: &HermitianMatrix) -> HermitianMatrix {
    let n = h_self.ncols();
    HermitianMatrix::scaled_identity(n, sigma_sq).add(&q.congruence(h_self).scale(xi))
}

/// Rate at node 1: signal from node 2 over own residual self-interference.
pub fn rate_u1(ch: &ChannelSet, q: &TransmitCovariances, cfg: &SystemConfig) -> Result<f64> {
    let noise = si_plus_noise(cfg.sigma1_sq, cfg.xi1, &ch.h11, &q.q1);
    whitened_rate(&noise, &q.q2.congruence(&ch.h21))
}

/// Rate at node 2.
pub fn rate_u2(ch: &ChannelSet, q: &TransmitCovariances, cfg: &SystemConfig) -> Result<f64> {
    let noise = si_plus_noise(cfg.sigma2_sq, cfg.xi2, &ch.h22, &q.q2);
    whitened_rate(&noise, &q.q1.congruence(&ch.h12))
}

/// Eavesdropper sum rate over the two-user multiple-access channel.
pub fn rate_eve(
    he1: &ComplexMatrix,
    he2: &ComplexMatrix,
    q: &TransmitCovariances,
    sigma_e_sq: f64,
) -> Result<f64> {
    let n = he1.ncols();
    let received = q.q1.congruence(he1).add(&q.q2.congruence(he2)).scale(1.0 / sigma_e_sq);
    logdet_bits(&HermitianMatrix::identity(n).add(&received))
}

pub fn legit_sum_rate(ch: &ChannelSet, q: &TransmitCovariances, cfg: &SystemConfig) -> Result<f64> {
    Ok(rate_u1(ch, q, cfg)? + rate_u2(ch, q, cfg)?)
}

/// `[R_1 + R_2 - R_e]^+` with the estimated or the actual eavesdropper channels.
pub fn sum_secrecy_rate(
    ch: &ChannelSet,
    q: &TransmitCovariances,
    cfg: &SystemConfig,
    use_true_eve: bool,
) -> Result<f64> {
    let (he1, he2) = if use_true_eve { ch.true_eve()? } else { (&ch.he1_bar, &ch.he2_bar) };
    sum_secrecy_rate_with(ch, he1, he2, q, cfg)
}

/// Secrecy rate against explicitly supplied eavesdropper channels.
pub fn sum_secrecy_rate_with(
    ch: &ChannelSet,
    he1: &ComplexMatrix,
    he2: &ComplexMatrix,
    q: &TransmitCovariances,
    cfg: &SystemConfig,
) -> Result<f64> {
    let legit = legit_sum_rate(ch, q, cfg)?;
    let eve = rate_eve(he1, he2, q, cfg.sigma_e_sq)?;
    Ok((legit - eve).max(0.0))
}
