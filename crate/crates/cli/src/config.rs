//! Command-line flags, the JSON config file, and their merge into an
//! [`ExperimentSpec`]. Precedence: built-in defaults, then the file, then
//! flags, then the `SEED` environment variable.

use std::path::{Path, PathBuf};

use clap::Parser;
use secrecy_core::channel::{SystemConfig, UncertaintySpec};
use secrecy_core::linalg::{c64, ComplexMatrix, ComplexVector, HermitianMatrix};
use secrecy_core::optimizer::MethodKind;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PowerSweep,
    EpsilonSweep,
    Convergence,
    Validate,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::PowerSweep => "power-sweep",
            ExperimentKind::EpsilonSweep => "epsilon-sweep",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Default, Parser)]
#[command(name = "secrecy", version, about = "Robust sum secrecy rate experiments for MIMO two-way full-duplex links")]
pub struct Args {
    #[arg(long, value_enum)]
    pub experiment: Option<ExperimentKind>,
    /// Flat JSON object with system, uncertainty and run fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated: markov, sdp, perfect-csi, hd-markov, hd-sdp.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Comma-separated sweep values (dB for power, epsilon for uncertainty).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Overridden by the SEED environment variable when set.
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_dc_iters: Option<usize>,
    /// Monte Carlo draws per outage estimate; 0 disables the estimate.
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// Also write a gnuplot script next to the CSV.
    #[arg(long)]
    pub plot: bool,
}

/// A real number or a `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn value(self) -> secrecy_core::linalg::Complex64 {
        match self {
            Entry::Real(x) => c64(x, 0.0),
            Entry::Complex([re, im]) => c64(re, im),
        }
    }
}

/// Every field is optional; absent fields keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<ExperimentKind>,
    pub methods: Option<Vec<String>>,
    pub grid: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub max_dc_iters: Option<usize>,
    pub mc_samples: Option<usize>,

    pub n_t1: Option<usize>,
    pub n_t2: Option<usize>,
    pub n_r1: Option<usize>,
    pub n_r2: Option<usize>,
    pub n_e: Option<usize>,
    pub sigma1_sq: Option<f64>,
    pub sigma2_sq: Option<f64>,
    pub sigma_e_sq: Option<f64>,
    pub xi1: Option<f64>,
    pub xi2: Option<f64>,
    /// Linear power budgets.
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub rho: Option<f64>,

    /// `Omega_i = epsilon I` unless `omega1` / `omega2` are given.
    pub epsilon: Option<f64>,
    pub phi1: Option<Vec<Entry>>,
    pub phi2: Option<Vec<Entry>>,
    /// Row-major square matrices.
    pub omega1: Option<Vec<Vec<Entry>>>,
    pub omega2: Option<Vec<Vec<Entry>>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CliError::ConfigRead { path: path.display().to_string(), source })?;
        serde_json::from_str(&text).map_err(|source| CliError::ConfigParse { path: path.display().to_string(), source })
    }
}

/// Uncertainty settings before the error dimensions are known.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyConfig {
    pub epsilon: f64,
    pub phi1: Option<Vec<Entry>>,
    pub phi2: Option<Vec<Entry>>,
    pub omega1: Option<Vec<Vec<Entry>>>,
    pub omega2: Option<Vec<Vec<Entry>>>,
}

fn vector(entries: &[Entry]) -> ComplexVector {
    ComplexVector::from_iterator(entries.len(), entries.iter().map(|e| e.value()))
}

fn square(rows: &[Vec<Entry>], name: &str) -> Result<HermitianMatrix, secrecy_core::Error> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(secrecy_core::Error::DimensionMismatch(format!("{name} must be square")));
    }
    HermitianMatrix::new(ComplexMatrix::from_fn(n, n, |i, j| rows[i][j].value()))
}

impl UncertaintyConfig {
    /// Builds and validates the moment description, with `Omega_i` replaced
    /// by `epsilon I` when `epsilon` is given.
    pub fn build(&self, cfg: &SystemConfig, epsilon: Option<f64>) -> Result<UncertaintySpec, secrecy_core::Error> {
        let mut spec = UncertaintySpec::isotropic(cfg, epsilon.unwrap_or(self.epsilon));
        if epsilon.is_none() {
            if let Some(o) = &self.omega1 {
                spec.omega1 = square(o, "omega1")?;
            }
            if let Some(o) = &self.omega2 {
                spec.omega2 = square(o, "omega2")?;
            }
        }
        if let Some(p) = &self.phi1 {
            spec.phi1 = vector(p);
        }
        if let Some(p) = &self.phi2 {
            spec.phi2 = vector(p);
        }
        spec.validate(cfg)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub methods: Vec<MethodKind>,
    /// Power in dB or uncertainty level; unused by convergence and validate.
    pub grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub plot: bool,
    pub system: SystemConfig,
    pub uncertainty: UncertaintyConfig,
    pub max_dc_iters: usize,
    pub mc_samples: usize,
}

pub const DEFAULT_POWER_GRID_DB: [f64; 5] = [0.0, 2.5, 5.0, 7.5, 10.0];
pub const DEFAULT_EPSILON_GRID: [f64; 5] = [0.001, 0.0025, 0.005, 0.0075, 0.01];
pub const DEFAULT_EPSILON: f64 = 0.005;

impl ExperimentSpec {
    /// Defaults for `kind` at the reference operating point.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let (methods, grid) = match kind {
            ExperimentKind::PowerSweep => (MethodKind::ALL.to_vec(), DEFAULT_POWER_GRID_DB.to_vec()),
            ExperimentKind::EpsilonSweep => (MethodKind::ALL.to_vec(), DEFAULT_EPSILON_GRID.to_vec()),
            ExperimentKind::Convergence => (vec![MethodKind::Markov, MethodKind::Sdp], Vec::new()),
            ExperimentKind::Validate => (Vec::new(), Vec::new()),
        };
        Self {
            kind,
            methods,
            grid,
            trials: 10,
            seed: 1,
            out: None,
            plot: false,
            system: SystemConfig::default(),
            uncertainty: UncertaintyConfig { epsilon: DEFAULT_EPSILON, phi1: None, phi2: None, omega1: None, omega2: None },
            max_dc_iters: 20,
            mc_samples: 10_000,
        }
    }

    /// Merges defaults, the config file, the flags and `seed_env`.
    pub fn from_args(args: &Args, seed_env: Option<&str>) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let kind = args
            .experiment
            .or(file.experiment)
            .ok_or_else(|| CliError::Usage("--experiment is required".into()))?;
        let mut spec = Self::defaults(kind);

        let s = &mut spec.system;
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = file.$f { s.$f = v; } )* };
        }
        take!(n_t1, n_t2, n_r1, n_r2, n_e, sigma1_sq, sigma2_sq, sigma_e_sq, xi1, xi2, p1, p2, rho);
        let u = &mut spec.uncertainty;
        if let Some(e) = file.epsilon {
            u.epsilon = e;
        }
        u.phi1 = file.phi1.clone();
        u.phi2 = file.phi2.clone();
        u.omega1 = file.omega1.clone();
        u.omega2 = file.omega2.clone();

        if let Some(names) = args.methods.as_ref().or(file.methods.as_ref()) {
            spec.methods = names
                .iter()
                .map(|n| n.trim().parse::<MethodKind>().map_err(|e| CliError::Usage(e.to_string())))
                .collect::<Result<_, _>>()?;
        }
        if let Some(grid) = args.grid.as_ref().or(file.grid.as_ref()) {
            spec.grid = grid.clone();
        }
        spec.trials = args.trials.or(file.trials).unwrap_or(spec.trials);
        spec.seed = args.seed.or(file.seed).unwrap_or(spec.seed);
        spec.out = args.out.clone().or(file.out);
        spec.max_dc_iters = args.max_dc_iters.or(file.max_dc_iters).unwrap_or(spec.max_dc_iters);
        spec.mc_samples = args.mc_samples.or(file.mc_samples).unwrap_or(spec.mc_samples);
        spec.plot = args.plot;
        if let Some(raw) = seed_env {
            spec.seed = raw
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("SEED must be a nonnegative integer, got '{raw}'")))?;
        }
        spec.check()?;
        Ok(spec)
    }

    /// Run-shape invariants. System and uncertainty values are checked when
    /// the experiment runs, so the validation suite can report them.
    pub fn check(&self) -> Result<(), CliError> {
        let sweep = matches!(self.kind, ExperimentKind::PowerSweep | ExperimentKind::EpsilonSweep);
        if sweep && self.grid.is_empty() {
            return Err(CliError::Usage("grid must not be empty".into()));
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) || self.grid.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Usage("grid must be finite and strictly increasing".into()));
        }
        if self.kind == ExperimentKind::EpsilonSweep && self.grid.iter().any(|&e| e < 0.0) {
            return Err(CliError::Usage("uncertainty levels must be nonnegative".into()));
        }
        if self.trials == 0 {
            return Err(CliError::Usage("trials must be at least 1".into()));
        }
        if self.max_dc_iters == 0 {
            return Err(CliError::Usage("max-dc-iters must be at least 1".into()));
        }
        if self.kind != ExperimentKind::Validate && self.methods.is_empty() {
            return Err(CliError::Usage("at least one method is required".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(kind: ExperimentKind) -> Args {
        Args { experiment: Some(kind), ..Args::default() }
    }

    #[test]
    fn defaults_match_reference_point() {
        let s = ExperimentSpec::from_args(&args(ExperimentKind::PowerSweep), None).unwrap();
        assert_eq!(s.grid, DEFAULT_POWER_GRID_DB.to_vec());
        assert_eq!(s.methods.len(), 5);
        assert_eq!(s.system, SystemConfig::default());
        assert_eq!(s.uncertainty.epsilon, 0.005);
    }

    #[test]
    fn flags_override_file_and_env_overrides_seed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"trials": 3, "seed": 5, "xi1": 0.02, "methods": ["sdp"]}"#).unwrap();
        let mut a = args(ExperimentKind::PowerSweep);
        a.config = Some(path);
        a.trials = Some(4);
        let s = ExperimentSpec::from_args(&a, None).unwrap();
        assert_eq!((s.trials, s.seed, s.system.xi1), (4, 5, 0.02));
        assert_eq!(s.methods, vec![MethodKind::Sdp]);
        assert_eq!(ExperimentSpec::from_args(&a, Some("11")).unwrap().seed, 11);
        assert!(ExperimentSpec::from_args(&a, Some("x")).is_err());
    }

    #[test]
    fn rejects_bad_run_shapes() {
        let mut a = args(ExperimentKind::EpsilonSweep);
        a.grid = Some(vec![0.01, 0.001]);
        assert!(matches!(ExperimentSpec::from_args(&a, None), Err(CliError::Usage(_))));
        a.grid = Some(vec![]);
        assert!(ExperimentSpec::from_args(&a, None).is_err());
        let mut a = args(ExperimentKind::PowerSweep);
        a.trials = Some(0);
        assert!(ExperimentSpec::from_args(&a, None).is_err());
        a.trials = None;
        a.methods = Some(vec!["magic".into()]);
        assert!(ExperimentSpec::from_args(&a, None).is_err());
        assert!(ExperimentSpec::from_args(&Args::default(), None).is_err());
    }

    #[test]
    fn unknown_config_field_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"power": 3}"#).unwrap();
        let mut a = args(ExperimentKind::PowerSweep);
        a.config = Some(path);
        assert!(matches!(ExperimentSpec::from_args(&a, None), Err(CliError::ConfigParse { .. })));
    }

    #[test]
    fn explicit_covariances_and_complex_entries() {
        let cfg = SystemConfig { n_t1: 1, n_t2: 1, n_e: 1, ..SystemConfig::default() };
        let u = UncertaintyConfig {
            epsilon: 0.1,
            phi1: Some(vec![Entry::Complex([0.5, -0.5])]),
            phi2: None,
            omega1: Some(vec![vec![Entry::Real(0.3)]]),
            omega2: None,
        };
        let spec = u.build(&cfg, None).unwrap();
        assert_eq!(spec.omega1.trace(), 0.3);
        assert_eq!(spec.omega2.trace(), 0.1);
        assert_eq!(spec.phi1[0], c64(0.5, -0.5));
        assert_eq!(u.build(&cfg, Some(0.2)).unwrap().omega1.trace(), 0.2);
        let bad = UncertaintyConfig { omega1: Some(vec![vec![Entry::Real(-1.0)]]), ..u };
        assert!(matches!(bad.build(&cfg, None), Err(secrecy_core::Error::IndefiniteCovariance(_))));
    }
}
