//! Configuration: a JSON file names an experiment and overrides whatever
//! it wants; everything else falls back to that experiment's published
//! defaults, so `{"experiment": "cmp1d"}` alone reproduces the full count
//! study. The schema is documented in `docs/config.md`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use lrm_core::lrm::GaussianPrior;

use crate::{HarnessError, Result};

// ---------------------------------------------------------------------------
// Identifiers
// ---------------------------------------------------------------------------

/// The eight built-in studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    /// Univariate CMP counts: two dispersion regimes, three methods.
    Cmp1d,
    /// Sensitivity of the CMP posterior to the smoothing weight and the
    /// matching set, at fixed and calibrated loss weight.
    Cmp1dSensitivity,
    /// Graphical CMP on multivariate counts with a posterior predictive.
    CmpGraphical,
    /// Autoregressive CMP count time series, partial conjugacy.
    Ingarch,
    /// Ising grids: recovery and concentration across lattice sizes.
    Ising,
    /// Potts raster segmentation with an exchange-algorithm baseline.
    Potts,
    /// Weighted-loss robustness under Poisson contamination.
    RobustCmp,
    /// Wall-clock sweep over sample sizes.
    Timing,
}

impl ExperimentId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentId::Cmp1d => "cmp1d",
            ExperimentId::Cmp1dSensitivity => "cmp1d-sensitivity",
            ExperimentId::CmpGraphical => "cmp-graphical",
            ExperimentId::Ingarch => "ingarch",
            ExperimentId::Ising => "ising",
            ExperimentId::Potts => "potts",
            ExperimentId::RobustCmp => "robust-cmp",
            ExperimentId::Timing => "timing",
        }
    }
}

impl std::fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inference methods an experiment can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodId {
    /// Matched-ratio quadratic loss with the closed-form Gaussian update.
    Lrm,
    /// Discrete Fisher divergence posterior via random-walk MCMC.
    Dfd,
    /// Pseudo-likelihood posterior via random-walk MCMC.
    Pl,
    /// Truncated-normaliser likelihood posterior via random-walk MCMC.
    TruncBayes,
    /// Exchange algorithm with auxiliary Gibbs draws.
    Exchange,
}

impl MethodId {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodId::Lrm => "lrm",
            MethodId::Dfd => "dfd",
            MethodId::Pl => "pl",
            MethodId::TruncBayes => "trunc-bayes",
            MethodId::Exchange => "exchange",
        }
    }
}

impl std::fmt::Display for MethodId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

// ---------------------------------------------------------------------------
// Sections
// ---------------------------------------------------------------------------

/// Matching-set choice: coordinate offsets for count models, single-site
/// flips for lattice models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchingSpec {
    /// `{"offsets": [-1, 1]}`
    Offsets(Vec<i64>),
    /// `"lattice-flips"`
    LatticeFlips,
}

/// How the loss weight β is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BetaMode {
    Fixed {
        value: f64,
    },
    Calibrate {
        #[serde(default = "d_bootstrap")]
        bootstrap: usize,
        #[serde(default = "d_delta")]
        delta: f64,
        #[serde(default = "d_grid_lo")]
        grid_lo: f64,
        #[serde(default = "d_grid_hi")]
        grid_hi: f64,
        #[serde(default = "d_grid_points")]
        grid_points: usize,
    },
}

fn d_bootstrap() -> usize {
    50
}
fn d_delta() -> f64 {
    0.05
}
fn d_grid_lo() -> f64 {
    1e-3
}
fn d_grid_hi() -> f64 {
    1e3
}
fn d_grid_points() -> usize {
    25
}

impl BetaMode {
    pub fn calibrate_default() -> Self {
        BetaMode::Calibrate {
            bootstrap: d_bootstrap(),
            delta: d_delta(),
            grid_lo: d_grid_lo(),
            grid_hi: d_grid_hi(),
            grid_points: d_grid_points(),
        }
    }
}

/// Prior covariance. `Spherical` and `Diagonal` carry *variances*.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovSpec {
    Spherical(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

/// Gaussian prior on the natural parameter. A length-1 mean broadcasts to
/// the model dimension, so high-dimensional models keep compact configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub mean: Vec<f64>,
    pub cov: CovSpec,
}

impl PriorConfig {
    /// Materialise for a model of natural dimension `p`.
    pub fn build(&self, p: usize) -> Result<GaussianPrior> {
        let mu = if self.mean.len() == p {
            DVector::from_row_slice(&self.mean)
        } else if self.mean.len() == 1 {
            DVector::from_element(p, self.mean[0])
        } else {
            return Err(HarnessError::Config(format!(
                "prior mean has length {} but the model dimension is {p}",
                self.mean.len()
            )));
        };
        let sigma = match &self.cov {
            CovSpec::Spherical(v) => {
                if !(*v > 0.0) {
                    return Err(HarnessError::Config(format!(
                        "spherical prior variance must be positive, got {v}"
                    )));
                }
                DMatrix::from_diagonal_element(p, p, *v)
            }
            CovSpec::Diagonal(vs) => {
                if vs.len() != p {
                    return Err(HarnessError::Config(format!(
                        "diagonal prior covariance has {} entries but the model dimension is {p}",
                        vs.len()
                    )));
                }
                if vs.iter().any(|v| !(*v > 0.0)) {
                    return Err(HarnessError::Config(
                        "diagonal prior variances must all be positive".into(),
                    ));
                }
                DMatrix::from_diagonal(&DVector::from_row_slice(vs))
            }
            CovSpec::Full(rows) => {
                if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                    return Err(HarnessError::Config(format!(
                        "full prior covariance must be {p}×{p}"
                    )));
                }
                DMatrix::from_fn(p, p, |i, j| rows[i][j])
            }
        };
        GaussianPrior::new(mu, sigma).map_err(Into::into)
    }
}

/// Poisson contamination mixed into a simulated count sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContaminationConfig {
    /// Fraction of observations replaced, in [0, 1).
    pub fraction: f64,
    /// Mean of the contaminating Poisson.
    pub poisson_mean: f64,
}

/// Data source and simulation truth. Which fields matter depends on the
/// experiment; unused ones are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Sample count for the count-model studies.
    pub n: usize,
    /// Ingest this file instead of simulating (count matrix, count
    /// series, or lattice raster, depending on the experiment).
    pub path: Option<String>,
    /// True CMP parameter sets (θ₁, θ₂); each becomes one dataset.
    pub thetas: Vec<Vec<f64>>,
    /// Contamination for the robustness study.
    pub contamination: Option<ContaminationConfig>,
    /// Square lattice edge lengths for the grid sweep.
    pub grid_sizes: Vec<usize>,
    /// True lattice parameters (field, coupling) — or a single coupling
    /// for the Potts generator.
    pub lattice_truth: Vec<f64>,
    /// Gibbs sweeps when simulating lattice data.
    pub sim_sweeps: usize,
    /// Independent repetitions per grid size.
    pub repetitions: usize,
    /// Series length for the time-series study.
    pub series_len: usize,
    /// True (θ₁, θ₂, θ₃) for the simulated series.
    pub series_truth: Vec<f64>,
    /// True AR weight for the simulated series.
    pub phi_true: f64,
    /// Raster shape for the Potts study.
    pub rows: usize,
    pub cols: usize,
    /// Potts category count.
    pub categories: usize,
    /// Spatially varying coupling for the misspecification raster:
    /// [strong, weak] applied to the left and right halves. Absent means
    /// a homogeneous raster at the configured truth.
    pub inhomogeneous: Option<[f64; 2]>,
    /// Coordinate count d for the graphical count model.
    pub graphical_dim: usize,
    /// Truncated-likelihood normaliser cap; defaults to a cap safely
    /// above the largest observation.
    pub truncation: Option<u64>,
}

/// MCMC settings shared by the sampling-based methods of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iters: usize,
    pub burn_in: usize,
    pub count: usize,
    /// Per-coordinate random-walk proposal standard deviation; absent
    /// means a per-experiment heuristic.
    pub proposal_scale: Option<f64>,
    /// Also write every raw draw to CSV (large files).
    pub emit_draws: bool,
}

/// Settings specific to the time-series sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngarchConfig {
    pub phi_init: f64,
    pub phi_proposal_sd: f64,
    pub phi_updates_per_iter: usize,
    pub phi_prior_mu: f64,
    pub phi_prior_sd: f64,
    pub lambda0: f64,
}

/// Settings specific to the lattice studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    /// Gibbs sweeps behind each exchange-algorithm auxiliary draw.
    pub inner_sweeps: usize,
    pub exchange_proposal_sd: f64,
    /// Drop conditional-ratio terms whose candidate conditional falls
    /// below this quantile of the candidate pool.
    pub truncation_quantile: f64,
}

/// Settings for the wall-clock sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub ns: Vec<usize>,
    pub repeats: usize,
    /// Per-cell budget; once exceeded, remaining repeats are skipped and
    /// the cell is marked timed out.
    pub timeout_seconds: f64,
    /// Chain length for the MCMC baselines.
    pub mcmc_draws: usize,
    /// Shorter chain length reported as a separate speedup row.
    pub small_draws: usize,
}

// ---------------------------------------------------------------------------
// The resolved configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Config {
    pub experiment: ExperimentId,
    pub methods: Vec<MethodId>,
    /// Smoothing weight α for the data PMF estimate.
    pub alpha: f64,
    /// Mixture weight of the heavy-tailed base inside the smoothing
    /// target for unbounded counts.
    pub smoothing_eps: f64,
    pub matching: MatchingSpec,
    pub beta: BetaMode,
    pub prior: PriorConfig,
    pub data: DataConfig,
    pub chains: ChainConfig,
    pub ingarch: IngarchConfig,
    pub lattice: LatticeConfig,
    pub timing: TimingConfig,
    pub seed: u64,
    pub out: String,
}

// ---------------------------------------------------------------------------
// Partial (file) form
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialData {
    pub n: Option<usize>,
    pub path: Option<String>,
    pub thetas: Option<Vec<Vec<f64>>>,
    pub contamination: Option<ContaminationConfig>,
    pub grid_sizes: Option<Vec<usize>>,
    pub lattice_truth: Option<Vec<f64>>,
    pub sim_sweeps: Option<usize>,
    pub repetitions: Option<usize>,
    pub series_len: Option<usize>,
    pub series_truth: Option<Vec<f64>>,
    pub phi_true: Option<f64>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub categories: Option<usize>,
    pub inhomogeneous: Option<[f64; 2]>,
    pub graphical_dim: Option<usize>,
    pub truncation: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialChains {
    pub iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub count: Option<usize>,
    pub proposal_scale: Option<f64>,
    pub emit_draws: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialIngarch {
    pub phi_init: Option<f64>,
    pub phi_proposal_sd: Option<f64>,
    pub phi_updates_per_iter: Option<usize>,
    pub phi_prior_mu: Option<f64>,
    pub phi_prior_sd: Option<f64>,
    pub lambda0: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialLattice {
    pub inner_sweeps: Option<usize>,
    pub exchange_proposal_sd: Option<f64>,
    pub truncation_quantile: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialTiming {
    pub ns: Option<Vec<usize>>,
    pub repeats: Option<usize>,
    pub timeout_seconds: Option<f64>,
    pub mcmc_draws: Option<usize>,
    pub small_draws: Option<usize>,
}

/// The on-disk form: everything optional except the experiment name.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub experiment: ExperimentId,
    pub methods: Option<Vec<MethodId>>,
    pub alpha: Option<f64>,
    pub smoothing_eps: Option<f64>,
    pub matching: Option<MatchingSpec>,
    pub beta: Option<BetaMode>,
    pub prior: Option<PriorConfig>,
    pub data: Option<PartialData>,
    pub chains: Option<PartialChains>,
    pub ingarch: Option<PartialIngarch>,
    pub lattice: Option<PartialLattice>,
    pub timing: Option<PartialTiming>,
    pub seed: Option<u64>,
    pub out: Option<String>,
}

// ---------------------------------------------------------------------------
// Defaults per experiment
// ---------------------------------------------------------------------------

fn base_data() -> DataConfig {
    DataConfig {
        n: 2000,
        path: None,
        thetas: vec![vec![4.0, 0.75], vec![4.0, 1.25]],
        contamination: None,
        grid_sizes: vec![50, 150, 250],
        lattice_truth: vec![0.30, 0.15],
        sim_sweeps: 200,
        repetitions: 20,
        series_len: 366,
        series_truth: vec![0.6, 0.4, 1.0],
        phi_true: 0.3,
        rows: 171,
        cols: 171,
        categories: 4,
        inhomogeneous: None,
        graphical_dim: 10,
        truncation: None,
    }
}

fn base_chains() -> ChainConfig {
    ChainConfig {
        iters: 10_000,
        burn_in: 5_000,
        count: 2,
        proposal_scale: Some(0.05),
        emit_draws: false,
    }
}

fn base_ingarch() -> IngarchConfig {
    IngarchConfig {
        phi_init: 0.0,
        phi_proposal_sd: 0.01,
        phi_updates_per_iter: 10,
        phi_prior_mu: 0.0,
        phi_prior_sd: 0.01,
        lambda0: 1.0,
    }
}

fn base_lattice() -> LatticeConfig {
    LatticeConfig {
        inner_sweeps: 30,
        exchange_proposal_sd: 0.1,
        truncation_quantile: 0.0,
    }
}

fn base_timing() -> TimingConfig {
    TimingConfig {
        ns: vec![250, 500, 1000, 2000],
        repeats: 10,
        timeout_seconds: 600.0,
        mcmc_draws: 5000,
        small_draws: 1000,
    }
}

fn prior(mean: &[f64], spherical_var: f64) -> PriorConfig {
    PriorConfig {
        mean: mean.to_vec(),
        cov: CovSpec::Spherical(spherical_var),
    }
}

/// The full default configuration of one experiment. Every study's
/// published recipe lives here; a config file only has to name the
/// experiment to get it.
pub fn defaults(id: ExperimentId) -> Config {
    let mut cfg = Config {
        experiment: id,
        methods: vec![MethodId::Lrm],
        alpha: 0.0,
        smoothing_eps: 0.01,
        matching: MatchingSpec::Offsets(vec![1]),
        beta: BetaMode::calibrate_default(),
        prior: prior(&[3.0, 3.0], 1.0),
        data: base_data(),
        chains: base_chains(),
        ingarch: base_ingarch(),
        lattice: base_lattice(),
        timing: base_timing(),
        seed: 0,
        out: format!("out/{}", id.as_str()),
    };
    match id {
        ExperimentId::Cmp1d => {
            cfg.methods = vec![MethodId::Lrm, MethodId::Dfd, MethodId::TruncBayes];
        }
        ExperimentId::Cmp1dSensitivity => {
            cfg.beta = BetaMode::Fixed { value: 1.0 };
            cfg.data.thetas = vec![vec![4.0, 0.75]];
        }
        ExperimentId::CmpGraphical => {
            cfg.alpha = 0.1;
            cfg.matching = MatchingSpec::Offsets(vec![-2, -1, 1, 2]);
            cfg.prior = prior(&[0.0], 1.0);
            cfg.data.n = 878;
            cfg.chains.iters = 2500;
            cfg.chains.burn_in = 500;
        }
        ExperimentId::Ingarch => {
            cfg.methods = vec![MethodId::Lrm, MethodId::TruncBayes];
            cfg.alpha = 1.0;
            cfg.matching = MatchingSpec::Offsets(vec![-1, 1]);
            cfg.prior = prior(&[1.0, 1.0, -1.0], 5.0);
            cfg.chains.iters = 5000;
            cfg.chains.burn_in = 3000;
            cfg.chains.count = 4;
        }
        ExperimentId::Ising => {
            cfg.methods = vec![MethodId::Lrm, MethodId::Pl];
            cfg.alpha = 0.1;
            cfg.matching = MatchingSpec::LatticeFlips;
            cfg.prior = prior(&[0.5, 0.5], 2.0);
            cfg.chains.iters = 6000;
            cfg.chains.burn_in = 1000;
            cfg.chains.count = 4;
            cfg.chains.proposal_scale = None;
        }
        ExperimentId::Potts => {
            cfg.methods = vec![MethodId::Lrm, MethodId::Exchange];
            cfg.alpha = 1.0;
            cfg.matching = MatchingSpec::LatticeFlips;
            cfg.prior = prior(&[0.0], 10.0);
            cfg.data.lattice_truth = vec![0.9];
            cfg.data.sim_sweeps = 300;
            cfg.chains.iters = 2500;
            cfg.chains.burn_in = 500;
            cfg.chains.proposal_scale = None;
            cfg.lattice.truncation_quantile = 0.05;
        }
        ExperimentId::RobustCmp => {
            cfg.beta = BetaMode::Fixed { value: 1.0 };
            cfg.data.n = 1000;
            cfg.data.thetas = vec![vec![4.0, 1.25]];
            cfg.data.contamination = Some(ContaminationConfig {
                fraction: 0.05,
                poisson_mean: 15.0,
            });
        }
        ExperimentId::Timing => {
            cfg.methods = vec![MethodId::Lrm, MethodId::Dfd, MethodId::TruncBayes];
            cfg.data.thetas = vec![vec![4.0, 1.25]];
            cfg.chains.count = 1;
        }
    }
    cfg
}

// ---------------------------------------------------------------------------
// Resolution and validation
// ---------------------------------------------------------------------------

macro_rules! take {
    ($cfg:expr, $part:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $part.$field {
            $cfg.$field = v;
        })+
    };
}

/// Overlay a partial config on its experiment's defaults.
pub fn resolve(p: PartialConfig) -> Config {
    let mut cfg = defaults(p.experiment);
    take!(cfg, p, methods, alpha, smoothing_eps, matching, beta, prior, seed, out);
    if let Some(d) = p.data {
        take!(
            cfg.data, d, n, thetas, grid_sizes, lattice_truth, sim_sweeps, repetitions,
            series_len, series_truth, phi_true, rows, cols, categories, graphical_dim,
        );
        // Option-typed fields: presence in the file wins outright.
        if d.path.is_some() {
            cfg.data.path = d.path;
        }
        if d.contamination.is_some() {
            cfg.data.contamination = d.contamination;
        }
        if d.inhomogeneous.is_some() {
            cfg.data.inhomogeneous = d.inhomogeneous;
        }
        if d.truncation.is_some() {
            cfg.data.truncation = d.truncation;
        }
    }
    if let Some(c) = p.chains {
        take!(cfg.chains, c, iters, burn_in, count, emit_draws);
        if c.proposal_scale.is_some() {
            cfg.chains.proposal_scale = c.proposal_scale;
        }
    }
    if let Some(i) = p.ingarch {
        take!(
            cfg.ingarch, i, phi_init, phi_proposal_sd, phi_updates_per_iter, phi_prior_mu,
            phi_prior_sd, lambda0,
        );
    }
    if let Some(l) = p.lattice {
        take!(cfg.lattice, l, inner_sweeps, exchange_proposal_sd, truncation_quantile);
    }
    if let Some(t) = p.timing {
        take!(cfg.timing, t, ns, repeats, timeout_seconds, mcmc_draws, small_draws);
    }
    cfg
}

/// Methods each experiment's model family supports.
pub fn allowed_methods(id: ExperimentId) -> &'static [MethodId] {
    match id {
        ExperimentId::Cmp1d | ExperimentId::Timing => {
            &[MethodId::Lrm, MethodId::Dfd, MethodId::TruncBayes]
        }
        ExperimentId::Cmp1dSensitivity | ExperimentId::CmpGraphical | ExperimentId::RobustCmp => {
            &[MethodId::Lrm]
        }
        ExperimentId::Ingarch => &[MethodId::Lrm, MethodId::TruncBayes],
        ExperimentId::Ising | ExperimentId::Potts => {
            &[MethodId::Lrm, MethodId::Pl, MethodId::Exchange]
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));

        if self.methods.is_empty() {
            return bad("no methods requested".into());
        }
        let allowed = allowed_methods(self.experiment);
        for m in &self.methods {
            if !allowed.contains(m) {
                return bad(format!(
                    "method {m} is not valid for experiment {}; allowed: {}",
                    self.experiment,
                    allowed
                        .iter()
                        .map(|a| a.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ));
            }
        }
        let mut seen = self.methods.clone();
        seen.sort_by_key(|m| m.as_str());
        seen.dedup();
        if seen.len() != self.methods.len() {
            return bad("duplicate method in the method list".into());
        }

        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("smoothing weight must be ≥ 0, got {}", self.alpha));
        }
        if !(self.smoothing_eps > 0.0 && self.smoothing_eps < 1.0) {
            return bad(format!(
                "smoothing base weight must lie in (0,1), got {}",
                self.smoothing_eps
            ));
        }

        match &self.matching {
            MatchingSpec::Offsets(offs) => {
                if offs.is_empty() {
                    return bad("matching offsets must be nonempty".into());
                }
                if offs.contains(&0) {
                    return bad("a zero matching offset matches a state to itself".into());
                }
            }
            MatchingSpec::LatticeFlips => {}
        }

        match &self.beta {
            BetaMode::Fixed { value } => {
                if !(*value > 0.0) || !value.is_finite() {
                    return bad(format!("fixed loss weight must be positive, got {value}"));
                }
            }
            BetaMode::Calibrate {
                bootstrap,
                delta,
                grid_lo,
                grid_hi,
                grid_points,
            } => {
                if *bootstrap < 2 {
                    return bad(format!("calibration needs ≥ 2 resamples, got {bootstrap}"));
                }
                if !(*delta > 0.0 && *delta < 1.0) {
                    return bad(format!("miscoverage must lie in (0,1), got {delta}"));
                }
                if !(*grid_lo > 0.0) || !(*grid_hi > *grid_lo) || *grid_points < 2 {
                    return bad(format!(
                        "bad calibration grid: [{grid_lo}, {grid_hi}] with {grid_points} points"
                    ));
                }
            }
        }

        if self.prior.mean.is_empty() {
            return bad("prior mean must be nonempty".into());
        }

        let d = &self.data;
        if d.n < 2 {
            return bad(format!("need at least 2 observations, got {}", d.n));
        }
        for t in &d.thetas {
            if t.len() != 2 || !(t[0] > 0.0) || !(t[1] >= 0.0) {
                return bad(format!(
                    "each count-model truth needs (θ₁ > 0, θ₂ ≥ 0), got {t:?}"
                ));
            }
        }
        if d.thetas.is_empty() {
            return bad("at least one count-model truth is required".into());
        }
        if let Some(c) = &d.contamination {
            if !(c.fraction >= 0.0 && c.fraction < 1.0) {
                return bad(format!(
                    "contamination fraction must lie in [0,1), got {}",
                    c.fraction
                ));
            }
            if !(c.poisson_mean > 0.0) {
                return bad(format!(
                    "contamination mean must be positive, got {}",
                    c.poisson_mean
                ));
            }
        }
        if d.grid_sizes.is_empty() || d.grid_sizes.iter().any(|&g| g < 4) {
            return bad("grid sizes must be nonempty, each ≥ 4".into());
        }
        if d.repetitions == 0 {
            return bad("repetitions must be ≥ 1".into());
        }
        if d.sim_sweeps == 0 {
            return bad("lattice simulation needs ≥ 1 sweep".into());
        }
        if d.series_len < 2 {
            return bad(format!("series length must be ≥ 2, got {}", d.series_len));
        }
        if d.series_truth.len() != 3 {
            return bad(format!(
                "series truth needs exactly (θ₁, θ₂, θ₃), got {:?}",
                d.series_truth
            ));
        }
        if !(d.phi_true.abs() < 1.0) {
            return bad(format!("|AR truth| must be < 1, got {}", d.phi_true));
        }
        if d.rows < 2 || d.cols < 2 {
            return bad(format!("raster must be at least 2×2, got {}×{}", d.rows, d.cols));
        }
        if d.categories < 2 {
            return bad(format!("need ≥ 2 categories, got {}", d.categories));
        }
        if d.graphical_dim < 2 {
            return bad(format!(
                "the graphical model needs ≥ 2 coordinates, got {}",
                d.graphical_dim
            ));
        }
        if self.data.lattice_truth.is_empty() {
            return bad("lattice truth must be nonempty".into());
        }

        let c = &self.chains;
        if c.count == 0 {
            return bad("need at least one chain".into());
        }
        if c.iters == 0 || c.burn_in >= c.iters {
            return bad(format!(
                "chain length {} must exceed burn-in {}",
                c.iters, c.burn_in
            ));
        }
        if let Some(s) = c.proposal_scale {
            if !(s > 0.0) {
                return bad(format!("proposal scale must be positive, got {s}"));
            }
        }

        let g = &self.ingarch;
        if !(g.phi_init.abs() < 1.0) {
            return bad(format!("|initial AR weight| must be < 1, got {}", g.phi_init));
        }
        if !(g.phi_proposal_sd >= 0.0) {
            return bad("AR proposal scale must be ≥ 0".into());
        }
        if !(g.phi_prior_sd > 0.0) {
            return bad("AR prior standard deviation must be positive".into());
        }
        if !(g.lambda0 > 0.0) {
            return bad("initial intensity must be positive".into());
        }

        let l = &self.lattice;
        if l.inner_sweeps == 0 {
            return bad("exchange needs ≥ 1 auxiliary sweep".into());
        }
        if !(l.exchange_proposal_sd > 0.0) {
            return bad("exchange proposal scale must be positive".into());
        }
        if !(0.0..1.0).contains(&l.truncation_quantile) {
            return bad(format!(
                "conditional truncation quantile must lie in [0,1), got {}",
                l.truncation_quantile
            ));
        }

        let t = &self.timing;
        if t.repeats == 0 {
            return bad("timing needs at least one repeat per cell".into());
        }
        if t.ns.is_empty() || t.ns.iter().any(|&n| n < 10) {
            return bad("timing sample sizes must be nonempty, each ≥ 10".into());
        }
        if !(t.timeout_seconds > 0.0) {
            return bad("timing timeout must be positive".into());
        }
        if t.mcmc_draws < 10 || t.small_draws < 10 {
            return bad("timing chain lengths must be ≥ 10".into());
        }

        Ok(())
    }
}

/// Read, parse, resolve, and validate a config file.
pub fn load(path: &std::path::Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let partial: PartialConfig = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("invalid config {}: {e}", path.display())))?;
    let cfg = resolve(partial);
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> Result<Config> {
        let partial: PartialConfig =
            serde_json::from_str(json).map_err(|e| HarnessError::Config(e.to_string()))?;
        let cfg = resolve(partial);
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn identifiers_round_trip_in_kebab_case() {
        for (id, s) in [
            (ExperimentId::Cmp1d, "\"cmp1d\""),
            (ExperimentId::Cmp1dSensitivity, "\"cmp1d-sensitivity\""),
            (ExperimentId::CmpGraphical, "\"cmp-graphical\""),
            (ExperimentId::RobustCmp, "\"robust-cmp\""),
            (ExperimentId::Timing, "\"timing\""),
        ] {
            assert_eq!(serde_json::to_string(&id).unwrap(), s);
            let back: ExperimentId = serde_json::from_str(s).unwrap();
            assert_eq!(back, id);
        }
        assert_eq!(
            serde_json::to_string(&MethodId::TruncBayes).unwrap(),
            "\"trunc-bayes\""
        );
    }

    #[test]
    fn minimal_config_reproduces_the_study_defaults() {
        let cfg = parse(r#"{"experiment": "cmp1d"}"#).unwrap();
        assert_eq!(cfg, defaults(ExperimentId::Cmp1d));
        assert_eq!(cfg.data.n, 2000);
        assert_eq!(cfg.prior.mean, vec![3.0, 3.0]);
        assert_eq!(
            cfg.methods,
            vec![MethodId::Lrm, MethodId::Dfd, MethodId::TruncBayes]
        );
        assert!(matches!(cfg.beta, BetaMode::Calibrate { bootstrap: 50, .. }));

        let ising = parse(r#"{"experiment": "ising"}"#).unwrap();
        assert_eq!(ising.matching, MatchingSpec::LatticeFlips);
        assert_eq!(ising.data.lattice_truth, vec![0.30, 0.15]);
        assert_eq!(ising.data.repetitions, 20);

        let robust = parse(r#"{"experiment": "robust-cmp"}"#).unwrap();
        let cont = robust.data.contamination.unwrap();
        assert_eq!(cont.fraction, 0.05);
        assert_eq!(cont.poisson_mean, 15.0);
        assert_eq!(robust.beta, BetaMode::Fixed { value: 1.0 });
    }

    #[test]
    fn overrides_merge_field_by_field() {
        let cfg = parse(
            r#"{
                "experiment": "cmp1d",
                "data": {"n": 250},
                "chains": {"count": 1},
                "seed": 9
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.data.n, 250);
        // Untouched siblings keep their defaults.
        assert_eq!(cfg.data.thetas, vec![vec![4.0, 0.75], vec![4.0, 1.25]]);
        assert_eq!(cfg.chains.count, 1);
        assert_eq!(cfg.chains.iters, 10_000);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn unknown_fields_and_bad_values_are_rejected() {
        assert!(parse(r#"{"experiment": "cmp1d", "typo": 1}"#).is_err());
        assert!(parse(r#"{"experiment": "nope"}"#).is_err());
        assert!(parse(r#"{}"#).is_err());
        // Methods must suit the experiment's model family.
        assert!(parse(r#"{"experiment": "cmp1d", "methods": ["exchange"]}"#).is_err());
        assert!(parse(r#"{"experiment": "ising", "methods": ["dfd"]}"#).is_err());
        // Zero-repeat timing is a validation error.
        assert!(parse(r#"{"experiment": "timing", "timing": {"repeats": 0}}"#).is_err());
        // Degenerate chain settings.
        assert!(
            parse(r#"{"experiment": "cmp1d", "chains": {"iters": 100, "burn_in": 100}}"#).is_err()
        );
    }

    #[test]
    fn beta_modes_parse_with_inner_defaults() {
        let cfg = parse(r#"{"experiment": "cmp1d", "beta": {"mode": "calibrate"}}"#).unwrap();
        assert!(matches!(
            cfg.beta,
            BetaMode::Calibrate {
                bootstrap: 50,
                grid_points: 25,
                ..
            }
        ));
        let cfg = parse(r#"{"experiment": "cmp1d", "beta": {"mode": "fixed", "value": 2.5}}"#)
            .unwrap();
        assert_eq!(cfg.beta, BetaMode::Fixed { value: 2.5 });
        assert!(parse(r#"{"experiment": "cmp1d", "beta": {"mode": "fixed", "value": 0.0}}"#)
            .is_err());
    }

    #[test]
    fn prior_broadcast_and_dimension_checks() {
        let p = PriorConfig {
            mean: vec![0.0],
            cov: CovSpec::Spherical(2.0),
        };
        let prior = p.build(5).unwrap();
        assert_eq!(prior.p(), 5);
        assert_eq!(prior.sigma()[(3, 3)], 2.0);

        let p = PriorConfig {
            mean: vec![1.0, 2.0],
            cov: CovSpec::Diagonal(vec![1.0, 4.0]),
        };
        let prior = p.build(2).unwrap();
        assert_eq!(prior.mu()[1], 2.0);
        assert_eq!(prior.sigma()[(1, 1)], 4.0);

        let p = PriorConfig {
            mean: vec![1.0, 2.0, 3.0],
            cov: CovSpec::Spherical(1.0),
        };
        assert!(p.build(2).is_err());

        let p = PriorConfig {
            mean: vec![0.0],
            cov: CovSpec::Full(vec![vec![2.0, 0.3], vec![0.3, 1.0]]),
        };
        let prior = p.build(2).unwrap();
        assert_eq!(prior.sigma()[(0, 1)], 0.3);
    }

    #[test]
    fn matching_spec_json_forms() {
        let m: MatchingSpec = serde_json::from_str(r#"{"offsets": [-1, 1]}"#).unwrap();
        assert_eq!(m, MatchingSpec::Offsets(vec![-1, 1]));
        let m: MatchingSpec = serde_json::from_str(r#""lattice-flips""#).unwrap();
        assert_eq!(m, MatchingSpec::LatticeFlips);
    }
}
