//! Data simulators, MCMC kernels, and convergence diagnostics.
//!
//! Everything takes its randomness through [`RngSpec`] (or an explicit
//! `Rng`), and every sampler is bit-reproducible: same spec, same output.
//! Multi-chain routines give chain `c` its own counter-based stream
//! `(seed, c)`, so chains are independent *and* the set of chains is
//! invariant to how they are scheduled across threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Lattice, MatchingSet, StatePoint};
use crate::exec;
use crate::lrm::{conjugate_update, GaussianPrior, QuadraticLoss};
use crate::models::{ingarch_quadratic, CmpGraphical, ExpFamily, IngarchCmp, MrfModel, ThetaPosterior};
use crate::numeric::{ln_factorial, log_sum_exp};
use crate::pmf::SmoothedPmf;
use crate::{Error, Result};

/// Truncation bound for univariate CMP mass tables: states `0..=99`.
pub const CMP_TRUNCATION: u64 = 99;

// ---------------------------------------------------------------------------
// RNG plumbing
// ---------------------------------------------------------------------------

/// A reproducible randomness source: algorithm, seed, and stream index.
///
/// Identical specs yield bit-identical draw sequences; bumping `stream`
/// gives an independent sequence under the same seed (used for chains).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub algorithm: String,
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        RngSpec {
            algorithm: "chacha12".into(),
            seed,
            stream: 0,
        }
    }

    pub fn with_stream(&self, stream: u64) -> Self {
        RngSpec {
            algorithm: self.algorithm.clone(),
            seed: self.seed,
            stream,
        }
    }

    pub fn rng(&self) -> Result<ChaCha12Rng> {
        if self.algorithm != "chacha12" {
            return Err(Error::InvalidSpec(format!(
                "unknown rng algorithm {:?} (only \"chacha12\" is supported)",
                self.algorithm
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        Ok(rng)
    }
}

// ---------------------------------------------------------------------------
// Chain storage and diagnostics
// ---------------------------------------------------------------------------

/// Draws from one or more MCMC chains over a shared parameter vector.
#[derive(Clone, Debug)]
pub struct ChainSet {
    param_names: Vec<String>,
    /// Per chain: iterations × p.
    draws: Vec<DMatrix<f64>>,
    acceptance: Vec<f64>,
    burn_in: usize,
}

impl ChainSet {
    pub fn new(
        param_names: Vec<String>,
        draws: Vec<DMatrix<f64>>,
        acceptance: Vec<f64>,
        burn_in: usize,
    ) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Sampler("a chain set needs at least one chain".into()));
        }
        let p = param_names.len();
        let iters = draws[0].nrows();
        if draws.iter().any(|d| d.ncols() != p || d.nrows() != iters) {
            return Err(Error::Sampler(
                "all chains must share iteration count and dimension".into(),
            ));
        }
        if acceptance.len() != draws.len()
            || acceptance.iter().any(|&a| !(0.0..=1.0).contains(&a))
        {
            return Err(Error::Sampler(
                "acceptance rates must lie in [0,1], one per chain".into(),
            ));
        }
        if burn_in >= iters {
            return Err(Error::Sampler(format!(
                "burn-in {burn_in} swallows all {iters} iterations"
            )));
        }
        Ok(ChainSet {
            param_names,
            draws,
            acceptance,
            burn_in,
        })
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn chains(&self) -> usize {
        self.draws.len()
    }

    pub fn p(&self) -> usize {
        self.param_names.len()
    }

    pub fn iters(&self) -> usize {
        self.draws[0].nrows()
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn acceptance_rates(&self) -> &[f64] {
        &self.acceptance
    }

    pub fn chain(&self, c: usize) -> &DMatrix<f64> {
        &self.draws[c]
    }

    /// Post-burn-in draws of every chain, stacked in chain order.
    pub fn pooled_draws(&self) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(self.chains() * (self.iters() - self.burn_in));
        for d in &self.draws {
            for i in self.burn_in..d.nrows() {
                out.push(d.row(i).transpose());
            }
        }
        out
    }

    /// Pooled post-burn-in mean per parameter.
    pub fn mean(&self) -> DVector<f64> {
        let pooled = self.pooled_draws();
        let mut m = DVector::zeros(self.p());
        for d in &pooled {
            m += d;
        }
        m / pooled.len() as f64
    }

    /// Pooled post-burn-in standard deviation per parameter.
    pub fn sd(&self) -> DVector<f64> {
        let pooled = self.pooled_draws();
        let m = self.mean();
        let mut v = DVector::zeros(self.p());
        for d in &pooled {
            let c = d - &m;
            v += c.component_mul(&c);
        }
        (v / (pooled.len() - 1) as f64).map(f64::sqrt)
    }

    /// Write every draw as CSV: `chain,iter,<param...>` with CRLF line
    /// endings. Plain numeric content never needs quoting.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "chain,iter")?;
        for name in &self.param_names {
            write!(w, ",{name}")?;
        }
        write!(w, "\r\n")?;
        for (c, d) in self.draws.iter().enumerate() {
            for i in 0..d.nrows() {
                write!(w, "{c},{i}")?;
                for j in 0..d.ncols() {
                    write!(w, ",{}", d[(i, j)])?;
                }
                write!(w, "\r\n")?;
            }
        }
        Ok(())
    }
}

/// Per-parameter potential scale reduction factors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GelmanRubinReport {
    /// `None` marks a parameter whose within-chain variance is zero, where
    /// the statistic is undefined.
    pub r_hat: Vec<Option<f64>>,
    pub between: Vec<f64>,
    pub within: Vec<f64>,
    pub chains: usize,
    pub draws_per_chain: usize,
}

impl GelmanRubinReport {
    /// Largest defined R̂, the usual mixing summary.
    pub fn max_r_hat(&self) -> Option<f64> {
        self.r_hat
            .iter()
            .flatten()
            .cloned()
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}

/// Classical potential scale reduction factor
/// `R̂ = sqrt(((n−1)/n · W + B/n) / W)` per parameter.
pub fn gelman_rubin(chains: &ChainSet) -> Result<GelmanRubinReport> {
    let m = chains.chains();
    let n = chains.iters() - chains.burn_in();
    if m < 2 {
        return Err(Error::Sampler(
            "the Gelman-Rubin statistic needs at least two chains".into(),
        ));
    }
    if n < 10 {
        return Err(Error::Sampler(format!(
            "the Gelman-Rubin statistic needs at least 10 post-burn-in draws per chain, got {n}"
        )));
    }
    let p = chains.p();
    let mut r_hat = Vec::with_capacity(p);
    let mut between = Vec::with_capacity(p);
    let mut within = Vec::with_capacity(p);
    for j in 0..p {
        let per_chain: Vec<Vec<f64>> = (0..m)
            .map(|c| {
                let d = chains.chain(c);
                (chains.burn_in()..d.nrows()).map(|i| d[(i, j)]).collect()
            })
            .collect();
        let means: Vec<f64> = per_chain
            .iter()
            .map(|xs| xs.iter().sum::<f64>() / n as f64)
            .collect();
        let grand = means.iter().sum::<f64>() / m as f64;
        let b = n as f64 / (m - 1) as f64
            * means.iter().map(|&mu| (mu - grand).powi(2)).sum::<f64>();
        let w = per_chain
            .iter()
            .zip(&means)
            .map(|(xs, &mu)| {
                xs.iter().map(|&x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64
            })
            .sum::<f64>()
            / m as f64;
        between.push(b);
        within.push(w);
        if w <= 0.0 {
            r_hat.push(None);
        } else {
            let var_plus = (n - 1) as f64 / n as f64 * w + b / n as f64;
            r_hat.push(Some((var_plus / w).sqrt()));
        }
    }
    Ok(GelmanRubinReport {
        r_hat,
        between,
        within,
        chains: m,
        draws_per_chain: n,
    })
}

// ---------------------------------------------------------------------------
// Univariate CMP simulation
// ---------------------------------------------------------------------------

/// Log of the unnormalised CMP masses on `0..=cap`.
fn cmp_log_table(theta1: f64, theta2: f64, cap: u64) -> Vec<f64> {
    (0..=cap)
        .map(|x| x as f64 * theta1.ln() - theta2 * ln_factorial(x))
        .collect()
}

/// Exact draws from CMP(θ₁, θ₂).
///
/// For θ₂ ≥ 1 the tails are no heavier than Poisson(θ₁), so plain
/// rejection with a Poisson proposal and envelope
/// `max_x p̃(x)/q̃(x) = 1` (at x = 0) samples the untruncated law. For
/// θ₂ < 1 that envelope over the truncation range is astronomically loose
/// — the ratio `(x!)^{1−θ₂}` peaks at the truncation bound — so the
/// sampler instead draws by inverse CDF from the mass table normalised by
/// the truncated constant `Z ≈ Σ_{y=0}^{99}`, which is the distribution
/// that truncated normaliser defines. If the truncation visibly clips the
/// target (boundary mass above 1e−12 of the total), the draw is refused
/// with instructions to widen the truncation rather than silently biased.
pub fn sample_cmp_rejection<R: Rng>(
    theta1: f64,
    theta2: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<i64>> {
    if !(theta1 > 0.0) || !theta1.is_finite() || !(theta2 >= 0.0) || !theta2.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "CMP parameters need θ₁ > 0 and θ₂ ≥ 0, got ({theta1}, {theta2})"
        )));
    }
    let mut out = Vec::with_capacity(n);
    if theta2 >= 1.0 {
        // Acceptance probability (y!)^{1−θ₂} ≤ 1, exact for the full law.
        let pois = rand_distr::Poisson::new(theta1)
            .map_err(|e| Error::Sampler(format!("invalid Poisson proposal: {e}")))?;
        while out.len() < n {
            let y = rng.sample(pois) as u64;
            let log_accept = (1.0 - theta2) * ln_factorial(y);
            if rng.random::<f64>().ln() < log_accept {
                out.push(y as i64);
            }
        }
        return Ok(out);
    }

    let log_table = cmp_log_table(theta1, theta2, CMP_TRUNCATION);
    let log_z = log_sum_exp(&log_table);
    let boundary_share = (log_table[CMP_TRUNCATION as usize] - log_z).exp();
    if boundary_share > 1e-12 {
        return Err(Error::Sampler(format!(
            "CMP({theta1}, {theta2}) keeps mass {boundary_share:.2e} at the truncation bound \
             {CMP_TRUNCATION}; widen the truncation to sample this over-dispersed regime"
        )));
    }
    let cdf: Vec<f64> = log_table
        .iter()
        .scan(0.0f64, |acc, &lw| {
            *acc += (lw - log_z).exp();
            Some(*acc)
        })
        .collect();
    for _ in 0..n {
        let u: f64 = rng.random();
        let idx = cdf.partition_point(|&c| c < u);
        out.push(idx.min(CMP_TRUNCATION as usize) as i64);
    }
    Ok(out)
}

/// Simulate a count series from the autoregressive CMP recursion: each
/// step draws `x_t ~ CMP(λ_t, θ₃)` with `log λ_t = θ₁ + φ log λ_{t−1} +
/// θ₂ log(1 + x_{t−1})`. The first observation uses the fixed initial
/// intensity directly.
pub fn simulate_ingarch<R: Rng>(
    model: &IngarchCmp,
    theta: &DVector<f64>,
    len: usize,
    rng: &mut R,
) -> Result<Vec<i64>> {
    if theta.len() != 3 {
        return Err(Error::InvalidSpec("the series model has three parameters".into()));
    }
    let mut out = Vec::with_capacity(len);
    let mut log_lambda = model.lambda0().ln();
    for t in 0..len {
        if t > 0 {
            log_lambda = theta[0]
                + model.ar_phi() * log_lambda
                + theta[1] * ((1 + out[t - 1]) as f64).ln();
        }
        let x = sample_cmp_rejection(log_lambda.exp(), theta[2], 1, rng)?[0];
        out.push(x);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Lattice Gibbs sampling
// ---------------------------------------------------------------------------

/// Conditional distribution of one site given the rest:
/// `p(s | nb) ∝ exp(ηᵀ · local statistic)`.
pub fn site_conditional(model: &MrfModel, eta: &DVector<f64>, lat: &Lattice, site: usize) -> Vec<f64> {
    let states = model.states().values();
    let log_w: Vec<f64> = states
        .iter()
        .map(|&s| eta.dot(&model.local_statistic(lat, site, s)))
        .collect();
    let lse = log_sum_exp(&log_w);
    log_w.iter().map(|&lw| (lw - lse).exp()).collect()
}

fn gibbs_update_site<R: Rng>(
    model: &MrfModel,
    eta: &DVector<f64>,
    lat: &mut Lattice,
    site: usize,
    rng: &mut R,
) {
    let probs = site_conditional(model, eta, lat, site);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let values = model.states().values();
    let mut chosen = values[values.len() - 1];
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            chosen = values[i];
            break;
        }
    }
    lat.set(site, chosen);
}

/// One random-scan Gibbs sweep: `sites` single-site updates at uniformly
/// random positions.
fn gibbs_sweep<R: Rng>(model: &MrfModel, eta: &DVector<f64>, lat: &mut Lattice, rng: &mut R) {
    let sites = model.geometry().sites();
    for _ in 0..sites {
        let site = rng.random_range(0..sites);
        gibbs_update_site(model, eta, lat, site, rng);
    }
}

/// A Gibbs run's end state plus its per-sweep magnetisation trace.
#[derive(Clone, Debug)]
pub struct GibbsTrace {
    pub lattice: Lattice,
    /// Mean site value after each sweep — the standard mixing monitor.
    pub magnetisation: Vec<f64>,
}

/// Random-scan single-site Gibbs on a lattice model.
///
/// Starts from `init` when given, otherwise from independent uniform
/// states. Records the average site value after every sweep.
pub fn gibbs_lattice<R: Rng>(
    model: &MrfModel,
    eta: &DVector<f64>,
    sweeps: usize,
    init: Option<&Lattice>,
    rng: &mut R,
) -> Result<GibbsTrace> {
    if eta.len() != model.dim() {
        return Err(Error::InvalidSpec(format!(
            "parameter length {} disagrees with model dimension {}",
            eta.len(),
            model.dim()
        )));
    }
    let mut lat = match init {
        Some(l) => {
            if l.geom != model.geometry() || l.states != *model.states() {
                return Err(Error::BadData(
                    "initial lattice disagrees with the model geometry or states".into(),
                ));
            }
            l.clone()
        }
        None => {
            let values = model.states().values().to_vec();
            let geom = model.geometry();
            let data: Vec<i64> = (0..geom.sites())
                .map(|_| values[rng.random_range(0..values.len())])
                .collect();
            Lattice::new(geom, model.states().clone(), data)
                .expect("uniform draws lie in the state set")
        }
    };
    let mut magnetisation = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        gibbs_sweep(model, eta, &mut lat, rng);
        magnetisation.push(lat.mean_value());
    }
    Ok(GibbsTrace {
        lattice: lat,
        magnetisation,
    })
}

// ---------------------------------------------------------------------------
// Random-walk Metropolis-Hastings
// ---------------------------------------------------------------------------

/// Random-walk MH settings. Draws for all iterations are recorded;
/// consumers drop `burn_in`.
#[derive(Clone, Debug)]
pub struct RwmhConfig {
    pub iters: usize,
    pub burn_in: usize,
    pub chains: usize,
    /// Per-coordinate Gaussian proposal standard deviations.
    pub scales: DVector<f64>,
}

impl RwmhConfig {
    /// Default proposal scale: a tenth of the prior standard deviation in
    /// each coordinate.
    pub fn with_prior_scales(prior: &GaussianPrior, iters: usize, chains: usize) -> Self {
        let scales = DVector::from_fn(prior.p(), |j, _| 0.1 * prior.sigma()[(j, j)].sqrt());
        RwmhConfig {
            iters,
            burn_in: iters / 4,
            chains,
            scales,
        }
    }
}

/// Random-walk Metropolis-Hastings with Gaussian proposals, one RNG
/// stream per chain. The target is any log density known up to a
/// constant. A NaN from the target aborts with the offending parameter;
/// −∞ simply rejects.
pub fn rwmh<F>(
    log_target: F,
    init: &DVector<f64>,
    cfg: &RwmhConfig,
    rng_spec: &RngSpec,
) -> Result<ChainSet>
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    if cfg.chains == 0 || cfg.iters == 0 {
        return Err(Error::InvalidSpec("need at least one chain and one iteration".into()));
    }
    if cfg.scales.len() != init.len() || cfg.scales.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidSpec(
            "proposal scales must be positive, one per coordinate".into(),
        ));
    }
    let lp0 = log_target(init);
    if !lp0.is_finite() {
        return Err(Error::Sampler(format!(
            "log target is {lp0} at the initial point {init:?}"
        )));
    }
    rng_spec.rng()?; // validate the algorithm up front
    let chain_ids: Vec<u64> = (0..cfg.chains as u64).collect();
    let results: Vec<Result<(DMatrix<f64>, f64)>> = exec::map_ordered(&chain_ids, |&c| {
        let mut rng = rng_spec.with_stream(c).rng()?;
        let p = init.len();
        let mut draws = DMatrix::zeros(cfg.iters, p);
        let mut state = init.clone();
        let mut lp = lp0;
        let mut accepted = 0usize;
        for i in 0..cfg.iters {
            let prop = DVector::from_fn(p, |j, _| {
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                state[j] + cfg.scales[j] * z
            });
            let lp_prop = log_target(&prop);
            if lp_prop.is_nan() {
                return Err(Error::Sampler(format!(
                    "log target returned NaN at {prop:?}"
                )));
            }
            // ln u < lp' − lp; −∞ proposals always fail this.
            if rng.random::<f64>().ln() < lp_prop - lp {
                state = prop;
                lp = lp_prop;
                accepted += 1;
            }
            draws.row_mut(i).copy_from(&state.transpose());
        }
        Ok((draws, accepted as f64 / cfg.iters as f64))
    });
    let mut draws = Vec::with_capacity(cfg.chains);
    let mut acceptance = Vec::with_capacity(cfg.chains);
    for r in results {
        let (d, a) = r?;
        draws.push(d);
        acceptance.push(a);
    }
    let names = (0..init.len()).map(|j| format!("theta{}", j + 1)).collect();
    ChainSet::new(names, draws, acceptance, cfg.burn_in)
}

// ---------------------------------------------------------------------------
// Metropolis-within-Gibbs for the count time series
// ---------------------------------------------------------------------------

/// Settings for the partial-conjugacy sampler: θ|φ is an exact Gaussian
/// draw, φ|θ moves by a small random walk.
#[derive(Clone, Debug)]
pub struct MwgIngarchConfig {
    pub beta: f64,
    pub iters: usize,
    pub burn_in: usize,
    pub chains: usize,
    /// Standard deviation of the φ random-walk proposal; zero freezes φ.
    pub phi_proposal_sd: f64,
    /// Random-walk updates of φ per outer iteration.
    pub phi_updates_per_iter: usize,
    pub phi_init: f64,
    /// Gaussian prior on φ: mean and standard deviation.
    pub phi_prior_mu: f64,
    pub phi_prior_sd: f64,
    pub lambda0: f64,
}

impl Default for MwgIngarchConfig {
    fn default() -> Self {
        MwgIngarchConfig {
            beta: 1.0,
            iters: 5000,
            burn_in: 3000,
            chains: 4,
            phi_proposal_sd: 0.01,
            phi_updates_per_iter: 10,
            phi_init: 0.0,
            phi_prior_mu: 0.0,
            phi_prior_sd: 0.01,
            lambda0: 1.0,
        }
    }
}

/// Metropolis-within-Gibbs over (θ, φ) for the autoregressive count
/// model: alternate an exact conjugate Gaussian draw of θ given φ with
/// random-walk updates of φ given θ. Proposals with |φ| ≥ 1 are rejected
/// outright. Draw columns are `theta1, theta2, theta3, phi`.
///
/// `prior` lives on the natural scale η = (θ₁, θ₂, −θ₃); a θ-space
/// Gaussian prior maps onto it by flipping the third coordinate.
pub fn metropolis_within_gibbs_ingarch(
    series: &[i64],
    m: &MatchingSet,
    qhat: &SmoothedPmf,
    prior: &GaussianPrior,
    cfg: &MwgIngarchConfig,
    rng_spec: &RngSpec,
) -> Result<ChainSet>
where
{
    if series.len() < 2 {
        return Err(Error::BadData(
            "a series of at least two observations is needed".into(),
        ));
    }
    if prior.p() != 3 {
        return Err(Error::InvalidSpec("the series model has three parameters".into()));
    }
    if !(cfg.phi_init.abs() < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "initial AR weight must satisfy |φ| < 1, got {}",
            cfg.phi_init
        )));
    }
    rng_spec.rng()?;

    let loss_at = |phi: f64| -> Result<QuadraticLoss> {
        let model = IngarchCmp::new(phi, cfg.lambda0)?;
        ingarch_quadratic(&model, series, m, qhat)
    };
    // Fail fast if the initial point is unusable.
    loss_at(cfg.phi_init)?;

    let phi_log_prior = |phi: f64| -> f64 {
        let z = (phi - cfg.phi_prior_mu) / cfg.phi_prior_sd;
        -0.5 * z * z
    };

    let chain_ids: Vec<u64> = (0..cfg.chains as u64).collect();
    let results: Vec<Result<(DMatrix<f64>, f64)>> = exec::map_ordered(&chain_ids, |&c| {
        let mut rng = rng_spec.with_stream(c).rng()?;
        let mut phi = cfg.phi_init;
        let mut loss = loss_at(phi)?;
        let mut draws = DMatrix::zeros(cfg.iters, 4);
        let mut phi_accepted = 0usize;
        let mut phi_proposed = 0usize;
        for i in 0..cfg.iters {
            // (a) θ | φ: exact conjugate Gaussian draw on η.
            let post = conjugate_update(prior, &loss, cfg.beta)?;
            let eta = post.sample_unconstrained(&mut rng);

            // (b) φ | θ: random-walk Metropolis, several small steps.
            if cfg.phi_proposal_sd > 0.0 {
                let bn = cfg.beta * loss.n() as f64;
                let mut cur_obj = -bn * loss.eval(&eta) + phi_log_prior(phi);
                for _ in 0..cfg.phi_updates_per_iter {
                    phi_proposed += 1;
                    let z: f64 =
                        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                    let phi_prop = phi + cfg.phi_proposal_sd * z;
                    if phi_prop.abs() >= 1.0 {
                        continue; // stationarity guard: reject outright
                    }
                    let loss_prop = loss_at(phi_prop)?;
                    let obj_prop =
                        -cfg.beta * loss_prop.n() as f64 * loss_prop.eval(&eta) + phi_log_prior(phi_prop);
                    if rng.random::<f64>().ln() < obj_prop - cur_obj {
                        phi = phi_prop;
                        loss = loss_prop;
                        cur_obj = obj_prop;
                        phi_accepted += 1;
                    }
                }
            }
            draws[(i, 0)] = eta[0];
            draws[(i, 1)] = eta[1];
            draws[(i, 2)] = -eta[2]; // θ₃ = −η₃
            draws[(i, 3)] = phi;
        }
        let rate = if phi_proposed == 0 {
            // φ frozen: the Gibbs step is exact, every draw "accepted".
            1.0
        } else {
            phi_accepted as f64 / phi_proposed as f64
        };
        Ok((draws, rate))
    });
    let mut draws = Vec::with_capacity(cfg.chains);
    let mut acceptance = Vec::with_capacity(cfg.chains);
    for r in results {
        let (d, a) = r?;
        draws.push(d);
        acceptance.push(a);
    }
    ChainSet::new(
        vec!["theta1".into(), "theta2".into(), "theta3".into(), "phi".into()],
        draws,
        acceptance,
        cfg.burn_in,
    )
}

// ---------------------------------------------------------------------------
// Exchange MCMC for lattice models
// ---------------------------------------------------------------------------

/// Exchange-algorithm settings. The auxiliary lattice is drawn by
/// `inner_sweeps` Gibbs sweeps at the proposed parameter, started from
/// the observed data.
#[derive(Clone, Debug)]
pub struct ExchangeConfig {
    pub iters: usize,
    pub burn_in: usize,
    pub chains: usize,
    pub inner_sweeps: usize,
    pub proposal_sd: f64,
    pub theta_init: DVector<f64>,
    pub prior_mu: DVector<f64>,
    pub prior_sd: DVector<f64>,
}

/// Exchange MCMC for a lattice exponential family observed once.
///
/// Each step proposes θ', simulates an auxiliary lattice at θ', and
/// accepts with the exchange ratio
/// `p̃_{θ'}(x) p̃_θ(x_aux) / (p̃_θ(x) p̃_{θ'}(x_aux))` times the prior
/// ratio — the intractable normaliser cancels because the auxiliary
/// sample swaps parameters with the data. The auxiliary draw is
/// approximate (finitely many Gibbs sweeps), which is the standard
/// practical compromise.
pub fn exchange_mcmc_lattice(
    model: &MrfModel,
    data: &Lattice,
    cfg: &ExchangeConfig,
    rng_spec: &RngSpec,
) -> Result<ChainSet> {
    let p = model.dim();
    if cfg.theta_init.len() != p || cfg.prior_mu.len() != p || cfg.prior_sd.len() != p {
        return Err(Error::InvalidSpec(format!(
            "parameter vectors must have the model dimension {p}"
        )));
    }
    if data.geom != model.geometry() || data.states != *model.states() {
        return Err(Error::BadData(
            "observed lattice disagrees with the model geometry or states".into(),
        ));
    }
    rng_spec.rng()?;
    let t_data = model.sufficient_lattice(data);
    let log_prior = |theta: &DVector<f64>| -> f64 {
        (0..p)
            .map(|j| {
                let z = (theta[j] - cfg.prior_mu[j]) / cfg.prior_sd[j];
                -0.5 * z * z
            })
            .sum()
    };

    let chain_ids: Vec<u64> = (0..cfg.chains as u64).collect();
    let results: Vec<Result<(DMatrix<f64>, f64)>> = exec::map_ordered(&chain_ids, |&c| {
        let mut rng = rng_spec.with_stream(c).rng()?;
        let mut theta = cfg.theta_init.clone();
        let mut draws = DMatrix::zeros(cfg.iters, p);
        let mut accepted = 0usize;
        for i in 0..cfg.iters {
            let prop = DVector::from_fn(p, |j, _| {
                let z: f64 =
                    rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                theta[j] + cfg.proposal_sd * z
            });
            // Auxiliary lattice at the proposed parameter, warm-started at
            // the data.
            let aux = gibbs_lattice(model, &prop, cfg.inner_sweeps, Some(data), &mut rng)?;
            let t_aux = model.sufficient_lattice(&aux.lattice);
            let log_ratio =
                (&prop - &theta).dot(&(&t_data - &t_aux)) + log_prior(&prop) - log_prior(&theta);
            if rng.random::<f64>().ln() < log_ratio {
                theta = prop;
                accepted += 1;
            }
            draws.row_mut(i).copy_from(&theta.transpose());
        }
        Ok((draws, accepted as f64 / cfg.iters as f64))
    });
    let mut draws = Vec::with_capacity(cfg.chains);
    let mut acceptance = Vec::with_capacity(cfg.chains);
    for r in results {
        let (d, a) = r?;
        draws.push(d);
        acceptance.push(a);
    }
    let names = (0..p).map(|j| format!("theta{}", j + 1)).collect();
    ChainSet::new(names, draws, acceptance, cfg.burn_in)
}

// ---------------------------------------------------------------------------
// Posterior predictive for the graphical count model
// ---------------------------------------------------------------------------

/// Settings for the x-space MH chain behind each predictive draw.
#[derive(Clone, Debug)]
pub struct PredictiveConfig {
    pub burn_in: usize,
    pub thin: usize,
    /// Chain start; all-zeros when absent.
    pub init: Option<StatePoint>,
}

impl Default for PredictiveConfig {
    fn default() -> Self {
        PredictiveConfig {
            burn_in: 400,
            thin: 4,
            init: None,
        }
    }
}

/// Posterior predictive draws for the graphical count model: for each
/// retained observation one parameter draw θ ~ posterior, then a
/// single-coordinate ±1 random-walk MH chain on x-space targetting
/// p̃_θ. The proposal is symmetric, so acceptance is the bare mass ratio;
/// moves below zero are rejected.
pub fn mh_posterior_predictive_cmp_graphical(
    model: &CmpGraphical,
    posterior: &ThetaPosterior,
    n_draws: usize,
    cfg: &PredictiveConfig,
    rng_spec: &RngSpec,
) -> Result<Vec<StatePoint>> {
    let d = model.d();
    if posterior.eta().p() != model.dim() {
        return Err(Error::InvalidSpec(format!(
            "posterior dimension {} disagrees with the model's {}",
            posterior.eta().p(),
            model.dim()
        )));
    }
    let init = match &cfg.init {
        Some(x) => {
            if !model.domain().contains(x) {
                return Err(Error::BadData("predictive chain start is outside the domain".into()));
            }
            x.clone()
        }
        None => StatePoint::new(vec![0; d]),
    };
    let mut rng = rng_spec.rng()?;
    let thetas = posterior.sample_many(&mut rng, n_draws);
    let mut out = Vec::with_capacity(n_draws);
    let mut x = init.clone();
    for theta in &thetas {
        let mut log_mass = model.log_mass_unnorm(theta, &x);
        let moves = cfg.burn_in.max(1) + cfg.thin;
        for _ in 0..moves {
            let coord = rng.random_range(0..d);
            let step = if rng.random::<bool>() { 1 } else { -1 };
            let proposed = x.get(coord) + step;
            if proposed < 0 {
                continue;
            }
            let x_prop = x.with_coord(coord, proposed);
            let lm_prop = model.log_mass_unnorm(theta, &x_prop);
            if rng.random::<f64>().ln() < lm_prop - log_mass {
                x = x_prop;
                log_mass = lm_prop;
            }
        }
        out.push(x.clone());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Truncated normal
// ---------------------------------------------------------------------------

/// One draw from `N(mu, sd²)` conditioned on exceeding `lower`.
///
/// Near and below the mean this is plain rejection from the Gaussian; in
/// the deep tail it switches to the shifted-exponential envelope whose
/// acceptance stays bounded away from zero however far out `lower` sits.
pub fn truncated_normal_below<R: Rng>(rng: &mut R, mu: f64, sd: f64, lower: f64) -> f64 {
    debug_assert!(sd > 0.0);
    let a = (lower - mu) / sd;
    let z = if a < 0.5 {
        loop {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            if z > a {
                break z;
            }
        }
    } else {
        let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e: f64 = rng.random::<f64>();
            let z = a - e.ln() / alpha;
            let accept = -0.5 * (z - alpha) * (z - alpha);
            if rng.random::<f64>().ln() < accept {
                break z;
            }
        }
    };
    mu + sd * z
}
