//! The log-ratio matching divergence and its conjugate machinery.
//!
//! For a model `p` and data PMF `q`, the divergence compares log mass
//! ratios along matching-set neighbours:
//!
//! ```text
//! D(q ‖ p) = E_{x~q} (1/|M(x)|) Σ_{x'∈M(x)} (log p(x')/p(x) − log q(x')/q(x))²
//! ```
//!
//! Ratios kill the normalising constant, so `p` only ever enters through
//! unnormalised masses. For an exponential family `log p(x')/p(x) =
//! ηᵀΔT + ΔB`, which makes the sample loss *exactly quadratic* in η:
//!
//! ```text
//! L̂(η) = ηᵀ Λ_n η − 2 ηᵀ ν_n + c_n
//! ```
//!
//! and the generalised posterior under a Gaussian prior is again Gaussian:
//! `Σ_n = (Σ⁻¹ + 2βn Λ_n)⁻¹`, `μ_n = Σ_n (Σ⁻¹μ + 2βn ν_n)`. That closed
//! form is the whole point: fitting is a handful of Cholesky solves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{MatchingSet, StatePoint};
use crate::exec;
use crate::linalg;
use crate::models::ExpFamily;
use crate::numeric::ln_factorial;
use crate::pmf::{FinitePmf, LogRatio, SmoothedPmf};
use crate::{Error, Result};

/// Hard cap on exact divergence evaluation.
const DIVERGENCE_STATE_CAP: u64 = 100_000;

// ---------------------------------------------------------------------------
// Quadratic loss
// ---------------------------------------------------------------------------

/// The assembled quadratic loss `ηᵀ Λ η − 2 ηᵀ ν + c` with its sample count.
#[derive(Clone, Debug)]
pub struct QuadraticLoss {
    lambda: DMatrix<f64>,
    nu: DVector<f64>,
    c: f64,
    n: u64,
}

impl QuadraticLoss {
    pub fn new(lambda: DMatrix<f64>, nu: DVector<f64>, c: f64, n: u64) -> Result<Self> {
        let p = nu.len();
        if lambda.nrows() != p || lambda.ncols() != p {
            return Err(Error::InvalidSpec(format!(
                "loss matrix is {}x{} but the vector has length {p}",
                lambda.nrows(),
                lambda.ncols()
            )));
        }
        let asym = (0..p)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| (lambda[(i, j)] - lambda[(j, i)]).abs())
            .fold(0.0f64, f64::max);
        if asym > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "loss matrix asymmetric by {asym:.2e}"
            )));
        }
        Ok(QuadraticLoss { lambda, nu, c, n })
    }

    pub fn p(&self) -> usize {
        self.nu.len()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn nu(&self) -> &DVector<f64> {
        &self.nu
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Evaluate `ηᵀΛη − 2ηᵀν + c`.
    pub fn eval(&self, eta: &DVector<f64>) -> f64 {
        (eta.transpose() * &self.lambda * eta)[(0, 0)] - 2.0 * eta.dot(&self.nu) + self.c
    }
}

#[derive(Serialize, Deserialize)]
struct QuadraticLossRepr {
    #[serde(rename = "Lambda")]
    lambda: Vec<Vec<f64>>,
    nu: Vec<f64>,
    c: f64,
    n: u64,
    p: usize,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_matrix(rows: &[Vec<f64>], p: usize) -> std::result::Result<DMatrix<f64>, String> {
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(format!("expected a {p}x{p} row-major matrix"));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

impl Serialize for QuadraticLoss {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        QuadraticLossRepr {
            lambda: matrix_rows(&self.lambda),
            nu: self.nu.iter().copied().collect(),
            c: self.c,
            n: self.n,
            p: self.p(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for QuadraticLoss {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = QuadraticLossRepr::deserialize(d)?;
        let lambda = rows_matrix(&r.lambda, r.p).map_err(serde::de::Error::custom)?;
        if r.nu.len() != r.p {
            return Err(serde::de::Error::custom("nu length disagrees with p"));
        }
        QuadraticLoss::new(lambda, DVector::from_vec(r.nu), r.c, r.n)
            .map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Prior / posterior
// ---------------------------------------------------------------------------

/// Gaussian prior on the natural parameter η.
#[derive(Clone, Debug)]
pub struct GaussianPrior {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
}

impl GaussianPrior {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != mu.len() || sigma.ncols() != mu.len() {
            return Err(Error::InvalidSpec("prior dimensions disagree".into()));
        }
        // The prior must be genuinely positive definite; no jitter excuses.
        if nalgebra::Cholesky::new(sigma.clone()).is_none() {
            return Err(Error::NotPositiveDefinite {
                context: "prior covariance".into(),
                cond: linalg::condition_estimate(&sigma),
            });
        }
        Ok(GaussianPrior { mu, sigma })
    }

    /// Isotropic prior `N(mean · 1, sd² I)`.
    pub fn isotropic(p: usize, mean: f64, sd: f64) -> Result<Self> {
        GaussianPrior::new(
            DVector::from_element(p, mean),
            DMatrix::from_diagonal_element(p, p, sd * sd),
        )
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }

    /// Log density up to the normalising constant.
    pub fn log_density_unnorm(&self, eta: &DVector<f64>) -> f64 {
        let diff = eta - &self.mu;
        let sol = linalg::spd_solve(&self.sigma, &diff, "prior covariance")
            .expect("prior covariance validated at construction");
        -0.5 * diff.dot(&sol)
    }
}

/// Sign restriction on one coordinate of η.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignConstraint {
    Negative,
    Positive,
}

/// Closed-form Gaussian generalised posterior on η, possibly carrying
/// per-coordinate sign constraints (the truncated case).
#[derive(Clone, Debug)]
pub struct GaussianPosterior {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    constraints: Option<Vec<Option<SignConstraint>>>,
}

impl GaussianPosterior {
    pub fn new(
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        constraints: Option<Vec<Option<SignConstraint>>>,
    ) -> Result<Self> {
        if sigma.nrows() != mu.len() || sigma.ncols() != mu.len() {
            return Err(Error::InvalidSpec("posterior dimensions disagree".into()));
        }
        if let Some(c) = &constraints {
            if c.len() != mu.len() {
                return Err(Error::InvalidSpec(
                    "constraint list length disagrees with dimension".into(),
                ));
            }
        }
        Ok(GaussianPosterior {
            mu,
            sigma,
            constraints,
        })
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }

    pub fn constraints(&self) -> Option<&[Option<SignConstraint>]> {
        self.constraints.as_deref()
    }

    pub fn with_constraints(mut self, constraints: Vec<Option<SignConstraint>>) -> Result<Self> {
        if constraints.len() != self.mu.len() {
            return Err(Error::InvalidSpec(
                "constraint list length disagrees with dimension".into(),
            ));
        }
        self.constraints = Some(constraints);
        Ok(self)
    }

    /// One unconstrained draw `μ + L z`, `L` the Cholesky factor of Σ.
    ///
    /// Constrained posteriors are sampled through the transform layer in
    /// [`crate::models::ThetaPosterior`], not here.
    pub fn sample_unconstrained<R: rand::Rng>(&self, rng: &mut R) -> DVector<f64> {
        let (ch, _) = linalg::cholesky_spd(&self.sigma, "posterior covariance")
            .expect("posterior covariance validated at construction");
        let z = DVector::from_fn(self.p(), |_, _| {
            rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
        });
        &self.mu + ch.l() * z
    }

    /// Squared Mahalanobis distance of a point from the posterior mean.
    pub fn mahalanobis_sq(&self, eta: &DVector<f64>) -> Result<f64> {
        let diff = eta - &self.mu;
        let sol = linalg::spd_solve(&self.sigma, &diff, "posterior covariance")?;
        Ok(diff.dot(&sol))
    }
}

#[derive(Serialize, Deserialize)]
struct GaussianPosteriorRepr {
    mu: Vec<f64>,
    #[serde(rename = "Sigma")]
    sigma: Vec<Vec<f64>>,
    constraints: Option<Vec<Option<SignConstraint>>>,
}

impl Serialize for GaussianPosterior {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GaussianPosteriorRepr {
            mu: self.mu.iter().copied().collect(),
            sigma: matrix_rows(&self.sigma),
            constraints: self.constraints.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianPosterior {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = GaussianPosteriorRepr::deserialize(d)?;
        let p = r.mu.len();
        let sigma = rows_matrix(&r.sigma, p).map_err(serde::de::Error::custom)?;
        GaussianPosterior::new(DVector::from_vec(r.mu), sigma, r.constraints)
            .map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

/// Per-observation weight in the robustified loss.
#[derive(Clone, Debug)]
pub enum WeightFunction {
    /// `w ≡ 1`: the plain unweighted loss.
    Constant,
    /// Product of Poisson masses at the per-coordinate medians. Downweights
    /// observations far from the bulk, which is what buys outlier
    /// robustness.
    PoissonMarginals { mu: Vec<f64>, zero_median: bool },
}

impl WeightFunction {
    pub fn log_weight(&self, x: &StatePoint) -> f64 {
        match self {
            WeightFunction::Constant => 0.0,
            WeightFunction::PoissonMarginals { mu, .. } => {
                debug_assert_eq!(mu.len(), x.dim());
                let mut acc = 0.0;
                for (j, &m) in mu.iter().enumerate() {
                    let v = x.get(j);
                    debug_assert!(v >= 0);
                    if m == 0.0 {
                        // 0^0 = 1 convention: only x_j = 0 keeps mass.
                        if v != 0 {
                            return f64::NEG_INFINITY;
                        }
                    } else {
                        acc += -m + v as f64 * m.ln() - ln_factorial(v as u64);
                    }
                }
                acc
            }
        }
    }

    pub fn weight(&self, x: &StatePoint) -> f64 {
        match self {
            WeightFunction::Constant => 1.0,
            _ => self.log_weight(x).exp(),
        }
    }

    /// True when some coordinate's median was 0, making the weight
    /// degenerate on that coordinate. Callers should surface a warning.
    pub fn has_zero_median(&self) -> bool {
        matches!(
            self,
            WeightFunction::PoissonMarginals {
                zero_median: true,
                ..
            }
        )
    }
}

/// Build the Poisson-marginal weight from per-coordinate sample medians.
pub fn poisson_weights(samples: &[StatePoint]) -> Result<WeightFunction> {
    let first = samples
        .first()
        .ok_or_else(|| Error::BadData("no samples for weight construction".into()))?;
    let d = first.dim();
    if samples
        .iter()
        .any(|x| x.dim() != d || x.coords().iter().any(|&v| v < 0))
    {
        return Err(Error::BadData(
            "Poisson-marginal weights need count-valued samples of one dimension".into(),
        ));
    }
    let mut mu = Vec::with_capacity(d);
    for j in 0..d {
        let mut col: Vec<i64> = samples.iter().map(|x| x.get(j)).collect();
        col.sort_unstable();
        let n = col.len();
        let med = if n % 2 == 1 {
            col[n / 2] as f64
        } else {
            (col[n / 2 - 1] as f64 + col[n / 2] as f64) / 2.0
        };
        mu.push(med);
    }
    let zero_median = mu.iter().any(|&m| m == 0.0);
    Ok(WeightFunction::PoissonMarginals { mu, zero_median })
}

// ---------------------------------------------------------------------------
// Exact divergence
// ---------------------------------------------------------------------------

/// Exact divergence between two explicit PMFs on a shared finite domain.
///
/// Zero iff `p = q` whenever the matching-set graph is connected; on a
/// disconnected graph distinct distributions can agree on every ratio and
/// score zero. Requires `p > 0` on (and one matching step around) the
/// support of `q`; a `q`-null neighbour of a supported state sends the
/// divergence to `+∞`, which is returned rather than raised.
pub fn lrm_divergence_exact(q: &FinitePmf, p: &FinitePmf, m: &MatchingSet) -> Result<f64> {
    if q.domain() != p.domain() {
        return Err(Error::InvalidSpec(
            "divergence needs both PMFs on one domain".into(),
        ));
    }
    let domain = q.domain();
    if let Some(size) = domain.size() {
        if size > DIVERGENCE_STATE_CAP as u128 {
            return Err(Error::TooLarge {
                size,
                cap: DIVERGENCE_STATE_CAP,
            });
        }
    }

    let mut total = 0.0;
    for (x, qx) in q.iter_sorted() {
        if qx == 0.0 {
            continue;
        }
        let px = p.mass(x);
        if px == 0.0 {
            return Err(Error::BadPmf(format!(
                "model mass is zero at {x:?}, inside the data support"
            )));
        }
        let nbs = m.neighbours(domain, x);
        if nbs.is_empty() {
            continue;
        }
        let mut inner = 0.0;
        for nb in &nbs {
            let p_nb = p.mass(nb);
            if p_nb == 0.0 {
                return Err(Error::BadPmf(format!(
                    "model mass is zero at {nb:?}, reachable from the data support"
                )));
            }
            let q_nb = q.mass(nb);
            if q_nb == 0.0 {
                return Ok(f64::INFINITY);
            }
            let diff = (p_nb.ln() - px.ln()) - (q_nb.ln() - qx.ln());
            inner += diff * diff;
        }
        total += qx * inner / nbs.len() as f64;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Loss assembly
// ---------------------------------------------------------------------------

/// Running sums for Λ, ν, c over loss terms.
pub(crate) struct QuadAcc {
    lambda: DMatrix<f64>,
    nu: DVector<f64>,
    c: f64,
    kept_terms: u64,
}

impl QuadAcc {
    pub(crate) fn new(p: usize) -> Self {
        QuadAcc {
            lambda: DMatrix::zeros(p, p),
            nu: DVector::zeros(p),
            c: 0.0,
            kept_terms: 0,
        }
    }

    /// Add one `(x, x')` term with combined weight `scale = w_i / |M(x_i)|`:
    /// `Λ += scale·ΔT ΔTᵀ`, `ν += scale·ΔT (ĝ − ΔB)`,
    /// `c += scale·(ΔB² − 2 ΔB ĝ)` where `ĝ` is the data log-ratio.
    pub(crate) fn add_term(&mut self, dt: &DVector<f64>, scale: f64, ghat: f64, db: f64) {
        self.lambda.ger(scale, dt, dt, 1.0);
        self.nu.axpy(scale * (ghat - db), dt, 1.0);
        self.c += scale * (db * db - 2.0 * db * ghat);
        self.kept_terms += 1;
    }

    /// Accumulate every kept matching-set term of one observation.
    fn add_sample<Mo: ExpFamily + ?Sized>(
        &mut self,
        model: &Mo,
        x: &StatePoint,
        m: &MatchingSet,
        qhat: &SmoothedPmf,
        w_i: f64,
    ) -> Result<()> {
        if w_i == 0.0 {
            return Ok(());
        }
        let domain = model.domain();
        let nbs = m.neighbours(domain, x);
        if nbs.is_empty() {
            return Ok(());
        }
        let scale = w_i / nbs.len() as f64;
        let t_x = model.sufficient(x);
        let b_x = model.base(x);
        for nb in &nbs {
            // An Omitted data ratio drops the whole term — Λ included — so
            // Λ and ν always come from the same term set.
            let ghat = match qhat.log_ratio(nb, x)? {
                LogRatio::Value(v) => v,
                LogRatio::Omitted => continue,
            };
            let dt = model.sufficient(nb) - &t_x;
            let db = model.base(nb) - b_x;
            self.add_term(&dt, scale, ghat, db);
        }
        Ok(())
    }

    pub(crate) fn merge(mut self, other: QuadAcc) -> QuadAcc {
        self.lambda += other.lambda;
        self.nu += other.nu;
        self.c += other.c;
        self.kept_terms += other.kept_terms;
        self
    }

    /// Divide through by the sample count and package up.
    pub(crate) fn finalize(mut self, n: u64) -> Result<QuadraticLoss> {
        if self.kept_terms == 0 {
            return Err(Error::DegenerateLoss);
        }
        let inv_n = 1.0 / n as f64;
        self.lambda *= inv_n;
        self.nu *= inv_n;
        self.c *= inv_n;
        linalg::symmetrize(&mut self.lambda);
        QuadraticLoss::new(self.lambda, self.nu, self.c, n)
    }
}

fn check_samples<Mo: ExpFamily + ?Sized>(model: &Mo, samples: &[StatePoint]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::BadData("no samples".into()));
    }
    let domain = model.domain();
    if let Some(bad) = samples.iter().find(|x| !domain.contains(x)) {
        return Err(Error::BadData(format!(
            "sample {bad:?} lies outside the model domain"
        )));
    }
    Ok(())
}

/// Assemble `Λ_n`, `ν_n`, `c_n` from data.
///
/// Work is distributed over fixed-size sample chunks with an ordered
/// reduction, so the result is bit-identical across thread counts and to
/// [`build_quadratic_seq`].
pub fn build_quadratic(
    model: &(impl ExpFamily + ?Sized),
    samples: &[StatePoint],
    m: &MatchingSet,
    qhat: &SmoothedPmf,
    w: &WeightFunction,
) -> Result<QuadraticLoss> {
    check_samples(model, samples)?;
    let p = model.dim();
    let acc = exec::chunked_fold(
        samples.len(),
        |range| -> Result<QuadAcc> {
            let mut acc = QuadAcc::new(p);
            for x in &samples[range] {
                acc.add_sample(model, x, m, qhat, w.weight(x))?;
            }
            Ok(acc)
        },
        |a, b| match (a, b) {
            (Ok(a), Ok(b)) => Ok(a.merge(b)),
            (Err(e), _) | (_, Err(e)) => Err(e),
        },
        || Ok(QuadAcc::new(p)),
    )?;
    acc.finalize(samples.len() as u64)
}

/// Sequential reference implementation of [`build_quadratic`]; same
/// contract, same chunking, no thread pool. Kept public so the benchmark
/// suite can compare the two directly.
pub fn build_quadratic_seq(
    model: &(impl ExpFamily + ?Sized),
    samples: &[StatePoint],
    m: &MatchingSet,
    qhat: &SmoothedPmf,
    w: &WeightFunction,
) -> Result<QuadraticLoss> {
    check_samples(model, samples)?;
    let p = model.dim();
    let acc = exec::chunked_fold_seq(
        samples.len(),
        |range| -> Result<QuadAcc> {
            let mut acc = QuadAcc::new(p);
            for x in &samples[range] {
                acc.add_sample(model, x, m, qhat, w.weight(x))?;
            }
            Ok(acc)
        },
        |a, b| match (a, b) {
            (Ok(a), Ok(b)) => Ok(a.merge(b)),
            (Err(e), _) | (_, Err(e)) => Err(e),
        },
        || Ok(QuadAcc::new(p)),
    )?;
    acc.finalize(samples.len() as u64)
}

/// The loss evaluated directly from its definition, without the quadratic
/// rearrangement. This is the oracle [`build_quadratic`] is tested against:
/// for every η the two agree up to floating-point noise.
pub fn lrm_loss_direct(
    model: &(impl ExpFamily + ?Sized),
    eta: &DVector<f64>,
    samples: &[StatePoint],
    m: &MatchingSet,
    qhat: &SmoothedPmf,
    w: &WeightFunction,
) -> Result<f64> {
    check_samples(model, samples)?;
    if eta.len() != model.dim() {
        return Err(Error::InvalidSpec(format!(
            "η has length {} but the model dimension is {}",
            eta.len(),
            model.dim()
        )));
    }
    let domain = model.domain();
    let mut total = 0.0;
    let mut kept = 0u64;
    for x in samples {
        let w_i = w.weight(x);
        if w_i == 0.0 {
            continue;
        }
        let nbs = m.neighbours(domain, x);
        if nbs.is_empty() {
            continue;
        }
        let scale = w_i / nbs.len() as f64;
        let mut inner = 0.0;
        for nb in &nbs {
            let ghat = match qhat.log_ratio(nb, x)? {
                LogRatio::Value(v) => v,
                LogRatio::Omitted => continue,
            };
            let g_model = model.log_ratio(eta, nb, x);
            inner += g_model * g_model - 2.0 * g_model * ghat;
            kept += 1;
        }
        total += scale * inner;
    }
    if kept == 0 {
        return Err(Error::DegenerateLoss);
    }
    Ok(total / samples.len() as f64)
}

// ---------------------------------------------------------------------------
// Conjugate update and point estimate
// ---------------------------------------------------------------------------

/// Closed-form generalised-posterior update.
///
/// `Σ_n = (Σ⁻¹ + 2βn Λ_n)⁻¹` and `μ_n = Σ_n (Σ⁻¹ μ + 2βn ν_n)`, all through
/// Cholesky solves. β scales how much the loss counts relative to the
/// prior; n is carried by the loss.
pub fn conjugate_update(
    prior: &GaussianPrior,
    loss: &QuadraticLoss,
    beta: f64,
) -> Result<GaussianPosterior> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "loss weight β must be positive and finite, got {beta}"
        )));
    }
    if prior.p() != loss.p() {
        return Err(Error::InvalidSpec(format!(
            "prior dimension {} disagrees with loss dimension {}",
            prior.p(),
            loss.p()
        )));
    }
    let prior_precision = linalg::spd_inverse(prior.sigma(), "prior covariance")?;
    let scale = 2.0 * beta * loss.n() as f64;
    let mut precision = &prior_precision + loss.lambda() * scale;
    linalg::symmetrize(&mut precision);
    let (ch, _) = linalg::cholesky_spd(&precision, "posterior precision")?;
    let mut sigma_n = ch.inverse();
    linalg::symmetrize(&mut sigma_n);
    let rhs = &prior_precision * prior.mu() + loss.nu() * scale;
    let mu_n = ch.solve(&rhs);
    GaussianPosterior::new(mu_n, sigma_n, None)
}

/// The minimum-loss point `η̂ = Λ_n⁻¹ ν_n`.
///
/// Rank deficiency is detected by eigenvalue ratio *before* solving — the
/// jitter ladder must not paper over a genuinely underdetermined fit.
pub fn min_lrm_estimate(loss: &QuadraticLoss) -> Result<DVector<f64>> {
    let eig = loss.lambda().clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= max * 1e-10 {
        return Err(Error::Numerical(format!(
            "loss matrix is rank-deficient (eigenvalue range [{min:.3e}, {max:.3e}]); \
             a larger matching set adds the missing directions"
        )));
    }
    linalg::spd_solve(loss.lambda(), loss.nu(), "loss matrix")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_offset_matching_set, DomainSpec, StateSet};
    use crate::models::CmpUnivariate;
    use crate::pmf::{fit_empirical, smooth, BasePmf};
    use approx::assert_relative_eq;
    use rand::prelude::*;

    fn two_state_domain() -> DomainSpec {
        DomainSpec::finite_product(vec![StateSet::range(0, 1).unwrap()]).unwrap()
    }

    fn swap_matching() -> MatchingSet {
        use std::collections::HashMap;
        let mut t = HashMap::new();
        t.insert(StatePoint::scalar(0), vec![StatePoint::scalar(1)]);
        t.insert(StatePoint::scalar(1), vec![StatePoint::scalar(0)]);
        MatchingSet::Table(t)
    }

    #[test]
    fn divergence_vanishes_at_equality() {
        let d = two_state_domain();
        let q = FinitePmf::from_weights(&d, &[0.3, 0.7]).unwrap();
        let m = swap_matching();
        assert_relative_eq!(lrm_divergence_exact(&q, &q, &m).unwrap(), 0.0);
    }

    #[test]
    fn two_state_divergence_closed_form() {
        // q = (1/2, 1/2), p = (1/4, 3/4): D = (log 3)².
        let d = two_state_domain();
        let q = FinitePmf::from_weights(&d, &[0.5, 0.5]).unwrap();
        let p = FinitePmf::from_weights(&d, &[0.25, 0.75]).unwrap();
        let m = swap_matching();
        let dv = lrm_divergence_exact(&q, &p, &m).unwrap();
        assert_relative_eq!(dv, 3.0f64.ln().powi(2), epsilon = 1e-12);
        assert!((dv - 1.2069).abs() < 1e-4);
    }

    #[test]
    fn disconnected_matching_admits_blind_spots() {
        // M(x) = {(x+2) mod 4} never compares even with odd states, so a
        // p ≠ q with matching within-component ratios scores zero.
        use std::collections::HashMap;
        let d = DomainSpec::finite_product(vec![StateSet::range(0, 3).unwrap()]).unwrap();
        let m = MatchingSet::Table(
            (0..4)
                .map(|v| {
                    (
                        StatePoint::scalar(v),
                        vec![StatePoint::scalar((v + 2) % 4)],
                    )
                })
                .collect::<HashMap<_, _>>(),
        );
        let q = FinitePmf::from_weights(&d, &[0.25, 0.25, 0.25, 0.25]).unwrap();
        let p = FinitePmf::from_weights(&d, &[0.3, 0.2, 0.3, 0.2]).unwrap();
        let dv = lrm_divergence_exact(&q, &p, &m).unwrap();
        assert!(dv.abs() < 1e-14, "divergence {dv} should be exactly zero");
        assert!((p.mass(&StatePoint::scalar(0)) - q.mass(&StatePoint::scalar(0))).abs() > 0.01);
    }

    #[test]
    fn divergence_admissibility_error() {
        let d = two_state_domain();
        let q = FinitePmf::from_weights(&d, &[0.5, 0.5]).unwrap();
        let p = FinitePmf::from_weights(&d, &[1.0, 0.0]).unwrap();
        assert!(lrm_divergence_exact(&q, &p, &swap_matching()).is_err());
    }

    fn cmp_fixture(seed: u64, n: usize) -> (CmpUnivariate, Vec<StatePoint>, MatchingSet) {
        // Poisson(3) data stands in for CMP(3, 1); only the domain matters
        // for assembly tests.
        let model = CmpUnivariate::new();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let pois = rand_distr::Poisson::new(3.0f64).unwrap();
        let samples: Vec<StatePoint> = (0..n)
            .map(|_| StatePoint::scalar(rng.sample(pois) as i64))
            .collect();
        let m = build_offset_matching_set(&[1], model.domain()).unwrap();
        (model, samples, m)
    }

    #[test]
    fn single_sample_quadratic_by_hand() {
        // One observation x = 2 with M = {3}: ΔT = (1, −log 3) and Λ is its
        // outer product.
        let model = CmpUnivariate::new();
        let samples = vec![StatePoint::scalar(2)];
        let m = build_offset_matching_set(&[1], model.domain()).unwrap();
        // α > 0 so the single unobserved neighbour still has a ratio.
        let base = BasePmf::mixture_for_counts(&samples, 0.01).unwrap();
        let qhat = smooth(fit_empirical(&samples).unwrap(), 1.0, Some(base)).unwrap();
        let loss =
            build_quadratic(&model, &samples, &m, &qhat, &WeightFunction::Constant).unwrap();
        let l3 = 3.0f64.ln();
        assert_relative_eq!(loss.lambda()[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(loss.lambda()[(0, 1)], -l3, epsilon = 1e-12);
        assert_relative_eq!(loss.lambda()[(1, 0)], -l3, epsilon = 1e-12);
        assert_relative_eq!(loss.lambda()[(1, 1)], l3 * l3, epsilon = 1e-12);
        assert_eq!(loss.n(), 1);
        assert_eq!(loss.p(), 2);
    }

    #[test]
    fn direct_and_quadratic_agree_at_random_parameters() {
        let (model, samples, m) = cmp_fixture(11, 400);
        let counts = fit_empirical(&samples).unwrap();
        let base = BasePmf::mixture_for_counts(&samples, 0.01).unwrap();
        for (alpha, base) in [(0.0, None), (0.5, Some(base))] {
            let qhat = smooth(counts.clone(), alpha, base).unwrap();
            let quad =
                build_quadratic(&model, &samples, &m, &qhat, &WeightFunction::Constant).unwrap();
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
            for _ in 0..20 {
                let eta = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
                let direct =
                    lrm_loss_direct(&model, &eta, &samples, &m, &qhat, &WeightFunction::Constant)
                        .unwrap();
                assert_relative_eq!(direct, quad.eval(&eta), epsilon = 1e-10, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn weighted_loss_keeps_the_identity() {
        let (model, samples, m) = cmp_fixture(13, 300);
        let qhat = smooth(fit_empirical(&samples).unwrap(), 0.0, None).unwrap();
        let w = poisson_weights(&samples).unwrap();
        let quad = build_quadratic(&model, &samples, &m, &qhat, &w).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(6);
        for _ in 0..5 {
            let eta = DVector::from_fn(2, |_, _| rng.random_range(-1.5..1.5));
            let direct = lrm_loss_direct(&model, &eta, &samples, &m, &qhat, &w).unwrap();
            assert_relative_eq!(direct, quad.eval(&eta), epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn parallel_and_sequential_assembly_are_bit_identical() {
        let (model, samples, m) = cmp_fixture(17, 2500);
        let qhat = smooth(fit_empirical(&samples).unwrap(), 0.0, None).unwrap();
        let a = build_quadratic(&model, &samples, &m, &qhat, &WeightFunction::Constant).unwrap();
        let b =
            build_quadratic_seq(&model, &samples, &m, &qhat, &WeightFunction::Constant).unwrap();
        assert_eq!(a.lambda(), b.lambda());
        assert_eq!(a.nu(), b.nu());
        assert_eq!(a.c(), b.c());
    }

    #[test]
    fn lambda_is_psd_across_random_datasets() {
        for seed in 0..100 {
            let (model, samples, m) = cmp_fixture(100 + seed, 60);
            let qhat = smooth(fit_empirical(&samples).unwrap(), 0.0, None).unwrap();
            let loss =
                build_quadratic(&model, &samples, &m, &qhat, &WeightFunction::Constant).unwrap();
            let eig = loss.lambda().clone().symmetric_eigenvalues();
            assert!(
                eig.iter().all(|&l| l >= -1e-12),
                "seed {seed}: eigenvalues {eig:?}"
            );
        }
    }

    #[test]
    fn degenerate_loss_is_reported() {
        // A single observation with α = 0: its only neighbour is
        // unobserved, so every term is omitted.
        let model = CmpUnivariate::new();
        let samples = vec![StatePoint::scalar(2)];
        let m = build_offset_matching_set(&[1], model.domain()).unwrap();
        let qhat = smooth(fit_empirical(&samples).unwrap(), 0.0, None).unwrap();
        match build_quadratic(&model, &samples, &m, &qhat, &WeightFunction::Constant) {
            Err(Error::DegenerateLoss) => {}
            other => panic!("expected DegenerateLoss, got {other:?}"),
        }
    }

    #[test]
    fn scalar_conjugate_update_by_hand() {
        // p=1, Σ=1, μ=0, β=1, n=1, Λ=1, ν=0.5 → Σ_n = 1/3, μ_n = 1/3.
        let prior = GaussianPrior::new(DVector::from_element(1, 0.0), DMatrix::identity(1, 1))
            .unwrap();
        let loss = QuadraticLoss::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.5),
            0.0,
            1,
        )
        .unwrap();
        let post = conjugate_update(&prior, &loss, 1.0).unwrap();
        assert_relative_eq!(post.sigma()[(0, 0)], 1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(post.mu()[0], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn no_data_returns_the_prior() {
        let prior = GaussianPrior::isotropic(2, 0.5, 1.3).unwrap();
        let loss =
            QuadraticLoss::new(DMatrix::zeros(2, 2), DVector::zeros(2), 0.0, 1).unwrap();
        let post = conjugate_update(&prior, &loss, 1.0).unwrap();
        assert_relative_eq!(post.mu()[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(post.sigma()[(0, 0)], 1.69, epsilon = 1e-10);
        assert_relative_eq!(post.sigma()[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn posterior_contracts_as_beta_grows() {
        let (model, samples, m) = cmp_fixture(23, 500);
        let qhat = smooth(fit_empirical(&samples).unwrap(), 0.0, None).unwrap();
        let loss =
            build_quadratic(&model, &samples, &m, &qhat, &WeightFunction::Constant).unwrap();
        let prior = GaussianPrior::isotropic(2, 0.0, 2.0).unwrap();
        let mut last_min_precision = f64::NEG_INFINITY;
        for &beta in &[0.1, 1.0, 10.0] {
            let scale = 2.0 * beta * loss.n() as f64;
            let precision =
                linalg::spd_inverse(prior.sigma(), "prior").unwrap() + loss.lambda() * scale;
            let lam_min = precision
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(lam_min >= last_min_precision);
            last_min_precision = lam_min;

            // Loewner check Σ_n ⪯ Σ: prior minus posterior covariance PSD.
            let post = conjugate_update(&prior, &loss, beta).unwrap();
            let gap = prior.sigma() - post.sigma();
            let gap_min = gap
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(gap_min >= -1e-12, "β={beta}: Σ_n exceeds Σ by {gap_min}");
        }
    }

    #[test]
    fn one_dimensional_grid_posterior_matches_closed_form() {
        // Quadrature-normalised exp(−βn L̂(η))·π(η) against the closed-form
        // Gaussian on a fine grid, total variation well under 1e-3.
        let prior = GaussianPrior::isotropic(1, 0.3, 1.5).unwrap();
        let loss = QuadraticLoss::new(
            DMatrix::from_element(1, 1, 0.8),
            DVector::from_element(1, 0.9),
            0.4,
            25,
        )
        .unwrap();
        let beta = 0.7;
        let post = conjugate_update(&prior, &loss, beta).unwrap();
        let (mu, sd) = (post.mu()[0], post.sigma()[(0, 0)].sqrt());

        let lo = mu - 8.0 * sd;
        let hi = mu + 8.0 * sd;
        let n_grid = 2001usize;
        let h = (hi - lo) / (n_grid - 1) as f64;
        let bn = beta * loss.n() as f64;
        let log_un: Vec<f64> = (0..n_grid)
            .map(|i| {
                let eta = DVector::from_element(1, lo + i as f64 * h);
                -bn * loss.eval(&eta) + prior.log_density_unnorm(&eta)
            })
            .collect();
        let m = log_un.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_un.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = w.iter().sum();
        let tv: f64 = (0..n_grid)
            .map(|i| {
                let eta = lo + i as f64 * h;
                let gauss =
                    (-0.5 * ((eta - mu) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
                (w[i] / (z * h) - gauss).abs() * h
            })
            .sum::<f64>()
            * 0.5;
        assert!(tv < 1e-3, "total variation {tv}");
    }

    #[test]
    fn min_estimate_identity_and_gradient() {
        let lam = DMatrix::identity(3, 3);
        let nu = DVector::from_row_slice(&[0.3, -0.1, 2.0]);
        let loss = QuadraticLoss::new(lam, nu.clone(), 0.0, 10).unwrap();
        let eta = min_lrm_estimate(&loss).unwrap();
        assert_relative_eq!((&eta - &nu).norm(), 0.0, epsilon = 1e-12);
        // First-order condition 2Λη̂ − 2ν = 0.
        let grad = loss.lambda() * &eta * 2.0 - &nu * 2.0;
        assert!(grad.norm() < 1e-10);
    }

    #[test]
    fn min_estimate_rejects_rank_deficiency() {
        let v = DVector::from_row_slice(&[1.0, 2.0]);
        let lam = &v * v.transpose();
        let loss = QuadraticLoss::new(lam, v.clone(), 0.0, 5).unwrap();
        let err = min_lrm_estimate(&loss).unwrap_err();
        assert!(err.to_string().contains("matching set"));
    }

    #[test]
    fn poisson_weight_log_space_matches_direct() {
        let samples: Vec<StatePoint> = [3, 4, 4, 5, 7, 2, 4]
            .iter()
            .map(|&v| StatePoint::scalar(v))
            .collect();
        let w = poisson_weights(&samples).unwrap();
        let mu = match &w {
            WeightFunction::PoissonMarginals { mu, .. } => mu[0],
            _ => unreachable!(),
        };
        assert_relative_eq!(mu, 4.0);
        for x in 0..=20i64 {
            let direct = (-mu).exp() * mu.powi(x as i32)
                / (1..=x).map(|k| k as f64).product::<f64>().max(1.0);
            assert_relative_eq!(
                w.weight(&StatePoint::scalar(x)),
                direct,
                epsilon = 1e-12,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn zero_median_weight_convention() {
        let samples: Vec<StatePoint> = [0, 0, 0, 9].iter().map(|&v| StatePoint::scalar(v)).collect();
        let w = poisson_weights(&samples).unwrap();
        assert!(w.has_zero_median());
        assert_relative_eq!(w.weight(&StatePoint::scalar(0)), 1.0);
        assert_relative_eq!(w.weight(&StatePoint::scalar(3)), 0.0);
    }

    #[test]
    fn weights_peak_near_the_median() {
        let samples: Vec<StatePoint> = (0..9).map(|_| StatePoint::scalar(6)).collect();
        let w = poisson_weights(&samples).unwrap();
        let at = |v: i64| w.weight(&StatePoint::scalar(v));
        assert!(at(6) > at(2) && at(6) > at(12));
    }

    #[test]
    fn json_schema_field_names() {
        let loss = QuadraticLoss::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]),
            DVector::from_row_slice(&[0.5, -0.5]),
            1.5,
            42,
        )
        .unwrap();
        let v = serde_json::to_value(&loss).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(|s| s.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(keys, vec!["Lambda", "c", "n", "nu", "p"]);
        let back: QuadraticLoss = serde_json::from_value(v).unwrap();
        assert_eq!(back.lambda(), loss.lambda());
        assert_eq!(back.n(), 42);

        let post = GaussianPosterior::new(
            DVector::from_row_slice(&[0.1, 0.2]),
            DMatrix::identity(2, 2),
            Some(vec![None, Some(SignConstraint::Negative)]),
        )
        .unwrap();
        let v = serde_json::to_value(&post).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(|s| s.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(keys, vec!["Sigma", "constraints", "mu"]);
        assert_eq!(v["constraints"][1], serde_json::json!("negative"));
        let back: GaussianPosterior = serde_json::from_value(v).unwrap();
        assert_eq!(back.mu(), post.mu());
    }
}
