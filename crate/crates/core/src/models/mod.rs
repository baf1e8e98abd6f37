//! The model zoo: discrete exponential families whose normalising
//! constants are intractable (or pretend to be).
//!
//! Everything here exposes unnormalised structure only — natural
//! parameter η, sufficient statistic T, base term B — because the whole
//! fitting pipeline runs on log *ratios* where the normaliser cancels.
//! Each concrete model also declares its reparameterisation between the
//! interpretable θ-space and η-space, so posteriors computed on η can be
//! pushed back to θ.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::domain::{DomainSpec, StatePoint};
use crate::linalg;
use crate::lrm::{GaussianPosterior, SignConstraint};
use crate::{Error, Result};

mod cmp;
mod ingarch;
mod mrf;

pub use cmp::{CmpGraphical, CmpUnivariate};
pub use ingarch::{ingarch_quadratic, ingarch_statistics, IngarchCmp, IngarchStep, StepCoefficients};
pub use mrf::{mrf_local_loss, mrf_occurrence_loss, MrfModel, PairPotential, SitePotential};

/// A discrete exponential-family model: `log p(x) = ηᵀT(x) + B(x) − log Z(η)`.
///
/// `Z` never appears in any method; the contract is purely about the
/// unnormalised part. Implementations are immutable value objects and all
/// methods are pure, so sharing across threads is free.
pub trait ExpFamily: Send + Sync {
    /// Natural-parameter dimension p.
    fn dim(&self) -> usize;

    /// The state space the model lives on.
    fn domain(&self) -> &DomainSpec;

    /// Sufficient statistic `T(x)`, length [`ExpFamily::dim`].
    fn sufficient(&self, x: &StatePoint) -> DVector<f64>;

    /// Base term `B(x)`; zero for most models here.
    fn base(&self, _x: &StatePoint) -> f64 {
        0.0
    }

    /// `log p_η(x') − log p_η(x) = ηᵀ(T(x')−T(x)) + B(x')−B(x)`.
    ///
    /// Both points must lie in the domain. The normaliser cancels, so this
    /// is exact for any η, normalisable or not.
    fn log_ratio(&self, eta: &DVector<f64>, x_prime: &StatePoint, x: &StatePoint) -> f64 {
        debug_assert!(self.domain().contains(x) && self.domain().contains(x_prime));
        let dt = self.sufficient(x_prime) - self.sufficient(x);
        eta.dot(&dt) + self.base(x_prime) - self.base(x)
    }

    /// Map interpretable parameters θ to natural parameters η.
    fn eta_of_theta(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(theta.clone())
    }

    /// Inverse of [`ExpFamily::eta_of_theta`].
    fn theta_of_eta(&self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(eta.clone())
    }

    /// Per-coordinate sign constraints on η, if any.
    fn constraints(&self) -> Option<Vec<Option<SignConstraint>>> {
        None
    }
}

// ---------------------------------------------------------------------------
// Posterior transforms to θ-space
// ---------------------------------------------------------------------------

/// How a Gaussian posterior on η maps back to the model's θ-space.
#[derive(Clone, Debug, PartialEq)]
pub enum TransformKind {
    /// θ = η.
    Identity,
    /// θ = (exp(η₁), η₂): the univariate CMP map, whose first marginal
    /// becomes log-normal.
    CmpUnivariate,
    /// Sign flips on the interaction and dispersion blocks; the last `d`
    /// η-coordinates are constrained negative, so sampling is a Gibbs scan
    /// over univariate truncated normals.
    CmpGraphical { d: usize },
    /// θ = (η₁, η₂, −η₃): the count time-series map.
    IngarchTheta,
}

impl TransformKind {
    fn expected_dim(&self) -> Option<usize> {
        match self {
            TransformKind::Identity => None,
            TransformKind::CmpUnivariate => Some(2),
            TransformKind::CmpGraphical { d } => Some(2 * d + d * (d - 1) / 2),
            TransformKind::IngarchTheta => Some(3),
        }
    }

    /// η → θ.
    pub fn theta_of_eta(&self, eta: &DVector<f64>) -> DVector<f64> {
        match self {
            TransformKind::Identity => eta.clone(),
            TransformKind::CmpUnivariate => {
                DVector::from_vec(vec![eta[0].exp(), eta[1]])
            }
            TransformKind::CmpGraphical { d } => {
                let mut theta = eta.clone();
                for i in *d..eta.len() {
                    theta[i] = -eta[i];
                }
                theta
            }
            TransformKind::IngarchTheta => DVector::from_vec(vec![eta[0], eta[1], -eta[2]]),
        }
    }

    /// θ → η.
    pub fn eta_of_theta(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            TransformKind::Identity => Ok(theta.clone()),
            TransformKind::CmpUnivariate => {
                if theta[0] <= 0.0 {
                    return Err(Error::InvalidSpec(format!(
                        "rate parameter must be positive, got {}",
                        theta[0]
                    )));
                }
                Ok(DVector::from_vec(vec![theta[0].ln(), theta[1]]))
            }
            TransformKind::CmpGraphical { d } => {
                let mut eta = theta.clone();
                for i in *d..theta.len() {
                    eta[i] = -theta[i];
                }
                Ok(eta)
            }
            TransformKind::IngarchTheta => {
                Ok(DVector::from_vec(vec![theta[0], theta[1], -theta[2]]))
            }
        }
    }

    /// `log |det ∂η/∂θ|` at θ — the change-of-variables correction when
    /// pushing an η-density to θ-space.
    pub fn log_jacobian(&self, theta: &DVector<f64>) -> f64 {
        match self {
            // Sign flips have |det| = 1.
            TransformKind::Identity
            | TransformKind::CmpGraphical { .. }
            | TransformKind::IngarchTheta => 0.0,
            // ∂η₁/∂θ₁ = 1/θ₁.
            TransformKind::CmpUnivariate => -theta[0].ln(),
        }
    }
}

/// A Gaussian η-posterior together with the transform onto θ-space:
/// draws and (unnormalised) densities in interpretable coordinates.
#[derive(Clone, Debug)]
pub struct ThetaPosterior {
    eta: GaussianPosterior,
    transform: TransformKind,
}

/// Bundle an η-posterior with its θ-transform, checking dimensions.
pub fn posterior_on_theta(
    posterior: GaussianPosterior,
    transform: TransformKind,
) -> Result<ThetaPosterior> {
    if let Some(d) = transform.expected_dim() {
        if posterior.p() != d {
            return Err(Error::InvalidSpec(format!(
                "transform expects dimension {d} but the posterior has {}",
                posterior.p()
            )));
        }
    }
    Ok(ThetaPosterior {
        eta: posterior,
        transform,
    })
}

impl ThetaPosterior {
    pub fn eta(&self) -> &GaussianPosterior {
        &self.eta
    }

    pub fn transform(&self) -> &TransformKind {
        &self.transform
    }

    /// Whether the η-posterior carries sign constraints (truncated case).
    pub fn is_constrained(&self) -> bool {
        self.eta
            .constraints()
            .is_some_and(|c| c.iter().any(|x| x.is_some()))
    }

    /// One θ-space draw.
    ///
    /// Unconstrained posteriors draw exactly; constrained ones run a short
    /// Gibbs scan over univariate truncated normals and return its end
    /// state, so successive calls are independent chains, not one chain.
    /// Use [`ThetaPosterior::sample_many`] for bulk draws.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let eta = if self.is_constrained() {
            self.constrained_chain(rng, 1, 64, 1)
                .pop()
                .expect("one draw requested")
        } else {
            self.eta.sample_unconstrained(rng)
        };
        self.transform.theta_of_eta(&eta)
    }

    /// `count` θ-space draws; the constrained path runs one Gibbs chain
    /// with burn-in and thinning, which is much cheaper per draw.
    pub fn sample_many<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<DVector<f64>> {
        if self.is_constrained() {
            self.constrained_chain(rng, count, 256, 4)
                .into_iter()
                .map(|eta| self.transform.theta_of_eta(&eta))
                .collect()
        } else {
            (0..count).map(|_| self.sample(rng)).collect()
        }
    }

    /// Unnormalised log density at θ (Gaussian in η(θ) plus the Jacobian
    /// term; the truncation normaliser of constrained posteriors is left
    /// out, and sign-violating points get −∞).
    pub fn log_density_unnorm(&self, theta: &DVector<f64>) -> Result<f64> {
        let eta = self.transform.eta_of_theta(theta)?;
        if let Some(cons) = self.eta.constraints() {
            for (j, c) in cons.iter().enumerate() {
                match c {
                    Some(SignConstraint::Negative) if eta[j] >= 0.0 => {
                        return Ok(f64::NEG_INFINITY)
                    }
                    Some(SignConstraint::Positive) if eta[j] <= 0.0 => {
                        return Ok(f64::NEG_INFINITY)
                    }
                    _ => {}
                }
            }
        }
        let maha = self.eta.mahalanobis_sq(&eta)?;
        Ok(-0.5 * maha + self.transform.log_jacobian(theta))
    }

    /// Gibbs sampler for the sign-constrained Gaussian: each coordinate in
    /// turn is drawn from its full conditional, a univariate normal
    /// truncated to the allowed half-line.
    fn constrained_chain<R: Rng>(
        &self,
        rng: &mut R,
        count: usize,
        burn_in: usize,
        thin: usize,
    ) -> Vec<DVector<f64>> {
        let p = self.eta.p();
        let mu = self.eta.mu();
        let omega = linalg::spd_inverse(self.eta.sigma(), "posterior covariance")
            .expect("posterior covariance validated at construction");
        let cons = self.eta.constraints().unwrap_or(&[]);

        // Start from the mean, pushed strictly inside the constraints.
        let mut eta = mu.clone();
        for (j, c) in cons.iter().enumerate() {
            let sd_j = self.eta.sigma()[(j, j)].sqrt();
            match c {
                Some(SignConstraint::Negative) if eta[j] >= 0.0 => eta[j] = -0.1 * sd_j - 1e-3,
                Some(SignConstraint::Positive) if eta[j] <= 0.0 => eta[j] = 0.1 * sd_j + 1e-3,
                _ => {}
            }
        }

        let sweeps = burn_in + count.saturating_sub(1) * thin + 1;
        let mut out = Vec::with_capacity(count);
        for sweep in 0..sweeps {
            for j in 0..p {
                // Conditional of coordinate j given the rest, in precision
                // form: variance 1/Ω_jj, mean μ_j − Σ_{k≠j} Ω_jk (η_k−μ_k)/Ω_jj.
                let ojj = omega[(j, j)];
                let mut shift = 0.0;
                for k in 0..p {
                    if k != j {
                        shift += omega[(j, k)] * (eta[k] - mu[k]);
                    }
                }
                let cond_mu = mu[j] - shift / ojj;
                let cond_sd = (1.0 / ojj).sqrt();
                eta[j] = match cons.get(j).copied().flatten() {
                    None => {
                        let z: f64 =
                            rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                        cond_mu + cond_sd * z
                    }
                    Some(SignConstraint::Negative) => {
                        // η_j < 0 ⇔ −η_j > 0: sample the reflected lower tail.
                        -crate::samplers::truncated_normal_below(rng, -cond_mu, cond_sd, 0.0)
                    }
                    Some(SignConstraint::Positive) => {
                        crate::samplers::truncated_normal_below(rng, cond_mu, cond_sd, 0.0)
                    }
                };
            }
            if sweep >= burn_in && (sweep - burn_in) % thin == 0 && out.len() < count {
                out.push(eta.clone());
            }
        }
        out
    }

    /// Posterior mean pushed through the transform where that is exact, or
    /// by Monte Carlo otherwise. For [`TransformKind::CmpUnivariate`] the
    /// first coordinate uses the log-normal mean `exp(μ₁ + Σ₁₁/2)`.
    pub fn mean_closed_form(&self) -> Option<DVector<f64>> {
        if self.is_constrained() {
            return None;
        }
        match &self.transform {
            TransformKind::Identity => Some(self.eta.mu().clone()),
            TransformKind::CmpUnivariate => {
                let mu = self.eta.mu();
                let sigma = self.eta.sigma();
                Some(DVector::from_vec(vec![
                    (mu[0] + 0.5 * sigma[(0, 0)]).exp(),
                    mu[1],
                ]))
            }
            TransformKind::CmpGraphical { .. } | TransformKind::IngarchTheta => {
                Some(self.transform.theta_of_eta(self.eta.mu()))
            }
        }
    }
}

/// Covariance of θ-draws — helper for tests and reports.
pub fn sample_covariance(draws: &[DVector<f64>]) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let n = draws.len();
    if n < 2 {
        return None;
    }
    let p = draws[0].len();
    let mut mean = DVector::zeros(p);
    for d in draws {
        mean += d;
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(p, p);
    for d in draws {
        let c = d - &mean;
        cov.ger(1.0 / (n - 1) as f64, &c, &c, 1.0);
    }
    Some((mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn identity_transform_is_a_no_op() {
        let post = GaussianPosterior::new(
            DVector::from_row_slice(&[0.4, -1.0]),
            DMatrix::identity(2, 2) * 0.5,
            None,
        )
        .unwrap();
        let tp = posterior_on_theta(post.clone(), TransformKind::Identity).unwrap();
        assert_eq!(tp.mean_closed_form().unwrap(), *post.mu());
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1);
        let draw = tp.sample(&mut rng);
        assert!(draw.len() == 2 && draw.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn log_normal_first_moment() {
        // η ~ N(0, 1) in the first coordinate; θ₁ = exp(η₁) is log-normal
        // with mean e^{1/2}. Monte-Carlo mean must land within 3 standard
        // errors.
        let post = GaussianPosterior::new(
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            None,
        )
        .unwrap();
        let tp = posterior_on_theta(post, TransformKind::CmpUnivariate).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let n = 200_000usize;
        let draws = tp.sample_many(&mut rng, n);
        let mean = draws.iter().map(|d| d[0]).sum::<f64>() / n as f64;
        let truth = (0.5f64).exp();
        // Var(θ₁) = (e−1)e for log-normal(0,1).
        let se = (((1f64).exp() - 1.0) * (1f64).exp() / n as f64).sqrt();
        assert!(
            (mean - truth).abs() < 3.0 * se,
            "mean {mean}, truth {truth}, se {se}"
        );
    }

    #[test]
    fn transform_dimension_checks() {
        let post = GaussianPosterior::new(DVector::zeros(3), DMatrix::identity(3, 3), None)
            .unwrap();
        assert!(posterior_on_theta(post.clone(), TransformKind::CmpUnivariate).is_err());
        assert!(posterior_on_theta(post, TransformKind::IngarchTheta).is_ok());
    }

    #[test]
    fn constrained_draws_respect_signs() {
        let d = 2usize;
        let p = 2 * d + d * (d - 1) / 2;
        let cons: Vec<Option<SignConstraint>> = (0..p)
            .map(|i| (i >= p - d).then_some(SignConstraint::Negative))
            .collect();
        let post = GaussianPosterior::new(
            DVector::from_element(p, 0.3),
            DMatrix::identity(p, p) * 0.8,
            Some(cons),
        )
        .unwrap();
        let tp = posterior_on_theta(post, TransformKind::CmpGraphical { d }).unwrap();
        assert!(tp.is_constrained());
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for theta in tp.sample_many(&mut rng, 500) {
            // Last d θ-coordinates are −η with η < 0, so strictly positive.
            for i in p - d..p {
                assert!(theta[i] > 0.0, "draw {theta:?}");
            }
        }
    }

    #[test]
    fn constrained_density_vanishes_off_support() {
        let post = GaussianPosterior::new(
            DVector::zeros(3),
            DMatrix::identity(3, 3),
            Some(vec![None, None, Some(SignConstraint::Negative)]),
        )
        .unwrap();
        let tp = posterior_on_theta(post, TransformKind::Identity).unwrap();
        let bad = DVector::from_row_slice(&[0.0, 0.0, 0.5]);
        assert_eq!(tp.log_density_unnorm(&bad).unwrap(), f64::NEG_INFINITY);
        let ok = DVector::from_row_slice(&[0.0, 0.0, -0.5]);
        assert!(tp.log_density_unnorm(&ok).unwrap().is_finite());
    }

    #[test]
    fn cmp_jacobian_matches_log_normal_density() {
        // Pushing N(0,1) through exp must give the log-normal density:
        // log f(θ) = −(ln θ)²/2 − ln θ + const.
        let post = GaussianPosterior::new(
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            None,
        )
        .unwrap();
        let tp = posterior_on_theta(post, TransformKind::CmpUnivariate).unwrap();
        for t in [0.3, 1.0, 2.5] {
            let theta = DVector::from_row_slice(&[t, 0.0]);
            let got = tp.log_density_unnorm(&theta).unwrap();
            let want = -0.5 * t.ln().powi(2) - t.ln();
            assert_relative_eq!(got, want, epsilon = 1e-12);
        }
    }
}
