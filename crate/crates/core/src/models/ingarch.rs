//! Autoregressive count time series with CMP innovations.
//!
//! The model is `x_t | x_{0:t−1} ~ CMP(λ_t, θ₃)` with
//! `log λ_t = θ₁ + ar_phi · log λ_{t−1} + θ₂ · log(1 + x_{t−1})` started
//! at a fixed λ₀. Unrolling the recursion gives
//! `log λ_t = c_t + θ₁ b_t + θ₂ a_t` where the coefficients depend on the
//! AR weight and the past data but *not* on θ. So for fixed `ar_phi` each
//! step is a little exponential family in θ — partial conjugacy — and the
//! quadratic-loss machinery applies step by step.
//!
//! Indexing convention: the series is stored zero-based as `x₀..x_{N−1}`.
//! Step `t` (1-based) carries coefficients built from `x₀..x_{t−1}` and
//! predicts `x_t`. Coefficients exist for `t = 1..=N`; the last step has
//! no observed response and is what one-step-ahead prediction uses.

use nalgebra::DVector;

use super::ExpFamily;
use crate::domain::{DomainSpec, MatchingSet, StatePoint};
use crate::lrm::{QuadAcc, QuadraticLoss};
use crate::numeric::ln_factorial;
use crate::pmf::{LogRatio, SmoothedPmf};
use crate::{Error, Result};

/// Data-dependent coefficients of one step: `log λ_t = c + θ₁ b + θ₂ a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepCoefficients {
    /// 1-based step index.
    pub t: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

fn validate(ar_phi: f64, lambda0: f64) -> Result<()> {
    if !(lambda0 > 0.0) || !lambda0.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "initial intensity must be positive and finite, got {lambda0}"
        )));
    }
    if !(ar_phi.abs() < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "autoregressive weight must satisfy |φ| < 1, got {ar_phi}"
        )));
    }
    Ok(())
}

/// Forward recursion for the per-step coefficients, `t = 1..=N`:
/// `b_t = Σ_{k<t} φᵏ`, `a_t = Σ_{k<t} φ^{t−k−1} log(1+x_k)`,
/// `c_t = φᵗ log λ₀`.
pub fn ingarch_statistics(
    series: &[i64],
    ar_phi: f64,
    lambda0: f64,
) -> Result<Vec<StepCoefficients>> {
    validate(ar_phi, lambda0)?;
    if let Some(bad) = series.iter().find(|&&x| x < 0) {
        return Err(Error::BadData(format!("negative count {bad} in series")));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut a = 0.0f64;
    let mut b = 0.0f64;
    let mut c = lambda0.ln();
    for (idx, &x_prev) in series.iter().enumerate() {
        a = ar_phi * a + ((1 + x_prev) as f64).ln();
        b = 1.0 + ar_phi * b;
        c *= ar_phi;
        out.push(StepCoefficients { t: idx + 1, a, b, c });
    }
    Ok(out)
}

/// The time-series model: AR weight, initial intensity, and the count
/// domain its responses live on.
#[derive(Clone, Debug)]
pub struct IngarchCmp {
    ar_phi: f64,
    lambda0: f64,
    domain: DomainSpec,
}

impl IngarchCmp {
    pub fn new(ar_phi: f64, lambda0: f64) -> Result<Self> {
        validate(ar_phi, lambda0)?;
        Ok(IngarchCmp {
            ar_phi,
            lambda0,
            domain: DomainSpec::counts(1)?,
        })
    }

    pub fn ar_phi(&self) -> f64 {
        self.ar_phi
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn statistics(&self, series: &[i64]) -> Result<Vec<StepCoefficients>> {
        ingarch_statistics(series, self.ar_phi, self.lambda0)
    }

    /// The conditional exponential family of one step.
    pub fn step(&self, coeffs: StepCoefficients) -> IngarchStep {
        IngarchStep {
            coeffs,
            domain: self.domain.clone(),
        }
    }

    /// Conditional intensity `λ_t = exp(c_t + θ₁ b_t + θ₂ a_t)`.
    pub fn intensity(&self, theta1: f64, theta2: f64, coeffs: &StepCoefficients) -> f64 {
        (coeffs.c + theta1 * coeffs.b + theta2 * coeffs.a).exp()
    }
}

/// One conditional step `p(x_t | past)` as an exponential family:
/// η = (θ₁, θ₂, −θ₃), T(x) = (b_t x, a_t x, log x!), B(x) = c_t x.
#[derive(Clone, Debug)]
pub struct IngarchStep {
    coeffs: StepCoefficients,
    domain: DomainSpec,
}

impl IngarchStep {
    pub fn coeffs(&self) -> &StepCoefficients {
        &self.coeffs
    }

    /// Unnormalised log mass `x log λ_t − θ₃ log x!` in θ-coordinates; the
    /// independent oracle for the trait's η-form.
    pub fn log_mass_unnorm(&self, theta: &DVector<f64>, x: u64) -> f64 {
        let log_lambda = self.coeffs.c + theta[0] * self.coeffs.b + theta[1] * self.coeffs.a;
        x as f64 * log_lambda - theta[2] * ln_factorial(x)
    }
}

impl ExpFamily for IngarchStep {
    fn dim(&self) -> usize {
        3
    }

    fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    fn sufficient(&self, x: &StatePoint) -> DVector<f64> {
        let v = x.get(0);
        debug_assert!(v >= 0);
        DVector::from_vec(vec![
            self.coeffs.b * v as f64,
            self.coeffs.a * v as f64,
            ln_factorial(v as u64),
        ])
    }

    fn base(&self, x: &StatePoint) -> f64 {
        self.coeffs.c * x.get(0) as f64
    }

    fn eta_of_theta(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != 3 {
            return Err(Error::InvalidSpec("the step model has three parameters".into()));
        }
        super::TransformKind::IngarchTheta.eta_of_theta(theta)
    }

    fn theta_of_eta(&self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        if eta.len() != 3 {
            return Err(Error::InvalidSpec("the step model has three parameters".into()));
        }
        Ok(super::TransformKind::IngarchTheta.theta_of_eta(eta))
    }
}

/// Assemble the quadratic loss of the whole series at fixed AR weight.
///
/// Steps `t = 1..N−1` contribute (each needs an observed response `x_t`);
/// the data log-ratio `ĝ` comes from the smoothed *marginal* PMF of the
/// counts, fitted once outside. Returns a loss with `n = N−1`.
pub fn ingarch_quadratic(
    model: &IngarchCmp,
    series: &[i64],
    m: &MatchingSet,
    qhat: &SmoothedPmf,
) -> Result<QuadraticLoss> {
    if series.len() < 2 {
        return Err(Error::BadData(
            "a series of at least two observations is needed".into(),
        ));
    }
    let stats = model.statistics(series)?;
    let mut acc = QuadAcc::new(3);
    let n_steps = series.len() - 1;
    for t in 1..series.len() {
        let coeffs = stats[t - 1];
        debug_assert_eq!(coeffs.t, t);
        let x = StatePoint::scalar(series[t]);
        let nbs = m.neighbours(model.domain(), &x);
        if nbs.is_empty() {
            continue;
        }
        let scale = 1.0 / nbs.len() as f64;
        let lnf_x = ln_factorial(series[t] as u64);
        for nb in &nbs {
            let ghat = match qhat.log_ratio(nb, &x)? {
                LogRatio::Value(v) => v,
                LogRatio::Omitted => continue,
            };
            let dx = (nb.get(0) - series[t]) as f64;
            let dt = DVector::from_vec(vec![
                coeffs.b * dx,
                coeffs.a * dx,
                ln_factorial(nb.get(0) as u64) - lnf_x,
            ]);
            let db = coeffs.c * dx;
            acc.add_term(&dt, scale, ghat, db);
        }
    }
    acc.finalize(n_steps as u64)
}
