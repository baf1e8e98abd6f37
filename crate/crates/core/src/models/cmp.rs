//! Conway–Maxwell–Poisson models: the univariate family and its
//! pairwise graphical extension.
//!
//! Univariate: unnormalised mass `θ₁^x (x!)^{−θ₂}` on counts. θ₂ = 1 is
//! Poisson(θ₁); θ₂ > 1 is under-dispersed, θ₂ < 1 over-dispersed. The
//! normaliser is an infinite series with no closed form, which is exactly
//! why ratio-based fitting is attractive here.

use nalgebra::DVector;

use super::ExpFamily;
use crate::domain::{DomainSpec, StatePoint};
use crate::lrm::SignConstraint;
use crate::numeric::ln_factorial;
use crate::{Error, Result};

/// Univariate CMP with η = (log θ₁, θ₂), T(x) = (x, −log x!), B = 0.
#[derive(Clone, Debug)]
pub struct CmpUnivariate {
    domain: DomainSpec,
}

impl Default for CmpUnivariate {
    fn default() -> Self {
        Self::new()
    }
}

impl CmpUnivariate {
    pub fn new() -> Self {
        CmpUnivariate {
            domain: DomainSpec::counts(1).expect("one count coordinate is always valid"),
        }
    }

    /// Unnormalised log mass `x log θ₁ − θ₂ log x!` — used by samplers and
    /// as an independent oracle for the η-form in tests.
    pub fn log_mass_unnorm(theta1: f64, theta2: f64, x: u64) -> f64 {
        x as f64 * theta1.ln() - theta2 * ln_factorial(x)
    }
}

impl ExpFamily for CmpUnivariate {
    fn dim(&self) -> usize {
        2
    }

    fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    fn sufficient(&self, x: &StatePoint) -> DVector<f64> {
        let v = x.get(0);
        debug_assert!(v >= 0);
        DVector::from_vec(vec![v as f64, -ln_factorial(v as u64)])
    }

    fn eta_of_theta(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != 2 {
            return Err(Error::InvalidSpec("univariate CMP has two parameters".into()));
        }
        super::TransformKind::CmpUnivariate.eta_of_theta(theta)
    }

    fn theta_of_eta(&self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        if eta.len() != 2 {
            return Err(Error::InvalidSpec("univariate CMP has two parameters".into()));
        }
        Ok(super::TransformKind::CmpUnivariate.theta_of_eta(eta))
    }
}

/// Pairwise CMP graphical model on d count coordinates.
///
/// Unnormalised log mass
/// `Σ_i θ_i x_i − Σ_{i<j} θ_{i,j} x_i x_j − Σ_i θ_{0,i} log x_i!`
/// with θ_{0,i} > 0 so each coordinate keeps CMP-like tails. Parameter
/// layout, in both θ and η, is `[(·)_i | (·)_{i<j} | (·)_{0,i}]`; η flips
/// the sign of the last two blocks, so the positivity constraint becomes
/// "last d coordinates of η strictly negative".
#[derive(Clone, Debug)]
pub struct CmpGraphical {
    d: usize,
    domain: DomainSpec,
}

impl CmpGraphical {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidSpec(
                "the graphical model needs at least one coordinate".into(),
            ));
        }
        Ok(CmpGraphical {
            d,
            domain: DomainSpec::counts(d)?,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Flat index of the pair block entry (i, j), i < j.
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.d);
        let d = self.d;
        d + i * d - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Flat index of the dispersion block entry for coordinate i.
    pub fn dispersion_index(&self, i: usize) -> usize {
        debug_assert!(i < self.d);
        self.d + self.d * (self.d - 1) / 2 + i
    }

    /// Unnormalised log mass in θ-coordinates; the independent oracle for
    /// the trait's η-form.
    pub fn log_mass_unnorm(&self, theta: &DVector<f64>, x: &StatePoint) -> f64 {
        let d = self.d;
        let mut acc = 0.0;
        for i in 0..d {
            let xi = x.get(i) as f64;
            acc += theta[i] * xi;
            acc -= theta[self.dispersion_index(i)] * ln_factorial(x.get(i) as u64);
        }
        for i in 0..d {
            for j in i + 1..d {
                acc -= theta[self.pair_index(i, j)] * (x.get(i) as f64) * (x.get(j) as f64);
            }
        }
        acc
    }
}

impl ExpFamily for CmpGraphical {
    fn dim(&self) -> usize {
        2 * self.d + self.d * (self.d - 1) / 2
    }

    fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    fn sufficient(&self, x: &StatePoint) -> DVector<f64> {
        let d = self.d;
        let mut t = DVector::zeros(self.dim());
        for i in 0..d {
            let xi = x.get(i);
            debug_assert!(xi >= 0);
            t[i] = xi as f64;
            t[self.dispersion_index(i)] = ln_factorial(xi as u64);
        }
        for i in 0..d {
            for j in i + 1..d {
                t[self.pair_index(i, j)] = (x.get(i) as f64) * (x.get(j) as f64);
            }
        }
        t
    }

    fn eta_of_theta(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != self.dim() {
            return Err(Error::InvalidSpec(format!(
                "graphical model with d={} has {} parameters, got {}",
                self.d,
                self.dim(),
                theta.len()
            )));
        }
        super::TransformKind::CmpGraphical { d: self.d }.eta_of_theta(theta)
    }

    fn theta_of_eta(&self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        if eta.len() != self.dim() {
            return Err(Error::InvalidSpec(format!(
                "graphical model with d={} has {} parameters, got {}",
                self.d,
                self.dim(),
                eta.len()
            )));
        }
        Ok(super::TransformKind::CmpGraphical { d: self.d }.theta_of_eta(eta))
    }

    fn constraints(&self) -> Option<Vec<Option<SignConstraint>>> {
        let p = self.dim();
        Some(
            (0..p)
                .map(|i| (i >= p - self.d).then_some(SignConstraint::Negative))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;

    #[test]
    fn log_ratio_is_zero_at_equal_points() {
        let m = CmpUnivariate::new();
        let eta = DVector::from_row_slice(&[0.7, 1.3]);
        let x = StatePoint::scalar(4);
        assert_eq!(m.log_ratio(&eta, &x, &x), 0.0);
    }

    #[test]
    fn poisson_ratio_at_unit_dispersion() {
        // θ₂ = 1: p(x+1)/p(x) = θ₁/(x+1), the Poisson step ratio.
        let m = CmpUnivariate::new();
        let theta1 = 2.5f64;
        let eta = m
            .eta_of_theta(&DVector::from_row_slice(&[theta1, 1.0]))
            .unwrap();
        for x in 0..12i64 {
            let got = m.log_ratio(&eta, &StatePoint::scalar(x + 1), &StatePoint::scalar(x));
            let want = theta1.ln() - ((x + 1) as f64).ln();
            assert_relative_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn univariate_ratio_matches_unnormalised_mass() {
        let m = CmpUnivariate::new();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2);
        for _ in 0..100 {
            let theta1 = rng.random_range(0.3..5.0);
            let theta2 = rng.random_range(0.2..2.0);
            let x = rng.random_range(0..30u64);
            let xp = rng.random_range(0..30u64);
            let eta = m
                .eta_of_theta(&DVector::from_row_slice(&[theta1, theta2]))
                .unwrap();
            let got = m.log_ratio(
                &eta,
                &StatePoint::scalar(xp as i64),
                &StatePoint::scalar(x as i64),
            );
            let want = CmpUnivariate::log_mass_unnorm(theta1, theta2, xp)
                - CmpUnivariate::log_mass_unnorm(theta1, theta2, x);
            assert_relative_eq!(got, want, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn graphical_dimension_formula() {
        let m = CmpGraphical::new(10).unwrap();
        assert_eq!(m.dim(), 65);
        // Index layout covers 0..p without overlap.
        let mut seen = vec![false; m.dim()];
        for i in 0..10 {
            seen[i] = true;
            seen[m.dispersion_index(i)] = true;
        }
        for i in 0..10 {
            for j in i + 1..10 {
                assert!(!seen[m.pair_index(i, j)]);
                seen[m.pair_index(i, j)] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn graphical_ratio_matches_unnormalised_mass() {
        let d = 4;
        let m = CmpGraphical::new(d).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        for _ in 0..100 {
            let theta = DVector::from_fn(m.dim(), |i, _| {
                if i >= m.dim() - d {
                    rng.random_range(0.5..2.0) // dispersions positive
                } else {
                    rng.random_range(-1.0..1.0)
                }
            });
            let x = StatePoint::new((0..d).map(|_| rng.random_range(0..8)).collect());
            let xp = StatePoint::new((0..d).map(|_| rng.random_range(0..8)).collect());
            let eta = m.eta_of_theta(&theta).unwrap();
            let got = m.log_ratio(&eta, &xp, &x);
            let want = m.log_mass_unnorm(&theta, &xp) - m.log_mass_unnorm(&theta, &x);
            assert_relative_eq!(got, want, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn reparameterisation_round_trips() {
        let uni = CmpUnivariate::new();
        let grap = CmpGraphical::new(5).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(4);
        for _ in 0..50 {
            let theta = DVector::from_row_slice(&[
                rng.random_range(0.1..6.0),
                rng.random_range(0.0..3.0),
            ]);
            let back = uni.theta_of_eta(&uni.eta_of_theta(&theta).unwrap()).unwrap();
            assert_relative_eq!((&back - &theta).norm(), 0.0, epsilon = 1e-12);

            let theta_g = DVector::from_fn(grap.dim(), |_, _| rng.random_range(-2.0..2.0));
            let back_g = grap
                .theta_of_eta(&grap.eta_of_theta(&theta_g).unwrap())
                .unwrap();
            assert_relative_eq!((&back_g - &theta_g).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn graphical_constraints_mark_dispersion_block() {
        let m = CmpGraphical::new(3).unwrap();
        let cons = m.constraints().unwrap();
        assert_eq!(cons.len(), m.dim());
        for (i, c) in cons.iter().enumerate() {
            if i >= m.dim() - 3 {
                assert_eq!(*c, Some(SignConstraint::Negative));
            } else {
                assert!(c.is_none());
            }
        }
        assert!(CmpUnivariate::new().constraints().is_none());
    }
}
