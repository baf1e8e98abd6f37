//! Nonparametric PMF estimation.
//!
//! The loss in [`crate::lrm`] compares model log-ratios against log-ratios
//! of an estimated data PMF. This module provides that estimate three ways:
//!
//! * raw empirical frequencies ([`fit_empirical`]),
//! * Laplace additive smoothing towards a base PMF ([`smooth`]):
//!   `q̂_α(x) = (C_n(x) + α·q̃†(x)) / (n + α·Z†)`,
//! * smoothed *local conditionals* on lattices
//!   ([`fit_local_conditionals`]), which is what makes Markov random
//!   fields with tens of thousands of sites tractable.
//!
//! With `α = 0` a ratio touching an unobserved state has no estimate; such
//! terms are reported as [`LogRatio::Omitted`] and the caller drops them
//! from the loss, restricting the sums to the empirical support.

use std::collections::HashMap;

use crate::domain::{DomainSpec, Lattice, StatePoint, StateSet};
use crate::{Error, Result};

/// Tally of observed states.
#[derive(Clone, Debug)]
pub struct EmpiricalCounts {
    counts: HashMap<StatePoint, u64>,
    n: u64,
}

impl EmpiricalCounts {
    pub fn count(&self, x: &StatePoint) -> u64 {
        self.counts.get(x).copied().unwrap_or(0)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StatePoint, u64)> {
        self.counts.iter().map(|(k, &v)| (k, v))
    }

    /// Distinct observed states in sorted order (deterministic output).
    pub fn support(&self) -> Vec<&StatePoint> {
        let mut s: Vec<&StatePoint> = self.counts.keys().collect();
        s.sort();
        s
    }
}

/// Tabulate a sample. All points must share one dimension.
pub fn fit_empirical(samples: &[StatePoint]) -> Result<EmpiricalCounts> {
    let first = samples
        .first()
        .ok_or_else(|| Error::BadData("cannot fit a PMF to an empty sample".into()))?;
    let d = first.dim();
    let mut counts: HashMap<StatePoint, u64> = HashMap::new();
    for x in samples {
        if x.dim() != d {
            return Err(Error::BadData(format!(
                "mixed dimensions in sample: {} and {}",
                d,
                x.dim()
            )));
        }
        *counts.entry(x.clone()).or_insert(0) += 1;
    }
    Ok(EmpiricalCounts {
        counts,
        n: samples.len() as u64,
    })
}

/// The distribution the smoothed estimate shrinks towards.
#[derive(Clone, Debug)]
pub enum BasePmf {
    /// Uniform over a finite domain: `q̃† ≡ 1`, `Z† = |X|`.
    UniformFinite { domain: DomainSpec, size: f64 },
    /// For unbounded count domains: a normalised mixture
    /// `(1-ε)·Uniform(X̃) + ε·r` where `X̃` is the axis-aligned box
    /// `[0, hi_j]` containing the data and `r` is a product of
    /// Geometric(1/2) tails, positive on the whole space. `Z† = 1`.
    Mixture { box_hi: Vec<i64>, eps: f64 },
}

impl BasePmf {
    pub fn uniform(domain: &DomainSpec) -> Result<Self> {
        let size = domain.size().ok_or_else(|| {
            Error::InvalidSpec("uniform base PMF needs a finite domain".into())
        })?;
        Ok(BasePmf::UniformFinite {
            domain: domain.clone(),
            size: size as f64,
        })
    }

    /// Mixture base sized to a sample from a count domain.
    pub fn mixture_for_counts(samples: &[StatePoint], eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) || eps == 0.0 {
            return Err(Error::InvalidSpec(format!(
                "mixture weight must lie in (0,1), got {eps}"
            )));
        }
        let first = samples
            .first()
            .ok_or_else(|| Error::BadData("empty sample for mixture base".into()))?;
        let mut hi = vec![0i64; first.dim()];
        for x in samples {
            for (h, &v) in hi.iter_mut().zip(x.coords()) {
                *h = (*h).max(v);
            }
        }
        Ok(BasePmf::Mixture { box_hi: hi, eps })
    }

    /// Unnormalised base mass `q̃†(x)`.
    pub fn mass_unnorm(&self, x: &StatePoint) -> f64 {
        match self {
            BasePmf::UniformFinite { domain, .. } => {
                if domain.contains(x) {
                    1.0
                } else {
                    0.0
                }
            }
            BasePmf::Mixture { box_hi, eps } => {
                if x.coords().iter().any(|&v| v < 0) {
                    return 0.0;
                }
                let in_box = x.coords().iter().zip(box_hi).all(|(&v, &h)| v <= h);
                let box_size: f64 = box_hi.iter().map(|&h| (h + 1) as f64).product();
                let uniform = if in_box { (1.0 - eps) / box_size } else { 0.0 };
                // Product of Geometric(1/2) masses: 2^-(v+1) per coordinate.
                let tail_log2: f64 = x.coords().iter().map(|&v| -(v as f64) - 1.0).sum();
                uniform + eps * tail_log2.exp2()
            }
        }
    }

    /// Normaliser `Z† = Σ_x q̃†(x)`.
    pub fn normaliser(&self) -> f64 {
        match self {
            BasePmf::UniformFinite { size, .. } => *size,
            BasePmf::Mixture { .. } => 1.0,
        }
    }
}

/// Result of asking a smoothed PMF for a log mass ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LogRatio {
    Value(f64),
    /// No estimate available: `α = 0` and at least one state unobserved.
    /// Loss assemblies skip the whole term.
    Omitted,
}

impl LogRatio {
    pub fn value(self) -> Option<f64> {
        match self {
            LogRatio::Value(v) => Some(v),
            LogRatio::Omitted => None,
        }
    }
}

/// Laplace-smoothed PMF estimate.
#[derive(Clone, Debug)]
pub struct SmoothedPmf {
    counts: EmpiricalCounts,
    alpha: f64,
    base: Option<BasePmf>,
}

/// Combine counts with a base PMF: `q̂_α(x) = (C_n(x) + α q̃†(x)) / (n + α Z†)`.
///
/// `base` may be omitted only when `α = 0`, which reduces to the plain
/// empirical PMF.
pub fn smooth(counts: EmpiricalCounts, alpha: f64, base: Option<BasePmf>) -> Result<SmoothedPmf> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "smoothing weight must be finite and nonnegative, got {alpha}"
        )));
    }
    if alpha > 0.0 && base.is_none() {
        return Err(Error::InvalidSpec(
            "smoothing with α > 0 needs a base PMF".into(),
        ));
    }
    Ok(SmoothedPmf {
        counts,
        alpha,
        base,
    })
}

impl SmoothedPmf {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn counts(&self) -> &EmpiricalCounts {
        &self.counts
    }

    /// The smoothed mass `q̂_α(x)`.
    pub fn mass(&self, x: &StatePoint) -> f64 {
        let c = self.counts.count(x) as f64;
        let n = self.counts.n() as f64;
        match (&self.base, self.alpha) {
            (_, a) if a == 0.0 => c / n,
            (Some(b), a) => (c + a * b.mass_unnorm(x)) / (n + a * b.normaliser()),
            (None, _) => unreachable!("smooth() enforces base presence for α > 0"),
        }
    }

    /// `log q̂(x') / q̂(x)`, or [`LogRatio::Omitted`] when `α = 0` leaves one
    /// of the masses without an estimate.
    ///
    /// With `α > 0` a zero *base* mass at either state breaks the standing
    /// positivity assumption and is an error rather than an omission.
    pub fn log_ratio(&self, x_prime: &StatePoint, x: &StatePoint) -> Result<LogRatio> {
        let c_prime = self.counts.count(x_prime) as f64;
        let c = self.counts.count(x) as f64;
        if self.alpha == 0.0 {
            if c_prime == 0.0 || c == 0.0 {
                return Ok(LogRatio::Omitted);
            }
            return Ok(LogRatio::Value((c_prime / c).ln()));
        }
        let b = self.base.as_ref().unwrap();
        let (b_prime, b_x) = (b.mass_unnorm(x_prime), b.mass_unnorm(x));
        if b_prime <= 0.0 || b_x <= 0.0 {
            return Err(Error::BadPmf(format!(
                "base PMF mass is zero at {:?}; smoothed ratios need positive base mass",
                if b_prime <= 0.0 { x_prime } else { x }
            )));
        }
        // The common denominator n + αZ† cancels in the ratio.
        let a = self.alpha;
        Ok(LogRatio::Value(
            ((c_prime + a * b_prime) / (c + a * b_x)).ln(),
        ))
    }
}

/// Marker for a missing neighbour at a lattice boundary.
pub const ABSENT: i64 = i64::MIN;

/// Canonical neighbourhood: the multiset of up to 4 neighbour states,
/// sorted, padded with [`ABSENT`]. Sorting makes the key invariant to the
/// order neighbours are listed in, which is exactly the exchangeability
/// the lattice models' interaction sums have.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct NbKey([i64; 4]);

impl NbKey {
    pub fn new(neighbour_states: &[i64]) -> Self {
        assert!(neighbour_states.len() <= 4, "4-neighbour lattices only");
        let mut k = [ABSENT; 4];
        k[..neighbour_states.len()].copy_from_slice(neighbour_states);
        k.sort_unstable();
        NbKey(k)
    }

    /// The states actually present (boundary sites have fewer than 4).
    pub fn present(&self) -> impl Iterator<Item = i64> + '_ {
        self.0.iter().copied().filter(|&v| v != ABSENT)
    }
}

/// One site of one lattice, as seen by the local-conditional machinery.
#[derive(Clone, Copy, Debug)]
pub struct SiteOccurrence {
    pub state: i64,
    pub nb: NbKey,
}

/// Flatten lattices into per-site (state, neighbourhood) records.
pub fn site_occurrences(lattices: &[Lattice]) -> Vec<SiteOccurrence> {
    let mut out = Vec::new();
    for lat in lattices {
        let geom = lat.geom;
        let mut nb_states = Vec::with_capacity(4);
        for site in 0..geom.sites() {
            nb_states.clear();
            nb_states.extend(geom.neighbours(site).map(|j| lat.get(j)));
            out.push(SiteOccurrence {
                state: lat.get(site),
                nb: NbKey::new(&nb_states),
            });
        }
    }
    out
}

/// Smoothed conditional distribution of a site state given its
/// canonicalised neighbourhood.
#[derive(Clone, Debug)]
pub struct LocalConditionalTable {
    /// Per neighbourhood key, a count per state (indexed as in `states`).
    table: HashMap<NbKey, Vec<u64>>,
    states: StateSet,
    alpha: f64,
}

impl LocalConditionalTable {
    /// Tally occurrences directly. This is the bootstrap-friendly entry
    /// point: resampling site occurrences and refitting goes through here.
    pub fn fit(occ: &[SiteOccurrence], states: &StateSet, alpha: f64) -> Result<Self> {
        if alpha < 0.0 || !alpha.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "smoothing weight must be finite and nonnegative, got {alpha}"
            )));
        }
        let mut table: HashMap<NbKey, Vec<u64>> = HashMap::new();
        for o in occ {
            let idx = states.index_of(o.state).ok_or_else(|| {
                Error::BadData(format!("site state {} outside the state set", o.state))
            })?;
            table.entry(o.nb).or_insert_with(|| vec![0; states.len()])[idx] += 1;
        }
        Ok(LocalConditionalTable {
            table,
            states: states.clone(),
            alpha,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn states(&self) -> &StateSet {
        &self.states
    }

    /// `q̂(s | nb) = (count(nb, s) + α) / (Σ_{s'} count(nb, s') + α|S|)`.
    ///
    /// With `α = 0` and an unseen (neighbourhood, state) pair the estimate
    /// does not exist; `None` is returned and ratio callers treat the term
    /// as omitted.
    pub fn conditional(&self, nb: NbKey, s: i64) -> Option<f64> {
        let idx = self.states.index_of(s)?;
        let zero = vec![]; // treated as all-zero counts
        let counts = self.table.get(&nb).unwrap_or(&zero);
        let c = counts.get(idx).copied().unwrap_or(0) as f64;
        let total: u64 = counts.iter().sum();
        let denom = total as f64 + self.alpha * self.states.len() as f64;
        if denom == 0.0 || (self.alpha == 0.0 && c == 0.0) {
            return None;
        }
        Some((c + self.alpha) / denom)
    }

    /// `log q̂(s_new | nb) / q̂(s_old | nb)` with `Omitted` semantics at α=0.
    pub fn log_ratio(&self, nb: NbKey, s_new: i64, s_old: i64) -> Result<LogRatio> {
        let a = match self.conditional(nb, s_new) {
            Some(v) => v,
            None => return Ok(LogRatio::Omitted),
        };
        let b = match self.conditional(nb, s_old) {
            Some(v) => v,
            None => return Ok(LogRatio::Omitted),
        };
        Ok(LogRatio::Value((a / b).ln()))
    }
}

/// Fit local conditionals from whole lattices.
///
/// All lattices must share geometry and state set.
pub fn fit_local_conditionals(
    lattices: &[Lattice],
    alpha: f64,
) -> Result<LocalConditionalTable> {
    let first = lattices
        .first()
        .ok_or_else(|| Error::BadData("no lattices to fit".into()))?;
    for lat in lattices {
        if lat.geom != first.geom || lat.states != first.states {
            return Err(Error::BadData(
                "lattices disagree on geometry or state set".into(),
            ));
        }
    }
    let occ = site_occurrences(lattices);
    LocalConditionalTable::fit(&occ, &first.states, alpha)
}

/// An explicit PMF over a finite domain, for exact divergence work.
#[derive(Clone, Debug)]
pub struct FinitePmf {
    domain: DomainSpec,
    mass: HashMap<StatePoint, f64>,
}

impl FinitePmf {
    /// Normalised table over all states of `domain` (order must match
    /// `domain.enumerate`). Weights are normalised here; they need only be
    /// nonnegative with a positive sum.
    pub fn from_weights(domain: &DomainSpec, weights: &[f64]) -> Result<Self> {
        let states = domain.enumerate(crate::domain::ENUMERATION_CAP)?;
        if states.len() != weights.len() {
            return Err(Error::BadPmf(format!(
                "{} weights for {} states",
                weights.len(),
                states.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::BadPmf("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::BadPmf("weights sum to zero".into()));
        }
        Ok(FinitePmf {
            domain: domain.clone(),
            mass: states
                .into_iter()
                .zip(weights.iter().map(|w| w / total))
                .collect(),
        })
    }

    pub fn uniform(domain: &DomainSpec) -> Result<Self> {
        let n = domain
            .size()
            .ok_or_else(|| Error::InvalidSpec("uniform PMF needs a finite domain".into()))?;
        let w = vec![1.0; n as usize];
        FinitePmf::from_weights(domain, &w)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn mass(&self, x: &StatePoint) -> f64 {
        self.mass.get(x).copied().unwrap_or(0.0)
    }

    /// States in sorted order with their masses.
    pub fn iter_sorted(&self) -> Vec<(&StatePoint, f64)> {
        let mut v: Vec<(&StatePoint, f64)> = self.mass.iter().map(|(k, &m)| (k, m)).collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{LatticeGeometry, StateSet};
    use approx::assert_relative_eq;

    fn pts(vs: &[i64]) -> Vec<StatePoint> {
        vs.iter().map(|&v| StatePoint::scalar(v)).collect()
    }

    #[test]
    fn empirical_tally() {
        let c = fit_empirical(&pts(&[0, 0, 1])).unwrap();
        assert_eq!(c.count(&StatePoint::scalar(0)), 2);
        assert_eq!(c.count(&StatePoint::scalar(1)), 1);
        assert_eq!(c.n(), 3);
        assert!(fit_empirical(&[]).is_err());

        let multi = fit_empirical(&[
            StatePoint::new(vec![0, 1]),
            StatePoint::new(vec![0, 1]),
        ])
        .unwrap();
        assert_eq!(multi.count(&StatePoint::new(vec![0, 1])), 2);
    }

    #[test]
    fn smoothing_arithmetic() {
        // counts {0:3, 1:1}, n=4, α=1, uniform base on {0,1,2}:
        // q̂ = (4/7, 2/7, 1/7).
        let d = DomainSpec::finite_product(vec![StateSet::range(0, 2).unwrap()]).unwrap();
        let counts = fit_empirical(&pts(&[0, 0, 0, 1])).unwrap();
        let q = smooth(counts, 1.0, Some(BasePmf::uniform(&d).unwrap())).unwrap();
        assert_relative_eq!(q.mass(&StatePoint::scalar(0)), 4.0 / 7.0, epsilon = 1e-15);
        assert_relative_eq!(q.mass(&StatePoint::scalar(1)), 2.0 / 7.0, epsilon = 1e-15);
        assert_relative_eq!(q.mass(&StatePoint::scalar(2)), 1.0 / 7.0, epsilon = 1e-15);
    }

    #[test]
    fn alpha_zero_is_empirical_and_alpha_large_is_base() {
        let d = DomainSpec::finite_product(vec![StateSet::range(0, 2).unwrap()]).unwrap();
        let counts = fit_empirical(&pts(&[0, 0, 0, 1])).unwrap();
        let emp = smooth(counts.clone(), 0.0, None).unwrap();
        assert_relative_eq!(emp.mass(&StatePoint::scalar(0)), 0.75);
        assert_relative_eq!(emp.mass(&StatePoint::scalar(2)), 0.0);

        let big = smooth(counts, 1e9, Some(BasePmf::uniform(&d).unwrap())).unwrap();
        for v in 0..3 {
            assert_relative_eq!(big.mass(&StatePoint::scalar(v)), 1.0 / 3.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn smoothing_needs_base() {
        let counts = fit_empirical(&pts(&[0])).unwrap();
        assert!(smooth(counts, 0.5, None).is_err());
    }

    #[test]
    fn normalisation_on_finite_domain() {
        let d = DomainSpec::finite_product(vec![StateSet::range(0, 4).unwrap()]).unwrap();
        let counts = fit_empirical(&pts(&[0, 1, 1, 3, 4, 4, 4])).unwrap();
        for &alpha in &[0.0, 0.1, 1.0, 10.0] {
            let base = (alpha > 0.0).then(|| BasePmf::uniform(&d).unwrap());
            let q = smooth(counts.clone(), alpha, base).unwrap();
            let total: f64 = d
                .enumerate(100)
                .unwrap()
                .iter()
                .map(|x| q.mass(x))
                .sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_ratio_semantics() {
        let counts = fit_empirical(&pts(&[0, 0, 0, 1])).unwrap();
        let q = smooth(counts, 0.0, None).unwrap();
        // Empirical ratio (1/4)/(3/4) = 1/3.
        let r = q
            .log_ratio(&StatePoint::scalar(1), &StatePoint::scalar(0))
            .unwrap();
        assert_relative_eq!(r.value().unwrap(), (1.0f64 / 3.0).ln(), epsilon = 1e-15);
        // Same state: exactly zero.
        let same = q
            .log_ratio(&StatePoint::scalar(0), &StatePoint::scalar(0))
            .unwrap();
        assert_eq!(same, LogRatio::Value(0.0));
        // Unobserved state at α = 0: omitted, not an error.
        let omitted = q
            .log_ratio(&StatePoint::scalar(2), &StatePoint::scalar(0))
            .unwrap();
        assert_eq!(omitted, LogRatio::Omitted);
    }

    #[test]
    fn log_ratio_zero_base_mass_is_an_error() {
        // Uniform base on {0,1,2}; asking about state 5 breaks positivity.
        let d = DomainSpec::finite_product(vec![StateSet::range(0, 2).unwrap()]).unwrap();
        let counts = fit_empirical(&pts(&[0, 1])).unwrap();
        let q = smooth(counts, 0.5, Some(BasePmf::uniform(&d).unwrap())).unwrap();
        assert!(q
            .log_ratio(&StatePoint::scalar(5), &StatePoint::scalar(0))
            .is_err());
    }

    #[test]
    fn mixture_base_positive_everywhere_and_normalised() {
        let samples = pts(&[0, 3, 7]);
        let b = BasePmf::mixture_for_counts(&samples, 0.01).unwrap();
        // Positive far outside the data box.
        assert!(b.mass_unnorm(&StatePoint::scalar(1000)) > 0.0);
        // Numerically sums to ~1 over a long prefix of the support.
        let total: f64 = (0..200)
            .map(|v| b.mass_unnorm(&StatePoint::scalar(v)))
            .sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-9);
        assert_relative_eq!(b.normaliser(), 1.0);
    }

    #[test]
    fn consistency_shadow_of_the_pmf_estimator() {
        // Sampling from a known 5-state PMF: the sup-error of the smoothed
        // estimate must shrink (in median over 20 seeds) as n grows.
        use rand::prelude::*;
        let q0 = [0.4, 0.3, 0.15, 0.1, 0.05];
        let d = DomainSpec::finite_product(vec![StateSet::range(0, 4).unwrap()]).unwrap();
        let base = BasePmf::uniform(&d).unwrap();
        let mut med_errs = Vec::new();
        for &n in &[100usize, 1_000, 10_000] {
            let mut errs = Vec::new();
            for seed in 0..20u64 {
                let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1_000 + seed);
                let sample: Vec<StatePoint> = (0..n)
                    .map(|_| {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        let mut pick = 4;
                        for (i, &p) in q0.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                pick = i;
                                break;
                            }
                        }
                        StatePoint::scalar(pick as i64)
                    })
                    .collect();
                let q = smooth(
                    fit_empirical(&sample).unwrap(),
                    0.1,
                    Some(base.clone()),
                )
                .unwrap();
                let err = (0..5)
                    .map(|v| (q.mass(&StatePoint::scalar(v)) - q0[v as usize]).abs())
                    .fold(0.0f64, f64::max);
                errs.push(err);
            }
            errs.sort_by(f64::total_cmp);
            med_errs.push(errs[10]);
        }
        assert!(
            med_errs[0] > med_errs[1] && med_errs[1] > med_errs[2],
            "median sup-error should fall with n: {med_errs:?}"
        );
    }

    #[test]
    fn neighbourhood_key_is_order_invariant() {
        let a = NbKey::new(&[1, -1, 1, -1]);
        let b = NbKey::new(&[-1, 1, -1, 1]);
        assert_eq!(a, b);
        // Boundary padding distinguishes shorter neighbourhoods.
        assert_ne!(NbKey::new(&[1, 1]), NbKey::new(&[1, 1, 1]));
        assert_eq!(NbKey::new(&[1, -1]).present().count(), 2);
    }

    #[test]
    fn local_conditionals_on_degenerate_lattice() {
        // All-(+1) 2x2 lattice at α = 0: the only observed neighbourhoods
        // give conditional 1 for +1 and no estimate for -1.
        let geom = LatticeGeometry::new(2, 2).unwrap();
        let lat = Lattice::new(geom, StateSet::spins(), vec![1, 1, 1, 1]).unwrap();
        let t = fit_local_conditionals(&[lat], 0.0).unwrap();
        let nb = NbKey::new(&[1, 1]);
        assert_relative_eq!(t.conditional(nb, 1).unwrap(), 1.0);
        assert!(t.conditional(nb, -1).is_none());
        assert_eq!(t.log_ratio(nb, -1, 1).unwrap(), LogRatio::Omitted);
    }

    #[test]
    fn local_conditional_smoothing_arithmetic() {
        // One neighbourhood seen 3 times, always in state s0, |S| = 4, α=1:
        // q̂(s0|nb) = 4/7 and 1/7 for each unseen state.
        let states = StateSet::range(0, 3).unwrap();
        let nb = NbKey::new(&[0, 1, 2, 3]);
        let occ: Vec<SiteOccurrence> = (0..3)
            .map(|_| SiteOccurrence { state: 0, nb })
            .collect();
        let t = LocalConditionalTable::fit(&occ, &states, 1.0).unwrap();
        assert_relative_eq!(t.conditional(nb, 0).unwrap(), 4.0 / 7.0, epsilon = 1e-15);
        for s in 1..4 {
            assert_relative_eq!(t.conditional(nb, s).unwrap(), 1.0 / 7.0, epsilon = 1e-15);
        }
        // Normalisation per neighbourhood key.
        let total: f64 = (0..4).map(|s| t.conditional(nb, s).unwrap()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        // Unseen neighbourhood still normalises under smoothing.
        let fresh = NbKey::new(&[3, 3, 3, 3]);
        assert_relative_eq!(t.conditional(fresh, 2).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn finite_pmf_validation() {
        let d = DomainSpec::finite_product(vec![StateSet::range(0, 1).unwrap()]).unwrap();
        let p = FinitePmf::from_weights(&d, &[1.0, 3.0]).unwrap();
        assert_relative_eq!(p.mass(&StatePoint::scalar(0)), 0.25);
        assert_relative_eq!(p.mass(&StatePoint::scalar(1)), 0.75);
        assert!(FinitePmf::from_weights(&d, &[1.0]).is_err());
        assert!(FinitePmf::from_weights(&d, &[-1.0, 2.0]).is_err());
        assert!(FinitePmf::from_weights(&d, &[0.0, 0.0]).is_err());
    }
}
