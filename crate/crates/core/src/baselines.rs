//! Competing posterior targets that share the random-walk MCMC engine:
//! the discrete Fisher divergence (DFD), pseudo-likelihood for lattice
//! models, and the likelihood with a truncated normalising constant.
//!
//! Each loss has a direct evaluator (the reference implementation used in
//! tests) and a compressed table that aggregates repeated observations so
//! MCMC chains pay per *distinct* data value, not per observation.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::domain::{CoordKind, Lattice, StatePoint};
use crate::linalg::cholesky_spd;
use crate::lrm::GaussianPosterior;
use crate::lrm::GaussianPrior;
use crate::models::{CmpUnivariate, ExpFamily, MrfModel};
use crate::numeric::log_sum_exp;
use crate::pmf::{site_occurrences, NbKey};
use crate::samplers::RngSpec;
use crate::{Error, Result};

/// Exponent cap: anything needing `exp` beyond this is reported as an
/// overflowing (infinite) loss so rejection samplers back away cleanly.
const EXP_CAP: f64 = 700.0;

// ---------------------------------------------------------------------------
// Discrete Fisher divergence
// ---------------------------------------------------------------------------

/// DFD empirical loss: for each observation and coordinate `j`, the
/// squared backward mass ratio minus twice the forward ratio,
/// `(p(x − e_j)/p(x))² − 2 p(x)/p(x + e_j)`, averaged over observations.
/// At `x_j = 0` the backward ratio is taken as 0 — mass outside the
/// count domain. Overflow in either exponential yields +∞.
pub fn dfd_loss<Mo: ExpFamily + ?Sized>(
    model: &Mo,
    eta: &DVector<f64>,
    samples: &[StatePoint],
) -> f64 {
    let d = model.domain().dim();
    let mut acc = 0.0;
    for x in samples {
        for j in 0..d {
            let (back, fwd) = dfd_exponents(model, eta, x, j);
            match term_value(back, fwd) {
                Some(v) => acc += v,
                None => return f64::INFINITY,
            }
        }
    }
    acc / samples.len() as f64
}

/// Backward/forward log mass ratios entering one DFD term.
fn dfd_exponents<Mo: ExpFamily + ?Sized>(
    model: &Mo,
    eta: &DVector<f64>,
    x: &StatePoint,
    j: usize,
) -> (Option<f64>, f64) {
    let back = if x.get(j) > 0 {
        Some(model.log_ratio(eta, &x.with_coord(j, x.get(j) - 1), x))
    } else {
        None
    };
    let fwd = -model.log_ratio(eta, &x.with_coord(j, x.get(j) + 1), x);
    (back, fwd)
}

/// One DFD term from its log ratios, `None` on overflow.
fn term_value(back: Option<f64>, fwd: f64) -> Option<f64> {
    let b = match back {
        Some(a) if 2.0 * a > EXP_CAP => return None,
        Some(a) => (2.0 * a).exp(),
        None => 0.0,
    };
    if fwd > EXP_CAP {
        return None;
    }
    Some(b - 2.0 * fwd.exp())
}

struct DfdTerm {
    /// Share of observations with this value (counts / n).
    weight: f64,
    /// Backward ΔT and ΔB per coordinate; absent on the domain boundary.
    back: Vec<Option<(DVector<f64>, f64)>>,
    /// Forward ΔT and ΔB per coordinate, oriented as log p(x)/p(x + e_j).
    fwd: Vec<(DVector<f64>, f64)>,
}

/// DFD loss compressed over distinct observations: evaluation cost scales
/// with the number of distinct data values, which is what makes MCMC and
/// bootstrap-calibration loops affordable.
pub struct DfdLossTable {
    terms: Vec<DfdTerm>,
    p: usize,
    n: u64,
}

impl DfdLossTable {
    pub fn new<Mo: ExpFamily + ?Sized>(model: &Mo, samples: &[StatePoint]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::BadData("no observations".into()));
        }
        let d = model.domain().dim();
        for j in 0..d {
            if !matches!(model.domain().kind(j), CoordKind::Count) {
                return Err(Error::InvalidSpec(
                    "forward/backward mass ratios need count-valued coordinates".into(),
                ));
            }
        }
        let mut counts: HashMap<&StatePoint, u64> = HashMap::new();
        for x in samples {
            if !model.domain().contains(x) {
                return Err(Error::BadData(format!("observation {x:?} is outside the domain")));
            }
            *counts.entry(x).or_insert(0) += 1;
        }
        let n = samples.len() as f64;
        // Deterministic term order regardless of hash state.
        let mut distinct: Vec<(&StatePoint, u64)> = counts.into_iter().collect();
        distinct.sort_by(|a, b| a.0.cmp(b.0));
        let terms = distinct
            .into_iter()
            .map(|(x, c)| {
                let t_x = model.sufficient(x);
                let b_x = model.base(x);
                let mut back = Vec::with_capacity(d);
                let mut fwd = Vec::with_capacity(d);
                for j in 0..d {
                    back.push((x.get(j) > 0).then(|| {
                        let xm = x.with_coord(j, x.get(j) - 1);
                        (model.sufficient(&xm) - &t_x, model.base(&xm) - b_x)
                    }));
                    let xp = x.with_coord(j, x.get(j) + 1);
                    fwd.push((&t_x - model.sufficient(&xp), b_x - model.base(&xp)));
                }
                DfdTerm {
                    weight: c as f64 / n,
                    back,
                    fwd,
                }
            })
            .collect();
        Ok(DfdLossTable {
            terms,
            p: model.dim(),
            n: samples.len() as u64,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn eval(&self, eta: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for term in &self.terms {
            for (back, fwd) in term.back.iter().zip(&term.fwd) {
                let a = back.as_ref().map(|(dt, db)| eta.dot(dt) + db);
                let b = eta.dot(&fwd.0) + fwd.1;
                match term_value(a, b) {
                    Some(v) => acc += term.weight * v,
                    None => return f64::INFINITY,
                }
            }
        }
        acc
    }

    /// Gradient of the loss; `None` when any exponential overflows.
    pub fn gradient(&self, eta: &DVector<f64>) -> Option<DVector<f64>> {
        let mut g = DVector::zeros(self.p);
        for term in &self.terms {
            for (back, fwd) in term.back.iter().zip(&term.fwd) {
                if let Some((dt, db)) = back {
                    let a = eta.dot(dt) + db;
                    if 2.0 * a > EXP_CAP {
                        return None;
                    }
                    g.axpy(term.weight * 2.0 * (2.0 * a).exp(), dt, 1.0);
                }
                let b = eta.dot(&fwd.0) + fwd.1;
                if b > EXP_CAP {
                    return None;
                }
                g.axpy(-term.weight * 2.0 * b.exp(), &fwd.0, 1.0);
            }
        }
        Some(g)
    }

    /// Hessian of the loss; `None` when any exponential overflows.
    pub fn hessian(&self, eta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut h = DMatrix::zeros(self.p, self.p);
        for term in &self.terms {
            for (back, fwd) in term.back.iter().zip(&term.fwd) {
                if let Some((dt, db)) = back {
                    let a = eta.dot(dt) + db;
                    if 2.0 * a > EXP_CAP {
                        return None;
                    }
                    h.ger(term.weight * 4.0 * (2.0 * a).exp(), dt, dt, 1.0);
                }
                let b = eta.dot(&fwd.0) + fwd.1;
                if b > EXP_CAP {
                    return None;
                }
                h.ger(-term.weight * 2.0 * b.exp(), &fwd.0, &fwd.0, 1.0);
            }
        }
        Some(h)
    }
}

/// Minimise the DFD loss by damped Newton iteration with a
/// Levenberg-style diagonal ladder (the Hessian is not convex globally,
/// so pure Newton steps are guarded by a decrease condition).
pub fn dfd_min_estimate(table: &DfdLossTable, init: &DVector<f64>) -> Result<DVector<f64>> {
    if init.len() != table.p {
        return Err(Error::InvalidSpec(format!(
            "initial point has dimension {}, loss has {}",
            init.len(),
            table.p
        )));
    }
    let mut eta = init.clone();
    let mut loss = table.eval(&eta);
    if !loss.is_finite() {
        return Err(Error::Numerical(
            "DFD loss overflows at the initial point; start closer to the data".into(),
        ));
    }
    for _ in 0..200 {
        let g = table
            .gradient(&eta)
            .ok_or_else(|| Error::Numerical("DFD gradient overflowed".into()))?;
        if g.amax() < 1e-9 {
            return Ok(eta);
        }
        let h = table
            .hessian(&eta)
            .ok_or_else(|| Error::Numerical("DFD Hessian overflowed".into()))?;
        let mut stepped = false;
        for damping in [0.0, 1e-8, 1e-4, 1e-2, 1.0, 1e2, 1e4] {
            let mut hd = h.clone();
            for i in 0..table.p {
                hd[(i, i)] += damping;
            }
            let Ok((ch, _)) = cholesky_spd(&hd, "damped DFD Newton system") else {
                continue;
            };
            let step = ch.solve(&(-&g));
            let cand = &eta + &step;
            let cand_loss = table.eval(&cand);
            if cand_loss.is_finite() && cand_loss < loss {
                eta = cand;
                loss = cand_loss;
                stepped = true;
                break;
            }
        }
        if !stepped {
            // Rounding can block a strict decrease right at the bottom of the
            // bowl; accept the point if the gradient is small enough to call
            // converged, otherwise report the stall.
            if g.amax() < 1e-6 {
                return Ok(eta);
            }
            return Err(Error::Numerical(
                "DFD minimisation stalled: no damped step decreases the loss".into(),
            ));
        }
    }
    Err(Error::Numerical(
        "DFD minimisation did not converge in 200 iterations".into(),
    ))
}

// ---------------------------------------------------------------------------
// Pseudo-likelihood
// ---------------------------------------------------------------------------

/// Negative mean log conditional over every site of every lattice, each
/// conditional normalised over the full state set (which is tractable).
pub fn pseudo_likelihood_loss(
    model: &MrfModel,
    eta: &DVector<f64>,
    lattices: &[Lattice],
) -> Result<f64> {
    check_lattices(model, lattices)?;
    if eta.len() != model.dim() {
        return Err(Error::InvalidSpec(format!(
            "parameter length {} disagrees with model dimension {}",
            eta.len(),
            model.dim()
        )));
    }
    let states = model.states().values().to_vec();
    let mut acc = 0.0;
    let mut sites = 0u64;
    for lat in lattices {
        for site in 0..model.geometry().sites() {
            let log_w: Vec<f64> = states
                .iter()
                .map(|&s| eta.dot(&model.local_statistic(lat, site, s)))
                .collect();
            let idx = model
                .states()
                .index_of(lat.get(site))
                .expect("lattice states validated against the model");
            acc -= log_w[idx] - log_sum_exp(&log_w);
            sites += 1;
        }
    }
    Ok(acc / sites as f64)
}

fn check_lattices(model: &MrfModel, lattices: &[Lattice]) -> Result<()> {
    if lattices.is_empty() {
        return Err(Error::BadData("no lattices".into()));
    }
    for lat in lattices {
        if lat.geom != model.geometry() || lat.states != *model.states() {
            return Err(Error::BadData(
                "lattice geometry or state set disagrees with the model".into(),
            ));
        }
    }
    Ok(())
}

/// Pseudo-likelihood loss aggregated over distinct (state, neighbourhood)
/// classes — with the site and pair potentials in use, the conditional
/// depends on the neighbourhood only through its multiset, so lattices
/// collapse to a few dozen classes and MCMC evaluation cost stops
/// depending on lattice size.
pub struct PlLossTable {
    /// Per class: observation count, statistics of the observed state,
    /// and statistics of every candidate state.
    classes: Vec<(f64, usize, Vec<DVector<f64>>)>,
    p: usize,
    n: u64,
}

impl PlLossTable {
    pub fn new(model: &MrfModel, lattices: &[Lattice]) -> Result<Self> {
        check_lattices(model, lattices)?;
        let occurrences = site_occurrences(lattices);
        let n = occurrences.len() as u64;
        let mut counts: HashMap<(i64, NbKey), u64> = HashMap::new();
        for occ in &occurrences {
            *counts.entry((occ.state, occ.nb)).or_insert(0) += 1;
        }
        let mut keys: Vec<((i64, NbKey), u64)> = counts.into_iter().collect();
        keys.sort_by_key(|&((s, nb), _)| (s, nb));
        let states = model.states().values().to_vec();
        let classes = keys
            .into_iter()
            .map(|((state, nb), count)| {
                let nb_states: Vec<i64> = nb.present().collect();
                let stats: Vec<DVector<f64>> = states
                    .iter()
                    .map(|&s| model.local_statistic_from_neighbours(s, &nb_states))
                    .collect();
                let idx = model
                    .states()
                    .index_of(state)
                    .expect("occurrence states come from validated lattices");
                (count as f64, idx, stats)
            })
            .collect();
        Ok(PlLossTable {
            classes,
            p: model.dim(),
            n,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn eval(&self, eta: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        let mut log_w = Vec::new();
        for (count, idx, stats) in &self.classes {
            log_w.clear();
            log_w.extend(stats.iter().map(|t| eta.dot(t)));
            acc -= count * (log_w[*idx] - log_sum_exp(&log_w));
        }
        acc / self.n as f64
    }
}

// ---------------------------------------------------------------------------
// Truncated likelihood
// ---------------------------------------------------------------------------

/// Negative mean log-likelihood for the univariate CMP model with the
/// normalising constant replaced by the partial sum `Σ_{y=0}^{K}` of
/// unnormalised masses. `K` must cover every observation.
pub fn truncated_likelihood_loss(
    model: &CmpUnivariate,
    eta: &DVector<f64>,
    samples: &[i64],
    truncation: u64,
) -> Result<f64> {
    Ok(TruncatedLikTable::new(model, samples, truncation)?.eval(eta))
}

/// Truncated-likelihood loss with the data reduced to its mean sufficient
/// statistic (exact, not an approximation — the loss is exponential
/// family).
pub struct TruncatedLikTable {
    mean_t: DVector<f64>,
    support_t: Vec<DVector<f64>>,
    n: u64,
}

impl TruncatedLikTable {
    pub fn new(model: &CmpUnivariate, samples: &[i64], truncation: u64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::BadData("no observations".into()));
        }
        let max = *samples.iter().max().expect("nonempty");
        if max < 0 {
            return Err(Error::BadData("negative counts".into()));
        }
        if (max as u64) > truncation {
            return Err(Error::InvalidSpec(format!(
                "truncation level {truncation} is below the largest observation {max}; \
                 the truncated normaliser must cover the data"
            )));
        }
        let mut mean_t = DVector::zeros(model.dim());
        for &x in samples {
            mean_t += model.sufficient(&StatePoint::scalar(x));
        }
        mean_t /= samples.len() as f64;
        let support_t = (0..=truncation)
            .map(|y| model.sufficient(&StatePoint::scalar(y as i64)))
            .collect();
        Ok(TruncatedLikTable {
            mean_t,
            support_t,
            n: samples.len() as u64,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Truncated log normaliser `log Σ_{y=0}^{K} p̃_η(y)`.
    pub fn log_z(&self, eta: &DVector<f64>) -> f64 {
        let log_w: Vec<f64> = self.support_t.iter().map(|t| eta.dot(t)).collect();
        log_sum_exp(&log_w)
    }

    pub fn eval(&self, eta: &DVector<f64>) -> f64 {
        -eta.dot(&self.mean_t) + self.log_z(eta)
    }
}

// ---------------------------------------------------------------------------
// Posterior targets for the shared MCMC engine
// ---------------------------------------------------------------------------

/// Which baseline loss a target is built from.
pub enum BaselineLoss {
    Dfd(DfdLossTable),
    PseudoLikelihood(PlLossTable),
    TruncatedLikelihood(TruncatedLikTable),
}

impl BaselineLoss {
    fn eval(&self, eta: &DVector<f64>) -> f64 {
        match self {
            BaselineLoss::Dfd(t) => t.eval(eta),
            BaselineLoss::PseudoLikelihood(t) => t.eval(eta),
            BaselineLoss::TruncatedLikelihood(t) => t.eval(eta),
        }
    }

    fn n(&self) -> u64 {
        match self {
            BaselineLoss::Dfd(t) => t.n(),
            BaselineLoss::PseudoLikelihood(t) => t.n(),
            BaselineLoss::TruncatedLikelihood(t) => t.n(),
        }
    }
}

/// A generalised-posterior target `π(η) · exp(−β n · loss(η))` ready for
/// the random-walk sampler. Construction draws ten prior samples and
/// requires a finite log target at each, so impossible prior/data
/// combinations fail before any chain runs.
pub struct LossTarget {
    loss: BaselineLoss,
    beta: f64,
    prior: GaussianPrior,
}

impl LossTarget {
    pub fn new(
        loss: BaselineLoss,
        beta: f64,
        prior: GaussianPrior,
        check_rng: &RngSpec,
    ) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "the learning rate must be positive and finite, got {beta}"
            )));
        }
        let target = LossTarget { loss, beta, prior };
        let sampler = GaussianPosterior::new(
            target.prior.mu().clone(),
            target.prior.sigma().clone(),
            None,
        )?;
        let mut rng = check_rng.rng()?;
        for _ in 0..10 {
            let eta = sampler.sample_unconstrained(&mut rng);
            let lp = target.log_density(&eta);
            if !lp.is_finite() {
                return Err(Error::Numerical(format!(
                    "log target is {lp} at the prior draw {eta:?}; \
                     the loss overflows on the prior's support"
                )));
            }
        }
        Ok(target)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n(&self) -> u64 {
        self.loss.n()
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    pub fn loss(&self, eta: &DVector<f64>) -> f64 {
        self.loss.eval(eta)
    }

    /// Unnormalised log posterior density.
    pub fn log_density(&self, eta: &DVector<f64>) -> f64 {
        let l = self.loss.eval(eta);
        if l.is_infinite() {
            return f64::NEG_INFINITY;
        }
        -self.beta * self.loss.n() as f64 * l + self.prior.log_density_unnorm(eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_offset_matching_set, LatticeGeometry, StateSet};
    use crate::lrm::{build_quadratic, conjugate_update, WeightFunction};
    use crate::numeric::ln_factorial;
    use crate::pmf::{fit_empirical, smooth};
    use crate::samplers::{gibbs_lattice, rwmh, sample_cmp_rejection, RwmhConfig};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn cmp_samples(theta1: f64, theta2: f64, n: usize, seed: u64) -> Vec<StatePoint> {
        let mut rng = RngSpec::new(seed).rng().unwrap();
        sample_cmp_rejection(theta1, theta2, n, &mut rng)
            .unwrap()
            .into_iter()
            .map(StatePoint::scalar)
            .collect()
    }

    #[test]
    fn dfd_single_sample_by_hand() {
        // x = 2 in the univariate count model: backward ratio uses
        // T(1) − T(2) = (−1, ln 2), forward uses T(2) − T(3) = (−1, ln 3).
        let model = CmpUnivariate::new();
        let eta = DVector::from_row_slice(&[1.2, 0.7]);
        let samples = vec![StatePoint::scalar(2)];
        let a = -eta[0] + eta[1] * 2.0f64.ln();
        let b = -eta[0] + eta[1] * 3.0f64.ln();
        let want = (2.0 * a).exp() - 2.0 * b.exp();
        assert_relative_eq!(dfd_loss(&model, &eta, &samples), want, epsilon = 1e-14);
        let table = DfdLossTable::new(&model, &samples).unwrap();
        assert_relative_eq!(table.eval(&eta), want, epsilon = 1e-14);
    }

    #[test]
    fn dfd_boundary_drops_backward_terms() {
        let model = CmpUnivariate::new();
        let eta: DVector<f64> = DVector::from_row_slice(&[0.8, 1.3]);
        let samples = vec![StatePoint::scalar(0); 5];
        // Only the forward term survives: −2 exp(ηᵀ(T(0) − T(1))) = −2 e^{−η₁}.
        let want = -2.0 * (-eta[0]).exp();
        assert_relative_eq!(dfd_loss(&model, &eta, &samples), want, epsilon = 1e-14);
    }

    #[test]
    fn dfd_table_matches_direct_evaluation() {
        let model = CmpUnivariate::new();
        let samples = cmp_samples(4.0, 0.75, 300, 101);
        let table = DfdLossTable::new(&model, &samples).unwrap();
        let mut rng = RngSpec::new(7).rng().unwrap();
        for _ in 0..20 {
            let eta = DVector::from_fn(2, |_, _| rng.random::<f64>() * 2.0);
            assert_relative_eq!(
                table.eval(&eta),
                dfd_loss(&model, &eta, &samples),
                epsilon = 1e-12,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn dfd_overflow_reports_infinity() {
        let model = CmpUnivariate::new();
        let samples = vec![StatePoint::scalar(2)];
        let eta = DVector::from_row_slice(&[-400.0, 0.0]);
        assert!(dfd_loss(&model, &eta, &samples).is_infinite());
        let table = DfdLossTable::new(&model, &samples).unwrap();
        assert!(table.eval(&eta).is_infinite());
        assert!(table.gradient(&eta).is_none());
    }

    #[test]
    fn dfd_gradient_matches_finite_differences() {
        let model = CmpUnivariate::new();
        let samples = cmp_samples(4.0, 1.2, 100, 103);
        let table = DfdLossTable::new(&model, &samples).unwrap();
        let eta = DVector::from_row_slice(&[1.5, 0.9]);
        let g = table.gradient(&eta).unwrap();
        let h = table.hessian(&eta).unwrap();
        let eps = 1e-6;
        for j in 0..2 {
            let mut up = eta.clone();
            up[j] += eps;
            let mut dn = eta.clone();
            dn[j] -= eps;
            let fd = (table.eval(&up) - table.eval(&dn)) / (2.0 * eps);
            assert_relative_eq!(g[j], fd, epsilon = 1e-6, max_relative = 1e-5);
            let gd = (table.gradient(&up).unwrap() - table.gradient(&dn).unwrap()) / (2.0 * eps);
            for i in 0..2 {
                assert_relative_eq!(h[(i, j)], gd[i], epsilon = 1e-4, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn dfd_minimiser_recovers_well_specified_truth() {
        let samples = cmp_samples(4.0, 1.0, 4000, 107);
        let table = DfdLossTable::new(&CmpUnivariate::new(), &samples).unwrap();
        let est = dfd_min_estimate(&table, &DVector::from_row_slice(&[1.0, 1.0])).unwrap();
        // Truth on the natural scale: (ln 4, 1).
        assert!((est[0] - 4.0f64.ln()).abs() < 0.15, "η₁ = {}", est[0]);
        assert!((est[1] - 1.0).abs() < 0.25, "η₂ = {}", est[1]);
        let g = table.gradient(&est).unwrap();
        assert!(g.amax() < 1e-8);
    }

    #[test]
    fn dfd_posterior_overlaps_conjugate_posterior() {
        // Same data, two posteriors: the DFD random-walk posterior and the
        // conjugate matched-ratio posterior must agree within three
        // combined standard deviations per coordinate at this sample size.
        let n = 2000;
        let samples = cmp_samples(4.0, 0.75, n, 109);
        let model = CmpUnivariate::new();
        let prior = GaussianPrior::new(
            DVector::from_row_slice(&[3.0, 3.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();

        let table = DfdLossTable::new(&model, &samples).unwrap();
        let target =
            LossTarget::new(BaselineLoss::Dfd(table), 1.0, prior.clone(), &RngSpec::new(1))
                .unwrap();
        let cfg = RwmhConfig {
            iters: 6000,
            burn_in: 1500,
            chains: 2,
            scales: DVector::from_element(2, 0.02),
        };
        let chains = rwmh(
            |eta| target.log_density(eta),
            &DVector::from_row_slice(&[1.5, 1.0]),
            &cfg,
            &RngSpec::new(2),
        )
        .unwrap();
        let dfd_mean = chains.mean();
        let dfd_sd = chains.sd();

        let m = build_offset_matching_set(&[1], model.domain()).unwrap();
        let qhat = smooth(fit_empirical(&samples).unwrap(), 0.0, None).unwrap();
        let loss =
            build_quadratic(&model, &samples, &m, &qhat, &WeightFunction::Constant).unwrap();
        let post = conjugate_update(&prior, &loss, 1.0).unwrap();

        for j in 0..2 {
            let combined = (dfd_sd[j].powi(2) + post.sigma()[(j, j)]).sqrt();
            let gap = (dfd_mean[j] - post.mu()[j]).abs();
            assert!(
                gap <= 3.0 * combined,
                "coordinate {j}: gap {gap} vs 3σ = {}",
                3.0 * combined
            );
        }
    }

    #[test]
    fn pl_uniform_at_zero_parameter() {
        for (model, states) in [
            (
                MrfModel::ising(LatticeGeometry::new(4, 4).unwrap()),
                StateSet::spins(),
            ),
            (
                MrfModel::potts(LatticeGeometry::new(4, 4).unwrap(), StateSet::range(0, 2).unwrap()),
                StateSet::range(0, 2).unwrap(),
            ),
        ] {
            let mut rng = RngSpec::new(11).rng().unwrap();
            let values = states.values().to_vec();
            let data: Vec<i64> = (0..16)
                .map(|_| values[rng.random_range(0..values.len())])
                .collect();
            let lat = Lattice::new(model.geometry(), states.clone(), data).unwrap();
            let loss =
                pseudo_likelihood_loss(&model, &DVector::zeros(model.dim()), &[lat]).unwrap();
            assert_relative_eq!(loss, (values.len() as f64).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn pl_conditionals_normalise() {
        // Σ_s p(s | nb) = 1 for random parameters: evaluated through the
        // same local statistics the loss uses.
        let model = MrfModel::ising(LatticeGeometry::new(3, 3).unwrap());
        let mut rng = RngSpec::new(13).rng().unwrap();
        let data: Vec<i64> = (0..9).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let lat = Lattice::new(model.geometry(), StateSet::spins(), data).unwrap();
        for _ in 0..10 {
            let eta = DVector::from_fn(2, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            for site in 0..9 {
                let log_w: Vec<f64> = [-1i64, 1]
                    .iter()
                    .map(|&s| eta.dot(&model.local_statistic(&lat, site, s)))
                    .collect();
                let z = log_sum_exp(&log_w);
                let total: f64 = log_w.iter().map(|&lw| (lw - z).exp()).sum();
                assert_relative_eq!(total, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pl_equals_iid_nll_without_interaction() {
        // θ₂ = 0 decouples the sites, so each conditional is the marginal
        // and the pseudo-likelihood is the exact i.i.d. NLL per site.
        let model = MrfModel::ising(LatticeGeometry::new(4, 4).unwrap());
        let mut rng = RngSpec::new(17).rng().unwrap();
        let data: Vec<i64> = (0..16).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let lat = Lattice::new(model.geometry(), StateSet::spins(), data.clone()).unwrap();
        let theta1: f64 = 0.45;
        let eta = DVector::from_row_slice(&[theta1, 0.0]);
        let z = (theta1.exp() + (-theta1).exp()).ln();
        let want = -data
            .iter()
            .map(|&s| theta1 * s as f64 - z)
            .sum::<f64>()
            / 16.0;
        let got = pseudo_likelihood_loss(&model, &eta, &[lat]).unwrap();
        assert_relative_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn pl_table_matches_direct_evaluation() {
        let model = MrfModel::potts(
            LatticeGeometry::new(8, 8).unwrap(),
            StateSet::range(0, 2).unwrap(),
        );
        let mut rng = RngSpec::new(19).rng().unwrap();
        let lattices: Vec<Lattice> = (0..3)
            .map(|_| {
                gibbs_lattice(&model, &DVector::from_element(1, 0.5), 30, None, &mut rng)
                    .unwrap()
                    .lattice
            })
            .collect();
        let table = PlLossTable::new(&model, &lattices).unwrap();
        assert_eq!(table.n(), 3 * 64);
        for _ in 0..10 {
            let eta = DVector::from_fn(1, |_, _| rng.random::<f64>() * 3.0 - 1.5);
            assert_relative_eq!(
                table.eval(&eta),
                pseudo_likelihood_loss(&model, &eta, &lattices).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn truncated_likelihood_matches_poisson_at_unit_dispersion() {
        let model = CmpUnivariate::new();
        let samples: Vec<i64> = cmp_samples(4.0, 1.0, 500, 23)
            .iter()
            .map(|x| x.get(0))
            .collect();
        let eta = DVector::from_row_slice(&[4.0f64.ln(), 1.0]);
        let got = truncated_likelihood_loss(&model, &eta, &samples, 99).unwrap();
        let want = samples
            .iter()
            .map(|&x| -(x as f64 * 4.0f64.ln() - ln_factorial(x as u64)) + 4.0)
            .sum::<f64>()
            / samples.len() as f64;
        assert_relative_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn truncated_likelihood_rejects_low_truncation() {
        let model = CmpUnivariate::new();
        let err =
            truncated_likelihood_loss(&model, &DVector::zeros(2), &[3, 12, 5], 9).unwrap_err();
        assert!(err.to_string().contains("truncation"), "{err}");
    }

    #[test]
    fn truncated_likelihood_degenerate_point() {
        let model = CmpUnivariate::new();
        let eta = DVector::from_row_slice(&[2.7, -1.4]);
        let loss = truncated_likelihood_loss(&model, &eta, &[0], 0).unwrap();
        assert_relative_eq!(loss, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn truncated_normaliser_monotone_and_stabilising() {
        let model = CmpUnivariate::new();
        let samples: Vec<i64> = cmp_samples(4.0, 1.1, 200, 29)
            .iter()
            .map(|x| x.get(0))
            .collect();
        let max = *samples.iter().max().unwrap() as u64;
        let eta = DVector::from_row_slice(&[4.0f64.ln(), 1.1]);
        let mut prev_z = f64::NEG_INFINITY;
        let mut losses = Vec::new();
        for k in max..=99 {
            let table = TruncatedLikTable::new(&model, &samples, k).unwrap();
            let z = table.log_z(&eta);
            assert!(z >= prev_z, "normaliser decreased at K = {k}");
            prev_z = z;
            losses.push(table.eval(&eta));
        }
        let tail: Vec<f64> = losses.iter().rev().take(10).cloned().collect();
        for w in tail.windows(2) {
            assert!(
                (w[0] - w[1]).abs() < 1e-10,
                "loss has not stabilised near K = 99"
            );
        }
    }

    #[test]
    fn loss_target_checks_prior_support() {
        let model = CmpUnivariate::new();
        let samples = cmp_samples(4.0, 1.0, 50, 31);
        let table = DfdLossTable::new(&model, &samples).unwrap();
        let sane = GaussianPrior::new(
            DVector::from_row_slice(&[1.0, 1.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        assert!(LossTarget::new(BaselineLoss::Dfd(table), 1.0, sane, &RngSpec::new(3)).is_ok());

        // A prior centred deep in overflow territory fails the ten-draw
        // finiteness check.
        let table = DfdLossTable::new(&model, &samples).unwrap();
        let wild = GaussianPrior::new(
            DVector::from_row_slice(&[-800.0, 0.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let err = LossTarget::new(BaselineLoss::Dfd(table), 1.0, wild, &RngSpec::new(3))
            .map(|_| ())
            .unwrap_err();
        assert!(err.to_string().contains("prior"), "{err}");

        let table = DfdLossTable::new(&model, &samples).unwrap();
        let prior = GaussianPrior::new(
            DVector::from_row_slice(&[1.0, 1.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        assert!(LossTarget::new(BaselineLoss::Dfd(table), -1.0, prior, &RngSpec::new(3)).is_err());
    }
}
