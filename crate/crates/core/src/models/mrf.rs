//! Markov random fields on 2-D lattices: Ising, Potts, and anything else
//! expressible as site + pair potentials.
//!
//! `log p(x) ∝ θ₁ Σ_j ψ(x_j) + θ₂ Σ_{j~j'} φ_pair(x_j, x_j')` with the
//! pair sum over *unordered* neighbour pairs, counted once. For fitting,
//! the Markov property collapses the full-lattice loss to per-site terms:
//! changing one site's state only moves the local statistic, and the data
//! side only needs the conditional distribution of a site given its
//! neighbourhood. That turns one lattice into `rows·cols` observations.

use nalgebra::DVector;

use super::ExpFamily;
use crate::domain::{DomainSpec, Lattice, LatticeGeometry, StatePoint, StateSet};
use crate::lrm::{QuadAcc, QuadraticLoss};
use crate::pmf::{site_occurrences, LocalConditionalTable, SiteOccurrence};
use crate::{Error, Result};

/// Site potential ψ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SitePotential {
    /// ψ(s) = s — the Ising magnetisation term.
    Identity,
    /// ψ ≡ 0 — no site term (Potts).
    Zero,
}

impl SitePotential {
    fn eval(self, s: i64) -> f64 {
        match self {
            SitePotential::Identity => s as f64,
            SitePotential::Zero => 0.0,
        }
    }
}

/// Pair potential φ_pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairPotential {
    /// φ(s, s') = s·s' — Ising spin product.
    Product,
    /// φ(s, s') = 1[s = s'] — Potts agreement indicator.
    Same,
}

impl PairPotential {
    fn eval(self, s: i64, s2: i64) -> f64 {
        match self {
            PairPotential::Product => (s * s2) as f64,
            PairPotential::Same => {
                if s == s2 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// A lattice exponential family with natural parameter θ (η = θ, B = 0).
///
/// With a site term the parameter is (θ₁, θ₂); without, just the pair
/// weight θ₂.
#[derive(Clone, Debug)]
pub struct MrfModel {
    geometry: LatticeGeometry,
    states: StateSet,
    site: SitePotential,
    pair: PairPotential,
    include_site: bool,
    domain: DomainSpec,
}

impl MrfModel {
    pub fn new(
        geometry: LatticeGeometry,
        states: StateSet,
        site: SitePotential,
        pair: PairPotential,
        include_site: bool,
    ) -> Self {
        let domain = DomainSpec::lattice(geometry, states.clone());
        MrfModel {
            geometry,
            states,
            site,
            pair,
            include_site,
            domain,
        }
    }

    /// Ising model: spins {−1,+1}, ψ(s) = s, φ(s,s') = s·s', θ = (θ₁, θ₂).
    pub fn ising(geometry: LatticeGeometry) -> Self {
        MrfModel::new(
            geometry,
            StateSet::spins(),
            SitePotential::Identity,
            PairPotential::Product,
            true,
        )
    }

    /// Potts model: φ(s,s') = 1[s = s'], no site term, θ = θ₂ alone.
    pub fn potts(geometry: LatticeGeometry, states: StateSet) -> Self {
        MrfModel::new(
            geometry,
            states,
            SitePotential::Zero,
            PairPotential::Same,
            false,
        )
    }

    pub fn geometry(&self) -> LatticeGeometry {
        self.geometry
    }

    pub fn states(&self) -> &StateSet {
        &self.states
    }

    pub fn pair_potential(&self) -> PairPotential {
        self.pair
    }

    /// Full-lattice sufficient statistic: site sum and single-counted
    /// pair sum (right and down neighbours only).
    pub fn sufficient_lattice(&self, lat: &Lattice) -> DVector<f64> {
        let g = self.geometry;
        let mut site_sum = 0.0;
        let mut pair_sum = 0.0;
        for r in 0..g.rows {
            for c in 0..g.cols {
                let s = lat.get(g.site(r, c));
                site_sum += self.site.eval(s);
                if c + 1 < g.cols {
                    pair_sum += self.pair.eval(s, lat.get(g.site(r, c + 1)));
                }
                if r + 1 < g.rows {
                    pair_sum += self.pair.eval(s, lat.get(g.site(r + 1, c)));
                }
            }
        }
        if self.include_site {
            DVector::from_vec(vec![site_sum, pair_sum])
        } else {
            DVector::from_vec(vec![pair_sum])
        }
    }

    /// The part of T that depends on site `k` holding state `s`, with the
    /// rest of the lattice fixed: (ψ(s), Σ_{j∈nb(k)} φ(s, x_j)). The pair
    /// sum touches each incident unordered pair exactly once.
    pub fn local_statistic(&self, lat: &Lattice, site: usize, s: i64) -> DVector<f64> {
        let mut pair = 0.0;
        for j in self.geometry.neighbours(site) {
            pair += self.pair.eval(s, lat.get(j));
        }
        if self.include_site {
            DVector::from_vec(vec![self.site.eval(s), pair])
        } else {
            DVector::from_vec(vec![pair])
        }
    }

    /// ΔT for flipping site `k` from its current state to `s_new`.
    pub fn site_flip_delta(&self, lat: &Lattice, site: usize, s_new: i64) -> DVector<f64> {
        self.local_statistic(lat, site, s_new) - self.local_statistic(lat, site, lat.get(site))
    }

    /// [`MrfModel::local_statistic`] from an explicit neighbour multiset
    /// rather than a lattice — the form site-occurrence tables work with.
    pub(crate) fn local_statistic_from_neighbours(&self, s: i64, nb_states: &[i64]) -> DVector<f64> {
        let mut pair = 0.0;
        for &j in nb_states {
            pair += self.pair.eval(s, j);
        }
        if self.include_site {
            DVector::from_vec(vec![self.site.eval(s), pair])
        } else {
            DVector::from_vec(vec![pair])
        }
    }

    /// Same ΔT, but from an explicit neighbour multiset rather than a
    /// lattice — the form the local-conditional fit works with.
    fn delta_from_neighbours(&self, s_new: i64, s_old: i64, nb_states: &[i64]) -> DVector<f64> {
        let mut pair = 0.0;
        for &j in nb_states {
            pair += self.pair.eval(s_new, j) - self.pair.eval(s_old, j);
        }
        if self.include_site {
            DVector::from_vec(vec![self.site.eval(s_new) - self.site.eval(s_old), pair])
        } else {
            DVector::from_vec(vec![pair])
        }
    }
}

impl ExpFamily for MrfModel {
    fn dim(&self) -> usize {
        if self.include_site {
            2
        } else {
            1
        }
    }

    fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    fn sufficient(&self, x: &StatePoint) -> DVector<f64> {
        let lat = Lattice::from_state_point(self.geometry, self.states.clone(), x)
            .expect("state point validated against the lattice domain");
        self.sufficient_lattice(&lat)
    }
}

/// Assemble the quadratic loss from per-site conditional terms.
///
/// Each site occurrence contributes, for every candidate state `s ≠ x_k`,
/// a term with ΔT the local-statistic difference and data log-ratio
/// `log q̂(s|nb) − log q̂(x_k|nb)`, weighted 1/|S| (the collapsed per-site
/// normaliser). Terms whose candidate conditional `q̂(s|nb)` falls below
/// the `truncation_quantile` of all candidate conditionals — or whose
/// either conditional is unestimable — are dropped. The returned loss has
/// `n` = total site occurrences, which is the effective sample size the
/// posterior scales with.
pub fn mrf_local_loss(
    model: &MrfModel,
    table: &LocalConditionalTable,
    lattices: &[Lattice],
    truncation_quantile: f64,
) -> Result<QuadraticLoss> {
    if lattices.is_empty() {
        return Err(Error::BadData("no lattices".into()));
    }
    for lat in lattices {
        if lat.geom != model.geometry || lat.states != *model.states() {
            return Err(Error::BadData(
                "lattice geometry or state set disagrees with the model".into(),
            ));
        }
    }
    mrf_occurrence_loss(model, table, &site_occurrences(lattices), truncation_quantile)
}

/// Same loss, assembled from pre-flattened site occurrences.
///
/// This is the resampling entry point: a single observed lattice is
/// bootstrapped at the site-occurrence level, so each resample needs the
/// loss of an arbitrary occurrence multiset rather than of whole lattices.
pub fn mrf_occurrence_loss(
    model: &MrfModel,
    table: &LocalConditionalTable,
    occurrences: &[SiteOccurrence],
    truncation_quantile: f64,
) -> Result<QuadraticLoss> {
    if !(0.0..=1.0).contains(&truncation_quantile) {
        return Err(Error::InvalidSpec(format!(
            "truncation quantile must lie in [0,1], got {truncation_quantile}"
        )));
    }
    if table.states() != model.states() {
        return Err(Error::InvalidSpec(
            "conditional table and model disagree on the state set".into(),
        ));
    }
    if occurrences.is_empty() {
        return Err(Error::BadData("no site occurrences".into()));
    }
    let states = model.states().values().to_vec();
    let s_count = states.len() as f64;

    // First pass: resolve each candidate term's conditionals so the
    // truncation cutoff is a quantile of the realised candidate pool.
    struct Term {
        occ_idx: usize,
        s: i64,
        p_num: f64,
        p_den: f64,
    }
    let mut terms = Vec::new();
    let mut pool = Vec::new();
    for (occ_idx, occ) in occurrences.iter().enumerate() {
        let p_den = table.conditional(occ.nb, occ.state);
        for &s in &states {
            if s == occ.state {
                continue;
            }
            let (Some(p_num), Some(p_den)) = (table.conditional(occ.nb, s), p_den) else {
                continue;
            };
            pool.push(p_num);
            terms.push(Term {
                occ_idx,
                s,
                p_num,
                p_den,
            });
        }
    }
    if terms.is_empty() {
        return Err(Error::DegenerateLoss);
    }

    let cutoff = if truncation_quantile > 0.0 {
        let mut sorted = pool.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("conditionals are finite"));
        let idx = ((sorted.len() - 1) as f64 * truncation_quantile).floor() as usize;
        sorted[idx]
    } else {
        f64::NEG_INFINITY
    };

    let mut acc = QuadAcc::new(model.dim());
    let scale = 1.0 / s_count;
    for term in &terms {
        if term.p_num < cutoff || term.p_den < cutoff {
            continue;
        }
        let occ = &occurrences[term.occ_idx];
        let nb_states: Vec<i64> = occ.nb.present().collect();
        let dt = model.delta_from_neighbours(term.s, occ.state, &nb_states);
        let ghat = term.p_num.ln() - term.p_den.ln();
        acc.add_term(&dt, scale, ghat, 0.0);
    }
    acc.finalize(occurrences.len() as u64)
}
