//! Discrete sample spaces and matching sets.
//!
//! A [`DomainSpec`] describes a product space `X = S_1 × … × S_d` where each
//! factor is either a finite integer set or the non-negative integers. A
//! [`MatchingSet`] assigns to every state a finite set of neighbouring
//! states; the divergence in [`crate::lrm`] only ever compares mass ratios
//! along these neighbour pairs.
//!
//! Candidate neighbours that would leave the domain are dropped and the
//! per-state normaliser uses the realised neighbour count, so boundary
//! states simply have smaller matching sets.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use crate::{Error, Result};

/// Default cap on exhaustive state enumeration.
pub const ENUMERATION_CAP: u64 = 1_000_000;

/// A single state of the product space: one integer per coordinate.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StatePoint {
    coords: Vec<i64>,
}

impl StatePoint {
    pub fn new(coords: Vec<i64>) -> Self {
        StatePoint { coords }
    }

    /// Convenience for one-dimensional spaces.
    pub fn scalar(v: i64) -> Self {
        StatePoint { coords: vec![v] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn get(&self, i: usize) -> i64 {
        self.coords[i]
    }

    /// Copy of this state with coordinate `i` replaced by `v`.
    pub fn with_coord(&self, i: usize, v: i64) -> Self {
        let mut c = self.coords.clone();
        c[i] = v;
        StatePoint { coords: c }
    }
}

impl std::fmt::Debug for StatePoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "s{:?}", self.coords)
    }
}

impl From<Vec<i64>> for StatePoint {
    fn from(coords: Vec<i64>) -> Self {
        StatePoint::new(coords)
    }
}

/// A finite, sorted set of at least two integer states.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StateSet {
    values: Arc<[i64]>,
}

impl StateSet {
    pub fn new(mut values: Vec<i64>) -> Result<Self> {
        values.sort_unstable();
        values.dedup();
        if values.len() < 2 {
            return Err(Error::InvalidSpec(
                "a finite coordinate needs at least two distinct states".into(),
            ));
        }
        Ok(StateSet {
            values: values.into(),
        })
    }

    /// The contiguous range `lo..=hi`.
    pub fn range(lo: i64, hi: i64) -> Result<Self> {
        if hi <= lo {
            return Err(Error::InvalidSpec(format!(
                "state range {lo}..={hi} holds fewer than two states"
            )));
        }
        Ok(StateSet {
            values: (lo..=hi).collect::<Vec<_>>().into(),
        })
    }

    /// The Ising spin pair {-1, +1}.
    pub fn spins() -> Self {
        StateSet {
            values: vec![-1, 1].into(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least two states
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn contains(&self, v: i64) -> bool {
        self.values.binary_search(&v).is_ok()
    }

    pub fn index_of(&self, v: i64) -> Option<usize> {
        self.values.binary_search(&v).ok()
    }
}

/// What a single coordinate of the product space ranges over.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum CoordKind {
    /// A finite integer set.
    Finite(StateSet),
    /// The counts 0, 1, 2, … without upper bound.
    Count,
}

impl CoordKind {
    pub fn contains(&self, v: i64) -> bool {
        match self {
            CoordKind::Finite(s) => s.contains(v),
            CoordKind::Count => v >= 0,
        }
    }
}

/// Rectangular lattice layout with 4-nearest-neighbour adjacency.
///
/// Sites are numbered row-major: site `r * cols + c` is row `r`, column `c`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct LatticeGeometry {
    pub rows: usize,
    pub cols: usize,
}

impl LatticeGeometry {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidSpec("lattice needs rows > 0 and cols > 0".into()));
        }
        Ok(LatticeGeometry { rows, cols })
    }

    pub fn sites(&self) -> usize {
        self.rows * self.cols
    }

    pub fn site(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    /// The up/down/left/right neighbours of a site, in that order, skipping
    /// sites beyond the boundary (free boundary conditions).
    pub fn neighbours(&self, site: usize) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = (site / self.cols, site % self.cols);
        let up = (r > 0).then(|| site - self.cols);
        let down = (r + 1 < self.rows).then(|| site + self.cols);
        let left = (c > 0).then(|| site - 1);
        let right = (c + 1 < self.cols).then(|| site + 1);
        [up, down, left, right].into_iter().flatten()
    }
}

/// A concrete lattice configuration: geometry, admissible states, data.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Lattice {
    pub geom: LatticeGeometry,
    pub states: StateSet,
    data: Vec<i64>,
}

impl Lattice {
    pub fn new(geom: LatticeGeometry, states: StateSet, data: Vec<i64>) -> Result<Self> {
        if data.len() != geom.sites() {
            return Err(Error::BadData(format!(
                "lattice data holds {} values but the {}x{} geometry has {} sites",
                data.len(),
                geom.rows,
                geom.cols,
                geom.sites()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !states.contains(**v)) {
            return Err(Error::BadData(format!(
                "lattice value {bad} is outside the declared state set"
            )));
        }
        Ok(Lattice { geom, states, data })
    }

    /// All sites set to the first state of the set.
    pub fn filled(geom: LatticeGeometry, states: StateSet) -> Self {
        let v = states.values()[0];
        Lattice {
            geom,
            states,
            data: vec![v; geom.sites()],
        }
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    pub fn get(&self, site: usize) -> i64 {
        self.data[site]
    }

    pub fn set(&mut self, site: usize, v: i64) {
        debug_assert!(self.states.contains(v));
        self.data[site] = v;
    }

    /// Sum of all site values divided by the site count.
    pub fn mean_value(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn to_state_point(&self) -> StatePoint {
        StatePoint::new(self.data.clone())
    }

    pub fn from_state_point(
        geom: LatticeGeometry,
        states: StateSet,
        x: &StatePoint,
    ) -> Result<Self> {
        Lattice::new(geom, states, x.coords().to_vec())
    }
}

/// The product sample space, with optional lattice structure.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DomainSpec {
    kinds: Vec<CoordKind>,
    lattice: Option<LatticeGeometry>,
}

impl DomainSpec {
    /// `N_0^d`: d unbounded count coordinates.
    pub fn counts(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidSpec("domain dimension must be positive".into()));
        }
        Ok(DomainSpec {
            kinds: vec![CoordKind::Count; d],
            lattice: None,
        })
    }

    /// A finite product space with per-coordinate state sets.
    pub fn finite_product(sets: Vec<StateSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::InvalidSpec("domain dimension must be positive".into()));
        }
        Ok(DomainSpec {
            kinds: sets.into_iter().map(CoordKind::Finite).collect(),
            lattice: None,
        })
    }

    /// A lattice of `rows x cols` sites sharing one finite state set.
    pub fn lattice(geom: LatticeGeometry, states: StateSet) -> Self {
        DomainSpec {
            kinds: vec![CoordKind::Finite(states); geom.sites()],
            lattice: Some(geom),
        }
    }

    pub fn dim(&self) -> usize {
        self.kinds.len()
    }

    pub fn kind(&self, i: usize) -> &CoordKind {
        &self.kinds[i]
    }

    pub fn lattice_geometry(&self) -> Option<LatticeGeometry> {
        self.lattice
    }

    /// The shared state set of a lattice domain.
    pub fn lattice_states(&self) -> Option<&StateSet> {
        self.lattice.map(|_| match &self.kinds[0] {
            CoordKind::Finite(s) => s,
            CoordKind::Count => unreachable!("lattice domains are finite by construction"),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.kinds
            .iter()
            .all(|k| matches!(k, CoordKind::Finite(_)))
    }

    /// Number of states, if the space is finite and fits a u128.
    pub fn size(&self) -> Option<u128> {
        let mut acc: u128 = 1;
        for k in &self.kinds {
            match k {
                CoordKind::Finite(s) => acc = acc.checked_mul(s.len() as u128)?,
                CoordKind::Count => return None,
            }
        }
        Some(acc)
    }

    pub fn contains(&self, x: &StatePoint) -> bool {
        x.dim() == self.dim()
            && x.coords()
                .iter()
                .zip(&self.kinds)
                .all(|(v, k)| k.contains(*v))
    }

    /// Every state of a finite domain, in lexicographic coordinate order.
    ///
    /// Fails with [`Error::TooLarge`] above `cap` states and with
    /// [`Error::InvalidSpec`] on unbounded coordinates.
    pub fn enumerate(&self, cap: u64) -> Result<Vec<StatePoint>> {
        let size = match self.size() {
            Some(s) => s,
            None => {
                return Err(Error::InvalidSpec(
                    "cannot enumerate a domain with unbounded count coordinates".into(),
                ))
            }
        };
        if size > cap as u128 {
            return Err(Error::TooLarge { size, cap });
        }
        let sets: Vec<&StateSet> = self
            .kinds
            .iter()
            .map(|k| match k {
                CoordKind::Finite(s) => s,
                CoordKind::Count => unreachable!(),
            })
            .collect();
        let mut out = Vec::with_capacity(size as usize);
        let mut idx = vec![0usize; sets.len()];
        loop {
            out.push(StatePoint::new(
                idx.iter()
                    .zip(&sets)
                    .map(|(&i, s)| s.values()[i])
                    .collect(),
            ));
            // Odometer increment, last coordinate fastest.
            let mut k = sets.len();
            loop {
                if k == 0 {
                    return Ok(out);
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < sets[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

/// Assigns each state its set of comparison neighbours.
#[derive(Clone, Debug)]
pub enum MatchingSet {
    /// Per-coordinate integer shifts: each offset applied to each
    /// coordinate in turn, out-of-domain results dropped.
    CoordinateOffsets { offsets: Vec<i64> },
    /// Every single-site change to a different admissible state on a
    /// lattice domain. Always exactly `d * (|S| - 1)` neighbours.
    LatticeStateFlips,
    /// Explicit adjacency for small finite spaces; states absent from the
    /// table have no neighbours.
    Table(HashMap<StatePoint, Vec<StatePoint>>),
}

impl MatchingSet {
    /// The realised neighbour set of `x`, after boundary drops.
    pub fn neighbours(&self, domain: &DomainSpec, x: &StatePoint) -> Vec<StatePoint> {
        match self {
            MatchingSet::CoordinateOffsets { offsets } => {
                let mut out = Vec::with_capacity(offsets.len() * x.dim());
                for i in 0..x.dim() {
                    let base = x.get(i);
                    for &off in offsets {
                        let v = base + off;
                        if domain.kind(i).contains(v) {
                            out.push(x.with_coord(i, v));
                        }
                    }
                }
                out
            }
            MatchingSet::LatticeStateFlips => {
                let states = domain
                    .lattice_states()
                    .expect("state flips need a lattice domain");
                let mut out = Vec::with_capacity(x.dim() * (states.len() - 1));
                for i in 0..x.dim() {
                    for &s in states.values() {
                        if s != x.get(i) {
                            out.push(x.with_coord(i, s));
                        }
                    }
                }
                out
            }
            MatchingSet::Table(t) => t.get(x).cloned().unwrap_or_default(),
        }
    }

    /// `|M(x)|` without materialising the neighbours.
    pub fn neighbour_count(&self, domain: &DomainSpec, x: &StatePoint) -> usize {
        match self {
            MatchingSet::CoordinateOffsets { offsets } => (0..x.dim())
                .map(|i| {
                    offsets
                        .iter()
                        .filter(|&&off| domain.kind(i).contains(x.get(i) + off))
                        .count()
                })
                .sum(),
            MatchingSet::LatticeStateFlips => {
                let s = domain
                    .lattice_states()
                    .expect("state flips need a lattice domain")
                    .len();
                x.dim() * (s - 1)
            }
            MatchingSet::Table(t) => t.get(x).map_or(0, |v| v.len()),
        }
    }
}

/// Validate coordinate offsets against a domain.
///
/// Rejects empty, zero, or duplicate offsets, and offset sets that leave
/// some reachable state with *no* neighbours at all (for example `{-1}` on
/// a count domain strands the origin).
pub fn build_offset_matching_set(offsets: &[i64], domain: &DomainSpec) -> Result<MatchingSet> {
    if offsets.is_empty() {
        return Err(Error::InvalidSpec("offset list is empty".into()));
    }
    let mut sorted = offsets.to_vec();
    sorted.sort_unstable();
    if sorted.contains(&0) {
        return Err(Error::InvalidSpec(
            "offset 0 would match a state to itself".into(),
        ));
    }
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidSpec("duplicate offsets".into()));
    }

    // A coordinate is "strandable" if some admissible value has every
    // shifted value outside the coordinate's set. A state built from one
    // strandable value per coordinate would have an empty matching set.
    let mut stranded_witness: Vec<Option<i64>> = Vec::with_capacity(domain.dim());
    for i in 0..domain.dim() {
        let witness = match domain.kind(i) {
            CoordKind::Count => {
                // Counts are unbounded above, so s + max_offset stays
                // admissible whenever some offset is positive.
                if *sorted.last().unwrap() < 0 {
                    Some(0)
                } else {
                    None
                }
            }
            CoordKind::Finite(set) => set
                .values()
                .iter()
                .copied()
                .find(|&s| sorted.iter().all(|&off| !set.contains(s + off))),
        };
        stranded_witness.push(witness);
        if witness.is_none() {
            // This coordinate always keeps at least one neighbour, so no
            // state can be fully stranded: stop scanning.
            return Ok(MatchingSet::CoordinateOffsets { offsets: sorted });
        }
    }
    let state: Vec<i64> = stranded_witness.into_iter().map(|w| w.unwrap()).collect();
    Err(Error::InvalidSpec(format!(
        "offsets {sorted:?} leave state {state:?} with an empty matching set"
    )))
}

/// Validate the single-site flip matching set for a lattice domain.
pub fn build_lattice_flip_matching_set(domain: &DomainSpec) -> Result<MatchingSet> {
    if domain.lattice_geometry().is_none() {
        return Err(Error::InvalidSpec(
            "state-flip matching sets need a lattice domain".into(),
        ));
    }
    Ok(MatchingSet::LatticeStateFlips)
}

/// Outcome of a matching-set connectivity check.
///
/// The divergence in [`crate::lrm`] separates distributions exactly when
/// the undirected graph induced by the matching set is connected, so this
/// is the first thing to check about a proposed matching set.
#[derive(Clone, Debug)]
pub enum Connectivity {
    /// Breadth-first search visited every state.
    Connected { states_checked: u64 },
    /// Two states with no path between them.
    Disconnected { witness: (StatePoint, StatePoint) },
    /// Count domain with a +1 or -1 offset: repeated unit steps join any
    /// two states, no enumeration required.
    ConnectedByChainArgument,
    /// Unbounded domain without a unit offset; nothing was proven.
    Unverified,
}

impl Connectivity {
    /// `Some(true)` / `Some(false)` when the question was settled.
    pub fn verdict(&self) -> Option<bool> {
        match self {
            Connectivity::Connected { .. } | Connectivity::ConnectedByChainArgument => Some(true),
            Connectivity::Disconnected { .. } => Some(false),
            Connectivity::Unverified => None,
        }
    }
}

/// Decide whether the matching-set graph joins every pair of states.
///
/// Finite domains up to `cap` states (default [`ENUMERATION_CAP`]) are
/// checked exhaustively by BFS over the undirected graph; larger finite
/// domains fail with [`Error::TooLarge`]. Count domains are certified by
/// the unit-offset chain argument when possible and reported
/// [`Connectivity::Unverified`] otherwise.
pub fn check_graph_connected(
    domain: &DomainSpec,
    m: &MatchingSet,
    cap: Option<u64>,
) -> Result<Connectivity> {
    let cap = cap.unwrap_or(ENUMERATION_CAP);
    if !domain.is_finite() {
        return match m {
            MatchingSet::CoordinateOffsets { offsets }
                if offsets.contains(&1) || offsets.contains(&-1) =>
            {
                Ok(Connectivity::ConnectedByChainArgument)
            }
            _ => Ok(Connectivity::Unverified),
        };
    }

    let states = domain.enumerate(cap)?;
    let index: HashMap<&StatePoint, usize> =
        states.iter().enumerate().map(|(i, s)| (s, i)).collect();

    // Undirected adjacency: x' in M(x) links both x -> x' and x' -> x.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); states.len()];
    for (i, x) in states.iter().enumerate() {
        for nb in m.neighbours(domain, x) {
            if let Some(&j) = index.get(&nb) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }

    let mut seen = vec![false; states.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut visited = 1u64;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                visited += 1;
                queue.push_back(j);
            }
        }
    }

    if let Some(unreached) = seen.iter().position(|s| !s) {
        Ok(Connectivity::Disconnected {
            witness: (states[0].clone(), states[unreached].clone()),
        })
    } else {
        Ok(Connectivity::Connected {
            states_checked: visited,
        })
    }
}
