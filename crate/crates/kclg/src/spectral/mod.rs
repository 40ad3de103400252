//! Exact finite-system analysis: generator matrices for boxes with
//! reservoirs, closed boxes, and tori; relaxation times from the spectral
//! gap; connectivity of the exchange dynamics; and the box bookkeeping
//! used by the vacancy-counting arguments.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::lattice::{BoundaryMode, Configuration, Direction, Domain, Site};
use crate::models::{reservoir_rate, ConstraintModel};
use crate::rng::Rng;

mod solve;

pub use solve::{smallest_nonzero_eigenvalue, GapEstimate};

/// Rates below this are treated as zero when building generators.
const RATE_FLOOR: f64 = 1e-12;

/// How the configurations of a [`StateSpace`] were enumerated.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SpaceKind {
    /// Every configuration of the box, indexed by its occupancy bits.
    Full,
    /// Only configurations with this many vacancies, in colexicographic
    /// vacancy-position order.
    Sector(usize),
}

/// An indexed enumeration of configurations on a fixed domain. States are
/// stored as occupancy bitmasks (bit i = site index i occupied), which
/// caps the domain at 64 sites.
pub struct StateSpace {
    domain: Domain,
    kind: SpaceKind,
    states: Vec<u64>,
    sector_index: HashMap<u64, u32>,
}

impl StateSpace {
    pub fn full(domain: Domain, budget: u64) -> Result<StateSpace> {
        let v = domain.volume();
        if v > 30 || (1u64 << v) > budget {
            return Err(Error::Budget(format!(
                "full state space needs 2^{v} states, over the budget of {budget}"
            )));
        }
        let states: Vec<u64> = (0..(1u64 << v)).collect();
        Ok(StateSpace {
            domain,
            kind: SpaceKind::Full,
            states,
            sector_index: HashMap::new(),
        })
    }

    pub fn sector(domain: Domain, k: usize, budget: u64) -> Result<StateSpace> {
        let v = domain.volume();
        if v > 64 {
            return Err(Error::Budget(format!(
                "state masks hold at most 64 sites, the domain has {v}"
            )));
        }
        if k > v {
            return Err(Error::Argument(format!(
                "cannot place {k} vacancies on {v} sites"
            )));
        }
        let count = binomial(v, k).ok_or_else(|| {
            Error::Budget(format!("sector size C({v},{k}) overflows a u64"))
        })?;
        if count > budget || count > (1 << 31) {
            return Err(Error::Budget(format!(
                "sector has {count} states, over the budget of {budget}"
            )));
        }
        let full: u64 = if v == 64 { u64::MAX } else { (1u64 << v) - 1 };
        let mut states = Vec::with_capacity(count as usize);
        let mut sector_index = HashMap::with_capacity(count as usize);
        // Colexicographic enumeration of the vacancy positions.
        let mut pos: Vec<usize> = (0..k).collect();
        loop {
            let mut vac_mask = 0u64;
            for &p in &pos {
                vac_mask |= 1u64 << p;
            }
            let mask = full & !vac_mask;
            sector_index.insert(mask, states.len() as u32);
            states.push(mask);
            if k == 0 {
                break;
            }
            // Advance: bump the lowest position with room, reset below it.
            let mut i = 0;
            loop {
                if i == k {
                    break;
                }
                let limit = if i + 1 < k { pos[i + 1] } else { v };
                if pos[i] + 1 < limit {
                    pos[i] += 1;
                    for (j, slot) in pos.iter_mut().enumerate().take(i) {
                        *slot = j;
                    }
                    break;
                }
                i += 1;
            }
            if i == k {
                break;
            }
        }
        Ok(StateSpace {
            domain,
            kind: SpaceKind::Sector(k),
            states,
            sector_index,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn mask(&self, i: usize) -> u64 {
        self.states[i]
    }

    pub fn config(&self, i: usize) -> Configuration {
        config_from_mask(&self.domain, self.states[i])
    }

    pub fn index_of_mask(&self, mask: u64) -> Option<usize> {
        match self.kind {
            SpaceKind::Full => {
                let i = mask as usize;
                (i < self.states.len()).then_some(i)
            }
            SpaceKind::Sector(_) => self.sector_index.get(&mask).map(|&i| i as usize),
        }
    }

    pub fn index_of(&self, c: &Configuration) -> Option<usize> {
        self.index_of_mask(mask_of(c))
    }
}

pub fn mask_of(c: &Configuration) -> u64 {
    let v = c.domain().volume();
    assert!(v <= 64, "state masks hold at most 64 sites");
    let mut mask = 0u64;
    for i in 0..v {
        if c.occupied_idx(i) {
            mask |= 1u64 << i;
        }
    }
    mask
}

pub fn config_from_mask(domain: &Domain, mask: u64) -> Configuration {
    let mut c = Configuration::all_empty(domain.clone());
    for i in 0..domain.volume() {
        if mask & (1u64 << i) != 0 {
            c.set_idx(i, true);
        }
    }
    c
}

fn binomial(n: usize, k: usize) -> Option<u64> {
    let k = k.min(n - k.min(n));
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u64)?;
        acc /= (i + 1) as u64;
    }
    Some(acc)
}

/// A reversible Markov generator on a [`StateSpace`]: sparse off-diagonal
/// rates with the diagonal implied as minus the row sum, plus a stationary
/// weight per state.
pub struct RateMatrix {
    space: StateSpace,
    rows: Vec<Vec<(u32, f64)>>,
    weights: Vec<f64>,
}

impl RateMatrix {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Total rate out of state `i` (minus the diagonal entry).
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, r)| r).sum()
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|&&(t, _)| t as usize == j)
            .map_or(0.0, |&(_, r)| r)
    }

    /// Largest relative violation of `w_i Q_ij = w_j Q_ji` over all pairs.
    pub fn detailed_balance_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            for &(j, rij) in &self.rows[i] {
                let j = j as usize;
                let fwd = self.weights[i] * rij;
                let bwd = self.weights[j] * self.rate(j, i);
                let scale = fwd.abs().max(bwd.abs()).max(1e-300);
                worst = worst.max((fwd - bwd).abs() / scale);
            }
        }
        worst
    }

    /// Connected-component id per state, ignoring rate magnitudes.
    pub fn components(&self) -> Vec<usize> {
        let n = self.len();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = next;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                for &(j, _) in &self.rows[i] {
                    let j = j as usize;
                    if comp[j] == usize::MAX {
                        comp[j] = next;
                        queue.push_back(j);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    /// Coordinate-triplet dump (row, col, rate; diagonal included).
    pub fn dump_coo(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            out.push_str(&format!("{} {} {:.17e}\n", i, i, -self.exit_rate(i)));
            for &(j, r) in &self.rows[i] {
                out.push_str(&format!("{} {} {:.17e}\n", i, j, r));
            }
        }
        out
    }
}

/// All in-domain nearest-neighbor edges, each listed once as (site, +axis
/// neighbor). On a torus the wrap edges are included once.
fn domain_edges(domain: &Domain) -> Vec<(usize, usize, Site, Direction)> {
    let mut edges = Vec::new();
    for i in 0..domain.volume() {
        let x = domain.site(i);
        for axis in 0..domain.dim() {
            let dir = Direction::new(axis, true);
            let y = x.add(&dir.versor(domain.dim()));
            let j = match domain.boundary() {
                BoundaryMode::Periodic => domain.index(&domain.wrap(&y)),
                _ => domain.index(&y),
            };
            if let Some(j) = j {
                if j != i {
                    edges.push((i, j, x.clone(), dir));
                }
            }
        }
    }
    edges
}

/// Merges duplicate targets in each row (a torus of side 2 lists the same
/// undirected edge twice, once per wrap direction).
fn coalesce(rows: &mut [Vec<(u32, f64)>]) {
    for row in rows {
        row.sort_unstable_by_key(|&(j, _)| j);
        row.dedup_by(|later, kept| {
            if later.0 == kept.0 {
                kept.1 += later.1;
                true
            } else {
                false
            }
        });
    }
}

fn exchange_rows(
    m: &ConstraintModel,
    space: &StateSpace,
) -> Result<Vec<Vec<(u32, f64)>>> {
    let domain = space.domain();
    let edges = domain_edges(domain);
    let mut rows = vec![Vec::new(); space.len()];
    for s in 0..space.len() {
        let c = space.config(s);
        let mask = space.mask(s);
        for (i, j, x, dir) in &edges {
            let occ_i = mask & (1u64 << i) != 0;
            let occ_j = mask & (1u64 << j) != 0;
            if occ_i == occ_j {
                continue;
            }
            let rate = m.edge_rate(&c, x, *dir);
            if rate < RATE_FLOOR {
                continue;
            }
            let target = mask ^ (1u64 << i) ^ (1u64 << j);
            let t = space.index_of_mask(target).ok_or_else(|| {
                Error::Construction("exchange left the state space".into())
            })?;
            rows[s].push((t as u32, rate));
        }
    }
    coalesce(&mut rows);
    Ok(rows)
}

/// Generator of the dynamics on `[L]^d` with particle reservoirs on the
/// boundary: bulk exchanges read the constraint with empty exterior sites,
/// and every boundary site flips with the reversible reservoir rate.
/// The stationary weight is the product Bernoulli measure with vacancy
/// probability `q`.
pub fn build_reservoir_generator(
    m: &ConstraintModel,
    l: i64,
    q: f64,
    budget: u64,
) -> Result<RateMatrix> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Argument(format!(
            "vacancy probability q={q} outside [0,1]"
        )));
    }
    let domain = Domain::new(vec![l; m.dim()], BoundaryMode::Empty)?;
    let boundary = domain.boundary_sites();
    let space = StateSpace::full(domain, budget)?;
    let mut rows = exchange_rows(m, &space)?;
    let v = space.domain().volume();
    for s in 0..space.len() {
        let c = space.config(s);
        let mask = space.mask(s);
        for x in &boundary {
            let i = space.domain().index(x).expect("boundary site is in the box");
            let rate = reservoir_rate(&c, x, q)?;
            if rate < RATE_FLOOR {
                continue;
            }
            let target = mask ^ (1u64 << i);
            let t = space
                .index_of_mask(target)
                .expect("flips stay inside the full space");
            rows[s].push((t as u32, rate));
        }
    }
    let weights: Vec<f64> = (0..space.len())
        .map(|s| {
            let occ = space.mask(s).count_ones() as i32;
            (1.0 - q).powi(occ) * q.powi(v as i32 - occ)
        })
        .collect();
    Ok(RateMatrix {
        space,
        rows,
        weights,
    })
}

/// Generator of the closed dynamics on the `k`-vacancy sector of `[L]^d`.
/// Exchange-only; constraint reads outside the box use `boundary` as the
/// fill convention. The stationary weight is uniform on the sector.
pub fn build_closed_generator(
    m: &ConstraintModel,
    l: i64,
    k: usize,
    boundary: BoundaryMode,
    budget: u64,
) -> Result<RateMatrix> {
    if boundary == BoundaryMode::Periodic {
        return Err(Error::Argument(
            "use the torus builder for periodic boundaries".into(),
        ));
    }
    let domain = Domain::new(vec![l; m.dim()], boundary)?;
    let space = StateSpace::sector(domain, k, budget)?;
    let rows = exchange_rows(m, &space)?;
    let weights = vec![1.0; space.len()];
    Ok(RateMatrix {
        space,
        rows,
        weights,
    })
}

/// Generator of the dynamics on the torus `(Z/LZ)^d`, over the full state
/// space. Exchange-only, so the vacancy count is conserved and the matrix
/// is block diagonal over the sectors; the uniform weight is stationary.
pub fn build_torus_generator(m: &ConstraintModel, l: i64, budget: u64) -> Result<RateMatrix> {
    let domain = Domain::new(vec![l; m.dim()], BoundaryMode::Periodic)?;
    let space = StateSpace::full(domain, budget)?;
    let rows = exchange_rows(m, &space)?;
    let weights = vec![1.0; space.len()];
    Ok(RateMatrix {
        space,
        rows,
        weights,
    })
}

/// Relaxation time of a generator, possibly restricted to a subset of
/// states (typically one ergodic component).
pub struct RelaxationReport {
    /// Smallest nonzero eigenvalue of the weighted symmetrization of -Q.
    pub gap: f64,
    /// 1/gap; infinite when the (restricted) space is disconnected.
    pub relaxation_time: f64,
    /// Number of connected components of the analyzed space.
    pub components: usize,
    /// True when the dense eigensolver was used, false for Lanczos.
    pub dense: bool,
}

/// Computes the relaxation time 1/gap. With `restriction`, only the given
/// states are kept (rates between them unchanged). A disconnected space
/// yields an infinite relaxation time along with the component count.
pub fn relaxation_time(q: &RateMatrix, restriction: Option<&[usize]>) -> Result<RelaxationReport> {
    let keep: Vec<usize> = match restriction {
        Some(r) => {
            let mut r = r.to_vec();
            r.sort_unstable();
            r.dedup();
            if r.iter().any(|&i| i >= q.len()) {
                return Err(Error::Argument(
                    "restriction indexes a state outside the space".into(),
                ));
            }
            r
        }
        None => (0..q.len()).collect(),
    };
    if keep.is_empty() {
        return Err(Error::Argument("empty restriction".into()));
    }
    let mut local = vec![usize::MAX; q.len()];
    for (li, &gi) in keep.iter().enumerate() {
        local[gi] = li;
    }
    let n = keep.len();
    // Restricted, weight-symmetrized matrix rows: S_ij = -sqrt(w_i/w_j) Q_ij.
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    let mut diag = vec![0.0f64; n];
    for (li, &gi) in keep.iter().enumerate() {
        diag[li] = q.exit_rate(gi);
        for &(gj, r) in q.row(gi) {
            let lj = local[gj as usize];
            if lj == usize::MAX {
                continue;
            }
            let s = -(q.weight(gi) / q.weight(gj as usize)).sqrt() * r;
            rows[li].push((lj as u32, s));
        }
    }

    // Connectivity on the restricted graph.
    let mut comp = vec![usize::MAX; n];
    let mut ncomp = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = ncomp;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &rows[i] {
                if comp[j as usize] == usize::MAX {
                    comp[j as usize] = ncomp;
                    queue.push_back(j as usize);
                }
            }
        }
        ncomp += 1;
    }
    if ncomp > 1 {
        return Ok(RelaxationReport {
            gap: 0.0,
            relaxation_time: f64::INFINITY,
            components: ncomp,
            dense: false,
        });
    }

    let sqrt_w: Vec<f64> = keep.iter().map(|&gi| q.weight(gi).sqrt()).collect();
    let est = smallest_nonzero_eigenvalue(&rows, &diag, &sqrt_w)?;
    Ok(RelaxationReport {
        gap: est.value,
        relaxation_time: 1.0 / est.value,
        components: 1,
        dense: est.dense,
    })
}

/// Partition of a vacancy sector into components of the exchange dynamics,
/// with the ergodicity bookkeeping: which components can produce an empty
/// cluster translate, and whether that set coincides with the static
/// "contains an empty translate now" description.
pub struct ErgodicReport {
    pub space: StateSpace,
    /// Component id per state.
    pub component: Vec<usize>,
    pub component_sizes: Vec<usize>,
    /// Per component: does some state in it contain an empty cluster translate?
    pub component_has_cluster: Vec<bool>,
    /// States in components flagged above (the ergodic configurations).
    pub ergodic_count: usize,
    /// States that contain an empty translate right now.
    pub static_count: usize,
    /// True when the two descriptions pick exactly the same states.
    pub static_match: bool,
}

/// True when some translate of some cluster lies inside the box with all
/// its sites vacant.
pub fn has_empty_cluster_translate(c: &Configuration, clusters: &[Vec<Site>]) -> bool {
    let domain = c.domain();
    let dim = domain.dim();
    for cluster in clusters {
        let mut lo = vec![i64::MAX; dim];
        let mut hi = vec![i64::MIN; dim];
        for s in cluster {
            for a in 0..dim {
                lo[a] = lo[a].min(s.coord(a));
                hi[a] = hi[a].max(s.coord(a));
            }
        }
        // Anchor offsets x with x + cluster inside the box.
        let extent = domain.extent();
        let ranges: Vec<(i64, i64)> = (0..dim).map(|a| (1 - lo[a], extent[a] - hi[a])).collect();
        if ranges.iter().any(|&(a, b)| a > b) {
            continue;
        }
        let mut anchor: Vec<i64> = ranges.iter().map(|&(a, _)| a).collect();
        'outer: loop {
            let x = Site(anchor.clone());
            if cluster.iter().all(|s| !c.occupied(&x.add(s))) {
                return true;
            }
            for a in 0..dim {
                if anchor[a] < ranges[a].1 {
                    anchor[a] += 1;
                    for r in 0..a {
                        anchor[r] = ranges[r].0;
                    }
                    continue 'outer;
                }
            }
            break;
        }
    }
    false
}

/// BFS partition of the `k`-vacancy sector of `[L]^d` (occupied exterior
/// fill) under the allowed exchanges, flagging the components from which
/// an empty cluster translate is reachable.
pub fn ergodic_components(
    m: &ConstraintModel,
    l: i64,
    k: usize,
    clusters: &[Vec<Site>],
    budget: u64,
) -> Result<ErgodicReport> {
    let domain = Domain::new(vec![l; m.dim()], BoundaryMode::Occupied)?;
    let space = StateSpace::sector(domain, k, budget)?;
    let rows = exchange_rows(m, &space)?;
    let n = space.len();
    let mut component = vec![usize::MAX; n];
    let mut component_sizes = Vec::new();
    let mut component_has_cluster = Vec::new();
    let mut queue = VecDeque::new();
    let statics: Vec<bool> = (0..n)
        .map(|i| has_empty_cluster_translate(&space.config(i), clusters))
        .collect();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = component_sizes.len();
        component[start] = id;
        queue.push_back(start);
        let mut size = 0usize;
        let mut has = false;
        while let Some(i) = queue.pop_front() {
            size += 1;
            has |= statics[i];
            for &(j, _) in &rows[i] {
                let j = j as usize;
                if component[j] == usize::MAX {
                    component[j] = id;
                    queue.push_back(j);
                }
            }
        }
        component_sizes.push(size);
        component_has_cluster.push(has);
    }
    let ergodic_count = (0..n)
        .filter(|&i| component_has_cluster[component[i]])
        .count();
    let static_count = statics.iter().filter(|&&b| b).count();
    let static_match = (0..n).all(|i| statics[i] == component_has_cluster[component[i]]);
    Ok(ErgodicReport {
        space,
        component,
        component_sizes,
        component_has_cluster,
        ergodic_count,
        static_count,
        static_match,
    })
}

/// What a bounded component exploration found.
pub enum Exploration {
    /// A state satisfying the target was reached (the state is returned).
    Found(Configuration),
    /// The whole component was enumerated without hitting the target.
    Exhausted { visited: usize },
    /// The cap was hit first.
    CapReached { visited: usize },
}

/// Explores the component of `seed` under allowed exchanges, stopping when
/// `target` holds, the component is exhausted, or `cap` states were seen.
/// With a `score`, exploration is greedy best-first on ascending score;
/// otherwise plain BFS.
pub fn explore_component(
    m: &ConstraintModel,
    seed: &Configuration,
    target: &dyn Fn(&Configuration) -> bool,
    score: Option<&dyn Fn(&Configuration) -> i64>,
    cap: usize,
) -> Result<Exploration> {
    let domain = seed.domain().clone();
    if domain.volume() > 64 {
        return Err(Error::Budget(
            "component exploration is limited to 64-site domains".into(),
        ));
    }
    let edges = domain_edges(&domain);
    let mut seen: HashSet<u64> = HashSet::new();
    // (score, mask) min-heap via Reverse; BFS degenerates to score = 0.
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let mut heap: BinaryHeap<Reverse<(i64, u64)>> = BinaryHeap::new();
    let mut fifo: VecDeque<u64> = VecDeque::new();
    let seed_mask = mask_of(seed);
    seen.insert(seed_mask);
    if score.is_some() {
        heap.push(Reverse((score.unwrap()(seed), seed_mask)));
    } else {
        fifo.push_back(seed_mask);
    }
    let mut visited = 0usize;
    loop {
        let mask = if score.is_some() {
            match heap.pop() {
                Some(Reverse((_, m))) => m,
                None => return Ok(Exploration::Exhausted { visited }),
            }
        } else {
            match fifo.pop_front() {
                Some(m) => m,
                None => return Ok(Exploration::Exhausted { visited }),
            }
        };
        visited += 1;
        let c = config_from_mask(&domain, mask);
        if target(&c) {
            return Ok(Exploration::Found(c));
        }
        if visited >= cap {
            return Ok(Exploration::CapReached { visited });
        }
        for (i, j, x, dir) in &edges {
            let occ_i = mask & (1u64 << i) != 0;
            let occ_j = mask & (1u64 << j) != 0;
            if occ_i == occ_j {
                continue;
            }
            if m.edge_rate(&c, x, *dir) < RATE_FLOOR {
                continue;
            }
            let next = mask ^ (1u64 << i) ^ (1u64 << j);
            if seen.insert(next) {
                if let Some(f) = score {
                    heap.push(Reverse((f(&config_from_mask(&domain, next)), next)));
                } else {
                    fifo.push_back(next);
                }
            }
        }
    }
}

/// True when no allowed exchange can change the configuration: every edge
/// with unequal occupancies has rate zero.
pub fn is_blocked(c: &Configuration, m: &ConstraintModel) -> bool {
    let domain = c.domain();
    for (i, j, x, dir) in domain_edges(domain) {
        if c.occupied_idx(i) != c.occupied_idx(j) && m.edge_rate(c, &x, dir) >= RATE_FLOOR {
            return false;
        }
    }
    true
}

/// Counts of pregood and good boxes in the partition of the domain into
/// side-`lambda` cubes. A box is good when it contains an entirely vacant
/// cluster translate; pregood when it holds at least as many vacancies as
/// the smallest cluster.
pub fn box_census(
    c: &Configuration,
    clusters: &[Vec<Site>],
    lambda: i64,
) -> Result<(usize, usize)> {
    if lambda <= 0 {
        return Err(Error::Argument("box side must be positive".into()));
    }
    if clusters.is_empty() {
        return Err(Error::Argument("no clusters given".into()));
    }
    let domain = c.domain();
    let dim = domain.dim();
    for (a, &ext) in domain.extent().iter().enumerate() {
        if ext % lambda != 0 {
            return Err(Error::Argument(format!(
                "box side {lambda} does not divide the extent {ext} on axis {a}"
            )));
        }
    }
    let threshold = clusters.iter().map(|cl| cl.len()).min().unwrap();
    let counts: Vec<i64> = domain.extent().iter().map(|&e| e / lambda).collect();
    let mut pregood = 0usize;
    let mut good = 0usize;
    let mut idx = vec![0i64; dim];
    'boxes: loop {
        let corner = Site(idx.iter().map(|&i| lambda * i + 1).collect());
        // Count vacancies in the box and test cluster translates inside it.
        let mut vac = 0usize;
        let mut offset = vec![0i64; dim];
        loop {
            let site = corner.add(&Site(offset.clone()));
            if !c.occupied(&site) {
                vac += 1;
            }
            let mut a = 0;
            while a < dim {
                if offset[a] + 1 < lambda {
                    offset[a] += 1;
                    for r in offset.iter_mut().take(a) {
                        *r = 0;
                    }
                    break;
                }
                a += 1;
            }
            if a == dim {
                break;
            }
        }
        if vac >= threshold {
            pregood += 1;
            if box_has_cluster(c, clusters, &corner, lambda) {
                good += 1;
            }
        }
        let mut a = 0;
        while a < dim {
            if idx[a] + 1 < counts[a] {
                idx[a] += 1;
                for r in idx.iter_mut().take(a) {
                    *r = 0;
                }
                continue 'boxes;
            }
            a += 1;
        }
        break;
    }
    Ok((pregood, good))
}

fn box_has_cluster(c: &Configuration, clusters: &[Vec<Site>], corner: &Site, lambda: i64) -> bool {
    let dim = c.domain().dim();
    for cluster in clusters {
        let mut lo = vec![i64::MAX; dim];
        let mut hi = vec![i64::MIN; dim];
        for s in cluster {
            for a in 0..dim {
                lo[a] = lo[a].min(s.coord(a));
                hi[a] = hi[a].max(s.coord(a));
            }
        }
        let ranges: Vec<(i64, i64)> = (0..dim)
            .map(|a| {
                let base = corner.coord(a);
                (base - lo[a], base + lambda - 1 - hi[a])
            })
            .collect();
        if ranges.iter().any(|&(a, b)| a > b) {
            continue;
        }
        let mut anchor: Vec<i64> = ranges.iter().map(|&(a, _)| a).collect();
        'outer: loop {
            let x = Site(anchor.clone());
            if cluster.iter().all(|s| !c.occupied(&x.add(s))) {
                return true;
            }
            for a in 0..dim {
                if anchor[a] < ranges[a].1 {
                    anchor[a] += 1;
                    for r in 0..a {
                        anchor[r] = ranges[r].0;
                    }
                    continue 'outer;
                }
            }
            break;
        }
    }
    false
}

/// Uniform sample from the configurations of the `k`-vacancy sector that
/// contain an empty cluster translate, by rejection from the uniform
/// sector measure.
pub fn sample_static_ergodic(
    domain: &Domain,
    clusters: &[Vec<Site>],
    k: usize,
    rng: &mut Rng,
    max_tries: usize,
) -> Result<Configuration> {
    let v = domain.volume();
    if k > v {
        return Err(Error::Argument(format!(
            "cannot place {k} vacancies on {v} sites"
        )));
    }
    for _ in 0..max_tries {
        let picks = rand::seq::index::sample(rng, v, k);
        let mut c = Configuration::all_occupied(domain.clone());
        for i in picks {
            c.set_idx(i, false);
        }
        if has_empty_cluster_translate(&c, clusters) {
            return Ok(c);
        }
    }
    Err(Error::Budget(format!(
        "no ergodic sample found in {max_tries} tries"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{bt1d, bt2d};

    fn s(c: &[i64]) -> Site {
        Site(c.to_vec())
    }

    fn pair_clusters() -> Vec<Vec<Site>> {
        vec![vec![s(&[1]), s(&[2])], vec![s(&[1]), s(&[3])]]
    }

    #[test]
    fn sector_enumeration_is_colex_and_complete() {
        let domain = Domain::line(5, BoundaryMode::Occupied).unwrap();
        let space = StateSpace::sector(domain, 2, 1 << 20).unwrap();
        assert_eq!(space.len(), 10);
        // First state: vacancies at the two lowest indices; last: two highest.
        assert_eq!(space.config(0).vacancy_sites(), vec![s(&[1]), s(&[2])]);
        assert_eq!(space.config(9).vacancy_sites(), vec![s(&[4]), s(&[5])]);
        for i in 0..space.len() {
            assert_eq!(space.index_of_mask(space.mask(i)), Some(i));
            assert_eq!(space.config(i).vacancy_count(), 2);
        }
    }

    #[test]
    fn single_site_reservoir_relaxes_in_unit_time() {
        for q in [0.3, 0.5, 0.8] {
            let g = build_reservoir_generator(&bt1d(), 1, q, 1 << 10).unwrap();
            assert_eq!(g.len(), 2);
            let rep = relaxation_time(&g, None).unwrap();
            assert!(
                (rep.relaxation_time - 1.0).abs() < 1e-10,
                "two-state chain must relax in time 1, got {} at q={q}",
                rep.relaxation_time
            );
        }
    }

    #[test]
    fn reservoir_generator_is_reversible() {
        let g = build_reservoir_generator(&bt1d(), 6, 0.3, 1 << 20).unwrap();
        assert_eq!(g.len(), 64);
        assert!(g.detailed_balance_residual() < 1e-12);
        let total: f64 = (0..g.len()).map(|i| g.weight(i)).sum();
        assert!((total - 1.0).abs() < 1e-12, "Bernoulli weights must sum to 1");
    }

    #[test]
    fn closed_l4_k2_matches_the_hand_enumeration() {
        let g = build_closed_generator(&bt1d(), 4, 2, BoundaryMode::Occupied, 1 << 20).unwrap();
        assert_eq!(g.len(), 6);
        let idx = |a: i64, b: i64| {
            let c = Configuration::with_vacancies(
                g.space().domain().clone(),
                &[s(&[a]), s(&[b])],
            )
            .unwrap();
            g.space().index_of(&c).unwrap()
        };
        // Path {1,2}-{1,3}-{2,3}-{2,4}-{3,4} plus the isolated {1,4}.
        let expected: Vec<((i64, i64), (i64, i64))> = vec![
            ((1, 2), (1, 3)),
            ((1, 3), (2, 3)),
            ((2, 3), (2, 4)),
            ((2, 4), (3, 4)),
        ];
        let mut undirected = Vec::new();
        for i in 0..g.len() {
            for &(j, r) in g.row(i) {
                assert!((r - 1.0).abs() < 1e-12, "all allowed exchanges have rate 1");
                if (j as usize) > i {
                    undirected.push((i, j as usize));
                }
            }
        }
        let mut want: Vec<(usize, usize)> = expected
            .iter()
            .map(|&((a, b), (x, y))| {
                let (i, j) = (idx(a, b), idx(x, y));
                (i.min(j), i.max(j))
            })
            .collect();
        want.sort_unstable();
        undirected.sort_unstable();
        assert_eq!(undirected, want, "transition graph is the 5-path");

        let comp = g.components();
        let isolated = idx(1, 4);
        assert!(comp.iter().enumerate().all(|(i, &c)| (c == comp[isolated]) == (i == isolated)));
    }

    #[test]
    fn five_path_relaxation_time_is_golden() {
        let g = build_closed_generator(&bt1d(), 4, 2, BoundaryMode::Occupied, 1 << 20).unwrap();
        let unrestricted = relaxation_time(&g, None).unwrap();
        assert!(unrestricted.relaxation_time.is_infinite());
        assert_eq!(unrestricted.components, 2);

        let comp = g.components();
        let big: Vec<usize> = {
            let isolated = g
                .space()
                .index_of(
                    &Configuration::with_vacancies(
                        g.space().domain().clone(),
                        &[s(&[1]), s(&[4])],
                    )
                    .unwrap(),
                )
                .unwrap();
            (0..g.len()).filter(|&i| comp[i] != comp[isolated]).collect()
        };
        let rep = relaxation_time(&g, Some(&big)).unwrap();
        // Unit-rate path on 5 states: gap = 2(1 - cos(pi/5)) = (3 - sqrt 5)/2.
        let golden = 2.0 / (3.0 - 5.0f64.sqrt());
        assert!(
            (rep.relaxation_time - golden).abs() < 1e-9,
            "expected {golden}, got {}",
            rep.relaxation_time
        );
    }

    #[test]
    fn torus_generator_is_translation_covariant() {
        let g = build_torus_generator(&bt1d(), 6, 1 << 20).unwrap();
        let domain = g.space().domain().clone();
        // Shift every state by one site and compare rates.
        let shift = |mask: u64| -> u64 {
            let mut out = 0u64;
            for i in 0..domain.volume() {
                if mask & (1u64 << i) != 0 {
                    let site = domain.site(i);
                    let moved = domain.wrap(&site.add(&s(&[1])));
                    out |= 1u64 << domain.index(&moved).unwrap();
                }
            }
            out
        };
        for i in 0..g.len() {
            let si = g.space().index_of_mask(shift(g.space().mask(i))).unwrap();
            for &(j, r) in g.row(i) {
                let sj = g
                    .space()
                    .index_of_mask(shift(g.space().mask(j as usize)))
                    .unwrap();
                assert!((g.rate(si, sj) - r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sparse_gap_matches_a_direct_dense_solve() {
        let g = build_reservoir_generator(&bt1d(), 9, 0.4, 1 << 20).unwrap();
        assert_eq!(g.len(), 512);
        let rep = relaxation_time(&g, None).unwrap();
        assert!(!rep.dense, "512 states should take the sparse path");

        let n = g.len();
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = g.exit_rate(i);
            for &(j, r) in g.row(i) {
                m[(i, j as usize)] -= (g.weight(i) / g.weight(j as usize)).sqrt() * r;
            }
        }
        let sym = (&m + m.transpose()) * 0.5;
        let mut vals: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(vals[0].abs() < 1e-9, "kernel eigenvalue drifted: {}", vals[0]);
        assert!(
            (rep.gap - vals[1]).abs() < 1e-7 * vals[1],
            "sparse gap {} vs dense gap {}",
            rep.gap,
            vals[1]
        );

        let small = build_reservoir_generator(&bt1d(), 4, 0.5, 1 << 20).unwrap();
        let rep_small = relaxation_time(&small, None).unwrap();
        assert!(rep_small.dense, "16 states should take the dense path");
        assert!(rep_small.gap > 0.0 && rep_small.relaxation_time.is_finite());
    }

    #[test]
    fn ergodic_partition_matches_static_description_in_1d() {
        let rep = ergodic_components(&bt1d(), 4, 2, &pair_clusters(), 1 << 20).unwrap();
        let mut sizes = rep.component_sizes.clone();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 5]);
        assert!(rep.static_match);
        assert_eq!(rep.ergodic_count, 5);
        // The singleton is the spread pair {1,4}.
        let lone = (0..rep.space.len())
            .find(|&i| rep.component_sizes[rep.component[i]] == 1)
            .unwrap();
        assert_eq!(
            rep.space.config(lone).vacancy_sites(),
            vec![s(&[1]), s(&[4])]
        );
    }

    #[test]
    fn all_occupied_sector_is_one_trivial_component() {
        let rep = ergodic_components(&bt1d(), 5, 0, &pair_clusters(), 1 << 20).unwrap();
        assert_eq!(rep.space.len(), 1);
        assert_eq!(rep.component_sizes, vec![1]);
        assert_eq!(rep.ergodic_count, 0);
        assert!(rep.static_match);
    }

    #[test]
    fn blocked_detection_on_the_profile_configuration() {
        let domain = Domain::line(18, BoundaryMode::Occupied).unwrap();
        let blocked =
            Configuration::with_vacancies(domain.clone(), &[s(&[10]), s(&[13]), s(&[16])])
                .unwrap();
        assert!(is_blocked(&blocked, &bt1d()));

        let live = Configuration::with_vacancies(domain.clone(), &[s(&[5]), s(&[6])]).unwrap();
        assert!(!is_blocked(&live, &bt1d()));

        assert!(is_blocked(&Configuration::all_occupied(domain), &bt1d()));
    }

    #[test]
    fn box_census_counts_straddles_correctly() {
        let domain = Domain::line(10, BoundaryMode::Occupied).unwrap();
        let all_empty = Configuration::all_empty(domain.clone());
        assert_eq!(box_census(&all_empty, &pair_clusters(), 5).unwrap(), (2, 2));

        // A pair straddling the box boundary helps neither box.
        let straddle =
            Configuration::with_vacancies(domain.clone(), &[s(&[5]), s(&[6])]).unwrap();
        assert_eq!(box_census(&straddle, &pair_clusters(), 5).unwrap(), (0, 0));

        let inside =
            Configuration::with_vacancies(domain.clone(), &[s(&[2]), s(&[3]), s(&[9])]).unwrap();
        assert_eq!(box_census(&inside, &pair_clusters(), 5).unwrap(), (1, 1));

        assert!(box_census(&all_empty, &pair_clusters(), 3).is_err());
    }

    #[test]
    fn ergodic_sampler_respects_the_characterization() {
        let domain = Domain::line(20, BoundaryMode::Occupied).unwrap();
        let mut rng = crate::rng::single(7);
        for _ in 0..50 {
            let c = sample_static_ergodic(&domain, &pair_clusters(), 4, &mut rng, 10_000).unwrap();
            assert_eq!(c.vacancy_count(), 4);
            assert!(has_empty_cluster_translate(&c, &pair_clusters()));
        }
    }

    #[test]
    fn square_lattice_examples_behave_as_described() {
        let m = bt2d();
        let domain = Domain::square(8, BoundaryMode::Occupied).unwrap();
        let square = vec![s(&[1, 1]), s(&[1, 2]), s(&[2, 1]), s(&[2, 2])];
        let clusters = vec![square];

        // Spread vacancies: blocked.
        let a = Configuration::with_vacancies(
            domain.clone(),
            &[s(&[2, 1]), s(&[7, 4]), s(&[4, 7]), s(&[2, 6])],
        )
        .unwrap();
        assert!(is_blocked(&a, &m));

        // Two independent pairs: mobile but confined, so never a square.
        let b = Configuration::with_vacancies(
            domain.clone(),
            &[s(&[7, 4]), s(&[4, 6]), s(&[2, 6]), s(&[7, 3])],
        )
        .unwrap();
        assert!(!is_blocked(&b, &m));
        let found_square = |c: &Configuration| has_empty_cluster_translate(c, &clusters);
        match explore_component(&m, &b, &found_square, None, 1 << 20).unwrap() {
            Exploration::Exhausted { visited } => {
                assert!(visited > 1, "the pairs can move");
            }
            Exploration::Found(_) => panic!("this component never assembles a square"),
            Exploration::CapReached { .. } => panic!("component unexpectedly large"),
        }

        // Five vacancies that can assemble a square even though none is
        // present locally: greedy gathering finds it.
        let d = Configuration::with_vacancies(
            domain.clone(),
            &[s(&[2, 6]), s(&[2, 7]), s(&[3, 2]), s(&[6, 3]), s(&[8, 3])],
        )
        .unwrap();
        assert!(!has_empty_cluster_translate(&d, &clusters));
        let gather = |c: &Configuration| -> i64 {
            let vs = c.vacancy_sites();
            let mut total = 0;
            for i in 0..vs.len() {
                for j in i + 1..vs.len() {
                    total += vs[i].sub(&vs[j]).0.iter().map(|x| x.abs()).sum::<i64>();
                }
            }
            total
        };
        match explore_component(&m, &d, &found_square, Some(&gather), 3_000_000).unwrap() {
            Exploration::Found(c) => assert!(has_empty_cluster_translate(&c, &clusters)),
            Exploration::Exhausted { visited } | Exploration::CapReached { visited } => {
                panic!("no square found after {visited} states")
            }
        }
    }
}
