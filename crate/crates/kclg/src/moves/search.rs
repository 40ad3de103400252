//! Bounded search for mobility certificates: translation moves found by
//! breadth-first search over vacancy patterns in a window, and exchange moves
//! assembled by routing the cluster next to the target edge, exchanging, and
//! rolling the route back.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::lattice::{BoundaryMode, Direction, FinitePermutation, Site};
use crate::models::{ConstraintModel, RateMode};

use super::{
    permutation_of_steps, validate, DomainSpec, MoveContext, MoveProgram, MoveReport, MoveStep,
    ValidationMode,
};

/// Result of a bounded one-sided search: absence of a move is evidence, not
/// proof, of cooperativity.
#[derive(Debug)]
pub enum SearchOutcome {
    Found(MoveProgram),
    /// The whole reachable state space was explored: no move exists within
    /// this window.
    NotFound,
    /// The budget ran out first; the question stays open.
    BudgetExceeded,
}

impl SearchOutcome {
    pub fn found(self) -> Option<MoveProgram> {
        match self {
            SearchOutcome::Found(p) => Some(p),
            _ => None,
        }
    }
}

/// Bit indexing of the window `[-l, l]^d`.
struct WindowIdx {
    l: i64,
    dim: usize,
    side: i64,
}

impl WindowIdx {
    fn new(l: i64, dim: usize) -> Result<Self> {
        let side = 2 * l + 1;
        let bits = (side as u128).checked_pow(dim as u32);
        match bits {
            Some(n) if n <= 127 => Ok(WindowIdx { l, dim, side }),
            _ => Err(Error::Budget(format!(
                "window [-{l},{l}]^{dim} exceeds the 127-site mask limit"
            ))),
        }
    }

    fn volume(&self) -> usize {
        (self.side as usize).pow(self.dim as u32)
    }

    fn index(&self, s: &Site) -> Option<usize> {
        let mut idx: i64 = 0;
        for a in 0..self.dim {
            let c = s.coord(a);
            if c < -self.l || c > self.l {
                return None;
            }
            idx = idx * self.side + (c + self.l);
        }
        Some(idx as usize)
    }

    fn site(&self, mut idx: usize) -> Site {
        let mut coords = vec![0i64; self.dim];
        for a in (0..self.dim).rev() {
            coords[a] = (idx as i64 % self.side) - self.l;
            idx /= self.side as usize;
        }
        Site(coords)
    }

    fn mask_of(&self, sites: &[Site]) -> Option<u128> {
        let mut m = 0u128;
        for s in sites {
            m |= 1u128 << self.index(s)?;
        }
        Some(m)
    }
}

/// Edge rate read off a vacancy mask, exterior occupied.
fn mask_rate(m: &ConstraintModel, idx: &WindowIdx, mask: u128, base: &Site, axis: usize) -> f64 {
    let mut rate = 0.0;
    for cl in m.clauses(axis) {
        let satisfied = cl.offsets.iter().all(|o| {
            idx.index(&base.add(o))
                .map(|i| mask & (1u128 << i) != 0)
                .unwrap_or(false)
        });
        if satisfied {
            match m.rate_mode() {
                RateMode::IndicatorAny => return 1.0,
                RateMode::WeightedCount => rate += cl.weight,
            }
        }
    }
    rate
}

/// Breadth-first search for a deterministic move translating the empty
/// cluster `C` one lattice step in direction `e`, with every exchange inside
/// `[-l, l]^d` and the exterior treated as occupied. A path found here is the
/// worst-case trajectory itself, so the move is valid on its whole domain by
/// monotonicity.
pub fn search_translation(
    m: &ConstraintModel,
    cluster: &[Site],
    l: i64,
    e: Direction,
    budget: u64,
) -> Result<SearchOutcome> {
    let dim = m.dim();
    if cluster.is_empty() {
        return Err(Error::Argument("cluster must be nonempty".into()));
    }
    let mut sorted = cluster.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != cluster.len() {
        return Err(Error::Argument("cluster sites must be distinct".into()));
    }
    let idx = WindowIdx::new(l, dim)?;
    let e_vec = e.versor(dim);
    let goal_sites: Vec<Site> = cluster.iter().map(|s| s.add(&e_vec)).collect();
    let start = idx.mask_of(cluster).ok_or_else(|| {
        Error::Argument(format!("cluster does not fit the window [-{l},{l}]^{dim}"))
    })?;
    let goal = idx.mask_of(&goal_sites).ok_or_else(|| {
        Error::Argument(format!("translated cluster leaves the window [-{l},{l}]^{dim}"))
    })?;
    if start == goal {
        return Err(Error::Argument("translated cluster equals the cluster".into()));
    }

    let sites: Vec<Site> = (0..idx.volume()).map(|i| idx.site(i)).collect();
    let mut parent: HashMap<u128, (u128, MoveStep)> = HashMap::new();
    let mut queue = VecDeque::new();
    queue.push_back(start);
    parent.insert(start, (start, MoveStep::BoundaryFlip { site: Site::zero(dim) }));
    let mut expanded: u64 = 0;

    while let Some(mask) = queue.pop_front() {
        if mask == goal {
            let mut steps = Vec::new();
            let mut cur = mask;
            while cur != start {
                let (prev, step) = parent[&cur].clone();
                steps.push(step);
                cur = prev;
            }
            steps.reverse();
            let program = MoveProgram::deterministic(
                format!("tr{e}"),
                dim,
                (Site(vec![-l; dim]), Site(vec![l; dim])),
                vec![],
                DomainSpec::empty_sites(cluster.to_vec()),
                steps,
            )?;
            return Ok(SearchOutcome::Found(program));
        }
        expanded += 1;
        if expanded > budget {
            return Ok(SearchOutcome::BudgetExceeded);
        }
        for (i, x) in sites.iter().enumerate() {
            for axis in 0..dim {
                let y = x.add(&Site::unit(axis, dim));
                let Some(j) = idx.index(&y) else { continue };
                let bx = mask & (1u128 << i) != 0;
                let by = mask & (1u128 << j) != 0;
                if bx == by {
                    continue; // exchanging equal values goes nowhere
                }
                if mask_rate(m, &idx, mask, x, axis) < 1.0 - 1e-9 {
                    continue;
                }
                let next = mask ^ (1u128 << i) ^ (1u128 << j);
                if parent.contains_key(&next) {
                    continue;
                }
                parent.insert(
                    next,
                    (mask, MoveStep::exchange(x.clone(), Direction::new(axis, true))),
                );
                queue.push_back(next);
            }
        }
    }
    Ok(SearchOutcome::NotFound)
}

/// Builds the exchange move for the pair `(le, (l+1)e)` from translation
/// moves: route a copy of the cluster until it covers an enabling clause of
/// the target edge (without disturbing the pair), exchange, and roll back.
/// The result is validated in worst-case mode before being returned.
pub fn exchange_from_translation(
    m: &ConstraintModel,
    trs: &[Option<MoveProgram>],
    cluster: &[Site],
    l: i64,
    e: Direction,
    budget: u64,
) -> Result<SearchOutcome> {
    let dim = m.dim();
    let dirs = Direction::all(dim);
    if trs.len() != dirs.len() {
        return Err(Error::Argument(format!(
            "expected {} translation slots, got {}",
            dirs.len(),
            trs.len()
        )));
    }
    let e_vec = e.versor(dim);
    let pair_a = e_vec.scale(l);
    let pair_b = e_vec.scale(l + 1);
    // Rate clauses are evaluated relative to the lower endpoint of the edge.
    let base = if e.positive { pair_a.clone() } else { pair_b.clone() };
    let in_window = |s: &Site| (0..dim).all(|a| s.coord(a).abs() <= l);

    //… route over cluster positions; each transition applies one translated
    // translation move and must keep every step inside the window.
    struct Node {
        route: Vec<MoveStep>,
        sigma: FinitePermutation,
    }
    let mut seen: HashMap<Site, Node> = HashMap::new();
    let mut queue: VecDeque<Site> = VecDeque::new();
    let origin = Site::zero(dim);
    seen.insert(
        origin.clone(),
        Node {
            route: Vec::new(),
            sigma: FinitePermutation::identity(),
        },
    );
    queue.push_back(origin);
    let mut expanded: u64 = 0;
    let mut out_of_budget = false;

    while let Some(p) = queue.pop_front() {
        // Acceptance: the routed cluster covers an enabling clause of the
        // target edge, avoids the pair, and its route permutation fixes the
        // pair so the rollback restores everything but the exchange.
        let node_sigma = seen[&p].sigma.clone();
        let routed: Vec<Site> = cluster.iter().map(|s| s.add(&p)).collect();
        let covers = m.clauses(e.axis).iter().any(|cl| {
            cl.offsets
                .iter()
                .all(|o| routed.contains(&base.add(o)))
        });
        let avoids = !routed.contains(&pair_a) && !routed.contains(&pair_b);
        let fixes = node_sigma.image(&pair_a) == pair_a && node_sigma.image(&pair_b) == pair_b;
        if covers && avoids && fixes {
            let route = seen[&p].route.clone();
            let mut steps = route.clone();
            steps.push(MoveStep::exchange(pair_a.clone(), e));
            steps.extend(route.iter().rev().cloned());
            let extras = if in_window(&pair_b) {
                vec![]
            } else {
                vec![pair_b.clone()]
            };
            let program = MoveProgram::deterministic(
                format!("ex{e}"),
                dim,
                (Site(vec![-l; dim]), Site(vec![l; dim])),
                extras,
                DomainSpec::empty_sites(cluster.to_vec()),
                steps,
            )?;
            // Gate: the program must validate and realize exactly the target
            // transposition.
            let ctx = MoveContext::bulk(m.clone(), BoundaryMode::Occupied)?;
            let report = validate(&program, &ctx, ValidationMode::WorstCase, budget)?;
            let sigma = permutation_of_steps(program.fixed_steps()?, dim)?;
            let target = FinitePermutation::transposition(pair_a.clone(), pair_b.clone())?;
            if report.valid && sigma == target {
                return Ok(SearchOutcome::Found(program));
            }
            // Otherwise keep exploring other routes.
        }
        expanded += 1;
        if expanded > budget {
            out_of_budget = true;
            break;
        }
        for (slot, d) in dirs.iter().enumerate() {
            let Some(tr) = &trs[slot] else { continue };
            let instance = tr.translate(&p);
            let Ok(inst_steps) = instance.fixed_steps() else { continue };
            let fits = inst_steps
                .iter()
                .all(|st| st.touched(dim).iter().all(&in_window));
            if !fits {
                continue;
            }
            let next = p.add(&d.versor(dim));
            if seen.contains_key(&next) {
                continue;
            }
            let mut route = seen[&p].route.clone();
            route.extend(inst_steps.iter().cloned());
            let sigma = permutation_of_steps(inst_steps, dim)?.compose(&node_sigma);
            seen.insert(next.clone(), Node { route, sigma });
            queue.push_back(next);
        }
    }
    Ok(if out_of_budget {
        SearchOutcome::BudgetExceeded
    } else {
        SearchOutcome::NotFound
    })
}

/// One certified program with its validation report.
#[derive(Clone, Debug)]
pub struct CertifiedMove {
    pub direction: Direction,
    pub program: MoveProgram,
    pub report: MoveReport,
    /// For translations: whether the permutation moves each cluster site by
    /// exactly `e` (pointwise), or only the cluster as a set.
    pub pointwise: bool,
}

/// A mobile cluster: translation and exchange moves in all `2d` directions,
/// each validated in worst-case mode. Its existence makes the model
/// noncooperative.
#[derive(Clone, Debug)]
pub struct MobileClusterCertificate {
    pub model_name: String,
    pub cluster: Vec<Site>,
    pub l: i64,
    pub translations: Vec<CertifiedMove>,
    pub exchanges: Vec<CertifiedMove>,
}

impl MobileClusterCertificate {
    pub fn dim(&self) -> usize {
        self.cluster[0].dim()
    }

    fn slot(&self, e: Direction) -> usize {
        Direction::all(self.dim())
            .iter()
            .position(|d| *d == e)
            .expect("direction within model dimension")
    }

    pub fn translation(&self, e: Direction) -> &CertifiedMove {
        &self.translations[self.slot(e)]
    }

    pub fn exchange(&self, e: Direction) -> &CertifiedMove {
        &self.exchanges[self.slot(e)]
    }

    /// The translation move instance for the cluster copy at `x + C`.
    pub fn translation_move(&self, x: &Site, e: Direction) -> MoveProgram {
        self.translation(e).program.translate(x)
    }

    /// The exchange move instance swapping `x + le` and `x + (l+1)e`.
    pub fn exchange_move(&self, x: &Site, e: Direction) -> MoveProgram {
        self.exchange(e).program.translate(x)
    }
}

/// Searches translation and exchange moves in every direction and validates
/// them; `None` when any direction fails (the search is one-sided, so this
/// does not prove the model cooperative).
pub fn certify(
    m: &ConstraintModel,
    cluster: &[Site],
    l: i64,
    budget: u64,
) -> Result<Option<MobileClusterCertificate>> {
    let dim = m.dim();
    let dirs = Direction::all(dim);
    let mut tr_programs: Vec<Option<MoveProgram>> = Vec::new();
    for &e in &dirs {
        match search_translation(m, cluster, l, e, budget)? {
            SearchOutcome::Found(p) => tr_programs.push(Some(p)),
            _ => return Ok(None),
        }
    }
    let ctx = MoveContext::bulk(m.clone(), BoundaryMode::Occupied)?;
    let mut translations = Vec::new();
    for (slot, &e) in dirs.iter().enumerate() {
        let program = tr_programs[slot].clone().expect("filled above");
        let report = validate(&program, &ctx, ValidationMode::WorstCase, budget)?;
        let sigma = report
            .permutation
            .clone()
            .ok_or_else(|| Error::Validation("translation move lost its permutation".into()))?;
        let e_vec = e.versor(dim);
        let mut shifted: Vec<Site> = cluster.iter().map(|s| s.add(&e_vec)).collect();
        shifted.sort();
        if !report.valid || sigma.image_set(cluster) != shifted {
            return Ok(None);
        }
        let pointwise = cluster.iter().all(|s| sigma.image(s) == s.add(&e_vec));
        translations.push(CertifiedMove {
            direction: e,
            program,
            report,
            pointwise,
        });
    }
    let mut exchanges = Vec::new();
    for &e in &dirs {
        match exchange_from_translation(m, &tr_programs, cluster, l, e, budget)? {
            SearchOutcome::Found(program) => {
                let report = validate(&program, &ctx, ValidationMode::WorstCase, budget)?;
                if !report.valid {
                    return Ok(None);
                }
                exchanges.push(CertifiedMove {
                    direction: e,
                    program,
                    report,
                    pointwise: true, // exchange permutations are exact transpositions
                });
            }
            _ => return Ok(None),
        }
    }
    Ok(Some(MobileClusterCertificate {
        model_name: m.name().to_string(),
        cluster: cluster.to_vec(),
        l,
        translations,
        exchanges,
    }))
}
