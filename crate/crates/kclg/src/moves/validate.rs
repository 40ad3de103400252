//! Move validation: checks every step against the constraint rates, extracts
//! the associated permutation, and accounts information loss, energy barrier,
//! and per-site touch counts.
//!
//! Exhaustive mode enumerates the whole domain on the move's frame box.
//! Worst-case mode checks only the configuration with the domain pattern
//! empty and everything else occupied: rates are monotone under emptying, so
//! validity there implies validity on every domain configuration, step by
//! step (exchanges preserve the pointwise order between configurations).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::lattice::{BoundaryMode, Configuration, Domain, FinitePermutation, Site};
use crate::models::ConstraintModel;

use super::{DomainSpec, MoveBody, MoveProgram, MoveStep};

const VALID_TOL: f64 = 1e-9;

/// Where a move runs: the model whose rates gate each exchange, the exterior
/// fill for reads outside the frame, and whether boundary flips are legal.
#[derive(Clone, Debug)]
pub struct MoveContext {
    pub model: ConstraintModel,
    pub exterior: BoundaryMode,
    pub reservoir: bool,
}

impl MoveContext {
    /// Bulk context: no reservoir, the given exterior fill.
    pub fn bulk(model: ConstraintModel, exterior: BoundaryMode) -> Result<Self> {
        if exterior == BoundaryMode::Periodic {
            return Err(Error::Argument(
                "move validation needs a fixed exterior fill, not a torus".into(),
            ));
        }
        Ok(MoveContext {
            model,
            exterior,
            reservoir: false,
        })
    }

    /// Reservoir context: empty exterior fill, boundary flips legal on the
    /// window boundary.
    pub fn reservoir(model: ConstraintModel) -> Self {
        MoveContext {
            model,
            exterior: BoundaryMode::Empty,
            reservoir: true,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ValidationMode {
    Exhaustive,
    WorstCase,
}

/// A reproducing failure: the initial vacancy set (absolute coordinates), the
/// failing time, and the step that could not be performed.
#[derive(Clone, Debug)]
pub struct FailureWitness {
    pub vacancies: Vec<Site>,
    pub time: usize,
    pub step: Option<MoveStep>,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct MoveReport {
    pub valid: bool,
    /// Maximum number of steps over the domain.
    pub steps: usize,
    /// Information loss in bits: ceil(log2) of the worst collision count of
    /// (time, configuration, step) triples over the domain.
    pub loss: u32,
    /// True when `loss` is an upper bound (worst-case mode on guarded moves)
    /// rather than an exact count.
    pub loss_is_bound: bool,
    /// Max over times and domain configurations of the vacancy excess.
    pub energy_barrier: i64,
    /// The common associated permutation, when every domain configuration
    /// yields the same one and no boundary flips occur.
    pub permutation: Option<FinitePermutation>,
    /// Max number of steps touching any single site.
    pub max_touches: usize,
    /// Domain configurations examined.
    pub checked: u64,
    pub mode: ValidationMode,
    pub witness: Option<FailureWitness>,
}

/// Maps absolute move coordinates onto a 1-based frame domain.
pub(crate) struct Frame {
    pub lo: Site,
    pub domain: Domain,
}

impl Frame {
    pub fn new(p: &MoveProgram, exterior: BoundaryMode) -> Result<Frame> {
        let (lo, hi) = p.frame_box();
        let extent: Vec<i64> = (0..p.dim())
            .map(|a| hi.coord(a) - lo.coord(a) + 1)
            .collect();
        Ok(Frame {
            domain: Domain::new(extent, exterior)?,
            lo,
        })
    }

    pub fn local(&self, s: &Site) -> Site {
        Site(
            s.0.iter()
                .zip(&self.lo.0)
                .map(|(c, l)| c - l + 1)
                .collect(),
        )
    }

    pub fn absolute(&self, s: &Site) -> Site {
        Site(
            s.0.iter()
                .zip(&self.lo.0)
                .map(|(c, l)| c + l - 1)
                .collect(),
        )
    }
}

/// Outcome of running one domain configuration through the program.
struct Run {
    steps: Vec<MoveStep>,
    /// Frame-local configurations, one per time 0..=T.
    configs: Vec<Configuration>,
    failure: Option<FailureWitness>,
    has_flip: bool,
}

fn run_one(
    p: &MoveProgram,
    ctx: &MoveContext,
    frame: &Frame,
    start: &Configuration,
) -> Result<Run> {
    let read = |s: &Site| start.occupied(&frame.local(s));
    let steps = p.steps_for(&read)?;
    let mut configs = Vec::with_capacity(steps.len() + 1);
    configs.push(start.clone());
    let mut cur = start.clone();
    let mut failure = None;
    let mut has_flip = false;
    let boundary = window_boundary(p);
    let witness_at = |start: &Configuration, t: usize, st: &MoveStep, reason: String| {
        Some(FailureWitness {
            vacancies: start
                .vacancy_sites()
                .iter()
                .map(|s| frame.absolute(s))
                .collect(),
            time: t,
            step: Some(st.clone()),
            reason,
        })
    };
    for (t, st) in steps.iter().enumerate() {
        match st {
            MoveStep::Exchange { site, dir } => {
                let local = frame.local(site);
                let other = frame.local(&site.add(&dir.versor(p.dim())));
                if !frame.domain.contains(&local) || !frame.domain.contains(&other) {
                    failure = witness_at(start, t, st, "step escapes the frame".into());
                    break;
                }
                let rate = ctx.model.edge_rate(&cur, &local, *dir);
                if rate < 1.0 - VALID_TOL {
                    failure = witness_at(start, t, st, format!("edge rate {rate} < 1"));
                    break;
                }
                cur.exchange_in_place(&local, &other)?;
            }
            MoveStep::BoundaryFlip { site } => {
                has_flip = true;
                let local = frame.local(site);
                if !ctx.reservoir || !boundary(site) || !frame.domain.contains(&local) {
                    let reason = if ctx.reservoir {
                        format!("flip site {site:?} is not on the window boundary")
                    } else {
                        "boundary flip outside a reservoir context".into()
                    };
                    failure = witness_at(start, t, st, reason);
                    break;
                }
                cur = cur.flip(&local)?;
            }
        }
        configs.push(cur.clone());
    }
    Ok(Run {
        steps,
        configs,
        failure,
        has_flip,
    })
}

/// Predicate: absolute site lies on the boundary of the move's core window.
fn window_boundary(p: &MoveProgram) -> impl Fn(&Site) -> bool + '_ {
    let (lo, hi) = p.window();
    move |s: &Site| {
        p.in_window(s)
            && (0..p.dim()).any(|a| s.coord(a) == lo.coord(a) || s.coord(a) == hi.coord(a))
    }
}

/// Enumerates the domain configurations of a program on its frame.
fn domain_configs(
    p: &MoveProgram,
    frame: &Frame,
    budget: u64,
) -> Result<Vec<Configuration>> {
    let volume = frame.domain.volume();
    let (fixed_empty, fixed_occupied): (Vec<Site>, Vec<Site>) = match &p.domain {
        DomainSpec::All | DomainSpec::AnyBranch => (Vec::new(), Vec::new()),
        DomainSpec::Pattern(g) => (
            g.empty.iter().map(|s| frame.local(s)).collect(),
            g.occupied.iter().map(|s| frame.local(s)).collect(),
        ),
    };
    let mut fixed_idx: HashMap<usize, bool> = HashMap::new();
    for s in &fixed_empty {
        let i = frame.domain.index(s).ok_or_else(|| {
            Error::Validation(format!("domain site {s:?} escapes the frame"))
        })?;
        fixed_idx.insert(i, false);
    }
    for s in &fixed_occupied {
        let i = frame.domain.index(s).ok_or_else(|| {
            Error::Validation(format!("domain site {s:?} escapes the frame"))
        })?;
        if fixed_idx.insert(i, true) == Some(false) {
            return Err(Error::Validation(format!(
                "domain requires {s:?} both empty and occupied"
            )));
        }
    }
    let free: Vec<usize> = (0..volume).filter(|i| !fixed_idx.contains_key(i)).collect();
    if free.len() >= 63 || (1u64 << free.len()) > budget {
        return Err(Error::Budget(format!(
            "2^{} domain configurations exceed budget {budget}",
            free.len()
        )));
    }
    let mut out = Vec::with_capacity(1 << free.len());
    for mask in 0..(1u64 << free.len()) {
        let mut c = Configuration::all_occupied(frame.domain.clone());
        for (&i, &occ) in &fixed_idx {
            c.set_idx(i, occ);
        }
        for (b, &i) in free.iter().enumerate() {
            c.set_idx(i, mask & (1 << b) != 0);
        }
        if matches!(p.domain, DomainSpec::AnyBranch) {
            let MoveBody::Branches(branches) = &p.body else {
                return Err(Error::Validation(format!(
                    "move '{}' declares a branch-union domain without branches",
                    p.name
                )));
            };
            let read = |s: &Site| c.occupied(&frame.local(s));
            if !branches.iter().any(|b| b.guard.matches(&read)) {
                continue;
            }
        }
        out.push(c);
    }
    Ok(out)
}

/// Worst-case start: the domain pattern's empty sites vacant, all else
/// occupied. `None` when the pattern is contradictory (empty branch domain).
fn worst_start(frame: &Frame, empty: &[Site], occupied: &[Site]) -> Option<Configuration> {
    let local: Vec<Site> = empty.iter().map(|s| frame.local(s)).collect();
    for o in occupied {
        if local.contains(&frame.local(o)) {
            return None;
        }
    }
    Configuration::with_vacancies(frame.domain.clone(), &local).ok()
}

pub fn validate(
    p: &MoveProgram,
    ctx: &MoveContext,
    mode: ValidationMode,
    budget: u64,
) -> Result<MoveReport> {
    match mode {
        ValidationMode::Exhaustive => validate_exhaustive(p, ctx, budget),
        ValidationMode::WorstCase => validate_worst_case(p, ctx),
    }
}

fn validate_exhaustive(p: &MoveProgram, ctx: &MoveContext, budget: u64) -> Result<MoveReport> {
    let frame = Frame::new(p, ctx.exterior)?;
    let starts = domain_configs(p, &frame, budget)?;
    let mut report = MoveReport {
        valid: true,
        steps: 0,
        loss: 0,
        loss_is_bound: false,
        energy_barrier: 0,
        permutation: None,
        max_touches: 0,
        checked: 0,
        mode: ValidationMode::Exhaustive,
        witness: None,
    };
    // Collision buckets per time: (configuration bytes, step about to fire).
    // Runs shorter than the common horizon are padded with no-op resting
    // states (the canonical out-of-box no-op step) before counting.
    let mut buckets: Vec<HashMap<(Vec<u8>, Option<MoveStep>), u64>> = Vec::new();
    let mut endings: Vec<(Vec<u8>, usize)> = Vec::new();
    let mut common_sigma: Option<Option<FinitePermutation>> = None;
    for start in &starts {
        let run = run_one(p, ctx, &frame, start)?;
        report.checked += 1;
        if let Some(w) = run.failure {
            report.valid = false;
            report.witness = Some(w);
            return Ok(report);
        }
        report.steps = report.steps.max(run.steps.len());
        let vac0 = run.configs[0].vacancy_count() as i64;
        for (t, cfg) in run.configs.iter().enumerate() {
            let excess = cfg.vacancy_count() as i64 - vac0;
            report.energy_barrier = report.energy_barrier.max(excess);
            if buckets.len() <= t {
                buckets.push(HashMap::new());
            }
            let step = run.steps.get(t).cloned();
            *buckets[t]
                .entry((cfg.occ_bytes().to_vec(), step))
                .or_insert(0) += 1;
        }
        endings.push((
            run.configs.last().expect("start config present").occ_bytes().to_vec(),
            run.configs.len(),
        ));
        let mut touches: HashMap<Site, usize> = HashMap::new();
        for st in &run.steps {
            for site in st.touched(p.dim()) {
                *touches.entry(site).or_insert(0) += 1;
            }
        }
        report.max_touches = report
            .max_touches
            .max(touches.values().copied().max().unwrap_or(0));
        let sigma = if run.has_flip {
            None
        } else {
            Some(super::permutation_of_steps(&run.steps, p.dim())?)
        };
        match &common_sigma {
            None => common_sigma = Some(sigma),
            Some(prev) if *prev == sigma => {}
            Some(_) => common_sigma = Some(None),
        }
    }
    for (final_bytes, len) in endings {
        for bucket in buckets.iter_mut().skip(len) {
            *bucket.entry((final_bytes.clone(), None)).or_insert(0) += 1;
        }
    }
    let worst = buckets
        .iter()
        .flat_map(|m| m.values())
        .copied()
        .max()
        .unwrap_or(1);
    report.loss = (worst.max(1) as f64).log2().ceil() as u32;
    report.permutation = common_sigma.flatten();
    Ok(report)
}

fn validate_worst_case(p: &MoveProgram, ctx: &MoveContext) -> Result<MoveReport> {
    let branches = match &p.body {
        MoveBody::Branches(b) => b,
        MoveBody::Computed { .. } => {
            return Err(Error::Argument(
                "worst-case validation needs explicit branches; use exhaustive mode".into(),
            ))
        }
    };
    let (dom_empty, dom_occupied) = match &p.domain {
        DomainSpec::All | DomainSpec::AnyBranch => (Vec::new(), Vec::new()),
        DomainSpec::Pattern(g) => (g.empty.clone(), g.occupied.clone()),
    };
    let frame = Frame::new(p, ctx.exterior)?;
    let mut report = MoveReport {
        valid: true,
        steps: 0,
        loss: 0,
        loss_is_bound: branches.len() > 1,
        energy_barrier: 0,
        permutation: None,
        max_touches: 0,
        checked: 0,
        mode: ValidationMode::WorstCase,
        witness: None,
    };
    if branches.len() > 1 {
        report.loss = (branches.len() as f64).log2().ceil() as u32;
    }
    let mut common_sigma: Option<Option<FinitePermutation>> = None;
    for branch in branches {
        let mut empty = dom_empty.clone();
        for s in &branch.guard.empty {
            if !empty.contains(s) {
                empty.push(s.clone());
            }
        }
        let mut occupied = dom_occupied.clone();
        occupied.extend(branch.guard.occupied.iter().cloned());
        let Some(start) = worst_start(&frame, &empty, &occupied) else {
            continue; // contradictory pattern: branch domain is empty
        };
        // First-match semantics: run the program, not the branch, so a
        // shadowed branch is exercised exactly as it would fire in practice.
        let run = run_one(p, ctx, &frame, &start)?;
        report.checked += 1;
        if let Some(w) = run.failure {
            report.valid = false;
            report.witness = Some(w);
            return Ok(report);
        }
        report.steps = report.steps.max(run.steps.len());
        let vac0 = run.configs[0].vacancy_count() as i64;
        for cfg in &run.configs {
            report.energy_barrier = report
                .energy_barrier
                .max(cfg.vacancy_count() as i64 - vac0);
        }
        let mut touches: HashMap<Site, usize> = HashMap::new();
        for st in &run.steps {
            for site in st.touched(p.dim()) {
                *touches.entry(site).or_insert(0) += 1;
            }
        }
        report.max_touches = report
            .max_touches
            .max(touches.values().copied().max().unwrap_or(0));
        let sigma = if run.has_flip {
            None
        } else {
            Some(super::permutation_of_steps(&run.steps, p.dim())?)
        };
        match &common_sigma {
            None => common_sigma = Some(sigma),
            Some(prev) if *prev == sigma => {}
            Some(_) => common_sigma = Some(None),
        }
    }
    report.permutation = common_sigma.flatten();
    Ok(report)
}

/// Applies a step list to a configuration, mapping absolute move coordinates
/// through `origin` (absolute site `s` acts on domain site `s + origin`).
/// No rate checks: pure bookkeeping, wrapping on periodic domains.
pub fn simulate_steps(
    steps: &[MoveStep],
    cfg: &Configuration,
    origin: &Site,
) -> Result<Configuration> {
    let dim = cfg.domain().dim();
    let mut cur = cfg.clone();
    for st in steps {
        match st {
            MoveStep::Exchange { site, dir } => {
                let a = site.add(origin);
                let b = a.add(&dir.versor(dim));
                cur.exchange_in_place(&a, &b)?;
            }
            MoveStep::BoundaryFlip { site } => {
                cur = cur.flip(&site.add(origin))?;
            }
        }
    }
    Ok(cur)
}

/// Summary of an exhaustive final-state scan.
#[derive(Clone, Debug)]
pub struct FinalCheck {
    pub all_match: bool,
    pub checked: u64,
    pub witness: Option<FailureWitness>,
}

/// Runs every domain configuration through the program and tests the final
/// state with `pred(initial, final)`; both are frame-local (identical to
/// absolute coordinates when the window starts at the all-ones site). Any
/// invalid step is reported as a mismatch.
pub fn check_final_configurations(
    p: &MoveProgram,
    ctx: &MoveContext,
    budget: u64,
    pred: &dyn Fn(&Configuration, &Configuration) -> bool,
) -> Result<FinalCheck> {
    let frame = Frame::new(p, ctx.exterior)?;
    let starts = domain_configs(p, &frame, budget)?;
    let mut checked = 0;
    for start in &starts {
        let run = run_one(p, ctx, &frame, start)?;
        checked += 1;
        if let Some(w) = run.failure {
            return Ok(FinalCheck {
                all_match: false,
                checked,
                witness: Some(w),
            });
        }
        let final_cfg = run.configs.last().expect("start config present");
        if !pred(start, final_cfg) {
            return Ok(FinalCheck {
                all_match: false,
                checked,
                witness: Some(FailureWitness {
                    vacancies: start
                        .vacancy_sites()
                        .iter()
                        .map(|s| frame.absolute(s))
                        .collect(),
                    time: run.steps.len(),
                    step: None,
                    reason: "final configuration fails the predicate".into(),
                }),
            });
        }
    }
    Ok(FinalCheck {
        all_match: true,
        checked,
        witness: None,
    })
}

/// Outcome of following a tagged particle through a deterministic move.
#[derive(Clone, Debug)]
pub struct TracerCheck {
    pub ok: bool,
    /// Where the tagged particle ends up when every touching step is clean.
    pub end: Site,
    pub witness: Option<FailureWitness>,
}

/// Follows a tagged particle starting at `tracer` through the worst-case run
/// of a deterministic move. Every exchange touching the particle must have
/// its partner site empty at that time (so the particle genuinely moves with
/// the step), and no boundary flip may land on it.
///
/// The step list is fixed and exchanges preserve the pointwise order between
/// configurations, so a partner empty in the worst-case run is empty in every
/// dominated run: one pass certifies the whole domain, and the endpoint is
/// shared by all of it.
pub fn check_tracer_steps(
    p: &MoveProgram,
    ctx: &MoveContext,
    tracer: &Site,
) -> Result<TracerCheck> {
    p.fixed_steps()?;
    let frame = Frame::new(p, ctx.exterior)?;
    let (dom_empty, dom_occupied) = match &p.domain {
        DomainSpec::All | DomainSpec::AnyBranch => (Vec::new(), Vec::new()),
        DomainSpec::Pattern(g) => (g.empty.clone(), g.occupied.clone()),
    };
    if dom_empty.contains(tracer) {
        return Err(Error::Argument(format!(
            "tracer site {tracer:?} is empty on the move's domain"
        )));
    }
    let start = worst_start(&frame, &dom_empty, &dom_occupied).ok_or_else(|| {
        Error::Validation("move domain is contradictory, nothing to check".into())
    })?;
    let run = run_one(p, ctx, &frame, &start)?;
    if let Some(w) = run.failure {
        return Ok(TracerCheck {
            ok: false,
            end: tracer.clone(),
            witness: Some(w),
        });
    }
    let mut pos = tracer.clone();
    let witness_at = |t: usize, st: &MoveStep, reason: String| FailureWitness {
        vacancies: start
            .vacancy_sites()
            .iter()
            .map(|s| frame.absolute(s))
            .collect(),
        time: t,
        step: Some(st.clone()),
        reason,
    };
    for (t, st) in run.steps.iter().enumerate() {
        match st {
            MoveStep::Exchange { site, dir } => {
                let a = site.clone();
                let b = site.add(&dir.versor(p.dim()));
                let partner = if frame.local(&a) == frame.local(&pos) {
                    b
                } else if frame.local(&b) == frame.local(&pos) {
                    a
                } else {
                    continue;
                };
                if run.configs[t].occupied(&frame.local(&partner)) {
                    return Ok(TracerCheck {
                        ok: false,
                        end: pos,
                        witness: Some(witness_at(
                            t,
                            st,
                            format!("tagged particle swaps with occupied site {partner:?}"),
                        )),
                    });
                }
                pos = partner;
            }
            MoveStep::BoundaryFlip { site } => {
                if frame.local(site) == frame.local(&pos) {
                    return Ok(TracerCheck {
                        ok: false,
                        end: pos,
                        witness: Some(witness_at(
                            t,
                            st,
                            "boundary flip lands on the tagged particle".into(),
                        )),
                    });
                }
            }
        }
    }
    Ok(TracerCheck {
        ok: true,
        end: pos,
        witness: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Direction;
    use crate::models::{bt1d, glt1d};
    use crate::moves::{Branch, Guard};

    fn s(coords: &[i64]) -> Site {
        Site(coords.to_vec())
    }

    fn e1() -> Direction {
        Direction::new(0, true)
    }

    fn tr1() -> MoveProgram {
        MoveProgram::deterministic(
            "tr1",
            1,
            (s(&[-3]), s(&[3])),
            vec![],
            DomainSpec::empty_sites(vec![s(&[1]), s(&[2])]),
            vec![
                MoveStep::exchange(s(&[2]), e1()),
                MoveStep::exchange(s(&[1]), e1()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn cluster_translation_validates_both_modes() {
        let ctx = MoveContext::bulk(bt1d(), BoundaryMode::Occupied).unwrap();
        for mode in [ValidationMode::WorstCase, ValidationMode::Exhaustive] {
            let r = validate(&tr1(), &ctx, mode, 1 << 20).unwrap();
            assert!(r.valid, "{mode:?} failed: {:?}", r.witness);
            assert_eq!(r.steps, 2);
            assert_eq!(r.loss, 0);
            assert!(!r.loss_is_bound || mode == ValidationMode::WorstCase);
            assert_eq!(r.energy_barrier, 0, "exchanges conserve vacancies");
            let sigma = r.permutation.expect("deterministic move has a permutation");
            assert_eq!(
                sigma,
                FinitePermutation::from_cycle(&[s(&[2]), s(&[3]), s(&[1])]).unwrap()
            );
        }
    }

    #[test]
    fn invalid_step_is_caught_with_witness() {
        // Exchanging (1,2) with no vacancy nearby violates the constraint.
        let p = MoveProgram::deterministic(
            "stuck",
            1,
            (s(&[-3]), s(&[3])),
            vec![],
            DomainSpec::empty_sites(vec![]),
            vec![MoveStep::exchange(s(&[1]), e1())],
        )
        .unwrap();
        let ctx = MoveContext::bulk(bt1d(), BoundaryMode::Occupied).unwrap();
        let r = validate(&p, &ctx, ValidationMode::WorstCase, 1 << 20).unwrap();
        assert!(!r.valid);
        let w = r.witness.expect("failure carries a witness");
        assert_eq!(w.time, 0);
    }

    #[test]
    fn worst_case_agrees_with_exhaustive_on_small_windows() {
        // The monotone reduction must not claim validity that exhaustive
        // enumeration refutes, nor the converse, for a valid move.
        let ctx = MoveContext::bulk(glt1d(), BoundaryMode::Occupied).unwrap();
        let p = tr1();
        let worst = validate(&p, &ctx, ValidationMode::WorstCase, 1 << 20).unwrap();
        let full = validate(&p, &ctx, ValidationMode::Exhaustive, 1 << 20).unwrap();
        assert_eq!(worst.valid, full.valid);
        assert_eq!(worst.permutation, full.permutation);
        assert_eq!(full.loss, 0);
    }

    #[test]
    fn guarded_union_loss_counts_collisions() {
        // Branch 1 (site 1 empty) exchanges sites 1 and 2; branch 2 rests.
        // Start 0,1,b,c maps to 1,0,b,c which is also the resting state of
        // start 1,0,b,c, so at the horizon two starts collide on the same
        // (configuration, no-op) pair: exactly one bit of information lost.
        let union = MoveProgram::guarded(
            "union",
            1,
            (s(&[1]), s(&[4])),
            vec![],
            DomainSpec::All,
            vec![
                Branch {
                    guard: Guard::empty_sites(vec![s(&[1])]),
                    steps: vec![MoveStep::exchange(s(&[1]), e1())],
                },
                Branch {
                    guard: Guard::trivial(),
                    steps: vec![],
                },
            ],
        )
        .unwrap();
        // Empty exterior keeps the clause left of edge (1,2) satisfied, so
        // the exchange is always allowed.
        let ctx = MoveContext::bulk(bt1d(), BoundaryMode::Empty).unwrap();
        let r = validate(&union, &ctx, ValidationMode::Exhaustive, 1 << 20).unwrap();
        assert!(r.valid);
        assert_eq!(r.checked, 16);
        assert_eq!(r.loss, 1, "merging a moved and a resting start loses one bit");
        assert!(r.permutation.is_none(), "branches disagree on the permutation");
    }

    #[test]
    fn boundary_flip_needs_reservoir_and_boundary() {
        let p = MoveProgram::deterministic(
            "flip-edge",
            1,
            (s(&[1]), s(&[4])),
            vec![],
            DomainSpec::All,
            vec![MoveStep::BoundaryFlip { site: s(&[1]) }],
        )
        .unwrap();
        let bulk = MoveContext::bulk(bt1d(), BoundaryMode::Empty).unwrap();
        let r = validate(&p, &bulk, ValidationMode::Exhaustive, 1 << 20).unwrap();
        assert!(!r.valid, "flips are illegal outside reservoir contexts");
        let res = MoveContext::reservoir(bt1d());
        let r2 = validate(&p, &res, ValidationMode::Exhaustive, 1 << 20).unwrap();
        assert!(r2.valid);
        assert_eq!(r2.energy_barrier, 1, "flipping an occupied site adds a vacancy");
        assert!(r2.permutation.is_none(), "flips have no permutation");
        // Interior flips stay illegal.
        let p_mid = MoveProgram::deterministic(
            "flip-mid",
            1,
            (s(&[1]), s(&[4])),
            vec![],
            DomainSpec::All,
            vec![MoveStep::BoundaryFlip { site: s(&[2]) }],
        )
        .unwrap();
        let r3 = validate(&p_mid, &res, ValidationMode::Exhaustive, 1 << 20).unwrap();
        assert!(!r3.valid);
    }

    #[test]
    fn budget_guard_trips() {
        let p = MoveProgram::deterministic(
            "wide",
            1,
            (s(&[-40]), s(&[40])),
            vec![],
            DomainSpec::All,
            vec![],
        )
        .unwrap();
        let ctx = MoveContext::bulk(bt1d(), BoundaryMode::Occupied).unwrap();
        let err = validate(&p, &ctx, ValidationMode::Exhaustive, 1 << 10);
        assert!(matches!(err, Err(Error::Budget(_))));
    }

    #[test]
    fn simulate_steps_wraps_on_torus() {
        let d = Domain::line(6, BoundaryMode::Periodic).unwrap();
        let c = Configuration::with_vacancies(d, &[s(&[6])]).unwrap();
        // Exchange (6, 7): site 7 wraps to 1.
        let out =
            simulate_steps(&[MoveStep::exchange(s(&[6]), e1())], &c, &Site::zero(1)).unwrap();
        assert_eq!(out.vacancy_sites(), vec![s(&[1])]);
    }
}
