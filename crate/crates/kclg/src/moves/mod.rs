//! Multistep moves: sequences of constraint-satisfying exchanges (and, in
//! reservoir contexts, boundary flips) together with their validation
//! calculus: associated permutation, information loss, energy barrier.
//!
//! A move is a [`MoveProgram`]: a window box in `Z^d`, a domain predicate,
//! and a body that yields the step list. Deterministic moves have one
//! unguarded branch; guarded unions pick the first matching branch on the
//! initial configuration; computed bodies derive the steps from the initial
//! configuration directly (used for the reservoir flip construction).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{Direction, FinitePermutation, Site};

mod flip;
mod search;
mod tracer;
mod validate;

pub use flip::flip_move;
pub use search::{
    certify, exchange_from_translation, search_translation, CertifiedMove,
    MobileClusterCertificate, SearchOutcome,
};
pub use tracer::{
    aux_cluster, aux_exchange_move, aux_exchange_union, aux_ordered_sites, hop_move,
    require_inner_cluster, sigma_move, tracer_sigma,
};
pub use validate::{
    check_final_configurations, check_tracer_steps, simulate_steps, validate, FailureWitness,
    MoveContext, MoveReport, TracerCheck, ValidationMode,
};

/// One elementary step of a multistep move.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum MoveStep {
    /// Exchange the occupancies of `site` and `site + dir`.
    Exchange { site: Site, dir: Direction },
    /// Flip one boundary site (reservoir contexts only).
    BoundaryFlip { site: Site },
}

impl MoveStep {
    pub fn exchange(site: Site, dir: Direction) -> MoveStep {
        MoveStep::Exchange { site, dir }
    }

    /// Both lattice sites this step touches.
    pub fn touched(&self, dim: usize) -> Vec<Site> {
        match self {
            MoveStep::Exchange { site, dir } => {
                vec![site.clone(), site.add(&dir.versor(dim))]
            }
            MoveStep::BoundaryFlip { site } => vec![site.clone()],
        }
    }

    pub fn translate(&self, by: &Site) -> MoveStep {
        match self {
            MoveStep::Exchange { site, dir } => MoveStep::Exchange {
                site: site.add(by),
                dir: *dir,
            },
            MoveStep::BoundaryFlip { site } => MoveStep::BoundaryFlip { site: site.add(by) },
        }
    }

    /// The transposition this step realizes; `None` for flips.
    pub fn transposition(&self, dim: usize) -> Option<FinitePermutation> {
        match self {
            MoveStep::Exchange { site, dir } => Some(
                FinitePermutation::transposition(site.clone(), site.add(&dir.versor(dim)))
                    .expect("exchange endpoints are distinct"),
            ),
            MoveStep::BoundaryFlip { .. } => None,
        }
    }

    /// A step undoes itself: exchanges and flips are involutions.
    pub fn inverse(&self) -> MoveStep {
        self.clone()
    }
}

impl fmt::Display for MoveStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MoveStep::Exchange { site, dir } => write!(f, "({site:?},{dir})"),
            MoveStep::BoundaryFlip { site } => write!(f, "flip{site:?}"),
        }
    }
}

/// Occupancy pattern over finitely many sites; sites not listed are free.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Guard {
    pub empty: Vec<Site>,
    pub occupied: Vec<Site>,
}

impl Guard {
    pub fn trivial() -> Guard {
        Guard::default()
    }

    pub fn empty_sites(sites: Vec<Site>) -> Guard {
        Guard {
            empty: sites,
            occupied: Vec::new(),
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.empty.is_empty() && self.occupied.is_empty()
    }

    pub fn well_formed(&self) -> Result<()> {
        for s in &self.empty {
            if self.occupied.contains(s) {
                return Err(Error::Construction(format!(
                    "guard requires {s:?} both empty and occupied"
                )));
            }
        }
        Ok(())
    }

    /// Evaluates the pattern against absolute-coordinate reads.
    pub fn matches(&self, read: &impl Fn(&Site) -> bool) -> bool {
        self.empty.iter().all(|s| !read(s)) && self.occupied.iter().all(|s| read(s))
    }

    pub fn sites(&self) -> impl Iterator<Item = &Site> {
        self.empty.iter().chain(self.occupied.iter())
    }

    pub fn translate(&self, by: &Site) -> Guard {
        Guard {
            empty: self.empty.iter().map(|s| s.add(by)).collect(),
            occupied: self.occupied.iter().map(|s| s.add(by)).collect(),
        }
    }
}

/// The domain of a move: which initial configurations it may be applied to.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum DomainSpec {
    /// Every configuration on the window.
    All,
    /// The listed pattern holds; all other sites are unconstrained.
    Pattern(Guard),
    /// Exactly the configurations matched by some branch guard. Used by
    /// moves assembled from case-specific step lists whose applicability
    /// is the union of the cases; membership is decided by the branches,
    /// so `contains` is permissive here.
    AnyBranch,
}

impl DomainSpec {
    pub fn empty_sites(sites: Vec<Site>) -> DomainSpec {
        DomainSpec::Pattern(Guard::empty_sites(sites))
    }

    pub fn contains(&self, read: &impl Fn(&Site) -> bool) -> bool {
        match self {
            DomainSpec::All => true,
            DomainSpec::Pattern(g) => g.matches(read),
            DomainSpec::AnyBranch => true,
        }
    }

    pub fn translate(&self, by: &Site) -> DomainSpec {
        match self {
            DomainSpec::All => DomainSpec::All,
            DomainSpec::Pattern(g) => DomainSpec::Pattern(g.translate(by)),
            DomainSpec::AnyBranch => DomainSpec::AnyBranch,
        }
    }

    pub fn sites(&self) -> Vec<Site> {
        match self {
            DomainSpec::All => Vec::new(),
            DomainSpec::Pattern(g) => g.sites().cloned().collect(),
            DomainSpec::AnyBranch => Vec::new(),
        }
    }
}

/// One guarded alternative of a move body.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Branch {
    pub guard: Guard,
    pub steps: Vec<MoveStep>,
}

/// Reads the initial configuration at absolute coordinates; computed move
/// bodies derive their step list through this view.
pub struct InitialView<'a> {
    read: &'a dyn Fn(&Site) -> bool,
}

impl<'a> InitialView<'a> {
    pub fn new(read: &'a dyn Fn(&Site) -> bool) -> Self {
        InitialView { read }
    }

    pub fn occupied(&self, site: &Site) -> bool {
        (self.read)(site)
    }
}

type ComputedSteps = Arc<dyn Fn(&InitialView) -> Result<Vec<MoveStep>> + Send + Sync>;

/// How a move produces its step list.
#[derive(Clone)]
pub enum MoveBody {
    /// First matching guard wins; exactly one must match on the domain.
    Branches(Vec<Branch>),
    /// Steps computed from the initial configuration.
    Computed {
        steps: ComputedSteps,
        /// Upper bound on the step count, for reporting.
        max_steps: usize,
    },
}

impl fmt::Debug for MoveBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MoveBody::Branches(b) => write!(f, "Branches({})", b.len()),
            MoveBody::Computed { max_steps, .. } => write!(f, "Computed(<= {max_steps} steps)"),
        }
    }
}

/// A multistep move: window, domain, and body.
#[derive(Clone, Debug)]
pub struct MoveProgram {
    pub name: String,
    dim: usize,
    window_lo: Site,
    window_hi: Site,
    extras: Vec<Site>,
    pub domain: DomainSpec,
    pub body: MoveBody,
}

impl MoveProgram {
    /// Deterministic move: a single unguarded step list on the given window.
    /// Every step site must lie in the window box or among `extras`.
    pub fn deterministic(
        name: impl Into<String>,
        dim: usize,
        window: (Site, Site),
        extras: Vec<Site>,
        domain: DomainSpec,
        steps: Vec<MoveStep>,
    ) -> Result<Self> {
        MoveProgram::guarded(
            name,
            dim,
            window,
            extras,
            domain,
            vec![Branch {
                guard: Guard::trivial(),
                steps,
            }],
        )
    }

    pub fn guarded(
        name: impl Into<String>,
        dim: usize,
        window: (Site, Site),
        extras: Vec<Site>,
        domain: DomainSpec,
        branches: Vec<Branch>,
    ) -> Result<Self> {
        let p = MoveProgram {
            name: name.into(),
            dim,
            window_lo: window.0,
            window_hi: window.1,
            extras,
            domain,
            body: MoveBody::Branches(branches),
        };
        p.check_frame()?;
        Ok(p)
    }

    pub fn computed(
        name: impl Into<String>,
        dim: usize,
        window: (Site, Site),
        extras: Vec<Site>,
        domain: DomainSpec,
        steps: ComputedSteps,
        max_steps: usize,
    ) -> Result<Self> {
        let p = MoveProgram {
            name: name.into(),
            dim,
            window_lo: window.0,
            window_hi: window.1,
            extras,
            domain,
            body: MoveBody::Computed { steps, max_steps },
        };
        p.check_frame()?;
        Ok(p)
    }

    fn check_frame(&self) -> Result<()> {
        if self.window_lo.dim() != self.dim || self.window_hi.dim() != self.dim {
            return Err(Error::Construction("window box has wrong dimension".into()));
        }
        for axis in 0..self.dim {
            if self.window_lo.coord(axis) > self.window_hi.coord(axis) {
                return Err(Error::Construction(format!(
                    "window box empty along axis {axis}"
                )));
            }
        }
        let inside = |s: &Site| self.in_window(s) || self.extras.contains(s);
        if let MoveBody::Branches(branches) = &self.body {
            for b in branches {
                b.guard.well_formed()?;
                for st in &b.steps {
                    for s in st.touched(self.dim) {
                        if !inside(&s) {
                            return Err(Error::Construction(format!(
                                "step site {s:?} escapes the declared window"
                            )));
                        }
                    }
                }
            }
        }
        for s in self.domain.sites() {
            if !inside(&s) {
                return Err(Error::Construction(format!(
                    "domain site {s:?} escapes the declared window"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> (&Site, &Site) {
        (&self.window_lo, &self.window_hi)
    }

    pub fn extras(&self) -> &[Site] {
        &self.extras
    }

    pub fn in_window(&self, s: &Site) -> bool {
        (0..self.dim).all(|a| {
            s.coord(a) >= self.window_lo.coord(a) && s.coord(a) <= self.window_hi.coord(a)
        })
    }

    /// Bounding box of the window, the extras, and the domain pattern: the
    /// region a validator must materialize.
    pub fn frame_box(&self) -> (Site, Site) {
        let mut lo = self.window_lo.clone();
        let mut hi = self.window_hi.clone();
        for s in self.extras.iter().chain(self.domain.sites().iter()) {
            for a in 0..self.dim {
                lo.0[a] = lo.0[a].min(s.coord(a));
                hi.0[a] = hi.0[a].max(s.coord(a));
            }
        }
        (lo, hi)
    }

    /// True when the body is a single unguarded branch: the step list does
    /// not depend on the configuration.
    pub fn is_deterministic(&self) -> bool {
        matches!(&self.body, MoveBody::Branches(b)
            if b.len() == 1 && b[0].guard.is_trivial())
    }

    /// The fixed step list of a deterministic move.
    pub fn fixed_steps(&self) -> Result<&[MoveStep]> {
        match &self.body {
            MoveBody::Branches(b) if b.len() == 1 && b[0].guard.is_trivial() => Ok(&b[0].steps),
            _ => Err(Error::Argument(format!(
                "move '{}' is not deterministic",
                self.name
            ))),
        }
    }

    /// Step list for one initial configuration (first matching branch).
    pub fn steps_for(&self, read: &impl Fn(&Site) -> bool) -> Result<Vec<MoveStep>> {
        match &self.body {
            MoveBody::Branches(branches) => branches
                .iter()
                .find(|b| b.guard.matches(read))
                .map(|b| b.steps.clone())
                .ok_or_else(|| {
                    Error::Validation(format!("no branch of '{}' matches", self.name))
                }),
            MoveBody::Computed { steps, .. } => steps(&InitialView::new(read)),
        }
    }

    /// Upper bound on the number of steps over all configurations.
    pub fn max_steps(&self) -> usize {
        match &self.body {
            MoveBody::Branches(b) => b.iter().map(|br| br.steps.len()).max().unwrap_or(0),
            MoveBody::Computed { max_steps, .. } => *max_steps,
        }
    }

    /// Associated permutation of a deterministic move: the product of the
    /// step transpositions, first step applied first.
    pub fn permutation(&self) -> Result<FinitePermutation> {
        let steps = self.fixed_steps()?;
        permutation_of_steps(steps, self.dim)
    }

    /// Shifts the whole program by `by`.
    pub fn translate(&self, by: &Site) -> MoveProgram {
        let body = match &self.body {
            MoveBody::Branches(branches) => MoveBody::Branches(
                branches
                    .iter()
                    .map(|b| Branch {
                        guard: b.guard.translate(by),
                        steps: b.steps.iter().map(|s| s.translate(by)).collect(),
                    })
                    .collect(),
            ),
            MoveBody::Computed { steps, max_steps } => {
                let inner = steps.clone();
                let shift = by.clone();
                MoveBody::Computed {
                    steps: Arc::new(move |view: &InitialView| {
                        // The inner closure thinks in untranslated coordinates:
                        // shift its reads forward and its steps back out.
                        let read = |s: &Site| view.occupied(&s.add(&shift));
                        Ok(inner(&InitialView::new(&read))?
                            .into_iter()
                            .map(|st| st.translate(&shift))
                            .collect())
                    }),
                    max_steps: *max_steps,
                }
            }
        };
        MoveProgram {
            name: self.name.clone(),
            dim: self.dim,
            window_lo: self.window_lo.add(by),
            window_hi: self.window_hi.add(by),
            extras: self.extras.iter().map(|s| s.add(by)).collect(),
            domain: self.domain.translate(by),
            body,
        }
    }

    /// Concatenation `then . self`: run this move, then `then`. The domain is
    /// this move's domain; the caller must ensure (via validation) that every
    /// final configuration lies in the domain of `then`.
    pub fn compose(&self, then: &MoveProgram) -> Result<MoveProgram> {
        if self.dim != then.dim {
            return Err(Error::Argument("composing moves of different dimension".into()));
        }
        let (lo1, hi1) = self.frame_box();
        let (lo2, hi2) = then.frame_box();
        let lo = Site(
            (0..self.dim)
                .map(|a| lo1.coord(a).min(lo2.coord(a)))
                .collect(),
        );
        let hi = Site(
            (0..self.dim)
                .map(|a| hi1.coord(a).max(hi2.coord(a)))
                .collect(),
        );
        let mut extras: Vec<Site> = self.extras.clone();
        for e in &then.extras {
            if !extras.contains(e) {
                extras.push(e.clone());
            }
        }
        let name = format!("{};{}", self.name, then.name);
        if self.is_deterministic() && then.is_deterministic() {
            let mut steps = self.fixed_steps()?.to_vec();
            steps.extend(then.fixed_steps()?.iter().cloned());
            return MoveProgram::deterministic(
                name,
                self.dim,
                (lo, hi),
                extras,
                self.domain.clone(),
                steps,
            );
        }
        // General composition: evaluate the first program's steps on the
        // initial configuration, then the second's on the intermediate one.
        let first = self.clone();
        let second = then.clone();
        let dim = self.dim;
        let max_steps = self.max_steps() + then.max_steps();
        MoveProgram::computed(
            name,
            dim,
            (lo, hi),
            extras,
            self.domain.clone(),
            Arc::new(move |view: &InitialView| {
                let read0 = |s: &Site| view.occupied(s);
                let mut steps = first.steps_for(&read0)?;
                // Replay the first stage on the touched sites to know the
                // intermediate configuration the second stage sees.
                let mut delta: std::collections::HashMap<Site, bool> =
                    std::collections::HashMap::new();
                for st in &steps {
                    match st {
                        MoveStep::Exchange { site, dir } => {
                            let other = site.add(&dir.versor(dim));
                            let a = *delta.get(site).unwrap_or(&view.occupied(site));
                            let b = *delta.get(&other).unwrap_or(&view.occupied(&other));
                            delta.insert(site.clone(), b);
                            delta.insert(other, a);
                        }
                        MoveStep::BoundaryFlip { site } => {
                            let v = *delta.get(site).unwrap_or(&view.occupied(site));
                            delta.insert(site.clone(), !v);
                        }
                    }
                }
                let read1 =
                    |s: &Site| delta.get(s).copied().unwrap_or_else(|| view.occupied(s));
                steps.extend(second.steps_for(&read1)?);
                Ok(steps)
            }),
            max_steps,
        )
    }

    /// Inverse of a deterministic move: reversed steps, domain transported
    /// forward by the associated permutation.
    pub fn inverse(&self) -> Result<MoveProgram> {
        let steps = self.fixed_steps()?.to_vec();
        let sigma = permutation_of_steps(&steps, self.dim)?;
        let domain = match &self.domain {
            DomainSpec::All => DomainSpec::All,
            DomainSpec::Pattern(g) => DomainSpec::Pattern(Guard {
                empty: g.empty.iter().map(|s| sigma.image(s)).collect(),
                occupied: g.occupied.iter().map(|s| sigma.image(s)).collect(),
            }),
            // unreachable: fixed_steps above rejects multi-branch bodies
            DomainSpec::AnyBranch => DomainSpec::AnyBranch,
        };
        let reversed: Vec<MoveStep> = steps.into_iter().rev().map(|s| s.inverse()).collect();
        MoveProgram::deterministic(
            format!("{}^-1", self.name),
            self.dim,
            (self.window_lo.clone(), self.window_hi.clone()),
            self.extras.clone(),
            domain,
            reversed,
        )
    }
}

/// Product of the step transpositions, first step innermost (applied first).
pub fn permutation_of_steps(steps: &[MoveStep], dim: usize) -> Result<FinitePermutation> {
    let mut sigma = FinitePermutation::identity();
    for st in steps {
        let t = st.transposition(dim).ok_or_else(|| {
            Error::Argument("boundary flips have no associated permutation".into())
        })?;
        sigma = t.compose(&sigma);
    }
    Ok(sigma)
}
