//! Tagged-particle machinery.
//!
//! A tagged particle ("tracer") at `z` rides on top of an exchange dynamics.
//! Every transition is a site permutation `sigma` applied in the frame of the
//! tracer: the configuration becomes `tau_z sigma tau_{-z} eta`, the tracer
//! moves to `z + sigma(0)`, and the rate is a function of the frame view
//! `tau_{-z} eta` alone. Two generator families are built here: the
//! nearest-neighbor exchange family of a constraint model (with the swaps
//! through the tracer gated on the partner site being empty, so the tag never
//! trades places with a particle), and the auxiliary family in which the
//! tracer glides together with an escort cluster of vacancies.
//!
//! The self-diffusion coefficient restricted to a finite window is the
//! minimum of
//!
//! ```text
//!   (1/2) sum_sigma  E0[ c_sigma(zeta) (u.sigma(0) + f(zeta') - f(zeta))^2 ]
//! ```
//!
//! over functions `f` of the window, where `zeta' = tau_{-sigma(0)} sigma zeta`
//! and `E0` integrates the product measure conditioned on an occupied origin.
//! The assembly enumerates, per generator, exactly the sites the rate and the
//! two `f` evaluations read, so the truncation to a finite generator list is
//! exact: a swap that neither moves the origin nor touches the window
//! contributes zero.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lattice::{BoundaryMode, Configuration, Direction, FinitePermutation, Site};
use crate::models::{ConstraintModel, RateMode};
use crate::moves::{
    aux_cluster, permutation_of_steps, sigma_move, tracer_sigma, MobileClusterCertificate,
    MoveBody,
};
use crate::transport::{Estimator, LocalFunctionSpace, VariationalProblem};

/// A configuration together with the tracked particle's position.
///
/// The tracer coordinate is an absolute `Z^d` site and is allowed to leave
/// the box of a periodic configuration; reads wrap, so the unwrapped value
/// doubles as the net displacement.
#[derive(Clone, Debug, PartialEq)]
pub struct TracerState {
    config: Configuration,
    tracer: Site,
}

impl TracerState {
    pub fn new(config: Configuration, tracer: Site) -> Result<TracerState> {
        if tracer.dim() != config.domain().dim() {
            return Err(Error::Argument(format!(
                "tracer site has dimension {}, configuration has {}",
                tracer.dim(),
                config.domain().dim()
            )));
        }
        if !config.occupied(&tracer) {
            return Err(Error::Argument(format!(
                "tracer site {tracer:?} is not occupied"
            )));
        }
        Ok(TracerState { config, tracer })
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn tracer(&self) -> &Site {
        &self.tracer
    }
}

/// How a generator's rate reads the frame configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum RateRule {
    /// Constraint-model rate of the edge `(base, base + e_axis)`, optionally
    /// gated on one endpoint being empty. The gate implements "the tag never
    /// swaps with a particle" for pairs through the origin.
    Edge {
        base: Site,
        axis: usize,
        require_empty: Option<Site>,
    },
    /// Indicator that every listed site reads empty. The empty list is the
    /// constant rate 1.
    EmptyPattern(Vec<Site>),
}

impl RateRule {
    /// Frame sites the rate reads.
    fn sites(&self, model: Option<&ConstraintModel>) -> Vec<Site> {
        match self {
            RateRule::Edge {
                base,
                axis,
                require_empty,
            } => {
                let mut out: Vec<Site> = Vec::new();
                if let Some(m) = model {
                    for cl in m.clauses(*axis) {
                        out.extend(cl.offsets.iter().map(|o| base.add(o)));
                    }
                }
                if let Some(site) = require_empty {
                    out.push(site.clone());
                }
                out
            }
            RateRule::EmptyPattern(p) => p.clone(),
        }
    }

    /// The rule seen after the move: a partner rule `r'` with
    /// `r'(zeta') = r(zeta)` whenever `zeta' = tau_{-v} sigma zeta`.
    /// Sites transport as `s -> sigma(s) - v`.
    fn transported(&self, sigma: &FinitePermutation, v: &Site) -> Result<RateRule> {
        match self {
            RateRule::Edge {
                base,
                axis,
                require_empty,
            } => {
                let dim = base.dim();
                let x = sigma.image(base).sub(v);
                let y = sigma.image(&base.add(&Site::unit(*axis, dim))).sub(v);
                let step = y.sub(&x);
                let unit = Site::unit(*axis, dim);
                let new_base = if step == unit {
                    x.clone()
                } else if step == Site::zero(dim).sub(&unit) {
                    y.clone()
                } else {
                    return Err(Error::Construction(format!(
                        "edge rule at {base:?} does not map to an axis-{axis} edge under its permutation"
                    )));
                };
                Ok(RateRule::Edge {
                    base: new_base,
                    axis: *axis,
                    require_empty: require_empty.as_ref().map(|s| sigma.image(s).sub(v)),
                })
            }
            RateRule::EmptyPattern(p) => {
                let mut moved: Vec<Site> = p.iter().map(|s| sigma.image(s).sub(v)).collect();
                moved.sort();
                Ok(RateRule::EmptyPattern(moved))
            }
        }
    }
}

/// One frame transition: apply `sigma`, move the tracer by `sigma(0)`.
#[derive(Clone, Debug)]
pub struct TracerGenerator {
    sigma: FinitePermutation,
    displacement: Site,
    rule: RateRule,
}

impl TracerGenerator {
    pub fn permutation(&self) -> &FinitePermutation {
        &self.sigma
    }

    /// `sigma(0)`, the tracer jump.
    pub fn displacement(&self) -> &Site {
        &self.displacement
    }

    pub fn rule(&self) -> &RateRule {
        &self.rule
    }
}

/// A finite family of frame permutations with rates, closed under reversal.
#[derive(Clone, Debug)]
pub struct PermutationDynamics {
    dim: usize,
    id: String,
    model: Option<ConstraintModel>,
    generators: Vec<TracerGenerator>,
}

impl PermutationDynamics {
    /// Validates dimensions, rejects degenerate generators, and checks the
    /// family is closed under reversal: for each generator with permutation
    /// `sigma` and jump `v`, the conjugate `tau_{-v} sigma^{-1} tau_v` must be
    /// present, carrying the original rule transported through the move.
    /// That pairing is what makes the environment chain reversible.
    pub fn new(
        dim: usize,
        id: impl Into<String>,
        model: Option<ConstraintModel>,
        parts: Vec<(FinitePermutation, RateRule)>,
    ) -> Result<PermutationDynamics> {
        if dim == 0 {
            return Err(Error::Argument("dimension must be at least 1".into()));
        }
        if parts.is_empty() {
            return Err(Error::Construction("no generators given".into()));
        }
        if let Some(m) = &model {
            if m.dim() != dim {
                return Err(Error::Argument(format!(
                    "model dimension {} does not match dynamics dimension {dim}",
                    m.dim()
                )));
            }
        }
        let zero = Site::zero(dim);
        let mut generators = Vec::with_capacity(parts.len());
        for (sigma, rule) in parts {
            if sigma.is_identity() {
                return Err(Error::Construction(
                    "identity permutation is not a transition".into(),
                ));
            }
            if sigma.support().any(|s| s.dim() != dim) {
                return Err(Error::Argument(
                    "permutation support has the wrong dimension".into(),
                ));
            }
            let rule = match rule {
                RateRule::Edge {
                    base,
                    axis,
                    require_empty,
                } => {
                    if model.is_none() {
                        return Err(Error::Construction(
                            "edge rate rule needs a constraint model".into(),
                        ));
                    }
                    if axis >= dim || base.dim() != dim {
                        return Err(Error::Argument(format!(
                            "edge rule at {base:?} along axis {axis} does not fit dimension {dim}"
                        )));
                    }
                    if let Some(s) = &require_empty {
                        if s.dim() != dim {
                            return Err(Error::Argument(
                                "emptiness gate has the wrong dimension".into(),
                            ));
                        }
                    }
                    RateRule::Edge {
                        base,
                        axis,
                        require_empty,
                    }
                }
                RateRule::EmptyPattern(p) => {
                    if p.iter().any(|s| s.dim() != dim) {
                        return Err(Error::Argument(
                            "empty-pattern site has the wrong dimension".into(),
                        ));
                    }
                    if p.contains(&zero) {
                        return Err(Error::Construction(
                            "empty-pattern rule reads the origin, which is pinned occupied".into(),
                        ));
                    }
                    let mut p = p;
                    p.sort();
                    p.dedup();
                    RateRule::EmptyPattern(p)
                }
            };
            let displacement = sigma.image(&zero);
            generators.push(TracerGenerator {
                sigma,
                displacement,
                rule,
            });
        }
        for i in 0..generators.len() {
            for j in i + 1..generators.len() {
                if generators[i].sigma == generators[j].sigma
                    && generators[i].rule == generators[j].rule
                {
                    return Err(Error::Construction(
                        "duplicate generator would silently double its rate".into(),
                    ));
                }
            }
        }
        for g in &generators {
            let partner_sigma = reversed_permutation(&g.sigma);
            let partner_rule = g.rule.transported(&g.sigma, &g.displacement)?;
            debug_assert_eq!(
                partner_sigma.image(&zero),
                zero.sub(&g.displacement),
                "reversal must jump back"
            );
            let found = generators
                .iter()
                .any(|h| h.sigma == partner_sigma && h.rule == partner_rule);
            if !found {
                return Err(Error::Construction(format!(
                    "no reversal partner for the generator jumping {:?}: expected permutation {:?} with rule {:?}",
                    g.displacement, partner_sigma, partner_rule
                )));
            }
        }
        Ok(PermutationDynamics {
            dim,
            id: id.into(),
            model,
            generators,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn model(&self) -> Option<&ConstraintModel> {
        self.model.as_ref()
    }

    pub fn generators(&self) -> &[TracerGenerator] {
        &self.generators
    }

    /// Frame sites generator `g`'s rate reads.
    pub fn rate_sites(&self, g: &TracerGenerator) -> Vec<Site> {
        g.rule.sites(self.model.as_ref())
    }

    /// Rate of `g` read directly off the lab configuration with the tracer at
    /// `z`: every frame site `s` becomes the lab site `s + z`.
    pub fn lab_rate(&self, g: &TracerGenerator, config: &Configuration, z: &Site) -> f64 {
        debug_assert_eq!(z.dim(), self.dim, "tracer dimension mismatch");
        match &g.rule {
            RateRule::Edge {
                base,
                axis,
                require_empty,
            } => {
                if let Some(site) = require_empty {
                    if config.occupied(&site.add(z)) {
                        return 0.0;
                    }
                }
                let m = self.model.as_ref().expect("edge rules carry a model");
                m.edge_rate_at(config, &base.add(z), *axis)
            }
            RateRule::EmptyPattern(p) => {
                if p.iter().all(|s| !config.occupied(&s.add(z))) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Rate of `g` on a frame configuration (tracer pinned at the origin).
    pub fn frame_rate(&self, g: &TracerGenerator, zeta: &Configuration) -> f64 {
        self.lab_rate(g, zeta, &Site::zero(self.dim))
    }

    /// Fire `g` from a lab state: the environment is rearranged by the
    /// permutation translated to the tracer, and the tag moves with it.
    pub fn apply(&self, g: &TracerGenerator, s: &TracerState) -> Result<TracerState> {
        let moved = translate_permutation(&g.sigma, &s.tracer);
        let config = s.config.apply_permutation(&moved)?;
        let tracer = s.tracer.add(&g.displacement);
        debug_assert!(config.occupied(&tracer), "the tag landed on a vacancy");
        TracerState::new(config, tracer)
    }

    /// One step of the environment chain `zeta -> tau_{-sigma(0)} sigma zeta`.
    pub fn environment_step(&self, g: &TracerGenerator, zeta: &Configuration) -> Result<Configuration> {
        let swapped = zeta.apply_permutation(&g.sigma)?;
        tracer_frame(&swapped, &g.displacement)
    }
}

/// The configuration as seen from `z`: `frame(y) = config(y + z)`.
///
/// A nonzero shift needs a torus; on an open or reservoir box the shifted
/// window would read past the boundary.
pub fn tracer_frame(config: &Configuration, z: &Site) -> Result<Configuration> {
    if z.dim() != config.domain().dim() {
        return Err(Error::Argument(format!(
            "shift {z:?} does not match the domain dimension {}",
            config.domain().dim()
        )));
    }
    if z == &Site::zero(z.dim()) {
        return Ok(config.clone());
    }
    if config.domain().boundary() != BoundaryMode::Periodic {
        return Err(Error::Argument(
            "frame shifts are only defined on a torus".into(),
        ));
    }
    let domain = config.domain().clone();
    let bits: Vec<bool> = (0..domain.volume())
        .map(|idx| config.occupied(&domain.site(idx).add(z)))
        .collect();
    Configuration::from_bits(domain, &bits)
}

/// `sigma` conjugated by the translation taking the origin to `by`:
/// maps `by + s` to `by + sigma(s)`.
pub fn translate_permutation(sigma: &FinitePermutation, by: &Site) -> FinitePermutation {
    let pairs: Vec<(Site, Site)> = sigma
        .pairs()
        .map(|(k, v)| (k.add(by), v.add(by)))
        .collect();
    FinitePermutation::from_pairs(&pairs).expect("translating a permutation keeps it bijective")
}

/// The reversal partner `tau_{-sigma(0)} sigma^{-1} tau_{sigma(0)}`, i.e. the
/// transition undoing `sigma` as seen from the tracer's new position.
pub fn reversed_permutation(sigma: &FinitePermutation) -> FinitePermutation {
    let dim = match sigma.support().next() {
        Some(s) => s.dim(),
        None => return FinitePermutation::identity(),
    };
    let v = sigma.image(&Site::zero(dim));
    let pairs: Vec<(Site, Site)> = sigma
        .inverse()
        .pairs()
        .map(|(k, val)| (k.sub(&v), val.sub(&v)))
        .collect();
    FinitePermutation::from_pairs(&pairs).expect("conjugating a permutation keeps it bijective")
}

/// Nearest-neighbor exchange dynamics of a constraint model as seen from the
/// tag, truncated to the pairs meeting `reach` or the origin.
///
/// Pairs through the origin are gated on the non-origin endpoint being empty;
/// all other pairs keep the bare edge rate. The truncation is exact for any
/// window inside `reach`: an omitted pair fixes the origin and every site a
/// window function reads, so its variational term vanishes identically.
pub fn kc_tracer_dynamics(m: &ConstraintModel, reach: &[Site]) -> Result<PermutationDynamics> {
    let dim = m.dim();
    if reach.iter().any(|s| s.dim() != dim) {
        return Err(Error::Argument(
            "reach site dimension does not match the model".into(),
        ));
    }
    let zero = Site::zero(dim);
    let mut bases: BTreeSet<(Site, usize)> = BTreeSet::new();
    for s in std::iter::once(&zero).chain(reach.iter()) {
        for axis in 0..dim {
            let unit = Site::unit(axis, dim);
            bases.insert((s.clone(), axis));
            bases.insert((s.sub(&unit), axis));
        }
    }
    let mut parts = Vec::with_capacity(bases.len());
    for (base, axis) in bases {
        let x = base.clone();
        let y = base.add(&Site::unit(axis, dim));
        let require_empty = if x == zero {
            Some(y.clone())
        } else if y == zero {
            Some(x.clone())
        } else {
            None
        };
        let sigma = FinitePermutation::transposition(x.clone(), y)?;
        parts.push((
            sigma,
            RateRule::Edge {
                base: x,
                axis,
                require_empty,
            },
        ));
    }
    PermutationDynamics::new(dim, format!("kc:{}", m.name()), Some(m.clone()), parts)
}

/// The auxiliary tagged dynamics of a certified mobile cluster: the tag and
/// its escort vacancy cluster glide one lattice step per firing, at rate 1
/// whenever the escort cluster is empty and 0 otherwise.
///
/// In two or more dimensions the forward permutations are the ones realized
/// by the certified multistep moves; in one dimension (where no transverse
/// ring exists) the canonical run-push permutation is used instead. Backward
/// permutations are the reversal conjugates, so the family is closed.
pub fn aux_tracer_dynamics(cert: &MobileClusterCertificate) -> Result<PermutationDynamics> {
    let dim = cert.dim();
    let pattern = aux_cluster(cert);
    let mut parts = Vec::with_capacity(2 * dim);
    for axis in 0..dim {
        let sigma = if dim == 1 {
            tracer_sigma(&pattern, Direction::new(0, true), 1)?
        } else {
            let program = sigma_move(cert, axis)?;
            match &program.body {
                MoveBody::Branches(branches) => {
                    permutation_of_steps(&branches[0].steps, dim)?
                }
                MoveBody::Computed { .. } => {
                    return Err(Error::Construction(
                        "glide moves are expected to be assembled as explicit steps".into(),
                    ))
                }
            }
        };
        let back = reversed_permutation(&sigma);
        parts.push((sigma, RateRule::EmptyPattern(pattern.clone())));
        parts.push((back, RateRule::EmptyPattern(pattern.clone())));
    }
    PermutationDynamics::new(
        dim,
        format!("aux-tracer:{}", cert.model_name),
        None,
        parts,
    )
}

/// Closed-form tagged-particle coefficient of the escort-cluster walk,
/// `(1/2) q^cluster_size |u|^2`.
pub fn aux_self_diffusion_closed_form(q: f64, cluster_size: usize, u: &[f64]) -> f64 {
    0.5 * q.powi(cluster_size as i32) * u.iter().map(|x| x * x).sum::<f64>()
}

/// Precomputed rate evaluation over a bitmask of the generator's read set.
enum RuleMasks {
    Pattern(u64),
    Edge {
        clauses: Vec<(f64, u64)>,
        mode: RateMode,
        gate: u64,
    },
}

impl RuleMasks {
    fn rate(&self, occ: u64) -> f64 {
        match self {
            RuleMasks::Pattern(mask) => {
                if occ & mask == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            RuleMasks::Edge {
                clauses,
                mode,
                gate,
            } => {
                if occ & gate != 0 {
                    return 0.0;
                }
                match mode {
                    RateMode::IndicatorAny => {
                        if clauses.iter().any(|(_, m)| occ & m == 0) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    RateMode::WeightedCount => clauses
                        .iter()
                        .filter(|(_, m)| occ & m == 0)
                        .map(|(w, _)| w)
                        .sum(),
                }
            }
        }
    }
}

/// Assembles the tagged-particle variational form over a window.
///
/// The window must not contain the origin: the conditioned measure pins the
/// origin occupied, so its monomial is identically 1 and would only add a
/// redundant basis direction. Each generator is integrated exactly by
/// enumerating its own read set (rate sites, the window, and the window's
/// preimage under the move), with the origin held occupied; `budget` caps
/// both the basis size and each generator's `2^(sites-1)` enumeration.
pub fn self_diffusion_qp(
    dynamics: &PermutationDynamics,
    u: &[f64],
    window: &[Site],
    q: f64,
    budget: u64,
) -> Result<VariationalProblem> {
    let dim = dynamics.dim();
    if u.len() != dim {
        return Err(Error::Argument(format!(
            "direction has {} entries for dimension {dim}",
            u.len()
        )));
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("direction entries must be finite".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Argument(format!(
            "vacancy probability must lie strictly between 0 and 1, got {q}"
        )));
    }
    let zero = Site::zero(dim);
    let space = LocalFunctionSpace::new(dim, window)?;
    if space.sites().contains(&zero) {
        return Err(Error::Argument(
            "window must not contain the origin; it is pinned occupied".into(),
        ));
    }
    let nb = space.basis_len();
    if nb as u64 > budget {
        return Err(Error::Budget(format!(
            "basis of {nb} coefficients exceeds the budget of {budget}"
        )));
    }

    let mut a = DMatrix::<f64>::zeros(nb, nb);
    let mut b = DVector::<f64>::zeros(nb);
    let mut c0 = 0.0f64;

    for g in dynamics.generators() {
        let v = g.displacement();
        let uv: f64 = u
            .iter()
            .enumerate()
            .map(|(axis, ua)| ua * v.coord(axis) as f64)
            .sum();

        let mut site_set: BTreeSet<Site> = BTreeSet::new();
        site_set.insert(zero.clone());
        site_set.extend(dynamics.rate_sites(g));
        for w in space.sites() {
            site_set.insert(w.clone());
            site_set.insert(g.permutation().preimage(&w.add(v)));
        }
        let sites: Vec<Site> = site_set.into_iter().collect();
        let n = sites.len();
        if n > 63 || (1u64 << (n - 1)) > budget {
            return Err(Error::Budget(format!(
                "generator read set of {n} sites needs 2^{} configurations, budget is {budget}",
                n - 1
            )));
        }
        let bit = |s: &Site| -> u64 {
            let idx = sites.binary_search(s).expect("read-set site present");
            1u64 << idx
        };
        let origin_bit = bit(&zero);
        let origin_idx = origin_bit.trailing_zeros() as u64;

        let masks = match &g.rule {
            RateRule::EmptyPattern(p) => {
                RuleMasks::Pattern(p.iter().map(&bit).fold(0, |acc, m| acc | m))
            }
            RateRule::Edge {
                base,
                axis,
                require_empty,
            } => {
                let m = dynamics.model().expect("edge rules carry a model");
                RuleMasks::Edge {
                    clauses: m
                        .clauses(*axis)
                        .iter()
                        .map(|cl| {
                            let mask = cl
                                .offsets
                                .iter()
                                .map(|o| bit(&base.add(o)))
                                .fold(0, |acc, mm| acc | mm);
                            (cl.weight, mask)
                        })
                        .collect(),
                    mode: m.rate_mode(),
                    gate: require_empty.as_ref().map(&bit).unwrap_or(0),
                }
            }
        };

        // Basis monomials that actually change under the move. The preimage
        // sites are distinct because the permutation is injective, so the
        // mapped mask has the same popcount as the original.
        let mut live: Vec<(usize, u64, u64)> = Vec::new();
        for bm in 1..nb {
            let ws = space.basis_sites(bm);
            let orig = ws.iter().map(&bit).fold(0u64, |acc, m| acc | m);
            let mapped = ws
                .iter()
                .map(|w| bit(&g.permutation().preimage(&w.add(v))))
                .fold(0u64, |acc, m| acc | m);
            if orig != mapped {
                live.push((bm, orig, mapped));
            }
        }

        // Weight of a configuration with k occupied non-origin sites.
        let occ_weight: Vec<f64> = (0..n)
            .map(|k| (1.0 - q).powi(k as i32) * q.powi((n - 1 - k) as i32))
            .collect();

        let low_mask = (1u64 << origin_idx) - 1;
        let mut deltas: Vec<(usize, f64)> = Vec::with_capacity(live.len());
        for m in 0..(1u64 << (n - 1)) {
            let occ = (m & low_mask) | origin_bit | ((m & !low_mask) << 1);
            let rate = masks.rate(occ);
            if rate == 0.0 {
                continue;
            }
            let k = occ.count_ones() as usize - 1;
            let wgt = occ_weight[k] * rate;
            c0 += wgt * uv * uv;
            deltas.clear();
            for &(bm, orig, mapped) in &live {
                let d = (occ & mapped == mapped) as i8 - (occ & orig == orig) as i8;
                if d != 0 {
                    deltas.push((bm, d as f64));
                }
            }
            for (i, &(bi, di)) in deltas.iter().enumerate() {
                b[bi] += wgt * uv * di;
                for &(bj, dj) in &deltas[i..] {
                    a[(bi, bj)] += wgt * di * dj;
                }
            }
        }
    }

    a *= 0.5;
    b *= 0.5;
    c0 *= 0.5;
    for i in 0..nb {
        for j in i + 1..nb {
            let upper = a[(i, j)];
            a[(j, i)] = upper;
        }
    }

    Ok(VariationalProblem::from_parts(
        space,
        a,
        b,
        c0,
        0.5,
        q,
        u.to_vec(),
        Estimator::Exact,
    ))
}
