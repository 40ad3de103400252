//! Bulk diffusion as a variational problem over local functions, auxiliary
//! zero-current models built by staging a cluster across an edge, and the
//! constant comparing a constrained dynamics against its auxiliary partner.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::lattice::{BoundaryMode, Configuration, Site};
use crate::models::{Clause, ConstraintModel, RateMode};
use crate::moves::{MoveBody, MoveProgram, MoveReport, MoveStep};

/// Hard cap on window size; the basis has `2^sites` functions.
pub const MAX_WINDOW_SITES: usize = 12;

/// Span of the monomials `prod_{s in B} eta(s)` over subsets `B` of a fixed
/// window. Basis index = bitmask over `sites()` order; mask 0 is the
/// constant function.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LocalFunctionSpace {
    dim: usize,
    sites: Vec<Site>,
}

impl LocalFunctionSpace {
    pub fn new(dim: usize, sites: &[Site]) -> Result<LocalFunctionSpace> {
        if dim == 0 {
            return Err(Error::Argument("window dimension must be >= 1".into()));
        }
        for s in sites {
            if s.dim() != dim {
                return Err(Error::Argument(format!(
                    "window site {s:?} does not live in {dim} dimensions"
                )));
            }
        }
        let mut sites = sites.to_vec();
        sites.sort();
        sites.dedup();
        if sites.len() > MAX_WINDOW_SITES {
            return Err(Error::Budget(format!(
                "window of {} sites spans 2^{} basis functions; the cap is 2^{MAX_WINDOW_SITES}",
                sites.len(),
                sites.len()
            )));
        }
        Ok(LocalFunctionSpace { dim, sites })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Window sites in basis-bit order.
    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    /// Number of basis functions, `2^sites`.
    pub fn basis_len(&self) -> usize {
        1 << self.sites.len()
    }

    /// The monomial support of basis index `mask`.
    pub fn basis_sites(&self, mask: usize) -> Vec<Site> {
        (0..self.sites.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| self.sites[i].clone())
            .collect()
    }
}

/// How the quadratic form was produced.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Estimator {
    /// Every entry integrated exactly under the product measure.
    Exact,
    /// Empirical means over shared occupancy samples, one stream per axis.
    MonteCarlo { samples: u64, seed: u64 },
}

/// The objective `f^T A f + 2 b^T f + c0` whose minimum over the window is
/// the diffusion coefficient `u . D u` (or its tagged-particle analogue).
/// The analytic prefactor is folded in already: for the exchange form the
/// `1/(2 q (1-q))` edge factor cancels when the pair is integrated out,
/// leaving expectations of `rate * monomials` that avoid both endpoints.
/// Evaluating the form needs no further scaling.
#[derive(Clone, Debug)]
pub struct VariationalProblem {
    space: LocalFunctionSpace,
    a: DMatrix<f64>,
    b: DVector<f64>,
    c0: f64,
    prefactor: f64,
    q: f64,
    u: Vec<f64>,
    estimator: Estimator,
}

impl VariationalProblem {
    pub fn space(&self) -> &LocalFunctionSpace {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn constant(&self) -> f64 {
        self.c0
    }

    /// The analytic prefactor recorded for bookkeeping: `1/(2 q (1-q))` for
    /// the exchange form, `1/2` for the tagged-particle form. It is already
    /// applied to `A`, `b` and `c0`.
    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn vacancy_probability(&self) -> f64 {
        self.q
    }

    pub fn direction(&self) -> &[f64] {
        &self.u
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        space: LocalFunctionSpace,
        a: DMatrix<f64>,
        b: DVector<f64>,
        c0: f64,
        prefactor: f64,
        q: f64,
        u: Vec<f64>,
        estimator: Estimator,
    ) -> VariationalProblem {
        VariationalProblem {
            space,
            a,
            b,
            c0,
            prefactor,
            q,
            u,
            estimator,
        }
    }

    /// Objective at coefficient vector `f` (basis order of `space()`).
    pub fn value(&self, f: &DVector<f64>) -> Result<f64> {
        if f.len() != self.space.basis_len() {
            return Err(Error::Argument(format!(
                "coefficient vector has {} entries for a basis of {}",
                f.len(),
                self.space.basis_len()
            )));
        }
        let af = &self.a * f;
        Ok(f.dot(&af) + 2.0 * self.b.dot(f) + self.c0)
    }
}

/// One closed-form term of `mu[rate * prod_{s in S} eta(s)]`: contributes
/// `coef * qpow` whenever `S` misses the `vacant` set.
struct RateTerm {
    coef: f64,
    vacant: u128,
    qpow: f64,
}

/// Per-axis integration tables: the signed monomial remainders produced by
/// window translates straddling the exchanged pair, and the rate expansion,
/// all packed as bitmasks over a common site universe.
struct AxisTable {
    universe: Vec<Site>,
    /// Per basis mask: `(sign, remainder)` features. Swapping the pair maps
    /// a monomial reading exactly one endpoint to `sign * (eta(0) -
    /// eta(e)) * remainder`; remainders avoid both endpoints.
    feats: Vec<Vec<(f64, u128)>>,
    terms: Vec<RateTerm>,
    clause_masks: Vec<(f64, u128)>,
}

impl AxisTable {
    /// `mu[rate * prod_{s in S} eta(s)]`, exact under Bernoulli(1-q).
    fn moment(&self, s: u128, occ_pow: &[f64]) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            if t.vacant & s == 0 {
                acc += t.coef * t.qpow;
            }
        }
        occ_pow[s.count_ones() as usize] * acc
    }
}

fn build_axis_table(
    m: &ConstraintModel,
    axis: usize,
    space: &LocalFunctionSpace,
    q: f64,
) -> Result<AxisTable> {
    let dim = m.dim();
    let zero = Site::zero(dim);
    let e = Site::unit(axis, dim);
    let w = space.sites.len();
    let nbasis = 1usize << w;

    // Translates whose window copy can touch the exchanged pair; all others
    // commute with the swap and drop out of the gradient.
    let mut translates: BTreeSet<Site> = BTreeSet::new();
    for s in &space.sites {
        translates.insert(zero.sub(s));
        translates.insert(e.sub(s));
    }

    let mut raw: Vec<Vec<(f64, Vec<Site>)>> = vec![Vec::new(); nbasis];
    for x in &translates {
        let hit0 = space.sites.iter().position(|s| s.add(x) == zero);
        let hite = space.sites.iter().position(|s| s.add(x) == e);
        if hit0.is_none() && hite.is_none() {
            continue;
        }
        for b in 1..nbasis {
            let has0 = hit0.map_or(false, |i| b >> i & 1 == 1);
            let hase = hite.map_or(false, |i| b >> i & 1 == 1);
            if has0 == hase {
                // reads neither or both endpoints: fixed by the swap
                continue;
            }
            let pivot = if hase { hite.unwrap() } else { hit0.unwrap() };
            let sign = if hase { 1.0 } else { -1.0 };
            let rest: Vec<Site> = (0..w)
                .filter(|&i| b >> i & 1 == 1 && i != pivot)
                .map(|i| space.sites[i].add(x))
                .collect();
            debug_assert!(rest.iter().all(|s| *s != zero && *s != e));
            raw[b].push((sign, rest));
        }
    }

    let mut uni: BTreeSet<Site> = BTreeSet::new();
    for feats in &raw {
        for (_, rest) in feats {
            uni.extend(rest.iter().cloned());
        }
    }
    for cl in m.clauses(axis) {
        uni.extend(cl.offsets.iter().cloned());
    }
    let universe: Vec<Site> = uni.into_iter().collect();
    if universe.len() > 128 {
        return Err(Error::Budget(format!(
            "axis {axis}: rate support and window translates read {} sites; \
             the closed-form integrator packs them into 128 bits",
            universe.len()
        )));
    }
    let bit = |s: &Site| -> u128 {
        let idx = universe
            .binary_search(s)
            .expect("universe site was collected above");
        1u128 << idx
    };

    let feats: Vec<Vec<(f64, u128)>> = raw
        .into_iter()
        .map(|v| {
            v.into_iter()
                .map(|(sign, rest)| (sign, rest.iter().map(&bit).fold(0u128, |a, b| a | b)))
                .collect()
        })
        .collect();

    let clause_masks: Vec<(f64, u128)> = m
        .clauses(axis)
        .iter()
        .map(|cl| {
            let mask = cl.offsets.iter().map(&bit).fold(0u128, |a, b| a | b);
            (cl.weight, mask)
        })
        .collect();

    let mut terms = Vec::new();
    match m.rate_mode() {
        RateMode::WeightedCount => {
            for (weight, mask) in &clause_masks {
                terms.push(RateTerm {
                    coef: *weight,
                    vacant: *mask,
                    qpow: q.powi(mask.count_ones() as i32),
                });
            }
        }
        RateMode::IndicatorAny => {
            // inclusion-exclusion over which clauses are satisfied
            let j = clause_masks.len();
            if j > 20 {
                return Err(Error::Budget(format!(
                    "axis {axis}: {j} indicator clauses need 2^{j} \
                     inclusion-exclusion terms"
                )));
            }
            for t in 1u32..(1u32 << j) {
                let mut union = 0u128;
                for (idx, (_, mask)) in clause_masks.iter().enumerate() {
                    if t >> idx & 1 == 1 {
                        union |= mask;
                    }
                }
                let coef = if t.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
                terms.push(RateTerm {
                    coef,
                    vacant: union,
                    qpow: q.powi(union.count_ones() as i32),
                });
            }
        }
    }

    Ok(AxisTable {
        universe,
        feats,
        terms,
        clause_masks,
    })
}

fn sampled_rate(clauses: &[(f64, u128)], mode: RateMode, occ: u128) -> f64 {
    match mode {
        RateMode::IndicatorAny => {
            if clauses.iter().any(|(_, m)| m & occ == 0) {
                1.0
            } else {
                0.0
            }
        }
        RateMode::WeightedCount => clauses
            .iter()
            .filter(|(_, m)| m & occ == 0)
            .map(|(w, _)| w)
            .sum(),
    }
}

fn accumulate_exact(
    t: &AxisTable,
    ua: f64,
    occ_pow: &[f64],
    a: &mut DMatrix<f64>,
    b: &mut DVector<f64>,
    c0: &mut f64,
) {
    let nbasis = t.feats.len();
    *c0 += ua * ua * t.moment(0, occ_pow);
    for bi in 0..nbasis {
        if t.feats[bi].is_empty() {
            continue;
        }
        let mut lin = 0.0;
        for (sign, rest) in &t.feats[bi] {
            lin += sign * t.moment(*rest, occ_pow);
        }
        b[bi] += ua * lin;
        for bj in bi..nbasis {
            if t.feats[bj].is_empty() {
                continue;
            }
            let mut acc = 0.0;
            for (si, ri) in &t.feats[bi] {
                for (sj, rj) in &t.feats[bj] {
                    acc += si * sj * t.moment(ri | rj, occ_pow);
                }
            }
            a[(bi, bj)] += acc;
        }
    }
}

fn accumulate_sampled(
    t: &AxisTable,
    mode: RateMode,
    ua: f64,
    q: f64,
    samples: u64,
    seed: u64,
    axis: usize,
    a: &mut DMatrix<f64>,
    b: &mut DVector<f64>,
    c0: &mut f64,
) {
    let mut rng = crate::rng::stream(seed, axis as u64);
    let nbasis = t.feats.len();
    let live: Vec<usize> = (0..nbasis).filter(|&i| !t.feats[i].is_empty()).collect();
    let nu = t.universe.len();
    let p_occ = 1.0 - q;
    let inv = 1.0 / samples as f64;
    let mut psi = vec![0.0f64; nbasis];
    for _ in 0..samples {
        let mut occ = 0u128;
        for s in 0..nu {
            if rng.gen::<f64>() < p_occ {
                occ |= 1u128 << s;
            }
        }
        let rate = sampled_rate(&t.clause_masks, mode, occ);
        if rate == 0.0 {
            continue;
        }
        *c0 += ua * ua * rate * inv;
        for &bi in &live {
            let mut v = 0.0;
            for (sign, rest) in &t.feats[bi] {
                if rest & occ == *rest {
                    v += sign;
                }
            }
            psi[bi] = v;
        }
        for (k, &bi) in live.iter().enumerate() {
            if psi[bi] == 0.0 {
                continue;
            }
            let wt = rate * psi[bi] * inv;
            b[bi] += ua * wt;
            for &bj in &live[k..] {
                if psi[bj] != 0.0 {
                    a[(bi, bj)] += wt * psi[bj];
                }
            }
        }
    }
}

/// Builds the quadratic form for `u . D u` on the given window. The basis is
/// every occupancy monomial on the window; the form already contains the
/// edge prefactor (see [`VariationalProblem`]). Entry conventions: mask 0 is
/// the constant, whose row, column and linear term are zero, so the gauge
/// `f_empty = 0` costs nothing.
pub fn assemble_diffusion_qp(
    m: &ConstraintModel,
    u: &[f64],
    window: &[Site],
    q: f64,
    estimator: Estimator,
    budget: u64,
) -> Result<VariationalProblem> {
    let dim = m.dim();
    if u.len() != dim {
        return Err(Error::Argument(format!(
            "direction has {} components for a {dim}d model",
            u.len()
        )));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("direction must be finite".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Argument(format!(
            "vacancy probability q={q} must lie strictly inside (0,1)"
        )));
    }
    let space = LocalFunctionSpace::new(dim, window)?;
    let nbasis = space.basis_len();
    if nbasis as u64 > budget {
        return Err(Error::Budget(format!(
            "basis of {nbasis} functions exceeds the budget of {budget}"
        )));
    }

    let mut a = DMatrix::zeros(nbasis, nbasis);
    let mut b = DVector::zeros(nbasis);
    let mut c0 = 0.0;
    let occ_pow: Vec<f64> = (0..=128).map(|k| (1.0 - q).powi(k)).collect();

    for axis in 0..dim {
        let table = build_axis_table(m, axis, &space, q)?;
        match estimator {
            Estimator::Exact => accumulate_exact(&table, u[axis], &occ_pow, &mut a, &mut b, &mut c0),
            Estimator::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(Error::Argument("sample count must be positive".into()));
                }
                accumulate_sampled(
                    &table,
                    m.rate_mode(),
                    u[axis],
                    q,
                    samples,
                    seed,
                    axis,
                    &mut a,
                    &mut b,
                    &mut c0,
                );
            }
        }
    }
    // the loops fill the upper triangle once per axis
    for i in 0..nbasis {
        for j in 0..i {
            let v = a[(j, i)];
            a[(i, j)] = v;
        }
    }

    Ok(VariationalProblem {
        space,
        a,
        b,
        c0,
        prefactor: 1.0 / (2.0 * q * (1.0 - q)),
        q,
        u: u.to_vec(),
        estimator,
    })
}

/// Minimizer of a [`VariationalProblem`].
#[derive(Clone, Debug)]
pub struct QpSolution {
    /// Basis coefficients of the minimizer; entry 0 (the constant) stays 0.
    pub coefficients: DVector<f64>,
    pub value: f64,
    /// `max |A f + b|`, a stationarity certificate.
    pub residual: f64,
}

/// Minimizes the form by eigendecomposition: project `b` on the range of
/// `A` and invert there, leaving null directions (the constant, and any
/// monomials the rate never sees) at zero. Fails if the form is not
/// positive semidefinite or the stationarity residual exceeds `tol`
/// relative to `|b|`.
pub fn solve_qp(vp: &VariationalProblem, tol: f64) -> Result<QpSolution> {
    if !(tol > 0.0) {
        return Err(Error::Argument("tolerance must be positive".into()));
    }
    let n = vp.a.nrows();
    let eig = vp.a.clone().symmetric_eigen();
    let lmax = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let floor = -1e-10 * lmax.max(1.0);
    if let Some(bad) = eig.eigenvalues.iter().find(|&&v| v < floor) {
        return Err(Error::Numerical(format!(
            "quadratic form has eigenvalue {bad:.3e}; it should be positive semidefinite"
        )));
    }
    let cut = lmax * 1e-12;
    let mut f = DVector::zeros(n);
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        if lam <= cut {
            continue;
        }
        let vk = eig.eigenvectors.column(k);
        let proj = vk.dot(&vp.b);
        f.axpy(-proj / lam, &vk, 1.0);
    }
    let residual = (&vp.a * &f + &vp.b).amax();
    let bscale = vp.b.amax().max(1.0);
    if residual > tol * bscale {
        return Err(Error::Numerical(format!(
            "stationarity residual {residual:.3e} exceeds {tol:.1e} x {bscale:.3e}; \
             the linear term leaves the range of the form"
        )));
    }
    let value = vp.c0 + vp.b.dot(&f);
    if value < -1e-9 * vp.c0.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "variational value {value:.3e} went negative"
        )));
    }
    Ok(QpSolution {
        coefficients: f,
        value,
        residual,
    })
}

/// `u . D^(window) u` with exact integration: assemble and minimize.
pub fn diffusion_coefficient(
    m: &ConstraintModel,
    u: &[f64],
    window: &[Site],
    q: f64,
    budget: u64,
) -> Result<f64> {
    let vp = assemble_diffusion_qp(m, u, window, q, Estimator::Exact, budget)?;
    Ok(solve_qp(&vp, 1e-9)?.value)
}

/// Per-axis ground sets for an auxiliary gradient model. Sites are kept in
/// decreasing order along the axis (ties broken by full coordinates), the
/// order in which the staged sets `A_i` move sites from `x` to `x + e_axis`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AuxSpec {
    dim: usize,
    sets: Vec<Vec<Site>>,
}

impl AuxSpec {
    pub fn new(dim: usize, sets: Vec<Vec<Site>>) -> Result<AuxSpec> {
        if dim == 0 {
            return Err(Error::Construction("dimension must be >= 1".into()));
        }
        if sets.len() != dim {
            return Err(Error::Construction(format!(
                "expected one ground set per axis ({dim}), got {}",
                sets.len()
            )));
        }
        let mut ordered = Vec::with_capacity(dim);
        for (axis, set) in sets.into_iter().enumerate() {
            if set.len() < 2 {
                return Err(Error::Construction(format!(
                    "axis {axis}: staging needs at least two ground sites, got {}",
                    set.len()
                )));
            }
            for s in &set {
                if s.dim() != dim {
                    return Err(Error::Construction(format!(
                        "axis {axis}: ground site {s:?} does not live in {dim} dimensions"
                    )));
                }
            }
            let mut set = set;
            set.sort_by(|p, r| (r.coord(axis), &r.0).cmp(&(p.coord(axis), &p.0)));
            if set.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Construction(format!(
                    "axis {axis}: duplicate ground site"
                )));
            }
            ordered.push(set);
        }
        Ok(AuxSpec { dim, sets: ordered })
    }

    /// Ground sets `C union (l e_axis + C)` for every axis; errors if the
    /// two copies collide.
    pub fn from_cluster(cluster: &[Site], l: i64) -> Result<AuxSpec> {
        if cluster.is_empty() {
            return Err(Error::Construction("cluster is empty".into()));
        }
        if l < 1 {
            return Err(Error::Construction(format!("shift l={l} must be >= 1")));
        }
        let dim = cluster[0].dim();
        let mut sets = Vec::with_capacity(dim);
        for axis in 0..dim {
            let shift = Site::unit(axis, dim).scale(l);
            let mut set = cluster.to_vec();
            set.extend(cluster.iter().map(|s| s.add(&shift)));
            sets.push(set);
        }
        AuxSpec::new(dim, sets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Ground sites of one axis, in staging order.
    pub fn ordered(&self, axis: usize) -> &[Site] {
        &self.sets[axis]
    }

    pub fn size(&self, axis: usize) -> usize {
        self.sets[axis].len()
    }

    /// Staged set `A_i`: the first `i` sites shifted by `e_axis`, the rest
    /// in place. `A_0` is the ground set, `A_n` its full translate.
    pub fn stage(&self, axis: usize, i: usize) -> Vec<Site> {
        let e = Site::unit(axis, self.dim);
        self.sets[axis]
            .iter()
            .enumerate()
            .map(|(j, s)| if j < i { s.add(&e) } else { s.clone() })
            .collect()
    }
}

/// The auxiliary model of a spec: per axis, one weight-1 clause per staged
/// exchange, namely the stage `A_i` seen from its moving site with that site
/// removed. An exchange and its reversal then read the same clause, so the
/// counted rate is reversible, and summation by parts makes the net current
/// vanish in every configuration. All clauses have `n - 1` sites, so the
/// mean edge rate is `n q^(n-1)`.
pub fn build_aux_model(spec: &AuxSpec, name: impl Into<String>) -> Result<ConstraintModel> {
    let dim = spec.dim();
    let mut per_axis = Vec::with_capacity(dim);
    for axis in 0..dim {
        let xs = spec.ordered(axis);
        let e = Site::unit(axis, dim);
        let n = xs.len();
        let mut clauses = Vec::with_capacity(n);
        for i in 0..n {
            let mut offs = Vec::with_capacity(n - 1);
            for (j, x) in xs.iter().enumerate() {
                if j == i {
                    continue;
                }
                let site = if j < i { x.add(&e) } else { x.clone() };
                offs.push(site.sub(&xs[i]));
            }
            offs.sort();
            clauses.push(Clause::unit(offs));
        }
        per_axis.push(clauses);
    }
    // the staging order keeps every offset away from 0 and e_axis; the
    // constructor would reject any violation loudly
    ConstraintModel::new(name, dim, RateMode::WeightedCount, per_axis)
}

/// Auxiliary partner of [`crate::models::bt1d`]: cluster `{1,2}` staged
/// across a shift of 3, ground set `{1,2,4,5}`.
pub fn bt1d_aux() -> ConstraintModel {
    let cluster = [Site(vec![1]), Site(vec![2])];
    let spec = AuxSpec::from_cluster(&cluster, 3).expect("built-in spec must construct");
    build_aux_model(&spec, "bt1d-aux").expect("built-in model must construct")
}

/// Auxiliary partner of [`crate::models::bt2d`]: the 2x2 cluster at `(1,1)`
/// staged across a shift of 3 along each axis.
pub fn bt2d_aux() -> ConstraintModel {
    let cluster = [
        Site(vec![1, 1]),
        Site(vec![1, 2]),
        Site(vec![2, 1]),
        Site(vec![2, 2]),
    ];
    let spec = AuxSpec::from_cluster(&cluster, 3).expect("built-in spec must construct");
    build_aux_model(&spec, "bt2d-aux").expect("built-in model must construct")
}

/// Net instantaneous particle current by coordinate: over every directed
/// positive-axis edge `(x, x+e)` of a torus, `rate * (x - y)(eta(x) -
/// eta(y))`. With integer clause weights every addend is an integer, so the
/// f64 sum is exact and a gradient model must return exactly zero.
pub fn total_current(c: &Configuration, m: &ConstraintModel) -> Result<Vec<f64>> {
    let d = c.domain();
    if d.boundary() != BoundaryMode::Periodic {
        return Err(Error::Argument(
            "total current needs periodic boundaries; open boxes leak at the walls".into(),
        ));
    }
    if d.dim() != m.dim() {
        return Err(Error::Argument(format!(
            "configuration is {}d but the model is {}d",
            d.dim(),
            m.dim()
        )));
    }
    let mut j = vec![0.0; d.dim()];
    for x in d.sites() {
        let hx = if c.occupied(&x) { 1.0 } else { 0.0 };
        for (axis, jc) in j.iter_mut().enumerate() {
            let rate = m.edge_rate_at(c, &x, axis);
            if rate == 0.0 {
                continue;
            }
            let y = x.add(&Site::unit(axis, d.dim()));
            let hy = if c.occupied(&y) { 1.0 } else { 0.0 };
            // x - y = -e_axis
            *jc -= rate * (hx - hy);
        }
    }
    Ok(j)
}

/// `mu[c_{0,e_axis}]` under the Bernoulli(1-q) product measure, in closed
/// form: weighted counts integrate clause by clause, indicator rates by
/// inclusion-exclusion over clause subsets (budget-guarded).
pub fn mean_edge_rate(m: &ConstraintModel, axis: usize, q: f64, budget: u64) -> Result<f64> {
    if axis >= m.dim() {
        return Err(Error::Argument(format!(
            "axis {axis} out of range for a {}d model",
            m.dim()
        )));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Argument(format!(
            "vacancy probability q={q} outside [0,1]"
        )));
    }
    let clauses = m.clauses(axis);
    match m.rate_mode() {
        RateMode::WeightedCount => Ok(clauses
            .iter()
            .map(|cl| {
                let distinct = cl.offsets.iter().collect::<BTreeSet<_>>().len();
                cl.weight * q.powi(distinct as i32)
            })
            .sum()),
        RateMode::IndicatorAny => {
            let j = clauses.len();
            if j > 20 || (1u64 << j) > budget {
                return Err(Error::Budget(format!(
                    "{j} indicator clauses need 2^{j} inclusion-exclusion terms"
                )));
            }
            let mut acc = 0.0;
            for t in 1u32..(1u32 << j) {
                let mut union: BTreeSet<&Site> = BTreeSet::new();
                for (idx, cl) in clauses.iter().enumerate() {
                    if t >> idx & 1 == 1 {
                        union.extend(cl.offsets.iter());
                    }
                }
                let sign = if t.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
                acc += sign * q.powi(union.len() as i32);
            }
            Ok(acc)
        }
    }
}

/// `sum_axis u_axis^2 mu[c_axis]`. For a zero-current model the variational
/// linear term vanishes on every window, so this equals `u . D u`; for other
/// models it is the `f = 0` upper bound. Valid on all of `q` in `[0,1]`.
pub fn aux_diffusion_closed_form(
    m: &ConstraintModel,
    q: f64,
    u: &[f64],
    budget: u64,
) -> Result<f64> {
    if u.len() != m.dim() {
        return Err(Error::Argument(format!(
            "direction has {} components for a {}d model",
            u.len(),
            m.dim()
        )));
    }
    let mut total = 0.0;
    for (axis, ua) in u.iter().enumerate() {
        total += ua * ua * mean_edge_rate(m, axis, q, budget)?;
    }
    Ok(total)
}

/// Base sites of every exchange a branch-bodied move can perform. Computed
/// bodies do not expose a static step list; pass their site set explicitly
/// where a footprint is needed.
pub fn exchange_footprint(p: &MoveProgram) -> Result<Vec<Site>> {
    let branches = match &p.body {
        MoveBody::Branches(b) => b,
        MoveBody::Computed { .. } => {
            return Err(Error::Argument(format!(
                "move '{}' computes its steps at run time and has no static footprint",
                p.name
            )));
        }
    };
    let mut sites: BTreeSet<Site> = BTreeSet::new();
    for br in branches {
        for st in &br.steps {
            match st {
                MoveStep::Exchange { site, dir } => {
                    // canonical base = lower endpoint of the exchanged pair
                    let base = if dir.positive {
                        site.clone()
                    } else {
                        site.add(&dir.versor(site.dim()))
                    };
                    sites.insert(base);
                }
                MoveStep::BoundaryFlip { .. } => {
                    return Err(Error::Argument(
                        "footprint is defined for exchange-only moves".into(),
                    ));
                }
            }
        }
    }
    Ok(sites.into_iter().collect())
}

/// `d * T^2 * 2^Loss * cmax * |footprint|` for a family of `d` validated
/// moves of at most `T` steps each, losing at most `Loss` bits, with every
/// exchange based inside `footprint`; `cmax` is the top rate of the
/// auxiliary model being compared against. When a report carries a loss
/// bound rather than an exact count the constant stays an upper bound.
pub fn comparison_constant(
    reports: &[MoveReport],
    footprint: &[Site],
    aux: &ConstraintModel,
) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::Argument("no move reports given".into()));
    }
    if footprint.is_empty() {
        return Err(Error::Argument("empty exchange footprint".into()));
    }
    if let Some(r) = reports.iter().find(|r| !r.valid) {
        let why = r
            .witness
            .as_ref()
            .map_or("no witness".to_string(), |w| w.reason.clone());
        return Err(Error::Validation(format!(
            "a move failed validation ({why}); the bound only covers moves that always complete"
        )));
    }
    let d = reports.len() as f64;
    let t = reports.iter().map(|r| r.steps).max().unwrap_or(0) as f64;
    let loss = reports.iter().map(|r| r.loss).max().unwrap_or(0);
    let mut fp = footprint.to_vec();
    fp.sort();
    fp.dedup();
    Ok(d * t * t * 2f64.powi(loss as i32) * aux.max_rate() * fp.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Direction, Domain};
    use crate::models::{bt1d, bt2d, glt1d, verify_axioms};
    use crate::moves::{DomainSpec, ValidationMode};

    fn site1(x: i64) -> Site {
        Site(vec![x])
    }

    fn sites1(xs: &[i64]) -> Vec<Site> {
        xs.iter().map(|&x| site1(x)).collect()
    }

    /// Objective evaluated the long way: enumerate every configuration of
    /// the full read set, apply the swap to translated monomials directly,
    /// and divide by the edge prefactor at the end.
    fn literal_value(
        m: &ConstraintModel,
        u: &[f64],
        space: &LocalFunctionSpace,
        q: f64,
        f: &DVector<f64>,
    ) -> f64 {
        let dim = m.dim();
        let zero = Site::zero(dim);
        let w = space.sites().len();

        let mut read: BTreeSet<Site> = BTreeSet::new();
        for axis in 0..dim {
            let e = Site::unit(axis, dim);
            read.insert(zero.clone());
            read.insert(e.clone());
            for cl in m.clauses(axis) {
                read.extend(cl.offsets.iter().cloned());
            }
            for s in space.sites() {
                read.insert(zero.sub(s));
                read.insert(e.sub(s));
            }
        }
        // translates were seeded above; now close under window placement
        let translates: Vec<Site> = read
            .iter()
            .filter(|x| {
                space
                    .sites()
                    .iter()
                    .any(|s| s.add(x) == zero || (0..dim).any(|a| s.add(x) == Site::unit(a, dim)))
            })
            .cloned()
            .collect();
        for x in &translates {
            for s in space.sites() {
                read.insert(s.add(x));
            }
        }
        let read: Vec<Site> = read.into_iter().collect();
        let n = read.len();
        assert!(n <= 20, "literal oracle got a {n}-site read set");

        let mut total = 0.0;
        for occm in 0u32..(1u32 << n) {
            let occ_at = |s: &Site| -> bool {
                let i = read.binary_search(s).expect("read set is closed");
                occm >> i & 1 == 1
            };
            let mut weight = 1.0;
            for i in 0..n {
                weight *= if occm >> i & 1 == 1 { 1.0 - q } else { q };
            }
            for axis in 0..dim {
                let e = Site::unit(axis, dim);
                let rate = match m.rate_mode() {
                    RateMode::IndicatorAny => {
                        if m.clauses(axis)
                            .iter()
                            .any(|cl| cl.offsets.iter().all(|o| !occ_at(o)))
                        {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    RateMode::WeightedCount => m
                        .clauses(axis)
                        .iter()
                        .filter(|cl| cl.offsets.iter().all(|o| !occ_at(o)))
                        .map(|cl| cl.weight)
                        .sum(),
                };
                if rate == 0.0 {
                    continue;
                }
                let swapped = |s: &Site| -> bool {
                    if *s == zero {
                        occ_at(&e)
                    } else if *s == e {
                        occ_at(&zero)
                    } else {
                        occ_at(s)
                    }
                };
                let h0 = occ_at(&zero) as i64 as f64;
                let he = occ_at(&e) as i64 as f64;
                let mut bracket = u[axis] * (h0 - he);
                let mut xs: BTreeSet<Site> = BTreeSet::new();
                for s in space.sites() {
                    xs.insert(zero.sub(s));
                    xs.insert(e.sub(s));
                }
                for x in &xs {
                    for bmask in 1..space.basis_len() {
                        if f[bmask] == 0.0 {
                            continue;
                        }
                        let mono = |at: &dyn Fn(&Site) -> bool| -> f64 {
                            for i in 0..w {
                                if bmask >> i & 1 == 1 && !at(&space.sites()[i].add(x)) {
                                    return 0.0;
                                }
                            }
                            1.0
                        };
                        bracket += f[bmask] * (mono(&swapped) - mono(&occ_at));
                    }
                }
                total += weight * rate * bracket * bracket;
            }
        }
        total / (2.0 * q * (1.0 - q))
    }

    #[test]
    fn empty_window_value_is_the_mean_rate() {
        for q in [0.2, 0.5, 0.8] {
            let d = diffusion_coefficient(&bt1d(), &[1.0], &[], q, 1 << 20).unwrap();
            let expect = 2.0 * q - q * q;
            assert!(
                (d - expect).abs() < 1e-12,
                "bt1d f=0 value at q={q}: {d} vs {expect}"
            );
        }
        let d = diffusion_coefficient(&glt1d(), &[1.0], &[], 0.37, 1 << 20).unwrap();
        assert!((d - 0.74).abs() < 1e-12, "glt1d mean rate is 2q, got {d}");
    }

    #[test]
    fn assembled_form_matches_brute_force_integration() {
        let cases: Vec<(ConstraintModel, Vec<Site>, Vec<f64>, f64)> = vec![
            (bt1d(), sites1(&[1]), vec![1.0], 0.3),
            (bt1d(), sites1(&[-1, 1]), vec![1.0], 0.62),
            (glt1d(), sites1(&[1, 2]), vec![1.0], 0.5),
            (
                bt2d(),
                vec![Site(vec![1, 0]), Site(vec![0, 1])],
                vec![0.6, -0.8],
                0.45,
            ),
        ];
        let mut rng = crate::rng::single(42);
        for (m, window, u, q) in cases {
            let vp = assemble_diffusion_qp(&m, &u, &window, q, Estimator::Exact, 1 << 20).unwrap();
            for trial in 0..3 {
                let mut f = DVector::zeros(vp.space().basis_len());
                for i in 0..f.len() {
                    f[i] = rng.gen_range(-1.0..1.0);
                }
                if trial == 0 {
                    f[0] = 0.0;
                }
                let fast = vp.value(&f).unwrap();
                let slow = literal_value(&m, &u, vp.space(), q, &f);
                assert!(
                    (fast - slow).abs() <= 1e-12 * slow.abs().max(1.0),
                    "model {} window {:?} trial {trial}: closed form {fast} vs literal {slow}",
                    m.name(),
                    window
                );
            }
        }
    }

    #[test]
    fn monte_carlo_assembly_agrees_with_exact() {
        let window = sites1(&[1, 2]);
        let exact =
            assemble_diffusion_qp(&bt1d(), &[1.0], &window, 0.5, Estimator::Exact, 1 << 20)
                .unwrap();
        let est = Estimator::MonteCarlo {
            samples: 60_000,
            seed: 11,
        };
        let mc = assemble_diffusion_qp(&bt1d(), &[1.0], &window, 0.5, est, 1 << 20).unwrap();
        assert_eq!(mc.estimator(), est, "provenance must be recorded");
        let mut f = DVector::zeros(exact.space().basis_len());
        for (i, v) in f.iter_mut().enumerate() {
            *v = ((i % 3) as f64 - 1.0) * 0.4;
        }
        let ve = exact.value(&f).unwrap();
        let vm = mc.value(&f).unwrap();
        assert!(
            (ve - vm).abs() < 0.05,
            "sampled value {vm} should approximate exact {ve}"
        );
    }

    #[test]
    fn window_growth_is_monotone_and_respects_known_bounds() {
        let q = 0.5;
        let chain: Vec<Vec<Site>> = vec![
            sites1(&[]),
            sites1(&[1]),
            sites1(&[1, 2]),
            sites1(&[-1, 1, 2]),
            sites1(&[-1, 1, 2, 3]),
        ];
        let mut last = f64::INFINITY;
        for window in &chain {
            let d = diffusion_coefficient(&bt1d(), &[1.0], window, q, 1 << 20).unwrap();
            assert!(
                d <= last + 1e-12,
                "window {window:?} raised the value: {d} > {last}"
            );
            assert!(
                d >= q - 1e-12 && d <= 2.0 * q + 1e-12,
                "value {d} left [q, 2q] at q={q}"
            );
            last = d;
        }
        assert!(last < 0.75, "larger windows must improve on the f=0 value");
    }

    #[test]
    fn solver_pins_the_gauge_and_certifies_stationarity() {
        let vp = assemble_diffusion_qp(
            &bt1d(),
            &[1.0],
            &sites1(&[1, 2]),
            0.5,
            Estimator::Exact,
            1 << 20,
        )
        .unwrap();
        let sol = solve_qp(&vp, 1e-9).unwrap();
        assert!(
            sol.coefficients[0].abs() < 1e-14,
            "constant coefficient must stay zero, got {}",
            sol.coefficients[0]
        );
        assert!(sol.residual <= 1e-9, "residual {} too large", sol.residual);
        assert!(
            sol.value <= vp.constant() + 1e-12,
            "minimum {} exceeds the f=0 value {}",
            sol.value,
            vp.constant()
        );
        let recomputed = vp.value(&sol.coefficients).unwrap();
        assert!(
            (recomputed - sol.value).abs() < 1e-12,
            "reported value {} disagrees with evaluation {recomputed}",
            sol.value
        );
    }

    #[test]
    fn aux_spec_orders_and_stages() {
        let spec = AuxSpec::from_cluster(&sites1(&[1, 2]), 3).unwrap();
        assert_eq!(spec.ordered(0), sites1(&[5, 4, 2, 1]).as_slice());
        assert_eq!(spec.stage(0, 0), sites1(&[5, 4, 2, 1]));
        assert_eq!(spec.stage(0, 2), sites1(&[6, 5, 2, 1]));
        assert_eq!(spec.stage(0, 4), sites1(&[6, 5, 3, 2]));
    }

    #[test]
    fn aux_spec_rejects_degenerate_input() {
        assert!(matches!(
            AuxSpec::new(1, vec![sites1(&[1])]),
            Err(Error::Construction(_))
        ));
        // the shifted copy lands on the cluster
        assert!(matches!(
            AuxSpec::from_cluster(&sites1(&[1, 2]), 1),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn aux_model_of_a_single_site_cluster_is_glt1d() {
        let spec = AuxSpec::from_cluster(&sites1(&[1]), 1).unwrap();
        let aux = build_aux_model(&spec, "glt1d").unwrap();
        assert_eq!(aux, glt1d(), "single-site staging reproduces glt1d");
    }

    #[test]
    fn aux_clauses_frozen_for_the_paired_cluster() {
        let aux = bt1d_aux();
        let got: Vec<Vec<i64>> = aux
            .clauses(0)
            .iter()
            .map(|cl| cl.offsets.iter().map(|o| o.coord(0)).collect())
            .collect();
        let want: Vec<Vec<i64>> = vec![
            vec![-4, -3, -1],
            vec![-3, -2, 2],
            vec![-1, 3, 4],
            vec![2, 4, 5],
        ];
        assert_eq!(got, want, "stage clauses of the {{1,2}} cluster at shift 3");
        assert_eq!(aux.max_rate(), 4.0);
    }

    #[test]
    fn aux_models_satisfy_the_axioms() {
        for aux in [bt1d_aux(), bt2d_aux()] {
            let report = verify_axioms(&aux, 1 << 18).unwrap();
            assert!(
                report.all_pass(),
                "{} failed: {:?}",
                aux.name(),
                report.failed()
            );
        }
    }

    #[test]
    fn total_current_vanishes_for_aux_models() {
        let aux1 = bt1d_aux();
        let dom = Domain::line(12, BoundaryMode::Periodic).unwrap();
        let mut rng = crate::rng::single(3);
        for _ in 0..300 {
            let bits: Vec<bool> = (0..12).map(|_| rng.gen::<f64>() < 0.6).collect();
            let c = Configuration::from_bits(dom.clone(), &bits).unwrap();
            let j = total_current(&c, &aux1).unwrap();
            assert_eq!(j, vec![0.0], "1d aux current must vanish exactly");
        }

        let aux2 = bt2d_aux();
        let dom2 = Domain::square(12, BoundaryMode::Periodic).unwrap();
        for _ in 0..40 {
            let bits: Vec<bool> = (0..144).map(|_| rng.gen::<f64>() < 0.5).collect();
            let c = Configuration::from_bits(dom2.clone(), &bits).unwrap();
            let j = total_current(&c, &aux2).unwrap();
            assert_eq!(j, vec![0.0, 0.0], "2d aux current must vanish exactly");
        }
    }

    #[test]
    fn total_current_detects_non_gradient_models() {
        let m = bt1d();
        let dom = Domain::line(12, BoundaryMode::Periodic).unwrap();
        let mut rng = crate::rng::single(9);
        let mut saw_nonzero = false;
        for _ in 0..20 {
            let bits: Vec<bool> = (0..12).map(|_| rng.gen::<f64>() < 0.6).collect();
            let c = Configuration::from_bits(dom.clone(), &bits).unwrap();
            if total_current(&c, &m).unwrap()[0] != 0.0 {
                saw_nonzero = true;
            }
        }
        assert!(saw_nonzero, "bt1d is not a gradient model");
        let open = Configuration::all_occupied(Domain::line(6, BoundaryMode::Occupied).unwrap());
        assert!(matches!(
            total_current(&open, &m),
            Err(Error::Argument(_))
        ));
    }

    /// Enumerates the dependency support outright; small models only.
    fn mean_rate_by_enumeration(m: &ConstraintModel, axis: usize, q: f64) -> f64 {
        let support = m.dependency_offsets(axis);
        let n = support.len();
        assert!(n <= 16, "enumeration oracle got {n} support sites");
        let mut acc = 0.0;
        for occm in 0u32..(1u32 << n) {
            let mut weight = 1.0;
            for i in 0..n {
                weight *= if occm >> i & 1 == 1 { 1.0 - q } else { q };
            }
            let sat = |cl: &Clause| {
                cl.offsets.iter().all(|o| {
                    let i = support.binary_search(o).expect("offset in support");
                    occm >> i & 1 == 0
                })
            };
            let rate = match m.rate_mode() {
                RateMode::IndicatorAny => {
                    if m.clauses(axis).iter().any(sat) {
                        1.0
                    } else {
                        0.0
                    }
                }
                RateMode::WeightedCount => m
                    .clauses(axis)
                    .iter()
                    .filter(|cl| sat(cl))
                    .map(|cl| cl.weight)
                    .sum(),
            };
            acc += weight * rate;
        }
        acc
    }

    #[test]
    fn mean_edge_rate_matches_enumeration_and_known_formulas() {
        for q in [0.0, 0.2, 0.5, 0.8, 1.0] {
            let bt = mean_edge_rate(&bt1d(), 0, q, 1 << 20).unwrap();
            assert!((bt - (2.0 * q - q * q)).abs() < 1e-15, "bt1d at q={q}: {bt}");
            let gl = mean_edge_rate(&glt1d(), 0, q, 1 << 20).unwrap();
            assert!((gl - 2.0 * q).abs() < 1e-15, "glt1d at q={q}: {gl}");
            let aux = mean_edge_rate(&bt1d_aux(), 0, q, 1 << 20).unwrap();
            assert!(
                (aux - 4.0 * q.powi(3)).abs() < 1e-15,
                "bt1d-aux at q={q}: {aux}"
            );
            for m in [bt1d(), glt1d(), bt1d_aux()] {
                let brute = mean_rate_by_enumeration(&m, 0, q);
                let fast = mean_edge_rate(&m, 0, q, 1 << 20).unwrap();
                assert!(
                    (brute - fast).abs() < 1e-14,
                    "{} at q={q}: closed {fast} vs enumerated {brute}",
                    m.name()
                );
            }
        }
        let aux2 = mean_edge_rate(&bt2d_aux(), 1, 0.5, 1 << 20).unwrap();
        assert!(
            (aux2 - 8.0 * 0.5f64.powi(7)).abs() < 1e-15,
            "bt2d-aux has 8 clauses of 7 sites, got {aux2}"
        );
    }

    #[test]
    fn aux_minimum_is_the_closed_form_on_any_window() {
        for q in [0.2, 0.5, 0.8] {
            let aux = bt1d_aux();
            let vp = assemble_diffusion_qp(
                &aux,
                &[1.0],
                &sites1(&[1, 2, 3]),
                q,
                Estimator::Exact,
                1 << 20,
            )
            .unwrap();
            assert!(
                vp.linear().amax() < 1e-13,
                "zero current makes the linear term vanish, got {}",
                vp.linear().amax()
            );
            let sol = solve_qp(&vp, 1e-9).unwrap();
            let closed = aux_diffusion_closed_form(&aux, q, &[1.0], 1 << 20).unwrap();
            assert!(
                (sol.value - closed).abs() < 1e-9,
                "q={q}: QP minimum {} vs closed form {closed}",
                sol.value
            );
        }
        let aux2 = bt2d_aux();
        let u = [0.3, 0.7];
        let window = vec![Site(vec![1, 1])];
        let vp =
            assemble_diffusion_qp(&aux2, &u, &window, 0.5, Estimator::Exact, 1 << 20).unwrap();
        let sol = solve_qp(&vp, 1e-9).unwrap();
        let closed = aux_diffusion_closed_form(&aux2, 0.5, &u, 1 << 20).unwrap();
        assert!(
            (sol.value - closed).abs() < 1e-9,
            "2d QP minimum {} vs closed form {closed}",
            sol.value
        );
        let expect = (0.09 + 0.49) * 8.0 * 0.5f64.powi(7);
        assert!((closed - expect).abs() < 1e-12);
    }

    #[test]
    fn window_order_and_duplicates_do_not_matter() {
        let a = assemble_diffusion_qp(
            &bt1d(),
            &[1.0],
            &sites1(&[3, 1, 2, 1]),
            0.4,
            Estimator::Exact,
            1 << 20,
        )
        .unwrap();
        let b = assemble_diffusion_qp(
            &bt1d(),
            &[1.0],
            &sites1(&[1, 2, 3]),
            0.4,
            Estimator::Exact,
            1 << 20,
        )
        .unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert_eq!(a.linear(), b.linear());
        assert_eq!(a.constant(), b.constant());
    }

    #[test]
    fn assembly_rejects_bad_arguments() {
        let m = bt1d();
        assert!(matches!(
            assemble_diffusion_qp(&m, &[1.0, 0.0], &[], 0.5, Estimator::Exact, 1 << 20),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            assemble_diffusion_qp(&m, &[1.0], &[], 0.0, Estimator::Exact, 1 << 20),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            assemble_diffusion_qp(&m, &[1.0], &sites1(&[1, 2, 3, 4]), 0.5, Estimator::Exact, 8),
            Err(Error::Budget(_))
        ));
        let wide: Vec<Site> = (1..=13).map(site1).collect();
        assert!(matches!(
            assemble_diffusion_qp(&m, &[1.0], &wide, 0.5, Estimator::Exact, 1 << 30),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn footprint_collects_branch_exchange_bases() {
        let window = (site1(-1), site1(3));
        let steps = vec![
            MoveStep::exchange(site1(0), Direction::new(0, true)),
            MoveStep::exchange(site1(2), Direction::new(0, false)),
            MoveStep::exchange(site1(0), Direction::new(0, true)),
        ];
        let p = MoveProgram::deterministic("walk", 1, window, vec![], DomainSpec::All, steps)
            .unwrap();
        assert_eq!(exchange_footprint(&p).unwrap(), sites1(&[0, 1]));

        let computed = MoveProgram::computed(
            "dynamic",
            1,
            (site1(0), site1(1)),
            vec![],
            DomainSpec::All,
            std::sync::Arc::new(|_| Ok(vec![])),
            4,
        )
        .unwrap();
        assert!(matches!(
            exchange_footprint(&computed),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn comparison_constant_multiplies_the_certificate_numbers() {
        let blank = MoveReport {
            valid: true,
            steps: 3,
            loss: 2,
            loss_is_bound: false,
            energy_barrier: 1,
            permutation: None,
            max_touches: 2,
            checked: 16,
            mode: ValidationMode::Exhaustive,
            witness: None,
        };
        let quick = MoveReport {
            steps: 1,
            loss: 0,
            ..blank.clone()
        };
        let footprint = sites1(&[0, 1, 5, 5]);
        let c = comparison_constant(&[blank.clone(), quick], &footprint, &glt1d()).unwrap();
        // 2 moves, T = 3, 2^2, cmax = 2, 3 distinct bases
        assert_eq!(c, 2.0 * 9.0 * 4.0 * 2.0 * 3.0);

        let broken = MoveReport {
            valid: false,
            ..blank
        };
        assert!(matches!(
            comparison_constant(&[broken], &footprint, &glt1d()),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            comparison_constant(&[], &footprint, &glt1d()),
            Err(Error::Argument(_))
        ));
    }
}
