//! Sites, finite boxes, occupancy configurations, and finite permutations.
//!
//! Conventions used across the crate:
//! * sites of a finite box carry coordinates `1..=L` per axis, matching the
//!   usual `[L]^d` indexing; relative offsets (rate clauses, cluster shapes)
//!   are plain integer vectors around `0`;
//! * the occupancy bit is `true` for a particle, `false` for a vacancy, and
//!   `q` always denotes the probability that a site is EMPTY;
//! * a permutation acts on configurations by `(sigma eta)(y) = eta(sigma^-1 y)`,
//!   so vacancy positions map forward under `sigma`.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Lattice site or relative offset: an integer vector of the model dimension.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site(pub Vec<i64>);

impl Site {
    pub fn zero(dim: usize) -> Self {
        Site(vec![0; dim])
    }

    /// Unit vector `e_axis` (0-based axis).
    pub fn unit(axis: usize, dim: usize) -> Self {
        let mut v = vec![0; dim];
        v[axis] = 1;
        Site(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn add(&self, other: &Site) -> Site {
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Site) -> Site {
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, k: i64) -> Site {
        Site(self.0.iter().map(|a| a * k).collect())
    }

    /// Max-norm, the natural radius for finite-range checks.
    pub fn norm_inf(&self) -> i64 {
        self.0.iter().map(|a| a.abs()).max().unwrap_or(0)
    }

    pub fn coord(&self, axis: usize) -> i64 {
        self.0[axis]
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Axis direction `+e_alpha` or `-e_alpha` (0-based `axis`).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Direction {
    pub axis: usize,
    pub positive: bool,
}

impl Direction {
    pub fn new(axis: usize, positive: bool) -> Self {
        Direction { axis, positive }
    }

    /// All `2d` directions in the fixed order `+e1, -e1, +e2, -e2, ...`.
    pub fn all(dim: usize) -> Vec<Direction> {
        let mut v = Vec::with_capacity(2 * dim);
        for axis in 0..dim {
            v.push(Direction::new(axis, true));
            v.push(Direction::new(axis, false));
        }
        v
    }

    pub fn reversed(&self) -> Direction {
        Direction::new(self.axis, !self.positive)
    }

    /// The offset vector this direction denotes.
    pub fn versor(&self, dim: usize) -> Site {
        let mut v = Site::unit(self.axis, dim);
        if !self.positive {
            v = v.scale(-1);
        }
        v
    }

    pub fn sign(&self) -> i64 {
        if self.positive {
            1
        } else {
            -1
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}e{}", if self.positive { "+" } else { "-" }, self.axis + 1)
    }
}

/// How reads outside the finite box resolve.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum BoundaryMode {
    /// Exterior sites read as vacant.
    Empty,
    /// Exterior sites read as occupied.
    Occupied,
    /// Coordinates wrap modulo the extent; there is no exterior.
    Periodic,
}

/// Finite box `[1,L_1] x ... x [1,L_d]` with a boundary convention.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Domain {
    extent: Vec<i64>,
    boundary: BoundaryMode,
}

impl Domain {
    pub fn new(extent: Vec<i64>, boundary: BoundaryMode) -> Result<Self> {
        if extent.is_empty() {
            return Err(Error::Argument("domain needs at least one axis".into()));
        }
        if extent.iter().any(|&l| l < 1) {
            return Err(Error::Argument(format!(
                "every axis length must be >= 1, got {extent:?}"
            )));
        }
        let cells: i64 = extent.iter().product();
        if cells > (1 << 40) {
            return Err(Error::Argument(format!("domain of {cells} sites is too large")));
        }
        Ok(Domain { extent, boundary })
    }

    /// 1d chain of length `L`.
    pub fn line(l: i64, boundary: BoundaryMode) -> Result<Self> {
        Domain::new(vec![l], boundary)
    }

    /// Square box `[L]^2`.
    pub fn square(l: i64, boundary: BoundaryMode) -> Result<Self> {
        Domain::new(vec![l, l], boundary)
    }

    pub fn dim(&self) -> usize {
        self.extent.len()
    }

    pub fn extent(&self) -> &[i64] {
        &self.extent
    }

    pub fn boundary(&self) -> BoundaryMode {
        self.boundary
    }

    pub fn volume(&self) -> usize {
        self.extent.iter().product::<i64>() as usize
    }

    /// Row-major flat index for an in-box site; `None` outside.
    pub fn index(&self, site: &Site) -> Option<usize> {
        debug_assert_eq!(site.dim(), self.dim());
        let mut idx: i64 = 0;
        for (axis, &c) in site.0.iter().enumerate() {
            if c < 1 || c > self.extent[axis] {
                return None;
            }
            idx = idx * self.extent[axis] + (c - 1);
        }
        Some(idx as usize)
    }

    /// Inverse of [`Domain::index`].
    pub fn site(&self, mut idx: usize) -> Site {
        let mut coords = vec![0i64; self.dim()];
        for axis in (0..self.dim()).rev() {
            let l = self.extent[axis] as usize;
            coords[axis] = (idx % l) as i64 + 1;
            idx /= l;
        }
        Site(coords)
    }

    /// Canonical in-box representative under periodic wrapping.
    pub fn wrap(&self, site: &Site) -> Site {
        Site(
            site.0
                .iter()
                .zip(&self.extent)
                .map(|(&c, &l)| (c - 1).rem_euclid(l) + 1)
                .collect(),
        )
    }

    /// Resolves an arbitrary site to either an in-box index or an exterior
    /// fill value (`true` = occupied).
    pub fn resolve(&self, site: &Site) -> SiteRef {
        match self.boundary {
            BoundaryMode::Periodic => SiteRef::In(self.index(&self.wrap(site)).unwrap()),
            mode => match self.index(site) {
                Some(i) => SiteRef::In(i),
                None => SiteRef::Exterior(mode == BoundaryMode::Occupied),
            },
        }
    }

    pub fn contains(&self, site: &Site) -> bool {
        self.index(site).is_some()
    }

    /// All sites in row-major order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.volume()).map(|i| self.site(i))
    }

    /// Sites with at least one exterior nearest neighbour. Empty on a torus.
    pub fn boundary_sites(&self) -> Vec<Site> {
        if self.boundary == BoundaryMode::Periodic {
            return Vec::new();
        }
        self.sites()
            .filter(|s| {
                s.0.iter()
                    .zip(&self.extent)
                    .any(|(&c, &l)| c == 1 || c == l)
            })
            .collect()
    }
}

/// Result of resolving a site against a domain.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SiteRef {
    In(usize),
    /// Exterior with the given occupancy.
    Exterior(bool),
}

/// Occupancy configuration on a domain. Occupied = `true`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Configuration {
    domain: Domain,
    occ: Vec<u8>,
}

impl Configuration {
    pub fn all_occupied(domain: Domain) -> Self {
        let n = domain.volume();
        Configuration {
            domain,
            occ: vec![1; n],
        }
    }

    pub fn all_empty(domain: Domain) -> Self {
        let n = domain.volume();
        Configuration {
            domain,
            occ: vec![0; n],
        }
    }

    /// All sites occupied except the listed vacancies (which must be in-box).
    pub fn with_vacancies(domain: Domain, vacancies: &[Site]) -> Result<Self> {
        let mut c = Configuration::all_occupied(domain);
        for v in vacancies {
            let idx = c
                .domain
                .index(v)
                .ok_or_else(|| Error::Argument(format!("vacancy {v:?} outside the domain")))?;
            c.occ[idx] = 0;
        }
        Ok(c)
    }

    pub fn from_bits(domain: Domain, occupied: &[bool]) -> Result<Self> {
        if occupied.len() != domain.volume() {
            return Err(Error::Argument(format!(
                "expected {} occupancy bits, got {}",
                domain.volume(),
                occupied.len()
            )));
        }
        Ok(Configuration {
            domain,
            occ: occupied.iter().map(|&b| b as u8).collect(),
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Occupancy of an arbitrary site, resolving boundary reads.
    pub fn occupied(&self, site: &Site) -> bool {
        match self.domain.resolve(site) {
            SiteRef::In(i) => self.occ[i] != 0,
            SiteRef::Exterior(fill) => fill,
        }
    }

    pub fn occupied_idx(&self, idx: usize) -> bool {
        self.occ[idx] != 0
    }

    pub fn set_idx(&mut self, idx: usize, occupied: bool) {
        self.occ[idx] = occupied as u8;
    }

    pub fn vacancy_count(&self) -> usize {
        self.occ.iter().filter(|&&b| b == 0).count()
    }

    pub fn vacancy_sites(&self) -> Vec<Site> {
        (0..self.occ.len())
            .filter(|&i| self.occ[i] == 0)
            .map(|i| self.domain.site(i))
            .collect()
    }

    /// Swaps the occupancies of two in-box sites (torus sites may wrap).
    pub fn exchange(&self, a: &Site, b: &Site) -> Result<Configuration> {
        let mut c = self.clone();
        c.exchange_in_place(a, b)?;
        Ok(c)
    }

    pub fn exchange_in_place(&mut self, a: &Site, b: &Site) -> Result<()> {
        let ia = self.in_box_index(a)?;
        let ib = self.in_box_index(b)?;
        self.occ.swap(ia, ib);
        Ok(())
    }

    /// Flips one in-box site.
    pub fn flip(&self, site: &Site) -> Result<Configuration> {
        let mut c = self.clone();
        let i = c.in_box_index(site)?;
        c.occ[i] ^= 1;
        Ok(c)
    }

    fn in_box_index(&self, site: &Site) -> Result<usize> {
        match self.domain.resolve(site) {
            SiteRef::In(i) => Ok(i),
            SiteRef::Exterior(_) => Err(Error::Argument(format!(
                "site {site:?} lies outside the domain"
            ))),
        }
    }

    /// Applies a finite permutation: `(sigma eta)(y) = eta(sigma^-1 y)`, i.e.
    /// the content of site `x` moves to `sigma(x)`. The support must lie in
    /// the box (it may wrap on a torus).
    pub fn apply_permutation(&self, sigma: &FinitePermutation) -> Result<Configuration> {
        let mut c = self.clone();
        let mut moved: Vec<(usize, u8)> = Vec::with_capacity(sigma.support_len());
        for (from, to) in sigma.pairs() {
            let src = self.in_box_index(from)?;
            let dst = self.in_box_index(to)?;
            moved.push((dst, self.occ[src]));
        }
        for (dst, bit) in moved {
            c.occ[dst] = bit;
        }
        Ok(c)
    }

    /// Compact bit string, row-major; `1` = occupied.
    pub fn bit_string(&self) -> String {
        self.occ.iter().map(|&b| if b != 0 { '1' } else { '0' }).collect()
    }

    /// Raw occupancy key for hashing/state indexing.
    pub fn occ_bytes(&self) -> &[u8] {
        &self.occ
    }
}

/// Permutation of the lattice with finite support, stored as the explicit map
/// on its non-fixed sites. Always a bijection of the support onto itself.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct FinitePermutation {
    map: BTreeMap<Site, Site>,
}

impl FinitePermutation {
    pub fn identity() -> Self {
        FinitePermutation { map: BTreeMap::new() }
    }

    pub fn transposition(a: Site, b: Site) -> Result<Self> {
        if a == b {
            return Err(Error::Argument("transposition needs two distinct sites".into()));
        }
        if a.dim() != b.dim() {
            return Err(Error::Argument("transposition sites of mixed dimension".into()));
        }
        let mut map = BTreeMap::new();
        map.insert(a.clone(), b.clone());
        map.insert(b, a);
        Ok(FinitePermutation { map })
    }

    /// Cycle `(s_1, ..., s_k)` sending `s_1 -> s_2 -> ... -> s_k -> s_1`.
    pub fn from_cycle(sites: &[Site]) -> Result<Self> {
        let mut map = BTreeMap::new();
        if sites.len() < 2 {
            return Ok(FinitePermutation::identity());
        }
        for i in 0..sites.len() {
            let from = sites[i].clone();
            let to = sites[(i + 1) % sites.len()].clone();
            if map.insert(from, to).is_some() {
                return Err(Error::Argument("cycle repeats a site".into()));
            }
        }
        Ok(FinitePermutation { map }.normalized()?)
    }

    /// Builds from explicit `(from, to)` pairs; must be a bijection of the
    /// mentioned sites onto themselves.
    pub fn from_pairs(pairs: &[(Site, Site)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (from, to) in pairs {
            if map.insert(from.clone(), to.clone()).is_some() {
                return Err(Error::Argument(format!("duplicate source site {from:?}")));
            }
        }
        FinitePermutation { map }.normalized()
    }

    fn normalized(mut self) -> Result<Self> {
        let keys: std::collections::BTreeSet<_> = self.map.keys().cloned().collect();
        let values: std::collections::BTreeSet<_> = self.map.values().cloned().collect();
        if keys != values {
            return Err(Error::Argument(
                "mapping is not a bijection of its support onto itself".into(),
            ));
        }
        self.map.retain(|k, v| k != v);
        Ok(self)
    }

    pub fn is_identity(&self) -> bool {
        self.map.is_empty()
    }

    pub fn support_len(&self) -> usize {
        self.map.len()
    }

    pub fn support(&self) -> impl Iterator<Item = &Site> {
        self.map.keys()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Site, &Site)> {
        self.map.iter()
    }

    pub fn image(&self, site: &Site) -> Site {
        self.map.get(site).cloned().unwrap_or_else(|| site.clone())
    }

    pub fn preimage(&self, site: &Site) -> Site {
        self.map
            .iter()
            .find(|(_, v)| *v == site)
            .map(|(k, _)| k.clone())
            .unwrap_or_else(|| site.clone())
    }

    /// Image of a site set, as a sorted vector.
    pub fn image_set(&self, sites: &[Site]) -> Vec<Site> {
        let mut v: Vec<Site> = sites.iter().map(|s| self.image(s)).collect();
        v.sort();
        v
    }

    pub fn inverse(&self) -> FinitePermutation {
        FinitePermutation {
            map: self.map.iter().map(|(k, v)| (v.clone(), k.clone())).collect(),
        }
    }

    /// Composition `self . other`: apply `other` first.
    pub fn compose(&self, other: &FinitePermutation) -> FinitePermutation {
        let mut map = BTreeMap::new();
        let mut support: std::collections::BTreeSet<Site> = self.map.keys().cloned().collect();
        support.extend(other.map.keys().cloned());
        for s in support {
            let img = self.image(&other.image(&s));
            if img != s {
                map.insert(s, img);
            }
        }
        FinitePermutation { map }
    }

    /// `Some((a, b))` when this is exactly one transposition.
    pub fn as_transposition(&self) -> Option<(Site, Site)> {
        if self.map.len() != 2 {
            return None;
        }
        let mut it = self.map.iter();
        let (a, b) = it.next().unwrap();
        if b != a && self.map.get(b) == Some(a) {
            Some((a.clone(), b.clone()))
        } else {
            None
        }
    }

    /// Disjoint cycles, each rotated to start at its smallest site, sorted.
    pub fn cycles(&self) -> Vec<Vec<Site>> {
        let mut seen = std::collections::BTreeSet::new();
        let mut cycles = Vec::new();
        for start in self.map.keys() {
            if seen.contains(start) {
                continue;
            }
            let mut cycle = vec![start.clone()];
            seen.insert(start.clone());
            let mut cur = self.image(start);
            while &cur != start {
                seen.insert(cur.clone());
                cycle.push(cur.clone());
                cur = self.image(&cur);
            }
            cycles.push(cycle);
        }
        cycles.sort();
        cycles
    }
}

impl fmt::Display for FinitePermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return write!(f, "id");
        }
        for cycle in self.cycles() {
            write!(f, "(")?;
            for (i, s) in cycle.iter().enumerate() {
                if i > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{s:?}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// Product-Bernoulli sample: each site independently empty with probability `q`.
pub fn sample_equilibrium(domain: &Domain, q: f64, rng: &mut Rng) -> Result<Configuration> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Argument(format!("vacancy probability q={q} outside [0,1]")));
    }
    let mut c = Configuration::all_occupied(domain.clone());
    for i in 0..domain.volume() {
        if rng.gen::<f64>() < q {
            c.set_idx(i, false);
        }
    }
    Ok(c)
}

/// Uniform sample over configurations with exactly `k` vacancies.
pub fn sample_fixed_vacancies(domain: &Domain, k: usize, rng: &mut Rng) -> Result<Configuration> {
    let n = domain.volume();
    if k > n {
        return Err(Error::Argument(format!("cannot place {k} vacancies on {n} sites")));
    }
    // Partial Fisher-Yates: the first k entries become a uniform k-subset.
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let mut c = Configuration::all_occupied(domain.clone());
    for &i in &idx[..k] {
        c.set_idx(i, false);
    }
    Ok(c)
}
