//! Tagged-particle moves assembled from a mobility certificate.
//!
//! Everything here is built from translated copies of certified cluster
//! translations and edge exchanges, so each construction inherits its
//! validity from the certificate and only the composition geometry is new.
//! The key trick is the staged exchange: route the cluster somewhere, run
//! one certified exchange there, then unwind the route step by step. The
//! net permutation of such a sandwich is exactly the exchanged pair's
//! transposition, which lets us chain swaps around the tagged site without
//! ever scrambling it.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::lattice::{Direction, FinitePermutation, Site};

use super::search::MobileClusterCertificate;
use super::{permutation_of_steps, Branch, DomainSpec, Guard, MoveProgram, MoveStep};

/// Sites that must be vacant for the tagged particle's service moves: one
/// vacancy directly behind it and a full cluster copy parked in front, far
/// enough out that the ring walk never disturbs it.
pub fn aux_cluster(cert: &MobileClusterCertificate) -> Vec<Site> {
    let dim = cert.dim();
    let home = Site::unit(0, dim).scale(cert.l + 2);
    let mut sites = vec![Site::unit(0, dim).scale(-1)];
    sites.extend(cert.cluster.iter().map(|c| home.add(c)));
    sites
}

/// Checks that every cluster site has all coordinates in `1..=l-1`. The
/// staged routes below park cluster copies next to the exchanged pair and
/// need this margin to clear the pair sites on every leg.
pub fn require_inner_cluster(cluster: &[Site], l: i64, dim: usize) -> Result<()> {
    for s in cluster {
        for a in 0..dim {
            let c = s.coord(a);
            if c < 1 || c > l - 1 {
                return Err(Error::Argument(format!(
                    "cluster site {:?} must have all coordinates in 1..={} so staged routes clear the exchanged pair",
                    s.0,
                    l - 1
                )));
            }
        }
    }
    Ok(())
}

/// Both cluster copies of the auxiliary ground set for `axis`: the cluster
/// and its translate by `l` steps, ordered by strictly decreasing `axis`
/// coordinate (ties broken by descending full coordinates). Prefix shifts
/// of this order move one site at a time without collisions.
pub fn aux_ordered_sites(cluster: &[Site], l: i64, axis: usize, dim: usize) -> Vec<Site> {
    let shift = Site::unit(axis, dim).scale(l);
    let mut sites: Vec<Site> = cluster
        .iter()
        .cloned()
        .chain(cluster.iter().map(|c| c.add(&shift)))
        .collect();
    sites.sort_by(|a, b| (b.coord(axis), &b.0).cmp(&(a.coord(axis), &a.0)));
    sites
}

/// The i-th stage of the ground set: the first `i` sites (in the order of
/// [`aux_ordered_sites`]) already moved one step along the axis.
fn shifted_prefix(ordered: &[Site], i: usize, v: &Site) -> Vec<Site> {
    ordered
        .iter()
        .enumerate()
        .map(|(j, s)| if j < i { s.add(v) } else { s.clone() })
        .collect()
}

/// Permutation that shifts the tagged site and its service pattern by one
/// step: each maximal run of pattern sites along `e` becomes a cycle that
/// pushes its contents forward and wraps the far end back to the start.
pub fn tracer_sigma(pattern: &[Site], e: Direction, dim: usize) -> Result<FinitePermutation> {
    let v = e.versor(dim);
    let mut occupied: BTreeSet<Site> = pattern.iter().cloned().collect();
    occupied.insert(Site::zero(dim));
    let mut sigma = FinitePermutation::identity();
    for s in &occupied {
        if occupied.contains(&s.sub(&v)) {
            continue;
        }
        let mut cycle = vec![s.clone()];
        let mut t = s.add(&v);
        while occupied.contains(&t) {
            cycle.push(t.clone());
            t = t.add(&v);
        }
        cycle.push(t);
        sigma = FinitePermutation::from_cycle(&cycle)?.compose(&sigma);
    }
    Ok(sigma)
}

/// A straight-line walk of cluster anchor positions. `legs` records each
/// translation instance as (base, direction); `at` is the final anchor.
struct Route {
    legs: Vec<(Site, Direction)>,
    at: Site,
}

impl Route {
    fn start(at: Site) -> Route {
        Route {
            legs: Vec::new(),
            at,
        }
    }

    fn go(mut self, e: Direction, n: i64, dim: usize) -> Route {
        let v = e.versor(dim);
        for _ in 0..n {
            self.legs.push((self.at.clone(), e));
            self.at = self.at.add(&v);
        }
        self
    }

    /// Axis-by-axis route to `target` (axis 0 first).
    fn toward(mut self, target: &Site, dim: usize) -> Route {
        for a in 0..dim {
            let delta = target.coord(a) - self.at.coord(a);
            if delta != 0 {
                self = self.go(Direction::new(a, delta > 0), delta.abs(), dim);
            }
        }
        self
    }
}

/// Collects steps from translated certificate move instances.
struct Assembler<'a> {
    cert: &'a MobileClusterCertificate,
    dim: usize,
    steps: Vec<MoveStep>,
}

impl<'a> Assembler<'a> {
    fn new(cert: &'a MobileClusterCertificate) -> Assembler<'a> {
        Assembler {
            cert,
            dim: cert.dim(),
            steps: Vec::new(),
        }
    }

    fn tr(&mut self, base: &Site, e: Direction) -> Result<()> {
        let prog = self.cert.translation_move(base, e);
        self.steps.extend(prog.fixed_steps()?.iter().cloned());
        Ok(())
    }

    fn ex(&mut self, base: &Site, e: Direction) -> Result<()> {
        let prog = self.cert.exchange_move(base, e);
        self.steps.extend(prog.fixed_steps()?.iter().cloned());
        Ok(())
    }

    /// Route the cluster along `route`, run one certified exchange at the
    /// endpoint, then unwind the route. Verifies that the net permutation
    /// is exactly the exchanged pair's transposition; any stray contact
    /// with another site would break that identity.
    fn sandwich(&mut self, route: &Route, ex_dir: Direction) -> Result<(Site, Site)> {
        let m0 = self.steps.len();
        for (base, e) in &route.legs {
            self.tr(base, *e)?;
        }
        let m1 = self.steps.len();
        self.ex(&route.at, ex_dir)?;
        let back: Vec<MoveStep> = self.steps[m0..m1].iter().rev().map(|s| s.inverse()).collect();
        self.steps.extend(back);
        let v = ex_dir.versor(self.dim);
        let pair = (
            route.at.add(&v.scale(self.cert.l)),
            route.at.add(&v.scale(self.cert.l + 1)),
        );
        let got = permutation_of_steps(&self.steps[m0..], self.dim)?;
        let want = FinitePermutation::transposition(pair.0.clone(), pair.1.clone())?;
        if got != want {
            return Err(Error::Construction(format!(
                "staged exchange at {:?} leaks outside its pair {:?}-{:?}: a routed cluster grazes a protected site",
                route.at.0, pair.0 .0, pair.1 .0
            )));
        }
        Ok(pair)
    }
}

/// Site with `first` on axis 0 and `side` on `side_axis`.
fn at(dim: usize, first: i64, side_axis: usize, side: i64) -> Site {
    let mut c = vec![0i64; dim];
    c[0] = first;
    c[side_axis] = side;
    Site(c)
}

fn hop_domain(cert: &MobileClusterCertificate) -> DomainSpec {
    DomainSpec::Pattern(Guard {
        empty: aux_cluster(cert),
        occupied: vec![Site::zero(cert.dim())],
    })
}

/// Wraps `steps` in a deterministic program whose window is their bounding
/// box (plus the domain pattern's sites).
fn bounding_program(
    name: String,
    dim: usize,
    domain: DomainSpec,
    steps: Vec<MoveStep>,
) -> Result<MoveProgram> {
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    {
        let mut grow = |s: &Site| {
            for a in 0..dim {
                lo[a] = lo[a].min(s.coord(a));
                hi[a] = hi[a].max(s.coord(a));
            }
        };
        for st in &steps {
            for s in st.touched(dim) {
                grow(&s);
            }
        }
        for s in domain.sites() {
            grow(&s);
        }
    }
    MoveProgram::deterministic(name, dim, (Site(lo), Site(hi)), Vec::new(), domain, steps)
}

/// Carries the vacancy parked behind the tagged particle once around it:
/// `-e1 -> -e1+e2 -> e2 -> e1+e2 -> e1`, leaving the particle untouched.
/// On the way the parked cluster copy does all the work and returns home.
fn ring_walk_steps(cert: &MobileClusterCertificate, side: usize) -> Result<Vec<MoveStep>> {
    let dim = cert.dim();
    let l = cert.l;
    let home = at(dim, l + 2, side, 0);
    let up1 = Direction::new(0, true);
    let dn1 = Direction::new(0, false);
    let ups = Direction::new(side, true);
    let dns = Direction::new(side, false);
    let mut asm = Assembler::new(cert);

    // (-e1, -e1+es): dive below the pair row, travel behind, pop up.
    let a = Route::start(home.clone())
        .go(dns, l + 1, dim)
        .go(dn1, l + 3, dim)
        .go(ups, 1, dim);
    asm.sandwich(&a, ups)?;

    // (es, -e1+es): one row up, two columns back from home.
    let b = Route::start(home.clone()).go(ups, 1, dim).go(dn1, 2, dim);
    asm.sandwich(&b, dn1)?;

    // (es, e1+es): over the top and down the far side.
    let c = Route::start(home.clone())
        .go(ups, l + 2, dim)
        .go(dn1, 2 * l + 3, dim)
        .go(dns, l + 1, dim)
        .go(up1, 1, dim);
    asm.sandwich(&c, up1)?;

    // (e1, e1+es): dive below, stop just in front, pop up.
    let d = Route::start(home)
        .go(dns, l + 1, dim)
        .go(dn1, l + 1, dim)
        .go(ups, 1, dim);
    asm.sandwich(&d, ups)?;

    Ok(asm.steps)
}

fn ring_cycle(dim: usize, side: usize) -> Vec<Site> {
    let e1 = Site::unit(0, dim);
    let es = Site::unit(side, dim);
    vec![
        e1.clone(),
        e1.add(&es),
        es.clone(),
        es.sub(&e1),
        e1.scale(-1),
    ]
}

/// The vacancy ring walk: with the service pattern vacant and the tagged
/// particle at the origin, the rear vacancy circles the particle through
/// the four adjacent sites of the `e1`-`e2` plane. Its permutation is the
/// five-cycle on the ring, so the particle itself never moves.
pub fn hop_move(cert: &MobileClusterCertificate) -> Result<MoveProgram> {
    let dim = cert.dim();
    if dim < 2 {
        return Err(Error::Argument(
            "the vacancy ring walk needs at least two dimensions".into(),
        ));
    }
    require_inner_cluster(&cert.cluster, cert.l, dim)?;
    let steps = ring_walk_steps(cert, 1)?;
    let sigma = permutation_of_steps(&steps, dim)?;
    if sigma != FinitePermutation::from_cycle(&ring_cycle(dim, 1))? {
        return Err(Error::Construction(
            "ring walk permutation differs from the target five-cycle".into(),
        ));
    }
    bounding_program("hop".into(), dim, hop_domain(cert), steps)
}

/// Drags the tagged particle one step along `+e_axis` together with its
/// service pattern. The permutation sends the origin to `e_axis` and the
/// pattern onto its translate; what it does to the vacated ring sites is
/// unconstrained. Requires at least two dimensions: the constraint models
/// never let a bare pair swap happen in place, so the particle has to be
/// walked around via the transverse plane.
pub fn sigma_move(cert: &MobileClusterCertificate, axis: usize) -> Result<MoveProgram> {
    let dim = cert.dim();
    if dim < 2 {
        return Err(Error::Argument(
            "dragging the tagged particle needs at least two dimensions".into(),
        ));
    }
    if axis >= dim {
        return Err(Error::Argument(format!(
            "axis {axis} out of range for dimension {dim}"
        )));
    }
    require_inner_cluster(&cert.cluster, cert.l, dim)?;
    let l = cert.l;
    let e = Direction::new(axis, true);
    let up1 = Direction::new(0, true);
    let dn1 = Direction::new(0, false);

    let steps = if axis == 0 {
        // Walk the vacancy around to e1, swap the particle into it, then
        // shift the parked cluster forward to its new home.
        let home = at(dim, l + 2, 1, 0);
        let mut asm = Assembler::new(cert);
        asm.steps = ring_walk_steps(cert, 1)?;
        asm.tr(&home, dn1)?;
        asm.ex(&at(dim, l + 1, 1, 0), dn1)?;
        asm.tr(&at(dim, l + 1, 1, 0), up1)?;
        asm.tr(&home, up1)?;
        asm.steps
    } else {
        let s = axis;
        let home = at(dim, l + 2, s, 0);
        let ups = Direction::new(s, true);
        let dns = Direction::new(s, false);
        let mut asm = Assembler::new(cert);
        // Two ring swaps bring the rear vacancy to es via -e1+es.
        let r1 = Route::start(home.clone())
            .go(dns, l + 1, dim)
            .go(dn1, l + 3, dim)
            .go(ups, 1, dim);
        asm.sandwich(&r1, ups)?;
        let r2 = Route::start(home.clone()).go(ups, 1, dim).go(dn1, 2, dim);
        asm.sandwich(&r2, dn1)?;
        // Swap the particle up into es.
        let r3 = Route::start(home.clone())
            .go(dns, l + 1, dim)
            .go(dn1, l + 2, dim)
            .go(ups, 1, dim);
        asm.sandwich(&r3, ups)?;
        // Pull the hole it left behind back to -e1+es, restoring the rear
        // vacancy relative to the particle's new position.
        let r4 = Route::start(home.clone()).go(dn1, 2, dim);
        asm.sandwich(&r4, dn1)?;
        let r5 = Route::start(home.clone())
            .go(dns, l + 1, dim)
            .go(dn1, l + 3, dim)
            .go(ups, 1, dim);
        asm.sandwich(&r5, ups)?;
        // Carry the parked cluster along.
        asm.tr(&home, ups)?;
        asm.steps
    };

    let sigma = permutation_of_steps(&steps, dim)?;
    let v = e.versor(dim);
    let pattern = aux_cluster(cert);
    let mut want: Vec<Site> = pattern.iter().map(|c| c.add(&v)).collect();
    want.sort();
    if sigma.image(&Site::zero(dim)) != v || sigma.image_set(&pattern) != want {
        return Err(Error::Construction(format!(
            "assembled steps do not drag the tagged site and its pattern by {e}"
        )));
    }
    bounding_program(format!("sigma{e}"), dim, hop_domain(cert), steps)
}

/// One branch of the auxiliary edge exchange: the stage-`i` guard plus the
/// staged steps that swap the origin with its `+e_axis` neighbor.
fn aux_branch(
    cert: &MobileClusterCertificate,
    axis: usize,
    i: usize,
) -> Result<(Vec<Site>, Vec<MoveStep>)> {
    let dim = cert.dim();
    if axis >= dim {
        return Err(Error::Argument(format!(
            "axis {axis} out of range for dimension {dim}"
        )));
    }
    require_inner_cluster(&cert.cluster, cert.l, dim)?;
    let l = cert.l;
    let n = 2 * cert.cluster.len();
    if i >= n {
        return Err(Error::Argument(format!(
            "stage {i} out of range, the ground set has {n} sites"
        )));
    }
    let e = Direction::new(axis, true);
    let v = e.versor(dim);
    let ordered = aux_ordered_sites(&cert.cluster, l, axis, dim);
    let stage_sites = shifted_prefix(&ordered, i, &v);
    let pivot = &ordered[i];
    let guard: Vec<Site> = stage_sites.iter().map(|s| s.sub(pivot)).collect();

    // The guard always contains one whole cluster copy: the rear copy when
    // the pivot is still in the leading one, the advanced leading copy
    // otherwise. Route that copy next to the pivot edge and swap.
    let (copy_base, stage, ex_dir) = if i < cert.cluster.len() {
        (pivot.scale(-1), v.scale(-l), e)
    } else {
        (v.scale(l + 1).sub(pivot), v.scale(l + 1), e.reversed())
    };
    for c in &cert.cluster {
        let s = copy_base.add(c);
        if !guard.contains(&s) {
            return Err(Error::Construction(format!(
                "free cluster copy site {:?} escapes the stage-{i} guard",
                s.0
            )));
        }
    }

    let mut asm = Assembler::new(cert);
    let route = Route::start(copy_base).toward(&stage, dim);
    asm.sandwich(&route, ex_dir)?;
    let got = permutation_of_steps(&asm.steps, dim)?;
    if got != FinitePermutation::transposition(Site::zero(dim), v)? {
        return Err(Error::Construction(format!(
            "stage-{i} exchange along {e} is not the bare edge swap"
        )));
    }
    Ok((guard, asm.steps))
}

/// The stage-`i` auxiliary exchange as a standalone move: on configurations
/// where the shifted ground set `A_i - x_{i+1}` is vacant, swaps the origin
/// with its `+e_axis` neighbor and restores everything else.
pub fn aux_exchange_move(
    cert: &MobileClusterCertificate,
    axis: usize,
    i: usize,
) -> Result<MoveProgram> {
    let (guard, steps) = aux_branch(cert, axis, i)?;
    let e = Direction::new(axis, true);
    bounding_program(
        format!("aux{e}.{i}"),
        cert.dim(),
        DomainSpec::Pattern(Guard {
            empty: guard,
            occupied: Vec::new(),
        }),
        steps,
    )
}

/// All stages of the auxiliary exchange along `+e_axis` folded into one
/// guarded move: whichever stage guard matches first performs the swap.
/// Its domain is the union of the stage guards.
pub fn aux_exchange_union(cert: &MobileClusterCertificate, axis: usize) -> Result<MoveProgram> {
    let dim = cert.dim();
    let e = Direction::new(axis, true);
    let n = 2 * cert.cluster.len();
    let mut branches = Vec::with_capacity(n);
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    for i in 0..n {
        let (guard_sites, steps) = aux_branch(cert, axis, i)?;
        {
            let mut grow = |s: &Site| {
                for a in 0..dim {
                    lo[a] = lo[a].min(s.coord(a));
                    hi[a] = hi[a].max(s.coord(a));
                }
            };
            for st in &steps {
                for s in st.touched(dim) {
                    grow(&s);
                }
            }
            for s in &guard_sites {
                grow(s);
            }
        }
        branches.push(Branch {
            guard: Guard {
                empty: guard_sites,
                occupied: Vec::new(),
            },
            steps,
        });
    }
    MoveProgram::guarded(
        format!("aux{e}"),
        dim,
        (Site(lo), Site(hi)),
        Vec::new(),
        DomainSpec::AnyBranch,
        branches,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    use crate::lattice::BoundaryMode;
    use crate::models::{bt1d, bt2d};
    use crate::moves::search::certify;
    use crate::moves::{
        check_final_configurations, check_tracer_steps, validate, MoveContext, ValidationMode,
    };

    fn s(c: &[i64]) -> Site {
        Site(c.to_vec())
    }

    fn cert1() -> &'static MobileClusterCertificate {
        static C: OnceLock<MobileClusterCertificate> = OnceLock::new();
        C.get_or_init(|| {
            certify(&bt1d(), &[s(&[1]), s(&[2])], 3, 1 << 22)
                .unwrap()
                .expect("adjacent pair is mobile for the one-dimensional model")
        })
    }

    fn cert2() -> &'static MobileClusterCertificate {
        static C: OnceLock<MobileClusterCertificate> = OnceLock::new();
        C.get_or_init(|| {
            let square = vec![s(&[1, 1]), s(&[1, 2]), s(&[2, 1]), s(&[2, 2])];
            certify(&bt2d(), &square, 3, 1 << 22)
                .unwrap()
                .expect("the 2x2 square is mobile for the two-dimensional model")
        })
    }

    #[test]
    fn service_pattern_sits_behind_and_in_front() {
        let mut pattern = aux_cluster(cert2());
        pattern.sort();
        let want = vec![s(&[-1, 0]), s(&[6, 1]), s(&[6, 2]), s(&[7, 1]), s(&[7, 2])];
        assert_eq!(pattern, want, "one vacancy behind, the square parked at l+2");
    }

    #[test]
    fn shift_permutation_closes_each_run_into_a_cycle() {
        let pattern = aux_cluster(cert2());
        let sig = tracer_sigma(&pattern, Direction::new(0, true), 2).unwrap();
        assert_eq!(sig.image(&s(&[0, 0])), s(&[1, 0]));
        let mut want: Vec<Site> = pattern.iter().map(|c| c.add(&s(&[1, 0]))).collect();
        want.sort();
        assert_eq!(sig.image_set(&pattern), want);
        assert_eq!(sig.cycles().len(), 3, "three maximal runs along e1");
        assert_eq!(sig.support_len(), 9);
    }

    #[test]
    fn opposite_shift_is_the_conjugated_inverse() {
        let pattern = aux_cluster(cert2());
        for axis in 0..2 {
            let v = Direction::new(axis, true).versor(2);
            let fwd = tracer_sigma(&pattern, Direction::new(axis, true), 2).unwrap();
            let bwd = tracer_sigma(&pattern, Direction::new(axis, false), 2).unwrap();
            let pairs: Vec<(Site, Site)> = fwd
                .inverse()
                .pairs()
                .map(|(a, b)| (a.sub(&v), b.sub(&v)))
                .collect();
            assert_eq!(bwd, FinitePermutation::from_pairs(&pairs).unwrap());
        }
    }

    #[test]
    fn ring_walk_is_the_five_cycle_and_spares_the_particle() {
        let hop = hop_move(cert2()).unwrap();
        let sigma = hop.permutation().unwrap();
        let ring = [
            s(&[1, 0]),
            s(&[1, 1]),
            s(&[0, 1]),
            s(&[-1, 1]),
            s(&[-1, 0]),
        ];
        assert_eq!(sigma, FinitePermutation::from_cycle(&ring).unwrap());

        let ctx = MoveContext::bulk(bt2d(), BoundaryMode::Occupied).unwrap();
        let rep = validate(&hop, &ctx, ValidationMode::WorstCase, 1 << 20).unwrap();
        assert!(rep.valid, "ring walk fails rate checks: {:?}", rep.witness);
        assert_eq!(rep.loss, 0, "deterministic move loses nothing");
        assert_eq!(rep.energy_barrier, 0, "no extra vacancies are ever needed");

        let tc = check_tracer_steps(&hop, &ctx, &s(&[0, 0])).unwrap();
        assert!(tc.ok, "a step displaces the tagged particle: {:?}", tc.witness);
        assert_eq!(tc.end, s(&[0, 0]), "the ring walk must bring it back");
    }

    #[test]
    fn one_dimension_has_no_ring() {
        assert!(hop_move(cert1()).is_err());
        assert!(sigma_move(cert1(), 0).is_err());
    }

    #[test]
    fn drag_moves_shift_particle_and_pattern_together() {
        let ctx = MoveContext::bulk(bt2d(), BoundaryMode::Occupied).unwrap();
        let pattern = aux_cluster(cert2());
        for axis in 0..2 {
            let mv = sigma_move(cert2(), axis).unwrap();
            let v = Direction::new(axis, true).versor(2);
            let sigma = mv.permutation().unwrap();
            assert_eq!(sigma.image(&s(&[0, 0])), v);
            let mut want: Vec<Site> = pattern.iter().map(|c| c.add(&v)).collect();
            want.sort();
            assert_eq!(sigma.image_set(&pattern), want);

            let rep = validate(&mv, &ctx, ValidationMode::WorstCase, 1 << 20).unwrap();
            assert!(rep.valid, "axis {axis} drag fails: {:?}", rep.witness);

            let tc = check_tracer_steps(&mv, &ctx, &s(&[0, 0])).unwrap();
            assert!(tc.ok, "axis {axis} drag mishandles the particle: {:?}", tc.witness);
            assert_eq!(tc.end, v, "the particle must land one step along the axis");
        }
    }

    #[test]
    fn aux_stages_swap_the_edge_exactly() {
        let ctx = MoveContext::bulk(bt1d(), BoundaryMode::Occupied).unwrap();
        let swap = FinitePermutation::transposition(s(&[0]), s(&[1])).unwrap();
        for i in 0..4 {
            let mv = aux_exchange_move(cert1(), 0, i).unwrap();
            assert_eq!(mv.permutation().unwrap(), swap, "stage {i}");
            let rep = validate(&mv, &ctx, ValidationMode::WorstCase, 1 << 20).unwrap();
            assert!(rep.valid, "stage {i} fails: {:?}", rep.witness);
        }
        assert!(aux_exchange_move(cert1(), 0, 4).is_err());
    }

    #[test]
    fn aux_stages_exist_along_both_axes_in_two_dimensions() {
        let ctx = MoveContext::bulk(bt2d(), BoundaryMode::Occupied).unwrap();
        let zero = s(&[0, 0]);
        for axis in 0..2 {
            let v = Direction::new(axis, true).versor(2);
            let swap = FinitePermutation::transposition(zero.clone(), v).unwrap();
            for i in 0..8 {
                let mv = aux_exchange_move(cert2(), axis, i).unwrap();
                assert_eq!(mv.permutation().unwrap(), swap, "axis {axis} stage {i}");
                let rep = validate(&mv, &ctx, ValidationMode::WorstCase, 1 << 20).unwrap();
                assert!(rep.valid, "axis {axis} stage {i} fails: {:?}", rep.witness);
            }
        }
    }

    #[test]
    fn aux_union_swaps_the_edge_on_every_matching_configuration() {
        let ctx = MoveContext::bulk(bt1d(), BoundaryMode::Occupied).unwrap();
        let u = aux_exchange_union(cert1(), 0).unwrap();

        let rep = validate(&u, &ctx, ValidationMode::WorstCase, 1 << 20).unwrap();
        assert!(rep.valid, "union fails worst case: {:?}", rep.witness);
        assert_eq!(rep.loss, 2, "four stages fold into two bits");

        let lo = u.window().0.clone();
        let local = |x: &Site| {
            Site(
                x.0.iter()
                    .zip(&lo.0)
                    .map(|(c, l)| c - l + 1)
                    .collect::<Vec<i64>>(),
            )
        };
        let a = local(&s(&[0]));
        let b = local(&s(&[1]));
        let fc = check_final_configurations(&u, &ctx, 1 << 22, &|start, end| {
            *end == start.exchange(&a, &b).unwrap()
        })
        .unwrap();
        assert!(fc.all_match, "some stage does more than the edge swap: {:?}", fc.witness);
        assert!(fc.checked > 0, "no configuration matched any stage guard");
    }
}
