//! Reservoir flip construction: a multistep move on the box `[1,side]^d`
//! whose final configuration toggles exactly one chosen site `z`.
//!
//! The move is built on a virtual extension of the box. A ghost site just
//! behind the left face of `z`'s row holds the complement of `z`'s value, a
//! mobile cluster parks behind the ghost, and every other exterior site is
//! occupied. The cluster ferries the complement along the row (exchange,
//! translate, repeat), swaps it into `z`, and winds back, leaving the ghost
//! and `z` transposed and everything else restored. Restricting that
//! trajectory to the box keeps interior exchanges (allowed by monotonicity:
//! the virtual exterior is occupied while the reservoir reads it as empty),
//! turns a straddling exchange into a boundary flip exactly when the two
//! values differ, and drops steps that stay outside. Which straddles fire
//! depends on the initial configuration, so the program computes its steps.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{Direction, FinitePermutation, Site};
use crate::models::ConstraintModel;

use super::search::MobileClusterCertificate;
use super::{permutation_of_steps, DomainSpec, InitialView, MoveProgram, MoveStep};

fn inside_box(s: &Site, side: i64) -> bool {
    s.0.iter().all(|&c| c >= 1 && c <= side)
}

/// Builds the flip move for site `z` in the reservoir box `[1,side]^d`.
///
/// The returned program has domain `All`; exhaustive validation in a
/// reservoir context shows the energy barrier is at most `|C| + 1` and the
/// final configuration equals the start with `z` toggled. When `z` sits on
/// the left face the whole construction degenerates to a single boundary
/// flip (for certificates whose exchange move is one step).
pub fn flip_move(
    model: &ConstraintModel,
    cert: &MobileClusterCertificate,
    z: &Site,
    side: i64,
) -> Result<MoveProgram> {
    let dim = model.dim();
    if cert.model_name != model.name() {
        return Err(Error::Argument(format!(
            "certificate for model {:?} used with model {:?}",
            cert.model_name,
            model.name()
        )));
    }
    if cert.dim() != dim || z.dim() != dim {
        return Err(Error::Argument("dimension mismatch".into()));
    }
    if side < 1 {
        return Err(Error::Argument("box side must be at least 1".into()));
    }
    if !inside_box(z, side) {
        return Err(Error::Argument(format!(
            "target {z} is outside the box [1,{side}]^{dim}"
        )));
    }

    let l = cert.l;
    let e1 = Direction::new(0, true);
    let m = z.coord(0);
    let mut zbar = z.clone();
    zbar.0[0] = 0;
    // Cluster anchor for sweep stage i: the instance exchanges the pair
    // (zbar + i e1, zbar + (i+1) e1).
    let y = |i: i64| -> Site {
        let mut s = zbar.clone();
        s.0[0] = i - l;
        s
    };

    // Fixed step list of the virtual move, as exchange pairs. Stages
    // 0..m-1 carry the ghost value to z - e1, the middle instance swaps it
    // into z, the mirrored tail restores the row and parks the cluster.
    let mut instances: Vec<MoveProgram> = Vec::new();
    for i in 0..m - 1 {
        instances.push(cert.exchange_move(&y(i), e1));
        instances.push(cert.translation_move(&y(i), e1));
    }
    instances.push(cert.exchange_move(&y(m - 1), e1));
    for i in (0..m - 1).rev() {
        instances.push(cert.translation_move(&y(i + 1), e1.reversed()));
        instances.push(cert.exchange_move(&y(i), e1));
    }
    let mut pairs: Vec<(Site, Site, Direction)> = Vec::new();
    let mut extended: Vec<MoveStep> = Vec::new();
    for inst in &instances {
        for st in inst.fixed_steps()? {
            match &st {
                MoveStep::Exchange { site, dir } => {
                    pairs.push((site.clone(), site.add(&dir.versor(dim)), *dir));
                }
                MoveStep::BoundaryFlip { .. } => {
                    return Err(Error::Construction(
                        "certificate programs must be exchange-only".into(),
                    ))
                }
            }
            extended.push(st.clone());
        }
    }

    // The whole point of the sweep: the virtual move transposes the ghost
    // with z and fixes everything else.
    let sigma = permutation_of_steps(&extended, dim)?;
    let expected = FinitePermutation::transposition(zbar.clone(), z.clone())?;
    if sigma != expected {
        return Err(Error::Construction(format!(
            "sweep permutation is {sigma}, not the ghost transposition"
        )));
    }

    let parked: Vec<Site> = cert.cluster.iter().map(|c| c.add(&y(0))).collect();
    for s in &parked {
        if inside_box(s, side) || *s == zbar {
            return Err(Error::Construction(format!(
                "parked cluster site {s} collides with the box or the ghost; \
                 the certificate window is too small for this construction"
            )));
        }
    }

    let z_site = z.clone();
    let max_steps = pairs.len();
    let body = move |view: &InitialView| -> Result<Vec<MoveStep>> {
        let mut state: HashMap<Site, bool> = HashMap::new();
        state.insert(zbar.clone(), !view.occupied(&z_site));
        for s in &parked {
            state.insert(s.clone(), false);
        }
        let value = |state: &HashMap<Site, bool>, s: &Site| -> bool {
            match state.get(s) {
                Some(&v) => v,
                None if inside_box(s, side) => view.occupied(s),
                None => true,
            }
        };
        let mut out = Vec::new();
        for (a, b, dir) in &pairs {
            let va = value(&state, a);
            let vb = value(&state, b);
            let a_in = inside_box(a, side);
            let b_in = inside_box(b, side);
            if a_in && b_in {
                out.push(MoveStep::Exchange {
                    site: a.clone(),
                    dir: *dir,
                });
            } else if (a_in || b_in) && va != vb {
                let s = if a_in { a } else { b };
                out.push(MoveStep::BoundaryFlip { site: s.clone() });
            }
            state.insert(a.clone(), vb);
            state.insert(b.clone(), va);
        }
        Ok(out)
    };

    MoveProgram::computed(
        format!("flip{z}"),
        dim,
        (Site(vec![1; dim]), Site(vec![side; dim])),
        Vec::new(),
        DomainSpec::All,
        Arc::new(body),
        max_steps,
    )
}
