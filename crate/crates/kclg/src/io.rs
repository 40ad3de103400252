//! File formats: model and move spec files (TOML), certificate bundles
//! (JSON), CSV tables with provenance headers, and the model hash used to
//! stamp outputs.
//!
//! Schemas are versioned by a `schema` string so old files fail loudly
//! instead of silently misparsing. Floats are written in Rust's shortest
//! round-trip form, so save/load reproduces every value bit for bit.
//! Computed move bodies are closures and do not serialize; every move a
//! search emits is branch-based and round-trips.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Direction, FinitePermutation, Site};
use crate::models::{Clause, ConstraintModel, RateMode};
use crate::moves::{
    Branch, CertifiedMove, Guard, MobileClusterCertificate, MoveBody, MoveProgram, MoveReport,
    ValidationMode,
};
use crate::simulate::{TimeSeries, TracerMsd};
use crate::transport::AuxSpec;

pub const MODEL_SCHEMA: &str = "kclg/model-1";
pub const MOVE_SCHEMA: &str = "kclg/move-1";
pub const CERTIFICATE_SCHEMA: &str = "kclg/certificate-1";

fn sites_to_raw(sites: &[Site]) -> Vec<Vec<i64>> {
    sites.iter().map(|s| s.0.clone()).collect()
}

fn sites_from_raw(raw: &[Vec<i64>]) -> Vec<Site> {
    raw.iter().map(|c| Site(c.clone())).collect()
}

// ---------------------------------------------------------------------------
// Model files

#[derive(Serialize, Deserialize)]
struct RawModel {
    schema: String,
    name: String,
    dim: usize,
    rate_mode: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    axes: Vec<RawAxis>,
    /// Ground sets of an auxiliary gradient model, one list of sites per
    /// axis. When present the clause families are derived, not listed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aux: Option<RawAux>,
}

#[derive(Serialize, Deserialize)]
struct RawAxis {
    axis: usize,
    clauses: Vec<RawClause>,
}

#[derive(Serialize, Deserialize)]
struct RawClause {
    offsets: Vec<Vec<i64>>,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct RawAux {
    sets: Vec<Vec<Vec<i64>>>,
}

fn rate_mode_name(mode: RateMode) -> &'static str {
    match mode {
        RateMode::IndicatorAny => "indicator-any",
        RateMode::WeightedCount => "weighted-count",
    }
}

fn rate_mode_from_name(name: &str) -> Result<RateMode> {
    match name {
        "indicator-any" => Ok(RateMode::IndicatorAny),
        "weighted-count" => Ok(RateMode::WeightedCount),
        other => Err(Error::Parse(format!(
            "rate_mode must be \"indicator-any\" or \"weighted-count\", got \"{other}\""
        ))),
    }
}

pub fn model_to_toml(m: &ConstraintModel) -> String {
    let axes = (0..m.dim())
        .map(|axis| RawAxis {
            axis,
            clauses: m
                .clauses(axis)
                .iter()
                .map(|cl| RawClause {
                    offsets: sites_to_raw(&cl.offsets),
                    weight: cl.weight,
                })
                .collect(),
        })
        .collect();
    let raw = RawModel {
        schema: MODEL_SCHEMA.into(),
        name: m.name().into(),
        dim: m.dim(),
        rate_mode: rate_mode_name(m.rate_mode()).into(),
        axes,
        aux: None,
    };
    toml::to_string_pretty(&raw).expect("model schema always serializes")
}

/// Model file for an auxiliary spec: the clause families are rebuilt from
/// the ground sets on load, so the derived structure cannot drift from the
/// sets that define it.
pub fn aux_model_to_toml(spec: &AuxSpec, name: &str) -> String {
    let sets = (0..spec.dim())
        .map(|axis| sites_to_raw(spec.ordered(axis)))
        .collect();
    let raw = RawModel {
        schema: MODEL_SCHEMA.into(),
        name: name.into(),
        dim: spec.dim(),
        rate_mode: rate_mode_name(RateMode::WeightedCount).into(),
        axes: Vec::new(),
        aux: Some(RawAux { sets }),
    };
    toml::to_string_pretty(&raw).expect("model schema always serializes")
}

pub fn model_from_toml(text: &str) -> Result<ConstraintModel> {
    let raw: RawModel = toml::from_str(text).map_err(|e| Error::Parse(format!("model file: {e}")))?;
    if raw.schema != MODEL_SCHEMA {
        return Err(Error::Parse(format!(
            "schema is \"{}\", this build reads \"{MODEL_SCHEMA}\"",
            raw.schema
        )));
    }
    let mode = rate_mode_from_name(&raw.rate_mode)?;
    if let Some(aux) = &raw.aux {
        if !raw.axes.is_empty() {
            return Err(Error::Parse(
                "a model file lists clause axes or an aux block, not both".into(),
            ));
        }
        if mode != RateMode::WeightedCount {
            return Err(Error::Parse(
                "aux models count their staged clauses; rate_mode must be \"weighted-count\""
                    .into(),
            ));
        }
        let sets = aux.sets.iter().map(|s| sites_from_raw(s)).collect();
        let spec = AuxSpec::new(raw.dim, sets)?;
        return crate::transport::build_aux_model(&spec, raw.name);
    }
    let mut per_axis: Vec<Option<Vec<Clause>>> = vec![None; raw.dim];
    for ax in &raw.axes {
        if ax.axis >= raw.dim {
            return Err(Error::Parse(format!(
                "axis {} out of range for a {}d model",
                ax.axis, raw.dim
            )));
        }
        if per_axis[ax.axis].is_some() {
            return Err(Error::Parse(format!("axis {} listed twice", ax.axis)));
        }
        per_axis[ax.axis] = Some(
            ax.clauses
                .iter()
                .map(|cl| Clause::new(sites_from_raw(&cl.offsets), cl.weight))
                .collect(),
        );
    }
    let clauses: Vec<Vec<Clause>> = per_axis
        .into_iter()
        .enumerate()
        .map(|(axis, c)| c.ok_or_else(|| Error::Parse(format!("axis {axis} has no clause list"))))
        .collect::<Result<_>>()?;
    ConstraintModel::new(raw.name, raw.dim, mode, clauses)
}

pub fn save_model(m: &ConstraintModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_toml(m))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ConstraintModel> {
    let text = std::fs::read_to_string(path)?;
    model_from_toml(&text)
}

/// FNV-1a over the canonical model file, as a 16-digit hex stamp. Output
/// provenance headers carry it so results can be traced to the exact model.
pub fn model_hash(m: &ConstraintModel) -> String {
    let text = model_to_toml(m);
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

// ---------------------------------------------------------------------------
// Move files

#[derive(Serialize, Deserialize)]
struct RawMove {
    schema: String,
    name: String,
    dim: usize,
    window_lo: Vec<i64>,
    window_hi: Vec<i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    extras: Vec<Vec<i64>>,
    domain: RawDomain,
    branches: Vec<RawBranch>,
}

#[derive(Serialize, Deserialize)]
struct RawDomain {
    kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    empty: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    occupied: Vec<Vec<i64>>,
}

#[derive(Serialize, Deserialize)]
struct RawBranch {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    guard_empty: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    guard_occupied: Vec<Vec<i64>>,
    steps: Vec<RawStep>,
}

#[derive(Serialize, Deserialize)]
struct RawStep {
    kind: String,
    site: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positive: Option<bool>,
}

fn step_to_raw(step: &crate::moves::MoveStep) -> RawStep {
    match step {
        crate::moves::MoveStep::Exchange { site, dir } => RawStep {
            kind: "exchange".into(),
            site: site.0.clone(),
            axis: Some(dir.axis),
            positive: Some(dir.positive),
        },
        crate::moves::MoveStep::BoundaryFlip { site } => RawStep {
            kind: "flip".into(),
            site: site.0.clone(),
            axis: None,
            positive: None,
        },
    }
}

fn step_from_raw(raw: &RawStep) -> Result<crate::moves::MoveStep> {
    match raw.kind.as_str() {
        "exchange" => {
            let axis = raw
                .axis
                .ok_or_else(|| Error::Parse("exchange step needs an axis".into()))?;
            let positive = raw
                .positive
                .ok_or_else(|| Error::Parse("exchange step needs a sign".into()))?;
            Ok(crate::moves::MoveStep::Exchange {
                site: Site(raw.site.clone()),
                dir: Direction::new(axis, positive),
            })
        }
        "flip" => Ok(crate::moves::MoveStep::BoundaryFlip {
            site: Site(raw.site.clone()),
        }),
        other => Err(Error::Parse(format!(
            "step kind must be \"exchange\" or \"flip\", got \"{other}\""
        ))),
    }
}

fn domain_to_raw(domain: &crate::moves::DomainSpec) -> RawDomain {
    match domain {
        crate::moves::DomainSpec::All => RawDomain {
            kind: "all".into(),
            empty: Vec::new(),
            occupied: Vec::new(),
        },
        crate::moves::DomainSpec::Pattern(g) => RawDomain {
            kind: "pattern".into(),
            empty: sites_to_raw(&g.empty),
            occupied: sites_to_raw(&g.occupied),
        },
        crate::moves::DomainSpec::AnyBranch => RawDomain {
            kind: "any-branch".into(),
            empty: Vec::new(),
            occupied: Vec::new(),
        },
    }
}

fn domain_from_raw(raw: &RawDomain) -> Result<crate::moves::DomainSpec> {
    match raw.kind.as_str() {
        "all" => Ok(crate::moves::DomainSpec::All),
        "pattern" => Ok(crate::moves::DomainSpec::Pattern(Guard {
            empty: sites_from_raw(&raw.empty),
            occupied: sites_from_raw(&raw.occupied),
        })),
        "any-branch" => Ok(crate::moves::DomainSpec::AnyBranch),
        other => Err(Error::Parse(format!(
            "domain kind must be \"all\", \"pattern\" or \"any-branch\", got \"{other}\""
        ))),
    }
}

fn move_to_raw(p: &MoveProgram) -> Result<RawMove> {
    let branches = match &p.body {
        MoveBody::Branches(branches) => branches
            .iter()
            .map(|b| RawBranch {
                guard_empty: sites_to_raw(&b.guard.empty),
                guard_occupied: sites_to_raw(&b.guard.occupied),
                steps: b.steps.iter().map(step_to_raw).collect(),
            })
            .collect(),
        MoveBody::Computed { .. } => {
            return Err(Error::Argument(format!(
                "move \"{}\" has a computed body; only branch moves serialize",
                p.name
            )))
        }
    };
    let (lo, hi) = p.window();
    Ok(RawMove {
        schema: MOVE_SCHEMA.into(),
        name: p.name.clone(),
        dim: p.dim(),
        window_lo: lo.0.clone(),
        window_hi: hi.0.clone(),
        extras: sites_to_raw(p.extras()),
        domain: domain_to_raw(&p.domain),
        branches,
    })
}

fn move_from_raw(raw: &RawMove) -> Result<MoveProgram> {
    if raw.schema != MOVE_SCHEMA {
        return Err(Error::Parse(format!(
            "schema is \"{}\", this build reads \"{MOVE_SCHEMA}\"",
            raw.schema
        )));
    }
    let branches = raw
        .branches
        .iter()
        .map(|b| {
            Ok(Branch {
                guard: Guard {
                    empty: sites_from_raw(&b.guard_empty),
                    occupied: sites_from_raw(&b.guard_occupied),
                },
                steps: b.steps.iter().map(step_from_raw).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MoveProgram::guarded(
        raw.name.clone(),
        raw.dim,
        (Site(raw.window_lo.clone()), Site(raw.window_hi.clone())),
        sites_from_raw(&raw.extras),
        domain_from_raw(&raw.domain)?,
        branches,
    )
}

pub fn move_to_toml(p: &MoveProgram) -> Result<String> {
    Ok(toml::to_string_pretty(&move_to_raw(p)?).expect("move schema always serializes"))
}

pub fn move_from_toml(text: &str) -> Result<MoveProgram> {
    let raw: RawMove = toml::from_str(text).map_err(|e| Error::Parse(format!("move file: {e}")))?;
    move_from_raw(&raw)
}

pub fn save_move(p: &MoveProgram, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, move_to_toml(p)?)?;
    Ok(())
}

pub fn load_move(path: impl AsRef<Path>) -> Result<MoveProgram> {
    let text = std::fs::read_to_string(path)?;
    move_from_toml(&text)
}

// ---------------------------------------------------------------------------
// Certificate bundles

#[derive(Serialize, Deserialize)]
struct RawCertificate {
    schema: String,
    model: String,
    cluster: Vec<Vec<i64>>,
    l: i64,
    translations: Vec<RawCertified>,
    exchanges: Vec<RawCertified>,
}

#[derive(Serialize, Deserialize)]
struct RawCertified {
    axis: usize,
    positive: bool,
    pointwise: bool,
    report: RawReport,
    program: RawMove,
}

#[derive(Serialize, Deserialize)]
struct RawReport {
    valid: bool,
    steps: usize,
    loss: u32,
    loss_is_bound: bool,
    energy_barrier: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    permutation: Option<Vec<(Vec<i64>, Vec<i64>)>>,
    max_touches: usize,
    checked: u64,
    mode: String,
}

fn mode_name(mode: ValidationMode) -> &'static str {
    match mode {
        ValidationMode::Exhaustive => "exhaustive",
        ValidationMode::WorstCase => "worst-case",
    }
}

fn mode_from_name(name: &str) -> Result<ValidationMode> {
    match name {
        "exhaustive" => Ok(ValidationMode::Exhaustive),
        "worst-case" => Ok(ValidationMode::WorstCase),
        other => Err(Error::Parse(format!(
            "mode must be \"exhaustive\" or \"worst-case\", got \"{other}\""
        ))),
    }
}

fn permutation_pairs(p: &FinitePermutation) -> Vec<(Vec<i64>, Vec<i64>)> {
    p.pairs().map(|(k, v)| (k.0.clone(), v.0.clone())).collect()
}

fn report_to_raw(r: &MoveReport) -> RawReport {
    RawReport {
        valid: r.valid,
        steps: r.steps,
        loss: r.loss,
        loss_is_bound: r.loss_is_bound,
        energy_barrier: r.energy_barrier,
        permutation: r.permutation.as_ref().map(permutation_pairs),
        max_touches: r.max_touches,
        checked: r.checked,
        mode: mode_name(r.mode).into(),
    }
}

fn report_from_raw(raw: &RawReport) -> Result<MoveReport> {
    let permutation = match &raw.permutation {
        None => None,
        Some(pairs) => {
            let pairs: Vec<(Site, Site)> = pairs
                .iter()
                .map(|(k, v)| (Site(k.clone()), Site(v.clone())))
                .collect();
            Some(FinitePermutation::from_pairs(&pairs)?)
        }
    };
    Ok(MoveReport {
        valid: raw.valid,
        steps: raw.steps,
        loss: raw.loss,
        loss_is_bound: raw.loss_is_bound,
        energy_barrier: raw.energy_barrier,
        permutation,
        max_touches: raw.max_touches,
        checked: raw.checked,
        mode: mode_from_name(&raw.mode)?,
        witness: None,
    })
}

fn certified_to_raw(c: &CertifiedMove) -> Result<RawCertified> {
    Ok(RawCertified {
        axis: c.direction.axis,
        positive: c.direction.positive,
        pointwise: c.pointwise,
        report: report_to_raw(&c.report),
        program: move_to_raw(&c.program)?,
    })
}

fn certified_from_raw(raw: &RawCertified) -> Result<CertifiedMove> {
    let report = report_from_raw(&raw.report)?;
    if !report.valid {
        return Err(Error::Parse(
            "certificate bundle contains an invalid move report".into(),
        ));
    }
    Ok(CertifiedMove {
        direction: Direction::new(raw.axis, raw.positive),
        program: move_from_raw(&raw.program)?,
        report,
        pointwise: raw.pointwise,
    })
}

pub fn certificate_to_json(cert: &MobileClusterCertificate) -> Result<String> {
    let raw = RawCertificate {
        schema: CERTIFICATE_SCHEMA.into(),
        model: cert.model_name.clone(),
        cluster: sites_to_raw(&cert.cluster),
        l: cert.l,
        translations: cert
            .translations
            .iter()
            .map(certified_to_raw)
            .collect::<Result<_>>()?,
        exchanges: cert
            .exchanges
            .iter()
            .map(certified_to_raw)
            .collect::<Result<_>>()?,
    };
    Ok(serde_json::to_string_pretty(&raw).expect("certificate schema always serializes"))
}

pub fn certificate_from_json(text: &str) -> Result<MobileClusterCertificate> {
    let raw: RawCertificate =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("certificate file: {e}")))?;
    if raw.schema != CERTIFICATE_SCHEMA {
        return Err(Error::Parse(format!(
            "schema is \"{}\", this build reads \"{CERTIFICATE_SCHEMA}\"",
            raw.schema
        )));
    }
    Ok(MobileClusterCertificate {
        model_name: raw.model,
        cluster: sites_from_raw(&raw.cluster),
        l: raw.l,
        translations: raw
            .translations
            .iter()
            .map(certified_from_raw)
            .collect::<Result<_>>()?,
        exchanges: raw
            .exchanges
            .iter()
            .map(certified_from_raw)
            .collect::<Result<_>>()?,
    })
}

pub fn save_certificate(cert: &MobileClusterCertificate, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, certificate_to_json(cert)?)?;
    Ok(())
}

pub fn load_certificate(path: impl AsRef<Path>) -> Result<MobileClusterCertificate> {
    let text = std::fs::read_to_string(path)?;
    certificate_from_json(&text)
}

/// Validation report as a JSON value, for the command-line surface. The
/// permutation appears as a sorted pair list, a witness as its rendered
/// form.
pub fn move_report_json(r: &MoveReport) -> serde_json::Value {
    serde_json::json!({
        "valid": r.valid,
        "steps": r.steps,
        "loss": r.loss,
        "loss_is_bound": r.loss_is_bound,
        "energy_barrier": r.energy_barrier,
        "permutation": r.permutation.as_ref().map(permutation_pairs),
        "max_touches": r.max_touches,
        "checked": r.checked,
        "mode": mode_name(r.mode),
        "witness": r.witness.as_ref().map(|w| format!("{w:?}")),
    })
}

// ---------------------------------------------------------------------------
// CSV tables

/// Shortest decimal form that parses back to the same bits.
pub fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 && x.is_finite() {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

/// CSV with `#`-prefixed provenance lines before the column header. Every
/// cell is written as given; commas in cells are the caller's bug.
pub fn csv_table(
    provenance: &[(&str, String)],
    columns: &[&str],
    rows: &[Vec<String>],
) -> String {
    let mut out = String::new();
    for (key, value) in provenance {
        out.push_str(&format!("# {key} = {value}\n"));
    }
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len(), "ragged CSV row");
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Time-series table: one time column, one column per observable. All series
/// must share their sample times (they do when they come from one run).
pub fn time_series_csv(series: &[TimeSeries], extra: &[(&str, String)]) -> Result<String> {
    let first = series
        .first()
        .ok_or_else(|| Error::Argument("no series to write".into()))?;
    for s in series {
        if s.times != first.times {
            return Err(Error::Argument(
                "series with different sample times cannot share a table".into(),
            ));
        }
    }
    let mut provenance = vec![
        ("schema", "kclg/timeseries-1".to_string()),
        ("provenance", first.provenance.clone()),
        ("seed", first.seed.to_string()),
        ("truncated", first.truncated.to_string()),
        ("samples", first.times.len().to_string()),
    ];
    provenance.extend(extra.iter().map(|(k, v)| (*k, v.clone())));
    let mut columns = vec!["time".to_string()];
    columns.extend(series.iter().map(|s| s.observable.clone()));
    let column_refs: Vec<&str> = columns.iter().map(|c| c.as_str()).collect();
    let rows: Vec<Vec<String>> = first
        .times
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut row = vec![fmt_num(*t)];
            row.extend(series.iter().map(|s| fmt_num(s.values[i])));
            row
        })
        .collect();
    Ok(csv_table(&provenance, &column_refs, &rows))
}

/// Replica-averaged tracer displacement table. `extra` rides along in the
/// provenance header after the run's own fields.
pub fn tracer_msd_csv(msd: &TracerMsd, extra: &[(&str, String)]) -> String {
    let mut provenance = vec![
        ("schema", "kclg/tracer-msd-1".to_string()),
        ("dynamics", msd.dynamics.clone()),
        ("q", fmt_num(msd.q)),
        ("replicas", msd.replicas.to_string()),
        ("seed", msd.seed.to_string()),
    ];
    provenance.extend(extra.iter().map(|(k, v)| (*k, v.clone())));
    let rows: Vec<Vec<String>> = msd
        .times
        .iter()
        .enumerate()
        .map(|(i, t)| {
            vec![
                fmt_num(*t),
                fmt_num(msd.msd_u[i]),
                fmt_num(msd.msd_u_se[i]),
                fmt_num(msd.msd_norm[i]),
                fmt_num(msd.msd_norm_se[i]),
            ]
        })
        .collect();
    csv_table(
        &provenance,
        &["time", "msd_u", "msd_u_se", "msd_norm", "msd_norm_se"],
        &rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{bt1d, bt2d, glt1d};
    use crate::transport::{bt1d_aux, bt2d_aux};

    fn s(coords: &[i64]) -> Site {
        Site(coords.to_vec())
    }

    #[test]
    fn model_files_round_trip_bit_exactly() {
        for m in [bt1d(), bt2d(), glt1d(), bt1d_aux(), bt2d_aux()] {
            let text = model_to_toml(&m);
            let back = model_from_toml(&text).expect("saved model parses");
            assert_eq!(back, m, "{} round-trip", m.name());
            assert_eq!(model_to_toml(&back), text, "{} reserialization", m.name());
        }
    }

    #[test]
    fn aux_ground_sets_rebuild_the_derived_model() {
        let cluster = [s(&[1]), s(&[2])];
        let spec = AuxSpec::from_cluster(&cluster, 3).unwrap();
        let text = aux_model_to_toml(&spec, "bt1d-aux");
        let m = model_from_toml(&text).unwrap();
        assert_eq!(m, bt1d_aux(), "ground sets must rebuild the same clauses");
    }

    #[test]
    fn malformed_model_files_fail_with_a_named_field() {
        let good = model_to_toml(&bt1d());
        let bad_schema = good.replace("kclg/model-1", "kclg/model-9");
        assert!(matches!(
            model_from_toml(&bad_schema),
            Err(Error::Parse(_))
        ));
        let bad_mode = good.replace("indicator-any", "indicator-most");
        let err = model_from_toml(&bad_mode).unwrap_err();
        assert!(err.to_string().contains("indicator-most"), "{err}");
        let truncated = &good[..good.len() / 2];
        assert!(matches!(model_from_toml(truncated), Err(Error::Parse(_))));
    }

    #[test]
    fn model_hash_is_stable_and_distinguishes_models() {
        let h1 = model_hash(&bt1d());
        let h2 = model_hash(&bt1d());
        assert_eq!(h1, h2);
        assert_eq!(h1.len(), 16);
        assert!(h1.chars().all(|c| c.is_ascii_hexdigit()));
        assert_ne!(h1, model_hash(&bt2d()));
        assert_ne!(h1, model_hash(&bt1d_aux()));
    }

    #[test]
    fn move_files_round_trip_bit_exactly() {
        // A searched translation move exercises guards and multi-branch
        // bodies; a hand-built deterministic move covers the plain case.
        let cert = crate::moves::certify(&bt1d(), &[s(&[1]), s(&[2])], 3, 1 << 22)
            .expect("search runs")
            .expect("paired vacancies are mobile");
        for cm in cert.translations.iter().chain(cert.exchanges.iter()) {
            let text = move_to_toml(&cm.program).expect("branch moves serialize");
            let back = move_from_toml(&text).expect("saved move parses");
            assert_eq!(
                move_to_toml(&back).unwrap(),
                text,
                "{} reserialization",
                cm.program.name
            );
            let ctx = crate::moves::MoveContext::bulk(
                bt1d(),
                crate::lattice::BoundaryMode::Occupied,
            )
            .unwrap();
            let report =
                crate::moves::validate(&back, &ctx, ValidationMode::WorstCase, 1 << 22)
                    .expect("revalidation runs");
            assert_eq!(report.valid, cm.report.valid);
            assert_eq!(report.permutation, cm.report.permutation);
        }
    }

    #[test]
    fn computed_bodies_refuse_to_serialize() {
        let cert = crate::moves::certify(&bt1d(), &[s(&[1]), s(&[2])], 3, 1 << 22)
            .expect("search runs")
            .expect("paired vacancies are mobile");
        let p = crate::moves::flip_move(&bt1d(), &cert, &s(&[2]), 8).expect("flip move builds");
        assert!(matches!(move_to_toml(&p), Err(Error::Argument(_))));
    }

    #[test]
    fn certificate_bundles_round_trip() {
        let cert = crate::moves::certify(&bt1d(), &[s(&[1]), s(&[2])], 3, 1 << 22)
            .expect("search runs")
            .expect("paired vacancies are mobile");
        let text = certificate_to_json(&cert).unwrap();
        let back = certificate_from_json(&text).unwrap();
        assert_eq!(back.model_name, cert.model_name);
        assert_eq!(back.cluster, cert.cluster);
        assert_eq!(back.l, cert.l);
        assert_eq!(back.translations.len(), cert.translations.len());
        assert_eq!(
            back.translations[0].report.permutation,
            cert.translations[0].report.permutation
        );
        assert_eq!(certificate_to_json(&back).unwrap(), text);
    }

    #[test]
    fn time_series_csv_has_provenance_and_aligned_rows() {
        let ts1 = TimeSeries::new("a", vec![1.0, 2.0], vec![0.5, 0.25], 7, "model=x").unwrap();
        let ts2 = TimeSeries::new("b", vec![1.0, 2.0], vec![1.0, 0.125], 7, "model=x").unwrap();
        let csv = time_series_csv(&[ts1.clone(), ts2], &[("model_hash", "abc".into())]).unwrap();
        assert!(csv.starts_with("# schema = kclg/timeseries-1\n"));
        assert!(csv.contains("# model_hash = abc\n"));
        assert!(csv.contains("time,a,b\n"));
        assert!(csv.contains("1.0,0.5,1.0\n"));
        assert!(csv.contains("2.0,0.25,0.125\n"));
        let ts3 = TimeSeries::new("c", vec![3.0], vec![0.0], 7, "model=x").unwrap();
        assert!(time_series_csv(&[ts1, ts3], &[]).is_err(), "misaligned times");
    }

    #[test]
    fn numbers_round_trip_through_their_csv_form() {
        for x in [0.1 + 0.2, 1.0 / 3.0, 6.02e23, -0.0, 5.0, f64::MIN_POSITIVE] {
            let text = fmt_num(x);
            let back: f64 = text.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {text}");
        }
    }
}
