//! kclg: command-line surface over the lattice-gas toolkit.
//!
//! Every subcommand parses its inputs, calls the library, and emits a CSV
//! table or JSON report whose provenance header echoes the full experiment
//! configuration (command, parameters, seeds, model hash), so any output can
//! be re-run bit-identically. Exit codes: 0 success, 2 invalid input or a
//! failed validation, 3 exceeded budget.

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use kclg::error::{Error, Result};
use kclg::io;
use kclg::lattice::{BoundaryMode, Configuration, Domain, Site};
use kclg::models::{bt1d, bt2d, glt1d, verify_axioms, ConstraintModel};
use kclg::moves::{certify, validate, MobileClusterCertificate, MoveContext, ValidationMode};
use kclg::selfdiff::{aux_tracer_dynamics, kc_tracer_dynamics, PermutationDynamics};
use kclg::simulate::{run as kmc_run, tracer_run, Observable, SimState};
use kclg::spectral::{
    build_closed_generator, build_reservoir_generator, build_torus_generator, relaxation_time,
    RateMatrix,
};
use kclg::transport::{
    assemble_diffusion_qp, aux_diffusion_closed_form, bt1d_aux, bt2d_aux, solve_qp, total_current,
    Estimator,
};

fn default_budget() -> u64 {
    std::env::var("KCLG_BUDGET")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1 << 22)
}

#[derive(Parser)]
#[command(
    name = "kclg",
    version,
    about = "Kinetically constrained lattice gases: models, moves, spectra, transport, simulation"
)]
struct Cli {
    /// Cap on worker threads. Jobs in this build execute sequentially and
    /// deterministically, so results never depend on the cap.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the artifact here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the six model axioms; nonzero exit if any fails.
    VerifyModel {
        /// Built-in name (bt1d, bt2d, glt1d, bt1d-aux, bt2d-aux) or a model
        /// file path.
        model: String,
        #[arg(long, default_value_t = default_budget())]
        budget: u64,
    },
    /// Validate a move file against a model; report as JSON.
    VerifyMove {
        model: String,
        /// Move spec file.
        r#move: PathBuf,
        /// Enumerate the whole move domain.
        #[arg(long, conflicts_with = "worst_case")]
        exhaustive: bool,
        /// Check only the extremal fills (sound for monotone models).
        #[arg(long)]
        worst_case: bool,
        /// Exterior fill for reads outside the move frame.
        #[arg(long, value_enum, default_value_t = Exterior::Occupied)]
        exterior: Exterior,
        #[arg(long, default_value_t = default_budget())]
        budget: u64,
    },
    /// Search translation and exchange moves for a vacancy cluster; emit a
    /// certificate bundle.
    Certify {
        model: String,
        /// Cluster offsets, e.g. "1,2" or "(1,1),(1,2),(2,1),(2,2)".
        #[arg(long)]
        cluster: String,
        /// Translation frame length.
        #[arg(long)]
        l: i64,
        #[arg(long, default_value_t = default_budget())]
        budget: u64,
    },
    /// Exact relaxation times with per-component diagnostics.
    Gap {
        model: String,
        #[arg(long, value_enum)]
        setting: Setting,
        #[arg(long = "L")]
        l: i64,
        /// Vacancy probability (reservoir setting).
        #[arg(long)]
        q: Option<f64>,
        /// Vacancy count (closed setting).
        #[arg(long)]
        k: Option<usize>,
        /// Exterior fill in the closed setting.
        #[arg(long, value_enum, default_value_t = Exterior::Occupied)]
        boundary: Exterior,
        /// Also dump the generator in coordinate triplet form to this path.
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
        #[arg(long, default_value_t = default_budget())]
        budget: u64,
    },
    /// Partition a vacancy sector into dynamic components and compare with
    /// the static empty-cluster description.
    Ergodic {
        model: String,
        #[arg(long = "L")]
        l: i64,
        #[arg(long)]
        k: usize,
        /// Clusters as semicolon-separated site lists,
        /// e.g. "1,2;(1,1),(2,1)".
        #[arg(long)]
        clusters: String,
        #[arg(long, default_value_t = default_budget())]
        budget: u64,
    },
    /// Windowed variational diffusion coefficient.
    Diffusion {
        model: String,
        #[arg(long)]
        q: f64,
        /// Direction components, e.g. "1" or "0.6,0.8".
        #[arg(long)]
        u: String,
        /// Window sites, e.g. "1,-1,2"; empty string for the empty window.
        #[arg(long, default_value = "")]
        window: String,
        /// exact, or mc:SAMPLES:SEED.
        #[arg(long, default_value = "exact")]
        estimator: String,
        #[arg(long, default_value_t = default_budget())]
        budget: u64,
    },
    /// Auxiliary dynamics checks.
    #[command(subcommand)]
    Aux(AuxCommand),
    /// Tagged-particle self-diffusion.
    #[command(subcommand)]
    Selfdiff(SelfdiffCommand),
    /// Kinetic Monte Carlo time series.
    Simulate {
        model: String,
        #[arg(long = "L")]
        l: i64,
        #[arg(long, value_enum, default_value_t = Setting::Torus)]
        setting: Setting,
        /// Vacancy probability of the reservoirs (reservoir setting only).
        #[arg(long)]
        q: Option<f64>,
        /// Initial vacancies as a site list; default none (all occupied).
        #[arg(long, default_value = "")]
        vacancies: String,
        /// Draw the initial configuration from the product measure with
        /// this vacancy probability instead of listing vacancies.
        #[arg(long, conflicts_with = "vacancies")]
        init_q: Option<f64>,
        /// Sample times, e.g. "0.5,1,2"; or use --t-max with --points.
        #[arg(long, default_value = "")]
        schedule: String,
        #[arg(long, conflicts_with = "schedule")]
        t_max: Option<f64>,
        #[arg(long, default_value_t = 50)]
        points: usize,
        /// Comma-separated: mean-occupancy, vacancy-count, occ:SITE.
        #[arg(long, default_value = "mean-occupancy,vacancy-count")]
        observables: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1 << 24)]
        max_steps: u64,
    },
}

#[derive(Subcommand)]
enum AuxCommand {
    /// Sample configurations and report the largest net current component.
    Current {
        /// Aux model: built-in name or model file with ground sets.
        auxspec: String,
        #[arg(long = "L")]
        l: i64,
        #[arg(long, default_value_t = 0.5)]
        q: f64,
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Closed-form diffusion coefficient against the windowed variational
    /// value.
    Dcoef {
        auxspec: String,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        u: String,
        #[arg(long, default_value = "")]
        window: String,
        #[arg(long, default_value_t = default_budget())]
        budget: u64,
    },
}

#[derive(Subcommand)]
enum SelfdiffCommand {
    /// Assemble and solve the tagged-particle variational problem.
    Qp {
        model: String,
        #[arg(long, value_enum, default_value_t = DynamicsKind::Kc)]
        dynamics: DynamicsKind,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        u: String,
        #[arg(long, default_value = "")]
        window: String,
        /// Frame sites whose incident exchanges the tagged generator keeps
        /// (kc dynamics); defaults to the window.
        #[arg(long)]
        reach: Option<String>,
        /// Certificate bundle for aux dynamics on a file model.
        #[arg(long)]
        certificate: Option<PathBuf>,
        #[arg(long, default_value_t = default_budget())]
        budget: u64,
    },
    /// Simulate the tagged particle and report mean squared displacements.
    Msd {
        model: String,
        #[arg(long, value_enum, default_value_t = DynamicsKind::Kc)]
        dynamics: DynamicsKind,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        u: String,
        #[arg(long = "L")]
        l: i64,
        #[arg(long)]
        t_max: f64,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 400)]
        replicas: u64,
        #[arg(long)]
        reach: Option<String>,
        #[arg(long)]
        certificate: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1 << 22)]
        max_steps: u64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Setting {
    Reservoir,
    Closed,
    Torus,
}

impl Setting {
    fn name(self) -> &'static str {
        match self {
            Setting::Reservoir => "reservoir",
            Setting::Closed => "closed",
            Setting::Torus => "torus",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Exterior {
    Occupied,
    Empty,
}

impl Exterior {
    fn mode(self) -> BoundaryMode {
        match self {
            Exterior::Occupied => BoundaryMode::Occupied,
            Exterior::Empty => BoundaryMode::Empty,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DynamicsKind {
    /// The model's own exchanges seen from the tagged particle.
    Kc,
    /// Auxiliary escort-cluster glide.
    Aux,
}

/// Full parameter echo stamped into every artifact.
struct ExperimentConfig {
    entries: Vec<(&'static str, String)>,
}

impl ExperimentConfig {
    fn new(command: &'static str) -> Self {
        ExperimentConfig {
            entries: vec![("command", command.to_string())],
        }
    }

    fn push(&mut self, key: &'static str, value: impl Display) -> &mut Self {
        self.entries.push((key, value.to_string()));
        self
    }

    fn provenance(&self) -> Vec<(&str, String)> {
        self.entries.iter().map(|(k, v)| (*k, v.clone())).collect()
    }

    fn json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .entries
            .iter()
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.clone())))
            .collect();
        serde_json::Value::Object(map)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let output = cli.output.clone();
    match dispatch(cli) {
        Ok(artifact) => {
            let emitted = match &output {
                Some(path) => std::fs::write(path, &artifact).map_err(Error::from),
                None => {
                    print!("{artifact}");
                    Ok(())
                }
            };
            match emitted {
                Ok(()) => ExitCode::from(0),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Budget(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Argument parsing helpers

fn resolve_model(spec: &str) -> Result<ConstraintModel> {
    match spec {
        "bt1d" => Ok(bt1d()),
        "bt2d" => Ok(bt2d()),
        "glt1d" => Ok(glt1d()),
        "bt1d-aux" => Ok(bt1d_aux()),
        "bt2d-aux" => Ok(bt2d_aux()),
        path => io::load_model(path),
    }
}

/// "1,2,-1" (one coordinate per site) or "(1,0),(0,1)".
fn parse_sites(text: &str) -> Result<Vec<Site>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let mut sites = Vec::new();
    if text.contains('(') {
        let mut rest = text;
        while let Some(open) = rest.find('(') {
            let close = rest[open..]
                .find(')')
                .ok_or_else(|| Error::Parse(format!("unbalanced parenthesis in \"{text}\"")))?
                + open;
            let coords = parse_i64_list(&rest[open + 1..close])?;
            if coords.is_empty() {
                return Err(Error::Parse(format!("empty site in \"{text}\"")));
            }
            sites.push(Site(coords));
            rest = &rest[close + 1..];
        }
        let leftover: String = rest.chars().filter(|c| !", \t".contains(*c)).collect();
        if !leftover.is_empty() {
            return Err(Error::Parse(format!(
                "unexpected \"{leftover}\" in site list \"{text}\""
            )));
        }
    } else {
        for v in parse_i64_list(text)? {
            sites.push(Site(vec![v]));
        }
    }
    Ok(sites)
}

fn parse_i64_list(text: &str) -> Result<Vec<i64>> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<i64>()
                .map_err(|_| Error::Parse(format!("\"{p}\" is not an integer")))
        })
        .collect()
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| Error::Parse(format!("\"{p}\" is not a number")))
        })
        .collect()
}

fn parse_estimator(text: &str) -> Result<Estimator> {
    if text == "exact" {
        return Ok(Estimator::Exact);
    }
    if let Some(rest) = text.strip_prefix("mc:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() == 2 {
            let samples = parts[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad sample count \"{}\"", parts[0])))?;
            let seed = parts[1]
                .parse()
                .map_err(|_| Error::Parse(format!("bad seed \"{}\"", parts[1])))?;
            return Ok(Estimator::MonteCarlo { samples, seed });
        }
    }
    Err(Error::Parse(format!(
        "estimator must be \"exact\" or \"mc:SAMPLES:SEED\", got \"{text}\""
    )))
}

fn parse_observables(text: &str) -> Result<Vec<Observable>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "mean-occupancy" {
            out.push(Observable::MeanOccupancy);
        } else if part == "vacancy-count" {
            out.push(Observable::VacancyCount);
        } else if let Some(site) = part.strip_prefix("occ:") {
            let sites = parse_sites(site)?;
            if sites.len() != 1 {
                return Err(Error::Parse(format!("occ: takes one site, got \"{site}\"")));
            }
            out.push(Observable::SiteOccupancy(sites[0].clone()));
        } else {
            return Err(Error::Parse(format!(
                "unknown observable \"{part}\"; use mean-occupancy, vacancy-count, occ:SITE"
            )));
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("no observables requested".into()));
    }
    Ok(out)
}

/// Tracer dynamics for the selfdiff subcommands. In kc mode `reach` sites
/// (defaulting to the window) pick the finite generator family; in aux mode
/// built-in models carry their canonical certified cluster, file models need
/// a certificate bundle.
fn resolve_dynamics(
    model_spec: &str,
    m: &ConstraintModel,
    kind: DynamicsKind,
    window: &[Site],
    reach: &Option<String>,
    certificate: &Option<PathBuf>,
    budget: u64,
) -> Result<PermutationDynamics> {
    match kind {
        DynamicsKind::Kc => {
            let reach_sites = match reach {
                Some(text) => parse_sites(text)?,
                None => window.to_vec(),
            };
            kc_tracer_dynamics(m, &reach_sites)
        }
        DynamicsKind::Aux => {
            let cert = match (model_spec, certificate) {
                (_, Some(path)) => io::load_certificate(path)?,
                ("bt1d", None) => builtin_certificate(m, &[Site(vec![1]), Site(vec![2])], budget)?,
                ("bt2d", None) => builtin_certificate(
                    m,
                    &[
                        Site(vec![1, 1]),
                        Site(vec![1, 2]),
                        Site(vec![2, 1]),
                        Site(vec![2, 2]),
                    ],
                    budget,
                )?,
                (other, None) => {
                    return Err(Error::Argument(format!(
                        "aux dynamics for \"{other}\" needs --certificate"
                    )))
                }
            };
            aux_tracer_dynamics(&cert)
        }
    }
}

fn builtin_certificate(
    m: &ConstraintModel,
    cluster: &[Site],
    budget: u64,
) -> Result<MobileClusterCertificate> {
    certify(m, cluster, 3, budget)?.ok_or_else(|| {
        Error::Validation(format!(
            "no certificate found for the canonical cluster of {}",
            m.name()
        ))
    })
}

fn window_label(window: &[Site]) -> String {
    if window.is_empty() {
        return "empty".into();
    }
    let parts: Vec<String> = window.iter().map(|s| format!("{:?}", s.0)).collect();
    parts.join(";")
}

fn json_artifact(value: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("reports always serialize");
    text.push('\n');
    text
}

// ---------------------------------------------------------------------------
// Dispatch

fn dispatch(cli: Cli) -> Result<String> {
    match cli.command {
        Command::VerifyModel { model, budget } => cmd_verify_model(&model, budget),
        Command::VerifyMove {
            model,
            r#move,
            exhaustive,
            worst_case,
            exterior,
            budget,
        } => cmd_verify_move(&model, &r#move, exhaustive, worst_case, exterior, budget),
        Command::Certify {
            model,
            cluster,
            l,
            budget,
        } => cmd_certify(&model, &cluster, l, budget),
        Command::Gap {
            model,
            setting,
            l,
            q,
            k,
            boundary,
            dump_matrix,
            budget,
        } => cmd_gap(&model, setting, l, q, k, boundary, dump_matrix, budget),
        Command::Ergodic {
            model,
            l,
            k,
            clusters,
            budget,
        } => cmd_ergodic(&model, l, k, &clusters, budget),
        Command::Diffusion {
            model,
            q,
            u,
            window,
            estimator,
            budget,
        } => cmd_diffusion(&model, q, &u, &window, &estimator, budget),
        Command::Aux(AuxCommand::Current {
            auxspec,
            l,
            q,
            samples,
            seed,
        }) => cmd_aux_current(&auxspec, l, q, samples, seed),
        Command::Aux(AuxCommand::Dcoef {
            auxspec,
            q,
            u,
            window,
            budget,
        }) => cmd_aux_dcoef(&auxspec, q, &u, &window, budget),
        Command::Selfdiff(SelfdiffCommand::Qp {
            model,
            dynamics,
            q,
            u,
            window,
            reach,
            certificate,
            budget,
        }) => cmd_selfdiff_qp(&model, dynamics, q, &u, &window, &reach, &certificate, budget),
        Command::Selfdiff(SelfdiffCommand::Msd {
            model,
            dynamics,
            q,
            u,
            l,
            t_max,
            points,
            replicas,
            reach,
            certificate,
            seed,
            max_steps,
        }) => cmd_selfdiff_msd(
            &model,
            dynamics,
            q,
            &u,
            l,
            t_max,
            points,
            replicas,
            &reach,
            &certificate,
            seed,
            max_steps,
        ),
        Command::Simulate {
            model,
            l,
            setting,
            q,
            vacancies,
            init_q,
            schedule,
            t_max,
            points,
            observables,
            seed,
            max_steps,
        } => cmd_simulate(
            &model,
            l,
            setting,
            q,
            &vacancies,
            init_q,
            &schedule,
            t_max,
            points,
            &observables,
            seed,
            max_steps,
        ),
    }
}

// ---------------------------------------------------------------------------
// Subcommands

fn cmd_verify_model(model_spec: &str, budget: u64) -> Result<String> {
    let m = resolve_model(model_spec)?;
    let report = verify_axioms(&m, budget)?;
    let mut config = ExperimentConfig::new("verify-model");
    config
        .push("model", m.name())
        .push("model_hash", io::model_hash(&m))
        .push("budget", budget);
    let checks: Vec<serde_json::Value> = report
        .checks
        .iter()
        .map(|c| {
            serde_json::json!({
                "name": c.name,
                "pass": c.pass,
                "method": format!("{:?}", c.method),
                "detail": c.detail,
                "witness": c.witness.as_ref().map(|w| format!("{w:?}")),
            })
        })
        .collect();
    let artifact = json_artifact(&serde_json::json!({
        "config": config.json(),
        "all_pass": report.all_pass(),
        "checks": checks,
    }));
    if !report.all_pass() {
        // Emit the report (stdout) before failing so the witness is visible.
        print!("{artifact}");
        let names: Vec<&str> = report.failed().iter().map(|c| c.name.as_str()).collect();
        return Err(Error::Validation(format!(
            "axiom checks failed: {}",
            names.join(", ")
        )));
    }
    Ok(artifact)
}

fn cmd_verify_move(
    model_spec: &str,
    move_path: &PathBuf,
    exhaustive: bool,
    worst_case: bool,
    exterior: Exterior,
    budget: u64,
) -> Result<String> {
    let m = resolve_model(model_spec)?;
    let program = io::load_move(move_path)?;
    let mode = if worst_case && !exhaustive {
        ValidationMode::WorstCase
    } else {
        ValidationMode::Exhaustive
    };
    let ctx = MoveContext::bulk(m.clone(), exterior.mode())?;
    let report = validate(&program, &ctx, mode, budget)?;
    let mut config = ExperimentConfig::new("verify-move");
    config
        .push("model", m.name())
        .push("model_hash", io::model_hash(&m))
        .push("move", program.name.clone())
        .push("move_file", move_path.display())
        .push(
            "mode",
            match mode {
                ValidationMode::Exhaustive => "exhaustive",
                ValidationMode::WorstCase => "worst-case",
            },
        )
        .push("budget", budget);
    Ok(json_artifact(&serde_json::json!({
        "config": config.json(),
        "report": io::move_report_json(&report),
    })))
}

fn cmd_certify(model_spec: &str, cluster: &str, l: i64, budget: u64) -> Result<String> {
    let m = resolve_model(model_spec)?;
    let cluster = parse_sites(cluster)?;
    if cluster.is_empty() {
        return Err(Error::Argument("--cluster must list at least one site".into()));
    }
    let cert = certify(&m, &cluster, l, budget)?.ok_or_else(|| {
        Error::Validation(format!(
            "no translation moves found for this cluster within budget {budget}; \
             absence of a certificate is inconclusive"
        ))
    })?;
    io::certificate_to_json(&cert)
}

#[allow(clippy::too_many_arguments)]
fn cmd_gap(
    model_spec: &str,
    setting: Setting,
    l: i64,
    q: Option<f64>,
    k: Option<usize>,
    boundary: Exterior,
    dump_matrix: Option<PathBuf>,
    budget: u64,
) -> Result<String> {
    let m = resolve_model(model_spec)?;
    let (gen, control): (RateMatrix, String) = match setting {
        Setting::Reservoir => {
            let q = q.ok_or_else(|| Error::Argument("reservoir setting needs --q".into()))?;
            (build_reservoir_generator(&m, l, q, budget)?, format!("{q}"))
        }
        Setting::Closed => {
            let k = k.ok_or_else(|| Error::Argument("closed setting needs --k".into()))?;
            (
                build_closed_generator(&m, l, k, boundary.mode(), budget)?,
                format!("{k}"),
            )
        }
        Setting::Torus => (build_torus_generator(&m, l, budget)?, String::new()),
    };
    if let Some(path) = &dump_matrix {
        std::fs::write(path, gen.dump_coo())?;
    }
    let mut config = ExperimentConfig::new("gap");
    config
        .push("model", m.name())
        .push("model_hash", io::model_hash(&m))
        .push("setting", setting.name())
        .push("L", l)
        .push("q_or_k", &control)
        .push("states", gen.len())
        .push("budget", budget);
    let whole = relaxation_time(&gen, None)?;
    let component = gen.components();
    let n_components = component.iter().copied().max().map_or(0, |c| c + 1);
    let mut rows = vec![vec![
        l.to_string(),
        control.clone(),
        "all".to_string(),
        gen.len().to_string(),
        io::fmt_num(whole.gap),
        io::fmt_num(whole.relaxation_time),
    ]];
    if n_components > 1 {
        for id in 0..n_components {
            let members: Vec<usize> = (0..gen.len()).filter(|&i| component[i] == id).collect();
            let (gap, tau) = if members.len() == 1 {
                // An isolated state is already stationary within itself.
                (f64::INFINITY, 0.0)
            } else {
                let r = relaxation_time(&gen, Some(&members))?;
                (r.gap, r.relaxation_time)
            };
            rows.push(vec![
                l.to_string(),
                control.clone(),
                id.to_string(),
                members.len().to_string(),
                io::fmt_num(gap),
                io::fmt_num(tau),
            ]);
        }
    }
    Ok(io::csv_table(
        &config.provenance(),
        &["L", "q_or_k", "component", "size", "gap", "relaxation_time"],
        &rows,
    ))
}

fn cmd_ergodic(model_spec: &str, l: i64, k: usize, clusters: &str, budget: u64) -> Result<String> {
    let m = resolve_model(model_spec)?;
    let clusters: Vec<Vec<Site>> = clusters
        .split(';')
        .map(parse_sites)
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|c| !c.is_empty())
        .collect();
    if clusters.is_empty() {
        return Err(Error::Argument("--clusters must list at least one cluster".into()));
    }
    let report = kclg::spectral::ergodic_components(&m, l, k, &clusters, budget)?;
    let mut config = ExperimentConfig::new("ergodic");
    config
        .push("model", m.name())
        .push("model_hash", io::model_hash(&m))
        .push("L", l)
        .push("k", k)
        .push("clusters", clusters.len())
        .push("budget", budget);
    Ok(json_artifact(&serde_json::json!({
        "config": config.json(),
        "states": report.component.len(),
        "components": report.component_sizes.len(),
        "component_sizes": report.component_sizes,
        "component_has_cluster": report.component_has_cluster,
        "ergodic_count": report.ergodic_count,
        "static_count": report.static_count,
        "static_match": report.static_match,
    })))
}

fn cmd_diffusion(
    model_spec: &str,
    q: f64,
    u_text: &str,
    window_text: &str,
    estimator_text: &str,
    budget: u64,
) -> Result<String> {
    let m = resolve_model(model_spec)?;
    let u = parse_f64_list(u_text)?;
    let window = parse_sites(window_text)?;
    let estimator = parse_estimator(estimator_text)?;
    let vp = assemble_diffusion_qp(&m, &u, &window, q, estimator, budget)?;
    let solution = solve_qp(&vp, 1e-9)?;
    let mut config = ExperimentConfig::new("diffusion");
    config
        .push("model", m.name())
        .push("model_hash", io::model_hash(&m))
        .push("q", io::fmt_num(q))
        .push("u", u_text)
        .push("window", window_label(&window))
        .push("estimator", estimator_text)
        .push("budget", budget);
    let rows = vec![vec![
        m.name().to_string(),
        io::fmt_num(q),
        u_text.to_string(),
        window_label(&window),
        estimator_text.to_string(),
        io::fmt_num(solution.value),
        io::fmt_num(solution.residual),
    ]];
    Ok(io::csv_table(
        &config.provenance(),
        &["model", "q", "u", "window", "estimator", "value", "residual"],
        &rows,
    ))
}

fn cmd_aux_current(auxspec: &str, l: i64, q: f64, samples: u64, seed: u64) -> Result<String> {
    let m = resolve_model(auxspec)?;
    let domain = Domain::new(vec![l; m.dim()], BoundaryMode::Periodic)?;
    let mut max_abs: f64 = 0.0;
    for sample in 0..samples {
        let mut rng = kclg::rng::stream(seed, sample);
        let c = kclg::simulate::product_configuration(domain.clone(), q, &mut rng)?;
        for component in total_current(&c, &m)? {
            max_abs = max_abs.max(component.abs());
        }
    }
    let mut config = ExperimentConfig::new("aux-current");
    config
        .push("model", m.name())
        .push("model_hash", io::model_hash(&m))
        .push("L", l)
        .push("q", io::fmt_num(q))
        .push("samples", samples)
        .push("seed", seed);
    Ok(json_artifact(&serde_json::json!({
        "config": config.json(),
        "max_abs_current": max_abs,
        "summary": format!("max |current| = {max_abs}"),
    })))
}

fn cmd_aux_dcoef(auxspec: &str, q: f64, u_text: &str, window_text: &str, budget: u64) -> Result<String> {
    let m = resolve_model(auxspec)?;
    let u = parse_f64_list(u_text)?;
    let window = parse_sites(window_text)?;
    let closed = aux_diffusion_closed_form(&m, q, &u, budget)?;
    let vp = assemble_diffusion_qp(&m, &u, &window, q, Estimator::Exact, budget)?;
    let solution = solve_qp(&vp, 1e-9)?;
    let mut config = ExperimentConfig::new("aux-dcoef");
    config
        .push("model", m.name())
        .push("model_hash", io::model_hash(&m))
        .push("q", io::fmt_num(q))
        .push("u", u_text)
        .push("window", window_label(&window))
        .push("budget", budget)
        .push("difference", io::fmt_num((closed - solution.value).abs()));
    let rows = vec![
        vec![
            m.name().to_string(),
            io::fmt_num(q),
            u_text.to_string(),
            "none".to_string(),
            "closed-form".to_string(),
            io::fmt_num(closed),
            "0.0".to_string(),
        ],
        vec![
            m.name().to_string(),
            io::fmt_num(q),
            u_text.to_string(),
            window_label(&window),
            "qp-exact".to_string(),
            io::fmt_num(solution.value),
            io::fmt_num(solution.residual),
        ],
    ];
    Ok(io::csv_table(
        &config.provenance(),
        &["model", "q", "u", "window", "estimator", "value", "residual"],
        &rows,
    ))
}

#[allow(clippy::too_many_arguments)]
fn cmd_selfdiff_qp(
    model_spec: &str,
    kind: DynamicsKind,
    q: f64,
    u_text: &str,
    window_text: &str,
    reach: &Option<String>,
    certificate: &Option<PathBuf>,
    budget: u64,
) -> Result<String> {
    let m = resolve_model(model_spec)?;
    let u = parse_f64_list(u_text)?;
    let window = parse_sites(window_text)?;
    let dynamics = resolve_dynamics(model_spec, &m, kind, &window, reach, certificate, budget)?;
    let vp = kclg::selfdiff::self_diffusion_qp(&dynamics, &u, &window, q, budget)?;
    let solution = solve_qp(&vp, 1e-9)?;
    let mut config = ExperimentConfig::new("selfdiff-qp");
    config
        .push("model", m.name())
        .push("model_hash", io::model_hash(&m))
        .push("dynamics", dynamics.id())
        .push("q", io::fmt_num(q))
        .push("u", u_text)
        .push("window", window_label(&window))
        .push("budget", budget);
    let rows = vec![vec![
        dynamics.id().to_string(),
        io::fmt_num(q),
        u_text.to_string(),
        window_label(&window),
        io::fmt_num(solution.value),
    ]];
    Ok(io::csv_table(
        &config.provenance(),
        &["dynamics", "q", "u", "window", "value"],
        &rows,
    ))
}

#[allow(clippy::too_many_arguments)]
fn cmd_selfdiff_msd(
    model_spec: &str,
    kind: DynamicsKind,
    q: f64,
    u_text: &str,
    l: i64,
    t_max: f64,
    points: usize,
    replicas: u64,
    reach: &Option<String>,
    certificate: &Option<PathBuf>,
    seed: u64,
    max_steps: u64,
) -> Result<String> {
    let m = resolve_model(model_spec)?;
    let u = parse_f64_list(u_text)?;
    if !(t_max > 0.0) || points == 0 {
        return Err(Error::Argument("need --t-max > 0 and --points >= 1".into()));
    }
    let dynamics = resolve_dynamics(model_spec, &m, kind, &[], reach, certificate, max_steps)?;
    let domain = Domain::new(vec![l; m.dim()], BoundaryMode::Periodic)?;
    let dt = t_max / points as f64;
    let schedule: Vec<f64> = (1..=points).map(|k| dt * k as f64).collect();
    let msd = tracer_run(&dynamics, &domain, q, &u, &schedule, replicas, seed, max_steps)?;
    let mut config = ExperimentConfig::new("selfdiff-msd");
    config
        .push("model", m.name())
        .push("model_hash", io::model_hash(&m))
        .push("L", l)
        .push("u", u_text)
        .push("t_max", io::fmt_num(t_max))
        .push("points", points)
        .push("max_steps", max_steps);
    Ok(io::tracer_msd_csv(&msd, &config.provenance()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    model_spec: &str,
    l: i64,
    setting: Setting,
    q: Option<f64>,
    vacancies_text: &str,
    init_q: Option<f64>,
    schedule_text: &str,
    t_max: Option<f64>,
    points: usize,
    observables_text: &str,
    seed: u64,
    max_steps: u64,
) -> Result<String> {
    let m = resolve_model(model_spec)?;
    let boundary = match setting {
        Setting::Torus => BoundaryMode::Periodic,
        Setting::Reservoir => BoundaryMode::Empty,
        Setting::Closed => BoundaryMode::Occupied,
    };
    let domain = Domain::new(vec![l; m.dim()], boundary)?;
    let config0 = if let Some(p) = init_q {
        let mut rng = kclg::rng::stream(seed, u64::MAX);
        kclg::simulate::product_configuration(domain, p, &mut rng)?
    } else {
        Configuration::with_vacancies(domain, &parse_sites(vacancies_text)?)?
    };
    let mut state = match setting {
        Setting::Reservoir => {
            let q = q.ok_or_else(|| Error::Argument("reservoir setting needs --q".into()))?;
            SimState::with_reservoirs(&m, config0, q, seed)?
        }
        _ => SimState::exchange(&m, config0, seed)?,
    };
    let schedule: Vec<f64> = if let Some(t_max) = t_max {
        if !(t_max > 0.0) || points == 0 {
            return Err(Error::Argument("need --t-max > 0 and --points >= 1".into()));
        }
        let dt = t_max / points as f64;
        (1..=points).map(|k| dt * k as f64).collect()
    } else {
        let times = parse_f64_list(schedule_text)?;
        if times.is_empty() {
            return Err(Error::Argument(
                "give --schedule times or --t-max with --points".into(),
            ));
        }
        times
    };
    let observables = parse_observables(observables_text)?;
    let series = kmc_run(&mut state, &observables, &schedule, max_steps)?;
    let mut config = ExperimentConfig::new("simulate");
    config
        .push("model", m.name())
        .push("model_hash", io::model_hash(&m))
        .push("setting", setting.name())
        .push("L", l)
        .push("q", q.map_or("none".into(), io::fmt_num))
        .push("seed", seed)
        .push("events", state.steps())
        .push("max_steps", max_steps);
    io::time_series_csv(&series, &config.provenance())
}
