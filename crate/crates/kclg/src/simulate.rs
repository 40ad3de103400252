//! Rejection-free kinetic Monte Carlo.
//!
//! Events are kept in a binary-indexed tree over their rates, so each step
//! costs two uniform draws and a logarithmic descent: waiting times are
//! exponential in the total rate and the event is chosen proportionally.
//! Only edges with unequal occupancies are active, since exchanging equal
//! values changes nothing; at small vacancy density most edges are inert and
//! this is the dominant performance lever. After an event only the rates
//! whose reads touch a changed site are recomputed, and a debug cross-check
//! compares the incremental table against a full rebuild.
//!
//! Three drivers share the engine: plain exchange dynamics on a box or torus,
//! exchange dynamics with reversible particle reservoirs on the boundary, and
//! tagged-particle dynamics given by frame permutations.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::lattice::{BoundaryMode, Configuration, Domain, Site};
use crate::models::ConstraintModel;
use crate::selfdiff::{PermutationDynamics, TracerState};

/// Rates below this are treated as inactive, matching the exact-generator
/// builders.
const RATE_FLOOR: f64 = 1e-12;

/// Binary-indexed tree over event rates: point updates, prefix sums, and
/// proportional sampling in logarithmic time.
struct RateTree {
    n: usize,
    tree: Vec<f64>,
    rates: Vec<f64>,
}

impl RateTree {
    fn new(rates: Vec<f64>) -> RateTree {
        let n = rates.len();
        let mut tree = vec![0.0; n + 1];
        for i in 1..=n {
            tree[i] += rates[i - 1];
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                let v = tree[i];
                tree[parent] += v;
            }
        }
        RateTree { n, tree, rates }
    }

    fn set(&mut self, i: usize, r: f64) {
        let delta = r - self.rates[i];
        if delta == 0.0 {
            return;
        }
        self.rates[i] = r;
        let mut pos = i + 1;
        while pos <= self.n {
            self.tree[pos] += delta;
            pos += pos & pos.wrapping_neg();
        }
    }

    fn rate(&self, i: usize) -> f64 {
        self.rates[i]
    }

    fn total(&self) -> f64 {
        let mut pos = self.n;
        let mut sum = 0.0;
        while pos > 0 {
            sum += self.tree[pos];
            pos -= pos & pos.wrapping_neg();
        }
        sum
    }

    /// Event index whose cumulative rate bracket contains `target`.
    fn pick(&self, target: f64) -> usize {
        let mut pos = 0usize;
        let mut rem = target;
        let mut b = self.n.next_power_of_two();
        while b > 0 {
            let next = pos + b;
            if next <= self.n && self.tree[next] <= rem {
                rem -= self.tree[next];
                pos = next;
            }
            b >>= 1;
        }
        // Floating-point boundaries can land on an inactive slot; move to the
        // nearest active one.
        let start = pos.min(self.n.saturating_sub(1));
        if self.rates[start] > 0.0 {
            return start;
        }
        for i in start + 1..self.n {
            if self.rates[i] > 0.0 {
                return i;
            }
        }
        for i in (0..start).rev() {
            if self.rates[i] > 0.0 {
                return i;
            }
        }
        panic!("proportional pick on a zero total rate");
    }
}

#[derive(Clone, Debug)]
enum Event {
    /// Swap the contents of flat indices `i` and `j`; the constraint is read
    /// at `base` along `axis`.
    Exchange {
        i: usize,
        j: usize,
        base: Site,
        axis: usize,
    },
    /// Reservoir flip of the boundary site at flat index `i`.
    Flip { i: usize },
    /// Frame permutation generator of a tagged dynamics.
    Generator(usize),
}

#[derive(Clone, Debug)]
enum Driver {
    Exchange {
        model: ConstraintModel,
        reservoir_q: Option<f64>,
    },
    Tagged {
        dynamics: PermutationDynamics,
    },
}

/// What a single step did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    /// An event fired after an exponential waiting time.
    Fired { dt: f64, event: usize },
    /// Total rate zero: the configuration cannot move. Legitimate for
    /// kinetically constrained models; the caller decides what it means.
    Blocked,
}

/// Result of advancing to a scheduled time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AdvanceOutcome {
    Reached,
    /// The state froze before the target time; the clock is still moved
    /// forward, since a blocked state no longer changes.
    Blocked,
}

/// A running simulation: configuration, active-event table, clock, and its
/// private random stream.
pub struct SimState {
    config: Configuration,
    driver: Driver,
    tracer: Option<Site>,
    origin: Option<Site>,
    events: Vec<Event>,
    /// Flat site index -> events whose rate reads that site.
    site_events: Vec<Vec<u32>>,
    tree: RateTree,
    clock: f64,
    steps: u64,
    seed: u64,
    rng: crate::rng::Rng,
}

/// Nearest-neighbor edges of the domain, one event per (site, +axis) with an
/// in-box partner; torus wrap edges appear once per base site.
fn exchange_events(domain: &Domain) -> Vec<Event> {
    let mut events = Vec::new();
    for i in 0..domain.volume() {
        let x = domain.site(i);
        for axis in 0..domain.dim() {
            let y = x.add(&Site::unit(axis, domain.dim()));
            let j = match domain.boundary() {
                BoundaryMode::Periodic => domain.index(&domain.wrap(&y)),
                _ => domain.index(&y),
            };
            if let Some(j) = j {
                if j != i {
                    events.push(Event::Exchange {
                        i,
                        j,
                        base: x.clone(),
                        axis,
                    });
                }
            }
        }
    }
    events
}

impl SimState {
    /// Exchange-only dynamics on the configuration's domain (torus or a box
    /// with a fill convention).
    pub fn exchange(model: &ConstraintModel, config: Configuration, seed: u64) -> Result<SimState> {
        if model.dim() != config.domain().dim() {
            return Err(Error::Argument(format!(
                "model dimension {} does not match the domain dimension {}",
                model.dim(),
                config.domain().dim()
            )));
        }
        let events = exchange_events(config.domain());
        SimState::build(
            Driver::Exchange {
                model: model.clone(),
                reservoir_q: None,
            },
            config,
            None,
            events,
            seed,
        )
    }

    /// Exchange dynamics plus reversible reservoirs: every boundary site
    /// flips, at rate `q` when occupied and `1-q` when empty, so the product
    /// measure with vacancy probability `q` is stationary. The domain must
    /// read exterior sites as empty, matching the exact-generator convention.
    pub fn with_reservoirs(
        model: &ConstraintModel,
        config: Configuration,
        q: f64,
        seed: u64,
    ) -> Result<SimState> {
        if model.dim() != config.domain().dim() {
            return Err(Error::Argument(format!(
                "model dimension {} does not match the domain dimension {}",
                model.dim(),
                config.domain().dim()
            )));
        }
        if config.domain().boundary() != BoundaryMode::Empty {
            return Err(Error::Argument(
                "reservoir runs read the exterior as empty".into(),
            ));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Argument(format!(
                "vacancy probability q={q} outside [0,1]"
            )));
        }
        let mut events = exchange_events(config.domain());
        for site in config.domain().boundary_sites() {
            let i = config.domain().index(&site).expect("boundary site is in the box");
            events.push(Event::Flip { i });
        }
        SimState::build(
            Driver::Exchange {
                model: model.clone(),
                reservoir_q: Some(q),
            },
            config,
            None,
            events,
            seed,
        )
    }

    /// Tagged-particle dynamics on a torus.
    pub fn tagged(
        dynamics: &PermutationDynamics,
        state: TracerState,
        seed: u64,
    ) -> Result<SimState> {
        let domain = state.config().domain();
        if domain.boundary() != BoundaryMode::Periodic {
            return Err(Error::Argument("tagged runs need a torus".into()));
        }
        if dynamics.dim() != domain.dim() {
            return Err(Error::Argument(format!(
                "dynamics dimension {} does not match the domain dimension {}",
                dynamics.dim(),
                domain.dim()
            )));
        }
        // The in-place permutation application needs the wrapped support to
        // stay collision-free.
        for g in dynamics.generators() {
            let mut seen = std::collections::BTreeSet::new();
            for s in g.permutation().support() {
                if !seen.insert(domain.index(&domain.wrap(s)).expect("wrap lands in the box")) {
                    return Err(Error::Argument(format!(
                        "torus {:?} is too small for the permutation support of {}",
                        domain.extent(),
                        dynamics.id()
                    )));
                }
            }
        }
        let events = (0..dynamics.generators().len()).map(Event::Generator).collect();
        let tracer = state.tracer().clone();
        SimState::build(
            Driver::Tagged {
                dynamics: dynamics.clone(),
            },
            state.config().clone(),
            Some(tracer),
            events,
            seed,
        )
    }

    fn build(
        driver: Driver,
        config: Configuration,
        tracer: Option<Site>,
        events: Vec<Event>,
        seed: u64,
    ) -> Result<SimState> {
        let volume = config.domain().volume();
        let mut site_events = vec![Vec::new(); volume];
        for (id, event) in events.iter().enumerate() {
            for site_idx in event_reads(event, &driver, config.domain()) {
                let list = &mut site_events[site_idx];
                if list.last() != Some(&(id as u32)) {
                    list.push(id as u32);
                }
            }
        }
        let mut state = SimState {
            config,
            driver,
            origin: tracer.clone(),
            tracer,
            events,
            site_events,
            tree: RateTree::new(Vec::new()),
            clock: 0.0,
            steps: 0,
            seed,
            rng: crate::rng::single(seed),
        };
        state.tree = RateTree::new(state.fresh_rates());
        Ok(state)
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tracer(&self) -> Option<&Site> {
        self.tracer.as_ref()
    }

    /// Net tracer displacement since construction (tagged runs only).
    pub fn displacement(&self) -> Option<Site> {
        match (&self.tracer, &self.origin) {
            (Some(z), Some(z0)) => Some(z.sub(z0)),
            _ => None,
        }
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    /// Human-readable provenance for series headers.
    pub fn provenance(&self) -> String {
        let domain = self.config.domain();
        match &self.driver {
            Driver::Exchange {
                model,
                reservoir_q: None,
            } => format!(
                "model={} boundary={:?} extent={:?}",
                model.name(),
                domain.boundary(),
                domain.extent()
            ),
            Driver::Exchange {
                model,
                reservoir_q: Some(q),
            } => format!(
                "model={} reservoirs q={q} extent={:?}",
                model.name(),
                domain.extent()
            ),
            Driver::Tagged { dynamics } => {
                format!("dynamics={} extent={:?}", dynamics.id(), domain.extent())
            }
        }
    }

    fn event_rate(&self, event: &Event) -> f64 {
        match event {
            Event::Exchange { i, j, base, axis } => {
                if self.config.occupied_idx(*i) == self.config.occupied_idx(*j) {
                    return 0.0;
                }
                let model = match &self.driver {
                    Driver::Exchange { model, .. } => model,
                    Driver::Tagged { .. } => unreachable!("tagged runs have no edge events"),
                };
                let r = model.edge_rate_at(&self.config, base, *axis);
                if r < RATE_FLOOR {
                    0.0
                } else {
                    r
                }
            }
            Event::Flip { i } => {
                let q = match &self.driver {
                    Driver::Exchange {
                        reservoir_q: Some(q),
                        ..
                    } => *q,
                    _ => unreachable!("flip events only exist with reservoirs"),
                };
                let r = if self.config.occupied_idx(*i) { q } else { 1.0 - q };
                if r < RATE_FLOOR {
                    0.0
                } else {
                    r
                }
            }
            Event::Generator(k) => {
                let (dynamics, z) = match (&self.driver, &self.tracer) {
                    (Driver::Tagged { dynamics }, Some(z)) => (dynamics, z),
                    _ => unreachable!("generator events only exist on tagged runs"),
                };
                let g = &dynamics.generators()[*k];
                let r = dynamics.lab_rate(g, &self.config, z);
                if r < RATE_FLOOR {
                    0.0
                } else {
                    r
                }
            }
        }
    }

    fn fresh_rates(&self) -> Vec<f64> {
        self.events.iter().map(|e| self.event_rate(e)).collect()
    }

    /// Largest deviation between the incremental rate table and a full
    /// rebuild. Zero (exactly) unless the incremental bookkeeping is broken.
    pub fn rebuild_deviation(&self) -> f64 {
        self.fresh_rates()
            .iter()
            .enumerate()
            .map(|(i, r)| (r - self.tree.rate(i)).abs())
            .fold(0.0, f64::max)
    }

    /// Currently active transitions: each event with nonzero rate, together
    /// with the configuration it would produce.
    pub fn transitions(&self) -> Vec<(f64, Configuration)> {
        let mut out = Vec::new();
        for (id, event) in self.events.iter().enumerate() {
            let rate = self.tree.rate(id);
            if rate <= 0.0 {
                continue;
            }
            let mut config = self.config.clone();
            let mut tracer = self.tracer.clone();
            apply_raw(event, &self.driver, &mut config, &mut tracer);
            out.push((rate, config));
        }
        out
    }

    fn fire(&mut self, event_id: usize) {
        let event = self.events[event_id].clone();
        let changed = apply_raw(&event, &self.driver, &mut self.config, &mut self.tracer);
        match &self.driver {
            Driver::Tagged { .. } => {
                // The frame moved with the tracer, so every rate can change.
                for id in 0..self.events.len() {
                    let r = self.event_rate(&self.events[id]);
                    self.tree.set(id, r);
                }
            }
            Driver::Exchange { .. } => {
                let mut touched: Vec<u32> = changed
                    .iter()
                    .flat_map(|&s| self.site_events[s].iter().copied())
                    .collect();
                touched.sort_unstable();
                touched.dedup();
                for id in touched {
                    let r = self.event_rate(&self.events[id as usize]);
                    self.tree.set(id as usize, r);
                }
            }
        }
    }

    /// One rejection-free step: exponential waiting time at the total rate,
    /// event chosen proportionally.
    pub fn step(&mut self) -> StepOutcome {
        let total = self.tree.total();
        if total <= 0.0 {
            return StepOutcome::Blocked;
        }
        let u: f64 = self.rng.gen();
        let dt = -(1.0 - u).ln() / total;
        let target = self.rng.gen::<f64>() * total;
        let event = self.tree.pick(target);
        self.clock += dt;
        self.steps += 1;
        self.fire(event);
        debug_assert!(
            self.steps % 1024 != 0 || self.rebuild_deviation() == 0.0,
            "incremental rates drifted from a full rebuild"
        );
        StepOutcome::Fired { dt, event }
    }

    /// Fires every event scheduled before `t` and leaves the clock at `t`.
    /// A blocked state also reports its clock at `t`: it no longer changes.
    pub fn advance_to(&mut self, t: f64, max_steps: u64) -> Result<AdvanceOutcome> {
        if t < self.clock {
            return Err(Error::Argument(format!(
                "cannot advance backwards: clock is {}, target {t}",
                self.clock
            )));
        }
        let start = self.steps;
        loop {
            let total = self.tree.total();
            if total <= 0.0 {
                self.clock = t;
                return Ok(AdvanceOutcome::Blocked);
            }
            let u: f64 = self.rng.gen();
            let dt = -(1.0 - u).ln() / total;
            if self.clock + dt > t {
                // Discarding the unexpired waiting time is exact: the
                // exponential clock is memoryless.
                self.clock = t;
                return Ok(AdvanceOutcome::Reached);
            }
            if self.steps - start >= max_steps {
                return Err(Error::Budget(format!(
                    "more than {max_steps} events before reaching t={t}"
                )));
            }
            let target = self.rng.gen::<f64>() * total;
            let event = self.tree.pick(target);
            self.clock += dt;
            self.steps += 1;
            self.fire(event);
            debug_assert!(
                self.steps % 1024 != 0 || self.rebuild_deviation() == 0.0,
                "incremental rates drifted from a full rebuild"
            );
        }
    }
}

/// Frame sites an event's rate reads, resolved to flat indices. Reads that
/// fall outside a non-periodic box are constants and never invalidate.
fn event_reads(event: &Event, driver: &Driver, domain: &Domain) -> Vec<usize> {
    let resolve = |site: &Site| -> Option<usize> {
        match domain.boundary() {
            BoundaryMode::Periodic => domain.index(&domain.wrap(site)),
            _ => domain.index(site),
        }
    };
    match event {
        Event::Exchange { i, j, base, axis } => {
            let model = match driver {
                Driver::Exchange { model, .. } => model,
                Driver::Tagged { .. } => unreachable!(),
            };
            let mut reads = vec![*i, *j];
            for cl in model.clauses(*axis) {
                for o in &cl.offsets {
                    if let Some(idx) = resolve(&base.add(o)) {
                        reads.push(idx);
                    }
                }
            }
            reads.sort_unstable();
            reads.dedup();
            reads
        }
        Event::Flip { i } => vec![*i],
        // Tagged rates are refreshed wholesale after every event.
        Event::Generator(_) => Vec::new(),
    }
}

/// Applies an event to a configuration (and tracer), returning the flat
/// indices whose occupancy may have changed.
fn apply_raw(
    event: &Event,
    driver: &Driver,
    config: &mut Configuration,
    tracer: &mut Option<Site>,
) -> Vec<usize> {
    match event {
        Event::Exchange { i, j, .. } => {
            let oi = config.occupied_idx(*i);
            let oj = config.occupied_idx(*j);
            config.set_idx(*i, oj);
            config.set_idx(*j, oi);
            vec![*i, *j]
        }
        Event::Flip { i } => {
            let occ = config.occupied_idx(*i);
            config.set_idx(*i, !occ);
            vec![*i]
        }
        Event::Generator(k) => {
            let dynamics = match driver {
                Driver::Tagged { dynamics } => dynamics,
                Driver::Exchange { .. } => unreachable!(),
            };
            let z = tracer.as_ref().expect("tagged runs carry a tracer").clone();
            let g = &dynamics.generators()[*k];
            let domain = config.domain().clone();
            // sigma moves the content of z + src to z + sigma(src); read all
            // sources before writing.
            let moves: Vec<(usize, bool)> = g
                .permutation()
                .pairs()
                .map(|(src, dst)| {
                    let value = config.occupied(&src.add(&z));
                    let idx = domain
                        .index(&domain.wrap(&dst.add(&z)))
                        .expect("torus wrap lands in the box");
                    (idx, value)
                })
                .collect();
            let mut changed = Vec::with_capacity(moves.len());
            for (idx, value) in moves {
                config.set_idx(idx, value);
                changed.push(idx);
            }
            *tracer = Some(z.add(g.displacement()));
            changed
        }
    }
}

/// What to record along a run.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    /// Fraction of occupied sites.
    MeanOccupancy,
    /// Number of empty sites.
    VacancyCount,
    /// Occupancy (0 or 1) of one site.
    SiteOccupancy(Site),
    /// Product of occupancies over a site set.
    Monomial(Vec<Site>),
}

impl Observable {
    pub fn id(&self) -> String {
        match self {
            Observable::MeanOccupancy => "mean-occupancy".into(),
            Observable::VacancyCount => "vacancy-count".into(),
            Observable::SiteOccupancy(s) => format!("occupancy{:?}", s.0),
            Observable::Monomial(sites) => {
                let coords: Vec<String> = sites.iter().map(|s| format!("{:?}", s.0)).collect();
                format!("monomial[{}]", coords.join(""))
            }
        }
    }

    pub fn eval(&self, c: &Configuration) -> f64 {
        match self {
            Observable::MeanOccupancy => {
                let v = c.domain().volume();
                (v - c.vacancy_count()) as f64 / v as f64
            }
            Observable::VacancyCount => c.vacancy_count() as f64,
            Observable::SiteOccupancy(s) => {
                if c.occupied(s) {
                    1.0
                } else {
                    0.0
                }
            }
            Observable::Monomial(sites) => {
                if sites.iter().all(|s| c.occupied(s)) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Sampled observable values at strictly increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub observable: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub seed: u64,
    pub provenance: String,
    /// The run froze before the end of the schedule; later points are absent.
    pub truncated: bool,
}

impl TimeSeries {
    pub fn new(
        observable: impl Into<String>,
        times: Vec<f64>,
        values: Vec<f64>,
        seed: u64,
        provenance: impl Into<String>,
    ) -> Result<TimeSeries> {
        if times.len() != values.len() {
            return Err(Error::Argument(format!(
                "{} times against {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument(
                "sample times must be strictly increasing".into(),
            ));
        }
        Ok(TimeSeries {
            observable: observable.into(),
            times,
            values,
            seed,
            provenance: provenance.into(),
            truncated: false,
        })
    }
}

fn check_schedule(schedule: &[f64], from: f64) -> Result<()> {
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument(
            "schedule times must be strictly increasing".into(),
        ));
    }
    if let Some(&first) = schedule.first() {
        if first < from {
            return Err(Error::Argument(format!(
                "schedule starts at {first}, before the clock at {from}"
            )));
        }
        if !schedule.iter().all(|t| t.is_finite()) {
            return Err(Error::Argument("schedule times must be finite".into()));
        }
    }
    Ok(())
}

/// Runs the state through the schedule, recording every observable at each
/// point. Deterministic given the state's seed. If the state blocks before
/// the schedule ends, the series are truncated there and flagged.
pub fn run(
    state: &mut SimState,
    observables: &[Observable],
    schedule: &[f64],
    max_steps: u64,
) -> Result<Vec<TimeSeries>> {
    check_schedule(schedule, state.clock())?;
    let mut times = Vec::with_capacity(schedule.len());
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(schedule.len()); observables.len()];
    let mut truncated = false;
    for &t in schedule {
        match state.advance_to(t, max_steps)? {
            AdvanceOutcome::Reached => {
                times.push(t);
                for (obs, col) in observables.iter().zip(columns.iter_mut()) {
                    col.push(obs.eval(&state.config));
                }
            }
            AdvanceOutcome::Blocked => {
                truncated = true;
                break;
            }
        }
    }
    let provenance = state.provenance();
    observables
        .iter()
        .zip(columns)
        .map(|(obs, values)| {
            let mut series =
                TimeSeries::new(obs.id(), times.clone(), values, state.seed, provenance.clone())?;
            series.truncated = truncated;
            Ok(series)
        })
        .collect()
}

/// Replica-averaged tracer displacement statistics.
#[derive(Clone, Debug)]
pub struct TracerMsd {
    pub times: Vec<f64>,
    /// Mean of `(u . z_t)^2` over replicas, with its standard error.
    pub msd_u: Vec<f64>,
    pub msd_u_se: Vec<f64>,
    /// Mean of `|z_t|^2` over replicas, with its standard error.
    pub msd_norm: Vec<f64>,
    pub msd_norm_se: Vec<f64>,
    pub replicas: u64,
    pub seed: u64,
    pub dynamics: String,
    pub q: f64,
}

/// Draws a configuration from the product measure with vacancy probability
/// `q` (each site independently empty with probability `q`).
pub fn product_configuration(domain: Domain, q: f64, rng: &mut crate::rng::Rng) -> Result<Configuration> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Argument(format!("q={q} outside [0,1]")));
    }
    let bits: Vec<bool> = (0..domain.volume()).map(|_| rng.gen::<f64>() >= q).collect();
    Configuration::from_bits(domain, &bits)
}

/// Simulates the tagged dynamics on a torus over many replicas and records
/// the mean squared displacement at the scheduled times.
///
/// Each replica draws its initial configuration from the product measure
/// with vacancy probability `q`, conditioned on the tracer's starting site
/// being occupied, from the independent stream `(seed, replica)`. A blocked
/// replica is a legitimate sample whose tracer never moves; it keeps
/// contributing its frozen displacement.
#[allow(clippy::too_many_arguments)]
pub fn tracer_run(
    dynamics: &PermutationDynamics,
    domain: &Domain,
    q: f64,
    u: &[f64],
    schedule: &[f64],
    replicas: u64,
    seed: u64,
    max_steps: u64,
) -> Result<TracerMsd> {
    if domain.boundary() != BoundaryMode::Periodic {
        return Err(Error::Argument("tracer runs need a torus".into()));
    }
    if u.len() != dynamics.dim() || domain.dim() != dynamics.dim() {
        return Err(Error::Argument(
            "direction, domain and dynamics dimensions must agree".into(),
        ));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Argument(format!(
            "vacancy probability q={q} outside [0,1]"
        )));
    }
    if replicas == 0 {
        return Err(Error::Argument("need at least one replica".into()));
    }
    check_schedule(schedule, 0.0)?;
    let start = Site(domain.extent().iter().map(|&l| (l + 1) / 2).collect());
    let n = schedule.len();
    let mut sum_u = vec![0.0f64; n];
    let mut sumsq_u = vec![0.0f64; n];
    let mut sum_n = vec![0.0f64; n];
    let mut sumsq_n = vec![0.0f64; n];
    for replica in 0..replicas {
        let mut rng = crate::rng::stream(seed, replica);
        let mut config = product_configuration(domain.clone(), q, &mut rng)?;
        let idx = domain.index(&start).expect("start site is in the box");
        config.set_idx(idx, true);
        let tracer = TracerState::new(config, start.clone())?;
        // Replica streams are separated by construction; the engine's own
        // stream is derived from the replica id as well.
        let mut sim = SimState::tagged(dynamics, tracer, seed ^ (replica << 1 | 1))?;
        sim.rng = rng;
        let mut blocked = false;
        for (k, &t) in schedule.iter().enumerate() {
            if !blocked {
                blocked = matches!(sim.advance_to(t, max_steps)?, AdvanceOutcome::Blocked);
            }
            let z = sim.displacement().expect("tagged runs track displacement");
            let zu: f64 = u
                .iter()
                .enumerate()
                .map(|(axis, ua)| ua * z.coord(axis) as f64)
                .sum();
            let znorm: f64 = z.0.iter().map(|&c| (c * c) as f64).sum();
            sum_u[k] += zu * zu;
            sumsq_u[k] += zu * zu * zu * zu;
            sum_n[k] += znorm;
            sumsq_n[k] += znorm * znorm;
        }
    }
    let m = replicas as f64;
    let finish = |sum: &[f64], sumsq: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut means = Vec::with_capacity(n);
        let mut ses = Vec::with_capacity(n);
        for k in 0..n {
            let mean = sum[k] / m;
            let var = (sumsq[k] / m - mean * mean).max(0.0);
            let se = if replicas > 1 {
                (var / (m - 1.0)).sqrt()
            } else {
                f64::INFINITY
            };
            means.push(mean);
            ses.push(se);
        }
        (means, ses)
    };
    let (msd_u, msd_u_se) = finish(&sum_u, &sumsq_u);
    let (msd_norm, msd_norm_se) = finish(&sum_n, &sumsq_n);
    Ok(TracerMsd {
        times: schedule.to_vec(),
        msd_u,
        msd_u_se,
        msd_norm,
        msd_norm_se,
        replicas,
        seed,
        dynamics: dynamics.id().to_string(),
        q,
    })
}

/// Exponential decay-rate estimate from a uniformly sampled series.
#[derive(Clone, Debug)]
pub struct DecayEstimate {
    /// Fitted decay time; NaN when the series is degenerate, infinite when
    /// no decay is visible.
    pub tau: f64,
    pub tau_lo: f64,
    pub tau_hi: f64,
    /// Empirical autocorrelation by lag, starting at lag 0.
    pub rho: Vec<f64>,
    /// Sample spacing.
    pub dt: f64,
    pub lags_used: usize,
    /// Variance too small for a meaningful correlation.
    pub degenerate: bool,
    /// Too few samples or too few usable lags for a trustworthy band.
    pub wide_band: bool,
}

/// Fits `rho(k) = exp(-k dt / tau)` to the empirical autocorrelation of a
/// uniformly spaced, stationary series by least squares on the log of the
/// positive leading lags. The band is two standard errors on the fitted
/// slope.
pub fn autocorrelation(series: &TimeSeries) -> Result<DecayEstimate> {
    let n = series.values.len();
    if n < 8 {
        return Err(Error::Argument(format!(
            "need at least 8 samples for an autocorrelation, got {n}"
        )));
    }
    let dt = series.times[1] - series.times[0];
    for w in series.times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::Argument(
                "autocorrelation needs uniform sample spacing".into(),
            ));
        }
    }
    let mean = series.values.iter().sum::<f64>() / n as f64;
    let var = series.values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let scale = series
        .values
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max)
        .max(1.0);
    if var <= 1e-20 * scale * scale {
        return Ok(DecayEstimate {
            tau: f64::NAN,
            tau_lo: f64::NAN,
            tau_hi: f64::NAN,
            rho: Vec::new(),
            dt,
            lags_used: 0,
            degenerate: true,
            wide_band: true,
        });
    }
    let kmax = (n / 4).min(64);
    let mut rho = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let cov: f64 = (0..n - k)
            .map(|i| (series.values[i] - mean) * (series.values[i + k] - mean))
            .sum::<f64>()
            / (n - k) as f64;
        rho.push(cov / var);
    }
    // Fit over the leading lags that are clearly above the noise floor.
    let floor = (4.0 / (n as f64).sqrt()).max(0.02);
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (k, &r) in rho.iter().enumerate().skip(1) {
        if r < floor {
            break;
        }
        pts.push((k as f64, r.ln()));
    }
    let mut wide_band = n < 64;
    if pts.is_empty() {
        // Correlation is gone already at lag one: the decay is faster than
        // the sampling interval resolves.
        return Ok(DecayEstimate {
            tau: 0.0,
            tau_lo: 0.0,
            tau_hi: dt,
            rho,
            dt,
            lags_used: 0,
            degenerate: false,
            wide_band: true,
        });
    }
    if pts.len() == 1 {
        let tau = -dt / pts[0].1;
        return Ok(DecayEstimate {
            tau,
            tau_lo: 0.0,
            tau_hi: f64::INFINITY,
            rho,
            dt,
            lags_used: 1,
            degenerate: false,
            wide_band: true,
        });
    }
    if pts.len() < 4 {
        wide_band = true;
    }
    let m = pts.len() as f64;
    let kbar = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - kbar) * (p.0 - kbar)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - kbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let se = if pts.len() > 2 {
        let ss_res: f64 = pts
            .iter()
            .map(|p| {
                let fit = ybar + slope * (p.0 - kbar);
                (p.1 - fit) * (p.1 - fit)
            })
            .sum();
        (ss_res / (m - 2.0) / sxx).sqrt()
    } else {
        slope.abs()
    };
    let tau_of = |s: f64| -> f64 {
        if s >= 0.0 {
            f64::INFINITY
        } else {
            -dt / s
        }
    };
    let tau = tau_of(slope);
    let tau_lo = tau_of(slope - 2.0 * se);
    let tau_hi = tau_of(slope + 2.0 * se);
    if !tau.is_finite() || !tau_hi.is_finite() {
        wide_band = true;
    }
    Ok(DecayEstimate {
        tau,
        tau_lo,
        tau_hi,
        rho,
        dt,
        lags_used: pts.len(),
        degenerate: false,
        wide_band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::bt1d;
    use crate::selfdiff::aux_tracer_dynamics;
    use crate::spectral::{build_reservoir_generator, build_torus_generator, mask_of, relaxation_time};
    use std::collections::BTreeMap;

    fn s(coords: &[i64]) -> Site {
        Site(coords.to_vec())
    }

    fn bt1d_cert() -> crate::moves::MobileClusterCertificate {
        crate::moves::certify(&bt1d(), &[s(&[1]), s(&[2])], 3, 1 << 22)
            .expect("search runs")
            .expect("the paired vacancy cluster is mobile")
    }

    #[test]
    fn fenwick_sampling_matches_a_linear_scan() {
        let mut rng = crate::rng::single(3);
        let rates: Vec<f64> = (0..23).map(|i| if i % 5 == 0 { 0.0 } else { rng.gen::<f64>() }).collect();
        let mut tree = RateTree::new(rates.clone());
        let total: f64 = rates.iter().sum();
        assert!((tree.total() - total).abs() < 1e-12);
        for _ in 0..2000 {
            let target = rng.gen::<f64>() * total;
            let picked = tree.pick(target);
            let mut acc = 0.0;
            let mut linear = rates.len() - 1;
            for (i, r) in rates.iter().enumerate() {
                acc += r;
                if target < acc {
                    linear = i;
                    break;
                }
            }
            assert_eq!(picked, linear, "target {target}");
        }
        // Point updates shift the distribution consistently.
        tree.set(7, 3.5);
        tree.set(0, 0.25);
        let mut updated = rates;
        updated[7] = 3.5;
        updated[0] = 0.25;
        let total: f64 = updated.iter().sum();
        assert!((tree.total() - total).abs() < 1e-12);
        let target = 0.9 * total;
        let mut acc = 0.0;
        let mut linear = updated.len() - 1;
        for (i, r) in updated.iter().enumerate() {
            acc += r;
            if target < acc {
                linear = i;
                break;
            }
        }
        assert_eq!(tree.pick(target), linear);
    }

    #[test]
    fn event_set_matches_the_exact_generator_rows() {
        // Torus: a single vacancy pair.
        let m = bt1d();
        let l = 8;
        let gen = build_torus_generator(&m, l, 1 << 20).unwrap();
        let domain = Domain::line(l, BoundaryMode::Periodic).unwrap();
        let c = Configuration::with_vacancies(domain, &[s(&[4]), s(&[5])]).unwrap();
        let sim = SimState::exchange(&m, c.clone(), 1).unwrap();
        let state_idx = gen.space().index_of(&c).unwrap();
        let mut expected: BTreeMap<u64, f64> = BTreeMap::new();
        for &(j, r) in gen.row(state_idx) {
            expected.insert(gen.space().mask(j as usize), r);
        }
        let mut observed: BTreeMap<u64, f64> = BTreeMap::new();
        for (rate, target) in sim.transitions() {
            *observed.entry(mask_of(&target)).or_insert(0.0) += rate;
        }
        assert_eq!(observed, expected, "torus event set");

        // Reservoirs: boundary flips join the exchanges.
        let q = 0.3;
        let gen = build_reservoir_generator(&m, 6, q, 1 << 20).unwrap();
        let domain = Domain::line(6, BoundaryMode::Empty).unwrap();
        let c = Configuration::with_vacancies(domain, &[s(&[2]), s(&[5])]).unwrap();
        let sim = SimState::with_reservoirs(&m, c.clone(), q, 2).unwrap();
        let state_idx = gen.space().index_of(&c).unwrap();
        let mut expected: BTreeMap<u64, f64> = BTreeMap::new();
        for &(j, r) in gen.row(state_idx) {
            expected.insert(gen.space().mask(j as usize), r);
        }
        let mut observed: BTreeMap<u64, f64> = BTreeMap::new();
        for (rate, target) in sim.transitions() {
            *observed.entry(mask_of(&target)).or_insert(0.0) += rate;
        }
        assert_eq!(observed, expected, "reservoir event set");
    }

    #[test]
    fn incremental_rates_match_full_rebuilds_and_conserve_vacancies() {
        let m = bt1d();
        let domain = Domain::line(10, BoundaryMode::Periodic).unwrap();
        let c =
            Configuration::with_vacancies(domain, &[s(&[2]), s(&[3]), s(&[7])]).unwrap();
        let vacancies = c.vacancy_count();
        let mut sim = SimState::exchange(&m, c, 11).unwrap();
        for step in 0..600 {
            match sim.step() {
                StepOutcome::Fired { dt, .. } => assert!(dt > 0.0),
                StepOutcome::Blocked => panic!("three vacancies keep bt1d moving"),
            }
            assert_eq!(
                sim.rebuild_deviation(),
                0.0,
                "incremental table drifted at step {step}"
            );
            assert_eq!(
                sim.config().vacancy_count(),
                vacancies,
                "exchanges must conserve vacancies"
            );
        }
    }

    #[test]
    fn blocked_configuration_reports_blocked_and_stays_put() {
        // Isolated vacancies, each too far from the other to unlock any edge.
        let m = bt1d();
        let domain = Domain::line(6, BoundaryMode::Periodic).unwrap();
        let c = Configuration::with_vacancies(domain, &[s(&[1]), s(&[4])]).unwrap();
        let mut sim = SimState::exchange(&m, c.clone(), 5).unwrap();
        assert_eq!(sim.total_rate(), 0.0);
        for _ in 0..100 {
            assert_eq!(sim.step(), StepOutcome::Blocked);
        }
        assert_eq!(sim.config().occ_bytes(), c.occ_bytes());
        assert_eq!(sim.clock(), 0.0, "a blocked step consumes no time");
        // run() truncates and flags.
        let series = run(&mut sim, &[Observable::VacancyCount], &[1.0, 2.0], 1000).unwrap();
        assert!(series[0].truncated);
        assert!(series[0].times.is_empty());
    }

    #[test]
    fn same_seed_runs_are_bit_identical() {
        let m = bt1d();
        let domain = Domain::line(12, BoundaryMode::Empty).unwrap();
        let c = Configuration::all_occupied(domain);
        let schedule: Vec<f64> = (1..=20).map(|k| 0.5 * k as f64).collect();
        let obs = [
            Observable::MeanOccupancy,
            Observable::SiteOccupancy(s(&[6])),
        ];
        let mut a = SimState::with_reservoirs(&m, c.clone(), 0.4, 97).unwrap();
        let mut b = SimState::with_reservoirs(&m, c, 0.4, 97).unwrap();
        let sa = run(&mut a, &obs, &schedule, 1 << 20).unwrap();
        let sb = run(&mut b, &obs, &schedule, 1 << 20).unwrap();
        assert_eq!(sa, sb, "same seed must replay identically");
        assert_eq!(a.steps(), b.steps());
        assert!(sa[0].values.iter().any(|&v| v < 1.0), "reservoirs emptied something");
    }

    #[test]
    fn zero_length_schedule_gives_empty_series() {
        let m = bt1d();
        let domain = Domain::line(8, BoundaryMode::Periodic).unwrap();
        let c = Configuration::with_vacancies(domain, &[s(&[4]), s(&[5])]).unwrap();
        let mut sim = SimState::exchange(&m, c, 1).unwrap();
        let series = run(&mut sim, &[Observable::VacancyCount], &[], 100).unwrap();
        assert_eq!(series.len(), 1);
        assert!(series[0].times.is_empty() && series[0].values.is_empty());
        assert!(!series[0].truncated);
    }

    #[test]
    fn tiny_step_budget_is_a_budget_error() {
        let m = bt1d();
        let domain = Domain::line(10, BoundaryMode::Periodic).unwrap();
        let c = Configuration::with_vacancies(
            domain,
            &[s(&[1]), s(&[2]), s(&[5]), s(&[6])],
        )
        .unwrap();
        let mut sim = SimState::exchange(&m, c, 8).unwrap();
        let err = sim.advance_to(1e6, 10).unwrap_err();
        assert!(matches!(err, Error::Budget(_)), "got {err:?}");
    }

    #[test]
    fn reservoir_run_relaxes_to_the_product_density() {
        // Start from all occupied and let the boundaries thermalize the box;
        // the exact relaxation time calibrates burn-in and sample spacing.
        let m = bt1d();
        let l = 8;
        let q = 0.4;
        let gen = build_reservoir_generator(&m, l, q, 1 << 20).unwrap();
        let tau = relaxation_time(&gen, None).unwrap().relaxation_time;
        assert!(tau.is_finite() && tau > 0.0);
        let domain = Domain::line(l, BoundaryMode::Empty).unwrap();
        let mut sim = SimState::with_reservoirs(
            &m,
            Configuration::all_occupied(domain),
            q,
            20260816,
        )
        .unwrap();
        let burnin = 10.0 * tau;
        let spacing = 2.0 * tau;
        let samples = 400usize;
        let schedule: Vec<f64> = (0..samples)
            .map(|k| burnin + spacing * k as f64)
            .collect();
        let series = run(&mut sim, &[Observable::MeanOccupancy], &schedule, 1 << 24).unwrap();
        assert!(!series[0].truncated, "reservoirs never block");
        let mean: f64 = series[0].values.iter().sum::<f64>() / samples as f64;
        // Samples two relaxation times apart are nearly independent; allow
        // residual correlation with a conservative inflation of the error.
        let var: f64 = series[0]
            .values
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / (samples as f64 - 1.0);
        let se = (var / samples as f64).sqrt() * 1.5;
        let expect = 1.0 - q;
        assert!(
            (mean - expect).abs() < 3.0 * se.max(1e-3),
            "density {mean} vs product value {expect} (se {se})"
        );
    }

    #[test]
    fn transition_frequencies_pass_a_chi_square_test() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let m = bt1d();
        let l = 6;
        let gen = build_torus_generator(&m, l, 1 << 20).unwrap();
        let domain = Domain::line(l, BoundaryMode::Periodic).unwrap();
        let c = Configuration::with_vacancies(domain, &[s(&[1]), s(&[2]), s(&[4])]).unwrap();
        let mut sim = SimState::exchange(&m, c, 31).unwrap();
        let steps = 60_000usize;
        let mut counts: BTreeMap<(u64, u64), u64> = BTreeMap::new();
        let mut visits: BTreeMap<u64, u64> = BTreeMap::new();
        for _ in 0..steps {
            let before = mask_of(sim.config());
            match sim.step() {
                StepOutcome::Fired { .. } => {}
                StepOutcome::Blocked => panic!("this sector keeps moving"),
            }
            let after = mask_of(sim.config());
            *counts.entry((before, after)).or_insert(0) += 1;
            *visits.entry(before).or_insert(0) += 1;
        }
        let mut statistic = 0.0f64;
        let mut dof = 0i64;
        for (&mask, &n_visits) in &visits {
            if n_visits < 25 {
                continue;
            }
            let i = gen.space().index_of_mask(mask).unwrap();
            let exit = gen.exit_rate(i);
            let mut merged: BTreeMap<u64, f64> = BTreeMap::new();
            for &(j, r) in gen.row(i) {
                *merged.entry(gen.space().mask(j as usize)).or_insert(0.0) += r;
            }
            for (&target, &rate) in &merged {
                let expected = n_visits as f64 * rate / exit;
                let observed = counts.get(&(mask, target)).copied().unwrap_or(0) as f64;
                statistic += (observed - expected) * (observed - expected) / expected;
            }
            dof += merged.len() as i64 - 1;
        }
        assert!(dof > 10, "the walk visited enough states to test");
        let dist = ChiSquared::new(dof as f64).unwrap();
        let threshold = dist.inverse_cdf(0.99);
        assert!(
            statistic < threshold,
            "chi-square {statistic:.1} exceeds the 1% threshold {threshold:.1} at {dof} dof"
        );
    }

    #[test]
    fn free_tracer_walk_has_unit_msd_slope() {
        // With every site empty the escort cluster never blocks, so the tag
        // is a continuous-time walk jumping each way at rate 1:
        // E[(u.z_t)^2] = 2t for unit u.
        let dynamics = aux_tracer_dynamics(&bt1d_cert()).unwrap();
        let domain = Domain::line(64, BoundaryMode::Periodic).unwrap();
        let t = 9.0;
        let msd = tracer_run(
            &dynamics,
            &domain,
            1.0,
            &[1.0],
            &[t],
            600,
            2024,
            1 << 20,
        )
        .unwrap();
        let slope = msd.msd_u[0] / (2.0 * t);
        let se = msd.msd_u_se[0] / (2.0 * t);
        assert!(se < 0.08, "standard error {se} should be tight");
        assert!(
            (slope - 1.0).abs() < 3.0 * se,
            "free walk slope {slope} differs from 1 beyond 3 standard errors ({se})"
        );
    }

    #[test]
    fn blocked_tracer_never_moves() {
        // All occupied: the escort cluster is never empty, every replica is
        // frozen and the displacement stays exactly zero.
        let dynamics = aux_tracer_dynamics(&bt1d_cert()).unwrap();
        let domain = Domain::line(32, BoundaryMode::Periodic).unwrap();
        let msd = tracer_run(
            &dynamics,
            &domain,
            0.0,
            &[1.0],
            &[1.0, 5.0, 25.0],
            40,
            7,
            1 << 16,
        )
        .unwrap();
        assert_eq!(msd.msd_u, vec![0.0; 3]);
        assert_eq!(msd.msd_norm, vec![0.0; 3]);
    }

    #[test]
    fn tagged_engine_agrees_with_direct_dynamics_bookkeeping() {
        // Walk the engine a few steps and cross-check rates against the
        // dynamics evaluated from scratch at the current state.
        let dynamics = aux_tracer_dynamics(&bt1d_cert()).unwrap();
        let domain = Domain::line(24, BoundaryMode::Periodic).unwrap();
        let pattern: Vec<Site> = crate::moves::aux_cluster(&bt1d_cert());
        let z0 = s(&[12]);
        let vacancies: Vec<Site> = pattern.iter().map(|p| p.add(&z0)).collect();
        let config = Configuration::with_vacancies(domain, &vacancies).unwrap();
        let state = TracerState::new(config, z0).unwrap();
        let mut sim = SimState::tagged(&dynamics, state, 99).unwrap();
        for _ in 0..200 {
            assert_eq!(sim.rebuild_deviation(), 0.0);
            match sim.step() {
                StepOutcome::Fired { .. } => {}
                StepOutcome::Blocked => panic!("the glide never blocks itself"),
            }
            let z = sim.tracer().unwrap();
            assert!(
                sim.config().occupied(z),
                "the tag must sit on a particle"
            );
        }
        assert_ne!(sim.displacement(), Some(s(&[0])));
    }

    #[test]
    fn autocorrelation_recovers_a_synthetic_decay() {
        // AR(1) with lag-one correlation r has autocorrelation r^k, i.e.
        // tau = -dt / ln r.
        let mut rng = crate::rng::single(12);
        let r: f64 = 0.8;
        let dt = 0.5;
        let n = 20_000usize;
        let noise = (1.0 - r * r).sqrt();
        let mut x = 0.0f64;
        let mut times = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for k in 0..n {
            let g: f64 = {
                // Box-Muller from two uniforms.
                let u1: f64 = 1.0 - rng.gen::<f64>();
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            };
            x = r * x + noise * g;
            times.push(dt * k as f64);
            values.push(x);
        }
        let series = TimeSeries::new("synthetic", times, values, 12, "ar1").unwrap();
        let est = autocorrelation(&series).unwrap();
        let expected = -dt / r.ln();
        assert!(!est.degenerate && !est.wide_band);
        assert!(
            (est.tau - expected).abs() < 0.25 * expected,
            "fitted {} vs AR(1) value {expected}",
            est.tau
        );
        assert!(est.tau_lo < est.tau && est.tau < est.tau_hi);
    }

    #[test]
    fn autocorrelation_flags_degenerate_and_white_series() {
        let times: Vec<f64> = (0..256).map(|k| k as f64).collect();
        let constant = TimeSeries::new("const", times.clone(), vec![2.5; 256], 0, "x").unwrap();
        let est = autocorrelation(&constant).unwrap();
        assert!(est.degenerate && est.tau.is_nan());

        let mut rng = crate::rng::single(5);
        let values: Vec<f64> = (0..256).map(|_| rng.gen::<f64>()).collect();
        let white = TimeSeries::new("white", times, values, 5, "x").unwrap();
        let est = autocorrelation(&white).unwrap();
        assert!(!est.degenerate);
        assert!(
            est.tau_hi <= 1.0 + 1e-12 || est.lags_used <= 1,
            "white noise should decay within the sampling interval, got tau={} hi={}",
            est.tau,
            est.tau_hi
        );
    }

    #[test]
    fn autocorrelation_matches_the_exact_relaxation_time() {
        // Stationary reservoir run; the spectral gap is the oracle.
        let m = bt1d();
        let l = 8;
        let q = 0.5;
        let gen = build_reservoir_generator(&m, l, q, 1 << 20).unwrap();
        let tau = relaxation_time(&gen, None).unwrap().relaxation_time;
        let domain = Domain::line(l, BoundaryMode::Empty).unwrap();
        let mut rng = crate::rng::single(404);
        let bits: Vec<bool> = (0..l as usize).map(|_| rng.gen::<f64>() >= q).collect();
        let config = Configuration::from_bits(domain, &bits).unwrap();
        let mut sim = SimState::with_reservoirs(&m, config, q, 404).unwrap();
        let dt = tau / 2.0;
        let n = 6000usize;
        let schedule: Vec<f64> = (1..=n).map(|k| dt * k as f64).collect();
        let series = run(
            &mut sim,
            &[Observable::SiteOccupancy(s(&[4]))],
            &schedule,
            1 << 26,
        )
        .unwrap();
        let est = autocorrelation(&series[0]).unwrap();
        assert!(!est.degenerate);
        assert!(
            est.tau > tau / 3.0 && est.tau < tau * 3.0,
            "fitted decay {} vs exact relaxation time {tau}",
            est.tau
        );
    }
}
