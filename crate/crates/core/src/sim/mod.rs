//! Exact event-driven simulation of the full compartment model.
//!
//! The state is the ordered tuple of compartment contents. Index bookkeeping
//! is fixed so that trajectories are reproducible:
//!
//! * inflow appends the drawn content at the end;
//! * exit deletes a uniformly chosen compartment, later ones shift down;
//! * coagulation picks a uniform unordered pair, stores the sum at the lower
//!   index and deletes the higher one;
//! * fragmentation picks a uniform compartment, draws daughter `A` with
//!   independent Binomial(count, 1/2) entries, deletes the parent and appends
//!   `A` then `B = parent - A`;
//! * reaction `r` fires in compartment `j` with probability
//!   `lambda_r(X_j) / sum_i lambda_r(X_i)`.
//!
//! Randomness comes from [`SimRng`] (ChaCha8) through the samplers in
//! [`sampling`]. A run draws the waiting time first, then the event category
//! in the order inflow, exit, fragmentation, coagulation, internal.

mod ensemble;
pub mod sampling;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use ensemble::{ensemble, EnsembleOptions, SampleMatrix, SampleRow};

use crate::coarse::{for_each_sub_vector, split_prob};
use crate::crn::propensity;
use crate::model::{InflowDistribution, RnicModel};
use crate::state::{Fnv64, StateVec};
use sampling::{binomial_half, exponential, poisson, uniform01, uniform_index};

/// The engine's random number generator.
pub type SimRng = ChaCha8Rng;

/// Default cap on the number of events of one trajectory.
pub const DEFAULT_MAX_EVENTS: u64 = 10_000_000;

/// Incrementally maintained propensity totals are rebuilt this often.
pub const RECOMPUTE_INTERVAL: u64 = 1 << 16;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("absorbing state: total event rate is zero")]
    AbsorbingState,
    #[error("initial state has a compartment of dimension {got}, model has {expected} species")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("replay failed at event {index}: {reason}")]
    Replay { index: usize, reason: String },
    #[error("cannot parse state '{0}': expected a list like [(1,0),(0,2)]")]
    StateParse(String),
}

/// Ordered compartment contents.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimState(Vec<StateVec>);

impl SimState {
    pub fn new(compartments: Vec<StateVec>) -> Self {
        SimState(compartments)
    }

    pub fn empty() -> Self {
        SimState(Vec::new())
    }

    pub fn compartments(&self) -> &[StateVec] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Species totals over all compartments.
    pub fn totals(&self, dim: usize) -> Vec<u64> {
        let mut t = vec![0u64; dim];
        for x in &self.0 {
            for (acc, &c) in t.iter_mut().zip(x.counts()) {
                *acc += u64::from(c);
            }
        }
        t
    }

    /// FNV-1a hash of the ordered contents.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv64::new();
        h.write_u32(self.0.len() as u32);
        for x in &self.0 {
            for &c in x.counts() {
                h.write_u32(c);
            }
        }
        h.finish()
    }

    /// Applies an event's bookkeeping. Internal events need the model's
    /// reaction list.
    pub fn apply(&mut self, kind: &EventKind, model: &RnicModel) -> Result<(), String> {
        let m = self.0.len();
        match kind {
            EventKind::Inflow { sample } => self.0.push(sample.clone()),
            EventKind::Exit { idx } => {
                if *idx >= m {
                    return Err(format!("exit index {idx} out of range"));
                }
                self.0.remove(*idx);
            }
            EventKind::Coag { lo, hi } => {
                if lo >= hi || *hi >= m {
                    return Err(format!("invalid coagulation pair ({lo},{hi})"));
                }
                let gone = self.0.remove(*hi);
                self.0[*lo].add_assign(&gone);
            }
            EventKind::Frag { idx, a, b } => {
                if *idx >= m || a + b != self.0[*idx] {
                    return Err(format!("invalid fragmentation of index {idx}"));
                }
                self.0.remove(*idx);
                self.0.push(a.clone());
                self.0.push(b.clone());
            }
            EventKind::Internal { idx, reaction } => {
                let r = model.chemistry.reactions.get(*reaction).ok_or("unknown reaction")?;
                let x = self.0.get_mut(*idx).ok_or("internal index out of range")?;
                *x = crate::crn::apply_reaction(x, r).map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for SimState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        f.write_str("]")
    }
}

impl std::str::FromStr for SimState {
    type Err = SimError;

    /// Parses the [`Display`](fmt::Display) form, `[(1,0),(0,2)]`; `[]` is empty.
    fn from_str(s: &str) -> Result<Self, SimError> {
        let bad = || SimError::StateParse(s.to_string());
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut rest = compact.strip_prefix('[').and_then(|b| b.strip_suffix(']')).ok_or_else(bad)?;
        let mut out = Vec::new();
        while !rest.is_empty() {
            let body = rest.strip_prefix('(').ok_or_else(bad)?;
            let end = body.find(')').ok_or_else(bad)?;
            let counts = body[..end].split(',').map(str::parse::<u32>).collect::<Result<Vec<_>, _>>().map_err(|_| bad())?;
            if out.first().is_some_and(|x: &StateVec| x.dim() != counts.len()) {
                return Err(bad());
            }
            out.push(StateVec::from(counts));
            rest = &body[end + 1..];
            if let Some(r) = rest.strip_prefix(',') {
                if r.is_empty() {
                    return Err(bad());
                }
                rest = r;
            } else if !rest.is_empty() {
                return Err(bad());
            }
        }
        Ok(SimState(out))
    }
}

impl fmt::Debug for SimState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// What happened at one event. Indices are 0-based and refer to the state
/// just before the event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Inflow { sample: StateVec },
    Exit { idx: usize },
    Coag { lo: usize, hi: usize },
    Frag { idx: usize, a: StateVec, b: StateVec },
    Internal { idx: usize, reaction: usize },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Inflow { .. } => "Inflow",
            EventKind::Exit { .. } => "Exit",
            EventKind::Coag { .. } => "Coag",
            EventKind::Frag { .. } => "Frag",
            EventKind::Internal { .. } => "Internal",
        }
    }

    fn args(&self) -> Value {
        match self {
            EventKind::Inflow { sample } => json!([sample]),
            EventKind::Exit { idx } => json!([idx]),
            EventKind::Coag { lo, hi } => json!([lo, hi]),
            EventKind::Frag { idx, a, b } => json!([idx, a, b]),
            EventKind::Internal { idx, reaction } => json!([idx, reaction]),
        }
    }

    fn from_parts(kind: &str, args: &Value) -> Option<Self> {
        let idx = |i: usize| args.get(i)?.as_u64().map(|v| v as usize);
        let vec = |i: usize| serde_json::from_value::<StateVec>(args.get(i)?.clone()).ok();
        Some(match kind {
            "Inflow" => EventKind::Inflow { sample: vec(0)? },
            "Exit" => EventKind::Exit { idx: idx(0)? },
            "Coag" => EventKind::Coag { lo: idx(0)?, hi: idx(1)? },
            "Frag" => EventKind::Frag { idx: idx(0)?, a: vec(1)?, b: vec(2)? },
            "Internal" => EventKind::Internal { idx: idx(0)?, reaction: idx(1)? },
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    /// [`SimState::digest`] of the state right after the event.
    pub digest: u64,
}

impl EventRecord {
    pub fn to_json(&self) -> Value {
        json!({"t": self.time, "kind": self.kind.name(), "args": self.kind.args(), "digest": self.digest})
    }

    pub fn from_json(v: &Value) -> Option<Self> {
        Some(EventRecord {
            time: v.get("t")?.as_f64()?,
            kind: EventKind::from_parts(v.get("kind")?.as_str()?, v.get("args")?)?,
            digest: v.get("digest")?.as_u64()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndReason {
    TimeReached,
    MaxEventsReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub initial: SimState,
    pub events: Vec<EventRecord>,
    pub end_time: f64,
    pub end_reason: EndReason,
}

impl Trajectory {
    /// One JSON object per event.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_json().to_string());
            out.push('\n');
        }
        out
    }

    /// Parses event lines written by [`Trajectory::to_json_lines`].
    pub fn events_from_json_lines(text: &str) -> Result<Vec<EventRecord>, SimError> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(index, l)| {
                serde_json::from_str::<Value>(l)
                    .ok()
                    .and_then(|v| EventRecord::from_json(&v))
                    .ok_or(SimError::Replay { index, reason: "malformed event line".into() })
            })
            .collect()
    }

    /// Replays the events from the initial state, checking every digest, and
    /// calls `visit(time, state)` for the initial state and after each event.
    pub fn replay(&self, model: &RnicModel, mut visit: impl FnMut(f64, &SimState)) -> Result<SimState, SimError> {
        let mut s = self.initial.clone();
        visit(0.0, &s);
        for (index, e) in self.events.iter().enumerate() {
            s.apply(&e.kind, model).map_err(|reason| SimError::Replay { index, reason })?;
            if s.digest() != e.digest {
                return Err(SimError::Replay { index, reason: "digest mismatch".into() });
            }
            visit(e.time, &s);
        }
        Ok(s)
    }
}

/// Inflow law prepared for sampling.
#[derive(Debug, Clone)]
enum InflowSampler {
    None,
    Point(StateVec),
    Categorical { states: Vec<StateVec>, cumulative: Vec<f64> },
    Poisson(Vec<f64>),
}

impl InflowSampler {
    fn new(mu: Option<&InflowDistribution>) -> Self {
        match mu {
            None => InflowSampler::None,
            Some(InflowDistribution::PointMass(x)) => InflowSampler::Point(x.clone()),
            Some(InflowDistribution::Categorical(items)) => {
                let mut acc = 0.0;
                let cumulative = items
                    .iter()
                    .map(|(_, p)| {
                        acc += p;
                        acc
                    })
                    .collect();
                InflowSampler::Categorical { states: items.iter().map(|(x, _)| x.clone()).collect(), cumulative }
            }
            Some(InflowDistribution::ProductPoisson(m)) => InflowSampler::Poisson(m.clone()),
        }
    }

    fn sample<R: rand::RngCore>(&self, rng: &mut R) -> StateVec {
        match self {
            InflowSampler::None => unreachable!("inflow fired without an inflow law"),
            InflowSampler::Point(x) => x.clone(),
            InflowSampler::Categorical { states, cumulative } => {
                let u = uniform01(rng) * cumulative.last().copied().unwrap_or(1.0);
                let i = cumulative.iter().position(|&c| u < c).unwrap_or(states.len() - 1);
                states[i].clone()
            }
            InflowSampler::Poisson(means) => StateVec::new(means.iter().map(|&m| poisson(rng, m) as u32)),
        }
    }
}

/// Live simulation with cached per-compartment propensities.
#[derive(Debug, Clone)]
pub struct Simulator<'m> {
    model: &'m RnicModel,
    inflow: InflowSampler,
    state: SimState,
    time: f64,
    /// Time of the next event when it has been drawn but lies beyond the last
    /// horizon. The state cannot change before it, so its type is drawn later.
    pending: Option<f64>,
    nr: usize,
    /// `props[j * nr + r]` is `lambda_r` of compartment `j`.
    props: Vec<f64>,
    reaction_totals: Vec<f64>,
    events: u64,
    since_recompute: u64,
}

impl<'m> Simulator<'m> {
    pub fn new(model: &'m RnicModel, init: SimState) -> Result<Self, SimError> {
        let d = model.dim();
        if let Some(x) = init.compartments().iter().find(|x| x.dim() != d) {
            return Err(SimError::DimensionMismatch { expected: d, got: x.dim() });
        }
        let nr = model.chemistry.reactions.len();
        let mut sim = Simulator {
            model,
            inflow: InflowSampler::new(model.mu.as_ref()),
            state: init,
            time: 0.0,
            pending: None,
            nr,
            props: Vec::new(),
            reaction_totals: vec![0.0; nr],
            events: 0,
            since_recompute: 0,
        };
        sim.recompute();
        Ok(sim)
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    fn recompute(&mut self) {
        self.props.clear();
        self.reaction_totals.iter_mut().for_each(|t| *t = 0.0);
        for x in &self.state.0 {
            for (r, tot) in self.model.chemistry.reactions.iter().zip(self.reaction_totals.iter_mut()) {
                let a = propensity(r, x);
                self.props.push(a);
                *tot += a;
            }
        }
        self.since_recompute = 0;
    }

    fn compartment_props(&self, x: &StateVec) -> impl Iterator<Item = f64> + '_ {
        let x = x.clone();
        self.model.chemistry.reactions.iter().map(move |r| propensity(r, &x))
    }

    fn remove_props(&mut self, j: usize) {
        let nr = self.nr;
        for (r, a) in self.props.drain(j * nr..(j + 1) * nr).enumerate() {
            self.reaction_totals[r] -= a;
        }
    }

    fn push_props(&mut self, x: &StateVec) {
        let new: Vec<f64> = self.compartment_props(x).collect();
        for (r, a) in new.into_iter().enumerate() {
            self.props.push(a);
            self.reaction_totals[r] += a;
        }
    }

    fn refresh_props(&mut self, j: usize) {
        let new: Vec<f64> = self.compartment_props(&self.state.0[j]).collect();
        for (r, a) in new.into_iter().enumerate() {
            let slot = &mut self.props[j * self.nr + r];
            self.reaction_totals[r] += a - *slot;
            *slot = a;
        }
    }

    /// Clears cancellation residue: propensities are multiples of the rate
    /// constant, so a total far below it can only be rounding error.
    fn clean_totals(&mut self) {
        for (r, reaction) in self.model.chemistry.reactions.iter().enumerate() {
            if self.reaction_totals[r] < 1e-9 * reaction.rate_constant {
                self.reaction_totals[r] = self.props.iter().skip(r).step_by(self.nr).sum();
            }
        }
    }

    fn internal_total(&self) -> f64 {
        self.reaction_totals.iter().sum()
    }

    /// Rates of the five event categories in selection order.
    fn category_rates(&self) -> [f64; 5] {
        let p = &self.model.compartments;
        let m = self.state.len() as f64;
        [p.kappa_i, p.kappa_e * m, p.kappa_f * m, p.kappa_c * m * (m - 1.0) / 2.0, self.internal_total()]
    }

    pub fn total_rate(&self) -> f64 {
        self.category_rates().iter().sum()
    }

    /// Draws and applies the next event if it happens no later than
    /// `horizon`. Otherwise the clock moves to `horizon` and `None` is
    /// returned; an absorbing state does the same for a finite horizon.
    pub fn next_event(&mut self, rng: &mut SimRng, horizon: f64) -> Result<Option<EventRecord>, SimError> {
        let rates = self.category_rates();
        let total: f64 = rates.iter().sum();
        let t_next = match self.pending.take() {
            Some(t) => t,
            None => {
                if total <= 0.0 {
                    if horizon.is_finite() {
                        self.time = horizon.max(self.time);
                        return Ok(None);
                    }
                    return Err(SimError::AbsorbingState);
                }
                self.time + exponential(rng, total)
            }
        };
        if t_next > horizon {
            self.pending = Some(t_next);
            self.time = horizon;
            return Ok(None);
        }
        self.time = t_next;
        let kind = self.choose_event(rng, &rates, total);
        self.state.apply(&kind, self.model).expect("engine produced a valid event");
        self.update_cache(&kind);
        self.events += 1;
        self.since_recompute += 1;
        if self.since_recompute >= RECOMPUTE_INTERVAL {
            self.recompute();
        }
        Ok(Some(EventRecord { time: t_next, kind, digest: self.state.digest() }))
    }

    fn choose_event(&self, rng: &mut SimRng, rates: &[f64; 5], total: f64) -> EventKind {
        let mut u = uniform01(rng) * total;
        let mut cat = 4;
        for (c, &r) in rates.iter().enumerate() {
            if u < r {
                cat = c;
                break;
            }
            u -= r;
        }
        // rounding can push u past the last bucket; fall back to the last nonempty one
        if rates[cat] <= 0.0 {
            cat = rates.iter().rposition(|&r| r > 0.0).expect("positive total rate");
        }
        let m = self.state.len();
        match cat {
            0 => EventKind::Inflow { sample: self.inflow.sample(rng) },
            1 => EventKind::Exit { idx: uniform_index(rng, m) },
            2 => {
                let idx = uniform_index(rng, m);
                let z = &self.state.0[idx];
                let a = StateVec::new(z.counts().iter().map(|&c| binomial_half(rng, c)));
                let b = z.checked_sub(&a).expect("daughter within parent");
                EventKind::Frag { idx, a, b }
            }
            3 => {
                let i = uniform_index(rng, m);
                let mut j = uniform_index(rng, m - 1);
                if j >= i {
                    j += 1;
                }
                EventKind::Coag { lo: i.min(j), hi: i.max(j) }
            }
            _ => {
                let mut v = uniform01(rng) * rates[4];
                let mut reaction = self.nr - 1;
                for (r, &t) in self.reaction_totals.iter().enumerate() {
                    if v < t {
                        reaction = r;
                        break;
                    }
                    v -= t;
                }
                if self.reaction_totals[reaction] <= 0.0 {
                    reaction = self.reaction_totals.iter().rposition(|&t| t > 0.0).expect("positive internal rate");
                }
                let column = || self.props.iter().skip(reaction).step_by(self.nr);
                let col_total: f64 = self.reaction_totals[reaction];
                let mut w = uniform01(rng) * col_total;
                let mut idx = None;
                for (j, &a) in column().enumerate() {
                    if a > 0.0 {
                        idx = Some(j);
                        if w < a {
                            break;
                        }
                        w -= a;
                    }
                }
                EventKind::Internal { idx: idx.expect("reaction has a positive compartment"), reaction }
            }
        }
    }

    fn update_cache(&mut self, kind: &EventKind) {
        match kind {
            EventKind::Inflow { sample } => self.push_props(&sample.clone()),
            EventKind::Exit { idx } => self.remove_props(*idx),
            EventKind::Coag { lo, hi } => {
                self.remove_props(*hi);
                self.refresh_props(*lo);
            }
            EventKind::Frag { idx, a, b } => {
                self.remove_props(*idx);
                self.push_props(&a.clone());
                self.push_props(&b.clone());
            }
            EventKind::Internal { idx, .. } => self.refresh_props(*idx),
        }
        self.clean_totals();
    }
}

/// `kI + (kE + kF) M + kC M(M-1)/2 + sum_j sum_r lambda_r(X_j)`.
pub fn total_rate(s: &SimState, model: &RnicModel) -> f64 {
    let p = &model.compartments;
    let m = s.len() as f64;
    let internal: f64 =
        s.compartments().iter().flat_map(|x| model.chemistry.reactions.iter().map(move |r| propensity(r, x))).sum();
    p.kappa_i + (p.kappa_e + p.kappa_f) * m + p.kappa_c * m * (m - 1.0) / 2.0 + internal
}

/// One event from `s`: waiting time, record (timed from 0) and new state.
pub fn step(s: &SimState, model: &RnicModel, rng: &mut SimRng) -> Result<(f64, EventRecord, SimState), SimError> {
    let mut sim = Simulator::new(model, s.clone())?;
    let ev = sim.next_event(rng, f64::INFINITY)?.expect("infinite horizon always yields an event");
    Ok((ev.time, ev, sim.state))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub events: u64,
    pub end_time: f64,
    pub end_reason: EndReason,
}

/// Runs until `t_end` or `max_events`, calling `observe(event, state_after)`
/// after every event.
pub fn run(
    model: &RnicModel,
    init: SimState,
    t_end: f64,
    max_events: u64,
    rng: &mut SimRng,
    mut observe: impl FnMut(&EventRecord, &SimState),
) -> Result<RunSummary, SimError> {
    let mut sim = Simulator::new(model, init)?;
    while sim.events() < max_events {
        match sim.next_event(rng, t_end)? {
            Some(ev) => observe(&ev, sim.state()),
            None => return Ok(RunSummary { events: sim.events(), end_time: t_end, end_reason: EndReason::TimeReached }),
        }
    }
    Ok(RunSummary { events: sim.events(), end_time: sim.time(), end_reason: EndReason::MaxEventsReached })
}

pub fn simulate(model: &RnicModel, init: SimState, t_end: f64, max_events: u64, seed: u64) -> Result<Trajectory, SimError> {
    let mut rng = rng_from_seed(seed);
    let mut events = Vec::new();
    let summary = run(model, init.clone(), t_end, max_events, &mut rng, |e, _| events.push(e.clone()))?;
    Ok(Trajectory { seed, initial: init, events, end_time: summary.end_time, end_reason: summary.end_reason })
}

/// `(1/T) int_0^T f(state(s)) ds` over the piecewise-constant path, with
/// `T` the trajectory's end time.
pub fn time_average(traj: &Trajectory, model: &RnicModel, f: impl Fn(&SimState) -> f64) -> Result<f64, SimError> {
    let mut acc = 0.0;
    let mut last_t = 0.0;
    let mut last_v = 0.0;
    traj.replay(model, |t, s| {
        acc += last_v * (t - last_t);
        last_t = t;
        last_v = f(s);
    })?;
    acc += last_v * (traj.end_time - last_t);
    Ok(if traj.end_time > 0.0 { acc / traj.end_time } else { last_v })
}

/// Streaming time average of `f` over a fresh run, for runs too long to log.
pub fn run_time_average(
    model: &RnicModel,
    init: SimState,
    t_end: f64,
    max_events: u64,
    rng: &mut SimRng,
    f: impl Fn(&SimState) -> f64,
) -> Result<(f64, SimState, RunSummary), SimError> {
    let mut acc = 0.0;
    let mut last_t = 0.0;
    let mut last_v = f(&init);
    let mut last_state = init.clone();
    let summary = run(model, init, t_end, max_events, rng, |e, s| {
        acc += last_v * (e.time - last_t);
        last_t = e.time;
        last_v = f(s);
        last_state = s.clone();
    })?;
    acc += last_v * (summary.end_time - last_t);
    let avg = if summary.end_time > 0.0 { acc / summary.end_time } else { last_v };
    Ok((avg, last_state, summary))
}

/// Every possible outcome of the engine's next event with its rate: the
/// category rate times the probability the engine picks that outcome.
/// `inflow_support` is the (possibly truncated) support of the inflow law.
pub fn outcome_rates(s: &SimState, model: &RnicModel, inflow_support: &[(StateVec, f64)]) -> Vec<(EventKind, f64)> {
    let p = &model.compartments;
    let m = s.len();
    let mut out = Vec::new();
    if p.kappa_i > 0.0 {
        for (x, q) in inflow_support {
            out.push((EventKind::Inflow { sample: x.clone() }, p.kappa_i * q));
        }
    }
    for idx in 0..m {
        if p.kappa_e > 0.0 {
            out.push((EventKind::Exit { idx }, p.kappa_e));
        }
        if p.kappa_f > 0.0 {
            let z = &s.compartments()[idx];
            for_each_sub_vector(z, |a| {
                let b = z.checked_sub(a).unwrap();
                out.push((EventKind::Frag { idx, a: a.clone(), b }, p.kappa_f * split_prob(z, a)));
            });
        }
    }
    if p.kappa_c > 0.0 {
        for lo in 0..m {
            for hi in lo + 1..m {
                out.push((EventKind::Coag { lo, hi }, p.kappa_c));
            }
        }
    }
    for (idx, x) in s.compartments().iter().enumerate() {
        for (reaction, r) in model.chemistry.reactions.iter().enumerate() {
            let a = propensity(r, x);
            if a > 0.0 {
                out.push((EventKind::Internal { idx, reaction }, a));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    fn sv<const N: usize>(v: [u32; N]) -> StateVec {
        StateVec::from(v)
    }

    fn ex_4_17() -> RnicModel {
        parse_model(
            "species A B; rxn A + B -> 0 @ 10; rxn 0 -> B @ 2; rxn 2B -> 0 @ 10; rxn 0 -> A @ 1;
             compartments I=1 E=0 F=0 C=2; mu point A=3;",
        )
        .unwrap()
    }

    fn ex_2_5_state() -> SimState {
        SimState::new(vec![sv([2, 2]), sv([0, 1]), sv([2, 2]), sv([1, 12])])
    }

    #[test]
    fn state_text_round_trip() {
        let s = ex_2_5_state();
        assert_eq!(s.to_string().parse::<SimState>().unwrap(), s);
        assert_eq!(" [ ] ".parse::<SimState>().unwrap(), SimState::empty());
        for bad in ["(1,2)", "[(1,2),]", "[(1,2)(3,4)]", "[(1,2),(3)]", "[(x)]"] {
            assert!(bad.parse::<SimState>().is_err(), "{bad}");
        }
    }

    #[test]
    fn total_rates() {
        let m = ex_4_17();
        assert_eq!(total_rate(&SimState::new(vec![sv([0, 0])]), &m), 4.0);
        assert_eq!(total_rate(&SimState::empty(), &m), 1.0);
        let dead = parse_model("species S; compartments I=0 E=0 F=0 C=0;").unwrap();
        assert_eq!(total_rate(&SimState::new(vec![sv([3])]), &dead), 0.0);
        let sim = Simulator::new(&m, ex_2_5_state()).unwrap();
        assert!((sim.total_rate() - total_rate(&ex_2_5_state(), &m)).abs() < 1e-12);
    }

    #[test]
    fn bookkeeping_conventions() {
        let m = parse_model("species A B; rxn A + 2B -> A @ 1; compartments I=1 E=1 F=1 C=1; mu point A=3 B=4;").unwrap();
        let mut s = ex_2_5_state();
        s.apply(&EventKind::Inflow { sample: sv([3, 4]) }, &m).unwrap();
        assert_eq!(s.to_string(), "[(2,2),(0,1),(2,2),(1,12),(3,4)]");
        let mut s = ex_2_5_state();
        s.apply(&EventKind::Coag { lo: 0, hi: 1 }, &m).unwrap();
        assert_eq!(s.to_string(), "[(2,3),(2,2),(1,12)]");
        let mut s = ex_2_5_state();
        s.apply(&EventKind::Frag { idx: 0, a: sv([1, 2]), b: sv([1, 0]) }, &m).unwrap();
        assert_eq!(s.to_string(), "[(0,1),(2,2),(1,12),(1,2),(1,0)]");
        let mut s = ex_2_5_state();
        s.apply(&EventKind::Internal { idx: 3, reaction: 0 }, &m).unwrap();
        assert_eq!(s.compartments()[3], sv([1, 10]));
        let mut s = SimState::new(vec![sv([5, 5])]);
        s.apply(&EventKind::Exit { idx: 0 }, &m).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn absorbing_state_errors() {
        let m = parse_model("species S; compartments I=0 E=0 F=0 C=0;").unwrap();
        let mut rng = rng_from_seed(0);
        assert_eq!(step(&SimState::empty(), &m, &mut rng).unwrap_err(), SimError::AbsorbingState);
        let t = simulate(&m, SimState::empty(), 5.0, 100, 0).unwrap();
        assert!(t.events.is_empty());
        assert_eq!(t.end_reason, EndReason::TimeReached);
        assert_eq!(t.end_time, 5.0);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let m = ex_4_17();
        let a = simulate(&m, SimState::empty(), 20.0, 100_000, 42).unwrap();
        let b = simulate(&m, SimState::empty(), 20.0, 100_000, 42).unwrap();
        assert_eq!(a, b);
        assert!(!a.events.is_empty());
        let c = simulate(&m, SimState::empty(), 20.0, 100_000, 43).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn max_events_guard() {
        let t = simulate(&ex_4_17(), SimState::empty(), 1e9, 10, 1).unwrap();
        assert_eq!(t.events.len(), 10);
        assert_eq!(t.end_reason, EndReason::MaxEventsReached);
        assert_eq!(t.end_time, t.events[9].time);
    }

    #[test]
    fn replay_and_json_round_trip() {
        let m = parse_model("species A B; rxn A -> B @ 1; rxn B -> 0 @ 0.5; compartments I=2 E=0.5 F=1 C=1; mu poisson 2 1;")
            .unwrap();
        let t = simulate(&m, SimState::new(vec![sv([4, 2])]), 10.0, 10_000, 9).unwrap();
        let events = Trajectory::events_from_json_lines(&t.to_json_lines()).unwrap();
        assert_eq!(events, t.events);
        let fin = t.replay(&m, |_, _| {}).unwrap();
        assert_eq!(fin.digest(), t.events.last().unwrap().digest);
        let mut bad = t.clone();
        bad.events[0].digest ^= 1;
        assert!(matches!(bad.replay(&m, |_, _| {}), Err(SimError::Replay { index: 0, .. })));
    }

    #[test]
    fn pausing_does_not_change_the_path() {
        let m = ex_4_17();
        let full = simulate(&m, SimState::empty(), 30.0, 1_000_000, 5).unwrap();
        let mut rng = rng_from_seed(5);
        let mut sim = Simulator::new(&m, SimState::empty()).unwrap();
        let mut events = Vec::new();
        for k in 1..=300 {
            while let Some(e) = sim.next_event(&mut rng, k as f64 * 0.1).unwrap() {
                events.push(e);
            }
        }
        assert_eq!(events, full.events);
    }

    #[test]
    fn index_conventions_visible_in_records() {
        let m =
            parse_model("species A B; rxn A -> B @ 1; compartments I=3 E=0.2 F=1 C=1; mu cat {(1,0):0.5, (0,3):0.5};").unwrap();
        let mut rng = rng_from_seed(11);
        let mut sim = Simulator::new(&m, SimState::empty()).unwrap();
        for _ in 0..5_000 {
            let before = sim.state().clone();
            let e = sim.next_event(&mut rng, f64::INFINITY).unwrap().unwrap();
            let after = sim.state();
            match &e.kind {
                EventKind::Inflow { sample } => assert_eq!(after.compartments().last(), Some(sample)),
                EventKind::Coag { lo, hi } => {
                    let sum = &before.compartments()[*lo] + &before.compartments()[*hi];
                    assert_eq!(after.compartments()[*lo], sum);
                }
                EventKind::Frag { .. } | EventKind::Exit { .. } | EventKind::Internal { .. } => {}
            }
            if matches!(e.kind, EventKind::Frag { .. } | EventKind::Coag { .. }) {
                assert_eq!(after.totals(2), before.totals(2));
            }
        }
    }

    #[test]
    fn time_average_of_one() {
        let m = ex_4_17();
        let t = simulate(&m, SimState::empty(), 50.0, 1_000_000, 3).unwrap();
        assert!((time_average(&t, &m, |_| 1.0).unwrap() - 1.0).abs() < 1e-12);
        let mut rng = rng_from_seed(3);
        let (avg, _, _) = run_time_average(&m, SimState::empty(), 50.0, 1_000_000, &mut rng, |s| s.len() as f64).unwrap();
        assert!((avg - time_average(&t, &m, |s| s.len() as f64).unwrap()).abs() < 1e-12);
    }
}
