//! Execution engines: global-state interpretation, the partial-state split,
//! and a coordinator-driven partial-state engine in virtual or real time.

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use log::{debug, trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{eval, eval_bool, Assignment, Expr, ExprError, Valuation, Value};
use crate::model::{AtomicComponent, CompState, CompositeSystem, Interaction, Location, Port, Transition, BETA_PORT};
use crate::monitor::{Monitor, MonitorError, Verdict};
use crate::transform::{strip_transform, RgtError, RgtState};

pub use crate::model::SystemState;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Interaction(String),
    /// Completion of component `i` (0-based), displayed `β<i+1>`.
    Beta(usize),
}

impl Label {
    pub fn interaction(id: impl Into<String>) -> Label {
        Label::Interaction(id.into())
    }

    pub fn is_beta(&self) -> bool {
        matches!(self, Label::Beta(_))
    }

    /// Parses `β<k>` (1-based) as a completion, anything else as an
    /// interaction name.
    pub fn parse(s: &str) -> Label {
        match s.strip_prefix('β').and_then(|k| k.parse::<usize>().ok()) {
            Some(k) if k >= 1 => Label::Beta(k - 1),
            _ => Label::Interaction(s.to_string()),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Interaction(a) => f.write_str(a),
            Label::Beta(i) => write!(f, "β{}", i + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub initial: SystemState,
    pub steps: Vec<(Label, SystemState)>,
}

impl Trace {
    pub fn new(initial: SystemState) -> Self {
        Trace {
            initial,
            steps: Vec::new(),
        }
    }

    pub fn push(&mut self, label: Label, q: SystemState) {
        self.steps.push((label, q));
    }

    pub fn last_state(&self) -> &SystemState {
        self.steps.last().map_or(&self.initial, |(_, q)| q)
    }

    pub fn states(&self) -> impl Iterator<Item = &SystemState> {
        std::iter::once(&self.initial).chain(self.steps.iter().map(|(_, q)| q))
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.steps.iter().map(|(l, _)| l)
    }

    /// The first `k` steps.
    pub fn prefix(&self, k: usize) -> Trace {
        Trace {
            initial: self.initial.clone(),
            steps: self.steps[..k].to_vec(),
        }
    }

    /// `q0 · a1 · q1 ⋯` with states abbreviated to their locations.
    pub fn short(&self) -> String {
        let mut out = self.initial.short();
        for (l, q) in &self.steps {
            out.push_str(&format!("·{l}·{}", q.short()));
        }
        out
    }
}

/// Chooses among enabled labels; `None` stops the run.
pub type HookFn = dyn Fn(&SystemState, &[Label]) -> Option<usize> + Send + Sync;

#[derive(Clone)]
pub enum SchedulerPolicy {
    SeededRandom(u64),
    /// Labels consumed in order; each must be enabled when reached.
    FixedSequence(Vec<Label>),
    Hook(Arc<HookFn>),
}

impl fmt::Debug for SchedulerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulerPolicy::SeededRandom(s) => write!(f, "SeededRandom({s})"),
            SchedulerPolicy::FixedSequence(v) => f.debug_tuple("FixedSequence").field(v).finish(),
            SchedulerPolicy::Hook(_) => f.write_str("Hook(..)"),
        }
    }
}

/// Simulated duration of a component's internal computation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusyDelay {
    #[default]
    Zero,
    Fixed(Duration),
    Uniform {
        min: Duration,
        max: Duration,
    },
}

impl BusyDelay {
    fn sample(&self, rng: &mut impl Rng) -> Duration {
        match *self {
            BusyDelay::Zero => Duration::ZERO,
            BusyDelay::Fixed(d) => d,
            BusyDelay::Uniform { min, max } if max > min => {
                let span = (max - min).as_micros() as u64;
                min + Duration::from_micros(rng.gen_range(0..=span))
            }
            BusyDelay::Uniform { min, .. } => min,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub policy: SchedulerPolicy,
    /// Budget of executed interactions (completions and deliveries are not
    /// counted).
    pub max_steps: usize,
    pub busy_delay: BusyDelay,
    /// Per-component overrides of `busy_delay`, by component id.
    pub component_delays: Vec<(String, BusyDelay)>,
    /// Flush pending completions and deliveries before returning.
    pub drain: bool,
    /// Run workers on real threads instead of interleaving them by seeded
    /// choice.
    pub real_time: bool,
    pub threads: usize,
    /// Keep delivered RGT tuples (debug aid).
    pub retain_delivered: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            policy: SchedulerPolicy::SeededRandom(0),
            max_steps: 100,
            busy_delay: BusyDelay::Zero,
            component_delays: Vec::new(),
            drain: true,
            real_time: false,
            threads: 1,
            retain_delivered: false,
        }
    }
}

impl EngineConfig {
    pub fn seeded(seed: u64, max_steps: usize) -> Self {
        EngineConfig {
            policy: SchedulerPolicy::SeededRandom(seed),
            max_steps,
            ..Default::default()
        }
    }

    pub fn fixed(labels: Vec<Label>) -> Self {
        EngineConfig {
            max_steps: usize::MAX,
            policy: SchedulerPolicy::FixedSequence(labels),
            ..Default::default()
        }
    }

    fn delay_of(&self, comp: &str) -> BusyDelay {
        self.component_delays
            .iter()
            .find(|(c, _)| c == comp)
            .map_or(self.busy_delay, |(_, d)| *d)
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("`{0}` is not enabled")]
    NotEnabled(String),
    #[error("unknown interaction `{0}`")]
    UnknownInteraction(String),
    #[error(transparent)]
    Eval(#[from] ExprError),
    #[error("worker failed: {0}")]
    WorkerPanicked(String),
    #[error(transparent)]
    Rgt(#[from] RgtError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error("{0}")]
    Unsupported(String),
}

/// A reconstructed global state handed to the monitor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    /// Number of trace steps executed before the delivery.
    pub after_step: usize,
    pub interaction: String,
    pub state: SystemState,
    pub verdict: Option<Verdict>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    /// Interactions of the original system.
    pub gamma: usize,
    /// Completion notifications.
    pub beta: usize,
    /// Global states delivered to the monitor.
    pub delivered: usize,
    /// Every executed interaction, of all kinds.
    pub executed: usize,
}

impl RunStats {
    /// Interactions executed on top of the original ones.
    pub fn extra(&self) -> usize {
        self.executed - self.gamma
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: Trace,
    /// The run stopped because nothing was enabled before the budget ran out.
    pub deadlock: bool,
    pub deliveries: Vec<Delivery>,
    pub initial_verdict: Option<Verdict>,
    pub stats: RunStats,
    pub rgt: Option<RgtState>,
}

impl RunOutcome {
    pub fn verdicts(&self) -> Vec<Verdict> {
        self.initial_verdict
            .into_iter()
            .chain(self.deliveries.iter().filter_map(|d| d.verdict))
            .collect()
    }
}

fn local_env<'a>(c: &'a AtomicComponent, vals: &'a [Value]) -> impl Fn(&str) -> Option<Value> + 'a {
    move |n: &str| c.var_index(n).map(|k| vals[k].clone())
}

fn apply_local(c: &AtomicComponent, vals: &[Value], step: &[Assignment]) -> Result<Vec<Value>, ExprError> {
    let mut out = vals.to_vec();
    for a in step {
        let k = c
            .var_index(&a.target)
            .ok_or_else(|| ExprError::UnboundVariable(a.target.clone()))?;
        let v = eval(&a.source, &local_env(c, &out))?;
        out[k] = v;
    }
    Ok(out)
}

/// Fires transition `t` of component `c` from local state `cs`.
pub fn fire_local(c: &AtomicComponent, cs: &CompState, t: usize) -> Result<CompState, ExprError> {
    let tr = &c.transitions[t];
    let vals = apply_local(c, &cs.vals, &tr.step)?;
    Ok(CompState::new(&tr.to, c.is_busy_location(&tr.to), vals))
}

/// Transitions of `c` enabled on `port` in local state `cs`.
pub fn enabled_transitions(c: &AtomicComponent, cs: &CompState, port: &str) -> Result<Vec<usize>, ExprError> {
    let mut out = Vec::new();
    for t in c.transitions_from(&cs.loc, port) {
        if eval_bool(&c.transitions[t].guard, &local_env(c, &cs.vals))? {
            out.push(t);
        }
    }
    Ok(out)
}

/// Completion of a busy component: fires its pending `beta` transition.
pub fn complete_local(c: &AtomicComponent, cs: &CompState) -> Result<Option<CompState>, ExprError> {
    if !cs.busy {
        return Ok(None);
    }
    match c.transitions_from(&cs.loc, BETA_PORT).next() {
        Some(t) => fire_local(c, cs, t).map(Some),
        None => Ok(None),
    }
}

/// Participant index with the indices of its enabled transitions.
type Candidates = Vec<(usize, Vec<usize>)>;

/// Enabled transitions per participant of `a`, or `None` if `a` is disabled.
fn interaction_candidates(
    sys: &CompositeSystem,
    q: &SystemState,
    a: &Interaction,
) -> Result<Option<Candidates>, ExprError> {
    let mut out = Vec::with_capacity(a.ports.len());
    for (ci, port) in sys.participants(a) {
        let cs = &q.0[ci];
        if cs.busy {
            return Ok(None);
        }
        let ts = enabled_transitions(&sys.components[ci], cs, port)?;
        if ts.is_empty() {
            return Ok(None);
        }
        out.push((ci, ts));
    }
    Ok(Some(out))
}

/// Interactions (by index) enabled in `q`: every participant has an enabled
/// transition on its port. Busy components enable nothing but completion.
pub fn enabled_interactions(sys: &CompositeSystem, q: &SystemState) -> Result<Vec<usize>, ExprError> {
    let mut out = Vec::new();
    for (k, a) in sys.interactions.iter().enumerate() {
        if interaction_candidates(sys, q, a)?.is_some() {
            out.push(k);
        }
    }
    Ok(out)
}

/// Applies the transfer of `a` and then the chosen transition of each
/// participant. Guards were evaluated before the transfer.
fn fire_chosen(
    sys: &CompositeSystem,
    q: &SystemState,
    a: &Interaction,
    chosen: &[(usize, usize)],
) -> Result<SystemState, ExprError> {
    let mut next = q.clone();
    if !a.transfer.is_empty() {
        let mut env = Valuation::new();
        for (ci, port) in sys.participants(a) {
            let c = &sys.components[ci];
            for v in &c.port(port).expect("validated port").vars {
                let k = c.var_index(v).expect("validated variable");
                env.set(format!("{}.{}", c.id, v), q.0[ci].vals[k].clone());
            }
        }
        let env = crate::expr::apply_assignments(&a.transfer, &env)?;
        for (name, v) in env.0 {
            let (comp, var) = name.split_once('.').expect("qualified");
            let ci = sys.component_index(comp).expect("validated component");
            let k = sys.components[ci].var_index(var).expect("validated variable");
            next.0[ci].vals[k] = v;
        }
    }
    for &(ci, t) in chosen {
        next.0[ci] = fire_local(&sys.components[ci], &next.0[ci], t)?;
    }
    Ok(next)
}

/// Fires interaction `a` (by index) choosing the first enabled transition of
/// every participant.
pub fn fire_interaction(sys: &CompositeSystem, q: &SystemState, a: usize) -> Result<SystemState, EngineError> {
    fire_guided(sys, q, a, |_, ts| ts[0])
}

/// Fires interaction `a`, letting `pick` choose among each participant's
/// enabled transitions.
pub fn fire_guided(
    sys: &CompositeSystem,
    q: &SystemState,
    a: usize,
    pick: impl Fn(usize, &[usize]) -> usize,
) -> Result<SystemState, EngineError> {
    let inter = &sys.interactions[a];
    let cands = interaction_candidates(sys, q, inter)?.ok_or_else(|| EngineError::NotEnabled(inter.id.clone()))?;
    let chosen: Vec<(usize, usize)> = cands.iter().map(|(ci, ts)| (*ci, pick(*ci, ts))).collect();
    Ok(fire_chosen(sys, q, inter, &chosen)?)
}

/// All successors of `q` by interaction `a`, one per choice of transitions.
pub fn interaction_successors(sys: &CompositeSystem, q: &SystemState, a: usize) -> Result<Vec<SystemState>, ExprError> {
    let inter = &sys.interactions[a];
    let Some(cands) = interaction_candidates(sys, q, inter)? else {
        return Ok(Vec::new());
    };
    let mut combos: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
    for (ci, ts) in &cands {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                ts.iter().map(move |&t| {
                    let mut c = c.clone();
                    c.push((*ci, t));
                    c
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    for c in combos {
        let s = fire_chosen(sys, q, inter, &c)?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

pub fn step_global(sys: &CompositeSystem, q: &SystemState, a: &str) -> Result<SystemState, EngineError> {
    let k = sys
        .interaction_index(a)
        .ok_or_else(|| EngineError::UnknownInteraction(a.to_string()))?;
    fire_interaction(sys, q, k)
}

/// One step of the partial-state semantics: an interaction or a completion.
pub fn step_partial(sys: &CompositeSystem, q: &SystemState, label: &Label) -> Result<SystemState, EngineError> {
    match label {
        Label::Interaction(a) => step_global(sys, q, a),
        Label::Beta(i) => {
            let c = sys
                .components
                .get(*i)
                .ok_or_else(|| EngineError::NotEnabled(label.to_string()))?;
            let cs = complete_local(c, &q.0[*i])?.ok_or_else(|| EngineError::NotEnabled(label.to_string()))?;
            let mut next = q.clone();
            next.0[*i] = cs;
            Ok(next)
        }
    }
}

/// Every labelled successor of `q`, including completions in partial form.
pub fn successors(sys: &CompositeSystem, q: &SystemState) -> Result<Vec<(Label, SystemState)>, ExprError> {
    let mut out = Vec::new();
    for (k, a) in sys.interactions.iter().enumerate() {
        for s in interaction_successors(sys, q, k)? {
            out.push((Label::Interaction(a.id.clone()), s));
        }
    }
    for (i, c) in sys.components.iter().enumerate() {
        if let Some(cs) = complete_local(c, &q.0[i])? {
            let mut next = q.clone();
            next.0[i] = cs;
            out.push((Label::Beta(i), next));
        }
    }
    Ok(out)
}

/// Name of the busy location splitting a transition.
pub fn busy_location_name(t: &Transition) -> String {
    format!("⊥@{}-{}-{}", t.from, t.port, t.to)
}

/// Splits every transition into a visible half, which only evaluates the
/// guard, and a `beta` completion carrying the computation step.
pub fn to_partial(sys: &CompositeSystem) -> CompositeSystem {
    let mut out = sys.clone();
    for c in &mut out.components {
        if c.is_partial() {
            continue;
        }
        let mut transitions = Vec::with_capacity(2 * c.transitions.len());
        let mut busy = Vec::new();
        for t in &c.transitions {
            let base = busy_location_name(t);
            let mut name = base.clone();
            let mut k = 1;
            while busy.contains(&name) || c.location(&name).is_some() {
                k += 1;
                name = format!("{base}#{k}");
            }
            transitions.push(Transition {
                from: t.from.clone(),
                port: t.port.clone(),
                guard: t.guard.clone(),
                step: Vec::new(),
                to: name.clone(),
            });
            transitions.push(Transition {
                from: name.clone(),
                port: BETA_PORT.into(),
                guard: Expr::tt(),
                step: t.step.clone(),
                to: t.to.clone(),
            });
            busy.push(name);
        }
        c.transitions = transitions;
        c.locations
            .extend(busy.into_iter().map(|name| Location { name, busy: true }));
        c.ports.push(Port {
            id: BETA_PORT.into(),
            vars: Vec::new(),
        });
    }
    out
}

/// Merges split transitions back (inverse of [`to_partial`]); the RGT
/// component and instrumentation are dropped first. Transition order is
/// that of the visible halves.
pub fn from_partial(sys: &CompositeSystem) -> CompositeSystem {
    let mut out = strip_transform(sys);
    for c in &mut out.components {
        if !c.is_partial() {
            continue;
        }
        let mut transitions = Vec::new();
        for t in c.transitions.iter().filter(|t| t.port != BETA_PORT) {
            if c.is_busy_location(&t.to) {
                let done = c
                    .transitions
                    .iter()
                    .find(|b| b.from == t.to && b.port == BETA_PORT)
                    .expect("validated busy location");
                transitions.push(Transition {
                    from: t.from.clone(),
                    port: t.port.clone(),
                    guard: t.guard.clone(),
                    step: done.step.clone(),
                    to: done.to.clone(),
                });
            } else {
                transitions.push(t.clone());
            }
        }
        c.transitions = transitions;
        c.locations.retain(|l| !l.busy);
        c.ports.retain(|p| p.id != BETA_PORT);
    }
    out
}

/// Index, among `c`'s non-`beta` transitions, of the one from `from` on
/// `port` reaching `to`; used to replay a partial run in the merged system.
pub fn visible_rank(c: &AtomicComponent, from: &str, port: &str, to: &str) -> Option<usize> {
    c.transitions
        .iter()
        .filter(|t| t.port != BETA_PORT)
        .position(|t| t.from == from && t.port == port && t.to == to)
}

/// Drops the `loc` variable of instrumented components from a state.
pub fn project_uninstrumented(sys: &CompositeSystem, q: &SystemState) -> SystemState {
    SystemState(
        q.0.iter()
            .zip(&sys.components)
            .map(|(cs, c)| {
                if !c.instrumented {
                    return cs.clone();
                }
                let vals = cs
                    .vals
                    .iter()
                    .zip(&c.vars)
                    .filter(|(_, v)| v.name != crate::model::LOC_VAR)
                    .map(|(x, _)| x.clone())
                    .collect();
                CompState {
                    loc: cs.loc.clone(),
                    busy: cs.busy,
                    vals,
                }
            })
            .collect(),
    )
}

enum Choice {
    Gamma(usize),
    Beta(usize),
    Deliver(usize),
}

/// Coordinator state shared by all engines: the current system state, the
/// trace being written, and the optional RGT component and monitor.
struct Coordinator<'a> {
    sys: &'a CompositeSystem,
    q: SystemState,
    trace: Trace,
    rgt: Option<RgtState>,
    monitor: Option<Monitor>,
    deliveries: Vec<Delivery>,
    initial_verdict: Option<Verdict>,
    stats: RunStats,
}

impl<'a> Coordinator<'a> {
    fn new(sys: &'a CompositeSystem, cfg: &EngineConfig) -> Result<Self, EngineError> {
        let q = sys.initial_state();
        let rgt = sys
            .rgt
            .as_ref()
            .map(|_| RgtState::for_system(sys, cfg.retain_delivered));
        let mut monitor = match &sys.monitor {
            Some(spec) => Some(Monitor::new(spec, sys)?),
            None => None,
        };
        let initial_verdict = monitor.as_mut().and_then(|m| m.initial_verdict());
        Ok(Coordinator {
            sys,
            trace: Trace::new(q.clone()),
            q,
            rgt,
            monitor,
            deliveries: Vec::new(),
            initial_verdict,
            stats: RunStats::default(),
        })
    }

    fn enabled_gamma(&self) -> Result<Vec<usize>, EngineError> {
        if self.rgt.as_ref().is_some_and(|r| !r.can_new()) {
            return Ok(Vec::new());
        }
        Ok(enabled_interactions(self.sys, &self.q)?)
    }

    fn beta_allowed(&self, i: usize) -> bool {
        match &self.rgt {
            Some(r) if r.is_monitored(i) => r.can_upd(),
            _ => true,
        }
    }

    fn enabled_betas(&self) -> Vec<usize> {
        (0..self.q.arity())
            .filter(|&i| self.q.0[i].busy && self.beta_allowed(i))
            .collect()
    }

    fn deliverable(&self) -> Vec<usize> {
        match (&self.rgt, &self.sys.rgt) {
            (Some(r), Some(decl)) => r
                .deliverable()
                .filter(|&b| decl.delivers(&self.sys.interactions[b].id))
                .collect(),
            _ => Vec::new(),
        }
    }

    fn preferred_delivery(&self) -> Option<usize> {
        let d = self.deliverable();
        let own = self.rgt.as_ref().and_then(|r| r.next_delivery());
        own.filter(|b| d.contains(b)).or_else(|| d.first().copied())
    }

    fn record_gamma(&mut self, a: usize, next: SystemState) -> Result<(), EngineError> {
        let inter = &self.sys.interactions[a];
        if let Some(r) = &mut self.rgt {
            let involved: Vec<usize> = self.sys.participants(inter).map(|(ci, _)| ci).collect();
            r.new_interaction(a, &involved)?;
        }
        trace!("fire {} -> {}", inter.id, next.short());
        self.q = next;
        self.trace.push(Label::Interaction(inter.id.clone()), self.q.clone());
        self.stats.gamma += 1;
        self.stats.executed += 1;
        Ok(())
    }

    fn fire_gamma(&mut self, a: usize) -> Result<(), EngineError> {
        let next = fire_interaction(self.sys, &self.q, a)?;
        self.record_gamma(a, next)
    }

    fn record_beta(&mut self, i: usize, cs: CompState) -> Result<(), EngineError> {
        if let Some(r) = &mut self.rgt {
            if r.is_monitored(i) {
                r.upd(i, &cs)?;
            }
        }
        self.q.0[i] = cs;
        trace!("β{} -> {}", i + 1, self.q.short());
        self.trace.push(Label::Beta(i), self.q.clone());
        self.stats.beta += 1;
        self.stats.executed += 1;
        Ok(())
    }

    fn fire_beta(&mut self, i: usize) -> Result<(), EngineError> {
        let cs = complete_local(&self.sys.components[i], &self.q.0[i])?
            .ok_or_else(|| EngineError::NotEnabled(Label::Beta(i).to_string()))?;
        self.record_beta(i, cs)
    }

    fn deliver(&mut self, b: usize) -> Result<(), EngineError> {
        let r = self.rgt.as_mut().expect("deliveries need the RGT component");
        let (state, a) = r.get_via(b)?;
        let verdict = match &mut self.monitor {
            Some(m) => Some(m.step(&state)?),
            None => None,
        };
        debug!("deliver {} {}", self.sys.interactions[a].id, state.short());
        self.deliveries.push(Delivery {
            after_step: self.trace.steps.len(),
            interaction: self.sys.interactions[a].id.clone(),
            state,
            verdict,
        });
        self.stats.delivered += 1;
        self.stats.executed += 1;
        Ok(())
    }

    fn deliver_eagerly(&mut self) -> Result<(), EngineError> {
        while let Some(b) = self.preferred_delivery() {
            self.deliver(b)?;
        }
        Ok(())
    }

    fn finish(self, deadlock: bool) -> RunOutcome {
        RunOutcome {
            trace: self.trace,
            deadlock,
            deliveries: self.deliveries,
            initial_verdict: self.initial_verdict,
            stats: self.stats,
            rgt: self.rgt,
        }
    }
}

/// Runs a global-state system: each interaction executes atomically.
pub fn run_global(sys: &CompositeSystem, cfg: &EngineConfig) -> Result<RunOutcome, EngineError> {
    if sys.is_partial() {
        return Err(EngineError::Unsupported(
            "run_global needs a global-state system; merge the split transitions first".into(),
        ));
    }
    run_virtual(sys, cfg)
}

/// Runs a partial-state (possibly transformed and monitored) system.
/// Concurrency is simulated by seeded interleaving unless
/// `cfg.real_time` is set.
pub fn run_partial_concurrent(sys: &CompositeSystem, cfg: &EngineConfig) -> Result<RunOutcome, EngineError> {
    if !sys.is_partial() && !sys.components.is_empty() {
        return Err(EngineError::Unsupported(
            "run_partial_concurrent needs a partial-state system".into(),
        ));
    }
    if cfg.real_time {
        run_real_time(sys, cfg)
    } else {
        run_virtual(sys, cfg)
    }
}

fn run_virtual(sys: &CompositeSystem, cfg: &EngineConfig) -> Result<RunOutcome, EngineError> {
    let mut co = Coordinator::new(sys, cfg)?;
    let mut rng = match &cfg.policy {
        SchedulerPolicy::SeededRandom(seed) => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let mut fixed = match &cfg.policy {
        SchedulerPolicy::FixedSequence(v) => v.iter(),
        _ => [].iter(),
    };
    let mut stopped = false;
    loop {
        let budget = !stopped && co.stats.gamma < cfg.max_steps;
        if !budget && !cfg.drain {
            return Ok(co.finish(false));
        }
        let gammas = if budget { co.enabled_gamma()? } else { Vec::new() };
        let betas = co.enabled_betas();
        let delivers = co.deliverable();
        if gammas.is_empty() && betas.is_empty() && delivers.is_empty() {
            let deadlock = budget && enabled_interactions(sys, &co.q)?.is_empty() || budget && co.rgt.is_some();
            return Ok(co.finish(deadlock));
        }
        let choice = match (&cfg.policy, &mut rng) {
            (SchedulerPolicy::SeededRandom(_), Some(rng)) => {
                let k = rng.gen_range(0..gammas.len() + betas.len() + delivers.len());
                if k < gammas.len() {
                    Choice::Gamma(gammas[k])
                } else if k < gammas.len() + betas.len() {
                    Choice::Beta(betas[k - gammas.len()])
                } else {
                    Choice::Deliver(delivers[k - gammas.len() - betas.len()])
                }
            }
            _ if !delivers.is_empty() => Choice::Deliver(co.preferred_delivery().expect("deliverable")),
            (SchedulerPolicy::FixedSequence(_), _) => match budget.then(|| fixed.next()).flatten() {
                Some(Label::Interaction(a)) => {
                    let k = sys
                        .interaction_index(a)
                        .ok_or_else(|| EngineError::UnknownInteraction(a.clone()))?;
                    if !gammas.contains(&k) {
                        return Err(EngineError::NotEnabled(a.clone()));
                    }
                    Choice::Gamma(k)
                }
                Some(Label::Beta(i)) => {
                    if !betas.contains(i) {
                        return Err(EngineError::NotEnabled(Label::Beta(*i).to_string()));
                    }
                    Choice::Beta(*i)
                }
                None => {
                    stopped = true;
                    match betas.first() {
                        Some(&i) if cfg.drain => Choice::Beta(i),
                        _ => return Ok(co.finish(false)),
                    }
                }
            },
            (SchedulerPolicy::Hook(hook), _) => {
                if !budget {
                    match betas.first() {
                        Some(&i) => Choice::Beta(i),
                        None => return Ok(co.finish(false)),
                    }
                } else {
                    let labels: Vec<Label> = gammas
                        .iter()
                        .map(|&a| Label::Interaction(sys.interactions[a].id.clone()))
                        .chain(betas.iter().map(|&i| Label::Beta(i)))
                        .collect();
                    match hook(&co.q, &labels) {
                        Some(k) if k < gammas.len() => Choice::Gamma(gammas[k]),
                        Some(k) if k < labels.len() => Choice::Beta(betas[k - gammas.len()]),
                        Some(k) => return Err(EngineError::NotEnabled(format!("choice #{k}"))),
                        None => {
                            stopped = true;
                            continue;
                        }
                    }
                }
            }
            (SchedulerPolicy::SeededRandom(_), None) => unreachable!("rng is seeded for this policy"),
        };
        match choice {
            Choice::Gamma(a) => co.fire_gamma(a)?,
            Choice::Beta(i) => co.fire_beta(i)?,
            Choice::Deliver(b) => co.deliver(b)?,
        }
    }
}

struct Job {
    comp: usize,
    state: CompState,
    delay: Duration,
}

type Done = Result<(usize, CompState), String>;

/// Real threads: a pool of workers executes completion steps after the
/// simulated delay while the coordinator keeps firing interactions among
/// ready components. Only the coordinator writes the trace.
fn run_real_time(sys: &CompositeSystem, cfg: &EngineConfig) -> Result<RunOutcome, EngineError> {
    use crossbeam::channel::unbounded;

    let threads = cfg.threads.max(1);
    let (job_tx, job_rx) = unbounded::<Job>();
    let (done_tx, done_rx) = unbounded::<Done>();
    let seed = match &cfg.policy {
        SchedulerPolicy::SeededRandom(s) => *s,
        _ => 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    std::thread::scope(|scope| {
        for _ in 0..threads {
            let job_rx = job_rx.clone();
            let done_tx = done_tx.clone();
            scope.spawn(move || {
                for job in job_rx.iter() {
                    if !job.delay.is_zero() {
                        std::thread::sleep(job.delay);
                    }
                    let c = &sys.components[job.comp];
                    let r = std::panic::catch_unwind(|| complete_local(c, &job.state));
                    let msg = match r {
                        Ok(Ok(Some(cs))) => Ok((job.comp, cs)),
                        Ok(Ok(None)) => Err(format!("component `{}` has no pending completion", c.id)),
                        Ok(Err(e)) => Err(format!("component `{}`: {e}", c.id)),
                        Err(_) => Err(format!("component `{}` panicked", c.id)),
                    };
                    if done_tx.send(msg).is_err() {
                        break;
                    }
                }
            });
        }
        drop(done_tx);
        drop(job_rx);

        let result = (|| {
            let mut co = Coordinator::new(sys, cfg)?;
            let mut fixed = match &cfg.policy {
                SchedulerPolicy::FixedSequence(v) => v
                    .iter()
                    .filter(|l| !l.is_beta())
                    .cloned()
                    .collect::<Vec<_>>()
                    .into_iter(),
                _ => Vec::new().into_iter(),
            };
            let mut next_fixed: Option<Label> = None;
            let mut pending = 0usize;
            let mut arrived: Vec<(usize, CompState)> = Vec::new();
            let mut stopped = false;
            loop {
                while let Ok(msg) = done_rx.try_recv() {
                    pending -= 1;
                    arrived.push(msg.map_err(EngineError::WorkerPanicked)?);
                }
                co.deliver_eagerly()?;
                let mut k = 0;
                while k < arrived.len() {
                    if co.beta_allowed(arrived[k].0) {
                        let (i, cs) = arrived.remove(k);
                        co.record_beta(i, cs)?;
                        co.deliver_eagerly()?;
                    } else {
                        k += 1;
                    }
                }
                let budget = !stopped && co.stats.gamma < cfg.max_steps;
                if !budget && !cfg.drain {
                    return Ok(co.finish(false));
                }
                if budget {
                    let gammas = co.enabled_gamma()?;
                    let pick = match &cfg.policy {
                        SchedulerPolicy::SeededRandom(_) if !gammas.is_empty() => {
                            Some(gammas[rng.gen_range(0..gammas.len())])
                        }
                        SchedulerPolicy::SeededRandom(_) => None,
                        SchedulerPolicy::FixedSequence(_) => {
                            if next_fixed.is_none() {
                                next_fixed = fixed.next();
                                if next_fixed.is_none() {
                                    stopped = true;
                                }
                            }
                            match &next_fixed {
                                Some(Label::Interaction(a)) => {
                                    let k = sys
                                        .interaction_index(a)
                                        .ok_or_else(|| EngineError::UnknownInteraction(a.clone()))?;
                                    if gammas.contains(&k) {
                                        next_fixed = None;
                                        Some(k)
                                    } else if pending == 0 && arrived.is_empty() {
                                        return Err(EngineError::NotEnabled(a.clone()));
                                    } else {
                                        None
                                    }
                                }
                                _ => None,
                            }
                        }
                        SchedulerPolicy::Hook(hook) => {
                            if gammas.is_empty() {
                                None
                            } else {
                                let labels: Vec<Label> = gammas
                                    .iter()
                                    .map(|&a| Label::Interaction(sys.interactions[a].id.clone()))
                                    .collect();
                                match hook(&co.q, &labels) {
                                    Some(k) if k < gammas.len() => Some(gammas[k]),
                                    Some(k) => return Err(EngineError::NotEnabled(format!("choice #{k}"))),
                                    None => {
                                        stopped = true;
                                        None
                                    }
                                }
                            }
                        }
                    };
                    if let Some(a) = pick {
                        co.fire_gamma(a)?;
                        let inter = &sys.interactions[a];
                        for (ci, _) in sys.participants(inter) {
                            if co.q.0[ci].busy {
                                let delay = cfg.delay_of(&sys.components[ci].id).sample(&mut rng);
                                job_tx
                                    .send(Job {
                                        comp: ci,
                                        state: co.q.0[ci].clone(),
                                        delay,
                                    })
                                    .map_err(|_| EngineError::WorkerPanicked("worker pool stopped".into()))?;
                                pending += 1;
                            }
                        }
                        continue;
                    }
                }
                if pending > 0 {
                    let msg = done_rx
                        .recv()
                        .map_err(|_| EngineError::WorkerPanicked("all workers stopped".into()))?;
                    pending -= 1;
                    arrived.push(msg.map_err(EngineError::WorkerPanicked)?);
                    continue;
                }
                let budget = !stopped && co.stats.gamma < cfg.max_steps;
                return Ok(co.finish(budget || !arrived.is_empty()));
            }
        })();
        drop(job_tx);
        result
    })
}

/// Replays `labels` in `sys` from its initial state.
pub fn replay(sys: &CompositeSystem, labels: &[Label]) -> Result<Trace, EngineError> {
    let mut t = Trace::new(sys.initial_state());
    for l in labels {
        let next = step_partial(sys, t.last_state(), l)?;
        t.push(l.clone(), next);
    }
    Ok(t)
}
