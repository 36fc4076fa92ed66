//! The transformation that makes a partial-state system reconstruct its own
//! global trace: instrumentation of atomic components, the RGT component and
//! its algorithms, and the rewiring of interactions.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Assignment, Expr, Value};
use crate::model::{AtomicComponent, CompState, CompositeSystem, RgtDecl, SystemState, Variable, BETA_PORT, LOC_VAR};
use crate::monitor::{attach_monitor, MonitorError, MonitorSpec};
use crate::semantics::to_partial;

/// Guard variants of the RGT component. The default guards `new` and `upd`
/// by "no reconstructed state is waiting for delivery", which gives the
/// monitor precedence over the system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RgtVariant {
    #[default]
    Default,
    UnguardedNew,
    UnguardedUpd,
    UnguardedBoth,
}

impl RgtVariant {
    pub const ALL: [RgtVariant; 4] = [
        RgtVariant::Default,
        RgtVariant::UnguardedNew,
        RgtVariant::UnguardedUpd,
        RgtVariant::UnguardedBoth,
    ];

    pub fn guards_new(self) -> bool {
        matches!(self, RgtVariant::Default | RgtVariant::UnguardedUpd)
    }

    pub fn guards_upd(self) -> bool {
        matches!(self, RgtVariant::Default | RgtVariant::UnguardedNew)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RgtVariant::Default => "default",
            RgtVariant::UnguardedNew => "unguarded-new",
            RgtVariant::UnguardedUpd => "unguarded-upd",
            RgtVariant::UnguardedBoth => "unguarded-both",
        }
    }
}

impl fmt::Display for RgtVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RgtVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RgtVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown RGT variant `{s}`"))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransformError {
    #[error("component `{0}` is already instrumented")]
    AlreadyInstrumented(String),
    #[error("component `{0}` is not in partial-state form")]
    NotPartial(String),
    #[error("system is already transformed")]
    AlreadyTransformed,
    #[error("unknown monitored variable `{0}`")]
    UnknownMonitoredVariable(String),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RgtError {
    #[error("RGT guard violated: a reconstructed state is waiting for delivery")]
    GuardViolated,
    #[error("component {} is not busy", .0 + 1)]
    NotBusy(usize),
    #[error("no reconstructed global state is ready for delivery")]
    NothingToDeliver,
}

/// Adds the `loc` variable, exports every variable on `beta`, and records
/// the destination location in each completion half.
pub fn instrument_atomic(c: &AtomicComponent) -> Result<AtomicComponent, TransformError> {
    if c.instrumented {
        return Err(TransformError::AlreadyInstrumented(c.id.clone()));
    }
    if !c.is_partial() {
        return Err(TransformError::NotPartial(c.id.clone()));
    }
    let mut out = c.clone();
    out.instrumented = true;
    out.vars.push(Variable {
        name: LOC_VAR.into(),
        init: Value::Sym(c.initial.clone()),
    });
    let exported: Vec<String> = out.vars.iter().map(|v| v.name.clone()).collect();
    for p in &mut out.ports {
        if p.id == BETA_PORT {
            p.vars = exported.clone();
        }
    }
    for t in &mut out.transitions {
        if t.port == BETA_PORT {
            t.step.push(Assignment::new(LOC_VAR, Expr::sym(t.to.clone())));
        }
    }
    Ok(out)
}

/// Inverse of [`instrument_atomic`].
pub fn uninstrument_atomic(c: &AtomicComponent) -> AtomicComponent {
    if !c.instrumented {
        return c.clone();
    }
    let mut out = c.clone();
    out.instrumented = false;
    out.vars.retain(|v| v.name != LOC_VAR);
    for p in &mut out.ports {
        if p.id == BETA_PORT {
            p.vars.clear();
        }
    }
    for t in &mut out.transitions {
        if t.port == BETA_PORT {
            t.step.retain(|a| a.target != LOC_VAR);
        }
    }
    out
}

/// Builds the transformed system: components in the support of
/// `monitored_vars` (qualified `Comp.var` or `Comp.loc` names) are
/// instrumented, the RGT component is attached, and interactions are
/// rewired. A global-state input is split first.
pub fn transform_system(
    sys: &CompositeSystem,
    monitored_vars: &[String],
    variant: RgtVariant,
) -> Result<CompositeSystem, TransformError> {
    let mut support = Vec::new();
    for v in monitored_vars {
        let (comp, var) = v
            .split_once('.')
            .ok_or_else(|| TransformError::UnknownMonitoredVariable(v.clone()))?;
        let i = sys
            .component_index(comp)
            .ok_or_else(|| TransformError::UnknownMonitoredVariable(v.clone()))?;
        if sys.components[i].var_index(var).is_none() && var != LOC_VAR {
            return Err(TransformError::UnknownMonitoredVariable(v.clone()));
        }
        support.push(i);
    }
    transform_components(sys, |i| support.contains(&i), variant)
}

/// Transformation with every component instrumented.
pub fn transform_all(sys: &CompositeSystem, variant: RgtVariant) -> Result<CompositeSystem, TransformError> {
    transform_components(sys, |_| true, variant)
}

/// Transformation instrumenting exactly the monitor's support, with the
/// monitor attached.
pub fn transform_for_monitor(
    sys: &CompositeSystem,
    spec: &MonitorSpec,
    variant: RgtVariant,
) -> Result<CompositeSystem, TransformError> {
    let r = transform_system(sys, &spec.referenced_vars(), variant)?;
    Ok(attach_monitor(&r, spec)?)
}

fn transform_components(
    sys: &CompositeSystem,
    monitored: impl Fn(usize) -> bool,
    variant: RgtVariant,
) -> Result<CompositeSystem, TransformError> {
    if sys.rgt.is_some() {
        return Err(TransformError::AlreadyTransformed);
    }
    let mut out = if sys.is_partial() { sys.clone() } else { to_partial(sys) };
    for (i, c) in out.components.iter_mut().enumerate() {
        if monitored(i) {
            *c = instrument_atomic(c)?;
        }
    }
    out.rgt = Some(RgtDecl {
        variant,
        undelivered: Vec::new(),
    });
    out.monitor = None;
    Ok(out)
}

/// Removes the RGT component, the monitor and all instrumentation.
pub fn strip_transform(sys: &CompositeSystem) -> CompositeSystem {
    let mut out = sys.clone();
    out.rgt = None;
    out.monitor = None;
    out.components = sys.components.iter().map(uninstrument_atomic).collect();
    out
}

/// One component slot of a reconstruction tuple.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    /// The component was busy; its state is not known yet.
    Null,
    /// The component is outside the monitored support.
    Unmonitored,
    Known(CompState),
}

impl Slot {
    pub fn is_defined(&self) -> bool {
        !matches!(self, Slot::Null)
    }
}

/// A reconstruction tuple: n component slots and the interaction that
/// produced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgtTuple {
    pub slots: Vec<Slot>,
    pub interaction: usize,
}

impl RgtTuple {
    pub fn is_complete(&self) -> bool {
        self.slots.iter().all(Slot::is_defined)
    }
}

/// Variables of the RGT component.
#[derive(Clone, Debug)]
pub struct RgtState {
    variant: RgtVariant,
    monitored: Vec<bool>,
    init: SystemState,
    /// Tuples not yet discarded; the front one has absolute index `base + 1`.
    tuples: VecDeque<RgtTuple>,
    base: usize,
    m: usize,
    gs: Vec<bool>,
    z: Vec<bool>,
    /// Last exported state of each component.
    mirror: Vec<CompState>,
    delivered: Option<(SystemState, usize)>,
    retain: bool,
}

impl RgtState {
    /// Initial RGT variables for a system with `n_interactions` interactions,
    /// initial state `init`, and the given monitored components.
    pub fn new(
        init: &SystemState,
        monitored: Vec<bool>,
        n_interactions: usize,
        variant: RgtVariant,
        retain: bool,
    ) -> Self {
        assert_eq!(monitored.len(), init.arity());
        RgtState {
            variant,
            monitored,
            init: init.clone(),
            tuples: VecDeque::new(),
            base: 0,
            m: 1,
            gs: vec![false; n_interactions],
            z: vec![false; init.arity()],
            mirror: init.0.clone(),
            delivered: None,
            retain,
        }
    }

    /// RGT variables for a transformed system: instrumented components are
    /// monitored, the variant comes from the system.
    pub fn for_system(sys: &CompositeSystem, retain: bool) -> Self {
        let variant = sys.rgt.as_ref().map(|r| r.variant).unwrap_or_default();
        let monitored = sys.components.iter().map(|c| c.instrumented).collect();
        RgtState::new(&sys.initial_state(), monitored, sys.interactions.len(), variant, retain)
    }

    pub fn variant(&self) -> RgtVariant {
        self.variant
    }

    pub fn is_monitored(&self, i: usize) -> bool {
        self.monitored[i]
    }

    pub fn init(&self) -> &SystemState {
        &self.init
    }

    /// Delivery cursor (1-based over interaction tuples).
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn gs(&self) -> &[bool] {
        &self.gs
    }

    pub fn z(&self) -> &[bool] {
        &self.z
    }

    /// Total number of tuples ever appended.
    pub fn len(&self) -> usize {
        self.base + self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tuple with absolute 1-based index `k`, if still held.
    pub fn tuple(&self, k: usize) -> Option<&RgtTuple> {
        k.checked_sub(self.base + 1).and_then(|j| self.tuples.get(j))
    }

    /// Held tuples with their absolute 1-based indices.
    pub fn tuples(&self) -> impl Iterator<Item = (usize, &RgtTuple)> {
        self.tuples.iter().enumerate().map(move |(j, t)| (self.base + j + 1, t))
    }

    /// Tuples from the cursor on.
    pub fn pending(&self) -> impl Iterator<Item = &RgtTuple> {
        self.tuples.iter().skip(self.m - 1 - self.base)
    }

    /// The last delivered (state, interaction), i.e. the delivery copies.
    pub fn delivered(&self) -> Option<&(SystemState, usize)> {
        self.delivered.as_ref()
    }

    /// No reconstructed state is waiting for delivery.
    pub fn is_stable(&self) -> bool {
        self.gs.iter().all(|g| !g)
    }

    pub fn can_new(&self) -> bool {
        !self.variant.guards_new() || self.is_stable()
    }

    pub fn can_upd(&self) -> bool {
        !self.variant.guards_upd() || self.is_stable()
    }

    /// Interaction `a` fired, involving components `involved`.
    pub fn new_interaction(&mut self, a: usize, involved: &[usize]) -> Result<(), RgtError> {
        if !self.can_new() {
            return Err(RgtError::GuardViolated);
        }
        let n = self.monitored.len();
        let mut slots = Vec::with_capacity(n);
        for i in 0..n {
            if !self.monitored[i] {
                slots.push(Slot::Unmonitored);
            } else if involved.contains(&i) {
                self.z[i] = true;
                slots.push(Slot::Null);
            } else if self.z[i] {
                // Still busy from an earlier interaction.
                slots.push(Slot::Null);
            } else {
                slots.push(Slot::Known(self.mirror[i].clone()));
            }
        }
        self.tuples.push_back(RgtTuple { slots, interaction: a });
        // A tuple can be complete from the start (no monitored component
        // busy); without this it would wait for an unrelated completion.
        self.check();
        Ok(())
    }

    /// Component `i` completed and exported `state`.
    pub fn upd(&mut self, i: usize, state: &CompState) -> Result<(), RgtError> {
        if !self.can_upd() {
            return Err(RgtError::GuardViolated);
        }
        if !self.z[i] {
            return Err(RgtError::NotBusy(i));
        }
        self.z[i] = false;
        self.mirror[i] = state.clone();
        let skip = self.m - 1 - self.base;
        for t in self.tuples.iter_mut().skip(skip) {
            if t.slots[i] == Slot::Null {
                t.slots[i] = Slot::Known(state.clone());
            }
        }
        self.check();
        Ok(())
    }

    /// Raises `gs_a` for interactions with a complete undelivered tuple.
    pub fn check(&mut self) {
        let skip = self.m - 1 - self.base;
        for t in self.tuples.iter().skip(skip) {
            if !self.gs[t.interaction] {
                self.gs[t.interaction] = t.is_complete();
            }
        }
    }

    /// Whether the delivery port of interaction `b` can fire.
    pub fn can_get_via(&self, b: usize) -> bool {
        self.gs[b]
    }

    /// Interactions whose delivery port is enabled.
    pub fn deliverable(&self) -> impl Iterator<Item = usize> + '_ {
        self.gs.iter().enumerate().filter(|(_, g)| **g).map(|(b, _)| b)
    }

    /// The interaction of the next tuple to deliver, if its port is enabled.
    pub fn next_delivery(&self) -> Option<usize> {
        self.tuple(self.m).map(|t| t.interaction).filter(|&a| self.gs[a])
    }

    /// Delivers the tuple under the cursor through the delivery port of `b`.
    pub fn get_via(&mut self, b: usize) -> Result<(SystemState, usize), RgtError> {
        if !self.gs[b] {
            return Err(RgtError::NothingToDeliver);
        }
        let t = self.tuple(self.m).ok_or(RgtError::NothingToDeliver)?;
        if !t.is_complete() {
            return Err(RgtError::NothingToDeliver);
        }
        let a = t.interaction;
        let state = SystemState(
            t.slots
                .iter()
                .enumerate()
                .map(|(i, s)| match s {
                    Slot::Known(cs) => cs.clone(),
                    // Not observed: report the component's initial state.
                    _ => self.init.0[i].clone(),
                })
                .collect(),
        );
        self.gs[a] = false;
        self.m += 1;
        if !self.retain {
            self.tuples.pop_front();
            self.base += 1;
        }
        self.check();
        self.delivered = Some((state.clone(), a));
        Ok((state, a))
    }

    /// Delivers the tuple under the cursor through its own port.
    pub fn get(&mut self) -> Result<(SystemState, usize), RgtError> {
        let b = self.next_delivery().ok_or(RgtError::NothingToDeliver)?;
        self.get_via(b)
    }

    /// Abstraction used for state-space exploration, one bit per
    /// interaction.
    pub fn summary(&self) -> RgtSummary {
        self.summary_by(|a| a)
    }

    /// Abstraction with interactions mapped to bit `class(a)`.
    pub fn summary_by(&self, class: impl Fn(usize) -> usize) -> RgtSummary {
        let mut s = RgtSummary::default();
        for t in self.pending() {
            let mut null = 0u64;
            for (i, slot) in t.slots.iter().enumerate() {
                if *slot == Slot::Null {
                    null |= 1 << i;
                }
            }
            let label = 1u64 << class(t.interaction);
            if null == 0 {
                s.ready |= label;
            } else {
                match s.groups.last_mut() {
                    Some((mask, labels)) if *mask == null => *labels |= label,
                    _ => s.groups.push((null, label)),
                }
            }
        }
        for (b, g) in self.gs.iter().enumerate() {
            if *g {
                s.gs |= 1 << class(b);
            }
        }
        s
    }
}

/// Finite abstraction of the RGT variables: which interactions (or
/// classes of interactions) have a complete undelivered tuple (`ready`),
/// the raised `gs` flags, and the incomplete tuples grouped by their set of
/// null slots. Null sets of successive incomplete tuples grow, so there are
/// at most n groups. Tuple contents, multiplicities and order within a
/// group are dropped; they only affect what is delivered, not which
/// interactions are enabled.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RgtSummary {
    pub groups: Vec<(u64, u64)>,
    pub ready: u64,
    pub gs: u64,
}

impl RgtSummary {
    pub fn is_stable(&self) -> bool {
        self.gs == 0
    }

    pub fn can_new(&self, v: RgtVariant) -> bool {
        !v.guards_new() || self.is_stable()
    }

    pub fn can_upd(&self, v: RgtVariant) -> bool {
        !v.guards_upd() || self.is_stable()
    }

    /// `new(a)`; `busy` is the set of monitored components busy after `a`.
    pub fn new_interaction(&self, a: usize, busy: u64) -> RgtSummary {
        let mut s = self.clone();
        let label = 1u64 << a;
        if busy == 0 {
            s.ready |= label;
        } else {
            match s.groups.last_mut() {
                Some((mask, labels)) if *mask == busy => *labels |= label,
                _ => s.groups.push((busy, label)),
            }
        }
        s.gs |= s.ready;
        s
    }

    /// `upd(i)` followed by `check`.
    pub fn upd(&self, i: usize) -> RgtSummary {
        let mut s = RgtSummary {
            groups: Vec::new(),
            ready: self.ready,
            gs: self.gs,
        };
        for &(mask, labels) in &self.groups {
            let mask = mask & !(1u64 << i);
            if mask == 0 {
                s.ready |= labels;
            } else {
                match s.groups.last_mut() {
                    Some((m, l)) if *m == mask => *l |= labels,
                    _ => s.groups.push((mask, labels)),
                }
            }
        }
        s.gs |= s.ready;
        s
    }

    /// Possible results of one `get`: the delivered tuple carries some ready
    /// interaction `c`, which may or may not label another ready tuple.
    pub fn gets(&self) -> Vec<RgtSummary> {
        let mut out = Vec::new();
        if self.gs == 0 {
            return out;
        }
        let mut bits = self.ready;
        while bits != 0 {
            let c = bits & bits.wrapping_neg();
            bits &= !c;
            for ready in [self.ready, self.ready & !c] {
                let s = RgtSummary {
                    groups: self.groups.clone(),
                    ready,
                    gs: (self.gs & !c) | ready,
                };
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        out
    }
}
