//! Finite-state monitors over reconstructed global states with four-valued
//! verdicts.
//!
//! Document format:
//!
//! ```text
//! monitor homogeneity {
//!   event e1 = abs(Worker2.x - Worker1.x) < 3;
//!   state good initial: currently_true;
//!   state bad: false;
//!   transition good -[e1]-> good;
//!   transition good -[not e1]-> bad;
//!   strict;          // unmatched event valuations are errors
//! }
//! ```
//!
//! Events are boolean expressions over qualified `Comp.var` names; `Comp.loc`
//! is the component's current location as a `#symbol`. Transition formulas
//! range over event names. Marking the initial state `emitting` makes the
//! monitor issue a verdict for the initial global state as well.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{eval_bool, type_of, Expr, ExprError, Type, Value};
use crate::model::{CompositeSystem, SystemState, LOC_VAR};
use crate::syntax::{quote_name, Parser, SyntaxError};

/// Largest number of events for which determinism is checked exhaustively.
const MAX_EVENTS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    True,
    CurrentlyTrue,
    CurrentlyFalse,
    False,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [
        Verdict::True,
        Verdict::CurrentlyTrue,
        Verdict::CurrentlyFalse,
        Verdict::False,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, Verdict::True | Verdict::False)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::True => "true",
            Verdict::CurrentlyTrue => "currently_true",
            Verdict::CurrentlyFalse => "currently_false",
            Verdict::False => "false",
        }
    }

    /// Conventional notation: `⊤`, `⊤_c`, `⊥_c`, `⊥`.
    pub fn symbol(self) -> &'static str {
        match self {
            Verdict::True => "⊤",
            Verdict::CurrentlyTrue => "⊤_c",
            Verdict::CurrentlyFalse => "⊥_c",
            Verdict::False => "⊥",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verdict::ALL
            .into_iter()
            .find(|v| v.as_str() == s || v.symbol() == s)
            .ok_or_else(|| format!("unknown verdict `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorEvent {
    pub name: String,
    #[serde(with = "crate::model::json_expr")]
    pub expr: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorState {
    pub name: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub emitting: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorTransition {
    pub from: String,
    #[serde(with = "crate::model::json_expr")]
    pub guard: Expr,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorSpec {
    pub name: String,
    #[serde(default)]
    pub events: Vec<MonitorEvent>,
    pub states: Vec<MonitorState>,
    pub initial: String,
    #[serde(default)]
    pub transitions: Vec<MonitorTransition>,
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MonitorError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("monitor `{monitor}`: {msg}")]
    Invalid { monitor: String, msg: String },
    #[error("unknown variable `{0}` in monitor event")]
    UnknownVariable(String),
    #[error("state `{state}` has overlapping transitions for event valuation {valuation}")]
    NondeterministicTransition { state: String, valuation: String },
    #[error("monitor refers to `{0}`, which is not observed by the reconstruction")]
    IncompatibleSupport(String),
    #[error("the monitor only accepts global states, got {0}")]
    PartialStateRejected(String),
    #[error("strict monitor: no transition from `{state}` for event valuation {valuation}")]
    Unmatched { state: String, valuation: String },
    #[error("event evaluation failed: {0}")]
    Eval(#[from] ExprError),
}

impl MonitorSpec {
    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }

    /// Qualified `Comp.var` names the events read.
    pub fn referenced_vars(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.events {
            for v in e.expr.vars() {
                if !out.iter().any(|o| o == v) {
                    out.push(v.to_string());
                }
            }
        }
        out
    }

    /// Components whose state the events depend on.
    pub fn support(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for v in self.referenced_vars() {
            let comp = v.split_once('.').map_or(v.as_str(), |(c, _)| c);
            if !out.iter().any(|o| o == comp) {
                out.push(comp.to_string());
            }
        }
        out
    }

    /// Checks the automaton on its own: names resolve, formulas only use
    /// event names, and no event valuation enables two transitions.
    pub fn check(&self) -> Result<(), MonitorError> {
        let invalid = |msg: String| MonitorError::Invalid {
            monitor: self.name.clone(),
            msg,
        };
        if self.state_index(&self.initial).is_none() {
            return Err(invalid(format!("unknown initial state `{}`", self.initial)));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.states {
            if !seen.insert(s.name.as_str()) {
                return Err(invalid(format!("duplicate state `{}`", s.name)));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.events {
            if !seen.insert(e.name.as_str()) {
                return Err(invalid(format!("duplicate event `{}`", e.name)));
            }
        }
        if self.events.len() > MAX_EVENTS {
            return Err(invalid(format!("at most {MAX_EVENTS} events are supported")));
        }
        let event_ty = |n: &str| self.events.iter().any(|e| e.name == n).then_some(Type::Bool);
        for t in &self.transitions {
            for s in [&t.from, &t.to] {
                if self.state_index(s).is_none() {
                    return Err(invalid(format!("unknown state `{s}`")));
                }
            }
            match type_of(&t.guard, &event_ty) {
                Ok(Type::Bool) => {}
                Ok(other) => return Err(invalid(format!("formula `{}` has type {other}", t.guard))),
                Err(ExprError::UnboundVariable(v)) => return Err(invalid(format!("unknown event `{v}`"))),
                Err(e) => return Err(invalid(e.to_string())),
            }
        }
        let k = self.events.len();
        for s in &self.states {
            let outgoing: Vec<&MonitorTransition> = self.transitions.iter().filter(|t| t.from == s.name).collect();
            for bits in 0u32..(1u32 << k) {
                let env = |n: &str| {
                    self.events
                        .iter()
                        .position(|e| e.name == n)
                        .map(|i| Value::Bool(bits >> i & 1 == 1))
                };
                let mut hits = 0;
                for t in &outgoing {
                    if eval_bool(&t.guard, &env)? {
                        hits += 1;
                    }
                }
                if hits > 1 {
                    return Err(MonitorError::NondeterministicTransition {
                        state: s.name.clone(),
                        valuation: self.describe_bits(bits),
                    });
                }
            }
        }
        Ok(())
    }

    fn describe_bits(&self, bits: u32) -> String {
        let parts: Vec<String> = self
            .events
            .iter()
            .enumerate()
            .map(|(i, e)| format!("{}={}", e.name, bits >> i & 1 == 1))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }
}

/// Checks that every event variable exists in `sys` with a usable type and,
/// for transformed systems, belongs to an instrumented component.
pub fn check_support(m: &MonitorSpec, sys: &CompositeSystem) -> Result<(), MonitorError> {
    let types = |name: &str| -> Option<Type> {
        let (comp, var) = name.split_once('.')?;
        let c = sys.components.iter().find(|c| c.id == comp)?;
        c.var_type(var).or((var == LOC_VAR).then_some(Type::Sym))
    };
    for v in m.referenced_vars() {
        if types(&v).is_none() {
            return Err(MonitorError::UnknownVariable(v));
        }
    }
    for e in &m.events {
        match type_of(&e.expr, &types) {
            Ok(Type::Bool) => {}
            Ok(other) => {
                return Err(MonitorError::Invalid {
                    monitor: m.name.clone(),
                    msg: format!("event `{}` has type {other}, expected bool", e.name),
                })
            }
            Err(err) => {
                return Err(MonitorError::Invalid {
                    monitor: m.name.clone(),
                    msg: format!("event `{}`: {err}", e.name),
                })
            }
        }
    }
    if sys.rgt.is_some() {
        for comp in m.support() {
            if !sys.components.iter().any(|c| c.id == comp && c.instrumented) {
                return Err(MonitorError::IncompatibleSupport(comp));
            }
        }
    }
    Ok(())
}

/// Parses a standalone monitor document.
pub fn parse_monitor(text: &str) -> Result<MonitorSpec, MonitorError> {
    let mut p = Parser::new(text)?;
    let m = parse_monitor_block(&mut p)?;
    if !p.at_eof() {
        return Err(p.unexpected("end of monitor document").into());
    }
    m.check()?;
    Ok(m)
}

/// Parses one `monitor <name> { ... }` block.
pub fn parse_monitor_block(p: &mut Parser) -> Result<MonitorSpec, SyntaxError> {
    p.expect_keyword("monitor")?;
    let name = p.name()?;
    p.expect_punct("{")?;
    let mut m = MonitorSpec {
        name,
        events: Vec::new(),
        states: Vec::new(),
        initial: String::new(),
        transitions: Vec::new(),
        strict: false,
    };
    while !p.eat_punct("}") {
        if p.eat_keyword("event") {
            let name = p.name()?;
            p.expect_punct("=")?;
            let expr = p.expr()?;
            p.expect_punct(";")?;
            m.events.push(MonitorEvent { name, expr });
        } else if p.eat_keyword("state") {
            let name = p.name()?;
            let mut emitting = false;
            loop {
                if p.eat_keyword("initial") {
                    m.initial = name.clone();
                } else if p.eat_keyword("emitting") {
                    emitting = true;
                } else {
                    break;
                }
            }
            p.expect_punct(":")?;
            let v = p.name()?;
            let verdict = v.parse().map_err(|e: String| p.error(e))?;
            p.expect_punct(";")?;
            m.states.push(MonitorState {
                name,
                verdict,
                emitting,
            });
        } else if p.eat_keyword("transition") {
            let from = p.name()?;
            p.expect_punct("-")?;
            p.expect_punct("[")?;
            let guard = p.expr()?;
            p.expect_punct("]")?;
            p.expect_punct("->")?;
            let to = p.name()?;
            p.expect_punct(";")?;
            m.transitions.push(MonitorTransition { from, guard, to });
        } else if p.eat_keyword("strict") {
            p.expect_punct(";")?;
            m.strict = true;
        } else {
            return Err(p.unexpected("`event`, `state`, `transition`, `strict` or `}`"));
        }
    }
    if m.initial.is_empty() {
        return Err(p.error(format!("monitor `{}` has no initial state", m.name)));
    }
    Ok(m)
}

pub fn render_monitor(m: &MonitorSpec) -> String {
    let mut out = format!("monitor {} {{\n", quote_name(&m.name));
    for e in &m.events {
        out.push_str(&format!("  event {} = {};\n", quote_name(&e.name), e.expr));
    }
    for s in &m.states {
        let init = if s.name == m.initial { " initial" } else { "" };
        let emit = if s.emitting { " emitting" } else { "" };
        out.push_str(&format!(
            "  state {}{init}{emit}: {};\n",
            quote_name(&s.name),
            s.verdict
        ));
    }
    for t in &m.transitions {
        out.push_str(&format!(
            "  transition {} -[{}]-> {};\n",
            quote_name(&t.from),
            t.guard,
            quote_name(&t.to)
        ));
    }
    if m.strict {
        out.push_str("  strict;\n");
    }
    out.push_str("}\n");
    out
}

/// Adds `spec` to a transformed system; deliveries then feed the monitor.
pub fn attach_monitor(sys: &CompositeSystem, spec: &MonitorSpec) -> Result<CompositeSystem, MonitorError> {
    if sys.rgt.is_none() {
        return Err(MonitorError::Invalid {
            monitor: spec.name.clone(),
            msg: "a monitor can only be attached to a transformed system".into(),
        });
    }
    spec.check()?;
    check_support(spec, sys)?;
    let mut out = sys.clone();
    out.monitor = Some(spec.clone());
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    Var(usize, usize),
    Loc(usize),
}

/// Current automaton state and the verdicts emitted so far.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonitorRun {
    pub state: usize,
    pub verdicts: Vec<Verdict>,
}

/// A monitor bound to the component layout of one system.
#[derive(Clone, Debug)]
pub struct Monitor {
    spec: MonitorSpec,
    /// Qualified name and resolved position of every event variable.
    slots: Vec<(String, Slot)>,
    /// Outgoing transitions per state, as (guard, target).
    out: Vec<Vec<(Expr, usize)>>,
    run: MonitorRun,
}

impl Monitor {
    pub fn new(spec: &MonitorSpec, sys: &CompositeSystem) -> Result<Self, MonitorError> {
        spec.check()?;
        check_support(spec, sys)?;
        let mut slots = Vec::new();
        for v in spec.referenced_vars() {
            let (comp, var) = v
                .split_once('.')
                .ok_or_else(|| MonitorError::UnknownVariable(v.clone()))?;
            let ci = sys
                .component_index(comp)
                .ok_or_else(|| MonitorError::UnknownVariable(v.clone()))?;
            let slot = match sys.components[ci].var_index(var) {
                Some(k) => Slot::Var(ci, k),
                None => Slot::Loc(ci),
            };
            slots.push((v, slot));
        }
        let out = spec
            .states
            .iter()
            .map(|s| {
                spec.transitions
                    .iter()
                    .filter(|t| t.from == s.name)
                    .map(|t| (t.guard.clone(), spec.state_index(&t.to).expect("checked")))
                    .collect()
            })
            .collect();
        let state = spec.state_index(&spec.initial).expect("checked");
        Ok(Monitor {
            spec: spec.clone(),
            slots,
            out,
            run: MonitorRun {
                state,
                verdicts: Vec::new(),
            },
        })
    }

    pub fn spec(&self) -> &MonitorSpec {
        &self.spec
    }

    pub fn run(&self) -> &MonitorRun {
        &self.run
    }

    pub fn current_verdict(&self) -> Verdict {
        self.spec.states[self.run.state].verdict
    }

    /// The verdict on the initial global state, if the spec asks for one.
    pub fn initial_verdict(&mut self) -> Option<Verdict> {
        let s = &self.spec.states[self.run.state];
        if s.emitting {
            self.run.verdicts.push(s.verdict);
            Some(s.verdict)
        } else {
            None
        }
    }

    /// Evaluates the events on a global state.
    pub fn events(&self, q: &SystemState) -> Result<Vec<bool>, MonitorError> {
        let env = |name: &str| -> Option<Value> {
            let (_, slot) = self.slots.iter().find(|(n, _)| n == name)?;
            Some(match *slot {
                Slot::Var(c, k) => q.0[c].vals[k].clone(),
                Slot::Loc(c) => Value::Sym(q.0[c].loc.to_string()),
            })
        };
        self.spec
            .events
            .iter()
            .map(|e| eval_bool(&e.expr, &env).map_err(MonitorError::from))
            .collect()
    }

    /// Consumes one reconstructed global state and returns the new verdict.
    pub fn step(&mut self, q: &SystemState) -> Result<Verdict, MonitorError> {
        if !q.is_global() {
            return Err(MonitorError::PartialStateRejected(q.short()));
        }
        if !self.current_verdict().is_terminal() {
            let ev = self.events(q)?;
            let env = |n: &str| {
                self.spec
                    .events
                    .iter()
                    .position(|e| e.name == n)
                    .map(|i| Value::Bool(ev[i]))
            };
            let mut next = None;
            for (g, to) in &self.out[self.run.state] {
                if eval_bool(g, &env)? {
                    next = Some(*to);
                    break;
                }
            }
            match next {
                Some(to) => self.run.state = to,
                None if self.spec.strict => {
                    let bits = ev.iter().enumerate().fold(0u32, |b, (i, &x)| b | (x as u32) << i);
                    return Err(MonitorError::Unmatched {
                        state: self.spec.states[self.run.state].name.clone(),
                        valuation: self.spec.describe_bits(bits),
                    });
                }
                None => {}
            }
        }
        let v = self.current_verdict();
        self.run.verdicts.push(v);
        Ok(v)
    }
}

/// Runs `spec` over a sequence of global states, one verdict per state.
pub fn verdicts_of<'a>(
    spec: &MonitorSpec,
    sys: &CompositeSystem,
    states: impl IntoIterator<Item = &'a SystemState>,
) -> Result<Vec<Verdict>, MonitorError> {
    let mut m = Monitor::new(spec, sys)?;
    for q in states {
        m.step(q)?;
    }
    Ok(m.run.verdicts)
}

/// The bundled homogeneity monitor for the Task example.
pub fn builtin_task_monitor() -> MonitorSpec {
    parse_monitor(crate::assets::TASK_MONITOR).expect("bundled task monitor is valid")
}

pub fn builtin_readers_writers_monitor() -> MonitorSpec {
    parse_monitor(crate::assets::READERS_WRITERS_MONITOR).expect("bundled readers/writers monitor is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_task, CompState};

    fn task_state(locs: [&str; 4], xs: [i64; 3]) -> SystemState {
        let mut v: Vec<CompState> = (0..3)
            .map(|i| CompState::new(locs[i], false, vec![Value::Int(xs[i])]))
            .collect();
        v.push(CompState::new(locs[3], false, vec![]));
        SystemState(v)
    }

    #[test]
    fn homogeneity_monitor_shape() {
        let m = builtin_task_monitor();
        assert_eq!(m.states.len(), 2);
        assert_eq!(m.support(), ["Worker2", "Worker1", "Worker3"]);
        check_support(&m, &builtin_task()).unwrap();
    }

    #[test]
    fn currently_true_on_balanced_counts() {
        let sys = builtin_task();
        let mut mon = Monitor::new(&builtin_task_monitor(), &sys).unwrap();
        assert_eq!(mon.initial_verdict(), None);
        let q = task_state(["done", "done", "free", "delivered"], [1, 1, 0]);
        assert_eq!(mon.step(&q).unwrap(), Verdict::CurrentlyTrue);
        let q = task_state(["done", "done", "free", "ready"], [1, 1, 0]);
        assert_eq!(mon.step(&q).unwrap(), Verdict::CurrentlyTrue);
    }

    #[test]
    fn false_is_a_sink() {
        let sys = builtin_task();
        let mut mon = Monitor::new(&builtin_task_monitor(), &sys).unwrap();
        let bad = task_state(["done", "free", "free", "ready"], [11, 1, 0]);
        assert_eq!(mon.step(&bad).unwrap(), Verdict::False);
        let good = task_state(["free", "free", "free", "ready"], [0, 0, 0]);
        assert_eq!(mon.step(&good).unwrap(), Verdict::False);
    }

    #[test]
    fn rejects_partial_states() {
        let sys = builtin_task();
        let mut mon = Monitor::new(&builtin_task_monitor(), &sys).unwrap();
        let mut q = task_state(["free", "free", "free", "ready"], [0, 0, 0]);
        q.0[0].busy = true;
        assert!(matches!(mon.step(&q), Err(MonitorError::PartialStateRejected(_))));
    }

    #[test]
    fn zero_events_constant_verdict() {
        let m = parse_monitor("monitor k { state s initial emitting: currently_false; }").unwrap();
        let sys = builtin_task();
        let mut mon = Monitor::new(&m, &sys).unwrap();
        assert_eq!(mon.initial_verdict(), Some(Verdict::CurrentlyFalse));
        assert_eq!(mon.step(&sys.initial_state()).unwrap(), Verdict::CurrentlyFalse);
    }

    #[test]
    fn overlapping_guards_rejected() {
        let text = "monitor m { event a = Worker1.x > 0; event b = Worker2.x > 0;
            state s initial: currently_true; state t: false;
            transition s -[a]-> s; transition s -[b]-> t; }";
        assert!(matches!(
            parse_monitor(text),
            Err(MonitorError::NondeterministicTransition { .. })
        ));
    }

    #[test]
    fn strict_mode_reports_unmatched() {
        let text = "monitor m { event a = Worker1.x > 0; state s initial: currently_true;
            transition s -[a]-> s; strict; }";
        let m = parse_monitor(text).unwrap();
        let sys = builtin_task();
        let mut mon = Monitor::new(&m, &sys).unwrap();
        assert!(matches!(
            mon.step(&sys.initial_state()),
            Err(MonitorError::Unmatched { .. })
        ));
    }

    #[test]
    fn unknown_variable() {
        let m = parse_monitor("monitor m { event a = Worker9.x > 0; state s initial: true; }").unwrap();
        assert_eq!(
            check_support(&m, &builtin_task()),
            Err(MonitorError::UnknownVariable("Worker9.x".into()))
        );
    }

    #[test]
    fn location_events() {
        let m = parse_monitor(
            "monitor m { event busy = Generator.loc == #delivered;
             state s initial: currently_true; state t: currently_false;
             transition s -[busy]-> t; transition t -[not busy]-> s; }",
        )
        .unwrap();
        let sys = builtin_task();
        let mut mon = Monitor::new(&m, &sys).unwrap();
        let q = task_state(["done", "done", "free", "delivered"], [1, 1, 0]);
        assert_eq!(mon.step(&q).unwrap(), Verdict::CurrentlyFalse);
    }

    #[test]
    fn render_round_trip() {
        for m in [builtin_task_monitor(), builtin_readers_writers_monitor()] {
            assert_eq!(parse_monitor(&render_monitor(&m)).unwrap(), m);
        }
    }
}
