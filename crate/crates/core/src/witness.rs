//! Online reconstruction of the global trace witnessed by a partial-state
//! run. `AccSeq` keeps every reconstructed entry; `RgtStream` keeps only
//! the unresolved suffix and emits the witness incrementally.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::model::{CompositeSystem, SystemState};
use crate::semantics::{
    enabled_transitions, fire_guided, from_partial, project_uninstrumented, visible_rank, EngineError, Label, Trace,
};
use crate::transform::strip_transform;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WitnessItem {
    State(SystemState),
    Label(String),
}

impl fmt::Display for WitnessItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WitnessItem::State(q) => f.write_str(&q.short()),
            WitnessItem::Label(a) => f.write_str(a),
        }
    }
}

/// Renders a witness as `q0·a1·q1⋯`.
pub fn show_witness(w: &[WitnessItem]) -> String {
    w.iter().map(ToString::to_string).collect::<Vec<_>>().join("·")
}

#[derive(Debug, Error)]
pub enum WitnessError {
    #[error("replay failed: {0}")]
    Replay(#[from] EngineError),
    #[error(transparent)]
    Eval(#[from] crate::expr::ExprError),
    #[error("trace is not a run of the model: {0}")]
    Mismatch(String),
}

/// Slot-wise merge: a busy stored slot takes the fresh value when that one
/// is defined.
pub fn upd(fresh: &SystemState, stored: &SystemState) -> SystemState {
    SystemState(
        fresh
            .0
            .iter()
            .zip(&stored.0)
            .map(|(f, s)| if f.is_defined() && s.busy { f.clone() } else { s.clone() })
            .collect(),
    )
}

fn upd_slot(fresh: &SystemState, stored: &mut SystemState, i: usize) {
    if stored.0[i].busy && fresh.0[i].is_defined() {
        stored.0[i] = fresh.0[i].clone();
    }
}

/// Accumulated reconstruction: the initial state followed by one entry per
/// interaction, each possibly still partial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccSeq {
    pub initial: SystemState,
    pub entries: Vec<(String, SystemState)>,
}

pub fn acc_init(q0: &SystemState) -> AccSeq {
    AccSeq {
        initial: q0.clone(),
        entries: Vec::new(),
    }
}

impl AccSeq {
    /// Extends by one step of a partial-state trace reaching `q`.
    pub fn step(&mut self, label: &Label, q: &SystemState) {
        match label {
            Label::Interaction(a) => self.entries.push((a.clone(), q.clone())),
            Label::Beta(i) => {
                for (_, e) in &mut self.entries {
                    upd_slot(q, e, *i);
                }
            }
        }
    }

    /// The maximal prefix of global entries, plus the label of the first
    /// partial entry.
    pub fn discriminant(&self) -> Vec<WitnessItem> {
        let mut out = vec![WitnessItem::State(self.initial.clone())];
        for (a, q) in &self.entries {
            out.push(WitnessItem::Label(a.clone()));
            if !q.is_global() {
                break;
            }
            out.push(WitnessItem::State(q.clone()));
        }
        out
    }
}

pub fn acc_step(acc: &mut AccSeq, label: &Label, q: &SystemState) {
    acc.step(label, q);
}

/// Accumulates a whole trace.
pub fn acc_of(trace: &Trace) -> AccSeq {
    let mut acc = acc_init(&trace.initial);
    for (l, q) in &trace.steps {
        acc.step(l, q);
    }
    acc
}

/// Witness of a partial-state trace.
pub fn witness(trace: &Trace) -> Vec<WitnessItem> {
    acc_of(trace).discriminant()
}

/// Incremental witness: `step` returns what extends the output so far.
#[derive(Clone, Debug)]
pub struct RgtStream {
    pending: VecDeque<(String, SystemState)>,
    emitted_trailing: bool,
}

impl RgtStream {
    /// Starts a stream; the first item is the initial state.
    pub fn start(q0: &SystemState) -> (RgtStream, Vec<WitnessItem>) {
        (
            RgtStream {
                pending: VecDeque::new(),
                emitted_trailing: false,
            },
            vec![WitnessItem::State(q0.clone())],
        )
    }

    /// Number of entries waiting for completions.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn step(&mut self, label: &Label, q: &SystemState) -> Vec<WitnessItem> {
        match label {
            Label::Interaction(a) => self.pending.push_back((a.clone(), q.clone())),
            Label::Beta(i) => {
                for (_, e) in &mut self.pending {
                    upd_slot(q, e, *i);
                }
            }
        }
        self.flush()
    }

    fn flush(&mut self) -> Vec<WitnessItem> {
        let mut out = Vec::new();
        while self.pending.front().is_some_and(|(_, q)| q.is_global()) {
            let (a, q) = self.pending.pop_front().expect("front");
            if !std::mem::take(&mut self.emitted_trailing) {
                out.push(WitnessItem::Label(a));
            }
            out.push(WitnessItem::State(q));
        }
        if let Some((a, _)) = self.pending.front() {
            if !self.emitted_trailing {
                out.push(WitnessItem::Label(a.clone()));
                self.emitted_trailing = true;
            }
        }
        out
    }
}

/// Interactions of a trace, completions dropped.
pub fn interactions_of(trace: &Trace) -> Vec<String> {
    trace
        .labels()
        .filter_map(|l| match l {
            Label::Interaction(a) => Some(a.clone()),
            Label::Beta(_) => None,
        })
        .collect()
}

/// Expected witness of a partial-state run of `sys`, computed without the
/// accumulator: the interactions are replayed in the merged global system,
/// following the transitions the partial run took, and the `j`-th global
/// state is released once every component busy after the `j`-th
/// interaction has completed.
pub fn witness_oracle(sys: &CompositeSystem, trace: &Trace) -> Result<Vec<WitnessItem>, WitnessError> {
    let global = from_partial(sys);
    let base = strip_transform(sys);

    let mut g = project_uninstrumented(sys, &trace.initial);
    if g != global.initial_state() {
        return Err(WitnessError::Mismatch("initial state differs".into()));
    }
    let mut out = vec![WitnessItem::State(g.clone())];
    let mut prev = trace.initial.clone();
    for (s, (label, q)) in trace.steps.iter().enumerate() {
        let Label::Interaction(a) = label else {
            prev = q.clone();
            continue;
        };
        let k = global
            .interaction_index(a)
            .ok_or_else(|| WitnessError::Mismatch(format!("unknown interaction `{a}`")))?;
        let mut ranks: Vec<(usize, usize)> = Vec::new();
        for (ci, port) in base.participants(&base.interactions[k]) {
            let c = &base.components[ci];
            let r = visible_rank(c, &prev.0[ci].loc, port, &q.0[ci].loc).ok_or_else(|| {
                WitnessError::Mismatch(format!("{} moved {} -{port}-> {}", c.id, prev.0[ci].loc, q.0[ci].loc))
            })?;
            if !enabled_transitions(&global.components[ci], &g.0[ci], port)?.contains(&r) {
                return Err(WitnessError::Mismatch(format!(
                    "`{a}` is not enabled in the global run"
                )));
            }
            ranks.push((ci, r));
        }
        g = fire_guided(&global, &g, k, |ci, _| {
            ranks
                .iter()
                .find(|(c, _)| *c == ci)
                .map(|(_, r)| *r)
                .expect("participant")
        })?;
        out.push(WitnessItem::Label(a.clone()));
        let released =
            (0..q.arity()).all(|i| !q.0[i].busy || trace.steps[s + 1..].iter().any(|(l, _)| *l == Label::Beta(i)));
        if !released {
            return Ok(out);
        }
        out.push(WitnessItem::State(g.clone()));
        prev = q.clone();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_task;
    use crate::semantics::{replay, run_partial_concurrent, to_partial, EngineConfig};

    fn table_trace() -> Trace {
        let p = to_partial(&builtin_task());
        let ls: Vec<Label> = ["ex12", "β4", "nt", "β2", "β1"]
            .iter()
            .map(|s| Label::parse(s))
            .collect();
        replay(&p, &ls).unwrap()
    }

    fn shorts(acc: &AccSeq) -> Vec<String> {
        acc.entries.iter().map(|(_, q)| q.short()).collect()
    }

    #[test]
    fn table_walkthrough() {
        let t = table_trace();
        let mut acc = acc_init(&t.initial);
        let expect: [&[&str]; 5] = [
            &["(⊥, ⊥, free, ⊥)"],
            &["(⊥, ⊥, free, delivered)"],
            &["(⊥, ⊥, free, delivered)", "(⊥, ⊥, free, ⊥)"],
            &["(⊥, done, free, delivered)", "(⊥, done, free, ⊥)"],
            &["(done, done, free, delivered)", "(done, done, free, ⊥)"],
        ];
        for ((l, q), e) in t.steps.iter().zip(expect) {
            acc.step(l, q);
            assert_eq!(shorts(&acc), e);
        }
        assert_eq!(
            show_witness(&acc.discriminant()),
            "(free, free, free, ready)·ex12·(done, done, free, delivered)·nt"
        );
    }

    #[test]
    fn stream_increments() {
        let t = table_trace();
        let (mut s, first) = RgtStream::start(&t.initial);
        assert_eq!(show_witness(&first), "(free, free, free, ready)");
        let got: Vec<String> = t.steps.iter().map(|(l, q)| show_witness(&s.step(l, q))).collect();
        assert_eq!(got, ["ex12", "", "", "", "(done, done, free, delivered)·nt"]);
    }

    #[test]
    fn upd_roles() {
        let t = table_trace();
        let busy = &t.steps[0].1;
        let done = &t.steps[4].1;
        assert_eq!(upd(done, busy).short(), "(done, done, free, ⊥)");
        assert_eq!(upd(busy, done), *done);
    }

    #[test]
    fn oracle_matches_on_random_runs() {
        let p = to_partial(&builtin_task());
        for seed in 0..30 {
            let cfg = EngineConfig {
                drain: seed % 2 == 0,
                ..EngineConfig::seeded(seed, 25)
            };
            let out = run_partial_concurrent(&p, &cfg).unwrap();
            let t = &out.trace;
            for k in 0..=t.steps.len() {
                let pre = t.prefix(k);
                assert_eq!(
                    witness(&pre),
                    witness_oracle(&p, &pre).unwrap(),
                    "seed {seed} prefix {k}"
                );
            }
        }
    }

    #[test]
    fn oracle_rejects_foreign_trace() {
        let p = to_partial(&builtin_task());
        let mut t = table_trace();
        t.steps[0].0 = Label::interaction("f1");
        assert!(witness_oracle(&p, &t).is_err());
    }
}
