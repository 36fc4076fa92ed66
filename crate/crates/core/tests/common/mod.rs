//! Helpers shared by the integration tests.
#![allow(dead_code)]

use cbs_rv::gen::{random_system, GenConfig};
use cbs_rv::model::{builtin_task, CompositeSystem, SystemState};
use cbs_rv::monitor::builtin_task_monitor;
use cbs_rv::semantics::{run_partial_concurrent, to_partial, Delivery, EngineConfig, Label, RunOutcome, Trace};
use cbs_rv::transform::{transform_all, transform_for_monitor, RgtState, RgtVariant, Slot};
use cbs_rv::witness::{acc_init, interactions_of, witness, witness_oracle, AccSeq, RgtStream, WitnessItem};

pub fn task_partial() -> CompositeSystem {
    to_partial(&builtin_task())
}

pub fn gen_partial(k: u64) -> CompositeSystem {
    to_partial(&random_system(k, &GenConfig::default()))
}

pub fn task_monitored(variant: RgtVariant) -> CompositeSystem {
    transform_for_monitor(&task_partial(), &builtin_task_monitor(), variant).expect("task transforms")
}

pub fn transformed(sys: &CompositeSystem) -> CompositeSystem {
    transform_all(sys, RgtVariant::Default).expect("partial system transforms")
}

/// A drained seeded run of 0 to 44 interactions.
pub fn run_cfg(seed: u64) -> EngineConfig {
    EngineConfig::seeded(seed, (seed % 45) as usize)
}

pub fn run(sys: &CompositeSystem, cfg: &EngineConfig) -> RunOutcome {
    run_partial_concurrent(sys, cfg).unwrap_or_else(|e| panic!("run of {} failed: {e}", sys.name))
}

/// Concatenated output of the incremental reconstruction.
pub fn stream_output(trace: &Trace) -> Vec<WitnessItem> {
    let (mut s, mut out) = RgtStream::start(&trace.initial);
    for (l, q) in &trace.steps {
        out.extend(s.step(l, q));
    }
    out
}

fn labels_of(w: &[WitnessItem]) -> Vec<String> {
    w.iter()
        .filter_map(|i| match i {
            WitnessItem::Label(a) => Some(a.clone()),
            WitnessItem::State(_) => None,
        })
        .collect()
}

/// Stream output equals the oracle; on a drained trace it covers every
/// interaction of the run.
pub fn check_oracle(sys: &CompositeSystem, trace: &Trace, drained: bool) -> Result<(), String> {
    let got = stream_output(trace);
    let want = witness_oracle(sys, trace).map_err(|e| format!("oracle: {e}"))?;
    if got != want {
        return Err(format!("stream {} items, oracle {} items", got.len(), want.len()));
    }
    if got != witness(trace) {
        return Err("stream differs from the offline witness".into());
    }
    let inter = interactions_of(trace);
    if labels_of(&got) != inter[..labels_of(&got).len()] {
        return Err("witness labels are not a prefix of the run's interactions".into());
    }
    if drained {
        if labels_of(&got) != inter {
            return Err("drained witness misses interactions".into());
        }
        if !matches!(got.last(), Some(WitnessItem::State(q)) if q.is_global()) {
            return Err("drained witness does not end in a global state".into());
        }
    }
    Ok(())
}

/// Structural properties of the accumulated reconstruction of a trace,
/// checked after every step.
pub fn check_acc_lemmas(trace: &Trace) -> Result<(), String> {
    let mut acc = acc_init(&trace.initial);
    let mut prev = witness(&trace.prefix(0));
    for (k, (l, q)) in trace.steps.iter().enumerate() {
        acc.step(l, q);
        let pre = trace.prefix(k + 1);
        let s = interactions_of(&pre).len();
        let flat = 1 + 2 * acc.entries.len();
        if flat != 2 * s + 1 {
            return Err(format!("step {k}: |Acc| = {flat}, expected {}", 2 * s + 1));
        }
        let first_partial = acc.entries.iter().position(|(_, e)| !e.is_global());
        if let Some(p) = first_partial {
            if acc.entries[p..].iter().any(|(_, e)| e.is_global()) {
                return Err(format!("step {k}: a global entry follows a partial one"));
            }
        }
        let last = acc.entries.last().map_or(&acc.initial, |(_, e)| e);
        if last != pre.last_state() {
            return Err(format!("step {k}: last(Acc) differs from the last state"));
        }
        let labels: Vec<String> = acc.entries.iter().map(|(a, _)| a.clone()).collect();
        if labels != interactions_of(&pre) {
            return Err(format!("step {k}: interactions differ"));
        }
        let w = witness(&pre);
        if !w.starts_with(&prev) {
            return Err(format!("step {k}: the witness is not monotone"));
        }
        prev = w;
    }
    Ok(())
}

fn tuple_matches(slots: &[Slot], entry: &SystemState) -> bool {
    slots.iter().zip(&entry.0).all(|(s, e)| match s {
        Slot::Null => e.busy,
        Slot::Known(cs) => !e.busy && cs == e,
        Slot::Unmonitored => true,
    })
}

/// Replays the RGT component of a transformed run in lock step with the
/// accumulated reconstruction, delivering where the run delivered. After
/// every event the tuples equal the entries slot by slot; `new` and `upd`
/// only fire while no flag is raised; repeated `get` stabilizes.
pub fn check_lockstep(sys: &CompositeSystem, out: &RunOutcome) -> Result<(), String> {
    let mut rgt = RgtState::for_system(sys, true);
    let mut acc: AccSeq = acc_init(&out.trace.initial);
    let mut deliveries = out.deliveries.iter().peekable();
    let guarded = rgt.variant() == RgtVariant::Default;
    let deliver = |rgt: &mut RgtState, acc: &AccSeq, d: &Delivery| -> Result<(), String> {
        let (q, a) = rgt.get().map_err(|e| format!("get: {e}"))?;
        let k = rgt.m() - 1;
        if sys.interactions[a].id != d.interaction || q != d.state {
            return Err(format!("delivery {k} differs from the run's"));
        }
        if acc.entries.get(k - 1).map(|(_, e)| e) != Some(&q) {
            return Err(format!("delivery {k} is not Acc entry {k}"));
        }
        Ok(())
    };
    while let Some(d) = deliveries.next_if(|d| d.after_step == 0) {
        deliver(&mut rgt, &acc, d)?;
    }
    for (step, (l, q)) in out.trace.steps.iter().enumerate() {
        if guarded && !rgt.is_stable() {
            return Err(format!("step {step}: {l} fired with a raised flag"));
        }
        match l {
            Label::Interaction(a) => {
                let k = sys.interaction_index(a).ok_or("unknown interaction")?;
                let involved: Vec<usize> = sys.participants(&sys.interactions[k]).map(|(c, _)| c).collect();
                rgt.new_interaction(k, &involved).map_err(|e| format!("new: {e}"))?;
            }
            Label::Beta(i) => {
                if rgt.is_monitored(*i) {
                    rgt.upd(*i, &q.0[*i]).map_err(|e| format!("upd: {e}"))?;
                }
            }
        }
        acc.step(l, q);
        while let Some(d) = deliveries.next_if(|d| d.after_step == step + 1) {
            deliver(&mut rgt, &acc, d)?;
        }
        if rgt.len() != acc.entries.len() {
            return Err(format!(
                "step {step}: {} tuples, {} entries",
                rgt.len(),
                acc.entries.len()
            ));
        }
        for (k, t) in rgt.tuples() {
            let (a, e) = &acc.entries[k - 1];
            if sys.interactions[t.interaction].id != *a || !tuple_matches(&t.slots, e) {
                return Err(format!("step {step}: tuple {k} differs from its entry"));
            }
        }
        let mut probe = rgt.clone();
        let pending = probe.pending().count();
        let mut gets = 0;
        while probe.get().is_ok() {
            gets += 1;
        }
        if gets > pending || !probe.is_stable() {
            return Err(format!("step {step}: repeated get does not stabilize"));
        }
    }
    if let Some(fin) = &out.rgt {
        if fin.m() != rgt.m() {
            return Err("final cursor differs from the engine's".into());
        }
    }
    Ok(())
}
