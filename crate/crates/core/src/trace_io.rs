//! Trace files: a line format for humans and diffs, and a compact JSON form.
//!
//! ```text
//! COMPONENTS [{"id":"Worker1","vars":["x"]}, ...]
//! STATE [{"loc":"free","busy":false,"vars":{"x":0}}, ...]
//! LABEL ex12
//! STATE [...]
//! DELIVER ex12 [...]
//! VERDICT currently_true
//! ```
//!
//! The first `STATE` is the initial state; every `LABEL` is followed by the
//! state it reaches. `DELIVER` lines sit after the step they follow, and a
//! `VERDICT` line attaches to the preceding delivery (or to the initial
//! state when no label or delivery precedes it). Blank lines and lines
//! starting with `#` are ignored.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};
use thiserror::Error;

use crate::model::value_repr::{from_json_value, to_json_value};
use crate::model::{CompState, ComponentLayout, CompositeSystem, SystemState};
use crate::monitor::Verdict;
use crate::semantics::{Delivery, Label, RunOutcome, Trace};
use crate::witness::WitnessItem;

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("invalid JSON trace: {0}")]
    Json(String),
}

fn malformed(line: usize, msg: impl Into<String>) -> TraceIoError {
    TraceIoError::Malformed { line, msg: msg.into() }
}

/// A recorded run together with the layout needed to read its states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceFile {
    pub layout: Vec<ComponentLayout>,
    pub trace: Trace,
    pub deliveries: Vec<Delivery>,
    pub initial_verdict: Option<Verdict>,
}

impl TraceFile {
    pub fn new(layout: Vec<ComponentLayout>, trace: Trace) -> Self {
        TraceFile {
            layout,
            trace,
            deliveries: Vec::new(),
            initial_verdict: None,
        }
    }

    pub fn from_outcome(sys: &CompositeSystem, out: &RunOutcome) -> Self {
        TraceFile {
            layout: sys.layout(),
            trace: out.trace.clone(),
            deliveries: out.deliveries.clone(),
            initial_verdict: out.initial_verdict,
        }
    }
}

pub fn state_to_json(layout: &[ComponentLayout], q: &SystemState) -> Json {
    Json::Array(
        layout
            .iter()
            .zip(&q.0)
            .map(|(l, c)| {
                let vars: Map<String, Json> = l
                    .vars
                    .iter()
                    .zip(&c.vals)
                    .map(|(n, v)| (n.clone(), to_json_value(v)))
                    .collect();
                json!({"loc": &*c.loc, "busy": c.busy, "vars": vars})
            })
            .collect(),
    )
}

pub fn state_from_json(layout: &[ComponentLayout], j: &Json) -> Result<SystemState, String> {
    let arr = j.as_array().ok_or("state must be an array")?;
    if arr.len() != layout.len() {
        return Err(format!("state has {} slots, layout has {}", arr.len(), layout.len()));
    }
    let mut out = Vec::with_capacity(arr.len());
    for (l, c) in layout.iter().zip(arr) {
        let loc = c
            .get("loc")
            .and_then(Json::as_str)
            .ok_or_else(|| format!("{}: missing `loc`", l.id))?;
        let busy = c.get("busy").and_then(Json::as_bool).unwrap_or(false);
        let vars = c.get("vars").and_then(Json::as_object);
        let mut vals = Vec::with_capacity(l.vars.len());
        for n in &l.vars {
            let v = vars
                .and_then(|m| m.get(n))
                .ok_or_else(|| format!("{}: missing variable `{n}`", l.id))?;
            vals.push(from_json_value(v).ok_or_else(|| format!("{}.{n}: not a value: {v}", l.id))?);
        }
        out.push(CompState::new(loc, busy, vals));
    }
    Ok(SystemState(out))
}

/// Renders a trace file in the line format.
pub fn write_trace(f: &TraceFile) -> String {
    let mut out = String::new();
    let mut line = |kw: &str, rest: &str| {
        out.push_str(kw);
        out.push(' ');
        out.push_str(rest);
        out.push('\n');
    };
    let st = |q: &SystemState| state_to_json(&f.layout, q).to_string();
    line(
        "COMPONENTS",
        &serde_json::to_string(&f.layout).expect("layout serializes"),
    );
    line("STATE", &st(&f.trace.initial));
    if let Some(v) = f.initial_verdict {
        line("VERDICT", v.as_str());
    }
    let mut dels = f.deliveries.iter().peekable();
    for k in 0..=f.trace.steps.len() {
        if k > 0 {
            let (l, q) = &f.trace.steps[k - 1];
            line("LABEL", &l.to_string());
            line("STATE", &st(q));
        }
        while let Some(d) = dels.next_if(|d| d.after_step <= k) {
            line("DELIVER", &format!("{} {}", d.interaction, st(&d.state)));
            if let Some(v) = d.verdict {
                line("VERDICT", v.as_str());
            }
        }
    }
    out
}

/// Parses either form; JSON is recognised by a leading `{`.
pub fn read_trace(text: &str) -> Result<TraceFile, TraceIoError> {
    if text.trim_start().starts_with('{') {
        return trace_from_json(text);
    }
    let mut layout: Option<Vec<ComponentLayout>> = None;
    let mut initial: Option<SystemState> = None;
    let mut steps: Vec<(Label, SystemState)> = Vec::new();
    let mut pending_label: Option<Label> = None;
    let mut deliveries: Vec<Delivery> = Vec::new();
    let mut initial_verdict = None;
    // Whether the last record was a delivery, for attaching verdicts.
    let mut after_delivery = false;

    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (kw, rest) = l.split_once(' ').map_or((l, ""), |(a, b)| (a, b.trim()));
        let parse_state = |s: &str| -> Result<SystemState, TraceIoError> {
            let lay = layout.as_ref().ok_or_else(|| malformed(n, "state before COMPONENTS"))?;
            let j: Json = serde_json::from_str(s).map_err(|e| malformed(n, e.to_string()))?;
            state_from_json(lay, &j).map_err(|e| malformed(n, e))
        };
        match kw {
            "COMPONENTS" => {
                if layout.is_some() {
                    return Err(malformed(n, "duplicate COMPONENTS"));
                }
                layout = Some(serde_json::from_str(rest).map_err(|e| malformed(n, e.to_string()))?);
            }
            "STATE" => {
                let q = parse_state(rest)?;
                match (initial.is_none(), pending_label.take()) {
                    (true, _) => initial = Some(q),
                    (false, Some(lb)) => steps.push((lb, q)),
                    (false, None) => return Err(malformed(n, "STATE without a preceding LABEL")),
                }
                after_delivery = false;
            }
            "LABEL" => {
                if initial.is_none() || pending_label.is_some() {
                    return Err(malformed(n, "LABEL must follow a STATE"));
                }
                if rest.is_empty() {
                    return Err(malformed(n, "empty label"));
                }
                pending_label = Some(Label::parse(rest));
            }
            "DELIVER" => {
                if initial.is_none() || pending_label.is_some() {
                    return Err(malformed(n, "DELIVER must follow a STATE"));
                }
                let (a, s) = rest
                    .split_once(' ')
                    .ok_or_else(|| malformed(n, "DELIVER needs a label and a state"))?;
                deliveries.push(Delivery {
                    after_step: steps.len(),
                    interaction: a.to_string(),
                    state: parse_state(s)?,
                    verdict: None,
                });
                after_delivery = true;
            }
            "VERDICT" => {
                let v: Verdict = rest
                    .parse()
                    .map_err(|_| malformed(n, format!("unknown verdict `{rest}`")))?;
                if after_delivery {
                    let d = deliveries.last_mut().expect("delivery");
                    if d.verdict.replace(v).is_some() {
                        return Err(malformed(n, "second VERDICT for one delivery"));
                    }
                } else if initial.is_some() && steps.is_empty() && initial_verdict.is_none() {
                    initial_verdict = Some(v);
                } else {
                    return Err(malformed(n, "VERDICT must follow DELIVER or the initial STATE"));
                }
            }
            other => return Err(malformed(n, format!("unknown record `{other}`"))),
        }
    }
    if pending_label.is_some() {
        return Err(malformed(text.lines().count(), "trailing LABEL without a STATE"));
    }
    let layout = layout.ok_or_else(|| malformed(0, "missing COMPONENTS"))?;
    let initial = initial.ok_or_else(|| malformed(0, "missing initial STATE"))?;
    Ok(TraceFile {
        layout,
        trace: Trace { initial, steps },
        deliveries,
        initial_verdict,
    })
}

#[derive(Serialize, Deserialize)]
struct JsonStep {
    label: String,
    state: Json,
}

#[derive(Serialize, Deserialize)]
struct JsonDelivery {
    after_step: usize,
    interaction: String,
    state: Json,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    verdict: Option<Verdict>,
}

#[derive(Serialize, Deserialize)]
struct JsonTrace {
    components: Vec<ComponentLayout>,
    initial: Json,
    #[serde(default)]
    steps: Vec<JsonStep>,
    #[serde(default)]
    deliveries: Vec<JsonDelivery>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_verdict: Option<Verdict>,
}

/// Compact JSON form.
pub fn trace_to_json(f: &TraceFile) -> String {
    let st = |q: &SystemState| state_to_json(&f.layout, q);
    let j = JsonTrace {
        components: f.layout.clone(),
        initial: st(&f.trace.initial),
        steps: f
            .trace
            .steps
            .iter()
            .map(|(l, q)| JsonStep {
                label: l.to_string(),
                state: st(q),
            })
            .collect(),
        deliveries: f
            .deliveries
            .iter()
            .map(|d| JsonDelivery {
                after_step: d.after_step,
                interaction: d.interaction.clone(),
                state: st(&d.state),
                verdict: d.verdict,
            })
            .collect(),
        initial_verdict: f.initial_verdict,
    };
    serde_json::to_string(&j).expect("trace serializes")
}

pub fn trace_from_json(text: &str) -> Result<TraceFile, TraceIoError> {
    let j: JsonTrace = serde_json::from_str(text).map_err(|e| TraceIoError::Json(e.to_string()))?;
    let st = |v: &Json| state_from_json(&j.components, v).map_err(TraceIoError::Json);
    let steps = j
        .steps
        .iter()
        .map(|s| Ok((Label::parse(&s.label), st(&s.state)?)))
        .collect::<Result<Vec<_>, TraceIoError>>()?;
    let deliveries = j
        .deliveries
        .iter()
        .map(|d| {
            if d.after_step > steps.len() {
                return Err(TraceIoError::Json(format!(
                    "delivery after step {} of {}",
                    d.after_step,
                    steps.len()
                )));
            }
            Ok(Delivery {
                after_step: d.after_step,
                interaction: d.interaction.clone(),
                state: st(&d.state)?,
                verdict: d.verdict,
            })
        })
        .collect::<Result<Vec<_>, TraceIoError>>()?;
    Ok(TraceFile {
        trace: Trace {
            initial: st(&j.initial)?,
            steps,
        },
        layout: j.components,
        deliveries,
        initial_verdict: j.initial_verdict,
    })
}

/// Renders a witness with the same records; it may end with a `LABEL`
/// whose state is still being computed.
pub fn write_witness(layout: &[ComponentLayout], w: &[WitnessItem]) -> String {
    let mut out = format!(
        "COMPONENTS {}\n",
        serde_json::to_string(layout).expect("layout serializes")
    );
    for item in w {
        match item {
            WitnessItem::State(q) => out.push_str(&format!("STATE {}\n", state_to_json(layout, q))),
            WitnessItem::Label(a) => out.push_str(&format!("LABEL {a}\n")),
        }
    }
    out
}

/// JSON form of a witness: a layout and an alternating item list.
pub fn witness_to_json(layout: &[ComponentLayout], w: &[WitnessItem]) -> Json {
    let items: Vec<Json> = w
        .iter()
        .map(|i| match i {
            WitnessItem::State(q) => json!({"state": state_to_json(layout, q)}),
            WitnessItem::Label(a) => json!({"label": a}),
        })
        .collect();
    json!({"components": layout, "witness": items})
}
