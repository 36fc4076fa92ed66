//! Components, interactions, composite systems and their states.

mod json;
mod parse;
mod render;
mod validate;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::expr::{Assignment, Expr, Type, Value};
use crate::monitor::MonitorSpec;
use crate::transform::RgtVariant;

pub(crate) use json::expr_str as json_expr;
pub(crate) use json::value_repr;
pub use json::{from_json, to_json};
pub use parse::{parse_model, ModelError};
pub use render::render;
pub use validate::{validate, Diagnostic};

/// Port fired by the internal completion half of a split transition.
pub const BETA_PORT: &str = "beta";
/// Variable recording the current location of an instrumented component.
pub const LOC_VAR: &str = "loc";
/// Reserved component name of the reconstruction component.
pub const RGT_NAME: &str = "RGT";
/// Reserved component name of an attached monitor.
pub const MONITOR_NAME: &str = "Monitor";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub id: String,
    #[serde(default)]
    pub vars: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub name: String,
    #[serde(default)]
    pub busy: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: String,
    pub port: String,
    #[serde(with = "json::expr_str")]
    pub guard: Expr,
    #[serde(with = "json::assignments_str", default)]
    pub step: Vec<Assignment>,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    #[serde(with = "json::value_repr")]
    pub init: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicComponent {
    pub id: String,
    #[serde(default)]
    pub instrumented: bool,
    #[serde(default)]
    pub vars: Vec<Variable>,
    #[serde(default)]
    pub ports: Vec<Port>,
    pub locations: Vec<Location>,
    pub initial: String,
    #[serde(default)]
    pub transitions: Vec<Transition>,
}

impl AtomicComponent {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn var_type(&self, name: &str) -> Option<Type> {
        self.vars.iter().find(|v| v.name == name).map(|v| v.init.ty())
    }

    pub fn port(&self, id: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.id == id)
    }

    pub fn location(&self, name: &str) -> Option<&Location> {
        self.locations.iter().find(|l| l.name == name)
    }

    pub fn is_busy_location(&self, name: &str) -> bool {
        self.location(name).is_some_and(|l| l.busy)
    }

    /// Whether the component is in split (partial-state) form.
    pub fn is_partial(&self) -> bool {
        self.port(BETA_PORT).is_some()
    }

    pub fn initial_state(&self) -> CompState {
        CompState {
            loc: Arc::from(self.initial.as_str()),
            busy: self.is_busy_location(&self.initial),
            vals: self.vars.iter().map(|v| v.init.clone()).collect(),
        }
    }

    /// Indices of transitions leaving `loc` on `port`, in declaration order.
    pub fn transitions_from<'a>(&'a self, loc: &'a str, port: &'a str) -> impl Iterator<Item = usize> + 'a {
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.from == loc && t.port == port)
            .map(|(i, _)| i)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PortRef {
    pub component: String,
    pub port: String,
}

impl PortRef {
    pub fn new(component: impl Into<String>, port: impl Into<String>) -> Self {
        PortRef {
            component: component.into(),
            port: port.into(),
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.component, self.port)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub id: String,
    pub ports: Vec<PortRef>,
    /// Data transfer over qualified port variables (`Comp.var`).
    #[serde(with = "json::assignments_str", default)]
    pub transfer: Vec<Assignment>,
}

/// The reconstruction component attached by the transformation. Its
/// transitions are builtin algorithms; only the guard variant is data.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RgtDecl {
    #[serde(default)]
    pub variant: RgtVariant,
    /// Interactions whose delivery interaction is missing. Always empty for
    /// systems built by the transformation; used to model broken variants.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undelivered: Vec<String>,
}

impl RgtDecl {
    pub fn delivers(&self, interaction: &str) -> bool {
        !self.undelivered.iter().any(|a| a == interaction)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeSystem {
    pub name: String,
    pub components: Vec<AtomicComponent>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgt: Option<RgtDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor: Option<MonitorSpec>,
}

impl CompositeSystem {
    pub fn component_index(&self, id: &str) -> Option<usize> {
        self.components.iter().position(|c| c.id == id)
    }

    pub fn interaction_index(&self, id: &str) -> Option<usize> {
        self.interactions.iter().position(|a| a.id == id)
    }

    pub fn interaction(&self, id: &str) -> Option<&Interaction> {
        self.interactions.iter().find(|a| a.id == id)
    }

    pub fn is_partial(&self) -> bool {
        self.components.iter().any(|c| c.is_partial())
    }

    pub fn initial_state(&self) -> SystemState {
        SystemState(self.components.iter().map(|c| c.initial_state()).collect())
    }

    /// Component indices taking part in interaction `a`, with the port used.
    pub fn participants<'a>(&'a self, a: &'a Interaction) -> impl Iterator<Item = (usize, &'a str)> + 'a {
        a.ports
            .iter()
            .filter_map(move |p| self.component_index(&p.component).map(|i| (i, p.port.as_str())))
    }

    pub fn involves(&self, a: &Interaction, comp: usize) -> bool {
        a.ports.iter().any(|p| p.component == self.components[comp].id)
    }

    /// Variable layout per component, used by trace files.
    pub fn layout(&self) -> Vec<ComponentLayout> {
        self.components
            .iter()
            .map(|c| ComponentLayout {
                id: c.id.clone(),
                vars: c.vars.iter().map(|v| v.name.clone()).collect(),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentLayout {
    pub id: String,
    pub vars: Vec<String>,
}

/// Local state of one component: its location and the values of its
/// variables in declaration order. `busy` marks a busy (undefined) location.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CompState {
    pub loc: Arc<str>,
    pub busy: bool,
    pub vals: Vec<Value>,
}

impl CompState {
    pub fn new(loc: &str, busy: bool, vals: Vec<Value>) -> Self {
        CompState {
            loc: Arc::from(loc),
            busy,
            vals,
        }
    }

    pub fn is_defined(&self) -> bool {
        !self.busy
    }
}

/// One local state per component, indexed like `CompositeSystem::components`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemState(pub Vec<CompState>);

impl SystemState {
    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn is_global(&self) -> bool {
        self.0.iter().all(CompState::is_defined)
    }

    pub fn any_busy(&self) -> bool {
        !self.is_global()
    }

    pub fn locations(&self) -> Vec<&str> {
        self.0.iter().map(|c| &*c.loc).collect()
    }

    /// Location tuple with busy entries shown as `⊥`, e.g. `(⊥, ⊥, free, ⊥)`.
    pub fn short(&self) -> String {
        let parts: Vec<&str> = self.0.iter().map(|c| if c.busy { "⊥" } else { &*c.loc }).collect();
        format!("({})", parts.join(", "))
    }

    /// Looks up a qualified `Comp.var` (or `Comp.loc`) name.
    pub fn lookup_qualified(&self, sys_layout: &[ComponentLayout], name: &str) -> Option<Value> {
        let (comp, var) = name.split_once('.')?;
        let i = sys_layout.iter().position(|c| c.id == comp)?;
        let cs = &self.0[i];
        match sys_layout[i].vars.iter().position(|v| v == var) {
            Some(k) => Some(cs.vals[k].clone()),
            None if var == LOC_VAR => Some(Value::Sym(cs.loc.to_string())),
            None => None,
        }
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.short())
    }
}

/// The bundled Task example: three workers and a task generator.
pub fn builtin_task() -> CompositeSystem {
    parse_model(crate::assets::TASK_MODEL).expect("bundled task model is valid")
}

/// The bundled readers/writer example with a round synchronizer.
pub fn builtin_readers_writers() -> CompositeSystem {
    parse_model(crate::assets::READERS_WRITERS_MODEL).expect("bundled readers/writers model is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_shape() {
        let sys = builtin_task();
        let ids: Vec<_> = sys.components.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["Worker1", "Worker2", "Worker3", "Generator"]);
        assert_eq!(sys.interactions.len(), 10);
        let mut names: Vec<_> = sys.interactions.iter().map(|a| a.id.as_str()).collect();
        names.sort();
        assert_eq!(
            names,
            ["ex12", "ex13", "ex23", "f1", "f2", "f3", "nt", "r1", "r2", "r3"]
        );
        for w in &sys.components[..3] {
            assert_eq!(w.transitions.len(), 3);
        }
        let init = sys.initial_state();
        assert_eq!(init.locations(), ["free", "free", "free", "ready"]);
        for w in &init.0[..3] {
            assert_eq!(w.vals, vec![Value::Int(0)]);
        }
        assert!(validate(&sys).is_empty());
    }

    #[test]
    fn readers_writers_is_valid() {
        let sys = builtin_readers_writers();
        assert!(validate(&sys).is_empty(), "{:?}", validate(&sys));
    }

    #[test]
    fn qualified_lookup() {
        let sys = builtin_task();
        let q = sys.initial_state();
        let layout = sys.layout();
        assert_eq!(q.lookup_qualified(&layout, "Worker2.x"), Some(Value::Int(0)));
        assert_eq!(
            q.lookup_qualified(&layout, "Generator.loc"),
            Some(Value::Sym("ready".into()))
        );
        assert_eq!(q.lookup_qualified(&layout, "Generator.x"), None);
    }
}
