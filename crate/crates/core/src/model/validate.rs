use std::collections::HashSet;
use std::fmt;

use super::{CompositeSystem, BETA_PORT, LOC_VAR, MONITOR_NAME, RGT_NAME};
use crate::expr::{type_of, ExprError, Type};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    DuplicateComponent(String),
    ReservedName(String),
    DuplicateName { scope: String, name: String },
    UnknownLocation { scope: String, location: String },
    UnknownPort { scope: String, port: String },
    UnknownComponent { scope: String, component: String },
    UnboundVariable { scope: String, var: String },
    TypeError { scope: String, msg: String },
    InitialBusy(String),
    SeveralPortsOfOneComponent { interaction: String, component: String },
    EmptyInteraction(String),
    MalformedBusyLocation { component: String, location: String },
    BadInstrumentation(String),
    RewiringMismatch(String),
    IncompatibleSupport(String),
    MonitorWithoutRgt,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Diagnostic::*;
        match self {
            DuplicateComponent(c) => write!(f, "duplicate component `{c}`"),
            ReservedName(n) => write!(f, "`{n}` is a reserved name"),
            DuplicateName { scope, name } => write!(f, "{scope}: duplicate declaration `{name}`"),
            UnknownLocation { scope, location } => write!(f, "{scope}: unknown location `{location}`"),
            UnknownPort { scope, port } => write!(f, "{scope}: unknown port `{port}`"),
            UnknownComponent { scope, component } => {
                write!(f, "{scope}: unknown component `{component}`")
            }
            UnboundVariable { scope, var } => write!(f, "{scope}: unbound variable `{var}`"),
            TypeError { scope, msg } => write!(f, "{scope}: {msg}"),
            InitialBusy(c) => write!(f, "component `{c}`: initial location is busy or undeclared"),
            SeveralPortsOfOneComponent { interaction, component } => write!(
                f,
                "interaction `{interaction}` uses more than one port of component `{component}`"
            ),
            EmptyInteraction(a) => write!(f, "interaction `{a}` has no ports"),
            MalformedBusyLocation { component, location } => write!(
                f,
                "component `{component}`: busy location `{location}` must have exactly one outgoing \
                 `{BETA_PORT}` transition with guard true, and only busy locations may fire `{BETA_PORT}`"
            ),
            BadInstrumentation(m) => write!(f, "instrumentation: {m}"),
            RewiringMismatch(m) => write!(f, "rewiring: {m}"),
            IncompatibleSupport(m) => write!(f, "monitor: {m}"),
            MonitorWithoutRgt => write!(f, "a monitor can only be attached to a transformed system"),
        }
    }
}

fn expr_diag(scope: &str, e: ExprError) -> Diagnostic {
    match e {
        ExprError::UnboundVariable(var) => Diagnostic::UnboundVariable {
            scope: scope.to_string(),
            var,
        },
        other => Diagnostic::TypeError {
            scope: scope.to_string(),
            msg: other.to_string(),
        },
    }
}

fn dupes<'a>(scope: &str, names: impl Iterator<Item = &'a str>, out: &mut Vec<Diagnostic>) {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            out.push(Diagnostic::DuplicateName {
                scope: scope.to_string(),
                name: n.to_string(),
            });
        }
    }
}

/// Every violated well-formedness constraint; empty iff the system is valid.
pub fn validate(sys: &CompositeSystem) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for c in &sys.components {
        if !seen.insert(c.id.as_str()) {
            out.push(Diagnostic::DuplicateComponent(c.id.clone()));
        }
        if c.id == RGT_NAME || c.id == MONITOR_NAME || c.id.contains('.') {
            out.push(Diagnostic::ReservedName(c.id.clone()));
        }
    }

    for c in &sys.components {
        let scope = format!("component `{}`", c.id);
        dupes(&scope, c.vars.iter().map(|v| v.name.as_str()), &mut out);
        dupes(&scope, c.ports.iter().map(|p| p.id.as_str()), &mut out);
        dupes(&scope, c.locations.iter().map(|l| l.name.as_str()), &mut out);
        if c.var_index(LOC_VAR).is_some() != c.instrumented {
            out.push(Diagnostic::BadInstrumentation(format!(
                "{scope}: `{LOC_VAR}` must be declared exactly when the component is instrumented"
            )));
        }
        if c.instrumented {
            if c.var_type(LOC_VAR) != Some(Type::Sym) {
                out.push(Diagnostic::BadInstrumentation(format!(
                    "{scope}: `{LOC_VAR}` must hold a location"
                )));
            }
            let exported: Vec<&str> = c.vars.iter().map(|v| v.name.as_str()).collect();
            let beta: Option<Vec<&str>> = c.port(BETA_PORT).map(|p| p.vars.iter().map(String::as_str).collect());
            if beta.as_deref() != Some(&exported[..]) {
                out.push(Diagnostic::BadInstrumentation(format!(
                    "{scope}: port `{BETA_PORT}` must export every variable"
                )));
            }
        }
        for p in &c.ports {
            for v in &p.vars {
                if c.var_index(v).is_none() {
                    out.push(Diagnostic::UnboundVariable {
                        scope: format!("{scope}, port `{}`", p.id),
                        var: v.clone(),
                    });
                }
            }
        }
        if c.location(&c.initial).is_none_or(|l| l.busy) {
            out.push(Diagnostic::InitialBusy(c.id.clone()));
        }
        let types = |n: &str| c.var_type(n);
        for t in &c.transitions {
            let tscope = format!("{scope}, transition {} -{}-> {}", t.from, t.port, t.to);
            for l in [&t.from, &t.to] {
                if c.location(l).is_none() {
                    out.push(Diagnostic::UnknownLocation {
                        scope: tscope.clone(),
                        location: l.clone(),
                    });
                }
            }
            if c.port(&t.port).is_none() {
                out.push(Diagnostic::UnknownPort {
                    scope: tscope.clone(),
                    port: t.port.clone(),
                });
            }
            match type_of(&t.guard, &types) {
                Ok(Type::Bool) => {}
                Ok(other) => out.push(Diagnostic::TypeError {
                    scope: tscope.clone(),
                    msg: format!("guard has type {other}, expected bool"),
                }),
                Err(e) => out.push(expr_diag(&tscope, e)),
            }
            for a in &t.step {
                match (c.var_type(&a.target), type_of(&a.source, &types)) {
                    (None, _) => out.push(Diagnostic::UnboundVariable {
                        scope: tscope.clone(),
                        var: a.target.clone(),
                    }),
                    (_, Err(e)) => out.push(expr_diag(&tscope, e)),
                    (Some(want), Ok(got)) if want != got => out.push(Diagnostic::TypeError {
                        scope: tscope.clone(),
                        msg: format!("cannot assign {got} to `{}` of type {want}", a.target),
                    }),
                    _ => {}
                }
            }
        }
        // Split-form discipline: busy locations complete through exactly one
        // unguarded beta transition; ready locations never fire beta.
        for l in &c.locations {
            let outgoing: Vec<_> = c.transitions.iter().filter(|t| t.from == l.name).collect();
            let ok = if l.busy {
                outgoing.len() == 1 && outgoing[0].port == BETA_PORT && outgoing[0].guard.is_true_literal()
            } else {
                outgoing.iter().all(|t| t.port != BETA_PORT)
            };
            if !ok {
                out.push(Diagnostic::MalformedBusyLocation {
                    component: c.id.clone(),
                    location: l.name.clone(),
                });
            }
        }
    }

    dupes("system", sys.interactions.iter().map(|a| a.id.as_str()), &mut out);
    for a in &sys.interactions {
        let scope = format!("interaction `{}`", a.id);
        if a.id.starts_with('β') || a.id.ends_with("^m") || a.id.contains('^') {
            out.push(Diagnostic::ReservedName(a.id.clone()));
        }
        if a.ports.is_empty() {
            out.push(Diagnostic::EmptyInteraction(a.id.clone()));
        }
        let mut comps = HashSet::new();
        let mut attached: Vec<(String, Type)> = Vec::new();
        for pr in &a.ports {
            if !comps.insert(pr.component.as_str()) {
                out.push(Diagnostic::SeveralPortsOfOneComponent {
                    interaction: a.id.clone(),
                    component: pr.component.clone(),
                });
            }
            match sys.components.iter().find(|c| c.id == pr.component) {
                None => out.push(Diagnostic::UnknownComponent {
                    scope: scope.clone(),
                    component: pr.component.clone(),
                }),
                Some(c) => match c.port(&pr.port) {
                    Some(p) if p.id != BETA_PORT => {
                        for v in &p.vars {
                            if let Some(t) = c.var_type(v) {
                                attached.push((format!("{}.{}", c.id, v), t));
                            }
                        }
                    }
                    _ => out.push(Diagnostic::UnknownPort {
                        scope: scope.clone(),
                        port: pr.to_string(),
                    }),
                },
            }
        }
        let types = |n: &str| attached.iter().find(|(k, _)| k == n).map(|(_, t)| *t);
        for asg in &a.transfer {
            match (types(&asg.target), type_of(&asg.source, &types)) {
                (None, _) => out.push(Diagnostic::UnboundVariable {
                    scope: scope.clone(),
                    var: asg.target.clone(),
                }),
                (_, Err(e)) => out.push(expr_diag(&scope, e)),
                (Some(want), Ok(got)) if want != got => out.push(Diagnostic::TypeError {
                    scope: scope.clone(),
                    msg: format!("cannot assign {got} to `{}` of type {want}", asg.target),
                }),
                _ => {}
            }
        }
    }

    if sys.rgt.is_some() && !sys.is_partial() && !sys.components.is_empty() {
        out.push(Diagnostic::BadInstrumentation(
            "a transformed system must be in partial-state form".into(),
        ));
    }
    if sys.rgt.is_none() && sys.components.iter().any(|c| c.instrumented) {
        out.push(Diagnostic::BadInstrumentation(
            "instrumented components require the RGT component".into(),
        ));
    }
    if let Some(m) = &sys.monitor {
        if sys.rgt.is_none() {
            out.push(Diagnostic::MonitorWithoutRgt);
        }
        if let Err(e) = crate::monitor::check_support(m, sys) {
            out.push(Diagnostic::IncompatibleSupport(e.to_string()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse::parse_unvalidated;

    fn diags(text: &str) -> Vec<Diagnostic> {
        validate(&parse_unvalidated(text).unwrap())
    }

    #[test]
    fn unknown_location() {
        let d = diags("component A { ports p; locations s; initial s; transition s -p-> t; }");
        assert_eq!(
            d,
            vec![Diagnostic::UnknownLocation {
                scope: "component `A`, transition s -p-> t".into(),
                location: "t".into()
            }]
        );
    }

    #[test]
    fn unbound_guard_variable() {
        let d = diags("component A { ports p; locations s; initial s; transition s -p-> s [y > 1]; }");
        assert!(matches!(&d[..], [Diagnostic::UnboundVariable { var, .. }] if var == "y"));
    }

    #[test]
    fn transfer_must_use_attached_vars() {
        let d = diags(
            "component A { vars x = 0, h = 0; ports p(x); locations s; initial s; transition s -p-> s; }
             component B { vars y = 0; ports q(y); locations s; initial s; transition s -q-> s; }
             interaction ab { ports: A.p, B.q; transfer: [A.x := B.y; A.h := 1]; }",
        );
        assert!(matches!(&d[..], [Diagnostic::UnboundVariable { var, .. }] if var == "A.h"));
    }

    #[test]
    fn busy_discipline() {
        let d = diags(
            r#"component A { ports p, beta; locations s; busy "b"; initial s;
               transition s -p-> "b"; }"#,
        );
        assert!(matches!(&d[..], [Diagnostic::MalformedBusyLocation { .. }]));
    }

    #[test]
    fn type_errors() {
        let d =
            diags("component A { vars b = true; ports p; locations s; initial s; transition s -p-> s / [b := 1]; }");
        assert!(matches!(&d[..], [Diagnostic::TypeError { .. }]));
    }
}
