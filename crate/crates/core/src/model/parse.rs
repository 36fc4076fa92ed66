use thiserror::Error;

use super::{
    validate, AtomicComponent, CompositeSystem, Diagnostic, Interaction, Location, Port, PortRef, RgtDecl, Transition,
    Variable, BETA_PORT, MONITOR_NAME, RGT_NAME,
};
use crate::expr::{Expr, Value};
use crate::monitor;
use crate::syntax::{Parser, SyntaxError, Tok};
use crate::transform::RgtVariant;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("invalid model:\n{}", fmt_diags(.0))]
    Validation(Vec<Diagnostic>),
    #[error("invalid JSON model: {0}")]
    Json(String),
}

fn fmt_diags(d: &[Diagnostic]) -> String {
    d.iter().map(|d| format!("  - {d}")).collect::<Vec<_>>().join("\n")
}

/// Parses and validates a model document.
pub fn parse_model(text: &str) -> Result<CompositeSystem, ModelError> {
    let sys = parse_unvalidated(text)?;
    let diags = validate(&sys);
    if diags.is_empty() {
        Ok(sys)
    } else {
        Err(ModelError::Validation(diags))
    }
}

pub(crate) fn parse_unvalidated(text: &str) -> Result<CompositeSystem, ModelError> {
    let mut p = Parser::new(text)?;
    let mut sys = CompositeSystem {
        name: "system".into(),
        components: Vec::new(),
        interactions: Vec::new(),
        rgt: None,
        monitor: None,
    };
    let mut raw_interactions = Vec::new();
    while !p.at_eof() {
        if p.eat_keyword("system") {
            sys.name = p.name()?;
            p.expect_punct(";")?;
        } else if p.eat_keyword("component") {
            sys.components.push(component(&mut p)?);
        } else if p.eat_keyword("interaction") {
            raw_interactions.push(interaction(&mut p)?);
        } else if p.eat_keyword("rgt") {
            let name = p.name()?;
            if name != RGT_NAME {
                return Err(p
                    .error(format!("the reconstruction component must be named `{RGT_NAME}`"))
                    .into());
            }
            p.expect_punct("{")?;
            let mut variant = RgtVariant::Default;
            while !p.eat_punct("}") {
                p.expect_keyword("variant")?;
                p.expect_punct(":")?;
                let v = p.name()?;
                variant = v.parse().map_err(|_| p.error(format!("unknown RGT variant `{v}`")))?;
                p.expect_punct(";")?;
            }
            sys.rgt = Some(RgtDecl {
                variant,
                undelivered: Vec::new(),
            });
        } else if p.is_keyword("monitor") {
            sys.monitor = Some(monitor::parse_monitor_block(&mut p)?);
        } else {
            return Err(p
                .unexpected("`component`, `interaction`, `rgt`, `monitor` or `system`")
                .into());
        }
    }
    if sys.rgt.is_some() {
        let (gamma, undelivered) = strip_rewiring(&sys, raw_interactions)?;
        sys.interactions = gamma;
        if let Some(rgt) = &mut sys.rgt {
            rgt.undelivered = undelivered;
        }
    } else {
        sys.interactions = raw_interactions;
    }
    Ok(sys)
}

fn component(p: &mut Parser) -> Result<AtomicComponent, SyntaxError> {
    let id = p.name()?;
    let instrumented = p.eat_keyword("instrumented");
    p.expect_punct("{")?;
    let mut c = AtomicComponent {
        id,
        instrumented,
        vars: Vec::new(),
        ports: Vec::new(),
        locations: Vec::new(),
        initial: String::new(),
        transitions: Vec::new(),
    };
    while !p.eat_punct("}") {
        if p.eat_keyword("vars") {
            if !p.is_punct(";") {
                loop {
                    let name = p.name()?;
                    p.expect_punct("=")?;
                    let init = literal(p)?;
                    c.vars.push(Variable { name, init });
                    if !p.eat_punct(",") {
                        break;
                    }
                }
            }
            p.expect_punct(";")?;
        } else if p.eat_keyword("ports") {
            if !p.is_punct(";") {
                loop {
                    let id = p.name()?;
                    let mut vars = Vec::new();
                    if p.eat_punct("(") {
                        if !p.is_punct(")") {
                            loop {
                                vars.push(p.name()?);
                                if !p.eat_punct(",") {
                                    break;
                                }
                            }
                        }
                        p.expect_punct(")")?;
                    }
                    c.ports.push(Port { id, vars });
                    if !p.eat_punct(",") {
                        break;
                    }
                }
            }
            p.expect_punct(";")?;
        } else if p.eat_keyword("locations") {
            for name in p.name_list()? {
                c.locations.push(Location { name, busy: false });
            }
            p.expect_punct(";")?;
        } else if p.eat_keyword("busy") {
            for name in p.name_list()? {
                c.locations.push(Location { name, busy: true });
            }
            p.expect_punct(";")?;
        } else if p.eat_keyword("initial") {
            c.initial = p.name()?;
            p.expect_punct(";")?;
        } else if p.eat_keyword("transition") {
            let from = p.name()?;
            p.expect_punct("-")?;
            let port = p.name()?;
            p.expect_punct("->")?;
            let to = p.name()?;
            let guard = if p.eat_punct("[") {
                let g = p.expr()?;
                p.expect_punct("]")?;
                g
            } else {
                Expr::tt()
            };
            let step = if p.eat_punct("/") {
                p.assignment_block()?
            } else {
                Vec::new()
            };
            p.expect_punct(";")?;
            c.transitions.push(Transition {
                from,
                port,
                guard,
                step,
                to,
            });
        } else {
            return Err(p.unexpected("`vars`, `ports`, `locations`, `busy`, `initial`, `transition` or `}`"));
        }
    }
    Ok(c)
}

fn literal(p: &mut Parser) -> Result<Value, SyntaxError> {
    let neg = p.eat_punct("-");
    match p.bump() {
        Tok::Int(n) => {
            let n = if neg { -n } else { n };
            i64::try_from(n)
                .map(Value::Int)
                .map_err(|_| p.error("integer literal out of range"))
        }
        Tok::Ident(s) if !neg && (s == "true" || s == "false") => Ok(Value::Bool(s == "true")),
        Tok::Sym(s) if !neg => Ok(Value::Sym(s)),
        _ => Err(p.error("expected an integer, boolean or #location literal")),
    }
}

fn interaction(p: &mut Parser) -> Result<Interaction, SyntaxError> {
    let id = p.name()?;
    p.expect_punct("{")?;
    let mut ports = Vec::new();
    let mut transfer = Vec::new();
    while !p.eat_punct("}") {
        if p.eat_keyword("ports") {
            p.expect_punct(":")?;
            for q in p.name_list()? {
                let (comp, port) = q
                    .rsplit_once('.')
                    .ok_or_else(|| p.error(format!("port reference `{q}` must be `component.port`")))?;
                ports.push(PortRef::new(comp, port));
            }
            p.expect_punct(";")?;
        } else if p.eat_keyword("transfer") {
            p.expect_punct(":")?;
            transfer = p.assignment_block()?;
            p.expect_punct(";")?;
        } else {
            return Err(p.unexpected("`ports`, `transfer` or `}`"));
        }
    }
    Ok(Interaction { id, ports, transfer })
}

pub(crate) fn rgt_new_port(a: &str) -> String {
    format!("p_{a}")
}

pub(crate) fn rgt_out_port(a: &str) -> String {
    format!("out_{a}")
}

pub(crate) fn rgt_beta_port(i: usize) -> String {
    format!("beta_{}", i + 1)
}

pub(crate) fn beta_interaction_name(i: usize) -> String {
    format!("β{}", i + 1)
}

pub(crate) fn delivery_interaction_name(a: &str) -> String {
    format!("{a}^m")
}

/// Removes the explicitly written RGT rewiring from a transformed model,
/// checking that it is the rewiring the transformation produces. Missing
/// delivery interactions are tolerated and reported back.
fn strip_rewiring(sys: &CompositeSystem, raw: Vec<Interaction>) -> Result<(Vec<Interaction>, Vec<String>), ModelError> {
    let mut diags = Vec::new();
    let mut gamma = Vec::new();
    let mut betas = Vec::new();
    let mut deliveries = Vec::new();
    for mut a in raw {
        let rgt_ports: Vec<PortRef> = a.ports.iter().filter(|p| p.component == RGT_NAME).cloned().collect();
        if a.id.starts_with('β') {
            betas.push(a);
        } else if a.id.ends_with("^m") {
            deliveries.push(a);
        } else {
            if rgt_ports != [PortRef::new(RGT_NAME, rgt_new_port(&a.id))] {
                diags.push(Diagnostic::RewiringMismatch(format!(
                    "interaction `{}` must carry exactly the port {RGT_NAME}.{}",
                    a.id,
                    rgt_new_port(&a.id)
                )));
            }
            a.ports.retain(|p| p.component != RGT_NAME);
            gamma.push(a);
        }
    }
    let mut expected_betas = Vec::new();
    for (i, c) in sys.components.iter().enumerate() {
        if c.instrumented {
            expected_betas.push(Interaction {
                id: beta_interaction_name(i),
                ports: vec![
                    PortRef::new(c.id.clone(), BETA_PORT),
                    PortRef::new(RGT_NAME, rgt_beta_port(i)),
                ],
                transfer: Vec::new(),
            });
        }
    }
    if betas != expected_betas {
        diags.push(Diagnostic::RewiringMismatch(
            "busy interactions must pair each instrumented component's beta port with RGT.beta_<i>".into(),
        ));
    }
    let expected_deliveries: Vec<Interaction> = gamma
        .iter()
        .map(|a| {
            let mut ports = vec![PortRef::new(RGT_NAME, rgt_out_port(&a.id))];
            if sys.monitor.is_some() {
                ports.push(PortRef::new(MONITOR_NAME, "in"));
            }
            Interaction {
                id: delivery_interaction_name(&a.id),
                ports,
                transfer: Vec::new(),
            }
        })
        .collect();
    let mut undelivered = Vec::new();
    let mut present = deliveries.iter().peekable();
    for (a, want) in gamma.iter().zip(&expected_deliveries) {
        if present.peek() == Some(&want) {
            present.next();
        } else {
            undelivered.push(a.id.clone());
        }
    }
    if present.next().is_some() {
        diags.push(Diagnostic::RewiringMismatch(
            "delivery interactions must be one `<a>^m` per interaction on RGT.out_<a>, in interaction order".into(),
        ));
    }
    if diags.is_empty() {
        Ok((gamma, undelivered))
    } else {
        Err(ModelError::Validation(diags))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
        system Tiny;
        component A {
          vars n = 0, ok = true;
          ports go(n), stop;
          locations s0, s1;
          initial s0;
          transition s0 -go-> s1 [n < 3 and ok] / [n := n + 1];
          transition s1 -stop-> s0;
        }
        component B {
          vars m = 5;
          ports go(m);
          locations t;
          initial t;
          transition t -go-> t;
        }
        interaction sync { ports: A.go, B.go; transfer: [A.n := B.m - 5]; }
        interaction halt { ports: A.stop; }
    "#;

    #[test]
    fn parses_tiny() {
        let sys = parse_model(TINY).unwrap();
        assert_eq!(sys.name, "Tiny");
        assert_eq!(sys.components.len(), 2);
        assert_eq!(sys.components[0].ports[0].vars, ["n"]);
        assert_eq!(sys.interactions[0].transfer.len(), 1);
        assert_eq!(sys.components[0].transitions[0].step.len(), 1);
    }

    #[test]
    fn empty_interaction_set_is_valid() {
        let sys = parse_model("component A { locations s; initial s; }").unwrap();
        assert!(sys.interactions.is_empty());
    }

    #[test]
    fn two_ports_of_one_component_rejected() {
        let text = TINY.replace("ports: A.stop;", "ports: A.stop, A.go;");
        match parse_model(&text) {
            Err(ModelError::Validation(d)) => {
                assert!(d
                    .iter()
                    .any(|d| matches!(d, Diagnostic::SeveralPortsOfOneComponent { .. })))
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_model("component A {\n  locations s\n}").unwrap_err();
        match err {
            ModelError::Syntax(e) => assert_eq!((e.line, e.col), (3, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_collects_all() {
        let text = "component A { vars x = 0; ports p; locations s; initial s;
            transition s -p-> nowhere [y > 0]; }";
        match parse_model(text) {
            Err(ModelError::Validation(d)) => {
                assert!(d.iter().any(|d| matches!(d, Diagnostic::UnknownLocation { .. })));
                assert!(d.iter().any(|d| matches!(d, Diagnostic::UnboundVariable { .. })));
            }
            other => panic!("{other:?}"),
        }
    }
}
