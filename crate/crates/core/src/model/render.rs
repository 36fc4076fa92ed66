use std::fmt::Write;

use super::parse::{beta_interaction_name, delivery_interaction_name, rgt_beta_port, rgt_new_port, rgt_out_port};
use super::{AtomicComponent, CompositeSystem, Interaction, BETA_PORT, MONITOR_NAME, RGT_NAME};
use crate::syntax::{quote_name, render_assignments};

/// Renders `sys` in the model text format; `parse_model` reads it back.
pub fn render(sys: &CompositeSystem) -> String {
    let mut out = String::new();
    writeln!(out, "system {};", quote_name(&sys.name)).unwrap();
    for c in &sys.components {
        out.push('\n');
        component(&mut out, c);
    }
    if !sys.interactions.is_empty() {
        out.push('\n');
    }
    for a in &sys.interactions {
        let mut ports: Vec<String> = a.ports.iter().map(|p| p.to_string()).collect();
        if sys.rgt.is_some() {
            ports.push(format!("{RGT_NAME}.{}", rgt_new_port(&a.id)));
        }
        interaction(&mut out, &a.id, &ports, a);
    }
    if let Some(rgt) = &sys.rgt {
        out.push('\n');
        writeln!(
            out,
            "// Builtin reconstruction component. Its transitions are the algorithms"
        )
        .unwrap();
        writeln!(out, "//   {RGT_NAME}.p_<a>      new(a)   guarded by the variant").unwrap();
        writeln!(out, "//   {RGT_NAME}.beta_<i>   upd(i)   guarded by the variant").unwrap();
        writeln!(out, "//   {RGT_NAME}.out_<a>    get()    guarded by gs_<a>").unwrap();
        writeln!(
            out,
            "rgt {RGT_NAME} {{ variant: {}; }}",
            quote_name(&rgt.variant.to_string())
        )
        .unwrap();
        for (i, c) in sys.components.iter().enumerate() {
            if c.instrumented {
                let ports = [
                    format!("{}.{BETA_PORT}", quote_name(&c.id)),
                    format!("{RGT_NAME}.{}", rgt_beta_port(i)),
                ];
                writeln!(
                    out,
                    "interaction {} {{ ports: {}; }}",
                    quote_name(&beta_interaction_name(i)),
                    ports.join(", ")
                )
                .unwrap();
            }
        }
        for a in sys.interactions.iter().filter(|a| rgt.delivers(&a.id)) {
            let mut ports = vec![format!("{RGT_NAME}.{}", rgt_out_port(&a.id))];
            if sys.monitor.is_some() {
                ports.push(format!("{MONITOR_NAME}.in"));
            }
            writeln!(
                out,
                "interaction {} {{ ports: {}; }}",
                quote_name(&delivery_interaction_name(&a.id)),
                ports.join(", ")
            )
            .unwrap();
        }
    }
    if let Some(m) = &sys.monitor {
        out.push('\n');
        out.push_str(&crate::monitor::render_monitor(m));
    }
    out
}

fn interaction(out: &mut String, id: &str, ports: &[String], a: &Interaction) {
    write!(out, "interaction {} {{ ports: {};", quote_name(id), ports.join(", ")).unwrap();
    if !a.transfer.is_empty() {
        write!(out, " transfer: {};", render_assignments(&a.transfer)).unwrap();
    }
    out.push_str(" }\n");
}

fn component(out: &mut String, c: &AtomicComponent) {
    let instr = if c.instrumented { " instrumented" } else { "" };
    writeln!(out, "component {}{instr} {{", quote_name(&c.id)).unwrap();
    if !c.vars.is_empty() {
        let vars: Vec<String> = c
            .vars
            .iter()
            .map(|v| format!("{} = {}", quote_name(&v.name), v.init))
            .collect();
        writeln!(out, "  vars {};", vars.join(", ")).unwrap();
    }
    if !c.ports.is_empty() {
        let ports: Vec<String> = c
            .ports
            .iter()
            .map(|p| {
                if p.vars.is_empty() {
                    quote_name(&p.id)
                } else {
                    let vs: Vec<String> = p.vars.iter().map(|v| quote_name(v)).collect();
                    format!("{}({})", quote_name(&p.id), vs.join(", "))
                }
            })
            .collect();
        writeln!(out, "  ports {};", ports.join(", ")).unwrap();
    }
    let names = |busy: bool| -> Vec<String> {
        c.locations
            .iter()
            .filter(|l| l.busy == busy)
            .map(|l| quote_name(&l.name))
            .collect()
    };
    writeln!(out, "  locations {};", names(false).join(", ")).unwrap();
    let busy = names(true);
    if !busy.is_empty() {
        writeln!(out, "  busy {};", busy.join(", ")).unwrap();
    }
    writeln!(out, "  initial {};", quote_name(&c.initial)).unwrap();
    for t in &c.transitions {
        write!(
            out,
            "  transition {} -{}-> {}",
            quote_name(&t.from),
            quote_name(&t.port),
            quote_name(&t.to)
        )
        .unwrap();
        if !t.guard.is_true_literal() {
            write!(out, " [{}]", t.guard).unwrap();
        }
        if !t.step.is_empty() {
            write!(out, " / {}", render_assignments(&t.step)).unwrap();
        }
        out.push_str(";\n");
    }
    out.push_str("}\n");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_readers_writers, builtin_task, parse_model};

    #[test]
    fn bundled_models_round_trip() {
        for sys in [builtin_task(), builtin_readers_writers()] {
            let text = render(&sys);
            assert_eq!(parse_model(&text).unwrap(), sys, "{text}");
        }
    }
}
