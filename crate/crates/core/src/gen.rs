//! Random small systems for differential testing.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write;

use crate::model::{parse_model, CompositeSystem};

/// Size limits of generated systems.
#[derive(Clone, Copy, Debug)]
pub struct GenConfig {
    pub max_components: usize,
    pub max_interactions: usize,
    pub max_ports: usize,
    pub max_locations: usize,
    /// Variables stay within `0..=bound`.
    pub bound: i64,
    /// Probability that a multiparty interaction copies a value.
    pub transfer_prob: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_components: 4,
            max_interactions: 6,
            max_ports: 3,
            max_locations: 3,
            bound: 3,
            transfer_prob: 0.3,
        }
    }
}

/// Model text of a random global system. Every component has one counter
/// `v`, exported on each port; steps either leave it alone or count up to
/// the bound and wrap, so the state space is finite.
pub fn random_model_text(seed: u64, cfg: &GenConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = cfg.bound;
    let n = rng.gen_range(1..=cfg.max_components.max(1));
    let mut ports = Vec::with_capacity(n);
    let mut out = format!("system Gen{seed};\n");
    for c in 0..n {
        let np = rng.gen_range(1..=cfg.max_ports.max(1));
        let nl = rng.gen_range(1..=cfg.max_locations.max(1));
        let plist: Vec<String> = (0..np).map(|p| format!("p{p}(v)")).collect();
        let llist: Vec<String> = (0..nl).map(|l| format!("l{l}")).collect();
        let _ = writeln!(out, "\ncomponent C{c} {{");
        let _ = writeln!(out, "  vars v = 0;");
        let _ = writeln!(out, "  ports {};", plist.join(", "));
        let _ = writeln!(out, "  locations {};", llist.join(", "));
        let _ = writeln!(out, "  initial l0;");
        for l in 0..nl {
            // At least one outgoing port per location.
            let forced = rng.gen_range(0..np);
            for p in 0..np {
                if p != forced && !rng.gen_bool(0.5) {
                    continue;
                }
                let to = rng.gen_range(0..nl);
                match rng.gen_range(0..3) {
                    0 => {
                        let _ = writeln!(out, "  transition l{l} -p{p}-> l{to};");
                    }
                    1 => {
                        let _ = writeln!(out, "  transition l{l} -p{p}-> l{to} [v < {k}] / [v := v + 1];");
                        let _ = writeln!(out, "  transition l{l} -p{p}-> l0 [v >= {k}] / [v := 0];");
                    }
                    _ => {
                        let _ = writeln!(out, "  transition l{l} -p{p}-> l{to} [v < {k}];");
                        let _ = writeln!(out, "  transition l{l} -p{p}-> l{to} [v >= {k}] / [v := 0];");
                    }
                }
            }
        }
        out.push_str("}\n");
        ports.push(np);
    }

    out.push('\n');
    let m = rng.gen_range(1..=cfg.max_interactions.max(1));
    let mut seen = Vec::new();
    let mut comps: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let size = rng.gen_range(1..=n.min(3));
        comps.shuffle(&mut rng);
        let mut parts: Vec<(usize, usize)> = comps[..size].iter().map(|&c| (c, rng.gen_range(0..ports[c]))).collect();
        parts.sort_unstable();
        if seen.contains(&parts) {
            continue;
        }
        let refs: Vec<String> = parts.iter().map(|(c, p)| format!("C{c}.p{p}")).collect();
        let _ = write!(out, "interaction a{i} {{ ports: {};", refs.join(", "));
        if size >= 2 && rng.gen_bool(cfg.transfer_prob) {
            let _ = write!(out, " transfer: [C{}.v := C{}.v];", parts[0].0, parts[1].0);
        }
        out.push_str(" }\n");
        seen.push(parts);
    }
    out
}

/// A random global system; see [`random_model_text`].
pub fn random_system(seed: u64, cfg: &GenConfig) -> CompositeSystem {
    parse_model(&random_model_text(seed, cfg)).expect("generated model is valid")
}
