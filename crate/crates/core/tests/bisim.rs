mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use cbs_rv::bisim::{explore, weak_bisimilar, weak_trace_executable, BisimError, CounterexampleKind, ExplicitLts};
use cbs_rv::gen::{random_system, GenConfig};
use cbs_rv::model::{builtin_readers_writers, builtin_task, parse_model};
use cbs_rv::semantics::{project_uninstrumented, to_partial};

use common::*;

const BOUND: usize = 2_000_000;

fn lts(n: u32, edges: &[(u32, u8, u32)]) -> ExplicitLts {
    let names = ["a", "b", "t"];
    let e: Vec<(u32, &str, u32)> = edges
        .iter()
        .map(|&(s, l, t)| (s % n, names[l as usize % 3], t % n))
        .collect();
    let mut l = ExplicitLts::from_edges(n, 0, &e);
    l.hide(|x| x == "t");
    l
}

fn edges() -> impl Strategy<Value = (u32, Vec<(u32, u8, u32)>)> {
    (1u32..6).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0u8..3, 0..n), 0..10)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn symmetric_and_sound((n1, e1) in edges(), (n2, e2) in edges()) {
        let (l1, l2) = (lts(n1, &e1), lts(n2, &e2));
        let ab = weak_bisimilar(&l1, &l2);
        let ba = weak_bisimilar(&l2, &l1);
        prop_assert_eq!(ab.equivalent, ba.equivalent);
        prop_assert!(weak_bisimilar(&l1, &l1).equivalent);
        if ab.equivalent {
            prop_assert!(ab.related(l1.initial, l2.initial));
            prop_assert!(ab.counterexample.is_none());
        } else {
            let c = ab.counterexample.expect("a counterexample");
            match c.kind {
                CounterexampleKind::OnlyLeft => {
                    prop_assert!(weak_trace_executable(&l1, &c.trace));
                    prop_assert!(!weak_trace_executable(&l2, &c.trace));
                }
                CounterexampleKind::OnlyRight => {
                    prop_assert!(!weak_trace_executable(&l1, &c.trace));
                    prop_assert!(weak_trace_executable(&l2, &c.trace));
                }
                CounterexampleKind::Branching => {
                    prop_assert_eq!(weak_trace_executable(&l1, &c.trace), weak_trace_executable(&l2, &c.trace));
                }
            }
        }
    }
}

/// States reachable by τ* (`label` None) or τ*·label·τ*.
fn weak_succ(l: &ExplicitLts, s: u32, label: Option<&str>) -> BTreeSet<u32> {
    let tau_closure = |from: &BTreeSet<u32>| {
        let mut seen = from.clone();
        let mut stack: Vec<u32> = from.iter().copied().collect();
        while let Some(x) = stack.pop() {
            for (a, y) in l.out(x) {
                if l.is_hidden(a) && seen.insert(y) {
                    stack.push(y);
                }
            }
        }
        seen
    };
    let pre = tau_closure(&BTreeSet::from([s]));
    let Some(label) = label else { return pre };
    let mid: BTreeSet<u32> = pre
        .iter()
        .flat_map(|&x| {
            l.out(x)
                .filter(|(a, _)| *a == label)
                .map(|(_, y)| y)
                .collect::<Vec<_>>()
        })
        .collect();
    tau_closure(&mid)
}

fn matched(l1: &ExplicitLts, l2: &ExplicitLts, rel: &dyn Fn(u32, u32) -> bool, s: u32, t: u32) -> bool {
    l1.out(s).all(|(a, s2)| {
        let label = (!l1.is_hidden(a)).then_some(a);
        weak_succ(l2, t, label).iter().any(|&t2| rel(s2, t2))
    })
}

#[test]
fn relation_is_a_weak_bisimulation() {
    for k in [3, 8, 21] {
        let g = random_system(k, &GenConfig::default());
        let b = explore(&g, BOUND).unwrap();
        let mut p = explore(&to_partial(&g), BOUND).unwrap();
        p.hide_betas();
        let r = weak_bisimilar(&b, &p);
        assert!(r.equivalent);
        let pairs = r.pairs();
        assert!(pairs.contains(&(b.initial, p.initial)));
        let fwd = |s, t| r.related(s, t);
        let bwd = |t, s| r.related(s, t);
        for &(s, t) in &pairs {
            assert!(
                matched(&b, &p, &fwd, s, t),
                "system {k}: ({s}, {t}) left move unmatched"
            );
            assert!(
                matched(&p, &b, &bwd, t, s),
                "system {k}: ({s}, {t}) right move unmatched"
            );
        }
    }
}

#[test]
fn generated_systems_keep_their_equivalences() {
    for k in 0..25 {
        let g = random_system(k, &GenConfig::default());
        let p = to_partial(&g);
        let b = explore(&g, BOUND).unwrap();
        let mut bp = explore(&p, BOUND).unwrap();
        bp.hide_betas();
        let first = weak_bisimilar(&b, &bp);
        assert!(first.equivalent, "system {k}: B vs B⊥ {:?}", first.counterexample);
        assert_eq!(weak_bisimilar(&bp, &b).equivalent, first.equivalent);

        let r = transformed(&p);
        let bp = explore(&p, BOUND).unwrap();
        let mut br = explore(&r, BOUND).unwrap();
        br.hide_deliveries();
        let second = weak_bisimilar(&bp, &br);
        assert!(second.equivalent, "system {k}: B⊥ vs B^r {:?}", second.counterexample);
        for s in 0..br.num_states() as u32 {
            let q = project_uninstrumented(&r, &br.state(s).unwrap());
            let t = bp.find(&q, None).expect("projection is a split state");
            assert!(second.related(t, s), "system {k}: pair ({t}, {s})");
        }
    }
}

#[test]
fn readers_writers_relation_contains_projections() {
    let p = to_partial(&builtin_readers_writers());
    let r = transformed(&p);
    let bp = explore(&p, BOUND).unwrap();
    let mut br = explore(&r, BOUND).unwrap();
    br.hide_deliveries();
    let res = weak_bisimilar(&bp, &br);
    assert!(res.equivalent);
    for s in 0..br.num_states() as u32 {
        let q = project_uninstrumented(&r, &br.state(s).unwrap());
        assert!(res.related(bp.find(&q, None).unwrap(), s));
    }
}

#[test]
fn dropped_deliveries_are_observable() {
    let p = to_partial(&builtin_readers_writers());
    let bp = explore(&p, BOUND).unwrap();
    let text = cbs_rv::model::render(&transformed(&p));
    for a in ["write", "read1", "release2"] {
        let line = format!("interaction \"{a}^m\"");
        let mutated: String = text
            .lines()
            .filter(|l| !l.starts_with(&line))
            .map(|l| format!("{l}\n"))
            .collect();
        let m = parse_model(&mutated).unwrap();
        let mut bm = explore(&m, BOUND).unwrap();
        bm.hide_deliveries();
        let res = weak_bisimilar(&bp, &bm);
        assert!(!res.equivalent, "dropping {a}");
        let c = res.counterexample.unwrap();
        assert_eq!(c.kind, CounterexampleKind::OnlyLeft, "{c}");
        assert!(weak_trace_executable(&bp, &c.trace));
        assert!(!weak_trace_executable(&bm, &c.trace));
    }
}

#[test]
fn explore_examples() {
    match explore(&builtin_task(), 1) {
        Err(BisimError::BoundExceeded { bound, frontier }) => {
            assert_eq!(bound, 1);
            assert!(frontier > 0);
        }
        other => panic!("expected BoundExceeded, got {:?}", other.map(|l| l.num_states())),
    }
    let lone = parse_model("system S;\ncomponent A { vars v = 0; ports p; locations l; initial l; }\n").unwrap();
    let l = explore(&lone, 10).unwrap();
    assert_eq!((l.num_states(), l.num_transitions()), (1, 0));
    // Values are part of state identity: x counts to 11 on every worker.
    let b = explore(&builtin_task(), BOUND).unwrap();
    assert_eq!(b.num_states(), 21_296);
}
