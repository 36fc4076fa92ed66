//! Bounded state-space extraction and weak-bisimulation checking.
//!
//! Transformed systems carry an unbounded tuple store, so their RGT
//! variables are explored through [`RgtSummary`], which keeps exactly what
//! decides enabledness.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use indexmap::IndexSet;
use log::debug;
use rustc_hash::{FxBuildHasher, FxHashMap};

type FxIndexSet<T> = IndexSet<T, FxBuildHasher>;
use thiserror::Error;

use crate::expr::ExprError;
use crate::model::{CompState, CompositeSystem, SystemState};
use crate::semantics::{complete_local, enabled_transitions, fire_local, interaction_successors, Label};
use crate::transform::{RgtSummary, RgtVariant};

#[derive(Debug, Error)]
pub enum BisimError {
    #[error("state bound {bound} exceeded ({frontier} states still unexplored)")]
    BoundExceeded { bound: usize, frontier: usize },
    #[error(transparent)]
    Eval(#[from] ExprError),
    #[error("{0}")]
    Unsupported(String),
}

/// Label of a delivery through a port of `a`. Explored transformed systems
/// use a single delivery label, since deliveries are told apart only by
/// whether their port exists.
pub fn delivery_label(a: &str) -> String {
    format!("{a}^m")
}

pub fn is_delivery_label(l: &str) -> bool {
    l.ends_with("^m")
}

pub fn is_beta_label(l: &str) -> bool {
    matches!(Label::parse(l), Label::Beta(_))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LtsKind {
    Global,
    Partial,
    Transformed,
    /// Built by hand from edges.
    Plain,
}

/// A finite labelled transition system. States are interned: each is a
/// vector of per-component local-state ids, plus an RGT summary id for
/// transformed systems.
#[derive(Clone, Debug)]
pub struct ExplicitLts {
    pub kind: LtsKind,
    locals: Vec<FxIndexSet<CompState>>,
    summaries: FxIndexSet<RgtSummary>,
    states: FxIndexSet<Box<[u32]>>,
    labels: IndexSet<String>,
    pub transitions: Vec<(u32, u32, u32)>,
    pub initial: u32,
    hidden: BTreeSet<String>,
}

impl ExplicitLts {
    /// Hand-built LTS over states `0..n`.
    pub fn from_edges(n: u32, initial: u32, edges: &[(u32, &str, u32)]) -> Self {
        let mut lts = ExplicitLts {
            kind: LtsKind::Plain,
            locals: Vec::new(),
            summaries: FxIndexSet::default(),
            states: (0..n).map(|i| vec![i].into_boxed_slice()).collect(),
            labels: IndexSet::new(),
            transitions: Vec::new(),
            initial,
            hidden: BTreeSet::new(),
        };
        for &(s, l, t) in edges {
            let (k, _) = lts.labels.insert_full(l.to_string());
            lts.transitions.push((s, k as u32, t));
        }
        lts
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    pub fn label_name(&self, l: u32) -> &str {
        &self.labels[l as usize]
    }

    /// Declares the labels matching `pred` unobservable.
    pub fn hide(&mut self, pred: impl Fn(&str) -> bool) {
        let names: Vec<String> = self.labels.iter().filter(|l| pred(l)).cloned().collect();
        self.hidden.extend(names);
    }

    pub fn hide_betas(&mut self) {
        self.hide(is_beta_label);
    }

    pub fn hide_deliveries(&mut self) {
        self.hide(is_delivery_label);
    }

    pub fn is_hidden(&self, label: &str) -> bool {
        self.hidden.contains(label)
    }

    /// Decoded system state (component part only).
    pub fn state(&self, i: u32) -> Option<SystemState> {
        if self.locals.is_empty() {
            return None;
        }
        let code = &self.states[i as usize];
        Some(SystemState(
            self.locals
                .iter()
                .zip(code.iter())
                .map(|(tab, &k)| tab[k as usize].clone())
                .collect(),
        ))
    }

    pub fn summary(&self, i: u32) -> Option<&RgtSummary> {
        if self.kind != LtsKind::Transformed {
            return None;
        }
        let code = &self.states[i as usize];
        self.summaries.get_index(code[code.len() - 1] as usize)
    }

    /// Index of a state with the given components and summary.
    pub fn find(&self, q: &SystemState, summary: Option<&RgtSummary>) -> Option<u32> {
        let mut code = Vec::with_capacity(q.arity() + 1);
        for (tab, cs) in self.locals.iter().zip(&q.0) {
            code.push(tab.get_index_of(cs)? as u32);
        }
        if self.kind == LtsKind::Transformed {
            code.push(self.summaries.get_index_of(summary?)? as u32);
        }
        self.states.get_index_of(code.as_slice()).map(|k| k as u32)
    }

    /// Outgoing transitions of `s` (linear scan; for tests and reports).
    pub fn out(&self, s: u32) -> impl Iterator<Item = (&str, u32)> {
        self.transitions
            .iter()
            .filter(move |(a, _, _)| *a == s)
            .map(|&(_, l, t)| (self.label_name(l), t))
    }
}

/// Per-component successor caches, keyed by local-state id.
struct Explorer<'a> {
    sys: &'a CompositeSystem,
    locals: Vec<FxIndexSet<CompState>>,
    moves: Vec<FxHashMap<(usize, u32), Vec<u32>>>,
    betas: Vec<FxHashMap<u32, Option<u32>>>,
    parts: Vec<Vec<(usize, &'a str)>>,
}

impl<'a> Explorer<'a> {
    fn new(sys: &'a CompositeSystem) -> Self {
        let n = sys.components.len();
        Explorer {
            sys,
            locals: vec![FxIndexSet::default(); n],
            moves: vec![FxHashMap::default(); n],
            betas: vec![FxHashMap::default(); n],
            parts: sys.interactions.iter().map(|a| sys.participants(a).collect()).collect(),
        }
    }

    fn intern(&mut self, i: usize, cs: CompState) -> u32 {
        self.locals[i].insert_full(cs).0 as u32
    }

    fn encode(&mut self, q: &SystemState) -> Vec<u32> {
        q.0.iter()
            .enumerate()
            .map(|(i, cs)| self.intern(i, cs.clone()))
            .collect()
    }

    fn decode(&self, code: &[u32]) -> SystemState {
        SystemState(
            self.locals
                .iter()
                .zip(code)
                .map(|(tab, &k)| tab[k as usize].clone())
                .collect(),
        )
    }

    fn local_moves(&mut self, a: usize, slot: usize, i: usize, k: u32) -> Result<Vec<u32>, ExprError> {
        if let Some(v) = self.moves[i].get(&(a * 64 + slot, k)) {
            return Ok(v.clone());
        }
        let c = &self.sys.components[i];
        let cs = self.locals[i][k as usize].clone();
        let port = self.parts[a][slot].1;
        let mut out = Vec::new();
        if !cs.busy {
            for t in enabled_transitions(c, &cs, port)? {
                let next = fire_local(c, &cs, t)?;
                let id = self.intern(i, next);
                if !out.contains(&id) {
                    out.push(id);
                }
            }
        }
        self.moves[i].insert((a * 64 + slot, k), out.clone());
        Ok(out)
    }

    fn local_beta(&mut self, i: usize, k: u32) -> Result<Option<u32>, ExprError> {
        if let Some(v) = self.betas[i].get(&k) {
            return Ok(*v);
        }
        let cs = self.locals[i][k as usize].clone();
        let r = complete_local(&self.sys.components[i], &cs)?.map(|next| self.intern(i, next));
        self.betas[i].insert(k, r);
        Ok(r)
    }

    /// Component-level successors by interaction `a`.
    fn interaction(&mut self, a: usize, code: &[u32]) -> Result<Vec<Vec<u32>>, ExprError> {
        if !self.sys.interactions[a].transfer.is_empty() {
            let q = self.decode(code);
            let succ = interaction_successors(self.sys, &q, a)?;
            return Ok(succ.iter().map(|s| self.encode(s)).collect());
        }
        let mut out = vec![code.to_vec()];
        for slot in 0..self.parts[a].len() {
            let i = self.parts[a][slot].0;
            let ms = self.local_moves(a, slot, i, code[i])?;
            if ms.is_empty() {
                return Ok(Vec::new());
            }
            out = out
                .into_iter()
                .flat_map(|c| {
                    ms.iter().map(move |&m| {
                        let mut c = c.clone();
                        c[i] = m;
                        c
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

fn busy_mask(ex: &Explorer, code: &[u32], monitored: u64) -> u64 {
    let mut m = 0u64;
    for (i, &k) in code.iter().enumerate() {
        if monitored & (1 << i) != 0 && ex.locals[i][k as usize].busy {
            m |= 1 << i;
        }
    }
    m
}

/// Breadth-first exploration of `sys` up to `bound` states.
pub fn explore(sys: &CompositeSystem, bound: usize) -> Result<ExplicitLts, BisimError> {
    let n = sys.components.len();
    let kind = if sys.rgt.is_some() {
        LtsKind::Transformed
    } else if sys.is_partial() {
        LtsKind::Partial
    } else {
        LtsKind::Global
    };
    if kind == LtsKind::Transformed && (n > 64 || sys.interactions.len() > 64) {
        return Err(BisimError::Unsupported(
            "transformed exploration supports at most 64 components and 64 interactions".into(),
        ));
    }
    let (variant, monitored) = match &sys.rgt {
        Some(r) => (
            r.variant,
            sys.components
                .iter()
                .enumerate()
                .filter(|(_, c)| c.instrumented)
                .fold(0u64, |m, (i, _)| m | (1 << i)),
        ),
        None => (RgtVariant::Default, 0),
    };
    // Summary bit 0 stands for interactions with a delivery port, bit 1
    // for those without.
    let class: Vec<usize> = sys
        .interactions
        .iter()
        .map(|a| match &sys.rgt {
            Some(r) if !r.delivers(&a.id) => 1,
            _ => 0,
        })
        .collect();

    let mut ex = Explorer::new(sys);
    let mut summaries: FxIndexSet<RgtSummary> = FxIndexSet::default();
    let mut states: FxIndexSet<Box<[u32]>> = FxIndexSet::default();
    let mut labels: IndexSet<String> = IndexSet::new();
    let gamma_labels: Vec<u32> = sys
        .interactions
        .iter()
        .map(|a| labels.insert_full(a.id.clone()).0 as u32)
        .collect();
    let beta_labels: Vec<u32> = (0..n)
        .map(|i| labels.insert_full(Label::Beta(i).to_string()).0 as u32)
        .collect();
    let deliver_label = labels.insert_full(delivery_label(crate::model::RGT_NAME)).0 as u32;

    let mut init = ex.encode(&sys.initial_state());
    if kind == LtsKind::Transformed {
        init.push(summaries.insert_full(RgtSummary::default()).0 as u32);
    }
    states.insert(init.into_boxed_slice());
    let mut transitions = Vec::new();
    let mut next = 0usize;
    let push = |states: &mut FxIndexSet<Box<[u32]>>, code: Vec<u32>, next: usize| -> Result<u32, BisimError> {
        let (k, _) = states.insert_full(code.into_boxed_slice());
        if states.len() > bound {
            return Err(BisimError::BoundExceeded {
                bound,
                frontier: states.len() - next,
            });
        }
        Ok(k as u32)
    };

    while next < states.len() {
        let src = next as u32;
        let code = states[next].to_vec();
        next += 1;
        let comps = &code[..n];
        let summary = (kind == LtsKind::Transformed).then(|| summaries[code[n] as usize].clone());

        let can_new = summary.as_ref().is_none_or(|s| s.can_new(variant));
        if can_new {
            for a in 0..sys.interactions.len() {
                for succ in ex.interaction(a, comps)? {
                    let mut succ = succ;
                    if let Some(s) = &summary {
                        let s2 = s.new_interaction(class[a], busy_mask(&ex, &succ, monitored));
                        succ.push(summaries.insert_full(s2).0 as u32);
                    }
                    let dst = push(&mut states, succ, next)?;
                    transitions.push((src, gamma_labels[a], dst));
                }
            }
        }
        if kind != LtsKind::Global {
            for i in 0..n {
                let Some(k) = ex.local_beta(i, comps[i])? else {
                    continue;
                };
                let mut succ = comps.to_vec();
                succ[i] = k;
                if let Some(s) = &summary {
                    if monitored & (1 << i) != 0 {
                        if !s.can_upd(variant) {
                            continue;
                        }
                        succ.push(summaries.insert_full(s.upd(i)).0 as u32);
                    } else {
                        succ.push(code[n]);
                    }
                }
                let dst = push(&mut states, succ, next)?;
                transitions.push((src, beta_labels[i], dst));
            }
        }
        if let Some(s) = &summary {
            if s.gs & 1 != 0 {
                for g in s.gets() {
                    let mut succ = comps.to_vec();
                    succ.push(summaries.insert_full(g).0 as u32);
                    let dst = push(&mut states, succ, next)?;
                    transitions.push((src, deliver_label, dst));
                }
            }
        }
    }
    transitions.sort_unstable();
    transitions.dedup();
    debug!("explored {} states, {} transitions", states.len(), transitions.len());
    Ok(ExplicitLts {
        kind,
        locals: ex.locals,
        summaries,
        states,
        labels,
        transitions,
        initial: 0,
        hidden: BTreeSet::new(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CounterexampleKind {
    /// The trace is a weak trace of the first LTS only.
    OnlyLeft,
    OnlyRight,
    /// Trace equivalent up to the search bound; the systems differ in
    /// branching structure only.
    Branching,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub trace: Vec<String>,
    pub kind: CounterexampleKind,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = if self.trace.is_empty() {
            "ε".to_string()
        } else {
            self.trace.join(" · ")
        };
        match self.kind {
            CounterexampleKind::OnlyLeft => write!(f, "{t} is possible in the first system only"),
            CounterexampleKind::OnlyRight => write!(f, "{t} is possible in the second system only"),
            CounterexampleKind::Branching => {
                write!(f, "no distinguishing trace found; the systems differ in branching only")
            }
        }
    }
}

/// Outcome of a weak-bisimulation check. The relation is the coarsest weak
/// bisimulation on the disjoint union, stored as a partition. It is left
/// empty when a distinguishing trace was found without refinement.
#[derive(Clone, Debug)]
pub struct BisimResult {
    pub equivalent: bool,
    block: Vec<u32>,
    split: usize,
    pub blocks: usize,
    pub rounds: usize,
    pub counterexample: Option<Counterexample>,
}

impl BisimResult {
    /// Whether state `p` of the first LTS and state `q` of the second are
    /// weakly bisimilar.
    pub fn related(&self, p: u32, q: u32) -> bool {
        !self.block.is_empty() && self.block[p as usize] == self.block[self.split + q as usize]
    }

    /// Whether states `p` and `q` of the first LTS are weakly bisimilar.
    pub fn related_left(&self, p: u32, q: u32) -> bool {
        !self.block.is_empty() && self.block[p as usize] == self.block[q as usize]
    }

    /// Every related pair across the two LTSs.
    pub fn pairs(&self) -> Vec<(u32, u32)> {
        let mut by_block: HashMap<u32, Vec<u32>> = HashMap::new();
        for q in self.split..self.block.len() {
            by_block.entry(self.block[q]).or_default().push((q - self.split) as u32);
        }
        let mut out = Vec::new();
        for p in 0..self.split {
            if let Some(qs) = by_block.get(&self.block[p]) {
                out.extend(qs.iter().map(|&q| (p as u32, q)));
            }
        }
        out
    }
}

/// Disjoint union with hidden labels mapped to 0.
struct Union {
    n: usize,
    split: usize,
    init: (u32, u32),
    names: Vec<String>,
    start: Vec<u32>,
    edges: Vec<(u32, u32)>,
}

impl Union {
    fn new(l1: &ExplicitLts, l2: &ExplicitLts) -> Self {
        let mut names: IndexSet<String> = IndexSet::new();
        names.insert("τ".into());
        let split = l1.num_states();
        let n = split + l2.num_states();
        let mut all: Vec<(u32, u32, u32)> = Vec::with_capacity(l1.transitions.len() + l2.transitions.len());
        for (lts, off) in [(l1, 0u32), (l2, split as u32)] {
            let map: Vec<u32> = lts
                .labels
                .iter()
                .map(|l| {
                    if lts.is_hidden(l) {
                        0
                    } else {
                        names.insert_full(l.clone()).0 as u32
                    }
                })
                .collect();
            all.extend(
                lts.transitions
                    .iter()
                    .map(|&(s, l, t)| (s + off, map[l as usize], t + off)),
            );
        }
        all.sort_unstable();
        all.dedup();
        let mut start = vec![0u32; n + 1];
        for &(s, _, _) in &all {
            start[s as usize + 1] += 1;
        }
        for i in 0..n {
            start[i + 1] += start[i];
        }
        Union {
            n,
            split,
            init: (l1.initial, l2.initial + split as u32),
            names: names.into_iter().collect(),
            start,
            edges: all.into_iter().map(|(_, l, t)| (l, t)).collect(),
        }
    }

    fn out(&self, s: usize) -> &[(u32, u32)] {
        &self.edges[self.start[s] as usize..self.start[s + 1] as usize]
    }

    fn tau(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.out(s).iter().filter(|(l, _)| *l == 0).map(|(_, t)| *t as usize)
    }

    /// Strongly connected components of the τ-graph, numbered so that every
    /// τ-successor component has a smaller number.
    fn tau_sccs(&self) -> (Vec<u32>, usize) {
        const UNSEEN: u32 = u32::MAX;
        let mut index = vec![UNSEEN; self.n];
        let mut low = vec![0u32; self.n];
        let mut on_stack = vec![false; self.n];
        let mut comp = vec![UNSEEN; self.n];
        let mut stack: Vec<u32> = Vec::new();
        let mut counter = 0u32;
        let mut ncomp = 0u32;
        let mut call: Vec<(usize, usize)> = Vec::new();
        for root in 0..self.n {
            if index[root] != UNSEEN {
                continue;
            }
            call.push((root, 0));
            while let Some(&mut (v, ref mut pos)) = call.last_mut() {
                if *pos == 0 && index[v] == UNSEEN {
                    index[v] = counter;
                    low[v] = counter;
                    counter += 1;
                    stack.push(v as u32);
                    on_stack[v] = true;
                }
                let out = self.out(v);
                let mut descended = false;
                while *pos < out.len() {
                    let (l, w) = out[*pos];
                    *pos += 1;
                    if l != 0 {
                        continue;
                    }
                    let w = w as usize;
                    if index[w] == UNSEEN {
                        call.push((w, 0));
                        descended = true;
                        break;
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                }
                if descended {
                    continue;
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack") as usize;
                        on_stack[w] = false;
                        comp[w] = ncomp;
                        if w == v {
                            break;
                        }
                    }
                    ncomp += 1;
                }
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
            }
        }
        (comp, ncomp as usize)
    }

    fn closure(&self, set: impl IntoIterator<Item = usize>) -> Vec<u32> {
        let mut seen: HashSet<usize> = HashSet::new();
        let mut todo: Vec<usize> = set.into_iter().collect();
        while let Some(s) = todo.pop() {
            if seen.insert(s) {
                todo.extend(self.tau(s));
            }
        }
        let mut v: Vec<u32> = seen.into_iter().map(|s| s as u32).collect();
        v.sort_unstable();
        v
    }
}

fn pack(label: u32, block: u32) -> u64 {
    ((label as u64) << 32) | block as u64
}

/// Quotient of the union by τ-SCCs, in successor-first order.
struct Quotient {
    tau_start: Vec<u32>,
    tau: Vec<u32>,
    vis_start: Vec<u32>,
    vis: Vec<(u32, u32)>,
}

impl Quotient {
    fn new(u: &Union, comp: &[u32], nc: usize) -> Self {
        let mut tau_e: Vec<(u32, u32)> = Vec::new();
        let mut vis_e: Vec<(u32, u32, u32)> = Vec::new();
        for s in 0..u.n {
            let cs = comp[s];
            for &(l, t) in u.out(s) {
                let ct = comp[t as usize];
                if l == 0 {
                    if ct != cs {
                        tau_e.push((cs, ct));
                    }
                } else {
                    vis_e.push((cs, l, ct));
                }
            }
        }
        tau_e.sort_unstable();
        tau_e.dedup();
        vis_e.sort_unstable();
        vis_e.dedup();
        let csr = |keys: &mut dyn Iterator<Item = u32>| {
            let mut start = vec![0u32; nc + 1];
            for k in keys {
                start[k as usize + 1] += 1;
            }
            for i in 0..nc {
                start[i + 1] += start[i];
            }
            start
        };
        Quotient {
            tau_start: csr(&mut tau_e.iter().map(|e| e.0)),
            tau: tau_e.iter().map(|e| e.1).collect(),
            vis_start: csr(&mut vis_e.iter().map(|e| e.0)),
            vis: vis_e.iter().map(|e| (e.1, e.2)).collect(),
        }
    }

    fn tau(&self, c: usize) -> &[u32] {
        &self.tau[self.tau_start[c] as usize..self.tau_start[c + 1] as usize]
    }

    fn vis(&self, c: usize) -> &[(u32, u32)] {
        &self.vis[self.vis_start[c] as usize..self.vis_start[c + 1] as usize]
    }
}

/// Coarsest weak bisimulation on the τ-quotient by signature refinement.
/// A node's signature is every `(a, B)` with a weak `a`-move into block
/// `B`, τ included. Nodes are numbered successor-first along τ, so one
/// pass computes τ-reachable blocks and a second the signatures.
fn refine(q: &Quotient, nc: usize) -> (Vec<u32>, usize, usize) {
    let mut block = vec![0u32; nc];
    let mut count = 1usize;
    let mut rounds = 0;
    let mut cb_off = vec![0usize; nc + 1];
    let mut cb: Vec<u32> = Vec::new();
    let mut sig_off = vec![0usize; nc + 1];
    let mut sig: Vec<u64> = Vec::new();
    let mut tmp32: Vec<u32> = Vec::new();
    let mut tmp64: Vec<u64> = Vec::new();
    loop {
        rounds += 1;
        cb.clear();
        for c in 0..nc {
            tmp32.clear();
            tmp32.push(block[c]);
            for &t in q.tau(c) {
                tmp32.extend_from_slice(&cb[cb_off[t as usize]..cb_off[t as usize + 1]]);
            }
            tmp32.sort_unstable();
            tmp32.dedup();
            cb.extend_from_slice(&tmp32);
            cb_off[c + 1] = cb.len();
        }
        sig.clear();
        for c in 0..nc {
            tmp64.clear();
            tmp64.extend(cb[cb_off[c]..cb_off[c + 1]].iter().map(|&b| pack(0, b)));
            for &(l, t) in q.vis(c) {
                tmp64.extend(
                    cb[cb_off[t as usize]..cb_off[t as usize + 1]]
                        .iter()
                        .map(|&b| pack(l, b)),
                );
            }
            for &t in q.tau(c) {
                tmp64.extend_from_slice(&sig[sig_off[t as usize]..sig_off[t as usize + 1]]);
            }
            tmp64.sort_unstable();
            tmp64.dedup();
            sig.extend_from_slice(&tmp64);
            sig_off[c + 1] = sig.len();
        }
        let mut ids: FxHashMap<(u32, &[u64]), u32> = FxHashMap::default();
        let mut next = vec![0u32; nc];
        for c in 0..nc {
            let k = ids.len() as u32;
            next[c] = *ids.entry((block[c], &sig[sig_off[c]..sig_off[c + 1]])).or_insert(k);
        }
        let new_count = ids.len();
        drop(ids);
        block = next;
        debug!("refinement round {rounds}: {new_count} blocks");
        if new_count == count {
            return (block, count, rounds);
        }
        count = new_count;
    }
}

/// Bounds on explored state-set pairs when searching for a distinguishing
/// weak trace, before and after refinement.
const QUICK_TRACE_BOUND: usize = 20_000;
const TRACE_SEARCH_BOUND: usize = 200_000;

fn distinguishing_trace(u: &Union, bound: usize) -> Option<Counterexample> {
    let start = (u.closure([u.init.0 as usize]), u.closure([u.init.1 as usize]));
    type Pair = (Vec<u32>, Vec<u32>);
    let mut seen: HashSet<Pair> = HashSet::new();
    let mut queue: VecDeque<(Pair, Vec<u32>)> = VecDeque::new();
    seen.insert(start.clone());
    queue.push_back((start, Vec::new()));
    while let Some(((a, b), trace)) = queue.pop_front() {
        if seen.len() > bound {
            break;
        }
        let mut labels: BTreeSet<u32> = BTreeSet::new();
        for &s in a.iter().chain(&b) {
            labels.extend(u.out(s as usize).iter().filter(|(l, _)| *l != 0).map(|(l, _)| *l));
        }
        for l in labels {
            let step = |set: &[u32]| {
                u.closure(set.iter().flat_map(|&s| {
                    u.out(s as usize)
                        .iter()
                        .filter(|(x, _)| *x == l)
                        .map(|(_, t)| *t as usize)
                }))
            };
            let (a2, b2) = (step(&a), step(&b));
            let mut t = trace.clone();
            t.push(l);
            let named = || t.iter().map(|&l| u.names[l as usize].clone()).collect();
            if a2.is_empty() != b2.is_empty() {
                return Some(Counterexample {
                    trace: named(),
                    kind: if b2.is_empty() {
                        CounterexampleKind::OnlyLeft
                    } else {
                        CounterexampleKind::OnlyRight
                    },
                });
            }
            if !a2.is_empty() && seen.insert((a2.clone(), b2.clone())) {
                queue.push_back(((a2, b2), t));
            }
        }
    }
    None
}

/// Decides weak bisimilarity of the initial states of `l1` and `l2`, each
/// with its own unobservable labels. Visible labels are matched by name.
pub fn weak_bisimilar(l1: &ExplicitLts, l2: &ExplicitLts) -> BisimResult {
    let u = Union::new(l1, l2);
    // A weak trace of one side only settles the question cheaply.
    if let Some(cx) = distinguishing_trace(&u, QUICK_TRACE_BOUND) {
        return BisimResult {
            equivalent: false,
            block: Vec::new(),
            split: u.split,
            blocks: 0,
            rounds: 0,
            counterexample: Some(cx),
        };
    }
    let (comp, nc) = u.tau_sccs();
    let q = Quotient::new(&u, &comp, nc);
    let (cblock, blocks, rounds) = refine(&q, nc);
    let block: Vec<u32> = comp.iter().map(|&c| cblock[c as usize]).collect();
    let equivalent = block[u.init.0 as usize] == block[u.init.1 as usize];
    let counterexample = (!equivalent).then(|| {
        distinguishing_trace(&u, TRACE_SEARCH_BOUND).unwrap_or(Counterexample {
            trace: Vec::new(),
            kind: CounterexampleKind::Branching,
        })
    });
    BisimResult {
        equivalent,
        block,
        split: u.split,
        blocks,
        rounds,
        counterexample,
    }
}

/// Whether `trace` (visible labels) is a weak trace of `lts`.
pub fn weak_trace_executable(lts: &ExplicitLts, trace: &[String]) -> bool {
    let mut out: HashMap<u32, Vec<(u32, u32)>> = HashMap::new();
    for &(s, l, t) in &lts.transitions {
        out.entry(s).or_default().push((l, t));
    }
    let hidden = |l: u32| lts.is_hidden(lts.label_name(l));
    let closure = |set: Vec<u32>| {
        let mut seen: BTreeSet<u32> = BTreeSet::new();
        let mut todo = set;
        while let Some(s) = todo.pop() {
            if seen.insert(s) {
                for &(l, t) in out.get(&s).into_iter().flatten() {
                    if hidden(l) {
                        todo.push(t);
                    }
                }
            }
        }
        seen
    };
    let mut cur = closure(vec![lts.initial]);
    for a in trace {
        let next: Vec<u32> = cur
            .iter()
            .flat_map(|s| out.get(s).into_iter().flatten())
            .filter(|(l, _)| !hidden(*l) && lts.label_name(*l) == a)
            .map(|(_, t)| *t)
            .collect();
        if next.is_empty() {
            return false;
        }
        cur = closure(next);
    }
    true
}
