//! The probabilistic LTS generated by the operational rules, with interned states.

mod weak;

pub use weak::{Chain, DerivCache, Derivatives, DistPolytope, StepChain};

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distribution::{interp, Dist};
use crate::rational::Q;
use crate::syntax::{desugar, prob_sum, ActSet, Label, Term};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId(pub u32);

impl StateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Debug for StateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "s{}", self.0)
    }
}

pub type SDist = Dist<StateId>;

/// Which rule produced a move.  Indices point into the moves of the component term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Action,
    IntLeft,
    IntRight,
    ExtLeft(usize),
    ExtRight(usize),
    ExtTauLeft(usize),
    ExtTauRight(usize),
    ParLeft(usize),
    ParRight(usize),
    Sync(usize, usize),
}

/// A move of a state-based term.  `term` is a (possibly sugared) term with `⟦term⟧ = target`.
#[derive(Debug, Clone)]
pub struct Move {
    pub label: Label,
    pub target: Dist<Term>,
    pub term: Term,
    pub rule: Rule,
}

/// Memoised term-level moves.
#[derive(Default)]
pub struct MoveCache {
    memo: HashMap<Term, Arc<Vec<Move>>>,
}

impl MoveCache {
    pub fn new() -> MoveCache {
        MoveCache::default()
    }

    /// The moves of a desugared state-based term, sorted by label and target, one per distinct
    /// `(label, target)` pair.
    pub fn moves(&mut self, t: &Term) -> Arc<Vec<Move>> {
        if let Some(m) = self.memo.get(t) {
            return m.clone();
        }
        let mut out = self.compute(t);
        out.sort_by(|a, b| (&a.label, &a.target).cmp(&(&b.label, &b.target)));
        out.dedup_by(|a, b| a.label == b.label && a.target == b.target);
        let out = Arc::new(out);
        self.memo.insert(t.clone(), out.clone());
        out
    }

    fn compute(&mut self, t: &Term) -> Vec<Move> {
        match t {
            Term::Nil => vec![],
            Term::ProbChoice(..) => panic!("moves requested for a non-state term {t}"),
            Term::Prefix(a, p) => {
                vec![Move { label: a.label(), target: interp(p), term: (**p).clone(), rule: Rule::Action }]
            }
            Term::IntChoice(p, q) => vec![
                Move { label: Label::Tau, target: interp(p), term: (**p).clone(), rule: Rule::IntLeft },
                Move { label: Label::Tau, target: interp(q), term: (**q).clone(), rule: Rule::IntRight },
            ],
            Term::ExtChoice(l, r) => {
                let (l, r) = ((**l).clone(), (**r).clone());
                let mut out = Vec::new();
                for (i, m) in self.moves(&l).iter().enumerate() {
                    out.push(if m.label == Label::Tau {
                        Move {
                            label: Label::Tau,
                            target: m.target.map(|x| Term::ext(x.clone(), r.clone())),
                            term: Term::ext(m.term.clone(), r.clone()),
                            rule: Rule::ExtTauLeft(i),
                        }
                    } else {
                        Move { rule: Rule::ExtLeft(i), ..m.clone() }
                    });
                }
                for (i, m) in self.moves(&r).iter().enumerate() {
                    out.push(if m.label == Label::Tau {
                        Move {
                            label: Label::Tau,
                            target: m.target.map(|x| Term::ext(l.clone(), x.clone())),
                            term: Term::ext(l.clone(), m.term.clone()),
                            rule: Rule::ExtTauRight(i),
                        }
                    } else {
                        Move { rule: Rule::ExtRight(i), ..m.clone() }
                    });
                }
                out
            }
            Term::Par(a, l, r) => {
                let (l, r) = ((**l).clone(), (**r).clone());
                let synced = |lab: &Label| matches!(lab, Label::Visible(n) if a.contains(n));
                let lm = self.moves(&l);
                let rm = self.moves(&r);
                let mut out = Vec::new();
                for (i, m) in lm.iter().enumerate() {
                    if !synced(&m.label) {
                        out.push(Move {
                            label: m.label.clone(),
                            target: m.target.map(|x| Term::par(a.clone(), x.clone(), r.clone())),
                            term: Term::par(a.clone(), m.term.clone(), r.clone()),
                            rule: Rule::ParLeft(i),
                        });
                    }
                }
                for (j, m) in rm.iter().enumerate() {
                    if !synced(&m.label) {
                        out.push(Move {
                            label: m.label.clone(),
                            target: m.target.map(|x| Term::par(a.clone(), l.clone(), x.clone())),
                            term: Term::par(a.clone(), l.clone(), m.term.clone()),
                            rule: Rule::ParRight(j),
                        });
                    }
                }
                for (i, m1) in lm.iter().enumerate() {
                    for (j, m2) in rm.iter().enumerate() {
                        if synced(&m1.label) && m1.label == m2.label {
                            out.push(Move {
                                label: Label::Tau,
                                target: m1
                                    .target
                                    .product(&m2.target, |x, y| Term::par(a.clone(), x.clone(), y.clone())),
                                term: Term::par(a.clone(), m1.term.clone(), m2.term.clone()),
                                rule: Rule::Sync(i, j),
                            });
                        }
                    }
                }
                out
            }
        }
    }
}

/// A strong transition of an interned state.
#[derive(Debug, Clone)]
pub struct Transition {
    pub label: Label,
    pub target: SDist,
    /// A term whose interpretation is `target`.
    pub term: Term,
    pub rule: Rule,
}

/// Interned states and their transitions.  States are added by [`Plts::add_term`], which
/// interns everything reachable from the term's interpretation.
#[derive(Default)]
pub struct Plts {
    states: Vec<Term>,
    index: HashMap<Term, StateId>,
    trans: Vec<Vec<Transition>>,
    depth: Vec<usize>,
    cache: MoveCache,
}

impl Plts {
    pub fn new() -> Plts {
        Plts::default()
    }

    /// Builds the graph of `t` and returns `⟦t⟧`.
    pub fn build(t: &Term) -> (Plts, SDist) {
        let mut g = Plts::new();
        let d = g.add_term(t);
        (g, d)
    }

    pub fn add_term(&mut self, t: &Term) -> SDist {
        let d = interp(&desugar(t));
        self.add_dist(&d)
    }

    /// Interns a distribution over state terms (and everything reachable from it).
    pub fn add_dist(&mut self, d: &Dist<Term>) -> SDist {
        let mut queue = VecDeque::new();
        let out = d.map(|s| self.intern(s, &mut queue));
        while let Some(id) = queue.pop_front() {
            let term = self.states[id.index()].clone();
            let moves = self.cache.moves(&term);
            let mut ts = Vec::with_capacity(moves.len());
            for m in moves.iter() {
                let target = m.target.map(|s| self.intern(s, &mut queue));
                ts.push(Transition { label: m.label.clone(), target, term: m.term.clone(), rule: m.rule });
            }
            self.trans[id.index()] = ts;
        }
        self.compute_depths();
        out
    }

    fn intern(&mut self, s: &Term, queue: &mut VecDeque<StateId>) -> StateId {
        if let Some(&id) = self.index.get(s) {
            return id;
        }
        let id = StateId(self.states.len() as u32);
        self.states.push(s.clone());
        self.index.insert(s.clone(), id);
        self.trans.push(Vec::new());
        queue.push_back(id);
        id
    }

    fn compute_depths(&mut self) {
        let n = self.states.len();
        let known = self.depth.len();
        self.depth.resize(n, usize::MAX);
        // New states only point to states interned no earlier than the old frontier, or to
        // already-known ones; resolve by repeated relaxation in reverse interning order.
        let mut order: Vec<usize> = (known..n).collect();
        order.reverse();
        let mut pending = true;
        while pending {
            pending = false;
            for &i in &order {
                if self.depth[i] != usize::MAX {
                    continue;
                }
                let mut d = 0;
                let mut ready = true;
                for t in &self.trans[i] {
                    for s in t.target.support() {
                        let ds = self.depth[s.index()];
                        if ds == usize::MAX {
                            ready = false;
                        } else {
                            d = d.max(ds + 1);
                        }
                    }
                }
                if ready {
                    self.depth[i] = d;
                } else {
                    pending = true;
                }
            }
        }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.states.len() as u32).map(StateId)
    }

    pub fn term(&self, s: StateId) -> &Term {
        &self.states[s.index()]
    }

    pub fn lookup(&self, t: &Term) -> Option<StateId> {
        self.index.get(t).copied()
    }

    pub fn transitions(&self, s: StateId) -> &[Transition] {
        &self.trans[s.index()]
    }

    /// The enabled strong transitions of `s`.
    pub fn step(&self, s: StateId) -> Vec<(Label, SDist)> {
        self.trans[s.index()].iter().map(|t| (t.label.clone(), t.target.clone())).collect()
    }

    pub fn is_deadlocked(&self, s: StateId) -> bool {
        self.trans[s.index()].is_empty()
    }

    pub fn enables(&self, s: StateId, l: &Label) -> bool {
        self.trans[s.index()].iter().any(|t| &t.label == l)
    }

    pub fn enables_success(&self, s: StateId) -> bool {
        self.trans[s.index()].iter().any(|t| t.label.is_success())
    }

    pub fn is_stable(&self, s: StateId) -> bool {
        !self.enables(s, &Label::Tau)
    }

    /// `s ↛X`: no `τ` and no action named in `X` (visible or success) is enabled.
    pub fn refuses(&self, s: StateId, x: &ActSet) -> bool {
        self.trans[s.index()].iter().all(|t| match &t.label {
            Label::Tau => false,
            Label::Visible(n) | Label::Success(n) => !x.contains(n),
        })
    }

    /// Height in the acyclic order: deadlocked states have depth zero.
    pub fn depth(&self, s: StateId) -> usize {
        self.depth[s.index()]
    }

    /// Visible actions labelling some transition.
    pub fn visible_actions(&self) -> ActSet {
        let mut out = ActSet::new();
        for ts in &self.trans {
            for t in ts {
                if let Label::Visible(n) = &t.label {
                    out.insert(n.clone());
                }
            }
        }
        out
    }

    /// `⊕_s Δ(s)·s` as a term.
    pub fn dist_term(&self, d: &SDist) -> Term {
        let parts: Vec<(Q, Term)> = d.iter().map(|(s, p)| (p.clone(), self.term(*s).clone())).collect();
        prob_sum(&parts)
    }

    /// The memoised term-level move table.
    pub fn moves_of(&mut self, t: &Term) -> Arc<Vec<Move>> {
        self.cache.moves(t)
    }

    /// Graphviz rendering: states as filled dots, distributions as hollow dots with
    /// probability-labelled edges.
    pub fn to_dot(&self, roots: &[SDist]) -> String {
        let mut out = String::from("digraph plts {\n  node [label=\"\"];\n");
        for s in self.states() {
            let _ = writeln!(
                out,
                "  s{} [shape=point, width=0.12, xlabel=\"{}\"];",
                s.0,
                escape(&self.term(s).to_string())
            );
        }
        let mut dist_id = 0usize;
        let mut emit_dist = |out: &mut String, from: Option<(StateId, &Label)>, d: &SDist| {
            if let (true, Some((s, l))) = (d.is_point(), from) {
                let t = d.support().next().unwrap();
                let _ = writeln!(out, "  s{} -> s{} [label=\"{}\"];", s.0, t.0, escape(&l.to_string()));
                return;
            }
            let name = format!("d{dist_id}");
            dist_id += 1;
            let _ = writeln!(out, "  {name} [shape=circle, width=0.1];");
            if let Some((s, l)) = from {
                let _ = writeln!(out, "  s{} -> {name} [label=\"{}\"];", s.0, escape(&l.to_string()));
            }
            for (t, p) in d.iter() {
                let _ = writeln!(out, "  {name} -> s{} [label=\"{p}\", style=dashed];", t.0);
            }
        };
        for r in roots {
            emit_dist(&mut out, None, r);
        }
        for s in self.states() {
            for t in self.transitions(s) {
                emit_dist(&mut out, Some((s, &t.label)), &t.target);
            }
        }
        out.push_str("}\n");
        out
    }

    /// JSON dump of states and transitions.
    pub fn to_json(&self) -> serde_json::Value {
        let states: Vec<serde_json::Value> = self
            .states()
            .map(|s| {
                serde_json::json!({
                    "id": s.0,
                    "term": self.term(s).to_string(),
                    "depth": self.depth(s),
                    "transitions": self.transitions(s).iter().map(|t| serde_json::json!({
                        "label": t.label.to_string(),
                        "target": t.target,
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({ "states": states })
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{act_set, parse};

    fn t(s: &str) -> Term {
        parse(s).unwrap()
    }

    #[test]
    fn nil_is_a_single_deadlock() {
        let (g, d) = Plts::build(&Term::Nil);
        assert_eq!(g.num_states(), 1);
        let s = *d.support().next().unwrap();
        assert!(g.is_deadlocked(s));
        assert!(g.refuses(s, &act_set(["a", "b"])));
    }

    #[test]
    fn internal_choice_steps() {
        let (g, d) = Plts::build(&t("a |~| b"));
        let s = *d.support().next().unwrap();
        let steps = g.step(s);
        assert_eq!(steps.len(), 2);
        assert!(steps.iter().all(|(l, _)| *l == Label::Tau));
        let targets: Vec<&Term> = steps.iter().map(|(_, d)| g.term(*d.support().next().unwrap())).collect();
        assert_eq!(targets, vec![&t("a"), &t("b")]);
        assert!(!g.refuses(s, &ActSet::new()));
    }

    #[test]
    fn external_choice_has_both_visible_moves() {
        let (g, d) = Plts::build(&t("a.c [] b.d"));
        let s = *d.support().next().unwrap();
        let labels: Vec<Label> = g.step(s).into_iter().map(|x| x.0).collect();
        assert_eq!(labels, vec![Label::visible("a"), Label::visible("b")]);
        assert!(g.refuses(s, &act_set(["c"])));
        assert!(!g.refuses(s, &act_set(["b"])));
    }

    #[test]
    fn external_tau_keeps_other_branch() {
        let (g, d) = Plts::build(&t("(a |~| b) [] c"));
        let s = *d.support().next().unwrap();
        let steps = g.step(s);
        let taus: Vec<&Term> =
            steps.iter().filter(|x| x.0 == Label::Tau).map(|x| g.term(*x.1.support().next().unwrap())).collect();
        assert_eq!(taus, vec![&t("a [] c"), &t("b [] c")]);
    }

    #[test]
    fn swap_fixture_shape() {
        let (g, d) = Plts::build(&t("a.((b.d [] c.e) |+1/2| (b.f [] c.g))"));
        let root = *d.support().next().unwrap();
        let steps = g.step(root);
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].1.len(), 2);
        assert_eq!(g.depth(root), 3);
        // root, two choice states, four single-prefix states, deadlock.
        assert_eq!(g.num_states(), 8);
    }

    #[test]
    fn synchronisation_and_interleaving() {
        let (g, d) = Plts::build(&t("(a.w [] b) |[a,b]| (a |~| c)"));
        let s = *d.support().next().unwrap();
        // Only the right-hand internal choice can move first.
        assert!(g.step(s).iter().all(|x| x.0 == Label::Tau));
        let left = g.lookup(&t("(a.w [] b) |[a,b]| a")).unwrap();
        let steps = g.step(left);
        assert_eq!(steps.len(), 1);
        assert_eq!(g.term(*steps[0].1.support().next().unwrap()), &t("w |[a,b]| 0"));
        let right = g.lookup(&t("(a.w [] b) |[a,b]| c")).unwrap();
        // `c` is not synchronised, so it interleaves; `b` is blocked.
        let labels: Vec<Label> = g.step(right).into_iter().map(|x| x.0).collect();
        assert_eq!(labels, vec![Label::visible("c")]);
    }

    #[test]
    fn depth_decreases_and_build_is_deterministic() {
        let src = t("(a.(b |~| c) [] (d |+1/3| e)) |[a]| (a.b |~| a)");
        let (g1, d1) = Plts::build(&src);
        let (g2, d2) = Plts::build(&src);
        assert_eq!(d1, d2);
        assert_eq!(g1.num_states(), g2.num_states());
        for s in g1.states() {
            assert_eq!(g1.term(s), g2.term(s));
            for tr in g1.transitions(s) {
                for u in tr.target.support() {
                    assert!(g1.depth(*u) < g1.depth(s));
                }
                assert_eq!(interp(&tr.term).map(|x| g1.lookup(x).unwrap()), tr.target);
            }
        }
    }

    #[test]
    fn dot_and_json_exports() {
        let (g, d) = Plts::build(&t("a |+1/2| b"));
        let dot = g.to_dot(&[d]);
        assert!(dot.contains("label=\"1/2\""));
        let j = g.to_json();
        assert_eq!(j["states"].as_array().unwrap().len(), 3);
    }
}
