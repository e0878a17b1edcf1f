//! Seeded random terms, tests and formulas, and exhaustive small-term enumeration.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::axioms::Instance;
use crate::logic::{Formula, Logic};
use crate::rational::Q;
use crate::syntax::{omega_i, ActSet, Action, Name, Term};

/// Weights drawn by the generators.
pub fn default_weights() -> Vec<Q> {
    vec![Q::new(1, 4), Q::new(1, 3), Q::new(1, 2), Q::new(2, 3), Q::new(3, 4)]
}

#[derive(Debug, Clone)]
pub struct Gen {
    rng: ChaCha8Rng,
    alphabet: Vec<Name>,
    weights: Vec<Q>,
    par: bool,
}

impl Gen {
    pub fn new(seed: u64, alphabet: &[&str]) -> Gen {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            alphabet: alphabet.iter().map(|a| Name::new(a)).collect(),
            weights: default_weights(),
            par: false,
        }
    }

    /// Also generate parallel compositions.
    pub fn with_par(mut self) -> Gen {
        self.par = true;
        self
    }

    pub fn with_weights(mut self, weights: Vec<Q>) -> Gen {
        self.weights = weights;
        self
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn weight(&mut self) -> Q {
        self.weights.choose(&mut self.rng).expect("nonempty weights").clone()
    }

    pub fn name(&mut self) -> Name {
        self.alphabet.choose(&mut self.rng).expect("nonempty alphabet").clone()
    }

    fn subset(&mut self) -> ActSet {
        self.alphabet.iter().filter(|_| self.rng.gen_bool(0.5)).cloned().collect()
    }

    /// A process of depth at most `depth`.
    pub fn term(&mut self, depth: usize) -> Term {
        self.term_with(depth, &[])
    }

    /// A term whose prefixes may also be the success actions in `success`.
    fn term_with(&mut self, depth: usize, success: &[Name]) -> Term {
        if depth == 0 {
            return Term::Nil;
        }
        let ops = if self.par { 6 } else { 5 };
        match self.rng.gen_range(0..ops) {
            0 => Term::Nil,
            1 => {
                let pool = self.alphabet.len() + success.len();
                let i = self.rng.gen_range(0..pool);
                let a = match self.alphabet.get(i) {
                    Some(a) => Action::Visible(a.clone()),
                    None => Action::Success(success[i - self.alphabet.len()].clone()),
                };
                Term::prefix(a, self.term_with(depth - 1, success))
            }
            2 => Term::int(self.term_with(depth - 1, success), self.term_with(depth - 1, success)),
            3 => Term::ext(self.term_with(depth - 1, success), self.term_with(depth - 1, success)),
            4 => {
                let w = self.weight();
                Term::prob(w, self.term_with(depth - 1, success), self.term_with(depth - 1, success))
            }
            _ => {
                let sync = self.subset();
                Term::par(sync, self.term_with(depth - 1, success), self.term_with(depth - 1, success))
            }
        }
    }

    /// A test over success actions `w1..wk` that uses at least one of them.
    pub fn test(&mut self, depth: usize, k: usize) -> Term {
        let success: Vec<Name> = (1..=k).map(omega_i).collect();
        loop {
            let t = self.term_with(depth.max(1), &success);
            if !t.success_actions().is_empty() {
                return t;
            }
        }
    }

    /// A formula of depth at most `depth`; formulas of `L` have no refusals.
    pub fn formula(&mut self, depth: usize, logic: Logic) -> Formula {
        let leaf = |g: &mut Gen| match logic {
            Logic::F if g.rng.gen_bool(0.5) => Formula::Ref(g.subset()),
            _ => Formula::top(),
        };
        if depth == 0 {
            return leaf(self);
        }
        match self.rng.gen_range(0..4) {
            0 => leaf(self),
            1 => {
                let a = self.name();
                Formula::diamond(a.as_str(), self.formula(depth - 1, logic))
            }
            2 => Formula::conj(vec![self.formula(depth - 1, logic), self.formula(depth - 1, logic)]),
            _ => {
                let w = self.weight();
                let rest = Q::one() - &w;
                Formula::prob_sum(vec![(w, self.formula(depth - 1, logic)), (rest, self.formula(depth - 1, logic))])
            }
        }
    }

    /// A random instance of the named axiom with subterms of depth at most `depth`.
    pub fn instance(&mut self, id: crate::axioms::AxiomId, depth: usize) -> Instance {
        use crate::axioms::{AxiomId as A, Must2Branch, Must2Part, Must2PrimeBranch};
        let t = |g: &mut Gen| g.term(depth);
        match id {
            A::P1 => Instance::P1 { p: self.weight(), x: t(self) },
            A::P2 => Instance::P2 { p: self.weight(), x: t(self), y: t(self) },
            A::P3 => Instance::P3 { p: self.weight(), q: self.weight(), x: t(self), y: t(self), z: t(self) },
            A::I1 => Instance::I1 { x: t(self) },
            A::I2 => Instance::I2 { x: t(self), y: t(self) },
            A::I3 => Instance::I3 { x: t(self), y: t(self), z: t(self) },
            A::E1 => Instance::E1 { x: t(self) },
            A::E2 => Instance::E2 { x: t(self), y: t(self) },
            A::E3 => Instance::E3 { x: t(self), y: t(self), z: t(self) },
            A::EI => Instance::EI { a: self.name(), x: t(self), y: t(self) },
            A::D1 => Instance::D1 { p: self.weight(), x: t(self), y: t(self), z: t(self) },
            A::D2 => Instance::D2 { a: self.name(), x: t(self), y: t(self), z: t(self) },
            A::D3 => Instance::D3 { x1: t(self), x2: t(self), y1: t(self), y2: t(self) },
            A::May0 => Instance::May0 { a: self.name(), b: self.name(), x: t(self), y: t(self) },
            A::May1 => Instance::May1 { x: t(self), y: t(self) },
            A::May2 => Instance::May2 { x: t(self) },
            A::May3 => Instance::May3 { a: self.name(), p: self.weight(), x: t(self), y: t(self) },
            A::May4 => Instance::May4 { p: self.weight(), x: t(self), y: t(self) },
            A::Must1 => Instance::Must1 { x: t(self), y: t(self) },
            A::Must2 => {
                let mut names = self.alphabet.clone();
                names.shuffle(&mut self.rng);
                names.truncate(self.rng.gen_range(1..=names.len()));
                let branches: Vec<Must2Branch> = names
                    .iter()
                    .map(|a| {
                        let n = self.rng.gen_range(1..=2);
                        let ws = if n == 1 {
                            vec![Q::one()]
                        } else {
                            let w = self.weight();
                            vec![Q::one() - &w, w]
                        };
                        let parts = ws
                            .into_iter()
                            .map(|p| {
                                let rest = if self.rng.gen_bool(0.5) { Some(t(self)) } else { None };
                                Must2Part { p, q: t(self), rest }
                            })
                            .collect();
                        Must2Branch { action: a.clone(), parts }
                    })
                    .collect();
                let r = self.stable_over(&names, depth);
                Instance::Must2 { r, branches }
            }
            A::Must2Prime => {
                let mut names = self.alphabet.clone();
                names.shuffle(&mut self.rng);
                names.truncate(self.rng.gen_range(1..=names.len()));
                let branches = names
                    .iter()
                    .map(|a| {
                        let to = t(self);
                        let other = t(self);
                        let from = Term::ext(Term::act(a.as_str(), to.clone()), other);
                        Must2PrimeBranch { action: a.clone(), from, to }
                    })
                    .collect();
                let r = self.stable_over(&names, depth);
                Instance::Must2Prime { r, branches }
            }
        }
    }

    /// A probabilistic sum of boxes whose prefixes are drawn from `names`.
    fn stable_over(&mut self, names: &[Name], depth: usize) -> Term {
        let boxed = |g: &mut Gen| {
            let n = g.rng.gen_range(0..=names.len());
            let mut t = Term::Nil;
            for a in names.choose_multiple(&mut g.rng, n).cloned().collect::<Vec<_>>() {
                let body = g.term(depth.saturating_sub(1));
                t = Term::ext(Term::act(a.as_str(), body), t);
            }
            t
        };
        if self.rng.gen_bool(0.5) {
            boxed(self)
        } else {
            let w = self.weight();
            let l = boxed(self);
            Term::prob(w, l, boxed(self))
        }
    }
}

/// Every parallel-free process over `alphabet` of depth at most `depth` with at most
/// `max_prefixes` prefixes, using the given weights for probabilistic choice.
pub fn exhaustive(alphabet: &[&str], depth: usize, max_prefixes: usize, weights: &[Q]) -> Vec<Term> {
    // by_depth[d] holds the terms of depth exactly d.
    let mut by_depth: Vec<Vec<Term>> = vec![vec![Term::Nil]];
    for d in 1..=depth {
        let lower: Vec<&Term> = by_depth.iter().flatten().collect();
        let mut next = Vec::new();
        for t in by_depth[d - 1].iter() {
            for a in alphabet {
                let p = Term::act(a, t.clone());
                if p.prefix_count() <= max_prefixes {
                    next.push(p);
                }
            }
        }
        for l in &lower {
            for r in &lower {
                if l.depth().max(r.depth()) != d - 1 || l.prefix_count() + r.prefix_count() > max_prefixes {
                    continue;
                }
                next.push(Term::int((*l).clone(), (*r).clone()));
                next.push(Term::ext((*l).clone(), (*r).clone()));
                for w in weights {
                    next.push(Term::prob(w.clone(), (*l).clone(), (*r).clone()));
                }
            }
        }
        by_depth.push(next);
    }
    by_depth.into_iter().flatten().collect()
}

/// The completeness corpus: alphabet `{a, b}`, depth at most 2, at most two prefixes and
/// weight one half.
pub fn completeness_corpus() -> Vec<Term> {
    exhaustive(&["a", "b"], 2, 2, &[Q::new(1, 2)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axioms::AxiomId;
    use std::collections::BTreeSet;

    #[test]
    fn generators_are_seeded() {
        let a: Vec<Term> = (0..20)
            .map({
                let mut g = Gen::new(7, &["a", "b"]).with_par();
                move |_| g.term(3)
            })
            .collect();
        let mut g = Gen::new(7, &["a", "b"]).with_par();
        let b: Vec<Term> = (0..20).map(|_| g.term(3)).collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|t| t.depth() <= 3));
        let mut g = Gen::new(8, &["a", "b"]);
        assert_ne!(a, (0..20).map(|_| g.term(3)).collect::<Vec<_>>());
    }

    #[test]
    fn tests_and_formulas() {
        let mut g = Gen::new(1, &["a", "b"]);
        for _ in 0..50 {
            let t = g.test(3, 2);
            assert!(!t.success_actions().is_empty());
            let f = g.formula(3, Logic::L);
            assert!(f.in_l() && f.depth() <= 3 && f.validate().is_ok());
            assert!(g.formula(3, Logic::F).validate().is_ok());
        }
    }

    #[test]
    fn instances_are_well_formed() {
        let mut g = Gen::new(2, &["a", "b"]);
        for id in AxiomId::ALL {
            for _ in 0..10 {
                let i = g.instance(id, 2);
                assert_eq!(i.id(), id);
                assert!(i.sides().is_ok(), "{id}: {i:?}");
                assert!(i.check_premises().is_ok(), "{id}: {i:?}");
            }
        }
    }

    #[test]
    fn exhaustive_corpus() {
        let c = completeness_corpus();
        let distinct: BTreeSet<String> = c.iter().map(|t| t.to_string()).collect();
        assert_eq!(distinct.len(), c.len());
        assert_eq!(c.len(), 121);
        assert!(c.iter().all(|t| t.depth() <= 2 && t.prefix_count() <= 2 && !t.has_par()));
    }
}
