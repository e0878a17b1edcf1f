//! Weak derivatives as vertex polytopes, each vertex carrying the chain of lifted steps that
//! reaches it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distribution::Dist;
use crate::geometry::{minkowski_with, reduce_with, Point};
use crate::lp::{Cmp, Lp};
use crate::rational::Q;
use crate::syntax::{ActSet, Label, Name};

use super::{Plts, SDist, StateId};

/// What a single state does inside a weak transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepChain {
    /// No further moves.
    Stay,
    /// Take transition `transition` (an index into the state's transition list), then continue
    /// from its target distribution.
    Step { transition: usize, then: Arc<Chain> },
}

/// A decomposition of a source distribution into weighted state occurrences, each followed by
/// its own step chain.  Weights of the occurrences of a state add up to its source weight.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Chain {
    pub parts: Vec<(StateId, Q, StepChain)>,
}

impl Chain {
    pub fn stay(d: &SDist) -> Chain {
        Chain { parts: d.iter().map(|(s, p)| (*s, p.clone(), StepChain::Stay)).collect() }
    }

    /// Number of steps along the longest path.
    pub fn length(&self) -> usize {
        self.parts
            .iter()
            .map(|(_, _, c)| match c {
                StepChain::Stay => 0,
                StepChain::Step { then, .. } => 1 + then.length(),
            })
            .max()
            .unwrap_or(0)
    }

    /// Replays the chain from `from`.  Every path must consist of `τ` steps, except for exactly
    /// one step labelled `visible` when that is given.  With `avoid_omega` no step may leave a
    /// state that enables a success action.  Returns the final distribution.
    pub fn replay(&self, g: &Plts, from: &SDist, visible: Option<&Label>, avoid_omega: bool) -> Option<SDist> {
        let mut got: BTreeMap<StateId, Q> = BTreeMap::new();
        for (s, p, _) in &self.parts {
            if !p.is_positive() {
                return None;
            }
            *got.entry(*s).or_insert_with(Q::zero) += p;
        }
        if got.len() != from.len() || got.iter().any(|(s, p)| from.weight(s) != *p) {
            return None;
        }
        let mut acc: BTreeMap<StateId, Q> = BTreeMap::new();
        for (s, p, step) in &self.parts {
            let end = replay_step(g, *s, step, visible, avoid_omega)?;
            for (t, q) in end.iter() {
                *acc.entry(*t).or_insert_with(Q::zero) += p * q;
            }
        }
        Dist::from_pairs(acc).ok()
    }

    fn scaled(&self, by: &Q) -> impl Iterator<Item = (StateId, Q, StepChain)> + '_ {
        let by = by.clone();
        self.parts.iter().map(move |(s, p, c)| (*s, p * &by, c.clone()))
    }
}

fn replay_step(g: &Plts, s: StateId, step: &StepChain, visible: Option<&Label>, avoid: bool) -> Option<SDist> {
    match step {
        StepChain::Stay => visible.is_none().then(|| Dist::point(s)),
        StepChain::Step { transition, then } => {
            if avoid && g.enables_success(s) {
                return None;
            }
            let t = g.transitions(s).get(*transition)?;
            let rest = match (&t.label, visible) {
                (Label::Tau, v) => v,
                (l, Some(v)) if l == v => None,
                _ => return None,
            };
            then.replay(g, &t.target, rest, avoid)
        }
    }
}

/// A finite vertex list of distributions, each with a chain from the source.
#[derive(Debug, Clone, Default)]
pub struct DistPolytope {
    pub vertices: Vec<(SDist, Chain)>,
}

impl DistPolytope {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn dists(&self) -> impl Iterator<Item = &SDist> {
        self.vertices.iter().map(|v| &v.0)
    }

    /// Writes `target` as a convex combination of the vertices and returns the combined chain.
    pub fn decompose(&self, target: &SDist) -> Option<Chain> {
        if let Some((_, c)) = self.vertices.iter().find(|(d, _)| d == target) {
            return Some(c.clone());
        }
        let mut lp = Lp::new();
        let lam: Vec<usize> = self.vertices.iter().map(|_| lp.var()).collect();
        lp.constrain(lam.iter().map(|&v| (v, Q::one())), Cmp::Eq, Q::one());
        let states: BTreeSet<StateId> =
            self.vertices.iter().flat_map(|(d, _)| d.support().copied()).chain(target.support().copied()).collect();
        for s in states {
            let row = lam.iter().zip(&self.vertices).map(|(&v, (d, _))| (v, d.weight(&s)));
            lp.constrain(row, Cmp::Eq, target.weight(&s));
        }
        let x = lp.solve()?;
        let mut parts = Vec::new();
        for (w, (_, c)) in x.iter().zip(&self.vertices) {
            if w.is_positive() {
                parts.extend(c.scaled(w));
            }
        }
        Some(Chain { parts })
    }

    pub fn contains(&self, target: &SDist) -> bool {
        self.decompose(target).is_some()
    }

    /// Same vertex set as `other`.
    pub fn same_set(&self, other: &DistPolytope) -> bool {
        let a: BTreeSet<&SDist> = self.dists().collect();
        let b: BTreeSet<&SDist> = other.dists().collect();
        a == b
    }
}

/// Reduces a list of distributions to the vertices of their hull, keeping payloads.
pub(crate) fn reduce_dists<T>(items: Vec<(SDist, T)>) -> Vec<(SDist, T)> {
    if items.len() <= 1 {
        return items;
    }
    let states: BTreeSet<StateId> = items.iter().flat_map(|(d, _)| d.support().copied()).collect();
    let states: Vec<StateId> = states.into_iter().collect();
    let pts: Vec<(Point, (SDist, T))> =
        items.into_iter().map(|(d, t)| (states.iter().map(|s| d.weight(s)).collect(), (d, t))).collect();
    reduce_with(pts).into_iter().map(|(_, x)| x).collect()
}

type StatePoly = Arc<Vec<(SDist, StepChain)>>;

/// Memoised weak-derivative computations over a frozen pLTS.  With `avoid_omega` set, no move is
/// taken from a state that enables a success action.
pub struct Derivatives<'g> {
    g: &'g Plts,
    avoid_omega: bool,
    tau: HashMap<StateId, StatePoly>,
    act: HashMap<(StateId, Name), StatePoly>,
    refusal: HashMap<(StateId, ActSet), Option<StepChain>>,
}

/// The memo tables of a [`Derivatives`], detached from the pLTS borrow.  Entries stay valid while
/// the pLTS only grows.
#[derive(Default)]
pub struct DerivCache {
    avoid_omega: bool,
    tau: HashMap<StateId, StatePoly>,
    act: HashMap<(StateId, Name), StatePoly>,
    refusal: HashMap<(StateId, ActSet), Option<StepChain>>,
}

impl DerivCache {
    pub fn omega_avoiding() -> DerivCache {
        DerivCache { avoid_omega: true, ..DerivCache::default() }
    }
}

impl<'g> Derivatives<'g> {
    pub fn new(g: &'g Plts) -> Derivatives<'g> {
        Derivatives::resume(g, DerivCache::default())
    }

    pub fn omega_avoiding(g: &'g Plts) -> Derivatives<'g> {
        Derivatives::resume(g, DerivCache::omega_avoiding())
    }

    pub fn resume(g: &'g Plts, c: DerivCache) -> Derivatives<'g> {
        Derivatives { g, avoid_omega: c.avoid_omega, tau: c.tau, act: c.act, refusal: c.refusal }
    }

    pub fn into_cache(self) -> DerivCache {
        DerivCache { avoid_omega: self.avoid_omega, tau: self.tau, act: self.act, refusal: self.refusal }
    }

    pub fn plts(&self) -> &'g Plts {
        self.g
    }

    pub fn avoids_omega(&self) -> bool {
        self.avoid_omega
    }

    fn frozen(&self, s: StateId) -> bool {
        self.avoid_omega && self.g.enables_success(s)
    }

    /// Vertices of `{Δ′ : δs ⇒τ̂ Δ′}`.
    pub fn tau_state(&mut self, s: StateId) -> StatePoly {
        if let Some(p) = self.tau.get(&s) {
            return p.clone();
        }
        let mut items = vec![(Dist::point(s), StepChain::Stay)];
        if !self.frozen(s) {
            for (i, t) in self.g.transitions(s).iter().enumerate() {
                if t.label == Label::Tau {
                    let sub = self.weak_tau(&t.target);
                    for (d, c) in sub.vertices {
                        items.push((d, StepChain::Step { transition: i, then: Arc::new(c) }));
                    }
                }
            }
        }
        let out = Arc::new(reduce_dists(items));
        self.tau.insert(s, out.clone());
        out
    }

    /// Vertices of `{Δ′ : δs ⇒â Δ′}`; empty when no such derivative exists.  A success name
    /// matches its success transitions.
    pub fn act_state(&mut self, s: StateId, a: &Name) -> StatePoly {
        let key = (s, a.clone());
        if let Some(p) = self.act.get(&key) {
            return p.clone();
        }
        let mut items = Vec::new();
        if !self.frozen(s) {
            for (i, t) in self.g.transitions(s).iter().enumerate() {
                let sub = match &t.label {
                    Label::Tau => self.weak_act(&t.target, a),
                    Label::Visible(b) | Label::Success(b) if b == a => self.weak_tau(&t.target),
                    _ => continue,
                };
                for (d, c) in sub.vertices {
                    items.push((d, StepChain::Step { transition: i, then: Arc::new(c) }));
                }
            }
        }
        let out = Arc::new(reduce_dists(items));
        self.act.insert(key, out.clone());
        out
    }

    /// Vertices of `{Δ′ : Δ ⇒τ̂ Δ′}`.
    pub fn weak_tau(&mut self, d: &SDist) -> DistPolytope {
        let parts: Vec<(StateId, Q, StatePoly)> = d.iter().map(|(s, p)| (*s, p.clone(), self.tau_state(*s))).collect();
        mix_state_polys(&parts)
    }

    /// Vertices of `{Δ′ : Δ ⇒â Δ′}`.
    pub fn weak_act(&mut self, d: &SDist, a: &Name) -> DistPolytope {
        let mut parts = Vec::with_capacity(d.len());
        for (s, p) in d.iter() {
            let poly = self.act_state(*s, a);
            if poly.is_empty() {
                return DistPolytope::default();
            }
            parts.push((*s, p.clone(), poly));
        }
        mix_state_polys(&parts)
    }

    /// A chain from `δs` to a distribution all of whose states refuse `x`, if one exists.
    pub fn refusal_state(&mut self, s: StateId, x: &ActSet) -> Option<StepChain> {
        let key = (s, x.clone());
        if let Some(r) = self.refusal.get(&key) {
            return r.clone();
        }
        let out = if self.g.refuses(s, x) {
            Some(StepChain::Stay)
        } else if self.frozen(s) {
            None
        } else {
            let mut found = None;
            for (i, t) in self.g.transitions(s).iter().enumerate() {
                if t.label == Label::Tau {
                    if let Some(c) = self.can_weakly_refuse(&t.target, x) {
                        found = Some(StepChain::Step { transition: i, then: Arc::new(c) });
                        break;
                    }
                }
            }
            found
        };
        self.refusal.insert(key, out.clone());
        out
    }

    /// `Δ ⇒τ̂ Δ′ ↛X` for some `Δ′`, with the chain reaching it.
    pub fn can_weakly_refuse(&mut self, d: &SDist, x: &ActSet) -> Option<Chain> {
        let mut parts = Vec::with_capacity(d.len());
        for (s, p) in d.iter() {
            parts.push((*s, p.clone(), self.refusal_state(*s, x)?));
        }
        Some(Chain { parts })
    }

    pub fn state_can_weakly_refuse(&mut self, s: StateId, x: &ActSet) -> bool {
        self.refusal_state(s, x).is_some()
    }
}

fn mix_state_polys(parts: &[(StateId, Q, StatePoly)]) -> DistPolytope {
    if parts.iter().all(|(_, _, p)| p.len() == 1) {
        let mut acc: BTreeMap<StateId, Q> = BTreeMap::new();
        let mut chain = Chain::default();
        for (s, w, poly) in parts {
            let (d, c) = &poly[0];
            for (t, q) in d.iter() {
                *acc.entry(*t).or_insert_with(Q::zero) += w * q;
            }
            chain.parts.push((*s, w.clone(), c.clone()));
        }
        let d = Dist::from_pairs(acc).expect("mix of distributions");
        return DistPolytope { vertices: vec![(d, chain)] };
    }
    let states: BTreeSet<StateId> =
        parts.iter().flat_map(|(_, _, p)| p.iter().flat_map(|(d, _)| d.support().copied())).collect();
    let states: Vec<StateId> = states.into_iter().collect();
    let summands: Vec<(Q, Vec<(Point, (StateId, Q, StepChain))>)> = parts
        .iter()
        .map(|(s, w, poly)| {
            let verts = poly
                .iter()
                .map(|(d, c)| (states.iter().map(|t| d.weight(t)).collect(), (*s, w.clone(), c.clone())))
                .collect();
            (w.clone(), verts)
        })
        .collect();
    let mixed = minkowski_with(&summands, states.len(), Chain::default(), |acc, part| {
        let mut c = acc.clone();
        c.parts.push(part.clone());
        c
    });
    let vertices = mixed
        .into_iter()
        .map(|(p, c)| {
            let d = Dist::from_pairs(states.iter().cloned().zip(p)).expect("mix of distributions");
            (d, c)
        })
        .collect();
    DistPolytope { vertices }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::interp;
    use crate::syntax::{act_set, parse, Term};

    fn t(s: &str) -> Term {
        parse(s).unwrap()
    }

    fn sd(g: &Plts, pairs: &[(&str, Q)]) -> SDist {
        Dist::from_pairs(pairs.iter().map(|(s, p)| (g.lookup(&t(s)).unwrap(), p.clone()))).unwrap()
    }

    #[test]
    fn lifting_example_is_reachable() {
        let mut g = Plts::new();
        let src = g.add_term(&t("(a |~| b) |+1/2| (a |~| c)"));
        let tgt = g.add_term(&t("a |+1/2| ((a |~| b) |+1/2| c)"));
        let mut der = Derivatives::new(&g);
        let poly = der.weak_tau(&src);
        let chain = poly.decompose(&tgt).expect("reachable");
        assert_eq!(chain.replay(&g, &src, None, false), Some(tgt.clone()));
        // Every vertex chain replays to its vertex.
        for (d, c) in &poly.vertices {
            assert_eq!(c.replay(&g, &src, None, false).as_ref(), Some(d));
        }
    }

    #[test]
    fn nil_has_only_itself() {
        let (g, d) = Plts::build(&Term::Nil);
        let mut der = Derivatives::new(&g);
        let poly = der.weak_tau(&d);
        assert_eq!(poly.len(), 1);
        assert_eq!(poly.vertices[0].0, d);
        assert!(der.can_weakly_refuse(&d, &act_set(["a", "b"])).is_some());
    }

    #[test]
    fn internal_choice_reaches_probabilistic_split() {
        let mut g = Plts::new();
        let qc = g.add_term(&t("(a |+1/2| b) |~| (a |+1/2| b)"));
        let pc = g.add_term(&t("a |+1/2| b"));
        let mut der = Derivatives::new(&g);
        assert!(der.weak_tau(&qc).contains(&pc));
        assert!(!der.weak_tau(&pc).contains(&qc));
    }

    #[test]
    fn weak_action_derivatives() {
        let (g, d) = Plts::build(&t("a |~| b"));
        let mut der = Derivatives::new(&g);
        let poly = der.weak_act(&d, &Name::new("a"));
        assert_eq!(poly.len(), 1);
        assert_eq!(g.term(*poly.vertices[0].0.support().next().unwrap()), &Term::Nil);
        let (g, d) = Plts::build(&t("a |+1/2| b"));
        let mut der = Derivatives::new(&g);
        assert!(der.weak_act(&d, &Name::new("a")).is_empty());
        let (g, d) = Plts::build(&t("a.(a |+1/2| b)"));
        let mut der = Derivatives::new(&g);
        let after = sd(&g, &[("a", Q::new(1, 2)), ("b", Q::new(1, 2))]);
        let poly = der.weak_act(&d, &Name::new("a"));
        assert!(poly.contains(&after));
        let c = poly.decompose(&after).unwrap();
        assert_eq!(c.replay(&g, &d, Some(&Label::visible("a")), false), Some(after));
    }

    #[test]
    fn weak_refusals() {
        let mut g = Plts::new();
        let a = g.add_term(&t("a"));
        let mixed = g.add_term(&t("(a [] a) |+1/2| (a [] b)"));
        let mut der = Derivatives::new(&g);
        let b = act_set(["b"]);
        assert!(der.can_weakly_refuse(&a, &b).is_some());
        assert!(der.can_weakly_refuse(&mixed, &b).is_none());
        let (g, d) = Plts::build(&t("b |~| a"));
        let mut der = Derivatives::new(&g);
        let c = der.can_weakly_refuse(&d, &b).unwrap();
        let end = c.replay(&g, &d, None, false).unwrap();
        assert!(end.support().all(|s| g.refuses(*s, &b)));
    }

    #[test]
    fn omega_avoiding_stops_at_success() {
        // After the synchronisation the state enables w, so nothing past it is explored.
        let (g, d) = Plts::build(&t("(w [] a.b) |[a]| (a |~| a.b)"));
        let mut plain = Derivatives::new(&g);
        let mut avoid = Derivatives::omega_avoiding(&g);
        assert_eq!(avoid.weak_tau(&d).len(), 1);
        assert!(plain.weak_tau(&d).len() >= avoid.weak_tau(&d).len());
        let (g, d) = Plts::build(&t("a.(b |~| c)"));
        let mut plain = Derivatives::new(&g);
        let mut avoid = Derivatives::omega_avoiding(&g);
        let a = Name::new("a");
        assert!(plain.weak_act(&d, &a).same_set(&avoid.weak_act(&d, &a)));
    }

    #[test]
    fn mix_matches_per_component() {
        let mut g = Plts::new();
        let l = g.add_term(&t("a |~| (b |~| c)"));
        let r = g.add_term(&t("(a |~| b) |+1/3| c"));
        let mix = Dist::binary_mix(&Q::new(1, 2), &l, &r);
        let mut der = Derivatives::new(&g);
        let whole = der.weak_tau(&mix);
        let pl = der.weak_tau(&l);
        let pr = der.weak_tau(&r);
        let mut combos = Vec::new();
        for (x, _) in &pl.vertices {
            for (y, _) in &pr.vertices {
                combos.push((Dist::binary_mix(&Q::new(1, 2), x, y), ()));
            }
        }
        let reduced: BTreeSet<SDist> = reduce_dists(combos).into_iter().map(|x| x.0).collect();
        let got: BTreeSet<SDist> = whole.dists().cloned().collect();
        assert_eq!(got, reduced);
        let _ = interp(&t("a"));
    }
}
