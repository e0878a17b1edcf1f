//! Resolutions: fully probabilistic automata that resolve the nondeterminism of a distribution,
//! their success tuples, and the link to vector outcomes.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::Dist;
use crate::geometry::{OutcomeSet, Point};
use crate::lp::{Cmp, Lp};
use crate::plts::{Plts, SDist, StateId};
use crate::rational::Q;
use crate::syntax::{Label, Name};
use crate::testing::results_vector_memo;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct ResId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResState {
    /// The pLTS state this automaton state stands for.
    pub resolves: StateId,
    pub step: Option<(Label, Dist<ResId>)>,
}

/// A finite fully probabilistic automaton with its resolving function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub states: Vec<ResState>,
    pub initial: Dist<ResId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolutionError {
    #[error("more than {0} resolutions")]
    TooMany(usize),
    #[error("target {0:?} is not an outcome of the distribution")]
    Unreachable(Vec<Q>),
}

impl Resolution {
    fn get(&self, r: ResId) -> Option<&ResState> {
        self.states.get(r.0 as usize)
    }

    fn push(&mut self, s: ResState) -> ResId {
        self.states.push(s);
        ResId(self.states.len() as u32 - 1)
    }

    /// `f(Θ)`.
    pub fn image(&self, d: &Dist<ResId>) -> Option<SDist> {
        let mut acc: BTreeMap<StateId, Q> = BTreeMap::new();
        for (r, p) in d.iter() {
            *acc.entry(self.get(*r)?.resolves).or_insert_with(Q::zero) += p;
        }
        Dist::from_pairs(acc).ok()
    }

    /// Appends `other`, renumbering its states; returns its renumbered initial distribution.
    fn graft(&mut self, other: Resolution) -> Dist<ResId> {
        let off = self.states.len() as u32;
        let shift = |r: &ResId| ResId(r.0 + off);
        for s in other.states {
            let step = s.step.map(|(l, d)| (l, d.map(shift)));
            self.states.push(ResState { resolves: s.resolves, step });
        }
        other.initial.map(shift)
    }

    fn empty() -> Resolution {
        Resolution { states: Vec::new(), initial: Dist::point(ResId(0)) }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("resolutions serialise")
    }
}

/// The three resolution clauses, plus well-formedness and acyclicity.
pub fn check_resolution(g: &Plts, res: &Resolution, delta: &SDist) -> bool {
    let n = res.states.len();
    if res.states.iter().any(|s| s.resolves.index() >= g.num_states()) {
        return false;
    }
    let in_range = |d: &Dist<ResId>| d.support().all(|r| (r.0 as usize) < n);
    if !in_range(&res.initial) || res.states.iter().any(|s| s.step.as_ref().is_some_and(|(_, d)| !in_range(d))) {
        return false;
    }
    if res.image(&res.initial).as_ref() != Some(delta) {
        return false;
    }
    for s in &res.states {
        match &s.step {
            None => {
                if !g.is_deadlocked(s.resolves) {
                    return false;
                }
            }
            Some((l, d)) => {
                let Some(img) = res.image(d) else { return false };
                if !g.transitions(s.resolves).iter().any(|t| &t.label == l && t.target == img) {
                    return false;
                }
            }
        }
    }
    acyclic(res)
}

fn acyclic(res: &Resolution) -> bool {
    // 0 = unvisited, 1 = on stack, 2 = done.
    fn visit(res: &Resolution, r: usize, mark: &mut [u8]) -> bool {
        match mark[r] {
            1 => return false,
            2 => return true,
            _ => {}
        }
        mark[r] = 1;
        if let Some((_, d)) = &res.states[r].step {
            for u in d.support() {
                if !visit(res, u.0 as usize, mark) {
                    return false;
                }
            }
        }
        mark[r] = 2;
        true
    }
    let mut mark = vec![0u8; res.states.len()];
    (0..res.states.len()).all(|r| visit(res, r, &mut mark))
}

/// `Pr_R(σ, Θ°)`.
pub fn pr(res: &Resolution, sigma: &[Label]) -> Q {
    pr_dist(res, &res.initial, sigma)
}

fn pr_dist(res: &Resolution, d: &Dist<ResId>, sigma: &[Label]) -> Q {
    d.iter().map(|(r, p)| p * &pr_state(res, *r, sigma)).sum()
}

fn pr_state(res: &Resolution, r: ResId, sigma: &[Label]) -> Q {
    let Some((first, rest)) = sigma.split_first() else { return Q::one() };
    match &res.states[r.0 as usize].step {
        Some((l, d)) if l == first => pr_dist(res, d, rest),
        _ => Q::zero(),
    }
}

/// The success tuple `W(R)`, by recursion over the automaton.
pub fn w_of(res: &Resolution, omega: &[Name]) -> Point {
    fn state(res: &Resolution, r: ResId, omega: &[Name], memo: &mut HashMap<ResId, Point>) -> Point {
        if let Some(v) = memo.get(&r) {
            return v.clone();
        }
        let v = match &res.states[r.0 as usize].step {
            None => vec![Q::zero(); omega.len()],
            Some((l, d)) => {
                let mut v = dist(res, d, omega, memo);
                if let Label::Success(n) = l {
                    if let Some(k) = omega.iter().position(|m| m == n) {
                        v[k] = Q::one();
                    }
                }
                v
            }
        };
        memo.insert(r, v.clone());
        v
    }
    fn dist(res: &Resolution, d: &Dist<ResId>, omega: &[Name], memo: &mut HashMap<ResId, Point>) -> Point {
        let mut acc = vec![Q::zero(); omega.len()];
        for (r, p) in d.iter() {
            for (a, x) in acc.iter_mut().zip(state(res, *r, omega, memo)) {
                *a += p * &x;
            }
        }
        acc
    }
    dist(res, &res.initial, omega, &mut HashMap::new())
}

/// `W(R)` by summing `Pr_R` over every label sequence that ends with its only occurrence of
/// each success action.
pub fn w_of_by_sequences(res: &Resolution, omega: &[Name]) -> Point {
    let mut seqs: BTreeSet<Vec<Label>> = BTreeSet::new();
    fn paths(res: &Resolution, r: ResId, prefix: &mut Vec<Label>, out: &mut BTreeSet<Vec<Label>>) {
        out.insert(prefix.clone());
        if let Some((l, d)) = &res.states[r.0 as usize].step {
            prefix.push(l.clone());
            for u in d.support() {
                paths(res, *u, prefix, out);
            }
            prefix.pop();
        }
    }
    for r in res.initial.support() {
        paths(res, *r, &mut Vec::new(), &mut seqs);
    }
    omega
        .iter()
        .map(|w| {
            let lw = Label::Success(w.clone());
            seqs.iter()
                .filter(|s| s.last() == Some(&lw) && s.iter().filter(|l| **l == lw).count() == 1)
                .map(|s| pr(res, s))
                .sum()
        })
        .collect()
}

/// Every resolution that makes one pure choice at each state occurrence of the unrolled tree.
pub fn enumerate_deterministic_resolutions(
    g: &Plts,
    delta: &SDist,
    limit: usize,
) -> Result<Vec<Resolution>, ResolutionError> {
    fn of_state(g: &Plts, s: StateId, limit: usize) -> Result<Vec<Resolution>, ResolutionError> {
        if g.is_deadlocked(s) {
            let mut r = Resolution::empty();
            r.push(ResState { resolves: s, step: None });
            return Ok(vec![r]);
        }
        let mut out = Vec::new();
        for t in g.transitions(s) {
            for sub in of_dist(g, &t.target, limit)? {
                let mut r = Resolution::empty();
                let root = r.push(ResState { resolves: s, step: None });
                let target = r.graft(sub);
                r.states[root.0 as usize].step = Some((t.label.clone(), target));
                out.push(r);
                if out.len() > limit {
                    return Err(ResolutionError::TooMany(limit));
                }
            }
        }
        Ok(out)
    }
    fn of_dist(g: &Plts, d: &SDist, limit: usize) -> Result<Vec<Resolution>, ResolutionError> {
        let mut acc: Vec<(Resolution, Vec<(ResId, Q)>)> =
            vec![(Resolution { states: Vec::new(), initial: Dist::point(ResId(0)) }, Vec::new())];
        for (s, p) in d.iter() {
            let options = of_state(g, *s, limit)?;
            let mut next = Vec::with_capacity(acc.len() * options.len());
            for (base, init) in &acc {
                for o in &options {
                    let mut r = base.clone();
                    let root = r.graft(o.clone());
                    let mut init = init.clone();
                    init.extend(root.iter().map(|(x, q)| (*x, p * q)));
                    next.push((r, init));
                    if next.len() > limit {
                        return Err(ResolutionError::TooMany(limit));
                    }
                }
            }
            acc = next;
        }
        Ok(acc
            .into_iter()
            .map(|(mut r, init)| {
                r.initial = Dist::from_pairs(init).expect("weights of a distribution");
                r
            })
            .collect())
    }
    let mut all = of_dist(g, delta, limit)?;
    all.sort_by_key(|r| serde_json::to_string(r).expect("resolutions serialise"));
    Ok(all)
}

/// The distinct success tuples of deterministic resolutions of `Δ`, each with one resolution
/// attaining it.
pub fn deterministic_tuples(
    g: &Plts,
    delta: &SDist,
    omega: &[Name],
    limit: usize,
) -> Result<BTreeMap<Point, Resolution>, ResolutionError> {
    type Memo = HashMap<StateId, BTreeMap<Point, Resolution>>;
    fn of_state(
        g: &Plts,
        s: StateId,
        omega: &[Name],
        limit: usize,
        memo: &mut Memo,
    ) -> Result<BTreeMap<Point, Resolution>, ResolutionError> {
        if let Some(x) = memo.get(&s) {
            return Ok(x.clone());
        }
        let mut out = BTreeMap::new();
        if g.is_deadlocked(s) {
            let mut r = Resolution::empty();
            r.push(ResState { resolves: s, step: None });
            out.insert(vec![Q::zero(); omega.len()], r);
        }
        for t in g.transitions(s) {
            for (_, sub) in of_dist(g, &t.target, omega, limit, memo)? {
                let mut r = Resolution::empty();
                let root = r.push(ResState { resolves: s, step: None });
                let target = r.graft(sub);
                r.states[root.0 as usize].step = Some((t.label.clone(), target));
                out.entry(w_of(&r, omega)).or_insert(r);
                if out.len() > limit {
                    return Err(ResolutionError::TooMany(limit));
                }
            }
        }
        memo.insert(s, out.clone());
        Ok(out)
    }
    fn of_dist(
        g: &Plts,
        d: &SDist,
        omega: &[Name],
        limit: usize,
        memo: &mut Memo,
    ) -> Result<BTreeMap<Point, Resolution>, ResolutionError> {
        let mut acc: Vec<(Resolution, Vec<(ResId, Q)>)> = vec![(Resolution::empty(), Vec::new())];
        for (s, p) in d.iter() {
            let options = of_state(g, *s, omega, limit, memo)?;
            let mut next: BTreeMap<Point, (Resolution, Vec<(ResId, Q)>)> = BTreeMap::new();
            for (base, init) in &acc {
                for o in options.values() {
                    let mut r = base.clone();
                    let root = r.graft(o.clone());
                    let mut init = init.clone();
                    init.extend(root.iter().map(|(x, q)| (*x, p * q)));
                    // Partial tuple of the occurrences placed so far.
                    let mut probe = r.clone();
                    let mass: Q = init.iter().map(|x| &x.1).sum();
                    probe.initial = Dist::from_pairs(init.iter().map(|(x, q)| (*x, q / &mass))).expect("positive mass");
                    let key: Point = w_of(&probe, omega).into_iter().map(|v| v * &mass).collect();
                    next.entry(key).or_insert((r, init));
                    if next.len() > limit {
                        return Err(ResolutionError::TooMany(limit));
                    }
                }
            }
            acc = next.into_values().collect();
        }
        let mut out = BTreeMap::new();
        for (mut r, init) in acc {
            r.initial = Dist::from_pairs(init).expect("weights of a distribution");
            out.entry(w_of(&r, omega)).or_insert(r);
        }
        Ok(out)
    }
    of_dist(g, delta, omega, limit, &mut HashMap::new())
}

/// Hull of the success tuples of all deterministic resolutions.
pub fn w_set(g: &Plts, delta: &SDist, omega: &[Name], limit: usize) -> Result<OutcomeSet, ResolutionError> {
    let pts = deterministic_tuples(g, delta, omega, limit)?.into_keys().collect();
    Ok(OutcomeSet::hull(omega.to_vec(), pts))
}

/// A resolution of `Δ` whose success tuple is `target`, following the constructive recursion:
/// a state's outcome is split over its moves, a distribution's over its support.
pub fn synthesize_resolution(
    g: &Plts,
    delta: &SDist,
    target: &[Q],
    omega: &[Name],
) -> Result<Resolution, ResolutionError> {
    let mut memo = HashMap::new();
    let mut out = Resolution { states: Vec::new(), initial: Dist::point(ResId(0)) };
    let init = synth_dist(g, delta, target, omega, &mut memo, &mut out)
        .ok_or_else(|| ResolutionError::Unreachable(target.to_vec()))?;
    out.initial = init;
    Ok(out)
}

type VMemo = HashMap<StateId, OutcomeSet>;

fn vertices_of(g: &Plts, d: &SDist, omega: &[Name], memo: &mut VMemo) -> Vec<Point> {
    results_vector_memo(g, d, omega, memo).points
}

fn synth_dist(
    g: &Plts,
    d: &SDist,
    target: &[Q],
    omega: &[Name],
    memo: &mut VMemo,
    out: &mut Resolution,
) -> Option<Dist<ResId>> {
    // target = Σ Δ(s_j)·o_j with o_j in the outcome set of s_j.
    let parts: Vec<(StateId, Q, Vec<Point>)> =
        d.iter().map(|(s, p)| (*s, p.clone(), vertices_of(g, &Dist::point(*s), omega, memo))).collect();
    let mut lp = Lp::new();
    let vars: Vec<Vec<usize>> = parts.iter().map(|(_, _, vs)| vs.iter().map(|_| lp.var()).collect()).collect();
    for vs in &vars {
        lp.constrain(vs.iter().map(|&v| (v, Q::one())), Cmp::Eq, Q::one());
    }
    for k in 0..omega.len() {
        let mut row = Vec::new();
        for ((_, p, verts), vs) in parts.iter().zip(&vars) {
            for (v, x) in vs.iter().zip(verts) {
                row.push((*v, p * &x[k]));
            }
        }
        lp.constrain(row, Cmp::Eq, target[k].clone());
    }
    let x = lp.solve()?;
    let mut init = Vec::new();
    for ((s, p, verts), vs) in parts.iter().zip(&vars) {
        let mut o = vec![Q::zero(); omega.len()];
        for (v, pt) in vs.iter().zip(verts) {
            for (a, c) in o.iter_mut().zip(pt) {
                *a += &x[*v] * c;
            }
        }
        let sub = synth_state(g, *s, &o, omega, memo, out)?;
        init.extend(sub.iter().map(|(r, q)| (*r, p * q)));
    }
    Dist::from_pairs(init).ok()
}

fn synth_state(
    g: &Plts,
    s: StateId,
    target: &[Q],
    omega: &[Name],
    memo: &mut VMemo,
    out: &mut Resolution,
) -> Option<Dist<ResId>> {
    if g.is_deadlocked(s) {
        if target.iter().any(|x| !x.is_zero()) {
            return None;
        }
        return Some(Dist::point(out.push(ResState { resolves: s, step: None })));
    }
    // target = Σ_i p_i·α_i!(o_i) with o_i in the outcome set of the i-th move's target.
    let moves: Vec<(usize, Option<usize>, Vec<Point>)> = g
        .transitions(s)
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let k = match &t.label {
                Label::Success(n) => omega.iter().position(|m| m == n),
                _ => None,
            };
            (i, k, vertices_of(g, &t.target, omega, memo))
        })
        .collect();
    let mut lp = Lp::new();
    let vars: Vec<Vec<usize>> = moves.iter().map(|(_, _, vs)| vs.iter().map(|_| lp.var()).collect()).collect();
    lp.constrain(vars.iter().flatten().map(|&v| (v, Q::one())), Cmp::Eq, Q::one());
    for c in 0..omega.len() {
        let mut row = Vec::new();
        for ((_, k, verts), vs) in moves.iter().zip(&vars) {
            for (v, pt) in vs.iter().zip(verts) {
                let coord = if *k == Some(c) { Q::one() } else { pt[c].clone() };
                row.push((*v, coord));
            }
        }
        lp.constrain(row, Cmp::Eq, target[c].clone());
    }
    let x = lp.solve()?;
    let mut init = Vec::new();
    for ((i, _, verts), vs) in moves.iter().zip(&vars) {
        let p: Q = vs.iter().map(|v| &x[*v]).sum();
        if !p.is_positive() {
            continue;
        }
        let mut o = vec![Q::zero(); omega.len()];
        for (v, pt) in vs.iter().zip(verts) {
            let w = &x[*v] / &p;
            for (a, c) in o.iter_mut().zip(pt) {
                *a += &w * c;
            }
        }
        let t = &g.transitions(s)[*i];
        let r = out.push(ResState { resolves: s, step: None });
        let sub = synth_dist(g, &t.target, &o, omega, memo, out)?;
        out.states[r.0 as usize].step = Some((t.label.clone(), sub));
        init.push((r, p));
    }
    Dist::from_pairs(init).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse, Term};
    use crate::testing::{apply_test, results_vector};

    fn tc_qc() -> crate::testing::TestApplication {
        apply_test(&parse("a.w1 [] b.w2").unwrap(), &parse("a |~| b").unwrap()).unwrap()
    }

    #[test]
    fn deadlock_has_one_resolution() {
        let (g, d) = Plts::build(&Term::Nil);
        let all = enumerate_deterministic_resolutions(&g, &d, 10).unwrap();
        assert_eq!(all.len(), 1);
        assert!(check_resolution(&g, &all[0], &d));
        let w = [Name::new("w1")];
        assert_eq!(w_of(&all[0], &w), vec![Q::zero()]);
        assert_eq!(pr(&all[0], &[]), Q::one());
    }

    #[test]
    fn fixture_resolutions() {
        let app = tc_qc();
        let all = enumerate_deterministic_resolutions(&app.plts, &app.initial, 100).unwrap();
        assert_eq!(all.len(), 2);
        let mut ws: Vec<Point> = all.iter().map(|r| w_of(r, &app.omega)).collect();
        ws.sort();
        assert_eq!(ws, vec![vec![Q::zero(), Q::one()], vec![Q::one(), Q::zero()]]);
        for r in &all {
            assert!(check_resolution(&app.plts, r, &app.initial));
            assert_eq!(w_of(r, &app.omega), w_of_by_sequences(r, &app.omega));
        }
        let ws = w_set(&app.plts, &app.initial, &app.omega, 100).unwrap();
        assert_eq!(ws, app.results_vector());
    }

    #[test]
    fn synthesis_hits_interior_points() {
        let app = tc_qc();
        let mid = vec![Q::new(1, 3), Q::new(2, 3)];
        let r = synthesize_resolution(&app.plts, &app.initial, &mid, &app.omega).unwrap();
        assert!(check_resolution(&app.plts, &r, &app.initial));
        assert_eq!(w_of(&r, &app.omega), mid);
        assert!(synthesize_resolution(&app.plts, &app.initial, &[Q::one(), Q::one()], &app.omega).is_err());
    }

    #[test]
    fn broken_resolutions_are_rejected() {
        let app = tc_qc();
        let mut r = enumerate_deterministic_resolutions(&app.plts, &app.initial, 100).unwrap().remove(0);
        let last = r.states.len() - 1;
        // Cutting the final step leaves a non-deadlocked state without a move.
        let mut cut = r.clone();
        for s in cut.states.iter_mut() {
            if s.step.is_some() && !app.plts.is_deadlocked(s.resolves) {
                let ok = s.step.as_ref().unwrap().1.support().all(|x| x.0 as usize == last);
                if ok {
                    s.step = None;
                }
            }
        }
        assert!(!check_resolution(&app.plts, &cut, &app.initial));
        r.states[0].resolves = StateId(app.plts.num_states() as u32 - 1);
        assert!(!check_resolution(&app.plts, &r, &app.initial));
    }

    #[test]
    fn sequence_probabilities() {
        let app = apply_test(&parse("w1 |~| w1").unwrap(), &Term::Nil).unwrap();
        let r = &enumerate_deterministic_resolutions(&app.plts, &app.initial, 10).unwrap()[0];
        let w1 = Label::Success(Name::new("w1"));
        assert_eq!(pr(r, &[Label::Tau, w1.clone()]), Q::one());
        assert_eq!(pr(r, &[w1]), Q::zero());
    }

    #[test]
    fn two_by_two_count() {
        let app = apply_test(&parse("(a.w1 |~| b.w1) |+1/2| (a.w1 |~| w1)").unwrap(), &parse("a").unwrap()).unwrap();
        let all = enumerate_deterministic_resolutions(&app.plts, &app.initial, 100).unwrap();
        assert_eq!(all.len(), 4);
        let v = results_vector(&app.plts, &app.initial, &app.omega);
        assert_eq!(w_set(&app.plts, &app.initial, &app.omega, 100).unwrap(), v);
    }
}
