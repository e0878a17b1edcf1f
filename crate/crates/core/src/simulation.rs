//! Simulation and failure simulation: checking finite relations, and deciding the preorders
//! through characteristic formulas.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{Dist, LiftWitness};
use crate::logic::{char_test, sat_witness, CharFormulas, CharTest, Formula, Joint, Logic, SatWitness};
use crate::lp::{Cmp, Lp};
use crate::plts::{Chain, DerivCache, Derivatives, Plts, SDist, StateId, StepChain};
use crate::rational::Q;
use crate::syntax::{ActSet, Label, Name, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SimKind {
    Simulation,
    FailureSimulation,
    /// Failure simulation over transitions that never leave a state enabling success.
    EFailureSimulation,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("pair {0} mentions state {1:?}, which is not in the pLTS")]
    Dangling(usize, StateId),
    #[error("pair {0}: witness does not match the clauses of its state")]
    Shape(usize),
}

/// How one transition of `s` is matched from `Θ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveMatch {
    pub transition: usize,
    /// `Θ′` with `Θ ⇒α̂ Θ′`.
    pub matched: SDist,
    pub chain: Chain,
    /// `Δ (lift R) Θ′`.
    pub lift: LiftWitness<StateId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairWitness {
    pub moves: Vec<MoveMatch>,
    /// The maximal refusal set of `s`, with a chain from `Θ` to a distribution refusing it.
    pub refusal: Option<(ActSet, Chain)>,
}

/// A finite relation between states and distributions of one pLTS, with a witness per pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimCertificate {
    pub kind: SimKind,
    pub pairs: Vec<(StateId, SDist)>,
    pub witnesses: Vec<PairWitness>,
}

/// Every name labelling a visible or success transition.
fn universe(g: &Plts) -> ActSet {
    let mut out = ActSet::new();
    for s in g.states() {
        for t in g.transitions(s) {
            if let Label::Visible(n) | Label::Success(n) = &t.label {
                out.insert(n.clone());
            }
        }
    }
    out
}

/// The transitions of `s` to match and the refusal set to match, under `kind`.
fn clauses(g: &Plts, kind: SimKind, univ: &ActSet, s: StateId) -> (Vec<usize>, Option<ActSet>) {
    let frozen = kind == SimKind::EFailureSimulation && g.enables_success(s);
    let moves = if frozen { Vec::new() } else { (0..g.transitions(s).len()).collect() };
    let refusal = match kind {
        SimKind::Simulation => None,
        _ if frozen || !g.is_stable(s) => None,
        _ => {
            let mut x = univ.clone();
            for t in g.transitions(s) {
                if let Label::Visible(n) | Label::Success(n) = &t.label {
                    x.remove(n);
                }
            }
            Some(x)
        }
    };
    (moves, refusal)
}

fn derivatives(g: &Plts, kind: SimKind) -> Derivatives<'_> {
    match kind {
        SimKind::EFailureSimulation => Derivatives::omega_avoiding(g),
        _ => Derivatives::new(g),
    }
}

fn check_refs(g: &Plts, pairs: &[(StateId, SDist)]) -> Result<(), SimError> {
    let n = g.num_states();
    for (i, (s, theta)) in pairs.iter().enumerate() {
        if let Some(bad) = std::iter::once(s).chain(theta.support()).find(|t| t.index() >= n) {
            return Err(SimError::Dangling(i, *bad));
        }
    }
    Ok(())
}

/// One feasibility problem: `Θ ⇒α̂ Θ′` through per-state vertex weights, and `Δ (lift R) Θ′`
/// through lifting weights.
fn match_move(
    der: &mut Derivatives,
    by_state: &HashMap<StateId, Vec<usize>>,
    pairs: &[(StateId, SDist)],
    label: &Label,
    delta: &SDist,
    theta: &SDist,
) -> Option<(SDist, Chain, LiftWitness<StateId>)> {
    let mut lp = Lp::new();
    let mut rows: BTreeMap<StateId, Vec<(usize, Q)>> = BTreeMap::new();
    let mut steps: Vec<(usize, StateId, StepChain, SDist)> = Vec::new();
    for (u, p) in theta.iter() {
        let poly = match label {
            Label::Tau => der.tau_state(*u),
            Label::Visible(a) | Label::Success(a) => der.act_state(*u, a),
        };
        if poly.is_empty() {
            return None;
        }
        let mut total = Vec::new();
        for (v, c) in poly.iter() {
            let x = lp.var();
            total.push((x, Q::one()));
            for (t, q) in v.iter() {
                rows.entry(*t).or_default().push((x, q.clone()));
            }
            steps.push((x, *u, c.clone(), v.clone()));
        }
        lp.constrain(total, Cmp::Eq, p.clone());
    }
    let mut lifts: Vec<(usize, StateId, usize)> = Vec::new();
    for (t, p) in delta.iter() {
        let cands = by_state.get(t)?;
        let mut total = Vec::new();
        for &j in cands {
            let x = lp.var();
            total.push((x, Q::one()));
            for (v, q) in pairs[j].1.iter() {
                rows.entry(*v).or_default().push((x, -q));
            }
            lifts.push((x, *t, j));
        }
        lp.constrain(total, Cmp::Eq, p.clone());
    }
    for (_, row) in rows {
        lp.constrain(row, Cmp::Eq, Q::zero());
    }
    let x = lp.solve()?;
    let mut chain = Chain::default();
    let mut acc: BTreeMap<StateId, Q> = BTreeMap::new();
    for (v, u, c, d) in steps {
        if x[v].is_positive() {
            for (t, q) in d.iter() {
                *acc.entry(*t).or_insert_with(Q::zero) += &x[v] * q;
            }
            chain.parts.push((u, x[v].clone(), c));
        }
    }
    let triples = lifts
        .into_iter()
        .filter(|(v, _, _)| x[*v].is_positive())
        .map(|(v, t, j)| (t, x[v].clone(), pairs[j].1.clone()))
        .collect();
    Some((Dist::from_pairs(acc).ok()?, chain, LiftWitness { triples }))
}

fn index_pairs(pairs: &[(StateId, SDist)]) -> HashMap<StateId, Vec<usize>> {
    let mut by_state: HashMap<StateId, Vec<usize>> = HashMap::new();
    for (j, (s, _)) in pairs.iter().enumerate() {
        by_state.entry(*s).or_default().push(j);
    }
    by_state
}

/// Witnesses for every clause of every pair, or `None` if some clause fails.
pub fn certify(g: &Plts, kind: SimKind, pairs: &[(StateId, SDist)]) -> Result<Option<SimCertificate>, SimError> {
    check_refs(g, pairs)?;
    let univ = universe(g);
    let by_state = index_pairs(pairs);
    let mut der = derivatives(g, kind);
    let mut witnesses = Vec::with_capacity(pairs.len());
    for (s, theta) in pairs {
        let (moves, refusal) = clauses(g, kind, &univ, *s);
        let mut matched = Vec::with_capacity(moves.len());
        for i in moves {
            let t = &g.transitions(*s)[i];
            let Some((m, chain, lift)) = match_move(&mut der, &by_state, pairs, &t.label, &t.target, theta) else {
                return Ok(None);
            };
            matched.push(MoveMatch { transition: i, matched: m, chain, lift });
        }
        let refusal = match refusal {
            None => None,
            Some(x) => match der.can_weakly_refuse(theta, &x) {
                Some(c) => Some((x, c)),
                None => return Ok(None),
            },
        };
        witnesses.push(PairWitness { moves: matched, refusal });
    }
    Ok(Some(SimCertificate { kind, pairs: pairs.to_vec(), witnesses }))
}

/// Decides whether the finite relation `pairs` is a simulation of the given kind.
pub fn check_certificate(g: &Plts, kind: SimKind, pairs: &[(StateId, SDist)]) -> Result<bool, SimError> {
    Ok(certify(g, kind, pairs)?.is_some())
}

impl SimCertificate {
    /// Re-checks the stored witnesses without solving anything.
    pub fn validate(&self, g: &Plts) -> Result<bool, SimError> {
        check_refs(g, &self.pairs)?;
        if self.witnesses.len() != self.pairs.len() {
            return Err(SimError::Shape(self.pairs.len().min(self.witnesses.len())));
        }
        let univ = universe(g);
        let avoid = self.kind == SimKind::EFailureSimulation;
        for (i, ((s, theta), w)) in self.pairs.iter().zip(&self.witnesses).enumerate() {
            let (moves, refusal) = clauses(g, self.kind, &univ, *s);
            if w.moves.iter().map(|m| m.transition).collect::<Vec<_>>() != moves {
                return Err(SimError::Shape(i));
            }
            for m in &w.moves {
                let t = &g.transitions(*s)[m.transition];
                let visible = (t.label != Label::Tau).then_some(&t.label);
                if m.chain.replay(g, theta, visible, avoid).as_ref() != Some(&m.matched)
                    || !m.lift.validate(&self.pairs, &t.target, &m.matched)
                {
                    return Ok(false);
                }
            }
            match (&refusal, &w.refusal) {
                (None, None) => {}
                (Some(x), Some((y, c))) if x == y => match c.replay(g, theta, None, avoid) {
                    Some(end) if end.support().all(|u| g.refuses(*u, x)) => {}
                    _ => return Ok(false),
                },
                _ => return Err(SimError::Shape(i)),
            }
        }
        Ok(true)
    }
}

// ----- preorder decisions ---------------------------------------------------------------------

/// The top-level match of a preorder: the simulated side's distribution lifts to `matched`,
/// which the simulating side reaches by `chain`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopMatch {
    pub matched: SDist,
    pub chain: Chain,
    pub lift: LiftWitness<StateId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evidence {
    pub certificate: SimCertificate,
    pub top: TopMatch,
}

#[derive(Debug, Clone)]
pub struct Distinction {
    pub formula: Arc<Formula>,
    pub test: CharTest,
}

/// A preorder verdict over the joint pLTS of both processes.
pub struct SimVerdict {
    pub joint: Joint,
    pub holds: bool,
    pub evidence: Option<Evidence>,
    pub distinction: Option<Distinction>,
}

impl SimVerdict {
    /// Re-checks the evidence of a positive verdict.
    pub fn validate(&self, kind: SimKind) -> bool {
        let Some(e) = &self.evidence else { return !self.holds };
        let g = &self.joint.plts;
        let (lower, upper) = match kind {
            SimKind::Simulation => (&self.joint.p, &self.joint.q),
            _ => (&self.joint.q, &self.joint.p),
        };
        e.certificate.kind == kind
            && e.certificate.validate(g) == Ok(true)
            && e.top.chain.replay(g, upper, None, false).as_ref() == Some(&e.top.matched)
            && e.top.lift.validate(&e.certificate.pairs, lower, &e.top.matched)
    }
}

/// Collects the pairs `(s, Θ_s)` a satisfaction witness of a characteristic formula assigns.
fn collect_dist(g: &Plts, d: &SDist, w: &SatWitness, out: &mut BTreeSet<(StateId, SDist)>) {
    let SatWitness::ProbSum { parts, .. } = w else { panic!("witness shape") };
    for ((s, _), part) in d.iter().zip(parts) {
        if let Some((theta, ws)) = part {
            if out.insert((*s, theta.clone())) {
                collect_state(g, *s, ws, out);
            }
        }
    }
}

fn collect_state(g: &Plts, s: StateId, w: &SatWitness, out: &mut BTreeSet<(StateId, SDist)>) {
    let SatWitness::Conj(ws) = w else { panic!("witness shape") };
    let mut it = ws.iter();
    let ts = g.transitions(s);
    for t in ts.iter().filter(|t| matches!(t.label, Label::Visible(_))) {
        let Some(SatWitness::Diamond { then, .. }) = it.next() else { panic!("witness shape") };
        collect_dist(g, &t.target, then, out);
    }
    for t in ts.iter().filter(|t| t.label == Label::Tau) {
        collect_dist(g, &t.target, it.next().expect("witness shape"), out);
    }
}

fn top_mid(w: &SatWitness) -> &SDist {
    match w {
        SatWitness::ProbSum { mid, .. } => mid,
        _ => panic!("witness shape"),
    }
}

/// Decides `P ⊑S Q` (`logic = L`) or `P ⊑FS Q` (`logic = F`) with evidence either way.
fn verdict(p: &Term, q: &Term, logic: Logic) -> SimVerdict {
    let joint = Joint::new(p, q);
    let g = &joint.plts;
    let (lower, upper, kind) = match logic {
        Logic::L => (&joint.p, &joint.q, SimKind::Simulation),
        Logic::F => (&joint.q, &joint.p, SimKind::FailureSimulation),
    };
    let formula = CharFormulas::new(g, logic, joint.act.clone()).of_dist(lower);
    let mut der = Derivatives::new(g);
    let found = sat_witness(&mut der, upper, &formula);
    let (holds, evidence, distinction) = match found {
        Some(w) => {
            let mut pairs = BTreeSet::new();
            collect_dist(g, lower, &w, &mut pairs);
            let pairs: Vec<(StateId, SDist)> = pairs.into_iter().collect();
            let certificate = certify(g, kind, &pairs)
                .expect("pairs come from the pLTS")
                .expect("pairs read off a satisfaction witness form a simulation");
            let matched = top_mid(&w).clone();
            let chain = der.weak_tau(upper).decompose(&matched).expect("witness mid is a weak derivative");
            let lift = crate::distribution::lift_check(&pairs, lower, &matched).expect("top-level lifting");
            (true, Some(Evidence { certificate, top: TopMatch { matched, chain, lift } }), None)
        }
        None => {
            let test = char_test(&formula);
            (false, None, Some(Distinction { formula, test }))
        }
    };
    SimVerdict { joint, holds, evidence, distinction }
}

pub fn sim_verdict(p: &Term, q: &Term) -> SimVerdict {
    verdict(p, q, Logic::L)
}

pub fn fsim_verdict(p: &Term, q: &Term) -> SimVerdict {
    verdict(p, q, Logic::F)
}

/// Repeated preorder decisions over one growing pLTS, sharing characteristic formulas and weak
/// derivatives between queries.
pub struct Decider {
    plts: Plts,
    act: ActSet,
    formulas_l: HashMap<StateId, Arc<Formula>>,
    formulas_f: HashMap<StateId, Arc<Formula>>,
    cache: Option<DerivCache>,
    verdicts: HashMap<(Term, Term, bool), bool>,
}

impl Default for Decider {
    fn default() -> Self {
        Decider::new(ActSet::new())
    }
}

impl Decider {
    pub fn new(alphabet: ActSet) -> Decider {
        Decider {
            plts: Plts::new(),
            act: alphabet,
            formulas_l: HashMap::new(),
            formulas_f: HashMap::new(),
            cache: Some(DerivCache::default()),
            verdicts: HashMap::new(),
        }
    }

    fn widen(&mut self, t: &Term) {
        let extra: Vec<Name> = t.visible_actions().into_iter().filter(|a| !self.act.contains(a)).collect();
        if !extra.is_empty() {
            self.act.extend(extra);
            self.formulas_f.clear();
        }
    }

    fn decide(&mut self, p: &Term, q: &Term, logic: Logic) -> bool {
        let key = (p.clone(), q.clone(), logic == Logic::F);
        if let Some(v) = self.verdicts.get(&key) {
            return *v;
        }
        self.widen(p);
        self.widen(q);
        let dp = self.plts.add_term(p);
        let dq = self.plts.add_term(q);
        let (lower, upper, memo) = match logic {
            Logic::L => (dp, dq, &mut self.formulas_l),
            Logic::F => (dq, dp, &mut self.formulas_f),
        };
        let mut cf = CharFormulas::resume(&self.plts, logic, self.act.clone(), std::mem::take(memo));
        let phi = cf.of_dist(&lower);
        *memo = cf.into_memo();
        let mut der = Derivatives::resume(&self.plts, self.cache.take().unwrap_or_default());
        let out = sat_witness(&mut der, &upper, &phi).is_some();
        self.cache = Some(der.into_cache());
        self.verdicts.insert(key, out);
        out
    }

    pub fn sim_leq(&mut self, p: &Term, q: &Term) -> bool {
        self.decide(p, q, Logic::L)
    }

    pub fn fsim_leq(&mut self, p: &Term, q: &Term) -> bool {
        self.decide(p, q, Logic::F)
    }
}

/// `P ⊑S Q`.
pub fn sim_leq(p: &Term, q: &Term) -> bool {
    crate::logic::logic_leq(p, q, Logic::L)
}

/// `P ⊑FS Q`.
pub fn fsim_leq(p: &Term, q: &Term) -> bool {
    crate::logic::logic_leq(p, q, Logic::F)
}
