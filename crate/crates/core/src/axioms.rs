//! Equational and inequational theories of the parallel-free fragment: axiom instances,
//! derivations and their checker, normal forms, and derivation synthesis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{interp, Dist};
use crate::logic::{sat_witness, CharFormulas, Logic, SatWitness};
use crate::lp::{Cmp, Lp};
use crate::plts::{Chain, Derivatives, Move, MoveCache, Plts, Rule, SDist, StateId, StepChain};
use crate::rational::Q;
use crate::syntax::{desugar, ext_all, int_all, prob_sum, ActSet, Action, Label, Name, Term};

// ----- axioms ---------------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AxiomId {
    P1,
    P2,
    P3,
    I1,
    I2,
    I3,
    E1,
    E2,
    E3,
    EI,
    D1,
    D2,
    D3,
    May0,
    May1,
    May2,
    May3,
    May4,
    Must1,
    Must2,
    Must2Prime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theory {
    Eq,
    May,
    Must,
}

impl AxiomId {
    pub const ALL: [AxiomId; 21] = [
        AxiomId::P1,
        AxiomId::P2,
        AxiomId::P3,
        AxiomId::I1,
        AxiomId::I2,
        AxiomId::I3,
        AxiomId::E1,
        AxiomId::E2,
        AxiomId::E3,
        AxiomId::EI,
        AxiomId::D1,
        AxiomId::D2,
        AxiomId::D3,
        AxiomId::May0,
        AxiomId::May1,
        AxiomId::May2,
        AxiomId::May3,
        AxiomId::May4,
        AxiomId::Must1,
        AxiomId::Must2,
        AxiomId::Must2Prime,
    ];

    /// Usable in both directions.
    pub fn is_equation(self) -> bool {
        !matches!(
            self,
            AxiomId::May1
                | AxiomId::May2
                | AxiomId::May3
                | AxiomId::May4
                | AxiomId::Must1
                | AxiomId::Must2
                | AxiomId::Must2Prime
        )
    }

    pub fn is_common(self) -> bool {
        self <= AxiomId::D3
    }

    pub fn admitted_in(self, theory: Theory) -> bool {
        match theory {
            Theory::Eq => self.is_common(),
            Theory::May => {
                self.is_common()
                    || matches!(self, AxiomId::May0 | AxiomId::May1 | AxiomId::May2 | AxiomId::May3 | AxiomId::May4)
            }
            Theory::Must => self.is_common() || matches!(self, AxiomId::Must1 | AxiomId::Must2 | AxiomId::Must2Prime),
        }
    }

    pub fn schema(self) -> &'static str {
        match self {
            AxiomId::P1 => "P (+)p P = P",
            AxiomId::P2 => "P (+)p Q = Q (+)(1-p) P",
            AxiomId::P3 => "(P (+)p Q) (+)q R = P (+)(p*q) (Q (+)((1-p)*q/(1-p*q)) R)",
            AxiomId::I1 => "P |~| P = P",
            AxiomId::I2 => "P |~| Q = Q |~| P",
            AxiomId::I3 => "(P |~| Q) |~| R = P |~| (Q |~| R)",
            AxiomId::E1 => "P [] 0 = P",
            AxiomId::E2 => "P [] Q = Q [] P",
            AxiomId::E3 => "(P [] Q) [] R = P [] (Q [] R)",
            AxiomId::EI => "a.P [] a.Q = a.P |~| a.Q",
            AxiomId::D1 => "P [] (Q (+)p R) = (P [] Q) (+)p (P [] R)",
            AxiomId::D2 => "a.P [] (Q |~| R) = (a.P [] Q) |~| (a.P [] R)",
            AxiomId::D3 => "(P1 |~| P2) [] (Q1 |~| Q2) = (P1 [] (Q1 |~| Q2)) |~| ((P2 [] (Q1 |~| Q2)) |~| (((P1 |~| P2) [] Q1) |~| ((P1 |~| P2) [] Q2)))",
            AxiomId::May0 => "a.P [] b.Q = a.P |~| b.Q",
            AxiomId::May1 => "P <= P |~| Q",
            AxiomId::May2 => "0 <= P",
            AxiomId::May3 => "a.(P (+)p Q) <= a.P (+)p a.Q",
            AxiomId::May4 => "P (+)p Q <= P |~| Q",
            AxiomId::Must1 => "P |~| Q <= Q",
            AxiomId::Must2 => "R |~| |~|_i (+)_j p_j.(a_i.Q_ij [] P_ij) <= []_i a_i.(+)_j p_j.Q_ij, if inits(R) within {a_i}",
            AxiomId::Must2Prime => "R |~| |~|_i P_i <= []_i a_i.Q_i, if [[P_i]] -a_i-> [[Q_i]] and [[R]] refuses Act \\ {a_i}",
        }
    }
}

impl fmt::Display for AxiomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxiomId::Must2Prime => write!(f, "Must2'"),
            other => write!(f, "{other:?}"),
        }
    }
}

/// One component `p_j·(a_i.Q_ij □ P_ij)` of a Must2 branch; a missing `P_ij` leaves `a_i.Q_ij`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Must2Part {
    pub p: Q,
    pub q: Term,
    pub rest: Option<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Must2Branch {
    pub action: Name,
    pub parts: Vec<Must2Part>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Must2PrimeBranch {
    pub action: Name,
    pub from: Term,
    pub to: Term,
}

/// An axiom instance with its substitution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "axiom")]
pub enum Instance {
    P1 { p: Q, x: Term },
    P2 { p: Q, x: Term, y: Term },
    P3 { p: Q, q: Q, x: Term, y: Term, z: Term },
    I1 { x: Term },
    I2 { x: Term, y: Term },
    I3 { x: Term, y: Term, z: Term },
    E1 { x: Term },
    E2 { x: Term, y: Term },
    E3 { x: Term, y: Term, z: Term },
    EI { a: Name, x: Term, y: Term },
    D1 { p: Q, x: Term, y: Term, z: Term },
    D2 { a: Name, x: Term, y: Term, z: Term },
    D3 { x1: Term, x2: Term, y1: Term, y2: Term },
    May0 { a: Name, b: Name, x: Term, y: Term },
    May1 { x: Term, y: Term },
    May2 { x: Term },
    May3 { a: Name, p: Q, x: Term, y: Term },
    May4 { p: Q, x: Term, y: Term },
    Must1 { x: Term, y: Term },
    Must2 { r: Term, branches: Vec<Must2Branch> },
    Must2Prime { r: Term, branches: Vec<Must2PrimeBranch> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("weight {0} outside (0,1)")]
    Weight(Q),
    #[error("P3 needs p*q < 1")]
    P3Guard,
    #[error("weights of a Must2 branch add up to {0}")]
    BranchWeights(Q),
    #[error("side condition fails: {0}")]
    Side(String),
}

fn pre(a: &Name, t: Term) -> Term {
    Term::prefix(Action::Visible(a.clone()), t)
}

fn prob(p: &Q, x: Term, y: Term) -> Result<Term, InstanceError> {
    if !p.is_proper_probability() {
        return Err(InstanceError::Weight(p.clone()));
    }
    Ok(Term::prob(p.clone(), x, y))
}

/// `inits(P)`: the visible actions offered first, or `τ` for an internal choice.
pub fn inits(t: &Term) -> BTreeSet<Label> {
    match t {
        Term::Nil => BTreeSet::new(),
        Term::Prefix(a, _) => BTreeSet::from([a.label()]),
        Term::IntChoice(..) => BTreeSet::from([Label::Tau]),
        Term::ExtChoice(p, q) | Term::ProbChoice(_, p, q) | Term::Par(_, p, q) => {
            let mut s = inits(p);
            s.extend(inits(q));
            s
        }
    }
}

impl Instance {
    pub fn id(&self) -> AxiomId {
        match self {
            Instance::P1 { .. } => AxiomId::P1,
            Instance::P2 { .. } => AxiomId::P2,
            Instance::P3 { .. } => AxiomId::P3,
            Instance::I1 { .. } => AxiomId::I1,
            Instance::I2 { .. } => AxiomId::I2,
            Instance::I3 { .. } => AxiomId::I3,
            Instance::E1 { .. } => AxiomId::E1,
            Instance::E2 { .. } => AxiomId::E2,
            Instance::E3 { .. } => AxiomId::E3,
            Instance::EI { .. } => AxiomId::EI,
            Instance::D1 { .. } => AxiomId::D1,
            Instance::D2 { .. } => AxiomId::D2,
            Instance::D3 { .. } => AxiomId::D3,
            Instance::May0 { .. } => AxiomId::May0,
            Instance::May1 { .. } => AxiomId::May1,
            Instance::May2 { .. } => AxiomId::May2,
            Instance::May3 { .. } => AxiomId::May3,
            Instance::May4 { .. } => AxiomId::May4,
            Instance::Must1 { .. } => AxiomId::Must1,
            Instance::Must2 { .. } => AxiomId::Must2,
            Instance::Must2Prime { .. } => AxiomId::Must2Prime,
        }
    }

    /// The two sides of the instance, after checking its syntactic side conditions.  The
    /// semantic premises of Must2' are checked by [`Instance::check_premises`].
    pub fn sides(&self) -> Result<(Term, Term), InstanceError> {
        use Term as T;
        let c = |t: &Term| t.clone();
        Ok(match self {
            Instance::P1 { p, x } => (prob(p, c(x), c(x))?, c(x)),
            Instance::P2 { p, x, y } => (prob(p, c(x), c(y))?, prob(&(Q::one() - p), c(y), c(x))?),
            Instance::P3 { p, q, x, y, z } => {
                let pq = p * q;
                if pq >= Q::one() {
                    return Err(InstanceError::P3Guard);
                }
                let inner = (Q::one() - p) * q.clone() / (Q::one() - &pq);
                (prob(q, prob(p, c(x), c(y))?, c(z))?, prob(&pq, c(x), prob(&inner, c(y), c(z))?)?)
            }
            Instance::I1 { x } => (T::int(c(x), c(x)), c(x)),
            Instance::I2 { x, y } => (T::int(c(x), c(y)), T::int(c(y), c(x))),
            Instance::I3 { x, y, z } => (T::int(T::int(c(x), c(y)), c(z)), T::int(c(x), T::int(c(y), c(z)))),
            Instance::E1 { x } => (T::ext(c(x), T::Nil), c(x)),
            Instance::E2 { x, y } => (T::ext(c(x), c(y)), T::ext(c(y), c(x))),
            Instance::E3 { x, y, z } => (T::ext(T::ext(c(x), c(y)), c(z)), T::ext(c(x), T::ext(c(y), c(z)))),
            Instance::EI { a, x, y } => (T::ext(pre(a, c(x)), pre(a, c(y))), T::int(pre(a, c(x)), pre(a, c(y)))),
            Instance::D1 { p, x, y, z } => {
                (T::ext(c(x), prob(p, c(y), c(z))?), prob(p, T::ext(c(x), c(y)), T::ext(c(x), c(z)))?)
            }
            Instance::D2 { a, x, y, z } => {
                let ax = pre(a, c(x));
                (T::ext(ax.clone(), T::int(c(y), c(z))), T::int(T::ext(ax.clone(), c(y)), T::ext(ax, c(z))))
            }
            Instance::D3 { x1, x2, y1, y2 } => {
                let xs = T::int(c(x1), c(x2));
                let ys = T::int(c(y1), c(y2));
                let rhs = int_all(&[
                    T::ext(c(x1), ys.clone()),
                    T::ext(c(x2), ys.clone()),
                    T::ext(xs.clone(), c(y1)),
                    T::ext(xs.clone(), c(y2)),
                ]);
                (T::ext(xs, ys), rhs)
            }
            Instance::May0 { a, b, x, y } => (T::ext(pre(a, c(x)), pre(b, c(y))), T::int(pre(a, c(x)), pre(b, c(y)))),
            Instance::May1 { x, y } => (c(x), T::int(c(x), c(y))),
            Instance::May2 { x } => (T::Nil, c(x)),
            Instance::May3 { a, p, x, y } => (pre(a, prob(p, c(x), c(y))?), prob(p, pre(a, c(x)), pre(a, c(y)))?),
            Instance::May4 { p, x, y } => (prob(p, c(x), c(y))?, T::int(c(x), c(y))),
            Instance::Must1 { x, y } => (T::int(c(x), c(y)), c(y)),
            Instance::Must2 { r, branches } => {
                let allowed: BTreeSet<Label> = branches.iter().map(|b| Label::Visible(b.action.clone())).collect();
                if !inits(r).is_subset(&allowed) {
                    return Err(InstanceError::Side(format!("inits({r}) not within the branch actions")));
                }
                let mut left = vec![c(r)];
                let mut right = Vec::new();
                for b in branches {
                    let total: Q = b.parts.iter().map(|x| &x.p).sum();
                    if b.parts.is_empty() || !total.is_one() || b.parts.iter().any(|x| !x.p.is_positive()) {
                        return Err(InstanceError::BranchWeights(total));
                    }
                    let comps: Vec<(Q, Term)> = b
                        .parts
                        .iter()
                        .map(|x| {
                            let head = pre(&b.action, c(&x.q));
                            (
                                x.p.clone(),
                                match &x.rest {
                                    None => head,
                                    Some(rest) => T::ext(head, c(rest)),
                                },
                            )
                        })
                        .collect();
                    left.push(prob_sum(&comps));
                    let bodies: Vec<(Q, Term)> = b.parts.iter().map(|x| (x.p.clone(), c(&x.q))).collect();
                    right.push(pre(&b.action, prob_sum(&bodies)));
                }
                (int_all(&left), ext_all(&right))
            }
            Instance::Must2Prime { r, branches } => {
                let mut left = vec![c(r)];
                left.extend(branches.iter().map(|b| c(&b.from)));
                let right: Vec<Term> = branches.iter().map(|b| pre(&b.action, c(&b.to))).collect();
                (int_all(&left), ext_all(&right))
            }
        })
    }

    /// Semantic premises: for Must2', `⟦P_i⟧ →a_i ⟦Q_i⟧` as a lifted strong transition and every
    /// state of `⟦R⟧` stable with visible moves among the `a_i`.  May4 is checked by expansion.
    pub fn check_premises(&self) -> Result<(), InstanceError> {
        match self {
            Instance::Must2Prime { r, branches } => {
                let mut g = Plts::new();
                let dr = g.add_term(r);
                let allowed: BTreeSet<&Name> = branches.iter().map(|b| &b.action).collect();
                for s in dr.support() {
                    let ok = g.transitions(*s).iter().all(|t| match &t.label {
                        Label::Visible(n) | Label::Success(n) => allowed.contains(n),
                        Label::Tau => false,
                    });
                    if !ok {
                        return Err(InstanceError::Side(format!("[[{r}]] does not refuse the other actions")));
                    }
                }
                for b in branches {
                    let from = g.add_term(&b.from);
                    let to = g.add_term(&b.to);
                    if !lifted_step(&g, &from, &Label::Visible(b.action.clone()), &to) {
                        return Err(InstanceError::Side(format!("[[{}]] -{}-> [[{}]] fails", b.from, b.action, b.to)));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// `Δ →l Θ` for the lifting of the strong transition relation.
fn lifted_step(g: &Plts, from: &SDist, label: &Label, to: &SDist) -> bool {
    let mut lp = Lp::new();
    let mut rows: BTreeMap<StateId, Vec<(usize, Q)>> = BTreeMap::new();
    for (s, p) in from.iter() {
        let mut total = Vec::new();
        for t in g.transitions(*s).iter().filter(|t| &t.label == label) {
            let x = lp.var();
            total.push((x, Q::one()));
            for (u, q) in t.target.iter() {
                rows.entry(*u).or_default().push((x, q.clone()));
            }
        }
        if total.is_empty() {
            return false;
        }
        lp.constrain(total, Cmp::Eq, p.clone());
    }
    for u in to.support() {
        rows.entry(*u).or_default();
    }
    for (u, row) in rows {
        lp.constrain(row, Cmp::Eq, to.weight(&u));
    }
    lp.feasible()
}

// ----- derivations ----------------------------------------------------------------------------

/// A proof of `lhs = rhs` (equational theory) or `lhs ⊑ rhs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub lhs: Term,
    pub rhs: Term,
    pub step: Step,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Refl,
    /// An axiom instance; `reversed` reads an equation right to left.
    Axiom {
        instance: Instance,
        reversed: bool,
    },
    /// Same interpretation: derivable with P1–P3 and D1 alone.
    ProbEq,
    Trans(Vec<Derivation>),
    /// Same top operator on both sides; one derivation per operand.
    Cong(Vec<Derivation>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at {path:?}: {msg}")]
pub struct CheckError {
    /// Child indices from the root.
    pub path: Vec<usize>,
    pub msg: String,
}

/// The interpretation used by `ProbEq` steps.
pub fn sem(t: &Term) -> Dist<Term> {
    interp(&desugar(t))
}

fn operands(t: &Term) -> Vec<&Term> {
    match t {
        Term::Nil => vec![],
        Term::Prefix(_, p) => vec![p],
        Term::IntChoice(p, q) | Term::ExtChoice(p, q) | Term::ProbChoice(_, p, q) | Term::Par(_, p, q) => vec![p, q],
    }
}

fn same_operator(a: &Term, b: &Term) -> bool {
    match (a, b) {
        (Term::Nil, Term::Nil)
        | (Term::IntChoice(..), Term::IntChoice(..))
        | (Term::ExtChoice(..), Term::ExtChoice(..)) => true,
        (Term::Prefix(x, _), Term::Prefix(y, _)) => x == y,
        (Term::ProbChoice(p, ..), Term::ProbChoice(q, ..)) => p == q,
        (Term::Par(x, ..), Term::Par(y, ..)) => x == y,
        _ => false,
    }
}

impl Derivation {
    pub fn refl(t: Term) -> Derivation {
        Derivation { lhs: t.clone(), rhs: t, step: Step::Refl }
    }

    pub fn axiom(instance: Instance) -> Derivation {
        let (lhs, rhs) = instance.sides().expect("well-formed axiom instance");
        Derivation { lhs, rhs, step: Step::Axiom { instance, reversed: false } }
    }

    pub fn axiom_reversed(instance: Instance) -> Derivation {
        let (lhs, rhs) = instance.sides().expect("well-formed axiom instance");
        Derivation { lhs: rhs, rhs: lhs, step: Step::Axiom { instance, reversed: true } }
    }

    pub fn prob_eq(lhs: Term, rhs: Term) -> Derivation {
        if lhs == rhs {
            return Derivation::refl(lhs);
        }
        Derivation { lhs, rhs, step: Step::ProbEq }
    }

    /// Chains derivations, flattening nested chains and cutting out reflexive links and cycles.
    pub fn trans(parts: Vec<Derivation>) -> Derivation {
        let start = parts.first().expect("chain has at least one link").lhs.clone();
        let mut links = Vec::new();
        for d in parts {
            match d.step {
                Step::Refl => {}
                Step::Trans(inner) => links.extend(inner),
                _ => links.push(d),
            }
        }
        let mut flat: Vec<Derivation> = Vec::new();
        for d in links {
            if d.lhs == d.rhs {
                continue;
            }
            match flat.iter().position(|e| e.lhs == d.rhs) {
                Some(k) => flat.truncate(k),
                None => flat.push(d),
            }
        }
        match flat.len() {
            0 => Derivation::refl(start),
            1 => flat.pop().unwrap(),
            _ => {
                Derivation { lhs: flat[0].lhs.clone(), rhs: flat.last().unwrap().rhs.clone(), step: Step::Trans(flat) }
            }
        }
    }

    /// Applies the operator of `shape` to the derivations of its operands.
    pub fn cong(shape: &Term, args: Vec<Derivation>) -> Derivation {
        let args: Vec<Derivation> =
            args.into_iter().map(|d| if d.lhs == d.rhs { Derivation::refl(d.lhs) } else { d }).collect();
        if args.iter().all(|d| d.step == Step::Refl) {
            let lhs = rebuild(shape, args.iter().map(|d| d.lhs.clone()).collect());
            return Derivation::refl(lhs);
        }
        let lhs = rebuild(shape, args.iter().map(|d| d.lhs.clone()).collect());
        let rhs = rebuild(shape, args.iter().map(|d| d.rhs.clone()).collect());
        Derivation { lhs, rhs, step: Step::Cong(args) }
    }

    /// The mirror image of an equational derivation.
    pub fn reverse(&self) -> Derivation {
        let step = match &self.step {
            Step::Refl => Step::Refl,
            Step::ProbEq => Step::ProbEq,
            Step::Axiom { instance, reversed } => Step::Axiom { instance: instance.clone(), reversed: !reversed },
            Step::Trans(ds) => Step::Trans(ds.iter().rev().map(|d| d.reverse()).collect()),
            Step::Cong(ds) => Step::Cong(ds.iter().map(|d| d.reverse()).collect()),
        };
        Derivation { lhs: self.rhs.clone(), rhs: self.lhs.clone(), step }
    }

    /// Number of axiom and `ProbEq` leaves.
    pub fn leaves(&self) -> usize {
        match &self.step {
            Step::Refl => 0,
            Step::Axiom { .. } | Step::ProbEq => 1,
            Step::Trans(ds) | Step::Cong(ds) => ds.iter().map(|d| d.leaves()).sum(),
        }
    }

    pub fn axioms_used(&self) -> BTreeSet<AxiomId> {
        let mut out = BTreeSet::new();
        self.collect_axioms(&mut out);
        out
    }

    fn collect_axioms(&self, out: &mut BTreeSet<AxiomId>) {
        match &self.step {
            Step::Axiom { instance, .. } => {
                out.insert(instance.id());
            }
            Step::Trans(ds) | Step::Cong(ds) => ds.iter().for_each(|d| d.collect_axioms(out)),
            _ => {}
        }
    }

    /// One line per step, indented by depth.
    pub fn render(&self, theory: Theory) -> String {
        let mut out = String::new();
        self.render_into(theory, 0, &mut out);
        out
    }

    fn render_into(&self, theory: Theory, depth: usize, out: &mut String) {
        let rel = if theory == Theory::Eq { "=" } else { "<=" };
        let why = match &self.step {
            Step::Refl => "refl".to_string(),
            Step::ProbEq => "prob".to_string(),
            Step::Trans(_) => "trans".to_string(),
            Step::Cong(_) => "cong".to_string(),
            Step::Axiom { instance, reversed } => {
                format!("{}{}", instance.id(), if *reversed { " (reversed)" } else { "" })
            }
        };
        out.push_str(&format!("{}{} {rel} {}    [{why}]\n", "  ".repeat(depth), self.lhs, self.rhs));
        if let Step::Trans(ds) | Step::Cong(ds) = &self.step {
            for d in ds {
                d.render_into(theory, depth + 1, out);
            }
        }
    }
}

fn rebuild(shape: &Term, args: Vec<Term>) -> Term {
    let mut it = args.into_iter();
    let mut next = || it.next().expect("operand count");
    match shape {
        Term::Nil => Term::Nil,
        Term::Prefix(a, _) => Term::prefix(a.clone(), next()),
        Term::IntChoice(..) => Term::int(next(), next()),
        Term::ExtChoice(..) => Term::ext(next(), next()),
        Term::ProbChoice(p, ..) => Term::ProbChoice(p.clone(), Arc::new(next()), Arc::new(next())),
        Term::Par(a, ..) => Term::par(a.clone(), next(), next()),
    }
}

fn fail<T>(path: &[usize], msg: impl Into<String>) -> Result<T, CheckError> {
    Err(CheckError { path: path.to_vec(), msg: msg.into() })
}

/// Re-validates every step of `d` within `theory`.
pub fn check_derivation(d: &Derivation, theory: Theory) -> Result<(), CheckError> {
    check_at(d, theory, &mut Vec::new())
}

fn check_at(d: &Derivation, theory: Theory, path: &mut Vec<usize>) -> Result<(), CheckError> {
    match &d.step {
        Step::Refl => {
            if d.lhs != d.rhs {
                return fail(path, "reflexivity between different terms");
            }
        }
        Step::ProbEq => {
            if d.lhs.has_par() || d.rhs.has_par() {
                return fail(path, "probabilistic rewriting outside the parallel-free fragment");
            }
            if sem(&d.lhs) != sem(&d.rhs) {
                return fail(path, format!("{} and {} have different interpretations", d.lhs, d.rhs));
            }
        }
        Step::Axiom { instance, reversed } => {
            let id = instance.id();
            if !id.admitted_in(theory) {
                return fail(path, format!("{id} is not part of the {theory:?} theory"));
            }
            if *reversed && !id.is_equation() {
                return fail(path, format!("{id} cannot be reversed"));
            }
            let (l, r) = match instance.sides() {
                Ok(x) => x,
                Err(e) => return fail(path, format!("{id}: {e}")),
            };
            let (l, r) = if *reversed { (r, l) } else { (l, r) };
            if l != d.lhs || r != d.rhs {
                return fail(path, format!("{id} does not match: instance gives {l} / {r}"));
            }
            if let Err(e) = instance.check_premises() {
                return fail(path, format!("{id}: {e}"));
            }
            if let Instance::May4 { p, x, y } = instance {
                path.push(0);
                check_at(&may4(p, x, y), theory, path)?;
                path.pop();
            }
        }
        Step::Trans(ds) => {
            if ds.is_empty() {
                return fail(path, "empty chain");
            }
            if ds[0].lhs != d.lhs || ds.last().unwrap().rhs != d.rhs {
                return fail(path, "chain endpoints differ from the conclusion");
            }
            for (i, w) in ds.windows(2).enumerate() {
                if w[0].rhs != w[1].lhs {
                    return fail(path, format!("chain breaks after link {i}"));
                }
            }
            for (i, sub) in ds.iter().enumerate() {
                path.push(i);
                check_at(sub, theory, path)?;
                path.pop();
            }
        }
        Step::Cong(ds) => {
            if !same_operator(&d.lhs, &d.rhs) {
                return fail(path, "congruence across different operators");
            }
            let (lo, ro) = (operands(&d.lhs), operands(&d.rhs));
            if lo.len() != ds.len() {
                return fail(path, "congruence with the wrong number of operands");
            }
            for (i, sub) in ds.iter().enumerate() {
                if &sub.lhs != lo[i] || &sub.rhs != ro[i] {
                    return fail(path, format!("operand {i} does not match its derivation"));
                }
                path.push(i);
                check_at(sub, theory, path)?;
                path.pop();
            }
        }
    }
    Ok(())
}

/// `P ⊕p Q ⊑ P ⊓ Q` from May1 and P1.
pub fn may4(p: &Q, x: &Term, y: &Term) -> Derivation {
    let xy = Term::int(x.clone(), y.clone());
    let left = Derivation::axiom(Instance::May1 { x: x.clone(), y: y.clone() });
    let right = Derivation::trans(vec![
        Derivation::axiom(Instance::May1 { x: y.clone(), y: x.clone() }),
        Derivation::axiom(Instance::I2 { x: y.clone(), y: x.clone() }),
    ]);
    Derivation::trans(vec![
        Derivation::cong(&Term::prob(p.clone(), Term::Nil, Term::Nil), vec![left, right]),
        Derivation::axiom(Instance::P1 { p: p.clone(), x: xy }),
    ])
}

// ----- normal forms ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalFormError {
    #[error("parallel composition is outside the fragment")]
    Parallel,
}

/// `□ a_i.N_i`, including `0` and a single prefix.
fn is_box(t: &Term) -> bool {
    match t {
        Term::Nil | Term::Prefix(..) => true,
        Term::ExtChoice(l, r) => {
            matches!(**l, Term::Prefix(..)) && matches!(**r, Term::Prefix(..) | Term::ExtChoice(..)) && is_box(r)
        }
        _ => false,
    }
}

pub fn is_normal_form(t: &Term) -> bool {
    match t {
        Term::ProbChoice(_, l, r) | Term::IntChoice(l, r) => is_normal_form(l) && is_normal_form(r),
        Term::Nil => true,
        Term::Prefix(_, p) => is_normal_form(p),
        Term::ExtChoice(..) => is_box(t) && box_branches(t).iter().all(|(_, b)| is_normal_form(b)),
        Term::Par(..) => false,
    }
}

fn box_branches(t: &Term) -> Vec<(Action, Term)> {
    match t {
        Term::Nil => vec![],
        Term::Prefix(a, p) => vec![(a.clone(), (**p).clone())],
        Term::ExtChoice(l, r) => {
            let mut out = box_branches(l);
            out.extend(box_branches(r));
            out
        }
        _ => panic!("not a box: {t}"),
    }
}

/// A normal form `N` with a derivation of `P = N` from the common equations.
pub fn normal_form(t: &Term) -> Result<(Term, Derivation), NormalFormError> {
    let d = nf(t)?;
    Ok((d.rhs.clone(), d))
}

fn nf(t: &Term) -> Result<Derivation, NormalFormError> {
    Ok(match t {
        Term::Nil => Derivation::refl(Term::Nil),
        Term::Par(..) => return Err(NormalFormError::Parallel),
        Term::Prefix(_, p) => Derivation::cong(t, vec![nf(p)?]),
        Term::IntChoice(p, q) | Term::ProbChoice(_, p, q) => Derivation::cong(t, vec![nf(p)?, nf(q)?]),
        Term::ExtChoice(p, q) => {
            let inner = Derivation::cong(t, vec![nf(p)?, nf(q)?]);
            let Term::ExtChoice(np, nq) = &inner.rhs else { unreachable!() };
            let merged = merge(np, nq);
            Derivation::trans(vec![inner, merged])
        }
    })
}

fn prefix_parts(t: &Term) -> (Name, Term) {
    match t {
        Term::Prefix(Action::Visible(a), p) | Term::Prefix(Action::Success(a), p) => (a.clone(), (**p).clone()),
        _ => panic!("not a prefix: {t}"),
    }
}

/// `N1 □ N2 = N` for normal forms `N1`, `N2`.
fn merge(n1: &Term, n2: &Term) -> Derivation {
    let here = Term::ext(n1.clone(), n2.clone());
    if let Term::ProbChoice(p, a, b) = n2 {
        let d1 = Derivation::axiom(Instance::D1 { p: p.clone(), x: n1.clone(), y: (**a).clone(), z: (**b).clone() });
        let rest = Derivation::cong(&d1.rhs, vec![merge(n1, a), merge(n1, b)]);
        return Derivation::trans(vec![d1, rest]);
    }
    if let Term::ProbChoice(..) = n1 {
        let e2 = Derivation::axiom(Instance::E2 { x: n1.clone(), y: n2.clone() });
        return Derivation::trans(vec![e2, merge(n2, n1)]);
    }
    if *n1 == Term::Nil {
        return Derivation::trans(vec![
            Derivation::axiom(Instance::E2 { x: Term::Nil, y: n2.clone() }),
            Derivation::axiom(Instance::E1 { x: n2.clone() }),
        ]);
    }
    if *n2 == Term::Nil {
        return Derivation::axiom(Instance::E1 { x: n1.clone() });
    }
    match (n1, n2) {
        (Term::Prefix(..), _) if is_box(n2) => Derivation::refl(here),
        (Term::ExtChoice(h, rest), _) if is_box(n1) => {
            let e3 = Derivation::axiom(Instance::E3 { x: (**h).clone(), y: (**rest).clone(), z: n2.clone() });
            let inner = merge(rest, n2);
            let m = inner.rhs.clone();
            let step = Derivation::cong(&e3.rhs, vec![Derivation::refl((**h).clone()), inner]);
            if is_box(&m) {
                Derivation::trans(vec![e3, step])
            } else {
                Derivation::trans(vec![e3, step, merge(h, &m)])
            }
        }
        (Term::Prefix(..), Term::IntChoice(y, z)) => {
            let (a, x) = prefix_parts(n1);
            let d2 = Derivation::axiom(Instance::D2 { a, x, y: (**y).clone(), z: (**z).clone() });
            let rest = Derivation::cong(&d2.rhs, vec![merge(n1, y), merge(n1, z)]);
            Derivation::trans(vec![d2, rest])
        }
        (Term::IntChoice(..), _) if is_box(n2) => {
            let e2 = Derivation::axiom(Instance::E2 { x: n1.clone(), y: n2.clone() });
            Derivation::trans(vec![e2, merge(n2, n1)])
        }
        (Term::IntChoice(x1, x2), Term::IntChoice(y1, y2)) => {
            let d3 = Derivation::axiom(Instance::D3 {
                x1: (**x1).clone(),
                x2: (**x2).clone(),
                y1: (**y1).clone(),
                y2: (**y2).clone(),
            });
            let parts = [merge(x1, n2), merge(x2, n2), merge(n1, y1), merge(n1, y2)];
            let [m1, m2, m3, m4] = parts;
            let r = &d3.rhs;
            let Term::IntChoice(_, r1) = r else { unreachable!() };
            let Term::IntChoice(_, r2) = &**r1 else { unreachable!() };
            let inner = Derivation::cong(r2, vec![m3, m4]);
            let mid = Derivation::cong(r1, vec![m2, inner]);
            let rest = Derivation::cong(r, vec![m1, mid]);
            Derivation::trans(vec![d3, rest])
        }
        _ => unreachable!("merge of non-normal forms {n1} and {n2}"),
    }
}

/// The canonical flat probabilistic sum of distinct state terms, in term order.
pub fn prob_normal_form(t: &Term) -> Term {
    let d = sem(t);
    let parts: Vec<(Q, Term)> = d.iter().map(|(s, p)| (p.clone(), s.clone())).collect();
    prob_sum(&parts)
}

// ----- derivative lemma -----------------------------------------------------------------------

/// Derivations read off weak transitions of one pLTS.
struct Builder<'g> {
    g: &'g Plts,
    moves: MoveCache,
}

fn cong_sum(parts: Vec<(Q, Derivation)>) -> Derivation {
    fn go(parts: &[(Q, Derivation)], mass: &Q) -> Derivation {
        if parts.len() == 1 {
            return parts[0].1.clone();
        }
        let w = &parts[0].0 / mass;
        let rest_mass = mass - &parts[0].0;
        let rest = go(&parts[1..], &rest_mass);
        Derivation::cong(&Term::prob(w, Term::Nil, Term::Nil), vec![parts[0].1.clone(), rest])
    }
    let total: Q = parts.iter().map(|x| &x.0).sum();
    go(&parts, &total)
}

/// `a.(⊕ w_k Y_k) ⊑ ⊕ w_k a.Y_k` by May3.
fn may3_chain(a: &Name, parts: &[(Q, Term)]) -> Derivation {
    if parts.len() == 1 {
        return Derivation::refl(pre(a, parts[0].1.clone()));
    }
    let total: Q = parts.iter().map(|x| &x.0).sum();
    let w = &parts[0].0 / &total;
    let rest_mass = &total - &parts[0].0;
    let rest: Vec<(Q, Term)> = parts[1..].iter().map(|(p, y)| (p / &rest_mass, y.clone())).collect();
    let tail = prob_sum(&rest);
    let step = Derivation::axiom(Instance::May3 { a: a.clone(), p: w.clone(), x: parts[0].1.clone(), y: tail });
    let inner = may3_chain(a, &rest);
    let shape = step.rhs.clone();
    Derivation::trans(vec![step, Derivation::cong(&shape, vec![Derivation::refl(pre(a, parts[0].1.clone())), inner])])
}

impl<'g> Builder<'g> {
    fn new(g: &'g Plts) -> Builder<'g> {
        Builder { g, moves: MoveCache::new() }
    }

    fn term(&self, s: StateId) -> Term {
        self.g.term(s).clone()
    }

    fn sdist(&self, t: &Term) -> SDist {
        sem(t).map(|s| self.g.lookup(s).unwrap_or_else(|| panic!("state {s} not interned")))
    }

    fn dist_term(&self, d: &SDist) -> Term {
        self.g.dist_term(d)
    }

    /// `T ⊑may u` (`must = false`) or `u ⊑must T` for a strong `τ` move of `u` with target term
    /// `T = m.term`.
    fn strong_tau(&mut self, u: &Term, m: &Move, must: bool) -> Derivation {
        match (u, m.rule) {
            (Term::IntChoice(p, q), Rule::IntLeft) => {
                let (p, q) = ((**p).clone(), (**q).clone());
                if must {
                    Derivation::trans(vec![
                        Derivation::axiom(Instance::I2 { x: p.clone(), y: q.clone() }),
                        Derivation::axiom(Instance::Must1 { x: q, y: p }),
                    ])
                } else {
                    Derivation::axiom(Instance::May1 { x: p, y: q })
                }
            }
            (Term::IntChoice(p, q), Rule::IntRight) => {
                let (p, q) = ((**p).clone(), (**q).clone());
                if must {
                    Derivation::axiom(Instance::Must1 { x: p, y: q })
                } else {
                    Derivation::trans(vec![
                        Derivation::axiom(Instance::May1 { x: q.clone(), y: p.clone() }),
                        Derivation::axiom(Instance::I2 { x: q, y: p }),
                    ])
                }
            }
            (Term::ExtChoice(l, r), Rule::ExtTauLeft(i)) => {
                let sub = self.moves.moves(l)[i].clone();
                let d = self.strong_tau(l, &sub, must);
                Derivation::cong(u, vec![d, Derivation::refl((**r).clone())])
            }
            (Term::ExtChoice(l, r), Rule::ExtTauRight(i)) => {
                let sub = self.moves.moves(r)[i].clone();
                let d = self.strong_tau(r, &sub, must);
                Derivation::cong(u, vec![Derivation::refl((**l).clone()), d])
            }
            _ => panic!("no tau move {:?} of {u}", m.rule),
        }
    }

    /// `a.T ⊑may u` for a strong visible move of `u` with target term `T = m.term`.
    fn strong_act(&mut self, u: &Term, m: &Move) -> Derivation {
        match (u, m.rule) {
            (Term::Prefix(..), Rule::Action) => Derivation::refl(u.clone()),
            (Term::ExtChoice(l, r), Rule::ExtLeft(i)) => {
                let sub = self.moves.moves(l)[i].clone();
                let (l, r) = ((**l).clone(), (**r).clone());
                Derivation::trans(vec![
                    self.strong_act(&l, &sub),
                    Derivation::axiom_reversed(Instance::E1 { x: l.clone() }),
                    Derivation::cong(u, vec![Derivation::refl(l), Derivation::axiom(Instance::May2 { x: r })]),
                ])
            }
            (Term::ExtChoice(l, r), Rule::ExtRight(i)) => {
                let sub = self.moves.moves(r)[i].clone();
                let (l, r) = ((**l).clone(), (**r).clone());
                let widened = Term::ext(r.clone(), l.clone());
                Derivation::trans(vec![
                    self.strong_act(&r, &sub),
                    Derivation::axiom_reversed(Instance::E1 { x: r.clone() }),
                    Derivation::cong(
                        &widened,
                        vec![Derivation::refl(r.clone()), Derivation::axiom(Instance::May2 { x: l.clone() })],
                    ),
                    Derivation::axiom(Instance::E2 { x: r, y: l }),
                ])
            }
            _ => panic!("no visible move {:?} of {u}", m.rule),
        }
    }

    fn move_of(&mut self, s: StateId, i: usize) -> Move {
        let t = &self.g.transitions(s)[i];
        let u = self.term(s);
        let moves = self.moves.moves(&u);
        let m = moves.iter().find(|m| m.label == t.label && m.rule == t.rule).expect("transition has a move").clone();
        m
    }

    /// For a `τ̂` chain from `⟦X⟧`: a term `Y` for its end and `Y ⊑may X` or `X ⊑must Y`.
    fn tau_dist(&mut self, x: &Term, c: &Chain, must: bool) -> (Term, Derivation) {
        if c.parts.iter().all(|(_, _, sc)| *sc == StepChain::Stay) {
            let y = self
                .dist_term(&Dist::from_pairs(c.parts.iter().map(|(s, p, _)| (*s, p.clone()))).expect("chain source"));
            return (y.clone(), self.orient(Derivation::prob_eq(x.clone(), y), must));
        }
        let occ: Vec<(Q, Term)> = c.parts.iter().map(|(s, p, _)| (p.clone(), self.term(*s))).collect();
        let split = self.orient(Derivation::prob_eq(x.clone(), prob_sum(&occ)), must);
        let mut ys = Vec::new();
        let mut ds = Vec::new();
        for (s, p, sc) in &c.parts {
            let (y, d) = self.tau_state(*s, sc, must);
            ys.push((p.clone(), y));
            ds.push((p.clone(), d));
        }
        let y = prob_sum(&ys);
        let inner = cong_sum(ds);
        let d = if must { Derivation::trans(vec![split, inner]) } else { Derivation::trans(vec![inner, split]) };
        (y, d)
    }

    /// `X = Y` oriented for the direction at hand.
    fn orient(&self, d: Derivation, must: bool) -> Derivation {
        if must {
            d
        } else {
            d.reverse()
        }
    }

    fn tau_state(&mut self, s: StateId, sc: &StepChain, must: bool) -> (Term, Derivation) {
        let u = self.term(s);
        match sc {
            StepChain::Stay => (u.clone(), Derivation::refl(u)),
            StepChain::Step { transition, then } => {
                let m = self.move_of(s, *transition);
                let first = self.strong_tau(&u, &m, must);
                let (y, rest) = self.tau_dist(&m.term, then, must);
                let d = if must { Derivation::trans(vec![first, rest]) } else { Derivation::trans(vec![rest, first]) };
                (y, d)
            }
        }
    }

    /// For a weak `a` chain from `⟦X⟧`: a term `Y` for its end and `a.Y ⊑may X`.
    fn act_dist(&mut self, a: &Name, x: &Term, c: &Chain) -> (Term, Derivation) {
        let occ: Vec<(Q, Term)> = c.parts.iter().map(|(s, p, _)| (p.clone(), self.term(*s))).collect();
        let mut ys = Vec::new();
        let mut ds = Vec::new();
        for (s, p, sc) in &c.parts {
            let (y, d) = self.act_state(a, *s, sc);
            ys.push((p.clone(), y));
            ds.push((p.clone(), d));
        }
        let y = prob_sum(&ys);
        let d =
            Derivation::trans(vec![may3_chain(a, &ys), cong_sum(ds), Derivation::prob_eq(prob_sum(&occ), x.clone())]);
        (y, d)
    }

    fn act_state(&mut self, a: &Name, s: StateId, sc: &StepChain) -> (Term, Derivation) {
        let u = self.term(s);
        let StepChain::Step { transition, then } = sc else { panic!("weak action chain stays at {u}") };
        let m = self.move_of(s, *transition);
        if m.label == Label::Tau {
            let first = self.strong_tau(&u, &m, false);
            let (y, rest) = self.act_dist(a, &m.term, then);
            (y, Derivation::trans(vec![rest, first]))
        } else {
            let (y, after) = self.tau_dist(&m.term, then, false);
            let lifted = Derivation::cong(&pre(a, Term::Nil), vec![after]);
            let last = self.strong_act(&u, &m);
            (y, Derivation::trans(vec![lifted, last]))
        }
    }
}

/// Splits a weak `a` chain into its `τ̂` prefix and, per occurrence, the state taking the
/// `a` step, its weight, the transition index and the `τ̂` chain after it.
fn split_act(g: &Plts, c: &Chain) -> (Chain, Vec<(StateId, Q, usize, Chain)>) {
    let mut pre_parts = Vec::new();
    let mut leaves = Vec::new();
    for (s, p, sc) in &c.parts {
        let StepChain::Step { transition, then } = sc else { panic!("weak action chain stays") };
        if g.transitions(*s)[*transition].label == Label::Tau {
            let (sub, lv) = split_act(g, then);
            pre_parts.push((*s, p.clone(), StepChain::Step { transition: *transition, then: Arc::new(sub) }));
            leaves.extend(lv.into_iter().map(|(u, q, i, post)| (u, p * &q, i, post)));
        } else {
            pre_parts.push((*s, p.clone(), StepChain::Stay));
            leaves.push((*s, p.clone(), *transition, (**then).clone()));
        }
    }
    (Chain { parts: pre_parts }, leaves)
}

// ----- synthesis ------------------------------------------------------------------------------

/// Index of the conjunct of a characteristic formula that covers transition `(label, target)`.
fn conjunct(g: &Plts, s: StateId, label: &Label, target: &SDist) -> usize {
    let ts = g.transitions(s);
    let visible = ts.iter().filter(|t| matches!(t.label, Label::Visible(_))).count();
    let (base, pool): (usize, Vec<&SDist>) = match label {
        Label::Tau => (visible, ts.iter().filter(|t| t.label == Label::Tau).map(|t| &t.target).collect()),
        _ => (0, ts.iter().filter(|t| matches!(t.label, Label::Visible(_))).map(|t| &t.target).collect()),
    };
    let offset = match label {
        Label::Tau => pool.iter().position(|d| *d == target),
        l => ts
            .iter()
            .filter(|t| matches!(t.label, Label::Visible(_)))
            .position(|t| &t.label == l && &t.target == target),
    };
    base + offset.unwrap_or_else(|| panic!("no {label} move to {target:?} from {s:?}"))
}

fn conjuncts(w: &SatWitness) -> &[SatWitness] {
    match w {
        SatWitness::Conj(ws) => ws,
        _ => panic!("state witness is not a conjunction"),
    }
}

fn sum_parts(w: &SatWitness) -> (&SDist, &[Option<(SDist, SatWitness)>]) {
    match w {
        SatWitness::ProbSum { mid, parts } => (mid, parts),
        _ => panic!("distribution witness is not a sum"),
    }
}

struct Synth<'g> {
    b: Builder<'g>,
    der: Derivatives<'g>,
    act: ActSet,
}

impl<'g> Synth<'g> {
    fn g(&self) -> &'g Plts {
        self.b.g
    }

    /// `N ⊑may Y` for a normal form `N`, given `⟦Y⟧ ⊨ ψ⟦N⟧` with witness `w`.
    fn may_dist(&mut self, n: &Term, y: &Term, yd: &SDist, w: &SatWitness) -> Derivation {
        let nd = self.b.sdist(n);
        let (mid, parts) = sum_parts(w);
        let mut states = Vec::new();
        let mut ds = Vec::new();
        for ((s, p), part) in nd.iter().zip(parts) {
            let (theta, ws) = part.as_ref().expect("positive weight");
            let target = self.b.dist_term(theta);
            states.push((p.clone(), self.b.term(*s)));
            ds.push((p.clone(), self.may_state(*s, &target, theta, ws)));
        }
        let chain = self.der.weak_tau(yd).decompose(mid).expect("witness mid is a weak derivative");
        let (m, reach) = self.b.tau_dist(y, &chain, false);
        let sum = cong_sum(ds);
        let glue = Derivation::prob_eq(sum.rhs.clone(), m);
        Derivation::trans(vec![Derivation::prob_eq(n.clone(), prob_sum(&states)), sum, glue, reach])
    }

    fn may_state(&mut self, s: StateId, y: &Term, yd: &SDist, w: &SatWitness) -> Derivation {
        let u = self.b.term(s);
        let ws = conjuncts(w);
        match &u {
            Term::Nil => Derivation::axiom(Instance::May2 { x: y.clone() }),
            Term::IntChoice(l, r) => {
                let mut sides = Vec::new();
                for op in [l, r] {
                    let target = self.b.sdist(op);
                    let k = conjunct(self.g(), s, &Label::Tau, &target);
                    sides.push(self.may_dist(op, y, yd, &ws[k]));
                }
                Derivation::trans(vec![Derivation::cong(&u, sides), Derivation::axiom(Instance::I1 { x: y.clone() })])
            }
            Term::Prefix(..) | Term::ExtChoice(..) => {
                let (tree, to_tree) = box_to_int(&u);
                let leaves = self.may_leaves(s, &tree, y, yd, ws);
                Derivation::trans(vec![to_tree, leaves])
            }
            _ => panic!("state {u} is not in normal form"),
        }
    }

    /// `X ⊑may Y` for an internal-choice tree `X` of prefixes that are branches of state `s`.
    fn may_leaves(&mut self, s: StateId, x: &Term, y: &Term, yd: &SDist, ws: &[SatWitness]) -> Derivation {
        match x {
            Term::IntChoice(l, r) => {
                let dl = self.may_leaves(s, l, y, yd, ws);
                let dr = self.may_leaves(s, r, y, yd, ws);
                Derivation::trans(vec![
                    Derivation::cong(x, vec![dl, dr]),
                    Derivation::axiom(Instance::I1 { x: y.clone() }),
                ])
            }
            Term::Prefix(act, body) => {
                let (a, body) = (act.name().clone(), (**body).clone());
                let target = self.b.sdist(&body);
                let k = conjunct(self.g(), s, &act.label(), &target);
                let SatWitness::Diamond { after, then } = &ws[k] else { panic!("expected a diamond witness") };
                let chain = self.der.weak_act(yd, &a).decompose(after).expect("witness is a weak derivative");
                let (reached, down) = self.b.act_dist(&a, y, &chain);
                let inner = self.may_dist(&body, &reached, after, then);
                Derivation::trans(vec![Derivation::cong(x, vec![inner]), down])
            }
            _ => panic!("unexpected leaf {x}"),
        }
    }

    /// `X ⊑must N` for a normal form `N`, given `⟦X⟧ ⊨ φ⟦N⟧` with witness `w`.
    fn must_dist(&mut self, x: &Term, xd: &SDist, n: &Term, w: &SatWitness) -> Derivation {
        let nd = self.b.sdist(n);
        let (mid, parts) = sum_parts(w);
        let chain = self.der.weak_tau(xd).decompose(mid).expect("witness mid is a weak derivative");
        let (m, reach) = self.b.tau_dist(x, &chain, true);
        let mut states = Vec::new();
        let mut froms = Vec::new();
        let mut ds = Vec::new();
        for ((s, p), part) in nd.iter().zip(parts) {
            let (theta, ws) = part.as_ref().expect("positive weight");
            let from = self.b.dist_term(theta);
            states.push((p.clone(), self.b.term(*s)));
            froms.push((p.clone(), from.clone()));
            ds.push((p.clone(), self.must_state(&from, theta, *s, ws)));
        }
        Derivation::trans(vec![
            reach,
            Derivation::prob_eq(m, prob_sum(&froms)),
            cong_sum(ds),
            Derivation::prob_eq(prob_sum(&states), n.clone()),
        ])
    }

    fn must_state(&mut self, x: &Term, xd: &SDist, t: StateId, w: &SatWitness) -> Derivation {
        let u = self.b.term(t);
        let ws = conjuncts(w);
        if let Term::IntChoice(l, r) = &u {
            let mut sides = Vec::new();
            for op in [l, r] {
                let target = self.b.sdist(op);
                let k = conjunct(self.g(), t, &Label::Tau, &target);
                sides.push(self.must_dist(x, xd, op, &ws[k]));
            }
            return Derivation::trans(vec![
                Derivation::axiom_reversed(Instance::I1 { x: x.clone() }),
                Derivation::cong(&u, sides),
            ]);
        }
        let branches = box_branches(&u);
        let offered: BTreeSet<Name> = branches.iter().map(|(a, _)| a.name().clone()).collect();
        let refused: ActSet = self.act.difference(&offered).cloned().collect();
        let refusal = self.der.can_weakly_refuse(xd, &refused).expect("refusal witness");
        let (r, to_r) = self.b.tau_dist(x, &refusal, true);
        let mut lower = vec![to_r];
        let mut prime = Vec::new();
        let mut finish = Vec::new();
        for (act, body) in &branches {
            let a = act.name().clone();
            let target = self.b.sdist(body);
            let k = conjunct(self.g(), t, &act.label(), &target);
            let SatWitness::Diamond { after, then } = &ws[k] else { panic!("expected a diamond witness") };
            let chain = self.der.weak_act(xd, &a).decompose(after).expect("witness is a weak derivative");
            let (pre_chain, leaves) = split_act(self.g(), &chain);
            let (from, to_from) = self.b.tau_dist(x, &pre_chain, true);
            lower.push(to_from);
            let mut post = Chain::default();
            let mut stepped = Vec::new();
            for (s, p, i, c) in &leaves {
                let tr = &self.g().transitions(*s)[*i];
                stepped.push((p.clone(), tr.term.clone()));
                post.parts.extend(c.parts.iter().map(|(v, q, sc)| (*v, p * q, sc.clone())));
            }
            let to = prob_sum(&stepped);
            let (reached, to_reached) = self.b.tau_dist(&to, &post, true);
            let rest = self.must_dist(&reached, after, body, then);
            finish.push(Derivation::cong(&pre(&a, Term::Nil), vec![Derivation::trans(vec![to_reached, rest])]));
            prime.push(Must2PrimeBranch { action: a, from, to });
        }
        let copies = lower.len();
        let dup = duplicate(x, copies);
        let spread = cong_int(lower);
        let must2 = Derivation::axiom(Instance::Must2Prime { r, branches: prime });
        let close = cong_ext(finish);
        Derivation::trans(vec![dup, spread, must2, close])
    }
}

/// `X = X ⊓ (X ⊓ ...)` with `n` copies, by I1.
fn duplicate(x: &Term, n: usize) -> Derivation {
    if n <= 1 {
        return Derivation::refl(x.clone());
    }
    let step = Derivation::axiom_reversed(Instance::I1 { x: x.clone() });
    let shape = step.rhs.clone();
    Derivation::trans(vec![step, Derivation::cong(&shape, vec![Derivation::refl(x.clone()), duplicate(x, n - 1)])])
}

/// Congruence over a right-nested internal choice.
fn cong_int(mut ds: Vec<Derivation>) -> Derivation {
    if ds.len() == 1 {
        return ds.pop().unwrap();
    }
    let first = ds.remove(0);
    Derivation::cong(&Term::int(Term::Nil, Term::Nil), vec![first, cong_int(ds)])
}

/// Congruence over a right-nested external choice; the empty choice is `0`.
fn cong_ext(mut ds: Vec<Derivation>) -> Derivation {
    match ds.len() {
        0 => Derivation::refl(Term::Nil),
        1 => ds.pop().unwrap(),
        _ => {
            let first = ds.remove(0);
            Derivation::cong(&Term::ext(Term::Nil, Term::Nil), vec![first, cong_ext(ds)])
        }
    }
}

/// Rewrites a box of prefixes into an internal-choice tree of its branches by May0 and D2.
fn box_to_int(t: &Term) -> (Term, Derivation) {
    match t {
        Term::Prefix(..) => (t.clone(), Derivation::refl(t.clone())),
        Term::ExtChoice(h, rest) => {
            let (tree, d) = box_to_int(rest);
            let first = Derivation::cong(t, vec![Derivation::refl((**h).clone()), d]);
            let spread = spread_prefix(h, &tree);
            (spread.rhs.clone(), Derivation::trans(vec![first, spread]))
        }
        _ => panic!("not a nonempty box: {t}"),
    }
}

/// `a.P □ X = X'` where `X` is an internal-choice tree of prefixes.
fn spread_prefix(h: &Term, x: &Term) -> Derivation {
    let (a, p) = prefix_parts(h);
    match x {
        Term::Prefix(..) => {
            let (b, q) = prefix_parts(x);
            Derivation::axiom(Instance::May0 { a, b, x: p, y: q })
        }
        Term::IntChoice(l, r) => {
            let d2 = Derivation::axiom(Instance::D2 { a, x: p, y: (**l).clone(), z: (**r).clone() });
            let shape = d2.rhs.clone();
            Derivation::trans(vec![d2, Derivation::cong(&shape, vec![spread_prefix(h, l), spread_prefix(h, r)])])
        }
        _ => panic!("unexpected tree {x}"),
    }
}

/// A derivation of `P ⊑ Q` in the may or must theory when the matching preorder holds.
pub fn synth_derivation(p: &Term, q: &Term, theory: Theory) -> Option<Derivation> {
    if p.has_par() || q.has_par() {
        return None;
    }
    let mut act = p.visible_actions();
    act.extend(q.visible_actions());
    match theory {
        Theory::Eq => None,
        Theory::May => {
            let (np, to_np) = normal_form(p).ok()?;
            let mut g = Plts::new();
            let dn = g.add_term(&np);
            let dq = g.add_term(q);
            let phi = CharFormulas::new(&g, Logic::L, act.clone()).of_dist(&dn);
            let mut der = Derivatives::new(&g);
            let w = sat_witness(&mut der, &dq, &phi)?;
            let mut s = Synth { b: Builder::new(&g), der, act };
            let body = s.may_dist(&np, q, &dq, &w);
            Some(Derivation::trans(vec![to_np, body]))
        }
        Theory::Must => {
            let (nq, to_nq) = normal_form(q).ok()?;
            let mut g = Plts::new();
            let dp = g.add_term(p);
            let dn = g.add_term(&nq);
            let phi = CharFormulas::new(&g, Logic::F, act.clone()).of_dist(&dn);
            let mut der = Derivatives::new(&g);
            let w = sat_witness(&mut der, &dp, &phi)?;
            let mut s = Synth { b: Builder::new(&g), der, act };
            let body = s.must_dist(p, &dp, &nq, &w);
            Some(Derivation::trans(vec![body, to_nq.reverse()]))
        }
    }
}

/// The derivative lemma as a derivation: for `⟦P⟧ ⇒τ̂ ⟦Q⟧` reached by `chain`, a term `Q′`
/// with `⟦Q′⟧ = ⟦Q⟧` and `Q′ ⊑may P` (or `P ⊑must Q′`).
pub fn derivative_lemma(g: &Plts, p: &Term, chain: &Chain, theory: Theory) -> (Term, Derivation) {
    Builder::new(g).tau_dist(p, chain, theory == Theory::Must)
}
