//! Applying tests to processes and gathering their outcomes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{apply_success, compare, minkowski_mix, GeometryError, Mode, Order, OutcomeSet};
use crate::plts::{Plts, SDist, StateId};
use crate::rational::Q;
use crate::syntax::{classify, omega, ActSet, ClassifyError, Label, Name, Term, TermClass};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TestingError {
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("the process `{0}` performs success actions")]
    ProcessHasSuccess(String),
    #[error("`{0}` is not a scalar test")]
    NotScalar(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `T |Act P` with its pLTS, where `Act` is every visible action of `T` and `P`.
pub struct TestApplication {
    pub test: Term,
    pub process: Term,
    pub composed: Term,
    pub plts: Plts,
    pub initial: SDist,
    /// Success alphabet of the test; `[w]` for scalar tests and success-free tests.
    pub omega: Vec<Name>,
}

impl TestApplication {
    /// Scalar state-based outcomes `V`.
    pub fn results_state(&self) -> OutcomeSet {
        results_state(&self.plts, &self.initial)
    }

    /// Scalar action-based outcomes `V̄`.
    pub fn results_action(&self) -> OutcomeSet {
        results_action(&self.plts, &self.initial)
    }

    /// Convex vector outcomes over the test's success alphabet.
    pub fn results_vector(&self) -> OutcomeSet {
        results_vector(&self.plts, &self.initial, &self.omega)
    }
}

pub fn success_alphabet(t: &Term) -> Result<Vec<Name>, TestingError> {
    Ok(match classify(t)? {
        TermClass::Process | TermClass::ScalarTest => vec![omega()],
        TermClass::VectorTest(o) => o,
    })
}

pub fn apply_test(test: &Term, process: &Term) -> Result<TestApplication, TestingError> {
    if classify(process)? != TermClass::Process {
        return Err(TestingError::ProcessHasSuccess(process.to_string()));
    }
    let omega = success_alphabet(test)?;
    let mut act: ActSet = test.visible_actions();
    act.extend(process.visible_actions());
    let composed = Term::par(act, test.clone(), process.clone());
    let (plts, initial) = Plts::build(&composed);
    Ok(TestApplication { test: test.clone(), process: process.clone(), composed, plts, initial, omega })
}

fn scalar(points: &[i64]) -> OutcomeSet {
    OutcomeSet::raw(vec![omega()], points.iter().map(|&x| vec![Q::from_int(x)]).collect())
}

fn expect_dist<F>(d: &SDist, mut per_state: F) -> OutcomeSet
where
    F: FnMut(StateId) -> OutcomeSet,
{
    let sets: Vec<(Q, OutcomeSet)> = d.iter().map(|(s, p)| (p.clone(), per_state(*s))).collect();
    let parts: Vec<(Q, &OutcomeSet)> = sets.iter().map(|(p, x)| (p.clone(), x)).collect();
    minkowski_mix(&parts).expect("outcome sets of one pLTS share their alphabet")
}

/// `V(Δ)`: a success state scores 1, a deadlock 0, and otherwise the union over all moves.
pub fn results_state(g: &Plts, d: &SDist) -> OutcomeSet {
    fn go(g: &Plts, s: StateId, memo: &mut HashMap<StateId, OutcomeSet>) -> OutcomeSet {
        if let Some(x) = memo.get(&s) {
            return x.clone();
        }
        let out = if g.enables_success(s) {
            scalar(&[1])
        } else if g.is_deadlocked(s) {
            scalar(&[0])
        } else {
            let mut pts = Vec::new();
            for t in g.transitions(s) {
                let x = expect_dist(&t.target, |u| go(g, u, memo));
                pts.extend(x.points);
            }
            OutcomeSet::raw(vec![omega()], pts)
        };
        memo.insert(s, out.clone());
        out
    }
    let mut memo = HashMap::new();
    expect_dist(d, |s| go(g, s, &mut memo))
}

/// `V̄(Δ)`: performing a success action scores 1; all other moves contribute their outcomes.
pub fn results_action(g: &Plts, d: &SDist) -> OutcomeSet {
    fn go(g: &Plts, s: StateId, memo: &mut HashMap<StateId, OutcomeSet>) -> OutcomeSet {
        if let Some(x) = memo.get(&s) {
            return x.clone();
        }
        let out = if g.is_deadlocked(s) {
            scalar(&[0])
        } else {
            let mut pts = Vec::new();
            for t in g.transitions(s) {
                if t.label.is_success() {
                    pts.push(vec![Q::one()]);
                } else {
                    pts.extend(expect_dist(&t.target, |u| go(g, u, memo)).points);
                }
            }
            OutcomeSet::raw(vec![omega()], pts)
        };
        memo.insert(s, out.clone());
        out
    }
    let mut memo = HashMap::new();
    expect_dist(d, |s| go(g, s, &mut memo))
}

/// `V̄↑Ω(Δ)` over the success alphabet `omega`, as a convex set.
pub fn results_vector(g: &Plts, d: &SDist, omega: &[Name]) -> OutcomeSet {
    let mut memo = HashMap::new();
    results_vector_memo(g, d, omega, &mut memo)
}

pub(crate) fn results_vector_memo(
    g: &Plts,
    d: &SDist,
    omega: &[Name],
    memo: &mut HashMap<StateId, OutcomeSet>,
) -> OutcomeSet {
    fn go(g: &Plts, s: StateId, omega: &[Name], memo: &mut HashMap<StateId, OutcomeSet>) -> OutcomeSet {
        if let Some(x) = memo.get(&s) {
            return x.clone();
        }
        let out = if g.is_deadlocked(s) {
            OutcomeSet::zero(omega.to_vec(), Mode::Convex)
        } else {
            let mut pts = Vec::new();
            for t in g.transitions(s) {
                let x = expect_dist(&t.target, |u| go(g, u, omega, memo));
                pts.extend(apply_success(&t.label, &x).points);
            }
            OutcomeSet::hull(omega.to_vec(), pts)
        };
        memo.insert(s, out.clone());
        out
    }
    expect_dist(d, |s| go(g, s, omega, memo))
}

/// Rewrites every `w.Q` into `τ.w`, turning an action-based test into a state-based one with
/// the same outcomes.
pub fn state_to_action_test(t: &Term) -> Term {
    match t {
        Term::Nil => Term::Nil,
        Term::Prefix(a, _) if a.label().is_success() => Term::tau(Term::prefix(a.clone(), Term::Nil)),
        Term::Prefix(a, p) => Term::prefix(a.clone(), state_to_action_test(p)),
        Term::IntChoice(l, r) => Term::int(state_to_action_test(l), state_to_action_test(r)),
        Term::ExtChoice(l, r) => Term::ext(state_to_action_test(l), state_to_action_test(r)),
        Term::Par(a, l, r) => Term::par(a.clone(), state_to_action_test(l), state_to_action_test(r)),
        Term::ProbChoice(p, l, r) => Term::prob(p.clone(), state_to_action_test(l), state_to_action_test(r)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    May,
    Must,
}

impl Kind {
    pub fn order(self) -> Order {
        match self {
            Kind::May => Order::Hoare,
            Kind::Must => Order::Smyth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavour {
    State,
    Action,
    Vector,
}

/// Outcomes of applying `test` to `process` in the given flavour.
pub fn outcomes(flavour: Flavour, test: &Term, process: &Term) -> Result<OutcomeSet, TestingError> {
    let app = apply_test(test, process)?;
    if flavour != Flavour::Vector && app.omega.len() != 1 {
        return Err(TestingError::NotScalar(test.to_string()));
    }
    Ok(match flavour {
        Flavour::State => app.results_state(),
        Flavour::Action => app.results_action(),
        Flavour::Vector => app.results_vector(),
    })
}

/// The single-test comparison: Hoare for may, Smyth for must.
pub fn test_order(kind: Kind, flavour: Flavour, test: &Term, p: &Term, q: &Term) -> Result<bool, TestingError> {
    let x = outcomes(flavour, test, p)?;
    let y = outcomes(flavour, test, q)?;
    Ok(compare(kind.order(), &x, &y)?)
}

/// Verdicts of a finite battery of tests; true only if every test agrees.
pub fn battery_order(kind: Kind, flavour: Flavour, tests: &[Term], p: &Term, q: &Term) -> Result<bool, TestingError> {
    for t in tests {
        if !test_order(kind, flavour, t, p, q)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Labels of the moves of `s` in a canonical order; used by reports.
pub fn move_labels(g: &Plts, s: StateId) -> Vec<Label> {
    let mut v: Vec<Label> = g.transitions(s).iter().map(|t| t.label.clone()).collect();
    v.sort();
    v.dedup();
    v
}
