//! Modal formulas with refusals, diamonds, conjunction and probabilistic sums; satisfaction,
//! characteristic formulas and characteristic tests.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::Dist;
use crate::geometry::{dominated_point_exists, Direction, OutcomeSet};
use crate::lp::{Cmp, Lp};
use crate::plts::{Derivatives, Plts, SDist, StateId};
use crate::rational::Q;
use crate::syntax::{ext_all, int_all, prob_sum};
use crate::syntax::{omega_i, ActSet, Action, Cursor, Label, Name, ParseError, Term, Tok};
use crate::testing::results_vector;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    Ref(ActSet),
    Diamond(Name, Arc<Formula>),
    Conj(Vec<Arc<Formula>>),
    ProbSum(Vec<(Q, Arc<Formula>)>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("probabilistic sum with no components")]
    EmptySum,
    #[error("weights of a probabilistic sum add up to {0}, not 1")]
    BadWeights(Q),
    #[error("weight {0} outside [0,1]")]
    BadWeight(Q),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Logic {
    /// With refusals.
    F,
    /// Without refusals.
    L,
}

impl Formula {
    pub fn top() -> Formula {
        Formula::Conj(Vec::new())
    }

    pub fn diamond(a: &str, f: Formula) -> Formula {
        Formula::Diamond(Name::new(a), Arc::new(f))
    }

    pub fn refuse<'a, I: IntoIterator<Item = &'a str>>(names: I) -> Formula {
        Formula::Ref(crate::syntax::act_set(names))
    }

    pub fn conj(fs: Vec<Formula>) -> Formula {
        Formula::Conj(fs.into_iter().map(Arc::new).collect())
    }

    pub fn prob_sum(parts: Vec<(Q, Formula)>) -> Formula {
        Formula::ProbSum(parts.into_iter().map(|(p, f)| (p, Arc::new(f))).collect())
    }

    pub fn is_top(&self) -> bool {
        matches!(self, Formula::Conj(v) if v.is_empty())
    }

    /// Modal depth: nesting of diamonds and sums.
    pub fn depth(&self) -> usize {
        match self {
            Formula::Ref(_) => 0,
            Formula::Diamond(_, f) => 1 + f.depth(),
            Formula::Conj(fs) => fs.iter().map(|f| f.depth()).max().unwrap_or(0),
            Formula::ProbSum(ps) => 1 + ps.iter().map(|(_, f)| f.depth()).max().unwrap_or(0),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Formula::Ref(_) => 1,
            Formula::Diamond(_, f) => 1 + f.size(),
            Formula::Conj(fs) => 1 + fs.iter().map(|f| f.size()).sum::<usize>(),
            Formula::ProbSum(ps) => 1 + ps.iter().map(|(_, f)| f.size()).sum::<usize>(),
        }
    }

    /// Refusal-free.
    pub fn in_l(&self) -> bool {
        match self {
            Formula::Ref(_) => false,
            Formula::Diamond(_, f) => f.in_l(),
            Formula::Conj(fs) => fs.iter().all(|f| f.in_l()),
            Formula::ProbSum(ps) => ps.iter().all(|(_, f)| f.in_l()),
        }
    }

    pub fn actions(&self) -> ActSet {
        let mut out = ActSet::new();
        self.collect_actions(&mut out);
        out
    }

    fn collect_actions(&self, out: &mut ActSet) {
        match self {
            Formula::Ref(x) => out.extend(x.iter().cloned()),
            Formula::Diamond(a, f) => {
                out.insert(a.clone());
                f.collect_actions(out);
            }
            Formula::Conj(fs) => fs.iter().for_each(|f| f.collect_actions(out)),
            Formula::ProbSum(ps) => ps.iter().for_each(|(_, f)| f.collect_actions(out)),
        }
    }

    pub fn validate(&self) -> Result<(), FormulaError> {
        match self {
            Formula::Ref(_) => Ok(()),
            Formula::Diamond(_, f) => f.validate(),
            Formula::Conj(fs) => fs.iter().try_for_each(|f| f.validate()),
            Formula::ProbSum(ps) => {
                if ps.is_empty() {
                    return Err(FormulaError::EmptySum);
                }
                for (p, _) in ps {
                    if p.is_negative() || *p > Q::one() {
                        return Err(FormulaError::BadWeight(p.clone()));
                    }
                }
                let total: Q = ps.iter().map(|x| &x.0).sum();
                if !total.is_one() {
                    return Err(FormulaError::BadWeights(total));
                }
                ps.iter().try_for_each(|(_, f)| f.validate())
            }
        }
    }
}

// ----- printing and parsing -------------------------------------------------------------------

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_sum(self, f)
    }
}

fn write_sum(phi: &Formula, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match phi {
        Formula::ProbSum(ps) => {
            for (i, (p, g)) in ps.iter().enumerate() {
                if i > 0 {
                    write!(f, " (+) ")?;
                }
                write!(f, "{p}*")?;
                write_conj(g, f)?;
            }
            Ok(())
        }
        _ => write_conj(phi, f),
    }
}

fn write_conj(phi: &Formula, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match phi {
        Formula::Conj(fs) if fs.len() >= 2 => {
            for (i, g) in fs.iter().enumerate() {
                if i > 0 {
                    write!(f, " & ")?;
                }
                write_unary(g, f)?;
            }
            Ok(())
        }
        _ => write_unary(phi, f),
    }
}

fn write_unary(phi: &Formula, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match phi {
        Formula::Ref(x) => {
            write!(f, "ref{{")?;
            for (i, a) in x.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, "}}")
        }
        Formula::Diamond(a, g) => {
            write!(f, "<{a}>")?;
            write_unary(g, f)
        }
        Formula::Conj(fs) if fs.is_empty() => write!(f, "true"),
        Formula::Conj(fs) if fs.len() == 1 => {
            write!(f, "all{{")?;
            write_sum(&fs[0], f)?;
            write!(f, "}}")
        }
        _ => {
            write!(f, "(")?;
            write_sum(phi, f)?;
            write!(f, ")")
        }
    }
}

/// Parses `ref{a,b}`, `<a>f`, `f & g`, `p*f (+) q*g`, `true`, `all{f, ...}` and parentheses.
pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    parse_formula_with_alphabet(text, None)
}

pub fn parse_formula_with_alphabet(text: &str, alphabet: Option<&ActSet>) -> Result<Formula, ParseError> {
    let mut p = FormulaParser { cur: Cursor::new(text)?, alphabet };
    let f = p.sum()?;
    if !p.cur.at_end() {
        return p.cur.unexpected();
    }
    Ok(f)
}

struct FormulaParser<'a> {
    cur: Cursor,
    alphabet: Option<&'a ActSet>,
}

impl FormulaParser<'_> {
    fn sum(&mut self) -> Result<Formula, ParseError> {
        if !matches!(self.cur.peek(), Tok::Num(_)) {
            return self.conj();
        }
        let mut parts = Vec::new();
        loop {
            let here = self.cur.pos;
            let p = self.cur.number()?;
            if p > Q::one() {
                return Err(self.cur.lex.error(here, format!("weight {p} outside [0,1]")));
            }
            self.cur.expect(Tok::Star)?;
            parts.push((p, Arc::new(self.conj()?)));
            if *self.cur.peek() != Tok::OPlus {
                break;
            }
            self.cur.bump();
        }
        let total: Q = parts.iter().map(|x| &x.0).sum();
        if !total.is_one() {
            return self.cur.err(format!("weights add up to {total}, not 1"));
        }
        Ok(Formula::ProbSum(parts))
    }

    fn conj(&mut self) -> Result<Formula, ParseError> {
        let first = self.unary()?;
        if *self.cur.peek() != Tok::Amp {
            return Ok(first);
        }
        let mut fs = vec![Arc::new(first)];
        while *self.cur.peek() == Tok::Amp {
            self.cur.bump();
            fs.push(Arc::new(self.unary()?));
        }
        Ok(Formula::Conj(fs))
    }

    fn name(&mut self) -> Result<Name, ParseError> {
        let here = self.cur.pos;
        let n = self.cur.action_name()?;
        if crate::syntax::is_success_name(&n) || n == "tau" {
            return Err(self.cur.lex.error(here, format!("`{n}` is not a visible action")));
        }
        if let Some(a) = self.alphabet {
            if !a.contains(&Name::new(&n)) {
                return Err(self.cur.lex.error(here, format!("unknown action `{n}`")));
            }
        }
        Ok(Name::new(&n))
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.cur.peek().clone() {
            Tok::Lt => {
                self.cur.bump();
                let a = self.name()?;
                self.cur.expect(Tok::Gt)?;
                Ok(Formula::Diamond(a, Arc::new(self.unary()?)))
            }
            Tok::LParen => {
                self.cur.bump();
                let f = self.sum()?;
                self.cur.expect(Tok::RParen)?;
                Ok(f)
            }
            Tok::Ident(s) if s == "true" => {
                self.cur.bump();
                Ok(Formula::top())
            }
            Tok::Ident(s) if s == "ref" => {
                self.cur.bump();
                self.cur.expect(Tok::LBrace)?;
                let mut x = ActSet::new();
                if *self.cur.peek() != Tok::RBrace {
                    loop {
                        x.insert(self.name()?);
                        if *self.cur.peek() != Tok::Comma {
                            break;
                        }
                        self.cur.bump();
                    }
                }
                self.cur.expect(Tok::RBrace)?;
                Ok(Formula::Ref(x))
            }
            Tok::Ident(s) if s == "all" => {
                self.cur.bump();
                self.cur.expect(Tok::LBrace)?;
                let mut fs = Vec::new();
                if *self.cur.peek() != Tok::RBrace {
                    loop {
                        fs.push(Arc::new(self.sum()?));
                        if *self.cur.peek() != Tok::Comma {
                            break;
                        }
                        self.cur.bump();
                    }
                }
                self.cur.expect(Tok::RBrace)?;
                Ok(Formula::Conj(fs))
            }
            _ => self.cur.unexpected(),
        }
    }
}

// ----- satisfaction ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
struct LinExpr {
    terms: Vec<(usize, Q)>,
    constant: Q,
}

impl LinExpr {
    fn constant(c: Q) -> LinExpr {
        LinExpr { terms: Vec::new(), constant: c }
    }

    fn var(v: usize) -> LinExpr {
        LinExpr { terms: vec![(v, Q::one())], constant: Q::zero() }
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.constant.is_zero()
    }

    fn add_scaled(&mut self, other: &LinExpr, by: &Q) {
        if by.is_zero() {
            return;
        }
        self.terms.extend(other.terms.iter().map(|(v, c)| (*v, c * by)));
        self.constant += &other.constant * by;
    }

    fn eval(&self, x: &[Q]) -> Q {
        let mut acc = self.constant.clone();
        for (v, c) in &self.terms {
            acc += c * &x[*v];
        }
        acc
    }

    /// Adds `self - rhs = 0`.
    fn equate(&self, rhs: &LinExpr, lp: &mut Lp) {
        let mut terms = self.terms.clone();
        terms.extend(rhs.terms.iter().map(|(v, c)| (*v, -c)));
        lp.constrain(terms, Cmp::Eq, &rhs.constant - &self.constant);
    }
}

/// A sub-distribution whose entries are linear expressions over the LP variables.
type Cone = BTreeMap<StateId, LinExpr>;

fn mass(y: &Cone) -> LinExpr {
    let mut m = LinExpr::default();
    for e in y.values() {
        m.add_scaled(e, &Q::one());
    }
    m
}

enum Enc {
    Ref,
    Diamond { z: Cone, then: Box<Enc> },
    Conj(Vec<Enc>),
    ProbSum { z: Cone, parts: Vec<Option<(Cone, Enc)>> },
}

/// Evidence that a distribution satisfies a formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatWitness {
    Ref,
    /// `Δ ⇒â after` with `after ⊨ ψ`.
    Diamond {
        after: SDist,
        then: Box<SatWitness>,
    },
    Conj(Vec<SatWitness>),
    /// `Δ ⇒τ̂ mid = Σ p_i·Δ_i` with `Δ_i ⊨ φ_i`; components of weight zero carry nothing.
    ProbSum {
        mid: SDist,
        parts: Vec<Option<(SDist, SatWitness)>>,
    },
}

struct Encoder<'d, 'g> {
    der: &'d mut Derivatives<'g>,
    lp: Lp,
}

impl Encoder<'_, '_> {
    /// Constrains `y` to the cone over the distributions satisfying `phi`.
    fn encode(&mut self, phi: &Formula, y: &Cone) -> Enc {
        match phi {
            Formula::Ref(x) => {
                for (s, e) in y {
                    if !self.der.state_can_weakly_refuse(*s, x) {
                        e.equate(&LinExpr::default(), &mut self.lp);
                    }
                }
                Enc::Ref
            }
            Formula::Diamond(a, psi) => {
                let mut z = Cone::new();
                for (s, e) in y {
                    let verts = self.der.act_state(*s, a);
                    self.spread(e, verts.iter().map(|v| &v.0), &mut z);
                }
                let then = self.encode(psi, &z);
                Enc::Diamond { z, then: Box::new(then) }
            }
            Formula::Conj(fs) => Enc::Conj(fs.iter().map(|f| self.encode(f, y)).collect()),
            Formula::ProbSum(ps) => {
                let mut z = Cone::new();
                for (s, e) in y {
                    let verts = self.der.tau_state(*s);
                    self.spread(e, verts.iter().map(|v| &v.0), &mut z);
                }
                let live: Vec<usize> = (0..ps.len()).filter(|&i| ps[i].0.is_positive()).collect();
                let mut parts: Vec<Option<(Cone, Enc)>> = (0..ps.len()).map(|_| None).collect();
                if live.len() == 1 {
                    let i = live[0];
                    let enc = self.encode(&ps[i].1, &z);
                    parts[i] = Some((z.clone(), enc));
                } else {
                    let m = mass(y);
                    let mut cones: Vec<Cone> = Vec::new();
                    for &i in &live {
                        let zi: Cone = z.keys().map(|t| (*t, LinExpr::var(self.lp.var()))).collect();
                        let mut want = LinExpr::default();
                        want.add_scaled(&m, &ps[i].0);
                        mass(&zi).equate(&want, &mut self.lp);
                        cones.push(zi);
                    }
                    for (t, e) in &z {
                        let mut sum = LinExpr::default();
                        for zi in &cones {
                            sum.add_scaled(&zi[t], &Q::one());
                        }
                        sum.equate(e, &mut self.lp);
                    }
                    for (&i, zi) in live.iter().zip(cones) {
                        let enc = self.encode(&ps[i].1, &zi);
                        parts[i] = Some((zi, enc));
                    }
                }
                Enc::ProbSum { z, parts }
            }
        }
    }

    /// `z += e·v` for `v` ranging over the hull of `verts`.
    fn spread<'v>(&mut self, e: &LinExpr, verts: impl ExactSizeIterator<Item = &'v SDist>, z: &mut Cone) {
        if e.is_zero() {
            return;
        }
        let n = verts.len();
        if n == 0 {
            e.equate(&LinExpr::default(), &mut self.lp);
            return;
        }
        if n == 1 {
            for v in verts {
                for (t, p) in v.iter() {
                    z.entry(*t).or_default().add_scaled(e, p);
                }
            }
            return;
        }
        let mut total = LinExpr::default();
        for v in verts {
            let lam = LinExpr::var(self.lp.var());
            total.add_scaled(&lam, &Q::one());
            for (t, p) in v.iter() {
                z.entry(*t).or_default().add_scaled(&lam, p);
            }
        }
        total.equate(e, &mut self.lp);
    }
}

fn concrete(c: &Cone, x: &[Q]) -> SDist {
    let vals: Vec<(StateId, Q)> = c.iter().map(|(s, e)| (*s, e.eval(x))).filter(|(_, v)| v.is_positive()).collect();
    let m: Q = vals.iter().map(|v| &v.1).sum();
    Dist::from_pairs(vals.into_iter().map(|(s, v)| (s, v / &m))).expect("positive mass")
}

fn extract(enc: &Enc, x: &[Q]) -> SatWitness {
    match enc {
        Enc::Ref => SatWitness::Ref,
        Enc::Diamond { z, then } => SatWitness::Diamond { after: concrete(z, x), then: Box::new(extract(then, x)) },
        Enc::Conj(es) => SatWitness::Conj(es.iter().map(|e| extract(e, x)).collect()),
        Enc::ProbSum { z, parts } => SatWitness::ProbSum {
            mid: concrete(z, x),
            parts: parts.iter().map(|p| p.as_ref().map(|(zi, e)| (concrete(zi, x), extract(e, x)))).collect(),
        },
    }
}

/// `Δ ⊨ φ`, with evidence.
pub fn sat_witness(der: &mut Derivatives, d: &SDist, phi: &Formula) -> Option<SatWitness> {
    let y: Cone = d.iter().map(|(s, p)| (*s, LinExpr::constant(p.clone()))).collect();
    let mut enc = Encoder { der, lp: Lp::new() };
    let tree = enc.encode(phi, &y);
    let x = enc.lp.solve()?;
    Some(extract(&tree, &x))
}

pub fn sat(der: &mut Derivatives, d: &SDist, phi: &Formula) -> bool {
    sat_witness(der, d, phi).is_some()
}

/// Re-checks a witness clause by clause against the weak-derivative polytopes.
pub fn check_witness(der: &mut Derivatives, d: &SDist, phi: &Formula, w: &SatWitness) -> bool {
    match (phi, w) {
        (Formula::Ref(x), SatWitness::Ref) => der.can_weakly_refuse(d, x).is_some(),
        (Formula::Diamond(a, psi), SatWitness::Diamond { after, then }) => {
            der.weak_act(d, a).contains(after) && check_witness(der, after, psi, then)
        }
        (Formula::Conj(fs), SatWitness::Conj(ws)) => {
            fs.len() == ws.len() && fs.iter().zip(ws).all(|(f, w)| check_witness(der, d, f, w))
        }
        (Formula::ProbSum(ps), SatWitness::ProbSum { mid, parts }) => {
            if ps.len() != parts.len() || !der.weak_tau(d).contains(mid) {
                return false;
            }
            let mut mix: Vec<(Q, &SDist)> = Vec::new();
            for ((p, f), part) in ps.iter().zip(parts) {
                match part {
                    None if p.is_zero() => {}
                    Some((di, wi)) if p.is_positive() => {
                        if !check_witness(der, di, f, wi) {
                            return false;
                        }
                        mix.push((p.clone(), di));
                    }
                    _ => return false,
                }
            }
            Dist::mix(mix).ok().as_ref() == Some(mid)
        }
        _ => false,
    }
}

// ----- characteristic formulas ----------------------------------------------------------------

/// Builds characteristic formulas over a fixed alphabet, sharing the formula of each state.
pub struct CharFormulas<'g> {
    g: &'g Plts,
    logic: Logic,
    act: ActSet,
    memo: HashMap<StateId, Arc<Formula>>,
}

impl<'g> CharFormulas<'g> {
    pub fn new(g: &'g Plts, logic: Logic, act: ActSet) -> CharFormulas<'g> {
        CharFormulas::resume(g, logic, act, HashMap::new())
    }

    /// Continues with the formulas of an earlier builder over the same pLTS and alphabet.
    pub fn resume(g: &'g Plts, logic: Logic, act: ActSet, memo: HashMap<StateId, Arc<Formula>>) -> CharFormulas<'g> {
        CharFormulas { g, logic, act, memo }
    }

    pub fn into_memo(self) -> HashMap<StateId, Arc<Formula>> {
        self.memo
    }

    pub fn of_state(&mut self, s: StateId) -> Arc<Formula> {
        if let Some(f) = self.memo.get(&s) {
            return f.clone();
        }
        let mut conj = Vec::new();
        let mut stable = true;
        let mut refused = self.act.clone();
        for t in self.g.transitions(s) {
            match &t.label {
                Label::Visible(a) => {
                    refused.remove(a);
                    conj.push(Arc::new(Formula::Diamond(a.clone(), self.of_dist(&t.target))));
                }
                Label::Tau => stable = false,
                Label::Success(_) => {}
            }
        }
        if stable {
            if self.logic == Logic::F {
                conj.push(Arc::new(Formula::Ref(refused)));
            }
        } else {
            for t in self.g.transitions(s) {
                if t.label == Label::Tau {
                    conj.push(self.of_dist(&t.target));
                }
            }
        }
        let f = Arc::new(Formula::Conj(conj));
        self.memo.insert(s, f.clone());
        f
    }

    pub fn of_dist(&mut self, d: &SDist) -> Arc<Formula> {
        Arc::new(Formula::ProbSum(d.iter().map(|(s, p)| (p.clone(), self.of_state(*s))).collect()))
    }
}

pub fn char_formula(g: &Plts, d: &SDist, logic: Logic, act: &ActSet) -> Arc<Formula> {
    CharFormulas::new(g, logic, act.clone()).of_dist(d)
}

// ----- characteristic tests -------------------------------------------------------------------

/// A test with its target value; `omega` lists every success action allocated for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharTest {
    pub test: Term,
    pub omega: Vec<Name>,
    pub target: Vec<Q>,
}

impl CharTest {
    /// Outcomes of the test on a distribution of `g`, over the test's success alphabet.
    pub fn outcomes(&self, g: &Plts, d: &SDist) -> OutcomeSet {
        let process = g.dist_term(d);
        let mut act = self.test.visible_actions();
        act.extend(process.visible_actions());
        let (h, init) = Plts::build(&Term::par(act, self.test.clone(), process));
        results_vector(&h, &init, &self.omega)
    }

    /// Some outcome lies below the target.
    pub fn passes_below(&self, g: &Plts, d: &SDist) -> bool {
        dominated_point_exists(&self.outcomes(g, d), &self.target, Direction::Below)
    }

    /// Some outcome lies above the target.
    pub fn passes_above(&self, g: &Plts, d: &SDist) -> bool {
        dominated_point_exists(&self.outcomes(g, d), &self.target, Direction::Above)
    }
}

struct Fresh {
    next: usize,
    names: Vec<Name>,
}

impl Fresh {
    fn take(&mut self) -> usize {
        self.next += 1;
        self.names.push(omega_i(self.next));
        self.next - 1
    }
}

/// A target vector over indices into the fresh-name list, filled in at the end.
type Sparse = BTreeMap<usize, Q>;

fn unit(k: usize) -> Sparse {
    BTreeMap::from([(k, Q::one())])
}

fn combine(parts: &[(Q, &Sparse)]) -> Sparse {
    let mut out = Sparse::new();
    for (p, v) in parts {
        for (k, x) in v.iter() {
            *out.entry(*k).or_insert_with(Q::zero) += p * x;
        }
    }
    out.retain(|_, x| !x.is_zero());
    out
}

fn success(k: usize, names: &[Name]) -> Term {
    Term::prefix(Action::Success(names[k].clone()), Term::Nil)
}

fn build_test(phi: &Formula, fresh: &mut Fresh) -> (Term, Sparse) {
    match phi {
        Formula::Conj(fs) if fs.is_empty() => {
            let k = fresh.take();
            (success(k, &fresh.names), unit(k))
        }
        Formula::Ref(x) => {
            let k = fresh.take();
            let branches: Vec<Term> =
                x.iter().map(|a| Term::prefix(Action::Visible(a.clone()), success(k, &fresh.names))).collect();
            (ext_all(&branches), Sparse::new())
        }
        Formula::Diamond(a, psi) => {
            let (t, v) = build_test(psi, fresh);
            let k = fresh.take();
            (Term::ext(success(k, &fresh.names), Term::prefix(Action::Visible(a.clone()), t)), v)
        }
        Formula::Conj(fs) => {
            let built: Vec<(Term, Sparse)> = fs.iter().map(|f| build_test(f, fresh)).collect();
            let w = Q::new(1, fs.len() as i64);
            let test = prob_sum(&built.iter().map(|(t, _)| (w.clone(), t.clone())).collect::<Vec<_>>());
            let v = combine(&built.iter().map(|(_, v)| (w.clone(), v)).collect::<Vec<_>>());
            (test, v)
        }
        Formula::ProbSum(ps) => {
            let built: Vec<(Term, Sparse)> = ps.iter().map(|(_, f)| build_test(f, fresh)).collect();
            let half = Q::new(1, 2);
            let mut branches = Vec::new();
            let mut targets = Vec::new();
            for (t, v) in built {
                let k = fresh.take();
                branches.push(Term::prob(half.clone(), t, success(k, &fresh.names)));
                targets.push(combine(&[(half.clone(), &v), (half.clone(), &unit(k))]));
            }
            let v = combine(&ps.iter().zip(&targets).map(|((p, _), v)| (p.clone(), v)).collect::<Vec<_>>());
            (int_all(&branches), v)
        }
    }
}

/// The characteristic test of `φ` with fresh success actions `w1, w2, ...`.
pub fn char_test(phi: &Formula) -> CharTest {
    let mut fresh = Fresh { next: 0, names: Vec::new() };
    let (test, v) = build_test(phi, &mut fresh);
    let target = (0..fresh.names.len()).map(|k| v.get(&k).cloned().unwrap_or_else(Q::zero)).collect();
    CharTest { test, omega: fresh.names, target }
}

// ----- logical preorders ----------------------------------------------------------------------

/// Both processes in one pLTS, with the alphabet of their visible actions.
pub struct Joint {
    pub plts: Plts,
    pub p: SDist,
    pub q: SDist,
    pub act: ActSet,
}

impl Joint {
    pub fn new(p: &Term, q: &Term) -> Joint {
        let mut plts = Plts::new();
        let dp = plts.add_term(p);
        let dq = plts.add_term(q);
        let mut act = p.visible_actions();
        act.extend(q.visible_actions());
        Joint { plts, p: dp, q: dq, act }
    }
}

/// `P ⊑L Q` as `⟦Q⟧ ⊨ ψ⟦P⟧`, and `P ⊑F Q` as `⟦P⟧ ⊨ φ⟦Q⟧`.
pub fn logic_leq(p: &Term, q: &Term, logic: Logic) -> bool {
    let j = Joint::new(p, q);
    let mut der = Derivatives::new(&j.plts);
    match logic {
        Logic::L => sat(&mut der, &j.q, &char_formula(&j.plts, &j.p, Logic::L, &j.act)),
        Logic::F => sat(&mut der, &j.p, &char_formula(&j.plts, &j.q, Logic::F, &j.act)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{act_set, parse};

    fn t(s: &str) -> Term {
        parse(s).unwrap()
    }

    fn f(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    fn holds(p: &str, phi: &str) -> bool {
        let (g, d) = Plts::build(&t(p));
        let mut der = Derivatives::new(&g);
        let w = sat_witness(&mut der, &d, &f(phi));
        if let Some(w) = &w {
            assert!(check_witness(&mut der, &d, &f(phi), w), "witness for {p} |= {phi}");
        }
        w.is_some()
    }

    #[test]
    fn formula_round_trip() {
        for s in [
            "true",
            "ref{a,b}",
            "ref{}",
            "<a>true",
            "<a>ref{b} & <b>(1/2*true (+) 1/2*ref{a})",
            "1/3*<a>true (+) 2/3*(ref{a} & <b>true)",
            "1*all{<a>true}",
            "<a>(1*true)",
            "0*true (+) 1*<b><a>true",
        ] {
            let phi = f(s);
            assert_eq!(f(&phi.to_string()), phi, "{s}");
        }
        assert!(parse_formula("1/2*true (+) 1/3*true").is_err());
        assert!(parse_formula("<w>true").is_err());
        assert!(parse_formula_with_alphabet("<c>true", Some(&act_set(["a"]))).is_err());
    }

    #[test]
    fn json_mirrors_ast() {
        let phi = f("<a>ref{b} & (1/2*true (+) 1/2*true)");
        let j = serde_json::to_string(&phi).unwrap();
        let back: Formula = serde_json::from_str(&j).unwrap();
        assert_eq!(back, phi);
    }

    #[test]
    fn basic_satisfaction() {
        assert!(holds("a |~| b", "<a>true"));
        assert!(!holds("a |+1/2| b", "<a>true"));
        assert!(holds("0", "true"));
        assert!(holds("a |+1/2| b", "true"));
        assert!(holds("a", "ref{b}"));
        assert!(!holds("(a [] a) |+1/2| (a [] b)", "ref{b}"));
        assert!(holds("a |+1/2| b", "1/2*<a>true (+) 1/2*<b>true"));
        assert!(holds("a |~| b", "1/2*<a>true (+) 1/2*<b>true"));
        assert!(!holds("a [] b", "1/2*<a>true (+) 1/2*ref{a,b}"));
        assert!(holds("(a |+1/2| b) |~| (a |+1/2| b)", "1/2*<a>true (+) 1/2*<b>true"));
        assert!(holds("a.(b |~| c)", "<a>(1/3*<b>true (+) 2/3*<c>true)"));
        assert!(holds("a.b |~| a.c", "<a>(1/3*<b>true (+) 2/3*<c>true)"));
        assert!(!holds("a.(b |+1/2| c)", "<a>(1/3*<b>true (+) 2/3*<c>true)"));
        assert!(holds("a.(b |~| c) [] a.(b |+1/3| c)", "<a>(1/3*<b>true (+) 2/3*<c>true)"));
        assert!(holds("a |~| b", "<a>true & <b>true & ref{a} & ref{b}"));
        assert!(!holds("a [] b", "ref{a}"));
    }

    #[test]
    fn characteristic_formulas_hold_of_their_source() {
        for p in ["0", "a |+1/2| b", "a |~| b", "a.(b |+1/3| c) [] (b |~| a)", "(a [] b) |+1/2| (a |~| a.b)"] {
            let (g, d) = Plts::build(&t(p));
            let act = t(p).visible_actions();
            let mut der = Derivatives::new(&g);
            for logic in [Logic::F, Logic::L] {
                let phi = char_formula(&g, &d, logic, &act);
                assert!(sat(&mut der, &d, &phi), "{p}");
                assert_eq!(phi.in_l(), logic == Logic::L || !phi.to_string().contains("ref"));
            }
        }
        let (g, d) = Plts::build(&Term::Nil);
        let phi = char_formula(&g, &d, Logic::F, &act_set(["a", "b"]));
        assert_eq!(phi.to_string(), "1*all{ref{a,b}}");
        let (g, d) = Plts::build(&t("a |+1/2| b"));
        let phi = char_formula(&g, &d, Logic::F, &act_set(["a", "b"]));
        assert_eq!(phi.to_string(), "1/2*<a>(1*all{ref{a,b}}) & ref{b} (+) 1/2*<b>(1*all{ref{a,b}}) & ref{a}");
    }

    #[test]
    fn characteristic_test_shapes() {
        let top = char_test(&Formula::top());
        assert_eq!(top.test, t("w1"));
        assert_eq!(top.target, vec![Q::one()]);
        let r = char_test(&f("ref{a,b}"));
        assert_eq!(r.test, t("a.w1 [] b.w1"));
        assert_eq!(r.target, vec![Q::zero()]);
        let d = char_test(&f("<a>true"));
        assert_eq!(d.test, t("w2 [] a.w1"));
        assert_eq!(d.target, vec![Q::one(), Q::zero()]);
    }

    #[test]
    fn characteristic_tests_agree_with_satisfaction() {
        let procs = ["a |~| b", "a |+1/2| b", "a [] b", "a.(b |~| c)", "0", "(a [] b) |+1/3| a.c"];
        let forms = [
            "<a>true",
            "ref{b}",
            "<a>true & <b>true",
            "1/2*<a>true (+) 1/2*<b>true",
            "<a>(ref{b,c} & <c>true)",
            "1/3*<a>true (+) 2/3*ref{a}",
            "<a>ref{}",
        ];
        for p in procs {
            let (g, d) = Plts::build(&t(p));
            let mut der = Derivatives::new(&g);
            for s in forms {
                let phi = f(s);
                let ct = char_test(&phi);
                assert_eq!(sat(&mut der, &d, &phi), ct.passes_below(&g, &d), "{p} |= {s}");
                if phi.in_l() {
                    assert_eq!(sat(&mut der, &d, &phi), ct.passes_above(&g, &d), "{p} |= {s} (above)");
                }
            }
        }
    }

    #[test]
    fn logical_preorders_on_fixtures() {
        let pc = "a |+1/2| b";
        let pp = "(a |+1/2| b) |~| (a |+1/2| b)";
        let pe = "(a |+1/2| b) [] (a |+1/2| b)";
        assert!(logic_leq(&t(pp), &t(pc), Logic::L));
        assert!(logic_leq(&t(pc), &t(pp), Logic::L));
        assert!(logic_leq(&t(pc), &t(pe), Logic::L));
        assert!(!logic_leq(&t(pe), &t(pc), Logic::F));
        assert!(logic_leq(&t(pc), &t(pc), Logic::F));
    }
}
