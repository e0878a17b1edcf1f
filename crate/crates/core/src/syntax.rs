//! Term language: abstract syntax, the concrete grammar, printing, desugaring and classification.
//!
//! Concrete syntax (ASCII):
//!
//! ```text
//! proc    ::= unary { op unary }          chains of one operator nest to the right
//! op      ::= "|~|" | "[]" | "|[" [acts] "]|" | "|+" prob "|"
//! unary   ::= "0" | act "." unary | act | "tau" "." unary | "(" proc ")"
//!           | "|~|{" proc {"," proc} "}" | "[]{" [proc {"," proc}] "}"
//!           | "+{" prob ":" proc {"," prob ":" proc} "}"
//! prob    ::= n "/" d | decimal
//! ```
//!
//! A bare action `a` abbreviates `a.0`.  Success actions are `w` (scalar) or `w1`, `w2`, ...
//! (vector); `ω` and `ω1` are accepted as spellings of the same names.  `tau.P` is read as
//! `P |~| P`.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Q;

/// An interned-by-value action name.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name(Arc<str>);

impl Name {
    pub fn new(s: &str) -> Name {
        Name(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Name {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Name {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Name, D::Error> {
        Ok(Name::new(&String::deserialize(d)?))
    }
}

pub type ActSet = BTreeSet<Name>;

/// Builds an action set from names.
pub fn act_set<'a, I: IntoIterator<Item = &'a str>>(names: I) -> ActSet {
    names.into_iter().map(Name::new).collect()
}

/// True for the success-action spellings `w`, `w1`, `w2`, ...
pub fn is_success_name(s: &str) -> bool {
    let rest = s.strip_prefix('w');
    matches!(rest, Some(r) if r.chars().all(|c| c.is_ascii_digit()) && !r.starts_with('0'))
}

/// The scalar success action `w`.
pub fn omega() -> Name {
    Name::new("w")
}

/// The vector success action `w<i>` (`i >= 1`).
pub fn omega_i(i: usize) -> Name {
    Name::new(&format!("w{i}"))
}

/// A prefixable action: visible or success.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum Action {
    Visible(Name),
    Success(Name),
}

impl Action {
    pub fn visible(s: &str) -> Action {
        Action::Visible(Name::new(s))
    }

    pub fn name(&self) -> &Name {
        match self {
            Action::Visible(n) | Action::Success(n) => n,
        }
    }

    pub fn label(&self) -> Label {
        match self {
            Action::Visible(n) => Label::Visible(n.clone()),
            Action::Success(n) => Label::Success(n.clone()),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Transition labels.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum Label {
    Tau,
    Visible(Name),
    Success(Name),
}

impl Label {
    pub fn visible(s: &str) -> Label {
        Label::Visible(Name::new(s))
    }

    pub fn is_success(&self) -> bool {
        matches!(self, Label::Success(_))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Tau => f.write_str("tau"),
            Label::Visible(n) | Label::Success(n) => write!(f, "{n}"),
        }
    }
}

/// Abstract syntax.  Children are shared, so cloning is cheap.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Nil,
    Prefix(Action, Arc<Term>),
    IntChoice(Arc<Term>, Arc<Term>),
    ExtChoice(Arc<Term>, Arc<Term>),
    Par(ActSet, Arc<Term>, Arc<Term>),
    ProbChoice(Q, Arc<Term>, Arc<Term>),
}

impl Term {
    pub fn prefix(a: Action, p: Term) -> Term {
        Term::Prefix(a, Arc::new(p))
    }

    pub fn act(a: &str, p: Term) -> Term {
        Term::prefix(Action::visible(a), p)
    }

    pub fn success(name: Name, p: Term) -> Term {
        Term::prefix(Action::Success(name), p)
    }

    pub fn int(p: Term, q: Term) -> Term {
        Term::IntChoice(Arc::new(p), Arc::new(q))
    }

    pub fn ext(p: Term, q: Term) -> Term {
        Term::ExtChoice(Arc::new(p), Arc::new(q))
    }

    pub fn par(a: ActSet, p: Term, q: Term) -> Term {
        Term::Par(a, Arc::new(p), Arc::new(q))
    }

    /// `p ⊕_w q`.  Panics unless `0 < w < 1`.
    pub fn prob(w: Q, p: Term, q: Term) -> Term {
        assert!(w.is_proper_probability(), "probabilistic choice weight {w} outside (0,1)");
        Term::ProbChoice(w, Arc::new(p), Arc::new(q))
    }

    /// `τ.P`, i.e. `P ⊓ P`.
    pub fn tau(p: Term) -> Term {
        Term::int(p.clone(), p)
    }

    /// True for state-based terms (no probabilistic choice at the top).
    pub fn is_state(&self) -> bool {
        !matches!(self, Term::ProbChoice(..))
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Term::IntChoice(..) | Term::ExtChoice(..) | Term::Par(..) | Term::ProbChoice(..))
    }

    pub fn size(&self) -> usize {
        match self {
            Term::Nil => 1,
            Term::Prefix(_, p) => 1 + p.size(),
            Term::IntChoice(p, q) | Term::ExtChoice(p, q) | Term::Par(_, p, q) | Term::ProbChoice(_, p, q) => {
                1 + p.size() + q.size()
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::Nil => 0,
            Term::Prefix(_, p) => 1 + p.depth(),
            Term::IntChoice(p, q) | Term::ExtChoice(p, q) | Term::Par(_, p, q) | Term::ProbChoice(_, p, q) => {
                1 + p.depth().max(q.depth())
            }
        }
    }

    pub fn prefix_count(&self) -> usize {
        match self {
            Term::Nil => 0,
            Term::Prefix(_, p) => 1 + p.prefix_count(),
            Term::IntChoice(p, q) | Term::ExtChoice(p, q) | Term::Par(_, p, q) | Term::ProbChoice(_, p, q) => {
                p.prefix_count() + q.prefix_count()
            }
        }
    }

    pub fn has_par(&self) -> bool {
        match self {
            Term::Nil => false,
            Term::Par(..) => true,
            Term::Prefix(_, p) => p.has_par(),
            Term::IntChoice(p, q) | Term::ExtChoice(p, q) | Term::ProbChoice(_, p, q) => p.has_par() || q.has_par(),
        }
    }

    fn collect_actions(&self, vis: &mut ActSet, succ: &mut ActSet) {
        match self {
            Term::Nil => {}
            Term::Prefix(a, p) => {
                match a {
                    Action::Visible(n) => vis.insert(n.clone()),
                    Action::Success(n) => succ.insert(n.clone()),
                };
                p.collect_actions(vis, succ);
            }
            Term::Par(set, p, q) => {
                vis.extend(set.iter().cloned());
                p.collect_actions(vis, succ);
                q.collect_actions(vis, succ);
            }
            Term::IntChoice(p, q) | Term::ExtChoice(p, q) | Term::ProbChoice(_, p, q) => {
                p.collect_actions(vis, succ);
                q.collect_actions(vis, succ);
            }
        }
    }

    /// Visible actions occurring in prefixes or synchronisation sets.
    pub fn visible_actions(&self) -> ActSet {
        let (mut v, mut s) = (ActSet::new(), ActSet::new());
        self.collect_actions(&mut v, &mut s);
        v
    }

    /// Success actions occurring in the term.
    pub fn success_actions(&self) -> ActSet {
        let (mut v, mut s) = (ActSet::new(), ActSet::new());
        self.collect_actions(&mut v, &mut s);
        s
    }

    /// True when some `□` or `|A` has a probabilistic operand, i.e. desugaring would change it.
    pub fn is_sugared(&self) -> bool {
        match self {
            Term::Nil => false,
            Term::Prefix(_, p) => p.is_sugared(),
            Term::ExtChoice(p, q) | Term::Par(_, p, q) => {
                !p.is_state() || !q.is_state() || p.is_sugared() || q.is_sugared()
            }
            Term::IntChoice(p, q) | Term::ProbChoice(_, p, q) => p.is_sugared() || q.is_sugared(),
        }
    }
}

/// `⊕_i p_i·T_i` as right-nested binaries; zero weights are skipped.  Panics on an empty list
/// or weights that do not sum to one.
pub fn prob_sum(parts: &[(Q, Term)]) -> Term {
    let parts: Vec<&(Q, Term)> = parts.iter().filter(|(p, _)| !p.is_zero()).collect();
    assert!(!parts.is_empty(), "empty probabilistic sum");
    let total: Q = parts.iter().map(|(p, _)| p).sum();
    assert!(total.is_one(), "probabilistic sum weights add up to {total}");
    fn go(parts: &[&(Q, Term)], mass: &Q) -> Term {
        if parts.len() == 1 {
            return parts[0].1.clone();
        }
        let w = &parts[0].0 / mass;
        let rest_mass = mass - &parts[0].0;
        Term::prob(w, parts[0].1.clone(), go(&parts[1..], &rest_mass))
    }
    go(&parts, &total)
}

/// `⊓_i T_i`, right-nested.  Panics on an empty list.
pub fn int_all(parts: &[Term]) -> Term {
    assert!(!parts.is_empty(), "empty internal choice");
    let mut it = parts.iter().rev();
    let mut acc = it.next().unwrap().clone();
    for t in it {
        acc = Term::int(t.clone(), acc);
    }
    acc
}

/// `□_i T_i`, right-nested; the empty choice is `0`.
pub fn ext_all(parts: &[Term]) -> Term {
    let mut it = parts.iter().rev();
    let Some(last) = it.next() else { return Term::Nil };
    let mut acc = last.clone();
    for t in it {
        acc = Term::ext(t.clone(), acc);
    }
    acc
}

/// Pushes probabilistic choice out of `□` and `|A` operands.
pub fn desugar(t: &Term) -> Term {
    match t {
        Term::Nil => Term::Nil,
        Term::Prefix(a, p) => Term::prefix(a.clone(), desugar(p)),
        Term::IntChoice(p, q) => Term::int(desugar(p), desugar(q)),
        Term::ProbChoice(w, p, q) => Term::prob(w.clone(), desugar(p), desugar(q)),
        Term::ExtChoice(p, q) => distribute(&desugar(p), &desugar(q), &|l, r| Term::ext(l, r)),
        Term::Par(a, p, q) => {
            let a = a.clone();
            distribute(&desugar(p), &desugar(q), &move |l, r| Term::par(a.clone(), l, r))
        }
    }
}

fn distribute(l: &Term, r: &Term, mk: &dyn Fn(Term, Term) -> Term) -> Term {
    if let Term::ProbChoice(w, l1, l2) = l {
        return Term::prob(w.clone(), distribute(l1, r, mk), distribute(l2, r, mk));
    }
    if let Term::ProbChoice(w, r1, r2) = r {
        return Term::prob(w.clone(), distribute(l, r1, mk), distribute(l, r2, mk));
    }
    mk(l.clone(), r.clone())
}

/// Sort classification of a term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermClass {
    Process,
    ScalarTest,
    VectorTest(Vec<Name>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("scalar success action `w` mixed with vector success actions")]
    MixedSuccess,
}

pub fn classify(t: &Term) -> Result<TermClass, ClassifyError> {
    let succ = t.success_actions();
    if succ.is_empty() {
        return Ok(TermClass::Process);
    }
    let scalar = succ.contains(&omega());
    if scalar && succ.len() > 1 {
        return Err(ClassifyError::MixedSuccess);
    }
    if scalar {
        Ok(TermClass::ScalarTest)
    } else {
        Ok(TermClass::VectorTest(succ.into_iter().collect()))
    }
}

// ----- printing -------------------------------------------------------------------------------

/// Prints a term in the concrete grammar; `parse(unparse(t)) == t`.
pub fn unparse(t: &Term) -> String {
    let mut s = String::new();
    write_term(t, &mut s);
    s
}

fn write_atom(t: &Term, out: &mut String) {
    if t.is_binary() {
        out.push('(');
        write_term(t, out);
        out.push(')');
    } else {
        write_term(t, out);
    }
}

fn write_term(t: &Term, out: &mut String) {
    match t {
        Term::Nil => out.push('0'),
        Term::Prefix(a, p) => {
            out.push_str(a.name().as_str());
            if **p != Term::Nil {
                out.push('.');
                write_atom(p, out);
            }
        }
        Term::IntChoice(p, q) => binary(p, " |~| ", q, out),
        Term::ExtChoice(p, q) => binary(p, " [] ", q, out),
        Term::Par(a, p, q) => {
            let names: Vec<&str> = a.iter().map(|n| n.as_str()).collect();
            binary(p, &format!(" |[{}]| ", names.join(",")), q, out)
        }
        Term::ProbChoice(w, p, q) => binary(p, &format!(" |+{w}| "), q, out),
    }
}

fn binary(p: &Term, op: &str, q: &Term, out: &mut String) {
    write_atom(p, out);
    out.push_str(op);
    write_atom(q, out);
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&unparse(self))
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&unparse(self))
    }
}

impl Serialize for Term {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&unparse(self))
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Term, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

// ----- lexing ---------------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub offset: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Num(String),
    Dot,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Colon,
    IntOp,
    ExtOp,
    ParOpen,
    ParClose,
    ProbOpen,
    Bar,
    Plus,
    Star,
    Amp,
    Lt,
    Gt,
    OPlus,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Num(s) => format!("number `{s}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", tok_text(other)),
        }
    }
}

fn tok_text(t: &Tok) -> &'static str {
    match t {
        Tok::Dot => ".",
        Tok::LParen => "(",
        Tok::RParen => ")",
        Tok::LBrace => "{",
        Tok::RBrace => "}",
        Tok::Comma => ",",
        Tok::Colon => ":",
        Tok::IntOp => "|~|",
        Tok::ExtOp => "[]",
        Tok::ParOpen => "|[",
        Tok::ParClose => "]|",
        Tok::ProbOpen => "|+",
        Tok::Bar => "|",
        Tok::Plus => "+",
        Tok::Star => "*",
        Tok::Amp => "&",
        Tok::Lt => "<",
        Tok::Gt => ">",
        Tok::OPlus => "(+)",
        _ => "?",
    }
}

pub(crate) struct Lexer {
    pub(crate) toks: Vec<(Tok, usize)>,
    text: String,
}

impl Lexer {
    pub(crate) fn new(text: &str) -> Result<Lexer, ParseError> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut toks = Vec::new();
        let mut i = 0;
        let at = |i: usize| chars.get(i).map(|c| c.1);
        let lexer_err = |off: usize, msg: String| error_at(text, off, msg);
        while i < chars.len() {
            let (off, c) = chars[i];
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c == '#' {
                while i < chars.len() && chars[i].1 != '\n' {
                    i += 1;
                }
                continue;
            }
            let (tok, len) = match c {
                '.' => (Tok::Dot, 1),
                '(' if at(i + 1) == Some('+') && at(i + 2) == Some(')') => (Tok::OPlus, 3),
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                '{' => (Tok::LBrace, 1),
                '}' => (Tok::RBrace, 1),
                ',' => (Tok::Comma, 1),
                ':' => (Tok::Colon, 1),
                '+' => (Tok::Plus, 1),
                '*' => (Tok::Star, 1),
                '&' => (Tok::Amp, 1),
                '<' => (Tok::Lt, 1),
                '>' => (Tok::Gt, 1),
                '|' => match at(i + 1) {
                    Some('~') if at(i + 2) == Some('|') => (Tok::IntOp, 3),
                    Some('[') => (Tok::ParOpen, 2),
                    Some('+') => (Tok::ProbOpen, 2),
                    _ => (Tok::Bar, 1),
                },
                '[' if at(i + 1) == Some(']') => (Tok::ExtOp, 2),
                ']' if at(i + 1) == Some('|') => (Tok::ParClose, 2),
                c if c.is_ascii_digit() => {
                    let mut j = i;
                    while at(j).is_some_and(|c| c.is_ascii_digit()) {
                        j += 1;
                    }
                    if (at(j) == Some('/') || at(j) == Some('.')) && at(j + 1).is_some_and(|c| c.is_ascii_digit()) {
                        j += 1;
                        while at(j).is_some_and(|c| c.is_ascii_digit()) {
                            j += 1;
                        }
                    }
                    let s: String = chars[i..j].iter().map(|c| c.1).collect();
                    (Tok::Num(s), j - i)
                }
                c if c.is_alphabetic() || c == '_' => {
                    let mut j = i;
                    while at(j).is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '\'') {
                        j += 1;
                    }
                    let s: String = chars[i..j].iter().map(|c| c.1).collect();
                    (Tok::Ident(s), j - i)
                }
                other => return Err(lexer_err(off, format!("unexpected character `{other}`"))),
            };
            toks.push((tok, off));
            i += len;
        }
        toks.push((Tok::Eof, text.len()));
        Ok(Lexer { toks, text: text.to_string() })
    }

    pub(crate) fn error(&self, pos: usize, msg: String) -> ParseError {
        let off = self.toks.get(pos).map(|t| t.1).unwrap_or(self.text.len());
        error_at(&self.text, off, msg)
    }
}

fn error_at(text: &str, offset: usize, msg: String) -> ParseError {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) + 1;
    ParseError { line, col, offset, msg }
}

/// A cursor over lexed tokens, shared by the term and formula parsers.
pub(crate) struct Cursor {
    pub(crate) lex: Lexer,
    pub(crate) pos: usize,
}

impl Cursor {
    pub(crate) fn new(text: &str) -> Result<Cursor, ParseError> {
        Ok(Cursor { lex: Lexer::new(text)?, pos: 0 })
    }

    pub(crate) fn peek(&self) -> &Tok {
        &self.lex.toks[self.pos].0
    }

    pub(crate) fn peek2(&self) -> &Tok {
        let i = (self.pos + 1).min(self.lex.toks.len() - 1);
        &self.lex.toks[i].0
    }

    pub(crate) fn bump(&mut self) -> Tok {
        let t = self.lex.toks[self.pos].0.clone();
        if self.pos + 1 < self.lex.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(self.lex.error(self.pos, msg.into()))
    }

    pub(crate) fn expect(&mut self, t: Tok) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{}`, found {}", tok_text(&t), self.peek().describe()))
        }
    }

    pub(crate) fn unexpected<T>(&self) -> Result<T, ParseError> {
        self.err(format!("unexpected {}", self.peek().describe()))
    }

    pub(crate) fn number(&mut self) -> Result<Q, ParseError> {
        match self.peek().clone() {
            Tok::Num(s) => {
                let q: Q = s.parse().map_err(|_| self.lex.error(self.pos, format!("bad number `{s}`")))?;
                self.bump();
                Ok(q)
            }
            _ => self.err(format!("expected a probability, found {}", self.peek().describe())),
        }
    }

    pub(crate) fn probability(&mut self) -> Result<Q, ParseError> {
        let here = self.pos;
        let q = self.number()?;
        if !q.is_proper_probability() {
            return Err(self.lex.error(here, format!("probability {q} outside (0,1)")));
        }
        Ok(q)
    }

    pub(crate) fn action_name(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.err(format!("expected an action name, found {}", self.peek().describe())),
        }
    }

    pub(crate) fn at_end(&self) -> bool {
        *self.peek() == Tok::Eof
    }
}

// ----- parsing --------------------------------------------------------------------------------

/// Parses a term.  Any visible action name is accepted.
pub fn parse(text: &str) -> Result<Term, ParseError> {
    parse_with_alphabet(text, None)
}

/// Parses a term, rejecting visible actions outside `alphabet` when one is given.
pub fn parse_with_alphabet(text: &str, alphabet: Option<&ActSet>) -> Result<Term, ParseError> {
    let mut p = TermParser { cur: Cursor::new(text)?, alphabet };
    let t = p.process()?;
    if !p.cur.at_end() {
        return p.cur.unexpected();
    }
    Ok(t)
}

struct TermParser<'a> {
    cur: Cursor,
    alphabet: Option<&'a ActSet>,
}

#[derive(PartialEq)]
enum OpKind {
    Int,
    Ext,
    Par,
    Prob,
}

enum Op {
    Int,
    Ext,
    Par(ActSet),
    Prob(Q),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Int => OpKind::Int,
            Op::Ext => OpKind::Ext,
            Op::Par(_) => OpKind::Par,
            Op::Prob(_) => OpKind::Prob,
        }
    }

    fn apply(self, l: Term, r: Term) -> Term {
        match self {
            Op::Int => Term::int(l, r),
            Op::Ext => Term::ext(l, r),
            Op::Par(a) => Term::par(a, l, r),
            Op::Prob(w) => Term::prob(w, l, r),
        }
    }
}

impl TermParser<'_> {
    fn process(&mut self) -> Result<Term, ParseError> {
        let first = self.unary()?;
        let mut operands = vec![first];
        let mut ops: Vec<Op> = Vec::new();
        while let Some(op) = self.binop()? {
            if let Some(prev) = ops.first() {
                if prev.kind() != op.kind() {
                    return self.cur.err("mixed binary operators need parentheses");
                }
            }
            ops.push(op);
            operands.push(self.unary()?);
        }
        let mut acc = operands.pop().unwrap();
        while let Some(op) = ops.pop() {
            let l = operands.pop().unwrap();
            acc = op.apply(l, acc);
        }
        Ok(acc)
    }

    fn binop(&mut self) -> Result<Option<Op>, ParseError> {
        match self.cur.peek() {
            Tok::IntOp if *self.cur.peek2() != Tok::LBrace => {
                self.cur.bump();
                Ok(Some(Op::Int))
            }
            Tok::ExtOp if *self.cur.peek2() != Tok::LBrace => {
                self.cur.bump();
                Ok(Some(Op::Ext))
            }
            Tok::ParOpen => {
                self.cur.bump();
                let mut set = ActSet::new();
                if *self.cur.peek() != Tok::ParClose {
                    loop {
                        let a = self.visible_name()?;
                        set.insert(a);
                        if *self.cur.peek() == Tok::Comma {
                            self.cur.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.cur.expect(Tok::ParClose)?;
                Ok(Some(Op::Par(set)))
            }
            Tok::ProbOpen => {
                self.cur.bump();
                let w = self.cur.probability()?;
                self.cur.expect(Tok::Bar)?;
                Ok(Some(Op::Prob(w)))
            }
            _ => Ok(None),
        }
    }

    fn visible_name(&mut self) -> Result<Name, ParseError> {
        let here = self.cur.pos;
        let s = self.cur.action_name()?;
        let name = canonical_action(&s);
        if is_success_name(&name) || name == "tau" {
            return Err(self.cur.lex.error(here, format!("`{s}` cannot be synchronised on")));
        }
        self.check_alphabet(here, &name)?;
        Ok(Name::new(&name))
    }

    fn check_alphabet(&self, pos: usize, name: &str) -> Result<(), ParseError> {
        if let Some(alpha) = self.alphabet {
            if !alpha.contains(&Name::new(name)) {
                return Err(self.cur.lex.error(pos, format!("unknown action name `{name}`")));
            }
        }
        Ok(())
    }

    fn list(&mut self) -> Result<Vec<Term>, ParseError> {
        self.cur.expect(Tok::LBrace)?;
        let mut items = Vec::new();
        if *self.cur.peek() != Tok::RBrace {
            loop {
                items.push(self.process()?);
                if *self.cur.peek() == Tok::Comma {
                    self.cur.bump();
                } else {
                    break;
                }
            }
        }
        self.cur.expect(Tok::RBrace)?;
        Ok(items)
    }

    fn unary(&mut self) -> Result<Term, ParseError> {
        let here = self.cur.pos;
        match self.cur.peek().clone() {
            Tok::Num(s) if s == "0" => {
                self.cur.bump();
                Ok(Term::Nil)
            }
            Tok::LParen => {
                self.cur.bump();
                let t = self.process()?;
                self.cur.expect(Tok::RParen)?;
                Ok(t)
            }
            Tok::IntOp => {
                self.cur.bump();
                let items = self.list()?;
                if items.is_empty() {
                    return Err(self.cur.lex.error(here, "empty internal choice".into()));
                }
                Ok(int_all(&items))
            }
            Tok::ExtOp => {
                self.cur.bump();
                Ok(ext_all(&self.list()?))
            }
            Tok::Plus => {
                self.cur.bump();
                self.cur.expect(Tok::LBrace)?;
                let mut parts = Vec::new();
                loop {
                    let w = self.cur.number()?;
                    if !w.is_positive() || w > Q::one() {
                        return Err(self.cur.lex.error(here, format!("weight {w} outside (0,1]")));
                    }
                    self.cur.expect(Tok::Colon)?;
                    parts.push((w, self.process()?));
                    if *self.cur.peek() == Tok::Comma {
                        self.cur.bump();
                    } else {
                        break;
                    }
                }
                self.cur.expect(Tok::RBrace)?;
                let total: Q = parts.iter().map(|p| &p.0).sum();
                if !total.is_one() {
                    return Err(self.cur.lex.error(here, format!("weights add up to {total}")));
                }
                Ok(prob_sum(&parts))
            }
            Tok::Ident(s) => {
                let name = canonical_action(&s);
                if name == "Omega" || name == "div" {
                    return Err(self
                        .cur
                        .lex
                        .error(here, "divergence is not supported: processes must be finite".into()));
                }
                self.cur.bump();
                let body = if *self.cur.peek() == Tok::Dot {
                    self.cur.bump();
                    Some(self.unary()?)
                } else {
                    None
                };
                if name == "tau" {
                    let Some(body) = body else {
                        return Err(self.cur.lex.error(here, "`tau` must prefix a process".into()));
                    };
                    return Ok(Term::tau(body));
                }
                let action = if is_success_name(&name) {
                    Action::Success(Name::new(&name))
                } else {
                    self.check_alphabet(here, &name)?;
                    Action::Visible(Name::new(&name))
                };
                Ok(Term::prefix(action, body.unwrap_or(Term::Nil)))
            }
            _ => self.cur.unexpected(),
        }
    }
}

/// Maps alternative spellings (`ω`, `ω1`, `τ`) onto the ASCII names.
fn canonical_action(s: &str) -> String {
    if let Some(rest) = s.strip_prefix('ω') {
        return format!("w{rest}");
    }
    if s == "τ" {
        return "tau".to_string();
    }
    s.to_string()
}
