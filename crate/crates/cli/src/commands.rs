use std::path::Path;

use serde_json::{json, Value};

use pcsp_core::axioms::{check_derivation, normal_form, synth_derivation, Theory};
use pcsp_core::corpus::{exhaustive, Gen};
use pcsp_core::geometry::{compare, scalar_extrema};
use pcsp_core::logic::{char_formula, char_test, parse_formula_with_alphabet, sat, Formula, Logic};
use pcsp_core::resolutions::{
    check_resolution, enumerate_deterministic_resolutions, synthesize_resolution, w_of, w_set, Resolution,
};
use pcsp_core::simulation::{fsim_verdict, sim_verdict, SimKind, SimVerdict};
use pcsp_core::syntax::{classify, parse_with_alphabet, ActSet, Name, TermClass};
use pcsp_core::testing::{apply_test, outcomes, Flavour, Kind, TestApplication};
use pcsp_core::{Derivatives, Plts, Term, Q};

use crate::report::{point, set, set_json, Failure, Outcome, Report};
use crate::{Cli, Command, CorpusKind, FlavourArg, Global, KindArg, LogicArg};

const DEFAULT_DEPTH: usize = 3;

pub fn run(cli: &Cli) -> Outcome {
    let ctx = Ctx::new(&cli.global);
    match &cli.command {
        Command::Parse { input } => parse_cmd(&ctx, input),
        Command::Lts { input, dot } => lts(&ctx, input, *dot),
        Command::Apply { test, process } => apply(&ctx, test, process),
        Command::Outcomes { test, flavour, process } => outcomes_cmd(&ctx, test, *flavour, process),
        Command::Order { kind, flavour, test, p, q } => order(&ctx, *kind, *flavour, test, p, q),
        Command::Sim { must, p, q } => sim(&ctx, *must, p, q),
        Command::Logic { formula, process } => logic(&ctx, formula, process),
        Command::Charform { logic, process } => charform(&ctx, *logic, process),
        Command::Chartest { formula, process } => chartest(&ctx, formula, process.as_deref()),
        Command::Normalize { input } => normalize(&ctx, input),
        Command::Prove { must, p, q } => prove(&ctx, *must, p, q),
        Command::Resolutions { test, process, limit } => resolutions(&ctx, test, process, *limit),
        Command::Crosscheck { test, process, resolution, samples } => match (test, process) {
            (Some(t), Some(p)) => crosscheck_one(&ctx, t, p, resolution.as_deref()),
            _ => crosscheck_samples(&ctx, *samples),
        },
        Command::Corpus { kind, count, prefixes } => corpus(&ctx, *kind, *count, *prefixes),
    }
}

struct Ctx {
    seed: u64,
    alphabet: Option<ActSet>,
    max_depth: Option<usize>,
}

impl Ctx {
    fn new(g: &Global) -> Ctx {
        let alphabet = g.alphabet.as_ref().map(|v| v.iter().map(|a| Name::new(a.trim())).collect());
        Ctx { seed: g.seed, alphabet, max_depth: g.max_depth }
    }

    fn text(&self, arg: &str) -> Result<String, Failure> {
        let path = Path::new(arg);
        if path.is_file() {
            std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{arg}: {e}")))
        } else {
            Ok(arg.to_string())
        }
    }

    fn check_depth(&self, arg: &str, depth: usize) -> Result<(), Failure> {
        match self.max_depth {
            Some(m) if depth > m => Err(Failure::Usage(format!("{arg}: depth {depth} exceeds --max-depth {m}"))),
            _ => Ok(()),
        }
    }

    fn term(&self, arg: &str) -> Result<Term, Failure> {
        let t = parse_with_alphabet(self.text(arg)?.trim(), self.alphabet.as_ref())
            .map_err(|e| Failure::Usage(format!("{arg}: {e}")))?;
        self.check_depth(arg, t.depth())?;
        Ok(t)
    }

    fn formula(&self, arg: &str) -> Result<Formula, Failure> {
        let f = parse_formula_with_alphabet(self.text(arg)?.trim(), self.alphabet.as_ref())
            .map_err(|e| Failure::Usage(format!("{arg}: {e}")))?;
        self.check_depth(arg, f.depth())?;
        Ok(f)
    }

    fn names(&self) -> Vec<String> {
        match &self.alphabet {
            Some(a) => a.iter().map(|n| n.to_string()).collect(),
            None => vec!["a".into(), "b".into()],
        }
    }

    fn gen(&self) -> Gen {
        let names = self.names();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        Gen::new(self.seed, &refs)
    }

    fn depth(&self) -> usize {
        self.max_depth.unwrap_or(DEFAULT_DEPTH)
    }
}

fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

fn internal<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Internal(e.to_string())
}

fn flavour(f: FlavourArg) -> Flavour {
    match f {
        FlavourArg::State => Flavour::State,
        FlavourArg::Action => Flavour::Action,
        FlavourArg::Vector => Flavour::Vector,
    }
}

fn class_name(c: &TermClass) -> String {
    match c {
        TermClass::Process => "process".into(),
        TermClass::ScalarTest => "scalar test".into(),
        TermClass::VectorTest(o) => {
            let names: Vec<&str> = o.iter().map(Name::as_str).collect();
            format!("vector test over {}", names.join(","))
        }
    }
}

fn parse_cmd(ctx: &Ctx, input: &str) -> Outcome {
    let t = ctx.term(input)?;
    let class = classify(&t).map_err(usage)?;
    Ok(Report::new(json!({
        "term": t,
        "class": class_name(&class),
        "size": t.size(),
        "depth": t.depth(),
        "prefixes": t.prefix_count(),
    }))
    .line(t.to_string())
    .line(format!("class: {}, size {}, depth {}", class_name(&class), t.size(), t.depth())))
}

fn lts(ctx: &Ctx, input: &str, dot: bool) -> Outcome {
    let t = ctx.term(input)?;
    let (g, d) = Plts::build(&t);
    let mut r = Report::new(json!({ "initial": d, "plts": g.to_json() }));
    if dot {
        r.text = g.to_dot(&[d]);
        return Ok(r);
    }
    r = r.line(format!("initial: {}", dist_text(&d)));
    for s in g.states() {
        r = r.line(format!("s{} = {}", s.0, g.term(s)));
        for tr in g.transitions(s) {
            r = r.line(format!("  --{}--> {}", tr.label, dist_text(&tr.target)));
        }
    }
    Ok(r)
}

fn dist_text(d: &pcsp_core::plts::SDist) -> String {
    let parts: Vec<String> =
        d.iter().map(|(s, p)| if p.is_one() { format!("s{}", s.0) } else { format!("{p}:s{}", s.0) }).collect();
    parts.join(" + ")
}

fn application(ctx: &Ctx, test: &str, process: &str) -> Result<(Term, Term, TestApplication), Failure> {
    let t = ctx.term(test)?;
    let p = ctx.term(process)?;
    let app = apply_test(&t, &p).map_err(usage)?;
    Ok((t, p, app))
}

fn apply(ctx: &Ctx, test: &str, process: &str) -> Outcome {
    let (_, _, app) = application(ctx, test, process)?;
    let vector = app.results_vector();
    let mut j = json!({
        "composed": app.composed,
        "states": app.plts.num_states(),
        "omega": app.omega,
        "vector": set_json(&vector),
    });
    let mut r = Report::new(Value::Null)
        .line(format!("composed: {}", app.composed))
        .line(format!("states: {}", app.plts.num_states()))
        .line(format!("vector outcomes: {}", set(&vector)));
    if app.omega.len() == 1 {
        let state = app.results_state();
        let action = app.results_action();
        let (lo, hi) = scalar_extrema(&state).map_err(internal)?;
        j["state"] = set_json(&state);
        j["action"] = set_json(&action);
        j["extrema"] = json!({ "min": lo, "max": hi });
        r = r
            .line(format!("state outcomes: {}", set(&state)))
            .line(format!("action outcomes: {}", set(&action)))
            .line(format!("min {lo}, max {hi}"));
    }
    r.json = j;
    Ok(r)
}

fn outcomes_cmd(ctx: &Ctx, test: &str, f: FlavourArg, process: &str) -> Outcome {
    let t = ctx.term(test)?;
    let p = ctx.term(process)?;
    let x = outcomes(flavour(f), &t, &p).map_err(usage)?;
    let mut j = json!({ "outcomes": set_json(&x) });
    let mut r = Report::new(Value::Null).line(set(&x));
    if let Ok((lo, hi)) = scalar_extrema(&x) {
        j["extrema"] = json!({ "min": lo, "max": hi });
        r = r.line(format!("min {lo}, max {hi}"));
    }
    r.json = j;
    Ok(r)
}

fn order(ctx: &Ctx, kind: KindArg, f: FlavourArg, tests: &[String], p: &str, q: &str) -> Outcome {
    let (kind, name) = match kind {
        KindArg::May => (Kind::May, "may"),
        KindArg::Must => (Kind::Must, "must"),
    };
    let p = ctx.term(p)?;
    let q = ctx.term(q)?;
    let mut rows = Vec::new();
    let mut r = Report::new(Value::Null);
    let mut holds = true;
    let mut witness = Value::Null;
    for arg in tests {
        let t = ctx.term(arg)?;
        let x = outcomes(flavour(f), &t, &p).map_err(usage)?;
        let y = outcomes(flavour(f), &t, &q).map_err(usage)?;
        let ok = compare(kind.order(), &x, &y).map_err(usage)?;
        r = r.line(format!("{t}: {} vs {}: {ok}", set(&x), set(&y)));
        let row = json!({ "test": t, "p": set_json(&x), "q": set_json(&y), "holds": ok });
        if !ok && holds {
            witness = row.clone();
        }
        holds &= ok;
        rows.push(row);
    }
    r.json = json!({ "kind": name, "p": p, "q": q, "holds": holds, "tests": rows, "witness": witness });
    Ok(r.line(format!("P <={name} Q: {holds}")).verdict(holds))
}

fn sim(ctx: &Ctx, must: bool, p: &str, q: &str) -> Outcome {
    let p = ctx.term(p)?;
    let q = ctx.term(q)?;
    let (v, kind, rel) = if must {
        (fsim_verdict(&p, &q), SimKind::FailureSimulation, "failure simulation")
    } else {
        (sim_verdict(&p, &q), SimKind::Simulation, "simulation")
    };
    if !v.validate(kind) {
        return Err(Failure::Internal("verdict evidence does not validate".into()));
    }
    let (r, j) = verdict_report(&v, rel, &p, &q);
    Ok(r.verdict(v.holds).with_json(j))
}

fn verdict_report(v: &SimVerdict, rel: &str, p: &Term, q: &Term) -> (Report, Value) {
    let mut j = json!({ "relation": rel, "p": p, "q": q, "holds": v.holds });
    let mut r = Report::new(Value::Null).line(format!("{rel}: {}", v.holds));
    if let Some(e) = &v.evidence {
        j["certificate"] = serde_json::to_value(e).expect("evidence serialises");
        r = r.line(format!("certificate: {} related pairs", e.certificate.pairs.len()));
    }
    if let Some(d) = &v.distinction {
        j["distinguishing_formula"] = json!(d.formula.to_string());
        j["characteristic_test"] = serde_json::to_value(&d.test).expect("tests serialise");
        r = r
            .line(format!("distinguishing formula: {}", d.formula))
            .line(format!("characteristic test: {}", d.test.test))
            .line(format!("target: {}", point(&d.test.target)));
    }
    (r, j)
}

impl Report {
    fn with_json(mut self, j: Value) -> Report {
        self.json = j;
        self
    }
}

fn logic(ctx: &Ctx, formula: &str, process: &str) -> Outcome {
    let phi = ctx.formula(formula)?;
    phi.validate().map_err(usage)?;
    let p = ctx.term(process)?;
    let (g, d) = Plts::build(&p);
    let holds = sat(&mut Derivatives::new(&g), &d, &phi);
    Ok(Report::new(json!({ "formula": phi.to_string(), "process": p, "holds": holds }))
        .line(format!("{p} |= {phi}: {holds}"))
        .verdict(holds))
}

fn charform(ctx: &Ctx, logic: LogicArg, process: &str) -> Outcome {
    let p = ctx.term(process)?;
    let (g, d) = Plts::build(&p);
    let logic = match logic {
        LogicArg::F => Logic::F,
        LogicArg::L => Logic::L,
    };
    let mut act = p.visible_actions();
    if let Some(a) = &ctx.alphabet {
        act.extend(a.iter().cloned());
    }
    let phi = char_formula(&g, &d, logic, &act);
    Ok(Report::new(json!({ "process": p, "logic": logic, "formula": phi.to_string(), "size": phi.size() }))
        .line(phi.to_string()))
}

fn chartest(ctx: &Ctx, formula: &str, process: Option<&str>) -> Outcome {
    let phi = ctx.formula(formula)?;
    phi.validate().map_err(usage)?;
    let ct = char_test(&phi);
    let mut j = json!({ "formula": phi.to_string(), "test": ct.test, "omega": ct.omega, "target": ct.target });
    let mut r =
        Report::new(Value::Null).line(format!("test: {}", ct.test)).line(format!("target: {}", point(&ct.target)));
    let Some(process) = process else { return Ok(r.with_json(j)) };
    let p = ctx.term(process)?;
    let (g, d) = Plts::build(&p);
    let holds = sat(&mut Derivatives::new(&g), &d, &phi);
    let out = ct.outcomes(&g, &d);
    let below = ct.passes_below(&g, &d);
    if below != holds || (phi.in_l() && ct.passes_above(&g, &d) != holds) {
        return Err(Failure::Internal(format!("characteristic test disagrees with satisfaction on {p}")));
    }
    j["process"] = json!(p);
    j["outcomes"] = set_json(&out);
    j["holds"] = json!(holds);
    r = r.line(format!("outcomes: {}", set(&out))).line(format!("passes: {holds}"));
    Ok(r.with_json(j).verdict(holds))
}

fn normalize(ctx: &Ctx, input: &str) -> Outcome {
    let t = ctx.term(input)?;
    let (n, d) = normal_form(&t).map_err(usage)?;
    check_derivation(&d, Theory::Eq).map_err(internal)?;
    Ok(Report::new(json!({
        "term": t,
        "normal_form": n,
        "axioms": d.axioms_used().iter().map(|a| a.to_string()).collect::<Vec<_>>(),
        "derivation": d,
    }))
    .line(n.to_string())
    .line(d.render(Theory::Eq)))
}

fn prove(ctx: &Ctx, must: bool, p: &str, q: &str) -> Outcome {
    let p = ctx.term(p)?;
    let q = ctx.term(q)?;
    if p.has_par() || q.has_par() {
        return Err(Failure::Usage("proofs cover parallel-free terms only".into()));
    }
    let theory = if must { Theory::Must } else { Theory::May };
    let Some(d) = synth_derivation(&p, &q, theory) else {
        return Ok(Report::new(json!({ "theory": theory, "p": p, "q": q, "holds": false }))
            .line("not derivable")
            .verdict(false));
    };
    check_derivation(&d, theory).map_err(internal)?;
    Ok(Report::new(json!({
        "theory": theory,
        "p": p,
        "q": q,
        "holds": true,
        "steps": d.leaves(),
        "axioms": d.axioms_used().iter().map(|a| a.to_string()).collect::<Vec<_>>(),
        "derivation": d,
    }))
    .line(d.render(theory)))
}

fn resolutions(ctx: &Ctx, test: &str, process: &str, limit: usize) -> Outcome {
    let (_, _, app) = application(ctx, test, process)?;
    let ws = w_set(&app.plts, &app.initial, &app.omega, limit).map_err(usage)?;
    let count = enumerate_deterministic_resolutions(&app.plts, &app.initial, limit).map_err(usage)?.len();
    let mut r = Report::new(Value::Null)
        .line(format!("deterministic resolutions: {count}"))
        .line(format!("success tuples: {}", set(&ws)));
    let mut per_vertex = Vec::new();
    for v in &ws.points {
        let res = synthesize_resolution(&app.plts, &app.initial, v, &app.omega).map_err(internal)?;
        if !check_resolution(&app.plts, &res, &app.initial) || &w_of(&res, &app.omega) != v {
            return Err(Failure::Internal(format!("synthesised resolution for {} is wrong", point(v))));
        }
        r = r.line(format!("  {}: resolution with {} states", point(v), res.states.len()));
        per_vertex.push(json!({ "vertex": v, "resolution": res.to_json() }));
    }
    Ok(r.with_json(json!({
        "omega": app.omega,
        "deterministic": count,
        "w_set": set_json(&ws),
        "vertices": per_vertex,
    })))
}

/// One named oracle comparison.
struct Checks(Vec<(String, bool, String)>);

impl Checks {
    fn push(&mut self, name: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.0.push((name.into(), ok, detail.into()));
    }

    fn report(self, extra: Value) -> Report {
        let ok = self.0.iter().all(|c| c.1);
        let mut r = Report::new(Value::Null);
        for (name, pass, detail) in &self.0 {
            r = r.line(format!("{} {name}: {detail}", if *pass { "ok  " } else { "FAIL" }));
        }
        r = r.line(format!("{} of {} checks passed", self.0.iter().filter(|c| c.1).count(), self.0.len()));
        let rows: Vec<Value> = self.0.iter().map(|(n, p, d)| json!({ "check": n, "ok": p, "detail": d })).collect();
        let mut j = json!({ "ok": ok, "checks": rows });
        if let Value::Object(m) = extra {
            j.as_object_mut().expect("object").extend(m);
        }
        r.with_json(j).verdict(ok)
    }
}

/// Resolution outcomes against the vector outcomes, and every vertex realised by a resolution.
fn check_application(checks: &mut Checks, tag: &str, app: &TestApplication) {
    let rv = app.results_vector();
    match w_set(&app.plts, &app.initial, &app.omega, 100_000) {
        Ok(ws) => {
            checks.push(format!("{tag}resolution outcomes"), ws.same_set(&rv), format!("{} vs {}", set(&ws), set(&rv)))
        }
        Err(e) => checks.push(format!("{tag}resolution outcomes"), false, e.to_string()),
    }
    let mut bad = Vec::new();
    for v in &rv.points {
        let ok = synthesize_resolution(&app.plts, &app.initial, v, &app.omega)
            .is_ok_and(|res| check_resolution(&app.plts, &res, &app.initial) && &w_of(&res, &app.omega) == v);
        if !ok {
            bad.push(point(v));
        }
    }
    let detail = if bad.is_empty() { format!("{} vertices", rv.points.len()) } else { bad.join(" ") };
    checks.push(format!("{tag}vertex resolutions"), bad.is_empty(), detail);
}

/// Satisfaction against the characteristic-test query for seeded formulas.
fn check_formulas(checks: &mut Checks, tag: &str, gen: &mut Gen, p: &Term, n: usize) {
    let (g, d) = Plts::build(p);
    let mut der = Derivatives::new(&g);
    let mut bad = Vec::new();
    for i in 0..n {
        let logic = if i % 2 == 0 { Logic::F } else { Logic::L };
        let phi = gen.formula(3, logic);
        let s = sat(&mut der, &d, &phi);
        let ct = char_test(&phi);
        if ct.passes_below(&g, &d) != s || (phi.in_l() && ct.passes_above(&g, &d) != s) {
            bad.push(phi.to_string());
        }
    }
    let detail = if bad.is_empty() { format!("{n} formulas") } else { bad.join("; ") };
    checks.push(format!("{tag}satisfaction vs characteristic tests"), bad.is_empty(), detail);
}

/// Both preorders: positive verdicts carry valid certificates, proofs exist exactly when they hold.
fn check_preorders(checks: &mut Checks, tag: &str, p: &Term, q: &Term) {
    for (kind, theory, name) in [
        (SimKind::Simulation, Theory::May, "simulation"),
        (SimKind::FailureSimulation, Theory::Must, "failure simulation"),
    ] {
        let v = match kind {
            SimKind::Simulation => sim_verdict(p, q),
            _ => fsim_verdict(p, q),
        };
        checks.push(format!("{tag}{name} certificate"), v.validate(kind), format!("holds: {}", v.holds));
        if p.has_par() || q.has_par() {
            continue;
        }
        let proof = synth_derivation(p, q, theory);
        let ok = match &proof {
            Some(d) => v.holds && check_derivation(d, theory).is_ok(),
            None => !v.holds,
        };
        checks.push(format!("{tag}{name} proof"), ok, format!("derivable: {}", proof.is_some()));
    }
}

fn crosscheck_one(ctx: &Ctx, test: &str, process: &str, resolution: Option<&str>) -> Outcome {
    let (t, p, app) = application(ctx, test, process)?;
    let mut checks = Checks(Vec::new());
    check_application(&mut checks, "", &app);
    if let Some(path) = resolution {
        let res: Resolution =
            serde_json::from_str(&ctx.text(path)?).map_err(|e| Failure::Usage(format!("{path}: {e}")))?;
        let ok = check_resolution(&app.plts, &res, &app.initial);
        let detail = if ok { format!("success tuple {}", point(&w_of(&res, &app.omega))) } else { "rejected".into() };
        checks.push("given resolution", ok, detail);
    }
    let mut gen = ctx.gen();
    check_formulas(&mut checks, "", &mut gen, &p, 20);
    check_preorders(&mut checks, "", &p, &p);
    if let Ok((n, _)) = normal_form(&p) {
        check_preorders(&mut checks, "normal form: ", &p, &n);
        check_preorders(&mut checks, "normal form reversed: ", &n, &p);
    }
    Ok(checks.report(json!({ "test": t, "process": p })))
}

fn crosscheck_samples(ctx: &Ctx, samples: usize) -> Outcome {
    let mut gen = ctx.gen();
    let depth = ctx.depth();
    let mut checks = Checks(Vec::new());
    for i in 0..samples {
        let t = gen.test(depth, 2);
        let p = gen.term(depth);
        let q = gen.term(depth);
        let tag = format!("#{i} ");
        match apply_test(&t, &p) {
            Ok(app) => check_application(&mut checks, &tag, &app),
            Err(e) => return Err(internal(e)),
        }
        check_formulas(&mut checks, &tag, &mut gen, &p, 4);
        check_preorders(&mut checks, &tag, &p, &q);
    }
    Ok(checks.report(json!({ "seed": ctx.seed, "samples": samples, "depth": depth })))
}

fn corpus(ctx: &Ctx, kind: CorpusKind, count: usize, prefixes: usize) -> Outcome {
    let depth = ctx.depth();
    let mut gen = ctx.gen();
    let items: Vec<String> = match kind {
        CorpusKind::Terms => (0..count).map(|_| gen.term(depth).to_string()).collect(),
        CorpusKind::Tests => (0..count).map(|_| gen.test(depth, 2).to_string()).collect(),
        CorpusKind::Formulas => (0..count).map(|_| gen.formula(depth, Logic::F).to_string()).collect(),
        CorpusKind::Exhaustive => {
            let names = ctx.names();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let depth = ctx.max_depth.unwrap_or(2);
            exhaustive(&refs, depth, prefixes, &[Q::new(1, 2)]).iter().map(|t| t.to_string()).collect()
        }
    };
    let mut r = Report::new(json!({ "seed": ctx.seed, "items": items }));
    for it in &items {
        r = r.line(it);
    }
    Ok(r)
}
