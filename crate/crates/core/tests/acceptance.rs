//! Acceptance suite: one PASS/FAIL line per criterion, with timings and budgets.
//!
//! Run with `cargo test -p pcsp-core --test acceptance`.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pcsp_core::axioms::{check_derivation, synth_derivation, AxiomId, Theory};
use pcsp_core::corpus::{completeness_corpus, Gen};
use pcsp_core::geometry::{compare, dominated_point_exists, Direction, Mode};
use pcsp_core::logic::{char_formula, char_test, sat, Logic};
use pcsp_core::plts::{Derivatives, DistPolytope};
use pcsp_core::resolutions::{check_resolution, synthesize_resolution, w_of, w_set};
use pcsp_core::simulation::{fsim_leq, sim_leq, Decider};
use pcsp_core::syntax::act_set;
use pcsp_core::testing::{apply_test, outcomes, results_vector, Flavour};
use pcsp_core::{parse, Dist, OutcomeSet, Plts, Term, Q};

const P_SWAP: &str = "a.((b.d [] c.e) |+1/2| (b.f [] c.g))";
const Q_SWAP: &str = "a.((b.d [] c.g) |+1/2| (b.f [] c.e))";
const T_SWAP: &str = "a.((b.d.w |+1/2| c.e.w) |~| (b.f.w |+1/2| c.g.w))";
const PC: &str = "a |+1/2| b";
const QC: &str = "a |~| b";
const TC: &str = "a.w1 [] b.w2";

fn t(s: &str) -> Term {
    parse(s).expect("fixture parses")
}

fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Outcome {
    let p = outcomes(Flavour::State, &t(T_SWAP), &t(P_SWAP)).map_err(|e| e.to_string())?;
    let qq = outcomes(Flavour::State, &t(T_SWAP), &t(Q_SWAP)).map_err(|e| e.to_string())?;
    let want_p = vec![vec![q(0, 1)], vec![q(1, 2)], vec![q(1, 1)]];
    ensure(p.mode == Mode::Raw && p.points == want_p, || format!("A(T_swap, P_swap) = {:?}", p.points))?;
    ensure(qq.points == vec![vec![q(1, 2)]], || format!("A(T_swap, Q_swap) = {:?}", qq.points))?;
    Ok("A(T,P) = {0, 1/2, 1}, A(T,Q) = {1/2}".into())
}

fn criterion_2() -> Outcome {
    let p = apply_test(&t(TC), &t(PC)).map_err(|e| e.to_string())?.results_vector();
    let qq = apply_test(&t(TC), &t(QC)).map_err(|e| e.to_string())?.results_vector();
    ensure(p.points == vec![vec![q(1, 2), q(1, 2)]], || format!("(Tc, Pc) vertices {:?}", p.points))?;
    ensure(qq.points == vec![vec![q(0, 1), q(1, 1)], vec![q(1, 1), q(0, 1)]], || {
        format!("(Tc, Qc) vertices {:?}", qq.points)
    })?;
    use pcsp_core::Order::Hoare;
    ensure(compare(Hoare, &p, &qq).unwrap(), || "Hoare fails on hulls".into())?;
    let raw_p = OutcomeSet::raw(p.omega.clone(), p.points.clone());
    let raw_q = OutcomeSet::raw(qq.omega.clone(), qq.points.clone());
    ensure(!compare(Hoare, &raw_p, &raw_q).unwrap(), || "Hoare holds on raw sets".into())?;
    Ok("hull{(1/2,1/2)} below hull{(1,0),(0,1)} only after closure".into())
}

fn criterion_3() -> Outcome {
    let pc = t(PC);
    let pp = Term::int(pc.clone(), pc.clone());
    let pe = Term::ext(pc.clone(), pc.clone());
    ensure(sim_leq(&pp, &pc), || "sim(Pc|~|Pc, Pc) false".into())?;
    ensure(sim_leq(&pc, &pp), || "sim(Pc, Pc|~|Pc) false".into())?;
    ensure(sim_leq(&pc, &pe), || "sim(Pc, Pc[]Pc) false".into())?;
    ensure(!fsim_leq(&pe, &pc), || "fsim(Pc[]Pc, Pc) true".into())?;
    Ok("three simulations hold, the failure simulation does not".into())
}

fn criterion_4() -> Outcome {
    let mut g = Gen::new(4, &["a", "b", "c"]).with_par();
    let mut checked = 0;
    for i in 0..200 {
        let term = g.term(3);
        let (plts, init) = Plts::build(&term);
        let act = term.visible_actions();
        let mut targets: BTreeSet<_> = BTreeSet::from([init]);
        for s in plts.states() {
            targets.insert(Dist::point(s));
            for tr in plts.transitions(s) {
                targets.insert(tr.target.clone());
            }
        }
        let mut der = Derivatives::new(&plts);
        for d in &targets {
            let phi = char_formula(&plts, d, Logic::F, &act);
            ensure(sat(&mut der, d, &phi), || format!("term {i} ({term}): {d:?} fails {phi}"))?;
            checked += 1;
        }
    }
    Ok(format!("200 terms, {checked} reachable distributions"))
}

fn criterion_5() -> Outcome {
    let mut g = Gen::new(5, &["a", "b"]);
    let (mut pos, mut n) = (0, 0);
    for i in 0..200 {
        let logic = if i % 2 == 0 { Logic::F } else { Logic::L };
        let phi = g.formula(3, logic);
        let term = g.term(3);
        let test = char_test(&phi);
        let (plts, d) = Plts::build(&term);
        let mut der = Derivatives::new(&plts);
        let holds = sat(&mut der, &d, &phi);
        let app = apply_test(&test.test, &term).map_err(|e| e.to_string())?;
        let out = results_vector(&app.plts, &app.initial, &test.omega);
        let below = dominated_point_exists(&out, &test.target, Direction::Below);
        ensure(holds == below, || format!("pair {i}: sat({term}, {phi}) = {holds} but test (<=) says {below}"))?;
        if phi.in_l() {
            let above = dominated_point_exists(&out, &test.target, Direction::Above);
            ensure(holds == above, || format!("pair {i}: sat({term}, {phi}) = {holds} but test (>=) says {above}"))?;
        }
        pos += holds as usize;
        n += 1;
    }
    Ok(format!("{n} pairs, {pos} satisfied"))
}

fn criterion_6() -> Outcome {
    let mut g = Gen::new(6, &["a", "b"]).with_par();
    let mut vertices = 0;
    for i in 0..100 {
        let test = g.test(3, 2);
        let proc_ = g.term(3);
        let app = apply_test(&test, &proc_).map_err(|e| e.to_string())?;
        let rv = app.results_vector();
        let ws = w_set(&app.plts, &app.initial, &app.omega, 100_000).map_err(|e| format!("{i}: {e}"))?;
        ensure(ws.same_set(&rv), || format!("{i}: {test} on {proc_}: w_set {:?} vs {:?}", ws.points, rv.points))?;
        for v in &rv.points {
            let r = synthesize_resolution(&app.plts, &app.initial, v, &app.omega).map_err(|e| format!("{i}: {e}"))?;
            ensure(check_resolution(&app.plts, &r, &app.initial), || format!("{i}: resolution for {v:?} invalid"))?;
            ensure(&w_of(&r, &app.omega) == v, || format!("{i}: resolution misses {v:?}"))?;
            vertices += 1;
        }
    }
    Ok(format!("100 applications, {vertices} vertices realised"))
}

fn criterion_7() -> Outcome {
    let mut g = Gen::new(7, &["a", "b"]);
    let mut n = 0;
    for id in AxiomId::ALL {
        for k in 0..100 {
            let inst = g.instance(id, 2);
            let (l, r) = inst.sides().map_err(|e| format!("{id} #{k}: {e}"))?;
            let ok = if id.is_common() {
                fsim_leq(&l, &r) && fsim_leq(&r, &l)
            } else if id == AxiomId::May0 {
                sim_leq(&l, &r) && sim_leq(&r, &l)
            } else if id.admitted_in(Theory::May) {
                sim_leq(&l, &r)
            } else {
                fsim_leq(&l, &r)
            };
            ensure(ok, || format!("{id} #{k}: {l}  vs  {r}"))?;
            n += 1;
        }
    }
    Ok(format!("{} schemas, {n} instances", AxiomId::ALL.len()))
}

fn criterion_8() -> Outcome {
    let corpus = completeness_corpus();
    let mut dec = Decider::new(act_set(["a", "b"]));
    let (mut may, mut must) = (0, 0);
    for p in &corpus {
        for qq in &corpus {
            for theory in [Theory::May, Theory::Must] {
                let holds = match theory {
                    Theory::May => dec.sim_leq(p, qq),
                    _ => dec.fsim_leq(p, qq),
                };
                let proved = match synth_derivation(p, qq, theory) {
                    Some(d) => {
                        ensure(d.lhs == *p && d.rhs == *qq, || format!("{p} vs {qq}: derivation has other endpoints"))?;
                        check_derivation(&d, theory).map_err(|e| format!("{p} vs {qq} ({theory:?}): {e}"))?;
                        true
                    }
                    None => false,
                };
                ensure(holds == proved, || format!("{p} vs {qq} ({theory:?}): preorder {holds}, derivation {proved}"))?;
                if proved {
                    match theory {
                        Theory::May => may += 1,
                        _ => must += 1,
                    }
                }
            }
        }
    }
    let pairs = corpus.len() * corpus.len();
    Ok(format!("{} terms, {pairs} pairs; {may} may and {must} must derivations checked", corpus.len()))
}

fn criterion_9() -> Outcome {
    let mut g = Gen::new(9, &["a", "b", "c"]).with_par();
    for i in 0..200 {
        let mut plts = Plts::new();
        let k = 2 + i % 2;
        let comps: Vec<_> = (0..k).map(|_| plts.add_term(&g.term(3))).collect();
        let ws: Vec<Q> = match k {
            2 => {
                let w = g.weight();
                vec![Q::one() - &w, w]
            }
            _ => vec![q(1, 2), q(1, 4), q(1, 4)],
        };
        let mix = Dist::mix(ws.iter().cloned().zip(&comps)).map_err(|e| e.to_string())?;
        let mut der = Derivatives::new(&plts);
        let whole = der.weak_tau(&mix);
        let mut combos = Vec::new();
        let polys: Vec<DistPolytope> = comps.iter().map(|c| der.weak_tau(c)).collect();
        let mut partial: Vec<Vec<(Q, pcsp_core::SDist)>> = vec![vec![]];
        for (w, poly) in ws.iter().zip(&polys) {
            let mut next = Vec::new();
            for acc in &partial {
                for v in poly.dists() {
                    let mut a = acc.clone();
                    a.push((w.clone(), v.clone()));
                    next.push(a);
                }
            }
            partial = next;
        }
        for parts in partial {
            combos.push(Dist::mix(parts.iter().map(|(w, d)| (w.clone(), d))).map_err(|e| e.to_string())?);
        }
        let oracle = DistPolytope { vertices: combos.iter().map(|d| (d.clone(), Default::default())).collect() };
        for v in whole.dists() {
            ensure(oracle.contains(v), || format!("instance {i}: vertex {v:?} outside the mix"))?;
        }
        for c in &combos {
            ensure(whole.contains(c), || format!("instance {i}: mixed point {c:?} not derivable"))?;
        }
    }
    Ok("200 mixtures".into())
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 9] = [
        (1, "scalar outcomes of the branch-swapping example", Duration::from_secs(1), criterion_1),
        (2, "vector outcomes and Hoare comparison", Duration::from_secs(1), criterion_2),
        (3, "simulation verdicts on the coin examples", Duration::from_secs(5), criterion_3),
        (4, "distributions satisfy their characteristic formulas", Duration::from_secs(60), criterion_4),
        (5, "satisfaction agrees with characteristic tests", Duration::from_secs(120), criterion_5),
        (6, "resolution tuples agree with vector outcomes", Duration::from_secs(120), criterion_6),
        (7, "axiom soundness", Duration::from_secs(300), criterion_7),
        (8, "completeness on the exhaustive corpus", Duration::from_secs(600), criterion_8),
        (9, "linearity of weak transitions", Duration::from_secs(60), criterion_9),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, budget, run) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panic: {}", msg.unwrap_or_default()))
        });
        let took = start.elapsed();
        let res = match res {
            Ok(detail) if took > budget => Err(format!("{detail}; over budget of {budget:?}")),
            other => other,
        };
        match res {
            Ok(detail) => println!("PASS criterion {n}: {name} ({detail}) in {took:.2?}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n}: {name}: {why} in {took:.2?}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
