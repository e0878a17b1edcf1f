use pcsp_core::corpus::Gen;
use pcsp_core::simulation::{fsim_verdict, sim_verdict, Decider, SimKind};
use pcsp_core::syntax::act_set;
use pcsp_core::testing::{battery_order, Flavour, Kind};
use pcsp_core::{parse, Term};

fn pairs(seed: u64, n: usize) -> Vec<(Term, Term)> {
    let mut g = Gen::new(seed, &["a", "b"]);
    (0..n)
        .map(|i| {
            let p = g.term(3);
            // Every other pair is related by construction.
            let q = if i % 2 == 0 { Term::int(p.clone(), g.term(2)) } else { g.term(3) };
            (p, q)
        })
        .collect()
}

#[test]
fn simulations_are_precongruences() {
    let mut g = Gen::new(21, &["a", "b"]);
    let mut dec = Decider::new(act_set(["a", "b"]));
    let mut hits = 0;
    for (p, q) in pairs(20, 120) {
        let r = g.term(2);
        let w = g.weight();
        let ctx: Vec<Box<dyn Fn(&Term) -> Term>> = vec![
            Box::new(|x: &Term| Term::act("a", x.clone())),
            Box::new(|x: &Term| Term::int(x.clone(), r.clone())),
            Box::new(|x: &Term| Term::ext(x.clone(), r.clone())),
            Box::new(|x: &Term| Term::prob(w.clone(), x.clone(), r.clone())),
            Box::new(|x: &Term| Term::par(act_set(["a"]), x.clone(), r.clone())),
        ];
        if dec.sim_leq(&p, &q) {
            hits += 1;
            for c in &ctx {
                assert!(dec.sim_leq(&c(&p), &c(&q)), "sim {p} / {q} in {}", c(&Term::Nil));
            }
        }
        if dec.fsim_leq(&p, &q) {
            for c in &ctx {
                assert!(dec.fsim_leq(&c(&p), &c(&q)), "fsim {p} / {q} in {}", c(&Term::Nil));
            }
        }
    }
    assert!(hits > 40);
}

#[test]
fn simulations_are_sound_for_testing() {
    let mut g = Gen::new(22, &["a", "b"]);
    let battery: Vec<Term> = (0..25).map(|_| g.test(3, 2)).collect();
    let mut dec = Decider::new(act_set(["a", "b"]));
    for (p, q) in pairs(23, 80) {
        if dec.sim_leq(&p, &q) {
            assert!(battery_order(Kind::May, Flavour::Vector, &battery, &p, &q).unwrap(), "{p} / {q}");
        }
        if dec.fsim_leq(&p, &q) {
            assert!(battery_order(Kind::Must, Flavour::Vector, &battery, &p, &q).unwrap(), "{p} / {q}");
            assert!(dec.sim_leq(&q, &p), "failure simulation without the reverse simulation: {p} / {q}");
        }
    }
}

#[test]
fn verdicts_carry_checkable_evidence() {
    for (p, q) in pairs(24, 12) {
        let v = sim_verdict(&p, &q);
        assert!(v.validate(SimKind::Simulation), "sim {p} / {q}");
        let v = fsim_verdict(&p, &q);
        assert!(v.validate(SimKind::FailureSimulation), "fsim {p} / {q}");
    }
}

#[test]
fn decider_is_reflexive() {
    let mut dec = Decider::default();
    let mut g = Gen::new(25, &["a", "b", "c"]).with_par();
    for _ in 0..40 {
        let p = g.term(3);
        assert!(dec.sim_leq(&p, &p) && dec.fsim_leq(&p, &p), "{p}");
    }
    let pc = parse("a |+1/2| b").unwrap();
    assert!(!dec.fsim_leq(&Term::ext(pc.clone(), pc.clone()), &pc));
}
