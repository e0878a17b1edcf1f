use pcsp_core::axioms::{check_derivation, is_normal_form, normal_form, synth_derivation, Theory};
use pcsp_core::corpus::{completeness_corpus, Gen};
use pcsp_core::simulation::{fsim_leq, sim_leq};
use pcsp_core::{Derivatives, Plts, Term};

#[test]
fn normal_forms_are_equivalent() {
    let mut g = Gen::new(31, &["a", "b", "c"]);
    for _ in 0..150 {
        let p = g.term(3);
        let (n, d) = normal_form(&p).unwrap();
        assert!(is_normal_form(&n), "{p} -> {n}");
        check_derivation(&d, Theory::Eq).unwrap();
        assert!(fsim_leq(&p, &n) && fsim_leq(&n, &p), "{p} -> {n}");
    }
}

#[test]
fn synthesis_agrees_with_the_preorders_on_random_pairs() {
    let mut g = Gen::new(32, &["a", "b", "c"]);
    for i in 0..300 {
        let p = g.term(3);
        let q = if i % 3 == 0 { Term::int(p.clone(), g.term(2)) } else { g.term(3) };
        for (p, q) in [(&p, &q), (&q, &p)] {
            for theory in [Theory::May, Theory::Must] {
                let holds = match theory {
                    Theory::May => sim_leq(p, q),
                    _ => fsim_leq(p, q),
                };
                match synth_derivation(p, q, theory) {
                    Some(d) => {
                        assert!(holds, "{p} / {q}: derivation for a false goal");
                        assert_eq!((&d.lhs, &d.rhs), (p, q));
                        if let Err(e) = check_derivation(&d, theory) {
                            panic!("{p} / {q} ({theory:?}): {e}\n{}", d.render(theory));
                        }
                    }
                    None => assert!(!holds, "{p} / {q} ({theory:?}): no derivation"),
                }
            }
        }
    }
}

#[test]
fn weak_derivatives_are_derivable() {
    for p in completeness_corpus() {
        let (plts, d) = Plts::build(&p);
        let mut der = Derivatives::new(&plts);
        for v in der.weak_tau(&d).dists() {
            let q = plts.dist_term(v);
            let must = synth_derivation(&p, &q, Theory::Must).unwrap_or_else(|| panic!("{p} must {q}"));
            check_derivation(&must, Theory::Must).unwrap();
            let may = synth_derivation(&q, &p, Theory::May).unwrap_or_else(|| panic!("{q} may {p}"));
            check_derivation(&may, Theory::May).unwrap();
        }
    }
}

#[test]
fn parallel_composition_is_outside_the_fragment() {
    let p = pcsp_core::parse("a |[a]| a").unwrap();
    assert!(normal_form(&p).is_err());
    assert!(synth_derivation(&p, &p, Theory::May).is_none());
}
