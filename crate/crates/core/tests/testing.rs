use pcsp_core::corpus::Gen;
use pcsp_core::geometry::{minkowski_mix, Mode};
use pcsp_core::syntax::{omega_i, ActSet};
use pcsp_core::testing::{apply_test, outcomes, results_action, results_vector, Flavour};
use pcsp_core::{parse, Plts, Term, Q};

fn t(s: &str) -> Term {
    parse(s).unwrap()
}

#[test]
fn success_only_test_always_succeeds() {
    let mut g = Gen::new(11, &["a", "b"]).with_par();
    for _ in 0..50 {
        let p = g.term(3);
        let x = outcomes(Flavour::Vector, &t("w1"), &p).unwrap();
        assert_eq!(x.points, vec![vec![Q::one()]], "{p}");
        let y = outcomes(Flavour::Vector, &t("w1 [] w2"), &p).unwrap();
        assert_eq!(y.points, vec![vec![Q::zero(), Q::one()], vec![Q::one(), Q::zero()]], "{p}");
    }
}

#[test]
fn probabilistic_tests_mix_their_outcomes() {
    let mut g = Gen::new(12, &["a", "b"]);
    for _ in 0..60 {
        let (t1, t2, p) = (g.test(2, 2), g.test(2, 2), g.term(3));
        let w = g.weight();
        let omega = vec![omega_i(1), omega_i(2)];
        let run = |test: &Term| {
            let app = apply_test(test, &p).unwrap();
            results_vector(&app.plts, &app.initial, &omega)
        };
        let mixed = run(&Term::prob(w.clone(), t1.clone(), t2.clone()));
        let x1 = run(&t1);
        let x2 = run(&t2);
        let want = minkowski_mix(&[(w.clone(), &x1), (Q::one() - &w, &x2)]).unwrap();
        assert!(mixed.same_set(&want), "{t1} / {t2} on {p}");
    }
}

#[test]
fn refusal_tests_detect_weak_refusals() {
    let mut g = Gen::new(13, &["a", "b"]);
    let x: ActSet = ["a", "b"].iter().map(|a| pcsp_core::Name::new(a)).collect();
    for _ in 0..60 {
        let p = g.term(3);
        let (plts, d) = Plts::build(&p);
        let mut der = pcsp_core::Derivatives::new(&plts);
        let refuses = der.can_weakly_refuse(&d, &x).is_some();
        let out = outcomes(Flavour::Vector, &t("a.w1 [] b.w1"), &p).unwrap();
        let reaches_zero = out.points.iter().any(|v| v[0].is_zero());
        assert_eq!(refuses, reaches_zero, "{p}");
    }
}

#[test]
fn single_success_vectors_are_action_outcomes_closed() {
    let mut g = Gen::new(14, &["a", "b"]);
    for _ in 0..60 {
        let (test, p) = (g.test(3, 1), g.term(3));
        let app = apply_test(&test, &p).unwrap();
        let v = results_vector(&app.plts, &app.initial, &app.omega);
        let a = results_action(&app.plts, &app.initial);
        assert_eq!(v.mode, Mode::Convex);
        let hull = pcsp_core::OutcomeSet::hull(v.omega.clone(), a.points.clone());
        assert!(v.same_set(&hull), "{test} on {p}");
    }
}
