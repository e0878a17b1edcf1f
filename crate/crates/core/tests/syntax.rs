use pcsp_core::corpus::Gen;
use pcsp_core::syntax::{classify, desugar, unparse, TermClass};
use pcsp_core::{interp, parse};
use proptest::prelude::*;

proptest! {
    #[test]
    fn printed_terms_parse_back(seed in any::<u64>()) {
        let mut g = Gen::new(seed, &["a", "b", "c"]).with_par();
        let t = g.term(4);
        prop_assert_eq!(parse(&unparse(&t)).unwrap(), t.clone());
        prop_assert_eq!(parse(&t.to_string()).unwrap(), t);
    }

    #[test]
    fn tests_classify_by_their_success_actions(seed in any::<u64>()) {
        let mut g = Gen::new(seed, &["a", "b"]);
        let t = g.test(3, 2);
        let TermClass::VectorTest(omega) = classify(&t).unwrap() else { panic!("{t} is not a vector test") };
        prop_assert!(!omega.is_empty());
        prop_assert_eq!(classify(&g.term(3)).unwrap(), TermClass::Process);
    }

    #[test]
    fn desugaring_is_idempotent_and_keeps_the_distribution_shape(seed in any::<u64>()) {
        let mut g = Gen::new(seed, &["a", "b"]).with_par();
        let t = g.term(3);
        let d = desugar(&t);
        prop_assert_eq!(desugar(&d), d.clone());
        let mass: pcsp_core::Q = interp(&d).iter().map(|(_, p)| p.clone()).sum();
        prop_assert!(mass.is_one());
    }
}

#[test]
fn fixture_round_trip() {
    let p = "a.((b.d [] c.e) |+1/2| (b.f [] c.g))";
    let t = parse(p).unwrap();
    assert_eq!(unparse(&t), p);
}
