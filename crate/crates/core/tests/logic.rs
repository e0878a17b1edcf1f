use pcsp_core::corpus::Gen;
use pcsp_core::logic::{char_formula, check_witness, parse_formula, sat_witness, Formula, Logic};
use pcsp_core::{Derivatives, Plts};

#[test]
fn formulas_print_and_parse_back() {
    let mut g = Gen::new(41, &["a", "b", "c"]);
    for i in 0..200 {
        let logic = if i % 2 == 0 { Logic::F } else { Logic::L };
        let f = g.formula(4, logic);
        let back = parse_formula(&f.to_string()).unwrap();
        assert_eq!(back, f);
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<Formula>(&json).unwrap(), f);
    }
}

#[test]
fn witnesses_recheck() {
    let mut g = Gen::new(42, &["a", "b"]);
    let mut found = 0;
    for _ in 0..200 {
        let f = g.formula(3, Logic::F);
        let p = g.term(3);
        let (plts, d) = Plts::build(&p);
        let mut der = Derivatives::new(&plts);
        if let Some(w) = sat_witness(&mut der, &d, &f) {
            found += 1;
            assert!(check_witness(&mut der, &d, &f, &w), "{p} |= {f}");
        }
    }
    assert!(found > 20);
}

#[test]
fn char_formulas_of_l_hold_too() {
    let mut g = Gen::new(43, &["a", "b"]).with_par();
    for _ in 0..100 {
        let p = g.term(3);
        let (plts, d) = Plts::build(&p);
        let phi = char_formula(&plts, &d, Logic::L, &p.visible_actions());
        assert!(phi.in_l());
        let mut der = Derivatives::new(&plts);
        assert!(sat_witness(&mut der, &d, &phi).is_some(), "{p}");
    }
}
