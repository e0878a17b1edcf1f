use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

const P_SWAP: &str = "a.((b.d [] c.e) |+1/2| (b.f [] c.g))";
const Q_SWAP: &str = "a.((b.d [] c.g) |+1/2| (b.f [] c.e))";
const T_SWAP: &str = "a.((b.d.w |+1/2| c.e.w) |~| (b.f.w |+1/2| c.g.w))";
const PC: &str = "a |+1/2| b";

fn pcsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcsp")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json report")
}

fn fixture(name: &str, body: &str) -> String {
    let dir = std::env::temp_dir().join(format!("pcsp-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path: PathBuf = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn order_on_the_swap_fixtures() {
    let t = fixture("t_swap.pcsp", T_SWAP);
    let p = fixture("P.pcsp", P_SWAP);
    let q = fixture("Q.pcsp", Q_SWAP);
    let o = pcsp(&["order", "--kind", "may", "--flavour", "state", "--test", &t, &p, &q, "--format", "json"]);
    assert_eq!(code(&o), 1);
    let j = json(&o);
    assert_eq!(j["holds"], false);
    assert_eq!(j["witness"]["p"]["points"], serde_json::json!([["0"], ["1/2"], ["1"]]));
    assert_eq!(j["witness"]["q"]["points"], serde_json::json!([["1/2"]]));
    let back = pcsp(&["order", "--kind", "may", "--flavour", "state", "--test", &t, &q, &p]);
    assert_eq!(code(&back), 0);
}

#[test]
fn failure_simulation_distinguishes_with_a_test() {
    let doubled = format!("({PC}) [] ({PC})");
    let o = pcsp(&["sim", "--must", &doubled, PC, "--format", "json"]);
    assert_eq!(code(&o), 1);
    let j = json(&o);
    assert_eq!(j["holds"], false);
    let phi = j["distinguishing_formula"].as_str().unwrap().to_string();
    assert!(j["characteristic_test"]["test"].is_string());
    // The distinguishing formula holds of the failure-simulating side only.
    assert_eq!(code(&pcsp(&["logic", &phi, &doubled])), 1);
    assert_eq!(code(&pcsp(&["chartest", &phi, PC])), 0);
    assert_eq!(code(&pcsp(&["sim", PC, &doubled])), 0);
}

#[test]
fn parse_and_usage_errors() {
    let p = fixture("P2.pcsp", P_SWAP);
    let o = pcsp(&["parse", &p]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().next(), Some(P_SWAP));
    assert_eq!(code(&pcsp(&["parse", "a.("])), 2);
    assert_eq!(code(&pcsp(&["parse", "--bogus", "a"])), 2);
    assert_eq!(code(&pcsp(&["frobnicate"])), 2);
    assert_eq!(code(&pcsp(&["parse", "--alphabet", "a", "a.b"])), 2);
    assert_eq!(code(&pcsp(&["parse", "--max-depth", "1", "a.a"])), 2);
    assert_eq!(code(&pcsp(&["prove", "a |[a]| a", "a"])), 2);
}

#[test]
fn outcomes_and_apply() {
    let o = pcsp(&["outcomes", "--test", "a.w1 [] b.w2", "a |~| b", "--format", "json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["outcomes"]["points"], serde_json::json!([["0", "1"], ["1", "0"]]));
    let o = pcsp(&["apply", "--test", T_SWAP, P_SWAP, "--format", "json"]);
    let j = json(&o);
    assert_eq!(j["extrema"]["min"], "0");
    assert_eq!(j["extrema"]["max"], "1");
}

#[test]
fn proofs_and_normal_forms() {
    let o = pcsp(&["prove", "--must", "a.(b |~| c)", "a.b [] a.c", "--format", "json"]);
    assert_eq!(code(&o), 0);
    assert!(json(&o)["axioms"].as_array().unwrap().iter().any(|a| a == "Must1"));
    assert_eq!(code(&pcsp(&["prove", "a.b [] a.c", "a.(b |~| c)"])), 0);
    assert_eq!(code(&pcsp(&["prove", "--must", "a", "a |~| b"])), 1);
    let o = pcsp(&["normalize", "a.(b [] (c |+1/2| 0))", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let n = json(&o)["normal_form"].as_str().unwrap().to_string();
    assert_eq!(code(&pcsp(&["sim", "--must", &n, "a.(b [] (c |+1/2| 0))"])), 0);
}

#[test]
fn crosscheck_rejects_a_corrupted_resolution() {
    let test = "a.w1 [] b.w2";
    let proc_ = "a |~| (a |+1/2| b)";
    let o = pcsp(&["resolutions", "--test", test, proc_, "--format", "json"]);
    assert_eq!(code(&o), 0);
    let j = json(&o);
    let res = j["vertices"][0]["resolution"].clone();
    let good = fixture("good.json", &res.to_string());
    assert_eq!(code(&pcsp(&["crosscheck", "--test", test, proc_, "--resolution", &good])), 0);
    // Point a resolution state at a pLTS state it does not resolve.
    let mut bad = res.clone();
    let states = bad["states"].as_array_mut().unwrap();
    let last = states.len() - 1;
    states[0]["resolves"] = states[last]["resolves"].clone();
    let bad = fixture("bad.json", &bad.to_string());
    let o = pcsp(&["crosscheck", "--test", test, proc_, "--resolution", &bad, "--format", "json"]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&o)["ok"], false);
}

#[test]
fn seeded_runs_are_reproducible() {
    let a = pcsp(&["crosscheck", "--samples", "6", "--seed", "3", "--format", "json"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stdout));
    let b = pcsp(&["crosscheck", "--samples", "6", "--seed", "3", "--format", "json"]);
    assert_eq!(a.stdout, b.stdout);
    let c1 = pcsp(&["corpus", "--kind", "formulas", "--seed", "9", "--alphabet", "a,b,c"]);
    let c2 = pcsp(&["corpus", "--kind", "formulas", "--seed", "9", "--alphabet", "a,b,c"]);
    assert_eq!(c1.stdout, c2.stdout);
    let ex = pcsp(&["corpus", "--kind", "exhaustive", "--format", "json"]);
    assert_eq!(json(&ex)["items"].as_array().unwrap().len(), 121);
}

#[test]
fn lts_and_charform() {
    let o = pcsp(&["lts", PC, "--format", "json"]);
    assert_eq!(json(&o)["plts"]["states"].as_array().unwrap().len(), 3);
    let dot = pcsp(&["lts", PC, "--dot"]);
    assert!(String::from_utf8_lossy(&dot.stdout).starts_with("digraph"));
    let o = pcsp(&["charform", "--logic", "l", PC]);
    assert_eq!(code(&o), 0);
    let phi = String::from_utf8_lossy(&o.stdout).trim().to_string();
    assert_eq!(code(&pcsp(&["logic", &phi, PC])), 0);
    assert_eq!(code(&pcsp(&["logic", &phi, "a"])), 1);
}
