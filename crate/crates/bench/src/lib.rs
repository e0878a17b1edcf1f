//! Seeded workloads shared by the benchmarks.

use pcsp_core::corpus::Gen;
use pcsp_core::{parse, Term};

/// Two processes that differ by swapping branches, and a test telling them apart.
pub fn swap() -> (Term, Term, Term) {
    let p = parse("a.((b.d [] c.e) |+1/2| (b.f [] c.g))").expect("fixture");
    let q = parse("a.((b.d [] c.g) |+1/2| (b.f [] c.e))").expect("fixture");
    let t = parse("a.((b.d.w |+1/2| c.e.w) |~| (b.f.w |+1/2| c.g.w))").expect("fixture");
    (p, q, t)
}

/// `n` seeded process pairs of the given depth over `{a, b}`.
pub fn pairs(seed: u64, n: usize, depth: usize) -> Vec<(Term, Term)> {
    let mut g = Gen::new(seed, &["a", "b"]);
    (0..n).map(|_| (g.term(depth), g.term(depth))).collect()
}

/// `n` seeded vector tests paired with processes.
pub fn applications(seed: u64, n: usize, depth: usize) -> Vec<(Term, Term)> {
    let mut g = Gen::new(seed, &["a", "b"]).with_par();
    (0..n).map(|_| (g.test(depth, 2), g.term(depth))).collect()
}
