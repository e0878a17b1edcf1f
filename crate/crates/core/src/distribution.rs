//! Finite-support distributions with exact weights, the interpretation of terms, expectations and
//! lifting of state-to-distribution relations.

use std::collections::BTreeMap;
use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{Cmp, Lp};
use crate::rational::Q;
use crate::syntax::{desugar, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistError {
    #[error("weights add up to {0}, not 1")]
    BadMass(Q),
    #[error("negative weight {0}")]
    NegativeWeight(Q),
    #[error("expected value requested at a state outside the function's domain")]
    MissingState,
}

/// A probability distribution over `K`.  Zero weights never appear in the map.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dist<K: Ord>(BTreeMap<K, Q>);

impl<K: Ord + Clone> Dist<K> {
    pub fn point(k: K) -> Dist<K> {
        Dist(BTreeMap::from([(k, Q::one())]))
    }

    /// Merges repeated keys and drops zeros; the weights must add up to one.
    pub fn from_pairs<I: IntoIterator<Item = (K, Q)>>(pairs: I) -> Result<Dist<K>, DistError> {
        let m = Dist::accumulate(pairs)?;
        let total: Q = m.values().sum();
        if !total.is_one() {
            return Err(DistError::BadMass(total));
        }
        Ok(Dist(m))
    }

    fn accumulate<I: IntoIterator<Item = (K, Q)>>(pairs: I) -> Result<BTreeMap<K, Q>, DistError> {
        let mut m: BTreeMap<K, Q> = BTreeMap::new();
        for (k, p) in pairs {
            if p.is_negative() {
                return Err(DistError::NegativeWeight(p));
            }
            if !p.is_zero() {
                *m.entry(k).or_insert_with(Q::zero) += p;
            }
        }
        Ok(m)
    }

    /// `Σ p_i·Δ_i`.
    pub fn mix<'a, I>(parts: I) -> Result<Dist<K>, DistError>
    where
        I: IntoIterator<Item = (Q, &'a Dist<K>)>,
        K: 'a,
    {
        let mut pairs = Vec::new();
        for (p, d) in parts {
            for (k, w) in d.iter() {
                pairs.push((k.clone(), &p * w));
            }
        }
        Dist::from_pairs(pairs)
    }

    /// `p·Δ + (1−p)·Θ`.
    pub fn binary_mix(p: &Q, l: &Dist<K>, r: &Dist<K>) -> Dist<K> {
        Dist::mix([(p.clone(), l), (Q::one() - p, r)]).expect("binary mix of distributions")
    }

    pub fn weight(&self, k: &K) -> Q {
        self.0.get(k).cloned().unwrap_or_else(Q::zero)
    }

    pub fn support(&self) -> impl Iterator<Item = &K> {
        self.0.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &Q)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_point(&self) -> bool {
        self.0.len() == 1
    }

    pub fn contains(&self, k: &K) -> bool {
        self.0.contains_key(k)
    }

    /// The pushforward along `f`.
    pub fn map<L: Ord + Clone, F: FnMut(&K) -> L>(&self, mut f: F) -> Dist<L> {
        let mut m: BTreeMap<L, Q> = BTreeMap::new();
        for (k, p) in &self.0 {
            *m.entry(f(k)).or_insert_with(Q::zero) += p;
        }
        Dist(m)
    }

    /// The product distribution, combined by `f`.
    pub fn product<L: Ord + Clone, M: Ord + Clone, F: FnMut(&K, &L) -> M>(&self, other: &Dist<L>, mut f: F) -> Dist<M> {
        let mut m: BTreeMap<M, Q> = BTreeMap::new();
        for (k, p) in &self.0 {
            for (l, q) in &other.0 {
                *m.entry(f(k, l)).or_insert_with(Q::zero) += p * q;
            }
        }
        Dist(m)
    }

    /// Total mass; one for every well-formed value.
    pub fn mass(&self) -> Q {
        self.0.values().sum()
    }

    pub fn is_valid(&self) -> bool {
        self.0.values().all(|p| p.is_positive()) && self.mass().is_one()
    }

    /// Builds a sub-probability vector without the unit-mass check.
    pub fn sub_from_pairs<I: IntoIterator<Item = (K, Q)>>(pairs: I) -> Result<Dist<K>, DistError> {
        Ok(Dist(Dist::accumulate(pairs)?))
    }
}

impl<K: Ord + fmt::Debug> fmt::Debug for Dist<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, p)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k:?}↦{p}")?;
        }
        f.write_str("}")
    }
}

#[derive(Serialize, Deserialize)]
struct Entry<K> {
    state: K,
    p: Q,
}

impl<K: Ord + Clone + Serialize> Serialize for Dist<K> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry<K>> = self.0.iter().map(|(k, p)| Entry { state: k.clone(), p: p.clone() }).collect();
        let mut st = s.serialize_struct("Dist", 1)?;
        st.serialize_field("dist", &entries)?;
        st.end()
    }
}

impl<'de, K: Ord + Clone + Deserialize<'de>> Deserialize<'de> for Dist<K> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Dist<K>, D::Error> {
        #[derive(Deserialize)]
        struct Wire<K> {
            dist: Vec<Entry<K>>,
        }
        let w: Wire<K> = Wire::deserialize(d)?;
        Dist::from_pairs(w.dist.into_iter().map(|e| (e.state, e.p))).map_err(serde::de::Error::custom)
    }
}

/// `⟦P⟧` as a distribution over desugared state-based terms.
pub fn interp(p: &Term) -> Dist<Term> {
    fn go(t: &Term) -> Dist<Term> {
        match t {
            Term::ProbChoice(w, l, r) => Dist::binary_mix(w, &go(l), &go(r)),
            s => Dist::point(s.clone()),
        }
    }
    go(&desugar(p))
}

/// `Σ Δ(s)·f(s)`.
pub fn expected<K: Ord + Clone, F>(d: &Dist<K>, mut f: F) -> Result<Vec<Q>, DistError>
where
    F: FnMut(&K) -> Option<Vec<Q>>,
{
    let mut acc: Option<Vec<Q>> = None;
    for (k, p) in d.iter() {
        let v = f(k).ok_or(DistError::MissingState)?;
        match &mut acc {
            None => acc = Some(v.iter().map(|x| p * x).collect()),
            Some(a) => {
                for (ai, x) in a.iter_mut().zip(&v) {
                    *ai += p * x;
                }
            }
        }
    }
    Ok(acc.unwrap_or_default())
}

/// A decomposition witnessing `Δ (lift R) Θ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftWitness<K: Ord + Clone> {
    pub triples: Vec<(K, Q, Dist<K>)>,
}

impl<K: Ord + Clone> LiftWitness<K> {
    /// Re-checks the three lifting clauses against `Δ`, `Θ` and the relation.
    pub fn validate(&self, pairs: &[(K, Dist<K>)], delta: &Dist<K>, theta: &Dist<K>) -> bool {
        let total: Q = self.triples.iter().map(|t| &t.1).sum();
        if !total.is_one() || self.triples.iter().any(|t| !t.1.is_positive()) {
            return false;
        }
        if !self.triples.iter().all(|(s, _, phi)| pairs.iter().any(|(s2, p2)| s2 == s && p2 == phi)) {
            return false;
        }
        let source = Dist::from_pairs(self.triples.iter().map(|(s, p, _)| (s.clone(), p.clone())));
        let target = Dist::mix(self.triples.iter().map(|(_, p, phi)| (p.clone(), phi)));
        source.as_ref() == Ok(delta) && target.as_ref() == Ok(theta)
    }
}

/// Decides `Δ (lift R) Θ` for the finite relation `pairs`, returning a witness.
pub fn lift_check<K: Ord + Clone>(pairs: &[(K, Dist<K>)], delta: &Dist<K>, theta: &Dist<K>) -> Option<LiftWitness<K>> {
    let mut lp = Lp::new();
    let mut used: Vec<(usize, usize)> = Vec::new();
    for (s, p) in delta.iter() {
        let vars: Vec<(usize, Q)> = pairs
            .iter()
            .enumerate()
            .filter(|(_, (s2, _))| s2 == s)
            .map(|(i, _)| {
                let v = lp.var();
                used.push((v, i));
                (v, Q::one())
            })
            .collect();
        if vars.is_empty() {
            return None;
        }
        lp.constrain(vars, Cmp::Eq, p.clone());
    }
    let mut targets: BTreeMap<&K, Vec<(usize, Q)>> = BTreeMap::new();
    for k in theta.support() {
        targets.entry(k).or_default();
    }
    for &(v, i) in &used {
        for (t, w) in pairs[i].1.iter() {
            targets.entry(t).or_default().push((v, w.clone()));
        }
    }
    for (t, terms) in targets {
        lp.constrain(terms, Cmp::Eq, theta.weight(t));
    }
    let sol = lp.solve()?;
    let triples = used
        .iter()
        .filter(|(v, _)| sol[*v].is_positive())
        .map(|&(v, i)| (pairs[i].0.clone(), sol[v].clone(), pairs[i].1.clone()))
        .collect();
    Some(LiftWitness { triples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    fn t(s: &str) -> Term {
        parse(s).unwrap()
    }

    #[test]
    fn point_and_mix() {
        let a = Dist::point("a");
        let b = Dist::point("b");
        let m = Dist::mix([(q(1, 2), &a), (q(1, 2), &b)]).unwrap();
        assert_eq!(m.weight(&"a"), q(1, 2));
        assert_eq!(m.support().count(), 2);
        let merged = Dist::mix([(q(1, 3), &a), (q(2, 3), &a)]).unwrap();
        assert_eq!(merged, a);
        assert!(Dist::mix([(q(1, 3), &a)]).is_err());
    }

    #[test]
    fn interp_fixtures() {
        let pc = interp(&t("a |+1/2| b"));
        assert_eq!(pc, Dist::from_pairs([(t("a"), q(1, 2)), (t("b"), q(1, 2))]).unwrap());
        assert_eq!(interp(&t("a |~| b")), Dist::point(t("a |~| b")));
        let d = interp(&t("(a |~| b) |+1/2| (a |~| c)"));
        assert_eq!(d.weight(&t("a |~| b")), q(1, 2));
        assert_eq!(d.weight(&t("a |~| c")), q(1, 2));
        assert_eq!(interp(&t("a |+1/3| a")), Dist::point(t("a")));
        assert_eq!(interp(&t("a |+1/3| b")), interp(&t("b |+2/3| a")));
    }

    #[test]
    fn expectations() {
        let pc = interp(&t("a |+1/2| b"));
        let v = expected(&pc, |s| Some(vec![if *s == t("a") { Q::one() } else { Q::zero() }])).unwrap();
        assert_eq!(v, vec![q(1, 2)]);
        assert!(expected(&pc, |_| None).is_err());
    }

    #[test]
    fn worked_lifting() {
        // Δ = ⟦(a⊓b) ⊕½ (a⊓c)⟧, Θ = ⟦a ⊕½ ((a⊓b) ⊕½ c)⟧.
        let ab = t("a |~| b");
        let ac = t("a |~| c");
        let delta = interp(&t("(a |~| b) |+1/2| (a |~| c)"));
        let theta = interp(&t("a |+1/2| ((a |~| b) |+1/2| c)"));
        let pairs = vec![
            (ab.clone(), Dist::point(t("a"))),
            (ab.clone(), Dist::point(ab.clone())),
            (ac.clone(), Dist::point(t("a"))),
            (ac.clone(), Dist::point(t("c"))),
        ];
        let w = lift_check(&pairs, &delta, &theta).expect("lifting exists");
        assert!(w.validate(&pairs, &delta, &theta));
        assert!(w.triples.iter().all(|tr| tr.1 == q(1, 4)));
        assert_eq!(w.triples.len(), 4);
    }

    #[test]
    fn identity_lifting_and_failure() {
        let s = Dist::point(1usize);
        let pairs = vec![(1usize, s.clone())];
        assert!(lift_check(&pairs, &s, &s).is_some());
        let other = Dist::point(2usize);
        assert!(lift_check(&pairs, &s, &other).is_none());
    }

    #[test]
    fn lifting_agrees_with_grid_search() {
        // 2×2 instance: states 0,1 each related to two targets among {10, 11}.
        let d = |a: i64, b: i64| Dist::from_pairs([(10usize, q(a, 4)), (11usize, q(b, 4))]).unwrap();
        let pairs = vec![(0usize, d(4, 0)), (0, d(2, 2)), (1usize, d(1, 3)), (1, d(3, 1))];
        let delta = Dist::from_pairs([(0usize, q(1, 2)), (1usize, q(1, 2))]).unwrap();
        for num in 0..=8 {
            let theta = match Dist::from_pairs([(10usize, q(num, 8)), (11usize, q(8 - num, 8))]) {
                Ok(x) => x,
                Err(_) => continue,
            };
            // Brute force over weights in steps of 1/48.
            let mut found = false;
            for i in 0..=24 {
                for j in 0..=24 {
                    let (w00, w01) = (q(i, 48), q(24 - i, 48));
                    let (w10, w11) = (q(j, 48), q(24 - j, 48));
                    let mixed =
                        Dist::mix([(w00, &pairs[0].1), (w01, &pairs[1].1), (w10, &pairs[2].1), (w11, &pairs[3].1)])
                            .unwrap();
                    found |= mixed == theta;
                }
            }
            assert_eq!(lift_check(&pairs, &delta, &theta).is_some(), found, "theta weight {num}/8");
        }
    }
}
