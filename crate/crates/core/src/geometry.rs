//! Exact convex geometry over finite point sets: hull reduction, Minkowski mixes, the success
//! maps `α!`, dominance queries and the Hoare/Smyth comparisons.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{Cmp, Lp};
use crate::rational::Q;
use crate::syntax::{Label, Name};

pub type Point = Vec<Q>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("outcome sets over different success alphabets")]
    AlphabetMismatch,
    #[error("outcome sets in different modes")]
    ModeMismatch,
    #[error("mixing weights add up to {0}, not 1")]
    BadWeights(Q),
    #[error("scalar extrema need a one-dimensional set, got dimension {0}")]
    NotScalar(usize),
    #[error("empty outcome set")]
    Empty,
}

/// True when `p` is a convex combination of `pts`.
pub fn in_hull(p: &[Q], pts: &[&Point]) -> bool {
    if pts.is_empty() {
        return false;
    }
    if pts.iter().any(|x| x.as_slice() == p) {
        return true;
    }
    if pts.len() == 1 {
        return false;
    }
    // Outside the bounding box means outside the hull.
    for (k, pk) in p.iter().enumerate() {
        if pts.iter().all(|x| &x[k] < pk) || pts.iter().all(|x| &x[k] > pk) {
            return false;
        }
    }
    let mut lp = Lp::new();
    let lam: Vec<usize> = pts.iter().map(|_| lp.var()).collect();
    lp.constrain(lam.iter().map(|&v| (v, Q::one())), Cmp::Eq, Q::one());
    for (k, pk) in p.iter().enumerate() {
        lp.constrain(lam.iter().zip(pts).map(|(&v, x)| (v, x[k].clone())), Cmp::Eq, pk.clone());
    }
    lp.feasible()
}

/// Drops duplicates and every point in the hull of the remaining ones, keeping payloads.  The
/// survivors come out sorted by coordinates.
pub fn reduce_with<T>(items: Vec<(Point, T)>) -> Vec<(Point, T)> {
    let mut seen: BTreeSet<Point> = BTreeSet::new();
    let mut uniq: Vec<(Point, T)> = Vec::new();
    for (p, t) in items {
        if seen.insert(p.clone()) {
            uniq.push((p, t));
        }
    }
    uniq.sort_by(|a, b| a.0.cmp(&b.0));
    if uniq.len() <= 2 {
        return uniq;
    }
    let dim = uniq[0].0.len();
    let mut alive = vec![true; uniq.len()];
    for i in 0..uniq.len() {
        // A strict extreme in some coordinate is a vertex.
        let strict = (0..dim).any(|k| {
            let v = &uniq[i].0[k];
            let others = (0..uniq.len()).filter(|&j| j != i && alive[j]);
            let mut above = true;
            let mut below = true;
            for j in others {
                above &= v > &uniq[j].0[k];
                below &= v < &uniq[j].0[k];
            }
            above || below
        });
        if strict {
            continue;
        }
        let others: Vec<&Point> = (0..uniq.len()).filter(|&j| j != i && alive[j]).map(|j| &uniq[j].0).collect();
        if in_hull(&uniq[i].0, &others) {
            alive[i] = false;
        }
    }
    uniq.into_iter().zip(alive).filter(|(_, a)| *a).map(|(x, _)| x).collect()
}

/// Vertex set of the hull of `points`.
pub fn reduce(points: Vec<Point>) -> Vec<Point> {
    reduce_with(points.into_iter().map(|p| (p, ())).collect()).into_iter().map(|x| x.0).collect()
}

/// `Σ p_i·X_i` over vertex lists with payload combination, reduced after each summand.
pub fn minkowski_with<T: Clone, U: Clone>(
    parts: &[(Q, Vec<(Point, T)>)],
    dim: usize,
    init: U,
    join: impl Fn(&U, &T) -> U,
) -> Vec<(Point, U)> {
    let mut acc: Vec<(Point, U)> = vec![(vec![Q::zero(); dim], init)];
    for (w, verts) in parts {
        let mut next = Vec::with_capacity(acc.len() * verts.len());
        for (a, ua) in &acc {
            for (v, t) in verts {
                let p: Point = a.iter().zip(v).map(|(x, y)| x + &(w * y)).collect();
                next.push((p, join(ua, t)));
            }
        }
        acc = reduce_with(next);
    }
    acc
}

/// Pointwise `p ≤ q`.
pub fn leq(p: &[Q], q: &[Q]) -> bool {
    p.iter().zip(q).all(|(a, b)| a <= b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// A plain finite set; no convex closure.
    Raw,
    /// The convex hull of the listed (irredundant) vertices.
    Convex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    Hoare,
    Smyth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "<=")]
    Below,
    #[serde(rename = ">=")]
    Above,
}

/// A set of outcome vectors indexed by the ordered success alphabet `omega`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSet {
    pub omega: Vec<Name>,
    pub mode: Mode,
    pub points: Vec<Point>,
}

impl OutcomeSet {
    /// A raw finite set; points are deduplicated and sorted.
    pub fn raw(omega: Vec<Name>, points: Vec<Point>) -> OutcomeSet {
        let set: BTreeSet<Point> = points.into_iter().collect();
        OutcomeSet { omega, mode: Mode::Raw, points: set.into_iter().collect() }
    }

    /// The hull of `points`, by its vertices.
    pub fn hull(omega: Vec<Name>, points: Vec<Point>) -> OutcomeSet {
        OutcomeSet { omega, mode: Mode::Convex, points: reduce(points) }
    }

    pub fn zero(omega: Vec<Name>, mode: Mode) -> OutcomeSet {
        let dim = omega.len();
        OutcomeSet { omega, mode, points: vec![vec![Q::zero(); dim]] }
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    /// `↕X`.
    pub fn closure(&self) -> OutcomeSet {
        OutcomeSet::hull(self.omega.clone(), self.points.clone())
    }

    /// Union of two sets in the same mode.
    pub fn union(&self, other: &OutcomeSet) -> Result<OutcomeSet, GeometryError> {
        self.compatible(other)?;
        let pts = self.points.iter().chain(&other.points).cloned().collect();
        Ok(match self.mode {
            Mode::Raw => OutcomeSet::raw(self.omega.clone(), pts),
            Mode::Convex => OutcomeSet::hull(self.omega.clone(), pts),
        })
    }

    fn compatible(&self, other: &OutcomeSet) -> Result<(), GeometryError> {
        if self.omega != other.omega {
            return Err(GeometryError::AlphabetMismatch);
        }
        if self.mode != other.mode {
            return Err(GeometryError::ModeMismatch);
        }
        Ok(())
    }

    /// Membership; for convex sets, membership in the hull.
    pub fn contains(&self, p: &[Q]) -> bool {
        match self.mode {
            Mode::Raw => self.points.iter().any(|x| x.as_slice() == p),
            Mode::Convex => in_hull(p, &self.points.iter().collect::<Vec<_>>()),
        }
    }

    /// Set equality (vertex sets for convex mode, points for raw mode).
    pub fn same_set(&self, other: &OutcomeSet) -> bool {
        self.omega == other.omega && self.mode == other.mode && self.points == other.points
    }
}

/// `Σ p_i·X_i`: choice-function sums for raw sets, Minkowski sums of hulls for convex sets.
pub fn minkowski_mix(parts: &[(Q, &OutcomeSet)]) -> Result<OutcomeSet, GeometryError> {
    let Some((_, first)) = parts.first() else { return Err(GeometryError::Empty) };
    let total: Q = parts.iter().map(|p| &p.0).sum();
    if !total.is_one() {
        return Err(GeometryError::BadWeights(total));
    }
    for (_, x) in parts {
        first.compatible(x)?;
    }
    let dim = first.dim();
    match first.mode {
        Mode::Raw => {
            let mut acc: BTreeSet<Point> = BTreeSet::from([vec![Q::zero(); dim]]);
            for (w, x) in parts {
                let mut next = BTreeSet::new();
                for a in &acc {
                    for v in &x.points {
                        next.insert(a.iter().zip(v).map(|(s, y)| s + &(w * y)).collect::<Point>());
                    }
                }
                acc = next;
            }
            Ok(OutcomeSet { omega: first.omega.clone(), mode: Mode::Raw, points: acc.into_iter().collect() })
        }
        Mode::Convex => {
            let weighted: Vec<(Q, Vec<(Point, ())>)> =
                parts.iter().map(|(w, x)| (w.clone(), x.points.iter().map(|p| (p.clone(), ())).collect())).collect();
            let pts = minkowski_with(&weighted, dim, (), |_, _| ());
            Ok(OutcomeSet {
                omega: first.omega.clone(),
                mode: Mode::Convex,
                points: pts.into_iter().map(|x| x.0).collect(),
            })
        }
    }
}

/// Hoare: every point of `x` is dominated by a point of `y`.  Smyth: every point of `y`
/// dominates a point of `x`.  Convex sets quantify over hulls.
pub fn compare(kind: Order, x: &OutcomeSet, y: &OutcomeSet) -> Result<bool, GeometryError> {
    x.compatible(y)?;
    let convex = x.mode == Mode::Convex;
    Ok(match kind {
        Order::Hoare => x.points.iter().all(|p| {
            if convex {
                dominated_point_exists(y, p, Direction::Above)
            } else {
                y.points.iter().any(|q| leq(p, q))
            }
        }),
        Order::Smyth => y.points.iter().all(|q| {
            if convex {
                dominated_point_exists(x, q, Direction::Below)
            } else {
                x.points.iter().any(|p| leq(p, q))
            }
        }),
    })
}

/// `α!X`: sets coordinate `α` to one when `α` is a success action of the alphabet.
pub fn apply_success(alpha: &Label, x: &OutcomeSet) -> OutcomeSet {
    let idx = match alpha {
        Label::Success(n) => x.omega.iter().position(|m| m == n),
        _ => None,
    };
    let Some(k) = idx else { return x.clone() };
    let pts: Vec<Point> = x
        .points
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p[k] = Q::one();
            p
        })
        .collect();
    match x.mode {
        Mode::Raw => OutcomeSet::raw(x.omega.clone(), pts),
        Mode::Convex => OutcomeSet::hull(x.omega.clone(), pts),
    }
}

/// Is there `o` in `X` (its hull, for convex sets) with `o ≤ v` (`Below`) or `o ≥ v` (`Above`)?
pub fn dominated_point_exists(x: &OutcomeSet, v: &[Q], dir: Direction) -> bool {
    let ok = |p: &Point| match dir {
        Direction::Below => leq(p, v),
        Direction::Above => leq(v, p),
    };
    if x.points.iter().any(ok) {
        return true;
    }
    if x.mode == Mode::Raw || x.points.len() < 2 {
        return false;
    }
    let mut lp = Lp::new();
    let lam: Vec<usize> = x.points.iter().map(|_| lp.var()).collect();
    lp.constrain(lam.iter().map(|&l| (l, Q::one())), Cmp::Eq, Q::one());
    let cmp = match dir {
        Direction::Below => Cmp::Le,
        Direction::Above => Cmp::Ge,
    };
    for (k, vk) in v.iter().enumerate() {
        lp.constrain(lam.iter().zip(&x.points).map(|(&l, p)| (l, p[k].clone())), cmp, vk.clone());
    }
    lp.feasible()
}

/// Exact `(min, max)` of a one-dimensional set.
pub fn scalar_extrema(x: &OutcomeSet) -> Result<(Q, Q), GeometryError> {
    if x.dim() != 1 {
        return Err(GeometryError::NotScalar(x.dim()));
    }
    let lo = x.points.iter().map(|p| &p[0]).min().ok_or(GeometryError::Empty)?;
    let hi = x.points.iter().map(|p| &p[0]).max().ok_or(GeometryError::Empty)?;
    Ok((lo.clone(), hi.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{omega, omega_i};

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    fn om2() -> Vec<Name> {
        vec![omega_i(1), omega_i(2)]
    }

    #[test]
    fn hull_drops_midpoint() {
        let x = OutcomeSet::hull(om2(), vec![vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(1, 1)], vec![q(1, 2), q(1, 2)]]);
        assert_eq!(x.points, vec![vec![q(0, 1), q(1, 1)], vec![q(1, 1), q(0, 1)]]);
        let single = OutcomeSet::hull(om2(), vec![vec![q(1, 2), q(1, 2)]]);
        assert_eq!(single.points.len(), 1);
    }

    #[test]
    fn hoare_on_hulls_versus_raw() {
        let x = vec![vec![q(1, 2), q(1, 2)]];
        let y = vec![vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(1, 1)]];
        let hx = OutcomeSet::hull(om2(), x.clone());
        let hy = OutcomeSet::hull(om2(), y.clone());
        assert!(compare(Order::Hoare, &hx, &hy).unwrap());
        let rx = OutcomeSet::raw(om2(), x);
        let ry = OutcomeSet::raw(om2(), y);
        assert!(!compare(Order::Hoare, &rx, &ry).unwrap());
        assert!(compare(Order::Hoare, &rx, &rx).unwrap());
        assert!(compare(Order::Hoare, &rx, &hy).is_err());
    }

    #[test]
    fn scalar_hoare_and_smyth_sets() {
        let w = vec![omega()];
        let p = OutcomeSet::raw(w.clone(), vec![vec![q(0, 1)], vec![q(1, 2)], vec![q(1, 1)]]);
        let qq = OutcomeSet::raw(w.clone(), vec![vec![q(1, 2)]]);
        assert!(!compare(Order::Hoare, &p, &qq).unwrap());
        assert!(!compare(Order::Smyth, &qq, &p).unwrap());
        assert_eq!(scalar_extrema(&p).unwrap(), (q(0, 1), q(1, 1)));
        assert_eq!(scalar_extrema(&qq).unwrap(), (q(1, 2), q(1, 2)));
    }

    #[test]
    fn raw_mix_is_choice_function_sum() {
        let w = vec![omega()];
        let x = OutcomeSet::raw(w.clone(), vec![vec![q(1, 1)], vec![q(0, 1)]]);
        let m = minkowski_mix(&[(q(1, 2), &x), (q(1, 2), &x)]).unwrap();
        assert_eq!(m.points, vec![vec![q(0, 1)], vec![q(1, 2)], vec![q(1, 1)]]);
    }

    #[test]
    fn convex_mix_contains_average() {
        let y = OutcomeSet::hull(om2(), vec![vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(1, 1)]]);
        let m = minkowski_mix(&[(q(1, 2), &y), (q(1, 2), &y)]).unwrap();
        assert!(m.contains(&[q(1, 2), q(1, 2)]));
        assert!(m.same_set(&y));
    }

    #[test]
    fn success_map() {
        let z = OutcomeSet::zero(om2(), Mode::Convex);
        let w1 = apply_success(&Label::Success(omega_i(1)), &z);
        assert_eq!(w1.points, vec![vec![q(1, 1), q(0, 1)]]);
        assert_eq!(apply_success(&Label::Tau, &z), z);
        assert_eq!(apply_success(&Label::Success(omega_i(1)), &w1), w1);
    }

    #[test]
    fn dominance() {
        let z = OutcomeSet::zero(om2(), Mode::Convex);
        assert!(dominated_point_exists(&z, &[q(0, 1), q(0, 1)], Direction::Below));
        let y = OutcomeSet::hull(om2(), vec![vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(1, 1)]]);
        assert!(dominated_point_exists(&y, &[q(1, 2), q(1, 2)], Direction::Below));
        assert!(!dominated_point_exists(&y, &[q(1, 3), q(1, 3)], Direction::Below));
        let top = OutcomeSet::hull(vec![omega()], vec![vec![Q::one()]]);
        assert!(!dominated_point_exists(&top, &[Q::zero()], Direction::Below));
    }

    #[test]
    fn mix_matches_vertex_selection_enumeration() {
        let a = OutcomeSet::hull(om2(), vec![vec![q(0, 1), q(0, 1)], vec![q(1, 1), q(0, 1)]]);
        let b = OutcomeSet::hull(om2(), vec![vec![q(0, 1), q(1, 1)], vec![q(1, 2), q(1, 2)]]);
        let c = OutcomeSet::hull(om2(), vec![vec![q(1, 1), q(1, 1)]]);
        let w = [q(1, 3), q(1, 3), q(1, 3)];
        let m = minkowski_mix(&[(w[0].clone(), &a), (w[1].clone(), &b), (w[2].clone(), &c)]).unwrap();
        let mut all = Vec::new();
        for x in &a.points {
            for y in &b.points {
                for z in &c.points {
                    all.push((0..2).map(|k| &w[0] * &x[k] + &w[1] * &y[k] + &w[2] * &z[k]).collect());
                }
            }
        }
        assert!(m.same_set(&OutcomeSet::hull(om2(), all)));
    }
}
