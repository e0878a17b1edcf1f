//! Exact linear feasibility.
//!
//! A sparse phase-one simplex over [`Q`].  Every variable is non-negative; constraints are `=`,
//! `<=` or `>=` against a rational right-hand side.  A presolve pass fixes variables forced by
//! single-variable rows and by homogeneous one-signed rows.  Pricing is by steepest reduced
//! cost, falling back to Bland's rule after a run of degenerate pivots.  The solver returns a
//! basic feasible point, or `None` when the system has no non-negative solution.

use std::collections::BTreeMap;

use crate::rational::Q;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone)]
struct Row {
    terms: Vec<(usize, Q)>,
    cmp: Cmp,
    rhs: Q,
}

/// A system of linear constraints over non-negative rational variables.
#[derive(Debug, Clone, Default)]
pub struct Lp {
    nvars: usize,
    rows: Vec<Row>,
    infeasible: bool,
}

impl Lp {
    pub fn new() -> Lp {
        Lp::default()
    }

    pub fn var(&mut self) -> usize {
        self.nvars += 1;
        self.nvars - 1
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Adds `Σ coef·x cmp rhs`.  Repeated variables are merged and zero coefficients dropped.
    pub fn constrain<I>(&mut self, terms: I, cmp: Cmp, rhs: Q)
    where
        I: IntoIterator<Item = (usize, Q)>,
    {
        let mut merged: BTreeMap<usize, Q> = BTreeMap::new();
        for (v, c) in terms {
            assert!(v < self.nvars, "constraint mentions an unknown variable");
            *merged.entry(v).or_insert_with(Q::zero) += c;
        }
        let terms: Vec<(usize, Q)> = merged.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        if terms.is_empty() {
            let ok = match cmp {
                Cmp::Eq => rhs.is_zero(),
                Cmp::Le => !rhs.is_negative(),
                Cmp::Ge => !rhs.is_positive(),
            };
            if !ok {
                self.infeasible = true;
            }
            return;
        }
        self.rows.push(Row { terms, cmp, rhs });
    }

    /// Marks the system infeasible outright.
    pub fn contradiction(&mut self) {
        self.infeasible = true;
    }

    pub fn is_trivially_infeasible(&self) -> bool {
        self.infeasible
    }

    pub fn feasible(&self) -> bool {
        self.solve().is_some()
    }

    /// A non-negative solution, if any.
    pub fn solve(&self) -> Option<Vec<Q>> {
        if self.infeasible {
            return None;
        }
        let mut sys = System::from_rows(self.nvars, &self.rows);
        if !sys.presolve() {
            return None;
        }
        let x = sys.simplex()?;
        let x = x[..self.nvars].to_vec();
        debug_assert!(self.check(&x));
        Some(x)
    }

    /// True when `x` satisfies every constraint.
    pub fn check(&self, x: &[Q]) -> bool {
        if self.infeasible || x.len() != self.nvars || x.iter().any(|v| v.is_negative()) {
            return false;
        }
        self.rows.iter().all(|row| {
            let lhs: Q = row.terms.iter().map(|(v, c)| c * &x[*v]).sum();
            match row.cmp {
                Cmp::Eq => lhs == row.rhs,
                Cmp::Le => lhs <= row.rhs,
                Cmp::Ge => lhs >= row.rhs,
            }
        })
    }
}

/// Degenerate pivots in a row before pricing switches to Bland's rule.
const DEGENERATE_RUN: usize = 2000;

/// Equality form `A·x = b`, `x ≥ 0`, with slack columns appended after the structural ones.
struct System {
    ncols: usize,
    rows: Vec<(Vec<(usize, Q)>, Q)>,
    fixed: Vec<Option<Q>>,
}

impl System {
    fn from_rows(nvars: usize, rows: &[Row]) -> System {
        let mut ncols = nvars;
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            let mut terms = row.terms.clone();
            match row.cmp {
                Cmp::Eq => {}
                Cmp::Le => {
                    terms.push((ncols, Q::one()));
                    ncols += 1;
                }
                Cmp::Ge => {
                    terms.push((ncols, -Q::one()));
                    ncols += 1;
                }
            }
            out.push((terms, row.rhs.clone()));
        }
        System { ncols, rows: out, fixed: vec![None; ncols] }
    }

    /// Fixes variables forced by single-variable rows and by zero rows with one-signed
    /// coefficients, substituting them away.  Returns false on a contradiction.
    fn presolve(&mut self) -> bool {
        let mut by_col: Vec<Vec<usize>> = vec![Vec::new(); self.ncols];
        for (i, (terms, _)) in self.rows.iter().enumerate() {
            for (v, _) in terms {
                by_col[*v].push(i);
            }
        }
        let mut live = vec![true; self.rows.len()];
        let mut queue: Vec<usize> = (0..self.rows.len()).collect();
        while let Some(i) = queue.pop() {
            if !live[i] {
                continue;
            }
            let (terms, rhs) = &mut self.rows[i];
            let mut b = rhs.clone();
            terms.retain(|(v, c)| match &self.fixed[*v] {
                Some(x) => {
                    b -= &(c * x);
                    false
                }
                None => true,
            });
            *rhs = b.clone();
            let pos = terms.iter().all(|(_, c)| c.is_positive());
            let neg = terms.iter().all(|(_, c)| c.is_negative());
            let mut newly = Vec::new();
            if terms.is_empty() {
                if !b.is_zero() {
                    return false;
                }
                live[i] = false;
            } else if terms.len() == 1 {
                let (v, c) = terms[0].clone();
                let x = &b / &c;
                if x.is_negative() {
                    return false;
                }
                newly.push((v, x));
                live[i] = false;
            } else if (pos && b.is_negative()) || (neg && b.is_positive()) {
                return false;
            } else if (pos || neg) && b.is_zero() {
                newly.extend(terms.iter().map(|(v, _)| (*v, Q::zero())));
                live[i] = false;
            }
            for (v, x) in newly {
                if self.fixed[v].is_none() {
                    self.fixed[v] = Some(x);
                    queue.extend(by_col[v].iter().copied().filter(|&r| live[r]));
                }
            }
        }
        let rows = std::mem::take(&mut self.rows);
        self.rows = rows.into_iter().zip(live).filter(|(_, l)| *l).map(|(r, _)| r).collect();
        for (terms, rhs) in self.rows.iter_mut() {
            let mut b = rhs.clone();
            terms.retain(|(v, c)| match &self.fixed[*v] {
                Some(x) => {
                    b -= &(c * x);
                    false
                }
                None => true,
            });
            *rhs = b;
            terms.sort_by_key(|(v, _)| *v);
        }
        true
    }

    /// Phase one on the remaining rows; artificial columns leave the basis for good.
    fn simplex(self) -> Option<Vec<Q>> {
        let System { ncols, rows, fixed } = self;
        let m = rows.len();
        let mut tab: Vec<Vec<(usize, Q)>> = Vec::with_capacity(m);
        let mut rhs: Vec<Q> = Vec::with_capacity(m);
        for (terms, b) in rows {
            if b.is_negative() {
                tab.push(terms.into_iter().map(|(v, c)| (v, -c)).collect());
                rhs.push(-b);
            } else {
                tab.push(terms);
                rhs.push(b);
            }
        }
        // Reduced costs of the sum of artificials, and its current value.
        let mut cost = vec![Q::zero(); ncols];
        let mut value: Q = rhs.iter().sum();
        let mut by_col: Vec<Vec<usize>> = vec![Vec::new(); ncols];
        for (i, row) in tab.iter().enumerate() {
            for (v, c) in row {
                cost[*v] -= c;
                by_col[*v].push(i);
            }
        }
        // `None` marks an artificial still in the basis.
        let mut basis: Vec<Option<usize>> = vec![None; m];
        let mut stalled = 0usize;
        while !value.is_zero() {
            let pc = if stalled < DEGENERATE_RUN {
                let mut best: Option<(usize, &Q)> = None;
                for (j, c) in cost.iter().enumerate() {
                    if c.is_negative() && best.is_none_or(|(_, b)| c < b) {
                        best = Some((j, c));
                    }
                }
                best.map(|b| b.0)
            } else {
                (0..ncols).find(|&j| cost[j].is_negative())
            };
            let Some(pc) = pc else { break };
            let mut best: Option<(usize, Q)> = None;
            let mut rows_at: Vec<usize> = Vec::with_capacity(by_col[pc].len());
            for &r in &by_col[pc] {
                let Some(a) = entry(&tab[r], pc) else { continue };
                if rows_at.contains(&r) {
                    continue;
                }
                rows_at.push(r);
                if a.is_positive() {
                    let ratio = &rhs[r] / a;
                    // Ties go to the lowest basic index; artificials count after every column.
                    let key = |r: usize| basis[r].unwrap_or(ncols + r);
                    let better = match &best {
                        None => true,
                        Some((br, bq)) => ratio < *bq || (ratio == *bq && key(r) < key(*br)),
                    };
                    if better {
                        best = Some((r, ratio));
                    }
                }
            }
            by_col[pc] = rows_at;
            let (pr, ratio) = best.expect("phase one is bounded below");
            stalled = if ratio.is_zero() { stalled + 1 } else { 0 };
            // Scale the pivot row.
            let inv = entry(&tab[pr], pc).expect("pivot entry").recip();
            if !inv.is_one() {
                for (_, c) in tab[pr].iter_mut() {
                    *c = &*c * &inv;
                }
                rhs[pr] = &rhs[pr] * &inv;
            }
            let prow = tab[pr].clone();
            let prhs = rhs[pr].clone();
            let targets: Vec<usize> = by_col[pc].iter().copied().filter(|&r| r != pr).collect();
            for r in targets {
                let Some(f) = entry(&tab[r], pc).cloned() else { continue };
                let (merged, added) = axpy(&tab[r], &f, &prow);
                for v in added {
                    by_col[v].push(r);
                }
                tab[r] = merged;
                rhs[r] -= &(&f * &prhs);
            }
            let f = cost[pc].clone();
            for (v, c) in &prow {
                cost[*v] -= &(&f * c);
            }
            value += &(&f * &prhs);
            basis[pr] = Some(pc);
        }
        if !value.is_zero() {
            return None;
        }
        let mut x: Vec<Q> = fixed.into_iter().map(|v| v.unwrap_or_else(Q::zero)).collect();
        for (r, b) in basis.iter().enumerate() {
            if let Some(b) = b {
                x[*b] = rhs[r].clone();
            }
        }
        Some(x)
    }
}

fn entry(row: &[(usize, Q)], col: usize) -> Option<&Q> {
    row.binary_search_by_key(&col, |(v, _)| *v).ok().map(|i| &row[i].1)
}

/// `row - f·prow` over sorted sparse rows, with the columns that became nonzero.
fn axpy(row: &[(usize, Q)], f: &Q, prow: &[(usize, Q)]) -> (Vec<(usize, Q)>, Vec<usize>) {
    let mut out = Vec::with_capacity(row.len() + prow.len());
    let mut added = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < row.len() || j < prow.len() {
        let take_row = j >= prow.len() || (i < row.len() && row[i].0 < prow[j].0);
        let take_p = i >= row.len() || (j < prow.len() && prow[j].0 < row[i].0);
        if take_row {
            out.push(row[i].clone());
            i += 1;
        } else if take_p {
            out.push((prow[j].0, -(f * &prow[j].1)));
            added.push(prow[j].0);
            j += 1;
        } else {
            let c = &row[i].1 - &(f * &prow[j].1);
            if !c.is_zero() {
                out.push((row[i].0, c));
            }
            i += 1;
            j += 1;
        }
    }
    (out, added)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    #[test]
    fn simple_equalities() {
        let mut lp = Lp::new();
        let x = lp.var();
        let y = lp.var();
        lp.constrain([(x, Q::one()), (y, Q::one())], Cmp::Eq, Q::one());
        lp.constrain([(x, Q::one()), (y, -Q::one())], Cmp::Eq, q(1, 2));
        let sol = lp.solve().unwrap();
        assert_eq!(sol, vec![q(3, 4), q(1, 4)]);
    }

    #[test]
    fn infeasible_by_sign() {
        let mut lp = Lp::new();
        let x = lp.var();
        lp.constrain([(x, Q::one())], Cmp::Eq, -Q::one());
        assert!(lp.solve().is_none());
    }

    #[test]
    fn inequalities_both_ways() {
        let mut lp = Lp::new();
        let x = lp.var();
        let y = lp.var();
        lp.constrain([(x, Q::one()), (y, Q::one())], Cmp::Le, Q::one());
        lp.constrain([(x, Q::one())], Cmp::Ge, q(2, 3));
        lp.constrain([(y, Q::one())], Cmp::Ge, q(1, 3));
        let sol = lp.solve().unwrap();
        assert!(lp.check(&sol));
        lp.constrain([(y, Q::one())], Cmp::Ge, q(1, 2));
        assert!(lp.solve().is_none());
    }

    #[test]
    fn constant_rows() {
        let mut lp = Lp::new();
        let x = lp.var();
        lp.constrain([(x, Q::zero())], Cmp::Eq, Q::zero());
        assert!(lp.feasible());
        lp.constrain(Vec::<(usize, Q)>::new(), Cmp::Ge, Q::one());
        assert!(!lp.feasible());
    }

    #[test]
    fn degenerate_system_terminates() {
        // Several redundant rows through the origin.
        let mut lp = Lp::new();
        let v: Vec<usize> = (0..4).map(|_| lp.var()).collect();
        for k in 0..4 {
            let terms: Vec<(usize, Q)> = v.iter().map(|&i| (i, Q::from_int(((i + k) % 3) as i64) - Q::one())).collect();
            lp.constrain(terms, Cmp::Eq, Q::zero());
        }
        lp.constrain(v.iter().map(|&i| (i, Q::one())), Cmp::Eq, Q::one());
        if let Some(sol) = lp.solve() {
            assert!(lp.check(&sol));
        }
    }
}
