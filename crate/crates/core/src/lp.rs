//! Dense two-phase simplex for the small linear programs that arise from
//! polyhedral pieces: maximize `c.x` subject to `A x <= b` with free `x`.
//!
//! Problems here have a handful of variables and a few dozen rows, so the
//! tableau is recomputed naively and Bland's rule keeps pivoting finite.

use nalgebra::{DMatrix, DVector};

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-10;
const PHASE1_EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 20_000;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: DVector<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f != 0.0 {
                for (v, pv) in self.rows[i].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.rhs[i] -= f * pivot_rhs;
                self.rows[i][c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations for `cost` over the columns allowed by `usable`.
    /// Returns `false` if the objective is unbounded.
    fn optimize(&mut self, cost: &[f64], usable: &dyn Fn(usize) -> bool, active_rows: &[bool]) -> bool {
        let ncols = cost.len();
        for _ in 0..MAX_PIVOTS {
            // reduced costs
            let mut entering = None;
            for j in 0..ncols {
                if !usable(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut r = cost[j];
                for (i, &b) in self.basis.iter().enumerate() {
                    if active_rows[i] {
                        r -= cost[b] * self.rows[i][j];
                    }
                }
                if r > COST_EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                if !active_rows[i] {
                    continue;
                }
                let a = self.rows[i][j];
                if a > PIVOT_EPS {
                    let ratio = self.rhs[i].max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - 1e-14 || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((i, _)) => self.pivot(i, j),
                None => return false,
            }
        }
        log::warn!("simplex hit the pivot limit; returning current basis");
        true
    }
}

/// Maximizes `c.x` subject to `a x <= b`, `x` free.
pub(crate) fn maximize(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> LpOutcome {
    let n = a.ncols();
    debug_assert_eq!(c.len(), n);
    debug_assert_eq!(a.nrows(), b.len());

    // normalize rows, resolve constant rows up front
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(a.nrows());
    for i in 0..a.nrows() {
        let norm = a.row(i).norm();
        if norm <= 1e-13 {
            if b[i] < -PHASE1_EPS {
                return LpOutcome::Infeasible;
            }
            continue;
        }
        rows.push((a.row(i).iter().map(|v| v / norm).collect(), b[i] / norm));
    }
    if n == 0 {
        return LpOutcome::Optimal { x: DVector::zeros(0), value: 0.0 };
    }
    let m = rows.len();
    if m == 0 {
        return if c.iter().all(|v| v.abs() <= COST_EPS) {
            LpOutcome::Optimal { x: DVector::zeros(n), value: 0.0 }
        } else {
            LpOutcome::Unbounded
        };
    }

    // columns: p (n) | q (n) | slack (m) | artificial (na)
    let negative: Vec<usize> = (0..m).filter(|&i| rows[i].1 < 0.0).collect();
    let na = negative.len();
    let ncols = 2 * n + m + na;
    let art0 = 2 * n + m;
    let mut t = Tableau { rows: vec![vec![0.0; ncols]; m], rhs: vec![0.0; m], basis: vec![0; m] };
    let mut art_index = 0;
    for (i, (ai, bi)) in rows.iter().enumerate() {
        let sign = if *bi < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t.rows[i][j] = sign * ai[j];
            t.rows[i][n + j] = -sign * ai[j];
        }
        t.rows[i][2 * n + i] = sign;
        t.rhs[i] = sign * bi;
        if sign < 0.0 {
            t.rows[i][art0 + art_index] = 1.0;
            t.basis[i] = art0 + art_index;
            art_index += 1;
        } else {
            t.basis[i] = 2 * n + i;
        }
    }
    let mut active = vec![true; m];

    if na > 0 {
        let mut cost1 = vec![0.0; ncols];
        for v in cost1.iter_mut().skip(art0) {
            *v = -1.0;
        }
        t.optimize(&cost1, &|_| true, &active);
        let infeas: f64 = (0..m).filter(|&i| t.basis[i] >= art0).map(|i| t.rhs[i]).sum();
        if infeas > PHASE1_EPS {
            return LpOutcome::Infeasible;
        }
        // drive remaining artificials out of the basis
        for i in 0..m {
            if t.basis[i] >= art0 {
                let col = (0..art0).find(|&j| t.rows[i][j].abs() > 1e-9 && !t.basis.contains(&j));
                match col {
                    Some(j) => t.pivot(i, j),
                    None => active[i] = false,
                }
            }
        }
    }

    let mut cost2 = vec![0.0; ncols];
    for j in 0..n {
        cost2[j] = c[j];
        cost2[n + j] = -c[j];
    }
    if !t.optimize(&cost2, &|j| j < art0, &active) {
        return LpOutcome::Unbounded;
    }
    let mut x = DVector::zeros(n);
    for (i, &bcol) in t.basis.iter().enumerate() {
        if !active[i] {
            continue;
        }
        if bcol < n {
            x[bcol] += t.rhs[i];
        } else if bcol < 2 * n {
            x[bcol - n] -= t.rhs[i];
        }
    }
    let value = c.dot(&x);
    LpOutcome::Optimal { x, value }
}

/// Any point of `{x : a x <= b}`.
pub(crate) fn feasible_point(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    match maximize(&DVector::zeros(a.ncols()), a, b) {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    }
}

/// Largest ball radius (capped at `cap`) inscribed in `{x : a x <= b}`,
/// together with its center. A negative radius means the set is empty.
pub(crate) fn chebyshev_center(a: &DMatrix<f64>, b: &DVector<f64>, cap: f64) -> (DVector<f64>, f64) {
    let n = a.ncols();
    let m = a.nrows();
    let mut ext = DMatrix::zeros(m + 1, n + 1);
    let mut rhs = DVector::zeros(m + 1);
    for i in 0..m {
        let norm = a.row(i).norm();
        for j in 0..n {
            ext[(i, j)] = a[(i, j)];
        }
        ext[(i, n)] = norm;
        rhs[i] = b[i];
    }
    ext[(m, n)] = 1.0;
    rhs[m] = cap;
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    match maximize(&c, &ext, &rhs) {
        LpOutcome::Optimal { x, value } => (x.rows(0, n).into_owned(), value),
        // t is free and capped; other outcomes only arise numerically
        _ => (DVector::zeros(n), f64::NEG_INFINITY),
    }
}
