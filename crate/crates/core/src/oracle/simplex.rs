//! Dense two-phase primal simplex for `min c·x  s.t.  A x = b, x >= 0`.
//!
//! Bland's rule is used for both the entering and the leaving variable, so
//! the method terminates on degenerate problems. Artificial columns stay in
//! the tableau after phase one; they hold `B⁻¹` and give the dual prices.

use crate::scalar::Scalar;

const PIVOT_TOLERANCE: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome<S> {
    Optimal(LpSolution<S>),
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<S> {
    pub x: Vec<S>,
    pub value: S,
    /// One price per equality row: `y` with `yᵀA <= c` and `yᵀb = value`.
    pub duals: Vec<S>,
    pub pivots: usize,
}

struct Tableau<S> {
    rows: Vec<Vec<S>>,
    /// Reduced costs; the last entry is minus the objective value.
    cost: Vec<S>,
    basis: Vec<usize>,
    width: usize,
    pivots: usize,
}

impl<S: Scalar> Tableau<S> {
    fn rhs(&self, i: usize) -> &S {
        &self.rows[i][self.width]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col].clone();
        for v in self.rows[row].iter_mut() {
            if !v.is_zero() {
                *v /= p.clone();
            }
        }
        let nonzero: Vec<usize> = (0..=self.width)
            .filter(|&j| !self.rows[row][j].is_zero())
            .collect();
        let (before, rest) = self.rows.split_at_mut(row);
        let (pivot_row, after) = rest.split_first_mut().unwrap();
        for other in before.iter_mut().chain(after.iter_mut()) {
            eliminate(other, pivot_row, col, &nonzero);
        }
        eliminate(&mut self.cost, pivot_row, col, &nonzero);
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Bland's rule over columns `0..limit`; `None` when optimal.
    fn entering(&self, limit: usize) -> Option<usize> {
        let tol = S::tol(PIVOT_TOLERANCE);
        (0..limit).find(|&j| self.cost[j] < -tol.clone())
    }

    /// Minimum-ratio row, ties broken by smallest basic index.
    fn leaving(&self, col: usize) -> Option<usize> {
        let tol = S::tol(PIVOT_TOLERANCE);
        let mut best: Option<(usize, S)> = None;
        for i in 0..self.rows.len() {
            let a = &self.rows[i][col];
            if *a > tol {
                let ratio = self.rhs(i).clone() / a.clone();
                let better = match &best {
                    None => true,
                    Some((bi, br)) => {
                        ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi])
                    }
                };
                if better {
                    best = Some((i, ratio));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    fn run(&mut self, limit: usize) -> bool {
        while let Some(col) = self.entering(limit) {
            match self.leaving(col) {
                Some(row) => self.pivot(row, col),
                None => return false,
            }
        }
        true
    }
}

fn eliminate<S: Scalar>(target: &mut [S], pivot_row: &[S], col: usize, nonzero: &[usize]) {
    let factor = target[col].clone();
    if factor.is_zero() {
        return;
    }
    for &j in nonzero {
        target[j] -= factor.clone() * pivot_row[j].clone();
    }
    target[col] = S::zero();
}

/// Solves `min c·x  s.t.  A x = b, x >= 0` with `A` given row-major.
pub fn minimize<S: Scalar>(a: &[Vec<S>], b: &[S], c: &[S]) -> LpOutcome<S> {
    let m = a.len();
    let n = c.len();
    let width = n + m;

    let signs: Vec<bool> = b.iter().map(|v| *v < S::zero()).collect();
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![S::zero(); width + 1];
        for j in 0..n {
            row[j] = if signs[i] {
                -a[i][j].clone()
            } else {
                a[i][j].clone()
            };
        }
        row[n + i] = S::one();
        row[width] = b[i].abs();
        rows.push(row);
    }

    // phase one: minimize the sum of artificials
    let mut cost = vec![S::zero(); width + 1];
    for row in &rows {
        for j in 0..n {
            cost[j] -= row[j].clone();
        }
        cost[width] -= row[width].clone();
    }
    let mut tab = Tableau {
        rows,
        cost,
        basis: (n..n + m).collect(),
        width,
        pivots: 0,
    };
    tab.run(n);
    if -tab.cost[width].clone() > S::tol(1e-9) {
        return LpOutcome::Infeasible;
    }

    // drive artificials at zero level out of the basis where possible
    let tol = S::tol(PIVOT_TOLERANCE);
    for i in 0..m {
        if tab.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tab.rows[i][j].abs() > tol) {
                tab.pivot(i, j);
            }
        }
    }

    // phase two
    let mut cost = vec![S::zero(); width + 1];
    cost[..n].clone_from_slice(c);
    for i in 0..m {
        let bi = tab.basis[i];
        if bi < n && !c[bi].is_zero() {
            let cb = c[bi].clone();
            for (j, v) in cost.iter_mut().enumerate() {
                *v -= cb.clone() * tab.rows[i][j].clone();
            }
        }
    }
    tab.cost = cost;
    if !tab.run(n) {
        return LpOutcome::Unbounded;
    }

    let mut x = vec![S::zero(); n];
    for i in 0..m {
        if tab.basis[i] < n {
            x[tab.basis[i]] = tab.rhs(i).clone();
        }
    }
    let value = x
        .iter()
        .zip(c)
        .map(|(xi, ci)| xi.clone() * ci.clone())
        .sum();
    // reduced cost of artificial k is -y'_k; undo the row sign flips
    let duals = (0..m)
        .map(|k| {
            let y = -tab.cost[n + k].clone();
            if signs[k] {
                -y
            } else {
                y
            }
        })
        .collect();
    LpOutcome::Optimal(LpSolution {
        x,
        value,
        duals,
        pivots: tab.pivots,
    })
}
