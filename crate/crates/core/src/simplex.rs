//! Dense two-phase simplex for small problems
//! `min cᵀx  s.t.  Ax ≤ b, x ≥ 0`, with Bland's rule against cycling.

const PIVOT_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows + 1` rows of `cols + 1` entries; the last row is the objective,
    /// the last column the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.at(r, c);
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f != 0.0 {
                for j in 0..w {
                    self.t[i * w + j] -= f * self.t[r * w + j];
                }
                self.t[i * w + c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Installs `cost` (length `cols`) as the objective row, reduced
    /// against the current basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        let base = self.rows * w;
        for j in 0..w {
            self.t[base + j] = if j < self.cols { cost[j] } else { 0.0 };
        }
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    self.t[base + j] -= cb * self.t[i * w + j];
                }
            }
        }
    }

    /// Runs simplex iterations on the current objective over columns
    /// `0..allowed`. Returns false when unbounded.
    fn optimize(&mut self, allowed: usize) -> bool {
        loop {
            let obj = self.rows;
            let Some(enter) = (0..allowed).find(|&j| self.at(obj, j) < -PIVOT_EPS) else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, enter);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14 || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return false,
                Some((r, _)) => self.pivot(r, enter),
            }
        }
    }
}

/// Solves `min cᵀx` subject to `Ax ≤ b`, `x ≥ 0`; `a` holds one row per constraint.
pub fn solve_lp(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let (m, n) = (a.len(), c.len());
    assert_eq!(b.len(), m, "constraint count mismatch");
    let negative: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let k = negative.len();
    // columns: x (n), slacks (m), artificials (k)
    let cols = n + m + k;
    let w = cols + 1;
    let mut t = vec![0.0; (m + 1) * w];
    let mut basis = vec![0; m];
    let mut art = 0;
    for i in 0..m {
        assert_eq!(a[i].len(), n, "row {i} has the wrong width");
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * w + j] = sign * a[i][j];
        }
        t[i * w + n + i] = sign;
        t[i * w + cols] = sign * b[i];
        if b[i] < 0.0 {
            t[i * w + n + m + art] = 1.0;
            basis[i] = n + m + art;
            art += 1;
        } else {
            basis[i] = n + i;
        }
    }
    let mut tab = Tableau { rows: m, cols, t, basis };

    if k > 0 {
        let mut phase1 = vec![0.0; cols];
        phase1[n + m..].iter_mut().for_each(|v| *v = 1.0);
        tab.set_objective(&phase1);
        tab.optimize(cols);
        let infeasibility: f64 = (0..m).filter(|&i| tab.basis[i] >= n + m).map(|i| tab.rhs(i)).sum();
        if infeasibility > FEAS_EPS {
            return LpOutcome::Infeasible;
        }
        // drive zero-level artificials out of the basis where possible
        for i in 0..m {
            if tab.basis[i] >= n + m {
                if let Some(j) = (0..n + m).find(|&j| tab.at(i, j).abs() > PIVOT_EPS) {
                    tab.pivot(i, j);
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    tab.set_objective(&cost);
    if !tab.optimize(n + m) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if tab.basis[i] < n {
            x[tab.basis[i]] = tab.rhs(i).max(0.0);
        }
    }
    let objective = c.iter().zip(&x).map(|(c, x)| c * x).sum();
    LpOutcome::Optimal { x, objective }
}
