//! Exact solver for tiny dense convex QPs by active-set enumeration.
//!
//! Minimizes `0.5 xᵀ H x + cᵀ x` subject to `A_eq x = b_eq` and `G x ≤ h`.
//! Every subset of inequality rows (up to the remaining degrees of freedom) is
//! tried as the active set; the KKT system is solved for each and the best
//! primal/dual feasible point wins. Intended for two or three variables.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseQpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Indices of inequality rows treated as active.
    pub active: Vec<usize>,
}

impl DenseQp {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    pub fn solve(&self, tol: f64) -> Result<DenseQpSolution> {
        let n = self.linear.len();
        let n_eq = self.eq_rhs.len();
        let n_in = self.ineq_rhs.len();
        if n_eq > n {
            return Err(Error::InvalidArgument("more equality constraints than variables".into()));
        }
        let mut best: Option<DenseQpSolution> = None;
        for active in subsets(n_in, n - n_eq) {
            let Some((x, mult)) = self.solve_kkt(&active) else { continue };
            let primal_ok = (0..n_in).all(|i| self.ineq_matrix.row(i).transpose().dot(&x) - self.ineq_rhs[i] <= tol);
            let dual_ok = mult.iter().all(|&m| m >= -tol);
            if !(primal_ok && dual_ok) {
                continue;
            }
            let objective = self.objective(&x);
            if best.as_ref().is_none_or(|b| objective < b.objective - 1e-15) {
                best = Some(DenseQpSolution { x, objective, active });
            }
        }
        best.ok_or_else(|| Error::InvalidConfig("quadratic program is infeasible".into()))
    }

    /// Solves the KKT system with the given inequality rows held as equalities.
    /// Returns the primal point and the active-row multipliers.
    fn solve_kkt(&self, active: &[usize]) -> Option<(DVector<f64>, Vec<f64>)> {
        let n = self.linear.len();
        let n_eq = self.eq_rhs.len();
        let m = n_eq + active.len();
        let mut kkt = DMatrix::zeros(n + m, n + m);
        let mut rhs = DVector::zeros(n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.hessian);
        for i in 0..n {
            rhs[i] = -self.linear[i];
        }
        let rows = (0..n_eq)
            .map(|i| (self.eq_matrix.row(i).clone_owned(), self.eq_rhs[i]))
            .chain(active.iter().map(|&i| (self.ineq_matrix.row(i).clone_owned(), self.ineq_rhs[i])));
        for (r, (row, b)) in rows.enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = row[j];
                kkt[(j, n + r)] = row[j];
            }
            rhs[n + r] = b;
        }
        let sol = kkt.full_piv_lu().solve(&rhs)?;
        if !sol.iter().all(|v| v.is_finite()) {
            return None;
        }
        let x = sol.rows(0, n).clone_owned();
        // Stationarity reads Hx + c + Aᵀλ = 0, matching the Lagrangian sign of G x ≤ h.
        let mult = (0..active.len()).map(|k| sol[n + n_eq + k]).collect();
        Some((x, mult))
    }
}

/// All subsets of `0..n` with at most `k` elements, in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::new();
        for s in &frontier {
            let start = s.last().map_or(0, |&l| l + 1);
            for i in start..n {
                let mut t = s.clone();
                t.push(i);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(h: [f64; 4], c: [f64; 2], eq: &[([f64; 2], f64)], ineq: &[([f64; 2], f64)]) -> DenseQp {
        let rows = |v: &[([f64; 2], f64)]| {
            (
                DMatrix::from_row_iterator(v.len(), 2, v.iter().flat_map(|(a, _)| a.iter().copied())),
                DVector::from_iterator(v.len(), v.iter().map(|(_, b)| *b)),
            )
        };
        let (eq_matrix, eq_rhs) = rows(eq);
        let (ineq_matrix, ineq_rhs) = rows(ineq);
        DenseQp { hessian: DMatrix::from_row_slice(2, 2, &h), linear: DVector::from_row_slice(&c), eq_matrix, eq_rhs, ineq_matrix, ineq_rhs }
    }

    #[test]
    fn subset_enumeration() {
        assert_eq!(subsets(3, 2).len(), 1 + 3 + 3);
        assert_eq!(subsets(4, 1).len(), 5);
    }

    #[test]
    fn unconstrained_minimum() {
        let p = qp([2.0, 0.0, 0.0, 2.0], [-2.0, -4.0], &[], &[]);
        let s = p.solve(1e-12).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-14 && (s.x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn box_clamps_minimum() {
        // min (x-3)^2 + (y+1)^2 on [0,1]^2.
        let ineq = [([1.0, 0.0], 1.0), ([-1.0, 0.0], 0.0), ([0.0, 1.0], 1.0), ([0.0, -1.0], 0.0)];
        let p = qp([2.0, 0.0, 0.0, 2.0], [-6.0, 2.0], &[], &ineq);
        let s = p.solve(1e-12).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-14 && s.x[1].abs() < 1e-14);
        assert_eq!(s.active, vec![0, 3]);
    }

    #[test]
    fn equality_constraint() {
        // min x^2 + y^2 s.t. x + y = 2.
        let p = qp([2.0, 0.0, 0.0, 2.0], [0.0, 0.0], &[([1.0, 1.0], 2.0)], &[]);
        let s = p.solve(1e-12).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-14 && (s.x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn infeasible_is_reported() {
        let p = qp([2.0, 0.0, 0.0, 2.0], [0.0, 0.0], &[], &[([1.0, 0.0], -1.0), ([-1.0, 0.0], -1.0)]);
        assert!(p.solve(1e-12).is_err());
    }
}
