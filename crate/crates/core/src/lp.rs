//! Dense small-scale LP core.
//!
//! Minimizes `c'x` subject to equality rows, `>=` rows and per-variable
//! bounds. Solutions carry exact row duals (for a `>=` row the dual is
//! nonnegative and equals the derivative of the optimal value w.r.t. the
//! right-hand side) and reduced costs per variable.

use crate::error::LpError;
use crate::linalg::{dot, Mat};
use crate::num::Scalar;
use crate::simplex;

/// Certified tolerance on primal residuals, complementary slackness and the
/// relative duality gap of an `Optimal` solution.
pub const CERTIFIED_TOL: f64 = 1e-7;
/// Internal feasibility tolerance of the pivoting core (f64 instantiation).
pub const INTERNAL_FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpProblem<S> {
    /// Minimization objective, one coefficient per variable.
    pub objective: Vec<S>,
    pub eq_rows: (Mat<S>, Vec<S>),
    pub geq_rows: (Mat<S>, Vec<S>),
    /// Per-variable `[lo, hi]`; `None` is unbounded on that side.
    pub var_bounds: Vec<(Option<S>, Option<S>)>,
}

impl<S: Scalar> LpProblem<S> {
    pub fn new(n: usize) -> Self {
        LpProblem {
            objective: vec![S::zero(); n],
            eq_rows: (Mat::zeros(0, n), Vec::new()),
            geq_rows: (Mat::zeros(0, n), Vec::new()),
            var_bounds: vec![(None, None); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.eq_rows.1.len() + self.geq_rows.1.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.var_bounds.len() != n {
            return Err(LpError::BadProblem("bounds length != variable count".into()));
        }
        for (mat, rhs, name) in [
            (&self.eq_rows.0, &self.eq_rows.1, "eq"),
            (&self.geq_rows.0, &self.geq_rows.1, "geq"),
        ] {
            if mat.nrows() != rhs.len() {
                return Err(LpError::BadProblem(format!("{name} rhs length mismatch")));
            }
            if mat.nrows() > 0 && mat.ncols() != n {
                return Err(LpError::BadProblem(format!("{name} column count mismatch")));
            }
        }
        let finite = |v: &S| {
            let f = v.to_f64();
            !(f.is_nan() || f.is_infinite())
        };
        if !self.objective.iter().all(finite) {
            return Err(LpError::BadProblem("non-finite objective entry".into()));
        }
        for (mat, rhs) in [(&self.eq_rows.0, &self.eq_rows.1), (&self.geq_rows.0, &self.geq_rows.1)] {
            for i in 0..mat.nrows() {
                if !mat.row(i).iter().all(finite) || !finite(&rhs[i]) {
                    return Err(LpError::BadProblem("non-finite row entry".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution<S> {
    pub status: LpStatus,
    pub x: Vec<S>,
    pub objective_value: S,
    /// One dual per structural row, equality rows first, then `>=` rows.
    pub duals: Vec<S>,
    /// Reduced cost per variable.
    pub reduced_costs: Vec<S>,
    pub iterations: usize,
}

impl<S: Scalar> LpSolution<S> {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Solve with a bounded revised simplex (Bland fallback, deterministic
/// tie-breaking). Retries once on a tiny deterministic rhs perturbation
/// before reporting `NumericalFailure`.
pub fn solve_lp<S: Scalar>(p: &LpProblem<S>) -> Result<LpSolution<S>, LpError> {
    p.validate()?;
    match simplex::solve(p) {
        Ok(sol) => match certify(p, &sol) {
            Ok(()) => Ok(sol),
            Err(_) if !S::is_exact() => retry_perturbed(p),
            Err(e) => Err(e),
        },
        Err(_) if !S::is_exact() => retry_perturbed(p),
        Err(e) => Err(e),
    }
}

fn retry_perturbed<S: Scalar>(p: &LpProblem<S>) -> Result<LpSolution<S>, LpError> {
    let mut q = p.clone();
    // deterministic bounded perturbation of the rhs
    let mut state: u64 = 0x9e3779b97f4a7c15;
    let mut bump = |v: &mut S| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let u = ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5;
        let mag = 1e-10 * (1.0 + v.to_f64().abs());
        *v = v.clone() + S::from_f64(u * mag);
    };
    for v in q.eq_rows.1.iter_mut() {
        bump(v);
    }
    for v in q.geq_rows.1.iter_mut() {
        bump(v);
    }
    let sol = simplex::solve(&q)?;
    certify(&q, &sol)?;
    Ok(sol)
}

/// Directional derivative of the optimal value w.r.t. a rhs perturbation:
/// `<duals, rhs_direction>`, with the direction indexed like `duals`.
pub fn parametric_dual<S: Scalar>(
    p: &LpProblem<S>,
    sol: &LpSolution<S>,
    rhs_direction: &[S],
) -> Result<S, LpError> {
    if sol.status != LpStatus::Optimal {
        return Err(LpError::StatusError(sol.status));
    }
    if rhs_direction.len() != p.num_rows() {
        return Err(LpError::BadProblem("rhs direction length != row count".into()));
    }
    Ok(dot(&sol.duals, rhs_direction))
}

/// Convenience builder used across the crate.
pub struct LpBuilder<S> {
    p: LpProblem<S>,
    eq: Vec<(Vec<S>, S)>,
    geq: Vec<(Vec<S>, S)>,
}

impl<S: Scalar> LpBuilder<S> {
    pub fn new(n: usize) -> Self {
        LpBuilder { p: LpProblem::new(n), eq: Vec::new(), geq: Vec::new() }
    }

    pub fn objective(mut self, c: Vec<S>) -> Self {
        self.p.objective = c;
        self
    }

    pub fn bound(mut self, j: usize, lo: Option<S>, hi: Option<S>) -> Self {
        self.p.var_bounds[j] = (lo, hi);
        self
    }

    pub fn eq(mut self, row: Vec<S>, rhs: S) -> Self {
        self.eq.push((row, rhs));
        self
    }

    pub fn geq(mut self, row: Vec<S>, rhs: S) -> Self {
        self.geq.push((row, rhs));
        self
    }

    pub fn build(self) -> LpProblem<S> {
        let n = self.p.num_vars();
        let mut p = self.p;
        let (rows, rhs): (Vec<_>, Vec<_>) = self.eq.into_iter().unzip();
        p.eq_rows = (pack(rows, n), rhs);
        let (rows, rhs): (Vec<_>, Vec<_>) = self.geq.into_iter().unzip();
        p.geq_rows = (pack(rows, n), rhs);
        p
    }
}

fn pack<S: Scalar>(rows: Vec<Vec<S>>, n: usize) -> Mat<S> {
    if rows.is_empty() {
        Mat::zeros(0, n)
    } else {
        Mat::from_rows(rows)
    }
}

/// Check the optimality certificate: primal residuals, bound violations,
/// complementary slackness and the duality gap.
fn certify<S: Scalar>(p: &LpProblem<S>, sol: &LpSolution<S>) -> Result<(), LpError> {
    if sol.status != LpStatus::Optimal {
        return Ok(());
    }
    let x: Vec<f64> = sol.x.iter().map(|v| v.to_f64()).collect();
    let obj = sol.objective_value.to_f64();
    let tol = CERTIFIED_TOL;

    let (m_eq, m_geq) = (p.eq_rows.1.len(), p.geq_rows.1.len());
    let mut dual_obj = 0.0;
    for i in 0..m_eq {
        let row: Vec<f64> = p.eq_rows.0.row(i).iter().map(|v| v.to_f64()).collect();
        let b = p.eq_rows.1[i].to_f64();
        let ax: f64 = row.iter().zip(&x).map(|(a, v)| a * v).sum();
        if (ax - b).abs() > tol * (1.0 + b.abs()) {
            return Err(LpError::NumericalFailure(format!("eq residual {}", ax - b)));
        }
        dual_obj += sol.duals[i].to_f64() * b;
    }
    for i in 0..m_geq {
        let row: Vec<f64> = p.geq_rows.0.row(i).iter().map(|v| v.to_f64()).collect();
        let b = p.geq_rows.1[i].to_f64();
        let ax: f64 = row.iter().zip(&x).map(|(a, v)| a * v).sum();
        let y = sol.duals[m_eq + i].to_f64();
        if ax - b < -tol * (1.0 + b.abs()) {
            return Err(LpError::NumericalFailure(format!("geq residual {}", ax - b)));
        }
        if y < -tol * (1.0 + obj.abs()) {
            return Err(LpError::NumericalFailure(format!("negative geq dual {y}")));
        }
        // complementary slackness
        if y.abs() * (ax - b).abs() > tol * (1.0 + obj.abs()) * (1.0 + b.abs()) {
            return Err(LpError::NumericalFailure("complementary slackness".into()));
        }
        dual_obj += y * b;
    }
    // bound feasibility, bound complementarity, and the exact identity
    // c'x = y'b + d'x  (up to geq-row slack complementarity, checked above)
    for (j, (lo, hi)) in p.var_bounds.iter().enumerate() {
        let v = x[j];
        let d = sol.reduced_costs[j].to_f64();
        let dtol = tol * (1.0 + obj.abs());
        if let Some(l) = lo {
            if v < l.to_f64() - INTERNAL_FEAS_TOL * (1.0 + l.to_f64().abs()) - tol {
                return Err(LpError::NumericalFailure(format!("lower bound violated on {j}")));
            }
        }
        if let Some(h) = hi {
            if v > h.to_f64() + INTERNAL_FEAS_TOL * (1.0 + h.to_f64().abs()) + tol {
                return Err(LpError::NumericalFailure(format!("upper bound violated on {j}")));
            }
        }
        if d > dtol {
            match lo {
                Some(l) if (v - l.to_f64()).abs() * d <= dtol * (1.0 + v.abs()) => {}
                _ => return Err(LpError::NumericalFailure(format!("bound complementarity on {j}"))),
            }
        } else if d < -dtol {
            match hi {
                Some(h) if (h.to_f64() - v).abs() * d.abs() <= dtol * (1.0 + v.abs()) => {}
                _ => return Err(LpError::NumericalFailure(format!("bound complementarity on {j}"))),
            }
        }
        dual_obj += d * v;
    }
    if (obj - dual_obj).abs() > tol * (1.0 + obj.abs()) {
        return Err(LpError::NumericalFailure(format!(
            "duality gap {} (primal {obj}, dual {dual_obj})",
            obj - dual_obj
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_variable_geq() {
        // min x  s.t. x >= 1, x in [0, 10]
        let p = LpBuilder::new(1)
            .objective(vec![1.0])
            .bound(0, Some(0.0), Some(10.0))
            .geq(vec![1.0], 1.0)
            .build();
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-9);
        assert!((s.objective_value - 1.0).abs() < 1e-9);
        assert!((s.duals[0] - 1.0).abs() < 1e-9, "dual {}", s.duals[0]);
    }

    #[test]
    fn contradictory_rows_infeasible() {
        // x >= 2 and -x >= -1 (x <= 1)
        let p = LpBuilder::new(1)
            .objective(vec![1.0])
            .bound(0, Some(0.0), Some(10.0))
            .geq(vec![1.0], 2.0)
            .geq(vec![-1.0], -1.0)
            .build();
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn two_variable_vertex_and_dual() {
        // min -x - y  s.t. -x - y >= -1, x,y >= 0
        let p = LpBuilder::new(2)
            .objective(vec![-1.0, -1.0])
            .bound(0, Some(0.0), None)
            .bound(1, Some(0.0), None)
            .geq(vec![-1.0, -1.0], -1.0)
            .build();
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value + 1.0).abs() < 1e-9);
        assert!((s.x[0] + s.x[1] - 1.0).abs() < 1e-9);
        assert!((s.duals[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded_detected() {
        let p = LpBuilder::new(1).objective(vec![-1.0]).bound(0, Some(0.0), None).build();
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn parametric_dual_chain_subproblem() {
        // chain stage LP at x_prev = 1: min x s.t. x >= 0.5 * x_prev, x in [0,1]
        let p = LpBuilder::new(1)
            .objective(vec![1.0])
            .bound(0, Some(0.0), Some(1.0))
            .geq(vec![1.0], 0.5)
            .build();
        let s = solve_lp(&p).unwrap();
        // value function is 0.5 * x_prev near x_prev = 1; rhs moves at rate 0.5
        let d = parametric_dual(&p, &s, &[0.5]).unwrap();
        assert!((d - 0.5).abs() < 1e-9);
        assert_eq!(parametric_dual(&p, &s, &[0.0]).unwrap(), 0.0);
        let twice = parametric_dual(&p, &s, &[1.0]).unwrap();
        assert!((twice - 2.0 * d).abs() < 1e-12);
    }

    #[test]
    fn parametric_dual_requires_optimal() {
        let p = LpBuilder::new(1)
            .objective(vec![1.0])
            .bound(0, Some(0.0), Some(1.0))
            .geq(vec![1.0], 2.0)
            .build();
        let s = solve_lp(&p).unwrap();
        assert!(matches!(parametric_dual(&p, &s, &[1.0]), Err(LpError::StatusError(_))));
    }

    #[test]
    fn equality_rows_and_free_variables() {
        // min x + 2y  s.t. x + y = 3, y free, x in [0, 2]
        let p = LpBuilder::new(2)
            .objective(vec![1.0, 2.0])
            .bound(0, Some(0.0), Some(2.0))
            .bound(1, None, None)
            .eq(vec![1.0, 1.0], 3.0)
            .build();
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        // pushing x to its upper bound leaves y = 1: obj = 2 + 2 = 4
        assert!((s.x[0] - 2.0).abs() < 1e-9);
        assert!((s.x[1] - 1.0).abs() < 1e-9);
        assert!((s.objective_value - 4.0).abs() < 1e-9);
        // equality dual: d(value)/d(rhs) = 2 (y absorbs changes)
        assert!((s.duals[0] - 2.0).abs() < 1e-9);
    }
}
