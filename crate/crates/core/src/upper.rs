//! Upper-bound model: an initial constant bound plus per-scenario point
//! sets defining a bounded-slope interpolation.
//!
//! The per-scenario value at a query point is the interpolation program
//! `max mu + <rho, x>` over `mu + <rho, x_j> <= v_j` with a slope cap.
//! We solve its minimization dual: convex weights over the stored points
//! plus a sup-norm transport term, which also embeds linearly inside
//! stage LPs. The slope cap is polyhedral: `|rho|_1 <= sqrt(n) * M0bar`,
//! which contains the Euclidean ball of radius `M0bar`, so the Lipschitz
//! feasibility certificate that makes the interpolation a valid upper
//! bound stays feasible and the bound is only loosened.

use crate::error::LpError;
use crate::assemble::LpAssembler;
use crate::lp::{solve_lp, LpBuilder, LpStatus};
use crate::model::StationaryInstance;
use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct UpperModel {
    /// Initial constant upper bound on the cost-to-go function.
    pub vbar0: f64,
    /// Slope cap (Euclidean radius before the polyhedral inflation).
    pub m0bar: f64,
    /// Stored (point, value) pairs per sampled scenario (index 0 holds
    /// scenario 1).
    pub points: Vec<Vec<(Vec<f64>, f64)>>,
    n: usize,
}

impl UpperModel {
    pub fn new(n: usize, num_scenarios: usize, vbar0: f64, m0bar: f64) -> Self {
        UpperModel { vbar0, m0bar, points: vec![Vec::new(); num_scenarios], n }
    }

    /// Default slope cap: dominates the cost-to-go Lipschitz estimate.
    pub fn default_slope_cap(m_h: f64, lambda: f64) -> f64 {
        2.0 * m_h / (1.0 - lambda)
    }

    /// Crude initial bound when the per-scenario maxima are unavailable.
    pub fn crude_bound(m_h: f64, d: f64, v0: f64) -> f64 {
        m_h * d + v0
    }

    /// Transport coefficient of the polyhedral slope cap.
    fn transport(&self) -> f64 {
        (self.n as f64).sqrt() * self.m0bar
    }

    pub fn num_points(&self) -> usize {
        self.points.iter().map(Vec::len).sum()
    }

    pub fn add_upper_point(&mut self, scenario: usize, x: &[f64], value: f64) {
        assert!(
            scenario >= 1 && scenario <= self.points.len(),
            "upper points are stored for sampled scenarios 1..=N"
        );
        assert!(value.is_finite());
        self.points[scenario - 1].push((x.to_vec(), value));
    }

    /// Per-scenario interpolation value at a fixed point.
    fn scenario_value(&self, scenario_idx: usize, x: &[f64]) -> Result<f64, LpError> {
        let pts = &self.points[scenario_idx];
        if pts.is_empty() {
            return Ok(f64::INFINITY);
        }
        let k = pts.len();
        // vars: sigma_1..sigma_k, t
        let mut b = LpBuilder::new(k + 1);
        let mut obj = vec![0.0; k + 1];
        for (j, (_, v)) in pts.iter().enumerate() {
            obj[j] = *v;
        }
        obj[k] = self.transport();
        b = b.objective(obj);
        for j in 0..k {
            b = b.bound(j, Some(0.0), Some(1.0));
        }
        b = b.bound(k, Some(0.0), None);
        let mut ones = vec![1.0; k];
        ones.push(0.0);
        b = b.eq(ones, 1.0);
        for d in 0..self.n {
            // t - sum_j sigma_j x_j[d] >= -x[d]   and   t + sum_j sigma_j x_j[d] >= x[d]
            let mut row1 = vec![0.0; k + 1];
            let mut row2 = vec![0.0; k + 1];
            for (j, (pt, _)) in pts.iter().enumerate() {
                row1[j] = -pt[d];
                row2[j] = pt[d];
            }
            row1[k] = 1.0;
            row2[k] = 1.0;
            b = b.geq(row1, -x[d]);
            b = b.geq(row2, x[d]);
        }
        let sol = solve_lp(&b.build())?;
        if sol.status != LpStatus::Optimal {
            return Err(LpError::NumericalFailure("interpolation LP not optimal".into()));
        }
        Ok(sol.objective_value)
    }

    /// Model value at x: the scenario average capped by the initial bound.
    pub fn evaluate_upper(&self, x: &[f64]) -> Result<f64, LpError> {
        let mut total = 0.0;
        for idx in 0..self.points.len() {
            let v = self.scenario_value(idx, x)?;
            if !v.is_finite() {
                return Ok(self.vbar0);
            }
            total += v;
        }
        let avg = total / self.points.len() as f64;
        Ok(avg.min(self.vbar0))
    }

    /// Append `lambda * Vbar(x)` to a partially assembled LP in the
    /// convex-combination form: per scenario, weights over the stored
    /// points plus a sup-norm transport variable. With any empty point set
    /// the model is still the constant bound, folded into the offset.
    pub fn append_embedded(&self, asm: &mut LpAssembler, lambda: f64, x_cols: &[usize]) {
        debug_assert_eq!(x_cols.len(), self.n);
        if self.points.iter().any(Vec::is_empty) {
            asm.offset += lambda * self.vbar0;
            return;
        }
        let inv_n = 1.0 / self.points.len() as f64;
        for pts in &self.points {
            let sigma: Vec<usize> = pts
                .iter()
                .map(|(_, v)| asm.add_var(Some(0.0), Some(1.0), lambda * inv_n * v))
                .collect();
            let t = asm.add_var(Some(0.0), None, lambda * inv_n * self.transport());
            asm.add_eq(sigma.iter().map(|c| (*c, 1.0)).collect(), 1.0);
            for d in 0..self.n {
                // t >= +-(x_d - sum_j sigma_j x_j[d])
                let mut row1: Vec<(usize, f64)> = vec![(t, 1.0), (x_cols[d], -1.0)];
                let mut row2: Vec<(usize, f64)> = vec![(t, 1.0), (x_cols[d], 1.0)];
                for (col, (pt, _)) in sigma.iter().zip(pts) {
                    row1.push((*col, pt[d]));
                    row2.push((*col, -pt[d]));
                }
                asm.add_geq(row1, 0.0);
                asm.add_geq(row2, 0.0);
            }
        }
    }

    /// Point sets as CSV: `scenario,value,x...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,value");
        for j in 0..self.n {
            let _ = write!(out, ",x{j}");
        }
        out.push('\n');
        for (idx, pts) in self.points.iter().enumerate() {
            for (x, v) in pts {
                let _ = write!(out, "{},{v}", idx + 1);
                for c in x {
                    let _ = write!(out, ",{c}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Initial constant bound: `(1/(N(1-lambda))) * sum_i max over the box of
/// h(x, c_i)`, each maximum solved piecewise in closed form.
pub fn init_upper(inst: &StationaryInstance, m0bar: f64) -> UpperModel {
    assert!(m0bar > 0.0, "slope cap must be positive");
    let n_scen = inst.num_scenarios();
    let mut total = 0.0;
    for sc in &inst.scenarios {
        total += crate::cuts::max_cost_over_box(&sc.cost, &inst.lower, &inst.upper);
    }
    let vbar0 = total / (n_scen as f64 * (1.0 - inst.lambda));
    UpperModel::new(inst.n, n_scen, vbar0, m0bar)
}
