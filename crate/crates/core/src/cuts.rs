//! Lower cutting-plane model: a constant initial bound plus an append-only
//! list of averaged affine cuts.

use crate::error::{LpError, ModelError};
use crate::linalg::{dot, Mat};
use crate::model::{Mat64, StationaryInstance};
use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct Cut {
    pub intercept: f64,
    pub gradient: Vec<f64>,
    /// Search point the cut was generated at.
    pub anchor: Vec<f64>,
    pub iteration: usize,
    /// Nonnegative correction subtracted from the cut (0 for exact cuts).
    pub slack_correction: f64,
}

impl Cut {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.intercept + dot(&self.gradient, x) - dot(&self.gradient, &self.anchor)
            - self.slack_correction
    }

    /// Constant term of the cut viewed as theta >= <gradient, x> + c.
    pub fn folded_constant(&self) -> f64 {
        self.intercept - dot(&self.gradient, &self.anchor) - self.slack_correction
    }
}

#[derive(Debug, Clone)]
pub struct LowerModel {
    /// Constant initial bound on the cost-to-go function.
    pub v0: f64,
    pub cuts: Vec<Cut>,
}

impl LowerModel {
    pub fn with_constant(v0: f64) -> Self {
        LowerModel { v0, cuts: Vec::new() }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.cuts.iter().map(|c| c.evaluate(x)).fold(self.v0, f64::max)
    }

    /// Gradient of the active piece at x (zero vector when the constant
    /// bound is active). Deterministic: earliest cut wins ties.
    pub fn active_gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut best = self.v0;
        let mut grad = vec![0.0; n];
        for c in &self.cuts {
            let v = c.evaluate(x);
            if v > best {
                best = v;
                grad = c.gradient.clone();
            }
        }
        grad
    }

    pub fn num_cuts(&self) -> usize {
        self.cuts.len()
    }

    /// Largest Euclidean norm over cut gradients.
    pub fn max_gradient_norm(&self) -> f64 {
        self.cuts.iter().map(|c| crate::linalg::norm2(&c.gradient)).fold(0.0, f64::max)
    }

    /// Append one averaged cut built from per-scenario values and
    /// subgradients at `anchor`. Values are averaged in ascending scenario
    /// order so reruns are bit-identical.
    pub fn add_averaged_cut(
        &mut self,
        values: &[f64],
        subgradients: &[Vec<f64>],
        anchor: &[f64],
        slack: f64,
        iteration: usize,
    ) -> Result<(), ModelError> {
        if values.len() != subgradients.len() || values.is_empty() {
            return Err(ModelError::Dimension(format!(
                "{} values vs {} subgradients",
                values.len(),
                subgradients.len()
            )));
        }
        let n = anchor.len();
        let inv = 1.0 / values.len() as f64;
        let mut intercept = 0.0;
        let mut gradient = vec![0.0; n];
        for (v, g) in values.iter().zip(subgradients) {
            if g.len() != n {
                return Err(ModelError::Dimension("subgradient length != n".into()));
            }
            intercept += v;
            for (acc, gi) in gradient.iter_mut().zip(g) {
                *acc += gi;
            }
        }
        intercept *= inv;
        for g in gradient.iter_mut() {
            *g *= inv;
        }
        self.cuts.push(Cut {
            intercept,
            gradient,
            anchor: anchor.to_vec(),
            iteration,
            slack_correction: slack,
        });
        Ok(())
    }

    /// Epigraph rows over variables (x_1..x_n, theta):
    /// `theta >= v0` and `theta >= cut_l(x)` for every cut.
    pub fn epigraph_block(&self, n: usize) -> (Mat64, Vec<f64>) {
        let mut rows = Vec::with_capacity(self.cuts.len() + 1);
        let mut rhs = Vec::with_capacity(self.cuts.len() + 1);
        let mut base = vec![0.0; n + 1];
        base[n] = 1.0;
        rows.push(base);
        rhs.push(self.v0);
        for c in &self.cuts {
            let mut row = vec![0.0; n + 1];
            for (r, g) in row.iter_mut().zip(&c.gradient) {
                *r = -g;
            }
            row[n] = 1.0;
            rows.push(row);
            rhs.push(c.folded_constant());
        }
        (Mat::from_rows(rows), rhs)
    }

    /// Trace serialization: `iteration,intercept,slack,gradient...,anchor...`.
    pub fn to_csv(&self, n: usize) -> String {
        let mut out = String::new();
        let mut header = String::from("iteration,intercept,slack");
        for j in 0..n {
            let _ = write!(header, ",g{j}");
        }
        for j in 0..n {
            let _ = write!(header, ",a{j}");
        }
        out.push_str(&header);
        out.push('\n');
        for c in &self.cuts {
            let _ = write!(out, "{},{},{}", c.iteration, c.intercept, c.slack_correction);
            for g in &c.gradient {
                let _ = write!(out, ",{g}");
            }
            for a in &c.anchor {
                let _ = write!(out, ",{a}");
            }
            out.push('\n');
        }
        out
    }
}

/// V0 initialization: (1 / (N (1 - lambda))) * sum_i min over the box of
/// h(x, c_i), the per-scenario minima solved as LPs over the box.
pub fn init_lower(inst: &StationaryInstance) -> Result<LowerModel, LpError> {
    let n_scen = inst.num_scenarios() as f64;
    let mut total = 0.0;
    for sc in &inst.scenarios {
        total += min_cost_over_box(&sc.cost, &inst.lower, &inst.upper)?;
    }
    Ok(LowerModel::with_constant(total / (n_scen * (1.0 - inst.lambda))))
}

/// Minimize a max-of-affines cost over a box via its epigraph LP.
pub fn min_cost_over_box(
    cost: &crate::model::PiecewiseLinearCost,
    lower: &[f64],
    upper: &[f64],
) -> Result<f64, LpError> {
    let n = lower.len();
    if cost.pieces.len() == 1 {
        // affine: minimize each coordinate independently
        let (g, o) = &cost.pieces[0];
        let mut v = *o;
        for j in 0..n {
            v += if g[j] >= 0.0 { g[j] * lower[j] } else { g[j] * upper[j] };
        }
        return Ok(v);
    }
    let mut b = crate::lp::LpBuilder::new(n + 1);
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    b = b.objective(obj);
    for j in 0..n {
        b = b.bound(j, Some(lower[j]), Some(upper[j]));
    }
    for (g, o) in &cost.pieces {
        let mut row = vec![0.0; n + 1];
        for (r, gi) in row.iter_mut().zip(g) {
            *r = -gi;
        }
        row[n] = 1.0;
        b = b.geq(row, *o);
    }
    let sol = crate::lp::solve_lp(&b.build())?;
    if !sol.is_optimal() {
        return Err(LpError::NumericalFailure("box minimization not optimal".into()));
    }
    Ok(sol.objective_value)
}

/// Maximize a max-of-affines cost over a box: every piece peaks at a box
/// corner, solved in closed form piece by piece.
pub fn max_cost_over_box(cost: &crate::model::PiecewiseLinearCost, lower: &[f64], upper: &[f64]) -> f64 {
    cost.pieces
        .iter()
        .map(|(g, o)| {
            let mut v = *o;
            for j in 0..lower.len() {
                v += if g[j] >= 0.0 { g[j] * upper[j] } else { g[j] * lower[j] };
            }
            v
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
