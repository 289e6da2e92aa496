//! Stationary stochastic program instances: scenario data, piecewise-linear
//! stage costs, box domains, and the hierarchical two-stage lower level.

use crate::error::{LpError, ModelError};
use crate::linalg::{norm2, Mat};
use crate::lp::{solve_lp, LpBuilder, LpStatus};

pub type Mat64 = Mat<f64>;

/// Tolerance for "x_prev inside the box": points this far outside are
/// clamped, anything further is rejected.
pub const DOMAIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Equality,
    Geq,
}

/// Convex stage cost h(x) = max over pieces of <gradient, x> + offset.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearCost {
    pub pieces: Vec<(Vec<f64>, f64)>,
}

impl PiecewiseLinearCost {
    pub fn affine(gradient: Vec<f64>, offset: f64) -> Self {
        PiecewiseLinearCost { pieces: vec![(gradient, offset)] }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        PiecewiseLinearCost::affine(vec![0.0; n], value)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|(g, o)| g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + o)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// M_h: the largest Euclidean gradient norm over the pieces.
    pub fn lipschitz(&self) -> f64 {
        self.pieces.iter().map(|(g, _)| norm2(g)).fold(0.0, f64::max)
    }

    pub fn validate(&self, n: usize) -> Result<(), ModelError> {
        if self.pieces.is_empty() {
            return Err(ModelError::Invalid("cost needs at least one piece".into()));
        }
        for (g, o) in &self.pieces {
            if g.len() != n {
                return Err(ModelError::Dimension(format!(
                    "cost piece gradient has {} entries, expected {n}",
                    g.len()
                )));
            }
            if !g.iter().all(|v| v.is_finite()) || !o.is_finite() {
                return Err(ModelError::Invalid("non-finite cost piece".into()));
            }
        }
        Ok(())
    }
}

/// One realized sample of the random stage data.
///
/// Structural rows: `A x  (= | >=)  B x_prev + b` per row sense.
/// Functional rows: `R x <= Q x_prev - r` (affine, may be absent).
#[derive(Debug, Clone)]
pub struct Scenario {
    pub a: Mat64,
    pub b_coupling: Mat64,
    pub rhs: Vec<f64>,
    pub senses: Vec<RowSense>,
    pub func_r: Mat64,
    pub func_q: Mat64,
    pub func_rhs: Vec<f64>,
    pub cost: PiecewiseLinearCost,
}

impl Scenario {
    /// Scenario with structural rows only.
    pub fn structural(
        a: Mat64,
        b_coupling: Mat64,
        rhs: Vec<f64>,
        senses: Vec<RowSense>,
        cost: PiecewiseLinearCost,
    ) -> Self {
        let n = a.ncols();
        Scenario {
            a,
            b_coupling,
            rhs,
            senses,
            func_r: Mat::zeros(0, n),
            func_q: Mat::zeros(0, n),
            func_rhs: Vec::new(),
            cost,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_func_rows(&self) -> usize {
        self.func_rhs.len()
    }

    pub fn validate(&self, n: usize) -> Result<(), ModelError> {
        let m = self.rhs.len();
        if self.senses.len() != m {
            return Err(ModelError::Dimension("senses length != m".into()));
        }
        if m > 0 && (self.a.nrows() != m || self.a.ncols() != n) {
            return Err(ModelError::Dimension(format!(
                "A is {}x{}, expected {m}x{n}",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        if m > 0 && (self.b_coupling.nrows() != m || self.b_coupling.ncols() != n) {
            return Err(ModelError::Dimension(format!(
                "B is {}x{}, expected {m}x{n}",
                self.b_coupling.nrows(),
                self.b_coupling.ncols()
            )));
        }
        let mf = self.func_rhs.len();
        if mf > 0 {
            if self.func_r.nrows() != mf || self.func_r.ncols() != n {
                return Err(ModelError::Dimension("R shape mismatch".into()));
            }
            if self.func_q.nrows() != mf || self.func_q.ncols() != n {
                return Err(ModelError::Dimension("Q shape mismatch".into()));
            }
        }
        self.cost.validate(n)
    }
}

#[derive(Debug, Clone)]
pub struct StationaryInstance {
    pub n: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub x0: Vec<f64>,
    /// Deterministic first-stage data; indexed as sample 0.
    pub scenario0: Scenario,
    /// The N sampled scenarios (indices 1..=N).
    pub scenarios: Vec<Scenario>,
    pub lambda: f64,
}

impl StationaryInstance {
    pub fn num_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    /// Sample by index; index 0 is the deterministic first-stage data.
    pub fn scenario(&self, index: usize) -> Result<&Scenario, ModelError> {
        if index == 0 {
            Ok(&self.scenario0)
        } else if index <= self.scenarios.len() {
            Ok(&self.scenarios[index - 1])
        } else {
            Err(ModelError::IndexError(index, self.scenarios.len()))
        }
    }

    /// D: the largest coordinate range of the box (sup-norm diameter).
    pub fn domain_length(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).fold(0.0, f64::max)
    }

    /// M_h over all samples including the deterministic one.
    pub fn cost_lipschitz(&self) -> f64 {
        std::iter::once(&self.scenario0)
            .chain(self.scenarios.iter())
            .map(|s| s.cost.lipschitz())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n;
        if self.lower.len() != n || self.upper.len() != n || self.x0.len() != n {
            return Err(ModelError::Dimension("box/x0 length != n".into()));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(ModelError::Invalid(format!("lambda {} outside (0,1)", self.lambda)));
        }
        if self.scenarios.is_empty() {
            return Err(ModelError::Invalid("need at least one sampled scenario".into()));
        }
        for j in 0..n {
            if !(self.lower[j] <= self.upper[j]) {
                return Err(ModelError::Invalid(format!("empty box in coordinate {j}")));
            }
            if self.x0[j] < self.lower[j] - DOMAIN_TOL || self.x0[j] > self.upper[j] + DOMAIN_TOL {
                return Err(ModelError::Invalid(format!("x0 outside the box in coordinate {j}")));
            }
        }
        self.scenario0.validate(n)?;
        for s in &self.scenarios {
            s.validate(n)?;
        }
        Ok(())
    }

    /// Clamp a point into the box, rejecting violations beyond tolerance.
    pub fn clamp_into_box(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.n {
            return Err(ModelError::Dimension("point length != n".into()));
        }
        let mut out = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let tol = DOMAIN_TOL * (1.0 + self.lower[j].abs().max(self.upper[j].abs()));
            if x[j] < self.lower[j] - tol || x[j] > self.upper[j] + tol {
                return Err(ModelError::OutOfDomain);
            }
            out.push(x[j].clamp(self.lower[j], self.upper[j]));
        }
        Ok(out)
    }
}

/// Explicit constraint block of one stage problem at a fixed previous state.
///
/// Rows are stored in LP orientation (equalities, then `>=` rows with the
/// functional rows negated into `>=` form). `coupling` holds d(rhs)/d(x_prev)
/// for every stored row, so `coupling' * duals` is the subgradient of the
/// stage value w.r.t. the previous state.
#[derive(Debug, Clone)]
pub struct LinearConstraintBlock {
    pub eq: (Mat64, Vec<f64>),
    pub geq: (Mat64, Vec<f64>),
    pub coupling: Mat64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearConstraintBlock {
    pub fn num_rows(&self) -> usize {
        self.eq.1.len() + self.geq.1.len()
    }
}

/// Expand the parametric feasible set X(x_prev, xi_i) into an explicit block.
pub fn stage_feasible_set(
    inst: &StationaryInstance,
    scenario_index: usize,
    x_prev: &[f64],
) -> Result<LinearConstraintBlock, ModelError> {
    let sc = inst.scenario(scenario_index)?;
    let x_prev = inst.clamp_into_box(x_prev)?;
    Ok(scenario_block(sc, inst.n, &inst.lower, &inst.upper, &x_prev))
}

/// Same expansion for a bare scenario (used by stage assemblers).
pub fn scenario_block(
    sc: &Scenario,
    n: usize,
    lower: &[f64],
    upper: &[f64],
    x_prev: &[f64],
) -> LinearConstraintBlock {
    let mut eq_rows = Vec::new();
    let mut eq_rhs = Vec::new();
    let mut geq_rows = Vec::new();
    let mut geq_rhs = Vec::new();
    let mut eq_coupling = Vec::new();
    let mut geq_coupling = Vec::new();

    for i in 0..sc.num_rows() {
        let brow = sc.b_coupling.row(i);
        let rhs = sc.rhs[i] + brow.iter().zip(x_prev).map(|(a, b)| a * b).sum::<f64>();
        match sc.senses[i] {
            RowSense::Equality => {
                eq_rows.push(sc.a.row(i).to_vec());
                eq_rhs.push(rhs);
                eq_coupling.push(brow.to_vec());
            }
            RowSense::Geq => {
                geq_rows.push(sc.a.row(i).to_vec());
                geq_rhs.push(rhs);
                geq_coupling.push(brow.to_vec());
            }
        }
    }
    // functional rows R x <= Q x_prev - r, stored as -R x >= -Q x_prev + r
    for i in 0..sc.num_func_rows() {
        let qrow = sc.func_q.row(i);
        let rhs = sc.func_rhs[i] - qrow.iter().zip(x_prev).map(|(a, b)| a * b).sum::<f64>();
        geq_rows.push(sc.func_r.row(i).iter().map(|v| -v).collect());
        geq_rhs.push(rhs);
        geq_coupling.push(qrow.iter().map(|v| -v).collect());
    }

    let pack = |rows: Vec<Vec<f64>>| if rows.is_empty() { Mat::zeros(0, n) } else { Mat::from_rows(rows) };
    let mut coupling_rows = eq_coupling;
    coupling_rows.extend(geq_coupling);
    LinearConstraintBlock {
        eq: (pack(eq_rows), eq_rhs),
        geq: (pack(geq_rows), geq_rhs),
        coupling: pack(coupling_rows),
        lower: lower.to_vec(),
        upper: upper.to_vec(),
    }
}

/// One stage of the hierarchical lower level.
#[derive(Debug, Clone)]
pub struct LowerStage {
    pub a: Mat64,
    /// Coupling to the enclosing decision (top-level x for the first stage,
    /// z1 for second-stage samples).
    pub b_coupling: Mat64,
    pub rhs: Vec<f64>,
    pub senses: Vec<RowSense>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cost: PiecewiseLinearCost,
}

impl LowerStage {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn validate(&self, coupling_dim: usize) -> Result<(), ModelError> {
        let nz = self.dim();
        let m = self.rhs.len();
        if self.upper.len() != nz {
            return Err(ModelError::Dimension("lower-stage box mismatch".into()));
        }
        if self.senses.len() != m {
            return Err(ModelError::Dimension("lower-stage senses mismatch".into()));
        }
        if m > 0 && (self.a.nrows() != m || self.a.ncols() != nz) {
            return Err(ModelError::Dimension("lower-stage A mismatch".into()));
        }
        if m > 0 && (self.b_coupling.nrows() != m || self.b_coupling.ncols() != coupling_dim) {
            return Err(ModelError::Dimension("lower-stage B mismatch".into()));
        }
        self.cost.validate(nz)
    }
}

#[derive(Debug, Clone)]
pub struct TwoStageLowerLevel {
    pub first: LowerStage,
    pub second_samples: Vec<LowerStage>,
}

#[derive(Debug, Clone)]
pub struct HierarchicalInstance {
    pub top: StationaryInstance,
    pub lower: TwoStageLowerLevel,
    /// Target accuracy of each inexact subproblem solve.
    pub eps_lo: f64,
    /// Failure probability budget for a whole run.
    pub rho: f64,
    /// Estimate of the perturbation Lipschitz constant M_D.
    pub m_d_estimate: f64,
}

impl HierarchicalInstance {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.top.validate()?;
        let n1 = self.lower.first.dim();
        self.lower.first.validate(self.top.n)?;
        if self.lower.second_samples.is_empty() {
            return Err(ModelError::Invalid("need at least one second-stage sample".into()));
        }
        for s in &self.lower.second_samples {
            s.validate(n1)?;
        }
        if !(self.eps_lo > 0.0) {
            return Err(ModelError::Invalid("eps_lo must be positive".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(ModelError::Invalid("rho must lie in (0,1)".into()));
        }
        // spot-check: each second-stage sample admits a feasible (z1, z2)
        for (j, s2) in self.lower.second_samples.iter().enumerate() {
            if !second_stage_reachable(&self.lower.first, s2)? {
                return Err(ModelError::Invalid(format!(
                    "second-stage sample {} infeasible for every z1 in its box",
                    j + 1
                )));
            }
        }
        Ok(())
    }
}

fn second_stage_reachable(first: &LowerStage, second: &LowerStage) -> Result<bool, LpError> {
    let n1 = first.dim();
    let n2 = second.dim();
    let mut b = LpBuilder::new(n1 + n2);
    for (j, (l, u)) in first.lower.iter().zip(&first.upper).enumerate() {
        b = b.bound(j, Some(*l), Some(*u));
    }
    for (j, (l, u)) in second.lower.iter().zip(&second.upper).enumerate() {
        b = b.bound(n1 + j, Some(*l), Some(*u));
    }
    for i in 0..second.rhs.len() {
        let mut row = vec![0.0; n1 + n2];
        for (j, v) in second.b_coupling.row(i).iter().enumerate() {
            row[j] = -v;
        }
        for (j, v) in second.a.row(i).iter().enumerate() {
            row[n1 + j] = *v;
        }
        match second.senses[i] {
            RowSense::Equality => b = b.eq(row, second.rhs[i]),
            RowSense::Geq => b = b.geq(row, second.rhs[i]),
        }
    }
    let sol = solve_lp(&b.build())?;
    Ok(sol.status == LpStatus::Optimal)
}
