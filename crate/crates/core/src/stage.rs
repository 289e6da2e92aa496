//! Stage LP assembly: feasible-set block plus cost epigraph plus the
//! cutting-plane (or upper-model) value block, solved by the LP core.

use crate::assemble::LpAssembler;
use crate::cuts::LowerModel;
use crate::error::{LpError, ModelError};
use crate::lp::{solve_lp, LpStatus};
use crate::model::{LinearConstraintBlock, PiecewiseLinearCost, StationaryInstance};
use crate::upper::UpperModel;

#[derive(Debug, Clone)]
pub struct StageSolved {
    pub x: Vec<f64>,
    /// h(x) + lambda * (value-block at x), the subproblem optimum.
    pub value: f64,
    /// Current-stage cost h(x) alone.
    pub stage_cost: f64,
    /// Value-block contribution at x (model cost-to-go).
    pub theta: f64,
    /// Subgradient of the optimal value w.r.t. x_prev.
    pub subgradient: Vec<f64>,
    pub lp_iterations: usize,
    pub status: LpStatus,
}

/// Add a piecewise cost over the given columns: affine pieces fold into the
/// objective, multi-piece costs get an epigraph variable and rows.
pub fn append_cost(asm: &mut LpAssembler, cost: &PiecewiseLinearCost, cols: &[usize], scale: f64) {
    if cost.pieces.len() == 1 {
        let (g, o) = &cost.pieces[0];
        for (c, gi) in cols.iter().zip(g) {
            asm.add_objective(*c, scale * gi);
        }
        asm.offset += scale * o;
    } else {
        let w = asm.add_var(None, None, scale);
        for (g, o) in &cost.pieces {
            let mut entries: Vec<(usize, f64)> =
                cols.iter().zip(g).map(|(c, gi)| (*c, -gi)).collect();
            entries.push((w, 1.0));
            asm.add_geq(entries, *o);
        }
    }
}

/// Add the structural rows of a feasible-set block over the given columns.
/// Must run before any other row is added so the coupled rows stay first in
/// both sections (the dual/subgradient mapping depends on it).
pub fn append_block_rows(asm: &mut LpAssembler, block: &LinearConstraintBlock, cols: &[usize]) {
    debug_assert_eq!(asm.num_eq() + asm.num_geq(), 0, "coupled rows must come first");
    for i in 0..block.eq.1.len() {
        let entries: Vec<(usize, f64)> = block
            .eq
            .0
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (cols[j], *v))
            .collect();
        asm.add_eq(entries, block.eq.1[i]);
    }
    for i in 0..block.geq.1.len() {
        let entries: Vec<(usize, f64)> = block
            .geq
            .0
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (cols[j], *v))
            .collect();
        asm.add_geq(entries, block.geq.1[i]);
    }
}

/// Map the duals of the coupled rows back to a subgradient w.r.t. x_prev.
/// Assumes the coupled rows are the first `coupling.nrows()` structural
/// rows (equalities first, matching `append_block_rows`).
pub fn coupled_subgradient(
    block: &LinearConstraintBlock,
    duals: &[f64],
    n_eq_total: usize,
) -> Vec<f64> {
    let n_prev = block.coupling.ncols();
    let m_eq = block.eq.1.len();
    let m_geq = block.geq.1.len();
    let mut sub = vec![0.0; n_prev];
    for i in 0..(m_eq + m_geq) {
        // eq rows sit at the start of the dual vector; geq rows start after
        // ALL equality rows of the final LP
        let dual = if i < m_eq { duals[i] } else { duals[n_eq_total + (i - m_eq)] };
        if dual != 0.0 {
            for (s, c) in sub.iter_mut().zip(block.coupling.row(i)) {
                *s += dual * c;
            }
        }
    }
    sub
}

/// Solve one scenario subproblem `min h(x) + lambda * V(x)` over the stage
/// feasible set, where V is the lower cutting-plane model (or absent, for
/// pure stage feasibility/cost checks).
pub fn solve_stage_lp(
    inst: &StationaryInstance,
    scenario_index: usize,
    x_prev: &[f64],
    lower: Option<&LowerModel>,
) -> Result<StageSolved, ModelError> {
    let block = crate::model::stage_feasible_set(inst, scenario_index, x_prev)?;
    let cost = &inst.scenario(scenario_index)?.cost;
    solve_block_lp(&block, cost, inst.lambda, lower).map_err(ModelError::from)
}

/// Same assembly against an explicit block (used by generators and tests).
pub fn solve_block_lp(
    block: &LinearConstraintBlock,
    cost: &PiecewiseLinearCost,
    lambda: f64,
    lower: Option<&LowerModel>,
) -> Result<StageSolved, LpError> {
    let n = block.lower.len();
    let mut lazy = lower.map(|model| {
        let mid: Vec<f64> =
            block.lower.iter().zip(&block.upper).map(|(l, u)| 0.5 * (l + u)).collect();
        LazyCuts::seeded(model, &mid)
    });
    loop {
        let mut asm = LpAssembler::new();
        let x_cols = asm.add_vars(&block.lower, &block.upper, 0.0);
        append_block_rows(&mut asm, block, &x_cols);
        append_cost(&mut asm, cost, &x_cols, 1.0);
        let theta_col = lazy.as_ref().map(|lz| {
            append_lower_value_subset(&mut asm, lz.model, &x_cols, lambda, &lz.active)
        });

        let n_eq_total = asm.num_eq();
        let offset = asm.offset;
        let p = asm.build();
        let sol = solve_lp(&p)?;
        if sol.status != LpStatus::Optimal {
            return Ok(StageSolved {
                x: Vec::new(),
                value: f64::NAN,
                stage_cost: f64::NAN,
                theta: f64::NAN,
                subgradient: Vec::new(),
                lp_iterations: sol.iterations,
                status: sol.status,
            });
        }
        let theta = theta_col.map_or(0.0, |tc| sol.x[tc]);
        if let Some(lz) = lazy.as_mut() {
            let scale = 1e-9 * (1.0 + theta.abs());
            let missing = lz.violated(&sol.x[..n], theta, scale);
            if !missing.is_empty() {
                lz.extend(missing);
                continue;
            }
        }
        let subgradient = coupled_subgradient(block, &sol.duals, n_eq_total);
        let value = sol.objective_value + offset;
        return Ok(StageSolved {
            x: sol.x[..n].to_vec(),
            value,
            stage_cost: value - lambda * theta,
            theta,
            subgradient,
            lp_iterations: sol.iterations,
            status: LpStatus::Optimal,
        });
    }
}

/// Attach `lambda * theta` with the model's epigraph rows; returns the
/// theta column.
pub fn append_lower_value(
    asm: &mut LpAssembler,
    model: &LowerModel,
    x_cols: &[usize],
    lambda: f64,
) -> usize {
    let all: Vec<usize> = (0..model.num_cuts()).collect();
    append_lower_value_subset(asm, model, x_cols, lambda, &all)
}

/// Same, restricted to the given cut indices (lazy activation).
pub fn append_lower_value_subset(
    asm: &mut LpAssembler,
    model: &LowerModel,
    x_cols: &[usize],
    lambda: f64,
    active: &[usize],
) -> usize {
    let theta = asm.add_var(None, None, lambda);
    asm.add_geq(vec![(theta, 1.0)], model.v0);
    for &idx in active {
        let c = &model.cuts[idx];
        let mut entries: Vec<(usize, f64)> = x_cols
            .iter()
            .zip(&c.gradient)
            .filter(|(_, g)| **g != 0.0)
            .map(|(col, g)| (*col, -g))
            .collect();
        entries.push((theta, 1.0));
        asm.add_geq(entries, c.folded_constant());
    }
    theta
}

/// Lazy-activation bookkeeping: stage LPs carry only the cuts that bind,
/// re-solving until no stored cut is violated at the optimum. The solved
/// problem is exactly the full one (omitted rows are slack, dual zero).
pub struct LazyCuts<'m> {
    pub model: &'m LowerModel,
    pub active: Vec<usize>,
}

pub const LAZY_CUT_SEED: usize = 24;
pub const LAZY_CUT_BATCH: usize = 16;

impl<'m> LazyCuts<'m> {
    /// Start from the cuts with the largest values at the hint point.
    pub fn seeded(model: &'m LowerModel, hint: &[f64]) -> Self {
        let k = model.num_cuts();
        if k <= LAZY_CUT_SEED {
            return LazyCuts { model, active: (0..k).collect() };
        }
        let mut scored: Vec<(usize, f64)> =
            (0..k).map(|i| (i, model.cuts[i].evaluate(hint))).collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut active: Vec<usize> = scored[..LAZY_CUT_SEED].iter().map(|s| s.0).collect();
        active.sort_unstable();
        LazyCuts { model, active }
    }

    /// Collect the most violated inactive cuts at (x, theta); empty means
    /// the restricted optimum solves the full problem.
    pub fn violated(&self, x: &[f64], theta: f64, tol: f64) -> Vec<usize> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        let mut mark = vec![false; self.model.num_cuts()];
        for &i in &self.active {
            mark[i] = true;
        }
        for (i, c) in self.model.cuts.iter().enumerate() {
            if mark[i] {
                continue;
            }
            let v = c.evaluate(x);
            if v > theta + tol {
                out.push((i, v - theta));
            }
        }
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        out.truncate(LAZY_CUT_BATCH);
        out.into_iter().map(|(i, _)| i).collect()
    }

    pub fn extend(&mut self, more: Vec<usize>) {
        self.active.extend(more);
        self.active.sort_unstable();
    }
}

/// Upper-bound stage solve: `min h(x) + lambda * Vbar(x)` with the upper
/// model embedded in its convex-combination form.
pub fn solve_upper_stage_lp(
    inst: &StationaryInstance,
    scenario_index: usize,
    x_prev: &[f64],
    upper: &UpperModel,
) -> Result<f64, ModelError> {
    let block = crate::model::stage_feasible_set(inst, scenario_index, x_prev)?;
    let cost = &inst.scenario(scenario_index)?.cost;
    let mut asm = LpAssembler::new();
    let x_cols = asm.add_vars(&block.lower, &block.upper, 0.0);
    append_block_rows(&mut asm, &block, &x_cols);
    append_cost(&mut asm, cost, &x_cols, 1.0);
    upper.append_embedded(&mut asm, inst.lambda, &x_cols);
    let offset = asm.offset;
    let p = asm.build();
    let sol = solve_lp(&p).map_err(ModelError::from)?;
    if sol.status != LpStatus::Optimal {
        return Err(ModelError::Lp(LpError::NumericalFailure(format!(
            "upper stage LP status {:?}",
            sol.status
        ))));
    }
    Ok(sol.objective_value + offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::chain_instance;
    use crate::cuts::init_lower;

    #[test]
    fn chain_subproblem_fresh_model() {
        let inst = chain_instance();
        let lower = init_lower(&inst).unwrap();
        let s = solve_stage_lp(&inst, 1, &[1.0], Some(&lower)).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 0.5).abs() < 1e-9);
        assert!((s.value - 0.5).abs() < 1e-9);
        assert!((s.subgradient[0] - 0.5).abs() < 1e-9);
        assert!((s.stage_cost - 0.5).abs() < 1e-9);
    }

    #[test]
    fn dominated_cut_changes_nothing() {
        let inst = chain_instance();
        let mut lower = init_lower(&inst).unwrap();
        let base = solve_stage_lp(&inst, 1, &[1.0], Some(&lower)).unwrap();
        // a cut far below v0 = 0 everywhere on [0,1]
        lower.add_averaged_cut(&[-5.0], &[vec![0.1]], &[0.5], 0.0, 1).unwrap();
        let after = solve_stage_lp(&inst, 1, &[1.0], Some(&lower)).unwrap();
        assert!((base.x[0] - after.x[0]).abs() < 1e-10);
        assert!((base.value - after.value).abs() < 1e-10);
    }

    #[test]
    fn scenario_zero_uses_root_data() {
        let inst = chain_instance();
        let lower = init_lower(&inst).unwrap();
        let s = solve_stage_lp(&inst, 0, &inst.x0.clone(), Some(&lower)).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn infeasible_subproblem_reported() {
        let mut inst = chain_instance();
        // coupling x >= 2 x_prev makes x_prev = 1 infeasible in [0,1]
        inst.scenarios[0].b_coupling = crate::linalg::Mat::from_rows(vec![vec![2.0]]);
        let lower = init_lower(&inst).unwrap();
        let s = solve_stage_lp(&inst, 1, &[1.0], Some(&lower)).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn multi_piece_cost_and_equality_coupling() {
        // balance row x = 0.8 x_prev (equality), V-shaped cost
        let mut inst = chain_instance();
        for sc in [&mut inst.scenario0].into_iter().chain(inst.scenarios.iter_mut()) {
            sc.senses = vec![crate::model::RowSense::Equality];
            sc.b_coupling = crate::linalg::Mat::from_rows(vec![vec![0.8]]);
            sc.cost = PiecewiseLinearCost {
                pieces: vec![(vec![1.0], 0.0), (vec![-1.0], 0.6)],
            };
        }
        let lower = init_lower(&inst).unwrap();
        let s = solve_stage_lp(&inst, 1, &[0.5], Some(&lower)).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 0.4).abs() < 1e-9);
        // h(0.4) = max(0.4, 0.2) = 0.4
        assert!((s.stage_cost - 0.4).abs() < 1e-9);
        // equality dual: d(value)/d(x_prev) = 0.8 * dual; finite-difference check
        let s2 = solve_stage_lp(&inst, 1, &[0.51], Some(&lower)).unwrap();
        let fd = (s2.value - s.value) / 0.01;
        assert!((s.subgradient[0] - fd).abs() < 1e-6, "sub {} fd {fd}", s.subgradient[0]);
    }
}
