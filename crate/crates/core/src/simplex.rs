//! Bounded revised simplex with an explicit basis inverse.
//!
//! Two phases with a slack crash basis, Dantzig pricing switching to
//! Bland's rule after `10 * (rows + cols)` iterations, smallest-index
//! tie-breaking everywhere, and periodic refactorization. Generic over
//! the scalar so the same pivoting runs exactly on rationals.

use crate::error::LpError;
use crate::linalg::Mat;
use crate::lp::{LpProblem, LpSolution, LpStatus};
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    FreeAtZero,
}

struct Core<S> {
    m: usize,
    n_struct: usize,
    n_total: usize,
    /// sparse columns (row, coefficient)
    cols: Vec<Vec<(usize, S)>>,
    rhs: Vec<S>,
    lo: Vec<Option<S>>,
    hi: Vec<Option<S>>,
    cost: Vec<S>,
    x: Vec<S>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Mat<S>,
    iterations: usize,
    n_artificial: usize,
}

enum LoopExit {
    Optimal,
    Unbounded,
}

pub(crate) fn solve<S: Scalar>(p: &LpProblem<S>) -> Result<LpSolution<S>, LpError> {
    let n = p.num_vars();
    let m = p.num_rows();
    if m == 0 {
        return solve_unconstrained(p);
    }

    let mut core = Core::build(p);
    core.phase1()?;
    let feas_gap = core.objective().to_f64();
    let scale = 1.0 + core.rhs.iter().fold(0.0f64, |a, b| a.max(b.to_f64().abs()));
    if feas_gap > 10.0 * S::feas_tol().to_f64().max(1e-12) * scale && feas_gap > 0.0 {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: Vec::new(),
            objective_value: S::zero(),
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            iterations: core.iterations,
        });
    }
    core.drive_out_artificials()?;

    // phase 2
    for j in 0..core.n_total {
        core.cost[j] = if j < n { p.objective[j].clone() } else { S::zero() };
    }
    match core.run_loop(false)? {
        LoopExit::Unbounded => Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            objective_value: S::zero(),
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            iterations: core.iterations,
        }),
        LoopExit::Optimal => {
            core.refactorize()?;
            let duals = core.duals();
            let reduced = core.reduced_costs(&duals);
            Ok(LpSolution {
                status: LpStatus::Optimal,
                x: core.x[..n].to_vec(),
                objective_value: core.objective(),
                duals,
                reduced_costs: reduced[..n].to_vec(),
                iterations: core.iterations,
            })
        }
    }
}

fn solve_unconstrained<S: Scalar>(p: &LpProblem<S>) -> Result<LpSolution<S>, LpError> {
    let n = p.num_vars();
    let mut x = vec![S::zero(); n];
    for j in 0..n {
        let c = &p.objective[j];
        let (lo, hi) = &p.var_bounds[j];
        if *c > S::zero() {
            match lo {
                Some(l) => x[j] = l.clone(),
                None => {
                    return Ok(LpSolution {
                        status: LpStatus::Unbounded,
                        x: Vec::new(),
                        objective_value: S::zero(),
                        duals: Vec::new(),
                        reduced_costs: Vec::new(),
                        iterations: 0,
                    })
                }
            }
        } else if *c < S::zero() {
            match hi {
                Some(h) => x[j] = h.clone(),
                None => {
                    return Ok(LpSolution {
                        status: LpStatus::Unbounded,
                        x: Vec::new(),
                        objective_value: S::zero(),
                        duals: Vec::new(),
                        reduced_costs: Vec::new(),
                        iterations: 0,
                    })
                }
            }
        } else {
            x[j] = match (lo, hi) {
                (Some(l), _) => l.clone(),
                (None, Some(h)) => h.clone(),
                (None, None) => S::zero(),
            };
        }
        if let (Some(l), Some(h)) = (&p.var_bounds[j].0, &p.var_bounds[j].1) {
            if l > h {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    x: Vec::new(),
                    objective_value: S::zero(),
                    duals: Vec::new(),
                    reduced_costs: Vec::new(),
                    iterations: 0,
                });
            }
        }
    }
    let obj = crate::linalg::dot(&p.objective, &x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective_value: obj,
        duals: Vec::new(),
        reduced_costs: p.objective.clone(),
        iterations: 0,
    })
}

impl<S: Scalar> Core<S> {
    fn build(p: &LpProblem<S>) -> Core<S> {
        let n = p.num_vars();
        let m_eq = p.eq_rows.1.len();
        let m_geq = p.geq_rows.1.len();
        let m = m_eq + m_geq;

        let mut cols: Vec<Vec<(usize, S)>> = vec![Vec::new(); n];
        let mut rhs = Vec::with_capacity(m);
        for i in 0..m_eq {
            for (j, v) in p.eq_rows.0.row(i).iter().enumerate() {
                if !v.is_zero() {
                    cols[j].push((i, v.clone()));
                }
            }
            rhs.push(p.eq_rows.1[i].clone());
        }
        for i in 0..m_geq {
            for (j, v) in p.geq_rows.0.row(i).iter().enumerate() {
                if !v.is_zero() {
                    cols[j].push((m_eq + i, v.clone()));
                }
            }
            rhs.push(p.geq_rows.1[i].clone());
        }

        let mut lo: Vec<Option<S>> = Vec::with_capacity(n + m_geq);
        let mut hi: Vec<Option<S>> = Vec::with_capacity(n + m_geq);
        for (l, h) in &p.var_bounds {
            // map non-finite f64 bounds to unbounded
            let l2 = l.clone().filter(|v| v.to_f64().is_finite());
            let h2 = h.clone().filter(|v| v.to_f64().is_finite());
            lo.push(l2);
            hi.push(h2);
        }
        // slacks: geq row i gets  a'x - s = b, s >= 0
        for i in 0..m_geq {
            cols.push(vec![(m_eq + i, -S::one())]);
            lo.push(Some(S::zero()));
            hi.push(None);
        }
        let n_total = n + m_geq;

        let mut core = Core {
            m,
            n_struct: n,
            n_total,
            cols,
            rhs,
            lo,
            hi,
            cost: vec![S::zero(); n_total],
            x: vec![S::zero(); n_total],
            state: vec![VarState::AtLower; n_total],
            basis: vec![usize::MAX; m],
            binv: Mat::identity(m),
            iterations: 0,
            n_artificial: 0,
        };

        // nonbasic start for structural variables
        for j in 0..n {
            match (&core.lo[j], &core.hi[j]) {
                (Some(l), _) => {
                    core.x[j] = l.clone();
                    core.state[j] = VarState::AtLower;
                }
                (None, Some(h)) => {
                    core.x[j] = h.clone();
                    core.state[j] = VarState::AtUpper;
                }
                (None, None) => {
                    core.x[j] = S::zero();
                    core.state[j] = VarState::FreeAtZero;
                }
            }
        }
        for j in n..n_total {
            core.x[j] = S::zero();
            core.state[j] = VarState::AtLower;
        }
        core
    }

    /// Crash basis: slacks where the sign works out, artificials elsewhere.
    fn phase1(&mut self) -> Result<(), LpError> {
        let m_eq = self.m - (self.n_total - self.n_struct);
        let mut residual = self.rhs.clone();
        for j in 0..self.n_struct {
            if !self.x[j].is_zero() {
                for (i, v) in &self.cols[j] {
                    residual[*i] = residual[*i].clone() - v.clone() * self.x[j].clone();
                }
            }
        }

        for i in 0..self.m {
            let slack_col = if i >= m_eq { Some(self.n_struct + (i - m_eq)) } else { None };
            if let Some(sc) = slack_col {
                // a'x - s = b  =>  s = a'x - b = -residual
                let s_val = -residual[i].clone();
                if s_val >= S::zero() {
                    self.basis[i] = sc;
                    self.state[sc] = VarState::Basic(i);
                    self.x[sc] = s_val;
                    self.binv.set(i, i, -S::one());
                    continue;
                }
            }
            // artificial with the sign of the residual
            let sign = if residual[i] >= S::zero() { S::one() } else { -S::one() };
            let col_idx = self.n_total;
            self.cols.push(vec![(i, sign.clone())]);
            self.lo.push(Some(S::zero()));
            self.hi.push(None);
            self.cost.push(S::zero());
            self.x.push(residual[i].clone().abs());
            self.state.push(VarState::Basic(i));
            self.basis[i] = col_idx;
            self.binv.set(i, i, sign);
            self.n_total += 1;
            self.n_artificial += 1;
        }

        // phase-1 objective: sum of artificials
        for j in 0..self.n_total {
            self.cost[j] = if j >= self.n_total - self.n_artificial && self.is_artificial(j) {
                S::one()
            } else {
                S::zero()
            };
        }
        match self.run_loop(true)? {
            LoopExit::Optimal => Ok(()),
            LoopExit::Unbounded => Err(LpError::NumericalFailure("phase-1 unbounded".into())),
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n_total - self.n_artificial
    }

    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        for r in 0..self.m {
            let b = self.basis[r];
            if !self.is_artificial(b) {
                continue;
            }
            // degenerate pivot on any eligible non-artificial column
            let mut entered = false;
            for j in 0..(self.n_total - self.n_artificial) {
                if matches!(self.state[j], VarState::Basic(_)) {
                    continue;
                }
                if self.fixed(j) {
                    continue;
                }
                let w = self.ftran(j);
                if w[r].clone().abs() > S::pivot_tol() {
                    self.change_basis(r, j, &w);
                    // leaving artificial pinned at zero
                    let art = b;
                    self.x[art] = S::zero();
                    self.state[art] = VarState::AtLower;
                    entered = true;
                    break;
                }
            }
            if !entered {
                // redundant row; artificial stays basic at zero
            }
        }
        // artificials may never re-enter
        for j in (self.n_total - self.n_artificial)..self.n_total {
            self.hi[j] = Some(S::zero());
        }
        Ok(())
    }

    fn fixed(&self, j: usize) -> bool {
        match (&self.lo[j], &self.hi[j]) {
            (Some(l), Some(h)) => l == h,
            _ => false,
        }
    }

    fn objective(&self) -> S {
        let mut acc = S::zero();
        for j in 0..self.n_total {
            if !self.cost[j].is_zero() {
                acc = acc + self.cost[j].clone() * self.x[j].clone();
            }
        }
        acc
    }

    fn duals(&self) -> Vec<S> {
        // y' = c_B' B^-1
        let mut y = vec![S::zero(); self.m];
        for r in 0..self.m {
            let cb = self.cost[self.basis[r]].clone();
            if cb.is_zero() {
                continue;
            }
            for i in 0..self.m {
                y[i] = y[i].clone() + cb.clone() * self.binv.get(r, i).clone();
            }
        }
        y
    }

    fn reduced_costs(&self, y: &[S]) -> Vec<S> {
        (0..self.n_total)
            .map(|j| {
                let mut d = self.cost[j].clone();
                for (i, v) in &self.cols[j] {
                    d = d - y[*i].clone() * v.clone();
                }
                d
            })
            .collect()
    }

    fn ftran(&self, j: usize) -> Vec<S> {
        // w = B^-1 a_j
        let mut w = vec![S::zero(); self.m];
        for (i, v) in &self.cols[j] {
            for r in 0..self.m {
                let c = self.binv.get(r, *i);
                if !c.is_zero() {
                    w[r] = w[r].clone() + c.clone() * v.clone();
                }
            }
        }
        w
    }

    fn run_loop(&mut self, phase1: bool) -> Result<LoopExit, LpError> {
        let size = self.m + self.n_total;
        let bland_after = 10 * size;
        let hard_cap = 60 * size + 10_000;
        let cost_scale =
            S::from_f64(1.0 + self.cost.iter().fold(0.0f64, |a, c| a.max(c.to_f64().abs())));
        let dtol = S::feas_tol() * cost_scale;

        let mut local_iter = 0usize;
        loop {
            local_iter += 1;
            self.iterations += 1;
            if local_iter > hard_cap {
                return Err(LpError::NumericalFailure(format!(
                    "iteration cap {hard_cap} exceeded"
                )));
            }
            if local_iter % 128 == 0 {
                self.refactorize()?;
            }
            let bland = local_iter > bland_after;

            let y = self.duals();
            let mut entering: Option<(usize, S, S)> = None; // (col, direction, score)
            for j in 0..self.n_total {
                if matches!(self.state[j], VarState::Basic(_)) || self.fixed(j) {
                    continue;
                }
                let mut d = self.cost[j].clone();
                for (i, v) in &self.cols[j] {
                    d = d - y[*i].clone() * v.clone();
                }
                let cand: Option<(S, S)> = match self.state[j] {
                    VarState::AtLower => {
                        if d < -dtol.clone() {
                            Some((S::one(), -d))
                        } else {
                            None
                        }
                    }
                    VarState::AtUpper => {
                        if d > dtol.clone() {
                            Some((-S::one(), d))
                        } else {
                            None
                        }
                    }
                    VarState::FreeAtZero => {
                        if d < -dtol.clone() {
                            Some((S::one(), -d))
                        } else if d > dtol.clone() {
                            Some((-S::one(), d))
                        } else {
                            None
                        }
                    }
                    VarState::Basic(_) => None,
                };
                if let Some((dir, score)) = cand {
                    if bland {
                        entering = Some((j, dir, score));
                        break;
                    }
                    match &entering {
                        Some((_, _, best)) if *best >= score => {}
                        _ => entering = Some((j, dir, score)),
                    }
                }
            }

            let Some((j, dir, _)) = entering else {
                return Ok(LoopExit::Optimal);
            };

            let w = self.ftran(j);

            // ratio test
            #[derive(Clone)]
            enum Block<S2> {
                Flip,
                Row(usize, S2 /*delta*/),
            }
            let mut t_best: Option<(S, Block<S>, usize)> = None; // (t, kind, tie key = var index)
            if let (Some(l), Some(h)) = (&self.lo[j], &self.hi[j]) {
                let range = h.clone() - l.clone();
                t_best = Some((range, Block::Flip, j));
            }
            for r in 0..self.m {
                let k = self.basis[r];
                let delta = dir.clone() * w[r].clone(); // decrease rate of x_k
                if delta > S::pivot_tol() {
                    if let Some(l) = &self.lo[k] {
                        let t = (self.x[k].clone() - l.clone()) / delta.clone();
                        let t = if t < S::zero() { S::zero() } else { t };
                        match &t_best {
                            Some((tb, _, key)) if *tb < t || (*tb == t && *key <= k) => {}
                            _ => t_best = Some((t, Block::Row(r, delta.clone()), k)),
                        }
                    }
                } else if delta < -S::pivot_tol() {
                    if let Some(h) = &self.hi[k] {
                        let t = (self.x[k].clone() - h.clone()) / delta.clone();
                        let t = if t < S::zero() { S::zero() } else { t };
                        match &t_best {
                            Some((tb, _, key)) if *tb < t || (*tb == t && *key <= k) => {}
                            _ => t_best = Some((t, Block::Row(r, delta.clone()), k)),
                        }
                    }
                }
            }

            let Some((t, kind, _)) = t_best else {
                return Ok(LoopExit::Unbounded);
            };

            // apply the step
            self.x[j] = self.x[j].clone() + dir.clone() * t.clone();
            if !t.is_zero() {
                for r in 0..self.m {
                    let k = self.basis[r];
                    self.x[k] = self.x[k].clone() - dir.clone() * t.clone() * w[r].clone();
                }
            }
            match kind {
                Block::Flip => {
                    self.state[j] = match self.state[j] {
                        VarState::AtLower => VarState::AtUpper,
                        VarState::AtUpper => VarState::AtLower,
                        ref s => s.clone(),
                    };
                }
                Block::Row(r, delta) => {
                    let k = self.basis[r];
                    // snap the leaving variable onto its bound
                    if delta > S::zero() {
                        self.x[k] = self.lo[k].clone().unwrap();
                        self.state[k] = VarState::AtLower;
                    } else {
                        self.x[k] = self.hi[k].clone().unwrap();
                        self.state[k] = VarState::AtUpper;
                    }
                    self.change_basis(r, j, &w);
                }
            }
            let _ = phase1;
        }
    }

    fn change_basis(&mut self, r: usize, j: usize, w: &[S]) {
        self.basis[r] = j;
        self.state[j] = VarState::Basic(r);
        // eta update of B^-1
        let pivot = w[r].clone();
        let inv_pivot = S::one() / pivot;
        for c in 0..self.m {
            let v = self.binv.get(r, c).clone() * inv_pivot.clone();
            self.binv.set(r, c, v);
        }
        for i in 0..self.m {
            if i == r || w[i].is_zero() {
                continue;
            }
            let factor = w[i].clone();
            for c in 0..self.m {
                let v = self.binv.get(i, c).clone() - factor.clone() * self.binv.get(r, c).clone();
                self.binv.set(i, c, v);
            }
        }
    }

    /// Rebuild B^-1 by Gauss-Jordan with partial pivoting and resync the
    /// basic values from the nonbasic ones.
    fn refactorize(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut b = Mat::<S>::zeros(m, m);
        for (r, &k) in self.basis.iter().enumerate() {
            for (i, v) in &self.cols[k] {
                b.set(*i, r, v.clone());
            }
        }
        let mut inv = Mat::<S>::identity(m);
        for col in 0..m {
            // partial pivot
            let mut piv = col;
            let mut best = b.get(col, col).clone().abs();
            for r in (col + 1)..m {
                let v = b.get(r, col).clone().abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best <= S::pivot_tol() {
                return Err(LpError::NumericalFailure("singular basis".into()));
            }
            if piv != col {
                for c in 0..m {
                    let tmp = b.get(col, c).clone();
                    b.set(col, c, b.get(piv, c).clone());
                    b.set(piv, c, tmp);
                    let tmp = inv.get(col, c).clone();
                    inv.set(col, c, inv.get(piv, c).clone());
                    inv.set(piv, c, tmp);
                }
            }
            let d = b.get(col, col).clone();
            let dinv = S::one() / d;
            for c in 0..m {
                let v = b.get(col, c).clone() * dinv.clone();
                b.set(col, c, v);
                let v = inv.get(col, c).clone() * dinv.clone();
                inv.set(col, c, v);
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = b.get(r, col).clone();
                if f.is_zero() {
                    continue;
                }
                for c in 0..m {
                    let v = b.get(r, c).clone() - f.clone() * b.get(col, c).clone();
                    b.set(r, c, v);
                    let v = inv.get(r, c).clone() - f.clone() * inv.get(col, c).clone();
                    inv.set(r, c, v);
                }
            }
        }
        // note: rows of inv correspond to basis positions (B^-1 row r, world col c)
        self.binv = inv;

        // resync basic values
        let mut residual = self.rhs.clone();
        for j in 0..self.n_total {
            if matches!(self.state[j], VarState::Basic(_)) || self.x[j].is_zero() {
                continue;
            }
            for (i, v) in &self.cols[j] {
                residual[*i] = residual[*i].clone() - v.clone() * self.x[j].clone();
            }
        }
        for r in 0..m {
            let mut val = S::zero();
            for i in 0..m {
                let c = self.binv.get(r, i);
                if !c.is_zero() {
                    val = val + c.clone() * residual[i].clone();
                }
            }
            let k = self.basis[r];
            self.x[k] = val;
        }
        Ok(())
    }
}
