//! Driving loops for the dual dynamic programming variants.
//!
//! One generic loop serves all selection strategies: explorative with a
//! periodic reset, the faster single-check variant (root subproblem pinned
//! at x0, terminate whenever the best candidate level reaches 1), the
//! upper/lower-bound variant (gap-driven level assignment plus an upper
//! model), and uniform random sampling. Stage subproblems go through the
//! `StageOracle` trait so exact LP stages and inexact saddle-point stages
//! share the same loop.

use crate::cuts::LowerModel;
use crate::error::EngineError;
use crate::lp::LpStatus;
use crate::model::StationaryInstance;
use crate::saturation::SaturationMap;
use crate::upper::UpperModel;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Eddp,
    EddpFast,
    EddpLu,
    Sddp,
}

impl Algo {
    pub fn parse(s: &str) -> Option<Algo> {
        match s {
            "eddp" => Some(Algo::Eddp),
            "eddp-fast" | "eddp_fast" => Some(Algo::EddpFast),
            "eddp-lu" | "eddp_lu" => Some(Algo::EddpLu),
            "sddp" => Some(Algo::Sddp),
            _ => None,
        }
    }

    fn anchors_root_at_x0(&self) -> bool {
        matches!(self, Algo::EddpFast | Algo::EddpLu)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub algo: Algo,
    /// Effective planning horizon T >= 2 (number of saturation levels).
    pub t_horizon: usize,
    /// Cell parameter of the saturation map, in (0, D).
    pub epsilon: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Worker threads for the per-iteration scenario solves; 0 = default.
    pub workers: usize,
    pub no_reset: bool,
    /// Estimate of (M + M_lower) for the accuracy schedule. None switches
    /// to the running heuristic M_h + lambda * max cut gradient + M_h.
    pub lipschitz_sum: Option<f64>,
    /// Record a rollout upper estimate each iteration: (horizon, rollouts).
    pub record_policy: Option<(usize, usize)>,
    /// Slope cap for the upper model (eddp-lu); None = 2 M_h / (1-lambda).
    pub upper_slope_cap: Option<f64>,
    /// Suppress wall-clock fields so traces compare byte-for-byte.
    pub collect_timing: bool,
    /// Per-subproblem iteration budget for inexact (saddle) stage solves.
    /// None applies the analysis budget capped at a practical default.
    pub pdsa_budget_override: Option<usize>,
}

impl RunConfig {
    pub fn new(algo: Algo) -> Self {
        RunConfig {
            algo,
            t_horizon: 6,
            epsilon: 0.05,
            max_iters: 10_000,
            seed: 0,
            workers: 1,
            no_reset: false,
            lipschitz_sum: None,
            record_policy: None,
            upper_slope_cap: None,
            collect_timing: true,
            pdsa_budget_override: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub lb_root: f64,
    pub ub_model: Option<f64>,
    pub ub_policy: Option<f64>,
    pub t_star: Option<usize>,
    pub selected: Option<usize>,
    pub wall_ms: Option<f64>,
    pub cuts_total: usize,
    pub eps_c_max: Option<f64>,
    pub pdsa_iters: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// Every candidate reached the lowest distinguishable level.
    SaturationConverged,
    MaxIters,
    /// SDDP stall rule: no lower-bound progress for 50 iterations.
    Stalled,
}

#[derive(Debug)]
pub struct RunReport {
    pub status: RunStatus,
    /// Last root-subproblem primal solution (feasible for X(x0, xi_1)).
    pub x_final: Vec<f64>,
    pub lb_root: f64,
    pub records: Vec<IterationRecord>,
    pub lower: LowerModel,
    pub upper: Option<UpperModel>,
    /// Accuracy schedule [eps_0 ... eps_{T-1}] at the final Lipschitz value.
    pub epsilon_schedule: Vec<f64>,
    pub iterations: usize,
    /// Cumulative saturation potential drop after each iteration.
    pub potential_trace: Vec<usize>,
    /// Final saturation map (absent for sampled selection).
    pub saturation: Option<SaturationMap>,
}

/// Result of one stage subproblem solve.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub stage_cost: f64,
    pub subgradient: Vec<f64>,
    /// Constraint violation certificate (0 for exact solves).
    pub eps_c: f64,
    /// Slack the model should subtract from a cut built on this solve
    /// (nonzero only in slack-corrected inexact mode).
    pub cut_slack: f64,
    pub inner_iters: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveCtx {
    pub iteration: usize,
    pub scenario: usize,
    pub master_seed: u64,
}

/// Stage subproblem backend: exact LP stages or inexact saddle stages.
pub trait StageOracle: Sync {
    fn instance(&self) -> &StationaryInstance;

    /// Solve `min h(x, c_i) + lambda V_lower(x)` over X(anchor, xi_i).
    fn solve_stage(
        &self,
        scenario: usize,
        anchor: &[f64],
        lower: &LowerModel,
        ctx: SolveCtx,
    ) -> Result<StageOutcome, EngineError>;

    /// Solve `min h(x, c_i) + lambda V_upper(x)` over X(anchor, xi_i),
    /// returning the optimal value.
    fn solve_upper_stage(
        &self,
        scenario: usize,
        anchor: &[f64],
        upper: &UpperModel,
    ) -> Result<f64, EngineError>;

    fn init_lower_model(&self) -> Result<LowerModel, EngineError>;

    fn init_upper_model(&self, slope_cap: f64) -> Result<UpperModel, EngineError>;

    /// M_h (exact for polyhedral costs, an estimate for hierarchical ones).
    fn cost_lipschitz(&self) -> f64;
}

/// Exact LP backend over a stationary instance.
pub struct LpStageOracle<'a> {
    inst: &'a StationaryInstance,
}

impl<'a> LpStageOracle<'a> {
    pub fn new(inst: &'a StationaryInstance) -> Self {
        LpStageOracle { inst }
    }
}

impl StageOracle for LpStageOracle<'_> {
    fn instance(&self) -> &StationaryInstance {
        self.inst
    }

    fn solve_stage(
        &self,
        scenario: usize,
        anchor: &[f64],
        lower: &LowerModel,
        _ctx: SolveCtx,
    ) -> Result<StageOutcome, EngineError> {
        let s = crate::stage::solve_stage_lp(self.inst, scenario, anchor, Some(lower))?;
        match s.status {
            LpStatus::Optimal => Ok(StageOutcome {
                x: s.x,
                value: s.value,
                stage_cost: s.stage_cost,
                subgradient: s.subgradient,
                eps_c: 0.0,
                cut_slack: 0.0,
                inner_iters: s.lp_iterations,
            }),
            _ => Err(EngineError::SubproblemInfeasible { scenario }),
        }
    }

    fn solve_upper_stage(
        &self,
        scenario: usize,
        anchor: &[f64],
        upper: &UpperModel,
    ) -> Result<f64, EngineError> {
        Ok(crate::stage::solve_upper_stage_lp(self.inst, scenario, anchor, upper)?)
    }

    fn init_lower_model(&self) -> Result<LowerModel, EngineError> {
        Ok(crate::cuts::init_lower(self.inst)?)
    }

    fn init_upper_model(&self, slope_cap: f64) -> Result<UpperModel, EngineError> {
        Ok(crate::upper::init_upper(self.inst, slope_cap))
    }

    fn cost_lipschitz(&self) -> f64 {
        self.inst.cost_lipschitz()
    }
}

/// Accuracy schedule eps_0..eps_{T-1}:
/// `eps_{T-1} = M_h D / (1 - lambda)` and
/// `eps_t = (lip_sum * epsilon + extra) + lambda * eps_{t+1}`.
/// `extra` carries the (1 + M_D) eps_lo increment of inexact solves.
pub fn epsilon_schedule(
    t_horizon: usize,
    lambda: f64,
    mh_d: f64,
    lip_term: f64,
    extra: f64,
) -> Vec<f64> {
    assert!(t_horizon >= 2);
    let mut eps = vec![0.0; t_horizon];
    eps[t_horizon - 1] = mh_d / (1.0 - lambda);
    for t in (0..t_horizon - 1).rev() {
        eps[t] = lip_term + extra + lambda * eps[t + 1];
    }
    eps
}

/// Worst-case iteration caps from the convergence analysis; `None` means
/// no deterministic cap (sampled selection).
pub fn iteration_cap(algo: Algo, t_horizon: usize, d: f64, n: usize, epsilon: f64) -> Option<f64> {
    let cells = (d * (n as f64).sqrt() / epsilon + 1.0).powi(n as i32);
    let t = t_horizon as f64;
    match algo {
        Algo::Eddp => Some(t * (t - 1.0) * cells),
        Algo::EddpFast | Algo::EddpLu => Some(2.0 * (t - 1.0) * cells + t + 1.0),
        Algo::Sddp => None,
    }
}

struct Loop<'a> {
    oracle: &'a dyn StageOracle,
    cfg: &'a RunConfig,
    lower: LowerModel,
    upper: Option<UpperModel>,
    sat: Option<SaturationMap>,
    pool: Option<rayon::ThreadPool>,
}

impl Loop<'_> {
    fn solve_batch(
        &self,
        anchors: &[(usize, Vec<f64>)],
        iteration: usize,
    ) -> Result<Vec<StageOutcome>, EngineError> {
        let lower = &self.lower;
        let oracle = self.oracle;
        let seed = self.cfg.seed;
        let work = |(scenario, anchor): &(usize, Vec<f64>)| {
            oracle.solve_stage(
                *scenario,
                anchor,
                lower,
                SolveCtx { iteration, scenario: *scenario, master_seed: seed },
            )
        };
        match &self.pool {
            Some(pool) => pool.install(|| anchors.par_iter().map(work).collect()),
            None => anchors.iter().map(work).collect(),
        }
    }
}

/// Run the configured algorithm with exact LP stage solves.
pub fn run(inst: &StationaryInstance, cfg: &RunConfig) -> Result<RunReport, EngineError> {
    run_with_oracle(&LpStageOracle::new(inst), cfg)
}

pub fn run_with_oracle(
    oracle: &dyn StageOracle,
    cfg: &RunConfig,
) -> Result<RunReport, EngineError> {
    let inst = oracle.instance();
    let n = inst.n;
    let n_scen = inst.num_scenarios();
    let d = inst.domain_length();
    let m_h = oracle.cost_lipschitz();
    if cfg.t_horizon < 2 {
        return Err(EngineError::Config("T must be at least 2".into()));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon < d) {
        return Err(EngineError::Config(format!(
            "epsilon {} outside (0, D) with D = {d}",
            cfg.epsilon
        )));
    }
    if cfg.max_iters == 0 {
        return Err(EngineError::Config("max_iters must be positive".into()));
    }
    if cfg.no_reset && !cfg.algo.anchors_root_at_x0() {
        return Err(EngineError::Config("no-reset applies to eddp-fast/eddp-lu only".into()));
    }

    let lower = oracle.init_lower_model()?;
    let slope_cap = cfg
        .upper_slope_cap
        .unwrap_or_else(|| UpperModel::default_slope_cap(m_h, inst.lambda));
    let upper = if cfg.algo == Algo::EddpLu {
        Some(oracle.init_upper_model(slope_cap)?)
    } else {
        None
    };
    let sat = if cfg.algo == Algo::Sddp {
        None
    } else {
        Some(SaturationMap::new(cfg.epsilon, cfg.t_horizon, &inst.lower, &inst.upper)?)
    };

    // static Lipschitz sum for gap-based level assignment; the running
    // heuristic only feeds the reported schedule
    let static_lip = cfg
        .lipschitz_sum
        .unwrap_or_else(|| 2.0 * (m_h + inst.lambda * slope_cap));
    if cfg.algo == Algo::EddpLu {
        let sched = epsilon_schedule(
            cfg.t_horizon,
            inst.lambda,
            m_h * d,
            static_lip * cfg.epsilon,
            0.0,
        );
        if sched.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EngineError::Config(
                "accuracy schedule is not increasing; shrink epsilon or lipschitz_sum".into(),
            ));
        }
    }

    let pool = match cfg.workers {
        0 | 1 => None,
        k => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| EngineError::Config(format!("thread pool: {e}")))?,
        ),
    };

    let cap = iteration_cap(cfg.algo, cfg.t_horizon, d, n, cfg.epsilon);
    let mut state = Loop { oracle, cfg, lower, upper, sat, pool };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x0 = inst.x0.clone();
    let mut x_prev = x0.clone();
    let mut x_prev_nr = x0.clone();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut potential_trace: Vec<usize> = Vec::new();
    let mut root_solution = x0.clone();
    let mut best_lb = f64::NEG_INFINITY;
    let mut stall_count = 0usize;
    let mut status = RunStatus::MaxIters;

    for k in 1..=cfg.max_iters {
        if let Some(c) = cap {
            if k as f64 > c {
                return Err(EngineError::IterationOverflow { ran: k, cap: c as usize });
            }
        }
        let iter_start = Instant::now();

        // candidate subproblems i = 0..N
        let mut anchors: Vec<(usize, Vec<f64>)> = Vec::with_capacity(n_scen + 1);
        let root_anchor = if cfg.algo.anchors_root_at_x0() { x0.clone() } else { x_prev.clone() };
        anchors.push((0, root_anchor));
        for i in 1..=n_scen {
            anchors.push((i, x_prev.clone()));
        }
        if cfg.no_reset {
            for i in 1..=n_scen {
                anchors.push((i, x_prev_nr.clone()));
            }
        }
        let mut sols = state.solve_batch(&anchors, k)?;
        let nr_sols: Vec<StageOutcome> =
            if cfg.no_reset { sols.split_off(n_scen + 1) } else { Vec::new() };

        // root lower bound on F*: scenario-0 subproblem anchored at x0
        let root_outcome: StageOutcome = if cfg.algo.anchors_root_at_x0() {
            sols[0].clone()
        } else if x_prev == x0 {
            sols[0].clone()
        } else {
            state.oracle.solve_stage(
                0,
                &x0,
                &state.lower,
                SolveCtx { iteration: k, scenario: 0, master_seed: cfg.seed },
            )?
        };
        let lb_root = root_outcome.value;
        root_solution = root_outcome.x.clone();

        let eps_c_max =
            sols.iter().map(|s| s.eps_c).fold(0.0f64, f64::max).max(
                nr_sols.iter().map(|s| s.eps_c).fold(0.0, f64::max),
            );
        let pdsa_iters: usize =
            sols.iter().map(|s| s.inner_iters).sum::<usize>()
                + nr_sols.iter().map(|s| s.inner_iters).sum::<usize>();
        let is_inexact = eps_c_max > 0.0 || sols.iter().any(|s| s.inner_iters > 0);

        // gap-driven level assignment (upper/lower variant)
        if let (Some(upper_model), Some(sat)) = (&state.upper, &mut state.sat) {
            let sched = epsilon_schedule(
                cfg.t_horizon,
                inst.lambda,
                m_h * d,
                static_lip * cfg.epsilon,
                0.0,
            );
            for s in &sols {
                let x = inst.clamp_into_box(&s.x)?;
                let gap = upper_model.evaluate_upper(&x)? - state.lower.evaluate(&x);
                sat.assign_gap_level(&x, gap.max(0.0), &sched)?;
            }
        }

        // most distinguishable level over the candidates
        let candidate_points: Vec<Vec<f64>> = sols
            .iter()
            .map(|s| inst.clamp_into_box(&s.x))
            .collect::<Result<_, _>>()?;
        let (t_star, best_candidate) = match &state.sat {
            Some(sat) => {
                let (idx, level) = sat.select_most_distinguishable(&candidate_points)?;
                (Some(level), idx)
            }
            None => (None, 0),
        };

        // termination is decided before this iteration touches the models
        let terminate = match cfg.algo {
            Algo::Eddp => t_star.unwrap() <= 1 && k % cfg.t_horizon == 1,
            Algo::EddpFast | Algo::EddpLu => t_star.unwrap() <= 1,
            Algo::Sddp => false,
        };

        let mut record = IterationRecord {
            iter: k,
            lb_root,
            ub_model: None,
            ub_policy: None,
            t_star,
            selected: None,
            wall_ms: None,
            cuts_total: state.lower.num_cuts(),
            eps_c_max: if is_inexact { Some(eps_c_max) } else { None },
            pdsa_iters: if is_inexact { Some(pdsa_iters) } else { None },
        };

        if terminate {
            record.wall_ms =
                cfg.collect_timing.then(|| iter_start.elapsed().as_secs_f64() * 1e3);
            records.push(record);
            potential_trace.push(state.sat.as_ref().map_or(0, |s| s.potential_drop()));
            status = RunStatus::SaturationConverged;
            break;
        }

        // cut update at the anchor (scenarios 1..=N)
        let values: Vec<f64> = sols[1..=n_scen].iter().map(|s| s.value).collect();
        let grads: Vec<Vec<f64>> =
            sols[1..=n_scen].iter().map(|s| s.subgradient.clone()).collect();
        let slack = sols[1..=n_scen].iter().map(|s| s.cut_slack).fold(0.0f64, f64::max);
        state.lower.add_averaged_cut(&values, &grads, &x_prev, slack, k)?;
        record.cuts_total = state.lower.num_cuts();

        // upper model update and root upper bound
        if state.upper.is_some() {
            let mut vhats = Vec::with_capacity(n_scen);
            for i in 1..=n_scen {
                let v =
                    state
                        .oracle
                        .solve_upper_stage(i, &x_prev, state.upper.as_ref().unwrap())?;
                vhats.push(v);
            }
            let upper_model = state.upper.as_mut().unwrap();
            for (i, v) in vhats.into_iter().enumerate() {
                upper_model.add_upper_point(i + 1, &x_prev, v);
            }
            let ub = state.oracle.solve_upper_stage(0, &x0, state.upper.as_ref().unwrap())?;
            record.ub_model = Some(ub);
        }

        if let Some((h, rollouts)) = cfg.record_policy {
            let est = evaluate_policy_with(
                state.oracle,
                &state.lower,
                h,
                rollouts,
                cfg.seed ^ (k as u64).wrapping_mul(0x9e3779b97f4a7c15),
            )?;
            record.ub_policy = Some(est);
        }

        // next search point
        let selected: usize;
        match cfg.algo {
            Algo::Eddp => {
                if (k + 1) % cfg.t_horizon == 1 {
                    selected = 0;
                    x_prev = x0.clone();
                } else {
                    selected = best_candidate;
                    x_prev = candidate_points[best_candidate].clone();
                }
            }
            Algo::EddpFast | Algo::EddpLu => {
                if cfg.no_reset {
                    // Selection pool: all regular candidates plus the
                    // no-reset chain's candidates. The pool must contain
                    // the regular candidates, or their levels pin t* while
                    // never being visited and the run livelocks.
                    let sat = state.sat.as_ref().unwrap();
                    let mut pool_pts: Vec<Vec<f64>> = candidate_points.clone();
                    for s in &nr_sols {
                        pool_pts.push(inst.clamp_into_box(&s.x)?);
                    }
                    let (idx, _) = sat.select_most_distinguishable(&pool_pts)?;
                    selected = idx;
                    x_prev = pool_pts[idx].clone();
                    let nr_pts: Vec<Vec<f64>> = pool_pts[n_scen + 1..].to_vec();
                    let (nr_idx, _) = sat.select_most_distinguishable(&nr_pts)?;
                    x_prev_nr = nr_pts[nr_idx].clone();
                } else {
                    selected = best_candidate;
                    x_prev = candidate_points[best_candidate].clone();
                }
            }
            Algo::Sddp => {
                let i = rng.gen_range(0..=n_scen);
                selected = i;
                x_prev = if (k + 1) % cfg.t_horizon == 1 {
                    x0.clone()
                } else {
                    candidate_points[i].clone()
                };
            }
        }
        record.selected = Some(selected);

        // lower the level of the anchor cell: S(x^{k-1}) <- min(., t*-1)
        if let (Some(sat), Some(t)) = (&mut state.sat, t_star) {
            let old_anchor = &anchors[1].1; // x^{k-1} used by scenarios 1..N
            sat.lower_level(old_anchor, t.saturating_sub(1))?;
        }

        // SDDP stall rule
        if cfg.algo == Algo::Sddp {
            if lb_root > best_lb + 1e-8 * (1.0 + lb_root.abs()) {
                best_lb = lb_root;
                stall_count = 0;
            } else {
                stall_count += 1;
                if stall_count >= 50 {
                    record.wall_ms =
                        cfg.collect_timing.then(|| iter_start.elapsed().as_secs_f64() * 1e3);
                    records.push(record);
                    potential_trace.push(0);
                    status = RunStatus::Stalled;
                    break;
                }
            }
        }

        record.wall_ms = cfg.collect_timing.then(|| iter_start.elapsed().as_secs_f64() * 1e3);
        records.push(record);
        potential_trace.push(state.sat.as_ref().map_or(0, |s| s.potential_drop()));
    }

    let final_lip = cfg.lipschitz_sum.unwrap_or_else(|| {
        2.0 * m_h + inst.lambda * state.lower.max_gradient_norm()
    });
    let schedule =
        epsilon_schedule(cfg.t_horizon, inst.lambda, m_h * d, final_lip * cfg.epsilon, 0.0);
    let lb_final = records.last().map_or(f64::NEG_INFINITY, |r| r.lb_root);
    Ok(RunReport {
        status,
        x_final: root_solution,
        lb_root: lb_final,
        records,
        lower: state.lower,
        upper: state.upper,
        epsilon_schedule: schedule,
        iterations: potential_trace.len(),
        potential_trace,
        saturation: state.sat,
    })
}

/// Statistical upper estimate of F at x0: mean discounted cost of the
/// greedy policy over sampled rollouts, plus the truncation tail
/// `lambda^H (v0 + M_h D / (1 - lambda))`.
pub fn evaluate_policy(
    inst: &StationaryInstance,
    lower: &LowerModel,
    horizon: usize,
    rollouts: usize,
    seed: u64,
) -> Result<f64, EngineError> {
    evaluate_policy_with(&LpStageOracle::new(inst), lower, horizon, rollouts, seed)
}

pub fn evaluate_policy_with(
    oracle: &dyn StageOracle,
    lower: &LowerModel,
    horizon: usize,
    rollouts: usize,
    seed: u64,
) -> Result<f64, EngineError> {
    assert!(horizon >= 1 && rollouts >= 1);
    let inst = oracle.instance();
    let n_scen = inst.num_scenarios();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..rollouts {
        let mut x = inst.x0.clone();
        let mut disc = 1.0;
        for t in 1..=horizon {
            let scenario = if t == 1 { 0 } else { rng.gen_range(1..=n_scen) };
            let s = oracle.solve_stage(
                scenario,
                &x,
                lower,
                SolveCtx { iteration: t, scenario, master_seed: seed },
            )?;
            total += disc * s.stage_cost;
            disc *= inst.lambda;
            x = inst.clamp_into_box(&s.x)?;
        }
    }
    let mean = total / rollouts as f64;
    let tail = inst.lambda.powi(horizon as i32)
        * (lower.v0 + oracle.cost_lipschitz() * inst.domain_length() / (1.0 - inst.lambda));
    Ok(mean + tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::chain_instance;

    #[test]
    fn schedule_hand_values() {
        // lambda = 0.5, M_h D = 1, (M + M_lower) eps = 0.1, T = 3
        let s = epsilon_schedule(3, 0.5, 1.0, 0.1, 0.0);
        assert!((s[2] - 2.0).abs() < 1e-12);
        assert!((s[1] - 1.1).abs() < 1e-12);
        assert!((s[0] - 0.65).abs() < 1e-12);
    }

    #[test]
    fn schedule_zero_increment_is_pure_decay() {
        let s = epsilon_schedule(5, 0.7, 2.0, 0.0, 0.0);
        let top = 2.0 / 0.3;
        for (t, v) in s.iter().enumerate() {
            let expect = 0.7f64.powi((s.len() - 1 - t) as i32) * top;
            assert!((v - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn schedule_t2_base_case() {
        let s = epsilon_schedule(2, 0.5, 1.0, 0.1, 0.0);
        assert_eq!(s.len(), 2);
        assert!((s[1] - 2.0).abs() < 1e-12);
        assert!((s[0] - (0.1 + 0.5 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn eddp_chain_converges_to_analytic_optimum() {
        let inst = chain_instance();
        let mut cfg = RunConfig::new(Algo::Eddp);
        cfg.t_horizon = 6;
        cfg.epsilon = 0.05;
        let report = run(&inst, &cfg).unwrap();
        assert_eq!(report.status, RunStatus::SaturationConverged);
        let eps0 = report.epsilon_schedule[0];
        assert!(
            (2.0 / 3.0 - report.lb_root) <= eps0 + 1e-9,
            "lb {} eps0 {eps0}",
            report.lb_root
        );
        assert!(report.lb_root <= 2.0 / 3.0 + 1e-7);
        // lb_root never decreases in exact mode
        for w in report.records.windows(2) {
            assert!(w[1].lb_root >= w[0].lb_root - 1e-9);
        }
    }

    #[test]
    fn zero_cost_terminates_quickly() {
        let mut inst = chain_instance();
        inst.scenario0.cost = crate::model::PiecewiseLinearCost::constant(1, 0.0);
        inst.scenarios[0].cost = crate::model::PiecewiseLinearCost::constant(1, 0.0);
        let mut cfg = RunConfig::new(Algo::Eddp);
        cfg.t_horizon = 4;
        cfg.epsilon = 0.3;
        let report = run(&inst, &cfg).unwrap();
        assert!(report.lb_root.abs() < 1e-9);
        assert_eq!(report.status, RunStatus::SaturationConverged);
    }

    #[test]
    fn fast_variant_converges_and_counts_match_cap() {
        let inst = chain_instance();
        let mut cfg = RunConfig::new(Algo::EddpFast);
        cfg.t_horizon = 6;
        cfg.epsilon = 0.05;
        let report = run(&inst, &cfg).unwrap();
        assert_eq!(report.status, RunStatus::SaturationConverged);
        assert!((2.0 / 3.0 - report.lb_root) <= report.epsilon_schedule[0] + 1e-9);
        let cap = iteration_cap(Algo::EddpFast, 6, 1.0, 1, 0.05).unwrap();
        assert!((report.iterations as f64) <= cap);
    }

    #[test]
    fn sddp_chain_approaches_optimum() {
        let inst = chain_instance();
        let mut cfg = RunConfig::new(Algo::Sddp);
        cfg.t_horizon = 8;
        cfg.epsilon = 0.05;
        cfg.max_iters = 500;
        cfg.seed = 42;
        let report = run(&inst, &cfg).unwrap();
        assert!((report.lb_root - 2.0 / 3.0).abs() < 1e-3, "lb {}", report.lb_root);
    }

    #[test]
    fn sddp_deterministic_given_seed() {
        let inst = chain_instance();
        let mut cfg = RunConfig::new(Algo::Sddp);
        cfg.t_horizon = 4;
        cfg.max_iters = 60;
        cfg.seed = 7;
        cfg.collect_timing = false;
        let a = run(&inst, &cfg).unwrap();
        let b = run(&inst, &cfg).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.lb_root.to_bits(), rb.lb_root.to_bits());
            assert_eq!(ra.selected, rb.selected);
        }
    }

    #[test]
    fn policy_evaluation_chain_analytic() {
        let inst = chain_instance();
        let mut cfg = RunConfig::new(Algo::EddpFast);
        cfg.t_horizon = 8;
        cfg.epsilon = 0.02;
        let report = run(&inst, &cfg).unwrap();
        let est = evaluate_policy(&inst, &report.lower, 30, 3, 1).unwrap();
        let tail = 2.0 * 0.5f64.powi(30);
        assert!((est - 2.0 / 3.0).abs() <= tail + 1e-9, "est {est}");
        // reproducible
        let est2 = evaluate_policy(&inst, &report.lower, 30, 3, 1).unwrap();
        assert_eq!(est.to_bits(), est2.to_bits());
    }

    #[test]
    fn config_validation() {
        let inst = chain_instance();
        let mut cfg = RunConfig::new(Algo::Eddp);
        cfg.t_horizon = 1;
        assert!(matches!(run(&inst, &cfg), Err(EngineError::Config(_))));
        let mut cfg = RunConfig::new(Algo::Eddp);
        cfg.epsilon = 2.0;
        assert!(matches!(run(&inst, &cfg), Err(EngineError::Config(_))));
        let mut cfg = RunConfig::new(Algo::Sddp);
        cfg.no_reset = true;
        assert!(matches!(run(&inst, &cfg), Err(EngineError::Config(_))));
    }

    #[test]
    fn lu_variant_gap_closes_on_chain() {
        let inst = chain_instance();
        let mut cfg = RunConfig::new(Algo::EddpLu);
        cfg.t_horizon = 6;
        cfg.epsilon = 0.05;
        cfg.max_iters = 400;
        let report = run(&inst, &cfg).unwrap();
        assert_eq!(report.status, RunStatus::SaturationConverged);
        let last = report.records.last().unwrap();
        let ub = last.ub_model.or_else(|| {
            report.records.iter().rev().find_map(|r| r.ub_model)
        });
        if let Some(ub) = ub {
            assert!(ub - last.lb_root >= -1e-8);
            assert!(ub - last.lb_root <= report.epsilon_schedule[0] + 1e-6,
                "gap {} eps0 {}", ub - last.lb_root, report.epsilon_schedule[0]);
        }
        // gap at the root is nonincreasing once both models are active
        let ubs: Vec<f64> = report.records.iter().filter_map(|r| r.ub_model).collect();
        let lbs: Vec<f64> = report
            .records
            .iter()
            .filter(|r| r.ub_model.is_some())
            .map(|r| r.lb_root)
            .collect();
        for w in ubs.iter().zip(&lbs).collect::<Vec<_>>().windows(2) {
            let g0 = w[0].0 - w[0].1;
            let g1 = w[1].0 - w[1].1;
            assert!(g1 <= g0 + 1e-7, "gap grew: {g0} -> {g1}");
        }
    }

    #[test]
    fn no_reset_converges_too() {
        let inst = chain_instance();
        let mut cfg = RunConfig::new(Algo::EddpFast);
        cfg.t_horizon = 6;
        cfg.epsilon = 0.05;
        cfg.no_reset = true;
        let report = run(&inst, &cfg).unwrap();
        assert_eq!(report.status, RunStatus::SaturationConverged);
        assert!((2.0 / 3.0 - report.lb_root) <= report.epsilon_schedule[0] + 1e-9);
    }

    #[test]
    fn schedule_inexact_increment() {
        // extra shifts every pre-terminal level by its geometric weight
        let base = epsilon_schedule(4, 0.5, 1.0, 0.1, 0.0);
        let inexact = epsilon_schedule(4, 0.5, 1.0, 0.1, 0.2);
        assert_eq!(base[3], inexact[3]);
        for t in (0..3).rev() {
            let expect = 0.1 + 0.2 + 0.5 * inexact[t + 1];
            assert!((inexact[t] - expect).abs() < 1e-12);
        }
        assert!(inexact[0] > base[0]);
    }

    #[test]
    fn policy_recording_in_trace() {
        let inst = chain_instance();
        let mut cfg = RunConfig::new(Algo::EddpFast);
        cfg.t_horizon = 5;
        cfg.epsilon = 0.1;
        cfg.record_policy = Some((20, 2));
        let report = run(&inst, &cfg).unwrap();
        let with_policy: Vec<&IterationRecord> =
            report.records.iter().filter(|r| r.ub_policy.is_some()).collect();
        assert!(!with_policy.is_empty());
        for r in with_policy {
            assert!(r.ub_policy.unwrap() >= r.lb_root - 1e-6);
        }
    }
}
