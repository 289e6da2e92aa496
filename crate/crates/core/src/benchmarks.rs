//! Instance generators used by the test suites and the CLI.
//!
//! All randomness flows through `ChaCha8` keyed by a caller-supplied 64-bit
//! seed, so instances regenerate bit-identically anywhere.

use crate::linalg::Mat;
use crate::model::{
    HierarchicalInstance, LowerStage, PiecewiseLinearCost, RowSense, Scenario,
    StationaryInstance, TwoStageLowerLevel,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The canonical 1-D test instance: coupling `x >= 0.5 x_prev`, box [0,1],
/// x0 = 1, h(x) = x, lambda = 0.5. Its optimum is analytic:
/// V(x) = 2x/3 and F* = 2/3.
pub fn chain_instance() -> StationaryInstance {
    let scen = || {
        Scenario::structural(
            Mat::from_rows(vec![vec![1.0]]),
            Mat::from_rows(vec![vec![0.5]]),
            vec![0.0],
            vec![RowSense::Geq],
            PiecewiseLinearCost::affine(vec![1.0], 0.0),
        )
    };
    StationaryInstance {
        n: 1,
        lower: vec![0.0],
        upper: vec![1.0],
        x0: vec![1.0],
        scenario0: scen(),
        scenarios: vec![scen()],
        lambda: 0.5,
    }
}

/// Random small instances with guaranteed relatively complete recourse:
/// per-coordinate couplings `x_j >= alpha_j x_prev_j - s_ij` on a box
/// `[0, u_j]`, two-piece positive costs. Dimensions n <= 2, scenarios
/// N <= 3; the discount shrinks with N so truncated oracles stay sharp.
pub fn gen_small_random(seed: u64) -> StationaryInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1 + (rng.gen::<u64>() % 2) as usize;
    let num_scen = 1 + (rng.gen::<u64>() % 3) as usize;
    let lambda = match num_scen {
        1 => rng.gen_range(0.30..0.60),
        2 => rng.gen_range(0.30..0.55),
        _ => rng.gen_range(0.30..0.45),
    };
    let upper: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let x0: Vec<f64> = upper.iter().map(|u| rng.gen_range(0.0..*u)).collect();

    let mk_scenario = |rng: &mut ChaCha8Rng| {
        let mut a = Mat::zeros(n, n);
        let mut b = Mat::zeros(n, n);
        let mut rhs = Vec::with_capacity(n);
        for j in 0..n {
            a.set(j, j, 1.0);
            b.set(j, j, rng.gen_range(0.3..0.7));
            rhs.push(-rng.gen_range(0.0..0.3 * upper[j]));
        }
        let pieces = (0..2)
            .map(|_| {
                let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..1.0)).collect();
                (g, rng.gen_range(1.0..2.0))
            })
            .collect();
        Scenario::structural(
            a,
            b,
            rhs,
            vec![RowSense::Geq; n],
            PiecewiseLinearCost { pieces },
        )
    };

    let scenario0 = mk_scenario(&mut rng);
    let scenarios = (0..num_scen).map(|_| mk_scenario(&mut rng)).collect();
    StationaryInstance { n, lower: vec![0.0; n], upper, x0, scenario0, scenarios, lambda }
}

/// Synthetic reservoir planning analogue. The decision vector stacks
/// reservoir levels, thermal generation, releases and spills; levels carry
/// the coupling. Spill capacity covers the whole box plus the largest
/// inflow and thermal can serve demand alone, so every state has recourse.
#[derive(Debug, Clone)]
pub struct ReservoirParams {
    pub num_reservoirs: usize,
    pub num_scenarios: usize,
    pub capacity: f64,
    pub max_inflow: f64,
    pub demand: f64,
    pub thermal_cost: f64,
    pub thermal_cap: f64,
    pub turbine_efficiency: f64,
    pub lambda: f64,
}

impl Default for ReservoirParams {
    fn default() -> Self {
        ReservoirParams {
            num_reservoirs: 1,
            num_scenarios: 10,
            capacity: 100.0,
            max_inflow: 40.0,
            demand: 50.0,
            thermal_cost: 2.0,
            thermal_cap: 100.0,
            turbine_efficiency: 1.0,
            lambda: 0.95,
        }
    }
}

pub fn gen_reservoir(p: &ReservoirParams, seed: u64) -> StationaryInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nr = p.num_reservoirs;
    let n = 3 * nr + 1; // levels, thermal, releases, spills
    let lvl = |j: usize| j;
    let thermal = nr;
    let rel = |j: usize| nr + 1 + j;
    let spill = |j: usize| 2 * nr + 1 + j;

    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for j in 0..nr {
        upper[lvl(j)] = p.capacity;
        upper[rel(j)] = p.capacity;
        upper[spill(j)] = p.capacity + p.max_inflow;
    }
    upper[thermal] = p.thermal_cap;
    let mut x0 = vec![0.0; n];
    for j in 0..nr {
        x0[lvl(j)] = 0.5 * p.capacity;
    }
    let _ = &mut lower;

    let mk = |inflows: &[f64], demand: f64| {
        let m = nr + 1;
        let mut a = Mat::zeros(m, n);
        let mut b = Mat::zeros(m, n);
        let mut rhs = vec![0.0; m];
        let mut senses = vec![RowSense::Equality; m];
        for j in 0..nr {
            // level_j + release_j + spill_j = level_prev_j + inflow_j
            a.set(j, lvl(j), 1.0);
            a.set(j, rel(j), 1.0);
            a.set(j, spill(j), 1.0);
            b.set(j, lvl(j), 1.0);
            rhs[j] = inflows[j];
        }
        // turbine output plus thermal covers demand
        for j in 0..nr {
            a.set(nr, rel(j), p.turbine_efficiency);
        }
        a.set(nr, thermal, 1.0);
        rhs[nr] = demand;
        senses[nr] = RowSense::Geq;
        let mut grad = vec![0.0; n];
        grad[thermal] = p.thermal_cost;
        Scenario::structural(a, b, rhs, senses, PiecewiseLinearCost::affine(grad, 0.0))
    };

    let mean_inflow = vec![0.5 * p.max_inflow; nr];
    let scenario0 = mk(&mean_inflow, p.demand);
    let scenarios = (0..p.num_scenarios)
        .map(|_| {
            let inflows: Vec<f64> =
                (0..nr).map(|_| rng.gen_range(0.0..=p.max_inflow.max(f64::MIN_POSITIVE))).collect();
            let demand = p.demand * rng.gen_range(0.8..1.2);
            mk(&inflows, demand)
        })
        .collect();

    StationaryInstance {
        n,
        lower,
        upper,
        x0,
        scenario0,
        scenarios,
        lambda: p.lambda,
    }
}

/// Economic dispatch with batteries and a marginal-pricing second stage.
#[derive(Debug, Clone)]
pub struct EdParams {
    pub generators: usize,
    pub regions: usize,
    pub battery_hi: f64,
    pub gen_hi: f64,
    pub service_cap: f64,
    pub penalty: f64,
    pub demand_lo: f64,
    pub demand_hi: f64,
    pub service_demand_lo: f64,
    pub service_demand_hi: f64,
    pub top_scenarios: usize,
    pub second_scenarios: usize,
    pub lambda: f64,
}

impl Default for EdParams {
    fn default() -> Self {
        EdParams {
            generators: 10,
            regions: 4,
            battery_hi: 10.0,
            gen_hi: 35.0,
            service_cap: 10.0,
            penalty: 50.0,
            demand_lo: 15.0,
            demand_hi: 40.0,
            service_demand_lo: 2.0,
            service_demand_hi: 8.0,
            top_scenarios: 10,
            second_scenarios: 10,
            lambda: 0.95,
        }
    }
}

/// Build the hierarchical instance.
///
/// Top level per region k: generation plus battery draw covers the sampled
/// demand and the slice reserved for the service market,
/// `sum_{i in I_k} g_i + beta b_prev_k - b_k - sigma_k = d_k`.
/// Lower level: the service dispatcher draws transfers `h_k <= sigma_k`
/// (first stage, cost-free) and a sampled second stage buys slack power at
/// the penalty price to cover `|D_l - (h_1 + sum alpha_k h_k)|`.
pub fn gen_ed(p: &EdParams, seed: u64) -> HierarchicalInstance {
    assert!(p.regions >= 1 && p.generators >= p.regions);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = p.regions;
    let ng = p.generators;
    let n = 2 * r + ng; // b', g, sigma
    let bcol = |k: usize| k;
    let gcol = |i: usize| r + i;
    let scol = |k: usize| r + ng + k;

    // region partition: round-robin
    let region_of: Vec<usize> = (0..ng).map(|i| i % r).collect();
    let beta = rng.gen_range(0.8..=1.0);
    let alpha: Vec<f64> = (0..r).map(|_| rng.gen_range(0.8..=1.0)).collect();
    let gen_cost: Vec<f64> = (0..ng).map(|_| rng.gen_range(1.0..5.0)).collect();

    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for k in 0..r {
        upper[bcol(k)] = p.battery_hi;
        upper[scol(k)] = p.service_cap;
    }
    for i in 0..ng {
        upper[gcol(i)] = p.gen_hi;
    }
    let mut x0 = vec![0.0; n];
    for k in 0..r {
        x0[bcol(k)] = 0.5 * p.battery_hi;
    }
    let _ = &mut lower;

    let mk_top = |demands: &[f64]| {
        let mut a = Mat::zeros(r, n);
        let mut b = Mat::zeros(r, n);
        let mut rhs = vec![0.0; r];
        for k in 0..r {
            for i in 0..ng {
                if region_of[i] == k {
                    a.set(k, gcol(i), 1.0);
                }
            }
            a.set(k, bcol(k), -1.0);
            a.set(k, scol(k), -1.0);
            b.set(k, bcol(k), beta);
            rhs[k] = demands[k];
        }
        let mut grad = vec![0.0; n];
        for i in 0..ng {
            grad[gcol(i)] = gen_cost[i];
        }
        Scenario::structural(
            a,
            b,
            rhs,
            vec![RowSense::Equality; r],
            PiecewiseLinearCost::affine(grad, 0.0),
        )
    };

    let mean_d = vec![0.5 * (p.demand_lo + p.demand_hi); r];
    let scenario0 = mk_top(&mean_d);
    let scenarios = (0..p.top_scenarios)
        .map(|_| {
            let d: Vec<f64> = (0..r).map(|_| rng.gen_range(p.demand_lo..p.demand_hi)).collect();
            mk_top(&d)
        })
        .collect();

    let top = StationaryInstance {
        n,
        lower,
        upper,
        x0,
        scenario0,
        scenarios,
        lambda: p.lambda,
    };

    // lower first stage: one transfer block per second-stage sample,
    // every block drawing from the shared reservation sigma_k - h_k >= 0
    let n2s = p.second_scenarios;
    let n1 = r * n2s;
    let hcol = |l: usize, k: usize| l * r + k;
    let mut a1 = Mat::zeros(n1, n1);
    let mut b1 = Mat::zeros(n1, n);
    for l in 0..n2s {
        for k in 0..r {
            a1.set(hcol(l, k), hcol(l, k), -1.0);
            b1.set(hcol(l, k), scol(k), -1.0);
        }
    }
    let first = LowerStage {
        a: a1,
        b_coupling: b1,
        rhs: vec![0.0; n1],
        senses: vec![RowSense::Geq; n1],
        lower: vec![0.0; n1],
        upper: vec![p.service_cap; n1],
        cost: PiecewiseLinearCost::constant(n1, 0.0),
    };

    // second-stage samples: slack generation covers |D_l - supplied|,
    // sample l coupled to its own transfer block
    let second_samples = (0..n2s)
        .map(|l| {
            let demand = rng.gen_range(p.service_demand_lo..p.service_demand_hi);
            let mut a2 = Mat::zeros(2, 1);
            a2.set(0, 0, 1.0);
            a2.set(1, 0, 1.0);
            let mut b2 = Mat::zeros(2, n1);
            for k in 0..r {
                let w = if k == 0 { 1.0 } else { alpha[k] };
                b2.set(0, hcol(l, k), -w);
                b2.set(1, hcol(l, k), w);
            }
            LowerStage {
                a: a2,
                b_coupling: b2,
                rhs: vec![demand, -demand],
                senses: vec![RowSense::Geq; 2],
                lower: vec![0.0],
                upper: vec![p.service_demand_hi + p.service_cap * (1.0 + r as f64)],
                cost: PiecewiseLinearCost::affine(vec![p.penalty], 0.0),
            }
        })
        .collect();

    HierarchicalInstance {
        top,
        lower: TwoStageLowerLevel { first, second_samples },
        eps_lo: 1.0,
        rho: 0.1,
        m_d_estimate: p.penalty,
    }
}

/// One-shot extensive combined LP of a hierarchical instance, emitted as a
/// deterministic single-scenario instance (deterministic first-stage data,
/// all second-stage blocks inlined, negligible discount). Solving it with
/// the oracle at horizon 1 returns the LP optimum.
pub fn ed_extensive_instance(hinst: &HierarchicalInstance) -> StationaryInstance {
    let top = &hinst.top;
    let first = &hinst.lower.first;
    let n2s = &hinst.lower.second_samples;
    let inv_n2 = 1.0 / n2s.len() as f64;

    let mut lower = top.lower.clone();
    let mut upper = top.upper.clone();
    lower.extend_from_slice(&first.lower);
    upper.extend_from_slice(&first.upper);
    let mut z2_at = Vec::with_capacity(n2s.len());
    for s in n2s {
        z2_at.push(lower.len());
        lower.extend_from_slice(&s.lower);
        upper.extend_from_slice(&s.upper);
    }
    let n_ext = lower.len();
    let x_at = 0usize;
    let z1_at = top.n;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut senses: Vec<RowSense> = Vec::new();
    let sc0 = &top.scenario0;
    for i in 0..sc0.num_rows() {
        let mut row = vec![0.0; n_ext];
        row[x_at..x_at + top.n].copy_from_slice(sc0.a.row(i));
        rows.push(row);
        // previous state fixed at x0
        let shift: f64 =
            sc0.b_coupling.row(i).iter().zip(&top.x0).map(|(a, b)| a * b).sum();
        rhs.push(sc0.rhs[i] + shift);
        senses.push(sc0.senses[i]);
    }
    for i in 0..first.rhs.len() {
        let mut row = vec![0.0; n_ext];
        for (j, v) in first.a.row(i).iter().enumerate() {
            row[z1_at + j] = *v;
        }
        for (j, v) in first.b_coupling.row(i).iter().enumerate() {
            row[x_at + j] -= v;
        }
        rows.push(row);
        rhs.push(first.rhs[i]);
        senses.push(first.senses[i]);
    }
    for (s, at) in n2s.iter().zip(&z2_at) {
        for i in 0..s.rhs.len() {
            let mut row = vec![0.0; n_ext];
            for (j, v) in s.a.row(i).iter().enumerate() {
                row[at + j] = *v;
            }
            for (j, v) in s.b_coupling.row(i).iter().enumerate() {
                row[z1_at + j] -= v;
            }
            rows.push(row);
            rhs.push(s.rhs[i]);
            senses.push(s.senses[i]);
        }
    }

    // joint objective; multi-piece parts would need epigraph columns,
    // the dispatch benchmark is affine throughout
    assert!(
        sc0.cost.pieces.len() == 1
            && first.cost.pieces.len() == 1
            && n2s.iter().all(|s| s.cost.pieces.len() == 1),
        "extensive emission supports affine costs"
    );
    let mut grad = vec![0.0; n_ext];
    let mut offset = 0.0;
    grad[x_at..x_at + top.n].copy_from_slice(&sc0.cost.pieces[0].0);
    offset += sc0.cost.pieces[0].1;
    for (j, v) in first.cost.pieces[0].0.iter().enumerate() {
        grad[z1_at + j] = *v;
    }
    offset += first.cost.pieces[0].1;
    for (s, at) in n2s.iter().zip(&z2_at) {
        for (j, v) in s.cost.pieces[0].0.iter().enumerate() {
            grad[at + j] = inv_n2 * v;
        }
        offset += inv_n2 * s.cost.pieces[0].1;
    }

    let scen = Scenario::structural(
        Mat::from_rows(rows.clone()),
        Mat::zeros(rows.len(), n_ext),
        rhs.clone(),
        senses.clone(),
        PiecewiseLinearCost::affine(grad, offset),
    );
    StationaryInstance {
        n: n_ext,
        x0: lower.clone(),
        lower,
        upper,
        scenario0: scen.clone(),
        scenarios: vec![scen],
        lambda: 1e-9,
    }
}
