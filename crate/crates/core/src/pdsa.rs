//! Primal-dual stochastic approximation for saddle problems
//!
//!   min_{x in X}  max_{y in K*}  f(x) + E_w[ v(x, w) ] + <y, q + U u - W x>,
//!
//! where X is a box, K* has componentwise free/nonnegative rows, and the
//! stochastic part is available through a sampled subgradient oracle. At a
//! saddle point `W x - U u - q` lies in the primal cone, and `U' y_bar` is
//! an approximate subgradient of the optimal value w.r.t. the input u.
//!
//! Piecewise-linear costs are lifted into an extra primal coordinate with
//! epigraph rows at construction, so the prox step always has the exact
//! per-coordinate closed form the analysis assumes.

use crate::error::PdsaError;
use crate::linalg::{dot, norm2, spectral_norm, Mat};
use crate::model::{Mat64, PiecewiseLinearCost};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeRow {
    /// Equality row: free dual component.
    Free,
    /// Inequality row: nonnegative dual component.
    Nonneg,
}

/// Sampled second-stage oracle: value estimate and a bounded subgradient of
/// `v(., sample)` at x (in the problem's original primal coordinates).
pub trait StochasticOracle: Sync {
    fn num_samples(&self) -> usize;
    fn eval(&self, x: &[f64], sample: usize) -> Result<(f64, Vec<f64>), PdsaError>;
}

/// Deterministic zero oracle (pure saddle problems).
pub struct ZeroOracle;

impl StochasticOracle for ZeroOracle {
    fn num_samples(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], _sample: usize) -> Result<(f64, Vec<f64>), PdsaError> {
        Ok((0.0, vec![0.0; x.len()]))
    }
}

pub struct SaddleProblem<O> {
    /// Constraint map on the (lifted) primal block, m x d.
    pub w_mat: Mat64,
    /// Map on the fixed input u, m x n_u.
    pub u_mat: Mat64,
    pub q: Vec<f64>,
    /// Fixed input (the previous search point in DDP use).
    pub u_fixed: Vec<f64>,
    /// Affine objective on the lifted primal block.
    pub f_gradient: Vec<f64>,
    pub f_offset: f64,
    /// Original cost before lifting (for reporting and gap probes).
    pub cost: PiecewiseLinearCost,
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
    pub dual_cone: Vec<ConeRow>,
    pub oracle: O,
    /// Bound on oracle subgradient norms.
    pub g_bar: f64,
    /// Coordinates 0..original_dim are the user's primal variables.
    pub original_dim: usize,
}

impl<O: StochasticOracle> SaddleProblem<O> {
    /// Build a saddle problem; multi-piece costs are lifted into an
    /// epigraph coordinate with rows `w - <g_p, x> >= o_p`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        w_mat: Mat64,
        u_mat: Mat64,
        q: Vec<f64>,
        u_fixed: Vec<f64>,
        cost: PiecewiseLinearCost,
        x_lower: Vec<f64>,
        x_upper: Vec<f64>,
        dual_cone: Vec<ConeRow>,
        oracle: O,
        g_bar: f64,
    ) -> Result<Self, PdsaError> {
        let d = x_lower.len();
        let m = q.len();
        if x_upper.len() != d
            || (m > 0 && (w_mat.nrows() != m || w_mat.ncols() != d))
            || dual_cone.len() != m
            || (m > 0 && u_mat.nrows() != m)
        {
            return Err(PdsaError::BadParams("inconsistent saddle dimensions".into()));
        }
        if x_lower.iter().zip(&x_upper).any(|(l, u)| !l.is_finite() || !u.is_finite() || l > u) {
            return Err(PdsaError::BadParams("primal box must be finite and nonempty".into()));
        }
        let mut sp = SaddleProblem {
            w_mat,
            u_mat,
            q,
            u_fixed,
            f_gradient: Vec::new(),
            f_offset: 0.0,
            cost: cost.clone(),
            x_lower,
            x_upper,
            dual_cone,
            oracle,
            g_bar,
            original_dim: d,
        };
        if cost.pieces.len() == 1 {
            sp.f_gradient = cost.pieces[0].0.clone();
            sp.f_offset = cost.pieces[0].1;
        } else {
            // epigraph lift: extra coordinate bounded by the box extremes
            let w_lo = crate::cuts::min_cost_over_box(&cost, &sp.x_lower, &sp.x_upper)
                .map_err(PdsaError::Lp)?;
            let w_hi = crate::cuts::max_cost_over_box(&cost, &sp.x_lower, &sp.x_upper);
            let m_old = sp.q.len();
            let mut rows: Vec<Vec<f64>> =
                (0..m_old).map(|i| {
                    let mut r = sp.w_mat.row(i).to_vec();
                    r.push(0.0);
                    r
                }).collect();
            for (g, o) in &cost.pieces {
                let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
                r.push(1.0);
                rows.push(r);
                sp.q.push(*o);
                sp.dual_cone.push(ConeRow::Nonneg);
            }
            sp.w_mat = Mat::from_rows(rows);
            let n_u = sp.u_mat.ncols();
            let mut u_rows: Vec<Vec<f64>> =
                (0..m_old).map(|i| sp.u_mat.row(i).to_vec()).collect();
            for _ in 0..cost.pieces.len() {
                u_rows.push(vec![0.0; n_u]);
            }
            sp.u_mat = if u_rows.is_empty() {
                Mat::zeros(0, n_u)
            } else {
                Mat::from_rows(u_rows)
            };
            sp.x_lower.push(w_lo);
            sp.x_upper.push(w_hi);
            sp.f_gradient = vec![0.0; d + 1];
            sp.f_gradient[d] = 1.0;
        }
        Ok(sp)
    }

    pub fn num_rows(&self) -> usize {
        self.q.len()
    }

    pub fn dim(&self) -> usize {
        self.x_lower.len()
    }

    /// q + U u, precomputed.
    fn shifted_rhs(&self) -> Vec<f64> {
        let mut r = self.q.clone();
        if self.u_mat.ncols() > 0 {
            for (ri, add) in r.iter_mut().zip(self.u_mat.mul_vec(&self.u_fixed)) {
                *ri += add;
            }
        }
        r
    }

    /// Euclidean prox diameter of the box: D_X with V(x,y) = |y-x|^2/2.
    pub fn prox_diameter(&self) -> f64 {
        let diff: Vec<f64> =
            self.x_lower.iter().zip(&self.x_upper).map(|(l, u)| u - l).collect();
        norm2(&diff) / 2f64.sqrt()
    }

    pub fn spectral_norm_w(&self) -> f64 {
        spectral_norm(&self.w_mat, 1e-8, 10_000)
    }

    /// Expected stochastic value at x by averaging every sample.
    pub fn mean_value(&self, x: &[f64]) -> Result<f64, PdsaError> {
        let n2 = self.oracle.num_samples();
        let mut total = 0.0;
        for j in 0..n2 {
            total += self.oracle.eval(x, j)?.0;
        }
        Ok(total / n2 as f64)
    }
}

#[derive(Debug, Clone)]
pub struct PdsaParams {
    pub iters: usize,
    pub w: f64,
    pub theta: f64,
    pub tau: f64,
    pub eta: f64,
    pub d_x: f64,
    pub alpha_x: f64,
    /// Optional warm start (x_0, y_0) in lifted coordinates.
    pub start: Option<(Vec<f64>, Vec<f64>)>,
    /// Cap used when reporting the theoretical gap bounds.
    pub dual_cap: f64,
}

impl PdsaParams {
    /// The constant-schedule step sizes:
    /// `tau = max(Gbar sqrt(3N) / (D_X sqrt(a)), sqrt(2) |W| / sqrt(a))`,
    /// `eta = sqrt(2) |W| / sqrt(a)` (floored away from zero).
    pub fn validate(&self, w_norm: f64) -> Result<(), PdsaError> {
        if self.iters == 0 || self.w <= 0.0 || self.theta != 1.0 {
            return Err(PdsaError::BadParams(
                "constant schedules require w > 0, theta = 1, iters >= 1".into(),
            ));
        }
        if self.tau < 0.0 || self.eta <= 0.0 || self.alpha_x <= 0.0 {
            return Err(PdsaError::BadParams("step sizes must be positive".into()));
        }
        let need = 2.0 * w_norm * w_norm;
        if self.tau * self.eta * self.alpha_x < need * (1.0 - 1e-9) {
            return Err(PdsaError::BadParams(format!(
                "tau*eta*alpha = {} below 2|W|^2 = {need}",
                self.tau * self.eta * self.alpha_x
            )));
        }
        Ok(())
    }
}

pub const ETA_FLOOR: f64 = 1e-12;

/// Subgradient-error constant of the high-probability analysis at the
/// probability parameter `lambda_p` (reported in logs, never enforced):
/// `lambda_p D_X sigma sqrt(sum w^2) + sum w (4 Gbar^2 + (1+lambda_p) sigma^2)/(alpha tau)`
/// with `sigma = 2 Gbar`.
pub fn c_n_lambda(params: &PdsaParams, g_bar: f64, lambda_p: f64) -> f64 {
    let sigma = 2.0 * g_bar;
    let n = params.iters as f64;
    let sum_w = n * params.w;
    let sum_w2 = (n * params.w * params.w).sqrt();
    let per_step = if params.tau > 0.0 {
        (4.0 * g_bar * g_bar + (1.0 + lambda_p) * sigma * sigma) / (params.alpha_x * params.tau)
    } else {
        0.0
    };
    lambda_p * params.d_x * sigma * sum_w2 + sum_w * per_step
}

pub fn default_params<O: StochasticOracle>(sp: &SaddleProblem<O>, iters: usize) -> PdsaParams {
    let alpha_x: f64 = 1.0;
    let w_norm = sp.spectral_norm_w();
    let d_x = sp.prox_diameter().max(1e-12);
    let tau = f64::max(
        sp.g_bar * (3.0 * iters as f64).sqrt() / (d_x * alpha_x.sqrt()),
        2f64.sqrt() * w_norm / alpha_x.sqrt(),
    );
    let eta = (2f64.sqrt() * w_norm / alpha_x.sqrt()).max(ETA_FLOOR);
    PdsaParams {
        iters,
        w: 1.0,
        theta: 1.0,
        tau,
        eta,
        d_x,
        alpha_x,
        start: None,
        dual_cap: 1.0,
    }
}

#[derive(Debug, Clone)]
pub struct PdsaCertificate {
    /// Averaged primal in the problem's original coordinates.
    pub x_bar: Vec<f64>,
    /// Averaged primal including any lifted epigraph coordinate.
    pub x_bar_full: Vec<f64>,
    /// Averaged dual, one entry per (lifted) row.
    pub y_bar: Vec<f64>,
    /// Scaled dual displacement `(sum w)^-1 w_1 eta_1 (y_0 - y_N)`.
    pub delta: Vec<f64>,
    pub eps_p: f64,
    pub eps_d: f64,
    pub eps_c: f64,
    /// f(x_bar) + mean sampled value at x_bar.
    pub objective_estimate: f64,
    pub iterations: usize,
}

pub fn run_pdsa<O: StochasticOracle>(
    sp: &SaddleProblem<O>,
    params: &PdsaParams,
    seed: u64,
) -> Result<PdsaCertificate, PdsaError> {
    run_pdsa_observed(sp, params, seed, |_, _, _, _| {})
}

/// Run with a per-iteration observer `(k, y_k, sampled index, sampled
/// objective value at x_k)`; `diagnostics_csv` renders the usual dump.
pub fn run_pdsa_observed<O: StochasticOracle>(
    sp: &SaddleProblem<O>,
    params: &PdsaParams,
    seed: u64,
    mut on_iter: impl FnMut(usize, &[f64], usize, f64),
) -> Result<PdsaCertificate, PdsaError> {
    let w_norm = sp.spectral_norm_w();
    params.validate(w_norm)?;
    let d = sp.dim();
    let m = sp.num_rows();
    let n2 = sp.oracle.num_samples();
    let rhs = sp.shifted_rhs();
    let tol_bound = sp.g_bar * (1.0 + 1e-6);

    let (mut x, mut y) = match &params.start {
        Some((x0, y0)) => {
            if x0.len() != d || y0.len() != m {
                return Err(PdsaError::BadParams("warm start dimension mismatch".into()));
            }
            (x0.clone(), y0.clone())
        }
        None => {
            let mid: Vec<f64> =
                sp.x_lower.iter().zip(&sp.x_upper).map(|(l, u)| 0.5 * (l + u)).collect();
            (mid, vec![0.0; m])
        }
    };
    let y_start = y.clone();
    let mut y_prev = y.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x_sum = vec![0.0; d];
    let mut y_sum = vec![0.0; m];
    let mut y_last = y.clone();

    for k in 1..=params.iters {
        let sample = rng.gen_range(0..n2);
        let (vhat, g_orig) = sp.oracle.eval(&x[..sp.original_dim], sample)?;
        if g_orig.len() != sp.original_dim {
            return Err(PdsaError::BadParams("oracle subgradient length mismatch".into()));
        }
        let gnorm = norm2(&g_orig);
        if gnorm > tol_bound {
            return Err(PdsaError::OracleError { norm: gnorm, bound: sp.g_bar });
        }

        // extrapolated dual and the linear term of the prox
        let d_tilde: Vec<f64> = y
            .iter()
            .zip(&y_prev)
            .map(|(cur, prev)| params.theta * (cur - prev) + cur)
            .collect();
        let wt_d = sp.w_mat.tr_mul_vec(&d_tilde);
        let mut lin = sp.f_gradient.clone();
        for j in 0..sp.original_dim {
            lin[j] += g_orig[j];
        }
        for j in 0..d {
            lin[j] -= wt_d[j];
        }

        // exact box prox
        let mut x_next = vec![0.0; d];
        if params.tau > 0.0 {
            for j in 0..d {
                x_next[j] = (x[j] - lin[j] / params.tau).clamp(sp.x_lower[j], sp.x_upper[j]);
            }
        } else {
            for j in 0..d {
                x_next[j] = if lin[j] > 0.0 {
                    sp.x_lower[j]
                } else if lin[j] < 0.0 {
                    sp.x_upper[j]
                } else {
                    x[j]
                };
            }
        }

        // dual ascent toward q + Uu - W x, projected on the cone
        let wx = sp.w_mat.mul_vec(&x_next);
        let mut y_next = vec![0.0; m];
        for i in 0..m {
            let v = y[i] + (rhs[i] - wx[i]) / params.eta;
            y_next[i] = match sp.dual_cone[i] {
                ConeRow::Free => v,
                ConeRow::Nonneg => v.max(0.0),
            };
        }

        for j in 0..d {
            x_sum[j] += x_next[j];
        }
        for i in 0..m {
            y_sum[i] += y_next[i];
        }
        y_prev = std::mem::replace(&mut y, y_next.clone());
        y_last = y_next;
        x = x_next;
        on_iter(k, &y, sample, sp.cost.evaluate(&x[..sp.original_dim]) + vhat);
    }

    let inv = 1.0 / params.iters as f64;
    let x_bar_full: Vec<f64> = x_sum.iter().map(|v| v * inv).collect();
    let y_bar: Vec<f64> = y_sum.iter().map(|v| v * inv).collect();
    let delta: Vec<f64> = y_start
        .iter()
        .zip(&y_last)
        .map(|(y0, yn)| params.w * params.eta * (y0 - yn) * inv / params.w)
        .collect();
    let eps_c = norm2(&delta);

    let x_bar = x_bar_full[..sp.original_dim].to_vec();
    let objective_estimate = sp.cost.evaluate(&x_bar) + sp.mean_value(&x_bar)?;

    // reported theoretical bound at the corollary step sizes (lambda = 0
    // probability term omitted; the dual distance replaced by the cap)
    let sigma = 2.0 * sp.g_bar;
    let n = params.iters as f64;
    let mut bound = 2f64.sqrt() * w_norm * (1.0 + params.dual_cap * params.dual_cap)
        / (params.alpha_x.sqrt() * n);
    if sp.g_bar > 0.0 {
        bound += params.d_x * (10.0 * sp.g_bar * sp.g_bar + sigma * sigma)
            / (sp.g_bar * (3.0 * params.alpha_x * n).sqrt());
    }

    Ok(PdsaCertificate {
        x_bar,
        x_bar_full,
        y_bar,
        delta,
        eps_p: bound,
        eps_d: bound,
        eps_c,
        objective_estimate,
        iterations: params.iters,
    })
}

/// Render observer output rows as `k,y_norm,sample,objective`.
pub fn diagnostics_csv(rows: &[(usize, f64, usize, f64)]) -> String {
    let mut out = String::from("k,y_norm,sample,objective\n");
    for (k, ynorm, sample, obj) in rows {
        out.push_str(&format!("{k},{ynorm},{sample},{obj}\n"));
    }
    out
}

/// Empirical lower estimates of the two gap functions at probe points.
/// `y_star` is the dual reference for gap_*; probes only ever underestimate
/// the true suprema.
pub fn estimate_gaps<O: StochasticOracle>(
    sp: &SaddleProblem<O>,
    cert: &PdsaCertificate,
    probe_points: &[Vec<f64>],
    y_star: &[f64],
) -> Result<(f64, f64), PdsaError> {
    let rhs = sp.shifted_rhs();
    let wxbar = sp.w_mat.mul_vec(&cert.x_bar_full);
    let resid_bar: Vec<f64> = rhs.iter().zip(&wxbar).map(|(r, w)| r - w).collect();
    let f_bar = sp.cost.evaluate(&cert.x_bar) + sp.mean_value(&cert.x_bar)?;

    let term_bar = |y: &[f64]| dot(y, &resid_bar) + f_bar;
    let value_at = |x: &[f64]| -> Result<f64, PdsaError> {
        Ok(sp.cost.evaluate(x) + sp.mean_value(x)?)
    };

    let mut gap_star: f64 = f64::NEG_INFINITY;
    let mut gap_delta: f64 = f64::NEG_INFINITY;
    let y_probes: Vec<Vec<f64>> = vec![vec![0.0; sp.num_rows()], y_star.to_vec(), cert.y_bar.clone()];

    for xp in probe_points {
        if xp.len() != sp.original_dim {
            return Err(PdsaError::BadParams("probe point length mismatch".into()));
        }
        // lift the probe if needed
        let mut xfull = xp.clone();
        if sp.dim() > sp.original_dim {
            xfull.push(sp.cost.evaluate(xp));
        }
        let wx = sp.w_mat.mul_vec(&xfull);
        let resid: Vec<f64> = rhs.iter().zip(&wx).map(|(r, w)| r - w).collect();
        let fx = value_at(xp)?;
        let q_star = term_bar(y_star) - (dot(&cert.y_bar, &resid) + fx);
        gap_star = gap_star.max(q_star);
        for yp in &y_probes {
            let q = term_bar(yp) + dot(&cert.delta, yp) - (dot(&cert.y_bar, &resid) + fx);
            gap_delta = gap_delta.max(q);
        }
    }
    Ok((gap_star, gap_delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constrained_1d() -> SaddleProblem<ZeroOracle> {
        // min x over [0,1] with the row x >= 0.5 dualized: saddle (0.5, 1)
        SaddleProblem::new(
            Mat::from_rows(vec![vec![1.0]]),
            Mat::zeros(1, 0),
            vec![0.5],
            vec![],
            PiecewiseLinearCost::affine(vec![1.0], 0.0),
            vec![0.0],
            vec![1.0],
            vec![ConeRow::Nonneg],
            ZeroOracle,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn default_params_formula() {
        // Gbar = 1, N = 3, D_X = 1, alpha = 1, |W| = 1 -> tau = 3, eta = sqrt(2)
        let sp = SaddleProblem::new(
            Mat::from_rows(vec![vec![1.0]]),
            Mat::zeros(1, 0),
            vec![0.0],
            vec![],
            PiecewiseLinearCost::affine(vec![0.0], 0.0),
            vec![0.0],
            vec![2f64.sqrt()], // box diagonal sqrt(2) -> D_X = 1
            vec![ConeRow::Nonneg],
            ZeroOracle,
            1.0,
        )
        .unwrap();
        let p = default_params(&sp, 3);
        assert!((p.d_x - 1.0).abs() < 1e-12);
        assert!((p.tau - 3.0).abs() < 1e-9, "tau {}", p.tau);
        assert!((p.eta - 2f64.sqrt()).abs() < 1e-9);
        p.validate(1.0).unwrap();
    }

    #[test]
    fn eta_floor_when_unconstrained() {
        let sp = SaddleProblem::new(
            Mat::zeros(0, 1),
            Mat::zeros(0, 0),
            vec![],
            vec![],
            PiecewiseLinearCost::affine(vec![1.0], 0.0),
            vec![0.0],
            vec![1.0],
            vec![],
            ZeroOracle,
            0.0,
        )
        .unwrap();
        let p = default_params(&sp, 10);
        assert_eq!(p.eta, ETA_FLOOR);
    }

    #[test]
    fn scaling_w_doubles_eta() {
        let mk = |scale: f64| {
            SaddleProblem::new(
                Mat::from_rows(vec![vec![scale]]),
                Mat::zeros(1, 0),
                vec![0.0],
                vec![],
                PiecewiseLinearCost::affine(vec![0.0], 0.0),
                vec![0.0],
                vec![1.0],
                vec![ConeRow::Nonneg],
                ZeroOracle,
                1.0,
            )
            .unwrap()
        };
        let eta1 = default_params(&mk(1.0), 5).eta;
        let eta2 = default_params(&mk(2.0), 5).eta;
        assert!((eta2 - 2.0 * eta1).abs() < 1e-8);
    }

    #[test]
    fn unconstrained_jumps_to_box_argmin() {
        // W = 0, f = <g, x>, zero oracle: tau = 0 -> every iterate at argmin
        let sp = SaddleProblem::new(
            Mat::zeros(0, 2),
            Mat::zeros(0, 0),
            vec![],
            vec![],
            PiecewiseLinearCost::affine(vec![1.0, -2.0], 0.0),
            vec![0.0, 0.0],
            vec![1.0, 3.0],
            vec![],
            ZeroOracle,
            0.0,
        )
        .unwrap();
        let mut p = default_params(&sp, 20);
        assert_eq!(p.tau, 0.0);
        p.eta = ETA_FLOOR;
        let cert = run_pdsa(&sp, &p, 1).unwrap();
        assert!((cert.x_bar[0] - 0.0).abs() < 1e-12);
        assert!((cert.x_bar[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn constrained_1d_converges_to_saddle() {
        let sp = constrained_1d();
        let p = default_params(&sp, 2000);
        let cert = run_pdsa(&sp, &p, 11).unwrap();
        assert!((cert.x_bar[0] - 0.5).abs() <= 0.05, "x_bar {}", cert.x_bar[0]);
        assert!(cert.eps_c <= 0.05, "|delta| {}", cert.eps_c);
        assert!(cert.y_bar[0] >= 0.0);
    }

    #[test]
    fn stationary_at_the_saddle() {
        let sp = constrained_1d();
        let mut p = default_params(&sp, 50);
        p.start = Some((vec![0.5], vec![1.0]));
        let cert = run_pdsa(&sp, &p, 3).unwrap();
        assert!((cert.x_bar[0] - 0.5).abs() < 1e-10);
        assert!((cert.y_bar[0] - 1.0).abs() < 1e-10);
        assert!(cert.eps_c < 1e-10);
    }

    #[test]
    fn deterministic_given_seed() {
        let sp = constrained_1d();
        let p = default_params(&sp, 200);
        let a = run_pdsa(&sp, &p, 9).unwrap();
        let b = run_pdsa(&sp, &p, 9).unwrap();
        assert_eq!(a.x_bar[0].to_bits(), b.x_bar[0].to_bits());
        assert_eq!(a.eps_c.to_bits(), b.eps_c.to_bits());
    }

    #[test]
    fn delta_matches_definition() {
        let sp = constrained_1d();
        let p = default_params(&sp, 333);
        let cert = run_pdsa(&sp, &p, 5).unwrap();
        assert!((norm2(&cert.delta) - cert.eps_c).abs() < 1e-12);
    }

    #[test]
    fn gap_estimates_vanish_at_saddle() {
        let sp = constrained_1d();
        let mut p = default_params(&sp, 10);
        p.start = Some((vec![0.5], vec![1.0]));
        let cert = run_pdsa(&sp, &p, 1).unwrap();
        let probes: Vec<Vec<f64>> = vec![vec![0.0], vec![0.5], vec![1.0]];
        let (gs, gd) = estimate_gaps(&sp, &cert, &probes, &[1.0]).unwrap();
        assert!(gs.abs() <= 1e-8, "gap_* {gs}");
        assert!(gd.abs() <= 1e-8, "gap_d {gd}");
    }

    #[test]
    fn gap_estimates_monotone_in_probes() {
        let sp = constrained_1d();
        let p = default_params(&sp, 300);
        let cert = run_pdsa(&sp, &p, 77).unwrap();
        let few: Vec<Vec<f64>> = vec![vec![0.5]];
        let more: Vec<Vec<f64>> = vec![vec![0.5], vec![0.0], vec![1.0], vec![0.25]];
        let (g1, d1) = estimate_gaps(&sp, &cert, &few, &[1.0]).unwrap();
        let (g2, d2) = estimate_gaps(&sp, &cert, &more, &[1.0]).unwrap();
        assert!(g2 >= g1 - 1e-12);
        assert!(d2 >= d1 - 1e-12);
    }

    #[test]
    fn oracle_norm_violation_detected() {
        struct Big;
        impl StochasticOracle for Big {
            fn num_samples(&self) -> usize {
                1
            }
            fn eval(&self, x: &[f64], _s: usize) -> Result<(f64, Vec<f64>), PdsaError> {
                Ok((0.0, vec![10.0; x.len()]))
            }
        }
        let sp = SaddleProblem::new(
            Mat::from_rows(vec![vec![1.0]]),
            Mat::zeros(1, 0),
            vec![0.5],
            vec![],
            PiecewiseLinearCost::affine(vec![1.0], 0.0),
            vec![0.0],
            vec![1.0],
            vec![ConeRow::Nonneg],
            Big,
            1.0,
        )
        .unwrap();
        let p = default_params(&sp, 10);
        assert!(matches!(run_pdsa(&sp, &p, 0), Err(PdsaError::OracleError { .. })));
    }

    #[test]
    fn multi_piece_cost_is_lifted() {
        // min max(x, 1-x) over [0,1]: optimum 0.5 at x = 0.5
        let cost = PiecewiseLinearCost {
            pieces: vec![(vec![1.0], 0.0), (vec![-1.0], 1.0)],
        };
        let sp = SaddleProblem::new(
            Mat::zeros(0, 1),
            Mat::zeros(0, 0),
            vec![],
            vec![],
            cost,
            vec![0.0],
            vec![1.0],
            vec![],
            ZeroOracle,
            0.0,
        )
        .unwrap();
        assert_eq!(sp.dim(), 2);
        assert_eq!(sp.num_rows(), 2);
        let p = default_params(&sp, 4000);
        let cert = run_pdsa(&sp, &p, 13).unwrap();
        assert!((cert.x_bar[0] - 0.5).abs() < 0.05, "x {}", cert.x_bar[0]);
        assert!((cert.objective_estimate - 0.5).abs() < 0.05);
    }

    #[test]
    fn observer_and_diagnostics_csv() {
        let sp = constrained_1d();
        let p = default_params(&sp, 25);
        let mut rows: Vec<(usize, f64, usize, f64)> = Vec::new();
        let cert = run_pdsa_observed(&sp, &p, 3, |k, y, sample, obj| {
            rows.push((k, norm2(y), sample, obj));
        })
        .unwrap();
        assert_eq!(rows.len(), 25);
        assert_eq!(rows.last().unwrap().0, 25);
        let csv = diagnostics_csv(&rows);
        assert!(csv.starts_with("k,y_norm,sample,objective\n"));
        assert_eq!(csv.lines().count(), 26);
        // observer must not change the run
        let plain = run_pdsa(&sp, &p, 3).unwrap();
        assert_eq!(plain.x_bar[0].to_bits(), cert.x_bar[0].to_bits());
    }
}
