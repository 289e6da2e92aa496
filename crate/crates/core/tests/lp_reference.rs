//! Cross-checks of the f64 LP core against exact rational arithmetic.
//!
//! The reference is a deliberately different implementation: a full-tableau
//! standard-form simplex with Bland's rule running on `BigRational`, so an
//! algorithmic defect in the production bounded revised simplex cannot hide
//! in both routes. The production core is additionally instantiated at
//! `BigRational` and must agree with the reference exactly.

use iddp_core::linalg::Mat;
use iddp_core::lp::{solve_lp, LpProblem, LpStatus};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

#[derive(Debug, PartialEq)]
enum RefOutcome {
    Optimal(BigRational),
    Infeasible,
    Unbounded,
}

/// Standard-form full-tableau simplex with Bland's rule, exact arithmetic.
fn reference_solve(p: &LpProblem<BigRational>) -> RefOutcome {
    let n = p.objective.len();

    // Build substitutions: original var j = shift_j + sign_j * new var (or
    // a pair of new vars for free variables).
    // columns of the standard form
    #[derive(Clone)]
    struct Col {
        orig: usize,
        sign: BigRational,
    }
    let mut cols: Vec<Col> = Vec::new();
    let mut shift: Vec<BigRational> = vec![BigRational::zero(); n];
    let mut upper_rows: Vec<(usize, BigRational)> = Vec::new(); // (new col, range)

    for j in 0..n {
        let (lo, hi) = &p.var_bounds[j];
        match (lo, hi) {
            (Some(l), Some(h)) => {
                shift[j] = l.clone();
                cols.push(Col { orig: j, sign: BigRational::one() });
                upper_rows.push((cols.len() - 1, h - l));
            }
            (Some(l), None) => {
                shift[j] = l.clone();
                cols.push(Col { orig: j, sign: BigRational::one() });
            }
            (None, Some(h)) => {
                shift[j] = h.clone();
                cols.push(Col { orig: j, sign: -BigRational::one() });
            }
            (None, None) => {
                cols.push(Col { orig: j, sign: BigRational::one() });
                cols.push(Col { orig: j, sign: -BigRational::one() });
            }
        }
    }
    let n_sub = cols.len();

    // rows: eq rows, geq rows (with surplus), upper-bound rows (with slack)
    let m_eq = p.eq_rows.1.len();
    let m_geq = p.geq_rows.1.len();
    let m = m_eq + m_geq + upper_rows.len();
    let n_extra = m_geq + upper_rows.len();
    let width = n_sub + n_extra;

    let mut a = vec![vec![BigRational::zero(); width]; m];
    let mut b = vec![BigRational::zero(); m];
    let orig_row = |mat: &Mat<BigRational>, i: usize| mat.row(i).to_vec();

    let fill_row = |a_row: &mut [BigRational], coeffs: &[BigRational]| {
        for (c, col) in cols.iter().enumerate() {
            a_row[c] = coeffs[col.orig].clone() * col.sign.clone();
        }
    };

    for i in 0..m_eq {
        let coeffs = orig_row(&p.eq_rows.0, i);
        fill_row(&mut a[i], &coeffs);
        let shift_dot: BigRational =
            coeffs.iter().zip(&shift).map(|(c, s)| c * s).fold(BigRational::zero(), |x, y| x + y);
        b[i] = p.eq_rows.1[i].clone() - shift_dot;
    }
    for i in 0..m_geq {
        let r = m_eq + i;
        let coeffs = orig_row(&p.geq_rows.0, i);
        fill_row(&mut a[r], &coeffs);
        let shift_dot: BigRational =
            coeffs.iter().zip(&shift).map(|(c, s)| c * s).fold(BigRational::zero(), |x, y| x + y);
        b[r] = p.geq_rows.1[i].clone() - shift_dot;
        a[r][n_sub + i] = -BigRational::one(); // surplus
    }
    for (k, (c, range)) in upper_rows.iter().enumerate() {
        let r = m_eq + m_geq + k;
        a[r][*c] = BigRational::one();
        a[r][n_sub + m_geq + k] = BigRational::one(); // slack
        b[r] = range.clone();
    }

    // objective over substituted vars plus the constant from shifts
    let mut c_sub = vec![BigRational::zero(); width];
    for (cidx, col) in cols.iter().enumerate() {
        c_sub[cidx] = p.objective[col.orig].clone() * col.sign.clone();
    }
    let obj_const: BigRational = p
        .objective
        .iter()
        .zip(&shift)
        .map(|(c, s)| c * s)
        .fold(BigRational::zero(), |x, y| x + y);

    // make rhs nonnegative, then append artificials
    for r in 0..m {
        if b[r].is_negative() {
            for v in a[r].iter_mut() {
                *v = -v.clone();
            }
            b[r] = -b[r].clone();
        }
    }
    let total = width + m;
    let mut t: Vec<Vec<BigRational>> = (0..m)
        .map(|r| {
            let mut row = a[r].clone();
            row.extend((0..m).map(|k| {
                if k == r {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            }));
            row.push(b[r].clone());
            row
        })
        .collect();
    let mut basis: Vec<usize> = (width..total).collect();

    let pivot = |t: &mut Vec<Vec<BigRational>>, basis: &mut Vec<usize>, r: usize, c: usize| {
        let piv = t[r][c].clone();
        for v in t[r].iter_mut() {
            *v = v.clone() / piv.clone();
        }
        for i in 0..t.len() {
            if i == r || t[i][c].is_zero() {
                continue;
            }
            let f = t[i][c].clone();
            for k in 0..t[i].len() {
                let sub = f.clone() * t[r][k].clone();
                t[i][k] = t[i][k].clone() - sub;
            }
        }
        basis[r] = c;
    };

    // Bland simplex over the tableau for a given cost vector; returns None
    // when unbounded.
    let run = |t: &mut Vec<Vec<BigRational>>,
               basis: &mut Vec<usize>,
               cost: &[BigRational],
               allowed: usize|
     -> Option<()> {
        loop {
            // reduced costs: d_j = c_j - sum_r c_B[r] * t[r][j]
            let mut entering = None;
            for j in 0..allowed {
                if basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j].clone();
                for r in 0..t.len() {
                    if cost[basis[r]].is_zero() || t[r][j].is_zero() {
                        continue;
                    }
                    d = d - cost[basis[r]].clone() * t[r][j].clone();
                }
                if d.is_negative() {
                    entering = Some(j);
                    break; // Bland: smallest index
                }
            }
            let Some(c) = entering else { return Some(()) };
            let mut leave: Option<(usize, BigRational)> = None;
            let last = t[0].len() - 1;
            for r in 0..t.len() {
                if t[r][c].is_positive() {
                    let ratio = t[r][last].clone() / t[r][c].clone();
                    match &leave {
                        Some((lr, lv)) if *lv < ratio || (*lv == ratio && basis[*lr] < basis[r]) => {}
                        _ => leave = Some((r, ratio)),
                    }
                }
            }
            let Some((r, _)) = leave else { return None };
            pivot(t, basis, r, c);
        }
    };

    // phase 1
    let mut phase1_cost = vec![BigRational::zero(); total];
    for item in phase1_cost.iter_mut().take(total).skip(width) {
        *item = BigRational::one();
    }
    run(&mut t, &mut basis, &phase1_cost, total).expect("phase 1 is bounded");
    let last = t[0].len() - 1;
    let p1: BigRational = (0..m)
        .filter(|r| basis[*r] >= width)
        .map(|r| t[r][last].clone())
        .fold(BigRational::zero(), |x, y| x + y);
    if !p1.is_zero() {
        return RefOutcome::Infeasible;
    }
    // drive artificials out where possible
    for r in 0..m {
        if basis[r] >= width {
            if let Some(c) = (0..width).find(|c| !t[r][*c].is_zero()) {
                pivot(&mut t, &mut basis, r, c);
            }
        }
    }

    // phase 2 (artificial columns barred by restricting entering range)
    let mut phase2_cost = vec![BigRational::zero(); total];
    phase2_cost[..width].clone_from_slice(&c_sub[..width]);
    if run(&mut t, &mut basis, &phase2_cost, width).is_none() {
        return RefOutcome::Unbounded;
    }
    let val: BigRational = (0..m)
        .map(|r| phase2_cost[basis[r]].clone() * t[r][last].clone())
        .fold(BigRational::zero(), |x, y| x + y);
    RefOutcome::Optimal(val + obj_const)
}

fn to_exact(p: &LpProblem<f64>) -> LpProblem<BigRational> {
    use iddp_core::num::Scalar;
    let conv = |v: &f64| BigRational::from_f64(*v);
    let conv_mat = |m: &Mat<f64>| {
        let rows: Vec<Vec<BigRational>> =
            (0..m.nrows()).map(|i| m.row(i).iter().map(conv).collect()).collect();
        if rows.is_empty() {
            Mat::zeros(0, m.ncols())
        } else {
            Mat::from_rows(rows)
        }
    };
    LpProblem {
        objective: p.objective.iter().map(conv).collect(),
        eq_rows: (conv_mat(&p.eq_rows.0), p.eq_rows.1.iter().map(conv).collect()),
        geq_rows: (conv_mat(&p.geq_rows.0), p.geq_rows.1.iter().map(conv).collect()),
        var_bounds: p
            .var_bounds
            .iter()
            .map(|(l, h)| (l.as_ref().map(conv), h.as_ref().map(conv)))
            .collect(),
    }
}

/// Deterministic xorshift so the suite needs no RNG dependency here.
struct Rng(u64);
impl Rng {
    fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }
    /// value in [-range, range] quantized to multiples of 1/16 (exact in f64)
    fn grid(&mut self, range: f64) -> f64 {
        let steps = (range * 16.0) as i64;
        let v = (self.next_u64() % (2 * steps as u64 + 1)) as i64 - steps;
        v as f64 / 16.0
    }
    fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn random_lp(rng: &mut Rng) -> LpProblem<f64> {
    // 5 rows x 8 vars, feasible by construction (rhs derived from a box point)
    let n = 8;
    let m_eq = 2;
    let m_geq = 3;
    let mut ub = vec![0.0; n];
    let mut xhat = vec![0.0; n];
    for j in 0..n {
        ub[j] = 0.5 + rng.grid(2.0).abs();
        xhat[j] = (rng.unit() * ub[j] * 16.0).floor() / 16.0;
    }
    let mut rows = Vec::new();
    for _ in 0..(m_eq + m_geq) {
        rows.push((0..n).map(|_| rng.grid(2.0)).collect::<Vec<f64>>());
    }
    let dot = |r: &[f64]| r.iter().zip(&xhat).map(|(a, x)| a * x).sum::<f64>();
    let mut p = LpProblem::new(n);
    p.objective = (0..n).map(|_| rng.grid(1.0)).collect();
    let eq_rhs: Vec<f64> = rows[..m_eq].iter().map(|r| dot(r)).collect();
    let geq_rhs: Vec<f64> =
        rows[m_eq..].iter().map(|r| dot(r) - rng.grid(1.0).abs()).collect();
    p.eq_rows = (Mat::from_rows(rows[..m_eq].to_vec()), eq_rhs);
    p.geq_rows = (Mat::from_rows(rows[m_eq..].to_vec()), geq_rhs);
    p.var_bounds = (0..n).map(|j| (Some(0.0), Some(ub[j]))).collect();
    p
}

#[test]
fn agreement_with_rational_reference_on_random_lps() {
    let mut rng = Rng(0x5ddf00d);
    let mut optimal = 0;
    for case in 0..100 {
        let p = random_lp(&mut rng);
        let s64 = solve_lp(&p).unwrap();
        assert_eq!(s64.status, LpStatus::Optimal, "case {case} should be feasible/bounded");
        let pq = to_exact(&p);
        let reference = reference_solve(&pq);
        let RefOutcome::Optimal(vq) = &reference else {
            panic!("case {case}: reference disagrees on status: {reference:?}");
        };
        let vq64 = {
            use iddp_core::num::Scalar;
            vq.to_f64()
        };
        assert!(
            (s64.objective_value - vq64).abs() <= 1e-7 * (1.0 + vq64.abs()),
            "case {case}: f64 {} vs exact {}",
            s64.objective_value,
            vq64
        );
        // production core at BigRational must match the reference exactly
        let sq = solve_lp(&pq).unwrap();
        assert_eq!(sq.status, LpStatus::Optimal);
        assert_eq!(&sq.objective_value, vq, "case {case}: exact instantiation mismatch");
        optimal += 1;
    }
    assert_eq!(optimal, 100);
}

#[test]
fn strong_duality_on_random_lps() {
    let mut rng = Rng(0xfeedbeef);
    for _ in 0..100 {
        let p = random_lp(&mut rng);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        // dual objective reconstructed from duals and reduced costs
        let mut dual = 0.0;
        for (i, b) in p.eq_rows.1.iter().chain(p.geq_rows.1.iter()).enumerate() {
            dual += s.duals[i] * b;
        }
        for (j, (lo, hi)) in p.var_bounds.iter().enumerate() {
            let d = s.reduced_costs[j];
            if d > 0.0 {
                dual += d * lo.unwrap();
            } else {
                dual += d * hi.unwrap();
            }
        }
        assert!(
            (s.objective_value - dual).abs() <= 1e-7 * (1.0 + s.objective_value.abs()),
            "gap {} vs {}",
            s.objective_value,
            dual
        );
    }
}

#[test]
fn value_function_convex_in_rhs() {
    let mut rng = Rng(0xabcdef12345);
    let mut tested = 0;
    'outer: for _ in 0..40 {
        let base = random_lp(&mut rng);
        let mut values = Vec::new();
        let b0: Vec<f64> = base.geq_rows.1.clone();
        let delta: Vec<f64> = b0.iter().map(|_| rng.grid(1.0) * 0.25).collect();
        for w in [-1.0, 0.0, 1.0] {
            let mut p = base.clone();
            for (r, d) in p.geq_rows.1.iter_mut().zip(&delta) {
                *r += w * d;
            }
            let s = solve_lp(&p).unwrap();
            if s.status != LpStatus::Optimal {
                continue 'outer;
            }
            values.push(s.objective_value);
        }
        // midpoint value below the chord
        assert!(
            values[1] <= 0.5 * (values[0] + values[2]) + 1e-6,
            "convexity violated: {values:?}"
        );
        tested += 1;
    }
    assert!(tested >= 20, "too few feasible perturbation triples: {tested}");
}
