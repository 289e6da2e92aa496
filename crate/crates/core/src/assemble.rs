//! Incremental LP assembly with sparse rows, shared by the stage builders.

use crate::linalg::Mat;
use crate::lp::LpProblem;

#[derive(Debug, Default)]
pub struct LpAssembler {
    obj: Vec<f64>,
    lo: Vec<Option<f64>>,
    hi: Vec<Option<f64>>,
    eq: Vec<(Vec<(usize, f64)>, f64)>,
    geq: Vec<(Vec<(usize, f64)>, f64)>,
    /// Constant added to the LP optimum (folded affine offsets).
    pub offset: f64,
}

impl LpAssembler {
    pub fn new() -> Self {
        LpAssembler::default()
    }

    pub fn num_vars(&self) -> usize {
        self.obj.len()
    }

    pub fn num_eq(&self) -> usize {
        self.eq.len()
    }

    pub fn num_geq(&self) -> usize {
        self.geq.len()
    }

    pub fn add_var(&mut self, lo: Option<f64>, hi: Option<f64>, obj: f64) -> usize {
        self.obj.push(obj);
        self.lo.push(lo);
        self.hi.push(hi);
        self.obj.len() - 1
    }

    pub fn add_vars(&mut self, lo: &[f64], hi: &[f64], obj_each: f64) -> Vec<usize> {
        lo.iter()
            .zip(hi)
            .map(|(l, h)| self.add_var(Some(*l), Some(*h), obj_each))
            .collect()
    }

    pub fn add_objective(&mut self, col: usize, coeff: f64) {
        self.obj[col] += coeff;
    }

    pub fn add_eq(&mut self, entries: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.eq.push((entries, rhs));
        self.eq.len() - 1
    }

    pub fn add_geq(&mut self, entries: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.geq.push((entries, rhs));
        self.geq.len() - 1
    }

    pub fn build(self) -> LpProblem<f64> {
        let n = self.obj.len();
        let dense = |rows: &[(Vec<(usize, f64)>, f64)]| {
            if rows.is_empty() {
                return Mat::zeros(0, n);
            }
            let mut m = Mat::zeros(rows.len(), n);
            for (i, (entries, _)) in rows.iter().enumerate() {
                for (j, v) in entries {
                    m.set(i, *j, m.get(i, *j) + v);
                }
            }
            m
        };
        LpProblem {
            objective: self.obj,
            eq_rows: (dense(&self.eq), self.eq.iter().map(|r| r.1).collect()),
            geq_rows: (dense(&self.geq), self.geq.iter().map(|r| r.1).collect()),
            var_bounds: self.lo.into_iter().zip(self.hi).collect(),
        }
    }
}
