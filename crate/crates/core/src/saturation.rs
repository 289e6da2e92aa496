//! Dynamic discretization of the feasible box into hypercube cells, each
//! carrying a saturation level in {0, ..., T-1}. Only visited cells are
//! stored; absent cells sit at the default level T-1. Levels only ever
//! decrease.

use crate::error::ModelError;
use std::collections::HashMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellKey(pub Vec<i64>);

#[derive(Debug, Clone)]
pub struct SaturationMap {
    pub epsilon: f64,
    pub levels: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Cell side length epsilon / sqrt(n): equal keys imply Euclidean
    /// distance at most epsilon.
    delta: f64,
    table: HashMap<CellKey, usize>,
}

impl SaturationMap {
    /// `levels` is T; every point starts at level T-1.
    pub fn new(epsilon: f64, levels: usize, lower: &[f64], upper: &[f64]) -> Result<Self, ModelError> {
        if levels < 2 {
            return Err(ModelError::Invalid("need T >= 2 saturation levels".into()));
        }
        let d = lower.iter().zip(upper).map(|(l, u)| u - l).fold(0.0, f64::max);
        if !(epsilon > 0.0 && epsilon < d) {
            return Err(ModelError::Invalid(format!(
                "epsilon {epsilon} outside (0, D) with D = {d}"
            )));
        }
        let n = lower.len();
        Ok(SaturationMap {
            epsilon,
            levels,
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            delta: epsilon / (n as f64).sqrt(),
            table: HashMap::new(),
        })
    }

    pub fn default_level(&self) -> usize {
        self.levels - 1
    }

    /// Number of cells currently materialized.
    pub fn touched_cells(&self) -> usize {
        self.table.len()
    }

    /// Sum of level decreases over all touched cells (each touched cell
    /// contributes default_level - level). This is how much the saturation
    /// potential has dropped since the start of the run.
    pub fn potential_drop(&self) -> usize {
        self.table.values().map(|lvl| self.default_level() - lvl).sum()
    }

    pub fn cell_of(&self, x: &[f64]) -> Result<CellKey, ModelError> {
        if x.len() != self.lower.len() {
            return Err(ModelError::Dimension("point length mismatch".into()));
        }
        let mut key = Vec::with_capacity(x.len());
        for j in 0..x.len() {
            let tol = 1e-9 * (1.0 + self.lower[j].abs().max(self.upper[j].abs()));
            if x[j] < self.lower[j] - tol || x[j] > self.upper[j] + tol {
                return Err(ModelError::OutOfDomain);
            }
            let v = x[j].clamp(self.lower[j], self.upper[j]);
            key.push(((v - self.lower[j]) / self.delta).floor() as i64);
        }
        Ok(CellKey(key))
    }

    pub fn level(&self, x: &[f64]) -> Result<usize, ModelError> {
        let key = self.cell_of(x)?;
        Ok(*self.table.get(&key).unwrap_or(&self.default_level()))
    }

    /// Lower the cell of x to `min(current, t)`.
    pub fn lower_level(&mut self, x: &[f64], t: usize) -> Result<(), ModelError> {
        if t > self.default_level() {
            return Err(ModelError::Invalid(format!(
                "level {t} above the maximum {}",
                self.default_level()
            )));
        }
        let key = self.cell_of(x)?;
        let default = self.default_level();
        let entry = self.table.entry(key).or_insert(default);
        *entry = (*entry).min(t);
        Ok(())
    }

    /// Argmax of the level over candidates (most distinguishable point),
    /// ties broken by the smallest candidate index. Returns (index, t*).
    pub fn select_most_distinguishable(
        &self,
        candidates: &[Vec<f64>],
    ) -> Result<(usize, usize), ModelError> {
        if candidates.is_empty() {
            return Err(ModelError::Invalid("empty candidate list".into()));
        }
        let mut best = (0usize, 0usize);
        let mut first = true;
        for (i, x) in candidates.iter().enumerate() {
            let lvl = self.level(x)?;
            if first || lvl > best.1 {
                best = (i, lvl);
                first = false;
            }
        }
        Ok(best)
    }

    /// Lower the cell of x to the level bracketing `gap` in the accuracy
    /// schedule: the t with eps_{t-1} < gap <= eps_t (eps_{-1} = -1).
    /// Gaps above the last schedule entry leave the cell unchanged.
    pub fn assign_gap_level(
        &mut self,
        x: &[f64],
        gap: f64,
        eps_schedule: &[f64],
    ) -> Result<(), ModelError> {
        if eps_schedule.len() != self.levels {
            return Err(ModelError::Invalid("schedule length != T".into()));
        }
        if eps_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::Invalid("schedule must be strictly increasing".into()));
        }
        if gap < 0.0 {
            return Err(ModelError::Invalid("negative gap".into()));
        }
        for (t, eps_t) in eps_schedule.iter().enumerate() {
            if gap <= *eps_t {
                return self.lower_level(x, t);
            }
        }
        Ok(())
    }

    /// Sorted `(cell index..., level)` rows for checkpoint dumps.
    pub fn to_csv(&self) -> String {
        let n = self.lower.len();
        let mut out = String::new();
        for j in 0..n {
            let _ = write!(out, "c{j},");
        }
        out.push_str("level\n");
        let mut rows: Vec<(&CellKey, &usize)> = self.table.iter().collect();
        rows.sort_by(|a, b| a.0 .0.cmp(&b.0 .0));
        for (key, lvl) in rows {
            for c in &key.0 {
                let _ = write!(out, "{c},");
            }
            let _ = writeln!(out, "{lvl}");
        }
        out
    }
}
