//! Text instance format: `[section]` headers over `key = value` lines.
//!
//! Matrices are dense row-major floats on a single line; `senses` is one
//! character per row (`e` equality, `g` for `>=`). The full grammar is
//! documented in `docs/instance-format.md`. All numbers are 64-bit decimal
//! text.

use crate::error::ModelError;
use crate::linalg::Mat;
use crate::lp::LpStatus;
use crate::model::{
    HierarchicalInstance, LowerStage, Mat64, PiecewiseLinearCost, RowSense, Scenario,
    StationaryInstance, TwoStageLowerLevel,
};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Default, Clone)]
struct Section {
    line: usize,
    values: BTreeMap<String, String>,
    pieces: Vec<String>,
}

fn err(line: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Parse { line, msg: msg.into() }
}

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>, ModelError> {
    let mut sections = BTreeMap::new();
    let mut current: Option<(String, Section)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line_no, "unterminated section header"))?
                .trim()
                .to_string();
            if let Some((n, s)) = current.take() {
                sections.insert(n, s);
            }
            current = Some((name, Section { line: line_no, ..Default::default() }));
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(line_no, "expected `key = value`"));
        };
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        let Some((_, section)) = current.as_mut() else {
            return Err(err(line_no, "data before the first section header"));
        };
        if key == "piece" {
            section.pieces.push(value);
        } else if section.values.insert(key.clone(), value).is_some() {
            return Err(err(line_no, format!("duplicate key `{key}`")));
        }
    }
    if let Some((n, s)) = current.take() {
        sections.insert(n, s);
    }
    Ok(sections)
}

impl Section {
    fn get(&self, key: &str) -> Result<&str, ModelError> {
        self.values
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| err(self.line, format!("missing key `{key}`")))
    }

    fn usize(&self, key: &str) -> Result<usize, ModelError> {
        self.get(key)?
            .parse()
            .map_err(|_| err(self.line, format!("`{key}` is not an integer")))
    }

    fn f64(&self, key: &str) -> Result<f64, ModelError> {
        let v: f64 = self
            .get(key)?
            .parse()
            .map_err(|_| err(self.line, format!("`{key}` is not a number")))?;
        if !v.is_finite() {
            return Err(err(self.line, format!("`{key}` is not finite")));
        }
        Ok(v)
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ModelError> {
        if self.values.contains_key(key) {
            self.f64(key)
        } else {
            Ok(default)
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize, ModelError> {
        if self.values.contains_key(key) {
            self.usize(key)
        } else {
            Ok(default)
        }
    }

    fn vector(&self, key: &str, len: usize) -> Result<Vec<f64>, ModelError> {
        let v = parse_floats(self.get(key)?)
            .map_err(|m| err(self.line, format!("`{key}`: {m}")))?;
        if v.len() != len {
            return Err(err(self.line, format!("`{key}` has {} entries, expected {len}", v.len())));
        }
        Ok(v)
    }

    fn matrix(&self, key: &str, rows: usize, cols: usize) -> Result<Mat64, ModelError> {
        if rows == 0 {
            return Ok(Mat::zeros(0, cols));
        }
        let flat = self.vector(key, rows * cols)?;
        Ok(Mat::from_flat(rows, cols, flat))
    }

    fn senses(&self, m: usize) -> Result<Vec<RowSense>, ModelError> {
        if m == 0 {
            return Ok(Vec::new());
        }
        let s = self.get("senses")?;
        let tokens: Vec<&str> = s.split_whitespace().collect();
        let chars: Vec<char> = if tokens.len() == m {
            tokens.iter().map(|t| t.chars().next().unwrap()).collect()
        } else {
            s.chars().filter(|c| !c.is_whitespace()).collect()
        };
        if chars.len() != m {
            return Err(err(self.line, format!("`senses` has {} rows, expected {m}", chars.len())));
        }
        chars
            .into_iter()
            .map(|c| match c {
                'e' => Ok(RowSense::Equality),
                'g' => Ok(RowSense::Geq),
                other => Err(err(self.line, format!("unknown row sense `{other}`"))),
            })
            .collect()
    }

    fn cost(&self, n: usize) -> Result<PiecewiseLinearCost, ModelError> {
        if self.pieces.is_empty() {
            return Err(err(self.line, "missing `piece` lines"));
        }
        let mut pieces = Vec::new();
        for p in &self.pieces {
            let v = parse_floats(p).map_err(|m| err(self.line, format!("piece: {m}")))?;
            if v.len() != n + 1 {
                return Err(err(
                    self.line,
                    format!("piece has {} numbers, expected {} (gradient then offset)", v.len(), n + 1),
                ));
            }
            let (grad, off) = v.split_at(n);
            pieces.push((grad.to_vec(), off[0]));
        }
        Ok(PiecewiseLinearCost { pieces })
    }
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect()
}

fn parse_scenario(section: &Section, n: usize) -> Result<Scenario, ModelError> {
    let m = section.usize("m")?;
    let m_phi = section.usize_or("m_phi", 0)?;
    let mut sc = Scenario::structural(
        section.matrix("A", m, n)?,
        section.matrix("B", m, n)?,
        if m == 0 { Vec::new() } else { section.vector("b", m)? },
        section.senses(m)?,
        section.cost(n)?,
    );
    if m_phi > 0 {
        sc.func_r = section.matrix("R", m_phi, n)?;
        sc.func_q = section.matrix("Q", m_phi, n)?;
        sc.func_rhs = section.vector("r", m_phi)?;
    }
    Ok(sc)
}

fn parse_lower_stage(section: &Section, dim_key: (&str, usize), coupling: usize) -> Result<LowerStage, ModelError> {
    let nz = dim_key.1;
    let m = section.usize("m")?;
    Ok(LowerStage {
        a: section.matrix("A", m, nz)?,
        b_coupling: section.matrix("B", m, coupling)?,
        rhs: if m == 0 { Vec::new() } else { section.vector("b", m)? },
        senses: section.senses(m)?,
        lower: section.vector("lower", nz)?,
        upper: section.vector("upper", nz)?,
        cost: section.cost(nz)?,
    })
}

/// Parse the stationary part of an instance file.
pub fn parse_instance(text: &str) -> Result<StationaryInstance, ModelError> {
    let sections = split_sections(text)?;
    let meta = sections.get("meta").ok_or_else(|| err(0, "missing [meta] section"))?;
    let n = meta.usize("n")?;
    let num_scen = meta.usize("scenarios")?;
    let lambda = meta.f64("lambda")?;
    let domain = sections.get("domain").ok_or_else(|| err(0, "missing [domain] section"))?;
    let lower = domain.vector("lower", n)?;
    let upper = domain.vector("upper", n)?;
    let x0 = domain.vector("x0", n)?;

    let scenario_at = |i: usize| -> Result<Scenario, ModelError> {
        let name = format!("scenario {i}");
        let sec = sections.get(&name).ok_or_else(|| err(0, format!("missing [{name}]")))?;
        parse_scenario(sec, n)
    };
    let scenario0 = scenario_at(0)?;
    let scenarios: Vec<Scenario> =
        (1..=num_scen).map(scenario_at).collect::<Result<_, _>>()?;

    let inst = StationaryInstance { n, lower, upper, x0, scenario0, scenarios, lambda };
    inst.validate()?;
    Ok(inst)
}

/// Parse an instance with a hierarchical lower level.
pub fn parse_hierarchical(text: &str) -> Result<HierarchicalInstance, ModelError> {
    let top = parse_instance(text)?;
    let sections = split_sections(text)?;
    let meta = sections
        .get("lower.meta")
        .ok_or_else(|| err(0, "missing [lower.meta] section"))?;
    let n1 = meta.usize("n1")?;
    let n2 = meta.usize("n2")?;
    let n_second = meta.usize("second_samples")?;
    let eps_lo = meta.f64_or("eps_lo", 0.1)?;
    let rho = meta.f64_or("rho", 0.1)?;
    let m_d = meta.f64_or("m_d", 10.0 * top.cost_lipschitz().max(1.0) / (1.0 - top.lambda))?;

    let first_sec = sections
        .get("lower.first")
        .ok_or_else(|| err(0, "missing [lower.first] section"))?;
    let first = parse_lower_stage(first_sec, ("n1", n1), top.n)?;
    let second_samples: Vec<LowerStage> = (1..=n_second)
        .map(|j| {
            let name = format!("lower.second {j}");
            let sec = sections.get(&name).ok_or_else(|| err(0, format!("missing [{name}]")))?;
            parse_lower_stage(sec, ("n2", n2), n1)
        })
        .collect::<Result<_, _>>()?;

    let hinst = HierarchicalInstance {
        top,
        lower: TwoStageLowerLevel { first, second_samples },
        eps_lo,
        rho,
        m_d_estimate: m_d,
    };
    hinst.validate()?;
    Ok(hinst)
}

/// True when the file declares a hierarchical lower level.
pub fn is_hierarchical(text: &str) -> bool {
    split_sections(text).map(|s| s.contains_key("lower.meta")).unwrap_or(false)
}

/// Load, validate, and feasibility-check a stationary instance.
pub fn load_instance(path: impl AsRef<Path>) -> Result<StationaryInstance, ModelError> {
    let text = std::fs::read_to_string(path)?;
    let inst = parse_instance(&text)?;
    check_root_feasible(&inst)?;
    Ok(inst)
}

pub fn load_hierarchical(path: impl AsRef<Path>) -> Result<HierarchicalInstance, ModelError> {
    let text = std::fs::read_to_string(path)?;
    parse_hierarchical(&text)
}

/// One stage-1 LP solve: the problem must be feasible from x0 under the
/// deterministic first-stage data.
pub fn check_root_feasible(inst: &StationaryInstance) -> Result<(), ModelError> {
    let sol = crate::stage::solve_stage_lp(inst, 0, &inst.x0, None)?;
    match sol.status {
        LpStatus::Optimal => Ok(()),
        _ => Err(ModelError::InfeasibleRoot),
    }
}

fn write_matrix(out: &mut String, key: &str, m: &Mat64) {
    if m.nrows() == 0 {
        return;
    }
    let mut entries = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for v in m.row(i) {
            entries.push(format_f64(*v));
        }
    }
    let _ = writeln!(out, "{key} = {}", entries.join(" "));
}

fn write_vector(out: &mut String, key: &str, v: &[f64]) {
    let entries: Vec<String> = v.iter().map(|x| format_f64(*x)).collect();
    let _ = writeln!(out, "{key} = {}", entries.join(" "));
}

fn format_f64(v: f64) -> String {
    // shortest representation that round-trips
    let s = format!("{v}");
    debug_assert_eq!(s.parse::<f64>().unwrap(), v);
    s
}

fn write_scenario(out: &mut String, name: &str, sc: &Scenario) {
    let _ = writeln!(out, "[{name}]");
    let _ = writeln!(out, "m = {}", sc.num_rows());
    if sc.num_rows() > 0 {
        let senses: String = sc
            .senses
            .iter()
            .map(|s| if *s == RowSense::Equality { 'e' } else { 'g' })
            .collect();
        let _ = writeln!(out, "senses = {senses}");
        write_matrix(out, "A", &sc.a);
        write_matrix(out, "B", &sc.b_coupling);
        write_vector(out, "b", &sc.rhs);
    }
    if sc.num_func_rows() > 0 {
        let _ = writeln!(out, "m_phi = {}", sc.num_func_rows());
        write_matrix(out, "R", &sc.func_r);
        write_matrix(out, "Q", &sc.func_q);
        write_vector(out, "r", &sc.func_rhs);
    }
    for (g, o) in &sc.cost.pieces {
        let mut entries: Vec<String> = g.iter().map(|x| format_f64(*x)).collect();
        entries.push(format_f64(*o));
        let _ = writeln!(out, "piece = {}", entries.join(" "));
    }
    let _ = writeln!(out);
}

/// Serialize a stationary instance in the text format.
pub fn write_instance(inst: &StationaryInstance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[meta]");
    let _ = writeln!(out, "n = {}", inst.n);
    let _ = writeln!(out, "scenarios = {}", inst.num_scenarios());
    let _ = writeln!(out, "lambda = {}", format_f64(inst.lambda));
    let _ = writeln!(out);
    let _ = writeln!(out, "[domain]");
    write_vector(&mut out, "lower", &inst.lower);
    write_vector(&mut out, "upper", &inst.upper);
    write_vector(&mut out, "x0", &inst.x0);
    let _ = writeln!(out);
    write_scenario(&mut out, "scenario 0", &inst.scenario0);
    for (i, sc) in inst.scenarios.iter().enumerate() {
        write_scenario(&mut out, &format!("scenario {}", i + 1), sc);
    }
    out
}

fn write_lower_stage(out: &mut String, name: &str, st: &LowerStage) {
    let _ = writeln!(out, "[{name}]");
    let _ = writeln!(out, "m = {}", st.rhs.len());
    if !st.rhs.is_empty() {
        let senses: String = st
            .senses
            .iter()
            .map(|s| if *s == RowSense::Equality { 'e' } else { 'g' })
            .collect();
        let _ = writeln!(out, "senses = {senses}");
        write_matrix(out, "A", &st.a);
        write_matrix(out, "B", &st.b_coupling);
        write_vector(out, "b", &st.rhs);
    }
    write_vector(out, "lower", &st.lower);
    write_vector(out, "upper", &st.upper);
    for (g, o) in &st.cost.pieces {
        let mut entries: Vec<String> = g.iter().map(|x| format_f64(*x)).collect();
        entries.push(format_f64(*o));
        let _ = writeln!(out, "piece = {}", entries.join(" "));
    }
    let _ = writeln!(out);
}

/// Serialize a hierarchical instance (stationary part plus lower level).
pub fn write_hierarchical(hinst: &HierarchicalInstance) -> String {
    let mut out = write_instance(&hinst.top);
    let _ = writeln!(out, "[lower.meta]");
    let _ = writeln!(out, "n1 = {}", hinst.lower.first.dim());
    let n2 = hinst.lower.second_samples.first().map_or(0, |s| s.dim());
    let _ = writeln!(out, "n2 = {n2}");
    let _ = writeln!(out, "second_samples = {}", hinst.lower.second_samples.len());
    let _ = writeln!(out, "eps_lo = {}", format_f64(hinst.eps_lo));
    let _ = writeln!(out, "rho = {}", format_f64(hinst.rho));
    let _ = writeln!(out, "m_d = {}", format_f64(hinst.m_d_estimate));
    let _ = writeln!(out);
    write_lower_stage(&mut out, "lower.first", &hinst.lower.first);
    for (j, s) in hinst.lower.second_samples.iter().enumerate() {
        write_lower_stage(&mut out, &format!("lower.second {}", j + 1), s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{chain_instance, gen_ed, EdParams};

    const CHAIN_FILE: &str = "\
[meta]
n = 1
scenarios = 1
lambda = 0.5

[domain]
lower = 0
upper = 1
x0 = 1

[scenario 0]
m = 1
senses = g
A = 1
B = 0.5
b = 0
piece = 1 0

[scenario 1]
m = 1
senses = g
A = 1
B = 0.5
b = 0
piece = 1 0
";

    #[test]
    fn minimal_chain_file_parses() {
        let inst = parse_instance(CHAIN_FILE).unwrap();
        assert_eq!(inst.n, 1);
        assert_eq!(inst.num_scenarios(), 1);
        assert_eq!(inst.lambda, 0.5);
        assert_eq!(inst.domain_length(), 1.0);
        assert_eq!(inst.x0, vec![1.0]);
        assert_eq!(inst.scenarios[0].b_coupling.row(0), &[0.5]);
    }

    #[test]
    fn chain_file_root_lp_solution() {
        let inst = parse_instance(CHAIN_FILE).unwrap();
        check_root_feasible(&inst).unwrap();
        let s = crate::stage::solve_stage_lp(&inst, 0, &inst.x0.clone(), None).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn wrong_matrix_width_is_rejected() {
        let bad = CHAIN_FILE.replace("B = 0.5", "B = 0.5 1.0");
        match parse_instance(&bad) {
            Err(ModelError::Parse { .. }) => {}
            other => panic!("expected a parse/dimension error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_sense_rejected() {
        let bad = CHAIN_FILE.replace("senses = g", "senses = z");
        assert!(parse_instance(&bad).is_err());
    }

    #[test]
    fn stationary_round_trip() {
        let inst = chain_instance();
        let text = write_instance(&inst);
        let back = parse_instance(&text).unwrap();
        assert_eq!(back.n, inst.n);
        assert_eq!(back.lambda, inst.lambda);
        assert_eq!(back.scenarios[0].rhs, inst.scenarios[0].rhs);
        assert_eq!(back.scenario0.cost.pieces, inst.scenario0.cost.pieces);
        // second round trip is byte-identical
        assert_eq!(write_instance(&back), text);
    }

    #[test]
    fn hierarchical_round_trip() {
        let p = EdParams {
            top_scenarios: 2,
            second_scenarios: 2,
            ..EdParams::default()
        };
        let h = gen_ed(&p, 5);
        let text = write_hierarchical(&h);
        assert!(is_hierarchical(&text));
        let back = parse_hierarchical(&text).unwrap();
        assert_eq!(back.top.n, h.top.n);
        assert_eq!(back.lower.first.dim(), h.lower.first.dim());
        assert_eq!(back.lower.second_samples.len(), h.lower.second_samples.len());
        assert_eq!(back.eps_lo, h.eps_lo);
        assert_eq!(write_hierarchical(&back), text);
    }
}
