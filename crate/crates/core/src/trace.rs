//! Trace CSV: one row per iteration, empty fields for unrecorded values.

use crate::engine::IterationRecord;
use crate::error::ModelError;
use std::fmt::Write as _;

pub const TRACE_HEADER: &str = "iter,lb_root,ub_model,ub_policy,t_star,selected,wall_ms,cuts_total";
pub const TRACE_HEADER_EXTENDED: &str =
    "iter,lb_root,ub_model,ub_policy,t_star,selected,wall_ms,cuts_total,eps_c_max,pdsa_iters";

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Render records; `extended` appends the inexact-solve columns.
pub fn trace_csv(records: &[IterationRecord], extended: bool) -> String {
    let mut out = String::new();
    out.push_str(if extended { TRACE_HEADER_EXTENDED } else { TRACE_HEADER });
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.iter,
            r.lb_root,
            fmt_opt_f64(r.ub_model),
            fmt_opt_f64(r.ub_policy),
            fmt_opt_usize(r.t_star),
            fmt_opt_usize(r.selected),
            fmt_opt_f64(r.wall_ms),
            r.cuts_total,
        );
        if extended {
            let _ = write!(out, ",{},{}", fmt_opt_f64(r.eps_c_max), fmt_opt_usize(r.pdsa_iters));
        }
        out.push('\n');
    }
    out
}

/// Parse a trace back (used by the verify command).
pub fn parse_trace(text: &str) -> Result<Vec<IterationRecord>, ModelError> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(ModelError::Parse { line: 1, msg: "empty trace".into() });
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    let idx = |name: &str| cols.iter().position(|c| *c == name);
    let (Some(i_iter), Some(i_lb)) = (idx("iter"), idx("lb_root")) else {
        return Err(ModelError::Parse { line: 1, msg: "missing iter/lb_root columns".into() });
    };
    let mut out = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: Option<usize>| i.and_then(|i| fields.get(i)).map(|s| s.trim());
        let parse_f = |s: Option<&str>| -> Option<f64> {
            s.filter(|s| !s.is_empty()).and_then(|s| s.parse().ok())
        };
        let parse_u = |s: Option<&str>| -> Option<usize> {
            s.filter(|s| !s.is_empty()).and_then(|s| s.parse().ok())
        };
        let iter: usize = get(Some(i_iter))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ModelError::Parse { line: lineno + 1, msg: "bad iter".into() })?;
        let lb_root: f64 = get(Some(i_lb))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ModelError::Parse { line: lineno + 1, msg: "bad lb_root".into() })?;
        out.push(IterationRecord {
            iter,
            lb_root,
            ub_model: parse_f(get(idx("ub_model"))),
            ub_policy: parse_f(get(idx("ub_policy"))),
            t_star: parse_u(get(idx("t_star"))),
            selected: parse_u(get(idx("selected"))),
            wall_ms: parse_f(get(idx("wall_ms"))),
            cuts_total: parse_u(get(idx("cuts_total"))).unwrap_or(0),
            eps_c_max: parse_f(get(idx("eps_c_max"))),
            pdsa_iters: parse_u(get(idx("pdsa_iters"))),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(iter: usize) -> IterationRecord {
        IterationRecord {
            iter,
            lb_root: 0.5 + iter as f64,
            ub_model: (iter % 2 == 0).then_some(3.25),
            ub_policy: None,
            t_star: Some(4),
            selected: Some(iter),
            wall_ms: None,
            cuts_total: iter,
            eps_c_max: None,
            pdsa_iters: None,
        }
    }

    #[test]
    fn round_trip() {
        let records = vec![record(1), record(2)];
        let csv = trace_csv(&records, false);
        assert!(csv.starts_with(TRACE_HEADER));
        let parsed = parse_trace(&csv).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].iter, 1);
        assert_eq!(parsed[1].ub_model, Some(3.25));
        assert_eq!(parsed[0].ub_model, None);
        assert_eq!(parsed[0].wall_ms, None);
    }

    #[test]
    fn extended_columns() {
        let mut r = record(1);
        r.eps_c_max = Some(0.125);
        r.pdsa_iters = Some(640);
        let csv = trace_csv(&[r], true);
        assert!(csv.starts_with(TRACE_HEADER_EXTENDED));
        let parsed = parse_trace(&csv).unwrap();
        assert_eq!(parsed[0].eps_c_max, Some(0.125));
        assert_eq!(parsed[0].pdsa_iters, Some(640));
    }
}
