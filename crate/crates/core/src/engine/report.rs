use std::fmt::Write;
use std::str::FromStr;

use super::{DiagnosisReport, RankedCause};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format `{other}` (expected json or text)")),
        }
    }
}

pub fn render_report(report: &DiagnosisReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Text => render_text(report),
    }
}

fn pct(x: f64) -> String {
    format!("{:+.1}%", x * 100.0)
}

fn render_text(r: &DiagnosisReport) -> String {
    let mut out = String::new();
    let v = &r.verdict;
    let _ = writeln!(out, "query {} run {}", r.query_id, r.run_id);
    let _ = writeln!(
        out,
        "  elapsed {:.2} s vs baseline median {:.2} s ({})",
        v.current_s,
        v.baseline_median_s,
        pct(v.rel_delta)
    );
    if !v.slowed {
        let _ = writeln!(out, "  no slowdown detected");
        return out;
    }
    if r.plan_changed {
        let _ = writeln!(
            out,
            "  plan changed: {} -> {}",
            r.baseline_fingerprint.as_deref().unwrap_or("?"),
            r.current_fingerprint
        );
    } else {
        let _ = writeln!(out, "  plan unchanged ({})", r.current_fingerprint);
    }

    if !r.degraded_operators.is_empty() {
        let _ = writeln!(out, "degraded operators:");
        for d in &r.degraded_operators {
            let _ = writeln!(
                out,
                "  {} {}: {:.2} s -> {:.2} s ({})",
                d.op_id,
                d.op_kind,
                d.baseline_median_s,
                d.current_s,
                pct(d.rel_delta)
            );
        }
    }
    if !r.candidate_nodes.is_empty() {
        let _ = writeln!(
            out,
            "dependent components: {}",
            r.candidate_nodes.join(", ")
        );
    }

    if r.causes.is_empty() {
        let _ = writeln!(out, "causes: none identified");
    } else {
        let _ = writeln!(out, "causes:");
        for (i, c) in r.causes.iter().enumerate() {
            let _ = write!(out, "{}", cause_text(i + 1, c));
        }
    }
    if !r.suppressed_evidence.is_empty() {
        let _ = writeln!(out, "suppressed evidence (outside the dependency closure):");
        for e in &r.suppressed_evidence {
            let _ = writeln!(out, "  {e}");
        }
    }
    for n in &r.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}

fn cause_text(rank: usize, c: &RankedCause) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "  {rank}. {} score {:.3} (impact {:.3} x confidence {:.3})",
        c.cause_id, c.rank_score, c.impact, c.confidence
    );
    let _ = writeln!(out, "     {}", c.description);
    if !c.trace.operators.is_empty() {
        let _ = writeln!(out, "     operators: {}", c.trace.operators.join(", "));
    }
    if !c.trace.locus.is_empty() {
        let _ = writeln!(out, "     components: {}", c.trace.locus.join(", "));
    }
    for m in &c.trace.satisfied {
        let _ = writeln!(out, "     + {}", m.predicate);
        for e in &m.evidence {
            let _ = writeln!(out, "         {e}");
        }
    }
    for m in &c.trace.missing {
        let _ = writeln!(out, "     - {m}");
    }
    if let Some(fix) = &c.fix {
        let _ = writeln!(out, "     fix: {fix}");
    }
    out
}

/// Full evidence trace for one cause of a report: the drill-down from the
/// query through operators and components to the matched symptoms.
pub fn explain_cause(report: &DiagnosisReport, cause_id: &str) -> Option<String> {
    let rank = report.rank_of(cause_id)?;
    let cause = &report.causes[rank];
    let mut out = String::new();
    let v = &report.verdict;
    let _ = writeln!(
        out,
        "query {} run {}: {:.2} s vs {:.2} s ({})",
        report.query_id,
        report.run_id,
        v.current_s,
        v.baseline_median_s,
        pct(v.rel_delta)
    );
    for op in &cause.trace.operators {
        if let Some(d) = report.degraded_operators.iter().find(|d| &d.op_id == op) {
            let _ = writeln!(
                out,
                "  operator {} {}: {:.2} s -> {:.2} s ({})",
                d.op_id,
                d.op_kind,
                d.baseline_median_s,
                d.current_s,
                pct(d.rel_delta)
            );
        }
    }
    let _ = write!(out, "{}", cause_text(rank + 1, cause));
    Some(out)
}
