//! Statistical half of the diagnosis: healthy-state baselines, z-score
//! anomaly scoring, per-operator degradation and metric correlation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{RunRecord, Sample};

/// Guard against division by a zero standard deviation.
pub const STD_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("cannot fit a baseline to an empty sample")]
    EmptyInput,
    #[error("anomaly window is empty")]
    EmptyWindow,
    #[error("need at least {needed} historical runs, found {found}")]
    InsufficientHistory { needed: usize, found: usize },
    #[error("run `{run_id}` has a different plan fingerprint than the current run")]
    FingerprintMismatch { run_id: String },
    #[error("need at least 3 jointly observed samples, found {found}")]
    InsufficientOverlap { found: usize },
    #[error("series has zero variance over the joint samples")]
    ZeroVariance,
    #[error("input contains a non-finite value")]
    NonFinite,
}

/// Mean/spread summary of healthy samples of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 when n = 1.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

pub fn fit_baseline(samples: &[f64]) -> Result<BaselineModel, AnalyticsError> {
    if samples.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(AnalyticsError::NonFinite);
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let std = if n >= 2 {
        let ss: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Rounding can push the mean a hair outside [min, max] for constant input.
    let mean = mean.clamp(min, max);
    Ok(BaselineModel {
        n,
        mean,
        std,
        min,
        max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScore {
    pub score: f64,
    pub direction: Direction,
    pub degraded: bool,
    pub window_mean: f64,
}

/// z-score of the window mean against the baseline:
/// `|mean(window) - mean| / max(std, STD_EPSILON)`, degraded when the score
/// reaches `tau`.
pub fn anomaly_score(
    baseline: &BaselineModel,
    window: &[f64],
    tau: f64,
) -> Result<AnomalyScore, AnalyticsError> {
    if window.is_empty() {
        return Err(AnalyticsError::EmptyWindow);
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(AnalyticsError::NonFinite);
    }
    let window_mean = window.iter().sum::<f64>() / window.len() as f64;
    let diff = window_mean - baseline.mean;
    let score = diff.abs() / baseline.std.max(STD_EPSILON);
    Ok(AnomalyScore {
        score,
        direction: if diff < 0.0 {
            Direction::Low
        } else {
            Direction::High
        },
        degraded: score >= tau,
        window_mean,
    })
}

/// An anomaly verdict for one (component, metric) pair over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyVerdict {
    pub component_id: String,
    pub metric: String,
    pub score: f64,
    pub direction: Direction,
    pub degraded: bool,
    pub window: (i64, i64),
    pub baseline_mean: f64,
    pub window_mean: f64,
}

impl AnomalyVerdict {
    pub fn new(
        component_id: impl Into<String>,
        metric: impl Into<String>,
        window: (i64, i64),
        baseline: &BaselineModel,
        score: AnomalyScore,
    ) -> Self {
        Self {
            component_id: component_id.into(),
            metric: metric.into(),
            score: score.score,
            direction: score.direction,
            degraded: score.degraded,
            window,
            baseline_mean: baseline.mean,
            window_mean: score.window_mean,
        }
    }
}

/// Median of the values; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    /// Relative slowdown `delta` at which an operator counts as degraded.
    pub rel_threshold: f64,
    /// Absolute slowdown, in seconds, an operator must also exceed.
    pub floor_s: f64,
    /// Minimum number of historical runs `k`.
    pub min_history: usize,
}

impl Default for DegradationParams {
    fn default() -> Self {
        Self {
            rel_threshold: 0.2,
            floor_s: 1.0,
            min_history: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRecord {
    pub op_id: String,
    pub op_kind: String,
    pub baseline_median_s: f64,
    pub current_s: f64,
    pub delta_s: f64,
    pub rel_delta: f64,
    pub degraded: bool,
}

/// Compares each operator of `current` with the median of the same
/// operator across `history`. Runs share a fingerprint, so operators are
/// matched by their pre-order position in the plan tree.
pub fn operator_degradation(
    history: &[&RunRecord],
    current: &RunRecord,
    params: &DegradationParams,
) -> Result<Vec<DegradationRecord>, AnalyticsError> {
    if history.len() < params.min_history {
        return Err(AnalyticsError::InsufficientHistory {
            needed: params.min_history,
            found: history.len(),
        });
    }
    if let Some(bad) = history
        .iter()
        .find(|r| r.fingerprint != current.fingerprint)
    {
        return Err(AnalyticsError::FingerprintMismatch {
            run_id: bad.run_id().to_string(),
        });
    }
    let past: Vec<Vec<f64>> = history
        .iter()
        .map(|r| r.snapshot.operators().iter().map(|o| o.elapsed_s).collect())
        .collect();

    let records = current
        .snapshot
        .operators()
        .into_iter()
        .enumerate()
        .map(|(pos, op)| {
            let times: Vec<f64> = past.iter().filter_map(|t| t.get(pos).copied()).collect();
            let baseline = median(&times).unwrap_or(0.0);
            let delta = op.elapsed_s - baseline;
            let rel = delta / baseline.max(STD_EPSILON);
            DegradationRecord {
                op_id: op.op_id.clone(),
                op_kind: op.op_kind.clone(),
                baseline_median_s: baseline,
                current_s: op.elapsed_s,
                delta_s: delta,
                rel_delta: rel,
                degraded: rel >= params.rel_threshold && delta >= params.floor_s,
            }
        })
        .collect();
    Ok(records)
}

/// Pearson correlation of two series over the timestamps they share.
/// Missing samples are not interpolated.
pub fn correlate(a: &[Sample], b: &[Sample]) -> Result<f64, AnalyticsError> {
    let (mut i, mut j) = (0, 0);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].timestamp.cmp(&b[j].timestamp) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                xs.push(a[i].value);
                ys.push(b[j].value);
                i += 1;
                j += 1;
            }
        }
    }
    pearson(&xs, &ys)
}

/// Pearson product-moment coefficient of paired values.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, AnalyticsError> {
    let n = xs.len().min(ys.len());
    if n < 3 {
        return Err(AnalyticsError::InsufficientOverlap { found: n });
    }
    let (xs, ys) = (&xs[..n], &ys[..n]);
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(AnalyticsError::NonFinite);
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(AnalyticsError::ZeroVariance);
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(AnalyticsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{OperatorRecord, PlanSnapshot};

    #[test]
    fn baseline_examples() {
        let b = fit_baseline(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!((b.mean, b.std), (5.0, 0.0));
        let b = fit_baseline(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((b.mean, b.std, b.min, b.max, b.n), (2.0, 1.0, 1.0, 3.0, 3));
        assert_eq!(fit_baseline(&[]), Err(AnalyticsError::EmptyInput));
        assert_eq!(fit_baseline(&[4.0]).unwrap().std, 0.0);
    }

    fn baseline(mean: f64, std: f64) -> BaselineModel {
        BaselineModel {
            n: 10,
            mean,
            std,
            min: mean - 3.0 * std,
            max: mean + 3.0 * std,
        }
    }

    #[test]
    fn anomaly_examples() {
        let s = anomaly_score(&baseline(10.0, 2.0), &[14.0, 16.0, 18.0], 3.0).unwrap();
        assert_eq!(s.score, 3.0);
        assert_eq!(s.direction, Direction::High);
        assert!(s.degraded);

        let s = anomaly_score(&baseline(10.0, 2.0), &[9.0, 11.0], 3.0).unwrap();
        assert_eq!(s.score, 0.0);
        assert!(!s.degraded);

        let s = anomaly_score(&baseline(10.0, 0.0), &[10.5], 3.0).unwrap();
        assert!(s.score.is_finite() && s.score > 1e6);
        assert!(s.degraded);

        let s = anomaly_score(&baseline(10.0, 2.0), &[4.0], 3.0).unwrap();
        assert_eq!(s.direction, Direction::Low);
        assert_eq!(
            anomaly_score(&baseline(1.0, 1.0), &[], 3.0),
            Err(AnalyticsError::EmptyWindow)
        );
    }

    fn run(id: &str, fp_kind: &str, times: &[f64]) -> RunRecord {
        let leaves: Vec<OperatorRecord> = times[1..]
            .iter()
            .enumerate()
            .map(|(i, t)| OperatorRecord {
                op_id: format!("scan-{i}"),
                op_kind: fp_kind.into(),
                reads: vec![],
                elapsed_s: *t,
                children: vec![],
            })
            .collect();
        let snapshot = PlanSnapshot {
            query_id: "q".into(),
            run_id: id.into(),
            started_at: 0,
            total_elapsed_s: times.iter().sum(),
            host: None,
            root: OperatorRecord {
                op_id: "top".into(),
                op_kind: "Sort".into(),
                reads: vec![],
                elapsed_s: times[0],
                children: leaves,
            },
        };
        RunRecord::new(snapshot, 300).unwrap()
    }

    #[test]
    fn degradation_examples() {
        let hist: Vec<RunRecord> = (0..5)
            .map(|i| run(&format!("h{i}"), "SeqScan", &[2.0, 9.0 + (i % 3) as f64]))
            .collect();
        let refs: Vec<&RunRecord> = hist.iter().collect();
        let params = DegradationParams::default();

        let out = operator_degradation(&refs, &run("c", "SeqScan", &[2.0, 13.0]), &params).unwrap();
        assert_eq!(out[1].baseline_median_s, 10.0);
        assert!((out[1].rel_delta - 0.3).abs() < 1e-12);
        assert!(out[1].degraded);
        assert!(!out[0].degraded);

        let out = operator_degradation(&refs, &run("c", "SeqScan", &[2.0, 10.0]), &params).unwrap();
        assert_eq!(out[1].rel_delta, 0.0);
        assert!(out.iter().all(|r| !r.degraded));

        assert_eq!(
            operator_degradation(&refs[..3], &run("c", "SeqScan", &[2.0, 10.0]), &params),
            Err(AnalyticsError::InsufficientHistory {
                needed: 5,
                found: 3
            })
        );
        assert!(matches!(
            operator_degradation(&refs, &run("c", "IndexScan", &[2.0, 10.0]), &params),
            Err(AnalyticsError::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn floor_blocks_small_absolute_changes() {
        let hist: Vec<RunRecord> = (0..5)
            .map(|i| run(&format!("h{i}"), "SeqScan", &[0.5, 10.0]))
            .collect();
        let refs: Vec<&RunRecord> = hist.iter().collect();
        let out = operator_degradation(
            &refs,
            &run("c", "SeqScan", &[1.0, 10.0]),
            &DegradationParams::default(),
        )
        .unwrap();
        assert_eq!(out[0].rel_delta, 1.0);
        assert!(!out[0].degraded);
    }

    fn series(values: &[f64]) -> Vec<Sample> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| Sample {
                timestamp: i as i64 * 300,
                value: *v,
            })
            .collect()
    }

    #[test]
    fn correlate_examples() {
        let a = series(&[1.0, 4.0, 2.0, 8.0, 5.0]);
        let neg = series(&[-1.0, -4.0, -2.0, -8.0, -5.0]);
        assert!((correlate(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((correlate(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(
            correlate(&a, &series(&[3.0; 5])),
            Err(AnalyticsError::ZeroVariance)
        );
        assert_eq!(
            correlate(&a[..2], &a[..2]),
            Err(AnalyticsError::InsufficientOverlap { found: 2 })
        );
    }

    #[test]
    fn correlate_inner_joins_on_timestamp() {
        let a = series(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        // b only has every other timestamp, plus one the other side lacks.
        let mut b: Vec<Sample> = a
            .iter()
            .step_by(2)
            .map(|s| Sample {
                timestamp: s.timestamp,
                value: s.value * 2.0,
            })
            .collect();
        b.push(Sample {
            timestamp: 99_999,
            value: -50.0,
        });
        assert!((correlate(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
