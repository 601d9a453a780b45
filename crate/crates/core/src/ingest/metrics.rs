use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;

pub const METRICS_HEADER: &str = "timestamp,component_id,metric,value";

/// Monitoring interval assumed when a series does not say otherwise.
pub const DEFAULT_INTERVAL_S: i64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub timestamp: i64,
    pub value: f64,
}

/// Samples of one metric on one component, strictly increasing in time.
/// Gaps are allowed but must be whole multiples of the interval; they are
/// never filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub component_id: String,
    pub metric: String,
    pub unit: String,
    pub interval_s: i64,
    pub samples: Vec<Sample>,
}

impl MetricSeries {
    pub fn new(component_id: impl Into<String>, metric: impl Into<String>) -> Self {
        let metric = metric.into();
        Self {
            component_id: component_id.into(),
            unit: unit_for_metric(&metric).to_string(),
            metric,
            interval_s: DEFAULT_INTERVAL_S,
            samples: Vec::new(),
        }
    }

    /// Values with timestamps in `[start, end]`.
    pub fn values_in(&self, start: i64, end: i64) -> Vec<f64> {
        let lo = self.samples.partition_point(|s| s.timestamp < start);
        let hi = self.samples.partition_point(|s| s.timestamp <= end);
        self.samples[lo..hi.max(lo)]
            .iter()
            .map(|s| s.value)
            .collect()
    }

    pub fn samples_in(&self, start: i64, end: i64) -> &[Sample] {
        let lo = self.samples.partition_point(|s| s.timestamp < start);
        let hi = self.samples.partition_point(|s| s.timestamp <= end);
        &self.samples[lo..hi.max(lo)]
    }

    pub fn check(&self) -> Result<(), IngestError> {
        for pair in self.samples.windows(2) {
            let (prev, cur) = (pair[0].timestamp, pair[1].timestamp);
            if cur <= prev {
                return Err(IngestError::NonMonotoneTimestamps {
                    component_id: self.component_id.clone(),
                    metric: self.metric.clone(),
                    previous: prev,
                    timestamp: cur,
                });
            }
            let gap = cur - prev;
            if self.interval_s > 0 && gap % self.interval_s != 0 {
                return Err(IngestError::IrregularInterval {
                    component_id: self.component_id.clone(),
                    metric: self.metric.clone(),
                    gap,
                    interval_s: self.interval_s,
                });
            }
        }
        Ok(())
    }
}

/// Unit implied by a metric name's suffix.
pub fn unit_for_metric(metric: &str) -> &'static str {
    if metric.ends_with("_pct") {
        "percent"
    } else if metric.ends_with("_ms") {
        "ms"
    } else if metric.ends_with("iops") {
        "ops/s"
    } else if metric.ends_with("_mbps") {
        "MB/s"
    } else {
        ""
    }
}

#[derive(Debug, Clone)]
pub struct MetricFilter {
    pub components: Option<BTreeSet<String>>,
    /// Inclusive `[start, end]` in epoch seconds.
    pub window: Option<(i64, i64)>,
    pub interval_s: i64,
}

impl Default for MetricFilter {
    fn default() -> Self {
        Self {
            components: None,
            window: None,
            interval_s: DEFAULT_INTERVAL_S,
        }
    }
}

type SeriesMap = BTreeMap<(String, String), MetricSeries>;

fn read_rows(
    path: &Path,
    reader: impl Read,
    interval_s: i64,
    series: &mut SeriesMap,
) -> Result<(), IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let parse_err = |line: u64, message: String| IngestError::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        column: 1,
        message,
    };
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let header_line = headers.iter().collect::<Vec<_>>().join(",");
    if header_line != METRICS_HEADER {
        return Err(parse_err(
            1,
            format!("expected header `{METRICS_HEADER}`, found `{header_line}`"),
        ));
    }
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(parse_err(
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let timestamp: i64 = record[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("invalid timestamp `{}`", &record[0])))?;
        let component_id = record[1].trim();
        let metric = record[2].trim();
        if component_id.is_empty() || metric.is_empty() {
            return Err(parse_err(
                line,
                "component_id and metric must be non-empty".into(),
            ));
        }
        let value: f64 = record[3]
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(line, format!("invalid value `{}`", &record[3])))?;
        series
            .entry((component_id.to_string(), metric.to_string()))
            .or_insert_with(|| {
                let mut s = MetricSeries::new(component_id, metric);
                s.interval_s = interval_s;
                s
            })
            .samples
            .push(Sample { timestamp, value });
    }
    Ok(())
}

fn finish(series: SeriesMap, filter: &MetricFilter) -> Result<Vec<MetricSeries>, IngestError> {
    let mut out = Vec::new();
    for ((component, _), mut s) in series {
        s.check()?;
        if let Some(wanted) = &filter.components {
            if !wanted.contains(&component) {
                continue;
            }
        }
        if let Some((start, end)) = filter.window {
            s.samples
                .retain(|x| x.timestamp >= start && x.timestamp <= end);
            if s.samples.is_empty() {
                continue;
            }
        }
        out.push(s);
    }
    Ok(out)
}

/// Parses metrics CSV text into one series per (component, metric),
/// sorted by component then metric.
pub fn parse_metrics(
    path: &Path,
    reader: impl Read,
    filter: &MetricFilter,
) -> Result<Vec<MetricSeries>, IngestError> {
    let mut series = SeriesMap::new();
    read_rows(path, reader, filter.interval_s, &mut series)?;
    finish(series, filter)
}

pub fn load_metrics(path: &Path, filter: &MetricFilter) -> Result<Vec<MetricSeries>, IngestError> {
    let file = std::fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
    parse_metrics(path, file, filter)
}

/// Loads every `*.csv` in `dir`, in file-name order, as one stream of rows.
/// A missing directory yields no series.
pub fn load_metrics_dir(
    dir: &Path,
    filter: &MetricFilter,
) -> Result<Vec<MetricSeries>, IngestError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| IngestError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut series = SeriesMap::new();
    for path in &files {
        let file = std::fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
        read_rows(path, file, filter.interval_s, &mut series)?;
    }
    finish(series, filter)
}

/// Renders series as CSV rows ordered by (timestamp, component, metric).
pub fn write_metrics_csv(series: &[MetricSeries]) -> String {
    let mut rows: Vec<(i64, &str, &str, f64)> = series
        .iter()
        .flat_map(|s| {
            s.samples.iter().map(move |x| {
                (
                    x.timestamp,
                    s.component_id.as_str(),
                    s.metric.as_str(),
                    x.value,
                )
            })
        })
        .collect();
    rows.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    wtr.write_record(METRICS_HEADER.split(','))
        .expect("write to memory");
    for (ts, comp, metric, value) in rows {
        wtr.write_record([
            ts.to_string(),
            comp.to_string(),
            metric.to_string(),
            value.to_string(),
        ])
        .expect("write to memory");
    }
    String::from_utf8(wtr.into_inner().expect("flush to memory")).expect("csv output is utf-8")
}
