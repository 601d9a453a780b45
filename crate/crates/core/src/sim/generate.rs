use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use chrono::DateTime;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::physics::{
    congested_port_utilization, contended_pool_utilization, latency_multiplier, NoiseModel,
};
use super::{FaultKind, OpSpec, QuerySpec, Scenario, SimError};
use crate::ingest::{
    to_canonical_json, write_jsonl, write_metrics_csv, ConfigEvent, DataDir, DbEvent, IngestError,
    MetricSeries, OperatorRecord, PlanSnapshot, RunStore, Sample, TopologyDoc,
};
use crate::model::NodeKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRun {
    pub query_id: String,
    pub run_id: String,
    pub slot: usize,
    /// Symptoms-database ids of the faults active during the run, sorted.
    pub causes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub seed: u64,
    pub runs: Vec<GroundTruthRun>,
}

impl GroundTruth {
    pub fn causes_for(&self, run_id: &str) -> Option<&[String]> {
        self.runs
            .iter()
            .find(|r| r.run_id == run_id)
            .map(|r| r.causes.as_slice())
    }
}

/// A generated scenario, held in memory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub scenario: Scenario,
    /// Plan snapshots in slot order (queries in declaration order within a
    /// slot).
    pub runs: Vec<PlanSnapshot>,
    /// One series per (component, metric), sorted by component then metric.
    pub metrics: Vec<MetricSeries>,
    pub config_events: Vec<ConfigEvent>,
    pub db_events: Vec<DbEvent>,
    pub ground_truth: GroundTruth,
}

impl Dataset {
    /// Writes the dataset as a data directory. `dir` must be missing or
    /// empty.
    pub fn write(&self, dir: &Path) -> Result<(), SimError> {
        if dir.exists() {
            let mut entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
            if entries.next().is_some() {
                return Err(SimError::OutputNotEmpty(dir.display().to_string()));
            }
        }
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

        self.scenario.topology.save(&dir.join(DataDir::TOPOLOGY))?;
        let mut store =
            RunStore::open(dir.join(DataDir::RUNS))?.with_interval(self.scenario.interval_s);
        for run in &self.runs {
            store.append_run(run.clone())?;
        }

        let metrics_dir = dir.join(DataDir::METRICS);
        std::fs::create_dir_all(&metrics_dir).map_err(|e| io_err(&metrics_dir, e))?;
        for (day, series) in split_by_day(&self.metrics) {
            write_file(
                &metrics_dir.join(format!("{day}.csv")),
                &write_metrics_csv(&series),
            )?;
        }
        write_file(
            &dir.join(DataDir::EVENTS),
            &write_jsonl(&self.config_events),
        )?;
        write_file(&dir.join(DataDir::DB_EVENTS), &write_jsonl(&self.db_events))?;
        write_file(
            &dir.join(DataDir::GROUND_TRUTH),
            &to_canonical_json(&self.ground_truth),
        )?;
        write_file(
            &dir.join("scenario.json"),
            &to_canonical_json(&self.scenario),
        )?;
        Ok(())
    }

    /// The same data as [`Dataset::write`] followed by [`DataDir::open`],
    /// without touching the disk.
    pub fn to_data_dir(&self) -> Result<DataDir, SimError> {
        let mut store = RunStore::in_memory(self.scenario.interval_s);
        for run in &self.runs {
            store.append_run(run.clone())?;
        }
        Ok(DataDir {
            root: PathBuf::new(),
            topology: self.scenario.topology.clone(),
            store,
            metrics: self.metrics.clone(),
            config_events: self.config_events.clone(),
            db_events: self.db_events.clone(),
        })
    }
}

fn io_err(path: &Path, e: std::io::Error) -> SimError {
    SimError::Ingest(IngestError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), SimError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn day_of(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .expect("timestamp in range")
        .format("%Y-%m-%d")
        .to_string()
}

fn split_by_day(metrics: &[MetricSeries]) -> BTreeMap<String, Vec<MetricSeries>> {
    let mut out: BTreeMap<String, Vec<MetricSeries>> = BTreeMap::new();
    for series in metrics {
        let mut by_day: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
        for s in &series.samples {
            by_day.entry(day_of(s.timestamp)).or_default().push(*s);
        }
        for (day, samples) in by_day {
            out.entry(day).or_default().push(MetricSeries {
                samples,
                ..series.clone()
            });
        }
    }
    out
}

fn attr(topology: &TopologyDoc, id: &str, key: &str, default: f64) -> f64 {
    topology
        .component(id)
        .and_then(|c| c.attrs.get(key))
        .and_then(|v| v.as_f64())
        .unwrap_or(default)
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Topology lookups the generator needs.
struct Topo<'a> {
    doc: &'a TopologyDoc,
    downstream: BTreeMap<&'a str, Vec<&'a str>>,
}

impl<'a> Topo<'a> {
    fn new(doc: &'a TopologyDoc) -> Self {
        let rank = |id: &str| doc.kind_of(id).and_then(NodeKind::path_rank);
        let mut downstream: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for c in &doc.connections {
            let (a, b) = match (rank(&c.from), rank(&c.to)) {
                (Some(x), Some(y)) if x < y => (c.from.as_str(), c.to.as_str()),
                (Some(_), Some(_)) => (c.to.as_str(), c.from.as_str()),
                _ => continue,
            };
            downstream.entry(a).or_default().push(b);
        }
        Self { doc, downstream }
    }

    fn ids_of(&self, kind: NodeKind) -> impl Iterator<Item = &'a str> + '_ {
        self.doc
            .components
            .iter()
            .filter(move |c| c.kind == kind)
            .map(|c| c.id.as_str())
    }

    /// Storage pools reachable along the data path from `id`.
    fn pools_behind(&self, id: &str) -> BTreeSet<&'a str> {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut queue: VecDeque<&str> = self.downstream.get(id).cloned().unwrap_or_default().into();
        while let Some(n) = queue.pop_front() {
            if seen.insert(n) {
                queue.extend(self.downstream.get(n).into_iter().flatten().copied());
            }
        }
        seen.into_iter()
            .filter(|n| self.doc.kind_of(n) == Some(NodeKind::StoragePool))
            .collect()
    }

    fn allocated(&self, logical: &str, kind: NodeKind) -> Vec<&'a str> {
        self.doc
            .allocations
            .iter()
            .filter(|a| a.logical == logical && self.doc.kind_of(&a.physical) == Some(kind))
            .map(|a| a.physical.as_str())
            .collect()
    }

    fn allocated_to(&self, physical: &str, kind: NodeKind) -> Vec<&'a str> {
        self.doc
            .allocations
            .iter()
            .filter(|a| a.physical == physical && self.doc.kind_of(&a.logical) == Some(kind))
            .map(|a| a.logical.as_str())
            .collect()
    }
}

/// External workloads that share `pool`, directly or through one of its
/// volumes.
pub(crate) fn contending_workloads(doc: &TopologyDoc, pool: &str) -> Vec<String> {
    let topo = Topo::new(doc);
    let volumes = topo.allocated_to(pool, NodeKind::Volume);
    let mut out: Vec<String> = doc
        .sharing
        .iter()
        .filter(|s| s.target == pool || volumes.contains(&s.target.as_str()))
        .map(|s| s.workload.clone())
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Effects of the faults active in one slot.
#[derive(Default)]
struct SlotState {
    volume_latency: BTreeMap<String, f64>,
    pool_latency: BTreeMap<String, f64>,
    pool_util_pct: BTreeMap<String, f64>,
    pool_extra_iops: BTreeMap<String, f64>,
    extra_iops: BTreeMap<String, f64>,
    port_util_pct: BTreeMap<String, f64>,
    cpu_pct: BTreeMap<String, f64>,
    cpu_factor: BTreeMap<String, f64>,
    lock: BTreeMap<String, f64>,
    alternate: BTreeSet<String>,
}

fn slot_state(scenario: &Scenario, topo: &Topo<'_>, slot: usize) -> SlotState {
    let doc = &scenario.topology;
    let mut st = SlotState::default();
    let scale_volumes = |st: &mut SlotState, pools: &BTreeSet<&str>, factor: f64| {
        for v in topo.ids_of(NodeKind::Volume) {
            if topo
                .allocated(v, NodeKind::StoragePool)
                .iter()
                .any(|p| pools.contains(p))
            {
                *st.volume_latency.entry(v.to_string()).or_insert(1.0) *= factor;
            }
        }
    };
    for f in scenario.faults.iter().filter(|f| f.active_in(slot)) {
        let m = f.magnitude;
        let target = f.target.as_str();
        match f.kind {
            FaultKind::LockContention => {
                *st.lock.entry(f.target.clone()).or_insert(0.0) += m;
            }
            FaultKind::CpuSaturation => {
                st.cpu_pct
                    .insert(f.target.clone(), (90.0 + 10.0 * m).min(99.0));
                *st.cpu_factor.entry(f.target.clone()).or_insert(1.0) *= 1.0 + m;
            }
            FaultKind::ControllerPortCongestion => {
                let base = attr(doc, target, "base_utilization_pct", 40.0);
                let u = congested_port_utilization(base, m);
                st.port_util_pct.insert(f.target.clone(), u * 100.0);
                scale_volumes(&mut st, &topo.pools_behind(target), latency_multiplier(u));
            }
            FaultKind::VolumeContention => {
                let base = attr(doc, target, "base_utilization_pct", 50.0);
                let nominal = attr(doc, target, "nominal_iops", 4000.0);
                let u = contended_pool_utilization(base, m);
                let mult = latency_multiplier(u);
                *st.pool_latency.entry(f.target.clone()).or_insert(1.0) *= mult;
                st.pool_util_pct
                    .insert(f.target.clone(), (u * 100.0).min(100.0));
                *st.pool_extra_iops.entry(f.target.clone()).or_insert(0.0) += m * nominal;
                scale_volumes(&mut st, &BTreeSet::from([target]), mult);

                let workloads = contending_workloads(doc, target);
                let share = m * nominal / workloads.len().max(1) as f64;
                for w in &workloads {
                    *st.extra_iops.entry(w.clone()).or_insert(0.0) += share;
                    for s in doc.sharing.iter().filter(|s| &s.workload == w) {
                        if doc.kind_of(&s.target) == Some(NodeKind::Volume) {
                            *st.extra_iops.entry(s.target.clone()).or_insert(0.0) += share;
                        }
                    }
                }
            }
            FaultKind::ZoningChange => {
                scale_volumes(&mut st, &topo.pools_behind(target), 1.0 + m);
            }
            FaultKind::PlanChange => {
                st.alternate.insert(f.target.clone());
            }
        }
    }
    st
}

/// Expected metric values of one component in one slot, before noise.
fn component_metrics(
    doc: &TopologyDoc,
    topo: &Topo<'_>,
    st: &SlotState,
    id: &str,
    kind: NodeKind,
) -> Vec<(&'static str, f64)> {
    let a = |key: &str, default: f64| attr(doc, id, key, default);
    let extra = st.extra_iops.get(id).copied().unwrap_or(0.0);
    match kind {
        NodeKind::Server => vec![(
            "cpu_util_pct",
            st.cpu_pct
                .get(id)
                .copied()
                .unwrap_or_else(|| a("base_cpu_util_pct", 35.0)),
        )],
        NodeKind::Hba => vec![("utilization_pct", a("base_utilization_pct", 25.0))],
        NodeKind::SwitchPort => vec![("utilization_pct", a("base_utilization_pct", 30.0))],
        NodeKind::ControllerPort => vec![(
            "utilization_pct",
            st.port_util_pct
                .get(id)
                .copied()
                .unwrap_or_else(|| a("base_utilization_pct", 40.0)),
        )],
        NodeKind::Controller => vec![("cpu_util_pct", a("base_cpu_util_pct", 40.0))],
        NodeKind::StoragePool => {
            let nominal = a("nominal_iops", 4000.0);
            vec![
                (
                    "iops",
                    nominal + st.pool_extra_iops.get(id).copied().unwrap_or(0.0),
                ),
                (
                    "latency_ms",
                    a("base_latency_ms", 5.0) * st.pool_latency.get(id).copied().unwrap_or(1.0),
                ),
                (
                    "utilization_pct",
                    st.pool_util_pct
                        .get(id)
                        .copied()
                        .unwrap_or_else(|| a("base_utilization_pct", 50.0)),
                ),
            ]
        }
        NodeKind::Volume => vec![
            ("iops", a("base_iops", 1000.0) + extra),
            (
                "latency_ms",
                a("base_latency_ms", 4.0) * st.volume_latency.get(id).copied().unwrap_or(1.0),
            ),
        ],
        NodeKind::Disk => {
            let pools = topo.allocated_to(id, NodeKind::StoragePool);
            let contended = pools.iter().find_map(|p| st.pool_util_pct.get(*p).copied());
            let base = pools
                .first()
                .map_or(50.0, |p| attr(doc, p, "base_utilization_pct", 50.0));
            vec![(
                "busy_pct",
                contended.unwrap_or_else(|| a("base_busy_pct", base)),
            )]
        }
        NodeKind::ExternalWorkload => vec![("iops", a("base_iops", 500.0) + extra)],
        _ => Vec::new(),
    }
}

fn host_of(scenario: &Scenario, q: &QuerySpec) -> Option<String> {
    q.host.clone().or_else(|| {
        let mut servers = scenario
            .topology
            .components
            .iter()
            .filter(|c| c.kind == NodeKind::Server);
        match (servers.next(), servers.next()) {
            (Some(s), None) => Some(s.id.clone()),
            _ => None,
        }
    })
}

fn simulate_op(
    op: &OpSpec,
    topo: &Topo<'_>,
    st: &SlotState,
    cpu_factor: f64,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> OperatorRecord {
    let io = if op.reads.is_empty() {
        1.0
    } else {
        let mults: Vec<f64> = op
            .reads
            .iter()
            .map(|ts| {
                let vols = topo.allocated(ts, NodeKind::Volume);
                vols.iter()
                    .map(|v| st.volume_latency.get(*v).copied().unwrap_or(1.0))
                    .fold(1.0, f64::max)
            })
            .collect();
        mults.iter().sum::<f64>() / mults.len() as f64
    };
    let lock: f64 = op.reads.iter().filter_map(|ts| st.lock.get(ts)).sum();
    let expected = op.nominal_s * io * cpu_factor + op.nominal_s * lock;
    let elapsed_s = expected * noise.factor(rng);
    let children = op
        .children
        .iter()
        .map(|c| simulate_op(c, topo, st, cpu_factor, noise, rng))
        .collect();
    OperatorRecord {
        op_id: op.op_id.clone(),
        op_kind: op.op_kind.clone(),
        reads: op.reads.clone(),
        elapsed_s,
        children,
    }
}

fn total_of(root: &OperatorRecord) -> f64 {
    let mut total = 0.0;
    let mut stack = vec![root];
    while let Some(op) = stack.pop() {
        total += op.elapsed_s;
        stack.extend(op.children.iter().rev());
    }
    total
}

/// Generates the scenario. The output depends only on the scenario
/// (including its seed).
pub fn generate(scenario: &Scenario) -> Result<Dataset, SimError> {
    scenario.validate()?;
    let doc = &scenario.topology;
    let topo = Topo::new(doc);
    let noise = NoiseModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let mut components: Vec<_> = doc.components.iter().collect();
    components.sort_by(|a, b| a.id.cmp(&b.id));
    let mut series: BTreeMap<(String, String), MetricSeries> = BTreeMap::new();

    let mut runs = Vec::new();
    let mut truth = Vec::new();
    let mut db_events = Vec::new();
    let samples_per_slot = scenario.run_spacing_s / scenario.interval_s;

    for slot in 0..scenario.total_runs() {
        let st = slot_state(scenario, &topo, slot);
        let slot_start = scenario.start_epoch + slot as i64 * scenario.run_spacing_s;
        let run_start = slot_start + 2 * scenario.interval_s;

        for q in &scenario.queries {
            let plan = match (&q.alternate_plan, st.alternate.contains(&q.query_id)) {
                (Some(alt), true) => alt,
                _ => &q.plan,
            };
            let cpu_factor = host_of(scenario, q)
                .and_then(|h| st.cpu_factor.get(&h).copied())
                .unwrap_or(1.0);
            let root = simulate_op(plan, &topo, &st, cpu_factor, &noise, &mut rng);
            let run_id = scenario.run_id(&q.query_id, slot);
            let mut causes: Vec<String> = scenario
                .faults
                .iter()
                .filter(|f| f.active_in(slot))
                .filter(|f| f.kind != FaultKind::PlanChange || f.target == q.query_id)
                .map(|f| f.kind.cause_id().to_string())
                .collect();
            causes.sort();
            causes.dedup();
            truth.push(GroundTruthRun {
                query_id: q.query_id.clone(),
                run_id: run_id.clone(),
                slot,
                causes,
            });
            runs.push(PlanSnapshot {
                query_id: q.query_id.clone(),
                run_id,
                started_at: run_start,
                total_elapsed_s: total_of(&root),
                host: q.host.clone(),
                root,
            });
        }

        for ts in st.lock.keys() {
            db_events.push(DbEvent {
                timestamp: run_start + 60,
                code: "lock_wait".into(),
                target: ts.clone(),
            });
        }

        let expected: Vec<(&str, Vec<(&'static str, f64)>)> = components
            .iter()
            .map(|c| {
                (
                    c.id.as_str(),
                    component_metrics(doc, &topo, &st, &c.id, c.kind),
                )
            })
            .collect();
        for k in 0..samples_per_slot {
            let timestamp = slot_start + k * scenario.interval_s;
            for (id, metrics) in &expected {
                for (metric, value) in metrics {
                    let mut v = value * noise.factor(&mut rng);
                    if metric.ends_with("_pct") {
                        v = v.clamp(0.0, 100.0);
                    }
                    let s = series
                        .entry((id.to_string(), metric.to_string()))
                        .or_insert_with(|| {
                            let mut s = MetricSeries::new(*id, *metric);
                            s.interval_s = scenario.interval_s;
                            s
                        });
                    s.samples.push(Sample {
                        timestamp,
                        value: round3(v),
                    });
                }
            }
        }
    }

    let slot_time = |slot: usize| scenario.start_epoch + slot as i64 * scenario.run_spacing_s;
    let mut config_events = Vec::new();
    for f in scenario
        .faults
        .iter()
        .filter(|f| f.kind == FaultKind::ZoningChange)
    {
        let old = doc
            .component(&f.target)
            .and_then(|c| c.attrs.get("zoneset"))
            .and_then(|v| v.as_str())
            .unwrap_or("zoneset_a")
            .to_string();
        let new = if old == "zoneset_b" {
            "zoneset_a"
        } else {
            "zoneset_b"
        }
        .to_string();
        config_events.push(ConfigEvent {
            timestamp: slot_time(f.window.0) + scenario.interval_s,
            component_id: f.target.clone(),
            key: "zoning".into(),
            old_value: old.clone(),
            new_value: new.clone(),
        });
        if f.window.1 + 1 < scenario.total_runs() {
            config_events.push(ConfigEvent {
                timestamp: slot_time(f.window.1 + 1),
                component_id: f.target.clone(),
                key: "zoning".into(),
                old_value: new,
                new_value: old,
            });
        }
    }
    config_events
        .sort_by(|a, b| (a.timestamp, &a.component_id).cmp(&(b.timestamp, &b.component_id)));

    Ok(Dataset {
        scenario: scenario.clone(),
        runs,
        metrics: series.into_values().collect(),
        config_events,
        db_events,
        ground_truth: GroundTruth {
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            runs: truth,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{builtin_scenario, FaultSpec};

    fn baseline() -> Scenario {
        builtin_scenario("baseline").unwrap()
    }

    fn op_time(d: &Dataset, slot: usize, op_id: &str) -> f64 {
        d.runs[slot]
            .operators()
            .into_iter()
            .find(|o| o.op_id == op_id)
            .unwrap()
            .elapsed_s
    }

    fn metric<'a>(d: &'a Dataset, id: &str, name: &str) -> &'a MetricSeries {
        d.metrics
            .iter()
            .find(|s| s.component_id == id && s.metric == name)
            .unwrap()
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate(&baseline()).unwrap();
        let b = generate(&baseline()).unwrap();
        assert_eq!(a.runs, b.runs);
        assert_eq!(a.metrics, b.metrics);
        let mut other = baseline();
        other.seed += 1;
        assert_ne!(generate(&other).unwrap().runs, a.runs);
    }

    #[test]
    fn baseline_has_no_faults() {
        let d = generate(&baseline()).unwrap();
        assert_eq!(d.runs.len(), 25);
        assert!(d.ground_truth.runs.iter().all(|r| r.causes.is_empty()));
        assert!(d.config_events.is_empty() && d.db_events.is_empty());
        for run in &d.runs {
            let sum: f64 = run.operators().iter().map(|o| o.elapsed_s).sum();
            assert!((sum - run.total_elapsed_s).abs() < 1e-9);
            for o in run.operators() {
                let nominal = [
                    ("op-1", 6.0),
                    ("op-2", 10.0),
                    ("op-3", 12.0),
                    ("op-4", 40.0),
                    ("op-5", 20.0),
                ]
                .iter()
                .find(|(id, _)| *id == o.op_id)
                .unwrap()
                .1;
                assert!((o.elapsed_s / nominal - 1.0).abs() <= 0.15 + 1e-12);
            }
        }
    }

    #[test]
    fn lock_adds_wait_proportional_to_nominal() {
        let mut s = baseline();
        s.faults.push(FaultSpec {
            kind: FaultKind::LockContention,
            target: "ts-customers".into(),
            magnitude: 0.5,
            window: (20, 24),
        });
        let clean = generate(&baseline()).unwrap();
        let faulted = generate(&s).unwrap();
        // Same seed, so noise draws line up; only the expected value moves.
        let ratio = op_time(&faulted, 20, "op-5") / op_time(&clean, 20, "op-5");
        assert!((ratio - 1.5).abs() < 1e-9);
        assert_eq!(op_time(&faulted, 20, "op-4"), op_time(&clean, 20, "op-4"));
        assert_eq!(op_time(&faulted, 19, "op-5"), op_time(&clean, 19, "op-5"));
        assert_eq!(faulted.db_events.len(), 5);
        assert!(faulted.db_events.iter().all(|e| e.target == "ts-customers"));
    }

    #[test]
    fn port_congestion_inflates_volume_latency() {
        let mut s = baseline();
        s.faults.push(FaultSpec {
            kind: FaultKind::ControllerPortCongestion,
            target: "cp-1".into(),
            magnitude: 0.3,
            window: (20, 24),
        });
        let clean = generate(&baseline()).unwrap();
        let d = generate(&s).unwrap();
        // Port at 50% base + 30 points -> u = 0.8 -> 5x.
        let ratio = op_time(&d, 21, "op-4") / op_time(&clean, 21, "op-4");
        assert!((ratio - 5.0).abs() < 1e-9);
        assert_eq!(op_time(&d, 21, "op-1"), op_time(&clean, 21, "op-1"));
        let port = metric(&d, "cp-1", "utilization_pct");
        let w = port.values_in(s.start_epoch + 21 * 3600, s.start_epoch + 22 * 3600 - 1);
        assert!(w.iter().all(|v| *v > 70.0));
    }

    #[test]
    fn contention_raises_pool_and_workload_metrics() {
        let s = builtin_scenario("volume_contention").unwrap();
        let d = generate(&s).unwrap();
        let slot = 22;
        let from = s.start_epoch + slot as i64 * 3600;
        let to = from + 3599;
        let mean = |id: &str, m: &str| {
            let v = metric(&d, id, m).values_in(from, to);
            v.iter().sum::<f64>() / v.len() as f64
        };
        // 60% * 1.4 = 84% -> 1 / 0.16 = 6.25x latency.
        assert!((mean("pool-1", "utilization_pct") / 84.0 - 1.0).abs() < 0.05);
        assert!((mean("pool-1", "latency_ms") / (5.0 * 6.25) - 1.0).abs() < 0.05);
        assert!((mean("vol-orders", "latency_ms") / (4.0 * 6.25) - 1.0).abs() < 0.05);
        assert!(mean("ext-backup", "iops") > 1500.0);
        assert!((mean("vol-temp", "latency_ms") / 3.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn saturated_pool_multiplies_latency_by_twenty() {
        let mut s = baseline();
        s.faults.push(FaultSpec {
            kind: FaultKind::VolumeContention,
            target: "pool-1".into(),
            magnitude: 0.7,
            window: (20, 24),
        });
        // pool-1 runs at 60%: 0.6 * 1.7 = 1.02, capped at 0.95, so 1 / 0.05.
        let expected = 20.0;
        let clean = generate(&baseline()).unwrap();
        let d = generate(&s).unwrap();
        for op in ["op-4", "op-5"] {
            let ratio = op_time(&d, 23, op) / op_time(&clean, 23, op);
            assert!((ratio - expected).abs() < 1e-9, "{op}: {ratio}");
        }
        // op-2 reads ts-temp on pool-2, which is not contended.
        assert_eq!(op_time(&d, 23, "op-2"), op_time(&clean, 23, "op-2"));
        let from = s.start_epoch + 23 * 3600;
        let v = metric(&d, "vol-orders", "latency_ms").values_in(from, from + 3599);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean / (4.0 * expected) - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn emitted_series_are_regular() {
        let d = generate(&builtin_scenario("combined").unwrap()).unwrap();
        for series in &d.metrics {
            series.check().unwrap();
            assert_eq!(series.samples.len(), 25 * 12);
            assert!(series
                .samples
                .windows(2)
                .all(|w| w[1].timestamp - w[0].timestamp == 300));
        }
    }

    #[test]
    fn ground_truth_follows_fault_windows() {
        let s = builtin_scenario("combined").unwrap();
        let d = generate(&s).unwrap();
        for r in &d.ground_truth.runs {
            let mut expected = Vec::new();
            if (20..=24).contains(&r.slot) {
                expected.push("db_lock_contention".to_string());
            }
            if (22..=24).contains(&r.slot) {
                expected.push("volume_contention".to_string());
            }
            assert_eq!(r.causes, expected, "slot {}", r.slot);
        }
    }

    #[test]
    fn zoning_change_emits_config_events() {
        let s = builtin_scenario("zoning_change").unwrap();
        let d = generate(&s).unwrap();
        assert_eq!(d.config_events.len(), 1);
        let e = &d.config_events[0];
        assert_eq!(
            (e.component_id.as_str(), e.key.as_str()),
            ("sw-a", "zoning")
        );
        assert_ne!(e.old_value, e.new_value);
    }

    #[test]
    fn plan_change_switches_shape() {
        let s = builtin_scenario("plan_change").unwrap();
        let d = generate(&s).unwrap();
        let kinds = |slot: usize| -> Vec<String> {
            d.runs[slot]
                .operators()
                .iter()
                .map(|o| o.op_kind.clone())
                .collect()
        };
        assert_ne!(kinds(19), kinds(20));
        assert_eq!(kinds(19), kinds(0));
        assert_eq!(
            d.ground_truth.runs[20].causes,
            vec!["plan_change".to_string()]
        );
        assert!(d.ground_truth.runs[19].causes.is_empty());
    }

    #[test]
    fn written_directory_loads_back() {
        let s = builtin_scenario("combined").unwrap();
        let d = generate(&s).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("data");
        d.write(&out).unwrap();
        let loaded = DataDir::open(&out).unwrap();
        let mem = d.to_data_dir().unwrap();
        assert_eq!(loaded.metrics, mem.metrics);
        assert_eq!(loaded.config_events, mem.config_events);
        assert_eq!(loaded.db_events, mem.db_events);
        assert_eq!(loaded.store.runs("q_report"), mem.store.runs("q_report"));
        assert!(matches!(d.write(&out), Err(SimError::OutputNotEmpty(_))));
    }

    #[test]
    fn metrics_split_by_utc_day() {
        let d = generate(&baseline()).unwrap();
        let days = split_by_day(&d.metrics);
        // 25 hourly slots starting at midnight UTC span two days.
        assert_eq!(
            days.keys().cloned().collect::<Vec<_>>(),
            ["2023-11-15", "2023-11-16"]
        );
    }
}
