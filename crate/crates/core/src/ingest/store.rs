use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    check_file_id, parse_json, read_text, to_canonical_json, IngestError, PlanSnapshot,
    DEFAULT_INTERVAL_S,
};
use crate::model::plan_fingerprint;

/// A stored run: the plan snapshot plus the metric window it is analysed
/// against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub fingerprint: String,
    pub window_start: i64,
    pub window_end: i64,
    pub snapshot: PlanSnapshot,
}

impl RunRecord {
    /// Wraps a snapshot, widening its execution span by one monitoring
    /// interval on each side.
    pub fn new(snapshot: PlanSnapshot, interval_s: i64) -> Result<Self, IngestError> {
        let fingerprint = plan_fingerprint(&snapshot)
            .map_err(|e| IngestError::schema(Path::new(&snapshot.run_id), vec![e.to_string()]))?;
        Ok(Self {
            fingerprint,
            window_start: snapshot.started_at - interval_s,
            window_end: snapshot.ended_at() + interval_s,
            snapshot,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.snapshot.run_id
    }

    pub fn query_id(&self) -> &str {
        &self.snapshot.query_id
    }

    pub fn total_s(&self) -> f64 {
        self.snapshot.total_elapsed_s
    }
}

/// Append-only store of runs, one JSON document per run under
/// `<root>/<query_id>/<seq>-<run_id>.json`.
///
/// Single writer; any number of readers may open the same directory.
#[derive(Debug)]
pub struct RunStore {
    root: PathBuf,
    interval_s: i64,
    runs: BTreeMap<String, Vec<RunRecord>>,
    run_ids: HashSet<String>,
    persist: bool,
}

impl RunStore {
    /// Opens (creating if needed) the store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| IngestError::io(&root, e))?;
        let mut store = Self {
            root,
            interval_s: DEFAULT_INTERVAL_S,
            runs: BTreeMap::new(),
            run_ids: HashSet::new(),
            persist: true,
        };
        store.load()?;
        Ok(store)
    }

    /// A store that lives only in memory; appends never touch the disk.
    pub fn in_memory(interval_s: i64) -> Self {
        Self {
            root: PathBuf::new(),
            interval_s,
            runs: BTreeMap::new(),
            run_ids: HashSet::new(),
            persist: false,
        }
    }

    /// Opens a store without creating the directory; a missing directory
    /// is an error.
    pub fn open_existing(root: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(IngestError::io(
                &root,
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "run store directory not found",
                ),
            ));
        }
        Self::open(root)
    }

    /// Interval used to widen run windows on append.
    pub fn with_interval(mut self, interval_s: i64) -> Self {
        self.interval_s = interval_s;
        self
    }

    fn load(&mut self) -> Result<(), IngestError> {
        let mut query_dirs: Vec<PathBuf> = fs::read_dir(&self.root)
            .map_err(|e| IngestError::io(&self.root, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        query_dirs.sort();
        for dir in query_dirs {
            let mut files: Vec<(u64, PathBuf)> = Vec::new();
            for entry in fs::read_dir(&dir).map_err(|e| IngestError::io(&dir, e))? {
                let path = entry.map_err(|e| IngestError::io(&dir, e))?.path();
                if path.extension().is_none_or(|x| x != "json") {
                    continue;
                }
                let name = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default();
                let seq = name
                    .split_once('-')
                    .and_then(|(seq, _)| seq.parse::<u64>().ok())
                    .ok_or_else(|| {
                        IngestError::schema(
                            &path,
                            vec!["file name is not `<seq>-<run_id>.json`".into()],
                        )
                    })?;
                files.push((seq, path));
            }
            files.sort();
            for (expected, (seq, path)) in files.iter().enumerate() {
                if *seq != expected as u64 {
                    return Err(IngestError::schema(
                        path,
                        vec![format!("sequence number {seq}, expected {expected}")],
                    ));
                }
                let record: RunRecord = parse_json(path, &read_text(path)?)?;
                let mut violations = record.snapshot.violations();
                let dir_name = dir.file_name().and_then(|s| s.to_str()).unwrap_or_default();
                if record.query_id() != dir_name {
                    violations.push(format!(
                        "query_id `{}` does not match directory `{dir_name}`",
                        record.query_id()
                    ));
                }
                if !violations.is_empty() {
                    return Err(IngestError::schema(path, violations));
                }
                if !self.run_ids.insert(record.run_id().to_string()) {
                    return Err(IngestError::DuplicateRunId(record.run_id().to_string()));
                }
                self.runs
                    .entry(record.query_id().to_string())
                    .or_default()
                    .push(record);
            }
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Appends a run and returns its index within its query. The document
    /// is synced to disk before this returns.
    pub fn append_run(&mut self, snapshot: PlanSnapshot) -> Result<usize, IngestError> {
        check_file_id(&snapshot.query_id)?;
        check_file_id(&snapshot.run_id)?;
        if self.run_ids.contains(&snapshot.run_id) {
            return Err(IngestError::DuplicateRunId(snapshot.run_id));
        }
        let violations = snapshot.violations();
        if !violations.is_empty() {
            return Err(IngestError::schema(Path::new(&snapshot.run_id), violations));
        }
        let record = RunRecord::new(snapshot, self.interval_s)?;
        let query_id = record.query_id().to_string();
        let index = self.runs.get(&query_id).map_or(0, Vec::len);
        if self.persist {
            self.write_record(&record, index)?;
        }
        self.run_ids.insert(record.run_id().to_string());
        self.runs.entry(query_id).or_default().push(record);
        Ok(index)
    }

    fn write_record(&self, record: &RunRecord, index: usize) -> Result<(), IngestError> {
        let dir = self.root.join(record.query_id());
        fs::create_dir_all(&dir).map_err(|e| IngestError::io(&dir, e))?;
        let path = dir.join(format!("{index:06}-{}.json", record.run_id()));
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(|e| IngestError::io(&tmp, e))?;
            f.write_all(to_canonical_json(&record).as_bytes())
                .map_err(|e| IngestError::io(&tmp, e))?;
            f.sync_all().map_err(|e| IngestError::io(&tmp, e))?;
        }
        fs::rename(&tmp, &path).map_err(|e| IngestError::io(&path, e))?;
        if let Ok(d) = fs::File::open(&dir) {
            let _ = d.sync_all();
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.run_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.run_ids.is_empty()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.runs.keys().map(String::as_str)
    }

    /// All runs of a query in append order.
    pub fn runs(&self, query_id: &str) -> &[RunRecord] {
        self.runs.get(query_id).map_or(&[], Vec::as_slice)
    }

    /// Index and record of a run.
    pub fn find(&self, query_id: &str, run_id: &str) -> Option<(usize, &RunRecord)> {
        self.runs(query_id)
            .iter()
            .enumerate()
            .find(|(_, r)| r.run_id() == run_id)
    }

    /// The most recent `limit` runs of `query_id` with the given plan
    /// fingerprint, newest last.
    pub fn history(&self, query_id: &str, fingerprint: &str, limit: usize) -> Vec<&RunRecord> {
        select_recent(self.runs(query_id), Some(fingerprint), limit)
    }

    /// Like [`RunStore::history`], restricted to runs appended before
    /// `index`. `fingerprint = None` accepts any plan.
    pub fn history_before(
        &self,
        query_id: &str,
        index: usize,
        fingerprint: Option<&str>,
        limit: usize,
    ) -> Vec<&RunRecord> {
        let runs = self.runs(query_id);
        select_recent(&runs[..index.min(runs.len())], fingerprint, limit)
    }
}

fn select_recent<'a>(
    runs: &'a [RunRecord],
    fingerprint: Option<&str>,
    limit: usize,
) -> Vec<&'a RunRecord> {
    let mut picked: Vec<&RunRecord> = runs
        .iter()
        .rev()
        .filter(|r| fingerprint.is_none_or(|fp| r.fingerprint == fp))
        .take(limit)
        .collect();
    picked.reverse();
    picked
}
