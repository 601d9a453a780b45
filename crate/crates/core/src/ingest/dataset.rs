use std::path::{Path, PathBuf};

use super::{
    load_config_events, load_db_events, load_metrics_dir, load_topology, ConfigEvent, DbEvent,
    IngestError, MetricFilter, MetricSeries, RunStore, TopologyDoc,
};

/// Everything in a data directory, loaded and validated.
#[derive(Debug)]
pub struct DataDir {
    pub root: PathBuf,
    pub topology: TopologyDoc,
    pub store: RunStore,
    pub metrics: Vec<MetricSeries>,
    pub config_events: Vec<ConfigEvent>,
    pub db_events: Vec<DbEvent>,
}

impl DataDir {
    pub const TOPOLOGY: &'static str = "topology.json";
    pub const RUNS: &'static str = "runs";
    pub const METRICS: &'static str = "metrics";
    pub const EVENTS: &'static str = "events.jsonl";
    pub const DB_EVENTS: &'static str = "db_events.jsonl";
    pub const GROUND_TRUTH: &'static str = "ground_truth.json";

    pub fn open(root: impl AsRef<Path>) -> Result<Self, IngestError> {
        let root = root.as_ref().to_path_buf();
        Ok(Self {
            topology: load_topology(&root.join(Self::TOPOLOGY))?,
            store: RunStore::open_existing(root.join(Self::RUNS))?,
            metrics: load_metrics_dir(&root.join(Self::METRICS), &MetricFilter::default())?,
            config_events: load_config_events(&root.join(Self::EVENTS))?,
            db_events: load_db_events(&root.join(Self::DB_EVENTS))?,
            root,
        })
    }
}
