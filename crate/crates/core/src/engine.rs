//! The warehouse behind one handle: a single-writer store, published cube
//! indexes and optional on-disk persistence. Server and CLI both drive this.
//!
//! Besides the storage layout, a persisted engine keeps one
//! `cube/<fact>.json` record per built cube. Cuboids are not written; a
//! record whose base checksum still matches is rebuilt on first use, and a
//! mismatching one is reported stale.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::{self, build_cube, plan_lattice, CubeError, CubeIndex, CubePolicy};
use crate::etl::{self, quality_report, EtlError, IngestReport, OverallQuality, QualityReport, TransformPolicy};
use crate::olap::{compile_query, execute, ExecOptions, OlapError, Query, ResultGrid};
use crate::schema::{builtin_schema, ConstellationSchema};
use crate::storage::{persist, FactPartition, Partition, Snapshot, StorageError, Store};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Olap(#[from] OlapError),
    #[error(transparent)]
    Etl(#[from] EtlError),
    #[error(transparent)]
    Cube(#[from] CubeError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error classes shared by the HTTP codes and CLI exit statuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Semantic,
    NotFound,
    Conflict,
    Internal,
}

fn storage_kind(e: &StorageError) -> ErrorKind {
    match e {
        StorageError::UnknownTable(_) => ErrorKind::NotFound,
        StorageError::SchemaInvalid(_) => ErrorKind::Semantic,
        _ => ErrorKind::Internal,
    }
}

impl EngineError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            EngineError::Olap(OlapError::Parse { .. }) => ErrorKind::Parse,
            EngineError::Olap(OlapError::Storage(e)) => storage_kind(e),
            EngineError::Olap(_) => ErrorKind::Semantic,
            EngineError::Etl(EtlError::EmptySource(_) | EtlError::MalformedHeader { .. }) => ErrorKind::Parse,
            EngineError::Etl(EtlError::HeaderMismatch { .. } | EtlError::InvalidPolicy(_)) => ErrorKind::Semantic,
            EngineError::Etl(EtlError::Storage(e)) | EngineError::Storage(e) => storage_kind(e),
            EngineError::Etl(EtlError::Io(..)) => ErrorKind::Internal,
            EngineError::Cube(CubeError::UnknownTable(_)) => ErrorKind::NotFound,
            EngineError::Cube(CubeError::InvalidPolicy(_)) => ErrorKind::Semantic,
            EngineError::Cube(CubeError::Io { .. }) => ErrorKind::Internal,
            EngineError::NotFound(_) => ErrorKind::NotFound,
            EngineError::Conflict(_) => ErrorKind::Conflict,
            EngineError::Io { .. } => ErrorKind::Internal,
        }
    }
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

/// What is kept on disk for a built cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CubeRecord {
    fact: String,
    policy: CubePolicy,
    built_at_epoch: u64,
    base_rows: usize,
    base_checksum: String,
    cuboids: usize,
    skipped: usize,
    entries: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CubeSummary {
    pub fact: String,
    pub policy: CubePolicy,
    pub cuboids: usize,
    pub skipped: usize,
    pub entries: usize,
    pub epoch: u64,
    pub base_rows: usize,
    pub stale: bool,
}

#[derive(Clone)]
struct CubeSlot {
    record: CubeRecord,
    index: Option<Arc<CubeIndex>>,
}

/// An ingest run together with the overall quality before and after it.
#[derive(Clone, Debug, Serialize)]
pub struct IngestOutcome {
    pub load: IngestReport,
    pub quality_before: OverallQuality,
    pub quality_after: OverallQuality,
}

/// FNV-1a over the key and measure columns of a partition.
fn checksum(part: &FactPartition) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: [u8; 8]| {
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    eat((part.len() as u64).to_le_bytes());
    for d in 0..part.dimension_count() {
        part.keys(d).iter().for_each(|k| eat(k.to_le_bytes()));
    }
    for m in 0..part.measure_count() {
        part.measure(m).iter().for_each(|x| eat(x.to_bits().to_le_bytes()));
    }
    format!("{h:016x}")
}

fn record_for(index: &CubeIndex, base: &FactPartition) -> CubeRecord {
    CubeRecord {
        fact: index.fact().to_string(),
        policy: index.plan().policy,
        built_at_epoch: index.built_at_epoch(),
        base_rows: index.base_rows(),
        base_checksum: checksum(base),
        cuboids: index.cuboids().len(),
        skipped: index.plan().skipped.len(),
        entries: index.total_entries(),
    }
}

pub struct Engine {
    root: Option<PathBuf>,
    store: Mutex<Store>,
    cubes: RwLock<BTreeMap<String, CubeSlot>>,
    building: Mutex<HashSet<String>>,
    policy: TransformPolicy,
    parallel_builds: bool,
}

impl Engine {
    /// An engine with no persistence.
    pub fn in_memory(schema: ConstellationSchema) -> Result<Self> {
        Ok(Self::with_store(None, Store::new(schema)?))
    }

    /// Opens the store at `root`, creating an empty one (with `schema`, or
    /// the builtin schema) when `root` holds none yet.
    pub fn open(root: &Path, schema: Option<ConstellationSchema>) -> Result<Self> {
        let store = if root.join("schema.txt").exists() {
            persist::open(root, schema)?
        } else {
            Store::new(schema.unwrap_or_else(builtin_schema))?
        };
        let engine = Self::with_store(Some(root.to_path_buf()), store);
        engine.load_cube_records()?;
        Ok(engine)
    }

    fn with_store(root: Option<PathBuf>, store: Store) -> Self {
        Self {
            root,
            store: Mutex::new(store),
            cubes: RwLock::new(BTreeMap::new()),
            building: Mutex::new(HashSet::new()),
            policy: TransformPolicy::default(),
            parallel_builds: true,
        }
    }

    pub fn with_policy(mut self, policy: TransformPolicy) -> Result<Self> {
        policy.validate()?;
        self.policy = policy;
        Ok(self)
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn schema(&self) -> Arc<ConstellationSchema> {
        self.store.lock().schema().clone()
    }

    pub fn snapshot(&self) -> Snapshot {
        self.store.lock().snapshot()
    }

    fn cube_dir(root: &Path) -> PathBuf {
        root.join("cube")
    }

    fn load_cube_records(&self) -> Result<()> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let dir = Self::cube_dir(root);
        if !dir.exists() {
            return Ok(());
        }
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| EngineError::Io { path, source }
        };
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        entries.sort();
        let mut cubes = self.cubes.write();
        for path in entries {
            let bytes = fs::read(&path).map_err(io(&path))?;
            let record: CubeRecord = serde_json::from_slice(&bytes).map_err(|e| {
                EngineError::Storage(StorageError::Corrupt {
                    path: path.display().to_string(),
                    detail: e.to_string(),
                })
            })?;
            cubes.insert(record.fact.clone(), CubeSlot { record, index: None });
        }
        Ok(())
    }

    fn persist(&self, store: &mut Store) -> Result<()> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        persist::save(&store.snapshot(), root)?;
        Ok(())
    }

    fn persist_cube(&self, record: &CubeRecord) -> Result<()> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let path = Self::cube_dir(root).join(format!("{}.json", record.fact));
        let bytes = serde_json::to_vec_pretty(record).expect("record serializes");
        persist::write_atomic(&path, &bytes)?;
        Ok(())
    }

    fn is_stale(slot: &CubeSlot, snap: &Snapshot) -> Result<bool> {
        Ok(match &slot.index {
            Some(index) => index.is_stale(snap),
            None => checksum(&snap.fact(&slot.record.fact)?.base) != slot.record.base_checksum,
        })
    }

    /// The fresh cube index for `fact`, rebuilding a persisted one on first use.
    fn fresh_cube(&self, fact: &str, snap: &Snapshot) -> Result<Option<Arc<CubeIndex>>> {
        let Some(slot) = self.cubes.read().get(fact).cloned() else {
            return Ok(None);
        };
        if Self::is_stale(&slot, snap)? {
            return Ok(None);
        }
        if let Some(index) = slot.index {
            return Ok(Some(index));
        }
        let plan = plan_lattice(snap, fact, slot.record.policy)?;
        let index = Arc::new(build_cube(snap, &plan, self.parallel_builds)?);
        let mut cubes = self.cubes.write();
        if let Some(s) = cubes.get_mut(fact) {
            if s.record == slot.record {
                s.index = Some(index.clone());
            }
        }
        Ok(Some(index))
    }

    pub fn compile(&self, text: &str) -> Result<Query> {
        Ok(compile_query(&self.schema(), text)?)
    }

    pub fn query(&self, q: &Query, opts: ExecOptions) -> Result<ResultGrid> {
        let snap = self.snapshot();
        let cube = if opts.force_scan {
            None
        } else {
            self.fresh_cube(&q.fact, &snap)?
        };
        Ok(execute(&snap, cube.as_deref(), q, opts)?)
    }

    pub fn query_text(&self, text: &str) -> Result<ResultGrid> {
        let q = self.compile(text)?;
        self.query(&q, ExecOptions::default())
    }

    /// Runs one CSV source through extract, transform and load.
    pub fn ingest(&self, table: &str, data: &[u8], source_id: &str, partition: Partition) -> Result<IngestOutcome> {
        let mut store = self.store.lock();
        let before = quality_report(&store.snapshot()).overall;
        let report = etl::ingest(&mut store, table, data, source_id, partition, &self.policy)?;
        let after = quality_report(&store.snapshot()).overall;
        self.persist(&mut store)?;
        if let Some(root) = &self.root {
            if !report.quarantine.is_empty() {
                let dir = root.join("quarantine");
                fs::create_dir_all(&dir).map_err(|source| EngineError::Io {
                    path: dir.display().to_string(),
                    source,
                })?;
                let path = dir.join(format!("{table}.quarantine.csv"));
                etl::write_quarantine(&path, &report.header, &report.quarantine)?;
            }
        }
        Ok(IngestOutcome {
            load: report,
            quality_before: before,
            quality_after: after,
        })
    }

    /// Loads a dataset directory in the storage layout: every `dim/*.csv`
    /// first, then every `fact/<name>.base.csv` into `partition`.
    pub fn ingest_dataset(&self, dir: &Path, partition: Partition) -> Result<Vec<IngestOutcome>> {
        let schema = self.schema();
        let mut out = Vec::new();
        let read = |path: &Path| {
            fs::read(path).map_err(|source| EngineError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let mut any = false;
        for def in schema.dimensions.values() {
            let path = persist::dim_path(dir, &def.name);
            if path.exists() {
                any = true;
                out.push(self.ingest(&def.name, &read(&path)?, &path.display().to_string(), Partition::Base)?);
            }
        }
        for def in schema.facts.values() {
            let path = persist::fact_path(dir, &def.name, Partition::Base);
            if path.exists() {
                any = true;
                out.push(self.ingest(&def.name, &read(&path)?, &path.display().to_string(), partition)?);
            }
        }
        if !any {
            return Err(EngineError::NotFound(format!("no dataset files under {}", dir.display())));
        }
        Ok(out)
    }

    pub fn quality(&self) -> QualityReport {
        quality_report(&self.snapshot())
    }

    /// Builds and publishes a cube for `fact`, replacing any earlier one.
    pub fn build_cube(&self, fact: &str, policy: CubePolicy) -> Result<CubeSummary> {
        if !self.building.lock().insert(fact.to_string()) {
            return Err(EngineError::Conflict(format!("a cube build for `{fact}` is already running")));
        }
        let result = (|| {
            let snap = self.snapshot();
            let plan = plan_lattice(&snap, fact, policy)?;
            let index = Arc::new(build_cube(&snap, &plan, self.parallel_builds)?);
            let record = record_for(&index, &snap.fact(fact)?.base);
            self.persist_cube(&record)?;
            let stale = index.is_stale(&self.snapshot());
            self.cubes.write().insert(fact.to_string(), CubeSlot { record: record.clone(), index: Some(index) });
            Ok(summary(&record, stale))
        })();
        self.building.lock().remove(fact);
        result
    }

    pub fn cubes(&self) -> Result<Vec<CubeSummary>> {
        let snap = self.snapshot();
        let cubes = self.cubes.read().clone();
        cubes
            .values()
            .map(|slot| Ok(summary(&slot.record, Self::is_stale(slot, &snap)?)))
            .collect()
    }

    /// Moves `fact`'s delta rows into base; its cube becomes stale.
    pub fn merge_delta(&self, fact: &str) -> Result<usize> {
        let mut store = self.store.lock();
        let n = cube::merge_delta(&mut store, fact)?;
        self.persist(&mut store)?;
        Ok(n)
    }

    /// Writes the canonical CSV of every cuboid of `fact`'s fresh cube.
    pub fn export_cube(&self, fact: &str, dir: &Path) -> Result<Vec<PathBuf>> {
        let snap = self.snapshot();
        snap.fact(fact)?;
        if !self.cubes.read().contains_key(fact) {
            return Err(EngineError::NotFound(format!("no cube built for `{fact}`")));
        }
        let index = self
            .fresh_cube(fact, &snap)?
            .ok_or_else(|| EngineError::Conflict(format!("the cube for `{fact}` is stale; rebuild it first")))?;
        Ok(cube::export_cube(&index, dir)?)
    }

    /// Writes the whole store to its root; a no-op without persistence.
    pub fn save(&self) -> Result<()> {
        let mut store = self.store.lock();
        self.persist(&mut store)
    }
}

fn summary(r: &CubeRecord, stale: bool) -> CubeSummary {
    CubeSummary {
        fact: r.fact.clone(),
        policy: r.policy,
        cuboids: r.cuboids,
        skipped: r.skipped,
        entries: r.entries,
        epoch: r.built_at_epoch,
        base_rows: r.base_rows,
        stale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GenConfig};
    use crate::olap::Source;

    fn small() -> GenConfig {
        GenConfig {
            farmers: 5,
            crops: 4,
            products: 6,
            rows_per_fact: 200,
            ..crate::datagen::default_config()
        }
    }

    #[test]
    fn error_kinds() {
        let e = Engine::in_memory(builtin_schema()).unwrap();
        let kind = |r: Result<ResultGrid>| r.unwrap_err().kind();
        assert_eq!(kind(e.query_text("from Yield group")), ErrorKind::Parse);
        assert_eq!(kind(e.query_text("from Harvest measure row_count")), ErrorKind::Semantic);
        assert_eq!(e.ingest("Harvest", b"a\n1\n", "x", Partition::Base).unwrap_err().kind(), ErrorKind::NotFound);
        assert_eq!(e.ingest("Crop", b"", "x", Partition::Base).unwrap_err().kind(), ErrorKind::Parse);
        assert_eq!(e.build_cube("Harvest", CubePolicy::Full).unwrap_err().kind(), ErrorKind::NotFound);
        assert_eq!(e.build_cube("Yield", CubePolicy::Cap(0)).unwrap_err().kind(), ErrorKind::Semantic);
        assert_eq!(e.export_cube("Yield", Path::new("/nonexistent")).unwrap_err().kind(), ErrorKind::NotFound);
    }

    #[test]
    fn cube_lifecycle_in_memory() {
        let dir = tempfile::tempdir().unwrap();
        generate(&small(), dir.path()).unwrap();
        let e = Engine::in_memory(builtin_schema()).unwrap();
        let reports = e.ingest_dataset(dir.path(), Partition::Base).unwrap();
        assert_eq!(reports.len(), 23);
        assert!(reports.iter().all(|r| r.load.is_clean()));
        let s = e.build_cube("Yield", CubePolicy::Full).unwrap();
        assert_eq!(s.cuboids, 12);
        assert!(!s.stale);
        let g = e.query_text("from Yield group by Crop.name measure quantity_t").unwrap();
        assert_eq!(g.provenance.source, Source::Cuboid);

        let row = b"crop_id,field_id,farmer_id,quantity_t,area_ha\n1,1,1,1000,1\n";
        let out = e.ingest("Yield", row, "late", Partition::Delta).unwrap();
        assert_eq!(out.load.load.inserted + out.load.load.rejected, 1);
        assert!(out.quality_after.timeliness >= out.quality_before.timeliness);
        assert!(!e.cubes().unwrap()[0].stale);
        let absorbed = e.merge_delta("Yield").unwrap();
        assert_eq!(absorbed, out.load.load.inserted);
        assert!(e.cubes().unwrap()[0].stale);
        let g2 = e.query_text("from Yield group by Crop.name measure quantity_t").unwrap();
        assert_eq!(g2.provenance.source, Source::Scan);
        assert!(matches!(e.export_cube("Yield", dir.path()), Err(EngineError::Conflict(_))));
    }

    #[test]
    fn persisted_cubes_survive_reopen() {
        let data = tempfile::tempdir().unwrap();
        let root = tempfile::tempdir().unwrap();
        generate(&small(), data.path()).unwrap();
        {
            let e = Engine::open(root.path(), None).unwrap();
            e.ingest_dataset(data.path(), Partition::Base).unwrap();
            e.build_cube("Trading", CubePolicy::Cap(50)).unwrap();
            e.build_cube("Yield", CubePolicy::Full).unwrap();
        }
        let e = Engine::open(root.path(), None).unwrap();
        let list = e.cubes().unwrap();
        assert_eq!(list.iter().map(|c| c.fact.as_str()).collect::<Vec<_>>(), ["Trading", "Yield"]);
        assert!(list.iter().all(|c| !c.stale));
        assert_eq!(list[0].policy, CubePolicy::Cap(50));
        let g = e.query_text("from Yield measure row_count").unwrap();
        assert_eq!(g.provenance.source, Source::Cuboid);
        assert!(root.path().join("cube/Yield.json").exists());

        e.merge_delta("Yield").unwrap();
        let e2 = Engine::open(root.path(), None).unwrap();
        assert!(!e2.cubes().unwrap()[1].stale, "merging an empty delta keeps the base");
        e2.ingest("Yield", b"crop_id,field_id,farmer_id,quantity_t,area_ha\n1,1,1,5,1\n", "x", Partition::Delta)
            .unwrap();
        e2.merge_delta("Yield").unwrap();
        let e3 = Engine::open(root.path(), None).unwrap();
        assert!(e3.cubes().unwrap()[1].stale);
        let g = e3.query_text("from Yield measure row_count").unwrap();
        assert_eq!(g.provenance.source, Source::Scan);
    }

    #[test]
    fn concurrent_builds_conflict() {
        let e = Engine::in_memory(builtin_schema()).unwrap();
        e.building.lock().insert("Yield".into());
        assert_eq!(e.build_cube("Yield", CubePolicy::Full).unwrap_err().kind(), ErrorKind::Conflict);
        e.building.lock().clear();
        assert!(e.build_cube("Yield", CubePolicy::Full).is_ok());
    }
}
