//! Staged assessment runs with persisted, cache-checked artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use trajfair::candidates::{mine_family, Candidate};
use trajfair::geo::{BoundingBox, Point, Projection};
use trajfair::io;
use trajfair::mapping::{map_family, reduce_family, CellSet, ObjectIndex};
use trajfair::scan::{LabelVector, ScanIndex, ScanResult};
use trajfair::trajectory::{group_by_object, segment_all, ObjectId, StopSegment, TrajectorySample};
use trajfair::zoning::{build_family, check_coarseness, CellIndex, GridFamily};
use trajfair::{Error, Result};

use crate::config::{hash_bytes, hash_json, Coordinates, RunConfig, Seeds};

pub const MANIFEST: &str = "manifest.json";
pub const STOPS: &str = "stops.csv";
pub const GRIDS: &str = "grids.json";
pub const CELLSETS: &str = "cellsets.csv";
pub const CANDIDATES: &str = "candidates.jsonl";
pub const SCAN_RESULT: &str = "scan_result.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash of the stage's configuration and upstream artifacts.
    pub key: String,
    /// SHA-256 of every file the stage wrote.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<Projection>,
    #[serde(default)]
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, seeds: Seeds) -> Self {
        Self {
            command: command.to_owned(),
            config_hash: cfg.hash(),
            seeds,
            config: cfg.clone(),
            projection: None,
            stages: BTreeMap::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Err(Error::MissingStage(format!("{} has no {MANIFEST}", dir.display())));
        }
        io::read_json(&path)
    }
}

/// Hashes a file's bytes.
pub fn file_hash(path: &Path) -> Result<String> {
    Ok(hash_bytes(&std::fs::read(path)?))
}

/// Extreme candidate as persisted, with the grid named by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeRecord {
    pub grid: String,
    pub cells: Vec<CellIndex>,
    pub support: usize,
    pub t_c: f64,
    pub p_c: f64,
}

/// Scan result as persisted, with object ids instead of dense indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub config_hash: String,
    pub t_obs: f64,
    pub p_hat: f64,
    pub rejected: bool,
    pub alpha: f64,
    pub n_sims: u32,
    pub seed: u64,
    pub extreme: Vec<ExtremeRecord>,
    pub u_hat: Vec<ObjectId>,
}

impl ScanRecord {
    pub fn new(result: &ScanResult, family: &GridFamily, objects: &ObjectIndex, config_hash: &str) -> Self {
        Self {
            config_hash: config_hash.to_owned(),
            t_obs: result.t_obs,
            p_hat: result.p_hat,
            rejected: result.rejected,
            alpha: result.alpha,
            n_sims: result.n_sims,
            seed: result.seed,
            extreme: result
                .extreme
                .iter()
                .map(|e| ExtremeRecord {
                    grid: family.grid(e.grid).id.clone(),
                    cells: e.cells.clone(),
                    support: e.support,
                    t_c: e.t_c,
                    p_c: e.p_c,
                })
                .collect(),
            u_hat: result.u_hat.iter().map(|&o| objects.id(o).clone()).collect(),
        }
    }
}

/// A run directory and its manifest.
pub struct Run {
    pub cfg: RunConfig,
    pub dir: PathBuf,
    pub manifest: Manifest,
    previous: BTreeMap<String, StageRecord>,
}

impl Run {
    pub fn open(command: &str, cfg: RunConfig, seeds: Seeds) -> Result<Self> {
        let dir = cfg.output.clone();
        std::fs::create_dir_all(&dir)?;
        let previous = Manifest::load(&dir).map(|m| m.stages).unwrap_or_default();
        let manifest = Manifest::new(command, &cfg, seeds);
        Ok(Self {
            cfg,
            dir,
            manifest,
            previous,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn save_manifest(&self) -> Result<()> {
        io::write_json(&self.path(MANIFEST), &self.manifest)
    }

    fn artifact_hash(&self, stage: &str) -> String {
        self.manifest.stages[stage]
            .artifacts
            .values()
            .cloned()
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Runs `compute` and `write` unless the stage's previous record has the
    /// same key and its files are unchanged on disk, in which case `load`
    /// reads the artifact back.
    fn stage<T>(
        &mut self,
        name: &str,
        key_input: &impl Serialize,
        files: &[&str],
        compute: impl FnOnce(&Self) -> Result<T>,
        write: impl FnOnce(&Self, &T) -> Result<()>,
        load: impl FnOnce(&Self) -> Result<T>,
    ) -> Result<T> {
        let key = hash_json(&(name, key_input));
        if let Some(prev) = self.previous.get(name) {
            let fresh = prev.key == key
                && files.iter().all(|f| {
                    prev.artifacts.get(*f).is_some_and(|h| file_hash(&self.path(f)).ok().as_ref() == Some(h))
                });
            if fresh {
                log::info!("stage {name}: unchanged, reusing artifacts");
                let value = load(self)?;
                self.manifest.stages.insert(name.to_owned(), prev.clone());
                return Ok(value);
            }
        }
        log::info!("stage {name}: running");
        let value = compute(self)?;
        write(self, &value)?;
        let artifacts = files
            .iter()
            .map(|f| Ok(((*f).to_owned(), file_hash(&self.path(f))?)))
            .collect::<Result<_>>()?;
        self.manifest
            .stages
            .insert(name.to_owned(), StageRecord { key, artifacts });
        self.save_manifest()?;
        Ok(value)
    }

    fn input(&self, field: &str, path: &Option<PathBuf>) -> Result<PathBuf> {
        path.clone()
            .ok_or_else(|| Error::Config(format!("inputs.{field}: required by {}", self.manifest.command)))
    }

    fn input_hash(&self, path: &Path) -> Result<String> {
        file_hash(path).map_err(|e| Error::Parse {
            path: path.to_owned(),
            message: format!("cannot read: {e}"),
        })
    }

    fn projection_for(&mut self, coords: impl Iterator<Item = (f64, f64)>) -> Option<Projection> {
        if self.cfg.coordinates == Coordinates::Wgs84 {
            let proj = Projection::centered(coords);
            self.manifest.projection = proj;
            proj
        } else {
            None
        }
    }

    pub fn read_labels(&self) -> Result<(ObjectIndex, LabelVector)> {
        io::read_labels(&self.input("labels", &self.cfg.inputs.labels)?)
    }

    /// Stop segments from the stops input, or segmented from the trajectory
    /// input into `stops.csv`.
    pub fn stops(&mut self) -> Result<(Vec<StopSegment>, String)> {
        if let Some(path) = self.cfg.inputs.stops.clone() {
            let mut stops = io::read_stops(&path, None)?;
            if let Some(proj) = self.projection_for(stops.iter().map(|s| (s.location.x, s.location.y))) {
                for s in &mut stops {
                    s.location = proj.forward(s.location.x, s.location.y);
                }
            }
            let hash = self.input_hash(&path)?;
            return Ok((stops, hash));
        }
        let path = self.input("trajectories", &self.cfg.inputs.trajectories)?;
        let key = (self.input_hash(&path)?, self.cfg.coordinates, self.cfg.segmentation);
        let stops = self.stage(
            "segment",
            &key,
            &[STOPS],
            |run| {
                let samples = read_projected_trajectories(&path, run.cfg.coordinates)?;
                segment_all(&group_by_object(samples), &run.cfg.segmentation)
            },
            |run, stops| io::write_stops(&run.path(STOPS), stops),
            |run| io::read_stops(&run.path(STOPS), None),
        )?;
        let hash = self.artifact_hash("segment");
        Ok((stops, hash))
    }

    fn grids(&mut self, locations: &[Point], upstream: &str) -> Result<GridFamily> {
        let bbox = BoundingBox::enclosing(locations).ok_or_else(|| Error::InvalidInput("no locations to zone".into()))?;
        let key = (upstream, self.cfg.grids.clone());
        self.stage(
            "zoning",
            &key,
            &[GRIDS],
            |run| build_family(&bbox, &run.cfg.grids),
            |run, family| io::write_json(&run.path(GRIDS), family),
            |run| io::read_json(&run.path(GRIDS)),
        )
    }

    fn mine(&mut self, cellsets: &[Vec<CellSet>], family: &GridFamily, objects: &ObjectIndex) -> Result<Vec<Vec<Candidate>>> {
        let key = self.artifact_hash("map");
        self.stage(
            "mine",
            &key,
            &[CANDIDATES],
            |_| Ok(mine_family(cellsets)),
            |run, cands| io::write_candidates(&run.path(CANDIDATES), cands, family, objects),
            |run| io::read_candidates(&run.path(CANDIDATES), family, objects),
        )
    }

    fn scan(
        &mut self,
        cands: &[Vec<Candidate>],
        family: &GridFamily,
        objects: &ObjectIndex,
        labels: &LabelVector,
        labels_hash: &str,
    ) -> Result<ScanRecord> {
        let key = (self.artifact_hash("mine"), labels_hash, self.cfg.scan);
        let config_hash = self.manifest.config_hash.clone();
        self.stage(
            "scan",
            &key,
            &[SCAN_RESULT],
            |run| {
                let index = ScanIndex::from_candidates(cands.iter().flatten(), objects.len() as u32)?;
                let result = index.scan(labels, &run.cfg.scan)?;
                Ok(ScanRecord::new(&result, family, objects, &config_hash))
            },
            |run, record| io::write_json(&run.path(SCAN_RESULT), record),
            |run| io::read_json(&run.path(SCAN_RESULT)),
        )
    }

    /// segment → zoning → map → mine → scan.
    pub fn assess(&mut self) -> Result<ScanRecord> {
        let labels_path = self.input("labels", &self.cfg.inputs.labels)?;
        let (objects, labels) = self.read_labels()?;
        let labels_hash = self.input_hash(&labels_path)?;
        let (stops, stops_hash) = self.stops()?;
        let locations: Vec<Point> = stops.iter().map(|s| s.location).collect();
        let family = self.grids(&locations, &stops_hash)?;
        for grid in &family.grids {
            for w in check_coarseness(grid, &stops) {
                log::warn!(
                    "grid {}: cell ({}, {}) holds stops of {:.0}% of objects",
                    w.grid,
                    w.cell.col,
                    w.cell.row,
                    100.0 * w.fraction
                );
            }
        }
        let key = (stops_hash.as_str(), self.artifact_hash("zoning"), labels_hash.as_str(), self.cfg.mapping);
        let cellsets = self.stage(
            "map",
            &key,
            &[CELLSETS],
            |run| map_family(&stops, &family, &objects, &run.cfg.mapping),
            |run, sets| io::write_cellsets(&run.path(CELLSETS), sets, &family, &objects),
            |run| io::read_cellsets(&run.path(CELLSETS), &family, &objects),
        )?;
        let cands = self.mine(&cellsets, &family, &objects)?;
        let record = self.scan(&cands, &family, &objects, &labels, &labels_hash)?;
        self.save_manifest()?;
        Ok(record)
    }

    /// Single-location variant: one point per object, no segmentation.
    pub fn reduce(&mut self) -> Result<ScanRecord> {
        let labels_path = self.input("labels", &self.cfg.inputs.labels)?;
        let (objects, labels) = self.read_labels()?;
        let labels_hash = self.input_hash(&labels_path)?;
        let points_path = self.input("points", &self.cfg.inputs.points)?;
        let mut points = io::read_points(&points_path, None)?;
        if let Some(proj) = self.projection_for(points.iter().map(|(_, p)| (p.x, p.y))) {
            for (_, p) in &mut points {
                *p = proj.forward(p.x, p.y);
            }
        }
        let points_hash = self.input_hash(&points_path)?;
        let locations: Vec<Point> = points.iter().map(|(_, p)| *p).collect();
        let family = self.grids(&locations, &points_hash)?;
        let key = (points_hash.as_str(), self.artifact_hash("zoning"), labels_hash.as_str());
        let cellsets = self.stage(
            "map",
            &key,
            &[CELLSETS],
            |_| reduce_family(&points, &family, &objects),
            |run, sets| io::write_cellsets(&run.path(CELLSETS), sets, &family, &objects),
            |run| io::read_cellsets(&run.path(CELLSETS), &family, &objects),
        )?;
        let cands = self.mine(&cellsets, &family, &objects)?;
        let record = self.scan(&cands, &family, &objects, &labels, &labels_hash)?;
        self.save_manifest()?;
        Ok(record)
    }
}

pub fn read_projected_trajectories(path: &Path, coordinates: Coordinates) -> Result<Vec<TrajectorySample>> {
    let mut samples = io::read_trajectories(path, None)?;
    if coordinates == Coordinates::Wgs84 {
        if let Some(proj) = Projection::centered(samples.iter().map(|s| (s.position.x, s.position.y))) {
            for s in &mut samples {
                s.position = proj.forward(s.position.x, s.position.y);
            }
        }
    }
    Ok(samples)
}
