//! Self-contained JSON bundle consumed by the explorer.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use geojson::{FeatureCollection, JsonObject};
use serde::{Deserialize, Serialize};
use serde_json::json;

use trajfair::io;
use trajfair::mapping::ObjectIndex;
use trajfair::trajectory::ObjectId;
use trajfair::zoning::{CellIndex, GridFamily};
use trajfair::{Error, Result};

use crate::pipeline::{Manifest, ScanRecord, CANDIDATES, GRIDS, SCAN_RESULT, STOPS};

/// Major version is bumped on incompatible layout changes.
pub const SCHEMA_VERSION: &str = "1.0.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleCandidate {
    pub cells: Vec<CellIndex>,
    pub support: usize,
    pub t_c: f64,
    pub p_c: f64,
    pub objects: Vec<ObjectId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleGrid {
    pub id: String,
    pub resolution: f64,
    pub shift: (f64, f64),
    pub origin: (f64, f64),
    pub cols: u32,
    pub rows: u32,
    pub extreme: Vec<BundleCandidate>,
    /// Cells covered by extreme candidates, with a `coverage` count property.
    pub cells: FeatureCollection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub regions: Option<FeatureCollection>,
    pub hotspots: Vec<Vec<ObjectId>>,
    /// Union over hotspots.
    pub objects: Vec<ObjectId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub schema_version: String,
    pub config_hash: String,
    pub scan: serde_json::Value,
    /// Grids keyed by resolution, one entry per shift.
    pub resolutions: BTreeMap<String, Vec<BundleGrid>>,
    pub u_hat: Vec<ObjectId>,
    pub n_objects: usize,
    /// Stop centroids, evenly subsampled.
    pub stops: Vec<(f64, f64)>,
    pub ground_truth: Option<GroundTruth>,
    pub manifest: Manifest,
}

fn need(dir: &Path, name: &str) -> Result<std::path::PathBuf> {
    let path = dir.join(name);
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingStage(format!("{} is missing {name}; run assess first", dir.display())))
    }
}

/// Resolution key with integral values printed without a fraction.
pub fn resolution_key(r: f64) -> String {
    format!("{r}")
}

pub fn build(run_dir: &Path) -> Result<Bundle> {
    let manifest = Manifest::load(run_dir)?;
    let record: ScanRecord = io::read_json(&need(run_dir, SCAN_RESULT)?)?;
    let family: GridFamily = io::read_json(&need(run_dir, GRIDS)?)?;
    let labels = manifest
        .config
        .inputs
        .labels
        .clone()
        .ok_or_else(|| Error::MissingStage("run manifest names no labels input".into()))?;
    let (objects, _) = io::read_labels(&labels)?;
    let per_grid = io::read_candidates(&need(run_dir, CANDIDATES)?, &family, &objects)?;

    let tidsets: HashMap<(u32, &[CellIndex]), &[u32]> = per_grid
        .iter()
        .flatten()
        .map(|c| ((c.grid, c.cells.as_slice()), c.tidset.as_slice()))
        .collect();
    let mut by_grid: Vec<Vec<BundleCandidate>> = vec![Vec::new(); family.grids.len()];
    for e in &record.extreme {
        let grid = family
            .grid_by_id(&e.grid)
            .ok_or_else(|| Error::InvalidInput(format!("scan result names unknown grid {}", e.grid)))?;
        let tidset = tidsets
            .get(&(grid.ordinal, e.cells.as_slice()))
            .ok_or_else(|| Error::InvalidInput(format!("extreme candidate {:?} not among mined candidates", e.cells)))?;
        by_grid[grid.ordinal as usize].push(BundleCandidate {
            cells: e.cells.clone(),
            support: e.support,
            t_c: e.t_c,
            p_c: e.p_c,
            objects: tidset.iter().map(|&o| objects.id(o).clone()).collect(),
        });
    }

    let mut resolutions: BTreeMap<String, Vec<BundleGrid>> = BTreeMap::new();
    let mut ordered: Vec<&trajfair::zoning::Grid> = family.grids.iter().collect();
    ordered.sort_by(|a, b| a.resolution.total_cmp(&b.resolution).then(a.ordinal.cmp(&b.ordinal)));
    for grid in ordered {
        let extreme = std::mem::take(&mut by_grid[grid.ordinal as usize]);
        let mut coverage: BTreeMap<CellIndex, usize> = BTreeMap::new();
        for c in &extreme {
            for &cell in &c.cells {
                *coverage.entry(cell).or_default() += 1;
            }
        }
        let features = coverage
            .into_iter()
            .map(|(index, count)| {
                let cell = grid.cell_from_index(index).expect("extreme cells belong to their grid");
                let mut props = JsonObject::new();
                props.insert("cell".into(), json!(index));
                props.insert("coverage".into(), json!(count));
                io::feature(io::polygon_geometry(&grid.cell_polygon(&cell), None), props)
            })
            .collect();
        resolutions
            .entry(resolution_key(grid.resolution))
            .or_default()
            .push(BundleGrid {
                id: grid.id.clone(),
                resolution: grid.resolution,
                shift: grid.shift,
                origin: (grid.origin.x, grid.origin.y),
                cols: grid.cols,
                rows: grid.rows,
                extreme,
                cells: FeatureCollection {
                    bbox: None,
                    features,
                    foreign_members: None,
                },
            });
    }

    let stops_path = manifest
        .config
        .inputs
        .stops
        .clone()
        .unwrap_or_else(|| run_dir.join(STOPS));
    let stops = if stops_path.exists() {
        let all = io::read_stops(&stops_path, None)?;
        let locations: Vec<(f64, f64)> = match manifest.projection {
            Some(proj) => all
                .iter()
                .map(|s| {
                    let p = proj.forward(s.location.x, s.location.y);
                    (p.x, p.y)
                })
                .collect(),
            None => all.iter().map(|s| (s.location.x, s.location.y)).collect(),
        };
        subsample(locations, manifest.config.bundle.max_stops)
    } else {
        Vec::new()
    };

    let ground_truth = match &manifest.config.inputs.ground_truth {
        Some(path) => Some(ground_truth(path, &objects)?),
        None => None,
    };

    Ok(Bundle {
        schema_version: SCHEMA_VERSION.to_owned(),
        config_hash: manifest.config_hash.clone(),
        scan: json!({
            "t_obs": record.t_obs,
            "p_hat": record.p_hat,
            "rejected": record.rejected,
            "alpha": record.alpha,
            "n_sims": record.n_sims,
            "seed": record.seed,
        }),
        resolutions,
        u_hat: record.u_hat.clone(),
        n_objects: objects.len(),
        stops,
        ground_truth,
        manifest,
    })
}

fn ground_truth(path: &Path, objects: &ObjectIndex) -> Result<GroundTruth> {
    let hotspots = io::read_ground_truth_objects(path, objects)?;
    let mut union: Vec<u32> = hotspots.iter().flatten().copied().collect();
    union.sort_unstable();
    union.dedup();
    let regions_path = path.with_file_name(crate::commands::GROUND_TRUTH_REGIONS);
    let regions = if regions_path.exists() {
        let text = std::fs::read_to_string(&regions_path)?;
        let doc: geojson::GeoJson = text
            .parse()
            .map_err(|e: geojson::Error| Error::Parse {
                path: regions_path.clone(),
                message: e.to_string(),
            })?;
        FeatureCollection::try_from(doc).ok()
    } else {
        None
    };
    let ids = |set: &[u32]| set.iter().map(|&o| objects.id(o).clone()).collect();
    Ok(GroundTruth {
        regions,
        hotspots: hotspots.iter().map(|h| ids(h)).collect(),
        objects: ids(&union),
    })
}

/// Every `ceil(n / max)`-th element.
fn subsample<T>(items: Vec<T>, max: usize) -> Vec<T> {
    if max == 0 {
        return Vec::new();
    }
    let step = items.len().div_ceil(max).max(1);
    items.into_iter().step_by(step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsampling() {
        assert_eq!(subsample((0..10).collect(), 5), vec![0, 2, 4, 6, 8]);
        assert_eq!(subsample((0..10).collect(), 3), vec![0, 4, 8]);
        assert_eq!(subsample((0..3).collect(), 10), vec![0, 1, 2]);
        assert!(subsample((0..3).collect::<Vec<_>>(), 0).is_empty());
    }

    #[test]
    fn resolution_keys() {
        assert_eq!(resolution_key(50.0), "50");
        assert_eq!(resolution_key(62.5), "62.5");
    }
}
