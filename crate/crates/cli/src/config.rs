//! Run configuration: one JSON document, overridable from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use trajfair::mapping::MappingConfig;
use trajfair::scan::ScanConfig;
use trajfair::synthesis::{derive_seed, InjectionConfig, MovementConfig};
use trajfair::trajectory::SegmentationConfig;
use trajfair::zoning::GridSpec;
use trajfair::{Error, Result};

/// Seed used by assessment runs whose configuration names none.
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    /// Projected planar meters.
    #[default]
    Planar,
    /// Longitude/latitude degrees, projected around the data centroid.
    Wgs84,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub trajectories: Option<PathBuf>,
    pub stops: Option<PathBuf>,
    /// One location per object, for the single-location mode.
    pub points: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub seed_polygons: Option<PathBuf>,
    /// `ground_truth_objects.csv` of an injected dataset.
    pub ground_truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeMode {
    /// The shifted grids of a resolution form one pool.
    #[default]
    Pooled,
    /// Every grid is scanned on its own.
    PerGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Evaluation {
    /// Datasets per parameter value.
    pub datasets: usize,
    /// Injection parameter that is varied: `magnitude`, `objects_per_hotspot`,
    /// `regions_per_hotspot`, `stops_per_region` or `hotspots`.
    pub parameter: String,
    pub values: Vec<f64>,
    pub scopes: ScopeMode,
}

impl Default for Evaluation {
    fn default() -> Self {
        Self {
            datasets: 100,
            parameter: "magnitude".to_owned(),
            values: vec![0.2, 0.4, 0.6],
            scopes: ScopeMode::Pooled,
        }
    }
}

impl Evaluation {
    /// Injection configuration with the varied parameter set to `value`.
    pub fn apply(&self, base: &InjectionConfig, value: f64) -> Result<InjectionConfig> {
        let mut cfg = base.clone();
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("evaluation.values: {value} is not a count")))
            }
        };
        match self.parameter.as_str() {
            "magnitude" => cfg.magnitude = value,
            "objects_per_hotspot" => cfg.objects_per_hotspot = count()?,
            "regions_per_hotspot" => cfg.regions_per_hotspot = count()?,
            "stops_per_region" => cfg.stops_per_region = count()?,
            "hotspots" => cfg.hotspots = count()?,
            other => return Err(Error::Config(format!("evaluation.parameter: unknown parameter {other}"))),
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BundleConfig {
    /// Maximum number of stop centroids embedded in the bundle.
    pub max_stops: usize,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self { max_stops: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: Option<u64>,
    pub inputs: Inputs,
    pub coordinates: Coordinates,
    pub movement: MovementConfig,
    pub segmentation: SegmentationConfig,
    pub grids: GridSpec,
    pub mapping: MappingConfig,
    pub scan: ScanConfig,
    pub injection: InjectionConfig,
    pub evaluation: Evaluation,
    pub bundle: BundleConfig,
    pub output: PathBuf,
    /// Maximum worker threads; all available cores when absent.
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            inputs: Inputs::default(),
            coordinates: Coordinates::Planar,
            movement: MovementConfig::default(),
            segmentation: SegmentationConfig::default(),
            grids: GridSpec::default(),
            mapping: MappingConfig::default(),
            scan: ScanConfig::default(),
            injection: InjectionConfig::default(),
            evaluation: Evaluation::default(),
            bundle: BundleConfig::default(),
            output: PathBuf::from("out"),
            workers: None,
        }
    }
}

/// Sub-seeds derived from the master seed, one per random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub movement: u64,
    pub injection: u64,
    pub scan: u64,
    pub seed_polygons: u64,
}

impl Seeds {
    pub fn derive(master: u64) -> Self {
        Self {
            master,
            movement: derive_seed(master, 1),
            injection: derive_seed(master, 2),
            scan: derive_seed(master, 3),
            seed_polygons: derive_seed(master, 4),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The master seed, required when `seed_required` is set.
    pub fn master_seed(&self, seed_required: bool) -> Result<u64> {
        match self.seed {
            Some(seed) => Ok(seed),
            None if seed_required => Err(Error::Config("seed: a master seed is required for this command".into())),
            None => Ok(DEFAULT_SEED),
        }
    }

    /// Resolves the master seed and writes the derived sub-seeds into the
    /// module configurations.
    pub fn resolve_seeds(&mut self, seed_required: bool) -> Result<Seeds> {
        let seeds = Seeds::derive(self.master_seed(seed_required)?);
        self.seed = Some(seeds.master);
        self.movement.seed = seeds.movement;
        self.injection.seed = seeds.injection;
        self.scan.seed = seeds.scan;
        Ok(seeds)
    }

    pub fn validate(&self) -> Result<()> {
        self.segmentation.validate()?;
        self.mapping.validate()?;
        self.scan.validate()?;
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, in hex, ignoring the output
    /// directory and worker count.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        canonical.workers = None;
        hash_json(&canonical)
    }
}

pub fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serializes");
    hex(&Sha256::digest(bytes))
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
