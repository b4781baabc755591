//! Detection power and localization quality over dataset configurations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::Candidate;
use crate::error::Result;
use crate::scan::{ScanConfig, ScanIndex, ScanResult};
use crate::synthesis::{derive_seed, AuditableDataset};
use crate::zoning::GridFamily;

/// Sensitivity `|U ∩ Û| / |U|` and PPV `|U ∩ Û| / |Û|` of ascending id
/// lists. PPV is `None` when `Û` is empty; sensitivity is `None` when `U` is.
pub fn sensitivity_ppv(u: &[u32], u_hat: &[u32]) -> (Option<f64>, Option<f64>) {
    let common = crate::candidates::intersect_sorted(u, u_hat).len() as f64;
    let sensitivity = (!u.is_empty()).then(|| common / u.len() as f64);
    let ppv = (!u_hat.is_empty()).then(|| common / u_hat.len() as f64);
    (sensitivity, ppv)
}

/// A group of grids whose candidates are pooled into one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scope {
    pub name: String,
    /// Grid ordinals.
    pub grids: Vec<u32>,
}

/// One scope per resolution, pooling its shifted grids, then all grids.
pub fn resolution_scopes(family: &GridFamily) -> Vec<Scope> {
    let mut scopes: Vec<Scope> = family
        .resolutions
        .iter()
        .map(|&r| Scope {
            name: format!("r{r}"),
            grids: family.grids_at(r),
        })
        .collect();
    scopes.push(all_grids_scope(family));
    scopes
}

/// One scope per grid, then all grids.
pub fn grid_scopes(family: &GridFamily) -> Vec<Scope> {
    let mut scopes: Vec<Scope> = family
        .grids
        .iter()
        .map(|g| Scope {
            name: g.id.clone(),
            grids: vec![g.ordinal],
        })
        .collect();
    scopes.push(all_grids_scope(family));
    scopes
}

pub fn all_grids_scope(family: &GridFamily) -> Scope {
    Scope {
        name: "all".to_owned(),
        grids: family.grids.iter().map(|g| g.ordinal).collect(),
    }
}

/// Result of scanning one dataset in one scope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub detected: bool,
    pub sensitivity: Option<f64>,
    pub ppv: Option<f64>,
}

impl Outcome {
    pub fn new(result: &ScanResult, unfair: &[u32]) -> Self {
        let (sensitivity, ppv) = if result.rejected {
            sensitivity_ppv(unfair, &result.u_hat)
        } else {
            (None, None)
        };
        Self {
            detected: result.rejected,
            sensitivity,
            ppv,
        }
    }
}

/// Aggregated metrics of one scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeSummary {
    pub scope: String,
    pub power: f64,
    /// Mean over detected datasets with ground truth.
    pub sensitivity: Option<f64>,
    /// Mean over detected datasets with a non-empty extreme set.
    pub ppv: Option<f64>,
    pub n_datasets: usize,
    pub n_detected: usize,
    /// Detected datasets whose PPV is undefined.
    pub n_undefined_ppv: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn summarize(scope: &str, outcomes: &[Outcome]) -> ScopeSummary {
    let detected: Vec<&Outcome> = outcomes.iter().filter(|o| o.detected).collect();
    ScopeSummary {
        scope: scope.to_owned(),
        power: if outcomes.is_empty() {
            0.0
        } else {
            detected.len() as f64 / outcomes.len() as f64
        },
        sensitivity: mean(detected.iter().filter_map(|o| o.sensitivity)),
        ppv: mean(detected.iter().filter_map(|o| o.ppv)),
        n_datasets: outcomes.len(),
        n_detected: detected.len(),
        n_undefined_ppv: detected.iter().filter(|o| o.ppv.is_none()).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Name of the varied parameter, e.g. `magnitude`.
    pub parameter: String,
    pub param_value: String,
    pub scopes: Vec<ScopeSummary>,
}

impl EvaluationReport {
    pub fn scope(&self, name: &str) -> Option<&ScopeSummary> {
        self.scopes.iter().find(|s| s.scope == name)
    }
}

/// Scans every dataset in every scope. All datasets must share the movement
/// data that `per_grid` was mined from; dataset `k` is scanned with seed
/// `derive_seed(scan.seed, k)`.
pub fn evaluate_configuration(
    datasets: &[AuditableDataset],
    per_grid: &[Vec<Candidate>],
    scopes: &[Scope],
    scan: &ScanConfig,
) -> Result<Vec<ScopeSummary>> {
    scan.validate()?;
    let Some(first) = datasets.first() else {
        return Ok(scopes.iter().map(|s| summarize(&s.name, &[])).collect());
    };
    let n_objects = first.labels.len() as u32;
    let unfair: Vec<Vec<u32>> = datasets.iter().map(AuditableDataset::unfair_objects).collect();
    scopes
        .iter()
        .map(|scope| {
            let index = ScanIndex::from_candidates(
                scope.grids.iter().flat_map(|&g| per_grid[g as usize].iter()),
                n_objects,
            )?;
            let outcomes: Vec<Outcome> = datasets
                .par_iter()
                .enumerate()
                .map(|(k, d)| {
                    let cfg = ScanConfig {
                        seed: derive_seed(scan.seed, k as u64),
                        ..*scan
                    };
                    let result = index.scan(&d.labels, &cfg)?;
                    Ok(Outcome::new(&result, &unfair[k]))
                })
                .collect::<Result<_>>()?;
            Ok(summarize(&scope.name, &outcomes))
        })
        .collect()
}
