//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use trajfair::candidates::mine_family;
use trajfair::geo::Polygon;
use trajfair::io;
use trajfair::mapping::map_family;
use trajfair::metrics::{evaluate_configuration, grid_scopes, resolution_scopes, EvaluationReport};
use trajfair::synthesis::{
    fallback_seed_polygons, generate_configuration, generate_movement, generate_stops, AuditableDataset, Movement,
    FALLBACK_SEEDS,
};
use trajfair::zoning::build_family;
use trajfair::{Error, Result};

use crate::config::{Coordinates, RunConfig, ScopeMode, Seeds};
use crate::pipeline::{file_hash, Manifest, Run, ScanRecord, MANIFEST, STOPS};
use crate::plot::{self, Metric};
use crate::{bundle, serve};

pub const LABELS: &str = "labels.csv";
pub const GROUND_TRUTH_REGIONS: &str = "ground_truth.geojson";
pub const GROUND_TRUTH_OBJECTS: &str = "ground_truth_objects.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const BUNDLE: &str = "bundle.json";

/// Writes a manifest listing the hashes of `files` inside `dir`.
fn write_manifest(dir: &Path, mut manifest: Manifest, stage: &str, files: &[&str], extra: serde_json::Value) -> Result<()> {
    let artifacts = files
        .iter()
        .map(|f| Ok(((*f).to_owned(), file_hash(&dir.join(f))?)))
        .collect::<Result<_>>()?;
    manifest.stages.insert(
        stage.to_owned(),
        crate::pipeline::StageRecord {
            key: manifest.config_hash.clone(),
            artifacts,
        },
    );
    let mut value = serde_json::to_value(&manifest)?;
    if let (Some(map), serde_json::Value::Object(more)) = (value.as_object_mut(), extra) {
        map.extend(more);
    }
    io::write_json(&dir.join(MANIFEST), &value)
}

pub fn generate(mut cfg: RunConfig, with_trajectories: bool) -> Result<()> {
    let seeds = cfg.resolve_seeds(true)?;
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output)?;
    let stops = generate_stops(&cfg.movement, &cfg.segmentation)?;
    io::write_stops(&cfg.output.join(STOPS), &stops)?;
    let mut files = vec![STOPS];
    if with_trajectories {
        let tracks = generate_movement(&cfg.movement)?;
        io::write_trajectories(&cfg.output.join(TRAJECTORIES), tracks.values().flatten())?;
        files.push(TRAJECTORIES);
    }
    write_manifest(&cfg.output, Manifest::new("generate", &cfg, seeds), "generate", &files, json!({}))?;
    println!("generated {} stops of {} objects in {}", stops.len(), cfg.movement.objects, cfg.output.display());
    Ok(())
}

/// Movement data from the stops input, or freshly generated.
fn movement(cfg: &RunConfig) -> Result<Movement> {
    let stops = match &cfg.inputs.stops {
        Some(path) => {
            if cfg.coordinates == Coordinates::Wgs84 {
                return Err(Error::Config(
                    "coordinates: injection and evaluation need planar stops; project them with assess first".into(),
                ));
            }
            io::read_stops(path, None)?
        }
        None => generate_stops(&cfg.movement, &cfg.segmentation)?,
    };
    Movement::from_stops(stops)
}

fn seed_polygons(cfg: &RunConfig, movement: &Movement, seeds: &Seeds) -> Result<Vec<Polygon>> {
    match &cfg.inputs.seed_polygons {
        Some(path) => io::read_polygons(path, None),
        None => {
            let bbox = movement
                .bbox()
                .ok_or_else(|| Error::InvalidInput("movement data has no stops".into()))?;
            Ok(fallback_seed_polygons(&bbox, FALLBACK_SEEDS, seeds.seed_polygons))
        }
    }
}

fn write_dataset(dir: &Path, cfg: &RunConfig, seeds: Seeds, dataset: &AuditableDataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let m = &dataset.movement;
    io::write_stops(&dir.join(STOPS), &m.stops)?;
    io::write_labels(&dir.join(LABELS), &m.objects, &dataset.labels)?;
    let members: Vec<Vec<u32>> = dataset.hotspots.iter().map(|h| h.objects.clone()).collect();
    io::write_ground_truth_objects(&dir.join(GROUND_TRUTH_OBJECTS), &m.objects, &members)?;
    let mut features = Vec::new();
    for (h, hotspot) in dataset.hotspots.iter().enumerate() {
        for (r, region) in hotspot.regions.iter().enumerate() {
            let mut props = geojson::JsonObject::new();
            props.insert("hotspot_index".into(), json!(h));
            props.insert("region_index".into(), json!(r));
            props.insert("seed_polygon".into(), json!(hotspot.seeds[r]));
            props.insert("buffer".into(), json!(hotspot.buffer));
            features.push(io::feature(io::region_geometry(region, None), props));
        }
    }
    io::write_features(&dir.join(GROUND_TRUTH_REGIONS), features)?;
    let hotspots: Vec<_> = dataset
        .hotspots
        .iter()
        .map(|h| json!({"seed_polygons": h.seeds, "buffer": h.buffer, "objects": h.objects.len()}))
        .collect();
    write_manifest(
        dir,
        Manifest::new("inject", cfg, seeds),
        "inject",
        &[STOPS, LABELS, GROUND_TRUTH_OBJECTS, GROUND_TRUTH_REGIONS],
        json!({"dataset_seed": dataset.seed, "hotspots": hotspots}),
    )
}

pub fn inject(mut cfg: RunConfig, count: usize) -> Result<()> {
    let seeds = cfg.resolve_seeds(true)?;
    cfg.validate()?;
    cfg.injection.validate()?;
    if count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    let movement = Arc::new(movement(&cfg)?);
    let polygons = seed_polygons(&cfg, &movement, &seeds)?;
    let datasets = generate_configuration(&cfg.injection, &polygons, &movement, count)?;
    for (k, dataset) in datasets.iter().enumerate() {
        let dir = if count == 1 {
            cfg.output.clone()
        } else {
            cfg.output.join(format!("dataset_{k:03}"))
        };
        write_dataset(&dir, &cfg, seeds, dataset)?;
        let sizes: Vec<usize> = dataset.hotspots.iter().map(|h| h.objects.len()).collect();
        println!("{}: hotspot sizes {sizes:?}", dir.display());
    }
    Ok(())
}

/// Points the inputs at an injected dataset directory.
pub fn use_dataset(cfg: &mut RunConfig, dir: &Path) {
    cfg.inputs.stops = Some(dir.join(STOPS));
    cfg.inputs.labels = Some(dir.join(LABELS));
    let gt = dir.join(GROUND_TRUTH_OBJECTS);
    if gt.exists() {
        cfg.inputs.ground_truth = Some(gt);
    }
}

pub fn segment(mut cfg: RunConfig) -> Result<()> {
    let seeds = cfg.resolve_seeds(false)?;
    cfg.validate()?;
    cfg.inputs.stops = None;
    let mut run = Run::open("segment", cfg, seeds)?;
    let (stops, _) = run.stops()?;
    run.save_manifest()?;
    println!("{} stops written to {}", stops.len(), run.path(STOPS).display());
    Ok(())
}

fn report_scan(record: &ScanRecord, dir: &Path) {
    println!(
        "t_obs {:.6} p_hat {:.4} rejected {} extreme candidates {} objects {} -> {}",
        record.t_obs,
        record.p_hat,
        record.rejected,
        record.extreme.len(),
        record.u_hat.len(),
        dir.display()
    );
}

pub fn assess(mut cfg: RunConfig) -> Result<()> {
    let seeds = cfg.resolve_seeds(false)?;
    cfg.validate()?;
    let mut run = Run::open("assess", cfg, seeds)?;
    let record = run.assess()?;
    report_scan(&record, &run.dir);
    Ok(())
}

pub fn reduce(mut cfg: RunConfig) -> Result<()> {
    let seeds = cfg.resolve_seeds(false)?;
    cfg.validate()?;
    let mut run = Run::open("reduce", cfg, seeds)?;
    let record = run.reduce()?;
    report_scan(&record, &run.dir);
    Ok(())
}

#[derive(Serialize)]
struct ReportRow<'a> {
    scope: &'a str,
    param_value: &'a str,
    power: f64,
    sensitivity: Option<f64>,
    ppv: Option<f64>,
    n_datasets: usize,
    n_detected: usize,
}

pub fn write_report_csv(path: &Path, reports: &[EvaluationReport]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for report in reports {
        for s in &report.scopes {
            writer.serialize(ReportRow {
                scope: &s.scope,
                param_value: &report.param_value,
                power: s.power,
                sensitivity: s.sensitivity,
                ppv: s.ppv,
                n_datasets: s.n_datasets,
                n_detected: s.n_detected,
            })?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn evaluate(mut cfg: RunConfig) -> Result<()> {
    let seeds = cfg.resolve_seeds(true)?;
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output)?;
    let movement = Arc::new(movement(&cfg)?);
    let polygons = seed_polygons(&cfg, &movement, &seeds)?;
    let bbox = movement
        .bbox()
        .ok_or_else(|| Error::InvalidInput("movement data has no stops".into()))?;
    let family = build_family(&bbox, &cfg.grids)?;
    let cellsets = map_family(&movement.stops, &family, &movement.objects, &cfg.mapping)?;
    let per_grid = mine_family(&cellsets);
    let scopes = match cfg.evaluation.scopes {
        ScopeMode::Pooled => resolution_scopes(&family),
        ScopeMode::PerGrid => grid_scopes(&family),
    };
    let mut reports = Vec::new();
    for &value in &cfg.evaluation.values {
        let injection = cfg.evaluation.apply(&cfg.injection, value)?;
        let datasets = generate_configuration(&injection, &polygons, &movement, cfg.evaluation.datasets)?;
        let summaries = evaluate_configuration(&datasets, &per_grid, &scopes, &cfg.scan)?;
        let report = EvaluationReport {
            parameter: cfg.evaluation.parameter.clone(),
            param_value: format!("{value}"),
            scopes: summaries,
        };
        if let Some(all) = report.scope("all") {
            println!(
                "{} = {value}: pooled power {:.3} over {} datasets",
                report.parameter, all.power, all.n_datasets
            );
        }
        reports.push(report);
    }
    write_report_csv(&cfg.output.join(REPORT_CSV), &reports)?;
    let manifest = Manifest::new("evaluate", &cfg, seeds);
    io::write_json(
        &cfg.output.join(REPORT_JSON),
        &json!({"config_hash": manifest.config_hash, "seeds": seeds, "reports": reports}),
    )?;
    write_manifest(&cfg.output, manifest, "evaluate", &[REPORT_CSV, REPORT_JSON], json!({}))
}

pub fn read_reports(path: &Path) -> Result<Vec<EvaluationReport>> {
    let value: serde_json::Value = io::read_json(path)?;
    let reports = value
        .get("reports")
        .cloned()
        .ok_or_else(|| Error::Parse {
            path: path.to_owned(),
            message: "missing reports".into(),
        })?;
    serde_json::from_value(reports).map_err(|e| Error::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

pub fn plot(report: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let reports = read_reports(report)?;
    std::fs::create_dir_all(out_dir)?;
    Metric::ALL
        .iter()
        .map(|&metric| {
            let path = out_dir.join(format!("{}.svg", metric.name()));
            std::fs::write(&path, plot::render(&reports, metric))?;
            Ok(path)
        })
        .collect()
}

pub fn export(run_dir: &Path, out: &Path) -> Result<()> {
    let bundle = bundle::build(run_dir)?;
    io::write_json(out, &bundle)?;
    let grids: usize = bundle.resolutions.values().map(Vec::len).sum();
    println!(
        "bundle with {} resolutions, {grids} grids written to {}",
        bundle.resolutions.len(),
        out.display()
    );
    Ok(())
}

pub fn serve(bundle: &Path, assets: Option<&Path>, host: &str, port: u16) -> Result<()> {
    let server = serve::Server::bind(bundle, assets, host, port)?;
    println!("serving {} on http://{host}:{}/", bundle.display(), server.port());
    server.run()
}
