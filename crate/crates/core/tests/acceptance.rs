//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any failure.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajfair::candidates::{mine, mine_family, Candidate};
use trajfair::geo::{Point, Polygon};
use trajfair::io;
use trajfair::mapping::{map_family, CellSet, MappingConfig};
use trajfair::metrics::{evaluate_configuration, resolution_scopes, sensitivity_ppv, Scope, ScopeSummary};
use trajfair::scan::{
    loglik_h0, loglik_h1, BernoulliStatistic, Direction, LabelVector, ScanConfig, ScanIndex, ScanStatistic,
};
use trajfair::synthesis::{
    fallback_seed_polygons, generate_configuration, generate_stops, InjectionConfig, Movement, MovementConfig,
    FALLBACK_SEEDS,
};
use trajfair::trajectory::SegmentationConfig;
use trajfair::zoning::{build_family, GridFamily, GridSpec, ShiftMode};

const SCAN_TOLERANCE: f64 = 1e-9;
const NULL_MAX_REJECTION: f64 = 0.03;
const TREND_SLACK: f64 = 0.05;
const MIN_POWER_AT_0_6: f64 = 0.9;
const HOTSPOT_TOLERANCE: usize = 10;

const OBJECTS: u32 = 2000;
const DAYS: u32 = 5;
const RESOLUTIONS: [f64; 3] = [100.0, 400.0, 1000.0];
const SHIFTS: u32 = 2;
const N_SIMS: u32 = 199;
const ALPHA: f64 = 0.01;
const DATASETS: usize = 100;
const NULL_DATASETS: usize = 200;
const AUDIT_HOTSPOTS: usize = 50;

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: String, started: Instant) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} {name}: {detail} ({:.1}s)", started.elapsed().as_secs_f64());
        if !pass {
            self.failures += 1;
        }
    }
}

/// Shared movement data and the mined candidate pool of a small grid family.
struct World {
    movement: Arc<Movement>,
    family: GridFamily,
    per_grid: Vec<Vec<Candidate>>,
    seeds: Vec<Polygon>,
}

impl World {
    fn build() -> Self {
        let mcfg = MovementConfig {
            objects: OBJECTS,
            days: DAYS,
            seed: 101,
            ..MovementConfig::default()
        };
        let stops = generate_stops(&mcfg, &SegmentationConfig::default()).expect("movement");
        let movement = Arc::new(Movement::from_stops(stops).expect("movement"));
        let bbox = movement.bbox().expect("stops");
        let spec = GridSpec {
            resolutions: RESOLUTIONS.to_vec(),
            shifts_per_resolution: SHIFTS,
            shift_mode: ShiftMode::Diagonal,
        };
        let family = build_family(&bbox, &spec).expect("grids");
        let cellsets = map_family(&movement.stops, &family, &movement.objects, &MappingConfig::default()).expect("map");
        let per_grid = mine_family(&cellsets);
        let seeds = fallback_seed_polygons(&bbox, FALLBACK_SEEDS, 102);
        Self {
            movement,
            family,
            per_grid,
            seeds,
        }
    }

    fn evaluate(&self, injection: &InjectionConfig, count: usize, scopes: &[Scope], seed: u64) -> Vec<ScopeSummary> {
        let datasets = generate_configuration(injection, &self.seeds, &self.movement, count).expect("datasets");
        let scan = ScanConfig {
            alpha: ALPHA,
            n_sims: N_SIMS,
            seed,
            direction: Direction::TwoSided,
        };
        evaluate_configuration(&datasets, &self.per_grid, scopes, &scan).expect("evaluation")
    }
}

fn injection(magnitude: f64, objects: usize, seed: u64) -> InjectionConfig {
    InjectionConfig {
        regions_per_hotspot: 1,
        objects_per_hotspot: objects,
        hotspots: 1,
        magnitude,
        seed,
        ..InjectionConfig::default()
    }
}

fn scope<'a>(summaries: &'a [ScopeSummary], name: &str) -> &'a ScopeSummary {
    summaries.iter().find(|s| s.scope == name).expect("scope")
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("undefined".into(), |v| format!("{v:.3}"))
}

fn non_decreasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] >= w[0] - slack)
}

fn appendix_fixtures(report: &mut Report) {
    let t = Instant::now();
    let ids = |r: std::ops::Range<u32>| r.collect::<Vec<u32>>();
    // 600 true, 1000 flagged, 300 shared.
    let a = sensitivity_ppv(&ids(0..600), &ids(300..1300));
    // 300 true objects, all 100,000 flagged.
    let b = sensitivity_ppv(&ids(0..300), &ids(0..100_000));
    // 600 true objects, 30 of them flagged.
    let c = sensitivity_ppv(&ids(0..600), &ids(0..30));
    let pass = a == (Some(0.5), Some(0.3)) && b == (Some(1.0), Some(0.003)) && c == (Some(0.05), Some(1.0));
    report.check(
        "sensitivity/PPV fixtures",
        pass,
        format!("{a:?} {b:?} {c:?}, expected 0.5/0.3, 1/0.003, 0.05/1 exactly"),
        t,
    );
}

fn binom_ll(k: f64, n: f64, theta: f64) -> f64 {
    let a = if k > 0.0 { k * theta.ln() } else { 0.0 };
    let b = if n - k > 0.0 { (n - k) * (1.0 - theta).ln() } else { 0.0 };
    a + b
}

/// Golden-section maximum of a concave function on `[0, 1]`.
fn golden_max(f: impl Fn(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    [f(0.0), f(1.0), f(0.5 * (lo + hi)), fc, fd].into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn numeric_max(k: u64, n: u64) -> f64 {
    golden_max(|t| binom_ll(k as f64, n as f64, t))
}

fn scan_oracle(report: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    let (mut worst, mut negative) = (0.0f64, 0usize);
    for _ in 0..1000 {
        let n: u64 = rng.gen_range(2..=2000);
        let p = rng.gen_range(0..=n);
        let n_c = rng.gen_range(1..n);
        let lo = p.saturating_sub(n - n_c);
        let p_c = rng.gen_range(lo..=p.min(n_c));
        let h0 = loglik_h0(p, n);
        let h1 = loglik_h1(p_c, n_c, p, n).expect("proper subset");
        let h0_oracle = numeric_max(p, n);
        let h1_oracle = numeric_max(p_c, n_c) + numeric_max(p - p_c, n - n_c);
        worst = worst.max((h0 - h0_oracle).abs());
        worst = worst.max((h1 - h1_oracle).abs());
        let stat = BernoulliStatistic::new(p as u32, n as u32, Direction::TwoSided);
        let log_t = stat.log_ratio(p_c as u32, n_c as u32);
        if log_t < 0.0 || h1 - h0 < -1e-12 {
            negative += 1;
        }
    }
    report.check(
        "scan formula oracle",
        worst <= SCAN_TOLERANCE && negative == 0,
        format!("1000 tuples, worst absolute deviation {worst:.2e} (<= {SCAN_TOLERANCE:e}), negative log T_c {negative}"),
        t,
    );
}

fn brute_force(sets: &[CellSet]) -> Vec<(Vec<u32>, Vec<u32>)> {
    let mut cells: Vec<u32> = sets.iter().flat_map(|s| s.cells.iter().copied()).collect();
    cells.sort_unstable();
    cells.dedup();
    let mut out = Vec::new();
    for mask in 1u32..(1 << cells.len()) {
        let subset: Vec<u32> = (0..cells.len()).filter(|b| mask >> b & 1 == 1).map(|b| cells[b]).collect();
        let tids: Vec<u32> = sets
            .iter()
            .filter(|s| subset.iter().all(|c| s.cells.contains(c)))
            .map(|s| s.object)
            .collect();
        if !tids.is_empty() {
            out.push((subset, tids));
        }
    }
    out.sort();
    out
}

fn miner_oracle(report: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n_cells: u32 = rng.gen_range(1..=12);
        let n_objects: u32 = rng.gen_range(1..=50);
        let sets: Vec<CellSet> = (0..n_objects)
            .map(|object| {
                let size = rng.gen_range(1..=8.min(n_cells));
                let mut cells: Vec<u32> = rand::seq::index::sample(&mut rng, n_cells as usize, size as usize)
                    .into_iter()
                    .map(|c| c as u32)
                    .collect();
                cells.sort_unstable();
                CellSet {
                    object,
                    grid: 0,
                    days: vec![1; cells.len()],
                    cells,
                }
            })
            .collect();
        let mut mined: Vec<(Vec<u32>, Vec<u32>)> = mine(&sets).into_iter().map(|c| (c.cells, c.tidset)).collect();
        mined.sort();
        if mined != brute_force(&sets) {
            mismatches += 1;
        }
    }
    report.check(
        "miner oracle",
        mismatches == 0,
        format!("200 instances, {mismatches} differ from exhaustive enumeration"),
        t,
    );
}

fn permutation_rank(report: &mut Report) {
    let t = Instant::now();
    let labels: LabelVector = (0..200).map(|i| i < 100).collect();
    let candidates = [
        Candidate {
            grid: 0,
            cells: vec![0],
            tidset: (0..40).collect(),
        },
        Candidate {
            grid: 0,
            cells: vec![1],
            tidset: (60..160).step_by(3).collect(),
        },
    ];
    let index = ScanIndex::from_candidates(candidates.iter(), 200).expect("index");
    let cfg = ScanConfig {
        alpha: 0.01,
        n_sims: 199,
        seed: 203,
        direction: Direction::TwoSided,
    };
    let result = index.scan(&labels, &cfg).expect("scan");
    let pass = result.p_hat == 1.0 / 200.0 && result.rejected;
    report.check(
        "permutation rank fixture",
        pass,
        format!("p_hat {} (expected 0.005), rejected {}", result.p_hat, result.rejected),
        t,
    );
}

fn null_calibration(report: &mut Report, world: &World) {
    let t = Instant::now();
    let fair = InjectionConfig {
        hotspots: 0,
        magnitude: 0.0,
        seed: 204,
        ..InjectionConfig::default()
    };
    let scopes = resolution_scopes(&world.family);
    let summaries = world.evaluate(&fair, NULL_DATASETS, &scopes, 205);
    let all = scope(&summaries, "all");
    let per_resolution: Vec<String> = summaries.iter().map(|s| format!("{} {:.3}", s.scope, s.power)).collect();
    report.check(
        "null calibration",
        all.power <= NULL_MAX_REJECTION,
        format!(
            "{NULL_DATASETS} fair datasets, pooled rejection rate {:.3} (<= {NULL_MAX_REJECTION}); {}",
            all.power,
            per_resolution.join(", ")
        ),
        t,
    );
}

fn power_trend(report: &mut Report, world: &World) -> Vec<ScopeSummary> {
    let t = Instant::now();
    let scopes = resolution_scopes(&world.family);
    let mut powers = Vec::new();
    let mut at_0_4 = Vec::new();
    for (k, magnitude) in [0.2, 0.4, 0.6].into_iter().enumerate() {
        let summaries = world.evaluate(&injection(magnitude, 200, 210 + k as u64), DATASETS, &scopes, 220 + k as u64);
        powers.push(scope(&summaries, "all").power);
        if magnitude == 0.4 {
            at_0_4 = summaries;
        }
    }
    report.check(
        "power trend over magnitude",
        non_decreasing(&powers, TREND_SLACK) && powers[2] >= MIN_POWER_AT_0_6,
        format!("pooled power at 0.2/0.4/0.6: {powers:.3?} (non-decreasing within {TREND_SLACK}, last >= {MIN_POWER_AT_0_6})"),
        t,
    );
    at_0_4
}

fn hotspot_size_trend(report: &mut Report, world: &World, at_200: &[ScopeSummary]) {
    let t = Instant::now();
    let scopes = vec![Scope {
        name: "all".into(),
        grids: (0..world.family.grids.len() as u32).collect(),
    }];
    let small = world.evaluate(&injection(0.4, 100, 230), DATASETS, &scopes, 231);
    let large = world.evaluate(&injection(0.4, 400, 232), DATASETS, &scopes, 233);
    let powers = [
        scope(&small, "all").power,
        scope(at_200, "all").power,
        scope(&large, "all").power,
    ];
    report.check(
        "power trend over hotspot size",
        non_decreasing(&powers, TREND_SLACK),
        format!("pooled power at 100/200/400 objects: {powers:.3?} (non-decreasing within {TREND_SLACK})"),
        t,
    );
}

fn resolution_tradeoff(report: &mut Report, at_0_4: &[ScopeSummary]) {
    let t = Instant::now();
    let finest = scope(at_0_4, &format!("r{}", RESOLUTIONS[0]));
    let coarsest = scope(at_0_4, &format!("r{}", RESOLUTIONS[RESOLUTIONS.len() - 1]));
    let ppv_ok = matches!((finest.ppv, coarsest.ppv), (Some(f), Some(c)) if f >= c - TREND_SLACK);
    let sens_ok = matches!((coarsest.sensitivity, finest.sensitivity), (Some(c), Some(f)) if c >= f - TREND_SLACK);
    report.check(
        "resolution trade-off",
        ppv_ok && sens_ok,
        format!(
            "PPV finest {} vs coarsest {}; sensitivity coarsest {} vs finest {} (detected {} / {})",
            fmt(finest.ppv),
            fmt(coarsest.ppv),
            fmt(coarsest.sensitivity),
            fmt(finest.sensitivity),
            finest.n_detected,
            coarsest.n_detected
        ),
        t,
    );
}

/// Even-odd ray casting over every ring.
fn inside(p: &Point, poly: &Polygon) -> bool {
    let mut odd = false;
    for ring in poly.rings() {
        let n = ring.len();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y) {
                odd = !odd;
            }
        }
    }
    odd
}

fn injection_audit(report: &mut Report, world: &World) {
    let t = Instant::now();
    let cfg = InjectionConfig {
        seed: 240,
        ..InjectionConfig::default()
    };
    let datasets = generate_configuration(&cfg, &world.seeds, &world.movement, AUDIT_HOTSPOTS).expect("datasets");
    let (mut mismatched, mut off_target) = (0, 0);
    for hotspot in datasets.iter().flat_map(|d| &d.hotspots) {
        let recount: Vec<u32> = (0..world.movement.len() as u32)
            .filter(|&o| {
                hotspot.regions.iter().all(|region| {
                    world
                        .movement
                        .locations(o)
                        .iter()
                        .filter(|p| region.polygons().iter().any(|poly| inside(p, poly)))
                        .count()
                        >= cfg.stops_per_region
                })
            })
            .collect();
        if recount != hotspot.objects {
            mismatched += 1;
        }
        if hotspot.objects.len().abs_diff(cfg.objects_per_hotspot) > HOTSPOT_TOLERANCE {
            off_target += 1;
        }
    }
    let total: usize = datasets.iter().map(|d| d.hotspots.len()).sum();
    report.check(
        "injection ground-truth audit",
        total == AUDIT_HOTSPOTS && mismatched == 0 && off_target == 0,
        format!("{total} hotspots, {mismatched} recount mismatches, {off_target} outside {}±{HOTSPOT_TOLERANCE}", cfg.objects_per_hotspot),
        t,
    );
}

/// Every stage artifact written to `dir`, in order.
fn pipeline_artifacts(dir: &std::path::Path) -> Vec<Vec<u8>> {
    let mcfg = MovementConfig {
        objects: 400,
        days: 3,
        seed: 250,
        ..MovementConfig::default()
    };
    let stops = generate_stops(&mcfg, &SegmentationConfig::default()).expect("stops");
    io::write_stops(&dir.join("stops.csv"), &stops).expect("write");
    let movement = Arc::new(Movement::from_stops(stops).expect("movement"));
    let bbox = movement.bbox().expect("bbox");
    let family = build_family(
        &bbox,
        &GridSpec {
            resolutions: vec![200.0, 500.0],
            shifts_per_resolution: 2,
            shift_mode: ShiftMode::Diagonal,
        },
    )
    .expect("grids");
    io::write_json(&dir.join("grids.json"), &family).expect("write");
    let cellsets = map_family(&movement.stops, &family, &movement.objects, &MappingConfig::default()).expect("map");
    io::write_cellsets(&dir.join("cellsets.csv"), &cellsets, &family, &movement.objects).expect("write");
    let per_grid = mine_family(&cellsets);
    io::write_candidates(&dir.join("candidates.jsonl"), &per_grid, &family, &movement.objects).expect("write");
    let seeds = fallback_seed_polygons(&bbox, FALLBACK_SEEDS, 251);
    let dataset = generate_configuration(&injection(0.4, 80, 252), &seeds, &movement, 1)
        .expect("dataset")
        .remove(0);
    io::write_labels(&dir.join("labels.csv"), &movement.objects, &dataset.labels).expect("write");
    let index = ScanIndex::from_candidates(per_grid.iter().flatten(), movement.len() as u32).expect("index");
    let result = index
        .scan(
            &dataset.labels,
            &ScanConfig {
                n_sims: 99,
                seed: 253,
                ..ScanConfig::default()
            },
        )
        .expect("scan");
    io::write_json(&dir.join("scan.json"), &result).expect("write");
    ["stops.csv", "grids.json", "cellsets.csv", "candidates.jsonl", "labels.csv", "scan.json"]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).expect("read"))
        .collect()
}

fn determinism(report: &mut Report) {
    let t = Instant::now();
    let (a, b) = (tempfile::tempdir().expect("tmp"), tempfile::tempdir().expect("tmp"));
    let first = pipeline_artifacts(a.path());
    let second = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("pool")
        .install(|| pipeline_artifacts(b.path()));
    let differing = first.iter().zip(&second).filter(|(x, y)| x != y).count();
    report.check(
        "determinism",
        differing == 0,
        format!("{} stage artifacts, {differing} differ between reruns", first.len()),
        t,
    );
}

fn main() -> ExitCode {
    let mut report = Report { failures: 0 };
    appendix_fixtures(&mut report);
    scan_oracle(&mut report);
    miner_oracle(&mut report);
    permutation_rank(&mut report);
    determinism(&mut report);

    let t = Instant::now();
    let world = World::build();
    println!(
        "---- {OBJECTS} objects, {} stops, {} grids, {} candidates ({:.1}s)",
        world.movement.stops.len(),
        world.family.grids.len(),
        world.per_grid.iter().map(Vec::len).sum::<usize>(),
        t.elapsed().as_secs_f64()
    );
    injection_audit(&mut report, &world);
    null_calibration(&mut report, &world);
    let at_0_4 = power_trend(&mut report, &world);
    hotspot_size_trend(&mut report, &world, &at_0_4);
    resolution_tradeoff(&mut report, &at_0_4);

    if report.failures == 0 {
        println!("all acceptance criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("{} acceptance criteria fail", report.failures);
        ExitCode::FAILURE
    }
}
