//! Synthetic movement data and label-based unfairness injection.

mod movement;

pub use movement::*;

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{buffer_polygon, transform_polygon, BoundingBox, Point, Polygon, Region};
use crate::mapping::ObjectIndex;
use crate::scan::LabelVector;
use crate::trajectory::StopSegment;

/// Number of fallback seed polygons, matching the number of census block
/// groups the original experiments drew from.
pub const FALLBACK_SEEDS: usize = 51;
const BISECTION_STEPS: usize = 64;
const TRANSLATION_ATTEMPTS: usize = 100;

/// SplitMix64 finalizer applied to `seed + stream`, used to derive
/// independent sub-seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionConfig {
    pub regions_per_hotspot: usize,
    pub stops_per_region: usize,
    pub objects_per_hotspot: usize,
    pub tolerance: usize,
    pub hotspots: usize,
    pub magnitude: f64,
    /// Positive rate outside hotspots; `None` centers both rates on 0.5.
    pub base_rate: Option<f64>,
    /// Fresh attempts per hotspot before giving up.
    pub max_retries: u32,
    pub seed: u64,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self {
            regions_per_hotspot: 2,
            stops_per_region: 1,
            objects_per_hotspot: 400,
            tolerance: 10,
            hotspots: 1,
            magnitude: 0.4,
            base_rate: None,
            max_retries: 50,
            seed: 0,
        }
    }
}

impl InjectionConfig {
    /// Positive rates `(q_out, q_in)`.
    pub fn rates(&self) -> (f64, f64) {
        let q_out = self.base_rate.unwrap_or(0.5 + self.magnitude / 2.0);
        (q_out, q_out - self.magnitude)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.magnitude) {
            return Err(Error::config(format!(
                "injection.magnitude must lie in [0, 1), got {}",
                self.magnitude
            )));
        }
        let (q_out, q_in) = self.rates();
        if !(0.0..=1.0).contains(&q_out) || q_in < 0.0 {
            return Err(Error::config(format!(
                "injection.base_rate {q_out} with magnitude {} leaves [0, 1]",
                self.magnitude
            )));
        }
        if self.hotspots > 0 && (self.regions_per_hotspot == 0 || self.stops_per_region == 0) {
            return Err(Error::config(
                "injection.regions_per_hotspot and injection.stops_per_region must be positive",
            ));
        }
        if self.max_retries == 0 {
            return Err(Error::config("injection.max_retries must be positive"));
        }
        Ok(())
    }
}

/// Stop segments of a fixed population, with stop centroids grouped by dense
/// object index.
#[derive(Debug, Clone)]
pub struct Movement {
    pub objects: ObjectIndex,
    pub stops: Vec<StopSegment>,
    locations: Vec<Vec<Point>>,
}

impl Movement {
    /// Every stop must belong to an object of `objects`; objects without
    /// stops are allowed.
    pub fn new(objects: ObjectIndex, stops: Vec<StopSegment>) -> Result<Self> {
        let mut locations = vec![Vec::new(); objects.len()];
        for s in &stops {
            let k = objects
                .get(&s.object)
                .ok_or_else(|| Error::invalid(format!("stop of unknown object {}", s.object)))?;
            locations[k as usize].push(s.location);
        }
        Ok(Self {
            objects,
            stops,
            locations,
        })
    }

    /// Uses the objects that appear in `stops`.
    pub fn from_stops(stops: Vec<StopSegment>) -> Result<Self> {
        let objects = ObjectIndex::new(stops.iter().map(|s| s.object.clone()));
        Self::new(objects, stops)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Stop centroids of one object.
    pub fn locations(&self, object: u32) -> &[Point] {
        &self.locations[object as usize]
    }

    pub fn bbox(&self) -> Option<BoundingBox> {
        BoundingBox::enclosing(self.stops.iter().map(|s| &s.location))
    }
}

/// Objects with at least `min_stops` stop centroids inside every region,
/// ascending by dense index.
pub fn associated_objects(movement: &Movement, regions: &[Region], min_stops: usize) -> Vec<u32> {
    let boxes: Vec<Option<BoundingBox>> = regions.iter().map(Region::bbox).collect();
    if boxes.iter().any(Option::is_none) {
        return Vec::new();
    }
    (0..movement.len() as u32)
        .filter(|&o| {
            let locs = movement.locations(o);
            regions.iter().zip(&boxes).all(|(region, bbox)| {
                let bbox = bbox.as_ref().unwrap();
                locs.iter()
                    .filter(|p| bbox.contains(p) && region.contains(p))
                    .count()
                    >= min_stops
            })
        })
        .collect()
}

/// An injected hotspot and its associated objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub regions: Vec<Region>,
    /// Indices of the seed polygons the regions were derived from.
    pub seeds: Vec<usize>,
    /// Signed buffer distance applied to every transformed seed.
    pub buffer: f64,
    /// Dense indices of associated objects, ascending.
    pub objects: Vec<u32>,
}

/// Random star-shaped polygons spread over `bbox`, used when no seed
/// polygons are supplied.
pub fn fallback_seed_polygons(bbox: &BoundingBox, count: usize, seed: u64) -> Vec<Polygon> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5EED));
    let scale = bbox.width().min(bbox.height());
    (0..count)
        .map(|_| {
            let center = Point::new(
                rng.gen_range(bbox.min_x..=bbox.max_x),
                rng.gen_range(bbox.min_y..=bbox.max_y),
            );
            let radius = rng.gen_range(0.05..0.12) * scale;
            let n = rng.gen_range(6..=10);
            let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..TAU)).collect();
            angles.sort_by(f64::total_cmp);
            angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            let ring: Vec<Point> = angles
                .iter()
                .map(|&a| {
                    let r = radius * rng.gen_range(0.75..=1.0);
                    Point::new(center.x + r * a.cos(), center.y + r * a.sin())
                })
                .collect();
            Polygon::new(ring, Vec::new()).unwrap_or_else(|_| {
                Polygon::rectangle(center.x - radius, center.y - radius, center.x + radius, center.y + radius)
                    .expect("positive radius")
            })
        })
        .collect()
}

fn segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(&Point::new(a.x + t * dx, a.y + t * dy))
}

/// Approximate radius of the largest inscribed circle, from a 40×40 lattice
/// of candidate centers.
pub fn inradius(poly: &Polygon) -> f64 {
    let bbox = poly.bbox();
    let mut best: f64 = 0.0;
    for i in 0..40 {
        for j in 0..40 {
            let p = Point::new(
                bbox.min_x + (i as f64 + 0.5) / 40.0 * bbox.width(),
                bbox.min_y + (j as f64 + 0.5) / 40.0 * bbox.height(),
            );
            if !poly.contains(&p) {
                continue;
            }
            let d = poly
                .rings()
                .flat_map(|ring| (0..ring.len()).map(move |k| (ring[k], ring[(k + 1) % ring.len()])))
                .map(|(a, b)| segment_distance(&p, &a, &b))
                .fold(f64::INFINITY, f64::min);
            best = best.max(d);
        }
    }
    best
}

/// Largest vertex-to-vertex distance.
fn diameter(poly: &Polygon) -> f64 {
    let v = poly.exterior();
    v.iter()
        .flat_map(|a| v.iter().map(move |b| a.distance(b)))
        .fold(0.0, f64::max)
}

fn buffered(polys: &[Polygon], distance: f64) -> Option<Vec<Region>> {
    if distance == 0.0 {
        return Some(polys.iter().cloned().map(Region::from).collect());
    }
    polys.iter().map(|p| buffer_polygon(p, distance).ok()).collect()
}

/// Samples seed polygons, moves them randomly and calibrates a common buffer
/// so that the number of associated objects is within tolerance.
pub fn make_hotspot(
    cfg: &InjectionConfig,
    seeds: &[Polygon],
    movement: &Movement,
    rng: &mut impl Rng,
) -> Result<Hotspot> {
    let n = cfg.regions_per_hotspot;
    if seeds.len() < n {
        return Err(Error::config(format!(
            "{} seed polygons cannot supply {n} regions per hotspot",
            seeds.len()
        )));
    }
    let picked: Vec<usize> = index::sample(rng, seeds.len(), n).into_vec();
    let mut moved = Vec::with_capacity(n);
    for &k in &picked {
        let seed = &seeds[k];
        let bbox = seed.bbox();
        let reach = bbox.diagonal();
        let angle = rng.gen_range(0.0..TAU);
        let placed = (0..TRANSLATION_ATTEMPTS).find_map(|_| {
            let dx = rng.gen_range(-reach..=reach);
            let dy = rng.gen_range(-reach..=reach);
            let t = transform_polygon(seed, angle, dx, dy);
            t.intersects_bbox(&bbox).then_some(t)
        });
        moved.push(placed.ok_or_else(|| Error::HotspotRejected(format!("seed {k} could not be placed")))?);
    }

    let target = cfg.objects_per_hotspot;
    let lo_ok = target.saturating_sub(cfg.tolerance);
    let hi_ok = target + cfg.tolerance;
    let evaluate = |d: f64| -> (Option<Vec<Region>>, Vec<u32>) {
        match buffered(&moved, d) {
            Some(regions) => {
                let objects = associated_objects(movement, &regions, cfg.stops_per_region);
                (Some(regions), objects)
            }
            None => (None, Vec::new()),
        }
    };
    let accept = |d: f64, regions: Vec<Region>, objects: Vec<u32>| Hotspot {
        regions,
        seeds: picked.clone(),
        buffer: d,
        objects,
    };

    let (regions, objects) = evaluate(0.0);
    if (lo_ok..=hi_ok).contains(&objects.len()) {
        return Ok(accept(0.0, regions.expect("unbuffered regions exist"), objects));
    }
    let (mut lo, mut hi) = if objects.len() < lo_ok {
        (0.0, 3.0 * moved.iter().map(diameter).fold(0.0, f64::max))
    } else {
        (-0.9 * moved.iter().map(inradius).fold(f64::INFINITY, f64::min), 0.0)
    };
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let (regions, objects) = evaluate(mid);
        let count = objects.len();
        if let Some(regions) = regions.filter(|_| (lo_ok..=hi_ok).contains(&count)) {
            return Ok(accept(mid, regions, objects));
        }
        if count < lo_ok {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::HotspotRejected(format!(
        "no buffer in [{lo:.1}, {hi:.1}] m gives {target} ± {} objects",
        cfg.tolerance
    )))
}

/// Independent Bernoulli labels: rate `q_out - magnitude` for objects in
/// `unfair` (ascending dense indices), `q_out` otherwise.
pub fn assign_labels(n_objects: usize, unfair: &[u32], q_out: f64, magnitude: f64, rng: &mut impl Rng) -> LabelVector {
    let q_in = (q_out - magnitude).clamp(0.0, 1.0);
    let mut inside = vec![false; n_objects];
    for &o in unfair {
        inside[o as usize] = true;
    }
    inside
        .into_iter()
        .map(|is_in| rng.gen_bool(if is_in { q_in } else { q_out }))
        .collect()
}

/// A labeled population with its ground truth. The movement data is shared
/// between datasets of one configuration.
#[derive(Debug, Clone)]
pub struct AuditableDataset {
    pub movement: Arc<Movement>,
    pub labels: LabelVector,
    pub hotspots: Vec<Hotspot>,
    /// Sub-seed this dataset was generated from.
    pub seed: u64,
}

impl AuditableDataset {
    /// Objects truly treated differently: the union over hotspots.
    pub fn unfair_objects(&self) -> Vec<u32> {
        let mut u: Vec<u32> = self.hotspots.iter().flat_map(|h| h.objects.iter().copied()).collect();
        u.sort_unstable();
        u.dedup();
        u
    }
}

/// One dataset from an explicit seed.
pub fn generate_dataset(
    cfg: &InjectionConfig,
    seeds: &[Polygon],
    movement: &Arc<Movement>,
    seed: u64,
) -> Result<AuditableDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hotspots = Vec::with_capacity(cfg.hotspots);
    for h in 0..cfg.hotspots {
        let mut last = None;
        for _ in 0..cfg.max_retries {
            match make_hotspot(cfg, seeds, movement, &mut rng) {
                Ok(hotspot) => {
                    last = None;
                    hotspots.push(hotspot);
                    break;
                }
                Err(e @ Error::HotspotRejected(_)) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        if let Some(e) = last {
            return Err(Error::HotspotRejected(format!(
                "hotspot {h} failed after {} attempts: {e}",
                cfg.max_retries
            )));
        }
    }
    let mut unfair: Vec<u32> = hotspots.iter().flat_map(|h| h.objects.iter().copied()).collect();
    unfair.sort_unstable();
    unfair.dedup();
    let (q_out, _) = cfg.rates();
    let labels = assign_labels(movement.len(), &unfair, q_out, cfg.magnitude, &mut rng);
    Ok(AuditableDataset {
        movement: Arc::clone(movement),
        labels,
        hotspots,
        seed,
    })
}

/// `count` datasets over the same movement data with independent hotspots
/// and labels; dataset `k` uses sub-seed `derive_seed(cfg.seed, k)`.
pub fn generate_configuration(
    cfg: &InjectionConfig,
    seeds: &[Polygon],
    movement: &Arc<Movement>,
    count: usize,
) -> Result<Vec<AuditableDataset>> {
    cfg.validate()?;
    (0..count as u64)
        .into_par_iter()
        .map(|k| generate_dataset(cfg, seeds, movement, derive_seed(cfg.seed, k)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::point_in_polygon;
    use crate::trajectory::{ObjectId, SegmentationConfig};

    fn grid_movement(side: u32, spacing: f64) -> Movement {
        // One object per lattice point, each with one stop there.
        let stops: Vec<StopSegment> = (0..side * side)
            .map(|k| StopSegment {
                object: ObjectId(format!("o{k:05}")),
                location: Point::new((k % side) as f64 * spacing, (k / side) as f64 * spacing),
                t_start: 0,
                t_end: 600,
            })
            .collect();
        Movement::from_stops(stops).unwrap()
    }

    fn square(x0: f64, y0: f64, side: f64) -> Polygon {
        Polygon::rectangle(x0, y0, x0 + side, y0 + side).unwrap()
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: Vec<u64> = (0..100).map(|k| derive_seed(7, k)).collect();
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), 100);
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn association_requires_every_region() {
        let stops = vec![
            StopSegment { object: "a".into(), location: Point::new(1.0, 1.0), t_start: 0, t_end: 600 },
            StopSegment { object: "a".into(), location: Point::new(11.0, 1.0), t_start: 700, t_end: 1300 },
            StopSegment { object: "b".into(), location: Point::new(1.0, 1.0), t_start: 0, t_end: 600 },
            StopSegment { object: "c".into(), location: Point::new(1.5, 1.5), t_start: 0, t_end: 600 },
            StopSegment { object: "c".into(), location: Point::new(1.2, 1.2), t_start: 700, t_end: 1300 },
        ];
        let m = Movement::from_stops(stops).unwrap();
        let regions = vec![Region::from(square(0.0, 0.0, 2.0)), Region::from(square(10.0, 0.0, 2.0))];
        assert_eq!(associated_objects(&m, &regions, 1), vec![0]);
        assert_eq!(associated_objects(&m, &regions[..1], 1), vec![0, 1, 2]);
        assert_eq!(associated_objects(&m, &regions[..1], 2), vec![2]);
    }

    #[test]
    fn hotspot_meets_target_and_recount() {
        let movement = grid_movement(60, 10.0);
        let seeds = fallback_seed_polygons(&BoundingBox::new(0.0, 0.0, 590.0, 590.0).unwrap(), 10, 1);
        let cfg = InjectionConfig {
            regions_per_hotspot: 1,
            objects_per_hotspot: 300,
            ..InjectionConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut accepted = 0;
        for _ in 0..10 {
            let Ok(h) = make_hotspot(&cfg, &seeds, &movement, &mut rng) else { continue };
            accepted += 1;
            assert!((290..=310).contains(&h.objects.len()), "{}", h.objects.len());
            let recount: Vec<u32> = (0..movement.len() as u32)
                .filter(|&o| {
                    movement.locations(o).iter().any(|p| {
                        h.regions[0].polygons().iter().any(|poly| point_in_polygon(p, poly))
                    })
                })
                .collect();
            assert_eq!(recount, h.objects);
        }
        assert!(accepted >= 5);
    }

    #[test]
    fn unbuffered_geometry_returned_when_within_tolerance() {
        let movement = grid_movement(10, 10.0);
        // A square holding exactly 4 lattice points (boundary inclusive).
        let seeds = vec![square(0.0, 0.0, 10.0)];
        let cfg = InjectionConfig {
            regions_per_hotspot: 1,
            objects_per_hotspot: 4,
            tolerance: 0,
            ..InjectionConfig::default()
        };
        // With translation, check the returned buffer against its count.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        if let Ok(h) = make_hotspot(&cfg, &seeds, &movement, &mut rng) {
            assert_eq!(h.objects.len(), 4);
            if h.buffer == 0.0 {
                let moved = &h.regions[0].polygons()[0];
                assert!((moved.area() - 100.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn too_few_seeds_is_config_error() {
        let movement = grid_movement(3, 1.0);
        let cfg = InjectionConfig { regions_per_hotspot: 3, ..InjectionConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = make_hotspot(&cfg, &[square(0.0, 0.0, 1.0)], &movement, &mut rng);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn transformed_regions_intersect_seed_bbox() {
        let movement = grid_movement(40, 15.0);
        let seeds = fallback_seed_polygons(&BoundingBox::new(0.0, 0.0, 585.0, 585.0).unwrap(), 8, 2);
        let cfg = InjectionConfig { regions_per_hotspot: 1, objects_per_hotspot: 100, ..InjectionConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            if let Ok(h) = make_hotspot(&cfg, &seeds, &movement, &mut rng) {
                if h.buffer >= 0.0 {
                    let region_box = h.regions[0].bbox().unwrap();
                    assert!(region_box.intersects(&seeds[h.seeds[0]].bbox()));
                }
            }
        }
    }

    #[test]
    fn label_rates() {
        let (q_out, q_in) = InjectionConfig { magnitude: 0.2, ..InjectionConfig::default() }.rates();
        assert!((q_out - 0.6).abs() < 1e-12 && (q_in - 0.4).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels = assign_labels(10_000, &[], 0.5, 0.0, &mut rng);
        let rate = labels.positives() as f64 / 10_000.0;
        assert!((rate - 0.5).abs() <= 0.02, "{rate}");
        let unfair: Vec<u32> = (0..5000).collect();
        let labels = assign_labels(10_000, &unfair, 0.6, 0.2, &mut rng);
        let inside = (0..5000).filter(|&o| labels.get(o)).count() as f64 / 5000.0;
        let outside = (5000..10_000).filter(|&o| labels.get(o)).count() as f64 / 5000.0;
        assert!((inside - 0.4).abs() < 0.03 && (outside - 0.6).abs() < 0.03);
    }

    #[test]
    fn injection_config_validation() {
        assert!(InjectionConfig::default().validate().is_ok());
        assert!(InjectionConfig { magnitude: 1.0, ..InjectionConfig::default() }.validate().is_err());
        let c = InjectionConfig { base_rate: Some(0.1), magnitude: 0.4, ..InjectionConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn fair_configuration() {
        let movement = Arc::new(grid_movement(5, 10.0));
        let cfg = InjectionConfig { hotspots: 0, magnitude: 0.0, seed: 3, ..InjectionConfig::default() };
        let sets = generate_configuration(&cfg, &[], &movement, 3).unwrap();
        assert_eq!(sets.len(), 3);
        assert!(sets.iter().all(|d| d.hotspots.is_empty() && d.unfair_objects().is_empty()));
        assert_eq!(sets[0].labels.len(), 25);
    }

    #[test]
    fn configuration_is_deterministic() {
        let mcfg = MovementConfig { objects: 300, days: 2, seed: 1, ..MovementConfig::default() };
        let stops = generate_stops(&mcfg, &SegmentationConfig::default()).unwrap();
        let movement = Arc::new(Movement::from_stops(stops).unwrap());
        let seeds = fallback_seed_polygons(&mcfg.bbox, FALLBACK_SEEDS, 1);
        let cfg = InjectionConfig {
            regions_per_hotspot: 1,
            objects_per_hotspot: 40,
            seed: 8,
            ..InjectionConfig::default()
        };
        let a = generate_configuration(&cfg, &seeds, &movement, 2).unwrap();
        let b = generate_configuration(&cfg, &seeds, &movement, 2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.labels, y.labels);
            assert_eq!(x.hotspots, y.hotspots);
            assert_eq!(x.hotspots.len(), 1);
            assert!((30..=50).contains(&x.hotspots[0].objects.len()));
        }
        assert_ne!(a[0].labels, a[1].labels);
    }
}
