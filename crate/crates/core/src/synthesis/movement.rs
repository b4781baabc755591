//! Routine-based movement generator: every object alternates between a few
//! personal anchor places on a daily schedule, sampled every two minutes.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{BoundingBox, Point};
use crate::trajectory::{compress, detect_stops, ObjectId, SegmentationConfig, StopSegment, TrajectorySample};

use super::derive_seed;

const DAY: i64 = 86_400;
const HOUR: i64 = 3_600;
/// Number of popular areas anchors gravitate to when skew is enabled.
const SKEW_CENTERS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MovementConfig {
    pub objects: u32,
    pub days: u32,
    pub bbox: BoundingBox,
    /// Seconds between consecutive samples.
    pub sample_interval: i64,
    /// Epoch second of the first simulated midnight.
    pub start: i64,
    /// Probability that an anchor is drawn near a popular area instead of
    /// uniformly; `0` gives uniform anchors.
    pub skew: f64,
    /// Travel speed between anchors in meters per second.
    pub speed: f64,
    pub seed: u64,
}

impl Default for MovementConfig {
    fn default() -> Self {
        Self {
            objects: 1000,
            days: 7,
            bbox: BoundingBox {
                min_x: 0.0,
                min_y: 0.0,
                max_x: 4690.0,
                max_y: 4830.0,
            },
            sample_interval: 120,
            start: 0,
            skew: 0.0,
            speed: 8.0,
            seed: 0,
        }
    }
}

impl MovementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.objects == 0 || self.days == 0 {
            return Err(Error::config("movement.objects and movement.days must be positive"));
        }
        if self.sample_interval <= 0 || self.sample_interval > HOUR {
            return Err(Error::config("movement.sample_interval must lie in (0, 3600] seconds"));
        }
        if !(0.0..=1.0).contains(&self.skew) {
            return Err(Error::config("movement.skew must lie in [0, 1]"));
        }
        if self.speed.is_nan() || self.speed <= 0.0 {
            return Err(Error::config("movement.speed must be positive"));
        }
        if self.bbox.width() <= 0.0 || self.bbox.height() <= 0.0 {
            return Err(Error::config("movement.bbox must have positive extent"));
        }
        Ok(())
    }

    /// Zero-padded id of the `k`-th object, so that id order equals
    /// generation order.
    pub fn object_id(&self, k: u32) -> ObjectId {
        let width = self.objects.saturating_sub(1).to_string().len();
        ObjectId(format!("o{k:0width$}"))
    }

    fn skew_centers(&self) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, u64::MAX));
        (0..SKEW_CENTERS).map(|_| uniform_point(&self.bbox, &mut rng)).collect()
    }
}

fn uniform_point(bbox: &BoundingBox, rng: &mut impl Rng) -> Point {
    Point::new(
        rng.gen_range(bbox.min_x..=bbox.max_x),
        rng.gen_range(bbox.min_y..=bbox.max_y),
    )
}

fn anchor(cfg: &MovementConfig, centers: &[Point], rng: &mut impl Rng) -> Point {
    if cfg.skew > 0.0 && rng.gen_bool(cfg.skew) {
        let c = centers[rng.gen_range(0..centers.len())];
        let spread = Normal::new(0.0, 0.08 * cfg.bbox.width().min(cfg.bbox.height())).unwrap();
        let b = &cfg.bbox;
        Point::new(
            (c.x + spread.sample(rng)).clamp(b.min_x, b.max_x),
            (c.y + spread.sample(rng)).clamp(b.min_y, b.max_y),
        )
    } else {
        uniform_point(&cfg.bbox, rng)
    }
}

/// Emits samples of one object: stays are jittered around their anchor,
/// trips interpolate linearly.
struct Recorder<'a> {
    cfg: &'a MovementConfig,
    object: ObjectId,
    t: i64,
    at: Point,
    out: Vec<TrajectorySample>,
    jitter: Normal<f64>,
}

impl Recorder<'_> {
    fn push(&mut self, p: Point) {
        self.out.push(TrajectorySample {
            object: self.object.clone(),
            t: self.t,
            position: p,
        });
        self.t += self.cfg.sample_interval;
    }

    fn stay_until(&mut self, until: i64, rng: &mut impl Rng) {
        while self.t < until {
            let dx = self.jitter.sample(rng).clamp(-15.0, 15.0);
            let dy = self.jitter.sample(rng).clamp(-15.0, 15.0);
            self.push(Point::new(self.at.x + dx, self.at.y + dy));
        }
    }

    fn travel_to(&mut self, to: Point) {
        let from = self.at;
        let duration = (from.distance(&to) / self.cfg.speed).ceil() as i64;
        let end = self.t + duration;
        let start = self.t;
        while self.t < end {
            let f = (self.t - start) as f64 / duration as f64;
            self.push(Point::new(from.x + f * (to.x - from.x), from.y + f * (to.y - from.y)));
        }
        self.at = to;
    }
}

/// Trajectory of the `k`-th object, time-ordered.
pub fn object_trajectory(cfg: &MovementConfig, k: u32) -> Vec<TrajectorySample> {
    object_trajectory_with(cfg, &cfg.skew_centers(), k)
}

fn object_trajectory_with(cfg: &MovementConfig, centers: &[Point], k: u32) -> Vec<TrajectorySample> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, k as u64));
    let home = anchor(cfg, centers, &mut rng);
    let work = rng.gen_bool(0.8).then(|| anchor(cfg, centers, &mut rng));
    let n_extras = rng.gen_range(2..=4);
    let extras: Vec<Point> = (0..n_extras).map(|_| anchor(cfg, centers, &mut rng)).collect();
    // Number of extra visits per day, weighted towards one or two.
    let visits = WeightedIndex::new([1, 3, 3, 1]).unwrap();

    let mut rec = Recorder {
        cfg,
        object: cfg.object_id(k),
        t: cfg.start,
        at: home,
        out: Vec::with_capacity((cfg.days as i64 * DAY / cfg.sample_interval) as usize + 16),
        jitter: Normal::new(0.0, 5.0).unwrap(),
    };
    for day in 0..cfg.days as i64 {
        let midnight = cfg.start + day * DAY;
        let leave = midnight + 7 * HOUR + rng.gen_range(0..2 * HOUR);
        rec.stay_until(leave, &mut rng);
        let mut plan: Vec<(Point, i64)> = Vec::new();
        if let Some(work) = work {
            plan.push((work, rng.gen_range(6 * HOUR..9 * HOUR)));
        }
        let n_visits = visits.sample(&mut rng) + usize::from(work.is_none());
        for _ in 0..n_visits {
            let place = extras[rng.gen_range(0..extras.len())];
            plan.push((place, rng.gen_range(30 * 60..2 * HOUR)));
        }
        for (place, duration) in plan {
            if place.distance(&rec.at) < 1.0 {
                continue;
            }
            rec.travel_to(place);
            let until = (rec.t + duration).min(midnight + 23 * HOUR);
            rec.stay_until(until, &mut rng);
        }
        rec.travel_to(home);
    }
    rec.stay_until(cfg.start + cfg.days as i64 * DAY, &mut rng);
    rec.out
}

/// Trajectories of every object, keyed by object id.
pub fn generate_movement(cfg: &MovementConfig) -> Result<BTreeMap<ObjectId, Vec<TrajectorySample>>> {
    cfg.validate()?;
    let centers = cfg.skew_centers();
    Ok((0..cfg.objects)
        .into_par_iter()
        .map(|k| (cfg.object_id(k), object_trajectory_with(cfg, &centers, k)))
        .collect())
}

/// Generates and segments every object without keeping the raw samples.
pub fn generate_stops(cfg: &MovementConfig, seg: &SegmentationConfig) -> Result<Vec<StopSegment>> {
    cfg.validate()?;
    seg.validate()?;
    let centers = cfg.skew_centers();
    let per_object: Vec<Vec<StopSegment>> = (0..cfg.objects)
        .into_par_iter()
        .map(|k| {
            let samples = object_trajectory_with(cfg, &centers, k);
            detect_stops(&compress(&samples, seg.compression_radius)?, seg)
        })
        .collect::<Result<_>>()?;
    Ok(per_object.into_iter().flatten().collect())
}
