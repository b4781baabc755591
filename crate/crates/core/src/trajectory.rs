//! Trajectory samples, radius-based compression and stay-point stop detection.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::Point;

/// Opaque moving-object identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub String);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for ObjectId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub object: ObjectId,
    /// Seconds since the epoch.
    pub t: i64,
    pub position: Point,
}

impl TrajectorySample {
    pub fn new(object: impl Into<ObjectId>, t: i64, x: f64, y: f64) -> Self {
        Self {
            object: object.into(),
            t,
            position: Point::new(x, y),
        }
    }
}

/// A stay of one object around `location` between `t_start` and `t_end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopSegment {
    pub object: ObjectId,
    pub location: Point,
    pub t_start: i64,
    pub t_end: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Maximum distance from the window's first sample, in meters.
    pub max_stay_radius: f64,
    /// Minimum stay duration, in seconds.
    pub min_stay_duration: i64,
    /// Radius used by [`compress`], in meters.
    pub compression_radius: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            max_stay_radius: 50.0,
            min_stay_duration: 600,
            compression_radius: 1.0,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_stay_radius.is_nan() || self.max_stay_radius <= 0.0 {
            return Err(Error::config("segmentation.max_stay_radius must be positive"));
        }
        if self.min_stay_duration <= 0 {
            return Err(Error::config("segmentation.min_stay_duration must be positive"));
        }
        if self.compression_radius.is_nan() || self.compression_radius <= 0.0 {
            return Err(Error::config("segmentation.compression_radius must be positive"));
        }
        Ok(())
    }
}

fn check_sorted(samples: &[TrajectorySample]) -> Result<()> {
    if let Some(w) = samples.windows(2).find(|w| w[1].t < w[0].t) {
        return Err(Error::invalid(format!(
            "samples for object {} are not sorted by time ({} after {})",
            w[1].object, w[1].t, w[0].t
        )));
    }
    Ok(())
}

/// Median with the even-count rule: mean of the two middle values.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Anchor-based compression of one object's time-ordered samples.
///
/// Each maximal run of samples within `radius` of the run's first sample is
/// replaced by a single sample at the component-wise median, stamped with the
/// anchor's time.
pub fn compress(samples: &[TrajectorySample], radius: f64) -> Result<Vec<TrajectorySample>> {
    check_sorted(samples)?;
    let mut out = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut start = 0;
    while start < samples.len() {
        let anchor = &samples[start];
        let mut end = start + 1;
        while end < samples.len() && samples[end].position.distance(&anchor.position) <= radius {
            end += 1;
        }
        xs.clear();
        ys.clear();
        for s in &samples[start..end] {
            xs.push(s.position.x);
            ys.push(s.position.y);
        }
        out.push(TrajectorySample {
            object: anchor.object.clone(),
            t: anchor.t,
            position: Point::new(median(&mut xs), median(&mut ys)),
        });
        start = end;
    }
    Ok(out)
}

/// Stay-point detection over one object's time-ordered samples.
pub fn detect_stops(samples: &[TrajectorySample], cfg: &SegmentationConfig) -> Result<Vec<StopSegment>> {
    check_sorted(samples)?;
    let mut stops = Vec::new();
    let mut i = 0;
    while i < samples.len() {
        let anchor = &samples[i];
        let mut j = i + 1;
        while j < samples.len() && samples[j].position.distance(&anchor.position) <= cfg.max_stay_radius {
            j += 1;
        }
        let last = &samples[j - 1];
        if last.t - anchor.t >= cfg.min_stay_duration {
            let window = &samples[i..j];
            let n = window.len() as f64;
            let (sx, sy) = window
                .iter()
                .fold((0.0, 0.0), |(sx, sy), s| (sx + s.position.x, sy + s.position.y));
            stops.push(StopSegment {
                object: anchor.object.clone(),
                location: Point::new(sx / n, sy / n),
                t_start: anchor.t,
                t_end: last.t,
            });
            i = j;
        } else {
            i += 1;
        }
    }
    Ok(stops)
}

/// Groups a mixed sample list by object, sorting each trajectory by time and
/// collapsing samples that share a timestamp (the first one wins).
pub fn group_by_object(samples: Vec<TrajectorySample>) -> BTreeMap<ObjectId, Vec<TrajectorySample>> {
    let mut groups: BTreeMap<ObjectId, Vec<TrajectorySample>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.object.clone()).or_default().push(s);
    }
    for traj in groups.values_mut() {
        traj.sort_by_key(|s| s.t);
        traj.dedup_by_key(|s| s.t);
    }
    groups
}

/// Compresses and segments every object's trajectory in parallel. Stops are
/// returned grouped by object id, time-ordered within each object.
pub fn segment_all(
    trajectories: &BTreeMap<ObjectId, Vec<TrajectorySample>>,
    cfg: &SegmentationConfig,
) -> Result<Vec<StopSegment>> {
    cfg.validate()?;
    let per_object: Vec<Vec<StopSegment>> = trajectories
        .par_iter()
        .map(|(_, samples)| {
            let compressed = compress(samples, cfg.compression_radius)?;
            detect_stops(&compressed, cfg)
        })
        .collect::<Result<_>>()?;
    Ok(per_object.into_iter().flatten().collect())
}
