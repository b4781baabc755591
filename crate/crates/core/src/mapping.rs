//! Object-to-cells association: annotate stops with cells, rank each object's
//! cells by the number of distinct days it stopped there, keep the top `i`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::Point;
use crate::trajectory::{ObjectId, StopSegment};
use crate::zoning::{CellId, CellIndex, Grid, GridFamily};

const SECONDS_PER_DAY: i64 = 86_400;

/// Dense re-indexing of object ids, in sorted id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectIndex {
    ids: Vec<ObjectId>,
    lookup: HashMap<ObjectId, u32>,
}

impl ObjectIndex {
    pub fn new(ids: impl IntoIterator<Item = ObjectId>) -> Self {
        let ids: Vec<ObjectId> = ids.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let lookup = ids.iter().enumerate().map(|(k, id)| (id.clone(), k as u32)).collect();
        Self { ids, lookup }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &ObjectId) -> Option<u32> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, index: u32) -> &ObjectId {
        &self.ids[index as usize]
    }

    pub fn ids(&self) -> &[ObjectId] {
        &self.ids
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedStop {
    pub object: ObjectId,
    pub location: Point,
    pub cell: CellId,
    pub t_start: i64,
    pub t_end: i64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Annotation {
    pub stops: Vec<AnnotatedStop>,
    /// Stops whose centroid fell outside the grid coverage.
    pub dropped: usize,
}

/// One object's retained cells in one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSet {
    /// Dense object index.
    pub object: u32,
    /// Grid ordinal within the family.
    pub grid: u32,
    /// Retained cells, ascending.
    pub cells: Vec<CellIndex>,
    /// Distinct-day count of each retained cell, aligned with `cells`.
    pub days: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MappingConfig {
    /// Number of top-ranked cells retained per object.
    pub top_cells: usize,
    /// Offset added to timestamps before splitting days, in seconds.
    pub tz_offset: i64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            top_cells: 8,
            tz_offset: 0,
        }
    }
}

impl MappingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_cells == 0 {
            return Err(Error::config("mapping.top_cells must be at least 1"));
        }
        Ok(())
    }
}

/// Pairs every stop with the cell containing its centroid.
pub fn annotate_stops(stops: &[StopSegment], grid: &Grid) -> Annotation {
    let mut out = Annotation::default();
    for stop in stops {
        match grid.cell_of(&stop.location) {
            Some(cell) => out.stops.push(AnnotatedStop {
                object: stop.object.clone(),
                location: stop.location,
                cell,
                t_start: stop.t_start,
                t_end: stop.t_end,
            }),
            None => out.dropped += 1,
        }
    }
    if out.dropped > 0 {
        log::warn!("grid {}: dropped {} stops outside coverage", grid.id, out.dropped);
    }
    out
}

fn day_of(t: i64, tz_offset: i64) -> i64 {
    (t + tz_offset).div_euclid(SECONDS_PER_DAY)
}

/// Number of distinct days (half-open `[00:00, 24:00)` in the shifted clock)
/// overlapped by at least one `[t_start, t_end]` interval.
pub fn distinct_days(intervals: impl IntoIterator<Item = (i64, i64)>, tz_offset: i64) -> u32 {
    let mut spans: Vec<(i64, i64)> = intervals
        .into_iter()
        .map(|(a, b)| (day_of(a, tz_offset), day_of(b, tz_offset)))
        .collect();
    spans.sort_unstable();
    let mut count = 0i64;
    let mut covered_until = i64::MIN;
    for (first, last) in spans {
        let start = first.max(covered_until.saturating_add(1));
        if last >= start {
            count += last - start + 1;
        }
        covered_until = covered_until.max(last);
    }
    count as u32
}

/// Ranks each object's cells by descending distinct-day count (ties broken by
/// ascending dense index) and keeps the first `top_cells`.
pub fn build_cellsets(annotated: &[AnnotatedStop], objects: &ObjectIndex, cfg: &MappingConfig) -> Result<Vec<CellSet>> {
    cfg.validate()?;
    let mut grouped: BTreeMap<u32, BTreeMap<CellId, Vec<(i64, i64)>>> = BTreeMap::new();
    for stop in annotated {
        let object = objects
            .get(&stop.object)
            .ok_or_else(|| Error::invalid(format!("stop of unknown object {}", stop.object)))?;
        grouped
            .entry(object)
            .or_default()
            .entry(stop.cell)
            .or_default()
            .push((stop.t_start, stop.t_end));
    }
    Ok(grouped
        .into_iter()
        .map(|(object, cells)| {
            let grid = cells.keys().next().map(|c| c.grid).unwrap_or_default();
            let ranked: Vec<(CellIndex, u32)> = cells
                .into_iter()
                .map(|(cell, intervals)| (cell.index, distinct_days(intervals, cfg.tz_offset)))
                .collect();
            retain_top(object, grid, ranked, cfg.top_cells)
        })
        .collect())
}

fn retain_top(object: u32, grid: u32, mut ranked: Vec<(CellIndex, u32)>, top: usize) -> CellSet {
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(top);
    ranked.sort_by_key(|&(cell, _)| cell);
    let (cells, days) = ranked.into_iter().unzip();
    CellSet {
        object,
        grid,
        cells,
        days,
    }
}

/// Single-location mode: each object's cellset is the cell holding its point.
pub fn reduce_points(points: &[(ObjectId, Point)], grid: &Grid, objects: &ObjectIndex) -> Result<Vec<CellSet>> {
    let mut out = Vec::with_capacity(points.len());
    let mut dropped = 0usize;
    for (id, p) in points {
        let object = objects
            .get(id)
            .ok_or_else(|| Error::invalid(format!("point of unknown object {id}")))?;
        match grid.cell_of(p) {
            Some(cell) => out.push(CellSet {
                object,
                grid: grid.ordinal,
                cells: vec![cell.index],
                days: vec![1],
            }),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("grid {}: dropped {dropped} points outside coverage", grid.id);
    }
    out.sort_by_key(|c| c.object);
    Ok(out)
}

/// Cellsets for every grid of the family, computed concurrently.
pub fn map_family(
    stops: &[StopSegment],
    family: &GridFamily,
    objects: &ObjectIndex,
    cfg: &MappingConfig,
) -> Result<Vec<Vec<CellSet>>> {
    family
        .grids
        .par_iter()
        .map(|grid| {
            let annotated = annotate_stops(stops, grid);
            let mut sets = build_cellsets(&annotated.stops, objects, cfg)?;
            for set in &mut sets {
                set.grid = grid.ordinal;
            }
            Ok(sets)
        })
        .collect()
}

/// Single-location mode over every grid of the family.
pub fn reduce_family(points: &[(ObjectId, Point)], family: &GridFamily, objects: &ObjectIndex) -> Result<Vec<Vec<CellSet>>> {
    family
        .grids
        .par_iter()
        .map(|grid| reduce_points(points, grid, objects))
        .collect()
}
