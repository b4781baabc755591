//! Families of shifted uniform square grids.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{BoundingBox, Point, Polygon};
use crate::trajectory::{ObjectId, StopSegment};

/// Dense cell index, unique across a [`GridFamily`].
pub type CellIndex = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    /// Position of the grid inside its family.
    pub grid: u32,
    pub col: u32,
    pub row: u32,
    pub index: CellIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub id: String,
    /// Position of this grid inside its family.
    pub ordinal: u32,
    pub resolution: f64,
    pub shift: (f64, f64),
    pub origin: Point,
    pub cols: u32,
    pub rows: u32,
    /// Dense index of cell (0, 0).
    pub index_offset: CellIndex,
}

impl Grid {
    pub fn cell_count(&self) -> u32 {
        self.cols * self.rows
    }

    /// Cell whose half-open extent contains `p`, or `None` outside coverage.
    pub fn cell_of(&self, p: &Point) -> Option<CellId> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if !(fx >= 0.0 && fy >= 0.0 && fx < self.cols as f64 && fy < self.rows as f64) {
            return None;
        }
        let (col, row) = (fx as u32, fy as u32);
        Some(self.cell(col, row))
    }

    pub fn cell(&self, col: u32, row: u32) -> CellId {
        CellId {
            grid: self.ordinal,
            col,
            row,
            index: self.index_offset + row * self.cols + col,
        }
    }

    /// Inverse of the dense index, when it belongs to this grid.
    pub fn cell_from_index(&self, index: CellIndex) -> Option<CellId> {
        let local = index.checked_sub(self.index_offset)?;
        if local >= self.cell_count() {
            return None;
        }
        Some(self.cell(local % self.cols, local / self.cols))
    }

    pub fn cell_bounds(&self, cell: &CellId) -> BoundingBox {
        let min_x = self.origin.x + cell.col as f64 * self.resolution;
        let min_y = self.origin.y + cell.row as f64 * self.resolution;
        BoundingBox {
            min_x,
            min_y,
            max_x: min_x + self.resolution,
            max_y: min_y + self.resolution,
        }
    }

    pub fn cell_polygon(&self, cell: &CellId) -> Polygon {
        let b = self.cell_bounds(cell);
        Polygon::rectangle(b.min_x, b.min_y, b.max_x, b.max_y).expect("cells have positive area")
    }

    pub fn coverage(&self) -> BoundingBox {
        BoundingBox {
            min_x: self.origin.x,
            min_y: self.origin.y,
            max_x: self.origin.x + self.cols as f64 * self.resolution,
            max_y: self.origin.y + self.rows as f64 * self.resolution,
        }
    }
}

/// How the alignment shift of each replica is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    /// Same offset rightward and upward.
    #[default]
    Diagonal,
    /// Every (x, y) combination of the offsets; `k * k` grids per resolution.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub resolutions: Vec<f64>,
    pub shifts_per_resolution: u32,
    pub shift_mode: ShiftMode,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            resolutions: vec![50.0, 75.0, 100.0, 200.0, 400.0, 600.0, 800.0, 1000.0],
            shifts_per_resolution: 5,
            shift_mode: ShiftMode::Diagonal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFamily {
    pub grids: Vec<Grid>,
    pub resolutions: Vec<f64>,
    pub shifts_per_resolution: u32,
}

impl GridFamily {
    pub fn total_cells(&self) -> u32 {
        self.grids.iter().map(Grid::cell_count).sum()
    }

    pub fn grid(&self, ordinal: u32) -> &Grid {
        &self.grids[ordinal as usize]
    }

    pub fn grid_by_id(&self, id: &str) -> Option<&Grid> {
        self.grids.iter().find(|g| g.id == id)
    }

    /// Grid owning a dense cell index.
    pub fn grid_of_index(&self, index: CellIndex) -> Option<&Grid> {
        let pos = self.grids.partition_point(|g| g.index_offset <= index);
        let grid = self.grids.get(pos.checked_sub(1)?)?;
        grid.cell_from_index(index).map(|_| grid)
    }

    pub fn cell_from_index(&self, index: CellIndex) -> Option<CellId> {
        self.grid_of_index(index)?.cell_from_index(index)
    }

    /// Ordinals of the grids at one resolution.
    pub fn grids_at(&self, resolution: f64) -> Vec<u32> {
        self.grids
            .iter()
            .filter(|g| g.resolution == resolution)
            .map(|g| g.ordinal)
            .collect()
    }
}

fn grid_id(resolution: f64, shift: (f64, f64)) -> String {
    if shift.0 == shift.1 {
        format!("r{}_s{}", resolution, shift.0)
    } else {
        format!("r{}_s{}x{}", resolution, shift.0, shift.1)
    }
}

/// Origin coordinate for a grid line placed at `min + shift (mod res)` and
/// starting at or before `min`.
fn aligned_origin(min: f64, shift: f64, res: f64) -> f64 {
    let offset = shift.rem_euclid(res);
    if offset > 0.0 {
        min + offset - res
    } else {
        min
    }
}

/// Builds the shifted grid family covering `bbox`.
pub fn build_family(bbox: &BoundingBox, spec: &GridSpec) -> Result<GridFamily> {
    if spec.resolutions.is_empty() {
        return Err(Error::config("grids.resolutions must not be empty"));
    }
    if spec.shifts_per_resolution == 0 {
        return Err(Error::config("grids.shifts_per_resolution must be at least 1"));
    }
    let mut seen = BTreeSet::new();
    for &r in &spec.resolutions {
        if r <= 0.0 || !r.is_finite() {
            return Err(Error::config(format!("grid resolution {r} must be positive")));
        }
        if !seen.insert(r.to_bits()) {
            return Err(Error::config(format!("grid resolution {r} listed twice")));
        }
    }

    let k = spec.shifts_per_resolution;
    let mut grids = Vec::new();
    let mut offset: CellIndex = 0;
    for &res in &spec.resolutions {
        let deltas: Vec<f64> = (0..k).map(|s| s as f64 * res / k as f64).collect();
        let shifts: Vec<(f64, f64)> = match spec.shift_mode {
            ShiftMode::Diagonal => deltas.iter().map(|&d| (d, d)).collect(),
            ShiftMode::Independent => deltas
                .iter()
                .flat_map(|&dy| deltas.iter().map(move |&dx| (dx, dy)))
                .collect(),
        };
        for shift in shifts {
            // A positive shift leaves a strip uncovered at the min edge; one
            // extra cell before the origin restores full coverage.
            let ox = aligned_origin(bbox.min_x, shift.0, res);
            let oy = aligned_origin(bbox.min_y, shift.1, res);
            let cols = ((bbox.max_x - ox) / res).floor() as u32 + 1;
            let rows = ((bbox.max_y - oy) / res).floor() as u32 + 1;
            let count = cols
                .checked_mul(rows)
                .and_then(|c| offset.checked_add(c))
                .ok_or_else(|| Error::config(format!("resolution {res} yields too many cells")))?;
            grids.push(Grid {
                id: grid_id(res, shift),
                ordinal: grids.len() as u32,
                resolution: res,
                shift,
                origin: Point::new(ox, oy),
                cols,
                rows,
                index_offset: offset,
            });
            offset = count;
        }
    }
    Ok(GridFamily {
        grids,
        resolutions: spec.resolutions.clone(),
        shifts_per_resolution: k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarsenessWarning {
    pub grid: String,
    pub cell: CellId,
    /// Share of distinct objects with at least one stop in the cell.
    pub fraction: f64,
}

/// Flags cells holding stops of more than half of the distinct objects.
pub fn check_coarseness(grid: &Grid, stops: &[StopSegment]) -> Vec<CoarsenessWarning> {
    let mut objects: BTreeSet<&ObjectId> = BTreeSet::new();
    let mut per_cell: BTreeMap<CellId, BTreeSet<&ObjectId>> = BTreeMap::new();
    for stop in stops {
        objects.insert(&stop.object);
        if let Some(cell) = grid.cell_of(&stop.location) {
            per_cell.entry(cell).or_default().insert(&stop.object);
        }
    }
    let total = objects.len() as f64;
    per_cell
        .into_iter()
        .filter_map(|(cell, members)| {
            let fraction = members.len() as f64 / total;
            (fraction > 0.5).then(|| CoarsenessWarning {
                grid: grid.id.clone(),
                cell,
                fraction,
            })
        })
        .collect()
}
