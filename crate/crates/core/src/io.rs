//! Plain-text artifact formats: CSV tables, GeoJSON layers and JSON lines.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use geojson::{Feature, FeatureCollection, GeoJson, Geometry, JsonObject, Value};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::candidates::Candidate;
use crate::error::{Error, Result};
use crate::geo::{Point, Polygon, Projection, Region};
use crate::mapping::{CellSet, ObjectIndex};
use crate::scan::LabelVector;
use crate::trajectory::{ObjectId, StopSegment, TrajectorySample};
use crate::zoning::{CellIndex, GridFamily};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::parse(path, format!("cannot open: {e}")))
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    reader
        .deserialize()
        .map(|row| row.map_err(|e| Error::parse(path, e.to_string())))
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn finite(path: &Path, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::parse(path, "non-finite coordinate"))
    }
}

#[derive(Serialize, Deserialize)]
struct SampleRow {
    object_id: String,
    t: i64,
    x: f64,
    y: f64,
}

/// Reads `object_id,t,x,y` rows. With a projection, `x`/`y` are longitude
/// and latitude in degrees.
pub fn read_trajectories(path: &Path, projection: Option<&Projection>) -> Result<Vec<TrajectorySample>> {
    read_rows::<SampleRow>(path)?
        .into_iter()
        .map(|r| {
            finite(path, &[r.x, r.y])?;
            let position = project(projection, r.x, r.y);
            Ok(TrajectorySample {
                object: ObjectId(r.object_id),
                t: r.t,
                position,
            })
        })
        .collect()
}

pub fn write_trajectories<'a>(path: &Path, samples: impl IntoIterator<Item = &'a TrajectorySample>) -> Result<()> {
    write_rows(
        path,
        samples.into_iter().map(|s| SampleRow {
            object_id: s.object.0.clone(),
            t: s.t,
            x: s.position.x,
            y: s.position.y,
        }),
    )
}

fn project(projection: Option<&Projection>, x: f64, y: f64) -> Point {
    match projection {
        Some(p) => p.forward(x, y),
        None => Point::new(x, y),
    }
}

#[derive(Serialize, Deserialize)]
struct StopRow {
    object_id: String,
    x: f64,
    y: f64,
    t_start: i64,
    t_end: i64,
}

/// Reads `object_id,x,y,t_start,t_end` rows.
pub fn read_stops(path: &Path, projection: Option<&Projection>) -> Result<Vec<StopSegment>> {
    read_rows::<StopRow>(path)?
        .into_iter()
        .map(|r| {
            finite(path, &[r.x, r.y])?;
            if r.t_end < r.t_start {
                return Err(Error::parse(path, format!("stop of {} ends before it starts", r.object_id)));
            }
            Ok(StopSegment {
                object: ObjectId(r.object_id),
                location: project(projection, r.x, r.y),
                t_start: r.t_start,
                t_end: r.t_end,
            })
        })
        .collect()
}

pub fn write_stops(path: &Path, stops: &[StopSegment]) -> Result<()> {
    write_rows(
        path,
        stops.iter().map(|s| StopRow {
            object_id: s.object.0.clone(),
            x: s.location.x,
            y: s.location.y,
            t_start: s.t_start,
            t_end: s.t_end,
        }),
    )
}

#[derive(Serialize, Deserialize)]
struct PointRow {
    object_id: String,
    x: f64,
    y: f64,
}

/// Reads one `object_id,x,y` location per object.
pub fn read_points(path: &Path, projection: Option<&Projection>) -> Result<Vec<(ObjectId, Point)>> {
    let rows = read_rows::<PointRow>(path)?;
    let mut seen = std::collections::BTreeSet::new();
    rows.into_iter()
        .map(|r| {
            finite(path, &[r.x, r.y])?;
            if !seen.insert(r.object_id.clone()) {
                return Err(Error::parse(path, format!("object {} has more than one point", r.object_id)));
            }
            Ok((ObjectId(r.object_id), project(projection, r.x, r.y)))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    object_id: String,
    label: u8,
}

/// Reads `object_id,label` rows with labels `0`/`1`. Returns the object
/// index over the labeled ids and the aligned label vector.
pub fn read_labels(path: &Path) -> Result<(ObjectIndex, LabelVector)> {
    let rows = read_rows::<LabelRow>(path)?;
    let mut by_id = BTreeMap::new();
    for r in rows {
        if r.label > 1 {
            return Err(Error::parse(path, format!("label of {} must be 0 or 1", r.object_id)));
        }
        if by_id.insert(ObjectId(r.object_id.clone()), r.label == 1).is_some() {
            return Err(Error::parse(path, format!("object {} labeled twice", r.object_id)));
        }
    }
    let index = ObjectIndex::new(by_id.keys().cloned());
    let labels = by_id.into_values().collect();
    Ok((index, labels))
}

pub fn write_labels(path: &Path, objects: &ObjectIndex, labels: &LabelVector) -> Result<()> {
    write_rows(
        path,
        (0..labels.len() as u32).map(|k| LabelRow {
            object_id: objects.id(k).0.clone(),
            label: labels.get(k) as u8,
        }),
    )
}

#[derive(Serialize, Deserialize)]
struct CellSetRow {
    object_id: String,
    grid_id: String,
    cell_dense_index: CellIndex,
    distinct_days: u32,
}

/// One `object_id,grid_id,cell_dense_index,distinct_days` row per retained
/// cell, grid by grid.
pub fn write_cellsets(path: &Path, per_grid: &[Vec<CellSet>], family: &GridFamily, objects: &ObjectIndex) -> Result<()> {
    let rows = per_grid.iter().flatten().flat_map(|set| {
        let grid_id = &family.grid(set.grid).id;
        set.cells.iter().zip(&set.days).map(move |(&cell, &days)| CellSetRow {
            object_id: objects.id(set.object).0.clone(),
            grid_id: grid_id.clone(),
            cell_dense_index: cell,
            distinct_days: days,
        })
    });
    write_rows(path, rows)
}

pub fn read_cellsets(path: &Path, family: &GridFamily, objects: &ObjectIndex) -> Result<Vec<Vec<CellSet>>> {
    let mut grouped: Vec<BTreeMap<u32, Vec<(CellIndex, u32)>>> = vec![BTreeMap::new(); family.grids.len()];
    for r in read_rows::<CellSetRow>(path)? {
        let grid = family
            .grid_by_id(&r.grid_id)
            .ok_or_else(|| Error::parse(path, format!("unknown grid {}", r.grid_id)))?;
        if grid.cell_from_index(r.cell_dense_index).is_none() {
            return Err(Error::parse(
                path,
                format!("cell {} is not part of grid {}", r.cell_dense_index, r.grid_id),
            ));
        }
        let object = objects
            .get(&ObjectId(r.object_id.clone()))
            .ok_or_else(|| Error::parse(path, format!("unknown object {}", r.object_id)))?;
        grouped[grid.ordinal as usize]
            .entry(object)
            .or_default()
            .push((r.cell_dense_index, r.distinct_days));
    }
    Ok(grouped
        .into_iter()
        .enumerate()
        .map(|(grid, by_object)| {
            by_object
                .into_iter()
                .map(|(object, mut cells)| {
                    cells.sort_unstable();
                    let (cells, days) = cells.into_iter().unzip();
                    CellSet {
                        object,
                        grid: grid as u32,
                        cells,
                        days,
                    }
                })
                .collect()
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct CandidateLine {
    grid: String,
    cells: Vec<CellIndex>,
    support: usize,
    tidset: Vec<String>,
}

/// One JSON object per line: `{grid, cells, support, tidset}` with object ids.
pub fn write_candidates(path: &Path, per_grid: &[Vec<Candidate>], family: &GridFamily, objects: &ObjectIndex) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for c in per_grid.iter().flatten() {
        let line = CandidateLine {
            grid: family.grid(c.grid).id.clone(),
            cells: c.cells.clone(),
            support: c.support(),
            tidset: c.tidset.iter().map(|&o| objects.id(o).0.clone()).collect(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_candidates(path: &Path, family: &GridFamily, objects: &ObjectIndex) -> Result<Vec<Vec<Candidate>>> {
    let mut per_grid = vec![Vec::new(); family.grids.len()];
    for (n, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |msg: String| Error::parse(path, format!("line {}: {msg}", n + 1));
        let c: CandidateLine = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        let grid = family.grid_by_id(&c.grid).ok_or_else(|| at(format!("unknown grid {}", c.grid)))?;
        let mut tidset = c
            .tidset
            .iter()
            .map(|id| objects.get(&ObjectId(id.clone())).ok_or_else(|| at(format!("unknown object {id}"))))
            .collect::<Result<Vec<u32>>>()?;
        tidset.sort_unstable();
        if tidset.len() != c.support {
            return Err(at("support does not match tidset".into()));
        }
        per_grid[grid.ordinal as usize].push(Candidate {
            grid: grid.ordinal,
            cells: c.cells,
            tidset,
        });
    }
    Ok(per_grid)
}

fn ring_coords(ring: &[Point], projection: Option<&Projection>) -> Vec<Vec<f64>> {
    ring.iter()
        .chain(ring.first())
        .map(|p| match projection {
            Some(proj) => {
                let (lon, lat) = proj.inverse(p);
                vec![lon, lat]
            }
            None => vec![p.x, p.y],
        })
        .collect()
}

fn polygon_coords(poly: &Polygon, projection: Option<&Projection>) -> Vec<Vec<Vec<f64>>> {
    poly.rings().map(|r| ring_coords(r, projection)).collect()
}

/// GeoJSON geometry of a polygon, in planar coordinates or, with a
/// projection, back in longitude/latitude.
pub fn polygon_geometry(poly: &Polygon, projection: Option<&Projection>) -> Geometry {
    Geometry::new(Value::Polygon(polygon_coords(poly, projection)))
}

pub fn region_geometry(region: &Region, projection: Option<&Projection>) -> Geometry {
    Geometry::new(Value::MultiPolygon(
        region.polygons().iter().map(|p| polygon_coords(p, projection)).collect(),
    ))
}

pub fn feature(geometry: Geometry, properties: JsonObject) -> Feature {
    Feature {
        bbox: None,
        geometry: Some(geometry),
        id: None,
        properties: Some(properties),
        foreign_members: None,
    }
}

pub fn write_features(path: &Path, features: Vec<Feature>) -> Result<()> {
    let fc = FeatureCollection {
        bbox: None,
        features,
        foreign_members: None,
    };
    std::fs::write(path, GeoJson::from(fc).to_string())?;
    Ok(())
}

fn polygon_from_coords(path: &Path, rings: &[Vec<Vec<f64>>], projection: Option<&Projection>) -> Result<Polygon> {
    let mut points: Vec<Vec<Point>> = rings
        .iter()
        .map(|ring| {
            ring.iter()
                .map(|c| match c.as_slice() {
                    [x, y, ..] if x.is_finite() && y.is_finite() => Ok(project(projection, *x, *y)),
                    _ => Err(Error::parse(path, "invalid coordinate")),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    if points.is_empty() {
        return Err(Error::parse(path, "polygon without rings"));
    }
    let exterior = points.remove(0);
    Polygon::new(exterior, points).map_err(|e| Error::parse(path, e.to_string()))
}

fn collect_polygons(path: &Path, geometry: &Geometry, projection: Option<&Projection>, out: &mut Vec<Polygon>) -> Result<()> {
    match &geometry.value {
        Value::Polygon(rings) => out.push(polygon_from_coords(path, rings, projection)?),
        Value::MultiPolygon(polys) => {
            for rings in polys {
                out.push(polygon_from_coords(path, rings, projection)?);
            }
        }
        Value::GeometryCollection(parts) => {
            for g in parts {
                collect_polygons(path, g, projection, out)?;
            }
        }
        _ => return Err(Error::parse(path, "only Polygon and MultiPolygon geometries are supported")),
    }
    Ok(())
}

/// Polygons of every Polygon/MultiPolygon geometry in a GeoJSON document;
/// multipolygons contribute each part separately.
pub fn read_polygons(path: &Path, projection: Option<&Projection>) -> Result<Vec<Polygon>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::parse(path, format!("cannot open: {e}")))?;
    let doc: GeoJson = text.parse().map_err(|e: geojson::Error| Error::parse(path, e.to_string()))?;
    let mut out = Vec::new();
    match &doc {
        GeoJson::Geometry(g) => collect_polygons(path, g, projection, &mut out)?,
        GeoJson::Feature(f) => {
            if let Some(g) = &f.geometry {
                collect_polygons(path, g, projection, &mut out)?;
            }
        }
        GeoJson::FeatureCollection(fc) => {
            for f in &fc.features {
                if let Some(g) = &f.geometry {
                    collect_polygons(path, g, projection, &mut out)?;
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::parse(path, "no polygons found"));
    }
    Ok(out)
}

/// Writes `value` as pretty JSON followed by a newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::parse(path, format!("cannot open: {e}")))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct GroundTruthRow {
    object_id: String,
    hotspot_index: usize,
}

/// `object_id,hotspot_index` rows, one per (object, hotspot) association.
pub fn write_ground_truth_objects(path: &Path, objects: &ObjectIndex, hotspots: &[Vec<u32>]) -> Result<()> {
    write_rows(
        path,
        hotspots.iter().enumerate().flat_map(|(h, members)| {
            members.iter().map(move |&o| GroundTruthRow {
                object_id: objects.id(o).0.clone(),
                hotspot_index: h,
            })
        }),
    )
}

/// Associated objects per hotspot index, as dense indices.
pub fn read_ground_truth_objects(path: &Path, objects: &ObjectIndex) -> Result<Vec<Vec<u32>>> {
    let mut out: Vec<Vec<u32>> = Vec::new();
    for r in read_rows::<GroundTruthRow>(path)? {
        let o = objects
            .get(&ObjectId(r.object_id.clone()))
            .ok_or_else(|| Error::parse(path, format!("unknown object {}", r.object_id)))?;
        if out.len() <= r.hotspot_index {
            out.resize(r.hotspot_index + 1, Vec::new());
        }
        out[r.hotspot_index].push(o);
    }
    for members in &mut out {
        members.sort_unstable();
        members.dedup();
    }
    Ok(out)
}
