//! Planar geometry primitives.
//!
//! Coordinates are meters in a projected planar reference system. Rings are
//! stored open: the closing vertex is implied and never duplicated.

use geo::BooleanOps;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for boundary predicates, in meters.
pub const BOUNDARY_EPS: f64 = 1e-9;

/// Segments used to approximate a quarter circle in round buffer joins.
pub const SEGMENTS_PER_QUADRANT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BoundingBox {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        let values = [min_x, min_y, max_x, max_y];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("bounding box has non-finite bounds"));
        }
        if min_x > max_x || min_y > max_y {
            return Err(Error::invalid(format!(
                "bounding box min ({min_x}, {min_y}) exceeds max ({max_x}, {max_y})"
            )));
        }
        Ok(Self {
            min_x,
            min_y,
            max_x,
            max_y,
        })
    }

    /// Smallest box enclosing all points; `None` for an empty iterator.
    pub fn enclosing<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let mut bbox = Self {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        for p in iter {
            bbox.expand(p);
        }
        Some(bbox)
    }

    pub fn expand(&mut self, p: &Point) {
        self.min_x = self.min_x.min(p.x);
        self.min_y = self.min_y.min(p.y);
        self.max_x = self.max_x.max(p.x);
        self.max_y = self.max_y.max(p.y);
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.min_x + self.max_x),
            0.5 * (self.min_y + self.max_y),
        )
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Closed containment test.
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn intersects(&self, other: &BoundingBox) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.min_x, self.min_y),
            Point::new(self.max_x, self.min_y),
            Point::new(self.max_x, self.max_y),
            Point::new(self.min_x, self.max_y),
        ]
    }
}

/// A polygon with one exterior ring and optional holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    exterior: Vec<Point>,
    holes: Vec<Vec<Point>>,
}

impl Polygon {
    /// Validates and builds a polygon. A trailing vertex equal to the first
    /// one is accepted and dropped.
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self> {
        let exterior = open_ring(exterior);
        let holes: Vec<_> = holes.into_iter().map(open_ring).collect();
        validate_ring(&exterior, "exterior")?;
        if segments_self_intersect(&exterior) {
            return Err(Error::invalid("exterior ring self-intersects"));
        }
        for (k, hole) in holes.iter().enumerate() {
            validate_ring(hole, &format!("hole {k}"))?;
        }
        let poly = Self { exterior, holes };
        if poly.area().is_nan() || poly.area() <= 0.0 {
            return Err(Error::invalid("polygon has non-positive area"));
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle.
    pub fn rectangle(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        Self::new(
            vec![
                Point::new(min_x, min_y),
                Point::new(max_x, min_y),
                Point::new(max_x, max_y),
                Point::new(min_x, max_y),
            ],
            Vec::new(),
        )
    }

    fn from_parts_unchecked(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Self {
        Self { exterior, holes }
    }

    pub fn exterior(&self) -> &[Point] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.holes
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Point]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }

    pub fn area(&self) -> f64 {
        let outer = signed_area(&self.exterior).abs();
        let inner: f64 = self.holes.iter().map(|h| signed_area(h).abs()).sum();
        outer - inner
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::enclosing(&self.exterior).expect("validated polygon has vertices")
    }

    /// Even-odd containment with boundary points counted as inside.
    pub fn contains(&self, p: &Point) -> bool {
        point_in_polygon(p, self)
    }

    /// True when the polygon and the box share at least one point.
    pub fn intersects_bbox(&self, bbox: &BoundingBox) -> bool {
        if !self.bbox().intersects(bbox) {
            return false;
        }
        if self.rings().flatten().any(|v| bbox.contains(v)) {
            return true;
        }
        let corners = bbox.corners();
        if corners.iter().any(|c| self.contains(c)) {
            return true;
        }
        let box_edges: Vec<(Point, Point)> = (0..4).map(|k| (corners[k], corners[(k + 1) % 4])).collect();
        self.rings().any(|ring| {
            ring_edges(ring).any(|(a, b)| {
                box_edges
                    .iter()
                    .any(|(c, d)| segments_intersect(&a, &b, c, d))
            })
        })
    }

    fn to_geo(&self) -> geo::Polygon<f64> {
        geo::Polygon::new(
            ring_to_geo(&self.exterior, true),
            self.holes.iter().map(|h| ring_to_geo(h, false)).collect(),
        )
    }
}

/// A union of polygons, used for buffered regions that may split or merge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    polygons: Vec<Polygon>,
}

impl Region {
    pub fn new(polygons: Vec<Polygon>) -> Self {
        Self { polygons }
    }

    pub fn polygons(&self) -> &[Polygon] {
        &self.polygons
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.polygons.iter().map(Polygon::area).sum()
    }

    pub fn bbox(&self) -> Option<BoundingBox> {
        BoundingBox::enclosing(self.polygons.iter().flat_map(|p| p.exterior.iter()))
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.polygons.iter().any(|poly| poly.contains(p))
    }

    fn from_geo(multi: geo::MultiPolygon<f64>) -> Self {
        let polygons = multi
            .0
            .into_iter()
            .filter_map(|poly| {
                let (ext, interiors) = poly.into_inner();
                let exterior = ring_from_geo(&ext);
                if exterior.len() < 3 || signed_area(&exterior).abs() <= 0.0 {
                    return None;
                }
                let holes = interiors
                    .iter()
                    .map(ring_from_geo)
                    .filter(|h| h.len() >= 3 && signed_area(h).abs() > 0.0)
                    .collect();
                Some(Polygon::from_parts_unchecked(exterior, holes))
            })
            .collect();
        Self { polygons }
    }
}

impl From<Polygon> for Region {
    fn from(poly: Polygon) -> Self {
        Self::new(vec![poly])
    }
}

/// Even-odd point-in-polygon test; points on any ring count as inside.
pub fn point_in_polygon(p: &Point, poly: &Polygon) -> bool {
    let bbox = poly.bbox();
    if p.x < bbox.min_x - BOUNDARY_EPS
        || p.x > bbox.max_x + BOUNDARY_EPS
        || p.y < bbox.min_y - BOUNDARY_EPS
        || p.y > bbox.max_y + BOUNDARY_EPS
    {
        return false;
    }
    let mut inside = false;
    for ring in poly.rings() {
        for (a, b) in ring_edges(ring) {
            if on_segment(p, &a, &b) {
                return true;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// Rotates `poly` by `angle` radians about its bounding-box center, then
/// translates it by `(dx, dy)`.
pub fn transform_polygon(poly: &Polygon, angle: f64, dx: f64, dy: f64) -> Polygon {
    let center = poly.bbox().center();
    let (sin, cos) = angle.sin_cos();
    let map = |ring: &[Point]| -> Vec<Point> {
        ring.iter()
            .map(|v| {
                let rx = v.x - center.x;
                let ry = v.y - center.y;
                Point::new(
                    center.x + rx * cos - ry * sin + dx,
                    center.y + rx * sin + ry * cos + dy,
                )
            })
            .collect()
    };
    Polygon::from_parts_unchecked(map(&poly.exterior), poly.holes.iter().map(|h| map(h)).collect())
}

/// Minkowski offset of `poly` by a signed distance: positive distances grow the
/// polygon, negative ones shrink it. Round joins use
/// [`SEGMENTS_PER_QUADRANT`] segments per quarter circle.
///
/// The result is a [`Region`] since shrinking a concave polygon may split it.
pub fn buffer_polygon(poly: &Polygon, distance: f64) -> Result<Region> {
    if !distance.is_finite() {
        return Err(Error::invalid("buffer distance must be finite"));
    }
    if distance == 0.0 {
        return Ok(Region::from(poly.clone()));
    }
    let band = boundary_band(poly, distance.abs());
    let base = geo::MultiPolygon::new(vec![poly.to_geo()]);
    let result = if distance > 0.0 {
        base.union(&band)
    } else {
        base.difference(&band)
    };
    let region = Region::from_geo(result);
    if region.is_empty() {
        return Err(Error::EmptyGeometry(format!(
            "buffer of {distance} m collapses the polygon"
        )));
    }
    Ok(region)
}

/// Union of edge rectangles and vertex disks covering every point within
/// `radius` of the polygon boundary.
fn boundary_band(poly: &Polygon, radius: f64) -> geo::MultiPolygon<f64> {
    let segments = 4 * SEGMENTS_PER_QUADRANT;
    let mut pieces: Vec<geo::Polygon<f64>> = Vec::new();
    for ring in poly.rings() {
        for (a, b) in ring_edges(ring) {
            let len = a.distance(&b);
            if len <= 0.0 {
                continue;
            }
            let nx = -(b.y - a.y) / len * radius;
            let ny = (b.x - a.x) / len * radius;
            let quad = vec![
                Point::new(a.x + nx, a.y + ny),
                Point::new(b.x + nx, b.y + ny),
                Point::new(b.x - nx, b.y - ny),
                Point::new(a.x - nx, a.y - ny),
            ];
            pieces.push(geo::Polygon::new(ring_to_geo(&quad, true), Vec::new()));
        }
        for v in ring {
            let disk: Vec<Point> = (0..segments)
                .map(|k| {
                    let theta = std::f64::consts::TAU * k as f64 / segments as f64;
                    Point::new(v.x + radius * theta.cos(), v.y + radius * theta.sin())
                })
                .collect();
            pieces.push(geo::Polygon::new(ring_to_geo(&disk, true), Vec::new()));
        }
    }
    geo::unary_union(&pieces)
}

fn open_ring(mut ring: Vec<Point>) -> Vec<Point> {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring
}

fn validate_ring(ring: &[Point], name: &str) -> Result<()> {
    if ring.len() < 3 {
        return Err(Error::invalid(format!("{name} ring has fewer than 3 vertices")));
    }
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid(format!("{name} ring has non-finite coordinates")));
    }
    Ok(())
}

/// Converts an open ring into a closed linestring, counter-clockwise for
/// exteriors and clockwise for holes.
fn ring_to_geo(ring: &[Point], exterior: bool) -> geo::LineString<f64> {
    let mut coords: Vec<geo::Coord<f64>> = ring.iter().map(|p| geo::coord! { x: p.x, y: p.y }).collect();
    if (signed_area(ring) > 0.0) != exterior {
        coords.reverse();
    }
    if let Some(first) = coords.first().copied() {
        coords.push(first);
    }
    geo::LineString::new(coords)
}

fn ring_from_geo(ls: &geo::LineString<f64>) -> Vec<Point> {
    open_ring(ls.coords().map(|c| Point::new(c.x, c.y)).collect())
}

pub(crate) fn ring_edges(ring: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    (0..ring.len()).map(move |k| (ring[k], ring[(k + 1) % ring.len()]))
}

/// Shoelace area, taken relative to the first vertex to limit cancellation
/// far from the origin.
pub(crate) fn signed_area(ring: &[Point]) -> f64 {
    let Some(o) = ring.first() else {
        return 0.0;
    };
    0.5 * ring_edges(ring)
        .map(|(a, b)| cross(o, &a, &b))
        .sum::<f64>()
}

fn cross(o: &Point, a: &Point, b: &Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: &Point, a: &Point, b: &Point) -> bool {
    let len = a.distance(b);
    let tol = BOUNDARY_EPS * len.max(1.0);
    if cross(a, b, p).abs() > tol {
        return false;
    }
    p.x >= a.x.min(b.x) - BOUNDARY_EPS
        && p.x <= a.x.max(b.x) + BOUNDARY_EPS
        && p.y >= a.y.min(b.y) - BOUNDARY_EPS
        && p.y <= a.y.max(b.y) + BOUNDARY_EPS
}

fn segments_intersect(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

/// Checks non-adjacent edge pairs for intersections.
fn segments_self_intersect(ring: &[Point]) -> bool {
    let n = ring.len();
    let edges: Vec<(Point, Point)> = ring_edges(ring).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (a, b) = edges[i];
            let (c, d) = edges[j];
            if segments_intersect(&a, &b, &c, &d) {
                return true;
            }
        }
    }
    false
}

/// Mean Earth radius used by the local projection, in meters.
pub const EARTH_RADIUS: f64 = 6_371_008.8;

/// Local equirectangular projection of longitude/latitude degrees to planar
/// meters around a reference point. Adequate over a few kilometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub lon0: f64,
    pub lat0: f64,
}

impl Projection {
    /// Projection centered on the mean of `(lon, lat)` pairs.
    pub fn centered(coords: impl IntoIterator<Item = (f64, f64)>) -> Option<Self> {
        let (mut lon, mut lat, mut n) = (0.0, 0.0, 0usize);
        for (x, y) in coords {
            lon += x;
            lat += y;
            n += 1;
        }
        (n > 0).then(|| Self {
            lon0: lon / n as f64,
            lat0: lat / n as f64,
        })
    }

    pub fn forward(&self, lon: f64, lat: f64) -> Point {
        let k = EARTH_RADIUS * std::f64::consts::PI / 180.0;
        Point::new(k * (lon - self.lon0) * self.lat0.to_radians().cos(), k * (lat - self.lat0))
    }

    /// Longitude and latitude of a projected point.
    pub fn inverse(&self, p: &Point) -> (f64, f64) {
        let k = EARTH_RADIUS * std::f64::consts::PI / 180.0;
        (self.lon0 + p.x / (k * self.lat0.to_radians().cos()), self.lat0 + p.y / k)
    }
}
