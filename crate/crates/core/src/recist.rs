//! RECIST lesion records and the seed geometry derived from them.
//!
//! Coordinates are 0-indexed pixel coordinates where integer values sit on
//! pixel centers: `(x, y)` addresses column `x`, row `y` of an axial slice.
//!
//! Lesion-record CSV schema (UTF-8, LF or CRLF):
//!
//! ```text
//! lesion_id,series_id,slice_index,x1,y1,x2,y2,x3,y3,x4,y4
//! ```
//!
//! `(x1,y1)-(x2,y2)` is the long axis, `(x3,y3)-(x4,y4)` the short axis.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{round_half_away, Mask2};

pub const CSV_COLUMNS: [&str; 11] = [
    "lesion_id",
    "series_id",
    "slice_index",
    "x1",
    "y1",
    "x2",
    "y2",
    "x3",
    "y3",
    "x4",
    "y4",
];

/// Short axes more than this many degrees off perpendicular draw a warning.
const PERPENDICULAR_TOLERANCE_DEG: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    fn on_segment(a: Point, b: Point, p: Point) -> bool {
        p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
    }
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// One prospective RECIST measurement: a long and a short diameter on one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecistMeasurement {
    pub lesion_id: String,
    pub series_id: String,
    pub slice_index: usize,
    pub long_axis: [Point; 2],
    pub short_axis: [Point; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecistWarning {
    AxesDoNotCross,
    NotPerpendicular { angle_deg: f64 },
    EndpointOutsideImage { point: Point },
}

impl fmt::Display for RecistWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AxesDoNotCross => write!(f, "long and short axes do not intersect"),
            Self::NotPerpendicular { angle_deg } => {
                write!(f, "axes meet at {angle_deg:.1} degrees")
            }
            Self::EndpointOutsideImage { point } => write!(f, "endpoint {point} outside the image"),
        }
    }
}

impl RecistMeasurement {
    pub fn endpoints(&self) -> [Point; 4] {
        [
            self.long_axis[0],
            self.long_axis[1],
            self.short_axis[0],
            self.short_axis[1],
        ]
    }

    /// Structural checks that warn rather than fail.
    pub fn cross_warnings(&self) -> Vec<RecistWarning> {
        let mut out = Vec::new();
        let [a, b] = self.long_axis;
        let [c, d] = self.short_axis;
        if !segments_intersect(a, b, c, d) {
            out.push(RecistWarning::AxesDoNotCross);
        }
        let (ux, uy) = (b.x - a.x, b.y - a.y);
        let (vx, vy) = (d.x - c.x, d.y - c.y);
        let norm = (ux.hypot(uy)) * (vx.hypot(vy));
        if norm > 0.0 {
            let angle_deg = ((ux * vx + uy * vy) / norm).clamp(-1.0, 1.0).acos().to_degrees();
            if (angle_deg - 90.0).abs() > PERPENDICULAR_TOLERANCE_DEG {
                out.push(RecistWarning::NotPerpendicular { angle_deg });
            }
        }
        out
    }

    /// Checks the record against a volume of `dims`. An out-of-range slice is
    /// an error; everything else is reported as warnings.
    pub fn validate_against(&self, dims: [usize; 3]) -> Result<Vec<RecistWarning>> {
        if self.slice_index >= dims[2] {
            return Err(Error::Lesion {
                lesion_id: self.lesion_id.clone(),
                message: format!(
                    "slice_index {} out of range 0..{}",
                    self.slice_index, dims[2]
                ),
            });
        }
        let mut warnings = self.cross_warnings();
        for p in self.endpoints() {
            let (rx, ry) = (round_half_away(p.x), round_half_away(p.y));
            if rx < 0.0 || ry < 0.0 || rx >= dims[0] as f64 || ry >= dims[1] as f64 {
                warnings.push(RecistWarning::EndpointOutsideImage { point: p });
            }
        }
        Ok(warnings)
    }
}

/// Parses lesion records from CSV text.
pub fn parse_lesion_records_str(text: &str) -> Result<Vec<RecistMeasurement>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::Schema {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let mut column = [0usize; 11];
    for (slot, name) in column.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                row: 0,
                message: format!("missing column {name:?}"),
            })?;
    }

    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Schema {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != headers.len() {
            return Err(Error::Schema {
                row,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let field = |k: usize| &rec[column[k]];
        let slice_raw = field(2);
        let slice_index: i64 = slice_raw.parse().map_err(|_| Error::Schema {
            row,
            message: format!("slice_index {slice_raw:?} is not an integer"),
        })?;
        if slice_index < 0 {
            return Err(Error::Schema {
                row,
                message: format!("slice_index {slice_index} is negative"),
            });
        }
        let mut coords = [0.0f64; 8];
        for (j, c) in coords.iter_mut().enumerate() {
            let raw = field(3 + j);
            *c = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Schema {
                    row,
                    message: format!("{} = {raw:?} is not a number", CSV_COLUMNS[3 + j]),
                })?;
        }
        out.push(RecistMeasurement {
            lesion_id: field(0).to_string(),
            series_id: field(1).to_string(),
            slice_index: slice_index as usize,
            long_axis: [Point::new(coords[0], coords[1]), Point::new(coords[2], coords[3])],
            short_axis: [Point::new(coords[4], coords[5]), Point::new(coords[6], coords[7])],
        });
    }
    Ok(out)
}

pub fn parse_lesion_records(path: impl AsRef<Path>) -> Result<Vec<RecistMeasurement>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lesion_records_str(&text)
}

pub fn lesion_records_to_string(records: &[RecistMeasurement]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for r in records {
        let mut row = vec![
            r.lesion_id.clone(),
            r.series_id.clone(),
            r.slice_index.to_string(),
        ];
        row.extend(r.endpoints().iter().flat_map(|p| [p.x.to_string(), p.y.to_string()]));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn write_lesion_records(path: impl AsRef<Path>, records: &[RecistMeasurement]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(lesion_records_to_string(records).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BBox {
    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    /// Grows by `margin` pixels on every side, clipped to the image.
    pub fn expand(&self, margin: usize, width: usize, height: usize) -> BBox {
        BBox {
            x_min: self.x_min.saturating_sub(margin),
            y_min: self.y_min.saturating_sub(margin),
            x_max: (self.x_max + margin).min(width - 1),
            y_max: (self.y_max + margin).min(height - 1),
        }
    }

    pub fn to_mask(&self, width: usize, height: usize) -> Mask2 {
        let mut m = Mask2::filled(width, height, false);
        for y in self.y_min..=self.y_max.min(height - 1) {
            for x in self.x_min..=self.x_max.min(width - 1) {
                m.set(x, y, true);
            }
        }
        m
    }
}

/// Search region and definite-foreground polygon for one measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedGeometry {
    pub bbox: BBox,
    /// The four rounded endpoints in polar order around their centroid.
    pub quad: [Point; 4],
    pub slice_index: usize,
    /// Whether any endpoint had to be clamped into the image.
    pub clamped: bool,
}

/// Rounds and clamps the endpoints, orders them into a simple quadrilateral
/// and takes their bounding box.
pub fn seed_geometry(m: &RecistMeasurement, image_dims: (usize, usize)) -> Result<SeedGeometry> {
    let (nx, ny) = image_dims;
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidParameter("image has zero size".into()));
    }
    let mut clamped = false;
    let pts: Vec<Point> = m
        .endpoints()
        .iter()
        .map(|p| {
            let rx = round_half_away(p.x);
            let ry = round_half_away(p.y);
            let cx = rx.clamp(0.0, (nx - 1) as f64);
            let cy = ry.clamp(0.0, (ny - 1) as f64);
            if cx != rx || cy != ry {
                clamped = true;
            }
            Point::new(cx, cy)
        })
        .collect();
    if clamped {
        log::warn!(
            "lesion {}: endpoints clamped into the {nx}x{ny} image",
            m.lesion_id
        );
    }

    if all_collinear(&pts) {
        return Err(Error::DegenerateMeasurement(format!(
            "lesion {}: endpoints are collinear after rounding",
            m.lesion_id
        )));
    }

    let cx = pts.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mut order: Vec<(f64, f64, Point)> = pts
        .iter()
        .map(|&p| ((p.y - cy).atan2(p.x - cx), (p.x - cx).hypot(p.y - cy), p))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let quad = [order[0].2, order[1].2, order[2].2, order[3].2];

    let fold = |f: fn(f64, f64) -> f64, init: f64, sel: fn(&Point) -> f64| {
        pts.iter().map(sel).fold(init, f) as usize
    };
    let bbox = BBox {
        x_min: fold(f64::min, f64::INFINITY, |p| p.x),
        y_min: fold(f64::min, f64::INFINITY, |p| p.y),
        x_max: fold(f64::max, f64::NEG_INFINITY, |p| p.x),
        y_max: fold(f64::max, f64::NEG_INFINITY, |p| p.y),
    };

    Ok(SeedGeometry {
        bbox,
        quad,
        slice_index: m.slice_index,
        clamped,
    })
}

fn all_collinear(pts: &[Point]) -> bool {
    let p0 = pts[0];
    let Some(&p1) = pts.iter().find(|p| **p != p0) else {
        return true;
    };
    pts.iter().all(|&p| cross(p0, p1, p) == 0.0)
}

const BOUNDARY_EPS: f64 = 1e-9;

fn on_boundary(p: Point, a: Point, b: Point) -> bool {
    let len = (b.x - a.x).hypot(b.y - a.y);
    if len == 0.0 {
        return (p.x - a.x).hypot(p.y - a.y) <= BOUNDARY_EPS;
    }
    if (cross(a, b, p) / len).abs() > BOUNDARY_EPS {
        return false;
    }
    let t = ((p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)) / (len * len);
    (-BOUNDARY_EPS..=1.0 + BOUNDARY_EPS).contains(&t)
}

/// Even-odd containment with the boundary counted as inside.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if on_boundary(p, a, b) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_at = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_at {
                inside = !inside;
            }
        }
    }
    inside
}

/// Pixels whose center lies inside or on the polygon.
pub fn rasterize_polygon(poly: &[Point], width: usize, height: usize) -> Mask2 {
    let mut mask = Mask2::filled(width, height, false);
    if poly.is_empty() || width == 0 || height == 0 {
        return mask;
    }
    let lo_x = poly.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let hi_x = poly.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let lo_y = poly.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let hi_y = poly.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let x0 = (lo_x - BOUNDARY_EPS).ceil().max(0.0) as usize;
    let y0 = (lo_y - BOUNDARY_EPS).ceil().max(0.0) as usize;
    let x1 = (hi_x + BOUNDARY_EPS).floor().min((width - 1) as f64);
    let y1 = (hi_y + BOUNDARY_EPS).floor().min((height - 1) as f64);
    if x1 < 0.0 || y1 < 0.0 {
        return mask;
    }
    for y in y0..=y1 as usize {
        for x in x0..=x1 as usize {
            if point_in_polygon(Point::new(x as f64, y as f64), poly) {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Definite-foreground mask: the quadrilateral interior and boundary.
pub fn rasterize_quad(g: &SeedGeometry, image_dims: (usize, usize)) -> Mask2 {
    rasterize_polygon(&g.quad, image_dims.0, image_dims.1)
}
