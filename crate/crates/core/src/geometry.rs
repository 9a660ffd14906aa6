//! Observation windows, point patterns and evaluation grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A space-time event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, t: f64) -> Self {
        Self { x, y, t }
    }
}

/// Spatial part of an observation window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Rect {
        xmin: f64,
        xmax: f64,
        ymin: f64,
        ymax: f64,
    },
    /// Simple polygon, vertices in order (either orientation), not closed.
    Polygon(Vec<[f64; 2]>),
}

/// Product of a spatial region and a closed time interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    region: Region,
    t0: f64,
    t1: f64,
    area: f64,
    bbox: [f64; 4],
}

/// Signed shoelace area of a vertex ring.
pub fn shoelace_area(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = vertices[i];
        let [x1, y1] = vertices[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

fn check_interval(t0: f64, t1: f64) -> Result<()> {
    if !(t0.is_finite() && t1.is_finite()) {
        return Err(Error::DegenerateWindow("non-finite time bounds".into()));
    }
    if t1 <= t0 {
        return Err(Error::DegenerateWindow(format!(
            "empty time interval [{t0}, {t1}]"
        )));
    }
    Ok(())
}

impl Window {
    pub fn rect(xmin: f64, xmax: f64, ymin: f64, ymax: f64, t0: f64, t1: f64) -> Result<Self> {
        if ![xmin, xmax, ymin, ymax].iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateWindow("non-finite rectangle bounds".into()));
        }
        if xmax <= xmin || ymax <= ymin {
            return Err(Error::DegenerateWindow(format!(
                "zero-area rectangle [{xmin}, {xmax}] x [{ymin}, {ymax}]"
            )));
        }
        check_interval(t0, t1)?;
        Ok(Self {
            region: Region::Rect {
                xmin,
                xmax,
                ymin,
                ymax,
            },
            t0,
            t1,
            area: (xmax - xmin) * (ymax - ymin),
            bbox: [xmin, xmax, ymin, ymax],
        })
    }

    /// The unit cube `[0,1]^2 x [0,1]`.
    pub fn unit_cube() -> Self {
        Self::rect(0.0, 1.0, 0.0, 1.0, 0.0, 1.0).expect("unit cube is valid")
    }

    pub fn polygon(vertices: Vec<[f64; 2]>, t0: f64, t1: f64) -> Result<Self> {
        let mut vertices = vertices;
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::DegenerateWindow(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateWindow("non-finite polygon vertex".into()));
        }
        check_interval(t0, t1)?;
        let area = shoelace_area(&vertices).abs();
        if area <= 0.0 {
            return Err(Error::DegenerateWindow("zero-area polygon".into()));
        }
        check_simple(&vertices)?;
        let mut bbox = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for &[x, y] in &vertices {
            bbox[0] = bbox[0].min(x);
            bbox[1] = bbox[1].max(x);
            bbox[2] = bbox[2].min(y);
            bbox[3] = bbox[3].max(y);
        }
        Ok(Self {
            region: Region::Polygon(vertices),
            t0,
            t1,
            area,
            bbox,
        })
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn is_rect(&self) -> bool {
        matches!(self.region, Region::Rect { .. })
    }

    /// |W|
    pub fn area(&self) -> f64 {
        self.area
    }

    /// |T|
    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }

    /// |W|·|T|
    pub fn volume(&self) -> f64 {
        self.area * self.duration()
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }

    /// `[xmin, xmax, ymin, ymax]` of the spatial region.
    pub fn bbox(&self) -> [f64; 4] {
        self.bbox
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        match &self.region {
            Region::Rect {
                xmin,
                xmax,
                ymin,
                ymax,
            } => x >= *xmin && x <= *xmax && y >= *ymin && y <= *ymax,
            Region::Polygon(v) => {
                let [x0, x1, y0, y1] = self.bbox;
                let tol = 1e-12 * (x1 - x0).hypot(y1 - y0);
                point_in_polygon(x, y, v, tol)
            }
        }
    }

    pub fn contains_t(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t1
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.contains_t(p.t) && self.contains_xy(p.x, p.y)
    }

    /// Shifts the spatial region by `(dx, dy)` and time by `dt`.
    pub fn translated(&self, dx: f64, dy: f64, dt: f64) -> Self {
        let region = match &self.region {
            Region::Rect {
                xmin,
                xmax,
                ymin,
                ymax,
            } => Region::Rect {
                xmin: xmin + dx,
                xmax: xmax + dx,
                ymin: ymin + dy,
                ymax: ymax + dy,
            },
            Region::Polygon(v) => Region::Polygon(v.iter().map(|&[x, y]| [x + dx, y + dy]).collect()),
        };
        let [x0, x1, y0, y1] = self.bbox;
        Self {
            region,
            t0: self.t0 + dt,
            t1: self.t1 + dt,
            area: self.area,
            bbox: [x0 + dx, x1 + dx, y0 + dy, y1 + dy],
        }
    }

    /// Multiplies spatial coordinates by `s` and time by `st`.
    pub fn scaled(&self, s: f64, st: f64) -> Self {
        let region = match &self.region {
            Region::Rect {
                xmin,
                xmax,
                ymin,
                ymax,
            } => Region::Rect {
                xmin: xmin * s,
                xmax: xmax * s,
                ymin: ymin * s,
                ymax: ymax * s,
            },
            Region::Polygon(v) => Region::Polygon(v.iter().map(|&[x, y]| [x * s, y * s]).collect()),
        };
        let [x0, x1, y0, y1] = self.bbox;
        Self {
            region,
            t0: self.t0 * st,
            t1: self.t1 * st,
            area: self.area * s * s,
            bbox: [x0 * s, x1 * s, y0 * s, y1 * s],
        }
    }

    /// Area of `W ∩ (W + (dx, dy))`. Exact for rectangles; polygons use a
    /// midpoint count on a `res x res` lattice over the bounding box.
    pub fn overlap_area(&self, dx: f64, dy: f64, res: usize) -> f64 {
        match &self.region {
            Region::Rect {
                xmin,
                xmax,
                ymin,
                ymax,
            } => ((xmax - xmin) - dx.abs()).max(0.0) * ((ymax - ymin) - dy.abs()).max(0.0),
            Region::Polygon(_) => {
                let [x0, x1, y0, y1] = self.bbox;
                let hx = (x1 - x0) / res as f64;
                let hy = (y1 - y0) / res as f64;
                let mut count = 0usize;
                for iy in 0..res {
                    let y = y0 + (iy as f64 + 0.5) * hy;
                    for ix in 0..res {
                        let x = x0 + (ix as f64 + 0.5) * hx;
                        if self.contains_xy(x, y) && self.contains_xy(x - dx, y - dy) {
                            count += 1;
                        }
                    }
                }
                count as f64 * hx * hy
            }
        }
    }
}

/// `true` iff the spatial part of `p` lies inside or on the boundary of the
/// region and its time lies in the closed interval.
pub fn point_in_window(p: &Point, window: &Window) -> bool {
    window.contains(p)
}

/// Crossing-number test; points within `tol` of an edge count as inside.
fn point_in_polygon(x: f64, y: f64, v: &[[f64; 2]], tol: f64) -> bool {
    let n = v.len();
    let mut inside = false;
    for i in 0..n {
        let [ax, ay] = v[i];
        let [bx, by] = v[(i + 1) % n];
        if on_segment(x, y, ax, ay, bx, by, tol) {
            return true;
        }
        if (ay > y) != (by > y) {
            let xi = ax + (y - ay) * (bx - ax) / (by - ay);
            if x < xi {
                inside = !inside;
            }
        }
    }
    inside
}

fn on_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64, tol: f64) -> bool {
    let (ux, uy) = (bx - ax, by - ay);
    let len = ux.hypot(uy);
    if len == 0.0 {
        return (px - ax).hypot(py - ay) <= tol;
    }
    let cross = ux * (py - ay) - uy * (px - ax);
    if cross.abs() > tol * len {
        return false;
    }
    let dot = ux * (px - ax) + uy * (py - ay);
    dot >= -tol * len && dot <= len * len + tol * len
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let within = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
    };
    (d1 == 0.0 && within(q1, q2, p1))
        || (d2 == 0.0 && within(q1, q2, p2))
        || (d3 == 0.0 && within(p1, p2, q1))
        || (d4 == 0.0 && within(p1, p2, q2))
}

fn check_simple(v: &[[f64; 2]]) -> Result<()> {
    let n = v.len();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        if a == b {
            return Err(Error::InvalidPolygon(format!("repeated vertex {i}")));
        }
        for j in (i + 1)..n {
            // skip edges sharing a vertex with edge i
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (v[j], v[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return Err(Error::InvalidPolygon(format!(
                    "edges {i} and {j} intersect"
                )));
            }
        }
    }
    Ok(())
}

/// Events observed in a window.
#[derive(Clone, Debug, PartialEq)]
pub struct PointPattern {
    points: Vec<Point>,
    window: Window,
}

impl PointPattern {
    /// Validates that every point lies in the window and that no two points
    /// coincide in all three coordinates.
    pub fn new(points: Vec<Point>, window: Window) -> Result<Self> {
        let mut outside = Vec::new();
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.t.is_finite()) {
                return Err(Error::NonFinite(format!("point {i}")));
            }
            if !window.contains(p) {
                outside.push(i);
            }
        }
        if !outside.is_empty() {
            return Err(Error::OutsideWindow(outside));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| {
            let (p, q) = (points[a], points[b]);
            p.x.total_cmp(&q.x)
                .then(p.y.total_cmp(&q.y))
                .then(p.t.total_cmp(&q.t))
        });
        for w in order.windows(2) {
            if points[w[0]] == points[w[1]] {
                return Err(Error::DuplicatePoint(w[0].max(w[1])));
            }
        }
        Ok(Self { points, window })
    }

    /// Builds a pattern whose points are known to lie in the window; the
    /// duplicate check is skipped (shuffled times may repeat a triple).
    pub(crate) fn from_trusted(points: Vec<Point>, window: Window) -> Self {
        debug_assert!(points.iter().all(|p| window.contains(p)));
        Self { points, window }
    }

    pub fn empty(window: Window) -> Self {
        Self {
            points: Vec::new(),
            window,
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    pub fn ts(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }
}

/// Regular lattice over the bounding box of `W` and over `T`.
///
/// Spatial cells are indexed `s = ix + nx * iy`; space-time cells are
/// indexed `s * nt + it` (time varies fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid3 {
    nx: usize,
    ny: usize,
    nt: usize,
    origin: [f64; 3],
    step: [f64; 3],
    inside: Vec<bool>,
    n_inside: usize,
}

impl Grid3 {
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn nt(&self) -> usize {
        self.nt
    }
    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nt]
    }
    pub fn n_spatial(&self) -> usize {
        self.nx * self.ny
    }
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nt
    }
    pub fn n_inside(&self) -> usize {
        self.n_inside
    }
    pub fn dx(&self) -> f64 {
        self.step[0]
    }
    pub fn dy(&self) -> f64 {
        self.step[1]
    }
    pub fn dt(&self) -> f64 {
        self.step[2]
    }
    pub fn cell_area(&self) -> f64 {
        self.step[0] * self.step[1]
    }
    pub fn cell_length(&self) -> f64 {
        self.step[2]
    }
    pub fn cell_volume(&self) -> f64 {
        self.step[0] * self.step[1] * self.step[2]
    }
    pub fn x(&self, ix: usize) -> f64 {
        self.origin[0] + (ix as f64 + 0.5) * self.step[0]
    }
    pub fn y(&self, iy: usize) -> f64 {
        self.origin[1] + (iy as f64 + 0.5) * self.step[1]
    }
    pub fn t(&self, it: usize) -> f64 {
        self.origin[2] + (it as f64 + 0.5) * self.step[2]
    }
    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }
    pub fn ys(&self) -> Vec<f64> {
        (0..self.ny).map(|i| self.y(i)).collect()
    }
    pub fn ts(&self) -> Vec<f64> {
        (0..self.nt).map(|i| self.t(i)).collect()
    }
    pub fn spatial_index(&self, ix: usize, iy: usize) -> usize {
        ix + self.nx * iy
    }
    /// `(ix, iy)` of spatial cell `s`.
    pub fn spatial_coords(&self, s: usize) -> (usize, usize) {
        (s % self.nx, s / self.nx)
    }
    pub fn spatial_center(&self, s: usize) -> (f64, f64) {
        let (ix, iy) = self.spatial_coords(s);
        (self.x(ix), self.y(iy))
    }
    pub fn cell_index(&self, s: usize, it: usize) -> usize {
        s * self.nt + it
    }
    /// Center `(x, y, t)` of space-time cell `c`.
    pub fn cell_center(&self, c: usize) -> (f64, f64, f64) {
        let (x, y) = self.spatial_center(c / self.nt);
        (x, y, self.t(c % self.nt))
    }
    pub fn inside(&self, s: usize) -> bool {
        self.inside[s]
    }
    pub fn inside_mask(&self) -> &[bool] {
        &self.inside
    }
    /// Spatial cell containing `(x, y)`, clamped to the lattice.
    pub fn locate_xy(&self, x: f64, y: f64) -> usize {
        let ix = (((x - self.origin[0]) / self.step[0]).floor().max(0.0) as usize).min(self.nx - 1);
        let iy = (((y - self.origin[1]) / self.step[1]).floor().max(0.0) as usize).min(self.ny - 1);
        self.spatial_index(ix, iy)
    }
    pub fn locate_t(&self, t: f64) -> usize {
        (((t - self.origin[2]) / self.step[2]).floor().max(0.0) as usize).min(self.nt - 1)
    }
    /// Lower corner `(x, y, t)` of the lattice.
    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }
}

/// Divides the bounding box of `W` and `[t0, t1]` into equal cells; a cell is
/// inside iff its spatial center lies in `W`.
pub fn build_grid(window: &Window, nx: usize, ny: usize, nt: usize) -> Result<Grid3> {
    if nx == 0 || ny == 0 || nt == 0 {
        return Err(Error::InvalidParameter(format!(
            "grid dimensions must be at least 1, got {nx}x{ny}x{nt}"
        )));
    }
    let [x0, x1, y0, y1] = window.bbox();
    let (t0, t1) = window.time_range();
    let step = [(x1 - x0) / nx as f64, (y1 - y0) / ny as f64, (t1 - t0) / nt as f64];
    if step.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::DegenerateWindow("zero-size bounding box".into()));
    }
    let mut grid = Grid3 {
        nx,
        ny,
        nt,
        origin: [x0, y0, t0],
        step,
        inside: Vec::with_capacity(nx * ny),
        n_inside: 0,
    };
    let rect = window.is_rect();
    for iy in 0..ny {
        for ix in 0..nx {
            let inside = rect || window.contains_xy(grid.x(ix), grid.y(iy));
            grid.inside.push(inside);
        }
    }
    grid.n_inside = grid.inside.iter().filter(|&&b| b).count();
    Ok(grid)
}
