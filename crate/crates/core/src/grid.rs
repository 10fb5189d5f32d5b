//! Occupancy grid, obstacle rasterisation and the ray-casting range finder.

use std::f64::consts::PI;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Obstacle {
    Circle { center: Vec2, radius: f64 },
    /// Axis-aligned rectangle given by its centre and full side lengths.
    Rect {
        center: Vec2,
        width: f64,
        height: f64,
    },
}

impl Obstacle {
    pub fn circle(center: Vec2, radius: f64) -> Self {
        Obstacle::Circle { center, radius }
    }

    pub fn rect(center: Vec2, width: f64, height: f64) -> Self {
        Obstacle::Rect {
            center,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Obstacle::Circle { center, radius } => center.is_finite() && radius > 0.0,
            Obstacle::Rect {
                center,
                width,
                height,
            } => center.is_finite() && width > 0.0 && height > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "obstacle dimensions must be positive and finite: {self:?}"
            )))
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        match *self {
            Obstacle::Circle { center, radius } => (p - center).norm_sq() <= radius * radius,
            Obstacle::Rect {
                center,
                width,
                height,
            } => (p.x - center.x).abs() <= 0.5 * width && (p.y - center.y).abs() <= 0.5 * height,
        }
    }

    /// Euclidean distance from `p` to the obstacle; zero inside it.
    pub fn distance(&self, p: Vec2) -> f64 {
        match *self {
            Obstacle::Circle { center, radius } => (p.distance(center) - radius).max(0.0),
            Obstacle::Rect {
                center,
                width,
                height,
            } => {
                let dx = ((p.x - center.x).abs() - 0.5 * width).max(0.0);
                let dy = ((p.y - center.y).abs() - 0.5 * height).max(0.0);
                dx.hypot(dy)
            }
        }
    }

    /// World-frame bounding box as (min, max).
    fn bounds(&self) -> (Vec2, Vec2) {
        match *self {
            Obstacle::Circle { center, radius } => (
                Vec2::new(center.x - radius, center.y - radius),
                Vec2::new(center.x + radius, center.y + radius),
            ),
            Obstacle::Rect {
                center,
                width,
                height,
            } => (
                Vec2::new(center.x - 0.5 * width, center.y - 0.5 * height),
                Vec2::new(center.x + 0.5 * width, center.y + 0.5 * height),
            ),
        }
    }
}

/// Reads an obstacle CSV with header `shape,cx,cy,r_or_w,h`.
pub fn read_obstacles_csv(path: impl AsRef<FsPath>) -> Result<Vec<Obstacle>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    obstacles_from_csv_reader(file).map_err(|e| match e {
        Error::Row { row, message, .. } => Error::Row {
            path: path.to_path_buf(),
            row,
            message,
        },
        other => other.in_file(path),
    })
}

#[derive(Serialize, Deserialize)]
struct ObstacleRow {
    shape: String,
    cx: f64,
    cy: f64,
    r_or_w: f64,
    #[serde(default)]
    h: Option<f64>,
}

pub fn obstacles_from_csv_reader(reader: impl std::io::Read) -> Result<Vec<Obstacle>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if headers != ["shape", "cx", "cy", "r_or_w", "h"] {
        return Err(Error::InvalidArgument(format!(
            "expected header shape,cx,cy,r_or_w,h, got {}",
            headers.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ObstacleRow>().enumerate() {
        let line = i + 2;
        let bad = |message: String| Error::Row {
            path: Default::default(),
            row: line,
            message,
        };
        let row = row.map_err(|e| bad(e.to_string()))?;
        let center = Vec2::new(row.cx, row.cy);
        let obstacle = match row.shape.as_str() {
            "circle" => Obstacle::circle(center, row.r_or_w),
            "rect" => {
                let h = row
                    .h
                    .ok_or_else(|| bad("rect obstacle needs a height".into()))?;
                Obstacle::rect(center, row.r_or_w, h)
            }
            other => return Err(bad(format!("unknown shape {other:?}"))),
        };
        obstacle.validate().map_err(|e| bad(e.to_string()))?;
        out.push(obstacle);
    }
    Ok(out)
}

pub fn write_obstacles_csv(path: impl AsRef<FsPath>, obstacles: &[Obstacle]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::from(e).in_file(path))?;
    obstacles_to_csv_writer(file, obstacles)
}

pub fn obstacles_to_csv_writer(writer: impl std::io::Write, obstacles: &[Obstacle]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(["shape", "cx", "cy", "r_or_w", "h"])?;
    for o in obstacles {
        let row = match *o {
            Obstacle::Circle { center, radius } => ObstacleRow {
                shape: "circle".into(),
                cx: center.x,
                cy: center.y,
                r_or_w: radius,
                h: None,
            },
            Obstacle::Rect {
                center,
                width,
                height,
            } => ObstacleRow {
                shape: "rect".into(),
                cx: center.x,
                cy: center.y,
                r_or_w: width,
                h: Some(height),
            },
        };
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Size and resolution of the vehicle-centred window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Metres per cell.
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for GridSpec {
    /// 16 m × 16 m at 0.25 m/cell.
    fn default() -> Self {
        Self {
            resolution: 0.25,
            width: 64,
            height: 64,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) || self.width == 0 || self.height == 0
        {
            return Err(Error::InvalidArgument(format!("invalid grid spec {self:?}")));
        }
        Ok(())
    }

    /// Lower-left origin of a window centred on `center`, snapped to the
    /// world lattice of multiples of the resolution so that the rasterised
    /// cells do not shimmer as the vehicle moves.
    pub fn centered_origin(&self, center: Vec2) -> Vec2 {
        let r = self.resolution;
        let half_w = 0.5 * self.width as f64 * r;
        let half_h = 0.5 * self.height as f64 * r;
        Vec2::new(
            ((center.x - half_w) / r).round() * r,
            ((center.y - half_h) / r).round() * r,
        )
    }
}

/// Binary occupancy grid; row-major with row 0 at the bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// World position of the lower-left corner.
    pub origin: Vec2,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn empty(spec: &GridSpec, origin: Vec2) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            resolution: spec.resolution,
            width: spec.width,
            height: spec.height,
            origin,
            cells: vec![false; spec.width * spec.height],
        })
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, occupied: bool) {
        self.cells[row * self.width + col] = occupied;
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (col as f64 + 0.5) * self.resolution,
            self.origin.y + (row as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell containing world point `p`, if inside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    /// Occupancy at world point `p`; anything outside the grid is free.
    pub fn is_occupied(&self, p: Vec2) -> bool {
        self.cell_of(p).is_some_and(|(c, r)| self.get(c, r))
    }

    /// Clears the grid, moves it to `origin` and marks every cell whose
    /// centre lies inside an obstacle.
    pub fn fill(&mut self, obstacles: &[Obstacle], origin: Vec2) {
        self.origin = origin;
        self.cells.iter_mut().for_each(|c| *c = false);
        let r = self.resolution;
        for o in obstacles {
            let (lo, hi) = o.bounds();
            // cell centres at origin + (i + 0.5) r
            let c0 = ((lo.x - origin.x) / r - 0.5).ceil().max(0.0) as usize;
            let r0 = ((lo.y - origin.y) / r - 0.5).ceil().max(0.0) as usize;
            let c1 = ((hi.x - origin.x) / r - 0.5).floor();
            let r1 = ((hi.y - origin.y) / r - 0.5).floor();
            if c1 < 0.0 || r1 < 0.0 {
                continue;
            }
            let c1 = (c1 as usize).min(self.width.saturating_sub(1));
            let r1 = (r1 as usize).min(self.height.saturating_sub(1));
            for row in r0..=r1 {
                for col in c0..=c1 {
                    if o.contains(self.cell_center(col, row)) {
                        self.cells[row * self.width + col] = true;
                    }
                }
            }
        }
    }
}

/// Builds a grid at `origin` with every cell whose centre lies inside an
/// obstacle marked occupied.
pub fn rasterize_obstacles(
    obstacles: &[Obstacle],
    spec: &GridSpec,
    origin: Vec2,
) -> Result<OccupancyGrid> {
    for o in obstacles {
        o.validate()?;
    }
    let mut grid = OccupancyGrid::empty(spec, origin)?;
    grid.fill(obstacles, origin);
    Ok(grid)
}

/// Range finder configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    /// Number of rays `m`.
    pub rays: usize,
    /// Nodes per ray `n`, evenly spaced on `[0, outer_radius]`.
    pub nodes: usize,
    /// Radius `ρ₁` of the disk containing the robot.
    pub inner_radius: f64,
    /// Maximum sensing radius `ρ₂`.
    pub outer_radius: f64,
    /// Rays span `[−half_span, +half_span]` around the heading.
    pub half_span: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self {
            rays: 15,
            nodes: 17,
            inner_radius: 1.0,
            outer_radius: 5.0,
            half_span: 2.0 * PI / 3.0,
        }
    }
}

impl SensorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_radius > self.inner_radius && self.inner_radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need outer_radius > inner_radius > 0, got {} and {}",
                self.outer_radius, self.inner_radius
            )));
        }
        if self.rays < 3 || self.nodes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 3 rays and 2 nodes, got {} and {}",
                self.rays, self.nodes
            )));
        }
        if !(self.half_span >= 0.0 && self.half_span <= PI) {
            return Err(Error::InvalidArgument(format!(
                "half_span must lie in [0, π], got {}",
                self.half_span
            )));
        }
        Ok(())
    }

    /// `ρ₂ − ρ₁`, the reading of a ray that sees nothing.
    pub fn max_range(&self) -> f64 {
        self.outer_radius - self.inner_radius
    }

    /// Ray angle `i` in the vehicle frame.
    pub fn ray_angle(&self, i: usize) -> f64 {
        -self.half_span + 2.0 * self.half_span * i as f64 / (self.rays - 1) as f64
    }

    /// Radial distance of node `j` from the centre of mass.
    pub fn node_radius(&self, j: usize) -> f64 {
        self.outer_radius * j as f64 / (self.nodes - 1) as f64
    }

    pub fn node_spacing(&self) -> f64 {
        self.outer_radius / (self.nodes - 1) as f64
    }
}

/// Per-ray free distances beyond the robot disk, each in `[0, ρ₂ − ρ₁]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeScan {
    pub distances: Vec<f64>,
    /// Ray angles in the vehicle frame.
    pub ray_angles: Vec<f64>,
}

impl RangeScan {
    /// Index and value of the smallest distance; ties go to the lowest index.
    pub fn min_ray(&self) -> (usize, f64) {
        let mut best = (0, self.distances[0]);
        for (i, &d) in self.distances.iter().enumerate().skip(1) {
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

/// Casts the sensor's rays from `com`, rotated by `heading`.
///
/// Nodes are visited from the inside out and nodes inside the robot disk
/// are ignored. A ray's reading is the radial distance of its first occupied
/// node minus `ρ₁`, or `ρ₂ − ρ₁` when no node is occupied.
pub fn cast_rays(
    grid: &OccupancyGrid,
    com: Vec2,
    heading: f64,
    sensor: &SensorParams,
) -> Result<RangeScan> {
    sensor.validate()?;
    let max_range = sensor.max_range();
    let first_node = (0..sensor.nodes)
        .find(|&j| sensor.node_radius(j) > sensor.inner_radius)
        .unwrap_or(sensor.nodes);
    let mut distances = Vec::with_capacity(sensor.rays);
    let mut ray_angles = Vec::with_capacity(sensor.rays);
    for i in 0..sensor.rays {
        let local = sensor.ray_angle(i);
        let dir = Vec2::from_angle(heading + local);
        let hit = (first_node..sensor.nodes)
            .map(|j| sensor.node_radius(j))
            .find(|&r| grid.is_occupied(com + dir * r));
        distances.push(hit.map_or(max_range, |r| r - sensor.inner_radius));
        ray_angles.push(local);
    }
    Ok(RangeScan {
        distances,
        ray_angles,
    })
}
