//! Waypoint paths, reference-segment selection and cross-track error.

use std::f64::consts::PI;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Default lookahead window for advancing the reference segment, in metres.
pub const DEFAULT_LOOKAHEAD: f64 = 3.0;

/// Default number of samples of the figure-8 benchmark curve.
pub const DEFAULT_FIGURE8_WAYPOINTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Vec2,
    pub target_speed: f64,
    /// Carried through file I/O; not used for control.
    pub target_heading: f64,
}

impl Waypoint {
    pub fn new(position: Vec2, target_speed: f64, target_heading: f64) -> Self {
        Self {
            position,
            target_speed,
            target_heading,
        }
    }
}

/// An ordered polyline of at least two waypoints with non-degenerate segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    waypoints: Vec<Waypoint>,
    /// Arc length from the first waypoint to waypoint `i`.
    arc_length: Vec<f64>,
}

/// The active segment `w_k → w_{k+1}` and the signed cross-track error to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSegment {
    pub index: usize,
    pub start: Vec2,
    pub end: Vec2,
    /// Positive when the vehicle is left of the segment direction.
    pub cross_track_error: f64,
    /// Clamped projection of the position onto the segment, in [0, 1].
    pub along: f64,
}

impl ReferenceSegment {
    pub fn direction(&self) -> Vec2 {
        self.end - self.start
    }
}

/// Result of projecting a point onto a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentProjection {
    pub signed_distance: f64,
    pub along: f64,
}

/// Distance from `point` to the segment `a → b`.
///
/// The magnitude is the Euclidean distance to the closest point of the
/// segment (an endpoint when the projection falls outside it); the sign is
/// the orientation of `point − a` relative to `b − a`, positive to the left.
/// Points on the supporting line get a non-negative sign.
pub fn distance_to_segment(point: Vec2, a: Vec2, b: Vec2) -> Result<SegmentProjection> {
    let dir = b - a;
    let len_sq = dir.norm_sq();
    if len_sq == 0.0 {
        return Err(Error::DegenerateSegment { x: a.x, y: a.y });
    }
    let rel = point - a;
    let along = (rel.dot(dir) / len_sq).clamp(0.0, 1.0);
    let closest = a + dir * along;
    let dist = point.distance(closest);
    let signed_distance = if dir.cross(rel) < 0.0 { -dist } else { dist };
    Ok(SegmentProjection {
        signed_distance,
        along,
    })
}

impl Path {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::InvalidPath(format!(
                "need at least 2 waypoints, got {}",
                waypoints.len()
            )));
        }
        let mut arc_length = Vec::with_capacity(waypoints.len());
        arc_length.push(0.0);
        for (i, w) in waypoints.iter().enumerate() {
            if !w.position.is_finite() || !w.target_speed.is_finite() {
                return Err(Error::InvalidPath(format!("waypoint {i} is not finite")));
            }
            if w.target_speed < 0.0 {
                return Err(Error::InvalidPath(format!(
                    "waypoint {i} has negative target speed {}",
                    w.target_speed
                )));
            }
            if i > 0 {
                let len = w.position.distance(waypoints[i - 1].position);
                if len == 0.0 {
                    return Err(Error::InvalidPath(format!(
                        "waypoints {} and {i} coincide",
                        i - 1
                    )));
                }
                arc_length.push(arc_length[i - 1] + len);
            }
        }
        Ok(Self {
            waypoints,
            arc_length,
        })
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn segment_count(&self) -> usize {
        self.waypoints.len() - 1
    }

    pub fn first(&self) -> &Waypoint {
        &self.waypoints[0]
    }

    pub fn last(&self) -> &Waypoint {
        &self.waypoints[self.waypoints.len() - 1]
    }

    /// Arc length from the first waypoint to waypoint `i`.
    pub fn arc_length_at(&self, i: usize) -> f64 {
        self.arc_length[i]
    }

    pub fn total_length(&self) -> f64 {
        self.arc_length[self.arc_length.len() - 1]
    }

    /// Rejects waypoints whose target speed the vehicle cannot reach.
    pub fn check_speeds(&self, max_speed: f64) -> Result<()> {
        match self
            .waypoints
            .iter()
            .position(|w| w.target_speed > max_speed)
        {
            Some(i) => Err(Error::InvalidPath(format!(
                "waypoint {i} target speed {} exceeds vehicle max speed {max_speed}",
                self.waypoints[i].target_speed
            ))),
            None => Ok(()),
        }
    }

    /// Point at waypoint-index parameter `s ∈ [0, len−1]`, linearly
    /// interpolated between neighbouring waypoints.
    pub fn point_at_index_param(&self, s: f64) -> Vec2 {
        let last = (self.waypoints.len() - 1) as f64;
        let s = s.clamp(0.0, last);
        let i = (s.floor() as usize).min(self.waypoints.len() - 2);
        let frac = s - i as f64;
        let a = self.waypoints[i].position;
        let b = self.waypoints[i + 1].position;
        a + (b - a) * frac
    }

    /// Segments eligible as reference after `previous_k`: the current one and
    /// every later one whose start lies within `lookahead` arc length of it.
    pub fn admissible_segments(
        &self,
        previous_k: usize,
        lookahead: f64,
    ) -> std::ops::RangeInclusive<usize> {
        let base = self.arc_length[previous_k];
        let mut last = previous_k;
        while last + 1 < self.segment_count() && self.arc_length[last + 1] - base <= lookahead {
            last += 1;
        }
        previous_k..=last
    }

    /// Monotone nearest-admissible-segment selection.
    ///
    /// Among the admissible segments (see [`Path::admissible_segments`]) the
    /// one with the smallest point-to-segment distance wins, ties going to
    /// the lower index. The returned index is never below `previous_k`.
    pub fn select_reference_segment(
        &self,
        position: Vec2,
        previous_k: usize,
        lookahead: f64,
    ) -> Result<ReferenceSegment> {
        if previous_k >= self.segment_count() {
            return Err(Error::InvalidArgument(format!(
                "segment index {previous_k} out of range for {} segments",
                self.segment_count()
            )));
        }
        if !(lookahead >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lookahead must be non-negative, got {lookahead}"
            )));
        }
        let mut best: Option<(usize, SegmentProjection)> = None;
        for k in self.admissible_segments(previous_k, lookahead) {
            let proj = distance_to_segment(
                position,
                self.waypoints[k].position,
                self.waypoints[k + 1].position,
            )?;
            match best {
                Some((_, b)) if proj.signed_distance.abs() >= b.signed_distance.abs() => {}
                _ => best = Some((k, proj)),
            }
        }
        let (index, proj) = best.expect("admissible range is never empty");
        Ok(ReferenceSegment {
            index,
            start: self.waypoints[index].position,
            end: self.waypoints[index + 1].position,
            cross_track_error: proj.signed_distance,
            along: proj.along,
        })
    }

    pub fn read_csv(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::from_csv_reader(file).map_err(|e| match e {
            Error::Row { row, message, .. } => Error::Row {
                path: path.to_path_buf(),
                row,
                message,
            },
            other => other.in_file(path),
        })
    }

    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x", "y", "v", "theta"] {
            return Err(Error::InvalidPath(format!(
                "expected header x,y,v,theta, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut waypoints = Vec::new();
        for (i, row) in rdr.deserialize::<PathRow>().enumerate() {
            // header is line 1
            let row = row.map_err(|e| Error::Row {
                path: Default::default(),
                row: i + 2,
                message: e.to_string(),
            })?;
            waypoints.push(Waypoint::new(Vec2::new(row.x, row.y), row.v, row.theta));
        }
        Self::new(waypoints)
    }

    pub fn write_csv(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::from(e).in_file(path))?;
        self.to_csv_writer(file)
    }

    pub fn to_csv_writer(&self, writer: impl std::io::Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for w in &self.waypoints {
            wtr.serialize(PathRow {
                x: w.position.x,
                y: w.position.y,
                v: w.target_speed,
                theta: w.target_heading,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct PathRow {
    x: f64,
    y: f64,
    v: f64,
    theta: f64,
}

/// The figure-8 benchmark curve `γ(t) = (40 + 20 cos t, 22.5 + 20 sin t cos t)`.
pub fn figure8_point(t: f64) -> Vec2 {
    Vec2::new(40.0 + 20.0 * t.cos(), 22.5 + 20.0 * t.sin() * t.cos())
}

/// Derivative of [`figure8_point`] with respect to `t`.
pub fn figure8_tangent(t: f64) -> Vec2 {
    Vec2::new(-20.0 * t.sin(), 20.0 * (2.0 * t).cos())
}

/// Default figure-8 target speed, `2 + cos²(2t)` m/s.
pub fn figure8_default_speed(t: f64) -> f64 {
    2.0 + (2.0 * t).cos().powi(2)
}

pub fn generate_figure8(n_waypoints: usize) -> Result<Path> {
    generate_figure8_with(n_waypoints, figure8_default_speed)
}

/// Samples the figure-8 at `n_waypoints` uniformly spaced `t ∈ [−π, π]`,
/// taking target speeds from `speed(t)`.
pub fn generate_figure8_with(n_waypoints: usize, speed: impl Fn(f64) -> f64) -> Result<Path> {
    if n_waypoints < 8 {
        return Err(Error::InvalidArgument(format!(
            "figure-8 needs at least 8 waypoints, got {n_waypoints}"
        )));
    }
    let waypoints = (0..n_waypoints)
        .map(|i| {
            let t = -PI + 2.0 * PI * i as f64 / (n_waypoints - 1) as f64;
            let tangent = figure8_tangent(t);
            Waypoint::new(figure8_point(t), speed(t), tangent.y.atan2(tangent.x))
        })
        .collect();
    Path::new(waypoints)
}
