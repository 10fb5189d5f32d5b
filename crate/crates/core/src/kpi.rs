//! Validation KPIs over recorded episodes.
//!
//! A trace holds the reset observation at index 0 followed by one record per
//! step, so an episode of `N` steps has `N + 1` records. Sums run over
//! `k = 1..=N`; the minimum for κ_dist runs over all records.

use std::path::Path as FsPath;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Observation, Termination, OBS_DIM};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::path::Path;
use crate::vehicle::{Control, VehicleState};

pub const DEFAULT_CHECKPOINTS: usize = 50;
pub const DEFAULT_REACH_TOLERANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub u1: f64,
    pub u2: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
    pub x5: f64,
    pub x6: f64,
    pub x7: f64,
}

impl TraceStep {
    pub fn new(t: f64, state: &VehicleState, control: Control, obs: &Observation) -> Self {
        let o = obs.to_array();
        Self {
            t,
            x: state.position.x,
            y: state.position.y,
            theta: state.heading,
            v: state.speed,
            u1: control.accel,
            u2: control.steer,
            x1: o[0],
            x2: o[1],
            x3: o[2],
            x4: o[3],
            x5: o[4],
            x6: o[5],
            x7: o[6],
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn observation(&self) -> [f64; OBS_DIM] {
        [self.x1, self.x2, self.x3, self.x4, self.x5, self.x6, self.x7]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub termination: Option<Termination>,
}

impl EpisodeTrace {
    /// Number of steps `N` after the reset record.
    pub fn step_count(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    fn require_steps(&self) -> Result<&[TraceStep]> {
        if self.steps.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "trace needs a reset record and at least one step, has {} records",
                self.steps.len()
            )));
        }
        Ok(&self.steps[1..])
    }

    pub fn write_csv(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::from(e).in_file(path))?;
        self.to_csv_writer(file)
    }

    pub fn to_csv_writer(&self, writer: impl std::io::Write) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        wtr.write_record(TRACE_HEADER)?;
        for s in &self.steps {
            wtr.serialize(s)?;
        }
        wtr.flush()?;
        Ok(())
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
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if headers != TRACE_HEADER {
            return Err(Error::InvalidArgument(format!(
                "expected header {}, got {}",
                TRACE_HEADER.join(","),
                headers.join(",")
            )));
        }
        let mut steps = Vec::new();
        for (i, row) in rdr.deserialize::<TraceStep>().enumerate() {
            steps.push(row.map_err(|e| Error::Row {
                path: Default::default(),
                row: i + 2,
                message: e.to_string(),
            })?);
        }
        Ok(Self {
            steps,
            termination: None,
        })
    }
}

pub const TRACE_HEADER: [&str; 14] = [
    "t", "x", "y", "theta", "v", "u1", "u2", "x1", "x2", "x3", "x4", "x5", "x6", "x7",
];

/// Mean squared norm of (clipped cross-track error, speed error) over steps 1..=N.
pub fn kappa2(trace: &EpisodeTrace) -> Result<f64> {
    let steps = trace.require_steps()?;
    let sum: f64 = steps.iter().map(|s| s.x1 * s.x1 + s.x2 * s.x2).sum();
    Ok(sum / steps.len() as f64)
}

/// Fraction of ordered checkpoints reached in succession.
///
/// A single cursor starts at the first checkpoint and advances each time a
/// trace position comes within `tolerance` of it. A checkpoint that is never
/// reached blocks every later one.
pub fn kappa_reach(trace: &EpisodeTrace, checkpoints: &[Vec2], tolerance: f64) -> f64 {
    if checkpoints.is_empty() {
        return 0.0;
    }
    let mut cursor = 0;
    for s in &trace.steps {
        let p = s.position();
        // one position may satisfy several consecutive checkpoints
        while cursor < checkpoints.len() && p.distance(checkpoints[cursor]) <= tolerance {
            cursor += 1;
        }
        if cursor == checkpoints.len() {
            break;
        }
    }
    cursor as f64 / checkpoints.len() as f64
}

/// Smallest obstacle reading over every record, reset included.
pub fn kappa_dist(trace: &EpisodeTrace) -> Result<f64> {
    trace.require_steps()?;
    Ok(trace.steps.iter().map(|s| s.x7).fold(f64::INFINITY, f64::min))
}

/// Fraction of steps 1..=N whose obstacle reading is at most `(ρ₂ − ρ₁) / 2`.
pub fn kappa_danger(trace: &EpisodeTrace, inner_radius: f64, outer_radius: f64) -> Result<f64> {
    let steps = trace.require_steps()?;
    let threshold = 0.5 * (outer_radius - inner_radius);
    let hits = steps.iter().filter(|s| s.x7 <= threshold).count();
    Ok(hits as f64 / steps.len() as f64)
}

/// `count` checkpoints drawn uniformly in the waypoint-index parameter,
/// ordered from start to end.
pub fn sample_checkpoints(path: &Path, count: usize, seed: u64) -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = (path.len() - 1) as f64;
    let mut params: Vec<f64> = (0..count).map(|_| rng.random_range(0.0..=span)).collect();
    params.sort_by(f64::total_cmp);
    params
        .into_iter()
        .map(|s| path.point_at_index_param(s))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiSet {
    pub kappa2: f64,
    pub kappa_reach: f64,
    pub kappa_dist: f64,
    pub kappa_danger: f64,
}

impl KpiSet {
    pub fn evaluate(
        trace: &EpisodeTrace,
        checkpoints: &[Vec2],
        tolerance: f64,
        inner_radius: f64,
        outer_radius: f64,
    ) -> Result<Self> {
        Ok(Self {
            kappa2: kappa2(trace)?,
            kappa_reach: kappa_reach(trace, checkpoints, tolerance),
            kappa_dist: kappa_dist(trace)?,
            kappa_danger: kappa_danger(trace, inner_radius, outer_radius)?,
        })
    }

    /// Component-wise mean.
    pub fn mean<'a>(sets: impl IntoIterator<Item = &'a KpiSet>) -> Option<KpiSet> {
        let mut n = 0usize;
        let mut acc = [0.0; 4];
        for s in sets {
            n += 1;
            acc[0] += s.kappa2;
            acc[1] += s.kappa_reach;
            acc[2] += s.kappa_dist;
            acc[3] += s.kappa_danger;
        }
        (n > 0).then(|| KpiSet {
            kappa2: acc[0] / n as f64,
            kappa_reach: acc[1] / n as f64,
            kappa_dist: acc[2] / n as f64,
            kappa_danger: acc[3] / n as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeKpi {
    pub episode: usize,
    pub seed: u64,
    pub steps: usize,
    pub termination: Option<Termination>,
    #[serde(flatten)]
    pub kpis: KpiSet,
}

/// KPI report: mean KPIs at the top level plus per-episode values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub kappa2: f64,
    pub kappa_reach: f64,
    pub kappa_dist: f64,
    pub kappa_danger: f64,
    pub checkpoints: Vec<[f64; 2]>,
    pub tolerance: f64,
    pub seed: u64,
    /// How κ_reach treats checkpoints that are never reached.
    pub reach_rule: String,
    pub episodes: Vec<EpisodeKpi>,
}

pub const REACH_RULE: &str =
    "ordered cursor; a checkpoint that is never reached blocks all later ones";

impl KpiReport {
    pub fn new(episodes: Vec<EpisodeKpi>, checkpoints: &[Vec2], tolerance: f64, seed: u64) -> Result<Self> {
        let mean = KpiSet::mean(episodes.iter().map(|e| &e.kpis))
            .ok_or_else(|| Error::InvalidArgument("report needs at least one episode".into()))?;
        Ok(Self {
            kappa2: mean.kappa2,
            kappa_reach: mean.kappa_reach,
            kappa_dist: mean.kappa_dist,
            kappa_danger: mean.kappa_danger,
            checkpoints: checkpoints.iter().map(|p| [p.x, p.y]).collect(),
            tolerance,
            seed,
            reach_rule: REACH_RULE.into(),
            episodes,
        })
    }

    pub fn mean(&self) -> KpiSet {
        KpiSet {
            kappa2: self.kappa2,
            kappa_reach: self.kappa_reach,
            kappa_dist: self.kappa_dist,
            kappa_danger: self.kappa_danger,
        }
    }

    pub fn write(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::from(e).in_file(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(x: f64, y: f64, x1: f64, x2: f64, x7: f64) -> TraceStep {
        TraceStep {
            t: 0.0,
            x,
            y,
            theta: 0.0,
            v: 0.0,
            u1: 0.0,
            u2: 0.0,
            x1,
            x2,
            x3: 1.0,
            x4: 0.0,
            x5: 0.0,
            x6: 0.0,
            x7,
        }
    }

    fn trace_x7(values: &[f64]) -> EpisodeTrace {
        EpisodeTrace {
            steps: values.iter().map(|&d| step(0.0, 0.0, 0.0, 0.0, d)).collect(),
            termination: None,
        }
    }

    #[test]
    fn kappa2_examples() {
        let zero = EpisodeTrace {
            steps: vec![step(0.0, 0.0, 0.0, 0.0, 4.0); 4],
            termination: None,
        };
        assert_eq!(kappa2(&zero).unwrap(), 0.0);
        // reset record is excluded from the mean
        let t = EpisodeTrace {
            steps: vec![
                step(0.0, 0.0, 5.0, 5.0, 4.0),
                step(0.0, 0.0, 1.0, 0.0, 4.0),
                step(0.0, 0.0, 0.0, 1.0, 4.0),
            ],
            termination: None,
        };
        assert_eq!(kappa2(&t).unwrap(), 1.0);
        assert!(kappa2(&EpisodeTrace::default()).is_err());
        assert!(kappa2(&trace_x7(&[4.0])).is_err());
    }

    #[test]
    fn kappa_dist_examples() {
        assert_eq!(kappa_dist(&trace_x7(&[4.0, 4.0, 4.0])).unwrap(), 4.0);
        assert_eq!(kappa_dist(&trace_x7(&[4.0, 1.2, 0.75, 3.0])).unwrap(), 0.75);
        // reset record counts for the minimum
        assert_eq!(kappa_dist(&trace_x7(&[0.5, 1.2, 3.0])).unwrap(), 0.5);
        assert!(kappa_dist(&EpisodeTrace::default()).is_err());
    }

    #[test]
    fn kappa_danger_examples() {
        // threshold (5 − 1)/2 = 2; steps after reset: 1, 3, 1, 5
        let t = trace_x7(&[4.0, 1.0, 3.0, 1.0, 5.0]);
        assert_eq!(kappa_danger(&t, 1.0, 5.0).unwrap(), 0.5);
        assert_eq!(kappa_danger(&trace_x7(&[4.0; 6]), 1.0, 5.0).unwrap(), 0.0);
        assert!(kappa_danger(&EpisodeTrace::default(), 1.0, 5.0).is_err());
    }

    #[test]
    fn kappa_reach_ordering() {
        let pts: Vec<Vec2> = (0..5).map(|i| Vec2::new(i as f64 * 10.0, 0.0)).collect();
        let forward = EpisodeTrace {
            steps: (0..=40).map(|i| step(i as f64, 0.3, 0.0, 0.0, 4.0)).collect(),
            termination: None,
        };
        assert_eq!(kappa_reach(&forward, &pts, 1.0), 1.0);
        let reversed: Vec<Vec2> = pts.iter().rev().copied().collect();
        // Only the first reversed checkpoint (x = 40) is reached, at the end.
        assert_eq!(kappa_reach(&forward, &reversed, 1.0), 1.0 / 5.0);
        assert_eq!(kappa_reach(&forward, &[], 1.0), 0.0);
    }

    #[test]
    fn checkpoints_are_ordered_and_seeded() {
        let path = crate::path::generate_figure8(100).unwrap();
        let a = sample_checkpoints(&path, 50, 7);
        let b = sample_checkpoints(&path, 50, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        assert_ne!(a, sample_checkpoints(&path, 50, 8));
    }

    #[test]
    fn trace_csv_round_trip_and_errors() {
        let t = EpisodeTrace {
            steps: vec![step(1.0, 2.0, 0.1, -0.2, 4.0), step(1.5, 2.1, 0.05, -0.1, 3.1)],
            termination: None,
        };
        let mut buf = Vec::new();
        t.to_csv_writer(&mut buf).unwrap();
        assert!(buf.starts_with(b"t,x,y,theta,v,u1,u2,x1,x2,x3,x4,x5,x6,x7\n"));
        assert_eq!(EpisodeTrace::from_csv_reader(&buf[..]).unwrap(), t);
        let bad = "t,x,y,theta,v,u1,u2,x1,x2,x3,x4,x5,x6,x7\n0,0,0,0,0,0,0,0,0,1,0,0,0,4\n0,0,x,0,0,0,0,0,0,1,0,0,0,4\n";
        assert!(matches!(
            EpisodeTrace::from_csv_reader(bad.as_bytes()),
            Err(Error::Row { row: 3, .. })
        ));
    }
}
