//! Scenario bundles, the scenario file format and the benchmark scenarios.

use std::path::{Path as FsPath, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{EnvParams, RewardParams};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::grid::{read_obstacles_csv, GridSpec, Obstacle, SensorParams};
use crate::path::{generate_figure8, Path, Waypoint, DEFAULT_FIGURE8_WAYPOINTS};
use crate::vehicle::VehicleParams;

/// Everything an episode needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub path: Path,
    pub obstacles: Vec<Obstacle>,
    pub vehicle: VehicleParams,
    pub reward: RewardParams,
    pub env: EnvParams,
    pub sensor: SensorParams,
    pub grid: GridSpec,
}

impl Scenario {
    pub fn new(path: Path, obstacles: Vec<Obstacle>) -> Self {
        Self {
            path,
            obstacles,
            vehicle: VehicleParams::default(),
            reward: RewardParams::default(),
            env: EnvParams::default(),
            sensor: SensorParams::default(),
            grid: GridSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.reward.validate()?;
        self.env.validate()?;
        self.sensor.validate()?;
        self.grid.validate()?;
        self.path.check_speeds(self.vehicle.max_speed)?;
        for o in &self.obstacles {
            o.validate()?;
        }
        Ok(())
    }

    /// Same scenario with one extra circular obstacle centred on the path.
    ///
    /// The centre is drawn uniformly in the waypoint-index parameter from
    /// `seed`, rejecting spots closer than `min_start_distance` to the first
    /// or last waypoint.
    pub fn with_obstacle_on_path(&self, seed: u64, radius: f64, min_start_distance: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = sample_point_on_path(&self.path, &mut rng, min_start_distance)?;
        let mut out = self.clone();
        let obstacle = Obstacle::circle(center, radius);
        obstacle.validate()?;
        out.obstacles.push(obstacle);
        Ok(out)
    }
}

/// Draws a point uniformly in the waypoint-index parameter, away from the
/// path's endpoints.
pub fn sample_point_on_path(path: &Path, rng: &mut impl Rng, min_end_distance: f64) -> Result<Vec2> {
    let span = (path.len() - 1) as f64;
    let start = path.first().position;
    let end = path.last().position;
    for _ in 0..10_000 {
        let p = path.point_at_index_param(rng.random_range(0.0..span));
        if p.distance(start) >= min_end_distance && p.distance(end) >= min_end_distance {
            return Ok(p);
        }
    }
    Err(Error::InvalidArgument(format!(
        "no point on the path is {min_end_distance} m away from both ends"
    )))
}

/// Obstacle-free figure-8 with the benchmark parameters.
pub fn figure8_scenario() -> Result<Scenario> {
    Ok(Scenario::new(generate_figure8(DEFAULT_FIGURE8_WAYPOINTS)?, Vec::new()))
}

/// A straight line along +x, waypoints every metre, 2 m/s target speed.
pub fn straight_scenario(length: f64) -> Result<Scenario> {
    let n = length.ceil().max(1.0) as usize;
    let waypoints = (0..=n)
        .map(|i| Waypoint::new(Vec2::new(length * i as f64 / n as f64, 0.0), 2.0, 0.0))
        .collect();
    Ok(Scenario::new(Path::new(waypoints)?, Vec::new()))
}

/// On-disk scenario: a JSON object referencing path and obstacle CSVs.
///
/// CSV paths are resolved relative to the JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub path_csv: PathBuf,
    pub obstacles_csv: PathBuf,
    pub vehicle_params: VehicleParams,
    pub reward_params: RewardParams,
    pub env_params: EnvParams,
    #[serde(default)]
    pub sensor_params: SensorParams,
    #[serde(default)]
    pub grid: GridSpec,
}

impl ScenarioFile {
    pub fn read(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(path))
    }

    pub fn write(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::from(e).in_file(path))
    }

    fn resolve(base: &FsPath, p: &FsPath) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Paths of the referenced CSV files, resolved against `json_path`.
    pub fn data_files(&self, json_path: &FsPath) -> [PathBuf; 2] {
        let base = json_path.parent().unwrap_or(FsPath::new("."));
        [
            Self::resolve(base, &self.path_csv),
            Self::resolve(base, &self.obstacles_csv),
        ]
    }

    pub fn load(&self, json_path: &FsPath) -> Result<Scenario> {
        let [path_csv, obstacles_csv] = self.data_files(json_path);
        let scenario = Scenario {
            path: Path::read_csv(&path_csv)?,
            obstacles: read_obstacles_csv(&obstacles_csv)?,
            vehicle: self.vehicle_params,
            reward: self.reward_params,
            env: self.env_params,
            sensor: self.sensor_params,
            grid: self.grid,
        };
        scenario.validate().map_err(|e| e.in_file(json_path))?;
        Ok(scenario)
    }
}

/// Reads a scenario JSON and the CSVs it references.
pub fn load_scenario(json_path: impl AsRef<FsPath>) -> Result<Scenario> {
    let json_path = json_path.as_ref();
    ScenarioFile::read(json_path)?.load(json_path)
}

/// Writes `scenario` as `<dir>/<name>.json` plus its two CSVs.
pub fn save_scenario(scenario: &Scenario, dir: impl AsRef<FsPath>, name: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let path_csv = format!("{name}_path.csv");
    let obstacles_csv = format!("{name}_obstacles.csv");
    scenario.path.write_csv(dir.join(&path_csv))?;
    crate::grid::write_obstacles_csv(dir.join(&obstacles_csv), &scenario.obstacles)?;
    let file = ScenarioFile {
        path_csv: path_csv.into(),
        obstacles_csv: obstacles_csv.into(),
        vehicle_params: scenario.vehicle,
        reward_params: scenario.reward,
        env_params: scenario.env,
        sensor_params: scenario.sensor,
        grid: scenario.grid,
    };
    let json = dir.join(format!("{name}.json"));
    file.write(&json)?;
    Ok(json)
}

/// Git-style content hash: SHA-256 over `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn file_hash(path: impl AsRef<FsPath>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    Ok(content_hash(&bytes))
}
