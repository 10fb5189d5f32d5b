//! The driving environment: observation, reward and episode lifecycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::cos_between;
use crate::grid::{cast_rays, OccupancyGrid, RangeScan, SensorParams};
use crate::path::{Path, ReferenceSegment, DEFAULT_LOOKAHEAD};
use crate::scenario::Scenario;
use crate::vehicle::{action_index_to_control, step_dynamics, Control, VehicleState};

pub const OBS_DIM: usize = 7;

/// The network input `x = (x₁, …, x₇)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    /// Cross-track error clipped to `[−δ, δ]`.
    pub cross_track: f64,
    /// Target speed at the segment end minus current speed.
    pub speed_error: f64,
    /// Cosine between the heading and the reference segment direction.
    pub heading_cos: f64,
    pub prev_accel: f64,
    pub prev_steer: f64,
    /// Cosine between the heading and the ray with the shortest reading.
    pub obstacle_cos: f64,
    /// Shortest ray reading, in `[0, ρ₂ − ρ₁]`.
    pub obstacle_distance: f64,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [
            self.cross_track,
            self.speed_error,
            self.heading_cos,
            self.prev_accel,
            self.prev_steer,
            self.obstacle_cos,
            self.obstacle_distance,
        ]
    }

    pub fn from_array(x: [f64; OBS_DIM]) -> Self {
        Self {
            cross_track: x[0],
            speed_error: x[1],
            heading_cos: x[2],
            prev_accel: x[3],
            prev_steer: x[4],
            obstacle_cos: x[5],
            obstacle_distance: x[6],
        }
    }
}

/// Weights of the shaped reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    /// Scale of the cross-track term.
    pub alpha1: f64,
    /// Scale of the speed term.
    pub alpha2: f64,
    /// Scale of the heading term.
    pub alpha3: f64,
    /// Scale of the obstacle-steering penalty.
    pub alpha4: f64,
    /// Width of the cross-track Gaussian.
    pub beta1: f64,
    /// Width of the speed Gaussian.
    pub beta2: f64,
    /// Fraction of the sensing range below which the obstacle penalty applies.
    pub lambda: f64,
    /// Added on the step that ends in a collision.
    pub r_crash: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 1.0,
            alpha4: 1.5,
            beta1: 0.25,
            beta2: 0.25,
            lambda: 0.75,
            r_crash: -250.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        let alphas = [self.alpha1, self.alpha2, self.alpha3, self.alpha4];
        if alphas.iter().any(|a| !(*a >= 0.0))
            || !(self.beta1 > 0.0 && self.beta2 > 0.0)
            || !(0.0..=1.0).contains(&self.lambda)
            || !self.r_crash.is_finite()
        {
            return Err(Error::InvalidArgument(format!(
                "invalid reward parameters {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    /// Cross-track clip `δ`, m.
    pub delta: f64,
    /// Distance to the final waypoint that counts as arrival, m.
    pub goal_tol: f64,
    /// Clearance between robot disk and obstacle that counts as a crash, m.
    pub crash_tol: f64,
    /// Episode step limit.
    pub n_max: usize,
    pub seed: u64,
    #[serde(default = "default_lookahead")]
    pub lookahead: f64,
}

fn default_lookahead() -> f64 {
    DEFAULT_LOOKAHEAD
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            delta: 2.0,
            goal_tol: 1.0,
            crash_tol: 0.05,
            n_max: 2000,
            seed: 0,
            lookahead: DEFAULT_LOOKAHEAD,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.goal_tol > 0.0 && self.crash_tol >= 0.0)
            || self.n_max == 0
            || !(self.lookahead >= 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "invalid environment parameters {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Goal,
    Crash,
    Timeout,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Goal => "goal",
            Termination::Crash => "crash",
            Termination::Timeout => "timeout",
        })
    }
}

/// Diagnostics that are not part of the observation.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub cross_track_error: f64,
    pub segment: usize,
    pub scan: RangeScan,
    pub state: VehicleState,
    pub control: Control,
    /// Exact distance from the robot disk to the nearest obstacle.
    pub clearance: f64,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub termination: Option<Termination>,
    pub info: StepInfo,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.termination.is_some()
    }
}

/// Assembles the network input from the current pose, reference segment and scan.
pub fn build_observation(
    state: &VehicleState,
    segment: &ReferenceSegment,
    scan: &RangeScan,
    path: &Path,
    delta: f64,
) -> Observation {
    let heading = state.heading_vector();
    let (ray, distance) = scan.min_ray();
    Observation {
        cross_track: segment.cross_track_error.clamp(-delta, delta),
        speed_error: path.waypoints()[segment.index + 1].target_speed - state.speed,
        heading_cos: cos_between(heading, segment.direction()),
        prev_accel: state.prev_control.accel,
        prev_steer: state.prev_control.steer,
        // ray angles are already relative to the heading
        obstacle_cos: scan.ray_angles[ray].cos(),
        obstacle_distance: distance,
    }
}

/// Path-following part `r_pf = −1 + (1 + r₂ r₃)(1 + r₁)`.
pub fn path_following_reward(obs: &Observation, params: &RewardParams) -> f64 {
    let r1 = params.alpha1 * (-obs.cross_track * obs.cross_track / (2.0 * params.beta1)).exp();
    let r2 = params.alpha2 * (-obs.speed_error * obs.speed_error / (2.0 * params.beta2)).exp();
    let r3 = params.alpha3 * obs.heading_cos;
    -1.0 + (1.0 + r2 * r3) * (1.0 + r1)
}

/// Obstacle part: `−α₄ x₆` once the nearest reading drops to `λ (ρ₂ − ρ₁)`.
pub fn avoidance_reward(obs: &Observation, params: &RewardParams, sensor: &SensorParams) -> f64 {
    if obs.obstacle_distance <= params.lambda * sensor.max_range() {
        -params.alpha4 * obs.obstacle_cos
    } else {
        0.0
    }
}

pub fn compute_reward(
    obs: &Observation,
    crashed: bool,
    params: &RewardParams,
    sensor: &SensorParams,
) -> f64 {
    let crash = if crashed { params.r_crash } else { 0.0 };
    avoidance_reward(obs, params, sensor) + path_following_reward(obs, params) + crash
}

/// One episode at a time over a fixed scenario.
#[derive(Debug, Clone)]
pub struct Env {
    scenario: Scenario,
    grid: OccupancyGrid,
    state: VehicleState,
    segment: usize,
    steps: usize,
    seed: u64,
    active: bool,
}

impl Env {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let grid = OccupancyGrid::empty(&scenario.grid, Default::default())?;
        let seed = scenario.env.seed;
        let mut env = Self {
            scenario,
            grid,
            state: VehicleState::default(),
            segment: 0,
            steps: 0,
            seed,
            active: false,
        };
        env.place_at_start();
        Ok(env)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    /// Swaps in a new scenario; the next call must be [`Env::reset`].
    pub fn set_scenario(&mut self, scenario: Scenario) -> Result<()> {
        scenario.validate()?;
        if scenario.grid != self.scenario.grid {
            self.grid = OccupancyGrid::empty(&scenario.grid, Default::default())?;
        }
        self.scenario = scenario;
        self.active = false;
        Ok(())
    }

    fn place_at_start(&mut self) {
        let w = self.scenario.path.waypoints();
        let dir = w[1].position - w[0].position;
        self.state = VehicleState::at_rest(w[0].position, dir.y.atan2(dir.x));
        self.segment = 0;
        self.steps = 0;
    }

    /// Puts the vehicle at rest on the first waypoint facing the second.
    /// The environment itself draws no randomness; `seed` is recorded so
    /// traces can name the episode that produced them.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.seed = seed;
        self.place_at_start();
        let (segment, scan, _) = self.sense()?;
        self.active = true;
        Ok(build_observation(
            &self.state,
            &segment,
            &scan,
            &self.scenario.path,
            self.scenario.env.delta,
        ))
    }

    fn sense(&mut self) -> Result<(ReferenceSegment, RangeScan, f64)> {
        let s = &self.scenario;
        let pos = self.state.position;
        self.grid.fill(&s.obstacles, s.grid.centered_origin(pos));
        let scan = cast_rays(&self.grid, pos, self.state.heading, &s.sensor)?;
        let segment = s
            .path
            .select_reference_segment(pos, self.segment, s.env.lookahead)?;
        let clearance = s
            .obstacles
            .iter()
            .map(|o| o.distance(pos))
            .fold(f64::INFINITY, f64::min)
            - s.sensor.inner_radius;
        Ok((segment, scan, clearance))
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if !self.active {
            return Err(Error::InvalidState(
                "step called on a finished or un-reset environment".into(),
            ));
        }
        let control = action_index_to_control(action)?;
        self.state = step_dynamics(&self.state, control, &self.scenario.vehicle);
        self.steps += 1;
        let (segment, scan, clearance) = self.sense()?;
        self.segment = segment.index;
        let s = &self.scenario;
        let observation = build_observation(&self.state, &segment, &scan, &s.path, s.env.delta);
        let crashed = clearance <= s.env.crash_tol;
        let reward = compute_reward(&observation, crashed, &s.reward, &s.sensor);
        let at_goal = segment.index + 1 == s.path.segment_count()
            && self.state.position.distance(s.path.last().position) <= s.env.goal_tol;
        let termination = if crashed {
            Some(Termination::Crash)
        } else if at_goal {
            Some(Termination::Goal)
        } else if self.steps >= s.env.n_max {
            Some(Termination::Timeout)
        } else {
            None
        };
        if termination.is_some() {
            self.active = false;
        }
        Ok(StepResult {
            observation,
            reward,
            termination,
            info: StepInfo {
                cross_track_error: segment.cross_track_error,
                segment: segment.index,
                scan,
                state: self.state,
                control,
                clearance,
                step: self.steps,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::grid::Obstacle;
    use crate::path::Waypoint;
    use crate::scenario::{figure8_scenario, straight_scenario};
    use crate::vehicle::{ACTION_COUNT, LEVELS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn obs(x: [f64; 7]) -> Observation {
        Observation::from_array(x)
    }

    #[test]
    fn perfect_tracking_reward_is_three() {
        let r = compute_reward(
            &obs([0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 4.0]),
            false,
            &RewardParams::default(),
            &SensorParams::default(),
        );
        assert_eq!(r, 3.0);
    }

    #[test]
    fn avoidance_threshold_is_inclusive() {
        let p = RewardParams::default();
        let s = SensorParams::default();
        let at = obs([0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 3.0]);
        assert_eq!(avoidance_reward(&at, &p, &s), -1.5);
        assert_eq!(compute_reward(&at, false, &p, &s), 3.0 - 1.5);
        let beyond = obs([0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 3.0 + 1e-9]);
        assert_eq!(avoidance_reward(&beyond, &p, &s), 0.0);
    }

    #[test]
    fn crash_adds_penalty() {
        let p = RewardParams::default();
        let s = SensorParams::default();
        let o = obs([0.3, -0.2, 0.9, 0.1, 0.2, 0.5, 3.5]);
        let diff = compute_reward(&o, true, &p, &s) - compute_reward(&o, false, &p, &s);
        assert_eq!(diff, -250.0);
    }

    #[test]
    fn observation_clips_and_aligns() {
        let path = Path::new(vec![
            Waypoint::new(Vec2::new(0.0, 0.0), 2.0, 0.0),
            Waypoint::new(Vec2::new(10.0, 0.0), 2.5, 0.0),
        ])
        .unwrap();
        let state = VehicleState {
            speed: 1.0,
            ..VehicleState::at_rest(Vec2::new(5.0, 10.0), 0.0)
        };
        let seg = path.select_reference_segment(state.position, 0, 3.0).unwrap();
        assert_eq!(seg.cross_track_error, 10.0);
        let scan = RangeScan {
            distances: vec![4.0; 15],
            ray_angles: (0..15).map(|i| SensorParams::default().ray_angle(i)).collect(),
        };
        let o = build_observation(&state, &seg, &scan, &path, 2.0);
        assert_eq!(o.cross_track, 2.0);
        assert_eq!(o.heading_cos, 1.0);
        assert_eq!(o.speed_error, 1.5);
        assert_eq!(o.obstacle_distance, 4.0);
        // all rays tie; ray 0 wins
        assert!((o.obstacle_cos - (-2.0 * std::f64::consts::PI / 3.0).cos()).abs() < 1e-15);
    }

    #[test]
    fn reset_places_vehicle_at_curve_start() {
        let mut env = Env::new(figure8_scenario().unwrap()).unwrap();
        let o1 = env.reset(3).unwrap();
        let p = env.state().position;
        assert!((p.x - 20.0).abs() < 1e-12 && (p.y - 22.5).abs() < 1e-12);
        assert_eq!(env.state().speed, 0.0);
        assert_eq!(o1.obstacle_distance, 4.0);
        let o2 = env.reset(3).unwrap();
        assert_eq!(o1, o2);
        assert!((o1.heading_cos - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_requires_reset() {
        let mut env = Env::new(straight_scenario(20.0).unwrap()).unwrap();
        assert!(matches!(env.step(0), Err(Error::InvalidState(_))));
        env.reset(0).unwrap();
        assert!(env.step(ACTION_COUNT).is_err());
    }

    /// Alternates the two steering levels closest to zero at full throttle.
    fn straight_action(step: usize) -> usize {
        let i = LEVELS - 1;
        let j = if step % 2 == 0 { 5 } else { 4 };
        i * LEVELS + j
    }

    #[test]
    fn straight_drive_reaches_goal() {
        let mut env = Env::new(straight_scenario(30.0).unwrap()).unwrap();
        env.reset(0).unwrap();
        let mut last = None;
        for k in 0..2000 {
            let r = env.step(straight_action(k)).unwrap();
            if r.done() {
                last = r.termination;
                break;
            }
        }
        assert_eq!(last, Some(Termination::Goal));
        assert!(matches!(env.step(0), Err(Error::InvalidState(_))));
    }

    #[test]
    fn driving_into_obstacle_crashes() {
        let mut sc = straight_scenario(30.0).unwrap();
        sc.obstacles.push(Obstacle::circle(Vec2::new(10.0, 0.0), 0.75));
        let mut env = Env::new(sc).unwrap();
        env.reset(0).unwrap();
        let mut last = None;
        for k in 0..2000 {
            let r = env.step(straight_action(k)).unwrap();
            if r.done() {
                last = Some(r);
                break;
            }
        }
        let last = last.unwrap();
        assert_eq!(last.termination, Some(Termination::Crash));
        assert!(last.reward < -240.0);
        assert!(last.info.clearance <= 0.05);
    }

    #[test]
    fn timeout_after_step_limit() {
        let mut sc = straight_scenario(30.0).unwrap();
        sc.env.n_max = 5;
        let mut env = Env::new(sc).unwrap();
        env.reset(0).unwrap();
        // brake-only keeps the vehicle at rest
        let brake = 0;
        for _ in 0..4 {
            assert!(env.step(brake).unwrap().termination.is_none());
        }
        assert_eq!(env.step(brake).unwrap().termination, Some(Termination::Timeout));
    }

    #[test]
    fn episodes_are_deterministic() {
        let mut sc = figure8_scenario().unwrap();
        sc.obstacles.push(Obstacle::circle(Vec2::new(60.0, 22.5), 0.75));
        let run = || {
            let mut env = Env::new(sc.clone()).unwrap();
            env.reset(9).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut out = Vec::new();
            for _ in 0..300 {
                let r = env.step(rng.random_range(0..ACTION_COUNT)).unwrap();
                out.push((r.info.state, r.reward.to_bits()));
                if r.done() {
                    break;
                }
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn observation_bounds_hold_under_random_driving() {
        let mut sc = figure8_scenario().unwrap();
        sc.obstacles.push(Obstacle::circle(Vec2::new(40.0, 22.5), 1.0));
        sc.obstacles.push(Obstacle::rect(Vec2::new(60.0, 25.0), 2.0, 1.0));
        let sensor = sc.sensor;
        let vmax = sc.vehicle.max_speed;
        let mut env = Env::new(sc).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut o = env.reset(0).unwrap();
        for _ in 0..1_000_000 {
            let x = o.to_array();
            assert!(x[0].abs() <= 2.0);
            assert!(x[1].abs() <= vmax);
            assert!((-1.0..=1.0).contains(&x[2]));
            assert!((-0.5..=1.0).contains(&x[3]) && (-1.0..=1.0).contains(&x[4]));
            assert!((-1.0..=1.0).contains(&x[5]));
            assert!((0.0..=sensor.max_range()).contains(&x[6]));
            let r = env.step(rng.random_range(0..ACTION_COUNT)).unwrap();
            assert!(r.reward.is_finite());
            o = if r.done() { env.reset(0).unwrap() } else { r.observation };
        }
    }
}
