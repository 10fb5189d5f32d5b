//! Discrete control grid and kinematic bicycle dynamics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{normalize_angle, Vec2};

/// Levels per control axis.
pub const LEVELS: usize = 11;
/// Size of the discrete action set.
pub const ACTION_COUNT: usize = LEVELS * LEVELS;

/// Normalised controls: `accel` in `[−½, 1]` scales the maximum
/// acceleration, `steer` in `[−1, 1]` the maximum steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub accel: f64,
    pub steer: f64,
}

impl Control {
    pub const fn new(accel: f64, steer: f64) -> Self {
        Self { accel, steer }
    }

    pub fn in_control_space(&self) -> bool {
        (-0.5..=1.0).contains(&self.accel) && (-1.0..=1.0).contains(&self.steer)
    }
}

/// Acceleration level `i ∈ 1..=11`: `−0.5 + 1.5 i / 11`.
pub fn accel_level(i: usize) -> f64 {
    -0.5 + 1.5 * i as f64 / LEVELS as f64
}

/// Steering level `j ∈ 1..=11`: `−1 + 2 j / 11`.
pub fn steer_level(j: usize) -> f64 {
    -1.0 + 2.0 * j as f64 / LEVELS as f64
}

/// Row-major lookup: `index = 11 (i − 1) + (j − 1)`.
pub fn action_index_to_control(index: usize) -> Result<Control> {
    if index >= ACTION_COUNT {
        return Err(Error::InvalidArgument(format!(
            "action index {index} outside 0..{ACTION_COUNT}"
        )));
    }
    Ok(Control::new(
        accel_level(index / LEVELS + 1),
        steer_level(index % LEVELS + 1),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// `a_max`, m/s².
    pub max_accel: f64,
    /// `ϑ_max`, rad.
    pub max_steer: f64,
    /// Distance between axles, m.
    pub wheelbase: f64,
    pub max_speed: f64,
    /// Integration step, s.
    pub dt: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            max_accel: 5.0,
            max_steer: PI / 6.0,
            wheelbase: 1.0,
            max_speed: 5.0,
            dt: 0.1,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.max_accel,
            self.max_steer,
            self.wheelbase,
            self.max_speed,
            self.dt,
        ]
        .iter()
        .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.max_steer >= PI / 2.0 {
            return Err(Error::InvalidArgument(format!(
                "vehicle parameters must be positive with max_steer < π/2: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// Rear-axle position.
    pub position: Vec2,
    /// Heading in (−π, π].
    pub heading: f64,
    /// Non-negative linear speed.
    pub speed: f64,
    pub prev_control: Control,
}

impl VehicleState {
    pub fn at_rest(position: Vec2, heading: f64) -> Self {
        Self {
            position,
            heading: normalize_angle(heading),
            speed: 0.0,
            prev_control: Control::default(),
        }
    }

    pub fn heading_vector(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }
}

/// One explicit-Euler step of the rear-axle kinematic bicycle.
///
/// Position and heading advance with the speed at the start of the step;
/// the speed then changes by `accel · a_max · dt` and is clamped to
/// `[0, v_max]`, so braking never turns into reversing.
pub fn step_dynamics(state: &VehicleState, control: Control, params: &VehicleParams) -> VehicleState {
    let accel = control.accel * params.max_accel;
    let steer_angle = control.steer * params.max_steer;
    let (sin, cos) = state.heading.sin_cos();
    let v = state.speed;
    let dt = params.dt;
    VehicleState {
        position: Vec2::new(
            state.position.x + v * cos * dt,
            state.position.y + v * sin * dt,
        ),
        heading: normalize_angle(state.heading + v / params.wheelbase * steer_angle.tan() * dt),
        speed: (v + accel * dt).clamp(0.0, params.max_speed),
        prev_control: control,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_corners() {
        assert_eq!(action_index_to_control(120).unwrap(), Control::new(1.0, 1.0));
        let c = action_index_to_control(0).unwrap();
        assert!((c.accel - (-0.5 + 1.5 / 11.0)).abs() < 1e-15);
        assert!((c.steer - (-1.0 + 2.0 / 11.0)).abs() < 1e-15);
        assert!((c.accel + 0.363636).abs() < 1e-6);
        assert!((c.steer + 0.818182).abs() < 1e-6);
        assert!(action_index_to_control(121).is_err());
    }

    #[test]
    fn grid_is_row_major_and_complete() {
        assert_eq!(ACTION_COUNT, 121);
        for i in 1..=LEVELS {
            for j in 1..=LEVELS {
                let c = action_index_to_control(LEVELS * (i - 1) + (j - 1)).unwrap();
                assert_eq!(c, Control::new(accel_level(i), steer_level(j)));
                assert!(c.in_control_space());
            }
        }
    }

    #[test]
    fn zero_speed_is_fixed_point() {
        let s = VehicleState::at_rest(Vec2::new(1.0, 2.0), 0.3);
        let next = step_dynamics(&s, Control::new(0.0, 1.0), &VehicleParams::default());
        assert_eq!(next.position, s.position);
        assert_eq!(next.heading, s.heading);
    }

    #[test]
    fn straight_line_motion() {
        let s = VehicleState {
            speed: 1.0,
            ..VehicleState::at_rest(Vec2::ZERO, 0.0)
        };
        let next = step_dynamics(&s, Control::new(0.0, 0.0), &VehicleParams::default());
        assert!((next.position.x - 0.1).abs() < 1e-15);
        assert_eq!(next.position.y, 0.0);
    }

    #[test]
    fn full_steer_turn_rate() {
        let s = VehicleState {
            speed: 1.0,
            ..VehicleState::at_rest(Vec2::ZERO, 0.0)
        };
        let next = step_dynamics(&s, Control::new(0.0, 1.0), &VehicleParams::default());
        assert!((next.heading - 0.1 * (PI / 6.0).tan()).abs() < 1e-15);
        assert!((next.heading - 0.05774).abs() < 1e-5);
    }

    #[test]
    fn braking_stops_without_reversing() {
        let s = VehicleState {
            speed: 0.1,
            ..VehicleState::at_rest(Vec2::ZERO, 0.0)
        };
        let next = step_dynamics(&s, Control::new(-0.5, 0.0), &VehicleParams::default());
        assert_eq!(next.speed, 0.0);
    }

    #[test]
    fn params_validated() {
        assert!(VehicleParams::default().validate().is_ok());
        let bad = VehicleParams {
            max_steer: PI / 2.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = VehicleParams {
            dt: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn speed_and_turn_bounds(
            speed in 0.0..5.0f64,
            heading in -PI..PI,
            index in 0..ACTION_COUNT,
        ) {
            let p = VehicleParams::default();
            let s = VehicleState { speed, ..VehicleState::at_rest(Vec2::ZERO, heading) };
            let next = step_dynamics(&s, action_index_to_control(index).unwrap(), &p);
            prop_assert!(next.speed >= 0.0 && next.speed <= p.max_speed);
            prop_assert!((next.speed - s.speed).abs() <= p.max_accel * p.dt + 1e-12);
            let dh = normalize_angle(next.heading - s.heading).abs();
            prop_assert!(dh <= p.max_speed / p.wheelbase * p.max_steer.tan() * p.dt + 1e-12);
            prop_assert!(next.heading > -PI && next.heading <= PI);
        }

        #[test]
        fn zero_steer_stays_on_heading_line(
            heading in -PI..PI,
            accels in prop::collection::vec(0usize..LEVELS, 1..50),
        ) {
            let p = VehicleParams::default();
            let mut s = VehicleState::at_rest(Vec2::ZERO, heading);
            let normal = Vec2::from_angle(heading + PI / 2.0);
            for i in accels {
                // the grid has no zero-steer level
                let c = Control::new(accel_level(i + 1), 0.0);
                s = step_dynamics(&s, c, &p);
                prop_assert_eq!(s.heading, normalize_angle(heading));
                prop_assert!(s.position.dot(normal).abs() < 1e-12 * (1.0 + s.position.norm()));
            }
        }
    }
}
