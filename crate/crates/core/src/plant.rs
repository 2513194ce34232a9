//! Simulation plants.
//!
//! Two plants back the experiment runner: the linear design model with an
//! additive disturbance (exactly what the filter reasons about), and a
//! nonlinear miniature-vehicle dynamic bicycle model with Pacejka tire
//! forces. The bicycle model is integrated with classical RK4 under a
//! zero-order input hold, and its discrete map is differentiated numerically
//! to produce the linear design model. Linearizing the discrete map rather
//! than the continuous vector field matches what the filter actually
//! predicts step to step.
//!
//! The filter operates in deviation coordinates around a straight-line
//! operating point: `dx = x - x_op`, `du = u - u_op`.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_math::{numerical_jacobian, LinearSystem};
use crate::polytope::HalfspacePolytope;

/// Slip angles divide by forward speed, so the model is only trusted above
/// this floor (m/s).
pub const MIN_FORWARD_SPEED: f64 = 0.05;

/// Relative finite-difference step for linearizing the discrete vehicle map.
pub const JACOBIAN_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("forward speed {0:.4} m/s is below the slip-angle validity floor")]
    DegenerateSpeed(f64),
    #[error("no steady drive input balances longitudinal resistance at this speed")]
    NoSteadyState,
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Magic-formula lateral tire coefficients for one axle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TireParams {
    /// Stiffness factor (B, dimensionless).
    pub stiffness: f64,
    /// Shape factor (C, dimensionless).
    pub shape: f64,
    /// Peak force (D, newtons).
    pub peak: f64,
}

/// Physical parameters of the dynamic bicycle model. All units SI.
///
/// Defaults follow a published identification of a 1:43 miniature race car;
/// every field can be overridden from the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BicycleParams {
    /// Vehicle mass (kg).
    pub mass: f64,
    /// Yaw moment of inertia (kg m^2).
    pub yaw_inertia: f64,
    /// Distance from center of mass to the front axle (m).
    pub dist_front: f64,
    /// Distance from center of mass to the rear axle (m).
    pub dist_rear: f64,
    pub tire_front: TireParams,
    pub tire_rear: TireParams,
    /// Drive force per unit drive command at standstill (N).
    pub motor_gain: f64,
    /// Speed-proportional reduction of drive force (N s/m).
    pub motor_damping: f64,
    /// Constant rolling resistance (N).
    pub rolling_resistance: f64,
    /// Quadratic aerodynamic drag coefficient (N s^2/m^2).
    pub drag: f64,
    /// Multiplier on the lateral peak forces, in (0, 1]. Lowering it shrinks
    /// the friction budget without touching the tire shape.
    pub friction_scale: f64,
}

impl Default for BicycleParams {
    fn default() -> Self {
        Self {
            mass: 0.041,
            yaw_inertia: 27.8e-6,
            dist_front: 0.029,
            dist_rear: 0.033,
            tire_front: TireParams {
                stiffness: 2.579,
                shape: 1.2,
                peak: 0.192,
            },
            tire_rear: TireParams {
                stiffness: 3.3852,
                shape: 1.2691,
                peak: 0.1737,
            },
            motor_gain: 0.287,
            motor_damping: 0.0545,
            rolling_resistance: 0.0518,
            drag: 0.00035,
            friction_scale: 0.3,
        }
    }
}

impl BicycleParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("dist_front", self.dist_front),
            ("dist_rear", self.dist_rear),
            ("tire_front.peak", self.tire_front.peak),
            ("tire_rear.peak", self.tire_rear.peak),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PlantError::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.friction_scale > 0.0 && self.friction_scale <= 1.0) {
            return Err(PlantError::InvalidParams(format!(
                "friction_scale must lie in (0, 1], got {}",
                self.friction_scale
            )));
        }
        Ok(())
    }
}

/// Named view of the five-dimensional vehicle state vector
/// `[lateral offset, heading, forward speed, lateral speed, yaw rate]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    /// Lateral offset from the lane center (m).
    pub lateral_offset: f64,
    /// Heading relative to the lane direction (rad).
    pub heading: f64,
    /// Body-frame forward speed (m/s).
    pub forward_speed: f64,
    /// Body-frame lateral speed (m/s).
    pub lateral_speed: f64,
    /// Yaw rate (rad/s).
    pub yaw_rate: f64,
}

impl VehicleState {
    pub fn from_vector(x: &DVector<f64>) -> Result<Self, PlantError> {
        if x.len() != 5 {
            return Err(PlantError::Dimension(format!(
                "vehicle state has 5 entries, got {}",
                x.len()
            )));
        }
        Ok(Self {
            lateral_offset: x[0],
            heading: x[1],
            forward_speed: x[2],
            lateral_speed: x[3],
            yaw_rate: x[4],
        })
    }

    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_column_slice(&[
            self.lateral_offset,
            self.heading,
            self.forward_speed,
            self.lateral_speed,
            self.yaw_rate,
        ])
    }
}

/// Lateral magic-formula force `D sin(C atan(B alpha))` for slip angle
/// `alpha`. Odd in `alpha` and bounded by `D` in magnitude.
pub fn pacejka_force(alpha: f64, tire: &TireParams) -> f64 {
    tire.peak * (tire.shape * (tire.stiffness * alpha).atan()).sin()
}

/// Continuous-time derivative of the bicycle model at state `x` under input
/// `u = [steering angle (rad), drive command]`.
///
/// Rear-driven: the drivetrain force acts on the rear axle along the body x
/// axis, the front tire contributes lateral force only.
pub fn bicycle_derivative(
    p: &BicycleParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>, PlantError> {
    let s = VehicleState::from_vector(x)?;
    if u.len() != 2 {
        return Err(PlantError::Dimension(format!(
            "vehicle input has 2 entries, got {}",
            u.len()
        )));
    }
    if s.forward_speed <= MIN_FORWARD_SPEED {
        return Err(PlantError::DegenerateSpeed(s.forward_speed));
    }
    let steering = u[0];
    let drive = u[1];

    let slip_front = steering
        - ((s.lateral_speed + p.dist_front * s.yaw_rate) / s.forward_speed).atan();
    let slip_rear = ((p.dist_rear * s.yaw_rate - s.lateral_speed) / s.forward_speed).atan();
    let force_front = p.friction_scale * pacejka_force(slip_front, &p.tire_front);
    let force_rear = p.friction_scale * pacejka_force(slip_rear, &p.tire_rear);
    let force_drive = (p.motor_gain - p.motor_damping * s.forward_speed) * drive
        - p.rolling_resistance
        - p.drag * s.forward_speed * s.forward_speed;

    let d = VehicleState {
        lateral_offset: s.forward_speed * s.heading.sin() + s.lateral_speed * s.heading.cos(),
        heading: s.yaw_rate,
        forward_speed: (force_drive - force_front * steering.sin()) / p.mass
            + s.lateral_speed * s.yaw_rate,
        lateral_speed: (force_rear + force_front * steering.cos()) / p.mass
            - s.forward_speed * s.yaw_rate,
        yaw_rate: (force_front * p.dist_front * steering.cos() - force_rear * p.dist_rear)
            / p.yaw_inertia,
    };
    Ok(d.to_vector())
}

/// One classical fourth-order Runge-Kutta step of `dx/dt = f(x, u)` with the
/// input held constant over the interval.
pub fn rk4_step<E>(
    f: impl Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>, E>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>, E> {
    let k1 = f(x, u)?;
    let k2 = f(&(x + &k1 * (dt / 2.0)), u)?;
    let k3 = f(&(x + &k2 * (dt / 2.0)), u)?;
    let k4 = f(&(x + &k3 * dt), u)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Discrete vehicle map: RK4 over one sampling period in absolute
/// coordinates.
pub fn vehicle_step(
    p: &BicycleParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>, PlantError> {
    rk4_step(|x, u| bicycle_derivative(p, x, u), x, u, dt)
}

/// Drive command that holds the given forward speed on a straight line,
/// found by bracketing plus bisection on the forward acceleration of the
/// full model (not a closed form, so drivetrain changes stay covered).
pub fn find_steady_drive(p: &BicycleParams, speed: f64) -> Result<f64, PlantError> {
    if speed <= MIN_FORWARD_SPEED {
        return Err(PlantError::DegenerateSpeed(speed));
    }
    let x_op = DVector::from_column_slice(&[0.0, 0.0, speed, 0.0, 0.0]);
    let accel = |drive: f64| -> Result<f64, PlantError> {
        let u = DVector::from_column_slice(&[0.0, drive]);
        Ok(bicycle_derivative(p, &x_op, &u)?[2])
    };

    // Expand a bracket [lo, hi] with accel(lo) <= 0 <= accel(hi).
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    if accel(lo)? > 0.0 {
        while accel(lo)? > 0.0 {
            lo -= hi.abs().max(1.0);
            if lo < -1e3 {
                return Err(PlantError::NoSteadyState);
            }
        }
    } else {
        while accel(hi)? < 0.0 {
            hi *= 2.0;
            if hi > 1e3 {
                return Err(PlantError::NoSteadyState);
            }
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if accel(mid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Linear design model obtained from the nonlinear plant, together with the
/// operating point defining the deviation coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linearization {
    pub system: LinearSystem,
    /// Absolute state the deviations are measured from.
    pub state_op: DVector<f64>,
    /// Absolute input the input deviations are measured from.
    pub input_op: DVector<f64>,
}

/// Differentiate the discrete RK4 vehicle map at the straight-line steady
/// state for the given speed.
pub fn linearize_vehicle(
    p: &BicycleParams,
    speed: f64,
    dt: f64,
) -> Result<Linearization, PlantError> {
    linearize_vehicle_with_eps(p, speed, dt, JACOBIAN_EPS)
}

pub fn linearize_vehicle_with_eps(
    p: &BicycleParams,
    speed: f64,
    dt: f64,
    eps: f64,
) -> Result<Linearization, PlantError> {
    p.validate()?;
    let drive = find_steady_drive(p, speed)?;
    let state_op = DVector::from_column_slice(&[0.0, 0.0, speed, 0.0, 0.0]);
    let input_op = DVector::from_column_slice(&[0.0, drive]);
    let (a, b) = numerical_jacobian(
        |x, u| vehicle_step(p, x, u, dt),
        &state_op,
        &input_op,
        eps,
    )?;
    let system = LinearSystem::new(a, b)
        .map_err(|e| PlantError::InvalidParams(format!("linearization failed: {e}")))?;
    Ok(Linearization {
        system,
        state_op,
        input_op,
    })
}

/// How well a disturbance set covers the one-step gap between the nonlinear
/// plant and its linear design model.
#[derive(Debug, Clone, Copy)]
pub struct CoverageStats {
    /// Fraction of sampled (state, input) pairs whose model residual lies in
    /// the disturbance set.
    pub inside_fraction: f64,
    /// Largest halfspace violation of any sampled residual, in the
    /// disturbance set's row scaling. Nonpositive when everything fits.
    pub worst_violation: f64,
}

/// Sample deviation states and inputs uniformly from centered boxes and
/// measure how often the residual `nonlinear_step - linear_step` lands in
/// `disturbance`. The linear model only approximates the plant, so coverage
/// below one is expected; the caller decides what rate is acceptable.
pub fn residual_coverage(
    p: &BicycleParams,
    lin: &Linearization,
    dt: f64,
    state_halfwidth: &DVector<f64>,
    input_halfwidth: &DVector<f64>,
    disturbance: &HalfspacePolytope,
    samples: usize,
    seed: u64,
) -> Result<CoverageStats, PlantError> {
    let n = lin.state_op.len();
    let m = lin.input_op.len();
    if state_halfwidth.len() != n || input_halfwidth.len() != m {
        return Err(PlantError::Dimension(
            "halfwidth vectors must match the operating point".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inside = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let mut dx = DVector::zeros(n);
        for i in 0..n {
            dx[i] = rng.random_range(-state_halfwidth[i]..=state_halfwidth[i]);
        }
        let mut du = DVector::zeros(m);
        for j in 0..m {
            du[j] = rng.random_range(-input_halfwidth[j]..=input_halfwidth[j]);
        }
        let x_abs = &lin.state_op + &dx;
        let u_abs = &lin.input_op + &du;
        let next = vehicle_step(p, &x_abs, &u_abs, dt)?;
        let predicted = &lin.system.a * &dx + &lin.system.b * &du;
        let residual = (next - &lin.state_op) - predicted;
        let violation = disturbance.violation(&residual);
        if violation <= 1e-9 {
            inside += 1;
        }
        worst = worst.max(violation);
    }
    Ok(CoverageStats {
        inside_fraction: inside as f64 / samples as f64,
        worst_violation: worst,
    })
}
