//! Equations of motion of the vehicle and a fixed-step RK4 integrator.

use std::io::{self, Write};

use nalgebra::{Matrix3, SVector, Vector3};

use crate::aero::body_wrench;
use crate::error::DynamicsError;
use crate::io::format_sig;
use crate::model::VehicleModel;

/// Full simulation state. Rates are body-frame, position and velocity are
/// inertial, `attitude` maps body to inertial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullState {
    pub omega_b: Vector3<f64>,
    /// Rotor speed relative to the body (rad/s).
    pub omega_p: f64,
    pub current: f64,
    /// Fixed spatial spin axis expressed in the body frame.
    pub spin_axis: Vector3<f64>,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Matrix3<f64>,
}

impl Default for FullState {
    fn default() -> Self {
        Self {
            omega_b: Vector3::zeros(),
            omega_p: 0.0,
            current: 0.0,
            spin_axis: Vector3::z(),
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            attitude: Matrix3::identity(),
        }
    }
}

/// Switches for isolating parts of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DynamicsOptions {
    /// All aerodynamic forces and moments.
    pub aerodynamics: bool,
    /// Rotor angular-momentum terms in the rotational equation.
    pub rotor_coupling: bool,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        Self {
            aerodynamics: true,
            rotor_coupling: true,
        }
    }
}

pub const DEFAULT_DT: f64 = 1e-4;

/// Rotor and motor-current rates: `I_p ω̇_p = K_τ i − τ_dp`,
/// `L_m di/dt = V_m − R_m i − K_v ω_p`.
pub fn motor_rates(v: &VehicleModel, state: &FullState, v_m: f64) -> (f64, f64) {
    motor_rates_with(v, &DynamicsOptions::default(), state, v_m)
}

fn motor_rates_with(
    v: &VehicleModel,
    opts: &DynamicsOptions,
    state: &FullState,
    v_m: f64,
) -> (f64, f64) {
    let b = &v.base;
    let load = if opts.aerodynamics {
        body_wrench(v, state.omega_p, &state.omega_b).motor_load
    } else {
        0.0
    };
    let domega_p = if v.inertia.rotor_axial > 0.0 {
        (b.k_tau_m * state.current - load) / v.inertia.rotor_axial
    } else {
        0.0
    };
    let di = (v_m - b.r_m * state.current - b.k_v * state.omega_p) / b.l_m;
    (domega_p, di)
}

pub fn motor_power(v_m: f64, current: f64) -> f64 {
    v_m * current
}

/// The vector acted on by `sk(ω_B)` in the rotational equation:
/// `I_T ω_B + I_p (ω_p·axis + ω_B)`, with `I_p` the rotor about its own hub.
pub fn gyroscopic_momentum(v: &VehicleModel, omega_p: f64, omega_b: &Vector3<f64>) -> Vector3<f64> {
    v.inertia.total * omega_b
        + v.inertia.rotor_own * omega_b
        + v.inertia.rotor_axial * omega_p * v.rotor_axis
}

/// Body angular acceleration from
/// `I_T ω̇_B + I_p ω̇_p + sk(ω_B)(I_T ω_B + I_p(ω_p + ω_B)) = τ_ext`.
pub fn rotational_accel(
    v: &VehicleModel,
    state: &FullState,
    domega_p: f64,
) -> Result<Vector3<f64>, DynamicsError> {
    rotational_accel_with(v, &DynamicsOptions::default(), state, domega_p)
}

fn rotational_accel_with(
    v: &VehicleModel,
    opts: &DynamicsOptions,
    state: &FullState,
    domega_p: f64,
) -> Result<Vector3<f64>, DynamicsError> {
    let w = state.omega_b;
    let tau = if opts.aerodynamics {
        body_wrench(v, state.omega_p, &w).moment()
    } else {
        Vector3::zeros()
    };
    let (h, spin_up) = if opts.rotor_coupling {
        (
            gyroscopic_momentum(v, state.omega_p, &w),
            v.inertia.rotor_axial * domega_p * v.rotor_axis,
        )
    } else {
        (v.inertia.total * w, Vector3::zeros())
    };
    let rhs = tau - spin_up - w.cross(&h);
    let inv = v
        .inertia
        .total
        .try_inverse()
        .ok_or(DynamicsError::SingularInertia)?;
    Ok(inv * rhs)
}

/// Inertial acceleration: gravity plus rotor thrust and fuselage lift.
pub fn translational_accel(v: &VehicleModel, state: &FullState) -> Result<Vector3<f64>, DynamicsError> {
    translational_accel_with(v, &DynamicsOptions::default(), state)
}

fn translational_accel_with(
    v: &VehicleModel,
    opts: &DynamicsOptions,
    state: &FullState,
) -> Result<Vector3<f64>, DynamicsError> {
    if v.mass <= 0.0 {
        return Err(DynamicsError::ZeroMass);
    }
    let gravity = Vector3::new(0.0, 0.0, -v.base.g);
    if !opts.aerodynamics {
        return Ok(gravity);
    }
    let wrench = body_wrench(v, state.omega_p, &state.omega_b);
    Ok(gravity + state.attitude * wrench.force() / v.mass)
}

/// `ṅ = −ω_B × n`.
pub fn spin_axis_rate(omega_b: &Vector3<f64>, n: &Vector3<f64>) -> Vector3<f64> {
    -omega_b.cross(n)
}

/// Piecewise-constant motor voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageSchedule {
    /// `(start time, volts)`, sorted by start time.
    segments: Vec<(f64, f64)>,
}

impl VoltageSchedule {
    pub fn constant(volts: f64) -> Self {
        Self {
            segments: vec![(f64::NEG_INFINITY, volts)],
        }
    }

    /// Segments are sorted by start time; the first one extends back to
    /// negative infinity.
    pub fn piecewise(mut segments: Vec<(f64, f64)>) -> Self {
        assert!(!segments.is_empty(), "voltage schedule needs at least one segment");
        segments.sort_by(|a, b| a.0.total_cmp(&b.0));
        segments[0].0 = f64::NEG_INFINITY;
        Self { segments }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.segments
            .iter()
            .rev()
            .find(|(start, _)| t >= *start)
            .map(|&(_, v)| v)
            .unwrap_or(self.segments[0].1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationSettings {
    pub dt: f64,
    pub t_end: f64,
    /// Record every n-th step (the initial and final states are always kept).
    pub sample_every: usize,
    pub options: DynamicsOptions,
}

impl IntegrationSettings {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            sample_every: 1,
            options: DynamicsOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: FullState,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

pub const TRAJECTORY_HEADER: &str = "t,p,q,r,omega_p,i,n_x,n_y,n_z,d_x,d_y,d_z";

impl Trajectory {
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Largest `|r(t) − r_ref| / |r_ref|` over the recorded samples.
    pub fn max_relative_drift_r(&self, r_ref: f64) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.state.omega_b.z - r_ref).abs() / r_ref.abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRAJECTORY_HEADER}")?;
        for s in &self.samples {
            let st = &s.state;
            let row = [
                s.t,
                st.omega_b.x,
                st.omega_b.y,
                st.omega_b.z,
                st.omega_p,
                st.current,
                st.spin_axis.x,
                st.spin_axis.y,
                st.spin_axis.z,
                st.position.x,
                st.position.y,
                st.position.z,
            ];
            let cells: Vec<String> = row.iter().map(|&x| format_sig(x, 12)).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

const N_STATE: usize = 23;
type Packed = SVector<f64, N_STATE>;

fn pack(s: &FullState) -> Packed {
    let mut p = Packed::zeros();
    p.fixed_rows_mut::<3>(0).copy_from(&s.omega_b);
    p[3] = s.omega_p;
    p[4] = s.current;
    p.fixed_rows_mut::<3>(5).copy_from(&s.spin_axis);
    p.fixed_rows_mut::<3>(8).copy_from(&s.position);
    p.fixed_rows_mut::<3>(11).copy_from(&s.velocity);
    p.fixed_rows_mut::<9>(14)
        .copy_from_slice(s.attitude.as_slice());
    p
}

fn unpack(p: &Packed) -> FullState {
    FullState {
        omega_b: p.fixed_rows::<3>(0).into_owned(),
        omega_p: p[3],
        current: p[4],
        spin_axis: p.fixed_rows::<3>(5).into_owned(),
        position: p.fixed_rows::<3>(8).into_owned(),
        velocity: p.fixed_rows::<3>(11).into_owned(),
        attitude: Matrix3::from_column_slice(p.fixed_rows::<9>(14).as_slice()),
    }
}

fn derivative(
    v: &VehicleModel,
    opts: &DynamicsOptions,
    s: &FullState,
    v_m: f64,
) -> Result<Packed, DynamicsError> {
    let (domega_p, di) = motor_rates_with(v, opts, s, v_m);
    let domega_b = rotational_accel_with(v, opts, s, domega_p)?;
    let accel = translational_accel_with(v, opts, s)?;
    let d = FullState {
        omega_b: domega_b,
        omega_p: domega_p,
        current: di,
        spin_axis: spin_axis_rate(&s.omega_b, &s.spin_axis),
        position: s.velocity,
        velocity: accel,
        attitude: s.attitude * s.omega_b.cross_matrix(),
    };
    Ok(pack(&d))
}

fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let c0 = r.column(0).normalize();
    let c1 = r.column(1) - c0 * c0.dot(&r.column(1));
    let c1 = c1.normalize();
    let c2 = c0.cross(&c1);
    Matrix3::from_columns(&[c0, c1, c2])
}

/// One classical RK4 step followed by re-orthonormalisation of the attitude
/// and re-normalisation of the spin axis.
pub fn rk4_step(
    v: &VehicleModel,
    opts: &DynamicsOptions,
    state: &FullState,
    schedule: &VoltageSchedule,
    t: f64,
    dt: f64,
) -> Result<FullState, DynamicsError> {
    let y = pack(state);
    let half = 0.5 * dt;
    let k1 = derivative(v, opts, state, schedule.at(t))?;
    let k2 = derivative(v, opts, &unpack(&(y + k1 * half)), schedule.at(t + half))?;
    let k3 = derivative(v, opts, &unpack(&(y + k2 * half)), schedule.at(t + half))?;
    let k4 = derivative(v, opts, &unpack(&(y + k3 * dt)), schedule.at(t + dt))?;
    let next = y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().any(|x| !x.is_finite()) {
        return Err(DynamicsError::Diverged { time: t + dt });
    }
    let mut s = unpack(&next);
    s.attitude = orthonormalize(&s.attitude);
    s.spin_axis = s.spin_axis.normalize();
    Ok(s)
}

/// Integrates from `state0` over `[0, t_end]` with a fixed step.
pub fn integrate(
    v: &VehicleModel,
    state0: &FullState,
    schedule: &VoltageSchedule,
    settings: &IntegrationSettings,
) -> Result<Trajectory, DynamicsError> {
    let IntegrationSettings {
        dt,
        t_end,
        sample_every,
        options,
    } = *settings;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidSettings(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= dt) || !t_end.is_finite() {
        return Err(DynamicsError::InvalidSettings(format!(
            "t_end ({t_end}) must be at least dt ({dt})"
        )));
    }
    let steps = (t_end / dt).round() as usize;
    let every = sample_every.max(1);
    let mut state = *state0;
    let mut samples = Vec::with_capacity(steps / every + 2);
    samples.push(Sample { t: 0.0, state });
    for k in 0..steps {
        let t = k as f64 * dt;
        state = rk4_step(v, &options, &state, schedule, t, dt)?;
        if (k + 1) % every == 0 || k + 1 == steps {
            samples.push(Sample {
                t: (k + 1) as f64 * dt,
                state,
            });
        }
    }
    Ok(Trajectory { samples })
}
