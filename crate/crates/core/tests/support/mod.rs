//! Shared fixtures and a blade-element quadrature oracle.
#![allow(dead_code)]

use monospinner::{
    calibrate_from_published, expand_design, BaseConstants, Calibration, DesignVector, MassModel,
    PublishedHover, VehicleModel,
};

pub fn config1_design() -> DesignVector {
    DesignVector::new(10.0, 10.0, 1.05, 1.75, 0.0, 0.0)
}

pub fn config1_published() -> PublishedHover {
    PublishedHover {
        p_s: 1.3296,
        p_m: None,
        v_m: Some(9.68),
        current: Some(0.25),
        omega_p: Some(471.48),
    }
}

pub fn config2_published() -> PublishedHover {
    PublishedHover {
        p_s: 0.1325,
        p_m: Some(0.3247),
        ..PublishedHover::default()
    }
}

/// Masses used for the offset/tilted configuration before calibration.
pub fn config2_masses() -> MassModel {
    MassModel {
        m_e: 0.12553,
        m_p: 0.01,
        m_b: 0.11428,
        ..MassModel::default()
    }
}

pub fn calibrated(published: &PublishedHover, masses: &MassModel) -> (BaseConstants, MassModel, Calibration) {
    let base = BaseConstants::default();
    let cal = calibrate_from_published(published, &base).unwrap();
    let (b, m) = cal.apply(&base, masses).unwrap();
    (b, m, cal)
}

pub fn config1() -> (BaseConstants, MassModel) {
    let (b, m, _) = calibrated(&config1_published(), &MassModel::default());
    (b, m)
}

pub fn config2() -> (BaseConstants, MassModel) {
    let (b, m, _) = calibrated(&config2_published(), &config2_masses());
    (b, m)
}

pub fn vehicle(base: &BaseConstants, masses: &MassModel, x: &DesignVector) -> VehicleModel {
    expand_design(base, masses, x).unwrap()
}

/// Loads on a two-blade rotor of constant chord spinning at `spin` in an
/// in-plane freestream `edgewise`, summed blade by blade.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub thrust: f64,
    pub torque: f64,
    /// Rolling moment about the axis normal to the freestream.
    pub roll: f64,
}

/// Lift acts on the chordwise (tangential) velocity, drag on the full
/// in-plane speed. Uniform azimuth average and composite Simpson in radius.
pub fn two_blade_quadrature(
    rho: f64,
    chord: f64,
    c_l: f64,
    c_d: f64,
    radius: f64,
    spin: f64,
    edgewise: f64,
) -> Quadrature {
    const AZIMUTHS: usize = 32;
    const INTERVALS: usize = 64;
    let h = radius / INTERVALS as f64;
    let q = 0.5 * rho * chord;
    let (mut thrust, mut torque, mut roll) = (0.0, 0.0, 0.0);
    for a in 0..AZIMUTHS {
        let psi0 = 2.0 * std::f64::consts::PI * a as f64 / AZIMUTHS as f64;
        for blade in 0..2 {
            let psi = psi0 + std::f64::consts::PI * blade as f64;
            for k in 0..=INTERVALS {
                let w = if k == 0 || k == INTERVALS {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let y = k as f64 * h;
                let tangential = spin * y + edgewise * psi.sin();
                let radial = edgewise * psi.cos();
                let lift = q * c_l * tangential * tangential;
                let drag = q * c_d * (tangential * tangential + radial * radial);
                thrust += w * lift;
                torque += w * drag * y;
                roll += w * lift * y * psi.sin();
            }
        }
    }
    let scale = h / 3.0 / AZIMUTHS as f64;
    Quadrature {
        thrust: thrust * scale,
        torque: torque * scale,
        roll: roll * scale,
    }
}
