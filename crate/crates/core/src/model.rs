//! Physical constants, the six-variable design vector, the mass/inertia model
//! and the expansion of a design into a fully resolved vehicle.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::aero::{AeroCoefficients, AeroVariant};
use crate::error::ModelError;

/// Lower edge of the airfoil-fit angle-of-attack window (degrees).
pub const ALPHA_MIN_DEG: f64 = 0.0;
/// Upper edge of the airfoil-fit angle-of-attack window (degrees).
pub const ALPHA_MAX_DEG: f64 = 10.0;

/// The six design variables.
///
/// Angles of attack are in degrees (the unit of the airfoil fits), the tilt
/// `delta` is in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignVector {
    pub alpha_p: f64,
    #[serde(rename = "alpha_B")]
    pub alpha_b: f64,
    /// c_B / c_p
    pub chord_ratio: f64,
    /// R_B / R_p
    pub radius_ratio: f64,
    /// Rotor tilt about body y (rad).
    pub delta: f64,
    /// l / R_B, signed.
    pub offset_ratio: f64,
}

impl DesignVector {
    pub const NAMES: [&'static str; 6] = [
        "alpha_p",
        "alpha_B",
        "chord_ratio",
        "radius_ratio",
        "delta",
        "offset_ratio",
    ];

    pub fn new(
        alpha_p: f64,
        alpha_b: f64,
        chord_ratio: f64,
        radius_ratio: f64,
        delta: f64,
        offset_ratio: f64,
    ) -> Self {
        Self {
            alpha_p,
            alpha_b,
            chord_ratio,
            radius_ratio,
            delta,
            offset_ratio,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.alpha_p,
            self.alpha_b,
            self.chord_ratio,
            self.radius_ratio,
            self.delta,
            self.offset_ratio,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    /// Checks the fit window on both angles of attack and the sign of the
    /// geometric ratios.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in Self::NAMES.iter().zip(self.to_array()) {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { field: name, value });
            }
        }
        for (field, value) in [("alpha_p", self.alpha_p), ("alpha_B", self.alpha_b)] {
            if !(ALPHA_MIN_DEG..=ALPHA_MAX_DEG).contains(&value) {
                return Err(ModelError::OutOfRange {
                    field,
                    value,
                    range: "[0, 10] deg",
                });
            }
        }
        for (field, value) in [
            ("chord_ratio", self.chord_ratio),
            ("radius_ratio", self.radius_ratio),
        ] {
            if value < 0.0 {
                return Err(ModelError::OutOfRange {
                    field,
                    value,
                    range: "[0, inf)",
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for DesignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.to_array();
        write!(f, "{},{},{},{},{},{}", a[0], a[1], a[2], a[3], a[4], a[5])
    }
}

/// Parses `"alpha_p,alpha_B,c_B/c_p,R_B/R_p,delta,l/R_B"`.
impl FromStr for DesignVector {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(ModelError::DesignParse(format!(
                "expected 6 comma-separated values, got {}",
                parts.len()
            )));
        }
        let mut values = [0.0; 6];
        for (slot, (part, name)) in values.iter_mut().zip(parts.iter().zip(Self::NAMES)) {
            *slot = part
                .parse()
                .map_err(|_| ModelError::DesignParse(format!("{name}: cannot parse {part:?}")))?;
        }
        Ok(Self::from_array(values))
    }
}

/// Vehicle-independent constants: propeller geometry, environment and motor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseConstants {
    /// Propeller chord (m).
    pub c_p: f64,
    /// Propeller radius (m).
    #[serde(rename = "R_p")]
    pub r_p: f64,
    pub g: f64,
    pub rho: f64,
    /// Motor torque constant (N·m/A).
    #[serde(rename = "K_tau_m")]
    pub k_tau_m: f64,
    /// Back-EMF constant (V·s/rad).
    #[serde(rename = "K_v")]
    pub k_v: f64,
    /// Hub rotational drag coefficient (N·m·s/rad).
    pub gamma: f64,
    #[serde(rename = "R_m")]
    pub r_m: f64,
    #[serde(rename = "L_m")]
    pub l_m: f64,
}

impl Default for BaseConstants {
    fn default() -> Self {
        Self {
            c_p: 0.03,
            r_p: 0.08,
            g: 9.81,
            rho: 1.225,
            k_tau_m: 0.02,
            k_v: 0.02,
            gamma: 9.75e-6,
            r_m: 1.0,
            l_m: 1e-3,
        }
    }
}

impl BaseConstants {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("c_p", self.c_p),
            ("R_p", self.r_p),
            ("g", self.g),
            ("rho", self.rho),
            ("K_tau_m", self.k_tau_m),
            ("K_v", self.k_v),
            ("R_m", self.r_m),
            ("L_m", self.l_m),
        ];
        for (field, value) in positive {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { field, value });
            }
            if value <= 0.0 {
                return Err(ModelError::OutOfRange {
                    field,
                    value,
                    range: "(0, inf)",
                });
            }
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(ModelError::OutOfRange {
                field: "gamma",
                value: self.gamma,
                range: "[0, inf)",
            });
        }
        Ok(())
    }
}

/// Component masses and the electronics cylinder.
///
/// The fuselage mass `m_b` only counts when the design actually has a
/// fuselage (`c_B > 0` and `R_B > 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassModel {
    pub m_e: f64,
    pub m_p: f64,
    #[serde(rename = "m_B")]
    pub m_b: f64,
    pub electronics_radius: f64,
    pub electronics_height: f64,
}

impl Default for MassModel {
    /// Calibrated to the 1.8201 N co-axial vehicle.
    fn default() -> Self {
        Self {
            m_e: 1.820_096_269_554_753 / 9.81 - 0.06,
            m_p: 0.01,
            m_b: 0.05,
            electronics_radius: 0.02,
            electronics_height: 0.03,
        }
    }
}

impl MassModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("m_e", self.m_e),
            ("m_p", self.m_p),
            ("m_B", self.m_b),
            ("electronics_radius", self.electronics_radius),
            ("electronics_height", self.electronics_height),
        ];
        for (field, value) in fields {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { field, value });
            }
            if value < 0.0 {
                return Err(ModelError::OutOfRange {
                    field,
                    value,
                    range: "[0, inf)",
                });
            }
        }
        if self.m_e + self.m_p + self.m_b <= 0.0 {
            return Err(ModelError::ZeroMass);
        }
        Ok(())
    }

    /// Sets the electronics mass so that the full vehicle (with fuselage)
    /// weighs `weight` newtons.
    pub fn with_total_weight(&self, weight: f64, g: f64) -> Result<Self, ModelError> {
        let m_e = weight / g - self.m_p - self.m_b;
        if !(m_e >= 0.0) {
            return Err(ModelError::Calibration(format!(
                "weight {weight} N is below the propeller and fuselage weight"
            )));
        }
        Ok(Self { m_e, ..*self })
    }
}

/// Derived lengths (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Geometry {
    pub c_b: f64,
    pub r_p: f64,
    pub r_b: f64,
    /// Rotor offset along body y (m), signed.
    pub l: f64,
}

/// Inertia tensors in body axes (kg·m²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inertia {
    pub electronics: Matrix3<f64>,
    /// Propeller contribution to the vehicle, including the offset term.
    pub propeller: Matrix3<f64>,
    pub fuselage: Matrix3<f64>,
    pub total: Matrix3<f64>,
    /// Propeller about its own hub; used for the rotor coupling terms.
    pub rotor_own: Matrix3<f64>,
    /// Propeller inertia about its spin axis.
    pub rotor_axial: f64,
}

fn disk(m: f64, r: f64) -> Matrix3<f64> {
    let d = m * r * r / 4.0;
    Matrix3::from_diagonal(&Vector3::new(d, d, 2.0 * d))
}

fn solid_cylinder(m: f64, r: f64, h: f64) -> Matrix3<f64> {
    let t = m * (3.0 * r * r + h * h) / 12.0;
    Matrix3::from_diagonal(&Vector3::new(t, t, m * r * r / 2.0))
}

/// Thin disks for propeller and fuselage, a solid cylinder for the
/// electronics. The propeller hub sits at `l·ŷ`, which adds `m_p·l²` to the
/// x and z entries of its tensor.
pub fn assemble_inertia(masses: &MassModel, geometry: &Geometry) -> Inertia {
    let electronics = solid_cylinder(
        masses.m_e,
        masses.electronics_radius,
        masses.electronics_height,
    );
    let rotor_own = disk(masses.m_p, geometry.r_p);
    let offset = masses.m_p * geometry.l * geometry.l;
    let propeller = rotor_own + Matrix3::from_diagonal(&Vector3::new(offset, 0.0, offset));
    let fuselage = disk(masses.m_b, geometry.r_b);
    Inertia {
        electronics,
        propeller,
        fuselage,
        total: electronics + propeller + fuselage,
        rotor_own,
        rotor_axial: rotor_own[(2, 2)],
    }
}

/// A fully resolved vehicle for one design point.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleModel {
    pub base: BaseConstants,
    pub masses: MassModel,
    pub design: DesignVector,
    pub geometry: Geometry,
    pub inertia: Inertia,
    /// Mass that actually flies (kg).
    pub mass: f64,
    /// Unit rotor axis in the body frame.
    pub rotor_axis: Vector3<f64>,
    pub coeffs: AeroCoefficients,
    pub variant: AeroVariant,
}

impl VehicleModel {
    pub fn weight(&self) -> f64 {
        self.mass * self.base.g
    }

    pub fn has_fuselage(&self) -> bool {
        self.geometry.c_b > 0.0 && self.geometry.r_b > 0.0
    }

    pub fn with_variant(mut self, variant: AeroVariant) -> Self {
        self.variant = variant;
        self
    }
}

/// Expands a design vector into a vehicle using the quadratic aero model.
pub fn expand_design(
    base: &BaseConstants,
    masses: &MassModel,
    x: &DesignVector,
) -> Result<VehicleModel, ModelError> {
    base.validate()?;
    masses.validate()?;
    x.validate()?;

    let c_b = x.chord_ratio * base.c_p;
    let r_b = x.radius_ratio * base.r_p;
    let geometry = Geometry {
        c_b,
        r_p: base.r_p,
        r_b,
        l: x.offset_ratio * r_b,
    };
    let flying = MassModel {
        m_b: if c_b > 0.0 && r_b > 0.0 { masses.m_b } else { 0.0 },
        ..*masses
    };
    let mass = flying.m_e + flying.m_p + flying.m_b;
    if mass <= 0.0 {
        return Err(ModelError::ZeroMass);
    }
    let inertia = assemble_inertia(&flying, &geometry);
    let (s, c) = x.delta.sin_cos();

    Ok(VehicleModel {
        base: *base,
        masses: flying,
        design: *x,
        geometry,
        inertia,
        mass,
        rotor_axis: Vector3::new(s, 0.0, c),
        coeffs: AeroCoefficients::for_design(x)?,
        variant: AeroVariant::Quadratic,
    })
}

/// A published hover operating point. Power is given either directly or as
/// voltage and current.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishedHover {
    #[serde(rename = "P_s")]
    pub p_s: f64,
    #[serde(rename = "P_m", default, skip_serializing_if = "Option::is_none")]
    pub p_m: Option<f64>,
    #[serde(rename = "V_m", default, skip_serializing_if = "Option::is_none")]
    pub v_m: Option<f64>,
    #[serde(rename = "i", default, skip_serializing_if = "Option::is_none")]
    pub current: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_p: Option<f64>,
}

/// Constants recovered from a published operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Total vehicle weight (N).
    pub total_weight: f64,
    /// Motor resistance (Ω), when voltage, current and rotor speed are known.
    #[serde(rename = "R_m")]
    pub r_m: Option<f64>,
}

/// Relative tolerance for `P_m = V_m·i` when both are published.
const POWER_IDENTITY_RTOL: f64 = 1e-3;

/// Inverts `P_s = P_m / W` and the steady voltage equation
/// `V_m = R_m·i + K_v·ω_p`.
pub fn calibrate_from_published(
    published: &PublishedHover,
    base: &BaseConstants,
) -> Result<Calibration, ModelError> {
    if published.current == Some(0.0) {
        return Err(ModelError::Calibration("motor current is zero".into()));
    }
    if !(published.p_s > 0.0) {
        return Err(ModelError::Calibration(format!(
            "specific power must be positive, got {}",
            published.p_s
        )));
    }
    let electrical = match (published.v_m, published.current) {
        (Some(v), Some(i)) => Some(v * i),
        _ => None,
    };
    let power = match (published.p_m, electrical) {
        (Some(p), Some(vi)) => {
            if (p - vi).abs() > POWER_IDENTITY_RTOL * p.abs().max(vi.abs()) {
                return Err(ModelError::Calibration(format!(
                    "P_m = V_m*i violated: P_m = {p}, V_m*i = {vi}"
                )));
            }
            p
        }
        (Some(p), None) => p,
        (None, Some(vi)) => vi,
        (None, None) => {
            return Err(ModelError::Calibration(
                "need either P_m or both V_m and i".into(),
            ))
        }
    };
    if !(power > 0.0) {
        return Err(ModelError::Calibration(format!(
            "electrical power must be positive, got {power}"
        )));
    }
    let r_m = match (published.v_m, published.current, published.omega_p) {
        (Some(v), Some(i), Some(w)) => Some((v - base.k_v * w) / i),
        _ => None,
    };
    Ok(Calibration {
        total_weight: power / published.p_s,
        r_m,
    })
}

impl Calibration {
    /// Applies the calibration: motor resistance into the constants, weight
    /// into the electronics mass.
    pub fn apply(
        &self,
        base: &BaseConstants,
        masses: &MassModel,
    ) -> Result<(BaseConstants, MassModel), ModelError> {
        let base = BaseConstants {
            r_m: self.r_m.unwrap_or(base.r_m),
            ..*base
        };
        let masses = masses.with_total_weight(self.total_weight, base.g)?;
        Ok((base, masses))
    }
}
