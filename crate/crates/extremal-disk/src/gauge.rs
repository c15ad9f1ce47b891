//! Distortion gauges, pointwise distortion quantities, and the forward and
//! inverse energy functionals.

use crate::mesh::{wirtinger, DerivativeSample, TriMeshMap};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("triangle {0} is inverted or degenerate (jacobian {1:.3e})")]
    Orientation(usize, f64),
    #[error("singular derivative sample on triangle {0}: f_z = 0")]
    SingularSample(usize),
    #[error("distortion undefined on triangle {0}: jacobian {1:.3e} <= 0")]
    DistortionUndefined(usize, f64),
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Convex increasing gauge weighting the distortion inside the energy.
#[derive(Clone)]
pub enum DistortionGauge {
    /// A(t) = t^p
    Power { p: f64 },
    /// A(t) = e^{p t}
    Exponential { p: f64 },
    /// User-registered gauge; `deriv` must match a central difference of
    /// `eval` to relative 1e-6 (checked by [`DistortionGauge::validate`]).
    Custom {
        name: String,
        p: f64,
        eval: ScalarFn,
        deriv: ScalarFn,
    },
}

impl fmt::Debug for DistortionGauge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl DistortionGauge {
    pub fn power(p: f64) -> Self {
        DistortionGauge::Power { p }
    }

    pub fn exponential(p: f64) -> Self {
        DistortionGauge::Exponential { p }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            DistortionGauge::Power { p } => t.powf(*p),
            DistortionGauge::Exponential { p } => (p * t).exp(),
            DistortionGauge::Custom { eval, .. } => eval(t),
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match self {
            DistortionGauge::Power { p } => p * t.powf(p - 1.0),
            DistortionGauge::Exponential { p } => p * (p * t).exp(),
            DistortionGauge::Custom { deriv, .. } => deriv(t),
        }
    }

    pub fn p(&self) -> f64 {
        match self {
            DistortionGauge::Power { p }
            | DistortionGauge::Exponential { p }
            | DistortionGauge::Custom { p, .. } => *p,
        }
    }

    /// q = 2p/(p+1), the natural Sobolev exponent of the power gauge.
    pub fn sobolev_exponent(&self) -> Option<f64> {
        match self {
            DistortionGauge::Power { p } => Some(2.0 * p / (p + 1.0)),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DistortionGauge::Power { p } => format!("power:p={p}"),
            DistortionGauge::Exponential { p } => format!("exp:p={p}"),
            DistortionGauge::Custom { name, p, .. } => format!("custom:{name}:p={p}"),
        }
    }

    /// Sampled sanity check: A nondecreasing with A(1) >= 1 on [1, t_max],
    /// and for custom gauges the derivative matches a central difference.
    pub fn validate(&self, t_max: f64) -> Result<(), String> {
        if self.eval(1.0) < 1.0 - 1e-12 {
            return Err(format!("A(1) = {} < 1", self.eval(1.0)));
        }
        let n = 64;
        let mut prev = self.eval(1.0);
        for i in 1..=n {
            let t = (t_max.ln() * i as f64 / n as f64).exp();
            let v = self.eval(t);
            if v < prev - 1e-12 * prev.abs() {
                return Err(format!("A not nondecreasing near t = {t}"));
            }
            prev = v;
            if matches!(self, DistortionGauge::Custom { .. }) {
                let h = 1e-5 * t;
                let fd = (self.eval(t + h) - self.eval(t - h)) / (2.0 * h);
                let d = self.deriv(t);
                if (d - fd).abs() > 1e-6 * fd.abs().max(1.0) {
                    return Err(format!("A' mismatch at t = {t}: {d} vs fd {fd}"));
                }
            }
        }
        Ok(())
    }
}

/// Smooth weight eta >= 1 on the disk.
#[derive(Clone)]
pub enum WeightField {
    Constant,
    /// Registered weight with its Wirtinger derivative eta_z = (eta_x - i eta_y)/2.
    Custom {
        id: String,
        eval: Arc<dyn Fn(Complex64) -> f64 + Send + Sync>,
        deriv_z: Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>,
    },
}

impl fmt::Debug for WeightField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl WeightField {
    pub fn eval(&self, z: Complex64) -> f64 {
        match self {
            WeightField::Constant => 1.0,
            WeightField::Custom { eval, .. } => eval(z),
        }
    }

    pub fn deriv_z(&self, z: Complex64) -> Complex64 {
        match self {
            WeightField::Constant => Complex64::new(0.0, 0.0),
            WeightField::Custom { deriv_z, .. } => deriv_z(z),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            WeightField::Constant => "const".to_string(),
            WeightField::Custom { id, .. } => format!("expr:{id}"),
        }
    }

    /// Look up a registered weight by identifier.
    pub fn by_id(id: &str) -> Option<WeightField> {
        match id {
            "const" | "constant" => Some(WeightField::Constant),
            // 1 + |z|^2, a smooth radial weight >= 1
            "radial-quadratic" => Some(WeightField::Custom {
                id: id.to_string(),
                eval: Arc::new(|z: Complex64| 1.0 + z.norm_sqr()),
                // d/dz (1 + z zbar) = zbar
                deriv_z: Arc::new(|z: Complex64| z.conj()),
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergySide {
    FSide,
    HSide,
}

/// Discrete energy value with its per-triangle contributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyReport {
    pub value: f64,
    pub per_triangle: Vec<f64>,
    pub side: EnergySide,
    pub gauge: String,
    pub weight: String,
}

/// K(z,f) = (|f_z|^2 + |f_zbar|^2) / (|f_z|^2 - |f_zbar|^2), >= 1.
pub fn distortion(d: &DerivativeSample) -> Result<f64, EnergyError> {
    if d.jacobian <= 0.0 {
        return Err(EnergyError::DistortionUndefined(d.triangle_id, d.jacobian));
    }
    Ok((d.f_z.norm_sqr() + d.f_zbar.norm_sqr()) / d.jacobian)
}

/// Beltrami coefficient mu = f_zbar / f_z.
pub fn beltrami(d: &DerivativeSample) -> Result<Complex64, EnergyError> {
    if d.f_z.norm_sqr() == 0.0 {
        return Err(EnergyError::SingularSample(d.triangle_id));
    }
    Ok(d.f_zbar / d.f_z)
}

/// Forward energy: sum over triangles of A(K) eta(centroid) area.
pub fn energy_f(
    map: &TriMeshMap,
    gauge: &DistortionGauge,
    weight: &WeightField,
) -> Result<EnergyReport, EnergyError> {
    let mesh = &map.mesh;
    let mut per_triangle = Vec::with_capacity(mesh.n_triangles());
    let mut value = 0.0;
    for t in 0..mesh.n_triangles() {
        let d = wirtinger(map, t)?;
        if d.jacobian <= 0.0 {
            return Err(EnergyError::Orientation(t, d.jacobian));
        }
        let k = distortion(&d)?;
        let term = gauge.eval(k) * weight.eval(mesh.centroid(t)) * mesh.area(t);
        per_triangle.push(term);
        value += term;
    }
    Ok(EnergyReport {
        value,
        per_triangle,
        side: EnergySide::FSide,
        gauge: gauge.describe(),
        weight: weight.describe(),
    })
}

/// Inverse energy: sum of A(K) J eta(h(centroid)) area; zero-Jacobian
/// triangles contribute exactly 0 so monotone limits stay evaluable.
pub fn energy_h(
    map: &TriMeshMap,
    gauge: &DistortionGauge,
    weight: &WeightField,
) -> Result<EnergyReport, EnergyError> {
    let mesh = &map.mesh;
    let mut per_triangle = Vec::with_capacity(mesh.n_triangles());
    let mut value = 0.0;
    for t in 0..mesh.n_triangles() {
        let d = wirtinger(map, t)?;
        // jacobians at rounding scale count as the J = 0 collapsed case
        let collapsed = d.jacobian.abs() <= 1e-14 * (d.f_z.norm_sqr() + d.f_zbar.norm_sqr());
        if d.jacobian < 0.0 && !collapsed {
            return Err(EnergyError::Orientation(t, d.jacobian));
        }
        let term = if collapsed {
            0.0
        } else {
            let k = distortion(&d)?;
            gauge.eval(k) * d.jacobian * weight.eval(map.image_centroid(t)) * mesh.area(t)
        };
        per_triangle.push(term);
        value += term;
    }
    Ok(EnergyReport {
        value,
        per_triangle,
        side: EnergySide::HSide,
        gauge: gauge.describe(),
        weight: weight.describe(),
    })
}

/// One growth condition verdict with the tightest constant seen on the sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConditionFlag {
    pub holds: bool,
    pub constant: f64,
}

/// Numeric verdicts for the gauge growth conditions on [1, t_max]:
/// exponential lower bound, power lower bound, and the two-sided
/// t A'(t) / A(t) ratio bounds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GaugeClassification {
    /// A(t) >= c0 e^{pt}
    pub exp_class: ConditionFlag,
    /// A(t) >= c0 t^p; `power_strict` is false in the p = 1 boundary case
    pub power_lower: ConditionFlag,
    pub power_strict: bool,
    /// t A'(t) <= c1 A(t)
    pub upper_ratio: ConditionFlag,
    /// c0 A(t) <= t A'(t)
    pub lower_ratio: ConditionFlag,
}

/// Sampled check of the growth conditions. A condition "holds" when its
/// witnessed constant stays bounded (does not decay/grow) over the last
/// decade of the log-spaced sample.
pub fn classify_gauge(gauge: &DistortionGauge, t_max: f64) -> GaugeClassification {
    assert!(t_max > 1.0, "t_max must exceed 1");
    let p = gauge.p();
    let n = 256;
    let ts: Vec<f64> = (0..=n)
        .map(|i| (t_max.ln() * i as f64 / n as f64).exp())
        .collect();

    // ratio sequences whose extremes witness the constants
    let exp_ratio: Vec<f64> = ts.iter().map(|&t| gauge.eval(t) / (p * t).exp()).collect();
    let pow_ratio: Vec<f64> = ts.iter().map(|&t| gauge.eval(t) / t.powf(p)).collect();
    let td_ratio: Vec<f64> = ts
        .iter()
        .map(|&t| t * gauge.deriv(t) / gauge.eval(t))
        .collect();

    let tail = n - n / 8;
    let stable_min = |r: &[f64]| -> ConditionFlag {
        let finite: Vec<f64> = r.iter().cloned().filter(|x| x.is_finite()).collect();
        if finite.len() < 2 {
            return ConditionFlag { holds: false, constant: f64::NAN };
        }
        let c = finite.iter().cloned().fold(f64::INFINITY, f64::min);
        // decaying tail means no positive lower constant survives t -> inf
        let holds = c > 0.0 && finite[finite.len() - 1] > 0.5 * r[tail.min(finite.len() - 1)];
        ConditionFlag { holds, constant: c }
    };
    let stable_max = |r: &[f64]| -> ConditionFlag {
        let finite: Vec<f64> = r.iter().cloned().filter(|x| x.is_finite()).collect();
        if finite.len() < 2 {
            return ConditionFlag { holds: false, constant: f64::NAN };
        }
        let c = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let holds = finite[finite.len() - 1] < 1.05 * r[tail.min(finite.len() - 1)].max(1e-300);
        ConditionFlag { holds, constant: c }
    };

    GaugeClassification {
        exp_class: stable_min(&exp_ratio),
        power_lower: stable_min(&pow_ratio),
        power_strict: p > 1.0,
        upper_ratio: stable_max(&td_ratio),
        lower_ratio: stable_min(&td_ratio),
    }
}
