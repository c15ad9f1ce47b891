//! Hopf-differential analysis of computed maps: the per-triangle field
//! Phi = A'(K) h_w conj(h_wbar) eta(h), its discrete dbar residual (the
//! holomorphy certificate), inner-variation residuals against a bump
//! battery, and the Reich-Strebel inequality check.

use crate::gauge::{beltrami, DistortionGauge, WeightField};
use crate::mesh::{dbar_residual, interpolate, wirtinger, Locator, TriMesh, TriMeshMap};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HopfError {
    #[error("triangle {0} is degenerate or orientation-reversing (jacobian {1:.3e})")]
    Orientation(usize, f64),
    #[error("test-function support reaches the boundary (|center| + radius = {0:.6})")]
    SupportTouchesBoundary(f64),
    #[error("point {0} left the mesh hull during composition")]
    CompositionEscaped(Complex64),
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
}

/// The Ahlfors-Hopf differential of a map, sampled per triangle, together
/// with its vertex average and the discrete holomorphy residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HopfField {
    #[serde(skip)]
    pub mesh: Option<Arc<TriMesh>>,
    #[serde(with = "crate::mesh::complex_pairs")]
    pub phi: Vec<Complex64>,
    #[serde(with = "crate::mesh::complex_pairs")]
    pub vertex_phi: Vec<Complex64>,
    /// L1 norm of the piecewise-affine dbar operator applied to vertex_phi.
    pub dbar_l1: f64,
    /// Sum of |phi| times triangle area.
    pub l1_norm: f64,
}

impl HopfField {
    /// Assemble a field from prescribed per-triangle values (used by the
    /// affine test family and by automorphic constructions).
    pub fn from_triangle_values(
        mesh: Arc<TriMesh>,
        phi: Vec<Complex64>,
    ) -> Result<Self, HopfError> {
        assert_eq!(phi.len(), mesh.n_triangles());
        let incident = mesh.vertex_triangles();
        let mut vertex_phi = vec![Complex64::new(0.0, 0.0); mesh.n_vertices()];
        for (v, tris) in incident.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut w = 0.0;
            for &t in tris {
                let a = mesh.area(t);
                acc += phi[t] * a;
                w += a;
            }
            vertex_phi[v] = acc / w;
        }
        let (_, dbar_l1) = dbar_residual(&vertex_phi, &mesh)?;
        let l1_norm = phi
            .iter()
            .enumerate()
            .map(|(t, p)| p.norm() * mesh.area(t))
            .sum();
        Ok(HopfField {
            mesh: Some(mesh),
            phi,
            vertex_phi,
            dbar_l1,
            l1_norm,
        })
    }
}

/// Compute the Ahlfors-Hopf differential of `h` under the given gauge and
/// weight (the weight is evaluated at the image point).
pub fn hopf_field(
    h: &TriMeshMap,
    gauge: &DistortionGauge,
    weight: &WeightField,
) -> Result<HopfField, HopfError> {
    let mesh = h.mesh.clone();
    let mut phi = Vec::with_capacity(mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let d = wirtinger(h, t)?;
        if d.f_zbar.norm() == 0.0 {
            phi.push(Complex64::new(0.0, 0.0));
            continue;
        }
        if d.jacobian <= 0.0 {
            return Err(HopfError::Orientation(t, d.jacobian));
        }
        let k = (d.f_z.norm_sqr() + d.f_zbar.norm_sqr()) / d.jacobian;
        let eta = weight.eval(h.image_centroid(t));
        phi.push(gauge.deriv(k) * d.f_z * d.f_zbar.conj() * eta);
    }
    HopfField::from_triangle_values(mesh, phi)
}

/// Smooth compactly supported bump (1 - |z-c|^2/r^2)^3 with its first
/// Wirtinger derivatives; identically zero outside the support circle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TestFunction {
    #[serde(with = "crate::mesh::complex_scalar")]
    pub center: Complex64,
    pub radius: f64,
}

impl TestFunction {
    pub fn new(center: Complex64, radius: f64) -> Result<Self, HopfError> {
        let reach = center.norm() + radius;
        if !(radius > 0.0) || reach >= 1.0 - 1e-9 {
            return Err(HopfError::SupportTouchesBoundary(reach));
        }
        Ok(TestFunction { center, radius })
    }

    pub fn eval(&self, z: Complex64) -> f64 {
        let s = (z - self.center).norm_sqr() / (self.radius * self.radius);
        if s >= 1.0 {
            0.0
        } else {
            (1.0 - s).powi(3)
        }
    }

    pub fn d_z(&self, z: Complex64) -> Complex64 {
        let d = z - self.center;
        let s = d.norm_sqr() / (self.radius * self.radius);
        if s >= 1.0 {
            Complex64::new(0.0, 0.0)
        } else {
            -3.0 * (1.0 - s).powi(2) * d.conj() / (self.radius * self.radius)
        }
    }

    pub fn d_zbar(&self, z: Complex64) -> Complex64 {
        let d = z - self.center;
        let s = d.norm_sqr() / (self.radius * self.radius);
        if s >= 1.0 {
            Complex64::new(0.0, 0.0)
        } else {
            -3.0 * (1.0 - s).powi(2) * d / (self.radius * self.radius)
        }
    }

    /// The fixed 12-bump battery: three rings of four bumps, radii half
    /// the distance to the boundary.
    pub fn battery() -> Vec<TestFunction> {
        let mut out = Vec::with_capacity(12);
        for &rho in &[0.2, 0.45, 0.7] {
            for k in 0..4 {
                let angle = k as f64 * PI / 2.0;
                let center = Complex64::from_polar(rho, angle);
                out.push(TestFunction::new(center, (1.0 - rho) / 2.0).unwrap());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationSide {
    /// |2 int A'(K) conj(mu)/(1+|mu|^2) eta phi_zbar - int A(K) (eta phi)_z|
    FSide,
    /// |int K^(p-1) h_w conj(h_wbar) eta(h) phi_wbar|
    HSideP,
}

/// Inner-variation residuals of a map against a battery of test functions,
/// centroid quadrature per triangle.
pub fn inner_variation_residual(
    map: &TriMeshMap,
    gauge: &DistortionGauge,
    weight: &WeightField,
    tests: &[TestFunction],
    side: VariationSide,
) -> Result<Vec<f64>, HopfError> {
    let mesh = &map.mesh;
    // cache per-triangle derivative data once
    let mut samples = Vec::with_capacity(mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let d = wirtinger(map, t)?;
        if d.jacobian <= 0.0 {
            return Err(HopfError::Orientation(t, d.jacobian));
        }
        samples.push(d);
    }
    let p = gauge.p();
    let mut residuals = Vec::with_capacity(tests.len());
    for test in tests {
        let mut acc1 = Complex64::new(0.0, 0.0);
        let mut acc2 = Complex64::new(0.0, 0.0);
        for (t, d) in samples.iter().enumerate() {
            let zc = mesh.centroid(t);
            let area = mesh.area(t);
            let k = (d.f_z.norm_sqr() + d.f_zbar.norm_sqr()) / d.jacobian;
            match side {
                VariationSide::FSide => {
                    let mu = beltrami(d).expect("jacobian checked positive above");
                    let eta = weight.eval(zc);
                    acc1 += 2.0 * gauge.deriv(k) * mu.conj() / (1.0 + mu.norm_sqr())
                        * eta
                        * test.d_zbar(zc)
                        * area;
                    let eta_z = weight.deriv_z(zc);
                    acc2 += gauge.eval(k) * (eta_z * test.eval(zc) + eta * test.d_z(zc)) * area;
                }
                VariationSide::HSideP => {
                    let wc = map.image_centroid(t);
                    acc1 += k.powf(p - 1.0)
                        * d.f_z
                        * d.f_zbar.conj()
                        * weight.eval(wc)
                        * test.d_zbar(zc)
                        * area;
                }
            }
        }
        residuals.push(match side {
            VariationSide::FSide => (acc1 - acc2).norm(),
            VariationSide::HSideP => acc1.norm(),
        });
    }
    Ok(residuals)
}

/// Reich-Strebel comparison: lhs = int |Phi|, rhs = int sqrt|Phi(xi)|
/// sqrt|Phi| |xi_z - (Phi/|Phi|) xi_zbar|, the integrand taken as zero on
/// triangles where Phi vanishes. `xi` must map the disk into the mesh hull.
pub fn reich_strebel_check(
    field: &HopfField,
    xi: &TriMeshMap,
) -> Result<(f64, f64), HopfError> {
    let mesh = &xi.mesh;
    assert_eq!(field.phi.len(), mesh.n_triangles());
    let locator = Locator::new(mesh, &mesh.vertices);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for t in 0..mesh.n_triangles() {
        let area = mesh.area(t);
        let phi = field.phi[t];
        lhs += phi.norm() * area;
        if phi.norm() == 0.0 {
            continue;
        }
        let d = wirtinger(xi, t)?;
        let w = xi.image_centroid(t);
        let phi_at_xi = interpolate(&locator, &field.vertex_phi, w, 1e-7)
            .ok_or(HopfError::CompositionEscaped(w))?;
        let sigma = phi / phi.norm();
        rhs += phi_at_xi.norm().sqrt()
            * phi.norm().sqrt()
            * (d.f_z - sigma * d.f_zbar).norm()
            * area;
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::distortion;
    use crate::mesh::build_disk_mesh;
    use crate::solver::{minimize_energy, BoundarySpec, SolveOptions};
    use crate::EnergySide;
    use approx::assert_relative_eq;

    fn mesh(nb: usize, r: u32) -> Arc<TriMesh> {
        Arc::new(build_disk_mesh(nb, r).unwrap())
    }

    #[test]
    fn conformal_map_has_zero_field() {
        // a similarity has f_zbar = 0 exactly on every triangle
        let m = mesh(16, 2);
        let a = Complex64::new(0.3, 0.4);
        let b = Complex64::new(0.05, -0.02);
        let sim = TriMeshMap::from_fn(m, |z| a * z + b);
        let field = hopf_field(&sim, &DistortionGauge::power(2.0), &WeightField::Constant).unwrap();
        // f_zbar only vanishes up to rounding of a*z2 - a*z1 etc.
        assert!(field.l1_norm < 1e-14, "l1 = {:e}", field.l1_norm);
        assert!(field.dbar_l1 < 1e-13, "dbar = {:e}", field.dbar_l1);
    }

    #[test]
    fn affine_map_constant_field() {
        let m = mesh(16, 2);
        let map = TriMeshMap::from_fn(m.clone(), |z| z + 0.25 * z.conj());
        let gauge = DistortionGauge::power(2.0);
        let field = hopf_field(&map, &gauge, &WeightField::Constant).unwrap();
        let d = wirtinger(&map, 0).unwrap();
        let k = distortion(&d).unwrap();
        assert_relative_eq!(k, 1.0625 / 0.9375, max_relative = 1e-12);
        let expected = 2.0 * k * 0.25;
        for &phi in &field.phi {
            assert_relative_eq!(phi.re, expected, max_relative = 1e-10);
            assert!(phi.im.abs() < 1e-12);
        }
        assert!(field.dbar_l1 < 1e-10, "dbar_l1 = {:e}", field.dbar_l1);
        assert_relative_eq!(field.l1_norm, expected * m.total_area(), max_relative = 1e-10);
    }

    #[test]
    fn harmonic_map_field_residual_decreases() {
        // h = w + lambda conj(w)^2 / 2 is harmonic, so its Hopf field at
        // A(t) = t is exactly conj(lambda) w: holomorphic, and the discrete
        // dbar residual should vanish under refinement
        let lambda = Complex64::new(0.3, 0.2);
        let mut residuals = Vec::new();
        for r in [2u32, 3, 4] {
            let m = mesh(16, r);
            let h = TriMeshMap::from_fn(m.clone(), |w| w + 0.5 * lambda * w.conj() * w.conj());
            let field =
                hopf_field(&h, &DistortionGauge::power(1.0), &WeightField::Constant).unwrap();
            assert!(field.l1_norm > 1e-2, "nontrivial field expected");
            // spot-check against the closed form at an interior vertex
            let v = (0..m.n_vertices())
                .find(|&v| (m.vertices[v].norm() - 0.5).abs() < 0.1)
                .unwrap();
            let exact = lambda.conj() * m.vertices[v];
            assert!(
                (field.vertex_phi[v] - exact).norm() < 0.1 * exact.norm() + 1e-3,
                "vertex field {} vs {}",
                field.vertex_phi[v],
                exact
            );
            residuals.push(field.dbar_l1);
        }
        assert!(
            residuals[1] < 0.7 * residuals[0] && residuals[2] < 0.7 * residuals[1],
            "residuals {residuals:?}"
        );
    }

    #[test]
    fn support_validation() {
        assert!(TestFunction::new(Complex64::new(0.9, 0.0), 0.2).is_err());
        assert!(TestFunction::new(Complex64::new(0.0, 0.0), 1.0).is_err());
        assert!(TestFunction::new(Complex64::new(0.3, 0.0), 0.3).is_ok());
        let battery = TestFunction::battery();
        assert_eq!(battery.len(), 12);
        for b in &battery {
            assert!(b.center.norm() + b.radius < 1.0);
            // vanishes on the support circle
            let edge = b.center + Complex64::from_polar(b.radius, 0.7);
            assert!(b.eval(edge).abs() < 1e-14);
            assert!(b.d_z(edge).norm() < 1e-13);
        }
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let b = TestFunction::new(Complex64::new(0.2, -0.1), 0.4).unwrap();
        let z = Complex64::new(0.35, 0.05);
        let h = 1e-6;
        let dx = (b.eval(z + h) - b.eval(z - h)) / (2.0 * h);
        let dy = (b.eval(z + Complex64::new(0.0, h)) - b.eval(z - Complex64::new(0.0, h)))
            / (2.0 * h);
        let d_z = Complex64::new(dx, -dy) / 2.0;
        let d_zbar = Complex64::new(dx, dy) / 2.0;
        assert!((b.d_z(z) - d_z).norm() < 1e-8);
        assert!((b.d_zbar(z) - d_zbar).norm() < 1e-8);
    }

    #[test]
    fn identity_inner_variation_residual_shrinks() {
        let battery = TestFunction::battery();
        let mut worst = Vec::new();
        for r in [2u32, 3] {
            let m = mesh(16, r);
            let id = TriMeshMap::identity(m);
            let res = inner_variation_residual(
                &id,
                &DistortionGauge::power(2.0),
                &WeightField::Constant,
                &battery,
                VariationSide::FSide,
            )
            .unwrap();
            worst.push(res.into_iter().fold(0.0_f64, f64::max));
        }
        assert!(worst[0] < 5e-2, "worst {worst:?}");
        assert!(worst[1] < 0.5 * worst[0], "worst {worst:?}");
    }

    #[test]
    fn perturbing_a_minimizer_raises_the_residual() {
        let m = mesh(16, 2);
        let spec = BoundarySpec::Sin { a: 0.3 };
        let gauge = DistortionGauge::power(2.0);
        let (map, _) = minimize_energy(
            &m,
            &spec.sample(&m),
            &gauge,
            &WeightField::Constant,
            EnergySide::FSide,
            &SolveOptions::default(),
        )
        .unwrap();
        let battery = TestFunction::battery();
        let base = inner_variation_residual(
            &map,
            &gauge,
            &WeightField::Constant,
            &battery,
            VariationSide::FSide,
        )
        .unwrap();
        // nudge one interior vertex by 0.05
        let mut perturbed = map.clone();
        let v = (0..m.n_vertices())
            .find(|&v| !m.is_boundary(v) && m.vertices[v].norm() > 0.2)
            .unwrap();
        perturbed.image_positions[v] += Complex64::new(0.05, 0.0);
        let bumped = inner_variation_residual(
            &perturbed,
            &gauge,
            &WeightField::Constant,
            &battery,
            VariationSide::FSide,
        )
        .unwrap();
        assert!(
            (0..battery.len()).any(|i| bumped[i] > base[i] * 2.0 + 1e-6),
            "base {base:?} bumped {bumped:?}"
        );
    }

    #[test]
    fn h_side_residual_decreases_under_refinement() {
        let spec = BoundarySpec::Sin { a: 0.3 };
        let gauge = DistortionGauge::power(2.0);
        let battery = TestFunction::battery();
        let mut worst = Vec::new();
        for r in [2u32, 3] {
            let m = mesh(16, r);
            let (h, _) = minimize_energy(
                &m,
                &spec.sample(&m),
                &gauge,
                &WeightField::Constant,
                EnergySide::HSide,
                &SolveOptions::default(),
            )
            .unwrap();
            let res = inner_variation_residual(
                &h,
                &gauge,
                &WeightField::Constant,
                &battery,
                VariationSide::HSideP,
            )
            .unwrap();
            worst.push(res.into_iter().fold(0.0_f64, f64::max));
        }
        assert!(worst[1] < worst[0], "worst {worst:?}");
    }

    #[test]
    fn reich_strebel_identity_is_equality() {
        let m = mesh(16, 2);
        let map = TriMeshMap::from_fn(m.clone(), |z| z + 0.25 * z.conj());
        let field = hopf_field(&map, &DistortionGauge::power(2.0), &WeightField::Constant).unwrap();
        let id = TriMeshMap::identity(m);
        let (lhs, rhs) = reich_strebel_check(&field, &id).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    #[test]
    fn reich_strebel_shear_inequality() {
        let m = mesh(16, 3);
        let c = Complex64::new(0.7, 0.2);
        let field = HopfField::from_triangle_values(m.clone(), vec![c; m.n_triangles()]).unwrap();
        // compactly supported perturbation of the identity
        let bump = TestFunction::new(Complex64::new(0.1, 0.0), 0.5).unwrap();
        let xi = TriMeshMap::from_fn(m, |z| z + 0.1 * bump.eval(z) * z.conj());
        let (lhs, rhs) = reich_strebel_check(&field, &xi).unwrap();
        assert!(rhs >= lhs - 1e-9 * lhs, "lhs {lhs} rhs {rhs}");
        assert!(rhs > lhs + 1e-6, "shear should cost strictly: {lhs} vs {rhs}");
    }
}
