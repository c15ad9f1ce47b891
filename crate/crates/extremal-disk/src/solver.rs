//! Minimization of the discrete distortion energies over interior vertex
//! image positions, with fixed monotone boundary data.
//!
//! The optimizer is limited-memory quasi-Newton with Armijo backtracking;
//! a step is rejected outright if it inverts any triangle, which enforces
//! the orientation constraint without penalty terms. The initializer (and
//! the p = 1 ground truth on the h side) is the discrete harmonic
//! extension of the boundary data.

use crate::gauge::{DistortionGauge, EnergySide, WeightField};
use crate::mesh::{
    interpolate, wirtinger_coefficients, wirtinger_raw, Locator, TriMesh, TriMeshMap,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("boundary data is not cyclically monotone (vertex {0})")]
    NonMonotoneBoundary(usize),
    #[error("boundary data has {0} samples but mesh has {1} boundary vertices")]
    BoundarySizeMismatch(usize, usize),
    #[error("initial iterate is infeasible (inverted triangle)")]
    InfeasibleStart,
    #[error("point {0} could not be located in the image triangulation")]
    PointNotLocated(Complex64),
    #[error("linear solve did not converge (residual {0:.3e})")]
    LinearSolve(f64),
}

/// Monotone boundary values, one point on the unit circle per boundary
/// vertex, aligned with the mesh's `boundary_loop` order.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub values: Vec<Complex64>,
}

impl BoundaryData {
    /// Sample a circle self-map given as an angle map theta -> angle.
    pub fn from_angle_map(mesh: &TriMesh, f: impl Fn(f64) -> f64) -> Self {
        let values = mesh
            .boundary_loop
            .iter()
            .map(|&v| {
                let theta = mesh.vertices[v].arg().rem_euclid(2.0 * PI);
                Complex64::from_polar(1.0, f(theta))
            })
            .collect();
        BoundaryData { values }
    }

    pub fn identity(mesh: &TriMesh) -> Self {
        Self::from_angle_map(mesh, |t| t)
    }

    /// Check cyclic monotonicity (weakly increasing lifted arguments).
    pub fn validate(&self, mesh: &TriMesh) -> Result<(), SolverError> {
        if self.values.len() != mesh.boundary_loop.len() {
            return Err(SolverError::BoundarySizeMismatch(
                self.values.len(),
                mesh.boundary_loop.len(),
            ));
        }
        let n = self.values.len();
        let mut total = 0.0;
        for i in 0..n {
            let a = self.values[i].arg();
            let b = self.values[(i + 1) % n].arg();
            let step = (b - a).rem_euclid(2.0 * PI);
            // steps near 2pi mean the data walks backwards past this vertex
            if step > 1.75 * PI {
                return Err(SolverError::NonMonotoneBoundary(i));
            }
            total += step;
        }
        if (total - 2.0 * PI).abs() > 1e-6 {
            return Err(SolverError::NonMonotoneBoundary(0));
        }
        Ok(())
    }
}

/// Parametric boundary conditions used by experiments and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundarySpec {
    Identity,
    /// theta -> theta + a sin(theta)
    Sin { a: f64 },
    /// boundary values of the Moebius map z -> (z - a)/(1 - conj(a) z)
    Mobius { a: [f64; 2] },
    /// theta -> theta + theta0
    Rotation { theta0: f64 },
}

impl BoundarySpec {
    pub fn sample(&self, mesh: &TriMesh) -> BoundaryData {
        match *self {
            BoundarySpec::Identity => BoundaryData::identity(mesh),
            BoundarySpec::Sin { a } => BoundaryData::from_angle_map(mesh, |t| t + a * t.sin()),
            BoundarySpec::Rotation { theta0 } => {
                BoundaryData::from_angle_map(mesh, |t| t + theta0)
            }
            BoundarySpec::Mobius { a } => {
                let a = Complex64::new(a[0], a[1]);
                let values = mesh
                    .boundary_loop
                    .iter()
                    .map(|&v| {
                        let z = mesh.vertices[v] / mesh.vertices[v].norm();
                        (z - a) / (Complex64::new(1.0, 0.0) - a.conj() * z)
                    })
                    .collect();
                BoundaryData { values }
            }
        }
    }

    /// Boundary data of the inverse circle map.
    pub fn inverse(&self) -> BoundarySpec {
        match *self {
            BoundarySpec::Identity => BoundarySpec::Identity,
            BoundarySpec::Rotation { theta0 } => BoundarySpec::Rotation { theta0: -theta0 },
            BoundarySpec::Mobius { a } => BoundarySpec::Mobius { a: [-a[0], -a[1]] },
            BoundarySpec::Sin { .. } => {
                panic!("sin boundary inverse is not in the family; use inverse_angle")
            }
        }
    }

    /// Angle map of the boundary condition.
    pub fn angle(&self, theta: f64) -> f64 {
        match *self {
            BoundarySpec::Identity => theta,
            BoundarySpec::Sin { a } => theta + a * theta.sin(),
            BoundarySpec::Rotation { theta0 } => theta + theta0,
            BoundarySpec::Mobius { a } => {
                let a = Complex64::new(a[0], a[1]);
                let z = Complex64::from_polar(1.0, theta);
                ((z - a) / (Complex64::new(1.0, 0.0) - a.conj() * z)).arg()
            }
        }
    }

    /// Inverse angle map, by Newton iteration on the (strictly monotone)
    /// angle lift. Used to build the independent ground-truth oracle.
    pub fn inverse_angle(&self, target: f64) -> f64 {
        match *self {
            BoundarySpec::Identity => target,
            BoundarySpec::Rotation { theta0 } => target - theta0,
            BoundarySpec::Mobius { .. } => {
                let inv = self.inverse();
                inv.angle(target)
            }
            BoundarySpec::Sin { a } => {
                let mut t = target;
                for _ in 0..60 {
                    let f = t + a * t.sin() - target;
                    let df = 1.0 + a * t.cos();
                    let step = f / df;
                    t -= step;
                    if step.abs() < 1e-15 {
                        break;
                    }
                }
                t
            }
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            BoundarySpec::Identity => "id".into(),
            BoundarySpec::Sin { a } => format!("sin:a={a}"),
            BoundarySpec::Rotation { theta0 } => format!("rot:theta0={theta0}"),
            BoundarySpec::Mobius { a } => format!("mobius:a={}+{}i", a[0], a[1]),
        }
    }
}

/// Discrete harmonic extension of monotone boundary data (cotangent
/// Laplacian, conjugate-gradient solve, both components at once).
pub fn harmonic_extension(
    boundary: &BoundaryData,
    mesh: &Arc<TriMesh>,
) -> Result<TriMeshMap, SolverError> {
    boundary.validate(mesh)?;
    let n = mesh.n_vertices();
    let mut is_bdry = vec![false; n];
    let mut positions = vec![Complex64::new(0.0, 0.0); n];
    for (i, &v) in mesh.boundary_loop.iter().enumerate() {
        is_bdry[v] = true;
        positions[v] = boundary.values[i];
    }

    // cotangent weights per undirected edge
    let mut weights: std::collections::HashMap<(usize, usize), f64> = std::collections::HashMap::new();
    for tri in &mesh.triangles {
        for k in 0..3 {
            let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let u = mesh.vertices[a] - mesh.vertices[c];
            let v = mesh.vertices[b] - mesh.vertices[c];
            let cross = u.re * v.im - u.im * v.re;
            let dot = u.re * v.re + u.im * v.im;
            let cot = dot / cross;
            let key = (a.min(b), a.max(b));
            *weights.entry(key).or_insert(0.0) += 0.5 * cot;
        }
    }
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut keys: Vec<(&(usize, usize), &f64)> = weights.iter().collect();
    keys.sort_by_key(|(k, _)| **k);
    for (&(a, b), &w) in keys {
        adjacency[a].push((b, w));
        adjacency[b].push((a, w));
    }

    let interior: Vec<usize> = (0..n).filter(|&v| !is_bdry[v]).collect();
    let idx_of: Vec<Option<usize>> = {
        let mut m = vec![None; n];
        for (i, &v) in interior.iter().enumerate() {
            m[v] = Some(i);
        }
        m
    };

    // A x = b with A the interior cotan Laplacian block
    let apply = |x: &[Complex64]| -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); interior.len()];
        for (i, &v) in interior.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut diag = 0.0;
            for &(u, w) in &adjacency[v] {
                diag += w;
                if let Some(j) = idx_of[u] {
                    acc -= w * x[j];
                }
            }
            out[i] = diag * x[i] + acc;
        }
        out
    };
    let mut rhs = vec![Complex64::new(0.0, 0.0); interior.len()];
    for (i, &v) in interior.iter().enumerate() {
        for &(u, w) in &adjacency[v] {
            if is_bdry[u] {
                rhs[i] += w * positions[u];
            }
        }
    }

    let dot = |a: &[Complex64], b: &[Complex64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
    };
    let mut x = vec![Complex64::new(0.0, 0.0); interior.len()];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let rhs_norm = rr.sqrt().max(1e-300);
    let max_iter = 20 * (interior.len() as f64).sqrt() as usize + 200;
    for _ in 0..max_iter {
        if rr.sqrt() <= 1e-12 * rhs_norm {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() > 1e-8 * rhs_norm {
        return Err(SolverError::LinearSolve(rr.sqrt() / rhs_norm));
    }
    for (i, &v) in interior.iter().enumerate() {
        positions[v] = x[i];
    }
    Ok(TriMeshMap {
        mesh: mesh.clone(),
        image_positions: positions,
    })
}

/// Independent oracle: Poisson-integral quadrature of a boundary circle
/// map, trapezoid rule on a uniform angular grid. Shares no code with
/// `harmonic_extension` beyond the mesh.
pub fn poisson_extension(
    mesh: &Arc<TriMesh>,
    boundary_angle: impl Fn(f64) -> f64,
    n_quad: usize,
) -> TriMeshMap {
    let samples: Vec<Complex64> = (0..n_quad)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n_quad as f64;
            Complex64::from_polar(1.0, boundary_angle(t))
        })
        .collect();
    let image_positions = mesh
        .vertices
        .iter()
        .map(|&w| {
            if w.norm() > 1.0 - 1e-9 {
                let theta = w.arg().rem_euclid(2.0 * PI);
                Complex64::from_polar(1.0, boundary_angle(theta))
            } else {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, &f) in samples.iter().enumerate() {
                    let t = 2.0 * PI * i as f64 / n_quad as f64;
                    let e = Complex64::from_polar(1.0, t);
                    let kernel = (1.0 - w.norm_sqr()) / (w - e).norm_sqr();
                    acc += kernel * f;
                }
                acc / n_quad as f64
            }
        })
        .collect();
    TriMeshMap {
        mesh: mesh.clone(),
        image_positions,
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub memory: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            grad_tol: 1e-7,
            max_iter: 20000,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchStalled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub final_energy: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub min_jacobian: f64,
    /// ||Df||_{L^q} / ||Df_0||_{L^q} against the harmonic initializer,
    /// q = 2p/(p+1) for the power gauge (diagnostic only).
    pub w1q_norm_ratio: f64,
    /// max |h(f(z)) - z| over vertices and centroids, h the pseudo-inverse.
    pub roundtrip_error: f64,
    pub termination: Termination,
}

struct Objective<'a> {
    mesh: &'a TriMesh,
    gauge: &'a DistortionGauge,
    weight: &'a WeightField,
    side: EnergySide,
    /// dof index per vertex (None = pinned boundary vertex)
    dof: Vec<Option<usize>>,
    free: Vec<usize>,
    base: Vec<Complex64>,
    coeffs: Vec<([Complex64; 3], [Complex64; 3])>,
    areas: Vec<f64>,
    eta_domain: Vec<f64>,
}

impl<'a> Objective<'a> {
    fn new(
        mesh: &'a TriMesh,
        gauge: &'a DistortionGauge,
        weight: &'a WeightField,
        side: EnergySide,
        boundary: &BoundaryData,
    ) -> Self {
        let n = mesh.n_vertices();
        let mut base = vec![Complex64::new(0.0, 0.0); n];
        let mut pinned = vec![false; n];
        for (i, &v) in mesh.boundary_loop.iter().enumerate() {
            base[v] = boundary.values[i];
            pinned[v] = true;
        }
        let mut dof = vec![None; n];
        let mut free = Vec::new();
        for v in 0..n {
            if !pinned[v] {
                dof[v] = Some(free.len());
                free.push(v);
            }
        }
        let coeffs = (0..mesh.n_triangles())
            .map(|t| wirtinger_coefficients(mesh, t))
            .collect();
        let areas = (0..mesh.n_triangles()).map(|t| mesh.area(t)).collect();
        let eta_domain = (0..mesh.n_triangles())
            .map(|t| weight.eval(mesh.centroid(t)))
            .collect();
        Objective {
            mesh,
            gauge,
            weight,
            side,
            dof,
            free,
            base,
            coeffs,
            areas,
            eta_domain,
        }
    }

    fn positions(&self, x: &[f64]) -> Vec<Complex64> {
        let mut pos = self.base.clone();
        for (i, &v) in self.free.iter().enumerate() {
            pos[v] = Complex64::new(x[2 * i], x[2 * i + 1]);
        }
        pos
    }

    fn pack(&self, map: &TriMeshMap) -> Vec<f64> {
        let mut x = vec![0.0; 2 * self.free.len()];
        for (i, &v) in self.free.iter().enumerate() {
            x[2 * i] = map.image_positions[v].re;
            x[2 * i + 1] = map.image_positions[v].im;
        }
        x
    }

    /// Energy and gradient; `None` when the iterate inverts a triangle.
    fn eval(&self, x: &[f64], mut grad: Option<&mut [f64]>) -> Option<f64> {
        let pos = self.positions(x);
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut energy = 0.0;
        for t in 0..self.mesh.n_triangles() {
            let tri = self.mesh.triangles[t];
            let (c, b) = &self.coeffs[t];
            let mut f_z = Complex64::new(0.0, 0.0);
            let mut f_zbar = Complex64::new(0.0, 0.0);
            for k in 0..3 {
                f_z += c[k] * pos[tri[k]];
                f_zbar += b[k] * pos[tri[k]];
            }
            let big_a = f_z.norm_sqr();
            let big_b = f_zbar.norm_sqr();
            let jac = big_a - big_b;
            if jac <= 0.0 {
                return None;
            }
            let k_dist = (big_a + big_b) / jac;
            let area = self.areas[t];
            let dk_da = -2.0 * big_b / (jac * jac);
            let dk_db = 2.0 * big_a / (jac * jac);
            match self.side {
                EnergySide::FSide => {
                    let eta = self.eta_domain[t];
                    energy += self.gauge.eval(k_dist) * eta * area;
                    if let Some(g) = grad.as_deref_mut() {
                        let scale = self.gauge.deriv(k_dist) * eta * area;
                        for k in 0..3 {
                            if let Some(d) = self.dof[tri[k]] {
                                let ga = f_z.conj() * c[k];
                                let gb = f_zbar.conj() * b[k];
                                let da_u = 2.0 * ga.re;
                                let da_v = -2.0 * ga.im;
                                let db_u = 2.0 * gb.re;
                                let db_v = -2.0 * gb.im;
                                g[2 * d] += scale * (dk_da * da_u + dk_db * db_u);
                                g[2 * d + 1] += scale * (dk_da * da_v + dk_db * db_v);
                            }
                        }
                    }
                }
                EnergySide::HSide => {
                    let wc = (pos[tri[0]] + pos[tri[1]] + pos[tri[2]]) / 3.0;
                    let eta = self.weight.eval(wc);
                    let a_val = self.gauge.eval(k_dist);
                    energy += a_val * jac * eta * area;
                    if let Some(g) = grad.as_deref_mut() {
                        let a_der = self.gauge.deriv(k_dist);
                        let eta_z = self.weight.deriv_z(wc);
                        // real partials of eta at the image centroid
                        let (eta_x, eta_y) = (2.0 * eta_z.re, -2.0 * eta_z.im);
                        for k in 0..3 {
                            if let Some(d) = self.dof[tri[k]] {
                                let ga = f_z.conj() * c[k];
                                let gb = f_zbar.conj() * b[k];
                                let da_u = 2.0 * ga.re;
                                let da_v = -2.0 * ga.im;
                                let db_u = 2.0 * gb.re;
                                let db_v = -2.0 * gb.im;
                                let dj_u = da_u - db_u;
                                let dj_v = da_v - db_v;
                                let dk_u = dk_da * da_u + dk_db * db_u;
                                let dk_v = dk_da * da_v + dk_db * db_v;
                                g[2 * d] += area
                                    * (eta * (a_der * dk_u * jac + a_val * dj_u)
                                        + a_val * jac * eta_x / 3.0);
                                g[2 * d + 1] += area
                                    * (eta * (a_der * dk_v * jac + a_val * dj_v)
                                        + a_val * jac * eta_y / 3.0);
                            }
                        }
                    }
                }
            }
        }
        Some(energy)
    }
}

/// Minimize the chosen energy over interior image positions.
pub fn minimize_energy(
    mesh: &Arc<TriMesh>,
    boundary: &BoundaryData,
    gauge: &DistortionGauge,
    weight: &WeightField,
    side: EnergySide,
    opts: &SolveOptions,
) -> Result<(TriMeshMap, SolveReport), SolverError> {
    boundary.validate(mesh)?;
    let init = harmonic_extension(boundary, mesh)?;
    let obj = Objective::new(mesh, gauge, weight, side, boundary);
    let n_dof = 2 * obj.free.len();
    let mut x = obj.pack(&init);
    let mut grad = vec![0.0; n_dof];
    let mut energy = obj
        .eval(&x, Some(&mut grad))
        .ok_or(SolverError::InfeasibleStart)?;

    let tol = opts.grad_tol * (mesh.n_triangles() as f64).sqrt();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    // L-BFGS history
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho: Vec<f64> = Vec::new();

    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    let mut grad_norm = norm(&grad);

    while iterations < opts.max_iter {
        if grad_norm <= tol {
            termination = Termination::Converged;
            break;
        }
        // two-loop recursion
        let mut dir = grad.clone();
        let m = s_hist.len();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            alpha[i] = rho[i] * dot(&s_hist[i], &dir);
            for (d, y) in dir.iter_mut().zip(&y_hist[i]) {
                *d -= alpha[i] * y;
            }
        }
        if m > 0 {
            let gamma = dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1]);
            for d in dir.iter_mut() {
                *d *= gamma;
            }
        }
        for i in 0..m {
            let beta = rho[i] * dot(&y_hist[i], &dir);
            for (d, s) in dir.iter_mut().zip(&s_hist[i]) {
                *d += (alpha[i] - beta) * s;
            }
        }
        for d in dir.iter_mut() {
            *d = -*d;
        }
        let mut descent = dot(&dir, &grad);
        if descent >= 0.0 {
            // fall back to steepest descent
            for (d, g) in dir.iter_mut().zip(&grad) {
                *d = -g;
            }
            descent = -grad_norm * grad_norm;
            s_hist.clear();
            y_hist.clear();
            rho.clear();
        }

        // Armijo backtracking; infeasible (inverted) steps are rejected
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            if let Some(et) = obj.eval(&xt, None) {
                if et <= energy + 1e-4 * step * descent {
                    accepted = Some((xt, et));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, e_new)) = accepted else {
            termination = Termination::LineSearchStalled;
            break;
        };
        let mut grad_new = vec![0.0; n_dof];
        obj.eval(&x_new, Some(&mut grad_new))
            .expect("accepted iterate must be feasible");

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            s_hist.push(s);
            y_hist.push(y);
            rho.push(1.0 / sy);
            if s_hist.len() > opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho.remove(0);
            }
        }
        x = x_new;
        energy = e_new;
        grad = grad_new;
        grad_norm = norm(&grad);
        iterations += 1;
    }
    if grad_norm <= tol {
        termination = Termination::Converged;
    }

    let map = TriMeshMap {
        mesh: mesh.clone(),
        image_positions: obj.positions(&x),
    };
    let min_jacobian = map.min_jacobian();

    let q = gauge.sobolev_exponent().unwrap_or(1.0);
    let df_q = |m: &TriMeshMap| -> f64 {
        (0..mesh.n_triangles())
            .map(|t| {
                let d = wirtinger_raw(mesh, &m.image_positions, t);
                (d.f_z.norm() + d.f_zbar.norm()).powf(q) * mesh.area(t)
            })
            .sum::<f64>()
            .powf(1.0 / q)
    };
    let w1q_norm_ratio = df_q(&map) / df_q(&init);

    let roundtrip_error = match pseudo_inverse(&map) {
        Ok((_, err)) => err,
        Err(_) => f64::NAN,
    };

    let report = SolveReport {
        final_energy: energy,
        gradient_norm: grad_norm,
        iterations,
        min_jacobian,
        w1q_norm_ratio,
        roundtrip_error,
        termination,
    };
    Ok((map, report))
}

/// Pseudo-inverse of an orientation-preserving disk self-map: a map on the
/// same mesh whose composition with the input is the identity at sampled
/// points. Returns the map and the measured roundtrip error.
pub fn pseudo_inverse(map: &TriMeshMap) -> Result<(TriMeshMap, f64), SolverError> {
    let mesh = &map.mesh;
    let locator = Locator::new(mesh, &map.image_positions);

    // boundary: invert the circle correspondence in angle
    let nb = mesh.boundary_loop.len();
    let mut lifted = Vec::with_capacity(nb + 1);
    let first = map.image_positions[mesh.boundary_loop[0]].arg();
    let mut prev = first;
    let mut acc = first;
    for i in 0..nb {
        let a = map.image_positions[mesh.boundary_loop[i]].arg();
        let mut step = a - prev;
        if i > 0 {
            step = step.rem_euclid(2.0 * PI);
            acc += step;
        }
        prev = a;
        lifted.push(acc);
    }
    lifted.push(first + 2.0 * PI);

    let domain_angle = |i: usize| -> f64 {
        let v = mesh.boundary_loop[i % nb];
        let base = mesh.vertices[v].arg().rem_euclid(2.0 * PI);
        base + 2.0 * PI * ((i / nb) as f64)
    };

    let invert_boundary = |theta: f64| -> Complex64 {
        // find the lifted image interval containing theta (mod 2pi)
        let mut t = theta;
        while t < lifted[0] {
            t += 2.0 * PI;
        }
        while t >= lifted[nb] {
            t -= 2.0 * PI;
        }
        let mut lo = 0;
        let mut hi = nb;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if lifted[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let span = lifted[lo + 1] - lifted[lo];
        let frac = if span > 1e-300 { (t - lifted[lo]) / span } else { 0.0 };
        let ang = domain_angle(lo) * (1.0 - frac) + domain_angle(lo + 1) * frac;
        Complex64::from_polar(1.0, ang)
    };

    let mut image_positions = Vec::with_capacity(mesh.n_vertices());
    for v in 0..mesh.n_vertices() {
        let z = mesh.vertices[v];
        if mesh.is_boundary(v) {
            image_positions.push(invert_boundary(z.arg()));
        } else {
            let (t, bary) = locator
                .locate(z, 1e-7)
                .ok_or(SolverError::PointNotLocated(z))?;
            let [ia, ib, ic] = mesh.triangles[t];
            image_positions.push(
                mesh.vertices[ia] * bary[0]
                    + mesh.vertices[ib] * bary[1]
                    + mesh.vertices[ic] * bary[2],
            );
        }
    }
    let inverse = TriMeshMap {
        mesh: mesh.clone(),
        image_positions,
    };

    // roundtrip |h(f(z)) - z| over vertices and centroids
    let domain_locator = Locator::new(mesh, &mesh.vertices);
    let mut err: f64 = 0.0;
    let eval_h = |w: Complex64| -> Option<Complex64> {
        interpolate(&domain_locator, &inverse.image_positions, w, 1e-7)
    };
    for v in 0..mesh.n_vertices() {
        if let Some(h) = eval_h(map.image_positions[v]) {
            err = err.max((h - mesh.vertices[v]).norm());
        }
    }
    for t in 0..mesh.n_triangles() {
        if let Some(h) = eval_h(map.image_centroid(t)) {
            err = err.max((h - mesh.centroid(t)).norm());
        }
    }
    Ok((inverse, err))
}
