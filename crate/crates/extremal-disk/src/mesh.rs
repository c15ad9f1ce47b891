//! Triangulated disk meshes and piecewise-affine complex maps.
//!
//! Everything downstream (energies, solvers, certificates) works on a
//! [`TriMesh`] of the closed unit disk together with per-vertex image
//! positions ([`TriMeshMap`]). Derivatives of a map are per-triangle
//! constants, so the Wirtinger operator and the discrete dbar residual
//! are exact on affine data.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Radial grading exponent for the concentric-ring construction.
/// Ring `j` of `R` sits at radius `(j/R)^RING_GRADING`; values above 1
/// concentrate rings near the origin, which keeps the quadrature error
/// of maps with a radial corner at 0 (e.g. `z|z|^{s-1}`) below the
/// per-refinement budget.
const RING_GRADING: f64 = 1.25;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("n_boundary must be at least 8, got {0}")]
    BoundaryTooSmall(usize),
    #[error("triangle {0} is degenerate (area {1:.3e})")]
    DegenerateTriangle(usize, f64),
    #[error("triangle index {0} out of range ({1} triangles)")]
    TriangleOutOfRange(usize, usize),
    #[error("field has {0} entries but mesh has {1} vertices")]
    FieldSizeMismatch(usize, usize),
    #[error("point {0} not inside the mesh")]
    PointNotLocated(Complex64),
}

/// Conforming, positively oriented triangulation of the closed unit disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriMesh {
    #[serde(with = "complex_pairs")]
    pub vertices: Vec<Complex64>,
    pub triangles: Vec<[usize; 3]>,
    /// Boundary vertex indices in counterclockwise order starting at angle 0.
    pub boundary_loop: Vec<usize>,
    pub refinement_level: u32,
}

/// Complex vectors serialize as arrays of `[re, im]` pairs.
pub mod complex_pairs {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

/// Serde helper for a single complex scalar as an [re, im] pair.
pub mod complex_scalar {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [v.re, v.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

impl TriMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        // boundary vertices are the trailing block in the ring construction
        self.vertices[v].norm() > 1.0 - 1e-9
    }

    /// Signed area of triangle `t` in the domain.
    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Complex64 {
        let [a, b, c] = self.triangles[t];
        (self.vertices[a] + self.vertices[b] + self.vertices[c]) / 3.0
    }

    /// Longest edge over all triangles; shrinks by ~1/2 per refinement level.
    pub fn max_diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for t in &self.triangles {
            for k in 0..3 {
                d = d.max((self.vertices[t[k]] - self.vertices[t[(k + 1) % 3]]).norm());
            }
        }
        d
    }

    /// Undirected edge list (each edge once).
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.n_triangles() * 3 / 2);
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if a < b {
                    edges.push((a, b));
                } else {
                    edges.push((b, a));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Triangles incident to each vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut incident = vec![Vec::new(); self.n_vertices()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                incident[v].push(t);
            }
        }
        incident
    }
}

pub fn signed_area(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    let u = b - a;
    let v = c - a;
    0.5 * (u.re * v.im - u.im * v.re)
}

/// Deterministic concentric-ring triangulation of the unit disk.
///
/// Ring `j` (of `R = 2^refinement`) carries `n_boundary * j` vertices, so
/// the outermost ring has `n_boundary * 2^refinement` boundary vertices
/// and each sector strip is triangulated the same way on every run.
pub fn build_disk_mesh(n_boundary: usize, refinement: u32) -> Result<TriMesh, MeshError> {
    if n_boundary < 8 {
        return Err(MeshError::BoundaryTooSmall(n_boundary));
    }
    // Sector width stays at 8 when it divides n_boundary so that the ring
    // count (and with it the radial resolution) grows with n_boundary too.
    let s = if n_boundary % 8 == 0 { 8 } else { n_boundary };
    let rings = (n_boundary / s) << refinement;

    let ring_start = |j: usize| -> usize {
        // center is vertex 0; ring j >= 1 starts after rings 1..j-1
        1 + s * (j * (j - 1)) / 2
    };
    let mut vertices = vec![Complex64::new(0.0, 0.0)];
    for j in 1..=rings {
        let r = if j == rings {
            1.0
        } else {
            (j as f64 / rings as f64).powf(RING_GRADING)
        };
        let count = s * j;
        for k in 0..count {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            vertices.push(Complex64::from_polar(r, theta));
        }
    }

    let mut triangles = Vec::with_capacity(s * rings * rings);
    // center fan
    for k in 0..s {
        triangles.push([0, 1 + k, 1 + (k + 1) % s]);
    }
    // strips between ring j and ring j+1
    for j in 1..rings {
        let inner = ring_start(j);
        let outer = ring_start(j + 1);
        let n_in = s * j;
        let n_out = s * (j + 1);
        for m in 0..s {
            for t in 0..=j {
                let i0 = inner + (m * j + t) % n_in;
                let o0 = outer + (m * (j + 1) + t) % n_out;
                let o1 = outer + (m * (j + 1) + t + 1) % n_out;
                triangles.push([i0, o0, o1]);
                if t < j {
                    let i1 = inner + (m * j + t + 1) % n_in;
                    triangles.push([i0, o1, i1]);
                }
            }
        }
    }

    let boundary_loop: Vec<usize> = (0..s * rings).map(|k| ring_start(rings) + k).collect();
    let mesh = TriMesh {
        vertices,
        triangles,
        boundary_loop,
        refinement_level: refinement,
    };
    for t in 0..mesh.n_triangles() {
        let a = mesh.area(t);
        if a <= 0.0 {
            return Err(MeshError::DegenerateTriangle(t, a));
        }
    }
    Ok(mesh)
}

/// Piecewise-affine map of the disk: the mesh plus one image point per vertex.
///
/// Serializes to the flat document {"vertices", "triangles", "image",
/// "boundary_loop", "refinement_level"} with complex values as [re, im].
#[derive(Debug, Clone)]
pub struct TriMeshMap {
    pub mesh: Arc<TriMesh>,
    pub image_positions: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct TriMeshMapWire {
    #[serde(with = "complex_pairs")]
    vertices: Vec<Complex64>,
    triangles: Vec<[usize; 3]>,
    #[serde(with = "complex_pairs")]
    image: Vec<Complex64>,
    boundary_loop: Vec<usize>,
    #[serde(default)]
    refinement_level: u32,
}

impl Serialize for TriMeshMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TriMeshMapWire {
            vertices: self.mesh.vertices.clone(),
            triangles: self.mesh.triangles.clone(),
            image: self.image_positions.clone(),
            boundary_loop: self.mesh.boundary_loop.clone(),
            refinement_level: self.mesh.refinement_level,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TriMeshMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = TriMeshMapWire::deserialize(d)?;
        Ok(TriMeshMap {
            mesh: Arc::new(TriMesh {
                vertices: wire.vertices,
                triangles: wire.triangles,
                boundary_loop: wire.boundary_loop,
                refinement_level: wire.refinement_level,
            }),
            image_positions: wire.image,
        })
    }
}

/// Exact Wirtinger derivatives of the affine map on one triangle.
#[derive(Debug, Clone, Copy)]
pub struct DerivativeSample {
    pub f_z: Complex64,
    pub f_zbar: Complex64,
    pub jacobian: f64,
    pub triangle_id: usize,
}

impl DerivativeSample {
    pub fn new(f_z: Complex64, f_zbar: Complex64, triangle_id: usize) -> Self {
        DerivativeSample {
            f_z,
            f_zbar,
            jacobian: f_z.norm_sqr() - f_zbar.norm_sqr(),
            triangle_id,
        }
    }
}

impl TriMeshMap {
    pub fn identity(mesh: Arc<TriMesh>) -> Self {
        let image_positions = mesh.vertices.clone();
        TriMeshMap {
            mesh,
            image_positions,
        }
    }

    pub fn from_fn(mesh: Arc<TriMesh>, f: impl Fn(Complex64) -> Complex64) -> Self {
        let image_positions = mesh.vertices.iter().map(|&z| f(z)).collect();
        TriMeshMap {
            mesh,
            image_positions,
        }
    }

    /// Signed area of the image of triangle `t`.
    pub fn image_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.mesh.triangles[t];
        signed_area(
            self.image_positions[a],
            self.image_positions[b],
            self.image_positions[c],
        )
    }

    pub fn min_image_area(&self) -> f64 {
        (0..self.mesh.n_triangles())
            .map(|t| self.image_area(t))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn orientation_flags(&self) -> Vec<i8> {
        (0..self.mesh.n_triangles())
            .map(|t| {
                let a = self.image_area(t);
                if a > 0.0 {
                    1
                } else if a < 0.0 {
                    -1
                } else {
                    0
                }
            })
            .collect()
    }

    /// Image of the centroid of triangle `t` (affine, so just the average).
    pub fn image_centroid(&self, t: usize) -> Complex64 {
        let [a, b, c] = self.mesh.triangles[t];
        (self.image_positions[a] + self.image_positions[b] + self.image_positions[c]) / 3.0
    }

    /// Smallest per-triangle Jacobian of the map.
    pub fn min_jacobian(&self) -> f64 {
        (0..self.mesh.n_triangles())
            .map(|t| wirtinger_raw(&self.mesh, &self.image_positions, t).jacobian)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Wirtinger derivatives of `map` on triangle `triangle_id`.
pub fn wirtinger(map: &TriMeshMap, triangle_id: usize) -> Result<DerivativeSample, MeshError> {
    let mesh = &map.mesh;
    if triangle_id >= mesh.n_triangles() {
        return Err(MeshError::TriangleOutOfRange(
            triangle_id,
            mesh.n_triangles(),
        ));
    }
    let a = mesh.area(triangle_id);
    if a <= 0.0 {
        return Err(MeshError::DegenerateTriangle(triangle_id, a));
    }
    Ok(wirtinger_raw(mesh, &map.image_positions, triangle_id))
}

/// Derivatives of the affine interpolant of a per-vertex complex field.
pub(crate) fn wirtinger_raw(
    mesh: &TriMesh,
    values: &[Complex64],
    triangle_id: usize,
) -> DerivativeSample {
    let [ia, ib, ic] = mesh.triangles[triangle_id];
    let e1 = mesh.vertices[ib] - mesh.vertices[ia];
    let e2 = mesh.vertices[ic] - mesh.vertices[ia];
    let d1 = values[ib] - values[ia];
    let d2 = values[ic] - values[ia];
    // d_k = f_z e_k + f_zbar conj(e_k); D is purely imaginary (= -4i * area)
    let det = e1 * e2.conj() - e2 * e1.conj();
    let f_z = (d1 * e2.conj() - d2 * e1.conj()) / det;
    let f_zbar = (d2 * e1 - d1 * e2) / det;
    DerivativeSample::new(f_z, f_zbar, triangle_id)
}

/// Coefficients c_k, b_k with f_z = sum c_k w_k, f_zbar = sum b_k w_k over
/// the triangle's image vertices. Used by the solver's analytic gradient.
pub(crate) fn wirtinger_coefficients(
    mesh: &TriMesh,
    triangle_id: usize,
) -> ([Complex64; 3], [Complex64; 3]) {
    let [ia, ib, ic] = mesh.triangles[triangle_id];
    let e1 = mesh.vertices[ib] - mesh.vertices[ia];
    let e2 = mesh.vertices[ic] - mesh.vertices[ia];
    let det = e1 * e2.conj() - e2 * e1.conj();
    let c = [
        (e1.conj() - e2.conj()) / det,
        e2.conj() / det,
        -e1.conj() / det,
    ];
    let b = [(e2 - e1) / det, -e2 / det, e1 / det];
    (c, b)
}

/// Per-triangle dbar residual of the affine interpolant of a vertex field,
/// plus its area-weighted L1 norm. Vanishes identically on fields `a + b z`.
pub fn dbar_residual(
    field: &[Complex64],
    mesh: &TriMesh,
) -> Result<(Vec<Complex64>, f64), MeshError> {
    if field.len() != mesh.n_vertices() {
        return Err(MeshError::FieldSizeMismatch(field.len(), mesh.n_vertices()));
    }
    let mut residual = Vec::with_capacity(mesh.n_triangles());
    let mut l1 = 0.0;
    for t in 0..mesh.n_triangles() {
        let d = wirtinger_raw(mesh, field, t);
        residual.push(d.f_zbar);
        l1 += d.f_zbar.norm() * mesh.area(t);
    }
    Ok((residual, l1))
}

/// Uniform-grid point locator over the triangles of a planar triangulation.
///
/// Target positions may be the mesh vertices themselves (domain lookup) or
/// the image positions of a map (inverse lookup).
pub struct Locator<'a> {
    mesh: &'a TriMesh,
    positions: &'a [Complex64],
    cells: Vec<Vec<usize>>,
    nx: usize,
    ny: usize,
    min: (f64, f64),
    cell: f64,
}

impl<'a> Locator<'a> {
    pub fn new(mesh: &'a TriMesh, positions: &'a [Complex64]) -> Self {
        let (mut xmin, mut ymin, mut xmax, mut ymax) =
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in positions {
            xmin = xmin.min(p.re);
            ymin = ymin.min(p.im);
            xmax = xmax.max(p.re);
            ymax = ymax.max(p.im);
        }
        let n = (mesh.n_triangles() as f64).sqrt().ceil() as usize;
        let nx = n.max(1);
        let ny = n.max(1);
        let cell = ((xmax - xmin).max(ymax - ymin) / nx as f64).max(1e-12);
        let mut cells = vec![Vec::new(); nx * ny];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let xs = tri.map(|v| positions[v].re);
            let ys = tri.map(|v| positions[v].im);
            let cx0 = Self::clamp_idx((xs.iter().cloned().fold(f64::INFINITY, f64::min) - xmin) / cell, nx);
            let cx1 = Self::clamp_idx((xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xmin) / cell, nx);
            let cy0 = Self::clamp_idx((ys.iter().cloned().fold(f64::INFINITY, f64::min) - ymin) / cell, ny);
            let cy1 = Self::clamp_idx((ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ymin) / cell, ny);
            for cx in cx0..=cx1 {
                for cy in cy0..=cy1 {
                    cells[cy * nx + cx].push(t);
                }
            }
        }
        Locator {
            mesh,
            positions,
            cells,
            nx,
            ny,
            min: (xmin, ymin),
            cell,
        }
    }

    fn clamp_idx(x: f64, n: usize) -> usize {
        (x.floor().max(0.0) as usize).min(n - 1)
    }

    /// Triangle containing `p` and its barycentric coordinates. Points up to
    /// `slack` outside an edge are snapped onto the nearest triangle.
    pub fn locate(&self, p: Complex64, slack: f64) -> Option<(usize, [f64; 3])> {
        let cx = Self::clamp_idx((p.re - self.min.0) / self.cell, self.nx);
        let cy = Self::clamp_idx((p.im - self.min.1) / self.cell, self.ny);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        let consider = |t: usize, best: &mut Option<(usize, [f64; 3], f64)>| {
            if let Some(b) = self.barycentric(t, p) {
                let worst = b[0].min(b[1]).min(b[2]);
                match best {
                    Some((_, _, w)) if *w >= worst => {}
                    _ => *best = Some((t, b, worst)),
                }
            }
        };
        for t in &self.cells[cy * self.nx + cx] {
            consider(*t, &mut best);
            if let Some((_, _, w)) = best {
                if w >= 0.0 {
                    break;
                }
            }
        }
        match best {
            Some((t, b, w)) if w >= -slack => return Some((t, clamp_bary(b))),
            _ => {}
        }
        // fall back to a full scan (rare: points near cell borders or hull)
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for t in 0..self.mesh.n_triangles() {
            consider(t, &mut best);
        }
        match best {
            Some((t, b, w)) if w >= -slack => Some((t, clamp_bary(b))),
            _ => None,
        }
    }

    fn barycentric(&self, t: usize, p: Complex64) -> Option<[f64; 3]> {
        let [ia, ib, ic] = self.mesh.triangles[t];
        let (a, b, c) = (self.positions[ia], self.positions[ib], self.positions[ic]);
        let area = signed_area(a, b, c);
        if area.abs() < 1e-300 {
            return None;
        }
        let wa = signed_area(p, b, c) / area;
        let wb = signed_area(a, p, c) / area;
        let wc = signed_area(a, b, p) / area;
        Some([wa, wb, wc])
    }
}

fn clamp_bary(b: [f64; 3]) -> [f64; 3] {
    let c = b.map(|x| x.max(0.0));
    let s = c[0] + c[1] + c[2];
    c.map(|x| x / s)
}

/// Evaluate the affine interpolant of `values` at `p` via a locator.
pub fn interpolate(
    locator: &Locator,
    values: &[Complex64],
    p: Complex64,
    slack: f64,
) -> Option<Complex64> {
    let (t, bary) = locator.locate(p, slack)?;
    let [ia, ib, ic] = locator.mesh.triangles[t];
    Some(values[ia] * bary[0] + values[ib] * bary[1] + values[ic] * bary[2])
}
