//! Detection of hairs — macroscopic vertex clusters that a monotone map
//! collapses to (nearly) a single image point — and a discrete surrogate
//! for the arclength measure of the tip set on probe circles.

use crate::mesh::{TriMesh, TriMeshMap};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HairError {
    #[error("triangle {0} is orientation-reversing (image area {1:.3e})")]
    OrientationReversed(usize, f64),
    #[error("probe radii must be strictly increasing inside (0, 1)")]
    BadProbes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hair {
    pub fiber_vertices: Vec<usize>,
    #[serde(with = "crate::mesh::complex_scalar")]
    pub image_point: Complex64,
    /// Boundary vertex belonging to the fiber, if any.
    pub tip: Option<usize>,
    /// Domain extent of the fiber (bounding-box diagonal).
    pub diameter: f64,
    pub image_diameter: f64,
    /// Min and max modulus of the fiber's domain vertices.
    pub radial_range: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HairReport {
    pub hairs: Vec<Hair>,
    pub collapse_tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TipMeasure {
    /// Max over probe circles of the summed image arclength surrogate.
    pub z_estimate: f64,
    pub per_probe: Vec<f64>,
    pub probe_radii: Vec<f64>,
    /// Indices of hairs missed by every probe circle.
    pub uncovered: Vec<usize>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn bbox_diagonal(points: impl Iterator<Item = Complex64>) -> f64 {
    let mut min = (f64::INFINITY, f64::INFINITY);
    let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min = (min.0.min(p.re), min.1.min(p.im));
        max = (max.0.max(p.re), max.1.max(p.im));
    }
    ((max.0 - min.0).powi(2) + (max.1 - min.1).powi(2)).sqrt()
}

/// Cluster vertices into near-fibers: maximal edge-connected sets whose
/// image diameter stays below `collapse_tol` and whose domain extent is
/// macroscopic. `collapse_tol = None` defaults to twice the mean image
/// edge length.
pub fn detect_hairs(
    h: &TriMeshMap,
    collapse_tol: Option<f64>,
) -> Result<HairReport, HairError> {
    let mesh: &TriMesh = &h.mesh;
    for t in 0..mesh.n_triangles() {
        let a = h.image_area(t);
        if a < -1e-12 {
            return Err(HairError::OrientationReversed(t, a));
        }
    }
    let edges = mesh.edges();
    let mean_image_edge = edges
        .iter()
        .map(|&(a, b)| (h.image_positions[a] - h.image_positions[b]).norm())
        .sum::<f64>()
        / edges.len() as f64;
    let mean_domain_edge = edges
        .iter()
        .map(|&(a, b)| (mesh.vertices[a] - mesh.vertices[b]).norm())
        .sum::<f64>()
        / edges.len() as f64;
    let tol = collapse_tol.unwrap_or(2.0 * mean_image_edge);

    // merge along edges the map collapses hard
    let mut uf = UnionFind::new(mesh.n_vertices());
    for &(a, b) in &edges {
        if (h.image_positions[a] - h.image_positions[b]).norm() <= 0.25 * tol {
            uf.union(a, b);
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..mesh.n_vertices() {
        let root = uf.find(v);
        clusters.entry(root).or_default().push(v);
    }

    let mut hairs = Vec::new();
    for (_, members) in clusters {
        if members.len() < 2 {
            continue;
        }
        let image_diameter = bbox_diagonal(members.iter().map(|&v| h.image_positions[v]));
        if image_diameter > tol {
            continue;
        }
        let diameter = bbox_diagonal(members.iter().map(|&v| mesh.vertices[v]));
        // a hair is macroscopic in the domain: well above the collapse
        // scale and the mesh scale
        if diameter < 3.0 * tol || diameter < 3.0 * mean_domain_edge {
            continue;
        }
        let image_point = members
            .iter()
            .map(|&v| h.image_positions[v])
            .sum::<Complex64>()
            / members.len() as f64;
        let tip = members
            .iter()
            .copied()
            .filter(|&v| mesh.is_boundary(v))
            .min_by(|&a, &b| {
                let da = (h.image_positions[a] - image_point).norm();
                let db = (h.image_positions[b] - image_point).norm();
                da.total_cmp(&db)
            });
        let radial_range = members.iter().fold((f64::INFINITY, 0.0_f64), |acc, &v| {
            let r = mesh.vertices[v].norm();
            (acc.0.min(r), acc.1.max(r))
        });
        hairs.push(Hair {
            fiber_vertices: members,
            image_point,
            tip,
            diameter,
            image_diameter,
            radial_range,
        });
    }
    Ok(HairReport {
        hairs,
        collapse_tol: tol,
    })
}

/// Image-arclength surrogate for the tip set: on each probe circle, sum
/// over hairs the image spread of the fiber vertices near that radius.
pub fn tip_measure(
    report: &HairReport,
    h: &TriMeshMap,
    probe_radii: &[f64],
) -> Result<TipMeasure, HairError> {
    if probe_radii.windows(2).any(|w| w[1] <= w[0])
        || probe_radii.iter().any(|&r| !(0.0 < r && r < 1.0))
    {
        return Err(HairError::BadProbes);
    }
    let mesh: &TriMesh = &h.mesh;
    let edges = mesh.edges();
    let mean_domain_edge = edges
        .iter()
        .map(|&(a, b)| (mesh.vertices[a] - mesh.vertices[b]).norm())
        .sum::<f64>()
        / edges.len() as f64;
    let band = 1.5 * mean_domain_edge;

    let mut per_probe = vec![0.0; probe_radii.len()];
    let mut covered = vec![false; report.hairs.len()];
    for (pi, &r) in probe_radii.iter().enumerate() {
        for (hi, hair) in report.hairs.iter().enumerate() {
            let on_circle: Vec<Complex64> = hair
                .fiber_vertices
                .iter()
                .filter(|&&v| (mesh.vertices[v].norm() - r).abs() <= band)
                .map(|&v| h.image_positions[v])
                .collect();
            if on_circle.is_empty() {
                continue;
            }
            covered[hi] = true;
            per_probe[pi] += bbox_diagonal(on_circle.into_iter());
        }
    }
    let uncovered = covered
        .iter()
        .enumerate()
        .filter(|(_, &c)| !c)
        .map(|(i, _)| i)
        .collect();
    let z_estimate = per_probe.iter().copied().fold(0.0, f64::max);
    Ok(TipMeasure {
        z_estimate,
        per_probe,
        probe_radii: probe_radii.to_vec(),
        uncovered,
    })
}

/// Synthetic test map: identity away from the ray at angle `theta0`, with
/// every ray vertex of modulus >= `min_radius` sent into a segment of
/// length `spread` ending at the boundary point e^{i theta0}. `spread = 0`
/// collapses the whole ray segment to the single boundary point.
pub fn synthetic_collapse(
    mesh: &Arc<TriMesh>,
    theta0: f64,
    min_radius: f64,
    spread: f64,
) -> TriMeshMap {
    let tip = Complex64::from_polar(1.0, theta0);
    let image_positions = mesh
        .vertices
        .iter()
        .map(|&z| {
            if z.norm() >= min_radius - 1e-12 {
                let mut da = (z.arg() - theta0).rem_euclid(2.0 * PI);
                if da > PI {
                    da -= 2.0 * PI;
                }
                if da.abs() < 1e-9 {
                    let t = (1.0 - z.norm()) / (1.0 - min_radius);
                    return tip * (1.0 - spread * t);
                }
            }
            z
        })
        .collect();
    TriMeshMap {
        mesh: mesh.clone(),
        image_positions,
    }
}
