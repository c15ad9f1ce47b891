//! Moebius disk automorphisms, Fuchsian groups (trivial, cyclic, and the
//! genus-2 regular-octagon surface group), the Poincare-series weight, and
//! the energy-transfer bookkeeping between the fundamental domain and the
//! disk.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FuchsianError {
    #[error("matrix is not a disk automorphism (|a|^2 - |b|^2 = {0})")]
    NotNormalizable(f64),
    #[error("fundamental-domain quadrature produced a nonpositive cell at {0}")]
    DegenerateCell(usize),
}

/// Disk automorphism z -> (a z + b) / (conj(b) z + conj(a)) with
/// |a|^2 - |b|^2 = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobiusTransform {
    #[serde(with = "crate::mesh::complex_scalar")]
    pub a: Complex64,
    #[serde(with = "crate::mesh::complex_scalar")]
    pub b: Complex64,
}

impl MobiusTransform {
    pub fn new(a: Complex64, b: Complex64) -> Result<Self, FuchsianError> {
        let det = a.norm_sqr() - b.norm_sqr();
        if det <= 0.0 {
            return Err(FuchsianError::NotNormalizable(det));
        }
        let s = det.sqrt();
        Ok(MobiusTransform { a: a / s, b: b / s })
    }

    pub fn identity() -> Self {
        MobiusTransform {
            a: Complex64::new(1.0, 0.0),
            b: Complex64::new(0.0, 0.0),
        }
    }

    /// Hyperbolic translation by distance `t` along the real axis.
    pub fn translation(t: f64) -> Self {
        MobiusTransform {
            a: Complex64::new((t / 2.0).cosh(), 0.0),
            b: Complex64::new((t / 2.0).sinh(), 0.0),
        }
    }

    /// Rotation by `theta` about the origin.
    pub fn rotation(theta: f64) -> Self {
        MobiusTransform {
            a: Complex64::from_polar(1.0, theta / 2.0),
            b: Complex64::new(0.0, 0.0),
        }
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        (self.a * z + self.b) / (self.b.conj() * z + self.a.conj())
    }

    pub fn deriv(&self, z: Complex64) -> Complex64 {
        let d = self.b.conj() * z + self.a.conj();
        1.0 / (d * d)
    }

    pub fn inverse(&self) -> Self {
        MobiusTransform {
            a: self.a.conj(),
            b: -self.b,
        }
    }

    /// Composition self after other.
    pub fn compose(&self, other: &MobiusTransform) -> Self {
        MobiusTransform {
            a: self.a * other.a + self.b * other.b.conj(),
            b: self.a * other.b + self.b * other.a.conj(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FuchsianGroup {
    pub generators: Vec<MobiusTransform>,
}

impl FuchsianGroup {
    pub fn trivial() -> Self {
        FuchsianGroup {
            generators: Vec::new(),
        }
    }

    /// Infinite cyclic group generated by a hyperbolic translation along
    /// the axis through +-1.
    pub fn cyclic(translation_length: f64) -> Self {
        FuchsianGroup {
            generators: vec![MobiusTransform::translation(translation_length)],
        }
    }

    /// Genus-2 surface group from the regular hyperbolic octagon: four
    /// side-pairing translations along axes at angles k pi/4, each of
    /// length 2 arccosh(1 + sqrt 2).
    pub fn octagon() -> Self {
        let cosh_half = 1.0 + 2.0_f64.sqrt();
        let sinh_half = (cosh_half * cosh_half - 1.0).sqrt();
        let generators = (0..4)
            .map(|k| {
                let theta = k as f64 * PI / 4.0;
                MobiusTransform {
                    a: Complex64::new(cosh_half, 0.0),
                    b: Complex64::from_polar(sinh_half, theta),
                }
            })
            .collect();
        FuchsianGroup { generators }
    }

    /// All distinct elements of word length exactly k for k = 0..=n, by
    /// breadth-first search over freely reduced words with numeric
    /// deduplication at a probe point.
    pub fn enumerate_shells(&self, n: usize) -> Vec<Vec<MobiusTransform>> {
        let probe1 = Complex64::new(0.1234, 0.2071);
        let probe2 = Complex64::new(-0.3107, 0.0531);
        let key = |g: &MobiusTransform| -> (i64, i64, i64, i64) {
            let w1 = g.apply(probe1);
            let w2 = g.apply(probe2);
            let q = 1e9;
            (
                (w1.re * q).round() as i64,
                (w1.im * q).round() as i64,
                (w2.re * q).round() as i64,
                (w2.im * q).round() as i64,
            )
        };
        // letters: generators and their inverses; letter i and its inverse
        // pair via i ^ 1 after interleaving
        let mut letters = Vec::new();
        for g in &self.generators {
            letters.push(*g);
            letters.push(g.inverse());
        }
        let mut seen: HashMap<(i64, i64, i64, i64), ()> = HashMap::new();
        let id = MobiusTransform::identity();
        seen.insert(key(&id), ());
        let mut shells = vec![vec![id]];
        // frontier carries (element, index of last letter) to skip the
        // immediate cancellation g * g^{-1}
        let mut frontier: Vec<(MobiusTransform, usize)> = vec![(id, usize::MAX)];
        for _ in 0..n {
            let mut next_shell = Vec::new();
            let mut next_frontier = Vec::new();
            for &(g, last) in &frontier {
                for (i, l) in letters.iter().enumerate() {
                    if last != usize::MAX && i == last ^ 1 {
                        continue;
                    }
                    let h = g.compose(l);
                    if seen.insert(key(&h), ()).is_none() {
                        next_shell.push(h);
                        next_frontier.push((h, i));
                    }
                }
            }
            shells.push(next_shell);
            frontier = next_frontier;
        }
        shells
    }

    /// All distinct elements of word length at most `n`.
    pub fn enumerate(&self, n: usize) -> Vec<MobiusTransform> {
        self.enumerate_shells(n).into_iter().flatten().collect()
    }
}

/// Truncated Poincare-series weight alpha_N(z) = sum over words of length
/// <= N of (1 - |gamma(z)|^2)^2.
#[derive(Debug, Clone)]
pub struct PoincareWeight {
    pub shells: Vec<Vec<MobiusTransform>>,
    pub cutoff: usize,
}

impl PoincareWeight {
    pub fn new(group: &FuchsianGroup, cutoff: usize) -> Self {
        PoincareWeight {
            shells: group.enumerate_shells(cutoff),
            cutoff,
        }
    }

    pub fn eval(&self, z: Complex64) -> f64 {
        self.eval_with_tail(z).0
    }

    /// Value together with the last-shell contribution, the reported (but
    /// heuristic) truncation-tail estimate.
    pub fn eval_with_tail(&self, z: Complex64) -> (f64, f64) {
        let mut total = 0.0;
        let mut last = 0.0;
        for (k, shell) in self.shells.iter().enumerate() {
            let s: f64 = shell
                .iter()
                .map(|g| {
                    let t = 1.0 - g.apply(z).norm_sqr();
                    t * t
                })
                .sum();
            total += s;
            if k == self.shells.len() - 1 {
                last = s;
            }
        }
        (total, last)
    }
}

/// Max over samples and elements of |alpha_N(beta(z)) - alpha_N(z)|.
pub fn automorphy_error(
    weight: &PoincareWeight,
    samples: &[Complex64],
    test_elements: &[MobiusTransform],
) -> f64 {
    let mut worst = 0.0_f64;
    for &z in samples {
        let base = weight.eval(z);
        for beta in test_elements {
            worst = worst.max((weight.eval(beta.apply(z)) - base).abs());
        }
    }
    worst
}

/// Triangulated quadrature domain: centroids and Euclidean cell areas of
/// either the regular hyperbolic octagon (geodesic sides) or the disk.
#[derive(Debug, Clone)]
pub struct FundamentalDomain {
    pub centroids: Vec<Complex64>,
    pub areas: Vec<f64>,
}

/// Points along the hyperbolic geodesic from z1 to z2, endpoints included.
fn geodesic_points(z1: Complex64, z2: Complex64, m: usize) -> Vec<Complex64> {
    // move z1 to the origin; the geodesic becomes a Euclidean segment
    let to_zero = |z: Complex64| (z - z1) / (Complex64::new(1.0, 0.0) - z1.conj() * z);
    let from_zero = |w: Complex64| (w + z1) / (Complex64::new(1.0, 0.0) + z1.conj() * w);
    let w2 = to_zero(z2);
    (0..=m)
        .map(|i| from_zero(w2 * (i as f64 / m as f64)))
        .collect()
}

impl FundamentalDomain {
    /// Regular octagon with vertices at Euclidean radius tanh(d_v/2),
    /// cosh(d_v) = cot^2(pi/8), sides sampled along geodesics, interior
    /// triangulated in layers graded toward the boundary.
    pub fn octagon(refinement: u32) -> Result<Self, FuchsianError> {
        let cosh_dv = 3.0 + 2.0 * 2.0_f64.sqrt();
        let r_v = ((cosh_dv - 1.0) / (cosh_dv + 1.0)).sqrt();
        let vertices: Vec<Complex64> = (0..8)
            .map(|k| Complex64::from_polar(r_v, PI / 8.0 + k as f64 * PI / 4.0))
            .collect();
        let m = 6usize << refinement;
        let mut boundary = Vec::with_capacity(8 * m);
        for k in 0..8 {
            let side = geodesic_points(vertices[k], vertices[(k + 1) % 8], m);
            boundary.extend_from_slice(&side[..m]);
        }
        let layers = 10usize << refinement;
        let n = boundary.len();
        // layer scales graded toward the boundary, where the hyperbolic
        // density is largest
        let scale = |l: usize| (l as f64 / layers as f64).powf(0.7);
        let mut centroids = Vec::new();
        let mut areas = Vec::new();
        let mut push = |a: Complex64, b: Complex64, c: Complex64| {
            let area = 0.5 * ((b - a).re * (c - a).im - (b - a).im * (c - a).re);
            centroids.push((a + b + c) / 3.0);
            areas.push(area);
        };
        for i in 0..n {
            let j = (i + 1) % n;
            push(
                Complex64::new(0.0, 0.0),
                boundary[i] * scale(1),
                boundary[j] * scale(1),
            );
        }
        for l in 1..layers {
            let (s0, s1) = (scale(l), scale(l + 1));
            for i in 0..n {
                let j = (i + 1) % n;
                push(boundary[i] * s0, boundary[i] * s1, boundary[j] * s1);
                push(boundary[i] * s0, boundary[j] * s1, boundary[j] * s0);
            }
        }
        for (i, &a) in areas.iter().enumerate() {
            if a <= 0.0 {
                return Err(FuchsianError::DegenerateCell(i));
            }
        }
        Ok(FundamentalDomain { centroids, areas })
    }

    /// The whole disk (fundamental domain of the trivial group).
    pub fn disk(refinement: u32) -> Result<Self, FuchsianError> {
        let mesh = crate::mesh::build_disk_mesh(32, refinement)
            .map_err(|_| FuchsianError::DegenerateCell(0))?;
        let centroids = (0..mesh.n_triangles()).map(|t| mesh.centroid(t)).collect();
        let areas = (0..mesh.n_triangles()).map(|t| mesh.area(t)).collect();
        Ok(FundamentalDomain { centroids, areas })
    }

    pub fn integrate(&self, f: impl Fn(Complex64) -> f64) -> f64 {
        self.centroids
            .iter()
            .zip(&self.areas)
            .map(|(&z, &a)| f(z) * a)
            .sum()
    }

    pub fn euclidean_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Hyperbolic area in the curvature -1 normalization, density
    /// 4/(1-|z|^2)^2; the regular octagon must give 4 pi (Gauss-Bonnet for
    /// genus 2).
    pub fn hyperbolic_area(&self) -> f64 {
        self.integrate(|z| {
            let d = 1.0 - z.norm_sqr();
            4.0 / (d * d)
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TransferReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Last-shell contributions to each side.
    pub lhs_tail: f64,
    pub rhs_tail: f64,
}

/// Compare both sides of the energy-transfer identity for a distortion
/// field K(z) given on the fundamental domain: the weighted fundamental
/// domain integral of K^p alpha_N/(1-|z|^2)^2 against the tiled disk
/// integral of K^p over all translates of word length <= N.
pub fn transfer_identity_check(
    k_field: impl Fn(Complex64) -> f64,
    p: f64,
    domain: &FundamentalDomain,
    group: &FuchsianGroup,
    cutoff: usize,
) -> TransferReport {
    let shells = group.enumerate_shells(cutoff);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let mut lhs_tail = 0.0;
    let mut rhs_tail = 0.0;
    for (k, shell) in shells.iter().enumerate() {
        let mut l = 0.0;
        let mut r = 0.0;
        for g in shell {
            // lhs: this element's term of alpha_N/(1-|z|^2)^2 weighting K^p
            l += domain.integrate(|z| {
                let t = 1.0 - g.apply(z).norm_sqr();
                let d = 1.0 - z.norm_sqr();
                k_field(z).powf(p) * (t * t) / (d * d)
            });
            // rhs: integral of K^p over the tile gamma(P), pulled back
            r += domain.integrate(|z| {
                k_field(g.apply(z)).powf(p) * g.deriv(z).norm_sqr()
            });
        }
        lhs += l;
        rhs += r;
        if k == shells.len() - 1 {
            lhs_tail = l;
            rhs_tail = r;
        }
    }
    TransferReport {
        lhs,
        rhs,
        lhs_tail,
        rhs_tail,
    }
}

/// Partial sums of the L1 mass of an automorphic quadratic differential
/// over growing unions of tiles: returns (element count, sum of
/// per-tile integrals of |Phi|) cumulatively per shell. Phi transforms as
/// Phi(gamma z) = Phi(z)/gamma'(z)^2, so every tile carries the same mass.
pub fn automorphic_phi_l1_growth(
    phi: impl Fn(Complex64) -> Complex64,
    domain: &FundamentalDomain,
    group: &FuchsianGroup,
    cutoff: usize,
) -> Vec<(usize, f64)> {
    let shells = group.enumerate_shells(cutoff);
    let mut out = Vec::with_capacity(shells.len());
    let mut count = 0;
    let mut total = 0.0;
    for shell in &shells {
        for g in shell {
            // integral over gamma(P) by change of variables, with the
            // automorphic transformation rule supplying Phi on the tile
            total += domain.integrate(|z| {
                let dg = g.deriv(z);
                (phi(z) / (dg * dg)).norm() * dg.norm_sqr()
            });
            count += 1;
        }
        out.push((count, total));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mobius_algebra() {
        let g = MobiusTransform::new(Complex64::new(1.3, 0.2), Complex64::new(0.4, -0.5)).unwrap();
        let h = MobiusTransform::translation(0.7);
        let z = Complex64::new(0.3, -0.4);
        // composition and inverse
        assert!((g.compose(&h).apply(z) - g.apply(h.apply(z))).norm() < 1e-14);
        assert!((g.compose(&g.inverse()).apply(z) - z).norm() < 1e-14);
        // disk automorphism: |g(0)| < 1, boundary preserved
        assert!(g.apply(Complex64::new(0.0, 0.0)).norm() < 1.0);
        for i in 0..16 {
            let w = Complex64::from_polar(1.0, i as f64 * PI / 8.0);
            assert!((g.apply(w).norm() - 1.0).abs() < 1e-12);
        }
        // the conformal identity |g'(z)| (1-|z|^2) = 1 - |g(z)|^2
        assert_relative_eq!(
            g.deriv(z).norm() * (1.0 - z.norm_sqr()),
            1.0 - g.apply(z).norm_sqr(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn trivial_weight_is_exact() {
        let w = PoincareWeight::new(&FuchsianGroup::trivial(), 3);
        assert_eq!(w.eval(Complex64::new(0.0, 0.0)), 1.0);
        assert_relative_eq!(
            w.eval(Complex64::new(0.5, 0.0)),
            0.5625,
            max_relative = 1e-15
        );
        let samples = [Complex64::new(0.2, 0.1), Complex64::new(-0.4, 0.3)];
        assert_eq!(
            automorphy_error(&w, &samples, &[MobiusTransform::identity()]),
            0.0
        );
    }

    #[test]
    fn cyclic_group_enumeration_counts() {
        let g = FuchsianGroup::cyclic(2.0);
        let shells = g.enumerate_shells(5);
        // shells: {id}, {t, t^-1}, {t^2, t^-2}, ...
        assert_eq!(shells[0].len(), 1);
        for k in 1..=5 {
            assert_eq!(shells[k].len(), 2, "shell {k}");
        }
    }

    #[test]
    fn cyclic_automorphy_below_tail() {
        // short translation length keeps the shell-12 tail well above
        // floating-point noise, so the comparison is meaningful
        let group = FuchsianGroup::cyclic(0.8);
        let weight = PoincareWeight::new(&group, 12);
        let samples: Vec<Complex64> = (0..8)
            .map(|i| Complex64::from_polar(0.5 * i as f64 / 8.0, i as f64))
            .collect();
        let err = automorphy_error(&weight, &samples, &group.generators);
        let tail = samples
            .iter()
            .map(|&z| weight.eval_with_tail(z).1)
            .fold(0.0, f64::max);
        assert!(err > 0.0);
        assert!(err <= 2.0 * tail, "err {err:.3e} vs tail {tail:.3e}");
    }

    #[test]
    fn octagon_generators_are_automorphisms() {
        let group = FuchsianGroup::octagon();
        assert_eq!(group.generators.len(), 4);
        for g in &group.generators {
            assert_relative_eq!(g.a.norm_sqr() - g.b.norm_sqr(), 1.0, max_relative = 1e-12);
            // translation length 2 arccosh(1 + sqrt 2): g(0) at Euclidean
            // radius tanh of half that
            let reach = g.apply(Complex64::new(0.0, 0.0)).norm();
            let expected = ((1.0_f64 + 2.0_f64.sqrt()).acosh()).tanh();
            assert_relative_eq!(reach, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn octagon_weight_converges_in_cutoff() {
        let group = FuchsianGroup::octagon();
        let z = Complex64::new(0.0, 0.0);
        let mut values = Vec::new();
        for n in 1..=4 {
            values.push(PoincareWeight::new(&group, n).eval(z));
        }
        for w in values.windows(2) {
            assert!(w[1] > w[0], "values {values:?}");
        }
        // successive shell contributions shrink geometrically
        let d1 = values[1] - values[0];
        let d2 = values[2] - values[1];
        let d3 = values[3] - values[2];
        assert!(d2 < d1 && d3 < d2, "shell increments {d1} {d2} {d3}");
        assert!(d3 / d2 < 0.8, "ratio {}", d3 / d2);
    }

    #[test]
    fn octagon_automorphy_error_decreases() {
        let group = FuchsianGroup::octagon();
        let samples: Vec<Complex64> = (0..6)
            .map(|i| Complex64::from_polar(0.08 * i as f64, 1.7 * i as f64))
            .collect();
        let e3 = automorphy_error(&PoincareWeight::new(&group, 3), &samples, &group.generators);
        let e5 = automorphy_error(&PoincareWeight::new(&group, 5), &samples, &group.generators);
        assert!(e5 < e3, "e3 {e3:.3e} e5 {e5:.3e}");
    }

    #[test]
    fn octagon_gauss_bonnet() {
        let domain = FundamentalDomain::octagon(2).unwrap();
        let area = domain.hyperbolic_area();
        assert!(
            (area - 4.0 * PI).abs() / (4.0 * PI) < 0.01,
            "hyperbolic area {area} vs {}",
            4.0 * PI
        );
    }

    #[test]
    fn projection_identity_for_constants() {
        // int_P c/(1-|z|^2)^2 = c * hyperbolic area / 4
        let domain = FundamentalDomain::octagon(2).unwrap();
        let c = 2.3;
        let proj = domain.integrate(|z| {
            let d = 1.0 - z.norm_sqr();
            c / (d * d)
        });
        assert_relative_eq!(proj, c * domain.hyperbolic_area() / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn transfer_trivial_group_radial_stretch() {
        let domain = FundamentalDomain::disk(3).unwrap();
        let group = FuchsianGroup::trivial();
        // K of the radial stretch s = 2 is the constant (s^2+1)/(2s)
        let report = transfer_identity_check(|_| 1.25, 1.0, &domain, &group, 0);
        assert_relative_eq!(report.lhs, report.rhs, max_relative = 1e-12);
        assert_relative_eq!(report.lhs, 1.25 * PI, max_relative = 1e-3);
    }

    #[test]
    fn transfer_octagon_identity_map() {
        let domain = FundamentalDomain::octagon(1).unwrap();
        let group = FuchsianGroup::octagon();
        let report = transfer_identity_check(|_| 1.0, 2.0, &domain, &group, 4);
        assert!(
            (report.lhs - PI).abs() / PI <= 0.02,
            "lhs {} vs pi, coverage gap {:.4}",
            report.lhs,
            (PI - report.lhs) / PI
        );
        assert!(
            (report.lhs - report.rhs).abs() <= report.lhs_tail + report.rhs_tail + 1e-9,
            "lhs {} rhs {} tails {} {}",
            report.lhs,
            report.rhs,
            report.lhs_tail,
            report.rhs_tail
        );
    }

    #[test]
    fn phi_growth_proportional_to_count() {
        let domain = FundamentalDomain::octagon(0).unwrap();
        let group = FuchsianGroup::octagon();
        let base: f64 = domain.euclidean_area();
        let sums = automorphic_phi_l1_growth(|_| Complex64::new(1.0, 0.0), &domain, &group, 3);
        for &(count, total) in &sums {
            assert_relative_eq!(total, base * count as f64, max_relative = 1e-9);
        }
        // a nonconstant automorphic sample keeps exact proportionality too
        let sums2 =
            automorphic_phi_l1_growth(|z| z * z + Complex64::new(0.3, 0.1), &domain, &group, 3);
        let unit = sums2[0].1;
        for &(count, total) in &sums2 {
            assert_relative_eq!(total, unit * count as f64, max_relative = 1e-9);
        }
    }

    #[test]
    fn zero_phi_gives_zero_sums() {
        let domain = FundamentalDomain::octagon(0).unwrap();
        let group = FuchsianGroup::octagon();
        let sums = automorphic_phi_l1_growth(|_| Complex64::new(0.0, 0.0), &domain, &group, 2);
        assert!(sums.iter().all(|&(_, s)| s == 0.0));
    }
}
