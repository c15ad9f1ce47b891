//! Geometry of the difference of two monotone circle maps: coincidence
//! sets, lobes of the curve F(theta) = e^{i alpha} - e^{i beta}, variation
//! of argument, and winding numbers.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LobeError {
    #[error("samples are not nondecreasing at index {0}")]
    NonMonotone(usize),
    #[error("total increase is {0}, expected 2*pi")]
    WrongTotal(f64),
    #[error("sample counts differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("query point lies on the curve (distance {0:.3e})")]
    PointOnCurve(f64),
    #[error("tolerance must be positive")]
    BadTolerance,
}

/// Two monotone circle maps sampled on the uniform grid theta_i = 2 pi i/n,
/// normalized so that alpha(0) = beta(0) = 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryPair {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BoundaryPair {
    /// Sample two angle maps (continuous lifts, increasing by 2 pi over a
    /// period) on `n` uniform grid points.
    pub fn from_fns(
        n: usize,
        f: impl Fn(f64) -> f64,
        g: impl Fn(f64) -> f64,
    ) -> Result<Self, LobeError> {
        let sample = |h: &dyn Fn(f64) -> f64| -> Vec<f64> {
            let h0 = h(0.0);
            (0..n).map(|i| h(2.0 * PI * i as f64 / n as f64) - h0).collect()
        };
        let pair = BoundaryPair {
            alpha: sample(&f),
            beta: sample(&g),
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn n_samples(&self) -> usize {
        self.alpha.len()
    }

    pub fn theta(&self, i: usize) -> f64 {
        2.0 * PI * i as f64 / self.n_samples() as f64
    }

    pub fn validate(&self) -> Result<(), LobeError> {
        if self.alpha.len() != self.beta.len() {
            return Err(LobeError::LengthMismatch(self.alpha.len(), self.beta.len()));
        }
        let n = self.alpha.len();
        for seq in [&self.alpha, &self.beta] {
            for i in 1..n {
                if seq[i] < seq[i - 1] - 1e-12 {
                    return Err(LobeError::NonMonotone(i));
                }
            }
            // closing step back to the lifted start
            let total = seq[0] + 2.0 * PI - seq[n - 1];
            if total < -1e-12 {
                return Err(LobeError::NonMonotone(0));
            }
        }
        Ok(())
    }

    /// F(theta_i) = e^{i alpha_i} - e^{i beta_i}.
    pub fn curve_sample(&self, i: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.alpha[i]) - Complex64::from_polar(1.0, self.beta[i])
    }
}

/// One lobe: a maximal parameter interval where alpha - beta keeps its
/// sign, with the sampled curve, variation of argument, and the image
/// angles (tilde_theta) of its endpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lobe {
    pub interval: (f64, f64),
    #[serde(with = "crate::mesh::complex_pairs")]
    pub curve: Vec<Complex64>,
    /// +1 where alpha > beta, -1 where alpha < beta.
    pub sign: i8,
    pub varg: f64,
    pub tilde_theta: (f64, f64),
    /// (delta, r) samples of the radial extent function r(delta) along the
    /// unwrapped argument.
    pub radial: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LobeDecomposition {
    /// Parameter intervals where |alpha - beta| <= tol (points included as
    /// zero-length intervals).
    pub coincidence: Vec<(f64, f64)>,
    pub lobes: Vec<Lobe>,
    /// Total image length of the coincidence set under alpha.
    pub x_measure: f64,
    pub n_samples: usize,
    pub tol: f64,
}

/// Decompose the circle into coincidence intervals and lobes.
pub fn decompose_lobes(pair: &BoundaryPair, tol: f64) -> Result<LobeDecomposition, LobeError> {
    if !(tol > 0.0) {
        return Err(LobeError::BadTolerance);
    }
    pair.validate()?;
    let n = pair.n_samples();
    let diff: Vec<f64> = (0..n).map(|i| pair.alpha[i] - pair.beta[i]).collect();
    let coincident: Vec<bool> = diff.iter().map(|d| d.abs() <= tol).collect();

    // normalization pins index 0 to the coincidence set, so every lobe run
    // is a proper cyclic interval between coincident samples
    debug_assert!(coincident[0]);

    if coincident.iter().all(|&c| c) {
        return Ok(LobeDecomposition {
            coincidence: vec![(0.0, 2.0 * PI)],
            lobes: Vec::new(),
            x_measure: 2.0 * PI,
            n_samples: n,
            tol,
        });
    }

    // merged coincidence runs (cyclic) and the lobe runs between them
    let mut coincidence = Vec::new();
    let mut x_measure = 0.0;
    let mut i = 0;
    while i < n {
        if coincident[i] {
            let start = i;
            while i < n && coincident[i] {
                i += 1;
            }
            coincidence.push((pair.theta(start), pair.theta(i - 1)));
            x_measure += pair.alpha[i - 1] - pair.alpha[start];
        } else {
            i += 1;
        }
    }
    // cyclic merge: run ending at n-1 continues into the run starting at 0
    if coincident[n - 1] && coincidence.len() > 1 {
        let last = coincidence.pop().unwrap();
        let first = coincidence[0];
        coincidence[0] = (last.0 - 2.0 * PI, first.1);
        // image length of the junction step theta_{n-1} -> theta_0 + 2 pi
        x_measure += pair.alpha[0] + 2.0 * PI - pair.alpha[n - 1];
    }

    // lifted image angle at a coincident sample (index may wrap once)
    let tilde_at = |i: usize| -> f64 {
        let lift = if i >= n { 2.0 * PI } else { 0.0 };
        0.5 * (pair.alpha[i % n] + pair.beta[i % n]) + lift
    };

    let mut lobes = Vec::new();
    let mut start = 0;
    while start < n {
        if coincident[start % n] {
            start += 1;
            continue;
        }
        // `start` opens a run; find its end (exclusive), walking cyclically
        let mut end = start;
        while !coincident[end % n] {
            end += 1;
        }
        // split the run at sign changes of diff (crossings between samples)
        let mut seg_start = start;
        let mut seg_tilde1 = tilde_at(start - 1);
        let mut j = start;
        while j < end {
            let sign_here = diff[j % n].signum();
            let next_sign = if j + 1 < end { diff[(j + 1) % n].signum() } else { sign_here };
            let closes_run = j + 1 == end;
            if closes_run || next_sign != sign_here {
                // close the segment [seg_start, j]
                let (tilde2, interval_end) = if closes_run {
                    (tilde_at(j + 1), pair.theta((j + 1) % n) + if (j + 1) >= n { 2.0 * PI } else { 0.0 })
                } else {
                    // interpolate the crossing of diff = 0 in (j, j+1)
                    let d0 = diff[j % n];
                    let d1 = diff[(j + 1) % n];
                    let t = d0 / (d0 - d1);
                    let a = pair.alpha[j % n] * (1.0 - t) + pair.alpha[(j + 1) % n] * t;
                    let b = pair.beta[j % n] * (1.0 - t) + pair.beta[(j + 1) % n] * t;
                    let th = pair.theta(j % n) + t * 2.0 * PI / n as f64;
                    (0.5 * (a + b), th)
                };
                lobes.push(build_lobe(pair, seg_start, j, seg_tilde1, tilde2, interval_end));
                seg_start = j + 1;
                seg_tilde1 = tilde2;
            }
            j += 1;
        }
        start = end;
    }

    Ok(LobeDecomposition {
        coincidence,
        lobes,
        x_measure,
        n_samples: n,
        tol,
    })
}

/// Assemble one lobe from sample indices [i1, i2] (cyclic) with known
/// endpoint image angles.
fn build_lobe(
    pair: &BoundaryPair,
    i1: usize,
    i2: usize,
    tilde1: f64,
    tilde2: f64,
    interval_end: f64,
) -> Lobe {
    let n = pair.n_samples();
    let sign: i8 = if pair.alpha[i1 % n] >= pair.beta[i1 % n] { 1 } else { -1 };
    let s = 0.5 * PI * sign as f64;

    let mut curve = Vec::with_capacity(i2 - i1 + 1);
    let mut radial = Vec::with_capacity(i2 - i1 + 1);
    // unwrapped argument along the curve, seeded at the analytic limit at
    // the left endpoint: arg F -> tilde1 + sign*pi/2
    let mut arg_prev = tilde1 + s;
    let mut varg = 0.0;
    for i in i1..=i2 {
        let z = pair.curve_sample(i % n);
        curve.push(z);
        let raw = z.arg();
        // unwrap relative to the previous accumulated argument
        let mut a = raw;
        while a < arg_prev - PI {
            a += 2.0 * PI;
        }
        while a > arg_prev + PI {
            a -= 2.0 * PI;
        }
        varg += a - arg_prev;
        arg_prev = a;
        radial.push((a, z.norm()));
    }
    // right endpoint limit
    varg += (tilde2 + s) - arg_prev;

    let interval_start = pair.theta(i1 % n) - 2.0 * PI / n as f64;
    Lobe {
        interval: (interval_start, interval_end),
        curve,
        sign,
        varg,
        tilde_theta: (tilde1, tilde2),
        radial,
    }
}

/// Sum of per-lobe variations of argument. Asserts the two Varg identities
/// (total <= 2 pi and total = 2 pi - |X|) at sampling tolerance.
pub fn total_varg(decomp: &LobeDecomposition) -> f64 {
    let total: f64 = decomp.lobes.iter().map(|l| l.varg).sum();
    let tol = 10.0 / decomp.n_samples as f64;
    assert!(total <= 2.0 * PI + tol, "total varg {total} exceeds 2 pi");
    assert!(
        (total - (2.0 * PI - decomp.x_measure)).abs() <= tol,
        "total varg {total} vs 2 pi - |X| = {}",
        2.0 * PI - decomp.x_measure
    );
    total
}

/// Winding number of a closed sampled curve around `x`, by accumulated
/// argument increments.
pub fn winding_number(curve: &[Complex64], x: Complex64) -> Result<i64, LobeError> {
    let scale = curve
        .iter()
        .map(|z| (z - x).norm())
        .fold(f64::INFINITY, f64::min);
    if scale < 1e-9 {
        return Err(LobeError::PointOnCurve(scale));
    }
    let mut total = 0.0;
    for i in 0..curve.len() {
        let a = curve[i] - x;
        let b = curve[(i + 1) % curve.len()] - x;
        total += (b / a).arg();
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

/// A monotone trigonometric-polynomial circle map
/// theta + sum_k a_k sin(k theta) + b_k (1 - cos(k theta)), normalized to
/// vanish at 0; monotone whenever sum_k k(|a_k| + |b_k|) < 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrigMap {
    pub coeffs: Vec<(f64, f64)>,
}

impl TrigMap {
    pub fn eval(&self, theta: f64) -> f64 {
        let mut v = theta;
        for (k, &(a, b)) in self.coeffs.iter().enumerate() {
            let kf = (k + 1) as f64;
            v += a * (kf * theta).sin() + b * (1.0 - (kf * theta).cos());
        }
        v
    }

    pub fn deriv(&self, theta: f64) -> f64 {
        let mut v = 1.0;
        for (k, &(a, b)) in self.coeffs.iter().enumerate() {
            let kf = (k + 1) as f64;
            v += kf * (a * (kf * theta).cos() + b * (kf * theta).sin());
        }
        v
    }

    /// Draw coefficients with total derivative budget <= `budget` < 1.
    pub fn random(rng: &mut impl Rng, max_terms: usize, budget: f64) -> TrigMap {
        let terms = rng.gen_range(1..=max_terms);
        let raw: Vec<(f64, f64)> = (0..terms)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let spent: f64 = raw
            .iter()
            .enumerate()
            .map(|(k, &(a, b))| (k + 1) as f64 * (a.abs() + b.abs()))
            .sum();
        let scale = budget * rng.gen_range(0.1..1.0) / spent.max(1e-12);
        TrigMap {
            coeffs: raw.into_iter().map(|(a, b)| (a * scale, b * scale)).collect(),
        }
    }
}

/// The derivative identity behind per-lobe argument monotonicity:
/// d/dtheta tan(arg F) = (a' + b')(1 - cos(a - b)) / (cos a - cos b)^2.
pub fn arg_slope_identity(alpha: f64, beta: f64, d_alpha: f64, d_beta: f64) -> f64 {
    let denom = alpha.cos() - beta.cos();
    (d_alpha + d_beta) * (1.0 - (alpha - beta).cos()) / (denom * denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_maps_give_no_lobes() {
        let pair = BoundaryPair::from_fns(512, |t| t, |t| t).unwrap();
        let d = decompose_lobes(&pair, 1e-9).unwrap();
        assert!(d.lobes.is_empty());
        assert_relative_eq!(d.x_measure, 2.0 * PI, max_relative = 1e-12);
        assert_eq!(total_varg(&d), 0.0);
    }

    #[test]
    fn sin_perturbation_gives_two_lobes() {
        let n = 4096;
        let pair = BoundaryPair::from_fns(n, |t| t + 0.4 * t.sin(), |t| t).unwrap();
        let d = decompose_lobes(&pair, 1e-9).unwrap();
        assert_eq!(d.lobes.len(), 2, "lobes: {}", d.lobes.len());
        let tol = 10.0 / n as f64;
        assert!((d.lobes[0].tilde_theta.0 - 0.0).abs() < tol);
        assert!((d.lobes[0].tilde_theta.1 - PI).abs() < tol);
        assert!((d.lobes[1].tilde_theta.0 - PI).abs() < tol);
        assert!((d.lobes[1].tilde_theta.1 - 2.0 * PI).abs() < tol);
        for lobe in &d.lobes {
            assert!((lobe.varg - PI).abs() < tol, "varg = {}", lobe.varg);
            assert!(
                (lobe.varg - (lobe.tilde_theta.1 - lobe.tilde_theta.0)).abs() < tol,
                "varg vs image interval"
            );
        }
        assert_eq!(d.lobes[0].sign, 1);
        assert_eq!(d.lobes[1].sign, -1);
        let total = total_varg(&d);
        assert!((total - 2.0 * PI).abs() < tol);
    }

    #[test]
    fn sin_2theta_gives_four_quarter_lobes() {
        let n = 4096;
        let pair = BoundaryPair::from_fns(n, |t| t + 0.2 * (2.0 * t).sin(), |t| t).unwrap();
        let d = decompose_lobes(&pair, 1e-9).unwrap();
        assert_eq!(d.lobes.len(), 4);
        let tol = 10.0 / n as f64;
        for lobe in &d.lobes {
            assert!((lobe.varg - PI / 2.0).abs() < tol, "varg = {}", lobe.varg);
        }
        let total = total_varg(&d);
        assert!((total - 2.0 * PI).abs() < tol);
    }

    #[test]
    fn coincidence_arc_removes_varg() {
        // alpha = beta on [0, 1] (image length 1), one lobe elsewhere
        let n = 8192;
        let eps = 0.3;
        let bump = move |t: f64| {
            if t <= 1.0 {
                0.0
            } else {
                let s = PI * (t - 1.0) / (2.0 * PI - 1.0);
                eps * s.sin() * s.sin()
            }
        };
        let pair = BoundaryPair::from_fns(n, move |t| t + bump(t), |t| t).unwrap();
        let d = decompose_lobes(&pair, 1e-9).unwrap();
        assert_eq!(d.lobes.len(), 1);
        let tol = 10.0 / n as f64;
        assert!((d.x_measure - 1.0).abs() < 1e-3, "|X| = {}", d.x_measure);
        let total = total_varg(&d);
        assert!(
            (total - (2.0 * PI - 1.0)).abs() < tol + 1e-3,
            "total = {total}"
        );
    }

    #[test]
    fn winding_numbers_on_circle() {
        let circle: Vec<Complex64> = (0..256)
            .map(|i| Complex64::from_polar(1.0, 2.0 * PI * i as f64 / 256.0))
            .collect();
        assert_eq!(winding_number(&circle, Complex64::new(0.0, 0.0)).unwrap(), 1);
        assert_eq!(winding_number(&circle, Complex64::new(3.0, 0.0)).unwrap(), 0);
        assert!(winding_number(&circle, Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn lobe_interior_winds_once() {
        let pair = BoundaryPair::from_fns(4096, |t| t + 0.4 * t.sin(), |t| t).unwrap();
        let d = decompose_lobes(&pair, 1e-9).unwrap();
        for lobe in &d.lobes {
            // close the curve through the origin (both endpoints limit to 0)
            let mut closed = lobe.curve.clone();
            closed.push(Complex64::new(0.0, 0.0));
            let centroid: Complex64 =
                lobe.curve.iter().sum::<Complex64>() / lobe.curve.len() as f64 / 2.0;
            // the argument increases along every lobe, so the traversal is
            // counterclockwise regardless of the lobe's sign
            assert_eq!(winding_number(&closed, centroid).unwrap(), 1);
            let outside = centroid * 10.0;
            assert_eq!(winding_number(&closed, outside).unwrap(), 0);
        }
    }

    #[test]
    fn segment_property_holds_along_rays() {
        // midpoints rho e^{i delta}, rho in (0, r), stay inside the lobe
        let pair = BoundaryPair::from_fns(4096, |t| t + 0.4 * t.sin(), |t| t).unwrap();
        let d = decompose_lobes(&pair, 1e-9).unwrap();
        let lobe = &d.lobes[0];
        let mut closed = lobe.curve.clone();
        closed.push(Complex64::new(0.0, 0.0));
        let m = lobe.curve.len();
        for (i, &(delta, r)) in lobe.radial.iter().enumerate() {
            if i < m / 8 || i > 7 * m / 8 || r < 1e-3 {
                continue; // skip the pinch near the endpoints
            }
            for &frac in &[0.25, 0.5, 0.75] {
                let p = Complex64::from_polar(frac * r, delta);
                let w = winding_number(&closed, p).unwrap();
                assert_eq!(w, 1, "ray point {p} at delta {delta}");
            }
        }
    }

    #[test]
    fn lobe_arguments_monotone_for_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
        let n = 2048;
        for _ in 0..25 {
            let a = TrigMap::random(&mut rng, 4, 0.9);
            let b = TrigMap::random(&mut rng, 4, 0.9);
            let pair = BoundaryPair::from_fns(n, |t| a.eval(t), |t| b.eval(t)).unwrap();
            let d = decompose_lobes(&pair, 1e-9).unwrap();
            let tol = 10.0 / n as f64;
            for lobe in &d.lobes {
                // unwrapped argument samples nondecreasing, allowing one
                // sampling-resolution violation per 1024 samples
                let args: Vec<f64> = lobe.radial.iter().map(|&(a, _)| a).collect();
                let violations = args.windows(2).filter(|w| w[1] < w[0] - 1e-9).count();
                assert!(
                    violations <= 1 + args.len() / 1024,
                    "{violations} violations in {} samples",
                    args.len()
                );
                assert!(
                    (lobe.varg - (lobe.tilde_theta.1 - lobe.tilde_theta.0)).abs() < tol,
                    "varg {} vs interval {}",
                    lobe.varg,
                    lobe.tilde_theta.1 - lobe.tilde_theta.0
                );
                assert!(lobe.varg >= -tol);
            }
            let total = total_varg(&d);
            assert!(total <= 2.0 * PI + tol);
        }
    }

    #[test]
    fn derivative_identity_matches_finite_differences() {
        let a = TrigMap {
            coeffs: vec![(0.3, 0.1), (0.05, -0.08)],
        };
        let b = TrigMap {
            coeffs: vec![(-0.2, 0.15)],
        };
        let curve = |t: f64| {
            Complex64::from_polar(1.0, a.eval(t)) - Complex64::from_polar(1.0, b.eval(t))
        };
        let h = 1e-6;
        let mut checked = 0;
        for i in 0..200 {
            let t = 2.0 * PI * (i as f64 + 0.5) / 200.0;
            let (al, be) = (a.eval(t), b.eval(t));
            if (al.cos() - be.cos()).abs() < 0.3 || curve(t).re.abs() < 0.2 {
                continue; // singular denominator or tan blowing up
            }
            let tan_arg = |t: f64| {
                let z = curve(t);
                z.im / z.re
            };
            let fd = (tan_arg(t + h) - tan_arg(t - h)) / (2.0 * h);
            let exact = arg_slope_identity(al, be, a.deriv(t), b.deriv(t));
            assert!(exact >= 0.0);
            assert_relative_eq!(fd, exact, max_relative = 1e-4);
            checked += 1;
        }
        assert!(checked > 50, "only {checked} points checked");
    }

    #[test]
    fn radial_extent_continuity() {
        let pair = BoundaryPair::from_fns(4096, |t| t + 0.4 * t.sin(), |t| t).unwrap();
        let d = decompose_lobes(&pair, 1e-9).unwrap();
        for lobe in &d.lobes {
            // |F'| <= |alpha'| + |beta'| <= 2.4 here, so adjacent curve
            // samples differ by at most about 2.4 * (2 pi / n)
            let bound = 3.0 * 2.0 * PI / pair.n_samples() as f64;
            for w in lobe.curve.windows(2) {
                assert!((w[1] - w[0]).norm() <= bound);
            }
        }
    }

    #[test]
    fn non_monotone_pair_rejected() {
        let n = 64;
        let mut alpha: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
        alpha.swap(10, 11);
        let beta = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
        let pair = BoundaryPair { alpha, beta };
        assert!(decompose_lobes(&pair, 1e-9).is_err());
    }
}
