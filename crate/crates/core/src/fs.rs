//! Fubini–Study speed of holomorphic curves in the projective plane.
//!
//! The metric is normalized so that a projective line has diameter `pi/2`; in an
//! affine chart with point `(z, w)` and velocity `(z', w')`
//!
//! ```text
//! |v|_FS^2 = ((1+|z|^2+|w|^2)(|z'|^2+|w'|^2) - |conj(z) z' + conj(w) w'|^2) / (1+|z|^2+|w|^2)^2
//! ```
//!
//! which equals `(|z'|^2 + |w'|^2 + |z w' - w z'|^2) / (1+|z|^2+|w|^2)^2` by the
//! Lagrange identity. The second form has no cancellation and is the one evaluated.

use std::io::Write;

use rayon::prelude::*;

use crate::error::Result;
use crate::henon::{chordal, largest_index, ProjectivePoint};
use crate::scalar::{Real, C, C64};

/// A point with a tangent vector expressed in one affine chart.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentSample<T: Real = f64> {
    pub point: ProjectivePoint<T>,
    /// Index of the homogeneous coordinate set to one by the chart.
    pub chart: usize,
    /// Velocity of the two remaining coordinates, in increasing index order.
    pub velocity: [C<T>; 2],
}

fn others(k: usize) -> (usize, usize) {
    match k {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

impl<T: Real> TangentSample<T> {
    /// Builds the sample from a homogeneous lift `x` and its derivative `dx`, in the
    /// chart of the largest coordinate.
    pub fn from_lift(x: &[C<T>; 3], dx: &[C<T>; 3]) -> Option<Self> {
        let k = largest_index(x);
        Self::from_lift_in_chart(x, dx, k)
    }

    /// Same as [`TangentSample::from_lift`] in a prescribed chart (`x[k] != 0`).
    pub fn from_lift_in_chart(x: &[C<T>; 3], dx: &[C<T>; 3], k: usize) -> Option<Self> {
        use num_traits::Zero;
        if x[k].is_zero() {
            return None;
        }
        let point = ProjectivePoint::from_homogeneous(x.clone())?;
        let (i, j) = others(k);
        let xk = x[k].clone();
        let xk2 = xk.clone() * xk.clone();
        let vel = |i: usize| (dx[i].clone() * xk.clone() - x[i].clone() * dx[k].clone()) / xk2.clone();
        Some(TangentSample { point, chart: k, velocity: [vel(i), vel(j)] })
    }

    /// Affine coordinates of the point in this sample's chart.
    pub fn chart_coords(&self) -> [C<T>; 2] {
        let c = self.point.coords();
        let (i, j) = others(self.chart);
        let ck = c[self.chart].clone();
        [c[i].clone() / ck.clone(), c[j].clone() / ck]
    }
}

/// Fubini–Study speed in the sample's chart.
pub fn fs_speed<T: Real>(s: &TangentSample<T>) -> f64 {
    let [z, w] = s.chart_coords();
    affine_speed(&z, &w, &s.velocity[0], &s.velocity[1])
}

/// Speed of the affine tangent vector `(dz, dw)` at `(z, w)`.
pub fn affine_speed<T: Real>(z: &C<T>, w: &C<T>, dz: &C<T>, dw: &C<T>) -> f64 {
    let cross = z.clone() * dw.clone() - w.clone() * dz.clone();
    let num = dz.norm_sqr() + dw.norm_sqr() + cross.norm_sqr();
    let den = T::one() + z.norm_sqr() + w.norm_sqr();
    (num.sqrt() / den).to_f64()
}

/// `|x ^ dx| / |x|^2` for a homogeneous lift; chart-free and scale-invariant.
pub fn lift_speed<T: Real>(x: &[C<T>; 3], dx: &[C<T>; 3]) -> f64 {
    // normalize first so that wedge products stay in range
    let k = largest_index(x);
    let s = x[k].clone();
    use num_traits::Zero;
    if s.is_zero() {
        return 0.0;
    }
    let xn = x.clone().map(|c| c / s.clone());
    let dn = dx.clone().map(|c| c / s.clone());
    let mut wedge = T::zero();
    for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
        wedge = wedge + (xn[i].clone() * dn[j].clone() - xn[j].clone() * dn[i].clone()).norm_sqr();
    }
    let n2: T = xn.iter().map(|c| c.norm_sqr()).fold(T::zero(), |a, b| a + b);
    (wedge.sqrt() / n2).to_f64()
}

/// Chordal distance `sin d_FS` between two points given by homogeneous lifts.
pub fn chordal_distance<T: Real>(x: &[C<T>; 3], y: &[C<T>; 3]) -> f64 {
    chordal(x, y).to_f64()
}

/// Speed of a curve given by an evaluator returning a homogeneous lift and its derivative.
pub fn curve_speed<T: Real, F>(curve: F, theta: C64) -> Result<f64>
where
    F: Fn(C64) -> Result<([C<T>; 3], [C<T>; 3])>,
{
    let (x, dx) = curve(theta)?;
    Ok(match TangentSample::from_lift(&x, &dx) {
        Some(s) => fs_speed(&s),
        None => 0.0,
    })
}

fn better(a: (f64, C64), b: (f64, C64), center: C64) -> bool {
    // larger value wins; ties go to smaller |theta - center|, then smaller argument
    if a.0 != b.0 {
        return a.0 > b.0;
    }
    let (ra, rb) = ((a.1 - center).norm(), (b.1 - center).norm());
    if ra != rb {
        return ra < rb;
    }
    (a.1 - center).arg() < (b.1 - center).arg()
}

/// Compass search for a local maximum of `h` inside `|theta - center| <= radius`.
pub fn compass_maximize<F>(h: &F, start: (f64, C64), center: C64, radius: f64, step: f64, min_step: f64) -> (f64, C64)
where
    F: Fn(C64) -> f64 + Sync,
{
    let mut best = start;
    let mut s = step;
    while s >= min_step {
        let dirs = [C64::new(s, 0.0), C64::new(-s, 0.0), C64::new(0.0, s), C64::new(0.0, -s)];
        let mut moved = false;
        for d in dirs {
            let cand = best.1 + d;
            if (cand - center).norm() > radius {
                continue;
            }
            let v = h(cand);
            if v.is_finite() && v > best.0 {
                best = (v, cand);
                moved = true;
            }
        }
        if !moved {
            s *= 0.5;
        }
    }
    best
}

/// Number of grid maxima refined by compass search.
const REFINE_CANDIDATES: usize = 8;

/// Polar-grid maximum of `h` on a closed disc, refined by compass search.
///
/// The grid uses `grid + 1` equispaced radii (including the center) and `grid`
/// angles; the best grid points are refined down to step `1e-6 * radius`.
pub fn sup_on_disc<F>(h: &F, center: C64, radius: f64, grid: usize) -> (f64, C64)
where
    F: Fn(C64) -> f64 + Sync,
{
    let grid = grid.max(8);
    let mut pts: Vec<C64> = vec![center];
    for i in 1..=grid {
        let r = radius * i as f64 / grid as f64;
        for k in 0..grid {
            pts.push(center + C64::from_polar(r, std::f64::consts::TAU * k as f64 / grid as f64));
        }
    }
    let vals: Vec<(f64, C64)> = pts
        .par_iter()
        .map(|&t| {
            let v = h(t);
            (if v.is_finite() { v } else { f64::NEG_INFINITY }, t)
        })
        .collect();
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| {
        if better(vals[a], vals[b], center) {
            std::cmp::Ordering::Less
        } else if better(vals[b], vals[a], center) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    let mut best = vals[order[0]];
    let step = radius / grid as f64;
    let refined: Vec<(f64, C64)> = order
        .iter()
        .take(REFINE_CANDIDATES)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&i| compass_maximize(h, vals[i], center, radius, step, 1e-6 * radius))
        .collect();
    for r in refined {
        if better(r, best, center) {
            best = r;
        }
    }
    best
}

/// Compass search in logarithmic polar coordinates `theta = exp(u)`.
///
/// Steps act on `ln |theta|` and on the argument, so the search resolves features
/// whose size is proportional to `|theta|`. Candidates with `|theta| > r_max` are skipped.
pub fn compass_maximize_log<F>(h: &F, start: (f64, C64), r_max: f64, step: f64, min_step: f64) -> (f64, C64)
where
    F: Fn(C64) -> f64 + Sync,
{
    if start.1 == C64::new(0.0, 0.0) {
        return start;
    }
    let mut best = start;
    let mut u = start.1.ln();
    let mut s = step;
    while s >= min_step {
        let mut moved = false;
        for d in [C64::new(s, 0.0), C64::new(-s, 0.0), C64::new(0.0, s), C64::new(0.0, -s)] {
            let cu = u + d;
            let cand = cu.exp();
            if cand.norm() > r_max {
                continue;
            }
            let v = h(cand);
            if v.is_finite() && v > best.0 {
                best = (v, cand);
                u = cu;
                moved = true;
            }
        }
        if !moved {
            s *= 0.5;
        }
    }
    best
}

/// `count` radii spaced geometrically from `r_min` to `r_max` inclusive.
pub fn log_radii(r_min: f64, r_max: f64, count: usize) -> Vec<f64> {
    let count = count.max(2);
    let (a, b) = (r_min.ln(), r_max.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Maximum of `h` over the origin and the polar grid `radii x angles`, with the best
/// grid points refined by [`compass_maximize_log`] down to relative step `1e-6`.
pub fn sup_polar<F>(h: &F, radii: &[f64], angles: usize, r_max: f64) -> (f64, C64)
where
    F: Fn(C64) -> f64 + Sync,
{
    let angles = angles.max(8);
    let origin = C64::new(0.0, 0.0);
    let mut pts = vec![origin];
    for &r in radii {
        for k in 0..angles {
            pts.push(C64::from_polar(r, std::f64::consts::TAU * k as f64 / angles as f64));
        }
    }
    let vals: Vec<(f64, C64)> = pts
        .par_iter()
        .map(|&t| {
            let v = h(t);
            (if v.is_finite() { v } else { f64::NEG_INFINITY }, t)
        })
        .collect();
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| {
        if better(vals[a], vals[b], origin) {
            std::cmp::Ordering::Less
        } else if better(vals[b], vals[a], origin) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    let mut spacing = std::f64::consts::TAU / angles as f64;
    for w in radii.windows(2) {
        if w[0] > 0.0 && w[1] > 0.0 {
            spacing = spacing.max((w[1] / w[0]).ln().abs());
        }
    }
    let refined: Vec<(f64, C64)> = order
        .iter()
        .take(REFINE_CANDIDATES)
        .map(|&i| vals[i])
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&start| compass_maximize_log(h, start, r_max, 0.5 * spacing, 1e-6))
        .collect();
    let mut best = vals[order[0]];
    for r in refined {
        if better(r, best, origin) {
            best = r;
        }
    }
    best
}

/// `sup_speed_on_disc` for a curve evaluator; evaluation failures count as speed 0.
pub fn sup_speed_on_disc<T: Real, F>(curve: &F, center: C64, radius: f64, grid: usize) -> (f64, C64)
where
    F: Fn(C64) -> Result<([C<T>; 3], [C<T>; 3])> + Sync,
{
    let h = |t: C64| curve_speed(curve, t).unwrap_or(0.0);
    sup_on_disc(&h, center, radius, grid)
}

/// Speed-profile CSV rows `re_theta,im_theta,fs_speed`.
pub fn write_speed_profile<W: Write>(rows: &[(C64, f64)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "re_theta,im_theta,fs_speed")?;
    for (t, s) in rows {
        writeln!(out, "{:.16e},{:.16e},{:.16e}", t.re, t.im, s)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::HenonError;
    use crate::scalar::MpFloat;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    type Lift = ([C64; 3], [C64; 3]);

    fn line(t: C64) -> Result<Lift> {
        Ok(([t, c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]))
    }

    /// A conic-like curve `[t : t^2 + 1 : 1 - t^3]` and its derivative.
    fn cubic(t: C64) -> Result<Lift> {
        Ok(([t, t * t + 1.0, 1.0 - t * t * t], [c(1.0, 0.0), 2.0 * t, -3.0 * t * t]))
    }

    fn chordal_oracle(x: &[C64; 3], y: &[C64; 3]) -> f64 {
        // |x ^ y| / (|x||y|) through the explicit 3-term cross product
        let cr = [x[1] * y[2] - x[2] * y[1], x[2] * y[0] - x[0] * y[2], x[0] * y[1] - x[1] * y[0]];
        let n = |v: &[C64; 3]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        n(&cr) / (n(x) * n(y))
    }

    #[test]
    fn line_speed_at_origin() {
        let s = TangentSample::from_lift(&[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!((fs_speed(&s) - 1.0).abs() < 1e-15);
        let h: f64 = 1e-6;
        let x = line(c(0.0, 0.0)).unwrap().0;
        let y = line(c(h, 0.0)).unwrap().0;
        assert!((chordal_oracle(&x, &y) / h - 1.0).abs() < 1e-9);
        assert!((curve_speed(line, c(0.0, 0.0)).unwrap() - 1.0).abs() < 1e-15);
        let zero = TangentSample::from_lift(&[c(0.3, 0.0), c(1.0, 2.0), c(1.0, 0.0)], &[c(0.0, 0.0); 3]).unwrap();
        assert_eq!(fs_speed(&zero), 0.0);
    }

    #[test]
    fn critical_point_has_zero_speed() {
        let sq = |t: C64| -> Result<Lift> { Ok(([t * t, c(0.0, 0.0), c(1.0, 0.0)], [2.0 * t, c(0.0, 0.0), c(0.0, 0.0)])) };
        assert_eq!(curve_speed(sq, c(0.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn finite_difference_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let h = 1e-6;
            let (x, _) = cubic(t).unwrap();
            let (y, _) = cubic(t + h).unwrap();
            let (ym, _) = cubic(t - h).unwrap();
            let fd = (chordal_oracle(&x, &y) + chordal_oracle(&x, &ym)) / (2.0 * h);
            let sp = curve_speed(cubic, t).unwrap();
            assert!((fd - sp).abs() <= 1e-5 * sp, "{fd} {sp}");
        }
    }

    #[test]
    fn chart_overlap_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let t = c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let (x, dx) = cubic(t).unwrap();
            let speeds: Vec<f64> = (0..3)
                .filter_map(|k| TangentSample::from_lift_in_chart(&x, &dx, k))
                .map(|s| fs_speed(&s))
                .collect();
            assert_eq!(speeds.len(), 3);
            for s in &speeds {
                assert!((s - speeds[0]).abs() <= 1e-10 * speeds[0].max(1e-300));
            }
            assert!((lift_speed(&x, &dx) - speeds[0]).abs() <= 1e-12 * speeds[0]);
        }
    }

    #[test]
    fn spec_form_agrees_with_lagrange_form() {
        let (z, w, dz, dw) = (c(0.4, -1.2), c(2.0, 0.5), c(-0.3, 0.9), c(1.1, 0.2));
        let n = 1.0 + z.norm_sqr() + w.norm_sqr();
        let inner = z.conj() * dz + w.conj() * dw;
        let spec = (n * (dz.norm_sqr() + dw.norm_sqr()) - inner.norm_sqr()).sqrt() / n;
        assert!((affine_speed(&z, &w, &dz, &dw) - spec).abs() < 1e-15);
    }

    #[test]
    fn affine_reparametrization() {
        let (alpha, beta) = (c(0.7, -1.3), c(-0.2, 0.4));
        let composed = |t: C64| -> Result<Lift> {
            let (x, dx) = cubic(alpha * t + beta)?;
            Ok((x, dx.map(|d| d * alpha)))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let t = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let lhs = curve_speed(composed, t).unwrap();
            let rhs = alpha.norm() * curve_speed(cubic, alpha * t + beta).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10 * rhs);
        }
    }

    #[test]
    fn software_precision_speed() {
        let v = MpFloat::with_ambient_bits(200, || {
            let x = [crate::scalar::cx::<MpFloat>(c(0.0, 0.0)), crate::scalar::cx(c(0.0, 0.0)), crate::scalar::cx(c(1.0, 0.0))];
            let dx = [crate::scalar::cx::<MpFloat>(c(1.0, 0.0)), crate::scalar::cx(c(0.0, 0.0)), crate::scalar::cx(c(0.0, 0.0))];
            fs_speed(&TangentSample::from_lift(&x, &dx).unwrap())
        });
        assert_eq!(v, 1.0);
    }

    #[test]
    fn sup_examples() {
        let constant = |_t: C64| -> Result<Lift> { Ok(([c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0); 3])) };
        let (v, at) = sup_speed_on_disc(&constant, c(0.5, 0.5), 1.0, 16);
        assert_eq!((v, at), (0.0, c(0.5, 0.5)));

        let (v, at) = sup_speed_on_disc(&line, c(0.0, 0.0), 1.0, 16);
        assert_eq!(at, c(0.0, 0.0));
        assert!((v - 1.0).abs() < 1e-15);
        // dense scan oracle: 10^6 samples
        let m = 1000;
        let mut dense = 0.0f64;
        for i in 0..m {
            for k in 0..m {
                let t = C64::from_polar(i as f64 / m as f64, std::f64::consts::TAU * k as f64 / m as f64);
                dense = dense.max(curve_speed(line, t).unwrap());
            }
        }
        assert!((dense - v).abs() < 1e-12);
    }

    #[test]
    fn sup_finds_off_center_peak_and_is_monotone_in_grid() {
        // speed of the line scaled by a bump: |d/dt (t e^{-(t-0.6)^2})| is not radially symmetric
        let bumpy = |t: C64| -> Result<Lift> {
            let e = (-(t - 0.6) * (t - 0.6)).exp();
            let x = [4.0 * t * e, c(0.0, 0.0), c(1.0, 0.0)];
            let dx = [4.0 * e * (1.0 - 2.0 * t * (t - 0.6)), c(0.0, 0.0), c(0.0, 0.0)];
            Ok((x, dx))
        };
        let mut prev = 0.0;
        for g in [8, 16, 32, 64] {
            let (v, _) = sup_speed_on_disc(&bumpy, c(0.0, 0.0), 1.0, g);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn evaluator_errors_propagate() {
        let bad = |_t: C64| -> Result<Lift> { Err(HenonError::Indeterminate("I+")) };
        assert!(curve_speed(bad, c(0.0, 0.0)).is_err());
    }

    #[test]
    fn profile_csv() {
        let mut buf = Vec::new();
        write_speed_profile(&[(c(1.0, 2.0), 0.5)], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("re_theta,im_theta,fs_speed\n1.0000000000000000e0,"));
    }

    proptest! {
        #[test]
        fn speed_is_homogeneous(ar in -5.0..5.0f64, ai in -5.0..5.0f64, tr in -2.0..2.0f64, ti in -2.0..2.0f64) {
            let t = c(tr, ti);
            let alpha = c(ar, ai);
            let (x, dx) = cubic(t).unwrap();
            let s1 = fs_speed(&TangentSample::from_lift(&x, &dx).unwrap());
            let s2 = fs_speed(&TangentSample::from_lift(&x, &dx.map(|d| d * alpha)).unwrap());
            prop_assert!((s2 - alpha.norm() * s1).abs() <= 1e-12 * (1.0 + s2));
        }

        #[test]
        fn lift_scaling_does_not_change_speed(sr in 0.1..10.0f64, si in -10.0..10.0f64, tr in -2.0..2.0f64, ti in -2.0..2.0f64) {
            let (x, dx) = cubic(c(tr, ti)).unwrap();
            let s = c(sr, si);
            let a = lift_speed(&x, &dx);
            let b = lift_speed(&x.map(|v| v * s), &dx.map(|v| v * s));
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
    }
}
