//! Entire parametrizations of stable manifolds of saddle orbits.
//!
//! Near the saddle point `P` the leaf is given by a linearizing power series
//! `psi_loc` with `f^N(psi_loc(zeta)) = psi_loc(lambda_s zeta)`. Away from `P`,
//! `psi(Z) = f^{-Nm}(psi_loc(lambda_s^m Z))` with the smallest admissible `m`.

use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{HenonError, Result};
use crate::henon::{largest_index, powi, AffinePoint, HenonMap, ProjectivePoint, AFFINE_LIMIT};
use crate::saddle::SaddleOrbit;
use crate::scalar::{cabs, cabs_f64, norm2, Real, C};

pub const DEFAULT_ORDER: usize = 20;
/// Estimated relative error above which evaluation is refused.
pub const PRECISION_LIMIT: f64 = 1e-6;
const CONDITION_LIMIT: f64 = 1e12;
const RHO_SAMPLES: usize = 100;

type Series<T> = Vec<C<T>>;

fn series_mul<T: Real>(a: &Series<T>, b: &Series<T>) -> Series<T> {
    let k = a.len();
    let mut out = vec![C::<T>::zero(); k];
    for (i, ai) in a.iter().enumerate() {
        if ai.is_zero() {
            continue;
        }
        for j in 0..k - i {
            out[i + j] = out[i + j].clone() + ai.clone() * b[j].clone();
        }
    }
    out
}

/// One application of `f` to a pair of truncated series.
fn series_forward<T: Real>(map: &HenonMap<T>, z: &Series<T>, w: &Series<T>) -> (Series<T>, Series<T>) {
    let coeffs = map.p().coeffs();
    let d = coeffs.len() - 1;
    let mut acc: Series<T> = vec![C::zero(); z.len()];
    acc[0] = coeffs[d].clone();
    for c in coeffs[..d].iter().rev() {
        acc = series_mul(&acc, z);
        acc[0] = acc[0].clone() + c.clone();
    }
    let nz: Series<T> = acc.iter().zip(w).map(|(p, w)| p.clone() - map.a().clone() * w.clone()).collect();
    (nz, z.clone())
}

/// Solves `(A - mu I) c = -r` with a conditioning guard.
pub(crate) fn solve_order<T: Real>(a: &[[C<T>; 2]; 2], mu: &C<T>, r: &[C<T>; 2], order: usize) -> Result<[C<T>; 2]> {
    let m00 = a[0][0].clone() - mu.clone();
    let m11 = a[1][1].clone() - mu.clone();
    let m01 = a[0][1].clone();
    let m10 = a[1][0].clone();
    let det = m00.clone() * m11.clone() - m01.clone() * m10.clone();
    let fro = (m00.norm_sqr() + m11.norm_sqr() + m01.norm_sqr() + m10.norm_sqr()).to_f64().sqrt();
    let det_abs = cabs_f64(&det);
    let condition = if det_abs > 0.0 { fro * fro / det_abs } else { f64::INFINITY };
    if !(condition <= CONDITION_LIMIT) {
        return Err(HenonError::ResonanceConditioning { order, condition });
    }
    let c0 = -(m11 * r[0].clone() - m01 * r[1].clone()) / det.clone();
    let c1 = -(m00 * r[1].clone() - m10 * r[0].clone()) / det;
    Ok([c0, c1])
}

/// Local series plus the globalization data.
#[derive(Clone, Debug)]
pub struct StableManifoldChart<T: Real = f64> {
    pub map: HenonMap<T>,
    pub orbit: SaddleOrbit<T>,
    /// `c_1 .. c_M`.
    pub coeffs: Vec<[C<T>; 2]>,
    pub rho: f64,
    /// `c_1 = scale * eigvec_s`.
    pub scale: C<T>,
    /// Conjugacy tolerance the radius was validated against.
    pub local_tolerance: f64,
}

pub fn build_local_series<T: Real>(map: &HenonMap<T>, orbit: &SaddleOrbit<T>, order: usize) -> Result<StableManifoldChart<T>> {
    StableManifoldChart::build(map, orbit, order, C::one())
}

impl<T: Real> StableManifoldChart<T> {
    pub fn build(map: &HenonMap<T>, orbit: &SaddleOrbit<T>, order: usize, scale: C<T>) -> Result<Self> {
        if !orbit.is_saddle {
            return Err(HenonError::NonSaddle {
                lambda_s_abs: cabs(&orbit.lambda_s).to_f64(),
                lambda_u_abs: cabs(&orbit.lambda_u).to_f64(),
            });
        }
        let order = order.max(1);
        let p = orbit.points[0].clone();
        let jac = orbit.period_jacobian(map).m;
        let lambda = orbit.lambda_s.clone();
        let c1 = [orbit.eigvec_s[0].clone() * scale.clone(), orbit.eigvec_s[1].clone() * scale.clone()];
        let mut coeffs = vec![c1];
        let mut lam_k = lambda.clone();
        for k in 2..=order {
            lam_k = lam_k * lambda.clone();
            let mut z: Series<T> = vec![C::zero(); k + 1];
            let mut w: Series<T> = vec![C::zero(); k + 1];
            z[0] = p.z.clone();
            w[0] = p.w.clone();
            for (j, c) in coeffs.iter().enumerate() {
                z[j + 1] = c[0].clone();
                w[j + 1] = c[1].clone();
            }
            for _ in 0..orbit.period {
                let (nz, nw) = series_forward(map, &z, &w);
                z = nz;
                w = nw;
            }
            let ck = solve_order(&jac, &lam_k, &[z[k].clone(), w[k].clone()], k)?;
            coeffs.push(ck);
        }
        let u = p.z.re.unit_roundoff();
        let pn = p.norm_f64();
        let local_tolerance = 256.0 * u * (1.0 + pn);
        let mut chart = StableManifoldChart {
            map: map.clone(),
            orbit: orbit.clone(),
            coeffs,
            rho: 0.0,
            scale,
            local_tolerance,
        };
        let mut rho = None;
        for j in -8i32..=80 {
            let r = 2f64.powi(-j);
            if chart.max_local_residual(r) <= local_tolerance {
                rho = Some(r);
                break;
            }
        }
        chart.rho = rho.ok_or(HenonError::PrecisionExhausted {
            estimated_error: chart.max_local_residual(2f64.powi(-80)),
            bits: p.z.re.mantissa_bits(),
            n: None,
        })?;
        Ok(chart)
    }

    pub fn point(&self) -> &AffinePoint<T> {
        &self.orbit.points[0]
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// `psi_loc(zeta)` and `psi_loc'(zeta)`.
    pub fn eval_local_with_deriv(&self, zeta: &C<T>) -> (AffinePoint<T>, [C<T>; 2]) {
        let mut v = [C::<T>::zero(), C::<T>::zero()];
        let mut dv = [C::<T>::zero(), C::<T>::zero()];
        for (k, c) in self.coeffs.iter().enumerate().rev() {
            let kk = T::from_f64((k + 1) as f64);
            for i in 0..2 {
                dv[i] = dv[i].clone() * zeta.clone() + c[i].clone() * kk.clone();
                v[i] = (v[i].clone() + c[i].clone()) * zeta.clone();
            }
        }
        let p = self.point();
        (AffinePoint::new(p.z.clone() + v[0].clone(), p.w.clone() + v[1].clone()), dv)
    }

    pub fn eval_local(&self, zeta: &C<T>) -> AffinePoint<T> {
        self.eval_local_with_deriv(zeta).0
    }

    /// `|f^N(psi_loc(zeta)) - psi_loc(lambda_s zeta)|`.
    pub fn local_residual(&self, zeta: &C<T>) -> f64 {
        let lhs = self.map.iterate(&self.eval_local(zeta), self.orbit.period as i64);
        let rhs = self.eval_local(&(self.orbit.lambda_s.clone() * zeta.clone()));
        match lhs {
            Ok(l) => l.dist(&rhs),
            Err(_) => f64::INFINITY,
        }
    }

    /// Largest residual over equispaced samples on `|zeta| = r`.
    pub fn max_local_residual(&self, r: f64) -> f64 {
        (0..RHO_SAMPLES)
            .map(|i| {
                let ang = std::f64::consts::TAU * i as f64 / RHO_SAMPLES as f64;
                let zeta = C::new(T::from_f64(r * ang.cos()), T::from_f64(r * ang.sin()));
                self.local_residual(&zeta)
            })
            .fold(0.0, |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) })
    }

    /// Number of inverse periods needed to bring `Z` into the validity disc.
    pub fn inverse_periods(&self, z: &C<T>) -> usize {
        let az = cabs_f64(z);
        if !(az > self.rho) {
            return 0;
        }
        let ls = cabs_f64(&self.orbit.lambda_s);
        let mut m = ((az / self.rho).ln() / (1.0 / ls).ln()).ceil().max(0.0) as usize;
        while m > 0 && az * ls.powi(m as i32 - 1) <= self.rho {
            m -= 1;
        }
        while az * ls.powi(m as i32) > self.rho {
            m += 1;
        }
        m
    }

    /// Global evaluation `psi(Z)`, optionally with `psi'(Z)`.
    pub fn eval_global(&self, z: &C<T>, with_derivative: bool) -> Result<LeafEval<T>> {
        let m = self.inverse_periods(z);
        let mut zeta = z.clone();
        let mut lam_m = C::<T>::one();
        for _ in 0..m {
            zeta = zeta * self.orbit.lambda_s.clone();
            lam_m = lam_m * self.orbit.lambda_s.clone();
        }
        let (x0, dx0) = self.eval_local_with_deriv(&zeta);
        let u = x0.z.re.unit_roundoff();
        let bits = x0.z.re.mantissa_bits();
        let vel = [dx0[0].clone() * lam_m.clone(), dx0[1].clone() * lam_m];
        let mut state = Walker::Affine { x: x0, v: vel, err: self.local_tolerance };
        let steps = m * self.orbit.period;
        for _ in 0..steps {
            state = state.step_inverse(&self.map, u, with_derivative);
        }
        let eval = state.finish(m, with_derivative);
        if !(eval.error_estimate <= PRECISION_LIMIT) {
            return Err(HenonError::PrecisionExhausted { estimated_error: eval.error_estimate, bits, n: None });
        }
        Ok(eval)
    }
}

/// Global evaluation result in whichever chart kept the coordinates representable.
#[derive(Clone, Debug, PartialEq)]
pub enum LeafPoint<T: Real> {
    Affine(AffinePoint<T>),
    Projective(ProjectivePoint<T>),
}

#[derive(Clone, Debug)]
pub struct LeafEval<T: Real> {
    pub point: LeafPoint<T>,
    /// Homogeneous lift of `point`: `(z, w, 1)` or the normalized projective coordinates.
    pub lift: [C<T>; 3],
    /// Derivative of a lift of the curve at this parameter (affine: `(z', w', 0)`).
    pub dlift: Option<[C<T>; 3]>,
    pub inverse_periods: usize,
    /// Estimated error relative to `1 + |x|`, or relative error of the homogeneous lift.
    pub error_estimate: f64,
}

impl<T: Real> LeafEval<T> {
    pub fn affine(&self) -> Option<&AffinePoint<T>> {
        match &self.point {
            LeafPoint::Affine(x) => Some(x),
            LeafPoint::Projective(_) => None,
        }
    }

    pub fn projective(&self) -> ProjectivePoint<T> {
        ProjectivePoint::from_homogeneous(self.lift.clone()).expect("nonzero lift")
    }

    /// Affine velocity `(z', w')` when in the affine chart.
    pub fn velocity(&self) -> Option<[C<T>; 2]> {
        match (&self.point, &self.dlift) {
            (LeafPoint::Affine(_), Some(d)) => Some([d[0].clone(), d[1].clone()]),
            _ => None,
        }
    }
}

enum Walker<T: Real> {
    Affine { x: AffinePoint<T>, v: [C<T>; 2], err: f64 },
    Projective { x: [C<T>; 3], v: [C<T>; 3], rel: f64 },
}

impl<T: Real> Walker<T> {
    fn step_inverse(self, map: &HenonMap<T>, u: f64, with_derivative: bool) -> Self {
        match self {
            Walker::Affine { x, v, err } => {
                if cabs_f64(&x.z) > AFFINE_LIMIT || cabs_f64(&x.w) > AFFINE_LIMIT {
                    let rel = err / x.norm_f64();
                    let lift = [x.z, x.w, C::one()];
                    let dlift = [v[0].clone(), v[1].clone(), C::zero()];
                    let (x, v) = normalize_pair(lift, dlift);
                    return Walker::Projective { x, v, rel }.step_inverse(map, u, with_derivative);
                }
                let jinv = map.inverse_jacobian(&x);
                let nv = if with_derivative { jinv.apply(&v) } else { v };
                let nx = map.inverse_unchecked(&x);
                let err = jinv.frobenius_f64() * err + 4.0 * u * nx.norm_f64();
                Walker::Affine { x: nx, v: nv, err }
            }
            Walker::Projective { x, v, rel } => {
                let (nx, nv) = inverse_homogeneous(map, &x, &v, with_derivative);
                let (x, v) = normalize_pair(nx, nv);
                // a coordinate drifting below the exponent range would silently collapse
                // the point onto I+, so treat it as total loss of accuracy
                let lost = T::ln_range_floor().is_some_and(|floor| {
                    x.iter().any(|c| !c.is_zero() && cabs(c).ln_abs() < floor)
                        || x.iter().any(|c| c.is_zero())
                });
                let rel = if lost { f64::INFINITY } else { map.degree() as f64 * rel + 4.0 * u };
                Walker::Projective { x, v, rel }
            }
        }
    }

    fn finish(self, m: usize, with_derivative: bool) -> LeafEval<T> {
        match self {
            Walker::Affine { x, v, err } => {
                let error_estimate = err / (1.0 + x.norm_f64());
                let lift = [x.z.clone(), x.w.clone(), C::one()];
                let dlift = with_derivative.then(|| [v[0].clone(), v[1].clone(), C::zero()]);
                LeafEval { point: LeafPoint::Affine(x), lift, dlift, inverse_periods: m, error_estimate }
            }
            Walker::Projective { x, v, rel } => {
                let p = ProjectivePoint::from_homogeneous(x.clone()).expect("normalized lift");
                LeafEval {
                    point: LeafPoint::Projective(p),
                    lift: x,
                    dlift: with_derivative.then_some(v),
                    inverse_periods: m,
                    error_estimate: rel,
                }
            }
        }
    }
}

fn normalize_pair<T: Real>(x: [C<T>; 3], v: [C<T>; 3]) -> ([C<T>; 3], [C<T>; 3]) {
    let k = largest_index(&x);
    let s = x[k].clone();
    if s.is_zero() {
        return (x, v);
    }
    let inv = C::<T>::one() / s;
    let mut nx = x.map(|c| c * inv.clone());
    nx[k] = C::one();
    (nx, v.map(|c| c * inv.clone()))
}

/// Inverse extension on a homogeneous lift together with its differential.
fn inverse_homogeneous<T: Real>(map: &HenonMap<T>, x: &[C<T>; 3], v: &[C<T>; 3], with_derivative: bool) -> ([C<T>; 3], [C<T>; 3]) {
    let d = map.degree();
    let [x0, x1, x2] = x.clone();
    let t1 = powi(&x2, d - 1);
    let t2 = if d >= 2 { powi(&x2, d - 2) } else { C::one() };
    let (ph, px, py) = map.p().eval_homogeneous(&x1, &x2);
    let a = map.a().clone();
    let out = [
        x1.clone() * t1.clone(),
        (ph - x0.clone() * t1.clone()) / a.clone(),
        t1.clone() * x2.clone(),
    ];
    if !with_derivative {
        return (out, v.clone());
    }
    let dm1 = T::from_f64((d - 1) as f64);
    let dd = T::from_f64(d as f64);
    let [v0, v1, v2] = v.clone();
    let dout = [
        v1.clone() * t1.clone() + x1 * t2.clone() * v2.clone() * dm1.clone(),
        (px * v1 + py * v2.clone() - v0 * t1.clone() - x0 * t2 * v2.clone() * dm1) / a,
        t1 * v2 * dd,
    ];
    (out, dout)
}

/// Forward-orbit distances to the saddle orbit, sampled once per period.
#[derive(Clone, Debug, Serialize)]
pub struct LeafMembership {
    pub distances: Vec<f64>,
    pub max_distance: f64,
    /// Geometric-mean ratio `d_{k+1} / d_k` after burn-in, above the rounding floor.
    pub decay_ratio: Option<f64>,
}

/// Series order matched to the mantissa width: the validity radius shrinks with the
/// tolerance, so the truncation error needs proportionally more terms.
pub fn order_for_bits(bits: u32) -> usize {
    DEFAULT_ORDER.max((DEFAULT_ORDER as f64 * bits as f64 / 53.0).ceil() as usize)
}

const LEAF_BURN_IN: usize = 2;

pub fn leaf_membership_check<T: Real>(map: &HenonMap<T>, x: &AffinePoint<T>, orbit: &SaddleOrbit<T>, steps: usize) -> LeafMembership {
    let p = &orbit.points[0];
    let floor = 1e-7 * (1.0 + p.norm_f64());
    let mut y = x.clone();
    let mut distances = vec![y.dist(p)];
    for _ in 0..steps {
        y = map.iterate(&y, orbit.period as i64).unwrap_or_else(|_| {
            let inf = T::from_f64(f64::MAX);
            AffinePoint::new(C::new(inf.clone(), T::zero()), C::new(inf, T::zero()))
        });
        distances.push(y.dist(p));
    }
    let max_distance = distances.iter().cloned().fold(0.0, f64::max);
    let mut logs = Vec::new();
    for k in LEAF_BURN_IN..distances.len().saturating_sub(1) {
        let (a, b) = (distances[k], distances[k + 1]);
        if a <= floor || b <= floor || !b.is_finite() {
            break;
        }
        logs.push((b / a).ln());
    }
    let decay_ratio = (!logs.is_empty()).then(|| (logs.iter().sum::<f64>() / logs.len() as f64).exp());
    LeafMembership { distances, max_distance, decay_ratio }
}

/// Tangency defect `|psi'(0) x eigvec_s|`.
pub fn tangency_defect<T: Real>(chart: &StableManifoldChart<T>) -> f64 {
    let c1 = &chart.coeffs[0];
    let v = &chart.orbit.eigvec_s;
    cabs_f64(&(c1[0].clone() * v[1].clone() - c1[1].clone() * v[0].clone())) / norm2(v).to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::escape::{classify_forward, classify_forward_in, filtration_radius, forward_bits_for_norm, green_plus_in, Classification};
    use crate::saddle::{default_seeds, find_periodic};
    use crate::scalar::{MpFloat, C64};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixed_chart() -> StableManifoldChart<f64> {
        let f = HenonMap::default_test_map();
        let o = find_periodic(&f, 1, &default_seeds(&f), 1e-13).unwrap().remove(1);
        build_local_series(&f, &o, DEFAULT_ORDER).unwrap()
    }

    fn log_uniform(rng: &mut ChaCha8Rng, max: f64) -> C64 {
        let r = 10f64.powf(rng.random_range(-3.0..max.log10()));
        C64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU))
    }

    #[test]
    fn first_coefficient_and_tangency() {
        let ch = fixed_chart();
        assert!((norm2(&ch.coeffs[0]) - 1.0).abs() < 1e-14);
        assert!(tangency_defect(&ch) < 1e-12);
        assert_eq!(ch.eval_local(&C64::new(0.0, 0.0)), ch.orbit.points[0]);
        assert!(ch.rho > 0.0);
        assert_eq!(ch.order(), DEFAULT_ORDER);
    }

    #[test]
    fn zero_remainder_gives_zero_coefficient() {
        let a = [[C64::new(6.6, 0.0), C64::new(-0.5, 0.0)], [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]];
        let c = solve_order(&a, &C64::new(0.0058, 0.0), &[C64::new(0.0, 0.0); 2], 2).unwrap();
        assert_eq!(c, [C64::new(0.0, 0.0); 2]);
        let sing = [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(2.0, 0.0)]];
        assert!(matches!(
            solve_order(&sing, &C64::new(1.0, 0.0), &[C64::new(1.0, 0.0); 2], 3),
            Err(HenonError::ResonanceConditioning { order: 3, .. })
        ));
    }

    #[test]
    fn local_conjugacy_by_substitution() {
        let ch = fixed_chart();
        let f = &ch.map;
        for i in 0..100 {
            let zeta = C64::from_polar(ch.rho, i as f64 * 0.0628);
            let lhs = f.eval_forward(&ch.eval_local(&zeta)).unwrap();
            let rhs = ch.eval_local(&(ch.orbit.lambda_s * zeta));
            assert!(lhs.dist(&rhs) <= 1e-8 * (1.0 + ch.orbit.points[0].norm()));
        }
    }

    #[test]
    fn global_matches_local_inside_disc() {
        let ch = fixed_chart();
        let z = C64::new(0.3 * ch.rho, -0.2 * ch.rho);
        let g = ch.eval_global(&z, true).unwrap();
        assert_eq!(g.inverse_periods, 0);
        assert_eq!(g.affine().unwrap(), &ch.eval_local(&z));
        let g0 = ch.eval_global(&C64::new(0.0, 0.0), false).unwrap();
        assert_eq!(g0.affine().unwrap(), &ch.orbit.points[0]);
    }

    #[test]
    fn global_conjugacy_and_semigroup() {
        let ch = fixed_chart();
        let f = &ch.map;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ls = ch.orbit.lambda_s;
        for _ in 0..100 {
            let z = log_uniform(&mut rng, 1e3);
            let a = ch.eval_global(&z, false).unwrap();
            let b = ch.eval_global(&(ls * z), false).unwrap();
            let (a, b) = (a.affine().unwrap().clone(), b.affine().unwrap().clone());
            let fa = f.eval_forward(&a).unwrap();
            assert!(fa.dist(&b) <= 1e-8 * (1.0 + a.norm()), "Z={z} {} {}", fa.dist(&b), a.norm());
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let ch = fixed_chart();
        for &z in &[C64::new(0.5, 0.1), C64::new(3.0, -2.0), C64::new(-20.0, 7.0)] {
            let g = ch.eval_global(&z, true).unwrap();
            let v = g.velocity().unwrap();
            let h = 1e-6 * (1.0 + z.norm());
            let p = ch.eval_global(&(z + h), false).unwrap();
            let m = ch.eval_global(&(z - h), false).unwrap();
            let (p, m) = (p.affine().unwrap(), m.affine().unwrap());
            let fd = [(p.z - m.z) / (2.0 * h), (p.w - m.w) / (2.0 * h)];
            let scale = norm2(&v);
            assert!(((fd[0] - v[0]).norm() + (fd[1] - v[1]).norm()) / scale < 1e-5);
        }
    }

    #[test]
    fn leaf_points_lie_in_k_plus() {
        let ch = fixed_chart();
        let f = &ch.map;
        let radius = filtration_radius(f);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let zs: Vec<C64> = (0..50).map(|_| log_uniform(&mut rng, 1e3)).collect();
        let max_norm = zs
            .iter()
            .map(|z| ch.eval_global(z, false).unwrap().affine().unwrap().norm())
            .fold(0.0, f64::max);
        // forward iteration from far leaf points cancels log2|x| bits per step
        let bits = forward_bits_for_norm(max_norm);
        MpFloat::with_ambient_bits(bits, || {
            let fm = f.lift::<MpFloat>();
            let om = ch.orbit.refine(&fm).unwrap();
            let chm = build_local_series(&fm, &om, order_for_bits(bits)).unwrap();
            for z in &zs {
                let x = chm.eval_global(&crate::scalar::cx(*z), false).unwrap().affine().unwrap().clone();
                assert_eq!(classify_forward_in(&fm, &x, 200, radius).classification, Classification::Bounded, "Z={z}");
                assert_eq!(green_plus_in(&fm, &x, 200, 1e-9, radius).unwrap(), 0.0);
            }
        });
        // near the saddle binary64 suffices
        for z in zs.iter().filter(|z| z.norm() < 10.0) {
            let x = ch.eval_global(z, false).unwrap().affine().unwrap().clone();
            assert_eq!(classify_forward(f, &x, 200).classification, Classification::Bounded, "Z={z}");
        }
    }

    #[test]
    fn leaf_membership_examples() {
        let ch = fixed_chart();
        let f = &ch.map;
        let o = &ch.orbit;
        let at_p = leaf_membership_check(f, &o.points[0], o, 10);
        assert_eq!(at_p.distances[0], 0.0);
        // only rounding, amplified by the unstable multiplier
        assert!(at_p.max_distance < 1e-6);

        let x = ch.eval_global(&C64::new(10.0, 0.0), false).unwrap().affine().unwrap().clone();
        let rep = leaf_membership_check(f, &x, o, 12);
        let ratio = rep.decay_ratio.unwrap();
        let ls = o.lambda_s.norm();
        assert!((ratio - ls).abs() <= 0.2 * ls, "{ratio} vs {ls}");

        let off = AffinePoint::new(o.points[0].z + 1e-3 * o.eigvec_u[0], o.points[0].w + 1e-3 * o.eigvec_u[1]);
        let rep = leaf_membership_check(f, &off, o, 3);
        assert!(rep.distances[3] > rep.distances[0]);
    }

    #[test]
    fn far_parameters_switch_to_projective() {
        let ch = fixed_chart();
        MpFloat::with_ambient_bits(192, || {
            let fm = ch.map.lift::<MpFloat>();
            let om = ch.orbit.refine(&fm).unwrap();
            let chm = build_local_series(&fm, &om, 30).unwrap();
            let mut z = crate::scalar::cx(C64::new(1.0, 0.3));
            let mut saw_projective = false;
            for _ in 0..12 {
                z = z / om.lambda_s.clone();
                let g = chm.eval_global(&z, true).unwrap();
                if let LeafPoint::Projective(p) = &g.point {
                    saw_projective = true;
                    // the leaf accumulates on I+ = [0:1:0]
                    assert!(p.chordal_distance(&ProjectivePoint::i_plus()) < 1e-10);
                }
            }
            assert!(saw_projective);
        });
    }

    #[test]
    fn binary64_reports_range_loss_instead_of_a_wrong_point() {
        let ch = fixed_chart();
        let mut z = C64::new(1.0, 0.3);
        let mut exhausted = false;
        for _ in 0..12 {
            z /= ch.orbit.lambda_s;
            match ch.eval_global(&z, true) {
                Ok(g) => {
                    if let LeafPoint::Projective(p) = &g.point {
                        assert!(p.chordal_distance(&ProjectivePoint::i_plus()) < 1e-10);
                    }
                }
                Err(HenonError::PrecisionExhausted { .. }) => {
                    exhausted = true;
                    break;
                }
                Err(e) => panic!("{e}"),
            }
        }
        assert!(exhausted);
    }

    #[test]
    fn software_precision_chart_agrees() {
        let ch = fixed_chart();
        let z = C64::new(40.0, -15.0);
        let g64 = ch.eval_global(&z, true).unwrap();
        MpFloat::with_ambient_bits(160, || {
            let fm = ch.map.lift::<MpFloat>();
            let om = ch.orbit.refine(&fm).unwrap();
            let chm = build_local_series(&fm, &om, 30).unwrap();
            assert!(chm.rho > 0.0 && chm.local_tolerance < 1e-40);
            let gm = chm.eval_global(&crate::scalar::cx(z), true).unwrap();
            let a = g64.affine().unwrap();
            let b = gm.affine().unwrap().to_c64();
            assert!(a.dist(&b) < 1e-8 * (1.0 + a.norm()), "{}", a.dist(&b));
            assert!(gm.error_estimate < 1e-30);
        });
    }
}
