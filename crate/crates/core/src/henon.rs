//! Generalized Hénon maps `f(z, w) = (p(z) - a w, z)`, their inverses, the
//! projective extensions to the plane and derivatives.

use num_traits::{One, Zero};

use crate::error::{HenonError, Result};
use crate::scalar::{cabs, cabs_f64, cx, Real, C, C64};

/// Affine coordinates beyond this modulus count as leaving the representable range.
pub const AFFINE_LIMIT: f64 = 1e150;

/// Monic polynomial `c_0 + c_1 z + ... + z^d`, `d >= 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial<T: Real> {
    coeffs: Vec<C<T>>,
}

impl Polynomial<f64> {
    /// Builds from `c_0..c_d`; the leading coefficient must be exactly one.
    pub fn new(coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() < 3 {
            return Err(HenonError::InvalidMap(format!(
                "polynomial degree {} < 2",
                coeffs.len().saturating_sub(1)
            )));
        }
        if *coeffs.last().unwrap() != C64::new(1.0, 0.0) {
            return Err(HenonError::InvalidMap(
                "polynomial must be monic (leading coefficient 1)".into(),
            ));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(HenonError::InvalidMap("non-finite coefficient".into()));
        }
        Ok(Polynomial { coeffs })
    }

    pub fn lift<S: Real>(&self) -> Polynomial<S> {
        Polynomial { coeffs: self.coeffs.iter().map(|c| cx(*c)).collect() }
    }
}

impl<T: Real> Polynomial<T> {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[C<T>] {
        &self.coeffs
    }

    pub fn eval(&self, z: &C<T>) -> C<T> {
        let mut acc = self.coeffs[self.degree()].clone();
        for c in self.coeffs[..self.degree()].iter().rev() {
            acc = acc * z.clone() + c.clone();
        }
        acc
    }

    /// `p'(z)` from the shifted coefficient list.
    pub fn eval_deriv(&self, z: &C<T>) -> C<T> {
        let d = self.degree();
        let mut acc = self.coeffs[d].clone() * T::from_f64(d as f64);
        for k in (1..d).rev() {
            acc = acc * z.clone() + self.coeffs[k].clone() * T::from_f64(k as f64);
        }
        acc
    }

    pub fn eval_with_deriv(&self, z: &C<T>) -> (C<T>, C<T>) {
        (self.eval(z), self.eval_deriv(z))
    }

    /// Homogenization `y^d p(x / y) = sum c_k x^k y^(d-k)` with both partials.
    pub fn eval_homogeneous(&self, x: &C<T>, y: &C<T>) -> (C<T>, C<T>, C<T>) {
        let d = self.degree();
        let mut val = C::zero();
        let mut dx = C::zero();
        let mut dy = C::zero();
        // powers of x and y
        let mut xp = vec![C::<T>::one(); d + 1];
        let mut yp = vec![C::<T>::one(); d + 1];
        for k in 1..=d {
            xp[k] = xp[k - 1].clone() * x.clone();
            yp[k] = yp[k - 1].clone() * y.clone();
        }
        for (k, c) in self.coeffs.iter().enumerate() {
            val = val + c.clone() * xp[k].clone() * yp[d - k].clone();
            if k > 0 {
                dx = dx + c.clone() * xp[k - 1].clone() * yp[d - k].clone() * T::from_f64(k as f64);
            }
            if k < d {
                dy = dy
                    + c.clone() * xp[k].clone() * yp[d - k - 1].clone() * T::from_f64((d - k) as f64);
            }
        }
        (val, dx, dy)
    }
}

/// `f(z, w) = (p(z) - a w, z)` with `a != 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct HenonMap<T: Real> {
    p: Polynomial<T>,
    a: C<T>,
}

impl HenonMap<f64> {
    pub fn new(p: Polynomial<f64>, a: C64) -> Result<Self> {
        if a == C64::new(0.0, 0.0) {
            return Err(HenonError::InvalidMap("a must be non-zero".into()));
        }
        if !a.re.is_finite() || !a.im.is_finite() {
            return Err(HenonError::InvalidMap("a must be finite".into()));
        }
        Ok(HenonMap { p, a })
    }

    /// `p(z) = z^2 + c`.
    pub fn quadratic(c: C64, a: C64) -> Result<Self> {
        HenonMap::new(Polynomial::new(vec![c, C64::new(0.0, 0.0), C64::new(1.0, 0.0)])?, a)
    }

    /// `p(z) = z^2 - 6`, `a = 0.5`: a real horseshoe (`|c| > 2(1+|a|)^2`) with `|a| <= 1`.
    pub fn default_test_map() -> Self {
        HenonMap::quadratic(C64::new(-6.0, 0.0), C64::new(0.5, 0.0)).expect("valid map")
    }

    pub fn lift<S: Real>(&self) -> HenonMap<S> {
        HenonMap { p: self.p.lift(), a: cx(self.a) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffinePoint<T: Real> {
    pub z: C<T>,
    pub w: C<T>,
}

impl<T: Real> AffinePoint<T> {
    pub fn new(z: C<T>, w: C<T>) -> Self {
        AffinePoint { z, w }
    }

    pub fn norm(&self) -> T {
        (self.z.norm_sqr() + self.w.norm_sqr()).sqrt()
    }

    pub fn norm_f64(&self) -> f64 {
        let n = self.norm().to_f64();
        if n.is_finite() && n > 1e-300 {
            return n;
        }
        let (a, b) = (cabs_f64(&self.z), cabs_f64(&self.w));
        let big = a.max(b);
        if big == 0.0 || !big.is_finite() {
            return big;
        }
        big * ((a / big).powi(2) + (b / big).powi(2)).sqrt()
    }

    /// max(|z|, |w|), through logarithms outside the binary64 range.
    pub fn max_abs_f64(&self) -> f64 {
        cabs_f64(&self.z).max(cabs_f64(&self.w))
    }

    pub fn dist(&self, other: &Self) -> f64 {
        let dz = self.z.clone() - other.z.clone();
        let dw = self.w.clone() - other.w.clone();
        (dz.norm_sqr() + dw.norm_sqr()).sqrt().to_f64()
    }

    pub fn is_finite(&self) -> bool {
        self.z.re.is_finite() && self.z.im.is_finite() && self.w.re.is_finite() && self.w.im.is_finite()
    }

    pub fn to_c64(&self) -> AffinePoint<f64> {
        AffinePoint::new(crate::scalar::to_c64(&self.z), crate::scalar::to_c64(&self.w))
    }

    pub fn as_array(&self) -> [C<T>; 2] {
        [self.z.clone(), self.w.clone()]
    }
}

impl AffinePoint<f64> {
    pub fn lift<S: Real>(&self) -> AffinePoint<S> {
        AffinePoint::new(cx(self.z), cx(self.w))
    }
}

/// Which coordinate patch a projective representative lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Chart {
    Affine,
    LineAtInfinity,
}

/// Homogeneous point `[z : w : t]` stored with its largest-modulus coordinate equal to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectivePoint<T: Real> {
    coords: [C<T>; 3],
}

impl<T: Real> ProjectivePoint<T> {
    /// Normalizes a nonzero homogeneous triple.
    pub fn from_homogeneous(coords: [C<T>; 3]) -> Option<Self> {
        let k = largest_index(&coords);
        if coords[k].is_zero() {
            return None;
        }
        let piv = coords[k].clone();
        let mut out = coords.map(|c| c / piv.clone());
        out[k] = C::one();
        Some(ProjectivePoint { coords: out })
    }

    pub fn from_affine(x: &AffinePoint<T>) -> Self {
        Self::from_homogeneous([x.z.clone(), x.w.clone(), C::one()]).expect("t = 1")
    }

    /// `I+ = [0:1:0]`, indeterminacy of the forward extension.
    pub fn i_plus() -> Self {
        ProjectivePoint { coords: [C::zero(), C::one(), C::zero()] }
    }

    /// `I- = [1:0:0]`, indeterminacy of the inverse extension.
    pub fn i_minus() -> Self {
        ProjectivePoint { coords: [C::one(), C::zero(), C::zero()] }
    }

    pub fn coords(&self) -> &[C<T>; 3] {
        &self.coords
    }

    pub fn chart(&self) -> Chart {
        if self.coords[2].is_zero() {
            Chart::LineAtInfinity
        } else {
            Chart::Affine
        }
    }

    pub fn to_affine(&self) -> Option<AffinePoint<T>> {
        if self.coords[2].is_zero() {
            return None;
        }
        let t = self.coords[2].clone();
        Some(AffinePoint::new(self.coords[0].clone() / t.clone(), self.coords[1].clone() / t))
    }

    pub fn is_i_plus(&self) -> bool {
        self.coords[0].is_zero() && self.coords[2].is_zero()
    }

    pub fn is_i_minus(&self) -> bool {
        self.coords[1].is_zero() && self.coords[2].is_zero()
    }

    /// Chordal distance `sin` of the Fubini–Study angle between two points.
    pub fn chordal_distance(&self, other: &Self) -> f64 {
        chordal(&self.coords, &other.coords).to_f64()
    }
}

pub(crate) fn largest_index<T: Real>(v: &[C<T>; 3]) -> usize {
    let n: Vec<T> = v.iter().map(|c| c.norm_sqr()).collect();
    let mut k = 0;
    for i in 1..3 {
        if n[i] > n[k] {
            k = i;
        }
    }
    k
}

/// `|x ^ y| / (|x| |y|)` via the Lagrange identity (no cancellation).
pub fn chordal<T: Real>(x: &[C<T>; 3], y: &[C<T>; 3]) -> T {
    let mut cross = T::zero();
    for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let m = x[i].clone() * y[j].clone() - x[j].clone() * y[i].clone();
        cross = cross + m.norm_sqr();
    }
    let nx: T = x.iter().map(|c| c.norm_sqr()).fold(T::zero(), |a, b| a + b);
    let ny: T = y.iter().map(|c| c.norm_sqr()).fold(T::zero(), |a, b| a + b);
    (cross / (nx * ny)).sqrt()
}

/// 2x2 complex matrix, row major.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian2<T: Real> {
    pub m: [[C<T>; 2]; 2],
}

impl<T: Real> Jacobian2<T> {
    pub fn identity() -> Self {
        Jacobian2 { m: [[C::one(), C::zero()], [C::zero(), C::one()]] }
    }

    pub fn det(&self) -> C<T> {
        self.m[0][0].clone() * self.m[1][1].clone() - self.m[0][1].clone() * self.m[1][0].clone()
    }

    pub fn trace(&self) -> C<T> {
        self.m[0][0].clone() + self.m[1][1].clone()
    }

    /// `self * rhs`.
    pub fn mul(&self, rhs: &Self) -> Self {
        let a = &self.m;
        let b = &rhs.m;
        let e = |i: usize, j: usize| a[i][0].clone() * b[0][j].clone() + a[i][1].clone() * b[1][j].clone();
        Jacobian2 { m: [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]] }
    }

    pub fn apply(&self, v: &[C<T>; 2]) -> [C<T>; 2] {
        [
            self.m[0][0].clone() * v[0].clone() + self.m[0][1].clone() * v[1].clone(),
            self.m[1][0].clone() * v[0].clone() + self.m[1][1].clone() * v[1].clone(),
        ]
    }

    /// Frobenius norm as binary64 (an upper bound for the operator norm).
    pub fn frobenius_f64(&self) -> f64 {
        let abs: Vec<f64> = self.m.iter().flatten().map(cabs_f64).collect();
        let big = abs.iter().cloned().fold(0.0, f64::max);
        if big == 0.0 || !big.is_finite() {
            return big;
        }
        big * abs.iter().map(|a| (a / big) * (a / big)).sum::<f64>().sqrt()
    }

    pub fn to_c64(&self) -> Jacobian2<f64> {
        let c = |z: &C<T>| crate::scalar::to_c64(z);
        Jacobian2 { m: [[c(&self.m[0][0]), c(&self.m[0][1])], [c(&self.m[1][0]), c(&self.m[1][1])]] }
    }
}

#[inline]
fn exceeds_limit<T: Real>(z: &C<T>) -> bool {
    let v = cabs(z).to_f64();
    !(v <= AFFINE_LIMIT)
}

fn check_range<T: Real>(x: AffinePoint<T>, step: usize) -> Result<AffinePoint<T>> {
    if exceeds_limit(&x.z) || exceeds_limit(&x.w) {
        Err(HenonError::EscapedRange { step })
    } else {
        Ok(x)
    }
}

impl<T: Real> HenonMap<T> {
    pub fn p(&self) -> &Polynomial<T> {
        &self.p
    }

    pub fn a(&self) -> &C<T> {
        &self.a
    }

    pub fn degree(&self) -> usize {
        self.p.degree()
    }

    /// `(p(z) - a w, z)` without range checking.
    #[inline]
    pub fn forward_unchecked(&self, x: &AffinePoint<T>) -> AffinePoint<T> {
        AffinePoint::new(self.p.eval(&x.z) - self.a.clone() * x.w.clone(), x.z.clone())
    }

    /// `(w, (p(w) - z) / a)` without range checking.
    #[inline]
    pub fn inverse_unchecked(&self, x: &AffinePoint<T>) -> AffinePoint<T> {
        AffinePoint::new(x.w.clone(), (self.p.eval(&x.w) - x.z.clone()) / self.a.clone())
    }

    pub fn eval_forward(&self, x: &AffinePoint<T>) -> Result<AffinePoint<T>> {
        check_range(self.forward_unchecked(x), 1)
    }

    pub fn eval_inverse(&self, x: &AffinePoint<T>) -> Result<AffinePoint<T>> {
        check_range(self.inverse_unchecked(x), 1)
    }

    /// Homogeneous forward extension `[t^d p(z/t) - a w t^(d-1) : z t^(d-1) : t^d]`.
    pub fn eval_forward_proj(&self, x: &ProjectivePoint<T>) -> Result<ProjectivePoint<T>> {
        if x.is_i_plus() {
            return Err(HenonError::Indeterminate("I+"));
        }
        let [z, w, t] = x.coords().clone();
        if t.is_zero() {
            // the whole line at infinity except I+ collapses onto I-
            return Ok(ProjectivePoint::i_minus());
        }
        let d = self.degree();
        let td1 = powi(&t, d - 1);
        let (ph, _, _) = self.p.eval_homogeneous(&z, &t);
        let out = [ph - self.a.clone() * w * td1.clone(), z * td1.clone(), td1 * t];
        ProjectivePoint::from_homogeneous(out).ok_or(HenonError::Indeterminate("I+"))
    }

    /// Homogeneous inverse extension `[w t^(d-1) : (t^d p(w/t) - z t^(d-1)) / a : t^d]`.
    pub fn eval_inverse_proj(&self, x: &ProjectivePoint<T>) -> Result<ProjectivePoint<T>> {
        if x.is_i_minus() {
            return Err(HenonError::Indeterminate("I-"));
        }
        let [z, w, t] = x.coords().clone();
        if t.is_zero() {
            return Ok(ProjectivePoint::i_plus());
        }
        let d = self.degree();
        let td1 = powi(&t, d - 1);
        let (ph, _, _) = self.p.eval_homogeneous(&w, &t);
        let out = [w * td1.clone(), (ph - z * td1.clone()) / self.a.clone(), td1 * t];
        ProjectivePoint::from_homogeneous(out).ok_or(HenonError::Indeterminate("I-"))
    }

    /// `Df = [[p'(z), -a], [1, 0]]`.
    pub fn jacobian(&self, x: &AffinePoint<T>) -> Jacobian2<T> {
        Jacobian2 { m: [[self.p.eval_deriv(&x.z), -self.a.clone()], [C::one(), C::zero()]] }
    }

    /// `Df^-1 = [[0, 1], [-1/a, p'(w)/a]]` at `x` (the point being pulled back).
    pub fn inverse_jacobian(&self, x: &AffinePoint<T>) -> Jacobian2<T> {
        let inv_a = C::<T>::one() / self.a.clone();
        Jacobian2 {
            m: [[C::zero(), C::one()], [-inv_a.clone(), self.p.eval_deriv(&x.w) * inv_a]],
        }
    }

    /// `f^n(x)` for signed `n`; errors carry the 1-based step that left the range.
    pub fn iterate(&self, x: &AffinePoint<T>, n: i64) -> Result<AffinePoint<T>> {
        let mut y = x.clone();
        for step in 1..=n.unsigned_abs() as usize {
            y = if n > 0 { self.forward_unchecked(&y) } else { self.inverse_unchecked(&y) };
            y = check_range(y, step)?;
        }
        Ok(y)
    }

    /// `f^n(x)` together with `D(f^n)(x)`, the product of step Jacobians in orbit order.
    pub fn iterate_with_jacobian(
        &self,
        x: &AffinePoint<T>,
        n: i64,
    ) -> Result<(AffinePoint<T>, Jacobian2<T>)> {
        let mut y = x.clone();
        let mut jac = Jacobian2::identity();
        for step in 1..=n.unsigned_abs() as usize {
            let (next, step_jac) = if n > 0 {
                (self.forward_unchecked(&y), self.jacobian(&y))
            } else {
                (self.inverse_unchecked(&y), self.inverse_jacobian(&y))
            };
            jac = step_jac.mul(&jac);
            y = check_range(next, step)?;
        }
        Ok((y, jac))
    }
}

pub(crate) fn powi<T: Real>(z: &C<T>, k: usize) -> C<T> {
    let mut acc = C::one();
    for _ in 0..k {
        acc = acc * z.clone();
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn fixed_points() -> (f64, f64) {
        // z^2 - (1 + a) z + c = 0 with c = -6, a = 0.5
        let disc: f64 = 1.5f64 * 1.5 + 24.0;
        ((1.5 + disc.sqrt()) / 2.0, (1.5 - disc.sqrt()) / 2.0)
    }

    #[test]
    fn forward_examples() {
        let f = HenonMap::default_test_map();
        let y = f.eval_forward(&AffinePoint::new(c(0.0, 0.0), c(0.0, 0.0))).unwrap();
        assert_eq!(y, AffinePoint::new(c(-6.0, 0.0), c(0.0, 0.0)));
        let (z1, _) = fixed_points();
        assert!((z1 - 3.3117376).abs() < 1e-7);
        let x = AffinePoint::new(c(z1, 0.0), c(z1, 0.0));
        assert!(f.eval_forward(&x).unwrap().dist(&x) < 1e-14);
        let g = HenonMap::quadratic(c(0.0, 0.0), c(1.0, 0.0)).unwrap();
        let y = g.eval_forward(&AffinePoint::new(c(1.0, 0.0), c(1.0, 0.0))).unwrap();
        assert_eq!(y, AffinePoint::new(c(0.0, 0.0), c(1.0, 0.0)));
    }

    #[test]
    fn inverse_examples() {
        let f = HenonMap::default_test_map();
        let y = f.eval_inverse(&AffinePoint::new(c(-6.0, 0.0), c(0.0, 0.0))).unwrap();
        assert_eq!(y, AffinePoint::new(c(0.0, 0.0), c(0.0, 0.0)));
        let (z1, _) = fixed_points();
        let x = AffinePoint::new(c(z1, 0.0), c(z1, 0.0));
        assert!(f.eval_inverse(&x).unwrap().dist(&x) < 1e-13);
    }

    #[test]
    fn overflow_is_reported() {
        let f = HenonMap::default_test_map();
        let x = AffinePoint::new(c(1e100, 0.0), c(0.0, 0.0));
        assert_eq!(f.eval_forward(&x), Err(HenonError::EscapedRange { step: 1 }));
        let err = f.iterate(&AffinePoint::new(c(1e10, 0.0), c(0.0, 0.0)), 5).unwrap_err();
        assert_eq!(err, HenonError::EscapedRange { step: 4 });
    }

    #[test]
    fn projective_line_at_infinity() {
        let f = HenonMap::default_test_map();
        let im = ProjectivePoint::<f64>::i_minus();
        assert_eq!(f.eval_forward_proj(&im).unwrap(), im);
        let q = ProjectivePoint::from_homogeneous([c(1.0, 0.0), c(5.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(f.eval_forward_proj(&q).unwrap(), im);
        let ip = ProjectivePoint::<f64>::i_plus();
        assert_eq!(f.eval_forward_proj(&ip), Err(HenonError::Indeterminate("I+")));
        assert_eq!(f.eval_inverse_proj(&ip).unwrap(), ip);
        let q = ProjectivePoint::from_homogeneous([c(5.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(f.eval_inverse_proj(&q).unwrap(), ip);
        assert_eq!(f.eval_inverse_proj(&im), Err(HenonError::Indeterminate("I-")));
    }

    #[test]
    fn projective_matches_affine_chart() {
        let f = HenonMap::default_test_map();
        let x = AffinePoint::new(c(1.25, -0.5), c(-2.0, 0.75));
        let img = f.eval_forward_proj(&ProjectivePoint::from_affine(&x)).unwrap();
        let expect = ProjectivePoint::from_affine(&f.eval_forward(&x).unwrap());
        assert!(img.chordal_distance(&expect) < 1e-15);
        let back = f.eval_inverse_proj(&img).unwrap();
        assert!(back.chordal_distance(&ProjectivePoint::from_affine(&x)) < 1e-14);
    }

    #[test]
    fn jacobian_and_eigenvalues() {
        let f = HenonMap::default_test_map();
        let (z1, _) = fixed_points();
        let x = AffinePoint::new(c(z1, 0.0), c(z1, 0.0));
        let j = f.jacobian(&x);
        assert!((j.det() - c(0.5, 0.0)).norm() < 1e-14);
        // mu^2 - 2 z1 mu + a = 0
        let r = (z1 * z1 - 0.5).sqrt();
        let (mu_u, mu_s) = (z1 + r, z1 - r);
        assert!((mu_u - 6.5471).abs() < 1e-4);
        assert!((mu_s - 0.07637).abs() < 1e-5);
        assert!((mu_u * mu_s - 0.5).abs() < 1e-12);
        let tr = j.trace();
        assert!((tr.re - (mu_u + mu_s)).abs() < 1e-12);
    }

    #[test]
    fn iterate_edge_cases() {
        let f = HenonMap::default_test_map();
        let x = AffinePoint::new(c(0.3, 0.1), c(-0.2, 0.4));
        let (y, j) = f.iterate_with_jacobian(&x, 0).unwrap();
        assert_eq!(y, x);
        assert_eq!(j, Jacobian2::identity());
        assert_eq!(f.iterate(&x, 1).unwrap(), f.eval_forward(&x).unwrap());
        let (z1, _) = fixed_points();
        let p = AffinePoint::new(c(z1, 0.0), c(z1, 0.0));
        // rounding grows by |lambda_u|^10 ~ 1.5e8 along the unstable direction
        assert!(f.iterate(&p, 10).unwrap().dist(&p) < 1e-6);
    }

    #[test]
    fn jacobian_chain_matches_finite_differences() {
        let f = HenonMap::default_test_map();
        let x = AffinePoint::new(c(0.4, 0.2), c(-0.3, 0.1));
        for n in 1..=5i64 {
            let (_, jac) = f.iterate_with_jacobian(&x, n).unwrap();
            let h = 1e-6;
            for col in 0..2 {
                let bump = |s: f64| {
                    let mut y = x.clone();
                    if col == 0 {
                        y.z += C64::new(s, 0.0);
                    } else {
                        y.w += C64::new(s, 0.0);
                    }
                    f.iterate(&y, n).unwrap()
                };
                let (p, m) = (bump(h), bump(-h));
                let fd = [(p.z - m.z) / (2.0 * h), (p.w - m.w) / (2.0 * h)];
                for row in 0..2 {
                    let exact = jac.m[row][col];
                    let rel = (fd[row] - exact).norm() / exact.norm().max(1.0);
                    assert!(rel < 1e-5, "n={n} ({row},{col}) rel={rel}");
                }
            }
        }
    }

    #[test]
    fn line_at_infinity_collapses_exactly() {
        let f = HenonMap::default_test_map();
        for k in 0..50 {
            let ang = k as f64 * 0.37;
            let r = 10f64.powi(k - 25);
            let q = ProjectivePoint::from_homogeneous([C64::from_polar(1.0, ang), C64::from_polar(r, 2.0 * ang), c(0.0, 0.0)])
                .unwrap();
            assert_eq!(f.eval_forward_proj(&q).unwrap(), ProjectivePoint::i_minus());
            let q = ProjectivePoint::from_homogeneous([C64::from_polar(r, ang), C64::from_polar(1.0, 2.0 * ang), c(0.0, 0.0)])
                .unwrap();
            assert_eq!(f.eval_inverse_proj(&q).unwrap(), ProjectivePoint::i_plus());
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(zr in -7.0..7.0f64, zi in -7.0..7.0f64, wr in -7.0..7.0f64, wi in -7.0..7.0f64) {
            let f = HenonMap::default_test_map();
            let x = AffinePoint::new(c(zr, zi), c(wr, wi));
            let back = f.eval_inverse(&f.eval_forward(&x).unwrap()).unwrap();
            prop_assert!(back.dist(&x) <= 1e-12 * (1.0 + x.norm()));
        }

        #[test]
        fn determinant_is_a(zr in -50.0..50.0f64, zi in -50.0..50.0f64) {
            let f = HenonMap::quadratic(c(-1.0, 0.3), c(0.2, -0.7)).unwrap();
            let x = AffinePoint::new(c(zr, zi), c(1.0, 2.0));
            prop_assert!((f.jacobian(&x).det() - c(0.2, -0.7)).norm() < 1e-14);
        }

        #[test]
        fn chart_consistency(zr in -1e6..1e6f64, zi in -1e6..1e6f64, wr in -1e6..1e6f64, wi in -1e6..1e6f64) {
            let f = HenonMap::default_test_map();
            let x = AffinePoint::new(c(zr, zi), c(wr, wi));
            let lhs = f.eval_forward_proj(&ProjectivePoint::from_affine(&x)).unwrap();
            let rhs = ProjectivePoint::from_affine(&f.eval_forward(&x).unwrap());
            prop_assert!(lhs.chordal_distance(&rhs) < 1e-12);
        }
    }
}
