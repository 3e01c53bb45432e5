//! Periodic orbits by Newton's method, saddle certification and hyperbolicity
//! estimates along an orbit.
//!
//! A period-`N` orbit of `f(z, w) = (p(z) - a w, z)` is determined by its
//! `z`-sequence: the points are `x_i = (z_i, z_{i-1})` and the orbit equations read
//! `z_{i+1} = p(z_i) - a z_{i-1}` with indices mod `N`.

use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{HenonError, Result};
use crate::escape::filtration_radius;
use crate::henon::{AffinePoint, HenonMap, Jacobian2};
use crate::scalar::{cabs, csqrt, norm2, to_c64, Real, C, C64};

/// Points closer than this are identified during deduplication.
pub const DEDUP_TOL: f64 = 1e-6;
const MAX_NEWTON: usize = 100;
const MAX_HALVINGS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct SaddleOrbit<T: Real = f64> {
    pub period: usize,
    pub points: Vec<AffinePoint<T>>,
    pub lambda_s: C<T>,
    pub lambda_u: C<T>,
    /// Unit eigenvectors of `Df^N` at `points[0]`, first nonzero component real positive.
    pub eigvec_s: [C<T>; 2],
    pub eigvec_u: [C<T>; 2],
    /// `max_i |f(x_i) - x_{i+1}|`.
    pub residual: f64,
    pub is_saddle: bool,
    /// `|step_{k+1}| / |step_k|^2` over the last pair of Newton steps above rounding level.
    pub newton_quadratic_ratio: f64,
    pub newton_iterations: usize,
}

/// Bounds `|Df^n v_s| <= c lambda^n` for `n <= depth`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HyperbolicityEstimate {
    pub c: f64,
    pub lambda: f64,
    pub depth: usize,
}

/// Dense complex Gaussian elimination with partial pivoting; `None` if singular.
pub(crate) fn solve_dense<T: Real>(mut m: Vec<Vec<C<T>>>, mut b: Vec<C<T>>) -> Option<Vec<C<T>>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].norm_sqr().partial_cmp(&m[j][col].norm_sqr()).unwrap_or(std::cmp::Ordering::Equal))?;
        if m[piv][col].is_zero() {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        let inv = C::<T>::one() / m[col][col].clone();
        for row in col + 1..n {
            let f = m[row][col].clone() * inv.clone();
            if f.is_zero() {
                continue;
            }
            for k in col..n {
                let t = m[col][k].clone() * f.clone();
                m[row][k] = m[row][k].clone() - t;
            }
            let t = b[col].clone() * f;
            b[row] = b[row].clone() - t;
        }
    }
    let mut x = vec![C::<T>::zero(); n];
    for row in (0..n).rev() {
        let mut s = b[row].clone();
        for k in row + 1..n {
            s = s - m[row][k].clone() * x[k].clone();
        }
        x[row] = s / m[row][row].clone();
    }
    Some(x)
}

fn seq_norm<T: Real>(v: &[C<T>]) -> f64 {
    v.iter().map(|c| c.norm_sqr().to_f64()).sum::<f64>().sqrt()
}

fn orbit_residual_vec<T: Real>(map: &HenonMap<T>, z: &[C<T>]) -> Vec<C<T>> {
    let n = z.len();
    (0..n)
        .map(|i| {
            let prev = &z[(i + n - 1) % n];
            let next = &z[(i + 1) % n];
            map.p().eval(&z[i]) - map.a().clone() * prev.clone() - next.clone()
        })
        .collect()
}

struct NewtonOutcome<T: Real> {
    z: Vec<C<T>>,
    quad_ratio: f64,
    iterations: usize,
}

/// Damped Newton on the cyclic `z`-sequence equations.
fn newton_sequence<T: Real>(map: &HenonMap<T>, mut z: Vec<C<T>>, tol: f64, blowup: f64) -> Option<NewtonOutcome<T>> {
    let n = z.len();
    let mut g = orbit_residual_vec(map, &z);
    let mut g_norm = seq_norm(&g);
    let mut steps: Vec<(f64, bool)> = Vec::new();
    let eps = z.first().map(|c| c.re.unit_roundoff()).unwrap_or(f64::EPSILON);
    for it in 0..MAX_NEWTON {
        let mut jac = vec![vec![C::<T>::zero(); n]; n];
        for i in 0..n {
            jac[i][i] = jac[i][i].clone() + map.p().eval_deriv(&z[i]);
            let ip = (i + n - 1) % n;
            jac[i][ip] = jac[i][ip].clone() - map.a().clone();
            let inx = (i + 1) % n;
            jac[i][inx] = jac[i][inx].clone() - C::one();
        }
        let rhs: Vec<C<T>> = g.iter().map(|c| -c.clone()).collect();
        let delta = solve_dense(jac, rhs)?;
        let step_norm = seq_norm(&delta);
        if !step_norm.is_finite() {
            return None;
        }
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<C<T>> = z.iter().zip(&delta).map(|(a, b)| a.clone() + b.clone() * t.clone()).collect();
            let tg = orbit_residual_vec(map, &trial);
            let tn = seq_norm(&tg);
            if tn.is_finite() && (tn < g_norm || tn <= 64.0 * eps * (1.0 + seq_norm(&trial))) {
                accepted = Some((trial, tg, tn));
                break;
            }
            t = t * T::from_f64(0.5);
        }
        let full = t.to_f64() == 1.0;
        let Some((trial, tg, tn)) = accepted else {
            // no decrease possible: either converged to rounding level or stuck
            let scale = 1.0 + seq_norm(&z);
            if g_norm <= 1e3 * eps * scale * scale {
                return Some(NewtonOutcome { z, quad_ratio: quad_ratio(&steps, eps), iterations: it });
            }
            return None;
        };
        steps.push((step_norm * t.to_f64(), full));
        z = trial;
        g = tg;
        g_norm = tn;
        if z.iter().any(|c| cabs(c).to_f64() > blowup) {
            return None;
        }
        if step_norm <= tol * (1.0 + seq_norm(&z)) {
            return Some(NewtonOutcome { z, quad_ratio: quad_ratio(&steps, eps), iterations: it + 1 });
        }
    }
    None
}

fn quad_ratio(steps: &[(f64, bool)], eps: f64) -> f64 {
    let noise = 1e3 * eps;
    let mut ratio = 0.0;
    for w in steps.windows(2) {
        let ((a, fa), (b, fb)) = (w[0], w[1]);
        if fa && fb && a > 0.0 && b > noise {
            ratio = b / (a * a);
        }
    }
    ratio
}

/// Eigen-decomposition of a 2x2 matrix with known determinant; returns `(small, large)`.
pub fn eigen2<T: Real>(m: &Jacobian2<T>, det: &C<T>) -> ((C<T>, [C<T>; 2]), (C<T>, [C<T>; 2])) {
    let half_tr = m.trace() * T::from_f64(0.5);
    let disc = csqrt(&(half_tr.clone() * half_tr.clone() - det.clone()));
    let plus = half_tr.clone() + disc.clone();
    let minus = half_tr - disc;
    let big = if plus.norm_sqr() >= minus.norm_sqr() { plus } else { minus };
    let small = if big.is_zero() { C::zero() } else { det.clone() / big.clone() };
    let vs = eigvec(m, &small);
    let vu = eigvec(m, &big);
    ((small, vs), (big, vu))
}

fn eigvec<T: Real>(m: &Jacobian2<T>, lambda: &C<T>) -> [C<T>; 2] {
    let a = [m.m[0][1].clone(), lambda.clone() - m.m[0][0].clone()];
    let b = [lambda.clone() - m.m[1][1].clone(), m.m[1][0].clone()];
    let v = if norm2(&a) >= norm2(&b) { a } else { b };
    normalize_phase(v)
}

/// Unit vector whose first nonzero component is real and positive.
pub fn normalize_phase<T: Real>(v: [C<T>; 2]) -> [C<T>; 2] {
    let n = norm2(&v);
    let lead = if v[0].is_zero() { v[1].clone() } else { v[0].clone() };
    let phase = lead.clone() / cabs(&lead);
    let f = phase.conj() / n;
    let mut out = [v[0].clone() * f.clone(), v[1].clone() * f];
    let k = if v[0].is_zero() { 1 } else { 0 };
    out[k] = C::new(out[k].re.clone(), T::zero());
    out
}

/// Builds the orbit record from a converged `z`-sequence.
fn assemble<T: Real>(map: &HenonMap<T>, z: Vec<C<T>>, quad_ratio: f64, iterations: usize) -> SaddleOrbit<T> {
    let n = z.len();
    let points: Vec<AffinePoint<T>> = (0..n).map(|i| AffinePoint::new(z[i].clone(), z[(i + n - 1) % n].clone())).collect();
    let mut jac = Jacobian2::identity();
    for p in &points {
        jac = map.jacobian(p).mul(&jac);
    }
    let mut det = C::<T>::one();
    for _ in 0..n {
        det = det * map.a().clone();
    }
    let ((ls, vs), (lu, vu)) = eigen2(&jac, &det);
    let residual = (0..n)
        .map(|i| map.forward_unchecked(&points[i]).dist(&points[(i + 1) % n]))
        .fold(0.0, f64::max);
    let is_saddle = cabs(&ls).to_f64() < 1.0 && cabs(&lu).to_f64() > 1.0;
    SaddleOrbit {
        period: n,
        points,
        lambda_s: ls,
        lambda_u: lu,
        eigvec_s: vs,
        eigvec_u: vu,
        residual,
        is_saddle,
        newton_quadratic_ratio: quad_ratio,
        newton_iterations: iterations,
    }
}

fn minimal_period(z: &[C64]) -> usize {
    let n = z.len();
    (1..=n)
        .find(|&k| n % k == 0 && (0..n).all(|i| (z[(i + k) % n] - z[i]).norm() < DEDUP_TOL))
        .unwrap_or(n)
}

fn canonical_rotation(z: &mut [C64]) {
    let start = (0..z.len())
        .min_by(|&i, &j| {
            (z[i].re, z[i].im).partial_cmp(&(z[j].re, z[j].im)).unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    z.rotate_left(start);
}

fn same_cycle(a: &[C64], b: &[C64]) -> bool {
    let n = a.len();
    (0..n).any(|r| (0..n).all(|i| (a[i] - b[(i + r) % n]).norm() < DEDUP_TOL))
}

/// Initial `z`-sequence from a seed point: forward orbit, pulled back into the bidisc.
fn seed_sequence(map: &HenonMap<f64>, seed: &AffinePoint<f64>, n: usize, r: f64) -> Vec<C64> {
    let clamp = |c: C64| if c.norm() > r { c * (r / c.norm()) } else { c };
    let mut prev = clamp(seed.w);
    let mut cur = clamp(seed.z);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(cur);
        let next = clamp(map.p().eval(&cur) - map.a() * prev);
        prev = cur;
        cur = next;
    }
    out
}

/// Deterministic seed grid in the filtration bidisc: a real lattice plus a complex one.
pub fn default_seeds(map: &HenonMap<f64>) -> Vec<AffinePoint<f64>> {
    let r = filtration_radius(map).r;
    let mut seeds = Vec::new();
    let m = 9;
    for i in 0..m {
        for j in 0..m {
            let x = -r + 2.0 * r * (i as f64 + 0.5) / m as f64;
            let y = -r + 2.0 * r * (j as f64 + 0.5) / m as f64;
            seeds.push(AffinePoint::new(C64::new(x, 0.0), C64::new(y, 0.0)));
            seeds.push(AffinePoint::new(C64::new(x, 0.3 * y), C64::new(y, -0.2 * x)));
        }
    }
    seeds
}

/// Periodic orbits of exact period `n`, deduplicated and sorted by their canonical first point.
pub fn find_periodic(map: &HenonMap<f64>, n: usize, seeds: &[AffinePoint<f64>], tol: f64) -> Result<Vec<SaddleOrbit>> {
    if n == 0 {
        return Err(HenonError::Usage("period must be at least 1".into()));
    }
    let r = filtration_radius(map).r;
    let mut found: Vec<(Vec<C64>, f64, usize)> = Vec::new();
    for seed in seeds {
        let z0 = seed_sequence(map, seed, n, r);
        let Some(out) = newton_sequence(map, z0, tol, 1e6 * r) else { continue };
        let mut z = out.z;
        if z.iter().any(|c| c.norm() > r * (1.0 + 1e-9)) || minimal_period(&z) != n {
            continue;
        }
        canonical_rotation(&mut z);
        if found.iter().any(|(f, _, _)| same_cycle(f, &z)) {
            continue;
        }
        found.push((z, out.quad_ratio, out.iterations));
    }
    found.sort_by(|a, b| (a.0[0].re, a.0[0].im).partial_cmp(&(b.0[0].re, b.0[0].im)).unwrap_or(std::cmp::Ordering::Equal));
    Ok(found.into_iter().map(|(z, q, it)| assemble(map, z, q, it)).collect())
}

impl SaddleOrbit<f64> {
    /// Re-solves the orbit in a wider scalar type starting from this binary64 orbit.
    pub fn refine<T: Real>(&self, map: &HenonMap<T>) -> Result<SaddleOrbit<T>> {
        let z0: Vec<C<T>> = self.points.iter().map(|p| crate::scalar::cx(p.z)).collect();
        let probe = T::from_f64(1.0);
        let tol = 16.0 * probe.unit_roundoff();
        let out = newton_sequence(map, z0, tol, f64::INFINITY).ok_or(HenonError::PrecisionExhausted {
            estimated_error: self.residual,
            bits: probe.mantissa_bits(),
            n: None,
        })?;
        let orbit = assemble(map, out.z, out.quad_ratio, out.iterations);
        if !orbit.is_saddle {
            return Err(HenonError::NonSaddle {
                lambda_s_abs: cabs(&orbit.lambda_s).to_f64(),
                lambda_u_abs: cabs(&orbit.lambda_u).to_f64(),
            });
        }
        Ok(orbit)
    }
}

impl<T: Real> SaddleOrbit<T> {
    pub fn lambda_s_c64(&self) -> C64 {
        to_c64(&self.lambda_s)
    }

    pub fn lambda_u_c64(&self) -> C64 {
        to_c64(&self.lambda_u)
    }

    /// `Df^N` at `points[0]`.
    pub fn period_jacobian(&self, map: &HenonMap<T>) -> Jacobian2<T> {
        let mut jac = Jacobian2::identity();
        for p in &self.points {
            jac = map.jacobian(p).mul(&jac);
        }
        jac
    }

    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(|p| p.norm_f64()).fold(0.0, f64::max)
    }

    fn require_saddle(&self) -> Result<()> {
        if self.is_saddle {
            Ok(())
        } else {
            Err(HenonError::NonSaddle {
                lambda_s_abs: cabs(&self.lambda_s).to_f64(),
                lambda_u_abs: cabs(&self.lambda_u).to_f64(),
            })
        }
    }
}

/// Contraction of the stable direction along the orbit.
///
/// The stable vector is pushed forward one step at a time. At every period boundary
/// it is projected back onto `E^s` along `E^u`, which removes the rounding component
/// that the unstable multiplier would otherwise amplify.
pub fn estimate_hyperbolicity<T: Real>(map: &HenonMap<T>, orbit: &SaddleOrbit<T>, depth: usize) -> Result<HyperbolicityEstimate> {
    orbit.require_saddle()?;
    let n = orbit.period;
    let lambda = cabs(&orbit.lambda_s).to_f64().powf(1.0 / n as f64);
    if !(lambda < 1.0) {
        return Err(HenonError::NotContracting { n: 0, ratio: lambda });
    }
    let vs = orbit.eigvec_s.clone();
    let vu = orbit.eigvec_u.clone();
    // coefficients of e_s in the basis (v_s, v_u): solve [vs vu] (alpha, beta) = v
    let det = vs[0].clone() * vu[1].clone() - vs[1].clone() * vu[0].clone();
    let project = |v: &[C<T>; 2]| -> [C<T>; 2] {
        let alpha = (v[0].clone() * vu[1].clone() - v[1].clone() * vu[0].clone()) / det.clone();
        [vs[0].clone() * alpha.clone(), vs[1].clone() * alpha]
    };
    let mut v = vs.clone();
    let mut c = 1.0f64;
    for k in 1..=depth {
        let x = &orbit.points[(k - 1) % n];
        v = map.jacobian(x).apply(&v);
        if k % n == 0 {
            v = project(&v);
        }
        let growth = norm2(&v).to_f64();
        let ratio = growth / lambda.powi(k as i32);
        if !ratio.is_finite() {
            return Err(HenonError::NotContracting { n: k, ratio });
        }
        c = c.max(ratio);
    }
    Ok(HyperbolicityEstimate { c, lambda, depth })
}

/// CSV rows `period,index,re_z,im_z,re_w,im_w,lambda_s,lambda_u,residual`.
pub fn write_orbits_csv<W: std::io::Write>(orbits: &[SaddleOrbit], mut out: W) -> std::io::Result<()> {
    writeln!(out, "period,index,re_z,im_z,re_w,im_w,lambda_s,lambda_u,residual")?;
    for o in orbits {
        for (i, p) in o.points.iter().enumerate() {
            writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{:.16e}",
                o.period,
                i,
                p.z.re,
                p.z.im,
                p.w.re,
                p.w.im,
                fmt_c(o.lambda_s),
                fmt_c(o.lambda_u),
                o.residual
            )?;
        }
    }
    Ok(())
}

fn fmt_c(c: C64) -> String {
    format!("{:.16e}{:+.16e}i", c.re, c.im)
}
