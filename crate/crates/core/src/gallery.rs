//! Explicit entire curves in the projective plane and their Fubini–Study speed profiles.
//!
//! Each homogeneous coordinate has the form `P(z) exp(E(z))` with polynomials `P`, `E`.
//! Evaluation divides every coordinate by the largest `|exp(E)|` before exponentiating,
//! so no coordinate overflows however fast the exponentials grow.

use std::f64::consts::TAU;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HenonError, Result};
use crate::fs::{fs_speed, TangentSample};
use crate::scalar::C64;

/// `P(z) exp(E(z))`, coefficients stored from the constant term upwards.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpTerm {
    pub poly: Vec<C64>,
    pub exponent: Vec<C64>,
}

fn horner(c: &[C64], z: C64) -> (C64, C64) {
    let mut v = C64::new(0.0, 0.0);
    let mut d = C64::new(0.0, 0.0);
    for &a in c.iter().rev() {
        d = d * z + v;
        v = v * z + a;
    }
    (v, d)
}

impl ExpTerm {
    fn new(poly: Vec<C64>, exponent: Vec<C64>) -> Self {
        ExpTerm { poly, exponent }
    }

    /// `ln |P(z) exp(E(z))|`, `-inf` where `P` vanishes.
    pub fn log_abs(&self, z: C64) -> f64 {
        horner(&self.poly, z).0.norm().ln() + horner(&self.exponent, z).0.re
    }

    /// Value and derivative multiplied by `exp(-shift)`.
    fn eval_scaled(&self, z: C64, shift: f64) -> (C64, C64) {
        let (p, dp) = horner(&self.poly, z);
        let (e, de) = horner(&self.exponent, z);
        let x = (e - shift).exp();
        (p * x, (dp + p * de) * x)
    }
}

/// The curve families of the gallery.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum CurveSpec {
    /// `[z : p(z) : 1]`.
    PolyGraph { p: Vec<C64> },
    /// `[p(z) e^z : q(z) e^{alpha z} : 1]`.
    ExpPair { p: Vec<C64>, q: Vec<C64>, alpha: C64 },
    /// `[e^z : e^{i z^2} : 1]`.
    ExpQuadratic,
    /// `(z, exp(z^n))`, i.e. `[z : e^{z^n} : 1]`.
    GraphExpPower { n: u32 },
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

impl CurveSpec {
    pub fn family(&self) -> &'static str {
        match self {
            CurveSpec::PolyGraph { .. } => "poly-graph",
            CurveSpec::ExpPair { .. } => "exp-pair",
            CurveSpec::ExpQuadratic => "exp-quadratic",
            CurveSpec::GraphExpPower { .. } => "graph-exp-power",
        }
    }

    /// Family name with its parameters, used as the CSV label.
    pub fn label(&self) -> String {
        match self {
            CurveSpec::PolyGraph { p } => format!("poly-graph[p={}]", poly_text(p)),
            CurveSpec::ExpPair { p, q, alpha } => {
                format!("exp-pair[p={};q={};alpha={}]", poly_text(p), poly_text(q), coeff_text(*alpha))
            }
            CurveSpec::ExpQuadratic => "exp-quadratic".to_string(),
            CurveSpec::GraphExpPower { n } => format!("graph-exp-power[n={n}]"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HenonError::InvalidMap(m.to_string()));
        match self {
            CurveSpec::GraphExpPower { n } if *n == 0 => bad("graph-exp-power needs n >= 1"),
            CurveSpec::PolyGraph { p } if p.is_empty() => bad("poly-graph needs a polynomial"),
            CurveSpec::ExpPair { p, q, .. } if p.iter().all(|c| c.norm() == 0.0) || q.iter().all(|c| c.norm() == 0.0) => {
                bad("exp-pair needs nonzero polynomials")
            }
            _ => Ok(()),
        }
    }

    pub fn terms(&self) -> [ExpTerm; 3] {
        let one = ExpTerm::new(vec![c(1.0)], vec![]);
        let z = ExpTerm::new(vec![c(0.0), c(1.0)], vec![]);
        match self {
            CurveSpec::PolyGraph { p } => [z, ExpTerm::new(p.clone(), vec![]), one],
            CurveSpec::ExpPair { p, q, alpha } => [
                ExpTerm::new(p.clone(), vec![c(0.0), c(1.0)]),
                ExpTerm::new(q.clone(), vec![c(0.0), *alpha]),
                one,
            ],
            CurveSpec::ExpQuadratic => [
                ExpTerm::new(vec![c(1.0)], vec![c(0.0), c(1.0)]),
                ExpTerm::new(vec![c(1.0)], vec![c(0.0), c(0.0), C64::new(0.0, 1.0)]),
                one,
            ],
            CurveSpec::GraphExpPower { n } => {
                let mut e = vec![c(0.0); *n as usize + 1];
                e[*n as usize] = c(1.0);
                [z, ExpTerm::new(vec![c(1.0)], e), one]
            }
        }
    }

    /// Homogeneous lift and its derivative, scaled so the largest coordinate is O(1).
    pub fn lift(&self, theta: C64) -> ([C64; 3], [C64; 3]) {
        let terms = self.terms();
        let shift = terms.iter().map(|t| t.log_abs(theta)).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        let shift = if shift.is_finite() { shift } else { 0.0 };
        let mut x = [C64::new(0.0, 0.0); 3];
        let mut dx = [C64::new(0.0, 0.0); 3];
        for (i, t) in terms.iter().enumerate() {
            let (v, d) = t.eval_scaled(theta, shift);
            x[i] = v;
            dx[i] = d;
        }
        (x, dx)
    }
}

fn coeff_text(c: C64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else if c.re == 0.0 {
        format!("{}i", c.im)
    } else {
        format!("({}{:+}i)", c.re, c.im)
    }
}

/// Compact polynomial text such as `z^3-2z+1`.
pub fn poly_text(p: &[C64]) -> String {
    let mut out = String::new();
    for (k, &a) in p.iter().enumerate().rev() {
        if a.norm() == 0.0 {
            continue;
        }
        let mut coef = coeff_text(a);
        if k > 0 && (coef == "1" || coef == "-1") {
            coef.pop();
        }
        if !out.is_empty() && !coef.starts_with('-') {
            out.push('+');
        }
        out.push_str(&coef);
        match k {
            0 => {}
            1 => out.push('z'),
            _ => out.push_str(&format!("z^{k}")),
        }
    }
    if out.is_empty() {
        "0".into()
    } else {
        out
    }
}

/// Point and velocity of the curve in the chart of its largest coordinate.
/// Ties go to the affine chart `X2 = 1`.
pub fn eval_curve(spec: &CurveSpec, theta: C64) -> TangentSample<f64> {
    let (x, dx) = spec.lift(theta);
    sample_from_lift(&x, &dx)
}

fn sample_from_lift(x: &[C64; 3], dx: &[C64; 3]) -> TangentSample<f64> {
    let n = x.map(|c| c.norm());
    let k = if n[2] >= n[0] && n[2] >= n[1] { 2 } else if n[1] >= n[0] { 1 } else { 0 };
    TangentSample::from_lift_in_chart(x, dx, k).expect("curve coordinates never vanish together")
}

pub fn curve_speed(spec: &CurveSpec, theta: C64) -> f64 {
    fs_speed(&eval_curve(spec, theta))
}

/// Default scan radii.
pub const DEFAULT_RADII: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 50.0];
/// Default angular grid.
pub const DEFAULT_ANGLES: usize = 720;

const ANGLE_MIN_STEP: f64 = 1e-13;
const GRID_CANDIDATES: usize = 8;

fn angle_compass(h: &impl Fn(f64) -> f64, start: (f64, f64), step: f64) -> (f64, f64) {
    let mut best = start;
    let mut s = step;
    while s >= ANGLE_MIN_STEP {
        let mut moved = false;
        for phi in [best.1 + s, best.1 - s] {
            let v = h(phi);
            if v.is_finite() && v > best.0 {
                best = (v, phi);
                moved = true;
            }
        }
        if !moved {
            s *= 0.5;
        }
    }
    best
}

fn bisect_crossing(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let glo = g(lo);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == (glo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < ANGLE_MIN_STEP {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Maximum FS speed over the circle `|theta| = radius`, with its angle.
///
/// Besides the best points of an equispaced angular grid, every angle where two
/// coordinates exchange dominance (a sign change of `ln|X_i| - ln|X_j|` between grid
/// neighbours) is located by bisection and used as a starting point. Speed peaks of
/// exponential curves sit at such exchanges and can be far narrower than the grid.
pub fn circle_max(spec: &CurveSpec, radius: f64, angles: usize) -> (f64, f64) {
    let angles = angles.max(8);
    let spacing = TAU / angles as f64;
    let point = |phi: f64| C64::from_polar(radius, phi);
    let h = |phi: f64| curve_speed(spec, point(phi));
    let terms = spec.terms();
    let logs = |phi: f64| terms.iter().map(|t| t.log_abs(point(phi))).collect::<Vec<_>>();

    let grid: Vec<(f64, f64)> = (0..angles).map(|k| (h(k as f64 * spacing), k as f64 * spacing)).collect();
    let mut starts: Vec<(f64, f64)> = {
        let mut g = grid.clone();
        g.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
        g.truncate(GRID_CANDIDATES);
        g
    };
    let grid_logs: Vec<Vec<f64>> = (0..=angles).map(|k| logs(k as f64 * spacing)).collect();
    for k in 0..angles {
        let (a, b) = (&grid_logs[k], &grid_logs[k + 1]);
        for i in 0..3 {
            for j in i + 1..3 {
                let (da, db) = (a[i] - a[j], b[i] - b[j]);
                if da.is_finite() && db.is_finite() && (da > 0.0) != (db > 0.0) {
                    let g = |phi: f64| {
                        let l = logs(phi);
                        l[i] - l[j]
                    };
                    let phi = bisect_crossing(&g, k as f64 * spacing, (k + 1) as f64 * spacing);
                    starts.push((h(phi), phi));
                }
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    for s in starts {
        let r = angle_compass(&h, s, 0.5 * spacing);
        if r.0 > best.0 || (r.0 == best.0 && r.1.rem_euclid(TAU) < best.1) {
            best = (r.0, r.1.rem_euclid(TAU));
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub radius: f64,
    pub max_speed: f64,
    pub angle: f64,
}

/// Sampled maximum speed over each circle `|theta| = r` for the given radii.
pub fn sup_speed_profile(spec: &CurveSpec, radii: &[f64], angles: usize) -> Result<Vec<ProfilePoint>> {
    spec.validate()?;
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(HenonError::Usage("radii must be positive and increasing".into()));
    }
    Ok(radii
        .par_iter()
        .map(|&r| {
            let (max_speed, angle) = circle_max(spec, r, angles);
            ProfilePoint { radius: r, max_speed, angle }
        })
        .collect())
}

/// Speed along the ray `theta = b e^{i angle}`.
pub fn ray_speed(spec: &CurveSpec, angle: f64, b: f64) -> f64 {
    curve_speed(spec, C64::from_polar(b, angle))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Brody,
    NonBrody,
}

/// Radius after which a bounded profile may not grow by more than [`PLATEAU_SLACK`].
pub const PLATEAU_FROM: f64 = 20.0;
pub const PLATEAU_SLACK: f64 = 0.01;

/// Bounded (Brody) when no radius beyond [`PLATEAU_FROM`] exceeds the value at the
/// last radius up to it by more than one percent.
pub fn verdict(profile: &[ProfilePoint]) -> Verdict {
    let base = profile.iter().filter(|p| p.radius <= PLATEAU_FROM).last().or(profile.first());
    let Some(base) = base else { return Verdict::Brody };
    let grows = profile.iter().filter(|p| p.radius > base.radius).any(|p| p.max_speed > (1.0 + PLATEAU_SLACK) * base.max_speed);
    if grows {
        Verdict::NonBrody
    } else {
        Verdict::Brody
    }
}

/// Largest relative discrepancy `|s(psi o A, z) - |alpha| s(psi, alpha z + beta)| / (1 + |alpha| s(psi, alpha z + beta))`
/// over `samples` spiral points of the disc of radius 5, with `A(z) = alpha z + beta`.
pub fn affine_reparam_check(spec: &CurveSpec, alpha: C64, beta: C64, samples: usize) -> Result<f64> {
    if alpha.norm() == 0.0 {
        return Err(HenonError::Usage("alpha must be nonzero".into()));
    }
    spec.validate()?;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut worst = 0.0f64;
    for k in 0..samples {
        let z = C64::from_polar(5.0 * ((k as f64 + 0.5) / samples as f64).sqrt(), golden * k as f64);
        let w = alpha * z + beta;
        let (x, dx) = spec.lift(w);
        let composed = fs_speed(&sample_from_lift(&x, &dx.map(|d| d * alpha)));
        let direct = alpha.norm() * fs_speed(&sample_from_lift(&x, &dx));
        worst = worst.max((composed - direct).abs() / (1.0 + direct));
    }
    Ok(worst)
}

/// Curves shown by the `gallery` command.
pub fn default_gallery() -> Vec<CurveSpec> {
    vec![
        CurveSpec::PolyGraph { p: vec![c(0.0), c(0.0), c(1.0)] },
        CurveSpec::PolyGraph { p: vec![c(1.0), c(-2.0), c(0.0), c(1.0)] },
        CurveSpec::ExpPair { p: vec![c(1.0)], q: vec![c(1.0)], alpha: C64::new(0.0, 1.0) },
        CurveSpec::ExpPair { p: vec![c(1.0), c(1.0)], q: vec![c(2.0)], alpha: c(-1.0) },
        CurveSpec::ExpQuadratic,
        CurveSpec::GraphExpPower { n: 1 },
        CurveSpec::GraphExpPower { n: 2 },
        CurveSpec::GraphExpPower { n: 3 },
        CurveSpec::GraphExpPower { n: 4 },
    ]
}

/// Profile CSV `family,radius,max_speed`.
pub fn write_profiles_csv<W: Write>(profiles: &[(CurveSpec, Vec<ProfilePoint>)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "family,radius,max_speed")?;
    for (spec, prof) in profiles {
        for p in prof {
            writeln!(out, "{},{:.16e},{:.16e}", spec.label(), p.radius, p.max_speed)?;
        }
    }
    Ok(())
}
