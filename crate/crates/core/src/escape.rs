//! Escape-time classification, the escape-rate Green function and sampling of
//! `J+` on complex line sections.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HenonError, Result};
use crate::henon::{AffinePoint, HenonMap};
use crate::scalar::{cabs, MpFloat, Real, C64};

/// Escape radius of the filtration `V+ = {|z| >= max(R, |w|)}`, `V- = {|w| >= max(R, |z|)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FiltrationRadius {
    pub r: f64,
}

fn sufficient_margin(coef_abs: &[f64], r: f64, linear: f64) -> f64 {
    // r^d - sum_{k<d} |c_k| r^k - linear * r
    let d = coef_abs.len() - 1;
    let mut lower = 0.0;
    let mut rk = 1.0;
    for c in &coef_abs[..d] {
        lower += c * rk;
        rk *= r;
    }
    rk - lower - linear * r
}

fn smallest_root(coef_abs: &[f64], linear: f64) -> f64 {
    // the margin polynomial has a single sign change, so it is negative then positive
    let mut hi = 1.0;
    while sufficient_margin(coef_abs, hi, linear) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    if sufficient_margin(coef_abs, lo, linear) >= 0.0 {
        return lo.max(1.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if sufficient_margin(coef_abs, mid, linear) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Smallest radius certified by the triangle-inequality bound.
///
/// Forward: `|p(z) - a w| >= 2|z|` on `V+`. Backward: `|p(w) - z| >= 2|a||w|` on `V-`,
/// so the inverse map doubles `|w|` there. The returned radius satisfies both.
pub fn filtration_radius(map: &HenonMap<f64>) -> FiltrationRadius {
    let coef_abs: Vec<f64> = map.p().coeffs().iter().map(|c| c.norm()).collect();
    let a = map.a().norm();
    let fwd = smallest_root(&coef_abs, a + 2.0);
    let bwd = smallest_root(&coef_abs, 2.0 * a + 1.0);
    let r = fwd.max(bwd);
    debug_assert!(ring_check(map, r, 64).is_ok());
    FiltrationRadius { r }
}

/// Verifies `|p(z) - a w| >= 2|z|` on `|z| = r`, `|w| <= r` at `m x m` samples.
pub fn ring_check(map: &HenonMap<f64>, r: f64, m: usize) -> std::result::Result<(), (C64, C64)> {
    for i in 0..m {
        let z = C64::from_polar(r, std::f64::consts::TAU * i as f64 / m as f64);
        for j in 0..m {
            let ang = std::f64::consts::TAU * (j as f64 * 0.618_033_988_749_895).fract();
            let w = C64::from_polar(r * ((j as f64 + 0.5) / m as f64).sqrt(), ang);
            let lhs = (map.p().eval(&z) - map.a() * w).norm();
            if lhs < 2.0 * r * (1.0 - 1e-12) {
                return Err((z, w));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Escaping,
    Bounded,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeRecord {
    pub direction: Direction,
    pub classification: Classification,
    pub n_escape: Option<usize>,
    pub green_plus: Option<f64>,
}

impl EscapeRecord {
    /// `escaping-forward`, `bounded-backward`, `undecided`, ...
    pub fn label(&self) -> String {
        let dir = match self.direction {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        };
        match self.classification {
            Classification::Escaping => format!("escaping-{dir}"),
            Classification::Bounded => format!("bounded-{dir}"),
            Classification::Undecided => "undecided".to_string(),
        }
    }
}

/// Distance below which a revisit counts as numerical recurrence.
pub const RECURRENCE_TOL: f64 = 1e-6;

fn in_escape_region<T: Real>(x: &AffinePoint<T>, r: f64, dir: Direction) -> bool {
    let (lead, other) = match dir {
        Direction::Forward => (&x.z, &x.w),
        Direction::Backward => (&x.w, &x.z),
    };
    let l = cabs(lead).to_f64();
    l >= r && l >= cabs(other).to_f64()
}

fn in_bidisc<T: Real>(x: &AffinePoint<T>, r: f64) -> bool {
    cabs(&x.z).to_f64() <= r && cabs(&x.w).to_f64() <= r
}

fn classify<T: Real>(map: &HenonMap<T>, x: &AffinePoint<T>, n_max: usize, dir: Direction, r: f64) -> EscapeRecord {
    let mut orbit: Vec<AffinePoint<T>> = Vec::new();
    let mut y = x.clone();
    let record = |classification, n_escape, green_plus| EscapeRecord { direction: dir, classification, n_escape, green_plus };
    for n in 0..=n_max {
        if !y.is_finite() {
            break;
        }
        if in_escape_region(&y, r, dir) {
            return record(Classification::Escaping, Some(n), None);
        }
        if in_bidisc(&y, r) && orbit.iter().any(|q| q.dist(&y) < RECURRENCE_TOL) {
            return record(Classification::Bounded, None, Some(0.0));
        }
        orbit.push(y.clone());
        if n < n_max {
            y = match dir {
                Direction::Forward => map.forward_unchecked(&y),
                Direction::Backward => map.inverse_unchecked(&y),
            };
        }
    }
    record(Classification::Undecided, None, None)
}

/// Forward escape-time classification.
///
/// Bounded-forward is reported at the first numerical recurrence inside the filtration
/// bidisc, provided the orbit has not entered `V+` before. Binary64 orbits near saddles
/// eventually drift away through rounding, so later behaviour is not consulted.
pub fn classify_forward(map: &HenonMap<f64>, x: &AffinePoint<f64>, n_max: usize) -> EscapeRecord {
    classify(map, x, n_max, Direction::Forward, filtration_radius(map).r)
}

pub fn classify_backward(map: &HenonMap<f64>, x: &AffinePoint<f64>, n_max: usize) -> EscapeRecord {
    classify(map, x, n_max, Direction::Backward, filtration_radius(map).r)
}

/// Forward classification in an arbitrary scalar type, against a precomputed radius.
pub fn classify_forward_in<T: Real>(map: &HenonMap<T>, x: &AffinePoint<T>, n_max: usize, radius: FiltrationRadius) -> EscapeRecord {
    classify(map, x, n_max, Direction::Forward, radius.r)
}

/// Mantissa width that keeps forward iteration from a point of norm `norm` accurate
/// to well below the recurrence tolerance: the first steps cancel `log2 |x|` bits and
/// the saddle then amplifies the remainder.
pub fn forward_bits_for_norm(norm: f64) -> u32 {
    let lg = (1.0 + norm.max(0.0)).log2();
    (96.0 + 2.0 * lg).ceil() as u32
}

pub const GREEN_TOL: f64 = 1e-9;
pub const GREEN_N_MAX: usize = 200;
/// Norm above which the escape-rate iteration continues in software floating point.
pub const GREEN_MP_SWITCH: f64 = 1e100;
const GREEN_MP_BITS: u32 = 96;

enum GreenStep {
    Done(f64),
    Exhausted(f64),
    Switch { n: usize, prev: Option<f64>, y: AffinePoint<f64> },
}

fn green_loop<T: Real>(
    map: &HenonMap<T>,
    mut y: AffinePoint<T>,
    mut n: usize,
    mut prev: Option<f64>,
    n_escape: usize,
    n_max: usize,
    tol: f64,
    switch_at: Option<f64>,
) -> GreenStep {
    let ln_d = (map.degree() as f64).ln();
    loop {
        let ln_norm = (y.z.norm_sqr() + y.w.norm_sqr()).ln_abs() * 0.5;
        if let Some(s) = switch_at {
            if ln_norm > s.ln() {
                return GreenStep::Switch { n, prev, y: y.to_c64() };
            }
        }
        let est = ln_norm.max(0.0) * (-(n as f64) * ln_d).exp();
        if n > n_escape {
            if let Some(p) = prev {
                if (est - p).abs() < tol {
                    return GreenStep::Done(est);
                }
            }
        }
        if n >= n_max {
            return GreenStep::Exhausted(est);
        }
        prev = Some(est);
        y = map.forward_unchecked(&y);
        n += 1;
    }
}

fn finish_green(rec: &EscapeRecord, step: GreenStep) -> Result<f64> {
    match step {
        GreenStep::Done(v) if rec.classification == Classification::Escaping => Ok(v),
        GreenStep::Done(v) | GreenStep::Exhausted(v) => Err(HenonError::GreenUndecided { estimate: v }),
        GreenStep::Switch { .. } => unreachable!("no switch threshold in software precision"),
    }
}

fn escape_index(rec: &EscapeRecord, n_max: usize) -> Option<usize> {
    match rec.classification {
        Classification::Bounded => None,
        Classification::Escaping => Some(rec.n_escape.unwrap_or(0)),
        Classification::Undecided => Some(n_max),
    }
}

/// Escape-rate Green function `g+ = lim d^-n log+ |f^n x|`.
///
/// Iteration moves to software floating point once the orbit norm passes
/// [`GREEN_MP_SWITCH`], so the escape rate is never cut off by overflow.
pub fn green_plus(map: &HenonMap<f64>, x: &AffinePoint<f64>, n_max: usize, tol: f64) -> Result<f64> {
    let rec = classify_forward(map, x, n_max);
    let Some(n_escape) = escape_index(&rec, n_max) else { return Ok(0.0) };
    let step = green_loop(map, x.clone(), 0, None, n_escape, n_max, tol, Some(GREEN_MP_SWITCH));
    let step = match step {
        GreenStep::Switch { n, prev, y } => MpFloat::with_ambient_bits(GREEN_MP_BITS, || {
            green_loop(&map.lift::<MpFloat>(), y.lift(), n, prev, n_escape, n_max, tol, None)
        }),
        s => s,
    };
    finish_green(&rec, step)
}

/// [`green_plus`] carried out entirely in a software-precision scalar type.
pub fn green_plus_in<T: Real>(map: &HenonMap<T>, x: &AffinePoint<T>, n_max: usize, tol: f64, radius: FiltrationRadius) -> Result<f64> {
    let rec = classify_forward_in(map, x, n_max, radius);
    let Some(n_escape) = escape_index(&rec, n_max) else { return Ok(0.0) };
    finish_green(&rec, green_loop(map, x.clone(), 0, None, n_escape, n_max, tol, None))
}

/// Complex line in `C^2` parametrized by `u`; the conjugate diagonal is only real-linear.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Section {
    /// `(u, w0)`.
    Horizontal { w: C64 },
    /// `(z0, u)`.
    Vertical { z: C64 },
    /// `(u, u)`.
    Diagonal,
    /// `(u, conj u)`.
    ConjDiagonal,
    /// `base + u * dir`.
    Line { base: [C64; 2], dir: [C64; 2] },
}

impl Section {
    pub fn point(&self, u: C64) -> AffinePoint<f64> {
        match *self {
            Section::Horizontal { w } => AffinePoint::new(u, w),
            Section::Vertical { z } => AffinePoint::new(z, u),
            Section::Diagonal => AffinePoint::new(u, u),
            Section::ConjDiagonal => AffinePoint::new(u, u.conj()),
            Section::Line { base, dir } => AffinePoint::new(base[0] + u * dir[0], base[1] + u * dir[1]),
        }
    }
}

/// Axis-aligned rectangle in the section parameter plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Window {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Window {
    pub fn centered(center: C64, half_width: f64) -> Self {
        Window {
            re_min: center.re - half_width,
            re_max: center.re + half_width,
            im_min: center.im - half_width,
            im_max: center.im + half_width,
        }
    }

    /// Parameter at column `i`, row `j`; row 0 is the top edge (`im_max`).
    pub fn param(&self, i: usize, j: usize, nx: usize, ny: usize) -> C64 {
        let fx = if nx > 1 { i as f64 / (nx - 1) as f64 } else { 0.5 };
        let fy = if ny > 1 { j as f64 / (ny - 1) as f64 } else { 0.5 };
        C64::new(
            self.re_min + fx * (self.re_max - self.re_min),
            self.im_max - fy * (self.im_max - self.im_min),
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridCell {
    pub param: C64,
    pub record: EscapeRecord,
}

/// Row-major classification grid with top-left origin.
#[derive(Clone, Debug, Serialize)]
pub struct EscapeGrid {
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<GridCell>,
}

/// Forward classification of every grid point, with `g+` filled in for escaping points.
pub fn classify_grid(
    map: &HenonMap<f64>,
    section: &Section,
    window: &Window,
    grid: (usize, usize),
    n_max: usize,
) -> Result<EscapeGrid> {
    let (nx, ny) = grid;
    if nx < 2 || ny < 2 {
        return Err(HenonError::Usage("grid must be at least 2x2".into()));
    }
    if n_max == 0 {
        return Err(HenonError::Usage("n_max must be at least 1".into()));
    }
    let r = filtration_radius(map).r;
    let cells = (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % nx, k / nx);
            let param = window.param(i, j, nx, ny);
            let x = section.point(param);
            let mut record = classify(map, &x, n_max, Direction::Forward, r);
            if record.classification == Classification::Escaping {
                record.green_plus = green_plus(map, &x, GREEN_N_MAX.max(n_max), GREEN_TOL).ok();
            }
            GridCell { param, record }
        })
        .collect();
    Ok(EscapeGrid { nx, ny, cells })
}

impl EscapeGrid {
    pub fn cell(&self, i: usize, j: usize) -> &GridCell {
        &self.cells[j * self.nx + i]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "re,im,class,n_escape,g_plus")?;
        for c in &self.cells {
            let n = c.record.n_escape.map(|n| n.to_string()).unwrap_or_default();
            let g = c.record.green_plus.map(|g| format!("{g:.16e}")).unwrap_or_default();
            writeln!(out, "{:.16e},{:.16e},{},{},{}", c.param.re, c.param.im, c.record.label(), n, g)?;
        }
        Ok(())
    }

    /// Binary graymap: fast escape is bright, slow escape darker, non-escaping black.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.nx, self.ny)?;
        let max_n = self.cells.iter().filter_map(|c| c.record.n_escape).max().unwrap_or(0).max(1);
        let bytes: Vec<u8> = self
            .cells
            .iter()
            .map(|c| match c.record.n_escape {
                Some(n) => (255.0 - 254.0 * (n.min(max_n) as f64 / max_n as f64)).round() as u8,
                None => 0,
            })
            .collect();
        out.write_all(&bytes)
    }
}

/// Grid points whose 4-neighbourhood mixes escaping and non-escaping classifications.
///
/// On a hyperbolic horseshoe `K+` has empty interior, so non-escaping grid points only
/// occur where the grid hits `K+` to recurrence accuracy; undecided points count as
/// non-escaping.
pub fn sample_jplus(
    map: &HenonMap<f64>,
    section: &Section,
    window: &Window,
    grid: (usize, usize),
    n_max: usize,
) -> Result<Vec<AffinePoint<f64>>> {
    let g = classify_grid(map, section, window, grid, n_max)?;
    Ok(boundary_cells(&g).into_iter().map(|(i, j)| section.point(g.cell(i, j).param)).collect())
}

pub fn boundary_cells(g: &EscapeGrid) -> Vec<(usize, usize)> {
    let esc = |i: usize, j: usize| g.cell(i, j).record.classification == Classification::Escaping;
    let mut out = Vec::new();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let mut nb = vec![(i, j)];
            if i > 0 {
                nb.push((i - 1, j));
            }
            if i + 1 < g.nx {
                nb.push((i + 1, j));
            }
            if j > 0 {
                nb.push((i, j - 1));
            }
            if j + 1 < g.ny {
                nb.push((i, j + 1));
            }
            let any_esc = nb.iter().any(|&(a, b)| esc(a, b));
            let any_non = nb.iter().any(|&(a, b)| !esc(a, b));
            if any_esc && any_non {
                out.push((i, j));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::henon::ProjectivePoint;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn z2() -> f64 {
        (1.5 - 26.25f64.sqrt()) / 2.0
    }

    /// Dense ring oracle: the defining inequality checked directly.
    fn inequality_holds(map: &HenonMap<f64>, r: f64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..10_000).all(|_| {
            let z = C64::from_polar(r, rng.random::<f64>() * std::f64::consts::TAU);
            let w = C64::from_polar(r * rng.random::<f64>(), rng.random::<f64>() * std::f64::consts::TAU);
            (map.p().eval(&z) - map.a() * w).norm() >= 2.0 * r * (1.0 - 1e-12)
        })
    }

    #[test]
    fn radius_examples() {
        let sq = HenonMap::quadratic(c(0.0, 0.0), c(1.0, 0.0)).unwrap();
        let r = filtration_radius(&sq).r;
        assert!(r <= 4.0 && inequality_holds(&sq, r));
        assert!((r - 3.0).abs() < 1e-9);
        let f = HenonMap::default_test_map();
        let r = filtration_radius(&f).r;
        assert!(r <= 8.0 && inequality_holds(&f, r));
        assert!((r - 4.0).abs() < 1e-9);
        assert!(ring_check(&f, r, 100).is_ok());
    }

    #[test]
    fn classify_examples() {
        let f = HenonMap::default_test_map();
        let rec = classify_forward(&f, &AffinePoint::new(c(1e6, 0.0), c(0.0, 0.0)), 200);
        assert_eq!(rec.classification, Classification::Escaping);
        assert!(rec.n_escape.unwrap() <= 1);
        assert_eq!(rec.label(), "escaping-forward");

        let fixed = AffinePoint::new(c(z2(), 0.0), c(z2(), 0.0));
        let rec = classify_forward(&f, &fixed, 200);
        assert_eq!(rec.classification, Classification::Bounded);
        assert_eq!(rec.green_plus, Some(0.0));
        assert_eq!(classify_backward(&f, &fixed, 200).classification, Classification::Bounded);

        // oracle: f(0, 1e6) = (-6 - 5e5, 0) already lies in V+
        let x = AffinePoint::new(c(0.0, 0.0), c(1e6, 0.0));
        let y1 = f.eval_forward(&x).unwrap();
        assert!(y1.z.norm() >= 4.0 && y1.z.norm() >= y1.w.norm());
        let rec = classify_forward(&f, &x, 200);
        assert_eq!(rec.classification, Classification::Escaping);
        assert!(rec.n_escape.unwrap() <= 2);
    }

    #[test]
    fn backward_escape_mirror() {
        let f = HenonMap::default_test_map();
        let rec = classify_backward(&f, &AffinePoint::new(c(0.0, 0.0), c(1e6, 0.0)), 200);
        assert_eq!(rec.classification, Classification::Escaping);
        assert_eq!(rec.label(), "escaping-backward");
    }

    #[test]
    fn green_examples() {
        let f = HenonMap::default_test_map();
        let fixed = AffinePoint::new(c(z2(), 0.0), c(z2(), 0.0));
        assert_eq!(green_plus(&f, &fixed, 200, 1e-9).unwrap(), 0.0);

        // independent oracle: iterate z -> z^2 - 6 - 0.5 w in log-polar software precision
        let x = AffinePoint::new(c(1e6, 0.0), c(0.0, 0.0));
        let g = green_plus(&f, &x, 200, 1e-9).unwrap();
        let oracle = MpFloat::with_ambient_bits(400, || {
            let m = f.lift::<MpFloat>();
            let mut y = x.lift::<MpFloat>();
            for _ in 0..40 {
                y = m.forward_unchecked(&y);
            }
            y.z.norm_sqr().ln_abs() * 0.5 / 2f64.powi(40)
        });
        assert!(g > 0.0);
        assert!((g - oracle).abs() < 1e-8, "{g} vs {oracle}");
        assert!((g - 1e6f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn green_functional_equation() {
        let f = HenonMap::default_test_map();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 100 {
            let x = AffinePoint::new(
                c(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
                c(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
            );
            let Ok(gx) = green_plus(&f, &x, 200, 1e-9) else { continue };
            if gx == 0.0 {
                continue;
            }
            let gf = green_plus(&f, &f.eval_forward(&x).unwrap(), 200, 1e-9).unwrap();
            assert!((gf - 2.0 * gx).abs() <= 1e-8, "{gf} {gx}");
            checked += 1;
        }
    }

    #[test]
    fn green_undecided_on_short_budget() {
        let f = HenonMap::default_test_map();
        // a point whose orbit neither recurs nor escapes in 3 steps
        let x = AffinePoint::new(c(0.1, 0.2), c(0.3, -0.1));
        let rec = classify_forward(&f, &x, 3);
        if rec.classification == Classification::Undecided {
            assert!(matches!(green_plus(&f, &x, 3, 1e-9), Err(HenonError::GreenUndecided { .. })));
        }
    }

    #[test]
    fn escaping_compact_set_tends_to_i_minus() {
        let f = HenonMap::default_test_map();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = AffinePoint::new(
                c(rng.random_range(5.0..9.0), rng.random_range(-1.0..1.0)),
                c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            );
            let mut q = ProjectivePoint::from_affine(&x);
            let mut done = false;
            for _ in 0..20 {
                q = f.eval_forward_proj(&q).unwrap();
                if q.chordal_distance(&ProjectivePoint::i_minus()) <= 1e-6 {
                    done = true;
                    break;
                }
            }
            assert!(done);
        }
    }

    #[test]
    fn boundary_sampling() {
        let f = HenonMap::default_test_map();
        let far = Window { re_min: 100.0, re_max: 101.0, im_min: 0.0, im_max: 1.0 };
        assert!(sample_jplus(&f, &Section::Diagonal, &far, (8, 8), 50).unwrap().is_empty());

        // the grid contains the fixed point (z2, z2) at its center
        let win = Window::centered(c(z2(), 0.0), 0.5);
        let pts = sample_jplus(&f, &Section::ConjDiagonal, &win, (9, 9), 200).unwrap();
        assert!(!pts.is_empty());
        assert_eq!(classify_forward(&f, &Section::ConjDiagonal.point(c(z2(), 0.0)), 200).classification, Classification::Bounded);
        assert_eq!(classify_forward(&f, &Section::ConjDiagonal.point(c(z2() + 0.5, 0.5)), 200).classification, Classification::Escaping);
        assert!(matches!(classify_grid(&f, &Section::Diagonal, &win, (1, 5), 10), Err(HenonError::Usage(_))));
    }

    #[test]
    fn refinement_keeps_escaped_window_clean() {
        let f = HenonMap::default_test_map();
        let win = Window { re_min: 20.0, re_max: 30.0, im_min: -5.0, im_max: 5.0 };
        for n in [2, 3, 5, 9, 17] {
            assert!(sample_jplus(&f, &Section::Horizontal { w: c(0.0, 0.0) }, &win, (n, n), 20).unwrap().is_empty());
        }
    }

    #[test]
    fn exports() {
        let f = HenonMap::default_test_map();
        let win = Window::centered(c(0.0, 0.0), 3.0);
        let g = classify_grid(&f, &Section::Horizontal { w: c(0.0, 0.0) }, &win, (4, 3), 30).unwrap();
        let mut csv = Vec::new();
        g.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 13);
        assert!(text.starts_with("re,im,class,n_escape,g_plus\n"));
        let mut pgm = Vec::new();
        g.write_pgm(&mut pgm).unwrap();
        assert!(pgm.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(pgm.len(), b"P5\n4 3\n255\n".len() + 12);
        // top-left origin: first cell has the largest imaginary part
        assert_eq!(g.cells[0].param, c(-3.0, 3.0));
    }

    proptest! {
        #[test]
        fn escaping_is_stable_in_n_max(zr in -6.0..6.0f64, zi in -6.0..6.0f64, wr in -6.0..6.0f64, n in 1usize..60) {
            let f = HenonMap::default_test_map();
            let x = AffinePoint::new(c(zr, zi), c(wr, 0.0));
            let short = classify_forward(&f, &x, n);
            let long = classify_forward(&f, &x, n + 50);
            if short.classification != Classification::Undecided {
                prop_assert_eq!(short, long);
            }
        }

        #[test]
        fn record_invariants(zr in -6.0..6.0f64, zi in -6.0..6.0f64, wr in -6.0..6.0f64) {
            let f = HenonMap::default_test_map();
            let x = AffinePoint::new(c(zr, zi), c(wr, 0.0));
            let rec = classify_forward(&f, &x, 100);
            prop_assert_eq!(rec.classification == Classification::Escaping, rec.n_escape.is_some());
            if rec.classification == Classification::Escaping {
                prop_assert!(green_plus(&f, &x, 200, 1e-9).unwrap() > 0.0);
            }
        }
    }
}
