//! Acceptance suite shared by the `selftest` command and the `acceptance` test target.
//!
//! Each criterion returns a [`CriterionResult`] and writes a deterministic CSV into the
//! output directory. Tolerances and runtime limits are the constants below.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::escape::{classify_forward, green_plus, Classification, GREEN_N_MAX, GREEN_TOL};
use crate::fs::{fs_speed, TangentSample};
use crate::gallery::{affine_reparam_check, default_gallery, sup_speed_profile, verdict, write_profiles_csv, CurveSpec, Verdict};
use crate::henon::{chordal, AffinePoint, HenonMap, ProjectivePoint};
use crate::manifold::{StableManifoldChart, DEFAULT_ORDER};
use crate::output::{emit, Emitted};
use crate::pipeline::{run_pipeline, write_iterates_csv, PipelineConfig, MOBIUS_TOL};
use crate::saddle::{default_seeds, find_periodic, write_orbits_csv, SaddleOrbit};
use crate::scalar::C64;

pub const ROUNDTRIP_TOL: f64 = 1e-12;
pub const FIXED_POINT_TOL: f64 = 1e-10;
pub const DET_REL_TOL: f64 = 1e-8;
pub const MULTIPLIER_TOL: f64 = 1e-4;
pub const LAMBDA_S_REF: f64 = 0.07637;
pub const LAMBDA_U_REF: f64 = 6.5471;
pub const CONJUGACY_TOL: f64 = 1e-8;
pub const GREEN_EQ_TOL: f64 = 1e-5;
pub const SPEED_AT_0_TOL: f64 = 1e-9;
pub const SPEED_BOUND: f64 = 2.05;
pub const GREEN_LEAF_TOL: f64 = 1e-6;
pub const SLOPE_REL_TOL: f64 = 0.25;
pub const MIN_R_N: f64 = 8.0;
pub const GALLERY_THRESHOLD: f64 = 1e3;
pub const GALLERY_THRESHOLD_RADIUS: f64 = 30.0;
pub const AFFINE_REPARAM_TOL: f64 = 1e-10;
pub const FD_TOL: f64 = 1e-5;
pub const OVERLAP_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub seed: u64,
    pub n_max: usize,
    pub grid: usize,
    pub samples: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { seed: 1, n_max: 25, grid: 32, samples: 1000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
    pub runtime_limit: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        let limit = if self.runtime_limit.is_finite() { format!("limit {} s", self.runtime_limit) } else { "no limit".to_string() };
        format!(
            "{} {} {}: {} ({:.2} s, {limit})",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn rng(cfg: &SuiteConfig, id: u8) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(1000).wrapping_add(id as u64))
}

fn timed(
    id: u8,
    name: &'static str,
    runtime_limit: f64,
    body: impl FnOnce() -> Result<(bool, String, Vec<Emitted>)>,
) -> (CriterionResult, Vec<Emitted>) {
    let t = Instant::now();
    let (pass, detail, files) = match body() {
        Ok(v) => v,
        Err(e) => (false, format!("error {}: {e}", e.code()), Vec::new()),
    };
    let seconds = t.elapsed().as_secs_f64();
    let pass = pass && seconds <= runtime_limit;
    (CriterionResult { id, name, pass, detail, seconds, runtime_limit }, files)
}

fn complex_box(r: &mut ChaCha8Rng, half: f64) -> C64 {
    C64::new(r.random_range(-half..half), r.random_range(-half..half))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Saddle fixed point `z_1 ~ 3.3117` of the default map.
pub fn default_saddle() -> Result<(HenonMap<f64>, SaddleOrbit)> {
    let f = HenonMap::default_test_map();
    let orbits = find_periodic(&f, 1, &default_seeds(&f), 1e-13)?;
    let o = orbits
        .into_iter()
        .max_by(|a, b| a.points[0].z.re.total_cmp(&b.points[0].z.re))
        .expect("two fixed points");
    Ok((f, o))
}

pub fn criterion_1(cfg: &SuiteConfig, out: &Path) -> (CriterionResult, Vec<Emitted>) {
    timed(1, "map-identities", 1.0, || {
        let f = HenonMap::default_test_map();
        let mut r = rng(cfg, 1);
        let mut rows = Vec::new();
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let x = AffinePoint::new(complex_box(&mut r, 4.0), complex_box(&mut r, 4.0));
            let back = f.eval_inverse(&f.eval_forward(&x)?)?;
            let e = back.dist(&x) / (1.0 + x.norm());
            worst = worst.max(e);
            rows.push((x, e));
        }
        let mut exact = 0;
        for _ in 0..1000 {
            let (z, w) = (complex_box(&mut r, 10.0), complex_box(&mut r, 10.0));
            let p = ProjectivePoint::from_homogeneous([z, w, C64::new(0.0, 0.0)]).expect("nonzero");
            if !p.is_i_plus() && f.eval_forward_proj(&p)? == ProjectivePoint::i_minus() {
                exact += 1;
            }
        }
        let file = emit(&out.join("map_identities.csv"), |b| {
            use std::io::Write;
            writeln!(b, "re_z,im_z,re_w,im_w,roundtrip_error")?;
            for (x, e) in &rows {
                writeln!(b, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", x.z.re, x.z.im, x.w.re, x.w.im, e)?;
            }
            Ok(())
        })?;
        let pass = worst <= ROUNDTRIP_TOL && exact == 1000;
        Ok((pass, format!("max roundtrip error {worst:.3e} (tol {ROUNDTRIP_TOL:e}); {exact}/1000 points at infinity sent exactly to I-"), vec![file]))
    })
}

pub fn criterion_2(_cfg: &SuiteConfig, out: &Path) -> (CriterionResult, Vec<Emitted>) {
    timed(2, "fixed-points-and-multipliers", 1.0, || {
        let f = HenonMap::default_test_map();
        let orbits = find_periodic(&f, 1, &default_seeds(&f), 1e-13)?;
        // z = p(z) - a z, i.e. z^2 - (1 + a) z - 6 = 0
        let (b, c) = (-1.5f64, -6.0f64);
        let disc = (b * b - 4.0 * c).sqrt();
        let mut oracle = [(-b - disc) / 2.0, (-b + disc) / 2.0];
        oracle.sort_by(f64::total_cmp);
        let mut found: Vec<f64> = orbits.iter().map(|o| o.points[0].z.re).collect();
        found.sort_by(f64::total_cmp);
        let fp_err = if found.len() == 2 {
            orbits
                .iter()
                .map(|o| oracle.iter().map(|z| (o.points[0].z - C64::new(*z, 0.0)).norm()).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        let det_err = orbits.iter().map(|o| ((o.lambda_s * o.lambda_u - 0.5) / 0.5).norm()).fold(0.0, f64::max);
        let (_, s) = default_saddle()?;
        let (ls, lu) = (s.lambda_s.norm(), s.lambda_u.norm());
        let mult_ok = (ls - LAMBDA_S_REF).abs() <= MULTIPLIER_TOL && (lu - LAMBDA_U_REF).abs() <= MULTIPLIER_TOL;
        let file = emit(&out.join("periodic.csv"), |b| write_orbits_csv(&orbits, b))?;
        let pass = fp_err <= FIXED_POINT_TOL && det_err <= DET_REL_TOL && mult_ok;
        Ok((
            pass,
            format!(
                "{} fixed points, max error vs quadratic formula {fp_err:.3e}; max |lambda_s lambda_u - a|/|a| {det_err:.3e}; |lambda_s| = {ls:.6}, |lambda_u| = {lu:.6}",
                orbits.len()
            ),
            vec![file],
        ))
    })
}

pub fn criterion_3(cfg: &SuiteConfig, out: &Path) -> (CriterionResult, Vec<Emitted>) {
    timed(3, "stable-manifold-conjugacy", 10.0, || {
        let (f, o) = default_saddle()?;
        let chart = StableManifoldChart::build(&f, &o, DEFAULT_ORDER, C64::new(1.0, 0.0))?;
        let mut r = rng(cfg, 3);
        let mut rows = Vec::new();
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let modulus = 10f64.powf(r.random_range(-2.0..3.0));
            let zeta = C64::from_polar(modulus, r.random_range(0.0..std::f64::consts::TAU));
            let a = chart.eval_global(&zeta, false)?;
            let b = chart.eval_global(&(zeta * o.lambda_s), false)?;
            let (Some(xa), Some(xb)) = (a.affine(), b.affine()) else {
                return Ok((false, format!("psi({zeta}) left the affine chart"), vec![]));
            };
            let image = f.iterate(xa, o.period as i64)?;
            let ratio = image.dist(xb) / (1.0 + xa.norm());
            worst = worst.max(ratio);
            rows.push((zeta, ratio));
        }
        let file = emit(&out.join("conjugacy.csv"), |b| {
            use std::io::Write;
            writeln!(b, "re_zeta,im_zeta,relative_defect")?;
            for (z, e) in &rows {
                writeln!(b, "{:.16e},{:.16e},{:.16e}", z.re, z.im, e)?;
            }
            Ok(())
        })?;
        Ok((worst <= CONJUGACY_TOL, format!("max |f^N(psi(Z)) - psi(lambda_s Z)| / (1 + |psi(Z)|) = {worst:.3e} over 100 samples, |Z| <= 1e3 (tol {CONJUGACY_TOL:e})"), vec![file]))
    })
}

pub fn criterion_4(cfg: &SuiteConfig, out: &Path) -> (CriterionResult, Vec<Emitted>) {
    timed(4, "green-functional-equation", 5.0, || {
        let f = HenonMap::default_test_map();
        let d = f.degree() as f64;
        let mut r = rng(cfg, 4);
        let mut rows = Vec::new();
        let mut worst = 0.0f64;
        let mut tries = 0;
        while rows.len() < 100 && tries < 100_000 {
            tries += 1;
            let x = AffinePoint::new(complex_box(&mut r, 3.0), complex_box(&mut r, 3.0));
            if classify_forward(&f, &x, GREEN_N_MAX).classification != Classification::Escaping {
                continue;
            }
            let g = green_plus(&f, &x, GREEN_N_MAX, GREEN_TOL)?;
            let gf = green_plus(&f, &f.eval_forward(&x)?, GREEN_N_MAX, GREEN_TOL)?;
            let e = (gf - d * g).abs();
            worst = worst.max(e);
            rows.push((x, g, gf, e));
        }
        let mut periodic_max = 0.0f64;
        let mut periodic_points = 0;
        for n in 1..=4 {
            for o in find_periodic(&f, n, &default_seeds(&f), 1e-13)? {
                for p in &o.points {
                    periodic_max = periodic_max.max(green_plus(&f, p, GREEN_N_MAX, GREEN_TOL)?);
                    periodic_points += 1;
                }
            }
        }
        let file = emit(&out.join("green.csv"), |b| {
            use std::io::Write;
            writeln!(b, "re_z,im_z,re_w,im_w,g_plus,g_plus_image,defect")?;
            for (x, g, gf, e) in &rows {
                writeln!(b, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", x.z.re, x.z.im, x.w.re, x.w.im, g, gf, e)?;
            }
            Ok(())
        })?;
        let pass = rows.len() == 100 && worst <= GREEN_EQ_TOL && periodic_max == 0.0;
        Ok((
            pass,
            format!(
                "max |g(f x) - d g(x)| = {worst:.3e} over {} escaping samples (tol {GREEN_EQ_TOL:e}); max g+ over {periodic_points} periodic points (periods 1-4) = {periodic_max:e}",
                rows.len()
            ),
            vec![file],
        ))
    })
}

pub fn criterion_5(cfg: &SuiteConfig, out: &Path) -> (CriterionResult, Vec<Emitted>) {
    timed(5, "reparametrization-pipeline", 1800.0, || {
        let (f, o) = default_saddle()?;
        let pcfg = PipelineConfig { n_max: cfg.n_max, grid: cfg.grid, samples: cfg.samples, burn_in: 3, bits_override: None };
        let report = run_pipeline(&f, &o, &pcfg)?;
        let file = emit(&out.join("reparam.csv"), |b| write_iterates_csv(&report.iterates, b))?;
        let checked: Vec<_> = report.iterates.iter().filter(|it| it.r_n >= MIN_R_N).collect();
        let mut problems = Vec::new();
        for it in &checked {
            if (it.speed_at_0 - 1.0).abs() > SPEED_AT_0_TOL {
                problems.push(format!("n={} speed_at_0={}", it.n, it.speed_at_0));
            }
            if !(it.max_speed_half_disc <= SPEED_BOUND) {
                problems.push(format!("n={} max speed {}", it.n, it.max_speed_half_disc));
            }
            if !(it.mobius_chain_error <= MOBIUS_TOL) {
                problems.push(format!("n={} mobius chain {:e}", it.n, it.mobius_chain_error));
            }
            if !it.injectivity_log10_gap.is_finite() {
                problems.push(format!("n={} injectivity gap vanished", it.n));
            }
            if !(it.green_max <= GREEN_LEAF_TOL) {
                problems.push(format!("n={} g+ = {:e}", it.n, it.green_max));
            }
        }
        if !report.monotone_after_burn_in {
            problems.push("R_n not monotone after burn-in".into());
        }
        let slope = report.growth_slope.unwrap_or(f64::NAN);
        if !(rel_err(slope, report.expected_slope) <= SLOPE_REL_TOL) {
            problems.push(format!("slope {slope} vs {}", report.expected_slope));
        }
        if let Some(s) = &report.stopped {
            problems.push(format!("stopped at n={}: {}", s.n, s.message));
        }
        if checked.is_empty() {
            problems.push("no iterate with R_n >= 8".into());
        }
        let max_speed = checked.iter().map(|it| it.max_speed_half_disc).fold(0.0, f64::max);
        let min_gap = checked.iter().map(|it| it.injectivity_log10_gap).fold(f64::INFINITY, f64::min);
        let mobius = checked.iter().map(|it| it.mobius_chain_error).fold(0.0, f64::max);
        let pullback: usize = checked.iter().map(|it| it.green_pullback).sum();
        let direct: usize = checked.iter().map(|it| it.green_direct).sum();
        let detail = format!(
            "{} iterates (binary64 through n={}, then up to {} bits); max speed on half disc {max_speed:.6}; max Mobius chain error {mobius:.2e}; min log10 injectivity gap {min_gap:.1}; g+ checks {direct} direct, {pullback} via pullback; slope {slope:.6} vs {:.6}{}",
            checked.len(),
            report.binary64_cutoff.map_or("-".to_string(), |n| n.to_string()),
            report.iterates.last().map_or(0, |it| it.bits),
            report.expected_slope,
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join("; ")) }
        );
        Ok((problems.is_empty(), detail, vec![file]))
    })
}

pub fn criterion_6(_cfg: &SuiteConfig, out: &Path) -> (CriterionResult, Vec<Emitted>) {
    timed(6, "gallery", 60.0, || {
        let radii = crate::gallery::DEFAULT_RADII;
        let mut profiles = Vec::new();
        for spec in default_gallery() {
            let p = sup_speed_profile(&spec, &radii, crate::gallery::DEFAULT_ANGLES)?;
            profiles.push((spec, p));
        }
        let mut problems = Vec::new();
        let mut notes = Vec::new();
        for (spec, prof) in &profiles {
            match spec {
                CurveSpec::PolyGraph { .. } | CurveSpec::ExpPair { .. } => {
                    if verdict(prof) != Verdict::Brody {
                        problems.push(format!("{} grows past radius 20", spec.label()));
                    }
                }
                CurveSpec::ExpQuadratic | CurveSpec::GraphExpPower { n: 3 } => {
                    let at = prof.iter().find(|p| p.radius == GALLERY_THRESHOLD_RADIUS).map_or(f64::NAN, |p| p.max_speed);
                    notes.push(format!("{} sup at r=30: {at:.4e}", spec.label()));
                    if !(at >= GALLERY_THRESHOLD) {
                        problems.push(format!("{} reaches only {at:.4e} < {GALLERY_THRESHOLD:e} at r=30", spec.label()));
                    }
                }
                _ => {}
            }
        }
        let mut affine = 0.0f64;
        for (spec, _) in &profiles {
            affine = affine.max(affine_reparam_check(spec, C64::new(2.0, 0.0), C64::new(1.0, 1.0), 100)?);
        }
        if !(affine <= AFFINE_REPARAM_TOL) {
            problems.push(format!("affine reparametrization error {affine:e}"));
        }
        let file = emit(&out.join("gallery.csv"), |b| write_profiles_csv(&profiles, b))?;
        let detail = format!(
            "{}; affine reparametrization error {affine:.2e}{}",
            notes.join("; "),
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join("; ")) }
        );
        Ok((problems.is_empty(), detail, vec![file]))
    })
}

fn random_curve(r: &mut ChaCha8Rng) -> [[C64; 3]; 3] {
    let mut c = [[C64::new(0.0, 0.0); 3]; 3];
    for row in c.iter_mut() {
        for v in row.iter_mut() {
            *v = complex_box(r, 2.0);
        }
    }
    c
}

fn curve_lift(c: &[[C64; 3]; 3], t: C64) -> ([C64; 3], [C64; 3]) {
    let x = c.map(|q| q[0] + t * (q[1] + t * q[2]));
    let dx = c.map(|q| q[1] + 2.0 * t * q[2]);
    (x, dx)
}

pub fn criterion_7(cfg: &SuiteConfig, out: &Path) -> (CriterionResult, Vec<Emitted>) {
    timed(7, "fubini-study-metric", 1.0, || {
        let mut r = rng(cfg, 7);
        let h = 1e-5;
        let mut rows = Vec::new();
        let (mut fd_worst, mut overlap_worst) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let c = random_curve(&mut r);
            let t = complex_box(&mut r, 1.0);
            let (x, dx) = curve_lift(&c, t);
            let s = TangentSample::from_lift(&x, &dx).map_or(0.0, |s| fs_speed(&s));
            let (a, _) = curve_lift(&c, t - h);
            let (b, _) = curve_lift(&c, t + h);
            let fd = chordal(&a, &b).asin() / (2.0 * h);
            let e = rel_err(fd, s);
            fd_worst = fd_worst.max(e);
            let big = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let speeds: Vec<f64> = (0..3)
                .filter(|&k| x[k].norm() >= 1e-3 * big)
                .filter_map(|k| TangentSample::from_lift_in_chart(&x, &dx, k))
                .map(|s| fs_speed(&s))
                .collect();
            for w in speeds.windows(2) {
                overlap_worst = overlap_worst.max(rel_err(w[1], w[0]));
            }
            rows.push((t, s, fd, e));
        }
        let file = emit(&out.join("fs_checks.csv"), |b| {
            use std::io::Write;
            writeln!(b, "re_theta,im_theta,fs_speed,fd_speed,relative_error")?;
            for (t, s, fd, e) in &rows {
                writeln!(b, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", t.re, t.im, s, fd, e)?;
            }
            Ok(())
        })?;
        let pass = fd_worst <= FD_TOL && overlap_worst <= OVERLAP_TOL;
        Ok((pass, format!("max finite-difference error {fd_worst:.2e} (tol {FD_TOL:e}); max chart-overlap error {overlap_worst:.2e} (tol {OVERLAP_TOL:e})"), vec![file]))
    })
}

/// Runs criteria 1 to 7, writing their CSVs into `out`.
pub fn run_criteria(cfg: &SuiteConfig, out: &Path) -> (Vec<CriterionResult>, Vec<Emitted>) {
    let mut results = Vec::new();
    let mut files = Vec::new();
    for c in [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7] {
        let (r, f) = c(cfg, out);
        results.push(r);
        files.extend(f);
    }
    (results, files)
}

/// Criterion 8: two runs produced byte-identical CSV sets.
pub fn compare_runs(first: &[Emitted], second: &[Emitted], seconds: f64) -> CriterionResult {
    let names = |v: &[Emitted]| -> Vec<(String, String)> {
        let mut n: Vec<_> = v
            .iter()
            .map(|e| (e.path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(), e.sha256.clone()))
            .collect();
        n.sort();
        n
    };
    let (a, b) = (names(first), names(second));
    let differing: Vec<String> = a.iter().zip(&b).filter(|(x, y)| x != y).map(|(x, _)| x.0.clone()).collect();
    let pass = a.len() == b.len() && !a.is_empty() && differing.is_empty();
    let detail = if pass {
        format!("{} CSV files byte-identical across two runs with the same seed", a.len())
    } else {
        format!("{} vs {} files; differing: {}", a.len(), b.len(), differing.join(", "))
    };
    CriterionResult { id: 8, name: "determinism", pass, detail, seconds, runtime_limit: f64::INFINITY }
}
