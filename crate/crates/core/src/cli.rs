//! Command-line front end.
//!
//! Exit status: 0 on success, 1 for usage errors, 2 for domain errors. Errors are
//! written to stderr as one JSON object per line with `code`, `message` and `context`.
//! Every file written is announced on stdout as `wrote <path> sha256=<hex>`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::acceptance::{compare_runs, run_criteria, SuiteConfig};
use crate::error::{HenonError, Result};
use crate::escape::{classify_forward, classify_grid, green_plus, Section, Window, GREEN_N_MAX, GREEN_TOL};
use crate::fs::{lift_speed, write_speed_profile};
use crate::gallery::{default_gallery, sup_speed_profile, verdict, write_profiles_csv, DEFAULT_ANGLES, DEFAULT_RADII};
use crate::henon::{AffinePoint, HenonMap};
use crate::manifold::{StableManifoldChart, DEFAULT_ORDER};
use crate::mapspec::{format_map, parse_complex, parse_map};
use crate::output::{emit, Emitted};
use crate::pipeline::{run_pipeline, speed_profile, write_iterates_csv, PipelineConfig};
use crate::saddle::{default_seeds, find_periodic, write_orbits_csv, SaddleOrbit};
use crate::scalar::C64;

pub const DEFAULT_MAP: &str = "p=z^2-6; a=0.5";

#[derive(Parser, Debug)]
#[command(name = "henon-brody", version, about = "Dynamics and Brody reparametrization diagnostics for complex Henon maps")]
pub struct Cli {
    /// Map as `p=<polynomial in z>; a=<complex>`.
    #[arg(long, global = true, default_value = DEFAULT_MAP)]
    pub map: String,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for every sampled quantity.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SectionKind {
    Horizontal,
    Vertical,
    Diagonal,
    ConjDiagonal,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long, value_enum, default_value = "horizontal")]
    pub section: SectionKind,
    /// Fixed coordinate of a horizontal (`w`) or vertical (`z`) section.
    #[arg(long, default_value = "0")]
    pub fixed: String,
    #[arg(long, default_value = "0")]
    pub center: String,
    #[arg(long, default_value_t = 4.0)]
    pub half_width: f64,
    #[arg(long, default_value_t = 256)]
    pub nx: usize,
    #[arg(long, default_value_t = 256)]
    pub ny: usize,
    #[arg(long, default_value_t = 200)]
    pub n_max: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Escape classification on a grid of a complex line (CSV and PGM).
    Classify(GridArgs),
    /// Green function `g+` at one point.
    Green {
        #[arg(long)]
        z: String,
        #[arg(long)]
        w: String,
    },
    /// Periodic orbits of exact period `N` with their multipliers.
    Periodic {
        #[arg(long, default_value_t = 1)]
        period: usize,
    },
    /// Stable manifold of a saddle orbit sampled along rays and circles.
    Manifold {
        #[arg(long, default_value_t = 1)]
        period: usize,
        /// Orbit index among the saddles of that period.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
        /// Largest `|Z|` sampled.
        #[arg(long, default_value_t = 1000.0)]
        radius: f64,
        #[arg(long, default_value_t = 8)]
        rays: usize,
        #[arg(long, default_value_t = 64)]
        points: usize,
    },
    /// Rescaling pipeline of iterates `1..=n_max`.
    Reparam {
        #[arg(long, default_value_t = 1)]
        period: usize,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 12)]
        n_max: usize,
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        burn_in: usize,
        /// Also write the speed of each `k_n` on a polar grid of `Delta(0, R_n/2)`.
        #[arg(long)]
        profiles: bool,
        /// Proceed even though `|a| > 1`.
        #[arg(long)]
        force: bool,
    },
    /// Speed profiles and verdicts for the built-in curve gallery.
    Gallery {
        #[arg(long, default_value_t = DEFAULT_ANGLES)]
        angles: usize,
    },
    /// Runs the acceptance checks and writes their CSVs.
    Selftest {
        #[arg(long, default_value_t = 25)]
        n_max: usize,
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Repeat the run into a second directory and compare the CSVs byte for byte.
        #[arg(long)]
        twice: bool,
    },
}

/// Result of a command: announced files and further stdout lines.
#[derive(Default)]
struct Report {
    files: Vec<Emitted>,
    lines: Vec<String>,
    failed: bool,
}

fn saddle(map: &HenonMap<f64>, period: usize, index: usize) -> Result<SaddleOrbit> {
    let saddles: Vec<SaddleOrbit> = find_periodic(map, period, &default_seeds(map), 1e-13)?.into_iter().filter(|o| o.is_saddle).collect();
    let count = saddles.len();
    saddles
        .into_iter()
        .nth(index)
        .ok_or_else(|| HenonError::Usage(format!("orbit index {index} out of range: {count} saddle orbits of period {period}")))
}

fn classify_cmd(map: &HenonMap<f64>, g: &GridArgs, out: &Path) -> Result<Report> {
    let fixed = parse_complex(&g.fixed)?;
    let section = match g.section {
        SectionKind::Horizontal => Section::Horizontal { w: fixed },
        SectionKind::Vertical => Section::Vertical { z: fixed },
        SectionKind::Diagonal => Section::Diagonal,
        SectionKind::ConjDiagonal => Section::ConjDiagonal,
    };
    if !(g.half_width > 0.0) {
        return Err(HenonError::Usage("half-width must be positive".into()));
    }
    let window = Window::centered(parse_complex(&g.center)?, g.half_width);
    let grid = classify_grid(map, &section, &window, (g.nx, g.ny), g.n_max)?;
    let csv = emit(&out.join("classify.csv"), |b| grid.write_csv(b))?;
    let pgm = emit(&out.join("classify.pgm"), |b| grid.write_pgm(b))?;
    Ok(Report { files: vec![csv, pgm], ..Default::default() })
}

fn green_cmd(map: &HenonMap<f64>, z: &str, w: &str) -> Result<Report> {
    let x = AffinePoint::new(parse_complex(z)?, parse_complex(w)?);
    let rec = classify_forward(map, &x, GREEN_N_MAX);
    let g = green_plus(map, &x, GREEN_N_MAX, GREEN_TOL)?;
    let line = json!({ "z": [x.z.re, x.z.im], "w": [x.w.re, x.w.im], "class": rec.label(), "g_plus": g });
    Ok(Report { lines: vec![line.to_string()], ..Default::default() })
}

fn periodic_cmd(map: &HenonMap<f64>, period: usize, out: &Path) -> Result<Report> {
    let orbits = find_periodic(map, period, &default_seeds(map), 1e-13)?;
    let file = emit(&out.join(format!("periodic_{period}.csv")), |b| write_orbits_csv(&orbits, b))?;
    Ok(Report { files: vec![file], lines: vec![format!("{} orbits of period {period}", orbits.len())], ..Default::default() })
}

#[allow(clippy::too_many_arguments)]
fn manifold_cmd(map: &HenonMap<f64>, period: usize, index: usize, order: usize, radius: f64, rays: usize, points: usize, out: &Path) -> Result<Report> {
    if !(radius > 0.0) || rays == 0 || points < 2 || order == 0 {
        return Err(HenonError::Usage("radius, rays, points and order must be positive".into()));
    }
    let orbit = saddle(map, period, index)?;
    let chart = StableManifoldChart::build(map, &orbit, order, C64::new(1.0, 0.0))?;
    let mut params = Vec::new();
    for k in 0..rays {
        let phi = std::f64::consts::TAU * k as f64 / rays as f64;
        params.extend((0..points).map(|j| ("ray", C64::from_polar(radius * j as f64 / (points - 1) as f64, phi))));
    }
    for r in [0.25, 0.5, 1.0].map(|f| f * radius) {
        params.extend((0..points).map(|j| ("circle", C64::from_polar(r, std::f64::consts::TAU * j as f64 / points as f64))));
    }
    let file = emit(&out.join(format!("manifold_{period}_{index}.csv")), |b| {
        writeln!(b, "path,re_Z,im_Z,re_z,im_z,re_w,im_w,inverse_periods,error_estimate,fs_speed")?;
        for (kind, zeta) in &params {
            match chart.eval_global(zeta, true) {
                Ok(e) => {
                    let speed = e.dlift.map(|d| lift_speed(&e.lift, &d)).unwrap_or(f64::NAN);
                    let (z, w) = e.affine().map_or((C64::new(f64::NAN, f64::NAN), C64::new(f64::NAN, f64::NAN)), |x| (x.z, x.w));
                    writeln!(
                        b,
                        "{kind},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
                        zeta.re, zeta.im, z.re, z.im, w.re, w.im, e.inverse_periods, e.error_estimate, speed
                    )?;
                }
                Err(_) => writeln!(b, "{kind},{:.16e},{:.16e},NaN,NaN,NaN,NaN,,NaN,NaN", zeta.re, zeta.im)?,
            }
        }
        Ok(())
    })?;
    Ok(Report { files: vec![file], ..Default::default() })
}

#[allow(clippy::too_many_arguments)]
fn reparam_cmd(map: &HenonMap<f64>, period: usize, index: usize, cfg: PipelineConfig, profiles: bool, force: bool, out: &Path) -> Result<Report> {
    let mut lines = Vec::new();
    if map.a().norm() > 1.0 {
        let msg = format!("|a| = {} > 1: the map expands volume and the saddle's stable leaf is not the object studied here", map.a().norm());
        if !force {
            return Err(HenonError::Usage(format!("{msg}; pass --force to run anyway")));
        }
        eprintln!("{}", json!({ "warning": msg }));
    }
    let cfg = cfg.with_env()?;
    let orbit = saddle(map, period, index)?;
    let report = run_pipeline(map, &orbit, &cfg)?;
    let mut files = vec![emit(&out.join("reparam.csv"), |b| write_iterates_csv(&report.iterates, b))?];
    if profiles {
        for it in &report.iterates {
            let rows = speed_profile(map, &orbit, it, report.disc_scale, 8, 32)?;
            files.push(emit(&out.join(format!("reparam_profile_{:02}.csv", it.n)), |b| write_speed_profile(&rows, b))?);
        }
    }
    lines.push(
        json!({
            "map": format_map(map),
            "iterates": report.iterates.len(),
            "binary64_cutoff": report.binary64_cutoff,
            "growth_slope": report.growth_slope,
            "expected_slope": report.expected_slope,
            "monotone_after_burn_in": report.monotone_after_burn_in,
        })
        .to_string(),
    );
    let failed = report.stopped.is_some();
    if let Some(s) = &report.stopped {
        eprintln!("{}", json!({ "code": s.code, "message": s.message, "context": { "n": s.n } }));
    }
    Ok(Report { files, lines, failed })
}

fn gallery_cmd(angles: usize, out: &Path) -> Result<Report> {
    let mut profiles = Vec::new();
    let mut lines = Vec::new();
    for spec in default_gallery() {
        let p = sup_speed_profile(&spec, &DEFAULT_RADII, angles)?;
        lines.push(format!("{} {}", spec.label(), serde_json::to_string(&verdict(&p)).unwrap_or_default()));
        profiles.push((spec, p));
    }
    let file = emit(&out.join("gallery.csv"), |b| write_profiles_csv(&profiles, b))?;
    Ok(Report { files: vec![file], lines, ..Default::default() })
}

fn selftest_cmd(cfg: SuiteConfig, twice: bool, out: &Path) -> Result<Report> {
    let first_dir = if twice { out.join("run1") } else { out.to_path_buf() };
    let (mut results, files) = run_criteria(&cfg, &first_dir);
    let mut all = files.clone();
    if twice {
        let t = std::time::Instant::now();
        let (_, second) = run_criteria(&cfg, &out.join("run2"));
        results.push(compare_runs(&files, &second, t.elapsed().as_secs_f64()));
        all.extend(second);
    }
    let failed = results.iter().any(|r| !r.pass);
    Ok(Report { files: all, lines: results.iter().map(|r| r.line()).collect(), failed })
}

fn dispatch(cli: &Cli) -> Result<Report> {
    let map = parse_map(&cli.map)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Classify(g) => classify_cmd(&map, g, out),
        Command::Green { z, w } => green_cmd(&map, z, w),
        Command::Periodic { period } => periodic_cmd(&map, *period, out),
        Command::Manifold { period, index, order, radius, rays, points } => {
            manifold_cmd(&map, *period, *index, *order, *radius, *rays, *points, out)
        }
        Command::Reparam { period, index, n_max, grid, samples, burn_in, profiles, force } => {
            let cfg = PipelineConfig { n_max: *n_max, grid: *grid, samples: *samples, burn_in: *burn_in, bits_override: None };
            reparam_cmd(&map, *period, *index, cfg, *profiles, *force, out)
        }
        Command::Gallery { angles } => gallery_cmd(*angles, out),
        Command::Selftest { n_max, grid, samples, twice } => {
            if *n_max == 0 {
                return Err(HenonError::Usage("n_max must be at least 1".into()));
            }
            selftest_cmd(SuiteConfig { seed: cli.seed, n_max: *n_max, grid: *grid, samples: *samples }, *twice, out)
        }
    }
}

fn error_record(e: &HenonError, command: &str) -> String {
    json!({ "code": e.code(), "message": e.to_string(), "context": { "command": command } }).to_string()
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 0 {
                let _ = write!(stdout, "{e}");
            } else {
                let rec = json!({ "code": "usage-error", "message": e.kind().to_string(), "context": { "detail": e.to_string() } });
                let _ = writeln!(stderr, "{rec}");
            }
            return code;
        }
    };
    let command = format!("{:?}", cli.command).split([' ', '(', '{']).next().unwrap_or_default().to_lowercase();
    match dispatch(&cli) {
        Ok(report) => {
            for f in &report.files {
                let _ = writeln!(stdout, "{f}");
            }
            for l in &report.lines {
                let _ = writeln!(stdout, "{l}");
            }
            if report.failed {
                2
            } else {
                0
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "{}", error_record(&e, &command));
            if e.is_usage() {
                1
            } else {
                2
            }
        }
    }
}
