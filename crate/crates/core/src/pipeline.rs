//! Brody-type rescaling of the stable manifold.
//!
//! For each `n` the disc `phi_n(theta) = psi(lambda_s^{-n} rho theta)` is recentred at
//! the maximizer `theta_n` of `H_n(theta) = |phi_n'(theta)|_FS (1 - |theta|^2)`, giving
//! `g_n = phi_n o mu_n`, and then rescaled to `k_n(theta) = g_n(theta / R_n)` with
//! `R_n = H_n(theta_n)`, so that `k_n` has unit speed at the origin.
//!
//! Iterates start in binary64 and move to software precision once the evaluation
//! error monitors trip; the mantissa width then follows [`ladder_bits`].

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HenonError, Result};
use crate::escape::{
    classify_forward_in, filtration_radius, forward_bits_for_norm, green_plus_in, Classification, FiltrationRadius,
    GREEN_N_MAX, GREEN_TOL,
};
use crate::fs::{lift_speed, log_radii, sup_polar};
use crate::henon::{chordal, HenonMap, AFFINE_LIMIT};
use crate::manifold::{leaf_membership_check, order_for_bits, LeafPoint, StableManifoldChart, DEFAULT_ORDER};
use crate::saddle::SaddleOrbit;
use crate::scalar::{cabs_f64, cx, to_c64, MpFloat, Real, C, C64};

/// Environment variable that pins the software-precision mantissa width.
pub const PRECISION_ENV: &str = "HENON_PRECISION_BITS";

/// Maximum tolerated relative discrepancy in the Möbius chain identity.
pub const MOBIUS_TOL: f64 = 1e-9;

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;
const DIRECT_GREEN_LIMIT: f64 = AFFINE_LIMIT;
const CHECKER_MAX_ORDER: usize = 64;
const CENTER_SAMPLES: usize = 64;
const MOBIUS_SAMPLES: usize = 50;
const LITERAL_CHECK_MAX_N: usize = 5;
const LITERAL_CHECK_PARAM: f64 = 50.0;

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub n_max: usize,
    /// Angular and radial resolution of the maximum searches.
    pub grid: usize,
    /// Number of spiral samples used for the injectivity gap and the `g+` check.
    pub samples: usize,
    pub burn_in: usize,
    pub bits_override: Option<u32>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { n_max: 12, grid: 32, samples: 1000, burn_in: 3, bits_override: None }
    }
}

impl PipelineConfig {
    /// Applies the [`PRECISION_ENV`] override when it is set to a positive integer.
    pub fn with_env(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(PRECISION_ENV) {
            let bits: u32 = v
                .trim()
                .parse()
                .map_err(|_| HenonError::Usage(format!("{PRECISION_ENV} must be a positive integer, got {v:?}")))?;
            if bits < 53 {
                return Err(HenonError::Usage(format!("{PRECISION_ENV} must be at least 53")));
            }
            self.bits_override = Some(bits);
        }
        Ok(self)
    }
}

/// Mantissa width for iterate `n`: `64 + ceil(1.2 n N log2 max(|lambda_u|, 1/|lambda_s|))`.
pub fn ladder_bits(n: usize, period: usize, lambda_s_abs: f64, lambda_u_abs: f64) -> u32 {
    let growth = lambda_u_abs.max(1.0 / lambda_s_abs).log2().max(1.0);
    64 + (1.2 * n as f64 * period as f64 * growth).ceil() as u32
}

/// The three curves of iterate `n` in a common scalar type.
pub struct Rescaling<'a, T: Real> {
    pub chart: &'a StableManifoldChart<T>,
    /// `lambda_s^{-n} rho`.
    pub scale: C<T>,
    pub theta_n: C<T>,
    pub r_n: f64,
}

type Lift<T> = ([C<T>; 3], [C<T>; 3]);

impl<'a, T: Real> Rescaling<'a, T> {
    pub fn new(chart: &'a StableManifoldChart<T>, n: usize, disc_scale: f64) -> Self {
        let inv = C::<T>::one() / chart.orbit.lambda_s.clone();
        let mut scale = C::new(T::from_f64(disc_scale), T::zero());
        for _ in 0..n {
            scale = scale * inv.clone();
        }
        Rescaling { chart, scale, theta_n: C::zero(), r_n: 1.0 }
    }

    /// Leaf parameter `Z` reached by `phi_n` at `theta`.
    pub fn leaf_param(&self, theta: &C<T>) -> C<T> {
        self.scale.clone() * theta.clone()
    }

    pub fn phi(&self, theta: &C<T>) -> Result<Lift<T>> {
        let e = self.chart.eval_global(&self.leaf_param(theta), true)?;
        let d = e.dlift.expect("derivative requested").map(|c| c * self.scale.clone());
        Ok((e.lift, d))
    }

    fn mobius(&self, zeta: &C<T>) -> (C<T>, C<T>) {
        let t = self.theta_n.clone();
        let den = C::<T>::one() + t.conj() * zeta.clone();
        let mu = (zeta.clone() + t.clone()) / den.clone();
        let dmu = (C::<T>::one() - C::new(t.norm_sqr(), T::zero())) / (den.clone() * den);
        (mu, dmu)
    }

    /// `mu_n(zeta)`, the point of the `phi_n` disc reached by `g_n` at `zeta`.
    pub fn recentre(&self, zeta: &C<T>) -> C<T> {
        self.mobius(zeta).0
    }

    pub fn g(&self, zeta: &C<T>) -> Result<Lift<T>> {
        let (mu, dmu) = self.mobius(zeta);
        let (x, dx) = self.phi(&mu)?;
        Ok((x, dx.map(|c| c * dmu.clone())))
    }

    pub fn k(&self, theta: &C<T>) -> Result<Lift<T>> {
        let inv_r = T::from_f64(1.0 / self.r_n);
        let zeta = theta.clone() * C::new(inv_r.clone(), T::zero());
        let (x, dx) = self.g(&zeta)?;
        Ok((x, dx.map(|c| c * C::new(inv_r.clone(), T::zero()))))
    }

    /// Leaf parameter reached by `k_n` at `theta`.
    pub fn k_leaf_param(&self, theta: &C<T>) -> C<T> {
        let zeta = theta.clone() * C::new(T::from_f64(1.0 / self.r_n), T::zero());
        self.leaf_param(&self.recentre(&zeta))
    }

    pub fn phi_speed(&self, theta: C64) -> Result<f64> {
        let (x, dx) = self.phi(&cx(theta))?;
        Ok(lift_speed(&x, &dx))
    }

    pub fn g_speed(&self, zeta: C64) -> Result<f64> {
        let (x, dx) = self.g(&cx(zeta))?;
        Ok(lift_speed(&x, &dx))
    }

    pub fn k_speed(&self, theta: C64) -> Result<f64> {
        let (x, dx) = self.k(&cx(theta))?;
        Ok(lift_speed(&x, &dx))
    }
}

/// Diagnostics for one successful iterate.
#[derive(Clone, Debug, Serialize)]
pub struct ReparamIterate {
    pub n: usize,
    /// Mantissa width used (53 for binary64).
    pub bits: u32,
    pub theta_n: C64,
    pub h_max: f64,
    pub r_n: f64,
    pub phi_speed_at_0: f64,
    pub speed_at_0: f64,
    pub max_speed_half_disc: f64,
    pub argmax_half_disc: C64,
    pub mobius_chain_error: f64,
    /// `min |k(a) - k(b)|_chordal / |a - b|` over sample pairs; may underflow binary64.
    pub injectivity_min_gap: f64,
    pub injectivity_log10_gap: f64,
    pub green_max: f64,
    /// Samples whose `g+` was computed by forward iteration from the point itself.
    pub green_direct: usize,
    /// Samples beyond the affine range whose `g+` was obtained from their image near
    /// the saddle through `g+(x) = g+(f^{Nm} x) / d^{Nm}`.
    pub green_pullback: usize,
    pub center_decay_ratio: Option<f64>,
    /// Chordal defect against one explicit inverse period, for `n <= 5`.
    pub literal_pullback_defect: Option<f64>,
}

/// Deterministic Vogel spiral of `count` points covering the disc of radius `radius`.
pub fn spiral(count: usize, radius: f64) -> Vec<C64> {
    (0..count)
        .map(|k| C64::from_polar(radius * ((k as f64 + 0.5) / count as f64).sqrt(), GOLDEN_ANGLE * k as f64))
        .collect()
}

struct ErrorSlot(Mutex<Option<HenonError>>);

impl ErrorSlot {
    fn new() -> Self {
        ErrorSlot(Mutex::new(None))
    }

    fn record<V>(&self, r: Result<V>, fallback: V) -> V {
        match r {
            Ok(v) => v,
            Err(e) => {
                let mut slot = self.0.lock().expect("error slot");
                if slot.is_none() {
                    *slot = Some(e);
                }
                fallback
            }
        }
    }

    fn check(self) -> Result<()> {
        match self.0.into_inner().expect("error slot") {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// High-precision charts used to verify `g+` at individual samples, keyed by width.
pub struct GreenChecker {
    map: HenonMap<f64>,
    orbit: SaddleOrbit<f64>,
    radius: FiltrationRadius,
    charts: Mutex<HashMap<u32, Arc<StableManifoldChart<MpFloat>>>>,
}

/// Outcome of the `g+` check at one leaf parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GreenSample {
    Direct(f64),
    Pullback(f64),
}

impl GreenSample {
    pub fn value(&self) -> f64 {
        match *self {
            GreenSample::Direct(v) | GreenSample::Pullback(v) => v,
        }
    }
}

impl GreenChecker {
    pub fn new(map: &HenonMap<f64>, orbit: &SaddleOrbit<f64>) -> Self {
        GreenChecker {
            map: map.clone(),
            orbit: orbit.clone(),
            radius: filtration_radius(map),
            charts: Mutex::new(HashMap::new()),
        }
    }

    fn chart(&self, bits: u32) -> Result<Arc<StableManifoldChart<MpFloat>>> {
        let bits = bits.div_ceil(64) * 64;
        if let Some(c) = self.charts.lock().expect("chart cache").get(&bits) {
            return Ok(c.clone());
        }
        let chart = MpFloat::with_ambient_bits(bits, || -> Result<_> {
            let map = self.map.lift::<MpFloat>();
            let orbit = self.orbit.refine(&map)?;
            let order = order_for_bits(bits).min(CHECKER_MAX_ORDER);
            StableManifoldChart::build(&map, &orbit, order, C::one())
        })?;
        let chart = Arc::new(chart);
        self.charts.lock().expect("chart cache").insert(bits, chart.clone());
        Ok(chart)
    }

    /// Evaluates `psi(Z)` at a width sized to its norm and iterates it forward there.
    fn direct(&self, z: &C<MpFloat>, norm: f64) -> Result<(f64, Option<f64>)> {
        let bits = forward_bits_for_norm(norm).max(z.re.precision());
        let chart = self.chart(bits)?;
        let bits = chart.orbit.points[0].z.re.precision();
        MpFloat::with_ambient_bits(bits, || {
            let z = C::new(z.re.with_bits(bits), z.im.with_bits(bits));
            let e = chart.eval_global(&z, false)?;
            let x = e.affine().ok_or(HenonError::EscapedRange { step: e.inverse_periods })?;
            let g = green_plus_in(&chart.map, x, GREEN_N_MAX, GREEN_TOL, self.radius)?;
            let decay = leaf_membership_check(&chart.map, x, &chart.orbit, 12).decay_ratio;
            Ok((g, decay))
        })
    }

    /// `g+` at `psi(Z)` for a leaf parameter given in any scalar type.
    pub fn check<T: Real>(&self, chart: &StableManifoldChart<T>, z: &C<T>) -> Result<GreenSample> {
        let e = chart.eval_global(z, false)?;
        if let LeafPoint::Affine(x) = &e.point {
            let norm = x.norm_f64();
            if norm <= DIRECT_GREEN_LIMIT {
                let zm = C::new(z.re.to_mp(), z.im.to_mp());
                return self.direct(&zm, norm).map(|(g, _)| GreenSample::Direct(g));
            }
        }
        // far point: it must lie outside V+, and its forward image after m periods is the
        // local chart point, whose escape rate fixes g+ through the functional equation
        let lift = &e.lift;
        let (x0, x1, x2) = (cabs_f64(&lift[0]), cabs_f64(&lift[1]), cabs_f64(&lift[2]));
        if x0 >= x1 && x0 >= self.radius.r * x2 {
            return Ok(GreenSample::Pullback(f64::INFINITY));
        }
        let m = e.inverse_periods;
        let mut zeta = z.clone();
        for _ in 0..m {
            zeta = zeta * chart.orbit.lambda_s.clone();
        }
        let y = chart.eval_local(&zeta);
        let rec = classify_forward_in(&chart.map, &y, GREEN_N_MAX, self.radius);
        let gy = match rec.classification {
            Classification::Bounded => 0.0,
            _ => green_plus_in(&chart.map, &y, GREEN_N_MAX, GREEN_TOL, self.radius)?,
        };
        let steps = (m * chart.orbit.period) as i32;
        Ok(GreenSample::Pullback(gy / (chart.map.degree() as f64).powi(steps)))
    }

    /// Forward decay ratio towards the saddle at `psi(Z)`, when `psi(Z)` is affine.
    pub fn decay_ratio<T: Real>(&self, chart: &StableManifoldChart<T>, z: &C<T>) -> Result<Option<f64>> {
        let e = chart.eval_global(z, false)?;
        match e.affine() {
            Some(x) if x.norm_f64() <= DIRECT_GREEN_LIMIT => {
                let zm = C::new(z.re.to_mp(), z.im.to_mp());
                Ok(self.direct(&zm, x.norm_f64())?.1)
            }
            _ => Ok(None),
        }
    }
}

fn theta_radii(n: usize, lambda_s_abs: f64, disc_scale: f64, grid: usize) -> Vec<f64> {
    let r_lo = (1e-3 * lambda_s_abs.powi(n as i32) / disc_scale.max(1.0)).min(1e-2);
    let mut radii = log_radii(r_lo, 0.5, grid.max(16) + 2 * n);
    let near_edge = log_radii(0.5, 1e-6, (grid / 4).max(6));
    radii.extend(near_edge.into_iter().skip(1).map(|d| 1.0 - d));
    radii
}

/// One rescaling iterate in scalar type `T`.
pub fn reparam_step<T: Real>(
    chart: &StableManifoldChart<T>,
    checker: &GreenChecker,
    n: usize,
    disc_scale: f64,
    cfg: &PipelineConfig,
) -> Result<ReparamIterate> {
    let bits = T::ambient_bits();
    let mut resc = Rescaling::new(chart, n, disc_scale);
    let lambda_s_abs = cabs_f64(&chart.orbit.lambda_s);

    let errors = ErrorSlot::new();
    let h = |t: C64| {
        T::with_ambient_bits(bits, || {
            let s = errors.record(resc.phi_speed(t), f64::NEG_INFINITY);
            s * (1.0 - t.norm_sqr())
        })
    };
    let radii = theta_radii(n, lambda_s_abs, disc_scale, cfg.grid);
    let (h_max, theta_n) = sup_polar(&h, &radii, cfg.grid, 1.0 - 1e-6);
    errors.check()?;
    if !(h_max > 0.0 && h_max.is_finite()) {
        return Err(HenonError::DegenerateRescale { n });
    }
    resc.theta_n = cx(theta_n);
    let r_n = resc.g_speed(C64::new(0.0, 0.0))?;
    if !(r_n > 0.0 && r_n.is_finite()) {
        return Err(HenonError::DegenerateRescale { n });
    }
    resc.r_n = r_n;
    let resc = resc;

    let phi_speed_at_0 = resc.phi_speed(C64::new(0.0, 0.0))?;
    let speed_at_0 = resc.k_speed(C64::new(0.0, 0.0))?;

    let errors = ErrorSlot::new();
    let ks = |t: C64| T::with_ambient_bits(bits, || errors.record(resc.k_speed(t), f64::NEG_INFINITY));
    let half = 0.5 * resc.r_n;
    let k_radii = log_radii(1e-3f64.min(0.25 * half), half, cfg.grid.max(16) + 2 * n);
    let (max_speed, argmax) = sup_polar(&ks, &k_radii, cfg.grid, half);
    errors.check()?;

    let mobius_chain_error = mobius_chain_error(&resc, bits)?;
    let (gap_ln, green) = sample_checks(&resc, checker, bits, cfg)?;
    let center_decay_ratio = T::with_ambient_bits(bits, || checker.decay_ratio(chart, &resc.k_leaf_param(&C::zero())))?;

    let green_max = green.iter().map(GreenSample::value).fold(0.0, f64::max);
    let green_direct = green.iter().filter(|g| matches!(g, GreenSample::Direct(_))).count();
    Ok(ReparamIterate {
        n,
        bits,
        theta_n,
        h_max,
        r_n: resc.r_n,
        phi_speed_at_0,
        speed_at_0,
        max_speed_half_disc: max_speed,
        argmax_half_disc: argmax,
        mobius_chain_error,
        injectivity_min_gap: gap_ln.exp(),
        injectivity_log10_gap: gap_ln / std::f64::consts::LN_10,
        green_max,
        green_direct,
        green_pullback: green.len() - green_direct,
        center_decay_ratio,
        literal_pullback_defect: None,
    })
}

/// Largest relative discrepancy in `|g'(z)|(1-|z|^2) = |phi'(mu(z))|(1-|mu(z)|^2)`.
fn mobius_chain_error<T: Real>(resc: &Rescaling<T>, bits: u32) -> Result<f64> {
    let near = spiral(MOBIUS_SAMPLES / 2, (4.0 / resc.r_n).min(0.5));
    let wide = spiral(MOBIUS_SAMPLES - near.len(), 0.5);
    let errs: Vec<Result<f64>> = near
        .into_iter()
        .chain(wide)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&zeta| {
            T::with_ambient_bits(bits, || {
                let lhs = resc.g_speed(zeta)? * (1.0 - zeta.norm_sqr());
                let mu = to_c64(&resc.recentre(&cx(zeta)));
                let rhs = resc.phi_speed(mu)? * (1.0 - mu.norm_sqr());
                let scale = lhs.abs().max(rhs.abs());
                Ok(if scale < 1e-250 { 0.0 } else { (lhs - rhs).abs() / scale })
            })
        })
        .collect();
    let mut worst = 0.0f64;
    for e in errs {
        worst = worst.max(e?);
    }
    Ok(worst)
}

/// `ln min |x_i ^ x_j|_chordal / |theta_i - theta_j|` over all pairs of samples.
pub fn gap_ln_of<T: Real>(lifts: &[[C<T>; 3]], thetas: &[C64]) -> f64 {
    let bits = T::ambient_bits();
    (0..lifts.len())
        .into_par_iter()
        .map(|i| {
            T::with_ambient_bits(bits, || {
                let mut best = f64::INFINITY;
                for j in i + 1..lifts.len() {
                    let d = chordal(&lifts[i], &lifts[j]).ln_abs() - (thetas[i] - thetas[j]).norm().ln();
                    best = best.min(if d.is_nan() { f64::NEG_INFINITY } else { d });
                }
                best
            })
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Injectivity gap of a curve on `Delta(0, r_n / 2)`: the minimum over spiral sample
/// pairs of chordal distance divided by parameter distance. Returns `(gap, log10 gap)`;
/// the logarithm stays meaningful when the gap itself underflows.
pub fn injectivity_gap<T: Real, F>(curve: F, r_n: f64, samples: usize) -> Result<(f64, f64)>
where
    F: Fn(C64) -> Result<[C<T>; 3]> + Sync,
{
    let thetas = spiral(samples.max(2), 0.5 * r_n);
    let bits = T::ambient_bits();
    let lifts: Vec<[C<T>; 3]> = thetas
        .par_iter()
        .map(|&t| T::with_ambient_bits(bits, || curve(t)))
        .collect::<Result<_>>()?;
    let ln = gap_ln_of(&lifts, &thetas);
    Ok((ln.exp(), ln / std::f64::consts::LN_10))
}

/// Natural log of the injectivity gap, and the `g+` samples.
fn sample_checks<T: Real>(
    resc: &Rescaling<T>,
    checker: &GreenChecker,
    bits: u32,
    cfg: &PipelineConfig,
) -> Result<(f64, Vec<GreenSample>)> {
    let half = 0.5 * resc.r_n;
    let thetas = spiral(cfg.samples.max(2), half);
    let lifts: Vec<Result<[C<T>; 3]>> = thetas
        .par_iter()
        .map(|&t| {
            T::with_ambient_bits(bits, || {
                let z = resc.k_leaf_param(&cx(t));
                Ok(resc.chart.eval_global(&z, false)?.lift)
            })
        })
        .collect();
    let lifts: Vec<[C<T>; 3]> = lifts.into_iter().collect::<Result<_>>()?;
    let gap_ln = T::with_ambient_bits(bits, || gap_ln_of(&lifts, &thetas));
    if let Some(floor) = T::ln_range_floor() {
        // chordal distances are formed from squared coordinates, which leave the
        // exponent range at half the floor
        if !(gap_ln >= 0.5 * floor) {
            return Err(HenonError::PrecisionExhausted { estimated_error: f64::INFINITY, bits, n: None });
        }
    }

    let mut green_thetas = thetas;
    green_thetas.extend(spiral(CENTER_SAMPLES, half.min(8.0)));
    let green: Vec<Result<GreenSample>> = green_thetas
        .par_iter()
        .map(|&t| T::with_ambient_bits(bits, || checker.check(resc.chart, &resc.k_leaf_param(&cx(t)))))
        .collect();
    let green = green
        .into_iter()
        .map(|g| match g {
            Err(HenonError::GreenUndecided { .. }) => Ok(GreenSample::Direct(f64::INFINITY)),
            other => other,
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((gap_ln, green))
}

/// Chordal distance between `phi_{n+1}(theta)` and `f^{-N}(phi_n(theta))`, maximized
/// over `samples` spiral points of the part of the unit disc where the leaf parameter
/// stays below [`LITERAL_CHECK_PARAM`], so that the comparison is not dominated by
/// points collapsing onto `I+`.
pub fn literal_pullback_defect(chart: &StableManifoldChart<f64>, n: usize, disc_scale: f64, samples: usize) -> Result<f64> {
    let a = Rescaling::new(chart, n, disc_scale);
    let b = Rescaling::new(chart, n + 1, disc_scale);
    let radius = (LITERAL_CHECK_PARAM / a.scale.norm()).min(0.95);
    let mut worst = 0.0f64;
    for t in spiral(samples, radius) {
        let x = chart.eval_global(&a.leaf_param(&t), false)?.projective();
        let mut y = x;
        for _ in 0..chart.orbit.period {
            y = chart.map.eval_inverse_proj(&y)?;
        }
        let direct = chart.eval_global(&b.leaf_param(&t), false)?.projective();
        worst = worst.max(y.chordal_distance(&direct));
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct StopRecord {
    pub n: usize,
    pub code: &'static str,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    pub iterates: Vec<ReparamIterate>,
    /// Radius `rho` of the binary64 chart; fixes the disc `psi(rho theta)` for every `n`.
    pub disc_scale: f64,
    /// Last iterate computed in binary64.
    pub binary64_cutoff: Option<usize>,
    pub stopped: Option<StopRecord>,
    pub growth_slope: Option<f64>,
    pub expected_slope: f64,
    pub monotone_after_burn_in: bool,
}

/// Least-squares slope of `ln R_n` against `n` over iterates beyond the burn-in.
pub fn growth_slope(iterates: &[ReparamIterate], burn_in: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = iterates.iter().filter(|it| it.n > burn_in).map(|it| (it.n as f64, it.r_n.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / k, sy / k);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + (p.0 - mx) * (p.1 - my), b + (p.0 - mx).powi(2)));
    (den > 0.0).then(|| num / den)
}

fn monotone_after(iterates: &[ReparamIterate], burn_in: usize) -> bool {
    iterates.windows(2).filter(|w| w[0].n >= burn_in).all(|w| w[1].r_n >= w[0].r_n)
}

fn mp_step(
    map: &HenonMap<f64>,
    orbit: &SaddleOrbit<f64>,
    checker: &GreenChecker,
    n: usize,
    bits: u32,
    disc_scale: f64,
    cfg: &PipelineConfig,
) -> Result<ReparamIterate> {
    MpFloat::with_ambient_bits(bits, || {
        let map_mp = map.lift::<MpFloat>();
        let orbit_mp = orbit.refine(&map_mp)?;
        let chart = StableManifoldChart::build(&map_mp, &orbit_mp, order_for_bits(bits), C::one())?;
        reparam_step(&chart, checker, n, disc_scale, cfg)
    })
    .map_err(|e| match e {
        HenonError::PrecisionExhausted { estimated_error, bits, .. } => {
            HenonError::PrecisionExhausted { estimated_error, bits, n: Some(n) }
        }
        other => other,
    })
}

/// Runs iterates `1..=n_max`, moving from binary64 to software precision when needed.
///
/// Iteration stops at the first failure; the failure is recorded in the report, which
/// is returned as long as at least three iterates succeeded.
pub fn run_pipeline(map: &HenonMap<f64>, orbit: &SaddleOrbit<f64>, cfg: &PipelineConfig) -> Result<PipelineReport> {
    if cfg.n_max == 0 {
        return Err(HenonError::Usage("n_max must be at least 1".into()));
    }
    let chart = StableManifoldChart::build(map, orbit, DEFAULT_ORDER, C::one())?;
    let disc_scale = chart.rho;
    let checker = GreenChecker::new(map, orbit);
    let (ls, lu) = (orbit.lambda_s.norm(), orbit.lambda_u.norm());
    let mut iterates = Vec::new();
    let mut binary64 = cfg.bits_override.is_none();
    let mut binary64_cutoff = None;
    let mut stopped = None;
    for n in 1..=cfg.n_max {
        let mut result = None;
        if binary64 {
            match reparam_step(&chart, &checker, n, disc_scale, cfg) {
                Err(HenonError::PrecisionExhausted { .. }) => {
                    binary64 = false;
                    binary64_cutoff = n.checked_sub(1).filter(|&c| c > 0);
                }
                r => result = Some(r),
            }
        }
        let result = result.unwrap_or_else(|| {
            let bits = cfg.bits_override.unwrap_or_else(|| ladder_bits(n, orbit.period, ls, lu));
            mp_step(map, orbit, &checker, n, bits, disc_scale, cfg)
        });
        match result {
            Ok(mut it) => {
                if n <= LITERAL_CHECK_MAX_N {
                    it.literal_pullback_defect = literal_pullback_defect(&chart, n, disc_scale, MOBIUS_SAMPLES).ok();
                }
                if binary64 {
                    binary64_cutoff = Some(n);
                }
                iterates.push(it)
            }
            Err(e) => {
                stopped = Some(StopRecord { n, code: e.code(), message: e.to_string() });
                break;
            }
        }
    }
    if iterates.len() < 3 {
        let reason = stopped.as_ref().map_or_else(|| "too few iterates requested".to_string(), |s| s.message.clone());
        return Err(HenonError::PipelineFailed { successes: iterates.len(), reason });
    }
    Ok(PipelineReport {
        growth_slope: growth_slope(&iterates, cfg.burn_in),
        expected_slope: -ls.ln(),
        monotone_after_burn_in: monotone_after(&iterates, cfg.burn_in),
        iterates,
        disc_scale,
        binary64_cutoff,
        stopped,
    })
}

/// Speed of `k_n` on a polar grid of `Delta(0, R_n / 2)`: `radial` circles of `angular`
/// points each, evaluated at the iterate's precision.
pub fn speed_profile(
    map: &HenonMap<f64>,
    orbit: &SaddleOrbit<f64>,
    it: &ReparamIterate,
    disc_scale: f64,
    radial: usize,
    angular: usize,
) -> Result<Vec<(C64, f64)>> {
    fn run<T: Real>(chart: &StableManifoldChart<T>, it: &ReparamIterate, disc_scale: f64, pts: &[C64]) -> Vec<(C64, f64)> {
        let mut resc = Rescaling::new(chart, it.n, disc_scale);
        resc.theta_n = cx(it.theta_n);
        resc.r_n = it.r_n;
        let bits = T::ambient_bits();
        pts.par_iter().map(|&t| (t, T::with_ambient_bits(bits, || resc.k_speed(t)).unwrap_or(f64::NAN))).collect()
    }
    let (radial, angular) = (radial.max(1), angular.max(1));
    let half = 0.5 * it.r_n;
    let mut pts = vec![C64::new(0.0, 0.0)];
    for i in 1..=radial {
        let r = half * i as f64 / radial as f64;
        pts.extend((0..angular).map(|j| C64::from_polar(r, std::f64::consts::TAU * j as f64 / angular as f64)));
    }
    if it.bits <= 53 {
        let chart = StableManifoldChart::build(map, orbit, DEFAULT_ORDER, C::one())?;
        return Ok(run(&chart, it, disc_scale, &pts));
    }
    MpFloat::with_ambient_bits(it.bits, || {
        let map_mp = map.lift::<MpFloat>();
        let orbit_mp = orbit.refine(&map_mp)?;
        let chart = StableManifoldChart::build(&map_mp, &orbit_mp, order_for_bits(it.bits), C::one())?;
        Ok(run(&chart, it, disc_scale, &pts))
    })
}

/// Iterate table with header `n,re_theta_n,im_theta_n,H_max,R_n,speed_at_0,max_speed_half_disc,
/// injectivity_min_gap,log10_injectivity_gap,mobius_chain_error,green_max,bits`.
pub fn write_iterates_csv<W: Write>(iterates: &[ReparamIterate], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "n,re_theta_n,im_theta_n,H_max,R_n,speed_at_0,max_speed_half_disc,injectivity_min_gap,log10_injectivity_gap,mobius_chain_error,green_max,bits"
    )?;
    for it in iterates {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            it.n,
            it.theta_n.re,
            it.theta_n.im,
            it.h_max,
            it.r_n,
            it.speed_at_0,
            it.max_speed_half_disc,
            it.injectivity_min_gap,
            it.injectivity_log10_gap,
            it.mobius_chain_error,
            it.green_max,
            it.bits
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saddle::{default_seeds, find_periodic};
    use proptest::prelude::*;

    fn saddle() -> (HenonMap<f64>, SaddleOrbit<f64>) {
        let f = HenonMap::default_test_map();
        let o = find_periodic(&f, 1, &default_seeds(&f), 1e-13).unwrap().remove(1);
        (f, o)
    }

    fn chart() -> StableManifoldChart<f64> {
        let (f, o) = saddle();
        StableManifoldChart::build(&f, &o, DEFAULT_ORDER, C::one()).unwrap()
    }

    fn quick() -> PipelineConfig {
        PipelineConfig { n_max: 3, grid: 32, samples: 120, burn_in: 1, bits_override: None }
    }

    #[test]
    fn ladder_bits_follow_the_formula() {
        let bits = ladder_bits(10, 1, 0.07637, 6.5471);
        let expected = 64 + (1.2 * 10.0 * (1.0f64 / 0.07637).log2()).ceil() as u32;
        assert_eq!(bits, expected);
        assert!(ladder_bits(11, 1, 0.07637, 6.5471) > bits);
    }

    #[test]
    fn spiral_stays_in_disc_and_is_distinct() {
        let pts = spiral(500, 3.0);
        assert!(pts.iter().all(|p| p.norm() <= 3.0));
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                assert!((pts[i] - pts[j]).norm() > 1e-3);
            }
        }
    }

    #[test]
    fn phi_zero_is_psi_on_the_disc() {
        let ch = chart();
        let r = Rescaling::new(&ch, 0, ch.rho);
        let t = C64::new(0.3, -0.2);
        let (x, _) = r.phi(&t).unwrap();
        let direct = ch.eval_global(&(t * ch.rho), false).unwrap();
        let diff = (0..3).map(|i| (x[i] - direct.lift[i]).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-14);
    }

    #[test]
    fn identity_recentring_gives_phi() {
        let ch = chart();
        let r = Rescaling::new(&ch, 2, ch.rho);
        let z = C64::new(1e-3, 2e-4);
        let (a, da) = r.phi(&z).unwrap();
        let (b, db) = r.g(&z).unwrap();
        for i in 0..3 {
            assert!((a[i] - b[i]).norm() <= 1e-15 * (1.0 + a[i].norm()));
            assert!((da[i] - db[i]).norm() <= 1e-15 * (1.0 + da[i].norm()));
        }
    }

    #[test]
    fn phi_speed_at_origin_grows_by_the_stable_multiplier() {
        let ch = chart();
        let ls = ch.orbit.lambda_s.norm();
        let speeds: Vec<f64> = (0..5).map(|n| Rescaling::new(&ch, n, ch.rho).phi_speed(C64::new(0.0, 0.0)).unwrap()).collect();
        for w in speeds.windows(2) {
            assert!(w[1] >= w[0]);
            assert!((w[1] / w[0] - 1.0 / ls).abs() < 1e-9 / ls);
        }
    }

    #[test]
    fn literal_pullback_matches_linearized_scaling() {
        let ch = chart();
        for n in 0..=5 {
            assert!(literal_pullback_defect(&ch, n, ch.rho, 50).unwrap() < 1e-8, "n = {n}");
        }
    }

    #[test]
    fn injectivity_gap_detects_collisions() {
        let line = |t: C64| -> Result<[C64; 3]> { Ok([t, C64::new(0.0, 0.0), C64::new(1.0, 0.0)]) };
        let (gap, lg) = injectivity_gap::<f64, _>(line, 2.0, 200).unwrap();
        assert!(gap > 0.1 && lg.is_finite());
        let square = |t: C64| -> Result<[C64; 3]> { Ok([t * t, C64::new(0.0, 0.0), C64::new(1.0, 0.0)]) };
        let samples: Vec<C64> = spiral(200, 1.0).into_iter().flat_map(|t| [t, -t]).collect();
        let lifts: Vec<[C64; 3]> = samples.iter().map(|&t| square(t).unwrap()).collect();
        assert_eq!(gap_ln_of(&lifts, &samples), f64::NEG_INFINITY);
    }

    #[test]
    fn short_binary64_run_satisfies_iterate_invariants() {
        let (f, o) = saddle();
        let report = run_pipeline(&f, &o, &quick()).unwrap();
        assert_eq!(report.iterates.len(), 3);
        for it in &report.iterates {
            assert!(it.theta_n.norm() < 1.0);
            assert!((it.speed_at_0 - 1.0).abs() <= 1e-9);
            assert!(it.max_speed_half_disc <= 2.05);
            assert!(it.mobius_chain_error <= MOBIUS_TOL);
            assert!(it.injectivity_log10_gap.is_finite());
            assert!(it.green_max <= 1e-6);
            assert!((it.h_max - it.r_n).abs() <= 1e-9 * it.r_n);
            assert_eq!(it.bits, 53);
        }
        assert!(report.monotone_after_burn_in);
        let slope = report.growth_slope.unwrap();
        assert!((slope - report.expected_slope).abs() <= 0.25 * report.expected_slope);
    }

    #[test]
    fn software_precision_override_is_used_from_the_first_iterate() {
        let (f, o) = saddle();
        let cfg = PipelineConfig { bits_override: Some(96), samples: 100, ..quick() };
        let report = run_pipeline(&f, &o, &cfg).unwrap();
        assert!(report.binary64_cutoff.is_none());
        assert!(report.iterates.iter().all(|it| it.bits == 96));
        let plain = run_pipeline(&f, &o, &PipelineConfig { samples: 100, ..quick() }).unwrap();
        for (a, b) in report.iterates.iter().zip(&plain.iterates) {
            assert!((a.r_n / b.r_n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pipeline_rejects_zero_iterates_and_reports_too_few() {
        let (f, o) = saddle();
        let zero = run_pipeline(&f, &o, &PipelineConfig { n_max: 0, ..quick() });
        assert!(matches!(zero, Err(HenonError::Usage(_))));
        let two = run_pipeline(&f, &o, &PipelineConfig { n_max: 2, ..quick() });
        assert!(matches!(two, Err(HenonError::PipelineFailed { successes: 2, .. })));
    }

    #[test]
    fn precision_env_override_is_parsed() {
        // single test touching the variable, so no interference between threads
        std::env::set_var(PRECISION_ENV, "160");
        let cfg = PipelineConfig::default().with_env().unwrap();
        assert_eq!(cfg.bits_override, Some(160));
        std::env::set_var(PRECISION_ENV, "lots");
        assert!(PipelineConfig::default().with_env().is_err());
        std::env::remove_var(PRECISION_ENV);
    }

    #[test]
    fn iterate_csv_has_the_declared_columns() {
        let (f, o) = saddle();
        let report = run_pipeline(&f, &o, &quick()).unwrap();
        let mut buf = Vec::new();
        write_iterates_csv(&report.iterates, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&header[..8], &["n", "re_theta_n", "im_theta_n", "H_max", "R_n", "speed_at_0", "max_speed_half_disc", "injectivity_min_gap"]);
        assert_eq!(lines.count(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn mobius_chain_holds_for_arbitrary_centres(tr in -0.9f64..0.9, ti in -0.3f64..0.3, zr in -0.45f64..0.45, zi in -0.45f64..0.45) {
            let ch = chart();
            let mut r = Rescaling::new(&ch, 1, ch.rho);
            let centre = C64::new(tr, ti) * 1e-3;
            r.theta_n = centre;
            let zeta = C64::new(zr, zi) * 1e-3;
            let lhs = r.g_speed(zeta).unwrap() * (1.0 - zeta.norm_sqr());
            let mu = r.recentre(&zeta);
            let rhs = r.phi_speed(mu).unwrap() * (1.0 - mu.norm_sqr());
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(rhs));
        }
    }
}
