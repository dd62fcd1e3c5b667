//! Critical intensities: the values of `lambda` at which a new zero-energy
//! bound state of angular momentum `l` appears.
//!
//! At `eps = 0` the point at infinity degenerates from irregular to regular
//! singular; the indicial equation there has the exponent pair `{l+1, -l}`.
//! The solution regular at the origin, seeded from the subdominant origin
//! series and carried outward by adaptive Runge-Kutta integration, is
//! resolved at a large fit radius against the two Frobenius solutions
//! (leading powers plus their `z^-4` correction ladder). A new state appears
//! exactly where the coefficient of the growing power crosses zero, so the
//! criticals are located by a scan-and-bisect on that coefficient's sign.

use crate::error::{Error, Result};
use crate::ode::{integrate, OdeOptions};
use crate::problem::{exponent_coefficients, make_problem, NumericsConfig, ProblemSpec};
use crate::thome::{eval_origin_scaled, origin_series};
use rug::Float;

/// One located critical intensity.
#[derive(Clone, Debug)]
pub struct CriticalResult {
    pub l: i64,
    /// Which appearance for this `l`, counted from 1.
    pub index: u32,
    pub lambda_crit: f64,
    /// Normalized growth coefficient at the reported intensity.
    pub growth_residual: f64,
}

/// Fit radius for resolving the solution against the Frobenius pair. Far
/// enough out that the correction ladder below truncates at 10^-15 relative
/// for every intensity the scan visits.
const Z_FIT: f64 = 24.0;

/// Highest correction order `z^-k` kept in the Frobenius solutions.
const K_MAX: i64 = 20;

/// Seed radii tried largest-first; the origin series estimate decides.
const SEED_CANDIDATES: &[f64] = &[
    0.85, 0.78, 0.72, 0.66, 0.60, 0.54, 0.48, 0.42, 0.36, 0.30, 0.25,
];
const SEED_EST_TOL: f64 = 1e-12;

/// Bisection target on the critical intensity itself.
const LAMBDA_TOL: f64 = 1e-6;

/// Scan steps: criticals sit at least ~6 apart in lambda everywhere the
/// five-per-l table reaches, and the spacing grows with lambda.
const SCAN_START: f64 = 0.75;
const SCAN_STEP_LOW: f64 = 0.5;
const SCAN_STEP_HIGH: f64 = 2.0;
const SCAN_SPLIT: f64 = 100.0;

/// Normalized coefficient of the growing Frobenius solution `z^{l+1}` in the
/// outward-integrated regular solution at `eps = 0`.
///
/// The return value is `A / sqrt(A^2 + B^2)` where `A` multiplies the growing
/// solution and `B` the decaying one, making the result invariant under the
/// (arbitrary) seed scale, bounded, and zero exactly at the criticals.
pub fn growth_coefficient(cfg: &NumericsConfig, lambda: f64, l: i64) -> Result<Float> {
    growth_coefficient_at(cfg, lambda, l, Z_FIT)
}

/// `growth_coefficient` with an explicit fit radius, for stability probes:
/// the result must be insensitive to `z_fit` once the Frobenius corrections
/// have converged there.
pub fn growth_coefficient_at(
    cfg: &NumericsConfig,
    lambda: f64,
    l: i64,
    z_fit: f64,
) -> Result<Float> {
    let spec = make_problem(lambda, l, 0.0, cfg.clone())?;
    if !(z_fit >= 12.0) {
        return Err(Error::Config(format!(
            "fit radius {z_fit} too small for the correction ladder"
        )));
    }
    let p = spec.prec();

    // Seed the regular solution from the subdominant origin series at the
    // largest radius where the series still resolves it cleanly. Any overall
    // scale (the suppressed exponential prefactor included) divides out of
    // the normalized coefficient.
    let ex = exponent_coefficients(&spec);
    let ser = origin_series(&spec, &ex.beta5);
    let mut seed = None;
    for &z0 in SEED_CANDIDATES {
        let sp = eval_origin_scaled(&ser, &spec.re(z0));
        if sp.rel_est < SEED_EST_TOL {
            seed = Some((z0, sp));
            break;
        }
    }
    let (z0, sp) = seed.ok_or_else(|| {
        Error::TruncationExhausted(format!(
            "origin series resolves no seed radius at lambda = {lambda}"
        ))
    })?;

    let y0 = vec![sp.value.re.clone(), sp.deriv.re.clone()];
    let q = |z: &Float, y: &[Float], dy: &mut [Float]| {
        use rug::Assign;
        let zi = Float::with_val(p, z.recip_ref());
        let zi2 = Float::with_val(p, zi.square_ref());
        let zi4 = Float::with_val(p, zi2.square_ref());
        let zi6 = Float::with_val(p, &zi4 * &zi2);
        let zi12 = Float::with_val(p, zi6.square_ref());
        let mut qv = Float::with_val(p, &spec.lambda * &zi12);
        qv -= Float::with_val(p, 2u32 * &spec.lambda) * &zi6;
        qv += spec.l_term() * &zi2;
        dy[0].assign(&y[1]);
        dy[1].assign(&qv * &y[0]);
    };
    // The wall limits the step to ~rtol^(1/5)/sqrt(q); start well below that
    // and let the controller climb.
    let q0 = lambda * z0.powi(-12);
    let opt = OdeOptions {
        rtol: 1e-12,
        atol: 1e-60,
        h_init: 1e-4 / q0.sqrt().max(1.0),
        h_max: 1.0,
        max_steps: 4_000_000,
        norm_control: true,
    };
    let yf = integrate(q, &spec.re(z0), &spec.re(z_fit), y0, &opt, p)?;

    let zf = spec.re(z_fit);
    let (u1, d1) = frobenius_at(&spec, l + 1, &zf);
    let (u2, d2) = frobenius_at(&spec, -l, &zf);
    // Wronskian extraction of w = A u1 + B u2 from (w, w') at the fit point.
    let mut den = Float::with_val(p, &u1 * &d2);
    den -= Float::with_val(p, &d1 * &u2);
    if den.is_zero() {
        return Err(Error::SingularSystem(
            "frobenius pair degenerate at the fit radius".into(),
        ));
    }
    let mut a = Float::with_val(p, &yf[0] * &d2);
    a -= Float::with_val(p, &yf[1] * &u2);
    a /= &den;
    let mut b = Float::with_val(p, &u1 * &yf[1]);
    b -= Float::with_val(p, &d1 * &yf[0]);
    b /= &den;

    let mut h = Float::with_val(p, a.square_ref());
    h += Float::with_val(p, b.square_ref());
    h.sqrt_mut();
    if h.is_zero() {
        return Err(Error::SingularSystem(
            "integrated solution vanished at the fit radius".into(),
        ));
    }
    Ok(a / &h)
}

/// Value and derivative of the Frobenius solution `z^s (1 + sum e_k z^-k)`
/// of the `eps = 0` equation, corrections through `z^-K_MAX`.
///
/// The ladder `[(s-k)(s-k-1) - l(l+1)] e_k = -2 lambda e_{k-4} + lambda e_{k-10}`
/// populates only `k` in `{0, 4, 8, 10, 12, ...}`; the resonant-looking
/// denominator at `k = 2s-1` is never reached because those `k` are odd.
fn frobenius_at(spec: &ProblemSpec, s: i64, z: &Float) -> (Float, Float) {
    let p = spec.prec();
    let ll = spec.l_term();
    let mut e: Vec<Float> = Vec::with_capacity(K_MAX as usize + 1);
    e.push(Float::with_val(p, 1));
    for k in 1..=K_MAX {
        let mut num = Float::with_val(p, 0);
        let mut hit = false;
        if k >= 4 && !e[(k - 4) as usize].is_zero() {
            num -= Float::with_val(p, 2u32 * &spec.lambda) * &e[(k - 4) as usize];
            hit = true;
        }
        if k >= 10 && !e[(k - 10) as usize].is_zero() {
            num += Float::with_val(p, &spec.lambda * &e[(k - 10) as usize]);
            hit = true;
        }
        if !hit {
            e.push(Float::with_val(p, 0));
            continue;
        }
        let mut dnm = Float::with_val(p, (s - k) * (s - k - 1));
        dnm -= &ll;
        e.push(num / dnm);
    }
    let zi = Float::with_val(p, z.recip_ref());
    let mut val = Float::with_val(p, 0);
    let mut der = Float::with_val(p, 0);
    let mut pw = Float::with_val(p, 1);
    for (k, ek) in e.iter().enumerate() {
        if !ek.is_zero() {
            val += Float::with_val(p, ek * &pw);
            let sk = Float::with_val(p, s - k as i64);
            der += Float::with_val(p, ek * &pw) * sk;
        }
        pw *= &zi;
    }
    // z^s and z^{s-1} prefactors; s may be negative.
    let lnz = Float::with_val(p, z.ln_ref());
    let zs = Float::with_val(p, &lnz * s).exp();
    let zs1 = Float::with_val(p, &zs * &zi);
    (val * &zs, der * &zs1)
}

/// Scans `lambda` upward and returns the first `count` criticals for `l`,
/// each refined by bisection to better than `LAMBDA_TOL`. The list is shorter
/// than `count` only if the scan cap is exhausted.
pub fn critical_intensities(
    cfg: &NumericsConfig,
    l: i64,
    count: u32,
) -> Result<Vec<CriticalResult>> {
    if l < 0 {
        return Err(Error::Domain(format!("angular momentum must be >= 0, got {l}")));
    }
    let mut out = Vec::new();
    if count == 0 {
        return Ok(out);
    }
    // Empirical envelope: sqrt(lambda_crit) grows linearly in the appearance
    // index with slope ~4.2 and offset ~l, so this cap comfortably covers
    // the requested count.
    let cap = (4.3 * count as f64 + 1.1 * l as f64 + 1.0).powi(2) * 1.35 + 25.0;

    let mut lam_prev = SCAN_START;
    let mut g_prev = growth_coefficient(cfg, lam_prev, l)?.to_f64();
    while (out.len() as u32) < count {
        let step = if lam_prev < SCAN_SPLIT {
            SCAN_STEP_LOW
        } else {
            SCAN_STEP_HIGH
        };
        let lam = lam_prev + step;
        if lam > cap {
            break;
        }
        let g = growth_coefficient(cfg, lam, l)?.to_f64();
        if g == 0.0 || g.signum() != g_prev.signum() {
            let (lc, gc) = bisect_growth(cfg, l, lam_prev, lam, g_prev, g)?;
            out.push(CriticalResult {
                l,
                index: out.len() as u32 + 1,
                lambda_crit: lc,
                growth_residual: gc,
            });
        }
        lam_prev = lam;
        g_prev = g;
    }
    Ok(out)
}

fn bisect_growth(
    cfg: &NumericsConfig,
    l: i64,
    mut lo: f64,
    mut hi: f64,
    mut g_lo: f64,
    g_hi: f64,
) -> Result<(f64, f64)> {
    debug_assert!(g_lo.signum() != g_hi.signum() || g_hi == 0.0);
    let mut g_mid = g_hi;
    while hi - lo > LAMBDA_TOL {
        let mid = 0.5 * (lo + hi);
        g_mid = growth_coefficient(cfg, mid, l)?.to_f64();
        if g_mid == 0.0 {
            return Ok((mid, g_mid));
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), g_mid))
}
