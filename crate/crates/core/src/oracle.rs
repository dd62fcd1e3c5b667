//! Finite-difference cross-check of the series machinery.
//!
//! A Numerov shooting solver for the same eigenproblem on a uniform grid in
//! `t = ln z`, which resolves the steep repulsive wall and the slow outer
//! tail with one step size. Substituting `w = sqrt(z) W` removes the first
//! derivative: `W'' = [lambda e^{-10t} - 2 lambda e^{-4t} + (l+1/2)^2
//! - eps e^{2t}] W`. The solver shares nothing with the Floquet/connection
//! pipeline except the seed series at the two singular points, so an
//! agreement failure localizes errors to one side or the other.

use crate::error::{Error, Result};
use crate::problem::{exponent_coefficients, make_problem, NumericsConfig, ProblemSpec};
use crate::spectrum::{wavefunction, BoundState};
use crate::thome::{eval_infinity, eval_origin_scaled, infinity_series, origin_series};
use rug::Float;

/// Domain truncation and grid resolution for the shooting solver.
#[derive(Clone, Debug)]
pub struct OracleConfig {
    /// Inner truncation; the origin-series seed estimate must be tiny here.
    pub z_min: f64,
    /// Outer truncation; the decaying exponential must underflow the target
    /// tolerance between here and the outermost wave-function structure.
    pub z_max: f64,
    /// Grid intervals at the base resolution (the refined pass doubles this).
    pub points: usize,
    /// Log-derivative matching point, inside the potential well.
    pub match_z: f64,
    /// Working mantissa width. The wall spans hundreds of orders of
    /// magnitude, so double precision would overflow before matching.
    pub precision_bits: u32,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            z_min: 0.35,
            z_max: 25.0,
            points: 40_000,
            match_z: 1.2,
            precision_bits: 113,
        }
    }
}

/// Converged oracle energy with its grid diagnostics.
#[derive(Clone, Debug)]
pub struct OracleEnergy {
    /// Richardson extrapolation of the two passes (the method is O(h^4)).
    pub epsilon: f64,
    pub eps_coarse: f64,
    pub eps_fine: f64,
    /// Set when halving h moved the eigenvalue by more than 10^-6: the base
    /// grid is then too coarse for the extrapolation to be trusted blindly.
    pub grid_warning: bool,
}

/// Deviation report between a solved bound state and the oracle solution.
#[derive(Clone, Debug)]
pub struct OracleCompare {
    /// Largest `|w_oracle - w_exact| / max|w_exact|` over the sampled grid.
    pub max_dev: f64,
    /// Abscissa of the largest deviation.
    pub max_dev_z: f64,
    /// |oracle norm integral - 1|, an independent quadrature of the exact
    /// method's normalization.
    pub norm_gap: f64,
    /// Down-sampled `(z, deviation)` profile.
    pub devs: Vec<(f64, f64)>,
}

/// One shooting grid: everything that does not depend on the energy.
struct Grid {
    p: u32,
    n: usize,
    h: Float,
    /// z at every node.
    z: Vec<Float>,
    /// Energy-free part of the Numerov coefficient, lambda e^{-10t}
    /// - 2 lambda e^{-4t} + (l+1/2)^2.
    pot: Vec<Float>,
    /// e^{2t}, multiplying -eps.
    zsq: Vec<Float>,
    /// Matching node.
    m: usize,
}

fn build_grid(ocfg: &OracleConfig, lambda: f64, l: i64, points: usize) -> Result<Grid> {
    if !(ocfg.z_min > 0.0 && ocfg.z_max > ocfg.z_min) {
        return Err(Error::Config("oracle domain must satisfy 0 < z_min < z_max".into()));
    }
    if !(ocfg.match_z > ocfg.z_min && ocfg.match_z < ocfg.z_max) {
        return Err(Error::Config("oracle match_z must lie inside the domain".into()));
    }
    if points < 64 {
        return Err(Error::Config("oracle grid too coarse".into()));
    }
    let p = ocfg.precision_bits;
    let n = points + (points % 2); // even interval count for Simpson weights
    let t0 = Float::with_val(p, ocfg.z_min).ln();
    let t1 = Float::with_val(p, ocfg.z_max).ln();
    let h = Float::with_val(p, &t1 - &t0) / Float::with_val(p, n as u32);
    let lam = Float::with_val(p, lambda);
    let lhalf = Float::with_val(p, l as f64 + 0.5);
    let lterm = Float::with_val(p, lhalf.square_ref());
    let mut z = Vec::with_capacity(n + 1);
    let mut pot = Vec::with_capacity(n + 1);
    let mut zsq = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = Float::with_val(p, &h * (k as u32)) + &t0;
        let zk = t.clone().exp();
        let e2 = Float::with_val(p, zk.square_ref());
        let em2 = Float::with_val(p, e2.recip_ref());
        let em4 = Float::with_val(p, em2.square_ref());
        let em8 = Float::with_val(p, em4.square_ref());
        let em10 = Float::with_val(p, &em8 * &em2);
        let mut pk = Float::with_val(p, &lam * &em10);
        pk -= Float::with_val(p, 2u32 * &lam) * &em4;
        pk += &lterm;
        z.push(zk);
        pot.push(pk);
        zsq.push(e2);
    }
    let mz = Float::with_val(p, ocfg.match_z).ln();
    let m = (Float::with_val(p, &mz - &t0) / &h)
        .to_f64()
        .round()
        .clamp(2.0, (n - 2) as f64) as usize;
    Ok(Grid { p, n, h, z, pot, zsq, m })
}

/// Numerov sweep of `W'' = f W` over `idx` (a contiguous run of nodes in
/// either direction), seeded with the first two values.
fn numerov(grid: &Grid, f: &[Float], idx: impl Iterator<Item = usize>, w0: Float, w1: Float) -> Vec<Float> {
    let p = grid.p;
    let h2_12 = Float::with_val(p, grid.h.square_ref()) / 12u32;
    let t = |k: usize| -> Float { Float::with_val(p, &h2_12 * &f[k]) };
    let mut out = vec![w0, w1];
    let mut nodes: Vec<usize> = idx.collect();
    let (k0, k1) = (nodes[0], nodes[1]);
    let mut t_prev = t(k0);
    let mut t_cur = t(k1);
    nodes.drain(..2);
    for k in nodes {
        let t_next = t(k);
        let len = out.len();
        let mut rhs = Float::with_val(p, 10u32 * &t_cur) + 2u32;
        rhs *= &out[len - 1];
        let mut back = Float::with_val(p, 1u32) - &t_prev;
        back *= &out[len - 2];
        rhs -= &back;
        let den = Float::with_val(p, 1u32) - &t_next;
        out.push(rhs / den);
        t_prev = t_cur;
        t_cur = t_next;
    }
    out
}

/// Outward and inward sweeps at one energy. Returns the outward values on
/// `0..=m+1` and the inward values on `m..=n` (inward-first order reversed
/// into ascending node order).
fn shoot(grid: &Grid, spec: &ProblemSpec, eps: f64) -> Result<(Vec<Float>, Vec<Float>)> {
    let p = grid.p;
    let n = grid.n;
    let f: Vec<Float> = (0..=n)
        .map(|k| {
            let mut fk = Float::with_val(p, &grid.zsq[k] * eps);
            fk = Float::with_val(p, &grid.pot[k] - &fk);
            fk
        })
        .collect();

    // Outward seeds from the subdominant origin series. The two nodes carry
    // different removed prefactors e^{beta z^-5/5}; only their ratio matters
    // and it is a modest number for adjacent nodes.
    let ex = exponent_coefficients(spec);
    let ser5 = origin_series(spec, &ex.beta5);
    let s0 = eval_origin_scaled(&ser5, &grid.z[0]);
    let s1 = eval_origin_scaled(&ser5, &grid.z[1]);
    if s0.rel_est > 1e-10 || s1.rel_est > 1e-10 {
        return Err(Error::TruncationExhausted(format!(
            "origin seed estimate {:e} at z_min = {}",
            s0.rel_est.max(s1.rel_est),
            grid.z[0].to_f64()
        )));
    }
    let zm5 = |z: &Float| -> Float {
        let z2 = Float::with_val(p, z.square_ref());
        let z4 = Float::with_val(p, z2.square_ref());
        Float::with_val(p, &z4 * z).recip()
    };
    let mut darg = Float::with_val(p, zm5(&grid.z[1]) - zm5(&grid.z[0]));
    darg *= &ex.beta5.re;
    darg /= 5u32;
    let ratio = darg.exp();
    let rz0 = Float::with_val(p, grid.z[0].sqrt_ref());
    let rz1 = Float::with_val(p, grid.z[1].sqrt_ref());
    let w0 = Float::with_val(p, &s0.value.re / &rz0);
    let w1 = Float::with_val(p, &s1.value.re * &ratio) / &rz1;
    let out = numerov(grid, &f, 0..=grid.m + 1, w0, w1);

    // Inward seeds from the recessive infinity series, exponential included;
    // representable at this precision however deep the underflow.
    let ser3 = infinity_series(spec, &ex.alpha3);
    let vn = eval_infinity(&ser3, &grid.z[n]);
    let vn1 = eval_infinity(&ser3, &grid.z[n - 1]);
    if vn.rel_est > 1e-10 || vn1.rel_est > 1e-10 {
        return Err(Error::TruncationExhausted(format!(
            "infinity seed estimate {:e} at z_max = {}",
            vn.rel_est.max(vn1.rel_est),
            grid.z[n].to_f64()
        )));
    }
    let rzn = Float::with_val(p, grid.z[n].sqrt_ref());
    let rzn1 = Float::with_val(p, grid.z[n - 1].sqrt_ref());
    let wn = Float::with_val(p, &vn.value.re / &rzn);
    let wn1 = Float::with_val(p, &vn1.value.re / &rzn1);
    let mut inw = numerov(grid, &f, (grid.m..=n).rev(), wn, wn1);
    inw.reverse();
    Ok((out, inw))
}

/// Normalized antisymmetric match defect at the matching node; a sign change
/// in `eps` brackets an eigenvalue of the discretized problem.
fn mismatch(grid: &Grid, spec: &ProblemSpec, eps: f64) -> Result<f64> {
    let p = grid.p;
    let (out, inw) = shoot(grid, spec, eps)?;
    let om = &out[grid.m];
    let om1 = &out[grid.m + 1];
    let im = &inw[0];
    let im1 = &inw[1];
    let a = Float::with_val(p, om * im1);
    let b = Float::with_val(p, om1 * im);
    let num = Float::with_val(p, &a - &b);
    let den = Float::with_val(p, a.abs_ref()) + Float::with_val(p, b.abs_ref());
    if den.is_zero() {
        return Err(Error::SingularSystem("both shooting branches vanished".into()));
    }
    Ok(Float::with_val(p, &num / &den).to_f64())
}

fn spec_at(ocfg: &OracleConfig, lambda: f64, l: i64, eps: f64) -> Result<ProblemSpec> {
    let cfg = NumericsConfig {
        precision_bits: ocfg.precision_bits,
        ..NumericsConfig::default()
    };
    make_problem(lambda, l, eps, cfg)
}

fn bisect_on_grid(
    grid: &Grid,
    ocfg: &OracleConfig,
    lambda: f64,
    l: i64,
    bracket: (f64, f64),
) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi && hi < 0.0) {
        return Err(Error::Domain(format!("oracle bracket ({lo}, {hi}) must satisfy lo < hi < 0")));
    }
    let mut d_lo = mismatch(grid, &spec_at(ocfg, lambda, l, lo)?, lo)?;
    let d_hi = mismatch(grid, &spec_at(ocfg, lambda, l, hi)?, hi)?;
    if d_lo == 0.0 {
        return Ok(lo);
    }
    if d_hi == 0.0 {
        return Ok(hi);
    }
    if d_lo.signum() == d_hi.signum() {
        return Err(Error::NoSignChange(format!(
            "oracle defect has one sign on ({lo}, {hi}): {d_lo:e} and {d_hi:e}"
        )));
    }
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // f64 resolution reached
        }
        let d = mismatch(grid, &spec_at(ocfg, lambda, l, mid)?, mid)?;
        if d == 0.0 {
            return Ok(mid);
        }
        if d.signum() == d_lo.signum() {
            lo = mid;
            d_lo = d;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * lo.abs().max(1e-6) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Eigenvalue of the shooting problem inside `bracket`, solved on the base
/// grid and on a half-step grid, Richardson-extrapolated.
pub fn oracle_energy(
    ocfg: &OracleConfig,
    lambda: f64,
    l: i64,
    bracket: (f64, f64),
) -> Result<OracleEnergy> {
    let coarse = build_grid(ocfg, lambda, l, ocfg.points)?;
    let eps_coarse = bisect_on_grid(&coarse, ocfg, lambda, l, bracket)?;
    drop(coarse);
    let fine = build_grid(ocfg, lambda, l, ocfg.points * 2)?;
    // The coarse solution pins the root far more tightly than the grids
    // disagree, so a hair of slack around it brackets the fine root too.
    let slack = 256.0 * (eps_coarse - bracket.0).max(bracket.1 - eps_coarse) * f64::EPSILON
        + 1e-4 * eps_coarse.abs().max(1e-3);
    let fine_bracket = (
        (eps_coarse - slack).max(bracket.0),
        (eps_coarse + slack).min(bracket.1),
    );
    let eps_fine = bisect_on_grid(&fine, ocfg, lambda, l, fine_bracket)?;
    let epsilon = (16.0 * eps_fine - eps_coarse) / 15.0;
    Ok(OracleEnergy {
        epsilon,
        eps_coarse,
        eps_fine,
        grid_warning: (eps_fine - eps_coarse).abs() > 1e-6,
    })
}

/// Glued oracle wave function at the state's energy versus the exact one,
/// both on the oracle grid, identically normalized: the oracle solution is
/// scaled to match the exact value at the oracle's peak node, then compared
/// pointwise (relative to the peak) and through its norm integral.
pub fn oracle_wavefunction_compare(
    state: &BoundState,
    ocfg: &OracleConfig,
) -> Result<OracleCompare> {
    let lambda = state.spec.lambda.to_f64();
    let l = state.spec.l as i64;
    let eps = state.spec.epsilon.to_f64();
    let p = ocfg.precision_bits;
    let grid = build_grid(ocfg, lambda, l, ocfg.points)?;
    let spec = spec_at(ocfg, lambda, l, eps)?;
    let (out, inw) = shoot(&grid, &spec, eps)?;

    // Glue scale from the matching node; the defect there is the residual of
    // the exact method's eigenvalue on this grid, far below the comparison
    // tolerances.
    if inw[0].is_zero() {
        return Err(Error::SingularSystem("inward branch vanished at the match node".into()));
    }
    let glue = Float::with_val(p, &out[grid.m] / &inw[0]);
    let mut w: Vec<Float> = Vec::with_capacity(grid.n + 1);
    for (k, zk) in grid.z.iter().enumerate() {
        let rz = Float::with_val(p, zk.sqrt_ref());
        let base = if k <= grid.m {
            out[k].clone()
        } else {
            Float::with_val(p, &inw[k - grid.m] * &glue)
        };
        w.push(base * &rz);
    }

    // Peak node and common scale against the exact wave function there.
    let mut peak = 0usize;
    for k in 0..=grid.n {
        if w[k].clone().abs() > w[peak].clone().abs() {
            peak = k;
        }
    }
    let exact_peak = wavefunction(state, &grid.z[peak])?;
    if w[peak].is_zero() {
        return Err(Error::SingularSystem("oracle solution vanished everywhere".into()));
    }
    let scale = Float::with_val(p, &exact_peak / &w[peak]);
    let peak_mag = exact_peak.to_f64().abs();

    // Pointwise deviations on a thinned grid; wave-function evaluation is a
    // full series sum per point while the oracle is already tabulated.
    let stride = (grid.n / 240).max(1);
    let mut devs = Vec::new();
    let mut max_dev = 0.0f64;
    let mut max_dev_z = grid.z[0].to_f64();
    for k in (0..=grid.n).step_by(stride) {
        let zf = grid.z[k].to_f64();
        let exact = wavefunction(state, &grid.z[k])?;
        let mut dev = Float::with_val(p, &w[k] * &scale);
        dev -= &exact;
        let d = dev.to_f64().abs() / peak_mag;
        devs.push((zf, d));
        if d > max_dev {
            max_dev = d;
            max_dev_z = zf;
        }
    }

    // Simpson norm of the scaled oracle solution: integrand w^2 z on the
    // uniform t grid (dz = z dt).
    let mut simpson = Float::with_val(p, 0);
    for (k, wk) in w.iter().enumerate() {
        let coef: u32 = if k == 0 || k == grid.n {
            1
        } else if k % 2 == 1 {
            4
        } else {
            2
        };
        let mut term = Float::with_val(p, wk.square_ref());
        term *= &grid.z[k];
        term *= coef;
        simpson += &term;
    }
    simpson *= &grid.h;
    simpson /= 3u32;
    simpson *= Float::with_val(p, scale.square_ref());
    let norm_gap = (simpson.to_f64() - 1.0).abs();

    Ok(OracleCompare {
        max_dev,
        max_dev_z,
        norm_gap,
        devs,
    })
}
