//! Bound states: quantization roots, mixing coefficients, and normalized
//! three-region wave functions.
//!
//! A bound energy is one where some combination of the two Floquet solutions
//! is recessive at both singular points at once. In connection-factor terms
//! that is the vanishing of `T14 T26 - T24 T16`; the mixing coefficients
//! below then produce the decaying combination `A1 w1 + A2 w2`, which is the
//! wave function. Evaluation dispatches between the regular origin series,
//! the Laurent pair, and the regular infinity series, with validity windows
//! measured from the error estimates each representation reports.

use std::cell::Cell;

use rug::Float;

use crate::connection::{connection_factors, factors_and_basis, Basis, ConnectionFactors};
use crate::error::{Error, Result};
use crate::floquet::{
    evaluate_floquet, floquet_pair, floquet_pair_seeded, FloquetPair, IndexRegime,
};
use crate::num::Cx;
use crate::problem::{exponent_coefficients, make_problem, NumericsConfig, ProblemSpec};
use crate::quad::{integrate_opts, QuadOptions};
use crate::thome::{eval_infinity, eval_origin};

fn eps_of(p: u32) -> f64 {
    2f64.powi(1 - p.min(1000) as i32)
}

/// Real-valued reduction of the quantization determinant
/// `T14 T26 - T24 T16`, divided by `|T14||T26| + |T24||T16|` so values stay
/// O(1) across an energy scan. Zeros are the bound states.
///
/// In the conjugate regime row 2 is the conjugate of row 1, the determinant
/// is purely imaginary and its imaginary part is taken; in the real regime
/// the determinant is real. Either reduction still inherits the arbitrary
/// labeling of the pair: renormalizing a solution's sign or swapping the two
/// negates the determinant without moving its zeros, and the peak
/// normalization does flip signs between nearby energies. The mixing
/// determinant `T13 T24 - T23 T14` transforms identically and never vanishes
/// for an independent pair, so multiplying by its sign cancels the labeling
/// and leaves a function of energy alone, continuous within a regime. The
/// two regime branches agree only up to sign near a regime boundary, so
/// scans never bracket a root across one.
pub fn quantization_of(factors: &ConnectionFactors, regime: IndexRegime) -> Float {
    let t14 = factors.t(1, 4);
    let t16 = factors.t(1, 6);
    let t24 = factors.t(2, 4);
    let t26 = factors.t(2, 6);
    let p = t14.prec();
    let mut scale = Float::with_val(p, t14.abs() * t26.abs());
    scale += t24.abs() * t16.abs();
    if scale.is_zero() {
        return Float::new(p);
    }
    let mut det = t14 * t26;
    det.sub_mul(t24, t16);
    let mut dm = factors.t(1, 3) * t24;
    dm.sub_mul(factors.t(2, 3), t14);
    let (raw, anchor) = match regime {
        IndexRegime::ConjugatePair => (det.im, dm.im),
        IndexRegime::RealPair => (det.re, dm.re),
    };
    let mut q = raw / scale;
    if anchor.is_sign_negative() && !anchor.is_zero() {
        q = -q;
    }
    q
}

/// Scaled quantization value at the spec's energy, from a fresh Floquet pair.
pub fn quantization_value(spec: &ProblemSpec) -> Result<Float> {
    let pair = floquet_pair(spec)?;
    let factors = connection_factors(spec, &pair)?;
    Ok(quantization_of(&factors, pair.regime))
}

/// One evaluation of the quantization function along an energy scan.
#[derive(Clone, Debug)]
pub struct QuantPoint {
    pub epsilon: Float,
    pub value: Float,
    pub regime: IndexRegime,
    /// Refined first index; the seed for neighbouring energies.
    pub nu1: Cx,
}

/// Scan-order evaluator that reuses the previous index as the refinement
/// seed for the next energy, falling back to a fresh circuit whenever the
/// seed fails, so one bad cell cannot poison the rest of the scan.
pub struct QuantizationTracker {
    base: ProblemSpec,
    seed: Option<Cx>,
}

impl QuantizationTracker {
    pub fn new(base: &ProblemSpec) -> Self {
        QuantizationTracker {
            base: base.clone(),
            seed: None,
        }
    }

    pub fn eval(&mut self, epsilon: &Float) -> Result<QuantPoint> {
        let spec = self.base.with_epsilon(epsilon.clone());
        let pair = match &self.seed {
            Some(nu) => floquet_pair_seeded(&spec, nu).or_else(|_| floquet_pair(&spec))?,
            None => floquet_pair(&spec)?,
        };
        self.seed = Some(pair.w1.nu.clone());
        let factors = connection_factors(&spec, &pair)?;
        Ok(QuantPoint {
            epsilon: spec.epsilon.clone(),
            value: quantization_of(&factors, pair.regime),
            regime: pair.regime,
            nu1: pair.w1.nu.clone(),
        })
    }

    #[cfg(test)]
    fn eval_f64(&mut self, epsilon: f64) -> Result<QuantPoint> {
        let e = self.base.re(epsilon);
        self.eval(&e)
    }
}

/// Mixing coefficients `A1 = T24 / D`, `A2 = -T14 / D` with
/// `D = T13 T24 - T23 T14`: the unique combination `A1 w1 + A2 w2` with unit
/// regular content and no divergent content at infinity. In the conjugate
/// regime `D` is purely imaginary and `A2 = conj(A1)` follows.
pub fn mixing_coefficients(factors: &ConnectionFactors) -> Result<(Cx, Cx)> {
    let t13 = factors.t(1, 3);
    let t14 = factors.t(1, 4);
    let t23 = factors.t(2, 3);
    let t24 = factors.t(2, 4);
    let p = t13.prec();
    let mut d = t13 * t24;
    d.sub_mul(t23, t14);
    let mut scale = Float::with_val(p, t13.abs() * t24.abs());
    scale += t23.abs() * t14.abs();
    let dm = d.abs().to_f64();
    let floor = (eps_of(p) * 1e3).max(1e-25);
    if dm <= scale.to_f64() * floor {
        return Err(Error::DegenerateDenominator(format!(
            "mixing denominator |D| = {dm:e} below {floor:e} of its term scale"
        )));
    }
    let a1 = t24 / &d;
    let q = t14 / &d;
    let a2 = -&q;
    Ok((a1, a2))
}

/// A located, assembled, normalized bound state.
#[derive(Clone)]
pub struct BoundState {
    /// Problem at the located energy.
    pub spec: ProblemSpec,
    /// Interior node count; position in the (lambda, l) ladder from below.
    pub state_index: u32,
    pub pair: FloquetPair,
    pub factors: ConnectionFactors,
    pub a1: Cx,
    pub a2: Cx,
    /// `A1 T15 + A2 T25`: coefficient of the regular origin solution in the
    /// inner representation.
    pub inner_coef: Cx,
    /// `A1 T16 + A2 T26`. Zero at an exact root; its residue times the
    /// divergent origin solution is what the middle representation carries
    /// beyond the inner one, and it caps middle validity near the origin.
    pub origin_residual: Cx,
    /// Normalization factor, positive: `norm^2 int u^2 = 1`.
    pub norm: Float,
    /// Peak of the normalized wave function; the scale against which
    /// near-node relative estimates are judged.
    pub peak: f64,
    /// Scaled quantization value at the located energy.
    pub quantization_residual: f64,
    /// Inner/middle dispatch point.
    pub z_inner: f64,
    /// Middle/outer dispatch point.
    pub z_outer: f64,
    /// (middle floor, inner ceiling) at the configured tolerance. Floor above
    /// ceiling means the two representations do not overlap at this precision
    /// and points between them evaluate only at reduced accuracy.
    pub inner_window: (f64, f64),
    /// (outer floor, middle ceiling); inverted likewise when the precision
    /// cannot carry the middle representation out to the outer floor.
    pub outer_window: (f64, f64),
    /// Quadrature endpoint past which the tail integral is analytic.
    pub z_tail: f64,
    basis: Basis,
}

/// Evaluation region of a point, by the state's dispatch boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Inner,
    Middle,
    Outer,
}

pub fn wavefunction_region(state: &BoundState, z: f64) -> Region {
    if z < state.z_inner {
        Region::Inner
    } else if z < state.z_outer {
        Region::Middle
    } else {
        Region::Outer
    }
}

/// Inner representation `(A1 T15 + A2 T25) w5(z)` without the normalization
/// factor, with its relative error estimate.
pub fn inner_value(state: &BoundState, z: &Float) -> (Float, f64) {
    let v = eval_origin(&state.basis.s5, z);
    let c = &state.inner_coef * &v.value;
    let mag = c.abs().to_f64();
    let mut est = v.rel_est;
    if mag > 0.0 {
        est = est.max((c.im.to_f64() / mag).abs());
    }
    (c.re, est)
}

/// Outer representation `w3(z)`, whose coefficient in the physical
/// combination is exactly 1, without the normalization factor.
pub fn outer_value(state: &BoundState, z: &Float) -> (Float, f64) {
    let v = eval_infinity(&state.basis.s3, z);
    (v.value.re, v.rel_est)
}

/// Middle representation `(A1 w1 + A2 w2)(z)` without the normalization
/// factor. The estimate combines window-edge leakage and cancellation inside
/// each Laurent sum, cancellation between the two terms (which grows like
/// exp(2 sqrt(-eps) z) as the recessive content at infinity emerges), the
/// imaginary residue, and the divergent-solution contamination
/// `|origin_residual| |w6|` left by the finite quantization residual (which
/// grows like exp(2 sqrt(lambda) z^-5 / 5) toward the origin).
pub fn middle_value(state: &BoundState, z: &Float) -> (Float, f64) {
    let ulp = eps_of(state.spec.prec());
    let v1 = evaluate_floquet(&state.pair.w1, z);
    let t1 = &state.a1 * &v1.value;
    let (value, pieces, mut est) = match state.pair.regime {
        IndexRegime::ConjugatePair => {
            // w2 = conj(w1) and A2 = conj(A1): the sum is 2 Re(A1 w1).
            let mut s = t1.re.clone();
            s <<= 1;
            let pieces = 2.0 * t1.abs().to_f64();
            let est = v1.edge_rel.max(v1.cond * ulp);
            (s, pieces, est)
        }
        IndexRegime::RealPair => {
            let v2 = evaluate_floquet(&state.pair.w2, z);
            let t2 = &state.a2 * &v2.value;
            let mut s = t1.clone();
            s += &t2;
            let pieces = t1.abs().to_f64() + t2.abs().to_f64();
            let mut est = v1.edge_rel.max(v2.edge_rel);
            est = est.max(v1.cond.max(v2.cond) * ulp);
            let mag = s.abs().to_f64();
            if mag > 0.0 {
                est = est.max((s.im.to_f64() / mag).abs());
            }
            (s.re, pieces, est)
        }
    };
    let vmag = value.to_f64().abs().max(f64::MIN_POSITIVE);
    if pieces > 0.0 {
        est = est.max(pieces / vmag * ulp);
    }
    // Divergent contamination only matters toward the origin.
    if z.to_f64() < 1.3 {
        let v6 = eval_origin(&state.basis.s6, z);
        let res = state.origin_residual.abs().to_f64() * v6.value.abs().to_f64();
        est = est.max(res / vmag);
    }
    (value, est)
}

fn candidate(state: &BoundState, z: &Float, r: Region) -> (Float, f64) {
    match r {
        Region::Inner => inner_value(state, z),
        Region::Middle => middle_value(state, z),
        Region::Outer => outer_value(state, z),
    }
}

/// Lowest-estimate representation at `z`: the dispatch region's first, the
/// other two consulted only when it misses `good_enough`.
fn best_value(state: &BoundState, z: &Float, good_enough: f64) -> (Float, f64) {
    let first = wavefunction_region(state, z.to_f64());
    let mut best = candidate(state, z, first);
    if !(best.1 <= good_enough) {
        for r in [Region::Inner, Region::Middle, Region::Outer] {
            if r == first {
                continue;
            }
            let c = candidate(state, z, r);
            if c.1 < best.1 || best.1.is_nan() {
                best = c;
            }
        }
    }
    best
}

/// Normalized wave function at `z > 0`. Real by construction and positive at
/// large `z`; the imaginary residue of the conjugate combination is folded
/// into the error estimate and discarded.
pub fn wavefunction(state: &BoundState, z: &Float) -> Result<Float> {
    if !(z.is_sign_positive() && !z.is_zero()) {
        return Err(Error::Domain(format!(
            "wave function requires z > 0, got {}",
            z.to_f64()
        )));
    }
    let tol = state.spec.cfg.wavefunction_tol;
    let (value, est) = best_value(state, z, tol);
    let scaled = Float::with_val(state.spec.prec(), &value * &state.norm);
    // Near a node the estimate is relative to a vanishing value; accept when
    // the implied absolute error is small against the wave-function peak.
    let abs_ok = est * scaled.to_f64().abs() <= tol * state.peak;
    if est <= tol || abs_ok {
        Ok(scaled)
    } else {
        Err(Error::PrecisionExhausted(format!(
            "no representation reaches {:.1e} at z = {} (best estimate {:.1e})",
            tol,
            z.to_f64(),
            est
        )))
    }
}

fn walk_down_first<F: Fn(f64) -> f64>(est: &F, start: f64, floor: f64, tol: f64) -> Option<f64> {
    let mut z = start;
    while z >= floor {
        if est(z) <= tol {
            return Some(z);
        }
        z *= 0.96;
    }
    None
}

fn walk_down_last<F: Fn(f64) -> f64>(est: &F, start: f64, floor: f64, tol: f64) -> Option<f64> {
    if !(est(start) <= tol) {
        return None;
    }
    let mut last = start;
    let mut z = start * 0.97;
    while z >= floor {
        if !(est(z) <= tol) {
            return Some(last);
        }
        last = z;
        z *= 0.97;
    }
    Some(last)
}

fn walk_up_first<F: Fn(f64) -> f64>(est: &F, start: f64, cap: f64, tol: f64) -> Option<f64> {
    let mut z = start;
    while z <= cap {
        if est(z) <= tol {
            return Some(z);
        }
        z *= 1.06;
    }
    None
}

fn walk_up_last<F: Fn(f64) -> f64>(est: &F, start: f64, cap: f64, tol: f64) -> Option<f64> {
    if !(est(start) <= tol) {
        return None;
    }
    let mut last = start;
    let mut z = start * 1.06;
    while z <= cap {
        if !(est(z) <= tol) {
            return Some(last);
        }
        last = z;
        z *= 1.06;
    }
    Some(last)
}

/// Walks each representation's error estimate to find where it meets the
/// configured tolerance, then places the dispatch boundaries at the geometric
/// means of the hand-off windows (of the gaps, when a window is inverted at
/// this precision).
fn set_boundaries(state: &mut BoundState) -> Result<()> {
    let tol = state.spec.cfg.wavefunction_tol;
    let p = state.spec.prec();
    let a3 = exponent_coefficients(&state.spec)
        .alpha3
        .re
        .to_f64()
        .abs();
    let s = &*state;
    let inner_est = |z: f64| inner_value(s, &Float::with_val(p, z)).1;
    let mid_est = |z: f64| middle_value(s, &Float::with_val(p, z)).1;
    let outer_est = |z: f64| outer_value(s, &Float::with_val(p, z)).1;

    let z_in_hi = walk_down_first(&inner_est, 1.5, 0.04, tol).ok_or_else(|| {
        Error::PrecisionExhausted("inner representation never reaches tolerance".into())
    })?;
    let mid_lo = walk_down_last(&mid_est, 1.0, 0.04, tol).unwrap_or(f64::INFINITY);
    let z_out_lo = walk_up_first(&outer_est, 1.5, 1e7, tol).ok_or_else(|| {
        Error::PrecisionExhausted("outer representation never reaches tolerance".into())
    })?;
    let z_mid_hi = walk_up_last(&mid_est, z_out_lo, z_out_lo * 8.0, tol)
        .or_else(|| walk_down_first(&mid_est, z_out_lo, 0.5, tol))
        .unwrap_or(1.0);

    state.inner_window = (mid_lo, z_in_hi);
    state.z_inner = if mid_lo.is_finite() {
        (mid_lo * z_in_hi).sqrt()
    } else {
        z_in_hi
    };
    state.outer_window = (z_out_lo, z_mid_hi);
    state.z_outer = (z_out_lo * z_mid_hi).sqrt();
    state.z_tail = state.z_outer + 35.0 / a3;
    Ok(())
}

/// Computes the normalization factor: `int u^2 = 1` over the three regions
/// plus an analytic exponential stub beyond `z_tail`. Mass below the inner
/// quadrature floor is under e^-120 of the inner peak factor and ignored;
/// the stub's series corrections are negligible against the whole integral
/// because the tail starts 35 e-foldings below the outer hand-off.
pub fn normalize(mut state: BoundState) -> Result<BoundState> {
    let p = state.spec.prec();
    state.norm = Float::with_val(p, 1);
    let a3 = exponent_coefficients(&state.spec)
        .alpha3
        .re
        .to_f64()
        .abs();
    let lam_rt = Float::with_val(p, state.spec.lambda.sqrt_ref()).to_f64();
    let mut z_floor = (2.0 * lam_rt / 600.0).powf(0.2);
    if z_floor >= state.z_inner {
        z_floor = state.z_inner * 0.7;
    }
    let opts = QuadOptions {
        rel_tol: state.spec.cfg.quad_tol,
        ..QuadOptions::default()
    };
    let peak = Cell::new(0.0f64);
    let s = &state;
    let track = |v: Float| -> Float {
        let m = v.to_f64().abs();
        if m > peak.get() {
            peak.set(m);
        }
        Float::with_val(p, v.square_ref())
    };
    let q1 = integrate_opts(
        |z: &Float| track(inner_value(s, z).0),
        &s.spec.re(z_floor),
        &s.spec.re(s.z_inner),
        &opts,
    )?;
    let q2 = integrate_opts(
        |z: &Float| track(middle_value(s, z).0),
        &s.spec.re(s.z_inner),
        &s.spec.re(s.z_outer),
        &opts,
    )?;
    let q3 = integrate_opts(
        |z: &Float| track(outer_value(s, z).0),
        &s.spec.re(s.z_outer),
        &s.spec.re(s.z_tail),
        &opts,
    )?;
    let u_tail = outer_value(s, &s.spec.re(s.z_tail)).0;
    let mut total = Float::with_val(p, &q1.value + &q2.value);
    total += &q3.value;
    let mut stub = Float::with_val(p, u_tail.square_ref());
    stub /= 2.0 * a3;
    total += &stub;
    if !(total.is_sign_positive() && !total.is_zero()) {
        return Err(Error::Inconsistency(format!(
            "normalization integral not positive: {:e}",
            total.to_f64()
        )));
    }
    let u_peak = peak.get();
    let norm = Float::with_val(p, total.sqrt_ref()).recip();
    state.peak = u_peak * norm.to_f64();
    state.norm = norm;
    Ok(state)
}

/// Interior nodes: sign changes over a log grid spanning both tunneling
/// walls. Samples whose estimate cannot pin the sign are skipped.
pub fn node_count(state: &BoundState) -> u32 {
    let p = state.spec.prec();
    let lam_rt = Float::with_val(p, state.spec.lambda.sqrt_ref()).to_f64();
    let a3 = exponent_coefficients(&state.spec)
        .alpha3
        .re
        .to_f64()
        .abs();
    // u is within e^-30 of zero at lo; no node sits deeper in either wall.
    let lo = (2.0 * lam_rt / 150.0).powf(0.2);
    let hi = state.z_outer + 3.0 / a3;
    let n = 240usize;
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    let mut count = 0u32;
    let mut prev_sign = 0i32;
    let mut z = lo;
    for _ in 0..n {
        let (v, est) = best_value(state, &Float::with_val(p, z), 0.25);
        let sign = if v.is_zero() || !(est < 0.25) {
            0
        } else if v.is_sign_positive() {
            1
        } else {
            -1
        };
        if sign != 0 {
            if prev_sign != 0 && sign != prev_sign {
                count += 1;
            }
            prev_sign = sign;
        }
        z *= ratio;
    }
    count
}

/// Tracker evaluation with one nudged retry, stepping over isolated
/// degenerate-index points by the configured exclusion width.
fn eval_guarded(tracker: &mut QuantizationTracker, eps: &Float) -> Result<QuantPoint> {
    match tracker.eval(eps) {
        Ok(pt) => Ok(pt),
        Err(e) => match e {
            Error::DegenerateIndices { .. }
            | Error::NonConvergence { .. }
            | Error::Divergence { .. }
            | Error::Inconsistency(_) => {
                let w = tracker.base.cfg.exclusion_width * eps.to_f64().abs().max(1.0);
                let mut nudged = Float::with_val(eps.prec(), eps + w);
                if !nudged.is_sign_negative() {
                    nudged = Float::with_val(eps.prec(), eps - w);
                }
                tracker.eval(&nudged)
            }
            other => Err(other),
        },
    }
}

/// Evaluates the grid, uniform in `sqrt(-eps)`, which tracks the WKB node
/// spacing better than a uniform energy grid. Failed cells are dropped from
/// the point list and reported.
fn scan_points(
    tracker: &mut QuantizationTracker,
    eps_lo: f64,
    eps_hi: f64,
    n: usize,
) -> (Vec<QuantPoint>, Vec<(f64, String)>) {
    let s_hi = (-eps_lo).sqrt();
    let s_lo = (-eps_hi).sqrt();
    let mut pts = Vec::with_capacity(n);
    let mut skipped = Vec::new();
    for k in 0..n {
        let t = k as f64 / (n - 1) as f64;
        let s = s_hi + (s_lo - s_hi) * t;
        let eps = -(s * s);
        let e = tracker.base.re(eps);
        match eval_guarded(tracker, &e) {
            Ok(pt) => pts.push(pt),
            Err(err) => skipped.push((eps, err.to_string())),
        }
    }
    (pts, skipped)
}

/// Bisection to 1e-3 of the energy scale, then secant with the bracket
/// maintained throughout. With `polish` the secant continues past `root_tol`
/// while the residual still halves: the limit is the connection-factor noise
/// floor, and a smaller residual linearly shrinks the divergent contamination
/// of the middle representation near the origin.
fn refine_root(
    tracker: &mut QuantizationTracker,
    lo: &QuantPoint,
    hi: &QuantPoint,
    polish: bool,
) -> Result<QuantPoint> {
    let p = tracker.base.prec();
    let root_tol = tracker.base.cfg.root_tol;
    let mut a = lo.clone();
    let mut b = hi.clone();
    if a.value.is_zero() {
        return Ok(a);
    }
    if b.value.is_zero() {
        return Ok(b);
    }
    let a_pos = a.value.is_sign_positive();
    if a_pos == b.value.is_sign_positive() {
        return Err(Error::NoSignChange(format!(
            "no sign change on [{}, {}]",
            a.epsilon.to_f64(),
            b.epsilon.to_f64()
        )));
    }
    let scale = a.epsilon.to_f64().abs().max(1.0);

    let coarse = 1e-3 * scale;
    loop {
        let width = Float::with_val(p, &b.epsilon - &a.epsilon).to_f64();
        if width <= coarse {
            break;
        }
        let mid = Float::with_val(p, &a.epsilon + &b.epsilon) / 2u32;
        let pt = eval_guarded(tracker, &mid)
            .map_err(|e| Error::RootRefinement(format!("bisection eval: {e}")))?;
        if pt.regime != a.regime {
            return Err(Error::RootRefinement("regime change inside a bracket".into()));
        }
        if pt.value.is_zero() {
            return Ok(pt);
        }
        if pt.value.is_sign_positive() == a_pos {
            a = pt;
        } else {
            b = pt;
        }
    }

    let (mut prev, mut cur) = {
        let am = Float::with_val(p, a.value.abs_ref());
        let bm = Float::with_val(p, b.value.abs_ref());
        if am < bm {
            (b.clone(), a.clone())
        } else {
            (a.clone(), b.clone())
        }
    };
    let tol_eps = root_tol * scale;
    let mut done = false;
    for _ in 0..80 {
        let denom = Float::with_val(p, &cur.value - &prev.value);
        let mut next = if denom.is_zero() {
            Float::with_val(p, &a.epsilon + &b.epsilon) / 2u32
        } else {
            let mut step = Float::with_val(p, &cur.epsilon - &prev.epsilon);
            step *= &cur.value;
            step /= &denom;
            Float::with_val(p, &cur.epsilon - &step)
        };
        if !(next > a.epsilon && next < b.epsilon) {
            next = Float::with_val(p, &a.epsilon + &b.epsilon) / 2u32;
        }
        let pt = eval_guarded(tracker, &next)
            .map_err(|e| Error::RootRefinement(format!("secant eval: {e}")))?;
        let moved = Float::with_val(p, &pt.epsilon - &cur.epsilon).to_f64().abs();
        if !pt.value.is_zero() && pt.value.is_sign_positive() == a_pos {
            a = pt.clone();
        } else {
            b = pt.clone();
        }
        prev = std::mem::replace(&mut cur, pt);
        if moved <= tol_eps || cur.value.is_zero() {
            done = true;
            break;
        }
    }
    if !done {
        return Err(Error::RootRefinement("secant failed to converge".into()));
    }

    let mut best = cur.clone();
    if polish {
        for _ in 0..25 {
            let denom = Float::with_val(p, &cur.value - &prev.value);
            if denom.is_zero() {
                break;
            }
            let mut step = Float::with_val(p, &cur.epsilon - &prev.epsilon);
            step *= &cur.value;
            step /= &denom;
            let next = Float::with_val(p, &cur.epsilon - &step);
            if step.is_zero() || !(next > a.epsilon && next < b.epsilon) {
                break;
            }
            let Ok(pt) = eval_guarded(tracker, &next) else {
                break;
            };
            if !pt.value.is_zero() && pt.value.is_sign_positive() == a_pos {
                a = pt.clone();
            } else {
                b = pt.clone();
            }
            prev = std::mem::replace(&mut cur, pt);
            let c = cur.value.to_f64().abs();
            let bv = best.value.to_f64().abs();
            if c < bv {
                best = cur.clone();
            }
            if !(c < 0.5 * bv) {
                break;
            }
        }
    }
    // Step-size convergence alone would also accept a jump discontinuity; a
    // true root must collapse the residual far below the bracket endpoints.
    let floor = lo.value.to_f64().abs().min(hi.value.to_f64().abs());
    let q_best = best.value.to_f64().abs();
    if q_best > (1e-3 * floor).max(tracker.base.cfg.quantization_tol) {
        return Err(Error::RootRefinement(format!(
            "residual {q_best:e} did not collapse inside the bracket"
        )));
    }
    Ok(best)
}

/// Full assembly at a refined root: seeded pair, factors, mixing, measured
/// region boundaries, normalization, and the node-count index.
fn assemble(base: &ProblemSpec, at: &QuantPoint) -> Result<BoundState> {
    let spec = base.with_epsilon(at.epsilon.clone());
    let pair = floquet_pair_seeded(&spec, &at.nu1)?;
    let (factors, basis) = factors_and_basis(&spec, &pair)?;
    let q = quantization_of(&factors, pair.regime).to_f64().abs();
    if q > spec.cfg.quantization_tol {
        return Err(Error::Inconsistency(format!(
            "quantization residual {q:e} above tolerance at the located root"
        )));
    }
    let (a1, a2) = mixing_coefficients(&factors)?;
    let mut inner_coef = &a1 * factors.t(1, 5);
    inner_coef.add_mul(&a2, factors.t(2, 5));
    let mut origin_residual = &a1 * factors.t(1, 6);
    origin_residual.add_mul(&a2, factors.t(2, 6));
    let p = spec.prec();
    let mut st = BoundState {
        spec,
        state_index: 0,
        pair,
        factors,
        a1,
        a2,
        inner_coef,
        origin_residual,
        norm: Float::with_val(p, 1),
        peak: 0.0,
        quantization_residual: q,
        z_inner: 0.0,
        z_outer: 0.0,
        inner_window: (0.0, 0.0),
        outer_window: (0.0, 0.0),
        z_tail: 0.0,
        basis,
    };
    set_boundaries(&mut st)?;
    let mut st = normalize(st)?;
    st.state_index = node_count(&st);
    Ok(st)
}

/// Scan outcome: assembled states plus per-cell diagnostics.
pub struct ScanReport {
    /// States ascending in energy.
    pub states: Vec<BoundState>,
    /// Grid energies whose evaluation failed even after the nudged retry.
    pub skipped: Vec<(f64, String)>,
    /// Brackets whose refinement or assembly failed, by midpoint energy.
    pub failures: Vec<(f64, String)>,
}

/// Scans the quantization function over `[eps_lo, eps_hi]`, brackets
/// same-regime sign changes, refines each by bisection-then-secant, and
/// assembles every root into a normalized state.
pub fn find_bound_states(
    base: &ProblemSpec,
    eps_lo: f64,
    eps_hi: f64,
    grid_points: usize,
) -> Result<ScanReport> {
    if !(eps_lo < eps_hi && eps_hi < 0.0) {
        return Err(Error::Domain(format!(
            "need eps_lo < eps_hi < 0, got [{eps_lo}, {eps_hi}]"
        )));
    }
    if grid_points < 50 {
        return Err(Error::Config(format!(
            "grid_points = {grid_points} below minimum 50"
        )));
    }
    let mut tracker = QuantizationTracker::new(base);
    let (pts, skipped) = scan_points(&mut tracker, eps_lo, eps_hi, grid_points);
    let mut report = ScanReport {
        states: Vec::new(),
        skipped,
        failures: Vec::new(),
    };
    for k in 1..pts.len() {
        let (x, y) = (&pts[k - 1], &pts[k]);
        if x.regime != y.regime
            || x.value.is_sign_positive() == y.value.is_sign_positive()
        {
            continue;
        }
        let mid = 0.5 * (x.epsilon.to_f64() + y.epsilon.to_f64());
        let rooted = refine_root(&mut tracker, x, y, true).and_then(|at| assemble(base, &at));
        match rooted {
            Ok(st) => report.states.push(st),
            Err(e) => report.failures.push((mid, e.to_string())),
        }
    }
    report
        .states
        .sort_by(|u, v| u.spec.epsilon.partial_cmp(&v.spec.epsilon).unwrap());
    report.states.dedup_by(|u, v| {
        (u.spec.epsilon.to_f64() - v.spec.epsilon.to_f64()).abs()
            < 1e-7 * u.spec.epsilon.to_f64().abs().max(1.0)
    });
    Ok(report)
}

/// One located state in a `(lambda, l)` sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumRow {
    pub lambda: f64,
    pub l: i64,
    pub state_index: u32,
    pub epsilon: f64,
}

/// Energies over a `lambda` grid for every requested angular momentum.
#[derive(Clone, Debug, Default)]
pub struct SpectrumDataset {
    /// Grouped by `(l, lambda)`; within a group, epsilon ascends with
    /// state_index.
    pub rows: Vec<SpectrumRow>,
    /// `(lambda, l, error)` for cells or roots that failed.
    pub failures: Vec<(f64, i64, String)>,
}

/// Root-only sweep over a `lambda` grid: locates every bound energy for each
/// `l` without assembling wave functions.
pub fn spectrum_dataset(
    cfg: &NumericsConfig,
    lambda_lo: f64,
    lambda_hi: f64,
    lambda_steps: usize,
    l_set: &[i64],
) -> Result<SpectrumDataset> {
    if !(lambda_lo > 0.0 && lambda_lo < lambda_hi) {
        return Err(Error::Domain(format!(
            "need 0 < lambda_lo < lambda_hi, got [{lambda_lo}, {lambda_hi}]"
        )));
    }
    if lambda_steps == 0 {
        return Err(Error::Config("lambda_steps must be positive".into()));
    }
    let mut out = SpectrumDataset::default();
    for &l in l_set {
        for k in 0..=lambda_steps {
            let lam = lambda_lo + (lambda_hi - lambda_lo) * k as f64 / lambda_steps as f64;
            match lambda_cell_roots(cfg, lam, l) {
                Ok((roots, root_errs)) => {
                    for (i, eps) in roots.into_iter().enumerate() {
                        out.rows.push(SpectrumRow {
                            lambda: lam,
                            l,
                            state_index: i as u32,
                            epsilon: eps,
                        });
                    }
                    for e in root_errs {
                        out.failures.push((lam, l, e));
                    }
                }
                Err(e) => out.failures.push((lam, l, e.to_string())),
            }
        }
    }
    Ok(out)
}

/// All quantization roots of one `(lambda, l)` cell over the full physical
/// range, ascending.
fn lambda_cell_roots(cfg: &NumericsConfig, lambda: f64, l: i64) -> Result<(Vec<f64>, Vec<String>)> {
    let eps_lo = -0.995 * lambda;
    let eps_hi = -1e-4;
    if eps_lo >= eps_hi {
        return Ok((Vec::new(), Vec::new()));
    }
    let base = make_problem(lambda, l, eps_lo, cfg.clone())?;
    let mut tracker = QuantizationTracker::new(&base);
    let (pts, _) = scan_points(&mut tracker, eps_lo, eps_hi, 40);
    let mut roots = Vec::new();
    let mut errs = Vec::new();
    for k in 1..pts.len() {
        let (x, y) = (&pts[k - 1], &pts[k]);
        if x.regime != y.regime
            || x.value.is_sign_positive() == y.value.is_sign_positive()
        {
            continue;
        }
        match refine_root(&mut tracker, x, y, false) {
            Ok(at) => roots.push(at.epsilon.to_f64()),
            Err(e) => errs.push(e.to_string()),
        }
    }
    roots.sort_by(|u, v| u.partial_cmp(v).unwrap());
    roots.dedup_by(|u, v| (*u - *v).abs() < 1e-7 * v.abs().max(1.0));
    Ok((roots, errs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;

    fn base40() -> ProblemSpec {
        make_problem(40.0, 0, -11.0, NumericsConfig::default()).unwrap()
    }

    #[test]
    fn quantization_brackets_the_reference_energy() {
        let base = base40();
        let mut tr = QuantizationTracker::new(&base);
        let at = tr.eval_f64(-11.909183).unwrap();
        assert_eq!(at.regime, IndexRegime::ConjugatePair);
        // The six-decimal reference energy leaves a slope-limited residual.
        assert!(at.value.to_f64().abs() < 1e-5, "q = {:e}", at.value.to_f64());
        let lo = tr.eval_f64(-11.959183).unwrap();
        let hi = tr.eval_f64(-11.859183).unwrap();
        assert_ne!(
            lo.value.is_sign_positive(),
            hi.value.is_sign_positive(),
            "reference energy not bracketed: {:e} .. {:e}",
            lo.value.to_f64(),
            hi.value.to_f64()
        );
    }

    #[test]
    fn tracker_matches_fresh_evaluation() {
        let base = base40();
        let mut tr = QuantizationTracker::new(&base);
        tr.eval_f64(-11.5).unwrap();
        let seeded = tr.eval_f64(-11.0).unwrap();
        let fresh = quantization_value(&base).unwrap();
        let d = (seeded.value.to_f64() - fresh.to_f64()).abs();
        assert!(
            d < 1e-9 * fresh.to_f64().abs().max(1e-3),
            "seeded vs fresh differ by {d:e}"
        );
    }

    #[test]
    fn no_states_below_the_first_critical_intensity() {
        let base = make_problem(5.0, 0, -2.0, NumericsConfig::default()).unwrap();
        let report = find_bound_states(&base, -4.5, -0.05, 50).unwrap();
        assert!(report.states.is_empty());
        assert!(report.failures.is_empty(), "{:?}", report.failures);
    }

    #[test]
    fn mixing_rejects_a_degenerate_denominator() {
        let base = base40();
        let pair = floquet_pair(&base).unwrap();
        let mut tf = connection_factors(&base, &pair).unwrap();
        tf.rows[1] = tf.rows[0].clone();
        assert!(matches!(
            mixing_coefficients(&tf),
            Err(Error::DegenerateDenominator(_))
        ));
    }

    #[test]
    fn scans_validate_their_inputs() {
        let base = base40();
        assert!(matches!(
            find_bound_states(&base, -1.0, -2.0, 50),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            find_bound_states(&base, -2.0, 0.5, 50),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            find_bound_states(&base, -2.0, -1.0, 10),
            Err(Error::Config(_))
        ));
        let cfg = NumericsConfig::default();
        assert!(matches!(
            spectrum_dataset(&cfg, 0.0, 10.0, 5, &[0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            spectrum_dataset(&cfg, 10.0, 5.0, 5, &[0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            spectrum_dataset(&cfg, 1.0, 5.0, 0, &[0]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn reference_state_assembles_round_trip() {
        let base = base40();
        let report = find_bound_states(&base, -12.8, -10.9, 50).unwrap();
        assert_eq!(
            report.states.len(),
            1,
            "failures: {:?}, skipped: {:?}",
            report.failures,
            report.skipped
        );
        let st = &report.states[0];
        let eps = st.spec.epsilon.to_f64();
        assert!((eps + 11.909183).abs() < 5e-6, "eps = {eps}");
        assert_eq!(st.state_index, 0);

        // Index against the eight-digit reference value.
        let nu = &st.pair.w1.nu;
        assert!((nu.re.to_f64() - 0.5).abs() < 1e-7, "Re nu = {}", nu.re.to_f64());
        assert!(
            (nu.im.to_f64() + 3.31231657).abs() < 1e-7,
            "Im nu = {}",
            nu.im.to_f64()
        );

        // Residuals at the polished root.
        assert!(
            st.quantization_residual < 1e-10,
            "q = {:e}",
            st.quantization_residual
        );
        assert!(
            st.origin_residual.abs().to_f64() < 1e-12,
            "origin residual = {:e}",
            st.origin_residual.abs().to_f64()
        );

        // A1 T13 + A2 T23 = 1 by construction; A2 = conj(A1) in this regime.
        let mut one = &st.a1 * st.factors.t(1, 3);
        one.add_mul(&st.a2, st.factors.t(2, 3));
        one.re -= 1u32;
        assert!(one.abs().to_f64() < 1e-25);
        let conj_gap = (&st.a2 - &st.a1.conj()).abs().to_f64();
        assert!(conj_gap < 1e-20 * st.a1.abs().to_f64());

        // Magnitude of A1 against the six-decimal reference components,
        // converted from our peak-normalized w1 to the c_0 = 1 basis.
        let mag = (&st.a1 * &st.pair.w1.coeff(0)).abs().to_f64();
        let want = (1.0095465e-3f64).hypot(1.9730906e-3);
        assert!((mag - want).abs() < 1e-4 * want, "|A1| in c0 basis = {mag:e}");

        // Geometry.
        assert!(st.z_inner > 0.4 && st.z_inner < 0.9, "z_inner = {}", st.z_inner);
        assert!(st.z_outer > 3.0 && st.z_outer < 12.0, "z_outer = {}", st.z_outer);
        assert!(
            st.outer_window.0 < st.outer_window.1,
            "outer window inverted: {:?}",
            st.outer_window
        );
        assert!(st.norm.is_sign_positive());
        assert!(st.peak > 0.05 && st.peak < 20.0, "peak = {}", st.peak);

        // Middle and outer representations agree across the outer hand-off.
        let (zl, zh) = st.outer_window;
        for t in [0.15, 0.5, 0.85] {
            let z = st.spec.re(zl * (zh / zl).powf(t));
            let (m, em) = middle_value(st, &z);
            let (o, eo) = outer_value(st, &z);
            let rel = ((m.to_f64() - o.to_f64()) / o.to_f64()).abs();
            assert!(
                rel < 1e-8,
                "overlap rel = {rel:e} at z = {} (estimates {em:e}, {eo:e})",
                z.to_f64()
            );
        }

        // Ground state: no nodes, positive tail, evaluable in all regions.
        assert_eq!(node_count(st), 0);
        let tail = wavefunction(st, &st.spec.re(st.z_outer + 1.0)).unwrap();
        assert!(tail.is_sign_positive());
        for zf in [0.45, 1.0, 2.2] {
            wavefunction(st, &st.spec.re(zf)).unwrap();
        }

        // Normalization closes: independently re-integrate the square.
        let p = st.spec.prec();
        let q = integrate(
            |z: &Float| {
                let (v, _) = best_value(st, z, 1e-6);
                let mut s = Float::with_val(p, v.square_ref());
                s *= &st.norm;
                s *= &st.norm;
                s
            },
            &st.spec.re(0.45),
            &st.spec.re(st.z_tail),
            1e-9,
        )
        .unwrap();
        let a3 = exponent_coefficients(&st.spec).alpha3.re.to_f64().abs();
        let u_tail = wavefunction(st, &st.spec.re(st.z_tail)).unwrap();
        let mut total = Float::with_val(p, u_tail.square_ref());
        total /= 2.0 * a3;
        total += &q.value;
        let gap = (total.to_f64() - 1.0).abs();
        assert!(gap < 1e-8, "normalization integral off by {gap:e}");
    }

    #[test]
    fn dataset_rows_are_ordered_and_monotone() {
        // Between the first and second critical intensities: one state per cell.
        let cfg = NumericsConfig::default();
        let ds = spectrum_dataset(&cfg, 8.0, 8.5, 1, &[0]).unwrap();
        assert!(ds.failures.is_empty(), "{:?}", ds.failures);
        assert_eq!(ds.rows.len(), 2, "rows: {:?}", ds.rows);
        for r in &ds.rows {
            assert_eq!(r.state_index, 0);
        }
        // A deeper well binds harder.
        assert!(ds.rows[1].epsilon < ds.rows[0].epsilon);
    }
}
