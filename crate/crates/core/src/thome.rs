//! Formal solutions at the two irregular singular points.
//!
//! At infinity the equation admits formal solutions `e^{alpha z} sum a_m z^-m`
//! with `alpha = ±sqrt(-eps)`; at the origin `e^{beta z^-5 / 5} z^3 sum b_m z^m`
//! with `beta = ±sqrt(lambda)`. Both series are divergent but asymptotic, so
//! evaluation truncates at the smallest term and reports the first omitted
//! term as the accuracy estimate.

use crate::num::Cx;
use crate::problem::ProblemSpec;
use rug::Float;

/// Which irregular point a formal series belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SingularPoint {
    Origin,
    Infinity,
}

/// Coefficients of one formal solution, `a_m` (infinity) or `b_m` (origin).
#[derive(Clone, Debug)]
pub struct FormalSeries {
    pub point: SingularPoint,
    /// `alpha` for infinity series, `beta` for origin series.
    pub exponent: Cx,
    pub coeffs: Vec<Cx>,
}

/// Series value together with the relative size of the first omitted term.
#[derive(Clone, Debug)]
pub struct SeriesValue {
    pub value: Cx,
    pub rel_est: f64,
}

/// Value/derivative pair for seeding integrations from the origin series.
#[derive(Clone, Debug)]
pub struct SeriesPoint {
    pub value: Cx,
    pub deriv: Cx,
    pub rel_est: f64,
}

/// Coefficients `a_m` of the formal solution at infinity:
///
/// ```text
/// 2 alpha m a_m = [m(m-1) - l(l+1)] a_{m-1} + 2 lambda a_{m-5} - lambda a_{m-11}
/// ```
///
/// with `a_0 = 1`. `alpha` must be one of the two exponents `±sqrt(-eps)`;
/// the recurrence requires `alpha != 0`, i.e. a genuinely negative energy.
pub fn infinity_series(spec: &ProblemSpec, alpha: &Cx) -> FormalSeries {
    let p = spec.prec();
    let terms = spec.cfg.thome_terms as usize;
    assert!(!alpha.is_zero(), "infinity series undefined at eps = 0");
    let ll = spec.l_term();
    let lam = &spec.lambda;
    let mut a = Vec::with_capacity(terms);
    a.push(Cx::one(p));
    for m in 1..terms {
        let mf = Float::with_val(p, m as u32);
        // [m(m-1) - l(l+1)] a_{m-1}
        let poly = Float::with_val(p, (m * (m - 1)) as u64) - &ll;
        let mut rhs = a[m - 1].scale(&poly);
        if m >= 5 {
            let two_lam = Float::with_val(p, lam * 2u32);
            rhs.add_mul(&a[m - 5], &Cx::from_real(two_lam));
        }
        if m >= 11 {
            rhs.sub_mul(&a[m - 11], &Cx::from_real(lam.clone()));
        }
        let denom = alpha.scale(&Float::with_val(p, &mf * 2u32));
        a.push(&rhs / &denom);
    }
    FormalSeries {
        point: SingularPoint::Infinity,
        exponent: alpha.clone(),
        coeffs: a,
    }
}

/// Coefficients `b_m` of the formal solution at the origin:
///
/// ```text
/// 2 beta m b_m = 2 lambda b_{m-1} + [(m-3)(m-2) - l(l+1)] b_{m-5} + eps b_{m-7}
/// ```
///
/// with `b_0 = 1`. `beta` must be one of `±sqrt(lambda)`, never zero since
/// `lambda > 0`.
pub fn origin_series(spec: &ProblemSpec, beta: &Cx) -> FormalSeries {
    let p = spec.prec();
    let terms = spec.cfg.thome_terms as usize;
    assert!(!beta.is_zero(), "origin exponent must be nonzero");
    let ll = spec.l_term();
    let lam = &spec.lambda;
    let mut b = Vec::with_capacity(terms);
    b.push(Cx::one(p));
    for m in 1..terms {
        let two_lam = Float::with_val(p, lam * 2u32);
        let mut rhs = b[m - 1].scale(&two_lam);
        if m >= 5 {
            let poly = Float::with_val(p, ((m - 3) * (m - 2)) as u64) - &ll;
            rhs.add_mul(&b[m - 5], &Cx::from_real(poly));
        }
        if m >= 7 {
            rhs.add_mul(&b[m - 7], &Cx::from_real(spec.epsilon.clone()));
        }
        let denom = beta.scale(&Float::with_val(p, 2 * m as u32));
        b.push(&rhs / &denom);
    }
    FormalSeries {
        point: SingularPoint::Origin,
        exponent: beta.clone(),
        coeffs: b,
    }
}

/// Sums `terms` up to the global minimum-magnitude entry and reports the
/// first omitted nonzero term relative to the sum. Zero terms are neither
/// truncation candidates nor error indicators; the series tail being
/// unavailable (minimum at the window edge) simply yields the last term as
/// the estimate, which callers compare against their tolerance.
fn sum_optimal(terms: &[Cx]) -> (Cx, f64) {
    let p = terms.first().map(|t| t.prec()).unwrap_or(53);
    let mags: Vec<Float> = terms.iter().map(|t| t.abs()).collect();
    let mut best: Option<usize> = None;
    for (m, mag) in mags.iter().enumerate() {
        if mag.is_zero() {
            continue;
        }
        match best {
            Some(b) if mags[b] <= *mag => {}
            _ => best = Some(m),
        }
    }
    let cut = match best {
        Some(b) => b,
        None => {
            // All terms vanish: the sum is exactly zero.
            return (Cx::zero(p), 0.0);
        }
    };
    let mut sum = Cx::zero(p);
    for t in &terms[..=cut] {
        sum += t;
    }
    let omitted = mags[cut + 1..]
        .iter()
        .find(|m| !m.is_zero())
        .unwrap_or(&mags[cut]);
    let denom = sum.abs();
    let est = if denom.is_zero() {
        f64::INFINITY
    } else {
        Float::with_val(p, omitted / denom).to_f64().abs()
    };
    (sum, est)
}

/// Evaluates `e^{alpha z} sum a_m z^-m` at `z > 0` with optimal truncation.
pub fn eval_infinity(series: &FormalSeries, z: &Float) -> SeriesValue {
    assert_eq!(series.point, SingularPoint::Infinity);
    assert!(z.is_sign_positive() && !z.is_zero(), "require z > 0");
    let p = series.exponent.prec();
    let zinv = Float::with_val(p, z.recip_ref());
    let mut pow = Float::with_val(p, 1);
    let mut terms = Vec::with_capacity(series.coeffs.len());
    for c in &series.coeffs {
        terms.push(c.scale(&pow));
        pow *= &zinv;
    }
    let (sum, rel_est) = sum_optimal(&terms);
    let arg = series.exponent.scale(z);
    let value = &arg.exp() * &sum;
    SeriesValue { value, rel_est }
}

/// Evaluates `e^{beta z^-5 / 5} z^3 sum b_m z^m` at `z > 0`.
pub fn eval_origin(series: &FormalSeries, z: &Float) -> SeriesValue {
    let scaled = eval_origin_scaled(series, z);
    let value = &origin_prefactor(series, z) * &scaled.value;
    SeriesValue {
        value,
        rel_est: scaled.rel_est,
    }
}

/// The exponential prefactor `e^{beta z^-5 / 5}` of an origin series.
pub fn origin_prefactor(series: &FormalSeries, z: &Float) -> Cx {
    assert_eq!(series.point, SingularPoint::Origin);
    let p = series.exponent.prec();
    let z2 = Float::with_val(p, z.square_ref());
    let z4 = Float::with_val(p, z2.square_ref());
    let z5 = Float::with_val(p, &z4 * z);
    let zm5 = Float::with_val(p, z5.recip_ref());
    let arg = series.exponent.scale(&Float::with_val(p, zm5 / 5u32));
    arg.exp()
}

/// Value and derivative of the origin solution with the exponential
/// prefactor removed: for `wt = e^{-beta z^-5/5} w_k` this returns
///
/// ```text
/// wt  = z^3 sum b_m z^m
/// wt' = -beta sum b_m z^{m-3} + sum (m+3) b_m z^{m+2}
/// ```
///
/// which seeds integrations of the original equation after dividing the
/// solution by the constant `e^{beta z0^-5/5}` once at the seed point. The
/// returned derivative is the full `w'` scaled the same way, chain rule
/// included.
pub fn eval_origin_scaled(series: &FormalSeries, z: &Float) -> SeriesPoint {
    assert_eq!(series.point, SingularPoint::Origin);
    assert!(z.is_sign_positive() && !z.is_zero(), "require z > 0");
    let p = series.exponent.prec();
    let beta = &series.exponent;
    let n = series.coeffs.len();

    // pow_low = z^{m-3}, pow_high = z^{m+2}.
    let z2 = Float::with_val(p, z.square_ref());
    let z3 = Float::with_val(p, &z2 * z);
    let mut pow_low = Float::with_val(p, z3.recip_ref());
    let mut pow_high = z2;
    let mut vterms = Vec::with_capacity(n);
    let mut dterms = Vec::with_capacity(n);
    for (m, b) in series.coeffs.iter().enumerate() {
        // Value term b_m z^{m+3}.
        let zp = Float::with_val(p, &pow_high * z);
        vterms.push(b.scale(&zp));
        // Derivative term b_m (-beta z^{m-3} + (m+3) z^{m+2}).
        let mut factor = (-beta).scale(&pow_low);
        let hi = Float::with_val(p, &pow_high * ((m + 3) as u32));
        factor.re += &hi;
        dterms.push(b * &factor);
        pow_low *= z;
        pow_high *= z;
    }
    let (value, est_v) = sum_optimal(&vterms);
    let (deriv, est_d) = sum_optimal(&dterms);
    SeriesPoint {
        value,
        deriv,
        rel_est: est_v.max(est_d),
    }
}
