//! Gamma function for complex argument at configurable precision.
//!
//! Stirling's asymptotic series evaluated after an upward recurrence shift,
//! with the reflection formula for arguments left of Re z = 1/2. Bernoulli
//! numbers are generated once, exactly, as rationals and shared process-wide.

use super::complex::Cx;
use rug::{Float, Integer, Rational};
use std::sync::Mutex;
use std::sync::OnceLock;

static BERNOULLI: OnceLock<Mutex<Vec<Rational>>> = OnceLock::new();

/// B_{2k} for k = 1..=kmax, exact.
fn bernoulli_even(kmax: usize) -> Vec<Rational> {
    let cell = BERNOULLI.get_or_init(|| Mutex::new(Vec::new()));
    let mut cache = cell.lock().unwrap();
    if cache.len() >= kmax {
        return cache[..kmax].to_vec();
    }
    // B_m = -1/(m+1) * sum_{j<m} C(m+1, j) B_j, with every B_m kept so the
    // recurrence stays exact; only even orders are cached.
    let mmax = 2 * kmax;
    let mut all: Vec<Rational> = Vec::with_capacity(mmax + 1);
    all.push(Rational::from(1));
    for m in 1..=mmax {
        let mut s = Rational::new();
        for (j, bj) in all.iter().enumerate() {
            if j >= 3 && j % 2 == 1 {
                continue;
            }
            let c = Integer::from(m as u32 + 1).binomial(j as u32);
            s += bj * Rational::from(c);
        }
        s /= -Rational::from(m as u32 + 1);
        all.push(s);
    }
    *cache = (1..=kmax).map(|k| all[2 * k].clone()).collect();
    cache[..kmax].to_vec()
}

fn ln_two_pi_half(p: u32) -> Float {
    let two_pi = Float::with_val(p, rug::float::Constant::Pi) * 2u32;
    let mut v = two_pi.ln();
    v /= 2u32;
    v
}

/// log Gamma(z). The imaginary part is reported on an arbitrary branch; only
/// exponentials and differences of results are meaningful to callers.
pub fn lngamma(z: &Cx) -> Cx {
    let p = z.prec();
    let wp = p + 64;
    let z = Cx::new(
        Float::with_val(wp, &z.re),
        Float::with_val(wp, &z.im),
    );
    let half = Float::with_val(wp, 0.5f64);
    let v = if z.re < half {
        // Reflection: ln Gamma(z) = ln(pi / sin(pi z)) - ln Gamma(1 - z).
        let pi = Float::with_val(wp, rug::float::Constant::Pi);
        let piz = z.scale(&pi);
        let s = piz.sin();
        let lnpi = Cx::from_real(pi.ln());
        let one = Cx::one(wp);
        let refl = &(&lnpi - &s.ln()) - &lngamma_right(&(&one - &z));
        refl
    } else {
        lngamma_right(&z)
    };
    Cx::new(Float::with_val(p, &v.re), Float::with_val(p, &v.im))
}

/// Stirling branch, valid for Re z >= 1/2.
fn lngamma_right(z: &Cx) -> Cx {
    let wp = z.prec();
    // Shift until |w| is large enough that the optimally truncated tail is
    // below roughly 2^-(wp+8): the tail floor is ~ exp(-2 pi |w|).
    let target = (wp as f64 + 16.0) * std::f64::consts::LN_2 / (2.0 * std::f64::consts::PI);
    let target = target.max(12.0);
    let re = z.re.to_f64();
    let shift = if re < target {
        (target - re).ceil() as u32
    } else {
        0
    };
    let w = &z.clone() + &Cx::real(wp, shift as f64);

    // ln Gamma(w) by Stirling.
    let lnw = w.ln();
    let half = Cx::real(wp, 0.5);
    let mut acc = &(&w - &half) * &lnw;
    acc -= &w;
    acc += &Cx::from_real(ln_two_pi_half(wp));

    let kmax = (std::f64::consts::PI * w.abs().to_f64()).ceil() as usize + 2;
    let bern = bernoulli_even(kmax);
    let w2 = &w * &w;
    let inv_w2 = &Cx::one(wp) / &w2;
    let mut pow = &Cx::one(wp) / &w;
    let mut floor = Float::with_val(wp, rug::float::Special::Infinity);
    for (i, b) in bern.iter().enumerate() {
        let k = (i + 1) as u32;
        let coeff = Rational::from((
            b.numer().clone(),
            b.denom().clone() * Integer::from(2 * k) * Integer::from(2 * k - 1),
        ));
        let term = pow.scale(&Float::with_val(wp, &coeff));
        let tmag = term.abs();
        if tmag > floor {
            // Asymptotic tail starting to grow; the optimum was the last term.
            break;
        }
        acc += &term;
        let mut stop = acc.abs();
        stop >>= wp + 8;
        if tmag < stop {
            break;
        }
        floor = tmag;
        pow = &pow * &inv_w2;
    }

    // Undo the shift: ln Gamma(z) = ln Gamma(z + S) - sum ln(z + j).
    let mut corr = Cx::zero(wp);
    for j in 0..shift {
        corr += &(&z.clone() + &Cx::real(wp, j as f64)).ln();
    }
    &acc - &corr
}

/// Gamma(z) = exp(lngamma(z)).
pub fn gamma(z: &Cx) -> Cx {
    lngamma(z).exp()
}
