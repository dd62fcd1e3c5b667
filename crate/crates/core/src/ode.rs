//! Adaptive explicit Runge-Kutta integration at arbitrary precision.
//!
//! Implements the Dormand-Prince 5(4) embedded pair over a dense real state
//! vector. Complex systems are integrated by flattening into interleaved
//! real components; the right-hand side closure is free to do complex
//! arithmetic internally. The Butcher tableau is stored as exact rationals
//! and rounded to the working precision once per call, so the integrator is
//! usable unchanged at any precision.

use crate::error::{Error, Result};
use rug::{Assign, Float, Rational};

/// Step-size control and termination settings.
#[derive(Clone, Debug)]
pub struct OdeOptions {
    /// Relative tolerance for the per-step error estimate.
    pub rtol: f64,
    /// Absolute tolerance floor for components near zero.
    pub atol: f64,
    /// Initial step size (positive, in units of the independent variable).
    pub h_init: f64,
    /// Upper bound on the step size. `f64::INFINITY` disables the cap.
    pub h_max: f64,
    /// Hard bound on accepted plus rejected steps.
    pub max_steps: usize,
    /// Measure the step error against the largest state component instead of
    /// per component. Appropriate when components are phases of one rotating
    /// object and individually cross zero.
    pub norm_control: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-14,
            atol: 1e-300,
            h_init: 1e-3,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
            norm_control: false,
        }
    }
}

struct Tableau {
    // a[i][j] multiplies stage j in the argument of stage i+2 (both 1-based:
    // a[0] builds stage 2 from stage 1).
    a: Vec<Vec<Float>>,
    c: Vec<Float>,
    // Error weights b - b*; the fifth-order solution weights equal a[5] (FSAL).
    e: Vec<Float>,
}

fn rat(num: i64, den: i64, prec: u32) -> Float {
    Float::with_val(prec, Rational::from((num, den)))
}

fn tableau(prec: u32) -> Tableau {
    let a = vec![
        vec![rat(1, 5, prec)],
        vec![rat(3, 40, prec), rat(9, 40, prec)],
        vec![rat(44, 45, prec), rat(-56, 15, prec), rat(32, 9, prec)],
        vec![
            rat(19372, 6561, prec),
            rat(-25360, 2187, prec),
            rat(64448, 6561, prec),
            rat(-212, 729, prec),
        ],
        vec![
            rat(9017, 3168, prec),
            rat(-355, 33, prec),
            rat(46732, 5247, prec),
            rat(49, 176, prec),
            rat(-5103, 18656, prec),
        ],
        vec![
            rat(35, 384, prec),
            rat(0, 1, prec),
            rat(500, 1113, prec),
            rat(125, 192, prec),
            rat(-2187, 6784, prec),
            rat(11, 84, prec),
        ],
    ];
    let c = vec![
        rat(1, 5, prec),
        rat(3, 10, prec),
        rat(4, 5, prec),
        rat(8, 9, prec),
        rat(1, 1, prec),
        rat(1, 1, prec),
    ];
    let e = vec![
        rat(71, 57600, prec),
        rat(0, 1, prec),
        rat(-71, 16695, prec),
        rat(71, 1920, prec),
        rat(-17253, 339200, prec),
        rat(22, 525, prec),
        rat(-1, 40, prec),
    ];
    Tableau { a, c, e }
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1` (requires `t1 > t0`).
///
/// `f(t, y, dy)` must fill `dy` with the derivative; the slice lengths match
/// `y0`. Returns the state at `t1`. All state arithmetic runs at `prec` bits;
/// step-size control happens in `f64`, which only influences which steps are
/// taken, not how accurately each one is evaluated.
pub fn integrate<F>(
    mut f: F,
    t0: &Float,
    t1: &Float,
    y0: Vec<Float>,
    opt: &OdeOptions,
    prec: u32,
) -> Result<Vec<Float>>
where
    F: FnMut(&Float, &[Float], &mut [Float]),
{
    if !(t1.to_f64() > t0.to_f64()) {
        return Err(Error::Domain(
            "integration interval must satisfy t1 > t0".into(),
        ));
    }
    if !(opt.rtol > 0.0) || !(opt.atol > 0.0) || !(opt.h_init > 0.0) {
        return Err(Error::Config(
            "ode tolerances and h_init must be positive".into(),
        ));
    }
    let tb = tableau(prec);
    let n = y0.len();
    let mut t = t0.clone();
    let mut y = y0;
    let mut h = Float::with_val(prec, opt.h_init);
    let span = Float::with_val(prec, t1 - t0);
    if h > span {
        h = span;
    }

    // FSAL: stage 7 of an accepted step is stage 1 of the next.
    let mut k: Vec<Vec<Float>> = (0..7).map(|_| vec![Float::with_val(prec, 0); n]).collect();
    f(&t, &y, &mut k[0]);

    let mut ywork = vec![Float::with_val(prec, 0); n];
    let mut steps = 0usize;
    let mut tmp = Float::with_val(prec, 0);

    loop {
        let rem = Float::with_val(prec, t1 - &t);
        if rem <= 0 {
            return Ok(y);
        }
        let last = h >= rem;
        let hs = if last { rem } else { h.clone() };

        steps += 1;
        if steps > opt.max_steps {
            return Err(Error::IntegrationFailure(format!(
                "step budget {} exhausted at t = {:.6e} of [{:.6e}, {:.6e}]",
                opt.max_steps,
                t.to_f64(),
                t0.to_f64(),
                t1.to_f64()
            )));
        }

        // Stages 2..=7: ywork = y + hs * sum_j a[i][j] k_j, then k[i+1] = f.
        for i in 0..6 {
            for (m, ym) in ywork.iter_mut().enumerate() {
                ym.assign(0);
                for (j, aij) in tb.a[i].iter().enumerate() {
                    if aij.is_zero() {
                        continue;
                    }
                    tmp.assign(aij);
                    tmp *= &k[j][m];
                    *ym += &tmp;
                }
                *ym *= &hs;
                *ym += &y[m];
            }
            let ti = Float::with_val(prec, &tb.c[i] * &hs) + &t;
            f(&ti, &ywork, &mut k[i + 1]);
        }
        // After i = 5 the stage argument ywork is the fifth-order solution
        // itself (c7 = 1 and the last a-row equals b), and k[6] = f(t1, y1).

        let norm_scale = if opt.norm_control {
            let mut mx = 0.0f64;
            for m in 0..n {
                mx = mx.max(y[m].to_f64().abs()).max(ywork[m].to_f64().abs());
            }
            Some(opt.atol + opt.rtol * mx)
        } else {
            None
        };
        let mut err_norm_sq = 0.0f64;
        for m in 0..n {
            let mut acc = Float::with_val(prec, 0);
            for (j, ej) in tb.e.iter().enumerate() {
                if ej.is_zero() {
                    continue;
                }
                tmp.assign(ej);
                tmp *= &k[j][m];
                acc += &tmp;
            }
            acc *= &hs;
            let scale = norm_scale.unwrap_or_else(|| {
                opt.atol + opt.rtol * y[m].to_f64().abs().max(ywork[m].to_f64().abs())
            });
            let r = acc.to_f64() / scale;
            err_norm_sq += r * r;
        }
        let err = (err_norm_sq / n as f64).sqrt();

        if err <= 1.0 {
            t += &hs;
            std::mem::swap(&mut y, &mut ywork);
            k.swap(0, 6);
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            let hn = (hs.to_f64() * fac).min(opt.h_max);
            h = Float::with_val(prec, hn);
            if last && Float::with_val(prec, t1 - &t) <= 0 {
                return Ok(y);
            }
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            h = Float::with_val(prec, hs.to_f64() * fac);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: u32 = 113;

    fn opts(rtol: f64) -> OdeOptions {
        OdeOptions {
            rtol,
            atol: 1e-30,
            h_init: 1e-2,
            ..OdeOptions::default()
        }
    }

    #[test]
    fn exponential_growth_matches_exp() {
        let f = |_t: &Float, y: &[Float], dy: &mut [Float]| {
            dy[0].assign(&y[0]);
        };
        let t0 = Float::with_val(P, 0);
        let t1 = Float::with_val(P, 1);
        let y = integrate(f, &t0, &t1, vec![Float::with_val(P, 1)], &opts(1e-20), P).unwrap();
        let expect = Float::with_val(P, 1).exp();
        let rel = Float::with_val(P, &y[0] - &expect).abs() / expect;
        assert!(rel.to_f64() < 1e-17, "rel err {:e}", rel.to_f64());
    }

    #[test]
    fn harmonic_oscillator_closes_orbit() {
        use rug::ops::NegAssign;
        let f = |_t: &Float, y: &[Float], dy: &mut [Float]| {
            dy[0].assign(&y[1]);
            dy[1].assign(&y[0]);
            dy[1].neg_assign();
        };
        let t0 = Float::with_val(P, 0);
        let two_pi = Float::with_val(P, rug::float::Constant::Pi) * 2u32;
        let y0 = vec![Float::with_val(P, 1), Float::with_val(P, 0)];
        let y = integrate(f, &t0, &two_pi, y0, &opts(1e-18), P).unwrap();
        let d0 = (Float::with_val(P, &y[0]) - 1u32).abs().to_f64();
        let d1 = Float::with_val(P, &y[1]).abs().to_f64();
        assert!(d0 < 1e-14 && d1 < 1e-14, "orbit gap ({:e}, {:e})", d0, d1);
    }

    #[test]
    fn tightening_tolerance_reduces_error() {
        let f = |t: &Float, _y: &[Float], dy: &mut [Float]| {
            dy[0].assign(&t.clone().cos());
        };
        let t0 = Float::with_val(P, 0);
        let t1 = Float::with_val(P, 10);
        let exact = Float::with_val(P, 10).sin();
        let mut errs = Vec::new();
        for rtol in [1e-8, 1e-14] {
            let y = integrate(f, &t0, &t1, vec![Float::with_val(P, 0)], &opts(rtol), P).unwrap();
            errs.push(Float::with_val(P, &y[0] - &exact).abs().to_f64());
        }
        assert!(errs[1] < errs[0] * 1e-2, "errors {:?}", errs);
    }

    #[test]
    fn rejects_reversed_interval() {
        let f = |_: &Float, _: &[Float], dy: &mut [Float]| {
            dy[0].assign(0);
        };
        let t0 = Float::with_val(P, 1);
        let t1 = Float::with_val(P, 0);
        let r = integrate(f, &t0, &t1, vec![Float::with_val(P, 0)], &opts(1e-10), P);
        assert!(r.is_err());
    }
}
