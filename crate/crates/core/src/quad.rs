//! Adaptive Gauss-Legendre quadrature at arbitrary precision.
//!
//! Panels are refined globally: the segment with the largest error estimate
//! is bisected, and the difference between its rule value and the sum of its
//! children's becomes the children's estimate. Node and weight tables come
//! from Newton iteration on the Legendre recurrence and are cached per
//! (points, precision), so repeated integrations pay the setup once.

use crate::error::{Error, Result};
use rug::Float;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Tuning knobs for [`integrate_opts`].
#[derive(Clone, Debug)]
pub struct QuadOptions {
    /// Points per Gauss-Legendre panel.
    pub points: usize,
    /// Relative tolerance on the accumulated integral. Must stay a few
    /// orders above the working precision's epsilon to be reachable.
    pub rel_tol: f64,
    /// Hard bound on the number of panels.
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            points: 24,
            rel_tol: 1e-12,
            max_panels: 512,
        }
    }
}

/// Outcome of an adaptive integration.
#[derive(Clone, Debug)]
pub struct Quadrature {
    /// The integral over the requested (oriented) interval.
    pub value: Float,
    /// Absolute error estimate, summed over panels.
    pub abs_est: Float,
    /// Number of integrand evaluations performed.
    pub evals: usize,
    /// Number of panels in the final subdivision.
    pub panels: usize,
}

struct Rule {
    nodes: Vec<Float>,
    weights: Vec<Float>,
}

/// P_n(x) and P_{n-1}(x) by the three-term recurrence. Exact integer
/// coefficients keep every step at working precision.
fn legendre_pair(n: usize, x: &Float) -> (Float, Float) {
    let prec = x.prec();
    let mut p0 = Float::with_val(prec, 1);
    let mut p1 = x.clone();
    for j in 1..n {
        // p2 = ((2j+1) x p1 - j p0) / (j+1)
        let mut p2 = Float::with_val(prec, x * &p1);
        p2 *= 2 * j as u32 + 1;
        p2 -= Float::with_val(prec, &p0 * (j as u32));
        p2 /= j as u32 + 1;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

fn legendre_rule(n: usize, prec: u32) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u32), Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&(n, prec)) {
        return rule.clone();
    }

    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    // Absolute Newton threshold; nodes are O(1) so this is also relative.
    // The post-update error is quadratically below it.
    let thr = Float::with_val(prec, Float::i_exp(1, -(prec as i32) - 8));
    for k in 1..=n {
        let seed = (std::f64::consts::PI * (k as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut x = Float::with_val(prec, seed);
        for _ in 0..80 {
            let (pn, pnm1) = legendre_pair(n, &x);
            // P'_n = n (x P_n - P_{n-1}) / (x^2 - 1)
            let mut dp = Float::with_val(prec, &x * &pn);
            dp -= &pnm1;
            dp *= n as u32;
            let mut den = Float::with_val(prec, &x * &x);
            den -= 1;
            dp /= &den;
            let dx = Float::with_val(prec, &pn / &dp);
            x -= &dx;
            if dx.abs() <= thr {
                break;
            }
        }
        let (_, pnm1) = legendre_pair(n, &x);
        let mut dp = Float::with_val(prec, &x * &legendre_pair(n, &x).0);
        dp -= &pnm1;
        dp *= n as u32;
        let mut den = Float::with_val(prec, &x * &x);
        den -= 1;
        dp /= &den;
        // w = 2 / ((1 - x^2) P'_n(x)^2)
        let mut w = Float::with_val(prec, &dp * &dp);
        den = -den;
        w *= &den;
        w.recip_mut();
        w *= 2;
        nodes.push(x);
        weights.push(w);
    }

    let rule = Arc::new(Rule { nodes, weights });
    cache
        .lock()
        .unwrap()
        .entry((n, prec))
        .or_insert_with(|| rule.clone())
        .clone()
}

fn panel<F: FnMut(&Float) -> Float>(f: &mut F, rule: &Rule, a: &Float, b: &Float) -> Float {
    let prec = a.prec().max(b.prec());
    let mut c = Float::with_val(prec, a + b);
    c >>= 1;
    let mut h = Float::with_val(prec, b - a);
    h >>= 1;
    let mut acc = Float::new(prec);
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let mut z = Float::with_val(prec, &h * x);
        z += &c;
        acc += Float::with_val(prec, w * &f(&z));
    }
    acc * h
}

struct Seg {
    a: Float,
    b: Float,
    val: Float,
    est: Float,
}

/// Integrates `f` over the oriented interval from `a` to `b` at the
/// precision of the endpoints, refining until the summed panel estimates
/// drop below `rel_tol` times the integral's scale.
pub fn integrate<F: FnMut(&Float) -> Float>(
    f: F,
    a: &Float,
    b: &Float,
    rel_tol: f64,
) -> Result<Quadrature> {
    let opts = QuadOptions {
        rel_tol,
        ..QuadOptions::default()
    };
    integrate_opts(f, a, b, &opts)
}

pub fn integrate_opts<F: FnMut(&Float) -> Float>(
    mut f: F,
    a: &Float,
    b: &Float,
    opts: &QuadOptions,
) -> Result<Quadrature> {
    let prec = a.prec().max(b.prec());
    let reversed = a > b;
    let (lo, hi) = if reversed {
        (b.clone(), a.clone())
    } else {
        (a.clone(), b.clone())
    };
    if lo == hi {
        return Ok(Quadrature {
            value: Float::new(prec),
            abs_est: Float::new(prec),
            evals: 0,
            panels: 0,
        });
    }

    let rule = legendre_rule(opts.points, prec);
    let mut evals = opts.points;
    let g0 = panel(&mut f, &rule, &lo, &hi);
    // Infinite seed estimate forces at least one refinement, so a function
    // that merely vanishes at the first rule's nodes cannot pass unseen.
    let mut segs = vec![Seg {
        a: lo,
        b: hi,
        val: g0,
        est: Float::with_val(prec, f64::INFINITY),
    }];

    loop {
        let mut total = Float::new(prec);
        let mut err = Float::new(prec);
        let mut scale = Float::new(prec);
        for s in &segs {
            total += &s.val;
            err += &s.est;
            let m = s.val.clone().abs();
            if m > scale {
                scale = m;
            }
        }
        let m = total.clone().abs();
        if m > scale {
            scale = m;
        }
        let mut tol = scale;
        tol *= Float::with_val(prec, opts.rel_tol);
        if err.is_finite() && err <= tol {
            let mut value = total;
            if reversed {
                value = -value;
            }
            return Ok(Quadrature {
                value,
                abs_est: err,
                evals,
                panels: segs.len(),
            });
        }
        if segs.len() >= opts.max_panels {
            return Err(Error::QuadratureFailure(format!(
                "estimate {:e} above tolerance {:e} after {} panels",
                err.to_f64(),
                tol.to_f64(),
                segs.len()
            )));
        }

        let mut idx = 0;
        for (i, s) in segs.iter().enumerate() {
            if s.est > segs[idx].est {
                idx = i;
            }
        }
        let s = segs.swap_remove(idx);
        let mut mid = Float::with_val(prec, &s.a + &s.b);
        mid >>= 1;
        if mid == s.a || mid == s.b {
            return Err(Error::QuadratureFailure(format!(
                "panel [{:e}, {:e}] collapsed to one ulp with estimate {:e} outstanding",
                s.a.to_f64(),
                s.b.to_f64(),
                s.est.to_f64()
            )));
        }
        let gl = panel(&mut f, &rule, &s.a, &mid);
        let gr = panel(&mut f, &rule, &mid, &s.b);
        evals += 2 * opts.points;
        let mut diff = s.val;
        diff -= &gl;
        diff -= &gr;
        diff.abs_mut();
        segs.push(Seg {
            a: s.a,
            b: mid.clone(),
            val: gl,
            est: diff.clone(),
        });
        segs.push(Seg {
            a: mid,
            b: s.b,
            val: gr,
            est: diff,
        });
    }
}
