//! Floquet solutions on the punctured plane.
//!
//! The equation `w'' = q(z) w` with `q(z) = lambda z^-12 - 2 lambda z^-6
//! + l(l+1) z^-2 - eps` is analytic away from 0 and infinity, so a circuit of
//! the unit circle defines a continuation matrix whose eigenvalues `mu`
//! (multipliers, `mu1 mu2 = 1`) give the indices `nu = ln(mu) / (2 pi i)`.
//! Each index carries a Laurent solution `w = z^nu sum c_n z^n` whose
//! coefficients satisfy
//!
//! ```text
//! eps c_{n-2} + [(n+nu)(n+nu-1) - l(l+1)] c_n + 2 lambda c_{n+4} - lambda c_{n+10} = 0
//! ```
//!
//! All coupling offsets are even, so a solution lives on one parity class of
//! `n`; on that class the system is banded with bandwidths (1, 5). The
//! circuit gives `nu` to integration accuracy; a bordered Newton iteration on
//! the coefficient system then polishes `nu` and `c` together to working
//! precision.

use crate::error::{Error, Result};
use crate::linalg::{solve_bordered, Banded};
use crate::num::Cx;
use crate::ode::{integrate, OdeOptions};
use crate::problem::ProblemSpec;
use rug::{Assign, Float};

/// How the pair of indices relates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexRegime {
    /// Real multipliers off the unit circle: `nu2 = conj(nu1)`, `Im nu1 < 0`.
    ConjugatePair,
    /// Unimodular multipliers: both indices real, `nu1 + nu2 = 1 (mod 1)`.
    RealPair,
}

/// Continuation matrix of `(w, w')` data at `z = 1` around the unit circle.
#[derive(Clone, Debug)]
pub struct CircuitMatrix {
    pub m: [[Cx; 2]; 2],
}

impl CircuitMatrix {
    /// Determinant; exactly 1 in exact arithmetic since the equation has no
    /// first-derivative term.
    pub fn det(&self) -> Cx {
        let ad = &self.m[0][0] * &self.m[1][1];
        let bc = &self.m[0][1] * &self.m[1][0];
        &ad - &bc
    }

    pub fn trace(&self) -> Cx {
        &self.m[0][0] + &self.m[1][1]
    }
}

/// Integrates the equation once around `|z| = 1`.
///
/// With `z = e^{i theta}` the system for `(u, v) = (w(z), w'(z))` reads
/// `du/dtheta = i z v`, `dv/dtheta = i z q(z) u`; both basis solutions ride
/// in one flattened real state so they share the `q` evaluations.
pub fn circuit_matrix(spec: &ProblemSpec) -> Result<CircuitMatrix> {
    let p = spec.prec();
    let lam = spec.lambda.clone();
    let two_lam = Float::with_val(p, 2u32 * &lam);
    let ll = spec.l_term();
    let eps = spec.epsilon.clone();

    let f = |theta: &Float, y: &[Float], dy: &mut [Float]| {
        let (sin, cos) = theta.clone().sin_cos(Float::new(p));
        let z = Cx::new(cos, sin);
        let zb = z.conj();
        let zb2 = &zb * &zb;
        let zb4 = &zb2 * &zb2;
        let zb6 = &zb4 * &zb2;
        let zb12 = &zb6 * &zb6;
        let mut q = zb12.scale(&lam);
        q.sub_mul(&zb6, &Cx::from_real(two_lam.clone()));
        q.add_mul(&zb2, &Cx::from_real(ll.clone()));
        q.re -= &eps;
        let iz = z.mul_i();
        let izq = &iz * &q;
        for s in 0..2 {
            let u = Cx::new(y[4 * s].clone(), y[4 * s + 1].clone());
            let v = Cx::new(y[4 * s + 2].clone(), y[4 * s + 3].clone());
            let du = &iz * &v;
            let dv = &izq * &u;
            dy[4 * s].assign(&du.re);
            dy[4 * s + 1].assign(&du.im);
            dy[4 * s + 2].assign(&dv.re);
            dy[4 * s + 3].assign(&dv.im);
        }
    };

    let two_pi = Float::with_val(p, rug::float::Constant::Pi) * 2u32;
    let h_cap = two_pi.to_f64() / spec.cfg.circuit_steps as f64;
    let opt = OdeOptions {
        rtol: spec.cfg.circuit_rtol,
        atol: spec.cfg.circuit_rtol * 1e-3,
        h_init: h_cap,
        h_max: h_cap,
        max_steps: session_step_cap(spec),
        norm_control: true,
    };
    let zero = Float::with_val(p, 0);
    let mut y0 = vec![Float::with_val(p, 0); 8];
    y0[0] = Float::with_val(p, 1); // u1 = 1
    y0[6] = Float::with_val(p, 1); // v2 = 1
    let yf = integrate(f, &zero, &two_pi, y0, &opt, p)?;
    let at = |i: usize| Cx::new(yf[2 * i].clone(), yf[2 * i + 1].clone());
    Ok(CircuitMatrix {
        // Column j holds solution j in the (w, w') basis.
        m: [[at(0), at(2)], [at(1), at(3)]],
    })
}

fn session_step_cap(spec: &ProblemSpec) -> usize {
    // Enough headroom for the adaptive controller to undercut h_max by 100x.
    (spec.cfg.circuit_steps as usize).saturating_mul(200)
}

/// Extracts the index pair from a circuit matrix and classifies the regime.
///
/// Indices are reduced to `Re nu` in `[0, 1)`. In the conjugate regime the
/// first index is the one with negative imaginary part; in the real regime
/// the smaller one comes first.
pub fn indices_from_circuit(
    spec: &ProblemSpec,
    cm: &CircuitMatrix,
) -> Result<(Cx, Cx, IndexRegime)> {
    let p = spec.prec();
    let a = &cm.m[0][0];
    let d = &cm.m[1][1];
    let diff = a - d;
    let mut disc = &diff * &diff;
    disc.add_mul(
        &(&cm.m[0][1] * &cm.m[1][0]),
        &Cx::from_f64(p, 4.0, 0.0),
    );
    let scale = {
        let s = Float::with_val(p, a.abs() + d.abs());
        Float::with_val(p, s.square_ref()).to_f64()
    };
    let disc_mag = disc.abs().to_f64();
    if !(disc_mag > spec.cfg.degeneracy_tol * scale) {
        return Err(Error::DegenerateIndices {
            epsilon: spec.epsilon.to_f64(),
            disc: disc_mag / scale,
        });
    }
    // disc = tr^2 - 4: positive means real multipliers (indices a conjugate
    // pair), negative means unimodular multipliers (real indices).
    let regime = if disc.re.is_sign_positive() {
        IndexRegime::ConjugatePair
    } else {
        IndexRegime::RealPair
    };
    let tr = cm.trace();
    let sq = disc.sqrt();
    let mu1 = (&tr + &sq).scale_f64(0.5);
    let mu2 = (&tr - &sq).scale_f64(0.5);
    let mut nu1 = index_of_multiplier(&mu1);
    let mut nu2 = index_of_multiplier(&mu2);
    let swap = match regime {
        IndexRegime::ConjugatePair => nu1.im.to_f64() > nu2.im.to_f64(),
        IndexRegime::RealPair => nu1.re.to_f64() > nu2.re.to_f64(),
    };
    if swap {
        std::mem::swap(&mut nu1, &mut nu2);
    }
    Ok((nu1, nu2, regime))
}

/// `nu = ln(mu) / (2 pi i)` with `Re nu` reduced to `[0, 1)`; values within
/// 1e-9 of the upper end wrap to the zero side so states on either side of a
/// positive real multiplier reduce consistently.
fn index_of_multiplier(mu: &Cx) -> Cx {
    let p = mu.prec();
    let lnmu = mu.ln();
    let two_pi = Float::with_val(p, rug::float::Constant::Pi) * 2u32;
    let re = Float::with_val(p, &lnmu.im / &two_pi);
    let im = -Float::with_val(p, &lnmu.re / &two_pi);
    let mut nu = Cx::new(re, im);
    let fl = nu.re.clone().floor();
    nu.re -= &fl;
    if nu.re.to_f64() > 1.0 - 1e-9 {
        nu.re -= 1u32;
    }
    nu
}

/// One Laurent solution: index and coefficients on its parity class.
#[derive(Clone, Debug)]
pub struct FloquetSolution {
    pub nu: Cx,
    /// Physical index of `coeffs[0]`; the lattice is `n_min, n_min + 2, ...`.
    pub n_min: i64,
    pub coeffs: Vec<Cx>,
}

impl FloquetSolution {
    pub fn parity(&self) -> u8 {
        self.n_min.rem_euclid(2) as u8
    }

    pub fn n_of(&self, k: usize) -> i64 {
        self.n_min + 2 * k as i64
    }

    /// `c_n`, which is zero off the carrier class and outside the window.
    pub fn coeff(&self, n: i64) -> Cx {
        let p = self.nu.prec();
        let d = n - self.n_min;
        if d < 0 || d % 2 != 0 {
            return Cx::zero(p);
        }
        let k = (d / 2) as usize;
        if k >= self.coeffs.len() {
            Cx::zero(p)
        } else {
            self.coeffs[k].clone()
        }
    }

    /// Physical index of the largest coefficient.
    pub fn peak_n(&self) -> i64 {
        self.n_of(argmax_mag(&self.coeffs))
    }

    /// The companion solution in the conjugate regime: conjugated index and
    /// coefficients on the same lattice. Exact by the reality of the
    /// recurrence coefficients.
    pub fn conjugate(&self) -> FloquetSolution {
        FloquetSolution {
            nu: self.nu.conj(),
            n_min: self.n_min,
            coeffs: self.coeffs.iter().map(|c| c.conj()).collect(),
        }
    }
}

fn argmax_mag(v: &[Cx]) -> usize {
    let mut best = 0usize;
    let mut bm = v[0].abs();
    for (k, c) in v.iter().enumerate().skip(1) {
        let m = c.abs();
        if m > bm {
            bm = m;
            best = k;
        }
    }
    best
}

/// Recurrence matrix on the parity class of `n_min`, rows centered at
/// `n = n_min + 2k`. Stencil columns outside the window are dropped, which
/// imposes the decaying-tail boundary condition.
fn assemble(spec: &ProblemSpec, nu: &Cx, n_min: i64, len: usize) -> Banded {
    let p = spec.prec();
    let mut a = Banded::zeroed(len, 1, 5, p);
    let ll = spec.l_term();
    let two_lam = Cx::from_real(Float::with_val(p, 2u32 * &spec.lambda));
    let neg_lam = Cx::from_real(-spec.lambda.clone());
    let eps = Cx::from_real(spec.epsilon.clone());
    let one = Cx::one(p);
    for k in 0..len {
        let n = n_min + 2 * k as i64;
        if k >= 1 {
            a.set(k, k - 1, eps.clone());
        }
        let t = &Cx::from_real(Float::with_val(p, n)) + nu;
        let mut diag = &t * &(&t - &one);
        diag.re -= &ll;
        a.set(k, k, diag);
        if k + 2 < len {
            a.set(k, k + 2, two_lam.clone());
        }
        if k + 5 < len {
            a.set(k, k + 5, neg_lam.clone());
        }
    }
    a
}

/// (|row sum|, max |term|) of the recurrence centered at `n`.
fn row_residual(spec: &ProblemSpec, sol: &FloquetSolution, n: i64) -> (Float, Float) {
    let p = spec.prec();
    let one = Cx::one(p);
    let t1 = Cx::from_real(spec.epsilon.clone());
    let t1 = &t1 * &sol.coeff(n - 2);
    let nn = &Cx::from_real(Float::with_val(p, n)) + &sol.nu;
    let mut quad = &nn * &(&nn - &one);
    quad.re -= &spec.l_term();
    let t2 = &quad * &sol.coeff(n);
    let t3 = sol.coeff(n + 4).scale(&Float::with_val(p, 2u32 * &spec.lambda));
    let t4 = sol.coeff(n + 10).scale(&(-spec.lambda.clone()));
    let mut sum = t1.clone();
    sum += &t2;
    sum += &t3;
    sum += &t4;
    let mut mx = t1.abs();
    for t in [&t2, &t3, &t4] {
        let m = t.abs();
        if m > mx {
            mx = m;
        }
    }
    (sum.abs(), mx)
}

/// Largest recurrence-row defect across the window, relative to the largest
/// row term anywhere. The global scale is the right yardstick: the banded
/// elimination is backward stable as a whole, so rows deep in the decayed
/// tails carry absolute roundoff seeded by the bulk rows and cannot be held
/// to their own tiny scale.
pub fn worst_residual(spec: &ProblemSpec, sol: &FloquetSolution) -> f64 {
    let p = spec.prec();
    let mut worst = Float::with_val(p, 0);
    let mut scale = Float::with_val(p, 0);
    for k in 0..sol.coeffs.len() {
        let (s, mx) = row_residual(spec, sol, sol.n_of(k));
        if s > worst {
            worst = s;
        }
        if mx > scale {
            scale = mx;
        }
    }
    if scale.is_zero() {
        return f64::INFINITY;
    }
    Float::with_val(p, worst / scale).to_f64()
}

/// Machine epsilon of the working precision.
fn eps_of(p: u32) -> f64 {
    2f64.powi(1 - p as i32)
}

/// Solves the recurrence at fixed `nu` on both parity classes, replacing one
/// row by a normalization `c_{n0} = 1`, and keeps the class whose dropped row
/// has the smaller relative residual. Candidate `n0` positions step away from
/// zero in case a normalization point lands on a node of the solution.
pub fn initial_coefficients(spec: &ProblemSpec, nu: &Cx) -> Result<FloquetSolution> {
    let p = spec.prec();
    let m_neg = spec.cfg.m_neg as i64;
    let n_pos = spec.cfg.n_pos as i64;
    let mut best: Option<(f64, FloquetSolution)> = None;
    for parity in 0..2i64 {
        let mut n_min = -m_neg;
        if n_min.rem_euclid(2) != parity {
            n_min += 1;
        }
        let len = ((n_pos - n_min) / 2) as usize + 1;
        for cand in [0i64, 2, -2, 4, -4] {
            let n0 = cand + parity;
            let r = ((n0 - n_min) / 2) as usize;
            let mut a = assemble(spec, nu, n_min, len);
            a.replace_row_with_unit(r);
            let mut rhs = vec![Cx::zero(p); len];
            rhs[r] = Cx::one(p);
            let piv = match a.factor() {
                Ok(piv) => piv,
                Err(_) => continue,
            };
            a.solve_factored(&piv, &mut rhs);
            if rhs.iter().any(|c| !c.is_finite()) {
                continue;
            }
            let sol = FloquetSolution {
                nu: nu.clone(),
                n_min,
                coeffs: rhs,
            };
            let (s, mx) = row_residual(spec, &sol, n0);
            if mx.is_zero() {
                continue;
            }
            let rel = Float::with_val(p, s / mx).to_f64();
            if !rel.is_finite() {
                continue;
            }
            if best.as_ref().map_or(true, |(b, _)| rel < *b) {
                best = Some((rel, sol));
            }
        }
    }
    let (_, mut sol) = best.ok_or_else(|| {
        Error::SingularSystem("no viable seed solve on either parity class".into())
    })?;
    normalize_peak(&mut sol);
    Ok(sol)
}

fn normalize_peak(sol: &mut FloquetSolution) {
    let k = argmax_mag(&sol.coeffs);
    let pivot = sol.coeffs[k].clone();
    for c in &mut sol.coeffs {
        *c = &*c / &pivot;
    }
}

/// Newton iteration on `(c, nu)`: solves the bordered system
///
/// ```text
/// [ A(nu)     dA/dnu c ] [c']      [0]
/// [ conj(c)^T        0 ] [dnu]  =  [1]
/// ```
///
/// until `|dnu|` reaches the roundoff plateau of the working precision.
/// `newton_tol` marks entry into the polishing phase: from there the step
/// contracts quadratically, so the plateau is a few more iterations away at
/// any precision; polishing also stops as soon as the contraction stalls.
pub fn newton_refine(spec: &ProblemSpec, sol: &mut FloquetSolution) -> Result<u32> {
    let p = spec.prec();
    let plateau = 1e3 * eps_of(p) * (1.0 + sol.nu.abs().to_f64());
    let enter = spec.cfg.newton_tol.max(plateau);
    let one = Cx::one(p);
    let mut prev_step = f64::INFINITY;
    let mut growth = 0u32;
    let mut polish = false;
    for it in 1..=(spec.cfg.newton_max_iter + 1) {
        let len = sol.coeffs.len();
        let a = assemble(spec, &sol.nu, sol.n_min, len);
        let d: Vec<Cx> = (0..len)
            .map(|k| {
                // d/dnu of the diagonal term: 2(n + nu) - 1.
                let n = sol.n_of(k);
                let mut f = &Cx::from_real(Float::with_val(p, n)) + &sol.nu;
                f = f.scale_f64(2.0);
                f = &f - &one;
                &f * &sol.coeffs[k]
            })
            .collect();
        // Border vector scaled so b* c = 1 holds at the current iterate;
        // with any other scale the computed correction is dnu / (b* c) and
        // the iteration degrades from quadratic to linear.
        let s2 = sol
            .coeffs
            .iter()
            .fold(Float::with_val(p, 0), |acc, c| acc + c.norm_sqr());
        let inv = Float::with_val(p, s2.recip_ref());
        let b: Vec<Cx> = sol.coeffs.iter().map(|c| c.conj().scale(&inv)).collect();
        let bs = solve_bordered(a, &d, &b)?;
        let step = bs.s.abs().to_f64();
        sol.nu += &bs.s;
        sol.coeffs = bs.x;
        normalize_peak(sol);
        if polish {
            if step < plateau || step > 0.1 * prev_step {
                return Ok(it);
            }
            prev_step = step;
            continue;
        }
        if step < enter {
            polish = true;
            prev_step = step;
            continue;
        }
        if step > 3.0 * prev_step {
            growth += 1;
            if growth >= 2 {
                return Err(Error::Divergence { iters: it });
            }
        } else {
            growth = 0;
        }
        prev_step = step;
    }
    Err(Error::NonConvergence {
        iters: spec.cfg.newton_max_iter,
        last_step: prev_step,
    })
}

/// Relative magnitude of the window-edge coefficients (peak is 1).
fn edge_excess(sol: &FloquetSolution) -> f64 {
    let first = sol.coeffs.first().map(|c| c.abs().to_f64()).unwrap_or(0.0);
    let last = sol.coeffs.last().map(|c| c.abs().to_f64()).unwrap_or(0.0);
    first.max(last)
}

/// Seed, refine and QA one Laurent solution, growing the window when the
/// tails have not decayed inside it.
fn solve_one(spec: &ProblemSpec, seed: &Cx) -> Result<FloquetSolution> {
    let mut local = spec.clone();
    for attempt in 0..3 {
        let mut sol = initial_coefficients(&local, seed)?;
        newton_refine(&local, &mut sol)?;
        let edge = edge_excess(&sol);
        if edge > local.cfg.edge_tol {
            if attempt == 2 {
                return Err(Error::WindowExhausted(format!(
                    "edge coefficient {:.3e} above {:.3e} with window [-{}, {}]",
                    edge, local.cfg.edge_tol, local.cfg.m_neg, local.cfg.n_pos
                )));
            }
            local.cfg.m_neg = local.cfg.m_neg * 3 / 2;
            local.cfg.n_pos = local.cfg.n_pos * 3 / 2;
            continue;
        }
        let res = worst_residual(&local, &sol);
        let gate = local.cfg.residual_tol * eps_of(local.prec());
        if res > gate {
            return Err(Error::Inconsistency(format!(
                "refined solution leaves relative recurrence residual {res:.3e} (gate {gate:.3e})"
            )));
        }
        return Ok(sol);
    }
    unreachable!("window growth loop returns or errors within three attempts")
}

/// The two Laurent solutions at one energy.
#[derive(Clone, Debug)]
pub struct FloquetPair {
    pub regime: IndexRegime,
    pub w1: FloquetSolution,
    pub w2: FloquetSolution,
}

/// Full pipeline: circuit, indices, refinement of `w1`, and the companion
/// `w2` by conjugation (conjugate regime) or independent refinement (real
/// regime).
pub fn floquet_pair(spec: &ProblemSpec) -> Result<FloquetPair> {
    let cm = circuit_matrix(spec)?;
    let (nu1, nu2, regime) = indices_from_circuit(spec, &cm)?;
    let w1 = solve_one(spec, &nu1)?;
    let w2 = match regime {
        IndexRegime::ConjugatePair => w1.conjugate(),
        IndexRegime::RealPair => solve_one(spec, &nu2)?,
    };
    Ok(FloquetPair { regime, w1, w2 })
}

/// Continuation entry point: refines from a previous index, skipping the
/// circuit integration. The regime is read off the refined index.
pub fn floquet_pair_seeded(spec: &ProblemSpec, nu1_seed: &Cx) -> Result<FloquetPair> {
    let w1 = solve_one(spec, nu1_seed)?;
    let im = w1.nu.im.to_f64().abs();
    let regime = if im < 1e-10 {
        IndexRegime::RealPair
    } else {
        IndexRegime::ConjugatePair
    };
    let w2 = match regime {
        IndexRegime::ConjugatePair => w1.conjugate(),
        IndexRegime::RealPair => {
            let p = spec.prec();
            let seed2 = Cx::new(
                Float::with_val(p, 1u32 - &w1.nu.re),
                Float::with_val(p, 0),
            );
            let w2 = solve_one(spec, &seed2)?;
            let gap = (&w2.nu - &w1.nu).abs().to_f64();
            if gap < 1e-8 {
                return Err(Error::Inconsistency(
                    "index refinement collapsed both solutions onto one root".into(),
                ));
            }
            w2
        }
    };
    Ok(FloquetPair { regime, w1, w2 })
}

/// Laurent evaluation `w(z) = z^nu sum c_n z^n` for real `z > 0`.
#[derive(Clone, Debug)]
pub struct FloquetValue {
    pub value: Cx,
    /// Cancellation ratio `sum |t_n| / |sum t_n|`.
    pub cond: f64,
    /// Largest window-edge term relative to the sum.
    pub edge_rel: f64,
}

pub fn evaluate_floquet(sol: &FloquetSolution, z: &Float) -> FloquetValue {
    assert!(z.is_sign_positive() && !z.is_zero(), "require z > 0");
    let p = sol.nu.prec();
    let lnz = Float::with_val(p, z.ln_ref());
    let z2 = Float::with_val(p, z.square_ref());
    let mut pw = Float::with_val(p, &lnz * sol.n_min).exp();
    let mut terms: Vec<(Float, Cx)> = Vec::with_capacity(sol.coeffs.len());
    for c in &sol.coeffs {
        let t = c.scale(&pw);
        terms.push((t.abs(), t));
        pw *= &z2;
    }
    let edge_mag = {
        let f = terms.first().map(|(m, _)| m.to_f64()).unwrap_or(0.0);
        let l = terms.last().map(|(m, _)| m.to_f64()).unwrap_or(0.0);
        f.max(l)
    };
    // Smallest-first accumulation limits roundoff in the cancellating sum.
    terms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut sum = Cx::zero(p);
    let mut abs_sum = Float::with_val(p, 0);
    for (m, t) in &terms {
        sum += t;
        abs_sum += m;
    }
    let smag = sum.abs();
    let (cond, edge_rel) = if smag.is_zero() {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (
            Float::with_val(p, &abs_sum / &smag).to_f64(),
            edge_mag / smag.to_f64(),
        )
    };
    let prefac = sol.nu.scale(&lnz).exp();
    FloquetValue {
        value: &prefac * &sum,
        cond,
        edge_rel,
    }
}

/// Term-wise derivative `w'(z) = z^{nu-1} sum (n+nu) c_n z^n`, with the same
/// cancellation diagnostics as `evaluate_floquet`. Legitimate because the
/// Laurent series converges on an annulus containing any evaluated z.
pub fn evaluate_floquet_deriv(sol: &FloquetSolution, z: &Float) -> FloquetValue {
    assert!(z.is_sign_positive() && !z.is_zero(), "require z > 0");
    let p = sol.nu.prec();
    let lnz = Float::with_val(p, z.ln_ref());
    let z2 = Float::with_val(p, z.square_ref());
    let mut pw = Float::with_val(p, &lnz * sol.n_min).exp();
    let mut terms: Vec<(Float, Cx)> = Vec::with_capacity(sol.coeffs.len());
    for (k, c) in sol.coeffs.iter().enumerate() {
        let mut f = sol.nu.clone();
        f.re += Float::with_val(p, sol.n_of(k));
        let t = (c * &f).scale(&pw);
        terms.push((t.abs(), t));
        pw *= &z2;
    }
    let edge_mag = {
        let f = terms.first().map(|(m, _)| m.to_f64()).unwrap_or(0.0);
        let l = terms.last().map(|(m, _)| m.to_f64()).unwrap_or(0.0);
        f.max(l)
    };
    terms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut sum = Cx::zero(p);
    let mut abs_sum = Float::with_val(p, 0);
    for (m, t) in &terms {
        sum += t;
        abs_sum += m;
    }
    let smag = sum.abs();
    let (cond, edge_rel) = if smag.is_zero() {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (
            Float::with_val(p, &abs_sum / &smag).to_f64(),
            edge_mag / smag.to_f64(),
        )
    };
    let mut numin1 = sol.nu.clone();
    numin1.re -= 1u32;
    let prefac = numin1.scale(&lnz).exp();
    FloquetValue {
        value: &prefac * &sum,
        cond,
        edge_rel,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_problem, NumericsConfig};

    // Reference bound state: the deepest level at lambda = 40, l = 0.
    const EPS_REF: f64 = -11.909183;

    fn spec(lambda: f64, l: i64, eps: f64) -> ProblemSpec {
        make_problem(lambda, l, eps, NumericsConfig::default()).unwrap()
    }

    #[test]
    fn circuit_determinant_is_unimodular() {
        let s = spec(40.0, 0, EPS_REF);
        let cm = circuit_matrix(&s).unwrap();
        let det = cm.det();
        let one = Cx::one(s.prec());
        let gap = (&det - &one).abs().to_f64();
        assert!(gap < 1e-9, "det gap {gap:e}");
        // The trace is real up to roundoff and large for a deep state.
        let tr = cm.trace();
        assert!(tr.re.to_f64() < -1e8);
        assert!(tr.im.to_f64().abs() < 1e-6 * tr.re.to_f64().abs());
    }

    #[test]
    fn indices_match_reference_values() {
        let s = spec(40.0, 0, EPS_REF);
        let cm = circuit_matrix(&s).unwrap();
        let (nu1, nu2, regime) = indices_from_circuit(&s, &cm).unwrap();
        assert_eq!(regime, IndexRegime::ConjugatePair);
        let re = nu1.re.to_f64();
        let im = nu1.im.to_f64();
        assert!((re - 0.5).abs() < 1e-7, "Re nu1 = {re}");
        assert!((im + 3.31231657).abs() < 1e-7, "Im nu1 = {im}");
        // nu1 + nu2 is an integer (multiplier product is det = 1).
        let sum_re = re + nu2.re.to_f64();
        let sum_im = im + nu2.im.to_f64();
        assert!((sum_re - sum_re.round()).abs() < 1e-9);
        assert!(sum_im.abs() < 1e-9);
    }

    #[test]
    fn refinement_reaches_working_precision() {
        let s = spec(40.0, 0, EPS_REF);
        let pair = floquet_pair(&s).unwrap();
        assert_eq!(pair.regime, IndexRegime::ConjugatePair);
        let res = worst_residual(&s, &pair.w1);
        assert!(res < 1e-25, "residual {res:e}");
        // The refined index stays put: re-seeding from it converges
        // immediately to the same value.
        let again = floquet_pair_seeded(&s, &pair.w1.nu).unwrap();
        let drift = (&again.w1.nu - &pair.w1.nu).abs().to_f64();
        assert!(drift < 1e-20, "drift {drift:e}");
        // Edges decayed.
        assert!(edge_excess(&pair.w1) < s.cfg.edge_tol);
    }

    #[test]
    fn laurent_solution_solves_the_equation_pointwise() {
        let s = spec(40.0, 0, EPS_REF);
        let pair = floquet_pair(&s).unwrap();
        let p = s.prec();
        let h = Float::with_val(p, 2f64.powi(-30));
        for z0 in [0.9f64, 1.3, 2.0] {
            let z = s.re(z0);
            let zp = Float::with_val(p, &z + &h);
            let zm = Float::with_val(p, &z - &h);
            let wc = evaluate_floquet(&pair.w1, &z).value;
            let wp = evaluate_floquet(&pair.w1, &zp).value;
            let wm = evaluate_floquet(&pair.w1, &zm).value;
            // Second difference vs q(z) w.
            let mut num = &wp + &wm;
            num.sub_mul(&wc, &Cx::from_f64(p, 2.0, 0.0));
            let h2 = Float::with_val(p, h.square_ref());
            let wpp = num.scale(&Float::with_val(p, h2.recip_ref()));
            let z2 = Float::with_val(p, z.square_ref());
            let z4 = Float::with_val(p, z2.square_ref());
            let z6 = Float::with_val(p, &z4 * &z2);
            let z12 = Float::with_val(p, z6.square_ref());
            let mut q = Float::with_val(p, &s.lambda / &z12);
            let tl = Float::with_val(p, 2u32 * &s.lambda);
            q -= Float::with_val(p, &tl / &z6);
            q += s.l_term() / &z2;
            q -= &s.epsilon;
            let qw = wc.scale(&q);
            let rel = (&wpp - &qw).abs().to_f64() / qw.abs().to_f64();
            assert!(rel < 1e-12, "pointwise residual {rel:e} at z = {z0}");
        }
    }

    #[test]
    fn conjugate_companion_agrees_with_independent_refinement() {
        let s = spec(40.0, 0, EPS_REF);
        let cm = circuit_matrix(&s).unwrap();
        let (_, nu2, regime) = indices_from_circuit(&s, &cm).unwrap();
        assert_eq!(regime, IndexRegime::ConjugatePair);
        let pair = floquet_pair(&s).unwrap();
        // Refine w2 from the circuit estimate of nu2, independently of w1.
        let w2b = solve_one(&s, &nu2).unwrap();
        let nu_gap = (&w2b.nu - &pair.w2.nu).abs().to_f64();
        assert!(nu_gap < 1e-12, "nu gap {nu_gap:e}");
        assert_eq!(w2b.n_min, pair.w2.n_min);
        let mut worst = 0.0f64;
        for (a, b) in w2b.coeffs.iter().zip(pair.w2.coeffs.iter()) {
            let g = (a - b).abs().to_f64();
            if g > worst {
                worst = g;
            }
        }
        assert!(worst < 1e-10, "coefficient gap {worst:e}");
    }

    #[test]
    fn regime_flips_along_the_energy_axis() {
        // At lambda = 2 the multiplier trace crosses the unimodular band
        // |tr| < 2 between eps = -0.85 and eps = -0.7.
        let s0 = spec(2.0, 0, -1.0);
        let mut regimes = Vec::new();
        for i in 0..7 {
            let eps = -1.9 + 0.3 * i as f64;
            let s = s0.with_epsilon(s0.re(eps));
            let cm = circuit_matrix(&s).unwrap();
            match indices_from_circuit(&s, &cm) {
                Ok((nu1, nu2, regime)) => {
                    match regime {
                        IndexRegime::ConjugatePair => {
                            // nu2 = conj(nu1) to circuit accuracy.
                            let g = (&nu2 - &nu1.conj()).abs().to_f64();
                            assert!(g < 1e-8, "conj gap {g:e} at eps {eps}");
                            assert!(nu1.im.to_f64() < 0.0);
                        }
                        IndexRegime::RealPair => {
                            assert!(nu1.im.to_f64().abs() < 1e-8);
                            assert!(nu2.im.to_f64().abs() < 1e-8);
                            let sum = nu1.re.to_f64() + nu2.re.to_f64();
                            assert!(
                                (sum - sum.round()).abs() < 1e-8,
                                "real pair sum {sum} at eps {eps}"
                            );
                        }
                    }
                    regimes.push(regime);
                }
                Err(Error::DegenerateIndices { .. }) => {}
                Err(e) => panic!("unexpected error at eps {eps}: {e}"),
            }
        }
        let flips = regimes.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(
            flips >= 1,
            "expected at least one regime flip, regimes {regimes:?}"
        );
    }

    #[test]
    fn real_regime_pair_refines_independently() {
        // A shallow state at small intensity sits inside the unimodular band.
        let s = spec(2.0, 0, -0.55);
        let cm = circuit_matrix(&s).unwrap();
        let (nu1, _, regime) = indices_from_circuit(&s, &cm).unwrap();
        assert_eq!(regime, IndexRegime::RealPair);
        let pair = floquet_pair_seeded(&s, &nu1).unwrap();
        assert_eq!(pair.regime, IndexRegime::RealPair);
        assert!(pair.w1.nu.im.to_f64().abs() < 1e-12);
        assert!(pair.w2.nu.im.to_f64().abs() < 1e-12);
        let sum = pair.w1.nu.re.to_f64() + pair.w2.nu.re.to_f64();
        assert!((sum - 1.0).abs() < 1e-10, "nu1 + nu2 = {sum}");
        assert!(worst_residual(&s, &pair.w2) < 1e-20);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let s = spec(40.0, 0, EPS_REF);
        let pair = floquet_pair(&s).unwrap();
        let p = s.prec();
        let z = s.re(1.5);
        let h = Float::with_val(p, 2f64.powi(-40));
        let zp = Float::with_val(p, &z + &h);
        let zm = Float::with_val(p, &z - &h);
        let fd = (&evaluate_floquet(&pair.w1, &zp).value - &evaluate_floquet(&pair.w1, &zm).value)
            .scale(&Float::with_val(p, h.recip_ref()))
            .scale_f64(0.5);
        let an = evaluate_floquet_deriv(&pair.w1, &z).value;
        let rel = (&fd - &an).abs().to_f64() / an.abs().to_f64();
        assert!(rel < 1e-14, "fd mismatch {rel:e}");
    }

    #[test]
    fn pair_wronskian_is_constant_in_z() {
        // No first-derivative term in the equation, so w1 w2' - w1' w2 is an
        // exact constant; its numerical drift measures series evaluation
        // quality end to end.
        for (lambda, l, eps) in [(40.0, 0, EPS_REF), (2.0, 0, -0.55)] {
            let s = spec(lambda, l, eps);
            let pair = floquet_pair(&s).unwrap();
            let mut values = Vec::new();
            for zf in [1.0, 1.5, 2.0] {
                let z = s.re(zf);
                let v1 = evaluate_floquet(&pair.w1, &z).value;
                let v2 = evaluate_floquet(&pair.w2, &z).value;
                let d1 = evaluate_floquet_deriv(&pair.w1, &z).value;
                let d2 = evaluate_floquet_deriv(&pair.w2, &z).value;
                let mut w = &v1 * &d2;
                w.sub_mul(&d1, &v2);
                values.push(w);
            }
            let scale = values[0].abs().to_f64();
            assert!(scale > 0.0, "degenerate wronskian at lambda {lambda}");
            for v in &values[1..] {
                let gap = (v - &values[0]).abs().to_f64() / scale;
                assert!(gap < 1e-10, "wronskian drift {gap:e} at lambda {lambda}");
            }
        }
    }
}
