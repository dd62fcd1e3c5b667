//! Problem definition: the dimensionless radial equation
//!
//! ```text
//! -z^2 w'' + (lambda z^-10 - 2 lambda z^-4 + l(l+1) - eps z^2) w = 0
//! ```
//!
//! together with the numeric configuration shared by all solvers. Lengths are
//! measured in units of the potential-minimum radius and energies in units of
//! the well-depth scale, so `lambda` is the single intensity parameter.

use crate::error::{Error, Result};
use crate::num::Cx;
use rug::Float;

/// Truncations, tolerances and precision shared across the pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct NumericsConfig {
    /// Mantissa width in bits for every internal value.
    pub precision_bits: u32,
    /// Laurent window extent below zero (coefficients reach n = -m_neg).
    pub m_neg: u32,
    /// Laurent window extent above zero (coefficients reach n = +n_pos).
    pub n_pos: u32,
    /// Length of the formal series at the irregular points.
    pub thome_terms: u32,
    /// Minimum angular subdivision for the unit-circle circuit integration.
    pub circuit_steps: u32,
    /// Relative step-error target of the circuit integration.
    pub circuit_rtol: f64,
    /// Stop threshold on |delta nu| for index refinement.
    pub newton_tol: f64,
    /// Iteration cap for index refinement.
    pub newton_max_iter: u32,
    /// Recurrence-residual bound for accepted Floquet solutions, in units of
    /// the working precision's machine epsilon.
    pub residual_tol: f64,
    /// Relative bound on window-edge coefficients.
    pub edge_tol: f64,
    /// Relative agreement required between Wronskian extractions at
    /// different lattice points.
    pub consistency_tol: f64,
    /// Relative quantization residual accepted at a located root.
    pub quantization_tol: f64,
    /// Absolute energy tolerance of root refinement.
    pub root_tol: f64,
    /// Relative tolerance for wave-function evaluation.
    pub wavefunction_tol: f64,
    /// Relative tolerance of the normalization quadrature.
    pub quad_tol: f64,
    /// Discriminant ratio below which circuit eigenvalues count as degenerate.
    pub degeneracy_tol: f64,
    /// Half-width of the energy interval stepped over around a degeneracy.
    pub exclusion_width: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            precision_bits: 113,
            m_neg: 360,
            n_pos: 360,
            thome_terms: 100,
            circuit_steps: 4096,
            circuit_rtol: 1e-12,
            newton_tol: 1e-13,
            newton_max_iter: 25,
            residual_tol: 1e12,
            edge_tol: 1e-20,
            consistency_tol: 1e-8,
            quantization_tol: 1e-8,
            root_tol: 1e-9,
            wavefunction_tol: 1e-9,
            quad_tol: 1e-10,
            degeneracy_tol: 1e-20,
            exclusion_width: 1e-6,
        }
    }
}

/// Window/truncation floor below which the machinery is not viable.
pub const MIN_TRUNCATION: u32 = 20;
/// Smallest accepted mantissa width.
pub const MIN_PRECISION: u32 = 24;

impl NumericsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.precision_bits < MIN_PRECISION {
            return Err(Error::Config(format!(
                "precision_bits = {} below minimum {}",
                self.precision_bits, MIN_PRECISION
            )));
        }
        for (name, v) in [
            ("m_neg", self.m_neg),
            ("n_pos", self.n_pos),
            ("thome_terms", self.thome_terms),
        ] {
            if v < MIN_TRUNCATION {
                return Err(Error::Config(format!(
                    "{name} = {v} below minimum viable {MIN_TRUNCATION}"
                )));
            }
        }
        if self.circuit_steps < 1000 {
            return Err(Error::Config(format!(
                "circuit_steps = {} below minimum 1000",
                self.circuit_steps
            )));
        }
        for (name, v) in [
            ("circuit_rtol", self.circuit_rtol),
            ("newton_tol", self.newton_tol),
            ("residual_tol", self.residual_tol),
            ("edge_tol", self.edge_tol),
            ("consistency_tol", self.consistency_tol),
            ("quantization_tol", self.quantization_tol),
            ("root_tol", self.root_tol),
            ("wavefunction_tol", self.wavefunction_tol),
            ("quad_tol", self.quad_tol),
            ("degeneracy_tol", self.degeneracy_tol),
            ("exclusion_width", self.exclusion_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.newton_max_iter == 0 {
            return Err(Error::Config("newton_max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// One fully specified problem instance: intensity, angular momentum,
/// dimensionless energy, numerics.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub lambda: Float,
    pub l: u32,
    pub epsilon: Float,
    pub cfg: NumericsConfig,
}

/// Validates inputs and binds them to the configured precision.
pub fn make_problem(lambda: f64, l: i64, epsilon: f64, cfg: NumericsConfig) -> Result<ProblemSpec> {
    cfg.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!(
            "potential intensity must be positive, got {lambda}"
        )));
    }
    if l < 0 {
        return Err(Error::Domain(format!("angular momentum must be >= 0, got {l}")));
    }
    if !(epsilon <= 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!(
            "only bound-state energies (epsilon <= 0) are supported, got {epsilon}"
        )));
    }
    let p = cfg.precision_bits;
    Ok(ProblemSpec {
        lambda: Float::with_val(p, lambda),
        l: l as u32,
        epsilon: Float::with_val(p, epsilon),
        cfg,
    })
}

impl ProblemSpec {
    pub fn prec(&self) -> u32 {
        self.cfg.precision_bits
    }

    /// Same problem at a different energy.
    pub fn with_epsilon(&self, epsilon: Float) -> ProblemSpec {
        let mut s = self.clone();
        s.epsilon = Float::with_val(self.prec(), &epsilon);
        s
    }

    /// l(l+1) at working precision.
    pub fn l_term(&self) -> Float {
        Float::with_val(self.prec(), self.l * (self.l + 1))
    }

    pub fn re(&self, v: f64) -> Float {
        Float::with_val(self.prec(), v)
    }

    pub fn cx(&self, re: f64, im: f64) -> Cx {
        Cx::from_f64(self.prec(), re, im)
    }
}

/// Characteristic exponents of the formal solutions at both irregular points.
#[derive(Clone, Debug)]
pub struct ExponentCoefficients {
    /// Recessive exponent at infinity, -sqrt(-eps).
    pub alpha3: Cx,
    /// Dominant exponent at infinity, +sqrt(-eps); exactly -alpha3.
    pub alpha4: Cx,
    /// Recessive exponent at the origin, -sqrt(lambda).
    pub beta5: Cx,
    /// Dominant exponent at the origin, +sqrt(lambda); exactly -beta5.
    pub beta6: Cx,
    /// Power prefactor exponent of the origin solutions.
    pub rho: i32,
}

/// Exponents for the spec's energy/intensity, with exact negation symmetry.
pub fn exponent_coefficients(spec: &ProblemSpec) -> ExponentCoefficients {
    let p = spec.prec();
    let neg_eps = -spec.epsilon.clone();
    let a = Float::with_val(p, neg_eps.sqrt_ref());
    let b = Float::with_val(p, spec.lambda.sqrt_ref());
    ExponentCoefficients {
        alpha3: Cx::from_real(-a.clone()),
        alpha4: Cx::from_real(a),
        beta5: Cx::from_real(-b.clone()),
        beta6: Cx::from_real(b),
        rho: 3,
    }
}
