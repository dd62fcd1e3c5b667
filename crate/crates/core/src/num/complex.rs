//! Complex arithmetic as a pair of configurable-precision reals.
//!
//! Every operation rounds to the larger precision of its operands, so the
//! working mantissa width is set once where values are created and then
//! propagates through whole computations.

use rug::float::Special;
use rug::Float;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Complex number with `rug::Float` components.
#[derive(Clone, PartialEq)]
pub struct Cx {
    pub re: Float,
    pub im: Float,
}

impl fmt::Debug for Cx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}, {:?})", self.re, self.im)
    }
}

impl fmt::Display for Cx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.re, self.im)
    }
}

impl Cx {
    pub fn new(re: Float, im: Float) -> Self {
        Cx { re, im }
    }

    pub fn zero(prec: u32) -> Self {
        Cx {
            re: Float::new(prec),
            im: Float::new(prec),
        }
    }

    pub fn one(prec: u32) -> Self {
        Cx {
            re: Float::with_val(prec, 1),
            im: Float::new(prec),
        }
    }

    pub fn i(prec: u32) -> Self {
        Cx {
            re: Float::new(prec),
            im: Float::with_val(prec, 1),
        }
    }

    pub fn from_f64(prec: u32, re: f64, im: f64) -> Self {
        Cx {
            re: Float::with_val(prec, re),
            im: Float::with_val(prec, im),
        }
    }

    /// Purely real value at the given precision.
    pub fn real(prec: u32, value: f64) -> Self {
        Self::from_f64(prec, value, 0.0)
    }

    /// Embeds a real into the complex plane, keeping its precision.
    pub fn from_real(re: Float) -> Self {
        let p = re.prec();
        Cx {
            re,
            im: Float::new(p),
        }
    }

    pub fn prec(&self) -> u32 {
        self.re.prec().max(self.im.prec())
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn conj(&self) -> Cx {
        Cx {
            re: self.re.clone(),
            im: -self.im.clone(),
        }
    }

    /// |self|, computed as a hypotenuse to avoid intermediate squaring issues.
    pub fn abs(&self) -> Float {
        let p = self.prec();
        Float::with_val(p, self.re.hypot_ref(&self.im))
    }

    /// |self|^2.
    pub fn norm_sqr(&self) -> Float {
        let p = self.prec();
        let mut t = Float::with_val(p, &self.re * &self.re);
        t += Float::with_val(p, &self.im * &self.im);
        t
    }

    /// Principal argument in (-pi, pi].
    pub fn arg(&self) -> Float {
        let p = self.prec();
        Float::with_val(p, self.im.atan2_ref(&self.re))
    }

    pub fn scale(&self, s: &Float) -> Cx {
        let p = self.prec().max(s.prec());
        Cx {
            re: Float::with_val(p, &self.re * s),
            im: Float::with_val(p, &self.im * s),
        }
    }

    pub fn scale_f64(&self, s: f64) -> Cx {
        let p = self.prec();
        Cx {
            re: Float::with_val(p, &self.re * s),
            im: Float::with_val(p, &self.im * s),
        }
    }

    pub fn div_real(&self, s: &Float) -> Cx {
        let p = self.prec().max(s.prec());
        Cx {
            re: Float::with_val(p, &self.re / s),
            im: Float::with_val(p, &self.im / s),
        }
    }

    /// self * i.
    pub fn mul_i(&self) -> Cx {
        Cx {
            re: -self.im.clone(),
            im: self.re.clone(),
        }
    }

    /// self <- self + a*b, with two scratch temporaries per component.
    pub fn add_mul(&mut self, a: &Cx, b: &Cx) {
        let p = self.prec();
        let mut tre = Float::with_val(p, &a.re * &b.re);
        tre -= Float::with_val(p, &a.im * &b.im);
        let mut tim = Float::with_val(p, &a.re * &b.im);
        tim += Float::with_val(p, &a.im * &b.re);
        self.re += tre;
        self.im += tim;
    }

    /// self <- self - a*b.
    pub fn sub_mul(&mut self, a: &Cx, b: &Cx) {
        let p = self.prec();
        let mut tre = Float::with_val(p, &a.re * &b.re);
        tre -= Float::with_val(p, &a.im * &b.im);
        let mut tim = Float::with_val(p, &a.re * &b.im);
        tim += Float::with_val(p, &a.im * &b.re);
        self.re -= tre;
        self.im -= tim;
    }

    pub fn exp(&self) -> Cx {
        let p = self.prec();
        let r = Float::with_val(p, self.re.exp_ref());
        let (s, c) = Float::with_val(p, &self.im).sin_cos(Float::new(p));
        Cx {
            re: Float::with_val(p, &r * &c),
            im: Float::with_val(p, &r * &s),
        }
    }

    /// Principal logarithm.
    pub fn ln(&self) -> Cx {
        let p = self.prec();
        Cx {
            re: Float::with_val(p, self.abs().ln_ref()),
            im: self.arg(),
        }
    }

    /// Principal square root.
    pub fn sqrt(&self) -> Cx {
        let p = self.prec();
        if self.is_zero() {
            return Cx::zero(p);
        }
        let r = self.abs();
        let mut t = Float::with_val(p, &r + &self.re);
        t /= 2u32;
        let w = Float::with_val(p, t.sqrt_ref());
        if self.re.is_sign_positive() && !w.is_zero() {
            let mut im = Float::with_val(p, &self.im / &w);
            im /= 2u32;
            Cx { re: w, im }
        } else {
            let mut u = Float::with_val(p, &r - &self.re);
            u /= 2u32;
            let mut u = Float::with_val(p, u.sqrt_ref());
            if self.im.is_sign_negative() {
                u = -u;
            }
            let mut re = Float::with_val(p, &self.im / &u);
            re /= 2u32;
            Cx { re, im: u }
        }
    }

    pub fn sin(&self) -> Cx {
        let p = self.prec();
        let (sx, cx) = Float::with_val(p, &self.re).sin_cos(Float::new(p));
        let (shy, chy) = Float::with_val(p, &self.im).sinh_cosh(Float::new(p));
        Cx {
            re: Float::with_val(p, &sx * &chy),
            im: Float::with_val(p, &cx * &shy),
        }
    }

    pub fn cos(&self) -> Cx {
        let p = self.prec();
        let (sx, cx) = Float::with_val(p, &self.re).sin_cos(Float::new(p));
        let (shy, chy) = Float::with_val(p, &self.im).sinh_cosh(Float::new(p));
        Cx {
            re: Float::with_val(p, &cx * &chy),
            im: -Float::with_val(p, &sx * &shy),
        }
    }

    /// self^e for complex exponent, through the principal branch.
    pub fn pow(&self, e: &Cx) -> Cx {
        (&self.ln() * e).exp()
    }

    /// Round-trip to f64 components, for diagnostics only.
    pub fn to_f64s(&self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }

    pub fn nan(prec: u32) -> Cx {
        Cx {
            re: Float::with_val(prec, Special::Nan),
            im: Float::with_val(prec, Special::Nan),
        }
    }
}

fn prec2(a: &Cx, b: &Cx) -> u32 {
    a.prec().max(b.prec())
}

impl Add for &Cx {
    type Output = Cx;
    fn add(self, o: &Cx) -> Cx {
        let p = prec2(self, o);
        Cx {
            re: Float::with_val(p, &self.re + &o.re),
            im: Float::with_val(p, &self.im + &o.im),
        }
    }
}

impl Sub for &Cx {
    type Output = Cx;
    fn sub(self, o: &Cx) -> Cx {
        let p = prec2(self, o);
        Cx {
            re: Float::with_val(p, &self.re - &o.re),
            im: Float::with_val(p, &self.im - &o.im),
        }
    }
}

impl Mul for &Cx {
    type Output = Cx;
    fn mul(self, o: &Cx) -> Cx {
        let p = prec2(self, o);
        let mut re = Float::with_val(p, &self.re * &o.re);
        re -= Float::with_val(p, &self.im * &o.im);
        let mut im = Float::with_val(p, &self.re * &o.im);
        im += Float::with_val(p, &self.im * &o.re);
        Cx { re, im }
    }
}

impl Div for &Cx {
    type Output = Cx;
    // Smith's algorithm, robust against component magnitude spread.
    fn div(self, o: &Cx) -> Cx {
        let p = prec2(self, o);
        let (a, b, c, d) = (&self.re, &self.im, &o.re, &o.im);
        let ac = Float::with_val(p, c.abs_ref());
        let ad = Float::with_val(p, d.abs_ref());
        if ac >= ad {
            let r = Float::with_val(p, d / c);
            let mut den = Float::with_val(p, &r * d);
            den += c;
            let mut re = Float::with_val(p, &r * b);
            re += a;
            re /= &den;
            let mut im = Float::with_val(p, &r * a);
            im -= b;
            im = -im;
            im /= &den;
            Cx { re, im }
        } else {
            let r = Float::with_val(p, c / d);
            let mut den = Float::with_val(p, &r * c);
            den += d;
            let mut re = Float::with_val(p, &r * a);
            re += b;
            re /= &den;
            let mut im = Float::with_val(p, &r * b);
            im -= a;
            im /= &den;
            Cx { re, im }
        }
    }
}

impl Neg for &Cx {
    type Output = Cx;
    fn neg(self) -> Cx {
        Cx {
            re: -self.re.clone(),
            im: -self.im.clone(),
        }
    }
}

impl AddAssign<&Cx> for Cx {
    fn add_assign(&mut self, o: &Cx) {
        self.re += &o.re;
        self.im += &o.im;
    }
}

impl SubAssign<&Cx> for Cx {
    fn sub_assign(&mut self, o: &Cx) {
        self.re -= &o.re;
        self.im -= &o.im;
    }
}
