//! Second-order forward-mode dual numbers.
//!
//! A [`Jet`] carries a value together with its first and second derivative
//! with respect to a single variable. Arithmetic propagates both derivatives
//! by the product and chain rules, so evaluating an expression on
//! `Jet::variable(x)` yields `f(x)`, `f'(x)` and `f''(x)` exact to rounding.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Jet { v, d1, d2 }
    }

    pub const fn constant(v: f64) -> Self {
        Jet { v, d1: 0.0, d2: 0.0 }
    }

    /// The independent variable at `x`.
    pub const fn variable(x: f64) -> Self {
        Jet { v: x, d1: 1.0, d2: 0.0 }
    }

    pub fn is_constant(&self) -> bool {
        self.d1 == 0.0 && self.d2 == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }

    /// Derivative of the requested order (0, 1 or 2).
    pub fn order(&self, order: usize) -> f64 {
        match order {
            0 => self.v,
            1 => self.d1,
            _ => self.d2,
        }
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.v`.
    #[inline]
    fn chain(self, g: f64, dg: f64, d2g: f64) -> Jet {
        Jet {
            v: g,
            d1: dg * self.d1,
            d2: d2g * self.d1 * self.d1 + dg * self.d2,
        }
    }

    pub fn sqrt(self) -> Jet {
        let s = self.v.sqrt();
        let ds = 0.5 / s;
        self.chain(s, ds, -0.25 / (s * self.v))
    }

    pub fn exp(self) -> Jet {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Jet {
        let r = 1.0 / self.v;
        self.chain(self.v.ln(), r, -r * r)
    }

    pub fn sin(self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    /// `self^p` for a constant exponent.
    pub fn powf(self, p: f64) -> Jet {
        let g = self.v.powf(p);
        if p == 0.0 {
            return Jet::constant(g);
        }
        let dg = p * self.v.powf(p - 1.0);
        let d2g = if p == 1.0 {
            0.0
        } else {
            p * (p - 1.0) * self.v.powf(p - 2.0)
        };
        self.chain(g, dg, d2g)
    }

    /// `self^other` with a possibly varying exponent.
    pub fn pow(self, other: Jet) -> Jet {
        if other.is_constant() {
            self.powf(other.v)
        } else {
            let mut r = (other * self.ln()).exp();
            r.v = self.v.powf(other.v);
            r
        }
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Self {
        Jet::constant(v)
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, o: Jet) -> Jet {
        Jet::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        Jet::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        Jet::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: Jet) -> Jet {
        // q = a / b  =>  q' b + q b' = a',  q'' b + 2 q' b' + q b'' = a''
        let q = self.v / o.v;
        let q1 = (self.d1 - q * o.d1) / o.v;
        let q2 = (self.d2 - 2.0 * q1 * o.d1 - q * o.d2) / o.v;
        Jet::new(q, q1, q2)
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        Jet::new(-self.v, -self.d1, -self.d2)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, s: f64) -> Jet {
        Jet::new(self.v * s, self.d1 * s, self.d2 * s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn sqrt_derivatives() {
        let j = Jet::variable(0.25).sqrt();
        assert!(close(j.v, 0.5));
        assert!(close(j.d1, 1.0));
        // -1/(4 x^{3/2}) = -2
        assert!(close(j.d2, -2.0));
    }

    #[test]
    fn quotient_rule() {
        // f = x / (1 + x^2) at x = 2
        let x = Jet::variable(2.0);
        let f = x / (Jet::constant(1.0) + x * x);
        assert!(close(f.v, 0.4));
        // f' = (1 - x^2)/(1 + x^2)^2 = -3/25
        assert!(close(f.d1, -0.12));
        // f'' = 2x(x^2 - 3)/(1 + x^2)^3 = 4/125
        assert!(close(f.d2, 0.032));
    }

    #[test]
    fn variable_exponent_matches_constant_path() {
        let x = Jet::variable(1.7);
        let a = x.powf(2.5);
        let b = x.pow(Jet::new(2.5, 0.0, 0.0));
        assert_eq!(a, b);
        // x^x
        let xx = x.pow(x);
        let v = 1.7f64.powf(1.7);
        assert!(close(xx.d1, v * (1.7f64.ln() + 1.0)));
    }

    #[test]
    fn trig_and_exp() {
        let x = Jet::variable(0.3);
        let s = x.sin();
        assert!(close(s.d2, -0.3f64.sin()));
        let e = (x * 2.0).exp();
        assert!(close(e.d2, 4.0 * 0.6f64.exp()));
        let l = x.ln();
        assert!(close(l.d2, -1.0 / 0.09));
    }
}
