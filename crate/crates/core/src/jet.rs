//! Second-order forward-mode derivatives in two variables.
//!
//! Analytic scenario data (initial parameterizations, their normals and
//! boundary frames) are written once in terms of [`Jet`] and differentiated
//! exactly, instead of hand-deriving every partial.

use std::f64::consts::PI;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value with first and second partial derivatives with respect to `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub du: f64,
    pub dv: f64,
    pub duu: f64,
    pub duv: f64,
    pub dvv: f64,
}

impl Jet {
    pub const fn constant(v: f64) -> Self {
        Jet { v, du: 0.0, dv: 0.0, duu: 0.0, duv: 0.0, dvv: 0.0 }
    }

    /// The coordinate functions `u` and `v` at a point.
    pub fn coords(u: f64, v: f64) -> (Self, Self) {
        (
            Jet { v: u, du: 1.0, ..Jet::default() },
            Jet { v, dv: 1.0, ..Jet::default() },
        )
    }

    pub fn grad(&self) -> [f64; 2] {
        [self.du, self.dv]
    }

    fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        Jet {
            v: f,
            du: df * self.du,
            dv: df * self.dv,
            duu: ddf * self.du * self.du + df * self.duu,
            duv: ddf * self.du * self.dv + df * self.duv,
            dvv: ddf * self.dv * self.dv + df * self.dvv,
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    /// `sin(pi * x)`, exactly zero at integers.
    pub fn sin_pi(self) -> Self {
        let s = sin_pi(self.v);
        let c = sin_pi(self.v + 0.5);
        self.chain(s, PI * c, -PI * PI * s)
    }

    pub fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.v))
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn scale(self, s: f64) -> Self {
        Jet {
            v: s * self.v,
            du: s * self.du,
            dv: s * self.dv,
            duu: s * self.duu,
            duv: s * self.duv,
            dvv: s * self.dvv,
        }
    }
}

/// `sin(pi * x)` with exact zeros at integer arguments.
pub fn sin_pi(x: f64) -> f64 {
    let n = x.round();
    let r = x - n;
    let s = (PI * r).sin();
    if (n as i64).rem_euclid(2) == 0 {
        s
    } else {
        -s
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            du: self.du + o.du,
            dv: self.dv + o.dv,
            duu: self.duu + o.duu,
            duv: self.duv + o.duv,
            dvv: self.dvv + o.dvv,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            du: self.du * o.v + self.v * o.du,
            dv: self.dv * o.v + self.v * o.dv,
            duu: self.duu * o.v + 2.0 * self.du * o.du + self.v * o.duu,
            duv: self.duv * o.v + self.du * o.dv + self.dv * o.du + self.v * o.duv,
            dvv: self.dvv * o.v + 2.0 * self.dv * o.dv + self.v * o.dvv,
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.v += c;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, c: f64) -> Jet {
        self.v -= c;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        self.scale(c)
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j.scale(self)
    }
}
