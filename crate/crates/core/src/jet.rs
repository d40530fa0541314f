//! First-order jets: a value with its gradient in `(x, y, t)`.
//!
//! Filtered basic fields come with kernel-derivative gradients; every
//! nonlinear combination of them is carried through the chain rule here.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 3],
}

impl Jet {
    pub const ZERO: Jet = Jet { v: 0.0, g: [0.0; 3] };

    pub fn new(v: f64, g: [f64; 3]) -> Self {
        Jet { v, g }
    }

    pub fn constant(v: f64) -> Self {
        Jet { v, g: [0.0; 3] }
    }

    /// Jet of `φ(self)` given `φ(v)` and `φ'(v)`.
    pub fn chain(self, val: f64, deriv: f64) -> Jet {
        Jet { v: val, g: [deriv * self.g[0], deriv * self.g[1], deriv * self.g[2]] }
    }

    /// Jet of `φ(a, b)` given the value and both partial derivatives.
    pub fn chain2(a: Jet, b: Jet, val: f64, da: f64, db: f64) -> Jet {
        Jet { v: val, g: [da * a.g[0] + db * b.g[0], da * a.g[1] + db * b.g[1], da * a.g[2] + db * b.g[2]] }
    }

    pub fn recip(self) -> Jet {
        let r = 1.0 / self.v;
        self.chain(r, -r * r)
    }

    pub fn sq(self) -> Jet {
        self * self
    }

    pub fn dt(&self) -> f64 {
        self.g[2]
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, g: [self.g[0] + o.g[0], self.g[1] + o.g[1], self.g[2] + o.g[2]] }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, g: [self.g[0] - o.g[0], self.g[1] - o.g[1], self.g[2] - o.g[2]] }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet { v: self.v * o.v, g: [self.g[0] * o.v + self.v * o.g[0], self.g[1] * o.v + self.v * o.g[1], self.g[2] * o.v + self.v * o.g[2]] }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        let q = self.v / o.v;
        Jet { v: q, g: [(self.g[0] - q * o.g[0]) / o.v, (self.g[1] - q * o.g[1]) / o.v, (self.g[2] - q * o.g[2]) / o.v] }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, g: [-self.g[0], -self.g[1], -self.g[2]] }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        Jet { v: self.v * c, g: [self.g[0] * c, self.g[1] * c, self.g[2] * c] }
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j * self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, c: f64) -> Jet {
        Jet { v: self.v + c, g: self.g }
    }
}

impl std::iter::Sum for Jet {
    fn sum<I: Iterator<Item = Jet>>(iter: I) -> Jet {
        iter.fold(Jet::ZERO, |a, b| a + b)
    }
}
