//! Polynomial factors used to impose boundary and interface constraints.

use serde::{Deserialize, Serialize};

/// A polynomial in one variable, coefficients in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    /// `scale · Π (x - r)`.
    pub fn from_roots(scale: f64, roots: &[f64]) -> Self {
        let mut p = Poly(vec![scale]);
        for &r in roots {
            p = p.mul(&Poly(vec![-r, 1.0]));
        }
        p
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    /// Value, first and second derivative by Horner's scheme.
    pub fn eval3(&self, x: f64) -> [f64; 3] {
        let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
        for &c in self.0.iter().rev() {
            ddp = ddp * x + 2.0 * dp;
            dp = dp * x + p;
            p = p * x + c;
        }
        [p, dp, ddp]
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

/// Value, gradient and Laplacian of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub gx: f64,
    pub gy: f64,
    pub lap: f64,
}

/// `Σ_s p_s(x1) q_s(x2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub terms: Vec<(Poly, Poly)>,
}

impl Factor {
    pub fn product(p: Poly, q: Poly) -> Self {
        Factor {
            terms: vec![(p, q)],
        }
    }

    /// The single product when the factor has rank one.
    pub fn as_product(&self) -> Option<(&Poly, &Poly)> {
        match self.terms.as_slice() {
            [(p, q)] => Some((p, q)),
            _ => None,
        }
    }

    pub fn jet(&self, x: [f64; 2]) -> Jet {
        let mut j = Jet::default();
        for (p, q) in &self.terms {
            let [a, da, dda] = p.eval3(x[0]);
            let [b, db, ddb] = q.eval3(x[1]);
            j.v += a * b;
            j.gx += da * b;
            j.gy += a * db;
            j.lap += dda * b + a * ddb;
        }
        j
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.terms
            .iter()
            .map(|(p, q)| p.eval(x[0]) * q.eval(x[1]))
            .sum()
    }
}
