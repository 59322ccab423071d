//! The Laplace problem with line singularities along `x1 = 1/2` and `x2 = 1/2`,
//! and the quadrature plans for its load functional `(f, v)`.
//!
//! The source contains `|x_i - 1/2|^{-2/3}`. The Gauss-Jacobi plan splits each
//! singular term at `1/2` and maps the halves to `[-1, 1]` so the singular
//! factor becomes a Jacobi weight; the remaining `|x_i - 1/2|^{4/3}` terms are
//! integrated on the ordinary tensor grid. The naive plans apply a composite
//! Legendre rule straight to `f`.

use serde::{Deserialize, Serialize};

use super::Jet;
use crate::error::{Error, Result};
use crate::quadrature::{compose_breakpoints, gauss_jacobi, uniform_breakpoints, Rule1D};

fn bubble(t: f64) -> [f64; 3] {
    [t * (1.0 - t), 1.0 - 2.0 * t, -2.0]
}

/// `|t - 1/2|^{4/3}` and its first derivative.
fn kink(t: f64) -> [f64; 2] {
    let s = t - 0.5;
    let a = s.abs();
    [a.powf(4.0 / 3.0), 4.0 / 3.0 * a.powf(1.0 / 3.0) * s.signum()]
}

/// Reduced source multiplying `|x1 - 1/2|^{-2/3}`; the `x2` counterpart is the mirror image.
pub fn reduced_source(x: [f64; 2]) -> f64 {
    -x[1] * (x[1] - 1.0) * (70.0 / 9.0 * x[0] * (x[0] - 1.0) + 11.0 / 6.0)
}

/// Part of the source without the `-2/3` power singularity.
pub fn smooth_source(x: [f64; 2]) -> f64 {
    -2.0 * x[1] * (x[1] - 1.0) * kink(x[1])[0] - 2.0 * x[0] * (x[0] - 1.0) * kink(x[0])[0]
}

pub fn source(x: [f64; 2]) -> f64 {
    let sing = |t: f64| (t - 0.5).abs().powf(-2.0 / 3.0);
    sing(x[0]) * reduced_source(x) + sing(x[1]) * reduced_source([x[1], x[0]]) + smooth_source(x)
}

pub fn exact(x: [f64; 2]) -> Jet {
    let [px, dpx, _] = bubble(x[0]);
    let [py, dpy, _] = bubble(x[1]);
    let [sx, dsx] = kink(x[0]);
    let [sy, dsy] = kink(x[1]);
    Jet {
        v: px * py * (sx + sy),
        gx: dpx * py * (sx + sy) + px * py * dsx,
        gy: px * dpy * (sx + sy) + px * py * dsy,
        lap: -source(x),
    }
}

/// How the load functional is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularPlan {
    /// Gauss-Jacobi in the singular direction, Legendre elsewhere.
    Jacobi,
    /// Composite Legendre applied directly to `f`.
    Naive,
    /// As `Naive` with extra subintervals inside `[0.49, 0.51]`.
    Refined,
}

/// A tensor-grid piece of the load functional: `Σ wx_i wy_j s_ij v(x_i, y_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadPiece {
    pub label: String,
    pub xs: Vec<f64>,
    pub wx: Vec<f64>,
    pub ys: Vec<f64>,
    pub wy: Vec<f64>,
    /// Row-major (`x` outer) values of the reduced source.
    pub values: Vec<f64>,
}

impl LoadPiece {
    fn new(label: &str, xs: Vec<f64>, wx: Vec<f64>, ys: Vec<f64>, wy: Vec<f64>, s: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(xs.len() * ys.len());
        for &x in &xs {
            for &y in &ys {
                let v = s([x, y]);
                if !v.is_finite() {
                    return Err(Error::Quadrature(format!(
                        "load piece {label} places a node on a singular line at ({x}, {y})"
                    )));
                }
                values.push(v);
            }
        }
        Ok(LoadPiece {
            label: label.into(),
            xs,
            wx,
            ys,
            wy,
            values,
        })
    }

    pub fn apply(&self, v: impl Fn([f64; 2]) -> f64) -> f64 {
        let ny = self.ys.len();
        let mut acc = 0.0;
        for (i, (&x, &wx)) in self.xs.iter().zip(&self.wx).enumerate() {
            for (j, (&y, &wy)) in self.ys.iter().zip(&self.wy).enumerate() {
                acc += wx * wy * self.values[i * ny + j] * v([x, y]);
            }
        }
        acc
    }
}

/// Breakpoints of `m` uniform subintervals on `[0, 1]` with `[0.49, 0.51]`
/// replaced by `m_window` uniform subintervals.
pub fn refined_breakpoints(m: usize, m_window: usize) -> Vec<f64> {
    let (lo, hi) = (0.49, 0.51);
    let mut b: Vec<f64> = uniform_breakpoints(0.0, 1.0, m)
        .into_iter()
        .filter(|&t| t < lo || t > hi)
        .collect();
    b.extend(uniform_breakpoints(lo, hi, m_window));
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

/// The load functional pieces for `plan`.
///
/// `smooth` is the composite rule on `[0, 1]` used in the regular directions
/// (and for the whole integral in the naive plans); `n_jacobi` is the number
/// of Gauss-Jacobi nodes per half.
pub fn load_pieces(plan: SingularPlan, smooth: &Rule1D, n_jacobi: usize) -> Result<Vec<LoadPiece>> {
    if smooth.interval != [0.0, 1.0] {
        return Err(Error::Quadrature(
            "the regular-direction rule must cover [0, 1]".into(),
        ));
    }
    let (s_nodes, s_w) = (smooth.nodes.clone(), smooth.weights.clone());
    match plan {
        SingularPlan::Naive | SingularPlan::Refined => Ok(vec![LoadPiece::new(
            "f",
            s_nodes.clone(),
            s_w.clone(),
            s_nodes,
            s_w,
            source,
        )?]),
        SingularPlan::Jacobi => {
            if n_jacobi == 0 {
                return Err(Error::Quadrature(
                    "the Jacobi plan needs a Gauss-Jacobi rule (n_jacobi >= 1)".into(),
                ));
            }
            let scale = 4f64.powf(-1.0 / 3.0);
            let left = gauss_jacobi(n_jacobi, -2.0 / 3.0, 0.0)?;
            let right = gauss_jacobi(n_jacobi, 0.0, -2.0 / 3.0)?;
            let map = |r: &Rule1D, shift: f64| -> (Vec<f64>, Vec<f64>) {
                (
                    r.nodes.iter().map(|t| (t + shift) / 4.0).collect(),
                    r.weights.iter().map(|w| w * scale).collect(),
                )
            };
            let (lx, lw) = map(&left, 1.0);
            let (rx, rw) = map(&right, 3.0);
            let mirrored = |x: [f64; 2]| reduced_source([x[1], x[0]]);
            Ok(vec![
                LoadPiece::new("I1 left", lx.clone(), lw.clone(), s_nodes.clone(), s_w.clone(), reduced_source)?,
                LoadPiece::new("I1 right", rx.clone(), rw.clone(), s_nodes.clone(), s_w.clone(), reduced_source)?,
                LoadPiece::new("I2 left", s_nodes.clone(), s_w.clone(), lx, lw, mirrored)?,
                LoadPiece::new("I2 right", s_nodes.clone(), s_w.clone(), rx, rw, mirrored)?,
                LoadPiece::new("I3+I4", s_nodes.clone(), s_w.clone(), s_nodes, s_w, smooth_source)?,
            ])
        }
    }
}

/// Regular-direction rule for `plan`: `m` subintervals of `base`, refined
/// around `1/2` for the refined plan.
pub fn plan_rule(plan: SingularPlan, base: &Rule1D, m: usize) -> Result<Rule1D> {
    let breaks = match plan {
        SingularPlan::Refined => refined_breakpoints(m, m.max(2)),
        _ => uniform_breakpoints(0.0, 1.0, m),
    };
    compose_breakpoints(base, &breaks)
}

/// `(f, v)` under a plan.
pub fn load_functional(pieces: &[LoadPiece], v: impl Fn([f64; 2]) -> f64 + Copy) -> f64 {
    pieces.iter().map(|p| p.apply(v)).sum()
}
