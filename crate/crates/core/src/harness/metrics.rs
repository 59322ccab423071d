//! Error measures against a known exact solution.

use serde::{Deserialize, Serialize};

use crate::problems::Rect;
use crate::space::{Discretization, FieldJets, Role};

/// Errors measured by quadrature on the volume blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadErrors {
    /// `‖u − u_N‖_a / ‖u‖_a`.
    pub e_energy: f64,
    /// `‖u − u_N‖₀ / ‖u‖₀`.
    pub e_l2: f64,
    /// `‖u − u_N‖_a`.
    pub energy_error: f64,
    /// `‖u‖_a`.
    pub energy_norm: f64,
}

/// Per-volume-block contributions `(‖u − u_N‖²_a, ‖u‖²_a, ‖u − u_N‖²₀, ‖u‖²₀)`.
pub fn block_norms(disc: &Discretization, fields: &[Vec<FieldJets>]) -> Vec<[f64; 4]> {
    let beta = disc.beta;
    disc.blocks
        .iter()
        .zip(fields)
        .filter_map(|(b, f)| {
            let (Role::Volume { alpha, .. }, Some(ex)) = (&b.role, &b.exact) else {
                return None;
            };
            let w = b.layout.weights();
            let u = &f[0];
            let mut acc = [0.0; 4];
            for i in 0..w.len() {
                let (dv, dx, dy) = (ex.u[i] - u.u[i], ex.ux[i] - u.ux[i], ex.uy[i] - u.uy[i]);
                acc[0] += w[i] * (alpha * (dx * dx + dy * dy) + beta * dv * dv);
                acc[1] += w[i] * (alpha * (ex.ux[i] * ex.ux[i] + ex.uy[i] * ex.uy[i]) + beta * ex.u[i] * ex.u[i]);
                acc[2] += w[i] * dv * dv;
                acc[3] += w[i] * ex.u[i] * ex.u[i];
            }
            Some(acc)
        })
        .collect()
}

pub fn quadrature_errors(disc: &Discretization, fields: &[Vec<FieldJets>]) -> Option<QuadErrors> {
    let parts = block_norms(disc, fields);
    if parts.is_empty() {
        return None;
    }
    let mut t = [0.0; 4];
    for p in &parts {
        for k in 0..4 {
            t[k] += p[k];
        }
    }
    let (ea, na, el, nl) = (t[0].max(0.0), t[1].max(0.0), t[2].max(0.0), t[3].max(0.0));
    Some(QuadErrors {
        e_energy: (ea / na).sqrt(),
        e_l2: (el / nl).sqrt(),
        energy_error: ea.sqrt(),
        energy_norm: na.sqrt(),
    })
}

/// `n × n` uniform grid over the rectangle including its boundary, row-major
/// with `x₁` outer.
pub fn test_grid(domain: Rect, n: usize) -> Vec<[f64; 2]> {
    let at = |r: [f64; 2], i: usize| {
        if n == 1 {
            0.5 * (r[0] + r[1])
        } else if i + 1 == n {
            r[1]
        } else {
            r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64
        }
    };
    (0..n)
        .flat_map(|i| (0..n).map(move |j| [at(domain.x, i), at(domain.y, j)]))
        .collect()
}

/// `sqrt(Σ (u_N − u)² / Σ u²)` over the test points.
pub fn e_test(approx: &[f64], exact: &[f64]) -> f64 {
    let num: f64 = approx.iter().zip(exact).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = exact.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_covers_corners() {
        let g = test_grid(Rect { x: [-1.0, 1.0], y: [0.0, 2.0] }, 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], [-1.0, 0.0]);
        assert_eq!(g[1], [-1.0, 1.0]);
        assert_eq!(g[8], [1.0, 2.0]);
    }

    #[test]
    fn e_test_is_homogeneous() {
        let u = [1.0, -2.0, 0.5];
        let v: Vec<f64> = u.iter().map(|x| 1.01 * x).collect();
        assert!((e_test(&v, &u) - 0.01).abs() < 1e-14);
        assert_eq!(e_test(&u, &u), 0.0);
    }
}
