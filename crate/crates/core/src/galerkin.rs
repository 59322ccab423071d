//! Stiffness matrix and load vector on the current basis, and the solve for
//! the coefficients.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::space::{BlockBasis, Discretization, Role};

pub const DEFAULT_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Coefficients, once solved.
    pub c: Option<DVector<f64>>,
    /// `λ_max / λ_min` of `A` (infinite when `λ_min <= 0`).
    pub condition_estimate: f64,
    /// Eigenvalues of `A`, ascending, once solved.
    pub eigenvalues: Vec<f64>,
    /// Whether the truncated pseudo-inverse was used.
    pub used_pinv: bool,
    /// Number of eigenvalues dropped by the pseudo-inverse.
    pub truncated: usize,
}

fn scatter_vec(b: &mut DVector<f64>, cols: &[usize], v: &ndarray::Array1<f64>, sign: f64) {
    for (i, &j) in cols.iter().enumerate() {
        b[j] += sign * v[i];
    }
}

/// `A_mn = a(φ_n, φ_m)`, `B_m = (f, φ_m) + ⟨g, φ_m⟩_Γ − a(lift, φ_m)`, summed block by block in order.
pub fn assemble(disc: &Discretization, basis: &[BlockBasis], n: usize) -> Result<GalerkinSystem> {
    if basis.len() != disc.blocks.len() {
        return Err(Error::Shape(format!(
            "{} block bases for {} blocks",
            basis.len(),
            disc.blocks.len()
        )));
    }
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for (blk, bb) in disc.blocks.iter().zip(basis) {
        let m = blk.layout.len();
        for br in bb {
            let rows = br.expand_rows();
            if rows != m {
                return Err(Error::Shape(format!(
                    "block {} has {m} quadrature points but the basis was evaluated at {rows}",
                    blk.label
                )));
            }
        }
        let br = &bb[0];
        match &blk.role {
            Role::Volume { alpha, source, .. } => {
                let local = br.energy_matrix(&blk.layout, *alpha, disc.beta);
                for (i, &gi) in br.cols.iter().enumerate() {
                    for (j, &gj) in br.cols.iter().enumerate() {
                        a[(gi, gj)] += local[[i, j]];
                    }
                }
                if let Some(f) = source {
                    scatter_vec(&mut b, &br.cols, &br.project(&blk.layout, f, None, None), 1.0);
                }
                if let Some(l) = &blk.lift {
                    let sv: Vec<f64> = l.u.iter().map(|u| disc.beta * u).collect();
                    let sx: Vec<f64> = l.ux.iter().map(|u| alpha * u).collect();
                    let sy: Vec<f64> = l.uy.iter().map(|u| alpha * u).collect();
                    scatter_vec(&mut b, &br.cols, &br.project(&blk.layout, &sv, Some(&sx), Some(&sy)), -1.0);
                }
            }
            Role::Load { values, .. } => {
                scatter_vec(&mut b, &br.cols, &br.project(&blk.layout, values, None, None), 1.0);
            }
            Role::Interface { g, .. } => {
                scatter_vec(&mut b, &br.cols, &br.project(&blk.layout, g, None, None), 1.0);
            }
        }
    }
    let at = a.transpose();
    let a = (a + at) * 0.5;
    Ok(GalerkinSystem {
        a,
        b,
        c: None,
        condition_estimate: f64::NAN,
        eigenvalues: Vec::new(),
        used_pinv: false,
        truncated: 0,
    })
}

impl GalerkinSystem {
    pub fn from_parts(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        let at = a.transpose();
        GalerkinSystem {
            a: (a + at) * 0.5,
            b,
            c: None,
            condition_estimate: f64::NAN,
            eigenvalues: Vec::new(),
            used_pinv: false,
            truncated: 0,
        }
    }

    /// Solves `A c = B`: Cholesky when `A` is positive definite with condition
    /// below `1/rcond`, otherwise the eigenvalue-truncated pseudo-inverse.
    pub fn solve(&mut self, rcond: f64) -> Result<&DVector<f64>> {
        let n = self.b.len();
        if n == 0 {
            return Err(Error::DegenerateSubspace { dim: 0, threshold: 0.0 });
        }
        if !self.a.iter().chain(self.b.iter()).all(|v| v.is_finite()) {
            return Err(Error::Shape("non-finite entries in the Galerkin system".into()));
        }
        let eig = self.a.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        self.eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let lmax = self.eigenvalues[n - 1];
        let lmin = self.eigenvalues[0];
        self.condition_estimate = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
        let threshold = rcond * lmax.max(0.0);
        if self.condition_estimate <= 1.0 / rcond {
            if let Some(ch) = self.a.clone().cholesky() {
                self.c = Some(ch.solve(&self.b));
                self.used_pinv = false;
                self.truncated = 0;
                return Ok(self.c.as_ref().unwrap());
            }
        }
        if !(lmax > 0.0) {
            return Err(Error::DegenerateSubspace { dim: n, threshold });
        }
        let mut c = DVector::zeros(n);
        let mut kept = 0;
        for &i in &order {
            let l = eig.eigenvalues[i];
            if l < threshold {
                continue;
            }
            kept += 1;
            let v = eig.eigenvectors.column(i);
            c += v * (v.dot(&self.b) / l);
        }
        if kept == 0 {
            return Err(Error::DegenerateSubspace { dim: n, threshold });
        }
        self.truncated = n - kept;
        self.used_pinv = true;
        self.c = Some(c);
        Ok(self.c.as_ref().unwrap())
    }

    /// `‖A c − B‖∞`.
    pub fn residual(&self) -> f64 {
        match &self.c {
            Some(c) => (&self.a * c - &self.b).amax(),
            None => f64::NAN,
        }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::problems::catalog;
    use crate::space::{sine_mode, AnalyticSpace, QuadConfig, Subspace};

    fn poisson() -> (crate::problems::ProblemSpec, Discretization) {
        let p = catalog(
            "reaction_diffusion",
            None,
            Some(&serde_json::json!({"alpha": 1.0, "beta": 0.0})),
        )
        .unwrap();
        let q = QuadConfig {
            points: 10,
            subintervals: 8,
            ..QuadConfig::default()
        };
        let d = Discretization::build(&p, &q).unwrap();
        (p, d)
    }

    #[test]
    fn sine_basis_recovers_exact_solution() {
        let (_, d) = poisson();
        let space = AnalyticSpace::new(vec![sine_mode(1.0, 1.0), sine_mode(2.0, 1.0)]);
        let basis = space.evaluate(&[], &d).unwrap();
        let mut sys = assemble(&d, &basis, 2).unwrap();
        // a(φ_mn, φ_mn) = π²(m² + n²)/4, off-diagonal zero
        assert!((sys.a[(0, 0)] - PI * PI * 2.0 / 4.0).abs() < 1e-12);
        assert!((sys.a[(1, 1)] - PI * PI * 5.0 / 4.0).abs() < 1e-12);
        assert!(sys.a[(0, 1)].abs() < 1e-12);
        assert!((sys.b[0] - PI * PI / 2.0).abs() < 1e-12 && sys.b[1].abs() < 1e-12);
        let c = sys.solve(DEFAULT_RCOND).unwrap().clone();
        assert!((c[0] - 1.0).abs() < 1e-10 && c[1].abs() < 1e-10);
        assert!(sys.residual() < 1e-10);
        assert!(!sys.used_pinv);
    }

    #[test]
    fn identity_gives_rhs() {
        let mut sys = GalerkinSystem::from_parts(DMatrix::identity(3, 3), DVector::from_vec(vec![1.0, -2.0, 0.5]));
        let c = sys.solve(DEFAULT_RCOND).unwrap();
        assert_eq!(c.as_slice(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn duplicated_basis_uses_min_norm_pseudo_inverse() {
        // basis (a, b, c, a): Gram matrix of rank 3
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.5, 0.2, 0.1, 0.2, 1.0]);
        let e = DMatrix::from_row_slice(4, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 1., 1., 0., 0.]);
        let a = &e * &g * e.transpose();
        let b = &e * DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let mut sys = GalerkinSystem::from_parts(a.clone(), b.clone());
        let c = sys.solve(DEFAULT_RCOND).unwrap().clone();
        assert!(sys.used_pinv);
        assert!((&a * &c - &b).amax() <= 1e-10);
        // oracle: minimum-norm least squares through the SVD
        let oracle = a.clone().svd(true, true).solve(&b, 1e-10).unwrap();
        assert!((&c - &oracle).amax() < 1e-10);
        // duplicated coefficients split evenly
        assert!((c[0] - c[3]).abs() < 1e-10);
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let mut sys = GalerkinSystem::from_parts(DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, 1.0]));
        assert!(matches!(sys.solve(DEFAULT_RCOND), Err(Error::DegenerateSubspace { .. })));
    }
}
