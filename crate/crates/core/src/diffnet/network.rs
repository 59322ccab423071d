use ndarray::Array2;

use super::mlp::{Jets, Mlp};
use super::{ArchitectureSpec, Family};
use crate::error::{Error, Result};

/// Value, first and second derivative of `p` one-dimensional functions at `M` points (`M × p`).
#[derive(Debug, Clone, PartialEq)]
pub struct Jet1 {
    pub v: Array2<f64>,
    pub d: Array2<f64>,
    pub dd: Array2<f64>,
}

impl Jet1 {
    pub fn zeros(m: usize, p: usize) -> Self {
        Jet1 {
            v: Array2::zeros((m, p)),
            d: Array2::zeros((m, p)),
            dd: Array2::zeros((m, p)),
        }
    }

    fn from_jets(j: Jets) -> Self {
        let Jets { v, mut g, l } = j;
        Jet1 {
            v,
            d: g.remove(0),
            dd: l,
        }
    }

    fn into_jets(self) -> Jets {
        Jets {
            v: self.v,
            g: vec![self.d],
            l: self.dd,
        }
    }
}

/// Values, gradients and Laplacians of `p` basis functions at `M` points, each `M × p`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEvaluation {
    pub values: Array2<f64>,
    pub grads: [Array2<f64>; 2],
    pub laps: Array2<f64>,
}

impl BasisEvaluation {
    pub fn zeros(m: usize, p: usize) -> Self {
        BasisEvaluation {
            values: Array2::zeros((m, p)),
            grads: [Array2::zeros((m, p)), Array2::zeros((m, p))],
            laps: Array2::zeros((m, p)),
        }
    }

    pub fn n_points(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_finite(&self) -> bool {
        [&self.values, &self.grads[0], &self.grads[1], &self.laps]
            .iter()
            .all(|a| a.iter().all(|v| v.is_finite()))
    }
}

/// Per-direction factors of a tensor network on a grid: basis `j` at
/// `(xs[i], ys[k])` is `x.v[i, j] · y.v[k, j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TnnGrid {
    pub x: Jet1,
    pub y: Jet1,
}

impl TnnGrid {
    /// Pointwise evaluation on the grid, row-major with `x` outer.
    pub fn expand(&self) -> BasisEvaluation {
        let (nx, p) = self.x.v.dim();
        let ny = self.y.v.nrows();
        let mut out = BasisEvaluation::zeros(nx * ny, p);
        for i in 0..nx {
            for k in 0..ny {
                let row = i * ny + k;
                for j in 0..p {
                    let (a, da, dda) = (self.x.v[[i, j]], self.x.d[[i, j]], self.x.dd[[i, j]]);
                    let (b, db, ddb) = (self.y.v[[k, j]], self.y.d[[k, j]], self.y.dd[[k, j]]);
                    out.values[[row, j]] = a * b;
                    out.grads[0][[row, j]] = da * b;
                    out.grads[1][[row, j]] = a * db;
                    out.laps[[row, j]] = dda * b + a * ddb;
                }
            }
        }
        out
    }
}

/// A network producing `p` basis functions of two variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub arch: ArchitectureSpec,
    pub subnets: Vec<Mlp>,
    pub offset: usize,
}

fn column(xs: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((xs.len(), 1), xs.to_vec()).expect("column shape")
}

fn points_matrix(points: &[[f64; 2]], d: usize) -> Array2<f64> {
    Array2::from_shape_fn((points.len(), d), |(i, k)| points[i][k])
}

impl Network {
    /// A network whose parameters start at `offset` in the global vector.
    pub fn new(arch: ArchitectureSpec, offset: usize) -> Result<Self> {
        arch.validate()?;
        let mut at = offset;
        let subnets = arch
            .subnet_dims()
            .into_iter()
            .map(|dims| {
                let m = Mlp::new(dims, arch.skip_period, at);
                at += m.n_params();
                m
            })
            .collect();
        Ok(Network {
            arch,
            subnets,
            offset,
        })
    }

    pub fn n_params(&self) -> usize {
        self.subnets.iter().map(Mlp::n_params).sum()
    }

    pub fn p(&self) -> usize {
        self.arch.output_dim
    }

    pub fn is_tnn(&self) -> bool {
        self.arch.family == Family::Tnn
    }

    fn require_tnn(&self) -> Result<()> {
        if !self.is_tnn() {
            return Err(Error::Architecture(format!(
                "{:?} network has no per-direction factors",
                self.arch.family
            )));
        }
        Ok(())
    }

    /// Jets of tensor subnetwork `dir` (0 for `x1`, 1 for `x2`) at `coords`.
    pub fn subnet_jets(&self, params: &[f64], dir: usize, coords: &[f64]) -> Result<Jet1> {
        self.require_tnn()?;
        let x = column(coords);
        Ok(Jet1::from_jets(self.subnets[dir].jets(params, x.view())?))
    }

    pub fn tnn_factors(&self, params: &[f64], xs: &[f64], ys: &[f64]) -> Result<TnnGrid> {
        Ok(TnnGrid {
            x: self.subnet_jets(params, 0, xs)?,
            y: self.subnet_jets(params, 1, ys)?,
        })
    }

    /// Basis jets on the grid `xs × ys` from one evaluation per coordinate.
    pub fn eval_tnn_on_grid(&self, params: &[f64], xs: &[f64], ys: &[f64]) -> Result<BasisEvaluation> {
        Ok(self.tnn_factors(params, xs, ys)?.expand())
    }

    pub fn eval_basis(&self, params: &[f64], points: &[[f64; 2]]) -> Result<BasisEvaluation> {
        if self.is_tnn() {
            let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
            let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
            let a = self.subnet_jets(params, 0, &xs)?;
            let b = self.subnet_jets(params, 1, &ys)?;
            return Ok(BasisEvaluation {
                values: &a.v * &b.v,
                grads: [&a.d * &b.v, &a.v * &b.d],
                laps: &a.dd * &b.v + &a.v * &b.dd,
            });
        }
        let d = self.arch.input_dim;
        let x = points_matrix(points, d);
        let mut j = self.subnets[0].jets(params, x.view())?;
        let gy = if d == 2 {
            j.g.pop().unwrap()
        } else {
            Array2::zeros(j.v.dim())
        };
        let gx = j.g.pop().unwrap();
        Ok(BasisEvaluation {
            values: j.v,
            grads: [gx, gy],
            laps: j.l,
        })
    }

    /// Basis values only.
    pub fn eval_values(&self, params: &[f64], points: &[[f64; 2]]) -> Result<Array2<f64>> {
        if self.is_tnn() {
            let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
            let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
            let a = self.subnets[0].values(params, column(&xs).view())?;
            let b = self.subnets[1].values(params, column(&ys).view())?;
            return Ok(a * b);
        }
        let x = points_matrix(points, self.arch.input_dim);
        self.subnets[0].values(params, x.view())
    }

    /// Values of the per-direction factors (no derivatives).
    pub fn subnet_values(&self, params: &[f64], dir: usize, coords: &[f64]) -> Result<Array2<f64>> {
        self.require_tnn()?;
        self.subnets[dir].values(params, column(coords).view())
    }

    /// Backpropagates adjoints of subnetwork `dir`'s jets at `coords`.
    pub fn backprop_subnet(&self, params: &[f64], dir: usize, coords: &[f64], adj: Jet1, grad: &mut [f64]) -> Result<()> {
        self.require_tnn()?;
        let x = column(coords);
        self.subnets[dir].backprop(params, x.view(), &adj.into_jets(), grad)
    }

    /// Adds `∂L/∂θ` to `grad` given the sensitivities of a scalar loss to the
    /// basis values, gradients and Laplacians at `points`.
    pub fn loss_param_gradient(
        &self,
        params: &[f64],
        points: &[[f64; 2]],
        adj: &BasisEvaluation,
        grad: &mut [f64],
    ) -> Result<()> {
        if adj.n_points() != points.len() || adj.n_basis() != self.p() {
            return Err(Error::Shape(format!(
                "adjoint is {}×{}, expected {}×{}",
                adj.n_points(),
                adj.n_basis(),
                points.len(),
                self.p()
            )));
        }
        if self.is_tnn() {
            let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
            let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
            let a = self.subnet_jets(params, 0, &xs)?;
            let b = self.subnet_jets(params, 1, &ys)?;
            let (av, ax, ay, al) = (&adj.values, &adj.grads[0], &adj.grads[1], &adj.laps);
            let adj_a = Jet1 {
                v: av * &b.v + ay * &b.d + al * &b.dd,
                d: ax * &b.v,
                dd: al * &b.v,
            };
            let adj_b = Jet1 {
                v: av * &a.v + ax * &a.d + al * &a.dd,
                d: ay * &a.v,
                dd: al * &a.v,
            };
            self.backprop_subnet(params, 0, &xs, adj_a, grad)?;
            return self.backprop_subnet(params, 1, &ys, adj_b, grad);
        }
        let d = self.arch.input_dim;
        let x = points_matrix(points, d);
        let jets = Jets {
            v: adj.values.clone(),
            g: adj.grads[..d].to_vec(),
            l: adj.laps.clone(),
        };
        self.subnets[0].backprop(params, x.view(), &jets, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::{init_params, Family};

    fn hand_built_sin() -> (Network, Vec<f64>) {
        // one hidden unit: h = sin(x1), output = h
        let mut arch = ArchitectureSpec::new(Family::Fnn2d, 1, vec![1]);
        arch.input_dim = 2;
        let net = Network::new(arch, 0).unwrap();
        // layer 0: W = [1, 0], b = 0; layer 1: W = [1], b = 0
        let params = vec![1.0, 0.0, 0.0, 1.0, 0.0];
        (net, params)
    }

    #[test]
    fn sin_of_first_coordinate() {
        let (net, params) = hand_built_sin();
        let x = [0.7, -0.3];
        let e = net.eval_basis(&params, &[x]).unwrap();
        assert!((e.values[[0, 0]] - x[0].sin()).abs() < 1e-15);
        assert!((e.grads[0][[0, 0]] - x[0].cos()).abs() < 1e-15);
        assert_eq!(e.grads[1][[0, 0]], 0.0);
        assert!((e.laps[[0, 0]] + x[0].sin()).abs() < 1e-15);
    }

    #[test]
    fn zero_parameters_give_zero_jets() {
        for family in [Family::Fnn2d, Family::Resnet2d, Family::Tnn] {
            let arch = ArchitectureSpec::new(family, 3, vec![4, 4]);
            let net = Network::new(arch, 0).unwrap();
            let params = vec![0.0; net.n_params()];
            let e = net.eval_basis(&params, &[[0.1, 0.2], [0.5, -0.4]]).unwrap();
            assert!(e.values.iter().chain(e.laps.iter()).all(|&v| v == 0.0));
            assert!(e.grads.iter().all(|g| g.iter().all(|&v| v == 0.0)));
        }
    }

    #[test]
    fn grid_matches_pointwise() {
        let arch = ArchitectureSpec::new(Family::Tnn, 3, vec![6, 6]);
        let pv = init_params(&arch, 1).unwrap();
        let net = Network::new(arch, 0).unwrap();
        let xs = [0.0, 0.3, 0.9];
        let ys = [0.1, 0.5];
        let grid = net.eval_tnn_on_grid(&pv.values, &xs, &ys).unwrap();
        let pts: Vec<[f64; 2]> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| [x, y])).collect();
        let pw = net.eval_basis(&pv.values, &pts).unwrap();
        assert_eq!(grid, pw);
        let fnn = Network::new(ArchitectureSpec::new(Family::Fnn2d, 3, vec![4]), 0).unwrap();
        assert!(fnn.eval_tnn_on_grid(&pv.values, &xs, &ys).is_err());
    }

    #[test]
    fn zero_adjoint_gives_zero_gradient() {
        let arch = ArchitectureSpec::new(Family::Resnet2d, 2, vec![5, 5, 5]);
        let pv = init_params(&arch, 2).unwrap();
        let net = Network::new(arch, 0).unwrap();
        let pts = [[0.1, 0.2], [0.3, 0.4]];
        let mut g = vec![0.0; net.n_params()];
        net.loss_param_gradient(&pv.values, &pts, &BasisEvaluation::zeros(2, 2), &mut g)
            .unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let wrong = BasisEvaluation::zeros(3, 2);
        assert!(net.loss_param_gradient(&pv.values, &pts, &wrong, &mut g).is_err());
    }

    #[test]
    fn non_finite_parameters_are_reported_with_layer() {
        let arch = ArchitectureSpec::new(Family::Fnn2d, 2, vec![3, 3]);
        let net = Network::new(arch, 0).unwrap();
        let mut params = vec![0.1; net.n_params()];
        let (wr, _) = net.subnets[0].layer_ranges(1);
        params[wr.start] = f64::NAN;
        match net.eval_basis(&params, &[[0.1, 0.2]]) {
            Err(Error::NonFinite { layer }) => assert_eq!(layer, 1),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }
}
