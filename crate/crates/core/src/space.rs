//! Quadrature blocks for a problem, and the trial space spanned by its
//! networks: basis evaluation on each block, the assembled field, and the
//! parameter gradient of a loss given the field adjoint.
//!
//! A block is a set of weighted points with a role (volume, load-only or
//! interface). Blocks laid out as tensor grids are evaluated through
//! per-direction factors when every network is a tensor network and every
//! boundary factor is a single product; everything else goes through
//! pointwise jets.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::diffnet::{
    init_layout, ArchitectureSpec, BasisEvaluation, Jet1, Network, ParameterLayout, TnnGrid,
};
use crate::error::{Error, Result};
use crate::problems::singular::{self, SingularPlan};
use crate::problems::{Curve, Jet, Kind, Poly, ProblemSpec, Region, TrialTerm};
use crate::quadrature::{
    circle_boundary, compose, difference, gauss_legendre, gauss_lobatto, polar_disk, tensor_product,
    Rule1D,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseRule {
    Legendre,
    Lobatto,
}

/// How a problem is discretized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadConfig {
    pub rule: BaseRule,
    /// Nodes per subinterval.
    pub points: usize,
    /// Subintervals across the full width of the domain; subdomains get a
    /// proportional share.
    pub subintervals: usize,
    pub singular_plan: SingularPlan,
    /// Gauss-Jacobi nodes per half of each singular direction.
    pub n_jacobi: usize,
    /// Extra subintervals inside `[0.49, 0.51]` for the refined plan.
    pub window_subintervals: usize,
    /// Angles of the polar disk rule and of the circle interface rule.
    pub n_theta: usize,
    /// Radial subintervals of the polar disk rule.
    pub radial_subintervals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            rule: BaseRule::Legendre,
            points: 8,
            subintervals: 40,
            singular_plan: SingularPlan::Jacobi,
            n_jacobi: 50,
            window_subintervals: 4,
            n_theta: 128,
            radial_subintervals: 10,
        }
    }
}

impl QuadConfig {
    pub fn base_rule(&self) -> Result<Rule1D> {
        match self.rule {
            BaseRule::Legendre => gauss_legendre(self.points),
            BaseRule::Lobatto => gauss_lobatto(self.points),
        }
    }

    /// Every subinterval and node count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> QuadConfig {
        QuadConfig {
            subintervals: self.subintervals * factor,
            n_jacobi: self.n_jacobi * factor,
            window_subintervals: self.window_subintervals * factor,
            n_theta: self.n_theta * factor,
            radial_subintervals: self.radial_subintervals * factor,
            ..self.clone()
        }
    }

    /// Short identifiers of the rules in use, for reports.
    pub fn ids(&self, problem: &ProblemSpec) -> Vec<String> {
        let base = format!("{:?}{}x{}", self.rule, self.points, self.subintervals).to_lowercase();
        let mut ids = vec![base];
        match problem.kind {
            Kind::SingularLaplace => {
                ids.push(format!("{:?}", self.singular_plan).to_lowercase());
                if self.singular_plan == SingularPlan::Jacobi {
                    ids.push(format!("jacobi{}", self.n_jacobi));
                }
                if self.singular_plan == SingularPlan::Refined {
                    ids.push(format!("window{}", self.window_subintervals));
                }
            }
            Kind::Circle(_) => {
                ids.push(format!("polar{}x{}", self.radial_subintervals, self.n_theta));
                ids.push(format!("circle{}", self.n_theta));
            }
            _ => {}
        }
        ids
    }
}

/// Weighted points of a block.
#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    /// The grid `xs × ys`, row-major with `x` outer.
    Tensor {
        xs: Vec<f64>,
        wx: Vec<f64>,
        ys: Vec<f64>,
        wy: Vec<f64>,
    },
    Scattered {
        points: Vec<[f64; 2]>,
        weights: Vec<f64>,
    },
}

impl Layout {
    fn tensor(rx: &Rule1D, ry: &Rule1D) -> Self {
        Layout::Tensor {
            xs: rx.nodes.clone(),
            wx: rx.weights.clone(),
            ys: ry.nodes.clone(),
            wy: ry.weights.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Layout::Tensor { xs, ys, .. } => xs.len() * ys.len(),
            Layout::Scattered { points, .. } => points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        match self {
            Layout::Tensor { xs, ys, .. } => xs
                .iter()
                .flat_map(|&x| ys.iter().map(move |&y| [x, y]))
                .collect(),
            Layout::Scattered { points, .. } => points.clone(),
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        match self {
            Layout::Tensor { wx, wy, .. } => wx
                .iter()
                .flat_map(|&a| wy.iter().map(move |&b| a * b))
                .collect(),
            Layout::Scattered { weights, .. } => weights.clone(),
        }
    }
}

/// Value, gradient and Laplacian of a scalar field at the points of a block.
/// Also used for the sensitivities of a loss to those quantities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldJets {
    pub u: Vec<f64>,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
    pub lap: Vec<f64>,
}

impl FieldJets {
    pub fn zeros(n: usize) -> Self {
        FieldJets {
            u: vec![0.0; n],
            ux: vec![0.0; n],
            uy: vec![0.0; n],
            lap: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn from_jets(jets: impl IntoIterator<Item = Jet>) -> Self {
        let mut f = FieldJets::default();
        for j in jets {
            f.u.push(j.v);
            f.ux.push(j.gx);
            f.uy.push(j.gy);
            f.lap.push(j.lap);
        }
        f
    }

    pub fn add_assign(&mut self, other: &FieldJets) {
        for (a, b) in [
            (&mut self.u, &other.u),
            (&mut self.ux, &other.ux),
            (&mut self.uy, &other.uy),
            (&mut self.lap, &other.lap),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scaled(&self, s: f64) -> FieldJets {
        let m = |v: &Vec<f64>| v.iter().map(|x| x * s).collect();
        FieldJets {
            u: m(&self.u),
            ux: m(&self.ux),
            uy: m(&self.uy),
            lap: m(&self.lap),
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.u, &self.ux, &self.uy, &self.lap]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Role {
    /// Energy (and, with `source`, load) integrals over subdomain `sub`.
    Volume {
        sub: usize,
        alpha: f64,
        source: Option<Vec<f64>>,
    },
    /// Load-only piece `Σ w s u` on the branch of subdomain `sub`.
    Load { sub: usize, values: Vec<f64> },
    /// Interface with prescribed flux jump `g`; the field is evaluated on both sides.
    Interface {
        iface: usize,
        sides: [usize; 2],
        alpha: [f64; 2],
        normals: Vec<[f64; 2]>,
        g: Vec<f64>,
    },
}

impl Role {
    /// Subdomain branches on which the trial function is evaluated.
    pub fn branches(&self) -> Vec<usize> {
        match self {
            Role::Volume { sub, .. } | Role::Load { sub, .. } => vec![*sub],
            Role::Interface { sides, .. } => sides.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub label: String,
    pub layout: Layout,
    pub role: Role,
    /// Exact solution jets on the block's branch (volume blocks only).
    pub exact: Option<FieldJets>,
    /// Jets of the boundary lifting, added to every branch.
    pub lift: Option<FieldJets>,
}

/// All quadrature blocks of a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub blocks: Vec<Block>,
    pub beta: f64,
    pub quad: QuadConfig,
}

fn share(total: usize, len: f64, width: f64) -> usize {
    ((total as f64 * len / width).round() as usize).max(1)
}

fn point_rule(x: f64) -> Rule1D {
    Rule1D {
        nodes: vec![x],
        weights: vec![1.0],
        interval: [x, x],
        kind: crate::quadrature::RuleKind::Legendre,
    }
}

impl Discretization {
    pub fn build(problem: &ProblemSpec, quad: &QuadConfig) -> Result<Self> {
        if quad.points == 0 || quad.subintervals == 0 {
            return Err(Error::Config("quadrature needs points and subintervals".into()));
        }
        let base = quad.base_rule()?;
        let width = problem.domain.x[1] - problem.domain.x[0];
        let height = problem.domain.y[1] - problem.domain.y[0];
        let mut blocks = Vec::new();
        let volume = |sub: usize, layout: Layout, with_source: bool| -> Block {
            let pts = layout.points();
            Block {
                label: problem.subdomains[sub].label.clone(),
                role: source_role(problem, sub, &pts, with_source),
                exact: Some(FieldJets::from_jets(pts.iter().map(|&x| problem.exact(sub, x)))),
                lift: None,
                layout,
            }
        };
        if let Kind::Circle(_) = problem.kind {
            let sq = compose(&base, problem.domain.x, quad.subintervals)?;
            let radial = compose(&base, [0.0, 1.0], quad.radial_subintervals.max(1))?;
            let disk = polar_disk(&radial, quad.n_theta)?;
            let outer = difference(&tensor_product(&sq, &sq), &disk);
            blocks.push(volume(
                0,
                Layout::Scattered {
                    points: disk.points,
                    weights: disk.weights,
                },
                true,
            ));
            let mut b = volume(
                1,
                Layout::Scattered {
                    points: outer.points,
                    weights: outer.weights,
                },
                true,
            );
            b.label = format!("{} (square minus disk)", b.label);
            blocks.push(b);
            let gamma = circle_boundary(quad.n_theta)?;
            blocks.push(interface_block(
                problem,
                0,
                Layout::Scattered {
                    points: gamma.points,
                    weights: gamma.weights,
                },
            ));
        } else {
            let singular = matches!(problem.kind, Kind::SingularLaplace);
            for (sub, sd) in problem.subdomains.iter().enumerate() {
                let Region::Rect(r) = sd.region else {
                    return Err(Error::InvalidProblem(format!(
                        "subdomain {} is not a rectangle",
                        sd.label
                    )));
                };
                let (rx, ry) = if singular {
                    let m = quad.subintervals;
                    let rule = match quad.singular_plan {
                        SingularPlan::Refined => crate::quadrature::compose_breakpoints(
                            &base,
                            &singular::refined_breakpoints(m, quad.window_subintervals.max(1)),
                        )?,
                        _ => compose(&base, [0.0, 1.0], m)?,
                    };
                    (rule.clone(), rule)
                } else {
                    (
                        compose(&base, r.x, share(quad.subintervals, r.x[1] - r.x[0], width))?,
                        compose(&base, r.y, share(quad.subintervals, r.y[1] - r.y[0], height))?,
                    )
                };
                blocks.push(volume(sub, Layout::tensor(&rx, &ry), !singular));
                if singular {
                    for piece in singular::load_pieces(quad.singular_plan, &rx, quad.n_jacobi)? {
                        blocks.push(Block {
                            label: format!("load {}", piece.label),
                            layout: Layout::Tensor {
                                xs: piece.xs,
                                wx: piece.wx,
                                ys: piece.ys,
                                wy: piece.wy,
                            },
                            role: Role::Load {
                                sub,
                                values: piece.values,
                            },
                            exact: None,
                            lift: None,
                        });
                    }
                }
            }
            for (i, it) in problem.interfaces.iter().enumerate() {
                let Curve::Segment { p0, p1, .. } = it.curve else {
                    return Err(Error::InvalidProblem("curved interface on a box layout".into()));
                };
                let layout = if p0[0] == p1[0] {
                    let ry = compose(&base, [p0[1], p1[1]], share(quad.subintervals, p1[1] - p0[1], height))?;
                    Layout::tensor(&point_rule(p0[0]), &ry)
                } else if p0[1] == p1[1] {
                    let rx = compose(&base, [p0[0], p1[0]], share(quad.subintervals, p1[0] - p0[0], width))?;
                    Layout::tensor(&rx, &point_rule(p0[1]))
                } else {
                    return Err(Error::InvalidProblem("interface segments must be axis-aligned".into()));
                };
                blocks.push(interface_block(problem, i, layout));
            }
        }
        Ok(Discretization {
            blocks,
            beta: problem.beta,
            quad: quad.clone(),
        })
    }

    /// Attaches the lifting jets to every volume and interface block.
    pub fn set_lifting(&mut self, lift: &Lifting) -> Result<()> {
        for b in &mut self.blocks {
            b.lift = Some(lift.jets(&b.layout.points())?);
        }
        Ok(())
    }

    /// The field `jet(sub, x)` evaluated on every block branch.
    pub fn analytic_fields(&self, jet: impl Fn(usize, [f64; 2]) -> Jet) -> Vec<Vec<FieldJets>> {
        self.blocks
            .iter()
            .map(|b| {
                let pts = b.layout.points();
                b.role
                    .branches()
                    .into_iter()
                    .map(|s| FieldJets::from_jets(pts.iter().map(|&x| jet(s, x))))
                    .collect()
            })
            .collect()
    }

    pub fn n_points(&self) -> usize {
        self.blocks.iter().map(|b| b.layout.len()).sum()
    }
}

fn source_role(problem: &ProblemSpec, sub: usize, pts: &[[f64; 2]], with_source: bool) -> Role {
    Role::Volume {
        sub,
        alpha: problem.alpha(sub),
        source: with_source.then(|| pts.iter().map(|&x| problem.source(sub, x)).collect()),
    }
}

fn interface_block(problem: &ProblemSpec, iface: usize, layout: Layout) -> Block {
    let it = &problem.interfaces[iface];
    let pts = layout.points();
    Block {
        label: it.label.clone(),
        role: Role::Interface {
            iface,
            sides: [it.side_a, it.side_b],
            alpha: [problem.alpha(it.side_a), problem.alpha(it.side_b)],
            normals: pts.iter().map(|&x| problem.normal(iface, x)).collect(),
            g: pts.iter().map(|&x| problem.flux_jump(iface, x)).collect(),
        },
        exact: None,
        lift: None,
        layout,
    }
}

/// Basis functions of one branch of a block, restricted to the columns
/// (global basis indices) that are nonzero there.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchBasis {
    pub cols: Vec<usize>,
    pub data: BasisData,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisData {
    Dense(BasisEvaluation),
    Tensor(TnnGrid),
}

/// Per-branch bases of one block.
pub type BlockBasis = Vec<BranchBasis>;

fn column_scale(a: &Array2<f64>, c: &[f64]) -> Array2<f64> {
    let cv = ndarray::ArrayView1::from(c);
    a * &cv.insert_axis(Axis(0))
}

fn row_scale(a: &Array2<f64>, w: &[f64]) -> Array2<f64> {
    let wv = ndarray::ArrayView1::from(w);
    a * &wv.insert_axis(Axis(1))
}

fn grid(v: &[f64], nx: usize, ny: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((nx, ny), v).expect("grid shape")
}

/// `Σ_i a_ij b_ij` for each column.
fn col_dot(a: &Array2<f64>, b: &Array2<f64>) -> Array1<f64> {
    (a * b).sum_axis(Axis(0))
}

impl BranchBasis {
    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    /// Number of points the basis was evaluated at.
    pub fn expand_rows(&self) -> usize {
        match &self.data {
            BasisData::Dense(e) => e.n_points(),
            BasisData::Tensor(g) => g.x.v.nrows() * g.y.v.nrows(),
        }
    }

    fn local(&self, c: &[f64]) -> Vec<f64> {
        self.cols.iter().map(|&j| c[j]).collect()
    }

    /// Pointwise jets of the basis (expanding a tensor grid).
    pub fn expand(&self) -> BasisEvaluation {
        match &self.data {
            BasisData::Dense(e) => e.clone(),
            BasisData::Tensor(g) => g.expand(),
        }
    }

    /// `Σ_j c_j φ_j` and its jets.
    pub fn field(&self, c: &[f64]) -> FieldJets {
        let cl = Array1::from(self.local(c));
        match &self.data {
            BasisData::Dense(e) => FieldJets {
                u: e.values.dot(&cl).to_vec(),
                ux: e.grads[0].dot(&cl).to_vec(),
                uy: e.grads[1].dot(&cl).to_vec(),
                lap: e.laps.dot(&cl).to_vec(),
            },
            BasisData::Tensor(g) => {
                let cl = cl.as_slice().unwrap();
                let xc = column_scale(&g.x.v, cl);
                let dxc = column_scale(&g.x.d, cl);
                let ddxc = column_scale(&g.x.dd, cl);
                let flat = |a: Array2<f64>| a.into_iter().collect::<Vec<f64>>();
                FieldJets {
                    u: flat(xc.dot(&g.y.v.t())),
                    ux: flat(dxc.dot(&g.y.v.t())),
                    uy: flat(xc.dot(&g.y.d.t())),
                    lap: flat(ddxc.dot(&g.y.v.t()) + xc.dot(&g.y.dd.t())),
                }
            }
        }
    }

    /// Local energy matrix `Σ w (α ∇φ_i·∇φ_j + β φ_i φ_j)`.
    pub fn energy_matrix(&self, layout: &Layout, alpha: f64, beta: f64) -> Array2<f64> {
        match (&self.data, layout) {
            (BasisData::Tensor(g), Layout::Tensor { wx, wy, .. }) => {
                let gram = |a: &Array2<f64>, b: &Array2<f64>, w: &[f64]| a.t().dot(&row_scale(b, w));
                let xx = gram(&g.x.v, &g.x.v, wx);
                let dxdx = gram(&g.x.d, &g.x.d, wx);
                let yy = gram(&g.y.v, &g.y.v, wy);
                let dydy = gram(&g.y.d, &g.y.d, wy);
                (&dxdx * &yy + &xx * &dydy) * alpha + (&xx * &yy) * beta
            }
            _ => {
                let e = self.expand();
                let w = layout.weights();
                let gram = |a: &Array2<f64>| a.t().dot(&row_scale(a, &w));
                (gram(&e.grads[0]) + gram(&e.grads[1])) * alpha + gram(&e.values) * beta
            }
        }
    }

    /// `Σ w (s_v φ_j + s_x ∂₁φ_j + s_y ∂₂φ_j)` for each local column.
    pub fn project(&self, layout: &Layout, sv: &[f64], sx: Option<&[f64]>, sy: Option<&[f64]>) -> Array1<f64> {
        match (&self.data, layout) {
            (BasisData::Tensor(g), Layout::Tensor { wx, wy, xs, ys }) => {
                let (nx, ny) = (xs.len(), ys.len());
                let weighted = |s: &[f64]| -> Array2<f64> {
                    let mut m = grid(s, nx, ny).to_owned();
                    m = row_scale(&m, wx);
                    column_scale(&m, wy)
                };
                let mut out = col_dot(&g.x.v, &weighted(sv).dot(&g.y.v));
                if let Some(sx) = sx {
                    out = out + col_dot(&g.x.d, &weighted(sx).dot(&g.y.v));
                }
                if let Some(sy) = sy {
                    out = out + col_dot(&g.x.v, &weighted(sy).dot(&g.y.d));
                }
                out
            }
            _ => {
                let e = self.expand();
                let w = layout.weights();
                let ws = |s: &[f64]| Array1::from_iter(s.iter().zip(&w).map(|(a, b)| a * b));
                let mut out = e.values.t().dot(&ws(sv));
                if let Some(sx) = sx {
                    out = out + e.grads[0].t().dot(&ws(sx));
                }
                if let Some(sy) = sy {
                    out = out + e.grads[1].t().dot(&ws(sy));
                }
                out
            }
        }
    }
}

/// Field `Σ c_j φ_j` (plus lifting) on every block branch.
pub fn fields(disc: &Discretization, basis: &[BlockBasis], c: &[f64]) -> Vec<Vec<FieldJets>> {
    disc.blocks
        .iter()
        .zip(basis)
        .map(|(b, bb)| {
            bb.iter()
                .map(|br| {
                    let mut f = br.field(c);
                    if let Some(l) = &b.lift {
                        f.add_assign(l);
                    }
                    f
                })
                .collect()
        })
        .collect()
}

/// A parameterized finite-dimensional space of trial functions.
pub trait Subspace: Sync {
    fn n_params(&self) -> usize;
    fn n_basis(&self) -> usize;
    /// Basis jets on every block branch.
    fn evaluate(&self, params: &[f64], disc: &Discretization) -> Result<Vec<BlockBasis>>;
    /// Adds to `grad` the parameter gradient of a loss whose sensitivities to
    /// the field jets are `adj`, with coefficients `c` held fixed.
    fn backprop(
        &self,
        params: &[f64],
        disc: &Discretization,
        basis: &[BlockBasis],
        c: &[f64],
        adj: &[Vec<FieldJets>],
        grad: &mut [f64],
    ) -> Result<()>;
}

/// The trial space of a problem: one network per trial term, each multiplied
/// by the term's factor and supported on the term's subdomains.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpace {
    pub terms: Vec<TrialTerm>,
    pub networks: Vec<Network>,
    pub col_offsets: Vec<usize>,
    n_basis: usize,
    n_params: usize,
    separable: bool,
}

/// Jets of a one-dimensional polynomial at `coords`, as columns of length `M`.
fn poly_jets(p: &Poly, coords: &[f64]) -> [Vec<f64>; 3] {
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for &t in coords {
        let e = p.eval3(t);
        for k in 0..3 {
            out[k].push(e[k]);
        }
    }
    out
}

/// `f·a` and its first two derivatives, columnwise.
fn times_factor(f: &[Vec<f64>; 3], a: &Jet1) -> Jet1 {
    Jet1 {
        v: row_scale(&a.v, &f[0]),
        d: row_scale(&a.v, &f[1]) + row_scale(&a.d, &f[0]),
        dd: row_scale(&a.v, &f[2]) + row_scale(&a.d, &f[1]) * 2.0 + row_scale(&a.dd, &f[0]),
    }
}

fn hstack(parts: &[&Array2<f64>], rows: usize) -> Array2<f64> {
    if parts.is_empty() {
        return Array2::zeros((rows, 0));
    }
    let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("equal row counts")
}

impl TrialSpace {
    /// One architecture for every term, or one per term.
    pub fn new(problem: &ProblemSpec, archs: &[ArchitectureSpec]) -> Result<Self> {
        let n = problem.terms.len();
        let archs: Vec<ArchitectureSpec> = match archs.len() {
            1 => vec![archs[0].clone(); n],
            k if k == n => archs.to_vec(),
            k => {
                return Err(Error::Architecture(format!(
                    "problem {} needs {n} networks, got {k}",
                    problem.name
                )))
            }
        };
        let mut networks = Vec::with_capacity(n);
        let mut col_offsets = Vec::with_capacity(n);
        let (mut at, mut cols) = (0, 0);
        for a in archs {
            let net = Network::new(a, at)?;
            at += net.n_params();
            col_offsets.push(cols);
            cols += net.p();
            networks.push(net);
        }
        let separable = networks.iter().all(Network::is_tnn)
            && problem.terms.iter().all(|t| t.factor.as_product().is_some());
        Ok(TrialSpace {
            terms: problem.terms.clone(),
            networks,
            col_offsets,
            n_basis: cols,
            n_params: at,
            separable,
        })
    }

    pub fn archs(&self) -> Vec<ArchitectureSpec> {
        self.networks.iter().map(|n| n.arch.clone()).collect()
    }

    pub fn layout(&self) -> ParameterLayout {
        ParameterLayout::for_networks(&self.archs())
    }

    pub fn init(&self, seed: u64) -> Vec<f64> {
        init_layout(&self.layout(), seed)
    }

    /// Whether tensor blocks use the per-direction fast path.
    pub fn is_separable(&self) -> bool {
        self.separable
    }

    fn active(&self, sub: usize) -> Vec<usize> {
        (0..self.terms.len()).filter(|&k| self.terms[k].supports(sub)).collect()
    }

    fn cols_of(&self, terms: &[usize]) -> Vec<usize> {
        terms
            .iter()
            .flat_map(|&k| self.col_offsets[k]..self.col_offsets[k] + self.networks[k].p())
            .collect()
    }

    fn term_jets_dense(&self, params: &[f64], k: usize, pts: &[[f64; 2]]) -> Result<BasisEvaluation> {
        let n = self.networks[k].eval_basis(params, pts)?;
        let f: Vec<Jet> = pts.iter().map(|&x| self.terms[k].factor.jet(x)).collect();
        let fv: Vec<f64> = f.iter().map(|j| j.v).collect();
        let fx: Vec<f64> = f.iter().map(|j| j.gx).collect();
        let fy: Vec<f64> = f.iter().map(|j| j.gy).collect();
        let fl: Vec<f64> = f.iter().map(|j| j.lap).collect();
        Ok(BasisEvaluation {
            values: row_scale(&n.values, &fv),
            grads: [
                row_scale(&n.values, &fx) + row_scale(&n.grads[0], &fv),
                row_scale(&n.values, &fy) + row_scale(&n.grads[1], &fv),
            ],
            laps: row_scale(&n.values, &fl)
                + (row_scale(&n.grads[0], &fx) + row_scale(&n.grads[1], &fy)) * 2.0
                + row_scale(&n.laps, &fv),
        })
    }

    fn term_grid(&self, params: &[f64], k: usize, xs: &[f64], ys: &[f64]) -> Result<TnnGrid> {
        let (fp, fq) = self.terms[k].factor.as_product().expect("separable factor");
        let g = self.networks[k].tnn_factors(params, xs, ys)?;
        Ok(TnnGrid {
            x: times_factor(&poly_jets(fp, xs), &g.x),
            y: times_factor(&poly_jets(fq, ys), &g.y),
        })
    }

    fn evaluate_block(&self, params: &[f64], block: &Block) -> Result<BlockBasis> {
        let branches = block.role.branches();
        let mut needed: Vec<usize> = branches.iter().flat_map(|&s| self.active(s)).collect();
        needed.sort_unstable();
        needed.dedup();
        match (&block.layout, self.separable) {
            (Layout::Tensor { xs, ys, .. }, true) => {
                let mut per_term = std::collections::BTreeMap::new();
                for &k in &needed {
                    per_term.insert(k, self.term_grid(params, k, xs, ys)?);
                }
                Ok(branches
                    .iter()
                    .map(|&s| {
                        let terms = self.active(s);
                        let pick = |f: fn(&TnnGrid) -> &Jet1, n: usize| {
                            let parts = |g: fn(&Jet1) -> &Array2<f64>| {
                                let v: Vec<&Array2<f64>> = terms.iter().map(|k| g(f(&per_term[k]))).collect();
                                hstack(&v, n)
                            };
                            Jet1 {
                                v: parts(|j| &j.v),
                                d: parts(|j| &j.d),
                                dd: parts(|j| &j.dd),
                            }
                        };
                        BranchBasis {
                            cols: self.cols_of(&terms),
                            data: BasisData::Tensor(TnnGrid {
                                x: pick(|g| &g.x, xs.len()),
                                y: pick(|g| &g.y, ys.len()),
                            }),
                        }
                    })
                    .collect())
            }
            _ => {
                let pts = block.layout.points();
                let mut per_term = std::collections::BTreeMap::new();
                for &k in &needed {
                    per_term.insert(k, self.term_jets_dense(params, k, &pts)?);
                }
                let m = pts.len();
                Ok(branches
                    .iter()
                    .map(|&s| {
                        let terms = self.active(s);
                        let parts = |g: fn(&BasisEvaluation) -> &Array2<f64>| {
                            let v: Vec<&Array2<f64>> = terms.iter().map(|k| g(&per_term[k])).collect();
                            hstack(&v, m)
                        };
                        BranchBasis {
                            cols: self.cols_of(&terms),
                            data: BasisData::Dense(BasisEvaluation {
                                values: parts(|e| &e.values),
                                grads: [parts(|e| &e.grads[0]), parts(|e| &e.grads[1])],
                                laps: parts(|e| &e.laps),
                            }),
                        }
                    })
                    .collect())
            }
        }
    }

    fn backprop_branch(
        &self,
        params: &[f64],
        block: &Block,
        branch: &BranchBasis,
        sub: usize,
        c: &[f64],
        adj: &FieldJets,
        grad: &mut [f64],
    ) -> Result<()> {
        let terms = self.active(sub);
        match (&branch.data, &block.layout) {
            (BasisData::Tensor(g), Layout::Tensor { xs, ys, .. }) => {
                let (nx, ny) = (xs.len(), ys.len());
                let gu = grid(&adj.u, nx, ny);
                let gx = grid(&adj.ux, nx, ny);
                let gy = grid(&adj.uy, nx, ny);
                let gl = grid(&adj.lap, nx, ny);
                let cl = branch.local(c);
                let adj_x = Jet1 {
                    v: column_scale(&(gu.dot(&g.y.v) + gy.dot(&g.y.d) + gl.dot(&g.y.dd)), &cl),
                    d: column_scale(&gx.dot(&g.y.v), &cl),
                    dd: column_scale(&gl.dot(&g.y.v), &cl),
                };
                let adj_y = Jet1 {
                    v: column_scale(&(gu.t().dot(&g.x.v) + gx.t().dot(&g.x.d) + gl.t().dot(&g.x.dd)), &cl),
                    d: column_scale(&gy.t().dot(&g.x.v), &cl),
                    dd: column_scale(&gl.t().dot(&g.x.v), &cl),
                };
                let mut at = 0;
                for &k in &terms {
                    let p = self.networks[k].p();
                    let (fp, fq) = self.terms[k].factor.as_product().expect("separable factor");
                    for (dir, coords, poly, a) in [(0, xs, fp, &adj_x), (1, ys, fq, &adj_y)] {
                        let f = poly_jets(poly, coords);
                        let sl = |m: &Array2<f64>| m.slice(s![.., at..at + p]).to_owned();
                        let (av, ad, add) = (sl(&a.v), sl(&a.d), sl(&a.dd));
                        let back = Jet1 {
                            v: row_scale(&av, &f[0]) + row_scale(&ad, &f[1]) + row_scale(&add, &f[2]),
                            d: row_scale(&ad, &f[0]) + row_scale(&add, &f[1]) * 2.0,
                            dd: row_scale(&add, &f[0]),
                        };
                        self.networks[k].backprop_subnet(params, dir, coords, back, grad)?;
                    }
                    at += p;
                }
                Ok(())
            }
            _ => {
                let pts = block.layout.points();
                for &k in &terms {
                    let off = self.col_offsets[k];
                    let ck = Array1::from(c[off..off + self.networks[k].p()].to_vec());
                    let m = pts.len();
                    let (mut sv, mut sx, mut sy, mut sl) =
                        (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
                    for (i, &x) in pts.iter().enumerate() {
                        let f = self.terms[k].factor.jet(x);
                        let (au, ax, ay, al) = (adj.u[i], adj.ux[i], adj.uy[i], adj.lap[i]);
                        sv[i] = f.v * au + f.gx * ax + f.gy * ay + f.lap * al;
                        sx[i] = f.v * ax + 2.0 * f.gx * al;
                        sy[i] = f.v * ay + 2.0 * f.gy * al;
                        sl[i] = f.v * al;
                    }
                    let outer = |s: Vec<f64>| {
                        let col = Array1::from(s).insert_axis(Axis(1));
                        col.dot(&ck.view().insert_axis(Axis(0)))
                    };
                    let adj_n = BasisEvaluation {
                        values: outer(sv),
                        grads: [outer(sx), outer(sy)],
                        laps: outer(sl),
                    };
                    self.networks[k].loss_param_gradient(params, &pts, &adj_n, grad)?;
                }
                Ok(())
            }
        }
    }

    /// Trial values at arbitrary points, each on the branch of the subdomain
    /// that owns it (lower-numbered side on interfaces).
    pub fn values_at(&self, problem: &ProblemSpec, params: &[f64], c: &[f64], pts: &[[f64; 2]]) -> Result<Vec<f64>> {
        let owner: Vec<usize> = pts.iter().map(|&x| problem.subdomain_at(x)).collect();
        let mut out = vec![0.0; pts.len()];
        for (k, term) in self.terms.iter().enumerate() {
            let idx: Vec<usize> = (0..pts.len()).filter(|&i| term.supports(owner[i])).collect();
            if idx.is_empty() {
                continue;
            }
            let sub_pts: Vec<[f64; 2]> = idx.iter().map(|&i| pts[i]).collect();
            let n = self.networks[k].eval_values(params, &sub_pts)?;
            let off = self.col_offsets[k];
            let ck = Array1::from(c[off..off + self.networks[k].p()].to_vec());
            let nc = n.dot(&ck);
            for (j, &i) in idx.iter().enumerate() {
                out[i] += term.factor.value(pts[i]) * nc[j];
            }
        }
        Ok(out)
    }
}

impl TrialSpace {
    /// Trial values at `pts` as seen from subdomain `sub`, whether or not the
    /// points belong to it (one-sided traces on interfaces).
    pub fn branch_values(&self, params: &[f64], c: &[f64], sub: usize, pts: &[[f64; 2]]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; pts.len()];
        for (k, t) in self.terms.iter().enumerate() {
            if !t.supports(sub) {
                continue;
            }
            let n = self.networks[k].eval_values(params, pts)?;
            let off = self.col_offsets[k];
            let nc = n.dot(&Array1::from(c[off..off + self.networks[k].p()].to_vec()));
            for (i, &x) in pts.iter().enumerate() {
                out[i] += t.factor.value(x) * nc[i];
            }
        }
        Ok(out)
    }
}

impl Subspace for TrialSpace {
    fn n_params(&self) -> usize {
        self.n_params
    }

    fn n_basis(&self) -> usize {
        self.n_basis
    }

    fn evaluate(&self, params: &[f64], disc: &Discretization) -> Result<Vec<BlockBasis>> {
        if params.len() != self.n_params {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, trial space expects {}",
                params.len(),
                self.n_params
            )));
        }
        disc.blocks.iter().map(|b| self.evaluate_block(params, b)).collect()
    }

    fn backprop(
        &self,
        params: &[f64],
        disc: &Discretization,
        basis: &[BlockBasis],
        c: &[f64],
        adj: &[Vec<FieldJets>],
        grad: &mut [f64],
    ) -> Result<()> {
        for ((block, bb), ab) in disc.blocks.iter().zip(basis).zip(adj) {
            for ((br, sub), a) in bb.iter().zip(block.role.branches()).zip(ab) {
                if a.u.iter().chain(&a.ux).chain(&a.uy).chain(&a.lap).all(|&v| v == 0.0) {
                    continue;
                }
                self.backprop_branch(params, block, br, sub, c, a, grad)?;
            }
        }
        Ok(())
    }
}

/// A boundary lifting `b(x) = Σ_j d_j φ_j(x) + d_0` built from a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Lifting {
    pub net: Network,
    pub params: Vec<f64>,
    /// Output weights followed by the constant.
    pub coef: Vec<f64>,
}

impl Lifting {
    /// The identically zero lifting.
    pub fn zero(net: Network) -> Self {
        let p = net.p();
        let params = vec![0.0; net.n_params()];
        Lifting {
            net,
            params,
            coef: vec![0.0; p + 1],
        }
    }

    pub fn jets(&self, pts: &[[f64; 2]]) -> Result<FieldJets> {
        let p = self.net.p();
        let e = self.net.eval_basis(&self.params, pts)?;
        let d = Array1::from(self.coef[..p].to_vec());
        let mut f = FieldJets {
            u: e.values.dot(&d).to_vec(),
            ux: e.grads[0].dot(&d).to_vec(),
            uy: e.grads[1].dot(&d).to_vec(),
            lap: e.laps.dot(&d).to_vec(),
        };
        for u in &mut f.u {
            *u += self.coef[p];
        }
        Ok(f)
    }

    pub fn values(&self, pts: &[[f64; 2]]) -> Result<Vec<f64>> {
        let p = self.net.p();
        let v = self.net.eval_values(&self.params, pts)?;
        let d = Array1::from(self.coef[..p].to_vec());
        Ok(v.dot(&d).iter().map(|x| x + self.coef[p]).collect())
    }
}

pub type JetFn = Box<dyn Fn([f64; 2]) -> Jet + Send + Sync>;

/// A fixed space spanned by closed-form functions (no trainable parameters),
/// the same functions on every branch.
pub struct AnalyticSpace {
    funcs: Vec<JetFn>,
}

impl AnalyticSpace {
    pub fn new(funcs: Vec<JetFn>) -> Self {
        AnalyticSpace { funcs }
    }
}

impl Subspace for AnalyticSpace {
    fn n_params(&self) -> usize {
        0
    }

    fn n_basis(&self) -> usize {
        self.funcs.len()
    }

    fn evaluate(&self, _params: &[f64], disc: &Discretization) -> Result<Vec<BlockBasis>> {
        let n = self.funcs.len();
        Ok(disc
            .blocks
            .iter()
            .map(|b| {
                let pts = b.layout.points();
                let mut e = BasisEvaluation::zeros(pts.len(), n);
                for (i, &x) in pts.iter().enumerate() {
                    for (j, f) in self.funcs.iter().enumerate() {
                        let jet = f(x);
                        e.values[[i, j]] = jet.v;
                        e.grads[0][[i, j]] = jet.gx;
                        e.grads[1][[i, j]] = jet.gy;
                        e.laps[[i, j]] = jet.lap;
                    }
                }
                b.role
                    .branches()
                    .iter()
                    .map(|_| BranchBasis {
                        cols: (0..n).collect(),
                        data: BasisData::Dense(e.clone()),
                    })
                    .collect()
            })
            .collect())
    }

    fn backprop(
        &self,
        _params: &[f64],
        _disc: &Discretization,
        _basis: &[BlockBasis],
        _c: &[f64],
        _adj: &[Vec<FieldJets>],
        _grad: &mut [f64],
    ) -> Result<()> {
        Ok(())
    }
}

/// Sine mode `sin(mπx₁) sin(nπx₂)` with its jets.
pub fn sine_mode(m: f64, n: f64) -> JetFn {
    use std::f64::consts::PI;
    Box::new(move |x: [f64; 2]| {
        let (a, b) = (m * PI, n * PI);
        let (sa, ca) = (a * x[0]).sin_cos();
        let (sb, cb) = (b * x[1]).sin_cos();
        Jet {
            v: sa * sb,
            gx: a * ca * sb,
            gy: b * sa * cb,
            lap: -(a * a + b * b) * sa * sb,
        }
    })
}
