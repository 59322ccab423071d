//! One- and two-dimensional quadrature rules.
//!
//! Gauss-Legendre, Gauss-Lobatto and Gauss-Jacobi nodes are eigenvalues of the
//! Jacobi recurrence matrix, polished by Newton iteration on the recurrence. Composite rules, tensor
//! products, polar disk rules and signed difference rules are built on top.
//!
//! Every integration helper sums in canonical node order (increasing in 1D,
//! row-major with `x` outer in 2D), so results are reproducible bit for bit.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RuleKind {
    Legendre,
    Lobatto,
    Jacobi { alpha: f64, beta: f64 },
}

/// A quadrature rule on an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub interval: [f64; 2],
    pub kind: RuleKind,
}

impl Rule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sum of `w_i f(x_i)` in node order.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(0.0, |acc, (&x, &w)| acc + w * f(x))
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Affine image of the rule on `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> Result<Rule1D> {
        compose(self, [a, b], 1)
    }
}

/// `P_n^{(a,b)}(x)` and `P_{n-1}^{(a,b)}(x)` by the three-term recurrence.
pub fn jacobi_p(n: usize, a: f64, b: f64, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * x;
    for k in 2..=n {
        let k = k as f64;
        let s = 2.0 * k + a + b;
        let a1 = 2.0 * k * (k + a + b) * (s - 2.0);
        let a2 = (s - 1.0) * (a * a - b * b);
        let a3 = (s - 2.0) * (s - 1.0) * s;
        let a4 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * s;
        let next = ((a2 + a3 * x) * p - a4 * p_prev) / a1;
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// Derivative of `P_n^{(a,b)}` at `x`.
pub fn jacobi_dp(n: usize, a: f64, b: f64, x: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    0.5 * (n as f64 + a + b + 1.0) * jacobi_p(n - 1, a + 1.0, b + 1.0, x).0
}

/// Symmetric tridiagonal recurrence matrix of the monic Jacobi polynomials;
/// its eigenvalues are the roots of `P_n^{(a,b)}`.
fn recurrence_matrix(n: usize, a: f64, b: f64) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(n, n);
    for k in 0..n {
        let s = 2.0 * k as f64 + a + b;
        t[(k, k)] = if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
        if k + 1 < n {
            let j = (k + 1) as f64;
            let s = 2.0 * j + a + b;
            let sq = if k == 0 {
                // the general formula is 0/0 when a + b = -1
                4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + a + b).powi(2) * (3.0 + a + b))
            } else {
                4.0 * j * (j + a) * (j + b) * (j + a + b) / (s * s * (s + 1.0) * (s - 1.0))
            };
            t[(k, k + 1)] = sq.sqrt();
            t[(k + 1, k)] = sq.sqrt();
        }
    }
    t
}

/// Roots of `P_n^{(a,b)}` in increasing order: eigenvalues of the recurrence
/// matrix, each polished by Newton steps on the recurrence.
fn jacobi_roots(n: usize, a: f64, b: f64) -> Result<Vec<f64>> {
    let mut roots: Vec<f64> = SymmetricEigen::new(recurrence_matrix(n, a, b)).eigenvalues.iter().copied().collect();
    roots.sort_by(f64::total_cmp);
    for x in roots.iter_mut() {
        for _ in 0..NEWTON_MAX_ITER {
            let (p, _) = jacobi_p(n, a, b, *x);
            let dp = jacobi_dp(n, a, b, *x);
            if dp == 0.0 {
                break;
            }
            let dx = p / dp;
            // a polish only; never let it jump to a neighbour
            if !(dx.abs() < 1e-8) {
                break;
            }
            *x -= dx;
            if dx.abs() <= NEWTON_TOL * x.abs().max(1.0) {
                break;
            }
        }
    }
    if a == b {
        // enforce exact symmetry for symmetric weights
        for i in 0..n / 2 {
            let m = 0.5 * (roots[n - 1 - i] - roots[i]);
            roots[i] = -m;
            roots[n - 1 - i] = m;
        }
        if n % 2 == 1 {
            roots[n / 2] = 0.0;
        }
    }
    let ok = roots.windows(2).all(|w| w[0] < w[1])
        && roots.iter().all(|&x| x > -1.0 && x < 1.0 && x.is_finite());
    if !ok {
        return Err(Error::Quadrature(format!(
            "failed to isolate {n} distinct Jacobi roots for alpha={a}, beta={b}"
        )));
    }
    Ok(roots)
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Result<Rule1D> {
    if n == 0 {
        return Err(Error::Quadrature("gauss_legendre needs n >= 1".into()));
    }
    let nodes = jacobi_roots(n, 0.0, 0.0)?;
    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let dp = jacobi_dp(n, 0.0, 0.0, x);
            2.0 / ((1.0 - x * x) * dp * dp)
        })
        .collect();
    for i in 0..n / 2 {
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok(Rule1D {
        nodes,
        weights,
        interval: [-1.0, 1.0],
        kind: RuleKind::Legendre,
    })
}

/// `n`-point Gauss-Lobatto rule on `[-1, 1]`, endpoints included.
pub fn gauss_lobatto(n: usize) -> Result<Rule1D> {
    if n < 2 {
        return Err(Error::Quadrature("gauss_lobatto needs n >= 2".into()));
    }
    // interior nodes: zeros of P'_{n-1}, i.e. of P_{n-2}^{(1,1)}
    let interior = if n > 2 {
        jacobi_roots(n - 2, 1.0, 1.0)?
    } else {
        Vec::new()
    };
    let scale = 2.0 / (n as f64 * (n as f64 - 1.0));
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    nodes.push(-1.0);
    weights.push(scale);
    for &x in &interior {
        let (p, _) = jacobi_p(n - 1, 0.0, 0.0, x);
        nodes.push(x);
        weights.push(scale / (p * p));
    }
    nodes.push(1.0);
    weights.push(scale);
    for i in 0..n / 2 {
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok(Rule1D {
        nodes,
        weights,
        interval: [-1.0, 1.0],
        kind: RuleKind::Lobatto,
    })
}

/// `n`-point Gauss-Jacobi rule for the weight `(1-x)^alpha (1+x)^beta` on `[-1, 1]`.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Result<Rule1D> {
    if n == 0 {
        return Err(Error::Quadrature("gauss_jacobi needs n >= 1".into()));
    }
    if !(alpha > -1.0 && beta > -1.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::Quadrature(format!(
            "Jacobi weight exponents must exceed -1 (alpha={alpha}, beta={beta})"
        )));
    }
    let nodes = jacobi_roots(n, alpha, beta)?;
    let nf = n as f64;
    let log_c = (alpha + beta + 1.0) * std::f64::consts::LN_2
        + ln_gamma(nf + alpha + 1.0)
        + ln_gamma(nf + beta + 1.0)
        - ln_gamma(nf + 1.0)
        - ln_gamma(nf + alpha + beta + 1.0);
    let c = log_c.exp();
    let weights = nodes
        .iter()
        .map(|&x| {
            let dp = jacobi_dp(n, alpha, beta, x);
            c / ((1.0 - x * x) * dp * dp)
        })
        .collect();
    Ok(Rule1D {
        nodes,
        weights,
        interval: [-1.0, 1.0],
        kind: RuleKind::Jacobi { alpha, beta },
    })
}

/// `m` equal subintervals of `[a, b]`.
pub fn uniform_breakpoints(a: f64, b: f64, m: usize) -> Vec<f64> {
    let h = (b - a) / m as f64;
    (0..=m)
        .map(|i| if i == m { b } else { a + h * i as f64 })
        .collect()
}

/// Copies of `rule` on `m` equal subintervals of `target`.
pub fn compose(rule: &Rule1D, target: [f64; 2], m: usize) -> Result<Rule1D> {
    let [a, b] = target;
    if m == 0 {
        return Err(Error::Quadrature("compose needs m >= 1".into()));
    }
    if !(a < b) {
        return Err(Error::Quadrature(format!("degenerate interval [{a}, {b}]")));
    }
    compose_breakpoints(rule, &uniform_breakpoints(a, b, m))
}

/// Copies of `rule` on each `[t_i, t_{i+1}]` of an increasing breakpoint list.
/// Nodes shared by neighbouring subintervals (Lobatto endpoints) are merged and
/// their weights added, so the result has strictly increasing nodes.
pub fn compose_breakpoints(rule: &Rule1D, breaks: &[f64]) -> Result<Rule1D> {
    if breaks.len() < 2 {
        return Err(Error::Quadrature("need at least two breakpoints".into()));
    }
    if !breaks.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Quadrature(
            "breakpoints must be strictly increasing".into(),
        ));
    }
    let [r0, r1] = rule.interval;
    let (rmid, rhalf) = (0.5 * (r0 + r1), 0.5 * (r1 - r0));
    let mut nodes: Vec<f64> = Vec::with_capacity(rule.len() * (breaks.len() - 1));
    let mut weights: Vec<f64> = Vec::with_capacity(nodes.capacity());
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (&t, &wt) in rule.nodes.iter().zip(&rule.weights) {
            let x = if t == r0 {
                lo
            } else if t == r1 {
                hi
            } else {
                mid + half * ((t - rmid) / rhalf)
            };
            let wx = wt * (half / rhalf);
            if let Some(&last) = nodes.last() {
                if x == last {
                    *weights.last_mut().unwrap() += wx;
                    continue;
                }
            }
            nodes.push(x);
            weights.push(wx);
        }
    }
    Ok(Rule1D {
        nodes,
        weights,
        interval: [breaks[0], *breaks.last().unwrap()],
        kind: rule.kind,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Tensor,
    PolarDisk,
    Difference,
}

/// A rule on a planar region.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule2D {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub provenance: Provenance,
    /// The one-dimensional factors when `provenance` is `Tensor`.
    pub factors: Option<Box<(Rule1D, Rule1D)>>,
}

impl Rule2D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate<F: Fn([f64; 2]) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .fold(0.0, |acc, (&p, &w)| acc + w * f(p))
    }
}

/// Cartesian product, row-major with `x` outer and `y` inner.
pub fn tensor_product(rx: &Rule1D, ry: &Rule1D) -> Rule2D {
    let mut points = Vec::with_capacity(rx.len() * ry.len());
    let mut weights = Vec::with_capacity(rx.len() * ry.len());
    for (&x, &wx) in rx.nodes.iter().zip(&rx.weights) {
        for (&y, &wy) in ry.nodes.iter().zip(&ry.weights) {
            points.push([x, y]);
            weights.push(wx * wy);
        }
    }
    Rule2D {
        points,
        weights,
        provenance: Provenance::Tensor,
        factors: Some(Box::new((rx.clone(), ry.clone()))),
    }
}

/// Polar rule on the unit disk: radial rule on `[0, 1]` times `n_theta`
/// equispaced angles. Zero-weight points at the origin are dropped.
pub fn polar_disk(r_rule: &Rule1D, n_theta: usize) -> Result<Rule2D> {
    if n_theta < 4 {
        return Err(Error::Quadrature("polar_disk needs n_theta >= 4".into()));
    }
    let [r0, r1] = r_rule.interval;
    if r0 < 0.0 || r1 > 1.0 {
        return Err(Error::Quadrature(format!(
            "radial rule must live in [0, 1], got [{r0}, {r1}]"
        )));
    }
    let dtheta = 2.0 * PI / n_theta as f64;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (&r, &wr) in r_rule.nodes.iter().zip(&r_rule.weights) {
        if r == 0.0 {
            continue;
        }
        for j in 0..n_theta {
            let theta = dtheta * j as f64;
            points.push([r * theta.cos(), r * theta.sin()]);
            weights.push(wr * r * dtheta);
        }
    }
    Ok(Rule2D {
        points,
        weights,
        provenance: Provenance::PolarDisk,
        factors: None,
    })
}

/// `plus - minus` as one signed rule: the points of `plus` followed by those of
/// `minus` with negated weights.
pub fn difference(plus: &Rule2D, minus: &Rule2D) -> Rule2D {
    let mut points = plus.points.clone();
    points.extend_from_slice(&minus.points);
    let mut weights = plus.weights.clone();
    weights.extend(minus.weights.iter().map(|w| -w));
    Rule2D {
        points,
        weights,
        provenance: Provenance::Difference,
        factors: None,
    }
}

/// A rule on a curve with arc-length weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Unit normals at the points (outward for closed curves).
    pub normals: Vec<[f64; 2]>,
}

impl BoundaryRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: Fn([f64; 2]) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .fold(0.0, |acc, (&p, &w)| acc + w * f(p))
    }
}

/// Unit circle at the origin with `n_theta` equispaced points, each weighted
/// by `2π / n_theta`.
pub fn circle_boundary(n_theta: usize) -> Result<BoundaryRule> {
    if n_theta < 4 {
        return Err(Error::Quadrature(
            "circle_boundary needs n_theta >= 4".into(),
        ));
    }
    let dtheta = 2.0 * PI / n_theta as f64;
    let (points, normals): (Vec<_>, Vec<_>) = (0..n_theta)
        .map(|j| {
            let t = dtheta * j as f64;
            let p = [t.cos(), t.sin()];
            (p, p)
        })
        .unzip();
    Ok(BoundaryRule {
        points,
        weights: vec![dtheta; n_theta],
        normals,
    })
}

/// Straight segment from `p0` to `p1` carrying the 1D rule `along` (given on
/// `[0, 1]` in the segment parameter), with a fixed unit normal.
pub fn segment_rule(p0: [f64; 2], p1: [f64; 2], along: &Rule1D, normal: [f64; 2]) -> BoundaryRule {
    let [t0, t1] = along.interval;
    let len = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt();
    let mut points = Vec::with_capacity(along.len());
    let mut weights = Vec::with_capacity(along.len());
    for (&t, &w) in along.nodes.iter().zip(&along.weights) {
        let s = (t - t0) / (t1 - t0);
        points.push([p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])]);
        weights.push(w * len / (t1 - t0));
    }
    BoundaryRule {
        normals: vec![normal; points.len()],
        points,
        weights,
    }
}

/// Boundary of the rectangle `[x0, x1] × [y0, y1]`: bottom, right, top, left,
/// each edge carrying `m` composite copies of `base`.
pub fn rectangle_boundary(
    base: &Rule1D,
    m: usize,
    xr: [f64; 2],
    yr: [f64; 2],
) -> Result<BoundaryRule> {
    let unit = compose(base, [0.0, 1.0], m)?;
    let corners = [
        [xr[0], yr[0]],
        [xr[1], yr[0]],
        [xr[1], yr[1]],
        [xr[0], yr[1]],
    ];
    let normals = [[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];
    let mut out = BoundaryRule {
        points: Vec::new(),
        weights: Vec::new(),
        normals: Vec::new(),
    };
    for e in 0..4 {
        let seg = segment_rule(corners[e], corners[(e + 1) % 4], &unit, normals[e]);
        out.points.extend(seg.points);
        out.weights.extend(seg.weights);
        out.normals.extend(seg.normals);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn legendre_small_cases() {
        let r = gauss_legendre(1).unwrap();
        assert_eq!(r.nodes, vec![0.0]);
        assert!(close(r.weights[0], 2.0, 1e-15));

        let r = gauss_legendre(2).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!(close(r.nodes[0], -s, 1e-15) && close(r.nodes[1], s, 1e-15));
        assert!(close(r.weights[0], 1.0, 1e-15) && close(r.weights[1], 1.0, 1e-15));

        let r = gauss_legendre(5).unwrap();
        assert!(close(r.integrate(|x| x.powi(8)), 2.0 / 9.0, 1e-14));
        assert!(close(r.total_weight(), 2.0, 1e-13));
    }

    #[test]
    fn lobatto_small_cases() {
        assert!(gauss_lobatto(1).is_err());
        let r = gauss_lobatto(2).unwrap();
        assert_eq!(r.nodes, vec![-1.0, 1.0]);
        assert_eq!(r.weights, vec![1.0, 1.0]);

        let r = gauss_lobatto(3).unwrap();
        assert_eq!(r.nodes, vec![-1.0, 0.0, 1.0]);
        assert!(close(r.weights[0], 1.0 / 3.0, 1e-15));
        assert!(close(r.weights[1], 4.0 / 3.0, 1e-15));

        let r = gauss_lobatto(8).unwrap();
        assert!(close(r.integrate(|x| x.powi(12)), 2.0 / 13.0, 1e-14));
    }

    #[test]
    fn jacobi_reduces_to_legendre_and_rejects_bad_exponents() {
        let r = gauss_jacobi(1, 0.0, 0.0).unwrap();
        assert_eq!(r.nodes, vec![0.0]);
        assert!(close(r.weights[0], 2.0, 1e-14));
        assert!(gauss_jacobi(4, -1.0, 0.0).is_err());
        assert!(gauss_jacobi(4, 0.0, -1.5).is_err());
    }

    #[test]
    fn jacobi_weight_sum_matches_closed_form() {
        // ∫(1-x)^{-2/3} dx on [-1,1] = 3·2^{1/3}
        let exact = 3.0 * 2f64.powf(1.0 / 3.0);
        for n in [1, 4, 17, 64, 200] {
            let r = gauss_jacobi(n, -2.0 / 3.0, 0.0).unwrap();
            assert!(close(r.total_weight(), exact, 1e-12), "n={n}");
        }
    }

    #[test]
    fn jacobi_cubic_moment_matches_beta_expansion() {
        // ∫ x^3 (1-x)^a dx with x = 1 - s: Σ_j C(3,j)(-1)^j ∫ s^{j+a} (2-s)^0 ... via Beta moments
        let a = -2.0 / 3.0;
        let m = |j: i32| 2f64.powf(a + j as f64 + 1.0) / (a + j as f64 + 1.0);
        // x^3 = (1-s)^3 = 1 - 3s + 3s^2 - s^3, s = 1-x ∈ [0,2]
        let exact = m(0) - 3.0 * m(1) + 3.0 * m(2) - m(3);
        let r = gauss_jacobi(4, a, 0.0).unwrap();
        assert!(close(r.integrate(|x| x.powi(3)), exact, 1e-12));
    }

    #[test]
    fn compose_identity_and_totals() {
        let base = gauss_legendre(4).unwrap();
        let same = compose(&base, [-1.0, 1.0], 1).unwrap();
        assert_eq!(same.nodes, base.nodes);
        assert_eq!(same.weights, base.weights);
        assert!(compose(&base, [1.0, 1.0], 3).is_err());

        let r = compose(&gauss_legendre(8).unwrap(), [0.0, 1.0], 100).unwrap();
        let v = r.integrate(|x| (PI * x).sin());
        assert!((v - 2.0 / PI).abs() <= 1e-14);

        let r = compose(&gauss_lobatto(16).unwrap(), [0.0, 1.0], 100).unwrap();
        assert!(close(r.total_weight(), 1.0, 1e-13));
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(r.len(), 100 * 15 + 1);
    }

    #[test]
    fn tensor_products() {
        let one = gauss_legendre(1).unwrap();
        let t = tensor_product(&one, &one);
        assert_eq!(t.len(), 1);
        assert!(close(t.weights[0], 4.0, 1e-14));

        let r2 = gauss_legendre(2).unwrap().mapped(0.0, 1.0).unwrap();
        let t = tensor_product(&r2, &r2);
        assert!(close(t.integrate(|p| p[0] * p[1]), 0.25, 1e-15));
        assert_eq!(t.points[1], [r2.nodes[0], r2.nodes[1]]);

        let r3 = gauss_legendre(3).unwrap().mapped(0.0, 1.0).unwrap();
        let t = tensor_product(&r3, &r3);
        let v = t.integrate(|p| p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]));
        assert!(close(v, 1.0 / 36.0, 1e-14));
    }

    #[test]
    fn polar_rules() {
        let r = compose(&gauss_lobatto(8).unwrap(), [0.0, 1.0], 20).unwrap();
        let disk = polar_disk(&r, 160).unwrap();
        assert!(disk.weights.iter().all(|&w| w > 0.0));
        assert!(close(disk.integrate(|_| 1.0), PI, 1e-12));
        assert!(disk.integrate(|p| p[0]).abs() < 1e-13);

        let c = circle_boundary(160).unwrap();
        assert!(close(c.total_weight(), 2.0 * PI, 1e-12));
        assert!(polar_disk(&r, 3).is_err());
    }

    #[test]
    fn signed_difference_splits_exactly() {
        let base = compose(&gauss_lobatto(8).unwrap(), [-2.0, 2.0], 20).unwrap();
        let square = tensor_product(&base, &base);
        let disk = polar_disk(&compose(&gauss_lobatto(8).unwrap(), [0.0, 1.0], 20).unwrap(), 160).unwrap();
        let outer = difference(&square, &disk);
        let f = |p: [f64; 2]| (p[0] * 1.3).sin() * (p[1] + 0.2).exp();
        let split = disk.integrate(f) + outer.integrate(f);
        assert!(close(split, square.integrate(f), 1e-13));
    }

    #[test]
    fn rectangle_boundary_length() {
        let b = rectangle_boundary(&gauss_lobatto(16).unwrap(), 10, [-2.0, 2.0], [-2.0, 2.0]).unwrap();
        assert!(close(b.total_weight(), 16.0, 1e-12));
    }
}
