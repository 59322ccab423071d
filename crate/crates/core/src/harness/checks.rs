//! Fast invariant suites behind the `check` command. Each returns a named
//! pass/fail result with the worst observed deviation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::function::beta::ln_beta;

use crate::diffnet::{init_params, ArchitectureSpec, BasisEvaluation, Family, Network};
use crate::error::Result;
use crate::galerkin::{assemble, DEFAULT_RCOND};
use crate::losses::{eta_indicator, FluxField};
use crate::problems::{catalog, PROBLEM_NAMES};
use crate::quadrature::{gauss_jacobi, gauss_legendre, gauss_lobatto, Rule1D};
use crate::space::{sine_mode, AnalyticSpace, Discretization, FieldJets, QuadConfig, Subspace, TrialSpace};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst deviation against the tolerance.
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(name: &str, worst: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            passed: worst <= tolerance,
            worst,
            tolerance,
        }
    }
}

fn deviation(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

/// Monomials through each family's exactness degree against analytic moments.
pub fn quadrature_exactness() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let legendre_moment = |k: usize| if k % 2 == 1 { 0.0 } else { 2.0 / (k + 1) as f64 };
    for n in 1..=32 {
        let mut plain: Vec<(Rule1D, usize)> = vec![(gauss_legendre(n)?, 2 * n - 1)];
        if n >= 2 {
            plain.push((gauss_lobatto(n)?, 2 * n - 3));
        }
        for (rule, deg) in plain {
            for k in 0..=deg {
                worst = worst.max(deviation(rule.integrate(|x| x.powi(k as i32)), legendre_moment(k)));
            }
        }
        for (a, b) in [(-2.0 / 3.0, 0.0), (0.0, -2.0 / 3.0), (0.5, -0.5), (1.5, 2.0)] {
            let rule = gauss_jacobi(n, a, b)?;
            for k in 0..2 * n {
                // ∫ (1-x)^a (1+x)^(b+k) = 2^(a+b+k+1) B(a+1, b+k+1)
                let want = ((a + b + k as f64 + 1.0) * 2f64.ln() + ln_beta(a + 1.0, b + k as f64 + 1.0)).exp();
                let got: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * (1.0 + x).powi(k as i32))
                    .sum();
                worst = worst.max((got - want).abs() / want);
            }
        }
    }
    Ok(CheckResult::new("quadrature exactness", worst, 1e-12))
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect()
}

/// Jets and parameter gradients of each family against central differences.
pub fn derivative_checks() -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pts = random_points(&mut rng, 100);
    let (mut jet_worst, mut grad_worst): (f64, f64) = (0.0, 0.0);
    for family in [Family::Fnn2d, Family::Resnet2d, Family::Tnn] {
        let arch = ArchitectureSpec::new(family, 4, vec![8, 8]);
        let theta = init_params(&arch, 5)?.values;
        let net = Network::new(arch, 0)?;
        let e = net.eval_basis(&theta, &pts)?;
        let h = 1e-5;
        let shifted = |dx: f64, dy: f64| -> Result<ndarray::Array2<f64>> {
            let p: Vec<[f64; 2]> = pts.iter().map(|x| [x[0] + dx, x[1] + dy]).collect();
            net.eval_values(&theta, &p)
        };
        let (xp, xm, yp, ym) = (shifted(h, 0.0)?, shifted(-h, 0.0)?, shifted(0.0, h)?, shifted(0.0, -h)?);
        let scale = e.values.iter().chain(e.grads[0].iter()).fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..pts.len() {
            for j in 0..net.p() {
                let gx = (xp[[i, j]] - xm[[i, j]]) / (2.0 * h);
                let gy = (yp[[i, j]] - ym[[i, j]]) / (2.0 * h);
                jet_worst = jet_worst.max((gx - e.grads[0][[i, j]]).abs() / scale);
                jet_worst = jet_worst.max((gy - e.grads[1][[i, j]]).abs() / scale);
            }
        }
        // Laplacian from differences of the exact gradients
        let grad_at = |dx: f64, dy: f64| -> Result<BasisEvaluation> {
            let p: Vec<[f64; 2]> = pts.iter().map(|x| [x[0] + dx, x[1] + dy]).collect();
            net.eval_basis(&theta, &p)
        };
        let (gxp, gxm, gyp, gym) = (grad_at(h, 0.0)?, grad_at(-h, 0.0)?, grad_at(0.0, h)?, grad_at(0.0, -h)?);
        let lscale = e.laps.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..pts.len() {
            for j in 0..net.p() {
                let lap = (gxp.grads[0][[i, j]] - gxm.grads[0][[i, j]] + gyp.grads[1][[i, j]] - gym.grads[1][[i, j]]) / (2.0 * h);
                jet_worst = jet_worst.max((lap - e.laps[[i, j]]).abs() / lscale);
            }
        }
        // probe loss ½ Σ (values² + |grad|² + lap²)
        let probe = |t: &[f64]| -> Result<f64> {
            let e = net.eval_basis(t, &pts)?;
            Ok(0.5 * [&e.values, &e.grads[0], &e.grads[1], &e.laps].iter().map(|a| a.iter().map(|v| v * v).sum::<f64>()).sum::<f64>())
        };
        let mut g = vec![0.0; theta.len()];
        net.loss_param_gradient(&theta, &pts, &e, &mut g)?;
        for _ in 0..5 {
            let v: Vec<f64> = (0..theta.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let at = |s: f64| -> Vec<f64> { theta.iter().zip(&v).map(|(t, d)| t + s * d).collect() };
            let hh = 1e-5;
            let fd = (probe(&at(hh))? - probe(&at(-hh))?) / (2.0 * hh);
            let an: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
            grad_worst = grad_worst.max((fd - an).abs() / an.abs().max(1e-8));
        }
    }
    Ok(vec![
        CheckResult::new("network jets vs finite differences", jet_worst, 1e-6),
        CheckResult::new("parameter gradients vs finite differences", grad_worst, 1e-5),
    ])
}

/// Two sine modes on the Poisson problem recover `c = (1, 0)`.
pub fn galerkin_recovery() -> Result<CheckResult> {
    let p = catalog("reaction_diffusion", None, Some(&serde_json::json!({"alpha": 1.0, "beta": 0.0})))?;
    let d = Discretization::build(&p, &QuadConfig { points: 10, subintervals: 8, ..QuadConfig::default() })?;
    let space = AnalyticSpace::new(vec![sine_mode(1.0, 1.0), sine_mode(2.0, 1.0)]);
    let basis = space.evaluate(&[], &d)?;
    let mut sys = assemble(&d, &basis, 2)?;
    let c = sys.solve(DEFAULT_RCOND)?.clone();
    let worst = (c[0] - 1.0).abs().max(c[1].abs()).max(sys.residual());
    Ok(CheckResult::new("galerkin exact recovery", worst, 1e-10))
}

/// `η²(ψ, y) = ‖u − ψ‖²_a + ‖∇u − y‖²_*` and `η(ψ, ∇u) = ‖u − ψ‖_a`.
pub fn hypercircle_identity() -> Result<CheckResult> {
    let p = catalog("reaction_diffusion", None, Some(&serde_json::json!({"alpha": 1.0, "beta": 1.0})))?;
    let d = Discretization::build(&p, &QuadConfig { points: 10, subintervals: 10, ..QuadConfig::default() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        // ψ = u + a·bubble·cos(kx), y = ∇u + b·(sin(mx) cos(ny), x y)
        let (a, k) = (rng.random_range(-0.5..0.5), rng.random_range(0.0..3.0));
        let (b, m, n) = (rng.random_range(-0.5..0.5), rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
        let mut fields = Vec::new();
        let mut flux = Vec::new();
        let mut want = 0.0;
        for blk in &d.blocks {
            let pts = blk.layout.points();
            let w = blk.layout.weights();
            let mut f = FieldJets::zeros(pts.len());
            let mut y = FluxField { y1: vec![0.0; pts.len()], y2: vec![0.0; pts.len()], div: vec![0.0; pts.len()] };
            for (i, &[x1, x2]) in pts.iter().enumerate() {
                let u = p.exact(0, [x1, x2]);
                let bub = x1 * (1.0 - x1) * x2 * (1.0 - x2);
                let bx = (1.0 - 2.0 * x1) * x2 * (1.0 - x2);
                let by = x1 * (1.0 - x1) * (1.0 - 2.0 * x2);
                let (cs, sn) = ((k * x1).cos(), (k * x1).sin());
                let e = a * bub * cs;
                let ex = a * (bx * cs - bub * k * sn);
                let ey = a * by * cs;
                f.u[i] = u.v + e;
                f.ux[i] = u.gx + ex;
                f.uy[i] = u.gy + ey;
                let d1 = b * (m * x1).sin() * (n * x2).cos();
                let d2 = b * x1 * x2;
                let dd = b * (m * (m * x1).cos() * (n * x2).cos() + x1);
                y.y1[i] = u.gx + d1;
                y.y2[i] = u.gy + d2;
                y.div[i] = u.lap + dd;
                want += w[i] * (ex * ex + ey * ey + e * e + d1 * d1 + d2 * d2 + dd * dd);
            }
            fields.push(vec![f]);
            flux.push(vec![y]);
        }
        let eta = eta_indicator(&d, &fields, &flux)?;
        worst = worst.max((eta * eta - want).abs() / want);
        // with the exact gradient as flux, η is the energy error
        let exact_flux: Vec<Vec<FluxField>> = d
            .blocks
            .iter()
            .map(|blk| {
                let pts = blk.layout.points();
                let j: Vec<_> = pts.iter().map(|&x| p.exact(0, x)).collect();
                vec![FluxField {
                    y1: j.iter().map(|j| j.gx).collect(),
                    y2: j.iter().map(|j| j.gy).collect(),
                    div: j.iter().map(|j| j.lap).collect(),
                }]
            })
            .collect();
        let eta_exact = eta_indicator(&d, &fields, &exact_flux)?;
        let energy: f64 = d
            .blocks
            .iter()
            .zip(&fields)
            .map(|(blk, f)| {
                let pts = blk.layout.points();
                let w = blk.layout.weights();
                (0..pts.len())
                    .map(|i| {
                        let u = p.exact(0, pts[i]);
                        let (e, ex, ey) = (f[0].u[i] - u.v, f[0].ux[i] - u.gx, f[0].uy[i] - u.gy);
                        w[i] * (ex * ex + ey * ey + e * e)
                    })
                    .sum::<f64>()
            })
            .sum();
        worst = worst.max((eta_exact - energy.sqrt()).abs() / energy.sqrt());
    }
    Ok(CheckResult::new("hypercircle identity", worst, 1e-8))
}

/// Random trial functions vanish on the outer boundary and are continuous
/// across every interface.
pub fn trial_constraints() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for (name, family) in [
        ("two_material", Family::Tnn),
        ("two_material_highfreq", Family::Tnn),
        ("four_material", Family::Tnn),
        ("circle_inclusion", Family::Fnn2d),
    ] {
        let p = catalog(name, None, None)?;
        let space = TrialSpace::new(&p, &[ArchitectureSpec::new(family, 3, vec![6])])?;
        for seed in 0..3 {
            let theta = space.init(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c: Vec<f64> = (0..space.n_basis()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let scale = space
                .values_at(&p, &theta, &c, &p.sample_points(0, 50, seed))?
                .iter()
                .fold(1.0f64, |m, v| m.max(v.abs()));
            let v = space.values_at(&p, &theta, &c, &p.boundary_points(25))?;
            worst = worst.max(v.iter().fold(0.0f64, |m, x| m.max(x.abs())) / scale);
            for (i, it) in p.interfaces.iter().enumerate() {
                let pts = p.interface_points(i, 30);
                let a = space.branch_values(&theta, &c, it.side_a, &pts)?;
                let b = space.branch_values(&theta, &c, it.side_b, &pts)?;
                for (x, y) in a.iter().zip(&b) {
                    worst = worst.max((x - y).abs() / scale);
                }
            }
        }
    }
    Ok(CheckResult::new("trial boundary and interface constraints", worst, 1e-12))
}

/// Every cataloged exact solution satisfies its equation (five-point
/// Laplacian) and, on interfaces, the stated jump data.
pub fn exact_solutions() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    // Richardson-extrapolated five-point Laplacian, O(h⁴)
    let h = 1e-3;
    for name in PROBLEM_NAMES {
        let p = catalog(name, None, None)?;
        for sub in 0..p.n_subdomains() {
            let pts: Vec<[f64; 2]> = p
                .sample_points(sub, 200, 9)
                .into_iter()
                .filter(|x| name != "singular_laplace" || ((x[0] - 0.5).abs() > 0.05 && (x[1] - 0.5).abs() > 0.05))
                .collect();
            let scale = pts.iter().fold(1.0f64, |m, &x| m.max(p.source(sub, x).abs()));
            for x in pts {
                let u = |dx: f64, dy: f64| p.exact(sub, [x[0] + dx, x[1] + dy]).v;
                let five = |h: f64| (u(h, 0.0) + u(-h, 0.0) + u(0.0, h) + u(0.0, -h) - 4.0 * u(0.0, 0.0)) / (h * h);
                let lap = (4.0 * five(h / 2.0) - five(h)) / 3.0;
                let r = -p.alpha(sub) * lap + p.beta * u(0.0, 0.0) - p.source(sub, x);
                worst = worst.max(r.abs() / scale);
            }
        }
        for (i, it) in p.interfaces.iter().enumerate() {
            for x in p.interface_points(i, 50) {
                let (a, b) = (p.exact(it.side_a, x), p.exact(it.side_b, x));
                let n = p.normal(i, x);
                let flux = p.alpha(it.side_a) * (n[0] * a.gx + n[1] * a.gy) - p.alpha(it.side_b) * (n[0] * b.gx + n[1] * b.gy);
                worst = worst.max((a.v - b.v).abs());
                worst = worst.max((flux - p.flux_jump(i, x)).abs() / p.flux_jump(i, x).abs().max(1.0));
            }
        }
    }
    Ok(CheckResult::new("exact solutions satisfy their equations", worst, 1e-8))
}

pub fn run_checks() -> Result<Vec<CheckResult>> {
    let mut out = vec![quadrature_exactness()?];
    out.extend(derivative_checks()?);
    out.push(galerkin_recovery()?);
    out.push(hypercircle_identity()?);
    out.push(trial_constraints()?);
    out.push(exact_solutions()?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_checks().unwrap() {
            assert!(c.passed, "{} worst {:e} tol {:e}", c.name, c.worst, c.tolerance);
        }
    }
}
