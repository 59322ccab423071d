//! The training loop: solve for the coefficients on the current basis, then
//! move the network parameters with the coefficients frozen. Adam first, then
//! L-BFGS. Also the standalone fit of a boundary lifting network.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diffnet::{init_params, ArchitectureSpec, BasisEvaluation, Family, Network};
use crate::error::{Error, Result};
use crate::galerkin::{assemble, GalerkinSystem, DEFAULT_RCOND};
use crate::harness::metrics::{quadrature_errors, QuadErrors};
use crate::losses::{self, check_compatible, gradient_flux, LossEval, LossKind, LossValue};
use crate::problems::Rect;
use crate::quadrature::{gauss_legendre, rectangle_boundary};
use crate::space::{fields, BlockBasis, Discretization, FieldJets, Lifting, Role, Subspace};

/// Multi-step decay: the rate is multiplied by `gamma` at each milestone,
/// given as a fraction of the phase length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub milestones: Vec<f64>,
    pub gamma: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            milestones: vec![0.5, 0.75, 0.9],
            gamma: 0.5,
        }
    }
}

impl Schedule {
    pub fn rate(&self, base: f64, step: usize, steps: usize) -> f64 {
        let passed = self
            .milestones
            .iter()
            .filter(|&&m| step >= (m * steps as f64).floor() as usize)
            .count();
        base * self.gamma.powi(passed as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub adam_steps: usize,
    pub adam_lr: f64,
    pub lbfgs_steps: usize,
    pub lbfgs_lr: f64,
    pub lbfgs_history: usize,
    /// Solve for the coefficients every this many steps.
    pub galerkin_every: usize,
    /// Optional decay of the Adam rate.
    pub schedule: Option<Schedule>,
    pub rcond: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam_steps: 2000,
            adam_lr: 1e-3,
            lbfgs_steps: 50,
            lbfgs_lr: 0.1,
            lbfgs_history: 10,
            galerkin_every: 1,
            schedule: None,
            rcond: DEFAULT_RCOND,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.adam_lr > 0.0 && self.lbfgs_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.galerkin_every == 0 {
            return bad("galerkin_every must be at least 1");
        }
        if self.lbfgs_steps > 0 && self.lbfgs_history == 0 {
            return bad("lbfgs_history must be at least 1");
        }
        if !(self.rcond > 0.0 && self.rcond < 1.0) {
            return bad("rcond must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], g: &[f64], lr: f64) -> Result<()> {
        if g.len() != theta.len() || g.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "gradient has {} entries, parameters {}",
                g.len(),
                theta.len()
            )));
        }
        if !g.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteGradient { step: self.t as usize });
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// What an L-BFGS iteration did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LbfgsOutcome {
    /// Step `t` along the search direction passed the Armijo test.
    Accepted { t: f64, value: f64 },
    /// Line search failed; a small gradient step was taken instead.
    Fallback,
    /// Zero gradient; nothing to do.
    Stationary,
}

/// Limited-memory BFGS with Armijo backtracking.
#[derive(Debug, Clone, PartialEq)]
pub struct Lbfgs {
    pub history: usize,
    pub c1: f64,
    pub max_trials: usize,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    pub fallbacks: usize,
}

impl Lbfgs {
    pub fn new(history: usize) -> Self {
        Lbfgs {
            history,
            c1: 1e-4,
            max_trials: 25,
            s: VecDeque::new(),
            y: VecDeque::new(),
            fallbacks: 0,
        }
    }

    /// `−H g` by the two-loop recursion.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let k = self.s.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            alpha[i] = rho * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if k > 0 {
            let gamma = dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1]);
            q.iter_mut().for_each(|x| *x *= gamma);
        }
        for i in 0..k {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            let b = rho * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - b) * sj;
            }
        }
        q.iter_mut().for_each(|x| *x = -*x);
        q
    }

    /// Stores a curvature pair. A pair without safely positive `sᵀy` is
    /// dropped along with the stale memory, since backtracking alone cannot
    /// guarantee curvature.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 1e-10 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt()) || !sy.is_finite() {
            self.s.clear();
            self.y.clear();
            return;
        }
        if self.s.len() == self.history {
            self.s.pop_front();
            self.y.pop_front();
        }
        self.s.push_back(s);
        self.y.push_back(y);
    }

    /// One iteration from `theta` with value `f0` and gradient `g0`; `value`
    /// evaluates the objective at trial points. `theta` is updated in place.
    pub fn step(
        &mut self,
        theta: &mut [f64],
        f0: f64,
        g0: &[f64],
        lr: f64,
        mut value: impl FnMut(&[f64]) -> Result<f64>,
    ) -> Result<LbfgsOutcome> {
        if g0.iter().all(|&g| g == 0.0) {
            return Ok(LbfgsOutcome::Stationary);
        }
        let mut d = self.direction(g0);
        let mut slope = dot(g0, &d);
        if !(slope < 0.0) {
            self.s.clear();
            self.y.clear();
            d = g0.iter().map(|g| -g).collect();
            slope = dot(g0, &d);
        }
        // without curvature pairs the direction is the raw gradient; scale the
        // first trial so it cannot jump arbitrarily far
        let mut t = if self.s.is_empty() {
            lr * (1.0 / g0.iter().fold(0.0f64, |m, g| m.max(g.abs()))).min(1.0)
        } else {
            lr
        };
        let mut trial = vec![0.0; theta.len()];
        for _ in 0..self.max_trials {
            for i in 0..theta.len() {
                trial[i] = theta[i] + t * d[i];
            }
            // a trial point may leave the region where the basis is usable
            let f = match value(&trial) {
                Ok(f) => f,
                Err(Error::DegenerateSubspace { .. }) | Err(Error::NonFinite { .. }) => f64::NAN,
                Err(e) => return Err(e),
            };
            if f.is_finite() && f <= f0 + self.c1 * t * slope {
                theta.copy_from_slice(&trial);
                return Ok(LbfgsOutcome::Accepted { t, value: f });
            }
            t *= 0.5;
        }
        self.fallbacks += 1;
        for i in 0..theta.len() {
            theta[i] -= lr * 1e-2 * g0[i];
        }
        Ok(LbfgsOutcome::Fallback)
    }
}

/// Minimizes a smooth function with [`Lbfgs`]; returns the final point and value.
pub fn lbfgs_minimize(
    mut f: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    x0: &[f64],
    iterations: usize,
    lr: f64,
    history: usize,
) -> (Vec<f64>, f64) {
    let mut opt = Lbfgs::new(history);
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    for _ in 0..iterations {
        let before = x.clone();
        let out = opt
            .step(&mut x, fx, &g, lr, |p| Ok(f(p).0))
            .expect("closure objective never errors");
        if out == LbfgsOutcome::Stationary {
            break;
        }
        let (fn_, gn) = f(&x);
        let s: Vec<f64> = x.iter().zip(&before).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        opt.push(s, y);
        fx = fn_;
        g = gn;
    }
    (x, fx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Adam,
    Lbfgs,
    Final,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Adam => "adam",
            Phase::Lbfgs => "lbfgs",
            Phase::Final => "final",
        }
    }
}

/// One row of the training history: quantities at `θ^ℓ` with the freshly
/// solved coefficients, before the parameter update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub phase: Phase,
    pub lr: f64,
    pub loss: LossValue,
    /// Ritz loss plus `½‖u‖²_a`, which equals `½‖u − u_N‖²_a`.
    pub ritz_shifted: Option<f64>,
    pub errors: Option<QuadErrors>,
    /// `η(u_N, ∇u_N)` when the weighted estimator applies.
    pub eta: Option<f64>,
    pub condition: f64,
    pub used_pinv: bool,
}

/// Everything computed at one parameter vector.
pub struct Evaluation {
    pub basis: Vec<BlockBasis>,
    pub system: Option<GalerkinSystem>,
    pub c: Vec<f64>,
    pub fields: Vec<Vec<FieldJets>>,
    pub loss: LossEval,
}

/// Ties a subspace, a discretization and a loss together.
pub struct Model<'a, S: Subspace + ?Sized> {
    pub subspace: &'a S,
    pub disc: &'a Discretization,
    pub loss: LossKind,
    pub rcond: f64,
}

impl<'a, S: Subspace + ?Sized> Model<'a, S> {
    pub fn new(subspace: &'a S, disc: &'a Discretization, loss: LossKind) -> Result<Self> {
        check_compatible(loss, disc)?;
        Ok(Model {
            subspace,
            disc,
            loss,
            rcond: DEFAULT_RCOND,
        })
    }

    /// Basis at `theta`, the Galerkin solve (unless `frozen` coefficients are
    /// given), the field and the loss.
    pub fn evaluate(&self, theta: &[f64], frozen: Option<&[f64]>, want_adjoint: bool) -> Result<Evaluation> {
        let basis = self.subspace.evaluate(theta, self.disc)?;
        let (system, c) = match frozen {
            Some(c) => (None, c.to_vec()),
            None => {
                let mut sys = assemble(self.disc, &basis, self.subspace.n_basis())?;
                let c = sys.solve(self.rcond)?.as_slice().to_vec();
                (Some(sys), c)
            }
        };
        let fields = fields(self.disc, &basis, &c);
        let loss = losses::evaluate(self.loss, self.disc, &fields, want_adjoint)?;
        Ok(Evaluation {
            basis,
            system,
            c,
            fields,
            loss,
        })
    }

    /// `∂L/∂θ` at fixed coefficients.
    pub fn gradient(&self, theta: &[f64], ev: &Evaluation) -> Result<Vec<f64>> {
        let adj = ev
            .loss
            .adjoint
            .as_ref()
            .ok_or_else(|| Error::Loss("loss evaluated without adjoint".into()))?;
        let mut g = vec![0.0; self.subspace.n_params()];
        self.subspace.backprop(theta, self.disc, &ev.basis, &ev.c, adj, &mut g)?;
        Ok(g)
    }

    /// Loss at `theta` with the coefficients held at `c`.
    pub fn frozen_loss(&self, theta: &[f64], c: &[f64]) -> Result<f64> {
        Ok(self.evaluate(theta, Some(c), false)?.loss.value.total)
    }

    pub fn record(&self, step: usize, phase: Phase, lr: f64, ev: &Evaluation) -> StepRecord {
        let errors = quadrature_errors(self.disc, &ev.fields);
        let ritz_shifted = match (self.loss, errors) {
            (LossKind::Ritz, Some(e)) => Some(ev.loss.value.total + 0.5 * e.energy_norm * e.energy_norm),
            _ => None,
        };
        let has_sources = self.disc.blocks.iter().all(|b| match &b.role {
            Role::Volume { source, .. } => source.is_some(),
            Role::Load { .. } => false,
            Role::Interface { .. } => true,
        });
        let eta = (self.disc.beta > 0.0 && has_sources)
            .then(|| losses::eta_indicator(self.disc, &ev.fields, &gradient_flux(&ev.fields)).ok())
            .flatten();
        let (condition, used_pinv) = ev
            .system
            .as_ref()
            .map_or((f64::NAN, false), |s| (s.condition_estimate, s.used_pinv));
        StepRecord {
            step,
            phase,
            lr,
            loss: ev.loss.value.clone(),
            ritz_shifted,
            errors,
            eta,
            condition,
            used_pinv,
        }
    }
}

/// Callbacks during training.
#[derive(Default)]
pub struct Hooks<'h> {
    /// Called with each solved system (for `--dump-system`).
    pub on_system: Option<&'h mut dyn FnMut(usize, &GalerkinSystem) -> Result<()>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: Vec<f64>,
    pub c: Vec<f64>,
    /// One record per executed step.
    pub history: Vec<StepRecord>,
    /// Record at the final parameters with a fresh solve.
    pub last: StepRecord,
    pub pinv_steps: usize,
    pub lbfgs_fallbacks: usize,
}

fn solve_error(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        e @ Error::DegenerateSubspace { .. } => Error::TrainingSolve {
            step,
            source: Box::new(e),
        },
        e => e,
    }
}

/// Alternates the Galerkin solve for `c` with a parameter update at frozen
/// `c`, for `adam_steps` Adam steps followed by `lbfgs_steps` L-BFGS steps.
pub fn run_algorithm3<S: Subspace + ?Sized>(
    model: &Model<'_, S>,
    cfg: &TrainConfig,
    params0: Vec<f64>,
    hooks: &mut Hooks<'_>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if params0.len() != model.subspace.n_params() {
        return Err(Error::Shape("initial parameters do not match the subspace".into()));
    }
    let mut theta = params0;
    let mut adam = Adam::new(theta.len());
    let mut lbfgs = Lbfgs::new(cfg.lbfgs_history.max(1));
    let total = cfg.adam_steps + cfg.lbfgs_steps;
    let mut history = Vec::with_capacity(total);
    let mut c_prev: Option<Vec<f64>> = None;
    let mut pinv_steps = 0;
    for step in 0..total {
        let frozen = (step % cfg.galerkin_every != 0).then(|| c_prev.clone()).flatten();
        let ev = model
            .evaluate(&theta, frozen.as_deref(), true)
            .map_err(solve_error(step))?;
        if let Some(sys) = &ev.system {
            pinv_steps += usize::from(sys.used_pinv);
            if let Some(f) = hooks.on_system.as_mut() {
                f(step, sys)?;
            }
        }
        let g = model.gradient(&theta, &ev)?;
        if !g.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteGradient { step });
        }
        if step < cfg.adam_steps {
            let lr = cfg
                .schedule
                .as_ref()
                .map_or(cfg.adam_lr, |s| s.rate(cfg.adam_lr, step, cfg.adam_steps));
            history.push(model.record(step, Phase::Adam, lr, &ev));
            adam.step(&mut theta, &g, lr).map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::NonFiniteGradient { step },
                e => e,
            })?;
        } else {
            history.push(model.record(step, Phase::Lbfgs, cfg.lbfgs_lr, &ev));
            let before = theta.clone();
            let c = ev.c.clone();
            let out = lbfgs.step(&mut theta, ev.loss.value.total, &g, cfg.lbfgs_lr, |p| {
                model.frozen_loss(p, &c)
            })?;
            if out != LbfgsOutcome::Stationary {
                let at = model.evaluate(&theta, Some(&c), true)?;
                let gn = model.gradient(&theta, &at)?;
                let s: Vec<f64> = theta.iter().zip(&before).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
                lbfgs.push(s, y);
            }
        }
        c_prev = Some(ev.c);
    }
    let ev = model
        .evaluate(&theta, None, false)
        .map_err(solve_error(total))?;
    if let Some(sys) = &ev.system {
        if let Some(f) = hooks.on_system.as_mut() {
            f(total, sys)?;
        }
    }
    let last = model.record(total, Phase::Final, 0.0, &ev);
    Ok(TrainOutcome {
        params: theta,
        c: ev.c,
        history,
        last,
        pinv_steps,
        lbfgs_fallbacks: lbfgs.fallbacks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryFitConfig {
    /// Feature network; its outputs are combined linearly (plus a constant).
    pub arch: ArchitectureSpec,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    /// Composite Gauss-Legendre rule on each edge.
    pub points: usize,
    pub subintervals: usize,
    pub schedule: Option<Schedule>,
}

impl Default for BoundaryFitConfig {
    fn default() -> Self {
        BoundaryFitConfig {
            arch: ArchitectureSpec::new(Family::Fnn2d, 30, vec![30, 30]),
            steps: 2000,
            lr: 1e-3,
            seed: 7,
            points: 8,
            subintervals: 16,
            schedule: Some(Schedule::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFit {
    pub lifting: Lifting,
    /// Relative boundary error after training.
    pub error: f64,
    /// Relative boundary error before each step.
    pub history: Vec<f64>,
}

/// Weighted least squares for the output weights and constant.
fn output_layer(h: &ndarray::Array2<f64>, w: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let (m, q) = h.dim();
    let mut a = DMatrix::zeros(m, q + 1);
    let mut rhs = DVector::zeros(m);
    for i in 0..m {
        let s = w[i].sqrt();
        for j in 0..q {
            a[(i, j)] = s * h[[i, j]];
        }
        a[(i, q)] = s;
        rhs[i] = s * b[i];
    }
    let svd = a.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max();
    let d = svd.solve(&rhs, tol).map_err(|e| Error::Loss(e.to_string()))?;
    Ok(d.as_slice().to_vec())
}

/// Fits a lifting `b_N ≈ b` on the boundary of `domain`: the output layer by
/// least squares at every step, the hidden parameters by Adam on the relative
/// boundary error.
pub fn fit_boundary_network(b: impl Fn([f64; 2]) -> f64, domain: Rect, cfg: &BoundaryFitConfig) -> Result<BoundaryFit> {
    if cfg.arch.family == Family::Tnn {
        return Err(Error::Config("the boundary network must be fnn2d or resnet2d".into()));
    }
    let net = Network::new(cfg.arch.clone(), 0)?;
    let rule = rectangle_boundary(&gauss_legendre(cfg.points)?, cfg.subintervals, domain.x, domain.y)?;
    let target: Vec<f64> = rule.points.iter().map(|&x| b(x)).collect();
    if target.iter().all(|&v| v == 0.0) {
        return Ok(BoundaryFit {
            lifting: Lifting::zero(net),
            error: 0.0,
            history: Vec::new(),
        });
    }
    let norm2: f64 = target.iter().zip(&rule.weights).map(|(t, w)| w * t * t).sum();
    let mut theta = init_params(&cfg.arch, cfg.seed)?.values;
    let mut adam = Adam::new(theta.len());
    let q = net.p();
    let fit = |theta: &[f64]| -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let h = net.eval_values(theta, &rule.points)?;
        let d = output_layer(&h, &rule.weights, &target)?;
        let dv = ndarray::Array1::from(d[..q].to_vec());
        let r: Vec<f64> = h.dot(&dv).iter().zip(&target).map(|(v, t)| v + d[q] - t).collect();
        let e2: f64 = r.iter().zip(&rule.weights).map(|(r, w)| w * r * r).sum();
        Ok((d, r, (e2 / norm2).sqrt()))
    };
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (d, r, err) = fit(&theta)?;
        history.push(err);
        if err == 0.0 {
            break;
        }
        // dL/dr_m = w_m r_m / (‖b‖² L), and r depends on output j through d_j
        let m = rule.points.len();
        let mut adj = BasisEvaluation::zeros(m, q);
        for i in 0..m {
            let s = rule.weights[i] * r[i] / (norm2 * err);
            for j in 0..q {
                adj.values[[i, j]] = s * d[j];
            }
        }
        let mut g = vec![0.0; theta.len()];
        net.loss_param_gradient(&theta, &rule.points, &adj, &mut g)?;
        let lr = cfg.schedule.as_ref().map_or(cfg.lr, |s| s.rate(cfg.lr, step, cfg.steps));
        adam.step(&mut theta, &g, lr).map_err(|e| match e {
            Error::NonFiniteGradient { .. } => Error::NonFiniteGradient { step },
            e => e,
        })?;
    }
    let (d, _, err) = fit(&theta)?;
    Ok(BoundaryFit {
        lifting: Lifting {
            net,
            params: theta,
            coef: d,
        },
        error: err,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::catalog;
    use crate::space::{sine_mode, AnalyticSpace, QuadConfig, TrialSpace};

    #[test]
    fn adam_first_step_and_recursion() {
        let mut a = Adam::new(1);
        let mut th = [0.0];
        a.step(&mut th, &[1.0], 1e-3).unwrap();
        assert!((th[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-18);
        // second step with g = -1, by hand
        a.step(&mut th, &[-1.0], 1e-3).unwrap();
        let m = 0.9 * 0.1 + 0.1 * -1.0;
        let v = 0.999 * 0.001 + 0.001;
        let mh = m / (1.0 - 0.81);
        let vh = v / (1.0 - 0.999f64.powi(2));
        let expect = -1e-3 / (1.0 + 1e-8) - 1e-3 * mh / (vh.sqrt() + 1e-8);
        assert!((th[0] - expect).abs() < 1e-18, "{} vs {expect}", th[0]);
        let mut b = Adam::new(2);
        let mut z = [0.3, -0.2];
        b.step(&mut z, &[0.0, 0.0], 1e-3).unwrap();
        assert_eq!(z, [0.3, -0.2]);
        assert!(b.step(&mut z, &[f64::NAN, 0.0], 1e-3).is_err());
    }

    #[test]
    fn lbfgs_quadratic_and_rosenbrock() {
        let quad = |x: &[f64]| (0.5 * dot(x, x), x.to_vec());
        let (x, _) = lbfgs_minimize(quad, &[1.0, 1.0, 1.0], 1, 1.0, 10);
        assert!(dot(&x, &x).sqrt() <= 1e-12);
        let rosen = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            (
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
                vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
            )
        };
        let (x, f) = lbfgs_minimize(rosen, &[-1.2, 1.0], 200, 1.0, 10);
        assert!(f <= 1e-8, "f = {f} at {x:?}");
        let mut opt = Lbfgs::new(5);
        let mut th = vec![1.0, 2.0];
        let out = opt.step(&mut th, 0.0, &[0.0, 0.0], 1.0, |_| Ok(0.0)).unwrap();
        assert_eq!(out, LbfgsOutcome::Stationary);
        assert_eq!(th, vec![1.0, 2.0]);
    }

    #[test]
    fn schedule_halves_at_milestones() {
        let s = Schedule::default();
        assert_eq!(s.rate(1.0, 0, 100), 1.0);
        assert_eq!(s.rate(1.0, 50, 100), 0.5);
        assert_eq!(s.rate(1.0, 80, 100), 0.25);
        assert_eq!(s.rate(1.0, 95, 100), 0.125);
    }

    #[test]
    fn fixed_analytic_basis_reproduces_galerkin_answer() {
        let p = catalog("reaction_diffusion", None, Some(&serde_json::json!({"alpha": 1.0, "beta": 0.0}))).unwrap();
        let d = Discretization::build(&p, &QuadConfig { points: 10, subintervals: 8, ..QuadConfig::default() }).unwrap();
        let space = AnalyticSpace::new(vec![sine_mode(1.0, 1.0), sine_mode(2.0, 1.0)]);
        let model = Model::new(&space, &d, LossKind::Ritz).unwrap();
        let cfg = TrainConfig { adam_steps: 3, lbfgs_steps: 2, ..TrainConfig::default() };
        let mut calls = Vec::new();
        let mut hook = |step: usize, s: &GalerkinSystem| {
            let c = s.c.as_ref().unwrap();
            calls.push((step, c[0], c[1]));
            Ok(())
        };
        let out = run_algorithm3(&model, &cfg, vec![], &mut Hooks { on_system: Some(&mut hook) }).unwrap();
        assert_eq!(out.history.len(), 5);
        assert_eq!(calls.len(), 6);
        for (_, c0, c1) in calls {
            assert!((c0 - 1.0).abs() < 1e-10 && c1.abs() < 1e-10);
        }
        // exact solution lies in the space: shifted Ritz loss is zero
        assert!(out.last.ritz_shifted.unwrap().abs() < 1e-10);
    }

    #[test]
    fn zero_steps_returns_initial_solution() {
        let p = catalog("two_material", Some("1.1"), None).unwrap();
        let d = Discretization::build(&p, &QuadConfig { points: 4, subintervals: 6, ..QuadConfig::default() }).unwrap();
        let space = TrialSpace::new(&p, &[ArchitectureSpec::new(Family::Tnn, 3, vec![6])]).unwrap();
        let model = Model::new(&space, &d, LossKind::InterfacePosterior).unwrap();
        let cfg = TrainConfig { adam_steps: 0, lbfgs_steps: 0, ..TrainConfig::default() };
        let out = run_algorithm3(&model, &cfg, space.init(1), &mut Hooks::default()).unwrap();
        assert!(out.history.is_empty());
        assert!(out.last.loss.total.is_finite());
    }

    #[test]
    fn frozen_coefficient_gradient_matches_finite_differences() {
        let p = catalog("two_material", Some("1.2"), None).unwrap();
        let d = Discretization::build(&p, &QuadConfig { points: 4, subintervals: 6, ..QuadConfig::default() }).unwrap();
        let space = TrialSpace::new(&p, &[ArchitectureSpec::new(Family::Tnn, 2, vec![5])]).unwrap();
        for kind in [LossKind::Ritz, LossKind::InterfacePosterior] {
            let model = Model::new(&space, &d, kind).unwrap();
            let theta = space.init(4);
            let ev = model.evaluate(&theta, None, true).unwrap();
            let g = model.gradient(&theta, &ev).unwrap();
            let h = 1e-5;
            for k in 0..5 {
                let v: Vec<f64> = (0..theta.len()).map(|i| (((i + 3) * (k + 5)) % 7) as f64 / 7.0 - 0.4).collect();
                let at = |s: f64| -> Vec<f64> { theta.iter().zip(&v).map(|(t, d)| t + s * d).collect() };
                let fd = (model.frozen_loss(&at(h), &ev.c).unwrap() - model.frozen_loss(&at(-h), &ev.c).unwrap()) / (2.0 * h);
                let an = dot(&g, &v);
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-6), "{kind:?}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn galerkin_solve_never_raises_ritz_loss() {
        let p = catalog("two_material", Some("1.1"), None).unwrap();
        let d = Discretization::build(&p, &QuadConfig { points: 4, subintervals: 6, ..QuadConfig::default() }).unwrap();
        let space = TrialSpace::new(&p, &[ArchitectureSpec::new(Family::Tnn, 3, vec![6])]).unwrap();
        let model = Model::new(&space, &d, LossKind::Ritz).unwrap();
        let mut theta = space.init(2);
        let mut adam = Adam::new(theta.len());
        let mut prev_c: Option<Vec<f64>> = None;
        for _ in 0..10 {
            let ev = model.evaluate(&theta, None, true).unwrap();
            if let Some(c) = &prev_c {
                let before = model.frozen_loss(&theta, c).unwrap();
                assert!(ev.loss.value.total <= before + 1e-12 * before.abs());
            }
            let g = model.gradient(&theta, &ev).unwrap();
            adam.step(&mut theta, &g, 1e-2).unwrap();
            prev_c = Some(ev.c);
        }
    }

    #[test]
    fn boundary_fit_trivial_targets() {
        let dom = Rect { x: [-2.0, 2.0], y: [-2.0, 2.0] };
        let cfg = BoundaryFitConfig {
            arch: ArchitectureSpec::new(Family::Fnn2d, 5, vec![5]),
            steps: 20,
            ..BoundaryFitConfig::default()
        };
        let zero = fit_boundary_network(|_| 0.0, dom, &cfg).unwrap();
        assert_eq!(zero.error, 0.0);
        assert!(zero.history.is_empty());
        let one = fit_boundary_network(|_| 1.0, dom, &cfg).unwrap();
        assert!(one.error <= 1e-6, "{}", one.error);
    }
}
