//! One experiment end to end: build, train, measure, write artifacts.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::{e_test, quadrature_errors, test_grid};
use crate::diffnet::checkpoint::{Checkpoint, Header, FORMAT_VERSION};
use crate::diffnet::ParameterLayout;
use crate::error::{Error, Result};
use crate::galerkin::GalerkinSystem;
use crate::losses::{self, LossKind};
use crate::problems::ProblemSpec;
use crate::space::{fields, Discretization, FieldJets, Lifting, QuadConfig, Subspace, TrialSpace};
use crate::training::{fit_boundary_network, run_algorithm3, Hooks, Model, StepRecord, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Relative energy-norm error by quadrature.
    pub e_energy: Option<f64>,
    /// Relative L² error by quadrature.
    pub e_l2: Option<f64>,
    /// Relative error on the uniform test grid.
    pub e_test: f64,
    pub grid_shape: [usize; 2],
    pub quadrature_ids: Vec<String>,
    /// Largest pointwise error on the grid, where it occurs, and the
    /// subdomain owning that point.
    pub max_error: f64,
    pub max_error_at: [f64; 2],
    pub max_error_subdomain: usize,
}

/// Approximate and exact values on the test grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridValues {
    pub points: Vec<[f64; 2]>,
    pub approx: Vec<f64>,
    pub exact: Vec<f64>,
}

/// Trained trial function together with its lifting.
pub struct Solution<'a> {
    pub space: &'a TrialSpace,
    pub params: &'a [f64],
    pub c: &'a [f64],
    pub lifting: Option<&'a Lifting>,
}

impl Solution<'_> {
    pub fn values(&self, problem: &ProblemSpec, pts: &[[f64; 2]]) -> Result<Vec<f64>> {
        let mut v = self.space.values_at(problem, self.params, self.c, pts)?;
        if let Some(l) = self.lifting {
            for (a, b) in v.iter_mut().zip(l.values(pts)?) {
                *a += b;
            }
        }
        Ok(v)
    }

    /// The field on every block of `disc` (which must carry the lifting).
    pub fn fields(&self, disc: &Discretization) -> Result<Vec<Vec<FieldJets>>> {
        let basis = self.space.evaluate(self.params, disc)?;
        Ok(fields(disc, &basis, self.c))
    }
}

/// Errors of `sol` against the exact solution: energy and L² by quadrature on
/// `disc`, and the grid error on an `n × n` grid.
pub fn error_metrics(
    problem: &ProblemSpec,
    sol: &Solution<'_>,
    disc: &Discretization,
    n: usize,
) -> Result<(ErrorReport, GridValues)> {
    let q = quadrature_errors(disc, &sol.fields(disc)?);
    let points = test_grid(problem.domain, n);
    let approx = sol.values(problem, &points)?;
    let exact: Vec<f64> = points.iter().map(|&x| problem.exact_value(x)).collect();
    let (mut max_error, mut at) = (0.0, 0);
    for i in 0..points.len() {
        let e = (approx[i] - exact[i]).abs();
        if e > max_error {
            max_error = e;
            at = i;
        }
    }
    let report = ErrorReport {
        e_energy: q.map(|q| q.e_energy),
        e_l2: q.map(|q| q.e_l2),
        e_test: e_test(&approx, &exact),
        grid_shape: [n, n],
        quadrature_ids: disc.quad.ids(problem),
        max_error,
        max_error_at: points[at],
        max_error_subdomain: problem.subdomain_at(points[at]),
    };
    Ok((report, GridValues { points, approx, exact }))
}

/// `|L_coarse − L_refined|` for the field produced by `field` on the rules of
/// `quad` and on the rules refined by `factor`.
pub fn integration_error_probe(
    problem: &ProblemSpec,
    quad: &QuadConfig,
    loss: LossKind,
    factor: usize,
    lifting: Option<&Lifting>,
    field: impl Fn(&Discretization) -> Result<Vec<Vec<FieldJets>>>,
) -> Result<f64> {
    let value = |q: &QuadConfig| -> Result<f64> {
        let mut d = Discretization::build(problem, q)?;
        if let Some(l) = lifting {
            d.set_lifting(l)?;
        }
        Ok(losses::evaluate(loss, &d, &field(&d)?, false)?.value.total)
    };
    if factor <= 1 {
        return Ok(0.0);
    }
    Ok((value(quad)? - value(&quad.refined(factor))?).abs())
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Write `A`, `B`, `c` and the eigenvalues of every solved system.
    pub dump_system: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub problem: String,
    pub test: Option<String>,
    pub seed: u64,
    pub n_basis: usize,
    pub n_params: usize,
    pub report: ErrorReport,
    pub initial: Option<StepRecord>,
    #[serde(rename = "final")]
    pub last: StepRecord,
    /// `log10` of the ratio between the first and final monitored loss (the
    /// shifted Ritz loss for the Ritz functional).
    pub loss_decrease_orders: Option<f64>,
    pub integration_probe: Option<f64>,
    pub boundary_fit_error: Option<f64>,
    pub pinv_steps: usize,
    pub lbfgs_fallbacks: usize,
    pub wall_time_s: f64,
}

pub struct Experiment {
    pub summary: Summary,
    pub outcome: TrainOutcome,
    pub grid: GridValues,
    pub lifting: Option<Lifting>,
}

/// Loss monitored for progress: the shifted Ritz loss when available.
pub fn monitored_loss(r: &StepRecord) -> f64 {
    r.ritz_shifted.unwrap_or(r.loss.total)
}

pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>, opts: &RunOptions) -> Result<Experiment> {
    cfg.validate()?;
    let start = Instant::now();
    let problem = cfg.problem_spec()?;
    let mut disc = Discretization::build(&problem, &cfg.quadrature)?;
    let mut lift_error = None;
    let lifting = match (&cfg.boundary_fit, problem.lifted) {
        (Some(bf), true) => {
            let fit = fit_boundary_network(|x| problem.dirichlet(x), problem.domain, bf)?;
            disc.set_lifting(&fit.lifting)?;
            lift_error = Some(fit.error);
            Some(fit.lifting)
        }
        _ => None,
    };
    let space = TrialSpace::new(&problem, &cfg.arch)?;
    let mut model = Model::new(&space, &disc, cfg.loss)?;
    model.rcond = cfg.train.rcond;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let sys_dir = out.filter(|_| opts.dump_system).map(|d| d.join("system"));
    if let Some(d) = &sys_dir {
        fs::create_dir_all(d)?;
    }
    let mut dump = |step: usize, s: &GalerkinSystem| -> Result<()> {
        match &sys_dir {
            Some(d) => write_system(d, step, s),
            None => Ok(()),
        }
    };
    let mut hooks = Hooks {
        on_system: Some(&mut dump),
    };
    let outcome = run_algorithm3(&model, &cfg.train, space.init(cfg.seed), &mut hooks)?;
    let sol = Solution {
        space: &space,
        params: &outcome.params,
        c: &outcome.c,
        lifting: lifting.as_ref(),
    };
    let (report, grid) = error_metrics(&problem, &sol, &disc, cfg.test_grid)?;
    let probe = match cfg.probe_factor {
        0 => None,
        f => Some(integration_error_probe(
            &problem,
            &cfg.quadrature,
            cfg.loss,
            f,
            lifting.as_ref(),
            |d| sol.fields(d),
        )?),
    };
    let initial = outcome.history.first().cloned();
    let loss_decrease_orders = initial
        .as_ref()
        .map(|r| (monitored_loss(r) / monitored_loss(&outcome.last)).log10());
    let summary = Summary {
        config: cfg.clone(),
        problem: problem.name.clone(),
        test: problem.test.clone(),
        seed: cfg.seed,
        n_basis: space.n_basis(),
        n_params: space.n_params(),
        report,
        initial,
        last: outcome.last.clone(),
        loss_decrease_orders,
        integration_probe: probe,
        boundary_fit_error: lift_error,
        pinv_steps: outcome.pinv_steps,
        lbfgs_fallbacks: outcome.lbfgs_fallbacks,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out {
        write_history(&dir.join("history.csv"), &outcome.history)?;
        write_grid(&dir.join("grid.csv"), &grid)?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        checkpoint(&space, cfg.seed, &outcome, lifting.as_ref()).save(&dir.join("params.ckpt"))?;
    }
    Ok(Experiment {
        summary,
        outcome,
        grid,
        lifting,
    })
}

fn checkpoint(space: &TrialSpace, seed: u64, out: &TrainOutcome, lifting: Option<&Lifting>) -> Checkpoint {
    let mut values = out.params.clone();
    let mut archs = space.archs();
    let mut lifting_len = 0;
    if let Some(l) = lifting {
        archs.push(l.net.arch.clone());
        values.extend_from_slice(&l.params);
        values.extend_from_slice(&l.coef);
        lifting_len = l.params.len() + l.coef.len();
    }
    Checkpoint {
        header: Header {
            format_version: FORMAT_VERSION,
            archs,
            seed,
            layout: ParameterLayout::for_networks(&space.archs()),
            coefficients: out.c.clone(),
            lifting_len,
        },
        values,
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.17e}"))
}

pub const HISTORY_COLUMNS: [&str; 13] = [
    "step",
    "phase",
    "lr",
    "loss_total",
    "energy",
    "load",
    "volume_residual",
    "interface_jump",
    "ritz_shifted",
    "e_energy",
    "e_l2",
    "eta",
    "energy_error",
];

pub fn history_row(r: &StepRecord) -> String {
    let e = r.errors;
    [
        r.step.to_string(),
        r.phase.name().to_string(),
        fmt(Some(r.lr)),
        fmt(Some(r.loss.total)),
        fmt(r.loss.component("energy")),
        fmt(r.loss.component("load")),
        fmt(r.loss.component("volume_residual")),
        fmt(r.loss.component("interface_jump")),
        fmt(r.ritz_shifted),
        fmt(e.map(|e| e.e_energy)),
        fmt(e.map(|e| e.e_l2)),
        fmt(r.eta),
        fmt(e.map(|e| e.energy_error)),
    ]
    .join(",")
}

pub fn write_history(path: &Path, history: &[StepRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", HISTORY_COLUMNS.join(","))?;
    for r in history {
        writeln!(w, "{}", history_row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid(path: &Path, g: &GridValues) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "x1,x2,u_N,u_exact,abs_err")?;
    for i in 0..g.points.len() {
        let [x, y] = g.points[i];
        writeln!(
            w,
            "{x:.17e},{y:.17e},{:.17e},{:.17e},{:.17e}",
            g.approx[i],
            g.exact[i],
            (g.approx[i] - g.exact[i]).abs()
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_matrix(path: PathBuf, rows: usize, cols: usize, at: impl Fn(usize, usize) -> f64) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for i in 0..rows {
        let line: Vec<String> = (0..cols).map(|j| format!("{:.17e}", at(i, j))).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// `step_NNNNNN_{A,B,c,eig}.csv` in `dir`.
pub fn write_system(dir: &Path, step: usize, s: &GalerkinSystem) -> Result<()> {
    let name = |k: &str| dir.join(format!("step_{step:06}_{k}.csv"));
    let n = s.b.len();
    write_matrix(name("A"), n, n, |i, j| s.a[(i, j)])?;
    write_matrix(name("B"), n, 1, |i, _| s.b[i])?;
    let c = s
        .c
        .as_ref()
        .ok_or_else(|| Error::Shape("system dumped before it was solved".into()))?;
    write_matrix(name("c"), n, 1, |i, _| c[i])?;
    write_matrix(name("eig"), s.eigenvalues.len(), 1, |i, _| s.eigenvalues[i])?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Scale;
    use crate::problems::catalog;
    use crate::space::{sine_mode, AnalyticSpace};

    #[test]
    fn probe_vanishes_without_refinement_and_on_polynomials() {
        let p = catalog("reaction_diffusion", None, None).unwrap();
        let q = QuadConfig { points: 6, subintervals: 2, ..QuadConfig::default() };
        let exact = |d: &Discretization| Ok(d.analytic_fields(|s, x| p.exact(s, x)));
        assert_eq!(integration_error_probe(&p, &q, LossKind::Ritz, 1, None, exact).unwrap(), 0.0);
        // the zero field has zero loss on any rule
        let zero = |d: &Discretization| {
            Ok(d.blocks
                .iter()
                .map(|b| b.role.branches().iter().map(|_| FieldJets::zeros(b.layout.len())).collect())
                .collect())
        };
        assert!(integration_error_probe(&p, &q, LossKind::Ritz, 2, None, zero).unwrap() <= 1e-14);
    }

    #[test]
    fn exact_field_gives_zero_metrics() {
        let p = catalog("reaction_diffusion", None, Some(&serde_json::json!({"alpha": 1.0, "beta": 0.0}))).unwrap();
        let d = Discretization::build(&p, &QuadConfig { points: 10, subintervals: 8, ..QuadConfig::default() }).unwrap();
        let space = AnalyticSpace::new(vec![sine_mode(1.0, 1.0)]);
        let basis = space.evaluate(&[], &d).unwrap();
        let f = fields(&d, &basis, &[1.0]);
        let q = quadrature_errors(&d, &f).unwrap();
        assert!(q.e_energy < 1e-12 && q.e_l2 < 1e-12);
        let f = fields(&d, &basis, &[1.1]);
        let q = quadrature_errors(&d, &f).unwrap();
        assert!((q.e_energy - 0.1).abs() < 1e-12 && (q.e_l2 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn tiny_run_writes_artifacts() {
        let mut cfg = ExperimentConfig::preset("two_material", Some("1.1"), Scale::Desk).unwrap();
        cfg.train.adam_steps = 3;
        cfg.train.lbfgs_steps = 2;
        cfg.quadrature.subintervals = 6;
        cfg.quadrature.points = 4;
        cfg.arch[0].output_dim = 3;
        cfg.arch[0].hidden_widths = vec![4];
        cfg.test_grid = 11;
        let dir = tempfile::tempdir().unwrap();
        let ex = run_experiment(&cfg, Some(dir.path()), &RunOptions { dump_system: true }).unwrap();
        let hist = fs::read_to_string(dir.path().join("history.csv")).unwrap();
        assert_eq!(hist.lines().count(), 6);
        assert_eq!(hist.lines().next().unwrap(), HISTORY_COLUMNS.join(","));
        assert_eq!(fs::read_to_string(dir.path().join("grid.csv")).unwrap().lines().count(), 122);
        assert!(dir.path().join("system/step_000005_eig.csv").exists());
        let s: Summary = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(s.config, cfg);
        let ck = Checkpoint::load(&dir.path().join("params.ckpt")).unwrap();
        assert_eq!(ck.values, ex.outcome.params);
        assert_eq!(ck.header.coefficients, ex.outcome.c);
    }
}
