//! Longer end-to-end training examples: the boundary lifting fit and the
//! desk-scale two-material run at its original budget.

use nnsubspace::harness::{run_experiment, ExperimentConfig, RunOptions, Scale};
use nnsubspace::losses::LossKind;
use nnsubspace::problems::catalog;
use nnsubspace::training::{fit_boundary_network, BoundaryFitConfig};

#[test]
fn constant_boundary_data_is_fit_almost_exactly() {
    let p = catalog("circle_inclusion", None, None).unwrap();
    let fit = fit_boundary_network(|_| 1.0, p.domain, &BoundaryFitConfig::default()).unwrap();
    assert!(fit.error <= 1e-6, "error {:e}", fit.error);
}

#[test]
fn circle_boundary_fit_at_desk_scale() {
    let p = catalog("circle_inclusion", None, None).unwrap();
    let cfg = ExperimentConfig::preset("circle_inclusion", None, Scale::Desk).unwrap().boundary_fit.unwrap();
    assert_eq!((cfg.steps, cfg.arch.hidden_widths.clone()), (5000, vec![30, 30]));
    let fit = fit_boundary_network(|x| p.dirichlet(x), p.domain, &cfg).unwrap();
    println!("circle boundary fit: relative error {:.3e}", fit.error);
    assert!(fit.error <= 1e-3, "error {:e}", fit.error);
}

#[test]
fn two_material_with_two_thousand_adam_steps() {
    let mut cfg = ExperimentConfig::preset("two_material", Some("1.1"), Scale::Desk).unwrap();
    cfg.loss = LossKind::Ritz;
    cfg.train.adam_steps = 2000;
    cfg.train.lbfgs_steps = 50;
    assert_eq!((cfg.arch[0].output_dim, cfg.arch[0].hidden_widths.clone()), (20, vec![20, 20]));
    let s = run_experiment(&cfg, None, &RunOptions::default()).unwrap().summary;
    let orders = s.loss_decrease_orders.unwrap();
    println!("test 1.1, 2000 Adam steps: e_test {:.3e}, {orders:.2} orders", s.report.e_test);
    assert!(s.report.e_test <= 1e-3);
    assert!(orders >= 2.0);
}
