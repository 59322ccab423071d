//! Experiment configuration: presets per problem and scale, and merging a
//! user JSON document over a preset.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diffnet::{ArchitectureSpec, Family};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::problems::{catalog, problem_for_test, Kind, ProblemSpec};
use crate::space::{BaseRule, QuadConfig};
use crate::training::{BoundaryFitConfig, Schedule, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Minutes on a laptop.
    Desk,
    /// The published settings; hours.
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub problem: String,
    #[serde(default)]
    pub test: Option<String>,
    /// Overrides of the problem parameters.
    #[serde(default)]
    pub params: Option<Value>,
    pub scale: Scale,
    pub loss: LossKind,
    pub seed: u64,
    /// One architecture shared by every trial term, or one per term.
    pub arch: Vec<ArchitectureSpec>,
    pub quadrature: QuadConfig,
    pub train: TrainConfig,
    /// Points per side of the uniform test grid.
    pub test_grid: usize,
    /// Refinement factor of the integration-error probe; 0 disables it.
    #[serde(default)]
    pub probe_factor: usize,
    /// Boundary lifting network, for problems with non-homogeneous data.
    #[serde(default)]
    pub boundary_fit: Option<BoundaryFitConfig>,
}

fn tnn(p: usize, widths: Vec<usize>) -> Vec<ArchitectureSpec> {
    vec![ArchitectureSpec::new(Family::Tnn, p, widths)]
}

fn fnn(p: usize, widths: Vec<usize>) -> Vec<ArchitectureSpec> {
    vec![ArchitectureSpec::new(Family::Fnn2d, p, widths)]
}

impl ExperimentConfig {
    /// Preset for a problem (and optional test label) at a given scale.
    pub fn preset(problem: &str, test: Option<&str>, scale: Scale) -> Result<Self> {
        let spec = catalog(problem, test, None)?;
        let desk = scale == Scale::Desk;
        let mut quad = QuadConfig::default();
        let mut train = if desk {
            TrainConfig {
                adam_steps: 2000,
                adam_lr: 1e-2,
                lbfgs_steps: 50,
                lbfgs_lr: 0.1,
                schedule: Some(Schedule::default()),
                ..TrainConfig::default()
            }
        } else {
            TrainConfig {
                adam_steps: 50_000,
                adam_lr: 1e-3,
                lbfgs_steps: 100,
                lbfgs_lr: 0.1,
                ..TrainConfig::default()
            }
        };
        let (p, widths) = if desk { (20, vec![20, 20]) } else { (50, vec![50, 50, 50]) };
        let mut arch = tnn(p, widths.clone());
        let mut loss = LossKind::Ritz;
        let mut test_grid = 301;
        let mut boundary_fit = None;
        match spec.kind {
            Kind::SingularLaplace => {
                quad.rule = BaseRule::Legendre;
                test_grid = if desk { 301 } else { 1001 };
            }
            Kind::TwoMaterial(_) => {
                quad.rule = BaseRule::Lobatto;
                // the interface estimator needs the long schedule to make progress
                if desk {
                    train.adam_steps = 5000;
                } else {
                    loss = LossKind::InterfacePosterior;
                }
            }
            Kind::FourMaterial(_) => {
                quad.rule = BaseRule::Lobatto;
                quad.subintervals = if desk { 40 } else { 80 };
                test_grid = 401;
                if !desk {
                    train.adam_steps = 5000;
                }
            }
            Kind::Circle(_) => {
                // curved interface: pointwise networks on scattered rules
                arch = fnn(p, widths.clone());
                quad.rule = BaseRule::Legendre;
                if desk {
                    // scattered points cost a full network pass each
                    quad.subintervals = 12;
                    quad.n_theta = 64;
                    quad.radial_subintervals = 4;
                }
                test_grid = 401;
                boundary_fit = Some(if desk {
                    BoundaryFitConfig {
                        steps: 5000,
                        lr: 1e-2,
                        ..BoundaryFitConfig::default()
                    }
                } else {
                    BoundaryFitConfig {
                        arch: ArchitectureSpec::new(Family::Fnn2d, 50, widths),
                        steps: 50_000,
                        lr: 1e-3,
                        ..BoundaryFitConfig::default()
                    }
                });
            }
            Kind::ReactionDiffusion(_) => {
                test_grid = 101;
            }
        }
        if let Some(t) = test {
            // the four-material tests are reported with the Ritz loss
            if t.starts_with('4') {
                loss = LossKind::Ritz;
            }
        }
        Ok(ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            problem: problem.to_string(),
            test: test.map(String::from).or_else(|| spec.test.clone()),
            params: None,
            scale,
            loss,
            seed: 1,
            arch,
            quadrature: quad,
            train,
            test_grid,
            probe_factor: 2,
            boundary_fit,
        })
    }

    /// Builds a configuration from a JSON document: the `problem`, `test` and
    /// `scale` keys select a preset, and every other key overrides it
    /// (objects merge recursively).
    pub fn from_json(doc: &Value) -> Result<Self> {
        let obj = doc
            .as_object()
            .ok_or_else(|| Error::Config("configuration must be a JSON object".into()))?;
        match obj.get("schema_version") {
            Some(v) if v.as_u64() == Some(SCHEMA_VERSION as u64) => {}
            Some(v) => {
                return Err(Error::Config(format!(
                    "unsupported schema_version {v}; expected {SCHEMA_VERSION}"
                )))
            }
            None => return Err(Error::Config("missing schema_version".into())),
        }
        let test = obj.get("test").and_then(Value::as_str);
        let problem = match obj.get("problem").and_then(Value::as_str) {
            Some(p) => p.to_string(),
            None => test
                .and_then(problem_for_test)
                .ok_or_else(|| Error::Config("missing problem".into()))?
                .to_string(),
        };
        let scale: Scale = match obj.get("scale") {
            Some(s) => serde_json::from_value(s.clone()).map_err(|e| Error::Config(e.to_string()))?,
            None => Scale::Desk,
        };
        let base = Self::preset(&problem, test, scale)?;
        let mut merged = serde_json::to_value(&base)?;
        merge_into(&mut merged, doc);
        merged["problem"] = Value::String(problem);
        let cfg: ExperimentConfig = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        catalog(&self.problem, self.test.as_deref(), self.params.as_ref())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema_version {}", self.schema_version)));
        }
        if self.arch.is_empty() {
            return Err(Error::Config("at least one architecture is required".into()));
        }
        for a in &self.arch {
            a.validate()?;
        }
        if self.test_grid < 2 {
            return Err(Error::Config("test_grid must be at least 2".into()));
        }
        self.train.validate()?;
        let spec = self.problem_spec()?;
        if spec.lifted && self.boundary_fit.is_none() {
            return Err(Error::Config(format!(
                "problem {} has non-homogeneous boundary data and needs boundary_fit",
                spec.name
            )));
        }
        Ok(())
    }
}

/// Recursive merge: objects merge key by key, anything else replaces.
pub fn merge_into(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_into(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn every_preset_validates() {
        for name in crate::problems::PROBLEM_NAMES {
            for scale in [Scale::Desk, Scale::Paper] {
                let cfg = ExperimentConfig::preset(name, None, scale).unwrap();
                cfg.validate().unwrap();
            }
        }
    }

    #[test]
    fn json_overrides_merge_over_preset() {
        let cfg = ExperimentConfig::from_json(&json!({
            "schema_version": 1,
            "test": "1.2",
            "loss": "ritz",
            "train": {"adam_steps": 7},
        }))
        .unwrap();
        assert_eq!(cfg.problem, "two_material");
        assert_eq!(cfg.loss, LossKind::Ritz);
        assert_eq!(cfg.train.adam_steps, 7);
        assert_eq!(cfg.train.lbfgs_steps, 50);
        // echo round-trips
        let again = ExperimentConfig::from_json(&serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn bad_documents_are_rejected() {
        assert!(ExperimentConfig::from_json(&json!({"problem": "two_material"})).is_err());
        assert!(ExperimentConfig::from_json(&json!({"schema_version": 9, "problem": "two_material"})).is_err());
        assert!(ExperimentConfig::from_json(&json!({"schema_version": 1, "problem": "nope"})).is_err());
        assert!(ExperimentConfig::from_json(&json!({"schema_version": 1, "problem": "two_material", "bogus": 1})).is_err());
        assert!(ExperimentConfig::from_json(&json!({
            "schema_version": 1, "problem": "circle_inclusion", "boundary_fit": null
        }))
        .is_err());
    }
}
