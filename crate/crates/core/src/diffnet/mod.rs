//! Small sin networks used as subspace bases, with exact spatial jets and
//! reverse-mode parameter gradients.

pub mod checkpoint;
mod mlp;
mod network;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use mlp::{Jets, Mlp};
pub use network::{BasisEvaluation, Jet1, Network, TnnGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Fnn2d,
    Resnet2d,
    Tnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Sin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub family: Family,
    #[serde(default = "two")]
    pub input_dim: usize,
    /// Number of basis functions `p` (the rank for `tnn`).
    pub output_dim: usize,
    pub hidden_widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub skip_period: Option<usize>,
}

fn two() -> usize {
    2
}

impl ArchitectureSpec {
    pub fn new(family: Family, output_dim: usize, hidden_widths: Vec<usize>) -> Self {
        ArchitectureSpec {
            family,
            input_dim: 2,
            output_dim,
            hidden_widths,
            activation: Activation::Sin,
            skip_period: match family {
                Family::Resnet2d => Some(2),
                _ => None,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Architecture(m));
        if self.output_dim == 0 {
            return bad("output_dim must be positive".into());
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return bad("hidden_widths must be a non-empty list of positive widths".into());
        }
        if !(1..=2).contains(&self.input_dim) {
            return bad(format!("input_dim must be 1 or 2, got {}", self.input_dim));
        }
        if self.family == Family::Tnn && self.input_dim != 2 {
            return bad("tnn splits a 2D input into two 1D subnetworks".into());
        }
        match (self.family, self.skip_period) {
            (Family::Fnn2d, Some(_)) => {
                return bad("skip_period requires family resnet2d or tnn".into());
            }
            (Family::Resnet2d, None) => {
                return bad("resnet2d needs a skip_period".into());
            }
            _ => {}
        }
        if let Some(s) = self.skip_period {
            if s == 0 {
                return bad("skip_period must be positive".into());
            }
            if self.hidden_widths.windows(2).any(|w| w[0] != w[1]) {
                return bad("residual connections need equal hidden widths".into());
            }
        }
        Ok(())
    }

    /// Layer dimensions of each subnetwork.
    pub fn subnet_dims(&self) -> Vec<Vec<usize>> {
        let dims = |d_in: usize| {
            let mut v = vec![d_in];
            v.extend(&self.hidden_widths);
            v.push(self.output_dim);
            v
        };
        match self.family {
            Family::Tnn => vec![dims(1), dims(1)],
            _ => vec![dims(self.input_dim)],
        }
    }

    pub fn n_params(&self) -> usize {
        self.subnet_dims()
            .iter()
            .map(|d| d.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub network: usize,
    pub subnet: usize,
    pub layer: usize,
    pub kind: ParamKind,
    pub start: usize,
    pub len: usize,
    /// Fan-in and fan-out of the layer (for initialisation bounds).
    pub fan: (usize, usize),
}

/// Where each layer's weights and biases live in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterLayout {
    pub entries: Vec<LayoutEntry>,
    pub len: usize,
}

impl ParameterLayout {
    /// Layout of several networks stored one after another.
    pub fn for_networks(archs: &[ArchitectureSpec]) -> Self {
        let mut entries = Vec::new();
        let mut at = 0;
        for (n, arch) in archs.iter().enumerate() {
            for (s, dims) in arch.subnet_dims().iter().enumerate() {
                for (l, w) in dims.windows(2).enumerate() {
                    let (n_in, n_out) = (w[0], w[1]);
                    for (kind, len) in [(ParamKind::Weight, n_in * n_out), (ParamKind::Bias, n_out)] {
                        entries.push(LayoutEntry {
                            network: n,
                            subnet: s,
                            layer: l,
                            kind,
                            start: at,
                            len,
                            fan: (n_in, n_out),
                        });
                        at += len;
                    }
                }
            }
        }
        ParameterLayout { entries, len: at }
    }

    pub fn unpack(&self, flat: &[f64]) -> Result<Vec<Vec<f64>>> {
        if flat.len() != self.len {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, layout expects {}",
                flat.len(),
                self.len
            )));
        }
        Ok(self
            .entries
            .iter()
            .map(|e| flat[e.start..e.start + e.len].to_vec())
            .collect())
    }

    pub fn pack(&self, parts: &[Vec<f64>]) -> Result<Vec<f64>> {
        if parts.len() != self.entries.len() {
            return Err(Error::Shape("wrong number of parameter blocks".into()));
        }
        let mut flat = vec![0.0; self.len];
        for (e, p) in self.entries.iter().zip(parts) {
            if p.len() != e.len {
                return Err(Error::Shape(format!(
                    "block for layer {} has {} entries, expected {}",
                    e.layer,
                    p.len(),
                    e.len
                )));
            }
            flat[e.start..e.start + e.len].copy_from_slice(p);
        }
        Ok(flat)
    }
}

/// A flat parameter vector together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    pub layout: ParameterLayout,
}

/// Glorot-uniform weights and biases uniform in `[-π, π]`, drawn in layout order.
pub fn init_layout(layout: &ParameterLayout, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; layout.len];
    for e in &layout.entries {
        let bound = match e.kind {
            ParamKind::Weight => (6.0 / (e.fan.0 + e.fan.1) as f64).sqrt(),
            ParamKind::Bias => std::f64::consts::PI,
        };
        for v in &mut values[e.start..e.start + e.len] {
            *v = rng.random_range(-bound..=bound);
        }
    }
    values
}

pub fn init_params(arch: &ArchitectureSpec, seed: u64) -> Result<ParameterVector> {
    arch.validate()?;
    let layout = ParameterLayout::for_networks(std::slice::from_ref(arch));
    Ok(ParameterVector {
        values: init_layout(&layout, seed),
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let arch = ArchitectureSpec::new(Family::Tnn, 4, vec![8, 8]);
        let a = init_params(&arch, 3).unwrap();
        let b = init_params(&arch, 3).unwrap();
        let c = init_params(&arch, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        assert_eq!(a.values.len(), arch.n_params());
        for e in &a.layout.entries {
            let bound = match e.kind {
                ParamKind::Weight => (6.0 / (e.fan.0 + e.fan.1) as f64).sqrt(),
                ParamKind::Bias => std::f64::consts::PI,
            };
            assert!(a.values[e.start..e.start + e.len].iter().all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn layout_round_trips() {
        let archs = [
            ArchitectureSpec::new(Family::Fnn2d, 3, vec![5]),
            ArchitectureSpec::new(Family::Resnet2d, 2, vec![4, 4, 4]),
        ];
        let layout = ParameterLayout::for_networks(&archs);
        let flat: Vec<f64> = (0..layout.len).map(|i| i as f64).collect();
        assert_eq!(layout.pack(&layout.unpack(&flat).unwrap()).unwrap(), flat);
    }

    #[test]
    fn validation() {
        let mut a = ArchitectureSpec::new(Family::Fnn2d, 3, vec![5]);
        a.skip_period = Some(2);
        assert!(a.validate().is_err());
        let mut r = ArchitectureSpec::new(Family::Resnet2d, 3, vec![5, 6]);
        assert!(r.validate().is_err());
        r.hidden_widths = vec![5, 5];
        assert!(r.validate().is_ok());
        let bad: std::result::Result<ArchitectureSpec, _> = serde_json::from_str(
            r#"{"family":"fnn2d","output_dim":2,"hidden_widths":[3],"activation":"tanh"}"#,
        );
        assert!(bad.is_err());
    }
}
