//! Loss functionals of a field given on the quadrature blocks, each with its
//! sensitivities to the field jets (the field adjoint) for backpropagation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Discretization, FieldJets, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `½ a(u, u) − (f, u) − ⟨g, u⟩`.
    Ritz,
    /// `‖f − βu + α Δu‖²`.
    Residual,
    /// Residual plus `‖g − [α ∂ₙu]‖²` on the interfaces.
    #[serde(alias = "posterior")]
    InterfacePosterior,
}

impl LossKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ritz" => Ok(LossKind::Ritz),
            "residual" => Ok(LossKind::Residual),
            "posterior" | "interface_posterior" => Ok(LossKind::InterfacePosterior),
            other => Err(Error::Loss(format!("unknown loss kind `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ritz => "ritz",
            LossKind::Residual => "residual",
            LossKind::InterfacePosterior => "interface_posterior",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub components: BTreeMap<String, f64>,
}

impl LossValue {
    fn from_parts(parts: &[(&str, f64)]) -> Self {
        LossValue {
            total: parts.iter().map(|p| p.1).sum(),
            components: parts.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.components.get(name).copied()
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.components.values().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: LossValue,
    /// Per block, per branch sensitivities (weights included).
    pub adjoint: Option<Vec<Vec<FieldJets>>>,
}

fn zero_adjoint(disc: &Discretization) -> Vec<Vec<FieldJets>> {
    disc.blocks
        .iter()
        .map(|b| b.role.branches().iter().map(|_| FieldJets::zeros(b.layout.len())).collect())
        .collect()
}

fn check_fields(disc: &Discretization, fields: &[Vec<FieldJets>]) -> Result<()> {
    if fields.len() != disc.blocks.len() {
        return Err(Error::Shape(format!(
            "{} field blocks for {} quadrature blocks",
            fields.len(),
            disc.blocks.len()
        )));
    }
    for (b, f) in disc.blocks.iter().zip(fields) {
        if f.len() != b.role.branches().len() || f.iter().any(|x| x.len() != b.layout.len()) {
            return Err(Error::Shape(format!("field on block {} has the wrong shape", b.label)));
        }
    }
    Ok(())
}

pub fn evaluate(kind: LossKind, disc: &Discretization, fields: &[Vec<FieldJets>], want_adjoint: bool) -> Result<LossEval> {
    match kind {
        LossKind::Ritz => ritz_loss(disc, fields, want_adjoint),
        LossKind::Residual => residual_loss(disc, fields, want_adjoint),
        LossKind::InterfacePosterior => interface_loss(disc, fields, want_adjoint),
    }
}

/// Whether a loss kind can be used on this discretization.
pub fn check_compatible(kind: LossKind, disc: &Discretization) -> Result<()> {
    let has_load = disc.blocks.iter().any(|b| matches!(b.role, Role::Load { .. }));
    let has_iface = disc.blocks.iter().any(|b| matches!(b.role, Role::Interface { .. }));
    match kind {
        LossKind::Ritz => Ok(()),
        _ if has_load => Err(Error::Loss(
            "residual-type losses need the source at volume points; this problem only has a split load functional".into(),
        )),
        LossKind::InterfacePosterior if !has_iface => Err(Error::Loss(
            "interface_posterior needs interface data; use residual".into(),
        )),
        _ => Ok(()),
    }
}

pub fn ritz_loss(disc: &Discretization, fields: &[Vec<FieldJets>], want_adjoint: bool) -> Result<LossEval> {
    check_fields(disc, fields)?;
    let beta = disc.beta;
    let mut adj = want_adjoint.then(|| zero_adjoint(disc));
    let (mut energy, mut load) = (0.0, 0.0);
    for (bi, (b, f)) in disc.blocks.iter().zip(fields).enumerate() {
        let w = b.layout.weights();
        let u = &f[0];
        match &b.role {
            Role::Volume { alpha, source, .. } => {
                for i in 0..w.len() {
                    energy += 0.5 * w[i] * (alpha * (u.ux[i] * u.ux[i] + u.uy[i] * u.uy[i]) + beta * u.u[i] * u.u[i]);
                    let fi = source.as_ref().map_or(0.0, |s| s[i]);
                    load -= w[i] * fi * u.u[i];
                    if let Some(a) = adj.as_mut() {
                        let a = &mut a[bi][0];
                        a.u[i] = w[i] * (beta * u.u[i] - fi);
                        a.ux[i] = w[i] * alpha * u.ux[i];
                        a.uy[i] = w[i] * alpha * u.uy[i];
                    }
                }
            }
            Role::Load { values, .. } => {
                for i in 0..w.len() {
                    load -= w[i] * values[i] * u.u[i];
                    if let Some(a) = adj.as_mut() {
                        a[bi][0].u[i] = -w[i] * values[i];
                    }
                }
            }
            Role::Interface { g, .. } => {
                for i in 0..w.len() {
                    load -= w[i] * g[i] * u.u[i];
                    if let Some(a) = adj.as_mut() {
                        a[bi][0].u[i] = -w[i] * g[i];
                    }
                }
            }
        }
    }
    Ok(LossEval {
        value: LossValue::from_parts(&[("energy", energy), ("load", load)]),
        adjoint: adj,
    })
}

fn volume_residual(disc: &Discretization, fields: &[Vec<FieldJets>], adj: &mut Option<Vec<Vec<FieldJets>>>) -> Result<f64> {
    let beta = disc.beta;
    let mut acc = 0.0;
    for (bi, (b, f)) in disc.blocks.iter().zip(fields).enumerate() {
        match &b.role {
            Role::Volume { alpha, source, .. } => {
                let Some(src) = source else {
                    return Err(Error::Loss(format!("block {} has no source values", b.label)));
                };
                let w = b.layout.weights();
                let u = &f[0];
                for i in 0..w.len() {
                    let r = src[i] - beta * u.u[i] + alpha * u.lap[i];
                    acc += w[i] * r * r;
                    if let Some(a) = adj.as_mut() {
                        a[bi][0].u[i] = -2.0 * w[i] * beta * r;
                        a[bi][0].lap[i] = 2.0 * w[i] * alpha * r;
                    }
                }
            }
            Role::Load { .. } => {
                return Err(Error::Loss(
                    "residual-type losses need the source at volume points".into(),
                ))
            }
            Role::Interface { .. } => {}
        }
    }
    Ok(acc)
}

pub fn residual_loss(disc: &Discretization, fields: &[Vec<FieldJets>], want_adjoint: bool) -> Result<LossEval> {
    check_fields(disc, fields)?;
    let mut adj = want_adjoint.then(|| zero_adjoint(disc));
    let v = volume_residual(disc, fields, &mut adj)?;
    Ok(LossEval {
        value: LossValue::from_parts(&[("volume_residual", v)]),
        adjoint: adj,
    })
}

/// Conormal jump `α_a n·∇u_a − α_b n·∇u_b` at point `i` of an interface block.
fn flux_jump(alpha: [f64; 2], n: [f64; 2], a: &FieldJets, b: &FieldJets, i: usize) -> f64 {
    alpha[0] * (n[0] * a.ux[i] + n[1] * a.uy[i]) - alpha[1] * (n[0] * b.ux[i] + n[1] * b.uy[i])
}

pub fn interface_loss(disc: &Discretization, fields: &[Vec<FieldJets>], want_adjoint: bool) -> Result<LossEval> {
    check_fields(disc, fields)?;
    check_compatible(LossKind::InterfacePosterior, disc)?;
    let mut adj = want_adjoint.then(|| zero_adjoint(disc));
    let v = volume_residual(disc, fields, &mut adj)?;
    let mut jump = 0.0;
    for (bi, (b, f)) in disc.blocks.iter().zip(fields).enumerate() {
        if let Role::Interface { alpha, normals, g, .. } = &b.role {
            let w = b.layout.weights();
            for i in 0..w.len() {
                let n = normals[i];
                let r = g[i] - flux_jump(*alpha, n, &f[0], &f[1], i);
                jump += w[i] * r * r;
                if let Some(a) = adj.as_mut() {
                    let s = -2.0 * w[i] * r;
                    a[bi][0].ux[i] = s * alpha[0] * n[0];
                    a[bi][0].uy[i] = s * alpha[0] * n[1];
                    a[bi][1].ux[i] = -s * alpha[1] * n[0];
                    a[bi][1].uy[i] = -s * alpha[1] * n[1];
                }
            }
        }
    }
    Ok(LossEval {
        value: LossValue::from_parts(&[("volume_residual", v), ("interface_jump", jump)]),
        adjoint: adj,
    })
}

/// A vector field `y` with its divergence at the points of a block branch.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxField {
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub div: Vec<f64>,
}

impl FluxField {
    /// `y = ∇u`, so `div y = Δu`.
    pub fn gradient_of(f: &FieldJets) -> Self {
        FluxField {
            y1: f.ux.clone(),
            y2: f.uy.clone(),
            div: f.lap.clone(),
        }
    }
}

/// `y = ∇ψ` on every block branch.
pub fn gradient_flux(fields: &[Vec<FieldJets>]) -> Vec<Vec<FluxField>> {
    fields
        .iter()
        .map(|b| b.iter().map(FluxField::gradient_of).collect())
        .collect()
}

/// The a posteriori estimator
/// `η²(ψ, y) = ∫ β⁻¹(f − βψ + α div y)² + ∫ α|y − ∇ψ|²`, plus
/// `∫_Γ (g − [α n·y])²` on interfaces (unscaled). Returns `η`.
pub fn eta_indicator(disc: &Discretization, fields: &[Vec<FieldJets>], flux: &[Vec<FluxField>]) -> Result<f64> {
    check_fields(disc, fields)?;
    let beta = disc.beta;
    if !(beta > 0.0) {
        return Err(Error::Loss(format!("the weighted estimator needs β > 0, got {beta}")));
    }
    let mut acc = 0.0;
    for ((b, f), y) in disc.blocks.iter().zip(fields).zip(flux) {
        let w = b.layout.weights();
        match &b.role {
            Role::Volume { alpha, source, .. } => {
                let src = source
                    .as_ref()
                    .ok_or_else(|| Error::Loss(format!("block {} has no source values", b.label)))?;
                let (u, y) = (&f[0], &y[0]);
                for i in 0..w.len() {
                    let r = src[i] - beta * u.u[i] + alpha * y.div[i];
                    let d1 = y.y1[i] - u.ux[i];
                    let d2 = y.y2[i] - u.uy[i];
                    acc += w[i] * (r * r / beta + alpha * (d1 * d1 + d2 * d2));
                }
            }
            Role::Load { .. } => {
                return Err(Error::Loss("the estimator needs the source at volume points".into()))
            }
            Role::Interface { alpha, normals, g, .. } => {
                for i in 0..w.len() {
                    let n = normals[i];
                    let ja = alpha[0] * (n[0] * y[0].y1[i] + n[1] * y[0].y2[i]);
                    let jb = alpha[1] * (n[0] * y[1].y1[i] + n[1] * y[1].y2[i]);
                    let r = g[i] - (ja - jb);
                    acc += w[i] * r * r;
                }
            }
        }
    }
    Ok(acc.max(0.0).sqrt())
}

/// Relative boundary misfit `‖b_N − b‖ / ‖b‖` under the boundary weights.
pub fn boundary_fit_loss(bn: &[f64], b: &[f64], weights: &[f64]) -> Result<f64> {
    if bn.len() != b.len() || b.len() != weights.len() {
        return Err(Error::Shape("boundary values and weights differ in length".into()));
    }
    let norm: f64 = b.iter().zip(weights).map(|(x, w)| w * x * x).sum();
    if !(norm > 0.0) {
        return Err(Error::Loss("boundary data has zero norm".into()));
    }
    let err: f64 = bn.iter().zip(b).zip(weights).map(|((p, q), w)| w * (p - q) * (p - q)).sum();
    Ok((err / norm).sqrt())
}
