//! Training losses: the binary segmentation energy, the saturated ("hatted")
//! flows implied by primal-dual optimality at the ground-truth label, the
//! flow-regularization loss, and their analytic gradients with respect to the
//! capacity maps.
//!
//! Flows are treated as constants during differentiation: the loss is
//! evaluated after inference and gradients never propagate through the ADMM
//! iterates. Gradients enter only through the capacity maps inside the hat
//! definitions (C_s on background, C_t on foreground, C_g on boundary pixels)
//! and through the energy term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{divergence, gradient, tv_energy, GridDomain, ScalarField, TvMode, VectorField};
use crate::levelset::Mask;
use crate::solver::{CapacityMaps, FlowState};

/// Huber transition point δ. The loss is quadratic for |r| ≤ δ and linear
/// beyond, with a continuous derivative at the joint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HuberParams {
    pub delta: f64,
}

impl Default for HuberParams {
    fn default() -> Self {
        Self { delta: 1.0 }
    }
}

/// `r²/2` for |r| ≤ δ, else `δ(|r| − δ/2)`.
pub fn huber(r: f64, params: &HuberParams) -> f64 {
    let d = params.delta;
    let a = r.abs();
    if a <= d {
        0.5 * r * r
    } else {
        d * (a - 0.5 * d)
    }
}

/// Derivative of [`huber`]: `r` clipped to `[−δ, δ]`.
pub fn huber_deriv(r: f64, params: &HuberParams) -> f64 {
    r.clamp(-params.delta, params.delta)
}

/// Which functional the flow-regularization loss evaluates.
///
/// `Deviation` penalizes the pointwise distance between the flows and their
/// saturated counterparts. `Residual` penalizes the conservation residual of
/// the saturated flows, `p̂_s − p̂_t − div p̂`. Both vanish exactly at
/// primal-dual optimality of the label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowLossForm {
    #[default]
    Deviation,
    Residual,
}

/// The flows after substituting their saturated values at the label: source
/// capacity on background, sink capacity on foreground, and the spatial flow
/// rescaled to the edge capacity on label-boundary pixels.
#[derive(Clone, Debug)]
pub struct SaturatedFlows {
    pub p_source_hat: ScalarField,
    pub p_sink_hat: ScalarField,
    pub p_spatial_hat: VectorField,
}

/// Gradients of a scalar loss with respect to the three capacity maps.
#[derive(Clone, Debug)]
pub struct CapacityGradients {
    pub c_source: ScalarField,
    pub c_sink: ScalarField,
    pub c_edge: ScalarField,
}

impl CapacityGradients {
    pub fn zeros(domain: GridDomain) -> Self {
        Self {
            c_source: ScalarField::zeros(domain),
            c_sink: ScalarField::zeros(domain),
            c_edge: ScalarField::zeros(domain),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            c_source: self.c_source.zip_map(&other.c_source, |a, b| a + b),
            c_sink: self.c_sink.zip_map(&other.c_sink, |a, b| a + b),
            c_edge: self.c_edge.zip_map(&other.c_edge, |a, b| a + b),
        }
    }
}

/// One region's training loss and its capacity gradients.
#[derive(Clone, Debug)]
pub struct LossReport {
    pub flow_loss: f64,
    pub energy_loss: f64,
    pub total: f64,
    pub grad: CapacityGradients,
}

fn check_domains(label: &Mask, caps: &CapacityMaps) -> Result<()> {
    if label.domain() != caps.domain() {
        return Err(Error::DomainMismatch(
            "label and capacity maps must share a grid".into(),
        ));
    }
    Ok(())
}

/// The binary energy `Σ(1−λ)C_s + Σ λC_t + Σ C_g|∇λ|` of a labeling.
pub fn energy(label: &Mask, caps: &CapacityMaps, mode: TvMode) -> Result<f64> {
    check_domains(label, caps)?;
    let field = label.to_field();
    let mut data = 0.0;
    for i in 0..field.values().len() {
        let l = field.values()[i];
        data += (1.0 - l) * caps.c_source.values()[i] + l * caps.c_sink.values()[i];
    }
    Ok(data + tv_energy(&field, &caps.c_edge, mode))
}

/// The trained energy term `−Σ λ*C_s + Σ λ*C_t + Σ C_g|∇λ*|` and its
/// gradients: `∂/∂C_s = −λ*`, `∂/∂C_t = +λ*`, `∂/∂C_g = |∇λ*|`.
pub fn energy_loss(
    label: &Mask,
    caps: &CapacityMaps,
    mode: TvMode,
) -> Result<(f64, CapacityGradients)> {
    check_domains(label, caps)?;
    let field = label.to_field();
    let grad_mag = gradient(&field).magnitude(mode);

    let mut value = 0.0;
    for i in 0..field.values().len() {
        let l = field.values()[i];
        value += -l * caps.c_source.values()[i]
            + l * caps.c_sink.values()[i]
            + grad_mag.values()[i] * caps.c_edge.values()[i];
    }

    let grads = CapacityGradients {
        c_source: field.map(|l| -l),
        c_sink: field.clone(),
        c_edge: grad_mag,
    };
    Ok((value, grads))
}

/// Label-boundary indicator: pixels where the forward-difference gradient of
/// the label is nonzero (the same stencil as the TV term).
fn boundary_mask(label: &Mask) -> Vec<bool> {
    let grad = gradient(&label.to_field());
    grad.x()
        .values()
        .iter()
        .zip(grad.y().values())
        .map(|(&gx, &gy)| gx != 0.0 || gy != 0.0)
        .collect()
}

/// Substitute the saturated flow values dictated by the optimality conditions
/// at the label.
pub fn saturated_flows(
    label: &Mask,
    caps: &CapacityMaps,
    flows: &FlowState,
) -> Result<SaturatedFlows> {
    check_domains(label, caps)?;
    if flows.domain() != caps.domain() {
        return Err(Error::DomainMismatch(
            "flow state and capacity maps must share a grid".into(),
        ));
    }
    let boundary = boundary_mask(label);
    let n = caps.domain().len();

    let mut p_source_hat = flows.p_source.clone();
    let mut p_sink_hat = flows.p_sink.clone();
    let mut p_hat = flows.p_spatial.clone();

    for i in 0..n {
        if label.values()[i] == 0 {
            p_source_hat.values_mut()[i] = caps.c_source.values()[i];
        }
        if label.values()[i] == 1 {
            p_sink_hat.values_mut()[i] = caps.c_sink.values()[i];
        }
        if boundary[i] {
            let px = flows.p_spatial.x().values()[i];
            let py = flows.p_spatial.y().values()[i];
            let mag = (px * px + py * py).sqrt();
            if mag > 0.0 {
                let scale = caps.c_edge.values()[i] / mag;
                p_hat.x_mut().values_mut()[i] = px * scale;
                p_hat.y_mut().values_mut()[i] = py * scale;
            } else {
                p_hat.x_mut().values_mut()[i] = 0.0;
                p_hat.y_mut().values_mut()[i] = 0.0;
            }
        }
    }

    Ok(SaturatedFlows {
        p_source_hat,
        p_sink_hat,
        p_spatial_hat: p_hat,
    })
}

/// The flow-regularization loss and its capacity gradients. Flows are
/// constants; gradients flow only through the capacities inside the hat
/// substitutions. The per-pixel residual is passed through Huber and averaged
/// over pixels.
pub fn flow_loss(
    label: &Mask,
    caps: &CapacityMaps,
    flows: &FlowState,
    params: &HuberParams,
    form: FlowLossForm,
) -> Result<(f64, CapacityGradients)> {
    let hats = saturated_flows(label, caps, flows)?;
    let boundary = boundary_mask(label);
    let d = caps.domain();
    let n = d.len();
    let inv_n = 1.0 / n as f64;
    let mut grads = CapacityGradients::zeros(d);

    let sign = |v: f64| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    };

    match form {
        FlowLossForm::Deviation => {
            let mut value = 0.0;
            for i in 0..n {
                let ds = hats.p_source_hat.values()[i] - flows.p_source.values()[i];
                let dt = hats.p_sink_hat.values()[i] - flows.p_sink.values()[i];
                let dx = hats.p_spatial_hat.x().values()[i] - flows.p_spatial.x().values()[i];
                let dy = hats.p_spatial_hat.y().values()[i] - flows.p_spatial.y().values()[i];
                let dmag = (dx * dx + dy * dy).sqrt();
                let r = ds.abs() + dt.abs() + dmag;
                value += huber(r, params);

                let h = huber_deriv(r, params) * inv_n;
                if label.values()[i] == 0 {
                    grads.c_source.values_mut()[i] = h * sign(ds);
                }
                if label.values()[i] == 1 {
                    grads.c_sink.values_mut()[i] = h * sign(dt);
                }
                if boundary[i] {
                    // On boundary pixels with |p| > 0 the deviation magnitude
                    // is |C_g − |p||; with |p| = 0 the hat is pinned to zero
                    // and C_g does not enter.
                    let px = flows.p_spatial.x().values()[i];
                    let py = flows.p_spatial.y().values()[i];
                    let pmag = (px * px + py * py).sqrt();
                    if pmag > 0.0 {
                        grads.c_edge.values_mut()[i] =
                            h * sign(caps.c_edge.values()[i] - pmag);
                    }
                }
            }
            Ok((value * inv_n, grads))
        }
        FlowLossForm::Residual => {
            let div_hat = divergence(&hats.p_spatial_hat);
            let mut residual = ScalarField::zeros(d);
            let mut value = 0.0;
            for i in 0..n {
                let r = hats.p_source_hat.values()[i]
                    - hats.p_sink_hat.values()[i]
                    - div_hat.values()[i];
                residual.values_mut()[i] = r;
                value += huber(r, params);
            }

            let hprime = residual.map(|r| huber_deriv(r, params));
            for i in 0..n {
                let h = hprime.values()[i] * inv_n;
                if label.values()[i] == 0 {
                    grads.c_source.values_mut()[i] = h;
                }
                if label.values()[i] == 1 {
                    grads.c_sink.values_mut()[i] = -h;
                }
            }
            // The div term: ⟨h', div dp̂⟩ = −⟨∇h', dp̂⟩ and dp̂ = (p/|p|)dC_g
            // on boundary pixels, so ∂/∂C_g = +(∇h' · p/|p|)/N there.
            let grad_h = gradient(&hprime);
            for i in 0..n {
                if !boundary[i] {
                    continue;
                }
                let px = flows.p_spatial.x().values()[i];
                let py = flows.p_spatial.y().values()[i];
                let pmag = (px * px + py * py).sqrt();
                if pmag > 0.0 {
                    grads.c_edge.values_mut()[i] = inv_n
                        * (grad_h.x().values()[i] * px + grad_h.y().values()[i] * py)
                        / pmag;
                }
            }
            Ok((value * inv_n, grads))
        }
    }
}

/// Combined training loss: flow regularization plus the trained energy term,
/// with summed gradient fields.
pub fn train_loss(
    label: &Mask,
    caps: &CapacityMaps,
    flows: &FlowState,
    params: &HuberParams,
    form: FlowLossForm,
    mode: TvMode,
) -> Result<LossReport> {
    let (flow_value, flow_grads) = flow_loss(label, caps, flows, params, form)?;
    let (energy_value, energy_grads) = energy_loss(label, caps, mode)?;
    Ok(LossReport {
        flow_loss: flow_value,
        energy_loss: energy_value,
        total: flow_value + energy_value,
        grad: flow_grads.add(&energy_grads),
    })
}
