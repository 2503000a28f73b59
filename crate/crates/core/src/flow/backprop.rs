//! Reverse-mode gradients through the flow, for both training losses:
//! reconstruction (L1/L2, backpropagated through the inverse direction)
//! and negative log-likelihood (through the forward direction).
//!
//! Learned masks train with a straight-through estimator: the forward
//! graph uses the hard binary mask, the backward path multiplies the mask
//! gradient by the derivative of `sigmoid(logits)`. [`MaskEval::Relaxed`]
//! evaluates the same graph with `sigmoid(logits)` substituted for the
//! mask; gradient-verification tests difference that surrogate.

use ndarray::{s, Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::flow::mask::MaskStrategy;
use crate::flow::net::{NetCache, NetGrads};
use crate::flow::{CouplingFlow, CouplingLayer, ParamClass, LN_2PI};

/// Training loss selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Mean absolute error on the generated shape block.
    L1,
    /// Mean squared error on the generated shape block.
    L2,
    /// Negative mean log-density of the training pairs.
    Nll,
}

/// How learned masks enter the computation graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskEval {
    /// Hard threshold forward, straight-through backward. Used in training.
    Hard,
    /// Continuous surrogate `sigmoid(logits)` everywhere. This is the
    /// differentiable relaxation that finite-difference checks probe.
    Relaxed,
}

/// Gradients for one coupling layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub s: NetGrads,
    pub t: NetGrads,
    pub mask_logits: Option<Array1<f64>>,
}

/// Gradients for every trainable parameter of a flow, shaped like the flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGrads {
    pub layers: Vec<LayerGrads>,
}

impl FlowGrads {
    /// Walks every gradient scalar in the same order as
    /// [`CouplingFlow::visit_params_mut`].
    pub fn visit(&self, f: &mut dyn FnMut(ParamClass, f64)) {
        for layer in &self.layers {
            for net in [&layer.s, &layer.t] {
                for w in &net.weights {
                    for v in w.iter() {
                        f(ParamClass::Weight, *v);
                    }
                }
                for b in &net.biases {
                    for v in b.iter() {
                        f(ParamClass::Bias, *v);
                    }
                }
            }
            if let Some(logits) = &layer.mask_logits {
                for v in logits.iter() {
                    f(ParamClass::MaskLogit, *v);
                }
            }
        }
    }

    pub fn flat(&self) -> Vec<(ParamClass, f64)> {
        let mut out = Vec::new();
        self.visit(&mut |c, v| out.push((c, v)));
        out
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Sign with sgn(0) = 0: the L1 subgradient at an exact fit is zero.
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mask used in the graph plus, for learned masks, d(mask)/d(logits).
fn resolve_mask(layer: &CouplingLayer, eval: MaskEval) -> Result<(Array1<f64>, Option<Array1<f64>>)> {
    match layer.mask_spec.strategy {
        MaskStrategy::Learned => {
            let logits = layer
                .mask_spec
                .logits
                .as_ref()
                .ok_or_else(|| Error::validation("learned mask without logits".to_string()))?;
            let surrogate = logits.mapv(sigmoid);
            let dsig = &surrogate * &surrogate.mapv(|p| 1.0 - p);
            let mask = match eval {
                MaskEval::Hard => layer.mask()?,
                MaskEval::Relaxed => surrogate,
            };
            Ok((mask, Some(dsig)))
        }
        _ => Ok((layer.mask()?, None)),
    }
}

fn check_finite(values: &Array2<f64>, what: &str, layer: usize) -> Result<()> {
    for ((b, j), v) in values.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite {what} at layer {layer}, batch row {b}, position {j}"
            )));
        }
    }
    Ok(())
}

struct StageRecord {
    layer_index: usize,
    mask: Array1<f64>,
    dsig: Option<Array1<f64>>,
    /// chain input to this layer application
    input: Array2<f64>,
    s: Array2<f64>,
    t: Array2<f64>,
    s_cache: NetCache,
    t_cache: NetCache,
}

fn concat_cond(cond: &Array2<f64>, tail: Option<&Array2<f64>>, dim: usize) -> Array2<f64> {
    let b = cond.nrows();
    let mut x = Array2::zeros((b, dim));
    x.slice_mut(s![.., ..cond.ncols()]).assign(cond);
    if let Some(t) = tail {
        x.slice_mut(s![.., cond.ncols()..]).assign(t);
    }
    x
}

fn validate_batch(flow: &CouplingFlow, cond: &Array2<f64>, targets: &Array2<f64>) -> Result<()> {
    if cond.nrows() == 0 {
        return Err(Error::validation("empty batch".to_string()));
    }
    if cond.nrows() != targets.nrows() {
        return Err(Error::validation(format!(
            "batch size mismatch: {} conditions vs {} targets",
            cond.nrows(),
            targets.nrows()
        )));
    }
    if cond.ncols() != flow.dim_cond() || targets.ncols() != flow.dim_shape() {
        return Err(Error::validation(format!(
            "batch dims ({}, {}) do not match flow ({}, {})",
            cond.ncols(),
            targets.ncols(),
            flow.dim_cond(),
            flow.dim_shape()
        )));
    }
    Ok(())
}

/// Loss and gradients for a batch: conditions are `B x C`, encoded targets
/// `B x P`. Reconstruction losses are means over batch and shape
/// dimensions; NLL is the mean over the batch.
pub fn loss_and_grads(
    flow: &CouplingFlow,
    cond: &Array2<f64>,
    targets: &Array2<f64>,
    mode: LossMode,
    eval: MaskEval,
) -> Result<(f64, FlowGrads)> {
    validate_batch(flow, cond, targets)?;
    match mode {
        LossMode::L1 | LossMode::L2 => reconstruction_grads(flow, cond, targets, mode, eval),
        LossMode::Nll => nll_grads(flow, cond, targets, eval),
    }
}

/// Loss value only, same graph as [`loss_and_grads`]. This is what
/// finite-difference oracles evaluate.
pub fn loss_value(
    flow: &CouplingFlow,
    cond: &Array2<f64>,
    targets: &Array2<f64>,
    mode: LossMode,
    eval: MaskEval,
) -> Result<f64> {
    validate_batch(flow, cond, targets)?;
    let b = cond.nrows();
    match mode {
        LossMode::L1 | LossMode::L2 => {
            let mut h = concat_cond(cond, None, flow.dim());
            for (idx, layer) in flow.layers.iter().enumerate().rev() {
                let (mask, _) = resolve_mask(layer, eval)?;
                let u = &h * &mask;
                let s_out = layer.s_net.forward(&u);
                let t_out = layer.t_net.forward(&u);
                let inv_mask = mask.mapv(|m| 1.0 - m);
                h = &u + &(&inv_mask * &((&h - &t_out) * &s_out.mapv(|v| (-v).exp())));
                check_finite(&h, "output", idx)?;
            }
            let pred = h.slice(s![.., flow.dim_cond()..]);
            let res = &pred - targets;
            let n = (b * flow.dim_shape()) as f64;
            let loss = match mode {
                LossMode::L1 => res.mapv(f64::abs).sum() / n,
                _ => res.mapv(|r| r * r).sum() / n,
            };
            Ok(loss)
        }
        LossMode::Nll => {
            let mut h = concat_cond(cond, Some(targets), flow.dim());
            let mut logdet = Array1::<f64>::zeros(b);
            for (idx, layer) in flow.layers.iter().enumerate() {
                let (mask, _) = resolve_mask(layer, eval)?;
                let u = &h * &mask;
                let s_out = layer.s_net.forward(&u);
                let t_out = layer.t_net.forward(&u);
                let inv_mask = mask.mapv(|m| 1.0 - m);
                h = &u + &(&inv_mask * &(&(&h * &s_out.mapv(f64::exp)) + &t_out));
                check_finite(&h, "output", idx)?;
                logdet += &(&s_out * &inv_mask).sum_axis(Axis(1));
            }
            let gauss = h.mapv(|z| -0.5 * z * z - 0.5 * LN_2PI).sum_axis(Axis(1));
            Ok(-(gauss + logdet).sum() / b as f64)
        }
    }
}

fn reconstruction_grads(
    flow: &CouplingFlow,
    cond: &Array2<f64>,
    targets: &Array2<f64>,
    mode: LossMode,
    eval: MaskEval,
) -> Result<(f64, FlowGrads)> {
    let b = cond.nrows();
    let p = flow.dim_shape();

    // inverse chain: layers applied in reverse order, caches in
    // application order
    let mut records: Vec<StageRecord> = Vec::with_capacity(flow.layers.len());
    let mut h = concat_cond(cond, None, flow.dim());
    for (idx, layer) in flow.layers.iter().enumerate().rev() {
        let (mask, dsig) = resolve_mask(layer, eval)?;
        let u = &h * &mask;
        let (s_out, s_cache) = layer.s_net.forward_cached(&u);
        let (t_out, t_cache) = layer.t_net.forward_cached(&u);
        let inv_mask = mask.mapv(|m| 1.0 - m);
        let next = &u + &(&inv_mask * &((&h - &t_out) * &s_out.mapv(|v| (-v).exp())));
        check_finite(&next, "output", idx)?;
        records.push(StageRecord {
            layer_index: idx,
            mask,
            dsig,
            input: h,
            s: s_out,
            t: t_out,
            s_cache,
            t_cache,
        });
        h = next;
    }

    let pred = h.slice(s![.., flow.dim_cond()..]);
    let res = &pred - targets;
    let n = (b * p) as f64;
    let (loss, d_pred) = match mode {
        LossMode::L1 => (res.mapv(f64::abs).sum() / n, res.mapv(|r| sgn(r) / n)),
        _ => (res.mapv(|r| r * r).sum() / n, res.mapv(|r| 2.0 * r / n)),
    };
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite loss".to_string()));
    }

    let mut d_h = Array2::zeros((b, flow.dim()));
    d_h.slice_mut(s![.., flow.dim_cond()..]).assign(&d_pred);

    // walk the chain backwards: the last-applied layer first
    let mut grads: Vec<Option<LayerGrads>> = (0..flow.layers.len()).map(|_| None).collect();
    for rec in records.iter().rev() {
        let layer = &flow.layers[rec.layer_index];
        let inv_mask = rec.mask.mapv(|m| 1.0 - m);
        let eneg = rec.s.mapv(|v| (-v).exp());

        let d_direct = &d_h * &(&rec.mask + &(&inv_mask * &eneg));
        let d_t = -(&d_h) * &inv_mask * &eneg;
        let d_s = &d_t * &(&rec.input - &rec.t);

        let (d_u_s, g_s) = layer.s_net.backward(&rec.s_cache, &d_s);
        let (d_u_t, g_t) = layer.t_net.backward(&rec.t_cache, &d_t);
        let d_u = d_u_s + d_u_t;

        let mask_logits = rec.dsig.as_ref().map(|dsig| {
            // d(output)/d(mask_j), summed over the batch
            let direct = &d_h * &(&rec.input - &((&rec.input - &rec.t) * &eneg));
            let via_u = &d_u * &rec.input;
            let d_mask = (direct + via_u).sum_axis(Axis(0));
            &d_mask * dsig
        });

        d_h = d_direct + &d_u * &rec.mask;
        grads[rec.layer_index] = Some(LayerGrads { s: g_s, t: g_t, mask_logits });
    }

    let layers = grads.into_iter().map(|g| g.expect("every layer visited")).collect();
    Ok((loss, FlowGrads { layers }))
}

fn nll_grads(
    flow: &CouplingFlow,
    cond: &Array2<f64>,
    targets: &Array2<f64>,
    eval: MaskEval,
) -> Result<(f64, FlowGrads)> {
    let b = cond.nrows();
    let b_f = b as f64;

    let mut records: Vec<StageRecord> = Vec::with_capacity(flow.layers.len());
    let mut h = concat_cond(cond, Some(targets), flow.dim());
    let mut logdet = Array1::<f64>::zeros(b);
    for (idx, layer) in flow.layers.iter().enumerate() {
        let (mask, dsig) = resolve_mask(layer, eval)?;
        let u = &h * &mask;
        let (s_out, s_cache) = layer.s_net.forward_cached(&u);
        let (t_out, t_cache) = layer.t_net.forward_cached(&u);
        let inv_mask = mask.mapv(|m| 1.0 - m);
        let next = &u + &(&inv_mask * &(&(&h * &s_out.mapv(f64::exp)) + &t_out));
        check_finite(&next, "output", idx)?;
        logdet += &(&s_out * &inv_mask).sum_axis(Axis(1));
        records.push(StageRecord {
            layer_index: idx,
            mask,
            dsig,
            input: h,
            s: s_out,
            t: t_out,
            s_cache,
            t_cache,
        });
        h = next;
    }

    let gauss = h.mapv(|z| -0.5 * z * z - 0.5 * LN_2PI).sum_axis(Axis(1));
    let loss = -(gauss + &logdet).sum() / b_f;
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite loss".to_string()));
    }

    // dL/dz = z / B ; dL/d(logdet contribution) = -1/B per sample
    let mut d_h = h.mapv(|z| z / b_f);
    let d_ld = -1.0 / b_f;

    let mut grads: Vec<Option<LayerGrads>> = (0..flow.layers.len()).map(|_| None).collect();
    for rec in records.iter().rev() {
        let layer = &flow.layers[rec.layer_index];
        let inv_mask = rec.mask.mapv(|m| 1.0 - m);
        let e = rec.s.mapv(f64::exp);

        let d_direct = &d_h * &(&rec.mask + &(&inv_mask * &e));
        // scale gets a term from the transformed output and one from the
        // log-det sum
        let mut d_s = &d_h * &inv_mask * &rec.input * &e;
        d_s += &(&inv_mask * d_ld);
        let d_t = &d_h * &inv_mask;

        let (d_u_s, g_s) = layer.s_net.backward(&rec.s_cache, &d_s);
        let (d_u_t, g_t) = layer.t_net.backward(&rec.t_cache, &d_t);
        let d_u = d_u_s + d_u_t;

        let mask_logits = rec.dsig.as_ref().map(|dsig| {
            let transformed = &(&rec.input * &e) + &rec.t;
            let direct = &d_h * &(&rec.input - &transformed);
            let via_u = &d_u * &rec.input;
            let mut d_mask = (direct + via_u).sum_axis(Axis(0));
            // log-det term: d(ld_b)/d(mask_j) = -s_bj
            d_mask += &(rec.s.sum_axis(Axis(0)) * (-d_ld));
            &d_mask * dsig
        });

        d_h = d_direct + &d_u * &rec.mask;
        grads[rec.layer_index] = Some(LayerGrads { s: g_s, t: g_t, mask_logits });
    }

    let layers = grads.into_iter().map(|g| g.expect("every layer visited")).collect();
    Ok((loss, FlowGrads { layers }))
}
