//! Central-difference verification of backprop gradients.

use crate::error::{CoreError, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::ParamStore;

/// Compares the backprop gradient of a scalar objective against central
/// finite differences, entry by entry, and returns the maximum relative
/// error `|g - d| / max(|g|, |d|, 1e-8)`.
///
/// `build` must deterministically construct the objective from the given
/// parameters; it is re-invoked for every perturbed evaluation. A builder
/// that produces a different value on an identical re-run is rejected.
pub fn finite_diff_check<F>(params: &ParamStore, build: F, h: f64) -> Result<f64>
where
    F: Fn(&ParamStore, &mut Graph) -> Result<NodeId>,
{
    if h <= 0.0 {
        return Err(CoreError::Contract("finite difference step must be positive".into()));
    }
    let eval = |p: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let loss = build(p, &mut g)?;
        let v = g.value(loss);
        if !v.is_scalar() {
            return Err(CoreError::Contract(alloc::format!(
                "objective must be scalar, got shape {:?}",
                v.shape()
            )));
        }
        Ok(v.scalar_value())
    };

    let mut graph = Graph::new();
    let loss = build(params, &mut graph)?;
    let base = graph.value(loss).scalar_value();
    let grads = graph.backprop(loss)?;

    let replay = eval(params)?;
    if base.to_bits() != replay.to_bits() {
        return Err(CoreError::Contract(alloc::format!(
            "objective is not deterministic: {base} vs {replay} on identical inputs"
        )));
    }

    let mut work = params.clone();
    let mut max_rel: f64 = 0.0;
    for name in params.names() {
        let numel = params.expect(name).numel();
        for idx in 0..numel {
            let orig = work.expect(name).data()[idx];
            work.get_mut(name).expect("cloned store").data_mut()[idx] = orig + h;
            let plus = eval(&work)?;
            work.get_mut(name).expect("cloned store").data_mut()[idx] = orig - h;
            let minus = eval(&work)?;
            work.get_mut(name).expect("cloned store").data_mut()[idx] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grads
                .get(name)
                .map(|t| t.data()[idx])
                .unwrap_or(0.0);
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / denom;
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
