use super::OptimConfig;
use crate::error::{Error, Result};
use crate::nn::{Gradients, MultiHeadNetwork};
use crate::tensor::Tensor;

/// One velocity buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Vec<Tensor>,
}

impl OptimizerState {
    pub fn zeros_like(params: &[&Tensor]) -> Self {
        Self {
            velocity: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn for_network(net: &MultiHeadNetwork) -> Self {
        Self::zeros_like(&net.params())
    }
}

/// Nesterov SGD with L2 weight decay:
///
/// ```text
/// g' = g + wd * p        (only where decay[i])
/// v  = momentum * v - lr * g'
/// p  = p + momentum * v - lr * g'
/// ```
pub fn sgd_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    decay: &[bool],
    state: &mut OptimizerState,
    lr: f64,
    cfg: &OptimConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != decay.len() || params.len() != state.velocity.len() {
        return Err(Error::Shape(format!(
            "sgd_step: {} params, {} grads, {} decay flags, {} velocities",
            params.len(),
            grads.len(),
            decay.len(),
            state.velocity.len()
        )));
    }
    for (((p, g), &d), v) in params.iter_mut().zip(grads).zip(decay).zip(&mut state.velocity) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::Shape(format!(
                "sgd_step: param {:?}, grad {:?}, velocity {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            )));
        }
        let wd = if d { cfg.weight_decay } else { 0.0 };
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            let eff = gv + wd * *pv;
            *vv = cfg.momentum * *vv - lr * eff;
            *pv += cfg.momentum * *vv - lr * eff;
        }
    }
    Ok(())
}

/// [`sgd_step`] over a network's parameters in canonical order.
pub fn step_network(
    net: &mut MultiHeadNetwork,
    grads: &Gradients,
    state: &mut OptimizerState,
    lr: f64,
    cfg: &OptimConfig,
) -> Result<()> {
    let decay: Vec<bool> = net.param_info().iter().map(|p| p.decay).collect();
    let mut params = net.params_mut();
    sgd_step(&mut params, &grads.tensors, &decay, state, lr, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(vec![v])
    }

    fn cfg(momentum: f64, weight_decay: f64) -> OptimConfig {
        OptimConfig {
            momentum,
            weight_decay,
            ..OptimConfig::default()
        }
    }

    fn run(p0: f64, grads: &[f64], lr: f64, c: &OptimConfig) -> Vec<(f64, f64)> {
        let mut p = scalar(p0);
        let mut st = OptimizerState::zeros_like(&[&p]);
        grads
            .iter()
            .map(|&g| {
                sgd_step(&mut [&mut p], &[scalar(g)], &[true], &mut st, lr, c).unwrap();
                (p.data()[0], st.velocity[0].data()[0])
            })
            .collect()
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        assert_eq!(run(0.7, &[0.0, 0.0], 0.1, &cfg(0.9, 0.0)), vec![(0.7, 0.0), (0.7, 0.0)]);
    }

    #[test]
    fn plain_gradient_descent_without_momentum() {
        let out = run(1.0, &[1.0], 0.1, &cfg(0.0, 0.0));
        assert!((out[0].0 - 0.9).abs() < 1e-15);
    }

    #[test]
    fn nesterov_two_steps_match_hand_recursion() {
        // Independent recursion of the update rule with momentum 0.9, lr 0.1, grad 1:
        // v1 = -0.1,                p1 = 0 + 0.9*v1 - 0.1      = -0.19
        // v2 = 0.9*v1 - 0.1 = -0.19, p2 = p1 + 0.9*v2 - 0.1    = -0.461
        let out = run(0.0, &[1.0, 1.0], 0.1, &cfg(0.9, 0.0));
        assert!((out[0].1 + 0.1).abs() < 1e-15);
        assert!((out[0].0 + 0.19).abs() < 1e-15);
        assert!((out[1].1 + 0.19).abs() < 1e-15);
        assert!((out[1].0 + 0.461).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_respects_exemptions() {
        let c = cfg(0.0, 0.5);
        let mut a = scalar(2.0);
        let mut b = scalar(2.0);
        let mut st = OptimizerState::zeros_like(&[&a, &b]);
        sgd_step(&mut [&mut a, &mut b], &[scalar(0.0), scalar(0.0)], &[true, false], &mut st, 0.1, &c).unwrap();
        assert!((a.data()[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
        assert_eq!(b.data()[0], 2.0);
    }
}
