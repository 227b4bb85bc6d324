use crate::scalar::{lit, Scalar};

use super::LstmParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig<T: Scalar> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        Self { learning_rate: lit(1e-4), beta1: lit(0.9), beta2: lit(0.999), epsilon: lit(1e-8) }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub m: LstmParams<T>,
    pub v: LstmParams<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &LstmParams<T>) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }
}

/// Bias-corrected Adam on flat buffers; `t` is the 1-based step index.
pub fn adam_update_slice<T: Scalar>(params: &mut [T], grads: &[T], m: &mut [T], v: &mut [T], t: u64, cfg: &AdamConfig<T>) {
    assert!(t >= 1, "adam steps are 1-based");
    let one = T::one();
    let c1 = one - cfg.beta1.powi(t as i32);
    let c2 = one - cfg.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (one - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (one - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// One Adam step over every tensor of the network.
pub fn adam_step<T: Scalar>(params: &mut LstmParams<T>, grads: &LstmParams<T>, state: &mut AdamState<T>, cfg: &AdamConfig<T>) {
    state.step += 1;
    let t = state.step;
    let AdamState { m, v, .. } = state;
    for (((p, g), m), v) in params.slices_mut().into_iter().zip(grads.slices()).zip(m.slices_mut()).zip(v.slices_mut()) {
        adam_update_slice(p, g, m, v, t, cfg);
    }
}
