//! Two-layer LSTM with a fully connected head mapping onboard signals to
//! the body-frame relative airflow.
//!
//! Gate rows are stacked `[input, forget, candidate, output]`, each `hidden`
//! rows tall. Every step's hidden state of the top layer is mapped through
//! the head, so a sequence of `T` inputs yields `T` outputs.

mod adam;
mod features;
mod train;

pub use adam::{adam_step, adam_update_slice, AdamConfig, AdamState};
pub use features::{FeatureParts, FeatureVector, SpinDirection, Standardizer, FEATURE_LEN, HEXAROTOR_SPIN};
pub use train::{train, Dataset, EpochLoss, LstmModel, Recording, TrainConfig, TrainOutcome};

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Layer sizes of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub layers: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { input: FEATURE_LEN, hidden: 16, output: 3, layers: 2 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer<T: Scalar> {
    /// `4H × I`
    pub w_input: DMatrix<T>,
    /// `4H × H`
    pub w_hidden: DMatrix<T>,
    /// `4H`
    pub bias: DVector<T>,
}

impl<T: Scalar> LstmLayer<T> {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_input: DMatrix::zeros(4 * hidden, input),
            w_hidden: DMatrix::zeros(4 * hidden, hidden),
            bias: DVector::zeros(4 * hidden),
        }
    }
}

/// All weights and biases of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<T: Scalar> {
    pub arch: Architecture,
    pub layers: Vec<LstmLayer<T>>,
    /// `O × H`
    pub head_weight: DMatrix<T>,
    pub head_bias: DVector<T>,
}

impl<T: Scalar> LstmParams<T> {
    pub fn zeros(arch: Architecture) -> Self {
        let layers = (0..arch.layers)
            .map(|l| LstmLayer::zeros(if l == 0 { arch.input } else { arch.hidden }, arch.hidden))
            .collect();
        Self {
            arch,
            layers,
            head_weight: DMatrix::zeros(arch.output, arch.hidden),
            head_bias: DVector::zeros(arch.output),
        }
    }

    /// Uniform `±1/√fan_in` weights, zero biases except the forget gate at +1.
    pub fn init<R: Rng>(arch: Architecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        let h = arch.hidden;
        let bound = 1.0 / (h as f64).sqrt();
        for (l, layer) in p.layers.iter_mut().enumerate() {
            let fan_in = if l == 0 { arch.input } else { h };
            let b_in = 1.0 / (fan_in as f64).sqrt();
            layer.w_input.iter_mut().for_each(|w| *w = lit(rng.random_range(-b_in..b_in)));
            layer.w_hidden.iter_mut().for_each(|w| *w = lit(rng.random_range(-bound..bound)));
            for k in h..2 * h {
                layer.bias[k] = T::one();
            }
        }
        p.head_weight.iter_mut().for_each(|w| *w = lit(rng.random_range(-bound..bound)));
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.arch)
    }

    /// Parameter tensors in a fixed order.
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(l.w_input.as_slice());
            out.push(l.w_hidden.as_slice());
            out.push(l.bias.as_slice());
        }
        out.push(self.head_weight.as_slice());
        out.push(self.head_bias.as_slice());
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(l.w_input.as_mut_slice());
            out.push(l.w_hidden.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out.push(self.head_weight.as_mut_slice());
        out.push(self.head_bias.as_mut_slice());
        out
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::ShapeMismatch { expected: self.num_params(), found: flat.len() });
        }
        let mut at = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[at..at + s.len()]);
            at += s.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| crate::scalar::to_f64(*v).is_finite()))
    }

    /// `self += other * scale`
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += *y * scale);
        }
    }

    /// Converts every weight to another scalar type.
    pub fn cast<U: Scalar>(&self) -> LstmParams<U> {
        let conv = |m: &DMatrix<T>| m.map(|v| lit::<U>(crate::scalar::to_f64(v)));
        let convv = |m: &DVector<T>| m.map(|v| lit::<U>(crate::scalar::to_f64(v)));
        LstmParams {
            arch: self.arch,
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayer { w_input: conv(&l.w_input), w_hidden: conv(&l.w_hidden), bias: convv(&l.bias) })
                .collect(),
            head_weight: conv(&self.head_weight),
            head_bias: convv(&self.head_bias),
        }
    }
}

/// Hidden and cell state of every layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T: Scalar> {
    pub hidden: Vec<DVector<T>>,
    pub cell: Vec<DVector<T>>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(arch: &Architecture) -> Self {
        Self {
            hidden: vec![DVector::zeros(arch.hidden); arch.layers],
            cell: vec![DVector::zeros(arch.hidden); arch.layers],
        }
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Activations of one layer at one step, kept for backpropagation.
#[derive(Clone, Debug)]
struct StepCache<T: Scalar> {
    input: DVector<T>,
    h_prev: DVector<T>,
    c_prev: DVector<T>,
    /// activated gates `[i, f, g, o]`
    gates: DVector<T>,
    tanh_c: DVector<T>,
}

/// Result of a forward pass over a sequence.
#[derive(Clone, Debug)]
pub struct ForwardPass<T: Scalar> {
    pub outputs: Vec<DVector<T>>,
    pub state: LstmState<T>,
    /// `cache[t][layer]`
    cache: Vec<Vec<StepCache<T>>>,
}

fn cell_step<T: Scalar>(layer: &LstmLayer<T>, x: &DVector<T>, h: &DVector<T>, c: &DVector<T>) -> (DVector<T>, DVector<T>, StepCache<T>) {
    let n = h.len();
    let mut gates = &layer.bias + &layer.w_input * x;
    gates.gemv(T::one(), &layer.w_hidden, h, T::one());
    for k in 0..n {
        gates[k] = sigmoid(gates[k]);
        gates[n + k] = sigmoid(gates[n + k]);
        gates[2 * n + k] = gates[2 * n + k].tanh();
        gates[3 * n + k] = sigmoid(gates[3 * n + k]);
    }
    let mut c_new = DVector::zeros(n);
    let mut tanh_c = DVector::zeros(n);
    let mut h_new = DVector::zeros(n);
    for k in 0..n {
        c_new[k] = gates[n + k] * c[k] + gates[k] * gates[2 * n + k];
        tanh_c[k] = c_new[k].tanh();
        h_new[k] = gates[3 * n + k] * tanh_c[k];
    }
    let cache = StepCache { input: x.clone(), h_prev: h.clone(), c_prev: c.clone(), gates, tanh_c };
    (h_new, c_new, cache)
}

/// Runs the network over `seq` from `init` (zeros when `None`).
pub fn lstm_forward<T: Scalar>(params: &LstmParams<T>, seq: &[DVector<T>], init: Option<&LstmState<T>>) -> Result<ForwardPass<T>> {
    if seq.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut state = init.cloned().unwrap_or_else(|| LstmState::zeros(&params.arch));
    let mut outputs = Vec::with_capacity(seq.len());
    let mut cache = Vec::with_capacity(seq.len());
    for x in seq {
        if x.len() != params.arch.input {
            return Err(Error::ShapeMismatch { expected: params.arch.input, found: x.len() });
        }
        if !x.iter().all(|v| crate::scalar::to_f64(*v).is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        let mut layer_in = x.clone();
        let mut step_cache = Vec::with_capacity(params.layers.len());
        for (l, layer) in params.layers.iter().enumerate() {
            let (h, c, sc) = cell_step(layer, &layer_in, &state.hidden[l], &state.cell[l]);
            state.hidden[l] = h.clone();
            state.cell[l] = c;
            step_cache.push(sc);
            layer_in = h;
        }
        outputs.push(&params.head_bias + &params.head_weight * &layer_in);
        cache.push(step_cache);
    }
    Ok(ForwardPass { outputs, state, cache })
}

/// Mean squared error over every component of every step,
/// `(1 / (O·T)) Σₜ ‖yₜ − targetₜ‖²`.
pub fn mse_loss<T: Scalar>(pred: &[DVector<T>], target: &[DVector<T>]) -> T {
    let count = pred.iter().map(|p| p.len()).sum::<usize>().max(1);
    let sum = pred.iter().zip(target).fold(T::zero(), |acc, (p, t)| acc + (p - t).norm_squared());
    sum / lit::<T>(count as f64)
}

/// Loss and its exact gradient by backpropagation through time.
pub fn backward<T: Scalar>(params: &LstmParams<T>, seq: &[DVector<T>], targets: &[DVector<T>]) -> Result<(T, LstmParams<T>)> {
    if seq.len() != targets.len() {
        return Err(Error::ShapeMismatch { expected: seq.len(), found: targets.len() });
    }
    let pass = lstm_forward(params, seq, None)?;
    let loss = mse_loss(&pass.outputs, targets);
    let mut grads = params.zeros_like();
    accumulate_gradients(params, &pass, targets, T::one(), &mut grads);
    Ok((loss, grads))
}

/// Adds `scale · ∂loss/∂params` of one forward pass into `grads`.
pub(crate) fn accumulate_gradients<T: Scalar>(params: &LstmParams<T>, pass: &ForwardPass<T>, targets: &[DVector<T>], scale: T, grads: &mut LstmParams<T>) {
    let arch = params.arch;
    let n = arch.hidden;
    let steps = pass.outputs.len();
    let norm = lit::<T>(2.0) / lit::<T>((arch.output * steps) as f64) * scale;
    let top = params.layers.len() - 1;

    let mut dh_next = vec![DVector::<T>::zeros(n); params.layers.len()];
    let mut dc_next = vec![DVector::<T>::zeros(n); params.layers.len()];

    for t in (0..steps).rev() {
        let dy = (&pass.outputs[t] - &targets[t]) * norm;
        let h_top = {
            let c = &pass.cache[t][top];
            c.gates.rows(3 * n, n).component_mul(&c.tanh_c)
        };
        grads.head_weight.ger(T::one(), &dy, &h_top, T::one());
        grads.head_bias += &dy;
        let mut dh_from_above = params.head_weight.tr_mul(&dy);

        for l in (0..params.layers.len()).rev() {
            let c = &pass.cache[t][l];
            let layer = &params.layers[l];
            let dh = &dh_from_above + &dh_next[l];
            let mut da = DVector::<T>::zeros(4 * n);
            let mut dc_prev = DVector::<T>::zeros(n);
            for k in 0..n {
                let i = c.gates[k];
                let f = c.gates[n + k];
                let g = c.gates[2 * n + k];
                let o = c.gates[3 * n + k];
                let tc = c.tanh_c[k];
                let d_o = dh[k] * tc;
                let dc = dh[k] * o * (T::one() - tc * tc) + dc_next[l][k];
                da[k] = dc * g * i * (T::one() - i);
                da[n + k] = dc * c.c_prev[k] * f * (T::one() - f);
                da[2 * n + k] = dc * i * (T::one() - g * g);
                da[3 * n + k] = d_o * o * (T::one() - o);
                dc_prev[k] = dc * f;
            }
            let gl = &mut grads.layers[l];
            gl.w_input.ger(T::one(), &da, &c.input, T::one());
            gl.w_hidden.ger(T::one(), &da, &c.h_prev, T::one());
            gl.bias += &da;
            dh_next[l] = layer.w_hidden.tr_mul(&da);
            dc_next[l] = dc_prev;
            dh_from_above = layer.w_input.tr_mul(&da);
        }
    }
}

/// Output of the last step for one window, starting from zero state.
pub fn predict_last<T: Scalar>(params: &LstmParams<T>, seq: &[DVector<T>]) -> Result<Vector3<T>> {
    let pass = lstm_forward(params, seq, None)?;
    let y = pass.outputs.last().expect("non-empty sequence");
    Ok(Vector3::new(y[0], y[1], y[2]))
}

/// Central finite-difference gradient of [`mse_loss`], one parameter at a time.
pub fn numerical_gradient<T: Scalar>(params: &LstmParams<T>, seq: &[DVector<T>], targets: &[DVector<T>], h: T) -> Result<Vec<T>> {
    let base = params.to_flat();
    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        flat[k] = base[k] + h;
        probe.set_flat(&flat)?;
        let lp = mse_loss(&lstm_forward(&probe, seq, None)?.outputs, targets);
        flat[k] = base[k] - h;
        probe.set_flat(&flat)?;
        let lm = mse_loss(&lstm_forward(&probe, seq, None)?.outputs, targets);
        flat[k] = base[k];
        out.push((lp - lm) / (h + h));
    }
    Ok(out)
}

/// Gradient entries smaller than this are compared on an absolute scale.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// Worst `|a − n| / max(|a|, |n|, GRADIENT_FLOOR)` over all entries.
pub fn gradient_relative_error<T: Scalar>(analytic: &[T], numeric: &[T]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let (a, n) = (crate::scalar::to_f64(*a), crate::scalar::to_f64(*n));
            (a - n).abs() / a.abs().max(n.abs()).max(GRADIENT_FLOOR)
        })
        .fold(0.0, f64::max)
}
