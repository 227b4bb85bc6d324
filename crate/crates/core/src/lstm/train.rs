//! Mini-batch Adam training on non-overlapping windows.

use nalgebra::{DVector, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::features::{FeatureVector, Standardizer};
use super::{accumulate_gradients, lstm_forward, mse_loss, Architecture, LstmParams};
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig<T: Scalar> {
    pub epochs: usize,
    pub seq_len: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub adam: AdamConfig<T>,
    pub arch: Architecture,
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            epochs: 400,
            seq_len: 5,
            batch_size: 8,
            validation_fraction: 0.2,
            adam: AdamConfig::default(),
            arch: Architecture::default(),
            seed: 0,
        }
    }
}

/// One contiguous flight at the network rate: features and the body-frame
/// relative airflow each row should predict.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Recording<T: Scalar> {
    pub features: Vec<FeatureVector<T>>,
    pub labels: Vec<Vector3<T>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset<T: Scalar> {
    pub recordings: Vec<Recording<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.recordings.iter().map(|r| r.features.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Mean per-window loss of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: Option<f64>,
}

/// Trained weights together with the input normalization they expect.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmModel<T: Scalar> {
    pub params: LstmParams<T>,
    pub standardizer: Standardizer<T>,
    pub seq_len: usize,
}

impl<T: Scalar> LstmModel<T> {
    /// Last-step output over `window`, run from zero state.
    pub fn predict_window(&self, window: &[FeatureVector<T>]) -> Result<Vector3<T>> {
        let seq: Vec<DVector<T>> = window.iter().map(|f| self.standardizer.apply(f)).collect();
        super::predict_last(&self.params, &seq)
    }

    /// Causal prediction at every row using the trailing `seq_len` rows
    /// (fewer at the start of the stream).
    pub fn predict_stream(&self, features: &[FeatureVector<T>]) -> Result<Vec<Vector3<T>>> {
        let seq: Vec<DVector<T>> = features.iter().map(|f| self.standardizer.apply(f)).collect();
        (0..seq.len())
            .map(|k| {
                let start = (k + 1).saturating_sub(self.seq_len);
                super::predict_last(&self.params, &seq[start..=k])
            })
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> LstmModel<U> {
        let conv = |v: &[T]| v.iter().map(|x| lit::<U>(to_f64(*x))).collect();
        LstmModel {
            params: self.params.cast(),
            standardizer: Standardizer { mean: conv(&self.standardizer.mean), scale: conv(&self.standardizer.scale) },
            seq_len: self.seq_len,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Scalar> {
    pub model: LstmModel<T>,
    pub loss_curve: Vec<EpochLoss>,
}

struct Window<T: Scalar> {
    inputs: Vec<DVector<T>>,
    targets: Vec<DVector<T>>,
}

/// `(recording, first row)` of each training window.
type WindowSlots = Vec<(usize, usize)>;

/// Splits every recording into non-overlapping windows; the trailing
/// `validation_fraction` of each recording's windows is held out.
fn split_windows<T: Scalar>(dataset: &Dataset<T>, config: &TrainConfig<T>) -> Result<(WindowSlots, WindowSlots)> {
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for (r, rec) in dataset.recordings.iter().enumerate() {
        if rec.features.len() != rec.labels.len() {
            return Err(Error::ShapeMismatch { expected: rec.features.len(), found: rec.labels.len() });
        }
        let count = rec.features.len() / config.seq_len;
        let held = ((count as f64) * config.validation_fraction).round() as usize;
        let held = held.min(count.saturating_sub(1));
        for w in 0..count {
            let slot = (r, w * config.seq_len);
            if w < count - held {
                train.push(slot);
            } else {
                valid.push(slot);
            }
        }
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((train, valid))
}

fn mean_loss<T: Scalar>(params: &LstmParams<T>, windows: &[Window<T>]) -> Result<f64> {
    let mut total = 0.0;
    for w in windows {
        let pass = lstm_forward(params, &w.inputs, None)?;
        total += to_f64(mse_loss(&pass.outputs, &w.targets));
    }
    Ok(total / windows.len().max(1) as f64)
}

/// Trains a fresh network; fully determined by `dataset` and `config`.
pub fn train<T: Scalar>(dataset: &Dataset<T>, config: &TrainConfig<T>) -> Result<TrainOutcome<T>> {
    if config.seq_len == 0 || config.batch_size == 0 {
        return Err(Error::InvalidParameter("sequence length and batch size must be positive".into()));
    }
    if !(0.0..1.0).contains(&config.validation_fraction) {
        return Err(Error::InvalidParameter("validation fraction must lie in [0, 1)".into()));
    }
    if config.arch.input != super::FEATURE_LEN {
        return Err(Error::ShapeMismatch { expected: super::FEATURE_LEN, found: config.arch.input });
    }
    let (train_slots, valid_slots) = split_windows(dataset, config)?;

    let standardizer = Standardizer::fit(
        train_slots
            .iter()
            .flat_map(|&(r, s)| dataset.recordings[r].features[s..s + config.seq_len].iter()),
    );
    let build = |slots: &[(usize, usize)]| -> Vec<Window<T>> {
        slots
            .iter()
            .map(|&(r, s)| {
                let rec = &dataset.recordings[r];
                let range = s..s + config.seq_len;
                Window {
                    inputs: rec.features[range.clone()].iter().map(|f| standardizer.apply(f)).collect(),
                    targets: rec.labels[range].iter().map(|l| DVector::from_column_slice(l.as_slice())).collect(),
                }
            })
            .collect()
    };
    let train_windows = build(&train_slots);
    let valid_windows = build(&valid_slots);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = LstmParams::init(config.arch, &mut rng);
    let mut adam = AdamState::new(&params);
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut grads = params.zeros_like();
    let mut loss_curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.slices_mut().into_iter().for_each(|s| s.iter_mut().for_each(|g| *g = T::zero()));
            let scale = T::one() / lit::<T>(batch.len() as f64);
            for &i in batch {
                let w = &train_windows[i];
                let pass = lstm_forward(&params, &w.inputs, None)?;
                epoch_loss += to_f64(mse_loss(&pass.outputs, &w.targets));
                accumulate_gradients(&params, &pass, &w.targets, scale, &mut grads);
            }
            adam_step(&mut params, &grads, &mut adam, &config.adam);
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("network weights"));
        }
        let validation = if valid_windows.is_empty() { None } else { Some(mean_loss(&params, &valid_windows)?) };
        loss_curve.push(EpochLoss { epoch, train: epoch_loss / train_windows.len() as f64, validation });
    }

    Ok(TrainOutcome { model: LstmModel { params, standardizer, seq_len: config.seq_len }, loss_curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::DeflectionAngles;
    use nalgebra::Vector3;
    use rand::Rng;

    /// Hovering-like rows whose angles encode a constant airflow
    /// through a fixed linear map, with a little sensor noise.
    fn constant_velocity_recording(v: Vector3<f64>, rows: usize, rng: &mut ChaCha8Rng) -> Recording<f64> {
        let mut features = Vec::with_capacity(rows);
        for _ in 0..rows {
            let mut angles = [DeflectionAngles::zero(); 4];
            for (i, a) in angles.iter_mut().enumerate() {
                let c = 0.01 * (1.0 + 0.1 * i as f64);
                let s = v.norm();
                *a = DeflectionAngles::new(-c * s * v.y + rng.random_range(-1e-3..1e-3), c * s * v.x + rng.random_range(-1e-3..1e-3));
            }
            let thr = [0.55; 6];
            let accel = Vector3::new(0.0, 0.0, 9.81) + Vector3::from_fn(|_, _| rng.random_range(-0.05..0.05));
            features.push(FeatureVector::build(&angles, &Vector3::zeros(), &accel, &thr, &super::super::HEXAROTOR_SPIN).unwrap());
        }
        Recording { features, labels: vec![v; rows] }
    }

    fn small_dataset(seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let speeds = [
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(-2.0, 0.5, 0.0),
            Vector3::new(0.0, 1.5, 0.0),
            Vector3::new(2.5, -1.0, 0.0),
            Vector3::new(-0.5, -2.0, 0.0),
        ];
        Dataset { recordings: speeds.iter().map(|v| constant_velocity_recording(*v, 100, &mut rng)).collect() }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let r = train::<f64>(&Dataset::default(), &TrainConfig::default());
        assert!(matches!(r, Err(Error::EmptyDataset)));
        let short = Dataset { recordings: vec![Recording { features: vec![FeatureVector([0.0; 20]); 3], labels: vec![Vector3::zeros(); 3] }] };
        assert!(matches!(train(&short, &TrainConfig::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn label_count_must_match() {
        let bad = Dataset { recordings: vec![Recording { features: vec![FeatureVector([0.0; 20]); 10], labels: vec![Vector3::zeros(); 9] }] };
        assert!(matches!(train(&bad, &TrainConfig::default()), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn constant_velocity_is_learned() {
        let data = small_dataset(3);
        let cfg = TrainConfig { epochs: 300, adam: AdamConfig { learning_rate: 5e-3, ..AdamConfig::default() }, seed: 11, ..TrainConfig::default() };
        let out = train(&data, &cfg).unwrap();
        let mut sq = 0.0;
        let mut n = 0;
        for rec in &data.recordings {
            // held-out tail of each recording
            let tail = rec.features.len() * 4 / 5;
            let pred = out.model.predict_stream(&rec.features).unwrap();
            for k in tail..rec.features.len() {
                sq += (pred[k] - rec.labels[k]).norm_squared();
                n += 3;
            }
        }
        let rms = (sq / n as f64).sqrt();
        assert!(rms < 0.1, "validation rms {rms}");
        let last = out.loss_curve.last().unwrap();
        assert!(last.validation.unwrap() < 0.01);
    }

    #[test]
    fn loss_curve_is_non_increasing_with_slack() {
        let data = small_dataset(5);
        let cfg = TrainConfig { epochs: 60, adam: AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() }, seed: 2, ..TrainConfig::default() };
        let out = train(&data, &cfg).unwrap();
        for w in out.loss_curve.windows(2) {
            assert!(w[1].train <= w[0].train * 1.05, "{:?} -> {:?}", w[0], w[1]);
        }
        assert!(out.loss_curve.last().unwrap().train < out.loss_curve[0].train);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let data = small_dataset(1);
        let cfg = TrainConfig { epochs: 5, seed: 42, ..TrainConfig::default() };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.loss_curve, b.loss_curve);
        let c = train(&data, &TrainConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.model.params, c.model.params);
    }

    #[test]
    fn stream_matches_window_prediction() {
        let data = small_dataset(9);
        let out = train(&data, &TrainConfig { epochs: 1, ..TrainConfig::default() }).unwrap();
        let f = &data.recordings[0].features;
        let stream = out.model.predict_stream(&f[..12]).unwrap();
        assert_eq!(stream[11], out.model.predict_window(&f[7..12]).unwrap());
        assert_eq!(stream[2], out.model.predict_window(&f[0..3]).unwrap());
    }
}
