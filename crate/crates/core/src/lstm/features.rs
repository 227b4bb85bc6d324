//! Network input layout.
//!
//! | index  | content                                          |
//! |--------|--------------------------------------------------|
//! | 0..8   | `θx₁, θy₁, …, θx₄, θy₄`, rad                     |
//! | 8..11  | body rate, rad/s                                 |
//! | 11..14 | raw accelerometer (specific force), m/s²         |
//! | 14..20 | normalized throttles, negated for CCW rotors     |
//!
//! Every entry is a body-frame or sensor-frame quantity.

use nalgebra::{DVector, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};
use crate::sensor::DeflectionAngles;

pub const FEATURE_LEN: usize = 20;
pub const SENSOR_COUNT: usize = 4;
pub const ROTOR_COUNT: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpinDirection {
    Clockwise,
    CounterClockwise,
}

/// Alternating rotor spin of the hexarotor, rotor 0 clockwise.
pub const HEXAROTOR_SPIN: [SpinDirection; ROTOR_COUNT] = [
    SpinDirection::Clockwise,
    SpinDirection::CounterClockwise,
    SpinDirection::Clockwise,
    SpinDirection::CounterClockwise,
    SpinDirection::Clockwise,
    SpinDirection::CounterClockwise,
];

impl SpinDirection {
    fn sign<T: Scalar>(self) -> T {
        match self {
            SpinDirection::Clockwise => T::one(),
            SpinDirection::CounterClockwise => -T::one(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector<T: Scalar>(pub [T; FEATURE_LEN]);

/// Decoded view of a [`FeatureVector`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureParts<T: Scalar> {
    pub angles: [DeflectionAngles<T>; SENSOR_COUNT],
    pub omega: Vector3<T>,
    pub accel: Vector3<T>,
    /// Unsigned throttles in `[0, 1]`.
    pub throttles: [T; ROTOR_COUNT],
}

impl<T: Scalar> FeatureVector<T> {
    pub fn build(
        angles: &[DeflectionAngles<T>],
        omega: &Vector3<T>,
        accel: &Vector3<T>,
        throttles: &[T],
        spin: &[SpinDirection],
    ) -> Result<Self> {
        if angles.len() != SENSOR_COUNT {
            return Err(Error::ShapeMismatch { expected: SENSOR_COUNT, found: angles.len() });
        }
        if throttles.len() != ROTOR_COUNT || spin.len() != ROTOR_COUNT {
            return Err(Error::ShapeMismatch { expected: ROTOR_COUNT, found: throttles.len().min(spin.len()) });
        }
        let mut f = [T::zero(); FEATURE_LEN];
        for (i, a) in angles.iter().enumerate() {
            f[2 * i] = a.theta_x;
            f[2 * i + 1] = a.theta_y;
        }
        for k in 0..3 {
            f[8 + k] = omega[k];
            f[11 + k] = accel[k];
        }
        for (j, (&u, s)) in throttles.iter().zip(spin).enumerate() {
            if u < T::zero() || u > T::one() {
                return Err(Error::InvalidParameter(format!("throttle {j} outside [0, 1]")));
            }
            f[14 + j] = u * s.sign::<T>();
        }
        Ok(Self(f))
    }

    pub fn decode(&self, spin: &[SpinDirection; ROTOR_COUNT]) -> FeatureParts<T> {
        let f = &self.0;
        let angles = std::array::from_fn(|i| DeflectionAngles::new(f[2 * i], f[2 * i + 1]));
        let throttles = std::array::from_fn(|j| f[14 + j] * spin[j].sign::<T>());
        FeatureParts {
            angles,
            omega: Vector3::new(f[8], f[9], f[10]),
            accel: Vector3::new(f[11], f[12], f[13]),
            throttles,
        }
    }

    pub fn to_dvector(&self) -> DVector<T> {
        DVector::from_column_slice(&self.0)
    }
}

/// Per-feature affine normalization fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer<T: Scalar> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn identity(len: usize) -> Self {
        Self { mean: vec![T::zero(); len], scale: vec![T::one(); len] }
    }

    /// Mean and standard deviation per component; near-constant components
    /// keep unit scale.
    pub fn fit<'a, I>(rows: I) -> Self
    where
        I: IntoIterator<Item = &'a FeatureVector<T>>,
        T: 'a,
    {
        let rows: Vec<&FeatureVector<T>> = rows.into_iter().collect();
        if rows.is_empty() {
            return Self::identity(FEATURE_LEN);
        }
        let n: T = lit(rows.len() as f64);
        let mut mean = vec![T::zero(); FEATURE_LEN];
        for r in &rows {
            for (m, x) in mean.iter_mut().zip(&r.0) {
                *m += *x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); FEATURE_LEN];
        for r in &rows {
            for k in 0..FEATURE_LEN {
                let d = r.0[k] - mean[k];
                var[k] += d * d;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > lit(1e-6) { s } else { T::one() }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, f: &FeatureVector<T>) -> DVector<T> {
        DVector::from_fn(FEATURE_LEN, |k, _| (f.0[k] - self.mean[k]) / self.scale[k])
    }
}
