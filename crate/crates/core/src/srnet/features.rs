//! Input featurization: gains go in as standardized dB values, SINR targets
//! as raw linear values, giving `K*K + K` features per sample.
//!
//! Raw normalized gains span many orders of magnitude; the dB transform and
//! per-feature standardization (statistics frozen from the training set)
//! keep the first affine layer in a sane operating range.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scenario::ChannelRealization;

/// Per-feature mean and standard deviation of the dB-scale gains, estimated
/// once from a training set and stored with the model.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

/// Floor applied to estimated standard deviations to avoid division blowup
/// on (near-)constant features.
pub const STD_FLOOR: f64 = 1e-8;

pub fn gains_db(ch: &ChannelRealization) -> DVector<f64> {
    let k = ch.k();
    DVector::from_fn(k * k, |idx, _| {
        let (i, j) = (idx / k, idx % k);
        10.0 * ch.gains[(i, j)].log10()
    })
}

impl FeatureStats {
    /// Estimate from a training set (population standard deviation).
    pub fn fit(samples: &[ChannelRealization]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot fit stats on an empty set".into()))?;
        let n = first.k() * first.k();
        let m = samples.len() as f64;
        let mut mean = DVector::zeros(n);
        for ch in samples {
            mean += gains_db(ch);
        }
        mean /= m;
        let mut var = DVector::zeros(n);
        for ch in samples {
            let d = gains_db(ch) - &mean;
            var += d.component_mul(&d);
        }
        var /= m;
        let std = var.map(|v: f64| v.sqrt().max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn feature_dim(&self) -> usize {
        let n = self.mean.len();
        let k = (n as f64).sqrt().round() as usize;
        n + k
    }

    /// Features for one sample: standardized dB gains, then raw targets.
    pub fn featurize(&self, ch: &ChannelRealization) -> DVector<f64> {
        let k = ch.k();
        let g = gains_db(ch);
        let mut out = DVector::zeros(k * k + k);
        for i in 0..k * k {
            out[i] = (g[i] - self.mean[i]) / self.std[i];
        }
        for i in 0..k {
            out[k * k + i] = ch.gamma_min[i];
        }
        out
    }

    /// Column-per-sample feature matrix for a batch.
    pub fn featurize_batch(&self, chs: &[&ChannelRealization]) -> DMatrix<f64> {
        let dim = self.feature_dim();
        let mut m = DMatrix::zeros(dim, chs.len());
        for (c, ch) in chs.iter().enumerate() {
            m.set_column(c, &self.featurize(ch));
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ch(gains: &[f64], k: usize, gm: f64) -> ChannelRealization {
        ChannelRealization::new(
            DMatrix::from_row_slice(k, k, gains),
            DVector::from_element(k, gm),
            1.0,
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn db_transform_is_row_major() {
        let c = ch(&[1.0, 10.0, 100.0, 1000.0], 2, 0.5);
        let g = gains_db(&c);
        assert_relative_eq!(g[0], 0.0);
        assert_relative_eq!(g[1], 10.0); // (0,1) before (1,0)
        assert_relative_eq!(g[2], 20.0);
        assert_relative_eq!(g[3], 30.0);
    }

    #[test]
    fn standardization_centers_the_training_set() {
        let samples = vec![
            ch(&[1.0, 1.0, 1.0, 1.0], 2, 0.5),
            ch(&[100.0, 100.0, 100.0, 100.0], 2, 0.5),
        ];
        let stats = FeatureStats::fit(&samples).unwrap();
        // dB values 0 and 20: mean 10, std 10.
        assert_relative_eq!(stats.mean[0], 10.0, max_relative = 1e-12);
        assert_relative_eq!(stats.std[0], 10.0, max_relative = 1e-12);
        let f = stats.featurize(&samples[0]);
        assert_relative_eq!(f[0], -1.0, max_relative = 1e-12);
        // Targets pass through raw.
        assert_relative_eq!(f[4], 0.5);
        assert_relative_eq!(f[5], 0.5);
        assert_eq!(f.len(), 6);
    }

    #[test]
    fn constant_features_hit_the_std_floor() {
        let samples = vec![ch(&[1.0, 1.0, 1.0, 1.0], 2, 0.5); 3];
        let stats = FeatureStats::fit(&samples).unwrap();
        assert_relative_eq!(stats.std[0], STD_FLOOR);
        let f = stats.featurize(&samples[0]);
        assert_relative_eq!(f[0], 0.0); // 0/floor
    }

    #[test]
    fn batch_featurization_matches_single() {
        let a = ch(&[1.0, 2.0, 3.0, 4.0], 2, 0.3);
        let b = ch(&[4.0, 3.0, 2.0, 1.0], 2, 0.7);
        let stats = FeatureStats::fit(&[a.clone(), b.clone()]).unwrap();
        let m = stats.featurize_batch(&[&a, &b]);
        assert_eq!(m.ncols(), 2);
        assert_eq!(DVector::from(m.column(0)), stats.featurize(&a));
        assert_eq!(DVector::from(m.column(1)), stats.featurize(&b));
    }

    #[test]
    fn empty_fit_is_rejected() {
        assert!(FeatureStats::fit(&[]).is_err());
    }
}
