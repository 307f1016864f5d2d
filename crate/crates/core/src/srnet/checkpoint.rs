//! Versioned JSON checkpoints for trained models. JSON prints `f64` with
//! shortest-round-trip formatting, so save → load reproduces weights bit for
//! bit.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::srnet::features::FeatureStats;
use crate::srnet::model::{BatchNorm, HiddenLayer, Mlp, BN_EPS, BN_MOMENTUM};
use crate::srnet::{PowerControlNet, Variant};

pub const CHECKPOINT_FORMAT: &str = "power-control-net";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct MatData {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    data: Vec<f64>,
}

impl MatData {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    fn to_matrix(&self, what: &str) -> Result<DMatrix<f64>> {
        if self.rows == 0 || self.cols == 0 || self.data.len() != self.rows * self.cols {
            return Err(Error::Checkpoint(format!(
                "{what}: {}x{} with {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerData {
    w: MatData,
    b: Vec<f64>,
    gamma: Vec<f64>,
    beta: Vec<f64>,
    run_mean: Vec<f64>,
    run_var: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    variant: String,
    k: usize,
    penalty_weight: Option<f64>,
    feature_mean: Vec<f64>,
    feature_std: Vec<f64>,
    bn_momentum: f64,
    bn_eps: f64,
    layers: Vec<LayerData>,
    out_w: MatData,
    out_b: Vec<f64>,
}

pub fn to_json(net: &PowerControlNet) -> Result<String> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        variant: net.variant.tag().into(),
        k: net.k,
        penalty_weight: net.penalty_weight,
        feature_mean: net.stats.mean.iter().copied().collect(),
        feature_std: net.stats.std.iter().copied().collect(),
        bn_momentum: net.mlp.bn_momentum,
        bn_eps: net.mlp.bn_eps,
        layers: net
            .mlp
            .hidden
            .iter()
            .map(|l| LayerData {
                w: MatData::from(&l.w),
                b: l.b.iter().copied().collect(),
                gamma: l.bn.gamma.iter().copied().collect(),
                beta: l.bn.beta.iter().copied().collect(),
                run_mean: l.bn.run_mean.iter().copied().collect(),
                run_var: l.bn.run_var.iter().copied().collect(),
            })
            .collect(),
        out_w: MatData::from(&net.mlp.out_w),
        out_b: net.mlp.out_b.iter().copied().collect(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn from_json(text: &str) -> Result<PowerControlNet> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "unexpected format {:?} (want {CHECKPOINT_FORMAT:?})",
            file.format
        )));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {} (this build reads {CHECKPOINT_VERSION})",
            file.version
        )));
    }
    let variant = Variant::from_tag(&file.variant)?;
    let k = file.k;
    if k == 0 {
        return Err(Error::Checkpoint("k must be positive".into()));
    }
    // Standardization statistics cover the k*k gain features; the k SINR
    // targets pass through raw, giving k*k + k network inputs.
    let feat_dim = k * k + k;
    if file.feature_mean.len() != k * k || file.feature_std.len() != k * k {
        return Err(Error::Checkpoint(format!(
            "feature stats have {} / {} entries, expected {}",
            file.feature_mean.len(),
            file.feature_std.len(),
            k * k
        )));
    }
    if file.feature_std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Checkpoint("feature stds must be positive".into()));
    }
    if file.layers.is_empty() {
        return Err(Error::Checkpoint("at least one hidden layer required".into()));
    }

    let mut hidden = Vec::with_capacity(file.layers.len());
    let mut in_dim = feat_dim;
    for (li, l) in file.layers.iter().enumerate() {
        let w = l.w.to_matrix(&format!("layer {li} weight"))?;
        let width = w.nrows();
        if w.ncols() != in_dim {
            return Err(Error::Checkpoint(format!(
                "layer {li} weight has {} inputs, expected {in_dim}",
                w.ncols()
            )));
        }
        for (name, v) in [
            ("b", &l.b),
            ("gamma", &l.gamma),
            ("beta", &l.beta),
            ("run_mean", &l.run_mean),
            ("run_var", &l.run_var),
        ] {
            if v.len() != width {
                return Err(Error::Checkpoint(format!(
                    "layer {li} {name} has {} entries, expected {width}",
                    v.len()
                )));
            }
        }
        if l.run_var.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Checkpoint(format!(
                "layer {li} running variance must be non-negative"
            )));
        }
        hidden.push(HiddenLayer {
            w,
            b: DVector::from_vec(l.b.clone()),
            bn: BatchNorm {
                gamma: DVector::from_vec(l.gamma.clone()),
                beta: DVector::from_vec(l.beta.clone()),
                run_mean: DVector::from_vec(l.run_mean.clone()),
                run_var: DVector::from_vec(l.run_var.clone()),
            },
        });
        in_dim = width;
    }
    let out_w = file.out_w.to_matrix("output weight")?;
    if out_w.ncols() != in_dim {
        return Err(Error::Checkpoint(format!(
            "output weight has {} inputs, expected {in_dim}",
            out_w.ncols()
        )));
    }
    if out_w.nrows() != variant.head_dim(k) {
        return Err(Error::Checkpoint(format!(
            "output weight has {} rows, variant {:?} with k={k} needs {}",
            out_w.nrows(),
            file.variant,
            variant.head_dim(k)
        )));
    }
    if file.out_b.len() != out_w.nrows() {
        return Err(Error::Checkpoint(format!(
            "output bias has {} entries, expected {}",
            file.out_b.len(),
            out_w.nrows()
        )));
    }
    if variant.is_penalty() && file.penalty_weight.is_none() {
        return Err(Error::Checkpoint(
            "penalty variants must record their penalty weight".into(),
        ));
    }
    let bn_momentum = if file.bn_momentum == 0.0 { BN_MOMENTUM } else { file.bn_momentum };
    let bn_eps = if file.bn_eps == 0.0 { BN_EPS } else { file.bn_eps };
    if !(0.0..1.0).contains(&bn_momentum) || !(bn_eps > 0.0) {
        return Err(Error::Checkpoint("bad batch-norm hyperparameters".into()));
    }

    Ok(PowerControlNet {
        variant,
        k,
        stats: FeatureStats {
            mean: DVector::from_vec(file.feature_mean),
            std: DVector::from_vec(file.feature_std),
        },
        mlp: Mlp {
            hidden,
            out_w,
            out_b: DVector::from_vec(file.out_b),
            bn_momentum,
            bn_eps,
        },
        penalty_weight: file.penalty_weight,
    })
}

pub fn save_checkpoint(net: &PowerControlNet, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(net)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PowerControlNet> {
    from_json(&std::fs::read_to_string(path)?)
}
