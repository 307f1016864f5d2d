//! Unsupervised power-control network: an MLP whose outputs are squashed
//! into the problem's boxes and, for the projecting variants, pulled onto
//! the feasible set by the closed-form projection before the rate loss.

pub mod checkpoint;
pub mod features;
pub mod model;
pub mod train;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::backward::projection_backward;
use crate::geometry::metrics::{grad_neg_sum_rate, sum_rate};
use crate::geometry::projection::{project_forward, project_forward_heuristic, ProjectionTape};
use crate::geometry::ConstraintSet;
use crate::scenario::ChannelRealization;
use features::FeatureStats;
use model::{sigmoid, Mlp, MlpCache, MlpGrads};

/// Which head layout and loss the network was trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Projection with learned per-hyperplane distances (2K outputs).
    Srnet,
    /// Projection with distances pinned at `d_max_star 1` (K outputs).
    SrnetHeu,
    /// No projection; rate loss plus `w * violation` (K outputs).
    PenaltyAdd,
    /// No projection; rate loss times `(1 + w * violation)` (K outputs).
    PenaltyMul,
}

impl Variant {
    pub fn tag(self) -> &'static str {
        match self {
            Variant::Srnet => "srnet",
            Variant::SrnetHeu => "srnet-heu",
            Variant::PenaltyAdd => "penalty-add",
            Variant::PenaltyMul => "penalty-mul",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "srnet" => Variant::Srnet,
            "srnet-heu" => Variant::SrnetHeu,
            "penalty-add" => Variant::PenaltyAdd,
            "penalty-mul" => Variant::PenaltyMul,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown model variant {other:?} (srnet|srnet-heu|penalty-add|penalty-mul)"
                )))
            }
        })
    }

    pub fn head_dim(self, k: usize) -> usize {
        match self {
            Variant::Srnet => 2 * k,
            _ => k,
        }
    }

    pub fn uses_projection(self) -> bool {
        matches!(self, Variant::Srnet | Variant::SrnetHeu)
    }

    pub fn is_penalty(self) -> bool {
        matches!(self, Variant::PenaltyAdd | Variant::PenaltyMul)
    }
}

/// Trained model plus everything needed to run it on raw channels.
#[derive(Debug, Clone)]
pub struct PowerControlNet {
    pub variant: Variant,
    pub k: usize,
    pub stats: FeatureStats,
    pub mlp: Mlp,
    /// Penalty weight the model was trained with (penalty variants only).
    pub penalty_weight: Option<f64>,
}

/// One channel with its prepared geometry, borrowed for a batch step.
#[derive(Clone, Copy)]
pub struct SampleRef<'a> {
    pub ch: &'a ChannelRealization,
    pub cs: &'a ConstraintSet,
}

/// Raw power head: `p_hat = p_max * sigmoid(z)` from the first K outputs.
fn power_head(z_col: &[f64], k: usize, p_max: f64) -> DVector<f64> {
    DVector::from_fn(k, |i, _| p_max * sigmoid(z_col[i]))
}

/// Distance head: `d = d_max_star * sigmoid(z)` from outputs K..2K.
fn distance_head(z_col: &[f64], k: usize, d_max: f64) -> DVector<f64> {
    DVector::from_fn(k, |i, _| d_max * sigmoid(z_col[k + i]))
}

fn column_slice(z: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = z.nrows();
    &z.as_slice()[j * n..(j + 1) * n]
}

/// Training-mode forward through the heads and the projection.
/// Returns one tape per sample plus the MLP cache and pre-head outputs.
pub fn forward_training(
    net: &mut PowerControlNet,
    feats: &DMatrix<f64>,
    batch: &[SampleRef],
) -> Result<(Vec<ProjectionTape>, MlpCache, DMatrix<f64>)> {
    debug_assert!(net.variant.uses_projection());
    let (z, cache) = net.mlp.forward(feats, model::Mode::Train)?;
    let tapes = project_heads(net.variant, net.k, &z, batch)?;
    Ok((tapes, cache, z))
}

fn project_heads(
    variant: Variant,
    k: usize,
    z: &DMatrix<f64>,
    batch: &[SampleRef],
) -> Result<Vec<ProjectionTape>> {
    let mut tapes = Vec::with_capacity(batch.len());
    for (j, s) in batch.iter().enumerate() {
        let col = column_slice(z, j);
        let p_hat = power_head(col, k, s.cs.p_max());
        let tape = match variant {
            Variant::Srnet => {
                let d = distance_head(col, k, s.cs.d_max_star());
                project_forward(s.cs, &p_hat, &d)?
            }
            Variant::SrnetHeu => project_forward_heuristic(s.cs, &p_hat)?,
            _ => {
                return Err(Error::InvalidArgument(
                    "penalty variants do not project".into(),
                ))
            }
        };
        tapes.push(tape);
    }
    Ok(tapes)
}

/// Mean negative sum rate of the projected outputs.
pub fn mean_neg_sum_rate(tapes: &[ProjectionTape], batch: &[SampleRef]) -> f64 {
    let m = batch.len() as f64;
    tapes
        .iter()
        .zip(batch)
        .map(|(t, s)| -sum_rate(s.ch, &t.p_e))
        .sum::<f64>()
        / m
}

/// Backward pass of the mean negative sum rate through projection and heads
/// down to the MLP parameters.
pub fn backward_training(
    net: &PowerControlNet,
    cache: &MlpCache,
    z: &DMatrix<f64>,
    tapes: &[ProjectionTape],
    batch: &[SampleRef],
) -> Result<MlpGrads> {
    let k = net.k;
    let m = batch.len() as f64;
    let mut dz = DMatrix::zeros(z.nrows(), z.ncols());
    for (j, (tape, s)) in tapes.iter().zip(batch).enumerate() {
        let upstream = grad_neg_sum_rate(s.ch, &tape.p_e) / m;
        let (g_phat, g_d) = projection_backward(tape, s.cs, &upstream)?;
        let col = column_slice(z, j);
        for i in 0..k {
            let sp = sigmoid(col[i]);
            dz[(i, j)] = g_phat[i] * s.cs.p_max() * sp * (1.0 - sp);
        }
        if net.variant == Variant::Srnet {
            let d_max = s.cs.d_max_star();
            for i in 0..k {
                let sd = sigmoid(col[k + i]);
                dz[(k + i, j)] = g_d[i] * d_max * sd * (1.0 - sd);
            }
        }
    }
    net.mlp.backward(cache, &dz)
}

/// Run one channel through a projecting network at inference.
pub fn infer_projected(
    net: &PowerControlNet,
    ch: &ChannelRealization,
    cs: &ConstraintSet,
) -> Result<ProjectionTape> {
    let feat = net.stats.featurize(ch);
    let z = net.mlp.forward_infer(&DMatrix::from_column_slice(feat.len(), 1, feat.as_slice()))?;
    let col = column_slice(&z, 0);
    let p_hat = power_head(col, net.k, cs.p_max());
    match net.variant {
        Variant::Srnet => {
            let d = distance_head(col, net.k, cs.d_max_star());
            project_forward(cs, &p_hat, &d)
        }
        Variant::SrnetHeu => project_forward_heuristic(cs, &p_hat),
        _ => Err(Error::InvalidArgument(
            "penalty variants do not project; use infer_raw".into(),
        )),
    }
}

/// Raw (unprojected) power output for one channel; used by the penalty nets.
pub fn infer_raw(net: &PowerControlNet, ch: &ChannelRealization) -> Result<DVector<f64>> {
    let feat = net.stats.featurize(ch);
    let z = net.mlp.forward_infer(&DMatrix::from_column_slice(feat.len(), 1, feat.as_slice()))?;
    Ok(power_head(column_slice(&z, 0), net.k, ch.p_max))
}
