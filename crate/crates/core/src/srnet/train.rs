//! Mini-batch Adam training for every model variant, plus the flat
//! `key = value` config-file format used by the CLI.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{penalty_objective, violation, violation_grad, ViolationMeasure};
use crate::error::{Error, Result};
use crate::geometry::metrics::{grad_neg_sum_rate, sum_rate};
use crate::geometry::ConstraintSet;
use crate::scenario::dataset::Dataset;
use crate::scenario::ChannelRealization;
use crate::srnet::features::FeatureStats;
use crate::srnet::model::{sigmoid, AdamHp, AdamState, Mlp, Mode};
use crate::srnet::{
    backward_training, forward_training, mean_neg_sum_rate, PowerControlNet, SampleRef, Variant,
};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub steps: usize,
    pub adam: AdamHp,
    /// Fixed penalty weight; `None` selects from `penalty_grid` on a
    /// validation split (penalty variants only).
    pub penalty_weight: Option<f64>,
    pub penalty_grid: Vec<f64>,
    pub violation_measure: ViolationMeasure,
    /// Fraction of samples held out for penalty-weight selection.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    /// Desk-scale defaults: two hidden layers, 512-sample batches.
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
            batch_size: 512,
            steps: 20_000,
            adam: AdamHp::default(),
            penalty_weight: None,
            penalty_grid: vec![0.1, 1.0, 10.0, 100.0],
            violation_measure: ViolationMeasure::SinrShortfall,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    /// Heavyweight preset (deep net, huge batches); expects a large training
    /// set and hours of compute.
    pub fn large() -> Self {
        Self {
            hidden: vec![720, 360, 180, 90],
            batch_size: 8000,
            steps: 150_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.iter().any(|h| *h == 0) {
            return Err(Error::InvalidArgument(
                "hidden layer widths must be non-empty and positive".into(),
            ));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(
                "batch size must be at least 2 (batch norm needs a variance)".into(),
            ));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("step count must be positive".into()));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.penalty_weight.is_none() && self.penalty_grid.is_empty() {
            return Err(Error::InvalidArgument(
                "penalty weight grid must be non-empty when no weight is fixed".into(),
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidArgument(
                "validation fraction must be in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Parse a flat `key = value` file ('#' starts a comment). Unknown keys
    /// are errors. `preset = large` switches the base preset and may be
    /// overridden by later lines.
    pub fn from_str(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        // Apply a preset line first regardless of position.
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if let Some((k, v)) = line.split_once('=') {
                if k.trim() == "preset" {
                    match v.trim() {
                        "default" => {}
                        "large" => cfg = TrainConfig::large(),
                        other => {
                            return Err(Error::InvalidArgument(format!(
                                "unknown preset {other:?}"
                            )))
                        }
                    }
                }
            }
        }
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: format!("expected key = value, got {raw:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::Parse {
                line: lineno + 1,
                msg: format!("bad {what} {value:?}"),
            };
            match key {
                "preset" => {}
                "hidden" => {
                    cfg.hidden = value
                        .split(',')
                        .map(|t| t.trim().parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("hidden widths"))?;
                }
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("batch_size"))?,
                "steps" => cfg.steps = value.parse().map_err(|_| bad("steps"))?,
                "learning_rate" => cfg.adam.lr = value.parse().map_err(|_| bad("learning_rate"))?,
                "adam_beta1" => cfg.adam.beta1 = value.parse().map_err(|_| bad("adam_beta1"))?,
                "adam_beta2" => cfg.adam.beta2 = value.parse().map_err(|_| bad("adam_beta2"))?,
                "adam_epsilon" => cfg.adam.eps = value.parse().map_err(|_| bad("adam_epsilon"))?,
                "penalty_weight" => {
                    cfg.penalty_weight = if value == "grid" {
                        None
                    } else {
                        Some(value.parse().map_err(|_| bad("penalty_weight"))?)
                    };
                }
                "penalty_grid" => {
                    cfg.penalty_grid = value
                        .split(',')
                        .map(|t| t.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("penalty_grid"))?;
                }
                "violation_measure" => {
                    cfg.violation_measure = ViolationMeasure::from_tag(value)?;
                }
                "val_fraction" => {
                    cfg.val_fraction = value.parse().map_err(|_| bad("val_fraction"))?;
                }
                other => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: format!("unknown config key {other:?}"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }
}

/// Per-step loss values from one training run.
#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub losses: Vec<f64>,
}

#[derive(Debug)]
pub struct Trained {
    pub net: PowerControlNet,
    pub trace: TrainTrace,
    /// Penalty weight actually used (grid winner or the fixed value).
    pub selected_weight: Option<f64>,
}

/// Channels with prepared geometry; training requires every instance to be
/// feasible (the generator only emits feasible ones).
fn prepare(samples: &[ChannelRealization]) -> Result<Vec<ConstraintSet>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            let cs = ConstraintSet::build(ch)?;
            if !cs.feasible() {
                return Err(Error::Infeasible(format!(
                    "training sample {i} violates its own rate targets at p_max"
                )));
            }
            Ok(cs)
        })
        .collect()
}

/// Train one model. For penalty variants without a fixed weight, each grid
/// candidate trains on a front split and the weight with the best
/// post-fallback mean sum rate on the held-out tail split wins.
pub fn train(ds: &Dataset, variant: Variant, cfg: &TrainConfig, seed: u64) -> Result<Trained> {
    cfg.validate()?;
    if ds.samples.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let css = prepare(&ds.samples)?;

    if variant.is_penalty() && cfg.penalty_weight.is_none() {
        let n = ds.samples.len();
        let n_val = ((n as f64 * cfg.val_fraction).round() as usize).clamp(1, n - 1);
        let n_train = n - n_val;
        if n_train < 2 {
            return Err(Error::InvalidArgument(
                "too few samples to split off a validation set".into(),
            ));
        }
        let mut best: Option<(f64, f64, PowerControlNet, TrainTrace)> = None;
        for &w in &cfg.penalty_grid {
            let (net, trace) = run_training(
                &ds.samples[..n_train],
                &css[..n_train],
                variant,
                cfg,
                seed,
                Some(w),
            )?;
            let mut val_rate = 0.0;
            for (ch, cs) in ds.samples[n_train..].iter().zip(&css[n_train..]) {
                let out = crate::baselines::penalty_infer(&net, ch, cs, true)?;
                val_rate += sum_rate(ch, &out.p);
            }
            val_rate /= n_val as f64;
            if best.as_ref().map_or(true, |(r, _, _, _)| val_rate > *r) {
                best = Some((val_rate, w, net, trace));
            }
        }
        let (_, w, net, trace) = best.expect("non-empty grid");
        return Ok(Trained { net, trace, selected_weight: Some(w) });
    }

    let weight = if variant.is_penalty() { cfg.penalty_weight } else { None };
    let (net, trace) = run_training(&ds.samples, &css, variant, cfg, seed, weight)?;
    Ok(Trained { net, trace, selected_weight: weight })
}

fn run_training(
    samples: &[ChannelRealization],
    css: &[ConstraintSet],
    variant: Variant,
    cfg: &TrainConfig,
    seed: u64,
    weight: Option<f64>,
) -> Result<(PowerControlNet, TrainTrace)> {
    let n = samples.len();
    let k = samples[0].k();
    let stats = FeatureStats::fit(samples)?;
    let feat_dim = stats.feature_dim();

    // Feature matrix for the whole training set, one column per sample.
    let mut all_feats = DMatrix::zeros(feat_dim, n);
    for (i, ch) in samples.iter().enumerate() {
        all_feats.set_column(i, &stats.featurize(ch));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mlp = Mlp::init(feat_dim, &cfg.hidden, variant.head_dim(k), &mut rng)?;
    let mut net = PowerControlNet {
        variant,
        k,
        stats,
        mlp,
        penalty_weight: weight,
    };
    let mut adam = AdamState::new(&net.mlp);
    let mut trace = TrainTrace::default();
    let m = cfg.batch_size;
    let mut batch_feats = DMatrix::zeros(feat_dim, m);

    for step in 0..cfg.steps {
        // Mini-batch sampled with replacement.
        let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
        for (c, &i) in idx.iter().enumerate() {
            batch_feats.set_column(c, &all_feats.column(i));
        }
        let refs: Vec<SampleRef> = idx
            .iter()
            .map(|&i| SampleRef { ch: &samples[i], cs: &css[i] })
            .collect();

        let loss = if variant.uses_projection() {
            let (tapes, cache, z) = forward_training(&mut net, &batch_feats, &refs)?;
            let loss = mean_neg_sum_rate(&tapes, &refs);
            if !loss.is_finite() {
                return Err(Error::Diverged { step });
            }
            let grads = backward_training(&net, &cache, &z, &tapes, &refs)?;
            adam.step(&cfg.adam, &mut net.mlp, &grads);
            loss
        } else {
            let w = weight.expect("penalty training has a weight");
            let (z, cache) = net.mlp.forward(&batch_feats, Mode::Train)?;
            let mut dz = DMatrix::zeros(z.nrows(), z.ncols());
            let mut loss = 0.0;
            let mf = m as f64;
            for (j, s) in refs.iter().enumerate() {
                let p = DVector::from_fn(k, |i, _| s.ch.p_max * sigmoid(z[(i, j)]));
                let neg_rate = -sum_rate(s.ch, &p);
                let v = violation(s.ch, &p, cfg.violation_measure);
                loss += penalty_objective(neg_rate, v, w, variant);
                let g_rate = grad_neg_sum_rate(s.ch, &p);
                let g_v = violation_grad(s.ch, &p, cfg.violation_measure);
                // d objective / dp for each form.
                let dp = match variant {
                    Variant::PenaltyAdd => g_rate + g_v * w,
                    Variant::PenaltyMul => g_rate * (1.0 + w * v) + g_v * (w * neg_rate),
                    _ => unreachable!(),
                };
                for i in 0..k {
                    let sp = sigmoid(z[(i, j)]);
                    dz[(i, j)] = dp[i] / mf * s.ch.p_max * sp * (1.0 - sp);
                }
            }
            loss /= mf;
            if !loss.is_finite() {
                return Err(Error::Diverged { step });
            }
            let grads = net.mlp.backward(&cache, &dz)?;
            adam.step(&cfg.adam, &mut net.mlp, &grads);
            loss
        };
        trace.losses.push(loss);
    }
    Ok((net, trace))
}
