//! Side-by-side evaluation of power-control methods on a shared test set:
//! aggregate report (JSON), per-sample rows (CSV), and a repeat-timing table.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_p0, ensemble_select, multistart_local_opt, penalty_infer};
use crate::error::{Error, Result};
use crate::geometry::metrics::{min_rate_margin, sum_rate};
use crate::geometry::ConstraintSet;
use crate::scenario::dataset::Dataset;
use crate::scenario::ChannelRealization;
use crate::srnet::{infer_projected, infer_raw, PowerControlNet};

/// Relative slack applied when reporting constraint satisfaction, so that
/// outputs feasible up to float roundoff are not counted as violations.
pub const REPORT_REL_MARGIN: f64 = 1e-8;

/// One competitor in an evaluation run.
pub enum Method {
    /// Solve the linear system whose solution meets every rate target with
    /// equality (the feasible-region vertex).
    P0,
    /// A trained network. `fallback` only affects penalty variants, which
    /// may emit infeasible powers and substitute the vertex when it is set.
    Net {
        name: String,
        net: PowerControlNet,
        fallback: bool,
    },
    /// Best feasible output across several networks, vertex if none.
    Ensemble {
        name: String,
        nets: Vec<PowerControlNet>,
    },
    /// Multi-start projected gradient ascent (the slow reference).
    LocalOpt {
        name: String,
        starts: usize,
        seed: u64,
    },
}

impl Method {
    pub fn name(&self) -> &str {
        match self {
            Method::P0 => "p0",
            Method::Net { name, .. } => name,
            Method::Ensemble { name, .. } => name,
            Method::LocalOpt { name, .. } => name,
        }
    }
}

/// Tolerant feasibility check used for reporting: every rate row and both
/// power bounds may miss by a relative `rel` without counting as a violation.
pub fn feasible_within(cs: &ConstraintSet, p: &DVector<f64>, rel: f64) -> bool {
    let k = cs.k();
    for i in 0..k {
        if p[i] < -rel * cs.p_max() || p[i] > cs.p_max() * (1.0 + rel) {
            return false;
        }
    }
    let bp = cs.b() * p;
    for i in 0..k {
        if bp[i] < cs.q()[i] - rel * (1.0 + cs.q()[i].abs()) {
            return false;
        }
    }
    true
}

struct SampleOutcome {
    p: DVector<f64>,
    /// Direct output feasible (before any fallback substitution).
    raw_feasible: bool,
    fell_back: bool,
    wall_us: f64,
}

fn run_method(
    method: &Method,
    index: usize,
    ch: &ChannelRealization,
    cs: &ConstraintSet,
) -> Result<SampleOutcome> {
    match method {
        Method::P0 => {
            let t0 = Instant::now();
            let p = baseline_p0(cs)?;
            let wall_us = t0.elapsed().as_secs_f64() * 1e6;
            Ok(SampleOutcome {
                raw_feasible: feasible_within(cs, &p, REPORT_REL_MARGIN),
                p,
                fell_back: false,
                wall_us,
            })
        }
        Method::Net { net, fallback, .. } => {
            if net.variant.uses_projection() {
                let t0 = Instant::now();
                let tape = infer_projected(net, ch, cs)?;
                let wall_us = t0.elapsed().as_secs_f64() * 1e6;
                Ok(SampleOutcome {
                    raw_feasible: feasible_within(cs, &tape.p_e, REPORT_REL_MARGIN),
                    p: tape.p_e,
                    fell_back: false,
                    wall_us,
                })
            } else {
                let t0 = Instant::now();
                let out = penalty_infer(net, ch, cs, *fallback)?;
                let wall_us = t0.elapsed().as_secs_f64() * 1e6;
                // Raw satisfaction is judged with the same tolerant margin as
                // everything else, so re-derive the pre-fallback output.
                let raw_feasible = if out.fell_back {
                    let raw = infer_raw(net, ch)?;
                    feasible_within(cs, &raw, REPORT_REL_MARGIN)
                } else {
                    feasible_within(cs, &out.p, REPORT_REL_MARGIN)
                };
                Ok(SampleOutcome {
                    p: out.p,
                    raw_feasible,
                    fell_back: out.fell_back,
                    wall_us,
                })
            }
        }
        Method::Ensemble { nets, .. } => {
            let t0 = Instant::now();
            let p = ensemble_select(nets, ch, cs)?;
            let wall_us = t0.elapsed().as_secs_f64() * 1e6;
            Ok(SampleOutcome {
                raw_feasible: feasible_within(cs, &p, REPORT_REL_MARGIN),
                p,
                fell_back: false,
                wall_us,
            })
        }
        Method::LocalOpt { starts, seed, .. } => {
            let t0 = Instant::now();
            let res = multistart_local_opt(ch, cs, *starts, seed.wrapping_add(index as u64))?;
            let wall_us = t0.elapsed().as_secs_f64() * 1e6;
            Ok(SampleOutcome {
                raw_feasible: feasible_within(cs, &res.p, REPORT_REL_MARGIN),
                p: res.p,
                fell_back: false,
                wall_us,
            })
        }
    }
}

/// One evaluated (sample, method) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample: usize,
    pub method: String,
    pub sum_rate: f64,
    pub min_rate_margin: f64,
    pub feasible: bool,
    pub fell_back: bool,
    pub wall_us: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodReport {
    pub name: String,
    pub mean_sum_rate: f64,
    pub mean_min_rate_margin: f64,
    /// Fraction of samples whose direct output met every constraint.
    pub satisfaction_raw: f64,
    /// Fraction feasible after any fallback substitution.
    pub satisfaction_final: f64,
    pub fallback_rate: f64,
    pub mean_time_us: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub k: usize,
    pub sample_count: usize,
    pub methods: Vec<MethodReport>,
}

pub const EVAL_FORMAT: &str = "power-control-eval";
pub const EVAL_VERSION: u32 = 1;

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// Prepared geometry for every sample (all must be feasible).
pub fn prepare_sets(samples: &[ChannelRealization]) -> Result<Vec<ConstraintSet>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, ch)| {
            let cs = ConstraintSet::build(ch)?;
            if !cs.feasible() {
                return Err(Error::Infeasible(format!(
                    "evaluation sample {i} has no feasible power allocation"
                )));
            }
            Ok(cs)
        })
        .collect()
}

/// Evaluate every method on every sample. Metric fields are deterministic
/// given the dataset and methods; wall times are measurements.
pub fn evaluate(ds: &Dataset, methods: &[Method]) -> Result<(EvalReport, Vec<SampleRow>)> {
    if ds.samples.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods to evaluate".into()));
    }
    let css = prepare_sets(&ds.samples)?;

    let mut rows = Vec::with_capacity(methods.len() * ds.samples.len());
    let mut reports = Vec::with_capacity(methods.len());
    for method in methods {
        let outcomes: Vec<(SampleOutcome, f64, f64)> = ds
            .samples
            .par_iter()
            .zip(css.par_iter())
            .enumerate()
            .map(|(i, (ch, cs))| {
                let out = run_method(method, i, ch, cs)?;
                let rate = sum_rate(ch, &out.p);
                let margin = min_rate_margin(ch, &out.p);
                Ok((out, rate, margin))
            })
            .collect::<Result<_>>()?;

        let n = outcomes.len() as f64;
        let mut rep = MethodReport {
            name: method.name().to_string(),
            mean_sum_rate: 0.0,
            mean_min_rate_margin: 0.0,
            satisfaction_raw: 0.0,
            satisfaction_final: 0.0,
            fallback_rate: 0.0,
            mean_time_us: 0.0,
        };
        for (i, (out, rate, margin)) in outcomes.iter().enumerate() {
            let final_feasible =
                feasible_within(&css[i], &out.p, REPORT_REL_MARGIN);
            rep.mean_sum_rate += rate;
            rep.mean_min_rate_margin += margin;
            rep.satisfaction_raw += f64::from(out.raw_feasible);
            rep.satisfaction_final += f64::from(final_feasible);
            rep.fallback_rate += f64::from(out.fell_back);
            rep.mean_time_us += out.wall_us;
            rows.push(SampleRow {
                sample: i,
                method: rep.name.clone(),
                sum_rate: *rate,
                min_rate_margin: *margin,
                feasible: final_feasible,
                fell_back: out.fell_back,
                wall_us: out.wall_us,
            });
        }
        rep.mean_sum_rate /= n;
        rep.mean_min_rate_margin /= n;
        rep.satisfaction_raw /= n;
        rep.satisfaction_final /= n;
        rep.fallback_rate /= n;
        rep.mean_time_us /= n;
        reports.push(rep);
    }

    Ok((
        EvalReport {
            format: EVAL_FORMAT.into(),
            version: EVAL_VERSION,
            k: ds.samples[0].k(),
            sample_count: ds.samples.len(),
            methods: reports,
        },
        rows,
    ))
}

pub fn rows_to_csv(rows: &[SampleRow]) -> String {
    let mut out = String::from("sample,method,sum_rate,min_rate_margin,feasible,fell_back,wall_us\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.16e},{:.16e},{},{},{:.3}\n",
            r.sample,
            r.method,
            r.sum_rate,
            r.min_rate_margin,
            u8::from(r.feasible),
            u8::from(r.fell_back),
            r.wall_us
        ));
    }
    out
}

/// Median-of-`repeats` wall time per method and sample, after `warmup`
/// unmeasured runs. Runs strictly serially so measurements do not contend.
pub struct BenchTable {
    pub method_names: Vec<String>,
    /// `times_us[m]` is the median for method `m` on this sample.
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl BenchTable {
    /// Wide CSV: one row per sample, one timing column per method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample");
        for name in &self.method_names {
            out.push_str(&format!(",{name}_us"));
        }
        out.push('\n');
        for (i, times) in &self.rows {
            out.push_str(&i.to_string());
            for t in times {
                out.push_str(&format!(",{t:.3}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn bench_methods(
    ds: &Dataset,
    methods: &[Method],
    warmup: usize,
    repeats: usize,
) -> Result<BenchTable> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be positive".into()));
    }
    if ds.samples.is_empty() {
        return Err(Error::InvalidArgument("benchmark set is empty".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods to benchmark".into()));
    }
    let css = prepare_sets(&ds.samples)?;
    let mut rows = Vec::with_capacity(ds.samples.len());
    for (i, (ch, cs)) in ds.samples.iter().zip(&css).enumerate() {
        let mut times = Vec::with_capacity(methods.len());
        for method in methods {
            for _ in 0..warmup {
                run_method(method, i, ch, cs)?;
            }
            let mut samples_us: Vec<f64> = (0..repeats)
                .map(|_| run_method(method, i, ch, cs).map(|o| o.wall_us))
                .collect::<Result<_>>()?;
            samples_us.sort_by(|a, b| a.total_cmp(b));
            times.push(samples_us[samples_us.len() / 2]);
        }
        rows.push((i, times));
    }
    Ok(BenchTable {
        method_names: methods.iter().map(|m| m.name().to_string()).collect(),
        rows,
    })
}
