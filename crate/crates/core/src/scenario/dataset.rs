//! Dataset generation (rejection-sampled feasible instances, deterministic
//! under parallelism) and the on-disk CSV format.
//!
//! File layout: a single header line
//! `K=..,rho_min=..,rho_max=..,rate_spec=..,seed=..,count=..,sigma2_dBm=..,pmax_dBm=..`
//! followed by one record per sample: K*K noise-normalized gains in row-major
//! order, then K SINR targets, all printed with 17 significant digits so the
//! round-trip is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::ConstraintSet;
use crate::scenario::{
    dbm_to_watts, sample_channel, ChannelRealization, RateSpec, ScenarioConfig,
};

/// Identity of a generated dataset, echoed through the file header.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub k: usize,
    pub rho_min_db: f64,
    pub rho_max_db: f64,
    pub rate_spec: RateSpec,
    pub seed: u64,
    pub count: usize,
    pub sigma2_dbm: f64,
    pub pmax_dbm: f64,
}

impl DatasetMeta {
    pub fn p_max_watts(&self) -> f64 {
        dbm_to_watts(self.pmax_dbm)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<ChannelRealization>,
}

/// Rejection-sampling diagnostics from one generation run.
#[derive(Debug, Clone, Default)]
pub struct GenStats {
    pub attempts: u64,
    pub kept: u64,
    pub infeasible: u64,
    pub degenerate: u64,
}

impl GenStats {
    pub fn acceptance(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.kept as f64 / self.attempts as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub scenario: ScenarioConfig,
    pub count: usize,
    pub seed: u64,
    /// Abort below this acceptance fraction once enough attempts accrued.
    pub min_yield: f64,
}

impl GenConfig {
    pub fn new(scenario: ScenarioConfig, count: usize, seed: u64) -> Self {
        Self { scenario, count, seed, min_yield: 1e-4 }
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            k: self.scenario.cell_count,
            rho_min_db: self.scenario.region.rho_min_db,
            rho_max_db: self.scenario.region.rho_max_db,
            rate_spec: self.scenario.rate_spec,
            seed: self.seed,
            count: self.count,
            sigma2_dbm: self.scenario.sigma2_dbm,
            pmax_dbm: self.scenario.pmax_dbm,
        }
    }
}

enum Attempt {
    Kept(ChannelRealization),
    Infeasible,
    Degenerate,
}

/// One fully seeded attempt. Every attempt owns an RNG stream derived from
/// (seed, attempt index), so results are identical however attempts are
/// scheduled across threads.
fn run_attempt(cfg: &GenConfig, layout: &crate::scenario::NetworkLayout, idx: u64) -> Result<Attempt> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(idx);
    let ch = sample_channel(layout, &cfg.scenario, &mut rng)?;
    match ConstraintSet::build(&ch) {
        Ok(cs) if cs.feasible() => Ok(Attempt::Kept(ch)),
        Ok(_) => Ok(Attempt::Infeasible),
        Err(Error::SingularGeometry(_)) | Err(Error::DegenerateGeometry { .. }) => {
            Ok(Attempt::Degenerate)
        }
        Err(e) => Err(e),
    }
}

/// Draw channels until `count` of them are feasible, discarding the rest.
///
/// Attempts are processed in deterministic index order; chunks of attempts
/// fan out over the rayon pool (size controlled by `RAYON_NUM_THREADS`),
/// and the serial and parallel schedules produce identical datasets.
pub fn generate_dataset(cfg: &GenConfig) -> Result<(Dataset, GenStats)> {
    let layout = cfg.scenario.layout()?;
    let mut stats = GenStats::default();
    let mut samples = Vec::with_capacity(cfg.count);
    let chunk: u64 = 4096;
    let mut next = 0u64;

    while samples.len() < cfg.count {
        let results: Vec<Result<Attempt>> = (next..next + chunk)
            .into_par_iter()
            .map(|idx| run_attempt(cfg, &layout, idx))
            .collect();
        next += chunk;
        for r in results {
            if samples.len() >= cfg.count {
                break;
            }
            stats.attempts += 1;
            match r? {
                Attempt::Kept(ch) => {
                    stats.kept += 1;
                    samples.push(ch);
                }
                Attempt::Infeasible => stats.infeasible += 1,
                Attempt::Degenerate => stats.degenerate += 1,
            }
        }
        if stats.attempts >= 10_000 && stats.acceptance() < cfg.min_yield {
            return Err(Error::YieldTooLow {
                kept: stats.kept,
                attempts: stats.attempts,
                floor: cfg.min_yield,
            });
        }
    }

    Ok((Dataset { meta: cfg.meta(), samples }, stats))
}

fn rate_spec_str(r: RateSpec) -> String {
    match r {
        RateSpec::Fixed(v) => format!("{v}"),
        RateSpec::Random => "random".into(),
    }
}

fn parse_rate_spec(s: &str) -> Result<RateSpec> {
    if s == "random" {
        return Ok(RateSpec::Random);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Parse { line: 1, msg: format!("bad rate_spec {s:?}") })?;
    Ok(RateSpec::Fixed(v))
}

impl Dataset {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let m = &self.meta;
        writeln!(
            out,
            "K={},rho_min={},rho_max={},rate_spec={},seed={},count={},sigma2_dBm={},pmax_dBm={}",
            m.k,
            m.rho_min_db,
            m.rho_max_db,
            rate_spec_str(m.rate_spec),
            m.seed,
            m.count,
            m.sigma2_dbm,
            m.pmax_dbm
        )
        .expect("string write");
        for ch in &self.samples {
            let mut first = true;
            for i in 0..m.k {
                for j in 0..m.k {
                    if !first {
                        out.push(',');
                    }
                    write!(out, "{:.16e}", ch.gains[(i, j)]).expect("string write");
                    first = false;
                }
            }
            for i in 0..m.k {
                write!(out, ",{:.16e}", ch.gamma_min[i]).expect("string write");
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "empty file".into() })?;
        let meta = parse_header(header)?;
        let p_max = meta.p_max_watts();
        let width = meta.k * meta.k + meta.k;

        let mut samples = Vec::with_capacity(meta.count);
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut vals = Vec::with_capacity(width);
            for tok in line.split(',') {
                let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    msg: format!("bad number {tok:?}"),
                })?;
                vals.push(v);
            }
            if vals.len() != width {
                return Err(Error::Schema(format!(
                    "record at line {} has {} fields; K={} needs {}",
                    lineno + 1,
                    vals.len(),
                    meta.k,
                    width
                )));
            }
            let gains = DMatrix::from_row_slice(meta.k, meta.k, &vals[..meta.k * meta.k]);
            let gamma_min = DVector::from_column_slice(&vals[meta.k * meta.k..]);
            samples.push(ChannelRealization::new(gains, gamma_min, 1.0, p_max)?);
        }
        if samples.len() != meta.count {
            return Err(Error::Parse {
                line: samples.len() + 1,
                msg: format!(
                    "header promises {} records, found {}",
                    meta.count,
                    samples.len()
                ),
            });
        }
        Ok(Dataset { meta, samples })
    }
}

fn parse_header(header: &str) -> Result<DatasetMeta> {
    const KEYS: [&str; 8] = [
        "K", "rho_min", "rho_max", "rate_spec", "seed", "count", "sigma2_dBm", "pmax_dBm",
    ];
    let parts: Vec<&str> = header.split(',').collect();
    if parts.len() != KEYS.len() {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header has {} fields, expected {}", parts.len(), KEYS.len()),
        });
    }
    let mut vals = Vec::with_capacity(KEYS.len());
    for (part, key) in parts.iter().zip(KEYS) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: 1, msg: format!("bad header field {part:?}") })?;
        if k.trim() != key {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header field {k:?} where {key:?} expected"),
            });
        }
        vals.push(v.trim());
    }
    let parse_f = |s: &str, what: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Parse { line: 1, msg: format!("bad {what} {s:?}") })
    };
    let parse_u = |s: &str, what: &str| -> Result<u64> {
        s.parse()
            .map_err(|_| Error::Parse { line: 1, msg: format!("bad {what} {s:?}") })
    };
    let k = parse_u(vals[0], "K")? as usize;
    if k == 0 {
        return Err(Error::Schema("header K must be positive".into()));
    }
    Ok(DatasetMeta {
        k,
        rho_min_db: parse_f(vals[1], "rho_min")?,
        rho_max_db: parse_f(vals[2], "rho_max")?,
        rate_spec: parse_rate_spec(vals[3])?,
        seed: parse_u(vals[4], "seed")?,
        count: parse_u(vals[5], "count")? as usize,
        sigma2_dbm: parse_f(vals[6], "sigma2_dBm")?,
        pmax_dbm: parse_f(vals[7], "pmax_dBm")?,
    })
}
