//! Network scenario: cell layout, large-scale propagation, and random
//! channel draws with cell-edge placement control.

pub mod dataset;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};

use crate::error::{Error, Result};

/// Slope-intercept log-distance pathloss in dB; distance in meters.
pub fn pathloss_db(distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "pathloss distance must be positive, got {distance_m}"
        )));
    }
    Ok(36.3 + 37.6 * distance_m.log10())
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// How per-user minimum rate targets are assigned when drawing a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSpec {
    /// Every user gets the same minimum rate (bit/s/Hz).
    Fixed(f64),
    /// Each user independently draws a rate from {0.1, 0.2, ..., 1.0}.
    Random,
}

impl RateSpec {
    pub fn validate(&self) -> Result<()> {
        if let RateSpec::Fixed(r) = self {
            if !(r.is_finite() && *r > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "fixed min rate must be positive and finite, got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// One downlink interference channel instance, noise-normalized.
///
/// `gains[(i, j)]` is the power gain from BS `j` to UE `i`, divided by the
/// receiver noise power, so `noise_power` is 1 after generation. SINR targets
/// are stored directly (`gamma_min[i] = 2^rate - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: DMatrix<f64>,
    pub gamma_min: DVector<f64>,
    pub noise_power: f64,
    pub p_max: f64,
}

impl ChannelRealization {
    pub fn new(
        gains: DMatrix<f64>,
        gamma_min: DVector<f64>,
        noise_power: f64,
        p_max: f64,
    ) -> Result<Self> {
        let k = gains.nrows();
        if k == 0 || gains.ncols() != k {
            return Err(Error::InvalidArgument(format!(
                "gains must be square and non-empty, got {}x{}",
                gains.nrows(),
                gains.ncols()
            )));
        }
        if gamma_min.len() != k {
            return Err(Error::InvalidArgument(format!(
                "gamma_min length {} does not match {k} cells",
                gamma_min.len()
            )));
        }
        if gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::InvalidArgument(
                "gains must be finite and non-negative".into(),
            ));
        }
        if gamma_min.iter().any(|g| !g.is_finite() || *g <= 0.0) {
            return Err(Error::InvalidArgument(
                "SINR targets must be positive and finite".into(),
            ));
        }
        if !(noise_power.is_finite() && noise_power > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise power must be positive, got {noise_power}"
            )));
        }
        if !(p_max.is_finite() && p_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "p_max must be positive, got {p_max}"
            )));
        }
        Ok(Self { gains, gamma_min, noise_power, p_max })
    }

    pub fn k(&self) -> usize {
        self.gains.nrows()
    }
}

/// Hexagonal cell grid (pointy-top hexes of circumradius `cell_radius`),
/// one base station at each cell center. Cells are mutually adjacent for
/// the supported sizes (center plus first ring).
#[derive(Debug, Clone)]
pub struct NetworkLayout {
    pub cell_radius: f64,
    pub bs_positions: Vec<[f64; 2]>,
}

impl NetworkLayout {
    /// `cell_count` adjacent cells; supported range 2..=7.
    pub fn adjacent(cell_count: usize, cell_radius: f64) -> Result<Self> {
        if !(cell_radius.is_finite() && cell_radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cell radius must be positive, got {cell_radius}"
            )));
        }
        if !(2..=7).contains(&cell_count) {
            return Err(Error::InvalidArgument(format!(
                "cell count must be in 2..=7, got {cell_count}"
            )));
        }
        let r = cell_radius;
        let w = 3f64.sqrt() * r; // center-to-center spacing
        let ring = [
            [0.0, 0.0],
            [w, 0.0],
            [w / 2.0, 1.5 * r],
            [-w / 2.0, 1.5 * r],
            [-w, 0.0],
            [-w / 2.0, -1.5 * r],
            [w / 2.0, -1.5 * r],
        ];
        Ok(Self {
            cell_radius,
            bs_positions: ring[..cell_count].to_vec(),
        })
    }

    pub fn cell_count(&self) -> usize {
        self.bs_positions.len()
    }

    /// Point-in-hexagon test for cell `i` (pointy-top, circumradius R).
    pub fn contains(&self, i: usize, p: [f64; 2]) -> bool {
        let c = self.bs_positions[i];
        let dx = (p[0] - c[0]).abs();
        let dy = (p[1] - c[1]).abs();
        let r = self.cell_radius;
        let s3 = 3f64.sqrt();
        dx <= s3 * r / 2.0 + 1e-9 && s3 * dy + dx <= s3 * r + 1e-9
    }

    /// Uniform point in cell `i` by rejection from the bounding box.
    pub fn sample_point_in_cell<R: Rng>(&self, i: usize, rng: &mut R) -> [f64; 2] {
        let c = self.bs_positions[i];
        let r = self.cell_radius;
        let hw = 3f64.sqrt() * r / 2.0;
        loop {
            let p = [
                c[0] + rng.random_range(-hw..hw),
                c[1] + rng.random_range(-r..r),
            ];
            if self.contains(i, p) {
                return p;
            }
        }
    }
}

/// Half-open dominance window `[rho_min, rho_max)` in dB for the gap between
/// a UE's own-cell large-scale gain and its strongest cross-cell gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeRegion {
    pub rho_min_db: f64,
    pub rho_max_db: f64,
}

impl EdgeRegion {
    pub fn new(rho_min_db: f64, rho_max_db: f64) -> Result<Self> {
        if !(rho_min_db.is_finite() && rho_max_db.is_finite() && rho_min_db < rho_max_db) {
            return Err(Error::InvalidArgument(format!(
                "edge region needs rho_min < rho_max, got [{rho_min_db}, {rho_max_db})"
            )));
        }
        Ok(Self { rho_min_db, rho_max_db })
    }

    pub fn contains(&self, gap_db: f64) -> bool {
        gap_db >= self.rho_min_db && gap_db < self.rho_max_db
    }
}

/// Draw one UE per cell, rejecting until the large-scale dominance gap falls
/// in `region`. Returns UE positions and the large-scale gain matrix in dB
/// (`alpha_db[(i, j)]`: BS `j` to UE `i`, pathloss plus shadowing).
pub fn sample_ue_positions<R: Rng>(
    layout: &NetworkLayout,
    region: EdgeRegion,
    shadowing_std_db: f64,
    max_attempts_per_ue: u64,
    rng: &mut R,
) -> Result<(Vec<[f64; 2]>, DMatrix<f64>)> {
    let k = layout.cell_count();
    let shadow = Normal::new(0.0, shadowing_std_db)
        .map_err(|e| Error::InvalidArgument(format!("shadowing std: {e}")))?;
    let mut positions = vec![[0.0, 0.0]; k];
    let mut alpha_db = DMatrix::zeros(k, k);

    for i in 0..k {
        let mut attempts: u64 = 0;
        loop {
            attempts += 1;
            if attempts > max_attempts_per_ue {
                return Err(Error::RegionUnreachable { cell: i, attempts: attempts - 1 });
            }
            let pos = layout.sample_point_in_cell(i, rng);
            let mut row = vec![0.0; k];
            let mut ok = true;
            for (j, bs) in layout.bs_positions.iter().enumerate() {
                let d = ((pos[0] - bs[0]).powi(2) + (pos[1] - bs[1]).powi(2)).sqrt();
                if d < 1e-9 {
                    ok = false; // UE on top of a BS; redraw
                    break;
                }
                row[j] = -pathloss_db(d)? + shadow.sample(rng);
            }
            if !ok {
                continue;
            }
            let own = row[i];
            let best_cross = row
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            if region.contains(own - best_cross) {
                for j in 0..k {
                    alpha_db[(i, j)] = row[j];
                }
                positions[i] = pos;
                break;
            }
        }
    }
    Ok((positions, alpha_db))
}

/// Everything needed to draw one channel instance.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub cell_count: usize,
    pub cell_radius_m: f64,
    pub region: EdgeRegion,
    pub rate_spec: RateSpec,
    pub sigma2_dbm: f64,
    pub pmax_dbm: f64,
    pub shadowing_std_db: f64,
    pub max_place_attempts: u64,
}

impl ScenarioConfig {
    pub fn new(cell_count: usize, region: EdgeRegion, rate_spec: RateSpec) -> Self {
        Self {
            cell_count,
            cell_radius_m: 250.0,
            region,
            rate_spec,
            sigma2_dbm: -92.0,
            pmax_dbm: 46.0,
            shadowing_std_db: 8.0,
            max_place_attempts: 1_000_000,
        }
    }

    pub fn layout(&self) -> Result<NetworkLayout> {
        NetworkLayout::adjacent(self.cell_count, self.cell_radius_m)
    }

    /// Power budget in watts (noise normalization does not rescale powers).
    pub fn p_max_watts(&self) -> f64 {
        dbm_to_watts(self.pmax_dbm)
    }
}

/// Draw one noise-normalized channel instance: placement with the cell-edge
/// dominance window, i.i.d. log-normal shadowing per link, unit-mean Rayleigh
/// fading power per link, and per-user SINR targets from `rate_spec`.
pub fn sample_channel<R: Rng>(
    layout: &NetworkLayout,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<ChannelRealization> {
    cfg.rate_spec.validate()?;
    let k = layout.cell_count();
    let (_, alpha_db) = sample_ue_positions(
        layout,
        cfg.region,
        cfg.shadowing_std_db,
        cfg.max_place_attempts,
        rng,
    )?;
    let sigma2_w = dbm_to_watts(cfg.sigma2_dbm);
    let mut gains = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            // Rayleigh fading: |h|^2 ~ Exp(1); guard against an exact zero.
            let mut h2: f64 = Exp1.sample(rng);
            while h2 <= 0.0 {
                h2 = Exp1.sample(rng);
            }
            gains[(i, j)] = db_to_linear(alpha_db[(i, j)]) * h2 / sigma2_w;
        }
    }
    let gamma_min = DVector::from_fn(k, |_, _| {
        let rate = match cfg.rate_spec {
            RateSpec::Fixed(r) => r,
            RateSpec::Random => 0.1 * (rng.random_range(0..10u32) + 1) as f64,
        };
        2f64.powf(rate) - 1.0
    });
    ChannelRealization::new(gains, gamma_min, 1.0, cfg.p_max_watts())
}
