//! `srnet` — generate channel datasets, train power-control networks,
//! evaluate them against baselines, and inspect the feasibility projection.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad usage or bad input
//! arguments, 3 training divergence, 4 infeasible problem instance.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use srnet_core::geometry::backward::{
    jac_boundary_wrt_interior, jac_boundary_wrt_raw, jac_interior_wrt_distance,
    jac_scale_wrt_boundary,
};
use srnet_core::geometry::projection::segment_hit;
use srnet_core::harness::{bench_methods, evaluate, rows_to_csv, Method};
use srnet_core::scenario::dataset::{generate_dataset, Dataset, GenConfig};
use srnet_core::scenario::{ChannelRealization, EdgeRegion, RateSpec, ScenarioConfig};
use srnet_core::srnet::checkpoint::{load_checkpoint, save_checkpoint};
use srnet_core::srnet::train::{train, TrainConfig};
use srnet_core::srnet::Variant;
use srnet_core::{project_forward, ConstraintSet, Error, PowerControlNet, Result};

#[derive(Parser)]
#[command(
    name = "srnet",
    version,
    about = "Multicell downlink power control: data generation, training, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample cell-edge channel realizations and write them as CSV.
    Generate(GenArgs),
    /// Train a model on a generated dataset and save a JSON checkpoint.
    Train(TrainArgs),
    /// Compare methods on a test set: sum rate, satisfaction, timing.
    Eval(EvalArgs),
    /// Repeat-timing table for the same methods (median wall time).
    Bench(BenchArgs),
    /// Trace the feasibility projection on one instance, with Jacobians
    /// checked against finite differences.
    Project(ProjectArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of mutually interfering cells (2..=7).
    #[arg(long)]
    cells: usize,
    /// Lower edge of the dominance window in dB (inclusive).
    #[arg(long)]
    rho_min: f64,
    /// Upper edge of the dominance window in dB (exclusive).
    #[arg(long)]
    rho_max: f64,
    /// Per-user rate target in b/s/Hz: a number, or "random" for per-user
    /// draws from {0.1, 0.2, ..., 1.0}.
    #[arg(long)]
    rate: String,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Transmit power budget per cell in dBm.
    #[arg(long, default_value_t = 46.0)]
    pmax_dbm: f64,
    /// Receiver noise power in dBm.
    #[arg(long, default_value_t = -92.0)]
    sigma2_dbm: f64,
    /// Log-normal shadowing standard deviation in dB.
    #[arg(long, default_value_t = 8.0)]
    shadow_db: f64,
    /// Cell circumradius in meters.
    #[arg(long, default_value_t = 250.0)]
    radius_m: f64,
    /// Abort when the acceptance rate stays below this fraction.
    #[arg(long, default_value_t = 1e-4)]
    min_yield: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset CSV (from `srnet generate`).
    #[arg(long)]
    data: PathBuf,
    /// Model variant: srnet | srnet-heu | penalty-add | penalty-mul.
    #[arg(long)]
    variant: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint output path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Flat key=value config file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Optional per-step loss trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Test dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Model checkpoint(s); repeat the flag for several.
    #[arg(long = "model")]
    models: Vec<PathBuf>,
    /// Include the closed-form vertex baseline.
    #[arg(long)]
    p0: bool,
    /// Include multi-start local search with this many starts.
    #[arg(long)]
    local_opt: Option<usize>,
    /// Combine all loaded models into one best-of ensemble method.
    #[arg(long)]
    ensemble: bool,
    /// Let infeasible penalty-model outputs stand instead of substituting
    /// the vertex.
    #[arg(long)]
    no_fallback: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the aggregate JSON report here (also printed to stdout).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write one CSV row per (sample, method) here.
    #[arg(long)]
    per_sample: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "model")]
    models: Vec<PathBuf>,
    #[arg(long)]
    p0: bool,
    #[arg(long)]
    local_opt: Option<usize>,
    /// Unmeasured runs per (sample, method) before timing.
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    /// Measured runs per (sample, method); the median is reported.
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    /// Row-major channel gains, comma-separated (k*k values).
    #[arg(long, allow_hyphen_values = true)]
    gains: Option<String>,
    /// Per-user minimum SINRs (linear), comma-separated (k values).
    #[arg(long, allow_hyphen_values = true)]
    targets: Option<String>,
    /// Noise power for inline instances.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Power budget for inline instances.
    #[arg(long, default_value_t = 1.0)]
    pmax: f64,
    /// Dataset CSV to take the instance from (with --index).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Sample index into --data.
    #[arg(long)]
    index: Option<usize>,
    /// Raw power vector to project, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    phat: String,
    /// Per-hyperplane distances; defaults to half the feasible maximum.
    #[arg(long, allow_hyphen_values = true)]
    d: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Generate(a) => cmd_generate(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Project(a) => cmd_project(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InvalidArgument(_) | Error::Parse { .. } | Error::Schema(_) => 2,
                Error::Diverged { .. } => 3,
                Error::Infeasible(_) => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn parse_rate(text: &str) -> Result<RateSpec> {
    if text == "random" {
        return Ok(RateSpec::Random);
    }
    let r: f64 = text
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad rate {text:?}")))?;
    Ok(RateSpec::Fixed(r))
}

fn parse_vec(text: &str, what: &str) -> Result<DVector<f64>> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} entry {t:?}")))
        })
        .collect::<Result<_>>()?;
    if vals.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} is empty")));
    }
    Ok(DVector::from_vec(vals))
}

fn cmd_generate(a: GenArgs) -> Result<()> {
    let region = EdgeRegion::new(a.rho_min, a.rho_max)?;
    let mut scenario = ScenarioConfig::new(a.cells, region, parse_rate(&a.rate)?);
    scenario.pmax_dbm = a.pmax_dbm;
    scenario.sigma2_dbm = a.sigma2_dbm;
    scenario.shadowing_std_db = a.shadow_db;
    scenario.cell_radius_m = a.radius_m;
    let mut cfg = GenConfig::new(scenario, a.count, a.seed);
    cfg.min_yield = a.min_yield;
    let (ds, stats) = generate_dataset(&cfg)?;
    ds.save(&a.out)?;
    println!(
        "wrote {} samples to {} (attempts {}, acceptance {:.4}, infeasible {}, degenerate {})",
        ds.samples.len(),
        a.out.display(),
        stats.attempts,
        stats.acceptance(),
        stats.infeasible,
        stats.degenerate
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let variant = Variant::from_tag(&a.variant)?;
    let cfg = match &a.config {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::default(),
    };
    let out = train(&ds, variant, &cfg, a.seed)?;
    save_checkpoint(&out.net, &a.out)?;
    if let Some(trace_path) = &a.trace {
        let mut text = String::from("step,loss\n");
        for (i, l) in out.trace.losses.iter().enumerate() {
            text.push_str(&format!("{i},{l:.16e}\n"));
        }
        std::fs::write(trace_path, text)?;
    }
    let tail = &out.trace.losses[out.trace.losses.len().saturating_sub(10)..];
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    match out.selected_weight {
        Some(w) => println!(
            "saved {} ({} steps, final loss {tail_mean:.6}, penalty weight {w})",
            a.out.display(),
            out.trace.losses.len()
        ),
        None => println!(
            "saved {} ({} steps, final loss {tail_mean:.6})",
            a.out.display(),
            out.trace.losses.len()
        ),
    }
    Ok(())
}

/// Load checkpoints and assign each method a unique name from its variant.
fn load_models(paths: &[PathBuf]) -> Result<Vec<(String, PowerControlNet)>> {
    let mut out: Vec<(String, PowerControlNet)> = Vec::with_capacity(paths.len());
    for path in paths {
        let net = load_checkpoint(path)?;
        let base = net.variant.tag().to_string();
        let mut name = base.clone();
        let mut suffix = 2;
        while out.iter().any(|(n, _)| *n == name) {
            name = format!("{base}-{suffix}");
            suffix += 1;
        }
        out.push((name, net));
    }
    Ok(out)
}

fn build_methods(
    models: Vec<(String, PowerControlNet)>,
    p0: bool,
    local_opt: Option<usize>,
    ensemble: bool,
    fallback: bool,
    seed: u64,
) -> Result<Vec<Method>> {
    let mut methods = Vec::new();
    if p0 {
        methods.push(Method::P0);
    }
    if ensemble {
        if models.is_empty() {
            return Err(Error::InvalidArgument(
                "--ensemble needs at least one --model".into(),
            ));
        }
        let nets = models.iter().map(|(_, n)| n.clone()).collect();
        methods.push(Method::Ensemble { name: "ensemble".into(), nets });
    }
    for (name, net) in models {
        methods.push(Method::Net { name, net, fallback });
    }
    if let Some(starts) = local_opt {
        methods.push(Method::LocalOpt { name: "local-opt".into(), starts, seed });
    }
    if methods.is_empty() {
        return Err(Error::InvalidArgument(
            "nothing to run: pass --model, --p0, or --local-opt".into(),
        ));
    }
    Ok(methods)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let models = load_models(&a.models)?;
    let methods = build_methods(
        models,
        a.p0,
        a.local_opt,
        a.ensemble,
        !a.no_fallback,
        a.seed,
    )?;
    let (report, rows) = evaluate(&ds, &methods)?;
    let json = report.to_json()?;
    println!("{json}");
    if let Some(path) = &a.report {
        std::fs::write(path, &json)?;
    }
    if let Some(path) = &a.per_sample {
        std::fs::write(path, rows_to_csv(&rows))?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let models = load_models(&a.models)?;
    let methods = build_methods(models, a.p0, a.local_opt, false, true, a.seed)?;
    let table = bench_methods(&ds, &methods, a.warmup, a.repeats)?;
    let csv = table.to_csv();
    match &a.out {
        Some(path) => {
            std::fs::write(path, &csv)?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn print_vec(label: &str, v: &DVector<f64>) {
    let entries: Vec<String> = v.iter().map(|x| format!("{x:.12e}")).collect();
    println!("{label} = [{}]", entries.join(", "));
}

fn print_mat(label: &str, m: &DMatrix<f64>) {
    println!("{label} =");
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:+.9e}", m[(r, c)])).collect();
        println!("  [{}]", row.join(", "));
    }
}

/// Central-difference Jacobian of `f` (numerator layout: J[i][j] = d out_i /
/// d in_j).
fn fd_jacobian(
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
) -> DMatrix<f64> {
    let fx = f(x);
    let mut jac = DMatrix::zeros(fx.len(), x.len());
    for j in 0..x.len() {
        let h = 1e-7 * (1.0 + x[j].abs());
        let mut xp = x.clone();
        xp[j] += h;
        let mut xm = x.clone();
        xm[j] -= h;
        let df = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(j, &df);
    }
    jac
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn cmd_project(a: ProjectArgs) -> Result<()> {
    let ch = match (&a.gains, &a.targets, &a.data, a.index) {
        (Some(g), Some(t), None, None) => {
            let targets = parse_vec(t, "targets")?;
            let k = targets.len();
            let gains = parse_vec(g, "gains")?;
            if gains.len() != k * k {
                return Err(Error::InvalidArgument(format!(
                    "need {} gains for {k} cells, got {}",
                    k * k,
                    gains.len()
                )));
            }
            let gm = DMatrix::from_fn(k, k, |i, j| gains[i * k + j]);
            ChannelRealization::new(gm, targets, a.noise, a.pmax)?
        }
        (None, None, Some(path), Some(idx)) => {
            let ds = Dataset::load(path)?;
            ds.samples
                .get(idx)
                .cloned()
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "index {idx} out of range ({} samples)",
                        ds.samples.len()
                    ))
                })?
        }
        _ => {
            return Err(Error::InvalidArgument(
                "pass either --gains with --targets, or --data with --index".into(),
            ))
        }
    };

    let cs = ConstraintSet::build(&ch)?;
    let k = cs.k();
    print_vec("p0 (vertex)", cs.p0());
    println!("feasible = {}", cs.feasible());
    println!("d_max_star = {:.12e}", cs.d_max_star());
    if !cs.feasible() {
        return Err(Error::Infeasible(
            "no power vector under the budget meets every rate target".into(),
        ));
    }

    let p_hat = parse_vec(&a.phat, "phat")?;
    if p_hat.len() != k {
        return Err(Error::InvalidArgument(format!(
            "phat has {} entries, instance has {k} cells",
            p_hat.len()
        )));
    }
    let d = match &a.d {
        Some(text) => {
            let d = parse_vec(text, "d")?;
            if d.len() != k {
                return Err(Error::InvalidArgument(format!(
                    "d has {} entries, instance has {k} cells",
                    d.len()
                )));
            }
            d
        }
        None => DVector::from_element(k, cs.d_max_star() / 2.0),
    };

    let tape = project_forward(&cs, &p_hat, &d)?;
    print_vec("p_hat (raw input)", &tape.p_hat);
    print_vec("d (distances)", &tape.d);
    print_vec("p_C (interior point)", &tape.p_c);
    println!("eps_star = {:.12e}", tape.eps_star);
    println!(
        "active rows = {:?}, hit row = {:?}, feasible input = {}",
        tape.active, tape.k_eps, tape.feasible_input
    );
    print_vec("p_D (boundary point)", &tape.p_d);
    println!("k_max (scaled coordinate) = {}", tape.k_max);
    print_vec("p_E (output)", &tape.p_e);
    println!();

    // Forward-step closures for the finite-difference checks. Each one
    // recomputes the relevant stage from perturbed inputs.
    let interior = |dd: &DVector<f64>| cs.p0() + cs.dist_to_power() * dd;
    let boundary_from_raw = |ph: &DVector<f64>| {
        let hit = segment_hit(&cs, ph, &tape.p_c).expect("segment hit");
        ph + (&tape.p_c - ph) * hit.eps_star
    };
    let boundary_from_interior = |pc: &DVector<f64>| {
        let hit = segment_hit(&cs, &tape.p_hat, pc).expect("segment hit");
        &tape.p_hat + (pc - &tape.p_hat) * hit.eps_star
    };
    let scale = |pd: &DVector<f64>| {
        let mut kk = 0;
        for i in 1..pd.len() {
            if pd[i] > pd[kk] {
                kk = i;
            }
        }
        pd * (cs.p_max() / pd[kk])
    };
    let full = |x: &DVector<f64>| {
        let (ph, dd) = (x.rows(0, k).into_owned(), x.rows(k, k).into_owned());
        project_forward(&cs, &ph, &dd).expect("forward").p_e
    };

    let j_w = jac_interior_wrt_distance(&cs);
    print_mat("d(p_C)/d(d)  [analytic]", &j_w);
    println!(
        "  max |analytic - fd| = {:.3e}",
        max_abs_diff(&j_w, &fd_jacobian(&interior, &d))
    );

    let j_raw = jac_boundary_wrt_raw(&tape, &cs)?;
    print_mat("d(p_D)/d(p_hat)  [analytic]", &j_raw);
    println!(
        "  max |analytic - fd| = {:.3e}",
        max_abs_diff(&j_raw, &fd_jacobian(&boundary_from_raw, &p_hat))
    );

    let j_int = jac_boundary_wrt_interior(&tape, &cs)?;
    print_mat("d(p_D)/d(p_C)  [analytic]", &j_int);
    println!(
        "  max |analytic - fd| = {:.3e}",
        max_abs_diff(&j_int, &fd_jacobian(&boundary_from_interior, &tape.p_c))
    );

    let j_scale = jac_scale_wrt_boundary(&tape, &cs);
    print_mat("d(p_E)/d(p_D)  [analytic]", &j_scale);
    println!(
        "  max |analytic - fd| = {:.3e}",
        max_abs_diff(&j_scale, &fd_jacobian(&scale, &tape.p_d))
    );

    // End-to-end chain through every stage, checked against the whole
    // forward map at once.
    let j_e_phat = &j_scale * &j_raw;
    let j_e_d = &j_scale * &j_int * &j_w;
    let mut x = DVector::zeros(2 * k);
    x.rows_mut(0, k).copy_from(&p_hat);
    x.rows_mut(k, k).copy_from(&d);
    let j_full_fd = fd_jacobian(&full, &x);
    let mut j_full = DMatrix::zeros(k, 2 * k);
    j_full.view_mut((0, 0), (k, k)).copy_from(&j_e_phat);
    j_full.view_mut((0, k), (k, k)).copy_from(&j_e_d);
    print_mat("d(p_E)/d(p_hat)  [chained]", &j_e_phat);
    print_mat("d(p_E)/d(d)  [chained]", &j_e_d);
    println!(
        "  max |chained - fd| over both blocks = {:.3e}",
        max_abs_diff(&j_full, &j_full_fd)
    );
    Ok(())
}
