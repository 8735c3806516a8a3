//! Command-line entry point: spectrum reports, single training runs,
//! width sweeps, NTK experiments, lemma checks, and report rendering.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ntklab::bounds::{
    abstract_bound, approximation_exponents, interpolation_gap, min_int, min_int_oracle,
    min_int_printed, min_sum_bound, ode_bound, ode_oracle, theorem_bound_1d, BoundInputs,
};
use ntklab::config::{Config, Manifest, OUT_ENV};
use ntklab::error::Result;
use ntklab::grid::{default_nodes, GridFunction};
use ntklab::network::ShallowNet;
use ntklab::ntk::{
    concentration_csv, concentration_experiment, log_log_slope, perturbation_csv,
    perturbation_sup_estimate, rank_one_bernstein_bench,
};
use ntklab::spectral::{
    apply_ntk_integral, eigenfunction_eval, ntk_eigenvalue, spectrum_report, spectrum_report_csv,
};
use ntklab::sweep::{
    estimate_rates, parse_runs_csv, rates_csv, runs_csv, weight_distance_rates, width_sweep,
    OptimizerKind, CI_WIDTHS,
};
use ntklab::targets::TargetSpec;
use ntklab::training::{
    adam_train, gradient_flow, parse_trajectory_csv, weight_distance_check, AdamConfig, FlowConfig,
    Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "ntklab", version, about = "NTK laboratory for shallow bias-trained ReLU networks")]
struct Cli {
    /// Worker threads for concurrent runs (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigen-system report and eigen-relation checks.
    Spectrum(SpectrumArgs),
    /// A single training run with checkpoint and trajectory output.
    Train(TrainArgs),
    /// Width sweep over (m, seed) pairs with rate tables.
    Sweep(SweepArgs),
    /// NTK concentration and perturbation experiments.
    NtkCheck(NtkCheckArgs),
    /// Every lemma evaluator against its numeric oracle.
    TheoryCheck(TheoryCheckArgs),
    /// Render SVG/CSV reports from a sweep output directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long, default_value_t = 64)]
    modes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    target: String,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "adam")]
    optimizer: String,
    #[arg(long)]
    train_signs: bool,
    /// Gradient-flow horizon.
    #[arg(long, default_value_t = 5.0)]
    horizon: f64,
    /// Adam iteration cap.
    #[arg(long, default_value_t = 50_000)]
    iterations: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    /// CI preset: widths up to 178, 5 seeds.
    #[arg(long)]
    ci: bool,
    /// Paper-scale preset: widths up to 1000, 100 seeds (multi-hour).
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NtkCheckArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 400, 1600, 6400])]
    widths: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 64)]
    truncation: usize,
    #[arg(long, default_value_t = 0.25)]
    smoothness: f64,
    #[arg(long, default_value_t = 50)]
    restarts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryCheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Sweep output directory containing runs.csv and traj/.
    #[arg(long)]
    dir: PathBuf,
}

fn output_root(flag: &Option<PathBuf>) -> PathBuf {
    if let Some(p) = flag {
        return p.clone();
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root),
        _ => PathBuf::from("out"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
            eprintln!("error: could not configure {workers} workers: {e}");
            return ExitCode::FAILURE;
        }
    }
    let outcome = match cli.command {
        Command::Spectrum(args) => cmd_spectrum(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::NtkCheck(args) => cmd_ntk_check(&args),
        Command::TheoryCheck(args) => cmd_theory_check(&args),
        Command::Report(args) => cmd_report(&args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_spectrum(args: &SpectrumArgs) -> Result<bool> {
    let root = output_root(&args.out);
    std::fs::create_dir_all(&root)?;
    let rows = spectrum_report(args.modes);
    std::fs::write(root.join("spectrum.csv"), spectrum_report_csv(&rows))?;

    let nodes = 20_001;
    let mut ok = true;
    let check = args.modes.min(33);
    let mut worst_ortho = 0.0f64;
    let mut worst_rel = 0.0f64;
    for k in 0..check {
        let phi = GridFunction::sample(nodes, |x| eigenfunction_eval(k, x))?;
        for j in 0..check {
            let psi = GridFunction::sample(nodes, |x| eigenfunction_eval(j, x))?;
            let delta = if j == k { 1.0 } else { 0.0 };
            worst_ortho = worst_ortho.max((phi.inner(&psi) - delta).abs());
        }
        let hphi = apply_ntk_integral(&phi);
        let lambda = ntk_eigenvalue(k);
        let scaled = GridFunction::from_values(phi.values().iter().map(|v| lambda * v).collect())?;
        worst_rel = worst_rel.max(hphi.sub(&scaled).l2_norm() / lambda);
    }
    ok &= report_line("eigen-orthonormality", worst_ortho <= 1e-6, &format!("max |<phi_j,phi_k>-delta| = {worst_ortho:.3e}"));
    ok &= report_line("eigen-relation", worst_rel <= 1e-4, &format!("max ||H phi - lambda phi||/lambda = {worst_rel:.3e}"));
    println!("wrote {}", root.join("spectrum.csv").display());
    Ok(ok)
}

fn cmd_train(args: &TrainArgs) -> Result<bool> {
    let target = TargetSpec::parse(&args.target)?;
    let optimizer = OptimizerKind::parse(&args.optimizer)?;
    let run_id = format!("{}-m{}-s{}", target.name(), args.m, args.seed);
    let root = output_root(&args.out).join("train").join(&run_id);
    std::fs::create_dir_all(&root)?;

    let (net, _) = ShallowNet::init(args.m, args.seed, args.train_signs)?;
    let grid = GridFunction::sample(default_nodes(args.m), |x| target.eval(x))?;
    let traj = match optimizer {
        OptimizerKind::Flow => {
            let cfg = FlowConfig::default_for_width(args.m, args.horizon);
            gradient_flow(&net, &grid, &cfg)?
        }
        OptimizerKind::Adam => {
            let cfg = AdamConfig {
                iterations: args.iterations,
                ..AdamConfig::default()
            };
            adam_train(&net, |x| target.eval(x), &grid, &cfg, args.seed)?
        }
    };
    std::fs::write(root.join("checkpoint.csv"), traj.final_net.to_checkpoint_csv(args.seed))?;
    std::fs::write(root.join("trajectory.csv"), traj.to_csv(&run_id))?;
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": "train",
        "target": target.name(),
        "m": args.m,
        "seed": args.seed,
        "optimizer": optimizer.name(),
        "train_signs": args.train_signs,
        "horizon": args.horizon,
        "iterations": args.iterations,
    });
    std::fs::write(root.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    let last = traj.final_record();
    println!(
        "{run_id}: steps {} final loss {:.6e} l2 error {:.6e} wdist {:.6e}",
        traj.steps_taken, last.loss, last.l2_err, last.wdist_inf
    );
    println!("wrote {}", root.display());
    Ok(true)
}

fn cmd_sweep(args: &SweepArgs) -> Result<bool> {
    let mut config = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::from_json(r#"{"target": "gaussian"}"#)?,
    };
    if let Some(t) = &args.target {
        config.target = TargetSpec::parse(t)?;
    }
    if args.ci {
        config.widths = CI_WIDTHS.to_vec();
        config.seeds = 5;
    }
    if args.paper_scale {
        config.widths = ntklab::sweep::DEFAULT_WIDTHS.to_vec();
        config.seeds = 100;
    }
    if let Some(out) = &args.out {
        config.output = out.clone();
    }
    let root = if args.out.is_some() {
        args.out.clone().unwrap()
    } else {
        config.output_root()
    };
    let sweep_cfg = config.to_sweep_config();
    sweep_cfg.validate()?;
    std::fs::create_dir_all(root.join("traj"))?;
    std::fs::create_dir_all(root.join("checkpoints"))?;

    std::fs::write(root.join("manifest.json"), Manifest::new(&config).to_json()?)?;
    let outcomes = width_sweep(config.target, &sweep_cfg)?;
    let records: Vec<_> = outcomes.iter().map(|o| o.record.clone()).collect();
    std::fs::write(root.join("runs.csv"), runs_csv(&records))?;
    for outcome in &outcomes {
        if let Some(traj) = &outcome.trajectory {
            let id = &outcome.record.run_id;
            std::fs::write(root.join("traj").join(format!("{id}.csv")), traj.to_csv(id))?;
            std::fs::write(
                root.join("checkpoints").join(format!("{id}.csv")),
                traj.final_net.to_checkpoint_csv(outcome.record.seed),
            )?;
        }
    }
    let mut rates = estimate_rates(&records);
    rates.extend(weight_distance_rates(&records));
    std::fs::write(root.join("rates.csv"), rates_csv(&rates))?;

    // gradient-flow sweeps must satisfy the weight-distance inequality
    let mut ok = true;
    if sweep_cfg.optimizer == OptimizerKind::Flow {
        let violations: usize = outcomes
            .iter()
            .filter_map(|o| o.trajectory.as_ref().map(|t| (o.record.m, t)))
            .map(|(m, t)| weight_distance_check(t, m).iter().filter(|r| !r.pass).count())
            .sum();
        ok &= report_line("weight-distance", violations == 0, &format!("{violations} violations"));
    }
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    println!(
        "sweep {}: {} runs, {failures} failures; wrote {}",
        config.target.name(),
        records.len(),
        root.display()
    );
    for row in &rates {
        if let Some(rate) = row.rate {
            println!("  rate[{}] m={} {}: {:.3}", row.rate_kind, row.m, row.target, rate);
        }
    }
    Ok(ok && failures == 0)
}

fn cmd_ntk_check(args: &NtkCheckArgs) -> Result<bool> {
    let root = output_root(&args.out);
    std::fs::create_dir_all(&root)?;
    let mut ok = true;

    let taus = [4.0, 8.0, 16.0];
    let reports = concentration_experiment(
        &args.widths,
        args.trials,
        args.truncation,
        args.smoothness,
        &taus,
        args.seed,
    )?;
    std::fs::write(root.join("concentration.csv"), concentration_csv(&reports, 8.0))?;
    let ms: Vec<f64> = reports.iter().map(|r| r.m as f64).collect();
    let medians: Vec<f64> = reports.iter().map(|r| r.median).collect();
    if ms.len() >= 2 {
        let slope = log_log_slope(&ms, &medians);
        ok &= report_line(
            "concentration-slope",
            (-0.65..=-0.35).contains(&slope),
            &format!("median ||H_theta - H|| ~ m^{slope:.3} (expect ~ m^-0.5)"),
        );
    }
    for rep in &reports {
        let row = rep.tau_rows.iter().find(|r| r.tau == 8.0).expect("tau 8 requested");
        let se = (row.tail_bound * (1.0 - row.tail_bound) / rep.trials as f64).sqrt();
        ok &= report_line(
            &format!("concentration-tail-m{}", rep.m),
            row.exceedance_frequency <= row.tail_bound + 3.0 * se.max(1.0 / rep.trials as f64),
            &format!("exceedance {:.4} vs bound {:.4}", row.exceedance_frequency, row.tail_bound),
        );
    }

    // perturbation scaling at m = 1000
    let (net, _) = ShallowNet::init(1000, args.seed, false)?;
    let hs = [0.002, 0.005, 0.01, 0.02, 0.05];
    let mut preports = Vec::new();
    for (i, &h) in hs.iter().enumerate() {
        preports.push(perturbation_sup_estimate(
            &net,
            h,
            args.smoothness,
            args.truncation,
            args.restarts,
            args.seed.wrapping_add(i as u64),
        )?);
    }
    std::fs::write(root.join("perturbation.csv"), perturbation_csv(&preports))?;
    let est: Vec<f64> = preports.iter().map(|r| r.estimate).collect();
    let slope = log_log_slope(&hs, &est);
    ok &= report_line(
        "perturbation-exponent",
        slope >= (1.0 - args.smoothness) - 0.15,
        &format!("sup-estimate ~ h^{slope:.3} (expect ~ h^{:.2})", 1.0 - args.smoothness),
    );

    let bench = rank_one_bernstein_bench(10_000, 1.0, 1.0, 16, 200, 6.0, args.seed)?;
    let se = (bench.tail_bound * (1.0 - bench.tail_bound) / bench.trials as f64).sqrt();
    ok &= report_line(
        "rank-one-bernstein",
        bench.exceedance_frequency <= bench.tail_bound + 3.0 * se.max(1.0 / bench.trials as f64),
        &format!(
            "exceedance {:.4} vs bound {:.4} at threshold {:.5}",
            bench.exceedance_frequency, bench.tail_bound, bench.threshold
        ),
    );
    println!("wrote {}", root.display());
    Ok(ok)
}

fn report_line(name: &str, pass: bool, detail: &str) -> bool {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn cmd_theory_check(args: &TheoryCheckArgs) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut ok = true;

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let alpha = rng.gen_range(-1.9..-1.05);
        let beta = rng.gen_range(-alpha - 0.95..-alpha + 1.5);
        let x = rng.gen_range(0.1..5.0);
        let exact = min_int(alpha, beta, x)?;
        let oracle = min_int_oracle(alpha, beta, x, 2000)?;
        worst = worst.max((oracle - exact).abs() / exact.abs());
    }
    ok &= report_line("min-int", worst <= 1e-6, &format!("max rel err vs oracle {worst:.3e}"));
    let printed = min_int_printed(-1.25, 0.5, 1.0)?;
    let oracle = min_int_oracle(-1.25, 0.5, 1.0, 2000)?;
    report_line(
        "min-int-printed-constant",
        false,
        &format!("printed value {printed:.4} vs oracle {oracle:.4} (known misprint, corrected form used)"),
    );

    let mut all_pass = true;
    for _ in 0..100 {
        let alpha = rng.gen_range(-1.45..-0.55);
        let x = rng.gen_range(0.02..8.0);
        all_pass &= min_sum_bound(alpha, x)?.pass;
    }
    ok &= report_line("min-sum", all_pass, "direct sum <= envelope on 100 draws");

    let mut min_gap = f64::INFINITY;
    for _ in 0..1000 {
        let len = rng.gen_range(1..32);
        let coeffs: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v = ntklab::spectral::SpectralFunction::new(coeffs)?;
        let s = rng.gen_range(0.0..1.0);
        let t = s + rng.gen_range(0.01..2.0);
        let r = rng.gen_range(s..t);
        min_gap = min_gap.min(interpolation_gap(&v, s, r, t)?);
    }
    ok &= report_line("interpolation", min_gap >= -1e-10, &format!("min gap {min_gap:.3e}"));

    let mut dominated = true;
    let mut windows = 0;
    for _ in 0..100 {
        let a = rng.gen_range(0.5..4.0);
        let b = rng.gen_range(0.05..0.5);
        let c = rng.gen_range(0.0..0.3);
        let rho = rng.gen_range(0.3..2.0);
        let x0 = rng.gen_range(0.5..4.0);
        let y0 = rng.gen_range(0.5..4.0);
        let bound = ode_bound(a, b, c, rho, x0, y0)?;
        let Some(t_win) = bound.t_window else { continue };
        let t_end = t_win.min(20.0);
        if t_end <= 0.0 {
            continue;
        }
        windows += 1;
        for (t, x, y) in ode_oracle(a, b, c, rho, x0, y0, t_end, 4000)? {
            dominated &= x <= bound.x_bound(t) * (1.0 + 1e-9) && y <= bound.gamma * (1.0 + 1e-9);
        }
    }
    ok &= report_line("ode-bounds", dominated && windows >= 20, &format!("dominates oracle on {windows} windows"));

    let (e, w) = approximation_exponents(0.4999999999)?;
    ok &= report_line(
        "exponents",
        (e - 1.0 / 24.0).abs() < 1e-8 && (w - 1.0 / 3.0).abs() < 1e-8,
        &format!("s -> 1/2 gives ({e:.6}, {w:.6})"),
    );

    let mut agree = true;
    for _ in 0..50 {
        let s = rng.gen_range(0.05..0.45);
        let n0 = rng.gen_range(0.1..2.0);
        let mut inputs = BoundInputs::new(s, rng.gen_range(10..100_000), n0, n0 * rng.gen_range(1.0..4.0))?;
        inputs.alpha = 1.0 - s;
        let a = abstract_bound(&inputs)?;
        let b = theorem_bound_1d(&inputs)?;
        for t in [0.0, 1.0, 37.5] {
            agree &= (a.bound(t) - b.bound(t)).abs() <= 1e-12 * b.bound(t).max(1.0);
        }
    }
    ok &= report_line("abstract-vs-1d", agree, "alpha = 1 - s reproduces the 1d theorem");

    Ok(ok)
}

fn cmd_report(args: &ReportArgs) -> Result<bool> {
    let runs_path = args.dir.join("runs.csv");
    let records = parse_runs_csv(&std::fs::read_to_string(&runs_path)?)?;
    let mut trajectories: Vec<(String, Trajectory)> = Vec::new();
    let traj_dir = args.dir.join("traj");
    if traj_dir.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&traj_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        paths.sort();
        for path in paths {
            for (run_id, records) in parse_trajectory_csv(&std::fs::read_to_string(&path)?)? {
                let Some(net) = load_checkpoint(&args.dir, &run_id) else {
                    continue;
                };
                let initial_biases = net.biases.clone();
                let steps = records.len().saturating_sub(1);
                trajectories.push((
                    run_id,
                    Trajectory {
                        records,
                        final_net: net,
                        initial_biases,
                        max_grad_inf: 0.0,
                        final_dt: 0.0,
                        steps_taken: steps,
                    },
                ));
            }
        }
    }
    let out = ntklab::report::render_report(&records, &trajectories, &args.dir.join("report"))?;
    for warning in &out.warnings {
        eprintln!("warning: {warning}");
    }
    for file in &out.files {
        println!("wrote {}", file.display());
    }
    Ok(true)
}

fn load_checkpoint(dir: &Path, run_id: &str) -> Option<ShallowNet> {
    let path = dir.join("checkpoints").join(format!("{run_id}.csv"));
    let text = std::fs::read_to_string(path).ok()?;
    ShallowNet::from_checkpoint_csv(&text).ok().map(|(net, _)| net)
}
