//! Command-line front end: run management, checkpoint evaluation, and the
//! CSV/SVG artifacts for sampling histograms and learning curves.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command as ProcessCommand;

use clap::{Args, Parser, Subcommand};

use crate::config::{Algo, RunConfig};
use crate::envs::{hard_env_params, EnvKind, EnvParams, RandomizationSpace, RangeMode};
use crate::error::{Error, Result};
use crate::metrics::{read_records, EvalEnv, EvalRecord, Record};
use crate::trainer::{evaluate_checkpoint, load_checkpoint, train};

#[derive(Parser)]
#[command(
    name = "ssadr",
    about = "Curriculum-learning laboratory: self-play goal curricula coupled with environment randomization curricula",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run under a selected regime.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint.
    Eval(EvalArgs),
    /// Histogram of sampled environment parameters from a metrics file.
    SampleHist(SampleHistArgs),
    /// Learning-curve table (mean and min/max envelope across runs).
    Plot(PlotArgs),
    /// Launch a grid of isolated training runs as child processes.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Config file (flat key-value document with sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed (mandatory; reruns with the same seed reproduce metrics
    /// byte for byte).
    #[arg(long)]
    seed: u64,
    /// Regime: ssadr, udr, unsup-default, adr-disc.
    #[arg(long)]
    algo: Option<String>,
    /// Environment: pusher, reacher.
    #[arg(long)]
    env: Option<String>,
    /// Total solver environment steps.
    #[arg(long)]
    timesteps: Option<u64>,
    #[arg(long)]
    eval_interval: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    /// Randomization range: calibrated or uncalibrated.
    #[arg(long)]
    range: Option<String>,
    /// Output root (CF_OUT environment variable overrides the config
    /// default; this flag overrides both).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra overrides as section.key=value (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint directory (contains manifest.json).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Expected environment; fails if it does not match the checkpoint.
    #[arg(long)]
    env: Option<String>,
    /// Parameter mode: "default", "hard", or explicit normalized
    /// coordinates like "0.5" / "0.1,0.9,...".
    #[arg(long, default_value = "default")]
    params: String,
    /// Evaluation trials.
    #[arg(long, default_value_t = 25)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_steps: u32,
    /// Randomization range used to resolve explicit coordinates.
    #[arg(long, default_value = "calibrated")]
    range: String,
}

#[derive(Args)]
struct SampleHistArgs {
    /// Metrics file of one training run.
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Trailing fraction of samples to histogram (1.0 = all).
    #[arg(long, default_value_t = 0.25)]
    window: f64,
    /// Randomized dimension to histogram.
    #[arg(long, default_value_t = 0)]
    dim: usize,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional SVG bar chart.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Metrics files (one per run; same environment kind).
    #[arg(required = true)]
    metrics: Vec<PathBuf>,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional SVG learning-curve chart.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated seeds, e.g. 0,1,2.
    #[arg(long)]
    seeds: String,
    /// Comma-separated regimes, e.g. ssadr,udr.
    #[arg(long, default_value = "ssadr")]
    algos: String,
    /// Parallel child processes.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    timesteps: Option<u64>,
    #[arg(long)]
    range: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra overrides forwarded to every child run.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

/// Parse arguments and dispatch; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::SampleHist(args) => cmd_sample_hist(args),
        Command::Plot(args) => cmd_plot(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn resolve_train_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Ok(root) = std::env::var("CF_OUT") {
        if !root.is_empty() {
            cfg.out_dir = PathBuf::from(root);
        }
    }
    cfg.seed = args.seed;
    if let Some(algo) = &args.algo {
        cfg.algo = Algo::parse(algo)?;
    }
    if let Some(env) = &args.env {
        cfg.env = EnvKind::parse(env)?;
    }
    if let Some(t) = args.timesteps {
        cfg.total_timesteps = t;
    }
    if let Some(i) = args.eval_interval {
        cfg.eval_interval = i;
    }
    if let Some(n) = args.eval_episodes {
        cfg.eval_episodes = n;
    }
    if let Some(range) = &args.range {
        cfg.range_mode = RangeMode::parse(range)?;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    for entry in &args.set {
        let (path, value) = entry.split_once('=').ok_or_else(|| {
            Error::Config(format!("bad --set '{entry}' (expected section.key=value)"))
        })?;
        let (section, key) = path.split_once('.').ok_or_else(|| {
            Error::Config(format!("bad --set key '{path}' (expected section.key)"))
        })?;
        cfg.apply_kv(section.trim(), key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = resolve_train_config(&args)?;
    let artifacts = train(&cfg)?;
    println!(
        "artifacts: {} (final default {:.4} m, hard {:.4} m)",
        artifacts.run_dir.display(),
        artifacts.final_default_distance,
        artifacts.final_hard_distance
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    if let Some(env) = &args.env {
        let requested = EnvKind::parse(env)?;
        if requested != ckpt.manifest.env {
            return Err(Error::Usage(format!(
                "checkpoint is for {} but --env {} was requested",
                ckpt.manifest.env.name(),
                requested.name()
            )));
        }
    }
    let kind = ckpt.manifest.env;
    let range = RangeMode::parse(&args.range)?;
    let space = RandomizationSpace::for_env(kind, range);
    let (params, eval_env, label) = match args.params.as_str() {
        "default" => (space.reference_physical(), EvalEnv::Default, "default".to_string()),
        "hard" => (hard_env_params(kind), EvalEnv::Hard, "hard".to_string()),
        explicit => {
            let values: Vec<f64> = explicit
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|e| {
                        Error::Usage(format!("bad parameter component '{v}': {e}"))
                    })
                })
                .collect::<Result<_>>()?;
            if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Usage(format!(
                    "explicit parameters must lie in [0, 1], got {values:?}"
                )));
            }
            if values.len() != kind.n_rand() {
                return Err(Error::Usage(format!(
                    "{} takes {} parameters, got {}",
                    kind.name(),
                    kind.n_rand(),
                    values.len()
                )));
            }
            let physical = space.denormalize(&EnvParams::new(values))?;
            (physical, EvalEnv::Explicit, explicit.to_string())
        }
    };
    let distances = evaluate_checkpoint(&ckpt, &params, args.max_steps, args.episodes, args.seed)?;
    let mean = distances.iter().sum::<f64>() / distances.len() as f64;
    let var = distances
        .iter()
        .map(|d| (d - mean) * (d - mean))
        .sum::<f64>()
        / distances.len() as f64;
    println!(
        "final distance: {:.4} ± {:.4} m (n={}, env={}, params={label})",
        mean,
        var.sqrt(),
        distances.len(),
        kind.name(),
    );

    let record = Record::Eval(EvalRecord {
        timestep: ckpt.manifest.bob_env_steps,
        mark: ckpt.manifest.bob_env_steps,
        eval_env,
        mean_final_distance: mean,
        distances,
        seed: args.seed,
        algo: ckpt.manifest.algo.clone(),
    });
    let eval_log = args.checkpoint.join("evals.jsonl");
    let line = serde_json::to_string(&record)
        .map_err(|e| Error::Usage(format!("unserializable record: {e}")))?;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&eval_log)
        .map_err(|e| Error::io(&eval_log, e))?;
    writeln!(file, "{line}").map_err(|e| Error::io(&eval_log, e))?;
    Ok(())
}

fn write_text_artifact(path: &Option<PathBuf>, body: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, body).map_err(|e| Error::io(p, e)),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn cmd_sample_hist(args: SampleHistArgs) -> Result<()> {
    if args.bins == 0 {
        return Err(Error::Usage("need at least one bin".into()));
    }
    if !(args.window > 0.0 && args.window <= 1.0) {
        return Err(Error::Usage(format!(
            "window must be in (0, 1], got {}",
            args.window
        )));
    }
    let records = read_records(&args.metrics)?;
    let (_, env, _, range) = crate::metrics::header_of(&records)?;
    let mut values = Vec::new();
    for record in &records {
        if let Record::Sample { physical, .. } = record {
            let v = physical.get(args.dim).ok_or_else(|| {
                Error::Usage(format!(
                    "dimension {} out of range for {}-dim samples",
                    args.dim,
                    physical.len()
                ))
            })?;
            values.push(*v);
        }
    }
    if values.is_empty() {
        return Err(Error::Usage(format!(
            "no sample records in {}",
            args.metrics.display()
        )));
    }
    let keep = ((values.len() as f64 * args.window).ceil() as usize).max(1);
    let tail = &values[values.len() - keep..];

    let space = RandomizationSpace::for_env(env, RangeMode::parse(&range)?);
    let lo = space.lower()[args.dim];
    let hi = space.upper()[args.dim];
    let width = (hi - lo) / args.bins as f64;
    let mut counts = vec![0usize; args.bins];
    for &v in tail {
        let idx = (((v - lo) / width) as usize).min(args.bins - 1);
        counts[idx] += 1;
    }

    let mut csv = String::from("bin_low,bin_high,count,fraction\n");
    for (i, &count) in counts.iter().enumerate() {
        let bin_lo = lo + i as f64 * width;
        let bin_hi = lo + (i + 1) as f64 * width;
        let fraction = count as f64 / tail.len() as f64;
        csv.push_str(&format!("{bin_lo},{bin_hi},{count},{fraction}\n"));
    }
    write_text_artifact(&args.out, &csv)?;

    if let Some(svg_path) = &args.svg {
        let fractions: Vec<f64> = counts
            .iter()
            .map(|&c| c as f64 / tail.len() as f64)
            .collect();
        let svg = render_histogram_svg(&fractions, lo, hi);
        std::fs::write(svg_path, svg).map_err(|e| Error::io(svg_path, e))?;
    }
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    // (algo, eval_env, mark) → per-seed means.
    let mut series: std::collections::BTreeMap<(String, String, u64), Vec<f64>> =
        std::collections::BTreeMap::new();
    let mut env_kind: Option<EnvKind> = None;
    for path in &args.metrics {
        let records = read_records(path)?;
        let (_, env, _, _) = crate::metrics::header_of(&records)?;
        match env_kind {
            None => env_kind = Some(env),
            Some(prev) if prev != env => {
                return Err(Error::Usage(format!(
                    "mixed environment kinds: {} vs {}",
                    prev.name(),
                    env.name()
                )))
            }
            _ => {}
        }
        for record in &records {
            if let Record::Eval(e) = record {
                let env_name = match e.eval_env {
                    EvalEnv::Default => "default",
                    EvalEnv::Hard => "hard",
                    EvalEnv::Explicit => continue,
                };
                series
                    .entry((e.algo.clone(), env_name.to_string(), e.mark))
                    .or_default()
                    .push(e.mean_final_distance);
            }
        }
    }
    if series.is_empty() {
        return Err(Error::Usage("no evaluation records found".into()));
    }
    let mut csv = String::from("algo,eval_env,timestep,mean_final_distance,min,max\n");
    for ((algo, eval_env, mark), means) in &series {
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        csv.push_str(&format!("{algo},{eval_env},{mark},{mean},{lo},{hi}\n"));
    }
    write_text_artifact(&args.out, &csv)?;

    if let Some(svg_path) = &args.svg {
        let svg = render_curves_svg(&series);
        std::fs::write(svg_path, svg).map_err(|e| Error::io(svg_path, e))?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let seeds: Vec<u64> = args
        .seeds
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|e| Error::Usage(format!("bad seed '{s}': {e}")))
        })
        .collect::<Result<_>>()?;
    let algos: Vec<String> = args.algos.split(',').map(|a| a.trim().to_string()).collect();
    for a in &algos {
        Algo::parse(a)?;
    }
    if seeds.is_empty() || algos.is_empty() {
        return Err(Error::Usage("sweep needs at least one seed and algo".into()));
    }
    let exe = std::env::current_exe().map_err(|e| Error::io("current_exe", e))?;

    let mut jobs: Vec<Vec<String>> = Vec::new();
    for algo in &algos {
        for &seed in &seeds {
            let mut cmd = vec![
                "train".to_string(),
                "--seed".to_string(),
                seed.to_string(),
                "--algo".to_string(),
                algo.clone(),
            ];
            if let Some(c) = &args.config {
                cmd.push("--config".into());
                cmd.push(c.display().to_string());
            }
            if let Some(env) = &args.env {
                cmd.push("--env".into());
                cmd.push(env.clone());
            }
            if let Some(t) = args.timesteps {
                cmd.push("--timesteps".into());
                cmd.push(t.to_string());
            }
            if let Some(r) = &args.range {
                cmd.push("--range".into());
                cmd.push(r.clone());
            }
            if let Some(o) = &args.out {
                cmd.push("--out".into());
                cmd.push(o.display().to_string());
            }
            for s in &args.set {
                cmd.push("--set".into());
                cmd.push(s.clone());
            }
            jobs.push(cmd);
        }
    }

    let parallel = args.jobs.max(1);
    let mut statuses: Vec<(String, i32)> = Vec::new();
    for chunk in jobs.chunks(parallel) {
        let mut children = Vec::new();
        for job in chunk {
            let label = format!("train --algo {} --seed {}", job[4], job[2]);
            let child = ProcessCommand::new(&exe)
                .args(job)
                .spawn()
                .map_err(|e| Error::io(&exe, e))?;
            children.push((label, child));
        }
        for (label, mut child) in children {
            let status = child.wait().map_err(|e| Error::io(&exe, e))?;
            let code = status.code().unwrap_or(1);
            println!("sweep: {label} -> exit {code}");
            statuses.push((label, code));
        }
    }
    let failures: Vec<&(String, i32)> = statuses.iter().filter(|(_, c)| *c != 0).collect();
    println!(
        "sweep finished: {}/{} runs succeeded",
        statuses.len() - failures.len(),
        statuses.len()
    );
    if let Some((label, code)) = failures.first() {
        return Err(match code {
            2 => Error::Usage(format!("child run failed: {label}")),
            3 => Error::Numeric(format!("child run failed: {label}")),
            _ => Error::Usage(format!("child run failed: {label}")),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Minimal SVG output (no external plotting).
// ---------------------------------------------------------------------------

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn render_histogram_svg(fractions: &[f64], lo: f64, hi: f64) -> String {
    let peak = fractions.iter().cloned().fold(0.0f64, f64::max).max(1e-9);
    let plot_w = SVG_W - 2.0 * MARGIN;
    let plot_h = SVG_H - 2.0 * MARGIN;
    let bar_w = plot_w / fractions.len() as f64;
    let mut bars = String::new();
    for (i, &f) in fractions.iter().enumerate() {
        let h = plot_h * f / peak;
        let x = MARGIN + i as f64 * bar_w;
        let y = SVG_H - MARGIN - h;
        bars.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#4878cf\" stroke=\"white\"/>\n",
            x, y, bar_w, h
        ));
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         {bars}\
         <line x1=\"{MARGIN}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <text x=\"{MARGIN}\" y=\"{label_y}\" font-size=\"12\">{lo:.3}</text>\n\
         <text x=\"{x1}\" y=\"{label_y}\" font-size=\"12\" text-anchor=\"end\">{hi:.3}</text>\n\
         <text x=\"{MARGIN}\" y=\"20\" font-size=\"12\">fraction of sampled environments per bin (peak {peak:.3})</text>\n\
         </svg>\n",
        y0 = SVG_H - MARGIN,
        x1 = SVG_W - MARGIN,
        label_y = SVG_H - MARGIN + 16.0,
    )
}

fn render_curves_svg(
    series: &std::collections::BTreeMap<(String, String, u64), Vec<f64>>,
) -> String {
    let palette = ["#4878cf", "#d65f5f", "#6acc65", "#956cb4", "#c4ad66"];
    // Collect per (algo, eval_env) polylines of (mark, mean).
    let mut curves: std::collections::BTreeMap<(String, String), Vec<(u64, f64)>> =
        std::collections::BTreeMap::new();
    for ((algo, eval_env, mark), means) in series {
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        curves
            .entry((algo.clone(), eval_env.clone()))
            .or_default()
            .push((*mark, mean));
    }
    let max_mark = series.keys().map(|(_, _, m)| *m).max().unwrap_or(1) as f64;
    let max_y = curves
        .values()
        .flat_map(|pts| pts.iter().map(|(_, y)| *y))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let plot_w = SVG_W - 2.0 * MARGIN;
    let plot_h = SVG_H - 2.0 * MARGIN;
    let mut body = String::new();
    for (idx, ((algo, eval_env), pts)) in curves.iter().enumerate() {
        let color = palette[idx % palette.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(m, y)| {
                format!(
                    "{:.1},{:.1}",
                    MARGIN + plot_w * (*m as f64) / max_mark,
                    SVG_H - MARGIN - plot_h * (y / max_y)
                )
            })
            .collect();
        body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            path.join(" ")
        ));
        body.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"{color}\">{algo}/{eval_env}</text>\n",
            MARGIN + 4.0,
            20.0 + idx as f64 * 14.0
        ));
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{MARGIN}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         {body}\
         <text x=\"{x1}\" y=\"{label_y}\" font-size=\"12\" text-anchor=\"end\">{max_mark:.0} steps</text>\n\
         <text x=\"{MARGIN}\" y=\"{label_y}\" font-size=\"12\">final distance (max {max_y:.3} m)</text>\n\
         </svg>\n",
        y0 = SVG_H - MARGIN,
        x1 = SVG_W - MARGIN,
        label_y = SVG_H - MARGIN + 16.0,
    )
}
