use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use uncerseg::codec::{encode_binary_png, encode_uncertainty_png, read_binary_mask, read_gray_image, write_file};
use uncerseg::harness::*;
use uncerseg::*;

#[derive(Parser)]
#[command(name = "uncerseg", version, about = "Uncertainty-guided prompt refinement for promptable segmenters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refine one image from an initial box and write the mask, uncertainty maps and trace.
    Refine(RefineArgs),
    /// Evaluate a dataset under one or more prompt settings.
    Eval(EvalArgs),
    /// Repeat an evaluation over several point budgets.
    Sweep(SweepArgs),
    /// Write a seeded synthetic image/mask corpus with its manifest.
    Gen(GenArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Oracle,
    Remote,
}

#[derive(Args)]
struct BackendArgs {
    /// Segmentation backend. The oracle needs ground truth.
    #[arg(long, value_enum, default_value_t = BackendKind::Oracle)]
    backend: BackendKind,
    /// Base URL of a remote segmentation service.
    #[arg(long, env = "UNCERSEG_ENDPOINT")]
    endpoint: Option<String>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Boxes per jittered prompt set.
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Jitter standard deviation as a fraction of box side.
    #[arg(long, default_value_t = 0.05)]
    sigma_frac: f64,
    /// Most uncertain points added to the refined prompt.
    #[arg(long, default_value_t = 10)]
    points_k: usize,
    /// Uncertainty region threshold as a fraction of the map maximum.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Minimum Chebyshev distance between selected points, in pixels.
    #[arg(long, default_value_t = 5)]
    min_separation: usize,
    /// Refinement rounds; stops at the first rejected round.
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ConfigArgs {
    fn to_config(&self) -> RefineConfig {
        RefineConfig {
            n_boxes: self.n,
            sigma_frac: self.sigma_frac,
            k_points: self.points_k,
            tau: self.tau,
            min_point_separation: self.min_separation,
            rounds: self.rounds,
            seed: self.seed,
            ..RefineConfig::default()
        }
    }
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    image: PathBuf,
    /// Ground-truth mask; required by the oracle, optional for scoring otherwise.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Initial box as x0,y0,x1,y1 in pixel coordinates.
    #[arg(long = "box", value_name = "X0,Y0,X1,Y1", value_parser = parse_box)]
    bbox: BBox,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Dataset manifest JSON.
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated prompt settings such as 3B:0.5 or 10P&3B:0.75.
    #[arg(long, value_delimiter = ',', required = true)]
    settings: Vec<PromptSetting>,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// CSV output path; the JSON report goes next to it unless --json is given.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Record per-row wall time (makes the CSV run-dependent).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Point budgets to compare; overrides --points-k.
    #[arg(long, value_delimiter = ',', default_value = "0,3,5,10")]
    k_list: Vec<usize>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Frame size as WIDTHxHEIGHT.
    #[arg(long, default_value = "128x128", value_parser = parse_dims)]
    size: Dims,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_box(s: &str) -> std::result::Result<BBox, String> {
    s.parse::<BBox>().map_err(|e| e.to_string())
}

fn parse_dims(s: &str) -> std::result::Result<Dims, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("'{s}' is not WIDTHxHEIGHT"))?;
    let w: usize = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    let h: usize = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    if w == 0 || h == 0 {
        return Err("dimensions must be positive".into());
    }
    Ok(Dims::new(w, h))
}

fn exit_code(err: &Error) -> u8 {
    if err.is_backend() || matches!(err, Error::RunFailed { .. }) {
        3
    } else if err.is_io() {
        4
    } else {
        2
    }
}

fn remote_backend(args: &BackendArgs) -> Result<RemoteSegmenter> {
    let endpoint = args
        .endpoint
        .clone()
        .ok_or_else(|| Error::Domain("--backend remote needs --endpoint or UNCERSEG_ENDPOINT".into()))?;
    let seg = RemoteSegmenter::new(RemoteConfig::new(endpoint))?;
    seg.health()?;
    Ok(seg)
}

fn score(label: &str, mask: &ProbMask, gt: &BinaryMask, t: f64) -> Result<()> {
    let pred = threshold_mask(mask, t)?;
    println!("{label}: dice {:.4} iou {:.4}", dice(&pred, gt)?, iou(&pred, gt)?);
    Ok(())
}

fn cmd_refine(args: &RefineArgs) -> Result<()> {
    let cfg = args.config.to_config();
    let image = read_gray_image(&args.image)?;
    let dims = Dims::new(image.width() as usize, image.height() as usize);
    if !args.bbox.is_within(dims) {
        return Err(Error::Domain(format!("--box lies outside the {}x{} image", dims.width, dims.height)));
    }
    let gt = args.gt.as_deref().map(read_binary_mask).transpose()?;
    let backend: Box<dyn Segmenter> = match args.backend.backend {
        BackendKind::Oracle => {
            let gt = gt.clone().ok_or_else(|| Error::Domain("--backend oracle requires --gt".into()))?;
            Box::new(OracleSegmenter::new(gt, OracleParams::default())?)
        }
        BackendKind::Remote => Box::new(remote_backend(&args.backend)?),
    };
    let mut outcome = refine_segmentation(&image, &args.bbox, &[], &cfg, &backend)?;

    let out = &args.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    let final_mask = threshold_mask(&outcome.mask, cfg.binarize_threshold)?;
    write_file(&out.join("final_mask.png"), &encode_binary_png(&final_mask)?)?;
    write_file(&out.join("initial_uncertainty.png"), &encode_uncertainty_png(&outcome.baseline.uncertainty)?)?;
    write_file(&out.join("final_uncertainty.png"), &encode_uncertainty_png(&outcome.uncertainty)?)?;
    let trace = &mut outcome.trace;
    if let Some(first) = trace.rounds.first_mut() {
        first.mask_ref = Some("initial_uncertainty.png".into());
    }
    if let FinalSource::Refined { round } = trace.final_source {
        trace.rounds[round].refined_mask_ref = Some("final_uncertainty.png".into());
    }
    write_file(&out.join("trace.json"), serde_json::to_string_pretty(trace)?.as_bytes())?;

    println!(
        "accepted: {}  uncertainty {:.6} -> {:.6}  backend calls: {}",
        outcome.accepted(),
        outcome.baseline.scalar_u,
        outcome.trace.final_scalar_u,
        outcome.trace.backend_calls
    );
    if let Some(gt) = &gt {
        score("before", &outcome.baseline.mean_mask, gt, cfg.binarize_threshold)?;
        score("after", &outcome.mask, gt, cfg.binarize_threshold)?;
    }
    Ok(())
}

fn evaluate(args: &RunArgs, cfg: &RefineConfig) -> Result<Vec<EvalRecord>> {
    let dataset = load_dataset(&args.manifest)?;
    let options = EvalOptions { workers: args.workers, record_timing: args.timing };
    match args.backend.backend {
        BackendKind::Oracle => run_eval(
            &dataset,
            &args.settings,
            cfg,
            |s: &Sample| OracleSegmenter::new(s.gt.clone(), OracleParams::default()),
            options,
        ),
        BackendKind::Remote => {
            let seg = remote_backend(&args.backend)?;
            run_eval(&dataset, &args.settings, cfg, |_: &Sample| Ok(&seg), options)
        }
    }
}

fn write_reports(args: &RunArgs, records: &[EvalRecord]) -> Result<SweepReport> {
    let rep = report(records)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    }
    write_file(&args.out, &records_to_csv(records)?)?;
    let json_path = args.json.clone().unwrap_or_else(|| args.out.with_extension("json"));
    write_file(&json_path, report_to_json(&rep, records)?.as_bytes())?;
    Ok(rep)
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let records = evaluate(&args.run, &args.run.config.to_config())?;
    let rep = write_reports(&args.run, &records)?;
    print!("{}", rep.table());
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    if args.k_list.is_empty() {
        return Err(Error::Domain("--k-list is empty".into()));
    }
    let base = args.run.config.to_config();
    let mut records = Vec::new();
    for &k in &args.k_list {
        let cfg = RefineConfig { k_points: k, ..base.clone() };
        for mut rec in evaluate(&args.run, &cfg)? {
            rec.setting = format!("{} k={k}", rec.setting);
            records.push(rec);
        }
    }
    let rep = write_reports(&args.run, &records)?;
    print!("{}", rep.table());
    for setting in &args.run.settings {
        let label = setting.label();
        let means: Vec<f64> = args
            .k_list
            .iter()
            .filter_map(|k| rep.rows.iter().find(|r| r.setting == format!("{label} k={k}")))
            .map(|r| r.dice_after.mean)
            .collect();
        let rising = means.windows(2).all(|w| w[1] - w[0] >= -0.005);
        let series: Vec<String> = means.iter().map(|m| format!("{m:.4}")).collect();
        println!(
            "trend {label}: {} [{}]",
            if rising { "non-decreasing" } else { "NOT non-decreasing" },
            series.join(" -> ")
        );
    }
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let manifest = gen_synthetic(args.count, args.seed, args.size, &args.out_dir)?;
    println!("{}", Path::new(&args.out_dir).join("manifest.json").display());
    println!("{} entries", manifest.entries.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Refine(a) => cmd_refine(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
