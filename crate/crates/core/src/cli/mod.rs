//! Command-line front end: `analyze`, `deflicker`, `synth` and `eval`.
//!
//! Exit codes: 0 on success, 1 when processing fails, 2 for usage errors and
//! missing inputs. A failed command removes the outputs it created.

mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{Config, THREADS_ENV};
use crate::error::Error;
use crate::flow::FlowParams;
use crate::image::{illumination_map, FrameSequence};
use crate::io::{is_y4m_path, read_frames, write_frames, write_mask_png};
use crate::metrics::{evaluate, EvalReport, WarpFlows};
use crate::pipeline::{deflicker_pipeline, FlowSource, PipelineReport};
use crate::priors::extract_priors;
use crate::synth::{build_corpus, read_manifest, ClipSource, FlickerSpec, MANIFEST_NAME};

use output::OutputGuard;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROCESSING: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ste-deflick", version, about = "Blind video deflickering")]
pub struct Cli {
    /// TOML configuration file. Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract priors: KL series, singular frames and exposure masks.
    Analyze(AnalyzeArgs),
    /// Remove flicker from a clip.
    Deflicker(DeflickerArgs),
    /// Build a flickering corpus from clean clips.
    Synth(SynthArgs),
    /// Score a result against ground truth, or a whole corpus.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Default)]
pub struct SteFlags {
    /// Stabilization window radius in frames.
    #[arg(long)]
    pub ste_radius: Option<usize>,
    /// Stabilization Gaussian scale.
    #[arg(long)]
    pub ste_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// PNG directory or .y4m file.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `masks/%06d.png` exposure masks.
    #[arg(long)]
    pub masks: bool,
    /// Also write per-frame original and smoothed histograms as CSV.
    #[arg(long)]
    pub histograms: bool,
    #[command(flatten)]
    pub ste: SteFlags,
}

#[derive(Debug, Args)]
pub struct DeflickerArgs {
    /// PNG directory or .y4m file.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// PNG directory or .y4m file.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub ste: SteFlags,
    /// Skip local repair of exposed regions.
    #[arg(long)]
    pub no_local: bool,
    /// Temporal blend strength in [0, 1); 0 disables it.
    #[arg(long)]
    pub blend_alpha: Option<f64>,
    /// Directory of `fwd_%06d.flo` / `bwd_%06d.flo` flows.
    #[arg(long)]
    pub flow_dir: Option<PathBuf>,
    /// Report path. Defaults to `report.json` next to the frames.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Clean clip directory; repeat for several clips.
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Corpus directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Global flicker window; repeat for several specs.
    #[arg(long = "w")]
    pub windows: Vec<usize>,
    /// Local flicker grid size; repeat for several specs.
    #[arg(long)]
    pub local: Vec<usize>,
    /// `standard` adds W1, W3, W10 and L3.
    #[arg(long, value_parser = ["standard"])]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Result frames.
    #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
    pub pred: Option<PathBuf>,
    /// Ground-truth frames.
    #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
    pub gt: Option<PathBuf>,
    /// Degraded frames, scored alongside for comparison.
    #[arg(long, conflicts_with = "corpus")]
    pub raw: Option<PathBuf>,
    /// Corpus manifest (or its directory) for batch mode.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Batch mode: results live in `<pred-root>/<clip>/<label>`.
    #[arg(long, requires = "corpus")]
    pub pred_root: Option<PathBuf>,
    /// Metrics report (JSON).
    #[arg(long)]
    pub report: PathBuf,
}

/// Failure of a command, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Processing(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(m) => CliError::Usage(m),
            other => CliError::Processing(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Processing(_) => EXIT_PROCESSING,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Processing(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse `args` and run; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => {
            if !p.is_file() {
                return Err(CliError::Usage(format!("config file {} not found", p.display())));
            }
            Config::load(p)?
        }
        None => Config::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let env = std::env::var(THREADS_ENV).ok();
    let threads = cfg.resolved_threads(env.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    pool.install(|| match cli.command {
        Command::Analyze(a) => cmd_analyze(&a, cfg),
        Command::Deflicker(a) => cmd_deflicker(&a, cfg),
        Command::Synth(a) => cmd_synth(&a, cfg),
        Command::Eval(a) => cmd_eval(&a, cfg),
    })
}

fn require_input(path: &Path) -> CliResult<()> {
    let ok = if is_y4m_path(path) { path.is_file() } else { path.is_dir() };
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input {} does not exist", path.display())))
    }
}

fn load(path: &Path) -> CliResult<FrameSequence> {
    require_input(path)?;
    Ok(read_frames(path)?)
}

fn apply_ste_flags(cfg: &mut Config, flags: &SteFlags) -> CliResult<()> {
    if let Some(r) = flags.ste_radius {
        cfg.ste.radius = r;
    }
    if let Some(s) = flags.ste_scale {
        cfg.ste.scale = s;
    }
    cfg.validate()?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(Error::from)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct FramePrior {
    index: usize,
    kl: f64,
    threshold: f64,
    flagged: bool,
    exposure_fraction: f64,
}

#[derive(Serialize)]
struct PriorsReport {
    input: PathBuf,
    frames: usize,
    width: usize,
    height: usize,
    parameters: Config,
    singular: Vec<usize>,
    per_frame: Vec<FramePrior>,
}

pub fn cmd_analyze(args: &AnalyzeArgs, mut cfg: Config) -> CliResult<()> {
    apply_ste_flags(&mut cfg, &args.ste)?;
    let seq = load(&args.input)?;
    let priors = extract_priors(&seq, &cfg.ste, &cfg.priors)?;
    let (w, h) = seq.dims();
    let per_frame: Vec<FramePrior> = (0..priors.len())
        .map(|t| FramePrior {
            index: t,
            kl: priors.kl_series[t],
            threshold: priors.thresholds[t],
            flagged: priors.is_singular(t),
            exposure_fraction: priors.exposure[t].fraction(),
        })
        .collect();
    let mut csv = String::from("frame,kl,threshold,flagged,exposure_fraction\n");
    for f in &per_frame {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            f.index, f.kl, f.threshold, f.flagged as u8, f.exposure_fraction
        ));
    }
    let report = PriorsReport {
        input: args.input.clone(),
        frames: seq.len(),
        width: w,
        height: h,
        parameters: cfg,
        singular: priors.singular.clone(),
        per_frame,
    };
    let json = to_json(&report)?;

    let mut out = OutputGuard::new();
    out.create_dir(&args.out)?;
    out.write(&args.out.join("priors.json"), json.as_bytes())?;
    out.write(&args.out.join("kl_series.csv"), csv.as_bytes())?;
    if args.masks {
        let dir = args.out.join("masks");
        out.create_dir(&dir)?;
        for (t, m) in priors.exposure.iter().enumerate() {
            let p = dir.join(crate::io::frame_file_name(t));
            out.track(&p);
            write_mask_png(m, &p)?;
        }
    }
    if args.histograms {
        let dir = args.out.join("histograms");
        out.create_dir(&dir)?;
        for t in 0..priors.len() {
            out.write(
                &dir.join(format!("original_{t:06}.csv")),
                priors.histograms[t].to_csv().as_bytes(),
            )?;
            out.write(
                &dir.join(format!("smoothed_{t:06}.csv")),
                priors.smoothed_histograms[t].to_csv().as_bytes(),
            )?;
        }
    }
    out.commit();
    Ok(())
}

pub fn cmd_deflicker(args: &DeflickerArgs, mut cfg: Config) -> CliResult<()> {
    if args.no_local {
        cfg.repair.enable_local = false;
    }
    if let Some(a) = args.blend_alpha {
        cfg.repair.temporal_blend_alpha = a;
    }
    apply_ste_flags(&mut cfg, &args.ste)?;
    let flow_dir = args.flow_dir.clone().or(cfg.flow_dir.clone());
    let source = match flow_dir {
        Some(d) if !d.is_dir() => {
            return Err(CliError::Usage(format!("flow directory {} does not exist", d.display())))
        }
        Some(d) => FlowSource::Imported(d),
        None => FlowSource::Internal,
    };
    let seq = load(&args.input)?;
    let result = deflicker_pipeline(&seq, &cfg.pipeline(), &source)?;
    let json = to_json(&result.report)?;
    let report_path = args.report.clone().unwrap_or_else(|| {
        if is_y4m_path(&args.out) {
            args.out.with_extension("report.json")
        } else {
            args.out.join("report.json")
        }
    });

    let mut out = OutputGuard::new();
    out.track(&args.out);
    write_frames(&result.frames, &args.out)?;
    out.write(&report_path, json.as_bytes())?;
    out.commit();
    print_summary(&result.report);
    Ok(())
}

fn print_summary(r: &PipelineReport) {
    eprintln!(
        "{} frames {}x{}: {} singular, {} repaired locally, {:.1} ms",
        r.frames,
        r.width,
        r.height,
        r.singular.len(),
        r.local_repaired.len(),
        r.timings.total_ms
    );
}

pub fn cmd_synth(args: &SynthArgs, cfg: Config) -> CliResult<()> {
    let base = FlickerSpec {
        seed: cfg.seed,
        ..cfg.synth
    };
    let mut specs: Vec<FlickerSpec> = Vec::new();
    if args.preset.is_some() {
        let w = |window, local| FlickerSpec {
            window,
            local_window: local,
            ..base
        };
        specs.extend([w(1, None), w(3, None), w(10, None), w(1, Some(3))]);
    }
    specs.extend(args.windows.iter().map(|&window| FlickerSpec {
        window,
        local_window: None,
        ..base
    }));
    specs.extend(args.local.iter().map(|&l| FlickerSpec {
        window: base.window,
        local_window: Some(l),
        ..base
    }));
    if specs.is_empty() {
        specs.push(base);
    }
    for s in &specs {
        s.validate()?;
    }
    let mut clips = Vec::new();
    for dir in &args.inputs {
        if !dir.is_dir() {
            return Err(CliError::Usage(format!("input {} does not exist", dir.display())));
        }
        clips.push(ClipSource::from_dir(dir));
    }
    let mut out = OutputGuard::new();
    out.track(&args.out);
    for c in &clips {
        out.track(&args.out.join(&c.name));
    }
    out.track(&args.out.join(MANIFEST_NAME));
    let manifest = build_corpus(&clips, &specs, &args.out)?;
    out.commit();
    eprintln!("{} degraded clips in {}", manifest.entries.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct SingleEval {
    pred: PathBuf,
    gt: PathBuf,
    raw: Option<PathBuf>,
    /// Flows for the warping error are estimated on the ground truth.
    flow_provenance: &'static str,
    flow_reference: &'static str,
    result: EvalReport,
    raw_result: Option<EvalReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TableRow {
    pub label: String,
    pub clips: usize,
    pub raw_psnr: f64,
    pub raw_ssim: f64,
    pub raw_e_warp: f64,
    pub pred_psnr: Option<f64>,
    pub pred_ssim: Option<f64>,
    pub pred_e_warp: Option<f64>,
}

#[derive(Serialize)]
struct BatchEval {
    corpus: PathBuf,
    pred_root: Option<PathBuf>,
    flow_provenance: &'static str,
    flow_reference: &'static str,
    rows: Vec<TableRow>,
}

fn score(pred: &FrameSequence, gt: &FrameSequence, flows: &WarpFlows, what: &str) -> CliResult<EvalReport> {
    if pred.len() != gt.len() {
        return Err(CliError::Processing(Error::InvalidData(format!(
            "{what}: {} frames but ground truth has {}",
            pred.len(),
            gt.len()
        ))));
    }
    if pred.dims() != gt.dims() {
        return Err(CliError::Processing(Error::InvalidData(format!(
            "{what}: frames are {:?} but ground truth is {:?}",
            pred.dims(),
            gt.dims()
        ))));
    }
    evaluate(pred.frames(), gt.frames(), flows).map_err(|e| match e {
        Error::InvalidParameter(m) => CliError::Processing(Error::InvalidData(format!("{what}: {m}"))),
        other => CliError::Processing(other),
    })
}

fn gt_flows(gt: &FrameSequence, params: &FlowParams) -> CliResult<WarpFlows> {
    let maps: Vec<_> = gt.frames().iter().map(illumination_map).collect();
    Ok(WarpFlows::estimate(&maps, params)?)
}

pub fn cmd_eval(args: &EvalArgs, cfg: Config) -> CliResult<()> {
    cfg.validate()?;
    let json = match &args.corpus {
        Some(c) => to_json(&eval_corpus(c, args.pred_root.as_deref(), &cfg)?)?,
        None => {
            let (pred_p, gt_p) = (args.pred.clone().unwrap(), args.gt.clone().unwrap());
            let pred = load(&pred_p)?;
            let gt = load(&gt_p)?;
            let raw = args.raw.as_deref().map(load).transpose()?;
            let flows = gt_flows(&gt, &cfg.flow)?;
            let result = score(&pred, &gt, &flows, &pred_p.display().to_string())?;
            let raw_result = match (&raw, &args.raw) {
                (Some(r), Some(p)) => Some(score(r, &gt, &flows, &p.display().to_string())?),
                _ => None,
            };
            to_json(&SingleEval {
                pred: pred_p,
                gt: gt_p,
                raw: args.raw.clone(),
                flow_provenance: "internal",
                flow_reference: "gt",
                result,
                raw_result,
            })?
        }
    };
    let mut out = OutputGuard::new();
    out.write(&args.report, json.as_bytes())?;
    out.commit();
    Ok(())
}

fn eval_corpus(corpus: &Path, pred_root: Option<&Path>, cfg: &Config) -> CliResult<BatchEval> {
    let manifest_path = if corpus.is_dir() {
        corpus.join(MANIFEST_NAME)
    } else {
        corpus.to_path_buf()
    };
    if !manifest_path.is_file() {
        return Err(CliError::Usage(format!("manifest {} not found", manifest_path.display())));
    }
    if let Some(r) = pred_root {
        if !r.is_dir() {
            return Err(CliError::Usage(format!("prediction root {} does not exist", r.display())));
        }
    }
    let manifest = read_manifest(&manifest_path)?;
    let mut labels: Vec<String> = Vec::new();
    for e in &manifest.entries {
        if !labels.contains(&e.label) {
            labels.push(e.label.clone());
        }
    }
    let mut gt_cache: Vec<(PathBuf, FrameSequence, WarpFlows)> = Vec::new();
    let mut sums: Vec<(usize, [f64; 3], [f64; 3])> = vec![(0, [0.0; 3], [0.0; 3]); labels.len()];
    for e in &manifest.entries {
        let slot = match gt_cache.iter().position(|(p, _, _)| *p == e.gt) {
            Some(i) => i,
            None => {
                let gt = load(&e.gt)?;
                let flows = gt_flows(&gt, &cfg.flow)?;
                gt_cache.push((e.gt.clone(), gt, flows));
                gt_cache.len() - 1
            }
        };
        let (_, gt, flows) = &gt_cache[slot];
        let name = format!("{}/{}", e.clip, e.label);
        let raw = score(&load(&e.degraded)?, gt, flows, &name)?;
        let li = labels.iter().position(|l| *l == e.label).unwrap();
        let row = &mut sums[li];
        row.0 += 1;
        row.1[0] += raw.aggregate.psnr_mean;
        row.1[1] += raw.aggregate.ssim_mean;
        row.1[2] += raw.aggregate.e_warp;
        if let Some(root) = pred_root {
            let dir = root.join(&e.clip).join(&e.label);
            let pred = score(&load(&dir)?, gt, flows, &name)?;
            row.2[0] += pred.aggregate.psnr_mean;
            row.2[1] += pred.aggregate.ssim_mean;
            row.2[2] += pred.aggregate.e_warp;
        }
    }
    let rows: Vec<TableRow> = labels
        .iter()
        .zip(&sums)
        .map(|(label, (n, raw, pred))| {
            let n_f = *n as f64;
            let p = |i: usize| pred_root.map(|_| pred[i] / n_f);
            TableRow {
                label: label.clone(),
                clips: *n,
                raw_psnr: raw[0] / n_f,
                raw_ssim: raw[1] / n_f,
                raw_e_warp: raw[2] / n_f,
                pred_psnr: p(0),
                pred_ssim: p(1),
                pred_e_warp: p(2),
            }
        })
        .collect();
    print_table(&rows);
    Ok(BatchEval {
        corpus: manifest_path,
        pred_root: pred_root.map(Path::to_path_buf),
        flow_provenance: "internal",
        flow_reference: "gt",
        rows,
    })
}

fn print_table(rows: &[TableRow]) {
    let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_owned(), |x| format!("{x:.prec$}"));
    println!("spec\tclips\traw_psnr\traw_ssim\traw_ewarp\tpsnr\tssim\tewarp");
    for r in rows {
        println!(
            "{}\t{}\t{:.3}\t{:.4}\t{:.4}\t{}\t{}\t{}",
            r.label,
            r.clips,
            r.raw_psnr,
            r.raw_ssim,
            r.raw_e_warp,
            opt(r.pred_psnr, 3),
            opt(r.pred_ssim, 4),
            opt(r.pred_e_warp, 4)
        );
    }
}
