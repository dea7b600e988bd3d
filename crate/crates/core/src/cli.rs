//! Command-line surface: `synth`, `optimize`, `eval` and `gradcheck`.
//!
//! Exit codes are 0 on success, 1 for user errors (bad flags, missing or
//! malformed files) and 2 for numerical failures (divergence, failed
//! gradient checks).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use crate::diagnostics::{loss_stack_gradcheck, LossTerm};
use crate::eval::{
    depth_metrics, intrinsic_error, mean_metrics, median_scale, pose_errors, accumulate_trajectory, DepthMetrics,
    NormBounds, PoseErrors, DEFAULT_CAP,
};
use crate::io::{
    read_intrinsics, read_json, read_pfm, read_poses, read_ppm, write_intrinsics, write_json, write_pfm, write_poses,
    write_ppm, ExperimentConfig,
};
use crate::optim::{recover_sequence, sequence_motions, Ablation, SolveStatus, TraceRow};
use crate::scenes::make_sequence;
use crate::{Error, Intrinsics, Result, Tensor};

#[derive(Debug, Parser)]
#[command(name = "diffsfm", version, about = "Differentiable structure-from-motion on synthetic scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic sequence with ground-truth depth, poses and intrinsics.
    Synth(SynthArgs),
    /// Recover depth, ego-motion and (optionally) intrinsics from a sequence.
    Optimize(OptimizeArgs),
    /// Score recovered depth and poses against ground truth.
    Eval(EvalArgs),
    /// Verify analytic gradients of the loss stack by finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FrameFormat {
    Ppm,
    Pfm,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Image format of the rendered frames.
    #[arg(long, value_enum, default_value = "ppm")]
    pub format: FrameFormat,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory written by `synth` (or laid out the same way).
    #[arg(long)]
    pub data: PathBuf,
    /// baseline (intrinsics frozen at the data directory's intrinsics.json),
    /// camera (intrinsics optimized) or camera+costvolume (plus cost-volume
    /// depth consistency).
    #[arg(long, default_value = "camera+costvolume", value_parser = ["baseline", "camera", "camera+costvolume"])]
    pub ablation: String,
    /// Overrides optimizer.steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Overrides optimizer.lr.
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Prediction directories; repeat to compare several runs.
    #[arg(long, required = true, num_args = 1..)]
    pub pred: Vec<PathBuf>,
    /// Ground-truth directory.
    #[arg(long)]
    pub gt: PathBuf,
    /// Depth cap, in millimeters when `--mm-scale` is given.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    pub cap: f64,
    /// Millimeters per scene unit.
    #[arg(long, default_value_t = 1.0)]
    pub mm_scale: f64,
    /// JSON file with rotation/position normalization bounds.
    #[arg(long)]
    pub norm_bounds: Option<PathBuf>,
    /// Fit the scale of predicted trajectories before comparing them.
    #[arg(long)]
    pub align_scale: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Restrict the check to one term: all, data, rs, ax, es, consistency.
    #[arg(long, default_value = "all")]
    pub term: String,
}

/// Parses `args` (program name first), runs the command and maps the outcome
/// to an exit code, printing errors to stderr.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Optimize(a) => optimize(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn output_dir(common: &Common, config: &ExperimentConfig) -> Result<PathBuf> {
    let dir = common
        .output
        .clone()
        .or_else(|| config.output.clone())
        .ok_or_else(|| Error::Usage("no output directory: pass --output or set `output` in the config".into()))?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn frame_name(k: usize) -> String {
    format!("frame_{k:03}")
}

fn depth_name(k: usize) -> String {
    format!("depth_{k:03}.pfm")
}

fn synth(args: &SynthArgs) -> Result<()> {
    let mut config = load_config(args.common.config.as_deref())?;
    if let Some(seed) = args.common.seed {
        config.scene.texture.seed = seed;
    }
    let out = output_dir(&args.common, &config)?;
    let trajectory = config.trajectory.poses();
    let intr = config.intrinsics.ground_truth;
    let seq = make_sequence(&config.scene, &trajectory, &intr, config.grid)?;
    for (k, (frame, depth)) in seq.frames.iter().zip(&seq.depths).enumerate() {
        match args.format {
            FrameFormat::Ppm => write_ppm(&out.join(format!("{}.ppm", frame_name(k))), frame)?,
            FrameFormat::Pfm => write_pfm(&out.join(format!("{}.pfm", frame_name(k))), frame)?,
        }
        write_pfm(&out.join(depth_name(k)), depth)?;
    }
    write_poses(&out.join("poses.csv"), &seq.relative)?;
    write_intrinsics(&out.join("intrinsics.json"), &intr)?;
    let mut effective = config.clone();
    effective.output = None;
    write_json(&out.join("config.json"), &effective)?;
    info!("wrote {} frames to {}", seq.frames.len(), out.display());
    Ok(())
}

/// Frames `frame_000`, `frame_001`, ... in PFM or PPM, stopping at the first
/// missing index.
fn read_frames(dir: &Path) -> Result<Vec<Tensor>> {
    if !dir.is_dir() {
        return Err(Error::Usage(format!("data directory {} does not exist", dir.display())));
    }
    let mut frames = Vec::new();
    loop {
        let stem = frame_name(frames.len());
        let pfm = dir.join(format!("{stem}.pfm"));
        let ppm = dir.join(format!("{stem}.ppm"));
        let frame = if pfm.exists() {
            let t = read_pfm(&pfm)?;
            if t.ndim() == 2 {
                t.reshape(&[t.height(), t.width(), 1])?
            } else {
                t
            }
        } else if ppm.exists() {
            read_ppm(&ppm)?
        } else {
            break;
        };
        if let Some(first) = frames.first() {
            let first: &Tensor = first;
            if first.shape() != frame.shape() {
                return Err(Error::format(
                    dir.join(&stem),
                    format!("frame shape {:?} differs from {:?}", frame.shape(), first.shape()),
                ));
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

fn optimize(args: &OptimizeArgs) -> Result<()> {
    let config_path = args.common.config.clone().or_else(|| {
        let p = args.data.join("config.json");
        p.exists().then_some(p)
    });
    let mut config = load_config(config_path.as_deref())?;
    if let Some(seed) = args.common.seed {
        config.optimizer.seed = seed;
    }
    if let Some(steps) = args.steps {
        config.optimizer.steps = steps;
    }
    if let Some(lr) = args.lr {
        config.optimizer.lr = lr;
    }
    config.validate()?;
    let out = output_dir(&args.common, &config)?;
    let frames = read_frames(&args.data)?;
    if frames.len() < 3 {
        return Err(Error::Usage(format!(
            "{}: found {} frames (frame_000.ppm/.pfm, ...), need at least 3",
            args.data.display(),
            frames.len()
        )));
    }

    let ablation: Ablation = args.ablation.parse()?;
    let given = match ablation {
        Ablation::Baseline => read_intrinsics(&args.data.join("intrinsics.json"))?,
        _ => config.intrinsics.init,
    };
    let problem = config.sequence_problem(frames, ablation, given)?;
    let result = recover_sequence(&problem, &config.optimizer.solve_options())?;
    for w in &result.warnings {
        warn!("{w}");
    }

    for (k, depth) in result.depths.iter().enumerate() {
        write_pfm(&out.join(depth_name(k + 1)), depth)?;
    }
    write_poses(&out.join("poses.csv"), &sequence_motions(&result))?;
    write_intrinsics(&out.join("intrinsics.json"), &result.intrinsics)?;
    write_trace(&out.join("trace.csv"), &result.trace)?;
    write_json(
        &out.join("summary.json"),
        &Summary {
            ablation,
            status: result.status,
            steps: result.trace.last().map_or(0, |r| r.step),
            final_objective: result.final_objective(),
            warnings: result.warnings.clone(),
        },
    )?;
    info!(
        "{:?} after {} steps, objective {:.6e}",
        result.status,
        result.trace.last().map_or(0, |r| r.step),
        result.final_objective()
    );
    Ok(())
}

#[derive(Serialize)]
struct Summary {
    ablation: Ablation,
    status: SolveStatus,
    steps: usize,
    final_objective: f64,
    warnings: Vec<String>,
}

pub const TRACE_HEADER: [&str; 11] = [
    "step",
    "lr",
    "data",
    "residual_smoothness",
    "auxiliary",
    "edge_smoothness",
    "consistency",
    "total",
    "penalty",
    "objective",
    "grad_norm",
];

fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in trace {
        let b = &r.breakdown;
        let values = [
            b.data,
            b.residual_smoothness,
            b.auxiliary,
            b.edge_smoothness,
            b.consistency,
            b.total,
            r.penalty,
            r.objective,
            r.grad_norm,
        ];
        let mut record = vec![r.step.to_string(), r.lr.to_string()];
        record.extend(values.iter().map(f64::to_string));
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct FrameMetrics {
    frame: String,
    #[serde(flatten)]
    metrics: DepthMetrics,
}

#[derive(Serialize)]
struct IntrinsicsReport {
    predicted: Intrinsics,
    ground_truth: Intrinsics,
    /// `|pred - gt|` for `(fx, fy, cx, cy)`.
    error: [f64; 4],
}

#[derive(Serialize)]
struct RunReport {
    name: String,
    dir: PathBuf,
    frames: Vec<FrameMetrics>,
    mean: DepthMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pose: Option<PoseErrors>,
    #[serde(skip_serializing_if = "Option::is_none")]
    intrinsics: Option<IntrinsicsReport>,
}

#[derive(Serialize)]
struct EvalReport {
    cap: f64,
    mm_scale: f64,
    norm_bounds: NormBounds,
    runs: Vec<RunReport>,
}

/// `depth_XXX.pfm` files of `dir`, sorted by name.
fn depth_files(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with("depth_") && name.ends_with(".pfm") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn read_depth(path: &Path) -> Result<Tensor> {
    let d = read_pfm(path)?;
    if d.ndim() != 2 {
        return Err(Error::format(path, "depth map must have one channel"));
    }
    Ok(d)
}

fn run_names(preds: &[PathBuf]) -> Vec<String> {
    let base: Vec<String> = preds
        .iter()
        .map(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string())
        })
        .collect();
    base.iter()
        .enumerate()
        .map(|(i, n)| {
            if base.iter().filter(|m| *m == n).count() > 1 {
                format!("{n}#{i}")
            } else {
                n.clone()
            }
        })
        .collect()
}

fn eval(args: &EvalArgs) -> Result<()> {
    let config = load_config(args.common.config.as_deref())?;
    let out = output_dir(&args.common, &config)?;
    if !(args.mm_scale > 0.0 && args.mm_scale.is_finite()) {
        return Err(Error::Usage(format!("--mm-scale must be positive, got {}", args.mm_scale)));
    }
    let bounds = match &args.norm_bounds {
        Some(p) => {
            let mut b: NormBounds = read_json(p)?;
            b.align_scale |= args.align_scale;
            b
        }
        None => NormBounds {
            align_scale: args.align_scale,
            ..NormBounds::default()
        },
    };
    let gt_poses_path = args.gt.join("poses.csv");
    let gt_poses = gt_poses_path.exists().then(|| read_poses(&gt_poses_path)).transpose()?;
    let gt_intr_path = args.gt.join("intrinsics.json");
    let gt_intr = gt_intr_path.exists().then(|| read_intrinsics(&gt_intr_path)).transpose()?;

    let names = run_names(&args.pred);
    let mut runs = Vec::new();
    let mut trajectories = Vec::new();
    if let Some(gt) = &gt_poses {
        trajectories.push(("gt".to_string(), accumulate_trajectory(gt)));
    }
    for (dir, name) in args.pred.iter().zip(&names) {
        let files = depth_files(dir)?;
        if files.is_empty() {
            return Err(Error::Usage(format!("{}: no depth_XXX.pfm files", dir.display())));
        }
        let mut frames = Vec::new();
        for f in &files {
            let gt_path = args.gt.join(f);
            if !gt_path.exists() {
                return Err(Error::Usage(format!(
                    "frame mismatch: {} has no counterpart {}",
                    dir.join(f).display(),
                    gt_path.display()
                )));
            }
            let pred = read_depth(&dir.join(f))?.scale(args.mm_scale);
            let gt = read_depth(&gt_path)?.scale(args.mm_scale);
            let scaled = median_scale(&pred, &gt, None).map_err(|e| Error::format(dir.join(f), e.to_string()))?;
            let metrics = depth_metrics(&scaled, &gt, None, args.cap)?;
            frames.push(FrameMetrics {
                frame: f.trim_end_matches(".pfm").to_string(),
                metrics,
            });
        }
        let mean = mean_metrics(&frames.iter().map(|f| f.metrics).collect::<Vec<_>>()).expect("non-empty");

        let poses_path = dir.join("poses.csv");
        let pose = match (&gt_poses, poses_path.exists()) {
            (Some(gt), true) => {
                let pred = read_poses(&poses_path)?;
                if pred.len() != gt.len() {
                    return Err(Error::Usage(format!(
                        "frame mismatch: {} has {} poses, {} has {}",
                        poses_path.display(),
                        pred.len(),
                        gt_poses_path.display(),
                        gt.len()
                    )));
                }
                trajectories.push((name.clone(), accumulate_trajectory(&pred)));
                Some(pose_errors(&pred, gt, &bounds)?)
            }
            _ => None,
        };
        let intr_path = dir.join("intrinsics.json");
        let intrinsics = match (gt_intr, intr_path.exists()) {
            (Some(g), true) => {
                let p = read_intrinsics(&intr_path)?;
                Some(IntrinsicsReport {
                    predicted: p,
                    ground_truth: g,
                    error: intrinsic_error(&p, &g),
                })
            }
            _ => None,
        };
        runs.push(RunReport {
            name: name.clone(),
            dir: dir.clone(),
            frames,
            mean,
            pose,
            intrinsics,
        });
    }

    let report = EvalReport {
        cap: args.cap,
        mm_scale: args.mm_scale,
        norm_bounds: bounds,
        runs,
    };
    write_json(&out.join("metrics.json"), &report)?;
    let table = format_table(&report.runs);
    fs::write(out.join("table.txt"), &table).map_err(|e| Error::io(out.join("table.txt"), e))?;
    print!("{table}");
    if !trajectories.is_empty() {
        write_trajectory_csv(&out.join("trajectory.csv"), &trajectories)?;
        let svg = trajectory_svg(&trajectories);
        fs::write(out.join("trajectory.svg"), svg).map_err(|e| Error::io(out.join("trajectory.svg"), e))?;
    }
    Ok(())
}

fn format_table(runs: &[RunReport]) -> String {
    let width = runs.iter().map(|r| r.name.chars().count()).max().unwrap_or(0).max(4);
    let mut s = format!("{:<width$}", "run");
    for h in DepthMetrics::HEADER {
        let _ = write!(s, " {h:>10}");
    }
    s.push('\n');
    for r in runs {
        let _ = write!(s, "{:<width$}", r.name);
        for v in r.mean.row() {
            let _ = write!(s, " {v:>10.4}");
        }
        s.push('\n');
    }
    if runs.iter().any(|r| r.pose.is_some() || r.intrinsics.is_some()) {
        s.push('\n');
        let _ = writeln!(
            s,
            "{:<width$} {:>17} {:>17} {:>8} {:>8} {:>8} {:>8}",
            "run", "rotation", "trajectory", "fx", "fy", "cx", "cy"
        );
        for r in runs {
            let _ = write!(s, "{:<width$}", r.name);
            match &r.pose {
                Some(p) => {
                    let _ = write!(s, " {:>17} {:>17}", p.rotation.to_string(), p.trajectory.to_string());
                }
                None => {
                    let _ = write!(s, " {:>17} {:>17}", "-", "-");
                }
            }
            match &r.intrinsics {
                Some(k) => {
                    for v in k.predicted.to_array() {
                        let _ = write!(s, " {v:>8.4}");
                    }
                }
                None => {
                    let _ = write!(s, " {:>8} {:>8} {:>8} {:>8}", "-", "-", "-", "-");
                }
            }
            s.push('\n');
        }
    }
    s
}

type Trajectory = (String, Vec<nalgebra::Vector3<f64>>);

fn write_trajectory_csv(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["run", "frame", "x", "y", "z"]).map_err(csv_err)?;
    for (name, points) in trajectories {
        for (k, p) in points.iter().enumerate() {
            w.write_record([name.clone(), k.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const SVG_SIZE: f64 = 480.0;
const SVG_MARGIN: f64 = 40.0;
const SVG_COLORS: [&str; 6] = ["#000000", "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd"];

/// Top view (x right, z up) of the accumulated camera positions, one
/// polyline per run.
pub fn trajectory_svg(trajectories: &[Trajectory]) -> String {
    let all = trajectories.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut z0, mut z1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in all {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        z0 = z0.min(p.z);
        z1 = z1.max(p.z);
    }
    if !x0.is_finite() {
        (x0, x1, z0, z1) = (0.0, 1.0, 0.0, 1.0);
    }
    let span = (x1 - x0).max(z1 - z0).max(1e-9);
    let inner = SVG_SIZE - 2.0 * SVG_MARGIN;
    let map = |x: f64, z: f64| {
        (
            SVG_MARGIN + (x - x0) / span * inner,
            SVG_SIZE - SVG_MARGIN - (z - z0) / span * inner,
        )
    };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_SIZE}\" height=\"{SVG_SIZE}\" viewBox=\"0 0 {SVG_SIZE} {SVG_SIZE}\">\n"
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (i, (name, points)) in trajectories.iter().enumerate() {
        let color = SVG_COLORS[i % SVG_COLORS.len()];
        let pts: Vec<String> = points
            .iter()
            .map(|p| {
                let (u, v) = map(p.x, p.z);
                format!("{u:.2},{v:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"><title>{}</title></polyline>",
            pts.join(" "),
            xml_escape(name)
        );
        let _ = writeln!(
            s,
            "<text x=\"{SVG_MARGIN}\" y=\"{:.0}\" fill=\"{color}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            16.0 + 14.0 * i as f64,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    let term: LossTerm = args.term.parse()?;
    if !(args.tolerance > 0.0) {
        return Err(Error::Usage(format!("--tolerance must be positive, got {}", args.tolerance)));
    }
    // The config only contributes a seed and an output directory here.
    let config = load_config(args.common.config.as_deref())?;
    let seed = args.common.seed.unwrap_or(config.optimizer.seed);
    let checks = loss_stack_gradcheck(seed, args.tolerance, term)?;
    let mut report = format!("gradcheck seed={seed} term={} tolerance={:e}\n", term.name(), args.tolerance);
    for c in &checks {
        let _ = writeln!(report, "{c}");
    }
    let failed = checks.iter().filter(|c| !c.report.passed).count();
    let _ = writeln!(report, "{} checks, {failed} failed", checks.len());
    print!("{report}");
    if let Some(out) = args.common.output.clone().or(config.output) {
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        fs::write(out.join("gradcheck.txt"), &report).map_err(|e| Error::io(out.join("gradcheck.txt"), e))?;
    }
    if failed > 0 {
        return Err(Error::GradientCheck { failed, total: checks.len() });
    }
    Ok(())
}

