//! `parcomp`: dataset generation, segmentation, training, completion,
//! assembly and evaluation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use parcomp_core::assembly::{AssemblyParams, AssemblyReport};
use parcomp_core::diffkit::DiffError;
use parcomp_core::io::{self, Manifest, ManifestEntry, PlyEncoding, PrimitiveSet, SegmentationDoc};
use parcomp_core::matchloss::LossError;
use parcomp_core::metrics::{evaluate, nc_prim, EvalRecord, Report, METRIC_SAMPLES};
use parcomp_core::model::{
    prepare_cloud, prepare_input, select_primitives, Model, ModelConfig, ModelError,
};
use parcomp_core::pipeline::ReconstructParams;
use parcomp_core::segment::{detect_planes, SegmentParams};
use parcomp_core::synth::{dataset_specs, generate_sample, LevelChoice, Sample, MAX_COMPLEXITY};
use parcomp_core::trainer::{
    load_checkpoint, prepare_samples, FitOutputs, TrainConfig, TrainError, Trainer,
};

#[derive(Parser)]
#[command(
    name = "parcomp",
    version,
    about = "Plane-primitive completion of incomplete point clouds"
)]
struct Cli {
    /// Worker threads for per-sample stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Detect planes in every input cloud.
    Segment(SegmentArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Predict primitives for every input cloud.
    Complete(CompleteArgs),
    /// Build meshes from predicted primitives.
    Assemble(AssembleArgs),
    /// Score meshes against ground truth.
    Eval(EvalArgs),
    /// Run every stage from one config file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    count: usize,
    /// simple, moderate, hard or mixed.
    #[arg(long, default_value = "mixed")]
    level: LevelChoice,
    #[arg(long, default_value_t = MAX_COMPLEXITY)]
    max_complexity: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON file with segmentation parameters.
    #[arg(long)]
    segment_config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Run directory for the checkpoint and history.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with `model`, `train` and `segment` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Continue from the run directory's checkpoint.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct CompleteArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Confidence threshold for keeping a primitive.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long)]
    segment_config: Option<PathBuf>,
}

#[derive(Args)]
struct AssembleArgs {
    #[arg(long)]
    data: PathBuf,
    /// Directory holding the per-sample primitives; meshes are written next to them.
    #[arg(long)]
    pred: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Directory for report.json and report.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = METRIC_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    metric_seed: u64,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's confidence threshold.
    #[arg(long)]
    tau: Option<f64>,
}

/// A bad command line that clap cannot catch.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

const SEGMENTATION_FILE: &str = "segmentation.json";
const PRIMITIVES_FILE: &str = "primitives.json";
const PRIMITIVES_PLY: &str = "primitives.ply";
const MESH_FILE: &str = "mesh.obj";
const MESH_TRI_FILE: &str = "mesh_tri.obj";
const ASSEMBLY_FILE: &str = "assembly.json";
const CHECKPOINT_FILE: &str = "checkpoint.bin";
const HISTORY_FILE: &str = "history.jsonl";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainSetup {
    model: ModelConfig,
    train: TrainConfig,
    segment: SegmentParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DataSpec {
    seed: u64,
    count: usize,
    #[serde(default = "mixed")]
    level: LevelChoice,
    #[serde(default = "max_complexity")]
    max_complexity: usize,
}

fn mixed() -> LevelChoice {
    LevelChoice::Mixed
}

fn max_complexity() -> usize {
    MAX_COMPLEXITY
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PipelineConfig {
    /// Generated and trained on unless `checkpoint` is set.
    #[serde(default)]
    train_data: Option<DataSpec>,
    test_data: DataSpec,
    /// Trained weights to use instead of training; relative to the config file.
    #[serde(default)]
    checkpoint: Option<PathBuf>,
    #[serde(default)]
    model: ModelConfig,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    reconstruct: ReconstructParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AssemblyDoc {
    report: Option<AssemblyReport>,
    error: Option<String>,
}

fn gen(
    seed: u64,
    count: usize,
    level: LevelChoice,
    max_complexity: usize,
    out: &Path,
) -> Result<()> {
    let specs = dataset_specs(seed, count, level, max_complexity);
    let entries: Vec<ManifestEntry> = specs
        .iter()
        .enumerate()
        .map(|(i, &spec)| ManifestEntry {
            name: Manifest::sample_name(i),
            spec,
        })
        .collect();
    entries.par_iter().try_for_each(|e| -> Result<()> {
        let s = generate_sample(&e.spec).with_context(|| format!("generating {}", e.name))?;
        io::save_sample(&out.join(&e.name), &s)?;
        Ok(())
    })?;
    let manifest = Manifest {
        seed,
        level,
        max_complexity,
        samples: entries,
    };
    io::write_json(&out.join(io::MANIFEST_FILE), &manifest)?;
    eprintln!("gen: {count} samples in {}", out.display());
    Ok(())
}

fn load_manifest(data: &Path) -> Result<Manifest> {
    Ok(io::read_json(&data.join(io::MANIFEST_FILE))?)
}

fn load_samples(data: &Path, m: &Manifest) -> Result<Vec<Sample>> {
    m.samples
        .par_iter()
        .map(|e| Ok(io::load_sample(&data.join(&e.name))?))
        .collect()
}

fn read_optional<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), |p| Ok(io::read_json(p)?))
}

fn segment(data: &Path, out: &Path, params: &SegmentParams) -> Result<()> {
    let m = load_manifest(data)?;
    m.samples.par_iter().try_for_each(|e| -> Result<()> {
        let (cloud, _) = io::read_ply(&data.join(&e.name).join(io::INPUT_FILE))?;
        let doc = SegmentationDoc {
            points: cloud.len(),
            segmentation: detect_planes(&cloud, params),
        };
        io::write_json(&out.join(&e.name).join(SEGMENTATION_FILE), &doc)?;
        Ok(())
    })?;
    eprintln!("segment: {} samples", m.samples.len());
    Ok(())
}

fn train(
    data: &Path,
    out: &Path,
    setup: &TrainSetup,
    resume: bool,
    epochs: Option<usize>,
) -> Result<()> {
    let m = load_manifest(data)?;
    let samples = load_samples(data, &m)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    let history = out.join(HISTORY_FILE);
    let mut trainer = if resume {
        load_checkpoint(&ckpt)?
    } else {
        match std::fs::remove_file(&history) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => {
                return Err(e).with_context(|| history.display().to_string())
            }
            _ => {}
        }
        Trainer::new(Model::new(setup.model.clone())?, setup.train.clone())?
    };
    if let Some(n) = epochs {
        trainer.config.epochs = n;
    }
    let prepared = prepare_samples(
        &samples,
        &trainer.model.config,
        &setup.segment,
        trainer.config.gt_points,
    )?;
    io::write_json(&out.join("config.json"), setup)?;
    let stats = trainer.fit(
        &prepared,
        &FitOutputs {
            checkpoint_dir: Some(out.to_path_buf()),
            history: Some(history),
        },
    )?;
    match stats.last() {
        Some(s) => eprintln!("train: epoch {} loss {:.6}", s.epoch + 1, s.loss.total),
        None => eprintln!("train: nothing to do (at epoch {})", trainer.epoch),
    }
    Ok(())
}

fn complete(
    data: &Path,
    checkpoint: &Path,
    out: &Path,
    tau: f64,
    seg: &SegmentParams,
) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(usage(format!("--tau must be in [0, 1], got {tau}")));
    }
    let model = load_checkpoint(checkpoint)?.model;
    let m = load_manifest(data)?;
    m.samples.par_iter().try_for_each(|e| -> Result<()> {
        let (cloud, _) = io::read_ply(&data.join(&e.name).join(io::INPUT_FILE))?;
        let dir = out.join(&e.name);
        let seg_path = dir.join(SEGMENTATION_FILE);
        // Reuse the segment stage's output when it matches the model input.
        let input = match seg_path
            .exists()
            .then(|| io::read_json::<SegmentationDoc>(&seg_path))
            .transpose()?
        {
            Some(doc) if doc.points == cloud.len() && cloud.len() == model.config.n_input => {
                prepare_input(&cloud, doc.segmentation, &model.config)?
            }
            _ => prepare_cloud(&cloud, seg, &model.config)?,
        };
        let selected = select_primitives(&model.predict(&input)?, tau);
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (i, p) in selected.iter().enumerate() {
            points.extend_from_slice(&p.points);
            labels.extend(std::iter::repeat_n(i as i32, p.points.len()));
        }
        io::write_ply(
            &dir.join(PRIMITIVES_PLY),
            &points,
            Some(&labels),
            PlyEncoding::Ascii,
        )?;
        io::write_json(
            &dir.join(PRIMITIVES_FILE),
            &PrimitiveSet {
                primitives: selected,
            },
        )?;
        Ok(())
    })?;
    eprintln!("complete: {} samples", m.samples.len());
    Ok(())
}

fn assemble(data: &Path, pred: &Path, params: &AssemblyParams) -> Result<()> {
    let m = load_manifest(data)?;
    let failed: usize = m
        .samples
        .par_iter()
        .map(|e| -> Result<usize> {
            let dir = pred.join(&e.name);
            let set: PrimitiveSet = io::read_json(&dir.join(PRIMITIVES_FILE))?;
            for f in [MESH_FILE, MESH_TRI_FILE] {
                match std::fs::remove_file(dir.join(f)) {
                    Err(err) if err.kind() != std::io::ErrorKind::NotFound => {
                        return Err(err.into())
                    }
                    _ => {}
                }
            }
            let doc = match parcomp_core::assembly::assemble_mesh(&set.primitives, params) {
                Ok(a) => {
                    io::write_obj(&dir.join(MESH_FILE), &a.mesh)?;
                    io::write_obj(&dir.join(MESH_TRI_FILE), &a.triangulated)?;
                    AssemblyDoc {
                        report: Some(a.report),
                        error: None,
                    }
                }
                Err(err) => AssemblyDoc {
                    report: None,
                    error: Some(err.to_string()),
                },
            };
            let failed = usize::from(doc.report.is_none());
            io::write_json(&dir.join(ASSEMBLY_FILE), &doc)?;
            Ok(failed)
        })
        .sum::<Result<usize>>()?;
    eprintln!(
        "assemble: {} samples, {failed} without a mesh",
        m.samples.len()
    );
    Ok(())
}

fn eval(data: &Path, pred: &Path, out: &Path, n: usize, seed: u64) -> Result<Report> {
    if n == 0 {
        return Err(usage("--samples must be positive"));
    }
    let m = load_manifest(data)?;
    let records: Vec<EvalRecord> = m
        .samples
        .par_iter()
        .map(|e| -> Result<EvalRecord> {
            let s = io::load_sample(&data.join(&e.name))?;
            let dir = pred.join(&e.name);
            let mesh_path = dir.join(MESH_FILE);
            let mesh = mesh_path
                .exists()
                .then(|| io::read_obj(&mesh_path))
                .transpose()?;
            let prims_path = dir.join(PRIMITIVES_FILE);
            let prim = match prims_path
                .exists()
                .then(|| io::read_json::<PrimitiveSet>(&prims_path))
                .transpose()?
            {
                Some(set) => nc_prim(&set.primitives, &s.gt_primitives).ok(),
                None => None,
            };
            Ok(evaluate(&e.name, mesh.as_ref(), &s.gt_mesh, prim, n, seed)?)
        })
        .collect::<Result<_>>()?;
    let report = Report::new(records);
    std::fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    let json = out.join("report.json");
    let csv = out.join("report.csv");
    let file = |p: &Path| std::fs::File::create(p).with_context(|| p.display().to_string());
    report.write_json(std::io::BufWriter::new(file(&json)?))?;
    report.write_csv(std::io::BufWriter::new(file(&csv)?))?;
    let a = &report.aggregate;
    eprintln!(
        "eval: {} samples CD {:.4} HD {:.4} NC {:.4} FR {:.2}",
        a.samples, a.cd, a.hd, a.nc, a.fr
    );
    Ok(report)
}

fn pipeline(config_path: &Path, out: &Path, tau: Option<f64>) -> Result<()> {
    let mut cfg: PipelineConfig = io::read_json(config_path)?;
    if let Some(t) = tau {
        cfg.reconstruct.tau = t;
    }
    let test_dir = out.join("test");
    let d = &cfg.test_data;
    gen(d.seed, d.count, d.level, d.max_complexity, &test_dir)?;
    let checkpoint = match (&cfg.checkpoint, &cfg.train_data) {
        (Some(c), _) => config_path.parent().unwrap_or(Path::new("")).join(c),
        (None, Some(d)) => {
            let train_dir = out.join("train");
            gen(d.seed, d.count, d.level, d.max_complexity, &train_dir)?;
            let run = out.join("run");
            let setup = TrainSetup {
                model: cfg.model.clone(),
                train: cfg.train.clone(),
                segment: cfg.reconstruct.segment,
            };
            train(&train_dir, &run, &setup, false, None)?;
            run.join(CHECKPOINT_FILE)
        }
        (None, None) => {
            return Err(anyhow!(
                "{}: config needs `checkpoint` or `train_data`",
                config_path.display()
            ))
        }
    };
    let pred = out.join("pred");
    let r = &cfg.reconstruct;
    segment(&test_dir, &pred, &r.segment)?;
    complete(&test_dir, &checkpoint, &pred, r.tau, &r.segment)?;
    assemble(&test_dir, &pred, &r.assembly)?;
    eval(&test_dir, &pred, out, r.metric_samples, r.metric_seed)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(usage("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting worker threads")?;
    }
    match cli.command {
        Command::Gen(a) => gen(a.seed, a.count, a.level, a.max_complexity, &a.out),
        Command::Segment(a) => segment(
            &a.data,
            &a.out,
            &read_optional(a.segment_config.as_deref())?,
        ),
        Command::Train(a) => {
            let setup: TrainSetup = read_optional(a.config.as_deref())?;
            train(&a.data, &a.out, &setup, a.resume, a.epochs)
        }
        Command::Complete(a) => complete(
            &a.data,
            &a.checkpoint,
            &a.out,
            a.tau,
            &read_optional(a.segment_config.as_deref())?,
        ),
        Command::Assemble(a) => assemble(&a.data, &a.pred, &AssemblyParams::default()),
        Command::Eval(a) => eval(&a.data, &a.pred, &a.out, a.samples, a.metric_seed).map(|_| ()),
        Command::Pipeline(a) => pipeline(&a.config, &a.out, a.tau),
    }
}

fn is_numeric_diff(e: &DiffError) -> bool {
    matches!(e, DiffError::NonFinite(_))
}

fn is_numeric_model(e: &ModelError) -> bool {
    matches!(e, ModelError::Diff(d) if is_numeric_diff(d))
}

/// 1 usage, 2 data, 3 numeric.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            let numeric = match e {
                TrainError::NonFinite { .. } => true,
                TrainError::Model(m) => is_numeric_model(m),
                TrainError::Loss(LossError::NonFinite) => true,
                TrainError::Loss(LossError::Diff(d)) => is_numeric_diff(d),
                _ => false,
            };
            if numeric {
                return 3;
            }
        }
        if cause
            .downcast_ref::<ModelError>()
            .is_some_and(is_numeric_model)
            || cause
                .downcast_ref::<DiffError>()
                .is_some_and(is_numeric_diff)
        {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let kind = ["ok", "usage", "data", "numeric"][code as usize];
            eprintln!(
                "parcomp: {kind} error: {}",
                format!("{e:#}").replace('\n', " ")
            );
            ExitCode::from(code)
        }
    }
}
