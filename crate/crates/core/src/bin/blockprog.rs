//! Pipeline driver: dataset generation, training, evaluation, and
//! end-to-end scene → program → execution runs.
//!
//! Exit codes: 0 success, 2 config error, 3 IO/format error,
//! 4 execution did not reach the goal.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use blockprog::beliefmap;
use blockprog::executor;
use blockprog::geometry::{self, SceneFile, SceneGenConfig};
use blockprog::metrics;
use blockprog::neural::{self, TrainConfig};
use blockprog::program::{self, ProgramFile};
use blockprog::relationship::{self, AugKind, AugmentConfig};

#[derive(Parser)]
#[command(name = "blockprog", about = "Blocks-world demonstration-to-program pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate random scene files.
    GenScenes,
    /// Generate the labeled relationship pair dataset (JSONL).
    GenRelData,
    /// Train the relationship classifier on the generated pairs.
    TrainRel,
    /// Enumerate every goal and its program (JSONL).
    EnumPrograms,
    /// Train the program generation network on the enumeration.
    TrainProg,
    /// Enumerate the execution dataset (binary).
    GenExecData,
    /// Train the execution network on the enumerated dataset.
    TrainExec,
    /// Scene file -> state tensor -> program JSON + sentence.
    Infer { scene: PathBuf },
    /// Run a program closed-loop from a flat table, with optional faults.
    Execute { program: PathBuf },
    /// Emit an evaluation report (vertex | rel | prog | exec).
    Evaluate {
        #[arg(long, default_value = "vertex")]
        kind: String,
    },
    /// Infer then execute in one run.
    Pipeline { scene: PathBuf },
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
struct RunConfig {
    seed: u64,
    scenes: ScenesCfg,
    rel_data: RelDataCfg,
    rel_train: TrainCfg,
    program: ProgramCfg,
    exec: ExecCfg,
    execute: ExecuteCfg,
    epsilon: f64,
    threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            scenes: ScenesCfg::default(),
            rel_data: RelDataCfg::default(),
            rel_train: TrainCfg { epochs: 40, ..TrainCfg::default() },
            program: ProgramCfg::default(),
            exec: ExecCfg::default(),
            execute: ExecuteCfg::default(),
            epsilon: 0.5,
            threshold: relationship::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
struct ScenesCfg {
    count: usize,
    n_min: usize,
    n_max: usize,
    /// One of "any", "flat", "stack", "pyramid".
    structure: String,
}

impl Default for ScenesCfg {
    fn default() -> Self {
        ScenesCfg { count: 10, n_min: 2, n_max: 5, structure: "any".into() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
struct RelDataCfg {
    scenes: usize,
    augs: Vec<String>,
    sigma_px: f64,
    confusion_prob: f64,
    relocate_prob: f64,
}

impl Default for RelDataCfg {
    fn default() -> Self {
        let d = AugmentConfig::default();
        RelDataCfg {
            scenes: 300,
            augs: vec!["occlusion".into()],
            sigma_px: d.sigma_px,
            confusion_prob: d.confusion_prob,
            relocate_prob: d.relocate_prob,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
struct TrainCfg {
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    train_fraction: f64,
}

impl Default for TrainCfg {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainCfg {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            train_fraction: d.train_fraction,
        }
    }
}

impl TrainCfg {
    fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            train_fraction: self.train_fraction,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
struct ProgramCfg {
    n: usize,
    include_pyramids: bool,
    hidden_layers: usize,
    width: usize,
    train: TrainCfg,
}

impl Default for ProgramCfg {
    fn default() -> Self {
        ProgramCfg {
            n: 5,
            include_pyramids: false,
            hidden_layers: 4,
            width: 1024,
            train: TrainCfg { epochs: 60, ..TrainCfg::default() },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
struct ExecCfg {
    n_min: usize,
    n_max: usize,
    train: TrainCfg,
}

impl Default for ExecCfg {
    fn default() -> Self {
        ExecCfg { n_min: 2, n_max: 6, train: TrainCfg { epochs: 30, ..TrainCfg::default() } }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
struct ExecuteCfg {
    action_failure_prob: f64,
    fail_at_step: Option<usize>,
    max_steps: Option<usize>,
    perturb_step: Option<usize>,
    perturb_obj: Option<usize>,
    /// "oracle" (default) or "learned" (requires trained exec weights).
    policy: Option<String>,
}

// ---------------------------------------------------------------------------
// errors and exit codes

#[derive(Debug)]
enum CliError {
    Config(String),
    Io(String),
    GoalNotReached,
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::GoalNotReached => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "{m}"),
            CliError::GoalNotReached => write!(f, "execution did not reach the goal"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Io(e.to_string())
}

fn cfg_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

// ---------------------------------------------------------------------------

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(cfg_err)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn scene_gen_config(cfg: &ScenesCfg) -> Result<SceneGenConfig> {
    let weights = match cfg.structure.as_str() {
        "any" => SceneGenConfig::default().structure_weights,
        "flat" => [1.0, 0.0, 0.0],
        "stack" => [0.0, 1.0, 0.0],
        "pyramid" => [0.0, 0.0, 1.0],
        other => return Err(CliError::Config(format!("unknown structure kind {other:?}"))),
    };
    Ok(SceneGenConfig {
        n_min: cfg.n_min,
        n_max: cfg.n_max,
        structure_weights: weights,
        ..SceneGenConfig::default()
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err)?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(io_err)?;
    Ok(())
}

fn parse_augs(names: &[String]) -> Result<Vec<AugKind>> {
    names
        .iter()
        .map(|s| match s.as_str() {
            "independent" => Ok(AugKind::Independent),
            "structured" => Ok(AugKind::Structured),
            "confusion" => Ok(AugKind::Confusion),
            "occlusion" => Ok(AugKind::Occlusion),
            other => Err(CliError::Config(format!("unknown augmentation {other:?}"))),
        })
        .collect()
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TrainReport {
    records: usize,
    epochs: usize,
    final_loss: f64,
    accuracy: Option<f64>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct AccuracyReport {
    kind: String,
    accuracy: f64,
    records: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ProgramLine {
    above: Vec<Vec<bool>>,
    left: Vec<Vec<bool>>,
    program: ProgramFile,
    sentence: String,
}

fn gen_scenes(config: &RunConfig, out: &Path) -> Result<()> {
    let dir = out.join("scenes");
    fs::create_dir_all(&dir).map_err(io_err)?;
    let gen = scene_gen_config(&config.scenes)?;
    for k in 0..config.scenes.count {
        let (scene, camera) =
            geometry::randomize_scene(config.seed.wrapping_add(k as u64), &gen).map_err(cfg_err)?;
        let file = SceneFile::from_scene(&scene, &camera);
        write_json(&dir.join(format!("scene_{k:04}.json")), &file)?;
    }
    println!("wrote {} scenes to {}", config.scenes.count, dir.display());
    Ok(())
}

fn gen_rel_data(config: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err)?;
    let augs = parse_augs(&config.rel_data.augs)?;
    let aug_config = AugmentConfig {
        sigma_px: config.rel_data.sigma_px,
        confusion_prob: config.rel_data.confusion_prob,
        relocate_prob: config.rel_data.relocate_prob,
    };
    let records = relationship::gen_pair_dataset(
        config.seed,
        config.rel_data.scenes,
        &augs,
        &aug_config,
        &scene_gen_config(&config.scenes)?,
    )
    .map_err(io_err)?;
    let path = out.join("rel_data.jsonl");
    let file = fs::File::create(&path).map_err(io_err)?;
    relationship::write_pair_records(BufWriter::new(file), &records).map_err(io_err)?;
    println!("wrote {} pair records to {}", records.len(), path.display());
    Ok(())
}

fn read_rel_records(out: &Path) -> Result<Vec<relationship::PairRecord>> {
    let path = out.join("rel_data.jsonl");
    let file = fs::File::open(&path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    relationship::read_pair_records(BufReader::new(file)).map_err(io_err)
}

fn train_rel(config: &RunConfig, out: &Path) -> Result<()> {
    let records = read_rel_records(out)?;
    let tc = config.rel_train.to_train_config(config.seed);
    let result = neural::train(
        &relationship::rel_net_spec(),
        &relationship::records_to_dataset(&records),
        &tc,
    )
    .map_err(cfg_err)?;
    let file = fs::File::create(out.join("rel_net.bin")).map_err(io_err)?;
    neural::write_params(BufWriter::new(file), &result.params).map_err(io_err)?;
    let eval = relationship::eval_rel(&result.params, &records).map_err(io_err)?;
    write_json(
        &out.join("rel_train_report.json"),
        &TrainReport {
            records: records.len(),
            epochs: tc.epochs,
            final_loss: result.history.last().map(|h| h.mean_batch_loss).unwrap_or(f64::NAN),
            accuracy: Some(1.0 - (eval.fnr() + eval.fpr()) / 2.0),
        },
    )?;
    println!("trained relation net on {} records", records.len());
    Ok(())
}

fn enum_programs(config: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err)?;
    let goals = program::enumerate_goals(config.program.n, config.program.include_pyramids)
        .map_err(cfg_err)?;
    let path = out.join("programs.jsonl");
    let mut lines = String::new();
    for (goal, prog) in &goals {
        let line = ProgramLine {
            above: goal.above.clone(),
            left: goal.left.clone(),
            program: ProgramFile::from_program(prog, &geometry::PALETTE),
            sentence: program::render_text(prog, &geometry::PALETTE),
        };
        lines.push_str(&serde_json::to_string(&line).map_err(io_err)?);
        lines.push('\n');
    }
    fs::write(&path, lines).map_err(io_err)?;
    println!("wrote {} goal/program pairs to {}", goals.len(), path.display());
    Ok(())
}

fn train_prog(config: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err)?;
    let goals = program::enumerate_goals(config.program.n, config.program.include_pyramids)
        .map_err(cfg_err)?;
    let ds = program::build_program_dataset(&goals);
    let tc = config.program.train.to_train_config(config.seed);
    let params =
        program::train_program_net(&ds, config.program.hidden_layers, config.program.width, &tc)
            .map_err(cfg_err)?;
    let accuracy = program::eval_program_net(&params, &ds).map_err(io_err)?;
    let file = fs::File::create(out.join("prog_net.bin")).map_err(io_err)?;
    neural::write_params(BufWriter::new(file), &params).map_err(io_err)?;
    write_json(
        &out.join("prog_train_report.json"),
        &TrainReport {
            records: goals.len(),
            epochs: tc.epochs,
            final_loss: f64::NAN,
            accuracy: Some(accuracy),
        },
    )?;
    println!("trained program net; full-dataset per-slot accuracy {accuracy:.3}");
    Ok(())
}

fn gen_exec_data(config: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err)?;
    let data = executor::enumerate_exec_dataset(config.exec.n_min..=config.exec.n_max)
        .map_err(cfg_err)?;
    let path = out.join("exec_data.bin");
    let file = fs::File::create(&path).map_err(io_err)?;
    executor::write_exec_dataset(BufWriter::new(file), &data).map_err(io_err)?;
    println!("wrote {} execution records to {}", data.inputs.nrows(), path.display());
    Ok(())
}

fn train_exec(config: &RunConfig, out: &Path) -> Result<()> {
    let path = out.join("exec_data.bin");
    let file = fs::File::open(&path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    let data = executor::read_exec_dataset(BufReader::new(file)).map_err(io_err)?;
    let tc = config.exec.train.to_train_config(config.seed);
    let params = executor::train_exec_net(&data, &tc).map_err(cfg_err)?;
    let accuracy = executor::eval_exec_net(&params, &data).map_err(io_err)?;
    let file = fs::File::create(out.join("exec_net.bin")).map_err(io_err)?;
    neural::write_params(BufWriter::new(file), &params).map_err(io_err)?;
    write_json(
        &out.join("exec_train_report.json"),
        &TrainReport {
            records: data.inputs.nrows(),
            epochs: tc.epochs,
            final_loss: f64::NAN,
            accuracy: Some(accuracy),
        },
    )?;
    println!("trained execution net; full-dataset action accuracy {accuracy:.3}");
    Ok(())
}

fn read_params_file(path: &Path) -> Result<neural::Params<f32>> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    neural::read_params(BufReader::new(file)).map_err(io_err)
}

/// Scene file -> thresholded goal -> program. Uses the trained relation
/// net when present, the geometric oracle otherwise.
fn infer_program(config: &RunConfig, out: &Path, scene_path: &Path) -> Result<program::Program> {
    let text = fs::read_to_string(scene_path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", scene_path.display())))?;
    let scene_file: SceneFile = serde_json::from_str(&text).map_err(io_err)?;
    let (scene, camera) = scene_file.into_scene();
    let n = scene.n();
    if n < 2 {
        return Ok(program::Program { n, steps: Vec::new() });
    }
    let net_path = out.join("rel_net.bin");
    let state = if net_path.exists() {
        let params = read_params_file(&net_path)?;
        let projections = relationship::project_all(&scene, &camera)
            .ok_or_else(|| CliError::Io("a cube projects behind the camera".into()))?;
        relationship::scene_state(&projections, &params).map_err(io_err)?
    } else {
        let rel = geometry::ground_truth_relations(&scene);
        relationship::binary_to_state(&rel)
    };
    let goal = relationship::threshold_state(&state, config.threshold);
    program::synthesize_program(&goal).map_err(cfg_err)
}

fn infer(config: &RunConfig, out: &Path, scene_path: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err)?;
    let prog = infer_program(config, out, scene_path)?;
    write_json(&out.join("program.json"), &ProgramFile::from_program(&prog, &geometry::PALETTE))?;
    println!("{}", program::render_text(&prog, &geometry::PALETTE));
    Ok(())
}

fn run_program(config: &RunConfig, out: &Path, prog: &program::Program) -> Result<()> {
    let faults = executor::FaultConfig {
        action_failure_prob: config.execute.action_failure_prob,
        fail_at_step: config.execute.fail_at_step,
        perturbation: match (config.execute.perturb_step, config.execute.perturb_obj) {
            (Some(s), Some(o)) => Some((s, o)),
            (None, None) => None,
            _ => {
                return Err(CliError::Config(
                    "perturbStep and perturbObj must be set together".into(),
                ))
            }
        },
    };
    let learned_params = match config.execute.policy.as_deref() {
        None | Some("oracle") => None,
        Some("learned") => Some(read_params_file(&out.join("exec_net.bin"))?),
        Some(other) => return Err(CliError::Config(format!("unknown policy {other:?}"))),
    };
    let policy = match &learned_params {
        Some(p) => executor::ExecPolicy::Learned(p),
        None => executor::ExecPolicy::Oracle,
    };
    let mut world = executor::WorldState::flat(prog.n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let outcome = executor::run_closed_loop(
        prog,
        &mut world,
        &policy,
        &faults,
        &mut rng,
        config.execute.max_steps,
    )
    .map_err(cfg_err)?;
    let file = fs::File::create(out.join("trace.jsonl")).map_err(io_err)?;
    executor::write_trace(BufWriter::new(file), &outcome.trace).map_err(io_err)?;
    if !outcome.success {
        return Err(CliError::GoalNotReached);
    }
    println!("goal reached in {} actions", outcome.trace.len().saturating_sub(1));
    Ok(())
}

fn execute(config: &RunConfig, out: &Path, program_path: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err)?;
    let text = fs::read_to_string(program_path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", program_path.display())))?;
    let file: ProgramFile = serde_json::from_str(&text).map_err(io_err)?;
    let prog = file.into_program().map_err(io_err)?;
    run_program(config, out, &prog)
}

fn pipeline(config: &RunConfig, out: &Path, scene_path: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err)?;
    let prog = infer_program(config, out, scene_path)?;
    write_json(&out.join("program.json"), &ProgramFile::from_program(&prog, &geometry::PALETTE))?;
    println!("{}", program::render_text(&prog, &geometry::PALETTE));
    if prog.steps.is_empty() {
        return Ok(());
    }
    run_program(config, out, &prog)
}

/// Vertex localization report: ground-truth maps decoded by soft-argmax
/// against the true projections, over freshly generated scenes.
fn evaluate_vertex(config: &RunConfig, out: &Path) -> Result<()> {
    let gen = scene_gen_config(&config.scenes)?;
    let mut samples = Vec::new();
    let mut detected = Vec::new();
    for k in 0..config.scenes.count {
        let Ok((scene, camera)) =
            geometry::randomize_scene(config.seed.wrapping_add(k as u64), &gen)
        else {
            continue;
        };
        for i in 0..scene.n() {
            let Ok(proj) = geometry::project_cuboid(&scene, &camera, i) else {
                detected.push(false);
                continue;
            };
            let verts = proj.visible_vertices();
            let Ok(maps) = beliefmap::make_ground_truth_maps(&verts, beliefmap::DEFAULT_SIGMA_IMAGE)
            else {
                detected.push(false);
                continue;
            };
            detected.push(true);
            for (map, &truth) in maps.maps.iter().zip(&verts) {
                let decoded = beliefmap::soft_argmax(map, beliefmap::DEFAULT_BETA).map_err(io_err)?;
                samples.push(metrics::MetricSample::new(decoded, truth, proj.hull_area));
            }
        }
    }
    let report = metrics::aggregate(&samples, config.epsilon).map_err(cfg_err)?;
    let (missed, total) = metrics::fnr(&detected);
    let mut value = serde_json::to_value(&report).map_err(io_err)?;
    value["fnrMissed"] = missed.into();
    value["fnrTotal"] = total.into();
    write_json(&out.join("eval_vertex.json"), &value)?;
    println!("{}", serde_json::to_string(&value).map_err(io_err)?);
    Ok(())
}

fn evaluate(config: &RunConfig, out: &Path, kind: &str) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err)?;
    match kind {
        "vertex" => evaluate_vertex(config, out),
        "rel" => {
            let params = read_params_file(&out.join("rel_net.bin"))?;
            let records = read_rel_records(out)?;
            let eval = relationship::eval_rel(&params, &records).map_err(io_err)?;
            write_json(&out.join("eval_rel.json"), &eval)?;
            println!("{}", serde_json::to_string(&eval).map_err(io_err)?);
            Ok(())
        }
        "prog" => {
            let params = read_params_file(&out.join("prog_net.bin"))?;
            let goals = program::enumerate_goals(config.program.n, config.program.include_pyramids)
                .map_err(cfg_err)?;
            let ds = program::build_program_dataset(&goals);
            let accuracy = program::eval_program_net(&params, &ds).map_err(io_err)?;
            let report =
                AccuracyReport { kind: "prog".into(), accuracy, records: goals.len() };
            write_json(&out.join("eval_prog.json"), &report)?;
            println!("{}", serde_json::to_string(&report).map_err(io_err)?);
            Ok(())
        }
        "exec" => {
            let params = read_params_file(&out.join("exec_net.bin"))?;
            let path = out.join("exec_data.bin");
            let file = fs::File::open(&path)
                .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
            let data = executor::read_exec_dataset(BufReader::new(file)).map_err(io_err)?;
            let accuracy = executor::eval_exec_net(&params, &data).map_err(io_err)?;
            let report =
                AccuracyReport { kind: "exec".into(), accuracy, records: data.inputs.nrows() };
            write_json(&out.join("eval_exec.json"), &report)?;
            println!("{}", serde_json::to_string(&report).map_err(io_err)?);
            Ok(())
        }
        other => Err(CliError::Config(format!("unknown evaluation kind {other:?}"))),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let out = cli.out.as_path();
    match &cli.cmd {
        Cmd::GenScenes => gen_scenes(&config, out),
        Cmd::GenRelData => gen_rel_data(&config, out),
        Cmd::TrainRel => train_rel(&config, out),
        Cmd::EnumPrograms => enum_programs(&config, out),
        Cmd::TrainProg => train_prog(&config, out),
        Cmd::GenExecData => gen_exec_data(&config, out),
        Cmd::TrainExec => train_exec(&config, out),
        Cmd::Infer { scene } => infer(&config, out, scene),
        Cmd::Execute { program } => execute(&config, out, program),
        Cmd::Evaluate { kind } => evaluate(&config, out, kind),
        Cmd::Pipeline { scene } => pipeline(&config, out, scene),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
