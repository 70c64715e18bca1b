use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use river_core::grpo::{train_toy_policy, ToyEnv, ToyTrainConfig};
use river_core::reward::{score_rollout, JudgeVerdict};
use river_core::rollout::{
    drive_loop, parse_rollout, CodeExecutor, ExecOutcome, RolloutError, SegmentKind, TwinqlExecutor,
};
use river_core::twin::{diff_twins, parse_twin, serialize_twin, validate_against_schema, VideoTwin};
use river_core::twinql::{render_value, run as run_twinql, EvalLimits};
use river_pipeline::bench::{load_manifest, render_report, run_eval, EvalOptions, EvalRunReport, ReportFormat};
use river_pipeline::clients::Services;
use river_pipeline::config::PipelineConfig;
use river_pipeline::frames::load_frames;
use river_pipeline::mock::{ColorPerception, ReasonerScript, ScriptedReasoner};
use river_pipeline::perception::{build_twin, perceive_twin};
use river_pipeline::run::{edit_video, RunOptions};
use river_pipeline::scoring::fidelity;
use serde::Serialize;

type Fatal = Box<dyn Error>;

#[derive(Parser)]
#[command(name = "river", version, about = "Reasoning video editing through digital twins")]
struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    #[command(subcommand)]
    Twin(TwinCmd),
    #[command(subcommand)]
    Rollout(RolloutCmd),
    #[command(subcommand)]
    Reward(RewardCmd),
    #[command(subcommand)]
    Twinql(TwinqlCmd),
    #[command(subcommand)]
    Train(TrainCmd),
    #[command(subcommand)]
    Bench(BenchCmd),
    #[command(subcommand)]
    Metrics(MetricsCmd),
    #[command(subcommand)]
    Report(ReportCmd),
    /// Runs the full pipeline on one video.
    Edit(EditArgs),
}

#[derive(Subcommand)]
enum TwinCmd {
    /// Builds a twin for a frame directory.
    Build {
        video: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Segment palette colours in-process instead of calling the service.
        #[arg(long)]
        mock_perception: bool,
        /// Call perception even when the directory has a twin.json.
        #[arg(long)]
        ignore_fixture: bool,
    },
    /// Checks a twin document, optionally against a reference twin.
    Validate {
        file: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Field-level diff between two twins.
    Diff { original: PathBuf, edited: PathBuf },
}

#[derive(Subcommand)]
enum RolloutCmd {
    /// Drives the reasoner on a video's twin.
    Run {
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        query: Option<String>,
        /// Replay a reasoner script instead of calling the service.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Write the raw transcript text here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum RewardCmd {
    /// Scores a transcript against its source twin.
    Score {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        twin: PathBuf,
        /// Execution outcomes (JSON list); re-executed from the transcript when absent.
        #[arg(long)]
        outcomes: Option<PathBuf>,
        /// Judge verdict (JSON).
        #[arg(long)]
        verdict: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TwinqlCmd {
    /// Evaluates one program against a twin.
    Eval {
        #[arg(long)]
        twin: PathBuf,
        program: String,
    },
}

#[derive(Subcommand)]
enum TrainCmd {
    /// Trains the toy policy on the four-action environment.
    Toy {
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        #[arg(long, default_value_t = 0.5)]
        step_size: f64,
        /// Seed of the environment layout.
        #[arg(long, default_value_t = 0)]
        env_seed: u64,
        /// Per-iteration log as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Evaluates every manifest sample and writes reports.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        /// Use the in-process mock for every service.
        #[arg(long)]
        mock_all: bool,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long, default_value = "river-report")]
        out: PathBuf,
        #[arg(long)]
        no_editor: bool,
    },
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// SSIM and PSNR of an edited frame directory against the original.
    Compute {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        edited: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Text,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Renders a report from a samples.jsonl file.
    Render {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

#[derive(Args)]
struct EditArgs {
    #[arg(long)]
    video: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long)]
    no_editor: bool,
    /// Edited frames directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replay a reasoner script instead of calling the service.
    #[arg(long)]
    script: Option<PathBuf>,
}

/// Success, or success with some failed items.
enum Status {
    Ok,
    ItemFailures,
}

fn read(path: &Path) -> Result<String, Fatal> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn read_twin(path: &Path) -> Result<VideoTwin, Fatal> {
    Ok(parse_twin(&read(path)?)?)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Fatal> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_script(path: &Path) -> Result<ReasonerScript, Fatal> {
    Ok(serde_json::from_str(&read(path)?)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ItemFailures) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<Status, Fatal> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Twin(cmd) => twin(cmd, &cfg),
        Command::Rollout(RolloutCmd::Run {
            video,
            query,
            script,
            out,
        }) => rollout(&video, query, script.as_deref(), out.as_deref(), &cfg),
        Command::Reward(RewardCmd::Score {
            transcript,
            twin,
            outcomes,
            verdict,
        }) => reward(&transcript, &twin, outcomes.as_deref(), verdict.as_deref(), &cfg),
        Command::Twinql(TwinqlCmd::Eval { twin, program }) => {
            let twin = read_twin(&twin)?;
            let limits = EvalLimits {
                step_budget: cfg.rollout.step_budget,
                list_cap: cfg.rollout.list_cap,
            };
            match run_twinql(&program, &twin, &limits) {
                Ok(v) => {
                    println!("{}", render_value(&v));
                    Ok(Status::Ok)
                }
                Err(e) => {
                    eprintln!("{e}");
                    Ok(Status::ItemFailures)
                }
            }
        }
        Command::Train(TrainCmd::Toy {
            iterations,
            step_size,
            env_seed,
            out,
        }) => train(iterations, step_size, env_seed, out.as_deref(), &cfg),
        Command::Bench(BenchCmd::Run {
            manifest,
            mock_all,
            parallelism,
            out,
            no_editor,
        }) => bench(&manifest, mock_all, parallelism, &out, no_editor, &cfg),
        Command::Metrics(MetricsCmd::Compute { original, edited }) => {
            let a = load_frames(&original, None)?;
            let b = load_frames(&edited, None)?;
            let (ssims, psnrs) = fidelity(&a, &b)?;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            print_json(&serde_json::json!({
                "ssim": mean(&ssims),
                "psnr": mean(&psnrs),
                "series": { "ssim": ssims, "psnr": psnrs },
            }))?;
            Ok(Status::Ok)
        }
        Command::Report(ReportCmd::Render { samples, format }) => {
            let report = EvalRunReport::from_jsonl(&read(&samples)?)?;
            let format = match format {
                Format::Csv => ReportFormat::Csv,
                Format::Text => ReportFormat::Text,
            };
            print!("{}", render_report(&report, format));
            Ok(Status::Ok)
        }
        Command::Edit(args) => {
            let mut services = Services::from_endpoints(&cfg.endpoints)?;
            if let Some(path) = &args.script {
                services.reasoner = Some(std::sync::Arc::new(ScriptedReasoner::new([load_script(path)?])));
            }
            let opts = RunOptions {
                no_editor: args.no_editor,
                output_dir: args.out,
            };
            let record = edit_video(&args.video, &args.query, &cfg, &services, &opts);
            print_json(&record)?;
            Ok(if record.failure.is_some() {
                Status::ItemFailures
            } else {
                Status::Ok
            })
        }
    }
}

fn twin(cmd: TwinCmd, cfg: &PipelineConfig) -> Result<Status, Fatal> {
    match cmd {
        TwinCmd::Build {
            video,
            out,
            mock_perception,
            ignore_fixture,
        } => {
            let services = Services::from_endpoints(&cfg.endpoints)?;
            let mock = ColorPerception::default();
            let client = if mock_perception {
                Some(&mock as &dyn river_pipeline::clients::PerceptionClient)
            } else {
                services.perception.as_deref()
            };
            let twin = match (ignore_fixture, client) {
                (true, Some(c)) => perceive_twin(&video, c, Some(cfg.dims()), &[])?,
                (true, None) => return Err("--ignore-fixture needs a perception service".into()),
                (false, c) => build_twin(&video, c, Some(cfg.dims()), &[])?,
            };
            let text = serialize_twin(&twin);
            match out {
                Some(path) => fs::write(&path, text + "\n")?,
                None => println!("{text}"),
            }
            Ok(Status::Ok)
        }
        TwinCmd::Validate { file, reference } => {
            let text = read(&file)?;
            let report = match reference {
                Some(r) => validate_against_schema(&text, &read_twin(&r)?),
                None => match parse_twin(&text) {
                    Ok(t) => t.validate(),
                    Err(e) => {
                        eprintln!("{e}");
                        return Ok(Status::ItemFailures);
                    }
                },
            };
            print_json(&report)?;
            Ok(if report.valid { Status::Ok } else { Status::ItemFailures })
        }
        TwinCmd::Diff { original, edited } => {
            print_json(&diff_twins(&read_twin(&original)?, &read_twin(&edited)?))?;
            Ok(Status::Ok)
        }
    }
}

fn rollout(
    video: &Path,
    query: Option<String>,
    script: Option<&Path>,
    out: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<Status, Fatal> {
    let mut services = Services::from_endpoints(&cfg.endpoints)?;
    let mut query = query;
    if let Some(path) = script {
        let script = load_script(path)?;
        query.get_or_insert_with(|| script.query.clone());
        services.reasoner = Some(std::sync::Arc::new(ScriptedReasoner::new([script])));
    }
    let query = query.ok_or("--query is required without --script")?;
    let twin = build_twin(video, services.perception.as_deref(), Some(cfg.dims()), &[])?;
    let (transcript, outcomes, status) = match drive_loop(services.reasoner()?, &twin, &query, &cfg.loop_config()) {
        Ok((t, o)) => (t, o, Status::Ok),
        Err(RolloutError::RoundLimitExceeded {
            transcript, outcomes, ..
        }) => (*transcript, outcomes, Status::ItemFailures),
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = out {
        fs::write(path, &transcript.source)?;
    }
    let status = if transcript.complete {
        status
    } else {
        Status::ItemFailures
    };
    print_json(&serde_json::json!({ "transcript": transcript, "outcomes": outcomes }))?;
    Ok(status)
}

fn reward(
    transcript: &Path,
    twin: &Path,
    outcomes: Option<&Path>,
    verdict: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<Status, Fatal> {
    let twin = read_twin(twin)?;
    let transcript = parse_rollout(&read(transcript)?);
    let outcomes: Vec<ExecOutcome> = match outcomes {
        Some(p) => serde_json::from_str(&read(p)?)?,
        None => transcript
            .segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Execute)
            .map(|s| ExecOutcome {
                code: s.body.clone(),
                status: TwinqlExecutor.execute(&s.body, &twin, &cfg.rollout),
            })
            .collect(),
    };
    let verdict: Option<JudgeVerdict> = verdict
        .map(read)
        .transpose()?
        .map(|t| serde_json::from_str(&t))
        .transpose()?;
    cfg.reward.warn_overrides();
    let (breakdown, report) = score_rollout(&transcript, &outcomes, &twin, verdict.as_ref(), &cfg.reward);
    print_json(&serde_json::json!({ "reward": breakdown, "validation": report }))?;
    Ok(Status::Ok)
}

fn train(
    iterations: usize,
    step_size: f64,
    env_seed: u64,
    out: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<Status, Fatal> {
    let env = ToyEnv::four_action(env_seed);
    let train_cfg = ToyTrainConfig {
        iterations,
        step_size,
        grpo: cfg.grpo,
        reward: cfg.reward,
    };
    let result = train_toy_policy(&env, &train_cfg, cfg.seed)?;
    if let Some(path) = out {
        let mut w = csv::Writer::from_path(path)?;
        for record in &result.log {
            w.serialize(record)?;
        }
        w.flush()?;
    }
    let first_above = result.curve.iter().position(|&r| r >= 1.2);
    print_json(&serde_json::json!({
        "iterations": iterations,
        "seed": cfg.seed,
        "action_rewards": result.action_rewards,
        "final_probs": result.policy.probs(),
        "final_expected_reward": result.expected_reward(),
        "last_mean_reward": result.curve.last(),
        "first_iteration_at_or_above_1.2": first_above,
    }))?;
    Ok(Status::Ok)
}

fn bench(
    manifest_path: &Path,
    mock_all: bool,
    parallelism: Option<usize>,
    out: &Path,
    no_editor: bool,
    cfg: &PipelineConfig,
) -> Result<Status, Fatal> {
    let manifest = load_manifest(manifest_path)?;
    let services = if mock_all {
        let scripts = manifest
            .samples
            .iter()
            .filter_map(|s| ReasonerScript::load(&manifest.video_dir(s)));
        Services::mock_all(scripts)
    } else {
        Services::from_endpoints(&cfg.endpoints)?
    };
    let opts = EvalOptions {
        no_editor,
        output_dir: Some(out.join("edited")),
    };
    let report = run_eval(&manifest, &services, cfg, parallelism.unwrap_or(cfg.parallelism), &opts)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("report.csv"), render_report(&report, ReportFormat::Csv))?;
    let text = render_report(&report, ReportFormat::Text);
    fs::write(out.join("report.txt"), &text)?;
    fs::write(out.join("samples.jsonl"), report.to_jsonl())?;
    print!("{text}");
    Ok(if report.error_count() > 0 {
        Status::ItemFailures
    } else {
        Status::Ok
    })
}
