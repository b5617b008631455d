mod config;
mod serve;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use catchform_core::bench::{self, bench_mask};
use catchform_core::controller::{PresetName, Template};
use catchform_core::dataset::{self, GenerateOptions};
use catchform_core::policy::bundle::WeightBundle;
use catchform_core::policy::golden;
use catchform_core::policy::model::Policy;
use catchform_core::sim::{self, ContactCommand, SurfaceState, MAX_DT};
use catchform_core::tasks::eval::{self, EvalSummary, Source};
use catchform_core::tasks::TaskId;
use catchform_core::teleop::{ClientMessage, TeleopConfig, TeleopSession};
use catchform_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "catchform", version, about = "Deformable-surface contact tools")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// No UI; everything is driven from the command line or the websocket.
    #[arg(long, global = true)]
    headless: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hold a flat punch on the surface and trace the contact force.
    Simulate(SimulateArgs),
    /// Record scripted demonstrations.
    DemoGen(DemoGenArgs),
    /// Recover material constants from synthetic presses.
    IdentifyBench(IdentifyArgs),
    /// Closed-loop force holding, deformation tracking and cycle timing.
    ControlBench(ControlArgs),
    /// Websocket teleoperation server.
    Serve(ServeArgs),
    /// Success rates per task and action source.
    Evaluate(EvaluateArgs),
    /// Golden chunk, seeded weight bundle and teleop packet replay.
    ExportGoldens,
}

#[derive(Args)]
struct SimulateArgs {
    /// Punch depth, m.
    #[arg(long, default_value_t = 5e-3)]
    depth: f64,
    /// s
    #[arg(long, default_value_t = 2.0)]
    duration: f64,
    /// s
    #[arg(long, default_value_t = 5e-3)]
    dt: f64,
    /// Trace interval, s.
    #[arg(long, default_value_t = 0.1)]
    every: f64,
}

#[derive(Args)]
struct DemoGenArgs {
    #[arg(long)]
    task: Option<String>,
    /// Defaults to the task's demonstration count.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    #[arg(long)]
    no_observer: bool,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Sensor noise RMS, kPa.
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// Prior as a multiple of the true constants.
    #[arg(long, default_value_t = 0.9)]
    prior: f64,
}

#[derive(Args)]
struct ControlArgs {
    /// Force target, N.
    #[arg(long, default_value_t = 3.0)]
    force: f64,
    /// Rollout length, s.
    #[arg(long, default_value_t = 4.0)]
    seconds: f64,
    #[arg(long, default_value_t = 1000)]
    cycles: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    task: Option<String>,
    /// 0 picks a free port.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    stream_hz: Option<f64>,
    /// Stop after this many seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    no_observer: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Task name, or all tasks.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated: scripted, fixed-low, fixed-mid, fixed-high, policy, policy-no-field.
    #[arg(long, default_value = "scripted,fixed-mid")]
    sources: String,
    /// Policy weight bundle.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Chunk ensemble decay; omit to run the newest chunk.
    #[arg(long)]
    decay: Option<f64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => 2,
        Error::Config(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// `Ok(false)` when a benchmark misses its threshold.
fn run(cli: Cli) -> Result<bool> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    cfg.check_paths()?;
    match cli.command {
        Command::Simulate(a) => simulate(&cfg, &a),
        Command::DemoGen(a) => demo_gen(&cfg, &a),
        Command::IdentifyBench(a) => identify(&cfg, &a),
        Command::ControlBench(a) => control(&cfg, &a),
        Command::Serve(a) => serve_cmd(&cfg, &a, cli.headless),
        Command::Evaluate(a) => evaluate(&cfg, &a),
        Command::ExportGoldens => export_goldens(&cfg),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn task_or(cfg: &RunConfig, name: Option<&str>) -> Result<Option<TaskId>> {
    match name {
        Some(n) => TaskId::parse(n).map(Some).map_err(|e| Error::Usage(e.to_string())),
        None => Ok(cfg.task),
    }
}

fn simulate(cfg: &RunConfig, a: &SimulateArgs) -> Result<bool> {
    if !(a.dt > 0.0 && a.dt <= MAX_DT) {
        return Err(Error::Usage(format!("--dt {} outside (0, {MAX_DT}]", a.dt)));
    }
    if !(a.depth >= 0.0 && a.duration > 0.0 && a.every > 0.0) {
        return Err(Error::Usage("--depth, --duration and --every must be positive".into()));
    }
    let p = cfg.material;
    let cmd = ContactCommand::uniform(bench_mask(), a.depth);
    let mut state = SurfaceState::sensor_default();
    let steps = (a.duration / a.dt).round() as usize;
    let every = ((a.every / a.dt).round() as usize).max(1);
    std::fs::create_dir_all(&cfg.out)?;
    let mut csv = String::from("t,force,max_phi\n");
    println!("{:>8} {:>10} {:>10}", "t [s]", "force [N]", "phi [mm]");
    for k in 1..=steps {
        state = sim::step(&state, &cmd, &p, a.dt)?;
        let t = k as f64 * a.dt;
        let f = sim::contact_force(&state, &p);
        let peak = state.phi.data.iter().copied().fold(0.0, f64::max);
        let _ = writeln!(csv, "{t:.6},{f:.9},{peak:.9e}");
        if k % every == 0 || k == steps {
            println!("{t:>8.3} {f:>10.4} {:>10.4}", peak * 1e3);
        }
    }
    let steady = sim::contact_force(&sim::steady_state(&state, &cmd, &p)?, &p);
    let f = sim::contact_force(&state, &p);
    println!("final {f:.4} N, equilibrium {steady:.4} N, gap {:.2}%", 100.0 * (f / steady - 1.0));
    std::fs::write(cfg.out.join("simulate.csv"), csv)?;
    Ok(true)
}

fn demo_gen(cfg: &RunConfig, a: &DemoGenArgs) -> Result<bool> {
    let task = task_or(cfg, a.task.as_deref())?.ok_or_else(|| Error::Usage("--task is required".into()))?;
    let spec = cfg.spec(task)?;
    let mut opts = GenerateOptions::for_task(task);
    opts.seed0 = cfg.seed;
    opts.val_fraction = a.val_fraction;
    opts.observer = !a.no_observer;
    if let Some(n) = a.episodes {
        opts.episodes = n;
    }
    let m = dataset::generate(&spec, &opts, &cfg.out)?;
    let val = m.episodes.iter().filter(|e| e.split == dataset::Split::Val).count();
    let frames: usize = m.episodes.iter().map(|e| e.frames).sum();
    println!(
        "{}: {} episodes ({} val), {frames} frames -> {}",
        task,
        m.episodes.len(),
        val,
        dataset::manifest_path(&cfg.out).display()
    );
    Ok(true)
}

fn identify(cfg: &RunConfig, a: &IdentifyArgs) -> Result<bool> {
    if a.seeds == 0 || !(a.noise >= 0.0) || !(a.prior > 0.0) {
        return Err(Error::Usage("need --seeds > 0, --noise >= 0 and --prior > 0".into()));
    }
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|k| cfg.seed + k).collect();
    let r = bench::identify_bench(a.noise, &seeds, a.prior)?;
    for run in &r.runs {
        let e = run.estimate;
        println!(
            "seed {:>4}: k_e {:.4e} k_v {:.4e} k_m {:.4e} tau {:.3} | err {:.3}% {:.3}% {:.3}% | tau off {}",
            run.seed,
            e.k_e,
            e.k_v,
            e.k_m,
            e.tau,
            100.0 * run.rel_error[0],
            100.0 * run.rel_error[1],
            100.0 * run.rel_error[2],
            run.tau_steps
        );
    }
    let (limit, tau_ok) = if a.noise == 0.0 { (0.01, r.worst_tau_steps <= 1) } else { (0.05, true) };
    let pass = r.worst_rel_error <= limit && tau_ok;
    println!(
        "worst error {:.3}% (limit {:.0}%), worst tau offset {} -> {}",
        100.0 * r.worst_rel_error,
        100.0 * limit,
        r.worst_tau_steps,
        if pass { "pass" } else { "FAIL" }
    );
    std::fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join("identify_bench.json"), &r)?;
    Ok(pass)
}

#[derive(Serialize)]
struct ControlResults {
    force: Vec<ForceRow>,
    /// Steady max-norm deformation error per template and depth, m.
    deformation: Vec<(String, f64, f64)>,
}

#[derive(Serialize)]
struct ForceRow {
    prior_factor: f64,
    settle_time: Option<f64>,
    hold_error: f64,
    final_force: f64,
}

fn control(cfg: &RunConfig, a: &ControlArgs) -> Result<bool> {
    if !(a.force > 0.0 && a.seconds > 2.0) || a.cycles == 0 {
        return Err(Error::Usage("need --force > 0, --seconds > 2 and --cycles > 0".into()));
    }
    let mut pass = true;
    let mut force = Vec::new();
    let mut walls = Vec::new();
    for prior in [0.9, 1.1] {
        let r = bench::press_hold_bench(prior, PresetName::Mid, a.force, cfg.seed, a.seconds)?;
        let ok = r.settle_time.is_some_and(|t| t <= 2.0) && r.hold_error <= 0.05 && r.wall_time < 10.0;
        pass &= ok;
        println!(
            "force prior x{prior}: settled {} s, hold error {:.2}%, final {:.4} N -> {}",
            r.settle_time.map_or("never".into(), |t| format!("{t:.2}")),
            100.0 * r.hold_error,
            r.final_force,
            if ok { "pass" } else { "FAIL" }
        );
        walls.push(r.wall_time);
        force.push(ForceRow {
            prior_factor: prior,
            settle_time: r.settle_time,
            hold_error: r.hold_error,
            final_force: r.final_force,
        });
    }
    let mut deformation = Vec::new();
    for (name, template) in [("flat", Template::FlatPunch), ("cap", Template::SphericalCap { radius: 4.0 })] {
        for depth in [1e-3, 4e-3, 7e-3, 10e-3] {
            let e = bench::deformation_bench(template, depth, PresetName::Mid.params().eps, a.seconds)?;
            let ok = e < 1e-3;
            pass &= ok;
            println!(
                "deformation {name} {:.0} mm: error {:.4} mm -> {}",
                depth * 1e3,
                e * 1e3,
                if ok { "pass" } else { "FAIL" }
            );
            deformation.push((name.to_string(), depth, e));
        }
    }
    let c = bench::cycle_bench(a.cycles, cfg.seed)?;
    let ok = c.worst_ms <= 10.0;
    pass &= ok;
    println!(
        "cycle: mean {:.3} ms, worst {:.3} ms over {} -> {}",
        c.mean_ms,
        c.worst_ms,
        c.cycles,
        if ok { "pass" } else { "FAIL" }
    );
    std::fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join("control_bench.json"), &ControlResults { force, deformation })?;
    write_json(&cfg.out.join("control_timing.json"), &serde_json::json!({ "press_wall_s": walls, "cycle": c }))?;
    Ok(pass)
}

fn serve_cmd(cfg: &RunConfig, a: &ServeArgs, headless: bool) -> Result<bool> {
    let task = task_or(cfg, a.task.as_deref())?.unwrap_or(TaskId::PressHold);
    let t = &cfg.teleop;
    let config = TeleopConfig {
        spec: cfg.spec(task)?,
        seed: cfg.seed,
        motion_scale: t.motion_scale,
        max_force: t.max_force,
        max_deformation_mm: t.max_deformation_mm,
        workspace: t.workspace,
        stream_hz: a.stream_hz.unwrap_or(t.stream_hz),
        observer: !a.no_observer,
    };
    serve::run(serve::ServeOptions {
        config,
        port: a.port.unwrap_or(t.port),
        out: cfg.out.clone(),
        headless,
        duration: a.duration,
    })?;
    Ok(true)
}

fn parse_sources(list: &str) -> Result<Vec<String>> {
    let known = ["scripted", "fixed-low", "fixed-mid", "fixed-high", "policy", "policy-no-field"];
    let out: Vec<String> = list.split(',').map(|s| s.trim().to_ascii_lowercase()).filter(|s| !s.is_empty()).collect();
    if out.is_empty() {
        return Err(Error::Usage("no sources given".into()));
    }
    for s in &out {
        if !known.contains(&s.as_str()) {
            return Err(Error::Usage(format!("unknown source '{s}'; expected one of {}", known.join(", "))));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct EvalResults<'a> {
    seed: u64,
    trials: usize,
    rows: &'a [EvalSummary],
}

fn evaluate(cfg: &RunConfig, a: &EvaluateArgs) -> Result<bool> {
    let tasks = match task_or(cfg, a.task.as_deref())? {
        Some(t) => vec![t],
        None => TaskId::ALL.to_vec(),
    };
    let trials = a.trials.unwrap_or(cfg.trials);
    if trials == 0 {
        return Err(Error::Usage("--trials must be positive".into()));
    }
    let names = parse_sources(&a.sources)?;
    let weights = a.weights.clone().or_else(|| cfg.weights.clone());
    let policy = if names.iter().any(|s| s.starts_with("policy")) {
        let path = weights.ok_or_else(|| Error::Usage("policy sources need --weights".into()))?;
        if !path.exists() {
            return Err(Error::Config(format!("{} does not exist", path.display())));
        }
        Some(Policy::new(WeightBundle::read(&path)?))
    } else {
        None
    };
    let mut rows = Vec::new();
    for task in &tasks {
        let spec = cfg.spec(*task)?;
        for name in &names {
            let source = match name.as_str() {
                "scripted" => Source::Scripted,
                "policy" => Source::Policy { policy: policy.as_ref().expect("loaded above"), decay: a.decay },
                "policy-no-field" => Source::NoField { policy: policy.as_ref().expect("loaded above"), decay: a.decay },
                fixed => Source::Fixed(PresetName::parse(fixed.trim_start_matches("fixed-"))?),
            };
            rows.push(eval::evaluate(&spec, &source, trials, cfg.seed)?);
        }
    }
    let text = format!("{}\n{}", eval::table(&rows), eval::matrix(&rows));
    print!("{text}");
    let mut pass = true;
    for task in [TaskId::Insert, TaskId::Wipe] {
        let rate = |src: &str| rows.iter().find(|r| r.task == task.as_str() && r.source == src).map(|r| r.successes);
        if let (Some(s), Some(f)) = (rate("scripted"), rate("fixed-mid")) {
            let ok = s > f;
            pass &= ok;
            println!(
                "ordering {task}: scripted {s} > fixed-mid {f} of {trials} -> {}",
                if ok { "pass" } else { "FAIL" }
            );
        }
    }
    std::fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join("results.json"), &EvalResults { seed: cfg.seed, trials, rows: &rows })?;
    std::fs::write(cfg.out.join("results.txt"), text)?;
    Ok(pass)
}

/// Scripted teleop exchange on the press-and-hold task; every server
/// message as one JSON line. Deterministic for a given seed.
pub fn teleop_replay(seed: u64) -> Result<String> {
    let config = TeleopConfig { seed, ..TeleopConfig::default() };
    let mut s = TeleopSession::open(1, config)?;
    let mut out = Vec::new();
    let send = |s: &mut TeleopSession, out: &mut Vec<String>, m: ClientMessage| -> Result<()> {
        out.push(format!("> {}", m.to_text()));
        for r in s.handle(m)? {
            out.push(format!("< {}", r.to_text()));
        }
        Ok(())
    };
    out.push(format!("< {}", catchform_core::teleop::ServerMessage::Hello(s.hello()).to_text()));
    send(&mut s, &mut out, ClientMessage::RecordStart)?;
    let mut seq = 0;
    for k in 0..12 {
        if k < 8 {
            seq += 1;
            send(
                &mut s,
                &mut out,
                ClientMessage::CommandPose { seq, arm: 0, delta: [0.0, 0.0, -0.002, 0.0, 0.0, 0.0] },
            )?;
        }
        if k == 6 {
            seq += 1;
            send(&mut s, &mut out, ClientMessage::SetPreset { seq, arm: 0, preset: PresetName::High })?;
        }
        s.tick()?;
        let p = s.state();
        let cue = s.cue_change(&p);
        out.push(format!("< {}", catchform_core::teleop::ServerMessage::State(p).to_text()));
        if let Some(c) = cue {
            out.push(format!("< {}", catchform_core::teleop::ServerMessage::Cue(c).to_text()));
        }
    }
    send(&mut s, &mut out, ClientMessage::RecordStop)?;
    Ok(out.join("\n") + "\n")
}

fn export_goldens(cfg: &RunConfig) -> Result<bool> {
    std::fs::create_dir_all(&cfg.out)?;
    let policy = golden::golden_policy()?;
    let seed = golden::GOLDEN_SEED;
    let chunk = cfg.out.join(format!("golden_chunk_seed{seed}.txt"));
    let bundle = cfg.out.join(format!("golden_weights_seed{seed}.cfa"));
    let replay = cfg.out.join("teleop_replay.jsonl");
    std::fs::write(&chunk, golden::render(&policy)?)?;
    policy.bundle().write(&bundle)?;
    std::fs::write(&replay, teleop_replay(cfg.seed)?)?;
    for p in [chunk, bundle, replay] {
        println!("wrote {}", p.display());
    }
    Ok(true)
}
