use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use lfgc::dataset::{extract_merge_cases, load_dataset, smooth_track, ExtractConfig, SchemaMap, DEFAULT_POLYORDER, DEFAULT_WINDOW};
use lfgc::sim::{
    batch_run, classify_outcome, run_scenario, BatchReport, Episode, EpisodeSummary, EventLog, ScenarioConfig,
};
use lfgc::{Error, Result};

/// Leader-follower game controller for highway forced merges.
#[derive(Parser)]
#[command(name = "lfgc", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for logs and summaries.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the chance-constraint level.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Override the planning horizon (steps).
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Override the sampling period (s).
    #[arg(long, global = true)]
    dt: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run { scenario: PathBuf },
    /// Run every scenario in a directory, or listed one per line in a file.
    Batch { source: PathBuf },
    /// Extract merge cases from a trajectory CSV and replay them.
    Replay {
        dataset: PathBuf,
        /// JSON column and lane mapping.
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Summarize event logs.
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
}

impl Global {
    fn apply(&self, mut cfg: ScenarioConfig) -> Result<ScenarioConfig> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epsilon {
            cfg.planner.epsilon = e;
        }
        if let Some(h) = self.horizon {
            cfg.planner.horizon = h;
        }
        if let Some(dt) = self.dt {
            cfg.planner.dt = dt;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_file(p: &Path, contents: &str) -> Result<()> {
    fs::write(p, contents).map_err(|e| Error::io(p, e))
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
}

fn write_log(dir: &Path, name: &str, ep: &Episode) -> Result<()> {
    let path = dir.join(format!("{name}.jsonl"));
    let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    ep.log.write_jsonl(std::io::BufWriter::new(f))
}

fn write_report(dir: &Path, label: &str, report: &BatchReport) -> Result<()> {
    let table = report.summary.to_table(label);
    print!("{table}");
    write_file(&dir.join("summary.txt"), &table)?;
    write_file(&dir.join("summary.json"), &serde_json::to_string_pretty(report)?)
}

/// Non-zero when any scenario could not be loaded or run.
fn batch_status(report: &BatchReport) -> ExitCode {
    for e in report.episodes.iter().filter(|e| e.error.is_some()) {
        eprintln!("{}: {}", e.scenario, e.error.as_deref().unwrap_or_default());
    }
    if report.summary.errors > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn scenario_paths(source: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(source).map_err(|e| Error::io(source, e))?;
    if meta.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(source)
            .map_err(|e| Error::io(source, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        Ok(paths)
    } else {
        let text = fs::read_to_string(source).map_err(|e| Error::io(source, e))?;
        let base = source.parent().unwrap_or(Path::new("."));
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| base.join(l))
            .collect())
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match &cli.command {
        Command::Run { scenario } => {
            let cfg = g.apply(ScenarioConfig::from_path(scenario)?)?;
            create_dir(&g.out)?;
            let name = if cfg.name.is_empty() { file_stem(scenario) } else { cfg.name.clone() };
            let ep = run_scenario(&cfg)?;
            write_log(&g.out, &name, &ep)?;
            let summary = EpisodeSummary::from_episode(&name, cfg.seed, &ep);
            println!("{}", serde_json::to_string(&summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Batch { source } => {
            let paths = scenario_paths(source)?;
            if paths.is_empty() {
                return Err(Error::Domain(format!("no scenarios found in {}", source.display())));
            }
            create_dir(&g.out)?;
            let items = paths
                .iter()
                .map(|p| (file_stem(p), ScenarioConfig::from_path(p).and_then(|c| g.apply(c))))
                .collect();
            let report = batch_run(items, |name, ep| write_log(&g.out, name, ep));
            write_report(&g.out, "LFGC", &report)?;
            Ok(batch_status(&report))
        }
        Command::Replay { dataset, schema } => {
            let map = match schema {
                Some(p) => SchemaMap::from_path(p)?,
                None => SchemaMap::default(),
            };
            let data = load_dataset(dataset, &map)?;
            for d in &data.diagnostics {
                warn!("{d}");
            }
            let mut tracks = Vec::with_capacity(data.tracks.len());
            for t in &data.tracks {
                let s = smooth_track(t, DEFAULT_WINDOW, DEFAULT_POLYORDER, map.frame_period)?;
                if !s.smoothed {
                    warn!("vehicle {}: {} frames, left unsmoothed", t.id, t.frames.len());
                }
                tracks.push(s.track);
            }
            let extraction = extract_merge_cases(&tracks, &map, &ExtractConfig::default());
            for d in &extraction.diagnostics {
                warn!("{d}");
            }
            info!("{} tracks, {} merge cases", tracks.len(), extraction.cases.len());
            create_dir(&g.out)?;
            write_file(&g.out.join("cases.json"), &serde_json::to_string_pretty(&extraction.cases)?)?;
            let items = extraction
                .cases
                .iter()
                .map(|c| (c.scenario.name.clone(), g.apply(c.scenario.clone())))
                .collect();
            let report = batch_run(items, |name, ep| write_log(&g.out, name, ep));
            write_report(&g.out, &file_stem(dataset), &report)?;
            Ok(batch_status(&report))
        }
        Command::Report { logs } => {
            let mut episodes = Vec::with_capacity(logs.len());
            for p in logs {
                let f = fs::File::open(p).map_err(|e| Error::io(p, e))?;
                let log = EventLog::read_jsonl(BufReader::new(f))?;
                let header = log
                    .header()
                    .ok_or_else(|| Error::Domain(format!("{}: log has no header", p.display())))?;
                let outcome = match log.outcome() {
                    Some(o) => o.clone(),
                    None => classify_outcome(&log, lfgc::rewards::RewardConfig::default().box_margin)?,
                };
                let name = if header.scenario.is_empty() { file_stem(p) } else { header.scenario.clone() };
                let ep = Episode {
                    outcome,
                    log: log.clone(),
                };
                episodes.push(EpisodeSummary::from_episode(&name, header.seed, &ep));
            }
            create_dir(&g.out)?;
            write_report(&g.out, "LFGC", &BatchReport::from_episodes(episodes))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
