use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use uavchase_core::channel::{rssi, ChannelParams, FadingProcess, RX_COUNT};
use uavchase_core::config::{parse_config, Config, Overrides, RunRecord, SEED_ENV};
use uavchase_core::eval::{self, write_eval_csv, write_summary_csv, SUMMARY_CSV_HEADER};
use uavchase_core::policy::NetworkPolicy;
use uavchase_core::trainer::{self, EpisodeStats, Trainer};
use uavchase_core::world::{WorldParams, DIMENSIONS};

const METRICS_HEADER: &str = "wall_s,episode,worker,net,loss_p,loss_v,entropy,ep_reward_d,ep_reward_x,ep_reward_y,ep_reward_z,movements,success,version";

#[derive(Parser)]
#[command(name = "uavchase", version, about = "Train and evaluate RSSI-driven UAV swarm trackers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the four networks and write metrics plus a checkpoint.
    Train(Common),
    /// Evaluate a checkpoint over the configured F × rho × v sweep.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Also write a per-movement trace of the first episode of every condition.
        #[arg(long)]
        trace: bool,
    },
    /// Stream RSSI samples of a static swarm as CSV.
    ChannelProbe {
        #[command(flatten)]
        common: Common,
        /// Samples per receiver.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Distance of every receiver to the target (m).
        #[arg(long, default_value_t = 100.0)]
        distance: f64,
    },
    /// Concatenate every `*summary*.csv` under a directory into one table.
    Report {
        dir: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config, or a run.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Checkpoint to write (train) or read (eval). Defaults to OUT_DIR/checkpoint.uavc.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Training budget for `train`, episodes per condition for `eval`.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sweep_f: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    sweep_rho: Option<Vec<f64>>,
    /// Greedy action selection during evaluation.
    #[arg(long)]
    greedy: bool,
}

impl Common {
    fn config(&self, training: bool) -> Result<Config> {
        let overrides = Overrides {
            seed: self.seed,
            workers: self.workers,
            train_episodes: self.episodes.filter(|_| training),
            eval_episodes: self.episodes.filter(|_| !training),
            sweep_f: self.sweep_f.clone(),
            sweep_rho: self.sweep_rho.clone(),
            greedy: self.greedy.then_some(true),
        };
        let env_seed = std::env::var(SEED_ENV).ok();
        Ok(parse_config(self.config.as_deref(), &overrides, env_seed.as_deref())?)
    }

    fn checkpoint(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("checkpoint.uavc"))
    }

    fn prepare_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))
    }
}

fn write_record(dir: &Path, command: &str, cfg: &Config) -> Result<()> {
    RunRecord::new(command, cfg).write(&dir.join("run.json"))?;
    Ok(())
}

fn metrics_rows(w: &mut impl Write, s: &EpisodeStats) -> io::Result<()> {
    for (n, tag) in DIMENSIONS.iter().enumerate() {
        let l = &s.losses[n];
        writeln!(
            w,
            "{:.3},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.wall_s,
            s.episode,
            s.worker,
            tag,
            l.policy,
            l.value,
            l.entropy,
            s.rewards[0],
            s.rewards[1],
            s.rewards[2],
            s.rewards[3],
            s.movements,
            u8::from(s.success),
            s.version
        )?;
    }
    Ok(())
}

fn cmd_train(args: &Common) -> Result<()> {
    let cfg = args.config(true)?;
    args.prepare_out_dir()?;
    write_record(&args.out_dir, "train", &cfg)?;
    let path = args.out_dir.join("metrics.csv");
    let fresh = !path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut metrics = BufWriter::new(file);
    if fresh {
        writeln!(metrics, "{METRICS_HEADER}")?;
    }
    let trainer = Trainer::new(cfg.train_setup())?;
    let outcome = trainer.run(|s| {
        metrics_rows(&mut metrics, s).map_err(|e| uavchase_core::Error::io(&path, e))?;
        if (s.episode + 1) % 100 == 0 {
            log::info!("episode {} done, version {}", s.episode + 1, s.version);
        }
        Ok(())
    })?;
    metrics.flush()?;
    let ckpt = args.checkpoint();
    trainer::save(&ckpt, &outcome.snapshot.nets)?;
    eprintln!(
        "trained {} episodes ({} updates, {} rejected{}); checkpoint {}",
        outcome.episodes,
        outcome.accepted,
        outcome.rejected,
        if outcome.stopped_early { ", stopped early" } else { "" },
        ckpt.display()
    );
    Ok(())
}

fn cmd_eval(args: &Common, trace: bool) -> Result<()> {
    let cfg = args.config(false)?;
    let ckpt = args.checkpoint();
    if !ckpt.exists() {
        bail!("checkpoint {} does not exist", ckpt.display());
    }
    let nets = trainer::load(&ckpt, &cfg.net).with_context(|| format!("loading {}", ckpt.display()))?;
    args.prepare_out_dir()?;
    write_record(&args.out_dir, "eval", &cfg)?;
    let policy = NetworkPolicy::new(Arc::new(nets), cfg.eval.greedy);
    let results = eval::sweep(&policy, &cfg.channel, &cfg.world, &cfg.eval, cfg.seed())?;
    let mut out = BufWriter::new(File::create(args.out_dir.join("eval.csv"))?);
    for (i, r) in results.iter().enumerate() {
        write_eval_csv(&mut out, &r.records, cfg.world.obs_len, i == 0)?;
    }
    out.flush()?;
    if trace && cfg.eval.episodes > 0 {
        for r in &results {
            let s = &r.summary;
            let channel = ChannelParams {
                sample_hz: s.sample_hz,
                rho: s.rho,
                ..cfg.channel
            };
            let world = WorldParams {
                speed_mps: s.speed_mps,
                ..cfg.world
            };
            let rows = eval::trace_episode(&policy, &channel, &world, cfg.seed(), 0)?;
            let name = format!("trace_F{}_rho{}_v{}.csv", s.sample_hz, s.rho, s.speed_mps);
            eval::write_trace_csv(BufWriter::new(File::create(args.out_dir.join(name))?), &rows)?;
        }
    }
    let rows: Vec<_> = results.into_iter().map(|r| r.summary).collect();
    write_summary_csv(BufWriter::new(File::create(args.out_dir.join("summary.csv"))?), &rows)?;
    for r in &rows {
        eprintln!(
            "F={} rho={} v={}: success {:.3}, p50 {:?}, p90 {:?}",
            r.sample_hz, r.rho, r.speed_mps, r.success_rate, r.p50, r.p90
        );
    }
    Ok(())
}

fn cmd_channel_probe(args: &Common, samples: usize, distance: f64) -> Result<()> {
    let cfg = args.config(false)?;
    args.prepare_out_dir()?;
    write_record(&args.out_dir, "channel-probe", &cfg)?;
    let mut process = FadingProcess::new(&cfg.channel, cfg.seed())?;
    let dt = 1.0 / cfg.channel.sample_hz;
    let stdout = io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    writeln!(w, "time_s,rx,rssi_dbm,gain_re,gain_im")?;
    let distances = [distance; RX_COUNT];
    for i in 0..samples {
        let step = if i == 0 { 0.0 } else { dt };
        for s in rssi(&cfg.channel, &mut process, &distances, step)? {
            writeln!(w, "{},{},{},{},{}", s.time_s, s.rx, s.value_dbm, s.gain.0, s.gain.1)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn summary_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .collect::<io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            summary_files(&p, out)?;
        } else {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.contains("summary") && name.ends_with(".csv") {
                out.push(p);
            }
        }
    }
    Ok(())
}

fn cmd_report(dir: &Path, output: Option<&Path>) -> Result<()> {
    let mut files = Vec::new();
    summary_files(dir, &mut files)?;
    if let Some(o) = output {
        let o = o.canonicalize().unwrap_or_else(|_| o.to_path_buf());
        files.retain(|f| f.canonicalize().map(|c| c != o).unwrap_or(true));
    }
    if files.is_empty() {
        bail!("no summary CSV files under {}", dir.display());
    }
    let mut table = String::new();
    table.push_str(&format!("source,{SUMMARY_CSV_HEADER}\n"));
    for f in &files {
        let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        let mut lines = text.lines();
        if lines.next() != Some(SUMMARY_CSV_HEADER) {
            bail!("{} is not a summary CSV", f.display());
        }
        let source = f.strip_prefix(dir).unwrap_or(f).display().to_string();
        for line in lines.filter(|l| !l.is_empty()) {
            table.push_str(&format!("{source},{line}\n"));
        }
    }
    match output {
        Some(o) => fs::write(o, table).with_context(|| format!("writing {}", o.display()))?,
        None => io::stdout().write_all(table.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(c) => cmd_train(c),
        Command::Eval { common, trace } => cmd_eval(common, *trace),
        Command::ChannelProbe {
            common,
            samples,
            distance,
        } => cmd_channel_probe(common, *samples, *distance),
        Command::Report { dir, output } => cmd_report(dir, output.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
