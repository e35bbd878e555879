use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use srassim::config::{parse_config, RunConfig};
use srassim::filters::{run_filter_season, FilterConfig};
use srassim::harness::{compare_paired, fit_rms, forecast_series, noise_of, scenario_observations, seeded_config, sweep, sweep_cells, ForecastResult};
use srassim::output::{read_forecast_csv, write_compare_csv, write_fit_csv, write_forecast_csv, write_json, write_sweep_csv, write_truth_csv, RunManifest};

#[derive(Parser)]
#[command(name = "srassim", version, about = "SIRS data assimilation with space re-probing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic truth and its noisy observations.
    Simulate(Common),
    /// Fit one season and write per-week ensemble summaries.
    Fit(Common),
    /// Forecast from each configured training week.
    Forecast(Common),
    /// Paired peak-accuracy comparison of re-probed and unmodified forecasts.
    Compare(CompareArgs),
    /// Run the configured sweep grid.
    Sweep(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "SRASSIM_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Override `reprobe.enabled` from the config.
    #[arg(long, value_enum)]
    sr: Option<Switch>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Forecast CSV of the re-probed runs; computed when omitted.
    #[arg(long, requires = "base_results")]
    sr_results: Option<PathBuf>,
    /// Forecast CSV of the unmodified runs.
    #[arg(long, requires = "sr_results")]
    base_results: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn as_bool(self) -> bool {
        matches!(self, Switch::On)
    }
}

struct Run {
    cfg: RunConfig,
    common: Common,
    outputs: Vec<String>,
    seeds: Vec<u64>,
    started: Instant,
}

impl Run {
    fn new(common: &Common) -> Result<Self> {
        let cfg = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                parse_config(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        fs::create_dir_all(&common.out_dir).with_context(|| format!("creating {}", common.out_dir.display()))?;
        Ok(Self { cfg, common: common.clone(), outputs: Vec::new(), seeds: Vec::new(), started: Instant::now() })
    }

    fn sr(&self) -> Option<bool> {
        self.common.sr.map(Switch::as_bool)
    }

    /// Trial seeds: the configured offsets shifted by the base seed.
    fn trial_seeds(&self) -> Vec<u64> {
        self.cfg.harness.seeds.iter().map(|s| self.common.seed.wrapping_add(*s)).collect()
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.common.out_dir.join(name);
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
    }

    fn finish(mut self, command: &str) -> Result<()> {
        let manifest = RunManifest {
            config_hash: self.cfg.hash(),
            seeds: std::mem::take(&mut self.seeds),
            command: command.to_string(),
            version: srassim::VERSION.to_string(),
            outputs: self.outputs.clone(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = self.common.out_dir.join("manifest.json");
        write_json(BufWriter::new(File::create(&path)?), &manifest)?;
        Ok(())
    }
}

fn sr_label(sr: Option<bool>) -> &'static str {
    match sr {
        Some(true) => " --sr on",
        Some(false) => " --sr off",
        None => "",
    }
}

fn simulate(common: &Common) -> Result<()> {
    let mut run = Run::new(common)?;
    let scenario = run.cfg.scenario.primary();
    let filter = run.cfg.filter_config(None);
    let (truth, obs) = scenario_observations(&scenario, &run.cfg.model, &noise_of(&filter), common.seed)?;
    let weeks_per_year = 52;
    write_truth_csv(run.create("truth.csv")?, &truth, &obs, weeks_per_year)?;
    run.seeds = vec![common.seed];
    run.finish("simulate")
}

fn fit(common: &Common) -> Result<()> {
    let mut run = Run::new(common)?;
    let scenario = run.cfg.scenario.primary();
    let filter = seeded_config(&run.cfg.filter_config(run.sr()), common.seed);
    let (_, obs) = scenario_observations(&scenario, &run.cfg.model, &noise_of(&filter), common.seed)?;
    let season = run_filter_season(&obs, &filter, &run.cfg.model)?;
    let rms = fit_rms(&season, &obs.observed)?;
    write_fit_csv(run.create("fit.csv")?, &season.records, rms)?;
    run.seeds = vec![common.seed];
    let label = format!("fit{}", sr_label(run.sr()));
    run.finish(&label)
}

/// Forecasts for every (scenario, seed) trial, in that order.
fn forecasts(run: &Run, filter: &FilterConfig) -> Result<Vec<ForecastResult>> {
    let model = &run.cfg.model;
    let weeks = run.cfg.forecast_weeks();
    let mut trials = Vec::new();
    for scenario in run.cfg.scenarios() {
        for seed in run.trial_seeds() {
            trials.push((scenario.clone(), seed));
        }
    }
    let nested: Vec<Vec<ForecastResult>> = trials
        .par_iter()
        .map(|(scenario, seed)| -> srassim::Result<Vec<ForecastResult>> {
            let (_, obs) = scenario_observations(scenario, model, &noise_of(filter), *seed)?;
            let mut out = forecast_series(&obs, &weeks, &seeded_config(filter, *seed), model)?;
            for r in &mut out {
                r.scenario = scenario.name().to_string();
                r.seed = *seed;
            }
            Ok(out)
        })
        .collect::<srassim::Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

fn forecast(common: &Common) -> Result<()> {
    let mut run = Run::new(common)?;
    let filter = run.cfg.filter_config(run.sr());
    let results = forecasts(&run, &filter)?;
    write_forecast_csv(run.create("forecast.csv")?, &results)?;
    run.seeds = run.trial_seeds();
    let label = format!("forecast{}", sr_label(run.sr()));
    run.finish(&label)
}

fn read_results(path: &Path) -> Result<Vec<ForecastResult>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_forecast_csv(file).with_context(|| format!("reading {}", path.display()))
}

fn compare(args: &CompareArgs) -> Result<()> {
    let common = &args.common;
    if common.sr.is_some() {
        bail!("compare runs both arms; --sr does not apply");
    }
    let mut run = Run::new(common)?;
    let (with_sr, without) = match (&args.sr_results, &args.base_results) {
        (Some(a), Some(b)) => (read_results(a)?, read_results(b)?),
        _ => {
            let on = forecasts(&run, &run.cfg.filter_config(Some(true)))?;
            let off = forecasts(&run, &run.cfg.filter_config(Some(false)))?;
            write_forecast_csv(run.create("forecast_sr.csv")?, &on)?;
            write_forecast_csv(run.create("forecast_base.csv")?, &off)?;
            (on, off)
        }
    };
    let cmp = compare_paired(&with_sr, &without)?;
    write_compare_csv(run.create("compare.csv")?, &cmp)?;
    let mut seeds: Vec<u64> = with_sr.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    run.seeds = seeds;
    run.finish("compare")
}

fn run_sweep(common: &Common) -> Result<()> {
    let mut run = Run::new(common)?;
    let base = run.cfg.filter_config(run.sr().or(Some(true)));
    let h = &run.cfg.harness;
    let rows = sweep(h.sweep_axis, &h.sweep_values, &base, &run.cfg.scenarios(), &run.trial_seeds(), &run.cfg.forecast_weeks(), &run.cfg.model)?;
    write_sweep_csv(run.create("sweep.csv")?, &rows)?;
    write_json(run.create("sweep_cells.json")?, &sweep_cells(&rows))?;
    run.seeds = run.trial_seeds();
    let label = format!("sweep{}", sr_label(run.sr()));
    run.finish(&label)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Simulate(c) | Command::Fit(c) | Command::Forecast(c) | Command::Sweep(c) => c,
        Command::Compare(a) => &a.common,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(common.jobs).build()?;
    pool.install(|| match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Fit(c) => fit(c),
        Command::Forecast(c) => forecast(c),
        Command::Compare(a) => compare(a),
        Command::Sweep(c) => run_sweep(c),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
