//! Command implementations behind the `conjsim` binary.

pub mod dataset;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use conjsim::cdm::{parse_cdm_csv, parse_cdm_jsonl, read_reference_covariances, CdmError, CdmSeries, ReferenceCovariances};
use conjsim::population::{fit_prior, read_catalog, BinningPolicy, CatalogMode, SizeElement};
use conjsim::ppl::{posterior_marginal_with_edges, WeightedHistogram};
use conjsim::propagation::{Ephemeris, Propagated};
use conjsim::scenario::{
    calibrate_sensors, generate_event, infer_event, parse_posterior_dump, posterior_diagnostics, site_names,
    write_posterior_dump, CalibrationSettings, ConditionOn, EventOutcome, ScenarioConfig, ScenarioError,
};
use conjsim::textio::to_pretty;

pub use dataset::{generate_dataset, DatasetManifest, GenerateOptions};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_NO_CONJUNCTION: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_PARSE: i32 = 4;
pub const EXIT_CAP: i32 = 5;

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new(EXIT_PARSE, message)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        let code = match e {
            ScenarioError::DegeneratePosterior { .. } => EXIT_DEGENERATE,
            ScenarioError::CapExhausted { .. } => EXIT_CAP,
            ScenarioError::Config(_) => EXIT_PARSE,
            _ => EXIT_OTHER,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<CdmError> for CliError {
    fn from(e: CdmError) -> Self {
        let code = match e {
            CdmError::Parse { .. } | CdmError::Version { .. } => EXIT_PARSE,
            _ => EXIT_OTHER,
        };
        CliError::new(code, e.to_string())
    }
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(EXIT_OTHER, format!("{}: {e}", path.display()))
}

pub(crate) fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

#[derive(Debug, Parser)]
#[command(name = "conjsim", version, about = "Synthetic conjunctions, CDM series and posterior inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides applied on top of the config file.
#[derive(Debug, Clone, Args, Default)]
pub struct ConfigArgs {
    /// Scenario config (TOML). Built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Conjunction screening threshold in km.
    #[arg(long)]
    pub threshold_km: Option<f64>,
    /// CDM issuing cadence in hours.
    #[arg(long)]
    pub cadence_h: Option<f64>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<ScenarioConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::from_toml_str(&read_text(path)?)
                .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?,
            None => ScenarioConfig::default(),
        };
        if let Some(t) = self.threshold_km {
            cfg.threshold_km = t;
        }
        if let Some(c) = self.cadence_h {
            cfg.cadence_s = c * 3600.0;
        }
        cfg.validate().map_err(|e| CliError::parse(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset of conjunction events and their CDM series.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        n_events: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Prior draws allowed per event.
        #[arg(long, default_value_t = 200_000)]
        max_attempts: usize,
    },
    /// Run the model once and report the event.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Orbit trace CSV (time and both positions over the window).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 60.0)]
        trace_step_s: f64,
    },
    /// Posterior over the latent elements given a CDM series.
    Infer {
        #[command(flatten)]
        config: ConfigArgs,
        /// CDM series (.jsonl or .csv).
        #[arg(long)]
        cdm: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Posterior dump (JSON lines). Diagnostics go to standard output.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// first | all | index K (also index:K)
        #[arg(long, default_value = "first")]
        condition_on: String,
        /// Multiplies every likelihood sigma.
        #[arg(long, default_value_t = 1.0)]
        sigma_scale: f64,
    },
    /// Tune sensor noise to match reference covariances.
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
        /// CDM CSV file(s) or a dataset directory.
        #[arg(long, required = true)]
        reference: Vec<PathBuf>,
        /// Calibrated config (TOML). The report is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulated conjunctions per objective evaluation.
        #[arg(long, default_value_t = 20)]
        n_events: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Weighted histogram of one site from a posterior dump.
    Histogram {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long)]
        site: String,
        #[arg(long, default_value_t = 30)]
        bins: usize,
        /// CSV output; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the built-in scenario config.
    DefaultConfig,
    /// Fit a population prior to a TLE catalog.
    FitPrior {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        bins: usize,
        /// Carry orbit size as semi-major axis instead of mean motion.
        #[arg(long)]
        semi_major_axis: bool,
        /// Skip malformed records instead of failing.
        #[arg(long)]
        lenient: bool,
    },
}

pub fn parse_condition_on(s: &str) -> Result<ConditionOn, CliError> {
    let bad = || CliError::parse(format!("--condition-on expects first, all or index K, got {s:?}"));
    match s.trim() {
        "first" => Ok(ConditionOn::First),
        "all" => Ok(ConditionOn::All),
        t => {
            let k = t
                .strip_prefix("index")
                .map(|r| r.trim_start_matches([':', '=', ' ']))
                .unwrap_or(t);
            k.trim().parse().map(ConditionOn::Index).map_err(|_| bad())
        }
    }
}

pub fn read_series(path: &Path) -> Result<CdmSeries, CliError> {
    let text = read_text(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "csv") {
        parse_cdm_csv(&text)
    } else {
        parse_cdm_jsonl(&text)
    };
    parsed.map_err(|e| {
        let code = CliError::from(e);
        CliError::new(code.code, format!("{}: {}", path.display(), code.message))
    })
}

/// Reference covariances from CSV files and dataset directories. Series in
/// JSON lines are accepted too.
pub fn read_references(paths: &[PathBuf]) -> Result<ReferenceCovariances, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let events = p.join("events");
            let dir = if events.is_dir() { events } else { p.clone() };
            let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(|e| io_err(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|e| e == "jsonl" || e == "csv"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    let mut out = ReferenceCovariances::default();
    for f in &files {
        let with_path = |e: CdmError| {
            let c = CliError::from(e);
            CliError::new(c.code, format!("{}: {}", f.display(), c.message))
        };
        if f.extension().is_some_and(|e| e == "csv") {
            let r = read_reference_covariances(&read_text(f)?).map_err(with_path)?;
            out.target.extend(r.target);
            out.chaser.extend(r.chaser);
        } else {
            let s = parse_cdm_jsonl(&read_text(f)?).map_err(with_path)?;
            for r in s.records {
                out.target.push(r.target.covariance_rtn);
                out.chaser.push(r.chaser.covariance_rtn);
            }
        }
    }
    if out.target.is_empty() {
        return Err(CliError::parse("no reference covariances found"));
    }
    Ok(out)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::new(EXIT_OTHER, e.to_string()))
}

#[derive(Serialize)]
struct SimulateReport {
    seed: u64,
    outcome: String,
    tca_s: Option<f64>,
    miss_distance_km: Option<f64>,
    relative_speed_km_s: Option<f64>,
    cdm_count: Option<usize>,
    detail: Option<String>,
    orbit_trace: Option<String>,
    orbit_trace_rows: Option<usize>,
}

/// Orbit trace rows at `0, step, 2·step, ...` up to the window end.
pub fn orbit_trace_csv(
    cfg: &ScenarioConfig,
    target: &conjsim::astro::OrbitalElements,
    chaser: &conjsim::astro::OrbitalElements,
    step: f64,
) -> Result<(String, usize), CliError> {
    let a = Propagated::new(*target, cfg.propagator).map_err(|e| CliError::new(EXIT_OTHER, e.to_string()))?;
    let b = Propagated::new(*chaser, cfg.propagator).map_err(|e| CliError::new(EXIT_OTHER, e.to_string()))?;
    let (start, end) = cfg.window();
    let rows = ((end - start) / step + 1e-9).floor() as usize + 1;
    let mut text = String::from("t_s,target_x_km,target_y_km,target_z_km,chaser_x_km,chaser_y_km,chaser_z_km\n");
    for k in 0..rows {
        let t = start + k as f64 * step;
        let (sa, sb) = match (a.state_at(t), b.state_at(t)) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(e), _) | (_, Err(e)) => return Err(CliError::new(EXIT_OTHER, e.to_string())),
        };
        let (p, q) = (sa.position, sb.position);
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t.seconds(),
            p.x,
            p.y,
            p.z,
            q.x,
            q.y,
            q.z
        ));
    }
    Ok((text, rows))
}

fn simulate(config: &ConfigArgs, seed: u64, out: Option<&Path>, step: f64) -> Result<i32, CliError> {
    let cfg = config.load()?;
    if !(step > 0.0) {
        return Err(CliError::parse("--trace-step-s must be positive"));
    }
    let g = generate_event(&cfg, seed, "simulated")?;
    let mut report = SimulateReport {
        seed,
        outcome: String::new(),
        tca_s: None,
        miss_distance_km: None,
        relative_speed_km_s: None,
        cdm_count: None,
        detail: None,
        orbit_trace: None,
        orbit_trace_rows: None,
    };
    let code = match &g.outcome {
        EventOutcome::Conjunction { event, series } => {
            report.outcome = "conjunction".into();
            report.tca_s = Some(event.tca.seconds());
            report.miss_distance_km = Some(event.miss_distance);
            report.relative_speed_km_s = Some(event.relative_speed);
            report.cdm_count = Some(series.records.len());
            if let Some(path) = out {
                let (text, rows) = orbit_trace_csv(&cfg, &event.target_elements, &event.chaser_elements, step)?;
                write_text(path, &text)?;
                report.orbit_trace = Some(path.display().to_string());
                report.orbit_trace_rows = Some(rows);
            }
            0
        }
        EventOutcome::NoConjunction => {
            report.outcome = "no_conjunction".into();
            EXIT_NO_CONJUNCTION
        }
        EventOutcome::Failed(f) => {
            report.outcome = "failed".into();
            report.detail = Some(f.to_string());
            EXIT_OTHER
        }
    };
    println!("{}", to_pretty(&report));
    Ok(code)
}

#[derive(Serialize)]
struct InferReport<'a> {
    cdm: String,
    condition_on: String,
    sigma_scale: f64,
    n_samples: usize,
    seed: u64,
    runtime_s: f64,
    diagnostics: &'a conjsim::scenario::PosteriorDiagnostics,
}

#[allow(clippy::too_many_arguments)]
fn infer(
    config: &ConfigArgs,
    cdm: &Path,
    n_samples: usize,
    seed: u64,
    out: &Path,
    workers: usize,
    condition_on: &str,
    sigma_scale: f64,
) -> Result<i32, CliError> {
    let mut cfg = config.load()?;
    let condition = parse_condition_on(condition_on)?;
    if !(sigma_scale > 0.0 && sigma_scale.is_finite()) {
        return Err(CliError::parse("--sigma-scale must be positive"));
    }
    cfg.likelihood_sigmas = cfg.likelihood_sigmas.scaled(sigma_scale);
    let series = read_series(cdm)?;
    let started = Instant::now();
    let posterior = pool(workers)?.install(|| infer_event(&series, &cfg, n_samples, seed, condition))?;
    let runtime_s = started.elapsed().as_secs_f64();
    let sites = site_names(&cfg);
    let mut buf = Vec::new();
    write_posterior_dump(&posterior, &sites, &cfg.likelihood_sigmas, &condition.to_string(), &mut buf)?;
    write_text(out, &String::from_utf8(buf).expect("dump is UTF-8"))?;
    let diagnostics = posterior_diagnostics(&posterior, &sites)?;
    println!(
        "{}",
        to_pretty(&InferReport {
            cdm: cdm.display().to_string(),
            condition_on: condition.to_string(),
            sigma_scale,
            n_samples,
            seed,
            runtime_s,
            diagnostics: &diagnostics,
        })
    );
    Ok(0)
}

fn report_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.calibration.json"))
}

fn calibrate(
    config: &ConfigArgs,
    reference: &[PathBuf],
    out: &Path,
    seed: u64,
    n_events: usize,
    workers: usize,
) -> Result<i32, CliError> {
    let mut cfg = config.load()?;
    let refs = read_references(reference)?;
    let settings = CalibrationSettings {
        n_events,
        ..Default::default()
    };
    let cal = pool(workers)?.install(|| calibrate_sensors(&refs, &cfg, seed, &settings))?;
    cfg.target_sensor = cal.target_sensor;
    cfg.chaser_sensor = cal.chaser_sensor;
    write_text(out, &cfg.to_toml_string())?;
    let rp = report_path(out);
    write_text(&rp, &(to_pretty(&cal.report) + "\n"))?;
    if let Some(w) = &cal.report.warning {
        log::warn!("calibration: {w}");
    }
    println!(
        "target scale {:.6}, chaser scale {:.6}; config {}, report {}",
        cal.report.target_scale,
        cal.report.chaser_scale,
        out.display(),
        rp.display()
    );
    Ok(0)
}

/// Posterior and prior (proposal) histograms of `site` from a dump.
pub fn dump_histogram(text: &str, site: &str, bins: usize) -> Result<(WeightedHistogram, WeightedHistogram), CliError> {
    let dump = parse_posterior_dump(text).map_err(|e| CliError::parse(e.to_string()))?;
    let j = dump
        .site_index(site)
        .ok_or_else(|| CliError::new(EXIT_OTHER, format!("site {site} not in dump (sites: {:?})", dump.header.sites)))?;
    if bins == 0 {
        return Err(CliError::new(EXIT_OTHER, "--bins must be positive"));
    }
    let lw: Vec<f64> = dump.log_weights.iter().map(|w| w.unwrap_or(f64::NEG_INFINITY)).collect();
    let samples = dump
        .values
        .iter()
        .zip(&lw)
        .map(|(row, w)| {
            let mut trace = conjsim::ppl::Trace::default();
            trace.entries.push(conjsim::ppl::TraceEntry {
                address: conjsim::ppl::Address::new(site, 0),
                value: row[j],
                log_prior: 0.0,
            });
            conjsim::ppl::WeightedSample { trace, log_weight: *w }
        })
        .collect();
    let p = conjsim::ppl::WeightedPosterior::from_samples(samples);
    let (lo, hi) = dump
        .values
        .iter()
        .map(|r| r[j])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let edges: Vec<f64> = (0..=bins)
        .map(|k| if k == bins { hi } else { lo + (hi - lo) * k as f64 / bins as f64 })
        .collect();
    let post = posterior_marginal_with_edges(&p, site, 0, &edges).map_err(|e| CliError::new(EXIT_DEGENERATE, e.to_string()))?;
    let prior = conjsim::ppl::proposal_marginal(&p, site, 0, &edges);
    Ok((post, prior))
}

fn histogram(dump: &Path, site: &str, bins: usize, out: Option<&Path>) -> Result<i32, CliError> {
    let (post, prior) = dump_histogram(&read_text(dump)?, site, bins)?;
    let mut text = String::from("bin_lo,bin_hi,posterior_mass,prior_mass\n");
    for k in 0..post.masses.len() {
        text.push_str(&format!(
            "{},{},{},{}\n",
            post.edges[k],
            post.edges[k + 1],
            post.masses[k],
            prior.masses[k]
        ));
    }
    match out {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn fit(catalog: &Path, out: &Path, bins: usize, sma: bool, lenient: bool) -> Result<i32, CliError> {
    let mode = if lenient { CatalogMode::Lenient } else { CatalogMode::Strict };
    let read = read_catalog(&read_text(catalog)?, mode)
        .map_err(|e| CliError::parse(format!("{}: line {}: {}", catalog.display(), e.line, e.error)))?;
    for s in &read.skipped {
        log::warn!("{}: skipped line {}: {}", catalog.display(), s.line, s.error);
    }
    let records: Vec<_> = read.entries.into_iter().map(|e| e.record).collect();
    let policy = BinningPolicy {
        bins,
        size_element: if sma { SizeElement::SemiMajorAxis } else { SizeElement::MeanMotion },
    };
    let prior = fit_prior(&records, &policy).map_err(|e| CliError::new(EXIT_OTHER, e.to_string()))?;
    write_text(out, &prior.to_toml_string())?;
    println!("fitted prior from {} records written to {}", records.len(), out.display());
    Ok(0)
}

/// Runs one parsed command and returns the exit code.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Generate {
            config,
            n_events,
            seed,
            out,
            workers,
            max_attempts,
        } => {
            let cfg = config.load()?;
            let opts = GenerateOptions {
                n_events,
                seed,
                workers,
                max_attempts,
            };
            let m = generate_dataset(&cfg, &opts, &out)?;
            println!(
                "{} of {} events written to {} ({} prior draws, conjunction rate {:.3e})",
                m.event_count,
                n_events,
                out.display(),
                m.attempts_total,
                m.conjunction_rate
            );
            Ok(if m.event_count < n_events { EXIT_CAP } else { 0 })
        }
        Command::Simulate {
            config,
            seed,
            out,
            trace_step_s,
        } => simulate(&config, seed, out.as_deref(), trace_step_s),
        Command::Infer {
            config,
            cdm,
            n_samples,
            seed,
            out,
            workers,
            condition_on,
            sigma_scale,
        } => infer(&config, &cdm, n_samples, seed, &out, workers, &condition_on, sigma_scale),
        Command::Calibrate {
            config,
            reference,
            out,
            seed,
            n_events,
            workers,
        } => calibrate(&config, &reference, &out, seed, n_events, workers),
        Command::Histogram { dump, site, bins, out } => histogram(&dump, &site, bins, out.as_deref()),
        Command::DefaultConfig => {
            print!("{}", ScenarioConfig::default().to_toml_string());
            Ok(0)
        }
        Command::FitPrior {
            catalog,
            out,
            bins,
            semi_major_axis,
            lenient,
        } => fit(&catalog, &out, bins, semi_major_axis, lenient),
    }
}
