//! Command-line entry point: run scenarios, build combs, run Bell tests,
//! re-analyze recorded tag streams and calibrate the source rate.
//!
//! Exit codes: 0 success, 2 validation error (unreadable or invalid
//! scenario, bad flags), 3 runtime error (simulation failure, NaN in a
//! report, I/O failure).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use afcsim::afc::{self, FrequencyGrid, PeakShape, PhaseModel, TimeEnvelope};
use afcsim::coincidence::{g2si, histogram};
use afcsim::experiments::{self, presets, Experiment, MemorySpec, Scenario};
use afcsim::montecarlo::{read_tag_file, write_tag_file, TagSidecar, CHANNEL_IDLER, CHANNEL_SIGNAL};
use afcsim::report::{bell_csv, fringe_csv, g2_rows_csv, Summary};
use afcsim::units;

#[derive(Parser)]
#[command(name = "afcsim", version, about = "Photon-pair storage simulator and analysis toolkit", long_about = None)]
struct Cli {
    /// Worker threads for the event generator (default: all cores).
    /// Results are independent of this setting.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write CSV data, a summary document and a
    /// manifest.
    Run(RunArgs),
    /// Build a comb, propagate a probe pulse and report transmission and
    /// echoes.
    Comb(CombArgs),
    /// Run one of the built-in CHSH Bell-test scenarios.
    Bell(BellArgs),
    /// Re-analyze a recorded binary tag stream.
    Analyze(AnalyzeArgs),
    /// Solve the pair rate against the cross-correlation anchors.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML file.
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the integration time, e.g. "600 s".
    #[arg(long)]
    integration: Option<String>,
}

#[derive(Args)]
struct CombArgs {
    /// Tooth spacing, e.g. "40 MHz".
    #[arg(long)]
    period: String,
    /// Tooth spacing over tooth width.
    #[arg(long, default_value_t = 4.0)]
    finesse: f64,
    /// Peak optical depth.
    #[arg(long, default_value_t = 4.0)]
    depth: f64,
    /// Residual depth between teeth.
    #[arg(long, default_value_t = 0.0)]
    background: f64,
    /// Absorption window, e.g. "480 MHz".
    #[arg(long, default_value = "480 MHz")]
    bandwidth: String,
    /// Pattern displacement, e.g. "0 Hz".
    #[arg(long, default_value = "0 Hz")]
    shift: String,
    /// Tooth shape: square | gaussian.
    #[arg(long, default_value = "square")]
    shape: String,
    /// Probe pulse intensity FWHM, e.g. "5 ns".
    #[arg(long, default_value = "5 ns")]
    pulse: String,
    /// Grid points (power of two).
    #[arg(long, default_value_t = 1 << 20)]
    grid_points: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BellArgs {
    /// Variant: partial-readout | hybrid.
    #[arg(long, default_value = "partial-readout")]
    variant: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the per-setting integration time, e.g. "600 s".
    #[arg(long)]
    integration: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Binary tag file (with its .meta.json sidecar).
    tags: PathBuf,
    /// Coincidence window, e.g. "10 ns".
    #[arg(long, default_value = "10 ns")]
    window: String,
    /// Histogram bin width.
    #[arg(long, default_value = "1 ns")]
    bin: String,
    /// Histogram half-range.
    #[arg(long, default_value = "600 ns")]
    range: String,
    /// Peak window center (delay), e.g. "25 ns".
    #[arg(long, default_value = "0 ns")]
    peak: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Target cross-correlation without the memory.
    #[arg(long, default_value_t = 115.0)]
    target: f64,
    /// Storage time of the stored-photon anchor.
    #[arg(long, default_value = "25 ns")]
    storage_time: String,
    /// Memory efficiency of the stored-photon anchor.
    #[arg(long, default_value_t = 0.21)]
    efficiency: f64,
    /// Memory transmission of the stored-photon anchor.
    #[arg(long, default_value_t = 0.275)]
    transmission: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn validation(e: impl std::fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }
    fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Run(args) => cmd_run(args),
        Command::Comb(args) => cmd_comb(args),
        Command::Bell(args) => cmd_bell(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Calibrate(args) => cmd_calibrate(args),
    }
}

// ---------------------------------------------------------------------------
// manifest and output plumbing

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(serde::Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
}

#[derive(serde::Serialize)]
struct Manifest {
    schema: String,
    tool_version: String,
    command: Vec<String>,
    scenario_sha256: Option<String>,
    seed: u64,
    outputs: Vec<ManifestEntry>,
}

struct OutputDir {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl OutputDir {
    fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(CliError::runtime)?;
        Ok(OutputDir { dir: dir.to_path_buf(), entries: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(CliError::runtime)?;
        self.entries.push(ManifestEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    fn finish(mut self, scenario_sha256: Option<String>, seed: u64) -> CliResult<()> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            schema: "afcsim-manifest/1".to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: std::env::args().skip(1).collect(),
            scenario_sha256,
            seed,
            outputs: self.entries,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(CliError::runtime)?;
        std::fs::write(self.dir.join("manifest.json"), json).map_err(CliError::runtime)?;
        Ok(())
    }
}

fn finalize_summary(out: &mut OutputDir, summary: &Summary) -> CliResult<()> {
    if summary.has_non_finite() {
        return Err(CliError::Runtime(
            "NaN or infinite value in the report".to_string(),
        ));
    }
    out.write("summary.json", summary.to_json().as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// subcommands

fn load_scenario(args: &RunArgs) -> CliResult<(Scenario, String)> {
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| CliError::Validation(format!("{}: {e}", args.scenario.display())))?;
    let mut scenario = Scenario::from_toml_str(&text).map_err(CliError::validation)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(integration) = &args.integration {
        scenario.integration_time =
            units::parse_time(integration).map_err(CliError::validation)?;
    }
    Ok((scenario, sha256_hex(text.as_bytes())))
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let (scenario, scenario_hash) = load_scenario(&args)?;
    let mut out = OutputDir::create(&args.out)?;
    let mut summary = Summary::new(&scenario.name, scenario.seed, experiment_kind(&scenario));

    match &scenario.experiment {
        Experiment::PumpScan { powers_mw, memory } => {
            let rows = experiments::scan_pump_power(&scenario, powers_mw, memory.as_ref())
                .map_err(CliError::runtime)?;
            out.write("g2_vs_power.csv", g2_rows_csv(&rows).as_bytes())?;
            summary.g2_rows = Some(rows);
        }
        Experiment::StorageScan { times, table, memory_transmission } => {
            let rows =
                experiments::scan_storage_time(&scenario, times, table, *memory_transmission)
                    .map_err(CliError::runtime)?;
            out.write("g2_vs_storage_time.csv", g2_rows_csv(&rows).as_bytes())?;
            summary.g2_rows = Some(rows);
        }
        Experiment::Fringes {
            signal_phases,
            idler_phases,
            echo_efficiency,
            memory_transmission,
            target_rate,
        } => {
            let result = experiments::fringe_scan(
                &scenario,
                signal_phases,
                idler_phases,
                *echo_efficiency,
                *memory_transmission,
                *target_rate,
            )
            .map_err(CliError::runtime)?;
            out.write("fringes.csv", fringe_csv(&result).as_bytes())?;
            for (k, fit) in result.fits.iter().enumerate() {
                println!(
                    "fringe {k}: V = {:.3} +- {:.3}, phase offset {:.1} deg",
                    fit.visibility,
                    fit.visibility_sigma,
                    fit.phase_offset.to_degrees()
                );
            }
            summary.fringes = Some(result);
        }
        Experiment::Bell {
            variant,
            echo_efficiency,
            memory_transmission,
            hybrid_budget,
            target_rate,
        } => {
            let result = experiments::bell_test(
                &scenario,
                *variant,
                *echo_efficiency,
                *memory_transmission,
                *hybrid_budget,
                *target_rate,
            )
            .map_err(CliError::runtime)?;
            out.write("bell_correlators.csv", bell_csv(&result).as_bytes())?;
            println!(
                "S = {:.3} +- {:.3} (ideal {:.3}, with noise {:.3})",
                result.s, result.s_sigma, result.s_predicted_ideal, result.s_predicted_noisy
            );
            summary.bell = Some(result);
        }
        Experiment::G2Single { memory } => {
            let (row, hist, stream) = experiments::g2_run_with_tags(
                &scenario,
                memory.as_ref(),
                scenario.pair_rate(),
                scenario.seed,
            )
            .map_err(CliError::runtime)?;
            out.write("histogram.csv", hist.to_csv().as_bytes())?;
            let tags_path = out.dir.join("tags.bin");
            let sidecar =
                TagSidecar::new(&stream, Some(scenario.seed), Some(scenario_hash.clone()));
            write_tag_file(&tags_path, &stream, &sidecar).map_err(CliError::runtime)?;
            let bytes = std::fs::read(&tags_path).map_err(CliError::runtime)?;
            out.entries.push(ManifestEntry {
                path: "tags.bin".to_string(),
                sha256: sha256_hex(&bytes),
            });
            println!(
                "g2 = {:.2} +- {:.2} (predicted {:.2})",
                row.g2, row.g2_sigma, row.g2_predicted
            );
            summary.g2_rows = Some(vec![row]);
        }
    }

    finalize_summary(&mut out, &summary)?;
    out.finish(Some(scenario_hash), scenario.seed)
}

fn experiment_kind(sc: &Scenario) -> &'static str {
    match sc.experiment {
        Experiment::PumpScan { .. } => "pump-scan",
        Experiment::StorageScan { .. } => "storage-scan",
        Experiment::Fringes { .. } => "fringes",
        Experiment::Bell { .. } => "bell",
        Experiment::G2Single { .. } => "g2-single",
    }
}

fn cmd_comb(args: CombArgs) -> CliResult<()> {
    let period = units::parse_frequency(&args.period).map_err(CliError::validation)?;
    let bandwidth = units::parse_frequency(&args.bandwidth).map_err(CliError::validation)?;
    let shift = units::parse_frequency(&args.shift).map_err(CliError::validation)?;
    let pulse_fwhm = units::parse_time(&args.pulse).map_err(CliError::validation)?;
    let shape = match args.shape.as_str() {
        "square" => PeakShape::Square,
        "gaussian" => PeakShape::Gaussian,
        other => {
            return Err(CliError::Validation(format!("unknown shape {other:?}")));
        }
    };
    let grid = FrequencyGrid::new(args.grid_points, 2e9, 0.0).map_err(CliError::validation)?;
    let comb = afc::build_comb(
        period,
        args.finesse,
        args.depth,
        args.background,
        bandwidth,
        shape,
        shift,
        grid,
    )
    .map_err(CliError::validation)?;

    let t_s = comb.storage_time();
    let input = TimeEnvelope::gaussian(grid.n_points, grid.dt(), 3.0 * t_s, pulse_fwhm, 1.0);
    let output =
        afc::propagate(&input, &comb, PhaseModel::MinimumPhase).map_err(CliError::runtime)?;
    let report = afc::echo_report(&input, &output, &[t_s, 2.0 * t_s], 0.6 * t_s)
        .map_err(CliError::runtime)?;

    let mut out = OutputDir::create(&args.out)?;
    out.write("comb.csv", comb.to_columnar().as_bytes())?;
    out.write(
        "envelope_out.csv",
        output.to_columnar(2.0 * t_s, 6.0 * t_s).as_bytes(),
    )?;
    let report_json = serde_json::json!({
        "schema": "afcsim-echo-report/1",
        "period_hz": period,
        "storage_time_s": t_s,
        "eta_trans": report.eta_trans,
        "echoes": report.echoes.iter().map(|e| serde_json::json!({
            "delay_s": e.delay,
            "delay_measured_s": e.delay_measured,
            "efficiency": e.efficiency,
            "phase_rad": e.phase,
        })).collect::<Vec<_>>(),
    });
    if !report.eta_trans.is_finite() {
        return Err(CliError::Runtime("NaN in echo report".to_string()));
    }
    out.write(
        "echo_report.json",
        serde_json::to_string_pretty(&report_json)
            .map_err(CliError::runtime)?
            .as_bytes(),
    )?;
    println!(
        "storage time {:.1} ns: eta_trans = {:.3}, first echo at {:.2} ns with efficiency {:.3}",
        t_s * 1e9,
        report.eta_trans,
        report.echoes[0].delay_measured * 1e9,
        report.echoes[0].efficiency
    );
    out.finish(None, 0)
}

fn cmd_bell(args: BellArgs) -> CliResult<()> {
    let preset = match args.variant.as_str() {
        "partial-readout" => presets::BELL_PARTIAL,
        "hybrid" => presets::BELL_HYBRID,
        other => {
            return Err(CliError::Validation(format!(
                "unknown bell variant {other:?}"
            )))
        }
    };
    let mut scenario = Scenario::from_toml_str(preset).map_err(CliError::validation)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(integration) = &args.integration {
        scenario.integration_time =
            units::parse_time(integration).map_err(CliError::validation)?;
    }
    let (variant, echo_eff, mem_trans, budget, target) = match &scenario.experiment {
        Experiment::Bell {
            variant,
            echo_efficiency,
            memory_transmission,
            hybrid_budget,
            target_rate,
        } => (
            *variant,
            *echo_efficiency,
            *memory_transmission,
            *hybrid_budget,
            *target_rate,
        ),
        _ => unreachable!("bell presets carry bell experiments"),
    };
    let result = experiments::bell_test(&scenario, variant, echo_eff, mem_trans, budget, target)
        .map_err(CliError::runtime)?;
    let mut out = OutputDir::create(&args.out)?;
    out.write("bell_correlators.csv", bell_csv(&result).as_bytes())?;
    println!(
        "S = {:.3} +- {:.3} ({:.1} sigma above the classical bound)",
        result.s,
        result.s_sigma,
        (result.s - 2.0) / result.s_sigma
    );
    let mut summary = Summary::new(&scenario.name, scenario.seed, "bell");
    summary.bell = Some(result);
    finalize_summary(&mut out, &summary)?;
    out.finish(Some(sha256_hex(preset.as_bytes())), scenario.seed)
}

fn cmd_analyze(args: AnalyzeArgs) -> CliResult<()> {
    let window = units::parse_time(&args.window).map_err(CliError::validation)?;
    let bin = units::parse_time(&args.bin).map_err(CliError::validation)?;
    let range = units::parse_time(&args.range).map_err(CliError::validation)?;
    let peak = units::parse_time(&args.peak).map_err(CliError::validation)?;
    let (stream, sidecar) = read_tag_file(&args.tags).map_err(CliError::validation)?;

    let hist = histogram(
        &stream.channel(CHANNEL_SIGNAL),
        &stream.channel(CHANNEL_IDLER),
        bin,
        (-range, range),
    )
    .map_err(CliError::runtime)?;
    let offsets: Vec<f64> = (0..36)
        .map(|k| -(30e-9 + 1.2 * window * (k as f64 + 1.0)))
        .collect();
    let est = g2si(&hist, (peak, window), &offsets).map_err(CliError::runtime)?;
    if !est.g2.is_finite() {
        return Err(CliError::Runtime("NaN in g2 estimate".to_string()));
    }

    let mut out = OutputDir::create(&args.out)?;
    out.write("histogram.csv", hist.to_csv().as_bytes())?;
    let summary = serde_json::json!({
        "schema": "afcsim-analysis/1",
        "source": args.tags.display().to_string(),
        "n_tags": stream.len(),
        "duration_s": stream.duration,
        "g2": est.g2,
        "g2_sigma": est.sigma,
        "g2_lower_bound": est.lower_bound,
        "n_peak": est.n_peak,
        "n_accidental": est.n_accidental,
        "peak_window_s": [peak, window],
        "source_seed": sidecar.seed,
    });
    out.write(
        "analysis.json",
        serde_json::to_string_pretty(&summary)
            .map_err(CliError::runtime)?
            .as_bytes(),
    )?;
    println!(
        "g2 = {:.3} +- {:.3} ({} peak counts)",
        est.g2, est.sigma, est.n_peak
    );
    out.finish(None, sidecar.seed.unwrap_or(0))
}

fn cmd_calibrate(args: CalibrateArgs) -> CliResult<()> {
    let storage_time = units::parse_time(&args.storage_time).map_err(CliError::validation)?;
    let scenario = Scenario::from_toml_str(presets::PUMP_SCAN).map_err(CliError::validation)?;
    let stored = MemorySpec {
        storage_time,
        efficiency: args.efficiency,
        transmission: args.transmission,
    };
    let cal = experiments::calibrate_pair_rate(&scenario, args.target, &stored)
        .map_err(CliError::validation)?;
    println!(
        "rate_per_mw = {:.2} /s/mW (predicted g2: {:.1} without memory, {:.1} stored)",
        cal.rate_per_mw, cal.predicted_g2_no_memory, cal.predicted_g2_stored
    );
    let mut out = OutputDir::create(&args.out)?;
    let mut summary = Summary::new("calibration", scenario.seed, "calibrate");
    summary.calibration = Some(cal);
    finalize_summary(&mut out, &summary)?;
    out.finish(None, scenario.seed)
}
