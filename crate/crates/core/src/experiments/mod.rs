//! Scenario definitions and runners reproducing the headline measurements:
//! g² versus pump power, g² versus storage time, Franson fringes with the
//! double read-out analyzer, and the two Bell tests.

mod runs;

pub use runs::{
    bell_test, calibrate_pair_rate, fringe_scan, g2_run, g2_run_with_tags, scan_pump_power,
    scan_storage_time,
    BellTestResult, BellVariant, Calibration, FringePoint, FringeScanResult, G2Row,
};

use serde::Deserialize;
use thiserror::Error;

use crate::montecarlo::{ChannelConfig, DetectorConfig};
use crate::units;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unit error in {field}: {source}")]
    Unit {
        field: &'static str,
        source: units::UnitError,
    },
    #[error("efficiency table does not cover {0} s")]
    TableMiss(f64),
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

fn unit<T>(field: &'static str, r: units::Result<T>) -> Result<T> {
    r.map_err(|source| ScenarioError::Unit { field, source })
}

/// Provenance of an efficiency-table entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Anchored to a measured value.
    Paper,
    /// Log-linear interpolation/extrapolation between anchors.
    Interpolated,
}

/// Storage-time → memory-efficiency table with per-entry provenance.
///
/// Entries tagged [`Provenance::Paper`] are anchors and are never touched by
/// calibration routines.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyTable {
    entries: Vec<(f64, f64, Provenance)>,
}

impl EfficiencyTable {
    pub fn new(mut entries: Vec<(f64, f64, Provenance)>) -> Result<Self> {
        entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for pair in entries.windows(2) {
            if pair[1].1 > pair[0].1 {
                return Err(ScenarioError::Invalid(format!(
                    "efficiency table not monotone non-increasing at {} s",
                    pair[1].0
                )));
            }
        }
        if entries.iter().any(|e| e.1 <= 0.0 || e.1 > 1.0) {
            return Err(ScenarioError::Invalid(
                "efficiencies must lie in (0, 1]".to_string(),
            ));
        }
        Ok(EfficiencyTable { entries })
    }

    /// The default table: measured anchors 21% at 25 ns and 12% at 100 ns,
    /// log-linear in between and extrapolated beyond (the comb degrades for
    /// closer tooth spacing; the material physics behind the decay is not
    /// modeled).
    pub fn default_table() -> Self {
        let k = (0.21f64 / 0.12).ln() / 75e-9;
        let interp = |t: f64| 0.21 * (-k * (t - 25e-9)).exp();
        EfficiencyTable::new(vec![
            (25e-9, 0.21, Provenance::Paper),
            (50e-9, interp(50e-9), Provenance::Interpolated),
            (75e-9, interp(75e-9), Provenance::Interpolated),
            (100e-9, 0.12, Provenance::Paper),
            (150e-9, interp(150e-9), Provenance::Interpolated),
            (200e-9, interp(200e-9), Provenance::Interpolated),
        ])
        .expect("default table is valid")
    }

    /// Efficiency at a tabulated storage time.
    pub fn lookup(&self, storage_time: f64) -> Result<(f64, Provenance)> {
        self.entries
            .iter()
            .find(|(t, _, _)| (t - storage_time).abs() < 1e-12)
            .map(|&(_, eff, prov)| (eff, prov))
            .ok_or(ScenarioError::TableMiss(storage_time))
    }

    pub fn entries(&self) -> &[(f64, f64, Provenance)] {
        &self.entries
    }

    pub fn storage_times(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.0).collect()
    }
}

/// Which pipeline a scenario runs.
#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    /// g² vs pump power, with or without the memory.
    PumpScan {
        powers_mw: Vec<f64>,
        memory: Option<MemorySpec>,
    },
    /// g² and echo timing across storage times from the efficiency table.
    StorageScan {
        times: Vec<f64>,
        table: EfficiencyTable,
        memory_transmission: f64,
    },
    /// Franson fringes with the double read-out analyzer.
    Fringes {
        signal_phases: Vec<f64>,
        idler_phases: Vec<f64>,
        echo_efficiency: f64,
        memory_transmission: f64,
        target_rate: f64,
    },
    /// CHSH Bell test.
    Bell {
        variant: BellVariant,
        echo_efficiency: f64,
        memory_transmission: f64,
        /// Hybrid only: `(eta_trans, eta_echo)` of the single read-out.
        hybrid_budget: (f64, f64),
        target_rate: f64,
    },
    /// Single g² run at the configured power.
    G2Single { memory: Option<MemorySpec> },
}

/// Synthetic memory configuration for g² runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemorySpec {
    pub storage_time: f64,
    pub efficiency: f64,
    pub transmission: f64,
}

/// Fully validated scenario in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub integration_time: f64,
    pub duty_factor: f64,
    pub rate_per_mw: f64,
    pub power_mw: f64,
    pub coherence_time: f64,
    pub visibility: f64,
    pub signal_channel: ChannelConfig,
    pub idler_channel: ChannelConfig,
    pub signal_detector: DetectorConfig,
    pub idler_detector: DetectorConfig,
    pub tau: f64,
    pub coincidence_window: f64,
    pub bin_width: f64,
    pub histogram_range: f64,
    pub experiment: Experiment,
}

impl Scenario {
    /// Pair rate at the configured pump power.
    pub fn pair_rate(&self) -> f64 {
        self.rate_per_mw * self.power_mw
    }

    /// Measurement time after the preparation duty cycle.
    pub fn effective_integration(&self) -> f64 {
        self.integration_time * self.duty_factor
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        file.lower()
    }
}

// ---------------------------------------------------------------------------
// raw file schema (strings with units) and its lowering

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    seed: u64,
    integration_time: String,
    #[serde(default)]
    duty_factor: Option<f64>,
    source: SourceFile,
    signal: ArmFile,
    idler: ArmFile,
    analysis: AnalysisFile,
    experiment: ExperimentFile,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceFile {
    rate_per_mw: String,
    power: String,
    coherence_time: String,
    visibility: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmFile {
    transmission: f64,
    #[serde(default)]
    delay: Option<String>,
    efficiency: f64,
    dark_rate: String,
    jitter: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalysisFile {
    tau: String,
    coincidence_window: String,
    bin_width: String,
    histogram_range: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableRowFile {
    storage_time: String,
    efficiency: f64,
    provenance: Provenance,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum ExperimentFile {
    PumpScan {
        powers: Vec<String>,
        #[serde(default)]
        storage_time: Option<String>,
        #[serde(default)]
        memory_efficiency: Option<f64>,
        #[serde(default)]
        memory_transmission: Option<f64>,
    },
    StorageScan {
        times: Vec<String>,
        #[serde(default)]
        table: Vec<TableRowFile>,
        memory_transmission: f64,
    },
    Fringes {
        signal_phases: Vec<String>,
        idler_phases: Vec<String>,
        echo_efficiency: f64,
        memory_transmission: f64,
        target_rate: String,
    },
    Bell {
        variant: String,
        #[serde(default)]
        echo_efficiency: Option<f64>,
        #[serde(default)]
        memory_transmission: Option<f64>,
        #[serde(default)]
        eta_trans: Option<f64>,
        #[serde(default)]
        eta_echo: Option<f64>,
        target_rate: String,
    },
    G2Single {
        #[serde(default)]
        storage_time: Option<String>,
        #[serde(default)]
        memory_efficiency: Option<f64>,
        #[serde(default)]
        memory_transmission: Option<f64>,
    },
}

fn lower_memory(
    storage_time: &Option<String>,
    efficiency: Option<f64>,
    transmission: Option<f64>,
) -> Result<Option<MemorySpec>> {
    match storage_time {
        None => Ok(None),
        Some(ts) => {
            let storage_time = unit("experiment.storage_time", units::parse_time(ts))?;
            let efficiency = efficiency.ok_or_else(|| {
                ScenarioError::Invalid("memory_efficiency required with storage_time".into())
            })?;
            let transmission = transmission.ok_or_else(|| {
                ScenarioError::Invalid("memory_transmission required with storage_time".into())
            })?;
            Ok(Some(MemorySpec { storage_time, efficiency, transmission }))
        }
    }
}

impl ScenarioFile {
    fn lower(self) -> Result<Scenario> {
        let experiment = match self.experiment {
            ExperimentFile::PumpScan {
                powers,
                storage_time,
                memory_efficiency,
                memory_transmission,
            } => Experiment::PumpScan {
                powers_mw: powers
                    .iter()
                    .map(|p| unit("experiment.powers", units::parse_power_mw(p)))
                    .collect::<Result<_>>()?,
                memory: lower_memory(&storage_time, memory_efficiency, memory_transmission)?,
            },
            ExperimentFile::StorageScan { times, table, memory_transmission } => {
                let table = if table.is_empty() {
                    EfficiencyTable::default_table()
                } else {
                    EfficiencyTable::new(
                        table
                            .iter()
                            .map(|row| {
                                Ok((
                                    unit(
                                        "experiment.table.storage_time",
                                        units::parse_time(&row.storage_time),
                                    )?,
                                    row.efficiency,
                                    row.provenance,
                                ))
                            })
                            .collect::<Result<_>>()?,
                    )?
                };
                Experiment::StorageScan {
                    times: times
                        .iter()
                        .map(|t| unit("experiment.times", units::parse_time(t)))
                        .collect::<Result<_>>()?,
                    table,
                    memory_transmission,
                }
            }
            ExperimentFile::Fringes {
                signal_phases,
                idler_phases,
                echo_efficiency,
                memory_transmission,
                target_rate,
            } => Experiment::Fringes {
                signal_phases: signal_phases
                    .iter()
                    .map(|p| unit("experiment.signal_phases", units::parse_angle(p)))
                    .collect::<Result<_>>()?,
                idler_phases: idler_phases
                    .iter()
                    .map(|p| unit("experiment.idler_phases", units::parse_angle(p)))
                    .collect::<Result<_>>()?,
                echo_efficiency,
                memory_transmission,
                target_rate: unit("experiment.target_rate", units::parse_rate(&target_rate))?,
            },
            ExperimentFile::Bell {
                variant,
                echo_efficiency,
                memory_transmission,
                eta_trans,
                eta_echo,
                target_rate,
            } => {
                let variant = match variant.as_str() {
                    "partial-readout" => BellVariant::PartialReadout,
                    "hybrid" => BellVariant::Hybrid,
                    other => {
                        return Err(ScenarioError::Invalid(format!(
                            "unknown bell variant {other:?}"
                        )))
                    }
                };
                Experiment::Bell {
                    variant,
                    echo_efficiency: echo_efficiency.unwrap_or(0.09),
                    memory_transmission: memory_transmission.unwrap_or(0.13),
                    hybrid_budget: (eta_trans.unwrap_or(0.36), eta_echo.unwrap_or(0.05)),
                    target_rate: unit("experiment.target_rate", units::parse_rate(&target_rate))?,
                }
            }
            ExperimentFile::G2Single {
                storage_time,
                memory_efficiency,
                memory_transmission,
            } => Experiment::G2Single {
                memory: lower_memory(&storage_time, memory_efficiency, memory_transmission)?,
            },
        };

        let lower_arm = |arm: &ArmFile,
                         which: &'static str|
         -> Result<(ChannelConfig, DetectorConfig)> {
            let delay = match &arm.delay {
                Some(d) => unit("delay", units::parse_time(d))?,
                None => 0.0,
            };
            if !(0.0..=1.0).contains(&arm.transmission) || !(0.0..=1.0).contains(&arm.efficiency)
            {
                return Err(ScenarioError::Invalid(format!(
                    "{which}: transmission/efficiency out of range"
                )));
            }
            Ok((
                ChannelConfig { transmission: arm.transmission, delay },
                DetectorConfig {
                    efficiency: arm.efficiency,
                    dark_rate: unit("dark_rate", units::parse_rate(&arm.dark_rate))?,
                    jitter_sigma: unit("jitter", units::parse_time(&arm.jitter))?,
                },
            ))
        };
        let (signal_channel, signal_detector) = lower_arm(&self.signal, "signal")?;
        let (idler_channel, idler_detector) = lower_arm(&self.idler, "idler")?;

        let duty_factor = self.duty_factor.unwrap_or(1.0);
        if !(0.0..=1.0).contains(&duty_factor) || duty_factor == 0.0 {
            return Err(ScenarioError::Invalid(format!("duty_factor = {duty_factor}")));
        }
        let visibility = self.source.visibility;
        if !(0.0..=1.0).contains(&visibility) {
            return Err(ScenarioError::Invalid(format!("visibility = {visibility}")));
        }

        let scenario = Scenario {
            name: self.name,
            seed: self.seed,
            integration_time: unit(
                "integration_time",
                units::parse_time(&self.integration_time),
            )?,
            duty_factor,
            rate_per_mw: unit(
                "source.rate_per_mw",
                units::parse_rate_per_mw(&self.source.rate_per_mw),
            )?,
            power_mw: unit("source.power", units::parse_power_mw(&self.source.power))?,
            coherence_time: unit(
                "source.coherence_time",
                units::parse_time(&self.source.coherence_time),
            )?,
            visibility,
            signal_channel,
            idler_channel,
            signal_detector,
            idler_detector,
            tau: unit("analysis.tau", units::parse_time(&self.analysis.tau))?,
            coincidence_window: unit(
                "analysis.coincidence_window",
                units::parse_time(&self.analysis.coincidence_window),
            )?,
            bin_width: unit("analysis.bin_width", units::parse_time(&self.analysis.bin_width))?,
            histogram_range: unit(
                "analysis.histogram_range",
                units::parse_time(&self.analysis.histogram_range),
            )?,
            experiment,
        };
        if scenario.integration_time <= 0.0 {
            return Err(ScenarioError::Invalid("integration_time must be positive".into()));
        }
        Ok(scenario)
    }
}

/// Canonical scenario presets mirroring the headline measurements; these are
/// also shipped as TOML files for the CLI.
pub mod presets {
    /// Table S1 arm parameters, g² vs pump power without the memory.
    pub const PUMP_SCAN: &str = r#"
name = "g2-vs-pump-power"
seed = 17
integration_time = "200000 s"

[source]
rate_per_mw = "53.2 /s/mW"
power = "3 mW"
coherence_time = "5 ns"
visibility = 0.84

[signal]
transmission = 0.016667
efficiency = 0.30
dark_rate = "100 Hz"
jitter = "300 ps"

[idler]
transmission = 0.01875
efficiency = 0.08
dark_rate = "10 Hz"
jitter = "100 ps"

[analysis]
tau = "25 ns"
coincidence_window = "10 ns"
bin_width = "1 ns"
histogram_range = "400 ns"

[experiment]
kind = "pump-scan"
powers = ["0.5 mW", "1 mW", "3 mW", "10 mW", "30 mW", "100 mW", "300 mW", "1000 mW"]
"#;

    /// g² vs storage time with the default efficiency table.
    pub const STORAGE_SCAN: &str = r#"
name = "g2-vs-storage-time"
seed = 29
integration_time = "400000 s"

[source]
rate_per_mw = "53.2 /s/mW"
power = "3 mW"
coherence_time = "5 ns"
visibility = 0.84

[signal]
transmission = 0.016667
efficiency = 0.30
dark_rate = "100 Hz"
jitter = "300 ps"

[idler]
transmission = 0.01875
efficiency = 0.08
dark_rate = "10 Hz"
jitter = "100 ps"

[analysis]
tau = "25 ns"
coincidence_window = "10 ns"
bin_width = "1 ns"
histogram_range = "400 ns"

[experiment]
kind = "storage-scan"
times = ["25 ns", "50 ns", "75 ns", "100 ns", "150 ns", "200 ns"]
memory_transmission = 0.275
"#;

    /// Franson fringes at 5 mW with the 50/75 ns double read-out.
    pub const FRINGES: &str = r#"
name = "franson-fringes"
seed = 41
integration_time = "2 h"

[source]
rate_per_mw = "53.2 /s/mW"
power = "5 mW"
coherence_time = "5 ns"
visibility = 0.84

[signal]
transmission = 0.016667
efficiency = 0.30
dark_rate = "100 Hz"
jitter = "300 ps"

[idler]
transmission = 0.01875
efficiency = 0.08
dark_rate = "10 Hz"
jitter = "100 ps"

[analysis]
tau = "25 ns"
coincidence_window = "10 ns"
bin_width = "1 ns"
histogram_range = "400 ns"

[experiment]
kind = "fringes"
signal_phases = ["0 deg", "30 deg", "60 deg", "90 deg", "120 deg", "150 deg", "180 deg", "210 deg", "240 deg", "270 deg", "300 deg", "330 deg"]
idler_phases = ["0 deg", "75 deg"]
echo_efficiency = 0.09
memory_transmission = 0.13
target_rate = "3 /min"
"#;

    /// Partial-readout CHSH test, 2 h per setting.
    pub const BELL_PARTIAL: &str = r#"
name = "bell-partial-readout"
seed = 57
integration_time = "2 h"

[source]
rate_per_mw = "53.2 /s/mW"
power = "3 mW"
coherence_time = "5 ns"
visibility = 0.84

[signal]
transmission = 0.016667
efficiency = 0.30
dark_rate = "100 Hz"
jitter = "300 ps"

[idler]
transmission = 0.01875
efficiency = 0.08
dark_rate = "10 Hz"
jitter = "100 ps"

[analysis]
tau = "25 ns"
coincidence_window = "10 ns"
bin_width = "1 ns"
histogram_range = "400 ns"

[experiment]
kind = "bell"
variant = "partial-readout"
echo_efficiency = 0.09
memory_transmission = 0.13
target_rate = "3 /min"
"#;

    /// Hybrid-qubit CHSH test with the measured echo/transmission budget.
    pub const BELL_HYBRID: &str = r#"
name = "bell-hybrid"
seed = 73
integration_time = "2 h"

[source]
rate_per_mw = "53.2 /s/mW"
power = "3 mW"
coherence_time = "5 ns"
visibility = 0.84

[signal]
transmission = 0.016667
efficiency = 0.30
dark_rate = "100 Hz"
jitter = "300 ps"

[idler]
transmission = 0.01875
efficiency = 0.08
dark_rate = "10 Hz"
jitter = "100 ps"

[analysis]
tau = "25 ns"
coincidence_window = "10 ns"
bin_width = "1 ns"
histogram_range = "400 ns"

[experiment]
kind = "bell"
variant = "hybrid"
eta_trans = 0.36
eta_echo = 0.05
target_rate = "3 /min"
"#;
}

#[cfg(test)]
mod tests;
