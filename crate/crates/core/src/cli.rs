//! Command-line front end.
//!
//! One TOML file describes a run: the medium, pulse, detection chain and
//! probe input, plus optional `[sweep]`, `[calibration]` and `[spectrum]`
//! sections for the commands that need them. All angular frequencies are in
//! rad/s and all other quantities in SI units. Unknown keys are rejected and
//! parse errors name the offending field.
//!
//! Every file written carries the configuration hash and seed, and carries
//! no timestamps, so identical inputs give byte-identical outputs.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::detection::{self, DetectionChain, PulseShape, SqueezingReport};
use crate::error::{Error, Result};
use crate::gaussian::{self, ProbeInput};
use crate::medium::{self, MediumConfig};
use crate::sweep::{self, Grid, Scenario, SweepSpec, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub target: Target,
    pub parameter: String,
    pub grid: Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub target_gain: f64,
    pub raman_ratio: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            target_gain: sweep::TARGET_GAIN,
            raman_ratio: sweep::DEFAULT_RAMAN_RATIO,
        }
    }
}

/// Sideband grid of the frequency-resolved spectrum, `0..=max_omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub max_omega: f64,
    pub points: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            max_omega: medium::mhz(40.0),
            points: 81,
        }
    }
}

impl SpectrumSection {
    pub fn grid(&self) -> Result<Vec<f64>> {
        if self.points < 2 || !(self.max_omega > 0.0) {
            return Err(Error::Domain("spectrum needs points >= 2 and max_omega > 0".into()));
        }
        Ok((0..self.points)
            .map(|k| self.max_omega * k as f64 / (self.points - 1) as f64)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub medium: MediumConfig,
    pub pulse: PulseShape,
    pub detection: DetectionChain,
    pub input: ProbeInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSection>,
}

impl RunConfig {
    /// Reference operating point with the medium switched off.
    pub fn reference_defaults() -> Self {
        Self {
            seed: Some(1),
            medium: MediumConfig::default(),
            pulse: PulseShape::default(),
            detection: DetectionChain::default(),
            input: ProbeInput::default(),
            sweep: None,
            calibration: Some(CalibrationSection::default()),
            spectrum: Some(SpectrumSection::default()),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
            path: ".".into(),
            message: e.to_string(),
        })?;
        serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run configs serialise to TOML")
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            medium: self.medium,
            pulse: self.pulse,
            detection: self.detection,
            input: self.input,
        }
    }

    pub fn hash(&self) -> String {
        detection::config_hash(self)
    }
}

#[derive(Debug, Parser)]
#[command(name = "squeezesim", version, about = "Four-wave-mixing twin-beam pulse simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Run configuration (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config's seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Caps the worker thread count
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Noise spectrum, gains and time-resolved variance
    Simulate(CommonArgs),
    /// Parameter sweep of one observable
    Sweep(CommonArgs),
    /// Monte Carlo detection records and squeezing report
    Detect(CommonArgs),
    /// Calibrate the coupling to the target pulse gain
    Calibrate(CommonArgs),
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("outputs serialise to JSON");
    s.push('\n');
    s
}

fn prepare(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    std::fs::create_dir_all(&args.out).map_err(|e| Error::Io(format!("{}: {e}", args.out.display())))?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub config_hash: String,
    pub seed: Option<u64>,
    pub delta: f64,
    pub light_shift: f64,
    pub cw_gain: f64,
    pub band_average_gain: f64,
    pub pulse_gain: f64,
    pub eta: f64,
    pub v: f64,
    pub v_db: f64,
    pub v_corrected: f64,
    pub v_corrected_db: f64,
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateSummary> {
    let sc = cfg.scenario();
    sc.validate()?;
    let input = sc.input_state()?;
    let grid = cfg.spectrum.unwrap_or_default().grid()?;
    let spectrum = gaussian::noise_spectrum(&sc.medium, &input, &grid)?;
    let v = detection::time_resolved_variance(&sc.medium, &input, &sc.pulse, &sc.detection)?;
    let v_corrected = gaussian::loss_correct(v, sc.detection.eta)?;
    let summary = SimulateSummary {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        delta: sc.medium.delta,
        light_shift: sc.medium.light_shift()?,
        cw_gain: medium::cw_gain(&sc.medium)?,
        band_average_gain: detection::band_average_gain(&sc.medium, &sc.pulse)?,
        pulse_gain: sweep::pulse_gain(&sc.medium, &sc.pulse)?,
        eta: sc.detection.eta,
        v,
        v_db: gaussian::db(v)?,
        v_corrected,
        v_corrected_db: gaussian::db(v_corrected)?,
    };
    let mut csv = format!(
        "# config_hash={}\n# seed={}\nomega,noise\n",
        summary.config_hash,
        seed_label(cfg.seed)
    );
    for (w, s) in spectrum.omega_grid.iter().zip(&spectrum.s) {
        csv.push_str(&format!("{w:?},{s:?}\n"));
    }
    write(&out.join("spectrum.csv"), &csv)?;
    write(&out.join("summary.json"), &json(&summary))?;
    Ok(summary)
}

fn seed_label(seed: Option<u64>) -> String {
    seed.map_or("none".into(), |s| s.to_string())
}

pub fn sweep_spec(cfg: &RunConfig) -> Result<SweepSpec> {
    let section = cfg.sweep.clone().ok_or_else(|| Error::Config {
        path: "sweep".into(),
        message: "the sweep command needs a [sweep] section".into(),
    })?;
    Ok(SweepSpec {
        target: section.target,
        parameter: section.parameter,
        grid: section.grid,
        base: cfg.scenario(),
        seed: cfg.seed.unwrap_or(0),
    })
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<sweep::CurveResult> {
    let result = sweep::run_sweep(&sweep_spec(cfg)?)?;
    write(&out.join("sweep.csv"), &result.to_csv())?;
    write(&out.join("sweep.json"), &(result.to_json() + "\n"))?;
    Ok(result)
}

#[derive(Debug, Serialize)]
pub struct DetectSummary {
    pub config_hash: String,
    pub seed: u64,
    pub fwm_record_hash: String,
    pub snl_record_hash: String,
    pub fwm_mean_total: f64,
    pub snl_mean_total: f64,
    pub rolling_window: usize,
    pub predicted_v: f64,
    pub predicted_db: f64,
    pub report: SqueezingReport,
}

/// Simulates a four-wave-mixing record and a shot-noise record at the same
/// detected power, removes drifts and compares their variances.
pub fn cmd_detect(cfg: &RunConfig, out: &Path) -> Result<DetectSummary> {
    let seed = cfg.seed.ok_or_else(|| Error::Config {
        path: "seed".into(),
        message: "detect requires a seed (config `seed` or --seed)".into(),
    })?;
    let sc = cfg.scenario();
    sc.validate()?;
    let input = sc.input_state()?;
    let fwm_chain = DetectionChain {
        rng_seed: detection::derive_seed(seed, 0),
        ..sc.detection
    };
    let fwm = detection::simulate_records(&sc.medium, &input, &sc.pulse, &fwm_chain)?;
    // shot-noise reference carrying the same photon number onto the detectors
    let noise = detection::pulse_noise(&sc.medium, &input, &sc.pulse, &sc.detection, 1.0)?;
    let snl_chain = DetectionChain {
        rng_seed: detection::derive_seed(seed, 1),
        eta: sc.detection.effective_eta(&sc.pulse),
        ..sc.detection
    };
    let snl = detection::shot_noise_record(noise.n_s + noise.n_i, &snl_chain)?;
    let w = sc.detection.rolling_window;
    let fwm_sub = detection::rolling_average_subtract(&fwm, w)?;
    let snl_sub = detection::rolling_average_subtract(&snl, w)?;
    let report = detection::squeezing_report(&snl_sub, &fwm_sub, sc.detection.eta)?;
    let predicted_v = detection::time_resolved_variance(&sc.medium, &input, &sc.pulse, &sc.detection)?;

    write(&out.join("fwm_record.csv"), &fwm.to_csv())?;
    write(&out.join("snl_record.csv"), &snl.to_csv())?;
    fwm.save_binary(&out.join("fwm_record.bin"))?;
    snl.save_binary(&out.join("snl_record.bin"))?;
    let summary = DetectSummary {
        config_hash: cfg.hash(),
        seed,
        fwm_record_hash: fwm.metadata.config_hash.clone(),
        snl_record_hash: snl.metadata.config_hash.clone(),
        fwm_mean_total: fwm.metadata.mean_total,
        snl_mean_total: snl.metadata.mean_total,
        rolling_window: w,
        predicted_v,
        predicted_db: gaussian::db(predicted_v)?,
        report,
    };
    write(&out.join("detect.json"), &json(&summary))?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct CalibrateSummary {
    pub config_hash: String,
    pub seed: Option<u64>,
    pub target_gain: f64,
    pub raman_ratio: f64,
    pub coupling_c: f64,
    pub raman_a: f64,
    pub gain: f64,
    pub trace: Vec<(f64, f64)>,
}

/// Writes `calibrated.toml` (a new file, never the input) and
/// `calibration.json`.
pub fn cmd_calibrate(cfg: &RunConfig, out: &Path) -> Result<CalibrateSummary> {
    let section = cfg.calibration.unwrap_or_default();
    let cal = sweep::calibrate_coupling(section.target_gain, &cfg.pulse, &cfg.medium, section.raman_ratio)?;
    let calibrated = RunConfig {
        medium: cal.config,
        ..cfg.clone()
    };
    let hash = cfg.hash();
    let header = format!(
        "# calibrated to pulse gain {} from config_hash={}\n# seed={}\n",
        section.target_gain,
        hash,
        seed_label(cfg.seed)
    );
    write(&out.join("calibrated.toml"), &(header + &calibrated.to_toml()))?;
    let summary = CalibrateSummary {
        config_hash: hash,
        seed: cfg.seed,
        target_gain: section.target_gain,
        raman_ratio: section.raman_ratio,
        coupling_c: cal.config.coupling_c,
        raman_a: cal.config.raman_a,
        gain: cal.gain,
        trace: cal.trace,
    };
    write(&out.join("calibration.json"), &json(&summary))?;
    Ok(summary)
}

fn dispatch(cli: Cli) -> Result<()> {
    let args = match &cli.command {
        Command::Simulate(a) | Command::Sweep(a) | Command::Detect(a) | Command::Calibrate(a) => a.clone(),
    };
    if let Some(n) = args.threads {
        // a second call in the same process is harmless; the first pool wins
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cfg = prepare(&args)?;
    match cli.command {
        Command::Simulate(_) => {
            let s = cmd_simulate(&cfg, &args.out)?;
            println!(
                "pulse gain {:.3}, V = {:.4} ({:+.2} dB), corrected {:+.2} dB",
                s.pulse_gain, s.v, s.v_db, s.v_corrected_db
            );
        }
        Command::Sweep(_) => {
            let r = cmd_sweep(&cfg, &args.out)?;
            println!(
                "{} points, {} failed",
                r.parameter_values.len(),
                r.metadata.failed_points
            );
        }
        Command::Detect(_) => {
            let s = cmd_detect(&cfg, &args.out)?;
            println!(
                "squeezing {:+.2} +/- {:.2} dB, corrected {:+.2} dB",
                s.report.measured_db, s.report.measured_db_error, s.report.corrected_db
            );
        }
        Command::Calibrate(_) => {
            let s = cmd_calibrate(&cfg, &args.out)?;
            println!("coupling_c = {:.6e} rad/s/m, pulse gain {:.4}", s.coupling_c, s.gain);
        }
    }
    Ok(())
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::reference_defaults();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn missing_field_names_its_path() {
        let text = RunConfig::reference_defaults()
            .to_toml()
            .replace("pump_waist", "# pump_waist");
        let err = RunConfig::parse(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        match err {
            Error::Config { path, message } => {
                assert_eq!(path, "medium");
                assert!(message.contains("pump_waist"), "{message}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = RunConfig::reference_defaults()
            .to_toml()
            .replace("[pulse]\n", "[pulse]\ncolour = 3\n");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(
            matches!(&err, Error::Config { path, .. } if path.starts_with("pulse")),
            "{err:?}"
        );
    }

    #[test]
    fn wrong_type_names_its_path() {
        let text = RunConfig::reference_defaults()
            .to_toml()
            .replace("n_samples = 10000", "n_samples = \"many\"");
        match RunConfig::parse(&text).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "detection.n_samples"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn sweep_needs_its_section() {
        let err = sweep_spec(&RunConfig::reference_defaults()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
