//! Pulsed, time-resolved detection.
//!
//! A pulse samples the cell's transfer function over its own spectrum, and
//! the detector additionally filters the photocurrent. The time-resolved
//! variance is the noise spectrum averaged over
//! `W(omega) ~ |f(omega)|^2 |H(omega)|^2`, with `H` a single-pole low-pass.
//!
//! Monte Carlo records draw one photon-number pair per pulse from the same
//! pulse-averaged covariance. Each arm is then thinned binomially (normal
//! approximation) and detector noise is added. The charge amplifier
//! integrates one repetition slot; only the fraction of the pulse energy
//! inside its response window is collected.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianState, IntensityNoise, MAX_SIDEBAND};
use crate::medium::{self, MediumConfig, TWO_PI};

/// Pulse spectra must keep at least this fraction of their mass on the grid.
pub const MIN_COVERAGE: f64 = 0.95;

/// Default half-span of a pulse grid, in units of `2 pi / width`.
pub const GRID_SPAN: f64 = 12.0;

/// Points in a default pulse grid (odd, so `omega = 0` is a node).
pub const GRID_POINTS: usize = 2001;

/// Efficiency inferred from the measured (-0.96 dB, -1.34 dB) pair.
pub const DEFAULT_ETA: f64 = 0.7468;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseKind {
    Square,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseShape {
    pub kind: PulseKind,
    /// Flat-top duration (square) or intensity FWHM (gaussian), s.
    pub width: f64,
    /// Linear rise and fall time of the square pulse, s.
    pub rise_time: f64,
    pub repetition_period: f64,
}

impl Default for PulseShape {
    fn default() -> Self {
        Self {
            kind: PulseKind::Square,
            width: 50e-9,
            rise_time: 5e-9,
            repetition_period: 1e-6,
        }
    }
}

impl PulseShape {
    pub fn square(width: f64) -> Self {
        Self {
            width,
            ..Self::default()
        }
    }

    pub fn gaussian(width: f64) -> Self {
        Self {
            kind: PulseKind::Gaussian,
            width,
            rise_time: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width < self.repetition_period) {
            return Err(Error::Domain(format!(
                "pulse width must lie in (0, repetition period = {}), got {}",
                self.repetition_period, self.width
            )));
        }
        if self.kind == PulseKind::Square && !(self.rise_time >= 0.0 && self.rise_time < self.width / 2.0) {
            return Err(Error::Domain(format!(
                "rise time must lie in [0, width / 2), got {}",
                self.rise_time
            )));
        }
        Ok(())
    }

    /// Field envelope, peak 1, centred on `t = 0`.
    pub fn envelope(&self, t: f64) -> f64 {
        match self.kind {
            PulseKind::Square => {
                let half = 0.5 * self.width;
                let x = t.abs();
                if x <= half {
                    1.0
                } else if x < half + self.rise_time {
                    1.0 - (x - half) / self.rise_time
                } else {
                    0.0
                }
            }
            PulseKind::Gaussian => (-2.0 * std::f64::consts::LN_2 * (t / self.width).powi(2)).exp(),
        }
    }

    /// `|f(omega)|^2` of the envelope.
    ///
    /// The square pulse is `rect(width + rise) * rect(rise) / rise`, whose
    /// transform is a product of two sincs.
    pub fn power_spectrum(&self, omega: f64) -> f64 {
        match self.kind {
            PulseKind::Square => {
                let a = self.width + self.rise_time;
                let amp = a * sinc(0.5 * omega * a) * sinc(0.5 * omega * self.rise_time);
                amp * amp
            }
            PulseKind::Gaussian => {
                let a = 2.0 * std::f64::consts::LN_2 / (self.width * self.width);
                std::f64::consts::PI / a * (-omega * omega / (2.0 * a)).exp()
            }
        }
    }

    /// `integral |f(t)|^2 dt`; by Parseval, `2 pi` times this is the total
    /// spectral mass.
    pub fn energy(&self) -> f64 {
        match self.kind {
            PulseKind::Square => self.width + 2.0 * self.rise_time / 3.0,
            PulseKind::Gaussian => {
                let a = 2.0 * std::f64::consts::LN_2 / (self.width * self.width);
                (std::f64::consts::PI / (2.0 * a)).sqrt()
            }
        }
    }

    /// Half-width the envelope needs on the spectral grid, `2 pi x 10 / width`.
    pub fn required_span(&self) -> f64 {
        TWO_PI * 10.0 / self.width
    }

    /// Symmetric grid out to `2 pi x 12 / width` (capped at the model limit).
    pub fn default_grid(&self) -> Vec<f64> {
        let span = (TWO_PI * GRID_SPAN / self.width).min(MAX_SIDEBAND);
        let half = (GRID_POINTS / 2) as f64;
        (0..GRID_POINTS).map(|k| span * (k as f64 - half) / half).collect()
    }

    /// Fraction of the pulse energy inside a window of length `window`
    /// centred on the pulse.
    pub fn captured_fraction(&self, window: f64) -> f64 {
        let reach = match self.kind {
            PulseKind::Square => 0.5 * self.width + self.rise_time,
            PulseKind::Gaussian => 6.0 * self.width,
        };
        if window >= 2.0 * reach {
            return 1.0;
        }
        let n = 4000;
        let h = 2.0 * reach / n as f64;
        let (mut inside, mut total) = (0.0, 0.0);
        for k in 0..=n {
            let t = -reach + h * k as f64;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            let p = self.envelope(t).powi(2) * w;
            total += p;
            if t.abs() <= 0.5 * window {
                inside += p;
            }
        }
        inside / total
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn trapezoid_weights(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.len() < 2 {
        return Err(Error::Domain("frequency grid needs at least two points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("frequency grid must be strictly increasing".into()));
    }
    let n = grid.len();
    Ok((0..n)
        .map(|k| {
            let left = if k > 0 { grid[k] - grid[k - 1] } else { 0.0 };
            let right = if k + 1 < n { grid[k + 1] - grid[k] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect())
}

fn normalise(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// Quadrature weights of `|f(omega)|^2` on `omega_grid`, summing to one.
pub fn pulse_spectrum(shape: &PulseShape, omega_grid: &[f64]) -> Result<Vec<f64>> {
    shape.validate()?;
    let q = trapezoid_weights(omega_grid)?;
    let span = shape.required_span();
    let (lo, hi) = (omega_grid[0], omega_grid[omega_grid.len() - 1]);
    if lo > -span * (1.0 - 1e-12) || hi < span * (1.0 - 1e-12) {
        return Err(Error::Coverage(format!(
            "grid [{lo:.4e}, {hi:.4e}] rad/s does not span +/-{span:.4e} rad/s for a {} s pulse",
            shape.width
        )));
    }
    let raw: Vec<f64> = omega_grid
        .iter()
        .zip(&q)
        .map(|(&w, &q)| q * shape.power_spectrum(w))
        .collect();
    let mass: f64 = raw.iter().sum();
    let coverage = mass / (TWO_PI * shape.energy());
    if coverage < MIN_COVERAGE {
        return Err(Error::Coverage(format!(
            "only {:.1}% of the pulse spectrum lies on the grid",
            100.0 * coverage
        )));
    }
    Ok(normalise(raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionChain {
    /// Lumped efficiency per arm (optics and detector quantum efficiency).
    pub eta: f64,
    /// 3 dB bandwidth of the single-pole detection filter, Hz.
    pub bandwidth: f64,
    /// Charge-amplifier integration window, s.
    pub amp_response: f64,
    /// Detector noise added to each pulse, in photoelectrons^2.
    pub electronic_noise_var: f64,
    pub n_samples: usize,
    pub rolling_window: usize,
    pub rng_seed: u64,
}

impl Default for DetectionChain {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            bandwidth: 8e6,
            amp_response: 150e-9,
            electronic_noise_var: 0.0,
            n_samples: 10_000,
            rolling_window: 100,
            rng_seed: 1,
        }
    }
}

impl DetectionChain {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Domain(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::Domain(format!("bandwidth must be > 0, got {}", self.bandwidth)));
        }
        if !(self.amp_response > 0.0) {
            return Err(Error::Domain(format!(
                "amp_response must be > 0, got {}",
                self.amp_response
            )));
        }
        if !(self.electronic_noise_var >= 0.0 && self.electronic_noise_var.is_finite()) {
            return Err(Error::Domain("electronic_noise_var must be finite and >= 0".into()));
        }
        if self.rolling_window < 2 {
            return Err(Error::Domain("rolling_window must be >= 2".into()));
        }
        if self.n_samples < 2 * self.rolling_window {
            return Err(Error::Domain(format!(
                "n_samples ({}) must be at least twice rolling_window ({})",
                self.n_samples, self.rolling_window
            )));
        }
        Ok(())
    }

    /// Lumped efficiency times the fraction of the pulse inside the
    /// integration window; a truncated pulse is just more loss.
    pub fn effective_eta(&self, shape: &PulseShape) -> f64 {
        self.eta * shape.captured_fraction(self.amp_response)
    }

    /// `|H(omega)|^2` of the single-pole filter.
    pub fn filter(&self, omega: f64) -> f64 {
        let x = omega / (TWO_PI * self.bandwidth);
        1.0 / (1.0 + x * x)
    }
}

/// Detection weights `W ~ |f|^2 |H|^2` on `omega_grid`, summing to one.
pub fn detection_weights(shape: &PulseShape, chain: &DetectionChain, omega_grid: &[f64]) -> Result<Vec<f64>> {
    chain.validate()?;
    let w = pulse_spectrum(shape, omega_grid)?;
    Ok(normalise(
        w.iter().zip(omega_grid).map(|(w, &om)| w * chain.filter(om)).collect(),
    ))
}

/// Probe gain averaged over the pulse spectrum, `sum_w |f|^2 |T11|^2`.
pub fn band_average_gain(config: &MediumConfig, shape: &PulseShape) -> Result<f64> {
    let grid = shape.default_grid();
    let w = pulse_spectrum(shape, &grid)?;
    let tf = medium::transfer_function(config, &grid)?;
    Ok(w.iter().zip(tf.probe_gains()).map(|(w, g)| w * g).sum())
}

/// Pulse-level intensity noise after transmission `eta`, weighted over the
/// pulse spectrum and detection filter.
pub fn pulse_noise(
    config: &MediumConfig,
    input: &GaussianState,
    shape: &PulseShape,
    chain: &DetectionChain,
    eta: f64,
) -> Result<IntensityNoise> {
    let grid = shape.default_grid();
    let w = detection_weights(shape, chain, &grid)?;
    let per_freq = gaussian::sideband_noise(config, input, &grid, eta)?;
    Ok(IntensityNoise::weighted(&per_freq, &w))
}

/// Time-resolved intensity-difference variance normalised to shot noise,
/// with the chain's effective efficiency (window truncation included)
/// applied before the spectral average.
pub fn time_resolved_variance(
    config: &MediumConfig,
    input: &GaussianState,
    shape: &PulseShape,
    chain: &DetectionChain,
) -> Result<f64> {
    Ok(pulse_noise(config, input, shape, chain, chain.effective_eta(shape))?.normalized_difference())
}

/// Provenance carried by every record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub seed: u64,
    /// sha256 of the generating configuration, hex.
    pub config_hash: String,
    /// Sample mean of the total (sum) charge per pulse.
    pub mean_total: f64,
    /// Set once a rolling average of this window has been subtracted.
    pub rolling_window: Option<usize>,
}

/// Per-pulse integrated difference charges, in photoelectrons.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseRecord {
    pub charges: Vec<f64>,
    pub metadata: RecordMetadata,
}

/// sha256 of the canonical JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config types serialise to JSON");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct RecordProvenance<'a> {
    medium: &'a MediumConfig,
    input: gaussian::StateSnapshot,
    pulse: &'a PulseShape,
    chain: &'a DetectionChain,
}

/// Draws `chain.n_samples` balanced-detection charges.
pub fn simulate_records(
    config: &MediumConfig,
    input: &GaussianState,
    shape: &PulseShape,
    chain: &DetectionChain,
) -> Result<PulseRecord> {
    chain.validate()?;
    let noise = pulse_noise(config, input, shape, chain, 1.0)?;
    let eta = chain.effective_eta(shape);
    let hash = config_hash(&RecordProvenance {
        medium: config,
        input: input.snapshot(),
        pulse: shape,
        chain,
    });
    Ok(sample_records(&noise, eta, chain, hash))
}

fn sample_records(noise: &IntensityNoise, eta: f64, chain: &DetectionChain, config_hash: String) -> PulseRecord {
    let (ns, ni) = (noise.n_s, noise.n_i);
    // Cholesky factor of the photon-number covariance
    let var_s = (ns * noise.fano_ss).max(0.0);
    let var_i = (ni * noise.fano_ii).max(0.0);
    let cov = (ns * ni).sqrt() * noise.fano_si;
    let l11 = var_s.sqrt();
    let l21 = if l11 > 0.0 { cov / l11 } else { 0.0 };
    let l22 = (var_i - l21 * l21).max(0.0).sqrt();
    let sd_e = chain.electronic_noise_var.sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(chain.rng_seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut charges = Vec::with_capacity(chain.n_samples);
    let mut total = 0.0;
    for _ in 0..chain.n_samples {
        let (z1, z2) = (draw(), draw());
        let n_s = (ns + l11 * z1).max(0.0);
        let n_i = (ni + l21 * z1 + l22 * z2).max(0.0);
        let d_s = eta * n_s + (eta * (1.0 - eta) * n_s).sqrt() * draw();
        let d_i = eta * n_i + (eta * (1.0 - eta) * n_i).sqrt() * draw();
        charges.push(d_s - d_i + sd_e * draw());
        total += d_s + d_i;
    }
    PulseRecord {
        charges,
        metadata: RecordMetadata {
            seed: chain.rng_seed,
            config_hash,
            mean_total: total / chain.n_samples as f64,
            rolling_window: None,
        },
    }
}

/// Subtracts from each sample the mean of the `window` samples before it.
pub fn rolling_average_subtract(record: &PulseRecord, window: usize) -> Result<PulseRecord> {
    let x = &record.charges;
    if window < 2 {
        return Err(Error::Domain("rolling window must be >= 2".into()));
    }
    if x.len() < 2 * window {
        return Err(Error::Domain(format!(
            "record of {} samples is shorter than twice the window {window}",
            x.len()
        )));
    }
    let mut sum: f64 = x[..window].iter().sum();
    let mut out = Vec::with_capacity(x.len() - window);
    for k in window..x.len() {
        out.push(x[k] - sum / window as f64);
        sum += x[k] - x[k - window];
    }
    Ok(PulseRecord {
        charges: out,
        metadata: RecordMetadata {
            rolling_window: Some(window),
            ..record.metadata.clone()
        },
    })
}

/// Sample variance with its standard error `var sqrt(2 / (n - 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub variance: f64,
    pub std_error: f64,
    pub n: usize,
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Variance of a record, unbiased for a preceding rolling-average subtraction
/// by dividing out `1 + 1/window`.
pub fn record_variance(record: &PulseRecord) -> Result<VarianceEstimate> {
    let n = record.charges.len();
    if n < 2 {
        return Err(Error::Domain("need at least two samples for a variance".into()));
    }
    let mut v = sample_variance(&record.charges);
    if let Some(w) = record.metadata.rolling_window {
        v /= 1.0 + 1.0 / w as f64;
    }
    Ok(VarianceEstimate {
        variance: v,
        std_error: v * (2.0 / (n as f64 - 1.0)).sqrt(),
        n,
    })
}

/// Records of a coherent probe split 50:50 onto the two detectors, with
/// `mean_photons` per pulse in total before losses.
pub fn shot_noise_record(mean_photons: f64, chain: &DetectionChain) -> Result<PulseRecord> {
    chain.validate()?;
    let split = gaussian::coherent_input(mean_photons, 0.0)?.split_50_50();
    let noise = gaussian::intensity_noise(&split)?;
    let hash = config_hash(&(mean_photons, chain));
    Ok(sample_records(&noise, chain.eta, chain, hash))
}

/// Straight-line fit of record variance against mean detected charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotNoiseFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_error: f64,
    pub intercept_error: f64,
    pub r_squared: f64,
    pub powers: Vec<f64>,
    pub mean_charges: Vec<f64>,
    pub variances: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Weighted least squares of `y = a + b x`; returns `(a, b, se_a, se_b)`.
fn weighted_line(x: &[f64], y: &[f64], sigma: &[f64]) -> (f64, f64, f64, f64) {
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&x, &y), &sd) in x.iter().zip(y).zip(sigma) {
        let w = 1.0 / (sd * sd);
        s += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = s * sxx - sx * sx;
    let b = (s * sxy - sx * sy) / det;
    let a = (sxx * sy - sx * sxy) / det;
    (a, b, (sxx / det).sqrt(), (s / det).sqrt())
}

/// Shot-noise calibration: variance of 50:50-split coherent records against
/// detected charge.
///
/// `powers` are mean photon numbers per pulse. Each power gets its own seed
/// derived from `chain.rng_seed`. The fit is weighted with the standard error
/// of the fitted variance, refined once.
pub fn shot_noise_calibration(powers: &[f64], chain: &DetectionChain) -> Result<ShotNoiseFit> {
    let mut distinct = powers.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 || powers.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::Fit(format!(
            "need at least 4 distinct positive powers, got {powers:?}"
        )));
    }
    let mut mean_charges = Vec::with_capacity(powers.len());
    let mut variances = Vec::with_capacity(powers.len());
    for (k, &p) in powers.iter().enumerate() {
        let ch = DetectionChain {
            rng_seed: derive_seed(chain.rng_seed, k as u64),
            ..*chain
        };
        let rec = shot_noise_record(p, &ch)?;
        mean_charges.push(rec.metadata.mean_total);
        variances.push(record_variance(&rec)?.variance);
    }
    let rel = (2.0 / (chain.n_samples as f64 - 1.0)).sqrt();
    let mut sigma: Vec<f64> = variances.iter().map(|v| v * rel).collect();
    let mut fit = weighted_line(&mean_charges, &variances, &sigma);
    for _ in 0..2 {
        sigma = mean_charges
            .iter()
            .map(|x| (fit.0 + fit.1 * x).abs().max(1e-300) * rel)
            .collect();
        fit = weighted_line(&mean_charges, &variances, &sigma);
    }
    let (a, b, se_a, se_b) = fit;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Fit("degenerate calibration powers".into()));
    }
    let residuals: Vec<f64> = mean_charges
        .iter()
        .zip(&variances)
        .map(|(x, y)| y - (a + b * x))
        .collect();
    let ybar = variances.iter().sum::<f64>() / variances.len() as f64;
    let ss_tot: f64 = variances.iter().map(|y| (y - ybar).powi(2)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    Ok(ShotNoiseFit {
        slope: b,
        intercept: a,
        slope_error: se_b,
        intercept_error: se_a,
        r_squared: 1.0 - ss_res / ss_tot,
        powers: powers.to_vec(),
        mean_charges,
        variances,
        residuals,
    })
}

/// Independent stream seed for sub-run `k` of a seeded run.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Squeezing of a four-wave-mixing record relative to a shot-noise record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezingReport {
    pub ratio: f64,
    pub ratio_error: f64,
    pub measured_db: f64,
    pub measured_db_error: f64,
    pub corrected: f64,
    pub corrected_db: f64,
    pub corrected_db_error: f64,
    pub eta: f64,
}

impl SqueezingReport {
    pub fn from_ratio(ratio: f64, ratio_error: f64, eta: f64) -> Result<Self> {
        let corrected = gaussian::loss_correct(ratio, eta)?;
        let k = 10.0 / std::f64::consts::LN_10;
        Ok(Self {
            ratio,
            ratio_error,
            measured_db: gaussian::db(ratio)?,
            measured_db_error: k * ratio_error / ratio,
            corrected,
            corrected_db: gaussian::db(corrected)?,
            corrected_db_error: k * ratio_error / (eta * corrected),
            eta,
        })
    }
}

/// Compares two records taken at matched mean total charge (within 2%).
pub fn squeezing_report(record_snl: &PulseRecord, record_fwm: &PulseRecord, eta: f64) -> Result<SqueezingReport> {
    let (p_snl, p_fwm) = (record_snl.metadata.mean_total, record_fwm.metadata.mean_total);
    if !((p_fwm - p_snl).abs() <= 0.02 * p_snl) {
        return Err(Error::Matching(format!(
            "mean total charge differs by more than 2% ({p_snl:.6e} vs {p_fwm:.6e})"
        )));
    }
    let snl = record_variance(record_snl)?;
    let fwm = record_variance(record_fwm)?;
    let ratio = fwm.variance / snl.variance;
    let rel = ((fwm.std_error / fwm.variance).powi(2) + (snl.std_error / snl.variance).powi(2)).sqrt();
    SqueezingReport::from_ratio(ratio, ratio * rel, eta)
}

const RECORD_MAGIC: &[u8; 8] = b"SQZREC01";

impl PulseRecord {
    /// `index,charge` table preceded by `#` provenance lines.
    pub fn to_csv(&self) -> String {
        let m = &self.metadata;
        let mut s = format!(
            "# seed={}\n# config_hash={}\n# mean_total={:?}\n# rolling_window={}\nindex,charge\n",
            m.seed,
            m.config_hash,
            m.mean_total,
            m.rolling_window.map_or("none".to_string(), |w| w.to_string())
        );
        for (k, q) in self.charges.iter().enumerate() {
            s.push_str(&format!("{k},{q:?}\n"));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Io(format!("malformed record CSV: {msg}"));
        let mut seed = None;
        let mut hash = None;
        let mut mean_total = None;
        let mut window = None;
        let mut charges = Vec::new();
        for line in text.lines() {
            if let Some(kv) = line.strip_prefix("# ") {
                let (k, v) = kv.split_once('=').ok_or_else(|| bad(line.into()))?;
                match k {
                    "seed" => seed = Some(v.parse().map_err(|_| bad(line.into()))?),
                    "config_hash" => hash = Some(v.to_string()),
                    "mean_total" => mean_total = Some(v.parse().map_err(|_| bad(line.into()))?),
                    "rolling_window" => {
                        window = Some(if v == "none" {
                            None
                        } else {
                            Some(v.parse().map_err(|_| bad(line.into()))?)
                        })
                    }
                    _ => return Err(bad(format!("unknown key {k}"))),
                }
            } else if line == "index,charge" {
                continue;
            } else {
                let (_, q) = line.split_once(',').ok_or_else(|| bad(line.into()))?;
                charges.push(q.parse().map_err(|_| bad(line.into()))?);
            }
        }
        Ok(Self {
            charges,
            metadata: RecordMetadata {
                seed: seed.ok_or_else(|| bad("missing seed".into()))?,
                config_hash: hash.ok_or_else(|| bad("missing config_hash".into()))?,
                mean_total: mean_total.ok_or_else(|| bad("missing mean_total".into()))?,
                rolling_window: window.ok_or_else(|| bad("missing rolling_window".into()))?,
            },
        })
    }

    /// Little-endian binary dump: magic, seed, hash, mean total, window
    /// (0 = none), sample count, samples.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let hash = hex::decode(&self.metadata.config_hash).map_err(|e| Error::Io(e.to_string()))?;
        if hash.len() != 32 {
            return Err(Error::Io("config hash must be 32 bytes".into()));
        }
        w.write_all(RECORD_MAGIC)?;
        w.write_all(&self.metadata.seed.to_le_bytes())?;
        w.write_all(&hash)?;
        w.write_all(&self.metadata.mean_total.to_le_bytes())?;
        w.write_all(&(self.metadata.rolling_window.unwrap_or(0) as u64).to_le_bytes())?;
        w.write_all(&(self.charges.len() as u64).to_le_bytes())?;
        for q in &self.charges {
            w.write_all(&q.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != RECORD_MAGIC {
            return Err(Error::Io("not a pulse record file".into()));
        }
        let mut u = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut u)?;
            Ok(u64::from_le_bytes(u))
        };
        let seed = next_u64(&mut r)?;
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        let mean_total = f64::from_bits(next_u64(&mut r)?);
        let window = next_u64(&mut r)? as usize;
        let n = next_u64(&mut r)? as usize;
        let mut charges = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            charges.push(f64::from_bits(next_u64(&mut r)?));
        }
        Ok(Self {
            charges,
            metadata: RecordMetadata {
                seed,
                config_hash: hex::encode(hash),
                mean_total,
                rolling_window: (window > 0).then_some(window),
            },
        })
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_binary(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        Self::read_binary(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::TransferPoint;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn record(charges: Vec<f64>) -> PulseRecord {
        PulseRecord {
            charges,
            metadata: RecordMetadata {
                seed: 7,
                config_hash: config_hash(&"test"),
                mean_total: 1.0,
                rolling_window: None,
            },
        }
    }

    #[test]
    fn square_spectrum_has_first_null_at_inverse_width() {
        let shape = PulseShape {
            rise_time: 0.0,
            ..PulseShape::square(50e-9)
        };
        let null = TWO_PI * 20e6;
        assert!(shape.power_spectrum(null) < 1e-20 * shape.power_spectrum(0.0));
        assert!(shape.power_spectrum(0.5 * null) > 0.3 * shape.power_spectrum(0.0));
        // sinc^2 closed form
        let x = 0.37 * null;
        let expect = (50e-9f64).powi(2) * (0.5 * x * 50e-9f64).sin().powi(2) / (0.5 * x * 50e-9f64).powi(2);
        assert_relative_eq!(shape.power_spectrum(x), expect, max_relative = 1e-12);
    }

    #[test]
    fn spectral_mass_obeys_parseval() {
        for shape in [
            PulseShape::default(),
            PulseShape::gaussian(50e-9),
            PulseShape::square(30e-9),
        ] {
            let grid: Vec<f64> = (-200_000..=200_000).map(|k| k as f64 * TWO_PI * 2e4).collect();
            let q = trapezoid_weights(&grid).unwrap();
            let mass: f64 = grid.iter().zip(&q).map(|(w, q)| q * shape.power_spectrum(*w)).sum();
            assert_relative_eq!(mass, TWO_PI * shape.energy(), max_relative = 2e-3);
        }
    }

    #[test]
    fn gaussian_weights_symmetric_unimodal() {
        let shape = PulseShape::gaussian(40e-9);
        let grid = shape.default_grid();
        let w = pulse_spectrum(&shape, &grid).unwrap();
        let n = w.len();
        for k in 0..n / 2 {
            assert_relative_eq!(w[k], w[n - 1 - k], max_relative = 1e-12);
            assert!(w[k] <= w[k + 1]);
        }
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn long_pulse_collapses_to_carrier() {
        let grid = PulseShape::default().default_grid();
        let shape = PulseShape {
            repetition_period: 1.0,
            ..PulseShape::square(1e-3)
        };
        let w = pulse_spectrum(&shape, &grid).unwrap();
        assert!(w[grid.len() / 2] > 0.999);
    }

    #[test]
    fn narrow_grid_is_a_coverage_error() {
        let grid: Vec<f64> = (-10..=10).map(|k| k as f64 * TWO_PI * 1e6).collect();
        assert!(matches!(
            pulse_spectrum(&PulseShape::default(), &grid),
            Err(Error::Coverage(_))
        ));
        // spans enough nominally, but sampled too coarsely to hold the mass
        let grid: Vec<f64> = (-4..4).map(|k| (k as f64 + 0.5) * TWO_PI * 70e6).collect();
        assert!(matches!(
            pulse_spectrum(&PulseShape::default(), &grid),
            Err(Error::Coverage(_))
        ));
    }

    #[test]
    fn shape_validation() {
        assert!(PulseShape::square(0.0).validate().is_err());
        assert!(PulseShape::square(2e-6).validate().is_err());
        let steep = PulseShape {
            rise_time: 30e-9,
            ..PulseShape::default()
        };
        assert!(steep.validate().is_err());
        assert!(PulseShape::default().validate().is_ok());
    }

    #[test]
    fn captured_fraction() {
        assert_eq!(PulseShape::default().captured_fraction(150e-9), 1.0);
        let f = PulseShape::square(100e-9).captured_fraction(50e-9);
        assert!(f > 0.4 && f < 0.55, "{f}");
        assert!(PulseShape::gaussian(50e-9).captured_fraction(150e-9) > 0.999);
    }

    #[test]
    fn empty_medium_time_resolved_variance_is_one() {
        let cfg = MediumConfig::default();
        let seed = gaussian::coherent_input(1e8, 0.0).unwrap();
        for shape in [PulseShape::default(), PulseShape::gaussian(30e-9)] {
            for eta in [1.0, 0.5] {
                let chain = DetectionChain {
                    eta,
                    ..DetectionChain::default()
                };
                let v = time_resolved_variance(&cfg, &seed, &shape, &chain).unwrap();
                assert!((v - 1.0).abs() < 1e-12);
            }
            assert!((band_average_gain(&cfg, &shape).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rolling_average_of_constant_is_zero() {
        let r = rolling_average_subtract(&record(vec![3.25; 500]), 50).unwrap();
        assert_eq!(r.charges.len(), 450);
        assert!(r.charges.iter().all(|&q| q.abs() < 1e-12));
        assert_eq!(r.metadata.rolling_window, Some(50));
        assert!(rolling_average_subtract(&record(vec![0.0; 99]), 50).is_err());
        assert!(rolling_average_subtract(&record(vec![0.0; 99]), 1).is_err());
    }

    #[test]
    fn rolling_average_white_noise_inflation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let w = 20;
        let r = rolling_average_subtract(&record(x), w).unwrap();
        let raw = sample_variance(&r.charges);
        assert!((raw - (1.0 + 1.0 / w as f64)).abs() < 0.01, "{raw}");
        assert!((record_variance(&r).unwrap().variance - 1.0).abs() < 0.01);
    }

    #[test]
    fn rolling_average_removes_slow_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let white: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        // drift of 1e-3 sigma per sample, i.e. 0.1 sigma across a 100-sample window
        let drifted: Vec<f64> = white.iter().enumerate().map(|(k, x)| x + 1e-3 * k as f64).collect();
        let clean = record_variance(&rolling_average_subtract(&record(white), 100).unwrap()).unwrap();
        let dirty = record_variance(&rolling_average_subtract(&record(drifted), 100).unwrap()).unwrap();
        assert!(((dirty.variance - clean.variance) / clean.variance).abs() < 0.01);
    }

    #[test]
    fn coherent_split_record_is_shot_noise() {
        let chain = DetectionChain {
            eta: 1.0,
            ..DetectionChain::default()
        };
        let rec = shot_noise_record(1e7, &chain).unwrap();
        let v = record_variance(&rec).unwrap();
        let ratio = v.variance / rec.metadata.mean_total;
        assert!((ratio - 1.0).abs() < 3.0 * (2.0 / 9999.0f64).sqrt(), "{ratio}");
    }

    #[test]
    fn twin_beam_record_matches_analytic_value() {
        let out = gaussian::apply_transfer(
            &gaussian::coherent_input(1e8, 0.0).unwrap(),
            &TransferPoint::two_mode_squeezer(4.2).unwrap(),
        )
        .unwrap();
        let noise = gaussian::intensity_noise(&out).unwrap();
        let chain = DetectionChain {
            eta: 1.0,
            n_samples: 100_000,
            rng_seed: 3,
            ..DetectionChain::default()
        };
        let rec = sample_records(&noise, 1.0, &chain, config_hash(&"tms"));
        let v = record_variance(&rec).unwrap().variance / rec.metadata.mean_total;
        let expect = 1.0 / 7.4;
        assert!((v - expect).abs() < 3.0 * expect * (2.0 / 1e5f64).sqrt(), "{v}");
    }

    #[test]
    fn records_are_deterministic() {
        let chain = DetectionChain::default();
        let a = shot_noise_record(1e6, &chain).unwrap();
        let b = shot_noise_record(1e6, &chain).unwrap();
        assert_eq!(a, b);
        let c = shot_noise_record(1e6, &DetectionChain { rng_seed: 2, ..chain }).unwrap();
        assert_ne!(a.charges, c.charges);
    }

    #[test]
    fn record_serialisation_round_trips_bit_exactly() {
        let rec = rolling_average_subtract(&shot_noise_record(1e6, &DetectionChain::default()).unwrap(), 100).unwrap();
        let back = PulseRecord::from_csv(&rec.to_csv()).unwrap();
        assert_eq!(back, rec);
        let mut buf = Vec::new();
        rec.write_binary(&mut buf).unwrap();
        assert_eq!(PulseRecord::read_binary(buf.as_slice()).unwrap(), rec);
        assert!(PulseRecord::read_binary(&b"garbage!........"[..]).is_err());
    }

    #[test]
    fn shot_noise_fit_recovers_electronic_noise() {
        let powers = [1e6, 2e6, 4e6, 8e6, 16e6];
        for v_e in [0.0, 2e5] {
            let chain = DetectionChain {
                electronic_noise_var: v_e,
                ..DetectionChain::default()
            };
            let fit = shot_noise_calibration(&powers, &chain).unwrap();
            assert!(fit.r_squared > 0.999);
            assert!((fit.intercept - v_e).abs() < 3.0 * fit.intercept_error, "{fit:?}");
            assert!((fit.slope - 1.0).abs() < 3.0 * fit.slope_error);
        }
        assert!(matches!(
            shot_noise_calibration(&[1e6, 1e6, 2e6, 2e6], &DetectionChain::default()),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn squeezing_report_values() {
        let r = SqueezingReport::from_ratio(gaussian::undb(-0.96), 0.0, DEFAULT_ETA).unwrap();
        assert!((r.measured_db + 0.96).abs() < 1e-12);
        assert!((r.corrected_db + 1.34).abs() < 0.01);
        let up = SqueezingReport::from_ratio(1.2, 0.0, 0.8).unwrap();
        assert!(up.measured_db > 0.0 && up.corrected_db > up.measured_db);
        let rec = shot_noise_record(1e6, &DetectionChain::default()).unwrap();
        let same = squeezing_report(&rec, &rec, DEFAULT_ETA).unwrap();
        assert_eq!(same.measured_db, 0.0);
        let mut dim = rec.clone();
        dim.metadata.mean_total *= 0.9;
        assert!(matches!(
            squeezing_report(&rec, &dim, DEFAULT_ETA),
            Err(Error::Matching(_))
        ));
    }

    #[test]
    fn filter_limits() {
        let chain = DetectionChain::default();
        assert_eq!(chain.filter(0.0), 1.0);
        assert_relative_eq!(chain.filter(TWO_PI * 8e6), 0.5, max_relative = 1e-12);
        let wide = DetectionChain {
            bandwidth: 1e15,
            ..chain
        };
        let shape = PulseShape::default();
        let grid = shape.default_grid();
        let w = detection_weights(&shape, &wide, &grid).unwrap();
        let p = pulse_spectrum(&shape, &grid).unwrap();
        assert!(w.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn weights_normalised_for_any_shape(width in 20e-9f64..500e-9, rise in 0.0f64..0.4, gauss: bool, bw in 1e6f64..1e9) {
            let shape = if gauss {
                PulseShape::gaussian(width)
            } else {
                PulseShape { rise_time: rise * width, ..PulseShape::square(width) }
            };
            let chain = DetectionChain { bandwidth: bw, ..DetectionChain::default() };
            let grid = shape.default_grid();
            let w = detection_weights(&shape, &chain, &grid).unwrap();
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
