//! Parameter sweeps, the detuning optimum and gain calibration.
//!
//! Gains are calibrated at the light-shifted Raman resonance, where the
//! amplifier is operated for gain measurements. Squeezing is evaluated at the configured
//! two-photon detuning. [`pulse_gain`] is that operating-point gain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{self, DetectionChain, PulseShape};
use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianState, ProbeInput};
use crate::medium::{self, MediumConfig};

/// Fixed `raman_a / coupling_c`.
pub const DEFAULT_RAMAN_RATIO: f64 = 0.3;

/// Gain measured on the probe pulses.
pub const TARGET_GAIN: f64 = 4.2;

/// Calibrated gain must match its target to this.
pub const GAIN_TOLERANCE: f64 = 0.01;

/// Upper end of the coupling search, in units of `gamma / cell_length`.
pub const MAX_COUPLING: f64 = 40.0;

/// Tolerance on the optimal detuning, 2 pi x 0.5 MHz.
pub const DELTA_TOLERANCE: f64 = medium::TWO_PI * 0.5e6;

/// Everything needed to evaluate an observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub medium: MediumConfig,
    pub pulse: PulseShape,
    pub detection: DetectionChain,
    pub input: ProbeInput,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.medium.validate()?;
        self.pulse.validate()?;
        self.detection.validate()?;
        self.input.state()?;
        Ok(())
    }

    pub fn input_state(&self) -> Result<GaussianState> {
        self.input.state()
    }

    /// Copy with the medium's couplings replaced.
    pub fn with_coupling(&self, coupling_c: f64, raman_ratio: f64) -> Self {
        Self {
            medium: MediumConfig {
                coupling_c,
                raman_a: raman_ratio * coupling_c,
                ..self.medium
            },
            ..*self
        }
    }

    /// Copy with one numeric field replaced, addressed as `section.field`
    /// (e.g. `medium.delta`, `pulse.width`, `detection.eta`).
    pub fn with_parameter(&self, path: &str, value: f64) -> Result<Self> {
        let mut v = serde_json::to_value(self).map_err(|e| Error::Domain(e.to_string()))?;
        let pointer = format!("/{}", path.replace('.', "/"));
        let slot = v
            .pointer_mut(&pointer)
            .ok_or_else(|| Error::Domain(format!("unknown parameter `{path}`")))?;
        if !slot.is_number() {
            return Err(Error::Domain(format!("parameter `{path}` is not numeric")));
        }
        *slot = if slot.is_f64() {
            serde_json::json!(value)
        } else {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(Error::Domain(format!(
                    "parameter `{path}` needs a non-negative integer, got {value}"
                )));
            }
            serde_json::json!(value as u64)
        };
        serde_json::from_value(v).map_err(|e| Error::Domain(format!("parameter `{path}`: {e}")))
    }
}

/// Band-averaged probe gain at the light-shifted Raman resonance.
pub fn pulse_gain(config: &MediumConfig, shape: &PulseShape) -> Result<f64> {
    detection::band_average_gain(&config.on_raman_resonance()?, shape)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `|T11(0)|^2` at the configured detuning.
    CwGain,
    /// Pulse-averaged gain at the configured detuning.
    BandAverageGain,
    /// Pulse-averaged gain at the Raman resonance.
    PulseGain,
    /// Normalised time-resolved intensity-difference variance.
    TimeResolvedVariance,
    /// Frequency-resolved noise; the swept parameter must be `omega`.
    NoiseSpectrum,
    /// Fitted conjugate/probe power slope.
    ConjugateProbeRatio,
    /// Monte Carlo record variance normalised to the mean total charge.
    RecordVariance,
}

impl Target {
    pub fn name(&self) -> &'static str {
        match self {
            Target::CwGain => "cw_gain",
            Target::BandAverageGain => "band_average_gain",
            Target::PulseGain => "pulse_gain",
            Target::TimeResolvedVariance => "time_resolved_variance",
            Target::NoiseSpectrum => "noise_spectrum",
            Target::ConjugateProbeRatio => "conjugate_probe_ratio",
            Target::RecordVariance => "record_variance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Grid {
    Values { values: Vec<f64> },
    Range { min: f64, max: f64, n: usize },
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>> {
        let pts = match self {
            Grid::Values { values } => values.clone(),
            Grid::Range { min, max, n } => {
                if *n < 2 {
                    return Err(Error::Domain("range grid needs n >= 2".into()));
                }
                (0..*n)
                    .map(|k| min + (max - min) * k as f64 / (*n - 1) as f64)
                    .collect()
            }
        };
        if pts.is_empty() {
            return Err(Error::Domain("sweep grid is empty".into()));
        }
        if pts.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("sweep grid has non-finite values".into()));
        }
        let up = pts.windows(2).all(|w| w[1] > w[0]);
        let down = pts.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::Domain("sweep grid must be strictly monotone".into()));
        }
        Ok(pts)
    }
}

/// Seed powers used for the conjugate/probe slope.
pub const DEFAULT_SEED_POWERS: [f64; 5] = [2e7, 4e7, 6e7, 8e7, 1e8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub target: Target,
    /// `section.field` of [`Scenario`], or `omega` for noise spectra.
    pub parameter: String,
    pub grid: Grid,
    pub base: Scenario,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let pts = self.grid.points()?;
        let is_omega = self.parameter == "omega";
        if is_omega != (self.target == Target::NoiseSpectrum) {
            return Err(Error::Domain(
                "`omega` is the parameter of, and only of, noise_spectrum sweeps".into(),
            ));
        }
        if !is_omega {
            self.base.with_parameter(&self.parameter, pts[0])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    pub config_hash: String,
    pub seed: u64,
    pub failed_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub parameter: String,
    pub observable: String,
    pub parameter_values: Vec<f64>,
    /// `None` where the point failed; see `errors`.
    pub values: Vec<Option<f64>>,
    pub uncertainties: Vec<f64>,
    pub errors: Vec<Option<String>>,
    /// Index of the smallest value when it is not at either end of the grid.
    pub interior_minimum: Option<usize>,
    pub metadata: CurveMetadata,
    pub spec: SweepSpec,
}

fn evaluate(spec: &SweepSpec, x: f64) -> Result<(f64, f64)> {
    let base = &spec.base;
    if spec.target == Target::NoiseSpectrum {
        let s = gaussian::noise_spectrum(&base.medium, &base.input_state()?, &[x])?;
        return Ok((s.s[0], 0.0));
    }
    let sc = base.with_parameter(&spec.parameter, x)?;
    sc.validate()?;
    let input = sc.input_state()?;
    match spec.target {
        Target::CwGain => Ok((medium::cw_gain(&sc.medium)?, 0.0)),
        Target::BandAverageGain => Ok((detection::band_average_gain(&sc.medium, &sc.pulse)?, 0.0)),
        Target::PulseGain => Ok((pulse_gain(&sc.medium, &sc.pulse)?, 0.0)),
        Target::TimeResolvedVariance => Ok((
            detection::time_resolved_variance(&sc.medium, &input, &sc.pulse, &sc.detection)?,
            0.0,
        )),
        Target::ConjugateProbeRatio => {
            let fit = conjugate_probe_ratio(&sc.medium, &sc.pulse, &DEFAULT_SEED_POWERS)?;
            Ok((fit.slope, 0.0))
        }
        Target::RecordVariance => {
            let chain = DetectionChain {
                rng_seed: detection::derive_seed(spec.seed, x.to_bits()),
                ..sc.detection
            };
            let rec = detection::simulate_records(&sc.medium, &input, &sc.pulse, &chain)?;
            let v = detection::record_variance(&rec)?;
            let m = rec.metadata.mean_total;
            Ok((v.variance / m, v.std_error / m))
        }
        Target::NoiseSpectrum => unreachable!(),
    }
}

/// Evaluates `spec.target` at every grid point, in parallel.
///
/// Failing points are recorded and the sweep carries on; it fails only if
/// every point fails.
pub fn run_sweep(spec: &SweepSpec) -> Result<CurveResult> {
    spec.validate()?;
    let xs = spec.grid.points()?;
    let results: Vec<Result<(f64, f64)>> = xs.par_iter().map(|&x| evaluate(spec, x)).collect();
    if let Some(Err(first)) = results.first().filter(|_| results.iter().all(|r| r.is_err())) {
        return Err(first.clone());
    }
    let values: Vec<Option<f64>> = results.iter().map(|r| r.as_ref().ok().map(|v| v.0)).collect();
    let uncertainties = results.iter().map(|r| r.as_ref().map_or(0.0, |v| v.1)).collect();
    let errors: Vec<Option<String>> = results
        .iter()
        .map(|r| r.as_ref().err().map(|e| e.to_string()))
        .collect();
    let interior_minimum = values
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
        .filter(|&k| k > 0 && k + 1 < xs.len());
    Ok(CurveResult {
        parameter: spec.parameter.clone(),
        observable: spec.target.name().to_string(),
        parameter_values: xs,
        values,
        uncertainties,
        metadata: CurveMetadata {
            config_hash: detection::config_hash(spec),
            seed: spec.seed,
            failed_points: errors.iter().filter(|e| e.is_some()).count(),
        },
        errors,
        interior_minimum,
        spec: spec.clone(),
    })
}

impl CurveResult {
    /// Gnuplot-ready table: `#` provenance lines, a header, then one row per
    /// grid point with a 0/1 flag on the interior minimum.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# config_hash={}\n# seed={}\n{},{},uncertainty,interior_minimum\n",
            self.metadata.config_hash, self.metadata.seed, self.parameter, self.observable
        );
        for (k, x) in self.parameter_values.iter().enumerate() {
            let v = self.values[k].map_or("nan".to_string(), |v| format!("{v:?}"));
            let flag = u8::from(self.interior_minimum == Some(k));
            s.push_str(&format!("{x:?},{v},{:?},{flag}\n", self.uncertainties[k]));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("curve results serialise")
    }
}

/// Conjugate-vs-probe power fit through the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioFit {
    pub slope: f64,
    pub inferred_gain: f64,
    pub probe: Vec<f64>,
    pub conjugate: Vec<f64>,
}

/// Gain implied by a conjugate/probe slope of an ideal amplifier,
/// `G = 1 / (1 - s)`.
pub fn gain_from_slope(slope: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&slope) {
        return Err(Error::Domain(format!("slope must lie in [0, 1), got {slope}")));
    }
    Ok(1.0 / (1.0 - slope))
}

/// Pulse-averaged output probe and conjugate photon numbers per seed power
/// at the Raman resonance, fitted as `conjugate = s probe`.
pub fn conjugate_probe_ratio(config: &MediumConfig, shape: &PulseShape, seed_powers: &[f64]) -> Result<RatioFit> {
    let mut distinct = seed_powers.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 || seed_powers.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::Fit(format!(
            "need at least 3 distinct positive seed powers, got {seed_powers:?}"
        )));
    }
    let on_res = config.on_raman_resonance()?;
    let grid = shape.default_grid();
    let w = detection::pulse_spectrum(shape, &grid)?;
    let tf = medium::transfer_function(&on_res, &grid)?;
    let mut probe = Vec::new();
    let mut conjugate = Vec::new();
    for &p in seed_powers {
        let seed = gaussian::coherent_input(p, 0.0)?;
        let (mut ps, mut pi) = (0.0, 0.0);
        for (wk, pt) in w.iter().zip(&tf.points) {
            let out = gaussian::apply_transfer(&seed, pt)?;
            ps += wk * out.mean_photons(0);
            pi += wk * out.mean_photons(1);
        }
        probe.push(ps);
        conjugate.push(pi);
    }
    let sxy: f64 = probe.iter().zip(&conjugate).map(|(x, y)| x * y).sum();
    let sxx: f64 = probe.iter().map(|x| x * x).sum();
    let slope = sxy / sxx;
    Ok(RatioFit {
        slope,
        inferred_gain: gain_from_slope(slope)?,
        probe,
        conjugate,
    })
}

/// Result of a detuning optimisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub delta_star: f64,
    pub v_star: f64,
    pub v_low_end: f64,
    pub v_high_end: f64,
}

const COARSE_POINTS: usize = 21;

/// Coarse grid then golden-section refinement of `f` on `[lo, hi]` to `tol`.
///
/// Returns `(x*, f(x*), f(lo), f(hi))`. Fails with a bracket error when the
/// coarse minimum sits at an end of the range.
pub fn golden_minimum<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64, f64, f64)>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if !(hi > lo) {
        return Err(Error::Bracket(format!("empty range [{lo}, {hi}]")));
    }
    let xs: Vec<f64> = (0..COARSE_POINTS)
        .map(|k| lo + (hi - lo) * k as f64 / (COARSE_POINTS - 1) as f64)
        .collect();
    let fs = xs.par_iter().map(|&x| f(x)).collect::<Result<Vec<f64>>>()?;
    let k = (0..fs.len()).min_by(|&a, &b| fs[a].total_cmp(&fs[b])).unwrap();
    if k == 0 || k == fs.len() - 1 {
        return Err(Error::Bracket(format!(
            "minimum at the edge of [{lo:.4e}, {hi:.4e}]; widen the range"
        )));
    }
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (xs[k - 1], xs[k + 1]);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    let (x, fx) = if fc < fd { (c, fc) } else { (d, fd) };
    // never report worse than the best coarse point
    let (x, fx) = if fs[k] < fx { (xs[k], fs[k]) } else { (x, fx) };
    Ok((x, fx, fs[0], fs[fs.len() - 1]))
}

/// Two-photon detuning in `range` minimising the time-resolved variance.
pub fn find_optimum_delta(scenario: &Scenario, range: (f64, f64)) -> Result<Optimum> {
    scenario.validate()?;
    let input = scenario.input_state()?;
    let f = |delta: f64| {
        let m = MediumConfig {
            delta,
            ..scenario.medium
        };
        detection::time_resolved_variance(&m, &input, &scenario.pulse, &scenario.detection)
    };
    let (delta_star, v_star, v_low_end, v_high_end) = golden_minimum(f, range.0, range.1, DELTA_TOLERANCE)?;
    Ok(Optimum {
        delta_star,
        v_star,
        v_low_end,
        v_high_end,
    })
}

/// Calibrated coupling and the bisection trace that found it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub config: MediumConfig,
    pub gain: f64,
    pub raman_ratio: f64,
    /// `(coupling_c, pulse gain)` at every evaluation.
    pub trace: Vec<(f64, f64)>,
}

/// Finds `coupling_c` (with `raman_a = raman_ratio coupling_c`) such that
/// the pulse gain equals `target_gain`.
///
/// The search runs over `[0, 40 gamma / cell_length]`, independent of the
/// coupling already in `base`, so recalibrating is idempotent.
pub fn calibrate_coupling(
    target_gain: f64,
    shape: &PulseShape,
    base: &MediumConfig,
    raman_ratio: f64,
) -> Result<Calibration> {
    base.validate()?;
    if !(target_gain >= 1.0 && target_gain.is_finite()) {
        return Err(Error::Domain(format!("target gain must be >= 1, got {target_gain}")));
    }
    if !(raman_ratio >= 0.0 && raman_ratio.is_finite()) {
        return Err(Error::Domain(format!("Raman ratio must be >= 0, got {raman_ratio}")));
    }
    let with = |c: f64| MediumConfig {
        coupling_c: c,
        raman_a: raman_ratio * c,
        ..*base
    };
    if target_gain == 1.0 {
        return Ok(Calibration {
            config: with(0.0),
            gain: 1.0,
            raman_ratio,
            trace: vec![(0.0, 1.0)],
        });
    }
    let mut trace = Vec::new();
    let mut gain_at = |c: f64| -> Result<f64> {
        let g = pulse_gain(&with(c), shape)?;
        trace.push((c, g));
        Ok(g)
    };
    let (mut lo, mut hi) = (0.0, MAX_COUPLING * base.gamma.max(1.0) / base.cell_length);
    let g_hi = gain_at(hi)?;
    if g_hi < target_gain {
        return Err(Error::Calibration(format!(
            "target gain {target_gain} unreachable: gain at the coupling bound {hi:.4e} is {g_hi:.4}"
        )));
    }
    let mut gain = g_hi;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let g = gain_at(mid)?;
        if g < target_gain {
            lo = mid;
        } else {
            hi = mid;
        }
        gain = g;
        if (g - target_gain).abs() < 1e-4 * GAIN_TOLERANCE || hi - lo < 1e-12 * hi {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    if (gain - target_gain).abs() > GAIN_TOLERANCE {
        gain = gain_at(c)?;
    }
    if (gain - target_gain).abs() > GAIN_TOLERANCE {
        return Err(Error::Calibration(format!(
            "gain {gain:.5} misses target {target_gain} (non-monotone response?)"
        )));
    }
    let final_gain = gain_at(c)?;
    Ok(Calibration {
        config: with(c),
        gain: final_gain,
        raman_ratio,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::mhz;
    use proptest::prelude::*;

    #[test]
    fn parameter_paths_resolve() {
        let sc = Scenario::default();
        assert_eq!(sc.with_parameter("medium.delta", 1.5).unwrap().medium.delta, 1.5);
        assert_eq!(sc.with_parameter("pulse.width", 7e-8).unwrap().pulse.width, 7e-8);
        assert_eq!(
            sc.with_parameter("detection.n_samples", 400.0)
                .unwrap()
                .detection
                .n_samples,
            400
        );
        assert!(sc.with_parameter("detection.n_samples", 1.5).is_err());
        assert!(sc.with_parameter("medium.nope", 1.0).is_err());
        assert!(sc.with_parameter("pulse.kind", 1.0).is_err());
    }

    #[test]
    fn grid_validation() {
        assert_eq!(
            Grid::Range {
                min: 0.0,
                max: 1.0,
                n: 3
            }
            .points()
            .unwrap(),
            vec![0.0, 0.5, 1.0]
        );
        assert!(Grid::Values { values: vec![] }.points().is_err());
        assert!(Grid::Values { values: vec![1.0, 1.0] }.points().is_err());
        assert!(Grid::Values {
            values: vec![1.0, 3.0, 2.0]
        }
        .points()
        .is_err());
        assert!(Grid::Values { values: vec![3.0, 2.0] }.points().is_ok());
    }

    #[test]
    fn cw_gain_sweep_over_coupling_starts_at_one() {
        let spec = SweepSpec {
            target: Target::CwGain,
            parameter: "medium.coupling_c".into(),
            grid: Grid::Values {
                values: vec![0.0, 1e9, 1e10],
            },
            base: Scenario::default(),
            seed: 0,
        };
        let r = run_sweep(&spec).unwrap();
        assert_eq!(r.values[0], Some(1.0));
        assert!(r.values[2].unwrap() > r.values[1].unwrap());
    }

    #[test]
    fn failing_points_are_recorded() {
        let spec = SweepSpec {
            target: Target::CwGain,
            parameter: "medium.temperature_c".into(),
            grid: Grid::Values {
                values: vec![100.0, 300.0],
            },
            base: Scenario::default(),
            seed: 0,
        };
        let r = run_sweep(&spec).unwrap();
        assert!(r.values[0].is_some() && r.values[1].is_none());
        assert!(r.errors[1].as_ref().unwrap().contains("domain"));
        assert_eq!(r.metadata.failed_points, 1);
        let all_bad = SweepSpec {
            grid: Grid::Values {
                values: vec![300.0, 400.0],
            },
            ..spec
        };
        assert!(run_sweep(&all_bad).is_err());
    }

    #[test]
    fn omega_only_for_spectra() {
        let spec = SweepSpec {
            target: Target::CwGain,
            parameter: "omega".into(),
            grid: Grid::Values { values: vec![0.0] },
            base: Scenario::default(),
            seed: 0,
        };
        assert!(run_sweep(&spec).is_err());
        let spectrum = SweepSpec {
            target: Target::NoiseSpectrum,
            ..spec
        };
        let r = run_sweep(&spectrum).unwrap();
        // empty medium with 2 dB of probe excess noise and a vacuum conjugate
        assert!((r.values[0].unwrap() - gaussian::undb(2.0)).abs() < 1e-12);
    }

    #[test]
    fn golden_finds_symmetric_toy_minimum() {
        let d0 = mhz(17.3);
        let (x, fx, a, b) = golden_minimum(
            |d| Ok(1.0 + ((d - d0) / mhz(5.0)).powi(2)),
            0.0,
            mhz(40.0),
            DELTA_TOLERANCE,
        )
        .unwrap();
        assert!((x - d0).abs() < DELTA_TOLERANCE);
        assert!(fx <= a && fx <= b);
        assert!(matches!(golden_minimum(Ok, 0.0, 1.0, 1e-3), Err(Error::Bracket(_))));
    }

    #[test]
    fn slope_and_gain_conversions() {
        assert!((gain_from_slope(0.7674).unwrap() - 4.3).abs() < 0.01);
        assert_eq!(gain_from_slope(0.0).unwrap(), 1.0);
        assert!(gain_from_slope(1.0).is_err());
    }

    #[test]
    fn empty_medium_has_zero_conjugate() {
        let fit =
            conjugate_probe_ratio(&MediumConfig::default(), &PulseShape::default(), &DEFAULT_SEED_POWERS).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.inferred_gain, 1.0);
        assert!(matches!(
            conjugate_probe_ratio(&MediumConfig::default(), &PulseShape::default(), &[1e7, 1e7, 2e7]),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn trivial_calibration() {
        let cal = calibrate_coupling(
            1.0,
            &PulseShape::default(),
            &MediumConfig::default(),
            DEFAULT_RAMAN_RATIO,
        )
        .unwrap();
        assert_eq!(cal.config.coupling_c, 0.0);
        assert!(calibrate_coupling(0.5, &PulseShape::default(), &MediumConfig::default(), 0.3).is_err());
        assert!(matches!(
            calibrate_coupling(4.2, &PulseShape::default(), &MediumConfig::default(), 5.0),
            Err(Error::Calibration(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn reversing_the_grid_reverses_the_curve(seed in any::<u64>()) {
            // grids must be monotone, so reversal is the only reordering
            let xs = vec![0.6, 0.7, 0.8, 0.9];
            let base = Scenario {
                detection: DetectionChain { n_samples: 400, rolling_window: 10, ..DetectionChain::default() },
                ..Scenario::default()
            };
            let run = |values: Vec<f64>| {
                run_sweep(&SweepSpec {
                    target: Target::RecordVariance,
                    parameter: "detection.eta".into(),
                    grid: Grid::Values { values },
                    base,
                    seed,
                })
                .unwrap()
            };
            let fwd = run(xs.clone());
            let mut rev = run(xs.iter().rev().copied().collect());
            rev.values.reverse();
            rev.uncertainties.reverse();
            prop_assert_eq!(fwd.values, rev.values);
            prop_assert_eq!(fwd.uncertainties, rev.uncertainties);
        }
    }
}
