//! The pumped double-lambda medium.
//!
//! A strong pump, detuned by `delta1` from the D1 line, drives a two-photon
//! (Raman) coherence between the ground hyperfine levels. The probe sideband at
//! `omega` and the conjugate sideband at `-omega` are coupled through that
//! coherence. For the operator pair `v = (a_s(omega), a_i^dagger(-omega))` the
//! propagation along the cell obeys
//!
//! ```text
//! dv/dz = M(omega) v + f(z),    M = [[kappa_s, chi], [chi^*, kappa_i^*]]
//! ```
//!
//! with a single Lorentzian resonance shared by gain and absorption:
//!
//! ```text
//! D(omega)   = gamma - i (delta - delta_ls + omega)
//! chi        = coupling_c / D
//! kappa_s    = -raman_a / D
//! kappa_i(w) = conj(kappa_s(-w))
//! ```
//!
//! `f(z)` is a vacuum-reservoir Langevin force with the minimal diffusion
//! `|D_c| / 2`, where `D_c = -(M J + J M^dagger)` and `J = diag(1, -1)`. This
//! keeps `T J T^dagger + C = J` (the commutator budget) and the added noise
//! positive, for any coefficients.
//!
//! The coefficient forms are a one-resonance stand-in for the full
//! Heisenberg-Langevin treatment. `coupling_c` is calibrated against the
//! measured pulse gain (see [`crate::sweep::calibrate_coupling`]).

use nalgebra::Matrix2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMat2 = Matrix2<Complex64>;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
pub const BOLTZMANN: f64 = 1.380_649e-23;
const TORR_TO_PA: f64 = 133.322_368;

/// Reduced D1 matrix element of Rb, `<J=1/2||er||J'=1/2>`, in C m.
pub const D1_REDUCED_DIPOLE: f64 = 2.537e-29;

/// Far-detuned effective dipole moment used for the pump Rabi frequency:
/// the isotropic average of the reduced matrix element, `d / sqrt(3)`.
pub const D1_EFFECTIVE_DIPOLE: f64 = D1_REDUCED_DIPOLE / 1.732_050_807_568_877_2;

/// Rb melting point in Celsius; the vapor-pressure correlation switches branch here.
const RB_MELTING_C: f64 = 39.30;

/// Slab count used before the first convergence check.
pub const DEFAULT_SLABS: usize = 64;
/// Largest slab count tried before giving up.
pub const MAX_SLABS: usize = 1 << 16;
/// Relative change allowed between slab counts `n` and `2n`.
pub const CONVERGENCE_TOL: f64 = 1e-6;
/// Tolerance of the commutator-budget check.
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Angular frequency from a value in MHz.
pub fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e6
}

/// Angular frequency from a value in GHz.
pub fn ghz(f: f64) -> f64 {
    TWO_PI * f * 1e9
}

/// Atomic and optical parameters of the vapor cell.
///
/// Frequencies and rates are angular (rad/s); lengths in m; power in W.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumConfig {
    /// Pump one-photon detuning from the F=1 -> F'=2 transition.
    pub delta1: f64,
    /// Two-photon detuning `omega_p - omega_hf - omega_s`.
    pub delta: f64,
    /// Ground-state hyperfine splitting.
    pub omega_hf: f64,
    /// Excited-state decay rate.
    pub gamma_excited: f64,
    /// Ground-coherence decay rate; sets the width of the Raman resonance.
    pub gamma: f64,
    pub pump_power: f64,
    /// Pump 1/e^2 intensity radius.
    pub pump_waist: f64,
    pub probe_waist: f64,
    pub cell_length: f64,
    pub temperature_c: f64,
    /// Parametric coupling strength, rad s^-1 m^-1.
    pub coupling_c: f64,
    /// Raman absorption strength, rad s^-1 m^-1.
    pub raman_a: f64,
}

/// Default ground-coherence width, 2 pi x 6.5 MHz.
pub const DEFAULT_GAMMA_MHZ: f64 = 6.5;

impl Default for MediumConfig {
    /// Experimental operating point with the medium switched off
    /// (`coupling_c = raman_a = 0`).
    fn default() -> Self {
        Self {
            delta1: ghz(1.8),
            delta: mhz(20.0),
            omega_hf: ghz(6.834_682_610_904),
            gamma_excited: mhz(5.75),
            gamma: mhz(DEFAULT_GAMMA_MHZ),
            pump_power: 0.75,
            pump_waist: 650e-6,
            probe_waist: 300e-6,
            cell_length: 5e-3,
            temperature_c: 140.0,
            coupling_c: 0.0,
            raman_a: 0.0,
        }
    }
}

impl MediumConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("delta1", self.delta1),
            ("omega_hf", self.omega_hf),
            ("gamma_excited", self.gamma_excited),
            ("pump_power", self.pump_power),
            ("pump_waist", self.pump_waist),
            ("probe_waist", self.probe_waist),
            ("cell_length", self.cell_length),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        let non_negative = [
            ("gamma", self.gamma),
            ("coupling_c", self.coupling_c),
            ("raman_a", self.raman_a),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.delta.is_finite() {
            return Err(Error::Domain("delta must be finite".into()));
        }
        if self.delta1 < 10.0 * self.gamma_excited {
            return Err(Error::Domain(format!(
                "off-resonant regime requires delta1 >= 10 Gamma ({} < {})",
                self.delta1,
                10.0 * self.gamma_excited
            )));
        }
        if self.delta.abs() > 0.1 * self.delta1 {
            return Err(Error::Domain(format!(
                "|delta| must stay well below delta1 (|{}| > 0.1 x {})",
                self.delta, self.delta1
            )));
        }
        check_temperature(self.temperature_c)?;
        Ok(())
    }

    /// Pump Rabi frequency at the beam centre.
    pub fn pump_rabi(&self) -> Result<f64> {
        rabi_frequency(self.pump_power, self.pump_waist)
    }

    /// Pump intensity seen by the probe relative to the peak: the Gaussian
    /// overlap `w_pump^2 / (w_pump^2 + w_probe^2)`.
    pub fn pump_overlap(&self) -> f64 {
        let (p, s) = (self.pump_waist.powi(2), self.probe_waist.powi(2));
        p / (p + s)
    }

    /// Differential light shift of the Raman resonance, averaged over the
    /// probe profile.
    ///
    /// The pump shifts the F=1 level by `Omega^2 / (4 delta1)` and the F=2
    /// level by `Omega^2 / (4 (delta1 + omega_hf))`; the two-photon resonance
    /// moves by the difference.
    pub fn light_shift(&self) -> Result<f64> {
        let rabi = self.pump_rabi()?;
        let r2 = rabi * rabi * self.pump_overlap() / 4.0;
        Ok(r2 / self.delta1 - r2 / (self.delta1 + self.omega_hf))
    }

    /// Copy with `delta` moved onto the light-shifted Raman resonance.
    pub fn on_raman_resonance(&self) -> Result<Self> {
        Ok(Self {
            delta: self.light_shift()?,
            ..*self
        })
    }

    /// Scale that `coupling_c` and `raman_a` follow when density, pump power
    /// or detuning change: `n(T) Omega^2 / delta1^2`, in m^-3.
    pub fn coupling_scale(&self) -> Result<f64> {
        let rabi = self.pump_rabi()?;
        Ok(vapor_density(self.temperature_c)? * self.pump_overlap() * (rabi / self.delta1).powi(2))
    }

    /// Copy with the medium switched off.
    pub fn empty(&self) -> Self {
        Self {
            coupling_c: 0.0,
            raman_a: 0.0,
            ..*self
        }
    }
}

fn check_temperature(temperature_c: f64) -> Result<()> {
    if !(-20.0..=250.0).contains(&temperature_c) {
        return Err(Error::Domain(format!(
            "temperature {temperature_c} C outside the vapor-pressure correlation range [-20, 250] C"
        )));
    }
    Ok(())
}

/// Rb number density from the saturated vapor pressure.
///
/// Uses the Nesmeyanov correlation (pressure in torr, `T` in kelvin):
///
/// ```text
/// solid:  log10 P = 2.881 + 4.857 - 4215 / T
/// liquid: log10 P = 2.881 + 4.312 - 4040 / T
/// ```
///
/// and the ideal gas law `n = P / (k_B T)`.
pub fn vapor_density(temperature_c: f64) -> Result<f64> {
    check_temperature(temperature_c)?;
    let t = temperature_c + 273.15;
    let log10_torr = if temperature_c < RB_MELTING_C {
        2.881 + 4.857 - 4215.0 / t
    } else {
        2.881 + 4.312 - 4040.0 / t
    };
    let pa = 10f64.powf(log10_torr) * TORR_TO_PA;
    Ok(pa / (BOLTZMANN * t))
}

/// Peak Rabi frequency `d E0 / hbar` of a Gaussian beam.
///
/// `E0 = sqrt(2 I0 / (c eps0))` with the peak intensity `I0 = 2 P / (pi w^2)`
/// and `d` = [`D1_EFFECTIVE_DIPOLE`].
pub fn rabi_frequency(power: f64, waist: f64) -> Result<f64> {
    if !(power > 0.0 && power.is_finite()) || !(waist > 0.0 && waist.is_finite()) {
        return Err(Error::Domain(format!(
            "rabi_frequency needs power > 0 and waist > 0, got ({power}, {waist})"
        )));
    }
    let intensity = 2.0 * power / (std::f64::consts::PI * waist * waist);
    let field = (2.0 * intensity / (SPEED_OF_LIGHT * EPSILON_0)).sqrt();
    Ok(D1_EFFECTIVE_DIPOLE * field / HBAR)
}

/// Coupled-mode coefficients at one sideband frequency, per metre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledModeCoefficients {
    /// Probe self-coefficient; negative real part is Raman absorption.
    pub kappa_s: Complex64,
    /// Conjugate self-coefficient at conjugate sideband `omega`.
    pub kappa_i: Complex64,
    /// Parametric cross-coupling.
    pub chi: Complex64,
}

fn resonance_denominator(config: &MediumConfig, delta_ls: f64, omega: f64) -> Result<Complex64> {
    let d = Complex64::new(config.gamma, -(config.delta - delta_ls + omega));
    if d.norm() == 0.0 {
        return Err(Error::Singular { omega });
    }
    Ok(d)
}

fn coefficients_with_shift(config: &MediumConfig, delta_ls: f64, omega: f64) -> Result<CoupledModeCoefficients> {
    let d = resonance_denominator(config, delta_ls, omega)?;
    let d_mirror = resonance_denominator(config, delta_ls, -omega)?;
    let kappa_s = -config.raman_a / d;
    let kappa_s_mirror = -config.raman_a / d_mirror;
    Ok(CoupledModeCoefficients {
        kappa_s,
        kappa_i: kappa_s_mirror.conj(),
        chi: config.coupling_c / d,
    })
}

/// Coupled-mode coefficients at sideband `omega`.
pub fn coefficients(config: &MediumConfig, omega: f64) -> Result<CoupledModeCoefficients> {
    config.validate()?;
    coefficients_with_shift(config, config.light_shift()?, omega)
}

/// Generator `M(omega)` for the pair `(a_s(omega), a_i^dagger(-omega))`.
fn generator(config: &MediumConfig, delta_ls: f64, omega: f64) -> Result<CMat2> {
    let probe = coefficients_with_shift(config, delta_ls, omega)?;
    // the partner of probe sideband omega is conjugate sideband -omega
    let partner = coefficients_with_shift(config, delta_ls, -omega)?;
    Ok(CMat2::new(
        probe.kappa_s,
        probe.chi,
        probe.chi.conj(),
        partner.kappa_i.conj(),
    ))
}

/// `J = diag(1, -1)`, the commutator matrix of `(a, b^dagger)`.
pub fn commutator_metric() -> CMat2 {
    CMat2::new(
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(-1.0, 0.0),
    )
}

/// Closed-form exponential of a 2x2 complex matrix (Cayley-Hamilton).
pub fn expm2(m: &CMat2) -> CMat2 {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let mean = (a + d) * 0.5;
    let half_diff = (a - d) * 0.5;
    let s2 = half_diff * half_diff + b * c;
    let s = s2.sqrt();
    let (ch, sh_over_s) = if s.norm() < 1e-4 {
        (
            1.0 + s2 / 2.0 + s2 * s2 / 24.0 + s2 * s2 * s2 / 720.0,
            1.0 + s2 / 6.0 + s2 * s2 / 120.0 + s2 * s2 * s2 / 5040.0,
        )
    } else {
        (s.cosh(), s.sinh() / s)
    };
    let shifted = m - CMat2::identity() * mean;
    (CMat2::identity() * ch + shifted * sh_over_s) * mean.exp()
}

/// Hermitian 2x2 matrix absolute value `|H| = V |Lambda| V^dagger`.
pub fn hermitian_abs(h: &CMat2) -> CMat2 {
    let a = h[(0, 0)].re;
    let d = h[(1, 1)].re;
    let b = h[(0, 1)];
    let mid = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let (l1, l2) = (mid + rad, mid - rad);
    if rad <= 1e-300 {
        return CMat2::identity() * Complex64::new(mid.abs(), 0.0);
    }
    // P1 = (H - l2 I) / (l1 - l2) projects onto the l1 eigenvector.
    let p1 = (h - CMat2::identity() * Complex64::new(l2, 0.0)) / Complex64::new(l1 - l2, 0.0);
    let p2 = CMat2::identity() - p1;
    p1 * Complex64::new(l1.abs(), 0.0) + p2 * Complex64::new(l2.abs(), 0.0)
}

/// Smallest eigenvalue of a Hermitian 2x2 matrix.
pub fn hermitian_min_eigenvalue(h: &CMat2) -> f64 {
    let a = h[(0, 0)].re;
    let d = h[(1, 1)].re;
    let b = h[(0, 1)];
    0.5 * (a + d) - (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt()
}

/// Input-output map of the cell at one sideband frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferPoint {
    pub omega: f64,
    /// Bogoliubov matrix acting on `(a_s(omega), a_i^dagger(-omega))`.
    pub t: CMat2,
    /// Symmetrised added-noise covariance `<{f, f^dagger}> / 2`.
    pub noise: CMat2,
    /// Commutator carried by the added noise, `<[f, f^dagger]>`.
    pub commutator: CMat2,
    /// Slab count at which the result converged.
    pub slabs: usize,
}

impl TransferPoint {
    /// Noiseless identity map.
    pub fn identity(omega: f64) -> Self {
        Self {
            omega,
            t: CMat2::identity(),
            noise: CMat2::zeros(),
            commutator: CMat2::zeros(),
            slabs: 0,
        }
    }

    /// Ideal lossless two-mode squeezer with intensity gain `gain >= 1`.
    pub fn two_mode_squeezer(gain: f64) -> Result<Self> {
        if !(gain >= 1.0 && gain.is_finite()) {
            return Err(Error::Domain(format!("squeezer gain must be >= 1, got {gain}")));
        }
        let c = Complex64::new(gain.sqrt(), 0.0);
        let s = Complex64::new((gain - 1.0).sqrt(), 0.0);
        Ok(Self {
            omega: 0.0,
            t: CMat2::new(c, s, s, c),
            noise: CMat2::zeros(),
            commutator: CMat2::zeros(),
            slabs: 0,
        })
    }

    /// Probe intensity gain `|T11|^2`.
    pub fn probe_gain(&self) -> f64 {
        self.t[(0, 0)].norm_sqr()
    }

    /// Largest entry of `T J T^dagger + C - J`.
    pub fn commutator_defect(&self) -> f64 {
        let j = commutator_metric();
        let r = self.t * j * self.t.adjoint() + self.commutator - j;
        r.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of `noise -/+ commutator / 2`; physical noise has
    /// both non-negative.
    pub fn noise_positivity(&self) -> f64 {
        let half = self.commutator * Complex64::new(0.5, 0.0);
        hermitian_min_eigenvalue(&(self.noise - half)).min(hermitian_min_eigenvalue(&(self.noise + half)))
    }

    /// Checks the commutator budget and noise positivity to [`PHYSICALITY_TOL`].
    pub fn check_physical(&self) -> Result<()> {
        let defect = self.commutator_defect();
        if !(defect <= PHYSICALITY_TOL) {
            return Err(Error::Physicality(format!(
                "T J T^dagger + C differs from J by {defect:.3e} at omega = {}",
                self.omega
            )));
        }
        let scale = 1.0 + self.noise.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let pos = self.noise_positivity();
        if pos < -PHYSICALITY_TOL * scale {
            return Err(Error::Physicality(format!(
                "added noise below the quantum minimum by {:.3e} at omega = {}",
                -pos, self.omega
            )));
        }
        Ok(())
    }
}

// 4-point Gauss-Legendre nodes and weights on [-1, 1].
const GAUSS_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

struct SlabBlock {
    t: CMat2,
    noise: CMat2,
    commutator: CMat2,
}

impl SlabBlock {
    /// This block followed by an identical copy of itself.
    fn doubled(&self) -> Self {
        let ta = self.t.adjoint();
        Self {
            t: self.t * self.t,
            noise: self.t * self.noise * ta + self.noise,
            commutator: self.t * self.commutator * ta + self.commutator,
        }
    }
}

fn single_slab(m: &CMat2, dz: f64) -> SlabBlock {
    let j = commutator_metric();
    let drift = -(m * j + j * m.adjoint());
    let diffusion = hermitian_abs(&drift) * Complex64::new(0.5, 0.0);
    let mut noise = CMat2::zeros();
    let mut commutator = CMat2::zeros();
    for (x, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
        let s = 0.5 * dz * (x + 1.0);
        let e = expm2(&(m * Complex64::new(s, 0.0)));
        let ea = e.adjoint();
        let wt = Complex64::new(0.5 * dz * w, 0.0);
        noise += e * diffusion * ea * wt;
        commutator += e * drift * ea * wt;
    }
    SlabBlock {
        t: expm2(&(m * Complex64::new(dz, 0.0))),
        noise,
        commutator,
    }
}

fn propagate(m: &CMat2, length: f64, slabs: usize) -> SlabBlock {
    debug_assert!(slabs.is_power_of_two());
    let mut block = single_slab(m, length / slabs as f64);
    let mut n = 1;
    while n < slabs {
        block = block.doubled();
        n *= 2;
    }
    block
}

fn max_rel_change(a: &CMat2, b: &CMat2) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm() / y.norm().max(1.0))
        .fold(0.0, f64::max)
}

fn transfer_point_with_shift(config: &MediumConfig, delta_ls: f64, omega: f64) -> Result<TransferPoint> {
    let m = generator(config, delta_ls, omega)?;
    let mut slabs = DEFAULT_SLABS;
    let mut coarse = propagate(&m, config.cell_length, slabs);
    while slabs < MAX_SLABS {
        let fine = propagate(&m, config.cell_length, 2 * slabs);
        let change = max_rel_change(&coarse.t, &fine.t).max(max_rel_change(&coarse.noise, &fine.noise));
        slabs *= 2;
        if change < CONVERGENCE_TOL {
            return Ok(TransferPoint {
                omega,
                t: fine.t,
                noise: fine.noise,
                commutator: fine.commutator,
                slabs,
            });
        }
        coarse = fine;
    }
    Err(Error::Convergence { omega, slabs })
}

/// Transfer matrix and added noise of the cell at one sideband frequency.
pub fn transfer_point(config: &MediumConfig, omega: f64) -> Result<TransferPoint> {
    config.validate()?;
    transfer_point_with_shift(config, config.light_shift()?, omega)
}

/// Frequency-indexed transfer function of the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub omega_grid: Vec<f64>,
    pub points: Vec<TransferPoint>,
}

impl TransferFunction {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `|T11|^2` at each grid frequency.
    pub fn probe_gains(&self) -> Vec<f64> {
        self.points.iter().map(TransferPoint::probe_gain).collect()
    }
}

/// Propagates every grid frequency through the cell.
pub fn transfer_function(config: &MediumConfig, omega_grid: &[f64]) -> Result<TransferFunction> {
    config.validate()?;
    if let Some(bad) = omega_grid.iter().find(|w| !w.is_finite()) {
        return Err(Error::Domain(format!("non-finite grid frequency {bad}")));
    }
    let shift = config.light_shift()?;
    let points = omega_grid
        .par_iter()
        .map(|&w| transfer_point_with_shift(config, shift, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferFunction {
        omega_grid: omega_grid.to_vec(),
        points,
    })
}

/// CW probe gain `|T11(0)|^2` at the carrier.
pub fn cw_gain(config: &MediumConfig) -> Result<f64> {
    Ok(transfer_point(config, 0.0)?.probe_gain())
}
