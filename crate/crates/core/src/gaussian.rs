//! Two-mode Gaussian states of the detected probe and conjugate.
//!
//! Quadratures are ordered `(x_s, p_s, x_i, p_i)` with `x = a + a^dagger`, so
//! the vacuum covariance is the identity and a physical state has every
//! symplectic eigenvalue `>= 1`.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::{self, MediumConfig, TransferPoint};

pub mod fock;

pub use fock::{fock_tms_statistics, FockStatistics};

/// Bright-beam linearisation threshold: `|alpha|^2 >= 100 x` the largest
/// quadrature variance of the mode.
pub const BRIGHT_BEAM_RATIO: f64 = 100.0;

/// Largest sideband frequency the one-resonance medium model is used at,
/// 2 pi x 500 MHz.
pub const MAX_SIDEBAND: f64 = medium::TWO_PI * 500e6;

const UNCERTAINTY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState {
    /// Quadrature means `(x_s, p_s, x_i, p_i)`.
    pub mean: Vector4<f64>,
    /// Symmetrised covariance, vacuum = identity.
    pub cov: Matrix4<f64>,
}

/// Serializable snapshot of a state, used in record metadata.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StateSnapshot {
    pub mean: [f64; 4],
    pub cov: [[f64; 4]; 4],
}

impl GaussianState {
    pub fn vacuum() -> Self {
        Self {
            mean: Vector4::zeros(),
            cov: Matrix4::identity(),
        }
    }

    /// Coherent state with amplitudes `alpha_s`, `alpha_i`.
    pub fn coherent(alpha_s: Complex64, alpha_i: Complex64) -> Self {
        Self {
            mean: Vector4::new(2.0 * alpha_s.re, 2.0 * alpha_s.im, 2.0 * alpha_i.re, 2.0 * alpha_i.im),
            cov: Matrix4::identity(),
        }
    }

    pub fn snapshot(&self) -> StateSnapshot {
        let mut cov = [[0.0; 4]; 4];
        for (r, row) in cov.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.cov[(r, c)];
            }
        }
        StateSnapshot {
            mean: [self.mean[0], self.mean[1], self.mean[2], self.mean[3]],
            cov,
        }
    }

    /// Mean photon number of mode `0` (probe) or `1` (conjugate).
    pub fn mean_photons(&self, mode: usize) -> f64 {
        let k = 2 * mode;
        let m2 = self.mean[k].powi(2) + self.mean[k + 1].powi(2);
        (m2 + self.cov[(k, k)] + self.cov[(k + 1, k + 1)] - 2.0) / 4.0
    }

    /// Both symplectic eigenvalues, ascending.
    pub fn symplectic_eigenvalues(&self) -> [f64; 2] {
        let a = self.cov.fixed_view::<2, 2>(0, 0).determinant();
        let b = self.cov.fixed_view::<2, 2>(2, 2).determinant();
        let c = self.cov.fixed_view::<2, 2>(0, 2).determinant();
        let delta = a + b + 2.0 * c;
        let det = self.cov.determinant();
        let disc = (delta * delta - 4.0 * det).max(0.0).sqrt();
        let lo = (0.5 * (delta - disc)).max(0.0).sqrt();
        let hi = (0.5 * (delta + disc)).max(0.0).sqrt();
        [lo, hi]
    }

    pub fn min_symplectic_eigenvalue(&self) -> f64 {
        self.symplectic_eigenvalues()[0]
    }

    /// Symmetry and uncertainty-principle check.
    pub fn check_physical(&self) -> Result<()> {
        let asym = (self.cov - self.cov.transpose()).amax();
        if asym > 1e-12 * self.cov.amax().max(1.0) {
            return Err(Error::Physicality(format!("covariance asymmetric by {asym:.3e}")));
        }
        let nu = self.min_symplectic_eigenvalue();
        if nu < 1.0 - UNCERTAINTY_TOL {
            return Err(Error::Physicality(format!(
                "minimum symplectic eigenvalue {nu} violates the uncertainty principle"
            )));
        }
        Ok(())
    }

    /// Mixes the two modes on a 50:50 beam splitter.
    pub fn split_50_50(&self) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        #[rustfmt::skip]
        let bs = Matrix4::new(
            h, 0.0, h, 0.0,
            0.0, h, 0.0, h,
            h, 0.0, -h, 0.0,
            0.0, h, 0.0, -h,
        );
        Self {
            mean: bs * self.mean,
            cov: bs * self.cov * bs.transpose(),
        }
    }

    pub(crate) fn with_mean(self, mean: Vector4<f64>) -> Self {
        Self { mean, ..self }
    }
}

/// Excess amplitude noise of the modulator-generated probe pulses.
pub const DEFAULT_EXCESS_NOISE_DB: f64 = 2.0;

/// Seed probe pulses entering the cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeInput {
    pub photons_per_pulse: f64,
    pub excess_noise_db: f64,
}

impl Default for ProbeInput {
    fn default() -> Self {
        Self {
            photons_per_pulse: 1e8,
            excess_noise_db: DEFAULT_EXCESS_NOISE_DB,
        }
    }
}

impl ProbeInput {
    pub fn state(&self) -> Result<GaussianState> {
        coherent_input(self.photons_per_pulse, self.excess_noise_db)
    }
}

/// Probe seeded with `mean_photons` photons and `excess_noise_db` of
/// amplitude noise above shot noise; the conjugate port is vacuum.
pub fn coherent_input(mean_photons: f64, excess_noise_db: f64) -> Result<GaussianState> {
    if !(mean_photons >= 0.0 && mean_photons.is_finite()) {
        return Err(Error::Domain(format!("photon number must be >= 0, got {mean_photons}")));
    }
    if !(excess_noise_db >= 0.0 && excess_noise_db.is_finite()) {
        return Err(Error::Domain(format!(
            "excess noise must be >= 0 dB, got {excess_noise_db}"
        )));
    }
    let mut state = GaussianState::coherent(Complex64::new(mean_photons.sqrt(), 0.0), Complex64::new(0.0, 0.0));
    state.cov[(0, 0)] = undb(excess_noise_db);
    Ok(state)
}

fn real_block(z: Complex64) -> Matrix2<f64> {
    Matrix2::new(z.re, -z.im, z.im, z.re)
}

// (x_s, p_s, x_i, -p_i) carries (a_s, a_i^dagger) as ordinary complex pairs;
// flipping p_i maps back to the physical ordering.
fn flip_conjugate_phase(m: &mut Matrix4<f64>) {
    for k in 0..4 {
        m[(3, k)] = -m[(3, k)];
    }
    for k in 0..4 {
        m[(k, 3)] = -m[(k, 3)];
    }
}

/// Real symplectic matrix of a Bogoliubov map on `(a_s, a_i^dagger)`.
pub fn symplectic_embedding(t: &medium::CMat2) -> Matrix4<f64> {
    let mut s = Matrix4::zeros();
    for r in 0..2 {
        for c in 0..2 {
            s.fixed_view_mut::<2, 2>(2 * r, 2 * c).copy_from(&real_block(t[(r, c)]));
        }
    }
    flip_conjugate_phase(&mut s);
    s
}

/// Quadrature covariance of a phase-insensitive noise term `<{f, f^dagger}>/2`.
pub fn noise_embedding(n: &medium::CMat2) -> Matrix4<f64> {
    let mut v = Matrix4::zeros();
    for r in 0..2 {
        for c in 0..2 {
            v.fixed_view_mut::<2, 2>(2 * r, 2 * c)
                .copy_from(&(real_block(n[(r, c)]) * 2.0));
        }
    }
    flip_conjugate_phase(&mut v);
    v
}

/// Sends a state through one transfer point: `cov -> S cov S^T + N`.
pub fn apply_transfer(state: &GaussianState, point: &TransferPoint) -> Result<GaussianState> {
    point.check_physical()?;
    let s = symplectic_embedding(&point.t);
    let out = GaussianState {
        mean: s * state.mean,
        cov: s * state.cov * s.transpose() + noise_embedding(&point.noise),
    };
    Ok(GaussianState {
        cov: (out.cov + out.cov.transpose()) * 0.5,
        ..out
    })
}

/// Independent pure-loss channels with transmissions `eta_s`, `eta_i`.
pub fn apply_loss(state: &GaussianState, eta_s: f64, eta_i: f64) -> Result<GaussianState> {
    for eta in [eta_s, eta_i] {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Domain(format!("transmission must lie in [0, 1], got {eta}")));
        }
    }
    let x = Vector4::new(eta_s.sqrt(), eta_s.sqrt(), eta_i.sqrt(), eta_i.sqrt());
    let mut cov = state.cov;
    for r in 0..4 {
        for c in 0..4 {
            cov[(r, c)] *= x[r] * x[c];
        }
        cov[(r, r)] += 1.0 - x[r] * x[r];
    }
    Ok(GaussianState {
        mean: state.mean.component_mul(&x),
        cov,
    })
}

/// Linearised photon-number noise of a bright two-mode state.
///
/// `fano_*` are amplitude-quadrature (co)variances along each mode's mean
/// field, so `Cov(N_j, N_k) = sqrt(n_j n_k) fano_jk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityNoise {
    pub n_s: f64,
    pub n_i: f64,
    pub fano_ss: f64,
    pub fano_ii: f64,
    pub fano_si: f64,
}

impl IntensityNoise {
    /// `Var(N_s - N_i) / (<N_s> + <N_i>)`; 1 is the shot-noise limit.
    pub fn normalized_difference(&self) -> f64 {
        let (a, b) = (self.n_s.sqrt(), self.n_i.sqrt());
        (self.n_s * self.fano_ss + self.n_i * self.fano_ii - 2.0 * a * b * self.fano_si) / (self.n_s + self.n_i)
    }

    pub fn var_difference(&self) -> f64 {
        self.normalized_difference() * (self.n_s + self.n_i)
    }

    /// Weighted combination of per-frequency noise sharing the same carrier.
    pub fn weighted(items: &[IntensityNoise], weights: &[f64]) -> IntensityNoise {
        let mut out = IntensityNoise {
            n_s: items.first().map_or(0.0, |n| n.n_s),
            n_i: items.first().map_or(0.0, |n| n.n_i),
            fano_ss: 0.0,
            fano_ii: 0.0,
            fano_si: 0.0,
        };
        for (n, w) in items.iter().zip(weights) {
            out.fano_ss += w * n.fano_ss;
            out.fano_ii += w * n.fano_ii;
            out.fano_si += w * n.fano_si;
        }
        out
    }
}

/// Linearised intensity noise of `state`.
///
/// A mode with exactly zero mean is accepted only if it is vacuum, in which
/// case its photon number does not fluctuate to linear order.
pub fn intensity_noise(state: &GaussianState) -> Result<IntensityNoise> {
    let mut dirs = [Vector2::zeros(); 2];
    let mut photons = [0.0; 2];
    for mode in 0..2 {
        let k = 2 * mode;
        let mu = Vector2::new(state.mean[k], state.mean[k + 1]);
        let block = state.cov.fixed_view::<2, 2>(k, k).into_owned();
        let norm = mu.norm();
        if norm == 0.0 {
            if (block - Matrix2::identity()).amax() > 1e-9 {
                return Err(Error::Precondition(format!(
                    "mode {mode} is dark but not vacuum; use the Fock oracle for dim beams"
                )));
            }
            continue;
        }
        let n = norm * norm / 4.0;
        let tr = block.trace();
        let det = block.determinant();
        let lam_max = 0.5 * tr + (0.25 * tr * tr - det).max(0.0).sqrt();
        if n < BRIGHT_BEAM_RATIO * lam_max {
            return Err(Error::Precondition(format!(
                "mode {mode} too dim for linearisation: |alpha|^2 = {n:.3e} < {BRIGHT_BEAM_RATIO} x variance {lam_max:.3e}; use the Fock oracle"
            )));
        }
        dirs[mode] = mu / norm;
        photons[mode] = n;
    }
    if photons[0] + photons[1] == 0.0 {
        return Err(Error::Precondition("both modes are dark".into()));
    }
    let u = Vector4::new(dirs[0][0], dirs[0][1], 0.0, 0.0);
    let w = Vector4::new(0.0, 0.0, dirs[1][0], dirs[1][1]);
    Ok(IntensityNoise {
        n_s: photons[0],
        n_i: photons[1],
        fano_ss: (u.transpose() * state.cov * u)[0],
        fano_ii: (w.transpose() * state.cov * w)[0],
        fano_si: (u.transpose() * state.cov * w)[0],
    })
}

/// Normalised intensity-difference variance (1 = shot-noise limit).
pub fn intensity_difference_variance(state: &GaussianState) -> Result<f64> {
    Ok(intensity_noise(state)?.normalized_difference())
}

/// Lossless twin-beam limit `1 / (2G - 1)`.
pub fn ideal_twin_beam_noise(gain: f64) -> Result<f64> {
    if !(gain >= 1.0 && gain.is_finite()) {
        return Err(Error::Domain(format!("gain must be >= 1, got {gain}")));
    }
    Ok(1.0 / (2.0 * gain - 1.0))
}

/// Undoes a detection efficiency `eta` on a normalised variance.
pub fn loss_correct(v_measured: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("efficiency must lie in (0, 1], got {eta}")));
    }
    if v_measured <= 1.0 - eta {
        return Err(Error::Domain(format!(
            "infeasible correction: variance {v_measured} <= 1 - eta = {}",
            1.0 - eta
        )));
    }
    Ok((v_measured - (1.0 - eta)) / eta)
}

/// Variance ratio in dB, `10 log10 v`.
pub fn db(v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Domain(format!("dB of non-positive value {v}")));
    }
    Ok(10.0 * v.log10())
}

pub fn undb(d: f64) -> f64 {
    10f64.powf(d / 10.0)
}

/// Intensity-difference noise spectrum, normalised to shot noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpectrumResult {
    pub omega_grid: Vec<f64>,
    pub s: Vec<f64>,
}

/// Output state for the sideband pair at `point`, with the mean fields set by
/// the carrier map `carrier`.
pub fn sideband_state(input: &GaussianState, point: &TransferPoint, carrier: &TransferPoint) -> Result<GaussianState> {
    let out = apply_transfer(input, point)?;
    let mean = symplectic_embedding(&carrier.t) * input.mean;
    Ok(out.with_mean(mean))
}

fn check_sideband_range(omega_grid: &[f64]) -> Result<()> {
    if let Some(w) = omega_grid.iter().find(|w| !(w.abs() <= MAX_SIDEBAND)) {
        return Err(Error::Domain(format!(
            "sideband {w} rad/s outside the model range |omega| <= {MAX_SIDEBAND:.4e}"
        )));
    }
    Ok(())
}

/// Per-frequency intensity noise of the sideband pair `(omega, -omega)`
/// after transmission `eta` on both arms.
///
/// The photocurrent at `omega` beats the carrier against both the `+omega`
/// and `-omega` sidebands, so the two pair contributions are averaged.
pub fn sideband_noise(
    config: &MediumConfig,
    input: &GaussianState,
    omega_grid: &[f64],
    eta: f64,
) -> Result<Vec<IntensityNoise>> {
    check_sideband_range(omega_grid)?;
    let carrier = medium::transfer_point(config, 0.0)?;
    let plus = medium::transfer_function(config, omega_grid)?;
    let minus_grid: Vec<f64> = omega_grid.iter().map(|w| -w).collect();
    let minus = medium::transfer_function(config, &minus_grid)?;
    plus.points
        .iter()
        .zip(&minus.points)
        .map(|(p, m)| {
            let a = intensity_noise(&apply_loss(&sideband_state(input, p, &carrier)?, eta, eta)?)?;
            let b = intensity_noise(&apply_loss(&sideband_state(input, m, &carrier)?, eta, eta)?)?;
            Ok(IntensityNoise::weighted(&[a, b], &[0.5, 0.5]))
        })
        .collect()
}

/// Frequency-resolved intensity-difference noise of the cell output.
pub fn noise_spectrum(config: &MediumConfig, input: &GaussianState, omega_grid: &[f64]) -> Result<NoiseSpectrumResult> {
    let s = sideband_noise(config, input, omega_grid, 1.0)?
        .iter()
        .map(IntensityNoise::normalized_difference)
        .collect();
    Ok(NoiseSpectrumResult {
        omega_grid: omega_grid.to_vec(),
        s,
    })
}
