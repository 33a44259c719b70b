//! Truncated Fock-space photon statistics of a seeded two-mode squeezer.
//!
//! Reference for the linearised Gaussian treatment at low photon number.
//! `S(r) = exp(r (a b - a^dagger b^dagger))` acting on `|alpha, 0>` gives,
//! by the disentangling formula,
//!
//! ```text
//! S(r) |n, 0> = sum_m (-tanh r)^m sqrt(C(n+m, m)) / cosh^(n+1) r  |n+m, m>
//! ```
//!
//! so distinct `(n, m)` never interfere and the joint distribution is a
//! Poisson mixture over `n`.

use crate::error::{Error, Result};

/// Moments of the output photon numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockStatistics {
    pub mean_s: f64,
    pub mean_i: f64,
    pub var_s: f64,
    pub var_i: f64,
    pub var_difference: f64,
    /// Probability retained inside the cutoff.
    pub norm: f64,
}

impl FockStatistics {
    /// `Var(N_s - N_i) / (<N_s> + <N_i>)`.
    pub fn normalized_difference(&self) -> f64 {
        self.var_difference / (self.mean_s + self.mean_i)
    }
}

/// Exact statistics of `S(r) |alpha, 0>` with total photon number `<= cutoff`
/// in the probe mode.
pub fn fock_tms_statistics(r: f64, alpha: f64, cutoff: usize) -> Result<FockStatistics> {
    if !(r >= 0.0 && r.is_finite()) || !alpha.is_finite() {
        return Err(Error::Domain(format!(
            "need finite r >= 0 and alpha, got r = {r}, alpha = {alpha}"
        )));
    }
    let mut ln_fact = vec![0.0f64; cutoff + 2];
    for k in 1..ln_fact.len() {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let t2 = r.tanh().powi(2);
    let ln_t2 = t2.ln();
    let ln_sech2 = -2.0 * r.cosh().ln();
    let a2 = alpha * alpha;

    let (mut norm, mut s1, mut i1, mut s2, mut i2, mut d1, mut d2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for n in 0..=cutoff {
        // coherent-state weight of |n>
        let ln_pn = if a2 == 0.0 {
            if n > 0 {
                break;
            }
            0.0
        } else {
            -a2 + n as f64 * a2.ln() - ln_fact[n]
        };
        for m in 0..=(cutoff - n) {
            let ln_binom = ln_fact[n + m] - ln_fact[n] - ln_fact[m];
            let ln_tm = if m == 0 { 0.0 } else { m as f64 * ln_t2 };
            let p = (ln_pn + (n + 1) as f64 * ln_sech2 + ln_tm + ln_binom).exp();
            if r == 0.0 && m > 0 {
                break;
            }
            let (ns, ni, d) = ((n + m) as f64, m as f64, n as f64);
            norm += p;
            s1 += p * ns;
            s2 += p * ns * ns;
            i1 += p * ni;
            i2 += p * ni * ni;
            d1 += p * d;
            d2 += p * d * d;
        }
    }
    if norm < 1.0 - 1e-8 {
        return Err(Error::Cutoff { cutoff, norm });
    }
    let (mean_s, mean_i, mean_d) = (s1 / norm, i1 / norm, d1 / norm);
    Ok(FockStatistics {
        mean_s,
        mean_i,
        var_s: s2 / norm - mean_s * mean_s,
        var_i: i2 / norm - mean_i * mean_i,
        var_difference: d2 / norm - mean_d * mean_d,
        norm,
    })
}
