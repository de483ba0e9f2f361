//! Closed-form curves of the experiment.
//!
//! * [`model_true_decay`] — the underlying single-exponential fluorescence
//!   decay, which the apparatus never observes directly.
//! * [`model_irf`] — the Gaussian instrument response (all timing jitters
//!   lumped into one sigma).
//! * [`model_convolved_decay`] — what the coincidence electronics actually
//!   record: the convolution of the two, an exponentially modified Gaussian.
//!
//! The convolution has the textbook closed form
//!
//! ```text
//! F(t) = f0/2 * exp(sigma^2 / 2 tau^2) * exp(-(t - mu)/tau)
//!             * (1 + erf((t - mu - sigma^2/tau) / sqrt(2 sigma^2)))
//! ```
//!
//! which is numerically a trap: far below the peak the exponential overflows
//! while the erf bracket vanishes. With `u = (t-mu)/sigma`, `s = sigma/tau`
//! and `y = (s-u)/sqrt(2)` the same expression regroups into
//!
//! ```text
//! y > 0:   F(t) = f0/2 * exp(-u^2/2) * erfcx(y)
//! y <= 0:  F(t) = f0/2 * exp(s^2/2 - u s) * erfc(y)
//! ```
//!
//! where every factor is bounded (for `y <= 0` the exponent is at most
//! `-s^2/2`), so evaluation is overflow-free on the whole axis.

use crate::special::{erfc, erfcx, norm_cdf, SQRT_2, SQRT_2PI};

/// Underlying decay `f0 * exp(-t/tau)` for `t >= 0`, zero before the pulse.
///
/// `tau_ps` must be positive and `f0` non-negative.
pub fn model_true_decay(t_ps: f64, tau_ps: f64, f0: f64) -> f64 {
    debug_assert!(tau_ps > 0.0 && f0 >= 0.0);
    if t_ps < 0.0 {
        0.0
    } else {
        f0 * (-t_ps / tau_ps).exp()
    }
}

/// Unit-area Gaussian instrument response centred on `mu_ps`.
///
/// `sigma_ps` must be positive.
pub fn model_irf(t_ps: f64, mu_ps: f64, sigma_ps: f64) -> f64 {
    debug_assert!(sigma_ps > 0.0);
    let z = (t_ps - mu_ps) / sigma_ps;
    (-0.5 * z * z).exp() / (sigma_ps * SQRT_2PI)
}

/// Measured decay: exponential decay convolved with the Gaussian IRF.
///
/// `tau_ps` and `sigma_ps` must be positive, `f0` non-negative.
pub fn model_convolved_decay(t_ps: f64, tau_ps: f64, sigma_ps: f64, mu_ps: f64, f0: f64) -> f64 {
    debug_assert!(tau_ps > 0.0 && sigma_ps > 0.0 && f0 >= 0.0);
    let u = (t_ps - mu_ps) / sigma_ps;
    let s = sigma_ps / tau_ps;
    let y = (s - u) / SQRT_2;
    if y > 0.0 {
        0.5 * f0 * (-0.5 * u * u).exp() * erfcx(y)
    } else {
        0.5 * f0 * (s * (0.5 * s - u)).exp() * erfc(y)
    }
}

/// Partial derivative of [`model_convolved_decay`] with respect to `tau_ps`.
///
/// With `A(tau) = s^2/2 - u s` the product rule gives
/// `dF/dtau = dA/dtau * F + f0 sigma / (tau^2 sqrt(2 pi)) * exp(-u^2/2)`,
/// both terms bounded by the same regrouping as the model itself.
pub fn model_convolved_decay_dtau(
    t_ps: f64,
    tau_ps: f64,
    sigma_ps: f64,
    mu_ps: f64,
    f0: f64,
) -> f64 {
    let u = (t_ps - mu_ps) / sigma_ps;
    let s = sigma_ps / tau_ps;
    let da_dtau = (u - s) * sigma_ps / (tau_ps * tau_ps);
    let value = model_convolved_decay(t_ps, tau_ps, sigma_ps, mu_ps, f0);
    da_dtau * value + f0 * sigma_ps / (tau_ps * tau_ps * SQRT_2PI) * (-0.5 * u * u).exp()
}

/// Fraction of the measured-decay distribution at or below `t_ps`
/// (the CDF of the normalised delay density).
///
/// Closed form: `Phi(u) - F(t; f0=1) / 1`, exact because
/// `d/dt [Phi(u) - F] = F / tau` and both endpoints match.
/// Used to histogram large simulated runs without drawing every event.
pub fn convolved_decay_cdf(t_ps: f64, tau_ps: f64, sigma_ps: f64, mu_ps: f64) -> f64 {
    let u = (t_ps - mu_ps) / sigma_ps;
    (norm_cdf(u) - model_convolved_decay(t_ps, tau_ps, sigma_ps, mu_ps, 1.0)).clamp(0.0, 1.0)
}

/// CDF of the Gaussian IRF, for the same binned-sampling shortcut.
pub fn irf_cdf(t_ps: f64, mu_ps: f64, sigma_ps: f64) -> f64 {
    norm_cdf((t_ps - mu_ps) / sigma_ps)
}
