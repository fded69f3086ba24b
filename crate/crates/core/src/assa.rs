//! Adaptive supersampling alignment (ASSA).
//!
//! Snapping each voxel's arrival time to the acquisition clock misplaces
//! the kernel by up to half a sample. ASSA works on an integer-upsampled
//! clock instead, chosen so the convolution kernel is always covered by at
//! least `n_min` taps:
//!
//! ```text
//! n_half = ceil(3 sigma / (v_s * dt))          coarse samples per half-width
//! alpha  = max(1, ceil((n_min - 1) / (2 n_half)))
//! f_s_up = alpha * f_s      dt_up = 1 / f_s_up      K = alpha * n_half
//! ```
//!
//! which bounds the alignment error by `dt_up / 2 <= (3 sigma / v_s) / (n_min - 1)`.
//!
//! The taps sample the outgoing N-shaped wave on that clock,
//!
//! ```text
//! h[k] = C * d[k] * exp(-d[k]^2 / (2 sigma^2)),   d[k] = -v_s * k * dt_up
//! ```
//!
//! for k in [-K, K]. The geometric 1/r falloff is deliberately *not* part
//! of the taps; the projection stages apply it per voxel-detector pair, so
//! one kernel serves the whole volume.

use crate::error::{invalid, Result};
use crate::wavefield::AcousticConfig;

/// Default minimum number of taps covering the kernel.
pub const DEFAULT_N_MIN: u32 = 25;

/// Scale constant C baked into the taps. The physical prefactor of the
/// outgoing wave is A / (2 r); the 1/r part is applied in the projection
/// stages, leaving 1/2 here.
pub const KERNEL_NORMALIZATION: f64 = 0.5;

/// Resolved supersampling parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssaParams {
    /// Integer upsampling ratio (>= 1).
    pub alpha: u32,
    /// Coarse samples per kernel half-width.
    pub n_half: u32,
    /// Minimum tap count the ratio was derived from.
    pub n_min: u32,
    /// Upsampled rate alpha * f_s [Hz].
    pub sample_rate_up: f64,
    /// Upsampled sample period 1 / f_s_up [s].
    pub dt_up: f64,
    /// Upsampled trace length alpha * n_samples.
    pub n_t_up: usize,
    /// Kernel half-width K = alpha * n_half in upsampled samples.
    pub kernel_half: u32,
}

impl AssaParams {
    /// Same acquisition with the upsampling ratio multiplied by `factor`.
    /// Used by convergence ladders; `factor` a power of two keeps the tap
    /// grid nested so refined kernels agree bit-exactly on shared samples.
    pub fn refine(&self, factor: u32) -> AssaParams {
        assert!(factor >= 1, "refinement factor must be >= 1");
        AssaParams {
            alpha: self.alpha * factor,
            n_half: self.n_half,
            n_min: self.n_min,
            sample_rate_up: self.sample_rate_up * factor as f64,
            dt_up: 1.0 / (self.sample_rate_up * factor as f64),
            n_t_up: self.n_t_up * factor as usize,
            kernel_half: self.kernel_half * factor,
        }
    }
}

/// Ceiling that forgives representation error: values within 1e-9
/// (relative) of an integer are treated as that integer, so parameter
/// sets designed to land exactly on a sample count actually do.
fn ceil_snapped(x: f64) -> f64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        x.ceil()
    }
}

/// Derives the upsampling ratio for a kernel of width `sigma` [m] under
/// the given acquisition. `n_min` below 3 cannot define a two-sided
/// kernel and is rejected.
pub fn compute_assa(sigma: f64, acoustic: &AcousticConfig, n_min: u32) -> Result<AssaParams> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("kernel sigma must be > 0, got {sigma}")));
    }
    if n_min < 3 {
        return Err(invalid(format!("n_min must be >= 3, got {n_min}")));
    }
    // 3 sigma / (v_s dt) with dt = 1/f_s.
    let ratio = 3.0 * sigma * acoustic.sample_rate / acoustic.sound_speed;
    let n_half_f = ceil_snapped(ratio);
    if !(n_half_f >= 1.0) || n_half_f > u32::MAX as f64 {
        return Err(invalid(format!(
            "kernel half-width of {n_half_f} coarse samples is out of range"
        )));
    }
    let n_half = n_half_f as u32;
    // alpha = max(1, ceil(((n_min - 1) / 2) / n_half)), evaluated as the
    // exact rational ceiling ceil((n_min - 1) / (2 n_half)).
    let alpha_u64 = (n_min as u64 - 1).div_ceil(2 * n_half as u64).max(1);
    if alpha_u64 > u32::MAX as u64 {
        return Err(invalid("derived upsampling ratio overflows u32"));
    }
    let alpha = alpha_u64 as u32;
    let sample_rate_up = acoustic.sample_rate * alpha as f64;
    Ok(AssaParams {
        alpha,
        n_half,
        n_min,
        sample_rate_up,
        dt_up: 1.0 / sample_rate_up,
        n_t_up: acoustic.n_samples * alpha as usize,
        kernel_half: alpha * n_half,
    })
}

/// Discrete convolution kernel on the upsampled clock.
#[derive(Clone, Debug)]
pub struct KernelTaps {
    /// 2K + 1 taps; tap for offset k lives at index `kernel_half + k`.
    pub taps: Vec<f64>,
    pub kernel_half: usize,
    pub dt_up: f64,
    pub sigma: f64,
    pub normalization: f64,
}

impl KernelTaps {
    /// Tap at signed offset `k` in [-K, K].
    #[inline]
    pub fn at(&self, k: isize) -> f64 {
        self.taps[(self.kernel_half as isize + k) as usize]
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// Samples the outgoing-wave kernel for the resolved `assa` parameters.
/// Taps are always computed in double precision; the pipeline casts them
/// to its element type once per operator application.
pub fn make_kernel_taps(
    assa: &AssaParams,
    sigma: f64,
    acoustic: &AcousticConfig,
    normalization: f64,
) -> Result<KernelTaps> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("kernel sigma must be > 0, got {sigma}")));
    }
    if !normalization.is_finite() {
        return Err(invalid(format!(
            "normalization must be finite, got {normalization}"
        )));
    }
    let k_half = assa.kernel_half as usize;
    let two_sigma_sq = 2.0 * sigma * sigma;
    let mut taps = vec![0.0f64; 2 * k_half + 1];
    for k in 1..=k_half {
        // d[k] = -v_s * k * dt_up; the mirrored tap is the exact negation
        // because the Gaussian factor is even in d.
        let d = -acoustic.sound_speed * k as f64 * assa.dt_up;
        let value = normalization * d * (-d * d / two_sigma_sq).exp();
        taps[k_half + k] = value;
        taps[k_half - k] = -value;
    }
    Ok(KernelTaps {
        taps,
        kernel_half: k_half,
        dt_up: assa.dt_up,
        sigma,
        normalization,
    })
}
