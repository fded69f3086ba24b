//! Continuous wavefield of a Gaussian initial pressure source, and the
//! brute-force simulators the discrete pipeline is validated against.
//!
//! A source `p0(r') = A exp(-||r' - r_i||^2 / (2 sigma^2))` observed at
//! distance `r` produces
//!
//! ```text
//! p(r, t) = A/(2r) * [ (r - v t) e^{-(r - v t)^2 / 2 sigma^2}
//!                    + (r + v t) e^{-(r + v t)^2 / 2 sigma^2} ]
//! ```
//!
//! The second (incoming) term is negligible once `r >> sigma`; the
//! pipeline models only the outgoing N-shape
//!
//! ```text
//! p_out(r, t) = A/(2r) * d e^{-d^2 / 2 sigma^2},   d = r - v t,
//! ```
//!
//! truncated to exactly zero outside |d| < 3 sigma. [`oracle_forward`]
//! sums that truncated wave over all voxels in plain double precision —
//! quadratic cost, no alignment, no discretization of the kernel — and is
//! the reference every operator-level shortcut must reproduce.

use crate::error::{invalid, GpairError, Result};
use crate::geometry::{DetectorArray, VoxelImage};
use crate::operators::{SignalSet, SystemModel};
use rayon::prelude::*;

/// Acquisition timing and medium parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcousticConfig {
    /// Speed of sound [m/s].
    pub sound_speed: f64,
    /// Sampling rate of the recorded traces [Hz].
    pub sample_rate: f64,
    /// Samples per trace.
    pub n_samples: usize,
    /// Time of the first sample [s].
    pub t_start: f64,
}

impl AcousticConfig {
    pub fn new(sound_speed: f64, sample_rate: f64, n_samples: usize, t_start: f64) -> Result<Self> {
        if !(sound_speed > 0.0) || !sound_speed.is_finite() {
            return Err(invalid(format!(
                "sound speed must be > 0, got {sound_speed}"
            )));
        }
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(invalid(format!(
                "sample rate must be > 0, got {sample_rate}"
            )));
        }
        if n_samples == 0 {
            return Err(invalid("trace length must be >= 1 sample"));
        }
        if !t_start.is_finite() {
            return Err(invalid(format!("t_start must be finite, got {t_start}")));
        }
        Ok(AcousticConfig {
            sound_speed,
            sample_rate,
            n_samples,
            t_start,
        })
    }

    /// Sample period [s].
    #[inline]
    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Time of sample `n` [s].
    #[inline]
    pub fn sample_time(&self, n: usize) -> f64 {
        self.t_start + n as f64 * self.dt()
    }
}

/// One Gaussian initial-pressure source.
#[derive(Clone, Copy, Debug)]
pub struct GaussianSource {
    /// Center position [m].
    pub center: [f64; 3],
    /// Peak initial pressure (arbitrary units).
    pub amplitude: f64,
    /// Spatial spread [m].
    pub sigma: f64,
}

impl GaussianSource {
    pub fn new(center: [f64; 3], amplitude: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(invalid(format!("source sigma must be > 0, got {sigma}")));
        }
        if !amplitude.is_finite() {
            return Err(invalid(format!(
                "source amplitude must be finite, got {amplitude}"
            )));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "source center must be finite, got {center:?}"
            )));
        }
        Ok(GaussianSource {
            center,
            amplitude,
            sigma,
        })
    }
}

/// Integral of the source's initial pressure over the sphere of radius
/// `r_prime` centered at distance `r` from the source:
///
/// ```text
/// I = A 2 pi sigma^2 (r'/r) [ e^{-(r - r')^2 / 2 sigma^2} - e^{-(r + r')^2 / 2 sigma^2} ]
/// ```
pub fn spherical_integral(source: &GaussianSource, r: f64, r_prime: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid(format!(
            "integration center distance must be > 0, got {r}"
        )));
    }
    if !(r_prime >= 0.0) {
        return Err(invalid(format!(
            "sphere radius must be >= 0, got {r_prime}"
        )));
    }
    let s2 = 2.0 * source.sigma * source.sigma;
    let near = (-(r - r_prime) * (r - r_prime) / s2).exp();
    let far = (-(r + r_prime) * (r + r_prime) / s2).exp();
    Ok(source.amplitude
        * 2.0
        * std::f64::consts::PI
        * source.sigma
        * source.sigma
        * (r_prime / r)
        * (near - far))
}

/// One travelling lobe `A/(2r) · d · e^{-d²/2σ²}`. Shared by the full,
/// outgoing and truncated evaluations so their differences isolate the
/// incoming term rather than rounding-order noise.
#[inline(always)]
fn wave_lobe(amplitude: f64, sigma: f64, r: f64, d: f64) -> f64 {
    amplitude / (2.0 * r) * d * (-d * d / (2.0 * sigma * sigma)).exp()
}

/// Full pressure (outgoing + incoming) at distance `r` and time `t`.
pub fn pressure_full(
    source: &GaussianSource,
    r: f64,
    t: f64,
    acoustic: &AcousticConfig,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid(format!(
            "observation distance must be > 0, got {r}"
        )));
    }
    let vt = acoustic.sound_speed * t;
    Ok(wave_lobe(source.amplitude, source.sigma, r, r - vt)
        + wave_lobe(source.amplitude, source.sigma, r, r + vt))
}

/// Outgoing N-shaped wave, truncated to exactly zero outside |d| < 3 sigma.
pub fn pressure_outgoing(
    source: &GaussianSource,
    r: f64,
    t: f64,
    acoustic: &AcousticConfig,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid(format!(
            "observation distance must be > 0, got {r}"
        )));
    }
    Ok(outgoing_truncated(
        source.amplitude,
        source.sigma,
        r,
        acoustic.sound_speed * t,
    ))
}

/// Outgoing wave without the 3-sigma cut. Only used to quantify how much
/// the truncation and the neglected incoming term cost.
pub fn pressure_outgoing_raw(
    source: &GaussianSource,
    r: f64,
    t: f64,
    acoustic: &AcousticConfig,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid(format!(
            "observation distance must be > 0, got {r}"
        )));
    }
    Ok(wave_lobe(
        source.amplitude,
        source.sigma,
        r,
        r - acoustic.sound_speed * t,
    ))
}

#[inline(always)]
fn outgoing_truncated(amplitude: f64, sigma: f64, r: f64, vt: f64) -> f64 {
    let d = r - vt;
    if d.abs() < 3.0 * sigma {
        wave_lobe(amplitude, sigma, r, d)
    } else {
        0.0
    }
}

/// Continuous-time reference forward model: every voxel is a Gaussian
/// source of width `sigma`, every trace is the truncated outgoing wave
/// summed over voxels in ascending voxel order and sampled exactly.
///
/// Quadratic in (voxels x detectors x window samples); intended for
/// test-scale volumes.
pub fn oracle_forward(
    image: &VoxelImage<f64>,
    array: &DetectorArray,
    acoustic: &AcousticConfig,
    sigma: f64,
) -> Result<SignalSet<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("kernel sigma must be > 0, got {sigma}")));
    }
    let grid = image.grid;
    let n_t = acoustic.n_samples;
    let v = acoustic.sound_speed;
    let dt = acoustic.dt();
    let mut out = SignalSet::zeros(array.len(), *acoustic);

    let traces: Vec<Result<()>> = out
        .data
        .chunks_mut(n_t)
        .collect::<Vec<_>>()
        .into_par_iter()
        .enumerate()
        .map(|(j, trace)| {
            let s = array.positions[j];
            for i in 0..grid.len() {
                let p = grid.position(i);
                let dx = p[0] - s[0];
                let dy = p[1] - s[1];
                let dz = p[2] - s[2];
                let r = (dx * dx + dy * dy + dz * dz).sqrt();
                if r == 0.0 {
                    return Err(GpairError::GeometryConflict(format!(
                        "detector {j} coincides with voxel {i} at {p:?}"
                    )));
                }
                let a = image.values[i];
                if a == 0.0 {
                    continue; // adds exactly zero everywhere
                }
                // The wave is exactly zero outside |r - v t| < 3 sigma;
                // enumerate one sample beyond that window on both sides
                // and let the truncation decide, so clipping is bitwise
                // identical to the full scan.
                let t_lo = (r - 3.0 * sigma) / v;
                let t_hi = (r + 3.0 * sigma) / v;
                let n_lo = (((t_lo - acoustic.t_start) / dt).floor() as i64 - 1).max(0) as usize;
                let n_hi_raw = ((t_hi - acoustic.t_start) / dt).ceil() as i64 + 1;
                if n_hi_raw < 0 {
                    continue;
                }
                let n_hi = (n_hi_raw as usize).min(n_t - 1);
                // The sample index drives the time arithmetic, so the
                // indexed subrange reads better than a skip/take chain.
                #[allow(clippy::needless_range_loop)]
                for n in n_lo..=n_hi {
                    let vt = v * (acoustic.t_start + n as f64 * dt);
                    trace[n] += outgoing_truncated(a, sigma, r, vt);
                }
            }
            Ok(())
        })
        .collect();
    for r in traces {
        r?;
    }
    Ok(out)
}

/// Default cap on dense-operator entries (rows x cols).
pub const DEFAULT_DENSE_CAP: usize = 10_000_000;

/// The discrete forward operator materialized as an explicit matrix,
/// row-major with rows indexed `j * n_samples + n`. Small instances only;
/// exists so matrix transposition can arbitrate forward/adjoint symmetry.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
}

impl DenseOperator {
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for (row, yk) in y.iter_mut().enumerate() {
            let base = row * self.cols;
            let mut acc = 0.0;
            for (c, &xv) in x.iter().enumerate() {
                acc += self.a[base + c] * xv;
            }
            *yk = acc;
        }
        y
    }

    /// Transpose-multiply: exact adjoint of [`DenseOperator::matvec`].
    pub fn rmatvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut x = vec![0.0; self.cols];
        for (row, &yv) in y.iter().enumerate() {
            let base = row * self.cols;
            for (c, xv) in x.iter_mut().enumerate() {
                *xv += self.a[base + c] * yv;
            }
        }
        x
    }
}

/// Materializes the pipeline's forward operator column by column: column
/// `i` is the forward projection of the i-th unit voxel.
pub fn build_dense_matrix(model: &SystemModel<f64>) -> Result<DenseOperator> {
    build_dense_matrix_with_cap(model, DEFAULT_DENSE_CAP)
}

pub fn build_dense_matrix_with_cap(model: &SystemModel<f64>, cap: usize) -> Result<DenseOperator> {
    let cols = model.grid.len();
    let rows = model.array.len() * model.acoustic.n_samples;
    let entries = rows
        .checked_mul(cols)
        .ok_or_else(|| GpairError::ResourceLimit("dense operator entry count overflows".into()))?;
    if entries > cap {
        return Err(GpairError::ResourceLimit(format!(
            "dense operator would hold {entries} entries, cap is {cap}"
        )));
    }
    let mut a = vec![0.0f64; entries];
    let mut unit = VoxelImage::<f64>::zeros(model.grid);
    for i in 0..cols {
        unit.values[i] = 1.0;
        let y = model.forward(&unit)?;
        for (row, &v) in y.data.iter().enumerate() {
            a[row * cols + i] = v;
        }
        unit.values[i] = 0.0;
    }
    Ok(DenseOperator { rows, cols, a })
}
