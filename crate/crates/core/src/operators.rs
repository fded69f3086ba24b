//! Discrete forward and adjoint operators.
//!
//! The forward model factors into three exact linear stages on the
//! upsampled clock:
//!
//! ```text
//! forward:  project_up -> scatter_convolve -> decimate
//! adjoint:  zero_fill  -> correlate        -> backproject
//! ```
//!
//! `project_up` deposits every voxel's amplitude, scaled by 1/r, at its
//! aligned arrival sample; the convolution then shapes each deposit into
//! the outgoing N-wave; decimation returns to the acquisition clock. Each
//! adjoint stage is the exact transpose of its partner, so the composed
//! pair satisfies `<A x, y> = <x, A^T y>` to rounding error — the dot
//! test below checks exactly that and is the contract every change to
//! this file must keep.
//!
//! Concurrency: the forward side parallelizes over detectors (each trace
//! is owned by one task, voxels accumulate in ascending order), the
//! adjoint side over voxels (each voxel sums its detectors in ascending
//! order). Results are therefore bitwise reproducible regardless of
//! thread count.

use crate::assa::{
    compute_assa, make_kernel_taps, AssaParams, KernelTaps, DEFAULT_N_MIN, KERNEL_NORMALIZATION,
};
use crate::error::{invalid, mismatch, Result};
use crate::geometry::{build_tof_table, DetectorArray, ToFTable, VoxelGrid, VoxelImage};
use crate::real::Real;
use crate::wavefield::AcousticConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

/// Multi-detector trace block on the acquisition clock, detector-major:
/// sample `n` of detector `j` lives at `j * n_samples + n`.
#[derive(Clone, Debug)]
pub struct SignalSet<F: Real = f64> {
    pub n_detectors: usize,
    pub acoustic: AcousticConfig,
    pub data: Vec<F>,
}

impl<F: Real> SignalSet<F> {
    pub fn zeros(n_detectors: usize, acoustic: AcousticConfig) -> Self {
        SignalSet {
            n_detectors,
            acoustic,
            data: vec![F::zero(); n_detectors * acoustic.n_samples],
        }
    }

    pub fn from_data(n_detectors: usize, acoustic: AcousticConfig, data: Vec<F>) -> Result<Self> {
        if data.len() != n_detectors * acoustic.n_samples {
            return Err(mismatch(format!(
                "signal block holds {} samples, expected {} detectors x {}",
                data.len(),
                n_detectors,
                acoustic.n_samples
            )));
        }
        Ok(SignalSet {
            n_detectors,
            acoustic,
            data,
        })
    }

    #[inline]
    pub fn n_samples(&self) -> usize {
        self.acoustic.n_samples
    }

    #[inline]
    pub fn trace(&self, j: usize) -> &[F] {
        let n = self.acoustic.n_samples;
        &self.data[j * n..(j + 1) * n]
    }

    #[inline]
    pub fn trace_mut(&mut self, j: usize) -> &mut [F] {
        let n = self.acoustic.n_samples;
        &mut self.data[j * n..(j + 1) * n]
    }

    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .fold(0.0f64, |m, v| m.max(v.to_f64().abs()))
    }

    pub fn cast<G: Real>(&self) -> SignalSet<G> {
        SignalSet {
            n_detectors: self.n_detectors,
            acoustic: self.acoustic,
            data: self.data.iter().map(|v| G::of(v.to_f64())).collect(),
        }
    }
}

/// Trace block on the upsampled clock, same detector-major layout.
#[derive(Clone, Debug)]
pub struct UpsampledBuffer<F: Real = f64> {
    pub n_detectors: usize,
    pub n_t_up: usize,
    pub data: Vec<F>,
}

impl<F: Real> UpsampledBuffer<F> {
    pub fn zeros(n_detectors: usize, n_t_up: usize) -> Self {
        UpsampledBuffer {
            n_detectors,
            n_t_up,
            data: vec![F::zero(); n_detectors * n_t_up],
        }
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[F] {
        &self.data[j * self.n_t_up..(j + 1) * self.n_t_up]
    }
}

/// Relative L2 distance `||a - b|| / ||b||` (0 when both are empty or b
/// is exactly zero and a equals it).
pub fn relative_l2<F: Real>(a: &[F], b: &[F]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_l2 needs equal lengths");
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = x.to_f64() - y.to_f64();
        num += d * d;
        den += y.to_f64() * y.to_f64();
    }
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (num / den).sqrt()
}

/// Deposits every voxel's amplitude, scaled by 1/r, at its aligned
/// sample on the upsampled clock. Invalid pairs (windows leaving the
/// record) contribute nothing.
pub fn project_up<F: Real>(image: &VoxelImage<F>, tof: &ToFTable) -> Result<UpsampledBuffer<F>> {
    if image.values.len() != tof.n_voxels {
        return Err(mismatch(format!(
            "image holds {} voxels, tof table {}",
            image.values.len(),
            tof.n_voxels
        )));
    }
    let m = tof.n_voxels;
    let mut out = UpsampledBuffer::zeros(tof.n_detectors, tof.n_t_up);
    out.data
        .par_chunks_mut(tof.n_t_up)
        .enumerate()
        .for_each(|(j, row)| {
            let base = j * m;
            for i in 0..m {
                if tof.valid[base + i] {
                    let k = tof.aligned[base + i] as usize;
                    row[k] += image.values[i] / F::of(tof.distances[base + i]);
                }
            }
        });
    Ok(out)
}

/// Exact transpose of [`project_up`]: gathers each voxel's aligned sample
/// from every detector, scaled by the same 1/r.
pub fn backproject<F: Real>(
    buffer: &UpsampledBuffer<F>,
    tof: &ToFTable,
    grid: &VoxelGrid,
) -> Result<VoxelImage<F>> {
    if grid.len() != tof.n_voxels {
        return Err(mismatch(format!(
            "grid holds {} voxels, tof table {}",
            grid.len(),
            tof.n_voxels
        )));
    }
    if buffer.n_detectors != tof.n_detectors || buffer.n_t_up != tof.n_t_up {
        return Err(mismatch(format!(
            "buffer is {} x {}, tof table expects {} x {}",
            buffer.n_detectors, buffer.n_t_up, tof.n_detectors, tof.n_t_up
        )));
    }
    let m = tof.n_voxels;
    let mut image = VoxelImage::zeros(*grid);
    image.values.par_iter_mut().enumerate().for_each(|(i, g)| {
        let mut acc = F::zero();
        for j in 0..tof.n_detectors {
            let p = j * m + i;
            if tof.valid[p] {
                let k = tof.aligned[p] as usize;
                acc += buffer.data[j * tof.n_t_up + k] / F::of(tof.distances[p]);
            }
        }
        *g = acc;
    });
    Ok(image)
}

/// Discrete convolution with the kernel taps, per detector row, output
/// clipped to the row (`out[k] = sum_m in[m] h[k - m]`).
pub fn scatter_convolve<F: Real>(
    buffer: &UpsampledBuffer<F>,
    taps: &KernelTaps,
) -> UpsampledBuffer<F> {
    let taps_cast: Vec<F> = taps.taps.iter().map(|&t| F::of(t)).collect();
    convolve_rows(buffer, &taps_cast, taps.kernel_half, Direction::Convolve)
}

/// Discrete correlation with the kernel taps, per detector row
/// (`out[k] = sum_m h[m - k] in[m]`): the exact transpose of
/// [`scatter_convolve`] under the same boundary clipping.
pub fn correlate<F: Real>(buffer: &UpsampledBuffer<F>, taps: &KernelTaps) -> UpsampledBuffer<F> {
    let taps_cast: Vec<F> = taps.taps.iter().map(|&t| F::of(t)).collect();
    convolve_rows(buffer, &taps_cast, taps.kernel_half, Direction::Correlate)
}

#[derive(Clone, Copy, PartialEq)]
enum Direction {
    Convolve,
    Correlate,
}

fn convolve_rows<F: Real>(
    buffer: &UpsampledBuffer<F>,
    taps: &[F],
    kernel_half: usize,
    dir: Direction,
) -> UpsampledBuffer<F> {
    let n = buffer.n_t_up;
    let kh = kernel_half;
    let mut out = UpsampledBuffer::zeros(buffer.n_detectors, n);
    out.data
        .par_chunks_mut(n)
        .zip(buffer.data.par_chunks(n))
        .for_each(|(dst, src)| {
            for k in 0..n {
                let m_lo = k.saturating_sub(kh);
                let m_hi = (k + kh).min(n - 1);
                let mut acc = F::zero();
                match dir {
                    Direction::Convolve => {
                        for m in m_lo..=m_hi {
                            acc += src[m] * taps[kh + k - m];
                        }
                    }
                    Direction::Correlate => {
                        for m in m_lo..=m_hi {
                            acc += src[m] * taps[kh + m - k];
                        }
                    }
                }
                dst[k] = acc;
            }
        });
    out
}

/// Keeps every alpha-th sample: `y[n] = z[alpha n]` per detector.
pub fn decimate<F: Real>(
    buffer: &UpsampledBuffer<F>,
    assa: &AssaParams,
    acoustic: &AcousticConfig,
) -> Result<SignalSet<F>> {
    if buffer.n_t_up != assa.n_t_up || acoustic.n_samples * assa.alpha as usize != assa.n_t_up {
        return Err(mismatch(format!(
            "buffer length {} does not match alpha {} x {} samples",
            buffer.n_t_up, assa.alpha, acoustic.n_samples
        )));
    }
    let alpha = assa.alpha as usize;
    let n_t = acoustic.n_samples;
    let mut out = SignalSet::zeros(buffer.n_detectors, *acoustic);
    out.data
        .par_chunks_mut(n_t)
        .zip(buffer.data.par_chunks(buffer.n_t_up))
        .for_each(|(dst, src)| {
            for (n, d) in dst.iter_mut().enumerate() {
                *d = src[alpha * n];
            }
        });
    Ok(out)
}

/// Exact transpose of [`decimate`]: places `y[n]` at `alpha n` and zero
/// everywhere else.
pub fn zero_fill<F: Real>(signals: &SignalSet<F>, assa: &AssaParams) -> Result<UpsampledBuffer<F>> {
    if signals.n_samples() * assa.alpha as usize != assa.n_t_up {
        return Err(mismatch(format!(
            "{} samples x alpha {} does not give upsampled length {}",
            signals.n_samples(),
            assa.alpha,
            assa.n_t_up
        )));
    }
    let alpha = assa.alpha as usize;
    let n_t = signals.n_samples();
    let mut out = UpsampledBuffer::zeros(signals.n_detectors, assa.n_t_up);
    out.data
        .par_chunks_mut(assa.n_t_up)
        .zip(signals.data.par_chunks(n_t))
        .for_each(|(dst, src)| {
            for (n, &s) in src.iter().enumerate() {
                dst[alpha * n] = s;
            }
        });
    Ok(out)
}

/// Everything the operator pair needs, precomputed once per acquisition:
/// resolved supersampling parameters, kernel taps and the ToF table.
#[derive(Clone, Debug)]
pub struct SystemModel<F: Real = f64> {
    pub grid: VoxelGrid,
    pub array: DetectorArray,
    pub acoustic: AcousticConfig,
    /// Kernel width [m]; by default the voxel pitch.
    pub sigma: f64,
    pub assa: AssaParams,
    pub taps: KernelTaps,
    pub tof: ToFTable,
    taps_cast: Vec<F>,
}

impl<F: Real> SystemModel<F> {
    /// Builds the model with the default kernel rule `sigma = spacing`
    /// and the default minimum tap count.
    pub fn for_grid(
        grid: VoxelGrid,
        array: DetectorArray,
        acoustic: AcousticConfig,
    ) -> Result<Self> {
        Self::build(grid, array, acoustic, grid.spacing, DEFAULT_N_MIN)
    }

    pub fn build(
        grid: VoxelGrid,
        array: DetectorArray,
        acoustic: AcousticConfig,
        sigma: f64,
        n_min: u32,
    ) -> Result<Self> {
        let assa = compute_assa(sigma, &acoustic, n_min)?;
        Self::with_assa(grid, array, acoustic, sigma, assa)
    }

    /// Builds with explicitly resolved supersampling parameters; used by
    /// convergence ladders that force refined ratios.
    pub fn with_assa(
        grid: VoxelGrid,
        array: DetectorArray,
        acoustic: AcousticConfig,
        sigma: f64,
        assa: AssaParams,
    ) -> Result<Self> {
        let taps = make_kernel_taps(&assa, sigma, &acoustic, KERNEL_NORMALIZATION)?;
        let tof = build_tof_table(&grid, &array, &acoustic, &assa)?;
        let taps_cast = taps.taps.iter().map(|&t| F::of(t)).collect();
        Ok(SystemModel {
            grid,
            array,
            acoustic,
            sigma,
            assa,
            taps,
            tof,
            taps_cast,
        })
    }

    /// Fraction of (voxel, detector) pairs whose kernel window fits the
    /// record. Anything below 1.0 means part of the volume is invisible
    /// to part of the array.
    pub fn coverage(&self) -> f64 {
        self.tof.valid_pair_count() as f64 / self.tof.valid.len() as f64
    }

    /// Applies the forward operator: image -> traces.
    pub fn forward(&self, image: &VoxelImage<F>) -> Result<SignalSet<F>> {
        if image.grid != self.grid {
            return Err(mismatch(
                "image grid differs from the model grid".to_string(),
            ));
        }
        let projected = project_up(image, &self.tof)?;
        let shaped = convolve_rows(
            &projected,
            &self.taps_cast,
            self.taps.kernel_half,
            Direction::Convolve,
        );
        decimate(&shaped, &self.assa, &self.acoustic)
    }

    /// Applies the exact adjoint: traces -> image.
    pub fn adjoint(&self, signals: &SignalSet<F>) -> Result<VoxelImage<F>> {
        if signals.n_detectors != self.array.len() || signals.acoustic != self.acoustic {
            return Err(mismatch(
                "signal block does not belong to this model's acquisition".to_string(),
            ));
        }
        let filled = zero_fill(signals, &self.assa)?;
        let shaped = convolve_rows(
            &filled,
            &self.taps_cast,
            self.taps.kernel_half,
            Direction::Correlate,
        );
        backproject(&shaped, &self.tof, &self.grid)
    }
}

/// One trial of the adjoint dot test.
#[derive(Clone, Copy, Debug)]
pub struct DotTrial {
    /// `<A x, y>`
    pub lhs: f64,
    /// `<x, A^T y>`
    pub rhs: f64,
    /// `||A x||`
    pub norm_ax: f64,
    /// `||y||`
    pub norm_y: f64,
    /// `|lhs - rhs| / (||A x|| ||y||)` — Cauchy-Schwarz bounds both inner
    /// products by the denominator, so this is a scale-free discrepancy.
    pub rel_discrepancy: f64,
}

#[derive(Clone, Debug)]
pub struct DotTestReport {
    pub trials: Vec<DotTrial>,
    pub max_rel_discrepancy: f64,
}

/// Runs `trials` randomized dot tests `<A x, y> =? <x, A^T y>` with
/// x, y ~ U(-1, 1), seeded so reports are reproducible.
pub fn adjoint_dot_test<F: Real>(
    model: &SystemModel<F>,
    trials: usize,
    seed: u64,
) -> Result<DotTestReport> {
    if trials == 0 {
        return Err(invalid("dot test needs at least one trial"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DotTestReport {
        trials: Vec::with_capacity(trials),
        max_rel_discrepancy: 0.0,
    };
    for _ in 0..trials {
        let mut x = VoxelImage::<F>::zeros(model.grid);
        for v in &mut x.values {
            *v = F::of(rng.gen_range(-1.0..1.0));
        }
        let mut y = SignalSet::<F>::zeros(model.array.len(), model.acoustic);
        for v in &mut y.data {
            *v = F::of(rng.gen_range(-1.0..1.0));
        }
        let ax = model.forward(&x)?;
        let aty = model.adjoint(&y)?;
        let lhs: f64 = ax
            .data
            .iter()
            .zip(&y.data)
            .map(|(a, b)| a.to_f64() * b.to_f64())
            .sum();
        let rhs: f64 = x
            .values
            .iter()
            .zip(&aty.values)
            .map(|(a, b)| a.to_f64() * b.to_f64())
            .sum();
        let norm_ax = ax
            .data
            .iter()
            .map(|v| v.to_f64() * v.to_f64())
            .sum::<f64>()
            .sqrt();
        let norm_y = y
            .data
            .iter()
            .map(|v| v.to_f64() * v.to_f64())
            .sum::<f64>()
            .sqrt();
        let denom = norm_ax * norm_y;
        let rel = if denom == 0.0 {
            if lhs == rhs {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (lhs - rhs).abs() / denom
        };
        report.max_rel_discrepancy = report.max_rel_discrepancy.max(rel);
        report.trials.push(DotTrial {
            lhs,
            rhs,
            norm_ax,
            norm_y,
            rel_discrepancy: rel,
        });
    }
    Ok(report)
}

/// Adds zero-mean Gaussian noise scaled to an amplitude SNR: the noise
/// standard deviation is `max |signal| / amplitude_snr`. Returns the
/// applied standard deviation. A zero signal stays zero.
pub fn add_gaussian_noise<F: Real>(
    signals: &mut SignalSet<F>,
    amplitude_snr: f64,
    seed: u64,
) -> Result<f64> {
    if !(amplitude_snr > 0.0) || !amplitude_snr.is_finite() {
        return Err(invalid(format!(
            "amplitude SNR must be > 0, got {amplitude_snr}"
        )));
    }
    let std = signals.max_abs() / amplitude_snr;
    if std == 0.0 {
        return Ok(0.0);
    }
    let normal = Normal::new(0.0, std)
        .map_err(|e| invalid(format!("cannot build noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut signals.data {
        *v += F::of(normal.sample(&mut rng));
    }
    Ok(std)
}
