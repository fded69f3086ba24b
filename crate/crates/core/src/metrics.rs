//! Volume quality metrics: reference-based (MSE/PSNR/SSIM) and
//! reference-free (CNR, SNR, background std, sharpness).
//!
//! Reconstructions carry arbitrary amplitude conventions, so the
//! reference-based entry points max-normalize both volumes before
//! comparing; the `_unnormalized` variants skip that. All arithmetic is
//! f64 with sequential reductions.

use crate::error::{invalid, mismatch, Result};
use crate::geometry::VoxelImage;
use crate::real::Real;

/// PSNR reported when the MSE is numerically zero.
pub const PSNR_CAP_DB: f64 = 200.0;

fn to_f64_vec<F: Real>(image: &VoxelImage<F>) -> Vec<f64> {
    image.values.iter().map(|v| v.to_f64()).collect()
}

/// Divides by the maximum when it is positive; volumes with a
/// non-positive peak are left untouched (there is nothing meaningful to
/// scale against).
fn max_normalize(values: &mut [f64]) {
    let peak = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if peak > 0.0 {
        for v in values.iter_mut() {
            *v /= peak;
        }
    }
}

fn check_shapes<F: Real, G: Real>(a: &VoxelImage<F>, b: &VoxelImage<G>) -> Result<()> {
    if a.grid.dims != b.grid.dims {
        return Err(mismatch(format!(
            "volume shapes differ: {:?} vs {:?}",
            a.grid.dims, b.grid.dims
        )));
    }
    Ok(())
}

/// Mean squared error and PSNR between max-normalized volumes.
pub fn mse_psnr<F: Real, G: Real>(
    x: &VoxelImage<F>,
    reference: &VoxelImage<G>,
) -> Result<(f64, f64)> {
    check_shapes(x, reference)?;
    let mut a = to_f64_vec(x);
    let mut b = to_f64_vec(reference);
    max_normalize(&mut a);
    max_normalize(&mut b);
    Ok(mse_psnr_slices(&a, &b))
}

/// Same, but on the values exactly as given.
pub fn mse_psnr_unnormalized<F: Real, G: Real>(
    x: &VoxelImage<F>,
    reference: &VoxelImage<G>,
) -> Result<(f64, f64)> {
    check_shapes(x, reference)?;
    Ok(mse_psnr_slices(&to_f64_vec(x), &to_f64_vec(reference)))
}

fn mse_psnr_slices(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut sum = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        sum += d * d;
    }
    let mse = sum / a.len() as f64;
    let psnr = if mse < 1e-20 {
        PSNR_CAP_DB
    } else {
        10.0 * (1.0 / mse).log10()
    };
    (mse, psnr)
}

/// Mean local structural similarity over a 3D Gaussian window
/// (sigma 1.5, extent 11 clipped to each dimension), valid-mode: the
/// window never leaves the volume. Inputs are compared as-is — callers
/// normalize to [0, 1] first, and the constants assume that range
/// (C1 = 1e-4, C2 = 9e-4).
pub fn ssim3d<F: Real, G: Real>(x: &VoxelImage<F>, reference: &VoxelImage<G>) -> Result<f64> {
    check_shapes(x, reference)?;
    let a = to_f64_vec(x);
    let b = to_f64_vec(reference);
    let dims = x.grid.dims;

    let window: [Vec<f64>; 3] = [
        gaussian_window(dims[0].min(11)),
        gaussian_window(dims[1].min(11)),
        gaussian_window(dims[2].min(11)),
    ];
    let w = [window[0].len(), window[1].len(), window[2].len()];

    const C1: f64 = 1e-4;
    const C2: f64 = 9e-4;

    let (nx, ny) = (dims[0], dims[1]);
    let mut total = 0.0f64;
    let mut count = 0usize;
    for oz in 0..=(dims[2] - w[2]) {
        for oy in 0..=(dims[1] - w[1]) {
            for ox in 0..=(dims[0] - w[0]) {
                let mut mu_a = 0.0;
                let mut mu_b = 0.0;
                let mut aa = 0.0;
                let mut bb = 0.0;
                let mut ab = 0.0;
                for kz in 0..w[2] {
                    for ky in 0..w[1] {
                        let wyz = window[1][ky] * window[2][kz];
                        let row = (ox) + nx * ((oy + ky) + ny * (oz + kz));
                        for kx in 0..w[0] {
                            let wt = window[0][kx] * wyz;
                            let va = a[row + kx];
                            let vb = b[row + kx];
                            mu_a += wt * va;
                            mu_b += wt * vb;
                            aa += wt * va * va;
                            bb += wt * vb * vb;
                            ab += wt * va * vb;
                        }
                    }
                }
                let var_a = aa - mu_a * mu_a;
                let var_b = bb - mu_b * mu_b;
                let cov = ab - mu_a * mu_b;
                let s = ((2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2))
                    / ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2));
                total += s;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Normalized Gaussian weights (sigma 1.5) centered on (len-1)/2.
fn gaussian_window(len: usize) -> Vec<f64> {
    let center = (len as f64 - 1.0) / 2.0;
    let mut w: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * 1.5 * 1.5)).exp()
        })
        .collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Boolean voxel mask aligned with a grid's layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelMask {
    pub dims: [usize; 3],
    pub data: Vec<bool>,
}

impl VoxelMask {
    pub fn new(dims: [usize; 3], data: Vec<bool>) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(mismatch(format!(
                "mask holds {} entries for dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(VoxelMask { dims, data })
    }

    /// Marks voxels at or above `fraction` of the volume's maximum.
    pub fn threshold<F: Real>(image: &VoxelImage<F>, fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(invalid(format!(
                "threshold fraction must be in [0,1], got {fraction}"
            )));
        }
        let peak = image
            .values
            .iter()
            .fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64()));
        if !(peak > 0.0) {
            return Err(invalid("cannot threshold a volume with non-positive peak"));
        }
        let cut = fraction * peak;
        Ok(VoxelMask {
            dims: image.grid.dims,
            data: image.values.iter().map(|v| v.to_f64() >= cut).collect(),
        })
    }

    /// Complement of this mask.
    pub fn complement(&self) -> Self {
        VoxelMask {
            dims: self.dims,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// CNR, SNR, background std, and boundary sharpness on the
/// max-normalized volume. Masks must be disjoint and nonempty, and the
/// background must have nonzero variance.
pub fn reference_free_metrics<F: Real>(
    x: &VoxelImage<F>,
    signal_mask: &VoxelMask,
    bg_mask: &VoxelMask,
) -> Result<(f64, f64, f64, f64)> {
    if signal_mask.dims != x.grid.dims || bg_mask.dims != x.grid.dims {
        return Err(mismatch("mask dims do not match the volume".to_string()));
    }
    if signal_mask.count() == 0 || bg_mask.count() == 0 {
        return Err(invalid("signal and background masks must be nonempty"));
    }
    if signal_mask
        .data
        .iter()
        .zip(&bg_mask.data)
        .any(|(&s, &b)| s && b)
    {
        return Err(invalid("signal and background masks overlap"));
    }

    let mut values = to_f64_vec(x);
    max_normalize(&mut values);

    let mean_over = |mask: &VoxelMask| -> f64 {
        let mut sum = 0.0;
        for (v, &m) in values.iter().zip(&mask.data) {
            if m {
                sum += v;
            }
        }
        sum / mask.count() as f64
    };
    let mu_sig = mean_over(signal_mask);
    let mu_bg = mean_over(bg_mask);

    let mut var = 0.0;
    for (v, &m) in values.iter().zip(&bg_mask.data) {
        if m {
            let d = v - mu_bg;
            var += d * d;
        }
    }
    // Population variance: the mask is the whole background, not a sample.
    var /= bg_mask.count() as f64;
    let bg_std = var.sqrt();
    if bg_std == 0.0 {
        return Err(invalid(
            "background has zero variance; CNR/SNR are undefined",
        ));
    }

    let cnr = (mu_sig - mu_bg) / bg_std;
    let snr = mu_sig / bg_std;
    let sharpness = boundary_sharpness(&values, x.grid.dims, signal_mask);
    Ok((cnr, snr, bg_std, sharpness))
}

/// Mean gradient magnitude (central differences, one-sided at faces)
/// over the signal mask's inner boundary: masked voxels with at least
/// one unmasked 6-neighbor.
fn boundary_sharpness(values: &[f64], dims: [usize; 3], mask: &VoxelMask) -> f64 {
    let [nx, ny, nz] = dims;
    let idx = |ix: usize, iy: usize, iz: usize| ix + nx * (iy + ny * iz);
    let mut total = 0.0f64;
    let mut count = 0usize;
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                let i = idx(ix, iy, iz);
                if !mask.data[i] {
                    continue;
                }
                let mut on_boundary = false;
                let mut check = |j: usize| {
                    if !mask.data[j] {
                        on_boundary = true;
                    }
                };
                if ix > 0 {
                    check(idx(ix - 1, iy, iz));
                }
                if ix + 1 < nx {
                    check(idx(ix + 1, iy, iz));
                }
                if iy > 0 {
                    check(idx(ix, iy - 1, iz));
                }
                if iy + 1 < ny {
                    check(idx(ix, iy + 1, iz));
                }
                if iz > 0 {
                    check(idx(ix, iy, iz - 1));
                }
                if iz + 1 < nz {
                    check(idx(ix, iy, iz + 1));
                }
                if !on_boundary {
                    continue;
                }
                let axis_diff = |lo: usize, hi: usize, span: f64| (values[hi] - values[lo]) / span;
                let gx = axis_diff(
                    idx(ix.saturating_sub(1), iy, iz),
                    idx((ix + 1).min(nx - 1), iy, iz),
                    ((ix + 1).min(nx - 1) - ix.saturating_sub(1)) as f64,
                );
                let gy = axis_diff(
                    idx(ix, iy.saturating_sub(1), iz),
                    idx(ix, (iy + 1).min(ny - 1), iz),
                    ((iy + 1).min(ny - 1) - iy.saturating_sub(1)) as f64,
                );
                let gz = axis_diff(
                    idx(ix, iy, iz.saturating_sub(1)),
                    idx(ix, iy, (iz + 1).min(nz - 1)),
                    ((iz + 1).min(nz - 1) - iz.saturating_sub(1)) as f64,
                );
                total += (gx * gx + gy * gy + gz * gz).sqrt();
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
