//! Vessel-continuity regularization: smoothed total variation plus a
//! Frobenius Hessian penalty, with exact analytic gradients.
//!
//! Both penalties have the form `sum_i sqrt(q_i + eps)` where `q_i`
//! collects squared finite differences around voxel `i`. The smoothing
//! `eps` keeps the square root differentiable at flat regions, and the
//! gradient is the exact adjoint of the difference stencils — every
//! coefficient scattered here is accounted for in a finite-difference
//! check, so tighten with care.
//!
//! Boundary handling is replicate-style: first differences vanish at the
//! last index of each axis, pure second differences clamp the stencil
//! center into the interior (so affine images are exactly penalty-free),
//! and mixed differences clamp the forward indices (which zeroes them on
//! the trailing faces).
//!
//! Values and gradients are accumulated in f64 in a fixed voxel order
//! regardless of the pipeline precision, then cast once at the end.

use crate::error::{invalid, Result};
use crate::geometry::{VoxelGrid, VoxelImage};
use crate::real::Real;

pub const DEFAULT_EPS_REG: f64 = 1e-8;

/// Weights of the combined penalty: the loss applies
/// `lambda * (R_H + beta * R_TV)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegConfig {
    /// Global regularization strength applied by the loss.
    pub lambda: f64,
    /// TV weight inside the combined penalty.
    pub beta: f64,
    /// Smoothing constant inside the square roots.
    pub eps_reg: f64,
}

impl RegConfig {
    pub fn new(lambda: f64, beta: f64, eps_reg: f64) -> Result<Self> {
        let cfg = RegConfig {
            lambda,
            beta,
            eps_reg,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(invalid(format!("beta must be >= 0, got {}", self.beta)));
        }
        check_eps(self.eps_reg)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid(format!("smoothing eps must be > 0, got {eps}")));
    }
    Ok(())
}

/// Smoothed isotropic TV: `sum_i sqrt(sum_d (D_d x_i)^2 + eps)` with
/// forward differences that vanish at the last index of each axis.
pub fn tv_value_grad<F: Real>(image: &VoxelImage<F>, eps_reg: f64) -> Result<(f64, VoxelImage<F>)> {
    check_eps(eps_reg)?;
    let x = lift(image);
    let (value, grad) = tv_accumulate(&x, &image.grid, eps_reg);
    Ok((value, lower(image.grid, grad)))
}

/// Smoothed Frobenius Hessian penalty:
/// `sum_i sqrt(sum_{p,q} (D_pq x_i)^2 + eps)` over all ordered axis
/// pairs, so the three mixed terms each appear twice.
pub fn hessian_value_grad<F: Real>(
    image: &VoxelImage<F>,
    eps_reg: f64,
) -> Result<(f64, VoxelImage<F>)> {
    check_eps(eps_reg)?;
    let x = lift(image);
    let (value, grad) = hessian_accumulate(&x, &image.grid, eps_reg);
    Ok((value, lower(image.grid, grad)))
}

/// Combined penalty `R_H + beta * R_TV` (lambda is applied by the loss,
/// not here).
pub fn vcr_value_grad<F: Real>(
    image: &VoxelImage<F>,
    cfg: &RegConfig,
) -> Result<(f64, VoxelImage<F>)> {
    cfg.validate()?;
    let x = lift(image);
    let (h_val, mut grad) = hessian_accumulate(&x, &image.grid, cfg.eps_reg);
    let (tv_val, tv_grad) = tv_accumulate(&x, &image.grid, cfg.eps_reg);
    for (g, t) in grad.iter_mut().zip(&tv_grad) {
        *g += cfg.beta * t;
    }
    Ok((h_val + cfg.beta * tv_val, lower(image.grid, grad)))
}

fn lift<F: Real>(image: &VoxelImage<F>) -> Vec<f64> {
    image.values.iter().map(|v| v.to_f64()).collect()
}

fn lower<F: Real>(grid: VoxelGrid, grad: Vec<f64>) -> VoxelImage<F> {
    VoxelImage {
        grid,
        values: grad.into_iter().map(F::of).collect(),
    }
}

fn tv_accumulate(x: &[f64], grid: &VoxelGrid, eps: f64) -> (f64, Vec<f64>) {
    let [nx, ny, nz] = grid.dims;
    let (sx, sy, sz) = (1usize, nx, nx * ny);
    let mut value = 0.0;
    let mut grad = vec![0.0f64; x.len()];
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                let i = ix + nx * (iy + ny * iz);
                let x0 = x[i];
                let dx = if ix + 1 < nx { x[i + sx] - x0 } else { 0.0 };
                let dy = if iy + 1 < ny { x[i + sy] - x0 } else { 0.0 };
                let dz = if iz + 1 < nz { x[i + sz] - x0 } else { 0.0 };
                let s = (dx * dx + dy * dy + dz * dz + eps).sqrt();
                value += s;
                let inv = 1.0 / s;
                if ix + 1 < nx {
                    let w = dx * inv;
                    grad[i + sx] += w;
                    grad[i] -= w;
                }
                if iy + 1 < ny {
                    let w = dy * inv;
                    grad[i + sy] += w;
                    grad[i] -= w;
                }
                if iz + 1 < nz {
                    let w = dz * inv;
                    grad[i + sz] += w;
                    grad[i] -= w;
                }
            }
        }
    }
    (value, grad)
}

fn hessian_accumulate(x: &[f64], grid: &VoxelGrid, eps: f64) -> (f64, Vec<f64>) {
    let dims = grid.dims;
    let [nx, ny] = [dims[0], dims[1]];
    let strides = [1usize, nx, nx * ny];
    let mut value = 0.0;
    let mut grad = vec![0.0f64; x.len()];
    // Per-voxel stencil scratch: pure terms (value, centered base index,
    // stride), mixed terms (value, four corner indices).
    let mut pures = [(0.0f64, 0usize, 0usize); 3];
    let mut mixed = [(0.0f64, [0usize; 4]); 3];
    for iz in 0..dims[2] {
        for iy in 0..ny {
            for ix in 0..nx {
                let i = ix + nx * (iy + ny * iz);
                let coords = [ix, iy, iz];
                let mut q = eps;

                for a in 0..3 {
                    let (n, s) = (dims[a], strides[a]);
                    if n < 3 {
                        pures[a] = (0.0, i, 0);
                        continue;
                    }
                    // Clamp the [1,-2,1] stencil center into the
                    // interior; faces reuse their nearest full stencil,
                    // which keeps affine images exactly penalty-free.
                    let cc = coords[a].clamp(1, n - 2);
                    let base = i + cc * s - coords[a] * s;
                    let d = x[base - s] - 2.0 * x[base] + x[base + s];
                    q += d * d;
                    pures[a] = (d, base, s);
                }

                for (slot, (a, b)) in [(0, 1), (0, 2), (1, 2)].into_iter().enumerate() {
                    // Forward-forward cross difference with clamped
                    // forward indices: zero on trailing faces.
                    let da = (coords[a] + 1).min(dims[a] - 1) - coords[a];
                    let db = (coords[b] + 1).min(dims[b] - 1) - coords[b];
                    let p00 = i;
                    let p10 = i + da * strides[a];
                    let p01 = i + db * strides[b];
                    let p11 = p10 + db * strides[b];
                    let d = x[p11] - x[p10] - x[p01] + x[p00];
                    q += 2.0 * d * d;
                    mixed[slot] = (d, [p00, p10, p01, p11]);
                }

                let s = q.sqrt();
                value += s;
                let inv = 1.0 / s;
                for &(d, base, stride) in &pures {
                    if stride == 0 {
                        continue;
                    }
                    let w = d * inv;
                    grad[base - stride] += w;
                    grad[base] -= 2.0 * w;
                    grad[base + stride] += w;
                }
                for &(d, [p00, p10, p01, p11]) in &mixed {
                    let w = 2.0 * d * inv;
                    grad[p11] += w;
                    grad[p10] -= w;
                    grad[p01] -= w;
                    grad[p00] += w;
                }
            }
        }
    }
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(dims: [usize; 3], seed: u64) -> VoxelImage<f64> {
        let grid = VoxelGrid::new(dims, 1e-4, [0.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        VoxelImage::from_values(grid, values).unwrap()
    }

    /// Central finite differences of a scalar functional of the image.
    fn fd_grad(image: &VoxelImage<f64>, h: f64, f: impl Fn(&VoxelImage<f64>) -> f64) -> Vec<f64> {
        let mut g = vec![0.0; image.values.len()];
        let mut probe = image.clone();
        for (i, slot) in g.iter_mut().enumerate() {
            let orig = probe.values[i];
            probe.values[i] = orig + h;
            let up = f(&probe);
            probe.values[i] = orig - h;
            let down = f(&probe);
            probe.values[i] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        g
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    const EPS: f64 = 1e-8;

    #[test]
    fn tv_gradient_matches_finite_differences() {
        for (dims, seed) in [([4, 4, 4], 1u64), ([5, 3, 2], 2)] {
            let image = random_image(dims, seed);
            let (_, grad) = tv_value_grad(&image, EPS).unwrap();
            let fd = fd_grad(&image, 1e-5, |im| tv_value_grad(im, EPS).unwrap().0);
            let err = rel_err(&grad.values, &fd);
            assert!(err <= 1e-6, "dims {dims:?}: rel err {err}");
        }
    }

    #[test]
    fn hessian_gradient_matches_finite_differences() {
        for (dims, seed) in [([4, 4, 4], 3u64), ([5, 3, 2], 4)] {
            let image = random_image(dims, seed);
            let (_, grad) = hessian_value_grad(&image, EPS).unwrap();
            let fd = fd_grad(&image, 1e-5, |im| hessian_value_grad(im, EPS).unwrap().0);
            let err = rel_err(&grad.values, &fd);
            assert!(err <= 1e-6, "dims {dims:?}: rel err {err}");
        }
    }

    #[test]
    fn vcr_gradient_matches_finite_differences() {
        let cfg = RegConfig::new(1.0, 0.7, EPS).unwrap();
        let image = random_image([4, 4, 4], 5);
        let (_, grad) = vcr_value_grad(&image, &cfg).unwrap();
        let fd = fd_grad(&image, 1e-5, |im| vcr_value_grad(im, &cfg).unwrap().0);
        let err = rel_err(&grad.values, &fd);
        assert!(err <= 1e-6, "rel err {err}");
    }

    #[test]
    fn constant_images_cost_m_sqrt_eps_with_zero_gradient() {
        let grid = VoxelGrid::new([4, 5, 3], 1e-4, [0.0; 3]).unwrap();
        let m = grid.len() as f64;
        let image = VoxelImage::from_values(grid, vec![0.75; grid.len()]).unwrap();
        let floor = m * EPS.sqrt();
        let (tv, tv_grad) = tv_value_grad(&image, EPS).unwrap();
        assert!((tv - floor).abs() <= 1e-12 * floor);
        assert!(tv_grad.values.iter().all(|&g| g == 0.0));
        let (h, h_grad) = hessian_value_grad(&image, EPS).unwrap();
        assert!((h - floor).abs() <= 1e-12 * floor);
        assert!(h_grad.values.iter().all(|&g| g == 0.0));
        let cfg = RegConfig::new(1.0, 1.0, EPS).unwrap();
        let (vcr, _) = vcr_value_grad(&image, &cfg).unwrap();
        assert!((vcr - 2.0 * floor).abs() <= 1e-12 * floor);
    }

    #[test]
    fn affine_images_are_hessian_free() {
        // Dyadic coefficients keep every difference exact in binary.
        let grid = VoxelGrid::new([5, 4, 6], 1e-4, [0.0; 3]).unwrap();
        let mut values = vec![0.0; grid.len()];
        for iz in 0..6 {
            for iy in 0..4 {
                for ix in 0..5 {
                    values[grid.index(ix, iy, iz)] =
                        0.5 + 0.25 * ix as f64 - 0.125 * iy as f64 + 0.0625 * iz as f64;
                }
            }
        }
        let image = VoxelImage::from_values(grid, values).unwrap();
        let m = grid.len() as f64;
        let floor = m * EPS.sqrt();
        let (h, grad) = hessian_value_grad(&image, EPS).unwrap();
        assert!(
            (h - floor).abs() <= 1e-12 * floor,
            "value {h} vs floor {floor}"
        );
        assert!(grad.values.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_voxel_grid_costs_sqrt_eps() {
        let grid = VoxelGrid::new([1, 1, 1], 1e-4, [0.0; 3]).unwrap();
        let image = VoxelImage::from_values(grid, vec![3.0]).unwrap();
        let (tv, _) = tv_value_grad(&image, EPS).unwrap();
        assert_eq!(tv, EPS.sqrt());
        let (h, _) = hessian_value_grad(&image, EPS).unwrap();
        assert_eq!(h, EPS.sqrt());
    }

    #[test]
    fn beta_zero_reduces_vcr_to_hessian() {
        let image = random_image([4, 4, 4], 6);
        let cfg = RegConfig::new(1.0, 0.0, EPS).unwrap();
        let (vcr, vcr_grad) = vcr_value_grad(&image, &cfg).unwrap();
        let (h, h_grad) = hessian_value_grad(&image, EPS).unwrap();
        assert_eq!(vcr, h);
        assert_eq!(vcr_grad.values, h_grad.values);
    }

    #[test]
    fn values_are_translation_invariant() {
        let image = random_image([4, 4, 4], 7);
        let mut shifted = image.clone();
        for v in &mut shifted.values {
            *v += 0.5;
        }
        let (tv_a, _) = tv_value_grad(&image, EPS).unwrap();
        let (tv_b, _) = tv_value_grad(&shifted, EPS).unwrap();
        assert!((tv_a - tv_b).abs() <= 1e-12 * tv_a);
        let (h_a, _) = hessian_value_grad(&image, EPS).unwrap();
        let (h_b, _) = hessian_value_grad(&shifted, EPS).unwrap();
        assert!((h_a - h_b).abs() <= 1e-12 * h_a);
    }

    #[test]
    fn smoothed_form_is_exactly_homogeneous() {
        // R(c x; eps c^2) = c R(x; eps); c = 2 keeps the scaling exact
        // in binary arithmetic.
        let image = random_image([4, 4, 4], 8);
        let mut doubled = image.clone();
        for v in &mut doubled.values {
            *v *= 2.0;
        }
        let (tv, _) = tv_value_grad(&image, EPS).unwrap();
        let (tv2, _) = tv_value_grad(&doubled, 4.0 * EPS).unwrap();
        assert!((tv2 - 2.0 * tv).abs() <= 1e-15 * tv2);
        let (h, _) = hessian_value_grad(&image, EPS).unwrap();
        let (h2, _) = hessian_value_grad(&doubled, 4.0 * EPS).unwrap();
        assert!((h2 - 2.0 * h).abs() <= 1e-15 * h2);
    }

    #[test]
    fn values_never_drop_below_the_floor() {
        for seed in 10..14 {
            let image = random_image([4, 4, 4], seed);
            let floor = image.values.len() as f64 * EPS.sqrt();
            let (tv, _) = tv_value_grad(&image, EPS).unwrap();
            let (h, _) = hessian_value_grad(&image, EPS).unwrap();
            assert!(tv >= floor * (1.0 - 1e-12));
            assert!(h >= floor * (1.0 - 1e-12));
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let image = random_image([3, 3, 3], 15);
        assert!(tv_value_grad(&image, 0.0).is_err());
        assert!(hessian_value_grad(&image, -1.0).is_err());
        assert!(RegConfig::new(-0.1, 1.0, EPS).is_err());
        assert!(RegConfig::new(0.1, -1.0, EPS).is_err());
        assert!(RegConfig::new(0.1, 1.0, f64::NAN).is_err());
    }
}
