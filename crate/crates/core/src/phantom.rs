//! Synthetic test objects and 2D views of volumes.
//!
//! Three families: smooth additive Gaussian blobs, a connected
//! branching tube tree with Gaussian cross-section (a structural
//! stand-in for vascular data), and a regular lattice of hot voxels
//! for resolution probing. Generation is fully determined by
//! `(kind, seed)`.

use crate::error::{invalid, Result};
use crate::geometry::{VoxelGrid, VoxelImage};
use crate::real::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhantomKind {
    /// Additive isotropic Gaussian blobs.
    Blobs { count: usize },
    /// A connected polyline tree rendered with Gaussian cross-section.
    Tubes { branches: usize },
    /// `per_axis`³ isolated unit voxels on a regular lattice.
    PointGrid { per_axis: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind, seed: u64) -> Self {
        PhantomSpec { kind, seed }
    }
}

/// Physical box spanning the central `frac` of the grid along each axis.
fn central_box(grid: &VoxelGrid, frac: f64) -> ([f64; 3], [f64; 3]) {
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..3 {
        let span = (grid.dims[a] - 1) as f64 * grid.spacing;
        lo[a] = grid.origin[a] + 0.5 * (1.0 - frac) * span;
        hi[a] = grid.origin[a] + 0.5 * (1.0 + frac) * span;
    }
    (lo, hi)
}

pub fn generate_phantom(spec: PhantomSpec, grid: &VoxelGrid) -> Result<VoxelImage<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        PhantomKind::Blobs { count } => {
            if count == 0 {
                return Err(invalid("blobs phantom needs at least one blob"));
            }
            generate_blobs(count, grid, &mut rng)
        }
        PhantomKind::Tubes { branches } => {
            if branches == 0 {
                return Err(invalid("tubes phantom needs at least one branch"));
            }
            generate_tubes(branches, grid, &mut rng)
        }
        PhantomKind::PointGrid { per_axis } => {
            let limit = grid.dims.iter().copied().min().unwrap_or(0);
            if per_axis == 0 || per_axis > limit {
                return Err(invalid(format!(
                    "point grid needs 1..={limit} points per axis, got {per_axis}"
                )));
            }
            generate_point_grid(per_axis, grid)
        }
    }
}

fn generate_blobs(count: usize, grid: &VoxelGrid, rng: &mut ChaCha8Rng) -> Result<VoxelImage<f64>> {
    // Centers stay in the central 60% so blobs don't spill off the grid.
    let (lo, hi) = central_box(grid, 0.6);
    struct Blob {
        center: [f64; 3],
        inv_two_sigma_sq: f64,
        amplitude: f64,
    }
    let blobs: Vec<Blob> = (0..count)
        .map(|_| {
            let center = [
                rng.gen_range(lo[0]..=hi[0]),
                rng.gen_range(lo[1]..=hi[1]),
                rng.gen_range(lo[2]..=hi[2]),
            ];
            let sigma = rng.gen_range(1.5..=3.0) * grid.spacing;
            let amplitude = rng.gen_range(0.5..=1.0);
            Blob {
                center,
                inv_two_sigma_sq: 1.0 / (2.0 * sigma * sigma),
                amplitude,
            }
        })
        .collect();

    let mut image = VoxelImage::zeros(*grid);
    for i in 0..grid.len() {
        let p = grid.position(i);
        let mut v = 0.0;
        for b in &blobs {
            let dx = p[0] - b.center[0];
            let dy = p[1] - b.center[1];
            let dz = p[2] - b.center[2];
            let d2 = dx * dx + dy * dy + dz * dz;
            v += b.amplitude * (-d2 * b.inv_two_sigma_sq).exp();
        }
        image.values[i] = v;
    }
    Ok(image)
}

/// Straight tube segment with its own radius and intensity.
struct Segment {
    a: [f64; 3],
    b: [f64; 3],
    inv_two_sigma_sq: f64,
    amplitude: f64,
}

impl Segment {
    fn dist_sq(&self, p: [f64; 3]) -> f64 {
        let ab = [
            self.b[0] - self.a[0],
            self.b[1] - self.a[1],
            self.b[2] - self.a[2],
        ];
        let ap = [p[0] - self.a[0], p[1] - self.a[1], p[2] - self.a[2]];
        let denom = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
        let t = if denom > 0.0 {
            ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / denom).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let dx = ap[0] - t * ab[0];
        let dy = ap[1] - t * ab[1];
        let dz = ap[2] - t * ab[2];
        dx * dx + dy * dy + dz * dz
    }
}

fn generate_tubes(
    branches: usize,
    grid: &VoxelGrid,
    rng: &mut ChaCha8Rng,
) -> Result<VoxelImage<f64>> {
    let (lo, hi) = central_box(grid, 0.8);
    let clamp_box = |p: [f64; 3]| {
        [
            p[0].clamp(lo[0], hi[0]),
            p[1].clamp(lo[1], hi[1]),
            p[2].clamp(lo[2], hi[2]),
        ]
    };
    let step = 5.0 * grid.spacing;

    // Every branch starts at a vertex of an earlier one, so the tree —
    // and hence the rendered supra-threshold set — is connected.
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut segments: Vec<Segment> = Vec::new();
    for branch in 0..branches {
        let start = if branch == 0 {
            let (clo, chi) = central_box(grid, 0.4);
            [
                rng.gen_range(clo[0]..=chi[0]),
                rng.gen_range(clo[1]..=chi[1]),
                rng.gen_range(clo[2]..=chi[2]),
            ]
        } else {
            vertices[rng.gen_range(0..vertices.len())]
        };
        let sigma = rng.gen_range(1.0..=1.6) * grid.spacing;
        let amplitude = rng.gen_range(0.5..=1.0);
        let n_seg = rng.gen_range(2..=4usize);
        let mut cursor = start;
        vertices.push(cursor);
        // Random but persistent heading, re-drawn with jitter per segment.
        let mut dir = random_unit(rng);
        for _ in 0..n_seg {
            let jitter = random_unit(rng);
            for a in 0..3 {
                dir[a] += 0.6 * jitter[a];
            }
            let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            for d in &mut dir {
                *d /= norm;
            }
            let next = clamp_box([
                cursor[0] + step * dir[0],
                cursor[1] + step * dir[1],
                cursor[2] + step * dir[2],
            ]);
            segments.push(Segment {
                a: cursor,
                b: next,
                inv_two_sigma_sq: 1.0 / (2.0 * sigma * sigma),
                amplitude,
            });
            cursor = next;
            vertices.push(cursor);
        }
    }

    let mut image = VoxelImage::zeros(*grid);
    for i in 0..grid.len() {
        let p = grid.position(i);
        let mut v = 0.0f64;
        for s in &segments {
            // Max-blend: crossing tubes keep their individual intensity.
            v = v.max(s.amplitude * (-s.dist_sq(p) * s.inv_two_sigma_sq).exp());
        }
        image.values[i] = v;
    }
    Ok(image)
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        ];
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            let n = n2.sqrt();
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn generate_point_grid(per_axis: usize, grid: &VoxelGrid) -> Result<VoxelImage<f64>> {
    let mut image = VoxelImage::zeros(*grid);
    let pick = |n: usize, i: usize| ((i as f64 + 0.5) * n as f64 / per_axis as f64) as usize;
    for kz in 0..per_axis {
        for ky in 0..per_axis {
            for kx in 0..per_axis {
                let ix = pick(grid.dims[0], kx);
                let iy = pick(grid.dims[1], ky);
                let iz = pick(grid.dims[2], kz);
                image.values[grid.index(ix, iy, iz)] = 1.0;
            }
        }
    }
    Ok(image)
}

/// Projection / slicing axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    /// (rows, cols) of the 2D view and the volume extent along the axis.
    fn shape(self, dims: [usize; 3]) -> (usize, usize, usize) {
        match self {
            Axis::Z => (dims[1], dims[0], dims[2]),
            Axis::Y => (dims[2], dims[0], dims[1]),
            Axis::X => (dims[2], dims[1], dims[0]),
        }
    }

    fn voxel(self, row: usize, col: usize, depth: usize) -> (usize, usize, usize) {
        match self {
            Axis::Z => (col, row, depth),
            Axis::Y => (col, depth, row),
            Axis::X => (depth, col, row),
        }
    }
}

/// Dense row-major 2D image.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarImage {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl PlanarImage {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }
}

/// Maximum amplitude projection along `axis`.
pub fn max_projection<F: Real>(x: &VoxelImage<F>, axis: Axis) -> PlanarImage {
    let (rows, cols, depth) = axis.shape(x.grid.dims);
    let mut data = vec![f64::NEG_INFINITY; rows * cols];
    for row in 0..rows {
        for col in 0..cols {
            let mut m = f64::NEG_INFINITY;
            for d in 0..depth {
                let (ix, iy, iz) = axis.voxel(row, col, d);
                m = m.max(x.values[x.grid.index(ix, iy, iz)].to_f64());
            }
            data[row * cols + col] = m;
        }
    }
    PlanarImage { rows, cols, data }
}

/// Copy of the plane at `index` along `axis`.
pub fn slice_extract<F: Real>(x: &VoxelImage<F>, axis: Axis, index: usize) -> Result<PlanarImage> {
    let (rows, cols, depth) = axis.shape(x.grid.dims);
    if index >= depth {
        return Err(invalid(format!(
            "slice index {index} out of range for depth {depth}"
        )));
    }
    let mut data = vec![0.0; rows * cols];
    for row in 0..rows {
        for col in 0..cols {
            let (ix, iy, iz) = axis.voxel(row, col, index);
            data[row * cols + col] = x.values[x.grid.index(ix, iy, iz)].to_f64();
        }
    }
    Ok(PlanarImage { rows, cols, data })
}
