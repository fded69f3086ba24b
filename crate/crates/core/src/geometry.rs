//! Imaging geometry: the reconstruction grid, detector arrays and the
//! per-pair time-of-flight table.
//!
//! Linear voxel order is x-fastest:
//!
//! ```text
//! i = ix + nx * (iy + ny * iz)
//! ```
//!
//! The ToF table stores, for every (voxel, detector) pair, the propagation
//! distance and the nearest sample index on the *upsampled* time axis,
//!
//! ```text
//! k_ij = floor(r_ij / v_s * f_s_up + 0.5)
//! ```
//!
//! grouped by detector so both operators stream one trace contiguously.

use crate::assa::AssaParams;
use crate::error::{invalid, mismatch, GpairError, Result};
use crate::real::Real;
use crate::wavefield::AcousticConfig;
use rayon::prelude::*;

/// Regular isotropic voxel grid. `origin` is the center of voxel (0,0,0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelGrid {
    pub dims: [usize; 3],
    /// Isotropic voxel pitch [m].
    pub spacing: f64,
    /// Position of the first voxel center [m].
    pub origin: [f64; 3],
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], spacing: f64, origin: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(invalid(format!("grid dims must be >= 1, got {dims:?}")));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(invalid(format!("grid spacing must be > 0, got {spacing}")));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "grid origin must be finite, got {origin:?}"
            )));
        }
        Ok(VoxelGrid {
            dims,
            spacing,
            origin,
        })
    }

    /// Grid whose volume is centered on the coordinate origin.
    pub fn centered(dims: [usize; 3], spacing: f64) -> Result<Self> {
        let origin = [
            -spacing * (dims[0] as f64 - 1.0) / 2.0,
            -spacing * (dims[1] as f64 - 1.0) / 2.0,
            -spacing * (dims[2] as f64 - 1.0) / 2.0,
        ];
        VoxelGrid::new(dims, spacing, origin)
    }

    /// Total voxel count.
    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false // dims are validated >= 1
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        debug_assert!(ix < self.dims[0] && iy < self.dims[1] && iz < self.dims[2]);
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        debug_assert!(i < self.len());
        let ix = i % self.dims[0];
        let rest = i / self.dims[0];
        [ix, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Physical position of a voxel center [m].
    #[inline]
    pub fn position(&self, i: usize) -> [f64; 3] {
        let [ix, iy, iz] = self.coords(i);
        [
            self.origin[0] + self.spacing * ix as f64,
            self.origin[1] + self.spacing * iy as f64,
            self.origin[2] + self.spacing * iz as f64,
        ]
    }
}

/// Scalar field sampled on a [`VoxelGrid`], x-fastest.
#[derive(Clone, Debug)]
pub struct VoxelImage<F: Real = f64> {
    pub grid: VoxelGrid,
    pub values: Vec<F>,
}

impl<F: Real> VoxelImage<F> {
    pub fn zeros(grid: VoxelGrid) -> Self {
        VoxelImage {
            grid,
            values: vec![F::zero(); grid.len()],
        }
    }

    pub fn from_values(grid: VoxelGrid, values: Vec<F>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(mismatch(format!(
                "image has {} values but grid {:?} holds {} voxels",
                values.len(),
                grid.dims,
                grid.len()
            )));
        }
        Ok(VoxelImage { grid, values })
    }

    /// Largest value (not largest magnitude).
    pub fn max_value(&self) -> F {
        self.values
            .iter()
            .copied()
            .fold(F::of(f64::NEG_INFINITY), F::max)
    }

    pub fn cast<G: Real>(&self) -> VoxelImage<G> {
        VoxelImage {
            grid: self.grid,
            values: self.values.iter().map(|v| G::of(v.to_f64())).collect(),
        }
    }
}

/// How a detector array was laid out; kept for config echo and headers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArrayLayout {
    Planar,
    Hemispherical,
    Custom,
}

/// Point-detector positions [m].
#[derive(Clone, Debug)]
pub struct DetectorArray {
    pub positions: Vec<[f64; 3]>,
    pub layout: ArrayLayout,
}

impl DetectorArray {
    /// Wraps explicit positions. Positions must be pairwise distinct.
    pub fn custom(positions: Vec<[f64; 3]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid("detector array must hold at least one element"));
        }
        for p in &positions {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("non-finite detector position {p:?}")));
            }
        }
        for a in 0..positions.len() {
            for b in (a + 1)..positions.len() {
                if positions[a] == positions[b] {
                    return Err(invalid(format!(
                        "detectors {a} and {b} share position {:?}",
                        positions[a]
                    )));
                }
            }
        }
        Ok(DetectorArray {
            positions,
            layout: ArrayLayout::Custom,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Square planar lattice centered on `(0, 0, plane_z)`.
///
/// For `n_per_side > 1` the pitch is `aperture / (n_per_side - 1)` so the
/// outermost rows sit exactly on the aperture edge; a single element sits
/// at the aperture center.
pub fn build_planar_array(
    aperture_x: f64,
    aperture_y: f64,
    n_per_side: usize,
    plane_z: f64,
) -> Result<DetectorArray> {
    if !(aperture_x > 0.0) || !(aperture_y > 0.0) {
        return Err(invalid(format!(
            "planar aperture must be positive, got {aperture_x} x {aperture_y}"
        )));
    }
    if n_per_side == 0 {
        return Err(invalid("planar array needs n_per_side >= 1"));
    }
    if !plane_z.is_finite() {
        return Err(invalid(format!("plane_z must be finite, got {plane_z}")));
    }
    let mut positions = Vec::with_capacity(n_per_side * n_per_side);
    if n_per_side == 1 {
        positions.push([0.0, 0.0, plane_z]);
    } else {
        let pitch_x = aperture_x / (n_per_side as f64 - 1.0);
        let pitch_y = aperture_y / (n_per_side as f64 - 1.0);
        for iy in 0..n_per_side {
            for ix in 0..n_per_side {
                positions.push([
                    -aperture_x / 2.0 + pitch_x * ix as f64,
                    -aperture_y / 2.0 + pitch_y * iy as f64,
                    plane_z,
                ]);
            }
        }
    }
    Ok(DetectorArray {
        positions,
        layout: ArrayLayout::Planar,
    })
}

/// Lower hemisphere (z <= center_z) of radius `radius` around `center`,
/// sampled with a Fibonacci spiral for near-uniform angular coverage.
/// `n == 1` places the single element at the pole below the center.
pub fn build_hemispherical_array(radius: f64, center: [f64; 3], n: usize) -> Result<DetectorArray> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(invalid(format!(
            "hemisphere radius must be > 0, got {radius}"
        )));
    }
    if n == 0 {
        return Err(invalid("hemispherical array needs n >= 1"));
    }
    if center.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!(
            "hemisphere center must be finite, got {center:?}"
        )));
    }
    let mut positions = Vec::with_capacity(n);
    if n == 1 {
        positions.push([center[0], center[1], center[2] - radius]);
    } else {
        let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
        for k in 0..n {
            // z in (-1, 0): strictly below the equator, never at the pole.
            let z = -((k as f64 + 0.5) / n as f64);
            let rho = (1.0 - z * z).sqrt();
            let phi = golden_angle * k as f64;
            positions.push([
                center[0] + radius * rho * phi.cos(),
                center[1] + radius * rho * phi.sin(),
                center[2] + radius * z,
            ]);
        }
    }
    Ok(DetectorArray {
        positions,
        layout: ArrayLayout::Hemispherical,
    })
}

/// Nearest sample index of the arrival time `r / v_s` on a clock running
/// at `sample_rate` (round-half-up).
#[inline]
pub fn aligned_sample_index(r: f64, sound_speed: f64, sample_rate: f64) -> i64 {
    (r / sound_speed * sample_rate + 0.5).floor() as i64
}

/// Upper bound on stored (voxel, detector) pairs; at 13 bytes/pair the
/// table then tops out around 3.3 GB. Larger problems need a streaming
/// scheme this crate does not provide.
pub const MAX_TOF_PAIRS: usize = 1 << 28;

/// Precomputed distances and aligned upsampled-clock indices for every
/// (voxel, detector) pair, grouped by detector: entry `(i, j)` lives at
/// `j * n_voxels + i`.
#[derive(Clone, Debug)]
pub struct ToFTable {
    pub n_voxels: usize,
    pub n_detectors: usize,
    /// Samples per trace on the upsampled clock.
    pub n_t_up: usize,
    /// Kernel half-width K the validity window was computed with.
    pub kernel_half: usize,
    /// Propagation distance r_ij [m], always > 0.
    pub distances: Vec<f64>,
    /// Aligned index k_ij on the upsampled clock.
    pub aligned: Vec<i32>,
    /// True when the full window [k_ij - K, k_ij + K] fits in [0, n_t_up).
    pub valid: Vec<bool>,
}

impl ToFTable {
    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> usize {
        j * self.n_voxels + i
    }

    pub fn valid_pair_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Builds the ToF table for `grid` seen by `array` under `assa`'s
/// upsampled clock. A detector coincident with a voxel center is a
/// geometry conflict and is rejected here rather than silently masked.
pub fn build_tof_table(
    grid: &VoxelGrid,
    array: &DetectorArray,
    acoustic: &AcousticConfig,
    assa: &AssaParams,
) -> Result<ToFTable> {
    let m = grid.len();
    let n_d = array.len();
    let pairs = m
        .checked_mul(n_d)
        .ok_or_else(|| GpairError::ResourceLimit("voxel x detector pair count overflows".into()))?;
    if pairs > MAX_TOF_PAIRS {
        return Err(GpairError::ResourceLimit(format!(
            "{pairs} voxel-detector pairs exceed the table cap of {MAX_TOF_PAIRS}"
        )));
    }
    if assa.n_t_up >= (1usize << 31) {
        return Err(GpairError::ResourceLimit(format!(
            "upsampled trace length {} does not fit 32-bit indexing",
            assa.n_t_up
        )));
    }
    let k_half = assa.kernel_half as i64;
    let n_t_up = assa.n_t_up as i64;

    let mut distances = vec![0.0f64; pairs];
    let mut aligned = vec![0i32; pairs];
    let mut valid = vec![false; pairs];

    let chunks: Vec<(&mut [f64], &mut [i32], &mut [bool])> = distances
        .chunks_mut(m)
        .zip(aligned.chunks_mut(m))
        .zip(valid.chunks_mut(m))
        .map(|((d, a), v)| (d, a, v))
        .collect();

    let per_detector: Vec<Result<()>> = chunks
        .into_par_iter()
        .enumerate()
        .map(|(j, (dist_row, align_row, valid_row))| {
            let s = array.positions[j];
            for i in 0..m {
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
                let k = aligned_sample_index(r, acoustic.sound_speed, assa.sample_rate_up);
                dist_row[i] = r;
                if k - k_half >= 0 && k + k_half < n_t_up {
                    align_row[i] = k as i32;
                    valid_row[i] = true;
                } else {
                    align_row[i] = k.clamp(0, n_t_up - 1) as i32;
                }
            }
            Ok(())
        })
        .collect();
    for r in per_detector {
        r?;
    }

    Ok(ToFTable {
        n_voxels: m,
        n_detectors: n_d,
        n_t_up: assa.n_t_up,
        kernel_half: assa.kernel_half as usize,
        distances,
        aligned,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assa::compute_assa;

    #[test]
    fn index_round_trip_is_bijective() {
        let grid = VoxelGrid::new([5, 3, 2], 1e-4, [0.0; 3]).unwrap();
        let mut seen = vec![false; grid.len()];
        for iz in 0..2 {
            for iy in 0..3 {
                for ix in 0..5 {
                    let i = grid.index(ix, iy, iz);
                    assert!(!seen[i], "index {i} hit twice");
                    seen[i] = true;
                    assert_eq!(grid.coords(i), [ix, iy, iz]);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn x_is_fastest() {
        let grid = VoxelGrid::new([4, 4, 4], 1e-4, [0.0; 3]).unwrap();
        assert_eq!(grid.index(1, 0, 0), 1);
        assert_eq!(grid.index(0, 1, 0), 4);
        assert_eq!(grid.index(0, 0, 1), 16);
    }

    #[test]
    fn positions_follow_origin_and_spacing() {
        let grid = VoxelGrid::new([3, 3, 3], 2e-4, [-2e-4, 0.0, 1e-3]).unwrap();
        let i = grid.index(2, 1, 0);
        let p = grid.position(i);
        assert_eq!(p, [2e-4, 2e-4, 1e-3]);
    }

    #[test]
    fn centered_grid_brackets_the_origin() {
        let grid = VoxelGrid::centered([5, 5, 5], 1e-3).unwrap();
        let mid = grid.index(2, 2, 2);
        assert_eq!(grid.position(mid), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn grid_rejects_degenerate_parameters() {
        assert!(VoxelGrid::new([0, 4, 4], 1e-4, [0.0; 3]).is_err());
        assert!(VoxelGrid::new([4, 4, 4], 0.0, [0.0; 3]).is_err());
        assert!(VoxelGrid::new([4, 4, 4], -1e-4, [0.0; 3]).is_err());
        assert!(VoxelGrid::new([4, 4, 4], 1e-4, [f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn planar_array_spans_the_aperture() {
        let arr = build_planar_array(102.4e-3, 102.4e-3, 32, -0.01).unwrap();
        assert_eq!(arr.len(), 1024);
        assert_eq!(arr.layout, ArrayLayout::Planar);
        let xs: Vec<f64> = arr.positions.iter().map(|p| p[0]).collect();
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((min + 51.2e-3).abs() < 1e-12);
        assert!((max - 51.2e-3).abs() < 1e-12);
        assert!(arr.positions.iter().all(|p| p[2] == -0.01));
        // pitch = aperture / (n - 1)
        let pitch = arr.positions[1][0] - arr.positions[0][0];
        assert!((pitch - 102.4e-3 / 31.0).abs() < 1e-15);
    }

    #[test]
    fn planar_single_element_sits_at_center() {
        let arr = build_planar_array(0.1, 0.1, 1, 0.0).unwrap();
        assert_eq!(arr.positions, vec![[0.0, 0.0, 0.0]]);
    }

    #[test]
    fn planar_two_per_side_lands_on_corners() {
        let arr = build_planar_array(0.02, 0.02, 2, 0.0).unwrap();
        assert_eq!(arr.len(), 4);
        for p in &arr.positions {
            assert!((p[0].abs() - 0.01).abs() < 1e-15);
            assert!((p[1].abs() - 0.01).abs() < 1e-15);
            assert_eq!(p[2], 0.0);
        }
    }

    #[test]
    fn planar_rejects_bad_aperture() {
        assert!(build_planar_array(0.0, 0.1, 4, 0.0).is_err());
        assert!(build_planar_array(0.1, -0.1, 4, 0.0).is_err());
        assert!(build_planar_array(0.1, 0.1, 0, 0.0).is_err());
    }

    #[test]
    fn hemisphere_positions_sit_on_the_shell() {
        let center = [1e-3, -2e-3, 0.5e-3];
        let radius = 0.06;
        let arr = build_hemispherical_array(radius, center, 256).unwrap();
        assert_eq!(arr.len(), 256);
        for p in &arr.positions {
            let r = ((p[0] - center[0]).powi(2)
                + (p[1] - center[1]).powi(2)
                + (p[2] - center[2]).powi(2))
            .sqrt();
            assert!(
                (r - radius).abs() <= 1e-12 * radius,
                "radius off: {r} vs {radius}"
            );
            assert!(p[2] <= center[2]);
        }
    }

    #[test]
    fn hemisphere_positions_are_pairwise_distinct() {
        let arr = build_hemispherical_array(0.05, [0.0; 3], 256).unwrap();
        let mut min_sep = f64::INFINITY;
        for a in 0..arr.len() {
            for b in (a + 1)..arr.len() {
                let pa = arr.positions[a];
                let pb = arr.positions[b];
                let d =
                    ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2) + (pa[2] - pb[2]).powi(2))
                        .sqrt();
                min_sep = min_sep.min(d);
            }
        }
        assert!(min_sep > 0.0, "duplicate detector positions");
    }

    #[test]
    fn hemisphere_single_element_is_the_pole() {
        let arr = build_hemispherical_array(0.04, [0.0, 0.0, 1e-3], 1).unwrap();
        assert_eq!(arr.positions, vec![[0.0, 0.0, 1e-3 - 0.04]]);
    }

    #[test]
    fn custom_array_rejects_duplicates() {
        let positions = vec![[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]];
        assert!(DetectorArray::custom(positions).is_err());
        assert!(DetectorArray::custom(vec![]).is_err());
    }

    #[test]
    fn aligned_index_rounds_half_up() {
        // r / v * f chosen exactly representable: 10.5 rounds up to 11.
        assert_eq!(aligned_sample_index(10.5, 1.0, 1.0), 11);
        assert_eq!(aligned_sample_index(10.4999, 1.0, 1.0), 10);
        // 37.5 mm at 1500 m/s on an 80 MHz clock lands on sample 2000.
        assert_eq!(aligned_sample_index(0.0375, 1500.0, 80e6), 2000);
    }

    fn small_setup() -> (VoxelGrid, DetectorArray, AcousticConfig) {
        let grid = VoxelGrid::centered([4, 4, 4], 2.5e-4).unwrap();
        let array = build_planar_array(0.02, 0.02, 3, -0.015).unwrap();
        let acoustic = AcousticConfig::new(1500.0, 20e6, 256, 0.0).unwrap();
        (grid, array, acoustic)
    }

    #[test]
    fn tof_table_is_grouped_by_detector() {
        let (grid, array, acoustic) = small_setup();
        let assa = compute_assa(grid.spacing, &acoustic, 25).unwrap();
        let tof = build_tof_table(&grid, &array, &acoustic, &assa).unwrap();
        assert_eq!(tof.distances.len(), grid.len() * array.len());
        for j in 0..array.len() {
            for i in 0..grid.len() {
                let p = grid.position(i);
                let s = array.positions[j];
                let r =
                    ((p[0] - s[0]).powi(2) + (p[1] - s[1]).powi(2) + (p[2] - s[2]).powi(2)).sqrt();
                assert_eq!(tof.distances[tof.pair(i, j)], r);
                assert!(r > 0.0);
            }
        }
    }

    #[test]
    fn tof_aligned_indices_round_correctly() {
        let (grid, array, acoustic) = small_setup();
        let assa = compute_assa(grid.spacing, &acoustic, 25).unwrap();
        let tof = build_tof_table(&grid, &array, &acoustic, &assa).unwrap();
        for p in 0..tof.distances.len() {
            let expect =
                aligned_sample_index(tof.distances[p], acoustic.sound_speed, assa.sample_rate_up);
            if tof.valid[p] {
                assert_eq!(tof.aligned[p] as i64, expect);
                assert!(expect - assa.kernel_half as i64 >= 0);
                assert!(expect + (assa.kernel_half as i64) < assa.n_t_up as i64);
            }
        }
    }

    #[test]
    fn tof_masks_windows_that_leave_the_record() {
        let (grid, array, acoustic) = small_setup();
        // 4 samples cannot hold any full kernel window at this geometry.
        let short = AcousticConfig::new(1500.0, 20e6, 4, 0.0).unwrap();
        let assa = compute_assa(grid.spacing, &short, 25).unwrap();
        let tof = build_tof_table(&grid, &array, &short, &assa).unwrap();
        assert_eq!(tof.valid_pair_count(), 0);
        // 256 samples reach 19.2 mm: the far corner pairs (~21 mm) fall off.
        let assa_mid = compute_assa(grid.spacing, &acoustic, 25).unwrap();
        let tof_mid = build_tof_table(&grid, &array, &acoustic, &assa_mid).unwrap();
        let n_pairs = grid.len() * array.len();
        assert!(tof_mid.valid_pair_count() > 0);
        assert!(tof_mid.valid_pair_count() < n_pairs);
        // 384 samples reach 28.8 mm: every window fits.
        let long = AcousticConfig::new(1500.0, 20e6, 384, 0.0).unwrap();
        let assa_long = compute_assa(grid.spacing, &long, 25).unwrap();
        let tof_long = build_tof_table(&grid, &array, &long, &assa_long).unwrap();
        assert_eq!(tof_long.valid_pair_count(), n_pairs);
    }

    #[test]
    fn tof_rejects_detector_on_voxel_center() {
        let grid = VoxelGrid::centered([3, 3, 3], 1e-3).unwrap();
        let array = DetectorArray::custom(vec![[0.0, 0.0, 0.0]]).unwrap();
        let acoustic = AcousticConfig::new(1500.0, 20e6, 128, 0.0).unwrap();
        let assa = compute_assa(grid.spacing, &acoustic, 25).unwrap();
        let err = build_tof_table(&grid, &array, &acoustic, &assa).unwrap_err();
        match err {
            GpairError::GeometryConflict(msg) => {
                assert!(
                    msg.contains("detector 0"),
                    "message should name the pair: {msg}"
                );
            }
            other => panic!("expected geometry conflict, got {other}"),
        }
    }

    #[test]
    fn tof_rebuild_is_bit_identical() {
        let (grid, array, acoustic) = small_setup();
        let assa = compute_assa(grid.spacing, &acoustic, 25).unwrap();
        let a = build_tof_table(&grid, &array, &acoustic, &assa).unwrap();
        let b = build_tof_table(&grid, &array, &acoustic, &assa).unwrap();
        assert_eq!(a.distances, b.distances);
        assert_eq!(a.aligned, b.aligned);
        assert_eq!(a.valid, b.valid);
    }
}
