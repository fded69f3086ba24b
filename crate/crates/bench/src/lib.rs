//! Shared fixtures for the operator benchmarks.

use gpair_core::{
    build_hemispherical_array, generate_phantom, AcousticConfig, PhantomKind, PhantomSpec,
    SystemModel, VoxelGrid, VoxelImage,
};

pub struct BenchCase {
    pub model: SystemModel<f64>,
    pub image: VoxelImage<f64>,
}

/// 16 cubed voxels, 16 detectors — small enough to iterate quickly,
/// large enough that per-stage costs dominate setup noise.
pub fn standard_case() -> BenchCase {
    let grid = VoxelGrid::centered([16, 16, 16], 4e-4).unwrap();
    let array = build_hemispherical_array(0.018, [0.0; 3], 16).unwrap();
    let acoustic = AcousticConfig::new(1500.0, 4e7, 768, 0.0).unwrap();
    let model = SystemModel::for_grid(grid, array, acoustic).unwrap();
    let image =
        generate_phantom(PhantomSpec::new(PhantomKind::Blobs { count: 5 }, 3), &grid).unwrap();
    BenchCase { model, image }
}
