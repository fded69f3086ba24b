//! Turns parsed arguments into core-library objects and echoes the
//! resolved configuration to stderr.

use crate::{AcousticArgs, ArrayArgs, ArrayKind, Cli, GridArgs, Precision};
use anyhow::{Context, Result};
use gpair_core::{
    build_hemispherical_array, build_planar_array, AcousticConfig, AssaParams, DetectorArray,
    SystemModel, VoxelGrid, DEFAULT_N_MIN,
};

pub fn grid_from(args: &GridArgs) -> Result<VoxelGrid> {
    let grid = match args.center {
        None => VoxelGrid::centered(args.grid, args.spacing)?,
        Some(center) => {
            let centered = VoxelGrid::centered(args.grid, args.spacing)?;
            let origin = [
                centered.origin[0] + center[0],
                centered.origin[1] + center[1],
                centered.origin[2] + center[2],
            ];
            VoxelGrid::new(args.grid, args.spacing, origin)?
        }
    };
    Ok(grid)
}

pub fn array_from(args: &ArrayArgs) -> Result<DetectorArray> {
    let array = match args.array {
        ArrayKind::Hemi => build_hemispherical_array(args.radius, args.array_center, args.n)?,
        ArrayKind::Planar => {
            build_planar_array(args.aperture, args.aperture, args.n, args.plane_z)?
        }
    };
    Ok(array)
}

pub fn acoustic_from(args: &AcousticArgs) -> Result<AcousticConfig> {
    Ok(AcousticConfig::new(
        args.speed,
        args.rate,
        args.samples,
        args.t_start,
    )?)
}

pub fn model_for<F: gpair_core::Real>(
    cli: &Cli,
    grid: VoxelGrid,
    array: DetectorArray,
    acoustic: AcousticConfig,
) -> Result<SystemModel<F>> {
    let sigma = grid.spacing;
    let n_min = cli.n_min.unwrap_or(DEFAULT_N_MIN);
    let model = SystemModel::build(grid, array, acoustic, sigma, n_min)
        .context("building the system model")?;
    echo_model(
        cli,
        &model.assa,
        model.sigma,
        model.coverage(),
        model.array.positions.len(),
    );
    Ok(model)
}

pub fn echo_model(cli: &Cli, assa: &AssaParams, sigma: f64, coverage: f64, n_detectors: usize) {
    eprintln!(
        "model: sigma = {sigma} m, detectors = {n_detectors}, precision = {}, deterministic = {}",
        match cli.precision {
            Precision::Single => "single",
            Precision::Double => "double",
        },
        cli.deterministic,
    );
    eprintln!(
        "assa: alpha = {}, n_half = {}, kernel_half = {}, n_min = {}, upsampled rate = {} Hz, n_t_up = {}, valid pair coverage = {:.4}",
        assa.alpha, assa.n_half, assa.kernel_half, assa.n_min, assa.sample_rate_up, assa.n_t_up,
        coverage,
    );
}
