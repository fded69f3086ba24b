//! Gaussian-kernel photoacoustic forward modeling and iterative
//! reconstruction.
//!
//! The crate is organized around one idea: if the initial pressure is a
//! sum of small Gaussian kernels, the wave equation has a closed-form
//! solution per kernel, so the forward operator needs no PDE solver —
//! it is projection onto an upsampled time axis, one shared FIR
//! convolution, and decimation. Every stage is linear with an exact
//! transpose, which makes the adjoint cheap and testable.
//!
//! Start at [`SystemModel`] for the operator pair, `recon` for the
//! regularized solver, and `phantom`/`io` for synthetic data and the
//! on-disk formats.

// Validation guards are written `!(x > 0.0)` on purpose: the negation
// rejects NaN, which `x <= 0.0` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assa;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod operators;
pub mod phantom;
pub mod real;
pub mod recon;
pub mod regularization;
pub mod wavefield;

pub use assa::{compute_assa, make_kernel_taps, AssaParams, KernelTaps, DEFAULT_N_MIN};
pub use error::{GpairError, Result};
pub use geometry::{
    aligned_sample_index, build_hemispherical_array, build_planar_array, build_tof_table,
    ArrayLayout, DetectorArray, ToFTable, VoxelGrid, VoxelImage,
};
pub use io::{
    export_raw_with_sidecar, read_signals, read_volume, write_pgm, write_signals, write_volume,
    AnySignals, AnyVolume,
};
pub use metrics::{
    mse_psnr, mse_psnr_unnormalized, reference_free_metrics, ssim3d, VoxelMask, PSNR_CAP_DB,
};
pub use operators::{
    add_gaussian_noise, adjoint_dot_test, backproject, correlate, decimate, project_up,
    relative_l2, scatter_convolve, zero_fill, DotTestReport, DotTrial, SignalSet, SystemModel,
    UpsampledBuffer,
};
pub use phantom::{
    generate_phantom, max_projection, slice_extract, Axis, PhantomKind, PhantomSpec, PlanarImage,
};
pub use real::{Dtype, Real};
pub use recon::{
    gpair_reconstruct, loss_and_grad, npc_apply, npc_backprop, single_pass_reconstruct, AdamState,
    CawrSchedule, InitMode, IterationRecord, LossBreakdown, ReconConfig, ReconError, ReconOutput,
    DEFAULT_EPS_NPC,
};
pub use regularization::{
    hessian_value_grad, tv_value_grad, vcr_value_grad, RegConfig, DEFAULT_EPS_REG,
};
pub use wavefield::{
    build_dense_matrix, oracle_forward, pressure_full, pressure_outgoing, pressure_outgoing_raw,
    spherical_integral, AcousticConfig, DenseOperator, GaussianSource,
};
