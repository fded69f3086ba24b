//! The iterative reconstructor: nonnegativity reparameterization, Adam
//! with cosine-annealing warm restarts, loss assembly, and the loop that
//! ties them to the operator pair. A one-shot adjoint reconstructor is
//! included for previews and initialization.

use crate::error::{invalid, mismatch, GpairError, Result};
use crate::geometry::VoxelImage;
use crate::operators::{SignalSet, SystemModel};
use crate::real::Real;
use crate::regularization::{vcr_value_grad, RegConfig, DEFAULT_EPS_REG};
use std::time::Instant;

pub const DEFAULT_EPS_NPC: f64 = 1e-8;

/// Squares the shifted latent: `x = (z + eps)^2`, nonnegative by
/// construction. The shift keeps the gradient alive at z = 0.
pub fn npc_apply<F: Real>(z: &VoxelImage<F>, eps_npc: f64) -> VoxelImage<F> {
    let eps = F::of(eps_npc);
    let values = z.values.iter().map(|&v| (v + eps) * (v + eps)).collect();
    VoxelImage {
        grid: z.grid,
        values,
    }
}

/// Chain rule through the reparameterization:
/// `dL/dz = dL/dx * 2 (z + eps)` elementwise.
pub fn npc_backprop<F: Real>(
    z: &VoxelImage<F>,
    grad_x: &VoxelImage<F>,
    eps_npc: f64,
) -> Result<VoxelImage<F>> {
    if z.grid != grad_x.grid {
        return Err(mismatch("latent and gradient grids differ".to_string()));
    }
    let eps = F::of(eps_npc);
    let two = F::of(2.0);
    let values = z
        .values
        .iter()
        .zip(&grad_x.values)
        .map(|(&zv, &gv)| gv * two * (zv + eps))
        .collect();
    Ok(VoxelImage {
        grid: z.grid,
        values,
    })
}

/// Cosine annealing with warm restarts, evaluated exactly as
/// `eta_min + (eta_max - eta_min)/2 * (1 + cos(pi * T_cur / T_i))` with
/// `T_cur = t mod T_0` and `T_i = T_0 * T_mult^floor(t / T_0)`.
///
/// Note the quirk this inherits: cycles restart every `T_0` steps while
/// the period `T_i` keeps growing, so with `t_mult > 1` later cycles
/// never anneal all the way down to `eta_min`. That is intentional here
/// — the schedule is reproduced as specified, not as the common
/// warm-restart convention would have it.
#[derive(Clone, Copy, Debug)]
pub struct CawrSchedule {
    pub eta_max: f64,
    pub eta_min: f64,
    pub t_0: u32,
    pub t_mult: u32,
}

impl CawrSchedule {
    pub fn lr(&self, t: u32) -> f64 {
        let t_cur = (t % self.t_0) as f64;
        let t_i = self.t_0 as f64 * (self.t_mult as f64).powi((t / self.t_0) as i32);
        self.eta_min
            + 0.5
                * (self.eta_max - self.eta_min)
                * (1.0 + (std::f64::consts::PI * t_cur / t_i).cos())
    }
}

/// Textbook Adam with bias correction; `eps` sits outside the square
/// root. Moments live in the pipeline precision, per-element arithmetic
/// runs in f64.
#[derive(Clone, Debug)]
pub struct AdamState<F: Real> {
    pub m: Vec<F>,
    pub v: Vec<F>,
    pub t: u32,
}

impl<F: Real> AdamState<F> {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![F::zero(); len],
            v: vec![F::zero(); len],
            t: 0,
        }
    }

    pub fn step(&mut self, z: &mut [F], grad: &[F], lr: f64, beta1: f64, beta2: f64, eps: f64) {
        assert_eq!(z.len(), grad.len());
        assert_eq!(z.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..z.len() {
            let g = grad[i].to_f64();
            let m = beta1 * self.m[i].to_f64() + (1.0 - beta1) * g;
            let v = beta2 * self.v[i].to_f64() + (1.0 - beta2) * g * g;
            self.m[i] = F::of(m);
            self.v[i] = F::of(v);
            let update = lr * (m / bc1) / ((v / bc2).sqrt() + eps);
            z[i] = F::of(z[i].to_f64() - update);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    /// `z = 0` — the reference initialization.
    Zero,
    /// `z = sqrt(max(adjoint(b), 0))`, a warm start from one adjoint
    /// pass. Not part of the reference algorithm; off by default.
    Backprojection,
}

#[derive(Clone, Copy, Debug)]
pub struct ReconConfig {
    /// Iteration budget; the loop always runs exactly this many steps.
    pub i_max: u32,
    pub eta_max: f64,
    pub eta_min: f64,
    pub t_0: u32,
    pub t_mult: u32,
    pub reg: RegConfig,
    pub eps_npc: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub init: InitMode,
    /// Recorded for provenance; the loop itself draws no random numbers.
    pub seed: u64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            i_max: 200,
            eta_max: 0.1,
            eta_min: 1e-4,
            t_0: 50,
            t_mult: 2,
            // lambda sits well below the data-term scale of desk-size
            // problems; larger values stall descent near z = 0.
            reg: RegConfig {
                lambda: 1e-8,
                beta: 0.5,
                eps_reg: DEFAULT_EPS_REG,
            },
            eps_npc: DEFAULT_EPS_NPC,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            init: InitMode::Zero,
            seed: 0,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.i_max < 1 {
            return Err(invalid("iteration budget must be >= 1"));
        }
        if !(0.0 <= self.eta_min && self.eta_min <= self.eta_max) || !self.eta_max.is_finite() {
            return Err(invalid(format!(
                "need 0 <= eta_min <= eta_max, got {} and {}",
                self.eta_min, self.eta_max
            )));
        }
        if self.t_0 < 1 || self.t_mult < 1 {
            return Err(invalid("t_0 and t_mult must be >= 1"));
        }
        if !(self.eps_npc > 0.0) || !self.eps_npc.is_finite() {
            return Err(invalid(format!(
                "eps_npc must be > 0, got {}",
                self.eps_npc
            )));
        }
        self.reg.validate()
    }

    pub fn schedule(&self) -> CawrSchedule {
        CawrSchedule {
            eta_max: self.eta_max,
            eta_min: self.eta_min,
            t_0: self.t_0,
            t_mult: self.t_mult,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LossBreakdown {
    pub loss: f64,
    /// `||A phi(z) - b||^2 / (N_d N_t)`
    pub data_term: f64,
    /// `lambda * R_VCR(phi(z))`
    pub reg_term: f64,
}

/// Loss and its exact gradient in the latent:
/// `L = ||A phi(z) - b||^2 / N + lambda R_VCR(phi(z))`,
/// `grad_z = (A^T(2/N (A phi(z) - b)) + lambda grad R_VCR) * 2(z + eps)`.
pub fn loss_and_grad<F: Real>(
    z: &VoxelImage<F>,
    b: &SignalSet<F>,
    model: &SystemModel<F>,
    cfg: &ReconConfig,
) -> Result<(LossBreakdown, VoxelImage<F>)> {
    let x = npc_apply(z, cfg.eps_npc);
    let y = model.forward(&x)?;
    if y.data.len() != b.data.len() {
        return Err(mismatch(
            "observed signals do not match the model shape".to_string(),
        ));
    }
    let n = (b.n_detectors * b.n_samples()) as f64;

    let mut residual = y;
    let mut sq_sum = 0.0f64;
    for (r, &obs) in residual.data.iter_mut().zip(&b.data) {
        *r -= obs;
        let rv = r.to_f64();
        sq_sum += rv * rv;
    }
    let data_term = sq_sum / n;

    let scale = F::of(2.0 / n);
    for r in &mut residual.data {
        *r *= scale;
    }
    let grad_data = model.adjoint(&residual)?;

    let (reg_value, reg_grad) = vcr_value_grad(&x, &cfg.reg)?;
    let reg_term = cfg.reg.lambda * reg_value;
    let loss = data_term + reg_term;
    if !loss.is_finite() {
        return Err(GpairError::Numerical(format!(
            "loss is not finite (data {data_term}, reg {reg_term})"
        )));
    }

    let lambda = F::of(cfg.reg.lambda);
    let mut grad_x = grad_data;
    for (g, &rg) in grad_x.values.iter_mut().zip(&reg_grad.values) {
        *g += lambda * rg;
    }
    let grad_z = npc_backprop(z, &grad_x, cfg.eps_npc)?;
    Ok((
        LossBreakdown {
            loss,
            data_term,
            reg_term,
        },
        grad_z,
    ))
}

/// One line of the convergence trace; `loss` is evaluated at the point
/// the iteration started from.
#[derive(Clone, Copy, Debug)]
pub struct IterationRecord {
    pub iteration: u32,
    pub loss: f64,
    pub data_term: f64,
    pub reg_term: f64,
    pub lr: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct ReconOutput<F: Real> {
    /// `(z + eps)^2` at the final iterate — nonnegative everywhere.
    pub image: VoxelImage<F>,
    pub latent: VoxelImage<F>,
    pub trace: Vec<IterationRecord>,
}

/// How a reconstruction run can fail.
#[derive(Debug)]
pub enum ReconError<F: Real> {
    /// Invalid configuration or mismatched shapes, before any iteration.
    Setup(GpairError),
    /// A numerical failure mid-run; carries the last finite state so
    /// partial results can still be inspected or saved.
    Aborted {
        iteration: u32,
        error: GpairError,
        last_good: Box<ReconOutput<F>>,
    },
}

impl<F: Real> std::fmt::Display for ReconError<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReconError::Setup(e) => write!(f, "reconstruction setup failed: {e}"),
            ReconError::Aborted {
                iteration, error, ..
            } => {
                write!(
                    f,
                    "reconstruction aborted at iteration {iteration}: {error}"
                )
            }
        }
    }
}

impl<F: Real> std::error::Error for ReconError<F> {}

/// Runs the full loop: NPC apply, forward, loss, adjoint and regularizer
/// gradients, chain rule, scheduled Adam step — exactly `i_max` times.
/// `on_iter` sees each record as it is produced (for live trace output).
pub fn gpair_reconstruct<F: Real>(
    b: &SignalSet<F>,
    model: &SystemModel<F>,
    cfg: &ReconConfig,
    mut on_iter: impl FnMut(&IterationRecord),
) -> std::result::Result<ReconOutput<F>, ReconError<F>> {
    cfg.validate().map_err(ReconError::Setup)?;
    if b.n_detectors != model.array.len() || b.acoustic != model.acoustic {
        return Err(ReconError::Setup(mismatch(
            "signals do not match the model acquisition".to_string(),
        )));
    }

    let mut z = VoxelImage::<F>::zeros(model.grid);
    if cfg.init == InitMode::Backprojection {
        let bp = model.adjoint(b).map_err(ReconError::Setup)?;
        for (zv, &bv) in z.values.iter_mut().zip(&bp.values) {
            *zv = F::of(bv.to_f64().max(0.0).sqrt());
        }
    }

    let schedule = cfg.schedule();
    let mut adam = AdamState::<F>::new(z.values.len());
    let mut trace: Vec<IterationRecord> = Vec::with_capacity(cfg.i_max as usize);
    // The most recent iterate whose loss evaluated finite, kept so an
    // abort can hand back a usable state.
    let mut last_good = z.clone();

    for t in 0..cfg.i_max {
        let tick = Instant::now();
        let (breakdown, grad_z) = match loss_and_grad(&z, b, model, cfg) {
            Ok(pair) => pair,
            Err(error) => {
                return Err(ReconError::Aborted {
                    iteration: t,
                    error,
                    last_good: Box::new(ReconOutput {
                        image: npc_apply(&last_good, cfg.eps_npc),
                        latent: last_good,
                        trace,
                    }),
                });
            }
        };
        last_good.values.copy_from_slice(&z.values);
        let lr = schedule.lr(t);
        adam.step(
            &mut z.values,
            &grad_z.values,
            lr,
            cfg.adam_beta1,
            cfg.adam_beta2,
            cfg.adam_eps,
        );
        let record = IterationRecord {
            iteration: t,
            loss: breakdown.loss,
            data_term: breakdown.data_term,
            reg_term: breakdown.reg_term,
            lr,
            wall_ms: tick.elapsed().as_secs_f64() * 1e3,
        };
        on_iter(&record);
        trace.push(record);
    }

    Ok(ReconOutput {
        image: npc_apply(&z, cfg.eps_npc),
        latent: z,
        trace,
    })
}

/// One adjoint application — the preview/initialization reconstructor.
pub fn single_pass_reconstruct<F: Real>(
    b: &SignalSet<F>,
    model: &SystemModel<F>,
) -> Result<VoxelImage<F>> {
    model.adjoint(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_hemispherical_array, VoxelGrid};
    use crate::wavefield::AcousticConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn npc_is_a_nonnegative_square() {
        let grid = VoxelGrid::new([2, 2, 1], 1e-4, [0.0; 3]).unwrap();
        let z = VoxelImage::from_values(grid, vec![0.0, 1.0, -2.0, 0.5]).unwrap();
        let x = npc_apply(&z, 1e-8);
        assert_eq!(x.values[0], 1e-8f64 * 1e-8f64);
        assert!((x.values[1] - (1.0 + 1e-8) * (1.0 + 1e-8)).abs() == 0.0);
        assert!((x.values[2] - 4.0).abs() < 1e-7);
        assert!(x.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn npc_backprop_applies_the_chain_rule() {
        let grid = VoxelGrid::new([1, 1, 1], 1e-4, [0.0; 3]).unwrap();
        let z = VoxelImage::from_values(grid, vec![0.5]).unwrap();
        let gx = VoxelImage::from_values(grid, vec![3.0]).unwrap();
        let gz = npc_backprop(&z, &gx, 1e-12).unwrap();
        assert!((gz.values[0] - 3.0).abs() < 1e-9);
        let zero = VoxelImage::from_values(grid, vec![0.0]).unwrap();
        let gz0 = npc_backprop(&z, &zero, 1e-8).unwrap();
        assert_eq!(gz0.values[0], 0.0);
    }

    #[test]
    fn cawr_hits_the_endpoints_and_midpoint() {
        let s = CawrSchedule {
            eta_max: 0.1,
            eta_min: 1e-4,
            t_0: 50,
            t_mult: 1,
        };
        assert!((s.lr(0) - 0.1).abs() <= 1e-15);
        // Midpoint of the first period: cos(pi/2) = 0.
        let mid = 1e-4 + 0.5 * (0.1 - 1e-4);
        assert!((s.lr(25) - mid).abs() <= 1e-15);
        // Restart: T_cur wraps to zero.
        assert!((s.lr(50) - 0.1).abs() <= 1e-15);
        // End of the first period approaches eta_min.
        assert!((s.lr(49) - 1e-4).abs() < 2e-4);
    }

    #[test]
    fn cawr_growing_period_never_reaches_eta_min_again() {
        let s = CawrSchedule {
            eta_max: 0.1,
            eta_min: 1e-4,
            t_0: 50,
            t_mult: 2,
        };
        // Second cycle: T_i = 100 but T_cur still wraps at 50, so the
        // deepest point of the cycle stays above the midpoint value.
        let deepest = (50..100).map(|t| s.lr(t)).fold(f64::INFINITY, f64::min);
        let mid = 1e-4 + 0.5 * (0.1 - 1e-4);
        assert!(deepest >= mid - 1e-12, "deepest {deepest} vs mid {mid}");
        // And the closed form matches a hand evaluation at t = 75.
        let expect =
            1e-4 + 0.5 * (0.1 - 1e-4) * (1.0 + (std::f64::consts::PI * 25.0 / 100.0).cos());
        assert_eq!(s.lr(75), expect);
    }

    #[test]
    fn adam_first_step_is_a_signed_unit_step() {
        let mut state = AdamState::<f64>::new(1);
        let mut z = vec![0.0f64];
        state.step(&mut z, &[0.35], 0.01, 0.9, 0.999, 1e-8);
        // Bias corrections cancel: update = lr * g / (|g| + eps') ~ lr.
        assert!((z[0] + 0.01).abs() <= 0.01 * 1e-6, "step was {}", z[0]);
        let mut neg = AdamState::<f64>::new(1);
        let mut zn = vec![0.0f64];
        neg.step(&mut zn, &[-0.35], 0.01, 0.9, 0.999, 1e-8);
        assert!((zn[0] - 0.01).abs() <= 0.01 * 1e-6);
    }

    #[test]
    fn adam_ignores_zero_gradients() {
        let mut state = AdamState::<f64>::new(3);
        let mut z = vec![0.25, -1.0, 7.5];
        let orig = z.clone();
        for _ in 0..10 {
            state.step(&mut z, &[0.0; 3], 0.1, 0.9, 0.999, 1e-8);
        }
        assert_eq!(z, orig);
    }

    fn tiny_model() -> SystemModel<f64> {
        let grid = VoxelGrid::centered([6, 6, 6], 2e-4).unwrap();
        let array = build_hemispherical_array(8e-3, [0.0; 3], 8).unwrap();
        let acoustic = AcousticConfig::new(1500.0, 20e6, 256, 0.0).unwrap();
        SystemModel::for_grid(grid, array, acoustic).unwrap()
    }

    fn tiny_cfg() -> ReconConfig {
        // Lambda sized well below this toy problem's data term (~3e-6)
        // so the data fit, not the prior, drives the iterates.
        ReconConfig {
            i_max: 5,
            reg: RegConfig {
                lambda: 1e-8,
                beta: 0.5,
                eps_reg: 1e-8,
            },
            ..ReconConfig::default()
        }
    }

    #[test]
    fn exact_fit_has_near_zero_data_gradient() {
        let model = tiny_model();
        let mut cfg = tiny_cfg();
        cfg.reg.lambda = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut z = VoxelImage::<f64>::zeros(model.grid);
        for v in &mut z.values {
            *v = rng.gen_range(0.0..1.0);
        }
        let b = model.forward(&npc_apply(&z, cfg.eps_npc)).unwrap();
        let (breakdown, grad) = loss_and_grad(&z, &b, &model, &cfg).unwrap();
        assert_eq!(breakdown.loss, 0.0);
        assert!(grad.values.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn loss_gradient_matches_finite_differences_end_to_end() {
        let model = tiny_model();
        let cfg = ReconConfig {
            reg: RegConfig {
                lambda: 1e-2,
                beta: 0.6,
                eps_reg: 1e-8,
            },
            ..tiny_cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut z = VoxelImage::<f64>::zeros(model.grid);
        for v in &mut z.values {
            *v = rng.gen_range(-0.5..0.5);
        }
        let mut truth = VoxelImage::<f64>::zeros(model.grid);
        for v in &mut truth.values {
            *v = rng.gen_range(0.0..1.0);
        }
        let b = model.forward(&truth).unwrap();
        let (_, grad) = loss_and_grad(&z, &b, &model, &cfg).unwrap();

        // Probe a scattered subset of coordinates with central FD.
        let h = 1e-5;
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in (0..z.values.len()).step_by(23) {
            let orig = z.values[i];
            z.values[i] = orig + h;
            let up = loss_and_grad(&z, &b, &model, &cfg).unwrap().0.loss;
            z.values[i] = orig - h;
            let down = loss_and_grad(&z, &b, &model, &cfg).unwrap().0.loss;
            z.values[i] = orig;
            let fd = (up - down) / (2.0 * h);
            num += (fd - grad.values[i]) * (fd - grad.values[i]);
            den += fd * fd;
        }
        let rel = (num / den).sqrt();
        assert!(rel <= 1e-5, "gradient mismatch {rel}");
    }

    #[test]
    fn reconstruct_runs_the_exact_budget_and_descends() {
        let model = tiny_model();
        let cfg = ReconConfig {
            i_max: 50,
            ..tiny_cfg()
        };
        let mut truth = VoxelImage::<f64>::zeros(model.grid);
        truth.values[model.grid.index(3, 3, 3)] = 1.0;
        truth.values[model.grid.index(2, 3, 3)] = 0.6;
        let b = model.forward(&truth).unwrap();
        let mut seen = 0usize;
        let out = gpair_reconstruct(&b, &model, &cfg, |_| seen += 1).unwrap();
        assert_eq!(out.trace.len(), 50);
        assert_eq!(seen, 50);
        let (first, last) = (out.trace[0].loss, out.trace.last().unwrap().loss);
        assert!(last < 0.5 * first, "loss went {first:.3e} -> {last:.3e}");
        assert!(out.image.values.iter().all(|&v| v >= 0.0));
        // The brightest voxel lands on the dominant source.
        let peak = out
            .image
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(model.grid.coords(peak), [3, 3, 3]);
        // lr column equals the closed form at every iteration.
        let schedule = cfg.schedule();
        for rec in &out.trace {
            assert_eq!(rec.lr, schedule.lr(rec.iteration));
        }
    }

    #[test]
    fn reconstruct_is_deterministic() {
        let model = tiny_model();
        let cfg = ReconConfig {
            i_max: 8,
            ..tiny_cfg()
        };
        let mut truth = VoxelImage::<f64>::zeros(model.grid);
        truth.values[model.grid.index(2, 2, 2)] = 1.0;
        let b = model.forward(&truth).unwrap();
        let a = gpair_reconstruct(&b, &model, &cfg, |_| {}).unwrap();
        let c = gpair_reconstruct(&b, &model, &cfg, |_| {}).unwrap();
        assert_eq!(a.image.values, c.image.values);
        for (ra, rc) in a.trace.iter().zip(&c.trace) {
            assert_eq!(ra.loss, rc.loss);
            assert_eq!(ra.lr, rc.lr);
        }
    }

    #[test]
    fn zero_data_stays_effectively_zero() {
        let model = tiny_model();
        let mut cfg = tiny_cfg();
        cfg.reg.lambda = 0.0;
        cfg.i_max = 10;
        let b = SignalSet::<f64>::zeros(model.array.len(), model.acoustic);
        let out = gpair_reconstruct(&b, &model, &cfg, |_| {}).unwrap();
        let peak = out.image.values.iter().fold(0.0f64, |m, &v| m.max(v));
        assert!(peak <= 1e-12, "zero data produced peak {peak}");
    }

    #[test]
    fn backprojection_init_starts_from_the_adjoint() {
        let model = tiny_model();
        // Zero learning rate freezes the latent, exposing the warm start.
        let cfg = ReconConfig {
            i_max: 1,
            init: InitMode::Backprojection,
            eta_max: 0.0,
            eta_min: 0.0,
            ..tiny_cfg()
        };
        let mut truth = VoxelImage::<f64>::zeros(model.grid);
        truth.values[model.grid.index(3, 2, 3)] = 1.0;
        let b = model.forward(&truth).unwrap();
        let out = gpair_reconstruct(&b, &model, &cfg, |_| {}).unwrap();
        let bp = model.adjoint(&b).unwrap();
        for (zv, bv) in out.latent.values.iter().zip(&bp.values) {
            assert_eq!(*zv, bv.max(0.0).sqrt());
        }
    }

    #[test]
    fn numerical_blowup_aborts_with_last_good_state() {
        let model = tiny_model();
        let cfg = ReconConfig {
            i_max: 50,
            eta_max: 1e200,
            eta_min: 1e199,
            ..tiny_cfg()
        };
        let mut truth = VoxelImage::<f64>::zeros(model.grid);
        truth.values[model.grid.index(3, 3, 3)] = 1.0;
        let b = model.forward(&truth).unwrap();
        match gpair_reconstruct(&b, &model, &cfg, |_| {}) {
            Err(ReconError::Aborted {
                iteration,
                error,
                last_good,
            }) => {
                assert!(iteration > 0, "first evaluation at z=0 is finite");
                assert!(matches!(error, GpairError::Numerical(_)), "got {error}");
                assert_eq!(last_good.trace.len(), iteration as usize);
                assert!(last_good.image.values.iter().all(|v| v.is_finite()));
            }
            other => panic!("expected an abort, got {other:?}"),
        }
    }

    #[test]
    fn setup_errors_are_reported_before_iterating() {
        let model = tiny_model();
        let bad_cfg = ReconConfig {
            i_max: 0,
            ..tiny_cfg()
        };
        let b = SignalSet::<f64>::zeros(model.array.len(), model.acoustic);
        assert!(matches!(
            gpair_reconstruct(&b, &model, &bad_cfg, |_| {}),
            Err(ReconError::Setup(_))
        ));
        let wrong = SignalSet::<f64>::zeros(3, model.acoustic);
        assert!(matches!(
            gpair_reconstruct(&wrong, &model, &tiny_cfg(), |_| {}),
            Err(ReconError::Setup(_))
        ));
    }

    #[test]
    fn single_pass_is_one_adjoint() {
        let model = tiny_model();
        let mut truth = VoxelImage::<f64>::zeros(model.grid);
        truth.values[model.grid.index(2, 3, 2)] = 1.0;
        let b = model.forward(&truth).unwrap();
        let sp = single_pass_reconstruct(&b, &model).unwrap();
        let adj = model.adjoint(&b).unwrap();
        assert_eq!(sp.values, adj.values);
    }
}
