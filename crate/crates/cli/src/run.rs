//! Command implementations. Every model-bearing command echoes the
//! resolved AssaParams before doing work; results meant for pipelines
//! (JSON, discrepancies) go to stdout.

use crate::{
    setup, AxisArg, BackprojectArgs, BenchArgs, Cli, Command, ConvertArgs, DottestArgs,
    MetricsArgs, PhantomArgs, Precision, ProjectArgs, ReconstructArgs, SimulateArgs,
};
use anyhow::{bail, Context, Result};
use gpair_core::{
    add_gaussian_noise, adjoint_dot_test, backproject, decimate, generate_phantom,
    gpair_reconstruct, max_projection, mse_psnr, oracle_forward, project_up, read_signals,
    read_volume, reference_free_metrics, scatter_convolve, single_pass_reconstruct, slice_extract,
    ssim3d, write_pgm, write_signals, write_volume, AnySignals, AnyVolume, Axis, DetectorArray,
    InitMode, IterationRecord, PhantomKind, PhantomSpec, Real, ReconConfig, ReconError, RegConfig,
    SignalSet, SystemModel, VoxelImage, VoxelMask,
};
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;
use std::time::Instant;

pub fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Phantom(args) => cmd_phantom(&cli, args),
        Command::Simulate(args) => match cli.precision {
            Precision::Single => cmd_simulate::<f32>(&cli, args),
            Precision::Double => cmd_simulate::<f64>(&cli, args),
        },
        Command::Backproject(args) => match cli.precision {
            Precision::Single => cmd_backproject::<f32>(&cli, args),
            Precision::Double => cmd_backproject::<f64>(&cli, args),
        },
        Command::Reconstruct(args) => match cli.precision {
            Precision::Single => cmd_reconstruct::<f32>(&cli, args),
            Precision::Double => cmd_reconstruct::<f64>(&cli, args),
        },
        Command::Metrics(args) => cmd_metrics(&cli, args),
        Command::Dottest(args) => match cli.precision {
            Precision::Single => cmd_dottest::<f32>(&cli, args),
            Precision::Double => cmd_dottest::<f64>(&cli, args),
        },
        Command::Bench(args) => match cli.precision {
            Precision::Single => cmd_bench::<f32>(&cli, args),
            Precision::Double => cmd_bench::<f64>(&cli, args),
        },
        Command::Project(args) => cmd_project(&cli, args),
        Command::Convert(args) => cmd_convert(&cli, args),
    }
}

fn store_volume<F: Real>(path: &Path, image: &VoxelImage<F>, precision: Precision) -> Result<()> {
    let volume = match precision {
        Precision::Single => AnyVolume::F32(image.cast()),
        Precision::Double => AnyVolume::F64(image.cast()),
    };
    write_volume(path, &volume).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_signals(path: &Path) -> Result<(AnySignals, DetectorArray)> {
    let (signals, positions) =
        read_signals(path).with_context(|| format!("reading {}", path.display()))?;
    let array = positions.ok_or_else(|| {
        anyhow::anyhow!(
            "{} carries no detector positions; re-simulate with this tool",
            path.display()
        )
    })?;
    Ok((signals, array))
}

fn signals_as<F: Real>(signals: AnySignals) -> SignalSet<F> {
    match signals {
        AnySignals::F32(s) => s.cast(),
        AnySignals::F64(s) => s.cast(),
    }
}

fn cmd_phantom(cli: &Cli, args: &PhantomArgs) -> Result<()> {
    let grid = setup::grid_from(&args.grid)?;
    let kind = match args.kind {
        crate::PhantomKindArg::Blobs => PhantomKind::Blobs { count: args.count },
        crate::PhantomKindArg::Tubes => PhantomKind::Tubes {
            branches: args.count,
        },
        crate::PhantomKindArg::Points => PhantomKind::PointGrid {
            per_axis: args.count,
        },
    };
    eprintln!(
        "phantom: kind = {kind:?}, seed = {}, grid = {:?} @ {} m",
        args.seed, grid.dims, grid.spacing
    );
    let image = generate_phantom(PhantomSpec::new(kind, args.seed), &grid)?;
    store_volume(&args.out, &image, cli.precision)?;
    eprintln!(
        "wrote {} ({} voxels, max {})",
        args.out.display(),
        grid.len(),
        image.max_value()
    );
    Ok(())
}

fn cmd_simulate<F: Real>(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let volume =
        read_volume(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let grid = *volume.grid();
    let array = setup::array_from(&args.array)?;
    let acoustic = setup::acoustic_from(&args.acoustic)?;

    let mut signals: SignalSet<F> = if args.oracle {
        // Direct enumeration of the continuous solution, always in f64.
        let model: SystemModel<f64> = setup::model_for(cli, grid, array.clone(), acoustic)?;
        let image = volume.clone().into_f64();
        if image.grid != model.grid {
            bail!("phantom grid does not match the model grid");
        }
        let t = Instant::now();
        let traces = oracle_forward(&image, &array, &acoustic, model.sigma)?;
        eprintln!("oracle forward: {:.2} s", t.elapsed().as_secs_f64());
        traces.cast()
    } else {
        let model: SystemModel<F> = setup::model_for(cli, grid, array.clone(), acoustic)?;
        let image: VoxelImage<F> = match &volume {
            AnyVolume::F32(v) => v.cast(),
            AnyVolume::F64(v) => v.cast(),
        };
        let t = Instant::now();
        let traces = model.forward(&image)?;
        eprintln!("operator forward: {:.2} s", t.elapsed().as_secs_f64());
        traces
    };

    if let Some(snr) = args.noise_snr {
        let std = add_gaussian_noise(&mut signals, snr, args.noise_seed)?;
        eprintln!(
            "noise: amplitude snr {snr}:1, std {std:.6e}, seed {}",
            args.noise_seed
        );
    }

    let stored = match F::DTYPE {
        gpair_core::Dtype::F32 => AnySignals::F32(signals.cast()),
        gpair_core::Dtype::F64 => AnySignals::F64(signals.cast()),
    };
    write_signals(&args.out, &stored, Some(&array))
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_backproject<F: Real>(cli: &Cli, args: &BackprojectArgs) -> Result<()> {
    let (stored, array) = load_signals(&args.input)?;
    let acoustic = stored.acoustic();
    let grid = setup::grid_from(&args.grid)?;
    let model: SystemModel<F> = setup::model_for(cli, grid, array, acoustic)?;
    let signals: SignalSet<F> = signals_as(stored);
    let t = Instant::now();
    let image = single_pass_reconstruct(&signals, &model)?;
    eprintln!("single-pass adjoint: {:.2} s", t.elapsed().as_secs_f64());
    store_volume(&args.out, &image, cli.precision)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn recon_config(args: &ReconstructArgs) -> Result<ReconConfig> {
    Ok(ReconConfig {
        i_max: args.iters,
        eta_max: args.eta_max,
        eta_min: args.eta_min,
        t_0: args.cawr_t0,
        t_mult: args.cawr_tmult,
        reg: RegConfig::new(args.lambda, args.beta, args.eps_reg)?,
        init: if args.init_backprojection {
            InitMode::Backprojection
        } else {
            InitMode::Zero
        },
        seed: args.seed,
        ..ReconConfig::default()
    })
}

fn cmd_reconstruct<F: Real>(cli: &Cli, args: &ReconstructArgs) -> Result<()> {
    let (stored, array) = load_signals(&args.input)?;
    let acoustic = stored.acoustic();
    let grid = setup::grid_from(&args.grid)?;
    let model: SystemModel<F> = setup::model_for(cli, grid, array, acoustic)?;
    let signals: SignalSet<F> = signals_as(stored);
    let cfg = recon_config(args)?;
    eprintln!(
        "recon: iters = {}, lambda = {:e}, beta = {}, eps_reg = {:e}, eta = [{}, {}], cawr = ({}, {}), init = {:?}, seed = {}",
        cfg.i_max, cfg.reg.lambda, cfg.reg.beta, cfg.reg.eps_reg, cfg.eta_min, cfg.eta_max,
        cfg.t_0, cfg.t_mult, cfg.init, cfg.seed
    );

    let mut records: Vec<IterationRecord> = Vec::with_capacity(cfg.i_max as usize);
    let t = Instant::now();
    let result = gpair_reconstruct(&signals, &model, &cfg, |rec| records.push(*rec));
    let wall = t.elapsed().as_secs_f64();

    if let Some(trace_path) = &args.trace {
        write_trace(trace_path, &records, cli.deterministic)
            .with_context(|| format!("writing {}", trace_path.display()))?;
    }

    match result {
        Ok(output) => {
            if let (Some(first), Some(last)) = (records.first(), records.last()) {
                eprintln!(
                    "loss {:.6e} -> {:.6e} over {} iterations, {:.2} s",
                    first.loss,
                    last.loss,
                    records.len(),
                    wall
                );
            }
            store_volume(&args.out, &output.image, cli.precision)?;
            eprintln!("wrote {}", args.out.display());
            Ok(())
        }
        Err(ReconError::Setup(err)) => Err(err.into()),
        Err(ReconError::Aborted {
            iteration,
            error,
            last_good,
        }) => {
            // Keep the partial result on disk for inspection, then fail.
            store_volume(&args.out, &last_good.image, cli.precision)?;
            bail!(
                "aborted at iteration {iteration}: {error}; last finite iterate saved to {}",
                args.out.display()
            );
        }
    }
}

fn write_trace(path: &Path, records: &[IterationRecord], deterministic: bool) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iter,loss,data_term,reg_term,lr,wall_ms")?;
    for rec in records {
        let wall_ms = if deterministic { 0.0 } else { rec.wall_ms };
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{wall_ms}",
            rec.iteration, rec.loss, rec.data_term, rec.reg_term, rec.lr
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_metrics(_cli: &Cli, args: &MetricsArgs) -> Result<()> {
    let x = read_volume(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?
        .into_f64();
    let reference = read_volume(&args.reference)
        .with_context(|| format!("reading {}", args.reference.display()))?
        .into_f64();
    eprintln!(
        "metrics: {} vs {} ({:?} voxels)",
        args.input.display(),
        args.reference.display(),
        x.grid.dims
    );

    let (mse, psnr) = mse_psnr(&x, &reference)?;
    let ssim = ssim3d(&normalized(&x), &normalized(&reference))?;

    let mut fields: Vec<(&str, f64)> = vec![("mse", mse), ("psnr_db", psnr), ("ssim", ssim)];
    if let Some(frac) = args.signal_threshold {
        let signal = VoxelMask::threshold(&reference, frac)?;
        let background = signal.complement();
        let (cnr, snr, bg_std, sharpness) = reference_free_metrics(&x, &signal, &background)?;
        fields.push(("cnr", cnr));
        fields.push(("snr", snr));
        fields.push(("bg_std", bg_std));
        fields.push(("sharpness", sharpness));
    }

    if args.json {
        let mut map = serde_json::Map::new();
        for (key, value) in &fields {
            map.insert(
                (*key).to_string(),
                serde_json::Number::from_f64(*value)
                    .map(serde_json::Value::Number)
                    .unwrap_or(serde_json::Value::Null),
            );
        }
        println!("{}", serde_json::Value::Object(map));
    } else {
        for (key, value) in &fields {
            println!("{key} = {value}");
        }
    }
    Ok(())
}

fn normalized(x: &VoxelImage<f64>) -> VoxelImage<f64> {
    let mut out = x.clone();
    let peak = out.max_value();
    if peak > 0.0 {
        for v in &mut out.values {
            *v /= peak;
        }
    }
    out
}

fn cmd_dottest<F: Real>(cli: &Cli, args: &DottestArgs) -> Result<()> {
    let grid = setup::grid_from(&args.grid)?;
    let array = setup::array_from(&args.array)?;
    let acoustic = setup::acoustic_from(&args.acoustic)?;
    let model: SystemModel<F> = setup::model_for(cli, grid, array, acoustic)?;
    let report = adjoint_dot_test(&model, args.trials as usize, args.seed)?;
    for (i, trial) in report.trials.iter().enumerate() {
        eprintln!(
            "trial {i}: <Ax,y> = {:+.9e}, <x,A'y> = {:+.9e}, rel = {:.3e}",
            trial.lhs, trial.rhs, trial.rel_discrepancy
        );
    }
    println!(
        "max relative discrepancy: {:.6e}",
        report.max_rel_discrepancy
    );
    Ok(())
}

fn cmd_bench<F: Real>(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let grid = setup::grid_from(&args.grid)?;
    let array = setup::array_from(&args.array)?;
    let acoustic = setup::acoustic_from(&args.acoustic)?;
    let model: SystemModel<F> = setup::model_for(cli, grid, array, acoustic)?;

    let phantom = generate_phantom(PhantomSpec::new(PhantomKind::Blobs { count: 5 }, 1), &grid)?;
    let image: VoxelImage<F> = phantom.cast();
    let reps = args.reps.max(1);

    let time = |label: &str, mut f: Box<dyn FnMut() -> Result<()> + '_>| -> Result<f64> {
        let t = Instant::now();
        for _ in 0..reps {
            f()?;
        }
        let per = t.elapsed().as_secs_f64() / reps as f64;
        println!("{label}: {:.3} ms", per * 1e3);
        Ok(per)
    };

    time(
        "project_up",
        Box::new(|| {
            project_up(&image, &model.tof)?;
            Ok(())
        }),
    )?;
    let up = project_up(&image, &model.tof)?;
    time(
        "convolve",
        Box::new(|| {
            scatter_convolve(&up, &model.taps);
            Ok(())
        }),
    )?;
    let conv = scatter_convolve(&up, &model.taps);
    time(
        "decimate",
        Box::new(|| {
            decimate(&conv, &model.assa, &model.acoustic)?;
            Ok(())
        }),
    )?;
    let forward_per = time(
        "forward (all stages)",
        Box::new(|| {
            model.forward(&image)?;
            Ok(())
        }),
    )?;
    let traces = model.forward(&image)?;
    time(
        "adjoint (all stages)",
        Box::new(|| {
            model.adjoint(&traces)?;
            Ok(())
        }),
    )?;
    time(
        "backproject",
        Box::new(|| {
            backproject(&conv, &model.tof, &grid)?;
            Ok(())
        }),
    )?;

    let throughput = grid.len() as f64 * model.array.positions.len() as f64 / forward_per;
    println!("forward throughput: {throughput:.3e} voxel-detector pairs/s");
    Ok(())
}

fn cmd_project(_cli: &Cli, args: &ProjectArgs) -> Result<()> {
    let volume = read_volume(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?
        .into_f64();
    let axis = match args.axis {
        AxisArg::X => Axis::X,
        AxisArg::Y => Axis::Y,
        AxisArg::Z => Axis::Z,
    };
    let plane = match args.index {
        Some(index) => slice_extract(&volume, axis, index)?,
        None => max_projection(&volume, axis),
    };
    eprintln!(
        "project: axis = {:?}, mode = {}, image = {} x {}",
        axis,
        if args.index.is_some() { "slice" } else { "map" },
        plane.rows,
        plane.cols
    );
    write_pgm(&args.out, &plane).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_convert(_cli: &Cli, args: &ConvertArgs) -> Result<()> {
    let volume =
        read_volume(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    gpair_core::export_raw_with_sidecar(&args.out, &volume)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "wrote {} and {}.txt (stored dtype preserved)",
        args.out.display(),
        args.out.display()
    );
    Ok(())
}
