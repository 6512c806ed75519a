use std::path::Path;

use fdl_core::data::{
    estimate_variance_profile, gen_dots, gen_mixture1d, gen_power_law_gaussian, intensity_profile,
    spectral_magnitude_profile, Dataset, DatasetMeta,
};
use fdl_core::denoise::{self, Denoiser, LinearGaussianDenoiser, MlpDenoiser, TrainConfig};
use fdl_core::detect::{run_detection, Band, DetectionConfig};
use fdl_core::gaussianity::{counterexample_tv, gaussian_violation_report, MixtureConfig};
use fdl_core::io::{encode_checkpoint, encode_pgm, encode_tensor, load_checkpoint, load_tensor, Checkpoint, Tensor};
use fdl_core::process::{empirical_snr, snr_heatmap, BinVariance, ForwardProcess, ProcessKind};
use fdl_core::rng::{seeded, stream};
use fdl_core::sample::{ddim_sample, inference_grid, step_multipliers, SamplerConfig};
use fdl_core::schedule::{
    calibrate_ddpm_to_equal, calibrate_to_ddpm, make_schedule, mean_snr, MixingSchedule, VarianceProfile,
};
use fdl_core::spectral::{frequency_order, Shape};

use crate::config::{Calibrate, Process, RunConfig};
use crate::output::{manifest_beside, manifest_in, Csv, Run};
use crate::{
    BandSide, CliError, CounterexampleArgs, DetectArgs, EstimateArgs, ForwardSimArgs, GenDataArgs, Generator,
    ReportArgs, SampleArgs, ScheduleArgs, TrainArgs, ViolationArgs,
};

type Out<T = std::path::PathBuf> = Result<T, CliError>;

fn load_dataset(path: &Path) -> Out<Dataset<f64>> {
    let items = load_tensor(path)?.unstack()?;
    Ok(Dataset::new(items, DatasetMeta::default())?)
}

fn base_schedule(cfg: &RunConfig) -> Out<MixingSchedule<f64>> {
    Ok(make_schedule(cfg.schedule.into(), cfg.steps)?)
}

/// Applies `--calibrate`, which only makes sense for the matching process.
fn schedule_for(cfg: &RunConfig, c: &VarianceProfile<f64>) -> Out<MixingSchedule<f64>> {
    let base = base_schedule(cfg)?;
    match (cfg.calibrate, cfg.process) {
        (Calibrate::None, _) => Ok(base),
        (Calibrate::ToDdpm, Process::Equalsnr) => Ok(calibrate_to_ddpm(&base, c)?),
        (Calibrate::ToEqualsnr, Process::Ddpm) => Ok(calibrate_ddpm_to_equal(&base, c)?),
        (Calibrate::ToDdpm, _) => Err(CliError::Config("--calibrate to-ddpm needs --process equalsnr".into())),
        (Calibrate::ToEqualsnr, _) => Err(CliError::Config("--calibrate to-equalsnr needs --process ddpm".into())),
    }
}

fn process_for(cfg: &RunConfig, c: &VarianceProfile<f64>) -> Out<ForwardProcess<f64>> {
    Ok(ForwardProcess::new(cfg.process.into(), schedule_for(cfg, c)?, c.clone())?)
}

fn fmt(v: f64) -> String {
    v.to_string()
}

pub fn gen_data(a: &GenDataArgs, env_seed: Option<&str>) -> Out {
    let cfg = RunConfig::resolve(&a.common, env_seed)?;
    let mut rng = seeded(cfg.seed);
    let ds = match a.generator {
        Generator::Dots => gen_dots::<f64, _>(a.n, a.height, a.width, a.min_count, a.max_count, &mut rng)?,
        Generator::PowerLaw => {
            let shape = Shape::new(&[a.height, a.width])?;
            gen_power_law_gaussian(a.n, &shape, a.amplitude, a.exponent, &mut rng)?.0
        }
        Generator::Mixture1d => gen_mixture1d(a.n, a.delta, &mut rng)?,
    };
    let path = cfg.out_or("data.ften");
    let mut run = Run::new("gen-data", &cfg);
    run.input("generator", ds.meta().generator.clone());
    run.input("n", a.n);
    for (k, v) in &ds.meta().params {
        run.input(k, v);
    }
    run.write(&path, &encode_tensor(&Tensor::stack(ds.items())?)?)?;
    run.finish(&manifest_beside(&path))
}

pub fn estimate_c(a: &EstimateArgs, env_seed: Option<&str>) -> Out {
    let cfg = RunConfig::resolve(&a.common, env_seed)?;
    let data_path = cfg.require_data()?;
    let ds = load_dataset(data_path)?;
    let c = estimate_variance_profile(&ds)?;
    let order = frequency_order(ds.shape());
    let mut csv = Csv::new(&["rank", "bin", "distance", "variance"]);
    for (rank, &j) in order.ranks().iter().enumerate() {
        csv.row(&[rank.to_string(), j.to_string(), order.distances()[j].to_string(), fmt(c.values()[j])]);
    }
    let path = cfg.out_or("c.csv");
    let mut run = Run::new("estimate-c", &cfg);
    run.input_file("data", data_path)?;
    run.write(&path, &csv.into_bytes())?;
    run.finish(&manifest_beside(&path))
}

pub fn schedule(a: &ScheduleArgs, env_seed: Option<&str>) -> Out {
    let mut cfg = RunConfig::resolve(&a.common, env_seed)?;
    if let Some(kind) = a.kind {
        cfg.schedule = kind;
    }
    let mut run = Run::new("schedule", &cfg);
    // without data the mean SNR is reported for a unit profile
    let c = match &cfg.data {
        Some(p) => {
            run.input_file("data", p)?;
            estimate_variance_profile(&load_dataset(p)?)?
        }
        None if cfg.calibrate != Calibrate::None => {
            return Err(CliError::Config("calibration needs --data for the variance profile".into()))
        }
        None => VarianceProfile::new(vec![1.0], Shape::d1(1))?,
    };
    let p = process_for(&cfg, &c)?;
    let mut csv = Csv::new(&["t", "alphabar", "mean_snr_db"]);
    for t in 1..=cfg.steps {
        let (ab, _) = p.schedule().at(t)?;
        let m = mean_snr(&p.snr(t)?)?;
        csv.row(&[t.to_string(), fmt(ab), fmt(10.0 * m.log10())]);
    }
    let path = cfg.out_or("schedule.csv");
    run.write(&path, &csv.into_bytes())?;
    run.finish(&manifest_beside(&path))
}

fn timesteps(steps: usize, every: usize) -> Vec<usize> {
    let mut ts: Vec<usize> = (1..=steps).step_by(every).collect();
    if ts.last() != Some(&steps) {
        ts.push(steps);
    }
    ts
}

pub fn forward_sim(a: &ForwardSimArgs, env_seed: Option<&str>) -> Out {
    let cfg = RunConfig::resolve(&a.common, env_seed)?;
    let data_path = cfg.require_data()?;
    let ds = load_dataset(data_path)?;
    let c = estimate_variance_profile(&ds)?;
    let p = process_for(&cfg, &c)?;
    let every = a.every.unwrap_or((cfg.steps / 100).max(1));
    if every == 0 {
        return Err(CliError::Config("--every must be at least 1".into()));
    }
    let ts = timesteps(cfg.steps, every);
    let mut csv = Csv::new(&["t", "rank", "snr_db"]);
    if a.empirical {
        let spectra = ds.spectra()?;
        let order = frequency_order(ds.shape());
        for &t in &ts {
            let snr = empirical_snr(&spectra, &p, t, &mut stream(cfg.seed, t as u64))?;
            let db = snr.to_db();
            for (rank, &j) in order.ranks().iter().enumerate() {
                csv.row(&[t.to_string(), rank.to_string(), fmt(db[j])]);
            }
        }
    } else {
        for (t, rank, db) in snr_heatmap(&p, &ts)? {
            csv.row(&[t.to_string(), rank.to_string(), fmt(db)]);
        }
    }
    let path = cfg.out_or("snr_heatmap.csv");
    let mut run = Run::new("forward-sim", &cfg);
    run.input_file("data", data_path)?;
    run.input("every", every);
    run.input("empirical", a.empirical);
    run.write(&path, &csv.into_bytes())?;
    run.finish(&manifest_beside(&path))
}

fn profile_tensor(c: &VarianceProfile<f64>) -> Tensor {
    Tensor::Real {
        dims: c.shape().dims().to_vec(),
        data: c.values().to_vec(),
    }
}

fn profile_from_tensor(t: &Tensor) -> Out<VarianceProfile<f64>> {
    match t {
        Tensor::Real { dims, data } => Ok(VarianceProfile::new(data.clone(), Shape::new(dims)?)?),
        Tensor::Complex { .. } => Err(CliError::Runtime("variance profile must be a real tensor".into())),
    }
}

pub fn train(a: &TrainArgs, env_seed: Option<&str>) -> Out {
    let cfg = RunConfig::resolve(&a.common, env_seed)?;
    let data_path = cfg.require_data()?;
    let ds = load_dataset(data_path)?;
    let c = estimate_variance_profile(&ds)?;
    let p = process_for(&cfg, &c)?;
    let mut model = MlpDenoiser::new(ds.shape().clone(), a.hidden, cfg.steps, &mut stream(cfg.seed, 0))?;
    let tc = TrainConfig {
        steps: a.iterations,
        learning_rate: a.lr,
        batch_size: a.batch,
        seed: cfg.seed,
        momentum: a.momentum,
    };
    let trace = denoise::train(&mut model, ds.items(), &p, &tc)?;
    let mut csv = Csv::new(&["step", "loss"]);
    for (i, l) in trace.iter().enumerate() {
        csv.row(&[i.to_string(), fmt(*l)]);
    }
    let dir = cfg.out_or("train");
    let mut run = Run::new("train", &cfg);
    run.input_file("data", data_path)?;
    run.input("iterations", a.iterations);
    run.input("lr", a.lr);
    run.input("batch", a.batch);
    run.input("momentum", a.momentum);
    run.input("hidden", a.hidden);
    let ckpt = Checkpoint {
        kind: p.kind(),
        model,
    };
    run.write(&dir.join("model.fdlm"), &encode_checkpoint(&ckpt))?;
    run.write(&dir.join("profile.ften"), &encode_tensor(&profile_tensor(&c))?)?;
    run.write(&dir.join("loss.csv"), &csv.into_bytes())?;
    run.finish(&manifest_in(&dir))
}

fn process_name(kind: ProcessKind<f64>) -> Process {
    match kind {
        ProcessKind::Ddpm => Process::Ddpm,
        ProcessKind::EqualSnr { .. } => Process::Equalsnr,
        ProcessKind::FlippedSnr => Process::Flippedsnr,
    }
}

pub fn sample(a: &SampleArgs, env_seed: Option<&str>) -> Out {
    let mut cfg = RunConfig::resolve(&a.common, env_seed)?;
    let mut run_inputs: Vec<(String, String)> = Vec::new();
    let (denoiser, p): (Box<dyn Denoiser<f64>>, ForwardProcess<f64>) = match (&a.model, a.analytic) {
        (Some(dir), false) => {
            let ckpt_path = dir.join("model.fdlm");
            let ckpt = load_checkpoint(&ckpt_path)?;
            let c = profile_from_tensor(&load_tensor(&dir.join("profile.ften"))?)?;
            // the checkpoint fixes T and the process kind
            cfg.steps = ckpt.model.steps();
            cfg.process = process_name(ckpt.kind);
            let sched = schedule_for(&cfg, &c)?;
            let p = ForwardProcess::new(ckpt.kind, sched, c)?;
            run_inputs.push(("model".into(), ckpt_path.display().to_string()));
            (Box::new(ckpt.model), p)
        }
        (None, true) => {
            let data_path = cfg.require_data()?;
            let c = estimate_variance_profile(&load_dataset(data_path)?)?;
            let p = process_for(&cfg, &c)?;
            run_inputs.push(("denoiser".into(), "analytic".into()));
            (Box::new(LinearGaussianDenoiser::new(p.clone())), p)
        }
        _ => return Err(CliError::Config("sample needs exactly one of --model or --analytic".into())),
    };
    if a.count == 0 {
        return Err(CliError::Config("--count must be at least 1".into()));
    }
    let t_inference = a.t_inference.unwrap_or(cfg.steps);
    let scfg = SamplerConfig {
        t_inference,
        seed: cfg.seed,
        record_trajectory: a.trajectory,
    };
    let d = p.shape().len();
    let mut samples = Vec::with_capacity(a.count);
    let mut per_step: Vec<(usize, BinVariance)> = Vec::new();
    for i in 0..a.count {
        let (x, traj) = ddim_sample(denoiser.as_ref(), &p, &scfg, &mut stream(cfg.seed, i as u64))?;
        if let Some(traj) = traj {
            if per_step.is_empty() {
                per_step = traj.states.iter().map(|s| (s.t, BinVariance::new(d))).collect();
            }
            for ((_, acc), s) in per_step.iter_mut().zip(&traj.states) {
                acc.push(&s.y);
            }
        }
        samples.push(x);
    }

    let dir = cfg.out_or("samples");
    let mut run = Run::new("sample", &cfg);
    if let Some(path) = &cfg.data {
        run.input_file("data", path)?;
    }
    for (k, v) in run_inputs {
        run.input(&k, v);
    }
    run.input("count", a.count);
    run.input("t_inference", t_inference);
    run.write(&dir.join("samples.ften"), &encode_tensor(&Tensor::stack(&samples)?)?)?;
    for (i, x) in samples.iter().take(a.pgm).enumerate() {
        if x.shape().ndim() == 2 {
            run.write(&dir.join(format!("sample_{i:04}.pgm")), &encode_pgm(x)?)?;
        }
    }
    if a.trajectory {
        let order = frequency_order(p.shape());
        let mut csv = Csv::new(&["t", "rank", "variance"]);
        for (t, acc) in &per_step {
            let v = acc.variance();
            for (rank, &j) in order.ranks().iter().enumerate() {
                csv.row(&[t.to_string(), rank.to_string(), fmt(v[j])]);
            }
        }
        run.write(&dir.join("trajectory.csv"), &csv.into_bytes())?;
    }
    run.finish(&manifest_in(&dir))
}

pub fn violation(a: &ViolationArgs, env_seed: Option<&str>) -> Out {
    let cfg = RunConfig::resolve(&a.common, env_seed)?;
    let data_path = cfg.require_data()?;
    let ds = load_dataset(data_path)?;
    let c = estimate_variance_profile(&ds)?;
    let p = process_for(&cfg, &c)?;
    let d = ds.shape().len();
    let ranks = if a.ranks.is_empty() {
        if d < 9 {
            return Err(CliError::Config("default ranks need at least 9 frequencies; pass --ranks".into()));
        }
        vec![1, 2, 3, 4, d - 4, d - 3, d - 2, d - 1]
    } else {
        a.ranks.clone()
    };
    let rows = gaussian_violation_report(ds.items(), &p, a.t, &ranks, &mut seeded(cfg.seed))?;
    let mut csv = Csv::new(&["process", "t", "rank", "kl"]);
    for r in rows {
        csv.row(&[p.kind().name().to_string(), a.t.to_string(), r.rank.to_string(), fmt(r.kl)]);
    }
    let path = cfg.out_or("violation.csv");
    let mut run = Run::new("diagnose violation", &cfg);
    run.input_file("data", data_path)?;
    run.input("t", a.t);
    run.input(
        "ranks",
        ranks.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" "),
    );
    run.write(&path, &csv.into_bytes())?;
    run.finish(&manifest_beside(&path))
}

pub fn counterexample(a: &CounterexampleArgs, env_seed: Option<&str>) -> Out {
    let cfg = RunConfig::resolve(&a.common, env_seed)?;
    let fits = counterexample_tv(&a.delta, a.noise_var, a.y)?;
    let mut csv = Csv::new(&["delta", "tv", "mu", "sigma"]);
    for (delta, f) in &fits {
        csv.row(&[fmt(*delta), fmt(f.tv), fmt(f.mu), fmt(f.sigma)]);
    }
    let path = cfg.out_or("counterexample.csv");
    let mut run = Run::new("diagnose counterexample", &cfg);
    run.input("noise_var", a.noise_var);
    run.input("y", a.y);
    run.write(&path, &csv.into_bytes())?;
    if let Some(dir) = &a.density_dir {
        for &delta in &a.delta {
            let post = MixtureConfig::new(delta, a.noise_var)?.posterior(a.y)?;
            let mut dc = Csv::new(&["x", "mass"]);
            for (i, m) in post.mass().iter().enumerate() {
                dc.row(&[fmt(post.x(i)), fmt(*m)]);
            }
            run.write(&dir.join(format!("posterior_delta_{delta}.csv")), &dc.into_bytes())?;
        }
    }
    run.finish(&manifest_beside(&path))
}

pub fn detect(a: &DetectArgs, env_seed: Option<&str>) -> Out {
    let cfg = RunConfig::resolve(&a.common, env_seed)?;
    let real_path = match &a.real {
        Some(p) => p.as_path(),
        None => cfg.require_data()?,
    };
    for p in [real_path, a.generated.as_path()] {
        if !p.is_file() {
            return Err(CliError::Config(format!("{} does not exist", p.display())));
        }
    }
    let real = load_dataset(real_path)?;
    let generated = load_dataset(&a.generated)?;
    let bands: Vec<Band> = a
        .bands
        .iter()
        .map(|&f| match a.band_kind {
            BandSide::High => Band::high(f),
            BandSide::Low => Band::low(f),
        })
        .collect();
    let dcfg = DetectionConfig {
        splits: a.splits,
        permutations: a.permutations,
        seed: cfg.seed,
    };
    let reports = run_detection(real.items(), generated.items(), &bands, &dcfg)?;
    let mut report = Csv::new(&["band", "split", "p_value", "accuracy"]);
    let mut summary = Csv::new(&["band", "mean_acc", "tp05", "tp01"]);
    for r in &reports {
        let band = fmt(r.band.fraction);
        for s in &r.splits {
            report.row(&[band.clone(), s.split.to_string(), fmt(s.p_value), fmt(s.accuracy)]);
        }
        summary.row(&[band, fmt(r.mean_accuracy), fmt(r.tp_rate_05), fmt(r.tp_rate_01)]);
    }
    let dir = cfg.out_or("detect");
    let mut run = Run::new("detect", &cfg);
    run.input_file("real", real_path)?;
    run.input_file("generated", &a.generated)?;
    run.input("band_kind", format!("{:?}", a.band_kind).to_lowercase());
    run.input("splits", a.splits);
    run.input("permutations", a.permutations);
    run.write(&dir.join("report.csv"), &report.into_bytes())?;
    run.write(&dir.join("summary.csv"), &summary.into_bytes())?;
    run.finish(&manifest_in(&dir))
}

fn profile_tables(ds: &Dataset<f64>) -> Out<(Csv, Csv)> {
    let mag = spectral_magnitude_profile(ds, None)?;
    let mut spectral = Csv::new(&["rank", "mean_db", "std_db"]);
    for ((r, m), s) in mag.ranks.iter().zip(&mag.mean_db).zip(&mag.std_db) {
        spectral.row(&[r.to_string(), fmt(*m), fmt(*s)]);
    }
    let ip = intensity_profile(ds);
    let mut intensity = Csv::new(&["position", "mean", "ci_low", "ci_high"]);
    for i in 0..ip.mean.len() {
        intensity.row(&[i.to_string(), fmt(ip.mean[i]), fmt(ip.ci_low[i]), fmt(ip.ci_high[i])]);
    }
    Ok((spectral, intensity))
}

pub fn report(a: &ReportArgs, env_seed: Option<&str>) -> Out {
    let cfg = RunConfig::resolve(&a.common, env_seed)?;
    let data_path = cfg.require_data()?;
    let ds = load_dataset(data_path)?;
    let c = estimate_variance_profile(&ds)?;
    let p = process_for(&cfg, &c)?;
    let dir = cfg.out_or("report");
    let mut run = Run::new("report", &cfg);
    run.input_file("data", data_path)?;

    let (spectral, intensity) = profile_tables(&ds)?;
    run.write(&dir.join("spectral_profile.csv"), &spectral.into_bytes())?;
    run.write(&dir.join("intensity_profile.csv"), &intensity.into_bytes())?;
    if let Some(g) = &a.generated {
        if !g.is_file() {
            return Err(CliError::Config(format!("{} does not exist", g.display())));
        }
        run.input_file("generated", g)?;
        let (spectral, intensity) = profile_tables(&load_dataset(g)?)?;
        run.write(&dir.join("generated_spectral_profile.csv"), &spectral.into_bytes())?;
        run.write(&dir.join("generated_intensity_profile.csv"), &intensity.into_bytes())?;
    }

    // per-bin DDIM variance under the exact linear denoiser, from v_T = Σ
    let t_inference = a.t_inference.unwrap_or(cfg.steps);
    run.input("t_inference", t_inference);
    let grid = inference_grid(p.steps(), t_inference)?;
    let order = frequency_order(p.shape());
    let mut v = p.sigma().to_vec();
    let mut csv = Csv::new(&["t", "rank", "variance"]);
    let emit = |t: usize, v: &[f64], csv: &mut Csv| {
        for (rank, &j) in order.ranks().iter().enumerate() {
            csv.row(&[t.to_string(), rank.to_string(), fmt(v[j])]);
        }
    };
    emit(p.steps(), &v, &mut csv);
    for k in (0..t_inference).rev() {
        let m = step_multipliers(
            p.schedule().at(grid[k + 1])?,
            p.schedule().at(grid[k])?,
            c.values(),
            p.sigma(),
        );
        for (vi, ai) in v.iter_mut().zip(m) {
            *vi *= ai * ai;
        }
        emit(grid[k], &v, &mut csv);
    }
    run.write(&dir.join("variance_trajectory.csv"), &csv.into_bytes())?;
    run.finish(&manifest_in(&dir))
}
