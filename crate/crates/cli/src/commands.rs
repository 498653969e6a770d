use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use msdnn::data::{
    load_manifest, read_manifest, read_mask, read_pnm, read_rgb, resize_bilinear, synth_dataset, write_pgm, write_pnm,
};
use msdnn::experiment::{ablation_csv, expected_ordering, run_ablation};
use msdnn::metrics::{evaluate_dataset, pr_curve_csv, GroundTruth, SaliencyMap};
use msdnn::model::load;
use msdnn::train::{loss_log_csv, train_loop, LogRow, LrStep};
use msdnn::validation::{run_suite, Kernel, SuiteConfig};
use msdnn::{MetricsConfig, MsdnnModel, NetworkConfig, Sample, Tensor, TrainConfig, TrainOutputs};

use crate::record::*;
use crate::svg::pr_curve_svg;
use crate::{usage, AblateArgs, DataArgs, EvalArgs, GradcheckArgs, NetworkArgs, OptimArgs, Precision, PredictArgs, SynthArgs, TrainArgs};

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn default_network() -> NetworkConfig {
    NetworkConfig::default()
}

/// Flags applied over a base configuration; channel-dependent sizes are
/// recomputed.
fn apply_network(mut cfg: NetworkConfig, a: &NetworkArgs) -> Result<NetworkConfig> {
    if let Some(s) = a.size {
        cfg.input_size = s;
    }
    if let Some(s) = a.scale {
        cfg.scale_factor = s;
    }
    if let Some(t) = a.timesteps {
        cfg.timesteps = t;
    }
    if let Some(scales) = &a.scales {
        cfg = cfg.with_scales(scales);
    }
    if let Some(l) = a.lambda {
        cfg.deep_supervision_weight = l;
    }
    if cfg.input_size.is_multiple_of(16) {
        cfg.fc_nodes = cfg.expected_fc_nodes();
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn apply_optim(mut cfg: TrainConfig, a: &OptimArgs, lambda: f64) -> Result<TrainConfig> {
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => { $(if let Some(v) = a.$flag { cfg.$field = v; })* };
    }
    set!(iters => max_iterations, lr => learning_rate, momentum => momentum, weight_decay => weight_decay,
         batch => batch_size, seed => seed, checkpoint_every => checkpoint_every, warmup => warmup_iterations);
    if a.target_loss.is_some() {
        cfg.target_loss = a.target_loss;
    }
    if let (Some(every), Some(gamma)) = (a.lr_step_every, a.lr_gamma) {
        cfg.lr_step = Some(LrStep { every, gamma });
    }
    cfg.deep_supervision_weight = lambda;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn data_source(a: &DataArgs, base: Option<DataSource>, seed: u64) -> Result<DataSource> {
    match (a.synthetic, &a.manifest, base) {
        (Some(count), _, _) => Ok(DataSource::Synthetic { count, seed }),
        (None, Some(path), _) => Ok(DataSource::Manifest { path: path.clone() }),
        (None, None, Some(DataSource::Synthetic { count, .. })) => Ok(DataSource::Synthetic { count, seed }),
        (None, None, Some(base)) => Ok(base),
        (None, None, None) => Err(usage("no training data: pass --synthetic N or --manifest PATH")),
    }
}

fn load_data(src: &DataSource, size: usize) -> Result<Vec<Sample>> {
    let samples = match src {
        DataSource::Synthetic { count, seed } => {
            if *count == 0 {
                return Err(usage("--synthetic needs at least one sample"));
            }
            synth_dataset(*count, size, *seed)?
        }
        DataSource::Manifest { path } => load_manifest(path, size)?,
    };
    if samples.is_empty() {
        bail!("the dataset is empty");
    }
    Ok(samples)
}

fn progress(every: usize) -> Box<dyn FnMut(&LogRow)> {
    Box::new(move |r: &LogRow| {
        if every > 0 && r.iteration.is_multiple_of(every) {
            info!(
                "iter {:>6}  loss {:.5}  final {:.5}  aux {:.5}  {:.1}s",
                r.iteration, r.loss, r.final_loss, r.aux_loss, r.seconds
            );
        }
    })
}

pub fn train(a: TrainArgs) -> Result<ExitCode> {
    let base = match &a.config {
        Some(p) => Some(load_for(p, "train", |r| match r {
            RunRecord::Train(t) => Some(t),
            _ => None,
        })?),
        None => None,
    };
    let network = apply_network(base.as_ref().map_or_else(default_network, |b| b.network.clone()), &a.network)?;
    let train = apply_optim(
        base.as_ref().map_or_else(TrainConfig::default, |b| b.train.clone()),
        &a.optim,
        network.deep_supervision_weight,
    )?;
    let data = data_source(&a.data, base.as_ref().map(|b| b.data.clone()), train.seed)?;
    let out = a.out.clone().or(base.map(|b| b.out)).unwrap_or_else(|| PathBuf::from("msdnn-train"));
    let record = TrainRecord { network, train, data, out };
    RunRecord::Train(record.clone()).write(&record.out)?;

    let samples = load_data(&record.data, record.network.input_size)?;
    let mut model = MsdnnModel::<f64>::init(record.network.clone(), record.train.seed)?;
    info!(
        "training {} parameters on {} samples for up to {} iterations",
        model.num_parameters(),
        samples.len(),
        record.train.max_iterations
    );
    let outputs = TrainOutputs {
        checkpoint_dir: Some(record.out.join("checkpoints")),
        on_iteration: Some(progress(a.log_every)),
    };
    fs::create_dir_all(record.out.join("checkpoints"))?;
    let log = train_loop(&mut model, &samples, &record.train, outputs)?;
    write_file(&record.out.join("loss.csv"), loss_log_csv(&log))?;
    if let Some(last) = log.last() {
        info!("done after {} iterations: final-map loss {:.5}", log.len(), last.final_loss);
    }
    Ok(ExitCode::SUCCESS)
}

fn is_pnm(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "ppm" | "pnm"))
}

fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && is_pnm(f))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn stem(p: &Path) -> Result<String> {
    p.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .with_context(|| format!("{} has no usable file name", p.display()))
}

/// `[1, S, S]` map back at the original `h × w`.
fn to_original(map: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let s = map.shape()[map.shape().len() - 1];
    let plane = map.reshape(&[1, s, s])?;
    Ok(resize_bilinear(&plane, h, w)?.map(|v| v.clamp(0.0, 1.0)))
}

pub fn predict(a: PredictArgs) -> Result<ExitCode> {
    let base = match &a.config {
        Some(p) => Some(load_for(p, "predict", |r| match r {
            RunRecord::Predict(t) => Some(t),
            _ => None,
        })?),
        None => None,
    };
    let checkpoint = a
        .checkpoint
        .clone()
        .or_else(|| base.as_ref().map(|b| b.checkpoint.clone()))
        .ok_or_else(|| usage("--checkpoint is required"))?;
    let inputs = if a.inputs.is_empty() { base.as_ref().map(|b| b.inputs.clone()).unwrap_or_default() } else { a.inputs.clone() };
    if inputs.is_empty() {
        return Err(usage("no inputs: pass --input FILE_OR_DIR"));
    }
    let record = PredictRecord {
        checkpoint,
        inputs,
        all_scales: a.all_scales || base.as_ref().is_some_and(|b| b.all_scales),
        out: a.out.clone().or(base.map(|b| b.out)).unwrap_or_else(|| PathBuf::from("msdnn-predict")),
    };
    RunRecord::Predict(record.clone()).write(&record.out)?;

    let model = load(&record.checkpoint).with_context(|| format!("loading checkpoint {}", record.checkpoint.display()))?;
    let size = model.config().input_size;
    let files = expand_inputs(&record.inputs)?;
    if files.is_empty() {
        bail!("no .ppm/.pgm images found in the inputs");
    }
    for f in &files {
        let id = stem(f)?;
        let image = read_rgb(f).with_context(|| format!("reading {}", f.display()))?;
        let (h, w) = (image.shape()[1], image.shape()[2]);
        let x = resize_bilinear(&image, size, size)?.into_reshaped(&[1, 3, size, size])?;
        let trace = model.forward(&x)?;
        write_pgm(&to_original(trace.final_map(), h, w)?, record.out.join(format!("{id}.pgm")))?;
        if record.all_scales {
            for &s in trace.enabled_scales() {
                let m = trace.head_map(s).expect("enabled head");
                write_pgm(&to_original(m, h, w)?, record.out.join(format!("{id}_sm{s}.pgm")))?;
            }
        }
    }
    info!("wrote maps for {} images to {}", files.len(), record.out.display());
    Ok(ExitCode::SUCCESS)
}

fn pnm_files_by_id(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for f in expand_inputs(&[dir.to_path_buf()])? {
        out.insert(stem(&f)?, f);
    }
    Ok(out)
}

pub fn eval(a: EvalArgs) -> Result<ExitCode> {
    let base = match &a.config {
        Some(p) => Some(load_for(p, "eval", |r| match r {
            RunRecord::Eval(t) => Some(t),
            _ => None,
        })?),
        None => None,
    };
    let predictions = a
        .pred
        .clone()
        .or_else(|| base.as_ref().map(|b| b.predictions.clone()))
        .ok_or_else(|| usage("--pred DIR is required"))?;
    let ground_truth = match (&a.gt, &a.manifest, base.as_ref()) {
        (Some(d), _, _) => GroundTruthSource::Dir { path: d.clone() },
        (None, Some(m), _) => GroundTruthSource::Manifest { path: m.clone() },
        (None, None, Some(b)) => b.ground_truth.clone(),
        (None, None, None) => return Err(usage("pass --gt DIR or --manifest PATH")),
    };
    let mut metrics = base.as_ref().map_or_else(MetricsConfig::default, |b| b.metrics.clone());
    if let Some(b2) = a.beta_squared {
        metrics.beta_squared = b2;
    }
    metrics.validate().map_err(|e| usage(e.to_string()))?;
    let record = EvalRecord {
        predictions,
        ground_truth,
        metrics,
        svg: a.svg || base.as_ref().is_some_and(|b| b.svg),
        out: a.out.clone().or(base.map(|b| b.out)).unwrap_or_else(|| PathBuf::from("msdnn-eval")),
    };
    RunRecord::Eval(record.clone()).write(&record.out)?;

    let gt_files: Vec<(String, PathBuf)> = match &record.ground_truth {
        GroundTruthSource::Dir { path } => pnm_files_by_id(path)?.into_iter().collect(),
        GroundTruthSource::Manifest { path } => read_manifest(path)?.into_iter().map(|e| (e.id, e.mask)).collect(),
    };
    if gt_files.is_empty() {
        bail!("no ground-truth masks found");
    }
    let preds = pnm_files_by_id(&record.predictions)?;
    let missing: Vec<&str> = gt_files.iter().filter(|(id, _)| !preds.contains_key(id)).map(|(id, _)| id.as_str()).collect();
    if !missing.is_empty() {
        bail!("no prediction for ground-truth ids: {}", missing.join(", "));
    }
    let extra = preds.len() - gt_files.len();
    if extra > 0 {
        warn!("ignoring {extra} prediction files without ground truth");
    }

    let mut maps = Vec::new();
    let mut gts = Vec::new();
    for (id, gt_path) in &gt_files {
        let mask = read_mask(gt_path).with_context(|| format!("ground truth `{id}`"))?;
        let pred = read_pnm(&preds[id]).with_context(|| format!("prediction `{id}`"))?;
        let (h, w) = (pred.shape()[1], pred.shape()[2]);
        if [h, w] != mask.shape()[1..] {
            bail!("`{id}`: prediction is {h}x{w} but ground truth is {:?}", &mask.shape()[1..]);
        }
        let plane = Tensor::from_vec(&[h, w], pred.data()[..h * w].to_vec())?;
        maps.push(SaliencyMap::new(&plane, id.clone())?);
        gts.push(GroundTruth::new(&mask, id.clone())?);
    }
    let report = evaluate_dataset(&maps, &gts, &record.metrics)?;
    write_file(&record.out.join("metrics.csv"), report.to_csv())?;
    write_file(&record.out.join("pr_curve.csv"), pr_curve_csv(&report.pr_curve))?;
    if record.svg {
        write_file(&record.out.join("pr_curve.svg"), pr_curve_svg(&report.pr_curve))?;
    }
    let m = &report.mean;
    info!(
        "{} images: F {:.4} (F of mean P/R {:.4})  MAE {:.4}  AUC {}",
        maps.len(),
        m.fmeasure,
        report.fmeasure_of_means,
        m.mae,
        m.auc.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
    );
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    if a.precision != Precision::F64 {
        return Err(usage(format!("gradient checks need double precision; {} was requested", a.precision)));
    }
    let base = match &a.config {
        Some(p) => Some(load_for(p, "gradcheck", |r| match r {
            RunRecord::Gradcheck(t) => Some(t),
            _ => None,
        })?),
        None => None,
    };
    let defaults = SuiteConfig::default();
    let kernel_names = a
        .kernels
        .clone()
        .or_else(|| base.as_ref().map(|b| b.kernels.clone()))
        .unwrap_or_else(|| Kernel::ALL.iter().map(|k| k.name().to_owned()).collect());
    let kernels = kernel_names
        .iter()
        .map(|k| k.parse::<Kernel>().map_err(|e| usage(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let record = GradcheckRecord {
        kernels: kernel_names,
        seeds: a.seeds.or(base.as_ref().map(|b| b.seeds)).unwrap_or(defaults.seeds),
        tolerance: a.tolerance.or(base.as_ref().map(|b| b.tolerance)).unwrap_or(defaults.tolerance),
        network_tolerance: a
            .network_tolerance
            .or(base.as_ref().map(|b| b.network_tolerance))
            .unwrap_or(defaults.network_tolerance),
        network_probes: base.as_ref().map_or(defaults.network_probes, |b| b.network_probes),
        epsilon: base.as_ref().map_or(defaults.epsilon, |b| b.epsilon),
    };
    if record.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let cfg = SuiteConfig {
        kernels,
        seeds: record.seeds,
        tolerance: record.tolerance,
        network_tolerance: record.network_tolerance,
        network_probes: record.network_probes,
        epsilon: record.epsilon,
    };
    let results = run_suite(&cfg);
    let mut csv = String::from("check,passed,max_rel_error,tolerance,probes\n");
    for r in &results {
        println!("{r}");
        csv.push_str(&format!("{},{},{:e},{:e},{}\n", r.label, r.passed(), r.report.max_rel_error, r.tolerance, r.report.probes));
    }
    if let Some(out) = &a.out {
        RunRecord::Gradcheck(record).write(out)?;
        write_file(&out.join("gradcheck.csv"), csv)?;
    }
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{} ({:.3e})", r.label, r.report.max_rel_error))
        .collect();
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        bail!("gradient check failed: {}", failed.join(", "))
    }
}

pub fn ablate(a: AblateArgs) -> Result<ExitCode> {
    let base = match &a.config {
        Some(p) => Some(load_for(p, "ablate", |r| match r {
            RunRecord::Ablate(t) => Some(t),
            _ => None,
        })?),
        None => None,
    };
    let network = apply_network(base.as_ref().map_or_else(default_network, |b| b.network.clone()), &a.network)?;
    let train = apply_optim(
        base.as_ref().map_or_else(TrainConfig::default, |b| b.train.clone()),
        &a.optim,
        network.deep_supervision_weight,
    )?;
    let data = data_source(&a.data, base.as_ref().map(|b| b.data.clone()), train.seed)?;
    let eval_seed = train.seed.wrapping_add(1);
    let eval_data = match (a.eval_synthetic, &a.eval_manifest, base.as_ref().map(|b| &b.eval_data)) {
        (Some(count), _, _) => DataSource::Synthetic { count, seed: eval_seed },
        (None, Some(p), _) => DataSource::Manifest { path: p.clone() },
        (None, None, Some(DataSource::Synthetic { count, .. })) => DataSource::Synthetic { count: *count, seed: eval_seed },
        (None, None, Some(src)) => src.clone(),
        (None, None, None) => match &data {
            DataSource::Synthetic { count, .. } => DataSource::Synthetic { count: *count, seed: eval_seed },
            DataSource::Manifest { .. } => data.clone(),
        },
    };
    let record = AblateRecord {
        network,
        train,
        data,
        eval_data,
        metrics: base.as_ref().map_or_else(MetricsConfig::default, |b| b.metrics.clone()),
        out: a.out.clone().or(base.map(|b| b.out)).unwrap_or_else(|| PathBuf::from("msdnn-ablate")),
    };
    RunRecord::Ablate(record.clone()).write(&record.out)?;

    let size = record.network.input_size;
    let train_set = load_data(&record.data, size)?;
    let eval_set = load_data(&record.eval_data, size)?;
    let rows = run_ablation(
        &record.network,
        &record.train,
        record.train.seed,
        &train_set,
        &eval_set,
        &record.metrics,
        |r| {
            info!(
                "{:<7} F {:.4}  MAE {:.4}  AUC {}  ({} iterations, final loss {:.4})",
                r.config,
                r.fmeasure,
                r.mae,
                r.auc.map_or_else(|| "undefined".into(), |v| format!("{v:.4}")),
                r.iterations,
                r.final_loss
            )
        },
    )?;
    write_file(&record.out.join("ablation.csv"), ablation_csv(&rows))?;
    if expected_ordering(&rows)? {
        info!("expected ordering holds: F(Sm4) <= F(Sm4321)");
    } else {
        warn!("expected ordering does not hold: F(Sm4) > F(Sm4321)");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn synth(a: SynthArgs) -> Result<ExitCode> {
    if a.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let samples = synth_dataset(a.count, a.size, a.seed).map_err(|e| usage(e.to_string()))?;
    let mut manifest = String::from("# image\tmask\tid\n");
    for s in &samples {
        let image = format!("images/{}.ppm", s.id);
        let mask = format!("masks/{}.pgm", s.id);
        fs::create_dir_all(a.out.join("images"))?;
        fs::create_dir_all(a.out.join("masks"))?;
        write_pnm(&s.image, a.out.join(&image))?;
        write_pgm(&s.mask, a.out.join(&mask))?;
        manifest.push_str(&format!("{image}\t{mask}\t{}\n", s.id));
    }
    write_file(&a.out.join("manifest.tsv"), manifest)?;
    info!("wrote {} samples to {}", samples.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

