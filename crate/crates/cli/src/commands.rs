use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context};
use candle_core::{DType, Device};
use serde_json::json;
use shad3s_core::csg::MAX_SOLIDS;
use shad3s_core::dataset::{build_corpus, content_hash, load_manifest, load_point, Protocol, Split, SubsetConfig};
use shad3s_core::raster::GrayImage;
use shad3s_core::render::PlaneFlags;
use shad3s_core::tam::{
    build_catalog, default_catalog, load_catalog, save_family, synthesize_tam_with, validate_tam, TamFamily, TamParams,
    TamStyle,
};
use shad3s_nn::bundle::{Architecture, Bundle, BundleSpec, ModelId};
use shad3s_nn::classifier::{ClassifierConfig, SketchClassifier};
use shad3s_nn::data::load_samples;
use shad3s_nn::eval::{evaluate, progressive_eval};
use shad3s_nn::train::{TrainConfig, TrainError, Trainer};
use shad3s_service::{AppState, CompletionParams, ServiceError, ENV_CKPT_DIR, ENV_PORT};

use crate::config::{self, Resolver, UsageError};
use crate::manifest::{self, RunManifest};
use crate::{
    ClassifierArgs, Cli, CliError, Command, CompleteArgs, DatagenArgs, EvalArgs, ServeArgs, TamCommand, TamSynthArgs,
    TamValidateArgs, TrainArgs,
};

type Outcome = Result<(), CliError>;

/// Command context: config-file contents and manifest override.
struct Ctx {
    file: BTreeMap<String, String>,
    manifest: Option<PathBuf>,
    started: Instant,
}

impl Ctx {
    fn resolver(&self) -> Resolver {
        Resolver::new(self.file.clone())
    }

    /// Logs the manifest and writes it to the override path or `default`.
    fn emit(&self, mut m: RunManifest, default: Option<PathBuf>) -> anyhow::Result<()> {
        m.finish(self.started);
        if let Some(path) = self.manifest.clone().or(default) {
            m.write(&path).with_context(|| format!("writing {}", path.display()))?;
        }
        log::info!("run manifest: {}", serde_json::to_string(&m)?);
        Ok(())
    }
}

fn path_arg(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.to_string_lossy().into_owned())
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(UsageError(msg.into()))
}

pub fn run(cli: Cli) -> Outcome {
    let name = match &cli.command {
        Command::Datagen(_) => "datagen",
        Command::Tam(TamCommand::Synth(_)) => "tam synth",
        Command::Tam(TamCommand::Validate(_)) => "tam validate",
        Command::Train(_) => "train",
        Command::Classifier(_) => "classifier",
        Command::Eval(_) => "eval",
        Command::Serve(_) => "serve",
        Command::Complete(_) => "complete",
    };
    let file = match &cli.config {
        Some(p) => config::load(p, name)?,
        None => BTreeMap::new(),
    };
    let ctx = Ctx {
        file,
        manifest: cli.manifest,
        started: Instant::now(),
    };
    match cli.command {
        Command::Datagen(a) => datagen(&ctx, a),
        Command::Tam(TamCommand::Synth(a)) => tam_synth(&ctx, a),
        Command::Tam(TamCommand::Validate(a)) => tam_validate(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Classifier(a) => classifier(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Serve(a) => serve(&ctx, a),
        Command::Complete(a) => complete(&ctx, a),
    }
}

fn catalog(r: &mut Resolver, flag: Option<PathBuf>) -> Result<Arc<Vec<TamFamily>>, CliError> {
    match r.opt("tam-dir", path_arg(flag))? {
        Some(dir) => {
            let fams = load_catalog(Path::new(&dir)).with_context(|| format!("loading textures from {dir}"))?;
            if fams.is_empty() {
                return Err(anyhow!("no texture families in {dir}").into());
            }
            Ok(Arc::new(fams))
        }
        None => Ok(default_catalog()),
    }
}

fn datagen(ctx: &Ctx, a: DatagenArgs) -> Outcome {
    let mut r = ctx.resolver();
    let k = r.or("max-solids", a.max_solids, MAX_SOLIDS)?;
    let scenes = r.or("scenes", a.scenes, 16)?;
    let poses = r.or("poses", a.poses, 4)?;
    let seed = r.or("seed", a.seed, 0)?;
    let out = PathBuf::from(r.required::<String>("out", path_arg(a.out))?);
    let resolution = r.or("resolution", a.resolution, 256)?;
    let all = r.switch("all-subsets", a.all_subsets)?;
    let flags = PlaneFlags {
        background_hatch: r.switch("background-hatch", a.background_hatch)?,
        no_shadows: r.switch("no-shadows", a.no_shadows)?,
    };
    let jobs = r.or("jobs", a.jobs, 0)?;
    let catalog = catalog(&mut r, a.tam_dir)?;
    r.finish()?;
    if !(1..=MAX_SOLIDS).contains(&k) {
        return Err(usage(format!("--max-solids must be in 1..={MAX_SOLIDS}, got {k}")));
    }
    if scenes == 0 || poses == 0 || resolution < 16 {
        return Err(usage("--scenes and --poses must be positive and --resolution at least 16"));
    }
    let cfg = SubsetConfig {
        flags,
        resolution,
        jobs,
        ..SubsetConfig::new(k, scenes, poses, seed)
    };
    let ks: Vec<usize> = if all { (1..=k).collect() } else { vec![k] };
    let rows = build_corpus(&out, &cfg, &ks, &catalog)?;
    let hash = content_hash(&out)?;
    println!("wrote {} data points to {}", rows.len(), out.display());
    println!("content hash {hash}");
    let mut m = RunManifest::new("datagen", r.resolved).seed("master", seed);
    m.output(&out.join("manifest.jsonl"));
    m.summary = json!({ "data_points": rows.len(), "subsets": ks, "content_hash": hash });
    ctx.emit(m, Some(out.join(manifest::FILE_NAME)))?;
    Ok(())
}

fn tam_synth(ctx: &Ctx, a: TamSynthArgs) -> Outcome {
    let mut r = ctx.resolver();
    let out = PathBuf::from(r.required::<String>("out", path_arg(a.out))?);
    let size = r.or("size", a.size, shad3s_core::tam::DEFAULT_TAM_SIZE)?;
    let style = r.opt("style", a.style)?;
    let mut m_seed = None;
    let families = match style {
        Some(s) => {
            let style = TamStyle::from_str(&s).map_err(usage)?;
            let seed = r.or("seed", a.seed, 0)?;
            let angle = r.or("angle", a.angle, 45.0)?;
            m_seed = Some(seed);
            let params = TamParams {
                size,
                angle_deg: angle,
                ..TamParams::default()
            };
            vec![synthesize_tam_with(seed, style, &params)]
        }
        None => build_catalog(size),
    };
    r.finish()?;
    if size < 16 {
        return Err(usage("--size must be at least 16"));
    }
    let mut reports = serde_json::Map::new();
    for fam in &families {
        save_family(&out, fam)?;
        let report = validate_tam(&fam.tones)?;
        if !report.accepted {
            return Err(anyhow!("synthesised family {} failed validation: {report:?}", fam.id).into());
        }
        println!("{} coverage {:?}", fam.id, report.coverage);
        reports.insert(fam.id.clone(), serde_json::to_value(&report).map_err(anyhow::Error::from)?);
    }
    let mut m = RunManifest::new("tam synth", r.resolved);
    if let Some(s) = m_seed {
        m = m.seed("family", s);
    }
    for fam in &families {
        m.output(&out.join(&fam.id));
    }
    m.summary = serde_json::Value::Object(reports);
    ctx.emit(m, Some(out.join(manifest::FILE_NAME)))?;
    Ok(())
}

fn read_tones(dir: &Path) -> anyhow::Result<Vec<GrayImage>> {
    (1..=4)
        .map(|k| {
            let p = dir.join(format!("tone{k}.png"));
            let bytes = std::fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
            GrayImage::decode_png(&bytes).with_context(|| format!("decoding {}", p.display()))
        })
        .collect()
}

fn tam_validate(ctx: &Ctx, a: TamValidateArgs) -> Outcome {
    let r = ctx.resolver();
    r.finish()?;
    let dir = a.dir;
    let mut dirs = if dir.join("tone1.png").exists() {
        vec![dir.clone()]
    } else {
        std::fs::read_dir(&dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.join("tone1.png").exists())
            .collect()
    };
    dirs.sort();
    if dirs.is_empty() {
        return Err(anyhow!("no texture families under {}", dir.display()).into());
    }
    let mut failed = Vec::new();
    let mut summary = serde_json::Map::new();
    for d in &dirs {
        let id = d.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let report = validate_tam(&read_tones(d)?)?;
        println!("{}", json!({ "id": id, "report": report }));
        if !report.accepted {
            failed.push(id.clone());
        }
        summary.insert(id, serde_json::to_value(&report).map_err(anyhow::Error::from)?);
    }
    let mut config = BTreeMap::new();
    config.insert("dir".to_string(), dir.display().to_string());
    let mut m = RunManifest::new("tam validate", config);
    m.summary = serde_json::Value::Object(summary);
    ctx.emit(m, None)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("{} of {} families failed: {}", failed.len(), dirs.len(), failed.join(", ")).into())
    }
}

fn corpus_resolution(data: &Path) -> anyhow::Result<usize> {
    let rows = load_manifest(&data.join("manifest.jsonl"))?;
    rows.first()
        .map(|r| r.resolution)
        .ok_or_else(|| anyhow!("{} has an empty manifest", data.display()))
}

fn train(ctx: &Ctx, a: TrainArgs) -> Outcome {
    let mut r = ctx.resolver();
    let model: String = r.required("model", a.model)?;
    let model = ModelId::from_str(&model).map_err(usage)?;
    let data = PathBuf::from(r.required::<String>("data", path_arg(a.data))?);
    let out = PathBuf::from(r.required::<String>("out", path_arg(a.out))?);
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: r.or("epochs", a.epochs, d.epochs)?,
        batch_size: r.or("batch-size", a.batch_size, d.batch_size)?,
        lr: r.or("lr", a.lr, d.lr)?,
        adv_weight: r.or("lambda", a.lambda, d.adv_weight)?,
        beta1: r.or("beta1", a.beta1, d.beta1)?,
        beta2: r.or("beta2", a.beta2, d.beta2)?,
        seed: r.or("seed", a.seed, d.seed)?,
        teacher_forcing: r.switch("teacher-forcing", a.teacher_forcing)?,
    };
    let resolution = match r.opt("resolution", a.resolution)? {
        Some(v) => v,
        None => r.or("resolution", None, corpus_resolution(&data)?)?,
    };
    let arch = match r.or("arch", a.arch, "default".to_string())?.as_str() {
        "default" => Architecture::default(),
        "toy" => Architecture::toy(),
        other => return Err(usage(format!("unknown --arch `{other}` (default, toy)"))),
    };
    r.finish()?;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let spec = BundleSpec::new(model, arch, resolution);
    spec.validate().map_err(usage)?;

    let train = load_samples(&data, &[Split::Train], resolution)?;
    let val = load_samples(&data, &[Split::Val], resolution)?;
    if train.is_empty() {
        return Err(anyhow!("no training samples in {}", data.display()).into());
    }
    log::info!("{} train / {} val samples at {resolution}px", train.len(), val.len());
    let bundle = Bundle::new(spec, cfg.seed, DType::F32, &Device::Cpu).map_err(anyhow::Error::from)?;
    let seed = cfg.seed;
    let mut trainer = Trainer::new(bundle, cfg).map_err(train_error)?;
    let log = trainer.fit(&train, &val, Some(&out)).map_err(train_error)?;
    let final_path = out.join("model.bin");
    shad3s_nn::checkpoint::save(&trainer.bundle, &final_path).map_err(anyhow::Error::from)?;
    let last = log.last().expect("initial record");
    println!(
        "val L1 {:?} -> {:?}; checkpoint {}",
        log[0].val_l1,
        last.val_l1,
        final_path.display()
    );
    let mut m = RunManifest::new("train", r.resolved).seed("train", seed);
    m.output(&final_path);
    m.output(&out.join("metrics.jsonl"));
    m.summary = json!({ "initial": log[0], "final": last });
    ctx.emit(m, Some(out.join(manifest::FILE_NAME)))?;
    Ok(())
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::Config(m) => usage(m),
        other => CliError::Runtime(other.into()),
    }
}

/// Ground-truth sketches and solid counts of every row in `splits`.
fn labelled_sketches(data: &Path, splits: &[Split]) -> anyhow::Result<Vec<(GrayImage, usize)>> {
    let rows = load_manifest(&data.join("manifest.jsonl"))?;
    rows.iter()
        .filter(|r| splits.contains(&r.split))
        .map(|r| {
            let p = load_point(data, r)?;
            Ok((p.planes.sk, r.n_solids - 1))
        })
        .collect()
}

fn classifier(ctx: &Ctx, a: ClassifierArgs) -> Outcome {
    let mut r = ctx.resolver();
    let data = PathBuf::from(r.required::<String>("data", path_arg(a.data))?);
    let out = PathBuf::from(r.required::<String>("out", path_arg(a.out))?);
    let d = ClassifierConfig::default();
    let cfg = ClassifierConfig {
        epochs: r.or("epochs", a.epochs, d.epochs)?,
        seed: r.or("seed", a.seed, d.seed)?,
        ..d
    };
    r.finish()?;
    let train = labelled_sketches(&data, &[Split::Train])?;
    let held = labelled_sketches(&data, &[Split::Val, Split::Test])?;
    if train.is_empty() {
        return Err(anyhow!("no training sketches in {}", data.display()).into());
    }
    let mut net = SketchClassifier::new(MAX_SOLIDS, cfg.seed).map_err(anyhow::Error::from)?;
    let loss = net.fit(&train, &cfg).map_err(anyhow::Error::from)?;
    let acc = if held.is_empty() { None } else { Some(net.accuracy(&held).map_err(anyhow::Error::from)?) };
    net.save(&out).map_err(anyhow::Error::from)?;
    println!("final loss {loss:.4}; held-out accuracy {acc:?}");
    let mut m = RunManifest::new("classifier", r.resolved).seed("classifier", cfg.seed);
    m.output(&out);
    m.summary = json!({ "final_loss": loss, "heldout_accuracy": acc, "train_samples": train.len() });
    ctx.emit(m, Some(out.with_extension("run.json")))?;
    Ok(())
}

const METRIC_NAMES: [&str; 3] = ["psnr", "ssim", "is"];

fn eval(ctx: &Ctx, a: EvalArgs) -> Outcome {
    let mut r = ctx.resolver();
    let ckpt = PathBuf::from(r.required::<String>("ckpt", path_arg(a.ckpt))?);
    let data = r.opt("data", path_arg(a.data))?.map(PathBuf::from);
    let metrics_raw = r.or("metrics", a.metrics, "psnr,ssim".to_string())?;
    let metrics: Vec<String> = metrics_raw
        .split(',')
        .map(|s| s.trim().to_ascii_lowercase())
        .filter(|s| !s.is_empty())
        .collect();
    if let Some(bad) = metrics.iter().find(|m| !METRIC_NAMES.contains(&m.as_str())) {
        return Err(usage(format!("unknown metric `{bad}` (psnr, ssim, is)")));
    }
    let classifier_path = r.opt("classifier", path_arg(a.classifier))?;
    let split = match r.or("split", a.split, "test".to_string())?.as_str() {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => return Err(usage(format!("unknown --split `{other}`"))),
    };
    let progressive = r
        .opt("progressive", a.progressive)?
        .map(|p| Protocol::from_str(&p).map(|proto| (p, proto)))
        .transpose()
        .map_err(usage)?;
    let rows = r.or("rows", a.rows, 4)?;
    let cols = r.or("cols", a.cols, 4)?;
    let seed = r.or("seed", a.seed, 0)?;
    let out = PathBuf::from(r.required::<String>("out", path_arg(a.out))?);
    let catalog = catalog(&mut r, a.tam_dir)?;
    r.finish()?;
    if data.is_none() && progressive.is_none() {
        return Err(usage("eval needs --data, --progressive, or both"));
    }
    let wants_is = metrics.iter().any(|m| m == "is");
    if wants_is && classifier_path.is_none() {
        return Err(usage("metric `is` needs --classifier"));
    }
    if rows == 0 || cols == 0 {
        return Err(usage("--rows and --cols must be positive"));
    }

    let bundle = shad3s_nn::checkpoint::load(&ckpt, &Device::Cpu).with_context(|| format!("loading {}", ckpt.display()))?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut report = serde_json::Map::new();
    report.insert("checkpoint".into(), json!(ckpt.display().to_string()));
    report.insert("model".into(), json!(bundle.spec.model.name()));
    let mut mf = RunManifest::new("eval", r.resolved).seed("grid", seed);

    if let Some(data) = &data {
        let samples = load_samples(data, &[split], bundle.spec.resolution)?;
        if samples.is_empty() {
            return Err(anyhow!("no {split:?} samples in {}", data.display()).into());
        }
        let net = match (&classifier_path, wants_is) {
            (Some(p), true) => Some(SketchClassifier::load(Path::new(p)).map_err(anyhow::Error::from)?),
            _ => None,
        };
        let cls = net.as_ref().map(|n| n as &dyn shad3s_core::metrics::Classifier);
        let full = evaluate(&bundle, &samples, cls)?;
        let mut m = serde_json::Map::new();
        for name in &metrics {
            match name.as_str() {
                // JSON has no infinity; an exact match reports as null.
                "psnr" => m.insert("psnr".into(), json!(full.psnr)),
                "ssim" => m.insert("ssim".into(), json!(full.ssim)),
                _ => {
                    m.insert("inception_score_std".into(), json!(full.inception_score_std));
                    m.insert("inception_score".into(), json!(full.inception_score))
                }
            };
        }
        m.insert("inference_time_ms".into(), json!(full.inference_time_ms));
        m.insert("n_samples".into(), json!(full.n_samples));
        println!("{}", serde_json::Value::Object(m.clone()));
        report.insert("metrics".into(), serde_json::Value::Object(m));
    }
    if let Some((name, protocol)) = progressive {
        let res = progressive_eval(&bundle, protocol, rows, cols, seed, &catalog)?;
        let fig = out.join(format!("progressive_{}.png", name.replace('+', "_")));
        std::fs::write(&fig, res.figure.encode_png()).with_context(|| format!("writing {}", fig.display()))?;
        let mean = res.l1.iter().sum::<f64>() / res.l1.len() as f64;
        println!("progressive {name}: mean L1 {mean:.4}, figure {}", fig.display());
        report.insert(
            "progressive".into(),
            json!({ "protocol": name, "rows": rows, "cols": cols, "l1": res.l1, "mean_l1": mean, "figure": fig.display().to_string() }),
        );
        mf.output(&fig);
    }
    let report_path = out.join("report.json");
    std::fs::write(&report_path, serde_json::to_vec_pretty(&report).map_err(anyhow::Error::from)?)
        .with_context(|| format!("writing {}", report_path.display()))?;
    mf.output(&report_path);
    mf.summary = serde_json::Value::Object(report);
    ctx.emit(mf, Some(out.join(manifest::FILE_NAME)))?;
    Ok(())
}

fn env_path(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|v| !v.is_empty())
}

fn serve(ctx: &Ctx, a: ServeArgs) -> Outcome {
    let mut r = ctx.resolver();
    let ckpt = match r.opt("ckpt", path_arg(a.ckpt))? {
        Some(c) => c,
        None => r.required("ckpt", env_path(ENV_CKPT_DIR))?,
    };
    let port = match r.opt("port", a.port)? {
        Some(p) => p,
        None => {
            let env = match std::env::var(ENV_PORT) {
                Ok(v) => Some(v.parse::<u16>().map_err(|e| usage(format!("{ENV_PORT}={v}: {e}")))?),
                Err(_) => None,
            };
            r.or("port", env, shad3s_service::DEFAULT_PORT)?
        }
    };
    let catalog = catalog(&mut r, a.tam_dir)?;
    r.finish()?;
    let path = PathBuf::from(&ckpt);
    let state = AppState::new(catalog);
    let state = if path.is_dir() { state.load_dir(&path) } else { state.load_file(&path) }
        .with_context(|| format!("loading {ckpt}"))?;
    if state.models.is_empty() {
        return Err(anyhow!("no checkpoints found at {ckpt}").into());
    }
    log::info!("models: {}", state.models.keys().cloned().collect::<Vec<_>>().join(", "));
    let mut m = RunManifest::new("serve", r.resolved);
    m.summary = json!({ "models": state.models.keys().collect::<Vec<_>>() });
    ctx.emit(m, None)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting runtime")?;
    rt.block_on(shad3s_service::serve(state, port))
        .with_context(|| format!("serving on port {port}"))?;
    Ok(())
}

fn first_checkpoint(dir: &Path) -> anyhow::Result<PathBuf> {
    let mut bins: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "bin"))
        .collect();
    bins.sort();
    bins.into_iter()
        .next()
        .ok_or_else(|| anyhow!("no *.bin checkpoint in {}", dir.display()))
}

fn complete(ctx: &Ctx, a: CompleteArgs) -> Outcome {
    let mut r = ctx.resolver();
    let ckpt = match r.opt("ckpt", path_arg(a.ckpt))? {
        Some(c) => PathBuf::from(c),
        None => {
            let dir: String = r.required("ckpt", env_path(ENV_CKPT_DIR))?;
            first_checkpoint(Path::new(&dir))?
        }
    };
    let contour = PathBuf::from(r.required::<String>("contour", path_arg(a.contour))?);
    let azimuth = r.required("azimuth", a.azimuth)?;
    let elevation = r.required("elevation", a.elevation)?;
    let texture: String = r.required("texture", a.texture)?;
    let out = PathBuf::from(r.required::<String>("out", path_arg(a.out))?);
    let seed = r.opt("seed", a.seed)?;
    let catalog = catalog(&mut r, a.tam_dir)?;
    r.finish()?;

    let bytes = std::fs::read(&ckpt).with_context(|| format!("reading {}", ckpt.display()))?;
    let bundle = shad3s_nn::checkpoint::from_bytes(&bytes, DType::F32, &Device::Cpu)
        .with_context(|| format!("loading {}", ckpt.display()))?;
    let model_id = ckpt.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let png = std::fs::read(&contour).with_context(|| format!("reading {}", contour.display()))?;
    let params = CompletionParams {
        azimuth,
        elevation,
        tam_family_id: texture,
        model_id: Some(model_id.clone()),
        seed,
    };
    let done = shad3s_service::complete(&bundle, &model_id, &catalog, &png, &params).map_err(|e| match e {
        ServiceError::UnknownFamily(_) | ServiceError::BadRequest(_) => usage(e.to_string()),
        other => CliError::Runtime(other.into()),
    })?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(&out, done.image.encode_png()).with_context(|| format!("writing {}", out.display()))?;
    if let Some(reason) = &done.meta.low_confidence {
        log::warn!("low confidence: {reason}");
    }
    let meta = serde_json::to_value(&done.meta).map_err(anyhow::Error::from)?;
    println!("{meta}");
    let mut m = RunManifest::new("complete", r.resolved).seed("crop", done.meta.crop_seed);
    m.output(&out);
    m.summary = meta;
    ctx.emit(m, Some(out.with_extension("run.json")))?;
    Ok(())
}
