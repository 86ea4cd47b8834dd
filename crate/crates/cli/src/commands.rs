use std::path::Path;
use std::process::ExitCode;

use mivit::analysis::{self, Layer};
use mivit::dataio::{mmrs, synth, SampleSet, Scene, SynthConfig};
use mivit::gradcheck::{self, Module, TOLERANCE};
use mivit::io;
use mivit::model::{Mivit, ModelConfig};
use mivit::params::ParamStore;
use mivit::train::{self, Checkpoint, Classifier, Prepared, TrainConfig};
use mivit::{Error, Result};
use serde_json::{json, Value};

use crate::{
    AnalyzeArgs, CountArgs, Command, ConfigArgs, EvalArgs, ExportArgs, GradcheckArgs, InferArgs, Modality, Overrides,
    SelectArgs, Split, SynthArgs, TrainArgs,
};

pub fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Synth(a) => synth_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Config(a) => config_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Infer(a) => infer_cmd(a),
        Command::AnalyzeRedundancy(a) => analyze_cmd(a),
        Command::ExportFeatures(a) => export_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::CountParams(a) => count_cmd(a),
        Command::SelectModality(a) => select_cmd(a),
    }
    .map(|()| ExitCode::SUCCESS)
    .or_else(|e| match e {
        Failure::Gradcheck => Ok(ExitCode::from(4)),
        Failure::Error(e) => Err(e),
    })
}

/// A command either fails with an error or reports a failed check.
enum Failure {
    Error(Error),
    Gradcheck,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialise");
    io::write_atomic(path, text.as_bytes())
}

fn synth_cmd(a: SynthArgs) -> Outcome {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        seed: a.seed,
        classes: a.classes.unwrap_or(d.classes),
        height: a.size.unwrap_or(d.height),
        width: a.size.unwrap_or(d.width),
        bands: a.bands.unwrap_or(d.bands),
        noise: a.noise.unwrap_or(d.noise),
        ..d
    };
    let s = synth::generate(&cfg)?;
    mmrs::save(&a.out, &s.scene)?;
    println!("wrote {} ({}x{}, {} classes)", a.out.display(), cfg.height, cfg.width, cfg.classes);
    Ok(())
}

fn load_config(path: Option<&Path>, o: &Overrides) -> Result<TrainConfig> {
    let mut cfg = match path {
        None => TrainConfig::default(),
        Some(p) => {
            let bytes = io::read(p)?;
            let text = String::from_utf8(bytes).map_err(|_| Error::Config(format!("{} is not UTF-8", p.display())))?;
            let value: Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            // A run manifest carries its configuration under "config".
            let inner = match value.get("config") {
                Some(c) if value.get("dataset_sha256").is_some() => c.clone(),
                _ => value,
            };
            TrainConfig::from_json(&inner.to_string())?
        }
    };
    macro_rules! apply {
        ($($f:ident),*) => {$(if let Some(v) = o.$f { cfg.$f = v; })*};
    }
    apply!(seed, epochs, batch_size, lr, lambda1, lambda2, lambda3, lambda4, train_per_class, val_per_class);
    cfg.validate()?;
    Ok(cfg)
}

fn config_cmd(a: ConfigArgs) -> Outcome {
    let cfg = load_config(a.config.as_deref(), &a.overrides)?;
    println!("{}", serde_json::to_string_pretty(&cfg).expect("config serialises"));
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Outcome {
    let cfg = load_config(a.config.as_deref(), &a.overrides)?;
    let scene = mmrs::load(&a.data)?;
    let quiet = a.quiet;
    let out = train::train(&cfg, &scene, Some(&a.out), |r| {
        if !quiet {
            eprintln!(
                "epoch {:>4} lr {:.3e} loss {:.4} (idf {:.4} re {:.4} iac {:.5}) train {:.3} val {:.3}/{:.3}/{:.3}",
                r.epoch + 1,
                r.lr,
                r.loss.total,
                r.loss.idf,
                r.loss.re,
                r.loss.iac,
                r.train_oa,
                r.val[0].oa,
                r.val[1].oa,
                r.val[2].oa
            );
        }
    })?;
    let t = &out.manifest.final_metrics.test;
    println!(
        "test OA: classifier1 {:.4} classifier2 {:.4} fused {:.4}; outputs in {}",
        t.shallow1.oa,
        t.shallow2.oa,
        t.fused.oa,
        a.out.display()
    );
    Ok(())
}

struct Loaded {
    ckpt: Checkpoint,
    model: Mivit,
    scene: Scene,
    data: Prepared,
}

fn load(ckpt: &Path, data: &Path) -> Result<Loaded> {
    let ckpt = Checkpoint::load(ckpt)?;
    let model = ckpt.model()?;
    let scene = mmrs::load(data)?;
    let c = &ckpt.config;
    let data = Prepared::new(&scene, c.model.classes, c.train_per_class, c.val_per_class, c.seed)?;
    Ok(Loaded { ckpt, model, scene, data })
}

impl Loaded {
    fn samples(&self, split: Split) -> SampleSet {
        match split {
            Split::Train => self.data.train.clone(),
            Split::Val => self.data.val.clone(),
            Split::Test => self.data.test.clone(),
            Split::All => train::all_samples(&self.scene),
        }
    }

    fn params(&self) -> &ParamStore<f32> {
        &self.ckpt.params
    }
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
        Split::All => "all",
    }
}

fn eval_cmd(a: EvalArgs) -> Outcome {
    let l = load(&a.ckpt, &a.data)?;
    let classifier = Classifier::from_index(a.classifier as usize)?;
    let samples = l.samples(a.split);
    let batch = l.ckpt.config.eval_batch;
    let report = train::evaluate(&l.model, l.params(), &l.data.scene, &samples, classifier, batch)?;
    let value = json!({
        "classifier": a.classifier,
        "split": split_name(a.split),
        "samples": samples.len(),
        "metrics": report,
    });
    let out = a.out.unwrap_or_else(|| {
        let dir = a.ckpt.parent().map(Path::to_path_buf).unwrap_or_default();
        dir.join(format!("eval_classifier{}_{}.json", a.classifier, split_name(a.split)))
    });
    write_json(&out, &value)?;
    println!("{}", serde_json::to_string_pretty(&value).expect("JSON values serialise"));
    Ok(())
}

fn infer_cmd(a: InferArgs) -> Outcome {
    let l = load(&a.ckpt, &a.data)?;
    let classifier = match a.modality {
        Modality::Hsi => Classifier::Shallow1,
        Modality::Lidar => Classifier::Shallow2,
        Modality::Fused => Classifier::Fused,
    };
    let samples = train::all_samples(&l.scene);
    let preds = train::predict(
        &l.model,
        l.params(),
        &l.data.scene,
        &samples.centers,
        classifier,
        l.ckpt.config.eval_batch,
    )?;
    let levels = analysis::label_map(&l.scene, &samples, &preds);
    let max = l.model.cfg.classes.saturating_sub(1) as u32;
    let text = analysis::pgm(l.scene.height(), l.scene.width(), &levels, max);
    io::write_atomic(&a.out, text.as_bytes())?;
    println!("wrote {} ({} labeled pixels)", a.out.display(), samples.len());
    Ok(())
}

fn analyze_cmd(a: AnalyzeArgs) -> Outcome {
    let l = load(&a.ckpt, &a.data)?;
    let samples = l.samples(a.split);
    let h = train::head_outputs(&l.model, l.params(), &l.data.scene, &samples, l.ckpt.config.eval_batch)?;
    let cfg = &l.model.cfg;
    io::write_atomic(&a.out, analysis::redundancy_csv(&h, cfg.d, cfg.d_z()).as_bytes())?;
    let phi = mivit::metrics::correlation_matrix(&h.phi1, &h.phi2, h.n, cfg.d, cfg.d).mean_abs();
    let z = mivit::metrics::correlation_matrix(&h.z1, &h.z2, h.n, cfg.d_z(), cfg.d_z()).mean_abs();
    println!("mean |pearson|: features {phi:.4}, Z1/Z2 {z:.4}; wrote {}", a.out.display());
    Ok(())
}

fn export_cmd(a: ExportArgs) -> Outcome {
    let layer: Layer = a.layer.parse()?;
    let l = load(&a.ckpt, &a.data)?;
    let samples = l.samples(a.split);
    let (width, data) = analysis::features(&l.model, l.params(), &l.data.scene, &samples, layer, l.ckpt.config.eval_batch)?;
    io::write_atomic(&a.out, analysis::features_csv(&samples, width, &data).as_bytes())?;
    println!("wrote {} ({} rows x {width} features)", a.out.display(), samples.len());
    Ok(())
}

fn gradcheck_cmd(a: GradcheckArgs) -> Outcome {
    let mut ok = true;
    for m in Module::parse(&a.module)? {
        let rep = gradcheck::check_module(m, a.seed)?;
        let pass = rep.passes(TOLERANCE);
        ok &= pass;
        println!(
            "{:<8} max rel error {:.3e} over {} coordinates ({} skipped at kinks) {}",
            m.name(),
            rep.max_rel_error,
            rep.coordinates,
            rep.skipped,
            if pass { "ok" } else { "FAIL" }
        );
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Gradcheck)
    }
}

fn count_cmd(a: CountArgs) -> Outcome {
    let path: train::Path = a.path.parse()?;
    let (model, params) = match (&a.ckpt, &a.config) {
        (Some(p), _) => {
            let c = Checkpoint::load(p)?;
            (c.model()?, c.params)
        }
        (None, Some(p)) => Mivit::new(&load_config(Some(p), &Overrides::default())?.model, 0)?,
        (None, None) => Mivit::new(&ModelConfig::default(), 0)?,
    };
    let (n, macs) = train::count_params_flops(&model, &params, path)?;
    println!("{} params/K {:.2} FLOPs/M {:.2}", a.path, n as f64 / 1e3, macs as f64 / 1e6);
    Ok(())
}

fn select_cmd(a: SelectArgs) -> Outcome {
    let scene = mmrs::load(&a.data)?;
    let m = a.modality as usize - 1;
    let Some(raster) = scene.modalities.get(m) else {
        return Err(Error::Data(format!("{} has no modality {}", a.data.display(), a.modality)).into());
    };
    let single = Scene::new(vec![raster.clone()], scene.labels.clone())?;
    mmrs::save(&a.out, &single)?;
    println!("wrote {} (modality {} only)", a.out.display(), a.modality);
    Ok(())
}
