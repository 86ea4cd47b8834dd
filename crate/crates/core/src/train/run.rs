use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use mivit_autodiff::optim::{AdamW, StepLr};
use mivit_autodiff::Tape;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::data::{constants, cube_batch, even_batches, Prepared};
use super::evaluate::{head_outputs, Classifier, HeadOutputs};
use super::objective::{total_loss, Components};
use crate::dataio::{mmrs, SampleSet, Scene};
use crate::error::Result;
use crate::io;
use crate::metrics::{correlation_matrix, MetricsReport};
use crate::model::Mivit;
use crate::params::{seeded_rng, ParamStore};

/// Mutable training state.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: Mivit,
    pub params: ParamStore<f32>,
    pub opt: AdamW<f32>,
    pub schedule: StepLr,
}

impl Trainer {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let (model, params) = Mivit::new(&cfg.model, cfg.seed)?;
        Ok(Self {
            cfg: cfg.clone(),
            model,
            params,
            opt: AdamW::new(cfg.weight_decay),
            schedule: StepLr { base_lr: cfg.lr, step_size: cfg.step_size, gamma: cfg.gamma },
        })
    }

    /// One optimisation step on the samples `idx` of `set`. Returns the loss
    /// components and the fused predictions for the batch.
    pub fn step(&mut self, scene: &Scene, set: &SampleSet, idx: &[usize], lr: f64) -> Result<(Components<f32>, Vec<usize>)> {
        let centers: Vec<(usize, usize)> = idx.iter().map(|&i| set.centers[i]).collect();
        let y: Vec<usize> = idx.iter().map(|&i| set.labels[i]).collect();
        let sizes = &self.cfg.model.cube_sizes;
        let mut t = Tape::<f32>::new();
        let p = self.params.bind(&mut t);
        let e = constants(&mut t, &cube_batch(&scene.modalities[0], &centers, sizes)?);
        let g = constants(&mut t, &cube_batch(&scene.modalities[1], &centers, sizes)?);
        let out = self.model.forward(&mut t, &p, &e, &g)?;
        let loss = total_loss(&mut t, &out, &e, &g, &y, &self.cfg)?;
        t.backward(loss.total)?;
        self.params.load_grads(&t, &p);
        self.opt.step(self.params.tensors_mut(), lr);
        let value = |v| t.value(v).item();
        let comps = Components {
            total: value(loss.total),
            idf: value(loss.idf),
            re: value(loss.re),
            iac: value(loss.iac),
        };
        let preds = crate::metrics::argmax_rows(t.data(out.c), self.cfg.model.classes);
        Ok((comps, preds))
    }

    pub fn checkpoint(&self, epoch: usize) -> Checkpoint {
        Checkpoint { config: self.cfg.clone(), epoch, params: self.params.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
}

impl From<&MetricsReport> for Summary {
    fn from(r: &MetricsReport) -> Self {
        Summary { oa: r.oa, aa: r.aa, kappa: r.kappa }
    }
}

/// One row of the metrics history.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Batch-mean loss components over the epoch.
    pub loss: Components<f64>,
    /// Fused accuracy on the training batches as they were seen.
    pub train_oa: f64,
    /// Validation metrics of classifiers 1, 2, 3.
    pub val: [Summary; 3],
}

pub const CSV_HEADER: &str = "epoch,lr,total,idf,re,iac,train_oa,\
val_oa1,val_aa1,val_kappa1,val_oa2,val_aa2,val_kappa2,val_oa3,val_aa3,val_kappa3";

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.lr, self.loss.total, self.loss.idf, self.loss.re, self.loss.iac, self.train_oa
        );
        for v in &self.val {
            let _ = write!(s, ",{},{},{}", v.oa, v.aa, v.kappa);
        }
        s
    }
}

/// Metrics of one sample set for every classifier plus redundancy and
/// distillation statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetReport {
    pub samples: usize,
    pub shallow1: Summary,
    pub shallow2: Summary,
    pub fused: Summary,
    /// Mean `KL(C1‖C)` over the set.
    pub kl_c1_c: f64,
    /// Mean absolute Pearson correlation between the channels of `Z1` and `Z2`.
    pub z1_z2_abs_corr: f64,
}

impl SetReport {
    pub fn from_outputs(h: &HeadOutputs, set: &SampleSet, classes: usize, d_z: usize) -> Self {
        let s = |c| Summary::from(&h.report(c, set, classes));
        SetReport {
            samples: set.len(),
            shallow1: s(Classifier::Shallow1),
            shallow2: s(Classifier::Shallow2),
            fused: s(Classifier::Fused),
            kl_c1_c: h.mean_kl_c1_c(classes),
            z1_z2_abs_corr: correlation_matrix(&h.z1, &h.z2, h.n, d_z, d_z).mean_abs(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub train: SetReport,
    pub val: Option<SetReport>,
    pub test: SetReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub seed: u64,
    pub dataset_sha256: String,
    pub artifact_version: String,
    pub source_sha256: String,
    pub wall_clock_seconds: f64,
    pub epochs_completed: usize,
    pub best_val_epoch: usize,
    pub final_metrics: FinalMetrics,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub manifest: RunManifest,
}

pub fn dataset_hash(scene: &Scene) -> String {
    hex(&Sha256::digest(mmrs::encode(scene)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in history {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

fn report(trainer: &Trainer, data: &Prepared, set: &SampleSet) -> Result<SetReport> {
    let h = head_outputs(&trainer.model, &trainer.params, &data.scene, set, trainer.cfg.eval_batch)?;
    Ok(SetReport::from_outputs(&h, set, data.classes, trainer.cfg.model.d_z()))
}

/// Runs the whole schedule. With `out_dir`, writes periodic, best and final
/// checkpoints, `metrics.csv` and `manifest.json` there.
pub fn train(
    cfg: &TrainConfig,
    scene: &Scene,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let started = Instant::now();
    let mut trainer = Trainer::new(cfg)?;
    if scene.modalities.len() != 2 {
        return Err(crate::Error::Data(format!(
            "training needs two modalities, the scene has {}",
            scene.modalities.len()
        )));
    }
    let data = Prepared::new(scene, cfg.model.classes, cfg.train_per_class, cfg.val_per_class, cfg.seed)?;
    if let Some(dir) = out_dir {
        io::create_dir(dir)?;
    }
    let mut rng = seeded_rng(cfg.seed, 2);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize)> = None;
    for epoch in 0..cfg.epochs {
        let lr = trainer.schedule.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut sums = Components { total: 0.0, idf: 0.0, re: 0.0, iac: 0.0 };
        let mut correct = 0usize;
        let batches = even_batches(&order, cfg.batch_size);
        for idx in &batches {
            let (c, preds) = trainer.step(&data.scene, &data.train, idx, lr)?;
            sums.total += c.total as f64;
            sums.idf += c.idf as f64;
            sums.re += c.re as f64;
            sums.iac += c.iac as f64;
            correct += idx.iter().zip(&preds).filter(|(&i, &p)| data.train.labels[i] == p).count();
        }
        let nb = batches.len() as f64;
        let val = if data.val.is_empty() {
            [Summary { oa: 0.0, aa: 0.0, kappa: 0.0 }; 3]
        } else {
            let h = head_outputs(&trainer.model, &trainer.params, &data.scene, &data.val, cfg.eval_batch)?;
            Classifier::ALL.map(|c| Summary::from(&h.report(c, &data.val, data.classes)))
        };
        let record = EpochRecord {
            epoch,
            lr,
            loss: Components { total: sums.total / nb, idf: sums.idf / nb, re: sums.re / nb, iac: sums.iac / nb },
            train_oa: correct as f64 / data.train.len() as f64,
            val,
        };
        on_epoch(&record);
        let done = epoch + 1;
        if best.is_none_or(|(oa, _)| val[2].oa > oa) {
            best = Some((val[2].oa, done));
            if let Some(dir) = out_dir {
                trainer.checkpoint(done).save(&dir.join("best.ckpt"))?;
            }
        }
        if let Some(dir) = out_dir {
            if done % cfg.checkpoint_every == 0 {
                trainer.checkpoint(done).save(&dir.join(format!("epoch_{done:04}.ckpt")))?;
            }
        }
        history.push(record);
    }
    let final_metrics = FinalMetrics {
        train: report(&trainer, &data, &data.train)?,
        val: if data.val.is_empty() { None } else { Some(report(&trainer, &data, &data.val)?) },
        test: report(&trainer, &data, &data.test)?,
    };
    let checkpoint = trainer.checkpoint(cfg.epochs);
    let manifest = RunManifest {
        config: cfg.clone(),
        seed: cfg.seed,
        dataset_sha256: dataset_hash(scene),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        source_sha256: env!("MIVIT_SOURCE_SHA256").to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        epochs_completed: cfg.epochs,
        best_val_epoch: best.map_or(0, |b| b.1),
        final_metrics,
    };
    if let Some(dir) = out_dir {
        checkpoint.save(&dir.join("final.ckpt"))?;
        io::write_atomic(&dir.join("metrics.csv"), history_csv(&history).as_bytes())?;
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        io::write_atomic(&dir.join("manifest.json"), json.as_bytes())?;
    }
    Ok(TrainOutcome { checkpoint, history, manifest })
}
