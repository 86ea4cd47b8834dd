use mivit_autodiff::{Tape, Var};

use super::data::{constants, cube_batch, even_batches};
use crate::dataio::{SampleSet, Scene};
use crate::error::{Error, Result};
use crate::metrics::{argmax_rows, MetricsReport};
use crate::model::{global_avg_pool, Mivit, Vit};
use crate::params::ParamStore;

/// Which classifier produces the prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classifier {
    /// Shallow classifier on modality 1 alone.
    Shallow1,
    /// Shallow classifier on modality 2 alone.
    Shallow2,
    Fused,
}

impl Classifier {
    pub const ALL: [Classifier; 3] = [Classifier::Shallow1, Classifier::Shallow2, Classifier::Fused];

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            1 => Ok(Self::Shallow1),
            2 => Ok(Self::Shallow2),
            3 => Ok(Self::Fused),
            _ => Err(Error::Config(format!("classifier must be 1, 2 or 3, got {i}"))),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::Shallow1 => 1,
            Self::Shallow2 => 2,
            Self::Fused => 3,
        }
    }
}

/// Per-sample outputs of every head, row-major `[n, width]`.
#[derive(Clone, Debug, Default)]
pub struct HeadOutputs {
    pub n: usize,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub c: Vec<f64>,
    pub z: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    /// Channel means of `Φ_T¹`, `Φ_T²` and `Φ_T`.
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub phi_t: Vec<f64>,
    /// Class token of the transformer encoder.
    pub cls: Vec<f64>,
}

impl HeadOutputs {
    pub fn dist(&self, c: Classifier) -> &[f64] {
        match c {
            Classifier::Shallow1 => &self.c1,
            Classifier::Shallow2 => &self.c2,
            Classifier::Fused => &self.c,
        }
    }

    pub fn predictions(&self, c: Classifier, classes: usize) -> Vec<usize> {
        argmax_rows(self.dist(c), classes)
    }

    pub fn report(&self, c: Classifier, samples: &SampleSet, classes: usize) -> MetricsReport {
        MetricsReport::from_predictions(&self.predictions(c, classes), &samples.labels, classes)
    }

    /// Mean over samples of `KL(C1‖C)`.
    pub fn mean_kl_c1_c(&self, classes: usize) -> f64 {
        let mut total = 0.0;
        for (p, q) in self.c1.chunks(classes).zip(self.c.chunks(classes)) {
            total += p
                .iter()
                .zip(q)
                .map(|(&a, &b)| a * (a.max(1e-12).ln() - b.max(1e-12).ln()))
                .sum::<f64>();
        }
        total / self.n.max(1) as f64
    }
}

fn push(t: &Tape<f32>, v: Var, dst: &mut Vec<f64>) {
    dst.extend(t.data(v).iter().map(|&x| x as f64));
}

/// Runs every head (no decoder) over `samples` with frozen parameters.
pub fn head_outputs(
    model: &Mivit,
    params: &ParamStore<f32>,
    scene: &Scene,
    samples: &SampleSet,
    batch: usize,
) -> Result<HeadOutputs> {
    if scene.modalities.len() < 2 {
        return Err(Error::Capability("the fused path needs both modalities".into()));
    }
    let sizes = &model.cfg.cube_sizes;
    let order: Vec<usize> = (0..samples.len()).collect();
    let mut out = HeadOutputs { n: samples.len(), ..Default::default() };
    for idx in even_batches(&order, batch.max(1)) {
        let centers: Vec<(usize, usize)> = idx.iter().map(|&i| samples.centers[i]).collect();
        let mut t = Tape::<f32>::new();
        let p = params.bind_frozen(&mut t);
        let e = cube_batch(&scene.modalities[0], &centers, sizes)?;
        let g = cube_batch(&scene.modalities[1], &centers, sizes)?;
        let e = constants(&mut t, &e);
        let g = constants(&mut t, &g);
        let o = model.forward_with(&mut t, &p, &e, &g, false)?;
        for (v, dst) in [
            (o.c1, &mut out.c1),
            (o.c2, &mut out.c2),
            (o.c, &mut out.c),
            (o.z, &mut out.z),
            (o.z1, &mut out.z1),
            (o.z2, &mut out.z2),
        ] {
            push(&t, v, dst);
        }
        for (v, dst) in [(o.phi1, &mut out.phi1), (o.phi2, &mut out.phi2), (o.phi_t, &mut out.phi_t)] {
            let gap = global_avg_pool(&mut t, v)?;
            push(&t, gap, dst);
        }
        let cls = Vit::class_token(&mut t, o.tokens)?;
        push(&t, cls, &mut out.cls);
    }
    Ok(out)
}

/// Metrics of one classifier over `samples`.
pub fn evaluate(
    model: &Mivit,
    params: &ParamStore<f32>,
    scene: &Scene,
    samples: &SampleSet,
    classifier: Classifier,
    batch: usize,
) -> Result<MetricsReport> {
    let preds = predict(model, params, scene, &samples.centers, classifier, batch)?;
    Ok(MetricsReport::from_predictions(&preds, &samples.labels, model.cfg.classes))
}

/// Class predictions at `centers`. The single-modality classifiers read only
/// their own modality, given as `scene.modalities[0]` when the scene holds a
/// single modality.
pub fn predict(
    model: &Mivit,
    params: &ParamStore<f32>,
    scene: &Scene,
    centers: &[(usize, usize)],
    classifier: Classifier,
    batch: usize,
) -> Result<Vec<usize>> {
    let sizes = &model.cfg.cube_sizes;
    let single = scene.modalities.len() == 1;
    let raster_for = |m: usize| -> Result<&crate::dataio::ModalRaster> {
        let r = if single { &scene.modalities[0] } else { &scene.modalities[m] };
        if r.bands != model.cfg.bands[m] {
            return Err(Error::Data(format!(
                "modality {} has {} bands, the model expects {}",
                m + 1,
                r.bands,
                model.cfg.bands[m]
            )));
        }
        Ok(r)
    };
    let order: Vec<usize> = (0..centers.len()).collect();
    let mut preds = Vec::with_capacity(centers.len());
    for idx in even_batches(&order, batch.max(1)) {
        let cs: Vec<(usize, usize)> = idx.iter().map(|&i| centers[i]).collect();
        let mut t = Tape::<f32>::new();
        let p = params.bind_frozen(&mut t);
        let dist = match classifier {
            Classifier::Shallow1 | Classifier::Shallow2 => {
                let m = classifier.index() - 1;
                let cubes = cube_batch(raster_for(m)?, &cs, sizes)?;
                let cubes = constants(&mut t, &cubes);
                model.predict_single(&mut t, &p, m, &cubes)?
            }
            Classifier::Fused => {
                if single {
                    return Err(Error::Capability(
                        "fused prediction needs both modalities; the data holds only one".into(),
                    ));
                }
                let e = constants(&mut t, &cube_batch(raster_for(0)?, &cs, sizes)?);
                let g = constants(&mut t, &cube_batch(raster_for(1)?, &cs, sizes)?);
                model.predict_fused(&mut t, &p, &e, &g)?
            }
        };
        preds.extend(argmax_rows(t.data(dist), model.cfg.classes));
    }
    Ok(preds)
}
