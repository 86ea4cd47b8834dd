use mivit_autodiff::{Tape, Tensor, Var};

use crate::dataio::{batch_cubes, split_samples, split_set, ModalRaster, SampleSet, Scene};
use crate::error::{Error, Result};

/// A normalised scene with its train / validation / test samples.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub scene: Scene,
    pub train: SampleSet,
    pub val: SampleSet,
    pub test: SampleSet,
    pub classes: usize,
}

/// Per-band min-max normalisation of every modality.
pub fn normalized(scene: &Scene) -> Scene {
    let mut s = scene.clone();
    for m in &mut s.modalities {
        m.normalize_min_max();
    }
    s
}

/// Labeled pixels of the scene in raster order.
pub fn all_samples(scene: &Scene) -> SampleSet {
    split_samples(&scene.labels, 0, 0).map(|(_, all)| all).unwrap_or_default()
}

impl Prepared {
    pub fn new(scene: &Scene, classes: usize, train_per_class: usize, val_per_class: usize, seed: u64) -> Result<Self> {
        if scene.labels.num_classes() > classes {
            return Err(Error::Data(format!(
                "labels use {} classes, the model has {classes}",
                scene.labels.num_classes()
            )));
        }
        let all = all_samples(scene);
        let (train, rest) = split_set(&all, classes, train_per_class, seed)?;
        let (val, test) = split_set(&rest, classes, val_per_class, seed.wrapping_add(1))?;
        Ok(Self { scene: normalized(scene), train, val, test, classes })
    }
}

/// One tensor per cube size, `[B, bands, s, s]`.
pub fn cube_batch(raster: &ModalRaster, centers: &[(usize, usize)], sizes: &[usize]) -> Result<Vec<Tensor<f32>>> {
    sizes.iter().map(|&s| batch_cubes(raster, centers, s)).collect()
}

pub fn constants<T: mivit_autodiff::Element>(t: &mut Tape<T>, cubes: &[Tensor<f32>]) -> Vec<Var> {
    cubes.iter().map(|c| t.constant(c.cast())).collect()
}

/// Splits `0..n` (already permuted as `order`) into `ceil(n / batch)` runs
/// whose sizes differ by at most one.
pub fn even_batches(order: &[usize], batch: usize) -> Vec<&[usize]> {
    let n = order.len();
    if n == 0 {
        return Vec::new();
    }
    let k = n.div_ceil(batch);
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(&order[start..start + len]);
        start += len;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_are_balanced() {
        let order: Vec<usize> = (0..10).collect();
        let b = even_batches(&order, 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![4, 3, 3]);
        assert_eq!(b.concat(), order);
        assert_eq!(even_batches(&order, 64).len(), 1);
    }
}
