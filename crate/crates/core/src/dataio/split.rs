use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::raster::LabelRaster;
use crate::error::{Error, Result};

/// Labeled pixel centers with their class ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SampleSet {
    pub centers: Vec<(usize, usize)>,
    pub labels: Vec<usize>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> SampleSet {
        SampleSet {
            centers: idx.iter().map(|&i| self.centers[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn count_per_class(&self, classes: usize) -> Vec<usize> {
        let mut n = vec![0; classes];
        for &l in &self.labels {
            n[l] += 1;
        }
        n
    }

    fn from_labels(labels: &LabelRaster) -> SampleSet {
        let mut s = SampleSet::default();
        for (px, &l) in labels.data.iter().enumerate() {
            if l >= 0 {
                s.centers.push((px / labels.width, px % labels.width));
                s.labels.push(l as usize);
            }
        }
        s
    }
}

/// Draws exactly `per_class` training pixels of every class; all other
/// labeled pixels form the test set. Unlabeled pixels appear in neither.
/// Both sets are in raster order.
pub fn split_samples(labels: &LabelRaster, per_class: usize, seed: u64) -> Result<(SampleSet, SampleSet)> {
    split_set(&SampleSet::from_labels(labels), labels.num_classes(), per_class, seed)
}

/// [`split_samples`] applied to an existing set.
pub fn split_set(all: &SampleSet, classes: usize, per_class: usize, seed: u64) -> Result<(SampleSet, SampleSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; all.len()];
    for class in 0..classes {
        let mut members: Vec<usize> = (0..all.len()).filter(|&i| all.labels[i] == class).collect();
        if members.len() < per_class {
            return Err(Error::Data(format!(
                "class {class} has {} labeled pixels, {per_class} requested for training",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for &i in &members[..per_class] {
            in_train[i] = true;
        }
    }
    let (tr, te): (Vec<usize>, Vec<usize>) = (0..all.len()).partition(|&i| in_train[i]);
    Ok((all.subset(&tr), all.subset(&te)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten_per_class() -> LabelRaster {
        let mut data: Vec<i32> = (0..30).map(|i| i % 3).collect();
        data.extend([-1, -1]);
        LabelRaster::new(4, 8, data).unwrap()
    }

    #[test]
    fn counts_and_disjointness() {
        let (tr, te) = split_samples(&ten_per_class(), 3, 1).unwrap();
        assert_eq!(tr.count_per_class(3), vec![3, 3, 3]);
        assert_eq!(te.count_per_class(3), vec![7, 7, 7]);
        assert!(tr.centers.iter().all(|c| !te.centers.contains(c)));
    }

    #[test]
    fn zero_per_class_puts_everything_in_test() {
        let (tr, te) = split_samples(&ten_per_class(), 0, 1).unwrap();
        assert!(tr.is_empty());
        assert_eq!(te.len(), 30);
    }

    #[test]
    fn seed_changes_membership_not_counts() {
        let (a, _) = split_samples(&ten_per_class(), 4, 1).unwrap();
        let (b, _) = split_samples(&ten_per_class(), 4, 2).unwrap();
        assert_ne!(a.centers, b.centers);
        assert_eq!(a.count_per_class(3), b.count_per_class(3));
    }

    #[test]
    fn shortage_names_the_class() {
        let err = split_samples(&ten_per_class(), 11, 0).unwrap_err().to_string();
        assert!(err.contains("class 0"), "{err}");
    }
}
