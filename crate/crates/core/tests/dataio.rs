use std::collections::HashSet;

use mivit::dataio::{extract_cubes, mmrs, split_samples, synth, LabelRaster, ModalRaster, Scene, SynthConfig};
use mivit::Error;
use mivit_oracles as oracle;
use proptest::prelude::*;

fn scene_strategy() -> impl Strategy<Value = Scene> {
    (1usize..9, 1usize..9, prop::collection::vec(1usize..5, 1..4)).prop_flat_map(|(h, w, bands)| {
        let planes: Vec<_> = bands.iter().map(|&b| prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), h * w * b)).collect();
        (planes, prop::collection::vec(-1i32..6, h * w)).prop_map(move |(planes, labels)| {
            let mods = planes.into_iter().zip(&bands).map(|(d, &b)| ModalRaster::new(h, w, b, d).unwrap()).collect();
            Scene::new(mods, LabelRaster::new(h, w, labels).unwrap()).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mmrs_round_trip_is_bitwise(scene in scene_strategy()) {
        let bytes = mmrs::encode(&scene);
        let back = mmrs::decode(&bytes).unwrap();
        for (a, b) in back.modalities.iter().zip(&scene.modalities) {
            prop_assert_eq!(a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
        prop_assert_eq!(back, scene);
    }

    #[test]
    fn truncated_files_are_rejected(scene in scene_strategy(), cut in 1usize..64) {
        let bytes = mmrs::encode(&scene);
        let keep = bytes.len().saturating_sub(cut);
        let is_format_error = matches!(mmrs::decode(&bytes[..keep]), Err(Error::Format { .. }));
        prop_assert!(is_format_error);
    }

    /// Every cube entry comes from the raster pixel the reflect rule names;
    /// values encode their own coordinates, so an out-of-bounds read or a
    /// wrong source pixel would show up as a mismatch.
    #[test]
    fn cubes_read_only_reflected_in_bounds_pixels(
        h in 1usize..10, w in 1usize..10, b in 1usize..3, r in 0usize..10, c in 0usize..10, size in 1usize..12,
    ) {
        prop_assume!(r < h && c < w && size <= 2 * h.min(w));
        let tag = |row: usize, col: usize, band: usize| (1000 * row + 10 * col + band) as f32;
        let data: Vec<f32> = (0..h * w * b).map(|i| tag(i / b / w, (i / b) % w, i % b)).collect();
        let raster = ModalRaster::new(h, w, b, data).unwrap();
        let cube = &extract_cubes(&raster, (r, c), &[size]).unwrap()[0];
        prop_assert_eq!(cube.shape(), &[size, size, b][..]);
        for i in 0..size {
            for j in 0..size {
                let sr = oracle::reflect(r as isize - (size / 2) as isize + i as isize, h);
                let sc = oracle::reflect(c as isize - (size / 2) as isize + j as isize, w);
                for band in 0..b {
                    prop_assert_eq!(cube.data()[(i * size + j) * b + band], tag(sr, sc, band));
                }
            }
        }
    }

    #[test]
    fn split_partitions_the_labeled_pixels(seed in any::<u64>(), n in 0usize..4) {
        let labels: Vec<i32> = (0..48).map(|i| if i % 7 == 0 { -1 } else { i % 3 }).collect();
        let raster = LabelRaster::new(6, 8, labels.clone()).unwrap();
        let (train, test) = split_samples(&raster, n, seed).unwrap();
        let a: HashSet<_> = train.centers.iter().collect();
        let b: HashSet<_> = test.centers.iter().collect();
        prop_assert!(a.is_disjoint(&b));
        prop_assert_eq!(train.count_per_class(3), vec![n; 3]);
        let labeled = labels.iter().filter(|&&l| l >= 0).count();
        prop_assert_eq!(a.len() + b.len(), labeled);
        for (&(r, c), &l) in train.centers.iter().zip(&train.labels).chain(test.centers.iter().zip(&test.labels)) {
            prop_assert_eq!(labels[r * 8 + c], l as i32);
        }
    }
}

#[test]
fn constant_raster_gives_constant_cubes_even_at_corners() {
    let raster = ModalRaster::new(5, 7, 2, vec![0.375; 70]).unwrap();
    for center in [(0, 0), (4, 6), (2, 3)] {
        for cube in extract_cubes(&raster, center, &[1, 4, 8, 10]).unwrap() {
            assert!(cube.data().iter().all(|&v| v == 0.375));
        }
    }
}

#[test]
fn corner_cube_on_a_ramp_matches_hand_reflection() {
    let raster = ModalRaster::new(8, 8, 1, (0..64).map(|v| v as f32).collect()).unwrap();
    let cube = &extract_cubes(&raster, (0, 0), &[8]).unwrap()[0];
    // Rows and columns -4..4 reflect to 4 3 2 1 0 1 2 3.
    let idx = [4usize, 3, 2, 1, 0, 1, 2, 3];
    let want: Vec<f32> = idx.iter().flat_map(|&r| idx.iter().map(move |&c| (r * 8 + c) as f32)).collect();
    assert_eq!(cube.data(), &want[..]);
}

#[test]
fn oversized_cube_is_an_error() {
    let raster = ModalRaster::new(4, 6, 1, vec![0.0; 24]).unwrap();
    assert!(extract_cubes(&raster, (1, 1), &[9]).is_err());
}

#[test]
fn split_membership_changes_with_seed_but_counts_do_not() {
    let labels: Vec<i32> = (0..40).map(|i| i % 4).collect();
    let raster = LabelRaster::new(5, 8, labels).unwrap();
    let (a, at) = split_samples(&raster, 3, 1).unwrap();
    let (b, bt) = split_samples(&raster, 3, 2).unwrap();
    assert_ne!(a.centers, b.centers);
    assert_eq!(a.count_per_class(4), b.count_per_class(4));
    assert_eq!(at.count_per_class(4), vec![7; 4]);
    assert_eq!(bt.count_per_class(4), vec![7; 4]);
    assert_eq!(split_samples(&raster, 3, 1).unwrap().0, a);
}

#[test]
fn split_shortage_names_the_class() {
    let labels: Vec<i32> = (0..12).map(|i| if i < 10 { 0 } else { 1 }).collect();
    let raster = LabelRaster::new(3, 4, labels).unwrap();
    let msg = split_samples(&raster, 3, 0).unwrap_err().to_string();
    assert!(msg.contains("class 1"), "{msg}");
}

#[test]
fn synthetic_scene_is_deterministic_and_file_stable() {
    let cfg = SynthConfig { seed: 7, ..Default::default() };
    let a = mmrs::encode(&synth::generate(&cfg).unwrap().scene);
    let b = mmrs::encode(&synth::generate(&cfg).unwrap().scene);
    assert_eq!(a, b);
}

fn pixels(r: &ModalRaster) -> Vec<Vec<f64>> {
    (0..r.height * r.width)
        .map(|px| r.pixel(px / r.width, px % r.width).iter().map(|&v| v as f64).collect())
        .collect()
}

fn accuracy(pred: &[usize], truth: &[i32]) -> f64 {
    pred.iter().zip(truth).filter(|(p, t)| **p as i32 == **t).count() as f64 / pred.len() as f64
}

#[test]
fn one_modality_is_ambiguous_but_both_separate_every_class() {
    let noisy = synth::generate(&SynthConfig::default()).unwrap();
    let truth = &noisy.scene.labels.data;
    let spectral = oracle::nearest_centroid(&pixels(&noisy.scene.modalities[0]), &noisy.spectral);
    let elevation = oracle::nearest_centroid(&pixels(&noisy.scene.modalities[1]), &noisy.elevation);
    assert!(accuracy(&spectral, truth) < 1.0);
    assert!(accuracy(&elevation, truth) < 1.0);

    let clean = synth::generate(&SynthConfig { noise: 0.0, ..Default::default() }).unwrap();
    let joined = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
        a.iter().zip(b).map(|(x, y)| x.iter().chain(y).copied().collect()).collect()
    };
    let rows = joined(&pixels(&clean.scene.modalities[0]), &pixels(&clean.scene.modalities[1]));
    let centroids = joined(&clean.spectral, &clean.elevation);
    assert_eq!(accuracy(&oracle::nearest_centroid(&rows, &centroids), &clean.scene.labels.data), 1.0);
}

#[test]
fn noiseless_two_class_signatures_are_constant_within_class() {
    let s = synth::generate(&SynthConfig { noise: 0.0, classes: 2, ..Default::default() }).unwrap();
    for m in 0..2 {
        let r = &s.scene.modalities[m];
        let mut seen: Vec<Option<Vec<f32>>> = vec![None; 2];
        for (px, &l) in s.scene.labels.data.iter().enumerate() {
            let v = r.pixel(px / r.width, px % r.width).to_vec();
            match &seen[l as usize] {
                Some(prev) => assert_eq!(prev, &v),
                None => seen[l as usize] = Some(v),
            }
        }
    }
}
