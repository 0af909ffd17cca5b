use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;

use proptest::prelude::*;
use veil_core::dataset::*;
use veil_core::seed::rng_from;
use veil_core::Error;

fn small_config() -> SyntheticConfig {
    SyntheticConfig { num_identities: 4, num_emotions: 3, images_per_cell: 4, image_size: 24, ..Default::default() }
}

/// Nearest class mean in pixel space, fitted on `train`, scored on `test`.
fn centroid_accuracy(train: &[&LabeledImage], test: &[&LabeledImage], task: Task) -> f64 {
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for img in train {
        let entry = sums.entry(img.label(task)).or_insert_with(|| (vec![0.0; img.pixels.len()], 0));
        entry.0.iter_mut().zip(&img.pixels).for_each(|(s, p)| *s += p);
        entry.1 += 1;
    }
    let centroids: Vec<(usize, Vec<f64>)> =
        sums.into_iter().map(|(c, (s, n))| (c, s.into_iter().map(|v| v / n as f64).collect())).collect();
    let hits = test
        .iter()
        .filter(|img| {
            let dist = |c: &[f64]| c.iter().zip(&img.pixels).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = centroids.iter().min_by(|a, b| dist(&a.1).total_cmp(&dist(&b.1))).unwrap();
            best.0 == img.label(task)
        })
        .count();
    hits as f64 / test.len() as f64
}

#[test]
fn default_generation_is_balanced() {
    let images = generate_synthetic(&SyntheticConfig::default()).unwrap();
    assert_eq!(images.len(), 1200);
    let mut per_id: HashMap<usize, usize> = HashMap::new();
    let mut per_em: HashMap<usize, usize> = HashMap::new();
    for img in &images {
        *per_id.entry(img.identity).or_default() += 1;
        *per_em.entry(img.emotion).or_default() += 1;
        assert!(img.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(img.pixels.len(), 48 * 48);
    }
    assert!(per_id.len() == 10 && per_id.values().all(|&n| n == 120));
    assert!(per_em.len() == 4 && per_em.values().all(|&n| n == 300));
    let groups: HashSet<u64> = images.iter().map(|i| i.group_id).collect();
    assert_eq!(groups.len(), 1200);
}

#[test]
fn both_labels_are_learnable_by_a_centroid_oracle() {
    let images = generate_synthetic(&SyntheticConfig::default()).unwrap();
    // Within every cell, the first 20 renders fit and the last 10 are held out.
    let train: Vec<&LabeledImage> = images.iter().enumerate().filter(|(i, _)| i % 30 < 20).map(|p| p.1).collect();
    let test: Vec<&LabeledImage> = images.iter().enumerate().filter(|(i, _)| i % 30 >= 20).map(|p| p.1).collect();
    let id = centroid_accuracy(&train, &test, Task::Identity);
    let em = centroid_accuracy(&train, &test, Task::Emotion);
    assert!(id > 0.8, "identity centroid accuracy {id}");
    assert!(em > 0.8, "emotion centroid accuracy {em}");
}

#[test]
fn zero_jitter_repeats_each_cell() {
    let config = SyntheticConfig {
        jitter: Jitter { identity: 0.0, emotion: 0.0, translation: 0.0 },
        ..small_config()
    };
    let images = generate_synthetic(&config).unwrap();
    for cell in images.chunks(config.images_per_cell) {
        assert!(cell.iter().all(|img| img.pixels == cell[0].pixels));
    }
    assert_ne!(images[0].pixels, images[config.images_per_cell].pixels);
}

#[test]
fn generation_is_deterministic() {
    assert_eq!(generate_synthetic(&small_config()).unwrap(), generate_synthetic(&small_config()).unwrap());
}

#[test]
fn invalid_generator_configs() {
    assert!(generate_synthetic(&SyntheticConfig { images_per_cell: 0, ..small_config() }).is_err());
    assert!(generate_synthetic(&SyntheticConfig { num_identities: 1, ..small_config() }).is_err());
}

#[test]
fn paper_scale_expansion_counts() {
    let config = SyntheticConfig { num_identities: 10, num_emotions: 7, images_per_cell: 1, image_size: 16, ..Default::default() };
    let originals = generate_synthetic(&config).unwrap();
    let jaffe: Vec<LabeledImage> = originals.iter().cycle().take(213).cloned().collect();
    let out = expand_corpus(&jaffe, &AugmentConfig { target_size: 3038, ..Default::default() }, 0).unwrap();
    assert_eq!(out.len(), 3038);
    assert_eq!(&out[..213], jaffe.as_slice());

    let yale: Vec<LabeledImage> = originals.iter().take(60).cloned().collect();
    let out = expand_corpus(&yale, &AugmentConfig { target_size: 3033, ..Default::default() }, 0).unwrap();
    assert_eq!(out.len(), 3033);
    // Copies cycle through the originals in order.
    assert_eq!(out[60 + 61].group_id, yale[1].group_id);
}

#[test]
fn expansion_is_seeded() {
    let originals = generate_synthetic(&small_config()).unwrap();
    let config = AugmentConfig { target_size: 100, ..Default::default() };
    let a = expand_corpus(&originals, &config, 4).unwrap();
    assert_eq!(a, expand_corpus(&originals, &config, 4).unwrap());
    assert_ne!(a, expand_corpus(&originals, &config, 5).unwrap());
}

#[test]
fn expanded_folds_never_split_a_group() {
    let originals = generate_synthetic(&small_config()).unwrap();
    let images = expand_corpus(&originals, &AugmentConfig { target_size: 300, ..Default::default() }, 1).unwrap();
    let plan = make_group_folds(&images, 4, 9).unwrap();
    for fold in 0..4 {
        let (train, test) = plan.split(fold, &images).unwrap();
        let test_groups: HashSet<u64> = test.iter().map(|&i| images[i].group_id).collect();
        assert!(train.iter().all(|&i| !test_groups.contains(&images[i].group_id)));
    }
}

#[test]
fn thousand_groups_deal_evenly_per_stratum() {
    let images = generate_synthetic(&SyntheticConfig { image_size: 16, ..Default::default() }).unwrap();
    let plan = make_group_folds(&images, 10, 3).unwrap();
    assert_eq!(plan.stratification, Stratification::Cell);
    let cell_of: HashMap<u64, (usize, usize)> = images.iter().map(|i| (i.group_id, (i.identity, i.emotion))).collect();
    let mut counts: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (f, groups) in plan.folds.iter().enumerate() {
        for g in groups {
            counts.entry(cell_of[g]).or_insert_with(|| vec![0; 10])[f] += 1;
        }
    }
    for per_fold in counts.values() {
        assert!(per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap() <= 1);
    }
    let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
}

#[test]
fn dataset_round_trip_quantizes_only() {
    let dir = tempfile::tempdir().unwrap();
    let images = generate_synthetic(&small_config()).unwrap();
    save_dataset(&images, dir.path()).unwrap();
    let manifest = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    assert!(manifest.starts_with("filename,identity,emotion,group_id\n"));
    assert!(!manifest.contains('\r'));

    let back = load_dataset(dir.path()).unwrap();
    assert_eq!((back.num_identities, back.num_emotions, back.image_size), (4, 3, 24));
    for (a, b) in images.iter().zip(&back.images) {
        assert_eq!((a.identity, a.emotion, a.group_id), (b.identity, b.emotion, b.group_id));
        assert!(a.pixels.iter().zip(&b.pixels).all(|(x, y)| (x - y).abs() <= 1.0 / 510.0 + 1e-12));
    }
    assert_eq!(make_group_folds(&images, 4, 2).unwrap(), make_group_folds(&back.images, 4, 2).unwrap());
}

#[test]
fn out_of_range_manifest_label_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&generate_synthetic(&small_config()).unwrap(), dir.path()).unwrap();
    let err = load_dataset_with_classes(dir.path(), 3, 3).unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err}");
    assert!(err.to_string().contains(MANIFEST_FILE), "{err}");
}

#[test]
fn malformed_manifest_row_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&generate_synthetic(&small_config()).unwrap(), dir.path()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("img_00000.pgm,two,0,9\n");
    fs::write(&path, text).unwrap();
    match load_dataset(dir.path()).unwrap_err() {
        Error::Format { line, .. } => assert_eq!(line, 4 * 3 * 4 + 2),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn corrupt_pgm_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&generate_synthetic(&small_config()).unwrap(), dir.path()).unwrap();
    let victim = dir.path().join("images").join("img_00003.pgm");
    fs::write(&victim, b"P2\n24 24\n255\n").unwrap();
    let err = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(err.contains("img_00003.pgm"), "{err}");
}

#[test]
fn fold_plan_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let images = generate_synthetic(&small_config()).unwrap();
    let plan = make_group_folds(&images, 4, 0).unwrap();
    let path = dir.path().join("folds.json");
    plan.save(&path).unwrap();
    assert_eq!(FoldPlan::load(&path, plan.stratification).unwrap(), plan);
    fs::write(&path, "[[1,2],[2,3]]").unwrap();
    assert!(FoldPlan::load(&path, Stratification::Cell).is_err());
}

fn toy(ids: usize, emotions: usize, per_cell: usize, copies: usize) -> Vec<LabeledImage> {
    let mut out = Vec::new();
    let mut g = 0;
    for identity in 0..ids {
        for emotion in 0..emotions {
            for _ in 0..per_cell {
                for _ in 0..copies {
                    out.push(LabeledImage { size: 1, pixels: vec![0.5], emotion, identity, group_id: g });
                }
                g += 1;
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn folds_partition_groups(
        seed in any::<u64>(),
        ids in 2usize..6,
        emotions in 1usize..4,
        per_cell in 1usize..12,
        copies in 1usize..4,
        k in 2usize..11,
    ) {
        let images = toy(ids, emotions, per_cell, copies);
        let groups: HashSet<u64> = images.iter().map(|i| i.group_id).collect();
        prop_assume!(groups.len() >= k);
        let plan = make_group_folds(&images, k, seed).unwrap();
        prop_assert_eq!(plan.k(), k);
        let mut seen = HashSet::new();
        for fold in &plan.folds {
            for g in fold {
                prop_assert!(seen.insert(*g), "group {} dealt twice", g);
            }
        }
        prop_assert_eq!(&seen, &groups);
        for fold in 0..k {
            let (train, test) = plan.split(fold, &images).unwrap();
            prop_assert_eq!(train.len() + test.len(), images.len());
            let test_groups: HashSet<u64> = test.iter().map(|&i| images[i].group_id).collect();
            prop_assert!(train.iter().all(|&i| !test_groups.contains(&images[i].group_id)));
        }
    }

    #[test]
    fn augmentation_keeps_labels_and_range(seed in any::<u64>(), sigma in 0.0..0.5f64, degrees in 0.0..45.0f64) {
        let img = LabeledImage {
            size: 12,
            pixels: (0..144).map(|i| (i % 13) as f64 / 12.0).collect(),
            emotion: 2,
            identity: 5,
            group_id: 77,
        };
        let config = AugmentConfig { rotation_degrees: degrees, noise_sigma: sigma, ..Default::default() };
        let out = augment(&img, &config, &mut rng_from(seed));
        prop_assert_eq!((out.emotion, out.identity, out.group_id, out.size), (2, 5, 77, 12));
        prop_assert!(out.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
