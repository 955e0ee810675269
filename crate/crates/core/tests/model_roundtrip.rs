use salmap::config::PipelineConfig;
use salmap::model_io::{load_model, read_model, save_model, write_model};
use salmap::saliency::{predict_saliency, train_saliency, TrainingImage};
use salmap::synthgen::{generate, SynthSpec};

fn small_spec(seed: u64, count: usize) -> SynthSpec {
    SynthSpec { seed, count, width: 96, height: 72, ..SynthSpec::default() }
}

#[test]
fn saved_model_predicts_bit_identically() {
    let mut cfg = PipelineConfig::default();
    cfg.multiseg.level_count = 3;
    cfg.multiseg.felz_min_size = 20;
    cfg.forest.tree_count = 12;
    cfg.forest.seed = 99;
    let train: Vec<TrainingImage> = generate(&small_spec(1, 6))
        .unwrap()
        .into_iter()
        .map(|s| TrainingImage { image: s.image, gt: s.gt })
        .collect();
    let (model, _) = train_saliency(&train, &cfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.model");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, model);

    let probes = generate(&small_spec(2, 100)).unwrap();
    for (i, p) in probes.iter().enumerate() {
        let a = predict_saliency(&model, &p.image).unwrap().final_map;
        let b = predict_saliency(&loaded, &p.image).unwrap().final_map;
        let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same, "probe {i} differs after reload");
    }

    // the same bytes come back out, apart from the creation timestamp
    let (mut first, mut second) = (Vec::new(), Vec::new());
    write_model(&model, &mut first).unwrap();
    let (again, _) = read_model(&first[..]).unwrap();
    write_model(&again, &mut second).unwrap();
    let strip = |b: &[u8]| {
        String::from_utf8_lossy(b)
            .lines()
            .filter(|l| !l.contains("created_unix"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&first), strip(&second));
}
