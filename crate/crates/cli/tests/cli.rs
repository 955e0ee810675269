use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn salmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_salmap"))
        .args(args)
        .env_remove("SALMAP_JOBS")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, seed: u64, count: usize) {
    let o = salmap(&["synth", "--out", p(dir), "--seed", &seed.to_string(), "--count", &count.to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn quick_model(dir: &Path, data: &Path) -> PathBuf {
    let model = dir.join("m.model");
    let o = salmap(&["train", "--data", p(data), "--out", p(&model), "--trees", "5", "--levels", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    model
}

fn header(model: &Path) -> serde_json::Value {
    let bytes = std::fs::read(model).unwrap();
    let eol = bytes.iter().position(|&b| b == b'\n').unwrap();
    let len: usize = std::str::from_utf8(&bytes[..eol]).unwrap().rsplit(' ').next().unwrap().parse().unwrap();
    serde_json::from_slice(&bytes[eol + 1..eol + 1 + len]).unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn synth_is_byte_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    synth(&a, 9, 3);
    synth(&b, 9, 3);
    for sub in ["images", "masks"] {
        let names = listing(&a.join(sub));
        assert_eq!(names, listing(&b.join(sub)));
        assert_eq!(names.len(), 3);
        for n in names {
            assert_eq!(std::fs::read(a.join(sub).join(&n)).unwrap(), std::fs::read(b.join(sub).join(&n)).unwrap());
        }
    }
    assert!(a.join("masks/synth_0000_segmentation.png").is_file());
}

#[test]
fn synth_accepts_inline_spec() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("d");
    let o = salmap(&["synth", "--out", p(&out), "--spec", r#"{"count": 2, "hair": false, "width": 120, "height": 90}"#]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(listing(&out.join("images")).len(), 2);
    let img = image::open(out.join("images/synth_0001.png")).unwrap();
    assert_eq!((img.width(), img.height()), (120, 90));
    let bad = salmap(&["synth", "--out", p(&out), "--spec", "{not json"]);
    assert!(!bad.status.success());
}

#[test]
fn train_segment_eval_round() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, 4, 4);
    let model = quick_model(t.path(), &data);
    let h = header(&model);
    assert_eq!(h["fusion_weights"].as_array().unwrap().len(), 3);
    assert_eq!(h["config"]["forest"]["tree_count"], 5);

    // one image in, four files out, named after the input
    let single = t.path().join("single");
    let o = salmap(&["segment", "--model", p(&model), "--in", p(&data.join("images/synth_0002.png")), "--out", p(&single)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        listing(&single),
        ["synth_0002_final.png", "synth_0002_initial.png", "synth_0002_overlay.png", "synth_0002_saliency.png"]
    );
    let fin = image::open(single.join("synth_0002_final.png")).unwrap().to_luma8();
    assert_eq!((fin.width(), fin.height()), (400, 300));
    assert!(fin.pixels().all(|v| v.0[0] == 0 || v.0[0] == 255));

    // whole directory, with intermediates
    let seg = t.path().join("seg");
    let o = salmap(&["segment", "--model", p(&model), "--in", p(&data), "--out", p(&seg), "--dump-intermediate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("segmented 4 of 4"));
    let files = listing(&seg);
    for stem in ["synth_0000", "synth_0003"] {
        for suffix in ["final", "initial", "overlay", "saliency", "strip", "circles", "level00", "level02", "phi0200"] {
            assert!(files.contains(&format!("{stem}_{suffix}.png")), "{stem}_{suffix}");
        }
    }

    let csv = t.path().join("metrics.csv");
    let o = salmap(&["eval", "--pred", p(&seg), "--gt", p(&data), "--out", p(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "id,dsc,jsi,acc,sens,spec");
    assert_eq!(lines.len(), 6);
    let mean_dsc: f64 = lines[5].split(',').nth(1).unwrap().parse().unwrap();
    assert!(lines[5].starts_with("mean,") && mean_dsc > 0.5, "{text}");
    assert!(o.stdout.is_empty());
}

#[test]
fn levels_flag_sets_weight_count() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, 5, 3);
    let model = t.path().join("one.model");
    let o = salmap(&["train", "--data", p(&data), "--out", p(&model), "--trees", "3", "--levels", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(header(&model)["fusion_weights"].as_array().unwrap().len(), 1);
}

#[test]
fn default_flags_recorded() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, 6, 2);
    let model = t.path().join("d.model");
    let o = salmap(&["--jobs", "2", "train", "--data", p(&data), "--out", p(&model), "--seed", "77"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let h = header(&model);
    assert_eq!(h["config"]["multiseg"]["level_count"], 15);
    assert_eq!(h["config"]["forest"]["tree_count"], 200);
    assert_eq!(h["seed"], 77);
    assert!(stderr(&o).contains("level weights ["));
}

#[test]
fn training_names_missing_masks() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, 7, 3);
    std::fs::remove_file(data.join("masks/synth_0001_segmentation.png")).unwrap();
    let o = salmap(&["train", "--data", p(&data), "--out", p(&t.path().join("x.model"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("synth_0001_segmentation.png"), "{}", stderr(&o));
    assert!(!t.path().join("x.model").exists());

    let o = salmap(&["train", "--data", p(&data), "--out", p(&t.path().join("x.model")), "--hair-hook", "nope"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn segment_continues_past_bad_images() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, 8, 3);
    let model = quick_model(t.path(), &data);
    std::fs::write(data.join("images/broken.png"), b"not an image").unwrap();
    let out = t.path().join("seg");
    let o = salmap(&["segment", "--model", p(&model), "--in", p(&data), "--out", p(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("broken.png"));
    assert!(stderr(&o).contains("segmented 3 of 4"));
    assert_eq!(listing(&out).len(), 12);
}

#[test]
fn eval_identical_masks_and_stem_mismatch() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, 10, 2);
    let csv = t.path().join("m.csv");
    let o = salmap(&["eval", "--pred", p(&data.join("masks")), "--gt", p(&data), "--out", p(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().last().unwrap().starts_with("mean,1,1,1,1,1"), "{text}");

    let other = t.path().join("other");
    std::fs::create_dir_all(&other).unwrap();
    std::fs::copy(data.join("masks/synth_0000_segmentation.png"), other.join("zzz_final.png")).unwrap();
    let o = salmap(&["eval", "--pred", p(&other), "--gt", p(&data), "--out", p(&t.path().join("n.csv"))]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("zzz") && err.contains("synth_0000"), "{err}");
}
