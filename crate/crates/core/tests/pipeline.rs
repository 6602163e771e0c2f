use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use shapemap_core::classifier::{classify, load_models, save_models, train};
use shapemap_core::shape::{load_labeled_dir, load_shape2, save_shape};
use shapemap_core::{apply_transform, synth_shape, Point2, Regulators, SimilarityTransform2};

/// ASCII PGM, dark foreground on white.
fn write_pgm(path: &Path, size: usize, inside: impl Fn(f64, f64) -> bool) {
    let mut text = format!("P2\n{size} {size}\n255\n");
    for row in 0..size {
        for col in 0..size {
            let x = (col as f64 + 0.5) / size as f64 * 2.0 - 1.0;
            let y = (row as f64 + 0.5) / size as f64 * 2.0 - 1.0;
            write!(text, "{} ", if inside(x, y) { 0 } else { 255 }).unwrap();
        }
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

fn disc(r: f64) -> impl Fn(f64, f64) -> bool {
    move |x, y| x * x + y * y <= r * r
}

fn rotated_square(half: f64, angle: f64) -> impl Fn(f64, f64) -> bool {
    move |x, y| {
        let (s, c) = angle.sin_cos();
        let (u, v) = (c * x + s * y, -s * x + c * y);
        u.abs() <= half && v.abs() <= half
    }
}

#[test]
fn silhouettes_to_classification() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    for class in ["disc", "square"] {
        fs::create_dir_all(data.join(class)).unwrap();
    }
    for (i, r) in [0.5, 0.6, 0.7].into_iter().enumerate() {
        write_pgm(&data.join("disc").join(format!("d{i}.pgm")), 64, disc(r));
        write_pgm(
            &data.join("square").join(format!("s{i}.pgm")),
            64,
            rotated_square(r * 0.8, 0.2 * i as f64),
        );
    }
    let shapes = load_labeled_dir(&data, false).unwrap();
    assert_eq!(shapes.len(), 6);
    let models = train(&shapes, 40, &Regulators::default()).unwrap();

    let model_path = dir.path().join("model.json");
    save_models(&models, &model_path).unwrap();
    let reloaded = load_models(&model_path).unwrap();
    assert_eq!(reloaded, models);

    let query_disc = dir.path().join("q1.pgm");
    write_pgm(&query_disc, 96, disc(0.55));
    let query_square = dir.path().join("q2.pgm");
    write_pgm(&query_square, 96, rotated_square(0.45, 0.7));
    for (path, expected) in [(query_disc, "disc"), (query_square, "square")] {
        let y = load_shape2(&path, false).unwrap();
        assert_eq!(classify(&y, &reloaded).unwrap().winner, expected, "{}", path.display());
    }
}

#[test]
fn synthetic_shapes_roundtrip_and_classify_under_similarity() {
    let dir = tempfile::tempdir().unwrap();
    for family in ["triangle", "letter-t", "ellipse"] {
        for seed in 0..3 {
            let g = SimilarityTransform2::new(seed as f64, 1.0, Point2::default()).unwrap();
            let s = synth_shape(family, 0.005, 80, &g, seed).unwrap();
            let path = dir.path().join(format!("{family}-{seed}.json"));
            save_shape(&s, &path).unwrap();
            assert_eq!(load_shape2(&path, false).unwrap(), s);
        }
    }
    let shapes = load_labeled_dir(dir.path(), false).unwrap();
    assert_eq!(shapes.len(), 9);
    let models = train(&shapes, 60, &Regulators::default()).unwrap();
    let labels: Vec<&str> = models.iter().map(|m| m.label.as_str()).collect();
    assert_eq!(labels, ["ellipse", "letter-t", "triangle"]);

    let g = SimilarityTransform2::new(2.5, 40.0, Point2::new(-300.0, 12.0)).unwrap();
    for family in ["triangle", "letter-t", "ellipse"] {
        let y = apply_transform(
            &synth_shape(family, 0.005, 150, &SimilarityTransform2::default(), 11).unwrap(),
            &g,
        )
        .unwrap();
        assert_eq!(classify(&y, &models).unwrap().winner, family);
    }
}
