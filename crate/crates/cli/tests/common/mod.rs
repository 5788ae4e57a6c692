#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use eadkit::io::{write_detections, write_tensor};
use eadkit::{BinaryMask, Detection, DetectionSet, ImageTensor, ProbMap, Raster, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const IDS: [&str; 4] = ["a01", "a02", "b01", "b02"];
pub const CLASSES: usize = 5;

pub struct Run {
    pub code: i32,
    pub stderr: String,
}

pub fn eadkit(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_eadkit"))
        .args(args)
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small synthetic dataset: images with masks, two segmentation models'
/// probability maps, three detection models and their ground truth.
pub struct Fixture {
    pub dir: tempfile::TempDir,
}

fn blob_mask(r: &mut ChaCha8Rng, shape: Shape) -> BinaryMask {
    let mut boxes = Vec::new();
    for c in 0..shape.channels {
        if r.random_bool(0.7) {
            let (y, x) = (
                r.random_range(0..shape.height - 6),
                r.random_range(0..shape.width - 6),
            );
            boxes.push((c, y, x, r.random_range(2..6), r.random_range(2..6)));
        }
    }
    BinaryMask::from_fn(shape, |c, y, x| {
        boxes.iter().any(|&(bc, by, bx, h, w)| {
            bc == c && (by..by + h).contains(&y) && (bx..bx + w).contains(&x)
        })
    })
    .unwrap()
}

fn noisy_prob(r: &mut ChaCha8Rng, gt: &BinaryMask) -> ProbMap {
    let data = gt
        .clone()
        .into_vec()
        .into_iter()
        .map(|g| {
            let base: f32 = if g { 0.75 } else { 0.2 };
            (base + r.random_range(-0.2f32..0.2)).clamp(0.0, 1.0)
        })
        .collect();
    ProbMap::new(gt.shape(), data).unwrap()
}

fn jitter(r: &mut ChaCha8Rng, b: &Detection, conf: f64) -> Detection {
    let mut d = |v: f64| v + r.random_range(-1.5..1.5);
    Detection::new(
        b.class_id,
        d(b.x1),
        d(b.y1),
        d(b.x2) + 3.0,
        d(b.y2) + 3.0,
        conf,
    )
    .unwrap()
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        for sub in ["images", "masks", "gt", "model_a", "model_b"] {
            fs::create_dir(root.join(sub)).unwrap();
        }
        let mut r = ChaCha8Rng::seed_from_u64(99);
        let mut gt_sets = Vec::new();
        let mut det_models: Vec<Vec<DetectionSet>> = vec![Vec::new(); 3];
        for id in IDS {
            let img_shape = Shape::new(3, 24, 28);
            let img = ImageTensor::new(
                img_shape,
                (0..img_shape.len()).map(|_| r.random::<f32>()).collect(),
            )
            .unwrap();
            let mask = blob_mask(&mut r, Shape::new(CLASSES, 24, 28));
            write_tensor(root.join("images").join(format!("{id}.eadt")), &img).unwrap();
            write_tensor(root.join("masks").join(format!("{id}.eadt")), &mask).unwrap();
            write_tensor(root.join("gt").join(format!("{id}.eadt")), &mask).unwrap();
            write_tensor(
                root.join("model_a").join(format!("{id}.eadt")),
                &noisy_prob(&mut r, &mask),
            )
            .unwrap();
            write_tensor(
                root.join("model_b").join(format!("{id}.eadt")),
                &noisy_prob(&mut r, &mask),
            )
            .unwrap();

            let gt_boxes: Vec<Detection> = (0..r.random_range(1..4))
                .map(|_| {
                    let (x, y) = (r.random_range(0.0..200.0), r.random_range(0.0..200.0));
                    Detection::new(
                        r.random_range(0..3),
                        x,
                        y,
                        x + r.random_range(10.0..60.0),
                        y + r.random_range(10.0..60.0),
                        1.0,
                    )
                    .unwrap()
                })
                .collect();
            for (m, sets) in det_models.iter_mut().enumerate() {
                let mut boxes = Vec::new();
                for b in &gt_boxes {
                    if r.random_bool(0.8) {
                        let c = r.random_range(0.3..0.95);
                        boxes.push(jitter(&mut r, b, c));
                    }
                }
                if m == 2 || r.random_bool(0.3) {
                    let (x, y) = (r.random_range(300.0..400.0), r.random_range(300.0..400.0));
                    boxes.push(
                        Detection::new(0, x, y, x + 20.0, y + 20.0, r.random_range(0.4..0.9))
                            .unwrap(),
                    );
                }
                sets.push(DetectionSet::new(id, boxes));
            }
            gt_sets.push(DetectionSet::new(id, gt_boxes));
        }
        write_detections(root.join("gt.json"), &gt_sets).unwrap();
        for (m, sets) in det_models.iter().enumerate() {
            write_detections(root.join(format!("det_{m}.json")), sets).unwrap();
        }
        let ids: Vec<String> = (0..643).map(|i| format!("frame_{i:04}")).collect();
        fs::write(root.join("ids.txt"), ids.join("\n") + "\n").unwrap();
        Self { dir }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn s(&self, rel: &str) -> String {
        self.path(rel).to_str().unwrap().to_string()
    }
}

/// Every file under `dir` with its bytes, sorted by relative path. Run
/// reports have their wall-clock field removed.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let mut bytes = fs::read(&path).unwrap();
            let name = path.file_name().unwrap().to_string_lossy();
            if name.ends_with("report.json") {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                v.as_object_mut().unwrap().remove("wall_time_ms");
                bytes = serde_json::to_vec(&v).unwrap();
            }
            out.push((path.strip_prefix(dir).unwrap().to_path_buf(), bytes));
        }
    }
    out.sort();
    out
}
