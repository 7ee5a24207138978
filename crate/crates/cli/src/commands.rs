use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use poks::codec::{encode_sample, select_center, CenterSpec, EncodedSample, ObbParamMode};
use poks::eval::{evaluate_dataset, GroundTruthObject};
use poks::heatmap::{
    render_center_heatmap, render_p_heatmap, render_s_heatmap, CenterMark, GaussianSpec, GridShape,
    PolylineMark, Rendered,
};
use poks::io::{
    dataset_stats, import_coco as import_coco_file, load_annotations, load_predictions,
    predictions_from_ground_truth, split_dataset, write_annotations, write_predictions,
    write_report, write_tensor, Dataset, ImageRecord,
};
use poks::polyline::Layout;
use poks::{par, Error};
use serde::Serialize;

use crate::config::FileConfig;
use crate::{
    EncodeArgs, EvaluateArgs, Failure, HeatmapType, ImportCocoArgs, RenderArgs, SplitArgs,
    StatsArgs, ToPredictionsArgs,
};

pub const ROW_HEADER: &str =
    "poks_all\tpoks_stem\tpoks_vein\tpoks_true\tpoks_pseudo\toks_all\tobb_map50";

fn fmt3(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| {
        Error::Io {
            path: path.into(),
            source: e,
        }
        .into()
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.into(),
            source: e,
        }
        .into()
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn evaluate(a: &EvaluateArgs, cfg: &FileConfig) -> Result<(), Failure> {
    let mut config = cfg.eval.clone();
    for (slot, sigma) in config.oks_params.sigmas.iter_mut().enumerate() {
        let flag = match Layout::role_of_slot(slot) {
            poks::Role::True => a.sigma_true,
            poks::Role::Pseudo => a.sigma_pseudo,
        };
        if let Some(s) = flag {
            *sigma = s;
        }
    }
    if a.voc_11pt {
        config.voc_interpolation = poks::eval::Interpolation::ElevenPoint;
    }
    config.validate()?;

    let dataset = load_annotations(&a.gt)?;
    let dets = load_predictions(&a.pred)?;
    log::info!(
        "{} images, {} leaves, {} detections",
        dataset.images.len(),
        dataset.annotations.len(),
        dets.len()
    );
    let report = evaluate_dataset(&dataset.ground_truth(), &dets, &config)?;
    write_report(&report, &a.out, a.format.into())?;

    let m = &report.map_poks;
    let row = [
        m.all,
        m.stem,
        m.vein,
        m.true_,
        m.pseudo,
        report.map_oks,
        report.map50_obb,
    ]
    .map(fmt3);
    println!("{ROW_HEADER}");
    println!("{}", row.join("\t"));
    Ok(())
}

/// File stems for image ids: unsafe characters become `_`, collisions get an index.
fn file_stems(images: &[ImageRecord]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let clean: String = img
                .image_id
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                        c
                    } else {
                        '_'
                    }
                })
                .collect();
            let stem = if clean.is_empty() || !seen.insert(clean.clone()) {
                format!("{clean}-{i}")
            } else {
                clean
            };
            seen.insert(stem.clone());
            stem
        })
        .collect()
}

fn objects_by_image(dataset: &Dataset) -> Vec<Vec<GroundTruthObject>> {
    let gt = dataset.ground_truth();
    dataset
        .images
        .iter()
        .map(|img| {
            gt.objects
                .iter()
                .filter(|o| o.image_id == img.image_id)
                .cloned()
                .collect()
        })
        .collect()
}

fn object_size(o: &GroundTruthObject) -> (f64, f64) {
    match &o.obb {
        Some(b) => (b.width(), b.height()),
        None => {
            let (lo, hi) = o.polyline.bounds();
            (hi.x - lo.x, hi.y - lo.y)
        }
    }
}

#[derive(Serialize)]
struct EncodedImage<'a> {
    image_id: &'a str,
    downscale_r: u32,
    center: CenterSpec,
    obb_mode: ObbParamMode,
    samples: Vec<EncodedSample>,
    skipped: usize,
}

pub fn encode(a: &EncodeArgs, cfg: &FileConfig) -> Result<(), Failure> {
    let dataset = load_annotations(&a.gt)?;
    let center = a.center.map_or(cfg.center, Into::into);
    let r = a.r.unwrap_or(cfg.downscale_r);
    let mode = a.obb_mode.map_or(cfg.obb_mode, Into::into);
    let per_image = objects_by_image(&dataset);
    let stems = file_stems(&dataset.images);

    let results = par::map_range(dataset.images.len(), |i| -> poks::Result<_> {
        let img = &dataset.images[i];
        let mut samples = Vec::new();
        let mut marks = Vec::new();
        let mut skipped = 0;
        for obj in &per_image[i] {
            match encode_sample(obj, center, r, mode) {
                Ok(s) => {
                    let (width, height) = object_size(obj);
                    marks.push(CenterMark {
                        center: s.center,
                        width,
                        height,
                    });
                    samples.push(s);
                }
                Err(Error::InvalidCenter(msg)) => {
                    log::debug!("{}: skipped leaf: {msg}", img.image_id);
                    skipped += 1;
                }
                Err(e) => return Err(e),
            }
        }
        let grid = GridShape::for_image(img.width, img.height, r)?;
        let heatmap = render_center_heatmap(&marks, grid, &cfg.gaussian)?;
        Ok((samples, skipped, heatmap))
    });

    create_dir(&a.out)?;
    let (mut total, mut skipped_total) = (0, 0);
    for ((img, stem), result) in dataset.images.iter().zip(&stems).zip(results) {
        let (samples, skipped, heatmap) = result?;
        total += samples.len();
        skipped_total += skipped;
        let doc = EncodedImage {
            image_id: &img.image_id,
            downscale_r: r,
            center,
            obb_mode: mode,
            samples,
            skipped,
        };
        write_file(&a.out.join(format!("{stem}.json")), &to_json(&doc))?;
        write_tensor(&heatmap.heatmap, a.out.join(format!("{stem}.center.json")))?;
    }
    println!("encoded: {total}");
    println!("images: {}", dataset.images.len());
    println!("skipped: {skipped_total}");
    Ok(())
}

pub fn render(a: &RenderArgs, cfg: &FileConfig) -> Result<(), Failure> {
    let dataset = load_annotations(&a.gt)?;
    let r = a.r.unwrap_or(cfg.downscale_r);
    let spec = a
        .sigma
        .map_or(cfg.gaussian, |sigma| GaussianSpec::Fixed { sigma });
    spec.validate()?;
    let center = a.center.map_or(cfg.center, Into::into);
    let per_image = objects_by_image(&dataset);
    let stems = file_stems(&dataset.images);
    let suffix = match a.kind {
        HeatmapType::Center => "center",
        HeatmapType::P => "p",
        HeatmapType::S => "s",
    };

    let results = par::map_range(
        dataset.images.len(),
        |i| -> poks::Result<(Rendered, usize)> {
            let img = &dataset.images[i];
            let grid = GridShape::for_image(img.width, img.height, r)?;
            let objects = &per_image[i];
            match a.kind {
                HeatmapType::Center => {
                    let mut no_anchor = 0;
                    let mut marks = Vec::new();
                    for o in objects {
                        match select_center(o, center) {
                            Ok(c) => {
                                let (width, height) = object_size(o);
                                marks.push(CenterMark {
                                    center: c,
                                    width,
                                    height,
                                });
                            }
                            Err(Error::InvalidCenter(_)) => no_anchor += 1,
                            Err(e) => return Err(e),
                        }
                    }
                    Ok((render_center_heatmap(&marks, grid, &spec)?, no_anchor))
                }
                HeatmapType::P | HeatmapType::S => {
                    let marks: Vec<PolylineMark<'_>> = objects
                        .iter()
                        .map(|o| PolylineMark::new(&o.polyline, o.obb.as_ref()))
                        .collect();
                    let out = if a.kind == HeatmapType::P {
                        render_p_heatmap(&marks, grid, &spec)?
                    } else {
                        render_s_heatmap(&marks, grid, &spec)?
                    };
                    Ok((out, 0))
                }
            }
        },
    );

    create_dir(&a.out)?;
    let (mut outside, mut no_anchor, mut channels) = (0, 0, 0);
    for (stem, result) in stems.iter().zip(results) {
        let (rendered, missing) = result?;
        outside += rendered.skipped;
        no_anchor += missing;
        channels = rendered.heatmap.channels();
        write_tensor(
            &rendered.heatmap,
            a.out.join(format!("{stem}.{suffix}.json")),
        )?;
    }
    println!("images: {}", dataset.images.len());
    println!("channels: {channels}");
    println!("outside: {outside}");
    println!("skipped: {no_anchor}");
    Ok(())
}

pub fn stats(a: &StatsArgs) -> Result<(), Failure> {
    let dataset = load_annotations(&a.gt)?;
    print!("{}", to_json(&dataset_stats(&dataset)));
    Ok(())
}

pub fn split(a: &SplitArgs) -> Result<(), Failure> {
    let ratios: [f64; 3] = a
        .ratios
        .as_slice()
        .try_into()
        .map_err(|_| Failure::invalid("--ratios needs exactly three values"))?;
    let dataset = load_annotations(&a.gt)?;
    let ids: Vec<String> = dataset.images.iter().map(|i| i.image_id.clone()).collect();
    let parts = split_dataset(&ids, ratios, a.seed)?;
    create_dir(&a.out)?;
    for (name, part) in ["train", "val", "test"].iter().zip(&parts) {
        let path: PathBuf = a.out.join(format!("{name}.txt"));
        let mut text = part.join("\n");
        if !part.is_empty() {
            text.push('\n');
        }
        write_file(&path, &text)?;
        println!("{name}: {}", part.len());
    }
    Ok(())
}

pub fn import_coco(a: &ImportCocoArgs) -> Result<(), Failure> {
    let dataset = import_coco_file(&a.input, a.source.into())?;
    write_annotations(&dataset, &a.out)?;
    println!("images: {}", dataset.images.len());
    println!("annotations: {}", dataset.annotations.len());
    Ok(())
}

pub fn to_predictions(a: &ToPredictionsArgs) -> Result<(), Failure> {
    let dataset = load_annotations(&a.gt)?;
    let dets = predictions_from_ground_truth(&dataset.ground_truth());
    write_predictions(&dets, &a.out)?;
    println!("predictions: {}", dets.len());
    Ok(())
}
