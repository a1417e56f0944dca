//! PubTabNet-layout JSONL annotations plus PNG images.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DataError, Sample};
use crate::tensor::Tensor;
use crate::vocab::{CellAnnotation, TableAnnotation};

/// File name of the annotation list inside a dataset directory.
pub const ANNOTATIONS: &str = "annotations.jsonl";
/// Directory holding the images inside a dataset directory.
pub const IMAGES: &str = "images";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub filename: String,
    pub split: String,
    pub html: HtmlRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HtmlRecord {
    pub structure: StructureRecord,
    pub cells: Vec<CellRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureRecord {
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[u32; 4]>,
}

impl Record {
    pub fn new(
        filename: impl Into<String>,
        split: impl Into<String>,
        ann: &TableAnnotation,
    ) -> Self {
        Self {
            filename: filename.into(),
            split: split.into(),
            html: HtmlRecord {
                structure: StructureRecord {
                    tokens: ann.structure_tokens.clone(),
                },
                cells: ann
                    .cells
                    .iter()
                    .map(|c| CellRecord {
                        tokens: c.content_tokens.clone(),
                        bbox: c.bbox,
                    })
                    .collect(),
            },
        }
    }

    /// Annotation for an image of the given `(h, w, c)` size.
    pub fn annotation(&self, image_size: (usize, usize, usize)) -> TableAnnotation {
        TableAnnotation {
            structure_tokens: self.html.structure.tokens.clone(),
            cells: self
                .html
                .cells
                .iter()
                .map(|c| CellAnnotation {
                    content_tokens: c.tokens.clone(),
                    bbox: c.bbox,
                })
                .collect(),
            image_size,
        }
    }
}

/// A loaded sample with its provenance.
#[derive(Clone, Debug)]
pub struct NamedSample {
    pub filename: String,
    pub split: String,
    pub sample: Sample,
}

/// Outcome of reading a dataset: the good samples and, per bad line, its
/// 1-based line number and the reason it was skipped.
#[derive(Debug, Default)]
pub struct Loaded {
    pub samples: Vec<NamedSample>,
    pub skipped: Vec<(usize, String)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoadOptions {
    /// Channels of the returned images (1 or 3).
    pub channels: usize,
    /// Resize every image to `(h, w)`; boxes stay in original pixels.
    pub resize: Option<(usize, usize)>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            channels: 1,
            resize: None,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

/// Converts an `h×w×c` image in [0, 1] to 8-bit and writes a PNG.
pub fn save_png(image: &Tensor<f32>, path: &Path) -> Result<(), DataError> {
    let &[h, w, c] = image.shape() else {
        return Err(io_err(
            path,
            format!("image must be h×w×c, got {:?}", image.shape()),
        ));
    };
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let color = match c {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        _ => return Err(io_err(path, format!("unsupported channel count {c}"))),
    };
    image::save_buffer_with_format(
        path,
        &bytes,
        w as u32,
        h as u32,
        color,
        image::ImageFormat::Png,
    )
    .map_err(|e| io_err(path, e))
}

/// Reads an image as an `h×w×c` tensor in [0, 1]. Returns the tensor and the
/// original `(h, w)` before any resize.
pub fn load_image(
    path: &Path,
    opts: LoadOptions,
) -> Result<(Tensor<f32>, (usize, usize)), DataError> {
    let img = image::open(path).map_err(|e| io_err(path, e))?;
    let original = (img.height() as usize, img.width() as usize);
    let img = match opts.resize {
        Some((h, w)) if (h, w) != original => {
            img.resize_exact(w as u32, h as u32, image::imageops::FilterType::Triangle)
        }
        _ => img,
    };
    let (h, w) = (img.height() as usize, img.width() as usize);
    let data: Vec<f32> = match opts.channels {
        1 => img.to_luma8().into_raw(),
        3 => img.to_rgb8().into_raw(),
        c => return Err(io_err(path, format!("unsupported channel count {c}"))),
    }
    .into_iter()
    .map(|b| b as f32 / 255.0)
    .collect();
    let t = Tensor::new(vec![h, w, opts.channels], data).map_err(|e| io_err(path, e))?;
    Ok((t, original))
}

/// Writes `dir/annotations.jsonl` and one PNG per sample under
/// `dir/images/`. Files are named `{split}_{index:06}.png`.
pub fn write_dataset(samples: &[Sample], dir: &Path, split: &str) -> Result<(), DataError> {
    let images = dir.join(IMAGES);
    fs::create_dir_all(&images).map_err(|e| io_err(&images, e))?;
    let ann_path = dir.join(ANNOTATIONS);
    let file = File::create(&ann_path).map_err(|e| io_err(&ann_path, e))?;
    let mut out = BufWriter::new(file);
    for (i, s) in samples.iter().enumerate() {
        s.annotation.validate().map_err(DataError::Spec)?;
        let filename = format!("{split}_{i:06}.png");
        save_png(&s.image, &images.join(&filename))?;
        let line = serde_json::to_string(&Record::new(filename, split, &s.annotation))
            .map_err(|e| io_err(&ann_path, e))?;
        writeln!(out, "{line}").map_err(|e| io_err(&ann_path, e))?;
    }
    out.flush().map_err(|e| io_err(&ann_path, e))
}

/// Parses one annotation line and checks that it is usable for training.
pub fn parse_record(line: &str) -> Result<Record, String> {
    let record: Record = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let ann = record.annotation((usize::MAX, usize::MAX, 1));
    if ann.trigger_count() != ann.cells.len() {
        return Err(format!(
            "{} cell tokens but {} cells",
            ann.trigger_count(),
            ann.cells.len()
        ));
    }
    Ok(record)
}

fn resolve_paths(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join(ANNOTATIONS), path.to_path_buf())
    } else {
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (path.to_path_buf(), root)
    }
}

fn image_path(root: &Path, record: &Record) -> PathBuf {
    [root.join(IMAGES), root.join(&record.split)]
        .into_iter()
        .map(|d| d.join(&record.filename))
        .find(|p| p.exists())
        .unwrap_or_else(|| root.join(&record.filename))
}

/// Reads annotation records with their 1-based line numbers, reporting bad
/// lines separately.
#[allow(clippy::type_complexity)]
pub fn read_records(
    path: &Path,
) -> Result<(Vec<(usize, Record)>, Vec<(usize, String)>), DataError> {
    let (ann_path, _) = resolve_paths(path);
    let file = File::open(&ann_path).map_err(|e| io_err(&ann_path, e))?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(&ann_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line) {
            Ok(r) => records.push((i + 1, r)),
            Err(e) => skipped.push((i + 1, e)),
        }
    }
    Ok((records, skipped))
}

/// Loads a dataset directory written by [`write_dataset`], or a PubTabNet
/// JSONL file whose images live next to it (directly, under `images/`, or
/// under a directory named after the split).
pub fn load_dataset(path: &Path, opts: LoadOptions) -> Result<Loaded, DataError> {
    let (_, root) = resolve_paths(path);
    let (records, mut skipped) = read_records(path)?;
    let mut loaded = Loaded::default();
    for (line_no, record) in records {
        let img_path = image_path(&root, &record);
        match load_image(&img_path, opts) {
            Ok((image, (h, w))) => {
                let annotation = record.annotation((h, w, opts.channels));
                loaded.samples.push(NamedSample {
                    filename: record.filename,
                    split: record.split,
                    sample: Sample { image, annotation },
                });
            }
            Err(e) => skipped.push((line_no, e.to_string())),
        }
    }
    skipped.sort_by_key(|(n, _)| *n);
    loaded.skipped = skipped;
    Ok(loaded)
}
