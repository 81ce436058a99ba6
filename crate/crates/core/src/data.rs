//! Dataset sources: the `VTCCDS01` binary record format, class-per-directory
//! PNG trees, and a procedural pattern generator.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VtccError};
use crate::image::Image;
use crate::rng::SeededRng;

pub const DATASET_MAGIC: &[u8; 8] = b"VTCCDS01";
pub const UNLABELED: u16 = 0xFFFF;
const HEADER_LEN: usize = 8 + 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    ImageDir,
    BinaryRecords,
    Synthetic,
}

impl std::str::FromStr for DatasetKind {
    type Err = VtccError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image_dir" => Ok(DatasetKind::ImageDir),
            "binary_records" | "binary" => Ok(DatasetKind::BinaryRecords),
            "synthetic" => Ok(DatasetKind::Synthetic),
            other => Err(VtccError::Config(format!("unknown dataset kind `{other}`"))),
        }
    }
}

/// Square 8-bit images with optional labels. Labels are only ever read by
/// evaluation and export code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub channels: usize,
    pub side: usize,
    pixels: Vec<u8>,
    labels: Vec<Option<u16>>,
}

impl Dataset {
    pub fn new(channels: usize, side: usize, pixels: Vec<u8>, labels: Vec<Option<u16>>) -> Result<Self> {
        let per = channels * side * side;
        if per == 0 || pixels.len() != per * labels.len() {
            return Err(VtccError::Contract(format!(
                "{} pixel bytes do not hold {} images of {channels}x{side}x{side}",
                pixels.len(),
                labels.len()
            )));
        }
        if labels.contains(&Some(UNLABELED)) {
            return Err(VtccError::Contract(format!("label {UNLABELED} is reserved for unlabeled records")));
        }
        Ok(Dataset {
            channels,
            side,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_bytes(&self, i: usize) -> &[u8] {
        let per = self.channels * self.side * self.side;
        &self.pixels[i * per..(i + 1) * per]
    }

    pub fn image(&self, i: usize) -> Image {
        Image::from_bytes(self.channels, self.side, self.image_bytes(i)).expect("geometry checked at construction")
    }

    pub fn labels(&self) -> &[Option<u16>] {
        &self.labels
    }

    /// Every label, or a contract error if any record is unlabeled.
    pub fn label_vec(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.map(usize::from).ok_or_else(|| VtccError::Contract(format!("record {i} is unlabeled"))))
            .collect()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    pub fn without_labels(&self) -> Dataset {
        Dataset {
            labels: vec![None; self.len()],
            ..self.clone()
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.pixels.len() + 2 * self.len());
        out.extend_from_slice(DATASET_MAGIC);
        for v in [self.len(), self.channels, self.side] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for i in 0..self.len() {
            out.extend_from_slice(&self.labels[i].unwrap_or(UNLABELED).to_le_bytes());
            out.extend_from_slice(self.image_bytes(i));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..8] != DATASET_MAGIC {
            return Err(VtccError::load(path, "missing VTCCDS01 magic"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
        let (count, channels, side) = (word(0), word(1), word(2));
        if count == 0 {
            return Err(VtccError::load(path, "dataset is empty"));
        }
        if channels == 0 || side == 0 {
            return Err(VtccError::load(path, format!("invalid geometry {channels}x{side}x{side}")));
        }
        let per = channels * side * side;
        let mut pixels = Vec::with_capacity(count * per);
        let mut labels = Vec::with_capacity(count);
        let mut at = HEADER_LEN;
        for i in 0..count {
            if bytes.len() < at + 2 + per {
                return Err(VtccError::load(path, format!("record {i} is truncated")));
            }
            let label = u16::from_le_bytes([bytes[at], bytes[at + 1]]);
            labels.push((label != UNLABELED).then_some(label));
            pixels.extend_from_slice(&bytes[at + 2..at + 2 + per]);
            at += 2 + per;
        }
        if at != bytes.len() {
            return Err(VtccError::load(path, format!("{} trailing bytes after record {}", bytes.len() - at, count - 1)));
        }
        Dataset::new(channels, side, pixels, labels).map_err(|e| VtccError::load(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| VtccError::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| VtccError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| VtccError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// One subdirectory per class (sorted names give label order), PNG files
    /// sorted by name inside each.
    pub fn read_image_dir(root: &Path) -> Result<Self> {
        let mut classes = sorted_entries(root)?;
        classes.retain(|p| p.is_dir());
        if classes.is_empty() {
            return Err(VtccError::load(root, "no class subdirectories"));
        }
        let mut geometry: Option<(usize, usize)> = None;
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        for (label, dir) in classes.iter().enumerate() {
            let label = u16::try_from(label)
                .ok()
                .filter(|l| *l != UNLABELED)
                .ok_or_else(|| VtccError::load(root, "too many classes"))?;
            for file in sorted_entries(dir)? {
                let is_png = file.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
                if !is_png || !file.is_file() {
                    continue;
                }
                let img = read_png(&file)?;
                let g = (img.channels, img.height);
                match geometry {
                    None => geometry = Some(g),
                    Some(expected) if expected != g => {
                        return Err(VtccError::load(
                            &file,
                            format!("geometry {}x{} differs from {}x{}", g.0, g.1, expected.0, expected.1),
                        ))
                    }
                    _ => {}
                }
                pixels.extend(img.to_bytes());
                labels.push(Some(label));
            }
        }
        let (channels, side) = geometry.ok_or_else(|| VtccError::load(root, "dataset is empty"))?;
        Dataset::new(channels, side, pixels, labels)
    }

    pub fn load(path: &Path, kind: DatasetKind) -> Result<Self> {
        match kind {
            DatasetKind::ImageDir => Self::read_image_dir(path),
            DatasetKind::BinaryRecords | DatasetKind::Synthetic => Self::read(path),
        }
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = fs::read_dir(dir)
        .map_err(|e| VtccError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| VtccError::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    out.sort();
    Ok(out)
}

/// Decodes a square 8-bit grayscale or RGB(A) PNG; alpha is dropped.
pub fn read_png(path: &Path) -> Result<Image> {
    let file = fs::File::open(path).map_err(|e| VtccError::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| VtccError::load(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| VtccError::load(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| VtccError::load(path, e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    if w != h {
        return Err(VtccError::load(path, format!("image is {w}x{h}, expected a square")));
    }
    let (stride, keep) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        other => return Err(VtccError::load(path, format!("unsupported color type {other:?}"))),
    };
    let mut data = vec![0f32; keep * w * h];
    for (px, chunk) in buf[..info.buffer_size()].chunks(stride).enumerate() {
        for c in 0..keep {
            data[c * w * h + px] = chunk[c] as f32 / 255.0;
        }
    }
    Image::new(keep, h, w, data)
}

/// Writes a 1- or 3-channel image as an 8-bit PNG.
pub fn write_png(img: &Image, path: &Path) -> Result<()> {
    let color = match img.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(VtccError::Contract(format!("cannot write a {c}-channel PNG"))),
    };
    let file = fs::File::create(path).map_err(|e| VtccError::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let bytes = img.to_bytes();
    let n = img.width * img.height;
    let interleaved: Vec<u8> = (0..n * img.channels)
        .map(|i| bytes[(i % img.channels) * n + i / img.channels])
        .collect();
    let mut writer = encoder.write_header().map_err(|e| VtccError::load(path, e.to_string()))?;
    writer
        .write_image_data(&interleaved)
        .map_err(|e| VtccError::load(path, e.to_string()))?;
    writer.finish().map_err(|e| VtccError::load(path, e.to_string()))?;
    Ok(())
}

/// Procedural pattern families, cycled by class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    HorizontalStripes,
    VerticalStripes,
    Checkerboard,
    Blobs,
    DiagonalStripes,
    AntiDiagonalStripes,
    Rings,
    Spot,
}

impl Pattern {
    pub const ALL: [Pattern; 8] = [
        Pattern::HorizontalStripes,
        Pattern::VerticalStripes,
        Pattern::Checkerboard,
        Pattern::Blobs,
        Pattern::DiagonalStripes,
        Pattern::AntiDiagonalStripes,
        Pattern::Rings,
        Pattern::Spot,
    ];

    pub fn for_class(class: usize) -> Pattern {
        Self::ALL[class % Self::ALL.len()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub side: usize,
    pub seed: u64,
    pub noise: f64,
}

impl SyntheticSpec {
    pub fn new(classes: usize, per_class: usize, side: usize, seed: u64) -> Self {
        SyntheticSpec {
            classes,
            per_class,
            side,
            seed,
            noise: 0.05,
        }
    }

    /// Nominal stripe period in pixels for a class.
    pub fn base_period(&self, class: usize) -> f64 {
        let tier = class / Pattern::ALL.len();
        self.side as f64 / 4.0 * (1.0 + 0.5 * tier as f64)
    }
}

/// One grayscale sample of class `class` in `[0, 1]`.
pub fn render_pattern(spec: &SyntheticSpec, class: usize, rng: &mut SeededRng) -> Image {
    use std::f64::consts::TAU;
    let s = spec.side as f64;
    let period = spec.base_period(class) * rng.uniform_in(0.85, 1.15);
    let phase = rng.uniform_in(0.0, TAU);
    let phase2 = rng.uniform_in(0.0, TAU);
    let amp = rng.uniform_in(0.7, 1.0);
    let jitter = |rng: &mut SeededRng| rng.uniform_in(-s / 8.0, s / 8.0);
    let blob_sigma = s / 8.0;
    let centers: Vec<(f64, f64)> = match Pattern::for_class(class) {
        Pattern::Blobs => vec![
            (s * 0.3 + jitter(rng), s * 0.3 + jitter(rng)),
            (s * 0.7 + jitter(rng), s * 0.7 + jitter(rng)),
        ],
        Pattern::Rings | Pattern::Spot => vec![(s * 0.5 + jitter(rng), s * 0.5 + jitter(rng))],
        _ => Vec::new(),
    };
    let gauss = |x: f64, y: f64, (cx, cy): (f64, f64), sigma: f64| {
        (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp()
    };
    let mut data = Vec::with_capacity(spec.side * spec.side);
    for yi in 0..spec.side {
        for xi in 0..spec.side {
            let (x, y) = (xi as f64 + 0.5, yi as f64 + 0.5);
            let wave = |t: f64| (TAU * t / period + phase).sin();
            let p = match Pattern::for_class(class) {
                Pattern::HorizontalStripes => wave(y),
                Pattern::VerticalStripes => wave(x),
                Pattern::Checkerboard => wave(x) * (TAU * y / period + phase2).sin(),
                Pattern::DiagonalStripes => wave((x + y) / 2f64.sqrt()),
                Pattern::AntiDiagonalStripes => wave((x - y) / 2f64.sqrt()),
                Pattern::Rings => wave(((x - centers[0].0).powi(2) + (y - centers[0].1).powi(2)).sqrt()),
                Pattern::Blobs => {
                    let g = centers.iter().map(|&c| gauss(x, y, c, blob_sigma)).fold(0.0, f64::max);
                    2.0 * g - 1.0
                }
                Pattern::Spot => 2.0 * gauss(x, y, centers[0], 2.0 * blob_sigma) - 1.0,
            };
            let v = 0.5 + 0.4 * amp * p + spec.noise * rng.normal();
            data.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    Image::new(1, spec.side, spec.side, data).expect("side is positive")
}

/// Balanced labeled dataset; sample `i` belongs to class `i mod K`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.classes < 2 || spec.per_class == 0 || spec.side < 16 {
        return Err(VtccError::Config(format!(
            "synthetic data needs K >= 2, per_class >= 1 and side >= 16 (got {}, {}, {})",
            spec.classes, spec.per_class, spec.side
        )));
    }
    if spec.classes >= UNLABELED as usize {
        return Err(VtccError::Config("too many classes".into()));
    }
    let n = spec.classes * spec.per_class;
    let mut pixels = Vec::with_capacity(n * spec.side * spec.side);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % spec.classes;
        let mut rng = SeededRng::derive(spec.seed, &[0x5E7, i as u64]);
        pixels.extend(render_pattern(spec, class, &mut rng).to_bytes());
        labels.push(Some(class as u16));
    }
    Dataset::new(1, spec.side, pixels, labels)
}

/// Writes `dataset` as a class-per-directory PNG tree (`class_00/00000.png`).
pub fn write_image_dir(dataset: &Dataset, root: &Path) -> Result<()> {
    for i in 0..dataset.len() {
        let class = dataset.labels()[i].map_or_else(|| "unlabeled".to_string(), |l| format!("class_{l:02}"));
        let dir = root.join(class);
        fs::create_dir_all(&dir).map_err(|e| VtccError::io(&dir, e))?;
        write_png(&dataset.image(i), &dir.join(format!("{i:05}.png")))?;
    }
    let mut f = fs::File::create(root.join("README")).map_err(|e| VtccError::io(root, e))?;
    writeln!(f, "{} images, {}x{}x{}", dataset.len(), dataset.channels, dataset.side, dataset.side)
        .map_err(|e| VtccError::io(root, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let ds = Dataset::new(1, 2, vec![0, 1, 2, 3, 4, 5, 6, 7], vec![Some(3), None]).unwrap();
        let bytes = ds.to_bytes();
        assert_eq!(&bytes[..8], DATASET_MAGIC);
        assert_eq!(bytes.len(), 20 + 2 * 6);
        let back = Dataset::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn empty_and_truncated_files_are_rejected() {
        let mut header = DATASET_MAGIC.to_vec();
        header.extend([0u32, 1, 4].iter().flat_map(|v| v.to_le_bytes()));
        let err = Dataset::from_bytes(&header, Path::new("x.bin")).unwrap_err();
        assert!(err.to_string().contains("empty"));

        let ds = Dataset::new(1, 2, vec![9; 8], vec![Some(0), Some(1)]).unwrap();
        let bytes = ds.to_bytes();
        let err = Dataset::from_bytes(&bytes[..bytes.len() - 1], Path::new("x.bin")).unwrap_err();
        assert!(err.to_string().contains("record 1"));
        assert!(Dataset::from_bytes(b"NOTMAGIC", Path::new("x.bin")).is_err());
    }

    #[test]
    fn synthetic_is_balanced_and_deterministic() {
        let spec = SyntheticSpec::new(4, 5, 16, 7);
        let a = generate_synthetic(&spec).unwrap();
        assert_eq!(a.len(), 20);
        let labels = a.label_vec().unwrap();
        for k in 0..4 {
            assert_eq!(labels.iter().filter(|&&l| l == k).count(), 5);
        }
        assert_eq!(a.to_bytes(), generate_synthetic(&spec).unwrap().to_bytes());
        assert!(generate_synthetic(&SyntheticSpec::new(1, 5, 16, 7)).is_err());
    }

    #[test]
    fn unlabeled_data_has_no_label_vector() {
        let ds = generate_synthetic(&SyntheticSpec::new(2, 2, 16, 0)).unwrap().without_labels();
        assert!(!ds.has_labels());
        assert!(matches!(ds.label_vec(), Err(VtccError::Contract(_))));
    }
}
