//! Datasets and images: the synthetic colour-pattern task, the CIFAR-10
//! binary reader, pointing-game grids, PPM and PNG files.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;

/// One labelled RGB image, `[3, H, W]` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub label: usize,
}

/// Stacks sample images into a `[N, 3, H, W]` batch.
pub fn stack_images(samples: &[Sample]) -> Result<Tensor> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Data("cannot stack an empty batch".into()))?;
    let dims = first.image.dims().to_vec();
    let mut data = Vec::with_capacity(samples.len() * first.image.numel());
    for s in samples {
        if s.image.dims() != dims.as_slice() {
            return Err(Error::shape(
                "stack_images",
                format!("{:?} vs {:?}", s.image.shape(), first.image.shape()),
            ));
        }
        data.extend_from_slice(s.image.data());
    }
    let mut out = vec![samples.len()];
    out.extend(dims);
    Tensor::new(out, data)
}

pub const SYNTH_CLASSES: [&str; 4] = ["red_disc", "green_square", "blue_cross", "yellow_stripes"];
const SYNTH_COLOURS: [[f32; 3]; 4] = [[0.9, 0.1, 0.1], [0.1, 0.8, 0.15], [0.1, 0.2, 0.9], [0.9, 0.85, 0.1]];

/// `n_per_class` 32x32 images per synthetic class, classes interleaved.
pub fn synth_dataset(n_per_class: usize, seed: u64) -> Result<Vec<Sample>> {
    synth_dataset_sized(n_per_class, 32, seed)
}

/// Synthetic dataset at a custom square resolution (at least 8 pixels).
///
/// Each image is grey value noise with one coloured shape at a random
/// position and scale.
pub fn synth_dataset_sized(n_per_class: usize, size: usize, seed: u64) -> Result<Vec<Sample>> {
    if n_per_class == 0 {
        return Err(Error::Data("n_per_class must be >= 1".into()));
    }
    if size < 8 {
        return Err(Error::Data(format!("image size {size} is below 8")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_per_class * SYNTH_CLASSES.len());
    for _ in 0..n_per_class {
        for label in 0..SYNTH_CLASSES.len() {
            out.push(Sample {
                image: synth_image(label, size, &mut rng)?,
                label,
            });
        }
    }
    Ok(out)
}

fn synth_image(label: usize, size: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let n = size * size;
    // grey texture: smooth blobs of brightness plus per-pixel noise
    let base = rng.random_range(0.3..0.7f32);
    let (fx, fy, phase) = (
        rng.random_range(0.1..0.5f32),
        rng.random_range(0.1..0.5f32),
        rng.random_range(0.0..std::f32::consts::TAU),
    );
    let mut grey = vec![0.0f32; n];
    for (i, g) in grey.iter_mut().enumerate() {
        let (y, x) = ((i / size) as f32, (i % size) as f32);
        let wave = 0.08 * ((fx * x + phase).sin() + (fy * y).cos());
        *g = (base + wave + rng.random_range(-0.08..0.08f32)).clamp(0.0, 1.0);
    }
    let mut img = vec![0.0f32; 3 * n];
    for c in 0..3 {
        img[c * n..(c + 1) * n].copy_from_slice(&grey);
    }

    let s = size as f32 / 32.0;
    let half = rng.random_range(5.0 * s..9.0 * s);
    let margin = half.ceil() as usize + 1;
    let span = size.saturating_sub(2 * margin).max(1);
    let cy = (margin + rng.random_range(0..span)) as f32;
    let cx = (margin + rng.random_range(0..span)) as f32;
    let mut colour = SYNTH_COLOURS[label];
    for v in &mut colour {
        *v = (*v + rng.random_range(-0.08..0.08f32)).clamp(0.0, 1.0);
    }
    let stripe = (2.0 * s).max(1.0);
    for i in 0..n {
        let (y, x) = ((i / size) as f32 + 0.5, (i % size) as f32 + 0.5);
        let (dy, dx) = (y - cy, x - cx);
        let inside = match label {
            0 => dy * dy + dx * dx <= half * half,
            1 => dy.abs() <= half * 0.8 && dx.abs() <= half * 0.8,
            2 => {
                let arm = (half * 0.3).max(1.0);
                (dy.abs() <= arm && dx.abs() <= half) || (dx.abs() <= arm && dy.abs() <= half)
            }
            _ => dy.abs() <= half && dx.abs() <= half && ((dy + half) / stripe) as i32 % 2 == 0,
        };
        if inside {
            for c in 0..3 {
                img[c * n + i] = colour[c];
            }
        }
    }
    Tensor::new(vec![3, size, size], img)
}

const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;
const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const CIFAR_TEST_FILE: &str = "test_batch.bin";

/// Decodes CIFAR-10 binary records: one label byte followed by 3072 pixel
/// bytes in channel-major, row-major order.
pub fn parse_cifar_records(bytes: &[u8]) -> Result<Vec<Sample>> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Data(format!(
            "CIFAR-10 batch of {} bytes is not a whole number of {CIFAR_RECORD}-byte records",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(CIFAR_RECORD)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0] as usize;
            if label >= 10 {
                return Err(Error::Data(format!("record {i}: label {label} out of range")));
            }
            let pixels = rec[1..].iter().map(|&b| b as f32 / 255.0).collect();
            Ok(Sample {
                image: Tensor::new(vec![3, 32, 32], pixels)?,
                label,
            })
        })
        .collect()
}

pub fn read_cifar_batch(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar_records(&bytes).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads the five training batches and the test batch from `dir`.
pub fn read_cifar10(dir: impl AsRef<Path>) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let dir = dir.as_ref();
    let mut train = Vec::with_capacity(50_000);
    for f in CIFAR_TRAIN_FILES {
        train.extend(read_cifar_batch(dir.join(f))?);
    }
    let test = read_cifar_batch(dir.join(CIFAR_TEST_FILE))?;
    Ok((train, test))
}

/// Where one source image sits inside a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub class: usize,
    pub row: usize,
    pub col: usize,
}

/// An `n x n` mosaic of images from distinct classes.
#[derive(Clone, Debug, PartialEq)]
pub struct GridImage {
    pub image: Tensor,
    pub n: usize,
    pub cell_h: usize,
    pub cell_w: usize,
    pub cells: Vec<Cell>,
}

impl GridImage {
    /// Tiles `images` row by row.
    pub fn from_samples(samples: &[&Sample], n: usize) -> Result<GridImage> {
        if n == 0 || samples.len() != n * n {
            return Err(Error::Data(format!("{} images cannot fill a {n}x{n} grid", samples.len())));
        }
        let dims = samples[0].image.dims().to_vec();
        let (c, h, w) = (dims[0], dims[1], dims[2]);
        let mut cells = Vec::with_capacity(n * n);
        for (k, s) in samples.iter().enumerate() {
            if s.image.dims() != dims.as_slice() {
                return Err(Error::shape("grid", "cell images differ in size"));
            }
            if cells.iter().any(|c: &Cell| c.class == s.label) {
                return Err(Error::Data(format!("class {} appears twice in a grid", s.label)));
            }
            cells.push(Cell {
                class: s.label,
                row: k / n,
                col: k % n,
            });
        }
        let (gh, gw) = (n * h, n * w);
        let image = Tensor::from_fn(vec![c, gh, gw], |i| {
            let (ch, rest) = (i / (gh * gw), i % (gh * gw));
            let (y, x) = (rest / gw, rest % gw);
            let s = &samples[(y / h) * n + x / w].image;
            s.data()[ch * h * w + (y % h) * w + x % w]
        })?;
        Ok(GridImage {
            image,
            n,
            cell_h: h,
            cell_w: w,
            cells,
        })
    }

    pub fn height(&self) -> usize {
        self.n * self.cell_h
    }

    pub fn width(&self) -> usize {
        self.n * self.cell_w
    }
}

/// Builds `count` grids from model-ranked samples. Within each class only
/// correctly classified samples are eligible, ranked by the target logit;
/// every grid draws `n*n` distinct classes at random and takes the most
/// confident sample of each class not used by an earlier grid.
pub fn compose_grid(samples_by_class: &[Vec<Sample>], n: usize, model: &Model, count: usize, seed: u64) -> Result<Vec<GridImage>> {
    compose_grid_by(samples_by_class, n, |batch| model.forward(batch), count, seed)
}

/// [`compose_grid`] with an arbitrary scoring function returning
/// `[N, classes]` logits for a `[N, 3, H, W]` batch.
pub fn compose_grid_by(
    samples_by_class: &[Vec<Sample>],
    n: usize,
    score: impl Fn(&Tensor) -> Result<Tensor>,
    count: usize,
    seed: u64,
) -> Result<Vec<GridImage>> {
    if n == 0 {
        return Err(Error::Data("grid size must be >= 1".into()));
    }
    let mut ranked: Vec<Vec<&Sample>> = Vec::with_capacity(samples_by_class.len());
    for (class, samples) in samples_by_class.iter().enumerate() {
        let mut scored = Vec::new();
        for chunk in samples.chunks(64) {
            let logits = score(&stack_images(chunk)?)?;
            let c = *logits.dims().last().unwrap();
            for (row, s) in logits.data().chunks(c).zip(chunk) {
                if s.label != class {
                    return Err(Error::Data(format!("sample labelled {} filed under class {class}", s.label)));
                }
                let best = (0..c).fold(0, |b, k| if row[k] > row[b] { k } else { b });
                if best == class {
                    scored.push((row[class], s));
                }
            }
        }
        // stable: equal confidence keeps dataset order
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        ranked.push(scored.into_iter().map(|(_, s)| s).collect());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next = vec![0usize; ranked.len()];
    let mut grids = Vec::with_capacity(count);
    for g in 0..count {
        let mut open: Vec<usize> = (0..ranked.len()).filter(|&c| next[c] < ranked[c].len()).collect();
        if open.len() < n * n {
            return Err(Error::Data(format!(
                "grid {g}: only {} classes have unused correctly classified samples, {} needed",
                open.len(),
                n * n
            )));
        }
        open.shuffle(&mut rng);
        let picks: Vec<&Sample> = open[..n * n]
            .iter()
            .map(|&c| {
                next[c] += 1;
                ranked[c][next[c] - 1]
            })
            .collect();
        grids.push(GridImage::from_samples(&picks, n)?);
    }
    Ok(grids)
}

/// Groups samples by label for [`compose_grid`].
pub fn by_class(samples: &[Sample], classes: usize) -> Vec<Vec<Sample>> {
    let mut out = vec![Vec::new(); classes];
    for s in samples {
        if s.label < classes {
            out[s.label].push(s.clone());
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ppm" => Ok(ImageFormat::Ppm),
            "png" => Ok(ImageFormat::Png),
            _ => Err(Error::Unknown {
                what: "image format",
                name: s.to_string(),
            }),
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            ImageFormat::Ppm => "ppm",
            ImageFormat::Png => "png",
        }
    }
}

/// `[0, 1]` to a byte, rounding halves up.
pub fn quantize(v: f32) -> u8 {
    (v as f64 * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn check_image(t: &Tensor) -> Result<(usize, usize, usize)> {
    let d = t.dims();
    if d.len() != 3 || !(d[0] == 3 || d[0] == 4) {
        return Err(Error::shape("write_image", format!("expected [3|4, H, W], got {:?}", t.shape())));
    }
    if let Some(v) = t.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("pixel value {v} outside [0, 1]")));
    }
    Ok((d[0], d[1], d[2]))
}

/// Interleaved bytes in pixel order.
fn interleave(t: &Tensor) -> Vec<u8> {
    let d = t.dims();
    let (c, n) = (d[0], d[1] * d[2]);
    let src = t.data();
    let mut out = Vec::with_capacity(c * n);
    for i in 0..n {
        for ch in 0..c {
            out.push(quantize(src[ch * n + i]));
        }
    }
    out
}

const CHECKER_CELL: usize = 4;
const CHECKER_LIGHT: f32 = 1.0;
const CHECKER_DARK: f32 = 0.8;

/// Background shade of the transparency checkerboard at `(y, x)`.
pub fn checker(y: usize, x: usize) -> f32 {
    if (y / CHECKER_CELL + x / CHECKER_CELL).is_multiple_of(2) {
        CHECKER_LIGHT
    } else {
        CHECKER_DARK
    }
}

/// Alpha-blends an RGBA image over a light/dark checkerboard.
pub fn composite_checkerboard(rgba: &Tensor) -> Result<Tensor> {
    let d = rgba.dims();
    if d.len() != 3 || d[0] != 4 {
        return Err(Error::shape("composite", format!("expected [4, H, W], got {:?}", rgba.shape())));
    }
    let (h, w) = (d[1], d[2]);
    let n = h * w;
    let src = rgba.data();
    Tensor::from_fn(vec![3, h, w], |i| {
        let (c, p) = (i / n, i % n);
        let a = src[3 * n + p];
        a * src[c * n + p] + (1.0 - a) * checker(p / w, p % w)
    })
}

/// Binary PPM (P6, maxval 255) bytes. RGBA input is composited over the
/// checkerboard first.
pub fn encode_ppm(t: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = check_image(t)?;
    let rgb = if c == 4 { composite_checkerboard(t)? } else { t.clone() };
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(interleave(&rgb));
    Ok(out)
}

/// Parses a P6 file with maxval 255 into `[3, H, W]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PPM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P6" {
        return Err(Error::Format(format!("unsupported PPM magic {}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PPM header field {s}")));
    let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max != 255 {
        return Err(Error::Format(format!("unsupported PPM maxval {max}")));
    }
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() != 3 * w * h {
        return Err(Error::Format(format!("PPM body has {} bytes, expected {}", body.len(), 3 * w * h)));
    }
    let n = w * h;
    Tensor::from_fn(vec![3, h, w], |i| body[(i % n) * 3 + i / n] as f32 / 255.0)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    decode_ppm(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Writes an RGB or RGBA image with values in `[0, 1]`.
pub fn write_image(t: &Tensor, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        ImageFormat::Ppm => fs::write(path, encode_ppm(t)?).map_err(|e| Error::io(path, e)),
        ImageFormat::Png => {
            let (c, h, w) = check_image(t)?;
            let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
            enc.set_color(if c == 4 { png::ColorType::Rgba } else { png::ColorType::Rgb });
            enc.set_depth(png::BitDepth::Eight);
            let io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
            let mut writer = enc.write_header().map_err(io)?;
            writer.write_image_data(&interleave(t)).map_err(io)?;
            writer.finish().map_err(io)
        }
    }
}

/// Loads an 8-bit RGB or RGBA PNG, or a P6 PPM, as `[3, H, W]`; alpha is
/// dropped.
pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P6") {
        return decode_ppm(&bytes);
    }
    let fmt = |e: png::DecodingError| Error::Format(format!("{}: {e}", path.display()));
    let mut reader = png::Decoder::new(std::io::Cursor::new(bytes)).read_info().map_err(fmt)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(fmt)?;
    let stride = match (info.color_type, info.bit_depth) {
        (png::ColorType::Rgb, png::BitDepth::Eight) => 3,
        (png::ColorType::Rgba, png::BitDepth::Eight) => 4,
        other => return Err(Error::Format(format!("unsupported PNG layout {other:?}"))),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let n = w * h;
    Tensor::from_fn(vec![3, h, w], |i| buf[(i % n) * stride + i / n] as f32 / 255.0)
}
