//! Datasets: the seeded synthetic generator and the labelled-CSV and IDX
//! loaders. Everything is held as `f32` and cast to the run's dtype.
//!
//! Synthetic samples are emitted class-interleaved (sample `i` has label
//! `i mod K`), and every dataset is split by position: the first 80% train,
//! the rest test. Writing a synthetic set to disk and loading it back
//! therefore yields the same split.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gcopt_core::train::Dataset;
use gcopt_core::{RngStream, Scalar, Tensor};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SampleShape {
    Vector(usize),
    Image { c: usize, h: usize, w: usize },
}

impl SampleShape {
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            SampleShape::Vector(d) => vec![d],
            SampleShape::Image { c, h, w } => vec![c, h, w],
        }
    }

    pub fn len(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub shape: SampleShape,
    /// Noise standard deviation around each class prototype.
    pub spread: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BenchError::Config(format!("synthetic data: {m}")));
        if self.classes < 2 {
            return bad("need at least 2 classes");
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class must be >= 1");
        }
        if self.shape.is_empty() {
            return bad("sample shape has a zero extent");
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return bad("spread must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Csv(PathBuf),
    Idx { images: PathBuf, labels: PathBuf },
}

/// Gaussian clusters (vector mode) or noisy class gratings quantized to
/// 8-bit levels (image mode).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset<f32>> {
    spec.validate()?;
    let k = spec.classes;
    let n = k * spec.samples_per_class;
    let len = spec.shape.len();
    let mut rng = RngStream::new(spec.seed);
    let mut features = Vec::with_capacity(n * len);
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    match spec.shape {
        SampleShape::Vector(d) => {
            let centers: Vec<f64> = (0..k * d).map(|_| rng.normal()).collect();
            for &label in &labels {
                let c = &centers[label * d..(label + 1) * d];
                features.extend(c.iter().map(|&v| (v + spec.spread * rng.normal()) as f32));
            }
        }
        SampleShape::Image { c, h, w } => {
            // libm keeps the images identical across platforms.
            // Per class: spatial frequency, orientation, phase and a
            // per-channel phase step.
            let protos: Vec<[f64; 4]> = (0..k)
                .map(|_| {
                    [
                        rng.uniform(1.0, 4.0),
                        rng.uniform(0.0, core::f64::consts::PI),
                        rng.uniform(0.0, 2.0 * core::f64::consts::PI),
                        rng.uniform(0.0, core::f64::consts::PI),
                    ]
                })
                .collect();
            let tau = 2.0 * core::f64::consts::PI;
            for &label in &labels {
                let [freq, theta, phase, step] = protos[label];
                let (ct, st) = (libm::cos(theta), libm::sin(theta));
                for ch in 0..c {
                    for i in 0..h {
                        for j in 0..w {
                            let u = (j as f64 / w as f64) * ct + (i as f64 / h as f64) * st;
                            let v = 0.5
                                + 0.35 * libm::sin(tau * freq * u + phase + step * ch as f64)
                                + 0.25 * spec.spread * rng.normal();
                            features.push(quantize(v));
                        }
                    }
                }
            }
        }
    }
    let mut dims = vec![n];
    dims.extend(spec.shape.dims());
    Ok(Dataset::new(Tensor::from_vec(&dims, features)?, labels, k)?)
}

fn quantize(v: f64) -> f32 {
    let level = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    level as f32 / 255.0
}

/// First 80% train, remaining 20% test.
pub fn train_test_split<T: Scalar>(data: &Dataset<T>) -> Result<(Dataset<T>, Dataset<T>)> {
    Ok(data.split_at(data.len() * 4 / 5)?)
}

/// Loads a dataset and returns it as `(train, test)` in the run's dtype.
pub fn load_split<T: Scalar>(
    source: &DatasetSource,
    classes: Option<usize>,
    image_dims: Option<[usize; 3]>,
) -> Result<(Dataset<T>, Dataset<T>)> {
    let data = match source {
        DatasetSource::Synthetic(spec) => generate_synthetic(spec)?,
        DatasetSource::Csv(path) => {
            let d = load_csv(path, classes)?;
            match image_dims {
                Some(dims) => reshape_samples(d, &dims)?,
                None => d,
            }
        }
        DatasetSource::Idx { images, labels } => load_idx_pair(images, labels, classes)?,
    };
    let cast = Dataset::new(data.features.cast::<T>(), data.labels, data.classes)?;
    train_test_split(&cast)
}

fn reshape_samples(d: Dataset<f32>, sample: &[usize]) -> Result<Dataset<f32>> {
    let n = d.len();
    let mut dims = vec![n];
    dims.extend_from_slice(sample);
    let features = d.features.reshape(&dims)?;
    Ok(Dataset::new(features, d.labels, d.classes)?)
}

fn check_labels(path: &Path, labels: &[usize], classes: Option<usize>) -> Result<usize> {
    let k = match classes {
        Some(k) => k,
        None => labels.iter().max().map_or(0, |m| m + 1).max(2),
    };
    if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(BenchError::Core(gcopt_core::Error::Data(format!(
            "{}: sample {i} has label {l}, outside 0..{k}",
            path.display()
        ))));
    }
    Ok(k)
}

/// Header row, then one sample per row: features followed by an integer
/// label in the last column.
pub fn load_csv(path: &Path, classes: Option<usize>) -> Result<Dataset<f32>> {
    let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let header = reader.headers().map_err(|e| csv_error(path, &e))?.clone();
    if header.len() < 2 || header.iter().any(|h| h.trim().is_empty()) {
        return Err(BenchError::parse(
            path,
            0,
            "header needs at least one feature column and a label column",
        ));
    }
    let width = header.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(path, &e)),
        }
        let offset = record.position().map_or(0, |p| p.byte());
        if record.len() != width + 1 {
            return Err(BenchError::parse(
                path,
                offset,
                format!("expected {} fields, found {}", width + 1, record.len()),
            ));
        }
        for field in record.iter().take(width) {
            let v: f32 = field
                .trim()
                .parse()
                .map_err(|_| BenchError::parse(path, offset, format!("bad feature `{field}`")))?;
            features.push(v);
        }
        let raw = record[width].trim();
        let label: usize = raw
            .parse()
            .map_err(|_| BenchError::parse(path, offset, format!("bad label `{raw}`")))?;
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(BenchError::parse(path, bytes.len() as u64, "no data rows"));
    }
    let k = check_labels(path, &labels, classes)?;
    let features = Tensor::from_vec(&[labels.len(), width], features)?;
    Ok(Dataset::new(features, labels, k)?)
}

fn csv_error(path: &Path, e: &csv::Error) -> BenchError {
    let offset = e.position().map_or(0, |p| p.byte());
    BenchError::parse(path, offset, e.to_string())
}

pub fn write_csv<T: Scalar>(path: &Path, data: &Dataset<T>) -> Result<()> {
    let mut out = String::new();
    let width = data.sample_len();
    let cols: Vec<String> = (0..width).map(|i| format!("f{i}")).collect();
    out.push_str(&cols.join(","));
    out.push_str(",label\n");
    for (i, label) in data.labels.iter().enumerate() {
        for v in &data.features.data()[i * width..(i + 1) * width] {
            out.push_str(&v.to_f64().to_string());
            out.push(',');
        }
        out.push_str(&label.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| BenchError::io(path, e))
}

/// An IDX array of unsigned bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub const IDX_U8: u8 = 0x08;

/// Parses an unsigned-byte IDX file: two zero bytes, type code `0x08`, the
/// rank, big-endian `u32` extents, then the data.
pub fn parse_idx(path: &Path, bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(BenchError::parse(
            path,
            bytes.len() as u64,
            "file shorter than the 4-byte magic",
        ));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(BenchError::parse(path, 0, format!("bad magic {:02x?}", &bytes[..4])));
    }
    if bytes[2] != IDX_U8 {
        return Err(BenchError::parse(
            path,
            2,
            format!("unsupported element type 0x{:02x}", bytes[2]),
        ));
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(BenchError::parse(path, 3, "rank 0"));
    }
    let mut dims = Vec::with_capacity(rank);
    for r in 0..rank {
        let at = 4 + 4 * r;
        let Some(b) = bytes.get(at..at + 4) else {
            return Err(BenchError::parse(
                path,
                bytes.len() as u64,
                format!("truncated extent {r}"),
            ));
        };
        dims.push(u32::from_be_bytes(b.try_into().unwrap()) as usize);
    }
    let start = 4 + 4 * rank;
    let count: usize = dims.iter().product();
    let have = bytes.len() - start;
    if have < count {
        return Err(BenchError::parse(
            path,
            bytes.len() as u64,
            format!("truncated data: expected {count} bytes after offset {start}, found {have}"),
        ));
    }
    if have > count {
        return Err(BenchError::parse(
            path,
            (start + count) as u64,
            "trailing bytes after data",
        ));
    }
    Ok(IdxArray {
        dims,
        data: bytes[start..].to_vec(),
    })
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
    parse_idx(path, &bytes)
}

pub fn encode_idx(a: &IdxArray) -> Vec<u8> {
    let mut out = vec![0, 0, IDX_U8, a.dims.len() as u8];
    for &d in &a.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&a.data);
    out
}

/// Images (rank ≥ 2) and labels (rank 1) with the same item count. Pixels
/// are rescaled to `[0, 1]`; a rank-3 file becomes single-channel images.
pub fn load_idx_pair(images: &Path, labels: &Path, classes: Option<usize>) -> Result<Dataset<f32>> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    if img.dims.len() < 2 {
        return Err(BenchError::parse(images, 3, "image file needs rank >= 2"));
    }
    if lab.dims.len() != 1 {
        return Err(BenchError::parse(labels, 3, "label file must have rank 1"));
    }
    if img.dims[0] != lab.dims[0] {
        return Err(BenchError::Core(gcopt_core::Error::Data(format!(
            "{} images but {} labels",
            img.dims[0], lab.dims[0]
        ))));
    }
    let mut dims = img.dims.clone();
    if dims.len() == 3 {
        dims.insert(1, 1);
    }
    if dims.contains(&0) {
        return Err(BenchError::parse(images, 4, "zero extent"));
    }
    let labels_v: Vec<usize> = lab.data.iter().map(|&b| b as usize).collect();
    let k = check_labels(labels, &labels_v, classes)?;
    let features = img.data.iter().map(|&b| b as f32 / 255.0).collect();
    Ok(Dataset::new(Tensor::from_vec(&dims, features)?, labels_v, k)?)
}

/// Writes an image-mode dataset as an IDX pair. Pixels must sit on the
/// 8-bit grid, as synthetic images do.
pub fn write_idx_pair<T: Scalar>(images: &Path, labels: &Path, data: &Dataset<T>) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.features.len());
    for v in data.features.data() {
        let level = v.to_f64() as f32 * 255.0;
        let r = level.round();
        if !(0.0..=255.0).contains(&r) || (level - r).abs() > 1e-3 {
            return Err(BenchError::Config(
                "IDX output needs 8-bit image data (use image_dims with synthetic data)".into(),
            ));
        }
        bytes.push(r as u8);
    }
    let img = IdxArray {
        dims: data.features.dims().to_vec(),
        data: bytes,
    };
    let lab = IdxArray {
        dims: vec![data.len()],
        data: data.labels.iter().map(|&l| l as u8).collect(),
    };
    if data.classes > 256 {
        return Err(BenchError::Config("IDX labels hold at most 256 classes".into()));
    }
    write_file(images, &encode_idx(&img))?;
    write_file(labels, &encode_idx(&lab))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    f.write_all(bytes).map_err(|e| BenchError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(classes: usize, per: usize, spread: f64) -> SyntheticSpec {
        SyntheticSpec {
            classes,
            samples_per_class: per,
            shape: SampleShape::Vector(64),
            spread,
            seed: 3,
        }
    }

    #[test]
    fn synthetic_shapes_and_determinism() {
        let d = generate_synthetic(&spec(10, 500, 1.0)).unwrap();
        assert_eq!(d.features.dims(), &[5000, 64]);
        assert_eq!(d, generate_synthetic(&spec(10, 500, 1.0)).unwrap());
        let (train, test) = train_test_split(&d).unwrap();
        assert_eq!((train.len(), test.len()), (4000, 1000));
        for k in 0..10 {
            assert_eq!(train.labels.iter().filter(|&&l| l == k).count(), 400);
        }
    }

    #[test]
    fn zero_spread_collapses_each_class() {
        let d = generate_synthetic(&spec(2, 5, 0.0)).unwrap();
        let x = d.features.data();
        assert_eq!(&x[0..64], &x[128..192]);
        assert_ne!(&x[0..64], &x[64..128]);
    }

    #[test]
    fn degenerate_specs() {
        assert!(generate_synthetic(&spec(1, 5, 1.0)).is_err());
        assert!(generate_synthetic(&spec(2, 0, 1.0)).is_err());
        assert!(generate_synthetic(&spec(2, 5, -1.0)).is_err());
        let mut s = spec(2, 5, 1.0);
        s.shape = SampleShape::Image { c: 1, h: 0, w: 3 };
        assert!(generate_synthetic(&s).is_err());
    }

    #[test]
    fn image_mode_is_on_the_byte_grid() {
        let mut s = spec(3, 4, 0.5);
        s.shape = SampleShape::Image { c: 2, h: 5, w: 6 };
        let d = generate_synthetic(&s).unwrap();
        assert_eq!(d.features.dims(), &[12, 2, 5, 6]);
        for &v in d.features.data() {
            assert!((0.0..=1.0).contains(&v));
            assert_eq!(quantize(v as f64), v);
        }
    }

    #[test]
    fn idx_round_trip_and_errors() {
        let a = IdxArray {
            dims: vec![2, 2, 3],
            data: (0..12).collect(),
        };
        let bytes = encode_idx(&a);
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        let p = Path::new("mem");
        assert_eq!(parse_idx(p, &bytes).unwrap(), a);
        let off = |r: Result<IdxArray>| match r {
            Err(BenchError::Parse { offset, .. }) => offset,
            other => panic!("{other:?}"),
        };
        assert_eq!(off(parse_idx(p, &bytes[..2])), 2);
        assert_eq!(off(parse_idx(p, &bytes[..9])), 9);
        assert_eq!(off(parse_idx(p, &bytes[..20])), 20);
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(off(parse_idx(p, &long)), 16 + 12);
        let mut bad = bytes.clone();
        bad[2] = 0x0d;
        assert_eq!(off(parse_idx(p, &bad)), 2);
        bad[1] = 1;
        assert_eq!(off(parse_idx(p, &bad)), 0);
    }
}
