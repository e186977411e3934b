//! Datasets: synthetic generators, IDX/CSV ingestion, and a seeded minibatch
//! iterator.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{RngStream, Tensor};

/// A labelled classification dataset.
#[derive(Clone, Debug)]
pub struct Dataset {
    features: Tensor, // [N × D]
    labels: Vec<usize>,
    num_classes: usize,
    split: String,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Dataset> {
        if features.rank() != 2 {
            return Err(Error::Shape("features must be a [N × D] matrix".into()));
        }
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Input(format!("label {bad} out of range [0, {num_classes})")));
        }
        Ok(Dataset { features, labels, num_classes, split: String::new() })
    }

    pub fn with_split(mut self, tag: &str) -> Dataset {
        self.split = tag.to_string();
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> &str {
        &self.split
    }

    /// Row subset in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.feature_dim();
        let mut features = Tensor::zeros(&[indices.len(), d]);
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            for j in 0..d {
                features.set_at(row, j, self.features.at(i, j));
            }
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            num_classes: self.num_classes,
            split: self.split.clone(),
        }
    }

    /// First `n` rows / remaining rows.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let head: Vec<usize> = (0..n.min(self.len())).collect();
        let tail: Vec<usize> = (n.min(self.len())..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    /// Standardizes every feature dimension to zero mean and unit variance.
    /// Constant dimensions are left centered with unit scale.
    pub fn standardize(&mut self) {
        let n = self.len();
        if n == 0 {
            return;
        }
        let d = self.feature_dim();
        for j in 0..d {
            let mut mean = 0.0;
            for i in 0..n {
                mean += self.features.at(i, j);
            }
            mean /= n as f64;
            let mut var = 0.0;
            for i in 0..n {
                let c = self.features.at(i, j) - mean;
                var += c * c;
            }
            var /= n as f64;
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            for i in 0..n {
                let v = (self.features.at(i, j) - mean) / std;
                self.features.set_at(i, j, v);
            }
        }
    }
}

/// Two interleaved half-moons, balanced classes, deterministic under seed.
/// With zero noise the points lie exactly on the parametric arcs.
pub fn two_moons(n: usize, noise_std: f64, rng: &mut RngStream) -> Dataset {
    let n0 = n / 2;
    let n1 = n - n0;
    let mut features = Tensor::zeros(&[n, 2]);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n0 {
        let t = std::f64::consts::PI * i as f64 / (n0.max(2) - 1) as f64;
        let (x, y) = (t.cos(), t.sin());
        features.set_at(i, 0, x + noise_std * rng.next_gaussian());
        features.set_at(i, 1, y + noise_std * rng.next_gaussian());
        labels.push(0);
    }
    for i in 0..n1 {
        let t = std::f64::consts::PI * i as f64 / (n1.max(2) - 1) as f64;
        let (x, y) = (1.0 - t.cos(), 0.5 - t.sin());
        features.set_at(n0 + i, 0, x + noise_std * rng.next_gaussian());
        features.set_at(n0 + i, 1, y + noise_std * rng.next_gaussian());
        labels.push(1);
    }
    Dataset { features, labels, num_classes: 2, split: String::new() }
}

/// `k`-armed spiral with `n` points total, classes as balanced as `n % k`
/// allows.
pub fn spirals(n: usize, k_classes: usize, noise_std: f64, rng: &mut RngStream) -> Dataset {
    assert!(k_classes >= 1);
    let mut features = Tensor::zeros(&[n, 2]);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for c in 0..k_classes {
        let m = n / k_classes + usize::from(c < n % k_classes);
        for i in 0..m {
            let r = i as f64 / m.max(2) as f64 * 4.0 + 0.2;
            let phi = 2.0 * std::f64::consts::PI * (c as f64 / k_classes as f64) + r;
            features.set_at(row, 0, r * phi.cos() + noise_std * rng.next_gaussian());
            features.set_at(row, 1, r * phi.sin() + noise_std * rng.next_gaussian());
            labels.push(c);
            row += 1;
        }
    }
    Dataset { features, labels, num_classes: k_classes, split: String::new() }
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if end > bytes.len() {
        return Err(Error::Format { offset: offset as u64, what: "truncated u32".into() });
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Loads an IDX image/label pair. Pixels are scaled to `[0, 1]` (byte value
/// over 255); no standardization is applied here.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = read_file(images_path)?;
    let lab = read_file(labels_path)?;

    let magic = read_u32_be(&img, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format { offset: 0, what: format!("bad image magic {magic:#010x}") });
    }
    let n = read_u32_be(&img, 4)? as usize;
    let rows = read_u32_be(&img, 8)? as usize;
    let cols = read_u32_be(&img, 12)? as usize;
    let pixels = n * rows * cols;
    if img.len() != 16 + pixels {
        return Err(Error::Format {
            offset: img.len() as u64,
            what: format!("expected {} pixel bytes, file holds {}", pixels, img.len() - 16),
        });
    }

    let magic = read_u32_be(&lab, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format { offset: 0, what: format!("bad label magic {magic:#010x}") });
    }
    let n_labels = read_u32_be(&lab, 4)? as usize;
    if lab.len() != 8 + n_labels {
        return Err(Error::Format {
            offset: lab.len() as u64,
            what: format!("expected {} label bytes, file holds {}", n_labels, lab.len() - 8),
        });
    }
    if n_labels != n {
        return Err(Error::Input(format!("{n} images but {n_labels} labels")));
    }

    let d = rows * cols;
    let mut features = Tensor::zeros(&[n, d]);
    for i in 0..n {
        for j in 0..d {
            features.set_at(i, j, img[16 + i * d + j] as f64 / 255.0);
        }
    }
    let labels: Vec<usize> = lab[8..].iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    Dataset::new(features, labels, num_classes)
}

/// Writes an IDX image/label pair; the inverse of [`load_idx`] for fixtures
/// and round-trip checks. Pixel values must already be in `[0, 1]`.
pub fn save_idx(data: &Dataset, rows: usize, cols: usize, images_path: &Path, labels_path: &Path) -> Result<()> {
    let n = data.len();
    if rows * cols != data.feature_dim() {
        return Err(Error::Shape(format!(
            "{rows}×{cols} grid vs feature dim {}",
            data.feature_dim()
        )));
    }
    let mut img = Vec::with_capacity(16 + n * rows * cols);
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(n as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    for i in 0..n {
        for j in 0..rows * cols {
            img.push((data.features().at(i, j) * 255.0).round() as u8);
        }
    }
    let mut lab = Vec::with_capacity(8 + n);
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(n as u32).to_be_bytes());
    for &y in data.labels() {
        lab.push(y as u8);
    }
    std::fs::write(images_path, img)?;
    std::fs::write(labels_path, lab)?;
    Ok(())
}

/// Loads a CSV table: comma separator, `.` decimal, no quoting, optional
/// header row (detected by a non-numeric first field), label in the final
/// column.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.trim().parse().ok()).collect();
        match parsed {
            Some(v) => rows.push(v),
            None if lineno == 0 => continue, // header
            None => {
                return Err(Error::Format {
                    offset: lineno as u64,
                    what: format!("unparseable row {}", lineno + 1),
                })
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Input("no data rows".into()));
    }
    let width = rows[0].len();
    if width < 2 {
        return Err(Error::Input("need at least one feature column and a label".into()));
    }
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Input("ragged rows".into()));
    }
    let n = rows.len();
    let d = width - 1;
    let mut features = Tensor::zeros(&[n, d]);
    let mut labels = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..d {
            features.set_at(i, j, row[j]);
        }
        let y = row[d];
        if y < 0.0 || y.fract() != 0.0 {
            return Err(Error::Input(format!("row {} label {y} is not a class index", i + 1)));
        }
        labels.push(y as usize);
    }
    let num_classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    Dataset::new(features, labels, num_classes)
}

/// Seeded epoch iterator: each epoch shuffles the index set (Fisher–Yates
/// over the stream) and yields contiguous batches; a short final batch is
/// kept.
pub struct BatchStream {
    dataset: Dataset,
    batch_size: usize,
    rng: RngStream,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchStream {
    pub fn new(dataset: Dataset, batch_size: usize, rng: RngStream) -> Result<BatchStream> {
        if batch_size == 0 {
            return Err(Error::Input("batch size must be positive".into()));
        }
        let mut s = BatchStream { dataset, batch_size, rng, order: Vec::new(), cursor: 0 };
        s.reshuffle();
        Ok(s)
    }

    fn reshuffle(&mut self) {
        let n = self.dataset.len();
        self.order = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.rng.next_index(i + 1);
            self.order.swap(i, j);
        }
        self.cursor = 0;
    }

    /// Next minibatch view; starts a fresh shuffled epoch when exhausted.
    pub fn next_batch(&mut self) -> Dataset {
        if self.cursor >= self.order.len() {
            self.reshuffle();
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.dataset.subset(&self.order[self.cursor..end]);
        self.cursor = end;
        batch
    }

    /// All batches of one epoch, in order.
    pub fn epoch(&mut self) -> Vec<Dataset> {
        self.reshuffle();
        let mut out = Vec::new();
        while self.cursor < self.order.len() {
            out.push(self.next_batch());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_moons_balanced_and_deterministic() {
        let a = two_moons(100, 0.1, &mut RngStream::new(3));
        let b = two_moons(100, 0.1, &mut RngStream::new(3));
        assert_eq!(a.labels(), b.labels());
        assert_eq!(a.features(), b.features());
        assert_eq!(a.labels().iter().filter(|&&y| y == 0).count(), 50);
        assert_eq!(a.num_classes(), 2);
    }

    #[test]
    fn two_moons_zero_noise_on_arcs() {
        let d = two_moons(40, 0.0, &mut RngStream::new(1));
        for i in 0..20 {
            let (x, y) = (d.features().at(i, 0), d.features().at(i, 1));
            assert!((x * x + y * y - 1.0).abs() < 1e-12, "class-0 point off the unit arc");
        }
        for i in 20..40 {
            let (x, y) = (d.features().at(i, 0) - 1.0, d.features().at(i, 1) - 0.5);
            assert!((x * x + y * y - 1.0).abs() < 1e-12, "class-1 point off its arc");
        }
    }

    #[test]
    fn spirals_classes() {
        let d = spirals(90, 3, 0.0, &mut RngStream::new(2));
        for c in 0..3 {
            assert_eq!(d.labels().iter().filter(|&&y| y == c).count(), 30);
        }
    }

    #[test]
    fn batches_cover_dataset_exactly_once() {
        let data = two_moons(23, 0.05, &mut RngStream::new(7));
        let mut stream = BatchStream::new(data.clone(), 5, RngStream::new(11)).unwrap();
        let epoch = stream.epoch();
        assert_eq!(epoch.len(), 5); // 4 full + 1 short
        assert_eq!(epoch.last().unwrap().len(), 3);
        let mut seen: Vec<(u64, u64)> = epoch
            .iter()
            .flat_map(|b| {
                (0..b.len()).map(move |i| {
                    (b.features().at(i, 0).to_bits(), b.features().at(i, 1).to_bits())
                })
            })
            .collect();
        let mut expect: Vec<(u64, u64)> = (0..data.len())
            .map(|i| (data.features().at(i, 0).to_bits(), data.features().at(i, 1).to_bits()))
            .collect();
        seen.sort();
        expect.sort();
        assert_eq!(seen, expect);
    }

    #[test]
    fn batch_full_size_is_whole_dataset() {
        let data = two_moons(16, 0.0, &mut RngStream::new(1));
        let mut stream = BatchStream::new(data.clone(), 16, RngStream::new(5)).unwrap();
        let b = stream.next_batch();
        assert_eq!(b.len(), data.len());
    }

    #[test]
    fn same_seed_same_batches() {
        let data = two_moons(20, 0.0, &mut RngStream::new(1));
        let mut s1 = BatchStream::new(data.clone(), 6, RngStream::new(9)).unwrap();
        let mut s2 = BatchStream::new(data, 6, RngStream::new(9)).unwrap();
        for _ in 0..7 {
            let a = s1.next_batch();
            let b = s2.next_batch();
            assert_eq!(a.labels(), b.labels());
            assert_eq!(a.features(), b.features());
        }
    }

    #[test]
    fn standardize_centers_columns() {
        let mut d = two_moons(50, 0.2, &mut RngStream::new(8));
        d.standardize();
        for j in 0..2 {
            let n = d.len() as f64;
            let mean: f64 = (0..d.len()).map(|i| d.features().at(i, j)).sum::<f64>() / n;
            let var: f64 =
                (0..d.len()).map(|i| d.features().at(i, j).powi(2)).sum::<f64>() / n - mean * mean;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }
}
