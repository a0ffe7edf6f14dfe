//! Datasets: IDX files, block downsampling, synthetic blobs and batching.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::Batch;
use crate::{rng, Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Inputs in `[0, 1]` with integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
    split: Split,
    /// `(rows, cols)` when inputs are images.
    shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(
        inputs: Vec<Vec<f64>>,
        labels: Vec<usize>,
        n_classes: usize,
        split: Split,
        shape: Option<(usize, usize)>,
    ) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::argument(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::argument(format!("label {y} outside 0..{n_classes}")));
        }
        let dim = inputs.first().map_or(0, Vec::len);
        if inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::argument("inputs have differing dimensions"));
        }
        if let Some((r, c)) = shape {
            if r * c != dim {
                return Err(Error::argument(format!("shape {r}x{c} does not match dimension {dim}")));
            }
        }
        Ok(Self {
            inputs,
            labels,
            n_classes,
            split,
            shape,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Borrowed view of every input.
    pub fn input_refs(&self) -> Vec<&[f64]> {
        self.inputs.iter().map(Vec::as_slice).collect()
    }

    pub fn all(&self) -> Batch<'_> {
        Batch {
            inputs: self.input_refs(),
            labels: self.labels.clone(),
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Batch<'_> {
        Batch {
            inputs: indices.iter().map(|&i| self.inputs[i].as_slice()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Images of the first `n` samples of each class, in original order.
    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn take_per_class(&self, n: usize) -> Self {
        let mut seen = vec![0usize; self.n_classes];
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let c = &mut seen[self.labels[i]];
                *c += 1;
                *c <= n
            })
            .collect();
        Self {
            inputs: keep.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone()
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let b = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::format(self.pos as u64, format!("truncated before {what}")))?;
        self.pos = end;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos + n;
        let b = self.bytes.get(self.pos..end).ok_or_else(|| {
            Error::format(
                self.bytes.len() as u64,
                format!("truncated {what}: need {n} bytes from offset {}", self.pos),
            )
        })?;
        self.pos = end;
        Ok(b)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn expect_magic(r: &mut Reader, magic: u32) -> Result<()> {
    let found = r.u32("magic number")?;
    if found != magic {
        return Err(Error::format(
            0,
            format!("bad magic 0x{found:08x}, expected 0x{magic:08x}"),
        ));
    }
    Ok(())
}

/// Parse an IDX image file (`0x803`, count, rows, cols, bytes) and label
/// file (`0x801`, count, bytes). Pixels are scaled by 1/255.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let mut ri = Reader { bytes: images, pos: 0 };
    expect_magic(&mut ri, IDX_IMAGES_MAGIC)?;
    let count = ri.u32("image count")? as usize;
    let rows = ri.u32("row count")? as usize;
    let cols = ri.u32("column count")? as usize;
    let pixels = ri.take(count * rows * cols, "pixel data")?;

    let mut rl = Reader { bytes: labels, pos: 0 };
    expect_magic(&mut rl, IDX_LABELS_MAGIC)?;
    let label_count = rl.u32("label count")? as usize;
    if label_count != count {
        return Err(Error::format(
            4,
            format!("label file holds {label_count} labels, image file {count} images"),
        ));
    }
    let raw_labels = rl.take(count, "label data")?;

    let dim = rows * cols;
    let inputs = (0..count)
        .map(|i| {
            pixels[i * dim..(i + 1) * dim]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect()
        })
        .collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&b| usize::from(b)).collect();
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(inputs, labels, n_classes, Split::Train, Some((rows, cols)))
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = read_file(images_path.as_ref())?;
    let labels = read_file(labels_path.as_ref())?;
    parse_idx(&images, &labels)
}

/// Write `ds` as IDX, quantizing each value to `round(255 v)`.
pub fn write_idx(ds: &Dataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let (rows, cols) = ds.shape.ok_or_else(|| Error::argument("dataset has no image shape"))?;
    if let Some(&y) = ds.labels.iter().find(|&&y| y > 255) {
        return Err(Error::argument(format!("label {y} does not fit in a byte")));
    }
    let mut img = Vec::with_capacity(16 + ds.len() * rows * cols);
    for v in [IDX_IMAGES_MAGIC, ds.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for x in &ds.inputs {
        img.extend(x.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    let mut lab = Vec::with_capacity(8 + ds.len());
    for v in [IDX_LABELS_MAGIC, ds.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend(ds.labels.iter().map(|&y| y as u8));
    for (path, bytes) in [(images_path.as_ref(), img), (labels_path.as_ref(), lab)] {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Block-mean pooling of square images down to `side × side`.
pub fn downsample(ds: &Dataset, side: usize) -> Result<Dataset> {
    let (rows, cols) = ds.shape.ok_or_else(|| Error::argument("dataset has no image shape"))?;
    if rows != cols {
        return Err(Error::argument(format!("images are {rows}x{cols}, not square")));
    }
    if side == 0 || rows % side != 0 {
        return Err(Error::argument(format!("side {side} does not divide {rows}")));
    }
    let f = rows / side;
    let norm = (f * f) as f64;
    let inputs = ds
        .inputs
        .iter()
        .map(|x| {
            let mut out = vec![0.0; side * side];
            for r in 0..rows {
                for c in 0..cols {
                    out[(r / f) * side + c / f] += x[r * cols + c];
                }
            }
            out.iter_mut().for_each(|v| *v /= norm);
            out
        })
        .collect();
    Dataset::new(inputs, ds.labels.clone(), ds.n_classes, ds.split, Some((side, side)))
}

/// `k` Gaussian clusters centered on the first `k` unit axes of `R^d`,
/// clipped to `[0, 1]`. One fifth of each class (rounded down) is held out
/// as the test split.
pub fn synth_blobs(k: usize, d: usize, n_per_class: usize, spread: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if k < 2 {
        return Err(Error::config(format!("synthetic data needs k >= 2, got {k}")));
    }
    if d < k {
        return Err(Error::config(format!(
            "axis-centered clusters need d >= k (d = {d}, k = {k})"
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::config(format!("spread = {spread} must be >= 0")));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n_test = n_per_class / 5;
    let (mut train, mut test) = ((Vec::new(), Vec::new()), (Vec::new(), Vec::new()));
    for class in 0..k {
        let mut stream = rng::stream(seed, &[0x626c6f62, class as u64]);
        for i in 0..n_per_class {
            let x: Vec<f64> = (0..d)
                .map(|j| {
                    let center = if j == class { 1.0 } else { 0.0 };
                    (center + spread * normal.sample(&mut stream)).clamp(0.0, 1.0)
                })
                .collect();
            let dst = if i < n_per_class - n_test {
                &mut train
            } else {
                &mut test
            };
            dst.0.push(x);
            dst.1.push(class);
        }
    }
    Ok((
        Dataset::new(train.0, train.1, k, Split::Train, None)?,
        Dataset::new(test.0, test.1, k, Split::Test, None)?,
    ))
}

/// Shuffle `0..len` with stream `epoch_seed` and cut into batches; the last
/// batch may be short.
pub fn batches(len: usize, batch_size: usize, epoch_seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng::seeded(epoch_seed));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::new();
        for v in [IDX_IMAGES_MAGIC, 4, 2, 2] {
            img.extend_from_slice(&v.to_be_bytes());
        }
        img.extend([0, 255, 128, 1, 10, 20, 30, 40, 255, 255, 255, 255, 0, 0, 0, 0]);
        let mut lab = Vec::new();
        for v in [IDX_LABELS_MAGIC, 4] {
            lab.extend_from_slice(&v.to_be_bytes());
        }
        lab.extend([3, 1, 4, 1]);
        (img, lab)
    }

    #[test]
    fn parse_fixture() {
        let (img, lab) = fixture();
        let ds = parse_idx(&img, &lab).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.n_classes()), (4, 4, 5));
        assert_eq!(ds.inputs()[0][1], 1.0);
        assert_eq!(ds.labels(), &[3, 1, 4, 1]);
    }

    #[test]
    fn malformed_files() {
        let (mut img, lab) = fixture();
        img[3] = 0x02;
        assert!(matches!(parse_idx(&img, &lab), Err(Error::Format { offset: 0, .. })));
        let (img, lab) = fixture();
        assert!(matches!(parse_idx(&img[..20], &lab), Err(Error::Format { .. })));
        assert!(matches!(
            parse_idx(&img[..2], &lab),
            Err(Error::Format { offset: 0, .. })
        ));
        let (img, mut lab) = fixture();
        lab[7] = 3;
        assert!(matches!(parse_idx(&img, &lab), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn downsampling() {
        let ones = Dataset::new(vec![vec![1.0; 16]], vec![0], 1, Split::Train, Some((4, 4))).unwrap();
        let small = downsample(&ones, 2).unwrap();
        assert_eq!(small.inputs()[0], vec![1.0; 4]);
        assert!(downsample(&ones, 3).is_err());
        let big = Dataset::new(vec![vec![0.25; 784]], vec![0], 1, Split::Train, Some((28, 28))).unwrap();
        let half = downsample(&big, 14).unwrap();
        assert_eq!(half.dim(), 196);
        assert!(half.inputs()[0].iter().all(|&v| v == 0.25));
    }

    #[test]
    fn blobs() {
        let (tr, te) = synth_blobs(4, 8, 50, 0.1, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (160, 40));
        for c in 0..4 {
            let n = tr.labels().iter().chain(te.labels()).filter(|&&y| y == c).count();
            assert_eq!(n, 50);
        }
        assert!(tr.inputs().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(synth_blobs(4, 8, 50, 0.1, 3).unwrap(), (tr, te));
        let (tr, _) = synth_blobs(3, 3, 10, 0.0, 0).unwrap();
        assert_eq!(tr.inputs()[0], vec![1.0, 0.0, 0.0]);
        assert!(synth_blobs(1, 3, 10, 0.1, 0).is_err());
    }

    #[test]
    fn batching() {
        let b = batches(10, 32, 7).unwrap();
        assert_eq!(b.len(), 1);
        assert_ne!(b[0], (0..10).collect::<Vec<_>>());
        assert_eq!(batches(10, 3, 7).unwrap(), batches(10, 3, 7).unwrap());
        let b = batches(10, 3, 8).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(batches(3, 0, 0).is_err());
    }
}
