use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DataRange, Tensor};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
enum Pixels {
    /// `byte / 255 + offset`
    Bytes { data: Vec<u8>, offset: f64 },
    Dense(Vec<f64>),
}

/// Labelled images with a common value range.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pixels: Pixels,
    image_shape: Vec<usize>,
    labels: Vec<u8>,
    range: DataRange,
}

impl Dataset {
    /// Builds a dataset from dense images; every value must lie in `range`.
    pub fn from_dense(
        image_shape: Vec<usize>,
        images: Vec<f64>,
        labels: Vec<u8>,
        range: DataRange,
    ) -> Result<Self> {
        let dim: usize = image_shape.iter().product();
        if dim == 0 || images.len() != dim * labels.len() {
            return Err(Error::data(format!(
                "{} values do not form {} images of {dim}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(i) = images.iter().position(|v| !range.contains(*v)) {
            return Err(Error::data(format!(
                "value {} at index {i} outside [{}, {}]",
                images[i], range.x_min, range.x_max
            )));
        }
        Ok(Self { pixels: Pixels::Dense(images), image_shape, labels, range })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.image_shape.iter().product()
    }

    pub fn image_shape(&self) -> &[usize] {
        &self.image_shape
    }

    pub fn range(&self) -> DataRange {
        self.range
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn image_into(&self, i: usize, out: &mut [f64]) {
        let d = self.dim();
        match &self.pixels {
            Pixels::Bytes { data, offset } => {
                for (o, &b) in out.iter_mut().zip(&data[i * d..(i + 1) * d]) {
                    *o = b as f64 / 255.0 + offset;
                }
            }
            Pixels::Dense(v) => out.copy_from_slice(&v[i * d..(i + 1) * d]),
        }
    }

    pub fn image(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.image_into(i, &mut out);
        out
    }

    pub fn image_tensor(&self, i: usize) -> Tensor {
        Tensor::new(self.image_shape.clone(), self.image(i)).expect("dataset values are finite")
    }

    /// The first `n` examples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let d = self.dim();
        let pixels = match &self.pixels {
            Pixels::Bytes { data, offset } => {
                Pixels::Bytes { data: data[..n * d].to_vec(), offset: *offset }
            }
            Pixels::Dense(v) => Pixels::Dense(v[..n * d].to_vec()),
        };
        Dataset {
            pixels,
            image_shape: self.image_shape.clone(),
            labels: self.labels[..n].to_vec(),
            range: self.range,
        }
    }

    /// Every value and the range translated by `s`.
    pub fn shifted(&self, s: f64) -> Dataset {
        let pixels = match &self.pixels {
            Pixels::Bytes { data, offset } => Pixels::Bytes { data: data.clone(), offset: offset + s },
            Pixels::Dense(v) => Pixels::Dense(v.iter().map(|x| x + s).collect()),
        };
        Dataset {
            pixels,
            image_shape: self.image_shape.clone(),
            labels: self.labels.clone(),
            range: self.range.shifted(s),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl Cursor<'_> {
    fn u32_be(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| self.truncated(4))?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn truncated(&self, wanted: usize) -> Error {
        Error::Format {
            offset: self.bytes.len() as u64,
            message: format!(
                "{} truncated: needed {wanted} bytes at offset {}, file has {}",
                self.what,
                self.pos,
                self.bytes.len()
            ),
        }
    }
}

fn parse_images(bytes: &[u8]) -> Result<(Vec<u8>, Vec<usize>, usize)> {
    let mut c = Cursor { bytes, pos: 0, what: "image file" };
    let magic = c.u32_be()?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        });
    }
    let count = c.u32_be()? as usize;
    let rows = c.u32_be()? as usize;
    let cols = c.u32_be()? as usize;
    let needed = count * rows * cols;
    let body = bytes.get(c.pos..c.pos + needed).ok_or_else(|| c.truncated(needed))?;
    if bytes.len() != c.pos + needed {
        return Err(Error::Format {
            offset: (c.pos + needed) as u64,
            message: format!("{} trailing bytes after image data", bytes.len() - c.pos - needed),
        });
    }
    Ok((body.to_vec(), vec![rows, cols], count))
}

fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut c = Cursor { bytes, pos: 0, what: "label file" };
    let magic = c.u32_be()?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        });
    }
    let count = c.u32_be()? as usize;
    let body = bytes.get(c.pos..c.pos + count).ok_or_else(|| c.truncated(count))?;
    if let Some(i) = body.iter().position(|&l| l > 9) {
        return Err(Error::Format {
            offset: (c.pos + i) as u64,
            message: format!("label {} exceeds 9", body[i]),
        });
    }
    Ok(body.to_vec())
}

/// Reads an IDX image/label pair, scaling bytes by 1/255 into `[0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = std::fs::read(images_path.as_ref())?;
    let labels = std::fs::read(labels_path.as_ref())?;
    parse_idx(&images, &labels)
}

pub(crate) fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (data, shape, count) = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if labels.len() != count {
        return Err(Error::data(format!("{count} images but {} labels", labels.len())));
    }
    if count == 0 {
        return Err(Error::data("IDX files contain no examples"));
    }
    Ok(Dataset {
        pixels: Pixels::Bytes { data, offset: 0.0 },
        image_shape: shape,
        labels,
        range: DataRange::unit(),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn idx_images(count: u32, rows: u32, cols: u32, body: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for w in [IMAGES_MAGIC, count, rows, cols] {
            v.extend_from_slice(&w.to_be_bytes());
        }
        v.extend_from_slice(body);
        v
    }

    pub(crate) fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn parses_and_scales() {
        let ds = parse_idx(&idx_images(2, 1, 2, &[0, 255, 51, 102]), &idx_labels(&[3, 9])).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.image(0), vec![0.0, 1.0]);
        assert_eq!(ds.image(1), vec![0.2, 0.4]);
        assert_eq!(ds.label(1), 9);
        assert_eq!(ds.range(), DataRange::unit());
    }

    #[test]
    fn bad_magic() {
        let mut img = idx_images(1, 1, 1, &[0]);
        img[3] = 0x01;
        let err = parse_idx(&img, &idx_labels(&[0])).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");
        let err = parse_idx(&idx_images(1, 1, 1, &[0]), &idx_images(1, 1, 1, &[0])).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");
    }

    #[test]
    fn truncated_and_bad_labels() {
        let err = parse_idx(&idx_images(2, 2, 2, &[0; 5]), &idx_labels(&[0, 1])).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 21, .. }), "{err}");
        let err = parse_idx(&idx_images(1, 1, 1, &[0]), &idx_labels(&[10])).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 8, .. }), "{err}");
        let err = parse_idx(&idx_images(1, 1, 1, &[0])[..10], &idx_labels(&[1])).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
        let err = parse_idx(&idx_images(2, 1, 1, &[0, 0]), &idx_labels(&[1])).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn shift_moves_values_and_range() {
        let ds = parse_idx(&idx_images(1, 1, 2, &[0, 255]), &idx_labels(&[0])).unwrap();
        let s = ds.shifted(1.0);
        assert_eq!(s.image(0), vec![1.0, 2.0]);
        assert_eq!(s.range(), DataRange { x_min: 1.0, x_max: 2.0 });
    }

    #[test]
    fn dense_values_must_fit_range() {
        let r = DataRange::unit();
        assert!(Dataset::from_dense(vec![2], vec![0.0, 1.5], vec![0], r).is_err());
        assert!(Dataset::from_dense(vec![2], vec![0.0, 0.5], vec![0], r).is_ok());
    }
}
