//! Dense row-major tensors and the named-tensor file format.
//!
//! A tensor file starts with a UTF-8 header:
//!
//! ```text
//! hopekit-tensors v1
//! <name> <dim>,<dim>,...
//! ...
//! <blank line>
//! ```
//!
//! followed, for each header entry in order, by a little-endian `u32`
//! element count and that many little-endian `f32` values.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

const MAGIC: &str = "hopekit-tensors v1";

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape {shape:?} needs {expected} elements, got {got}")]
    ShapeData {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("non-finite tensor entry")]
    NonFinite,
    #[error("tensor file: {0}")]
    Format(String),
    #[error("tensor `{0}` not found")]
    Missing(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeData {
                shape,
                expected,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite);
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Some((*r, *c)),
            _ => None,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }
}

/// Writes named tensors in header order.
pub fn write_tensors<W: Write>(
    mut w: W,
    tensors: &[(&str, &FeatureTensor)],
) -> Result<(), TensorError> {
    let mut header = format!("{MAGIC}\n");
    for (name, t) in tensors {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(TensorError::Format(format!("invalid tensor name `{name}`")));
        }
        let dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
        header.push_str(&format!("{name} {}\n", dims.join(",")));
    }
    header.push('\n');
    w.write_all(header.as_bytes())?;
    for (_, t) in tensors {
        w.write_all(&(t.data.len() as u32).to_le_bytes())?;
        for v in &t.data {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_tensors<R: Read>(r: R) -> Result<Vec<(String, FeatureTensor)>, TensorError> {
    let mut reader = BufReader::new(r);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(TensorError::Format("missing header magic".into()));
    }
    let mut entries = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(TensorError::Format("unterminated header".into()));
        }
        let text = line.trim_end();
        if text.is_empty() {
            break;
        }
        let (name, dims) = text
            .split_once(' ')
            .ok_or_else(|| TensorError::Format(format!("bad header line `{text}`")))?;
        let shape = if dims.is_empty() {
            Vec::new()
        } else {
            dims.split(',')
                .map(|d| d.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TensorError::Format(format!("bad shape `{dims}`: {e}")))?
        };
        entries.push((name.to_string(), shape));
    }
    let mut out = Vec::with_capacity(entries.len());
    for (name, shape) in entries {
        let mut word = [0u8; 4];
        reader.read_exact(&mut word)?;
        let count = u32::from_le_bytes(word) as usize;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            reader.read_exact(&mut word)?;
            data.push(f32::from_le_bytes(word) as f64);
        }
        out.push((name, FeatureTensor::new(shape, data)?));
    }
    Ok(out)
}

pub fn save_tensors(path: &Path, tensors: &[(&str, &FeatureTensor)]) -> Result<(), TensorError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_tensors(&mut w, tensors)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensors(path: &Path) -> Result<Vec<(String, FeatureTensor)>, TensorError> {
    read_tensors(std::fs::File::open(path)?)
}

/// Loads the tensor called `name` from a file.
pub fn load_tensor(path: &Path, name: &str) -> Result<FeatureTensor, TensorError> {
    load_tensors(path)?
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t)
        .ok_or_else(|| TensorError::Missing(name.to_string()))
}
