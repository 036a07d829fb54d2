//! Checkpoint tensors, the single-file container format, and selection of
//! weight matrices by name pattern.

mod container;
mod dtype;
mod select;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::matrix::Matrix;

pub use container::{from_bytes, load_checkpoint, save_checkpoint, to_bytes};
pub use dtype::DType;
pub use select::{select_tensors, Selection, TensorPattern};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("file is {len} bytes, too short for the 8-byte header length")]
    Truncated { len: usize },
    #[error("header overruns file: header claims {header_len} bytes but only {available} follow the length field")]
    HeaderOverrun { header_len: u64, available: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("tensor {tensor}: {reason}")]
    BadTensor { tensor: String, reason: String },
    #[error("tensor {tensor}: data offsets [{begin}, {end}) out of bounds for {data_len}-byte data region")]
    OffsetsOutOfBounds {
        tensor: String,
        begin: usize,
        end: usize,
        data_len: usize,
    },
    #[error("tensor {tensor}: data region overlaps tensor {other}")]
    Overlap { tensor: String, other: String },
    #[error("tensor {tensor}: gap in data region before offset {begin} (previous region ends at {prev_end})")]
    Gap {
        tensor: String,
        begin: usize,
        prev_end: usize,
    },
    #[error("data region has {0} trailing bytes not covered by any tensor")]
    Uncovered(usize),
    #[error("tensor {tensor}: non-finite value at element {index}")]
    NonFinite { tensor: String, index: usize },
    #[error("tensor {tensor}: value {value} overflows {dtype}")]
    Overflow {
        tensor: String,
        value: f64,
        dtype: DType,
    },
    #[error("duplicate tensor name {0}")]
    Duplicate(String),
    #[error("invalid pattern {pattern:?}: {reason}")]
    InvalidPattern { pattern: String, reason: String },
}

/// A named tensor of rank ≤ 2, held in 64-bit working precision.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub source_dtype: DType,
    /// Row-major payload.
    pub data: Vec<f64>,
}

impl TensorRecord {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, source_dtype: DType, data: Vec<f64>) -> Result<Self, StoreError> {
        let rec = Self {
            name: name.into(),
            shape,
            source_dtype,
            data,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn from_matrix(name: impl Into<String>, m: &Matrix<f64>, source_dtype: DType) -> Self {
        Self {
            name: name.into(),
            shape: vec![m.rows(), m.cols()],
            source_dtype,
            data: m.as_slice().to_vec(),
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// `(rows, cols)` when the tensor is a matrix admitted to analysis.
    pub fn matrix_dims(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            &[m, n] if m > 0 && n > 0 => Some((m, n)),
            _ => None,
        }
    }

    pub fn to_matrix(&self) -> Option<Matrix<f64>> {
        let (m, n) = self.matrix_dims()?;
        Some(Matrix::from_vec(m, n, self.data.clone()))
    }

    /// Layer index parsed from a `layers.<k>` path segment.
    pub fn layer_index(&self) -> Option<usize> {
        layer_index(&self.name)
    }

    pub(crate) fn validate(&self) -> Result<(), StoreError> {
        if self.shape.len() > 2 {
            return Err(StoreError::BadTensor {
                tensor: self.name.clone(),
                reason: format!("rank {} tensors are not supported", self.shape.len()),
            });
        }
        if self.data.len() != self.numel() {
            return Err(StoreError::BadTensor {
                tensor: self.name.clone(),
                reason: format!("shape {:?} needs {} values, have {}", self.shape, self.numel(), self.data.len()),
            });
        }
        if let Some(index) = self.data.iter().position(|x| !x.is_finite()) {
            return Err(StoreError::NonFinite {
                tensor: self.name.clone(),
                index,
            });
        }
        Ok(())
    }
}

/// Layer index from a dotted tensor path, e.g. `model.layers.12.mlp.up_proj.weight` → 12.
pub fn layer_index(name: &str) -> Option<usize> {
    let mut segments = name.split('.');
    while let Some(seg) = segments.next() {
        if seg == "layers" {
            if let Some(Ok(k)) = segments.next().map(str::parse::<usize>) {
                return Some(k);
            }
        }
    }
    None
}

/// An ordered set of uniquely named tensors plus string metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    records: Vec<TensorRecord>,
    index: HashMap<String, usize>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(records: Vec<TensorRecord>, metadata: BTreeMap<String, String>) -> Result<Self, StoreError> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            r.validate()?;
            if index.insert(r.name.clone(), i).is_some() {
                return Err(StoreError::Duplicate(r.name.clone()));
            }
        }
        Ok(Self {
            records,
            index,
            metadata,
        })
    }

    pub fn records(&self) -> &[TensorRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TensorRecord> {
        self.records
    }

    pub fn get(&self, name: &str) -> Option<&TensorRecord> {
        self.index.get(name).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Largest `layers.<k>` index plus one; zero when no tensor is layered.
    pub fn depth(&self) -> usize {
        self.records
            .iter()
            .filter_map(TensorRecord::layer_index)
            .max()
            .map_or(0, |k| k + 1)
    }
}
