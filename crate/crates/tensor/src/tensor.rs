use crate::error::{TensorError, TensorResult};

/// Dense n-dimensional array of 64-bit floats, row-major.
///
/// The universal value type of the toolkit: parameters, activations and
/// gradients are all `Tensor`s. Kernels reject non-finite outputs, so a
/// tensor that came out of a kernel holds finite values only.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    name: Option<String>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> TensorResult<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::BadShape {
                what: format!("zero dimension in shape {shape:?}"),
            });
        }
        if data.len() != numel {
            return Err(TensorError::BadShape {
                what: format!("shape {shape:?} needs {numel} elements, got {}", data.len()),
            });
        }
        Ok(Tensor { shape, data, name: None })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; numel], name: None }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel], name: None }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value], name: None }
    }

    /// 2-D constructor from nested rows; rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> TensorResult<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(TensorError::BadShape { what: "ragged rows".into() });
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows/cols of a 2-D tensor; 1-D is treated as a single row.
    pub fn dims2(&self) -> TensorResult<(usize, usize)> {
        match self.shape.len() {
            1 => Ok((1, self.shape[0])),
            2 => Ok((self.shape[0], self.shape[1])),
            _ => Err(TensorError::BadShape {
                what: format!("expected 1-D or 2-D tensor, got shape {:?}", self.shape),
            }),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let (_, c) = self.dims2().expect("row() on non-2D tensor");
        &self.data[r * c..(r + 1) * c]
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stack a subset of rows (in `index` order) into a new tensor.
    pub fn gather_rows(&self, index: &[usize]) -> TensorResult<Self> {
        let (r, c) = self.dims2()?;
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index {
            if i >= r {
                return Err(TensorError::BadShape {
                    what: format!("row index {i} out of range for {r} rows"),
                });
            }
            data.extend_from_slice(&self.data[i * c..(i + 1) * c]);
        }
        Tensor::new(vec![index.len(), c], data)
    }

    /// Repeat each of the tensor's rows `k` times in place-order
    /// (row0 k times, then row1 k times, ...).
    pub fn repeat_rows(&self, k: usize) -> TensorResult<Self> {
        let (r, _) = self.dims2()?;
        let index: Vec<usize> = (0..r).flat_map(|i| std::iter::repeat(i).take(k)).collect();
        self.gather_rows(&index)
    }
}
