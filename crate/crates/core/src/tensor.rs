//! Dense rank-1/2/3 tensors of `f64` with explicit, checked shapes.
//!
//! Data is stored flat in row-major order; that ordering is part of the
//! checkpoint file contract. There is no broadcasting and no view/stride
//! machinery: every operation owns its output.

use crate::error::{Error, Result};

/// Shape of a tensor: 1 to 3 positive dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::Shape(format!(
                "rank must be 1..=3, got {}",
                dims.len()
            )));
        }
        if let Some(&bad) = dims.iter().find(|&&d| d == 0) {
            return Err(Error::Shape(format!(
                "every dim must be >= 1, got {bad} in {dims:?}"
            )));
        }
        Ok(Shape {
            dims: dims.to_vec(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Total element count (product of dims, always > 0).
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false // dims are all >= 1, so len() > 0 by construction
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

/// Dense tensor of 64-bit floats, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor with every element set to `fill`.
    pub fn new(shape: Shape, fill: f64) -> Result<Self> {
        if !fill.is_finite() {
            return Err(Error::Argument(format!(
                "fill value must be finite, got {fill}"
            )));
        }
        let len = shape.len();
        Ok(Tensor {
            shape,
            data: vec![fill; len],
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Tensor::new(Shape::new(dims)?, 0.0)
    }

    /// Wrap an existing flat buffer; its length must match the shape.
    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {shape} ({} elements)",
                data.len(),
                shape.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Same data under a different shape (element counts must agree).
    pub fn reshape(&self, dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.len() != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {} elements into {shape}",
                self.data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
