//! Dense row-major tensors and the matrix-multiply kernel everything else
//! is built on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;

/// Dense N-dimensional array with an optional same-shape gradient buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<Real>,
    #[serde(skip)]
    grad: Option<Vec<Real>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<Real>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("tensor", "element count", n, data.len()));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn scalar(v: Real) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Real> {
        self.data
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape("reshape", "element count", self.data.len(), n));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn grad(&self) -> Option<&[Real]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [Real]> {
        self.grad.as_deref_mut()
    }

    /// Returns the gradient buffer, allocating a zeroed one if absent.
    pub fn ensure_grad(&mut self) -> &mut [Real] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn drop_grad(&mut self) {
        self.grad = None;
    }

    /// Split borrow of values and gradient, used by optimizers.
    pub(crate) fn data_and_grad_mut(&mut self) -> (&mut [Real], Option<&mut [Real]>) {
        (&mut self.data, self.grad.as_deref_mut())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }
}

/// A named model weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Self {
        Parameter {
            name: name.into(),
            tensor,
            trainable: true,
        }
    }

    pub fn numel(&self) -> usize {
        self.tensor.numel()
    }
}

/// Strided read-only matrix view over a flat buffer.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    data: &'a [Real],
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a> MatRef<'a> {
    /// Contiguous row-major `rows x cols` matrix.
    pub(crate) fn new(data: &'a [Real], rows: usize, cols: usize) -> Self {
        Self::strided(data, rows, cols, cols, 1)
    }

    pub(crate) fn strided(data: &'a [Real], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        if rows > 0 && cols > 0 {
            let last = (rows - 1) * rs + (cols - 1) * cs;
            assert!(last < data.len(), "matrix view out of bounds");
        }
        MatRef {
            data,
            rows,
            cols,
            rs: rs as isize,
            cs: cs as isize,
        }
    }

    pub(crate) fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }
}

/// Strided mutable matrix view.
pub(crate) struct MatMut<'a> {
    data: &'a mut [Real],
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a> MatMut<'a> {
    pub(crate) fn new(data: &'a mut [Real], rows: usize, cols: usize) -> Self {
        Self::strided(data, rows, cols, cols, 1)
    }

    pub(crate) fn strided(data: &'a mut [Real], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        if rows > 0 && cols > 0 {
            let last = (rows - 1) * rs + (cols - 1) * cs;
            assert!(last < data.len(), "matrix view out of bounds");
        }
        MatMut {
            data,
            rows,
            cols,
            rs: rs as isize,
            cs: cs as isize,
        }
    }
}

/// `c = a * b + beta * c`.
pub(crate) fn gemm(a: MatRef<'_>, b: MatRef<'_>, beta: Real, c: MatMut<'_>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    assert_eq!(a.rows, c.rows, "gemm output rows");
    assert_eq!(b.cols, c.cols, "gemm output cols");
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    if a.cols == 0 {
        // matrixmultiply handles k == 0 but be explicit about the beta scaling.
        for i in 0..c.rows {
            for j in 0..c.cols {
                let idx = i as isize * c.rs + j as isize * c.cs;
                c.data[idx as usize] *= beta;
            }
        }
        return;
    }
    // SAFETY: every view was bounds-checked against its backing slice on
    // construction, and `c` is a unique borrow so it cannot alias `a` or `b`.
    unsafe {
        #[cfg(not(feature = "f32"))]
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            1.0,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.data.as_mut_ptr(),
            c.rs,
            c.cs,
        );
        #[cfg(feature = "f32")]
        matrixmultiply::sgemm(
            a.rows,
            a.cols,
            b.cols,
            1.0,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.data.as_mut_ptr(),
            c.rs,
            c.cs,
        );
    }
}
