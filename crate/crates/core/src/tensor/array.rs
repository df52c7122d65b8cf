//! Dense row-major arrays and the handful of raw kernels everything else
//! builds on. Most tensors in this crate are 2-D `[rows, cols]`; scalars are
//! `[1]`. Shapes are validated with asserts because a mismatch is always a
//! programming error, never a data condition.

use crate::scalar::Scalar;

/// Row-major dense array.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseArray<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> DenseArray<T> {
    /// Array of zeros with the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![T::zero(); n] }
    }

    /// Array filled with a constant.
    pub fn filled(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    /// Wrap an existing buffer; `data.len()` must equal the shape product.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(data.len(), n, "buffer length {} does not match shape {:?}", data.len(), shape);
        Self { shape: shape.to_vec(), data }
    }

    /// Build from f64 values (handy for literals in tests).
    pub fn from_f64(shape: &[usize], data: &[f64]) -> Self {
        Self::from_vec(shape, data.iter().map(|&x| T::from_f64_lossy(x)).collect())
    }

    /// Single-element scalar array.
    pub fn scalar(value: T) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Number of rows when viewed as 2-D (`[n]` counts as one row).
    pub fn rows(&self) -> usize {
        if self.shape.len() < 2 { 1 } else { self.shape[0] }
    }

    /// Number of columns when viewed as 2-D.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 0,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    /// Element at `[row, col]` of the 2-D view.
    pub fn at(&self, row: usize, col: usize) -> T {
        let c = self.cols();
        debug_assert!(row < self.rows() && col < c);
        self.data[row * c + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        let c = self.cols();
        self.data[row * c + col] = value;
    }

    /// Reinterpret with a new shape of identical element count.
    pub fn reshaped(mut self, shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(n, self.data.len(), "reshape {:?} -> {:?} changes element count", self.shape, shape);
        self.shape = shape.to_vec();
        self
    }

    /// Elementwise in-place add.
    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    /// Scale every element in place.
    pub fn scale_assign(&mut self, s: T) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    /// Convert every element through f64 into another scalar type.
    pub fn cast<U: Scalar>(&self) -> DenseArray<U> {
        DenseArray {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64_lossy(x.to_f64_lossy())).collect(),
        }
    }

    /// Maximum absolute difference against another array of the same shape.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.to_f64_lossy() - b.to_f64_lossy()).abs())
            .fold(0.0, f64::max)
    }
}

/// `a [m,k] * b [k,n] -> [m,n]`. Plain ikj loop; the inner `j` loop is a
/// contiguous axpy that the compiler vectorizes.
pub fn matmul<T: Scalar>(a: &DenseArray<T>, b: &DenseArray<T>) -> DenseArray<T> {
    let (m, k) = (a.rows(), a.cols());
    let (kb, n) = (b.rows(), b.cols());
    assert_eq!(k, kb, "matmul inner dims {} vs {}", k, kb);
    let mut out = vec![T::zero(); m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    DenseArray::from_vec(&[m, n], out)
}

/// `a [m,k] * b^T` with `b [n,k] -> [m,n]`. Inner loop is a contiguous dot.
pub fn matmul_nt<T: Scalar>(a: &DenseArray<T>, b: &DenseArray<T>) -> DenseArray<T> {
    let (m, k) = (a.rows(), a.cols());
    let (n, kb) = (b.rows(), b.cols());
    assert_eq!(k, kb, "matmul_nt inner dims {} vs {}", k, kb);
    let mut out = vec![T::zero(); m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &bd[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
    DenseArray::from_vec(&[m, n], out)
}

/// `a^T * b` with `a [k,m]`, `b [k,n] -> [m,n]`. Used by matmul backward.
pub fn matmul_tn<T: Scalar>(a: &DenseArray<T>, b: &DenseArray<T>) -> DenseArray<T> {
    let (k, m) = (a.rows(), a.cols());
    let (kb, n) = (b.rows(), b.cols());
    assert_eq!(k, kb, "matmul_tn inner dims {} vs {}", k, kb);
    let mut out = vec![T::zero(); m * n];
    let ad = a.data();
    let bd = b.data();
    for p in 0..k {
        let arow = &ad[p * m..(p + 1) * m];
        let brow = &bd[p * n..(p + 1) * n];
        for i in 0..m {
            let aip = arow[i];
            if aip == T::zero() {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    DenseArray::from_vec(&[m, n], out)
}
