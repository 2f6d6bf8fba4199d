use crate::error::{Result, SanError};

/// Dense row-major tensor of `f64` values.
///
/// Vectors are carried as column matrices `[n, 1]` throughout the model code
/// so that every primitive works on rank-2 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(SanError::dim("tensor", format!("shape {shape:?} needs {numel} values, got {}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; numel] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel] }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Column vector `[n, 1]`.
    pub fn column(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len(), 1], data }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1, 1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
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

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() > 1 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }

    /// Single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Copy of the `index`-th slab along the leading axis.
    pub fn outer_slice(&self, index: usize) -> Tensor {
        let inner: usize = self.shape[1..].iter().product();
        let start = index * inner;
        Tensor { shape: self.shape[1..].to_vec(), data: self.data[start..start + inner].to_vec() }
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor { shape: vec![c, r], data: out }
    }
}

/// `a[r×k] · b[k×c]` into a fresh buffer.
pub(crate) fn matmul_nn(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    if c == 1 {
        return a.chunks_exact(k.max(1)).take(r).map(|row| dot(row, b)).collect();
    }
    let mut out = vec![0.0; r * c];
    for (row, arow) in out.chunks_exact_mut(c).zip(a.chunks_exact(k.max(1))) {
        for (&aip, brow) in arow.iter().zip(b.chunks_exact(c)) {
            if aip != 0.0 {
                axpy(row, aip, brow);
            }
        }
    }
    out
}

/// `g[r×c] · bᵀ` where `b` is `k×c`; result `r×k`.
pub(crate) fn matmul_nt(g: &[f64], b: &[f64], r: usize, c: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * k];
    if c == 1 {
        for (row, &gi) in out.chunks_exact_mut(k.max(1)).zip(g) {
            for (o, &bp) in row.iter_mut().zip(b) {
                *o = gi * bp;
            }
        }
        return out;
    }
    for (row, grow) in out.chunks_exact_mut(k.max(1)).zip(g.chunks_exact(c)) {
        for (o, brow) in row.iter_mut().zip(b.chunks_exact(c)) {
            *o = dot(grow, brow);
        }
    }
    out
}

/// `aᵀ · g` where `a` is `r×k` and `g` is `r×c`; result `k×c`.
pub(crate) fn matmul_tn(a: &[f64], g: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * c];
    if c == 1 {
        for (arow, &gi) in a.chunks_exact(k.max(1)).take(r).zip(g) {
            if gi != 0.0 {
                axpy(&mut out, gi, arow);
            }
        }
        return out;
    }
    for (arow, grow) in a.chunks_exact(k.max(1)).take(r).zip(g.chunks_exact(c)) {
        for (&aip, orow) in arow.iter().zip(out.chunks_exact_mut(c)) {
            if aip != 0.0 {
                axpy(orow, aip, grow);
            }
        }
    }
    out
}

/// Dot product with four interleaved partial sums.
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    let (x, y) = (&x[..n], &y[..n]);
    let mut acc = [0.0; 4];
    let mut xs = x.chunks_exact(4);
    let mut ys = y.chunks_exact(4);
    for (a, b) in (&mut xs).zip(&mut ys) {
        for j in 0..4 {
            acc[j] += a[j] * b[j];
        }
    }
    let tail: f64 = xs.remainder().iter().zip(ys.remainder()).map(|(a, b)| a * b).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha · x`.
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (o, v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_shape() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn matmul_kernels_agree_with_transposes() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::matrix(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let ab = matmul_nn(a.data(), b.data(), 2, 3, 2);
        assert_eq!(ab, vec![58.0, 64.0, 139.0, 154.0]);

        let bt = b.transpose();
        assert_eq!(matmul_nt(a.data(), bt.data(), 2, 3, 2), ab);
        let at = a.transpose();
        assert_eq!(matmul_tn(at.data(), b.data(), 3, 2, 2), ab);
    }

    #[test]
    fn outer_slice_takes_leading_axis() {
        let t = Tensor::new(vec![2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let s = t.outer_slice(1);
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.data(), &[4.0, 5.0, 6.0, 7.0]);
    }
}
