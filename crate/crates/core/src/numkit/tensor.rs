//! Dense row-major 2-D tensors of `f64`.
//!
//! Every matrix in the model is a [`Tensor`]. Token sets are stored
//! column-wise: a bag of `n` tokens of width `d` is a `d × n` tensor.

use std::fmt;

use crate::error::{Error, Result};

/// Concatenation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Stack vertically; column counts must agree.
    Rows,
    /// Stack horizontally; row counts must agree.
    Cols,
}

/// Pointwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Sigmoid,
    /// Exponential linear unit with `alpha = 1`.
    Elu,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Elu => "elu",
            Activation::Relu => "relu",
        }
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Dense matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor[{}x{}]", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            f.debug_list().entries(self.data.iter()).finish()?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "buffer of length {} cannot hold a {rows}x{cols} tensor",
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 1.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![value] }
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        Tensor { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Tensor { rows, cols, data }
    }

    /// Builds a tensor from row slices, all of which must share a length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul of {} by {}: inner dimensions differ",
                self.shape_str(),
                other.shape_str()
            )));
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor { rows: m, cols: n, data: out })
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rows != other.rows {
            return Err(Error::Shape(format!(
                "transposed matmul of {}ᵀ by {}: inner dimensions differ",
                self.shape_str(),
                other.shape_str()
            )));
        }
        let (k, m, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &other.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out[i * n..(i + 1) * n].iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor { rows: m, cols: n, data: out })
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "matmul of {} by {}ᵀ: inner dimensions differ",
                self.shape_str(),
                other.shape_str()
            )));
        }
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &other.data[j * k..(j + 1) * k];
                out[i * n + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Ok(Tensor { rows: m, cols: n, data: out })
    }

    fn check_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{what} of {} and {}: shapes differ",
                self.shape_str(),
                other.shape_str()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    /// Hadamard product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "elementwise product")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.check_same_shape(other, "accumulate")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Adds a `rows × 1` column to every column.
    pub fn add_col_broadcast(&self, bias: &Tensor) -> Result<Tensor> {
        if bias.cols != 1 || bias.rows != self.rows {
            return Err(Error::Shape(format!(
                "column bias {} does not fit {}",
                bias.shape_str(),
                self.shape_str()
            )));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            let b = bias.data[r];
            for v in &mut out.data[r * self.cols..(r + 1) * self.cols] {
                *v += b;
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|v| v * k)
    }

    pub fn activate(&self, kind: Activation) -> Tensor {
        self.map(|v| kind.apply(v))
    }

    /// Row-wise softmax, stabilized by subtracting each row's maximum.
    pub fn softmax_rows(&self) -> Tensor {
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = &mut out.data[r * self.cols..(r + 1) * self.cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Mean over columns: `rows × cols → rows × 1`.
    pub fn mean_cols(&self) -> Tensor {
        let n = self.cols as f64;
        Tensor::from_fn(self.rows, 1, |r, _| self.row(r).iter().sum::<f64>() / n)
    }

    pub fn concat(&self, other: &Tensor, axis: Axis) -> Result<Tensor> {
        match axis {
            Axis::Rows => {
                if self.cols != other.cols {
                    return Err(Error::Shape(format!(
                        "row concat of {} and {}: column counts differ",
                        self.shape_str(),
                        other.shape_str()
                    )));
                }
                let mut data = self.data.clone();
                data.extend_from_slice(&other.data);
                Ok(Tensor { rows: self.rows + other.rows, cols: self.cols, data })
            }
            Axis::Cols => {
                if self.rows != other.rows {
                    return Err(Error::Shape(format!(
                        "column concat of {} and {}: row counts differ",
                        self.shape_str(),
                        other.shape_str()
                    )));
                }
                let cols = self.cols + other.cols;
                let mut data = Vec::with_capacity(self.rows * cols);
                for r in 0..self.rows {
                    data.extend_from_slice(self.row(r));
                    data.extend_from_slice(other.row(r));
                }
                Ok(Tensor { rows: self.rows, cols, data })
            }
        }
    }

    /// Inverse of [`Tensor::concat`]: splits at `at` along `axis`.
    pub fn split(&self, at: usize, axis: Axis) -> Result<(Tensor, Tensor)> {
        let extent = match axis {
            Axis::Rows => self.rows,
            Axis::Cols => self.cols,
        };
        if at > extent {
            return Err(Error::Shape(format!(
                "split point {at} beyond extent {extent} of {}",
                self.shape_str()
            )));
        }
        Ok((self.slice(0, at, axis)?, self.slice(at, extent, axis)?))
    }

    /// Half-open range `[start, end)` along `axis`.
    pub fn slice(&self, start: usize, end: usize, axis: Axis) -> Result<Tensor> {
        let extent = match axis {
            Axis::Rows => self.rows,
            Axis::Cols => self.cols,
        };
        if start > end || end > extent {
            return Err(Error::Shape(format!(
                "slice {start}..{end} out of range for {} along {axis:?}",
                self.shape_str()
            )));
        }
        Ok(match axis {
            Axis::Rows => Tensor {
                rows: end - start,
                cols: self.cols,
                data: self.data[start * self.cols..end * self.cols].to_vec(),
            },
            Axis::Cols => Tensor::from_fn(self.rows, end - start, |r, c| self.get(r, start + c)),
        })
    }

    /// Reorders columns: output column `j` is input column `order[j]`.
    pub fn permute_cols(&self, order: &[usize]) -> Result<Tensor> {
        if order.len() != self.cols || order.iter().any(|&j| j >= self.cols) {
            return Err(Error::Shape(format!(
                "column order of length {} does not index {}",
                order.len(),
                self.shape_str()
            )));
        }
        Ok(Tensor::from_fn(self.rows, self.cols, |r, c| self.get(r, order[c])))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other, "difference")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_by_hand() {
        let a = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[[1.0], [1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c, Tensor::from_rows(&[[3.0], [7.0]]).unwrap());
    }

    #[test]
    fn identity_is_neutral() {
        let a = Tensor::from_fn(3, 4, |r, c| (r * 4 + c) as f64 * 0.37 - 1.1);
        assert_eq!(Tensor::identity(3).matmul(&a).unwrap(), a);
        assert_eq!(a.matmul(&Tensor::identity(4)).unwrap(), a);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = Tensor::zeros(2, 3).matmul(&Tensor::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("by 2x3"), "{msg}");
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Tensor::from_fn(3, 4, |r, c| (r as f64 - c as f64) * 0.5);
        let b = Tensor::from_fn(3, 2, |r, c| (r * c) as f64 + 0.25);
        assert_eq!(a.t_matmul(&b).unwrap(), a.transpose().matmul(&b).unwrap());
        let c = Tensor::from_fn(5, 4, |r, c| (r + 2 * c) as f64 * 0.1);
        assert_eq!(a.matmul_t(&c).unwrap(), a.matmul(&c.transpose()).unwrap());
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let s = Tensor::zeros(1, 3).softmax_rows();
        for &v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = Tensor::from_rows(&[[1000.0, 0.0]]).unwrap().softmax_rows();
        assert!(s.is_finite());
        assert!((s.get(0, 0) - 1.0).abs() < 1e-15);
        assert!(s.get(0, 1) < 1e-300);
    }

    #[test]
    fn activation_fixed_points() {
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Elu.apply(0.0), 0.0);
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
        assert!((Activation::Elu.apply(-1.0) - ((-1.0f64).exp() - 1.0)).abs() < 1e-16);
        assert!(sigmoid(-800.0).is_finite() && sigmoid(800.0) == 1.0);
    }

    #[test]
    fn concat_shapes_and_split_roundtrip() {
        let a = Tensor::from_fn(2, 3, |r, c| (r + c) as f64);
        let b = Tensor::from_fn(2, 3, |r, c| (r * c) as f64 - 7.5);
        let h = a.concat(&b, Axis::Cols).unwrap();
        assert_eq!(h.shape(), (2, 6));
        let (a2, b2) = h.split(3, Axis::Cols).unwrap();
        assert_eq!((a2, b2), (a.clone(), b.clone()));

        let v = Tensor::ones(1, 5).concat(&Tensor::zeros(1, 5), Axis::Rows).unwrap();
        assert_eq!(v.shape(), (2, 5));
        assert!(Tensor::zeros(2, 3).concat(&Tensor::zeros(3, 3), Axis::Cols).is_err());
    }

    #[test]
    fn col_bias_broadcast() {
        let x = Tensor::zeros(2, 3);
        let b = Tensor::column(&[1.0, -2.0]);
        let y = x.add_col_broadcast(&b).unwrap();
        assert_eq!(y.row(0), &[1.0, 1.0, 1.0]);
        assert_eq!(y.row(1), &[-2.0, -2.0, -2.0]);
    }
}
