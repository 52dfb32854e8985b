//! The gradient centralization operator.
//!
//! Every weight of a dense or convolution layer is viewed as an `M×N` matrix
//! whose `N` columns are the fan-in vectors of the output units: `M = C_in`
//! for dense layers and `M = C_in·k₁·k₂` for convolutions. Centralization
//! subtracts each column's mean from that column, which is `P·G` with
//! `P = I − (1/M)·11ᵀ`. `P` is only materialized by the verification helpers.
//!
//! Storage order does not decide which axis is centered; the fan-in rule does.
//! A dense weight stored `C_in×C_out` and one stored `C_out×C_in` unfold to
//! the same columns through their respective [`Unfolding`]s.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Fc,
    Conv,
}

/// Which weights get centralized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcPolicy {
    pub apply_to_fc: bool,
    pub apply_to_conv: bool,
    /// Columns shorter than this are left alone. A length-1 column would be
    /// zeroed outright, freezing its weight, so this is at least 2.
    min_fan_in: usize,
}

impl Default for GcPolicy {
    fn default() -> Self {
        GcPolicy {
            apply_to_fc: true,
            apply_to_conv: true,
            min_fan_in: 2,
        }
    }
}

impl GcPolicy {
    pub fn new(apply_to_fc: bool, apply_to_conv: bool, min_fan_in: usize) -> Result<Self> {
        if min_fan_in < 2 {
            return Err(Error::InvalidArgument(alloc::format!(
                "min_fan_in must be >= 2, got {min_fan_in}"
            )));
        }
        Ok(GcPolicy {
            apply_to_fc,
            apply_to_conv,
            min_fan_in,
        })
    }

    pub fn conv_only() -> Self {
        GcPolicy {
            apply_to_fc: false,
            ..Self::default()
        }
    }

    pub fn min_fan_in(&self) -> usize {
        self.min_fan_in
    }

    pub fn applies_to(&self, unfolding: &Unfolding) -> bool {
        let kind_on = match unfolding.kind {
            LayerKind::Fc => self.apply_to_fc,
            LayerKind::Conv => self.apply_to_conv,
        };
        kind_on && unfolding.m >= self.min_fan_in
    }
}

/// How a weight buffer maps onto the `M×N` fan-in matrix: element `(j, i)`
/// (row `j` of column `i`) lives at `j·row_stride + i·col_stride`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Unfolding {
    kind: LayerKind,
    m: usize,
    n: usize,
    row_stride: usize,
    col_stride: usize,
}

impl Unfolding {
    /// Dense weight stored `C_in×C_out` (the layout used by [`crate::nn`]).
    pub fn fc(c_in: usize, c_out: usize) -> Self {
        Unfolding {
            kind: LayerKind::Fc,
            m: c_in,
            n: c_out,
            row_stride: c_out,
            col_stride: 1,
        }
    }

    /// Dense weight stored `C_out×C_in`, as many frameworks do.
    pub fn fc_out_in(c_out: usize, c_in: usize) -> Self {
        Unfolding {
            kind: LayerKind::Fc,
            m: c_in,
            n: c_out,
            row_stride: 1,
            col_stride: c_in,
        }
    }

    /// Convolution kernel stored `C_out×C_in×k₁×k₂`. Within a column the order
    /// is input channel, then kernel row, then kernel column.
    pub fn conv(c_out: usize, c_in: usize, k1: usize, k2: usize) -> Self {
        let m = c_in * k1 * k2;
        Unfolding {
            kind: LayerKind::Conv,
            m,
            n: c_out,
            row_stride: 1,
            col_stride: m,
        }
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    /// Fan-in, the length of each column.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Fan-out, the number of columns.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.row_stride + col * self.col_stride
    }
}

/// A mutable `M×N` view over a weight gradient in its original layout.
#[derive(Debug)]
pub struct GradView<'a, T> {
    unfolding: Unfolding,
    data: &'a mut [T],
}

/// Views `grad` as its fan-in matrix. Dense gradients must be 2-D `C_in×C_out`;
/// convolution gradients need `conv_dims = (C_out, C_in, k₁, k₂)`.
pub fn unfold<'a, T: Scalar>(
    grad: &'a mut Tensor<T>,
    kind: LayerKind,
    conv_dims: Option<(usize, usize, usize, usize)>,
) -> Result<GradView<'a, T>> {
    let unfolding = match (kind, conv_dims) {
        (LayerKind::Fc, _) => {
            let (c_in, c_out) = grad.shape2()?;
            Unfolding::fc(c_in, c_out)
        }
        (LayerKind::Conv, Some((c_out, c_in, k1, k2))) => Unfolding::conv(c_out, c_in, k1, k2),
        (LayerKind::Conv, None) => {
            return Err(Error::InvalidArgument("conv unfold needs (C_out, C_in, k1, k2)".into()))
        }
    };
    GradView::new(grad.data_mut(), unfolding)
}

impl<'a, T: Scalar> GradView<'a, T> {
    pub fn new(data: &'a mut [T], unfolding: Unfolding) -> Result<Self> {
        if data.len() != unfolding.len() {
            return Err(shape_err("unfold", &[data.len()], &[unfolding.m, unfolding.n]));
        }
        Ok(GradView { unfolding, data })
    }

    pub fn unfolding(&self) -> Unfolding {
        self.unfolding
    }

    pub fn kind(&self) -> LayerKind {
        self.unfolding.kind
    }

    pub fn m(&self) -> usize {
        self.unfolding.m
    }

    pub fn n(&self) -> usize {
        self.unfolding.n
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[self.unfolding.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        let idx = self.unfolding.index(row, col);
        self.data[idx] = value;
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.m()).map(move |row| self.get(row, col))
    }

    /// Copies the view into a dense `M×N` matrix.
    pub fn to_matrix(&self) -> Tensor<T> {
        let (m, n) = (self.m(), self.n());
        let mut out = Tensor::zeros(&[m, n]);
        let buf = out.data_mut();
        for row in 0..m {
            for col in 0..n {
                buf[row * n + col] = self.get(row, col);
            }
        }
        out
    }

    /// Per-column sums, each accumulated in ascending row order.
    pub fn column_sums(&self) -> Vec<T> {
        let u = self.unfolding;
        let mut sums = vec![T::ZERO; u.n];
        if u.col_stride == 1 {
            for row in self.data.chunks_exact(u.row_stride) {
                for (s, &v) in sums.iter_mut().zip(row) {
                    *s += v;
                }
            }
        } else if u.row_stride == 1 {
            for (s, col) in sums.iter_mut().zip(self.data.chunks_exact(u.col_stride)) {
                for &v in col {
                    *s += v;
                }
            }
        } else {
            for (col, s) in sums.iter_mut().enumerate() {
                for row in 0..u.m {
                    *s += self.data[u.index(row, col)];
                }
            }
        }
        sums
    }

    /// Subtracts each column's mean in place, unconditionally.
    pub fn subtract_column_means(&mut self) {
        let u = self.unfolding;
        let m = T::from_usize(u.m);
        let means: Vec<T> = self.column_sums().into_iter().map(|s| s / m).collect();
        if u.col_stride == 1 {
            for row in self.data.chunks_exact_mut(u.row_stride) {
                for (v, &mu) in row.iter_mut().zip(&means) {
                    *v -= mu;
                }
            }
        } else {
            for (col, &mu) in means.iter().enumerate() {
                for row in 0..u.m {
                    self.data[u.index(row, col)] -= mu;
                }
            }
        }
    }
}

/// Writes a dense `M×N` matrix back into the storage layout of `unfolding`.
pub fn fold<T: Scalar>(matrix: &Tensor<T>, unfolding: Unfolding) -> Result<Vec<T>> {
    let (m, n) = matrix.shape2()?;
    if (m, n) != (unfolding.m, unfolding.n) {
        return Err(shape_err("fold", &[m, n], &[unfolding.m, unfolding.n]));
    }
    let mut out = vec![T::ZERO; m * n];
    let src = matrix.data();
    for row in 0..m {
        for col in 0..n {
            out[unfolding.index(row, col)] = src[row * n + col];
        }
    }
    Ok(out)
}

/// Centralizes every column of `view` if `policy` covers it. Returns whether
/// anything was changed.
pub fn centralize<T: Scalar>(view: &mut GradView<'_, T>, policy: &GcPolicy) -> bool {
    if !policy.applies_to(&view.unfolding) {
        return false;
    }
    view.subtract_column_means();
    true
}

/// Centralizes a raw buffer laid out per `unfolding`.
pub fn centralize_slice<T: Scalar>(data: &mut [T], unfolding: Unfolding, policy: &GcPolicy) -> Result<bool> {
    let mut view = GradView::new(data, unfolding)?;
    Ok(centralize(&mut view, policy))
}

/// `I − (1/M)·11ᵀ` as a dense `M×M` matrix.
pub fn projection_matrix(m: usize) -> Tensor<f64> {
    let off = -1.0 / m as f64;
    let diag = 1.0 - 1.0 / m as f64;
    let mut p = Tensor::full(&[m, m], off).expect("m >= 1");
    for i in 0..m {
        p.data_mut()[i * m + i] = diag;
    }
    p
}

/// Centralizes `g` both by mean subtraction and by the explicit product `P·g`.
/// Returns `(centralized, explicit)`.
pub fn project_equivalence_check(g: &Tensor<f64>) -> Result<(Tensor<f64>, Tensor<f64>)> {
    if g.ndim() != 1 {
        return Err(Error::InvalidArgument("expected a 1-D gradient".into()));
    }
    let m = g.len();
    let mut centralized = g.clone();
    GradView::new(centralized.data_mut(), Unfolding::fc(m, 1))?.subtract_column_means();
    let col = g.clone().reshape(&[m, 1])?;
    let explicit = projection_matrix(m).matmul(&col)?.reshape(&[m])?;
    Ok((centralized, explicit))
}
