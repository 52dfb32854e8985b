//! 2-D convolution (cross-correlation) through an explicit patch matrix.
//!
//! For each sample the input is unfolded into a `(C_in·k₁·k₂) × (H'·W')`
//! patch matrix whose rows follow the same order as the GC columns of the
//! kernel: input channel, then kernel row, then kernel column. The kernel
//! `C_out×C_in×k₁×k₂` is then exactly a `C_out × M` matrix and the forward
//! pass is one matrix product per sample.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::gc::Unfolding;
use crate::linalg;
use crate::nn::ParamTensor;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k1: usize,
    pub k2: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: [usize; 3], kernel: [usize; 4], stride: usize, pad: usize) -> Result<Self> {
        let [c_in, h, w] = input;
        let [c_out, k_in, k1, k2] = kernel;
        if k_in != c_in {
            return Err(shape_err("conv2d channels", &input, &kernel));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be >= 1".into()));
        }
        let span_h = h + 2 * pad;
        let span_w = w + 2 * pad;
        if span_h < k1 || span_w < k2 || !(span_h - k1).is_multiple_of(stride) || !(span_w - k2).is_multiple_of(stride)
        {
            return Err(Error::Shape {
                op: "conv2d output extent not integral",
                lhs: vec![h, w, pad, stride],
                rhs: vec![k1, k2],
            });
        }
        Ok(ConvGeometry {
            c_in,
            h,
            w,
            c_out,
            k1,
            k2,
            stride,
            pad,
            out_h: (span_h - k1) / stride + 1,
            out_w: (span_w - k2) / stride + 1,
        })
    }

    /// Rows of the patch matrix (the GC fan-in).
    pub fn patch_rows(&self) -> usize {
        self.c_in * self.k1 * self.k2
    }

    /// Columns of the patch matrix (output locations).
    pub fn locations(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source pixel for patch row `r` at output location `l`, or `None` in the padding.
    #[inline]
    fn source(&self, r: usize, l: usize) -> Option<usize> {
        let c = r / (self.k1 * self.k2);
        let kr = (r / self.k2) % self.k1;
        let kc = r % self.k2;
        let oy = l / self.out_w;
        let ox = l % self.out_w;
        let y = (oy * self.stride + kr) as isize - self.pad as isize;
        let x = (ox * self.stride + kc) as isize - self.pad as isize;
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            None
        } else {
            Some((c * self.h + y as usize) * self.w + x as usize)
        }
    }

    /// Fills `patches` (`patch_rows × locations`) from one input sample.
    pub fn im2col<T: Scalar>(&self, sample: &[T], patches: &mut [T]) {
        let locs = self.locations();
        for r in 0..self.patch_rows() {
            let row = &mut patches[r * locs..(r + 1) * locs];
            for (l, p) in row.iter_mut().enumerate() {
                *p = self.source(r, l).map_or(T::ZERO, |i| sample[i]);
            }
        }
    }

    /// Scatters patch-matrix gradients back onto one input-sample gradient.
    pub fn col2im<T: Scalar>(&self, patches: &[T], sample: &mut [T]) {
        let locs = self.locations();
        for r in 0..self.patch_rows() {
            for l in 0..locs {
                if let Some(i) = self.source(r, l) {
                    sample[i] += patches[r * locs + l];
                }
            }
        }
    }
}

fn geometry_for<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(usize, ConvGeometry)> {
    let (&[b, c, h, w], &[co, ci, k1, k2]) = (x.dims(), kernel.dims()) else {
        return Err(shape_err(
            "conv2d expects 4-D input and kernel",
            x.dims(),
            kernel.dims(),
        ));
    };
    Ok((b, ConvGeometry::new([c, h, w], [co, ci, k1, k2], stride, pad)?))
}

/// Convolution forward through the patch matrix. Returns the output and the
/// per-sample patch matrices, concatenated.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Vec<T>)> {
    let (batch, g) = geometry_for(x, kernel, stride, pad)?;
    if bias.dims() != [g.c_out] {
        return Err(shape_err("conv2d bias", kernel.dims(), bias.dims()));
    }
    let (m, locs) = (g.patch_rows(), g.locations());
    let in_size = g.c_in * g.h * g.w;
    let out_size = g.c_out * locs;
    let mut patches = vec![T::ZERO; batch * m * locs];
    let mut out = Tensor::zeros(&[batch, g.c_out, g.out_h, g.out_w]);
    for s in 0..batch {
        let p = &mut patches[s * m * locs..(s + 1) * m * locs];
        g.im2col(&x.data()[s * in_size..(s + 1) * in_size], p);
        let y = &mut out.data_mut()[s * out_size..(s + 1) * out_size];
        linalg::gemm_nn(g.c_out, m, locs, kernel.data(), p, y);
        for (row, &bv) in y.chunks_exact_mut(locs).zip(bias.data()) {
            row.iter_mut().for_each(|v| *v += bv);
        }
    }
    Ok((out, patches))
}

/// Direct seven-loop convolution, kept as a reference for the patch path.
pub fn conv2d_direct<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (batch, g) = geometry_for(x, kernel, stride, pad)?;
    let mut out = Tensor::zeros(&[batch, g.c_out, g.out_h, g.out_w]);
    let xd = x.data();
    let kd = kernel.data();
    for s in 0..batch {
        for co in 0..g.c_out {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut acc = bias.data()[co];
                    for ci in 0..g.c_in {
                        for kr in 0..g.k1 {
                            for kc in 0..g.k2 {
                                let y = (oy * g.stride + kr) as isize - g.pad as isize;
                                let xx = (ox * g.stride + kc) as isize - g.pad as isize;
                                if y < 0 || xx < 0 || y >= g.h as isize || xx >= g.w as isize {
                                    continue;
                                }
                                let xi = ((s * g.c_in + ci) * g.h + y as usize) * g.w + xx as usize;
                                let ki = ((co * g.c_in + ci) * g.k1 + kr) * g.k2 + kc;
                                acc += xd[xi] * kd[ki];
                            }
                        }
                    }
                    out.data_mut()[((s * g.c_out + co) * g.out_h + oy) * g.out_w + ox] = acc;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    input_dims: Vec<usize>,
    geometry: ConvGeometry,
    patches: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: ParamTensor<T>,
    pub bias: ParamTensor<T>,
    pub stride: usize,
    pub pad: usize,
    cache: Option<ConvCache<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(prefix: &str, kernel: Tensor<T>, bias: Tensor<T>, stride: usize, pad: usize) -> Result<Self> {
        let &[c_out, c_in, k1, k2] = kernel.dims() else {
            return Err(Error::InvalidArgument(format!(
                "conv kernel must be 4-D, got {:?}",
                kernel.dims()
            )));
        };
        if bias.dims() != [c_out] {
            return Err(shape_err("conv bias", kernel.dims(), bias.dims()));
        }
        Ok(Conv2d {
            weight: ParamTensor::new(
                format!("{prefix}.weight"),
                kernel,
                Some(Unfolding::conv(c_out, c_in, k1, k2)),
            ),
            bias: ParamTensor::new(format!("{prefix}.bias"), bias, None),
            stride,
            pad,
            cache: None,
        })
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, patches) = conv2d_forward(x, &self.weight.value, &self.bias.value, self.stride, self.pad)?;
        let (_, geometry) = geometry_for(x, &self.weight.value, self.stride, self.pad)?;
        self.cache = Some(ConvCache {
            input_dims: x.dims().to_vec(),
            geometry,
            patches,
        });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::State("conv2d backward before forward"))?;
        let g = cache.geometry;
        let batch = cache.input_dims[0];
        let expect = [batch, g.c_out, g.out_h, g.out_w];
        if dy.dims() != expect {
            return Err(shape_err("conv2d_backward", dy.dims(), &expect));
        }
        let (m, locs) = (g.patch_rows(), g.locations());
        let in_size = g.c_in * g.h * g.w;
        let out_size = g.c_out * locs;
        let mut dk = Tensor::zeros(self.weight.value.dims());
        let mut db = Tensor::zeros(&[g.c_out]);
        let mut dx = Tensor::zeros(&cache.input_dims);
        let mut dpatch = vec![T::ZERO; m * locs];
        for s in 0..batch {
            let dys = &dy.data()[s * out_size..(s + 1) * out_size];
            let p = &cache.patches[s * m * locs..(s + 1) * m * locs];
            linalg::gemm_nt(g.c_out, locs, m, dys, p, dk.data_mut());
            for (d, row) in db.data_mut().iter_mut().zip(dys.chunks_exact(locs)) {
                *d += linalg::sum(row);
            }
            dpatch.iter_mut().for_each(|v| *v = T::ZERO);
            linalg::gemm_tn(m, g.c_out, locs, self.weight.value.data(), dys, &mut dpatch);
            g.col2im(&dpatch, &mut dx.data_mut()[s * in_size..(s + 1) * in_size]);
        }
        self.weight.grad = dk;
        self.bias.grad = db;
        Ok(dx)
    }
}
