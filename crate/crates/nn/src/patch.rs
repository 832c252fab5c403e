//! Patch extraction (im2col) and its adjoint (col2im) as differentiable CPU
//! ops. Convolutions become one matrix product on top of these.

use std::ops::AddAssign;

use candle_core::backend::BackendStorage;
use candle_core::{bail, CpuStorage, CustomOp1, Layout, Result, Shape, Tensor};

/// Geometry of a square-kernel convolution over an `h x w` image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
}

impl Geometry {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.k) / self.stride + 1
    }

    fn check(&self) -> Result<()> {
        if self.k == 0 || self.stride == 0 || self.h + 2 * self.pad < self.k || self.w + 2 * self.pad < self.k {
            bail!("degenerate convolution geometry {self:?}")
        }
        Ok(())
    }

    /// Calls `f(image_index, column_index)` for every in-bounds tap of one
    /// channel; column rows are `tap * out_h * out_w`.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let (ho, wo) = (self.out_h(), self.out_w());
        for ky in 0..self.k {
            for kx in 0..self.k {
                let row = (ky * self.k + kx) * ho * wo;
                for oy in 0..ho {
                    let y = (oy * self.stride + ky) as isize - self.pad as isize;
                    if y < 0 || y >= self.h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let x = (ox * self.stride + kx) as isize - self.pad as isize;
                        if x >= 0 && x < self.w as isize {
                            f(y as usize * self.w + x as usize, row + oy * wo + ox);
                        }
                    }
                }
            }
        }
    }
}

fn contiguous<'a, T>(v: &'a [T], layout: &Layout) -> Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((a, b)) => Ok(&v[a..b]),
        None => bail!("patch op expects a contiguous input"),
    }
}

/// `(n, c, h, w)` to `(n, c*k*k, out_h*out_w)`, zero outside the image.
#[derive(Debug, Clone, Copy)]
struct Im2Col(Geometry);

/// `(n, c*k*k, out_h*out_w)` to `(n, c, h, w)`, summing overlapping taps.
#[derive(Debug, Clone, Copy)]
struct Col2Im(Geometry);

impl Im2Col {
    fn run<T: Copy + Default>(&self, src: &[T], n: usize, c: usize) -> Vec<T> {
        let g = self.0;
        let (plane, cols) = (g.h * g.w, g.k * g.k * g.out_h() * g.out_w());
        let mut out = vec![T::default(); n * c * cols];
        for (img, dst) in src.chunks_exact(plane).zip(out.chunks_exact_mut(cols)) {
            g.for_each_tap(|i, j| dst[j] = img[i]);
        }
        out
    }
}

impl Col2Im {
    fn run<T: Copy + Default + AddAssign>(&self, src: &[T], n: usize, c: usize) -> Vec<T> {
        let g = self.0;
        let (plane, cols) = (g.h * g.w, g.k * g.k * g.out_h() * g.out_w());
        let mut out = vec![T::default(); n * c * plane];
        for (col, dst) in src.chunks_exact(cols).zip(out.chunks_exact_mut(plane)) {
            g.for_each_tap(|i, j| dst[i] += col[j]);
        }
        out
    }
}

impl CustomOp1 for Im2Col {
    fn name(&self) -> &'static str {
        "im2col"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> Result<(CpuStorage, Shape)> {
        let g = self.0;
        let (n, c, h, w) = layout.shape().dims4()?;
        if (h, w) != (g.h, g.w) {
            bail!("im2col built for {}x{}, got {h}x{w}", g.h, g.w)
        }
        let shape = Shape::from((n, c * g.k * g.k, g.out_h() * g.out_w()));
        let out = match storage {
            CpuStorage::F32(v) => CpuStorage::F32(self.run(contiguous(v, layout)?, n, c)),
            CpuStorage::F64(v) => CpuStorage::F64(self.run(contiguous(v, layout)?, n, c)),
            s => bail!("im2col: unsupported dtype {:?}", s.dtype()),
        };
        Ok((out, shape))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> Result<Option<Tensor>> {
        Ok(Some(grad.contiguous()?.apply_op1(Col2Im(self.0))?))
    }
}

impl CustomOp1 for Col2Im {
    fn name(&self) -> &'static str {
        "col2im"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> Result<(CpuStorage, Shape)> {
        let g = self.0;
        let (n, ckk, l) = layout.shape().dims3()?;
        if ckk % (g.k * g.k) != 0 || l != g.out_h() * g.out_w() {
            bail!("col2im: columns {ckk}x{l} do not fit {g:?}")
        }
        let c = ckk / (g.k * g.k);
        let shape = Shape::from((n, c, g.h, g.w));
        let out = match storage {
            CpuStorage::F32(v) => CpuStorage::F32(self.run(contiguous(v, layout)?, n, c)),
            CpuStorage::F64(v) => CpuStorage::F64(self.run(contiguous(v, layout)?, n, c)),
            s => bail!("col2im: unsupported dtype {:?}", s.dtype()),
        };
        Ok((out, shape))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> Result<Option<Tensor>> {
        Ok(Some(grad.contiguous()?.apply_op1(Im2Col(self.0))?))
    }
}

pub fn im2col(x: &Tensor, k: usize, stride: usize, pad: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let g = Geometry { k, stride, pad, h, w };
    g.check()?;
    x.contiguous()?.apply_op1(Im2Col(g))
}

/// Inverse layout of [`im2col`] for an `h x w` image; overlaps add up.
pub fn col2im(cols: &Tensor, g: Geometry) -> Result<Tensor> {
    g.check()?;
    cols.contiguous()?.apply_op1(Col2Im(g))
}

/// Cross-correlation; weight `(c_out, c_in, k, k)`.
pub fn conv2d(x: &Tensor, weight: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let (c_out, c_in, k, _) = weight.dims4()?;
    let (n, _, h, w) = x.dims4()?;
    let g = Geometry { k, stride, pad, h, w };
    let cols = im2col(x, k, stride, pad)?;
    weight
        .reshape((c_out, c_in * k * k))?
        .broadcast_matmul(&cols)?
        .reshape((n, c_out, g.out_h(), g.out_w()))
}

/// Transposed convolution, the adjoint of [`conv2d`]; weight `(c_in, c_out, k, k)`.
pub fn conv_transpose2d(x: &Tensor, weight: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let (c_in, c_out, k, _) = weight.dims4()?;
    let (n, _, h, w) = x.dims4()?;
    if (h - 1) * stride + k < 2 * pad + 1 || (w - 1) * stride + k < 2 * pad + 1 {
        bail!("transposed convolution output would be empty")
    }
    let g = Geometry {
        k,
        stride,
        pad,
        h: (h - 1) * stride + k - 2 * pad,
        w: (w - 1) * stride + k - 2 * pad,
    };
    let wt = weight.reshape((c_in, c_out * k * k))?.t()?;
    let cols = wt.broadcast_matmul(&x.reshape((n, c_in, h * w))?)?;
    col2im(&cols, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device, Var};
    use proptest::prelude::*;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let d = Device::Cpu;
        let n: usize = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|i| ((i as u64 * 2654435761 + seed * 97) % 1000) as f64 / 500.0 - 1.0).collect();
        Tensor::from_vec(v, shape, &d).unwrap()
    }

    fn max_gap(a: &Tensor, b: &Tensor) -> f64 {
        assert_eq!(a.dims(), b.dims());
        (a - b).unwrap().abs().unwrap().flatten_all().unwrap().max(0).unwrap().to_scalar::<f64>().unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn conv_matches_direct(k in 1usize..5, stride in 1usize..3, pad in 0usize..2, h in 4usize..9, w in 4usize..9, seed in 0u64..100) {
            let x = random(&[2, 3, h, w], seed);
            let wt = random(&[4, 3, k, k], seed + 1);
            let ours = conv2d(&x, &wt, stride, pad).unwrap();
            let reference = x.conv2d(&wt, pad, stride, 1, 1).unwrap();
            prop_assert!(max_gap(&ours, &reference) < 1e-12);
        }

        #[test]
        fn transposed_conv_matches_direct(k in 2usize..5, stride in 1usize..3, h in 1usize..6, seed in 0u64..100) {
            let pad = (k - 1) / 2;
            let x = random(&[2, 3, h, h], seed);
            let wt = random(&[3, 2, k, k], seed + 1);
            let ours = conv_transpose2d(&x, &wt, stride, pad).unwrap();
            let reference = x.conv_transpose2d(&wt, pad, 0, stride, 1).unwrap();
            prop_assert!(max_gap(&ours, &reference) < 1e-12);
        }

        /// <im2col(x), y> == <x, col2im(y)>
        #[test]
        fn col2im_is_the_adjoint(k in 1usize..5, stride in 1usize..3, pad in 0usize..2, h in 4usize..8, seed in 0u64..100) {
            let g = Geometry { k, stride, pad, h, w: h + 1 };
            let x = random(&[1, 2, g.h, g.w], seed);
            let y = random(&[1, 2 * k * k, g.out_h() * g.out_w()], seed + 7);
            let lhs = (im2col(&x, k, stride, pad).unwrap() * &y).unwrap().sum_all().unwrap().to_scalar::<f64>().unwrap();
            let rhs = (&x * col2im(&y, g).unwrap()).unwrap().sum_all().unwrap().to_scalar::<f64>().unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn gradients_flow_through_both_ops() {
        let x = Var::from_tensor(&random(&[1, 2, 6, 6], 3)).unwrap();
        let w = Var::from_tensor(&random(&[3, 2, 4, 4], 4)).unwrap();
        let y = conv2d(x.as_tensor(), w.as_tensor(), 2, 1).unwrap();
        let z = conv_transpose2d(&y, w.as_tensor(), 2, 1).unwrap();
        let grads = z.sqr().unwrap().sum_all().unwrap().backward().unwrap();
        let reference = {
            let y = x.as_tensor().conv2d(w.as_tensor(), 1, 2, 1, 1).unwrap();
            y.conv_transpose2d(w.as_tensor(), 1, 0, 2, 1).unwrap().sqr().unwrap().sum_all().unwrap().backward().unwrap()
        };
        for v in [&x, &w] {
            let (a, b) = (grads.get(v.as_tensor()).unwrap(), reference.get(v.as_tensor()).unwrap());
            assert!(max_gap(a, b) < 1e-10);
        }
        assert_eq!(z.dtype(), DType::F64);
    }
}
