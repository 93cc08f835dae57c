//! Numeric kernels behind the graph primitives.

use super::Tensor;
use crate::error::{Error, Result};

/// Row-major matrix view with explicit strides, used to express transposes.
#[derive(Clone, Copy)]
pub(super) struct MatRef<'a> {
    pub data: &'a [f64],
    pub rs: isize,
    pub cs: isize,
}

impl<'a> MatRef<'a> {
    pub fn rows(data: &'a [f64], cols: usize) -> Self {
        Self {
            data,
            rs: cols as isize,
            cs: 1,
        }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [f64], cols: usize) -> Self {
        Self {
            data,
            rs: 1,
            cs: cols as isize,
        }
    }
}

/// `c = a · b + beta · c` for an `m×k` by `k×n` product, `c` row-major.
pub(super) fn gemm(m: usize, k: usize, n: usize, a: MatRef, b: MatRef, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the callers size every buffer for the requested views; the
    // assertion above covers the output and the views index within their slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(super) fn conv_out_len(
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    let padded = len + 2 * padding;
    if kernel == 0 || stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy)]
pub(super) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub len: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub lout: usize,
}

impl ConvGeom {
    pub fn new(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, padding: usize) -> Result<Self> {
        let (batch, cin, len) = x.dims3("conv1d")?;
        let (cout, wcin, kernel) = w.dims3("conv1d")?;
        if wcin != cin {
            return Err(Error::shape(
                "conv1d",
                format!("input has {cin} channels, weight expects {wcin}"),
            ));
        }
        if b.shape() != [cout] {
            return Err(Error::shape(
                "conv1d",
                format!("bias shape {:?}, expected [{cout}]", b.shape()),
            ));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv1d stride must be >= 1".into()));
        }
        let lout = conv_out_len(len, kernel, stride, padding).ok_or_else(|| {
            Error::shape(
                "conv1d",
                format!(
                    "no output positions for L={len}, K={kernel}, stride={stride}, pad={padding}"
                ),
            )
        })?;
        Ok(Self {
            batch,
            cin,
            cout,
            len,
            kernel,
            stride,
            padding,
            lout,
        })
    }

    fn patch(&self) -> usize {
        self.cin * self.kernel
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let (k, s, p, lout) = (self.kernel, self.stride, self.padding as isize, self.lout);
        for c in 0..self.cin {
            let xrow = &x[c * self.len..(c + 1) * self.len];
            for kk in 0..k {
                let row = &mut cols[(c * k + kk) * lout..(c * k + kk + 1) * lout];
                for (o, v) in row.iter_mut().enumerate() {
                    let pos = (o * s + kk) as isize - p;
                    *v = if pos >= 0 && (pos as usize) < self.len {
                        xrow[pos as usize]
                    } else {
                        0.0
                    };
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let (k, s, p, lout) = (self.kernel, self.stride, self.padding as isize, self.lout);
        for c in 0..self.cin {
            let dxrow = &mut dx[c * self.len..(c + 1) * self.len];
            for kk in 0..k {
                let row = &cols[(c * k + kk) * lout..(c * k + kk + 1) * lout];
                for (o, v) in row.iter().enumerate() {
                    let pos = (o * s + kk) as isize - p;
                    if pos >= 0 && (pos as usize) < self.len {
                        dxrow[pos as usize] += v;
                    }
                }
            }
        }
    }
}

pub(super) fn conv1d_forward(g: &ConvGeom, x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let patch = g.patch();
    let mut cols = vec![0.0; patch * g.lout];
    let mut out = vec![0.0; g.batch * g.cout * g.lout];
    for bi in 0..g.batch {
        let xb = &x.data()[bi * g.cin * g.len..(bi + 1) * g.cin * g.len];
        g.im2col(xb, &mut cols);
        let ob = &mut out[bi * g.cout * g.lout..(bi + 1) * g.cout * g.lout];
        for (co, row) in ob.chunks_mut(g.lout).enumerate() {
            row.fill(b.data()[co]);
        }
        gemm(
            g.cout,
            patch,
            g.lout,
            MatRef::rows(w.data(), patch),
            MatRef::rows(&cols, g.lout),
            1.0,
            ob,
        );
    }
    Tensor {
        shape: vec![g.batch, g.cout, g.lout],
        data: out,
    }
}

pub(super) struct ConvGrads {
    pub dx: Option<Tensor>,
    pub dw: Option<Tensor>,
    pub db: Option<Tensor>,
}

pub(super) fn conv1d_backward(
    g: &ConvGeom,
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    need: [bool; 3],
) -> ConvGrads {
    let patch = g.patch();
    let [need_x, need_w, need_b] = need;
    let mut cols = vec![0.0; patch * g.lout];
    let mut dx = need_x.then(|| vec![0.0; g.batch * g.cin * g.len]);
    let mut dw = need_w.then(|| vec![0.0; g.cout * patch]);
    let mut db = need_b.then(|| vec![0.0; g.cout]);
    for bi in 0..g.batch {
        let dyb = &dy.data()[bi * g.cout * g.lout..(bi + 1) * g.cout * g.lout];
        if let Some(db) = db.as_mut() {
            for (co, row) in dyb.chunks(g.lout).enumerate() {
                db[co] += row.iter().sum::<f64>();
            }
        }
        if let Some(dw) = dw.as_mut() {
            let xb = &x.data()[bi * g.cin * g.len..(bi + 1) * g.cin * g.len];
            g.im2col(xb, &mut cols);
            gemm(
                g.cout,
                g.lout,
                patch,
                MatRef::rows(dyb, g.lout),
                MatRef::transposed(&cols, g.lout),
                1.0,
                dw,
            );
        }
        if let Some(dx) = dx.as_mut() {
            gemm(
                patch,
                g.cout,
                g.lout,
                MatRef::transposed(w.data(), patch),
                MatRef::rows(dyb, g.lout),
                0.0,
                &mut cols,
            );
            g.col2im(&cols, &mut dx[bi * g.cin * g.len..(bi + 1) * g.cin * g.len]);
        }
    }
    ConvGrads {
        dx: dx.map(|d| Tensor {
            shape: vec![g.batch, g.cin, g.len],
            data: d,
        }),
        dw: dw.map(|d| Tensor {
            shape: vec![g.cout, g.cin, g.kernel],
            data: d,
        }),
        db: db.map(|d| Tensor {
            shape: vec![g.cout],
            data: d,
        }),
    }
}

/// Output length of a max-pool. Ceil mode admits a trailing partial window.
pub(super) fn pool_out_len(
    len: usize,
    kernel: usize,
    stride: usize,
    ceil_mode: bool,
) -> Option<usize> {
    if kernel == 0 || stride == 0 || len < kernel {
        return None;
    }
    let span = len - kernel;
    Some(
        if ceil_mode {
            span.div_ceil(stride)
        } else {
            span / stride
        } + 1,
    )
}

/// Windowed maximum along the last axis; returns the output and flat argmax indices.
pub(super) fn maxpool_forward(
    x: &Tensor,
    kernel: usize,
    stride: usize,
    lout: usize,
) -> (Tensor, Vec<usize>) {
    let (b, c, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = Vec::with_capacity(b * c * lout);
    let mut arg = Vec::with_capacity(b * c * lout);
    for (row_idx, row) in x.data().chunks(len).enumerate() {
        for o in 0..lout {
            let start = o * stride;
            let end = (start + kernel).min(len);
            let mut best = start;
            for i in start + 1..end {
                if row[i] > row[best] {
                    best = i;
                }
            }
            out.push(row[best]);
            arg.push(row_idx * len + best);
        }
    }
    (
        Tensor {
            shape: vec![b, c, lout],
            data: out,
        },
        arg,
    )
}
