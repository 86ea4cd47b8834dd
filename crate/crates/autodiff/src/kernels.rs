//! Raw loops behind the convolution and pooling ops.

use crate::element::Element;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub ph: usize,
    pub pw: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.ho * self.wo
    }

    /// 1×1, stride 1, no padding: the input plane already is the column matrix.
    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.ph == 0 && self.pw == 0
    }
}

/// Unfolds one `[cin,h,w]` image into `[cin*kh*kw, ho*wo]`.
pub(crate) fn im2col<T: Element>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let plane = g.ho * g.wo;
    for c in 0..g.cin {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut col[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.ph as isize;
                    let out_row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &x[(c * g.h + iy as usize) * g.w..][..g.w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pw as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds column gradients back onto the image.
pub(crate) fn col2im<T: Element>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let plane = g.ho * g.wo;
    for c in 0..g.cin {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &col[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut dx[(c * g.h + iy as usize) * g.w..][..g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pw as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] = dst[ix as usize] + src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Half-open `[start, end)` windows along one spatial axis.
pub(crate) type Windows = Vec<(usize, usize)>;

/// Fixed-kernel windows with ceil-mode coverage: the last window is clipped to
/// the input, so an extent smaller than the kernel still yields one output.
/// Every window starts inside the input.
pub(crate) fn pool_windows(extent: usize, kernel: usize, stride: usize) -> Windows {
    let out = if extent <= kernel {
        1
    } else {
        (extent - kernel).div_ceil(stride) + 1
    };
    (0..out)
        .map(|o| o * stride)
        .take_while(|&s| s < extent)
        .map(|s| (s, (s + kernel).min(extent)))
        .collect()
}

/// Adaptive windows: bin `i` covers `[floor(i*n/out), ceil((i+1)*n/out))`.
pub(crate) fn adaptive_windows(extent: usize, out: usize) -> Windows {
    (0..out)
        .map(|i| ((i * extent) / out, ((i + 1) * extent).div_ceil(out)))
        .collect()
}

/// Max over windows for a `[planes,h,w]` stack. Returns values and the flat
/// input index of each maximum (first occurrence wins on ties).
pub(crate) fn max_pool<T: Element>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
    rows: &Windows,
    cols: &Windows,
) -> (Vec<T>, Vec<usize>) {
    let n = planes * rows.len() * cols.len();
    let mut out = Vec::with_capacity(n);
    let mut arg = Vec::with_capacity(n);
    for p in 0..planes {
        let base = p * h * w;
        for &(r0, r1) in rows {
            for &(c0, c1) in cols {
                let mut best = base + r0 * w + c0;
                for r in r0..r1 {
                    for c in c0..c1 {
                        let i = base + r * w + c;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}
