//! Raw numeric loops shared by forward and backward passes.

/// `c[m×n] = a[m×k] · b[k×n]`
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in row.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// `da[m×k] += dc[m×n] · bᵀ`
pub fn matmul_grad_lhs(dc: &[f64], b: &[f64], da: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let drow = &dc[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            da[i * k + p] += dot(drow, brow);
        }
    }
}

/// `db[k×n] += aᵀ · dc[m×n]`
pub fn matmul_grad_rhs(a: &[f64], dc: &[f64], db: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let drow = &dc[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let dbrow = &mut db[p * n..(p + 1) * n];
            for (d, g) in dbrow.iter_mut().zip(drow) {
                *d += av * g;
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_len: usize,
    pub out_len: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Valid output positions `t` such that `t*stride + k - padding` lies in `[0, len)`.
#[inline]
fn tap_range(g: &ConvGeom, k: usize, len: usize, out_len: usize) -> (usize, usize) {
    // t*s + k >= p  and  t*s + k - p < len
    let lo = if k >= g.padding {
        0
    } else {
        (g.padding - k).div_ceil(g.stride)
    };
    let limit = len + g.padding; // t*s + k < len + p
    let hi = if limit > k {
        ((limit - k - 1) / g.stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Strided 1-D cross-correlation. `x: [B, Ci, L]`, `w: [Co, Ci, K]`.
pub fn conv1d(x: &[f64], w: &[f64], bias: Option<&[f64]>, g: &ConvGeom) -> Vec<f64> {
    let mut y = vec![0.0; g.batch * g.out_ch * g.out_len];
    for b in 0..g.batch {
        for o in 0..g.out_ch {
            let yrow = &mut y[(b * g.out_ch + o) * g.out_len..(b * g.out_ch + o + 1) * g.out_len];
            if let Some(bias) = bias {
                yrow.iter_mut().for_each(|v| *v = bias[o]);
            }
            for c in 0..g.in_ch {
                let xrow = &x[(b * g.in_ch + c) * g.in_len..(b * g.in_ch + c + 1) * g.in_len];
                for k in 0..g.kernel {
                    let wv = w[(o * g.in_ch + c) * g.kernel + k];
                    let (lo, hi) = tap_range(g, k, g.in_len, g.out_len);
                    for t in lo..hi {
                        yrow[t] += wv * xrow[t * g.stride + k - g.padding];
                    }
                }
            }
        }
    }
    y
}

/// Gradients of [`conv1d`] with respect to input, kernel and bias.
pub fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &ConvGeom,
    dx: Option<&mut [f64]>,
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    if let Some(dx) = dx {
        for b in 0..g.batch {
            for o in 0..g.out_ch {
                let dyrow = &dy[(b * g.out_ch + o) * g.out_len..(b * g.out_ch + o + 1) * g.out_len];
                for c in 0..g.in_ch {
                    let base = (b * g.in_ch + c) * g.in_len;
                    for k in 0..g.kernel {
                        let wv = w[(o * g.in_ch + c) * g.kernel + k];
                        let (lo, hi) = tap_range(g, k, g.in_len, g.out_len);
                        for t in lo..hi {
                            dx[base + t * g.stride + k - g.padding] += wv * dyrow[t];
                        }
                    }
                }
            }
        }
    }
    if let Some(dw) = dw {
        for b in 0..g.batch {
            for o in 0..g.out_ch {
                let dyrow = &dy[(b * g.out_ch + o) * g.out_len..(b * g.out_ch + o + 1) * g.out_len];
                for c in 0..g.in_ch {
                    let xrow = &x[(b * g.in_ch + c) * g.in_len..(b * g.in_ch + c + 1) * g.in_len];
                    for k in 0..g.kernel {
                        let (lo, hi) = tap_range(g, k, g.in_len, g.out_len);
                        let mut acc = 0.0;
                        for t in lo..hi {
                            acc += xrow[t * g.stride + k - g.padding] * dyrow[t];
                        }
                        dw[(o * g.in_ch + c) * g.kernel + k] += acc;
                    }
                }
            }
        }
    }
    if let Some(db) = db {
        for b in 0..g.batch {
            for o in 0..g.out_ch {
                let dyrow = &dy[(b * g.out_ch + o) * g.out_len..(b * g.out_ch + o + 1) * g.out_len];
                db[o] += dyrow.iter().sum::<f64>();
            }
        }
    }
}

/// Transposed strided convolution. `x: [B, Ci, L]`, `w: [Ci, Co, K]`,
/// output `[B, Co, out_len]`. Here `g.in_len` is `L` and `g.out_len` is the
/// upsampled length.
pub fn conv1d_transpose(x: &[f64], w: &[f64], bias: Option<&[f64]>, g: &ConvGeom) -> Vec<f64> {
    let mut y = vec![0.0; g.batch * g.out_ch * g.out_len];
    for b in 0..g.batch {
        for o in 0..g.out_ch {
            let ybase = (b * g.out_ch + o) * g.out_len;
            if let Some(bias) = bias {
                y[ybase..ybase + g.out_len].iter_mut().for_each(|v| *v = bias[o]);
            }
            for c in 0..g.in_ch {
                let xrow = &x[(b * g.in_ch + c) * g.in_len..(b * g.in_ch + c + 1) * g.in_len];
                for k in 0..g.kernel {
                    let wv = w[(c * g.out_ch + o) * g.kernel + k];
                    // roles swap: positions in the long axis are t*s + k - p
                    let (lo, hi) = tap_range(g, k, g.out_len, g.in_len);
                    for t in lo..hi {
                        y[ybase + t * g.stride + k - g.padding] += wv * xrow[t];
                    }
                }
            }
        }
    }
    y
}

pub fn conv1d_transpose_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &ConvGeom,
    dx: Option<&mut [f64]>,
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    if let Some(dx) = dx {
        for b in 0..g.batch {
            for c in 0..g.in_ch {
                let xbase = (b * g.in_ch + c) * g.in_len;
                for o in 0..g.out_ch {
                    let dyrow = &dy[(b * g.out_ch + o) * g.out_len..(b * g.out_ch + o + 1) * g.out_len];
                    for k in 0..g.kernel {
                        let wv = w[(c * g.out_ch + o) * g.kernel + k];
                        let (lo, hi) = tap_range(g, k, g.out_len, g.in_len);
                        for t in lo..hi {
                            dx[xbase + t] += wv * dyrow[t * g.stride + k - g.padding];
                        }
                    }
                }
            }
        }
    }
    if let Some(dw) = dw {
        for b in 0..g.batch {
            for c in 0..g.in_ch {
                let xrow = &x[(b * g.in_ch + c) * g.in_len..(b * g.in_ch + c + 1) * g.in_len];
                for o in 0..g.out_ch {
                    let dyrow = &dy[(b * g.out_ch + o) * g.out_len..(b * g.out_ch + o + 1) * g.out_len];
                    for k in 0..g.kernel {
                        let (lo, hi) = tap_range(g, k, g.out_len, g.in_len);
                        let mut acc = 0.0;
                        for t in lo..hi {
                            acc += xrow[t] * dyrow[t * g.stride + k - g.padding];
                        }
                        dw[(c * g.out_ch + o) * g.kernel + k] += acc;
                    }
                }
            }
        }
    }
    if let Some(db) = db {
        for b in 0..g.batch {
            for o in 0..g.out_ch {
                let base = (b * g.out_ch + o) * g.out_len;
                db[o] += dy[base..base + g.out_len].iter().sum::<f64>();
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax over contiguous rows of length `n`, in place.
pub fn softmax_rows(v: &mut [f64], n: usize) {
    for row in v.chunks_mut(n) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_counts_windows() {
        let g = ConvGeom {
            batch: 1,
            in_ch: 1,
            out_ch: 1,
            in_len: 8,
            out_len: 6,
            kernel: 3,
            stride: 1,
            padding: 0,
        };
        let x: Vec<f64> = (0..8).map(|v| v as f64).collect();
        let y = conv1d(&x, &[1.0, 1.0, 1.0], None, &g);
        assert_eq!(y, vec![3.0, 6.0, 9.0, 12.0, 15.0, 18.0]);
    }

    #[test]
    fn padded_strided_tap_range() {
        let g = ConvGeom {
            batch: 1,
            in_ch: 1,
            out_ch: 1,
            in_len: 5,
            out_len: 3,
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        // positions t*2 + k - 1 for t in 0..3
        assert_eq!(tap_range(&g, 0, 5, 3), (1, 3));
        assert_eq!(tap_range(&g, 1, 5, 3), (0, 3));
        assert_eq!(tap_range(&g, 2, 5, 3), (0, 2));
    }
}
