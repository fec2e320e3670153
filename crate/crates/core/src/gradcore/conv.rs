//! Direct 3D convolution and transposed convolution kernels.
//!
//! Layouts: activations `[C, D, H, W]`, conv weights `[C_out, C_in, k, k, k]`,
//! transposed-conv weights `[C_in, C_out, k, k, k]`.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
}

impl Geometry {
    pub fn conv_out(&self, len: usize) -> Option<usize> {
        let padded = len + 2 * self.padding;
        (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
    }

    pub fn tconv_out(&self, len: usize) -> Option<usize> {
        let full = (len - 1) * self.stride + self.kernel + self.output_padding;
        (full > 2 * self.padding).then(|| full - 2 * self.padding)
    }
}

/// Range of `o` with `0 <= o*stride + k - pad < in_len`, clipped to `[0, out_len)`.
#[inline]
fn conv_range(k: usize, pad: usize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let k = k as isize;
    let pad = pad as isize;
    let s = stride as isize;
    // o*s >= pad - k
    let lo_num = pad - k;
    let lo = if lo_num <= 0 { 0 } else { (lo_num + s - 1) / s };
    // o*s <= in_len - 1 + pad - k
    let hi_num = in_len as isize - 1 + pad - k;
    let hi = if hi_num < 0 { -1 } else { hi_num / s };
    let hi = (hi + 1).min(out_len as isize);
    let lo = lo.max(0);
    if hi <= lo {
        (0, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

#[derive(Clone, Copy)]
pub(crate) struct Dims {
    pub c: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn from_shape(shape: &[usize]) -> Option<Dims> {
        match *shape {
            [c, d, h, w] => Some(Dims { c, d, h, w }),
            _ => None,
        }
    }

    fn vol(&self) -> usize {
        self.d * self.h * self.w
    }
}

pub(crate) fn conv3_forward(x: &[f64], xd: Dims, w: &[f64], b: &[f64], yd: Dims, g: Geometry) -> Vec<f64> {
    let k = g.kernel;
    let k3 = k * k * k;
    let mut y = vec![0.0; yd.c * yd.vol()];
    for co in 0..yd.c {
        y[co * yd.vol()..(co + 1) * yd.vol()].fill(b[co]);
    }
    for co in 0..yd.c {
        let yc = &mut y[co * yd.vol()..(co + 1) * yd.vol()];
        for ci in 0..xd.c {
            let xc = &x[ci * xd.vol()..(ci + 1) * xd.vol()];
            let wbase = (co * xd.c + ci) * k3;
            for kd in 0..k {
                let (d0, d1) = conv_range(kd, g.padding, g.stride, xd.d, yd.d);
                for kh in 0..k {
                    let (h0, h1) = conv_range(kh, g.padding, g.stride, xd.h, yd.h);
                    for kw in 0..k {
                        let (w0, w1) = conv_range(kw, g.padding, g.stride, xd.w, yd.w);
                        let wv = w[wbase + (kd * k + kh) * k + kw];
                        if wv == 0.0 {
                            continue;
                        }
                        for od in d0..d1 {
                            let id = od * g.stride + kd - g.padding;
                            for oh in h0..h1 {
                                let ih = oh * g.stride + kh - g.padding;
                                let yrow = (od * yd.h + oh) * yd.w;
                                let xrow = (id * xd.h + ih) * xd.w;
                                for ow in w0..w1 {
                                    let iw = ow * g.stride + kw - g.padding;
                                    yc[yrow + ow] += wv * xc[xrow + iw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Returns `(grad_x, grad_w, grad_b)`.
pub(crate) fn conv3_backward(
    x: &[f64],
    xd: Dims,
    w: &[f64],
    gy: &[f64],
    yd: Dims,
    g: Geometry,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = g.kernel;
    let k3 = k * k * k;
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; yd.c];
    for co in 0..yd.c {
        let gyc = &gy[co * yd.vol()..(co + 1) * yd.vol()];
        gb[co] = gyc.iter().sum();
        for ci in 0..xd.c {
            let xc = &x[ci * xd.vol()..(ci + 1) * xd.vol()];
            let gxc = &mut gx[ci * xd.vol()..(ci + 1) * xd.vol()];
            let wbase = (co * xd.c + ci) * k3;
            for kd in 0..k {
                let (d0, d1) = conv_range(kd, g.padding, g.stride, xd.d, yd.d);
                for kh in 0..k {
                    let (h0, h1) = conv_range(kh, g.padding, g.stride, xd.h, yd.h);
                    for kw in 0..k {
                        let (w0, w1) = conv_range(kw, g.padding, g.stride, xd.w, yd.w);
                        let widx = wbase + (kd * k + kh) * k + kw;
                        let wv = w[widx];
                        let mut acc = 0.0;
                        for od in d0..d1 {
                            let id = od * g.stride + kd - g.padding;
                            for oh in h0..h1 {
                                let ih = oh * g.stride + kh - g.padding;
                                let yrow = (od * yd.h + oh) * yd.w;
                                let xrow = (id * xd.h + ih) * xd.w;
                                for ow in w0..w1 {
                                    let iw = ow * g.stride + kw - g.padding;
                                    let gv = gyc[yrow + ow];
                                    acc += gv * xc[xrow + iw];
                                    gxc[xrow + iw] += wv * gv;
                                }
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

pub(crate) fn tconv3_forward(x: &[f64], xd: Dims, w: &[f64], b: &[f64], yd: Dims, g: Geometry) -> Vec<f64> {
    let k = g.kernel;
    let k3 = k * k * k;
    let mut y = vec![0.0; yd.c * yd.vol()];
    for co in 0..yd.c {
        y[co * yd.vol()..(co + 1) * yd.vol()].fill(b[co]);
    }
    for ci in 0..xd.c {
        let xc = &x[ci * xd.vol()..(ci + 1) * xd.vol()];
        for co in 0..yd.c {
            let yc = &mut y[co * yd.vol()..(co + 1) * yd.vol()];
            let wbase = (ci * yd.c + co) * k3;
            for kd in 0..k {
                // input index i maps to output i*s + k - p
                let (d0, d1) = conv_range(kd, g.padding, g.stride, yd.d, xd.d);
                for kh in 0..k {
                    let (h0, h1) = conv_range(kh, g.padding, g.stride, yd.h, xd.h);
                    for kw in 0..k {
                        let (w0, w1) = conv_range(kw, g.padding, g.stride, yd.w, xd.w);
                        let wv = w[wbase + (kd * k + kh) * k + kw];
                        if wv == 0.0 {
                            continue;
                        }
                        for id in d0..d1 {
                            let od = id * g.stride + kd - g.padding;
                            for ih in h0..h1 {
                                let oh = ih * g.stride + kh - g.padding;
                                let xrow = (id * xd.h + ih) * xd.w;
                                let yrow = (od * yd.h + oh) * yd.w;
                                for iw in w0..w1 {
                                    let ow = iw * g.stride + kw - g.padding;
                                    yc[yrow + ow] += wv * xc[xrow + iw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Returns `(grad_x, grad_w, grad_b)`.
pub(crate) fn tconv3_backward(
    x: &[f64],
    xd: Dims,
    w: &[f64],
    gy: &[f64],
    yd: Dims,
    g: Geometry,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = g.kernel;
    let k3 = k * k * k;
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    let gb: Vec<f64> = (0..yd.c)
        .map(|co| gy[co * yd.vol()..(co + 1) * yd.vol()].iter().sum())
        .collect();
    for ci in 0..xd.c {
        let xc = &x[ci * xd.vol()..(ci + 1) * xd.vol()];
        let gxc = &mut gx[ci * xd.vol()..(ci + 1) * xd.vol()];
        for co in 0..yd.c {
            let gyc = &gy[co * yd.vol()..(co + 1) * yd.vol()];
            let wbase = (ci * yd.c + co) * k3;
            for kd in 0..k {
                let (d0, d1) = conv_range(kd, g.padding, g.stride, yd.d, xd.d);
                for kh in 0..k {
                    let (h0, h1) = conv_range(kh, g.padding, g.stride, yd.h, xd.h);
                    for kw in 0..k {
                        let (w0, w1) = conv_range(kw, g.padding, g.stride, yd.w, xd.w);
                        let widx = wbase + (kd * k + kh) * k + kw;
                        let wv = w[widx];
                        let mut acc = 0.0;
                        for id in d0..d1 {
                            let od = id * g.stride + kd - g.padding;
                            for ih in h0..h1 {
                                let oh = ih * g.stride + kh - g.padding;
                                let xrow = (id * xd.h + ih) * xd.w;
                                let yrow = (od * yd.h + oh) * yd.w;
                                for iw in w0..w1 {
                                    let ow = iw * g.stride + kw - g.padding;
                                    let gv = gyc[yrow + ow];
                                    acc += gv * xc[xrow + iw];
                                    gxc[xrow + iw] += wv * gv;
                                }
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain nested-loop convolution with explicit bounds checks.
    fn naive_conv(x: &[f64], xd: Dims, w: &[f64], yd: Dims, g: Geometry) -> Vec<f64> {
        let k = g.kernel;
        let mut y = vec![0.0; yd.c * yd.d * yd.h * yd.w];
        for co in 0..yd.c {
            for od in 0..yd.d {
                for oh in 0..yd.h {
                    for ow in 0..yd.w {
                        let mut s = 0.0;
                        for ci in 0..xd.c {
                            for kd in 0..k {
                                for kh in 0..k {
                                    for kw in 0..k {
                                        let id = (od * g.stride + kd) as isize - g.padding as isize;
                                        let ih = (oh * g.stride + kh) as isize - g.padding as isize;
                                        let iw = (ow * g.stride + kw) as isize - g.padding as isize;
                                        if id < 0 || ih < 0 || iw < 0 {
                                            continue;
                                        }
                                        let (id, ih, iw) = (id as usize, ih as usize, iw as usize);
                                        if id >= xd.d || ih >= xd.h || iw >= xd.w {
                                            continue;
                                        }
                                        s += w[((co * xd.c + ci) * k * k + kd * k + kh) * k + kw]
                                            * x[((ci * xd.d + id) * xd.h + ih) * xd.w + iw];
                                    }
                                }
                            }
                        }
                        y[((co * yd.d + od) * yd.h + oh) * yd.w + ow] = s;
                    }
                }
            }
        }
        y
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn fast_conv_matches_naive() {
        for &(d, k, s, p) in &[(5, 3, 1, 1), (6, 3, 2, 1), (4, 2, 2, 0), (7, 4, 2, 1), (3, 1, 1, 0)] {
            let g = Geometry { kernel: k, stride: s, padding: p, output_padding: 0 };
            let xd = Dims { c: 2, d, h: d, w: d };
            let od = g.conv_out(d).unwrap();
            let yd = Dims { c: 3, d: od, h: od, w: od };
            let x = pseudo(2 * d * d * d, 1);
            let w = pseudo(3 * 2 * k * k * k, 2);
            let fast = conv3_forward(&x, xd, &w, &[0.0; 3], yd, g);
            let slow = naive_conv(&x, xd, &w, yd, g);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, tconv(y)> when tconv uses the same weights.
        let g = Geometry { kernel: 3, stride: 2, padding: 1, output_padding: 1 };
        let xd = Dims { c: 2, d: 6, h: 6, w: 6 };
        let od = g.conv_out(6).unwrap();
        let yd = Dims { c: 3, d: od, h: od, w: od };
        assert_eq!(g.tconv_out(od), Some(6));
        let x = pseudo(2 * 216, 3);
        let y = pseudo(3 * od * od * od, 4);
        let w_conv = pseudo(3 * 2 * 27, 5);
        // conv weight [co, ci] -> tconv weight [ci_t = co, co_t = ci]
        let conv = conv3_forward(&x, xd, &w_conv, &[0.0; 3], yd, g);
        let tconv = tconv3_forward(&y, yd, &w_conv, &[0.0; 2], xd, g);
        let lhs: f64 = conv.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&tconv).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }
}
