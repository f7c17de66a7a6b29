//! Numeric forward kernels behind each [`super::Op`].

use super::tensor::Tensor;
use crate::Scalar;

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = ad[i * k + p];
            for (o, &y) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                *o = *o + x * y;
            }
        }
    }
    Tensor::new(&[m, n], out).expect("matmul shape")
}

pub(crate) fn transpose<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let d = a.data();
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = d[i * n + j];
        }
    }
    Tensor::new(&[n, m], out).expect("transpose shape")
}

/// `y[o, h, w] = Σ k[o, c, a, b] · x[c, h + a - p, w + b - p]`, zero outside the field.
pub(crate) fn conv2d<T: Scalar>(x: &Tensor<T>, k: &Tensor<T>) -> Tensor<T> {
    let (ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, ks) = (k.shape()[0], k.shape()[2]);
    let p = ks / 2;
    let (xd, kd) = (x.data(), k.data());
    let mut out = vec![T::zero(); co * h * w];
    for o in 0..co {
        let plane = &mut out[o * h * w..(o + 1) * h * w];
        for c in 0..ci {
            let xin = &xd[c * h * w..(c + 1) * h * w];
            for a in 0..ks {
                for b in 0..ks {
                    let kv = kd[((o * ci + c) * ks + a) * ks + b];
                    if kv == T::zero() {
                        continue;
                    }
                    // rows hh with 0 <= hh + a - p < h
                    let h_lo = p.saturating_sub(a);
                    let h_hi = (h + p).saturating_sub(a).min(h);
                    let w_lo = p.saturating_sub(b);
                    let w_hi = (w + p).saturating_sub(b).min(w);
                    for hh in h_lo..h_hi {
                        let src = (hh + a - p) * w;
                        let dst = &mut plane[hh * w..(hh + 1) * w];
                        for ww in w_lo..w_hi {
                            dst[ww] = dst[ww] + kv * xin[src + ww + b - p];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[co, h, w], out).expect("conv2d shape")
}

/// `g[o, c, a, b] = Σ_{h,w} dy[o, h, w] · x[c, h + a - p, w + b - p]`.
pub(crate) fn conv2d_kernel_grad<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>, ks: usize) -> Tensor<T> {
    let (ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let co = dy.shape()[0];
    let p = ks / 2;
    let (xd, gd) = (x.data(), dy.data());
    let mut out = vec![T::zero(); co * ci * ks * ks];
    for o in 0..co {
        let gplane = &gd[o * h * w..(o + 1) * h * w];
        for c in 0..ci {
            let xin = &xd[c * h * w..(c + 1) * h * w];
            for a in 0..ks {
                for b in 0..ks {
                    let h_lo = p.saturating_sub(a);
                    let h_hi = (h + p).saturating_sub(a).min(h);
                    let w_lo = p.saturating_sub(b);
                    let w_hi = (w + p).saturating_sub(b).min(w);
                    let mut acc = T::zero();
                    for hh in h_lo..h_hi {
                        let src = (hh + a - p) * w;
                        for ww in w_lo..w_hi {
                            acc = acc + gplane[hh * w + ww] * xin[src + ww + b - p];
                        }
                    }
                    out[((o * ci + c) * ks + a) * ks + b] = acc;
                }
            }
        }
    }
    Tensor::new(&[co, ci, ks, ks], out).expect("kernel grad shape")
}

pub(crate) fn kernel_flip<T: Scalar>(k: &Tensor<T>) -> Tensor<T> {
    let (co, ci, ks) = (k.shape()[0], k.shape()[1], k.shape()[2]);
    let kd = k.data();
    let mut out = vec![T::zero(); kd.len()];
    for o in 0..co {
        for c in 0..ci {
            for a in 0..ks {
                for b in 0..ks {
                    out[((c * co + o) * ks + (ks - 1 - a)) * ks + (ks - 1 - b)] =
                        kd[((o * ci + c) * ks + a) * ks + b];
                }
            }
        }
    }
    Tensor::new(&[ci, co, ks, ks], out).expect("flip shape")
}

pub(crate) fn bias_add<T: Scalar>(x: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let c = x.shape()[0];
    let inner = x.len() / c.max(1);
    let mut out = x.clone();
    for (i, chunk) in out.data_mut().chunks_mut(inner.max(1)).enumerate().take(c) {
        let bv = b.data()[i];
        for v in chunk {
            *v = *v + bv;
        }
    }
    out
}

pub(crate) fn channel_sum<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let c = x.shape()[0];
    let inner = x.len() / c.max(1);
    let data = (0..c)
        .map(|i| x.data()[i * inner..(i + 1) * inner].iter().copied().sum())
        .collect();
    Tensor::vector(data)
}

pub(crate) fn channel_broadcast<T: Scalar>(b: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let c = shape[0];
    let inner: usize = shape[1..].iter().product();
    let mut data = Vec::with_capacity(c * inner);
    for &v in b.data() {
        data.extend(std::iter::repeat_n(v, inner));
    }
    Tensor::new(shape, data).expect("broadcast shape")
}

pub(crate) fn sin_cos_embed<T: Scalar>(t: T, freqs: &[T], quarter_turns: u8) -> Tensor<T> {
    let shift = T::of(std::f64::consts::FRAC_PI_2 * quarter_turns as f64);
    let mut data = Vec::with_capacity(2 * freqs.len());
    data.extend(freqs.iter().map(|&w| (t * w + shift).sin()));
    data.extend(freqs.iter().map(|&w| (t * w + shift).cos()));
    Tensor::vector(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_naive(x: &Tensor<f64>, k: &Tensor<f64>) -> Vec<f64> {
        let (ci, h, w) = (x.shape()[0], x.shape()[1] as isize, x.shape()[2] as isize);
        let (co, ks) = (k.shape()[0], k.shape()[2] as isize);
        let p = ks / 2;
        let mut out = vec![0.0; co * (h * w) as usize];
        for o in 0..co {
            for r in 0..h {
                for s in 0..w {
                    let mut acc = 0.0;
                    for c in 0..ci {
                        for a in 0..ks {
                            for b in 0..ks {
                                let (rr, ss) = (r + a - p, s + b - p);
                                if rr < 0 || ss < 0 || rr >= h || ss >= w {
                                    continue;
                                }
                                let kv = k.data()[((o * ci + c) * ks as usize + a as usize)
                                    * ks as usize
                                    + b as usize];
                                acc += kv * x.data()[(c as isize * h * w + rr * w + ss) as usize];
                            }
                        }
                    }
                    out[(o as isize * h * w + r * w + s) as usize] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_loop() {
        let x = Tensor::new(
            &[2, 3, 5],
            (0..30).map(|i| (i as f64 * 0.37).sin()).collect(),
        )
        .unwrap();
        let k = Tensor::new(
            &[3, 2, 3, 3],
            (0..54).map(|i| (i as f64 * 0.11).cos()).collect(),
        )
        .unwrap();
        let got = conv2d(&x, &k);
        let want = conv_naive(&x, &k);
        for (a, b) in got.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn sigmoid_is_stable_in_both_tails() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(0.0f64), 0.5);
    }
}
