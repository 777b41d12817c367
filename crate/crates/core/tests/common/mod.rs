//! Independent nested-loop references for the layer kernels, in f64.
#![allow(dead_code)]

use hsbit::numerics::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, rng)
}

/// Values with pairwise gaps well above any finite-difference step.
pub fn distinct_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut values: Vec<f32> = (0..n).map(|i| (i as f32 + 0.5) * 0.05 - n as f32 * 0.025).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        values.swap(i, j);
    }
    Tensor::new(shape, values).unwrap()
}

pub fn conv2d_ref(x: &Tensor, k: &Tensor, b: &Tensor, stride: usize, pad: usize) -> (Vec<usize>, Vec<f64>) {
    let (n, c, h, w) = x.dims4().unwrap();
    let (f, _, kh, kw) = k.dims4().unwrap();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let xv = |bi: usize, ci: usize, y: isize, xx: isize| -> f64 {
        if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
            0.0
        } else {
            x.data()[((bi * c + ci) * h + y as usize) * w + xx as usize] as f64
        }
    };
    let mut out = vec![0.0; n * f * oh * ow];
    for bi in 0..n {
        for fi in 0..f {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[fi] as f64;
                    for ci in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                acc += xv(bi, ci, iy, ix) * k.data()[((fi * c + ci) * kh + ky) * kw + kx] as f64;
                            }
                        }
                    }
                    out[((bi * f + fi) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (vec![n, f, oh, ow], out)
}

/// Transposed convolution as an explicit scatter of every input pixel.
pub fn conv_transpose2d_ref(x: &Tensor, k: &Tensor, b: &Tensor, stride: usize, pad: usize) -> (Vec<usize>, Vec<f64>) {
    let (n, cin, h, w) = x.dims4().unwrap();
    let (_, cout, kh, kw) = k.dims4().unwrap();
    let oh = (h - 1) * stride + kh - 2 * pad;
    let ow = (w - 1) * stride + kw - 2 * pad;
    let mut out = vec![0.0; n * cout * oh * ow];
    for bi in 0..n {
        for co in 0..cout {
            for i in 0..oh * ow {
                out[(bi * cout + co) * oh * ow + i] = b.data()[co] as f64;
            }
        }
        for ci in 0..cin {
            for iy in 0..h {
                for ix in 0..w {
                    let v = x.data()[((bi * cin + ci) * h + iy) * w + ix] as f64;
                    for co in 0..cout {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let oy = (iy * stride + ky) as isize - pad as isize;
                                let ox = (ix * stride + kx) as isize - pad as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                let kv = k.data()[((ci * cout + co) * kh + ky) * kw + kx] as f64;
                                out[((bi * cout + co) * oh + oy as usize) * ow + ox as usize] += v * kv;
                            }
                        }
                    }
                }
            }
        }
    }
    (vec![n, cout, oh, ow], out)
}

pub fn maxpool_ref(x: &Tensor, window: usize, stride: usize) -> (Vec<usize>, Vec<f32>) {
    let (n, c, h, w) = x.dims4().unwrap();
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let mut out = Vec::new();
    for p in 0..n * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f32::NEG_INFINITY;
                for dy in 0..window {
                    for dx in 0..window {
                        m = m.max(x.data()[p * h * w + (oy * stride + dy) * w + ox * stride + dx]);
                    }
                }
                out.push(m);
            }
        }
    }
    (vec![n, c, oh, ow], out)
}

/// tanh from a truncated exponential series, no libm involved.
pub fn tanh_series(x: f64) -> f64 {
    let exp = |z: f64| {
        let mut term = 1.0;
        let mut sum = 1.0;
        for i in 1..60 {
            term *= z / i as f64;
            sum += term;
        }
        sum
    };
    let e2 = exp(2.0 * x);
    (e2 - 1.0) / (e2 + 1.0)
}
