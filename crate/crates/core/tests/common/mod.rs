#![allow(dead_code, clippy::needless_range_loop)]

use emdm::autodiff::{ParamSet, Tensor};
use emdm::energy::{Architecture, EnergyModel, NoiseSchedule, ScheduleSpec};
use emdm::linalg::Matrix;
use emdm::rng;
use emdm::RealMatrix;
use rand::Rng;

pub fn rand_vec(seed: u64, n: usize) -> Vec<f64> {
    rng::normal_vec(&mut rng::stream(seed, &[0xfeed]), n)
}

pub fn rand_matrix(seed: u64, rows: usize, cols: usize) -> RealMatrix {
    Matrix::new(rows, cols, rand_vec(seed, rows * cols)).unwrap()
}

pub fn rand_spd(seed: u64, n: usize) -> RealMatrix {
    let b = rand_matrix(seed, n, n);
    b.matmul(&b.transpose()).unwrap().add_diag(n as f64 * 0.1)
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &RealMatrix, b: &[f64]) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = a.row(i).to_vec();
            r.push(b[i]);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

pub fn dense_inverse(a: &RealMatrix) -> RealMatrix {
    let n = a.rows();
    let mut out = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        for (i, v) in dense_solve(a, &e).into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

pub fn schedule(t_max: usize) -> NoiseSchedule {
    ScheduleSpec {
        t_max,
        ..ScheduleSpec::default()
    }
    .build()
    .unwrap()
}

/// Small network with every parameter, biases included, randomized so no
/// term of the graph is trivially zero.
pub fn tiny_model(n_r: usize, n_t: usize, width: usize, seed: u64) -> EnergyModel<f64> {
    let arch = Architecture::new(n_r, n_t, width);
    let mut model = EnergyModel::new(arch, ScheduleSpec::default().build().unwrap(), seed).unwrap();
    let mut r = rng::stream(seed, &[0xb1a5]);
    let mut params = model.params().clone();
    for (name, t) in params.iter_mut() {
        let scale = if name.ends_with("bias") { 0.1 } else { 0.3 };
        for v in t.data_mut() {
            *v = scale * (2.0 * r.random::<f64>() - 1.0);
        }
    }
    model.set_params(params).unwrap();
    model
}

/// The same network with the output layer zeroed, so `d(h, t) = 0`.
pub fn zero_output_model(n_r: usize, n_t: usize, width: usize, seed: u64) -> EnergyModel<f64> {
    let mut model = tiny_model(n_r, n_t, width, seed);
    let mut params = model.params().clone();
    for name in ["conv3.weight", "conv3.bias"] {
        params.get_mut(name).unwrap().data_mut().fill(0.0);
    }
    model.set_params(params).unwrap();
    model
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn conv(x: &[f64], ci: usize, h: usize, w: usize, k: &Tensor<f64>, bias: &[f64]) -> Vec<f64> {
    let (co, ks) = (k.shape()[0], k.shape()[2]);
    let p = (ks / 2) as isize;
    let mut out = vec![0.0; co * h * w];
    for o in 0..co {
        for r in 0..h as isize {
            for s in 0..w as isize {
                let mut acc = bias[o];
                for c in 0..ci {
                    for a in 0..ks as isize {
                        for b in 0..ks as isize {
                            let (rr, ss) = (r + a - p, s + b - p);
                            if rr < 0 || ss < 0 || rr >= h as isize || ss >= w as isize {
                                continue;
                            }
                            let kv = k.data()[((o * ci + c) * ks + a as usize) * ks + b as usize];
                            acc += kv * x[(c * h + rr as usize) * w + ss as usize];
                        }
                    }
                }
                out[(o * h + r as usize) * w + s as usize] = acc;
            }
        }
    }
    out
}

/// Straight-line evaluation of the denoiser with no graph machinery.
pub fn denoise_oracle(
    arch: &Architecture,
    p: &ParamSet<f64>,
    h: &[f64],
    t: usize,
    t_max: usize,
) -> Vec<f64> {
    let tau = t as f64 / t_max as f64;
    let freqs = arch.embed_freqs();
    let mut emb: Vec<f64> = freqs.iter().map(|w| (tau * w).sin()).collect();
    emb.extend(freqs.iter().map(|w| (tau * w).cos()));
    let tw = p.get("time.weight").unwrap();
    let tb = p.get("time.bias").unwrap().data();
    let e = emb.len();
    let temb: Vec<f64> = (0..arch.width)
        .map(|i| silu((0..e).map(|j| tw.data()[i * e + j] * emb[j]).sum::<f64>() + tb[i]))
        .collect();
    let (nt, nr, w) = (arch.n_t, arch.n_r, arch.width);
    let get = |n: &str| p.get(n).unwrap();
    let mut a1 = conv(h, 2, nt, nr, get("conv1.weight"), get("conv1.bias").data());
    for c in 0..w {
        for v in &mut a1[c * nt * nr..(c + 1) * nt * nr] {
            *v = silu(*v + temb[c]);
        }
    }
    let mut a2 = conv(
        &a1,
        w,
        nt,
        nr,
        get("conv2.weight"),
        get("conv2.bias").data(),
    );
    a2.iter_mut().for_each(|v| *v = silu(*v));
    conv(
        &a2,
        w,
        nt,
        nr,
        get("conv3.weight"),
        get("conv3.bias").data(),
    )
}

pub fn energy_oracle(model: &EnergyModel<f64>, h: &[f64], t: usize) -> f64 {
    let d = denoise_oracle(model.arch(), model.params(), h, t, model.schedule.t_max());
    let r: f64 = h.iter().zip(&d).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * model.arch().energy_sign.factor() * r
}

/// Central difference of `f` along coordinate `i`.
pub fn fd_coord(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, step: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += step;
    xm[i] -= step;
    (f(&xp) - f(&xm)) / (2.0 * step)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Smooth covariance `K_ij = ρ^|i-j|` of size `n`.
pub fn ar1_cov(n: usize, rho: f64) -> RealMatrix {
    Matrix::from_fn(n, n, |i, j| rho.powi((i as i32 - j as i32).abs()))
}
