//! Per-layer forward and backward kernels.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::linalg::{gemm, gemm_strided};
use super::{Activation, L1Target, LayerSpec, Network, NetworkSpec, NnError, Shape, TensorBuf};

pub(crate) const BN_EPS: f64 = 1e-3;
pub(crate) const BN_MOMENTUM: f64 = 0.99;

pub(crate) type Params = Vec<Vec<Vec<f64>>>;

pub(crate) fn init_params(spec: &NetworkSpec, shapes: &[Shape], seed: u64) -> (Params, Params) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(spec.layers.len());
    let mut running = Vec::with_capacity(spec.layers.len());
    for (i, l) in spec.layers.iter().enumerate() {
        let (inp, out) = (shapes[i], shapes[i + 1]);
        let (p, r) = match *l {
            LayerSpec::Conv1D { filters, kernel, activation } => {
                let fan_in = kernel * inp.channels;
                let fan_out = kernel * filters;
                let w = init_weights(&mut rng, fan_in * filters, fan_in, fan_out, activation);
                (vec![w, vec![0.0; filters]], vec![])
            }
            LayerSpec::Dense { units, activation, .. } => {
                let fan_in = inp.size();
                let w = init_weights(&mut rng, fan_in * units, fan_in, units, activation);
                (vec![w, vec![0.0; units]], vec![])
            }
            LayerSpec::BatchNorm1D => {
                let c = out.channels;
                (vec![vec![1.0; c], vec![0.0; c]], vec![vec![0.0; c], vec![1.0; c]])
            }
            _ => (vec![], vec![]),
        };
        params.push(p);
        running.push(r);
    }
    (params, running)
}

fn init_weights(rng: &mut ChaCha8Rng, n: usize, fan_in: usize, fan_out: usize, act: Activation) -> Vec<f64> {
    match act {
        Activation::Relu => {
            let d = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            (0..n).map(|_| d.sample(rng)).collect()
        }
        _ => {
            let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let d = Uniform::new_inclusive(-lim, lim).expect("finite bounds");
            (0..n).map(|_| d.sample(rng)).collect()
        }
    }
}

pub(crate) enum Mode<'a> {
    Infer,
    Train {
        rng: &'a mut ChaCha8Rng,
        /// Collects the piecewise-linear branch pattern (ReLU masks, pool
        /// argmaxes, L1 signs) for gradient checking.
        probe: Option<&'a mut DefaultHasher>,
    },
}

impl Mode<'_> {
    fn training(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }

    fn probe(&mut self) -> Option<&mut DefaultHasher> {
        match self {
            Mode::Train { probe: Some(h), .. } => Some(&mut **h),
            _ => None,
        }
    }
}

pub(crate) enum Cache {
    None,
    Conv { xp: Vec<f64>, y: Vec<f64> },
    Pool { argmax: Vec<usize> },
    Dense { x: Vec<f64>, y: Vec<f64> },
    Norm { xhat: Vec<f64>, invstd: Vec<f64>, mean: Vec<f64>, var: Vec<f64> },
    Drop { mask: Vec<f64> },
    Act { y: Vec<f64> },
}

pub(crate) struct Fwd {
    pub y: Vec<f64>,
    pub cache: Cache,
    pub penalty: f64,
}

fn activate(a: Activation, z: &mut [f64]) {
    match a {
        Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
        Activation::Linear => {}
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `dz = dy · act'(z)` written in terms of the activation output `y`.
fn activate_backward(a: Activation, y: &[f64], dy: &mut [f64]) {
    match a {
        Activation::Relu => dy.iter_mut().zip(y).for_each(|(d, &v)| {
            if v <= 0.0 {
                *d = 0.0
            }
        }),
        Activation::Sigmoid => dy.iter_mut().zip(y).for_each(|(d, &v)| *d *= v * (1.0 - v)),
        Activation::Linear => {}
    }
}

fn probe_relu(mode: &mut Mode<'_>, a: Activation, z: &[f64]) {
    if a == Activation::Relu {
        if let Some(h) = mode.probe() {
            z.iter().for_each(|v| (*v > 0.0).hash(h));
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn forward(net: &Network, li: usize, x: &[f64], batch: usize, mode: &mut Mode<'_>) -> Fwd {
    let spec = &net.spec().layers[li];
    let inp = net.shapes()[li];
    let out = net.shapes()[li + 1];
    let p = &net.params[li];
    match *spec {
        LayerSpec::Conv1D { filters, kernel, activation } => {
            let (l, c, f) = (inp.len, inp.channels, filters);
            let pad = kernel / 2;
            let plen = (l + kernel - 1) * c;
            let mut xp = vec![0.0; batch * plen];
            for b in 0..batch {
                xp[b * plen + pad * c..b * plen + (pad + l) * c].copy_from_slice(&x[b * l * c..(b + 1) * l * c]);
            }
            let mut y = vec![0.0; batch * l * f];
            for b in 0..batch {
                let ys = &mut y[b * l * f..(b + 1) * l * f];
                gemm_strided(l, kernel * c, f, &xp[b * plen..(b + 1) * plen], c, 1, &p[0], f, 1, 0.0, ys);
                for row in ys.chunks_mut(f) {
                    row.iter_mut().zip(&p[1]).for_each(|(v, bias)| *v += bias);
                }
            }
            probe_relu(mode, activation, &y);
            activate(activation, &mut y);
            let cache = if mode.training() { Cache::Conv { xp, y: y.clone() } } else { Cache::None };
            Fwd { y, cache, penalty: 0.0 }
        }
        LayerSpec::MaxPool1D { size } => {
            let c = inp.channels;
            let lo = out.len;
            let mut y = vec![0.0; batch * lo * c];
            let mut argmax = vec![0usize; y.len()];
            for b in 0..batch {
                for t in 0..lo {
                    for ch in 0..c {
                        let base = (b * inp.len + t * size) * c + ch;
                        let mut best = base;
                        for s in 1..size {
                            let i = base + s * c;
                            if x[i] > x[best] {
                                best = i;
                            }
                        }
                        let o = (b * lo + t) * c + ch;
                        y[o] = x[best];
                        argmax[o] = best;
                    }
                }
            }
            if let Some(h) = mode.probe() {
                argmax.hash(h);
            }
            let cache = if mode.training() { Cache::Pool { argmax } } else { Cache::None };
            Fwd { y, cache, penalty: 0.0 }
        }
        LayerSpec::Upsample1D { factor } => {
            let c = inp.channels;
            let mut y = Vec::with_capacity(x.len() * factor);
            for row in x.chunks(c) {
                for _ in 0..factor {
                    y.extend_from_slice(row);
                }
            }
            Fwd { y, cache: Cache::None, penalty: 0.0 }
        }
        LayerSpec::Dense { units, activation, l1, l1_target } => {
            let n_in = inp.size();
            let mut y = vec![0.0; batch * units];
            gemm(batch, n_in, units, x, false, &p[0], false, 0.0, &mut y);
            for row in y.chunks_mut(units) {
                row.iter_mut().zip(&p[1]).for_each(|(v, bias)| *v += bias);
            }
            probe_relu(mode, activation, &y);
            activate(activation, &mut y);
            let penalty = if l1 > 0.0 {
                match l1_target {
                    L1Target::Activity => {
                        if let Some(h) = mode.probe() {
                            y.iter().for_each(|v| (sign(*v) as i8).hash(h));
                        }
                        l1 * y.iter().map(|v| v.abs()).sum::<f64>() / batch as f64
                    }
                    L1Target::Weights => {
                        if let Some(h) = mode.probe() {
                            p[0].iter().for_each(|v| (sign(*v) as i8).hash(h));
                        }
                        l1 * p[0].iter().map(|v| v.abs()).sum::<f64>()
                    }
                }
            } else {
                0.0
            };
            let cache = if mode.training() { Cache::Dense { x: x.to_vec(), y: y.clone() } } else { Cache::None };
            Fwd { y, cache, penalty }
        }
        LayerSpec::BatchNorm1D => {
            let c = inp.channels;
            let (gamma, beta) = (&p[0], &p[1]);
            if mode.training() {
                let n = (x.len() / c) as f64;
                let mut mean = vec![0.0; c];
                for row in x.chunks(c) {
                    row.iter().zip(mean.iter_mut()).for_each(|(v, m)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; c];
                for row in x.chunks(c) {
                    row.iter().zip(&mean).zip(var.iter_mut()).for_each(|((v, m), s)| *s += (v - m) * (v - m));
                }
                var.iter_mut().for_each(|s| *s /= n);
                let invstd: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let mut xhat = x.to_vec();
                let mut y = vec![0.0; x.len()];
                for (xr, yr) in xhat.chunks_mut(c).zip(y.chunks_mut(c)) {
                    for ch in 0..c {
                        xr[ch] = (xr[ch] - mean[ch]) * invstd[ch];
                        yr[ch] = gamma[ch] * xr[ch] + beta[ch];
                    }
                }
                Fwd { y, cache: Cache::Norm { xhat, invstd, mean, var }, penalty: 0.0 }
            } else {
                let (rm, rv) = (&net.running[li][0], &net.running[li][1]);
                let scale: Vec<f64> = (0..c).map(|ch| gamma[ch] / (rv[ch] + BN_EPS).sqrt()).collect();
                let mut y = x.to_vec();
                for row in y.chunks_mut(c) {
                    for ch in 0..c {
                        row[ch] = (row[ch] - rm[ch]) * scale[ch] + beta[ch];
                    }
                }
                Fwd { y, cache: Cache::None, penalty: 0.0 }
            }
        }
        LayerSpec::Dropout { rate } => match mode {
            Mode::Train { rng, .. } if rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..x.len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
                let y = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
                Fwd { y, cache: Cache::Drop { mask }, penalty: 0.0 }
            }
            _ => Fwd { y: x.to_vec(), cache: Cache::None, penalty: 0.0 },
        },
        LayerSpec::Activation { activation } => {
            let mut y = x.to_vec();
            probe_relu(mode, activation, &y);
            activate(activation, &mut y);
            let cache = if mode.training() { Cache::Act { y: y.clone() } } else { Cache::None };
            Fwd { y, cache, penalty: 0.0 }
        }
    }
}

/// Accumulates parameter gradients into `grads` and returns the input
/// gradient when `need_dx`.
pub(crate) fn backward(
    net: &Network,
    li: usize,
    cache: &Cache,
    mut dy: Vec<f64>,
    batch: usize,
    grads: &mut [Vec<f64>],
    need_dx: bool,
) -> Option<Vec<f64>> {
    let spec = &net.spec().layers[li];
    let inp = net.shapes()[li];
    let p = &net.params[li];
    match (spec, cache) {
        (&LayerSpec::Conv1D { filters, kernel, activation }, Cache::Conv { xp, y }) => {
            let (l, c, f) = (inp.len, inp.channels, filters);
            let plen = (l + kernel - 1) * c;
            activate_backward(activation, y, &mut dy);
            let (gw, rest) = grads.split_at_mut(1);
            let (gw, gb) = (&mut gw[0], &mut rest[0]);
            for row in dy.chunks(f) {
                gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
            }
            for b in 0..batch {
                let xs = &xp[b * plen..(b + 1) * plen];
                let dz = &dy[b * l * f..(b + 1) * l * f];
                gemm_strided(kernel * c, l, f, xs, 1, c, dz, f, 1, 1.0, gw);
            }
            if !need_dx {
                return None;
            }
            // dx is a correlation of dz with the kernel flipped in time and
            // transposed in channels
            let mut wf = vec![0.0; kernel * f * c];
            for j in 0..kernel {
                let k = kernel - 1 - j;
                for ff in 0..f {
                    for ch in 0..c {
                        wf[(j * f + ff) * c + ch] = p[0][(k * c + ch) * f + ff];
                    }
                }
            }
            let pad = kernel / 2;
            let front = kernel - 1 - pad;
            let dplen = (l + kernel - 1) * f;
            let mut dzp = vec![0.0; dplen];
            let mut dx = vec![0.0; batch * l * c];
            for b in 0..batch {
                dzp[front * f..(front + l) * f].copy_from_slice(&dy[b * l * f..(b + 1) * l * f]);
                gemm_strided(l, kernel * f, c, &dzp, f, 1, &wf, c, 1, 0.0, &mut dx[b * l * c..(b + 1) * l * c]);
            }
            Some(dx)
        }
        (LayerSpec::MaxPool1D { .. }, Cache::Pool { argmax }) => {
            if !need_dx {
                return None;
            }
            let mut dx = vec![0.0; batch * inp.size()];
            argmax.iter().zip(&dy).for_each(|(&i, d)| dx[i] += d);
            Some(dx)
        }
        (&LayerSpec::Upsample1D { factor }, _) => {
            if !need_dx {
                return None;
            }
            let c = inp.channels;
            let mut dx = vec![0.0; batch * inp.size()];
            for (o, row) in dx.chunks_mut(c).enumerate() {
                for r in 0..factor {
                    let src = &dy[(o * factor + r) * c..(o * factor + r + 1) * c];
                    row.iter_mut().zip(src).for_each(|(a, b)| *a += b);
                }
            }
            Some(dx)
        }
        (&LayerSpec::Dense { units, activation, l1, l1_target }, Cache::Dense { x, y }) => {
            let n_in = inp.size();
            if l1 > 0.0 && l1_target == L1Target::Activity {
                let s = l1 / batch as f64;
                dy.iter_mut().zip(y).for_each(|(d, v)| *d += s * sign(*v));
            }
            activate_backward(activation, y, &mut dy);
            let (gw, rest) = grads.split_at_mut(1);
            let (gw, gb) = (&mut gw[0], &mut rest[0]);
            gemm(n_in, batch, units, x, true, &dy, false, 1.0, gw);
            if l1 > 0.0 && l1_target == L1Target::Weights {
                gw.iter_mut().zip(&p[0]).for_each(|(g, w)| *g += l1 * sign(*w));
            }
            for row in dy.chunks(units) {
                gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
            }
            if !need_dx {
                return None;
            }
            let mut dx = vec![0.0; batch * n_in];
            gemm(batch, units, n_in, &dy, false, &p[0], true, 0.0, &mut dx);
            Some(dx)
        }
        (LayerSpec::BatchNorm1D, Cache::Norm { xhat, invstd, .. }) => {
            let c = inp.channels;
            let n = (dy.len() / c) as f64;
            let gamma = &p[0];
            let mut sum_d = vec![0.0; c];
            let mut sum_dx = vec![0.0; c];
            for (dr, xr) in dy.chunks(c).zip(xhat.chunks(c)) {
                for ch in 0..c {
                    sum_d[ch] += dr[ch];
                    sum_dx[ch] += dr[ch] * xr[ch];
                }
            }
            for ch in 0..c {
                grads[0][ch] += sum_dx[ch];
                grads[1][ch] += sum_d[ch];
            }
            if !need_dx {
                return None;
            }
            let mut dx = dy;
            for (dr, xr) in dx.chunks_mut(c).zip(xhat.chunks(c)) {
                for ch in 0..c {
                    let g = gamma[ch] * invstd[ch] / n;
                    dr[ch] = g * (n * dr[ch] - sum_d[ch] - xr[ch] * sum_dx[ch]);
                }
            }
            Some(dx)
        }
        (LayerSpec::Dropout { .. }, Cache::Drop { mask }) => {
            dy.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
            need_dx.then_some(dy)
        }
        (LayerSpec::Dropout { .. }, Cache::None) => need_dx.then_some(dy),
        (&LayerSpec::Activation { activation }, Cache::Act { y }) => {
            activate_backward(activation, y, &mut dy);
            need_dx.then_some(dy)
        }
        _ => unreachable!("cache does not match layer {li}"),
    }
}

/// Outcome of a finite-difference check on one network and batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates skipped because the ±ε step crossed a ReLU, pooling or
    /// L1 kink.
    pub skipped_kinks: usize,
    /// Location of the worst coordinate, e.g. `"layer 2 param 0[17]"`.
    pub worst: String,
}

/// Compares analytic gradients of `Σ r·y + penalties` (with a seeded
/// random projection `r`) against central differences, over every
/// parameter and input coordinate. Training mode, fixed dropout mask.
///
/// Relative error is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn check_gradients(net: &Network, x: &TensorBuf, eps: f64, seed: u64) -> Result<GradCheck, NnError> {
    if x.shape != net.spec().input_shape {
        return Err(NnError::Shape(format!("input {} but network expects {}", x.shape, net.spec().input_shape)));
    }
    let out_size = net.spec().output_shape()?.size() * x.batch;
    let mut prng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let proj: Vec<f64> = (0..out_size).map(|_| prng.random_range(-1.0..1.0)).collect();

    let eval = |net: &Network, input: &[f64]| -> (f64, u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = DefaultHasher::new();
        let mut cur = input.to_vec();
        let mut pen = 0.0;
        for li in 0..net.spec().layers.len() {
            let mut mode = Mode::Train { rng: &mut rng, probe: Some(&mut h) };
            let f = forward(net, li, &cur, x.batch, &mut mode);
            pen += f.penalty;
            cur = f.y;
        }
        (cur.iter().zip(&proj).map(|(a, b)| a * b).sum::<f64>() + pen, h.finish())
    };

    // analytic
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut caches = Vec::new();
    let mut cur = x.data.clone();
    for li in 0..net.spec().layers.len() {
        let f = forward(net, li, &cur, x.batch, &mut Mode::Train { rng: &mut rng, probe: None });
        caches.push(f.cache);
        cur = f.y;
    }
    let mut grads: Params = net.params.iter().map(|l| l.iter().map(|b| vec![0.0; b.len()]).collect()).collect();
    let mut d = proj.clone();
    for li in (0..net.spec().layers.len()).rev() {
        d = backward(net, li, &caches[li], d, x.batch, &mut grads[li], true).expect("dx requested");
    }
    let dx = d;

    let (_, base_pattern) = eval(net, &x.data);
    let mut out = GradCheck::default();
    let record = |a: f64, n: f64, where_: String, out: &mut GradCheck| {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        out.checked += 1;
        if rel > out.max_rel_err {
            out.max_rel_err = rel;
            out.worst = where_;
        }
    };

    let mut probe = net.clone();
    for li in 0..net.params.len() {
        for bi in 0..net.params[li].len() {
            for k in 0..net.params[li][bi].len() {
                let orig = probe.params[li][bi][k];
                probe.params[li][bi][k] = orig + eps;
                let (fp, pp) = eval(&probe, &x.data);
                probe.params[li][bi][k] = orig - eps;
                let (fm, pm) = eval(&probe, &x.data);
                probe.params[li][bi][k] = orig;
                if pp != base_pattern || pm != base_pattern {
                    out.skipped_kinks += 1;
                    continue;
                }
                record(grads[li][bi][k], (fp - fm) / (2.0 * eps), format!("layer {li} param {bi}[{k}]"), &mut out);
            }
        }
    }
    let mut xi = x.data.clone();
    for k in 0..xi.len() {
        let orig = xi[k];
        xi[k] = orig + eps;
        let (fp, pp) = eval(net, &xi);
        xi[k] = orig - eps;
        let (fm, pm) = eval(net, &xi);
        xi[k] = orig;
        if pp != base_pattern || pm != base_pattern {
            out.skipped_kinks += 1;
            continue;
        }
        record(dx[k], (fp - fm) / (2.0 * eps), format!("input[{k}]"), &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::TensorBuf;

    fn net(input: Shape, layers: Vec<LayerSpec>, seed: u64) -> Network {
        Network::new(NetworkSpec { input_shape: input, layers, latent_tap: None }, seed).unwrap()
    }

    fn set_conv(n: &mut Network, w: Vec<f64>) {
        n.params[0][0] = w;
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut n = net(Shape::new(4, 1), vec![LayerSpec::Conv1D { filters: 1, kernel: 1, activation: Activation::Linear }], 0);
        set_conv(&mut n, vec![1.0]);
        let x = TensorBuf::new(Shape::new(4, 1), 1, vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        assert_eq!(n.predict(&x).unwrap().data, x.data);
    }

    #[test]
    fn kernel_100_shifts_right_under_same_padding() {
        // out[t] = x[t-1] for kernel [1, 0, 0] with left pad 1
        let mut n = net(Shape::new(4, 1), vec![LayerSpec::Conv1D { filters: 1, kernel: 3, activation: Activation::Linear }], 0);
        set_conv(&mut n, vec![1.0, 0.0, 0.0]);
        let x = TensorBuf::new(Shape::new(4, 1), 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(n.predict(&x).unwrap().data, vec![0.0, 1.0, 2.0, 3.0]);
        set_conv(&mut n, vec![0.0, 0.0, 1.0]);
        assert_eq!(n.predict(&x).unwrap().data, vec![2.0, 3.0, 4.0, 0.0]);
    }

    #[test]
    fn even_kernel_pads_more_on_the_left() {
        let mut n = net(Shape::new(4, 1), vec![LayerSpec::Conv1D { filters: 1, kernel: 2, activation: Activation::Linear }], 0);
        set_conv(&mut n, vec![1.0, 0.0]);
        let x = TensorBuf::new(Shape::new(4, 1), 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(n.predict(&x).unwrap().data, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn pool_and_upsample() {
        let n = net(Shape::new(4, 1), vec![LayerSpec::MaxPool1D { size: 2 }], 0);
        let x = TensorBuf::new(Shape::new(4, 1), 1, vec![1.0, 3.0, 2.0, 8.0]).unwrap();
        assert_eq!(n.predict(&x).unwrap().data, vec![3.0, 8.0]);
        let c = TensorBuf::new(Shape::new(4, 1), 1, vec![0.7; 4]).unwrap();
        assert_eq!(n.predict(&c).unwrap().data, vec![0.7; 2]);

        let u = net(Shape::new(2, 1), vec![LayerSpec::Upsample1D { factor: 2 }], 0);
        let x = TensorBuf::new(Shape::new(2, 1), 1, vec![5.0, -1.0]).unwrap();
        assert_eq!(u.predict(&x).unwrap().data, vec![5.0, 5.0, -1.0, -1.0]);

        let both = net(Shape::new(3, 2), vec![LayerSpec::Upsample1D { factor: 2 }, LayerSpec::MaxPool1D { size: 2 }], 0);
        let x = TensorBuf::new(Shape::new(3, 2), 1, vec![1.0, 2.0, -3.0, 4.0, 0.5, 6.0]).unwrap();
        assert_eq!(both.predict(&x).unwrap().data, x.data);
    }

    #[test]
    fn pool_gradient_goes_to_first_max_on_ties() {
        let n = net(Shape::new(4, 1), vec![LayerSpec::MaxPool1D { size: 2 }], 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = [2.0, 2.0, 1.0, 5.0];
        let f = forward(&n, 0, &x, 1, &mut Mode::Train { rng: &mut rng, probe: None });
        let dx = backward(&n, 0, &f.cache, vec![1.0, 1.0], 1, &mut [], true).unwrap();
        assert_eq!(dx, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn batchnorm_training_output_is_standardized() {
        let n = net(Shape::new(50, 3), vec![LayerSpec::BatchNorm1D], 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..4 * 150).map(|i| (i % 3) as f64 * 10.0 + rng.random::<f64>() * (1 + i % 3) as f64).collect();
        let f = forward(&n, 0, &x, 4, &mut Mode::Train { rng: &mut rng, probe: None });
        for ch in 0..3 {
            let v: Vec<f64> = f.y.iter().skip(ch).step_by(3).copied().collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64;
            assert!(m.abs() < 1e-12);
            // eps = 1e-3 in the denominator keeps the variance slightly under 1
            assert!((var - 1.0).abs() < 0.05, "{var}");
        }
    }

    #[test]
    fn dropout_zero_rate_is_identity_and_inference_is_identity() {
        let n = net(Shape::new(6, 1), vec![LayerSpec::Dropout { rate: 0.0 }], 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
        assert_eq!(forward(&n, 0, &x, 1, &mut Mode::Train { rng: &mut rng, probe: None }).y, x);
        let d = net(Shape::new(6, 1), vec![LayerSpec::Dropout { rate: 0.5 }], 0);
        assert_eq!(d.predict(&TensorBuf::new(Shape::new(6, 1), 1, x.clone()).unwrap()).unwrap().data, x);
        let y = forward(&d, 0, &x, 1, &mut Mode::Train { rng: &mut rng, probe: None }).y;
        assert!(y.iter().zip(&x).all(|(a, b)| *a == 0.0 || *a == 2.0 * b));
    }

    #[test]
    fn small_chain_gradients_match_finite_differences() {
        let spec = vec![
            LayerSpec::Conv1D { filters: 3, kernel: 4, activation: Activation::Sigmoid },
            LayerSpec::BatchNorm1D,
            LayerSpec::MaxPool1D { size: 2 },
            LayerSpec::Conv1D { filters: 2, kernel: 3, activation: Activation::Relu },
            LayerSpec::Upsample1D { factor: 2 },
            LayerSpec::Dropout { rate: 0.3 },
            LayerSpec::Dense { units: 4, activation: Activation::Linear, l1: 0.05, l1_target: L1Target::Activity },
            LayerSpec::Activation { activation: Activation::Sigmoid },
        ];
        let n = net(Shape::new(8, 2), spec, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..3 * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = TensorBuf::new(Shape::new(8, 2), 3, x).unwrap();
        let g = check_gradients(&n, &x, 1e-4, 11).unwrap();
        assert!(g.max_rel_err < 1e-4, "{g:?}");
        assert!(g.checked > 100);
    }

    #[test]
    fn weight_l1_gradient_matches() {
        let spec = vec![LayerSpec::Dense { units: 3, activation: Activation::Sigmoid, l1: 0.1, l1_target: L1Target::Weights }];
        let n = net(Shape::new(5, 1), spec, 4);
        let x = TensorBuf::new(Shape::new(5, 1), 2, (0..10).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let g = check_gradients(&n, &x, 1e-4, 1).unwrap();
        assert!(g.max_rel_err < 1e-4, "{g:?}");
    }
}
