//! Layer kernels: 3×3 same-padding convolution (im2col + GEMM), 2×2 max
//! pooling, ReLU and fully connected layers, each with its backward pass.

use super::tensor::{gemm, Mat, Real, Tensor};
use crate::error::{Error, Result};

fn shape_err(what: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{what}: {a:?} vs {b:?}"))
}

/// Unfold one `[c, h, w]` image into `[c·9, h·w]` patch columns (zero padding 1).
fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for di in 0..3 {
            for dj in 0..3 {
                let row = &mut cols[(ch * 9 + di * 3 + dj) * hw..][..hw];
                for i in 0..h {
                    let dst = &mut row[i * w..(i + 1) * w];
                    let si = i as isize + di as isize - 1;
                    if si < 0 || si >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[si as usize * w..][..w];
                    match dj {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Fold patch-column gradients back onto a `[c, h, w]` image (accumulating).
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut dx[ch * hw..(ch + 1) * hw];
        for di in 0..3 {
            for dj in 0..3 {
                let row = &cols[(ch * 9 + di * 3 + dj) * hw..][..hw];
                for i in 0..h {
                    let si = i as isize + di as isize - 1;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    let src = &row[i * w..(i + 1) * w];
                    let dst = &mut plane[si as usize * w..][..w];
                    match dj {
                        0 => {
                            for (d, &s) in dst[..w - 1].iter_mut().zip(&src[1..]) {
                                *d = *d + s;
                            }
                        }
                        1 => {
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d = *d + s;
                            }
                        }
                        _ => {
                            for (d, &s) in dst[1..].iter_mut().zip(&src[..w - 1]) {
                                *d = *d + s;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_dims<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize)> {
    if x.shape.len() != 4 {
        return Err(Error::Shape(format!("conv input must be [N,C,H,W], got {:?}", x.shape)));
    }
    let (n, c, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    if w.shape.len() != 4 || w.shape[1] != c || w.shape[2] != 3 || w.shape[3] != 3 {
        return Err(shape_err("conv weight [K,C,3,3] against input", &w.shape, &x.shape));
    }
    let k = w.shape[0];
    if b.shape != [k] {
        return Err(shape_err("conv bias against weight", &b.shape, &w.shape));
    }
    Ok((n, c, h, wd, k))
}

/// `y[n,k,i,j] = b[k] + Σ x[n,c,i+di-1,j+dj-1]·w[k,c,di,dj]`, stride 1, zero pad 1.
pub fn conv2d_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, wd, k) = conv_dims(x, w, b)?;
    let hw = h * wd;
    let mut y = Tensor::zeros(&[n, k, h, wd]);
    let mut cols = vec![T::zero(); c * 9 * hw];
    for s in 0..n {
        im2col(&x.data[s * c * hw..(s + 1) * c * hw], c, h, wd, &mut cols);
        let out = &mut y.data[s * k * hw..(s + 1) * k * hw];
        gemm(T::one(), Mat::new(&w.data, k, c * 9), Mat::new(&cols, c * 9, hw), T::zero(), out);
        for (kk, row) in out.chunks_exact_mut(hw).enumerate() {
            let bias = b.data[kk];
            row.iter_mut().for_each(|v| *v = *v + bias);
        }
    }
    Ok(y)
}

/// Accumulate weight and bias gradients into `dw`/`db`; returns the input
/// gradient when `need_dx`.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    dw: &mut Tensor<T>,
    db: &mut Tensor<T>,
    need_dx: bool,
) -> Result<Option<Tensor<T>>> {
    let (n, c, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let k = w.shape[0];
    if dy.shape != [n, k, h, wd] {
        return Err(shape_err("conv upstream gradient against output", &dy.shape, &[n, k, h, wd]));
    }
    if dw.shape != w.shape || db.shape != [k] {
        return Err(shape_err("conv gradient buffers", &dw.shape, &w.shape));
    }
    let hw = h * wd;
    let mut cols = vec![T::zero(); c * 9 * hw];
    let mut dcols = if need_dx { vec![T::zero(); c * 9 * hw] } else { Vec::new() };
    let mut dx = need_dx.then(|| Tensor::zeros(&x.shape));
    for s in 0..n {
        let g = &dy.data[s * k * hw..(s + 1) * k * hw];
        im2col(&x.data[s * c * hw..(s + 1) * c * hw], c, h, wd, &mut cols);
        gemm(T::one(), Mat::new(g, k, hw), Mat::t(&cols, c * 9, hw), T::one(), &mut dw.data);
        for (kk, row) in g.chunks_exact(hw).enumerate() {
            let sum: T = row.iter().copied().sum();
            db.data[kk] = db.data[kk] + sum;
        }
        if let Some(dx) = dx.as_mut() {
            gemm(T::one(), Mat::t(&w.data, k, c * 9), Mat::new(g, k, hw), T::zero(), &mut dcols);
            col2im(&dcols, c, h, wd, &mut dx.data[s * c * hw..(s + 1) * c * hw]);
        }
    }
    Ok(dx)
}

/// 2×2 max pooling with stride 2. Returns the output and, per output cell,
/// the flat index of the winning input element (first maximum on ties).
pub fn maxpool_forward<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    if x.shape.len() != 4 || !x.shape[2].is_multiple_of(2) || !x.shape[3].is_multiple_of(2) {
        return Err(Error::Shape(format!("maxpool needs [N,C,even H,even W], got {:?}", x.shape)));
    }
    let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros(&[n, c, oh, ow]);
    let mut arg = vec![0u32; n * c * oh * ow];
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + 2 * i * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * w + 2 * j + dj;
                    if x.data[idx] > x.data[best] {
                        best = idx;
                    }
                }
                let o = plane * oh * ow + i * ow + j;
                y.data[o] = x.data[best];
                arg[o] = best as u32;
            }
        }
    }
    Ok((y, arg))
}

pub fn maxpool_backward<T: Real>(dy: &Tensor<T>, argmax: &[u32], input_shape: &[usize]) -> Result<Tensor<T>> {
    if dy.len() != argmax.len() {
        return Err(Error::Shape(format!(
            "maxpool upstream gradient has {} values, cache has {}",
            dy.len(),
            argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(input_shape);
    for (&g, &a) in dy.data.iter().zip(argmax) {
        dx.data[a as usize] = dx.data[a as usize] + g;
    }
    Ok(dx)
}

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(),
    }
}

/// Passes the gradient where the cached input was strictly positive.
pub fn relu_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape != dy.shape {
        return Err(shape_err("relu gradient against input", &dy.shape, &x.shape));
    }
    Ok(Tensor {
        shape: x.shape.clone(),
        data: x
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
            .collect(),
    })
}

/// `y = x·Wᵀ + b` for `x: [N, in]`, `W: [out, in]`.
pub fn dense_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, inp) = (x.batch(), x.item_len());
    if w.shape.len() != 2 || w.shape[1] != inp {
        return Err(shape_err("dense weight [out,in] against input", &w.shape, &x.shape));
    }
    let out = w.shape[0];
    if b.shape != [out] {
        return Err(shape_err("dense bias against weight", &b.shape, &w.shape));
    }
    let mut y = Tensor::zeros(&[n, out]);
    gemm(T::one(), Mat::new(&x.data, n, inp), Mat::t(&w.data, out, inp), T::zero(), &mut y.data);
    for row in y.data.chunks_exact_mut(out) {
        for (v, &bb) in row.iter_mut().zip(&b.data) {
            *v = *v + bb;
        }
    }
    Ok(y)
}

pub fn dense_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    dw: &mut Tensor<T>,
    db: &mut Tensor<T>,
    need_dx: bool,
) -> Result<Option<Tensor<T>>> {
    let (n, inp) = (x.batch(), x.item_len());
    let out = w.shape[0];
    if dy.shape != [n, out] {
        return Err(shape_err("dense upstream gradient against output", &dy.shape, &[n, out]));
    }
    if dw.shape != w.shape || db.shape != [out] {
        return Err(shape_err("dense gradient buffers", &dw.shape, &w.shape));
    }
    gemm(T::one(), Mat::t(&dy.data, n, out), Mat::new(&x.data, n, inp), T::one(), &mut dw.data);
    for row in dy.data.chunks_exact(out) {
        for (d, &g) in db.data.iter_mut().zip(row) {
            *d = *d + g;
        }
    }
    Ok(need_dx.then(|| {
        let mut dx = Tensor::zeros(&x.shape);
        gemm(T::one(), Mat::new(&dy.data, n, out), Mat::new(&w.data, out, inp), T::zero(), &mut dx.data);
        dx
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = stream(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct summation over (k, c, di, dj) with explicit bounds checks.
    fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let (n, c, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let k = w.shape[0];
        let mut y = Tensor::zeros(&[n, k, h, wd]);
        for s in 0..n {
            for kk in 0..k {
                for i in 0..h {
                    for j in 0..wd {
                        let mut acc = b.data[kk];
                        for ch in 0..c {
                            for di in 0..3 {
                                for dj in 0..3 {
                                    let (si, sj) = (i as isize + di as isize - 1, j as isize + dj as isize - 1);
                                    if si < 0 || sj < 0 || si >= h as isize || sj >= wd as isize {
                                        continue;
                                    }
                                    acc += x.data[((s * c + ch) * h + si as usize) * wd + sj as usize]
                                        * w.data[((kk * c + ch) * 3 + di) * 3 + dj];
                                }
                            }
                        }
                        y.data[((s * k + kk) * h + i) * wd + j] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_direct_summation() {
        let x = random(&[1, 1, 4, 4], 1);
        let w = random(&[1, 1, 3, 3], 2);
        let b = random(&[1], 3);
        let y = conv2d_forward(&x, &w, &b).unwrap();
        let o = conv_oracle(&x, &w, &b);
        for (a, e) in y.data.iter().zip(&o.data) {
            assert!((a - e).abs() < 1e-12);
        }
        let x = random(&[2, 3, 5, 6], 4);
        let w = random(&[4, 3, 3, 3], 5);
        let b = random(&[4], 6);
        let y = conv2d_forward(&x, &w, &b).unwrap();
        let o = conv_oracle(&x, &w, &b);
        for (a, e) in y.data.iter().zip(&o.data) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_kernel_is_identity() {
        let x = random(&[1, 1, 5, 5], 7);
        let mut w = Tensor::zeros(&[1, 1, 3, 3]);
        w.data[4] = 1.0;
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(y.data, x.data);
        // with several input channels the delta kernel sums them
        let x = random(&[1, 2, 4, 4], 8);
        let mut w = Tensor::zeros(&[1, 2, 3, 3]);
        w.data[4] = 1.0;
        w.data[13] = 1.0;
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[1])).unwrap();
        for i in 0..16 {
            assert!((y.data[i] - (x.data[i] + x.data[16 + i])).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_input_gives_bias() {
        let x = Tensor::<f64>::zeros(&[2, 3, 4, 4]);
        let w = random(&[5, 3, 3, 3], 9);
        let b = random(&[5], 10);
        let y = conv2d_forward(&x, &w, &b).unwrap();
        for s in 0..2 {
            for k in 0..5 {
                assert!(y.data[(s * 5 + k) * 16..][..16].iter().all(|&v| v == b.data[k]));
            }
        }
    }

    #[test]
    fn conv_shape_mismatch_names_shapes() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let w = Tensor::<f64>::zeros(&[3, 1, 3, 3]);
        let err = conv2d_forward(&x, &w, &Tensor::zeros(&[3])).unwrap_err().to_string();
        assert!(err.contains("[3, 1, 3, 3]") && err.contains("[1, 2, 4, 4]"), "{err}");
    }

    #[test]
    fn dense_weight_gradient_is_outer_product() {
        let x = random(&[1, 5], 11);
        let w = random(&[3, 5], 12);
        let dy = random(&[1, 3], 13);
        let mut dw = Tensor::zeros(&[3, 5]);
        let mut db = Tensor::zeros(&[3]);
        dense_backward(&x, &w, &dy, &mut dw, &mut db, false).unwrap();
        for o in 0..3 {
            for i in 0..5 {
                assert!((dw.data[o * 5 + i] - dy.data[o] * x.data[i]).abs() < 1e-12);
            }
        }
        assert_eq!(db.data, dy.data);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let x = random(&[2, 2, 4, 4], 14);
        let w = random(&[3, 2, 3, 3], 15);
        let dy = Tensor::zeros(&[2, 3, 4, 4]);
        let mut dw = Tensor::zeros(&[3, 2, 3, 3]);
        let mut db = Tensor::zeros(&[3]);
        let dx = conv2d_backward(&x, &w, &dy, &mut dw, &mut db, true).unwrap().unwrap();
        assert!(dx.data.iter().chain(&dw.data).chain(&db.data).all(|&v| v == 0.0));
        let (_, arg) = maxpool_forward(&x).unwrap();
        let dpool = maxpool_backward(&Tensor::<f64>::zeros(&[2, 2, 2, 2]), &arg, &x.shape).unwrap();
        assert!(dpool.data.iter().all(|&v| v == 0.0));
        assert!(relu_backward(&x, &Tensor::zeros(&x.shape)).unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maxpool_gradient_support() {
        let x = random(&[2, 3, 6, 4], 16);
        let (y, arg) = maxpool_forward(&x).unwrap();
        assert_eq!(y.shape, vec![2, 3, 3, 2]);
        let dy = random(&y.shape, 17);
        let dx = maxpool_backward(&dy, &arg, &x.shape).unwrap();
        let nonzero = dx.data.iter().filter(|&&v| v != 0.0).count();
        assert!(nonzero <= y.len());
        for (o, &a) in arg.iter().enumerate() {
            assert_eq!(dx.data[a as usize], dy.data[o]);
            assert_eq!(y.data[o], x.data[a as usize]);
        }
    }

    #[test]
    fn maxpool_rejects_odd_sizes() {
        assert!(maxpool_forward(&Tensor::<f32>::zeros(&[1, 1, 3, 4])).is_err());
    }
}
