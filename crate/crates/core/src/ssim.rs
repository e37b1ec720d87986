//! Structural similarity with an analytic gradient.
//!
//! Mean local SSIM over valid windows of a separable Gaussian filter,
//! computed on luma. The gradient path backpropagates through the five
//! filtered moment maps and the luma conversion, so SSIM terms can sit
//! inside fitting losses.

use crate::error::{Error, Result};
use crate::img::Image;

pub const DEFAULT_WINDOW: usize = 11;
pub const DEFAULT_SIGMA: f64 = 1.5;
/// Standard stabilizers for unit dynamic range.
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

pub fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window as f64 - 1.0) / 2.0;
    let mut k: Vec<f64> = (0..window)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    fn zeros(w: usize, h: usize) -> Self {
        Plane {
            w,
            h,
            data: vec![0.0; w * h],
        }
    }
}

/// Separable valid-mode convolution (rows then columns).
fn conv_valid(img: &Plane, k: &[f64]) -> Plane {
    let kw = k.len();
    let tw = img.w - kw + 1;
    let mut tmp = Plane::zeros(tw, img.h);
    for y in 0..img.h {
        for x in 0..tw {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * img.data[y * img.w + x + i];
            }
            tmp.data[y * tw + x] = acc;
        }
    }
    let th = img.h - kw + 1;
    let mut out = Plane::zeros(tw, th);
    for y in 0..th {
        for x in 0..tw {
            let mut acc = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                acc += kv * tmp.data[(y + j) * tw + x];
            }
            out.data[y * tw + x] = acc;
        }
    }
    out
}

/// Adjoint of `conv_valid`: scatters window gradients back to input pixels.
fn conv_valid_transpose(d_out: &Plane, k: &[f64], in_w: usize, in_h: usize) -> Plane {
    let kw = k.len();
    let tw = in_w - kw + 1;
    let mut d_tmp = Plane::zeros(tw, in_h);
    for y in 0..d_out.h {
        for x in 0..d_out.w {
            let g = d_out.data[y * d_out.w + x];
            for (j, &kv) in k.iter().enumerate() {
                d_tmp.data[(y + j) * tw + x] += kv * g;
            }
        }
    }
    let mut d_in = Plane::zeros(in_w, in_h);
    for y in 0..in_h {
        for x in 0..tw {
            let g = d_tmp.data[y * tw + x];
            for (i, &kv) in k.iter().enumerate() {
                d_in.data[y * in_w + x + i] += kv * g;
            }
        }
    }
    d_in
}

fn to_luma_plane(img: &Image) -> Result<Plane> {
    let mut p = Plane::zeros(img.width, img.height);
    match img.channels {
        1 => p.data.copy_from_slice(&img.data),
        3 => {
            for i in 0..img.width * img.height {
                p.data[i] = LUMA[0] * img.data[i * 3]
                    + LUMA[1] * img.data[i * 3 + 1]
                    + LUMA[2] * img.data[i * 3 + 2];
            }
        }
        c => return Err(Error::dimension(format!("ssim expects 1 or 3 channels, got {c}"))),
    }
    Ok(p)
}

fn check_inputs(a: &Image, b: &Image, window: usize) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::dimension(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    if a.width < window || a.height < window {
        return Err(Error::precondition(format!(
            "images must be at least {window}px per side for ssim"
        )));
    }
    Ok(())
}

pub fn ssim(a: &Image, b: &Image, window: usize, sigma: f64) -> Result<f64> {
    check_inputs(a, b, window)?;
    let k = gaussian_kernel(window, sigma);
    let x = to_luma_plane(a)?;
    let y = to_luma_plane(b)?;
    Ok(ssim_planes(&x, &y, &k).0)
}

struct Moments {
    ux: Plane,
    uy: Plane,
    uxx: Plane,
    uyy: Plane,
    uxy: Plane,
}

fn ssim_planes(x: &Plane, y: &Plane, k: &[f64]) -> (f64, Moments) {
    let sq = |p: &Plane| Plane {
        w: p.w,
        h: p.h,
        data: p.data.iter().map(|v| v * v).collect(),
    };
    let mul = |p: &Plane, q: &Plane| Plane {
        w: p.w,
        h: p.h,
        data: p.data.iter().zip(q.data.iter()).map(|(a, b)| a * b).collect(),
    };
    let ux = conv_valid(x, k);
    let uy = conv_valid(y, k);
    let uxx = conv_valid(&sq(x), k);
    let uyy = conv_valid(&sq(y), k);
    let uxy = conv_valid(&mul(x, y), k);
    let mut total = 0.0;
    let n = ux.data.len();
    for i in 0..n {
        let (mx, my) = (ux.data[i], uy.data[i]);
        let vx = uxx.data[i] - mx * mx;
        let vy = uyy.data[i] - my * my;
        let vxy = uxy.data[i] - mx * my;
        let a1 = 2.0 * mx * my + C1;
        let a2 = 2.0 * vxy + C2;
        let b1 = mx * mx + my * my + C1;
        let b2 = vx + vy + C2;
        total += (a1 * a2) / (b1 * b2);
    }
    (
        total / n as f64,
        Moments {
            ux,
            uy,
            uxx,
            uyy,
            uxy,
        },
    )
}

pub struct SsimGrad {
    pub value: f64,
    /// d(mean SSIM)/d(first image), same shape as the input.
    pub d_first: Image,
}

/// SSIM and its gradient with respect to the first image.
pub fn ssim_with_grad(a: &Image, b: &Image, window: usize, sigma: f64) -> Result<SsimGrad> {
    check_inputs(a, b, window)?;
    let k = gaussian_kernel(window, sigma);
    let x = to_luma_plane(a)?;
    let y = to_luma_plane(b)?;
    let (value, m) = ssim_planes(&x, &y, &k);
    let n = m.ux.data.len() as f64;
    let (ow, oh) = (m.ux.w, m.ux.h);
    let mut d_ux = Plane::zeros(ow, oh);
    let mut d_uy = Plane::zeros(ow, oh);
    let mut d_uxx = Plane::zeros(ow, oh);
    let mut d_uyy = Plane::zeros(ow, oh);
    let mut d_uxy = Plane::zeros(ow, oh);
    for i in 0..m.ux.data.len() {
        let (mx, my) = (m.ux.data[i], m.uy.data[i]);
        let vx = m.uxx.data[i] - mx * mx;
        let vy = m.uyy.data[i] - my * my;
        let vxy = m.uxy.data[i] - mx * my;
        let a1 = 2.0 * mx * my + C1;
        let a2 = 2.0 * vxy + C2;
        let b1 = mx * mx + my * my + C1;
        let b2 = vx + vy + C2;
        let s = (a1 * a2) / (b1 * b2);
        let up = 1.0 / n;
        // With (ux, uy, uxx, uyy, uxy) as the independent inputs:
        //   a2 = 2(uxy - ux uy) + C2,  b2 = uxx - ux² + uyy - uy² + C2.
        d_ux.data[i] += up
            * ((2.0 * my * a2 + a1 * (-2.0 * my)) / (b1 * b2)
                - s * (2.0 * mx / b1 - 2.0 * mx / b2));
        d_uy.data[i] += up
            * ((2.0 * mx * a2 + a1 * (-2.0 * mx)) / (b1 * b2)
                - s * (2.0 * my / b1 - 2.0 * my / b2));
        d_uxy.data[i] += up * (2.0 * a1) / (b1 * b2);
        d_uxx.data[i] += up * (-s / b2);
        d_uyy.data[i] += up * (-s / b2);
    }
    let _ = &d_uyy; // gradient w.r.t. the second image is not requested
    let _ = &d_uy;
    // Back through the filters: ux = K*x, uxx = K*(x²), uxy = K*(x·y).
    let g_from_ux = conv_valid_transpose(&d_ux, &k, x.w, x.h);
    let g_from_uxx = conv_valid_transpose(&d_uxx, &k, x.w, x.h);
    let g_from_uxy = conv_valid_transpose(&d_uxy, &k, x.w, x.h);
    let mut d_luma = Plane::zeros(x.w, x.h);
    for i in 0..d_luma.data.len() {
        d_luma.data[i] =
            g_from_ux.data[i] + 2.0 * x.data[i] * g_from_uxx.data[i] + y.data[i] * g_from_uxy.data[i];
    }
    let mut d_first = Image::new(a.width, a.height, a.channels);
    match a.channels {
        1 => d_first.data.copy_from_slice(&d_luma.data),
        3 => {
            for i in 0..a.width * a.height {
                for c in 0..3 {
                    d_first.data[i * 3 + c] = d_luma.data[i] * LUMA[c];
                }
            }
        }
        _ => unreachable!(),
    }
    Ok(SsimGrad { value, d_first })
}
