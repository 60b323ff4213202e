//! Unitary, centered 2D Fourier transforms between the image and uv planes.
//!
//! Both planes use centered coordinates: cell `(r, c)` sits at
//! `(c - W/2, r - H/2)`, so the zero frequency (and the image origin) is the
//! cell `(H/2, W/2)`. The forward kernel is `exp(-j 2π (u l / W + v m / H))`
//! and each direction is scaled by `1/sqrt(H W)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{ComplexGrid, RealGrid};

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 || !height.is_power_of_two() || !width.is_power_of_two() {
        return Err(Error::invalid(format!(
            "FFT grid must have power-of-two sides, got {height}x{width}"
        )));
    }
    Ok(())
}

/// In-place radix-2 decimation-in-time transform, unnormalized.
/// `sign` is -1 for the forward kernel and +1 for the inverse.
fn fft1d(re: &mut [f64], im: &mut [f64], sign: f64) {
    let n = re.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        for k in 0..half {
            let (wi, wr) = (step * k as f64).sin_cos();
            let mut start = 0;
            while start < n {
                let a = start + k;
                let b = a + half;
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                start += len;
            }
        }
        len <<= 1;
    }
}

/// Swaps the two halves of each axis (for even sides this is its own inverse).
fn half_shift(g: &mut ComplexGrid) {
    let (h, w) = (g.height, g.width);
    let (hh, hw) = (h / 2, w / 2);
    let mut re = vec![0.0; h * w];
    let mut im = vec![0.0; h * w];
    for r in 0..h {
        let rr = (r + hh) % h;
        for c in 0..w {
            let cc = (c + hw) % w;
            re[rr * w + cc] = g.re[r * w + c];
            im[rr * w + cc] = g.im[r * w + c];
        }
    }
    g.re = re;
    g.im = im;
}

fn transform(input: &ComplexGrid, sign: f64) -> Result<ComplexGrid> {
    check_dims(input.height, input.width)?;
    let (h, w) = (input.height, input.width);
    let mut g = input.clone();
    if h > 1 || w > 1 {
        half_shift(&mut g);
    }
    for r in 0..h {
        fft1d(&mut g.re[r * w..(r + 1) * w], &mut g.im[r * w..(r + 1) * w], sign);
    }
    let mut cre = vec![0.0; h];
    let mut cim = vec![0.0; h];
    for c in 0..w {
        for r in 0..h {
            cre[r] = g.re[r * w + c];
            cim[r] = g.im[r * w + c];
        }
        fft1d(&mut cre, &mut cim, sign);
        for r in 0..h {
            g.re[r * w + c] = cre[r];
            g.im[r * w + c] = cim[r];
        }
    }
    if h > 1 || w > 1 {
        half_shift(&mut g);
    }
    let scale = 1.0 / ((h * w) as f64).sqrt();
    g.re.iter_mut().chain(g.im.iter_mut()).for_each(|v| *v *= scale);
    Ok(g)
}

/// Forward transform of a complex grid.
pub fn fft2(input: &ComplexGrid) -> Result<ComplexGrid> {
    transform(input, -1.0)
}

/// Forward transform of a real image.
pub fn fft2_real(img: &RealGrid) -> Result<ComplexGrid> {
    fft2(&ComplexGrid::from_real(img))
}

pub fn ifft2(vis: &ComplexGrid) -> Result<ComplexGrid> {
    transform(vis, 1.0)
}
