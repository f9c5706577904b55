//! The 3D scalar grid and its linear filters.
//!
//! Data is stored in f64 during processing and quantized only on output.
//! Voxel order is x-fastest (first axis fastest, matching the NRRD raw
//! layout).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    /// (X, Y, Z) in voxels.
    pub dims: [usize; 3],
    /// Voxel spacing in µm.
    pub spacing: [f64; 3],
    pub data: Vec<f64>,
}

impl Volume {
    pub fn zeros(dims: [usize; 3], spacing: [f64; 3]) -> Result<Volume> {
        if dims.contains(&0) || spacing.iter().any(|&s| s <= 0.0) {
            return Err(Error::validation("volume dims and spacing must be positive"));
        }
        Ok(Volume {
            dims,
            spacing,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        })
    }

    pub fn from_data(dims: [usize; 3], spacing: [f64; 3], data: Vec<f64>) -> Result<Volume> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::validation(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        let mut v = Volume::zeros(dims, spacing)?;
        v.data = data;
        Ok(v)
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.idx(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = self.idx(x, y, z);
        self.data[i] = v;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// 180° rotation: index reversal along all three axes.
    pub fn rotated_180(&self) -> Volume {
        let [nx, ny, nz] = self.dims;
        let mut out = self.clone();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let i = out.idx(x, y, z);
                    out.data[i] = self.at(nx - 1 - x, ny - 1 - y, nz - 1 - z);
                }
            }
        }
        out
    }

    /// Clamp to [0, 2^bits − 1] and round half up to an integer grid.
    pub fn quantized(&self, bits: u32) -> Volume {
        let max = ((1u64 << bits) - 1) as f64;
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v = (v.clamp(0.0, max) + 0.5).floor().min(max);
        }
        out
    }

    /// Trilinear sample at continuous voxel coordinates; zero outside.
    pub fn sample_trilinear(&self, p: Vec3) -> f64 {
        let [nx, ny, nz] = self.dims;
        if p[0] < 0.0 || p[1] < 0.0 || p[2] < 0.0 {
            return 0.0;
        }
        if p[0] > (nx - 1) as f64 || p[1] > (ny - 1) as f64 || p[2] > (nz - 1) as f64 {
            return 0.0;
        }
        let x0 = p[0].floor() as usize;
        let y0 = p[1].floor() as usize;
        let z0 = p[2].floor() as usize;
        let x1 = (x0 + 1).min(nx - 1);
        let y1 = (y0 + 1).min(ny - 1);
        let z1 = (z0 + 1).min(nz - 1);
        let fx = p[0] - x0 as f64;
        let fy = p[1] - y0 as f64;
        let fz = p[2] - z0 as f64;

        let c00 = self.at(x0, y0, z0) * (1.0 - fx) + self.at(x1, y0, z0) * fx;
        let c10 = self.at(x0, y1, z0) * (1.0 - fx) + self.at(x1, y1, z0) * fx;
        let c01 = self.at(x0, y0, z1) * (1.0 - fx) + self.at(x1, y0, z1) * fx;
        let c11 = self.at(x0, y1, z1) * (1.0 - fx) + self.at(x1, y1, z1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }
}

/// Synthetic anisotropic-Gaussian PSF (light-sheet-like axial elongation),
/// truncated at 4σ and normalized to unit sum.
pub fn gaussian_psf(sigma_xy: f64, sigma_z: f64, spacing: [f64; 3]) -> Result<Volume> {
    if sigma_xy <= 0.0 || sigma_z <= 0.0 {
        return Err(Error::validation("PSF sigmas must be positive"));
    }
    let hx = (4.0 * sigma_xy).ceil() as usize;
    let hz = (4.0 * sigma_z).ceil() as usize;
    let dims = [2 * hx + 1, 2 * hx + 1, 2 * hz + 1];
    let mut psf = Volume::zeros(dims, spacing)?;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let dx = x as f64 - hx as f64;
                let dy = y as f64 - hx as f64;
                let dz = z as f64 - hz as f64;
                let q = (dx * dx + dy * dy) / (2.0 * sigma_xy * sigma_xy)
                    + dz * dz / (2.0 * sigma_z * sigma_z);
                psf.set(x, y, z, (-q).exp());
            }
        }
    }
    let total = psf.sum();
    for v in psf.data.iter_mut() {
        *v /= total;
    }
    Ok(psf)
}

/// In-place 3D FFT on a complex buffer of shape `dims` (x fastest).
fn fft3(data: &mut [Complex<f64>], dims: [usize; 3], inverse: bool) {
    let [nx, ny, nz] = dims;
    let mut planner = FftPlanner::new();
    let mut scratch: Vec<Complex<f64>> = Vec::new();

    // axis 0: contiguous rows
    let fft_x = if inverse {
        planner.plan_fft_inverse(nx)
    } else {
        planner.plan_fft_forward(nx)
    };
    for row in data.chunks_exact_mut(nx) {
        fft_x.process(row);
    }

    // axis 1
    let fft_y = if inverse {
        planner.plan_fft_inverse(ny)
    } else {
        planner.plan_fft_forward(ny)
    };
    scratch.resize(ny, Complex::default());
    for z in 0..nz {
        for x in 0..nx {
            let base = x + nx * ny * z;
            for y in 0..ny {
                scratch[y] = data[base + nx * y];
            }
            fft_y.process(&mut scratch);
            for y in 0..ny {
                data[base + nx * y] = scratch[y];
            }
        }
    }

    // axis 2
    let fft_z = if inverse {
        planner.plan_fft_inverse(nz)
    } else {
        planner.plan_fft_forward(nz)
    };
    scratch.resize(nz, Complex::default());
    let stride = nx * ny;
    for y in 0..ny {
        for x in 0..nx {
            let base = x + nx * y;
            for z in 0..nz {
                scratch[z] = data[base + stride * z];
            }
            fft_z.process(&mut scratch[..nz]);
            for z in 0..nz {
                data[base + stride * z] = scratch[z];
            }
        }
    }
}

/// Linear "same"-size convolution with zero-padding boundary, computed in the
/// frequency domain. The kernel center is at index `K_a / 2` per axis.
pub fn convolve_psf(v: &Volume, psf: &Volume) -> Result<Volume> {
    for a in 0..3 {
        if psf.dims[a] > v.dims[a] {
            return Err(Error::validation(format!(
                "psf dims {:?} exceed volume dims {:?}",
                psf.dims, v.dims
            )));
        }
    }
    let padded: [usize; 3] = [
        v.dims[0] + psf.dims[0] - 1,
        v.dims[1] + psf.dims[1] - 1,
        v.dims[2] + psf.dims[2] - 1,
    ];
    let total = padded[0] * padded[1] * padded[2];

    let mut a: Vec<Complex<f64>> = vec![Complex::default(); total];
    for z in 0..v.dims[2] {
        for y in 0..v.dims[1] {
            for x in 0..v.dims[0] {
                a[x + padded[0] * (y + padded[1] * z)] = Complex::new(v.at(x, y, z), 0.0);
            }
        }
    }
    let mut b: Vec<Complex<f64>> = vec![Complex::default(); total];
    for z in 0..psf.dims[2] {
        for y in 0..psf.dims[1] {
            for x in 0..psf.dims[0] {
                b[x + padded[0] * (y + padded[1] * z)] = Complex::new(psf.at(x, y, z), 0.0);
            }
        }
    }

    fft3(&mut a, padded, false);
    fft3(&mut b, padded, false);
    for (av, bv) in a.iter_mut().zip(&b) {
        *av *= bv;
    }
    fft3(&mut a, padded, true);

    let norm = 1.0 / total as f64;
    let c = [psf.dims[0] / 2, psf.dims[1] / 2, psf.dims[2] / 2];
    let mut out = Volume::zeros(v.dims, v.spacing)?;
    for z in 0..v.dims[2] {
        for y in 0..v.dims[1] {
            for x in 0..v.dims[0] {
                let src = (x + c[0]) + padded[0] * ((y + c[1]) + padded[1] * (z + c[2]));
                out.set(x, y, z, a[src].re * norm);
            }
        }
    }
    Ok(out)
}

/// Direct triple-loop "same" convolution. Only used as the reference for the
/// frequency-domain path; kept in the library so the acceptance suite and the
/// unit tests share one definition.
pub fn convolve_spatial_reference(v: &Volume, psf: &Volume) -> Volume {
    let c = [
        psf.dims[0] as isize / 2,
        psf.dims[1] as isize / 2,
        psf.dims[2] as isize / 2,
    ];
    let mut out = Volume::zeros(v.dims, v.spacing).expect("valid dims");
    for z in 0..v.dims[2] as isize {
        for y in 0..v.dims[1] as isize {
            for x in 0..v.dims[0] as isize {
                let mut acc = 0.0;
                for kz in 0..psf.dims[2] as isize {
                    for ky in 0..psf.dims[1] as isize {
                        for kx in 0..psf.dims[0] as isize {
                            let sx = x + c[0] - kx;
                            let sy = y + c[1] - ky;
                            let sz = z + c[2] - kz;
                            if sx < 0
                                || sy < 0
                                || sz < 0
                                || sx >= v.dims[0] as isize
                                || sy >= v.dims[1] as isize
                                || sz >= v.dims[2] as isize
                            {
                                continue;
                            }
                            acc += psf.at(kx as usize, ky as usize, kz as usize)
                                * v.at(sx as usize, sy as usize, sz as usize);
                        }
                    }
                }
                out.set(x as usize, y as usize, z as usize, acc);
            }
        }
    }
    out
}
