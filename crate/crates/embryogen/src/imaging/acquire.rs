//! The acquisition degradation chain:
//! attenuation → PSF convolution → dark current → shot noise → readout noise,
//! then clamping and quantization. The multiview variant produces a second
//! view with the attenuation ramp inverted and the PSF rotated by 180°.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::imaging::volume::{convolve_psf, Volume};
use crate::rng::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttenuationMode {
    None,
    Forward,
    Inverted,
}

impl AttenuationMode {
    fn inverted(self) -> AttenuationMode {
        match self {
            AttenuationMode::None => AttenuationMode::None,
            AttenuationMode::Forward => AttenuationMode::Inverted,
            AttenuationMode::Inverted => AttenuationMode::Forward,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AcquisitionConfig {
    /// Unit-sum blur kernel.
    pub psf: Volume,
    /// Constant detector offset, counts.
    pub dark_offset: f64,
    /// Readout noise standard deviation, counts.
    pub sigma_agn: f64,
    pub shot_noise: bool,
    pub attenuation: AttenuationMode,
    pub multiview: bool,
    pub bit_depth: u32,
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if (self.psf.sum() - 1.0).abs() > 1e-6 {
            return Err(Error::validation("PSF must be normalized to unit sum"));
        }
        if self.dark_offset < 0.0 || self.sigma_agn < 0.0 {
            return Err(Error::validation("noise parameters must be >= 0"));
        }
        if self.bit_depth == 0 || self.bit_depth > 16 {
            return Err(Error::validation("bit depth must be in 1..=16"));
        }
        Ok(())
    }
}

/// Scale slice z by a linear ramp along the virtual optical axis:
/// forward = 1 − z/(Z−1) (detection objective at slice 0), inverted mirrors it.
pub fn attenuate(v: &Volume, mode: AttenuationMode) -> Result<Volume> {
    if mode == AttenuationMode::None {
        return Ok(v.clone());
    }
    let nz = v.dims[2];
    if nz < 2 {
        return Err(Error::validation("attenuation needs at least 2 slices"));
    }
    let mut out = v.clone();
    let slice = v.dims[0] * v.dims[1];
    for z in 0..nz {
        let ramp = z as f64 / (nz - 1) as f64;
        let factor = match mode {
            AttenuationMode::Forward => 1.0 - ramp,
            AttenuationMode::Inverted => ramp,
            AttenuationMode::None => unreachable!(),
        };
        for voxel in &mut out.data[z * slice..(z + 1) * slice] {
            *voxel *= factor;
        }
    }
    Ok(out)
}

/// Constant dark-current offset.
pub fn add_dark_current(v: &Volume, offset: f64) -> Volume {
    let mut out = v.clone();
    for voxel in &mut out.data {
        *voxel += offset;
    }
    out
}

/// Per-voxel Poisson draw with the voxel value as its mean.
pub fn apply_shot_noise(v: &Volume, rng: &mut ChaCha8Rng) -> Result<Volume> {
    let mut out = v.clone();
    for voxel in &mut out.data {
        if *voxel < 0.0 {
            return Err(Error::validation(format!(
                "negative intensity {voxel} fed to the shot-noise stage"
            )));
        }
        if *voxel > 0.0 {
            let poisson = Poisson::new(*voxel).expect("positive mean");
            *voxel = poisson.sample(rng);
        }
    }
    Ok(out)
}

/// Zero-mean Gaussian readout noise, clamped at 0.
pub fn add_gaussian_noise(v: &Volume, sigma: f64, rng: &mut ChaCha8Rng) -> Volume {
    let mut out = v.clone();
    if sigma == 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma > 0");
    for voxel in &mut out.data {
        *voxel = (*voxel + normal.sample(rng)).max(0.0);
    }
    out
}

fn acquire_view(
    raw: &Volume,
    psf: &Volume,
    attenuation: AttenuationMode,
    cfg: &AcquisitionConfig,
    seed: u64,
    frame: usize,
    view: u64,
) -> Result<Volume> {
    let mut v = attenuate(raw, attenuation)?;
    v = convolve_psf(&v, psf)?;
    v = add_dark_current(&v, cfg.dark_offset);
    if cfg.shot_noise {
        let mut rng = rng::stream(seed, &[domain::SHOT, frame as u64, view]);
        v = apply_shot_noise(&v, &mut rng)?;
    }
    if cfg.sigma_agn > 0.0 {
        let mut rng = rng::stream(seed, &[domain::GAUSS, frame as u64, view]);
        v = add_gaussian_noise(&v, cfg.sigma_agn, &mut rng);
    }
    Ok(v.quantized(cfg.bit_depth))
}

/// Run the full chain on a raw volume; returns the primary view and, when
/// multiview is enabled, a second view (inverted attenuation, rotated PSF,
/// independent noise streams).
pub fn acquire(
    raw: &Volume,
    cfg: &AcquisitionConfig,
    seed: u64,
    frame: usize,
) -> Result<(Volume, Option<Volume>)> {
    cfg.validate()?;
    let view1 = acquire_view(raw, &cfg.psf, cfg.attenuation, cfg, seed, frame, 1)?;
    let view2 = if cfg.multiview {
        let rotated = cfg.psf.rotated_180();
        Some(acquire_view(raw, &rotated, cfg.attenuation.inverted(), cfg, seed, frame, 2)?)
    } else {
        None
    };
    Ok((view1, view2))
}
