//! JSON run configuration: schema, defaults, validation and dotted-path
//! overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dynamics::{DivisionModel, DivisionVariant, DynamicsConfig, InitialCount};
use crate::error::{Error, Result};
use crate::guide::GuideGenSpec;
use crate::imaging::acquire::{AcquisitionConfig, AttenuationMode};
use crate::imaging::video::VideoGenSpec;
use crate::imaging::volume::gaussian_psf;
use crate::io::nrrd;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum GuideSource {
    /// CSV of guide-cell tracks.
    File(PathBuf),
    Generate(GuideGenSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoGenSettings {
    #[serde(default = "default_video_count")]
    pub count: u32,
    #[serde(default = "default_video_frames")]
    pub frames: usize,
    #[serde(default = "default_video_radius")]
    pub base_radius_vox: f64,
    #[serde(default = "default_video_intensity")]
    pub intensity: f64,
}

fn default_video_count() -> u32 {
    56
}
fn default_video_frames() -> usize {
    8
}
fn default_video_radius() -> f64 {
    8.0
}
fn default_video_intensity() -> f64 {
    2000.0
}

impl Default for VideoGenSettings {
    fn default() -> Self {
        VideoGenSettings {
            count: default_video_count(),
            frames: default_video_frames(),
            base_radius_vox: default_video_radius(),
            intensity: default_video_intensity(),
        }
    }
}

impl VideoGenSettings {
    pub fn gen_spec(&self) -> VideoGenSpec {
        VideoGenSpec {
            frames: self.frames,
            base_radius_vox: self.base_radius_vox,
            intensity: self.intensity,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum VideoSource {
    /// Directory of `vid<ID>_t<frame>_{int,mask}.nrrd` pairs.
    Dir(PathBuf),
    Generate(VideoGenSettings),
}

impl Default for VideoSource {
    fn default() -> Self {
        VideoSource::Generate(VideoGenSettings::default())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum InitialSpec {
    /// Fraction p of the frame-0 guide-cell count.
    Fraction(f64),
    Count(usize),
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Fraction(0.5)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSettings {
    pub w_dir: f64,
    pub w_rep: f64,
    pub w_nna: f64,
    pub k: usize,
    pub r_min_um: f64,
    pub r_max_um: f64,
    pub cycle_min: u32,
    pub cycle_max: u32,
}

impl Default for DynamicsSettings {
    fn default() -> Self {
        DynamicsSettings {
            w_dir: 1.0,
            w_rep: 1.0,
            w_nna: 0.1,
            k: 10,
            r_min_um: 7.0,
            r_max_um: 10.0,
            cycle_min: 28,
            cycle_max: 56,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DivisionSettings {
    pub model: DivisionVariant,
    pub density_radius_um: f64,
    /// Minimum cycle state for quota-driven division eligibility; defaults to
    /// `dynamics.cycle_min`.
    pub eligibility_min: Option<u32>,
}

impl Default for DivisionSettings {
    fn default() -> Self {
        DivisionSettings {
            model: DivisionVariant::CountCoupledDensity,
            density_radius_um: 40.0,
            eligibility_min: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolumeSettings {
    pub dims: [usize; 3],
    pub spacing_um: [f64; 3],
}

impl Default for VolumeSettings {
    fn default() -> Self {
        VolumeSettings {
            dims: [128, 128, 64],
            spacing_um: [1.0, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum PsfSpec {
    /// Float32 NRRD kernel; normalized to unit sum on load.
    File(PathBuf),
    Gaussian { sigma_xy_um: f64, sigma_z_um: f64 },
}

impl Default for PsfSpec {
    fn default() -> Self {
        PsfSpec::Gaussian {
            sigma_xy_um: 1.5,
            sigma_z_um: 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionSettings {
    pub psf: PsfSpec,
    pub dark_offset: f64,
    pub sigma_agn: f64,
    pub shot_noise: bool,
    pub attenuation: AttenuationMode,
    pub multiview: bool,
    pub bit_depth: u32,
}

impl Default for AcquisitionSettings {
    fn default() -> Self {
        AcquisitionSettings {
            psf: PsfSpec::default(),
            dark_offset: 100.0,
            sigma_agn: 10.0,
            shot_noise: true,
            attenuation: AttenuationMode::Forward,
            multiview: false,
            bit_depth: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    pub guide: GuideSource,
    #[serde(default)]
    pub videos: VideoSource,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub dynamics: DynamicsSettings,
    #[serde(default)]
    pub division: DivisionSettings,
    #[serde(default)]
    pub volume: VolumeSettings,
    #[serde(default)]
    pub acquisition: AcquisitionSettings,
    /// Optional frame subrange [a, b) for the render/acquire stages.
    #[serde(default)]
    pub frames: Option<[usize; 2]>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        match self.initial {
            InitialSpec::Fraction(p) if !(0.0 < p && p <= 1.0) => {
                return Err(Error::config("initial.fraction must be in (0, 1]"));
            }
            InitialSpec::Count(0) => {
                return Err(Error::config("initial.count must be >= 1"));
            }
            _ => {}
        }
        if self.volume.dims.contains(&0) {
            return Err(Error::config("volume.dims entries must be >= 1"));
        }
        if self.volume.spacing_um.iter().any(|&s| s <= 0.0) {
            return Err(Error::config("volume.spacing_um entries must be > 0"));
        }
        if let Some([a, b]) = self.frames {
            if a >= b {
                return Err(Error::config("frames range must satisfy a < b"));
            }
        }
        if let VideoSource::Generate(g) = &self.videos {
            if g.count == 0 {
                return Err(Error::config("videos.generate.count must be >= 1"));
            }
        }
        if let PsfSpec::Gaussian {
            sigma_xy_um,
            sigma_z_um,
        } = self.acquisition.psf
        {
            if sigma_xy_um <= 0.0 || sigma_z_um <= 0.0 {
                return Err(Error::config("Gaussian PSF sigmas must be > 0"));
            }
        }
        // Component invariants; n_videos is resolved later, validate with 1.
        self.dynamics_config(1).validate()?;
        self.division_model().validate()?;
        if self.acquisition.dark_offset < 0.0 || self.acquisition.sigma_agn < 0.0 {
            return Err(Error::config("acquisition noise parameters must be >= 0"));
        }
        if self.acquisition.bit_depth == 0 || self.acquisition.bit_depth > 16 {
            return Err(Error::config("acquisition.bit_depth must be in 1..=16"));
        }
        Ok(())
    }

    pub fn dynamics_config(&self, n_videos: u32) -> DynamicsConfig {
        DynamicsConfig {
            w_dir: self.dynamics.w_dir,
            w_rep: self.dynamics.w_rep,
            w_nna: self.dynamics.w_nna,
            k_neighbors: self.dynamics.k,
            r_min: self.dynamics.r_min_um,
            r_max: self.dynamics.r_max_um,
            cycle_min: self.dynamics.cycle_min,
            cycle_max: self.dynamics.cycle_max,
            n_videos,
            seed: self.seed,
        }
    }

    /// The count-coupling fraction p. An absolute initial count is converted
    /// using the frame-0 guide population.
    pub fn coupling_fraction(&self, n_embryo_frame0: usize) -> f64 {
        match self.initial {
            InitialSpec::Fraction(p) => p,
            InitialSpec::Count(c) => c as f64 / n_embryo_frame0 as f64,
        }
    }

    pub fn initial_count(&self) -> InitialCount {
        match self.initial {
            InitialSpec::Fraction(p) => InitialCount::Fraction(p),
            InitialSpec::Count(c) => InitialCount::Count(c),
        }
    }

    /// Division model with p left at 0; callers fill it once the guide's
    /// frame-0 population is known.
    pub fn division_model(&self) -> DivisionModel {
        DivisionModel {
            variant: self.division.model,
            p: 0.0,
            density_radius: self.division.density_radius_um,
            eligibility_min: self.division.eligibility_min,
        }
    }

    /// Resolve the PSF (load or synthesize) and bundle the acquisition
    /// parameters. The Gaussian PSF is sampled at the output voxel spacing.
    pub fn acquisition_config(&self) -> Result<AcquisitionConfig> {
        let psf = match &self.acquisition.psf {
            PsfSpec::File(path) => {
                let (mut v, _) = nrrd::read_volume(path)?;
                let total = v.sum();
                // NaN must fail too, so avoid a plain `total <= 0.0` test
                if !total.is_finite() || total <= 0.0 {
                    return Err(Error::config(format!(
                        "PSF {} must have positive total intensity",
                        path.display()
                    )));
                }
                for x in &mut v.data {
                    *x /= total;
                }
                v
            }
            PsfSpec::Gaussian {
                sigma_xy_um,
                sigma_z_um,
            } => gaussian_psf(*sigma_xy_um, *sigma_z_um, self.volume.spacing_um)?,
        };
        let cfg = AcquisitionConfig {
            psf,
            dark_offset: self.acquisition.dark_offset,
            sigma_agn: self.acquisition.sigma_agn,
            shot_noise: self.acquisition.shot_noise,
            attenuation: self.acquisition.attenuation,
            multiview: self.acquisition.multiview,
            bit_depth: self.acquisition.bit_depth,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolved form with every default materialized, for the manifest.
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Read a config file into a raw JSON value (overrides apply to this form).
pub fn read_config_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

/// Apply `key.path=value` overrides. Values parse as JSON when possible and
/// fall back to strings, so `dynamics.k=5` and `guide.file=g.csv` both work.
pub fn apply_overrides(config: &mut Value, sets: &[String]) -> Result<()> {
    for set in sets {
        let (key, raw) = set
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override `{set}` is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
        let mut node = &mut *config;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = match node {
                Value::Object(map) => map,
                _ => {
                    return Err(Error::config(format!(
                        "override `{key}`: `{}` is not an object",
                        parts[..i].join(".")
                    )))
                }
            };
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}

/// Deserialize and validate a (possibly overridden) raw config value.
pub fn resolve_config(value: Value) -> Result<SimulationConfig> {
    let cfg: SimulationConfig =
        serde_json::from_value(value).map_err(|e| Error::config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<SimulationConfig> {
    resolve_config(read_config_value(path)?)
}
