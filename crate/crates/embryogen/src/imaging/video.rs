//! Single-cell object videos: short 3D+t clips of one dividing nucleus,
//! scaled in space and time to render each simulated object.
//!
//! Videos are either loaded from NRRD pairs on disk or synthesized: an
//! intensity-shaded ellipsoid that elongates along a random axis and pinches
//! into two separating lobes over the clip.

use std::fs;
use std::path::Path;

use rand_distr::{Distribution, UnitSphere};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::imaging::volume::Volume;
use crate::io::nrrd;
use crate::rng::{self, domain};

/// One object video: per-frame (intensity, mask) volume pairs covering one
/// division cycle from birth to the completed split.
#[derive(Debug, Clone)]
pub struct ObjectVideo {
    pub video_id: u32,
    pub frames: Vec<(Volume, Volume)>,
    /// Nucleus radius in video voxels, estimated from the first-frame mask.
    pub base_radius_vox: f64,
    /// Principal axis of the final-frame mask; the division axis of objects
    /// rendered with this video.
    pub principal_axis: Vec3,
}

#[derive(Debug, Clone)]
pub struct VideoLibrary {
    pub videos: Vec<ObjectVideo>,
}

impl VideoLibrary {
    pub fn n_videos(&self) -> u32 {
        self.videos.len() as u32
    }

    /// Video for a 1-based video id.
    pub fn get(&self, video_id: u32) -> Result<&ObjectVideo> {
        self.videos
            .get(video_id as usize - 1)
            .ok_or_else(|| Error::validation(format!("video id {video_id} out of range")))
    }

    /// Per-video division axes, indexed by video_id − 1.
    pub fn division_axes(&self) -> Vec<Vec3> {
        self.videos.iter().map(|v| v.principal_axis).collect()
    }
}

fn mask_points(mask: &Volume) -> Vec<Vec3> {
    let mut pts = Vec::new();
    for z in 0..mask.dims[2] {
        for y in 0..mask.dims[1] {
            for x in 0..mask.dims[0] {
                if mask.at(x, y, z) > 0.0 {
                    pts.push([x as f64, y as f64, z as f64]);
                }
            }
        }
    }
    pts
}

fn validate_and_finish(video_id: u32, frames: Vec<(Volume, Volume)>) -> Result<ObjectVideo> {
    if frames.len() < 2 {
        return Err(Error::validation(format!(
            "video {video_id} needs at least 2 frames"
        )));
    }
    for (f, (intensity, mask)) in frames.iter().enumerate() {
        if intensity.dims != mask.dims {
            return Err(Error::validation(format!(
                "video {video_id} frame {f}: intensity dims {:?} != mask dims {:?}",
                intensity.dims, mask.dims
            )));
        }
        let mut any = false;
        for (i, m) in intensity.data.iter().zip(&mask.data) {
            if *m > 0.0 {
                any = true;
                if *i <= 0.0 {
                    return Err(Error::validation(format!(
                        "video {video_id} frame {f}: mask extends beyond intensity support"
                    )));
                }
            }
        }
        if !any {
            return Err(Error::validation(format!(
                "video {video_id} frame {f}: empty mask"
            )));
        }
    }
    let first_mask_voxels = frames[0].1.data.iter().filter(|&&m| m > 0.0).count() as f64;
    let base_radius_vox = (3.0 * first_mask_voxels / (4.0 * std::f64::consts::PI)).cbrt();
    let principal_axis = geom::principal_axis(&mask_points(&frames.last().expect("frames").1))
        .unwrap_or([1.0, 0.0, 0.0]);
    Ok(ObjectVideo {
        video_id,
        frames,
        base_radius_vox,
        principal_axis,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoGenSpec {
    pub frames: usize,
    pub base_radius_vox: f64,
    /// Peak intensity of the nucleus, counts.
    pub intensity: f64,
}

impl VideoGenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 4 {
            return Err(Error::validation("video generator needs at least 4 frames"));
        }
        if self.base_radius_vox < 3.0 {
            return Err(Error::validation("video base radius must be at least 3 voxels"));
        }
        if self.intensity <= 0.0 {
            return Err(Error::validation("video intensity must be positive"));
        }
        Ok(())
    }
}

/// Normalized squared ellipsoid coordinate of `w` relative to a lobe at
/// `center` elongated along unit axis `u`.
fn lobe_q(w: Vec3, center: Vec3, u: Vec3, semi_para: f64, semi_perp: f64) -> f64 {
    let d = geom::sub(w, center);
    let para = geom::dot(d, u);
    let perp2 = (geom::norm2(d) - para * para).max(0.0);
    para * para / (semi_para * semi_para) + perp2 / (semi_perp * semi_perp)
}

/// Procedural dividing nucleus. Deterministic per `(spec, seed)`.
pub fn synthesize_object_video(spec: &VideoGenSpec, seed: u64, video_id: u32) -> Result<ObjectVideo> {
    spec.validate()?;
    let mut rng = rng::stream(seed, &[domain::VIDEO, video_id as u64]);
    let axis: Vec3 = UnitSphere.sample(&mut rng);
    let r = spec.base_radius_vox;
    let half = (1.8 * r).ceil() as usize + 2;
    let dim = 2 * half + 1;
    let center = [half as f64, half as f64, half as f64];

    let mut frames = Vec::with_capacity(spec.frames);
    for f in 0..spec.frames {
        let t = f as f64 / (spec.frames - 1) as f64;
        // interphase fills most of the cycle; the split happens in the last
        // quarter of the clip. lobes: (center, semi-axis along `axis`,
        // semi-axis perpendicular)
        let lobes: Vec<(Vec3, f64, f64)> = if t <= 0.75 {
            let s = t / 0.75;
            vec![(center, r * (1.0 + 0.3 * s), r * (1.0 - 0.1 * s))]
        } else {
            let s = (t - 0.75) / 0.25;
            let offset = geom::scale(axis, 0.85 * r * s);
            let para = 0.75 * r - 0.05 * r * s;
            let perp = 0.8 * r;
            vec![
                (geom::add(center, offset), para, perp),
                (geom::sub(center, offset), para, perp),
            ]
        };

        let mut intensity = Volume::zeros([dim, dim, dim], [1.0; 3])?;
        let mut mask = Volume::zeros([dim, dim, dim], [1.0; 3])?;
        for z in 0..dim {
            for y in 0..dim {
                for x in 0..dim {
                    let w = [x as f64, y as f64, z as f64];
                    let q = lobes
                        .iter()
                        .map(|&(c, pa, pe)| lobe_q(w, c, axis, pa, pe))
                        .fold(f64::INFINITY, f64::min);
                    if q <= 1.0 {
                        intensity.set(x, y, z, spec.intensity * (0.25 + 0.75 * (1.0 - q)));
                        mask.set(x, y, z, 1.0);
                    }
                }
            }
        }
        frames.push((intensity, mask));
    }
    validate_and_finish(video_id, frames)
}

/// Synthesize a whole library of `count` videos.
pub fn synthesize_library(spec: &VideoGenSpec, count: u32, seed: u64) -> Result<VideoLibrary> {
    if count < 1 {
        return Err(Error::validation("video library needs at least one video"));
    }
    let videos = (1..=count)
        .map(|id| synthesize_object_video(spec, seed, id))
        .collect::<Result<Vec<_>>>()?;
    Ok(VideoLibrary { videos })
}

fn video_file_name(id: u32, frame: usize, kind: &str) -> String {
    format!("vid{id}_t{frame}_{kind}.nrrd")
}

/// Write a library as NRRD pairs (`vid<ID>_t<frame>_{int,mask}.nrrd`).
pub fn write_library(lib: &VideoLibrary, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, video) in lib.videos.iter().enumerate() {
        let id = i as u32 + 1;
        for (f, (intensity, mask)) in video.frames.iter().enumerate() {
            nrrd::write_volume(intensity, &dir.join(video_file_name(id, f, "int")), nrrd::NrrdType::Float32)?;
            nrrd::write_volume(mask, &dir.join(video_file_name(id, f, "mask")), nrrd::NrrdType::Float32)?;
        }
    }
    Ok(())
}

/// Load all videos in a directory. Videos are renumbered 1..=N in ascending
/// order of their file id.
pub fn load_object_videos(dir: &Path) -> Result<VideoLibrary> {
    let mut found: Vec<(u32, usize)> = Vec::new(); // (file id, frame)
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some((id, frame)) = parse_video_name(&name, "int") {
            found.push((id, frame));
        }
    }
    if found.is_empty() {
        return Err(Error::validation(format!(
            "no object videos found in {}",
            dir.display()
        )));
    }
    found.sort_unstable();

    let mut ids: Vec<u32> = found.iter().map(|(id, _)| *id).collect();
    ids.dedup();
    let mut videos = Vec::with_capacity(ids.len());
    for (new_id, file_id) in ids.iter().enumerate() {
        let mut frames = Vec::new();
        for &(id, frame) in &found {
            if id != *file_id {
                continue;
            }
            if frame != frames.len() {
                return Err(Error::validation(format!(
                    "video {file_id}: missing frame {} in {}",
                    frames.len(),
                    dir.display()
                )));
            }
            let (intensity, _) = nrrd::read_volume(&dir.join(video_file_name(id, frame, "int")))?;
            let (mask, _) = nrrd::read_volume(&dir.join(video_file_name(id, frame, "mask")))?;
            frames.push((intensity, mask));
        }
        videos.push(validate_and_finish(new_id as u32 + 1, frames)?);
    }
    Ok(VideoLibrary { videos })
}

fn parse_video_name(name: &str, kind: &str) -> Option<(u32, usize)> {
    let rest = name.strip_prefix("vid")?;
    let rest = rest.strip_suffix(&format!("_{kind}.nrrd"))?;
    let (id, frame) = rest.split_once("_t")?;
    Some((id.parse().ok()?, frame.parse().ok()?))
}
