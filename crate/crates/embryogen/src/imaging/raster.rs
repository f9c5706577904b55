//! Rasterize simulated objects into raw and label volumes.
//!
//! Each object selects its video frame by cycle progress, scales the video so
//! the nucleus radius matches the object radius (trilinear interpolation),
//! composites intensity by voxelwise maximum and claims label voxels wherever
//! its scaled mask is set. Overlaps go to the larger intensity contribution,
//! ties to the lower id.

use std::collections::HashMap;

use crate::dynamics::SimObject;
use crate::error::Result;
use crate::geom::Vec3;
use crate::imaging::video::VideoLibrary;
use crate::imaging::volume::Volume;

/// Geometry of the output volumes. `origin` is the µm position of the center
/// of voxel (0, 0, 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: Vec3,
}

impl VolumeSpec {
    pub fn voxel_of(&self, p: Vec3) -> Vec3 {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }
}

/// Per-object ground truth emitted alongside the volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub position: Vec3,
    pub voxel_position: Vec3,
    pub radius: f64,
    pub cycle_state: u32,
    pub cycle_length: u32,
    pub video_id: u32,
    pub labeled_voxels: usize,
    pub clipped: bool,
}

#[derive(Debug, Clone)]
pub struct FrameProducts {
    /// Pre-degradation intensity volume.
    pub raw: Volume,
    /// Integer object ids, 0 = background.
    pub label: Volume,
    pub records: Vec<ObjectRecord>,
}

/// Video frame index for cycle progress: round((s−1)/(l−1)·(F−1)).
fn video_frame_index(cycle_state: u32, cycle_length: u32, n_frames: usize) -> usize {
    if cycle_length <= 1 {
        return n_frames - 1;
    }
    let t = (cycle_state.min(cycle_length) - 1) as f64 / (cycle_length - 1) as f64;
    (t * (n_frames - 1) as f64).round() as usize
}

pub fn rasterize_frame(
    objects: &[SimObject],
    lib: &VideoLibrary,
    spec: &VolumeSpec,
) -> Result<FrameProducts> {
    let mut raw = Volume::zeros(spec.dims, spec.spacing)?;
    let mut label = Volume::zeros(spec.dims, spec.spacing)?;
    let mut best = vec![0.0f64; raw.data.len()];

    let mut order: Vec<&SimObject> = objects.iter().collect();
    order.sort_by_key(|o| o.id);

    let mut clipped_flags: HashMap<u64, bool> = HashMap::new();
    for obj in &order {
        let video = lib.get(obj.video_id)?;
        let vf = video_frame_index(obj.cycle_state, obj.cycle_length, video.frames.len());
        let (intensity, mask) = &video.frames[vf];

        // voxels of this video per output voxel, per axis
        let scale = [
            (obj.radius / spec.spacing[0]) / video.base_radius_vox,
            (obj.radius / spec.spacing[1]) / video.base_radius_vox,
            (obj.radius / spec.spacing[2]) / video.base_radius_vox,
        ];
        let center = spec.voxel_of(obj.position);
        let vid_center = [
            (intensity.dims[0] - 1) as f64 / 2.0,
            (intensity.dims[1] - 1) as f64 / 2.0,
            (intensity.dims[2] - 1) as f64 / 2.0,
        ];

        // output bounding box covering the scaled video extent
        let mut full_lo = [0isize; 3];
        let mut full_hi = [0isize; 3];
        let mut lo = [0isize; 3];
        let mut hi = [0isize; 3];
        for a in 0..3 {
            let half = vid_center[a] * scale[a];
            full_lo[a] = (center[a] - half).ceil() as isize;
            full_hi[a] = (center[a] + half).floor() as isize;
            lo[a] = full_lo[a].max(0);
            hi[a] = full_hi[a].min(spec.dims[a] as isize - 1);
        }

        // clipped = some mask voxel falls outside the volume; only the part
        // of the bounding box sticking out needs checking
        let mut clipped = false;
        if full_lo != lo || full_hi != hi {
            'scan: for z in full_lo[2]..=full_hi[2] {
                for y in full_lo[1]..=full_hi[1] {
                    for x in full_lo[0]..=full_hi[0] {
                        let inside = (lo[0]..=hi[0]).contains(&x)
                            && (lo[1]..=hi[1]).contains(&y)
                            && (lo[2]..=hi[2]).contains(&z);
                        if inside {
                            continue;
                        }
                        let w = [
                            vid_center[0] + (x as f64 - center[0]) / scale[0],
                            vid_center[1] + (y as f64 - center[1]) / scale[1],
                            vid_center[2] + (z as f64 - center[2]) / scale[2],
                        ];
                        if mask.sample_trilinear(w) >= 0.5 {
                            clipped = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
        clipped_flags.insert(obj.id, clipped);
        if (0..3).any(|a| lo[a] > hi[a]) {
            continue; // fully outside
        }

        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let w = [
                        vid_center[0] + (x as f64 - center[0]) / scale[0],
                        vid_center[1] + (y as f64 - center[1]) / scale[1],
                        vid_center[2] + (z as f64 - center[2]) / scale[2],
                    ];
                    let value = intensity.sample_trilinear(w);
                    if value <= 0.0 {
                        continue;
                    }
                    let i = raw.idx(x as usize, y as usize, z as usize);
                    if value > raw.data[i] {
                        raw.data[i] = value;
                    }
                    if mask.sample_trilinear(w) >= 0.5 && value > best[i] {
                        best[i] = value;
                        label.data[i] = obj.id as f64;
                    }
                }
            }
        }
    }

    let mut voxel_counts: HashMap<u64, usize> = HashMap::new();
    for &l in &label.data {
        if l > 0.0 {
            *voxel_counts.entry(l as u64).or_insert(0) += 1;
        }
    }

    let records = order
        .iter()
        .map(|obj| ObjectRecord {
            id: obj.id,
            parent_id: obj.parent_id,
            position: obj.position,
            voxel_position: spec.voxel_of(obj.position),
            radius: obj.radius,
            cycle_state: obj.cycle_state,
            cycle_length: obj.cycle_length,
            video_id: obj.video_id,
            labeled_voxels: voxel_counts.get(&obj.id).copied().unwrap_or(0),
            clipped: clipped_flags[&obj.id],
        })
        .collect();

    Ok(FrameProducts {
        raw,
        label,
        records,
    })
}

/// Centroid of the labeled region of `id`, in voxel coordinates.
pub fn label_centroid(label: &Volume, id: u64) -> Option<Vec3> {
    let mut sum = [0.0f64; 3];
    let mut n = 0usize;
    for z in 0..label.dims[2] {
        for y in 0..label.dims[1] {
            for x in 0..label.dims[0] {
                if label.at(x, y, z) == id as f64 {
                    sum[0] += x as f64;
                    sum[1] += y as f64;
                    sum[2] += z as f64;
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        None
    } else {
        Some([sum[0] / n as f64, sum[1] / n as f64, sum[2] / n as f64])
    }
}
