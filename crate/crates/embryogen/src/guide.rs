//! The guide embryo: per-frame point clouds with displacement vectors that
//! act as the motion prior for the simulated population.
//!
//! A guide is either loaded from a CSV export of real tracked-embryo data or
//! synthesized procedurally (an expanding spherical-cap shell of cells,
//! echoing zebrafish epiboly).

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Vec3};
use crate::rng;
use crate::spatial::SpatialIndex;

pub const GUIDE_CSV_HEADER: &str = "frame,id,x,y,z,dx,dy,dz";

/// One tracked cell at one frame. `displacement` points to the next frame
/// (x(k+1) − x(k)); a cell ending its track carries zeros.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuideCell {
    pub id: u64,
    pub position: Vec3,
    pub displacement: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuideFrame {
    pub frame_index: usize,
    pub cells: Vec<GuideCell>,
}

impl GuideFrame {
    pub fn spatial_index(&self) -> Result<SpatialIndex> {
        SpatialIndex::build(self.cells.iter().map(|c| (c.id, c.position)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuideSequence {
    pub frames: Vec<GuideFrame>,
    /// Tight box over all positions, expanded by the configured maximum cell
    /// radius so nuclei rendered at the hull are not clipped.
    pub bounds: Aabb,
}

impl GuideSequence {
    /// Validate frames and compute bounds with `pad` (= r_max) on each side.
    pub fn new(frames: Vec<GuideFrame>, pad: f64) -> Result<GuideSequence> {
        if frames.is_empty() {
            return Err(Error::validation("guide sequence has no frames"));
        }
        for (k, frame) in frames.iter().enumerate() {
            if frame.frame_index != k {
                return Err(Error::validation(format!("missing frame {k}")));
            }
            if frame.cells.is_empty() {
                return Err(Error::validation(format!("frame {k} has no cells")));
            }
            let mut ids: Vec<u64> = frame.cells.iter().map(|c| c.id).collect();
            ids.sort_unstable();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::validation(format!("duplicate cell id in frame {k}")));
            }
            for c in &frame.cells {
                if !geom::is_finite(c.position) || !geom::is_finite(c.displacement) {
                    return Err(Error::validation(format!(
                        "non-finite cell {} in frame {k}",
                        c.id
                    )));
                }
            }
        }
        let bounds = Aabb::from_points(frames.iter().flat_map(|f| f.cells.iter().map(|c| &c.position)))
            .expect("non-empty")
            .expanded(pad);
        Ok(GuideSequence { frames, bounds })
    }
}

/// Load a guide from the CSV contract (`frame,id,x,y,z,dx,dy,dz`).
pub fn load_guide(path: &Path, r_max: f64) -> Result<GuideSequence> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == GUIDE_CSV_HEADER => {}
        Some((_, h)) => {
            return Err(parse_err(1, format!("expected header `{GUIDE_CSV_HEADER}`, got `{h}`")))
        }
        None => return Err(parse_err(1, "empty file".into())),
    }

    let mut by_frame: Vec<(usize, Vec<GuideCell>)> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(parse_err(lineno, format!("expected 8 fields, got {}", fields.len())));
        }
        let frame: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad frame index `{}`", fields[0])))?;
        let id: u64 = fields[1]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad cell id `{}`", fields[1])))?;
        let mut vals = [0.0f64; 6];
        for (j, v) in vals.iter_mut().enumerate() {
            *v = fields[j + 2].parse().map_err(|_| {
                parse_err(lineno, format!("bad numeric field `{}`", fields[j + 2]))
            })?;
        }
        let cell = GuideCell {
            id,
            position: [vals[0], vals[1], vals[2]],
            displacement: [vals[3], vals[4], vals[5]],
        };
        match by_frame.iter_mut().find(|(k, _)| *k == frame) {
            Some((_, cells)) => cells.push(cell),
            None => by_frame.push((frame, vec![cell])),
        }
    }

    by_frame.sort_by_key(|(k, _)| *k);
    let mut frames = Vec::with_capacity(by_frame.len());
    for (expect, (k, cells)) in by_frame.into_iter().enumerate() {
        if k != expect {
            return Err(Error::validation(format!("missing frame {expect}")));
        }
        frames.push(GuideFrame {
            frame_index: k,
            cells,
        });
    }
    GuideSequence::new(frames, r_max)
}

/// Write a guide back to the CSV contract. Float fields use the shortest
/// representation that round-trips exactly.
pub fn write_guide(seq: &GuideSequence, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(64 * seq.frames.iter().map(|f| f.cells.len()).sum::<usize>());
    out.push_str(GUIDE_CSV_HEADER);
    out.push('\n');
    for frame in &seq.frames {
        for c in &frame.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                frame.frame_index,
                c.id,
                c.position[0],
                c.position[1],
                c.position[2],
                c.displacement[0],
                c.displacement[1],
                c.displacement[2],
            ));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parameters of the procedural guide generator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuideGenSpec {
    pub frames: usize,
    pub initial_cells: usize,
    /// Per-frame cell count growth factor (≥ 1); count_k = round(n0·g^k).
    pub growth: f64,
    pub shell_radius_um: f64,
    pub shell_thickness_um: f64,
    /// Per-frame random-walk magnitude in µm.
    pub jitter_um: f64,
    /// Polar half-angle of the cap at the first frame, degrees.
    #[serde(default = "default_cap_start")]
    pub cap_start_deg: f64,
    /// Polar half-angle at the last frame, degrees (the cap spreads downward).
    #[serde(default = "default_cap_end")]
    pub cap_end_deg: f64,
    /// Minimum distance between cells at spawn time, µm (0 = unconstrained).
    #[serde(default)]
    pub min_spacing_um: f64,
}

fn default_cap_start() -> f64 {
    70.0
}

fn default_cap_end() -> f64 {
    150.0
}

impl GuideGenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::validation("guide generator needs at least 2 frames"));
        }
        if self.initial_cells < 8 {
            return Err(Error::validation("guide generator needs at least 8 initial cells"));
        }
        if self.growth < 1.0 {
            return Err(Error::validation("guide growth factor must be >= 1"));
        }
        if self.shell_radius_um <= 0.0 || self.shell_thickness_um < 0.0 {
            return Err(Error::validation("guide shell radius must be positive"));
        }
        if self.jitter_um < 0.0 {
            return Err(Error::validation("guide jitter must be >= 0"));
        }
        if self.min_spacing_um < 0.0 {
            return Err(Error::validation("guide minimum spacing must be >= 0"));
        }
        if !(self.cap_start_deg > 0.0 && self.cap_start_deg <= self.cap_end_deg && self.cap_end_deg <= 180.0)
        {
            return Err(Error::validation("guide cap angles must satisfy 0 < start <= end <= 180"));
        }
        Ok(())
    }
}

struct Track {
    id: u64,
    /// Relative polar position within the cap, fixed over the track.
    u: f64,
    azimuth: f64,
    radial: f64,
    spawn_frame: usize,
    walk: Vec3,
    positions: Vec<Vec3>,
}

/// Synthesize a guide: cells on a spherical-cap shell that spreads downward
/// over time while the population grows. Pure function of `(spec, seed)`.
pub fn synthesize_guide(spec: &GuideGenSpec, seed: u64, r_max: f64) -> Result<GuideSequence> {
    spec.validate()?;
    let mut rng = rng::stream(seed, &[rng::domain::GUIDE]);
    let f = spec.frames;
    let theta0 = spec.cap_start_deg.to_radians();
    let theta1 = spec.cap_end_deg.to_radians();

    let shell_position = |u: f64, azimuth: f64, radial: f64, theta_max: f64| -> Vec3 {
        let theta = u * theta_max;
        [
            radial * theta.sin() * azimuth.cos(),
            radial * theta.sin() * azimuth.sin(),
            radial * theta.cos(),
        ]
    };

    let mut tracks: Vec<Track> = Vec::new();
    let mut next_id: u64 = 0;
    for k in 0..f {
        let theta_max = theta0 + (theta1 - theta0) * k as f64 / (f - 1) as f64;

        // advance existing tracks to frame k
        let mut current: Vec<Vec3> = Vec::new();
        for t in tracks.iter_mut() {
            if t.spawn_frame < k {
                let j = spec.jitter_um;
                if j > 0.0 {
                    t.walk = geom::add(
                        t.walk,
                        [
                            rng.gen_range(-j..j),
                            rng.gen_range(-j..j),
                            rng.gen_range(-j..j),
                        ],
                    );
                }
            }
            let pos = geom::add(shell_position(t.u, t.azimuth, t.radial, theta_max), t.walk);
            t.positions.push(pos);
            current.push(pos);
        }

        // spawn new tracks, dart-throwing against the current frame when a
        // minimum spacing is requested
        let target = (spec.initial_cells as f64 * spec.growth.powi(k as i32)).round() as usize;
        let spacing2 = spec.min_spacing_um * spec.min_spacing_um;
        let mut attempts_left = 1000 * target.max(1);
        while tracks.len() < target {
            let u: f64 = rng.gen_range(0.0..1.0f64).sqrt(); // area-uniform in the cap
            let azimuth = rng.gen_range(0.0..std::f64::consts::TAU);
            let radial =
                spec.shell_radius_um + rng.gen_range(-0.5..0.5) * spec.shell_thickness_um;
            let pos = shell_position(u, azimuth, radial, theta_max);
            if spacing2 > 0.0 {
                if attempts_left == 0 {
                    return Err(Error::validation(format!(
                        "could not place {target} cells with {} µm spacing on the shell; \
                         enlarge the cap or reduce min_spacing_um",
                        spec.min_spacing_um
                    )));
                }
                attempts_left -= 1;
                if current.iter().any(|&q| geom::dist2(pos, q) < spacing2) {
                    continue;
                }
            }
            tracks.push(Track {
                id: next_id,
                u,
                azimuth,
                radial,
                spawn_frame: k,
                walk: [0.0; 3],
                positions: vec![pos],
            });
            current.push(pos);
            next_id += 1;
        }
    }

    let mut frames = Vec::with_capacity(f);
    for k in 0..f {
        let mut cells = Vec::new();
        for t in &tracks {
            if t.spawn_frame > k {
                continue;
            }
            let local = k - t.spawn_frame;
            let position = t.positions[local];
            let displacement = if local + 1 < t.positions.len() {
                geom::sub(t.positions[local + 1], position)
            } else {
                [0.0; 3]
            };
            cells.push(GuideCell {
                id: t.id,
                position,
                displacement,
            });
        }
        frames.push(GuideFrame {
            frame_index: k,
            cells,
        });
    }
    GuideSequence::new(frames, r_max)
}
