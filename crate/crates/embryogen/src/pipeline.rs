//! Stage orchestration. `full` is literally `simulate` → `render` → `acquire`
//! through the same on-disk artifacts, so staged and monolithic execution are
//! bit-identical by construction.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dynamics::{self, PopulationState, SimObject};
use crate::error::{Error, Result};
use crate::guide::{self, GuideSequence};
use crate::imaging::acquire::acquire;
use crate::imaging::raster::{rasterize_frame, VolumeSpec};
use crate::imaging::video::{self, VideoLibrary};
use crate::io::config::{GuideSource, SimulationConfig, VideoSource};
use crate::io::manifest::Manifest;
use crate::io::nrrd::{self, NrrdType};
use crate::io::table::{self, ObjectTableRow};

pub const GUIDE_FILE: &str = "guide.csv";
pub const LOG_FILE: &str = "run.log";

pub fn objects_file(frame: usize) -> String {
    format!("objects_t{frame:04}.csv")
}
pub fn raw_file(frame: usize) -> String {
    format!("t{frame:04}_raw.nrrd")
}
pub fn label_file(frame: usize) -> String {
    format!("t{frame:04}_label.nrrd")
}
pub fn final_file(frame: usize) -> String {
    format!("t{frame:04}_final.nrrd")
}
pub fn final_view2_file(frame: usize) -> String {
    format!("t{frame:04}_final_view2.nrrd")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Frame subrange [a, b) for render/acquire; overrides the config.
    pub frames: Option<[usize; 2]>,
    /// Per-frame progress lines on standard error.
    pub progress: bool,
}

fn load_or_make_guide(cfg: &SimulationConfig) -> Result<GuideSequence> {
    match &cfg.guide {
        GuideSource::File(path) => guide::load_guide(path, cfg.dynamics.r_max_um),
        GuideSource::Generate(spec) => {
            guide::synthesize_guide(spec, cfg.seed, cfg.dynamics.r_max_um)
        }
    }
}

fn load_or_make_videos(cfg: &SimulationConfig) -> Result<VideoLibrary> {
    match &cfg.videos {
        VideoSource::Dir(dir) => video::load_object_videos(dir),
        VideoSource::Generate(g) => video::synthesize_library(&g.gen_spec(), g.count, cfg.seed),
    }
}

fn volume_spec(cfg: &SimulationConfig, guide: &GuideSequence) -> VolumeSpec {
    VolumeSpec {
        dims: cfg.volume.dims,
        spacing: cfg.volume.spacing_um,
        origin: guide.bounds.min,
    }
}

fn frame_range(cfg: &SimulationConfig, opts: &RunOptions, total: usize) -> Result<(usize, usize)> {
    let range = opts.frames.or(cfg.frames).unwrap_or([0, total]);
    let [a, b] = range;
    if a >= b || b > total {
        return Err(Error::config(format!(
            "frame range {a}..{b} does not fit the {total} available frames"
        )));
    }
    Ok((a, b))
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn write_manifest(cfg: &SimulationConfig, out: &Path) -> Result<()> {
    Manifest::scan(out, cfg.seed, cfg.to_value())?.write(out)
}

fn rows_from_state(state: &PopulationState, spec: &VolumeSpec) -> Vec<ObjectTableRow> {
    let mut objects: Vec<&SimObject> = state.objects.iter().collect();
    objects.sort_by_key(|o| o.id);
    objects
        .iter()
        .map(|o| {
            let v = spec.voxel_of(o.position);
            ObjectTableRow {
                frame: state.frame_index,
                id: o.id,
                parent_id: o.parent_id,
                x: o.position[0],
                y: o.position[1],
                z: o.position[2],
                vx: v[0],
                vy: v[1],
                vz: v[2],
                radius: o.radius,
                cycle_state: o.cycle_state,
                cycle_length: o.cycle_length,
                video_id: o.video_id,
                labeled_voxels: 0,
                clipped: false,
            }
        })
        .collect()
}

fn object_from_row(r: &ObjectTableRow) -> SimObject {
    SimObject {
        id: r.id,
        position: [r.x, r.y, r.z],
        radius: r.radius,
        cycle_length: r.cycle_length,
        cycle_state: r.cycle_state,
        video_id: r.video_id,
        parent_id: r.parent_id,
        birth_frame: 0,
    }
}

/// Run the dynamics over every guide frame, emitting `guide.csv`, one object
/// table per frame, `run.log` and a manifest.
pub fn run_simulate(cfg: &SimulationConfig, out: &Path, opts: &RunOptions) -> Result<()> {
    ensure_out_dir(out)?;
    let guide = load_or_make_guide(cfg).map_err(|e| e.at_stage("simulate", 0))?;
    guide::write_guide(&guide, &out.join(GUIDE_FILE))?;
    let videos = load_or_make_videos(cfg).map_err(|e| e.at_stage("simulate", 0))?;
    let axes = videos.division_axes();

    let dyn_cfg = cfg.dynamics_config(videos.n_videos());
    let mut model = cfg.division_model();
    model.p = cfg.coupling_fraction(guide.frames[0].cells.len());
    model.validate()?;

    let spec = volume_spec(cfg, &guide);
    let total = guide.frames.len();

    let mut state = dynamics::initialize_population(&guide, cfg.initial_count(), &dyn_cfg)
        .map_err(|e| e.at_stage("simulate", 0))?;
    table::write_object_table(&rows_from_state(&state, &spec), &out.join(objects_file(0)))?;

    let mut log = String::new();
    writeln!(
        log,
        "frame=0 n_embryo={} n_sim={} n_div_requested=0 n_div_performed=0 shortfall=0",
        guide.frames[0].cells.len(),
        state.objects.len()
    )
    .expect("string write");

    for k in 0..total - 1 {
        let report = dynamics::step(&mut state, &guide, &model, &dyn_cfg, Some(&axes))
            .map_err(|e| e.at_stage("simulate", k + 1))?;
        table::write_object_table(
            &rows_from_state(&state, &spec),
            &out.join(objects_file(report.frame)),
        )
        .map_err(|e| e.at_stage("simulate", report.frame))?;
        writeln!(
            log,
            "frame={} n_embryo={} n_sim={} n_div_requested={} n_div_performed={} shortfall={}",
            report.frame,
            report.n_embryo,
            report.n_sim,
            report.n_div_requested,
            report.n_div_performed,
            report.shortfall
        )
        .expect("string write");
        if opts.progress {
            eprintln!("[simulate] frame {}/{} objects={}", report.frame, total - 1, report.n_sim);
        }
    }

    let log_path = out.join(LOG_FILE);
    std::fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;
    write_manifest(cfg, out)
}

/// Rasterize the object tables into raw and label volumes and fill the
/// per-object voxel counts and clipping flags back into the tables.
pub fn run_render(cfg: &SimulationConfig, out: &Path, opts: &RunOptions) -> Result<()> {
    let guide_path = out.join(GUIDE_FILE);
    if !guide_path.exists() {
        return Err(Error::config(format!(
            "{} not found; run the simulate stage first",
            guide_path.display()
        )));
    }
    let guide = guide::load_guide(&guide_path, cfg.dynamics.r_max_um)?;
    let videos = load_or_make_videos(cfg).map_err(|e| e.at_stage("render", 0))?;
    let spec = volume_spec(cfg, &guide);
    let (a, b) = frame_range(cfg, opts, guide.frames.len())?;

    (a..b).into_par_iter().try_for_each(|frame| -> Result<()> {
        let render = |frame: usize| -> Result<()> {
            let table_path = out.join(objects_file(frame));
            let mut rows = table::read_object_table(&table_path)?;
            let objects: Vec<SimObject> = rows.iter().map(object_from_row).collect();
            let products = rasterize_frame(&objects, &videos, &spec)?;

            nrrd::write_volume(&products.raw.quantized(16), &out.join(raw_file(frame)), NrrdType::Uint16)?;
            nrrd::write_volume(&products.label, &out.join(label_file(frame)), NrrdType::Uint16)?;

            for (row, rec) in rows.iter_mut().zip(&products.records) {
                debug_assert_eq!(row.id, rec.id);
                row.labeled_voxels = rec.labeled_voxels;
                row.clipped = rec.clipped;
            }
            table::write_object_table(&rows, &table_path)
        };
        let result = render(frame).map_err(|e| e.at_stage("render", frame));
        if result.is_ok() && opts.progress {
            eprintln!("[render] frame {frame}");
        }
        result
    })?;
    write_manifest(cfg, out)
}

fn raw_frames_present(out: &Path) -> Result<Vec<usize>> {
    let mut frames = Vec::new();
    let entries = std::fs::read_dir(out).map_err(|e| Error::io(out, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(out, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(rest) = name.strip_prefix('t') {
            if let Some(stem) = rest.strip_suffix("_raw.nrrd") {
                if let Ok(frame) = stem.parse::<usize>() {
                    frames.push(frame);
                }
            }
        }
    }
    frames.sort_unstable();
    Ok(frames)
}

/// Degrade the raw volumes into final acquisitions (one or two views).
pub fn run_acquire(cfg: &SimulationConfig, out: &Path, opts: &RunOptions) -> Result<()> {
    let acq = cfg.acquisition_config()?;
    let present = raw_frames_present(out)?;
    if present.is_empty() {
        return Err(Error::config(format!(
            "no raw volumes in {}; run the render stage first",
            out.display()
        )));
    }
    let total = present.last().unwrap() + 1;
    let (a, b) = frame_range(cfg, opts, total)?;
    let frames: Vec<usize> = present.into_iter().filter(|f| (a..b).contains(f)).collect();

    frames.par_iter().try_for_each(|&frame| -> Result<()> {
        let step = |frame: usize| -> Result<()> {
            let (raw, _) = nrrd::read_volume(&out.join(raw_file(frame)))?;
            let (view1, view2) = acquire(&raw, &acq, cfg.seed, frame)?;
            nrrd::write_volume(&view1, &out.join(final_file(frame)), NrrdType::Uint16)?;
            if let Some(v2) = view2 {
                nrrd::write_volume(&v2, &out.join(final_view2_file(frame)), NrrdType::Uint16)?;
            }
            Ok(())
        };
        let result = step(frame).map_err(|e| e.at_stage("acquire", frame));
        if result.is_ok() && opts.progress {
            eprintln!("[acquire] frame {frame}");
        }
        result
    })?;
    write_manifest(cfg, out)
}

/// The whole pipeline, stage by stage through the same files the staged
/// subcommands use.
pub fn run_full(cfg: &SimulationConfig, out: &Path, opts: &RunOptions) -> Result<()> {
    run_simulate(cfg, out, opts)?;
    run_render(cfg, out, opts)?;
    run_acquire(cfg, out, opts)
}

/// Emit the guide-cell tracks (generated or re-exported) as `guide.csv`.
pub fn run_make_guide(cfg: &SimulationConfig, out: &Path) -> Result<PathBuf> {
    ensure_out_dir(out)?;
    let guide = load_or_make_guide(cfg)?;
    let path = out.join(GUIDE_FILE);
    guide::write_guide(&guide, &path)?;
    Ok(path)
}

/// Emit the object-video library as NRRD pairs in the output directory.
pub fn run_make_videos(cfg: &SimulationConfig, out: &Path) -> Result<()> {
    ensure_out_dir(out)?;
    let videos = load_or_make_videos(cfg)?;
    video::write_library(&videos, out)
}
