//! Volume rasterization and the simulated acquisition chain.

pub mod acquire;
pub mod raster;
pub mod video;
pub mod volume;

pub use acquire::{
    acquire, add_dark_current, add_gaussian_noise, apply_shot_noise, attenuate, AcquisitionConfig,
    AttenuationMode,
};
pub use raster::{rasterize_frame, FrameProducts, ObjectRecord, VolumeSpec};
pub use video::{
    load_object_videos, synthesize_library, synthesize_object_video, ObjectVideo, VideoGenSpec,
    VideoLibrary,
};
pub use volume::{convolve_psf, gaussian_psf, Volume};
