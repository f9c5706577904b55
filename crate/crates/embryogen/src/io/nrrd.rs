//! Detached-header NRRD volumes: `<name>.nrrd` carries the text header and
//! points at `<name>.raw` holding little-endian voxel data, x fastest.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrrdType {
    Uint16,
    Float32,
}

impl NrrdType {
    fn name(self) -> &'static str {
        match self {
            NrrdType::Uint16 => "uint16",
            NrrdType::Float32 => "float",
        }
    }

    fn byte_width(self) -> usize {
        match self {
            NrrdType::Uint16 => 2,
            NrrdType::Float32 => 4,
        }
    }
}

fn raw_path(header_path: &Path) -> Result<std::path::PathBuf> {
    if header_path.extension().and_then(|e| e.to_str()) != Some("nrrd") {
        return Err(Error::validation(format!(
            "volume path must end in .nrrd: {}",
            header_path.display()
        )));
    }
    Ok(header_path.with_extension("raw"))
}

pub fn write_volume(v: &Volume, path: &Path, ty: NrrdType) -> Result<()> {
    let raw = raw_path(path)?;
    let raw_name = raw
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::validation(format!("bad volume path {}", path.display())))?;

    let header = format!(
        "NRRD0004\n\
         type: {}\n\
         dimension: 3\n\
         sizes: {} {} {}\n\
         spacings: {} {} {}\n\
         encoding: raw\n\
         endian: little\n\
         data file: {}\n",
        ty.name(),
        v.dims[0],
        v.dims[1],
        v.dims[2],
        v.spacing[0],
        v.spacing[1],
        v.spacing[2],
        raw_name
    );

    let mut bytes = Vec::with_capacity(v.data.len() * ty.byte_width());
    match ty {
        NrrdType::Uint16 => {
            for &x in &v.data {
                if !(0.0..=65535.0).contains(&x) || x.fract() != 0.0 {
                    return Err(Error::validation(format!(
                        "value {x} does not fit uint16; quantize before writing"
                    )));
                }
                bytes.extend_from_slice(&(x as u16).to_le_bytes());
            }
        }
        NrrdType::Float32 => {
            for &x in &v.data {
                bytes.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
    }

    fs::write(path, header).map_err(|e| Error::io(path, e))?;
    fs::write(&raw, bytes).map_err(|e| Error::io(&raw, e))?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<(Volume, NrrdType)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    match lines.next() {
        Some((_, magic)) if magic.starts_with("NRRD") => {}
        _ => return Err(parse_err(1, "missing NRRD magic".into())),
    }

    let mut ty = None;
    let mut sizes = None;
    let mut spacings = None;
    let mut data_file = None;
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| parse_err(i + 1, format!("malformed field `{line}`")))?;
        let value = value.trim();
        match key.trim() {
            "type" => {
                ty = Some(match value {
                    "uint16" | "unsigned short" => NrrdType::Uint16,
                    "float" => NrrdType::Float32,
                    other => return Err(parse_err(i + 1, format!("unsupported type {other}"))),
                })
            }
            "dimension" => {
                if value != "3" {
                    return Err(parse_err(i + 1, format!("expected dimension 3, got {value}")));
                }
            }
            "sizes" => {
                let v: Vec<usize> = value
                    .split_whitespace()
                    .map(|t| t.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(i + 1, format!("bad sizes: {e}")))?;
                if v.len() != 3 {
                    return Err(parse_err(i + 1, "sizes must have 3 entries".into()));
                }
                sizes = Some([v[0], v[1], v[2]]);
            }
            "spacings" => {
                let v: Vec<f64> = value
                    .split_whitespace()
                    .map(|t| t.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(i + 1, format!("bad spacings: {e}")))?;
                if v.len() != 3 {
                    return Err(parse_err(i + 1, "spacings must have 3 entries".into()));
                }
                spacings = Some([v[0], v[1], v[2]]);
            }
            "encoding" => {
                if value != "raw" {
                    return Err(parse_err(i + 1, format!("unsupported encoding {value}")));
                }
            }
            "endian" => {
                if value != "little" {
                    return Err(parse_err(i + 1, format!("unsupported endian {value}")));
                }
            }
            "data file" => data_file = Some(value.to_string()),
            _ => {} // tolerate extra fields
        }
    }

    let ty = ty.ok_or_else(|| parse_err(0, "missing type field".into()))?;
    let dims = sizes.ok_or_else(|| parse_err(0, "missing sizes field".into()))?;
    let spacing = spacings.ok_or_else(|| parse_err(0, "missing spacings field".into()))?;
    let data_file = data_file.ok_or_else(|| parse_err(0, "missing data file field".into()))?;

    let raw = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&data_file);
    let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    let n = dims[0] * dims[1] * dims[2];
    let expected = n * ty.byte_width();
    if bytes.len() != expected {
        return Err(Error::validation(format!(
            "{}: expected {expected} bytes for {}×{}×{} {}, found {}",
            raw.display(),
            dims[0],
            dims[1],
            dims[2],
            ty.name(),
            bytes.len()
        )));
    }

    let mut data = Vec::with_capacity(n);
    match ty {
        NrrdType::Uint16 => {
            for chunk in bytes.chunks_exact(2) {
                data.push(u16::from_le_bytes([chunk[0], chunk[1]]) as f64);
            }
        }
        NrrdType::Float32 => {
            for chunk in bytes.chunks_exact(4) {
                data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64);
            }
        }
    }
    Ok((Volume::from_data(dims, spacing, data)?, ty))
}
