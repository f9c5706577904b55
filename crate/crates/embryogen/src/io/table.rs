//! Object ground-truth tables (CSV, one file per frame or combined).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const OBJECT_TABLE_HEADER: &str =
    "frame,id,parent_id,x,y,z,vx,vy,vz,radius,cycle_state,cycle_length,video_id,labeled_voxels,clipped";

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTableRow {
    pub frame: usize,
    pub id: u64,
    /// Empty in the file for founder cells.
    pub parent_id: Option<u64>,
    /// Position, µm.
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Position, voxels.
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    /// Nucleus radius, µm.
    pub radius: f64,
    pub cycle_state: u32,
    pub cycle_length: u32,
    pub video_id: u32,
    pub labeled_voxels: usize,
    pub clipped: bool,
}

pub fn write_object_table(rows: &[ObjectTableRow], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(OBJECT_TABLE_HEADER);
    out.push('\n');
    for r in rows {
        let parent = r.parent_id.map(|p| p.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.frame,
            r.id,
            parent,
            r.x,
            r.y,
            r.z,
            r.vx,
            r.vy,
            r.vz,
            r.radius,
            r.cycle_state,
            r.cycle_length,
            r.video_id,
            r.labeled_voxels,
            r.clipped as u8
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_object_table(path: &Path) -> Result<Vec<ObjectTableRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == OBJECT_TABLE_HEADER => {}
        other => {
            return Err(parse_err(
                1,
                format!("expected header `{OBJECT_TABLE_HEADER}`, found {:?}", other.map(|(_, l)| l)),
            ));
        }
    }

    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 15 {
            return Err(parse_err(line_no, format!("expected 15 fields, found {}", fields.len())));
        }
        fn num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            s.parse().map_err(|e| format!("`{s}`: {e}"))
        }
        let field = |idx: usize| fields[idx];
        let row = ObjectTableRow {
            frame: num(field(0)).map_err(|m| parse_err(line_no, m))?,
            id: num(field(1)).map_err(|m| parse_err(line_no, m))?,
            parent_id: if field(2).is_empty() {
                None
            } else {
                Some(num(field(2)).map_err(|m| parse_err(line_no, m))?)
            },
            x: num(field(3)).map_err(|m| parse_err(line_no, m))?,
            y: num(field(4)).map_err(|m| parse_err(line_no, m))?,
            z: num(field(5)).map_err(|m| parse_err(line_no, m))?,
            vx: num(field(6)).map_err(|m| parse_err(line_no, m))?,
            vy: num(field(7)).map_err(|m| parse_err(line_no, m))?,
            vz: num(field(8)).map_err(|m| parse_err(line_no, m))?,
            radius: num(field(9)).map_err(|m| parse_err(line_no, m))?,
            cycle_state: num(field(10)).map_err(|m| parse_err(line_no, m))?,
            cycle_length: num(field(11)).map_err(|m| parse_err(line_no, m))?,
            video_id: num(field(12)).map_err(|m| parse_err(line_no, m))?,
            labeled_voxels: num(field(13)).map_err(|m| parse_err(line_no, m))?,
            clipped: match field(14) {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(line_no, format!("clipped must be 0 or 1, found `{other}`"))),
            },
        };
        if let Some(p) = row.parent_id {
            if p >= row.id {
                return Err(parse_err(
                    line_no,
                    format!("parent_id {p} must reference an earlier-born id than {}", row.id),
                ));
            }
        }
        if !seen.insert((row.frame, row.id)) {
            return Err(parse_err(
                line_no,
                format!("duplicate (frame, id) = ({}, {})", row.frame, row.id),
            ));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sample_rows(n: usize) -> Vec<ObjectTableRow> {
        let mut rng = crate::rng::stream(21, &[0xC0]);
        (0..n)
            .map(|i| ObjectTableRow {
                frame: i / 50,
                id: (i % 50) as u64 + 1 + (i / 50) as u64 * 100,
                parent_id: if i % 3 == 0 { None } else { Some((i % 50) as u64) },
                x: rng.gen_range(-100.0..100.0),
                y: rng.gen_range(-100.0..100.0),
                z: rng.gen_range(-100.0..100.0),
                vx: rng.gen_range(0.0..512.0),
                vy: rng.gen_range(0.0..512.0),
                vz: rng.gen_range(0.0..128.0),
                radius: rng.gen_range(7.0..10.0),
                cycle_state: rng.gen_range(1..56),
                cycle_length: 56,
                video_id: rng.gen_range(1..57),
                labeled_voxels: rng.gen_range(0..30000),
                clipped: rng.gen_bool(0.1),
            })
            .collect()
    }

    #[test]
    fn round_trip_is_identity_for_a_thousand_rows() {
        let dir = tempfile::tempdir().unwrap();
        let rows = sample_rows(1000);
        let path = dir.path().join("objects.csv");
        write_object_table(&rows, &path).unwrap();
        assert_eq!(read_object_table(&path).unwrap(), rows);
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("objects.csv");
        write_object_table(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{OBJECT_TABLE_HEADER}\n"));
        assert!(read_object_table(&path).unwrap().is_empty());
    }

    #[test]
    fn later_born_parent_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("objects.csv");
        let mut rows = sample_rows(1);
        rows[0].parent_id = Some(rows[0].id + 5);
        write_object_table(&rows, &path).unwrap();
        let err = read_object_table(&path).unwrap_err().to_string();
        assert!(err.contains("earlier-born"), "{err}");
    }

    #[test]
    fn duplicate_frame_id_pairs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("objects.csv");
        let rows = sample_rows(1);
        write_object_table(&[rows[0].clone(), rows[0].clone()], &path).unwrap();
        assert!(read_object_table(&path).is_err());
    }

    #[test]
    fn wrong_header_is_rejected_with_line_context() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("objects.csv");
        std::fs::write(&path, "frame,id\n").unwrap();
        let err = read_object_table(&path).unwrap_err().to_string();
        assert!(err.contains(":1:"), "{err}");
    }
}
