//! Randomized property tests for the serialization layers and the closed-form
//! displacement laws. Inputs are generated and shrunk by proptest, so a
//! failure reports a minimal counterexample.

use proptest::collection::vec;
use proptest::prelude::*;

use embryogen::dynamics::{nna_clamp_factor, repulsive_displacement};
use embryogen::geom;
use embryogen::imaging::volume::Volume;
use embryogen::io::nrrd::{read_volume, write_volume, NrrdType};
use embryogen::io::table::{read_object_table, write_object_table, ObjectTableRow};

fn finite_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e9..1e9f64,
        -1e-6..1e-6f64,
        Just(0.0),
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
    ]
}

fn row_strategy(index: usize) -> impl Strategy<Value = ObjectTableRow> {
    let id = (index + 1) as u64;
    (
        0usize..10_000,
        proptest::option::of(1..=id),
        vec(finite_f64(), 7),
        (0u32..1000, 1u32..1000, 0u32..100, 0usize..1_000_000, any::<bool>()),
    )
        .prop_map(move |(frame, parent_raw, f, (state, len, vid, voxels, clipped))| {
            // ids strictly increase with the index so parent_id < id holds
            let parent_id = parent_raw.filter(|&p| p < id);
            ObjectTableRow {
                frame,
                id,
                parent_id,
                x: f[0],
                y: f[1],
                z: f[2],
                vx: f[3],
                vy: f[4],
                vz: f[5],
                radius: f[6],
                cycle_state: state,
                cycle_length: len,
                video_id: vid,
                labeled_voxels: voxels,
                clipped,
            }
        })
}

proptest! {
    #[test]
    fn object_table_round_trips_exactly(
        rows in (0usize..40).prop_flat_map(|n| {
            (0..n).map(row_strategy).collect::<Vec<_>>()
        })
    ) {
        // every row lives in the same frame here, so (frame, id) stays unique
        let rows: Vec<ObjectTableRow> = rows
            .into_iter()
            .map(|mut r| {
                r.frame = 0;
                r
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("objects.csv");
        write_object_table(&rows, &path).unwrap();
        prop_assert_eq!(read_object_table(&path).unwrap(), rows);
    }

    #[test]
    fn uint16_volumes_round_trip_exactly(
        dims in (1usize..6, 1usize..6, 1usize..6),
        seed_vals in vec(0u16..=u16::MAX, 1..=125),
    ) {
        let dims = [dims.0, dims.1, dims.2];
        let n = dims[0] * dims[1] * dims[2];
        let data: Vec<f64> = (0..n).map(|i| seed_vals[i % seed_vals.len()] as f64).collect();
        let volume = Volume::from_data(dims, [1.0, 1.0, 2.0], data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.nrrd");
        write_volume(&volume, &path, NrrdType::Uint16).unwrap();
        let (back, ty) = read_volume(&path).unwrap();
        prop_assert_eq!(ty, NrrdType::Uint16);
        prop_assert_eq!(back.dims, volume.dims);
        prop_assert_eq!(back.data, volume.data);
    }

    #[test]
    fn float_volumes_round_trip_at_f32_precision(
        dims in (1usize..6, 1usize..6, 1usize..6),
        seed_vals in vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 1..=125),
    ) {
        let dims = [dims.0, dims.1, dims.2];
        let n = dims[0] * dims[1] * dims[2];
        let data: Vec<f64> = (0..n).map(|i| seed_vals[i % seed_vals.len()] as f64).collect();
        let volume = Volume::from_data(dims, [0.5, 1.0, 2.0], data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.nrrd");
        write_volume(&volume, &path, NrrdType::Float32).unwrap();
        let (back, ty) = read_volume(&path).unwrap();
        prop_assert_eq!(ty, NrrdType::Float32);
        prop_assert_eq!(back.data, volume.data);
    }

    #[test]
    fn repulsion_is_antisymmetric_bounded_and_compact(
        d in vec(-40.0..40.0f64, 3),
        r_i in 1.0..12.0f64,
        r_j in 1.0..12.0f64,
    ) {
        let d = [d[0], d[1], d[2]];
        prop_assume!(geom::norm(d) > 1e-9);
        let contact = [1.0, 0.0, 0.0];
        let f = repulsive_displacement(d, r_i, r_j, contact);
        let g = repulsive_displacement(geom::scale(d, -1.0), r_i, r_j, contact);

        // swapping the partners flips the push exactly
        prop_assert_eq!(f, geom::scale(g, -1.0));
        // magnitude never exceeds the value at contact
        prop_assert!(geom::norm(f) <= 1.0 + 1e-12);
        // no interaction past twice the summed radii
        if geom::norm(d) > 2.0 * (r_i + r_j) {
            prop_assert_eq!(f, [0.0; 3]);
        }
        // the push points away from the neighbor
        prop_assert!(geom::dot(f, d) <= 0.0);
    }

    #[test]
    fn attraction_clamp_never_exceeds_either_bound(
        w in 0.0..2.0f64,
        dir_norm in 0.0..1e6f64,
        nna_norm in 0.0..1e6f64,
    ) {
        let factor = nna_clamp_factor(w, dir_norm, nna_norm);
        prop_assert!(factor <= w);
        prop_assert!(factor * nna_norm <= dir_norm * (1.0 + 1e-12) || nna_norm == 0.0);
        if nna_norm == 0.0 {
            prop_assert_eq!(factor, 0.0);
        }
    }
}
