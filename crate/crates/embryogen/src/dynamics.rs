//! Agent-based population dynamics.
//!
//! Objects are initialized on guide-cell positions and advanced frame by
//! frame with a synchronous update: a directed component averaged from the
//! nearest guide displacements, a pairwise repulsion between nearby objects,
//! and a clamped nearest-neighbor attraction. Divisions are either triggered
//! by the cycle clock alone or coupled to the guide cell count, with the
//! density-based placement picking objects in under-populated regions.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{self, round_half_up, Vec3};
use crate::guide::{GuideFrame, GuideSequence};
use crate::rng::{self, domain};
use crate::spatial::SpatialIndex;

/// One simulated cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SimObject {
    pub id: u64,
    pub position: Vec3,
    /// Nucleus radius, µm.
    pub radius: f64,
    /// Division cycle length, frames.
    pub cycle_length: u32,
    /// Division cycle state, 1..=cycle_length (may exceed it transiently
    /// right before the division is applied).
    pub cycle_state: u32,
    /// 1-based index into the object video library.
    pub video_id: u32,
    pub parent_id: Option<u64>,
    pub birth_frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub frame_index: usize,
    pub objects: Vec<SimObject>,
    pub next_id: u64,
}

impl PopulationState {
    pub fn spatial_index(&self) -> Result<SpatialIndex> {
        SpatialIndex::build(self.objects.iter().map(|o| (o.id, o.position)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivisionVariant {
    FixedCycle,
    CountCoupledOldest,
    CountCoupledDensity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivisionModel {
    pub variant: DivisionVariant,
    /// Fraction of guide cells the simulation tracks (count-coupled variants).
    pub p: f64,
    /// Neighborhood radius r_ρ for the density variant, µm.
    pub density_radius: f64,
    /// Minimum cycle state for division eligibility; defaults to the
    /// configured minimum cycle length.
    pub eligibility_min: Option<u32>,
}

impl DivisionModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::validation("division fraction p must be in [0, 1]"));
        }
        if self.variant == DivisionVariant::CountCoupledDensity && self.density_radius <= 0.0 {
            return Err(Error::validation("density radius must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsConfig {
    pub w_dir: f64,
    pub w_rep: f64,
    pub w_nna: f64,
    /// Neighbor count K for the directed component.
    pub k_neighbors: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub cycle_min: u32,
    pub cycle_max: u32,
    /// Number of object videos available (N_ov), for video-id draws.
    pub n_videos: u32,
    pub seed: u64,
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w_dir < 0.0 || self.w_rep < 0.0 || self.w_nna < 0.0 {
            return Err(Error::validation("displacement weights must be >= 0"));
        }
        if self.k_neighbors < 1 {
            return Err(Error::validation("K must be >= 1"));
        }
        if !(0.0 < self.r_min && self.r_min <= self.r_max) {
            return Err(Error::validation("radius range must satisfy 0 < r_min <= r_max"));
        }
        if !(1 <= self.cycle_min && self.cycle_min <= self.cycle_max) {
            return Err(Error::validation("cycle range must satisfy 1 <= min <= max"));
        }
        if self.n_videos < 1 {
            return Err(Error::validation("need at least one object video"));
        }
        Ok(())
    }
}

/// Initial population size: either a fraction of the guide's first frame or
/// an absolute count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCount {
    Fraction(f64),
    Count(usize),
}

/// Spatial index over one guide frame plus an id → displacement lookup.
pub struct GuideFrameIndex {
    pub index: SpatialIndex,
    displacement: HashMap<u64, Vec3>,
}

impl GuideFrameIndex {
    pub fn new(frame: &GuideFrame) -> Result<GuideFrameIndex> {
        Ok(GuideFrameIndex {
            index: frame.spatial_index()?,
            displacement: frame.cells.iter().map(|c| (c.id, c.displacement)).collect(),
        })
    }

    pub fn n_cells(&self) -> usize {
        self.index.len()
    }
}

/// Spatial index over the simulated objects plus an id → radius lookup.
pub struct SimFrameIndex {
    pub index: SpatialIndex,
    radius: HashMap<u64, f64>,
}

impl SimFrameIndex {
    pub fn new(objects: &[SimObject]) -> Result<SimFrameIndex> {
        Ok(SimFrameIndex {
            index: SpatialIndex::build(objects.iter().map(|o| (o.id, o.position)).collect())?,
            radius: objects.iter().map(|o| (o.id, o.radius)).collect(),
        })
    }
}

/// Place `n` objects on distinct guide-cell positions of frame 0 and draw
/// their per-object attributes. Deterministic under `cfg.seed`.
pub fn initialize_population(
    guide: &GuideSequence,
    count: InitialCount,
    cfg: &DynamicsConfig,
) -> Result<PopulationState> {
    cfg.validate()?;
    let frame0 = &guide.frames[0];
    let available = frame0.cells.len();
    let n = match count {
        InitialCount::Fraction(p) => {
            if !(0.0 < p && p <= 1.0) {
                return Err(Error::validation("initial fraction must be in (0, 1]"));
            }
            round_half_up(p * available as f64) as usize
        }
        InitialCount::Count(c) => c,
    };
    if n == 0 || n > available {
        return Err(Error::validation(format!(
            "requested {n} initial objects but guide frame 0 has {available} cells"
        )));
    }

    let mut rng = rng::stream(cfg.seed, &[domain::INIT]);
    let picks = rand::seq::index::sample(&mut rng, available, n);
    let mut objects = Vec::with_capacity(n);
    for (i, pick) in picks.iter().enumerate() {
        let cycle_length = rng.gen_range(cfg.cycle_min..=cfg.cycle_max);
        objects.push(SimObject {
            id: i as u64 + 1,
            position: frame0.cells[pick].position,
            radius: rng.gen_range(cfg.r_min..=cfg.r_max),
            cycle_length,
            cycle_state: rng.gen_range(1..=cycle_length),
            video_id: rng.gen_range(1..=cfg.n_videos),
            parent_id: None,
            birth_frame: 0,
        });
    }
    Ok(PopulationState {
        frame_index: 0,
        objects,
        next_id: n as u64 + 1,
    })
}

/// Mean displacement of the K nearest guide cells (fewer if the frame is
/// smaller; the mean divides by the actual count).
pub fn directed_displacement(x: Vec3, guide: &GuideFrameIndex, k: usize) -> Vec3 {
    let neighbors = guide.index.knn(x, k);
    let mut sum = [0.0; 3];
    for (id, _, _) in &neighbors {
        sum = geom::add(sum, guide.displacement[id]);
    }
    geom::scale(sum, 1.0 / neighbors.len() as f64)
}

/// Pairwise repulsion for centroid difference `d = x_j − x_i`.
///
/// With R_N = r_i + r_j, R_M = 2·R_N and c = (1 − R_N/R_M)² − 1 the
/// magnitude falls continuously from 1 at contact to 0 at R_M. `contact` is
/// the unit push used when the centroids coincide; callers derive it from the
/// pair RNG stream with opposite signs for the two partners.
pub fn repulsive_displacement(d: Vec3, r_i: f64, r_j: f64, contact: Vec3) -> Vec3 {
    let rn = r_i + r_j;
    let rm = 2.0 * rn;
    let c = (1.0 - rn / rm).powi(2) - 1.0;
    let dist = geom::norm(d);
    if dist == 0.0 {
        return contact;
    }
    let unit = geom::scale(d, 1.0 / dist);
    if dist <= rn {
        geom::scale(unit, -(c * dist / rn + 1.0))
    } else if dist <= rm {
        geom::scale(unit, -(1.0 - dist / rm).powi(2))
    } else {
        [0.0; 3]
    }
}

/// Vector from `x` to its nearest simulated neighbor (excluding the object
/// itself); zero when no other object exists.
pub fn nna_displacement(x: Vec3, id: u64, sim: &SimFrameIndex) -> Vec3 {
    match sim.index.nearest_excluding(x, id) {
        Some((_, pos, _)) => geom::sub(pos, x),
        None => [0.0; 3],
    }
}

/// The clamp factor of the nearest-neighbor attraction term.
pub fn nna_clamp_factor(w_nna: f64, dir_norm: f64, nna_norm: f64) -> f64 {
    if nna_norm == 0.0 {
        0.0
    } else {
        w_nna.min(dir_norm / nna_norm)
    }
}

fn contact_direction(seed: u64, frame: usize, id_a: u64, id_b: u64) -> Vec3 {
    let (lo, hi) = if id_a < id_b { (id_a, id_b) } else { (id_b, id_a) };
    let mut rng = rng::stream(seed, &[domain::CONTACT, frame as u64, lo, hi]);
    let u: [f64; 3] = UnitSphere.sample(&mut rng);
    if id_a == lo {
        u
    } else {
        geom::scale(u, -1.0)
    }
}

/// Total per-frame displacement of one object (directed + repulsion sum over
/// the 4·r_max neighborhood + clamped attraction).
pub fn total_displacement(
    obj: &SimObject,
    guide: &GuideFrameIndex,
    sim: &SimFrameIndex,
    cfg: &DynamicsConfig,
    frame: usize,
) -> Vec3 {
    let dir = directed_displacement(obj.position, guide, cfg.k_neighbors);
    let mut total = geom::scale(dir, cfg.w_dir);

    if cfg.w_rep > 0.0 {
        // R_M = 2(r_i + r_j) <= 4 r_max, so this range captures every
        // nonzero repulsion pair.
        let mut rep = [0.0; 3];
        for (j_id, j_pos) in sim.index.within(obj.position, 4.0 * cfg.r_max, Some(obj.id)) {
            let d = geom::sub(j_pos, obj.position);
            let contact = if d == [0.0; 3] {
                contact_direction(cfg.seed, frame, obj.id, j_id)
            } else {
                [0.0; 3]
            };
            rep = geom::add(rep, repulsive_displacement(d, obj.radius, sim.radius[&j_id], contact));
        }
        total = geom::add(total, geom::scale(rep, cfg.w_rep));
    }

    if cfg.w_nna > 0.0 {
        let nna = nna_displacement(obj.position, obj.id, sim);
        let factor = nna_clamp_factor(cfg.w_nna, geom::norm(dir), geom::norm(nna));
        total = geom::add(total, geom::scale(nna, factor));
    }
    total
}

/// Relative density difference ρ_embryo/N_embryo − ρ_sim/N_sim around `x`.
/// The sim term excludes the object itself; guide cells never are the object.
pub fn density_difference(
    x: Vec3,
    object_id: u64,
    guide_index: &SpatialIndex,
    sim_index: &SpatialIndex,
    r_rho: f64,
) -> f64 {
    let rho_embryo = guide_index.range_count(x, r_rho, None) as f64;
    let rho_sim = sim_index.range_count(x, r_rho, Some(object_id)) as f64;
    rho_embryo / guide_index.len() as f64 - rho_sim / sim_index.len() as f64
}

///// Divisions needed to reach the target count: max(0, round(p·N_embryo) − N_sim).
pub fn required_divisions(p: f64, n_embryo: usize, n_sim: usize) -> usize {
    (round_half_up(p * n_embryo as f64) - n_sim as i64).max(0) as usize
}

/// Outcome of division-candidate selection for one frame.
#[derive(Debug, Clone, Default)]
pub struct DivisionSelection {
    /// Mother ids, ascending.
    pub ids: Vec<u64>,
    /// Objects forced by the cycle clock (s_i ≥ l_i), counted toward the quota.
    pub forced: usize,
    /// How far the eligible pool fell short of the request.
    pub shortfall: usize,
}

/// Pick the objects to divide this frame.
///
/// Count-coupled variants rank eligible objects (s_i ≥ eligibility minimum)
/// and fill the quota `n_div`; objects whose cycle ended (s_i ≥ l_i) always
/// divide and consume quota first. The fixed-cycle variant divides exactly
/// the cycle-ended objects and ignores `n_div`.
pub fn select_division_candidates(
    objects: &[SimObject],
    model: &DivisionModel,
    eligibility_min: u32,
    n_div: usize,
    guide_index: &SpatialIndex,
    sim_index: &SpatialIndex,
) -> DivisionSelection {
    let mut forced: Vec<u64> = objects
        .iter()
        .filter(|o| o.cycle_state >= o.cycle_length)
        .map(|o| o.id)
        .collect();
    forced.sort_unstable();

    if model.variant == DivisionVariant::FixedCycle {
        return DivisionSelection {
            forced: forced.len(),
            ids: forced,
            shortfall: 0,
        };
    }

    let quota = n_div.saturating_sub(forced.len());
    let mut ranked: Vec<&SimObject> = objects
        .iter()
        .filter(|o| o.cycle_state >= eligibility_min && o.cycle_state < o.cycle_length)
        .collect();
    match model.variant {
        DivisionVariant::CountCoupledDensity => {
            let mut keyed: Vec<(f64, u32, u64)> = ranked
                .iter()
                .map(|o| {
                    (
                        density_difference(o.position, o.id, guide_index, sim_index, model.density_radius),
                        o.cycle_state,
                        o.id,
                    )
                })
                .collect();
            keyed.sort_by(|a, b| {
                b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2))
            });
            let mut ids: Vec<u64> = keyed.into_iter().take(quota).map(|k| k.2).collect();
            let shortfall = quota - ids.len();
            ids.extend_from_slice(&forced);
            ids.sort_unstable();
            DivisionSelection {
                ids,
                forced: forced.len(),
                shortfall,
            }
        }
        DivisionVariant::CountCoupledOldest => {
            ranked.sort_by(|a, b| b.cycle_state.cmp(&a.cycle_state).then(a.id.cmp(&b.id)));
            let mut ids: Vec<u64> = ranked.into_iter().take(quota).map(|o| o.id).collect();
            let shortfall = quota - ids.len();
            ids.extend_from_slice(&forced);
            ids.sort_unstable();
            DivisionSelection {
                ids,
                forced: forced.len(),
                shortfall,
            }
        }
        DivisionVariant::FixedCycle => unreachable!(),
    }
}

/// Replace the mother with two daughters offset by ±(r_mother/2) along the
/// division axis. Daughter attributes are drawn from `rng`.
pub fn perform_division(
    state: &mut PopulationState,
    mother_id: u64,
    axis: Vec3,
    cfg: &DynamicsConfig,
    birth_frame: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mother_at = state
        .objects
        .iter()
        .position(|o| o.id == mother_id)
        .ok_or_else(|| Error::validation(format!("unknown object id {mother_id}")))?;
    let mother = state.objects.remove(mother_at);
    let offset = geom::scale(axis, mother.radius / 2.0);
    for daughter_pos in [geom::add(mother.position, offset), geom::sub(mother.position, offset)] {
        let cycle_length = rng.gen_range(cfg.cycle_min..=cfg.cycle_max);
        state.objects.push(SimObject {
            id: state.next_id,
            position: daughter_pos,
            radius: rng.gen_range(cfg.r_min..=cfg.r_max),
            cycle_length,
            cycle_state: 1,
            video_id: rng.gen_range(1..=cfg.n_videos),
            parent_id: Some(mother.id),
            birth_frame,
        });
        state.next_id += 1;
    }
    Ok(())
}

/// Per-frame bookkeeping for the run log and lineage audits.
#[derive(Debug, Clone)]
pub struct StepReport {
    /// Frame index after the step.
    pub frame: usize,
    pub n_embryo: usize,
    pub n_sim: usize,
    pub n_div_requested: usize,
    pub n_div_performed: usize,
    pub forced_divisions: usize,
    pub shortfall: usize,
    pub divided: Vec<u64>,
}

/// Per-video division axes extracted from the object video library
/// (final-frame principal axis of the nucleus mask).
pub type DivisionAxes = Vec<Vec3>;

/// Advance the population by one frame (synchronous update).
///
/// Displacements are computed from the frame-k snapshot for every object,
/// applied at once, and clamped to the guide bounds; the cycle clock then
/// advances and divisions close the count deficit against the destination
/// guide frame.
pub fn step(
    state: &mut PopulationState,
    guide: &GuideSequence,
    model: &DivisionModel,
    cfg: &DynamicsConfig,
    axes: Option<&DivisionAxes>,
) -> Result<StepReport> {
    let k = state.frame_index;
    if k + 1 >= guide.frames.len() {
        return Err(Error::validation(format!(
            "cannot step past the last guide frame ({})",
            guide.frames.len() - 1
        )));
    }
    let guide_now = GuideFrameIndex::new(&guide.frames[k])?;
    let sim_now = SimFrameIndex::new(&state.objects)?;

    let displacements: Vec<Vec3> = state
        .objects
        .par_iter()
        .map(|o| total_displacement(o, &guide_now, &sim_now, cfg, k))
        .collect();
    for (o, d) in state.objects.iter_mut().zip(&displacements) {
        o.position = guide.bounds.clamp(geom::add(o.position, *d));
        o.cycle_state += 1;
    }

    let next = k + 1;
    let n_embryo = guide.frames[next].cells.len();
    let guide_next_index = guide.frames[next].spatial_index()?;
    let sim_index = state.spatial_index()?;
    let n_div_requested = match model.variant {
        DivisionVariant::FixedCycle => 0,
        _ => required_divisions(model.p, n_embryo, state.objects.len()),
    };
    let eligibility_min = model.eligibility_min.unwrap_or(cfg.cycle_min);
    let selection = select_division_candidates(
        &state.objects,
        model,
        eligibility_min,
        n_div_requested,
        &guide_next_index,
        &sim_index,
    );

    for &mother_id in &selection.ids {
        let video_id = state
            .objects
            .iter()
            .find(|o| o.id == mother_id)
            .map(|o| o.video_id)
            .expect("selected id exists");
        let axis = axes
            .and_then(|a| a.get(video_id as usize - 1).copied())
            .unwrap_or_else(|| {
                let mut rng = rng::stream(cfg.seed, &[domain::AXIS, next as u64, mother_id]);
                UnitSphere.sample(&mut rng)
            });
        let mut rng = rng::stream(cfg.seed, &[domain::DIVISION, next as u64, mother_id]);
        perform_division(state, mother_id, axis, cfg, next, &mut rng)?;
    }
    for o in state.objects.iter_mut() {
        o.position = guide.bounds.clamp(o.position);
    }
    state.frame_index = next;

    Ok(StepReport {
        frame: next,
        n_embryo,
        n_sim: state.objects.len(),
        n_div_requested,
        n_div_performed: selection.ids.len(),
        forced_divisions: selection.forced,
        shortfall: selection.shortfall,
        divided: selection.ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guide::{synthesize_guide, GuideCell, GuideGenSpec};

    fn test_cfg() -> DynamicsConfig {
        DynamicsConfig {
            w_dir: 1.0,
            w_rep: 1.0,
            w_nna: 0.1,
            k_neighbors: 10,
            r_min: 7.0,
            r_max: 10.0,
            cycle_min: 28,
            cycle_max: 56,
            n_videos: 4,
            seed: 42,
        }
    }

    fn guide_spec(frames: usize, n0: usize, growth: f64) -> GuideGenSpec {
        GuideGenSpec {
            frames,
            initial_cells: n0,
            growth,
            shell_radius_um: 60.0,
            shell_thickness_um: 8.0,
            jitter_um: 0.4,
            cap_start_deg: 70.0,
            cap_end_deg: 150.0,
            min_spacing_um: 0.0,
        }
    }

    fn single_frame_guide(cells: Vec<GuideCell>) -> GuideFrame {
        GuideFrame {
            frame_index: 0,
            cells,
        }
    }

    #[test]
    fn initialize_selects_guide_positions_without_replacement() {
        let guide = synthesize_guide(&guide_spec(3, 100, 1.0), 1, 10.0).unwrap();
        let cfg = test_cfg();
        let state = initialize_population(&guide, InitialCount::Fraction(0.5), &cfg).unwrap();
        assert_eq!(state.objects.len(), 50);
        let guide_positions: Vec<Vec3> =
            guide.frames[0].cells.iter().map(|c| c.position).collect();
        let mut used = Vec::new();
        for o in &state.objects {
            assert!(guide_positions.contains(&o.position));
            assert!(!used.contains(&o.position), "position reused");
            used.push(o.position);
            assert!(o.radius >= cfg.r_min && o.radius <= cfg.r_max);
            assert!(o.cycle_length >= cfg.cycle_min && o.cycle_length <= cfg.cycle_max);
            assert!(o.cycle_state >= 1 && o.cycle_state <= o.cycle_length);
            assert!(o.video_id >= 1 && o.video_id <= cfg.n_videos);
        }
    }

    #[test]
    fn initialize_with_full_fraction_uses_every_position() {
        let guide = synthesize_guide(&guide_spec(3, 60, 1.0), 1, 10.0).unwrap();
        let state = initialize_population(&guide, InitialCount::Fraction(1.0), &test_cfg()).unwrap();
        assert_eq!(state.objects.len(), 60);
        let mut positions: Vec<_> = state.objects.iter().map(|o| o.position).collect();
        positions.sort_by(|a, b| a.partial_cmp(b).unwrap());
        positions.dedup();
        assert_eq!(positions.len(), 60);
    }

    #[test]
    fn initialize_is_seed_deterministic() {
        let guide = synthesize_guide(&guide_spec(3, 100, 1.0), 1, 10.0).unwrap();
        let a = initialize_population(&guide, InitialCount::Count(40), &test_cfg()).unwrap();
        let b = initialize_population(&guide, InitialCount::Count(40), &test_cfg()).unwrap();
        assert_eq!(a, b);
        let mut cfg2 = test_cfg();
        cfg2.seed = 43;
        let c = initialize_population(&guide, InitialCount::Count(40), &cfg2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn initialize_rejects_oversized_count() {
        let guide = synthesize_guide(&guide_spec(3, 50, 1.0), 1, 10.0).unwrap();
        assert!(initialize_population(&guide, InitialCount::Count(51), &test_cfg()).is_err());
    }

    #[test]
    fn directed_is_the_mean_of_neighbor_displacements() {
        let frame = single_frame_guide(vec![
            GuideCell {
                id: 0,
                position: [0.0, 0.0, 0.0],
                displacement: [1.0, 0.0, 0.0],
            },
            GuideCell {
                id: 1,
                position: [1.0, 0.0, 0.0],
                displacement: [0.0, 1.0, 0.0],
            },
            GuideCell {
                id: 2,
                position: [100.0, 0.0, 0.0],
                displacement: [9.0, 9.0, 9.0],
            },
        ]);
        let g = GuideFrameIndex::new(&frame).unwrap();
        assert_eq!(directed_displacement([0.2, 0.0, 0.0], &g, 2), [0.5, 0.5, 0.0]);
    }

    #[test]
    fn directed_with_constant_field_returns_that_field() {
        let cells = (0..20)
            .map(|i| GuideCell {
                id: i,
                position: [i as f64, (i * 7 % 13) as f64, 0.0],
                displacement: [2.0, -1.0, 0.5],
            })
            .collect();
        let g = GuideFrameIndex::new(&single_frame_guide(cells)).unwrap();
        let v = directed_displacement([3.0, 3.0, 0.0], &g, 10);
        assert_eq!(v, [2.0, -1.0, 0.5]);
    }

    #[test]
    fn directed_matches_brute_force_mean() {
        let mut rng = rng::stream(9, &[0xD1]);
        let cells: Vec<GuideCell> = (0..200)
            .map(|i| GuideCell {
                id: i,
                position: [
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-50.0..50.0),
                ],
                displacement: [
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ],
            })
            .collect();
        let frame = single_frame_guide(cells.clone());
        let g = GuideFrameIndex::new(&frame).unwrap();
        let x = [5.0, -3.0, 1.0];
        let got = directed_displacement(x, &g, 10);

        let mut sorted = cells.clone();
        sorted.sort_by(|a, b| {
            geom::dist2(x, a.position)
                .total_cmp(&geom::dist2(x, b.position))
                .then(a.id.cmp(&b.id))
        });
        let mut want = [0.0; 3];
        for c in &sorted[..10] {
            want = geom::add(want, c.displacement);
        }
        want = geom::scale(want, 0.1);
        assert_eq!(got, want);
    }

    #[test]
    fn repulsion_hand_values() {
        // r_i = r_j = 1 → R_N = 2, R_M = 4, c = −0.75
        let u = [0.0, 0.0, 1.0];
        assert_eq!(repulsive_displacement([1.0, 0.0, 0.0], 1.0, 1.0, u), [-0.625, 0.0, 0.0]);
        assert_eq!(repulsive_displacement([3.0, 0.0, 0.0], 1.0, 1.0, u), [-0.0625, 0.0, 0.0]);
        assert_eq!(repulsive_displacement([5.0, 0.0, 0.0], 1.0, 1.0, u), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn repulsion_branches_agree_at_the_boundary() {
        // both branch expressions at ‖d‖ = R_N give (1 − R_N/R_M)² = 0.25
        let v = repulsive_displacement([2.0, 0.0, 0.0], 1.0, 1.0, [0.0; 3]);
        assert!((geom::norm(v) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn repulsion_is_antisymmetric() {
        let mut rng = rng::stream(3, &[0xD2]);
        for _ in 0..200 {
            let d = [
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            ];
            if geom::norm(d) == 0.0 {
                continue;
            }
            let ri = rng.gen_range(0.5..3.0);
            let rj = rng.gen_range(0.5..3.0);
            let a = repulsive_displacement(d, ri, rj, [0.0; 3]);
            let b = repulsive_displacement(geom::scale(d, -1.0), rj, ri, [0.0; 3]);
            for k in 0..3 {
                assert!((a[k] + b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn repulsion_magnitude_is_non_increasing() {
        let ri = 1.3;
        let rj = 2.1;
        let rm = 2.0 * (ri + rj);
        let mut prev = f64::INFINITY;
        for i in 1..=1000 {
            let dist = rm * i as f64 / 1000.0;
            let m = geom::norm(repulsive_displacement([dist, 0.0, 0.0], ri, rj, [0.0; 3]));
            assert!(m <= prev + 1e-12, "not monotone at {dist}");
            prev = m;
        }
    }

    #[test]
    fn coincident_centroids_get_a_unit_push() {
        let u = [0.6, 0.8, 0.0];
        assert_eq!(repulsive_displacement([0.0; 3], 1.0, 1.0, u), u);
    }

    #[test]
    fn nna_points_to_the_nearest_other_object() {
        let objects = vec![
            obj(1, [0.0, 0.0, 0.0]),
            obj(2, [2.0, 0.0, 0.0]),
            obj(3, [9.0, 0.0, 0.0]),
        ];
        let sim = SimFrameIndex::new(&objects).unwrap();
        assert_eq!(nna_displacement([0.0; 3], 1, &sim), [2.0, 0.0, 0.0]);
    }

    #[test]
    fn nna_is_zero_for_a_singleton_or_coincident_neighbor() {
        let objects = vec![obj(1, [1.0, 1.0, 1.0])];
        let sim = SimFrameIndex::new(&objects).unwrap();
        assert_eq!(nna_displacement([1.0, 1.0, 1.0], 1, &sim), [0.0; 3]);

        let objects = vec![obj(1, [1.0, 1.0, 1.0]), obj(2, [1.0, 1.0, 1.0])];
        let sim = SimFrameIndex::new(&objects).unwrap();
        assert_eq!(nna_displacement([1.0, 1.0, 1.0], 1, &sim), [0.0; 3]);
    }

    #[test]
    fn nna_matches_brute_force() {
        let mut rng = rng::stream(5, &[0xD3]);
        let objects: Vec<SimObject> = (0..100)
            .map(|i| {
                obj(
                    i + 1,
                    [
                        rng.gen_range(-50.0..50.0),
                        rng.gen_range(-50.0..50.0),
                        rng.gen_range(-50.0..50.0),
                    ],
                )
            })
            .collect();
        let sim = SimFrameIndex::new(&objects).unwrap();
        for o in &objects {
            let got = nna_displacement(o.position, o.id, &sim);
            let nearest = objects
                .iter()
                .filter(|q| q.id != o.id)
                .min_by(|a, b| {
                    geom::dist2(o.position, a.position)
                        .total_cmp(&geom::dist2(o.position, b.position))
                        .then(a.id.cmp(&b.id))
                })
                .unwrap();
            assert_eq!(got, geom::sub(nearest.position, o.position));
        }
    }

    fn obj(id: u64, position: Vec3) -> SimObject {
        SimObject {
            id,
            position,
            radius: 8.0,
            cycle_length: 30,
            cycle_state: 5,
            video_id: 1,
            parent_id: None,
            birth_frame: 0,
        }
    }

    #[test]
    fn total_clamp_hand_example() {
        // isolated object: nna target 20 away, ‖Δx_dir‖ = 1, w_nna = 0.1
        // → nna term magnitude = min(0.1, 1/20)·20 = 1.0
        let mut cfg = test_cfg();
        cfg.w_rep = 0.0;
        let frame = single_frame_guide(vec![GuideCell {
            id: 0,
            position: [0.0, 0.0, 0.0],
            displacement: [1.0, 0.0, 0.0],
        }]);
        let g = GuideFrameIndex::new(&frame).unwrap();
        let objects = vec![obj(1, [0.0, 0.0, 0.0]), obj(2, [0.0, 20.0, 0.0])];
        let sim = SimFrameIndex::new(&objects).unwrap();
        let total = total_displacement(&objects[0], &g, &sim, &cfg, 0);
        let nna_term = geom::sub(total, [cfg.w_dir, 0.0, 0.0]);
        assert!((geom::norm(nna_term) - 1.0).abs() < 1e-12);
        assert!((nna_term[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn total_with_zero_weights_reduces_to_directed() {
        let mut cfg = test_cfg();
        cfg.w_rep = 0.0;
        cfg.w_nna = 0.0;
        cfg.w_dir = 2.0;
        let frame = single_frame_guide(vec![GuideCell {
            id: 0,
            position: [0.0, 0.0, 0.0],
            displacement: [0.5, -0.25, 0.0],
        }]);
        let g = GuideFrameIndex::new(&frame).unwrap();
        let objects = vec![obj(1, [1.0, 0.0, 0.0]), obj(2, [3.0, 0.0, 0.0])];
        let sim = SimFrameIndex::new(&objects).unwrap();
        let total = total_displacement(&objects[0], &g, &sim, &cfg, 0);
        assert_eq!(total, [1.0, -0.5, 0.0]);
    }

    #[test]
    fn coincident_pair_repulsion_is_equal_and_opposite() {
        let mut cfg = test_cfg();
        cfg.w_dir = 0.0;
        cfg.w_nna = 0.0;
        let frame = single_frame_guide(vec![GuideCell {
            id: 0,
            position: [0.0, 0.0, 0.0],
            displacement: [0.0; 3],
        }]);
        let g = GuideFrameIndex::new(&frame).unwrap();
        let objects = vec![obj(1, [2.0, 2.0, 2.0]), obj(2, [2.0, 2.0, 2.0])];
        let sim = SimFrameIndex::new(&objects).unwrap();
        let a = total_displacement(&objects[0], &g, &sim, &cfg, 3);
        let b = total_displacement(&objects[1], &g, &sim, &cfg, 3);
        assert_eq!(a, geom::scale(b, -1.0));
        assert!((geom::norm(a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_difference_direct_arithmetic() {
        // 5 guide neighbors of 100 guide cells; 3 sim neighbors of 50 sim
        // cells → 0.05 − 0.06 = −0.01
        let mut guide_pts: Vec<(u64, Vec3)> = (0..5).map(|i| (i, [i as f64 * 0.1, 0.0, 0.0])).collect();
        guide_pts.extend((5..100).map(|i| (i, [1000.0 + i as f64 * 30.0, 0.0, 0.0])));
        let guide_index = SpatialIndex::build(guide_pts).unwrap();

        let mut sim_pts: Vec<(u64, Vec3)> = vec![(1, [0.0; 3])];
        sim_pts.extend((2..5).map(|i| (i, [0.2 * i as f64, 0.0, 0.0])));
        sim_pts.extend((5..51).map(|i| (i, [2000.0 + i as f64 * 30.0, 0.0, 0.0])));
        let sim_index = SpatialIndex::build(sim_pts).unwrap();

        let d = density_difference([0.0; 3], 1, &guide_index, &sim_index, 5.0);
        assert!((d - (-0.01)).abs() < 1e-12);
    }

    #[test]
    fn density_difference_on_identical_sets_reflects_self_exclusion() {
        let pts: Vec<(u64, Vec3)> = (0..40)
            .map(|i| (i, [(i % 7) as f64 * 3.0, (i / 7) as f64 * 3.0, 0.0]))
            .collect();
        let guide_index = SpatialIndex::build(pts.clone()).unwrap();
        let sim_index = SpatialIndex::build(pts.clone()).unwrap();
        let n = pts.len() as f64;
        for (id, p) in &pts {
            // guide counts the coincident cell, sim excludes the object:
            // difference is exactly 1/N.
            let d = density_difference(*p, *id, &guide_index, &sim_index, 10.0);
            assert!((d - 1.0 / n).abs() < 1e-12);
        }
    }

    #[test]
    fn required_divisions_examples() {
        assert_eq!(required_divisions(0.5, 100, 45), 5);
        assert_eq!(required_divisions(0.5, 100, 50), 0);
        assert_eq!(required_divisions(0.5, 100, 60), 0);
        // round-half-up: round(2.5) = 3
        assert_eq!(required_divisions(0.25, 10, 2), 1);
    }

    #[test]
    fn round_half_up_enumeration_of_half_cases() {
        for n in 0..40usize {
            let x = n as f64 + 0.5;
            assert_eq!(round_half_up(x), n as i64 + 1);
        }
    }

    fn dummy_indices() -> (SpatialIndex, SpatialIndex) {
        let g = SpatialIndex::build(vec![(0, [1000.0, 0.0, 0.0])]).unwrap();
        let s = SpatialIndex::build(vec![(0, [2000.0, 0.0, 0.0])]).unwrap();
        (g, s)
    }

    #[test]
    fn select_zero_request_returns_empty() {
        let objects = vec![obj(1, [0.0; 3]), obj(2, [5.0, 0.0, 0.0])];
        let model = DivisionModel {
            variant: DivisionVariant::CountCoupledDensity,
            p: 0.5,
            density_radius: 40.0,
            eligibility_min: None,
        };
        let (g, s) = dummy_indices();
        let sel = select_division_candidates(&objects, &model, 1, 0, &g, &s);
        assert!(sel.ids.is_empty());
        assert_eq!(sel.shortfall, 0);
    }

    #[test]
    fn select_density_argmax() {
        // two eligible cells; object 1 sits in a guide-dense region
        let guide_pts: Vec<(u64, Vec3)> = (0..10).map(|i| (i, [i as f64, 0.0, 0.0])).collect();
        let g = SpatialIndex::build(guide_pts).unwrap();
        let objects = vec![obj(1, [0.0; 3]), obj(2, [500.0, 0.0, 0.0])];
        let s = SpatialIndex::build(objects.iter().map(|o| (o.id, o.position)).collect()).unwrap();
        let model = DivisionModel {
            variant: DivisionVariant::CountCoupledDensity,
            p: 0.5,
            density_radius: 40.0,
            eligibility_min: None,
        };
        let sel = select_division_candidates(&objects, &model, 1, 1, &g, &s);
        assert_eq!(sel.ids, vec![1]);
    }

    #[test]
    fn select_saturates_and_reports_shortfall() {
        let mut objects: Vec<SimObject> = (1..=5).map(|i| obj(i, [i as f64 * 30.0, 0.0, 0.0])).collect();
        // only 3 eligible
        objects[0].cycle_state = 1;
        objects[1].cycle_state = 1;
        for o in objects.iter_mut().skip(2) {
            o.cycle_state = 10;
        }
        let model = DivisionModel {
            variant: DivisionVariant::CountCoupledOldest,
            p: 0.5,
            density_radius: 40.0,
            eligibility_min: Some(10),
        };
        let (g, s) = dummy_indices();
        let sel = select_division_candidates(&objects, &model, 10, 5, &g, &s);
        assert_eq!(sel.ids.len(), 3);
        assert_eq!(sel.shortfall, 2);
    }

    #[test]
    fn fixed_cycle_divides_exactly_the_cycle_ended() {
        let mut objects: Vec<SimObject> = (1..=4).map(|i| obj(i, [i as f64 * 30.0, 0.0, 0.0])).collect();
        objects[1].cycle_state = objects[1].cycle_length;
        objects[3].cycle_state = objects[3].cycle_length + 1;
        let model = DivisionModel {
            variant: DivisionVariant::FixedCycle,
            p: 0.0,
            density_radius: 40.0,
            eligibility_min: None,
        };
        let (g, s) = dummy_indices();
        let sel = select_division_candidates(&objects, &model, 1, 0, &g, &s);
        assert_eq!(sel.ids, vec![2, 4]);
    }

    #[test]
    fn division_places_daughters_symmetrically() {
        let mut state = PopulationState {
            frame_index: 0,
            objects: vec![obj(1, [0.0; 3])],
            next_id: 2,
        };
        let cfg = test_cfg();
        let mut rng = rng::stream(1, &[0xD4]);
        perform_division(&mut state, 1, [1.0, 0.0, 0.0], &cfg, 1, &mut rng).unwrap();
        assert_eq!(state.objects.len(), 2);
        assert_eq!(state.objects[0].position, [4.0, 0.0, 0.0]);
        assert_eq!(state.objects[1].position, [-4.0, 0.0, 0.0]);
        for d in &state.objects {
            assert_eq!(d.parent_id, Some(1));
            assert_eq!(d.cycle_state, 1);
            assert_eq!(d.birth_frame, 1);
            assert_ne!(d.id, 1);
        }
        assert_eq!(state.next_id, 4);
        assert!(perform_division(&mut state, 99, [1.0, 0.0, 0.0], &cfg, 1, &mut rng).is_err());
    }

    #[test]
    fn step_with_pure_directed_field_moves_by_w_dir_times_v() {
        let spec = guide_spec(4, 50, 1.0);
        let guide = synthesize_guide(&spec, 2, 10.0).unwrap();
        let mut cfg = test_cfg();
        cfg.w_rep = 0.0;
        cfg.w_nna = 0.0;
        cfg.cycle_min = 1000;
        cfg.cycle_max = 2000;
        // constant displacement field
        let mut guide = guide;
        for k in 0..guide.frames.len() {
            for c in guide.frames[k].cells.iter_mut() {
                c.displacement = if k + 1 < 4 { [0.5, 0.0, 0.0] } else { [0.0; 3] };
            }
        }
        let model = DivisionModel {
            variant: DivisionVariant::FixedCycle,
            p: 0.0,
            density_radius: 40.0,
            eligibility_min: None,
        };
        let mut state = initialize_population(&guide, InitialCount::Count(1), &cfg).unwrap();
        let before = state.objects[0].position;
        step(&mut state, &guide, &model, &cfg, None).unwrap();
        let after = state.objects[0].position;
        assert_eq!(geom::sub(after, before), [0.5, 0.0, 0.0]);
    }

    #[test]
    fn step_trajectories_are_deterministic() {
        let guide = synthesize_guide(&guide_spec(8, 80, 1.04), 3, 10.0).unwrap();
        let cfg = test_cfg();
        let model = DivisionModel {
            variant: DivisionVariant::CountCoupledDensity,
            p: 0.5,
            density_radius: 40.0,
            eligibility_min: Some(0),
        };
        let run = || {
            let mut state = initialize_population(&guide, InitialCount::Fraction(0.5), &cfg).unwrap();
            let mut trace = vec![state.clone()];
            for _ in 0..7 {
                step(&mut state, &guide, &model, &cfg, None).unwrap();
                trace.push(state.clone());
            }
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn density_model_tracks_the_guide_count() {
        // 100 → 200 cells over 20 frames; eligibility never binds.
        let spec = guide_spec(20, 100, 2f64.powf(1.0 / 19.0));
        let guide = synthesize_guide(&spec, 4, 10.0).unwrap();
        let mut cfg = test_cfg();
        cfg.cycle_min = 100_000;
        cfg.cycle_max = 200_000;
        let model = DivisionModel {
            variant: DivisionVariant::CountCoupledDensity,
            p: 0.5,
            density_radius: 40.0,
            eligibility_min: Some(0),
        };
        let mut state = initialize_population(&guide, InitialCount::Fraction(0.5), &cfg).unwrap();
        for _ in 0..19 {
            let report = step(&mut state, &guide, &model, &cfg, None).unwrap();
            let expect = round_half_up(0.5 * report.n_embryo as f64) as usize;
            assert_eq!(report.n_sim, expect, "frame {}", report.frame);
        }
    }

    #[test]
    fn positions_stay_inside_guide_bounds() {
        let guide = synthesize_guide(&guide_spec(10, 60, 1.03), 5, 10.0).unwrap();
        let cfg = test_cfg();
        let model = DivisionModel {
            variant: DivisionVariant::CountCoupledDensity,
            p: 0.5,
            density_radius: 40.0,
            eligibility_min: Some(0),
        };
        let mut state = initialize_population(&guide, InitialCount::Fraction(0.5), &cfg).unwrap();
        for _ in 0..9 {
            step(&mut state, &guide, &model, &cfg, None).unwrap();
            for o in &state.objects {
                assert!(guide.bounds.contains(o.position));
            }
        }
    }

    #[test]
    fn stepping_past_the_last_guide_frame_errors() {
        let guide = synthesize_guide(&guide_spec(2, 50, 1.0), 6, 10.0).unwrap();
        let cfg = test_cfg();
        let model = DivisionModel {
            variant: DivisionVariant::FixedCycle,
            p: 0.0,
            density_radius: 40.0,
            eligibility_min: None,
        };
        let mut state = initialize_population(&guide, InitialCount::Count(5), &cfg).unwrap();
        step(&mut state, &guide, &model, &cfg, None).unwrap();
        assert!(step(&mut state, &guide, &model, &cfg, None).is_err());
    }
}
