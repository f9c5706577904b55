//! A kd-tree over `(id, position)` entries.
//!
//! Queries are contracted to match a brute-force scan exactly, including the
//! tie rule: equal distances are ordered by ascending id. Results are
//! deterministic across platforms.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geom::{dist2, is_finite, Vec3};

#[derive(Debug, Clone)]
struct Node {
    /// Index into `points`.
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

/// Immutable spatial index; safe for concurrent reads.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<(u64, Vec3)>,
    nodes: Vec<Node>,
    root: i32,
}

#[derive(PartialEq)]
struct Candidate {
    d2: f64,
    id: u64,
    pos: Vec3,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SpatialIndex {
    /// Build an index; errors on an empty or non-finite point set.
    pub fn build(points: Vec<(u64, Vec3)>) -> Result<SpatialIndex> {
        if points.is_empty() {
            return Err(Error::validation("spatial index over an empty point set"));
        }
        for (id, p) in &points {
            if !is_finite(*p) {
                return Err(Error::validation(format!(
                    "non-finite position for point id {id}"
                )));
            }
        }
        let mut idx = SpatialIndex {
            nodes: Vec::with_capacity(points.len()),
            points,
            root: -1,
        };
        let mut order: Vec<u32> = (0..idx.points.len() as u32).collect();
        idx.root = idx.build_rec(&mut order, 0);
        Ok(idx)
    }

    fn build_rec(&mut self, order: &mut [u32], depth: usize) -> i32 {
        if order.is_empty() {
            return -1;
        }
        let axis = (depth % 3) as u8;
        let mid = order.len() / 2;
        // Median split; (coordinate, id) key keeps the build deterministic.
        order.select_nth_unstable_by(mid, |&a, &b| {
            let pa = &self.points[a as usize];
            let pb = &self.points[b as usize];
            pa.1[axis as usize]
                .total_cmp(&pb.1[axis as usize])
                .then(pa.0.cmp(&pb.0))
        });
        let point = order[mid];
        let node_id = self.nodes.len() as i32;
        self.nodes.push(Node {
            point,
            axis,
            left: -1,
            right: -1,
        });
        let (lo, rest) = order.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build_rec(lo, depth + 1);
        let right = self.build_rec(hi, depth + 1);
        self.nodes[node_id as usize].left = left;
        self.nodes[node_id as usize].right = right;
        node_id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `min(k, len)` nearest entries, ascending by `(distance, id)`.
    pub fn knn(&self, x: Vec3, k: usize) -> Vec<(u64, Vec3, f64)> {
        assert!(k >= 1, "knn requires k >= 1");
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(self.root, x, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter()
            .map(|c| (c.id, c.pos, c.d2.sqrt()))
            .collect()
    }

    fn knn_rec(&self, node: i32, x: Vec3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let (id, pos) = self.points[n.point as usize];
        let cand = Candidate {
            d2: dist2(x, pos),
            id,
            pos,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("non-empty") {
            heap.pop();
            heap.push(cand);
        }

        let diff = x[n.axis as usize] - pos[n.axis as usize];
        let (near, far) = if diff <= 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.knn_rec(near, x, k, heap);
        // Equal plane distance can still hide a lower-id tie, hence `<=`.
        if heap.len() < k || diff * diff <= heap.peek().expect("non-empty").d2 {
            self.knn_rec(far, x, k, heap);
        }
    }

    /// Count entries with Euclidean distance ≤ `r` from `x`, optionally
    /// excluding one id.
    pub fn range_count(&self, x: Vec3, r: f64, exclude_id: Option<u64>) -> usize {
        assert!(r > 0.0, "range_count requires r > 0");
        let mut count = 0usize;
        self.range_rec(self.root, x, r * r, exclude_id, &mut |_, _| count += 1);
        count
    }

    /// Entries with distance ≤ `r`, ascending by id.
    pub fn within(&self, x: Vec3, r: f64, exclude_id: Option<u64>) -> Vec<(u64, Vec3)> {
        assert!(r > 0.0, "within requires r > 0");
        let mut out = Vec::new();
        self.range_rec(self.root, x, r * r, exclude_id, &mut |id, pos| {
            out.push((id, pos))
        });
        out.sort_by_key(|e| e.0);
        out
    }

    fn range_rec(
        &self,
        node: i32,
        x: Vec3,
        r2: f64,
        exclude_id: Option<u64>,
        visit: &mut impl FnMut(u64, Vec3),
    ) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let (id, pos) = self.points[n.point as usize];
        if dist2(x, pos) <= r2 && Some(id) != exclude_id {
            visit(id, pos);
        }
        let diff = x[n.axis as usize] - pos[n.axis as usize];
        let (near, far) = if diff <= 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.range_rec(near, x, r2, exclude_id, visit);
        if diff * diff <= r2 {
            self.range_rec(far, x, r2, exclude_id, visit);
        }
    }

    /// The nearest entry whose id differs from `exclude_id`.
    pub fn nearest_excluding(&self, x: Vec3, exclude_id: u64) -> Option<(u64, Vec3, f64)> {
        self.knn(x, 2).into_iter().find(|e| e.0 != exclude_id)
    }
}
