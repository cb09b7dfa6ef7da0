//! Exact k-nearest-neighbour search over 2D points with a static k-d tree.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Candidate neighbour ordered by (squared distance, point index), so ties
/// resolve deterministically toward the lower index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    d2: f64,
    idx: usize,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Implicit balanced k-d tree: `order[lo..hi]` is a subtree whose root is
/// at the midpoint, split on x at even depth and y at odd depth.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 2]>,
    order: Vec<usize>,
}

impl KdTree {
    /// Builds the tree. Coordinates must be finite.
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(&points, &mut order, 0);
        KdTree { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        self.points[idx]
    }

    /// Indices of the `k` nearest points to `q`, nearest first. Returns
    /// fewer than `k` when the tree is smaller.
    pub fn nearest(&self, q: [f64; 2], k: usize) -> Vec<usize> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(q, k, 0, self.order.len(), 0, &mut heap);
        let mut out: Vec<Cand> = heap.into_vec();
        out.sort_unstable();
        out.into_iter().map(|c| c.idx).collect()
    }

    fn search(&self, q: [f64; 2], k: usize, lo: usize, hi: usize, depth: usize, heap: &mut BinaryHeap<Cand>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let p = self.points[idx];
        let c = Cand {
            d2: dist2(p, q),
            idx,
        };
        if heap.len() < k {
            heap.push(c);
        } else if c < *heap.peek().expect("heap holds k items") {
            heap.pop();
            heap.push(c);
        }
        let axis = depth % 2;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, k, near.0, near.1, depth + 1, heap);
        // Visit the far side when the splitting plane is within the current
        // k-th distance (inclusive, so equal-distance ties are seen).
        if heap.len() < k || diff * diff <= heap.peek().expect("non-empty").d2 {
            self.search(q, k, far.0, far.1, depth + 1, heap);
        }
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn build(points: &[[f64; 2]], order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 2;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}

/// Reference search: sort every point by (distance, index).
pub fn brute_force_nearest(points: &[[f64; 2]], q: [f64; 2], k: usize) -> Vec<usize> {
    let mut all: Vec<Cand> = points
        .iter()
        .enumerate()
        .map(|(idx, &p)| Cand { d2: dist2(p, q), idx })
        .collect();
    all.sort_unstable();
    all.truncate(k);
    all.into_iter().map(|c| c.idx).collect()
}
