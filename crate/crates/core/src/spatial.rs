//! Nearest-neighbour queries and farthest-point sampling.

use rstar::primitives::GeomWithData;
use rstar::RTree;

use crate::geom::Point3;

type Entry = GeomWithData<[f64; 3], usize>;

/// Static spatial index over a point set. Queries break distance ties by
/// lowest index, so results match a brute-force scan exactly.
pub struct PointIndex {
    tree: RTree<Entry>,
    len: usize,
}

impl PointIndex {
    pub fn new(points: &[Point3]) -> Self {
        let entries = points
            .iter()
            .enumerate()
            .map(|(i, p)| Entry::new(p.to_array(), i))
            .collect();
        Self {
            tree: RTree::bulk_load(entries),
            len: points.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index and Euclidean distance of the closest point.
    pub fn nearest(&self, q: Point3) -> (usize, f64) {
        let (i, d2) = self.knn(q, 1)[0];
        (i, d2.sqrt())
    }

    /// The `k` closest points as `(index, squared distance)`, sorted by
    /// distance then index.
    pub fn knn(&self, q: Point3, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.len);
        if k == 0 {
            return Vec::new();
        }
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        for (e, d2) in self
            .tree
            .nearest_neighbor_iter_with_distance_2(&q.to_array())
        {
            // Keep pulling past k while distances tie with the k-th.
            if out.len() >= k && d2 > out[k - 1].1 {
                break;
            }
            out.push((e.data, d2));
        }
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out.truncate(k);
        out
    }

    /// `k` neighbours of the indexed point `i`, excluding `i` itself.
    pub fn knn_excluding(&self, points: &[Point3], i: usize, k: usize) -> Vec<(usize, f64)> {
        let mut out = self.knn(points[i], k + 1);
        if let Some(pos) = out.iter().position(|&(j, _)| j == i) {
            out.remove(pos);
        }
        out.truncate(k);
        out
    }
}

/// Brute-force `k` nearest neighbours as `(index, squared distance)`, ties
/// broken by index. Used for small sets where building a tree is not worth it.
pub fn knn_brute(points: &[Point3], q: Point3, k: usize) -> Vec<(usize, f64)> {
    let mut d: Vec<(usize, f64)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.distance_squared(q)))
        .collect();
    let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    let k = k.min(d.len());
    if k == 0 {
        return Vec::new();
    }
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, cmp);
        d.truncate(k);
    }
    d.sort_by(cmp);
    d
}

/// Farthest-point sampling starting from `start`; returns `k` distinct indices
/// (or all indices if `k >= points.len()`). Ties go to the lowest index.
pub fn farthest_point_sampling(points: &[Point3], k: usize, start: usize) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let k = k.min(n);
    let mut chosen = Vec::with_capacity(k);
    let mut dist = vec![f64::INFINITY; n];
    let mut current = start % n;
    for _ in 0..k {
        chosen.push(current);
        dist[current] = f64::NEG_INFINITY;
        let c = points[current];
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (i, p) in points.iter().enumerate() {
            if dist[i] == f64::NEG_INFINITY {
                continue;
            }
            let d = p.distance_squared(c);
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > best.0 {
                best = (dist[i], i);
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        current = best.1;
    }
    chosen
}

/// Axis-aligned bounding box `(min, max)`; `None` for empty input.
pub fn bounding_box(points: &[Point3]) -> Option<(Point3, Point3)> {
    let first = *points.first()?;
    Some(points.iter().fold((first, first), |(lo, hi), p| {
        (
            Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
            Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
        )
    }))
}
