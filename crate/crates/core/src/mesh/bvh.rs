//! Bounding volume hierarchy over triangles (or any boxed primitives).

use super::Aabb;
use crate::Vec3;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, count: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct Bvh {
    boxes: Vec<Aabb>,
    kinds: Vec<Node>,
    prims: Vec<Aabb>,
    /// Primitive indices, permuted so each leaf owns a contiguous range.
    order: Vec<usize>,
}

impl Bvh {
    /// Builds a median-split tree over primitive bounding boxes.
    pub fn build(prims: &[Aabb]) -> Self {
        let mut bvh =
            Self { boxes: Vec::new(), kinds: Vec::new(), prims: prims.to_vec(), order: (0..prims.len()).collect() };
        if !prims.is_empty() {
            let centers: Vec<Vec3> = prims.iter().map(Aabb::center).collect();
            bvh.build_range(prims, &centers, 0, prims.len());
        }
        bvh
    }

    fn build_range(&mut self, prims: &[Aabb], centers: &[Vec3], start: usize, end: usize) -> usize {
        let bounds = self.order[start..end].iter().fold(Aabb::empty(), |b, &i| b.union(&prims[i]));
        let id = self.boxes.len();
        self.boxes.push(bounds);
        self.kinds.push(Node::Leaf { start, count: end - start });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let cbounds = Aabb::from_points(self.order[start..end].iter().map(|&i| &centers[i]));
        let axis = cbounds.extent().imax();
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centers[a][axis].total_cmp(&centers[b][axis]).then(a.cmp(&b))
        });
        let left = self.build_range(prims, centers, start, mid);
        let right = self.build_range(prims, centers, mid, end);
        self.kinds[id] = Node::Inner { left, right };
        id
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        self.boxes.first().copied().unwrap_or_else(Aabb::empty)
    }

    /// Primitive minimizing `sq_dist`, which must return the exact squared
    /// distance from the query to a primitive and is only called for
    /// primitives whose box could beat the current best.
    pub fn nearest(&self, p: &Vec3, mut sq_dist: impl FnMut(usize) -> f64) -> Option<(usize, f64)> {
        if self.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut stack = vec![(0usize, self.boxes[0].distance_squared(p))];
        while let Some((node, lower)) = stack.pop() {
            if best.is_some_and(|(_, d)| lower > d) {
                continue;
            }
            match self.kinds[node] {
                Node::Leaf { start, count } => {
                    for &prim in &self.order[start..start + count] {
                        let d = sq_dist(prim);
                        let better = match best {
                            None => true,
                            Some((bi, bd)) => d < bd || (d == bd && prim < bi),
                        };
                        if better {
                            best = Some((prim, d));
                        }
                    }
                }
                Node::Inner { left, right } => {
                    let dl = self.boxes[left].distance_squared(p);
                    let dr = self.boxes[right].distance_squared(p);
                    // push the farther child first so the nearer is explored first
                    if dl <= dr {
                        stack.push((right, dr));
                        stack.push((left, dl));
                    } else {
                        stack.push((left, dl));
                        stack.push((right, dr));
                    }
                }
            }
        }
        best
    }

    /// Calls `f` on every primitive pair whose boxes overlap; stops early
    /// once `f` returns `true`. Returns whether it stopped early.
    pub fn any_overlapping_pair(&self, other: &Bvh, mut f: impl FnMut(usize, usize) -> bool) -> bool {
        if self.is_empty() || other.is_empty() {
            return false;
        }
        let mut stack = vec![(0usize, 0usize)];
        while let Some((a, b)) = stack.pop() {
            if !self.boxes[a].overlaps(&other.boxes[b]) {
                continue;
            }
            match (&self.kinds[a], &other.kinds[b]) {
                (Node::Leaf { start: sa, count: ca }, Node::Leaf { start: sb, count: cb }) => {
                    for &pa in &self.order[*sa..sa + ca] {
                        for &pb in &other.order[*sb..sb + cb] {
                            if self.prims[pa].overlaps(&other.prims[pb]) && f(pa, pb) {
                                return true;
                            }
                        }
                    }
                }
                (Node::Inner { left, right }, Node::Leaf { .. }) => {
                    stack.push((*left, b));
                    stack.push((*right, b));
                }
                (Node::Leaf { .. }, Node::Inner { left, right }) => {
                    stack.push((a, *left));
                    stack.push((a, *right));
                }
                (Node::Inner { left: al, right: ar }, Node::Inner { left: bl, right: br }) => {
                    // descend the larger box
                    if self.boxes[a].extent().norm_squared() >= other.boxes[b].extent().norm_squared() {
                        stack.push((*al, b));
                        stack.push((*ar, b));
                    } else {
                        stack.push((a, *bl));
                        stack.push((a, *br));
                    }
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn point_boxes(points: &[Vec3]) -> Vec<Aabb> {
        points.iter().map(|p| Aabb { min: *p, max: *p }).collect()
    }

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rand3 = || Vec3::new(rng.random(), rng.random(), rng.random());
        let pts: Vec<Vec3> = (0..500).map(|_| rand3()).collect();
        let bvh = Bvh::build(&point_boxes(&pts));
        for _ in 0..200 {
            let q = rand3() * 1.4 - Vec3::repeat(0.2);
            let (i, d) = bvh.nearest(&q, |k| (pts[k] - q).norm_squared()).unwrap();
            let brute = pts.iter().map(|p| (p - q).norm_squared()).fold(f64::INFINITY, f64::min);
            assert_eq!(d, brute);
            assert_eq!((pts[i] - q).norm_squared(), brute);
        }
    }

    #[test]
    fn overlapping_pairs_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut boxes = |n: usize, off: f64| -> Vec<Aabb> {
            (0..n)
                .map(|_| {
                    let c = Vec3::new(rng.random(), rng.random(), rng.random()) + Vec3::repeat(off);
                    Aabb { min: c, max: c }.inflated(0.03)
                })
                .collect()
        };
        let a = boxes(80, 0.0);
        let b = boxes(60, 0.5);
        let (ta, tb) = (Bvh::build(&a), Bvh::build(&b));
        let mut found = Vec::new();
        ta.any_overlapping_pair(&tb, |i, j| {
            found.push((i, j));
            false
        });
        found.sort();
        let mut brute: Vec<_> = (0..a.len())
            .flat_map(|i| (0..b.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| a[i].overlaps(&b[j]))
            .collect();
        brute.sort();
        assert_eq!(found, brute);
    }
}
