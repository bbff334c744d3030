//! Single-linkage clustering of collided points.

use std::collections::HashMap;

use crate::Vec3;

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Number of connected components when points closer than `link_radius`
/// are linked.
pub fn count_clusters(points: &[Vec3], link_radius: f64) -> usize {
    if points.is_empty() {
        return 0;
    }
    let mut parent: Vec<usize> = (0..points.len()).collect();
    let cell = |p: &Vec3| (p / link_radius).map(|c| c.floor() as i64);
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        let c = cell(p);
        buckets.entry([c.x, c.y, c.z]).or_default().push(i);
    }
    let r2 = link_radius * link_radius;
    for (i, p) in points.iter().enumerate() {
        let c = cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = buckets.get(&[c.x + dx, c.y + dy, c.z + dz]) else { continue };
                    for &j in bucket {
                        if j > i && (points[j] - p).norm_squared() <= r2 {
                            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }
    }
    (0..points.len()).filter(|&i| find(&mut parent, i) == i).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[Vec3], r: f64) -> usize {
        let n = points.len();
        let mut label: Vec<usize> = (0..n).collect();
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..n {
                for j in 0..n {
                    if (points[i] - points[j]).norm() <= r && label[j] < label[i] {
                        label[i] = label[j];
                        changed = true;
                    }
                }
            }
        }
        let mut l = label;
        l.sort();
        l.dedup();
        l.len()
    }

    #[test]
    fn two_groups() {
        let pts = [Vec3::zeros(), Vec3::new(0.05, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        assert_eq!(count_clusters(&pts, 0.1), 2);
        assert_eq!(count_clusters(&[], 0.1), 0);
    }

    proptest! {
        #[test]
        fn matches_brute_force(pts in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 0..60), r in 0.05f64..0.6) {
            let pts: Vec<Vec3> = pts.into_iter().map(Vec3::from).collect();
            prop_assert_eq!(count_clusters(&pts, r), brute(&pts, r));
        }
    }
}
