//! Triangle-triangle crossing test with a contact tolerance.
//!
//! Two triangles *cross* when each one has vertices strictly more than `tol`
//! on both sides of the other's plane and their segments on the common
//! line overlap. Coplanar and grazing contacts never cross, so faces that
//! merely touch are not reported.

use crate::Vec3;

fn plane_distances(tri: &[Vec3; 3], other: &[Vec3; 3]) -> Option<[f64; 3]> {
    let n = (other[1] - other[0]).cross(&(other[2] - other[0]));
    let len = n.norm();
    if len == 0.0 {
        return None;
    }
    let n = n / len;
    Some(tri.map(|v| n.dot(&(v - other[0]))))
}

fn straddles(d: &[f64; 3], tol: f64) -> bool {
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    hi > tol && lo < -tol
}

/// Interval of `tri ∩ plane` projected on `dir`.
fn interval(tri: &[Vec3; 3], d: &[f64; 3], dir: &Vec3) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut push = |p: Vec3| {
        let t = dir.dot(&p);
        lo = lo.min(t);
        hi = hi.max(t);
    };
    for k in 0..3 {
        let (i, j) = (k, (k + 1) % 3);
        if d[i] == 0.0 {
            push(tri[i]);
        }
        if (d[i] > 0.0 && d[j] < 0.0) || (d[i] < 0.0 && d[j] > 0.0) {
            push(tri[i] + (tri[j] - tri[i]) * (d[i] / (d[i] - d[j])));
        }
    }
    (lo, hi)
}

pub fn triangles_cross(t1: &[Vec3; 3], t2: &[Vec3; 3], tol: f64) -> bool {
    let (Some(d1), Some(d2)) = (plane_distances(t1, t2), plane_distances(t2, t1)) else {
        return false;
    };
    if !straddles(&d1, tol) || !straddles(&d2, tol) {
        return false;
    }
    let n1 = (t1[1] - t1[0]).cross(&(t1[2] - t1[0]));
    let n2 = (t2[1] - t2[0]).cross(&(t2[2] - t2[0]));
    let dir = n1.cross(&n2);
    if dir.norm_squared() == 0.0 {
        return false;
    }
    let (a0, a1) = interval(t1, &d1, &dir);
    let (b0, b1) = interval(t2, &d2, &dir);
    a0 < b1 && b0 < a1
}
