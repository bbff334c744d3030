//! Planar convex hulls and point-in-polygon tests.

use crate::Vec2;

fn cross(o: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counter-clockwise hull without collinear points (monotone chain).
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Vec2> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn polygon_area(hull: &[Vec2]) -> f64 {
    let n = hull.len();
    (0..n).map(|i| hull[i].x * hull[(i + 1) % n].y - hull[(i + 1) % n].x * hull[i].y).sum::<f64>() / 2.0
}

/// Whether `p` lies inside or within `eps` of the counter-clockwise hull.
pub fn hull_contains(hull: &[Vec2], p: &Vec2, eps: f64) -> bool {
    match hull.len() {
        0 => false,
        1 => (hull[0] - p).norm() <= eps,
        _ => distance_outside(hull, p) <= eps,
    }
}

fn segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let t = if ab.norm_squared() > 0.0 { ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * t - p).norm()
}

/// Distance from `p` to the hull, zero inside.
pub fn distance_outside(hull: &[Vec2], p: &Vec2) -> f64 {
    let n = hull.len();
    if n == 0 {
        return f64::INFINITY;
    }
    if n == 1 {
        return (hull[0] - p).norm();
    }
    let inside = n >= 3 && (0..n).all(|i| cross(&hull[i], &hull[(i + 1) % n], p) >= 0.0);
    if inside {
        return 0.0;
    }
    (0..n).map(|i| segment_distance(p, &hull[i], &hull[(i + 1) % n])).fold(f64::INFINITY, f64::min)
}
