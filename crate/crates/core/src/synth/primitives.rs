//! Closed, outward-oriented primitive meshes. All constructors except
//! [`box_mesh_raw`] return meshes in the normalized local frame.

use std::collections::HashMap;

use crate::mesh::TriangleMesh;
use crate::Vec3;

const BOX_FACES: [[usize; 3]; 12] = [
    [0, 2, 3], [0, 3, 1], // z-
    [4, 5, 7], [4, 7, 6], // z+
    [0, 1, 5], [0, 5, 4], // y-
    [2, 6, 7], [2, 7, 3], // y+
    [0, 4, 6], [0, 6, 2], // x-
    [1, 3, 7], [1, 7, 5], // x+
];

/// Axis-aligned box of the given size centered at `center`.
pub fn box_mesh_raw(size: Vec3, center: Vec3) -> TriangleMesh {
    let verts = (0..8)
        .map(|i| {
            let corner = Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64);
            center + (corner - Vec3::repeat(0.5)).component_mul(&size)
        })
        .collect();
    TriangleMesh::new(verts, BOX_FACES.to_vec()).expect("box is valid")
}

pub fn box_mesh(size: Vec3) -> TriangleMesh {
    box_mesh_raw(size, Vec3::zeros()).normalized()
}

/// 1 m cube spanning `[-0.5, 0.5]² × [0, 1]`.
pub fn unit_cube() -> TriangleMesh {
    box_mesh(Vec3::repeat(1.0))
}

/// Prism approximating a cylinder of `radius` and `height`.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let mut verts = vec![Vec3::zeros(), Vec3::new(0.0, 0.0, height)];
    for z in [0.0, height] {
        for i in 0..segments {
            let a = std::f64::consts::TAU * i as f64 / segments as f64;
            verts.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom = |i: usize| 2 + i % segments;
    let top = |i: usize| 2 + segments + i % segments;
    let mut faces = Vec::new();
    for i in 0..segments {
        faces.push([0, bottom(i + 1), bottom(i)]);
        faces.push([1, top(i), top(i + 1)]);
        faces.push([bottom(i), bottom(i + 1), top(i + 1)]);
        faces.push([bottom(i), top(i + 1), top(i)]);
    }
    TriangleMesh::new(verts, faces).expect("cylinder is valid").normalized()
}

/// Subdivided icosahedron projected onto a sphere of `radius`.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vec3::from(*v).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts: Vec<Vec3> = verts.into_iter().map(|v| v * radius).collect();
    // orient outward: the sphere is star-shaped about the origin
    for f in &mut faces {
        let (a, b, c) = (verts[f[0]], verts[f[1]], verts[f[2]]);
        if (b - a).cross(&(c - a)).dot(&(a + b + c)) < 0.0 {
            f.swap(1, 2);
        }
    }
    TriangleMesh::new(verts, faces).expect("icosphere is valid").normalized()
}

/// Concatenates meshes given in a shared frame (not normalized).
pub fn merge(parts: &[TriangleMesh]) -> TriangleMesh {
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for m in parts {
        let base = verts.len();
        verts.extend_from_slice(m.vertices());
        faces.extend(m.faces().iter().map(|f| f.map(|i| i + base)));
    }
    TriangleMesh::new(verts, faces).expect("parts are valid")
}

/// Square ring wall: outer side `outer`, wall thickness `wall`, height `height`.
pub fn square_ring(outer: f64, wall: f64, height: f64) -> TriangleMesh {
    let h = outer / 2.0 - wall / 2.0;
    let z = height / 2.0;
    merge(&[
        box_mesh_raw(Vec3::new(outer, wall, height), Vec3::new(0.0, h, z)),
        box_mesh_raw(Vec3::new(outer, wall, height), Vec3::new(0.0, -h, z)),
        box_mesh_raw(Vec3::new(wall, outer - 2.0 * wall, height), Vec3::new(h, 0.0, z)),
        box_mesh_raw(Vec3::new(wall, outer - 2.0 * wall, height), Vec3::new(-h, 0.0, z)),
    ])
    .normalized()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_volume(m: &TriangleMesh) -> f64 {
        (0..m.faces().len())
            .map(|f| {
                let [a, b, c] = m.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    #[test]
    fn primitives_are_outward_and_normalized() {
        let cube = unit_cube();
        assert!((signed_volume(&cube) - 1.0).abs() < 1e-12);
        let cyl = cylinder(0.5, 2.0, 64);
        let exact = std::f64::consts::PI * 0.25 * 2.0;
        assert!((signed_volume(&cyl) - exact).abs() / exact < 0.01);
        let sphere = icosphere(1.0, 4);
        assert_eq!(sphere.faces().len(), 20 * 4usize.pow(4));
        let b = sphere.aabb();
        assert!(b.min.z.abs() < 1e-12 && (b.max.z - 2.0).abs() < 1e-12);
        assert!((signed_volume(&sphere) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 0.02);
    }
}
