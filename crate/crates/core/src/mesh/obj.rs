//! Wavefront OBJ subset: `v`, `f` and `g` records.

use std::fmt::Write as _;

use super::{MeshError, TriangleMesh};
use crate::Vec3;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjGroup {
    pub name: String,
    /// Triangles indexing [`ObjDocument::vertices`].
    pub faces: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjDocument {
    pub vertices: Vec<Vec3>,
    /// Faces before the first `g` record land in an unnamed group.
    pub groups: Vec<ObjGroup>,
}

impl ObjDocument {
    /// All faces of all groups as one mesh (not normalized).
    pub fn into_mesh(self) -> Result<TriangleMesh, MeshError> {
        let faces = self.groups.into_iter().flat_map(|g| g.faces).collect();
        TriangleMesh::new(self.vertices, faces)
    }

    /// One mesh per non-empty group, each with compacted vertex indices.
    pub fn group_meshes(&self) -> Result<Vec<(String, TriangleMesh)>, MeshError> {
        let mut out = Vec::new();
        for g in self.groups.iter().filter(|g| !g.faces.is_empty()) {
            let used: std::collections::BTreeSet<usize> = g.faces.iter().flatten().copied().collect();
            let remap: std::collections::HashMap<usize, usize> =
                used.iter().enumerate().map(|(new, &old)| (old, new)).collect();
            let verts = used.iter().map(|&i| self.vertices[i]).collect();
            let faces = g.faces.iter().map(|f| f.map(|i| remap[&i])).collect();
            out.push((g.name.clone(), TriangleMesh::new(verts, faces)?));
        }
        Ok(out)
    }
}

fn parse_index(token: &str, count: usize, line: usize) -> Result<usize, MeshError> {
    let head = token.split('/').next().unwrap_or("");
    let raw: i64 = head
        .parse()
        .map_err(|_| MeshError::Parse { line, message: format!("bad face index {token:?}") })?;
    let resolved = match raw {
        0 => None,
        r if r > 0 => Some(r as usize - 1),
        r => count.checked_sub(r.unsigned_abs() as usize),
    };
    resolved.ok_or_else(|| MeshError::Parse { line, message: format!("face index {raw} out of range") })
}

/// Parses OBJ text. Polygons with more than three corners are
/// fan-triangulated; unrecognized records are skipped.
pub fn parse_obj(text: &str) -> Result<ObjDocument, MeshError> {
    let mut doc = ObjDocument::default();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| MeshError::Parse { line, message: format!("bad vertex: {e}") })?;
                if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
                    return Err(MeshError::Parse { line, message: "vertex needs 3 finite coordinates".into() });
                }
                doc.vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = tokens
                    .map(|t| parse_index(t, doc.vertices.len(), line))
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(MeshError::Parse { line, message: "face needs at least 3 vertices".into() });
                }
                if doc.groups.is_empty() {
                    doc.groups.push(ObjGroup::default());
                }
                let group = doc.groups.last_mut().expect("group exists");
                for k in 1..idx.len() - 1 {
                    group.faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            Some("g") => {
                let name = tokens.collect::<Vec<_>>().join(" ");
                doc.groups.push(ObjGroup { name, faces: Vec::new() });
            }
            _ => {}
        }
    }
    Ok(doc)
}

/// Serializes named meshes as one OBJ with a `g` record per mesh.
pub fn write_obj_groups<'a>(groups: impl IntoIterator<Item = (&'a str, &'a TriangleMesh)>) -> String {
    let mut out = String::new();
    let mut base = 1;
    for (name, mesh) in groups {
        writeln!(out, "g {name}").unwrap();
        for v in mesh.vertices() {
            writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z).unwrap();
        }
        for f in mesh.faces() {
            writeln!(out, "f {} {} {}", f[0] + base, f[1] + base, f[2] + base).unwrap();
        }
        base += mesh.vertices().len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE: &str = "\
# unit cube, quads
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
vn 0 0 1
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2/1 3/1 7/1 6/1
f 3//1 4//1 8//1 7//1
f -4 -8 -5 -1
";

    #[test]
    fn fan_triangulates_quads() {
        let doc = parse_obj(CUBE).unwrap();
        assert_eq!(doc.vertices.len(), 8);
        let mesh = doc.into_mesh().unwrap().normalized();
        assert_eq!(mesh.faces().len(), 12);
        let b = mesh.aabb();
        assert_eq!(b.min, Vec3::new(-0.5, -0.5, 0.0));
        assert_eq!(b.max, Vec3::new(0.5, 0.5, 1.0));
        assert!((mesh.total_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_empty_mesh() {
        assert!(matches!(parse_obj("").unwrap().into_mesh(), Err(MeshError::Empty)));
        assert!(matches!(parse_obj("v 0 0 0\n").unwrap().into_mesh(), Err(MeshError::Empty)));
    }

    #[test]
    fn reports_line_of_bad_record() {
        let err = parse_obj("v 0 0 0\nv 1 x 0\n").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 2, .. }));
        let err = parse_obj("v 0 0 0\nf 1 2 3\n").unwrap().into_mesh().unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { index: 1, .. }));
    }

    #[test]
    fn groups_round_trip() {
        let cube = parse_obj(CUBE).unwrap().into_mesh().unwrap();
        let text = write_obj_groups([("a", &cube), ("b", &cube)]);
        let doc = parse_obj(&text).unwrap();
        let meshes = doc.group_meshes().unwrap();
        assert_eq!(meshes.len(), 2);
        assert_eq!(meshes[0].0, "a");
        assert_eq!(meshes[1].1.vertices(), cube.vertices());
        assert_eq!(meshes[1].1.faces(), cube.faces());
    }
}
