//! Binary grid cache: `dims` as three little-endian u32, `origin` as three
//! f64, `spacing` as f64, then the values as f32 with x fastest.

use std::io::{Read, Write};
use std::path::Path;

use super::{GridSdf, SdfError};
use crate::pose::Pose5DoF;
use crate::Vec3;

const HEADER_LEN: usize = 3 * 4 + 4 * 8;

/// FNV-1a, continuing from `h`. Stable across platforms and toolchains,
/// unlike std's hasher.
pub(crate) fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub(crate) const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

/// File-name-safe key for a (mesh, pose, resolution) triple.
pub fn cache_key(mesh_ref: &str, pose: &Pose5DoF, resolution: usize) -> String {
    let mut h = fnv1a(FNV_OFFSET, mesh_ref.as_bytes());
    for v in pose.to_array() {
        h = fnv1a(h, &v.to_le_bytes());
    }
    h = fnv1a(h, &(resolution as u64).to_le_bytes());
    format!("{h:016x}.sdf")
}

impl GridSdf {
    pub fn write_cache(&self, path: impl AsRef<Path>) -> Result<(), SdfError> {
        let path = path.as_ref();
        let io = |source| SdfError::Io { path: path.display().to_string(), source };
        let mut buf = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        for d in self.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in [self.origin.x, self.origin.y, self.origin.z, self.spacing] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.values {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(&buf).map_err(io)
    }

    pub fn read_cache(path: impl AsRef<Path>) -> Result<Self, SdfError> {
        let path = path.as_ref();
        let bad = |message: &str| SdfError::Format { path: path.display().to_string(), message: message.to_owned() };
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|source| SdfError::Io { path: path.display().to_string(), source })?;
        if buf.len() < HEADER_LEN {
            return Err(bad("truncated header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let dims = [u32_at(0), u32_at(4), u32_at(8)];
        let origin = Vec3::new(f64_at(12), f64_at(20), f64_at(28));
        let spacing = f64_at(36);
        let count: usize = dims.iter().product();
        if dims.iter().any(|&d| d < 2) || !spacing.is_finite() || spacing <= 0.0 {
            return Err(bad("invalid dims or spacing"));
        }
        if buf.len() != HEADER_LEN + 4 * count {
            return Err(bad("value count does not match dims"));
        }
        let values = buf[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(GridSdf::from_parts(origin, spacing, dims, values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::primitives;

    #[test]
    fn round_trip_at_f32_precision() {
        let g = GridSdf::build(&primitives::unit_cube(), &Pose5DoF::identity(), 16, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(cache_key("cube.obj", &Pose5DoF::identity(), 16));
        g.write_cache(&path).unwrap();
        let back = GridSdf::read_cache(&path).unwrap();
        assert_eq!(back, g.clone().to_f32_precision());
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 4 * g.values().len());
        assert_eq!(u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize, g.dims()[0]);
    }

    #[test]
    fn rejects_truncated_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.sdf");
        std::fs::write(&path, [0u8; 10]).unwrap();
        assert!(matches!(GridSdf::read_cache(&path), Err(SdfError::Format { .. })));
    }

    #[test]
    fn keys_depend_on_every_input() {
        let p = Pose5DoF::identity();
        let k = cache_key("a.obj", &p, 64);
        assert_ne!(k, cache_key("b.obj", &p, 64));
        assert_ne!(k, cache_key("a.obj", &p, 32));
        assert_ne!(k, cache_key("a.obj", &Pose5DoF::new(1.0, 0.1, Vec3::zeros()), 64));
    }
}
