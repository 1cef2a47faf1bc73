//! FreeSurfer binary triangle surfaces and "new format" curv files.

use std::io::{Read, Write};

use nalgebra::Vector3;

use super::ByteCursor;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::geometry::{SphericalMesh, UnitPoint};

const SURFACE_MAGIC: [u8; 3] = [0xFF, 0xFF, 0xFE];
const CURV_MAGIC: [u8; 3] = [0xFF, 0xFF, 0xFF];

/// A parsed triangle surface: unit-sphere mesh plus the pre-normalization
/// vertex radii and the embedded comment.
#[derive(Clone, Debug)]
pub struct SurfaceFile {
    pub mesh: SphericalMesh,
    pub radii: Vec<f64>,
    pub comment: String,
}

/// Reads a FreeSurfer triangle surface.
///
/// Layout (big-endian): 3-byte magic `0xFF 0xFF 0xFE`, comment terminated by
/// two newline bytes, `i32` vertex count, `i32` face count, `f32 x y z` per
/// vertex, three `i32` indices per face. Vertices are renormalized to the
/// unit sphere; their original radii are recorded.
pub fn read_freesurfer_surface(reader: impl Read) -> Result<SurfaceFile> {
    let mut cur = ByteCursor::new(reader)?;
    let magic = cur.bytes(3, "magic")?;
    if magic != SURFACE_MAGIC {
        return Err(Error::UnsupportedFormat(format!(
            "surface magic {:02X?} (expected FF FF FE)",
            magic
        )));
    }
    let comment_bytes = cur.until_double_newline("comment")?;
    let comment = String::from_utf8(comment_bytes).map_err(|e| Error::Parse {
        location: "byte 3".into(),
        message: format!("comment is not UTF-8: {e}"),
    })?;
    let nv = cur.i32_be("vertex count")?;
    let nf = cur.i32_be("face count")?;
    if nv < 0 || nf < 0 {
        return Err(Error::Parse {
            location: format!("byte {}", cur.position() - 8),
            message: format!("negative counts ({nv} vertices, {nf} faces)"),
        });
    }
    let mut vertices = Vec::with_capacity(nv as usize);
    let mut radii = Vec::with_capacity(nv as usize);
    for i in 0..nv {
        let x = cur.f32_be("vertex x")? as f64;
        let y = cur.f32_be("vertex y")? as f64;
        let z = cur.f32_be("vertex z")? as f64;
        let v = Vector3::new(x, y, z);
        let r = v.norm();
        let unit = UnitPoint::from_vector(v).map_err(|_| Error::Parse {
            location: format!("byte {}", cur.position() - 12),
            message: format!("vertex {i} has zero radius"),
        })?;
        vertices.push(unit);
        radii.push(r);
    }
    let mut faces = Vec::with_capacity(nf as usize);
    for i in 0..nf {
        let mut f = [0usize; 3];
        for k in &mut f {
            let idx = cur.i32_be("face index")?;
            if idx < 0 {
                return Err(Error::Parse {
                    location: format!("byte {}", cur.position() - 4),
                    message: format!("face {i} has negative vertex index {idx}"),
                });
            }
            *k = idx as usize;
        }
        faces.push(f);
    }
    let mesh = SphericalMesh::new(vertices, faces)?;
    Ok(SurfaceFile {
        mesh,
        radii,
        comment,
    })
}

/// Writes a FreeSurfer triangle surface; the inverse of
/// [`read_freesurfer_surface`]. `radii` rescales vertices back off the unit
/// sphere (1.0 when absent).
pub fn write_freesurfer_surface(
    mut writer: impl Write,
    mesh: &SphericalMesh,
    radii: Option<&[f64]>,
    comment: &str,
) -> Result<()> {
    if comment.contains("\n\n") {
        return Err(Error::InvalidConfig(
            "surface comment must not contain a double newline".into(),
        ));
    }
    if let Some(r) = radii {
        if r.len() != mesh.vertex_count() {
            return Err(Error::Shape(format!(
                "{} radii for {} vertices",
                r.len(),
                mesh.vertex_count()
            )));
        }
    }
    writer.write_all(&SURFACE_MAGIC)?;
    writer.write_all(comment.as_bytes())?;
    writer.write_all(b"\n\n")?;
    writer.write_all(&(mesh.vertex_count() as i32).to_be_bytes())?;
    writer.write_all(&(mesh.face_count() as i32).to_be_bytes())?;
    for (i, v) in mesh.vertices().iter().enumerate() {
        let r = radii.map_or(1.0, |r| r[i]);
        let p = v.vector() * r;
        for c in [p.x, p.y, p.z] {
            writer.write_all(&(c as f32).to_be_bytes())?;
        }
    }
    for f in mesh.faces() {
        for &idx in f {
            writer.write_all(&(idx as i32).to_be_bytes())?;
        }
    }
    Ok(())
}

/// A parsed curv file: one value per vertex plus the recorded face count.
#[derive(Clone, Debug)]
pub struct CurvFile {
    pub values: Vec<f64>,
    pub face_count: i32,
}

impl CurvFile {
    /// Wraps the values as a single-channel feature map.
    pub fn into_feature_map(self, name: &str) -> Result<FeatureMap> {
        FeatureMap::from_channels(&[self.values], &[name])
    }
}

/// Reads a FreeSurfer "new format" curv file.
///
/// Layout (big-endian): 3-byte magic `0xFF 0xFF 0xFF`, `i32` vertex count,
/// `i32` face count, `i32` values per vertex (must be 1), one `f32` per
/// vertex. The vertex count must equal `vertex_count`.
pub fn read_freesurfer_curv(reader: impl Read, vertex_count: usize) -> Result<CurvFile> {
    let mut cur = ByteCursor::new(reader)?;
    let magic = cur.bytes(3, "magic")?;
    if magic != CURV_MAGIC {
        return Err(Error::UnsupportedFormat(format!(
            "curv magic {:02X?} (expected FF FF FF)",
            magic
        )));
    }
    let vnum = cur.i32_be("vertex count")?;
    let fnum = cur.i32_be("face count")?;
    let vals_per_vertex = cur.i32_be("values per vertex")?;
    if vals_per_vertex != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "curv with {vals_per_vertex} values per vertex"
        )));
    }
    if vnum < 0 || vnum as usize != vertex_count {
        return Err(Error::Shape(format!(
            "curv holds {vnum} values but the mesh has {vertex_count} vertices"
        )));
    }
    let mut values = Vec::with_capacity(vertex_count);
    for _ in 0..vertex_count {
        values.push(cur.f32_be("curv value")? as f64);
    }
    Ok(CurvFile {
        values,
        face_count: fnum,
    })
}

/// Writes a FreeSurfer "new format" curv file; the inverse of
/// [`read_freesurfer_curv`].
pub fn write_freesurfer_curv(
    mut writer: impl Write,
    values: &[f64],
    face_count: i32,
) -> Result<()> {
    writer.write_all(&CURV_MAGIC)?;
    writer.write_all(&(values.len() as i32).to_be_bytes())?;
    writer.write_all(&face_count.to_be_bytes())?;
    writer.write_all(&1i32.to_be_bytes())?;
    for v in values {
        writer.write_all(&(*v as f32).to_be_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_icosphere;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn surface_round_trips_bit_exact() {
        let mesh = make_icosphere(0);
        let mut bytes = Vec::new();
        write_freesurfer_surface(&mut bytes, &mesh, None, "created by ncmap").unwrap();
        let parsed = read_freesurfer_surface(bytes.as_slice()).unwrap();
        assert_eq!(parsed.mesh.vertex_count(), 12);
        assert_eq!(parsed.mesh.face_count(), 20);
        assert_eq!(parsed.comment, "created by ncmap");
        let mut again = Vec::new();
        write_freesurfer_surface(
            &mut again,
            &parsed.mesh,
            Some(&parsed.radii),
            &parsed.comment,
        )
        .unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn surface_level_two_reads_back() {
        let mesh = make_icosphere(2);
        let mut bytes = Vec::new();
        write_freesurfer_surface(&mut bytes, &mesh, None, "ico2").unwrap();
        let parsed = read_freesurfer_surface(bytes.as_slice()).unwrap();
        assert_eq!(parsed.mesh.vertex_count(), 162);
    }

    #[test]
    fn wrong_magic_is_unsupported() {
        let mesh = make_icosphere(0);
        let mut bytes = Vec::new();
        write_freesurfer_surface(&mut bytes, &mesh, None, "x").unwrap();
        bytes[2] = 0xFF; // curv magic instead of surface magic
        let err = read_freesurfer_surface(bytes.as_slice()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)));
    }

    #[test]
    fn truncated_surface_reports_offset() {
        let mesh = make_icosphere(0);
        let mut bytes = Vec::new();
        write_freesurfer_surface(&mut bytes, &mesh, None, "x").unwrap();
        bytes.truncate(bytes.len() - 5);
        let err = read_freesurfer_surface(bytes.as_slice()).unwrap_err();
        match err {
            Error::Parse { location, .. } => assert!(location.starts_with("byte ")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn curv_round_trips_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let values: Vec<f64> = (0..2562).map(|_| rng.random::<f32>() as f64).collect();
        let mut bytes = Vec::new();
        write_freesurfer_curv(&mut bytes, &values, 5120).unwrap();
        let parsed = read_freesurfer_curv(bytes.as_slice(), 2562).unwrap();
        assert_eq!(parsed.values, values);
        assert_eq!(parsed.face_count, 5120);
        let mut again = Vec::new();
        write_freesurfer_curv(&mut again, &parsed.values, parsed.face_count).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn curv_vertex_count_mismatch_is_shape_error() {
        let mut bytes = Vec::new();
        write_freesurfer_curv(&mut bytes, &vec![0.0; 100], 0).unwrap();
        let err = read_freesurfer_curv(bytes.as_slice(), 99).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn zero_curv_file_has_documented_length() {
        let n = 37;
        let mut bytes = Vec::new();
        write_freesurfer_curv(&mut bytes, &vec![0.0; n], 0).unwrap();
        assert_eq!(bytes.len(), 15 + 4 * n);
        let parsed = read_freesurfer_curv(bytes.as_slice(), n).unwrap();
        assert!(parsed.values.iter().all(|&v| v == 0.0));
    }
}
