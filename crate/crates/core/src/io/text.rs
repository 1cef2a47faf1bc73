//! OFF meshes, CSV feature files, and newline-delimited label files.
//!
//! Floats are printed with Rust's shortest round-trip formatting, so every
//! written value parses back to the identical f64.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, Parcellation};
use crate::geometry::{SphericalMesh, UnitPoint};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        location: format!("line {line}"),
        message: message.into(),
    }
}

/// Reads an OFF text mesh (`OFF`, counts line, vertex lines, `3 i j k` face
/// lines). Vertices are placed on the unit sphere.
pub fn read_off_mesh(reader: impl Read) -> Result<SphericalMesh> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let mut next_content = || -> Result<(usize, String)> {
        for (i, line) in lines.by_ref() {
            let line = line?;
            let trimmed = line.trim();
            if !trimmed.is_empty() && !trimmed.starts_with('#') {
                return Ok((i + 1, trimmed.to_string()));
            }
        }
        Err(parse_err(0, "unexpected end of OFF stream"))
    };

    let (ln, header) = next_content()?;
    if header != "OFF" {
        return Err(parse_err(ln, format!("expected 'OFF' header, got '{header}'")));
    }
    let (ln, counts) = next_content()?;
    let parts: Vec<&str> = counts.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(parse_err(ln, "counts line must be 'nv nf ne'"));
    }
    let nv: usize = parts[0]
        .parse()
        .map_err(|e| parse_err(ln, format!("bad vertex count: {e}")))?;
    let nf: usize = parts[1]
        .parse()
        .map_err(|e| parse_err(ln, format!("bad face count: {e}")))?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, line) = next_content()?;
        let nums: Vec<&str> = line.split_whitespace().collect();
        if nums.len() != 3 {
            return Err(parse_err(ln, "vertex line must hold three coordinates"));
        }
        let mut c = [0.0; 3];
        for (k, n) in nums.iter().enumerate() {
            c[k] = n
                .parse()
                .map_err(|e| parse_err(ln, format!("bad coordinate: {e}")))?;
        }
        vertices.push(
            UnitPoint::new(c[0], c[1], c[2])
                .map_err(|e| parse_err(ln, format!("bad vertex: {e}")))?,
        );
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, line) = next_content()?;
        let nums: Vec<&str> = line.split_whitespace().collect();
        if nums.len() != 4 || nums[0] != "3" {
            return Err(parse_err(ln, "face line must be '3 i j k'"));
        }
        let mut f = [0usize; 3];
        for (k, n) in nums.iter().skip(1).enumerate() {
            f[k] = n
                .parse()
                .map_err(|e| parse_err(ln, format!("bad face index: {e}")))?;
        }
        faces.push(f);
    }
    SphericalMesh::new(vertices, faces)
}

/// Writes an OFF text mesh; the inverse of [`read_off_mesh`].
pub fn write_off_mesh(mut writer: impl Write, mesh: &SphericalMesh) -> Result<()> {
    writeln!(writer, "OFF")?;
    writeln!(
        writer,
        "{} {} {}",
        mesh.vertex_count(),
        mesh.face_count(),
        mesh.edge_count()
    )?;
    for v in mesh.vertices() {
        writeln!(writer, "{} {} {}", v.x(), v.y(), v.z())?;
    }
    for f in mesh.faces() {
        writeln!(writer, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}

/// Reads a CSV feature file: a header row naming the channels, then one row
/// of values per vertex.
pub fn read_csv_features(reader: impl Read) -> Result<FeatureMap> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty CSV stream"))
        .and_then(|(i, l)| Ok((i, l?)))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if names.is_empty() || names.iter().any(|n| n.is_empty()) {
        return Err(parse_err(1, "header must name every channel"));
    }
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(parse_err(
                i + 1,
                format!("{} fields for {} channels", fields.len(), names.len()),
            ));
        }
        for f in fields {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|e| parse_err(i + 1, format!("bad value '{f}': {e}")))?;
            values.push(v);
        }
        rows += 1;
    }
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    FeatureMap::new(rows, names.len(), values, &name_refs)
}

/// Writes a CSV feature file; the inverse of [`read_csv_features`].
pub fn write_csv_features(mut writer: impl Write, feat: &FeatureMap) -> Result<()> {
    writeln!(writer, "{}", feat.channel_names().join(","))?;
    for r in 0..feat.rows() {
        let row: Vec<String> = feat.row(r).iter().map(|v| format!("{v}")).collect();
        writeln!(writer, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads newline-delimited non-negative integer labels.
pub fn read_labels(reader: impl Read) -> Result<Parcellation> {
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let v: i64 = trimmed
            .parse()
            .map_err(|e| parse_err(i + 1, format!("bad label '{trimmed}': {e}")))?;
        if v < 0 {
            return Err(parse_err(i + 1, format!("negative label {v}")));
        }
        labels.push(v as u32);
    }
    Ok(Parcellation::new(labels))
}

/// Writes newline-delimited labels; the inverse of [`read_labels`].
pub fn write_labels(mut writer: impl Write, parc: &Parcellation) -> Result<()> {
    for l in parc.labels() {
        writeln!(writer, "{l}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_icosphere;

    #[test]
    fn off_header_counts() {
        let mesh = make_icosphere(0);
        let mut text = Vec::new();
        write_off_mesh(&mut text, &mesh).unwrap();
        let s = String::from_utf8(text.clone()).unwrap();
        assert!(s.starts_with("OFF\n12 20 30\n"));
        let back = read_off_mesh(text.as_slice()).unwrap();
        assert_eq!(back.vertex_count(), 12);
        assert_eq!(back.face_count(), 20);
        // Lossless round trip.
        let mut again = Vec::new();
        write_off_mesh(&mut again, &back).unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn csv_preserves_channel_names_and_bits() {
        let feat = FeatureMap::from_channels(
            &[
                vec![0.1, -2.5e-17, 3.0],
                // Values that need the full precision of f64 formatting.
                vec![1.0, 2.0, 0.123456789012345678e-3],
                vec![0.0, -0.0, 9.9],
            ],
            &["curv", "sulc", "thickness"],
        )
        .unwrap();
        let mut text = Vec::new();
        write_csv_features(&mut text, &feat).unwrap();
        let back = read_csv_features(text.as_slice()).unwrap();
        assert_eq!(
            back.channel_names(),
            &["curv".to_string(), "sulc".into(), "thickness".into()]
        );
        assert_eq!(back, feat);
    }

    #[test]
    fn labels_round_trip_and_reject_negatives() {
        let parc = Parcellation::new(vec![0, 3, 2, 2, 7]);
        let mut text = Vec::new();
        write_labels(&mut text, &parc).unwrap();
        let back = read_labels(text.as_slice()).unwrap();
        assert_eq!(back.labels(), parc.labels());

        let err = read_labels("1\n-2\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { location, .. } => assert_eq!(location, "line 2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_csv_reports_line() {
        let err = read_csv_features("a,b\n1.0\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { location, .. } => assert_eq!(location, "line 2"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
