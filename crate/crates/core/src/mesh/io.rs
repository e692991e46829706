use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Off,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(MeshFormat::Obj),
            "off" => Some(MeshFormat::Off),
            _ => None,
        }
    }
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    load_mesh_scaled(path, 1.0)
}

/// Loads an OBJ or OFF mesh and multiplies every coordinate by `scale`.
pub fn load_mesh_scaled(path: impl AsRef<Path>, scale: f64) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let format = MeshFormat::from_path(path).unwrap_or_else(|| {
        if text.trim_start().starts_with("OFF") {
            MeshFormat::Off
        } else {
            MeshFormat::Obj
        }
    });
    let (mut vertices, faces) = match format {
        MeshFormat::Obj => parse_obj(path, &text)?,
        MeshFormat::Off => parse_off(path, &text)?,
    };
    if vertices.is_empty() || faces.is_empty() {
        return Err(Error::EmptyGeometry("mesh file has no vertices or faces"));
    }
    if scale != 1.0 {
        for v in &mut vertices {
            *v *= scale;
        }
    }
    TriangleMesh::new(vertices, faces)
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::MalformedMesh {
        path: PathBuf::from(path),
        line,
        message: message.into(),
    }
}

fn parse_coords<'a>(
    path: &Path,
    line: usize,
    mut tokens: impl Iterator<Item = &'a str>,
) -> Result<Vec3> {
    let mut c = [0.0; 3];
    for slot in &mut c {
        let tok = tokens
            .next()
            .ok_or_else(|| malformed(path, line, "vertex needs three coordinates"))?;
        *slot = tok
            .parse()
            .map_err(|_| malformed(path, line, format!("bad coordinate {tok:?}")))?;
    }
    Ok(Vec3::new(c[0], c[1], c[2]))
}

fn fan(polygon: &[usize], faces: &mut Vec<[usize; 3]>) {
    for k in 1..polygon.len() - 1 {
        faces.push([polygon[0], polygon[k], polygon[k + 1]]);
    }
}

fn parse_obj(path: &Path, text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    // Indices are resolved after all vertices are read; OBJ allows forward references.
    let mut polygons: Vec<(usize, Vec<i64>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => vertices.push(parse_coords(path, line_no, tokens)?),
            Some("f") => {
                let mut idx = Vec::new();
                for tok in tokens {
                    let first = tok.split('/').next().unwrap_or("");
                    let k: i64 = first
                        .parse()
                        .map_err(|_| malformed(path, line_no, format!("bad face index {tok:?}")))?;
                    if k == 0 {
                        return Err(malformed(path, line_no, "face index 0 (OBJ is 1-based)"));
                    }
                    idx.push(k);
                }
                if idx.len() < 3 {
                    return Err(malformed(path, line_no, "face needs at least three vertices"));
                }
                // Negative indices are relative to the vertices read so far.
                let resolved = idx
                    .into_iter()
                    .map(|k| if k < 0 { vertices.len() as i64 + k + 1 } else { k })
                    .collect();
                polygons.push((line_no, resolved));
            }
            _ => {}
        }
    }
    let mut faces = Vec::new();
    for (line_no, poly) in polygons {
        let mut zero_based = Vec::with_capacity(poly.len());
        for k in poly {
            if k < 1 || k as usize > vertices.len() {
                return Err(malformed(
                    path,
                    line_no,
                    format!("face index {k} out of range (1..={})", vertices.len()),
                ));
            }
            zero_based.push(k as usize - 1);
        }
        fan(&zero_based, &mut faces);
    }
    Ok((vertices, faces))
}

fn parse_off(path: &Path, text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hdr_line, header) = lines
        .next()
        .ok_or_else(|| malformed(path, 1, "missing OFF header"))?;
    let mut header_tokens = header.split_whitespace();
    if header_tokens.next() != Some("OFF") {
        return Err(malformed(path, hdr_line, "expected OFF header"));
    }
    let rest: Vec<&str> = header_tokens.collect();
    let (count_line, counts): (usize, Vec<&str>) = if rest.is_empty() {
        let (n, l) = lines
            .next()
            .ok_or_else(|| malformed(path, hdr_line, "missing element counts"))?;
        (n, l.split_whitespace().collect())
    } else {
        (hdr_line, rest)
    };
    if counts.len() < 2 {
        return Err(malformed(path, count_line, "expected vertex and face counts"));
    }
    let parse_count = |tok: &str| -> Result<usize> {
        tok.parse()
            .map_err(|_| malformed(path, count_line, format!("bad count {tok:?}")))
    };
    let nv = parse_count(counts[0])?;
    let nf = parse_count(counts[1])?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (n, l) = lines
            .next()
            .ok_or_else(|| malformed(path, count_line, "fewer vertices than declared"))?;
        vertices.push(parse_coords(path, n, l.split_whitespace())?);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (n, l) = lines
            .next()
            .ok_or_else(|| malformed(path, count_line, "fewer faces than declared"))?;
        let mut tokens = l.split_whitespace();
        let k: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| malformed(path, n, "bad face vertex count"))?;
        if k < 3 {
            return Err(malformed(path, n, "face needs at least three vertices"));
        }
        let mut poly = Vec::with_capacity(k);
        for _ in 0..k {
            let tok = tokens
                .next()
                .ok_or_else(|| malformed(path, n, "face shorter than its vertex count"))?;
            let idx: usize = tok
                .parse()
                .map_err(|_| malformed(path, n, format!("bad face index {tok:?}")))?;
            if idx >= nv {
                return Err(malformed(
                    path,
                    n,
                    format!("face index {idx} out of range (0..{nv})"),
                ));
            }
            poly.push(idx);
        }
        fan(&poly, &mut faces);
    }
    Ok((vertices, faces))
}

pub fn write_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for v in mesh.vertices() {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_off(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("OFF\n");
    writeln!(out, "{} {} 0", mesh.vertices().len(), mesh.faces().len()).unwrap();
    for v in mesh.vertices() {
        writeln!(out, "{} {} {}", v.x, v.y, v.z).unwrap();
    }
    for f in mesh.faces() {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2]).unwrap();
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
