//! Minimal ASCII OBJ I/O: `v`, `vt` and triangulated `f` records.
//!
//! UVs are per-corner in OBJ; we require them to be consistent per vertex
//! (the usual case for garment meshes) and store them per vertex.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ObjData {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    pub uv: Option<Vec<Vector2<f64>>>,
}

/// Read an ASCII OBJ. Faces must be triangles; a quad or larger polygon is
/// a topology error. Normals are ignored.
pub fn read_obj(path: &Path) -> Result<ObjData> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_obj(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_obj(text: &str) -> Result<ObjData> {
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut uvs: Vec<Vector2<f64>> = Vec::new();
    // corner uv index per vertex, checked for consistency
    let mut vertex_uv: Vec<Option<usize>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for v in c.iter_mut() {
                    *v = parse_float(parts.next(), ln)?;
                }
                vertices.push(Vector3::new(c[0], c[1], c[2]));
                vertex_uv.push(None);
            }
            Some("vt") => {
                let u = parse_float(parts.next(), ln)?;
                let v = parse_float(parts.next(), ln)?;
                uvs.push(Vector2::new(u, v));
            }
            Some("f") => {
                let corners: Vec<&str> = parts.collect();
                if corners.len() != 3 {
                    return Err(Error::Topology(format!(
                        "line {}: face with {} corners, only triangles supported",
                        ln + 1,
                        corners.len()
                    )));
                }
                let mut idx = [0usize; 3];
                for (slot, corner) in idx.iter_mut().zip(&corners) {
                    let mut fields = corner.split('/');
                    let vi = parse_index(fields.next(), vertices.len(), ln)?;
                    *slot = vi;
                    if let Some(t) = fields.next() {
                        if !t.is_empty() {
                            let ti = parse_index(Some(t), uvs.len(), ln)?;
                            match vertex_uv[vi] {
                                None => vertex_uv[vi] = Some(ti),
                                Some(prev) if prev == ti => {}
                                Some(prev) => {
                                    if (uvs[prev] - uvs[ti]).norm() > 1e-9 {
                                        return Err(Error::Parse(format!(
                                            "line {}: vertex {} has conflicting UVs; per-vertex UVs required",
                                            ln + 1,
                                            vi + 1
                                        )));
                                    }
                                }
                            }
                        }
                    }
                }
                faces.push(idx);
            }
            _ => {} // vn, o, g, s, usemtl... ignored
        }
    }

    let uv = if !uvs.is_empty() && vertex_uv.iter().all(|u| u.is_some()) {
        Some(vertex_uv.iter().map(|u| uvs[u.unwrap()]).collect())
    } else {
        None
    };
    Ok(ObjData { vertices, faces, uv })
}

fn parse_float(tok: Option<&str>, ln: usize) -> Result<f64> {
    tok.ok_or_else(|| Error::Parse(format!("line {}: missing number", ln + 1)))?
        .parse()
        .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))
}

fn parse_index(tok: Option<&str>, len: usize, ln: usize) -> Result<usize> {
    let i: i64 = tok
        .ok_or_else(|| Error::Parse(format!("line {}: missing index", ln + 1)))?
        .parse()
        .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
    if i < 1 || i as usize > len {
        return Err(Error::Parse(format!("line {}: index {i} out of range 1..={len}", ln + 1)));
    }
    Ok(i as usize - 1)
}

/// Serialize to OBJ text. Float formatting is the shortest round-trip form,
/// so identical inputs produce byte-identical files.
pub fn format_obj(
    vertices: &[Vector3<f64>],
    faces: &[[usize; 3]],
    uv: Option<&[Vector2<f64>]>,
) -> String {
    let mut s = String::new();
    for v in vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    if let Some(uv) = uv {
        for t in uv {
            let _ = writeln!(s, "vt {} {}", t.x, t.y);
        }
        for f in faces {
            let _ = writeln!(
                s,
                "f {}/{} {}/{} {}/{}",
                f[0] + 1,
                f[0] + 1,
                f[1] + 1,
                f[1] + 1,
                f[2] + 1,
                f[2] + 1
            );
        }
    } else {
        for f in faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
    }
    s
}

pub fn write_obj(
    path: &Path,
    vertices: &[Vector3<f64>],
    faces: &[[usize; 3]],
    uv: Option<&[Vector2<f64>]>,
) -> Result<()> {
    std::fs::write(path, format_obj(vertices, faces, uv))?;
    Ok(())
}
