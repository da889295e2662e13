//! ASCII OBJ meshes: `v x y z` and triangular `f a b c` records, 1-based.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::tnsr::io_context;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::Vec3;

pub fn to_obj_string(mesh: &TriMesh) -> String {
    let mut s = String::with_capacity(mesh.vertices.len() * 40 + mesh.triangles.len() * 24);
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let bad = |what: &str| Error::Format(format!("OBJ line {}: {what}", lineno + 1));
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|_| bad("bad vertex coordinate")))
                    .collect::<Result<_>>()?;
                if c.len() != 3 || c.iter().any(|x| !x.is_finite()) {
                    return Err(bad("vertex needs three finite coordinates"));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        match head.parse::<u32>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(bad("face index must be a positive integer")),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(bad("only triangular faces are supported"));
                }
                triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, triangles).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_obj_string(mesh))?;
    Ok(())
}

/// Loads an OBJ and rejects zero-area triangles.
pub fn read_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_context(e, path))?;
    let mesh = parse_obj(&text)?;
    mesh.check_nondegenerate().map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(mesh)
}
