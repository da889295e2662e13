//! ASCII PLY point clouds with `x y z` (and optional `nx ny nz`) properties.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::tnsr::io_context;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::Vec3;

pub fn to_ply_string(pc: &PointCloud) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", pc.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    if pc.normals.is_some() {
        s.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    s.push_str("end_header\n");
    for (i, p) in pc.points.iter().enumerate() {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if let Some(n) = &pc.normals {
            let _ = write!(s, " {} {} {}", n[i].x, n[i].y, n[i].z);
        }
        s.push('\n');
    }
    s
}

pub fn parse_ply(text: &str) -> Result<PointCloud> {
    let bad = |m: &str| Error::Format(format!("PLY: {m}"));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing magic"));
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    for line in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => return Err(bad("only ASCII PLY is supported")),
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| bad("bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element"))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (Some(ix), Some(iy), Some(iz)) = (col("x"), col("y"), col("z")) else {
        return Err(bad("vertex element needs x, y, z"));
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    let mut points = Vec::with_capacity(count);
    let mut normals = normal_cols.map(|_| Vec::with_capacity(count));
    for _ in 0..count {
        let line = lines.next().ok_or_else(|| bad("truncated vertex list"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<_>>()?;
        if vals.len() < props.len() {
            return Err(bad("short vertex record"));
        }
        let p = Vec3::new(vals[ix], vals[iy], vals[iz]);
        if !p.iter().all(|c| c.is_finite()) {
            return Err(bad("non-finite coordinate"));
        }
        points.push(p);
        if let (Some(n), Some(c)) = (normals.as_mut(), normal_cols) {
            n.push(Vec3::new(vals[c[0]], vals[c[1]], vals[c[2]]));
        }
    }
    Ok(PointCloud { points, normals })
}

pub fn write_ply(pc: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_ply_string(pc))?;
    Ok(())
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_context(e, path))?;
    parse_ply(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut pc = PointCloud::new(vec![Vec3::new(0.1, -2.0, 3.5), Vec3::new(1e-7, 0.0, 1.0 / 3.0)]);
        assert_eq!(parse_ply(&to_ply_string(&pc)).unwrap(), pc);
        pc.normals = Some(vec![Vec3::z(), -Vec3::x()]);
        assert_eq!(parse_ply(&to_ply_string(&pc)).unwrap(), pc);
    }

    #[test]
    fn rejects_binary() {
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n").is_err());
    }
}
