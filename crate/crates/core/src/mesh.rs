//! Indexed triangle meshes and Wavefront OBJ export.
//!
//! `TriMesh` is the universal output format of both shape generators. Faces
//! can optionally be tagged `branch`/`leaf`; tagged meshes export with
//! `g branch` / `g leaves` groups.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Per-face tag distinguishing woody geometry from foliage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceTag {
    Branch,
    Leaf,
}

/// Indexed triangle mesh with optional per-face tags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    /// When present, must have one tag per face.
    pub tags: Option<Vec<FaceTag>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Self {
        TriMesh { vertices, faces, tags: None }
    }

    /// Checks index bounds, face degeneracy and coordinate finiteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::numeric(format!("non-finite vertex {i}: {v:?}")));
            }
        }
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&k| k >= n) {
                return Err(Error::validation(format!(
                    "face {i} references vertex out of range (n_V = {n}): {f:?}"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::validation(format!("degenerate face {i}: {f:?}")));
            }
        }
        if let Some(tags) = &self.tags {
            if tags.len() != self.faces.len() {
                return Err(Error::validation(format!(
                    "tag count {} != face count {}",
                    tags.len(),
                    self.faces.len()
                )));
            }
        }
        Ok(())
    }

    /// Appends `other`, offsetting its indices. Tags are kept if either
    /// side carries them (untagged faces default to `Branch`).
    pub fn merge(&mut self, other: &TriMesh) {
        let offset = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        let start = self.faces.len();
        self.faces
            .extend(other.faces.iter().map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]));
        if self.tags.is_some() || other.tags.is_some() {
            let tags = self.tags.get_or_insert_with(|| vec![FaceTag::Branch; start]);
            match &other.tags {
                Some(t) => tags.extend_from_slice(t),
                None => tags.extend(std::iter::repeat(FaceTag::Branch).take(other.faces.len())),
            }
        }
    }

    /// Axis-aligned bounding box as (min, max); `None` for an empty mesh.
    pub fn bbox(&self) -> Option<([f64; 3], [f64; 3])> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        let mut lo = first;
        let mut hi = first;
        for v in it {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        Some((lo, hi))
    }

    /// Diagonal length of the bounding box (0 for empty meshes).
    pub fn bbox_diagonal(&self) -> f64 {
        match self.bbox() {
            Some((lo, hi)) => {
                ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt()
            }
            None => 0.0,
        }
    }
}

/// Formats with 9 significant digits, `%.9g`-style: fixed notation in a
/// moderate exponent range, scientific outside it, trailing zeros trimmed.
pub(crate) fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        // validate() rejects these before export; keep Display total anyway
        return format!("{x}");
    }
    // Decimal exponent from the shortest representation; avoids log10
    // edge cases at exact powers of ten.
    let e_repr = format!("{:e}", x.abs());
    let exp: i32 = e_repr.split('e').nth(1).unwrap().parse().unwrap();
    if !(-5..9).contains(&exp) {
        let s = format!("{:.8e}", x);
        let (mantissa, e) = s.split_once('e').unwrap();
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        return format!("{mantissa}e{e}");
    }
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        t.to_string()
    } else {
        s
    }
}

/// Writes `mesh` as Wavefront OBJ: `v x y z` lines then 1-based `f a b c`
/// lines, 9 significant digits, LF endings. Tagged meshes get `g branch` /
/// `g leaves` group lines at tag transitions.
pub fn write_obj<W: Write>(mesh: &TriMesh, out: &mut W) -> Result<()> {
    mesh.validate()?;
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", fmt_sig9(v[0]), fmt_sig9(v[1]), fmt_sig9(v[2]))?;
    }
    let mut current: Option<FaceTag> = None;
    for (i, f) in mesh.faces.iter().enumerate() {
        if let Some(tags) = &mesh.tags {
            let tag = tags[i];
            if current != Some(tag) {
                let name = match tag {
                    FaceTag::Branch => "branch",
                    FaceTag::Leaf => "leaves",
                };
                writeln!(out, "g {name}")?;
                current = Some(tag);
            }
        }
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

/// Writes an OBJ file at `path` (see [`write_obj`]).
pub fn export_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_obj(mesh, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal OBJ reader used as the independent side of the export
    /// round-trip check. Only `v` and `f` records are interpreted.
    fn read_obj_str(text: &str) -> TriMesh {
        let mut mesh = TriMesh::default();
        for line in text.lines() {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let c: Vec<f64> = parts.map(|p| p.parse().unwrap()).collect();
                    mesh.vertices.push([c[0], c[1], c[2]]);
                }
                Some("f") => {
                    let i: Vec<usize> = parts.map(|p| p.parse::<usize>().unwrap() - 1).collect();
                    mesh.faces.push([i[0], i[1], i[2]]);
                }
                _ => {}
            }
        }
        mesh
    }

    fn unit_triangle() -> TriMesh {
        TriMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
    }

    #[test]
    fn unit_triangle_obj_lines() {
        let mut buf = Vec::new();
        write_obj(&unit_triangle(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let v_lines = text.lines().filter(|l| l.starts_with("v ")).count();
        let f_lines = text.lines().filter(|l| l.starts_with("f ")).count();
        assert_eq!(v_lines, 3);
        assert_eq!(f_lines, 1);
        assert!(text.ends_with('\n'));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn export_reimport_round_trip() {
        let mut mesh = TriMesh::new(
            vec![
                [0.123456789123, -4.5e-3, 9876.54321],
                [1.0, 2.0, 3.0],
                [-0.25, 1e-12, 7.5],
                [3.14159265358979, -2.71828182845905, 0.5],
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        );
        mesh.tags = Some(vec![FaceTag::Branch, FaceTag::Leaf]);
        let mut buf = Vec::new();
        write_obj(&mesh, &mut buf).unwrap();
        let back = read_obj_str(std::str::from_utf8(&buf).unwrap());
        assert_eq!(back.faces, mesh.faces);
        for (a, b) in back.vertices.iter().zip(mesh.vertices.iter()) {
            for k in 0..3 {
                let scale = b[k].abs().max(1e-30);
                // 9 significant digits => relative error below 5e-9
                assert!(
                    (a[k] - b[k]).abs() / scale < 5e-9,
                    "print precision exceeded: {} vs {}",
                    a[k],
                    b[k]
                );
            }
        }
    }

    #[test]
    fn export_is_deterministic() {
        let mesh = unit_triangle();
        let mut one = Vec::new();
        let mut two = Vec::new();
        write_obj(&mesh, &mut one).unwrap();
        write_obj(&mesh, &mut two).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn group_lines_at_tag_transitions() {
        let mut mesh = TriMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]],
            vec![[0, 1, 2], [1, 3, 2]],
        );
        mesh.tags = Some(vec![FaceTag::Branch, FaceTag::Leaf]);
        let mut buf = Vec::new();
        write_obj(&mesh, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| *l == "g branch").count(), 1);
        assert_eq!(text.lines().filter(|l| *l == "g leaves").count(), 1);
    }

    #[test]
    fn validate_rejects_bad_meshes() {
        let mut mesh = unit_triangle();
        mesh.faces.push([0, 1, 7]);
        assert!(mesh.validate().is_err());

        let mut mesh = unit_triangle();
        mesh.faces[0] = [0, 0, 1];
        assert!(mesh.validate().is_err());

        let mut mesh = unit_triangle();
        mesh.vertices[0][2] = f64::NAN;
        assert!(mesh.validate().is_err());
    }

    #[test]
    fn fmt_sig9_cases() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(-0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(-2.5), "-2.5");
        assert_eq!(fmt_sig9(0.123456789123), "0.123456789");
        assert_eq!(fmt_sig9(123456789.123), "123456789");
        assert_eq!(fmt_sig9(1000.0), "1000");
        assert_eq!(fmt_sig9(1e-12), "1e-12");
        assert_eq!(fmt_sig9(9876.54321), "9876.54321");
    }

    #[test]
    fn merge_offsets_indices_and_tags() {
        let mut a = unit_triangle();
        let mut b = unit_triangle();
        b.tags = Some(vec![FaceTag::Leaf]);
        a.merge(&b);
        assert_eq!(a.vertices.len(), 6);
        assert_eq!(a.faces[1], [3, 4, 5]);
        assert_eq!(a.tags.as_ref().unwrap().as_slice(), &[FaceTag::Branch, FaceTag::Leaf]);
        a.validate().unwrap();
    }
}
