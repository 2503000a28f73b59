//! Mesh synthesis: stems become generalized cylinders (parallel-transport
//! framed polygon sweeps with pole caps), leaves become planar two-triangle
//! quads whose outline follows the leaf shape class.

use nalgebra::{Point3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{FaceTag, TriMesh};
use crate::tree::growth::{grow, Leaf, SpinePoint, StemNode};
use crate::tree::params::{LeafShape, TreeParams};

/// Default ring resolution of branch cross-sections.
pub const DEFAULT_RADIAL_RESOLUTION: usize = 8;

/// Sweeps a polygon cross-section along a spine. Rings are oriented by
/// parallel transport; both ends close with a pole vertex fan, so the
/// fragment is a closed 2-manifold. Vertex count is `rings * resolution + 2`.
pub fn mesh_stem(spine: &[SpinePoint], radial_resolution: usize) -> Result<TriMesh> {
    if spine.len() < 2 {
        return Err(Error::validation(format!(
            "spine needs at least 2 points, got {}",
            spine.len()
        )));
    }
    if radial_resolution < 3 {
        return Err(Error::validation(format!(
            "radial resolution must be >= 3, got {radial_resolution}"
        )));
    }
    let n_rings = spine.len();
    let res = radial_resolution;

    let mut dirs = Vec::with_capacity(n_rings - 1);
    for w in spine.windows(2) {
        let d = w[1].position - w[0].position;
        let len = d.norm();
        if len < 1e-12 {
            return Err(Error::validation("zero-length spine segment".to_string()));
        }
        dirs.push(d / len);
    }
    // per-point tangents: segment average in the interior
    let mut tangents = Vec::with_capacity(n_rings);
    tangents.push(dirs[0]);
    for i in 1..n_rings - 1 {
        tangents.push((dirs[i - 1] + dirs[i]).normalize());
    }
    tangents.push(dirs[n_rings - 2]);

    // initial normal: perpendicular to the first tangent, seeded from the
    // least-aligned coordinate axis
    let t0 = tangents[0];
    let seed_axis = if t0.x.abs() <= t0.y.abs() && t0.x.abs() <= t0.z.abs() {
        Vector3::x()
    } else if t0.y.abs() <= t0.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let mut normal = t0.cross(&seed_axis).cross(&t0).normalize();

    let mut vertices: Vec<[f64; 3]> = Vec::with_capacity(n_rings * res + 2);
    for (i, point) in spine.iter().enumerate() {
        if i > 0 {
            // transport the frame by the rotation taking the previous
            // tangent onto the current one
            if let Some(rot) = Rotation3::rotation_between(&tangents[i - 1], &tangents[i]) {
                normal = rot * normal;
            } else {
                return Err(Error::numeric(
                    "spine reverses direction; transport frame undefined".to_string(),
                ));
            }
            // keep the frame orthonormal against drift
            normal = (normal - tangents[i] * normal.dot(&tangents[i])).normalize();
        }
        let binormal = tangents[i].cross(&normal);
        for k in 0..res {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / res as f64;
            let p = point.position + (normal * theta.cos() + binormal * theta.sin()) * point.radius;
            vertices.push([p.x, p.y, p.z]);
        }
    }
    let bottom_pole = vertices.len();
    let p0 = spine[0].position;
    vertices.push([p0.x, p0.y, p0.z]);
    let top_pole = vertices.len();
    let pl = spine[n_rings - 1].position;
    vertices.push([pl.x, pl.y, pl.z]);

    let ring = |i: usize, k: usize| i * res + (k % res);
    let mut faces: Vec<[usize; 3]> = Vec::with_capacity(2 * res * (n_rings - 1) + 2 * res);
    for i in 0..n_rings - 1 {
        for k in 0..res {
            let v0 = ring(i, k);
            let v1 = ring(i, k + 1);
            let u0 = ring(i + 1, k);
            let u1 = ring(i + 1, k + 1);
            faces.push([v0, v1, u1]);
            faces.push([v0, u1, u0]);
        }
    }
    for k in 0..res {
        faces.push([bottom_pole, ring(0, k + 1), ring(0, k)]);
        faces.push([top_pole, ring(n_rings - 1, k), ring(n_rings - 1, k + 1)]);
    }

    let mesh = TriMesh { vertices, faces, tags: None };
    mesh.validate()?;
    Ok(mesh)
}

/// Leaf outline template: half-width factor and the height fraction of the
/// widest point. The blade is a planar quad (two triangles).
fn leaf_outline(shape: LeafShape) -> (f64, f64) {
    match shape {
        LeafShape::Ovate => (0.5, 0.45),
        LeafShape::Linear => (0.12, 0.5),
        LeafShape::Cordate => (0.55, 0.3),
        LeafShape::Lanceolate => (0.25, 0.35),
        LeafShape::Elliptic => (0.4, 0.5),
        LeafShape::Fan => (0.65, 0.75),
        LeafShape::Needle => (0.05, 0.5),
        LeafShape::Palmate => (0.6, 0.4),
    }
}

fn leaf_quad(leaf: &Leaf, params: &TreeParams) -> TriMesh {
    let (half_width, mid) = leaf_outline(params.leaf_shape);
    let length = params.leaf_scale;
    let width = params.leaf_scale * params.leaf_scale_x;
    let local = [
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(-half_width * width, mid * length, 0.0),
        Vector3::new(0.0, length, 0.0),
        Vector3::new(half_width * width, mid * length, 0.0),
    ];
    let vertices: Vec<[f64; 3]> = local
        .iter()
        .map(|v| {
            let p: Point3<f64> = leaf.position + leaf.orientation * v;
            [p.x, p.y, p.z]
        })
        .collect();
    TriMesh {
        vertices,
        faces: vec![[0, 1, 2], [0, 2, 3]],
        tags: Some(vec![FaceTag::Leaf, FaceTag::Leaf]),
    }
}

fn visit_stems<'a>(node: &'a StemNode, out: &mut Vec<&'a StemNode>) {
    out.push(node);
    for clone in &node.clones {
        visit_stems(clone, out);
    }
    for child in &node.children {
        visit_stems(child, out);
    }
}

/// Grows and meshes a whole tree: every stem fragment first (tagged
/// `branch`), then every leaf quad (tagged `leaf`), merged into one mesh.
/// Deterministic per `(params, seed, resolution)`.
pub fn generate_tree_with(params: &TreeParams, seed: u64, radial_resolution: usize) -> Result<TriMesh> {
    let root = grow(params, seed)?;
    let mut stems = Vec::new();
    visit_stems(&root, &mut stems);

    let mut mesh = TriMesh { vertices: Vec::new(), faces: Vec::new(), tags: Some(Vec::new()) };
    for stem in &stems {
        let mut fragment = mesh_stem(&stem.spine, radial_resolution)?;
        fragment.tags = Some(vec![FaceTag::Branch; fragment.faces.len()]);
        mesh.merge(&fragment);
    }
    for stem in &stems {
        for leaf in &stem.leaves {
            mesh.merge(&leaf_quad(leaf, params));
        }
    }
    mesh.validate()?;
    Ok(mesh)
}

/// [`generate_tree_with`] at the default radial resolution.
pub fn generate_tree(params: &TreeParams, seed: u64) -> Result<TriMesh> {
    generate_tree_with(params, seed, DEFAULT_RADIAL_RESOLUTION)
}
