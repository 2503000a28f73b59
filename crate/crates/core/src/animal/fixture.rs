//! Procedural quadruped fixture: a fixed-topology body (ellipsoidal torso,
//! tube limbs, neck, head, tail, ear fins) whose vertex positions are
//! smooth functions of a small parameter record. Sampling the parameters
//! yields labeled synthetic "species" registrations with verifiable ground
//! truth for the PCA / skinning machinery.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::animal::{fit_pca, AnimalModel, Skeleton};
use crate::error::Result;

const TORSO_RINGS: usize = 9;
const TORSO_SIDES: usize = 12;
const LEG_RINGS: usize = 8;
const LEG_SIDES: usize = 6;
const NECK_RINGS: usize = 4;
const NECK_SIDES: usize = 8;
const HEAD_RINGS: usize = 4;
const HEAD_SIDES: usize = 8;
const TAIL_RINGS: usize = 6;
const TAIL_SIDES: usize = 4;

/// Joint count of the fixture skeleton.
pub const N_JOINTS: usize = 33;

/// Smooth body-shape parameters; every vertex position is a smooth
/// function of these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrupedParams {
    pub torso_length: f64,
    pub torso_radius: f64,
    pub belly_drop: f64,
    pub leg_length: f64,
    pub leg_radius: f64,
    pub neck_length: f64,
    /// Angle of the neck from vertical, radians.
    pub neck_angle: f64,
    pub head_size: f64,
    pub snout_length: f64,
    pub tail_length: f64,
    pub tail_droop: f64,
    pub ear_size: f64,
}

impl Default for QuadrupedParams {
    fn default() -> Self {
        QuadrupedParams {
            torso_length: 1.2,
            torso_radius: 0.32,
            belly_drop: 0.06,
            leg_length: 0.65,
            leg_radius: 0.07,
            neck_length: 0.45,
            neck_angle: 0.7,
            head_size: 0.17,
            snout_length: 0.16,
            tail_length: 0.5,
            tail_droop: 0.5,
            ear_size: 0.10,
        }
    }
}

struct Ring {
    start: usize,
    size: usize,
}

/// Vertex index layout of the fixed topology.
struct Layout {
    torso: Vec<Ring>,
    legs: [Vec<Ring>; 4],
    neck: Vec<Ring>,
    head: Vec<Ring>,
    nose: usize,
    tail: Vec<Ring>,
    ears: [[usize; 3]; 2],
    total: usize,
}

fn take_rings(next: &mut usize, count: usize, size: usize) -> Vec<Ring> {
    (0..count)
        .map(|_| {
            let r = Ring { start: *next, size };
            *next += size;
            r
        })
        .collect()
}

fn layout() -> Layout {
    let mut next = 0usize;
    let torso = take_rings(&mut next, TORSO_RINGS, TORSO_SIDES);
    let legs = [
        take_rings(&mut next, LEG_RINGS, LEG_SIDES),
        take_rings(&mut next, LEG_RINGS, LEG_SIDES),
        take_rings(&mut next, LEG_RINGS, LEG_SIDES),
        take_rings(&mut next, LEG_RINGS, LEG_SIDES),
    ];
    let neck = take_rings(&mut next, NECK_RINGS, NECK_SIDES);
    let head = take_rings(&mut next, HEAD_RINGS, HEAD_SIDES);
    let nose = next;
    next += 1;
    let tail = take_rings(&mut next, TAIL_RINGS, TAIL_SIDES);
    let ears = [
        [next, next + 1, next + 2],
        [next + 3, next + 4, next + 5],
    ];
    next += 6;
    Layout { torso, legs, neck, head, nose, tail, ears, total: next }
}

/// Total vertex count of the fixture topology.
pub fn n_vertices() -> usize {
    layout().total
}

fn set(verts: &mut Array2<f64>, idx: usize, p: [f64; 3]) {
    verts[[idx, 0]] = p[0];
    verts[[idx, 1]] = p[1];
    verts[[idx, 2]] = p[2];
}

/// Leg anchor positions on the torso: (x sign, y sign) per leg in the
/// order front-left, front-right, hind-left, hind-right.
const LEG_ANCHORS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];

/// Vertex positions for a parameter record. The topology (see
/// [`quadruped_faces`]) is identical for every record, so outputs are
/// registrations in dense correspondence.
pub fn quadruped_vertices(p: &QuadrupedParams) -> Array2<f64> {
    let lay = layout();
    let mut v = Array2::zeros((lay.total, 3));
    let z0 = p.leg_length + p.torso_radius * 0.4; // torso axis height
    let half = p.torso_length / 2.0;

    // torso: x from -half (hip) to +half (chest), elliptical sections with
    // a mid-body bulge and a dropped belly
    for (i, ring) in lay.torso.iter().enumerate() {
        let t = i as f64 / (TORSO_RINGS - 1) as f64;
        let x = -half + t * p.torso_length;
        let r = p.torso_radius * (0.78 + 0.22 * (std::f64::consts::PI * t).sin());
        for k in 0..ring.size {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / ring.size as f64;
            let y = r * theta.sin();
            let mut z = r * theta.cos();
            if z < 0.0 {
                z *= 1.0 + p.belly_drop / p.torso_radius;
            }
            set(&mut v, ring.start + k, [x, y, z0 + z]);
        }
    }

    // legs: straight tubes from the torso underside to the ground, with a
    // light taper and a forward paw offset on the lowest ring
    for (leg, rings) in lay.legs.iter().enumerate() {
        let (sx, sy) = LEG_ANCHORS[leg];
        let cx = sx * (half * 0.72);
        let cy = sy * (p.torso_radius * 0.55);
        for (j, ring) in rings.iter().enumerate() {
            let t = j as f64 / (LEG_RINGS - 1) as f64;
            let z = z0 * (1.0 - t);
            let r = p.leg_radius * (1.1 - 0.35 * t);
            let paw = if j == LEG_RINGS - 1 { p.leg_radius * 0.8 } else { 0.0 };
            for k in 0..ring.size {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / ring.size as f64;
                set(
                    &mut v,
                    ring.start + k,
                    [cx + r * theta.cos() + paw, cy + r * theta.sin(), z],
                );
            }
        }
    }

    // neck: tube leaving the chest along the neck direction
    let neck_dir = [p.neck_angle.sin(), 0.0, p.neck_angle.cos()];
    let neck_base = [half * 0.95, 0.0, z0 + p.torso_radius * 0.35];
    for (i, ring) in lay.neck.iter().enumerate() {
        let t = i as f64 / (NECK_RINGS - 1) as f64;
        let c = [
            neck_base[0] + neck_dir[0] * p.neck_length * t,
            neck_base[1],
            neck_base[2] + neck_dir[2] * p.neck_length * t,
        ];
        let r = p.torso_radius * (0.42 - 0.12 * t);
        for k in 0..ring.size {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / ring.size as f64;
            // ring plane tilted with the neck: use (cos, sin) in the plane
            // orthogonal to the neck direction
            let a = theta.cos();
            let b = theta.sin();
            set(
                &mut v,
                ring.start + k,
                [
                    c[0] + a * r * neck_dir[2],
                    c[1] + b * r,
                    c[2] - a * r * neck_dir[0],
                ],
            );
        }
    }

    // head: ellipsoid rings along the snout axis, plus a nose tip
    let head_center = [
        neck_base[0] + neck_dir[0] * p.neck_length + p.head_size * 0.6,
        0.0,
        neck_base[2] + neck_dir[2] * p.neck_length + p.head_size * 0.2,
    ];
    for (i, ring) in lay.head.iter().enumerate() {
        let t = i as f64 / (HEAD_RINGS - 1) as f64; // 0 back of skull, 1 snout base
        let x = head_center[0] + (t - 0.35) * (p.head_size + p.snout_length * t);
        let r = p.head_size * (1.0 - 0.55 * (t - 0.35).powi(2) / 0.42).max(0.25);
        for k in 0..ring.size {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / ring.size as f64;
            set(
                &mut v,
                ring.start + k,
                [x, r * theta.sin(), head_center[2] + r * theta.cos()],
            );
        }
    }
    set(
        &mut v,
        lay.nose,
        [
            head_center[0] + p.head_size * 0.65 + p.snout_length,
            0.0,
            head_center[2] - p.head_size * 0.1,
        ],
    );

    // tail: drooping tube off the hip
    let tail_base = [-half * 0.98, 0.0, z0 + p.torso_radius * 0.3];
    for (i, ring) in lay.tail.iter().enumerate() {
        let t = (i + 1) as f64 / TAIL_RINGS as f64;
        let c = [
            tail_base[0] - p.tail_length * t,
            0.0,
            tail_base[2] - p.tail_droop * p.tail_length * t * t,
        ];
        let r = p.torso_radius * 0.13 * (1.0 - 0.7 * t);
        for k in 0..ring.size {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / ring.size as f64;
            set(&mut v, ring.start + k, [c[0], c[1] + r * theta.sin(), c[2] + r * theta.cos()]);
        }
    }

    // ears: two triangular fins on top of the skull
    let ear_base_x = head_center[0] - p.head_size * 0.3;
    for (e, sign) in [(0usize, 1.0f64), (1, -1.0)] {
        let y = sign * p.head_size * 0.55;
        let top = head_center[2] + p.head_size * 0.8;
        set(&mut v, lay.ears[e][0], [ear_base_x - p.ear_size * 0.4, y, top]);
        set(&mut v, lay.ears[e][1], [ear_base_x + p.ear_size * 0.4, y, top]);
        set(
            &mut v,
            lay.ears[e][2],
            [ear_base_x, y + sign * p.ear_size * 0.3, top + p.ear_size],
        );
    }

    v
}

fn tube_faces(rings: &[Ring], faces: &mut Vec<[usize; 3]>) {
    for w in rings.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        for k in 0..a.size {
            let k1 = (k + 1) % a.size;
            faces.push([a.start + k, a.start + k1, b.start + k1]);
            faces.push([a.start + k, b.start + k1, b.start + k]);
        }
    }
}

/// Fixed triangulation shared by every registration.
pub fn quadruped_faces() -> Vec<[usize; 3]> {
    let lay = layout();
    let mut faces = Vec::new();
    tube_faces(&lay.torso, &mut faces);
    for leg in &lay.legs {
        tube_faces(leg, &mut faces);
    }
    tube_faces(&lay.neck, &mut faces);
    tube_faces(&lay.head, &mut faces);
    // snout fan onto the nose tip
    let last = lay.head.last().unwrap();
    for k in 0..last.size {
        let k1 = (k + 1) % last.size;
        faces.push([last.start + k, last.start + k1, lay.nose]);
    }
    tube_faces(&lay.tail, &mut faces);
    for ear in &lay.ears {
        faces.push([ear[0], ear[1], ear[2]]);
    }
    faces
}

/// Piecewise-linear blend of joint weights along a chain of anchors at
/// normalized positions.
fn chain_weights(t: f64, anchors: &[(f64, usize)], row: &mut ndarray::ArrayViewMut1<f64>) {
    if t <= anchors[0].0 {
        row[anchors[0].1] = 1.0;
        return;
    }
    for w in anchors.windows(2) {
        let ((t0, j0), (t1, j1)) = (w[0], w[1]);
        if t <= t1 {
            let a = (t - t0) / (t1 - t0);
            row[j0] = 1.0 - a;
            row[j1] += a;
            return;
        }
    }
    row[anchors.last().unwrap().1] = 1.0;
}

// joint indices
const J_ROOT: usize = 0;
const J_SPINE: [usize; 3] = [1, 2, 3];
const J_NECK: [usize; 2] = [4, 5];
const J_HEAD: usize = 6;
const J_NOSE: usize = 7;
const J_TAIL: [usize; 5] = [8, 9, 10, 11, 12];
// per leg: upper, knee, ankle, foot, toe
const J_LEG: [[usize; 5]; 4] = [
    [13, 14, 15, 16, 17],
    [18, 19, 20, 21, 22],
    [23, 24, 25, 26, 27],
    [28, 29, 30, 31, 32],
];

/// The fixture skeleton: 33 joints regressed from fixed vertex rings, with
/// ring-blended skinning weights. Shared by every registration.
fn uniform_row(jr: &mut Array2<f64>, joint: usize, rings: &[&Ring]) {
    let count: usize = rings.iter().map(|r| r.size).sum();
    for r in rings {
        for k in 0..r.size {
            jr[[joint, r.start + k]] = 1.0 / count as f64;
        }
    }
}

pub fn quadruped_skeleton() -> Skeleton {
    let lay = layout();
    let n_v = lay.total;
    let mut jr = Array2::<f64>::zeros((N_JOINTS, n_v));

    uniform_row(&mut jr, J_ROOT, &[&lay.torso[0], &lay.torso[1]]);
    uniform_row(&mut jr, J_SPINE[0], &[&lay.torso[3]]);
    uniform_row(&mut jr, J_SPINE[1], &[&lay.torso[5]]);
    uniform_row(&mut jr, J_SPINE[2], &[&lay.torso[7], &lay.torso[8]]);
    uniform_row(&mut jr, J_NECK[0], &[&lay.neck[0], &lay.neck[1]]);
    uniform_row(&mut jr, J_NECK[1], &[&lay.neck[2], &lay.neck[3]]);
    uniform_row(&mut jr, J_HEAD, &[&lay.head[0], &lay.head[1], &lay.head[2]]);
    jr[[J_NOSE, lay.nose]] = 1.0;
    for (k, &j) in J_TAIL.iter().enumerate() {
        uniform_row(&mut jr, j, &[&lay.tail[k.min(TAIL_RINGS - 1)]]);
    }
    for (leg, joints) in J_LEG.iter().enumerate() {
        let rings = &lay.legs[leg];
        uniform_row(&mut jr, joints[0], &[&rings[0]]);
        uniform_row(&mut jr, joints[1], &[&rings[2], &rings[3]]);
        uniform_row(&mut jr, joints[2], &[&rings[5]]);
        uniform_row(&mut jr, joints[3], &[&rings[6]]);
        uniform_row(&mut jr, joints[4], &[&rings[7]]);
    }

    let mut parents: Vec<Option<usize>> = vec![None; N_JOINTS];
    parents[J_SPINE[0]] = Some(J_ROOT);
    parents[J_SPINE[1]] = Some(J_SPINE[0]);
    parents[J_SPINE[2]] = Some(J_SPINE[1]);
    parents[J_NECK[0]] = Some(J_SPINE[2]);
    parents[J_NECK[1]] = Some(J_NECK[0]);
    parents[J_HEAD] = Some(J_NECK[1]);
    parents[J_NOSE] = Some(J_HEAD);
    parents[J_TAIL[0]] = Some(J_ROOT);
    for w in J_TAIL.windows(2) {
        parents[w[1]] = Some(w[0]);
    }
    for (leg, joints) in J_LEG.iter().enumerate() {
        parents[joints[0]] = Some(if leg < 2 { J_SPINE[2] } else { J_ROOT });
        for w in joints.windows(2) {
            parents[w[1]] = Some(w[0]);
        }
    }

    let mut skin = Array2::<f64>::zeros((n_v, N_JOINTS));
    for (i, ring) in lay.torso.iter().enumerate() {
        let t = i as f64 / (TORSO_RINGS - 1) as f64;
        let anchors =
            [(0.0, J_ROOT), (0.34, J_SPINE[0]), (0.62, J_SPINE[1]), (1.0, J_SPINE[2])];
        for k in 0..ring.size {
            chain_weights(t, &anchors, &mut skin.row_mut(ring.start + k));
        }
    }
    for (leg, joints) in J_LEG.iter().enumerate() {
        let anchors = [
            (0.0, joints[0]),
            (0.35, joints[1]),
            (0.7, joints[2]),
            (0.87, joints[3]),
            (1.0, joints[4]),
        ];
        for (j, ring) in lay.legs[leg].iter().enumerate() {
            let t = j as f64 / (LEG_RINGS - 1) as f64;
            for k in 0..ring.size {
                chain_weights(t, &anchors, &mut skin.row_mut(ring.start + k));
            }
        }
    }
    for (i, ring) in lay.neck.iter().enumerate() {
        let t = i as f64 / (NECK_RINGS - 1) as f64;
        let anchors = [(0.0, J_SPINE[2]), (0.5, J_NECK[0]), (1.0, J_NECK[1])];
        for k in 0..ring.size {
            chain_weights(t, &anchors, &mut skin.row_mut(ring.start + k));
        }
    }
    for ring in &lay.head {
        for k in 0..ring.size {
            skin[[ring.start + k, J_HEAD]] = 1.0;
        }
    }
    skin[[lay.nose, J_NOSE]] = 1.0;
    for (i, ring) in lay.tail.iter().enumerate() {
        let t = i as f64 / (TAIL_RINGS - 1) as f64;
        let anchors = [
            (0.0, J_TAIL[0]),
            (0.25, J_TAIL[1]),
            (0.5, J_TAIL[2]),
            (0.75, J_TAIL[3]),
            (1.0, J_TAIL[4]),
        ];
        for k in 0..ring.size {
            chain_weights(t, &anchors, &mut skin.row_mut(ring.start + k));
        }
    }
    for ear in &lay.ears {
        for &idx in ear {
            skin[[idx, J_HEAD]] = 1.0;
        }
    }

    Skeleton { joint_regressor: jr, parents, skinning: skin }
}

/// Labels assigned to synthetic species, in index order.
pub const SPECIES_LABELS: [&str; 26] = [
    "Addax", "Bongo", "Chamois", "Dhole", "Eland", "Fossa", "Gaur", "Hartebeest", "Ibex",
    "Jackal", "Kudu", "Lechwe", "Markhor", "Nilgai", "Okapi", "Pudu", "Quokka", "Rhebok",
    "Serow", "Takin", "Urial", "Vicuna", "Wisent", "Xerus", "Yak", "Zorilla",
];

/// Deterministic species parameters: the default body smoothly perturbed
/// by bounded factors drawn from a generator seeded with `(seed, index)`.
pub fn species_params(index: usize, seed: u64) -> QuadrupedParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E3779B97F4A7C15) ^ index as u64);
    let mut vary = |base: f64, rel: f64| base * (1.0 + rng.gen_range(-rel..rel));
    let d = QuadrupedParams::default();
    QuadrupedParams {
        torso_length: vary(d.torso_length, 0.25),
        torso_radius: vary(d.torso_radius, 0.3),
        belly_drop: vary(d.belly_drop, 0.6),
        leg_length: vary(d.leg_length, 0.35),
        leg_radius: vary(d.leg_radius, 0.3),
        neck_length: vary(d.neck_length, 0.4),
        neck_angle: vary(d.neck_angle, 0.3),
        head_size: vary(d.head_size, 0.25),
        snout_length: vary(d.snout_length, 0.45),
        tail_length: vary(d.tail_length, 0.5),
        tail_droop: vary(d.tail_droop, 0.5),
        ear_size: vary(d.ear_size, 0.4),
    }
}

/// `count` labeled registrations in dense correspondence.
pub fn synthetic_registrations(count: usize, seed: u64) -> Vec<(String, Array2<f64>)> {
    assert!(count <= SPECIES_LABELS.len(), "at most {} species", SPECIES_LABELS.len());
    (0..count)
        .map(|i| {
            let params = species_params(i, seed);
            (SPECIES_LABELS[i].to_string(), quadruped_vertices(&params))
        })
        .collect()
}

/// Fits a complete animal model on `count` synthetic species.
pub fn build_animal_model(count: usize, n_components: usize, seed: u64) -> Result<AnimalModel> {
    let regs = synthetic_registrations(count, seed);
    let faces = quadruped_faces();
    let vertex_sets: Vec<Array2<f64>> = regs.iter().map(|(_, v)| v.clone()).collect();
    let space = fit_pca(&vertex_sets, &faces, n_components)?;
    let mut betas = Array2::zeros((count, space.n_components()));
    for (i, v) in vertex_sets.iter().enumerate() {
        betas.row_mut(i).assign(&space.project(v)?);
    }
    let model = AnimalModel {
        space,
        skeleton: quadruped_skeleton(),
        labels: regs.into_iter().map(|(l, _)| l).collect(),
        betas,
    };
    model.validate()?;
    Ok(model)
}

/// Beta rows as labeled records for codec fitting: field `beta_<k>` per
/// component.
pub fn beta_records(model: &AnimalModel) -> Vec<(String, crate::codec::ParamRecord)> {
    model
        .labels
        .iter()
        .zip(model.betas.outer_iter())
        .map(|(label, beta)| {
            let mut rec = crate::codec::ParamRecord::default();
            for (k, v) in beta.iter().enumerate() {
                rec.set(&beta_field_name(k), crate::codec::ParamValue::Numeric(*v));
            }
            (label.clone(), rec)
        })
        .collect()
}

/// Schema for encoded shape coefficients.
pub fn beta_schema(n_components: usize) -> crate::codec::ParamSchema {
    let fields = (0..n_components)
        .map(|k| crate::codec::FieldSpec::numeric(&beta_field_name(k), f64::NEG_INFINITY, f64::INFINITY))
        .collect();
    crate::codec::ParamSchema::new(fields).expect("unique generated names")
}

pub fn beta_field_name(k: usize) -> String {
    format!("beta_{k:03}")
}

/// Reads a beta vector back out of a decoded record.
pub fn beta_from_record(rec: &crate::codec::ParamRecord, n_components: usize) -> Result<Array1<f64>> {
    let mut beta = Array1::zeros(n_components);
    for k in 0..n_components {
        match rec.get(&beta_field_name(k)) {
            Some(crate::codec::ParamValue::Numeric(v)) => beta[k] = *v,
            _ => {
                return Err(crate::error::Error::validation(format!(
                    "record missing numeric field {}",
                    beta_field_name(k)
                )))
            }
        }
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::animal::{pose_lbs, regress_joints, Pose};

    #[test]
    fn topology_is_valid_and_stable() {
        let params = QuadrupedParams::default();
        let verts = quadruped_vertices(&params);
        let faces = quadruped_faces();
        let mesh = crate::mesh::TriMesh::new(
            verts.outer_iter().map(|v| [v[0], v[1], v[2]]).collect(),
            faces,
        );
        mesh.validate().unwrap();
        // roughly 400 vertices, exactly 33 joints
        let n = n_vertices();
        assert!((330..=460).contains(&n), "vertex count {n}");
        assert_eq!(N_JOINTS, 33);
    }

    #[test]
    fn skeleton_satisfies_invariants() {
        let sk = quadruped_skeleton();
        sk.validate(n_vertices()).unwrap();
        assert_eq!(sk.n_joints(), 33);
    }

    #[test]
    fn registrations_share_topology_and_differ() {
        let regs = synthetic_registrations(5, 7);
        let n = n_vertices();
        for (_, v) in &regs {
            assert_eq!(v.nrows(), n);
        }
        assert_ne!(regs[0].1, regs[1].1);
        assert_eq!(regs[0].0, "Addax");
    }

    #[test]
    fn species_params_deterministic() {
        assert_eq!(species_params(3, 42), species_params(3, 42));
        assert_ne!(species_params(3, 42), species_params(4, 42));
    }

    #[test]
    fn fixture_posing_runs_end_to_end() {
        let model = build_animal_model(6, 5, 11).unwrap();
        let beta = model.betas.row(2).to_owned();
        let verts = model.space.shape_mesh(&beta).unwrap();
        let mut pose = Pose::identity(model.skeleton.n_joints());
        pose.rotations[J_NECK[0]] = [0.0, 0.4, 0.0];
        pose.rotations[J_LEG[0][1]] = [0.0, -0.6, 0.0];
        pose.translation = [0.0, 0.0, 0.1];
        let posed = pose_lbs(&verts, &pose, &model.skeleton).unwrap();
        assert_eq!(posed.dim(), verts.dim());
        assert!(posed.iter().all(|v| v.is_finite()));
        // neck rotation must not move hip vertices
        let joints = regress_joints(&model.skeleton, &verts).unwrap();
        assert!(joints.nrows() == 33);
        let hip_vertex = 0usize;
        for k in 0..3 {
            let expect = verts[[hip_vertex, k]] + pose.translation[k];
            assert!((posed[[hip_vertex, k]] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_records_round_trip() {
        let model = build_animal_model(4, 3, 1).unwrap();
        let recs = beta_records(&model);
        assert_eq!(recs.len(), 4);
        let beta = beta_from_record(&recs[1].1, model.space.n_components()).unwrap();
        for (a, b) in beta.iter().zip(model.betas.row(1).iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
