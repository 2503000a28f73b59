//! Recursive stem growth: seeded, deterministic, and purely additive in
//! its random draws so that zero-variance parameter sets are seed
//! independent.

use nalgebra::{Point3, Rotation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tree::params::{TreeParams, TreeShape};

/// Spine sample: position plus the local branch radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinePoint {
    pub position: Point3<f64>,
    pub radius: f64,
}

/// A leaf attachment: position on the stem and blade orientation
/// (leaf-local axes: +x width, +y along the blade, +z normal).
#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub position: Point3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

/// One stem: a polyline spine with radii, same-level split continuations
/// (`clones`), next-level `children`, and leaves on terminal levels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StemNode {
    pub level: usize,
    pub spine: Vec<SpinePoint>,
    pub children: Vec<StemNode>,
    pub clones: Vec<StemNode>,
    pub leaves: Vec<Leaf>,
}

impl StemNode {
    /// Stems in this subtree, counting clones.
    pub fn stem_count(&self) -> usize {
        1 + self.clones.iter().map(StemNode::stem_count).sum::<usize>()
            + self.children.iter().map(StemNode::stem_count).sum::<usize>()
    }

    /// Direct children of this stem plus of its clones (same level + 1).
    pub fn child_count(&self) -> usize {
        self.children.len() + self.clones.iter().map(StemNode::child_count).sum::<usize>()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
            + self.clones.iter().map(StemNode::leaf_count).sum::<usize>()
            + self.children.iter().map(StemNode::leaf_count).sum::<usize>()
    }
}

/// Crown envelope ratio from the Weber-Penn shape table. `ratio` runs from
/// 0 (crown tip) to 1 (crown base).
pub fn shape_ratio(shape: TreeShape, ratio: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::validation(format!("shape ratio argument {ratio} outside [0, 1]")));
    }
    use std::f64::consts::PI;
    Ok(match shape {
        TreeShape::Conical => 0.2 + 0.8 * ratio,
        TreeShape::Spherical => 0.2 + 0.8 * (PI * ratio).sin(),
        TreeShape::Hemispherical => 0.2 + 0.8 * (0.5 * PI * ratio).sin(),
        TreeShape::Cylindrical => 1.0,
        TreeShape::TaperedCylindrical => 0.5 + 0.5 * ratio,
        TreeShape::Flame => {
            if ratio <= 0.7 {
                ratio / 0.7
            } else {
                (1.0 - ratio) / 0.3
            }
        }
        TreeShape::InverseConical => 1.0 - 0.8 * ratio,
        TreeShape::TendFlame => {
            if ratio <= 0.7 {
                0.5 + 0.5 * ratio / 0.7
            } else {
                0.5 + 0.5 * (1.0 - ratio) / 0.3
            }
        }
        TreeShape::CustomEnvelope => {
            // pruning envelope with fixed peak/power defaults
            const PEAK: f64 = 0.5;
            const POWER_HIGH: f64 = 0.5;
            const POWER_LOW: f64 = 0.5;
            if ratio < 1.0 - PEAK {
                (ratio / (1.0 - PEAK)).powf(POWER_HIGH)
            } else {
                ((1.0 - ratio) / PEAK).powf(POWER_LOW)
            }
        }
    })
}

/// A bounded random offset; contributes exactly zero when `spread` is 0,
/// which keeps zero-variance parameter sets seed independent.
fn vary(rng: &mut ChaCha8Rng, spread: f64) -> f64 {
    rng.gen_range(-1.0..=1.0) * spread
}

fn rotate_about(v: &Vector3<f64>, axis: &Vector3<f64>, angle_rad: f64) -> Vector3<f64> {
    if angle_rad == 0.0 {
        return *v;
    }
    Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle_rad) * v
}

fn deg(x: f64) -> f64 {
    x.to_radians()
}

struct StemCtx {
    level: usize,
    /// total segment count of the (unsplit) stem
    n_total: usize,
    seg_len: f64,
    length: f64,
    base_radius: f64,
    unit_taper: f64,
}

impl StemCtx {
    fn radius_at(&self, t: f64) -> f64 {
        (self.base_radius * (1.0 - self.unit_taper * t)).max(self.base_radius * 1e-3)
    }
}

/// Grows the recursive stem structure for `params` under `seed`. All
/// stochastic draws come from the seeded generator and are scaled by the
/// `*_v` spreads.
pub fn grow(params: &TreeParams, seed: u64) -> Result<StemNode> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lv0 = &params.level[0];
    let trunk_len =
        (params.g_scale + vary(&mut rng, params.g_scale_v)) * (lv0.length + vary(&mut rng, lv0.length_v));
    if trunk_len <= 0.0 {
        return Err(Error::validation(format!("trunk length {trunk_len} must be > 0")));
    }
    let trunk_radius = trunk_len * params.ratio;
    let ctx = StemCtx {
        level: 0,
        n_total: lv0.curve_res as usize,
        seg_len: trunk_len / lv0.curve_res as f64,
        length: trunk_len,
        base_radius: trunk_radius,
        unit_taper: lv0.taper.clamp(0.0, 1.0),
    };
    grow_span(
        params,
        &ctx,
        0,
        Point3::origin(),
        Vector3::z(),
        Vector3::x(),
        &mut rng,
    )
}

fn grow_span(
    params: &TreeParams,
    ctx: &StemCtx,
    k_start: usize,
    start: Point3<f64>,
    heading0: Vector3<f64>,
    right0: Vector3<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<StemNode> {
    let lv = &params.level[ctx.level];
    let n = ctx.n_total;
    let mut heading = heading0.normalize();
    let right = right0.normalize();

    let mut node = StemNode { level: ctx.level, ..Default::default() };
    node.spine.push(SpinePoint { position: start, radius: ctx.radius_at(k_start as f64 / n as f64) });
    let mut rights = vec![right];

    // per-segment curvature; with curve_back the stem bends one way over
    // the first half and the other way over the second
    let half = (n as f64 / 2.0).ceil();
    let mut split_error = 0.0f64;

    for k in k_start..n {
        let base_delta = if lv.curve_back == 0.0 {
            lv.curve / n as f64
        } else if (k as f64) < half {
            lv.curve / half
        } else {
            lv.curve_back / (n as f64 - half).max(1.0)
        };
        let delta = deg(base_delta + vary(rng, lv.curve_v) / n as f64);
        heading = rotate_about(&heading, &right, delta).normalize();

        let pos = node.spine.last().unwrap().position + heading * ctx.seg_len;
        node.spine.push(SpinePoint { position: pos, radius: ctx.radius_at((k + 1) as f64 / n as f64) });
        rights.push(right);

        // fractional splits with error diffusion, between segments only
        if k + 1 < n && lv.seg_splits > 0.0 {
            let desired = lv.seg_splits + split_error;
            let count = desired.round().max(0.0);
            split_error = desired - count;
            let count = count as usize;
            if count > 0 {
                let split_angle = deg(lv.split_angle + vary(rng, lv.split_angle_v));
                for i in 0..count {
                    let tilted = rotate_about(&heading, &right, split_angle);
                    let spin = 2.0 * std::f64::consts::PI * (i + 1) as f64 / (count + 1) as f64;
                    let clone_heading = rotate_about(&tilted, &heading, spin);
                    let clone_right = rotate_about(&right, &heading, spin);
                    let clone =
                        grow_span(params, ctx, k + 1, pos, clone_heading, clone_right, rng)?;
                    node.clones.push(clone);
                }
                // the surviving path takes the complementary deflection
                heading = rotate_about(&heading, &right, -split_angle / 2.0).normalize();
            }
        }
    }

    let span_len = (n - k_start) as f64 * ctx.seg_len;
    if k_start == 0 {
        attach_children(params, ctx, &mut node, &rights, rng)?;
    }
    if ctx.level as u32 == params.levels - 1 && params.leaf_count > 0 {
        attach_leaves(params, &mut node, &rights, span_len, rng)?;
    }
    Ok(node)
}

/// Samples position, tangent, right vector and radius at an arc-length
/// offset along a uniformly segmented spine.
fn sample_spine(
    spine: &[SpinePoint],
    rights: &[Vector3<f64>],
    seg_len: f64,
    offset: f64,
) -> (Point3<f64>, Vector3<f64>, Vector3<f64>, f64) {
    let n_seg = spine.len() - 1;
    let raw = offset / seg_len;
    let i = (raw.floor() as usize).min(n_seg - 1);
    let frac = (raw - i as f64).clamp(0.0, 1.0);
    let a = &spine[i];
    let b = &spine[i + 1];
    let pos = a.position + (b.position - a.position) * frac;
    let tangent = (b.position - a.position).normalize();
    let radius = a.radius + (b.radius - a.radius) * frac;
    (pos, tangent, rights[i], radius)
}

fn attach_children(
    params: &TreeParams,
    ctx: &StemCtx,
    node: &mut StemNode,
    rights: &[Vector3<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let child_level = ctx.level + 1;
    if child_level as u32 >= params.levels {
        return Ok(());
    }
    let child_lv = &params.level[child_level];
    let n_children = child_lv.branches as usize;
    if n_children == 0 {
        return Ok(());
    }
    let offset_start = if ctx.level == 0 { params.base_size * ctx.length } else { 0.0 };
    let span = ctx.length - offset_start;
    let mut rot_acc = 0.0f64;
    for j in 0..n_children {
        let offset = offset_start + span * (j as f64 + 0.5) / n_children as f64;
        let (pos, tangent, right_here, radius_here) =
            sample_spine(&node.spine, rights, ctx.seg_len, offset);

        let ratio_pos = if ctx.level == 0 {
            ((ctx.length - offset) / (ctx.length - offset_start)).clamp(0.0, 1.0)
        } else {
            (1.0 - offset / ctx.length).clamp(0.0, 1.0)
        };
        let envelope = shape_ratio(params.shape, ratio_pos)?;
        let child_len = (ctx.length * (child_lv.length + vary(rng, child_lv.length_v)) * envelope)
            .max(1e-4 * ctx.length);

        let down = deg(child_lv.down_angle + vary(rng, child_lv.down_angle_v));
        rot_acc += child_lv.rotate + vary(rng, child_lv.rotate_v);
        let spin = deg(rot_acc);

        let tilted = rotate_about(&tangent, &right_here, down);
        let child_heading = rotate_about(&tilted, &tangent, spin);
        let child_right = rotate_about(&right_here, &tangent, spin);

        let child_radius = (ctx.base_radius
            * (child_len / ctx.length).powf(params.ratio_power))
        .min(radius_here * 0.95)
        .max(ctx.base_radius * 1e-4);

        let child_ctx = StemCtx {
            level: child_level,
            n_total: child_lv.curve_res as usize,
            seg_len: child_len / child_lv.curve_res as f64,
            length: child_len,
            base_radius: child_radius,
            unit_taper: child_lv.taper.clamp(0.0, 1.0),
        };
        let child = grow_span(params, &child_ctx, 0, pos, child_heading, child_right, rng)?;
        node.children.push(child);
    }
    Ok(())
}

fn attach_leaves(
    params: &TreeParams,
    node: &mut StemNode,
    rights: &[Vector3<f64>],
    span_len: f64,
    _rng: &mut ChaCha8Rng,
) -> Result<()> {
    let count = params.leaf_count as usize;
    let seg_len = span_len / (node.spine.len() - 1) as f64;
    // golden-angle phyllotaxis around the stem, fixed base pitch plus the
    // bend hinge
    const GOLDEN_DEG: f64 = 137.50776405003785;
    let pitch = deg(50.0 + params.leaf_bend * 45.0);
    for j in 0..count {
        let offset = span_len * (j as f64 + 0.5) / count as f64;
        let (pos, tangent, right_here, _) = sample_spine(&node.spine, rights, seg_len, offset);
        let spin = deg(GOLDEN_DEG * j as f64);
        let axis = rotate_about(&right_here, &tangent, spin);
        let dir = rotate_about(&tangent, &axis, pitch);
        let normal = dir.cross(&axis).normalize();
        let side = normal.cross(&dir).normalize();
        let rot = Rotation3::from_basis_unchecked(&[side, dir, normal]);
        node.leaves.push(Leaf {
            position: pos,
            orientation: UnitQuaternion::from_rotation_matrix(&rot),
        });
    }
    Ok(())
}
