//! Statistical quadruped model: a PCA shape space over registered meshes
//! of identical topology, a joint regressor, and linear blend skinning.
//!
//! The shipped training data is a procedural fixture (see [`fixture`]);
//! the machinery is the same as for scan-derived registrations.

pub mod fixture;

use nalgebra::{DMatrix, Matrix3, Vector3};
use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Triangular mesh template: rest-pose vertices plus fixed topology.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshTemplate {
    /// n_V x 3 vertex positions.
    pub vertices: Array2<f64>,
    pub faces: Vec<[usize; 3]>,
}

impl MeshTemplate {
    pub fn n_vertices(&self) -> usize {
        self.vertices.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        self.to_trimesh(&self.vertices).validate()
    }

    pub fn to_trimesh(&self, vertices: &Array2<f64>) -> TriMesh {
        TriMesh::new(
            vertices.outer_iter().map(|v| [v[0], v[1], v[2]]).collect(),
            self.faces.clone(),
        )
    }
}

/// Linear shape space: template plus basis columns scaled so that the
/// training coefficients have unit variance per component.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpace {
    pub template: MeshTemplate,
    /// 3 n_V x n_B; column k is the k-th principal direction scaled by the
    /// per-component standard deviation.
    pub basis: Array2<f64>,
    /// Per-component standard deviations of the training projections.
    pub sigmas: Array1<f64>,
}

impl ShapeSpace {
    pub fn n_components(&self) -> usize {
        self.basis.ncols()
    }

    /// v_s = v_t + reshape(B beta).
    pub fn shape_mesh(&self, beta: &Array1<f64>) -> Result<Array2<f64>> {
        if beta.len() != self.n_components() {
            return Err(Error::validation(format!(
                "beta has dim {}, shape space has {} components",
                beta.len(),
                self.n_components()
            )));
        }
        let offset = self.basis.dot(beta);
        let n_v = self.template.n_vertices();
        let mut out = self.template.vertices.clone();
        for (i, mut row) in out.outer_iter_mut().enumerate() {
            for k in 0..3 {
                row[k] += offset[3 * i + k];
            }
        }
        debug_assert_eq!(offset.len(), 3 * n_v);
        Ok(out)
    }

    /// Projects a registration onto the shape space, returning the
    /// coefficients that best reconstruct it.
    pub fn project(&self, vertices: &Array2<f64>) -> Result<Array1<f64>> {
        if vertices.dim() != self.template.vertices.dim() {
            return Err(Error::validation(format!(
                "registration has {:?} vertices, template has {:?}",
                vertices.dim(),
                self.template.vertices.dim()
            )));
        }
        let diff = flatten_vertices(vertices) - flatten_vertices(&self.template.vertices);
        let mut beta = Array1::zeros(self.n_components());
        for k in 0..self.n_components() {
            let col = self.basis.column(k);
            let sigma2 = self.sigmas[k] * self.sigmas[k];
            beta[k] = col.dot(&diff) / sigma2;
        }
        Ok(beta)
    }

    /// Checks that basis columns are mutually orthogonal.
    pub fn validate(&self) -> Result<()> {
        for j in 0..self.n_components() {
            for k in (j + 1)..self.n_components() {
                let a = self.basis.column(j);
                let b = self.basis.column(k);
                let na = a.dot(&a).sqrt();
                let nb = b.dot(&b).sqrt();
                if na == 0.0 || nb == 0.0 {
                    return Err(Error::validation(format!("zero basis column {j} or {k}")));
                }
                let cosine = a.dot(&b) / (na * nb);
                if cosine.abs() > 1e-8 {
                    return Err(Error::validation(format!(
                        "basis columns {j}, {k} not orthogonal: cos = {cosine}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn flatten_vertices(v: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(v.iter().copied())
}

/// Learns a shape space from registrations of identical topology. The mean
/// becomes the template; the basis holds `min(n_components, samples - 1)`
/// principal directions scaled to unit training variance.
///
/// Implemented through the eigendecomposition of the n x n Gram matrix,
/// which is exact and cheap for small sample counts.
pub fn fit_pca(
    registrations: &[Array2<f64>],
    faces: &[[usize; 3]],
    n_components: usize,
) -> Result<ShapeSpace> {
    let n = registrations.len();
    if n < 2 {
        return Err(Error::validation(format!("PCA needs at least 2 registrations, got {n}")));
    }
    let dim = registrations[0].dim();
    for (i, r) in registrations.iter().enumerate() {
        if r.dim() != dim {
            return Err(Error::validation(format!(
                "registration {i} has {:?} vertices, expected {:?}",
                r.dim(),
                dim
            )));
        }
    }
    let m = dim.0 * 3;
    let mut data = Array2::zeros((n, m));
    for (i, r) in registrations.iter().enumerate() {
        data.row_mut(i).assign(&flatten_vertices(r));
    }
    let mean = data.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &data - &mean;

    // Gram trick: eigenvectors of (A A^T) lift to principal directions
    let gram_nd = centered.dot(&centered.t());
    let gram = DMatrix::from_fn(n, n, |i, j| gram_nd[[i, j]]);
    let eig = gram.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let max_eig = eig.eigenvalues[order[0]].max(0.0);
    let keep = n_components.min(n - 1);
    let mut cols: Vec<Array1<f64>> = Vec::new();
    let mut sigmas: Vec<f64> = Vec::new();
    for &idx in order.iter().take(keep) {
        let lambda = eig.eigenvalues[idx];
        if lambda <= max_eig * 1e-12 || lambda <= 0.0 {
            break; // degenerate directions carry no shape variation
        }
        let v = eig.eigenvectors.column(idx);
        let mut dir = Array1::<f64>::zeros(m);
        for i in 0..n {
            let w = v[i];
            dir.scaled_add(w, &centered.row(i));
        }
        let norm = lambda.sqrt(); // |A^T v| = sqrt(lambda)
        let sigma = (lambda / n as f64).sqrt();
        dir.mapv_inplace(|x| x / norm * sigma);
        cols.push(dir);
        sigmas.push(sigma);
    }
    if cols.is_empty() {
        return Err(Error::validation("registrations are all identical".to_string()));
    }

    let mut basis = Array2::zeros((m, cols.len()));
    for (k, c) in cols.iter().enumerate() {
        basis.column_mut(k).assign(c);
    }
    let template_vertices =
        Array2::from_shape_fn((dim.0, 3), |(i, k)| mean[3 * i + k]);
    Ok(ShapeSpace {
        template: MeshTemplate { vertices: template_vertices, faces: faces.to_vec() },
        basis,
        sigmas: Array1::from_vec(sigmas),
    })
}

/// Kinematic skeleton: a row-stochastic joint regressor, a parent tree
/// rooted at joint 0, and per-vertex skinning weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    /// n_J x n_V, rows sum to 1, entries >= 0.
    pub joint_regressor: Array2<f64>,
    /// parents[0] is None; every other joint points at its parent.
    pub parents: Vec<Option<usize>>,
    /// n_V x n_J, rows sum to 1, entries >= 0.
    pub skinning: Array2<f64>,
}

impl Skeleton {
    pub fn n_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn validate(&self, n_vertices: usize) -> Result<()> {
        let n_j = self.n_joints();
        if self.joint_regressor.dim() != (n_j, n_vertices) {
            return Err(Error::validation(format!(
                "joint regressor is {:?}, expected ({n_j}, {n_vertices})",
                self.joint_regressor.dim()
            )));
        }
        if self.skinning.dim() != (n_vertices, n_j) {
            return Err(Error::validation(format!(
                "skinning is {:?}, expected ({n_vertices}, {n_j})",
                self.skinning.dim()
            )));
        }
        for (name, matrix) in
            [("joint regressor", &self.joint_regressor), ("skinning", &self.skinning)]
        {
            for (i, row) in matrix.outer_iter().enumerate() {
                if row.iter().any(|&w| w < 0.0) {
                    return Err(Error::validation(format!("{name} row {i} has negative entries")));
                }
                let sum: f64 = row.sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::validation(format!(
                        "{name} row {i} sums to {sum}, expected 1"
                    )));
                }
            }
        }
        if self.parents.is_empty() || self.parents[0].is_some() {
            return Err(Error::validation("joint 0 must be the root".to_string()));
        }
        // every joint must reach the root without cycles
        for j in 1..n_j {
            let mut cur = j;
            let mut steps = 0;
            loop {
                match self.parents[cur] {
                    None => break,
                    Some(p) => {
                        if p >= n_j {
                            return Err(Error::validation(format!(
                                "joint {cur} has out-of-range parent {p}"
                            )));
                        }
                        cur = p;
                        steps += 1;
                        if steps > n_j {
                            return Err(Error::validation(format!(
                                "parent array has a cycle through joint {j}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Joint indices ordered parent-before-child.
    fn topological_order(&self) -> Vec<usize> {
        let n = self.n_joints();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (j, p) in self.parents.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(j);
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![0usize];
        while let Some(j) = stack.pop() {
            order.push(j);
            for &c in children[j].iter().rev() {
                stack.push(c);
            }
        }
        order
    }
}

/// Axis-angle pose: one rotation per joint plus a global translation.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    /// Axis-angle rotations in radians, one per joint.
    pub rotations: Vec<[f64; 3]>,
    pub translation: [f64; 3],
}

impl Pose {
    pub fn identity(n_joints: usize) -> Self {
        Pose { rotations: vec![[0.0; 3]; n_joints], translation: [0.0; 3] }
    }

    pub fn validate(&self, n_joints: usize) -> Result<()> {
        if self.rotations.len() != n_joints {
            return Err(Error::validation(format!(
                "pose has {} rotations, skeleton has {n_joints} joints",
                self.rotations.len()
            )));
        }
        for (j, r) in self.rotations.iter().enumerate() {
            let mag = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
            if !mag.is_finite() || mag >= std::f64::consts::PI {
                return Err(Error::validation(format!(
                    "joint {j}: axis-angle magnitude {mag} must be finite and < pi"
                )));
            }
        }
        Ok(())
    }
}

/// J = J_r * v.
pub fn regress_joints(skeleton: &Skeleton, vertices: &Array2<f64>) -> Result<Array2<f64>> {
    if vertices.nrows() != self_nv(skeleton) {
        return Err(Error::validation(format!(
            "vertex count {} does not match joint regressor width {}",
            vertices.nrows(),
            self_nv(skeleton)
        )));
    }
    Ok(skeleton.joint_regressor.dot(vertices))
}

fn self_nv(skeleton: &Skeleton) -> usize {
    skeleton.joint_regressor.ncols()
}

/// Rigid transform `x -> r x + t`.
#[derive(Debug, Clone, Copy)]
struct Affine {
    r: Matrix3<f64>,
    t: Vector3<f64>,
}

impl Affine {
    fn identity() -> Self {
        Affine { r: Matrix3::identity(), t: Vector3::zeros() }
    }

    /// Rotation about a fixed center point.
    fn about(center: Vector3<f64>, r: Matrix3<f64>) -> Self {
        Affine { r, t: center - r * center }
    }

    fn compose(&self, other: &Affine) -> Affine {
        Affine { r: self.r * other.r, t: self.r * other.t + self.t }
    }

    fn apply(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.r * p + self.t
    }
}

/// Linear blend skinning over a forward-kinematics chain: every joint's
/// world transform is its parent's composed with the local rotation about
/// the joint's (pre-pose) center; each vertex blends the joint transforms
/// with its skinning weights; the global translation is added last.
pub fn pose_lbs(vertices: &Array2<f64>, pose: &Pose, skeleton: &Skeleton) -> Result<Array2<f64>> {
    skeleton.validate(vertices.nrows())?;
    pose.validate(skeleton.n_joints())?;
    let joints = regress_joints(skeleton, vertices)?;

    let n_j = skeleton.n_joints();
    let mut world: Vec<Affine> = vec![Affine::identity(); n_j];
    for &j in &skeleton.topological_order() {
        let axis_angle = Vector3::new(
            pose.rotations[j][0],
            pose.rotations[j][1],
            pose.rotations[j][2],
        );
        let rot = nalgebra::Rotation3::from_scaled_axis(axis_angle).into_inner();
        let center = Vector3::new(joints[[j, 0]], joints[[j, 1]], joints[[j, 2]]);
        let local = Affine::about(center, rot);
        world[j] = match skeleton.parents[j] {
            Some(p) => world[p].compose(&local),
            None => local,
        };
    }

    let translation = Vector3::new(pose.translation[0], pose.translation[1], pose.translation[2]);
    let mut out = Array2::zeros(vertices.raw_dim());
    for (i, v) in vertices.outer_iter().enumerate() {
        let p = Vector3::new(v[0], v[1], v[2]);
        let mut acc = Vector3::zeros();
        for j in 0..n_j {
            let w = skeleton.skinning[[i, j]];
            if w != 0.0 {
                acc += w * world[j].apply(p);
            }
        }
        acc += translation;
        out[[i, 0]] = acc[0];
        out[[i, 1]] = acc[1];
        out[[i, 2]] = acc[2];
    }
    Ok(out)
}

/// A complete animal model: shape space, skeleton and the labeled training
/// coefficients that drive flow training.
#[derive(Debug, Clone, PartialEq)]
pub struct AnimalModel {
    pub space: ShapeSpace,
    pub skeleton: Skeleton,
    pub labels: Vec<String>,
    /// n_samples x n_B projections of the training registrations.
    pub betas: Array2<f64>,
}

impl AnimalModel {
    pub fn validate(&self) -> Result<()> {
        self.space.template.validate()?;
        self.space.validate()?;
        self.skeleton.validate(self.space.template.n_vertices())?;
        if self.labels.len() != self.betas.nrows() {
            return Err(Error::validation(format!(
                "{} labels vs {} beta rows",
                self.labels.len(),
                self.betas.nrows()
            )));
        }
        if self.betas.ncols() != self.space.n_components() {
            return Err(Error::validation(format!(
                "betas have {} columns, shape space has {} components",
                self.betas.ncols(),
                self.space.n_components()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_registrations(
        n: usize,
        n_v: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Array2<f64>> {
        (0..n)
            .map(|_| Array2::from_shape_fn((n_v, 3), |_| rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn two_point_pca_gives_unit_coefficients() {
        let a = array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let b = array![[0.2, 0.0, 0.0], [1.2, 0.0, 0.0]];
        let space = fit_pca(&[a.clone(), b.clone()], &[], 5).unwrap();
        assert_eq!(space.n_components(), 1);
        let beta_a = space.project(&a).unwrap();
        let beta_b = space.project(&b).unwrap();
        assert_abs_diff_eq!(beta_a[0].abs(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(beta_b[0].abs(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(beta_a[0] + beta_b[0], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn full_rank_pca_reconstructs_registrations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let regs = random_registrations(10, 40, &mut rng);
        let space = fit_pca(&regs, &[], 9).unwrap();
        assert_eq!(space.n_components(), 9);
        space.validate().unwrap();

        let bbox = 2.0 * 3.0f64.sqrt(); // coordinates in [-1, 1]^3
        for reg in &regs {
            let beta = space.project(reg).unwrap();
            let rebuilt = space.shape_mesh(&beta).unwrap();
            let err = (&rebuilt - reg).iter().map(|d| d.abs()).fold(0.0f64, f64::max);
            assert!(err < 1e-6 * bbox, "reconstruction error {err}");
        }
    }

    #[test]
    fn projections_have_zero_mean_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let regs = random_registrations(12, 25, &mut rng);
        let space = fit_pca(&regs, &[], 11).unwrap();
        let n = regs.len() as f64;
        let betas: Vec<Array1<f64>> = regs.iter().map(|r| space.project(r).unwrap()).collect();
        for k in 0..space.n_components() {
            let mean: f64 = betas.iter().map(|b| b[k]).sum::<f64>() / n;
            let var: f64 = betas.iter().map(|b| (b[k] - mean).powi(2)).sum::<f64>() / n;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-6);
            assert_abs_diff_eq!(var, 1.0, epsilon = 1e-6);
        }
    }

    /// Oracle: dense eigendecomposition of the full 3n_V x 3n_V covariance
    /// matrix; principal directions must match up to sign.
    #[test]
    fn gram_pca_matches_covariance_eigendecomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let regs = random_registrations(8, 12, &mut rng);
        let space = fit_pca(&regs, &[], 7).unwrap();

        let n = regs.len();
        let m = 12 * 3;
        let mut data = DMatrix::<f64>::zeros(n, m);
        for (i, r) in regs.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                data[(i, j)] = *v;
            }
        }
        let mean = data.row_mean();
        for i in 0..n {
            for j in 0..m {
                data[(i, j)] -= mean[j];
            }
        }
        let cov = data.transpose() * &data / n as f64;
        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

        for k in 0..space.n_components() {
            let sigma = space.sigmas[k];
            assert_abs_diff_eq!(sigma * sigma, eig.eigenvalues[order[k]], epsilon = 1e-8);
            // unit direction from the gram route
            let col = space.basis.column(k);
            let dir: Vec<f64> = col.iter().map(|v| v / sigma).collect();
            let oracle = eig.eigenvectors.column(order[k]);
            let dot: f64 = dir.iter().zip(oracle.iter()).map(|(a, b)| a * b).sum();
            for (a, b) in dir.iter().zip(oracle.iter()) {
                let expect = if dot >= 0.0 { *b } else { -*b };
                assert_abs_diff_eq!(*a, expect, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn shape_mesh_at_origin_and_basis_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let regs = random_registrations(5, 10, &mut rng);
        let space = fit_pca(&regs, &[], 4).unwrap();
        let zero = Array1::zeros(space.n_components());
        assert_eq!(space.shape_mesh(&zero).unwrap(), space.template.vertices);

        let mut e1 = Array1::zeros(space.n_components());
        e1[1] = 1.0;
        let moved = space.shape_mesh(&e1).unwrap();
        for (i, v) in moved.outer_iter().enumerate() {
            for k in 0..3 {
                let expect = space.template.vertices[[i, k]] + space.basis[[3 * i + k, 1]];
                assert_abs_diff_eq!(v[k], expect, epsilon = 1e-12);
            }
        }

        assert!(space.shape_mesh(&Array1::zeros(99)).is_err());
    }

    #[test]
    fn pca_rejects_inconsistent_registrations() {
        let a = Array2::<f64>::zeros((4, 3));
        let b = Array2::<f64>::zeros((5, 3));
        assert!(fit_pca(&[a, b], &[], 2).is_err());
        assert!(fit_pca(&[Array2::<f64>::zeros((4, 3))], &[], 2).is_err());
    }

    fn two_bone_skeleton() -> Skeleton {
        // joints at (0,0,0) and (1,0,0), regressed one-hot from two anchor
        // vertices that sit exactly on the joints
        let joint_regressor = array![
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        ];
        let skinning = array![
            [1.0, 0.0],
            [0.0, 1.0],
            [1.0, 0.0],
            [0.5, 0.5],
            [0.0, 1.0],
            [0.0, 1.0],
        ];
        Skeleton { joint_regressor, parents: vec![None, Some(0)], skinning }
    }

    fn two_bone_vertices() -> Array2<f64> {
        array![
            [0.0, 0.0, 0.0],  // anchor joint 0
            [1.0, 0.0, 0.0],  // anchor joint 1
            [0.25, 0.0, 0.0], // bone 0 strip
            [0.75, 0.0, 0.0], // blended midpoint
            [1.25, 0.0, 0.0], // bone 1 strip
            [1.75, 0.0, 0.0],
        ]
    }

    #[test]
    fn regress_joints_centroid_and_onehot() {
        let verts = two_bone_vertices();
        let n_v = verts.nrows();
        // uniform row = centroid; one-hot row = that vertex
        let joint_regressor = ndarray::stack![
            Axis(0),
            Array1::from_elem(n_v, 1.0 / n_v as f64),
            {
                let mut r = Array1::zeros(n_v);
                r[3] = 1.0;
                r
            }
        ];
        let sk = Skeleton {
            joint_regressor,
            parents: vec![None, Some(0)],
            skinning: Array2::from_elem((n_v, 2), 0.5),
        };
        let joints = regress_joints(&sk, &verts).unwrap();
        let centroid = verts.mean_axis(Axis(0)).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(joints[[0, k]], centroid[k], epsilon = 1e-15);
            assert_abs_diff_eq!(joints[[1, k]], verts[[3, k]], epsilon = 1e-15);
        }
    }

    #[test]
    fn regress_joints_translation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let verts = Array2::from_shape_fn((20, 3), |_| rng.gen_range(-1.0..1.0));
        // random row-stochastic regressor
        let mut jr = Array2::from_shape_fn((4, 20), |_| rng.gen_range(0.0..1.0));
        for mut row in jr.outer_iter_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let sk = Skeleton {
            joint_regressor: jr,
            parents: vec![None, Some(0), Some(1), Some(1)],
            skinning: Array2::from_elem((20, 4), 0.25),
        };
        let t = [0.3, -1.2, 2.5];
        let mut shifted = verts.clone();
        for mut row in shifted.outer_iter_mut() {
            for k in 0..3 {
                row[k] += t[k];
            }
        }
        let a = regress_joints(&sk, &verts).unwrap();
        let b = regress_joints(&sk, &shifted).unwrap();
        for (i, row) in b.outer_iter().enumerate() {
            for k in 0..3 {
                assert_abs_diff_eq!(row[k], a[[i, k]] + t[k], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn lbs_identity_pose_is_exact() {
        let verts = two_bone_vertices();
        let sk = two_bone_skeleton();
        let posed = pose_lbs(&verts, &Pose::identity(2), &sk).unwrap();
        for (a, b) in posed.iter().zip(verts.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lbs_root_rotation_is_rigid() {
        let verts = two_bone_vertices();
        let sk = two_bone_skeleton();
        let angle = 0.7;
        let mut pose = Pose::identity(2);
        pose.rotations[0] = [0.0, 0.0, angle];
        let posed = pose_lbs(&verts, &pose, &sk).unwrap();

        let joints = regress_joints(&sk, &verts).unwrap();
        let c = Vector3::new(joints[[0, 0]], joints[[0, 1]], joints[[0, 2]]);
        let rot = nalgebra::Rotation3::from_scaled_axis(Vector3::new(0.0, 0.0, angle));
        for (i, v) in verts.outer_iter().enumerate() {
            let p = Vector3::new(v[0], v[1], v[2]);
            let expect = rot * (p - c) + c;
            for k in 0..3 {
                assert!((posed[[i, k]] - expect[k]).abs() < 1e-9);
            }
        }
    }

    /// Hand-worked forward kinematics: 90 degree elbow at joint 1 about +z.
    /// Rz(90): (x, y, z) -> (-y, x, z). Joint 1 sits at (1, 0, 0).
    ///   v4 = (1.25, 0, 0): relative (0.25, 0, 0) -> (0, 0.25, 0) -> (1, 0.25, 0)
    ///   v5 = (1.75, 0, 0): relative (0.75, 0, 0) -> (0, 0.75, 0) -> (1, 0.75, 0)
    ///   v3 = (0.75, 0, 0) with weights (1/2, 1/2):
    ///        bone0 leaves it at (0.75, 0, 0); bone1 maps relative
    ///        (-0.25, 0, 0) -> (0, -0.25, 0) -> (1, -0.25, 0);
    ///        blend = (0.875, -0.125, 0)
    #[test]
    fn lbs_two_bone_hand_worked() {
        let verts = two_bone_vertices();
        let sk = two_bone_skeleton();
        let mut pose = Pose::identity(2);
        pose.rotations[1] = [0.0, 0.0, std::f64::consts::FRAC_PI_2];
        let posed = pose_lbs(&verts, &pose, &sk).unwrap();

        let expected = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.25, 0.0, 0.0],
            [0.875, -0.125, 0.0],
            [1.0, 0.25, 0.0],
            [1.0, 0.75, 0.0],
        ];
        for (i, e) in expected.iter().enumerate() {
            for k in 0..3 {
                assert!(
                    (posed[[i, k]] - e[k]).abs() < 1e-9,
                    "vertex {i} axis {k}: {} vs {}",
                    posed[[i, k]],
                    e[k]
                );
            }
        }
    }

    #[test]
    fn skeleton_validation_catches_cycles_and_bad_rows() {
        let mut sk = two_bone_skeleton();
        sk.parents = vec![None, Some(1)];
        assert!(sk.validate(6).is_err());

        let mut sk = two_bone_skeleton();
        sk.skinning[[0, 0]] = 0.7;
        assert!(sk.validate(6).is_err());

        let mut sk = two_bone_skeleton();
        sk.joint_regressor[[0, 0]] = -0.5;
        assert!(sk.validate(6).is_err());
    }

    #[test]
    fn pose_validation_rejects_large_axis_angle() {
        let mut pose = Pose::identity(2);
        pose.rotations[1] = [4.0, 0.0, 0.0];
        assert!(pose.validate(2).is_err());
    }
}
