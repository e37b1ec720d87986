//! Articulated skinned mesh: pose parameters, forward kinematics, linear
//! blend skinning, and the model file loader.
//!
//! The pose Ψ splits into a local part (joint rotations + bone-length
//! coefficients) that shapes the canonical-space mesh, and a global part
//! (rotation, translation, scale) applied afterwards.

use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::math::{rodrigues, Rigid, M3, V3};

/// Full articulation state. `theta` has 3 entries per joint (axis-angle,
/// radians); `bones` holds multiplicative bone-length factors (1.0 = rest).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseParams {
    pub theta: Vec<f64>,
    pub global_rot: [f64; 3],
    pub global_trans: [f64; 3],
    pub global_scale: f64,
    pub bones: Vec<f64>,
}

impl PoseParams {
    pub fn identity(joints: usize, bone_slots: usize) -> Self {
        PoseParams {
            theta: vec![0.0; joints * 3],
            global_rot: [0.0; 3],
            global_trans: [0.0; 3],
            global_scale: 1.0,
            bones: vec![1.0; bone_slots],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.global_scale <= 0.0 {
            return Err(Error::invariant("global scale must be positive"));
        }
        if let Some((i, _)) = self.bones.iter().enumerate().find(|(_, b)| **b <= 0.0) {
            return Err(Error::invariant(format!(
                "bone coefficient {i} must be positive"
            )));
        }
        Ok(())
    }

    pub fn local(&self) -> LocalPose<'_> {
        LocalPose {
            theta: &self.theta,
            bones: &self.bones,
        }
    }

    pub fn global(&self) -> GlobalPose {
        GlobalPose {
            rot: V3::new(self.global_rot[0], self.global_rot[1], self.global_rot[2]),
            trans: V3::new(
                self.global_trans[0],
                self.global_trans[1],
                self.global_trans[2],
            ),
            scale: self.global_scale,
        }
    }
}

/// Ψ_l = {theta, bones}.
#[derive(Debug, Clone, Copy)]
pub struct LocalPose<'a> {
    pub theta: &'a [f64],
    pub bones: &'a [f64],
}

/// Ψ_g = {r, t, s}.
#[derive(Debug, Clone, Copy)]
pub struct GlobalPose {
    pub rot: V3,
    pub trans: V3,
    pub scale: f64,
}

impl GlobalPose {
    pub fn identity() -> Self {
        GlobalPose {
            rot: V3::zeros(),
            trans: V3::zeros(),
            scale: 1.0,
        }
    }

    pub fn inverse(&self) -> GlobalPose {
        // v' = s R v + t  =>  v = (1/s) R^T (v' - t)
        let r = rodrigues(&self.rot);
        let rt = r.transpose();
        // Convert back to axis-angle by negating the rotation vector.
        GlobalPose {
            rot: -self.rot,
            trans: -(rt * self.trans) / self.scale,
            scale: 1.0 / self.scale,
        }
    }
}

pub const ROOT_PARENT: i32 = -1;

#[derive(Debug, Clone)]
pub struct SkinnedMesh {
    pub vertices: Vec<V3>,
    pub triangles: Vec<[u32; 3]>,
    /// V×K row-major skinning weights.
    pub weights: Vec<f64>,
    pub parents: Vec<i32>,
    pub rest_transforms: Vec<Rigid>,
    pub uv_coords: Vec<[f64; 2]>,
    pub uv_triangles: Vec<[u32; 3]>,
    /// Joint → bone coefficient slot (-1 = unscaled).
    pub bone_groups: Vec<i32>,
}

#[derive(Debug, Clone)]
pub struct JointTransforms {
    pub world: Vec<Rigid>,
}

impl SkinnedMesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Number of bone coefficient slots the model references.
    pub fn bone_slots(&self) -> usize {
        self.bone_groups
            .iter()
            .filter(|&&g| g >= 0)
            .map(|&g| g as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn weight(&self, vertex: usize, joint: usize) -> f64 {
        self.weights[vertex * self.num_joints() + joint]
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.num_vertices();
        let k = self.num_joints();
        if self.weights.len() != v * k {
            return Err(Error::dimension(format!(
                "weights must be V*K = {} entries, got {}",
                v * k,
                self.weights.len()
            )));
        }
        for row in 0..v {
            let w = &self.weights[row * k..(row + 1) * k];
            if w.iter().any(|&x| x < 0.0) {
                return Err(Error::invariant(format!(
                    "weights row {row} has a negative entry"
                )));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::invariant(format!(
                    "weights row {row} sums to {sum}, expected 1"
                )));
            }
        }
        for (j, &p) in self.parents.iter().enumerate() {
            if p != ROOT_PARENT && (p < 0 || p as usize >= j) {
                return Err(Error::invariant(format!(
                    "joint {j} has parent {p}; parents must precede children"
                )));
            }
        }
        if self.rest_transforms.len() != k {
            return Err(Error::dimension("rest transform count != joint count"));
        }
        for (j, t) in self.rest_transforms.iter().enumerate() {
            let r = t.rot;
            if (r * r.transpose() - M3::identity()).norm() > 1e-6
                || (r.determinant() - 1.0).abs() > 1e-6
            {
                return Err(Error::invariant(format!(
                    "rest transform {j} is not a rotation"
                )));
            }
        }
        if self.uv_triangles.len() != self.triangles.len() {
            return Err(Error::invariant(format!(
                "every triangle needs a UV counterpart ({} vs {})",
                self.triangles.len(),
                self.uv_triangles.len()
            )));
        }
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&ix| ix as usize >= v) {
                return Err(Error::invariant(format!("triangle {i} indexes out of range")));
            }
        }
        for (i, t) in self.uv_triangles.iter().enumerate() {
            if t.iter().any(|&ix| ix as usize >= self.uv_coords.len()) {
                return Err(Error::invariant(format!(
                    "uv triangle {i} indexes out of range"
                )));
            }
        }
        for (i, uv) in self.uv_coords.iter().enumerate() {
            if uv.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
                return Err(Error::invariant(format!(
                    "uv coordinate {i} outside [0,1]²: {uv:?}"
                )));
            }
        }
        if self.bone_groups.len() != k {
            return Err(Error::dimension("bone_groups length != joint count"));
        }
        Ok(())
    }

    /// Rest-pose surface area (sum of triangle areas).
    pub fn surface_area(&self) -> f64 {
        surface_area_of(&self.vertices, &self.triangles)
    }
}

pub fn surface_area_of(vertices: &[V3], triangles: &[[u32; 3]]) -> f64 {
    triangles
        .iter()
        .map(|t| {
            let a = vertices[t[0] as usize];
            let b = vertices[t[1] as usize];
            let c = vertices[t[2] as usize];
            (b - a).cross(&(c - a)).norm() * 0.5
        })
        .sum()
}

/// Loads a model from a named-array container (binary or JSON encoding).
pub fn load_model(path: impl AsRef<std::path::Path>) -> Result<SkinnedMesh> {
    let c = Container::read_auto(path)?;
    mesh_from_container(&c)
}

pub fn mesh_from_container(c: &Container) -> Result<SkinnedMesh> {
    let vertices_raw = c.require("vertices")?.as_f64()?;
    let vertices: Vec<V3> = vertices_raw
        .chunks_exact(3)
        .map(|v| V3::new(v[0], v[1], v[2]))
        .collect();
    let triangles = index_triples(c.require("triangles")?.as_u32()?);
    let weights = c.require("weights")?.as_f64()?;
    let parents = c.require("parents")?.as_i32()?.to_vec();
    let rt_raw = c.require("rest_transforms")?.as_f64()?;
    if rt_raw.len() != parents.len() * 16 {
        return Err(Error::dimension("rest_transforms must be K×4×4"));
    }
    let rest_transforms = rt_raw
        .chunks_exact(16)
        .map(|m| {
            Rigid::new(
                M3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]),
                V3::new(m[3], m[7], m[11]),
            )
        })
        .collect();
    let uv_raw = c.require("uv")?.as_f64()?;
    let uv_coords = uv_raw.chunks_exact(2).map(|u| [u[0], u[1]]).collect();
    let uv_triangles = index_triples(c.require("uv_triangles")?.as_u32()?);
    let bone_groups = c.require("bone_groups")?.as_i32()?.to_vec();

    let mesh = SkinnedMesh {
        vertices,
        triangles,
        weights,
        parents,
        rest_transforms,
        uv_coords,
        uv_triangles,
        bone_groups,
    };
    mesh.validate()?;
    Ok(mesh)
}

pub fn mesh_to_container(mesh: &SkinnedMesh) -> Result<Container> {
    let mut c = Container::new();
    c.meta = serde_json::json!({"kind": "skinned_mesh"});
    let v = mesh.num_vertices();
    let k = mesh.num_joints();
    c.insert_f32(
        "vertices",
        vec![v, 3],
        mesh.vertices
            .iter()
            .flat_map(|p| [p.x as f32, p.y as f32, p.z as f32])
            .collect(),
    )?;
    c.insert_u32(
        "triangles",
        vec![mesh.triangles.len(), 3],
        mesh.triangles.iter().flatten().copied().collect(),
    )?;
    c.insert_f32(
        "weights",
        vec![v, k],
        mesh.weights.iter().map(|&w| w as f32).collect(),
    )?;
    c.insert_i32("parents", vec![k], mesh.parents.clone())?;
    let mut rt = Vec::with_capacity(k * 16);
    for t in &mesh.rest_transforms {
        for row in 0..3 {
            for col in 0..3 {
                rt.push(t.rot[(row, col)] as f32);
            }
            rt.push(t.trans[row] as f32);
        }
        rt.extend_from_slice(&[0.0, 0.0, 0.0, 1.0]);
    }
    c.insert_f32("rest_transforms", vec![k, 4, 4], rt)?;
    c.insert_f32(
        "uv",
        vec![mesh.uv_coords.len(), 2],
        mesh.uv_coords
            .iter()
            .flat_map(|u| [u[0] as f32, u[1] as f32])
            .collect(),
    )?;
    c.insert_u32(
        "uv_triangles",
        vec![mesh.uv_triangles.len(), 3],
        mesh.uv_triangles.iter().flatten().copied().collect(),
    )?;
    c.insert_i32("bone_groups", vec![k], mesh.bone_groups.clone())?;
    Ok(c)
}

fn index_triples(flat: &[u32]) -> Vec<[u32; 3]> {
    flat.chunks_exact(3).map(|t| [t[0], t[1], t[2]]).collect()
}

/// Composes world transforms root-to-leaf. Bone coefficients scale each
/// joint's rest offset from its parent; the per-joint rotation acts about
/// the joint's own origin.
pub fn forward_kinematics(mesh: &SkinnedMesh, local: &LocalPose) -> Result<JointTransforms> {
    let k = mesh.num_joints();
    if local.theta.len() != 3 * k {
        return Err(Error::dimension(format!(
            "theta has {} entries, expected {}",
            local.theta.len(),
            3 * k
        )));
    }
    let slots = mesh.bone_slots();
    if local.bones.len() < slots {
        return Err(Error::dimension(format!(
            "pose has {} bone coefficients, model references {}",
            local.bones.len(),
            slots
        )));
    }
    let mut world: Vec<Rigid> = Vec::with_capacity(k);
    for j in 0..k {
        let theta_j = V3::new(
            local.theta[3 * j],
            local.theta[3 * j + 1],
            local.theta[3 * j + 2],
        );
        let pose_rot = Rigid::new(rodrigues(&theta_j), V3::zeros());
        let w = if mesh.parents[j] == ROOT_PARENT {
            mesh.rest_transforms[j].compose(&pose_rot)
        } else {
            let p = mesh.parents[j] as usize;
            // Local rest transform relative to the parent, with the bone
            // coefficient scaling the translation offset.
            let mut rel = mesh.rest_transforms[p]
                .inverse()
                .compose(&mesh.rest_transforms[j]);
            let g = mesh.bone_groups[j];
            if g >= 0 {
                rel.trans *= local.bones[g as usize];
            }
            world[p].compose(&rel).compose(&pose_rot)
        };
        world.push(w);
    }
    Ok(JointTransforms { world })
}

/// Per-joint skinning transforms `world_k ∘ rest_k⁻¹`.
pub fn skinning_transforms(mesh: &SkinnedMesh, fk: &JointTransforms) -> Vec<Rigid> {
    mesh.rest_transforms
        .iter()
        .zip(fk.world.iter())
        .map(|(rest, world)| world.compose(&rest.inverse()))
        .collect()
}

/// Canonical-space posed vertices (Ψ_g held at identity).
pub fn lbs_deform(mesh: &SkinnedMesh, local: &LocalPose) -> Result<Vec<V3>> {
    let fk = forward_kinematics(mesh, local)?;
    let skins = skinning_transforms(mesh, &fk);
    Ok(lbs_apply(mesh, &skins, &mesh.vertices))
}

/// Applies blended skinning transforms to arbitrary points that carry the
/// mesh's per-vertex weights (points[i] pairs with weight row i).
pub fn lbs_apply(mesh: &SkinnedMesh, skins: &[Rigid], points: &[V3]) -> Vec<V3> {
    let k = mesh.num_joints();
    points
        .iter()
        .enumerate()
        .map(|(vi, p)| {
            let row = &mesh.weights[vi * k..(vi + 1) * k];
            let mut out = V3::zeros();
            for (j, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    out += skins[j].apply(p) * w;
                }
            }
            out
        })
        .collect()
}

/// v' = s·R(r)·v + t.
pub fn apply_global(vertices: &[V3], global: &GlobalPose) -> Vec<V3> {
    let r = rodrigues(&global.rot);
    vertices
        .iter()
        .map(|v| r * v * global.scale + global.trans)
        .collect()
}
