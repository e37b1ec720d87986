//! Small synthetic models used by the test suites, the benchmarks, and the
//! CLI self-test. Everything here is deterministic.

use nalgebra::Vector4;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::math::{Rigid, V3};
use crate::mesh::{SkinnedMesh, ROOT_PARENT};
use crate::splat::GaussianCloud;

/// Two joints on the x-axis (root at the origin, child at (1,0,0)),
/// four vertices, identity rest rotations. Vertex 0 binds to the root,
/// vertex 1 to the child, vertices 2 and 3 half-and-half.
pub fn two_joint_chain() -> SkinnedMesh {
    let vertices = vec![
        V3::new(0.0, 0.0, 0.0),
        V3::new(1.0, 0.0, 0.0),
        V3::new(0.5, 0.5, 0.0),
        V3::new(0.5, -0.5, 0.0),
    ];
    let triangles = vec![[0, 1, 2], [0, 3, 1]];
    let weights = vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.5, 0.5];
    let parents = vec![ROOT_PARENT, 0];
    let rest_transforms = vec![
        Rigid::identity(),
        Rigid::new(crate::math::M3::identity(), V3::new(1.0, 0.0, 0.0)),
    ];
    let uv_coords = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let uv_triangles = vec![[0, 1, 2], [0, 3, 1]];
    let bone_groups = vec![-1, 0];
    SkinnedMesh {
        vertices,
        triangles,
        weights,
        parents,
        rest_transforms,
        uv_coords,
        uv_triangles,
        bone_groups,
    }
}

/// Lat-long UV sphere of radius 0.4 with a single joint, full [0,1]² UV
/// atlas, seam column duplicated so UV indices equal vertex indices.
pub fn uv_sphere_mesh(rings: usize, segments: usize) -> SkinnedMesh {
    sphere_mesh_with_radius(rings, segments, 0.4)
}

pub fn sphere_mesh_with_radius(rings: usize, segments: usize, radius: f64) -> SkinnedMesh {
    assert!(rings >= 2 && segments >= 3);
    let mut vertices = Vec::new();
    let mut uv_coords = Vec::new();
    for i in 0..=rings {
        let theta = std::f64::consts::PI * i as f64 / rings as f64;
        for j in 0..=segments {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / segments as f64;
            vertices.push(V3::new(
                radius * theta.sin() * phi.cos(),
                radius * theta.sin() * phi.sin(),
                radius * theta.cos(),
            ));
            uv_coords.push([j as f64 / segments as f64, i as f64 / rings as f64]);
        }
    }
    let cols = segments + 1;
    let mut triangles = Vec::new();
    for i in 0..rings {
        for j in 0..segments {
            let a = (i * cols + j) as u32;
            let b = (i * cols + j + 1) as u32;
            let c = ((i + 1) * cols + j) as u32;
            let d = ((i + 1) * cols + j + 1) as u32;
            triangles.push([a, d, b]);
            triangles.push([a, c, d]);
        }
    }
    // Drop the degenerate pole-row halves (two coincident pole vertices).
    let v = vertices.clone();
    let triangles: Vec<[u32; 3]> = triangles
        .into_iter()
        .filter(|t| {
            let p0 = v[t[0] as usize];
            let p1 = v[t[1] as usize];
            let p2 = v[t[2] as usize];
            (p1 - p0).cross(&(p2 - p0)).norm() > 1e-12
        })
        .collect();
    let n = vertices.len();
    let uv_triangles = triangles.clone();
    SkinnedMesh {
        vertices,
        triangles,
        weights: vec![1.0; n],
        parents: vec![ROOT_PARENT],
        rest_transforms: vec![Rigid::identity()],
        uv_coords,
        uv_triangles,
        bone_groups: vec![-1],
    }
}

/// Smooth procedural color over the sphere surface (plenty of structure for
/// fitting targets, no discontinuities).
pub fn surface_color(p: &V3) -> [f64; 3] {
    [
        0.5 + 0.45 * (6.0 * p.x + 2.0 * p.y).sin(),
        0.5 + 0.45 * (5.0 * p.y - 3.0 * p.z).sin(),
        0.5 + 0.45 * (4.0 * p.z + 5.0 * p.x).sin(),
    ]
}

/// A second independent smooth pattern, used as the embedding/feature color.
pub fn surface_feature(p: &V3) -> [f64; 3] {
    [
        0.5 + 0.4 * (3.0 * p.y + 4.0 * p.z).cos(),
        0.5 + 0.4 * (7.0 * p.x).sin(),
        0.5 + 0.4 * (5.0 * (p.x + p.y + p.z)).cos(),
    ]
}

/// Random small cloud near the origin; suitable for gradient checks.
pub fn random_cloud(n: usize, seed: u64) -> GaussianCloud {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut cloud = GaussianCloud::default();
    for _ in 0..n {
        cloud.mu.push(V3::new(
            rng.gen_range(-0.4..0.4),
            rng.gen_range(-0.4..0.4),
            rng.gen_range(-0.4..0.4),
        ));
        cloud.quat.push(Vector4::new(
            rng.gen_range(0.5..1.0),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        ));
        cloud.log_scale.push(V3::new(
            rng.gen_range(-2.2..-1.4),
            rng.gen_range(-2.2..-1.4),
            rng.gen_range(-2.2..-1.4),
        ));
        cloud.color.push([rng.gen(), rng.gen(), rng.gen()]);
        cloud.opacity_logit.push(rng.gen_range(-1.0..1.5));
    }
    cloud.feature = Some(
        (0..n)
            .map(|_| [rng.gen(), rng.gen(), rng.gen()])
            .collect(),
    );
    cloud
}

/// Opaque colored ball: Fibonacci-distributed surface Gaussians of radius
/// `radius` with smooth color and feature patterns. Good splatting stand-in
/// for an object with a crisp silhouette.
pub fn ball_cloud(n: usize, radius: f64) -> GaussianCloud {
    let mut cloud = GaussianCloud::default();
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    // Footprint scaled to the mean point spacing so the surface closes up.
    let spacing = (4.0 * std::f64::consts::PI * radius * radius / n as f64).sqrt();
    let log_s = (0.8 * spacing).ln();
    let mut features = Vec::with_capacity(n);
    for i in 0..n {
        let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let r = (1.0 - y * y).sqrt();
        let phi = golden * i as f64;
        let p = V3::new(r * phi.cos(), y, r * phi.sin()) * radius;
        cloud.mu.push(p);
        cloud.quat.push(Vector4::new(1.0, 0.0, 0.0, 0.0));
        cloud.log_scale.push(V3::new(log_s, log_s, log_s));
        cloud.color.push(surface_color(&p));
        cloud.opacity_logit.push(4.0);
        features.push(surface_feature(&p));
    }
    cloud.feature = Some(features);
    cloud
}
