//! Pinhole camera with OpenCV-style conventions: `x_cam = R x_world + T`,
//! x right, y down, z forward; pixel `(u,v) = (fx X/Z + cx, fy Y/Z + cy)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{M3, V3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub rotation: M3,
    pub translation: V3,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// Points closer than this camera-z are considered behind the camera.
pub const NEAR_Z: f64 = 1e-4;

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::invariant("camera focal lengths must be positive"));
        }
        let r = self.rotation;
        let ortho = (r * r.transpose() - M3::identity()).norm();
        if ortho > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::invariant(format!(
                "camera rotation not orthonormal det+1 (ortho residual {ortho:.2e})"
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invariant("camera image size must be nonzero"));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`, `up` fixing the roll.
    pub fn look_at(
        eye: V3,
        target: V3,
        up: V3,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Self {
        let z = (target - eye).normalize();
        let x = up.cross(&z).normalize();
        let y = z.cross(&x);
        let rotation = M3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye);
        Camera {
            rotation,
            translation,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        }
    }

    pub fn to_camera(&self, x_world: &V3) -> V3 {
        self.rotation * x_world + self.translation
    }

    /// World-space camera center.
    pub fn center(&self) -> V3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Projects to continuous pixel coordinates; `None` behind the camera.
    /// Returns `(u, v, z_cam)`.
    pub fn project(&self, x_world: &V3) -> Option<(f64, f64, f64)> {
        let p = self.to_camera(x_world);
        if p.z <= NEAR_Z {
            return None;
        }
        Some((
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
            p.z,
        ))
    }

    /// Ray through continuous pixel coordinates `(u, v)`: world-space origin
    /// and unit direction.
    pub fn ray(&self, u: f64, v: f64) -> (V3, V3) {
        let dir_cam = V3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        let dir = (self.rotation.transpose() * dir_cam).normalize();
        (self.center(), dir)
    }

    /// World direction of the optical axis (+z in camera frame).
    pub fn optical_axis(&self) -> V3 {
        self.rotation.transpose() * V3::new(0.0, 0.0, 1.0)
    }

    /// Camera-z of a world point travelled a distance `t` along `dir` from
    /// `origin` (used to convert ray depth to depth-buffer values).
    pub fn z_of_ray_point(&self, origin: &V3, dir: &V3, t: f64) -> f64 {
        self.to_camera(&(origin + dir * t)).z
    }
}

/// Rays through all pixel centers, row-major.
pub fn generate_rays(cam: &Camera) -> Vec<(V3, V3)> {
    let mut rays = Vec::with_capacity(cam.width * cam.height);
    for j in 0..cam.height {
        for i in 0..cam.width {
            rays.push(cam.ray(i as f64 + 0.5, j as f64 + 0.5));
        }
    }
    rays
}

/// Serialization mirror with the manifest field names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraJson {
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    #[serde(rename = "T")]
    pub t: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub w: usize,
    pub h: usize,
}

impl From<&Camera> for CameraJson {
    fn from(c: &Camera) -> Self {
        let r = &c.rotation;
        CameraJson {
            r: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            t: [c.translation.x, c.translation.y, c.translation.z],
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            w: c.width,
            h: c.height,
        }
    }
}

impl From<&CameraJson> for Camera {
    fn from(j: &CameraJson) -> Self {
        Camera {
            rotation: M3::new(
                j.r[0][0], j.r[0][1], j.r[0][2], j.r[1][0], j.r[1][1], j.r[1][2], j.r[2][0],
                j.r[2][1], j.r[2][2],
            ),
            translation: V3::new(j.t[0], j.t[1], j.t[2]),
            fx: j.fx,
            fy: j.fy,
            cx: j.cx,
            cy: j.cy,
            width: j.w,
            height: j.h,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_cam() -> Camera {
        Camera::look_at(
            V3::new(2.0, 1.0, 1.5),
            V3::zeros(),
            V3::new(0.0, 0.0, 1.0),
            100.0,
            100.0,
            32.0,
            32.0,
            64,
            64,
        )
    }

    #[test]
    fn look_at_projects_target_to_principal_point() {
        let cam = test_cam();
        cam.validate().unwrap();
        let (u, v, z) = cam.project(&V3::zeros()).unwrap();
        assert!((u - cam.cx).abs() < 1e-9, "{u}");
        assert!((v - cam.cy).abs() < 1e-9);
        assert!(z > 0.0);
    }

    #[test]
    fn principal_ray_is_optical_axis() {
        let cam = test_cam();
        let (_, dir) = cam.ray(cam.cx, cam.cy);
        assert!((dir - cam.optical_axis()).norm() < 1e-12);
    }

    #[test]
    fn identity_extrinsics_rays_start_at_origin() {
        let cam = Camera {
            rotation: M3::identity(),
            translation: V3::zeros(),
            fx: 50.0,
            fy: 50.0,
            cx: 16.0,
            cy: 16.0,
            width: 32,
            height: 32,
        };
        for (o, _) in generate_rays(&cam).iter().take(5) {
            assert!(o.norm() < 1e-12);
        }
    }

    #[test]
    fn doubling_fx_halves_off_axis_tangent() {
        // tan(theta) = (u - cx) / fx for a pinhole.
        let mk = |fx: f64| Camera {
            rotation: M3::identity(),
            translation: V3::zeros(),
            fx,
            fy: 50.0,
            cx: 16.0,
            cy: 16.0,
            width: 32,
            height: 32,
        };
        let a = mk(50.0);
        let b = mk(100.0);
        let u = 26.0;
        let (_, da) = a.ray(u, a.cy);
        let (_, db) = b.ray(u, b.cy);
        let tan_a = (da.x / da.z).abs();
        let tan_b = (db.x / db.z).abs();
        assert!((tan_a - 2.0 * tan_b).abs() < 1e-12);
    }

    #[test]
    fn project_ray_roundtrip() {
        let cam = test_cam();
        let (o, d) = cam.ray(40.25, 18.75);
        let p = o + d * 3.0;
        let (u, v, _) = cam.project(&p).unwrap();
        assert!((u - 40.25).abs() < 1e-9 && (v - 18.75).abs() < 1e-9);
    }

    #[test]
    fn camera_json_roundtrip() {
        let cam = test_cam();
        let j = CameraJson::from(&cam);
        let s = serde_json::to_string(&j).unwrap();
        let back: CameraJson = serde_json::from_str(&s).unwrap();
        let cam2 = Camera::from(&back);
        assert!((cam2.rotation - cam.rotation).norm() < 1e-15);
        assert!((cam2.translation - cam.translation).norm() < 1e-15);
    }
}
