//! Differentiable Gaussian splatting.
//!
//! Forward: every Gaussian is projected through the camera with an
//! EWA-style 2D covariance (Jacobian of the perspective map), then pixels
//! composite the depth-sorted footprints front to back. Backward: analytic
//! gradients of the compositing equation with respect to position, rotation
//! quaternion, log-scale, color, and opacity logit.

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector4};

use crate::camera::{Camera, NEAR_Z};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::img::{Image, RenderBuffers};
use crate::math::{normalize_backward, quat_to_mat, quat_to_mat_backward, sigmoid, M3, V3};
use crate::par;

/// Per-Gaussian alpha ceiling; keeps transmittance strictly positive.
pub const ALPHA_CLAMP: f64 = 0.999;
/// Isotropic dilation added to the 2D covariance diagonal (pixel², the usual
/// anti-alias floor for point footprints).
pub const COV2D_DILATION: f64 = 0.3;
/// Footprints are rasterized out to this many standard deviations.
pub const CUTOFF_SIGMA: f64 = 3.0;
/// Guard for the alpha-normalized depth.
pub const DEPTH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Default)]
pub struct GaussianCloud {
    pub mu: Vec<V3>,
    /// (w, x, y, z); renormalized before every use.
    pub quat: Vec<Vector4<f64>>,
    pub log_scale: Vec<V3>,
    pub color: Vec<[f64; 3]>,
    pub opacity_logit: Vec<f64>,
    pub feature: Option<Vec<[f64; 3]>>,
}

impl GaussianCloud {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.quat.len() != n
            || self.log_scale.len() != n
            || self.color.len() != n
            || self.opacity_logit.len() != n
        {
            return Err(Error::dimension("gaussian attribute lengths disagree"));
        }
        if let Some(f) = &self.feature {
            if f.len() != n {
                return Err(Error::dimension("feature length disagrees"));
            }
        }
        if let Some((i, _)) = self
            .quat
            .iter()
            .enumerate()
            .find(|(_, q)| q.norm() < 1e-12)
        {
            return Err(Error::invariant(format!("quaternion {i} is zero")));
        }
        Ok(())
    }

    pub fn centroid(&self) -> V3 {
        if self.is_empty() {
            return V3::zeros();
        }
        self.mu.iter().sum::<V3>() / self.len() as f64
    }

    pub fn translate(&mut self, offset: &V3) {
        for m in &mut self.mu {
            *m += offset;
        }
    }
}

/// Σ = R·diag(exp(ls))²·Rᵀ from a (not necessarily unit) quaternion.
pub fn covariance(quat: &Vector4<f64>, log_scale: &V3) -> M3 {
    let r = quat_to_mat(&(quat / quat.norm()));
    let s = log_scale.map(|v| v.exp());
    let m = M3::from_columns(&[r.column(0) * s.x, r.column(1) * s.y, r.column(2) * s.z]);
    m * m.transpose()
}

/// exp(−½ (x−μ)ᵀ Σ⁻¹ (x−μ)). Errors when Σ is not SPD.
pub fn eval_gaussian(mu: &V3, sigma: &M3, x: &V3) -> Result<f64> {
    let chol = nalgebra::Cholesky::new(*sigma)
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
    let d = x - mu;
    let y = chol.solve(&d);
    Ok((-0.5 * d.dot(&y)).exp())
}

/// Gradients with the same shapes as the cloud parameters.
#[derive(Debug, Clone)]
pub struct CloudGrads {
    pub mu: Vec<V3>,
    pub quat: Vec<Vector4<f64>>,
    pub log_scale: Vec<V3>,
    pub color: Vec<[f64; 3]>,
    pub opacity_logit: Vec<f64>,
    pub feature: Vec<[f64; 3]>,
}

impl CloudGrads {
    pub fn zeros(n: usize) -> Self {
        CloudGrads {
            mu: vec![V3::zeros(); n],
            quat: vec![Vector4::zeros(); n],
            log_scale: vec![V3::zeros(); n],
            color: vec![[0.0; 3]; n],
            opacity_logit: vec![0.0; n],
            feature: vec![[0.0; 3]; n],
        }
    }

    fn add(mut self, other: &CloudGrads) -> Self {
        for i in 0..self.mu.len() {
            self.mu[i] += other.mu[i];
            self.quat[i] += other.quat[i];
            self.log_scale[i] += other.log_scale[i];
            for c in 0..3 {
                self.color[i][c] += other.color[i][c];
                self.feature[i][c] += other.feature[i][c];
            }
            self.opacity_logit[i] += other.opacity_logit[i];
        }
        self
    }
}

/// dL/d(render buffers); feature may be absent.
pub struct SplatUpstream<'a> {
    pub rgb: &'a Image,
    pub alpha: &'a Image,
    pub feature: Option<&'a Image>,
}

struct Projected {
    idx: usize,
    mean: Vector2<f64>,
    z: f64,
    lambda: Matrix2<f64>,
    opacity: f64,
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    // cached for the parameter chain in backward
    a: Matrix2x3<f64>,
    jac: Matrix2x3<f64>,
    p_cam: V3,
    sigma3: M3,
    rot: M3,
    scale: V3,
    unit_quat: Vector4<f64>,
}

fn project_all(cloud: &GaussianCloud, cam: &Camera) -> Vec<Projected> {
    let mut out = Vec::with_capacity(cloud.len());
    for i in 0..cloud.len() {
        let p = cam.to_camera(&cloud.mu[i]);
        if p.z <= NEAR_Z || !p.z.is_finite() {
            continue;
        }
        let inv_z = 1.0 / p.z;
        let u = cam.fx * p.x * inv_z + cam.cx;
        let v = cam.fy * p.y * inv_z + cam.cy;
        let jac = Matrix2x3::new(
            cam.fx * inv_z,
            0.0,
            -cam.fx * p.x * inv_z * inv_z,
            0.0,
            cam.fy * inv_z,
            -cam.fy * p.y * inv_z * inv_z,
        );
        let a = jac * cam.rotation;
        let unit_quat = cloud.quat[i] / cloud.quat[i].norm();
        let rot = quat_to_mat(&unit_quat);
        let scale = cloud.log_scale[i].map(|s| s.exp());
        let m = M3::from_columns(&[
            rot.column(0) * scale.x,
            rot.column(1) * scale.y,
            rot.column(2) * scale.z,
        ]);
        let sigma3 = m * m.transpose();
        let mut cov2 = a * sigma3 * a.transpose();
        cov2[(0, 0)] += COV2D_DILATION;
        cov2[(1, 1)] += COV2D_DILATION;
        let det = cov2[(0, 0)] * cov2[(1, 1)] - cov2[(0, 1)] * cov2[(1, 0)];
        if det <= 0.0 || !det.is_finite() {
            continue;
        }
        let lambda = Matrix2::new(cov2[(1, 1)], -cov2[(0, 1)], -cov2[(1, 0)], cov2[(0, 0)]) / det;
        let trace = cov2[(0, 0)] + cov2[(1, 1)];
        let disc = ((cov2[(0, 0)] - cov2[(1, 1)]).powi(2) + 4.0 * cov2[(0, 1)].powi(2)).sqrt();
        let lam_max = 0.5 * (trace + disc);
        let radius = CUTOFF_SIGMA * lam_max.sqrt();
        let x0 = (u - radius).floor().max(0.0) as usize;
        let y0 = (v - radius).floor().max(0.0) as usize;
        if u + radius < 0.0 || v + radius < 0.0 {
            continue;
        }
        let x1 = ((u + radius).ceil() as usize).min(cam.width);
        let y1 = ((v + radius).ceil() as usize).min(cam.height);
        if x0 >= x1 || y0 >= y1 {
            continue;
        }
        out.push(Projected {
            idx: i,
            mean: Vector2::new(u, v),
            z: p.z,
            lambda,
            opacity: sigmoid(cloud.opacity_logit[i]),
            x0,
            x1,
            y0,
            y1,
            a,
            jac,
            p_cam: p,
            sigma3,
            rot,
            scale,
            unit_quat,
        });
    }
    // Front to back; ties broken by original index.
    out.sort_by(|a, b| a.z.partial_cmp(&b.z).unwrap().then(a.idx.cmp(&b.idx)));
    out
}

fn row_bins(projs: &[Projected], height: usize) -> Vec<Vec<usize>> {
    let mut bins = vec![Vec::new(); height];
    for (pi, p) in projs.iter().enumerate() {
        for bin in bins.iter_mut().take(p.y1).skip(p.y0) {
            bin.push(pi);
        }
    }
    bins
}

/// Footprint weight, Mahalanobis form, and pixel offset at a pixel center.
#[inline]
fn footprint(p: &Projected, px: f64, py: f64) -> (f64, f64, Vector2<f64>) {
    let d = Vector2::new(px - p.mean.x, py - p.mean.y);
    let e = (p.lambda * d).dot(&d);
    ((-0.5 * e).exp(), e, d)
}

/// Renders color, alpha, alpha-normalized expected depth, and the feature
/// channel over `background`.
pub fn render(cloud: &GaussianCloud, cam: &Camera, background: [f64; 3]) -> Result<RenderBuffers> {
    cloud.validate()?;
    cam.validate()?;
    let projs = project_all(cloud, cam);
    let bins = row_bins(&projs, cam.height);
    let (w, h) = (cam.width, cam.height);
    let mut buffers = RenderBuffers::new(w, h, background);

    struct Px {
        rgb: [f64; 3],
        alpha: f64,
        depth: f64,
        feat: [f64; 3],
    }
    let rows: Vec<Vec<Px>> = par::map_indices(h, |y| {
        let mut row = Vec::with_capacity(w);
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0;
            let mut rgb = [0.0; 3];
            let mut feat = [0.0; 3];
            let mut depth_sum = 0.0;
            let mut alpha_sum = 0.0;
            for &pi in &bins[y] {
                let p = &projs[pi];
                if x < p.x0 || x >= p.x1 {
                    continue;
                }
                let (g, e, _) = footprint(p, px, py);
                if e > CUTOFF_SIGMA * CUTOFF_SIGMA {
                    continue;
                }
                let alpha = (p.opacity * g).min(ALPHA_CLAMP);
                let wgt = alpha * t;
                let c = &cloud.color[p.idx];
                for ch in 0..3 {
                    rgb[ch] += c[ch] * wgt;
                }
                if let Some(f) = &cloud.feature {
                    for ch in 0..3 {
                        feat[ch] += f[p.idx][ch] * wgt;
                    }
                }
                depth_sum += p.z * wgt;
                alpha_sum += wgt;
                t *= 1.0 - alpha;
            }
            for ch in 0..3 {
                rgb[ch] += background[ch] * t;
                feat[ch] += background[ch] * t;
            }
            row.push(Px {
                rgb,
                alpha: alpha_sum,
                depth: depth_sum / alpha_sum.max(DEPTH_EPS),
                feat,
            });
        }
        row
    });
    for (y, row) in rows.into_iter().enumerate() {
        for (x, px) in row.into_iter().enumerate() {
            for ch in 0..3 {
                buffers.rgb.set(x, y, ch, px.rgb[ch]);
                buffers.feature.set(x, y, ch, px.feat[ch]);
            }
            buffers.alpha.set(x, y, 0, px.alpha);
            buffers.depth.set(x, y, 0, px.depth);
        }
    }
    Ok(buffers)
}

/// Max per-pixel deviation of Σ αᵢTᵢ + T_final from 1; exercises the
/// compositing algebra with the sum and the product tracked independently.
pub fn weight_identity_residual(cloud: &GaussianCloud, cam: &Camera) -> Result<f64> {
    cloud.validate()?;
    let projs = project_all(cloud, cam);
    let bins = row_bins(&projs, cam.height);
    let mut worst = 0.0f64;
    for y in 0..cam.height {
        for x in 0..cam.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0;
            let mut sum = 0.0;
            for &pi in &bins[y] {
                let p = &projs[pi];
                if x < p.x0 || x >= p.x1 {
                    continue;
                }
                let (g, e, _) = footprint(p, px, py);
                if e > CUTOFF_SIGMA * CUTOFF_SIGMA {
                    continue;
                }
                let alpha = (p.opacity * g).min(ALPHA_CLAMP);
                sum += alpha * t;
                t *= 1.0 - alpha;
            }
            worst = worst.max((sum + t - 1.0).abs());
        }
    }
    Ok(worst)
}

/// Analytic gradients of the compositing equation. `background` must match
/// the forward render the upstream gradients were computed against.
pub fn backward(
    cloud: &GaussianCloud,
    cam: &Camera,
    background: [f64; 3],
    upstream: &SplatUpstream,
) -> Result<CloudGrads> {
    cloud.validate()?;
    let n = cloud.len();
    let projs = project_all(cloud, cam);
    let bins = row_bins(&projs, cam.height);
    let zero_feat = vec![[0.0f64; 3]; if cloud.feature.is_some() { 0 } else { n }];
    let feats: &[[f64; 3]] = cloud.feature.as_deref().unwrap_or(&zero_feat);

    // 2D-space partials per projected gaussian, accumulated over pixels.
    #[derive(Clone)]
    struct Partial {
        d_mean: Vec<Vector2<f64>>,
        d_cov: Vec<Matrix2<f64>>,
        d_color: Vec<[f64; 3]>,
        d_feat: Vec<[f64; 3]>,
        d_op: Vec<f64>,
    }
    impl Partial {
        fn zeros(m: usize) -> Self {
            Partial {
                d_mean: vec![Vector2::zeros(); m],
                d_cov: vec![Matrix2::zeros(); m],
                d_color: vec![[0.0; 3]; m],
                d_feat: vec![[0.0; 3]; m],
                d_op: vec![0.0; m],
            }
        }
        fn add(mut self, o: &Partial) -> Self {
            for i in 0..self.d_mean.len() {
                self.d_mean[i] += o.d_mean[i];
                self.d_cov[i] += o.d_cov[i];
                self.d_op[i] += o.d_op[i];
                for c in 0..3 {
                    self.d_color[i][c] += o.d_color[i][c];
                    self.d_feat[i][c] += o.d_feat[i][c];
                }
            }
            self
        }
    }

    struct Contrib {
        pi: usize,
        alpha: f64,
        g: f64,
        d: Vector2<f64>,
        t_before: f64,
        clamped: bool,
    }

    let m = projs.len();
    let partial = par::reduce_ranges(
        cam.height,
        par::GRAD_CHUNKS,
        |rows| {
            let mut acc = Partial::zeros(m);
            let mut contribs: Vec<Contrib> = Vec::new();
            for y in rows {
                for x in 0..cam.width {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    contribs.clear();
                    let mut t = 1.0;
                    for &pi in &bins[y] {
                        let p = &projs[pi];
                        if x < p.x0 || x >= p.x1 {
                            continue;
                        }
                        let (g, e, d) = footprint(p, px, py);
                        if e > CUTOFF_SIGMA * CUTOFF_SIGMA {
                            continue;
                        }
                        let raw = p.opacity * g;
                        let clamped = raw > ALPHA_CLAMP;
                        let alpha = raw.min(ALPHA_CLAMP);
                        contribs.push(Contrib {
                            pi,
                            alpha,
                            g,
                            d,
                            t_before: t,
                            clamped,
                        });
                        t *= 1.0 - alpha;
                    }
                    let t_final = t;
                    let up_rgb = [
                        upstream.rgb.get(x, y, 0),
                        upstream.rgb.get(x, y, 1),
                        upstream.rgb.get(x, y, 2),
                    ];
                    let up_alpha = upstream.alpha.get(x, y, 0);
                    let up_feat = upstream.feature.map(|f| {
                        [f.get(x, y, 0), f.get(x, y, 1), f.get(x, y, 2)]
                    });
                    // Suffix accumulators, seeded with the background terms.
                    let mut acc_rgb = [
                        background[0] * t_final,
                        background[1] * t_final,
                        background[2] * t_final,
                    ];
                    let mut acc_feat = acc_rgb;
                    let mut acc_alpha = 0.0;
                    for c in contribs.iter().rev() {
                        let p = &projs[c.pi];
                        let wgt = c.alpha * c.t_before;
                        let color = &cloud.color[p.idx];
                        let feat = &feats[p.idx];
                        let omae = 1.0 - c.alpha;
                        let mut d_alpha = 0.0;
                        for ch in 0..3 {
                            acc.d_color[c.pi][ch] += up_rgb[ch] * wgt;
                            d_alpha +=
                                up_rgb[ch] * (color[ch] * c.t_before - acc_rgb[ch] / omae);
                        }
                        if let Some(uf) = up_feat {
                            for ch in 0..3 {
                                acc.d_feat[c.pi][ch] += uf[ch] * wgt;
                                d_alpha +=
                                    uf[ch] * (feat[ch] * c.t_before - acc_feat[ch] / omae);
                            }
                        }
                        d_alpha += up_alpha * (c.t_before - acc_alpha / omae);
                        for ch in 0..3 {
                            acc_rgb[ch] += color[ch] * wgt;
                            acc_feat[ch] += feat[ch] * wgt;
                        }
                        acc_alpha += wgt;
                        if c.clamped {
                            continue;
                        }
                        // α = σ(o)·g
                        acc.d_op[c.pi] += d_alpha * c.g * p.opacity * (1.0 - p.opacity);
                        let d_g = d_alpha * p.opacity;
                        // g = exp(-e/2), e = dᵀΛd with d = pixel - mean,
                        // so dL/dmean = -2 d_e Λ d.
                        let d_e = -0.5 * c.g * d_g;
                        let lam_d = p.lambda * c.d;
                        acc.d_mean[c.pi] += lam_d * (-2.0 * d_e);
                        // dL/dΛ = d_e · d dᵀ ; dL/dΣ₂ = -Λ (dL/dΛ) Λ
                        let ddt = c.d * c.d.transpose();
                        let d_lambda = ddt * d_e;
                        acc.d_cov[c.pi] += -(p.lambda * d_lambda * p.lambda);
                    }
                }
            }
            acc
        },
        |a, b| a.add(&b),
    )
    .unwrap_or_else(|| Partial::zeros(m));

    // Chain the projected-space partials back to the 3D parameters.
    let mut grads = par::reduce_ranges(
        m,
        par::GRAD_CHUNKS,
        |range| {
            let mut g = CloudGrads::zeros(n);
            for pi in range {
                let p = &projs[pi];
                let i = p.idx;
                g.opacity_logit[i] += partial.d_op[pi];
                for c in 0..3 {
                    g.color[i][c] += partial.d_color[pi][c];
                    g.feature[i][c] += partial.d_feat[pi][c];
                }
                let g2 = partial.d_cov[pi];
                let d_mean = partial.d_mean[pi];
                // Σ₂ = A Σ₃ Aᵀ (+ dilation)
                let d_a = (g2 + g2.transpose()) * p.a * p.sigma3;
                let d_sigma3 = p.a.transpose() * g2 * p.a;
                // A = J R_c
                let d_jac = d_a * cam.rotation.transpose();
                // mean2d = (fx px/pz + cx, fy py/pz + cy): d mean/dp = J.
                let mut d_p = p.jac.transpose() * d_mean;
                let (pxc, pyc, pzc) = (p.p_cam.x, p.p_cam.y, p.p_cam.z);
                let inv_z = 1.0 / pzc;
                let inv_z2 = inv_z * inv_z;
                // Nonzero entries of ∂J/∂p (J as given in project_all).
                let d_j02 = d_jac[(0, 2)];
                let d_j12 = d_jac[(1, 2)];
                let d_j00 = d_jac[(0, 0)];
                let d_j11 = d_jac[(1, 1)];
                d_p.x += d_j02 * (-cam.fx * inv_z2);
                d_p.y += d_j12 * (-cam.fy * inv_z2);
                d_p.z += d_j00 * (-cam.fx * inv_z2)
                    + d_j11 * (-cam.fy * inv_z2)
                    + d_j02 * (2.0 * cam.fx * pxc * inv_z2 * inv_z)
                    + d_j12 * (2.0 * cam.fy * pyc * inv_z2 * inv_z);
                g.mu[i] += cam.rotation.transpose() * d_p;
                // Σ₃ = M Mᵀ with M = R diag(s)
                let mmat = M3::from_columns(&[
                    p.rot.column(0) * p.scale.x,
                    p.rot.column(1) * p.scale.y,
                    p.rot.column(2) * p.scale.z,
                ]);
                let d_m = (d_sigma3 + d_sigma3.transpose()) * mmat;
                let mut d_rot = M3::zeros();
                for k in 0..3 {
                    let mut ds = 0.0;
                    for r in 0..3 {
                        ds += d_m[(r, k)] * p.rot[(r, k)];
                        d_rot[(r, k)] = d_m[(r, k)] * p.scale[k];
                    }
                    g.log_scale[i][k] += ds * p.scale[k];
                }
                let d_unit = quat_to_mat_backward(&p.unit_quat, &d_rot);
                g.quat[i] += normalize_backward(&cloud.quat[i], &d_unit);
            }
            g
        },
        |a, b| a.add(&b),
    )
    .unwrap_or_else(|| CloudGrads::zeros(n));

    if cloud.feature.is_none() {
        for f in &mut grads.feature {
            *f = [0.0; 3];
        }
    }
    Ok(grads)
}

pub fn cloud_to_container(cloud: &GaussianCloud) -> Result<Container> {
    let mut c = Container::new();
    c.meta = serde_json::json!({"kind": "gaussian_cloud"});
    let n = cloud.len();
    c.insert_f32(
        "mu",
        vec![n, 3],
        cloud.mu.iter().flat_map(|v| [v.x as f32, v.y as f32, v.z as f32]).collect(),
    )?;
    c.insert_f32(
        "quat",
        vec![n, 4],
        cloud
            .quat
            .iter()
            .flat_map(|q| [q[0] as f32, q[1] as f32, q[2] as f32, q[3] as f32])
            .collect(),
    )?;
    c.insert_f32(
        "log_scale",
        vec![n, 3],
        cloud
            .log_scale
            .iter()
            .flat_map(|v| [v.x as f32, v.y as f32, v.z as f32])
            .collect(),
    )?;
    c.insert_f32(
        "color",
        vec![n, 3],
        cloud.color.iter().flatten().map(|&v| v as f32).collect(),
    )?;
    c.insert_f32(
        "opacity_logit",
        vec![n],
        cloud.opacity_logit.iter().map(|&v| v as f32).collect(),
    )?;
    if let Some(f) = &cloud.feature {
        c.insert_f32(
            "feature",
            vec![n, 3],
            f.iter().flatten().map(|&v| v as f32).collect(),
        )?;
    }
    Ok(c)
}

pub fn cloud_from_container(c: &Container) -> Result<GaussianCloud> {
    let mu = c
        .require("mu")?
        .as_f64()?
        .chunks_exact(3)
        .map(|v| V3::new(v[0], v[1], v[2]))
        .collect();
    let quat = c
        .require("quat")?
        .as_f64()?
        .chunks_exact(4)
        .map(|q| Vector4::new(q[0], q[1], q[2], q[3]))
        .collect();
    let log_scale = c
        .require("log_scale")?
        .as_f64()?
        .chunks_exact(3)
        .map(|v| V3::new(v[0], v[1], v[2]))
        .collect();
    let color = c
        .require("color")?
        .as_f64()?
        .chunks_exact(3)
        .map(|v| [v[0], v[1], v[2]])
        .collect();
    let opacity_logit = c.require("opacity_logit")?.as_f64()?;
    let feature = match c.get("feature") {
        Some(a) => Some(
            a.as_f64()?
                .chunks_exact(3)
                .map(|v| [v[0], v[1], v[2]])
                .collect(),
        ),
        None => None,
    };
    let cloud = GaussianCloud {
        mu,
        quat,
        log_scale,
        color,
        opacity_logit,
        feature,
    };
    cloud.validate()?;
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::math::grad_close;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    // Principal point on the center of pixel (16,16) so closed-form probes
    // see the footprint peak exactly.
    fn probe_cam() -> Camera {
        Camera::look_at(
            V3::new(0.0, -3.0, 0.0),
            V3::zeros(),
            V3::new(0.0, 0.0, 1.0),
            60.0,
            60.0,
            16.5,
            16.5,
            32,
            32,
        )
    }

    #[test]
    fn covariance_closed_forms() {
        let id = Vector4::new(1.0, 0.0, 0.0, 0.0);
        let c = covariance(&id, &V3::zeros());
        assert!((c - M3::identity()).norm() < 1e-12);

        let c = covariance(&id, &V3::new(2f64.ln(), 0.0, 0.0));
        let expect = M3::from_diagonal(&V3::new(4.0, 1.0, 1.0));
        assert!((c - expect).norm() < 1e-12);

        // 90° about z swaps the x and y variances.
        let half = std::f64::consts::FRAC_PI_4;
        let qz = Vector4::new(half.cos(), 0.0, 0.0, half.sin());
        let c = covariance(&qz, &V3::new(2f64.ln(), 0.0, 0.0));
        let expect = M3::from_diagonal(&V3::new(1.0, 4.0, 1.0));
        assert!((c - expect).norm() < 1e-9, "{c}");
    }

    #[test]
    fn covariance_is_symmetric() {
        let q = Vector4::new(0.6, 0.2, -0.5, 0.3);
        let c = covariance(&q, &V3::new(0.2, -0.4, 0.1));
        assert!((c - c.transpose()).norm() < 1e-9);
    }

    #[test]
    fn gaussian_eval_closed_forms() {
        let mu = V3::new(0.1, 0.2, 0.3);
        let sigma = M3::identity() * 4.0; // σ = 2
        assert!((eval_gaussian(&mu, &sigma, &mu).unwrap() - 1.0).abs() < 1e-15);
        let x = mu + V3::new(2.0, 0.0, 0.0); // |x-μ| = σ
        let v = eval_gaussian(&mu, &sigma, &x).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-12);

        let anis = M3::from_diagonal(&V3::new(4.0, 1.0, 1.0));
        let v = eval_gaussian(&V3::zeros(), &anis, &V3::new(2.0, 0.0, 0.0)).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_eval_rejects_non_spd() {
        let sigma = M3::from_diagonal(&V3::new(-1.0, 1.0, 1.0));
        assert!(eval_gaussian(&V3::zeros(), &sigma, &V3::zeros()).is_err());
    }

    #[test]
    fn transparent_cloud_renders_background() {
        let mut cloud = fixtures::random_cloud(5, 7);
        for o in &mut cloud.opacity_logit {
            *o = -1e9;
        }
        let bg = [0.3, 0.5, 0.7];
        let buf = render(&cloud, &probe_cam(), bg).unwrap();
        for p in 0..buf.alpha.data.len() {
            assert!(buf.alpha.data[p].abs() < 1e-12);
            for c in 0..3 {
                assert!((buf.rgb.data[p * 3 + c] - bg[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn opaque_gaussian_takes_pixel_color() {
        let cam = probe_cam();
        let cloud = GaussianCloud {
            mu: vec![V3::zeros()],
            quat: vec![Vector4::new(1.0, 0.0, 0.0, 0.0)],
            log_scale: vec![V3::new(-1.0, -1.0, -1.0)],
            color: vec![[0.9, 0.4, 0.2]],
            opacity_logit: vec![1e3],
            feature: None,
        };
        let buf = render(&cloud, &cam, [0.0; 3]).unwrap();
        // The origin projects to the principal point (16,16); with alpha
        // clamped at 0.999 the pixel sits within 1e-3 of the color.
        let x = cam.cx as usize;
        let y = cam.cy as usize;
        for (c, want) in [0.9, 0.4, 0.2].iter().enumerate() {
            assert!((buf.rgb.get(x, y, c) - want).abs() < 2e-3);
        }
    }

    #[test]
    fn two_layer_alpha_blend_closed_form() {
        // Two coincident gaussians at the principal point; probing the
        // central pixel where g = 1 so α = σ(o).
        let cam = probe_cam();
        let o1 = 0.4f64;
        let o2 = -0.3f64;
        let cloud = GaussianCloud {
            mu: vec![V3::zeros(), V3::new(0.0, 0.002, 0.0)],
            quat: vec![Vector4::new(1.0, 0.0, 0.0, 0.0); 2],
            log_scale: vec![V3::new(-1.0, -1.0, -1.0); 2],
            color: vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            opacity_logit: vec![o1, o2],
            feature: None,
        };
        let bg = [0.2, 0.2, 0.6];
        let buf = render(&cloud, &cam, bg).unwrap();
        let (a1, a2) = (sigmoid(o1), sigmoid(o2));
        // Pixel (16,16) center is exactly the projection of both means.
        let x = 16;
        let y = 16;
        let expect = [
            1.0 * a1 + bg[0] * (1.0 - a1) * (1.0 - a2),
            1.0 * a2 * (1.0 - a1) + bg[1] * (1.0 - a1) * (1.0 - a2),
            bg[2] * (1.0 - a1) * (1.0 - a2),
        ];
        for c in 0..3 {
            assert!(
                (buf.rgb.get(x, y, c) - expect[c]).abs() < 1e-9,
                "channel {c}: {} vs {}",
                buf.rgb.get(x, y, c),
                expect[c]
            );
        }
        assert!((buf.alpha.get(x, y, 0) - (a1 + a2 * (1.0 - a1))).abs() < 1e-9);
    }

    #[test]
    fn weights_and_transmittance_sum_to_one() {
        for seed in 0..3 {
            let cloud = fixtures::random_cloud(20, seed);
            let r = weight_identity_residual(&cloud, &probe_cam()).unwrap();
            assert!(r < 1e-12, "residual {r}");
        }
    }

    #[test]
    fn render_invariant_under_permutation() {
        let cloud = fixtures::random_cloud(12, 3);
        let cam = probe_cam();
        let base = render(&cloud, &cam, [1.0; 3]).unwrap();
        // Reverse the point list.
        let perm: Vec<usize> = (0..cloud.len()).rev().collect();
        let permuted = GaussianCloud {
            mu: perm.iter().map(|&i| cloud.mu[i]).collect(),
            quat: perm.iter().map(|&i| cloud.quat[i]).collect(),
            log_scale: perm.iter().map(|&i| cloud.log_scale[i]).collect(),
            color: perm.iter().map(|&i| cloud.color[i]).collect(),
            opacity_logit: perm.iter().map(|&i| cloud.opacity_logit[i]).collect(),
            feature: cloud
                .feature
                .as_ref()
                .map(|f| perm.iter().map(|&i| f[i]).collect()),
        };
        let other = render(&permuted, &cam, [1.0; 3]).unwrap();
        for (a, b) in base.rgb.data.iter().zip(other.rgb.data.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn background_term_is_consistent() {
        let cloud = fixtures::random_cloud(10, 11);
        let cam = probe_cam();
        let bg = [0.25, 0.5, 0.75];
        let over_bg = render(&cloud, &cam, bg).unwrap();
        let over_black = render(&cloud, &cam, [0.0; 3]).unwrap();
        for p in 0..cam.width * cam.height {
            let t = 1.0 - over_black.alpha.data[p];
            for c in 0..3 {
                let reconstructed = over_black.rgb.data[p * 3 + c] + bg[c] * t;
                assert!((reconstructed - over_bg.rgb.data[p * 3 + c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let cloud = fixtures::random_cloud(6, 2);
        let cam = probe_cam();
        let z3 = Image::new(cam.width, cam.height, 3);
        let z1 = Image::new(cam.width, cam.height, 1);
        let grads = backward(
            &cloud,
            &cam,
            [0.0; 3],
            &SplatUpstream {
                rgb: &z3,
                alpha: &z1,
                feature: Some(&z3),
            },
        )
        .unwrap();
        assert!(grads.mu.iter().all(|g| g.norm() == 0.0));
        assert!(grads.quat.iter().all(|g| g.norm() == 0.0));
        assert!(grads.opacity_logit.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn color_grad_is_alpha_times_transmittance() {
        // Single gaussian, loss = red channel of one pixel.
        let cam = probe_cam();
        let cloud = GaussianCloud {
            mu: vec![V3::zeros()],
            quat: vec![Vector4::new(1.0, 0.0, 0.0, 0.0)],
            log_scale: vec![V3::new(-1.5, -1.5, -1.5)],
            color: vec![[0.3, 0.6, 0.1]],
            opacity_logit: vec![0.2],
            feature: None,
        };
        let buf = render(&cloud, &cam, [0.0; 3]).unwrap();
        let (x, y) = (16, 16);
        let mut up_rgb = Image::new(cam.width, cam.height, 3);
        up_rgb.set(x, y, 0, 1.0);
        let z1 = Image::new(cam.width, cam.height, 1);
        let grads = backward(
            &cloud,
            &cam,
            [0.0; 3],
            &SplatUpstream {
                rgb: &up_rgb,
                alpha: &z1,
                feature: None,
            },
        )
        .unwrap();
        // With a single gaussian T = 1, so dC_r/dc_r = α at that pixel,
        // which equals the rendered alpha.
        let alpha = buf.alpha.get(x, y, 0);
        assert!((grads.color[0][0] - alpha).abs() < 1e-12);
        assert_eq!(grads.color[0][1], 0.0);
    }

    /// Full finite-difference check across all five parameter groups.
    #[test]
    fn gradients_match_finite_differences() {
        let cam = probe_cam();
        let cloud = fixtures::random_cloud(3, 17);
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let mut up_rgb = Image::new(cam.width, cam.height, 3);
        let mut up_alpha = Image::new(cam.width, cam.height, 1);
        let mut up_feat = Image::new(cam.width, cam.height, 3);
        for v in up_rgb.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for v in up_alpha.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for v in up_feat.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let bg = [0.4, 0.1, 0.8];
        let loss = |c: &GaussianCloud| -> f64 {
            let buf = render(c, &cam, bg).unwrap();
            let mut l = 0.0;
            for (v, u) in buf.rgb.data.iter().zip(up_rgb.data.iter()) {
                l += v * u;
            }
            for (v, u) in buf.alpha.data.iter().zip(up_alpha.data.iter()) {
                l += v * u;
            }
            for (v, u) in buf.feature.data.iter().zip(up_feat.data.iter()) {
                l += v * u;
            }
            l
        };
        let grads = backward(
            &cloud,
            &cam,
            bg,
            &SplatUpstream {
                rgb: &up_rgb,
                alpha: &up_alpha,
                feature: Some(&up_feat),
            },
        )
        .unwrap();
        let h = 1e-4;
        let tol = 1e-3;
        for i in 0..cloud.len() {
            for k in 0..3 {
                let mut p = cloud.clone();
                let mut m = cloud.clone();
                p.mu[i][k] += h;
                m.mu[i][k] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!(
                    grad_close(grads.mu[i][k], fd, tol, 1e-7),
                    "mu[{i}][{k}]: {} vs {}",
                    grads.mu[i][k],
                    fd
                );
            }
            for k in 0..4 {
                let mut p = cloud.clone();
                let mut m = cloud.clone();
                p.quat[i][k] += h;
                m.quat[i][k] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!(
                    grad_close(grads.quat[i][k], fd, tol, 1e-7),
                    "quat[{i}][{k}]: {} vs {}",
                    grads.quat[i][k],
                    fd
                );
            }
            for k in 0..3 {
                let mut p = cloud.clone();
                let mut m = cloud.clone();
                p.log_scale[i][k] += h;
                m.log_scale[i][k] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!(
                    grad_close(grads.log_scale[i][k], fd, tol, 1e-7),
                    "log_scale[{i}][{k}]: {} vs {}",
                    grads.log_scale[i][k],
                    fd
                );
            }
            for k in 0..3 {
                let mut p = cloud.clone();
                let mut m = cloud.clone();
                p.color[i][k] += h;
                m.color[i][k] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!(
                    grad_close(grads.color[i][k], fd, tol, 1e-7),
                    "color[{i}][{k}]: {} vs {}",
                    grads.color[i][k],
                    fd
                );
            }
            {
                let mut p = cloud.clone();
                let mut m = cloud.clone();
                p.opacity_logit[i] += h;
                m.opacity_logit[i] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!(
                    grad_close(grads.opacity_logit[i], fd, tol, 1e-7),
                    "opacity[{i}]: {} vs {}",
                    grads.opacity_logit[i],
                    fd
                );
            }
            if let Some(f) = &cloud.feature {
                let _ = f;
                for k in 0..3 {
                    let mut p = cloud.clone();
                    let mut m = cloud.clone();
                    p.feature.as_mut().unwrap()[i][k] += h;
                    m.feature.as_mut().unwrap()[i][k] -= h;
                    let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                    assert!(
                        grad_close(grads.feature[i][k], fd, tol, 1e-7),
                        "feature[{i}][{k}]: {} vs {}",
                        grads.feature[i][k],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn cloud_container_roundtrip() {
        let cloud = fixtures::random_cloud(8, 5);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cloud.bin");
        cloud_to_container(&cloud).unwrap().write(&p).unwrap();
        let back = cloud_from_container(&Container::read(&p).unwrap()).unwrap();
        assert_eq!(back.len(), cloud.len());
        for (a, b) in back.mu.iter().zip(cloud.mu.iter()) {
            assert!((a - b).norm() < 1e-6);
        }
    }
}
