//! Exact ray-cast rendering of textured planar scenes.
//!
//! Every pixel ray is intersected analytically with the scene planes and the
//! procedural texture is evaluated at the hit point, so rendered depth and
//! appearance carry no rasterization error. Textures are sums of seeded
//! sinusoids in plane coordinates (cycles per scene unit).

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::unproject;
use crate::{Error, Intrinsics, PixelGrid, PoseSE3, Result, Tensor};

pub const MAX_TEXTURE_COMPONENTS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneGeometry {
    /// Plane `z = depth` in world coordinates.
    FrontoPlane { depth: f64 },
    /// Plane through `(0, 0, depth)` with the given normal.
    SlantedPlane { depth: f64, normal: [f64; 3] },
    /// A rectangular fronto-parallel patch in front of a fronto-parallel
    /// background. `foreground_extent` is `[x_min, x_max, y_min, y_max]` in
    /// world units on the foreground plane.
    TwoPlanes {
        background_depth: f64,
        foreground_depth: f64,
        foreground_extent: [f64; 4],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextureSpec {
    pub seed: u64,
    /// Number of sinusoids, at most 8.
    pub components: usize,
    /// Frequency range in cycles per scene unit.
    pub frequency_range: [f64; 2],
    /// Sum of component amplitudes; values stay in `0.5 ± amplitude`.
    pub amplitude: f64,
    pub channels: usize,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            components: 6,
            frequency_range: [0.3, 0.8],
            amplitude: 0.4,
            channels: 3,
        }
    }
}

/// Additive brightness ramp applied to rendered source frames, in image
/// coordinates: `offset + gradient[0] * x/W + gradient[1] * y/H`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrightnessField {
    pub offset: f64,
    pub gradient: [f64; 2],
}

impl BrightnessField {
    pub fn at(&self, x: f64, y: f64, grid: PixelGrid) -> f64 {
        self.offset + self.gradient[0] * x / grid.width as f64 + self.gradient[1] * y / grid.height as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub geometry: SceneGeometry,
    #[serde(default)]
    pub texture: TextureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_brightness: Option<BrightnessField>,
}

impl Scene {
    pub fn new(geometry: SceneGeometry, texture: TextureSpec) -> Self {
        Self {
            geometry,
            texture,
            source_brightness: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.texture;
        if t.components == 0 || t.components > MAX_TEXTURE_COMPONENTS {
            return Err(Error::InvalidParameter(format!(
                "texture needs 1..={MAX_TEXTURE_COMPONENTS} components, got {}",
                t.components
            )));
        }
        let [lo, hi] = t.frequency_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) || t.amplitude < 0.0 || t.channels == 0 {
            return Err(Error::InvalidParameter(format!("invalid texture {t:?}")));
        }
        match self.geometry {
            SceneGeometry::FrontoPlane { depth } | SceneGeometry::SlantedPlane { depth, .. } if depth <= 0.0 => {
                Err(Error::InvalidParameter(format!("plane depth must be positive, got {depth}")))
            }
            SceneGeometry::SlantedPlane { normal, .. } if Vector3::from(normal).norm() == 0.0 => {
                Err(Error::InvalidParameter("plane normal must be nonzero".into()))
            }
            SceneGeometry::TwoPlanes {
                background_depth,
                foreground_depth,
                foreground_extent: [x0, x1, y0, y1],
            } if !(0.0 < foreground_depth && foreground_depth < background_depth && x0 < x1 && y0 < y1) => {
                Err(Error::InvalidParameter(
                    "two_planes needs 0 < foreground_depth < background_depth and a non-empty extent".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

struct Wave {
    k: Vector2<f64>,
    amplitude: f64,
    phases: Vec<f64>,
}

struct Texture {
    waves: Vec<Wave>,
}

impl Texture {
    fn new(spec: &TextureSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [lo, hi] = spec.frequency_range;
        let amplitude = spec.amplitude / spec.components as f64;
        let waves = (0..spec.components)
            .map(|_| {
                let theta = rng.gen_range(0.0..std::f64::consts::PI);
                let f = if hi > lo { rng.gen_range(lo..hi) } else { lo };
                let phases = (0..spec.channels)
                    .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                    .collect();
                Wave {
                    k: Vector2::new(theta.cos(), theta.sin()) * f,
                    amplitude,
                    phases,
                }
            })
            .collect();
        Self { waves }
    }

    fn eval(&self, st: Vector2<f64>, channel: usize) -> f64 {
        0.5 + self
            .waves
            .iter()
            .map(|w| w.amplitude * (std::f64::consts::TAU * w.k.dot(&st) + w.phases[channel]).sin())
            .sum::<f64>()
    }

    fn max_frequency(&self) -> f64 {
        self.waves.iter().map(|w| w.k.norm()).fold(0.0, f64::max)
    }
}

/// A plane `n · (X - anchor) = 0` with an in-plane basis for texturing.
struct Plane {
    anchor: Vector3<f64>,
    normal: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
}

impl Plane {
    fn new(anchor: Vector3<f64>, normal: Vector3<f64>) -> Self {
        let mut n = normal.normalize();
        if n.z < 0.0 {
            n = -n;
        }
        let mut e1 = Vector3::y().cross(&n);
        if e1.norm() < 1e-9 {
            e1 = n.cross(&Vector3::x());
        }
        let e1 = e1.normalize();
        let e2 = n.cross(&e1);
        Self {
            anchor,
            normal: n,
            e1,
            e2,
        }
    }

    /// Ray parameter of the hit, if the ray meets the plane in front.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let lambda = self.normal.dot(&(self.anchor - origin)) / denom;
        (lambda > 0.0).then_some(lambda)
    }

    fn coords(&self, p: &Vector3<f64>) -> Vector2<f64> {
        let r = p - self.anchor;
        Vector2::new(r.dot(&self.e1), r.dot(&self.e2))
    }
}

/// Which scene surface a ray hit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Surface {
    Background,
    Foreground,
}

struct Hit {
    point: Vector3<f64>,
    depth: f64,
    surface: Surface,
}

/// Prepared scene: planes plus instantiated textures.
struct Prepared {
    planes: Vec<(Plane, Surface, Option<[f64; 4]>)>,
    textures: [Texture; 2],
}

impl Prepared {
    fn new(scene: &Scene) -> Result<Self> {
        scene.validate()?;
        let planes = match scene.geometry {
            SceneGeometry::FrontoPlane { depth } => {
                vec![(Plane::new(Vector3::new(0.0, 0.0, depth), Vector3::z()), Surface::Background, None)]
            }
            SceneGeometry::SlantedPlane { depth, normal } => vec![(
                Plane::new(Vector3::new(0.0, 0.0, depth), Vector3::from(normal)),
                Surface::Background,
                None,
            )],
            SceneGeometry::TwoPlanes {
                background_depth,
                foreground_depth,
                foreground_extent,
            } => vec![
                (
                    Plane::new(Vector3::new(0.0, 0.0, foreground_depth), Vector3::z()),
                    Surface::Foreground,
                    Some(foreground_extent),
                ),
                (
                    Plane::new(Vector3::new(0.0, 0.0, background_depth), Vector3::z()),
                    Surface::Background,
                    None,
                ),
            ],
        };
        let seed = scene.texture.seed;
        Ok(Self {
            planes,
            textures: [
                Texture::new(&scene.texture, seed),
                Texture::new(&scene.texture, seed.wrapping_add(1)),
            ],
        })
    }

    fn texture(&self, s: Surface) -> &Texture {
        match s {
            Surface::Background => &self.textures[0],
            Surface::Foreground => &self.textures[1],
        }
    }

    /// Nearest hit of the camera ray through pixel `(x, y)`; `cam` maps
    /// world to camera coordinates.
    fn cast(&self, cam: &PoseSE3, k: &Matrix3<f64>, x: f64, y: f64) -> Option<Hit> {
        let rt = cam.rotation_matrix().transpose();
        let center = -(rt * cam.translation_vector());
        let dir_c = unproject(&Vector2::new(x, y), 1.0, k).expect("unit depth");
        let dir = rt * dir_c;
        let mut best: Option<(f64, Surface, Vector3<f64>)> = None;
        for (plane, surface, extent) in &self.planes {
            let Some(lambda) = plane.intersect(&center, &dir) else {
                continue;
            };
            let p = center + dir * lambda;
            if let Some([x0, x1, y0, y1]) = extent {
                if !(*x0..=*x1).contains(&p.x) || !(*y0..=*y1).contains(&p.y) {
                    continue;
                }
            }
            if best.as_ref().is_none_or(|b| lambda < b.0) {
                best = Some((lambda, *surface, p));
            }
        }
        // dir_c has unit z, so the ray parameter is the camera-frame depth.
        best.map(|(lambda, surface, point)| Hit {
            point,
            depth: lambda * dir_c.z,
            surface,
        })
    }

    fn shade(&self, hit: &Hit, channel: usize) -> f64 {
        let plane = match hit.surface {
            Surface::Foreground => &self.planes[0].0,
            Surface::Background => &self.planes[self.planes.len() - 1].0,
        };
        self.texture(hit.surface).eval(plane.coords(&hit.point), channel)
    }
}

/// Renders `scene` from a camera whose pose maps world to camera
/// coordinates. Returns the `H x W x C` image and `H x W` depth.
pub fn render(scene: &Scene, cam_pose: &PoseSE3, intr: &Intrinsics, grid: PixelGrid) -> Result<(Tensor, Tensor)> {
    let prepared = Prepared::new(scene)?;
    let (image, depth, _) = render_prepared(&prepared, scene, cam_pose, intr, grid)?;
    Ok((image, depth))
}

fn render_prepared(
    prepared: &Prepared,
    scene: &Scene,
    cam_pose: &PoseSE3,
    intr: &Intrinsics,
    grid: PixelGrid,
) -> Result<(Tensor, Tensor, Vec<Surface>)> {
    intr.validate()?;
    let k = intr.pixel_matrix(grid);
    let ch = scene.texture.channels;
    let (h, w) = (grid.height, grid.width);
    let mut image = Vec::with_capacity(h * w * ch);
    let mut depth = Vec::with_capacity(h * w);
    let mut surfaces = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let hit = prepared.cast(cam_pose, &k, x as f64, y as f64).ok_or_else(|| {
                Error::SceneNotVisible(format!("pixel ({x}, {y}) misses every plane"))
            })?;
            for c in 0..ch {
                image.push(prepared.shade(&hit, c));
            }
            depth.push(hit.depth);
            surfaces.push(hit.surface);
        }
    }
    Ok((Tensor::new(&[h, w, ch], image)?, Tensor::new(&[h, w], depth)?, surfaces))
}

fn add_brightness(image: &mut Tensor, field: &BrightnessField, grid: PixelGrid) {
    let ch = image.channels();
    let shape = image.shape().to_vec();
    let mut data = std::mem::replace(image, Tensor::scalar(0.0)).into_data();
    for y in 0..grid.height {
        for x in 0..grid.width {
            let b = field.at(x as f64, y as f64, grid);
            for c in 0..ch {
                data[(y * grid.width + x) * ch + c] += b;
            }
        }
    }
    *image = Tensor::new(&shape, data).expect("same shape");
}

/// A target/source pair with exact ground truth. The target camera sits at
/// the world origin; `pose` maps target to source coordinates.
#[derive(Clone, Debug)]
pub struct RenderedPair {
    pub target: Tensor,
    pub source: Tensor,
    pub depth: Tensor,
    pub pose: PoseSE3,
    pub intrinsics: Intrinsics,
    /// 1 where the target point projects into the source with all four
    /// bilinear neighbours seeing the same, unoccluded surface.
    pub visibility: Tensor,
}

pub fn make_pair(scene: &Scene, pose: &PoseSE3, intr: &Intrinsics, grid: PixelGrid) -> Result<RenderedPair> {
    let prepared = Prepared::new(scene)?;
    let (target, depth, target_surfaces) = render_prepared(&prepared, scene, &PoseSE3::identity(), intr, grid)?;
    let (mut source, _, source_surfaces) = render_prepared(&prepared, scene, pose, intr, grid)?;
    if let Some(field) = &scene.source_brightness {
        add_brightness(&mut source, field, grid);
    }
    let visibility = visibility(&depth, &target_surfaces, &source_surfaces, pose, intr, grid)?;
    Ok(RenderedPair {
        target,
        source,
        depth,
        pose: *pose,
        intrinsics: *intr,
        visibility,
    })
}

fn visibility(
    depth: &Tensor,
    target_surfaces: &[Surface],
    source_surfaces: &[Surface],
    pose: &PoseSE3,
    intr: &Intrinsics,
    grid: PixelGrid,
) -> Result<Tensor> {
    let k = intr.pixel_matrix(grid);
    let (w, h) = (grid.width, grid.height);
    let (umax, vmax) = ((w - 1) as f64, (h - 1) as f64);
    let slack = crate::camera::EDGE_SLACK;
    let mut vis = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let p = unproject(&Vector2::new(x as f64, y as f64), depth.at2(y, x), &k)?;
            let q = pose.transform(&p);
            if q.z <= 0.0 {
                continue;
            }
            let pix = k * q;
            let (u, v) = (pix.x / pix.z, pix.y / pix.z);
            if !(-slack..=umax + slack).contains(&u) || !(-slack..=vmax + slack).contains(&v) {
                continue;
            }
            let (u, v) = (u.clamp(0.0, umax), v.clamp(0.0, vmax));
            let x0 = (u.floor() as usize).min(w - 2);
            let y0 = (v.floor() as usize).min(h - 2);
            let own = target_surfaces[i];
            let corners = [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)];
            if corners.iter().all(|&(cx, cy)| source_surfaces[cy * w + cx] == own) {
                vis[i] = 1.0;
            }
        }
    }
    Tensor::new(&[h, w], vis)
}

/// Frames rendered along a trajectory of world-to-camera poses.
#[derive(Clone, Debug)]
pub struct RenderedSequence {
    pub frames: Vec<Tensor>,
    pub depths: Vec<Tensor>,
    /// World-to-camera pose of each frame.
    pub poses: Vec<PoseSE3>,
    /// `relative[k]` maps frame `k` camera coordinates to frame `k + 1`.
    pub relative: Vec<PoseSE3>,
    pub intrinsics: Intrinsics,
}

pub fn make_sequence(
    scene: &Scene,
    trajectory: &[PoseSE3],
    intr: &Intrinsics,
    grid: PixelGrid,
) -> Result<RenderedSequence> {
    let prepared = Prepared::new(scene)?;
    let mut frames = Vec::with_capacity(trajectory.len());
    let mut depths = Vec::with_capacity(trajectory.len());
    for pose in trajectory {
        let (img, d, _) = render_prepared(&prepared, scene, pose, intr, grid)?;
        frames.push(img);
        depths.push(d);
    }
    let relative = relative_poses(trajectory);
    Ok(RenderedSequence {
        frames,
        depths,
        poses: trajectory.to_vec(),
        relative,
        intrinsics: *intr,
    })
}

/// Frame-to-next-frame transforms of a world-to-camera trajectory.
pub fn relative_poses(trajectory: &[PoseSE3]) -> Vec<PoseSE3> {
    trajectory
        .windows(2)
        .map(|w| w[1].compose(&w[0].inverse()))
        .collect()
}

/// `frames` poses obtained by repeating `motion` from the origin.
pub fn constant_motion(frames: usize, motion: &PoseSE3) -> Vec<PoseSE3> {
    let mut poses = Vec::with_capacity(frames);
    let mut current = PoseSE3::identity();
    for _ in 0..frames {
        poses.push(current);
        current = motion.compose(&current);
    }
    poses
}

/// Highest texture frequency in cycles per pixel over the rendered view,
/// from the local plane-coordinate Jacobian at every pixel.
pub fn pixel_frequency(scene: &Scene, cam_pose: &PoseSE3, intr: &Intrinsics, grid: PixelGrid) -> Result<f64> {
    let prepared = Prepared::new(scene)?;
    let k = intr.pixel_matrix(grid);
    let mut worst: f64 = 0.0;
    for y in 0..grid.height {
        for x in 0..grid.width {
            let (xf, yf) = (x as f64, y as f64);
            let cast = |dx: f64, dy: f64| {
                prepared
                    .cast(cam_pose, &k, xf + dx, yf + dy)
                    .ok_or_else(|| Error::SceneNotVisible(format!("pixel ({x}, {y}) misses every plane")))
            };
            let c = cast(0.0, 0.0)?;
            let plane = match c.surface {
                Surface::Foreground => &prepared.planes[0].0,
                Surface::Background => &prepared.planes[prepared.planes.len() - 1].0,
            };
            let origin = plane.coords(&c.point);
            let h = 1e-3;
            // Step along the same plane even if the neighbour hits another.
            let along = |dx: f64, dy: f64| -> Result<Vector2<f64>> {
                let rt = cam_pose.rotation_matrix().transpose();
                let center = -(rt * cam_pose.translation_vector());
                let dir = rt * unproject(&Vector2::new(xf + dx, yf + dy), 1.0, &k)?;
                let lambda = plane
                    .intersect(&center, &dir)
                    .ok_or_else(|| Error::SceneNotVisible(format!("pixel ({x}, {y}) grazes the plane")))?;
                Ok((plane.coords(&(center + dir * lambda)) - origin) / h)
            };
            let jx = along(h, 0.0)?;
            let jy = along(0.0, h)?;
            for wave in &prepared.texture(c.surface).waves {
                let fx = wave.k.dot(&jx).abs();
                let fy = wave.k.dot(&jy).abs();
                worst = worst.max(fx.hypot(fy));
            }
        }
    }
    Ok(worst)
}

/// Largest texture frequency of the scene in cycles per scene unit.
pub fn max_texture_frequency(scene: &Scene) -> Result<f64> {
    let p = Prepared::new(scene)?;
    Ok(p.textures.iter().map(Texture::max_frequency).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PixelGrid {
        PixelGrid::new(32, 24).unwrap()
    }

    fn k() -> Intrinsics {
        Intrinsics::new(0.82, 1.02, 0.5, 0.5).unwrap()
    }

    fn fronto(depth: f64) -> Scene {
        Scene::new(SceneGeometry::FrontoPlane { depth }, TextureSpec::default())
    }

    #[test]
    fn fronto_plane_has_constant_depth() {
        let (img, depth) = render(&fronto(5.0), &PoseSE3::identity(), &k(), grid()).unwrap();
        assert!(depth.data().iter().all(|&d| (d - 5.0).abs() < 1e-12));
        assert_eq!(img.shape(), &[24, 32, 3]);
        assert!(img.data().iter().all(|v| (0.1 - 1e-12..=0.9 + 1e-12).contains(v)));
    }

    #[test]
    fn slanted_plane_matches_closed_form() {
        let n = Vector3::new(0.3, 0.0, 1.0);
        let scene = Scene::new(
            SceneGeometry::SlantedPlane {
                depth: 4.0,
                normal: [n.x, n.y, n.z],
            },
            TextureSpec::default(),
        );
        let (_, depth) = render(&scene, &PoseSE3::identity(), &k(), grid()).unwrap();
        let km = k().pixel_matrix(grid());
        let a = Vector3::new(0.0, 0.0, 4.0);
        for (x, y) in [(0, 0), (31, 0), (16, 12), (5, 20), (31, 23)] {
            // Ray X = z * K^-1 p hits n.(X - a) = 0 at z = n.a / n.(K^-1 p).
            let r = km.try_inverse().unwrap() * Vector3::new(x as f64, y as f64, 1.0);
            let z = n.dot(&a) / n.dot(&r);
            assert!((depth.at2(y, x) - z).abs() < 1e-12, "pixel ({x}, {y})");
        }
    }

    #[test]
    fn plane_behind_camera_is_rejected() {
        let scene = fronto(2.0);
        let behind = PoseSE3::new([0.0; 3], [0.0, 0.0, -3.0]);
        assert!(matches!(render(&scene, &behind, &k(), grid()), Err(Error::SceneNotVisible(_))));
    }

    #[test]
    fn identity_pose_pair_is_identical() {
        let pair = make_pair(&fronto(3.0), &PoseSE3::identity(), &k(), grid()).unwrap();
        assert_eq!(pair.target, pair.source);
        assert!(pair.visibility.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn x_translation_masks_one_border_band() {
        // Disparity fx*W*tx/d = 0.82*32*tx/3; pick tx for exactly 4 px.
        let g = grid();
        let d = 3.0;
        let disparity = 4.0;
        let tx = disparity * d / (0.82 * g.width as f64);
        let pair = make_pair(&fronto(d), &PoseSE3::new([0.0; 3], [tx, 0.0, 0.0]), &k(), g).unwrap();
        for y in 0..g.height {
            for x in 0..g.width {
                let expect = if x + disparity as usize >= g.width { 0.0 } else { 1.0 };
                assert_eq!(pair.visibility.at2(y, x), expect, "({x}, {y})");
            }
        }
    }

    #[test]
    fn occluded_background_is_flagged() {
        let scene = Scene::new(
            SceneGeometry::TwoPlanes {
                background_depth: 4.0,
                foreground_depth: 2.0,
                foreground_extent: [-0.4, 0.4, -0.3, 0.3],
            },
            TextureSpec::default(),
        );
        let g = grid();
        let pose = PoseSE3::new([0.0; 3], [0.25, 0.0, 0.0]);
        let pair = make_pair(&scene, &pose, &k(), g).unwrap();
        let km = k().pixel_matrix(g);
        // Brute force: a background pixel is occluded when its source
        // projection's line of sight hits the foreground first.
        let mut occluded = 0;
        for y in 0..g.height {
            for x in 0..g.width {
                if (pair.depth.at2(y, x) - 4.0).abs() > 1e-9 {
                    continue;
                }
                let p = unproject(&Vector2::new(x as f64, y as f64), 4.0, &km).unwrap();
                let q = pose.transform(&p);
                let (u, v) = (km[(0, 0)] * q.x / q.z + km[(0, 2)], km[(1, 1)] * q.y / q.z + km[(1, 2)]);
                if !(0.0..=31.0).contains(&u) || !(0.0..=23.0).contains(&v) {
                    continue;
                }
                // Point on the source ray at foreground depth, back in world.
                let s = q * (2.0 / q.z);
                let world = pose.inverse().transform(&s);
                if (-0.4..=0.4).contains(&world.x) && (-0.3..=0.3).contains(&world.y) {
                    occluded += 1;
                    assert_eq!(pair.visibility.at2(y, x), 0.0, "({x}, {y}) occluded");
                }
            }
        }
        assert!(occluded > 0);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let pose = PoseSE3::new([0.01, -0.02, 0.0], [0.1, 0.0, 0.05]);
        let a = make_pair(&fronto(3.0), &pose, &k(), grid()).unwrap();
        let b = make_pair(&fronto(3.0), &pose, &k(), grid()).unwrap();
        assert_eq!(a.target, b.target);
        assert_eq!(a.source, b.source);
        let mut other = fronto(3.0);
        other.texture.seed = 9;
        let c = make_pair(&other, &pose, &k(), grid()).unwrap();
        assert_ne!(a.target, c.target);
    }

    #[test]
    fn sequences() {
        let scene = fronto(5.0);
        let still = make_sequence(&scene, &constant_motion(3, &PoseSE3::identity()), &k(), grid()).unwrap();
        assert!(still.frames.windows(2).all(|w| w[0] == w[1]));
        let dolly = PoseSE3::new([0.0; 3], [0.0, 0.0, -0.5]);
        let seq = make_sequence(&scene, &constant_motion(4, &dolly), &k(), grid()).unwrap();
        let means: Vec<f64> = seq.depths.iter().map(Tensor::mean).collect();
        assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
        assert_eq!(seq.relative.len(), 3);
        for r in &seq.relative {
            assert!((r.translation_vector() - dolly.translation_vector()).norm() < 1e-12);
        }
    }

    #[test]
    fn default_texture_is_well_below_band_limit() {
        let f = pixel_frequency(&fronto(3.0), &PoseSE3::identity(), &k(), PixelGrid::new(64, 64).unwrap()).unwrap();
        assert!(f <= 0.25, "{f}");
        assert!(f < 0.05, "{f}");
        assert!(max_texture_frequency(&fronto(3.0)).unwrap() <= 0.8);
    }

    #[test]
    fn invalid_scenes_rejected() {
        let mut s = fronto(3.0);
        s.texture.components = 9;
        assert!(s.validate().is_err());
        assert!(fronto(-1.0).validate().is_err());
        let two = Scene::new(
            SceneGeometry::TwoPlanes {
                background_depth: 2.0,
                foreground_depth: 3.0,
                foreground_extent: [0.0, 1.0, 0.0, 1.0],
            },
            TextureSpec::default(),
        );
        assert!(two.validate().is_err());
    }

    #[test]
    fn scene_serialization_round_trips() {
        let s = Scene {
            geometry: SceneGeometry::SlantedPlane {
                depth: 3.0,
                normal: [0.1, 0.2, 1.0],
            },
            texture: TextureSpec::default(),
            source_brightness: Some(BrightnessField {
                offset: 0.05,
                gradient: [0.02, 0.0],
            }),
        };
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<Scene>(&json).unwrap(), s);
        let bad = r#"{"geometry":{"kind":"fronto_plane","depth":2.0,"tilt":1.0}}"#;
        assert!(serde_json::from_str::<Scene>(bad).unwrap_err().to_string().contains("tilt"));
    }
}
