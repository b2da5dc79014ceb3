//! Virtual-viewpoint synthesis for depth video.
//!
//! Depth pixels are lifted to 3-D without camera intrinsics: the pixel
//! offset from the frame centre gives x and y, and the depth scaled by
//! `depth_scale` gives z. Points are rotated and re-imaged with a
//! nearest-surface z-buffer.

use crate::depthio::{DepthFrame, DepthVideo};
use crate::error::{Error, Result};

/// Virtual camera pose in degrees: `alpha` about the vertical axis, `beta`
/// about the horizontal axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl ViewSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let ok = |a: f64| a.is_finite() && (-180.0..=180.0).contains(&a);
        if !ok(alpha) || !ok(beta) {
            return Err(Error::InvalidArgument(format!(
                "view angles ({alpha}, {beta}) outside [-180, 180]"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub const fn raw() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
        }
    }

    pub fn is_raw(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0
    }
}

impl std::fmt::Display for ViewSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.alpha, self.beta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewGroup {
    pub group_id: usize,
    pub views: Vec<ViewSpec>,
}

/// The five yaw groups, all at zero pitch.
pub fn default_view_groups() -> Vec<ViewGroup> {
    const ALPHAS: [&[f64]; 5] = [
        &[-90.0, -40.0],
        &[-20.0, -10.0, -5.0],
        &[0.0],
        &[5.0, 10.0, 20.0],
        &[40.0, 90.0],
    ];
    ALPHAS
        .iter()
        .enumerate()
        .map(|(i, alphas)| ViewGroup {
            group_id: i + 1,
            views: alphas
                .iter()
                .map(|&a| ViewSpec {
                    alpha: a,
                    beta: 0.0,
                })
                .collect(),
        })
        .collect()
}

/// Row-major 3x3 rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub [[f64; 3]; 3]);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Rotation by `deg` about the vertical (y) axis.
    pub fn about_vertical(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    }

    /// Rotation by `deg` about the horizontal (x) axis.
    pub fn about_horizontal(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.0[i][0] * rhs.0[0][j]
                    + self.0[i][1] * rhs.0[1][j]
                    + self.0[i][2] * rhs.0[2][j];
            }
        }
        Self(out)
    }

    #[inline]
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
        ]
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Self([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// max |(RᵀR − I)ᵢⱼ|
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose().mul(self);
        let mut worst: f64 = 0.0;
        for (i, row) in p.0.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }
}

/// Yaw first, then pitch: `R = R_horizontal(beta) · R_vertical(alpha)`.
pub fn rotation_matrix(view: ViewSpec) -> RotationMatrix {
    RotationMatrix::about_horizontal(view.beta).mul(&RotationMatrix::about_vertical(view.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    /// Sensor depth units to pixel-commensurate length.
    pub depth_scale: f64,
    pub hole_fill_radius: usize,
    /// Output size; `None` keeps the input size.
    pub out_width: Option<usize>,
    pub out_height: Option<usize>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            depth_scale: 0.1,
            hole_fill_radius: 1,
            out_width: None,
            out_height: None,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_scale.is_finite() && self.depth_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "depth_scale {} must be finite and positive",
                self.depth_scale
            )));
        }
        if self.out_width == Some(0) || self.out_height == Some(0) {
            return Err(Error::InvalidArgument(
                "output size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Re-images one frame from `view`.
///
/// Collisions keep the nearest (smallest) depth. Output pixels left empty
/// are then filled, in a single pass over the pre-fill buffer, with the
/// lower median of their non-zero neighbours within `hole_fill_radius`,
/// provided those neighbours are a strict majority of the neighbourhood;
/// this closes resampling holes without growing silhouettes.
pub fn reproject_frame(
    frame: &DepthFrame,
    view: ViewSpec,
    cfg: &ProjectionConfig,
) -> Result<DepthFrame> {
    cfg.validate()?;
    let (w, h) = (frame.width(), frame.height());
    let ow = cfg.out_width.unwrap_or(w);
    let oh = cfg.out_height.unwrap_or(h);
    let rot = rotation_matrix(view);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (ocx, ocy) = ((ow as f64 - 1.0) / 2.0, (oh as f64 - 1.0) / 2.0);
    let scale = cfg.depth_scale;

    let mut out = DepthFrame::zeros(ow, oh);
    for y in 0..h {
        for x in 0..w {
            let d = frame.get(x, y);
            if d == 0 {
                continue;
            }
            let p = rot.apply([x as f64 - cx, y as f64 - cy, d as f64 * scale]);
            let px = (p[0] + ocx).round();
            let py = (p[1] + ocy).round();
            if !(px >= 0.0 && py >= 0.0 && px < ow as f64 && py < oh as f64) {
                continue;
            }
            let depth = (p[2] / scale).round().clamp(1.0, 65535.0) as u16;
            let (px, py) = (px as usize, py as usize);
            let cur = out.get(px, py);
            if cur == 0 || depth < cur {
                out.set(px, py, depth);
            }
        }
    }
    if cfg.hole_fill_radius > 0 {
        out = fill_holes(&out, cfg.hole_fill_radius);
    }
    Ok(out)
}

fn fill_holes(src: &DepthFrame, radius: usize) -> DepthFrame {
    let (w, h) = (src.width(), src.height());
    let r = radius as isize;
    let neighbourhood = ((2 * radius + 1) * (2 * radius + 1) - 1) as usize;
    let mut out = src.clone();
    let mut vals = Vec::with_capacity(neighbourhood);
    for y in 0..h as isize {
        for x in 0..w as isize {
            if src.get(x as usize, y as usize) != 0 {
                continue;
            }
            vals.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x + dx, y + dy);
                    if (dx, dy) == (0, 0)
                        || nx < 0
                        || ny < 0
                        || nx >= w as isize
                        || ny >= h as isize
                    {
                        continue;
                    }
                    let v = src.get(nx as usize, ny as usize);
                    if v != 0 {
                        vals.push(v);
                    }
                }
            }
            if 2 * vals.len() > neighbourhood {
                vals.sort_unstable();
                out.set(x as usize, y as usize, vals[(vals.len() - 1) / 2]);
            }
        }
    }
    out
}

/// One synthesized video per view, frame count preserved.
pub fn project_video(
    video: &DepthVideo,
    views: &[ViewSpec],
    cfg: &ProjectionConfig,
) -> Result<Vec<DepthVideo>> {
    if views.is_empty() {
        return Err(Error::InvalidArgument("no views to project".into()));
    }
    views
        .iter()
        .map(|&v| {
            let frames = video
                .frames()
                .iter()
                .map(|f| reproject_frame(f, v, cfg))
                .collect::<Result<Vec<_>>>()?;
            DepthVideo::new(frames)
        })
        .collect()
}
