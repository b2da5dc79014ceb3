//! Spatio-temporal action proposals: per-frame human boxes are merged into
//! the smallest cube covering all of them, widened by a margin and used to
//! crop the video.

use crate::depthio::{DepthFrame, DepthVideo, SkeletonFrame};
use crate::error::{Error, Result};

/// Margin, in pixels, at the 320-pixel-wide native resolution.
pub const NATIVE_MARGIN: usize = 30;
pub const NATIVE_WIDTH: usize = 320;

/// Axis-aligned box in one frame; `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub frame_index: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Half-open in space, inclusive in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProposalCube {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub t0: usize,
    pub t1: usize,
}

impl ProposalCube {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn frames(&self) -> usize {
        self.t1 - self.t0 + 1
    }

    pub fn contains_box(&self, b: &BBox) -> bool {
        b.x >= self.x0
            && b.y >= self.y0
            && b.x + b.w <= self.x1
            && b.y + b.h <= self.y1
            && (self.t0..=self.t1).contains(&b.frame_index)
    }

    pub fn contains_cube(&self, other: &ProposalCube) -> bool {
        other.x0 >= self.x0
            && other.y0 >= self.y0
            && other.x1 <= self.x1
            && other.y1 <= self.y1
            && other.t0 >= self.t0
            && other.t1 <= self.t1
    }
}

/// Tight box around each frame's joints; frames without joints are skipped.
/// Joint coordinates are floored/ceiled to whole pixels and negative
/// coordinates clamp to 0. A degenerate extent becomes 1 pixel.
pub fn boxes_from_skeleton(frames: &[SkeletonFrame]) -> Vec<BBox> {
    frames
        .iter()
        .filter(|f| !f.joints.is_empty())
        .map(|f| {
            let (mut xmin, mut ymin) = (f64::INFINITY, f64::INFINITY);
            let (mut xmax, mut ymax) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &(x, y) in &f.joints {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
            let x0 = xmin.floor().max(0.0);
            let y0 = ymin.floor().max(0.0);
            BBox {
                frame_index: f.frame_index,
                x: x0 as usize,
                y: y0 as usize,
                w: ((xmax.ceil() - x0) as usize).max(1),
                h: ((ymax.ceil() - y0) as usize).max(1),
            }
        })
        .collect()
}

pub fn merge_boxes(boxes: &[BBox]) -> Result<ProposalCube> {
    let first = boxes
        .first()
        .ok_or_else(|| Error::Data("cannot merge an empty box list".into()))?;
    let mut cube = ProposalCube {
        x0: first.x,
        y0: first.y,
        x1: first.x + first.w,
        y1: first.y + first.h,
        t0: first.frame_index,
        t1: first.frame_index,
    };
    for b in &boxes[1..] {
        cube.x0 = cube.x0.min(b.x);
        cube.y0 = cube.y0.min(b.y);
        cube.x1 = cube.x1.max(b.x + b.w);
        cube.y1 = cube.y1.max(b.y + b.h);
        cube.t0 = cube.t0.min(b.frame_index);
        cube.t1 = cube.t1.max(b.frame_index);
    }
    Ok(cube)
}

/// Moves every spatial side outward by `margin`, then clips to the frame.
pub fn extend_cube(
    cube: ProposalCube,
    margin: usize,
    frame_w: usize,
    frame_h: usize,
) -> ProposalCube {
    ProposalCube {
        x0: cube.x0.saturating_sub(margin).min(frame_w),
        y0: cube.y0.saturating_sub(margin).min(frame_h),
        x1: (cube.x1 + margin).min(frame_w),
        y1: (cube.y1 + margin).min(frame_h),
        ..cube
    }
}

/// The native 30-pixel margin rescaled to `frame_w`.
pub fn scaled_margin(native_margin: usize, frame_w: usize) -> usize {
    (native_margin as f64 * frame_w as f64 / NATIVE_WIDTH as f64).round() as usize
}

/// Crops `video` to the cube after clipping it to the video bounds.
pub fn crop_video(video: &DepthVideo, cube: &ProposalCube) -> Result<DepthVideo> {
    let x1 = cube.x1.min(video.width());
    let y1 = cube.y1.min(video.height());
    let t1 = cube.t1.min(video.len().saturating_sub(1));
    if cube.x0 >= x1 || cube.y0 >= y1 || cube.t0 > t1 || cube.t0 >= video.len() {
        return Err(Error::Data(format!(
            "proposal cube {cube:?} does not intersect the {}x{}x{} video",
            video.width(),
            video.height(),
            video.len()
        )));
    }
    let (w, h) = (x1 - cube.x0, y1 - cube.y0);
    let frames = video.frames()[cube.t0..=t1]
        .iter()
        .map(|f| {
            let mut data = Vec::with_capacity(w * h);
            for y in cube.y0..y1 {
                let row = &f.data()[y * f.width()..(y + 1) * f.width()];
                data.extend_from_slice(&row[cube.x0..x1]);
            }
            DepthFrame::new(w, h, data)
        })
        .collect::<Result<Vec<_>>>()?;
    DepthVideo::new(frames)
}
