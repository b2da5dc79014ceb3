//! Per-frame box and skeleton sidecar files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proposal::BBox;

#[derive(Debug, Serialize, Deserialize)]
struct BoxRow {
    frame_index: usize,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct JointRow {
    frame_index: usize,
    joint_index: usize,
    x: f64,
    y: f64,
}

/// Key points of one frame, ordered by joint index.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonFrame {
    pub frame_index: usize,
    pub joints: Vec<(f64, f64)>,
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_boxes(path: &Path) -> Result<Vec<BBox>> {
    let mut out = Vec::new();
    for row in reader(path)?.deserialize::<BoxRow>() {
        let r = row.map_err(|e| Error::format(path, e.to_string()))?;
        if r.w == 0 || r.h == 0 {
            return Err(Error::format(
                path,
                format!("frame {} has an empty box", r.frame_index),
            ));
        }
        out.push(BBox {
            frame_index: r.frame_index,
            x: r.x,
            y: r.y,
            w: r.w,
            h: r.h,
        });
    }
    Ok(out)
}

pub fn write_boxes(path: &Path, boxes: &[BBox]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for b in boxes {
        w.serialize(BoxRow {
            frame_index: b.frame_index,
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        })
        .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_skeleton(path: &Path) -> Result<Vec<SkeletonFrame>> {
    let mut frames: BTreeMap<usize, BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
    for row in reader(path)?.deserialize::<JointRow>() {
        let r = row.map_err(|e| Error::format(path, e.to_string()))?;
        if !(r.x.is_finite() && r.y.is_finite()) {
            return Err(Error::format(path, "non-finite joint coordinate"));
        }
        frames
            .entry(r.frame_index)
            .or_default()
            .insert(r.joint_index, (r.x, r.y));
    }
    Ok(frames
        .into_iter()
        .map(|(frame_index, joints)| SkeletonFrame {
            frame_index,
            joints: joints.into_values().collect(),
        })
        .collect())
}

pub fn write_skeleton(path: &Path, frames: &[SkeletonFrame]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for f in frames {
        for (j, &(x, y)) in f.joints.iter().enumerate() {
            w.serialize(JointRow {
                frame_index: f.frame_index,
                joint_index: j,
                x,
                y,
            })
            .map_err(|e| Error::format(path, e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
