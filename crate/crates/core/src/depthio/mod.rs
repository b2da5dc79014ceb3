//! Depth video containers, on-disk formats, dataset manifests and splits.

mod manifest;
mod pgm;
mod sidecar;
mod split;
mod synth;

pub use manifest::{load_manifest, write_manifest, DatasetManifest, SampleRecord};
pub use pgm::{decode_pgm, encode_pgm16, encode_pgm8, read_pgm16, write_pgm8, Graymap};
pub use sidecar::{load_boxes, load_skeleton, write_boxes, write_skeleton, SkeletonFrame};
pub use split::{make_split, Split, SplitMode, SplitSpec};
pub use synth::{render_sample, synth_dataset, MotionClass, RenderedSample, SynthConfig};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One depth frame, row-major, 0 meaning "no reading".
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DepthFrame {
    width: usize,
    height: usize,
    depth: Vec<u16>,
}

impl DepthFrame {
    pub fn new(width: usize, height: usize, depth: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Data(format!("frame size {width}x{height} is empty")));
        }
        if depth.len() != width * height {
            return Err(Error::shape(width * height, depth.len()));
        }
        Ok(Self {
            width,
            height,
            depth,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        Self {
            width,
            height,
            depth: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u16] {
        &self.depth
    }

    pub fn data_mut(&mut self) -> &mut [u16] {
        &mut self.depth
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.depth[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u16) {
        self.depth[y * self.width + x] = v;
    }
}

/// Ordered, dimension-consistent sequence of depth frames (T >= 1).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DepthVideo {
    frames: Vec<DepthFrame>,
}

impl DepthVideo {
    pub fn new(frames: Vec<DepthFrame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Data("video has no frames".into()))?;
        let (w, h) = (first.width, first.height);
        for (i, f) in frames.iter().enumerate() {
            if f.width != w || f.height != h {
                return Err(Error::Data(format!(
                    "frame {i} is {}x{}, expected {w}x{h}",
                    f.width, f.height
                )));
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[DepthFrame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<DepthFrame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Always false: a video holds at least one frame.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn reversed(&self) -> Self {
        let mut frames = self.frames.clone();
        frames.reverse();
        Self { frames }
    }

    /// Frames `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames.len() {
            return Err(Error::InvalidArgument(format!(
                "frame range {start}..{} outside 0..{}",
                start + len,
                self.frames.len()
            )));
        }
        Ok(Self {
            frames: self.frames[start..start + len].to_vec(),
        })
    }
}

fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

/// Reads every `*.pgm` in `path` in lexicographic order.
pub fn load_video(path: &Path) -> Result<DepthVideo> {
    let entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "pgm") {
            files.push(p);
        }
    }
    if files.is_empty() {
        return Err(Error::Data(format!(
            "video directory {} contains no frames",
            path.display()
        )));
    }
    files.sort();
    let frames = files
        .iter()
        .map(|f| read_pgm16(f))
        .collect::<Result<Vec<_>>>()?;
    DepthVideo::new(frames).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes `frame_%06d.pgm` files, replacing any frames already present.
pub fn save_video(video: &DepthVideo, path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        let stale = p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".pgm"));
        if stale {
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    for (i, frame) in video.frames().iter().enumerate() {
        let p = path.join(frame_file_name(i));
        fs::write(&p, encode_pgm16(frame)).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(w: usize, h: usize, fill: u16) -> DepthFrame {
        DepthFrame::new(w, h, vec![fill; w * h]).unwrap()
    }

    #[test]
    fn frame_rejects_bad_length() {
        assert!(DepthFrame::new(2, 2, vec![0; 3]).is_err());
        assert!(DepthFrame::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn three_frame_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = DepthVideo::new(vec![frame(4, 4, 1), frame(4, 4, 2), frame(4, 4, 3)]).unwrap();
        save_video(&v, dir.path()).unwrap();
        let back = load_video(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!((back.width(), back.height()), (4, 4));
        assert_eq!(back, v);
    }

    #[test]
    fn mixed_sizes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("frame_000000.pgm"),
            encode_pgm16(&frame(4, 4, 0)),
        )
        .unwrap();
        fs::write(
            dir.path().join("frame_000001.pgm"),
            encode_pgm16(&frame(5, 4, 0)),
        )
        .unwrap();
        let err = load_video(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn empty_directory_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_video(dir.path()), Err(Error::Data(_))));
        assert!(matches!(
            load_video(&dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn zero_and_max_values_survive() {
        let dir = tempfile::tempdir().unwrap();
        let v = DepthVideo::new(vec![frame(3, 2, 0), frame(3, 2, 65535)]).unwrap();
        save_video(&v, dir.path()).unwrap();
        assert_eq!(load_video(dir.path()).unwrap(), v);
    }

    #[test]
    fn save_replaces_stale_frames() {
        let dir = tempfile::tempdir().unwrap();
        let long = DepthVideo::new(vec![frame(2, 2, 1); 4]).unwrap();
        let short = DepthVideo::new(vec![frame(2, 2, 9); 2]).unwrap();
        save_video(&long, dir.path()).unwrap();
        save_video(&short, dir.path()).unwrap();
        assert_eq!(load_video(dir.path()).unwrap(), short);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn codec_round_trip(w in 1usize..9, h in 1usize..9, t in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let frames = (0..t)
                .map(|_| DepthFrame::new(w, h, (0..w * h).map(|_| rng.random()).collect()).unwrap())
                .collect();
            let v = DepthVideo::new(frames).unwrap();
            let dir = tempfile::tempdir().unwrap();
            save_video(&v, dir.path()).unwrap();
            prop_assert_eq!(load_video(dir.path()).unwrap(), v);
        }
    }
}
