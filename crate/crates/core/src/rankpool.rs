//! Rank pooling: a video is summarised by the weight vector `u` of a linear
//! scorer `S(t|u) = <u, V_t>` that orders the prefix means `V_t` by time.
//! Reshaping `u` to the frame grid gives a dynamic image.
//!
//! The exact variant minimises
//!
//! ```text
//! (λ/2)‖u‖² + 2/(T(T−2)) · Σ_{q>t} max(0, 1 − S(q|u) + S(t|u))
//! ```
//!
//! by deterministic full-batch subgradient descent. The approximate
//! variants are closed-form linear combinations of the frames.

use crate::depthio::DepthVideo;
use crate::error::{Error, Result};
use crate::viewsynth::{project_video, ProjectionConfig, ViewSpec};

/// Threshold for depth-motion maps, in sensor units.
pub const DEFAULT_DMM_EPSILON: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RankingVector {
    pub u: Vec<f64>,
    pub width: usize,
    pub height: usize,
}

impl RankingVector {
    pub fn new(u: Vec<f64>, width: usize, height: usize) -> Result<Self> {
        if u.len() != width * height {
            return Err(Error::shape(width * height, u.len()));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "ranking vector has non-finite entries".into(),
            ));
        }
        Ok(Self { u, width, height })
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// Raw dump: width and height as u64, then the entries, little-endian.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.u.len());
        out.extend_from_slice(&(self.width as u64).to_le_bytes());
        out.extend_from_slice(&(self.height as u64).to_le_bytes());
        for v in &self.u {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

/// `V_t = (1/t) Σ_{i≤t} I_i` over flattened frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixMeans {
    pub width: usize,
    pub height: usize,
    pub means: Vec<Vec<f64>>,
}

impl PrefixMeans {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolVariant {
    ExactRankSvm,
    ApproxPrefix,
    ApproxFrames,
}

impl PoolVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            PoolVariant::ExactRankSvm => "exact",
            PoolVariant::ApproxPrefix => "approx-prefix",
            PoolVariant::ApproxFrames => "approx-frames",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" | "exact_ranksvm" => Some(PoolVariant::ExactRankSvm),
            "approx-prefix" | "approx_prefix" => Some(PoolVariant::ApproxPrefix),
            "approx-frames" | "approx_frames" => Some(PoolVariant::ApproxFrames),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Base step; `None` means `1e-3 / d`. Step `k` uses `step / sqrt(k)`.
    pub step_size: Option<f64>,
    /// Carried for reproducibility records; the solver itself is
    /// deterministic full-batch and draws no random numbers.
    pub seed: u64,
    pub variant: PoolVariant,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            max_iters: 200,
            step_size: None,
            seed: 0,
            variant: PoolVariant::ExactRankSvm,
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda {} must be > 0",
                self.lambda
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if let Some(s) = self.step_size {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidArgument(format!("step_size {s} must be > 0")));
            }
        }
        Ok(())
    }
}

/// 8-bit dynamic image plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub view: ViewSpec,
    /// Index of the temporal segment, `None` for the whole video.
    pub segment: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSpec {
    pub num_segments: usize,
    pub overlap_ratio: f64,
}

impl Default for SegmentSpec {
    fn default() -> Self {
        Self {
            num_segments: 4,
            overlap_ratio: 0.5,
        }
    }
}

fn flatten(video: &DepthVideo) -> impl Iterator<Item = Vec<f64>> + '_ {
    video
        .frames()
        .iter()
        .map(|f| f.data().iter().map(|&v| v as f64).collect())
}

pub fn prefix_means(video: &DepthVideo) -> PrefixMeans {
    let d = video.width() * video.height();
    let mut sum = vec![0.0; d];
    let means = flatten(video)
        .enumerate()
        .map(|(i, frame)| {
            for (s, v) in sum.iter_mut().zip(&frame) {
                *s += v;
            }
            let inv = 1.0 / (i + 1) as f64;
            sum.iter().map(|s| s * inv).collect()
        })
        .collect();
    PrefixMeans {
        width: video.width(),
        height: video.height(),
        means,
    }
}

pub fn score(u: &RankingVector, v: &[f64]) -> Result<f64> {
    if u.u.len() != v.len() {
        return Err(Error::shape(u.u.len(), v.len()));
    }
    Ok(dot(&u.u, v))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Value of the pairwise RankSVM objective at `u`. Requires `T >= 3`.
pub fn rank_objective(means: &PrefixMeans, u: &[f64], lambda: f64) -> f64 {
    let t_len = means.len() as f64;
    let scores: Vec<f64> = means.means.iter().map(|v| dot(u, v)).collect();
    let pair_weight = 2.0 / (t_len * (t_len - 2.0));
    let mut hinge = 0.0;
    for q in 0..scores.len() {
        for t in 0..q {
            hinge += (1.0 - scores[q] + scores[t]).max(0.0);
        }
    }
    0.5 * lambda * dot(u, u) + pair_weight * hinge
}

/// Subgradient descent from `u = 0`. Returns the iterate with the lowest
/// objective seen, so the result never scores worse than the start point.
pub fn exact_rank_pool(means: &PrefixMeans, cfg: &PoolConfig) -> Result<RankingVector> {
    cfg.validate()?;
    let t_len = means.len();
    if t_len < 3 {
        return Err(Error::InvalidArgument(format!(
            "exact rank pooling needs at least 3 frames, got {t_len}"
        )));
    }
    let d = means.width * means.height;
    if means.means.iter().any(|v| v.len() != d) {
        return Err(Error::shape(d, "ragged prefix means"));
    }
    if means.means.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite prefix mean".into()));
    }
    let step = cfg.step_size.unwrap_or(1e-3 / d as f64);
    let pair_weight = 2.0 / (t_len as f64 * (t_len as f64 - 2.0));

    let mut u = vec![0.0; d];
    let mut best = u.clone();
    let mut best_obj = rank_objective(means, &u, cfg.lambda);
    let mut scores = vec![0.0; t_len];
    let mut coef = vec![0.0; t_len];
    let mut grad = vec![0.0; d];
    for k in 1..=cfg.max_iters {
        for (s, v) in scores.iter_mut().zip(&means.means) {
            *s = dot(&u, v);
        }
        // hinge subgradient: −w·(V_q − V_t) for every violated pair q > t
        coef.fill(0.0);
        for q in 0..t_len {
            for t in 0..q {
                if 1.0 - scores[q] + scores[t] > 0.0 {
                    coef[q] -= pair_weight;
                    coef[t] += pair_weight;
                }
            }
        }
        for (g, ui) in grad.iter_mut().zip(&u) {
            *g = cfg.lambda * ui;
        }
        for (c, v) in coef.iter().zip(&means.means) {
            if *c != 0.0 {
                for (g, vi) in grad.iter_mut().zip(v) {
                    *g += c * vi;
                }
            }
        }
        let eta = step / (k as f64).sqrt();
        for (ui, g) in u.iter_mut().zip(&grad) {
            *ui -= eta * g;
        }
        let obj = rank_objective(means, &u, cfg.lambda);
        if !obj.is_finite() {
            return Err(Error::Numeric(format!(
                "objective diverged at iteration {k}"
            )));
        }
        if obj < best_obj {
            best_obj = obj;
            best.copy_from_slice(&u);
        }
    }
    RankingVector::new(best, means.width, means.height)
}

/// `H_k = Σ_{i≤k} 1/i`, `H_0 = 0`.
fn harmonic(k: usize) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum()
}

/// Per-frame weights of the closed-form approximations (t is 1-based).
pub fn approx_coefficients(t_len: usize, variant: PoolVariant) -> Result<Vec<f64>> {
    let tf = t_len as f64;
    match variant {
        PoolVariant::ApproxFrames => Ok((1..=t_len).map(|t| 2.0 * t as f64 - tf - 1.0).collect()),
        PoolVariant::ApproxPrefix => {
            let h_t = harmonic(t_len);
            Ok((1..=t_len)
                .map(|t| 2.0 * (tf - t as f64 + 1.0) - (tf + 1.0) * (h_t - harmonic(t - 1)))
                .collect())
        }
        PoolVariant::ExactRankSvm => Err(Error::InvalidArgument(
            "exact variant has no closed-form coefficients".into(),
        )),
    }
}

pub fn approx_rank_pool(video: &DepthVideo, cfg: &PoolConfig) -> Result<RankingVector> {
    let coef = approx_coefficients(video.len(), cfg.variant)?;
    let d = video.width() * video.height();
    let frames = video.frames();
    let t_len = frames.len();
    let mut u = vec![0.0; d];
    // Pair frame t with frame T+1−t so that reversing the video negates
    // every term exactly (antisymmetric weights for the frame variant).
    for t in 0..t_len / 2 {
        let (a, b) = (&frames[t], &frames[t_len - 1 - t]);
        let (ca, cb) = (coef[t], coef[t_len - 1 - t]);
        if ca == -cb {
            for ((ui, &x), &y) in u.iter_mut().zip(a.data()).zip(b.data()) {
                *ui += ca * (x as f64 - y as f64);
            }
        } else {
            for ((ui, &x), &y) in u.iter_mut().zip(a.data()).zip(b.data()) {
                *ui += ca * x as f64 + cb * y as f64;
            }
        }
    }
    if t_len % 2 == 1 {
        let mid = t_len / 2;
        if coef[mid] != 0.0 {
            for (ui, &x) in u.iter_mut().zip(frames[mid].data()) {
                *ui += coef[mid] * x as f64;
            }
        }
    }
    RankingVector::new(u, video.width(), video.height())
}

/// Pools a video with whichever variant `cfg` selects.
pub fn rank_pool(video: &DepthVideo, cfg: &PoolConfig) -> Result<RankingVector> {
    match cfg.variant {
        PoolVariant::ExactRankSvm => exact_rank_pool(&prefix_means(video), cfg),
        _ => approx_rank_pool(video, cfg),
    }
}

fn normalize_to_u8(values: &[f64]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) {
        return vec![128; values.len()];
    }
    let span = hi - lo;
    values
        .iter()
        .map(|&v| ((v - lo) * 255.0 / span + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Min-max normalises `u` to 0..=255 (round half up); constant `u` → 128.
pub fn to_dynamic_image(u: &RankingVector) -> DynamicImage {
    DynamicImage {
        width: u.width,
        height: u.height,
        pixels: normalize_to_u8(&u.u),
        view: ViewSpec::raw(),
        segment: None,
    }
}

/// `(start, len)` of each segment, 0-based.
pub fn segment_bounds(t_len: usize, spec: &SegmentSpec) -> Result<Vec<(usize, usize)>> {
    let n = spec.num_segments;
    if n == 0 {
        return Err(Error::InvalidArgument("num_segments must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&spec.overlap_ratio) {
        return Err(Error::InvalidArgument(format!(
            "overlap_ratio {} outside [0, 1)",
            spec.overlap_ratio
        )));
    }
    if t_len < n {
        return Err(Error::InvalidArgument(format!(
            "{t_len} frames cannot form {n} segments"
        )));
    }
    let keep = 1.0 - spec.overlap_ratio;
    let len = ((t_len as f64 / (1.0 + (n - 1) as f64 * keep)).ceil() as usize).clamp(1, t_len);
    let stride = ((len as f64 * keep).round() as usize).max(1);
    let last = t_len - len;
    Ok((0..n)
        .map(|k| {
            let start = if k + 1 == n {
                last
            } else {
                (k * stride).min(last)
            };
            (start, len)
        })
        .collect())
}

pub fn temporal_segments(video: &DepthVideo, spec: &SegmentSpec) -> Result<Vec<DepthVideo>> {
    segment_bounds(video.len(), spec)?
        .into_iter()
        .map(|(s, l)| video.slice(s, l))
        .collect()
}

/// Whole-video image followed by one image per temporal segment.
pub fn dynamic_images(
    video: &DepthVideo,
    cfg: &PoolConfig,
    spec: &SegmentSpec,
) -> Result<Vec<DynamicImage>> {
    let mut out = vec![to_dynamic_image(&rank_pool(video, cfg)?)];
    for (i, seg) in temporal_segments(video, spec)?.iter().enumerate() {
        let mut di = to_dynamic_image(&rank_pool(seg, cfg)?);
        di.segment = Some(i);
        out.push(di);
    }
    Ok(out)
}

/// Multi-view dynamic images: for each view, the projected video's
/// whole-video image and its segment images.
pub fn extract_mvdi(
    video: &DepthVideo,
    views: &[ViewSpec],
    cfg: &PoolConfig,
    spec: &SegmentSpec,
    pcfg: &ProjectionConfig,
) -> Result<Vec<(ViewSpec, Vec<DynamicImage>)>> {
    let projected = project_video(video, views, pcfg)?;
    views
        .iter()
        .zip(&projected)
        .map(|(&v, pv)| {
            let mut dis = dynamic_images(pv, cfg, spec)?;
            dis.iter_mut().for_each(|d| d.view = v);
            Ok((v, dis))
        })
        .collect()
}

/// Per-pixel count of frame-to-frame changes larger than `epsilon`.
pub fn dmm_counts(video: &DepthVideo, epsilon: f64) -> Result<Vec<u32>> {
    if video.len() < 2 {
        return Err(Error::InvalidArgument(
            "a motion map needs at least 2 frames".into(),
        ));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} must be >= 0"
        )));
    }
    let mut counts = vec![0u32; video.width() * video.height()];
    for pair in video.frames().windows(2) {
        for ((c, &a), &b) in counts.iter_mut().zip(pair[0].data()).zip(pair[1].data()) {
            if (b as f64 - a as f64).abs() > epsilon {
                *c += 1;
            }
        }
    }
    Ok(counts)
}

pub fn compute_dmm(video: &DepthVideo, epsilon: f64) -> Result<DynamicImage> {
    let counts: Vec<f64> = dmm_counts(video, epsilon)?
        .into_iter()
        .map(f64::from)
        .collect();
    Ok(DynamicImage {
        width: video.width(),
        height: video.height(),
        pixels: normalize_to_u8(&counts),
        view: ViewSpec::raw(),
        segment: None,
    })
}

/// Whole-video motion map followed by one per temporal segment.
pub fn dmm_images(
    video: &DepthVideo,
    epsilon: f64,
    spec: &SegmentSpec,
) -> Result<Vec<DynamicImage>> {
    let mut out = vec![compute_dmm(video, epsilon)?];
    for (i, seg) in temporal_segments(video, spec)?.iter().enumerate() {
        let mut m = compute_dmm(seg, epsilon)?;
        m.segment = Some(i);
        out.push(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depthio::DepthFrame;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn video_from(frames: Vec<Vec<u16>>, w: usize, h: usize) -> DepthVideo {
        DepthVideo::new(
            frames
                .into_iter()
                .map(|d| DepthFrame::new(w, h, d).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn random_video(rng: &mut ChaCha8Rng, w: usize, h: usize, t: usize, max: u16) -> DepthVideo {
        video_from(
            (0..t)
                .map(|_| (0..w * h).map(|_| rng.random_range(0..=max)).collect())
                .collect(),
            w,
            h,
        )
    }

    #[test]
    fn prefix_means_examples() {
        let v = video_from(vec![vec![7; 4]; 3], 2, 2);
        assert!(prefix_means(&v).means.iter().all(|m| m == &vec![7.0; 4]));
        let v = video_from(vec![vec![0; 4], vec![2; 4]], 2, 2);
        assert_eq!(prefix_means(&v).means, vec![vec![0.0; 4], vec![1.0; 4]]);
    }

    #[test]
    fn prefix_means_match_resummation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_video(&mut rng, 3, 4, 5, 1000);
        let pm = prefix_means(&v);
        for t in 1..=5 {
            for i in 0..12 {
                let naive: f64 =
                    (0..t).map(|k| v.frames()[k].data()[i] as f64).sum::<f64>() / t as f64;
                assert!((pm.means[t - 1][i] - naive).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn score_examples() {
        let zero = RankingVector::new(vec![0.0; 3], 3, 1).unwrap();
        assert_eq!(score(&zero, &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let e1 = RankingVector::new(vec![0.0, 1.0, 0.0], 3, 1).unwrap();
        assert_eq!(score(&e1, &[4.0, 5.0, 6.0]).unwrap(), 5.0);
        assert!(score(&e1, &[1.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut oracle = 0.0;
        for i in 0..10 {
            oracle += u[i] * v[i];
        }
        let rv = RankingVector::new(u, 10, 1).unwrap();
        assert!((score(&rv, &v).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn exact_on_constant_video_is_zero() {
        let v = video_from(vec![vec![40; 6]; 5], 3, 2);
        let u = exact_rank_pool(&prefix_means(&v), &PoolConfig::default()).unwrap();
        assert!(u.u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn exact_rejects_short_videos() {
        let v = video_from(vec![vec![1; 4], vec![2; 4]], 2, 2);
        assert!(exact_rank_pool(&prefix_means(&v), &PoolConfig::default()).is_err());
    }

    #[test]
    fn exact_orders_a_ramp() {
        let t_len = 8;
        let v = video_from((1..=t_len).map(|t| vec![t as u16; 9]).collect(), 3, 3);
        let pm = prefix_means(&v);
        let u = exact_rank_pool(&pm, &PoolConfig::default()).unwrap();
        let s: Vec<f64> = pm.means.iter().map(|m| score(&u, m).unwrap()).collect();
        let mut correct = 0;
        let mut total = 0;
        for q in 0..t_len {
            for t in 0..q {
                total += 1;
                if s[q] > s[t] {
                    correct += 1;
                }
            }
        }
        assert_eq!(total, 28);
        assert!(correct as f64 >= 0.95 * 28.0, "{correct}/28");
    }

    #[test]
    fn exact_matches_scalar_grid_search() {
        let pm = PrefixMeans {
            width: 1,
            height: 1,
            means: vec![vec![1.0], vec![2.0], vec![3.0]],
        };
        let cfg = PoolConfig {
            step_size: Some(1.0),
            max_iters: 1_000_000,
            ..PoolConfig::default()
        };
        let u = exact_rank_pool(&pm, &cfg).unwrap().u[0];
        // grid search on the 1-D objective, coarse then fine
        let f = |x: f64| rank_objective(&pm, &[x], 1.0);
        let mut best = 0.0;
        for i in -40_000..=40_000 {
            let x = i as f64 * 1e-4;
            if f(x) < f(best) {
                best = x;
            }
        }
        assert!((u - best).abs() < 1e-3, "solver {u} vs grid {best}");
    }

    #[test]
    fn approx_coefficients_examples() {
        assert_eq!(
            approx_coefficients(3, PoolVariant::ApproxFrames).unwrap(),
            vec![-2.0, 0.0, 2.0]
        );
        assert_eq!(
            approx_coefficients(1, PoolVariant::ApproxFrames).unwrap(),
            vec![0.0]
        );
        assert_eq!(
            approx_coefficients(1, PoolVariant::ApproxPrefix).unwrap(),
            vec![0.0]
        );
        // T=2: 2·2 − 3·(1 + 1/2) and 2·1 − 3·(1/2)
        assert_eq!(
            approx_coefficients(2, PoolVariant::ApproxPrefix).unwrap(),
            vec![-0.5, 0.5]
        );
        let c = approx_coefficients(10, PoolVariant::ApproxPrefix).unwrap();
        assert!(c.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn approx_sign_agrees_with_exact_on_ramp() {
        let v = video_from(vec![vec![1], vec![2], vec![3]], 1, 1);
        let exact = exact_rank_pool(&prefix_means(&v), &PoolConfig::default()).unwrap();
        for variant in [PoolVariant::ApproxFrames, PoolVariant::ApproxPrefix] {
            let a = approx_rank_pool(
                &v,
                &PoolConfig {
                    variant,
                    ..PoolConfig::default()
                },
            )
            .unwrap();
            assert!(a.u[0] > 0.0 && exact.u[0] > 0.0);
        }
    }

    #[test]
    fn single_frame_pools_to_zero() {
        let v = video_from(vec![vec![9; 4]], 2, 2);
        for variant in [PoolVariant::ApproxFrames, PoolVariant::ApproxPrefix] {
            let u = approx_rank_pool(
                &v,
                &PoolConfig {
                    variant,
                    ..PoolConfig::default()
                },
            )
            .unwrap();
            assert!(u.u.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn dynamic_image_normalisation() {
        let img = to_dynamic_image(&RankingVector::new(vec![0.0; 4], 2, 2).unwrap());
        assert_eq!(img.pixels, vec![128; 4]);
        let img = to_dynamic_image(&RankingVector::new(vec![-1.0, 0.0, 1.0], 3, 1).unwrap());
        assert_eq!(img.pixels, vec![0, 128, 255]);
    }

    #[test]
    fn dynamic_image_matches_affine_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..64).map(|_| rng.random_range(-50.0..50.0)).collect();
        let lo = u.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let img = to_dynamic_image(&RankingVector::new(u.clone(), 8, 8).unwrap());
        for (p, x) in img.pixels.iter().zip(&u) {
            let expected = (255.0 * (x - lo) / (hi - lo) + 0.5).floor() as u8;
            assert_eq!(*p, expected);
        }
    }

    #[test]
    fn segment_examples() {
        let spec = SegmentSpec::default();
        assert_eq!(
            segment_bounds(100, &spec).unwrap(),
            vec![(0, 40), (20, 40), (40, 40), (60, 40)]
        );
        assert_eq!(
            segment_bounds(8, &spec).unwrap(),
            vec![(0, 4), (2, 4), (4, 4), (4, 4)]
        );
        let one = SegmentSpec {
            num_segments: 1,
            overlap_ratio: 0.5,
        };
        assert_eq!(segment_bounds(13, &one).unwrap(), vec![(0, 13)]);
        assert!(segment_bounds(3, &spec).is_err());
    }

    #[test]
    fn dmm_examples() {
        let v = video_from(vec![vec![100; 4]; 4], 2, 2);
        assert_eq!(compute_dmm(&v, 10.0).unwrap().pixels, vec![128; 4]);
        let v = video_from(vec![vec![100; 4], vec![100, 120, 100, 100]], 2, 2);
        assert_eq!(dmm_counts(&v, 10.0).unwrap(), vec![0, 1, 0, 0]);
        assert!(compute_dmm(&video_from(vec![vec![1; 4]], 2, 2), 1.0).is_err());
    }

    #[test]
    fn mvdi_counts_and_degenerate_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_video(&mut rng, 6, 6, 8, 300);
        let views: Vec<ViewSpec> = crate::viewsynth::default_view_groups()
            .into_iter()
            .flat_map(|g| g.views)
            .collect();
        let cfg = PoolConfig {
            variant: PoolVariant::ApproxPrefix,
            ..PoolConfig::default()
        };
        let all = extract_mvdi(
            &v,
            &views,
            &cfg,
            &SegmentSpec::default(),
            &ProjectionConfig::default(),
        )
        .unwrap();
        assert_eq!(all.iter().map(|(_, d)| d.len()).sum::<usize>(), 55);

        let raw_cfg = ProjectionConfig {
            hole_fill_radius: 0,
            ..ProjectionConfig::default()
        };
        let one = SegmentSpec {
            num_segments: 1,
            overlap_ratio: 0.5,
        };
        let single = extract_mvdi(&v, &[ViewSpec::raw()], &cfg, &one, &raw_cfg).unwrap();
        let plain = to_dynamic_image(&rank_pool(&v, &cfg).unwrap());
        assert_eq!(single[0].1[0], plain);
        assert_eq!(single[0].1[1].pixels, plain.pixels);
        let again = extract_mvdi(&v, &[ViewSpec::raw()], &cfg, &one, &raw_cfg).unwrap();
        assert_eq!(single, again);
    }

    proptest! {
        #[test]
        fn segments_cover_every_frame(t in 1usize..200, n in 1usize..8, overlap in 0.0f64..0.95) {
            prop_assume!(t >= n);
            let b = segment_bounds(t, &SegmentSpec { num_segments: n, overlap_ratio: overlap }).unwrap();
            prop_assert_eq!(b.len(), n);
            let mut covered = vec![false; t];
            for (s, l) in &b {
                prop_assert!(s + l <= t);
                covered[*s..s + l].iter_mut().for_each(|c| *c = true);
            }
            prop_assert!(covered.iter().all(|&c| c));
            prop_assert_eq!(b[n - 1].0 + b[n - 1].1, t);
        }

        #[test]
        fn dynamic_image_range(u in prop::collection::vec(-1e6f64..1e6, 1..50)) {
            let n = u.len();
            let img = to_dynamic_image(&RankingVector::new(u, n, 1).unwrap());
            let lo = *img.pixels.iter().min().unwrap();
            let hi = *img.pixels.iter().max().unwrap();
            prop_assert!(lo == 0 || lo == 128);
            prop_assert!(hi == 255 || hi == 128);
        }

        #[test]
        fn exact_never_worse_than_origin(seed in any::<u64>(), t in 3usize..9, d in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_video(&mut rng, d, 1, t, 500);
            let pm = prefix_means(&v);
            let cfg = PoolConfig::default();
            let u = exact_rank_pool(&pm, &cfg).unwrap();
            prop_assert!(rank_objective(&pm, &u.u, cfg.lambda) <= rank_objective(&pm, &vec![0.0; d], cfg.lambda));
        }

        #[test]
        fn dmm_is_order_blind(seed in any::<u64>(), t in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_video(&mut rng, 4, 3, t, 200);
            prop_assert_eq!(compute_dmm(&v, 20.0).unwrap(), compute_dmm(&v.reversed(), 20.0).unwrap());
        }
    }
}
