//! Per-group feature concatenation, PCA, one-vs-rest linear SVM with
//! cross-validated `C`, and softmax-sum score fusion.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blockio::BlockFile;
use crate::error::{Error, Result};
use crate::minicnn::{argmax, softmax};

/// Covariance dimension above which PCA switches to the n×n Gram matrix.
pub const GRAM_THRESHOLD: usize = 2048;
pub const PCA_MAX_DIM: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub sample_id: String,
    pub label: usize,
}

/// Concatenates per-group vectors in ascending group order. Every id in
/// `expected` must be present.
pub fn concat_group_features(
    per_group: impl IntoIterator<Item = (usize, Vec<f64>)>,
    expected: &[usize],
) -> Result<Vec<f64>> {
    let map: BTreeMap<usize, Vec<f64>> = per_group.into_iter().collect();
    let mut ids = expected.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut out = Vec::new();
    for g in ids {
        let v = map
            .get(&g)
            .ok_or_else(|| Error::Data(format!("missing features for group {g}")))?;
        out.extend_from_slice(v);
    }
    Ok(out)
}

pub fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k × d`, orthonormal rows, descending eigenvalue order.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Divide each projection by the square root of its eigenvalue.
    pub whiten: bool,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn default_pca_dim(n: usize, d: usize) -> usize {
    PCA_MAX_DIM.min(n.saturating_sub(1)).min(d)
}

fn check_matrix(x: &[Vec<f64>]) -> Result<usize> {
    let d = x
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Data("empty feature matrix".into()))?;
    if d == 0 {
        return Err(Error::Data("zero-dimensional features".into()));
    }
    for row in x {
        if row.len() != d {
            return Err(Error::shape(d, row.len()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite feature value".into()));
        }
    }
    Ok(d)
}

fn fix_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

pub fn pca_fit(x: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    pca_fit_with(x, k, false)
}

pub fn pca_fit_with(x: &[Vec<f64>], k: usize, whiten: bool) -> Result<PcaModel> {
    let d = check_matrix(x)?;
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "PCA needs at least 2 samples".into(),
        ));
    }
    if k == 0 || k > d.min(n - 1) {
        return Err(Error::InvalidArgument(format!(
            "PCA dimension {k} outside 1..={} for {n} samples of dimension {d}",
            d.min(n - 1)
        )));
    }
    let mut mean = vec![0.0; d];
    for row in x {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let xc = DMatrix::from_fn(n, d, |i, j| x[i][j] - mean[j]);
    let denom = (n - 1) as f64;

    let (values, mut vectors): (Vec<f64>, Vec<Vec<f64>>) = if d <= GRAM_THRESHOLD {
        let cov = (xc.transpose() * &xc) / denom;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        order
            .into_iter()
            .take(k)
            .map(|i| {
                (
                    eig.eigenvalues[i],
                    eig.eigenvectors.column(i).iter().copied().collect(),
                )
            })
            .unzip()
    } else {
        let gram = (&xc * xc.transpose()) / denom;
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut vals = Vec::with_capacity(k);
        let mut vecs = Vec::with_capacity(k);
        for i in order.into_iter().take(k) {
            let c = xc.transpose() * eig.eigenvectors.column(i);
            let norm = c.norm();
            if norm < 1e-12 {
                return Err(Error::Numeric(format!(
                    "PCA component {} has zero variance",
                    vals.len()
                )));
            }
            vals.push(eig.eigenvalues[i]);
            vecs.push(c.iter().map(|v| v / norm).collect());
        }
        (vals, vecs)
    };
    if !(values[0] > 1e-12) {
        return Err(Error::Data("PCA input has no variance".into()));
    }
    vectors.iter_mut().for_each(|v| fix_sign(v));
    Ok(PcaModel {
        mean,
        components: vectors,
        eigenvalues: values.into_iter().map(|v| v.max(0.0)).collect(),
        whiten,
    })
}

pub fn pca_transform(model: &PcaModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.mean.len() {
        return Err(Error::shape(model.mean.len(), x.len()));
    }
    Ok(model
        .components
        .iter()
        .zip(&model.eigenvalues)
        .map(|(c, &ev)| {
            let p: f64 = c
                .iter()
                .zip(x.iter().zip(&model.mean))
                .map(|(ci, (xi, mi))| ci * (xi - mi))
                .sum();
            if model.whiten && ev > 0.0 {
                p / ev.sqrt()
            } else {
                p
            }
        })
        .collect())
}

/// Maps a projection back to input space (ignores whitening).
pub fn pca_reconstruct(model: &PcaModel, z: &[f64]) -> Vec<f64> {
    let mut out = model.mean.clone();
    for (c, &zi) in model.components.iter().zip(z) {
        out.iter_mut().zip(c).for_each(|(o, ci)| *o += zi * ci);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    /// Stop once the primal-dual gap falls below this.
    pub tol: f64,
    pub max_epochs: usize,
    /// Seeds the coordinate visiting order.
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_epochs: 2000,
            seed: 0,
        }
    }
}

/// One-vs-rest linear classifiers `w_c · x + b_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub c: f64,
}

impl SvmModel {
    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }
}

/// Binary problem `min ½‖w̃‖² + (C/n) Σ hinge(y_i w̃·x̃_i)` with `x̃ = (x, 1)`,
/// solved by dual coordinate descent. Returns `(w, b, final gap)`.
fn train_binary(x: &[Vec<f64>], y: &[f64], params: &SvmParams) -> (Vec<f64>, f64, f64) {
    let n = x.len();
    let d = x[0].len();
    let upper = params.c / n as f64;
    let qii: Vec<f64> = x
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let margin =
        |w: &[f64], i: usize| -> f64 { x[i].iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[d] };
    let mut gap = f64::INFINITY;
    for _ in 0..params.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let g = y[i] * margin(&w, i) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= upper {
                g.max(0.0)
            } else {
                g
            };
            if pg == 0.0 {
                continue;
            }
            let new = (alpha[i] - g / qii[i]).clamp(0.0, upper);
            let delta = (new - alpha[i]) * y[i];
            if delta != 0.0 {
                w.iter_mut()
                    .zip(&x[i])
                    .for_each(|(wj, xj)| *wj += delta * xj);
                w[d] += delta;
                alpha[i] = new;
            }
        }
        let wsq: f64 = w.iter().map(|v| v * v).sum();
        let hinge: f64 = (0..n).map(|i| (1.0 - y[i] * margin(&w, i)).max(0.0)).sum();
        let primal = 0.5 * wsq + upper * hinge;
        let dual = alpha.iter().sum::<f64>() - 0.5 * wsq;
        gap = primal - dual;
        if gap < params.tol {
            break;
        }
    }
    let b = w.pop().unwrap_or(0.0);
    (w, b, gap)
}

/// Trains one-vs-rest over `max(label) + 1` classes.
pub fn svm_train(x: &[Vec<f64>], y: &[usize], params: &SvmParams) -> Result<SvmModel> {
    let k = y.iter().max().map_or(0, |m| m + 1);
    svm_train_k(x, y, k, params)
}

pub fn svm_train_k(
    x: &[Vec<f64>],
    y: &[usize],
    num_classes: usize,
    params: &SvmParams,
) -> Result<SvmModel> {
    check_matrix(x)?;
    if x.len() != y.len() {
        return Err(Error::shape(x.len(), y.len()));
    }
    if !(params.c.is_finite() && params.c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "C {} must be > 0",
            params.c
        )));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Data(format!(
            "label {bad} out of range 0..{num_classes}"
        )));
    }
    let mut present = y.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 || num_classes < 2 {
        return Err(Error::Data("SVM training needs at least 2 classes".into()));
    }
    let mut weights = Vec::with_capacity(num_classes);
    let mut biases = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let yc: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        let sub = SvmParams {
            seed: params.seed.wrapping_add(c as u64),
            ..*params
        };
        let (w, b, _) = train_binary(x, &yc, &sub);
        weights.push(w);
        biases.push(b);
    }
    Ok(SvmModel {
        weights,
        biases,
        c: params.c,
    })
}

/// `(argmax class, per-class scores)`, ties to the lowest index.
pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<(usize, Vec<f64>)> {
    if x.len() != model.dim() {
        return Err(Error::shape(model.dim(), x.len()));
    }
    let scores: Vec<f64> = model
        .weights
        .iter()
        .zip(&model.biases)
        .map(|(w, b)| w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b)
        .collect();
    Ok((argmax(&scores), scores))
}

/// `C ∈ {2^-5, 2^-3, …, 2^5}`.
pub fn default_c_grid() -> Vec<f64> {
    (-5..=5).step_by(2).map(|e| 2f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best_c: f64,
    /// Grid in ascending order with the mean validation accuracy of each C.
    pub mean_scores: Vec<(f64, f64)>,
    /// `fold_scores[i][f]`: accuracy of grid entry `i` on fold `f`.
    pub fold_scores: Vec<Vec<f64>>,
    /// False when some class had fewer samples than folds and the split
    /// fell back to plain shuffled folds.
    pub stratified: bool,
}

/// Fold index per sample.
pub fn assign_folds(y: &[usize], folds: usize, seed: u64) -> (Vec<usize>, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in y.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let stratified = by_class.values().all(|v| v.len() >= folds);
    let mut fold = vec![0; y.len()];
    if stratified {
        let mut next = 0;
        for idx in by_class.values_mut() {
            idx.shuffle(&mut rng);
            for &i in idx.iter() {
                fold[i] = next % folds;
                next += 1;
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..y.len()).collect();
        idx.shuffle(&mut rng);
        for (p, &i) in idx.iter().enumerate() {
            fold[i] = p % folds;
        }
    }
    (fold, stratified)
}

/// k-fold cross-validation over `grid`; the highest mean accuracy wins and
/// ties go to the smaller C.
pub fn svm_cv_select(
    x: &[Vec<f64>],
    y: &[usize],
    grid: &[f64],
    folds: usize,
    params: &SvmParams,
) -> Result<CvResult> {
    check_matrix(x)?;
    if folds < 2 || x.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "{folds} folds over {} samples",
            x.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty C grid".into()));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let num_classes = y.iter().max().map_or(0, |m| m + 1);
    let (fold_of, stratified) = assign_folds(y, folds, params.seed);
    let mut fold_scores = vec![Vec::with_capacity(folds); grid.len()];
    for f in 0..folds {
        let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..x.len() {
            if fold_of[i] == f {
                vx.push(x[i].clone());
                vy.push(y[i]);
            } else {
                tx.push(x[i].clone());
                ty.push(y[i]);
            }
        }
        for (gi, &c) in grid.iter().enumerate() {
            let model = svm_train_k(&tx, &ty, num_classes, &SvmParams { c, ..*params })?;
            let hits = vx
                .iter()
                .zip(&vy)
                .filter(|(v, &l)| svm_predict(&model, v).map(|p| p.0 == l).unwrap_or(false))
                .count();
            fold_scores[gi].push(hits as f64 / vx.len().max(1) as f64);
        }
    }
    let mean_scores: Vec<(f64, f64)> = grid
        .iter()
        .zip(&fold_scores)
        .map(|(&c, s)| (c, s.iter().sum::<f64>() / s.len() as f64))
        .collect();
    let mut best = 0;
    for (i, &(_, s)) in mean_scores.iter().enumerate() {
        if s > mean_scores[best].1 {
            best = i;
        }
    }
    Ok(CvResult {
        best_c: mean_scores[best].0,
        mean_scores,
        fold_scores,
        stratified,
    })
}

/// Sums the per-group softmax distributions; `(argmax class, fused scores)`.
pub fn softmax_sum_fusion(per_group: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
    let first = per_group
        .first()
        .ok_or_else(|| Error::Data("no group logits to fuse".into()))?;
    let mut fused = vec![0.0; first.len()];
    for logits in per_group {
        if logits.len() != fused.len() {
            return Err(Error::shape(fused.len(), logits.len()));
        }
        fused
            .iter_mut()
            .zip(softmax(logits))
            .for_each(|(f, p)| *f += p);
    }
    Ok((argmax(&fused), fused))
}

const PCA_MAGIC: [u8; 4] = *b"MVPC";
const SVM_MAGIC: [u8; 4] = *b"MVSV";

fn header_value<T: std::str::FromStr>(header: &str, key: &str, origin: &Path) -> Result<T> {
    header
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::format(origin, format!("missing or bad header key '{key}'")))
}

pub fn save_pca(model: &PcaModel, path: &Path) -> Result<()> {
    let mut f = BlockFile::new(
        PCA_MAGIC,
        format!(
            "d={}\nk={}\nwhiten={}\n",
            model.input_dim(),
            model.dim(),
            model.whiten
        ),
    );
    f.push(&model.mean);
    f.push(&model.eigenvalues);
    for c in &model.components {
        f.push(c);
    }
    f.write(path)
}

pub fn load_pca(path: &Path) -> Result<PcaModel> {
    let f = BlockFile::read(path, PCA_MAGIC)?;
    let d: usize = header_value(&f.header, "d", path)?;
    let k: usize = header_value(&f.header, "k", path)?;
    let whiten: bool = header_value(&f.header, "whiten", path)?;
    if f.blocks.len() != k + 2
        || f.blocks[0].len() != d
        || f.blocks[1].len() != k
        || f.blocks[2..].iter().any(|c| c.len() != d)
    {
        return Err(Error::format(path, "PCA blocks do not match header"));
    }
    Ok(PcaModel {
        mean: f.blocks[0].clone(),
        eigenvalues: f.blocks[1].clone(),
        components: f.blocks[2..].to_vec(),
        whiten,
    })
}

pub fn save_svm(model: &SvmModel, path: &Path) -> Result<()> {
    let mut f = BlockFile::new(
        SVM_MAGIC,
        format!(
            "classes={}\nd={}\nc={:e}\n",
            model.num_classes(),
            model.dim(),
            model.c
        ),
    );
    for w in &model.weights {
        f.push(w);
    }
    f.push(&model.biases);
    f.write(path)
}

pub fn load_svm(path: &Path) -> Result<SvmModel> {
    let f = BlockFile::read(path, SVM_MAGIC)?;
    let k: usize = header_value(&f.header, "classes", path)?;
    let d: usize = header_value(&f.header, "d", path)?;
    let c: f64 = header_value(&f.header, "c", path)?;
    if f.blocks.len() != k + 1
        || f.blocks[..k].iter().any(|w| w.len() != d)
        || f.blocks[k].len() != k
    {
        return Err(Error::format(path, "SVM blocks do not match header"));
    }
    Ok(SvmModel {
        weights: f.blocks[..k].to_vec(),
        biases: f.blocks[k].clone(),
        c,
    })
}
