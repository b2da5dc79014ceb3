use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::{Classifier, PipelineConfig, Representation, TestImages};
use super::report::{report_timings, Prediction, RunReport, StageTimings};
use crate::depthio::{
    load_boxes, load_manifest, load_skeleton, load_video, make_split, DatasetManifest, DepthVideo,
    SampleRecord,
};
use crate::error::{Error, Result};
use crate::features::{
    concat_group_features, default_pca_dim, l2_normalize, pca_fit_with, pca_transform, save_pca,
    save_svm, softmax_sum_fusion, svm_cv_select, svm_predict, svm_train_k, SvmParams,
};
use crate::minicnn::{
    init_model, prepare_input, save_model, train_round_robin, LossRecord, MultiStreamModel,
    TrainConfig, TrainSample,
};
use crate::proposal::{
    boxes_from_skeleton, crop_video, extend_cube, merge_boxes, scaled_margin, NATIVE_MARGIN,
};
use crate::rankpool::{dmm_images, dynamic_images};
use crate::viewsynth::{project_video, ViewSpec};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "MVDI_THREADS";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// `None` reads [`THREADS_ENV`], falling back to all cores.
    pub threads: Option<usize>,
}

impl RunOptions {
    pub fn with_threads(n: usize) -> Self {
        Self { threads: Some(n) }
    }

    pub fn worker_count(&self) -> usize {
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        let cap = self.threads.or_else(|| {
            std::env::var(THREADS_ENV)
                .ok()
                .and_then(|v| v.trim().parse().ok())
        });
        match cap {
            Some(n) if n >= 1 => n,
            _ => cores,
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.worker_count())
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }
}

/// Per-sample network inputs: for each view, the whole-video image followed
/// by the segment images, resized and scaled to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub sample_id: String,
    pub label: usize,
    pub views: Vec<Vec<Vec<f64>>>,
    pub projection_secs: f64,
    pub extraction_secs: f64,
    pub proposal_secs: f64,
}

/// Everything upstream of training, shared by runs that only differ in
/// which view groups, classifier or training settings they use.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub views: Vec<ViewSpec>,
    pub train: Vec<PreparedSample>,
    pub test: Vec<PreparedSample>,
    pub num_classes: usize,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_relative() {
        base.join(p)
    } else {
        p
    }
}

fn apply_proposal(
    video: DepthVideo,
    rec: &SampleRecord,
    base: &Path,
    config: &PipelineConfig,
) -> Result<DepthVideo> {
    let boxes = match (&rec.boxes_path, &rec.skeleton_path) {
        (Some(b), _) => load_boxes(&resolve(base, b))?,
        (None, Some(s)) => boxes_from_skeleton(&load_skeleton(&resolve(base, s))?),
        (None, None) => {
            return Err(Error::Data(
                "proposal is enabled but the sample has no boxes or skeleton file".into(),
            ))
        }
    };
    let cube = merge_boxes(&boxes)?;
    let (w, h) = (video.width(), video.height());
    let margin = config
        .proposal_margin
        .unwrap_or_else(|| scaled_margin(NATIVE_MARGIN, w));
    crop_video(&video, &extend_cube(cube, margin, w, h))
}

fn prepare_sample(
    rec: &SampleRecord,
    base: &Path,
    views: &[ViewSpec],
    config: &PipelineConfig,
) -> Result<PreparedSample> {
    let mut video = load_video(&resolve(base, &rec.video_path))?;
    let t = Instant::now();
    if config.proposal {
        video = apply_proposal(video, rec, base, config)?;
    }
    let proposal_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let projected = project_video(&video, views, &config.projection)?;
    let projection_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let size = config.arch.input;
    let images = projected
        .iter()
        .map(|pv| {
            let imgs = match config.representation {
                Representation::DynamicImage => dynamic_images(pv, &config.pool, &config.segments)?,
                Representation::Dmm => dmm_images(pv, config.dmm_epsilon, &config.segments)?,
            };
            imgs.iter()
                .map(|d| prepare_input(&d.pixels, d.width, d.height, size))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let extraction_secs = t.elapsed().as_secs_f64();

    Ok(PreparedSample {
        sample_id: rec.sample_id.clone(),
        label: rec.label,
        views: images,
        projection_secs,
        extraction_secs,
        proposal_secs,
    })
}

fn configured_views(config: &PipelineConfig) -> Vec<ViewSpec> {
    let mut views: Vec<ViewSpec> = Vec::new();
    for v in config.view_groups.iter().flat_map(|g| &g.views) {
        if !views.contains(v) {
            views.push(*v);
        }
    }
    views
}

fn prepare_ids(
    config: &PipelineConfig,
    manifest: &DatasetManifest,
    ids: &[String],
    views: &[ViewSpec],
    pool: &rayon::ThreadPool,
) -> Result<Vec<PreparedSample>> {
    let base = config
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let recs: Vec<&SampleRecord> = ids
        .iter()
        .map(|id| {
            manifest
                .get(id)
                .ok_or_else(|| Error::Data(format!("sample {id} is not in the manifest")))
        })
        .collect::<Result<_>>()?;
    pool.install(|| {
        recs.par_iter()
            .map(|r| prepare_sample(r, &base, views, config).map_err(|e| e.in_sample(&r.sample_id)))
            .collect()
    })
}

/// Loads, crops, projects and pools every sample of the split, for all
/// configured view groups (active or not).
pub fn prepare(config: &PipelineConfig, opts: &RunOptions) -> Result<Prepared> {
    config.validate()?;
    let manifest = load_manifest(&config.manifest)?;
    let split = make_split(&manifest, &config.split)?;
    let views = configured_views(config);
    let pool = opts.pool()?;
    let train = prepare_ids(config, &manifest, &split.train, &views, &pool)?;
    let test = prepare_ids(config, &manifest, &split.test, &views, &pool)?;
    Ok(Prepared {
        views,
        train,
        test,
        num_classes: manifest.num_classes,
    })
}

/// Trains the network on every sample of the manifest, ignoring the split.
pub fn train_network(
    config: &PipelineConfig,
    opts: &RunOptions,
) -> Result<(MultiStreamModel, Vec<LossRecord>)> {
    config.validate()?;
    let manifest = load_manifest(&config.manifest)?;
    let ids: Vec<String> = manifest
        .records
        .iter()
        .map(|r| r.sample_id.clone())
        .collect();
    let views = configured_views(config);
    let samples = prepare_ids(config, &manifest, &ids, &views, &opts.pool()?)?;
    let groups = active_view_indices(config, &views)?;
    fit(&samples, &groups, manifest.num_classes, config)
}

pub fn run(config: &PipelineConfig) -> Result<RunReport> {
    run_with(config, &RunOptions::default())
}

pub fn run_with(config: &PipelineConfig, opts: &RunOptions) -> Result<RunReport> {
    let prepared = prepare(config, opts)?;
    run_prepared(&prepared, config, opts)
}

/// Per-sample outputs of the trained network.
struct SampleOutputs {
    feature: Vec<f64>,
    group_logits: Vec<Vec<f64>>,
    secs: f64,
}

fn mean_of(vectors: impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for v in vectors {
        if acc.is_empty() {
            acc = v;
        } else {
            acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
        }
        n += 1;
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    acc
}

fn sample_outputs(
    model: &MultiStreamModel,
    s: &PreparedSample,
    groups: &[Vec<usize>],
    test_images: TestImages,
) -> Result<SampleOutputs> {
    let t = Instant::now();
    let mut per_group = Vec::with_capacity(groups.len());
    let mut group_logits = Vec::with_capacity(groups.len());
    for (stream, view_idx) in groups.iter().enumerate() {
        let mut outs = Vec::new();
        for &vi in view_idx {
            let imgs = &s.views[vi];
            let chosen = match test_images {
                TestImages::Whole => &imgs[..1],
                TestImages::SegmentMean => &imgs[..],
            };
            for img in chosen {
                outs.push(model.forward(stream, img)?);
            }
        }
        group_logits.push(mean_of(outs.iter().map(|o| o.0.clone())));
        per_group.push((stream, mean_of(outs.into_iter().map(|o| o.1))));
    }
    let ids: Vec<usize> = (0..groups.len()).collect();
    let feature = concat_group_features(per_group, &ids)?;
    Ok(SampleOutputs {
        feature,
        group_logits,
        secs: t.elapsed().as_secs_f64(),
    })
}

fn mean_loss(trace: &[f64]) -> f64 {
    if trace.is_empty() {
        0.0
    } else {
        trace.iter().sum::<f64>() / trace.len() as f64
    }
}

fn active_view_indices(config: &PipelineConfig, views: &[ViewSpec]) -> Result<Vec<Vec<usize>>> {
    config
        .active()
        .iter()
        .map(|g| {
            g.views
                .iter()
                .map(|v| {
                    views
                        .iter()
                        .position(|u| u == v)
                        .ok_or_else(|| Error::Config(format!("view {v} was not prepared")))
                })
                .collect()
        })
        .collect()
}

/// Round-robin training with one stream per active group; every view of a
/// group contributes one training sample per video.
fn fit(
    samples: &[PreparedSample],
    groups: &[Vec<usize>],
    num_classes: usize,
    config: &PipelineConfig,
) -> Result<(MultiStreamModel, Vec<LossRecord>)> {
    let datasets: Vec<Vec<TrainSample>> = groups
        .iter()
        .map(|view_idx| {
            samples
                .iter()
                .flat_map(|s| {
                    view_idx.iter().map(move |&vi| TrainSample {
                        variants: s.views[vi].clone(),
                        label: s.label,
                    })
                })
                .collect()
        })
        .collect();
    let mut model = init_model(&config.arch, groups.len(), num_classes, config.seed)?;
    let train_cfg = TrainConfig {
        seed: config.seed.wrapping_add(1),
        ..config.train
    };
    let trace = train_round_robin(&mut model, &datasets, &train_cfg, |_, _| {})?;
    Ok((model, trace))
}

/// Training, feature extraction and classification on prepared samples.
pub fn run_prepared(
    prepared: &Prepared,
    config: &PipelineConfig,
    opts: &RunOptions,
) -> Result<RunReport> {
    config.validate()?;
    let groups = active_view_indices(config, &prepared.views)?;
    let (model, trace) = fit(&prepared.train, &groups, prepared.num_classes, config)?;
    let losses: Vec<f64> = trace.iter().map(|r| r.loss).collect();
    let tenth = (losses.len() / 10).max(1).min(losses.len());
    let train_loss_start = mean_loss(&losses[..tenth]);
    let train_loss_end = mean_loss(&losses[losses.len() - tenth..]);

    let pool = opts.pool()?;
    let outputs = |samples: &[PreparedSample]| -> Result<Vec<SampleOutputs>> {
        pool.install(|| {
            samples
                .par_iter()
                .map(|s| {
                    sample_outputs(&model, s, &groups, config.test_images)
                        .map_err(|e| e.in_sample(&s.sample_id))
                })
                .collect()
        })
    };
    let train_out = outputs(&prepared.train)?;
    let test_out = outputs(&prepared.test)?;
    let feature_dim = train_out.first().map_or(0, |o| o.feature.len());

    let mut pca_dim = None;
    let mut chosen_c = None;
    let mut cv_stratified = None;
    let mut predicted = Vec::with_capacity(test_out.len());
    let mut class_secs = Vec::with_capacity(test_out.len());
    let mut artifacts = None;
    match config.classifier {
        Classifier::SoftmaxSum => {
            for o in &test_out {
                let t = Instant::now();
                predicted.push(softmax_sum_fusion(&o.group_logits)?.0);
                class_secs.push(t.elapsed().as_secs_f64());
            }
        }
        Classifier::Svm => {
            let n = train_out.len();
            let k = match config.pca_dim {
                Some(k) if k > feature_dim.min(n.saturating_sub(1)) => {
                    return Err(Error::Config(format!(
                        "pca.dim {k} exceeds min(feature dim {feature_dim}, train samples − 1 = {})",
                        n.saturating_sub(1)
                    )))
                }
                Some(k) => k,
                None => default_pca_dim(n, feature_dim),
            };
            let x: Vec<Vec<f64>> = train_out.iter().map(|o| o.feature.clone()).collect();
            let y: Vec<usize> = prepared.train.iter().map(|s| s.label).collect();
            let pca = pca_fit_with(&x, k, config.pca_whiten)?;
            let project = |f: &[f64]| -> Result<Vec<f64>> {
                let mut z = pca_transform(&pca, f)?;
                if config.l2_normalize {
                    l2_normalize(&mut z);
                }
                Ok(z)
            };
            let z: Vec<Vec<f64>> = x.iter().map(|f| project(f)).collect::<Result<_>>()?;
            let params = SvmParams {
                tol: config.svm_tol,
                seed: config.seed.wrapping_add(2),
                ..SvmParams::default()
            };
            let cv = svm_cv_select(&z, &y, &config.c_grid, config.cv_folds.min(n), &params)?;
            let svm = svm_train_k(
                &z,
                &y,
                prepared.num_classes,
                &SvmParams {
                    c: cv.best_c,
                    ..params
                },
            )?;
            for o in &test_out {
                let t = Instant::now();
                predicted.push(svm_predict(&svm, &project(&o.feature)?)?.0);
                class_secs.push(t.elapsed().as_secs_f64());
            }
            pca_dim = Some(k);
            chosen_c = Some(cv.best_c);
            cv_stratified = Some(cv.stratified);
            artifacts = Some((pca, svm));
        }
    }

    let nc = prepared.num_classes;
    let mut confusion = vec![vec![0usize; nc]; nc];
    let mut predictions = Vec::with_capacity(predicted.len());
    for (s, &p) in prepared.test.iter().zip(&predicted) {
        confusion[s.label][p] += 1;
        predictions.push(Prediction {
            sample_id: s.sample_id.clone(),
            label: s.label,
            predicted: p,
        });
    }
    let correct: usize = (0..nc).map(|c| confusion[c][c]).sum();
    let nt = prepared.test.len() as f64;
    let mean = |f: &dyn Fn(usize) -> f64| (0..prepared.test.len()).map(f).sum::<f64>() / nt;
    let timings = StageTimings {
        projection: mean(&|i| prepared.test[i].projection_secs),
        extraction: mean(&|i| prepared.test[i].extraction_secs),
        proposal: mean(&|i| prepared.test[i].proposal_secs),
        features: mean(&|i| test_out[i].secs),
        classification: mean(&|i| class_secs[i]),
    };
    let report = RunReport {
        config: config.clone(),
        num_classes: nc,
        num_train: prepared.train.len(),
        accuracy: correct as f64 / nt,
        confusion,
        predictions,
        feature_dim,
        pca_dim,
        chosen_c,
        cv_stratified,
        train_loss_start,
        train_loss_end,
        timings,
    };
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            fs::write(dir.join(name), text).map_err(|e| Error::io(dir.join(name), e))
        };
        write("report.txt", report.to_text())?;
        write("timings.txt", report_timings(&report).to_text())?;
        save_model(&model, &dir.join("model.bin"))?;
        if let Some((pca, svm)) = &artifacts {
            save_pca(pca, &dir.join("pca.bin"))?;
            save_svm(svm, &dir.join("svm.bin"))?;
        }
    }
    Ok(report)
}
