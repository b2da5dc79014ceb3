//! Flat `key = value` run configuration. Keys use dotted prefixes as
//! sections; a `[section]` line prefixes the keys that follow it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::depthio::{SplitMode, SplitSpec};
use crate::error::{Error, Result};
use crate::features::default_c_grid;
use crate::minicnn::{Arch, Precision, TrainConfig};
use crate::rankpool::{PoolConfig, PoolVariant, SegmentSpec, DEFAULT_DMM_EPSILON};
use crate::viewsynth::{default_view_groups, ProjectionConfig, ViewGroup, ViewSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    DynamicImage,
    Dmm,
}

impl Representation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Representation::DynamicImage => "dynamic_image",
            Representation::Dmm => "dmm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dynamic_image" => Some(Representation::DynamicImage),
            "dmm" => Some(Representation::Dmm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classifier {
    Svm,
    SoftmaxSum,
}

impl Classifier {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classifier::Svm => "svm",
            Classifier::SoftmaxSum => "softmax_sum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "svm" => Some(Classifier::Svm),
            "softmax_sum" => Some(Classifier::SoftmaxSum),
            _ => None,
        }
    }
}

/// Which images of a view feed feature extraction at test time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestImages {
    /// The whole-video image only.
    Whole,
    /// Mean feature over the whole-video and all segment images.
    SegmentMean,
}

impl TestImages {
    pub fn as_str(&self) -> &'static str {
        match self {
            TestImages::Whole => "whole",
            TestImages::SegmentMean => "segment_mean",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "whole" => Some(TestImages::Whole),
            "segment_mean" => Some(TestImages::SegmentMean),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub split: SplitSpec,
    pub view_groups: Vec<ViewGroup>,
    /// 1-based group ids taking part in the run, ascending.
    pub active_groups: Vec<usize>,
    pub projection: ProjectionConfig,
    pub pool: PoolConfig,
    pub segments: SegmentSpec,
    pub representation: Representation,
    pub dmm_epsilon: f64,
    pub proposal: bool,
    /// `None` scales the native margin to the frame width.
    pub proposal_margin: Option<usize>,
    pub arch: Arch,
    pub train: TrainConfig,
    pub test_images: TestImages,
    pub classifier: Classifier,
    /// `None` means `min(1000, n − 1, d)`.
    pub pca_dim: Option<usize>,
    pub pca_whiten: bool,
    pub l2_normalize: bool,
    pub c_grid: Vec<f64>,
    pub cv_folds: usize,
    pub svm_tol: f64,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl PipelineConfig {
    /// Defaults for everything except the data location and split.
    pub fn new(manifest: impl Into<PathBuf>, split: SplitSpec) -> Self {
        let groups = default_view_groups();
        Self {
            manifest: manifest.into(),
            split,
            active_groups: groups.iter().map(|g| g.group_id).collect(),
            view_groups: groups,
            projection: ProjectionConfig::default(),
            pool: PoolConfig::default(),
            segments: SegmentSpec::default(),
            representation: Representation::DynamicImage,
            dmm_epsilon: DEFAULT_DMM_EPSILON,
            proposal: true,
            proposal_margin: None,
            arch: Arch::default(),
            train: TrainConfig::default(),
            test_images: TestImages::Whole,
            classifier: Classifier::Svm,
            pca_dim: None,
            pca_whiten: false,
            l2_normalize: false,
            c_grid: default_c_grid(),
            cv_folds: 5,
            svm_tol: 1e-4,
            output_dir: None,
            seed: 0,
        }
    }

    /// Groups taking part in the run, in id order.
    pub fn active(&self) -> Vec<&ViewGroup> {
        self.view_groups
            .iter()
            .filter(|g| self.active_groups.contains(&g.group_id))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.view_groups.is_empty() {
            return cfg("no view groups".into());
        }
        let ids: BTreeSet<usize> = self.view_groups.iter().map(|g| g.group_id).collect();
        if ids.len() != self.view_groups.len() {
            return cfg("duplicate view group ids".into());
        }
        if self.view_groups.iter().any(|g| g.views.is_empty()) {
            return cfg("empty view group".into());
        }
        if self.active_groups.is_empty() {
            return cfg("views.active selects no groups".into());
        }
        if let Some(g) = self.active_groups.iter().find(|g| !ids.contains(g)) {
            return cfg(format!("views.active names unknown group {g}"));
        }
        let wrap = |e: Error| Error::Config(e.to_string());
        self.projection.validate().map_err(wrap)?;
        self.pool.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        self.arch.validate().map_err(wrap)?;
        if self.segments.num_segments == 0 || !(0.0..1.0).contains(&self.segments.overlap_ratio) {
            return cfg("segments.count must be >= 1 and segments.overlap in [0, 1)".into());
        }
        if !(self.dmm_epsilon.is_finite() && self.dmm_epsilon >= 0.0) {
            return cfg(format!("dmm.epsilon {} must be >= 0", self.dmm_epsilon));
        }
        if self.pca_dim == Some(0) {
            return cfg("pca.dim must be >= 1".into());
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return cfg("svm.c_grid must hold positive values".into());
        }
        if self.cv_folds < 2 {
            return cfg("svm.folds must be >= 2".into());
        }
        if !(self.svm_tol.is_finite() && self.svm_tol > 0.0) {
            return cfg("svm.tol must be > 0".into());
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("data.manifest", self.manifest.display().to_string());
        let (mode, train, test) = split_fields(&self.split);
        kv("split.mode", mode.as_str().into());
        kv("split.train", train);
        kv("split.test", test);
        kv("views.groups", format_groups(&self.view_groups));
        kv("views.active", join(&self.active_groups));
        kv(
            "projection.depth_scale",
            self.projection.depth_scale.to_string(),
        );
        kv(
            "projection.hole_fill_radius",
            self.projection.hole_fill_radius.to_string(),
        );
        kv("pool.variant", self.pool.variant.as_str().into());
        kv("pool.lambda", self.pool.lambda.to_string());
        kv("pool.max_iters", self.pool.max_iters.to_string());
        kv(
            "pool.step_size",
            self.pool.step_size.map_or("auto".into(), |v| v.to_string()),
        );
        kv("segments.count", self.segments.num_segments.to_string());
        kv("segments.overlap", self.segments.overlap_ratio.to_string());
        kv("representation", self.representation.as_str().into());
        kv("dmm.epsilon", self.dmm_epsilon.to_string());
        kv("proposal.enabled", self.proposal.to_string());
        kv(
            "proposal.margin",
            self.proposal_margin
                .map_or("auto".into(), |v| v.to_string()),
        );
        kv("model.arch", self.arch.to_string());
        kv("train.learning_rate", self.train.learning_rate.to_string());
        kv("train.momentum", self.train.momentum.to_string());
        kv("train.weight_decay", self.train.weight_decay.to_string());
        kv("train.batch_size", self.train.batch_size.to_string());
        kv("train.iters", self.train.iters.to_string());
        kv("train.dropout", self.train.dropout.to_string());
        kv("train.precision", self.train.precision.as_str().into());
        kv("features.test_images", self.test_images.as_str().into());
        kv("features.l2_normalize", self.l2_normalize.to_string());
        kv("classifier", self.classifier.as_str().into());
        kv(
            "pca.dim",
            self.pca_dim.map_or("auto".into(), |v| v.to_string()),
        );
        kv("pca.whiten", self.pca_whiten.to_string());
        kv("svm.c_grid", join(&self.c_grid));
        kv("svm.folds", self.cv_folds.to_string());
        kv("svm.tol", self.svm_tol.to_string());
        if let Some(dir) = &self.output_dir {
            kv("output.dir", dir.display().to_string());
        }
        s
    }

    /// Parses config text. Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut map = parse_kv(text)?;
        let mut take = |k: &str| map.remove(k);
        let manifest = take("data.manifest")
            .ok_or_else(|| Error::Config("data.manifest is required".into()))?;
        let resolve = |p: String| -> PathBuf {
            let p = PathBuf::from(p);
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };
        let mode_s = take("split.mode").unwrap_or_else(|| "cross_subject".into());
        let mode = SplitMode::parse(&mode_s)
            .ok_or_else(|| Error::Config(format!("unknown split.mode '{mode_s}'")))?;
        let split = build_split(
            mode,
            take("split.train").unwrap_or_default(),
            take("split.test").unwrap_or_default(),
        )?;
        let mut c = PipelineConfig::new(resolve(manifest), split);

        if let Some(v) = take("seed") {
            c.seed = parse_num("seed", &v)?;
        }
        if let Some(v) = take("views.groups") {
            c.view_groups = parse_groups(&v)?;
            c.active_groups = c.view_groups.iter().map(|g| g.group_id).collect();
        }
        if let Some(v) = take("views.active") {
            c.active_groups = parse_list("views.active", &v)?;
            c.active_groups.sort_unstable();
            c.active_groups.dedup();
        }
        if let Some(v) = take("projection.depth_scale") {
            c.projection.depth_scale = parse_num("projection.depth_scale", &v)?;
        }
        if let Some(v) = take("projection.hole_fill_radius") {
            c.projection.hole_fill_radius = parse_num("projection.hole_fill_radius", &v)?;
        }
        if let Some(v) = take("pool.variant") {
            c.pool.variant = PoolVariant::parse(&v)
                .ok_or_else(|| Error::Config(format!("unknown pool.variant '{v}'")))?;
        }
        if let Some(v) = take("pool.lambda") {
            c.pool.lambda = parse_num("pool.lambda", &v)?;
        }
        if let Some(v) = take("pool.max_iters") {
            c.pool.max_iters = parse_num("pool.max_iters", &v)?;
        }
        if let Some(v) = take("pool.step_size") {
            c.pool.step_size = parse_auto("pool.step_size", &v)?;
        }
        if let Some(v) = take("segments.count") {
            c.segments.num_segments = parse_num("segments.count", &v)?;
        }
        if let Some(v) = take("segments.overlap") {
            c.segments.overlap_ratio = parse_num("segments.overlap", &v)?;
        }
        if let Some(v) = take("representation") {
            c.representation = Representation::parse(&v)
                .ok_or_else(|| Error::Config(format!("unknown representation '{v}'")))?;
        }
        if let Some(v) = take("dmm.epsilon") {
            c.dmm_epsilon = parse_num("dmm.epsilon", &v)?;
        }
        if let Some(v) = take("proposal.enabled") {
            c.proposal = parse_num("proposal.enabled", &v)?;
        }
        if let Some(v) = take("proposal.margin") {
            c.proposal_margin = parse_auto("proposal.margin", &v)?;
        }
        if let Some(v) = take("model.arch") {
            c.arch = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        }
        if let Some(v) = take("train.learning_rate") {
            c.train.learning_rate = parse_num("train.learning_rate", &v)?;
        }
        if let Some(v) = take("train.momentum") {
            c.train.momentum = parse_num("train.momentum", &v)?;
        }
        if let Some(v) = take("train.weight_decay") {
            c.train.weight_decay = parse_num("train.weight_decay", &v)?;
        }
        if let Some(v) = take("train.batch_size") {
            c.train.batch_size = parse_num("train.batch_size", &v)?;
        }
        if let Some(v) = take("train.iters") {
            c.train.iters = parse_num("train.iters", &v)?;
        }
        if let Some(v) = take("train.dropout") {
            c.train.dropout = parse_num("train.dropout", &v)?;
        }
        if let Some(v) = take("train.precision") {
            c.train.precision = Precision::parse(&v)
                .ok_or_else(|| Error::Config(format!("unknown train.precision '{v}'")))?;
        }
        if let Some(v) = take("features.test_images") {
            c.test_images = TestImages::parse(&v)
                .ok_or_else(|| Error::Config(format!("unknown features.test_images '{v}'")))?;
        }
        if let Some(v) = take("features.l2_normalize") {
            c.l2_normalize = parse_num("features.l2_normalize", &v)?;
        }
        if let Some(v) = take("classifier") {
            c.classifier = Classifier::parse(&v)
                .ok_or_else(|| Error::Config(format!("unknown classifier '{v}'")))?;
        }
        if let Some(v) = take("pca.dim") {
            c.pca_dim = parse_auto("pca.dim", &v)?;
        }
        if let Some(v) = take("pca.whiten") {
            c.pca_whiten = parse_num("pca.whiten", &v)?;
        }
        if let Some(v) = take("svm.c_grid") {
            c.c_grid = parse_list("svm.c_grid", &v)?;
        }
        if let Some(v) = take("svm.folds") {
            c.cv_folds = parse_num("svm.folds", &v)?;
        }
        if let Some(v) = take("svm.tol") {
            c.svm_tol = parse_num("svm.tol", &v)?;
        }
        if let Some(v) = take("output.dir") {
            c.output_dir = Some(resolve(v));
        }
        if let Some(k) = map.keys().next() {
            return Err(Error::Config(format!("unknown config key '{k}'")));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    /// Recovers the configuration from the `[config]` section of a report.
    pub fn from_report(report: &str) -> Result<Self> {
        let body: String = report
            .lines()
            .skip_while(|l| l.trim() != "[config]")
            .skip(1)
            .take_while(|l| !l.trim_start().starts_with('['))
            .map(|l| format!("{l}\n"))
            .collect();
        if body.trim().is_empty() {
            return Err(Error::Config("report has no [config] section".into()));
        }
        Self::parse(&body, None)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn split_fields(split: &SplitSpec) -> (SplitMode, String, String) {
    let set = |s: &BTreeSet<u32>| join(&s.iter().collect::<Vec<_>>());
    match split {
        SplitSpec::CrossSubject {
            train_subjects,
            test_subjects,
        } => (
            SplitMode::CrossSubject,
            set(train_subjects),
            test_subjects.as_ref().map(set).unwrap_or_default(),
        ),
        SplitSpec::CrossView {
            train_views,
            test_views,
        } => (
            SplitMode::CrossView,
            set(train_views),
            test_views.as_ref().map(set).unwrap_or_default(),
        ),
        SplitSpec::Explicit {
            train_ids,
            test_ids,
        } => (
            SplitMode::Explicit,
            join(&train_ids.iter().collect::<Vec<_>>()),
            join(&test_ids.iter().collect::<Vec<_>>()),
        ),
    }
}

fn build_split(mode: SplitMode, train: String, test: String) -> Result<SplitSpec> {
    let ids = |s: &str| -> BTreeSet<String> {
        s.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(String::from)
            .collect()
    };
    let keys = |name: &str, s: &str| -> Result<BTreeSet<u32>> {
        Ok(parse_list::<u32>(name, s)?.into_iter().collect())
    };
    let train_empty = train.trim().is_empty();
    if train_empty {
        return Err(Error::Config("split.train is required".into()));
    }
    let opt = |s: &str| -> Result<Option<BTreeSet<u32>>> {
        if s.trim().is_empty() {
            Ok(None)
        } else {
            keys("split.test", s).map(Some)
        }
    };
    Ok(match mode {
        SplitMode::CrossSubject => SplitSpec::CrossSubject {
            train_subjects: keys("split.train", &train)?,
            test_subjects: opt(&test)?,
        },
        SplitMode::CrossView => SplitSpec::CrossView {
            train_views: keys("split.train", &train)?,
            test_views: opt(&test)?,
        },
        SplitMode::Explicit => SplitSpec::Explicit {
            train_ids: ids(&train),
            test_ids: ids(&test),
        },
    })
}

/// `a:b,a:b | a:b | …`; group ids are 1-based positions.
fn format_groups(groups: &[ViewGroup]) -> String {
    groups
        .iter()
        .map(|g| join(&g.views))
        .collect::<Vec<_>>()
        .join(" | ")
}

fn parse_groups(s: &str) -> Result<Vec<ViewGroup>> {
    s.split('|')
        .enumerate()
        .map(|(i, part)| {
            let views = part
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(|v| {
                    let (a, b) = v.split_once(':').unwrap_or((v, "0"));
                    let alpha = parse_num::<f64>("views.groups", a)?;
                    let beta = parse_num::<f64>("views.groups", b)?;
                    ViewSpec::new(alpha, beta).map_err(|e| Error::Config(e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ViewGroup {
                group_id: i + 1,
                views,
            })
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{v}' for {key}")))
}

fn parse_auto<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v.trim() == "auto" {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| parse_num(key, x))
        .collect()
}

/// Generic `key = value` reader with `#` comments and `[section]` prefixes.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
        let key = if section.is_empty() {
            k.trim().to_string()
        } else {
            format!("{section}.{}", k.trim())
        };
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key '{key}'",
                n + 1
            )));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "data.manifest = m.csv\nsplit.train = 0,1\n";

    #[test]
    fn defaults_and_resolution() {
        let c = PipelineConfig::parse(MINIMAL, Some(Path::new("/data"))).unwrap();
        assert_eq!(c.manifest, PathBuf::from("/data/m.csv"));
        assert_eq!(c.active_groups, vec![1, 2, 3, 4, 5]);
        assert_eq!(c.view_groups, default_view_groups());
        assert!(c.proposal);
        assert_eq!(c.classifier, Classifier::Svm);
        assert_eq!(c.c_grid.len(), 6);
    }

    #[test]
    fn text_round_trip() {
        let text = format!(
            "{MINIMAL}seed = 9\n[train]\niters = 40\nlearning_rate = 0.01\n[pool]\nvariant = approx-frames\nstep_size = 0.5\n\
             views.active = 3\nrepresentation = dmm # order-blind\nclassifier = softmax_sum\npca.dim = 12\n"
        );
        let c = PipelineConfig::parse(&text, None);
        // keys after [pool] land in the pool section
        assert!(c.is_err());
        let text = format!(
            "{MINIMAL}seed = 9\nviews.active = 3\nrepresentation = dmm # order-blind\nclassifier = softmax_sum\npca.dim = 12\n\
             [train]\niters = 40\nlearning_rate = 0.01\n[pool]\nvariant = approx-frames\nstep_size = 0.5\n"
        );
        let c = PipelineConfig::parse(&text, None).unwrap();
        assert_eq!(
            (c.seed, c.train.iters, c.pool.step_size),
            (9, 40, Some(0.5))
        );
        assert_eq!(c.active_groups, vec![3]);
        assert_eq!(c.representation, Representation::Dmm);
        let back = PipelineConfig::parse(&c.to_text(), None).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn config_errors() {
        assert!(PipelineConfig::parse("split.train = 0\n", None).is_err());
        assert!(PipelineConfig::parse(MINIMAL.replace("0,1", "").as_str(), None).is_err());
        let bad = [
            "bogus = 1",
            "classifier = knn",
            "views.active = 9",
            "train.batch_size = 0",
            "segments.overlap = 1.0",
            "svm.folds = 1",
            "seed = -3",
            "model.arch = input=4;conv=1x9x9",
        ];
        for line in bad {
            let e = PipelineConfig::parse(&format!("{MINIMAL}{line}\n"), None).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{line}: {e}");
        }
        assert!(parse_kv("a = 1\na = 2\n").is_err());
        assert!(parse_kv("novalue\n").is_err());
    }

    #[test]
    fn custom_groups_and_splits() {
        let text =
            "data.manifest = m\nsplit.mode = cross_view\nsplit.train = 0\nsplit.test = 1,2\n\
                    views.groups = -30:5, 0:0 | 30\n";
        let c = PipelineConfig::parse(text, None).unwrap();
        assert_eq!(c.view_groups.len(), 2);
        assert_eq!(
            c.view_groups[0].views[0],
            ViewSpec {
                alpha: -30.0,
                beta: 5.0
            }
        );
        assert_eq!(
            c.view_groups[1].views,
            vec![ViewSpec {
                alpha: 30.0,
                beta: 0.0
            }]
        );
        assert!(matches!(c.split, SplitSpec::CrossView { .. }));
        let text = "data.manifest = m\nsplit.mode = explicit\nsplit.train = a,b\nsplit.test = c\n";
        let c = PipelineConfig::parse(text, None).unwrap();
        assert_eq!(PipelineConfig::parse(&c.to_text(), None).unwrap(), c);
    }
}
