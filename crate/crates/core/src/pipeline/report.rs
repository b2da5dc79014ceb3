use std::fmt::Write as _;

use super::config::PipelineConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub sample_id: String,
    pub label: usize,
    pub predicted: usize,
}

/// Mean wall-clock seconds per test video for each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub projection: f64,
    pub extraction: f64,
    pub proposal: f64,
    pub features: f64,
    pub classification: f64,
}

impl StageTimings {
    pub fn overall(&self) -> f64 {
        self.projection + self.extraction + self.proposal + self.features + self.classification
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub num_classes: usize,
    pub num_train: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<Prediction>,
    /// Concatenated feature size before PCA.
    pub feature_dim: usize,
    pub pca_dim: Option<usize>,
    pub chosen_c: Option<f64>,
    pub cv_stratified: Option<bool>,
    /// Mean training loss over the first and last tenth of updates.
    pub train_loss_start: f64,
    pub train_loss_end: f64,
    /// Kept out of [`RunReport::to_text`] so reports stay reproducible.
    pub timings: StageTimings,
}

impl RunReport {
    pub fn num_test(&self) -> usize {
        self.predictions.len()
    }

    pub fn correct(&self) -> usize {
        (0..self.num_classes).map(|c| self.confusion[c][c]).sum()
    }

    /// `(correct, support)` per class.
    pub fn per_class(&self) -> Vec<(usize, usize)> {
        self.confusion
            .iter()
            .enumerate()
            .map(|(c, row)| (row[c], row.iter().sum()))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[summary]");
        let _ = writeln!(s, "accuracy = {:.6}", self.accuracy);
        let _ = writeln!(s, "correct = {}", self.correct());
        let _ = writeln!(s, "total = {}", self.num_test());
        let _ = writeln!(s, "num_train = {}", self.num_train);
        let _ = writeln!(s, "num_classes = {}", self.num_classes);
        let _ = writeln!(
            s,
            "representation = {}",
            self.config.representation.as_str()
        );
        let _ = writeln!(s, "classifier = {}", self.config.classifier.as_str());
        let _ = writeln!(s, "seed = {}", self.config.seed);
        let _ = writeln!(s, "feature_dim = {}", self.feature_dim);
        if let Some(k) = self.pca_dim {
            let _ = writeln!(s, "pca_dim = {k}");
        }
        if let Some(c) = self.chosen_c {
            let _ = writeln!(s, "chosen_c = {c}");
        }
        if let Some(st) = self.cv_stratified {
            let _ = writeln!(s, "cv_stratified = {st}");
        }
        let _ = writeln!(s, "train_loss_start = {:.6}", self.train_loss_start);
        let _ = writeln!(s, "train_loss_end = {:.6}", self.train_loss_end);
        let _ = writeln!(s, "[per_class]");
        for (c, (hit, n)) in self.per_class().into_iter().enumerate() {
            let acc = if n == 0 {
                "n/a".to_string()
            } else {
                format!("{:.6}", hit as f64 / n as f64)
            };
            let _ = writeln!(s, "class_{c} = {acc} ({hit}/{n})");
        }
        let _ = writeln!(s, "[confusion]");
        let _ = writeln!(s, "# rows: true class, columns: predicted class");
        for row in &self.confusion {
            let _ = writeln!(
                s,
                "{}",
                row.iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(" ")
            );
        }
        let _ = writeln!(s, "[predictions]");
        for p in &self.predictions {
            let _ = writeln!(s, "{} {} {}", p.sample_id, p.label, p.predicted);
        }
        let _ = writeln!(s, "[config]");
        s.push_str(&self.config.to_text());
        s
    }
}

/// Stage-time table: one row per stage, then the overall sum.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingTable {
    pub rows: Vec<(String, f64)>,
}

impl TimingTable {
    pub fn overall(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.1)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<28} {}\n", "stage", "seconds_per_video");
        for (name, t) in &self.rows {
            let _ = writeln!(s, "{name:<28} {t:.6}");
        }
        s
    }
}

pub fn report_timings(report: &RunReport) -> TimingTable {
    let t = report.timings;
    TimingTable {
        rows: vec![
            ("multi-view projection".into(), t.projection),
            ("dynamic image extraction".into(), t.extraction),
            ("action proposal".into(), t.proposal),
            ("feature extraction".into(), t.features),
            ("classification".into(), t.classification),
            ("overall".into(), t.overall()),
        ],
    }
}
