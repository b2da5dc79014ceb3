use std::fmt::Write as _;

use super::config::{Classifier, PipelineConfig, Representation};
use super::report::RunReport;
use super::run::{prepare, run_prepared, RunOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    Representation,
    ViewGroups,
    Proposal,
    Classifier,
}

impl AblationAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            AblationAxis::Representation => "representation",
            AblationAxis::ViewGroups => "view_groups",
            AblationAxis::Proposal => "proposal",
            AblationAxis::Classifier => "classifier",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "representation" => Some(AblationAxis::Representation),
            "view_groups" => Some(AblationAxis::ViewGroups),
            "proposal" => Some(AblationAxis::Proposal),
            "classifier" => Some(AblationAxis::Classifier),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub setting: String,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn accuracy(&self, setting: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.setting == setting)
            .map(|r| r.report.accuracy)
    }

    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.setting.len())
            .max()
            .unwrap_or(0)
            .max(7);
        let mut s = format!(
            "# axis: {}\n{:<width$}  accuracy\n",
            self.axis.as_str(),
            "setting"
        );
        for r in &self.rows {
            let _ = writeln!(s, "{:<width$}  {:.4}", r.setting, r.report.accuracy);
        }
        s
    }
}

/// Runs `base` across every value of `axis`. The view-group axis gives each
/// group alone, then the cumulative sets 1, 1+2, …; the group-1 run is
/// shared by both blocks.
pub fn run_ablation(
    base: &PipelineConfig,
    axis: AblationAxis,
    opts: &RunOptions,
) -> Result<AblationTable> {
    base.validate()?;
    let mut rows = Vec::new();
    match axis {
        AblationAxis::Representation => {
            for (label, rep) in [
                ("Dynamic image", Representation::DynamicImage),
                ("DMM", Representation::Dmm),
            ] {
                let cfg = PipelineConfig {
                    representation: rep,
                    ..base.clone()
                };
                let prepared = prepare(&cfg, opts)?;
                rows.push(AblationRow {
                    setting: label.into(),
                    report: run_prepared(&prepared, &cfg, opts)?,
                });
            }
        }
        AblationAxis::Proposal => {
            for (label, on) in [("MVDI-O", false), ("MVDI-AP", true)] {
                let cfg = PipelineConfig {
                    proposal: on,
                    ..base.clone()
                };
                let prepared = prepare(&cfg, opts)?;
                rows.push(AblationRow {
                    setting: label.into(),
                    report: run_prepared(&prepared, &cfg, opts)?,
                });
            }
        }
        AblationAxis::Classifier => {
            let prepared = prepare(base, opts)?;
            for (label, clf) in [
                ("Softmax", Classifier::SoftmaxSum),
                ("SVM", Classifier::Svm),
            ] {
                let cfg = PipelineConfig {
                    classifier: clf,
                    ..base.clone()
                };
                rows.push(AblationRow {
                    setting: label.into(),
                    report: run_prepared(&prepared, &cfg, opts)?,
                });
            }
        }
        AblationAxis::ViewGroups => {
            let prepared = prepare(base, opts)?;
            let ids: Vec<usize> = base.view_groups.iter().map(|g| g.group_id).collect();
            if ids.is_empty() {
                return Err(Error::Config("no view groups to ablate".into()));
            }
            for &g in &ids {
                let cfg = PipelineConfig {
                    active_groups: vec![g],
                    ..base.clone()
                };
                rows.push(AblationRow {
                    setting: format!("Group {g}"),
                    report: run_prepared(&prepared, &cfg, opts)?,
                });
            }
            rows.push(AblationRow {
                setting: format!("Group {} (cumulative)", ids[0]),
                report: rows[0].report.clone(),
            });
            for k in 2..=ids.len() {
                let active = ids[..k].to_vec();
                let label = format!(
                    "Group {}",
                    active
                        .iter()
                        .map(usize::to_string)
                        .collect::<Vec<_>>()
                        .join("+")
                );
                let cfg = PipelineConfig {
                    active_groups: active,
                    ..base.clone()
                };
                rows.push(AblationRow {
                    setting: label,
                    report: run_prepared(&prepared, &cfg, opts)?,
                });
            }
        }
    }
    Ok(AblationTable { axis, rows })
}
