use std::collections::BTreeSet;

use super::DatasetManifest;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    CrossSubject,
    CrossView,
    Explicit,
}

impl SplitMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitMode::CrossSubject => "cross_subject",
            SplitMode::CrossView => "cross_view",
            SplitMode::Explicit => "explicit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cross_subject" => Some(SplitMode::CrossSubject),
            "cross_view" => Some(SplitMode::CrossView),
            "explicit" => Some(SplitMode::Explicit),
            _ => None,
        }
    }
}

/// How to partition a manifest into train and test samples.
///
/// In the protocol modes `train_keys` are subject ids (cross-subject) or
/// camera view ids (cross-view). When `test_keys` is `None`, every record
/// whose key is not a training key goes to the test side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitSpec {
    CrossSubject {
        train_subjects: BTreeSet<u32>,
        test_subjects: Option<BTreeSet<u32>>,
    },
    CrossView {
        train_views: BTreeSet<u32>,
        test_views: Option<BTreeSet<u32>>,
    },
    Explicit {
        train_ids: BTreeSet<String>,
        test_ids: BTreeSet<String>,
    },
}

impl SplitSpec {
    pub fn mode(&self) -> SplitMode {
        match self {
            SplitSpec::CrossSubject { .. } => SplitMode::CrossSubject,
            SplitSpec::CrossView { .. } => SplitMode::CrossView,
            SplitSpec::Explicit { .. } => SplitMode::Explicit,
        }
    }
}

/// Sample ids on each side, in manifest order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

pub fn make_split(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<Split> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    match spec {
        SplitSpec::Explicit {
            train_ids,
            test_ids,
        } => {
            if let Some(id) = train_ids.intersection(test_ids).next() {
                return Err(Error::Config(format!(
                    "sample {id} listed on both sides of the split"
                )));
            }
            for id in train_ids.iter().chain(test_ids) {
                if manifest.get(id).is_none() {
                    return Err(Error::Config(format!("split names unknown sample {id}")));
                }
            }
            for r in &manifest.records {
                if train_ids.contains(&r.sample_id) {
                    train.push(r.sample_id.clone());
                } else if test_ids.contains(&r.sample_id) {
                    test.push(r.sample_id.clone());
                }
            }
        }
        SplitSpec::CrossSubject {
            train_subjects: tr,
            test_subjects: te,
        }
        | SplitSpec::CrossView {
            train_views: tr,
            test_views: te,
        } => {
            if let Some(te) = te {
                if let Some(k) = tr.intersection(te).next() {
                    return Err(Error::Config(format!(
                        "key {k} listed on both sides of the split"
                    )));
                }
            }
            let by_subject = matches!(spec, SplitSpec::CrossSubject { .. });
            for r in &manifest.records {
                let key = if by_subject {
                    r.subject_id
                } else {
                    r.camera_view_id
                };
                if tr.contains(&key) {
                    train.push(r.sample_id.clone());
                } else if te.as_ref().is_none_or(|te| te.contains(&key)) {
                    test.push(r.sample_id.clone());
                }
            }
        }
    }
    if train.is_empty() {
        return Err(Error::Config(format!(
            "{} split has an empty train side",
            spec.mode().as_str()
        )));
    }
    if test.is_empty() {
        return Err(Error::Config(format!(
            "{} split has an empty test side",
            spec.mode().as_str()
        )));
    }
    Ok(Split { train, test })
}
