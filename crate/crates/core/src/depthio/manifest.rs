use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labelled sample. Paths are relative to the manifest's directory
/// unless absolute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub video_path: String,
    pub label: usize,
    pub subject_id: u32,
    pub camera_view_id: u32,
    #[serde(default)]
    pub boxes_path: Option<String>,
    #[serde(default)]
    pub skeleton_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
    pub num_classes: usize,
}

impl DatasetManifest {
    pub fn new(records: Vec<SampleRecord>, num_classes: usize) -> Result<Self> {
        let m = Self {
            records,
            num_classes,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if r.sample_id.is_empty() {
                return Err(Error::Data("empty sample_id".into()));
            }
            if r.video_path.is_empty() {
                return Err(Error::Data(format!(
                    "sample {} has empty video_path",
                    r.sample_id
                )));
            }
            if !seen.insert(r.sample_id.as_str()) {
                return Err(Error::Data(format!("duplicate sample_id {}", r.sample_id)));
            }
            if r.label >= self.num_classes {
                return Err(Error::Data(format!(
                    "sample {} has label {} outside 0..{}",
                    r.sample_id, r.label, self.num_classes
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, sample_id: &str) -> Option<&SampleRecord> {
        self.records.iter().find(|r| r.sample_id == sample_id)
    }
}

const REQUIRED: [&str; 5] = [
    "sample_id",
    "video_path",
    "label",
    "subject_id",
    "camera_view_id",
];

/// Parses a manifest CSV. An optional leading `# num_classes = N` line fixes
/// the class count; without it the count is `max(label) + 1`.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut declared = None;
    for line in text.lines() {
        let Some(rest) = line.trim().strip_prefix('#') else {
            break;
        };
        if let Some((k, v)) = rest.split_once('=') {
            if k.trim() == "num_classes" {
                declared = Some(v.trim().parse::<usize>().map_err(|_| {
                    Error::format(path, format!("bad num_classes value {:?}", v.trim()))
                })?);
            }
        }
    }

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    for col in REQUIRED {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::format(
                path,
                format!("missing required column {col}"),
            ));
        }
    }
    let mut records = Vec::new();
    for row in rdr.deserialize::<SampleRecord>() {
        let mut r = row.map_err(|e| Error::format(path, e.to_string()))?;
        r.boxes_path = r.boxes_path.filter(|s| !s.is_empty());
        r.skeleton_path = r.skeleton_path.filter(|s| !s.is_empty());
        records.push(r);
    }
    let num_classes =
        declared.unwrap_or_else(|| records.iter().map(|r| r.label + 1).max().unwrap_or(0));
    DatasetManifest::new(records, num_classes)
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let mut out = format!("# num_classes = {}\n", manifest.num_classes).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in &manifest.records {
            w.serialize(r)
                .map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
