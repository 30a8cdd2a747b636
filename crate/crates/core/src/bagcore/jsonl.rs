//! One-bag-per-line JSON dataset format.
//!
//! ```text
//! {"bag_id": 0, "instances": [[0.1, 0.2], [0.3, 0.4]], "label": 1.0, "key_mask": [false, true]}
//! ```
//!
//! `key_mask` and `contributions` are optional but must be present on either all
//! lines or none. Reals are written in shortest round-trip form, so a write/read
//! cycle reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Bag, BagDataset, Task};
use crate::error::{MilError, Result};

/// Wire form of one bag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BagRecord {
    pub bag_id: u64,
    pub instances: Vec<Vec<f64>>,
    pub label: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_mask: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contributions: Option<Vec<f64>>,
}

/// Reads a JSONL dataset, inferring the task: classification when every label
/// is 0 or 1, regression otherwise.
pub fn read_bags_jsonl(path: impl AsRef<Path>) -> Result<BagDataset> {
    read_impl(path.as_ref(), None)
}

/// Reads a JSONL dataset with an explicit task.
pub fn read_bags_jsonl_as(path: impl AsRef<Path>, task: Task) -> Result<BagDataset> {
    read_impl(path.as_ref(), Some(task))
}

fn read_impl(path: &Path, task: Option<Task>) -> Result<BagDataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: BagRecord = serde_json::from_str(&line).map_err(|e| MilError::format(Some(lineno), e.to_string()))?;
        records.push((lineno, rec));
    }
    from_records(records, task)
}

fn from_records(records: Vec<(usize, BagRecord)>, task: Option<Task>) -> Result<BagDataset> {
    let task = task.unwrap_or_else(|| {
        if !records.is_empty() && records.iter().all(|(_, r)| r.label == 0.0 || r.label == 1.0) {
            Task::Classification
        } else {
            Task::Regression
        }
    });
    let Some((_, first)) = records.first() else {
        return Ok(BagDataset::empty(task));
    };
    let has_masks = first.key_mask.is_some();
    let has_contrib = first.contributions.is_some();
    let dim = first.instances.first().map(Vec::len).unwrap_or(0);

    let mut bags = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    let mut ids = Vec::with_capacity(records.len());
    let mut masks = Vec::new();
    let mut contribs = Vec::new();
    for (lineno, rec) in records {
        let fail = |msg: String| MilError::format(Some(lineno), msg);
        if rec.instances.iter().any(|inst| inst.len() != dim) {
            return Err(fail(format!("instance dimension differs from {dim}")));
        }
        let n = rec.instances.len();
        let bag = Bag::new(rec.instances).map_err(|e| fail(e.to_string()))?;
        if rec.key_mask.is_some() != has_masks || rec.contributions.is_some() != has_contrib {
            return Err(fail("optional fields must appear on all lines or none".into()));
        }
        if let Some(mask) = rec.key_mask {
            if mask.len() != n {
                return Err(fail(format!("key_mask has {} entries for {n} instances", mask.len())));
            }
            masks.push(mask);
        }
        if let Some(c) = rec.contributions {
            if c.len() != n {
                return Err(fail(format!("contributions has {} entries for {n} instances", c.len())));
            }
            contribs.push(c);
        }
        if task == Task::Classification && rec.label != 0.0 && rec.label != 1.0 {
            return Err(fail(format!("classification label {} is not 0 or 1", rec.label)));
        }
        bags.push(bag);
        labels.push(rec.label);
        ids.push(rec.bag_id);
    }
    let mut ds = BagDataset::new(bags, labels, task)
        .and_then(|ds| ds.with_bag_ids(ids))
        .map_err(|e| MilError::format(None, e.to_string()))?;
    if has_masks {
        ds = ds.with_key_masks(masks)?;
    }
    if has_contrib {
        ds = ds.with_contributions(contribs)?;
    }
    Ok(ds)
}

/// Converts bag `i` of `ds` into its wire record.
pub(crate) fn to_record(ds: &BagDataset, i: usize) -> BagRecord {
    BagRecord {
        bag_id: ds.bag_ids()[i],
        instances: ds.bags()[i].instances().map(<[f64]>::to_vec).collect(),
        label: ds.labels()[i],
        key_mask: ds.key_masks().map(|m| m[i].clone()),
        contributions: ds.contributions().map(|c| c[i].clone()),
    }
}

/// Writes `ds` as JSONL, one bag per line.
pub fn write_bags_jsonl(ds: &BagDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for i in 0..ds.len() {
        serde_json::to_writer(&mut out, &to_record(ds, i))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
