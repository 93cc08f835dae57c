use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{DiagnosticClass, EcgRecord, LabelSet, Lead, Sex};
use crate::error::{Error, Result};

pub const DEFAULT_FS: f64 = 500.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub record_id: String,
    /// Relative to the manifest directory.
    pub path: PathBuf,
    pub age: Option<f64>,
    pub sex: Option<Sex>,
    pub labels: LabelSet,
    pub fs: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    /// Sampling rate for entries that do not carry their own.
    pub default_fs: f64,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, record_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.record_id == record_id)
    }

    pub fn record_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.record_id.as_str())
    }

    pub fn load_all(&self) -> Result<Vec<EcgRecord>> {
        self.entries.iter().map(|e| load_entry(self, e)).collect()
    }

    /// Writes the manifest CSV. The optional `fs` column is emitted only when
    /// some entry carries a sampling rate.
    pub fn write(&self, path: &Path) -> Result<()> {
        let with_fs = self.entries.iter().any(|e| e.fs.is_some());
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header = if with_fs {
            "record_id,path,age,sex,labels,fs"
        } else {
            "record_id,path,age,sex,labels"
        };
        let io = |e| Error::io(path, e);
        writeln!(w, "{header}").map_err(io)?;
        for e in &self.entries {
            let age = e.age.map(|a| a.to_string()).unwrap_or_default();
            let sex = e.sex.map(|s| s.to_string()).unwrap_or_default();
            write!(
                w,
                "{},{},{},{},{}",
                e.record_id,
                e.path.display(),
                age,
                sex,
                e.labels.to_codes()
            )
            .map_err(io)?;
            if with_fs {
                write!(w, ",{}", e.fs.map(|f| f.to_string()).unwrap_or_default()).map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Reads and validates a manifest CSV (`record_id,path,age,sex,labels[,fs]`).
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };

    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let expected = ["record_id", "path", "age", "sex", "labels"];
    let cols: Vec<&str> = header.iter().collect();
    let has_fs = cols.len() == 6 && cols[5] == "fs";
    if cols.len() < 5 || cols[..5] != expected || (cols.len() > 5 && !has_fs) {
        return Err(parse_err(
            1,
            format!(
                "header must be `record_id,path,age,sex,labels[,fs]`, got `{}`",
                cols.join(",")
            ),
        ));
    }

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| parse_err(row_no, e.to_string()))?;
        if row.len() != cols.len() {
            return Err(parse_err(
                row_no,
                format!("expected {} fields, got {}", cols.len(), row.len()),
            ));
        }
        let record_id = row[0].to_string();
        if record_id.is_empty() {
            return Err(parse_err(row_no, "empty record_id".into()));
        }
        if !seen.insert(record_id.clone()) {
            return Err(parse_err(
                row_no,
                format!("duplicate record_id `{record_id}`"),
            ));
        }
        let rel = PathBuf::from(&row[1]);
        if !root.join(&rel).is_file() {
            return Err(parse_err(
                row_no,
                format!("record file `{}` not found", root.join(&rel).display()),
            ));
        }
        let age = match &row[2] {
            "" => None,
            s => Some(
                s.parse::<f64>()
                    .map_err(|_| parse_err(row_no, format!("bad age `{s}`")))?,
            ),
        };
        let sex = match &row[3] {
            "" => None,
            s => Some(
                s.parse::<Sex>()
                    .map_err(|e| parse_err(row_no, e.to_string()))?,
            ),
        };
        let mut classes = Vec::new();
        for code in row[4].split(';').map(str::trim).filter(|c| !c.is_empty()) {
            let class = code
                .parse::<DiagnosticClass>()
                .map_err(|_| parse_err(row_no, format!("unknown label code `{code}`")))?;
            classes.push(class);
        }
        let labels = LabelSet::from_classes(classes);
        if labels.is_empty() {
            return Err(parse_err(row_no, "record has no labels".into()));
        }
        let fs = if has_fs && !row[5].is_empty() {
            let fs: f64 = row[5]
                .parse()
                .map_err(|_| parse_err(row_no, format!("bad fs `{}`", &row[5])))?;
            if !(fs > 0.0) {
                return Err(parse_err(row_no, format!("fs must be positive, got {fs}")));
            }
            Some(fs)
        } else {
            None
        };
        entries.push(ManifestEntry {
            record_id,
            path: rel,
            age,
            sex,
            labels,
            fs,
        });
    }
    Ok(DatasetManifest {
        root,
        entries,
        default_fs: DEFAULT_FS,
    })
}

pub fn load_record(manifest: &DatasetManifest, record_id: &str) -> Result<EcgRecord> {
    let entry = manifest
        .entry(record_id)
        .ok_or_else(|| Error::UnknownRecord(record_id.to_string()))?;
    load_entry(manifest, entry)
}

fn load_entry(manifest: &DatasetManifest, entry: &ManifestEntry) -> Result<EcgRecord> {
    let path = manifest.root.join(&entry.path);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.clone(),
        row,
        message,
    };
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let leads = header
        .iter()
        .map(|h| h.parse::<Lead>())
        .collect::<Result<Vec<_>>>()
        .map_err(|e| parse_err(1, e.to_string()))?;
    let mut signal = vec![Vec::new(); leads.len()];
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| parse_err(row_no, e.to_string()))?;
        if row.len() != leads.len() {
            return Err(parse_err(
                row_no,
                format!(
                    "{} columns, header declares {} leads",
                    row.len(),
                    leads.len()
                ),
            ));
        }
        for (col, (cell, lead_row)) in row.iter().zip(signal.iter_mut()).enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                parse_err(
                    row_no,
                    format!("column {} ({}): non-numeric `{cell}`", col + 1, leads[col]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    row_no,
                    format!(
                        "column {} ({}): non-finite value `{cell}`",
                        col + 1,
                        leads[col]
                    ),
                ));
            }
            lead_row.push(v);
        }
    }
    let record = EcgRecord {
        record_id: entry.record_id.clone(),
        signal,
        fs: entry.fs.unwrap_or(manifest.default_fs),
        leads,
        age: entry.age,
        sex: entry.sex,
        labels: entry.labels,
    };
    record.validate()?;
    Ok(record)
}

/// Writes the per-record CSV: a header of lead names, then one row per sample.
pub fn write_record(path: &Path, record: &EcgRecord) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let header: Vec<&str> = record.leads.iter().map(|l| l.name()).collect();
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    let mut line = String::new();
    for j in 0..record.n_samples() {
        line.clear();
        for (k, row) in record.signal.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&format!("{:.6}", row[j]));
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}
