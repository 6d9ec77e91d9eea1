use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stats::quantile;

/// A row of experiment output.
pub trait Record: Serialize + DeserializeOwned + Clone + Send {
    fn method(&self) -> &str;
    fn seed(&self) -> u64;
    /// Summary series key beyond the method (e.g. arm count); empty if none.
    fn group(&self) -> String {
        String::new()
    }
    /// Position along the series (time step, trial, test domain).
    fn index(&self) -> u64;
    /// Additional numeric ordering keys between the group and the seed.
    fn extra_keys(&self) -> Vec<u64> {
        Vec::new()
    }
    fn metrics(&self) -> Vec<(&'static str, f64)>;
}

/// Sorts rows by (method, group, extra keys, seed, index) so output does not
/// depend on the order in which workers finished.
pub fn sort_records<R: Record>(records: &mut [R]) {
    records.sort_by(|a, b| {
        (a.method(), a.group(), a.extra_keys(), a.seed(), a.index())
            .cmp(&(b.method(), b.group(), b.extra_keys(), b.seed(), b.index()))
    });
}

/// Writes records as CSV (header always present, even when empty).
pub fn write_csv<R: Record, W: std::io::Write>(records: &[R], header: &[&str], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Record>(path: &Path) -> Result<Vec<R>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub n: usize,
}

impl Band {
    pub fn of(values: &[f64]) -> Option<Band> {
        Some(Band {
            median: quantile(values, 0.5)?,
            q10: quantile(values, 0.1)?,
            q90: quantile(values, 0.9)?,
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub method: String,
    pub group: String,
    pub metric: String,
    pub index: Vec<u64>,
    pub median: Vec<f64>,
    pub q10: Vec<f64>,
    pub q90: Vec<f64>,
    /// Band of the last index across replicates.
    pub last: Band,
    /// Band of the per-replicate averages over all indices.
    pub replicate_mean: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub records: usize,
    pub series: Vec<Series>,
}

type SeriesKey = (String, String, &'static str);

/// Median and 10-90% bands of every metric per (method, group, index), taken
/// across replicates (seeds and extra keys).
pub fn summarize<R: Record>(experiment: &str, records: &[R]) -> Summary {
    let mut cells: BTreeMap<SeriesKey, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    let mut replicate: BTreeMap<SeriesKey, BTreeMap<(Vec<u64>, u64), (f64, usize)>> = BTreeMap::new();
    for r in records {
        for (metric, v) in r.metrics() {
            if !v.is_finite() {
                continue;
            }
            let key = (r.method().to_string(), r.group(), metric);
            cells.entry(key.clone()).or_default().entry(r.index()).or_default().push(v);
            let acc = replicate.entry(key).or_default().entry((r.extra_keys(), r.seed())).or_insert((0.0, 0));
            acc.0 += v;
            acc.1 += 1;
        }
    }
    let series = cells
        .into_iter()
        .filter_map(|(key, by_index)| {
            let mut s = Series {
                method: key.0.clone(),
                group: key.1.clone(),
                metric: key.2.to_string(),
                index: Vec::new(),
                median: Vec::new(),
                q10: Vec::new(),
                q90: Vec::new(),
                last: Band::of(by_index.values().next_back()?)?,
                replicate_mean: Band::of(
                    &replicate[&key].values().map(|(sum, n)| sum / *n as f64).collect::<Vec<_>>(),
                )?,
            };
            for (i, values) in by_index {
                let b = Band::of(&values)?;
                s.index.push(i);
                s.median.push(b.median);
                s.q10.push(b.q10);
                s.q90.push(b.q90);
            }
            Some(s)
        })
        .collect();
    Summary { experiment: experiment.to_string(), records: records.len(), series }
}

/// Sorts `records`, then writes `<stem>.csv` and `<stem>_summary.json` into
/// `dir`. Returns the written paths.
pub fn emit<R: Record>(experiment: &str, records: &mut [R], header: &[&str], dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    sort_records(records);
    let csv_path = dir.join(format!("{stem}.csv"));
    write_csv(records, header, std::io::BufWriter::new(std::fs::File::create(&csv_path)?))?;
    let json_path = dir.join(format!("{stem}_summary.json"));
    let mut json = serde_json::to_string_pretty(&summarize(experiment, records))?;
    json.push('\n');
    std::fs::write(&json_path, json)?;
    Ok(vec![csv_path, json_path])
}
