//! Append-only CSV log of every sample, and replay from it on resume.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use brine_mlmc::mlmc::{CoupledSample, LevelSampler, OutputBlock, PdeSampler, SampleCost};
use brine_mlmc::params::SamplePoint;
use brine_mlmc::Error;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub command: String,
    pub level: usize,
    pub sample: usize,
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    /// Empty on rows that only carry cost or status.
    pub qoi: String,
    pub time: f64,
    /// `fine` or `coarse`.
    pub role: String,
    pub value: f64,
    pub wall_seconds: f64,
    pub work: f64,
    /// `ok` or `failed: <reason>`.
    pub status: String,
}

/// One row of a per-sample field file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FieldRow {
    qoi: String,
    time: f64,
    role: String,
    slot: usize,
    value: f64,
}

type Key = (usize, usize, [u64; 3]);

fn key(level: usize, index: usize, xi: &[f64; 3]) -> Key {
    (level, index, xi.map(f64::to_bits))
}

#[derive(Debug, Clone)]
enum Logged {
    Done(CoupledSample),
    Failed(String),
}

pub struct ResultsLog {
    path: PathBuf,
    fields: PathBuf,
    writer: Mutex<csv::Writer<File>>,
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

pub fn read_rows(path: &Path) -> Result<Vec<LogRow>, CliError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| io(path, e))?;
    r.deserialize().collect::<Result<Vec<LogRow>, _>>().map_err(|e| io(path, e))
}

impl ResultsLog {
    /// Open `out/results.csv`, first dropping the rows of every tag in `fresh`.
    pub fn open(out: &Path, fresh: &[&str]) -> Result<Self, CliError> {
        fs::create_dir_all(out).map_err(|e| io(out, e))?;
        let path = out.join("results.csv");
        let fields = out.join("fields");
        if !fresh.is_empty() && path.exists() {
            let keep: Vec<LogRow> = read_rows(&path)?.into_iter().filter(|r| !fresh.contains(&r.command.as_str())).collect();
            let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
            if keep.is_empty() {
                w.write_record(HEADER).map_err(|e| io(&path, e))?;
            }
            for r in &keep {
                w.serialize(r).map_err(|e| io(&path, e))?;
            }
            w.flush().map_err(|e| io(&path, e))?;
        }
        for tag in fresh {
            let dir = fields.join(tag);
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(|e| io(&dir, e))?;
            }
        }
        let is_new = !path.exists() || fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| io(&path, e))?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if is_new {
            writer.write_record(HEADER).map_err(|e| io(&path, e))?;
            writer.flush().map_err(|e| io(&path, e))?;
        }
        Ok(ResultsLog { path, fields, writer: Mutex::new(writer) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Wrap `inner` so that samples logged under `tag` are replayed and new ones appended.
    pub fn sampler<'s>(&'s self, inner: &'s PdeSampler<'s>, tag: &str) -> Result<LoggedSampler<'s>, CliError> {
        let rows: Vec<LogRow> = read_rows(&self.path)?.into_iter().filter(|r| r.command == tag).collect();
        let mut cache = HashMap::new();
        let mut groups: HashMap<Key, Vec<&LogRow>> = HashMap::new();
        for r in &rows {
            groups.entry(key(r.level, r.sample, &[r.xi1, r.xi2, r.xi3])).or_default().push(r);
        }
        for (k, group) in groups {
            if let Some(f) = group.iter().find(|r| r.status != "ok") {
                let reason = f.status.strip_prefix("failed: ").unwrap_or(&f.status).to_string();
                cache.insert(k, Logged::Failed(reason));
                continue;
            }
            if let Some(sample) = self.rebuild(inner, tag, k, &group)? {
                cache.insert(k, Logged::Done(sample));
            }
        }
        Ok(LoggedSampler { inner, log: self, tag: tag.to_string(), cache })
    }

    fn field_path(&self, tag: &str, level: usize, index: usize) -> PathBuf {
        self.fields.join(tag).join(format!("l{level}_i{index}.csv"))
    }

    /// Reassemble a logged sample; `None` if any value is missing.
    fn rebuild(&self, inner: &PdeSampler<'_>, tag: &str, k: Key, rows: &[&LogRow]) -> Result<Option<CoupledSample>, CliError> {
        let (level, index, _) = k;
        let has_coarse = rows.iter().any(|r| r.role == "coarse");
        let n = inner.num_outputs();
        let mut values = [vec![f64::NAN; n], vec![f64::NAN; n]];
        let mut cost = SampleCost::default();
        for r in rows {
            let role = usize::from(r.role == "coarse");
            cost.wall[role] = r.wall_seconds;
            cost.work[role] = r.work;
            if r.qoi.is_empty() {
                continue;
            }
            if let Some(b) = inner.block(&r.qoi, r.time) {
                values[role][b.offset] = r.value;
            }
        }
        if inner.layout().iter().any(|b| b.len > 1) {
            let path = self.field_path(tag, level, index);
            if !path.exists() {
                return Ok(None);
            }
            let mut rd = csv::Reader::from_path(&path).map_err(|e| io(&path, e))?;
            for row in rd.deserialize::<FieldRow>() {
                let row = row.map_err(|e| io(&path, e))?;
                if let Some(b) = inner.block(&row.qoi, row.time) {
                    if row.slot < b.len {
                        values[usize::from(row.role == "coarse")][b.offset + row.slot] = row.value;
                    }
                }
            }
        }
        let [fine, coarse] = values;
        let complete = |v: &[f64]| v.iter().all(|x| !x.is_nan());
        if !complete(&fine) || (has_coarse && !complete(&coarse)) {
            return Ok(None);
        }
        let coarse = has_coarse.then_some(coarse);
        Ok(Some(CoupledSample { fine, coarse, cost }))
    }

    fn append(&self, tag: &str, level: usize, index: usize, point: &SamplePoint, layout: &[OutputBlock], result: &Result<CoupledSample, Error>) -> Result<(), CliError> {
        let base = |role: &str, qoi: &str, time: f64, value: f64, wall: f64, work: f64, status: &str| LogRow {
            command: tag.to_string(),
            level,
            sample: index,
            xi1: point.xi[0],
            xi2: point.xi[1],
            xi3: point.xi[2],
            qoi: qoi.to_string(),
            time,
            role: role.to_string(),
            value,
            wall_seconds: wall,
            work,
            status: status.to_string(),
        };
        let mut rows = Vec::new();
        let mut field_rows = Vec::new();
        match result {
            Ok(s) => {
                let roles: Vec<(usize, &str, &Vec<f64>)> = std::iter::once((0, "fine", &s.fine))
                    .chain(s.coarse.as_ref().map(|c| (1, "coarse", c)))
                    .collect();
                for (r, role, v) in roles {
                    let (wall, work) = (s.cost.wall[r], s.cost.work[r]);
                    rows.push(base(role, "", 0.0, f64::NAN, wall, work, "ok"));
                    for b in layout {
                        if b.len == 1 {
                            rows.push(base(role, &b.id, b.time, v[b.offset], wall, work, "ok"));
                        } else {
                            for slot in 0..b.len {
                                field_rows.push(FieldRow {
                                    qoi: b.id.clone(),
                                    time: b.time,
                                    role: role.to_string(),
                                    slot,
                                    value: v[b.offset + slot],
                                });
                            }
                        }
                    }
                }
            }
            Err(e) => {
                let msg = e.to_string().replace(['\n', '\r'], " ");
                rows.push(base("fine", "", 0.0, f64::NAN, 0.0, 0.0, &format!("failed: {msg}")));
            }
        }
        if !field_rows.is_empty() {
            let path = self.field_path(tag, level, index);
            fs::create_dir_all(path.parent().unwrap()).map_err(|e| io(&path, e))?;
            let tmp = path.with_extension("tmp");
            let mut w = csv::Writer::from_path(&tmp).map_err(|e| io(&tmp, e))?;
            for r in &field_rows {
                w.serialize(r).map_err(|e| io(&tmp, e))?;
            }
            w.flush().map_err(|e| io(&tmp, e))?;
            fs::rename(&tmp, &path).map_err(|e| io(&path, e))?;
        }
        let mut w = self.writer.lock().unwrap();
        for r in &rows {
            w.serialize(r).map_err(|e| io(&self.path, e))?;
        }
        w.flush().map_err(|e| io(&self.path, e))?;
        Ok(())
    }
}

const HEADER: [&str; 13] =
    ["command", "level", "sample", "xi1", "xi2", "xi3", "qoi", "time", "role", "value", "wall_seconds", "work", "status"];

/// A [`PdeSampler`] that logs every draw and replays draws already in the log.
pub struct LoggedSampler<'s> {
    inner: &'s PdeSampler<'s>,
    log: &'s ResultsLog,
    tag: String,
    cache: HashMap<Key, Logged>,
}

impl LoggedSampler<'_> {
    /// Draws read back from the log.
    pub fn replayed(&self) -> usize {
        self.cache.len()
    }
}

impl LevelSampler for LoggedSampler<'_> {
    fn num_outputs(&self) -> usize {
        self.inner.num_outputs()
    }

    fn max_level(&self) -> usize {
        self.inner.max_level()
    }

    fn sample(&self, level: usize, point: &SamplePoint, coupled: bool) -> brine_mlmc::Result<CoupledSample> {
        let index = point.provenance.map_or(0, |p| p.index);
        match self.cache.get(&key(level, index, &point.xi)) {
            Some(Logged::Done(s)) if s.coarse.is_some() == (coupled && level > 0) => return Ok(s.clone()),
            Some(Logged::Failed(reason)) => return Err(Error::Replayed(reason.clone())),
            _ => {}
        }
        let result = self.inner.sample(level, point, coupled);
        let numerical = result.as_ref().err().is_none_or(|e| e.is_numerical());
        if numerical {
            self.log
                .append(&self.tag, level, index, point, self.inner.layout(), &result)
                .map_err(|e| Error::Invalid(e.to_string()))?;
        }
        result
    }
}
