//! The metrics CSV.
//!
//! Header: `epoch,step,split,loss,acc,grad_l2_total,grad_max_total,wall_ms`,
//! followed by `<param>.grad_l2,<param>.grad_max` pairs when layer tracing is
//! on. Rows, by `split`:
//!
//! - `test` at epoch 0, step 0: evaluation before any training.
//! - `batch`: the training batch just stepped on, every `log_every` steps.
//!   Only these rows carry gradient columns; gradients are the raw backprop
//!   gradients, before GC.
//! - `train`: mean loss and accuracy over the epoch's batches, at epoch end.
//! - `test`: held-out evaluation at epoch end.
//! - `aborted`: the step whose loss was not finite; nothing follows it.
//!
//! `epoch` is 1-based for rows written during or after training, and `step`
//! counts optimizer steps taken. Floats use the shortest representation that
//! round-trips; `wall_ms` is 0 unless timing was requested.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{BenchError, Result};

pub const BASE_COLUMNS: [&str; 8] = [
    "epoch",
    "step",
    "split",
    "loss",
    "acc",
    "grad_l2_total",
    "grad_max_total",
    "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Batch,
    Train,
    Test,
    Aborted,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Batch => "batch",
            Split::Train => "train",
            Split::Test => "test",
            Split::Aborted => "aborted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "batch" => Split::Batch,
            "train" => Split::Train,
            "test" => Split::Test,
            "aborted" => Split::Aborted,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub epoch: u32,
    pub step: u64,
    pub split: Split,
    pub loss: f64,
    pub acc: f64,
    pub grad_l2: Option<f64>,
    pub grad_max: Option<f64>,
    pub wall_ms: u64,
    /// `(l2, max)` per traced parameter; empty on rows without gradients.
    pub layers: Vec<(f64, f64)>,
}

impl Record {
    pub fn eval(epoch: u32, step: u64, split: Split, loss: f64, acc: f64) -> Self {
        Record {
            epoch,
            step,
            split,
            loss,
            acc,
            grad_l2: None,
            grad_max: None,
            wall_ms: 0,
            layers: Vec::new(),
        }
    }
}

pub fn header(layer_names: &[String]) -> Vec<String> {
    let mut h: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    for name in layer_names {
        h.push(format!("{name}.grad_l2"));
        h.push(format!("{name}.grad_max"));
    }
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn format_record(r: &Record, layer_count: usize) -> String {
    let mut fields = vec![
        r.epoch.to_string(),
        r.step.to_string(),
        r.split.as_str().to_string(),
        r.loss.to_string(),
        r.acc.to_string(),
        opt(r.grad_l2),
        opt(r.grad_max),
        r.wall_ms.to_string(),
    ];
    for i in 0..layer_count {
        match r.layers.get(i) {
            Some((l2, mx)) => {
                fields.push(l2.to_string());
                fields.push(mx.to_string());
            }
            None => fields.extend([String::new(), String::new()]),
        }
    }
    fields.join(",")
}

pub struct MetricsWriter {
    out: BufWriter<fs::File>,
    path: std::path::PathBuf,
    layer_count: usize,
}

impl MetricsWriter {
    pub fn create(path: &Path, layer_names: &[String]) -> Result<Self> {
        let file = fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
        let mut w = MetricsWriter {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
            layer_count: layer_names.len(),
        };
        w.line(&header(layer_names).join(","))?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| BenchError::io(&self.path, e))
    }

    pub fn write(&mut self, r: &Record) -> Result<()> {
        let s = format_record(r, self.layer_count);
        self.line(&s)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| BenchError::io(&self.path, e))
    }
}

/// A parsed metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub header: Vec<String>,
    pub records: Vec<Record>,
}

impl MetricsTable {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
        Self::parse(path, &bytes)
    }

    pub fn parse(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| BenchError::parse(path, 0, e.to_string()))?
            .iter()
            .map(String::from)
            .collect();
        if header.len() < BASE_COLUMNS.len()
            || header[..BASE_COLUMNS.len()] != BASE_COLUMNS
            || !(header.len() - BASE_COLUMNS.len()).is_multiple_of(2)
        {
            return Err(BenchError::parse(path, 0, "not a metrics header"));
        }
        let layer_count = (header.len() - BASE_COLUMNS.len()) / 2;
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| BenchError::parse(path, e.position().map_or(0, |p| p.byte()), e.to_string()))?;
            let at = row.position().map_or(0, |p| p.byte());
            let bad = |what: &str| BenchError::parse(path, at, format!("bad {what}"));
            let num = |i: usize| -> Result<Option<f64>> {
                let s = &row[i];
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(&header[i]))
                }
            };
            let mut layers = Vec::new();
            for l in 0..layer_count {
                let i = BASE_COLUMNS.len() + 2 * l;
                if let (Some(a), Some(b)) = (num(i)?, num(i + 1)?) {
                    layers.push((a, b));
                }
            }
            records.push(Record {
                epoch: row[0].parse().map_err(|_| bad("epoch"))?,
                step: row[1].parse().map_err(|_| bad("step"))?,
                split: Split::parse(&row[2]).ok_or_else(|| bad("split"))?,
                loss: num(3)?.ok_or_else(|| bad("loss"))?,
                acc: num(4)?.ok_or_else(|| bad("acc"))?,
                grad_l2: num(5)?,
                grad_max: num(6)?,
                wall_ms: row[7].parse().map_err(|_| bad("wall_ms"))?,
                layers,
            });
        }
        Ok(MetricsTable { header, records })
    }

    pub fn aborted(&self) -> bool {
        self.records.iter().any(|r| r.split == Split::Aborted)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == split)
    }
}
