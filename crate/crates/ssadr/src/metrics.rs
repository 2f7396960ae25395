//! Append-only metrics stream: one JSON record per line, a schema-version
//! header first, timesteps non-decreasing throughout. Plain text so runs
//! diff cleanly and byte-identical reruns are checkable with `cmp`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::envs::EnvKind;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Which environment an evaluation ran on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalEnv {
    /// Reference parameters.
    Default,
    /// Out-of-distribution hard parameters.
    Hard,
    /// User-supplied explicit parameters (checkpoint evaluation).
    Explicit,
}

/// One evaluation summary.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EvalRecord {
    /// Solver environment steps consumed when the evaluation ran.
    pub timestep: u64,
    /// The scheduled evaluation mark this record fulfils (aligned across
    /// seeds and regimes).
    pub mark: u64,
    pub eval_env: EvalEnv,
    pub mean_final_distance: f64,
    /// Per-episode final distances.
    pub distances: Vec<f64>,
    pub seed: u64,
    pub algo: String,
}

/// A single line of the metrics stream.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Header {
        version: u32,
        algo: String,
        env: EnvKind,
        seed: u64,
        range: String,
    },
    Eval(EvalRecord),
    Selfplay {
        timestep: u64,
        t_a: u32,
        t_b: u32,
        r_a: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        particle: Option<usize>,
    },
    Sample {
        timestep: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        particle: Option<usize>,
        /// Normalized coordinates in [0, 1].
        xi: Vec<f64>,
        /// The same point in physical units.
        physical: Vec<f64>,
    },
    Loss {
        timestep: u64,
        name: String,
        value: f64,
    },
}

impl Record {
    pub fn timestep(&self) -> Option<u64> {
        match self {
            Record::Header { .. } => None,
            Record::Eval(e) => Some(e.timestep),
            Record::Selfplay { timestep, .. }
            | Record::Sample { timestep, .. }
            | Record::Loss { timestep, .. } => Some(*timestep),
        }
    }
}

/// Streaming writer enforcing the header-first and non-decreasing-timestep
/// invariants.
pub struct MetricsWriter {
    out: BufWriter<File>,
    path: PathBuf,
    last_timestep: u64,
    wrote_header: bool,
}

impl MetricsWriter {
    /// Create (truncating) `path` and write the header line.
    pub fn create(
        path: &Path,
        algo: &str,
        env: EnvKind,
        seed: u64,
        range: &str,
    ) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
            last_timestep: 0,
            wrote_header: false,
        };
        writer.write(&Record::Header {
            version: SCHEMA_VERSION,
            algo: algo.to_string(),
            env,
            seed,
            range: range.to_string(),
        })?;
        Ok(writer)
    }

    pub fn write(&mut self, record: &Record) -> Result<()> {
        match record {
            Record::Header { .. } => {
                if self.wrote_header {
                    return Err(Error::Usage("metrics header written twice".into()));
                }
                self.wrote_header = true;
            }
            other => {
                let t = other.timestep().unwrap_or(0);
                if t < self.last_timestep {
                    return Err(Error::Usage(format!(
                        "metrics timestep went backwards: {t} after {}",
                        self.last_timestep
                    )));
                }
                self.last_timestep = t;
            }
        }
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Usage(format!("unserializable metrics record: {e}")))?;
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Parse a whole metrics file; a malformed line fails with its 1-based
/// line number.
pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::Metrics {
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// The header of a metrics file, verified to be the first record.
pub fn header_of(records: &[Record]) -> Result<(String, EnvKind, u64, String)> {
    match records.first() {
        Some(Record::Header {
            version,
            algo,
            env,
            seed,
            range,
        }) => {
            if *version != SCHEMA_VERSION {
                return Err(Error::Metrics {
                    line: 1,
                    message: format!("unsupported schema version {version}"),
                });
            }
            Ok((algo.clone(), *env, *seed, range.clone()))
        }
        _ => Err(Error::Metrics {
            line: 1,
            message: "missing header record".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("ssadr-metrics-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_and_header() {
        let path = tmp("roundtrip.jsonl");
        let mut w =
            MetricsWriter::create(&path, "ssadr", EnvKind::Pusher, 7, "calibrated").unwrap();
        w.write(&Record::Selfplay {
            timestep: 10,
            t_a: 3,
            t_b: 20,
            r_a: 3.4,
            particle: Some(2),
        })
        .unwrap();
        w.write(&Record::Loss {
            timestep: 10,
            name: "critic_loss".into(),
            value: 0.25,
        })
        .unwrap();
        w.finish().unwrap();
        let records = read_records(&path).unwrap();
        assert_eq!(records.len(), 3);
        let (algo, env, seed, range) = header_of(&records).unwrap();
        assert_eq!((algo.as_str(), env, seed, range.as_str()), ("ssadr", EnvKind::Pusher, 7, "calibrated"));
    }

    #[test]
    fn rejects_backwards_timesteps() {
        let path = tmp("backwards.jsonl");
        let mut w = MetricsWriter::create(&path, "udr", EnvKind::Pusher, 0, "calibrated").unwrap();
        w.write(&Record::Loss {
            timestep: 100,
            name: "x".into(),
            value: 0.0,
        })
        .unwrap();
        let err = w
            .write(&Record::Loss {
                timestep: 99,
                name: "x".into(),
                value: 0.0,
            })
            .unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn corrupted_line_reports_line_number() {
        let path = tmp("corrupt.jsonl");
        std::fs::write(
            &path,
            "{\"kind\":\"header\",\"version\":1,\"algo\":\"udr\",\"env\":\"pusher\",\"seed\":0,\"range\":\"calibrated\"}\nnot json\n",
        )
        .unwrap();
        match read_records(&path) {
            Err(Error::Metrics { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected metrics error, got {other:?}"),
        }
    }

    #[test]
    fn equal_timesteps_allowed() {
        let path = tmp("equal.jsonl");
        let mut w = MetricsWriter::create(&path, "udr", EnvKind::Pusher, 0, "calibrated").unwrap();
        for _ in 0..3 {
            w.write(&Record::Loss {
                timestep: 5,
                name: "x".into(),
                value: 1.0,
            })
            .unwrap();
        }
        w.finish().unwrap();
        assert_eq!(read_records(&path).unwrap().len(), 4);
    }
}
