//! File formats: JSONL impressions, world files, score tables and JSON
//! reports.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use slate_ope_core::simulator::SimContext;
use slate_ope_core::{
    CascadeMode, CascadeRecovery, Context, Dataset, DatasetBuilder, LoggedImpression, ScoreTable,
    SimWorld,
};

use crate::error::{AppError, Result};

/// Reads one impression per line. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn read_jsonl(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut builder = DatasetBuilder::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AppError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| AppError::Jsonl {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let record: LoggedImpression =
            serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        builder.push(&record).map_err(|e| err(e.to_string()))?;
    }
    Ok(builder.build()?)
}

pub fn write_jsonl(path: &Path, dataset: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for imp in dataset.impressions() {
        let line =
            serde_json::to_string(&imp.to_owned_impression()).map_err(|e| AppError::Json {
                path: path.to_path_buf(),
                source: e,
            })?;
        writeln!(out, "{line}").map_err(|e| AppError::io(path, e))?;
    }
    out.flush().map_err(|e| AppError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSpec {
    #[serde(flatten)]
    pub mode: CascadeMode,
    #[serde(default)]
    pub recovery: CascadeRecovery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldContext {
    pub id: String,
    pub true_rewards: BTreeMap<String, f64>,
}

/// On-disk world. Candidates of a context are ordered by identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFile {
    pub contexts: Vec<WorldContext>,
    pub cascade: CascadeSpec,
    pub seed: u64,
}

impl WorldFile {
    pub fn from_world(world: &SimWorld) -> Self {
        let contexts = world
            .contexts()
            .iter()
            .map(|c| WorldContext {
                id: c.context.id.clone(),
                true_rewards: c
                    .context
                    .candidates
                    .iter()
                    .cloned()
                    .zip(c.true_rewards.iter().copied())
                    .collect(),
            })
            .collect();
        Self {
            contexts,
            cascade: CascadeSpec {
                mode: world.cascade(),
                recovery: world.recovery(),
            },
            seed: world.seed(),
        }
    }

    pub fn into_world(self) -> Result<SimWorld> {
        let contexts = self
            .contexts
            .into_iter()
            .map(|c| {
                let (candidates, true_rewards) = c.true_rewards.into_iter().unzip();
                SimContext {
                    context: Context::new(c.id, candidates),
                    true_rewards,
                }
            })
            .collect();
        Ok(SimWorld::from_parts(
            contexts,
            self.cascade.mode,
            self.cascade.recovery,
            self.seed,
        )?)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| AppError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| AppError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    writeln!(out).map_err(|e| AppError::io(path, e))?;
    out.flush().map_err(|e| AppError::io(path, e))
}

pub fn read_world(path: &Path) -> Result<SimWorld> {
    read_json::<WorldFile>(path)?.into_world()
}

pub fn write_world(path: &Path, world: &SimWorld) -> Result<()> {
    write_json(path, &WorldFile::from_world(world))
}

/// Score table as `{context_id: {candidate: score}}`.
pub fn read_scores(path: &Path) -> Result<ScoreTable> {
    read_json(path)
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| AppError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use slate_ope_core::policies::UniformRandomPolicy;

    #[test]
    fn world_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let world = SimWorld::generate(3, 12, CascadeMode::Probabilistic { rho: 0.7 }, 5)
            .unwrap()
            .with_recovery(CascadeRecovery::OneStep);
        let path = dir.path().join("world.json");
        write_world(&path, &world).unwrap();
        assert_eq!(read_world(&path).unwrap(), world);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"mode\": \"probabilistic\""));
        assert!(text.contains("\"recovery\": \"one_step\""));
    }

    #[test]
    fn jsonl_round_trip_and_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let world = SimWorld::generate(2, 4, CascadeMode::Hard, 1).unwrap();
        let ds = world
            .log_impressions(&UniformRandomPolicy, 3, 20, 2)
            .unwrap();
        let path = dir.path().join("logs.jsonl");
        write_jsonl(&path, &ds).unwrap();
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back.len(), 20);
        for (a, b) in ds.impressions().zip(back.impressions()) {
            assert_eq!(a.to_owned_impression(), b.to_owned_impression());
        }

        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"context_id\": \"x\"\n");
        std::fs::write(&path, text).unwrap();
        match read_jsonl(&path).unwrap_err() {
            AppError::Jsonl { line, .. } => assert_eq!(line, 21),
            e => panic!("unexpected {e:?}"),
        }
    }
}
