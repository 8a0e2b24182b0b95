//! On-disk formats. Every writer goes through [`write_atomic`], so a reader
//! never sees a half-written file.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use surro_accel_core::callcenter::{EpochRecord, Trajectory};
use surro_accel_core::dqn::{CurveEntry, LearningCurve};
use surro_accel_core::neural::{Mlp, WeightDocument};
use surro_accel_core::surrogate::{SurrogateDocument, SurrogateModel};

use crate::{AppError, Result};

/// Writes to a temporary sibling, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(AppError::io(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(AppError::io(&tmp))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(AppError::io(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(AppError::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value).map_err(AppError::runtime)?;
    text.push(b'\n');
    write_atomic(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(AppError::io(path))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| AppError::Validation(format!("{}: {}: {}", path.display(), e.path(), e.inner())))
}

/// One JSON object per recorded epoch; replications are consecutive blocks.
pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut out = Vec::new();
    for r in trajectories.iter().flat_map(|t| &t.records) {
        serde_json::to_writer(&mut out, r).map_err(AppError::runtime)?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let file = fs::File::open(path).map_err(AppError::io(path))?;
    let mut out: Vec<Trajectory> = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(AppError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EpochRecord = serde_json::from_str(&line)
            .map_err(|e| AppError::Validation(format!("{} line {}: {e}", path.display(), n + 1)))?;
        match out.last_mut() {
            Some(t) if t.replication == record.replication => {
                t.total_reward += record.reward;
                t.records.push(record);
            }
            _ => out.push(Trajectory {
                replication: record.replication,
                total_reward: record.reward,
                records: vec![record],
            }),
        }
    }
    Ok(out)
}

pub fn write_curve(path: &Path, curve: &LearningCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if curve.entries.is_empty() {
        w.write_record([
            "episode",
            "total_reward",
            "cumulative_sim_replications",
            "cumulative_surrogate_replications",
            "phase",
        ])
        .map_err(AppError::runtime)?;
    }
    for e in &curve.entries {
        w.serialize(e).map_err(AppError::runtime)?;
    }
    let bytes = w.into_inner().map_err(AppError::runtime)?;
    write_atomic(path, &bytes)
}

pub fn read_curve(path: &Path) -> Result<LearningCurve> {
    let mut r = csv::Reader::from_path(path).map_err(|e| AppError::Validation(format!("{}: {e}", path.display())))?;
    let entries = r
        .deserialize::<CurveEntry>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| AppError::Validation(format!("{}: {e}", path.display())))?;
    Ok(LearningCurve { entries })
}

pub fn write_weights(path: &Path, net: &Mlp) -> Result<()> {
    write_json(path, &net.to_document())
}

pub fn read_weights(path: &Path) -> Result<Mlp> {
    let doc: WeightDocument = read_json(path)?;
    Mlp::from_document(&doc).map_err(|e| AppError::Validation(format!("{}: {e}", path.display())))
}

pub fn write_surrogate(path: &Path, model: &SurrogateModel) -> Result<()> {
    write_json(path, &model.to_document())
}

pub fn read_surrogate(path: &Path) -> Result<SurrogateModel> {
    let doc: SurrogateDocument = read_json(path)?;
    SurrogateModel::from_document(&doc).map_err(|e| AppError::Validation(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use surro_accel_core::callcenter::{run_replication, ActionVector, CallCenterConfig, RewardSpec};
    use surro_accel_core::dqn::Phase;
    use surro_accel_core::stochastic::RngStream;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn trajectories_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let config = CallCenterConfig::default();
        let ts: Vec<Trajectory> = (0..3)
            .map(|k| {
                let mut s = RngStream::new(7, k);
                run_replication(&config, &RewardSpec::original(), |_| ActionVector::all_front_office(4), &mut s)
                    .unwrap()
                    .0
            })
            .collect();
        let p = dir.path().join("t.jsonl");
        write_trajectories(&p, &ts).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 48);
        let back = read_trajectories(&p).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in back.iter().zip(&ts) {
            assert_eq!(a.records, b.records);
            assert!((a.total_reward - b.total_reward).abs() < 1e-9);
        }
    }

    #[test]
    fn curve_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let curve = LearningCurve {
            entries: vec![
                CurveEntry {
                    episode: 0,
                    total_reward: -12.5,
                    cumulative_sim_replications: 0,
                    cumulative_surrogate_replications: 1,
                    phase: Phase::Pretrain,
                },
                CurveEntry {
                    episode: 1,
                    total_reward: 0.1 + 0.2,
                    cumulative_sim_replications: 1,
                    cumulative_surrogate_replications: 1,
                    phase: Phase::Finetune,
                },
            ],
        };
        let p = dir.path().join("c.csv");
        write_curve(&p, &curve).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "episode,total_reward,cumulative_sim_replications,cumulative_surrogate_replications,phase"
        );
        assert!(text.contains(",pretrain\n"));
        assert_eq!(read_curve(&p).unwrap(), curve);
        write_curve(&p, &LearningCurve::default()).unwrap();
        assert!(read_curve(&p).unwrap().is_empty());
    }

    #[test]
    fn weights_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let net = Mlp::new(&[7, 32, 32, 16], 0.0, &mut RngStream::new(1, 1)).unwrap();
        let p = dir.path().join("w.json");
        write_weights(&p, &net).unwrap();
        assert_eq!(read_weights(&p).unwrap(), net);
    }

    #[test]
    fn malformed_json_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.json");
        fs::write(&p, r#"{"format_version": 1, "layer_dims": "x"}"#).unwrap();
        let e = read_weights(&p).unwrap_err().to_string();
        assert!(e.contains("layer_dims"), "{e}");
    }
}
