//! Dataset persistence: JSON-lines sample files and JSON run manifests.
//!
//! A dataset file is one header object followed by one object per sample.
//! Floats round-trip exactly through serde_json's shortest-representation
//! printing, so save then load reproduces every sample bit for bit.

use super::{Dataset, Sample, Standardization};
use crate::error::Error;
use crate::ocp::{SystemId, Trajectory};
use crate::DVec;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    system: SystemId,
    n_nodes: usize,
    count: usize,
    config_hash: String,
    standardization: Option<Standardization>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    params: Vec<f64>,
    t_f: f64,
    states: Vec<Vec<f64>>,
    controls: Vec<Vec<f64>>,
    objective: f64,
    winding: i64,
    kkt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sphere_multipliers: Option<Vec<f64>>,
}

impl From<&Sample> for SampleRecord {
    fn from(s: &Sample) -> Self {
        SampleRecord {
            params: s.params.iter().copied().collect(),
            t_f: s.trajectory.t_f,
            states: s.trajectory.states.iter().map(|x| x.iter().copied().collect()).collect(),
            controls: s.trajectory.controls.iter().map(|u| u.iter().copied().collect()).collect(),
            objective: s.objective,
            winding: s.winding,
            kkt: s.kkt_residual,
            sphere_multipliers: s
                .sphere_multipliers
                .as_ref()
                .map(|m| m.iter().copied().collect()),
        }
    }
}

impl From<SampleRecord> for Sample {
    fn from(r: SampleRecord) -> Self {
        Sample {
            params: DVec::from_vec(r.params),
            trajectory: Trajectory {
                t_f: r.t_f,
                states: r.states.into_iter().map(DVec::from_vec).collect(),
                controls: r.controls.into_iter().map(DVec::from_vec).collect(),
            },
            objective: r.objective,
            winding: r.winding,
            kkt_residual: r.kkt,
            sphere_multipliers: r.sphere_multipliers.map(DVec::from_vec),
        }
    }
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn guard_overwrite(path: &Path, overwrite: bool) -> Result<(), Error> {
    if !overwrite && path.exists() {
        return Err(Error::WouldOverwrite(path_str(path)));
    }
    Ok(())
}

/// Write a dataset as JSON lines: header first, then one line per sample.
pub fn save_dataset(ds: &Dataset, path: &Path, overwrite: bool) -> Result<(), Error> {
    guard_overwrite(path, overwrite)?;
    let file = File::create(path).map_err(|e| Error::io(path_str(path), e))?;
    let mut w = BufWriter::new(file);
    let header = Header {
        version: FORMAT_VERSION,
        system: ds.system,
        n_nodes: ds.n_nodes,
        count: ds.samples.len(),
        config_hash: ds.config_hash.clone(),
        standardization: ds.standardization.clone(),
    };
    let mut emit = |value: String| -> Result<(), Error> {
        writeln!(w, "{value}").map_err(|e| Error::io(path_str(path), e))
    };
    emit(serde_json::to_string(&header).expect("header serializes"))?;
    for s in &ds.samples {
        emit(serde_json::to_string(&SampleRecord::from(s)).expect("sample serializes"))?;
    }
    w.flush().map_err(|e| Error::io(path_str(path), e))
}

/// Read a dataset back, verifying version, system, and sample count.
pub fn load_dataset(path: &Path, expect_system: Option<SystemId>) -> Result<Dataset, Error> {
    let file = File::open(path).map_err(|e| Error::io(path_str(path), e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let bad = |what: &'static str, line: usize, detail: String| Error::Format {
        what,
        path: path_str(path),
        detail: format!("line {}: {}", line + 1, detail),
    };

    let (_, first) = lines
        .next()
        .ok_or_else(|| bad("dataset header", 0, "file is empty".into()))?;
    let first = first.map_err(|e| Error::io(path_str(path), e))?;
    let header: Header =
        serde_json::from_str(&first).map_err(|e| bad("dataset header", 0, e.to_string()))?;
    if header.version != FORMAT_VERSION {
        return Err(bad(
            "dataset header",
            0,
            format!("version {} (this build reads {})", header.version, FORMAT_VERSION),
        ));
    }
    if let Some(sys) = expect_system {
        if header.system != sys {
            return Err(bad(
                "dataset header",
                0,
                format!("system {} where {} was expected", header.system.name(), sys.name()),
            ));
        }
    }

    let mut ds = Dataset::new(header.system, header.n_nodes);
    ds.config_hash = header.config_hash;
    ds.standardization = header.standardization;
    for (line_no, line) in lines {
        let line = line.map_err(|e| Error::io(path_str(path), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord =
            serde_json::from_str(&line).map_err(|e| bad("dataset sample", line_no, e.to_string()))?;
        let s = Sample::from(rec);
        if s.trajectory.states.len() != ds.n_nodes + 1
            || s.trajectory.controls.len() != ds.n_nodes
        {
            return Err(bad(
                "dataset sample",
                line_no,
                format!(
                    "{} states / {} controls do not fit {} nodes",
                    s.trajectory.states.len(),
                    s.trajectory.controls.len(),
                    ds.n_nodes
                ),
            ));
        }
        ds.samples.push(s);
    }
    if ds.samples.len() != header.count {
        return Err(Error::Format {
            what: "dataset",
            path: path_str(path),
            detail: format!(
                "header promises {} samples, file holds {}",
                header.count,
                ds.samples.len()
            ),
        });
    }
    Ok(ds)
}

/// Sidecar describing how a dataset was produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub system: SystemId,
    pub n_nodes: usize,
    pub count: usize,
    pub config: super::gen::GenerationConfig,
    pub report: super::gen::GenerationReport,
    pub config_hash: String,
}

pub fn save_manifest(m: &Manifest, path: &Path, overwrite: bool) -> Result<(), Error> {
    guard_overwrite(path, overwrite)?;
    let text = serde_json::to_string_pretty(m).expect("manifest serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path_str(path), e))
}

pub fn load_manifest(path: &Path) -> Result<Manifest, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path_str(path), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        what: "manifest",
        path: path_str(path),
        detail: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gen::{
        bootstrap_solve, sample_parameters, GenerationConfig, GenerationReport, ParamMode,
    };
    use crate::sqp::SolverConfig;

    fn small_dataset() -> Dataset {
        let params = sample_parameters(SystemId::Pendulum, &ParamMode::Random { count: 5 }, 3);
        let solved =
            bootstrap_solve(SystemId::Pendulum, 24, &params, 6, &SolverConfig::default(), 3);
        let mut ds = Dataset::new(SystemId::Pendulum, 24);
        for s in solved.into_iter().flatten() {
            ds.samples.push(s);
        }
        assert!(ds.len() >= 3);
        ds.config_hash = "test-hash".into();
        ds
    }

    #[test]
    fn save_then_load_reproduces_every_bit() {
        let mut ds = small_dataset();
        let (train, _) = ds.split(0.8, 0);
        ds.standardization = train.standardization;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pendulum.jsonl");
        save_dataset(&ds, &path, false).unwrap();
        let back = load_dataset(&path, Some(SystemId::Pendulum)).unwrap();
        assert_eq!(back.system, ds.system);
        assert_eq!(back.n_nodes, ds.n_nodes);
        assert_eq!(back.config_hash, ds.config_hash);
        assert_eq!(back.len(), ds.len());
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            assert_eq!(a.params, b.params);
            assert_eq!(a.trajectory.pack(), b.trajectory.pack());
            assert_eq!(a.objective.to_bits(), b.objective.to_bits());
            assert_eq!(a.winding, b.winding);
            assert_eq!(a.kkt_residual.to_bits(), b.kkt_residual.to_bits());
        }
        let (sa, sb) = (
            ds.standardization.as_ref().unwrap(),
            back.standardization.as_ref().unwrap(),
        );
        assert_eq!(sa.param_mean, sb.param_mean);
        assert_eq!(sa.target_std, sb.target_std);
    }

    #[test]
    fn refuses_to_overwrite_without_permission() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        save_dataset(&ds, &path, false).unwrap();
        let err = save_dataset(&ds, &path, false).unwrap_err();
        assert!(matches!(err, Error::WouldOverwrite(_)));
        save_dataset(&ds, &path, true).unwrap();
    }

    #[test]
    fn corrupt_sample_line_is_reported_by_number() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        save_dataset(&ds, &path, false).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        let cut = text.lines().take(2).map(|l| l.len()).sum::<usize>() + 2 + 10;
        text.truncate(cut);
        std::fs::write(&path, text).unwrap();
        let err = load_dataset(&path, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "unexpected error text: {msg}");
    }

    #[test]
    fn version_and_system_mismatches_are_rejected() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        save_dataset(&ds, &path, false).unwrap();

        let err = load_dataset(&path, Some(SystemId::Car)).unwrap_err();
        assert!(err.to_string().contains("system pendulum where car was expected"));

        let text = std::fs::read_to_string(&path).unwrap();
        let bumped = text.replacen("\"version\":1", "\"version\":9", 1);
        std::fs::write(&path, bumped).unwrap();
        let err = load_dataset(&path, None).unwrap_err();
        assert!(err.to_string().contains("version 9"));
    }

    #[test]
    fn manifest_round_trips() {
        let cfg = GenerationConfig::new(ParamMode::Grid(vec![61, 21]), 0);
        let m = Manifest {
            system: SystemId::Pendulum,
            n_nodes: 24,
            count: 1281,
            config: cfg,
            report: GenerationReport {
                attempted: 1281,
                converged: 1281,
                dropped: vec![],
            },
            config_hash: "abc".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        save_manifest(&m, &path, false).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(back.system, m.system);
        assert_eq!(back.count, m.count);
        assert_eq!(back.report.attempted, 1281);
        assert!(matches!(back.config.mode, ParamMode::Grid(ref v) if v == &vec![61, 21]));
    }
}
