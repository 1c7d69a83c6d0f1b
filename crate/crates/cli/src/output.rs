//! CSV artifacts and atomic file output.

use std::io::Write;
use std::path::Path;

use hopsim_core::design::{AchievableApex, CotResult, RequiredThrust};
use hopsim_core::hybrid::{HopRun, HybridModel};
use hopsim_core::observe::Observable;

use crate::error::RunError;

pub const SCHEMA_VERSION: u32 = 1;

pub const TRAJECTORY_COLUMNS: [&str; 15] = [
    "t",
    "phase",
    "x",
    "z",
    "pitch",
    "spring_deflection",
    "xdot",
    "zdot",
    "F_t",
    "leg_angle_cmd",
    "GRF_x",
    "GRF_z",
    "eta",
    "V",
    "delta",
];

pub const EVENT_COLUMNS: [&str; 7] = ["kind", "t", "x", "z", "xdot", "ydot", "zdot"];

/// A named output file held in memory until written.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self { name: name.into(), bytes }
    }
}

fn table<I, R>(kind: &str, header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut out = format!("# hopsim {kind} schema {SCHEMA_VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header).expect("in-memory write");
        for row in rows {
            w.write_record(row).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    out
}

fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn trajectory_csv<M: HybridModel + Observable>(model: &M, run: &HopRun) -> Vec<u8> {
    let rows = run.trajectory.samples.iter().map(|s| {
        let o = model.observe(&s.state);
        let input = |i: usize| s.input.get(i).copied().unwrap_or(0.0);
        vec![
            num(s.t),
            s.state.phase.as_str().to_string(),
            num(o.x),
            num(o.z),
            num(o.pitch),
            num(o.spring_deflection),
            num(o.xdot),
            num(o.zdot),
            num(input(0)),
            num(input(1)),
            num(s.grf[0]),
            num(s.grf[2]),
            num(s.diag.eta),
            num(s.diag.lyapunov),
            num(s.diag.delta),
        ]
    });
    table("trajectory", &TRAJECTORY_COLUMNS, rows)
}

pub fn events_csv<M: HybridModel + Observable>(model: &M, run: &HopRun) -> Vec<u8> {
    let rows = run.trajectory.events.iter().map(|e| {
        let o = model.observe(&e.state_after);
        vec![e.kind.as_str().to_string(), num(e.t), num(o.x), num(o.z), num(o.xdot), num(o.ydot), num(o.zdot)]
    });
    table("events", &EVENT_COLUMNS, rows)
}

pub fn required_thrust_csv(cells: &[RequiredThrust]) -> Vec<u8> {
    let rows = cells.iter().map(|c| vec![num(c.weight), num(c.stiffness), opt(c.f_max)]);
    table("design", &["weight", "stiffness", "F_max_required"], rows)
}

pub fn achievable_apex_csv(cells: &[AchievableApex]) -> Vec<u8> {
    let rows = cells.iter().map(|c| vec![num(c.twr), num(c.stiffness), opt(c.apex)]);
    table("design", &["twr", "stiffness", "apex"], rows)
}

pub fn cot_csv(results: &[CotResult]) -> Vec<u8> {
    let rows = results.iter().map(|r| vec![num(r.twr), r.mode.as_str().to_string(), num(r.cot)]);
    table("cot", &["twr", "mode", "cot"], rows)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(dir: &Path, artifact: &Artifact) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    let target = dir.join(&artifact.name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| RunError::io(dir, e))?;
    tmp.write_all(&artifact.bytes).map_err(|e| RunError::io(&target, e))?;
    tmp.persist(&target).map_err(|e| RunError::io(&target, e.error))?;
    Ok(())
}
