//! Snapshot files, trajectory directories and boundary-extract CSVs.
//!
//! A snapshot is one JSON header line followed by raw little-endian `f64`s.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adjoint::AdjointTrajectory;
use crate::error::{Result, SlipError};
use crate::fields::{PressureField, VelocityField};
use crate::mesh::Grid;
use crate::state::StateTrajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub kind: String,
    pub nx: usize,
    pub ny: usize,
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
    pub t: f64,
}

pub fn write_snapshot(path: &Path, header: &SnapshotHeader, data: &[f64]) -> Result<()> {
    let mut buf = serde_json::to_vec(header)?;
    buf.push(b'\n');
    buf.reserve(8 * data.len());
    for x in data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, Vec<f64>)> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: SnapshotHeader = serde_json::from_str(line.trim_end())?;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(SlipError::Format(format!(
            "{}: payload of {} bytes is not a whole number of f64",
            path.display(),
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, data))
}

fn header(grid: &Grid, kind: &str, t: f64) -> SnapshotHeader {
    SnapshotHeader {
        kind: kind.to_string(),
        nx: grid.nx,
        ny: grid.ny,
        lx: grid.lx,
        ly: grid.ly,
        t,
    }
}

pub fn write_velocity(path: &Path, grid: &Grid, t: f64, y: &VelocityField) -> Result<()> {
    write_snapshot(path, &header(grid, "velocity", t), &y.data)
}

pub fn write_pressure(path: &Path, grid: &Grid, t: f64, p: &PressureField) -> Result<()> {
    write_snapshot(path, &header(grid, "pressure", t), &p.values)
}

pub fn read_velocity(path: &Path, grid: &Grid) -> Result<(f64, VelocityField)> {
    let (h, data) = read_snapshot(path)?;
    if h.kind != "velocity" || h.nx != grid.nx || h.ny != grid.ny {
        return Err(SlipError::Format(format!(
            "{}: expected a {}×{} velocity snapshot, found {} {}×{}",
            path.display(),
            grid.nx,
            grid.ny,
            h.kind,
            h.nx,
            h.ny
        )));
    }
    Ok((h.t, VelocityField::from_vec(grid, data)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub nx: usize,
    pub ny: usize,
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub nt: usize,
    pub cadence: usize,
    pub config_hash: String,
    pub fingerprint: String,
    pub velocity: Vec<String>,
    pub pressure: Vec<String>,
    pub bytes_per_slice: usize,
}

/// Writes every `cadence`-th slice (plus the last) and `manifest.json`.
pub fn write_trajectory(
    dir: &Path,
    grid: &Grid,
    traj: &StateTrajectory,
    cadence: usize,
    config_hash: &str,
) -> Result<TrajectoryManifest> {
    if cadence == 0 {
        return Err(SlipError::InvalidArgument("snapshot cadence must be ≥ 1".into()));
    }
    fs::create_dir_all(dir)?;
    let nt = traj.time.nt;
    let mut velocity = Vec::new();
    let mut pressure = Vec::new();
    for k in (0..=nt).filter(|k| k % cadence == 0 || *k == nt) {
        let t = traj.time.time(k);
        let name = format!("y_{k:05}.bin");
        write_velocity(&dir.join(&name), grid, t, &traj.y[k])?;
        velocity.push(name);
        if k > 0 {
            let name = format!("p_{k:05}.bin");
            write_pressure(&dir.join(&name), grid, t, &traj.p[k - 1])?;
            pressure.push(name);
        }
    }
    let manifest = TrajectoryManifest {
        nx: grid.nx,
        ny: grid.ny,
        lx: grid.lx,
        ly: grid.ly,
        t_final: traj.time.t_final,
        nt,
        cadence,
        config_hash: config_hash.to_string(),
        fingerprint: traj.fingerprint.clone(),
        velocity,
        pressure,
        bytes_per_slice: 8 * (grid.n_velocity() + grid.n_cells()),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Rows `t,s,value` for slices `1..=nt`.
pub fn boundary_extract_csv(grid: &Grid, times: &[f64], slices: &[Vec<f64>]) -> String {
    let mut out = String::from("t,s,value\n");
    for (t, values) in times.iter().zip(slices) {
        for (node, v) in grid.boundary().iter().zip(values) {
            out.push_str(&format!("{t:e},{:e},{v:e}\n", node.s));
        }
    }
    out
}

/// `G_normal.csv` and `G_tangent.csv` in `dir`.
pub fn write_gradient_extracts(dir: &Path, grid: &Grid, adjoint: &AdjointTrajectory, times: &[f64]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let nt = adjoint.pi.len();
    let ts: Vec<f64> = (1..=nt).map(|k| times[k]).collect();
    let normal: Vec<Vec<f64>> = (1..=nt).map(|k| adjoint.g_normal(grid, k).values).collect();
    let tangent: Vec<Vec<f64>> = (1..=nt).map(|k| adjoint.g_tangent[k].values.clone()).collect();
    fs::write(dir.join("G_normal.csv"), boundary_extract_csv(grid, &ts, &normal))?;
    fs::write(dir.join("G_tangent.csv"), boundary_extract_csv(grid, &ts, &tangent))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{BoundaryControl, FrictionField};
    use crate::mesh::TimeGrid;
    use crate::samples::{rng, trig_velocity};
    use crate::state::{solve_state, StateProblem};

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(5, 4, 1.25, 1.0).unwrap();
        let y = trig_velocity(&g, &mut rng(1), 2);
        let path = dir.path().join("y.bin");
        write_velocity(&path, &g, 0.125, &y).unwrap();
        let (t, back) = read_velocity(&path, &g).unwrap();
        assert_eq!(t, 0.125);
        assert_eq!(back, y);
        let text = fs::read(&path).unwrap();
        let first = text.split(|&b| b == b'\n').next().unwrap();
        let h: serde_json::Value = serde_json::from_slice(first).unwrap();
        assert_eq!(h["Lx"], 1.25);
        assert_eq!(h["kind"], "velocity");
        let other = Grid::new(4, 4, 1.0, 1.0).unwrap();
        assert!(read_velocity(&path, &other).is_err());
    }

    #[test]
    fn trajectory_directory_has_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        let t = TimeGrid::new(1.0, 5).unwrap();
        let pb = StateProblem::new(
            g.clone(),
            t,
            VelocityField::zeros(&g),
            BoundaryControl::zeros(&g, &t, 3.0, 1.0),
            FrictionField::constant(&g, &t, 1.0),
        );
        let traj = solve_state(&pb).unwrap();
        let m = write_trajectory(dir.path(), &g, &traj, 2, "abc").unwrap();
        assert_eq!(m.velocity, ["y_00000.bin", "y_00002.bin", "y_00004.bin", "y_00005.bin"]);
        assert_eq!(m.pressure.len(), 3);
        let back: TrajectoryManifest =
            serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
