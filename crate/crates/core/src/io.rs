//! CSV logs: ground truth, corrupted sensors, estimates and slip episodes.
//!
//! Comma separated, one header row, LF line endings, every real written
//! with 17 significant digits so a write/read round trip is lossless.
//! Readers look columns up by header name.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::bse::EstimateLog;
use crate::features::{ImuSample, WrenchSample};
use crate::kinematics::{JointAngles, Side};
use crate::scenario::terrain::{ConstraintStatus, Terrain};
use crate::scenario::{BodyTruth, FootTruth, GroundTruthLog, Pose, SlipEpisode, TruthSample};
use crate::sensors::SensorLog;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("log has fewer than two rows; the sample period is undefined")]
    TooShort,
}

pub type Result<T> = std::result::Result<T, IoError>;

/// Formats a real with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn vec3(prefix: &str, names: [&str; 3]) -> Vec<String> {
    names.iter().map(|n| format!("{prefix}{n}")).collect()
}

fn body_columns(prefix: &str) -> Vec<String> {
    let mut h = vec3(prefix, ["px", "py", "pz"]);
    h.extend(vec3(prefix, ["qw", "qx", "qy"]));
    h.push(format!("{prefix}qz"));
    h.extend(vec3(prefix, ["vx", "vy", "vz"]));
    h.extend(vec3(prefix, ["wx", "wy", "wz"]));
    h.extend(vec3(prefix, ["ax", "ay", "az"]));
    h
}

fn wrench_columns(prefix: &str) -> Vec<String> {
    let mut h = vec3(prefix, ["fx", "fy", "fz"]);
    h.extend(vec3(prefix, ["tx", "ty", "tz"]));
    h
}

fn imu_columns(prefix: &str) -> Vec<String> {
    let mut h = vec3(prefix, ["acc_x", "acc_y", "acc_z"]);
    h.extend(vec3(prefix, ["gyr_x", "gyr_y", "gyr_z"]));
    h
}

fn joint_columns(prefix: &str) -> Vec<String> {
    (0..6).map(|j| format!("{prefix}q{j}")).collect()
}

fn foot_prefix(side: Side) -> &'static str {
    match side {
        Side::Left => "left_",
        Side::Right => "right_",
    }
}

fn push_body(row: &mut Vec<String>, b: &BodyTruth) {
    let q = b.pose.orientation.quaternion();
    for v in b.pose.position.iter() {
        row.push(fmt_real(*v));
    }
    for v in [q.w, q.i, q.j, q.k] {
        row.push(fmt_real(v));
    }
    for v in b.velocity.iter().chain(b.angular_velocity.iter()).chain(b.acceleration.iter()) {
        row.push(fmt_real(*v));
    }
}

fn push_wrench(row: &mut Vec<String>, w: &WrenchSample) {
    for v in w.force.iter().chain(w.torque.iter()) {
        row.push(fmt_real(*v));
    }
}

fn push_imu(row: &mut Vec<String>, s: &ImuSample) {
    for v in s.accel.iter().chain(s.gyro.iter()) {
        row.push(fmt_real(*v));
    }
}

fn push_joints(row: &mut Vec<String>, q: &JointAngles) {
    for v in q {
        row.push(fmt_real(*v));
    }
}

pub fn truth_header() -> Vec<String> {
    let mut h = vec!["time".to_string()];
    h.extend(body_columns("base_"));
    for side in Side::BOTH {
        let p = foot_prefix(side);
        h.extend(body_columns(p));
        h.extend(wrench_columns(p));
        h.extend(joint_columns(p));
        for n in ["in_contact", "stance_phase", "ok_translational", "ok_cop", "ok_rotational"] {
            h.push(format!("{p}{n}"));
        }
    }
    h
}

/// Writes the per-tick ground truth. `stance_phase` is NaN while swinging.
pub fn write_truth<W: Write>(log: &GroundTruthLog, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(truth_header())?;
    for s in &log.samples {
        let mut row = vec![fmt_real(s.time)];
        push_body(&mut row, &s.base);
        for f in &s.feet {
            push_body(&mut row, &f.body);
            push_wrench(&mut row, &f.wrench);
            push_joints(&mut row, &f.joints);
            row.push(flag(f.in_contact));
            row.push(fmt_real(f.stance_phase.unwrap_or(f64::NAN)));
            row.push(flag(f.constraints.translational));
            row.push(flag(f.constraints.cop));
            row.push(flag(f.constraints.rotational));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn sensor_header() -> Vec<String> {
    let mut h = vec!["time".to_string()];
    h.extend(imu_columns("base_"));
    for side in Side::BOTH {
        let p = foot_prefix(side);
        h.extend(wrench_columns(p));
        h.extend(imu_columns(p));
        h.extend(joint_columns(p));
    }
    h
}

pub fn write_sensors<W: Write>(log: &SensorLog, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(sensor_header())?;
    for k in 0..log.len() {
        let mut row = vec![fmt_real(log.base_imu[k].time)];
        push_imu(&mut row, &log.base_imu[k]);
        for i in 0..2 {
            push_wrench(&mut row, &log.wrench[i][k]);
            push_imu(&mut row, &log.foot_imu[i][k]);
            push_joints(&mut row, &log.joints[i][k]);
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Estimated base state with per-foot contact probabilities (empty until
/// the first full window) and gate flags.
pub fn write_estimates<W: Write>(log: &EstimateLog, w: W) -> Result<()> {
    let mut h = vec!["time".to_string()];
    h.extend(vec3("base_", ["px", "py", "pz"]));
    h.extend(vec3("base_", ["qw", "qx", "qy"]));
    h.push("base_qz".into());
    h.extend(vec3("base_", ["vx", "vy", "vz"]));
    for side in Side::BOTH {
        let p = foot_prefix(side);
        for d in ["x", "y", "z", "alpha", "beta", "gamma"] {
            h.push(format!("{p}p_contact_{d}"));
        }
        h.push(format!("{p}gate"));
    }
    let mut out = writer(w);
    out.write_record(&h)?;
    for s in &log.samples {
        let q = s.orientation.quaternion();
        let mut row = vec![fmt_real(s.time)];
        for v in s.position.iter().chain([q.w, q.i, q.j, q.k].iter()).chain(s.velocity.iter()) {
            row.push(fmt_real(*v));
        }
        for i in 0..2 {
            match s.probability[i] {
                Some(p) => row.extend(p.0.iter().map(|v| fmt_real(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            row.push(flag(s.gate[i]));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_episodes<W: Write>(episodes: &[SlipEpisode], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record([
        "side",
        "kind",
        "dof",
        "onset",
        "end",
        "magnitude",
        "normal_force_at_onset",
        "surface",
    ])?;
    for e in episodes {
        let kind = match e.kind {
            crate::scenario::SlipKind::Translational => "translational",
            crate::scenario::SlipKind::Rotational => "rotational",
            crate::scenario::SlipKind::Tilt => "tilt",
        };
        out.write_record([
            e.side.name().to_string(),
            kind.to_string(),
            e.dof.name().to_string(),
            fmt_real(e.onset),
            fmt_real(e.end),
            fmt_real(e.magnitude),
            fmt_real(e.normal_force_at_onset),
            e.surface.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Numeric table indexed by header name. Empty cells read as NaN.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn read<R: Read>(r: R) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut row = Vec::with_capacity(rec.len());
            for (j, cell) in rec.iter().enumerate() {
                let cell = cell.trim();
                let v = if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse::<f64>().map_err(|_| IoError::Parse {
                        row: k + 1,
                        column: header.get(j).cloned().unwrap_or_default(),
                        value: cell.to_string(),
                    })?
                };
                row.push(v);
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    fn columns(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.header
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| IoError::MissingColumn(n.clone()))
            })
            .collect()
    }

    fn sample_period(&self, time_col: usize) -> Result<f64> {
        if self.rows.len() < 2 {
            return Err(IoError::TooShort);
        }
        Ok(self.rows[1][time_col] - self.rows[0][time_col])
    }
}

fn v3(row: &[f64], c: &[usize]) -> Vector3<f64> {
    Vector3::new(row[c[0]], row[c[1]], row[c[2]])
}

fn read_body(row: &[f64], c: &[usize]) -> BodyTruth {
    let q = Quaternion::new(row[c[3]], row[c[4]], row[c[5]], row[c[6]]);
    BodyTruth {
        pose: Pose {
            position: v3(row, &c[0..3]),
            orientation: UnitQuaternion::new_unchecked(q),
        },
        velocity: v3(row, &c[7..10]),
        angular_velocity: v3(row, &c[10..13]),
        acceleration: v3(row, &c[13..16]),
    }
}

fn read_joints(row: &[f64], c: &[usize]) -> JointAngles {
    std::array::from_fn(|j| row[c[j]])
}

/// Reads a truth log written by [`write_truth`]. Terrain and slip episodes
/// are not part of the per-tick file and come back empty.
pub fn read_truth<R: Read>(r: R) -> Result<GroundTruthLog> {
    let t = Table::read(r)?;
    let time = t.columns(&["time".to_string()])?[0];
    let base = t.columns(&body_columns("base_"))?;
    let mut feet = Vec::new();
    for side in Side::BOTH {
        let p = foot_prefix(side);
        let flags: Vec<String> = ["in_contact", "stance_phase", "ok_translational", "ok_cop", "ok_rotational"]
            .iter()
            .map(|n| format!("{p}{n}"))
            .collect();
        feet.push((
            t.columns(&body_columns(p))?,
            t.columns(&wrench_columns(p))?,
            t.columns(&joint_columns(p))?,
            t.columns(&flags)?,
        ));
    }
    let dt = t.sample_period(time)?;
    let samples = t
        .rows
        .iter()
        .map(|row| {
            let foot = |i: usize| {
                let (b, w, j, f) = &feet[i];
                let phase = row[f[1]];
                FootTruth {
                    body: read_body(row, b),
                    wrench: WrenchSample::new(row[time], v3(row, &w[0..3]), v3(row, &w[3..6])),
                    constraints: ConstraintStatus {
                        translational: row[f[2]] != 0.0,
                        cop: row[f[3]] != 0.0,
                        rotational: row[f[4]] != 0.0,
                    },
                    joints: read_joints(row, j),
                    in_contact: row[f[0]] != 0.0,
                    stance_phase: (!phase.is_nan()).then_some(phase),
                }
            };
            TruthSample {
                time: row[time],
                base: read_body(row, &base),
                feet: [foot(0), foot(1)],
            }
        })
        .collect();
    Ok(GroundTruthLog {
        dt,
        samples,
        episodes: Vec::new(),
        terrain: Terrain::default(),
    })
}

pub fn read_sensors<R: Read>(r: R) -> Result<SensorLog> {
    let t = Table::read(r)?;
    let time = t.columns(&["time".to_string()])?[0];
    let base = t.columns(&imu_columns("base_"))?;
    let mut feet = Vec::new();
    for side in Side::BOTH {
        let p = foot_prefix(side);
        feet.push((
            t.columns(&wrench_columns(p))?,
            t.columns(&imu_columns(p))?,
            t.columns(&joint_columns(p))?,
        ));
    }
    let dt = t.sample_period(time)?;
    let n = t.rows.len();
    let mut log = SensorLog {
        dt,
        base_imu: Vec::with_capacity(n),
        wrench: [Vec::with_capacity(n), Vec::with_capacity(n)],
        foot_imu: [Vec::with_capacity(n), Vec::with_capacity(n)],
        joints: [Vec::with_capacity(n), Vec::with_capacity(n)],
    };
    for row in &t.rows {
        let tm = row[time];
        log.base_imu.push(ImuSample::new(tm, v3(row, &base[0..3]), v3(row, &base[3..6])));
        for (i, (w, m, j)) in feet.iter().enumerate() {
            log.wrench[i].push(WrenchSample::new(tm, v3(row, &w[0..3]), v3(row, &w[3..6])));
            log.foot_imu[i].push(ImuSample::new(tm, v3(row, &m[0..3]), v3(row, &m[3..6])));
            log.joints[i].push(read_joints(row, j));
        }
    }
    Ok(log)
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn save_truth(log: &GroundTruthLog, path: impl AsRef<Path>) -> Result<()> {
    write_truth(log, create(path.as_ref())?)
}

pub fn save_sensors(log: &SensorLog, path: impl AsRef<Path>) -> Result<()> {
    write_sensors(log, create(path.as_ref())?)
}

pub fn save_estimates(log: &EstimateLog, path: impl AsRef<Path>) -> Result<()> {
    write_estimates(log, create(path.as_ref())?)
}

pub fn save_episodes(episodes: &[SlipEpisode], path: impl AsRef<Path>) -> Result<()> {
    write_episodes(episodes, create(path.as_ref())?)
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<GroundTruthLog> {
    read_truth(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn load_sensors(path: impl AsRef<Path>) -> Result<SensorLog> {
    read_sensors(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_keep_seventeen_digits() {
        let v = 0.1_f64 + 0.2;
        let s = fmt_real(v);
        assert_eq!(s.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
        assert_eq!(s.parse::<f64>().unwrap(), v);
    }

    #[test]
    fn empty_cells_and_bad_cells() {
        let t = Table::read("a,b\n1,\n".as_bytes()).unwrap();
        assert_eq!(t.rows[0][0], 1.0);
        assert!(t.rows[0][1].is_nan());
        assert!(matches!(
            Table::read("a\nxyz\n".as_bytes()),
            Err(IoError::Parse { .. })
        ));
    }

    #[test]
    fn missing_column_is_reported() {
        let err = read_sensors("time\n0\n0.001\n".as_bytes()).unwrap_err();
        assert!(matches!(err, IoError::MissingColumn(c) if c == "base_acc_x"));
    }
}
