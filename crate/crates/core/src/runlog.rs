//! Per-step CSV trajectory logs and their replay against the race rules.
//!
//! A log starts with `# key: value` header lines, then a CSV table with one
//! row per physics step. The `events` column holds `;`-separated tags.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::quaternion::Quaternion;
use crate::race::{score_trajectory, Outcome, RaceEvent, RaceRecord};
use crate::scene::{ObjectKind, Scene};
use crate::vehicle::VehicleState;

type V3 = Vector3<f64>;

pub const LOG_FORMAT_VERSION: u32 = 1;
pub const RACE_START: &str = "race_start";

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("log is empty")]
    Empty,
    #[error("corrupt log: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Everything needed to re-score a log without the original config.
#[derive(Clone, Debug, PartialEq)]
pub struct LogHeader {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub rate_hz: u32,
    pub time_limit: f64,
    pub collider_radius: f64,
    pub motor_count: usize,
    /// Course actually flown, as compact JSON.
    pub course_json: String,
    /// Unix seconds; omitted for reproducible output.
    pub timestamp: Option<u64>,
}

impl LogHeader {
    fn lines(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("format".to_string(), format!("raceforge-log {LOG_FORMAT_VERSION}")),
            ("version".into(), self.version.clone()),
            ("config_hash".into(), self.config_hash.clone()),
            ("seed".into(), self.seed.to_string()),
            ("rate_hz".into(), self.rate_hz.to_string()),
            ("time_limit".into(), self.time_limit.to_string()),
            ("collider_radius".into(), self.collider_radius.to_string()),
            ("motor_count".into(), self.motor_count.to_string()),
            ("course".into(), self.course_json.clone()),
        ];
        if let Some(t) = self.timestamp {
            v.push(("timestamp".into(), t.to_string()));
        }
        v
    }
}

/// Tag written into the `events` column for a race event.
pub fn event_tag(e: &RaceEvent) -> String {
    match e {
        RaceEvent::GatePassed { gate_id, .. } => format!("gate_passed:{gate_id}"),
        RaceEvent::GatesForfeited { gate_ids } => {
            let ids: Vec<String> = gate_ids.iter().map(u32::to_string).collect();
            format!("gates_forfeited:{}", ids.join(","))
        }
        RaceEvent::Collision { contact } => {
            let kind = match contact.object_kind {
                ObjectKind::Triangle => "triangle",
                ObjectKind::Box => "box",
                ObjectKind::GateFrame => "gate_frame",
            };
            format!("collision:{kind}:{}", contact.index)
        }
        RaceEvent::Ended { outcome } => {
            format!("race_end:{}", serde_json::to_value(outcome).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        }
    }
}

struct PendingRow {
    step: u64,
    sim_time: f64,
    state: VehicleState,
    events: Vec<String>,
}

/// Streams rows to a writer. A row is held until the next one arrives so
/// that markers raised while processing its step (such as the race start)
/// land on it.
pub struct RunLogWriter<W: Write> {
    csv: csv::Writer<W>,
    pending: Option<PendingRow>,
    motor_count: usize,
}

impl<W: Write> RunLogWriter<W> {
    pub fn new(mut out: W, header: &LogHeader) -> Result<Self, LogError> {
        let io = |source| LogError::Io { path: "<log>".into(), source };
        for (k, v) in header.lines() {
            writeln!(out, "# {k}: {v}").map_err(io)?;
        }
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        let mut cols: Vec<String> = ["step", "sim_time", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend((0..header.motor_count).map(|i| format!("motor{i}")));
        cols.push("events".into());
        csv.write_record(&cols)?;
        Ok(Self { csv, pending: None, motor_count: header.motor_count })
    }

    pub fn record(&mut self, step: u64, sim_time: f64, state: &VehicleState, events: &[RaceEvent]) -> Result<(), LogError> {
        self.flush_pending()?;
        self.pending = Some(PendingRow {
            step,
            sim_time,
            state: state.clone(),
            events: events.iter().map(event_tag).collect(),
        });
        Ok(())
    }

    /// Adds a tag to the most recent row.
    pub fn mark(&mut self, tag: &str) {
        if let Some(p) = self.pending.as_mut() {
            p.events.push(tag.to_string());
        }
    }

    fn flush_pending(&mut self) -> Result<(), LogError> {
        let Some(p) = self.pending.take() else { return Ok(()) };
        let s = &p.state;
        let q = s.attitude;
        let mut row: Vec<String> = vec![p.step.to_string(), p.sim_time.to_string()];
        row.extend(s.position.iter().chain(s.velocity.iter()).map(f64::to_string));
        row.extend([q.r, q.i, q.j, q.k].iter().map(f64::to_string));
        row.extend(s.body_rate.iter().map(f64::to_string));
        for i in 0..self.motor_count {
            row.push(s.motor_speeds.get(i).copied().unwrap_or(0.0).to_string());
        }
        row.push(p.events.join(";"));
        self.csv.write_record(&row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, LogError> {
        self.flush_pending()?;
        self.csv.flush().map_err(|source| LogError::Io { path: "<log>".into(), source })?;
        self.csv.into_inner().map_err(|e| LogError::Corrupt(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub sim_time: f64,
    pub position: V3,
    pub velocity: V3,
    pub attitude: Quaternion,
    pub body_rate: V3,
    pub motor_speeds: Vec<f64>,
    pub events: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct RunLog {
    pub header: LogHeader,
    pub rows: Vec<LogRow>,
}

fn header_value<'a>(pairs: &'a [(String, String)], key: &str) -> Result<&'a str, LogError> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| LogError::Corrupt(format!("missing header `{key}`")))
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, LogError> {
    s.trim().parse().map_err(|_| LogError::Corrupt(format!("bad {what}: `{s}`")))
}

impl RunLog {
    pub fn read(path: &Path) -> Result<Self, LogError> {
        let file = std::fs::File::open(path).map_err(|source| LogError::Io { path: path.display().to_string(), source })?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn from_reader<R: BufRead>(mut r: R) -> Result<Self, LogError> {
        let mut pairs = Vec::new();
        let mut line = String::new();
        let mut body = String::new();
        loop {
            line.clear();
            let n = r.read_line(&mut line).map_err(|source| LogError::Io { path: "<log>".into(), source })?;
            if n == 0 {
                break;
            }
            if let Some(rest) = line.strip_prefix("# ") {
                let (k, v) = rest
                    .trim_end_matches(['\n', '\r'])
                    .split_once(": ")
                    .ok_or_else(|| LogError::Corrupt(format!("bad header line `{}`", line.trim_end())))?;
                pairs.push((k.to_string(), v.to_string()));
            } else {
                body.push_str(&line);
                r.read_to_string(&mut body).map_err(|source| LogError::Io { path: "<log>".into(), source })?;
                break;
            }
        }
        if pairs.is_empty() && body.trim().is_empty() {
            return Err(LogError::Empty);
        }
        let format = header_value(&pairs, "format")?;
        if format != format!("raceforge-log {LOG_FORMAT_VERSION}") {
            return Err(LogError::Corrupt(format!("unsupported format `{format}`")));
        }
        let header = LogHeader {
            version: header_value(&pairs, "version")?.to_string(),
            config_hash: header_value(&pairs, "config_hash")?.to_string(),
            seed: parse(header_value(&pairs, "seed")?, "seed")?,
            rate_hz: parse(header_value(&pairs, "rate_hz")?, "rate_hz")?,
            time_limit: parse(header_value(&pairs, "time_limit")?, "time_limit")?,
            collider_radius: parse(header_value(&pairs, "collider_radius")?, "collider_radius")?,
            motor_count: parse(header_value(&pairs, "motor_count")?, "motor_count")?,
            course_json: header_value(&pairs, "course")?.to_string(),
            timestamp: header_value(&pairs, "timestamp").ok().map(|t| parse(t, "timestamp")).transpose()?,
        };
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let expected = 15 + header.motor_count + 1;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != expected {
                return Err(LogError::Corrupt(format!("row has {} fields, expected {expected}", rec.len())));
            }
            let f = |i: usize| parse::<f64>(&rec[i], "number");
            let v3 = |i: usize| -> Result<V3, LogError> { Ok(V3::new(f(i)?, f(i + 1)?, f(i + 2)?)) };
            let m = header.motor_count;
            let row = LogRow {
                step: parse(&rec[0], "step")?,
                sim_time: f(1)?,
                position: v3(2)?,
                velocity: v3(5)?,
                attitude: Quaternion::new(f(8)?, f(9)?, f(10)?, f(11)?),
                body_rate: v3(12)?,
                motor_speeds: (0..m).map(|i| f(15 + i)).collect::<Result<_, _>>()?,
                events: rec[15 + m].split(';').filter(|s| !s.is_empty()).map(String::from).collect(),
            };
            if !row.position.iter().all(|x| x.is_finite()) {
                return Err(LogError::Corrupt(format!("non-finite position at step {}", row.step)));
            }
            if let Some(prev) = rows.last() {
                let prev: &LogRow = prev;
                if row.step <= prev.step || row.sim_time <= prev.sim_time {
                    return Err(LogError::Corrupt(format!("rows not increasing at step {}", row.step)));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(LogError::Empty);
        }
        Ok(Self { header, rows })
    }

    pub fn course(&self) -> Result<Scene, LogError> {
        Scene::from_json(&self.header.course_json).map_err(|e| LogError::Corrupt(format!("course: {e}")))
    }

    pub fn race_start_step(&self) -> Option<u64> {
        self.rows.iter().find(|r| r.events.iter().any(|e| e == RACE_START)).map(|r| r.step)
    }

    /// Re-scores the logged positions.
    pub fn replay(&self) -> Result<(RaceRecord, Option<Outcome>), LogError> {
        let scene = self.course()?;
        let positions: Vec<V3> = self.rows.iter().map(|r| r.position).collect();
        for w in self.rows.windows(2) {
            if w[1].step != w[0].step + 1 {
                return Err(LogError::Corrupt(format!("missing rows between steps {} and {}", w[0].step, w[1].step)));
            }
        }
        let h = &self.header;
        Ok(score_trajectory(
            &positions,
            self.rows[0].step,
            self.race_start_step(),
            &scene,
            h.rate_hz,
            h.time_limit,
            h.collider_radius,
        ))
    }
}

/// Result file written next to each log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordFile {
    pub seed: u64,
    pub outcome: Outcome,
    pub record: RaceRecord,
}

/// `dir/course_03.csv` pairs with `dir/course_03.record.json`.
pub fn record_path_for(log: &Path) -> PathBuf {
    log.with_extension("record.json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Gate, StartPose};

    fn header(scene: &Scene) -> LogHeader {
        LogHeader {
            version: "0.1.0".into(),
            config_hash: "abc".into(),
            seed: 3,
            rate_hz: 960,
            time_limit: 120.0,
            collider_radius: 0.2,
            motor_count: 4,
            course_json: serde_json::to_string(scene).unwrap(),
            timestamp: None,
        }
    }

    fn one_gate() -> Scene {
        let g = Gate::new(1, V3::new(1.0, 0.0, 2.0), V3::x(), V3::z(), 2.0, 2.0, 0.1, [1, 2, 3, 4]).unwrap();
        Scene::new("t".into(), StartPose { position: V3::new(0.0, 0.0, 2.0), yaw: 0.0 }, vec![], vec![], vec![g], vec![])
    }

    fn write_straight_run(scene: &Scene, steps: u64) -> String {
        let mut w = RunLogWriter::new(Vec::new(), &header(scene)).unwrap();
        for k in 0..=steps {
            let mut s = VehicleState::at_rest(V3::new(0.01 * k as f64, 0.0, 2.0), Quaternion::IDENTITY, 4);
            s.velocity = V3::new(9.6, 0.0, 0.0);
            w.record(k, k as f64 / 960.0, &s, &[]).unwrap();
            if k == 0 {
                w.mark(RACE_START);
            }
        }
        String::from_utf8(w.finish().unwrap()).unwrap()
    }

    #[test]
    fn write_read_replay() {
        let scene = one_gate();
        let text = write_straight_run(&scene, 200);
        assert!(text.starts_with("# format: raceforge-log 1\n"));
        let log = RunLog::from_reader(text.as_bytes()).unwrap();
        assert_eq!(log.rows.len(), 201);
        assert_eq!(log.race_start_step(), Some(0));
        let (rec, outcome) = log.replay().unwrap();
        assert_eq!(outcome, Some(Outcome::Finished));
        assert_eq!(rec.gates_passed, 1);
        // x = 0.01 k crosses 1.0 at k = 100
        assert_eq!(rec.elapsed, 100.0 / 960.0);
    }

    #[test]
    fn floats_survive_the_csv() {
        let scene = one_gate();
        let mut w = RunLogWriter::new(Vec::new(), &header(&scene)).unwrap();
        let mut s = VehicleState::at_rest(V3::new(0.1 + 0.2, 1.0 / 3.0, 2.0), Quaternion::IDENTITY, 4);
        s.motor_speeds = vec![1133.2019, 0.0, 1e-300, 2200.0];
        w.record(0, 0.0, &s, &[]).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        let log = RunLog::from_reader(text.as_bytes()).unwrap();
        assert_eq!(log.rows[0].position, s.position);
        assert_eq!(log.rows[0].motor_speeds, s.motor_speeds);
    }

    #[test]
    fn empty_and_corrupt_logs() {
        assert!(matches!(RunLog::from_reader("".as_bytes()), Err(LogError::Empty)));
        assert!(matches!(RunLog::from_reader("garbage\n1,2\n".as_bytes()), Err(LogError::Corrupt(_))));
        let scene = one_gate();
        let text = write_straight_run(&scene, 5);
        let cut: String = text.lines().take(text.lines().count() - 6).map(|l| format!("{l}\n")).collect();
        assert!(matches!(RunLog::from_reader(cut.as_bytes()), Err(LogError::Empty)));
        let bad = text.replacen("\n3,", "\nx,", 1);
        assert!(RunLog::from_reader(bad.as_bytes()).is_err());
    }

    #[test]
    fn tampered_position_changes_replay() {
        let scene = one_gate();
        let text = write_straight_run(&scene, 60);
        let (clean, _) = RunLog::from_reader(text.as_bytes()).unwrap().replay().unwrap();
        assert_eq!(clean.gates_passed, 0);
        // move row 50 through the gate
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let idx = lines.iter().position(|l| l.starts_with("50,")).unwrap();
        let mut f: Vec<String> = lines[idx].split(',').map(String::from).collect();
        f[2] = "1.5".into();
        lines[idx] = f.join(",");
        let edited = lines.join("\n") + "\n";
        let (tampered, _) = RunLog::from_reader(edited.as_bytes()).unwrap().replay().unwrap();
        assert_ne!(tampered, clean);
    }
}
