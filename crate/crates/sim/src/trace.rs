//! In-memory run log and its on-disk form.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use collabsafe_core::protocol::{ProtocolStatus, TraceRecord};
use collabsafe_core::Vec2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::scenario::Scenario;

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const BARRIER_CSV: &str = "barrier.csv";
pub const ROUNDS_CSV: &str = "rounds.csv";
pub const MESSAGES_LOG: &str = "messages.ndjson";
pub const EVENTS_LOG: &str = "events.ndjson";
pub const SCENARIO_JSON: &str = "scenario.json";

const TRAJECTORY_HEADER: [&str; 10] = ["t", "agent", "px", "py", "vx", "vy", "ufx", "ufy", "usx", "usy"];
const BARRIER_HEADER: [&str; 5] = ["t", "agent", "obstacle", "h", "phi1"];
const ROUNDS_HEADER: [&str; 3] = ["t", "tau", "status"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentRecord {
    pub p: Vec2,
    pub v: Vec2,
    pub u_f: Vec2,
    pub u_s: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierRecord {
    pub agent: usize,
    pub obstacle: usize,
    pub h: f64,
    pub phi1: f64,
}

/// Something worth flagging that happened during a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepEvent {
    Saturated { agent: usize },
    ClosestPointFallback { agent: usize },
    NegotiationCap,
    DroppedRow { agent: usize, obstacle: usize },
    RelaxedSet { agent: usize },
    /// `h` below the safety tolerance at the recorded state.
    NegativeBarrier { agent: usize, obstacle: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub tau: usize,
    pub upsilon: usize,
    pub status: ProtocolStatus,
    pub agents: Vec<AgentRecord>,
    pub barriers: Vec<BarrierRecord>,
    pub messages: Vec<TraceRecord>,
    pub events: Vec<StepEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLog {
    pub scenario: Scenario,
    pub steps: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
struct MessageLine {
    step: usize,
    #[serde(flatten)]
    record: TraceRecord,
}

#[derive(Serialize, Deserialize)]
struct EventLine {
    step: usize,
    #[serde(flatten)]
    event: StepEvent,
}

fn csv_err(path: &Path, e: csv::Error) -> SimError {
    SimError::Trace {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn f(v: f64) -> String {
    v.to_string()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| SimError::io(path, e))?))
}

impl TraceLog {
    pub fn empty(scenario: Scenario) -> Self {
        Self {
            scenario,
            steps: Vec::new(),
        }
    }

    /// Writes the CSV tables, the message and event logs, and the scenario.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;

        let path = dir.join(TRAJECTORY_CSV);
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(TRAJECTORY_HEADER).map_err(|e| csv_err(&path, e))?;
        for s in &self.steps {
            for (i, a) in s.agents.iter().enumerate() {
                w.write_record([
                    f(s.t),
                    i.to_string(),
                    f(a.p.x),
                    f(a.p.y),
                    f(a.v.x),
                    f(a.v.y),
                    f(a.u_f.x),
                    f(a.u_f.y),
                    f(a.u_s.x),
                    f(a.u_s.y),
                ])
                .map_err(|e| csv_err(&path, e))?;
            }
        }
        w.flush().map_err(|e| SimError::io(&path, e))?;

        let path = dir.join(BARRIER_CSV);
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(BARRIER_HEADER).map_err(|e| csv_err(&path, e))?;
        for s in &self.steps {
            for b in &s.barriers {
                w.write_record([f(s.t), b.agent.to_string(), b.obstacle.to_string(), f(b.h), f(b.phi1)])
                    .map_err(|e| csv_err(&path, e))?;
            }
        }
        w.flush().map_err(|e| SimError::io(&path, e))?;

        let path = dir.join(ROUNDS_CSV);
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(ROUNDS_HEADER).map_err(|e| csv_err(&path, e))?;
        for s in &self.steps {
            w.write_record([f(s.t), s.tau.to_string(), s.status.as_str().to_string()])
                .map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| SimError::io(&path, e))?;

        let path = dir.join(MESSAGES_LOG);
        let mut w = create(&path)?;
        for s in &self.steps {
            for m in &s.messages {
                let line = MessageLine {
                    step: s.step,
                    record: m.clone(),
                };
                serde_json::to_writer(&mut w, &line)?;
                w.write_all(b"\n").map_err(|e| SimError::io(&path, e))?;
            }
        }
        w.flush().map_err(|e| SimError::io(&path, e))?;

        let path = dir.join(EVENTS_LOG);
        let mut w = create(&path)?;
        for s in &self.steps {
            for &event in &s.events {
                serde_json::to_writer(&mut w, &EventLine { step: s.step, event })?;
                w.write_all(b"\n").map_err(|e| SimError::io(&path, e))?;
            }
        }
        w.flush().map_err(|e| SimError::io(&path, e))?;

        let path = dir.join(SCENARIO_JSON);
        fs::write(&path, self.scenario.to_json() + "\n").map_err(|e| SimError::io(&path, e))?;
        Ok(())
    }

    /// Rebuilds a log from a directory written by [`TraceLog::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let scenario = Scenario::load(&dir.join(SCENARIO_JSON))?;
        let bad = |path: &Path, reason: String| SimError::Trace {
            path: path.to_path_buf(),
            reason,
        };

        let path = dir.join(ROUNDS_CSV);
        let mut r = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
        check_header(&path, &mut r, &ROUNDS_HEADER)?;
        let mut steps = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(&path, e))?;
            let status: ProtocolStatus = serde_json::from_value(serde_json::Value::String(rec[2].to_string()))
                .map_err(|e| bad(&path, format!("row {k}: {e}")))?;
            steps.push(StepRecord {
                step: k,
                t: parse(&path, &rec[0])?,
                tau: parse(&path, &rec[1])?,
                upsilon: 0,
                status,
                agents: Vec::new(),
                barriers: Vec::new(),
                messages: Vec::new(),
                events: Vec::new(),
            });
        }

        let path = dir.join(TRAJECTORY_CSV);
        let n = scenario.agents.len();
        let mut r = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
        check_header(&path, &mut r, &TRAJECTORY_HEADER)?;
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(&path, e))?;
            let v: Vec<f64> = rec.iter().map(|s| parse(&path, s)).collect::<Result<_>>()?;
            let s = steps
                .get_mut(row / n.max(1))
                .ok_or_else(|| bad(&path, format!("row {row} has no matching rounds entry")))?;
            s.agents.push(AgentRecord {
                p: Vec2::new(v[2], v[3]),
                v: Vec2::new(v[4], v[5]),
                u_f: Vec2::new(v[6], v[7]),
                u_s: Vec2::new(v[8], v[9]),
            });
        }

        let path = dir.join(BARRIER_CSV);
        let per_step = n * scenario.obstacles.len();
        let mut r = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
        check_header(&path, &mut r, &BARRIER_HEADER)?;
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(&path, e))?;
            let s = steps
                .get_mut(row / per_step.max(1))
                .ok_or_else(|| bad(&path, format!("row {row} has no matching rounds entry")))?;
            s.barriers.push(BarrierRecord {
                agent: parse(&path, &rec[1])?,
                obstacle: parse(&path, &rec[2])?,
                h: parse(&path, &rec[3])?,
                phi1: parse(&path, &rec[4])?,
            });
        }

        let path = dir.join(MESSAGES_LOG);
        if path.exists() {
            let file = File::open(&path).map_err(|e| SimError::io(&path, e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| SimError::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let m: MessageLine = serde_json::from_str(&line)?;
                if let Some(s) = steps.get_mut(m.step) {
                    s.messages.push(m.record);
                }
            }
        }
        let path = dir.join(EVENTS_LOG);
        if path.exists() {
            let file = File::open(&path).map_err(|e| SimError::io(&path, e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| SimError::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: EventLine = serde_json::from_str(&line)?;
                if let Some(s) = steps.get_mut(e.step) {
                    s.events.push(e.event);
                }
            }
        }
        Ok(Self { scenario, steps })
    }
}

fn check_header<R: std::io::Read>(path: &Path, r: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let h = r.headers().map_err(|e| csv_err(path, e))?;
    if h.iter().ne(expected.iter().copied()) {
        return Err(SimError::Trace {
            path: path.to_path_buf(),
            reason: format!("unexpected header {:?}", h.iter().collect::<Vec<_>>()),
        });
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T> {
    s.parse().map_err(|_| SimError::Trace {
        path: path.to_path_buf(),
        reason: format!("cannot parse `{s}`"),
    })
}
