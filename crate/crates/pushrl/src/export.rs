//! On-disk episode format.
//!
//! `episodes.csv` has one row per logged step with columns
//! `episode_id, step, px, py, ptheta, ox, oy, otheta, cx, cy, ctheta, dy,
//! dtheta, reward, mode, status`. Poses are world frame (`p` pusher, `o`
//! object, `c` contact frame); `mode` is empty on the reset row; `status` is
//! the episode outcome repeated on each row. `summary.json` carries the
//! schema version, the scenario spec, the statistics and per-episode goal
//! and seed. Floats are written in shortest round-trip form.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use pushrl_core::env::{Action, Goal};
use pushrl_core::geom::Pose2;
use pushrl_core::physics::ContactMode;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{EpisodeLog, ScenarioSpec, Status, StepRecord, SummaryStats};

pub const SUMMARY_SCHEMA: u32 = 1;
pub const EPISODES_FILE: &str = "episodes.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub const COLUMNS: [&str; 16] =
    ["episode_id", "step", "px", "py", "ptheta", "ox", "oy", "otheta", "cx", "cy", "ctheta", "dy", "dtheta", "reward", "mode", "status"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeMeta {
    pub episode_id: usize,
    pub goal: Goal,
    pub seed: u64,
    pub status: Status,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub schema_version: u32,
    pub scenario: Option<ScenarioSpec>,
    pub stats: SummaryStats,
    pub episodes: Vec<EpisodeMeta>,
}

impl Summary {
    pub fn new(logs: &[EpisodeLog], stats: SummaryStats, scenario: Option<ScenarioSpec>) -> Self {
        let episodes = logs
            .iter()
            .map(|l| EpisodeMeta { episode_id: l.episode_id, goal: l.goal, seed: l.seed, status: l.status, steps: l.env_steps() })
            .collect();
        Self { schema_version: SUMMARY_SCHEMA, scenario, stats, episodes }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Summary = serde_path_to_error::deserialize(de).map_err(|e| Error::format("summary", e))?;
        if s.schema_version != SUMMARY_SCHEMA {
            return Err(Error::format("summary", format!("schema {} (expected {SUMMARY_SCHEMA})", s.schema_version)));
        }
        Ok(s)
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_episodes_csv<W: Write>(logs: &[EpisodeLog], out: W) -> Result<()> {
    let err = |e: csv::Error| Error::format("episodes csv", e);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS).map_err(err)?;
    for log in logs {
        for s in &log.steps {
            let poses = [s.pusher, s.object, s.contact];
            let mut row = vec![log.episode_id.to_string(), s.step.to_string()];
            row.extend(poses.iter().flat_map(|p| [num(p.x), num(p.y), num(p.theta)]));
            row.extend([num(s.action.dy), num(s.action.dtheta), num(s.reward)]);
            row.push(s.mode.map_or("", |m| m.as_str()).to_string());
            row.push(log.status.as_str().to_string());
            w.write_record(&row).map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::format("episodes csv", e))
}

/// Rows grouped per episode in file order: `(episode_id, status, steps)`.
pub fn read_episodes_csv<R: Read>(input: R) -> Result<Vec<(usize, Status, Vec<StepRecord>)>> {
    let bad = |line: u64, m: String| Error::format("episodes csv", format!("line {line}: {m}"));
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| Error::format("episodes csv", e))?;
    if header.iter().ne(COLUMNS) {
        return Err(Error::format("episodes csv", format!("header must be {}", COLUMNS.join(","))));
    }
    let mut out: Vec<(usize, Status, Vec<StepRecord>)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::format("episodes csv", e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| bad(line, format!("column {} is not a number", COLUMNS[i]))) };
        let u = |i: usize| -> Result<usize> { rec[i].parse().map_err(|_| bad(line, format!("column {} is not an integer", COLUMNS[i]))) };
        let id = u(0)?;
        let mode = match &rec[14] {
            "" => None,
            m => Some(ContactMode::parse(m).ok_or_else(|| bad(line, format!("unknown mode `{m}`")))?),
        };
        let status = Status::parse(&rec[15]).ok_or_else(|| bad(line, format!("unknown status `{}`", &rec[15])))?;
        let step = StepRecord {
            step: u(1)?,
            pusher: Pose2::new(f(2)?, f(3)?, f(4)?),
            object: Pose2::new(f(5)?, f(6)?, f(7)?),
            contact: Pose2::new(f(8)?, f(9)?, f(10)?),
            action: Action::new(f(11)?, f(12)?),
            reward: f(13)?,
            mode,
        };
        match out.last_mut() {
            Some((last, st, steps)) if *last == id => {
                if *st != status {
                    return Err(bad(line, "status changes within an episode".into()));
                }
                steps.push(step);
            }
            _ => out.push((id, status, vec![step])),
        }
        let steps = &out.last().expect("just pushed").2;
        if step.step != steps.len() - 1 {
            return Err(bad(line, format!("step {} out of sequence", step.step)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ExportPaths {
    pub episodes: PathBuf,
    pub summary: PathBuf,
}

/// Writes `episodes.csv` and `summary.json` into `dir`, creating it.
pub fn export(logs: &[EpisodeLog], stats: &SummaryStats, scenario: Option<&ScenarioSpec>, dir: &Path) -> Result<ExportPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = ExportPaths { episodes: dir.join(EPISODES_FILE), summary: dir.join(SUMMARY_FILE) };
    let file = File::create(&paths.episodes).map_err(|e| Error::io(&paths.episodes, e))?;
    write_episodes_csv(logs, std::io::BufWriter::new(file))?;
    let summary = Summary::new(logs, stats.clone(), scenario.cloned());
    std::fs::write(&paths.summary, summary.to_json()).map_err(|e| Error::io(&paths.summary, e))?;
    Ok(paths)
}

/// Reads back an [`export`] directory.
pub fn import(dir: &Path) -> Result<(Vec<EpisodeLog>, Summary)> {
    let sp = dir.join(SUMMARY_FILE);
    let summary = Summary::from_json(&std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?)?;
    let ep = dir.join(EPISODES_FILE);
    let rows = read_episodes_csv(File::open(&ep).map_err(|e| Error::io(&ep, e))?)?;
    if rows.len() != summary.episodes.len() {
        return Err(Error::format("export", format!("{} episodes in csv, {} in summary", rows.len(), summary.episodes.len())));
    }
    let logs = rows
        .into_iter()
        .zip(&summary.episodes)
        .map(|((id, status, steps), m)| {
            if id != m.episode_id || status != m.status || steps.len() != m.steps + 1 {
                return Err(Error::format("export", format!("episode {id} disagrees with the summary")));
            }
            Ok(EpisodeLog { episode_id: id, goal: m.goal, seed: m.seed, status, steps })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((logs, summary))
}
