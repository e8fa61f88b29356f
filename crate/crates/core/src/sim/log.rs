use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScenarioConfig;
use crate::dynamics::{step_joint, JointState, VehicleControl, VehicleParams};
use crate::error::{Error, Result};

/// One closed-loop step: the state before the step and what acted on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub state: JointState,
    pub u_av: VehicleControl,
    pub u_human: VehicleControl,
    pub reward_av: f64,
    pub reward_human: f64,
    /// AV planner objective of the plan the step came from.
    pub objective: f64,
    pub plan_rounds: usize,
    pub influence_fallback: bool,
    pub value_av: Option<f64>,
    pub value_human: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub config: ScenarioConfig,
    pub records: Vec<StepRecord>,
    /// State after the last record.
    pub final_state: JointState,
    pub halted_on_collision: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Line {
    Config(ScenarioConfig),
    Step(StepRecord),
    End {
        final_state: JointState,
        halted_on_collision: bool,
    },
}

const CSV_HEADER: [&str; 21] = [
    "t",
    "x_av",
    "y_av",
    "psi_av",
    "v_av",
    "x_h",
    "y_h",
    "psi_h",
    "v_h",
    "steer_av",
    "accel_av",
    "steer_h",
    "accel_h",
    "reward_av",
    "reward_h",
    "objective",
    "rounds",
    "influence_fallback",
    "value_av",
    "value_h",
    "final",
];

impl EpisodeLog {
    /// All visited states, final state included.
    pub fn states(&self) -> impl Iterator<Item = &JointState> {
        self.records
            .iter()
            .map(|r| &r.state)
            .chain(std::iter::once(&self.final_state))
    }

    /// Whether replaying the logged controls reproduces the logged states.
    pub fn is_consistent(&self, params: &VehicleParams) -> bool {
        let next = self
            .records
            .iter()
            .skip(1)
            .map(|r| &r.state)
            .chain(std::iter::once(&self.final_state));
        self.records
            .iter()
            .zip(next)
            .all(|(r, n)| step_joint(&r.state, &r.u_av, &r.u_human, self.config.dt, params).is_ok_and(|s| s == *n))
    }

    /// Line-delimited JSON: a `config` line, one `step` line per record in
    /// time order, and an `end` line with the final state.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &Line::Config(self.config.clone()))?;
        writeln!(w).map_err(|e| Error::io("<jsonl>", e))?;
        for r in &self.records {
            serde_json::to_writer(&mut w, &Line::Step(r.clone()))?;
            writeln!(w).map_err(|e| Error::io("<jsonl>", e))?;
        }
        serde_json::to_writer(
            &mut w,
            &Line::End {
                final_state: self.final_state,
                halted_on_collision: self.halted_on_collision,
            },
        )?;
        writeln!(w).map_err(|e| Error::io("<jsonl>", e))?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut config = None;
        let mut records = Vec::new();
        let mut end = None;
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("<jsonl>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line)? {
                Line::Config(c) => config = Some(c),
                Line::Step(s) => records.push(s),
                Line::End {
                    final_state,
                    halted_on_collision,
                } => end = Some((final_state, halted_on_collision)),
            }
        }
        let config = config.ok_or_else(|| Error::Format("episode log has no config line".into()))?;
        let (final_state, halted_on_collision) =
            end.ok_or_else(|| Error::Format("episode log has no end line".into()))?;
        Ok(Self {
            config,
            records,
            final_state,
            halted_on_collision,
        })
    }

    /// One row per record plus a last row (`final` = 1) holding the final
    /// state with empty control columns.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let state = |s: &JointState| {
            [
                s.av.x,
                s.av.y,
                s.av.psi,
                s.av.v,
                s.human.x,
                s.human.y,
                s.human.psi,
                s.human.v,
            ]
            .map(|v| v.to_string())
        };
        for r in &self.records {
            let mut row = vec![r.t.to_string()];
            row.extend(state(&r.state));
            row.extend(
                [
                    r.u_av.steer,
                    r.u_av.accel,
                    r.u_human.steer,
                    r.u_human.accel,
                    r.reward_av,
                    r.reward_human,
                    r.objective,
                ]
                .map(|v| v.to_string()),
            );
            row.push(r.plan_rounds.to_string());
            row.push((r.influence_fallback as u8).to_string());
            row.push(opt(r.value_av));
            row.push(opt(r.value_human));
            row.push("0".into());
            out.write_record(&row)?;
        }
        let mut row = vec![self.final_state.t.to_string()];
        row.extend(state(&self.final_state));
        row.extend(std::iter::repeat_n(String::new(), 11));
        row.push("1".into());
        out.write_record(&row)?;
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(BufReader::new(f))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(BufWriter::new(f))
    }
}
