use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{evaluate, run_scenario_with, Metrics, PlannerKind, ScenarioConfig, ScenarioTables};
use crate::error::{Error, Result};
use crate::game::{solve, ActionGrid, GridSpec, HighwayGame, ModelTag, SolverParams, ValueTable};
use crate::reward::RewardConfig;

/// Environment variable naming the on-disk value-table cache directory.
pub const CACHE_ENV: &str = "HIERGAME_CACHE";

/// Everything but `beta` that determines a solved table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepInputs {
    pub model: ModelTag,
    pub grid: GridSpec,
    pub actions: ActionGrid,
    pub rewards: RewardConfig,
    pub solver: SolverParams,
}

impl SweepInputs {
    pub fn default_for(model: ModelTag) -> Self {
        Self {
            model,
            grid: match model {
                ModelTag::FourD => GridSpec::default_4d(),
                _ => GridSpec::default_3d(),
            },
            actions: ActionGrid::for_model(model),
            rewards: RewardConfig::default(),
            solver: SolverParams::default(),
        }
    }

    /// Hex digest identifying the table solved at `beta`.
    pub fn cache_key(&self, beta: f64) -> String {
        let mut h = Sha256::new();
        h.update([self.model.to_byte()]);
        h.update(beta.to_le_bytes());
        for d in &self.grid.dims {
            h.update(d.name.as_bytes());
            h.update([0]);
            h.update(d.min.to_le_bytes());
            h.update(d.max.to_le_bytes());
            h.update(d.count.to_le_bytes());
        }
        for a in &self.actions.leader {
            h.update(a.lateral_velocity.to_le_bytes());
            h.update(a.accel.to_le_bytes());
        }
        h.update([0xff]);
        for a in &self.actions.follower {
            h.update(a.accel.to_le_bytes());
            h.update(a.lateral_velocity.to_le_bytes());
        }
        h.update((self.solver.horizon as u64).to_le_bytes());
        h.update(self.solver.alpha.to_le_bytes());
        h.update(self.solver.dk.to_le_bytes());
        h.update(self.rewards.hash());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Solved tables keyed by [`SweepInputs::cache_key`], in memory and
/// optionally on disk.
#[derive(Debug, Default)]
pub struct TableCache {
    dir: Option<PathBuf>,
    mem: HashMap<String, Arc<ValueTable>>,
}

impl TableCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            mem: HashMap::new(),
        }
    }

    /// Uses the directory in [`CACHE_ENV`] when set.
    pub fn from_env() -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(d) if !d.is_empty() => Self::with_dir(d),
            _ => Self::in_memory(),
        }
    }

    pub fn dir(&self) -> Option<&PathBuf> {
        self.dir.as_ref()
    }

    /// Returns the table for `beta` and whether it came from the cache.
    pub fn get_or_solve(&mut self, inputs: &SweepInputs, beta: f64) -> Result<(Arc<ValueTable>, bool)> {
        let key = inputs.cache_key(beta);
        if let Some(t) = self.mem.get(&key) {
            return Ok((t.clone(), true));
        }
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{key}.sgvt"));
            if path.exists() {
                let t = Arc::new(ValueTable::load(&path)?);
                self.mem.insert(key, t.clone());
                return Ok((t, true));
            }
        }
        let params = SolverParams { beta, ..inputs.solver };
        let game = HighwayGame::new(inputs.model, inputs.actions.clone(), inputs.rewards.clone(), &params)?;
        let t = Arc::new(solve(&game, &inputs.grid, &params)?);
        if let Some(dir) = &self.dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            // Write then rename so a concurrent reader never sees a partial file.
            let tmp = dir.join(format!("{key}.sgvt.{}.tmp", std::process::id()));
            let path = dir.join(format!("{key}.sgvt"));
            t.save(&tmp)?;
            std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        }
        self.mem.insert(key, t.clone());
        Ok((t, false))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub metrics: Metrics,
    /// Seconds spent solving or loading the table.
    pub solve_seconds: f64,
    pub cached: bool,
}

impl SweepRow {
    pub fn write_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["beta"];
        header.extend(Metrics::CSV_HEADER);
        header.extend(["solve_seconds", "cached"]);
        out.write_record(&header)?;
        for r in rows {
            let mut row = vec![r.beta.to_string()];
            row.extend(r.metrics.csv_fields());
            row.push(r.solve_seconds.to_string());
            row.push(r.cached.to_string());
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Solves (or fetches) a table per `beta`, runs the scenario with the
/// hierarchical planner of the inputs' model using that table for both
/// drivers, and scores each episode.
pub fn sweep_beta(
    scenario: &ScenarioConfig,
    betas: &[f64],
    inputs: &SweepInputs,
    cache: &mut TableCache,
) -> Result<Vec<SweepRow>> {
    if let Some(b) = betas.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
        return Err(Error::config(
            "betas",
            format!("{b} is not a finite non-negative number"),
        ));
    }
    let planner = match inputs.model {
        ModelTag::ThreeD => PlannerKind::Hier3d,
        ModelTag::FourD => PlannerKind::Hier4d,
        ModelTag::Custom => return Err(Error::config("model", "sweeps need a 3d or 4d model")),
    };
    let mut cfg = scenario.clone();
    cfg.planner = planner;
    cfg.rewards = inputs.rewards.clone();
    cfg.human.use_value = true;
    cfg.av_value = None;
    cfg.human_value = None;
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let start = Instant::now();
        let (table, cached) = cache.get_or_solve(inputs, beta)?;
        let solve_seconds = start.elapsed().as_secs_f64();
        let log = run_scenario_with(&cfg, &ScenarioTables::shared(table))?;
        rows.push(SweepRow {
            beta,
            metrics: evaluate(&log),
            solve_seconds,
            cached,
        });
    }
    Ok(rows)
}
