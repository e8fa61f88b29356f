//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use hiergame::game::{ActionGrid, GridDim, GridSpec, HighwayGame, SolverParams};
use hiergame::planner::PlannerConfig;
use hiergame::{ModelTag, RewardConfig, ValueTable};

/// Default game on a coarsened 3-D grid, small enough to solve many times.
pub fn coarse_3d() -> (HighwayGame, GridSpec, SolverParams) {
    let params = SolverParams::default();
    let game = HighwayGame::new(
        ModelTag::ThreeD,
        ActionGrid::default_3d(),
        RewardConfig::default(),
        &params,
    )
    .unwrap();
    let grid = GridSpec::new(vec![
        GridDim::new("x_rel", -50.0, 50.0, 41),
        GridDim::new("y_av", 0.0, 7.4, 9),
        GridDim::new("v_rel", -10.5, 10.5, 15),
    ])
    .unwrap();
    (game, grid, params)
}

/// Smooth synthetic table on the model's default grid.
pub fn smooth_table(model: ModelTag) -> ValueTable {
    let grid = match model {
        ModelTag::FourD => GridSpec::default_4d(),
        _ => GridSpec::default_3d(),
    };
    ValueTable::from_fn(model, grid, 10, |p| {
        (0.1 * p[0]).tanh() + (p[1] - 5.55).powi(2) * -0.2 + p.last().unwrap() * 0.05
    })
}

/// Planner settings with `table` as both players' terminal value.
pub fn hierarchical_config(table: ValueTable) -> PlannerConfig {
    let t = Arc::new(table);
    PlannerConfig {
        use_value: true,
        av_value: Some(t.clone()),
        human_value: Some(t),
        ..PlannerConfig::default()
    }
}
