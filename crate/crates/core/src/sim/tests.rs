use super::*;
use crate::dynamics::{VehicleParams, LANE_WIDTH};
use crate::game::{GridDim, GridSpec};
use crate::Error;

fn record(t: f64, av: VehicleState, human: VehicleState, accel: f64) -> StepRecord {
    StepRecord {
        t,
        state: JointState { av, human, t },
        u_av: VehicleControl::new(0.0, accel),
        u_human: VehicleControl::ZERO,
        reward_av: 0.0,
        reward_human: 0.0,
        objective: 0.0,
        plan_rounds: 1,
        influence_fallback: false,
        value_av: None,
        value_human: None,
    }
}

/// Hand-built log: `path(k)` gives the AV and human states at step `k`.
fn synthetic(n: usize, path: impl Fn(usize) -> (VehicleState, VehicleState, f64)) -> EpisodeLog {
    let records: Vec<_> = (0..n)
        .map(|k| {
            let (a, h, acc) = path(k);
            record(k as f64 * 0.1, a, h, acc)
        })
        .collect();
    let (a, h, _) = path(n);
    EpisodeLog {
        config: ScenarioConfig::new(ScenarioName::EasyMerge, PlannerKind::Tactical),
        records,
        final_state: JointState {
            av: a,
            human: h,
            t: n as f64 * 0.1,
        },
        halted_on_collision: false,
    }
}

fn short(name: ScenarioName, planner: PlannerKind, seconds: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(name, planner);
    cfg.episode_length = seconds;
    cfg
}

fn small_inputs() -> SweepInputs {
    let mut inputs = SweepInputs::default_for(ModelTag::ThreeD);
    inputs.grid = GridSpec::new(vec![
        GridDim::new("x_rel", -40.0, 40.0, 41),
        GridDim::new("y_av", 0.0, 2.0 * LANE_WIDTH, 9),
        GridDim::new("v_rel", -10.0, 10.0, 21),
    ])
    .unwrap();
    inputs
}

#[test]
fn parallel_cars_never_collide() {
    let log = synthetic(50, |k| {
        let x = 3.0 * k as f64;
        (
            VehicleState::new(x, RIGHT_LANE_CENTER, 0.0, 30.0),
            VehicleState::new(x, LEFT_LANE_CENTER, 0.0, 30.0),
            0.0,
        )
    });
    let m = evaluate(&log);
    assert!(!m.collision);
    assert!(!m.success);
    assert!(!m.av_entered_left_lane);
    assert!((m.min_distance - (LEFT_LANE_CENTER - RIGHT_LANE_CENTER)).abs() < 1e-12);
    assert!((m.duration - 5.0).abs() < 1e-9);
    assert_eq!(m.final_gap, 0.0);
}

#[test]
fn overlap_is_a_collision_and_never_a_success() {
    let log = synthetic(30, |k| {
        let xa = 20.0 + 0.5 * k as f64;
        let ya = if k == 10 {
            LEFT_LANE_CENTER - 0.5
        } else {
            LEFT_LANE_CENTER
        };
        // Step 10 puts the AV 2 m from the human, half a meter off her line.
        let xh = if k == 10 { xa - 2.0 } else { 0.0 };
        (
            VehicleState::new(xa, ya, 0.0, 35.0),
            VehicleState::new(xh, LEFT_LANE_CENTER, 0.0, 30.0),
            0.0,
        )
    });
    assert!(footprints_overlap(&log.records[10].state));
    let m = evaluate(&log);
    assert!(m.collision);
    assert!(!m.success);
    assert_eq!(m.time_to_merge, None);
    assert!(m.min_distance < COLLISION_DISTANCE);
}

#[test]
fn time_to_merge_is_start_of_final_merged_stretch() {
    // Right lane until t = 8.0, then left lane 15 m ahead; a brief excursion
    // at t = 3.0 must not count.
    let log = synthetic(120, |k| {
        let y = if k >= 80 || k == 30 {
            LEFT_LANE_CENTER
        } else {
            RIGHT_LANE_CENTER
        };
        (
            VehicleState::new(15.0, y, 0.0, 30.0),
            VehicleState::new(0.0, LEFT_LANE_CENTER, 0.0, 30.0),
            if k == 5 { -3.0 } else { 0.5 },
        )
    });
    let m = evaluate(&log);
    assert!(m.success);
    assert!((m.time_to_merge.unwrap() - 8.0).abs() < 1e-9);
    assert_eq!(m.min_av_accel, -3.0);
    assert_eq!(m.max_av_speed, 30.0);
}

#[test]
fn success_needs_the_margin() {
    let log = synthetic(10, |_| {
        (
            VehicleState::new(SUCCESS_MARGIN - 0.01, LEFT_LANE_CENTER, 0.0, 30.0),
            VehicleState::new(0.0, RIGHT_LANE_CENTER, 0.0, 30.0),
            0.0,
        )
    });
    assert!(!evaluate(&log).success);
}

#[test]
fn left_lane_band_is_lane_boundary_plus_half_width() {
    assert!((LEFT_LANE_BAND - (LANE_WIDTH + FOOTPRINT_WIDTH / 2.0)).abs() < 1e-12);
    assert!((COLLISION_DISTANCE - FOOTPRINT_LENGTH.hypot(FOOTPRINT_WIDTH)).abs() < 1e-12);
}

#[test]
fn metrics_csv_has_one_field_per_column() {
    let log = synthetic(3, |_| {
        (
            VehicleState::new(0.0, 2.0, 0.0, 30.0),
            VehicleState::new(20.0, 5.5, 0.0, 30.0),
            0.0,
        )
    });
    let mut buf = Vec::new();
    evaluate(&log).write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].split(',').count(), Metrics::CSV_HEADER.len());
    assert_eq!(lines[1].split(',').count(), Metrics::CSV_HEADER.len());
}

#[test]
fn scenario_names_round_trip() {
    for n in ScenarioName::ALL {
        assert_eq!(n.to_string().parse::<ScenarioName>().unwrap(), n);
    }
    for p in PlannerKind::ALL {
        assert_eq!(p.to_string().parse::<PlannerKind>().unwrap(), p);
    }
    assert!("merge".parse::<ScenarioName>().is_err());
}

#[test]
fn default_scenarios_validate_and_wrong_ordering_does_not() {
    for n in ScenarioName::ALL {
        ScenarioConfig::new(n, PlannerKind::Tactical).validate().unwrap();
    }
    let mut cfg = ScenarioConfig::new(ScenarioName::HardMerge, PlannerKind::Tactical);
    cfg.initial.av.x = cfg.initial.human.x + 5.0;
    assert!(cfg.validate().is_err());
}

#[test]
fn episode_config_round_trips_through_json() {
    let cfg = ScenarioConfig::long_horizon_analysis();
    let s = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<ScenarioConfig>(&s).unwrap(), cfg);
}

#[test]
fn hierarchical_planner_without_table_is_an_error() {
    let cfg = short(ScenarioName::Overtaking, PlannerKind::Hier3d, 0.5);
    match run_scenario(&cfg) {
        Err(Error::MissingValueTable(_)) => {}
        other => panic!("expected a missing-table error, got {other:?}"),
    }
}

#[test]
fn table_of_wrong_model_is_rejected() {
    let mut cache = TableCache::in_memory();
    let (t3, _) = cache.get_or_solve(&small_inputs(), 1.0).unwrap();
    let cfg = short(ScenarioName::Overtaking, PlannerKind::Hier4d, 0.5);
    assert!(run_scenario_with(&cfg, &ScenarioTables::shared(t3)).is_err());
}

#[test]
fn episodes_are_repeatable_and_replay_consistent() {
    let cfg = short(ScenarioName::EasyMerge, PlannerKind::Tactical, 1.0);
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a.records.len(), cfg.steps());
    let (mut ja, mut jb) = (Vec::new(), Vec::new());
    a.write_jsonl(&mut ja).unwrap();
    b.write_jsonl(&mut jb).unwrap();
    assert_eq!(ja, jb);
    assert!(a.is_consistent(&VehicleParams::default()));
    for w in a.records.windows(2) {
        assert!((w[1].t - w[0].t - cfg.dt).abs() < 1e-9);
    }
}

#[test]
fn tampered_log_is_not_consistent() {
    let cfg = short(ScenarioName::EasyMerge, PlannerKind::Tactical, 0.5);
    let mut log = run_scenario(&cfg).unwrap();
    log.records[2].u_av.accel += 0.5;
    assert!(!log.is_consistent(&VehicleParams::default()));
}

#[test]
fn jsonl_and_csv_round_trip() {
    let cfg = short(ScenarioName::HardMerge, PlannerKind::Tactical, 0.6);
    let log = run_scenario(&cfg).unwrap();
    let mut buf = Vec::new();
    log.write_jsonl(&mut buf).unwrap();
    let back = EpisodeLog::read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back, log);
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), log.records.len() + 2);

    let mut csv_buf = Vec::new();
    log.write_csv(&mut csv_buf).unwrap();
    let mut rd = csv::Reader::from_reader(csv_buf.as_slice());
    let header = rd.headers().unwrap().clone();
    assert_eq!(header.len(), 21);
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), log.records.len() + 1);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for (row, r) in rows.iter().zip(&log.records) {
        assert_eq!(row[col("x_av")].parse::<f64>().unwrap(), r.state.av.x);
        assert_eq!(row[col("accel_h")].parse::<f64>().unwrap(), r.u_human.accel);
        assert_eq!(&row[col("final")], "0");
    }
    let last = rows.last().unwrap();
    assert_eq!(&last[col("final")], "1");
    assert_eq!(last[col("v_h")].parse::<f64>().unwrap(), log.final_state.human.v);
    assert_eq!(&last[col("steer_av")], "");
}

#[test]
fn truncated_jsonl_is_rejected() {
    let log = run_scenario(&short(ScenarioName::EasyMerge, PlannerKind::Tactical, 0.3)).unwrap();
    let mut buf = Vec::new();
    log.write_jsonl(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let without_end: String = text
        .lines()
        .take(log.records.len() + 1)
        .map(|l| format!("{l}\n"))
        .collect();
    assert!(EpisodeLog::read_jsonl(without_end.as_bytes()).is_err());
    let without_config: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    assert!(EpisodeLog::read_jsonl(without_config.as_bytes()).is_err());
}

#[test]
fn unavoidable_crash_halts_the_episode() {
    let mut cfg = short(ScenarioName::Overtaking, PlannerKind::Tactical, 3.0);
    cfg.initial.av = VehicleState::new(-6.0, LEFT_LANE_CENTER, 0.0, 40.0);
    cfg.initial.human = VehicleState::new(0.0, LEFT_LANE_CENTER, 0.0, 20.0);
    let log = run_scenario(&cfg).unwrap();
    assert!(log.halted_on_collision);
    assert!(log.records.len() < cfg.steps());
    assert!(footprints_overlap(&log.final_state));
    let m = evaluate(&log);
    assert!(m.collision && !m.success);
}

#[test]
fn constant_speed_human_holds_lane_and_speed() {
    let mut cfg = ScenarioConfig::long_horizon_analysis();
    cfg.planner = PlannerKind::Tactical;
    cfg.episode_length = 3.0;
    let log = run_scenario(&cfg).unwrap();
    for s in log.states() {
        assert!((s.human.y - LEFT_LANE_CENTER).abs() < 0.2);
        assert!((s.human.v - 24.0).abs() < 0.1);
    }
}

#[test]
fn sweep_reuses_cached_tables() {
    let inputs = small_inputs();
    let cfg = short(ScenarioName::Overtaking, PlannerKind::Hier3d, 0.3);
    let mut cache = TableCache::in_memory();
    let rows = sweep_beta(&cfg, &[1.0, 1.0, 0.5], &inputs, &mut cache).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(!rows[0].cached && rows[1].cached && !rows[2].cached);
    assert!(rows[1].solve_seconds < 0.01 * rows[0].solve_seconds);
    assert_eq!(rows[0].metrics, rows[1].metrics);

    let mut buf = Vec::new();
    SweepRow::write_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("beta,success,"));
}

#[test]
fn disk_cache_survives_a_new_cache() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = small_inputs();
    let (first, cached) = TableCache::with_dir(dir.path()).get_or_solve(&inputs, 2.0).unwrap();
    assert!(!cached);
    let key = inputs.cache_key(2.0);
    assert!(dir.path().join(format!("{key}.sgvt")).exists());
    let (again, cached) = TableCache::with_dir(dir.path()).get_or_solve(&inputs, 2.0).unwrap();
    assert!(cached);
    assert_eq!(*again, *first);
}

#[test]
fn cache_key_depends_on_every_input() {
    let base = small_inputs();
    let k = base.cache_key(1.0);
    assert_eq!(k, small_inputs().cache_key(1.0));
    assert_ne!(k, base.cache_key(1.5));
    let mut r = base.clone();
    r.rewards.av.heading += 1.0;
    assert_ne!(k, r.cache_key(1.0));
    let mut g = base.clone();
    g.grid.dims[0].count += 2;
    assert_ne!(k, g.cache_key(1.0));
    let mut s = base.clone();
    s.solver.horizon += 1;
    assert_ne!(k, s.cache_key(1.0));
}

#[test]
fn negative_beta_is_rejected() {
    let cfg = short(ScenarioName::Overtaking, PlannerKind::Hier3d, 0.3);
    assert!(sweep_beta(&cfg, &[-1.0], &small_inputs(), &mut TableCache::in_memory()).is_err());
}
