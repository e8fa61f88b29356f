use std::io::Write;

use serde::{Deserialize, Serialize};

use super::EpisodeLog;
use crate::dynamics::{JointState, LANE_WIDTH};
use crate::error::Result;

pub const FOOTPRINT_LENGTH: f64 = 4.5;
pub const FOOTPRINT_WIDTH: f64 = 1.8;
/// Center distance below which footprints may overlap.
pub const COLLISION_DISTANCE: f64 = 4.846_648_326_421_054;
/// Lowest AV lateral position counted as being in the left lane.
pub const LEFT_LANE_BAND: f64 = LANE_WIDTH + 0.9;
/// Lead over the human required at the end of a successful maneuver.
pub const SUCCESS_MARGIN: f64 = 10.0;

/// Axis-aligned overlap of the two vehicle footprints.
pub fn footprints_overlap(x: &JointState) -> bool {
    (x.av.x - x.human.x).abs() < FOOTPRINT_LENGTH && (x.av.y - x.human.y).abs() < FOOTPRINT_WIDTH
}

fn merged(x: &JointState) -> bool {
    x.av.y >= LEFT_LANE_BAND && x.av.x - x.human.x >= SUCCESS_MARGIN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub success: bool,
    pub collision: bool,
    pub min_distance: f64,
    pub time_to_merge: Option<f64>,
    pub max_av_speed: f64,
    /// `x_A - x_H` at the end of the episode.
    pub final_gap: f64,
    /// Whether the AV was ever inside the left-lane band.
    pub av_entered_left_lane: bool,
    pub min_av_accel: f64,
    pub duration: f64,
}

/// Scores an episode. Success means the AV ends in the left-lane band at
/// least [`SUCCESS_MARGIN`] ahead without any collision; time-to-merge is
/// the start of the final stretch over which that holds.
pub fn evaluate(log: &EpisodeLog) -> Metrics {
    let states: Vec<&JointState> = log.states().collect();
    let collision = log.halted_on_collision || states.iter().any(|s| footprints_overlap(s));
    let min_distance = states
        .iter()
        .map(|s| (s.av.x - s.human.x).hypot(s.av.y - s.human.y))
        .fold(f64::INFINITY, f64::min);
    let max_av_speed = states.iter().map(|s| s.av.v).fold(f64::NEG_INFINITY, f64::max);
    let min_av_accel = log.records.iter().map(|r| r.u_av.accel).fold(f64::INFINITY, f64::min);
    let last = log.final_state;
    let success = !collision && merged(&last);
    let time_to_merge = if success {
        let first = states.iter().rposition(|s| !merged(s)).map_or(0, |i| i + 1);
        Some(states[first].t)
    } else {
        None
    };
    Metrics {
        success,
        collision,
        min_distance,
        time_to_merge,
        max_av_speed,
        final_gap: last.av.x - last.human.x,
        av_entered_left_lane: states.iter().any(|s| s.av.y >= LEFT_LANE_BAND),
        min_av_accel,
        duration: last.t - states[0].t,
    }
}

impl Metrics {
    pub const CSV_HEADER: [&'static str; 9] = [
        "success",
        "collision",
        "min_distance",
        "time_to_merge",
        "max_av_speed",
        "final_gap",
        "av_entered_left_lane",
        "min_av_accel",
        "duration",
    ];

    pub fn csv_fields(&self) -> [String; 9] {
        [
            self.success.to_string(),
            self.collision.to_string(),
            self.min_distance.to_string(),
            self.time_to_merge.map(|t| t.to_string()).unwrap_or_default(),
            self.max_av_speed.to_string(),
            self.final_gap.to_string(),
            self.av_entered_left_lane.to_string(),
            self.min_av_accel.to_string(),
            self.duration.to_string(),
        ]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::CSV_HEADER)?;
        out.write_record(self.csv_fields())?;
        out.flush().map_err(|e| crate::error::Error::io("<csv>", e))?;
        Ok(())
    }
}
