//! Grid model of a small car driving through track segments.
//!
//! A state is `(side, front, heading, tau)`: lateral position, distance to
//! the segment's front wall, heading in eighths of a turn (0 faces the front
//! wall) and the step counter within the current segment. Each segment is a
//! scenario `(e, horizon)` for `e ∈ {left, right, straight}`.
//!
//! One step of the dynamics for segment `e`:
//!
//! * `tau < horizon`, position already in the finish region `F_e`: the car
//!   is parked; only `tau` advances.
//! * `tau < horizon` otherwise: the heading turns by the control input, then
//!   the car moves one cell along the *new* heading. Leaving
//!   `Track ∪ Track_e ∪ F_e` is an error.
//! * `tau = horizon` inside `F_e`: the state is re-expressed in the next
//!   segment's frame with `tau = 1`. For `left` this is
//!   `(exit_offset − front, start_front, heading − 2, 1)`, for `right`
//!   `(front − exit_offset, start_front, heading + 2, 1)`, for `straight`
//!   `(side, start_front, heading, 1)`.
//! * `tau = horizon` outside `F_e`: error.
//!
//! # Default geometry
//!
//! With corridor half-width `w` (3 by default) and grid half-width `R`:
//!
//! * `Track` is the straight corridor `|side| ≤ w`, `0 ≤ front ≤ front_range`.
//! * `Track_left` is the side corridor `−R ≤ side ≤ −w − 1`, `0 ≤ front ≤ 2w`,
//!   and `F_left` its last column `side = −R`. `right` mirrors this.
//! * `Track_straight` is empty and `F_straight` is the row `front = 0`.
//!
//! The side corridor spans `2w + 1` rows so that `exit_offset = w` maps it
//! onto `|side| ≤ w` of the next segment.
//!
//! # Controller
//!
//! The controller computes a target heading from the estimated position and
//! turns one step toward it (the shorter way, `+1` on a half-turn tie):
//!
//! * `straight`: heading 0; while `front > w + 1` and `|side| > 1`, the
//!   diagonal back toward the centerline (1 for `side > 1`, 7 for `side < −1`).
//! * `left`: heading 0 while `front > w + 1`, 1 at `front = w + 1`, then 2
//!   (toward negative `side`); always 2 once inside the side corridor.
//! * `right`: the mirror image with headings 0, 7, 6.
//!
//! From any start with heading 0, `|side| ≤ w` and `front = start_front` it
//! reaches `F_e` before the horizon and leaves the segment with heading 0,
//! so with exact estimates every track sequence is error free.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cases::EstimateLayout;
use crate::error::{Error, Result};
use crate::model::{Controller, Dynamics, StateSpace};

pub const HEADINGS: u8 = 8;
pub const ERROR_LABEL: &str = "err";
/// Control alphabet, by index.
pub const CONTROLS: [i32; 3] = [-1, 0, 1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Left,
    Right,
    Straight,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Left, Segment::Right, Segment::Straight];

    pub fn id(&self) -> &'static str {
        match self {
            Segment::Left => "left",
            Segment::Right => "right",
            Segment::Straight => "straight",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|seg| seg.id() == s)
    }
}

/// Inclusive rectangle of grid cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub side: [i32; 2],
    pub front: [i32; 2],
}

impl Rect {
    pub fn new(side: [i32; 2], front: [i32; 2]) -> Self {
        Self { side, front }
    }

    pub fn contains(&self, side: i32, front: i32) -> bool {
        (self.side[0]..=self.side[1]).contains(&side) && (self.front[0]..=self.front[1]).contains(&front)
    }
}

/// Union of rectangles; single cells are degenerate rectangles.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Region(pub Vec<Rect>);

impl Region {
    pub fn contains(&self, side: i32, front: i32) -> bool {
        self.0.iter().any(|r| r.contains(side, front))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentGeometry {
    /// Cells usable in this segment besides the shared track.
    pub track: Region,
    /// Cells that complete the segment.
    pub finish: Region,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct F1TenthConfig {
    /// `side ∈ −side_range..=side_range`.
    pub side_range: i32,
    /// `front ∈ 0..=front_range`.
    pub front_range: i32,
    pub headings: u8,
    /// Steps per segment; `tau ∈ 1..=horizon`.
    pub horizon: u32,
    /// `front` at the start of every segment.
    pub start_front: i32,
    /// Offset in the side-corridor exit remapping.
    pub exit_offset: i32,
    /// Half-width of the straight corridor (used by the controller).
    pub half_width: i32,
    pub track: Region,
    pub left: SegmentGeometry,
    pub right: SegmentGeometry,
    pub straight: SegmentGeometry,
}

impl Default for F1TenthConfig {
    fn default() -> Self {
        Self::with_grid(7, 16, 30, 3)
    }
}

impl F1TenthConfig {
    /// Default geometry on a grid of the given size.
    pub fn with_grid(side_range: i32, front_range: i32, horizon: u32, half_width: i32) -> Self {
        let w = half_width;
        let r = side_range;
        Self {
            side_range,
            front_range,
            headings: HEADINGS,
            horizon,
            start_front: front_range - 1,
            exit_offset: w,
            half_width: w,
            track: Region(vec![Rect::new([-w, w], [0, front_range])]),
            left: SegmentGeometry {
                track: Region(vec![Rect::new([-r, -w - 1], [0, 2 * w])]),
                finish: Region(vec![Rect::new([-r, -r], [0, 2 * w])]),
            },
            right: SegmentGeometry {
                track: Region(vec![Rect::new([w + 1, r], [0, 2 * w])]),
                finish: Region(vec![Rect::new([r, r], [0, 2 * w])]),
            },
            straight: SegmentGeometry {
                track: Region::default(),
                finish: Region(vec![Rect::new([-w, w], [0, 0])]),
            },
        }
    }

    /// Small grid for quick runs: side 4, front 9, horizon 12, half-width 2.
    pub fn reduced() -> Self {
        Self::with_grid(4, 9, 12, 2)
    }

    pub fn geometry(&self, seg: Segment) -> &SegmentGeometry {
        match seg {
            Segment::Left => &self.left,
            Segment::Right => &self.right,
            Segment::Straight => &self.straight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.headings != HEADINGS {
            return bad(format!("headings must be {HEADINGS}"));
        }
        if self.side_range < 1 || self.front_range < 1 || self.horizon < 2 {
            return bad("grid needs side_range ≥ 1, front_range ≥ 1, horizon ≥ 2".into());
        }
        if !(0..=self.front_range).contains(&self.start_front) {
            return bad(format!("start_front {} is off the grid", self.start_front));
        }
        let regions = std::iter::once(&self.track).chain(
            Segment::ALL
                .iter()
                .flat_map(|&s| [&self.geometry(s).track, &self.geometry(s).finish]),
        );
        for region in regions {
            for r in &region.0 {
                let inside = r.side[0] >= -self.side_range
                    && r.side[1] <= self.side_range
                    && r.front[0] >= 0
                    && r.front[1] <= self.front_range
                    && r.side[0] <= r.side[1]
                    && r.front[0] <= r.front[1];
                if !inside {
                    return bad(format!("region {r:?} is not a rectangle inside the grid"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CarState {
    pub side: i32,
    pub front: i32,
    pub heading: u8,
    pub tau: u32,
}

impl CarState {
    pub fn label(&self) -> String {
        format!("({},{},{},{})", self.side, self.front, self.heading, self.tau)
    }
}

/// Position change for a move along `heading`.
fn step_delta(heading: u8) -> (i32, i32) {
    let side = match heading {
        1..=3 => -1,
        5..=7 => 1,
        _ => 0,
    };
    let front = match heading {
        0 | 1 | 7 => -1,
        3..=5 => 1,
        _ => 0,
    };
    (side, front)
}

fn turn(heading: u8, by: i32) -> u8 {
    (heading as i32 + by).rem_euclid(HEADINGS as i32) as u8
}

/// Dynamics and controller over an indexed state space.
#[derive(Clone, Debug)]
pub struct F1TenthModel {
    cfg: F1TenthConfig,
    space: Arc<StateSpace>,
    width: i32,
    depth: i32,
}

impl F1TenthModel {
    pub fn new(cfg: F1TenthConfig) -> Result<Self> {
        cfg.validate()?;
        let width = 2 * cfg.side_range + 1;
        let depth = cfg.front_range + 1;
        let mut labels = Vec::with_capacity((width * depth) as usize * 8 * cfg.horizon as usize + 1);
        for side in -cfg.side_range..=cfg.side_range {
            for front in 0..=cfg.front_range {
                for heading in 0..HEADINGS {
                    for tau in 1..=cfg.horizon {
                        labels.push(CarState { side, front, heading, tau }.label());
                    }
                }
            }
        }
        let space = Arc::new(StateSpace::new(labels, ERROR_LABEL)?);
        Ok(Self {
            cfg,
            space,
            width,
            depth,
        })
    }

    pub fn config(&self) -> &F1TenthConfig {
        &self.cfg
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn error_index(&self) -> usize {
        self.space.error_index()
    }

    pub fn index(&self, s: &CarState) -> usize {
        let h = self.cfg.horizon as usize;
        let cell = ((s.side + self.cfg.side_range) * self.depth + s.front) as usize;
        (cell * HEADINGS as usize + s.heading as usize) * h + (s.tau as usize - 1)
    }

    /// `None` for the error state.
    pub fn decode(&self, i: usize) -> Option<CarState> {
        if i >= self.space.non_error_len() {
            return None;
        }
        let h = self.cfg.horizon as usize;
        let tau = (i % h) as u32 + 1;
        let rest = i / h;
        let heading = (rest % HEADINGS as usize) as u8;
        let cell = (rest / HEADINGS as usize) as i32;
        Some(CarState {
            side: cell / self.depth - self.cfg.side_range,
            front: cell % self.depth,
            heading,
            tau,
        })
    }

    fn on_grid(&self, side: i32, front: i32) -> bool {
        side.abs() <= self.cfg.side_range && (0..=self.cfg.front_range).contains(&front)
    }

    /// Estimates drop the step counter: `(side, front, heading)`.
    pub fn num_estimates(&self) -> usize {
        (self.width * self.depth) as usize * HEADINGS as usize
    }

    fn estimate_index(&self, side: i32, front: i32, heading: u8) -> usize {
        (((side + self.cfg.side_range) * self.depth + front) as usize) * HEADINGS as usize
            + heading as usize
    }

    fn decode_estimate(&self, y: usize) -> (i32, i32, u8) {
        let heading = (y % HEADINGS as usize) as u8;
        let cell = (y / HEADINGS as usize) as i32;
        (cell / self.depth - self.cfg.side_range, cell % self.depth, heading)
    }

    /// Correct estimate of each state; neighbors differ by one in exactly
    /// one of side, front or heading (cyclically).
    pub fn layout(&self) -> EstimateLayout {
        let n = self.space.non_error_len();
        let truth = (0..n)
            .map(|i| {
                let s = self.decode(i).expect("non-error");
                self.estimate_index(s.side, s.front, s.heading)
            })
            .collect();
        let neighbors = (0..self.num_estimates())
            .map(|y| {
                let (side, front, heading) = self.decode_estimate(y);
                let mut v = Vec::with_capacity(6);
                for (ds, df) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    if self.on_grid(side + ds, front + df) {
                        v.push(self.estimate_index(side + ds, front + df, heading));
                    }
                }
                v.push(self.estimate_index(side, front, turn(heading, -1)));
                v.push(self.estimate_index(side, front, turn(heading, 1)));
                v.sort_unstable();
                v
            })
            .collect();
        EstimateLayout {
            num_estimates: self.num_estimates(),
            truth,
            neighbors,
        }
    }

    /// Segment start states with heading 0, `|side| ≤ 2`, `tau = 1`.
    pub fn nominal_starts(&self) -> Vec<usize> {
        (-2..=2)
            .filter(|s: &i32| s.abs() <= self.cfg.side_range)
            .map(|side| {
                self.index(&CarState {
                    side,
                    front: self.cfg.start_front,
                    heading: 0,
                    tau: 1,
                })
            })
            .collect()
    }

    fn allowed(&self, seg: Segment, side: i32, front: i32) -> bool {
        let g = self.cfg.geometry(seg);
        self.cfg.track.contains(side, front) || g.track.contains(side, front) || g.finish.contains(side, front)
    }

    /// One step of the dynamics; `None` is the error state.
    pub fn step(&self, seg: Segment, s: Option<CarState>, u: i32) -> Option<CarState> {
        let s = s?;
        let finish = &self.cfg.geometry(seg).finish;
        if s.tau < self.cfg.horizon {
            if finish.contains(s.side, s.front) {
                return Some(CarState { tau: s.tau + 1, ..s });
            }
            let heading = turn(s.heading, u);
            let (ds, df) = step_delta(heading);
            let (side, front) = (s.side + ds, s.front + df);
            if self.on_grid(side, front) && self.allowed(seg, side, front) {
                Some(CarState {
                    side,
                    front,
                    heading,
                    tau: s.tau + 1,
                })
            } else {
                None
            }
        } else if finish.contains(s.side, s.front) {
            let (side, heading) = match seg {
                Segment::Left => (self.cfg.exit_offset - s.front, turn(s.heading, -2)),
                Segment::Right => (s.front - self.cfg.exit_offset, turn(s.heading, 2)),
                Segment::Straight => (s.side, s.heading),
            };
            let next = CarState {
                side,
                front: self.cfg.start_front,
                heading,
                tau: 1,
            };
            self.on_grid(next.side, next.front).then_some(next)
        } else {
            None
        }
    }

    fn target_heading(&self, seg: Segment, side: i32, front: i32) -> u8 {
        let w = self.cfg.half_width;
        match seg {
            Segment::Straight => {
                if front > w + 1 && side > 1 {
                    1
                } else if front > w + 1 && side < -1 {
                    7
                } else {
                    0
                }
            }
            Segment::Left => {
                if side < -w || front <= w {
                    2
                } else if front == w + 1 {
                    1
                } else {
                    0
                }
            }
            Segment::Right => {
                if side > w || front <= w {
                    6
                } else if front == w + 1 {
                    7
                } else {
                    0
                }
            }
        }
    }

    /// Steering input in `{−1, 0, 1}` for an estimated pose.
    pub fn steer(&self, seg: Segment, side: i32, front: i32, heading: u8) -> i32 {
        let target = self.target_heading(seg, side, front);
        match (target as i32 - heading as i32).rem_euclid(HEADINGS as i32) {
            0 => 0,
            1..=4 => 1,
            _ => -1,
        }
    }
}

fn segment(env: &str) -> Result<Segment> {
    Segment::parse(env).ok_or_else(|| Error::UnknownEnvironment(env.to_string()))
}

impl Controller for F1TenthModel {
    fn control(&self, env: &str, estimate: usize) -> Result<usize> {
        if estimate >= self.num_estimates() {
            return Err(Error::DomainMismatch(format!("estimate #{estimate} is off the grid")));
        }
        let (side, front, heading) = self.decode_estimate(estimate);
        let u = self.steer(segment(env)?, side, front, heading);
        Ok((u + 1) as usize)
    }
}

impl Dynamics for F1TenthModel {
    fn successor(&self, env: &str, state: usize, control: usize) -> Result<usize> {
        let u = *CONTROLS
            .get(control)
            .ok_or_else(|| Error::DomainMismatch(format!("control #{control}")))?;
        let next = self.step(segment(env)?, self.decode(state), u);
        Ok(next.map_or(self.error_index(), |s| self.index(&s)))
    }
}
