use crate::scenario::ScenarioConfig;

use super::env::{EventKind, StepEvent};

/// Constants of the shaped reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTable {
    pub success: f64,
    pub collision: f64,
    pub discomfort_slope: f64,
    pub progress_weight: f64,
}

pub const REWARD: RewardTable = RewardTable {
    success: 1.0,
    collision: -0.25,
    discomfort_slope: 0.1,
    progress_weight: 0.2,
};

/// Shaped step reward. Terminal outcomes take the fixed table values;
/// otherwise a discomfort penalty plus a potential-based progress term.
pub fn reward(
    prev_goal_distance: f64,
    goal_distance: f64,
    event: &StepEvent,
    config: &ScenarioConfig,
) -> f64 {
    match event.kind {
        EventKind::ReachedGoal => REWARD.success,
        EventKind::Collision => REWARD.collision,
        EventKind::None | EventKind::Timeout => {
            let sep = event.min_separation;
            let discomfort = if sep >= 0.0 && sep < config.discomfort_dist {
                -REWARD.discomfort_slope * (config.discomfort_dist - sep)
            } else {
                0.0
            };
            discomfort + REWARD.progress_weight * (prev_goal_distance - goal_distance)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(kind: EventKind, min_separation: f64) -> StepEvent {
        StepEvent { kind, min_separation }
    }

    #[test]
    fn terminal_values() {
        let cfg = ScenarioConfig::default();
        assert_eq!(reward(1.0, 0.1, &event(EventKind::ReachedGoal, 1.0), &cfg), 1.0);
        assert_eq!(reward(1.0, 0.9, &event(EventKind::Collision, -0.1), &cfg), -0.25);
    }

    #[test]
    fn discomfort_penalty() {
        let cfg = ScenarioConfig::default();
        let r = reward(3.0, 3.0, &event(EventKind::None, 0.1), &cfg);
        assert!((r - (-0.01)).abs() < 1e-15);
    }

    #[test]
    fn progress_term_and_timeout() {
        let cfg = ScenarioConfig::default();
        let r = reward(3.0, 2.75, &event(EventKind::None, f64::INFINITY), &cfg);
        assert!((r - 0.05).abs() < 1e-15);
        let r = reward(3.0, 3.0, &event(EventKind::Timeout, 5.0), &cfg);
        assert_eq!(r, 0.0);
    }
}
