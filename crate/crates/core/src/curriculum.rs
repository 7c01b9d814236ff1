//! Progressive training curriculum: train on a prefix of the clip, then
//! periodically grow the active prefix until every frame is included.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub seed_frames: usize,
    pub increment: usize,
    pub epochs_per_stage: usize,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            seed_frames: 100,
            increment: 100,
            epochs_per_stage: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub active: usize,
    pub total: usize,
    pub epoch: usize,
    pub stage: usize,
    pub seed: usize,
    pub increment: usize,
    pub epochs_per_stage: usize,
}

impl CurriculumState {
    pub fn new(config: CurriculumConfig, total: usize) -> Self {
        let seed = config.seed_frames.min(total);
        CurriculumState {
            active: seed,
            total,
            epoch: 0,
            stage: 0,
            seed,
            increment: config.increment,
            epochs_per_stage: config.epochs_per_stage,
        }
    }

    pub fn stage_complete(&self) -> bool {
        self.epoch >= self.epochs_per_stage
    }

    pub fn is_saturated(&self) -> bool {
        self.active >= self.total
    }

    /// Grows the active prefix by one increment (capped at the total) and
    /// resets the epoch counter. At full coverage this is a no-op.
    pub fn advance(&self) -> CurriculumState {
        if self.is_saturated() {
            return *self;
        }
        CurriculumState {
            active: (self.active + self.increment).min(self.total),
            epoch: 0,
            stage: self.stage + 1,
            ..*self
        }
    }

    /// Active frame counts of every stage, from the seed to full coverage.
    pub fn schedule(&self) -> Vec<usize> {
        let mut out = alloc::vec![self.active];
        let mut state = *self;
        while !state.is_saturated() && state.increment > 0 {
            state = state.advance();
            out.push(state.active);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(active: usize, total: usize, increment: usize) -> CurriculumState {
        CurriculumState {
            active,
            total,
            epoch: 50,
            stage: 0,
            seed: active,
            increment,
            epochs_per_stage: 50,
        }
    }

    #[test]
    fn advance_examples() {
        let next = state(100, 500, 100).advance();
        assert_eq!(next.active, 200);
        assert_eq!(next.epoch, 0);
        assert_eq!(state(500, 500, 100).advance().active, 500);
        let s = CurriculumState::new(CurriculumConfig::default(), 500);
        assert_eq!(s.schedule(), [100, 200, 300, 400, 500]);
    }

    #[test]
    fn seed_is_capped_by_total() {
        let s = CurriculumState::new(CurriculumConfig::default(), 40);
        assert_eq!(s.active, 40);
        assert_eq!(s.schedule(), [40]);
    }

    proptest! {
        #[test]
        fn schedule_is_monotone_and_reaches_total(seed in 1usize..300, inc in 1usize..120, total in 1usize..900) {
            let cfg = CurriculumConfig { seed_frames: seed, increment: inc, epochs_per_stage: 1 };
            let s = CurriculumState::new(cfg, total);
            let sched = s.schedule();
            prop_assert!(sched.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*sched.last().unwrap(), total);
            let seed = seed.min(total);
            let expected_advances = (total - seed).div_ceil(inc);
            prop_assert_eq!(sched.len() - 1, expected_advances);
        }
    }
}
