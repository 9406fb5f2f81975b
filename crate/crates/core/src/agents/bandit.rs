use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::BsId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub bs: BsId,
    pub estimate: f64,
    pub count: u64,
}

/// Sample-average reward estimate per BS plus the current exploration rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    /// Sorted by BS id.
    pub arms: Vec<Arm>,
    pub epsilon: f64,
}

impl BanditState {
    pub fn new(mut bss: Vec<BsId>, epsilon: f64) -> Self {
        bss.sort_unstable();
        bss.dedup();
        Self {
            arms: bss
                .into_iter()
                .map(|bs| Arm {
                    bs,
                    estimate: 0.0,
                    count: 0,
                })
                .collect(),
            epsilon,
        }
    }

    pub fn arm(&self, bs: BsId) -> Option<&Arm> {
        self.arms.iter().find(|a| a.bs == bs)
    }
}

pub fn bandit_select<R: Rng + ?Sized>(b: &BanditState, rng: &mut R) -> Result<BsId> {
    if b.arms.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    if b.epsilon > 0.0 && rng.random::<f64>() < b.epsilon {
        return Ok(b.arms[rng.random_range(0..b.arms.len())].bs);
    }
    // Arms are sorted by id, so the first maximum is the lowest id.
    let mut best = &b.arms[0];
    for a in &b.arms[1..] {
        if a.estimate > best.estimate {
            best = a;
        }
    }
    Ok(best.bs)
}

pub fn bandit_update(b: &mut BanditState, arm: BsId, reward: f64) -> Result<()> {
    let a = b
        .arms
        .iter_mut()
        .find(|a| a.bs == arm)
        .ok_or(Error::UnknownArm(arm))?;
    a.count += 1;
    a.estimate += (reward - a.estimate) / a.count as f64;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::agents::Schedule;

    #[test]
    fn greedy_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = BanditState::new(vec![2, 1], 0.0);
        assert_eq!(bandit_select(&b, &mut rng).unwrap(), 1);
        b.arms[0].estimate = 0.8;
        b.arms[1].estimate = 0.3;
        assert_eq!(bandit_select(&b, &mut rng).unwrap(), 1);
        b.arms[1].estimate = 0.9;
        assert_eq!(bandit_select(&b, &mut rng).unwrap(), 2);
    }

    #[test]
    fn uniform_when_fully_exploring() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut b = BanditState::new(vec![1, 2], 1.0);
        b.arms[0].estimate = 1.0;
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| bandit_select(&b, &mut rng).unwrap() == 1)
            .count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn incremental_mean() {
        let mut b = BanditState::new(vec![1], 0.0);
        bandit_update(&mut b, 1, 1.0).unwrap();
        assert_eq!(b.arms[0].estimate, 1.0);
        b.arms[0].estimate = 0.5;
        b.arms[0].count = 4;
        bandit_update(&mut b, 1, 1.0).unwrap();
        assert!((b.arms[0].estimate - 0.6).abs() < 1e-15);
        assert_eq!(bandit_update(&mut b, 7, 1.0), Err(Error::UnknownArm(7)));
    }

    #[test]
    fn finds_better_arm() {
        let probs = [0.9, 0.2];
        // Brute-force best arm.
        let best = if probs[0] >= probs[1] { 1 } else { 2 };
        let schedule = Schedule {
            start: 0.3,
            end: 0.01,
            horizon: 500,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut b = BanditState::new(vec![1, 2], schedule.start);
        let mut late_best = 0;
        for t in 0..500u64 {
            b.epsilon = schedule.at(t);
            let arm = bandit_select(&b, &mut rng).unwrap();
            let r = f64::from(u8::from(rng.random::<f64>() < probs[(arm - 1) as usize]));
            bandit_update(&mut b, arm, r).unwrap();
            if t >= 400 && arm == best {
                late_best += 1;
            }
        }
        assert!(late_best >= 95, "{late_best}");
    }
}
