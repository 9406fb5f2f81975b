//! Reference computations: the exact per-cycle delivery probability under
//! top-probability allocation, its Monte Carlo twin, and value iteration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::allocate_max_success;
use crate::sensing::sensing_success_prob;
use crate::world::{Position, UavId};

/// Largest cell the subset DP accepts (2^8 pending sets).
pub const DP_MAX_UAVS: usize = 8;

/// Samples used when a cell is too large for the DP.
pub const MC_FALLBACK_SAMPLES: usize = 10_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AllocationRule {
    #[default]
    MaxSuccess,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryUav {
    pub id: UavId,
    pub position: Position,
    pub target: Position,
    /// Per-frame success probability on an allocated subchannel.
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeliveryQuery {
    pub uavs: Vec<QueryUav>,
    pub sensing_lambda: f64,
    pub frames: usize,
    pub subchannels: usize,
    pub rule: AllocationRule,
}

impl DeliveryQuery {
    fn sensing(&self) -> Result<Vec<f64>> {
        self.uavs
            .iter()
            .map(|u| sensing_success_prob(u.position.distance(&u.target), self.sensing_lambda))
            .collect()
    }

    fn allocate(&self, pending: &[(UavId, f64)]) -> Vec<UavId> {
        match self.rule {
            AllocationRule::MaxSuccess => allocate_max_success(pending, self.subchannels),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub p: f64,
    pub std_err: f64,
}

/// Probability that each UAV's data reaches the BS within the cycle,
/// ignoring sensing validity. Exact over all success/failure patterns.
pub fn transmission_prob_dp(query: &DeliveryQuery) -> Result<Vec<f64>> {
    let m = query.uavs.len();
    if m > DP_MAX_UAVS {
        return Err(Error::TooManyUavs {
            uavs: m,
            limit: DP_MAX_UAVS,
        });
    }
    let full = (1usize << m) - 1;
    let mut mass = vec![0.0; 1 << m];
    mass[full] = 1.0;
    let mut delivered = vec![0.0; m];
    let slot_of = |id: UavId| query.uavs.iter().position(|u| u.id == id).unwrap();

    for _ in 0..query.frames {
        let mut next = vec![0.0; 1 << m];
        for (mask, &p) in mass.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let pending: Vec<(UavId, f64)> = (0..m)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| (query.uavs[i].id, query.uavs[i].q))
                .collect();
            let chosen: Vec<usize> = query.allocate(&pending).into_iter().map(slot_of).collect();
            for pattern in 0..(1usize << chosen.len()) {
                let mut pp = p;
                let mut succeeded = 0usize;
                for (b, &i) in chosen.iter().enumerate() {
                    let q = query.uavs[i].q;
                    if pattern & (1 << b) != 0 {
                        pp *= q;
                        succeeded |= 1 << i;
                    } else {
                        pp *= 1.0 - q;
                    }
                }
                if pp == 0.0 {
                    continue;
                }
                for (i, d) in delivered.iter_mut().enumerate() {
                    if succeeded & (1 << i) != 0 {
                        *d += pp;
                    }
                }
                next[mask & !succeeded] += pp;
            }
        }
        mass = next;
    }
    Ok(delivered)
}

/// P(valid data from each UAV is delivered this cycle), in query order.
pub fn delivery_prob_dp(query: &DeliveryQuery) -> Result<Vec<f64>> {
    let tx = transmission_prob_dp(query)?;
    let sense = query.sensing()?;
    Ok(tx
        .iter()
        .zip(sense)
        .map(|(t, s)| (t * s).clamp(0.0, 1.0))
        .collect())
}

/// Frame-by-frame simulation estimate of `delivery_prob_dp`.
pub fn delivery_prob_mc<R: Rng + ?Sized>(
    query: &DeliveryQuery,
    rng: &mut R,
    samples: usize,
) -> Result<Vec<Estimate>> {
    let samples = samples.max(1);
    let sense = query.sensing()?;
    let m = query.uavs.len();
    let mut hits = vec![0usize; m];
    let mut valid = vec![false; m];
    let mut pending = vec![false; m];
    for _ in 0..samples {
        for i in 0..m {
            valid[i] = rng.random::<f64>() < sense[i];
            pending[i] = true;
        }
        for _ in 0..query.frames {
            let list: Vec<(UavId, f64)> = (0..m)
                .filter(|&i| pending[i])
                .map(|i| (query.uavs[i].id, query.uavs[i].q))
                .collect();
            if list.is_empty() {
                break;
            }
            for id in query.allocate(&list) {
                let i = query.uavs.iter().position(|u| u.id == id).unwrap();
                if rng.random::<f64>() < query.uavs[i].q {
                    pending[i] = false;
                    if valid[i] {
                        hits[i] += 1;
                    }
                }
            }
        }
    }
    let n = samples as f64;
    Ok(hits
        .into_iter()
        .map(|h| {
            let p = h as f64 / n;
            Estimate {
                p,
                std_err: (p * (1.0 - p) / n).sqrt(),
            }
        })
        .collect())
}

/// DP when the cell is small enough, Monte Carlo otherwise.
pub fn delivery_prob<R: Rng + ?Sized>(query: &DeliveryQuery, rng: &mut R) -> Result<Vec<f64>> {
    if query.uavs.len() <= DP_MAX_UAVS {
        delivery_prob_dp(query)
    } else {
        Ok(delivery_prob_mc(query, rng, MC_FALLBACK_SAMPLES)?
            .into_iter()
            .map(|e| e.p)
            .collect())
    }
}

/// Finite MDP with a per-state action list: `transitions[s][a][s']` and
/// `rewards[s][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
}

impl Mdp {
    pub fn states(&self) -> usize {
        self.transitions.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.states();
        if self.rewards.len() != n {
            return Err(Error::Config(
                "rewards and transitions disagree on state count".into(),
            ));
        }
        for (s, acts) in self.transitions.iter().enumerate() {
            if acts.is_empty() || self.rewards[s].len() != acts.len() {
                return Err(Error::Config(format!("state {s}: bad action list")));
            }
            for (a, row) in acts.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.len() != n || row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::NotStochastic {
                        state: s,
                        action: a,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueIteration {
    pub q: Vec<Vec<f64>>,
    /// Sup-norm change of each synchronous sweep.
    pub sweep_deltas: Vec<f64>,
}

impl ValueIteration {
    pub fn greedy(&self) -> Vec<usize> {
        self.q.iter().map(|row| argmax_first(row)).collect()
    }
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Synchronous value iteration until the sup-norm error bound drops
/// below `tolerance`.
pub fn value_iteration(mdp: &Mdp, discount: f64, tolerance: f64) -> Result<ValueIteration> {
    mdp.validate()?;
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::Config(format!("discount {discount} outside [0, 1)")));
    }
    let mut q: Vec<Vec<f64>> = mdp.rewards.iter().map(|r| vec![0.0; r.len()]).collect();
    let mut deltas = Vec::new();
    loop {
        let v: Vec<f64> = q
            .iter()
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut delta = 0.0f64;
        let next: Vec<Vec<f64>> = mdp
            .transitions
            .iter()
            .enumerate()
            .map(|(s, acts)| {
                acts.iter()
                    .enumerate()
                    .map(|(a, row)| {
                        let cont: f64 = row.iter().zip(&v).map(|(p, v)| p * v).sum();
                        let nq = mdp.rewards[s][a] + discount * cont;
                        delta = delta.max((nq - q[s][a]).abs());
                        nq
                    })
                    .collect()
            })
            .collect();
        q = next;
        deltas.push(delta);
        // ||Q_k - Q*|| <= delta * discount / (1 - discount)
        if delta * discount <= tolerance * (1.0 - discount) {
            break;
        }
    }
    Ok(ValueIteration {
        q,
        sweep_deltas: deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uav(id: UavId, q: f64) -> QueryUav {
        let p = Position::new(0.0, 0.0, 50.0);
        QueryUav {
            id,
            position: p,
            target: p,
            q,
        }
    }

    fn query(uavs: Vec<QueryUav>, frames: usize, k: usize) -> DeliveryQuery {
        DeliveryQuery {
            uavs,
            sensing_lambda: 0.01,
            frames,
            subchannels: k,
            rule: AllocationRule::MaxSuccess,
        }
    }

    #[test]
    fn single_uav_closed_form() {
        let p = delivery_prob_dp(&query(vec![uav(1, 0.5)], 2, 1)).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-15);
        for f in 1..8 {
            let p = delivery_prob_dp(&query(vec![uav(1, 0.3)], f, 2)).unwrap();
            assert!((p[0] - (1.0 - 0.7f64.powi(f as i32))).abs() < 1e-12);
        }
    }

    #[test]
    fn two_uavs_one_subchannel() {
        // Frame 1 always serves UAV 1 (tie -> lower id). UAV 2 is served in
        // frame 2 only if UAV 1 succeeded in frame 1.
        let p = delivery_prob_dp(&query(vec![uav(1, 0.5), uav(2, 0.5)], 2, 1)).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-15);
        assert!((p[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_q_never_delivers() {
        for (f, k) in [(1, 1), (5, 2), (12, 3)] {
            let p = delivery_prob_dp(&query(vec![uav(1, 0.0), uav(2, 0.9), uav(3, 0.4)], f, k))
                .unwrap();
            assert_eq!(p[0], 0.0);
        }
    }

    #[test]
    fn sensing_scales_delivery() {
        let mut u = uav(1, 1.0);
        u.target = Position::new(0.0, 0.0, -50.0);
        let p = delivery_prob_dp(&query(vec![u], 1, 1)).unwrap();
        assert!((p[0] - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn too_many_uavs() {
        let uavs = (0..9).map(|i| uav(i, 0.5)).collect();
        assert!(matches!(
            delivery_prob_dp(&query(uavs, 2, 1)),
            Err(Error::TooManyUavs { .. })
        ));
    }

    #[test]
    fn mc_single_sample_and_seed() {
        let q = query(vec![uav(1, 0.5), uav(2, 0.7)], 3, 1);
        let e = delivery_prob_mc(&q, &mut ChaCha8Rng::seed_from_u64(1), 1).unwrap();
        assert!(e.iter().all(|e| e.p == 0.0 || e.p == 1.0));
        let a = delivery_prob_mc(&q, &mut ChaCha8Rng::seed_from_u64(4), 1000).unwrap();
        let b = delivery_prob_mc(&q, &mut ChaCha8Rng::seed_from_u64(4), 1000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn value_iteration_geometric_series() {
        let mdp = Mdp {
            transitions: vec![vec![vec![1.0]]],
            rewards: vec![vec![1.0]],
        };
        let vi = value_iteration(&mdp, 0.9, 1e-9).unwrap();
        assert!((vi.q[0][0] - 10.0).abs() < 1e-9);
        let zero = Mdp {
            transitions: vec![vec![vec![0.5, 0.5], vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            rewards: vec![vec![0.0, 0.0], vec![0.0]],
        };
        let vi = value_iteration(&zero, 0.9, 1e-9).unwrap();
        assert!(vi.q.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn value_iteration_rejects_bad_rows() {
        let mdp = Mdp {
            transitions: vec![vec![vec![0.5, 0.4]], vec![vec![0.0, 1.0]]],
            rewards: vec![vec![0.0], vec![0.0]],
        };
        assert_eq!(
            value_iteration(&mdp, 0.9, 1e-6),
            Err(Error::NotStochastic {
                state: 0,
                action: 0
            })
        );
    }

    #[test]
    fn two_state_chain_matches_rollout() {
        // s0 --go--> s1 (reward 0), s1 --stay--> s1 (reward 1).
        let gamma = 0.9;
        let mdp = Mdp {
            transitions: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![0.0, 1.0]]],
            rewards: vec![vec![0.0, 0.0], vec![1.0]],
        };
        let vi = value_iteration(&mdp, gamma, 1e-10).unwrap();
        // Long-horizon rollout of "go, then stay".
        let mut ret = 0.0;
        let mut disc = 1.0;
        for t in 0..10_000 {
            ret += disc * if t == 0 { 0.0 } else { 1.0 };
            disc *= gamma;
        }
        assert!((vi.q[0][1] - ret).abs() < 1e-8);
        assert!((vi.q[0][1] - gamma / (1.0 - gamma)).abs() < 1e-8);
        assert_eq!(vi.greedy()[0], 1);
    }

    #[test]
    fn sweeps_contract() {
        let mdp = Mdp {
            transitions: vec![
                vec![vec![0.2, 0.8, 0.0], vec![0.0, 0.5, 0.5]],
                vec![vec![0.3, 0.3, 0.4]],
                vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]],
            ],
            rewards: vec![vec![0.1, 0.5], vec![1.0], vec![0.0, 0.3]],
        };
        let vi = value_iteration(&mdp, 0.95, 1e-10).unwrap();
        for w in vi.sweep_deltas.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn dp_monotone(
            qs in proptest::collection::vec(0.0f64..1.0, 1..6),
            frames in 1usize..8,
            k in 1usize..4,
            bump in 0.0f64..0.5,
            which in 0usize..6,
        ) {
            let uavs: Vec<QueryUav> = qs.iter().enumerate().map(|(i, &q)| uav(i as u32, q)).collect();
            let base = delivery_prob_dp(&query(uavs.clone(), frames, k)).unwrap();
            prop_assert!(base.iter().all(|p| (0.0..=1.0).contains(p)));

            let more_frames = delivery_prob_dp(&query(uavs.clone(), frames + 1, k)).unwrap();
            for (a, b) in base.iter().zip(&more_frames) {
                prop_assert!(b + 1e-12 >= *a);
            }
            let fewer_k = delivery_prob_dp(&query(uavs.clone(), frames, k - 1)).unwrap();
            for (a, b) in base.iter().zip(&fewer_k) {
                prop_assert!(*b <= a + 1e-12);
            }
            // Raising one UAV's q cannot hurt that UAV.
            let w = which % uavs.len();
            let mut raised = uavs.clone();
            raised[w].q = (raised[w].q + bump).min(1.0);
            let r = delivery_prob_dp(&query(raised, frames, k)).unwrap();
            prop_assert!(r[w] + 1e-12 >= base[w]);
        }
    }
}
