use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::world::{BsId, UavId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Bounded FIFO of transitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: VecDeque::with_capacity(capacity.min(4096)),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition> {
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub hidden: usize,
    pub buffer: usize,
    pub batch: usize,
    pub target_sync: u64,
    pub step: f64,
    pub discount: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnState {
    pub online: Mlp,
    pub target: Mlp,
    pub buffer: ReplayBuffer,
    pub epsilon: f64,
    /// Gradient steps taken so far.
    pub steps: u64,
    pub config: DqnConfig,
}

impl DqnState {
    /// Two hidden layers of `config.hidden` rectified units.
    pub fn new<R: Rng + ?Sized>(
        features: usize,
        actions: usize,
        config: DqnConfig,
        rng: &mut R,
    ) -> Self {
        let online = Mlp::new(&[features, config.hidden, config.hidden, actions], rng);
        Self {
            target: online.clone(),
            online,
            buffer: ReplayBuffer::new(config.buffer),
            epsilon: 1.0,
            steps: 0,
            config,
        }
    }

    pub fn actions(&self) -> usize {
        self.online.outputs()
    }

    fn check(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.online.inputs() {
            return Err(Error::FeatureLength {
                expected: self.online.inputs(),
                got: features.len(),
            });
        }
        Ok(())
    }

    pub fn greedy(&self, features: &[f64]) -> Result<usize> {
        self.check(features)?;
        Ok(super::super::oracle::argmax_first(
            &self.online.forward(features),
        ))
    }
}

/// ε-greedy over the online network's outputs; ties go to the lowest index.
pub fn dqn_select<R: Rng + ?Sized>(d: &DqnState, features: &[f64], rng: &mut R) -> Result<usize> {
    d.check(features)?;
    let n = d.actions();
    if n == 0 {
        return Err(Error::EmptyActionSet);
    }
    if d.epsilon > 0.0 && rng.random::<f64>() < d.epsilon {
        return Ok(rng.random_range(0..n));
    }
    d.greedy(features)
}

/// Stores `t`, then takes one minibatch gradient step on the squared TD
/// error once the buffer holds a full batch.
pub fn dqn_step<R: Rng + ?Sized>(d: &mut DqnState, t: Transition, rng: &mut R) -> Result<()> {
    d.check(&t.state)?;
    d.check(&t.next_state)?;
    if t.action >= d.actions() {
        return Err(Error::Protocol(format!(
            "action {} outside {} outputs",
            t.action,
            d.actions()
        )));
    }
    d.buffer.push(t);
    let batch = d.config.batch.max(1);
    if d.buffer.len() < batch {
        return Ok(());
    }
    let mut grads = d.online.zero_gradients();
    for tr in d.buffer.sample(batch, rng) {
        let bootstrap = if tr.terminal {
            0.0
        } else {
            d.target
                .forward(&tr.next_state)
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let target = tr.reward + d.config.discount * bootstrap;
        let trace = d.online.trace(&tr.state);
        let err = trace.output()[tr.action] - target;
        d.online
            .accumulate(&trace, tr.action, err / batch as f64, &mut grads);
    }
    d.online.descend(&grads, d.config.step);
    d.steps += 1;
    if d.config.target_sync > 0 && d.steps.is_multiple_of(d.config.target_sync) {
        d.target = d.online.clone();
    }
    Ok(())
}

/// Fixed list of joint allocations for a group of BSs sharing a band. Each
/// BS either allocates nothing or fills `min(K, roster)` subchannels with a
/// subset of its roster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionEnumeration {
    pub cells: Vec<(BsId, Vec<UavId>, usize)>,
    pub actions: Vec<Vec<(BsId, Vec<UavId>)>>,
}

fn combinations(items: &[UavId], k: usize) -> Vec<Vec<UavId>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if items.len() < k {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub fn enumerate_allocations(cells: &[(BsId, Vec<UavId>, usize)]) -> ActionEnumeration {
    let mut actions: Vec<Vec<(BsId, Vec<UavId>)>> = vec![Vec::new()];
    for (bs, roster, k) in cells {
        let size = (*k).min(roster.len());
        let mut options = vec![Vec::new()];
        if size > 0 {
            options.extend(combinations(roster, size));
        }
        actions = actions
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |o| {
                    let mut a = prefix.clone();
                    a.push((*bs, o.clone()));
                    a
                })
            })
            .collect();
    }
    ActionEnumeration {
        cells: cells.to_vec(),
        actions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config() -> DqnConfig {
        DqnConfig {
            hidden: 8,
            buffer: 100,
            batch: 4,
            target_sync: 10,
            step: 0.01,
            discount: 0.9,
        }
    }

    fn tr(tag: f64) -> Transition {
        Transition {
            state: vec![tag, 0.0],
            action: 0,
            reward: tag,
            next_state: vec![0.0, tag],
            terminal: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(2);
        b.push(tr(1.0));
        b.push(tr(2.0));
        b.push(tr(3.0));
        let tags: Vec<f64> = b.iter().map(|t| t.reward).collect();
        assert_eq!(tags, vec![2.0, 3.0]);
    }

    #[test]
    fn enumeration_counts() {
        let e = enumerate_allocations(&[(1, vec![1, 2, 3], 2)]);
        assert_eq!(e.actions.len(), 4);
        let e = enumerate_allocations(&[(1, vec![1], 1), (2, vec![2], 1)]);
        assert_eq!(e.actions.len(), 4);
        let e = enumerate_allocations(&[(1, vec![1, 2], 0)]);
        assert_eq!(e.actions.len(), 1);
        let e = enumerate_allocations(&[(1, vec![1, 2, 3, 4], 2), (2, vec![5, 6], 1)]);
        assert_eq!(e.actions.len(), (1 + 6) * (1 + 2));
    }

    #[test]
    fn exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = DqnState::new(2, 4, config(), &mut rng);
        d.epsilon = 1.0;
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[dqn_select(&d, &[0.1, 0.2], &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
        }
        assert!(matches!(
            dqn_select(&d, &[0.1], &mut rng),
            Err(Error::FeatureLength {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn greedy_follows_output_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut d = DqnState::new(2, 4, config(), &mut rng);
        d.epsilon = 0.0;
        let last = d.online.weights.len() - 1;
        for w in d.online.weights[last].iter_mut() {
            *w = 0.0;
        }
        d.online.biases[last] = vec![0.1, 0.4, 0.9, 0.2];
        assert_eq!(dqn_select(&d, &[0.5, -0.5], &mut rng).unwrap(), 2);
        d.online.biases[last] = vec![0.3, 0.3, 0.1, 0.3];
        assert_eq!(dqn_select(&d, &[0.5, -0.5], &mut rng).unwrap(), 0);
    }

    #[test]
    fn zero_step_leaves_network_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut d = DqnState::new(
            2,
            3,
            DqnConfig {
                step: 0.0,
                ..config()
            },
            &mut rng,
        );
        let before = d.online.clone();
        for i in 0..50 {
            dqn_step(&mut d, tr(f64::from(i % 3)), &mut rng).unwrap();
        }
        assert_eq!(d.online, before);
        assert!(d.steps > 0);
    }

    #[test]
    fn target_syncs_on_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut d = DqnState::new(2, 3, config(), &mut rng);
        for i in 0..13 {
            dqn_step(&mut d, tr(f64::from(i)), &mut rng).unwrap();
        }
        // 13 pushes, batch 4: gradient steps on pushes 4..=13, i.e. 10 steps.
        assert_eq!(d.steps, 10);
        assert_eq!(d.target, d.online);
        dqn_step(&mut d, tr(1.0), &mut rng).unwrap();
        assert_ne!(d.target, d.online);
    }
}
