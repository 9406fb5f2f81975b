use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::LearningRate;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QEntry {
    pub value: f64,
    pub visits: u64,
}

/// Q-values for visited (state, action) pairs only; everything else reads 0.
///
/// Actions at a state are kept ordered so every scan, and therefore every
/// floating-point sum, happens in the same order on every run.
#[derive(Clone, Debug)]
pub struct SparseQTable<S, A> {
    entries: HashMap<S, BTreeMap<A, QEntry>>,
    pub learning_rate: LearningRate,
    pub discount: f64,
}

#[derive(Serialize, Deserialize)]
struct Snapshot<S, A> {
    learning_rate: LearningRate,
    discount: f64,
    entries: Vec<(S, A, QEntry)>,
}

impl<S, A> SparseQTable<S, A>
where
    S: Hash + Eq + Clone,
    A: Ord + Clone,
{
    pub fn new(learning_rate: LearningRate, discount: f64) -> Self {
        Self {
            entries: HashMap::new(),
            learning_rate,
            discount,
        }
    }

    pub fn get(&self, s: &S, a: &A) -> f64 {
        self.entry(s, a).value
    }

    pub fn entry(&self, s: &S, a: &A) -> QEntry {
        self.entries
            .get(s)
            .and_then(|m| m.get(a))
            .copied()
            .unwrap_or_default()
    }

    /// Stored actions at `s` in key order.
    pub fn actions_at(&self, s: &S) -> impl Iterator<Item = (&A, &QEntry)> {
        self.entries.get(s).into_iter().flat_map(|m| m.iter())
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_over(&self, s: &S, actions: &[A]) -> f64 {
        actions
            .iter()
            .map(|a| self.get(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Moves `Q(s, a)` toward `target` with the visit-scheduled step size.
    pub fn blend(&mut self, s: &S, a: A, target: f64) {
        let e = self
            .entries
            .entry(s.clone())
            .or_default()
            .entry(a)
            .or_default();
        e.visits += 1;
        let alpha = self.learning_rate.at(e.visits);
        e.value = (1.0 - alpha) * e.value + alpha * target;
    }

    pub fn set(&mut self, s: &S, a: A, value: f64) {
        self.entries
            .entry(s.clone())
            .or_default()
            .entry(a)
            .or_default()
            .value = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, &A, &QEntry)> {
        self.entries
            .iter()
            .flat_map(|(s, m)| m.iter().map(move |(a, e)| (s, a, e)))
    }
}

impl<S, A> SparseQTable<S, A>
where
    S: Hash + Eq + Clone + Ord + Serialize + DeserializeOwned,
    A: Ord + Clone + Serialize + DeserializeOwned,
{
    pub fn snapshot(&self) -> serde_json::Value {
        let mut entries: Vec<(S, A, QEntry)> = self
            .iter()
            .map(|(s, a, e)| (s.clone(), a.clone(), *e))
            .collect();
        entries.sort_by(|x, y| x.0.cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
        serde_json::to_value(Snapshot {
            learning_rate: self.learning_rate,
            discount: self.discount,
            entries,
        })
        .expect("q-table snapshot serializes")
    }

    pub fn restore(v: &serde_json::Value) -> Result<Self> {
        let snap: Snapshot<S, A> =
            serde_json::from_value(v.clone()).map_err(|e| Error::Snapshot(e.to_string()))?;
        let mut t = Self::new(snap.learning_rate, snap.discount);
        for (s, a, e) in snap.entries {
            t.entries.entry(s).or_default().insert(a, e);
        }
        Ok(t)
    }
}

/// ε-greedy: a uniform action from `actions` with probability `epsilon`,
/// otherwise the highest-valued one (ties to the smallest key).
pub fn q_select<S, A, R>(
    q: &SparseQTable<S, A>,
    state: &S,
    actions: &[A],
    epsilon: f64,
    rng: &mut R,
) -> Result<A>
where
    S: Hash + Eq + Clone,
    A: Ord + Clone,
    R: Rng + ?Sized,
{
    greedy_or_explore(actions, epsilon, rng, |a| q.get(state, a))
}

pub(crate) fn greedy_or_explore<A, R>(
    actions: &[A],
    epsilon: f64,
    rng: &mut R,
    value: impl Fn(&A) -> f64,
) -> Result<A>
where
    A: Ord + Clone,
    R: Rng + ?Sized,
{
    if actions.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(actions[rng.random_range(0..actions.len())].clone());
    }
    let mut best = &actions[0];
    let mut best_v = value(best);
    for a in &actions[1..] {
        let v = value(a);
        if v > best_v || (v == best_v && a < best) {
            best = a;
            best_v = v;
        }
    }
    Ok(best.clone())
}

/// One-step Q-learning update toward `r + γ max_{a'} Q(s', a')`.
pub fn q_update<S, A>(
    q: &mut SparseQTable<S, A>,
    s: &S,
    a: A,
    r: f64,
    next: &S,
    next_actions: &[A],
) -> Result<()>
where
    S: Hash + Eq + Clone,
    A: Ord + Clone,
{
    if next_actions.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    let target = r + q.discount * q.max_over(next, next_actions);
    q.blend(s, a, target);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> SparseQTable<u32, u32> {
        SparseQTable::new(LearningRate::Constant { alpha: 0.1 }, 0.9)
    }

    #[test]
    fn fresh_update_arithmetic() {
        let mut q = table();
        q_update(&mut q, &0, 1, 1.0, &1, &[0, 1]).unwrap();
        assert!((q.get(&0, &1) - 0.1).abs() < 1e-15);
        let mut z = table();
        q_update(&mut z, &0, 1, 0.0, &1, &[0, 1]).unwrap();
        assert_eq!(z.get(&0, &1), 0.0);
        assert_eq!(z.get(&5, &5), 0.0);
    }

    #[test]
    fn greedy_tie_and_raise() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut q = table();
        assert_eq!(q_select(&q, &0, &[3, 1, 2], 0.0, &mut rng).unwrap(), 1);
        q.set(&0, 3, 0.5);
        assert_eq!(q_select(&q, &0, &[3, 1, 2], 0.0, &mut rng).unwrap(), 3);
        assert_eq!(
            q_select(&q, &0, &[], 0.0, &mut rng),
            Err(Error::EmptyActionSet)
        );
    }

    #[test]
    fn epsilon_greedy_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut q = table();
        q.set(&0, 2, 1.0);
        let acts = [0, 1, 2, 3];
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| q_select(&q, &0, &acts, 0.5, &mut rng).unwrap() == 2)
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - (0.5 + 0.5 / 4.0)).abs() < 0.01, "{freq}");
    }

    #[test]
    fn bounded_by_geometric_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut q = table();
        let acts = [0u32, 1, 2];
        let mut s = 0u32;
        for _ in 0..20_000 {
            let a = q_select(&q, &s, &acts, 0.3, &mut rng).unwrap();
            let next = (s + a) % 4;
            let r: f64 = rng.random();
            q_update(&mut q, &s, a, r, &next, &acts).unwrap();
            s = next;
        }
        assert!(q
            .iter()
            .all(|(_, _, e)| e.value >= 0.0 && e.value <= 1.0 / (1.0 - 0.9) + 1e-9));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut q = table();
        q.blend(&3, 1, 0.7);
        q.blend(&1, 2, 0.1 + 0.2);
        let back: SparseQTable<u32, u32> = SparseQTable::restore(&q.snapshot()).unwrap();
        assert_eq!(back.entry(&3, &1), q.entry(&3, &1));
        assert_eq!(back.get(&1, &2), q.get(&1, &2));
        assert_eq!(back.len(), 2);
    }
}
