use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of state features: bias, normalized loss, battery fraction.
pub const POWER_FEATURES: usize = 3;

/// Feature vector of the power learner. `loss_db` is the pathloss plus
/// shadowing to the serving BS, scaled so typical values land near 1.
pub fn power_features(loss_db: f64, battery_fraction: f64) -> [f64; POWER_FEATURES] {
    [1.0, loss_db / 100.0, battery_fraction.clamp(0.0, 1.0)]
}

/// Gaussian actor over transmit power with a sigmoid-squashed linear mean,
/// and a linear critic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorCriticState {
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
    pub std_db: f64,
    pub actor_step: f64,
    pub critic_step: f64,
    pub discount: f64,
    pub p_min_dbm: f64,
    pub p_max_dbm: f64,
}

/// A drawn power: `raw` is the Gaussian sample, `clipped` what is transmitted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub clipped: f64,
    pub raw: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ActorCriticState {
    /// Zero-initialized actor (mean at mid-range) and critic.
    pub fn new(
        features: usize,
        p_min_dbm: f64,
        p_max_dbm: f64,
        std_db: f64,
        discount: f64,
    ) -> Self {
        Self {
            actor: vec![0.0; features],
            critic: vec![0.0; features],
            std_db,
            actor_step: 0.01,
            critic_step: 0.05,
            discount,
            p_min_dbm,
            p_max_dbm,
        }
    }

    fn check(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.actor.len() {
            return Err(Error::FeatureLength {
                expected: self.actor.len(),
                got: features.len(),
            });
        }
        if features.iter().any(|f| !f.is_finite()) {
            return Err(Error::Protocol("non-finite power feature".into()));
        }
        Ok(())
    }

    pub fn mean(&self, features: &[f64]) -> f64 {
        self.p_min_dbm + (self.p_max_dbm - self.p_min_dbm) * sigmoid(dot(&self.actor, features))
    }

    pub fn value(&self, features: &[f64]) -> f64 {
        dot(&self.critic, features)
    }

    /// Log-density of drawing `raw` (before clipping).
    pub fn log_density(&self, features: &[f64], raw: f64) -> f64 {
        let z = (raw - self.mean(features)) / self.std_db;
        -0.5 * z * z - self.std_db.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    /// Gradient of [`Self::log_density`] with respect to the actor weights.
    pub fn grad_log_density(&self, features: &[f64], raw: f64) -> Vec<f64> {
        let s = sigmoid(dot(&self.actor, features));
        let mu = self.p_min_dbm + (self.p_max_dbm - self.p_min_dbm) * s;
        let scale = (raw - mu) / (self.std_db * self.std_db)
            * (self.p_max_dbm - self.p_min_dbm)
            * s
            * (1.0 - s);
        features.iter().map(|f| scale * f).collect()
    }
}

pub fn ac_select_power<R: Rng + ?Sized>(
    acs: &ActorCriticState,
    features: &[f64],
    rng: &mut R,
) -> Result<PowerSample> {
    acs.check(features)?;
    let mu = acs.mean(features);
    let raw = if acs.std_db > 0.0 {
        Normal::new(mu, acs.std_db)
            .map_err(|e| Error::Protocol(e.to_string()))?
            .sample(rng)
    } else {
        mu
    };
    Ok(PowerSample {
        clipped: raw.clamp(acs.p_min_dbm, acs.p_max_dbm),
        raw,
    })
}

/// One-step actor-critic update; returns the TD error.
pub fn ac_update(
    acs: &mut ActorCriticState,
    features: &[f64],
    action: PowerSample,
    reward: f64,
    next_features: &[f64],
    terminal: bool,
) -> Result<f64> {
    acs.check(features)?;
    acs.check(next_features)?;
    let bootstrap = if terminal {
        0.0
    } else {
        acs.value(next_features)
    };
    let delta = reward + acs.discount * bootstrap - acs.value(features);
    if delta == 0.0 {
        return Ok(0.0);
    }
    let grad = if acs.std_db > 0.0 {
        Some(acs.grad_log_density(features, action.raw))
    } else {
        None
    };
    for (w, f) in acs.critic.iter_mut().zip(features) {
        *w += acs.critic_step * delta * f;
    }
    if let Some(g) = grad {
        for (w, gi) in acs.actor.iter_mut().zip(g) {
            *w += acs.actor_step * delta * gi;
        }
    }
    Ok(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn acs() -> ActorCriticState {
        let mut a = ActorCriticState::new(3, 0.0, 23.0, 3.0, 0.9);
        a.actor = vec![0.4, -0.8, 0.3];
        a
    }

    #[test]
    fn zero_std_emits_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = acs();
        a.std_db = 0.0;
        let f = power_features(85.0, 0.5);
        let p = ac_select_power(&a, &f, &mut rng).unwrap();
        assert_eq!(p.clipped, a.mean(&f));
    }

    #[test]
    fn output_is_clipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = acs();
        a.std_db = 20.0;
        for _ in 0..10_000 {
            let p = ac_select_power(&a, &[1.0, 0.9, 0.2], &mut rng).unwrap();
            assert!((0.0..=23.0).contains(&p.clipped));
        }
        assert!(ac_select_power(&a, &[1.0], &mut rng).is_err());
    }

    #[test]
    fn zero_td_error_changes_nothing() {
        let mut a = acs();
        a.critic = vec![0.5, 0.0, 0.0];
        let before = a.clone();
        let f = [1.0, 0.8, 0.5];
        // V(f) = 0.5 = 0.05 + 0.9 * 0.5.
        let d = ac_update(
            &mut a,
            &f,
            PowerSample {
                clipped: 10.0,
                raw: 10.0,
            },
            0.05,
            &f,
            false,
        )
        .unwrap();
        assert!(d.abs() < 1e-15);
        assert_eq!(a, before);
    }

    #[test]
    fn terminal_reward_moves_critic_bias() {
        let mut a = acs();
        let f = [1.0, 0.0, 0.0];
        ac_update(
            &mut a,
            &f,
            PowerSample {
                clipped: 5.0,
                raw: 5.0,
            },
            1.0,
            &f,
            true,
        )
        .unwrap();
        assert!((a.critic[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn log_density_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let mut a = acs();
            a.actor = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = power_features(rng.random_range(60.0..120.0), rng.random());
            let raw = rng.random_range(-5.0..30.0);
            let g = a.grad_log_density(&f, raw);
            for k in 0..3 {
                let h = 1e-6;
                let mut plus = a.clone();
                plus.actor[k] += h;
                let mut minus = a.clone();
                minus.actor[k] -= h;
                let fd = (plus.log_density(&f, raw) - minus.log_density(&f, raw)) / (2.0 * h);
                let err = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-3);
                assert!(err < 1e-5, "{fd} vs {}", g[k]);
            }
        }
    }

    /// E[clip(X, lo, hi)] for X ~ N(mu, sigma), by Simpson's rule.
    fn clipped_mean_quadrature(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
        let pdf = |x: f64| {
            (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp()
                / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        };
        let simpson = |g: &dyn Fn(f64) -> f64, a: f64, b: f64| {
            let n = 20_000;
            let h = (b - a) / n as f64;
            let mut s = g(a) + g(b);
            for i in 1..n {
                s += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let (l, r) = (mu - 12.0 * sigma, mu + 12.0 * sigma);
        let below = simpson(&pdf, l, lo);
        let above = simpson(&pdf, hi, r);
        let inside = simpson(&|x| x * pdf(x), lo, hi);
        lo * below + inside + hi * above
    }

    #[test]
    fn sample_mean_matches_clipped_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut a = acs();
        a.std_db = 8.0;
        let f = [1.0, 0.5, 1.0];
        a.actor = vec![1.5, 0.0, 0.5];
        let mu = a.mean(&f);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| ac_select_power(&a, &f, &mut rng).unwrap().clipped)
            .sum::<f64>()
            / n as f64;
        let exact = clipped_mean_quadrature(mu, 8.0, 0.0, 23.0);
        assert!((mean - exact).abs() < 0.1, "{mean} vs {exact}");
    }
}
