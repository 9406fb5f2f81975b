//! Air-to-ground channel: elevation-dependent LoS probability, free-space
//! pathloss with LoS/NLoS excess loss, log-normal shadowing drawn once per
//! cycle, and unit-mean exponential (Rayleigh power) fading per frame.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::Position;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub carrier_hz: f64,
    pub eta_los_db: f64,
    pub eta_nlos_db: f64,
    pub los_a: f64,
    pub los_b: f64,
    pub shadow_sigma_los_db: f64,
    pub shadow_sigma_nlos_db: f64,
    pub noise_dbm: f64,
    pub sinr_threshold_db: f64,
    pub tx_power_min_dbm: f64,
    pub tx_power_max_dbm: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            carrier_hz: 2.0e9,
            eta_los_db: 1.0,
            eta_nlos_db: 20.0,
            los_a: 9.61,
            los_b: 0.16,
            shadow_sigma_los_db: 4.0,
            shadow_sigma_nlos_db: 8.0,
            noise_dbm: -96.0,
            sinr_threshold_db: 5.0,
            tx_power_min_dbm: 0.0,
            tx_power_max_dbm: 23.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("channel: {m}")));
        if !(self.carrier_hz > 0.0) {
            return bad("carrier_hz must be positive");
        }
        if self.eta_nlos_db < self.eta_los_db {
            return bad("eta_nlos_db must be >= eta_los_db");
        }
        if self.shadow_sigma_los_db < 0.0 || self.shadow_sigma_nlos_db < 0.0 {
            return bad("shadowing sigmas must be non-negative");
        }
        if self.tx_power_min_dbm > self.tx_power_max_dbm {
            return bad("tx_power_min_dbm exceeds tx_power_max_dbm");
        }
        Ok(())
    }

    pub fn check_power(&self, dbm: f64) -> Result<()> {
        if dbm >= self.tx_power_min_dbm && dbm <= self.tx_power_max_dbm {
            Ok(())
        } else {
            Err(Error::PowerOutOfRange {
                power: dbm,
                min: self.tx_power_min_dbm,
                max: self.tx_power_max_dbm,
            })
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Milliwatts from dBm.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_linear(dbm)
}

/// Watts from dBm.
pub fn dbm_to_w(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// Channel state of one UAV-BS link for one cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkRealization {
    pub los: bool,
    pub shadowing_db: f64,
    pub pathloss_db: f64,
    /// Pathloss and shadowing combined, linear power gain.
    pub mean_gain: f64,
}

impl LinkRealization {
    /// Total loss in dB (pathloss plus shadowing).
    pub fn loss_db(&self) -> f64 {
        self.pathloss_db + self.shadowing_db
    }
}

/// The random inputs of one link realization. Keeping them separate from the
/// geometry lets a cycle re-evaluate the same draw after the UAVs move.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkDraw {
    pub uniform: f64,
    pub normal: f64,
}

impl LinkDraw {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            uniform: rng.random::<f64>(),
            normal: rng.sample(StandardNormal),
        }
    }
}

pub fn elevation_angle(uav: &Position, bs: &Position) -> Result<f64> {
    let dz = uav.z - bs.z;
    if dz <= 0.0 {
        return Err(Error::BelowBs {
            uav_z: uav.z,
            bs_z: bs.z,
        });
    }
    let ground = uav.ground_distance(bs);
    if ground == 0.0 {
        return Ok(90.0);
    }
    Ok(dz.atan2(ground).to_degrees())
}

pub fn los_probability(theta_deg: f64, p: &ChannelParams) -> f64 {
    1.0 / (1.0 + p.los_a * (-p.los_b * (theta_deg - p.los_a)).exp())
}

pub fn pathloss_db(distance: f64, los: bool, p: &ChannelParams) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::NonPositiveDistance(distance));
    }
    let fspl =
        20.0 * (4.0 * std::f64::consts::PI * p.carrier_hz * distance / SPEED_OF_LIGHT).log10();
    Ok(fspl + if los { p.eta_los_db } else { p.eta_nlos_db })
}

pub fn realize_with(
    draw: LinkDraw,
    uav: &Position,
    bs: &Position,
    p: &ChannelParams,
) -> Result<LinkRealization> {
    let theta = elevation_angle(uav, bs)?;
    let los = draw.uniform < los_probability(theta, p);
    let sigma = if los {
        p.shadow_sigma_los_db
    } else {
        p.shadow_sigma_nlos_db
    };
    let shadowing_db = sigma * draw.normal;
    let pathloss_db = pathloss_db(uav.distance(bs), los, p)?;
    Ok(LinkRealization {
        los,
        shadowing_db,
        pathloss_db,
        mean_gain: db_to_linear(-(pathloss_db + shadowing_db)),
    })
}

pub fn realize_link<R: Rng + ?Sized>(
    rng: &mut R,
    uav: &Position,
    bs: &Position,
    p: &ChannelParams,
) -> Result<LinkRealization> {
    realize_with(LinkDraw::sample(rng), uav, bs, p)
}

/// Per-frame success probability with all powers in milliwatts.
pub fn success_prob_mw(mean_gain: f64, tx_mw: f64, interference_mw: f64, p: &ChannelParams) -> f64 {
    let noise = dbm_to_mw(p.noise_dbm);
    let threshold = db_to_linear(p.sinr_threshold_db);
    (-threshold * (noise + interference_mw) / (tx_mw * mean_gain)).exp()
}

/// Probability that a single frame clears the SINR threshold under
/// unit-mean exponential fading. `interference_dbm = None` means no
/// co-channel interference.
pub fn frame_success_prob(
    link: &LinkRealization,
    tx_power_dbm: f64,
    interference_dbm: Option<f64>,
    p: &ChannelParams,
) -> Result<f64> {
    p.check_power(tx_power_dbm)?;
    let interference = interference_dbm.map_or(0.0, dbm_to_mw);
    Ok(success_prob_mw(
        link.mean_gain,
        dbm_to_mw(tx_power_dbm),
        interference,
        p,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> ChannelParams {
        ChannelParams::default()
    }

    #[test]
    fn elevation_examples() {
        let bs = Position::new(0.0, 0.0, 0.0);
        assert_eq!(
            elevation_angle(&Position::new(0.0, 0.0, 100.0), &bs).unwrap(),
            90.0
        );
        let a = elevation_angle(&Position::new(100.0, 0.0, 100.0), &bs).unwrap();
        assert!((a - 45.0).abs() < 1e-12);
        let b = elevation_angle(&Position::new(173.205, 0.0, 100.0), &bs).unwrap();
        assert!((b - 30.0).abs() < 0.01);
        assert!(elevation_angle(&Position::new(10.0, 0.0, 0.0), &bs).is_err());
    }

    #[test]
    fn los_probability_examples() {
        let p = params();
        assert!((los_probability(9.61, &p) - 1.0 / 10.61).abs() < 1e-12);
        assert!((los_probability(9.61, &p) - 0.0943).abs() < 1e-4);
        assert!(los_probability(90.0, &p) >= 0.9999);
        assert!(los_probability(60.0, &p) > los_probability(30.0, &p));
    }

    #[test]
    fn pathloss_examples() {
        let p = params();
        let a = pathloss_db(100.0, true, &p).unwrap();
        assert!((a - 79.46).abs() < 0.05, "{a}");
        let b = pathloss_db(200.0, true, &p).unwrap();
        assert!((b - a - 20.0 * 2f64.log10()).abs() < 1e-9);
        let n = pathloss_db(100.0, false, &p).unwrap();
        assert!((n - a - 19.0).abs() < 1e-9);
        assert!(pathloss_db(0.0, true, &p).is_err());
    }

    #[test]
    fn zero_shadowing_is_deterministic() {
        let p = ChannelParams {
            shadow_sigma_los_db: 0.0,
            shadow_sigma_nlos_db: 0.0,
            ..params()
        };
        let uav = Position::new(0.0, 0.0, 100.0);
        let bs = Position::new(0.0, 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let l = realize_link(&mut rng, &uav, &bs, &p).unwrap();
            let expect = db_to_linear(-pathloss_db(100.0, l.los, &p).unwrap());
            assert_eq!(l.mean_gain, expect);
        }
    }

    #[test]
    fn seeded_realization_repeats() {
        let p = params();
        let uav = Position::new(120.0, 40.0, 100.0);
        let bs = Position::new(0.0, 0.0, 25.0);
        let a = realize_link(&mut ChaCha8Rng::seed_from_u64(9), &uav, &bs, &p).unwrap();
        let b = realize_link(&mut ChaCha8Rng::seed_from_u64(9), &uav, &bs, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn los_frequency_at_45_degrees() {
        let p = params();
        let uav = Position::new(100.0, 0.0, 100.0);
        let bs = Position::new(0.0, 0.0, 0.0);
        let expect = los_probability(45.0, &p);
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| realize_link(&mut rng, &uav, &bs, &p).unwrap().los)
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - expect).abs() < 0.01, "{freq} vs {expect}");
    }

    fn link_with_gain(g: f64) -> LinkRealization {
        LinkRealization {
            los: true,
            shadowing_db: 0.0,
            pathloss_db: -10.0 * g.log10(),
            mean_gain: g,
        }
    }

    #[test]
    fn success_prob_at_threshold_is_inverse_e() {
        let p = params();
        // P·g = threshold·noise with P = 10 dBm.
        let g = db_to_linear(p.sinr_threshold_db + p.noise_dbm - 10.0);
        let q = frame_success_prob(&link_with_gain(g), 10.0, None, &p).unwrap();
        assert!((q - (-1f64).exp()).abs() < 1e-12);
        let q_inf =
            frame_success_prob(&link_with_gain(g), 10.0, Some(f64::NEG_INFINITY), &p).unwrap();
        assert_eq!(q, q_inf);
        // +10 dB of power scales the exponent by 0.1.
        let q20 = frame_success_prob(&link_with_gain(g), 20.0, None, &p).unwrap();
        assert!((q20.ln() / q.ln() - 0.1).abs() < 1e-12);
        assert!(frame_success_prob(&link_with_gain(g), 30.0, None, &p).is_err());
    }

    #[test]
    fn empirical_frame_success_matches() {
        let p = params();
        let link = link_with_gain(db_to_linear(-105.0));
        let q = frame_success_prob(&link, 20.0, None, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 100_000;
        // Exponential fading power against the SINR threshold, frame by frame.
        let noise = dbm_to_mw(p.noise_dbm);
        let thr = db_to_linear(p.sinr_threshold_db);
        let hits = (0..n)
            .filter(|_| {
                let fade: f64 = rng.sample(rand_distr::Exp1);
                dbm_to_mw(20.0) * link.mean_gain * fade / noise >= thr
            })
            .count();
        let freq = hits as f64 / n as f64;
        let se = (q * (1.0 - q) / n as f64).sqrt();
        assert!((freq - q).abs() < 3.0 * se, "{freq} vs {q}");
    }

    proptest! {
        #[test]
        fn success_prob_monotone(
            gain_db in -140.0f64..-60.0,
            p1 in 0.0f64..23.0,
            p2 in 0.0f64..23.0,
            i1 in -130.0f64..-60.0,
            i2 in -130.0f64..-60.0,
            dg in 0.0f64..20.0,
        ) {
            let p = params();
            let link = link_with_gain(db_to_linear(gain_db));
            let better = link_with_gain(db_to_linear(gain_db + dg));
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let (ilo, ihi) = if i1 <= i2 { (i1, i2) } else { (i2, i1) };
            let q = |l: &LinkRealization, pw, i| frame_success_prob(l, pw, Some(i), &p).unwrap();
            prop_assert!(q(&link, lo, ilo) <= q(&link, hi, ilo));
            prop_assert!(q(&link, lo, ihi) <= q(&link, lo, ilo));
            prop_assert!(q(&link, lo, ilo) <= q(&better, lo, ilo));
            let v = q(&link, lo, ilo);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
