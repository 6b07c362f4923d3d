//! Log-distance path loss with Gaussian shadowing, and distance-quantized
//! timing advance.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::UeProfile;
use crate::model::{Fingerprint, SimTime, RSSI_MAX_DBM, RSSI_MIN_DBM};

pub const MIN_DISTANCE_M: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioModel {
    pub pathloss_exponent: f64,
    pub ref_rssi_dbm_at_1m: f64,
    pub rssi_noise_sigma_db: f64,
    pub ta_meters_per_sample: f64,
    /// Constant TA reported at zero distance (processing offset).
    pub ta_offset_samples: u32,
}

impl Default for RadioModel {
    /// Indoor lab calibration: 3-15 m maps onto TA 31-33.
    fn default() -> Self {
        RadioModel {
            pathloss_exponent: 2.0,
            ref_rssi_dbm_at_1m: -30.0,
            rssi_noise_sigma_db: 1.5,
            ta_meters_per_sample: 5.0,
            ta_offset_samples: 30,
        }
    }
}

impl RadioModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent > 0.0) {
            return Err("pathloss_exponent must be positive".into());
        }
        if !(self.rssi_noise_sigma_db.is_finite() && self.rssi_noise_sigma_db >= 0.0) {
            return Err("rssi_noise_sigma_db must be >= 0".into());
        }
        if !(self.ta_meters_per_sample.is_finite() && self.ta_meters_per_sample > 0.0) {
            return Err("ta_meters_per_sample must be positive".into());
        }
        if !self.ref_rssi_dbm_at_1m.is_finite() {
            return Err("ref_rssi_dbm_at_1m must be finite".into());
        }
        Ok(())
    }

    pub fn timing_advance(&self, distance_m: f64) -> u32 {
        self.ta_offset_samples + (distance_m.max(0.0) / self.ta_meters_per_sample).round() as u32
    }

    /// Noise-free RSSI for a transmitter `distance_m` away.
    pub fn mean_rssi(&self, distance_m: f64, tx_power_offset_db: f64) -> f64 {
        self.ref_rssi_dbm_at_1m - 10.0 * self.pathloss_exponent * distance_m.log10() + tx_power_offset_db
    }
}

/// Draw the fingerprint the gNB measures for a MSG3 from `ue` at `now`.
pub fn sample_fingerprint<R: Rng + ?Sized>(
    model: &RadioModel,
    ue: &UeProfile,
    gnb_position: [f64; 2],
    now: SimTime,
    rng: &mut R,
) -> Fingerprint {
    let (x, y) = ue.position_at(now.as_ms());
    let mut d = (x - gnb_position[0]).hypot(y - gnb_position[1]);
    if d < MIN_DISTANCE_M {
        tracing::warn!(ue = ue.id, distance = d, "degenerate geometry, clamping distance to {MIN_DISTANCE_M} m");
        d = MIN_DISTANCE_M;
    }
    let sigma = ue.rssi_sigma_db.unwrap_or(model.rssi_noise_sigma_db);
    let noise = if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("sigma validated").sample(rng)
    } else {
        0.0
    };
    let rssi = (model.mean_rssi(d, ue.tx_power_offset_db) + noise).clamp(RSSI_MIN_DBM, RSSI_MAX_DBM);
    Fingerprint { ta: model.timing_advance(d), rssi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ransim::config::Behavior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn benign() -> Behavior {
        Behavior::Benign { attach_ms: vec![], attach_jitter_ms: 0, msg5_delay_ms: [5, 20] }
    }

    fn stats(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn noiseless_samples_are_identical() {
        let model = RadioModel { rssi_noise_sigma_db: 0.0, ..RadioModel::default() };
        let ue = UeProfile::static_at(1, 10.0, 0.0, benign());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = sample_fingerprint(&model, &ue, [0.0, 0.0], SimTime(5), &mut rng);
        let b = sample_fingerprint(&model, &ue, [0.0, 0.0], SimTime(5), &mut rng);
        assert_eq!(a, b);
        assert_eq!(a, Fingerprint::new(32, -50.0));
    }

    #[test]
    fn lab_distances_give_narrow_ta_range() {
        let m = RadioModel::default();
        assert_eq!(m.timing_advance(3.0), 31);
        assert_eq!(m.timing_advance(15.0), 33);
        for d in [3.0, 5.0, 8.0, 12.0, 15.0] {
            assert!((30..=33).contains(&m.timing_advance(d)));
        }
    }

    #[test]
    fn calibrated_position_matches_lab_row() {
        // Placed 5 m away with a -8.62 dB offset: mean (31, -52.6) before noise.
        let mut ue = UeProfile::static_at(3, 0.0, 5.0, benign());
        ue.tx_power_offset_db = -8.62;
        ue.rssi_sigma_db = Some(1.2);
        let model = RadioModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let fps: Vec<Fingerprint> = (0..1000)
            .map(|i| sample_fingerprint(&model, &ue, [0.0, 0.0], SimTime(i), &mut rng))
            .collect();
        let (ta_mean, _) = stats(&fps.iter().map(|f| f64::from(f.ta)).collect::<Vec<_>>());
        let (rssi_mean, _) = stats(&fps.iter().map(|f| f.rssi).collect::<Vec<_>>());
        assert!((ta_mean - 31.0).abs() <= 0.5, "{ta_mean}");
        assert!((rssi_mean - (-52.6)).abs() <= 1.0, "{rssi_mean}");
    }

    #[test]
    fn noise_sigma_is_recovered() {
        // For n = 1000 the sample sigma has a standard error of about
        // sigma / sqrt(2n) = 0.034 dB; [1.2, 1.8] is almost nine of those wide.
        let ue = UeProfile::static_at(1, 4.0, 3.0, benign());
        let model = RadioModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rssi: Vec<f64> = (0..1000)
            .map(|i| sample_fingerprint(&model, &ue, [0.0, 0.0], SimTime(i), &mut rng).rssi)
            .collect();
        let (_, sd) = stats(&rssi);
        assert!((1.2..=1.8).contains(&sd), "{sd}");
    }

    #[test]
    fn colocated_ue_is_clamped() {
        let ue = UeProfile::static_at(1, 0.0, 0.0, benign());
        let model = RadioModel { rssi_noise_sigma_db: 0.0, ..RadioModel::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = sample_fingerprint(&model, &ue, [0.0, 0.0], SimTime(0), &mut rng);
        assert_eq!(f.ta, 30);
        assert!((f.rssi - (-10.0)).abs() < 1e-9);
        assert!(f.is_plausible());
    }
}
