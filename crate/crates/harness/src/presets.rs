//! Named scenario configurations used by the campaigns.

use intercept_core::engagement::EpisodeConfig;
use intercept_core::scenario::{Range, ScenarioConfig};
use intercept_core::SimError;
use intercept_policy::train::TrainConfig;
use intercept_policy::Environment;

/// Parasitic-effect rows 1–8: `(com %, e_θ, e_ω, σ_θ, σ_ω in 1e-3, τ_u, τ_θ in ms)`.
const SCENARIO_ROWS: [(f64, f64, f64, f64, f64, f64, f64); 8] = [
    (0.0, 0.0, 0.0, 0.0, 0.0, 20.0, 20.0),
    (2.5, 0.1, 0.1, 0.1, 0.1, 20.0, 20.0),
    (2.5, 1.0, 1.0, 1.0, 1.0, 20.0, 20.0),
    (4.0, 0.1, 0.1, 0.1, 0.1, 20.0, 20.0),
    (4.0, 1.0, 1.0, 1.0, 1.0, 20.0, 20.0),
    (2.5, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0),
    (2.5, 1.0, 1.0, 1.0, 1.0, 10.0, 10.0),
    (2.5, 1.0, 1.0, 1.0, 1.0, 30.0, 30.0),
];

/// Extended engagement rows 1–7 on top of row 2: `(range km, target θ deg)`.
const EXTENDED_ROWS: [(f64, f64, f64, f64); 7] = [
    (50.0, 55.0, 80.0, 110.0),
    (50.0, 55.0, 100.0, 120.0),
    (50.0, 55.0, 110.0, 130.0),
    (50.0, 55.0, 120.0, 140.0),
    (30.0, 55.0, 80.0, 110.0),
    (30.0, 55.0, 100.0, 120.0),
    (30.0, 55.0, 110.0, 130.0),
];

pub fn scenario_row(row: usize) -> Result<ScenarioConfig, SimError> {
    let &(com, et, ew, st, sw, tu, tt) = SCENARIO_ROWS
        .get(row.wrapping_sub(1))
        .ok_or_else(|| SimError::ConfigFault(format!("scenario row {row} not in 1..=8")))?;
    Ok(ScenarioConfig::default()
        .with_com_percent(com)
        .with_sensor_errors(et * 1e-3, ew * 1e-3, st * 1e-3, sw * 1e-3)
        .with_lags_ms(tu, tt))
}

pub fn extended_row(row: usize) -> Result<ScenarioConfig, SimError> {
    let &(r0, r1, t0, t1) = EXTENDED_ROWS
        .get(row.wrapping_sub(1))
        .ok_or_else(|| SimError::ConfigFault(format!("extended row {row} not in 1..=7")))?;
    let mut s = scenario_row(2)?;
    s.range_m = Range::new(r0 * 1e3, r1 * 1e3);
    s.theta_deg = Range::new(t0, t1);
    Ok(s)
}

/// Translational PN benchmark: default initial conditions, 20 ms lags.
pub fn pn_benchmark() -> (ScenarioConfig, EpisodeConfig) {
    (ScenarioConfig::default().with_lags_ms(20.0, 20.0), EpisodeConfig::benchmark())
}

/// Simplified training scenario for desk-scale runs: no sensor errors,
/// heading error up to 2°, maneuvers up to 2 g, 1 % center-of-mass bound.
pub fn reduced_training() -> ScenarioConfig {
    let mut s = ScenarioConfig::training().with_com_percent(1.0);
    s.heading_error_deg = Range::new(0.0, 2.0);
    s.target_accel = Range::new(0.0, 2.0 * 9.81);
    s
}

/// Training setup for the simplified scenario: 2000 updates of 30 episodes
/// with a larger policy step than the full-scale default, evaluated every
/// 50 updates.
pub fn reduced_train_config() -> TrainConfig {
    let mut cfg = TrainConfig { env: Environment::new(reduced_training(), EpisodeConfig::default()), ..TrainConfig::default() };
    cfg.updates = 2000;
    cfg.ppo.lr_policy = 3e-4;
    cfg.eval_every = 50;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_override_only_their_columns() {
        let d = ScenarioConfig::default();
        let r3 = scenario_row(3).unwrap();
        assert_eq!(r3.e_theta, Range::new(-1e-3, 1e-3));
        assert_eq!(r3.sigma_omega, Range::fixed(1e-3));
        assert_eq!(r3.com_percent, Range::new(-2.5, 2.5));
        assert_eq!(r3.range_m, d.range_m);
        assert_eq!(scenario_row(6).unwrap().tau_u_ms, Range::fixed(0.0));
        assert_eq!(scenario_row(1).unwrap().sigma_theta, Range::fixed(0.0));
        assert!(scenario_row(0).is_err() && scenario_row(9).is_err());
        for r in 1..=8 {
            scenario_row(r).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn extended_rows_start_from_row_two() {
        let e = extended_row(5).unwrap();
        assert_eq!(e.range_m, Range::new(30e3, 55e3));
        assert_eq!(e.theta_deg, Range::new(80.0, 110.0));
        assert_eq!(e.e_theta, scenario_row(2).unwrap().e_theta);
        assert!(extended_row(8).is_err());
    }
}
