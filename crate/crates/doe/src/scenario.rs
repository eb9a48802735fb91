//! Constructed request sets: the stress day and randomized instances.

use doe_core::doe::{DerForecast, Direction, DoeInterval, DoeRequest, Weights};
use doe_core::grid::Feeder;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Hourly load multiplier on base load: light midday, peak at 19:00.
const LOAD_SHAPE: [f64; 25] = [
    0.45, 0.40, 0.38, 0.37, 0.38, 0.42, 0.52, 0.65, 0.72, 0.62, 0.48, 0.36, 0.30, 0.30, 0.33, 0.40, 0.55, 0.75, 0.92,
    1.00, 0.95, 0.85, 0.70, 0.55, 0.45,
];

fn interpolate(shape: &[f64; 25], hour: f64) -> f64 {
    let h = hour.clamp(0.0, 24.0);
    let k = (h.floor() as usize).min(23);
    let f = h - k as f64;
    shape[k] * (1.0 - f) + shape[k + 1] * f
}

/// Load multiplier at `hour` of the stress day.
pub fn load_shape(hour: f64) -> f64 {
    interpolate(&LOAD_SHAPE, hour)
}

/// Clear-sky solar shape: zero before 06:00 and after 18:00, one at noon.
pub fn solar_shape(hour: f64) -> f64 {
    if (6.0..=18.0).contains(&hour) {
        (std::f64::consts::PI * (hour - 6.0) / 12.0).sin()
    } else {
        0.0
    }
}

/// Evening charging window of bidirectional DERs.
fn charging_shape(hour: f64) -> f64 {
    if (17.0..23.0).contains(&hour) {
        1.0
    } else {
        0.5
    }
}

/// A day of `steps` equal intervals. Generation-only DERs follow the solar
/// shape at full rating; bidirectional ones may export their full rating all
/// day and import their full rating in the evening. Loads follow
/// [`load_shape`], so midday export into light load and the evening peak
/// both press against the limits.
pub fn stress_day(feeder: &Feeder, direction: Direction, steps: usize) -> DoeRequest {
    let intervals = (0..steps)
        .map(|t| {
            let hour = 24.0 * (t as f64 + 0.5) / steps as f64;
            let mut iv = DoeInterval::from_feeder(feeder, t, load_shape(hour), 1.0);
            for d in &mut iv.ders {
                if d.p_min >= 0.0 {
                    d.p_max *= solar_shape(hour);
                    d.p_min = d.p_min.min(d.p_max);
                } else {
                    d.p_min *= charging_shape(hour);
                }
            }
            iv
        })
        .collect();
    DoeRequest {
        intervals,
        limits: feeder.limits(),
        weights: Weights::default(),
        direction,
    }
}

/// `count` single-interval requests with random loads, DER forecasts,
/// penalty weights and direction.
pub fn random_requests(feeder: &Feeder, count: usize, seed: u64) -> Vec<DoeRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|t| {
            let scale = rng.gen_range(0.3..1.1);
            let mut iv = DoeInterval::from_feeder(feeder, t, scale, 1.0);
            for (p, q) in iv.load_p.iter_mut().zip(iv.load_q.iter_mut()) {
                let noise = rng.gen_range(0.9..1.1);
                *p *= noise;
                *q *= noise;
            }
            iv.ders = iv
                .ders
                .iter()
                .map(|d| DerForecast {
                    p_max: d.p_max * rng.gen_range(0.3..1.0),
                    ..*d
                })
                .collect();
            let pick = |rng: &mut ChaCha8Rng, xs: &[f64]| xs[rng.gen_range(0..xs.len())];
            let weights = Weights {
                w_doe: 1.0,
                w_loss: pick(&mut rng, &[0.5, 1.0, 2.0]),
                w_v: pick(&mut rng, &[1e2, 1e3, 1e4]),
                w_ol: pick(&mut rng, &[1e2, 1e3, 1e4]),
                w_rpf: pick(&mut rng, &[1e2, 1e3, 1e4]),
            };
            let direction = if rng.gen_bool(0.5) {
                Direction::Upper
            } else {
                Direction::Lower
            };
            DoeRequest {
                intervals: vec![iv],
                limits: feeder.limits(),
                weights,
                direction,
            }
        })
        .collect()
}
