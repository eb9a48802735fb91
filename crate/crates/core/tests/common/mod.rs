#![allow(dead_code)]

use doe_core::doe::{Direction, DoeInterval, DoeRequest, SurrogateSet, Weights};
use doe_core::grid::{Bus, Der, Feeder, Line, VoltageBand};
use doe_core::icnn::{Architecture, HeadKind, Model};

/// Five buses, `1–2–3–4` and `3–5`, with one DER at bus 4.
pub fn tiny_feeder() -> Feeder {
    let loads = [(0.0, 0.0), (60.0, 20.0), (0.0, 0.0), (80.0, 30.0), (120.0, 40.0)];
    let edges = [(1, 2), (2, 3), (3, 4), (3, 5)];
    Feeder {
        name: "tiny".into(),
        buses: loads
            .iter()
            .enumerate()
            .map(|(i, &(p, q))| Bus {
                id: i as u32 + 1,
                base_load_p: p,
                base_load_q: q,
                der: (i == 3).then_some(Der {
                    p_max: 400.0,
                    p_min: -200.0,
                    q_der: 10.0,
                }),
            })
            .collect(),
        lines: edges
            .iter()
            .map(|&(f, t)| Line {
                from_bus: f,
                to_bus: t,
                r: 0.02,
                x: 0.015,
                i_max: 15.0,
                p_min_reverse: -100.0,
            })
            .collect(),
        slack_bus: 1,
        slack_voltage: 1.0,
        base_power: 1.0,
        base_voltage: 12.66,
        rated_power_kva: 1000.0,
        rated_current_a: 45.0,
        voltage_band: VoltageBand {
            v_min: 0.95,
            v_max: 1.05,
        },
    }
}

pub fn request(feeder: &Feeder, direction: Direction, weights: Weights) -> DoeRequest {
    DoeRequest {
        intervals: vec![DoeInterval::from_feeder(feeder, 0, 1.0, 1.0)],
        limits: feeder.limits(),
        weights,
        direction,
    }
}

/// Untrained networks with inputs scaled to O(1), folded.
pub fn random_set(feeder: &Feeder, arch: Architecture, hidden: &[usize], seed: u64) -> SurrogateSet {
    let n = feeder.buses.len();
    let make = |kind: HeadKind, sel: Vec<usize>, s: u64| {
        let mut m = Model::new(arch, kind, 2 * n, hidden, sel, seed * 10 + s);
        m.normalization.x_scale = vec![100.0; 2 * n];
        let scale = match kind {
            HeadKind::Loss => 5.0,
            HeadKind::V => 0.05,
            HeadKind::Ol => 10.0,
            HeadKind::Rpf => 100.0,
        };
        m.normalization.y_scale.iter_mut().for_each(|v| *v = scale);
        if kind == HeadKind::V {
            let k = m.normalization.y_mean.len() / 2;
            for (i, v) in m.normalization.y_mean.iter_mut().enumerate() {
                *v = if i < k { 1.0 } else { -1.0 };
            }
        }
        m.fold_normalization().unwrap();
        m
    };
    let lines: Vec<usize> = (0..feeder.lines.len()).collect();
    SurrogateSet {
        loss: make(HeadKind::Loss, vec![], 1),
        v: make(HeadKind::V, (0..n).collect(), 2),
        ol: make(HeadKind::Ol, lines.clone(), 3),
        rpf: make(HeadKind::Rpf, lines, 4),
    }
}
