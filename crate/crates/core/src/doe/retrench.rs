use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::grid::{validate_radial, Feeder, GridError};

/// Which surrogate outputs a DOE instance needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrenchPlan {
    /// Bus indices whose voltage is modeled.
    pub voltage_buses: Vec<usize>,
    /// Line indices whose current is modeled.
    pub current_lines: Vec<usize>,
    /// Line indices whose reverse flow is modeled.
    pub reverse_lines: Vec<usize>,
}

impl RetrenchPlan {
    /// Every bus and line retained.
    pub fn full(feeder: &Feeder) -> Self {
        Self {
            voltage_buses: (0..feeder.buses.len()).collect(),
            current_lines: (0..feeder.lines.len()).collect(),
            reverse_lines: (0..feeder.lines.len()).collect(),
        }
    }

    /// Hex digest of the three index sets.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for set in [&self.voltage_buses, &self.current_lines, &self.reverse_lines] {
            h.update((set.len() as u64).to_le_bytes());
            for &i in set {
                h.update((i as u64).to_le_bytes());
            }
        }
        let digest = h.finalize();
        digest[..16].iter().map(|b| alloc::format!("{b:02x}")).collect()
    }

    /// Positions of `subset` entries within `superset`, or `None` if some
    /// entry is missing.
    pub fn positions(superset: &[usize], subset: &[usize]) -> Option<Vec<usize>> {
        subset.iter().map(|s| superset.iter().position(|x| x == s)).collect()
    }

    pub fn size(&self) -> usize {
        self.voltage_buses.len() + self.current_lines.len() + self.reverse_lines.len()
    }
}

/// Prunes outputs whose limits cannot bind before a neighbour's does.
///
/// Transit buses (zero base load, no DER) are dropped from the voltage set;
/// only lines touching a retained bus keep a current output; reverse flow is
/// modeled only on the line feeding each DER bus.
pub fn retrench(feeder: &Feeder) -> Result<RetrenchPlan, GridError> {
    let topo = validate_radial(feeder)?;
    let transit: BTreeSet<usize> = feeder
        .buses
        .iter()
        .enumerate()
        .filter(|(_, b)| b.base_load_p == 0.0 && b.base_load_q == 0.0 && b.der.is_none())
        .map(|(i, _)| i)
        .collect();
    let voltage_buses: Vec<usize> = (0..feeder.buses.len()).filter(|i| !transit.contains(i)).collect();
    let current_lines = (0..feeder.lines.len())
        .filter(|&l| !transit.contains(&topo.line_from[l]) || !transit.contains(&topo.line_to[l]))
        .collect();
    let mut reverse_lines: Vec<usize> = feeder
        .der_buses()
        .into_iter()
        .filter_map(|b| topo.parent_line[b])
        .collect();
    reverse_lines.sort_unstable();
    reverse_lines.dedup();
    Ok(RetrenchPlan {
        voltage_buses,
        current_lines,
        reverse_lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bus, Der, Line, VoltageBand};
    use alloc::string::ToString;
    use alloc::vec;

    fn five_bus(loads: [f64; 5], der_at: Option<usize>) -> Feeder {
        let edges = [(1, 2), (2, 3), (3, 4), (3, 5)];
        Feeder {
            name: "five".to_string(),
            buses: (0..5)
                .map(|i| Bus {
                    id: i as u32 + 1,
                    base_load_p: loads[i],
                    base_load_q: 0.0,
                    der: (der_at == Some(i)).then_some(Der {
                        p_max: 10.0,
                        p_min: 0.0,
                        q_der: 0.0,
                    }),
                })
                .collect(),
            lines: edges
                .iter()
                .map(|&(f, t)| Line {
                    from_bus: f,
                    to_bus: t,
                    r: 0.01,
                    x: 0.01,
                    i_max: 100.0,
                    p_min_reverse: -50.0,
                })
                .collect(),
            slack_bus: 1,
            slack_voltage: 1.0,
            base_power: 1.0,
            base_voltage: 12.66,
            rated_power_kva: 1000.0,
            rated_current_a: 100.0,
            voltage_band: VoltageBand { v_min: 0.9, v_max: 1.1 },
        }
    }

    #[test]
    fn transit_buses_and_their_line_are_pruned() {
        let f = five_bus([5.0, 0.0, 0.0, 3.0, 4.0], None);
        let plan = retrench(&f).unwrap();
        // buses 2 and 3 (indices 1, 2) only carry transit power
        assert_eq!(plan.voltage_buses, vec![0, 3, 4]);
        // line (2,3) joins two transit buses
        assert_eq!(plan.current_lines, vec![0, 2, 3]);
        assert!(plan.reverse_lines.is_empty());
    }

    #[test]
    fn fully_loaded_feeder_keeps_everything_but_reverse_flow() {
        let f = five_bus([1.0; 5], None);
        let plan = retrench(&f).unwrap();
        assert_eq!(plan.voltage_buses.len(), 5);
        assert_eq!(plan.current_lines.len(), 4);
    }

    #[test]
    fn leaf_der_watches_its_parent_line() {
        let f = five_bus([1.0; 5], Some(4));
        let plan = retrench(&f).unwrap();
        assert_eq!(plan.reverse_lines, vec![3]);
        assert_ne!(plan.fingerprint(), RetrenchPlan::full(&f).fingerprint());
    }
}
