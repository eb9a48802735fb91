//! Feeder JSON: a header with bases and units, then `buses`, `lines`,
//! `ders` and `limits` arrays.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use doe_core::grid::{Bus, BusId, Der, Feeder, Line, VoltageBand};
use serde::{Deserialize, Serialize};

use crate::FileError;

/// The feeder shipped with the crate.
pub const BUNDLED_FEEDER: &str = include_str!("../data/ieee33.json");

/// Location of the bundled feeder in a source checkout.
pub fn bundled_feeder_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("ieee33.json")
}

pub fn bundled_feeder() -> Feeder {
    parse_feeder(BUNDLED_FEEDER, Path::new("<bundled>")).expect("bundled feeder is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederFile {
    pub header: Header,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<Line>,
    #[serde(default)]
    pub ders: Vec<DerRecord>,
    pub limits: VoltageBand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub base_power_mva: f64,
    pub base_voltage_kv: f64,
    pub slack_bus: BusId,
    #[serde(default = "one")]
    pub slack_voltage_pu: f64,
    pub rated_power_kva: f64,
    pub rated_current_a: f64,
    #[serde(default)]
    pub units: BTreeMap<String, String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: BusId,
    pub base_load_p: f64,
    pub base_load_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerRecord {
    pub bus: BusId,
    pub p_max: f64,
    pub p_min: f64,
    pub q_der: f64,
}

impl FeederFile {
    pub fn into_feeder(self) -> Result<Feeder, doe_core::grid::GridError> {
        let mut buses: Vec<Bus> = self
            .buses
            .into_iter()
            .map(|b| Bus {
                id: b.id,
                base_load_p: b.base_load_p,
                base_load_q: b.base_load_q,
                der: None,
            })
            .collect();
        for d in self.ders {
            let bus = buses
                .iter_mut()
                .find(|b| b.id == d.bus)
                .ok_or(doe_core::grid::GridError::UnknownBus(d.bus))?;
            bus.der = Some(Der {
                p_max: d.p_max,
                p_min: d.p_min,
                q_der: d.q_der,
            });
        }
        let h = self.header;
        let feeder = Feeder {
            name: h.name,
            buses,
            lines: self.lines,
            slack_bus: h.slack_bus,
            slack_voltage: h.slack_voltage_pu,
            base_power: h.base_power_mva,
            base_voltage: h.base_voltage_kv,
            rated_power_kva: h.rated_power_kva,
            rated_current_a: h.rated_current_a,
            voltage_band: self.limits,
        };
        feeder.check()?;
        Ok(feeder)
    }

    pub fn from_feeder(f: &Feeder) -> Self {
        let units = [
            ("base_load_p", "kW"),
            ("base_load_q", "kVar"),
            ("r", "pu"),
            ("x", "pu"),
            ("i_max", "A"),
            ("p_min_reverse", "kW"),
            ("p_max", "kW"),
            ("p_min", "kW"),
            ("q_der", "kVar"),
            ("v_min", "pu"),
            ("v_max", "pu"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Self {
            header: Header {
                name: f.name.clone(),
                description: String::new(),
                base_power_mva: f.base_power,
                base_voltage_kv: f.base_voltage,
                slack_bus: f.slack_bus,
                slack_voltage_pu: f.slack_voltage,
                rated_power_kva: f.rated_power_kva,
                rated_current_a: f.rated_current_a,
                units,
            },
            buses: f
                .buses
                .iter()
                .map(|b| BusRecord {
                    id: b.id,
                    base_load_p: b.base_load_p,
                    base_load_q: b.base_load_q,
                })
                .collect(),
            lines: f.lines.clone(),
            ders: f
                .buses
                .iter()
                .filter_map(|b| {
                    b.der.map(|d| DerRecord {
                        bus: b.id,
                        p_max: d.p_max,
                        p_min: d.p_min,
                        q_der: d.q_der,
                    })
                })
                .collect(),
            limits: f.voltage_band,
        }
    }
}

pub fn parse_feeder(text: &str, path: &Path) -> Result<Feeder, FileError> {
    let file: FeederFile = serde_json::from_str(text).map_err(|e| FileError::json(path, e))?;
    Ok(file.into_feeder()?)
}

pub fn load_feeder(path: &Path) -> Result<Feeder, FileError> {
    let text = std::fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    parse_feeder(&text, path)
}

pub fn save_feeder(feeder: &Feeder, path: &Path) -> Result<(), FileError> {
    let text = serde_json::to_string_pretty(&FeederFile::from_feeder(feeder)).expect("feeder serializes");
    crate::write_file(path, text.as_bytes())
}
