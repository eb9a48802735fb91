//! Persisted `DoeResult` rows: JSON for round trips, flat CSV for reading.

use std::path::Path;

use doe_core::doe::DoeResult;

use crate::{read_json, write_file, write_json, FileError};

pub fn save_json(path: &Path, rows: &[DoeResult]) -> Result<(), FileError> {
    write_json(path, &rows)
}

pub fn load_json(path: &Path) -> Result<Vec<DoeResult>, FileError> {
    read_json(path)
}

/// One line per interval with one envelope column per DER bus. Verified
/// columns stay empty when the row was not checked by the oracle.
pub fn to_csv(rows: &[DoeResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let buses = rows.first().map(|r| r.der_buses.clone()).unwrap_or_default();
    let mut header: Vec<String> = ["method", "direction", "interval"].map(String::from).to_vec();
    header.extend(buses.iter().map(|b| format!("envelope_{b}")));
    header.extend(
        [
            "j1",
            "j2",
            "j3",
            "j",
            "pred_loss_kw",
            "pred_delta_v",
            "pred_delta_ol",
            "pred_delta_rpf",
            "ver_j1",
            "ver_j2",
            "ver_j3",
            "ver_loss_kw",
            "ver_delta_v",
            "ver_delta_ol",
            "ver_delta_rpf",
            "time_ms",
            "vars",
            "rows",
            "binaries",
            "lp_iterations",
            "nodes",
            "gap",
            "limit_reached",
        ]
        .map(String::from),
    );
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec = vec![
            r.method.name().to_string(),
            r.direction.name().to_string(),
            r.t.to_string(),
        ];
        rec.extend(r.envelope.iter().map(|v| num(*v)));
        let o = &r.objective;
        rec.extend(
            [
                o.j1,
                o.j2,
                o.j3,
                o.total(),
                r.predicted_loss,
                r.predicted.v,
                r.predicted.ol,
                r.predicted.rpf,
            ]
            .map(num),
        );
        match &r.verified {
            Some(v) => {
                let d = &v.deltas;
                let o = &v.objective;
                rec.extend([o.j1, o.j2, o.j3, v.loss, d.v, d.ol, d.rpf].map(num));
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 7)),
        }
        rec.push(num(r.wall_time * 1e3));
        rec.extend([r.num_vars, r.num_rows, r.num_binaries, r.lp_iterations, r.nodes].map(|v| v.to_string()));
        rec.push(num(r.gap));
        rec.push(r.limit_reached.to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn save_csv(path: &Path, rows: &[DoeResult]) -> Result<(), FileError> {
    write_file(path, to_csv(rows).as_bytes())
}

fn num(v: f64) -> String {
    format!("{v:?}")
}
