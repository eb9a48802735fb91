//! Snapshot datasets on disk: `manifest.json` plus one CSV per block.

use std::path::Path;

use doe_core::grid::{DistFlowSolver, Feeder};
use doe_core::snapshot::{check_rejections, generate_row, SamplingSpec, Snapshot, SnapshotError, SnapshotSet};
use doe_core::Matrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::FileError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub feeder_fingerprint: String,
    pub n: usize,
    pub seed: u64,
    pub spec: SamplingSpec,
    pub rejections: usize,
}

/// Row-parallel generation. Row `i` depends only on `(spec.seed, i)`, so
/// the result equals the sequential [`doe_core::snapshot::generate`].
pub fn generate_parallel(feeder: &Feeder, spec: &SamplingSpec, n: usize) -> Result<SnapshotSet, SnapshotError> {
    spec.check(feeder)?;
    let solver = DistFlowSolver::new(feeder)?;
    let rows: Vec<Snapshot> = (0..n)
        .into_par_iter()
        .map(|i| generate_row(&solver, spec, i))
        .collect::<Result<_, _>>()?;
    let mut set = SnapshotSet::empty(feeder, spec.clone());
    for r in &rows {
        set.push(r);
    }
    check_rejections(set.rejections, n)?;
    Ok(set)
}

fn bus_header(feeder: &Feeder, prefix: &str) -> Vec<String> {
    feeder.buses.iter().map(|b| format!("{prefix}_{}", b.id)).collect()
}

fn line_header(feeder: &Feeder, prefix: &str) -> Vec<String> {
    feeder
        .lines
        .iter()
        .map(|l| format!("{prefix}_{}_{}", l.from_bus, l.to_bus))
        .collect()
}

fn headers(feeder: &Feeder) -> [(&'static str, Vec<String>); 6] {
    let mut inputs = bus_header(feeder, "p");
    inputs.extend(bus_header(feeder, "q"));
    [
        ("inputs.csv", inputs),
        ("loss.csv", vec!["loss_kw".to_string()]),
        ("v.csv", bus_header(feeder, "v")),
        ("i.csv", line_header(feeder, "i")),
        ("p_flow.csv", line_header(feeder, "p")),
        ("q_flow.csv", line_header(feeder, "q")),
    ]
}

fn write_matrix(path: &Path, header: &[String], m: &Matrix) -> Result<(), FileError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| FileError::malformed(path, e.to_string());
    w.write_record(header).map_err(io)?;
    for r in 0..m.rows {
        // `{:?}` is the shortest representation that parses back exactly
        w.write_record(m.row(r).iter().map(|v| format!("{v:?}"))).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| FileError::malformed(path, e.to_string()))?;
    crate::write_file(path, &bytes)
}

fn read_matrix(path: &Path, header: &[String], rows: usize) -> Result<Matrix, FileError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => FileError::io(path, io),
        other => FileError::malformed(path, format!("{other:?}")),
    })?;
    let got: Vec<String> = r
        .headers()
        .map_err(|e| FileError::malformed(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != header {
        return Err(FileError::malformed(path, "header does not match the feeder"));
    }
    let mut m = Matrix::zeros(rows, header.len());
    let mut n = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| FileError::malformed(path, e.to_string()))?;
        if n >= rows {
            return Err(FileError::malformed(path, format!("more than {rows} rows")));
        }
        if rec.len() != header.len() {
            return Err(FileError::malformed(path, format!("row {n} has {} fields", rec.len())));
        }
        for (j, f) in rec.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| FileError::malformed(path, format!("row {n}: bad number {f:?}")))?;
            m.set(n, j, v);
        }
        n += 1;
    }
    if n != rows {
        return Err(FileError::malformed(path, format!("{n} rows, manifest says {rows}")));
    }
    Ok(m)
}

pub fn save(set: &SnapshotSet, feeder: &Feeder, dir: &Path) -> Result<(), FileError> {
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        feeder_fingerprint: set.feeder_fingerprint.clone(),
        n: set.len(),
        seed: set.spec.seed,
        spec: set.spec.clone(),
        rejections: set.rejections,
    };
    crate::write_json(&dir.join("manifest.json"), &manifest)?;
    let loss = Matrix {
        rows: set.len(),
        cols: 1,
        data: set.loss.clone(),
    };
    let blocks = [&set.inputs, &loss, &set.v, &set.i, &set.p_flow, &set.q_flow];
    for ((name, header), m) in headers(feeder).iter().zip(blocks) {
        write_matrix(&dir.join(name), header, m)?;
    }
    Ok(())
}

/// Loads a dataset and checks it belongs to `feeder`.
pub fn load(dir: &Path, feeder: &Feeder) -> Result<SnapshotSet, FileError> {
    let manifest: Manifest = crate::read_json(&dir.join("manifest.json"))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(FileError::malformed(
            &dir.join("manifest.json"),
            format!("unsupported schema version {}", manifest.schema_version),
        ));
    }
    let expected = feeder.fingerprint();
    if manifest.feeder_fingerprint != expected {
        return Err(FileError::FingerprintMismatch {
            expected,
            found: manifest.feeder_fingerprint,
        });
    }
    let n = manifest.n;
    let mut blocks = Vec::with_capacity(6);
    for (name, header) in headers(feeder).iter() {
        blocks.push(read_matrix(&dir.join(name), header, n)?);
    }
    let mut it = blocks.into_iter();
    let mut next = || it.next().expect("six blocks");
    Ok(SnapshotSet {
        inputs: next(),
        loss: next().data,
        v: next(),
        i: next(),
        p_flow: next(),
        q_flow: next(),
        feeder_fingerprint: manifest.feeder_fingerprint,
        spec: manifest.spec,
        rejections: manifest.rejections,
    })
}
