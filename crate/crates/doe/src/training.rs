//! Training the four surrogates of one architecture.

use doe_core::doe::{retrench, RetrenchPlan, SurrogateSet};
use doe_core::grid::Feeder;
use doe_core::icnn::{nmae, train, Architecture, HeadKind, IcnnError, Model, TrainConfig, TrainReport};
use doe_core::snapshot::{split, SnapshotError, SnapshotSet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("{head:?}: {source}")]
    Head {
        head: HeadKind,
        #[source]
        source: IcnnError,
    },
    #[error(transparent)]
    Grid(#[from] doe_core::grid::GridError),
    #[error("dataset belongs to a different feeder")]
    FeederMismatch,
}

/// Hidden layer widths per head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenSizes {
    pub loss: Vec<usize>,
    pub v: Vec<usize>,
    pub ol: Vec<usize>,
    pub rpf: Vec<usize>,
}

impl Default for HiddenSizes {
    fn default() -> Self {
        Self {
            loss: vec![16, 16],
            v: vec![32, 32],
            ol: vec![32, 32],
            rpf: vec![32, 32],
        }
    }
}

impl HiddenSizes {
    pub fn get(&self, head: HeadKind) -> &[usize] {
        match head {
            HeadKind::Loss => &self.loss,
            HeadKind::V => &self.v,
            HeadKind::Ol => &self.ol,
            HeadKind::Rpf => &self.rpf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub hidden: HiddenSizes,
    pub config: TrainConfig,
    /// Share of the dataset held out for the NMAE report.
    pub test_fraction: f64,
    /// Train only the outputs a retrenched instance needs.
    pub retrench: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            hidden: HiddenSizes::default(),
            config: TrainConfig {
                epochs: 300,
                batch_size: 128,
                learning_rate: 2e-3,
                patience: 30,
                ..TrainConfig::default()
            },
            test_fraction: 0.2,
            retrench: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadReport {
    pub arch: Architecture,
    pub head: HeadKind,
    /// Held-out NMAE of the physical quantity.
    pub nmae: f64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub best_epoch: usize,
    pub val_loss: f64,
}

/// Output selection for every head.
pub fn selections(feeder: &Feeder, retrenched: bool) -> Result<RetrenchPlan, TrainError> {
    Ok(if retrenched {
        retrench(feeder)?
    } else {
        RetrenchPlan::full(feeder)
    })
}

/// Trains the four heads of `arch` (in parallel) and reports held-out NMAE.
/// Models come back with their normalization unfolded.
pub fn train_surrogates(
    feeder: &Feeder,
    data: &SnapshotSet,
    arch: Architecture,
    settings: &TrainSettings,
) -> Result<(SurrogateSet, Vec<HeadReport>), TrainError> {
    if data.feeder_fingerprint != feeder.fingerprint() {
        return Err(TrainError::FeederMismatch);
    }
    let seed = settings.config.seed;
    let (train_set, test_set) = split(data, 1.0 - settings.test_fraction, seed)?;
    let val_frac = settings.config.validation_fraction;
    let (fit_set, val_set) = split(&train_set, 1.0 - val_frac, seed ^ 0x5eed)?;
    let plan = selections(feeder, settings.retrench)?;
    let n = feeder.buses.len();

    let trained: Vec<(Model, HeadReport)> = HeadKind::ALL
        .par_iter()
        .enumerate()
        .map(|(k, &head)| {
            let wrap = |source| TrainError::Head { head, source };
            let sel = match head {
                HeadKind::Loss => vec![],
                HeadKind::V => plan.voltage_buses.clone(),
                HeadKind::Ol => plan.current_lines.clone(),
                HeadKind::Rpf => plan.reverse_lines.clone(),
            };
            let mut model = Model::new(
                arch,
                head,
                2 * n,
                settings.hidden.get(head),
                sel.clone(),
                seed + k as u64,
            );
            let cfg = TrainConfig {
                seed: seed + k as u64,
                ..settings.config.clone()
            };
            let rep = train(
                &mut model,
                &fit_set.inputs,
                &head.targets(&fit_set, &sel),
                &val_set.inputs,
                &head.targets(&val_set, &sel),
                &cfg,
            )
            .map_err(wrap)?;
            model.provenance.feeder_fingerprint = feeder.fingerprint();
            model.provenance.selection_fingerprint = plan.fingerprint();
            let err = nmae(
                &model,
                &test_set.inputs,
                &head.targets(&test_set, &sel),
                head.normalizer(feeder),
            )
            .map_err(wrap)?;
            Ok((
                model,
                HeadReport {
                    arch,
                    head,
                    nmae: err,
                    train_rows: fit_set.len(),
                    test_rows: test_set.len(),
                    best_epoch: rep.best_epoch,
                    val_loss: best_val(&rep),
                },
            ))
        })
        .collect::<Result<_, TrainError>>()?;
    let mut it = trained.into_iter();
    let mut reports = Vec::with_capacity(4);
    let mut next = || {
        let (m, r) = it.next().expect("four heads");
        reports.push(r);
        m
    };
    let set = SurrogateSet {
        loss: next(),
        v: next(),
        ol: next(),
        rpf: next(),
    };
    Ok((set, reports))
}

fn best_val(rep: &TrainReport) -> f64 {
    match rep.best_epoch {
        0 => rep.initial_val_loss,
        e => rep.val_loss[e - 1],
    }
}
