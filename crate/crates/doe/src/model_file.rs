//! Model JSON files. Floats are written in shortest round-trip form, so a
//! saved model loads back bit for bit.

use std::path::{Path, PathBuf};

use doe_core::doe::SurrogateSet;
use doe_core::icnn::{Architecture, HeadKind, Model};

use crate::FileError;

pub fn save_model(model: &Model, path: &Path) -> Result<(), FileError> {
    crate::write_json(path, model)
}

pub fn load_model(path: &Path) -> Result<Model, FileError> {
    let m: Model = crate::read_json(path)?;
    m.check().map_err(|e| FileError::malformed(path, e.to_string()))?;
    Ok(m)
}

pub fn arch_name(arch: Architecture) -> &'static str {
    match arch {
        Architecture::Icnn => "icnn",
        Architecture::Mlp => "mlp",
    }
}

/// `<dir>/<arch>_<head>.json`
pub fn model_path(dir: &Path, arch: Architecture, head: HeadKind) -> PathBuf {
    dir.join(format!("{}_{}.json", arch_name(arch), head.name()))
}

pub fn save_set(set: &SurrogateSet, dir: &Path) -> Result<(), FileError> {
    for m in set.models() {
        save_model(m, &model_path(dir, m.arch, m.head))?;
    }
    Ok(())
}

pub fn load_set(dir: &Path, arch: Architecture) -> Result<SurrogateSet, FileError> {
    let get = |h| {
        let path = model_path(dir, arch, h);
        let m = load_model(&path)?;
        if m.head != h || m.arch != arch {
            return Err(FileError::malformed(&path, "model kind does not match its file name"));
        }
        Ok(m)
    };
    Ok(SurrogateSet {
        loss: get(HeadKind::Loss)?,
        v: get(HeadKind::V)?,
        ol: get(HeadKind::Ol)?,
        rpf: get(HeadKind::Rpf)?,
    })
}

/// True when all four files of `arch` exist in `dir`.
pub fn set_exists(dir: &Path, arch: Architecture) -> bool {
    HeadKind::ALL.iter().all(|&h| model_path(dir, arch, h).exists())
}
