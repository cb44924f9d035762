use std::path::Path;

use adapt::{BagModel, Calibration};
use calibrate::{BinaryCalib, ConfusionMatrix};
use disentangle::VaeParams;
use numkit::{Matrix, Mlp, Parameterized, Rng};
use predictor::DecomposedHead;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::TrainConfig;
use crate::error::{BenchError, Result};
use crate::loss::SourceModel;
use crate::train::init_erm;

/// Container tag of checkpoint files.
pub const CHECKPOINT_FORMAT: &str = "bag-checkpoint";
/// Current checkpoint layout version.
pub const CHECKPOINT_VERSION: u32 = 1;

/// A persisted model.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Bag(BagModel),
    Erm(Mlp),
}

/// A model with the config that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: StoredModel,
    pub config: TrainConfig,
    /// Set once the bias head has been adapted to a target batch.
    pub adapted: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Dims {
    n_x: usize,
    n_classes: usize,
    n_domains: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tensor {
    name: String,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibRecord {
    /// `"binary"` (`eps = [h0, h1]`) or `"multiclass"` (row-major `K × K`).
    kind: String,
    eps: Vec<f64>,
    counts: Vec<Vec<u64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    format: String,
    version: u32,
    kind: String,
    adapted: bool,
    dims: Dims,
    config: TrainConfig,
    tensors: Vec<Tensor>,
    calibration: Option<CalibRecord>,
    checksum: String,
}

fn tensors_of(p: &dyn Parameterized) -> Vec<Tensor> {
    let mut out = Vec::new();
    p.visit(&mut |name, values| out.push(Tensor { name: name.to_string(), values: values.to_vec() }));
    out
}

fn checksum(tensors: &[Tensor], calib: &Option<CalibRecord>) -> String {
    let mut h = Sha256::new();
    let mut feed = |name: &str, values: &[f64]| {
        h.update(name.as_bytes());
        h.update((values.len() as u64).to_le_bytes());
        for v in values {
            h.update(v.to_bits().to_le_bytes());
        }
    };
    for t in tensors {
        feed(&t.name, &t.values);
    }
    if let Some(c) = calib {
        feed(&c.kind, &c.eps);
        let flat: Vec<f64> = c.counts.iter().flatten().map(|&n| n as f64).collect();
        feed("counts", &flat);
    }
    hex::encode(h.finalize())
}

fn calib_record(c: &Calibration) -> CalibRecord {
    match c {
        Calibration::Binary(b) => CalibRecord {
            kind: "binary".into(),
            eps: vec![b.h0, b.h1],
            counts: b.counts.iter().map(|r| r.to_vec()).collect(),
        },
        Calibration::Multiclass(m) => {
            CalibRecord { kind: "multiclass".into(), eps: m.eps.data().to_vec(), counts: m.counts.clone() }
        }
    }
}

/// Serialize a checkpoint to its JSON text.
pub fn to_json(ck: &Checkpoint) -> String {
    let (kind, dims, tensors, calibration) = match &ck.model {
        StoredModel::Bag(m) => {
            let src = SourceModel { vae: m.vae.clone(), head: m.head.clone() };
            let dims = Dims { n_x: m.vae.n_x(), n_classes: m.n_classes(), n_domains: m.head.n_domains() };
            ("bag", dims, tensors_of(&src), m.calib.as_ref().map(calib_record))
        }
        StoredModel::Erm(net) => {
            let dims = Dims { n_x: net.input_dim(), n_classes: net.output_dim(), n_domains: 0 };
            ("erm", dims, tensors_of(net), None)
        }
    };
    let file = File {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        kind: kind.into(),
        adapted: ck.adapted,
        dims,
        config: ck.config.clone(),
        checksum: checksum(&tensors, &calibration),
        tensors,
        calibration,
    };
    serde_json::to_string_pretty(&file).expect("checkpoint serializes") + "\n"
}

fn fill(target: &mut dyn Parameterized, tensors: &[Tensor]) -> std::result::Result<(), String> {
    let mut expected = Vec::new();
    target.visit(&mut |name, values| expected.push((name.to_string(), values.len())));
    if expected.len() != tensors.len() {
        return Err(format!("{} tensors stored, architecture has {}", tensors.len(), expected.len()));
    }
    for ((name, len), t) in expected.iter().zip(tensors) {
        if *name != t.name || *len != t.values.len() {
            return Err(format!(
                "tensor {:?} ({} values) where {name:?} ({len} values) was expected",
                t.name,
                t.values.len()
            ));
        }
    }
    let mut i = 0;
    target.visit_mut(&mut |_, values| {
        values.copy_from_slice(&tensors[i].values);
        i += 1;
    });
    Ok(())
}

/// Parse checkpoint JSON, checking format, version, checksum and the
/// dimension chain. `origin` names the source in error messages.
pub fn from_json(text: &str, origin: &Path) -> Result<Checkpoint> {
    let bad = |msg: String| BenchError::Checkpoint { path: origin.to_path_buf(), msg };
    let file: File = serde_json::from_str(text).map_err(|e| bad(format!("unreadable: {e}")))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("format {:?}, expected {CHECKPOINT_FORMAT:?}", file.format)));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(bad(format!("version {} not supported (expected {CHECKPOINT_VERSION})", file.version)));
    }
    if checksum(&file.tensors, &file.calibration) != file.checksum {
        return Err(bad("checksum mismatch (file corrupted)".into()));
    }
    let cfg = &file.config;
    let d = &file.dims;
    if d.n_x == 0 || d.n_classes < 2 {
        return Err(bad(format!("invalid dimensions n_x = {}, K = {}", d.n_x, d.n_classes)));
    }
    let mut rng = Rng::new(0);
    let model = match file.kind.as_str() {
        "bag" => {
            let shape_err = |e: &dyn std::fmt::Display| bad(format!("dimension chain: {e}"));
            let vae = VaeParams::init(d.n_x, cfg.n_c, cfg.n_b, &cfg.encoder_hidden, cfg.beta, &mut rng)
                .map_err(|e| shape_err(&e))?;
            let head = DecomposedHead::init(cfg.n_c, cfg.n_b, d.n_classes, d.n_domains, cfg.embedding_dim, &mut rng)
                .map_err(|e| shape_err(&e))?;
            let mut src = SourceModel { vae, head };
            fill(&mut src, &file.tensors).map_err(bad)?;
            let calib = match &file.calibration {
                None => None,
                Some(c) => Some(match c.kind.as_str() {
                    "binary" if c.eps.len() == 2 && c.counts.len() == 2 && c.counts.iter().all(|r| r.len() == 2) => {
                        Calibration::Binary(BinaryCalib {
                            h0: c.eps[0],
                            h1: c.eps[1],
                            counts: [[c.counts[0][0], c.counts[0][1]], [c.counts[1][0], c.counts[1][1]]],
                        })
                    }
                    "multiclass" => {
                        let k = d.n_classes;
                        let eps = Matrix::from_vec(k, k, c.eps.clone()).map_err(|e| shape_err(&e))?;
                        let mut m = ConfusionMatrix::from_eps(eps).map_err(|e| shape_err(&e))?;
                        m.counts = c.counts.clone();
                        Calibration::Multiclass(m)
                    }
                    other => return Err(bad(format!("malformed calibration of kind {other:?}"))),
                }),
            };
            StoredModel::Bag(BagModel::new(src.vae, src.head, calib).map_err(|e| shape_err(&e))?)
        }
        "erm" => {
            let probe = TrainConfig { seed: 0, ..cfg.clone() };
            let mut net = init_erm(&probe, d.n_x, d.n_classes).map_err(|e| bad(e.to_string()))?;
            fill(&mut net, &file.tensors).map_err(bad)?;
            StoredModel::Erm(net)
        }
        other => return Err(bad(format!("unknown model kind {other:?}"))),
    };
    Ok(Checkpoint { model, config: file.config, adapted: file.adapted })
}

/// Write a checkpoint file.
pub fn save_model(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(ck)).map_err(|e| BenchError::io(path, e))
}

/// Read and validate a checkpoint file.
pub fn load_model(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    from_json(&text, path)
}
