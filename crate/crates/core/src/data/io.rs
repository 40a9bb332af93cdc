//! Dataset file format.
//!
//! Layout (all integers little-endian):
//! magic `AADD`, version u32, config block (u32 length + canonical
//! `key=value` text), then every sequence of the train split followed by the
//! test split, each as: domain u16, frame count u32, class labels u16 x T,
//! frames as f64 x (input_dim * T) row-major. Sequence counts come from the
//! embedded config, and the file must end exactly after the last sequence.

use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::data::{Dataset, DatasetConfig, SequenceSample};
use crate::linalg::Matrix;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"AADD";
const VERSION: u32 = 1;

pub fn dataset_save(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.string(&dataset.config.to_kv_string());
    for seq in dataset.train.iter().chain(&dataset.test) {
        w.u16(seq.domain);
        w.u32(seq.frames_len() as u32);
        w.u16_slice(&seq.class_labels);
        w.f64_slice(seq.frames.data());
    }
    w.write_to(path)
}

fn read_sequence(r: &mut Reader, config: &DatasetConfig) -> Result<SequenceSample> {
    let domain = r.u16("sequence domain")?;
    if (domain as usize) >= config.domain_count {
        return Err(r.error(format!(
            "domain {domain} out of range for {} domains",
            config.domain_count
        )));
    }
    let frames_len = r.u32("frame count")? as usize;
    if frames_len != config.frames_per_sequence {
        return Err(r.error(format!(
            "sequence has {frames_len} frames, config says {}",
            config.frames_per_sequence
        )));
    }
    let class_labels = r.u16_vec(frames_len, "class labels")?;
    if let Some(&bad) = class_labels.iter().find(|&&l| (l as usize) >= config.class_count) {
        return Err(r.error(format!(
            "class label {bad} out of range for {} classes",
            config.class_count
        )));
    }
    let data = r.f64_vec(config.input_dim * frames_len, "frames")?;
    let frames = Matrix::from_vec(config.input_dim, frames_len, data)
        .map_err(|e| r.error(e.to_string()))?;
    Ok(SequenceSample {
        frames,
        class_labels,
        domain,
    })
}

pub fn dataset_load(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&bytes, path);
    r.expect_magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.error(format!("unsupported version {version}, expected {VERSION}")));
    }
    let config_text = r.string("config block")?;
    let config = DatasetConfig::from_kv_str(&config_text)
        .and_then(|c| c.validate().map(|_| c))
        .map_err(|e| r.error(format!("embedded config: {e}")))?;

    let train_count = config.train_sequences_per_domain * config.domain_count;
    let test_count = config.test_sequences_per_domain * config.domain_count;
    let mut train = Vec::with_capacity(train_count);
    for _ in 0..train_count {
        train.push(read_sequence(&mut r, &config)?);
    }
    let mut test = Vec::with_capacity(test_count);
    for _ in 0..test_count {
        test.push(read_sequence(&mut r, &config)?);
    }
    r.finish()?;
    Ok(Dataset { config, train, test })
}
