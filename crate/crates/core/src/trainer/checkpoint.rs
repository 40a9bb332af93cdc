//! Bit-exact model checkpoints.
//!
//! Layout (integers little-endian): magic `AADL`, version u32, config block
//! (u32 length + canonical `key=value` TrainConfig text), then every
//! parameter block in model declaration order (`M_f, M_y, M_d, M_a`), each
//! as name (u32 length + bytes), rows u64, cols u64, row-major f64 values;
//! then the step counter u64 and the shuffle generator state as 56 bytes:
//! seed `[u8; 32]`, stream u64, word position u128.
//!
//! Loading rebuilds the model from the embedded config and overwrites every
//! block, validating names and shapes as it goes, so a truncated or
//! mismatched file is rejected with the offending byte offset.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{Reader, Writer};
use crate::trainer::{AdversarialModel, TrainConfig};
use crate::nn::Parameterized;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"AADL";
const VERSION: u32 = 1;

/// Serializable state of the shuffle generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn of(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn into_rng(self) -> Result<ChaCha8Rng> {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        Ok(rng)
    }
}

#[derive(Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: AdversarialModel,
    pub step: u64,
    pub rng: RngState,
}

pub fn checkpoint_save(
    path: &Path,
    model: &AdversarialModel,
    config: &TrainConfig,
    step: u64,
    rng: &RngState,
) -> Result<()> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.string(&config.to_kv_string());
    for block in model.param_blocks() {
        w.string(&block.name);
        w.u64(block.value.rows() as u64);
        w.u64(block.value.cols() as u64);
        w.f64_slice(block.value.data());
    }
    w.u64(step);
    w.bytes(&rng.seed);
    w.u64(rng.stream);
    w.u128(rng.word_pos);
    w.write_to(path)
}

pub fn checkpoint_load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&bytes, path);
    r.expect_magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.error(format!("unsupported version {version}, expected {VERSION}")));
    }
    let config_text = r.string("config block")?;
    let config = TrainConfig::from_kv_str(&config_text)
        .map_err(|e| r.error(format!("embedded config: {e}")))?;
    let mut model =
        AdversarialModel::init(&config).map_err(|e| r.error(format!("embedded config: {e}")))?;

    for block in model.param_blocks_mut() {
        let name = r.string("block name")?;
        if name != block.name {
            return Err(r.error(format!(
                "parameter block {name:?} where config implies {:?}",
                block.name
            )));
        }
        let rows = r.u64("block rows")? as usize;
        let cols = r.u64("block cols")? as usize;
        if rows != block.value.rows() || cols != block.value.cols() {
            return Err(r.error(format!(
                "block {name:?} is {rows}x{cols}, config implies {}x{}",
                block.value.rows(),
                block.value.cols()
            )));
        }
        let data = r.f64_vec(rows * cols, "block values")?;
        block.value.data_mut().copy_from_slice(&data);
    }

    let step = r.u64("step counter")?;
    let seed: [u8; 32] = r.take(32, "rng seed")?.try_into().expect("32 bytes");
    let stream = r.u64("rng stream")?;
    let word_pos = r.u128("rng word position")?;
    r.finish()?;

    Ok(Checkpoint {
        config,
        model,
        step,
        rng: RngState {
            seed,
            stream,
            word_pos,
        },
    })
}
