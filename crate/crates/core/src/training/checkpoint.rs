use std::fs;
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LossWindow, RunRecord, TrainingConfig};
use crate::error::{Error, Result};
use crate::models::ModelDims;
use crate::numerics::{AdamConfig, AdamState, DenseMatrix, ParameterSet};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RAIRLCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Complete training state: resuming from it continues the run exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainingConfig,
    pub dims: ModelDims,
    /// Iterations completed.
    pub iteration: usize,
    pub policy: ParameterSet,
    pub discriminator: ParameterSet,
    pub generator_adam: AdamState,
    pub discriminator_adam: AdamState,
    pub rng: ChaCha8Rng,
    pub record: RunRecord,
    pub window: LossWindow,
}

#[derive(Serialize, Deserialize)]
struct BlockEntry {
    group: String,
    name: String,
    rows: usize,
    cols: usize,
    /// Offset in 64-bit floats from the start of the data section.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct AdamMeta {
    config: AdamConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    config: TrainingConfig,
    dims: ModelDims,
    iteration: usize,
    rng: ChaCha8Rng,
    record: RunRecord,
    window: LossWindow,
    generator_adam: AdamMeta,
    discriminator_adam: AdamMeta,
    blocks: Vec<BlockEntry>,
}

const GROUPS: [&str; 6] = [
    "policy",
    "discriminator",
    "generator_adam.m",
    "generator_adam.v",
    "discriminator_adam.m",
    "discriminator_adam.v",
];

impl Checkpoint {
    fn groups(&self) -> [&ParameterSet; 6] {
        [
            &self.policy,
            &self.discriminator,
            &self.generator_adam.first_moment,
            &self.generator_adam.second_moment,
            &self.discriminator_adam.first_moment,
            &self.discriminator_adam.second_moment,
        ]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut blocks = Vec::new();
        let mut data: Vec<u8> = Vec::new();
        let mut offset = 0;
        for (group, set) in GROUPS.iter().zip(self.groups()) {
            for (name, m) in set.blocks() {
                blocks.push(BlockEntry {
                    group: group.to_string(),
                    name: name.to_string(),
                    rows: m.rows(),
                    cols: m.cols(),
                    offset,
                });
                offset += m.len();
                for v in m.as_slice() {
                    data.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let meta = Metadata {
            config: self.config.clone(),
            dims: self.dims,
            iteration: self.iteration,
            rng: self.rng.clone(),
            record: self.record.clone(),
            window: self.window.clone(),
            generator_adam: AdamMeta {
                config: self.generator_adam.config,
                step: self.generator_adam.step,
            },
            discriminator_adam: AdamMeta {
                config: self.discriminator_adam.config,
                step: self.discriminator_adam.step,
            },
            blocks,
        };
        let json = serde_json::to_vec(&meta)?;
        let mut out = Vec::with_capacity(20 + json.len() + data.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| Error::Format(format!("checkpoint: {m}"));
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(fmt("missing RAIRLCKP header"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let meta_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let data_start = 20usize
            .checked_add(meta_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| fmt("truncated metadata"))?;
        let meta: Metadata =
            serde_json::from_slice(&bytes[20..data_start]).map_err(|e| fmt(&format!("bad metadata: {e}")))?;
        let data = &bytes[data_start..];

        let mut sets: Vec<Vec<(String, DenseMatrix)>> = vec![Vec::new(); GROUPS.len()];
        let mut expected_offset = 0;
        for b in &meta.blocks {
            let g = GROUPS
                .iter()
                .position(|g| *g == b.group)
                .ok_or_else(|| fmt(&format!("unknown block group {}", b.group)))?;
            let n = b.rows * b.cols;
            if b.offset != expected_offset {
                return Err(fmt("block table offsets are not contiguous"));
            }
            let end = (b.offset + n) * 8;
            if end > data.len() {
                return Err(fmt("truncated parameter data"));
            }
            let values: Vec<f64> = data[b.offset * 8..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let m = DenseMatrix::from_vec(b.rows, b.cols, values).map_err(|e| fmt(&e.to_string()))?;
            sets[g].push((b.name.clone(), m));
            expected_offset += n;
        }
        if expected_offset * 8 != data.len() {
            return Err(fmt("trailing bytes after parameter data"));
        }
        let mut sets = sets.into_iter().map(ParameterSet::new);
        let mut next = || sets.next().expect("six groups").map_err(|e| fmt(&e.to_string()));
        let policy = next()?;
        let discriminator = next()?;
        let gm = next()?;
        let gv = next()?;
        let dm = next()?;
        let dv = next()?;
        if !policy.same_layout(&gm) || !policy.same_layout(&gv) {
            return Err(fmt("generator optimizer state does not match the policy"));
        }
        if !discriminator.same_layout(&dm) || !discriminator.same_layout(&dv) {
            return Err(fmt("discriminator optimizer state does not match the discriminator"));
        }
        Ok(Self {
            config: meta.config,
            dims: meta.dims,
            iteration: meta.iteration,
            policy,
            discriminator,
            generator_adam: AdamState {
                config: meta.generator_adam.config,
                step: meta.generator_adam.step,
                first_moment: gm,
                second_moment: gv,
            },
            discriminator_adam: AdamState {
                config: meta.discriminator_adam.config,
                step: meta.discriminator_adam.step,
                first_moment: dm,
                second_moment: dv,
            },
            rng: meta.rng,
            record: meta.record,
            window: meta.window,
        })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let bytes = checkpoint.to_bytes()?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
