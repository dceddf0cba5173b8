//! Checkpoint directories: `manifest.json`, `weights.bin`, `rng_state`, `pool/`.
//!
//! `weights.bin` is the little-endian f32 concatenation of every tensor in the
//! manifest's table: network parameters, Adam moments, and the pooled images.
//! The `pool/` PGMs are previews only (16-bit quantized); loading uses the
//! exact copies in `weights.bin`. The manifest records a SHA-256 of
//! `weights.bin`, so any altered byte is rejected on load.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::AdamSlots;
use super::config::TrainConfig;
use super::cyclegan::CycleGanState;
use super::dcgan::DcganState;
use super::pool::{ImagePool, RngState};
use crate::datapipe::pgm::{write_pgm16, GrayImage};
use crate::error::{Error, Result};
use crate::models::{NetworkSpec, NetworkState};
use crate::nncore::Tensor4;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const WEIGHTS: &str = "weights.bin";
pub const RNG_STATE: &str = "rng_state";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Cyclegan,
    Dcgan,
}

impl std::fmt::Display for RunKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunKind::Cyclegan => "cyclegan",
            RunKind::Dcgan => "dcgan",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainState {
    CycleGan(CycleGanState),
    Dcgan(DcganState),
}

impl TrainState {
    pub fn kind(&self) -> RunKind {
        match self {
            TrainState::CycleGan(_) => RunKind::Cyclegan,
            TrainState::Dcgan(_) => RunKind::Dcgan,
        }
    }

    pub fn step(&self) -> u64 {
        match self {
            TrainState::CycleGan(s) => s.step,
            TrainState::Dcgan(s) => s.step,
        }
    }
}

/// Where in the schedule a checkpoint was taken.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    /// Zero-based epoch that the next step belongs to.
    pub epoch: usize,
    /// Batches of that epoch already consumed.
    pub batch_in_epoch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState,
    pub config: TrainConfig,
    pub progress: Progress,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 4],
    dtype: String,
    offset: u64,
    length: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct NetworkEntry {
    spec: NetworkSpec,
    init_seed: u64,
    adam_step: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    run_kind: RunKind,
    step: u64,
    progress: Progress,
    config: TrainConfig,
    networks: BTreeMap<String, NetworkEntry>,
    pools: BTreeMap<String, PoolEntry>,
    tensors: Vec<TensorEntry>,
    /// Hex SHA-256 of `weights.bin`.
    weights_sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PoolEntry {
    capacity: usize,
    count: usize,
}

struct Blob {
    bytes: Vec<u8>,
    table: Vec<TensorEntry>,
}

impl Blob {
    fn push(&mut self, name: String, t: &Tensor4<f32>) {
        let offset = self.bytes.len() as u64;
        for v in t.data() {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.table.push(TensorEntry {
            name,
            shape: t.shape(),
            dtype: "f32".into(),
            offset,
            length: self.bytes.len() as u64 - offset,
        });
    }

    fn push_network(&mut self, label: &str, net: &NetworkState<f32>, slots: &AdamSlots) {
        for (name, p) in net.names.iter().zip(&net.params) {
            self.push(format!("{label}/{name}"), p);
        }
        for (name, m) in net.names.iter().zip(&slots.m) {
            self.push(format!("adam/{label}/m/{name}"), m);
        }
        for (name, v) in net.names.iter().zip(&slots.v) {
            self.push(format!("adam/{label}/v/{name}"), v);
        }
    }

    fn push_pool(&mut self, label: &str, pool: &ImagePool) {
        for (k, img) in pool.buffer.iter().enumerate() {
            self.push(format!("pool/{label}/{k:03}"), img);
        }
    }
}

fn net_entry(net: &NetworkState<f32>, slots: &AdamSlots) -> NetworkEntry {
    NetworkEntry {
        spec: net.spec.clone(),
        init_seed: net.init_seed,
        adam_step: slots.t,
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("pool")).map_err(|e| Error::io(dir, e))?;
    let mut blob = Blob { bytes: Vec::new(), table: Vec::new() };
    let mut networks = BTreeMap::new();
    let mut pools = BTreeMap::new();
    let mut rngs = BTreeMap::new();
    match &ckpt.state {
        TrainState::CycleGan(s) => {
            for (label, net, slots) in [("G", &s.g, &s.adam_g), ("F", &s.f, &s.adam_f), ("D_X", &s.d_x, &s.adam_dx), ("D_Y", &s.d_y, &s.adam_dy)] {
                blob.push_network(label, net, slots);
                networks.insert(label.to_string(), net_entry(net, slots));
            }
            for (label, pool) in [("x", &s.pool_x), ("y", &s.pool_y)] {
                blob.push_pool(label, pool);
                pools.insert(label.to_string(), PoolEntry { capacity: pool.capacity, count: pool.buffer.len() });
                rngs.insert(format!("pool_{label}"), RngState::capture(&pool.rng));
                for (k, img) in pool.buffer.iter().enumerate() {
                    let preview = GrayImage {
                        width: img.width(),
                        height: img.height(),
                        pixels: img.sample(0)[..img.plane_len()].iter().map(|&v| v as f64).collect(),
                    };
                    write_pgm16(dir.join("pool").join(format!("{label}_{k:03}.pgm")), &preview)?;
                }
            }
            rngs.insert("train".into(), RngState::capture(&s.rng));
        }
        TrainState::Dcgan(s) => {
            for (label, net, slots) in [("G", &s.g, &s.adam_g), ("D", &s.d, &s.adam_d)] {
                blob.push_network(label, net, slots);
                networks.insert(label.to_string(), net_entry(net, slots));
            }
            rngs.insert("train".into(), RngState::capture(&s.rng));
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        run_kind: ckpt.state.kind(),
        step: ckpt.state.step(),
        progress: ckpt.progress,
        config: ckpt.config.clone(),
        networks,
        pools,
        tensors: blob.table,
        weights_sha256: sha256_hex(&blob.bytes),
    };
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    };
    write(WEIGHTS, &blob.bytes)?;
    write(RNG_STATE, serde_json::to_string_pretty(&rngs).expect("rng map serializes").as_bytes())?;
    write(MANIFEST, serde_json::to_string_pretty(&manifest).expect("manifest serializes").as_bytes())
}

struct Reader<'a> {
    bytes: &'a [u8],
    table: &'a [TensorEntry],
    next: usize,
}

impl Reader<'_> {
    fn take(&mut self, name: &str) -> Result<Tensor4<f32>> {
        let e = self
            .table
            .get(self.next)
            .ok_or_else(|| Error::Corruption(format!("tensor table ends before {name}")))?;
        self.next += 1;
        if e.name != name {
            return Err(Error::Corruption(format!("expected tensor {name}, found {}", e.name)));
        }
        if e.dtype != "f32" {
            return Err(Error::Corruption(format!("tensor {name} has dtype {}", e.dtype)));
        }
        let count: usize = e.shape.iter().product();
        if e.length != 4 * count as u64 {
            return Err(Error::Corruption(format!("tensor {name}: length {} does not match shape {:?}", e.length, e.shape)));
        }
        let (start, end) = (e.offset as usize, (e.offset + e.length) as usize);
        let raw = self
            .bytes
            .get(start..end)
            .ok_or_else(|| Error::Corruption(format!("tensor {name} lies beyond the end of {WEIGHTS}")))?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Tensor4::from_vec(e.shape, data).map_err(|e| Error::Corruption(e.to_string()))
    }

    fn network(&mut self, label: &str, entry: &NetworkEntry) -> Result<(NetworkState<f32>, AdamSlots)> {
        let names: Vec<String> = entry.spec.param_table()?.into_iter().map(|p| p.name).collect();
        let mut load = |prefix: String| -> Result<Vec<Tensor4<f32>>> {
            names.iter().map(|n| self.take(&format!("{prefix}{n}"))).collect()
        };
        let params = load(format!("{label}/"))?;
        let m = load(format!("adam/{label}/m/"))?;
        let v = load(format!("adam/{label}/v/"))?;
        let net = NetworkState::from_params(entry.spec.clone(), params, entry.init_seed)
            .map_err(|e| Error::Corruption(e.to_string()))?;
        Ok((net, AdamSlots { m, v, t: entry.adam_step }))
    }

    fn pool(&mut self, label: &str, entry: &PoolEntry, rng: ChaCha8Rng) -> Result<ImagePool> {
        if entry.count > entry.capacity {
            return Err(Error::Corruption(format!("pool {label} holds more than its capacity")));
        }
        let buffer = (0..entry.count)
            .map(|k| self.take(&format!("pool/{label}/{k:03}")))
            .collect::<Result<_>>()?;
        Ok(ImagePool { capacity: entry.capacity, buffer, rng })
    }
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read(&path).map_err(|e| Error::io(path, e))
    };
    let raw: serde_json::Value = serde_json::from_slice(&read(MANIFEST)?)
        .map_err(|e| Error::Corruption(format!("{MANIFEST}: {e}")))?;
    let version = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Corruption("manifest has no format_version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::Version(version.min(u32::MAX as u64) as u32));
    }
    let manifest: Manifest =
        serde_json::from_value(raw).map_err(|e| Error::Corruption(format!("{MANIFEST}: {e}")))?;
    let bytes = read(WEIGHTS)?;
    let expected: u64 = manifest.tensors.iter().map(|t| t.length).sum();
    if bytes.len() as u64 != expected {
        return Err(Error::Corruption(format!(
            "{WEIGHTS} has {} bytes but the manifest describes {expected}",
            bytes.len()
        )));
    }
    if sha256_hex(&bytes) != manifest.weights_sha256 {
        return Err(Error::Corruption(format!("{WEIGHTS} does not match the digest in {MANIFEST}")));
    }
    let rngs: BTreeMap<String, RngState> = serde_json::from_slice(&read(RNG_STATE)?)
        .map_err(|e| Error::Corruption(format!("{RNG_STATE}: {e}")))?;
    let rng = |name: &str| -> Result<ChaCha8Rng> {
        rngs.get(name)
            .ok_or_else(|| Error::Corruption(format!("{RNG_STATE} lacks {name}")))?
            .restore()
    };
    let net = |name: &str| {
        manifest
            .networks
            .get(name)
            .ok_or_else(|| Error::Corruption(format!("manifest lacks network {name}")))
    };
    let mut r = Reader { bytes: &bytes, table: &manifest.tensors, next: 0 };
    let state = match manifest.run_kind {
        RunKind::Cyclegan => {
            let (g, adam_g) = r.network("G", net("G")?)?;
            let (f, adam_f) = r.network("F", net("F")?)?;
            let (d_x, adam_dx) = r.network("D_X", net("D_X")?)?;
            let (d_y, adam_dy) = r.network("D_Y", net("D_Y")?)?;
            let pool_entry = |name: &str| {
                manifest
                    .pools
                    .get(name)
                    .ok_or_else(|| Error::Corruption(format!("manifest lacks pool {name}")))
            };
            let pool_x = r.pool("x", pool_entry("x")?, rng("pool_x")?)?;
            let pool_y = r.pool("y", pool_entry("y")?, rng("pool_y")?)?;
            TrainState::CycleGan(CycleGanState {
                g,
                f,
                d_x,
                d_y,
                adam_g,
                adam_f,
                adam_dx,
                adam_dy,
                pool_x,
                pool_y,
                step: manifest.step,
                rng: rng("train")?,
            })
        }
        RunKind::Dcgan => {
            let (g, adam_g) = r.network("G", net("G")?)?;
            let (d, adam_d) = r.network("D", net("D")?)?;
            TrainState::Dcgan(DcganState {
                g,
                d,
                adam_g,
                adam_d,
                step: manifest.step,
                rng: rng("train")?,
            })
        }
    };
    if r.next != manifest.tensors.len() {
        return Err(Error::Corruption(format!(
            "{} unused tensors in the manifest table",
            manifest.tensors.len() - r.next
        )));
    }
    Ok(Checkpoint {
        state,
        config: manifest.config,
        progress: manifest.progress,
    })
}
