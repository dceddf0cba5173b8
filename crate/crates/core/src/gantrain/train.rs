//! Epoch loop: batching, per-step history rows, periodic checkpoints and sample grids.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{save_checkpoint, Checkpoint, Progress, RunKind, TrainState};
use super::config::TrainConfig;
use super::cyclegan::{cyclegan_train_step, CycleGanState};
use super::dcgan::{dcgan_train_step, sample_latent, DcganState};
use crate::datapipe::batch::{epoch_order, to_tensor};
use crate::datapipe::pgm::{grid, write_pgm16, GrayImage};
use crate::datapipe::slices::SliceImage;
use crate::error::{Error, Result};
use crate::nncore::Tensor4;

pub const HISTORY_FILE: &str = "history.csv";
/// Key mixed into the seed for the target domain's visiting order.
const TARGET_ORDER_KEY: u64 = 0x7461_7267_6574;

pub enum TrainData<'a> {
    /// Unpaired training images of the source (X) and target (Y) domains.
    CycleGan { x: &'a [SliceImage], y: &'a [SliceImage] },
    Dcgan { real: &'a [SliceImage] },
}

impl TrainData<'_> {
    pub fn kind(&self) -> RunKind {
        match self {
            TrainData::CycleGan { .. } => RunKind::Cyclegan,
            TrainData::Dcgan { .. } => RunKind::Dcgan,
        }
    }

    fn primary(&self) -> &[SliceImage] {
        match self {
            TrainData::CycleGan { x, .. } => x,
            TrainData::Dcgan { real } => real,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub step: u64,
    pub epoch: usize,
    pub losses: Vec<(&'static str, f64)>,
}

impl HistoryRow {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.losses.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingHistory {
    pub kind: RunKind,
    pub rows: Vec<HistoryRow>,
    /// The last checkpoint written (always the final state of the run).
    pub final_checkpoint: PathBuf,
}

/// Steps per epoch: one per batch of the source (or real) images.
pub fn steps_per_epoch(n_images: usize, batch_size: usize) -> usize {
    n_images.div_ceil(batch_size)
}

fn history_header(kind: RunKind) -> &'static str {
    match kind {
        RunKind::Cyclegan => {
            "step,epoch,loss_G_adv,loss_F_adv,loss_cycle_forward,loss_cycle_backward,loss_D_X,loss_D_Y"
        }
        RunKind::Dcgan => "step,epoch,loss_D,loss_G",
    }
}

struct History {
    file: File,
    path: PathBuf,
}

impl History {
    fn open(path: PathBuf, kind: RunKind, append: bool) -> Result<Self> {
        let exists = path.exists();
        let mut file = if append {
            OpenOptions::new().create(true).append(true).open(&path)
        } else {
            File::create(&path)
        }
        .map_err(|e| Error::io(&path, e))?;
        if !append || !exists {
            writeln!(file, "{}", history_header(kind)).map_err(|e| Error::io(&path, e))?;
        }
        Ok(Self { file, path })
    }

    fn append(&mut self, row: &HistoryRow) -> Result<()> {
        let mut line = format!("{},{}", row.step, row.epoch);
        for (_, v) in &row.losses {
            line.push_str(&format!(",{v}"));
        }
        writeln!(self.file, "{line}")
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

fn check_images(images: &[SliceImage], size: usize, what: &str) -> Result<()> {
    if images.is_empty() {
        return Err(Error::Dataset(format!("{what} training set is empty")));
    }
    if let Some(bad) = images.iter().find(|i| i.height != size || i.width != size) {
        return Err(Error::Dataset(format!(
            "{what} image {}:{} is {}x{}, expected {size}x{size}",
            bad.provenance.source_id, bad.provenance.slice_index, bad.height, bad.width
        )));
    }
    Ok(())
}

fn to_gray(t: &Tensor4<f32>, n: usize) -> GrayImage {
    GrayImage {
        width: t.width(),
        height: t.height(),
        pixels: t.sample(n)[..t.plane_len()].iter().map(|&v| v as f64).collect(),
    }
}

/// 4 rows x 2 columns: (x, G(x)) for CycleGAN, eight fixed-latent samples for DCGAN.
pub fn sample_grid(state: &TrainState, data: &TrainData<'_>, cfg: &TrainConfig) -> Result<GrayImage> {
    let tiles = match (state, data) {
        (TrainState::CycleGan(s), TrainData::CycleGan { x, .. }) => {
            let picked: Vec<&SliceImage> = x.iter().take(4).collect();
            let batch = to_tensor::<f32>(&picked)?;
            let out = s.g.infer(&batch)?;
            (0..batch.batch()).flat_map(|n| [to_gray(&batch, n), to_gray(&out, n)]).collect::<Vec<_>>()
        }
        (TrainState::Dcgan(s), _) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7361_6d70);
            let z = sample_latent(8, s.latent_dim(), &mut rng);
            let out = s.g.infer(&z)?;
            (0..8).map(|n| to_gray(&out, n)).collect()
        }
        _ => return Err(Error::Config("training data does not match the run kind".into())),
    };
    grid(&tiles, 2)
}

fn write_artifacts(out_dir: &Path, label: &str, ckpt: &Checkpoint, data: &TrainData<'_>) -> Result<PathBuf> {
    let dir = out_dir.join("checkpoints").join(label);
    save_checkpoint(ckpt, &dir)?;
    let samples = out_dir.join("samples");
    fs::create_dir_all(&samples).map_err(|e| Error::io(&samples, e))?;
    write_pgm16(samples.join(format!("{label}.pgm")), &sample_grid(&ckpt.state, data, &ckpt.config)?)?;
    Ok(dir)
}

/// Run (or resume) a training schedule, appending to `out_dir/history.csv`
/// after every step. A divergence aborts the run with the rows so far kept on disk.
pub fn train(data: TrainData<'_>, cfg: &TrainConfig, out_dir: &Path, resume: Option<Checkpoint>) -> Result<TrainingHistory> {
    cfg.validate()?;
    let kind = data.kind();
    match &data {
        TrainData::CycleGan { x, y } => {
            check_images(x, cfg.image_size, "source")?;
            check_images(y, cfg.image_size, "target")?;
        }
        TrainData::Dcgan { real } => check_images(real, cfg.image_size, "real")?,
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let (mut state, progress) = match resume {
        Some(ck) => {
            if ck.state.kind() != kind {
                return Err(Error::Config(format!("checkpoint holds a {} run, not {kind}", ck.state.kind())));
            }
            (ck.state, ck.progress)
        }
        None => {
            let state = match kind {
                RunKind::Cyclegan => TrainState::CycleGan(CycleGanState::new(cfg)?),
                RunKind::Dcgan => TrainState::Dcgan(DcganState::new(cfg)?),
            };
            (state, Progress::default())
        }
    };
    let resumed = state.step() > 0;
    let mut history = History::open(out_dir.join(HISTORY_FILE), kind, resumed)?;
    let mut rows = Vec::new();
    let per_epoch = steps_per_epoch(data.primary().len(), cfg.batch_size);
    let mut final_dir = None;

    'epochs: for epoch in progress.epoch..cfg.epochs {
        let skip = if epoch == progress.epoch { progress.batch_in_epoch } else { 0 };
        let order = epoch_order(data.primary().len(), true, cfg.seed, epoch as u64);
        for b in skip..per_epoch {
            let ids = &order[b * cfg.batch_size..((b + 1) * cfg.batch_size).min(order.len())];
            let batch: Vec<&SliceImage> = ids.iter().map(|&i| &data.primary()[i]).collect();
            let batch = to_tensor::<f32>(&batch)?;
            let losses: Vec<(&'static str, f64)> = match (&mut state, &data) {
                (TrainState::CycleGan(s), TrainData::CycleGan { y, .. }) => {
                    let y_order = epoch_order(y.len(), true, cfg.seed ^ TARGET_ORDER_KEY, epoch as u64);
                    let y_batch: Vec<&SliceImage> =
                        (0..ids.len()).map(|k| &y[y_order[(b * cfg.batch_size + k) % y.len()]]).collect();
                    let y_batch = to_tensor::<f32>(&y_batch)?;
                    cyclegan_train_step(s, &batch, &y_batch, cfg)?.fields().to_vec()
                }
                (TrainState::Dcgan(s), TrainData::Dcgan { .. }) => dcgan_train_step(s, &batch, cfg)?.fields().to_vec(),
                _ => unreachable!("run kind checked above"),
            };
            let row = HistoryRow { step: state.step(), epoch, losses };
            history.append(&row)?;
            log::debug!("step {} epoch {epoch}: {:?}", row.step, row.losses);
            rows.push(row);
            if cfg.max_steps.is_some_and(|m| state.step() >= m) {
                let ckpt = Checkpoint {
                    state,
                    config: cfg.clone(),
                    progress: Progress { epoch, batch_in_epoch: b + 1 },
                };
                final_dir = Some(write_artifacts(out_dir, "final", &ckpt, &data)?);
                break 'epochs;
            }
        }
        let done = epoch + 1;
        if done % cfg.checkpoint_every == 0 || done == cfg.epochs {
            let ckpt = Checkpoint {
                state: state.clone(),
                config: cfg.clone(),
                progress: Progress { epoch: done, batch_in_epoch: 0 },
            };
            write_artifacts(out_dir, &format!("epoch_{done:04}"), &ckpt, &data)?;
            log::info!("epoch {done}/{} done at step {}", cfg.epochs, state.step());
        }
        if done == cfg.epochs {
            let ckpt = Checkpoint {
                state,
                config: cfg.clone(),
                progress: Progress { epoch: done, batch_in_epoch: 0 },
            };
            final_dir = Some(write_artifacts(out_dir, "final", &ckpt, &data)?);
            break;
        }
    }
    let final_checkpoint = match final_dir {
        Some(d) => d,
        // resumed at or past the end of the schedule: nothing ran
        None => out_dir.join("checkpoints").join("final"),
    };
    Ok(TrainingHistory { kind, rows, final_checkpoint })
}
