//! Losses, optimizers and training loops for the CycleGAN translator and the
//! DCGAN baseline, plus checkpoint persistence.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod cyclegan;
pub mod dcgan;
pub mod loss;
pub mod pool;
pub mod train;

pub use adam::{AdamConfig, AdamSlots};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Progress, RunKind, TrainState};
pub use config::TrainConfig;
pub use cyclegan::{cyclegan_train_step, generator_objective, translate_cycle, CycleGanState, CycleLosses, GeneratorPass};
pub use dcgan::{dcgan_train_step, sample_latent, DcganLosses, DcganState};
pub use loss::{
    adversarial_loss_discriminator, adversarial_loss_generator, bce_loss, bce_loss_labels, cycle_loss,
};
pub use pool::{ImagePool, RngState};
pub use train::{train, steps_per_epoch, HistoryRow, TrainData, TrainingHistory, HISTORY_FILE};
