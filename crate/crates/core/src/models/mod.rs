//! Layer tables for the four networks, parameter initialization, and the
//! forward/backward interpreter that runs them.

pub mod spec;
pub mod state;

pub use spec::{
    build_dcgan_discriminator, build_dcgan_generator, build_patch_discriminator,
    build_patch_discriminator_with, build_resnet_generator, receptive_field, NetworkSpec,
    ParamInfo, ParamRole,
};
pub use state::{init_parameters, Mode, NetworkState, Tape};
