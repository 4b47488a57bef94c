//! Network construction, forward/backward evaluation, gradient checking
//! and the adaptive-moment optimizer.

mod gradcheck;
mod layers;
mod network;
mod optim;
mod params;
mod spec;

pub use gradcheck::{grad_check, grad_check_with, probe_input, probe_side, GradCheckReport};
pub use network::{Network, Tape, INIT_STD};
pub use optim::{opt_step, AdamConfig, OptimizerState};
pub use params::ParamStore;
pub use spec::{Family, NetworkSpec};
