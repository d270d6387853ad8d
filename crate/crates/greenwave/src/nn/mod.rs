//! Minimal dense/recurrent neural network engine with exact
//! backpropagation, sized for one agent: FC(128) -> LSTM(64) -> softmax
//! actor head / linear critic head, orthogonal initialization, RMSprop,
//! and global gradient-norm capping.

mod agent;
mod init;
mod linalg;
mod lstm;
mod net;

pub use agent::{
    clip_gradients, grad_norm, init_params, rmsprop_step, AgentNet, GRAD_CAP, INIT_GAIN,
    RMSPROP_DECAY, RMSPROP_EPSILON,
};
pub use init::orthogonal;
pub use linalg::{softmax, Mat};
pub use lstm::{LstmCell, LstmStep};
pub use net::{Dense, HeadKind, Hidden, Net, NetConfig, NnError, StepCache};
