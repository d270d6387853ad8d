//! Multi-agent advantage actor-critic traffic signal control.
//!
//! Every signalized intersection runs its own recurrent actor-critic
//! controller. Agents exchange fingerprints (their previous-step policy
//! distributions) and spatially discounted rewards with their graph
//! neighbors, and act on a deterministic point-queue traffic simulator
//! that tracks per-lane vehicle emissions.
//!
//! The crate is organized around the data flow of one control loop:
//!
//! * [`network`] — static road network, agent set, and the neighbor graph
//! * [`microsim`] — discrete-time traffic dynamics, signals, sensors,
//!   and the emission ledger
//! * [`marl`] — observation assembly, spatially discounted rewards,
//!   n-step returns, and the actor/critic losses
//! * [`nn`] — the FC + LSTM actor-critic networks with exact
//!   backpropagation through time, orthogonal init, and RMSprop
//! * [`trainer`] — episode orchestration, experience buffers, updates,
//!   checkpoints, and the fixed-time baseline controller
//! * [`report`] — running-vehicle curves, per-interval emission maps,
//!   and baseline-vs-trained comparison tables

pub mod marl;
pub mod microsim;
pub mod network;
pub mod nn;
pub mod report;
pub mod trainer;
