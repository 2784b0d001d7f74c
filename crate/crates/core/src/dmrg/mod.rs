//! Two-site DMRG on sector-sparse blocks.

mod block;
mod checkpoint;
mod heff;
mod lanczos;
mod renorm;
mod sweep;
mod wavefunction;

#[cfg(test)]
mod tests;

pub use block::{enlarge, BlockState, Enlarged, Side};
pub use checkpoint::{decode, encode, load_checkpoint, save_checkpoint, MAGIC, VERSION};
pub use heff::{flop_estimate, EffectiveHamiltonianPlan, PlanBatch};
pub use lanczos::{lanczos_ground, LanczosResult};
pub use renorm::{density_matrices, renormalize, select_states, transform_operators, truncate_with, Truncation};
pub use sweep::{Direction, Dmrg, DmrgConfig, DmrgState, Phase, RunResult, SweepRecord, SweepSchedule};
pub use wavefunction::{dot, norm, SuperblockWavefunction, WfKey, WfLayout};
