use std::path::PathBuf;

use thiserror::Error;

use crate::qn::QuantumNumber;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SectorError {
    #[error("invalid sector basis: {0}")]
    InvalidBasis(String),
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),
    #[error("block ({row}, {col}) violates the selection rule for delta {delta}")]
    SelectionRule { row: QuantumNumber, col: QuantumNumber, delta: QuantumNumber },
    #[error("block ({row}, {col}) has shape {found:?}, expected {expected:?}")]
    BlockShape {
        row: QuantumNumber,
        col: QuantumNumber,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("task references missing block ({0}, {1})")]
    MissingBlock(QuantumNumber, QuantumNumber),
    #[error("dense dimension {dim} exceeds the densification guard {guard}")]
    DensifyGuard { dim: usize, guard: usize },
    #[error("full-form self-check failed: deviation {deviation:e} > tolerance {tolerance:e}")]
    SelfCheck { deviation: f64, tolerance: f64 },
    #[error("particle count {particles} outside [0, {max}]")]
    ParticleRange { particles: u64, max: u64 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("workspace holds {available} values, {required} required")]
    Workspace { available: usize, required: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArenaError {
    #[error("arena capacity exceeded: offset {offset} + {size} > capacity {capacity}")]
    CapacityExceeded { offset: usize, size: usize, capacity: usize },
    #[error("unload of {size} at offset {offset} does not match the most recent load")]
    LifoViolation { offset: usize, size: usize },
    #[error("task failed in node {node}: {message}")]
    Task { node: usize, message: String },
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("index {index} out of range for {modes} modes (line {line})")]
    IndexRange { line: usize, index: usize, modes: usize },
    #[error("one-body integrals not symmetric: T[{i}][{j}] - T[{j}][{i}] = {diff:e}")]
    Symmetry { i: usize, j: usize, diff: f64 },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("invalid partition: {0}")]
    Partition(String),
}

#[derive(Debug, Error)]
pub enum DmrgError {
    #[error(transparent)]
    Sector(#[from] SectorError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("lanczos: {0}")]
    Lanczos(String),
    #[error("target sector {0} is unreachable with the current blocks")]
    EmptyTarget(QuantumNumber),
    #[error("parallel runtime: {0}")]
    Runtime(String),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid schedule: {0}")]
    Schedule(String),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("not a checkpoint file (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint belongs to a different model or target")]
    ModelMismatch,
}
