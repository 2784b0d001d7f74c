//! Quantum-number sector-sparse matrices and the layered operation scheme
//! that drives all block algebra:
//!
//! 1. [`sector_table`] decides which output sector pairs an operation can
//!    produce, from structure alone.
//! 2. [`task_table`] lists every concrete block combination of two stored
//!    operands together with the output block it feeds.
//! 3. [`execute_tasks`] performs the arithmetic of a task table.
//! 4. [`execute_checked`] additionally redoes the operation on densified
//!    operands and reports the deviation.
//!
//! Blocks are column-major dense matrices; absent blocks are zero.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::SectorError;
use crate::gemm::{GemmBackend, ReferenceGemm, Trans};
use crate::qn::{FusedBasis, QuantumNumber, SectorBasis};

/// `(row QN, column QN)` label of a block.
pub type BlockKey = (QuantumNumber, QuantumNumber);

/// Largest dense dimension [`densify`] will build.
pub const DENSIFY_GUARD: usize = 4096;

/// Bases and quantum-number shift of a sector matrix, without data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectorSpec {
    pub row_basis: SectorBasis,
    pub col_basis: SectorBasis,
    pub delta: QuantumNumber,
}

impl SectorSpec {
    pub fn new(row_basis: SectorBasis, col_basis: SectorBasis, delta: QuantumNumber) -> Self {
        SectorSpec { row_basis, col_basis, delta }
    }

    /// Keys of every block the selection rule allows, in canonical order.
    pub fn allowed_keys(&self) -> Vec<BlockKey> {
        let mut keys: Vec<BlockKey> = self
            .col_basis
            .qns()
            .filter_map(|c| {
                let r = c + self.delta;
                self.row_basis.contains(r).then_some((r, c))
            })
            .collect();
        keys.sort();
        keys
    }

    fn transposed(&self) -> SectorSpec {
        SectorSpec {
            row_basis: self.col_basis.clone(),
            col_basis: self.row_basis.clone(),
            delta: -self.delta,
        }
    }
}

/// Block-sparse real matrix over quantum-number sectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorMatrix {
    spec: SectorSpec,
    blocks: BTreeMap<BlockKey, DMatrix<f64>>,
}

impl SectorMatrix {
    /// An all-zero matrix (no stored blocks); also serves as an accumulator.
    pub fn zeros(row_basis: SectorBasis, col_basis: SectorBasis, delta: QuantumNumber) -> Self {
        SectorMatrix { spec: SectorSpec::new(row_basis, col_basis, delta), blocks: BTreeMap::new() }
    }

    pub fn from_spec(spec: SectorSpec) -> Self {
        SectorMatrix { spec, blocks: BTreeMap::new() }
    }

    pub fn identity(basis: &SectorBasis) -> Self {
        let mut m = Self::zeros(basis.clone(), basis.clone(), QuantumNumber::ZERO);
        for &(q, d) in basis.entries() {
            m.blocks.insert((q, q), DMatrix::identity(d, d));
        }
        m
    }

    /// Fills every allowed block with uniform values in `[-1, 1)`; each block
    /// is kept with probability `density`.
    pub fn random<R: Rng + ?Sized>(spec: SectorSpec, density: f64, rng: &mut R) -> Self {
        let mut m = Self::from_spec(spec);
        for (r, c) in m.spec.allowed_keys() {
            if rng.random::<f64>() >= density {
                continue;
            }
            let (dr, dc) = m.block_shape(r, c).expect("allowed key");
            let blk = DMatrix::from_fn(dr, dc, |_, _| rng.random_range(-1.0..1.0));
            m.blocks.insert((r, c), blk);
        }
        m
    }

    /// Splits a dense matrix into allowed blocks. Entries outside the allowed
    /// blocks must be zero; all-zero blocks are not stored.
    pub fn from_dense(spec: SectorSpec, dense: &DMatrix<f64>) -> Result<Self, SectorError> {
        let (nr, nc) = (spec.row_basis.total_dimension(), spec.col_basis.total_dimension());
        if dense.shape() != (nr, nc) {
            return Err(SectorError::BasisMismatch(format!(
                "dense shape {:?} vs bases {}x{}",
                dense.shape(),
                nr,
                nc
            )));
        }
        let allowed: BTreeSet<BlockKey> = spec.allowed_keys().into_iter().collect();
        let mut m = Self::from_spec(spec);
        for &(r, dr) in m.spec.row_basis.entries() {
            let ro = m.spec.row_basis.offset(r).unwrap();
            for &(c, dc) in m.spec.col_basis.entries() {
                let co = m.spec.col_basis.offset(c).unwrap();
                let view = dense.view((ro, co), (dr, dc));
                if view.iter().all(|x| *x == 0.0) {
                    continue;
                }
                if !allowed.contains(&(r, c)) {
                    return Err(SectorError::SelectionRule { row: r, col: c, delta: m.spec.delta });
                }
                m.blocks.insert((r, c), view.into_owned());
            }
        }
        Ok(m)
    }

    pub fn spec(&self) -> &SectorSpec {
        &self.spec
    }

    pub fn row_basis(&self) -> &SectorBasis {
        &self.spec.row_basis
    }

    pub fn col_basis(&self) -> &SectorBasis {
        &self.spec.col_basis
    }

    pub fn delta(&self) -> QuantumNumber {
        self.spec.delta
    }

    pub fn block(&self, row: QuantumNumber, col: QuantumNumber) -> Option<&DMatrix<f64>> {
        self.blocks.get(&(row, col))
    }

    pub fn block_mut(&mut self, row: QuantumNumber, col: QuantumNumber) -> Option<&mut DMatrix<f64>> {
        self.blocks.get_mut(&(row, col))
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&BlockKey, &DMatrix<f64>)> {
        self.blocks.iter()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Shape a block at `(row, col)` must have.
    pub fn block_shape(&self, row: QuantumNumber, col: QuantumNumber) -> Option<(usize, usize)> {
        Some((self.spec.row_basis.dim(row)?, self.spec.col_basis.dim(col)?))
    }

    /// Stores a block after checking the selection rule and the shape.
    pub fn insert_block(
        &mut self,
        row: QuantumNumber,
        col: QuantumNumber,
        block: DMatrix<f64>,
    ) -> Result<(), SectorError> {
        if row != col + self.spec.delta {
            return Err(SectorError::SelectionRule { row, col, delta: self.spec.delta });
        }
        let expected = self
            .block_shape(row, col)
            .ok_or(SectorError::MissingBlock(row, col))?;
        if block.shape() != expected {
            return Err(SectorError::BlockShape { row, col, expected, found: block.shape() });
        }
        self.blocks.insert((row, col), block);
        Ok(())
    }

    /// Zero-initialised block, created on first access.
    pub fn block_or_zero(
        &mut self,
        row: QuantumNumber,
        col: QuantumNumber,
    ) -> Result<&mut DMatrix<f64>, SectorError> {
        if row != col + self.spec.delta {
            return Err(SectorError::SelectionRule { row, col, delta: self.spec.delta });
        }
        let (dr, dc) = self.block_shape(row, col).ok_or(SectorError::MissingBlock(row, col))?;
        Ok(self.blocks.entry((row, col)).or_insert_with(|| DMatrix::zeros(dr, dc)))
    }

    /// Removes blocks whose entries are all exactly zero.
    pub fn prune_zeros(&mut self) {
        self.blocks.retain(|_, b| b.iter().any(|x| *x != 0.0));
    }

    /// Checks the selection rule and shape of every stored block.
    pub fn validate(&self) -> Result<(), SectorError> {
        for (&(r, c), b) in &self.blocks {
            if r != c + self.spec.delta {
                return Err(SectorError::SelectionRule { row: r, col: c, delta: self.spec.delta });
            }
            let expected = self.block_shape(r, c).ok_or(SectorError::MissingBlock(r, c))?;
            if b.shape() != expected {
                return Err(SectorError::BlockShape { row: r, col: c, expected, found: b.shape() });
            }
        }
        Ok(())
    }

    pub fn transpose(&self) -> SectorMatrix {
        SectorMatrix {
            spec: self.spec.transposed(),
            blocks: self.blocks.iter().map(|(&(r, c), b)| ((c, r), b.transpose())).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for b in self.blocks.values_mut() {
            *b *= s;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.blocks.values().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.values().flat_map(|b| b.iter()).fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Dense assembly, guarded by [`DENSIFY_GUARD`].
    pub fn densify(&self) -> Result<DMatrix<f64>, SectorError> {
        densify(self)
    }
}

pub fn densify(op: &SectorMatrix) -> Result<DMatrix<f64>, SectorError> {
    let nr = op.row_basis().total_dimension();
    let nc = op.col_basis().total_dimension();
    let dim = nr.max(nc);
    if dim > DENSIFY_GUARD {
        return Err(SectorError::DensifyGuard { dim, guard: DENSIFY_GUARD });
    }
    let mut dense = DMatrix::zeros(nr, nc);
    for (&(r, c), b) in op.blocks() {
        let ro = op.row_basis().offset(r).ok_or(SectorError::MissingBlock(r, c))?;
        let co = op.col_basis().offset(c).ok_or(SectorError::MissingBlock(r, c))?;
        dense.view_mut((ro, co), b.shape()).copy_from(b);
    }
    Ok(dense)
}

/// Operation performed by a sector or task table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    /// `op(A)·op(B)`, each operand optionally transposed.
    Multiply { trans_a: bool, trans_b: bool },
    /// `A ⊗ B` on the fused bases (see [`FusedBasis`]).
    Kron,
    /// `A + B` on identical bases.
    Add,
}

impl OpKind {
    pub const MULTIPLY: OpKind = OpKind::Multiply { trans_a: false, trans_b: false };
}

/// One structurally possible operand combination and the block it feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SectorTableRow {
    pub a: Option<BlockKey>,
    pub b: Option<BlockKey>,
    pub out: BlockKey,
}

/// Result of the structural (first-level) pass.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorTable {
    pub kind: OpKind,
    pub output: SectorSpec,
    pub rows: Vec<SectorTableRow>,
}

impl SectorTable {
    /// Distinct output keys, sorted.
    pub fn outputs(&self) -> Vec<BlockKey> {
        let set: BTreeSet<BlockKey> = self.rows.iter().map(|r| r.out).collect();
        set.into_iter().collect()
    }
}

fn effective(spec: &SectorSpec, trans: bool) -> SectorSpec {
    if trans {
        spec.transposed()
    } else {
        spec.clone()
    }
}

fn flip(key: BlockKey, trans: bool) -> BlockKey {
    if trans {
        (key.1, key.0)
    } else {
        key
    }
}

/// Output bases of `kind` applied to operands with specs `a` and `b`.
pub fn output_spec(a: &SectorSpec, b: &SectorSpec, kind: OpKind) -> Result<SectorSpec, SectorError> {
    match kind {
        OpKind::Multiply { trans_a, trans_b } => {
            let ea = effective(a, trans_a);
            let eb = effective(b, trans_b);
            if ea.col_basis != eb.row_basis {
                return Err(SectorError::BasisMismatch(
                    "inner bases of a product differ".into(),
                ));
            }
            Ok(SectorSpec::new(ea.row_basis, eb.col_basis, ea.delta + eb.delta))
        }
        OpKind::Kron => Ok(SectorSpec::new(
            FusedBasis::new(&a.row_basis, &b.row_basis).basis().clone(),
            FusedBasis::new(&a.col_basis, &b.col_basis).basis().clone(),
            a.delta + b.delta,
        )),
        OpKind::Add => {
            if a != b {
                return Err(SectorError::BasisMismatch("sum of operators on different bases".into()));
            }
            Ok(a.clone())
        }
    }
}

fn combine_keys(
    kind: OpKind,
    a_keys: &[BlockKey],
    b_keys: &[BlockKey],
) -> Vec<SectorTableRow> {
    let mut rows = Vec::new();
    match kind {
        OpKind::Multiply { trans_a, trans_b } => {
            let mut by_row: BTreeMap<QuantumNumber, Vec<BlockKey>> = BTreeMap::new();
            for &kb in b_keys {
                by_row.entry(flip(kb, trans_b).0).or_default().push(kb);
            }
            for &ka in a_keys {
                let (r, inner) = flip(ka, trans_a);
                for &kb in by_row.get(&inner).map(Vec::as_slice).unwrap_or(&[]) {
                    let c = flip(kb, trans_b).1;
                    rows.push(SectorTableRow { a: Some(ka), b: Some(kb), out: (r, c) });
                }
            }
        }
        OpKind::Kron => {
            for &ka in a_keys {
                for &kb in b_keys {
                    rows.push(SectorTableRow { a: Some(ka), b: Some(kb), out: (ka.0 + kb.0, ka.1 + kb.1) });
                }
            }
        }
        OpKind::Add => {
            let a_set: BTreeSet<BlockKey> = a_keys.iter().copied().collect();
            let b_set: BTreeSet<BlockKey> = b_keys.iter().copied().collect();
            for &k in a_set.union(&b_set) {
                rows.push(SectorTableRow {
                    a: a_set.contains(&k).then_some(k),
                    b: b_set.contains(&k).then_some(k),
                    out: k,
                });
            }
        }
    }
    rows.sort_by(|x, y| (x.out, x.a, x.b).cmp(&(y.out, y.a, y.b)));
    rows.dedup();
    rows
}

/// First level: the structurally reachable output sectors of an operation.
pub fn sector_table(a: &SectorSpec, b: &SectorSpec, kind: OpKind) -> Result<SectorTable, SectorError> {
    let output = output_spec(a, b, kind)?;
    let rows = combine_keys(kind, &a.allowed_keys(), &b.allowed_keys());
    Ok(SectorTable { kind, output, rows })
}

/// One independent block task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskRow {
    /// Stored key of the left operand block.
    pub a: Option<BlockKey>,
    /// Stored key of the right operand block.
    pub b: Option<BlockKey>,
    pub out: BlockKey,
    pub weight: f64,
    pub trans_a: bool,
    pub trans_b: bool,
    /// Row/column offset of the contribution inside the output block
    /// (non-zero only for Kronecker products).
    pub out_offset: (usize, usize),
}

/// Second level: concrete block tasks over stored operand blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskTable {
    pub kind: OpKind,
    pub output: SectorSpec,
    pub rows: Vec<TaskRow>,
}

impl TaskTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows grouped by output key; groups write disjoint blocks.
    pub fn groups(&self) -> BTreeMap<BlockKey, Vec<TaskRow>> {
        let mut g: BTreeMap<BlockKey, Vec<TaskRow>> = BTreeMap::new();
        for r in &self.rows {
            g.entry(r.out).or_default().push(*r);
        }
        g
    }
}

pub fn task_table(a: &SectorMatrix, b: &SectorMatrix, kind: OpKind) -> Result<TaskTable, SectorError> {
    let output = output_spec(a.spec(), b.spec(), kind)?;
    let a_keys: Vec<BlockKey> = a.blocks().map(|(k, _)| *k).collect();
    let b_keys: Vec<BlockKey> = b.blocks().map(|(k, _)| *k).collect();
    let (trans_a, trans_b) = match kind {
        OpKind::Multiply { trans_a, trans_b } => (trans_a, trans_b),
        _ => (false, false),
    };
    let (row_fused, col_fused) = if kind == OpKind::Kron {
        (
            Some(FusedBasis::new(a.row_basis(), b.row_basis())),
            Some(FusedBasis::new(a.col_basis(), b.col_basis())),
        )
    } else {
        (None, None)
    };
    let rows = combine_keys(kind, &a_keys, &b_keys)
        .into_iter()
        .map(|r| {
            let out_offset = match (&row_fused, &col_fused, r.a, r.b) {
                (Some(rf), Some(cf), Some(ka), Some(kb)) => (
                    rf.piece(ka.0, kb.0).expect("fused row piece").offset,
                    cf.piece(ka.1, kb.1).expect("fused col piece").offset,
                ),
                _ => (0, 0),
            };
            TaskRow { a: r.a, b: r.b, out: r.out, weight: 1.0, trans_a, trans_b, out_offset }
        })
        .collect();
    Ok(TaskTable { kind, output, rows })
}

/// Third level: `out += Σ weight · (blockA ∘ blockB)` over the table rows.
pub fn execute_tasks(
    table: &TaskTable,
    a: &SectorMatrix,
    b: &SectorMatrix,
    out: &mut SectorMatrix,
) -> Result<(), SectorError> {
    execute_rows_with(&ReferenceGemm, table, &table.rows, a, b, out)
}

/// Executes a subset of rows of `table` with the given GEMM backend.
pub fn execute_rows_with<G: GemmBackend + ?Sized>(
    gemm: &G,
    table: &TaskTable,
    rows: &[TaskRow],
    a: &SectorMatrix,
    b: &SectorMatrix,
    out: &mut SectorMatrix,
) -> Result<(), SectorError> {
    if out.spec() != &table.output {
        return Err(SectorError::BasisMismatch("accumulator bases differ from the table output".into()));
    }
    let fetch = |m: &'_ SectorMatrix, key: Option<BlockKey>| -> Result<Option<DMatrix<f64>>, SectorError> {
        match key {
            None => Ok(None),
            Some(k) => m.block(k.0, k.1).cloned().map(Some).ok_or(SectorError::MissingBlock(k.0, k.1)),
        }
    };
    for row in rows {
        let (orow, ocol) = row.out;
        match table.kind {
            OpKind::Multiply { .. } => {
                let ka = row.a.ok_or(SectorError::MissingBlock(orow, ocol))?;
                let kb = row.b.ok_or(SectorError::MissingBlock(orow, ocol))?;
                let ba = a.block(ka.0, ka.1).ok_or(SectorError::MissingBlock(ka.0, ka.1))?;
                let bb = b.block(kb.0, kb.1).ok_or(SectorError::MissingBlock(kb.0, kb.1))?;
                let (m, k1) = if row.trans_a { (ba.ncols(), ba.nrows()) } else { ba.shape() };
                let (k2, n) = if row.trans_b { (bb.ncols(), bb.nrows()) } else { bb.shape() };
                let dst = out.block_or_zero(orow, ocol)?;
                if k1 != k2 || dst.shape() != (m, n) {
                    return Err(SectorError::BlockShape {
                        row: orow,
                        col: ocol,
                        expected: dst.shape(),
                        found: (m, n),
                    });
                }
                let ldc = dst.nrows();
                gemm.gemm(
                    Trans::from_flag(row.trans_a),
                    Trans::from_flag(row.trans_b),
                    m,
                    n,
                    k1,
                    row.weight,
                    ba.as_slice(),
                    ba.nrows().max(1),
                    bb.as_slice(),
                    bb.nrows().max(1),
                    1.0,
                    dst.as_mut_slice(),
                    ldc.max(1),
                );
            }
            OpKind::Kron => {
                let ba = fetch(a, row.a)?.ok_or(SectorError::MissingBlock(orow, ocol))?;
                let bb = fetch(b, row.b)?.ok_or(SectorError::MissingBlock(orow, ocol))?;
                let dst = out.block_or_zero(orow, ocol)?;
                let (ro, co) = row.out_offset;
                let (ra, ca) = ba.shape();
                let (rb, cb) = bb.shape();
                if ro + ra * rb > dst.nrows() || co + ca * cb > dst.ncols() {
                    return Err(SectorError::BlockShape {
                        row: orow,
                        col: ocol,
                        expected: dst.shape(),
                        found: (ro + ra * rb, co + ca * cb),
                    });
                }
                for jb in 0..cb {
                    for ja in 0..ca {
                        let col = co + ja + jb * ca;
                        for ib in 0..rb {
                            let s = row.weight * bb[(ib, jb)];
                            if s == 0.0 {
                                continue;
                            }
                            for ia in 0..ra {
                                dst[(ro + ia + ib * ra, col)] += s * ba[(ia, ja)];
                            }
                        }
                    }
                }
            }
            OpKind::Add => {
                for (m, key) in [(a, row.a), (b, row.b)] {
                    if let Some(blk) = fetch(m, key)? {
                        let dst = out.block_or_zero(orow, ocol)?;
                        if dst.shape() != blk.shape() {
                            return Err(SectorError::BlockShape {
                                row: orow,
                                col: ocol,
                                expected: dst.shape(),
                                found: blk.shape(),
                            });
                        }
                        dst.zip_apply(&blk, |d, s| *d += row.weight * s);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Dense result of `kind` on densified operands, in the output spec's
/// dense ordering.
pub fn dense_operation(a: &SectorMatrix, b: &SectorMatrix, kind: OpKind) -> Result<DMatrix<f64>, SectorError> {
    let da = densify(a)?;
    let db = densify(b)?;
    match kind {
        OpKind::Multiply { trans_a, trans_b } => {
            let ea = if trans_a { da.transpose() } else { da };
            let eb = if trans_b { db.transpose() } else { db };
            if ea.ncols() != eb.nrows() {
                return Err(SectorError::BasisMismatch("inner dimensions differ".into()));
            }
            Ok(ea * eb)
        }
        OpKind::Add => {
            if da.shape() != db.shape() {
                return Err(SectorError::BasisMismatch("shapes differ".into()));
            }
            Ok(da + db)
        }
        OpKind::Kron => {
            let rf = FusedBasis::new(a.row_basis(), b.row_basis());
            let cf = FusedBasis::new(a.col_basis(), b.col_basis());
            let rmap = fused_index_map(&rf, a.row_basis(), b.row_basis());
            let cmap = fused_index_map(&cf, a.col_basis(), b.col_basis());
            let dim = rf.basis().total_dimension().max(cf.basis().total_dimension());
            if dim > DENSIFY_GUARD {
                return Err(SectorError::DensifyGuard { dim, guard: DENSIFY_GUARD });
            }
            let plain = da.kronecker(&db);
            let mut out = DMatrix::zeros(rf.basis().total_dimension(), cf.basis().total_dimension());
            for i in 0..plain.nrows() {
                for j in 0..plain.ncols() {
                    out[(rmap[i], cmap[j])] = plain[(i, j)];
                }
            }
            Ok(out)
        }
    }
}

/// Maps the plain Kronecker index `ia·dim(right) + ib` to the fused dense index.
pub fn fused_index_map(fused: &FusedBasis, left: &SectorBasis, right: &SectorBasis) -> Vec<usize> {
    let locate = |basis: &SectorBasis, idx: usize| -> (QuantumNumber, usize) {
        for &(q, d) in basis.entries() {
            let off = basis.offset(q).unwrap();
            if idx < off + d {
                return (q, idx - off);
            }
        }
        unreachable!("index out of range")
    };
    let nl = left.total_dimension();
    let nr = right.total_dimension();
    let mut map = vec![0; nl * nr];
    for ia in 0..nl {
        let (ql, il) = locate(left, ia);
        for ib in 0..nr {
            let (qr, ir) = locate(right, ib);
            let piece = fused.piece(ql, qr).unwrap();
            let base = fused.basis().offset(ql + qr).unwrap();
            map[ia * nr + ib] = base + piece.offset + il + ir * piece.left_dim;
        }
    }
    map
}

/// Dense assembly plus the deviation of a sector result from a reference.
#[derive(Clone, Debug)]
pub struct FullFormReport {
    pub dense: DMatrix<f64>,
    pub max_abs_deviation: f64,
}

/// Fourth level. Densifies `op`; against `reference` when given, otherwise
/// against its own re-split (which catches blocks stored off the allowed
/// pattern or with inconsistent shapes).
pub fn full_form_check(op: &SectorMatrix, reference: Option<&DMatrix<f64>>) -> Result<FullFormReport, SectorError> {
    op.validate()?;
    let dense = densify(op)?;
    let dev = match reference {
        Some(r) => {
            if r.shape() != dense.shape() {
                return Err(SectorError::BasisMismatch("reference shape differs".into()));
            }
            (&dense - r).amax()
        }
        None => {
            let back = SectorMatrix::from_dense(op.spec().clone(), &dense)?;
            densify(&back).map(|d| (&d - &dense).amax())?
        }
    };
    Ok(FullFormReport { dense, max_abs_deviation: dev })
}

/// Executes the task table and self-checks the result against the dense path.
/// Fails when the max-abs deviation exceeds `tol · (1 + max|reference|)`.
pub fn execute_checked(
    table: &TaskTable,
    a: &SectorMatrix,
    b: &SectorMatrix,
    out: &mut SectorMatrix,
    tol: f64,
) -> Result<FullFormReport, SectorError> {
    let before = densify(out)?;
    execute_tasks(table, a, b, out)?;
    let reference = before + dense_operation(a, b, table.kind)?;
    let report = full_form_check(out, Some(&reference))?;
    let bound = tol * (1.0 + reference.amax());
    if report.max_abs_deviation > bound {
        return Err(SectorError::SelfCheck { deviation: report.max_abs_deviation, tolerance: bound });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(a: i32) -> QuantumNumber {
        QuantumNumber::scalar(a)
    }

    fn two_sector() -> SectorBasis {
        SectorBasis::new(vec![(q(0), 1), (q(1), 1)]).unwrap()
    }

    fn fermion_site() -> SectorBasis {
        SectorBasis::new(vec![
            (QuantumNumber::new(0, 0), 1),
            (QuantumNumber::new(1, 1), 1),
            (QuantumNumber::new(1, -1), 1),
            (QuantumNumber::new(2, 0), 1),
        ])
        .unwrap()
    }

    #[test]
    fn diagonal_times_diagonal_stays_diagonal() {
        let spec = SectorSpec::new(two_sector(), two_sector(), QuantumNumber::ZERO);
        let t = sector_table(&spec, &spec, OpKind::MULTIPLY).unwrap();
        assert_eq!(t.outputs(), vec![(q(0), q(0)), (q(1), q(1))]);
    }

    #[test]
    fn creation_up_times_creation_down_has_single_output() {
        let b = fermion_site();
        let up = SectorSpec::new(b.clone(), b.clone(), QuantumNumber::new(1, 1));
        let dn = SectorSpec::new(b.clone(), b, QuantumNumber::new(1, -1));
        let t = sector_table(&up, &dn, OpKind::MULTIPLY).unwrap();
        assert_eq!(t.outputs(), vec![(QuantumNumber::new(2, 0), QuantumNumber::new(0, 0))]);
        assert_eq!(t.rows.len(), 1);
    }

    #[test]
    fn inner_basis_mismatch_is_reported() {
        let a = SectorSpec::new(two_sector(), two_sector(), QuantumNumber::ZERO);
        let b = SectorSpec::new(fermion_site(), fermion_site(), QuantumNumber::ZERO);
        assert!(matches!(
            sector_table(&a, &b, OpKind::MULTIPLY),
            Err(SectorError::BasisMismatch(_))
        ));
    }

    #[test]
    fn identity_tasks_have_unit_weight() {
        let id = SectorMatrix::identity(&two_sector());
        let t = task_table(&id, &id, OpKind::MULTIPLY).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.rows.iter().all(|r| r.weight == 1.0));
    }

    #[test]
    fn absent_block_omits_task() {
        let id = SectorMatrix::identity(&two_sector());
        let mut partial = id.clone();
        partial.blocks.remove(&(q(1), q(1)));
        let t = task_table(&id, &partial, OpKind::MULTIPLY).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.rows[0].out, (q(0), q(0)));
    }

    #[test]
    fn empty_table_leaves_accumulator() {
        let id = SectorMatrix::identity(&two_sector());
        let zero = SectorMatrix::zeros(two_sector(), two_sector(), QuantumNumber::ZERO);
        let t = task_table(&id, &zero, OpKind::MULTIPLY).unwrap();
        assert!(t.is_empty());
        let mut out = id.clone();
        execute_tasks(&t, &id, &zero, &mut out).unwrap();
        assert_eq!(out, id);
    }

    #[test]
    fn selection_rule_enforced_on_insert() {
        let mut m = SectorMatrix::zeros(two_sector(), two_sector(), q(1));
        assert!(m.insert_block(q(0), q(0), DMatrix::zeros(1, 1)).is_err());
        assert!(m.insert_block(q(1), q(0), DMatrix::zeros(1, 1)).is_ok());
        assert!(m.insert_block(q(1), q(0), DMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn identity_full_form_is_identity() {
        let b = SectorBasis::new(vec![(q(0), 2), (q(1), 3)]).unwrap();
        let r = full_form_check(&SectorMatrix::identity(&b), None).unwrap();
        assert_eq!(r.dense, DMatrix::identity(5, 5));
        assert_eq!(r.max_abs_deviation, 0.0);
    }

    #[test]
    fn corrupted_block_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = SectorBasis::new(vec![(q(0), 2), (q(1), 3), (q(2), 1)]).unwrap();
        let spec = SectorSpec::new(b.clone(), b, QuantumNumber::ZERO);
        let a = SectorMatrix::random(spec.clone(), 1.0, &mut rng);
        let c = SectorMatrix::random(spec, 1.0, &mut rng);
        let t = task_table(&a, &c, OpKind::MULTIPLY).unwrap();
        let mut out = SectorMatrix::from_spec(t.output.clone());
        execute_checked(&t, &a, &c, &mut out, 1e-12).unwrap();

        let mut bad = a.clone();
        bad.block_mut(q(1), q(1)).unwrap()[(0, 0)] += 0.5;
        let mut out = SectorMatrix::from_spec(t.output.clone());
        execute_tasks(&t, &bad, &c, &mut out).unwrap();
        let reference = dense_operation(&a, &c, OpKind::MULTIPLY).unwrap();
        let r = full_form_check(&out, Some(&reference)).unwrap();
        assert!(r.max_abs_deviation > 1e-3);
    }

    #[test]
    fn densify_guard() {
        let big = SectorBasis::new(vec![(q(0), DENSIFY_GUARD + 1)]).unwrap();
        let m = SectorMatrix::zeros(big.clone(), big, QuantumNumber::ZERO);
        assert!(matches!(m.densify(), Err(SectorError::DensifyGuard { .. })));
    }

    #[test]
    fn transposed_multiply_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = SectorBasis::new(vec![(q(0), 2), (q(1), 3)]).unwrap();
        let c = SectorBasis::new(vec![(q(-1), 1), (q(0), 2), (q(1), 2)]).unwrap();
        let a = SectorMatrix::random(SectorSpec::new(r.clone(), c.clone(), q(1)), 1.0, &mut rng);
        let b = SectorMatrix::random(SectorSpec::new(r, c, q(0)), 1.0, &mut rng);
        let kind = OpKind::Multiply { trans_a: true, trans_b: false };
        let t = task_table(&a, &b, kind).unwrap();
        let mut out = SectorMatrix::from_spec(t.output.clone());
        execute_checked(&t, &a, &b, &mut out, 1e-12).unwrap();
        assert_eq!(out.delta(), q(-1));
    }
}
