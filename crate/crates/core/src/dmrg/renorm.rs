//! Reduced-density-matrix truncation and operator transformation.

use std::collections::BTreeMap;
use std::sync::Mutex;

use nalgebra::DMatrix;

use crate::dmrg::block::{BlockState, Enlarged, Side};
use crate::dmrg::wavefunction::SuperblockWavefunction;
use crate::error::DmrgError;
use crate::gemm::{gemm_flops, GemmBackend, Trans};
use crate::mazerunner::{ListMaze, RunnerPool};
use crate::model::LocalSpace;
use crate::qn::{QuantumNumber, SectorBasis};
use crate::sector::{BlockKey, SectorMatrix};
use crate::ttcache::{ttcache_run_in, Arena, Dataset, DependencyNode, VisitContext};

/// Kept states of an enlarged block.
#[derive(Clone, Debug, PartialEq)]
pub struct Truncation {
    /// `dim(q) × kept(q)` isometries, only for sectors with kept states.
    pub transform: BTreeMap<QuantumNumber, DMatrix<f64>>,
    pub basis: SectorBasis,
    /// `1 − Σ kept eigenvalues`, clamped to `[0, 1]`.
    pub truncation_error: f64,
    /// Every density-matrix eigenvalue with its sector, in selection order.
    pub spectrum: Vec<(QuantumNumber, f64)>,
}

/// Reduced density matrices of the enlarged block on `side`, one per
/// enlarged-basis sector, plus the GEMM flops spent.
pub fn density_matrices<G: GemmBackend + ?Sized>(
    psi: &SuperblockWavefunction,
    enlarged: &Enlarged,
    local: &LocalSpace,
    gemm: &G,
) -> Result<(BTreeMap<QuantumNumber, DMatrix<f64>>, u64), DmrgError> {
    let layout = &psi.layout;
    // (q, column group) -> column offset
    let mut cols: BTreeMap<QuantumNumber, BTreeMap<(QuantumNumber, usize), (usize, usize)>> = BTreeMap::new();
    for (i, k) in layout.keys.iter().enumerate() {
        let (dl, dr) = layout.shapes[i];
        let (q, group, width) = match enlarged.side {
            Side::Left => (k.l + local.qn(k.s1), (k.r, k.s2), dr),
            Side::Right => (k.r + local.qn(k.s2), (k.l, k.s1), dl),
        };
        let groups = cols.entry(q).or_default();
        let next = groups.values().map(|(o, w)| o + w).max().unwrap_or(0);
        groups.entry(group).or_insert((next, width));
    }
    let mut psi_q: BTreeMap<QuantumNumber, DMatrix<f64>> = BTreeMap::new();
    for (q, groups) in &cols {
        let dim = enlarged
            .basis()
            .dim(*q)
            .ok_or_else(|| DmrgError::Runtime(format!("sector {q} missing from the enlarged basis")))?;
        let width: usize = groups.values().map(|(_, w)| w).sum();
        psi_q.insert(*q, DMatrix::zeros(dim, width));
    }
    for (i, k) in layout.keys.iter().enumerate() {
        let blk = psi.block(i);
        match enlarged.side {
            Side::Left => {
                let q = k.l + local.qn(k.s1);
                let piece = enlarged.fused.piece(k.l, local.qn(k.s1)).expect("fused piece");
                let (c0, _) = cols[&q][&(k.r, k.s2)];
                psi_q.get_mut(&q).unwrap().view_mut((piece.offset, c0), blk.shape()).copy_from(&blk);
            }
            Side::Right => {
                let q = k.r + local.qn(k.s2);
                let piece = enlarged.fused.piece(local.qn(k.s2), k.r).expect("fused piece");
                let (c0, _) = cols[&q][&(k.l, k.s1)];
                let t = blk.transpose();
                psi_q.get_mut(&q).unwrap().view_mut((piece.offset, c0), t.shape()).copy_from(&t);
            }
        }
    }
    let mut flops = 0;
    let mut out = BTreeMap::new();
    for (q, m) in psi_q {
        let (dim, k) = m.shape();
        let mut rho = DMatrix::zeros(dim, dim);
        if k > 0 {
            gemm.gemm(Trans::No, Trans::Yes, dim, dim, k, 1.0, m.as_slice(), dim, m.as_slice(), dim, 0.0, rho.as_mut_slice(), dim);
            flops += gemm_flops(dim, dim, k);
        }
        out.insert(q, rho);
    }
    Ok((out, flops))
}

/// Keeps the `d` largest eigenvalues over all sectors. Ties are broken by
/// sector quantum number, then by position within the sector.
pub fn select_states(rdms: &BTreeMap<QuantumNumber, DMatrix<f64>>, d: usize) -> Result<Truncation, DmrgError> {
    if d == 0 {
        return Err(DmrgError::Schedule("bond dimension must be positive".into()));
    }
    let mut vecs: BTreeMap<QuantumNumber, DMatrix<f64>> = BTreeMap::new();
    let mut all: Vec<(f64, QuantumNumber, usize)> = Vec::new();
    let mut trace = 0.0;
    for (&q, rho) in rdms {
        let eig = rho.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let sorted = DMatrix::from_fn(rho.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
        for (rank, &j) in order.iter().enumerate() {
            let lambda = eig.eigenvalues[j];
            trace += lambda;
            all.push((lambda, q, rank));
        }
        vecs.insert(q, sorted);
    }
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let keep = d.min(all.len());
    let mut kept: BTreeMap<QuantumNumber, usize> = BTreeMap::new();
    let mut weight = 0.0;
    for &(lambda, q, _) in &all[..keep] {
        *kept.entry(q).or_insert(0) += 1;
        weight += lambda;
    }
    let transform: BTreeMap<QuantumNumber, DMatrix<f64>> =
        kept.iter().map(|(&q, &k)| (q, vecs[&q].columns(0, k).into_owned())).collect();
    let basis = SectorBasis::new(kept.into_iter().collect())?;
    let total = if trace > 0.0 { trace } else { 1.0 };
    let truncation_error = (1.0 - weight / total).clamp(0.0, 1.0);
    let spectrum = all.iter().map(|&(l, q, _)| (q, l)).collect();
    Ok(Truncation { transform, basis, truncation_error, spectrum })
}

struct BlocksPayload<'a> {
    blocks: Vec<&'a DMatrix<f64>>,
}

impl Dataset<f64> for BlocksPayload<'_> {
    fn size(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    fn load_into(&self, dst: &mut [f64]) {
        let mut off = 0;
        for b in &self.blocks {
            dst[off..off + b.len()].copy_from_slice(b.as_slice());
            off += b.len();
        }
    }
}

/// Work item of one transformation task: a contiguous range of operators.
type ChannelRange = std::ops::Range<usize>;

/// GEMM flops of transforming `ops` with `tr`.
pub fn transform_flops(ops: &[SectorMatrix], tr: &Truncation) -> u64 {
    let mut f = 0;
    for op in ops {
        for (&(r, c), blk) in op.blocks() {
            if let (Some(tr_r), Some(tr_c)) = (tr.transform.get(&r), tr.transform.get(&c)) {
                let (dr, dc) = blk.shape();
                f += gemm_flops(dr, tr_c.ncols(), dc) + gemm_flops(tr_r.ncols(), tr_c.ncols(), dr);
            }
        }
    }
    f
}

/// `Tᵀ O T` for every operator, each transformed on its own. Tasks run on
/// the pool; each stages the transforms (root) and its operators
/// (children) through a per-worker arena of at most `arena_capacity`
/// values.
pub fn transform_operators<G: GemmBackend + ?Sized>(
    ops: &[SectorMatrix],
    tr: &Truncation,
    pool: &RunnerPool,
    gemm: &G,
    arena_capacity: usize,
) -> Result<Vec<SectorMatrix>, DmrgError> {
    let t_keys: Vec<QuantumNumber> = tr.transform.keys().copied().collect();
    let mut t_offsets = BTreeMap::new();
    let mut off = 0;
    for q in &t_keys {
        t_offsets.insert(*q, off);
        off += tr.transform[q].len();
    }
    let n = ops.len();
    let tasks = (pool.workers() * 4).clamp(1, n.max(1));
    let chunk = n.div_ceil(tasks).max(1);
    let ranges: Vec<ChannelRange> = (0..n).step_by(chunk).map(|a| a..(a + chunk).min(n)).collect();
    let results: Mutex<Vec<Option<SectorMatrix>>> = Mutex::new(vec![None; n]);

    let maze = ListMaze::new(ranges);
    let stats = pool.run_batch_with_state(
        &maze,
        || None::<Arena<f64>>,
        |arena: &mut Option<Arena<f64>>, range: ChannelRange, _| {
            let root_payload = BlocksPayload { blocks: t_keys.iter().map(|q| &tr.transform[q]).collect() };
            let children = range
                .clone()
                .map(|ch| DependencyNode::leaf(ch + 1, BlocksPayload { blocks: ops[ch].blocks().map(|(_, b)| b).collect() }))
                .collect();
            let tree = DependencyNode::with_children(0, root_payload, children);
            let need = crate::ttcache::plan_check::<f64, _>(&tree);
            if need > arena_capacity {
                return Err(format!("operator transform needs {need} arena values, capacity is {arena_capacity}"));
            }
            if arena.as_ref().is_none_or(|a| a.capacity() < need) {
                *arena = Some(Arena::new(need));
            }
            let arena = arena.as_mut().unwrap();
            ttcache_run_in(&tree, arena, |node, ctx: &VisitContext<'_, f64>| {
                if node.id == 0 {
                    return Ok(());
                }
                let ch = node.id - 1;
                let out = transform_one(&ops[ch], tr, &t_offsets, ctx.ancestor(0), ctx.own(), gemm)?;
                results.lock().map_err(|_| "poisoned result lock".to_string())?[ch] = Some(out);
                Ok(())
            })
            .map_err(|e| e.to_string())?;
            Ok(())
        },
    );
    if !stats.is_ok() {
        let msg = stats.failures.first().map(|f| f.message.clone()).unwrap_or_default();
        return Err(DmrgError::Runtime(format!("operator transform failed: {msg}")));
    }
    results
        .into_inner()
        .map_err(|_| DmrgError::Runtime("poisoned result lock".into()))?
        .into_iter()
        .map(|o| o.ok_or_else(|| DmrgError::Runtime("operator transform produced no result".into())))
        .collect()
}

fn transform_one<G: GemmBackend + ?Sized>(
    op: &SectorMatrix,
    tr: &Truncation,
    t_offsets: &BTreeMap<QuantumNumber, usize>,
    t_data: &[f64],
    op_data: &[f64],
    gemm: &G,
) -> Result<SectorMatrix, String> {
    let mut out = SectorMatrix::zeros(tr.basis.clone(), tr.basis.clone(), op.delta());
    let mut off = 0;
    let keys: Vec<(BlockKey, (usize, usize))> = op.blocks().map(|(k, b)| (*k, b.shape())).collect();
    for ((r, c), (dr, dc)) in keys {
        let blk = &op_data[off..off + dr * dc];
        off += dr * dc;
        let (Some(tr_r), Some(tr_c)) = (tr.transform.get(&r), tr.transform.get(&c)) else { continue };
        let (kr, kc) = (tr_r.ncols(), tr_c.ncols());
        let tc = &t_data[t_offsets[&c]..t_offsets[&c] + dc * kc];
        let trr = &t_data[t_offsets[&r]..t_offsets[&r] + dr * kr];
        let mut temp = vec![0.0; dr * kc];
        gemm.gemm(Trans::No, Trans::No, dr, kc, dc, 1.0, blk, dr.max(1), tc, dc.max(1), 0.0, &mut temp, dr.max(1));
        let mut res = DMatrix::zeros(kr, kc);
        gemm.gemm(Trans::Yes, Trans::No, kr, kc, dr, 1.0, trr, dr.max(1), &temp, dr.max(1), 0.0, res.as_mut_slice(), kr.max(1));
        if res.iter().any(|x| *x != 0.0) {
            out.insert_block(r, c, res).map_err(|e| e.to_string())?;
        }
    }
    Ok(out)
}

/// Density-matrix truncation of the enlarged block on `enlarged.side` and
/// the renormalized block. Returns the flops spent as well.
#[allow(clippy::too_many_arguments)]
pub fn renormalize<G: GemmBackend + ?Sized>(
    psi: &SuperblockWavefunction,
    enlarged: &Enlarged,
    local: &LocalSpace,
    d: usize,
    pool: &RunnerPool,
    gemm: &G,
    arena_capacity: usize,
) -> Result<(Truncation, BlockState, u64), DmrgError> {
    let (rdms, rdm_flops) = density_matrices(psi, enlarged, local, gemm)?;
    let tr = select_states(&rdms, d)?;
    let flops = rdm_flops + transform_flops(&enlarged.ops, &tr);
    let ops = transform_operators(&enlarged.ops, &tr, pool, gemm, arena_capacity)?;
    let block = BlockState { side: enlarged.side, length: enlarged.length, basis: tr.basis.clone(), ops };
    Ok((tr, block, flops))
}

/// Truncates an enlarged block with a prescribed isometry per sector.
pub fn truncate_with<G: GemmBackend + ?Sized>(
    enlarged: &Enlarged,
    transform: BTreeMap<QuantumNumber, DMatrix<f64>>,
    pool: &RunnerPool,
    gemm: &G,
    arena_capacity: usize,
) -> Result<BlockState, DmrgError> {
    let basis = SectorBasis::new(transform.iter().map(|(q, t)| (*q, t.ncols())).collect())?;
    let tr = Truncation { transform, basis: basis.clone(), truncation_error: 0.0, spectrum: Vec::new() };
    let ops = transform_operators(&enlarged.ops, &tr, pool, gemm, arena_capacity)?;
    Ok(BlockState { side: enlarged.side, length: enlarged.length, basis, ops })
}
