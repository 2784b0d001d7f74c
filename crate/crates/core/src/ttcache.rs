//! Tree-traversal buffering over a data dependency tree.
//!
//! Every node of a [`DependencyNode`] tree carries a dataset and work that
//! needs the dataset of the node and of all its ancestors. A depth-first
//! traversal keeps exactly the root-to-node path resident in an [`Arena`]:
//! loading a node bumps the offset, unloading retracts it, and siblings
//! reuse the same region. Allocation is a pointer bump, nothing is ever
//! freed, and each dataset is copied once per traversal.

use std::mem::size_of;

use crate::error::ArenaError;

/// A loaded region `[start, start + len)` of an arena.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub start: usize,
    pub len: usize,
}

impl Region {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }
}

/// Bump-offset buffer; the occupied part is always the prefix `[0, offset)`.
/// Capacity and offsets are counted in elements of `T`.
#[derive(Debug)]
pub struct Arena<T> {
    buf: Vec<T>,
    offset: usize,
    peak: usize,
    live: Vec<Region>,
}

impl<T: Copy + Default> Arena<T> {
    pub fn new(capacity: usize) -> Self {
        Arena { buf: vec![T::default(); capacity], offset: 0, peak: 0, live: Vec::new() }
    }

    pub fn capacity(&self) -> usize {
        self.buf.len()
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Largest offset observed since creation.
    pub fn peak(&self) -> usize {
        self.peak
    }

    /// Claims `len` elements at the current offset and lets `fill` write them.
    pub fn load_with(&mut self, len: usize, fill: impl FnOnce(&mut [T])) -> Result<Region, ArenaError> {
        if self.offset + len > self.buf.len() {
            return Err(ArenaError::CapacityExceeded { offset: self.offset, size: len, capacity: self.buf.len() });
        }
        let region = Region { start: self.offset, len };
        fill(&mut self.buf[region.range()]);
        self.offset += len;
        self.peak = self.peak.max(self.offset);
        self.live.push(region);
        Ok(region)
    }

    pub fn load(&mut self, data: &[T]) -> Result<Region, ArenaError> {
        self.load_with(data.len(), |dst| dst.copy_from_slice(data))
    }

    /// Retracts the offset past `region`, which must be the most recent
    /// region still loaded. The data itself is left in place.
    pub fn unload(&mut self, region: Region) -> Result<(), ArenaError> {
        match self.live.last() {
            Some(last) if *last == region && region.end() == self.offset => {
                self.live.pop();
                self.offset = region.start;
                Ok(())
            }
            _ => Err(ArenaError::LifoViolation { offset: self.offset, size: region.len }),
        }
    }

    /// The occupied prefix `[0, offset)`.
    pub fn prefix(&self) -> &[T] {
        &self.buf[..self.offset]
    }

    /// Contents of `region`; valid until the region is overwritten.
    pub fn get(&self, region: Region) -> &[T] {
        &self.buf[region.range()]
    }
}

/// A dataset that can be copied into an arena region.
pub trait Dataset<T> {
    fn size(&self) -> usize;
    fn load_into(&self, dst: &mut [T]);
}

impl<T: Copy> Dataset<T> for Vec<T> {
    fn size(&self) -> usize {
        self.len()
    }

    fn load_into(&self, dst: &mut [T]) {
        dst.copy_from_slice(self)
    }
}

impl<T: Copy> Dataset<T> for &[T] {
    fn size(&self) -> usize {
        self.len()
    }

    fn load_into(&self, dst: &mut [T]) {
        dst.copy_from_slice(self)
    }
}

/// Node of a data dependency tree.
#[derive(Clone, Debug)]
pub struct DependencyNode<P> {
    pub id: usize,
    pub payload: P,
    pub children: Vec<DependencyNode<P>>,
}

impl<P> DependencyNode<P> {
    pub fn leaf(id: usize, payload: P) -> Self {
        DependencyNode { id, payload, children: Vec::new() }
    }

    pub fn with_children(id: usize, payload: P, children: Vec<DependencyNode<P>>) -> Self {
        DependencyNode { id, payload, children }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// Reorders children recursively; traversal itself always follows the
    /// stored order.
    pub fn sort_children_by_key<K: Ord>(&mut self, key: &impl Fn(&DependencyNode<P>) -> K) {
        self.children.sort_by_key(|c| key(c));
        for c in &mut self.children {
            c.sort_children_by_key(key);
        }
    }
}

/// Arena size needed to traverse the tree: the largest root-to-leaf sum of
/// dataset sizes.
pub fn plan_check<T, P: Dataset<T>>(root: &DependencyNode<P>) -> usize {
    root.payload.size() + root.children.iter().map(plan_check::<T, P>).max().unwrap_or(0)
}

/// Elements a strategy that reloads the full root-to-node prefix for every
/// node would copy.
pub fn naive_prefix_copies<T, P: Dataset<T>>(root: &DependencyNode<P>) -> usize {
    fn go<T, P: Dataset<T>>(n: &DependencyNode<P>, above: usize) -> usize {
        let here = above + n.payload.size();
        here + n.children.iter().map(|c| go::<T, P>(c, here)).sum::<usize>()
    }
    go::<T, P>(root, 0)
}

/// What a node's work sees: the arena prefix and the regions of the path
/// from the root to this node (last entry is the node itself).
pub struct VisitContext<'a, T> {
    pub prefix: &'a [T],
    pub path: &'a [Region],
    pub depth: usize,
}

impl<T> VisitContext<'_, T> {
    pub fn own(&self) -> &[T] {
        let r = self.path.last().expect("non-empty path");
        &self.prefix[r.range()]
    }

    pub fn ancestor(&self, level: usize) -> &[T] {
        &self.prefix[self.path[level].range()]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraversalStats {
    pub loads: usize,
    pub elements_copied: usize,
    pub bytes_copied: usize,
    pub peak_offset: usize,
    pub final_offset: usize,
}

/// Depth-first visit: load, execute, visit children, unload. A failing
/// task aborts its subtree; offsets are unwound on the way out.
pub fn visit<T, P, F>(
    node: &DependencyNode<P>,
    arena: &mut Arena<T>,
    path: &mut Vec<Region>,
    stats: &mut TraversalStats,
    execute: &mut F,
) -> Result<(), ArenaError>
where
    T: Copy + Default,
    P: Dataset<T>,
    F: FnMut(&DependencyNode<P>, &VisitContext<'_, T>) -> Result<(), String>,
{
    let region = arena.load_with(node.payload.size(), |dst| node.payload.load_into(dst))?;
    stats.loads += 1;
    stats.elements_copied += region.len;
    stats.bytes_copied += region.len * size_of::<T>();
    stats.peak_offset = stats.peak_offset.max(arena.offset());
    path.push(region);

    let ctx = VisitContext { prefix: arena.prefix(), path, depth: path.len() - 1 };
    let mut result = execute(node, &ctx).map_err(|message| ArenaError::Task { node: node.id, message });
    if result.is_ok() {
        for child in &node.children {
            result = visit(child, arena, path, stats, execute);
            if result.is_err() {
                break;
            }
        }
    }
    path.pop();
    arena.unload(region)?;
    result
}

/// Traverses the whole tree in a fresh arena of `capacity` elements.
///
/// Fails before any work runs when [`plan_check`] exceeds the capacity.
pub fn ttcache_run<T, P, F>(root: &DependencyNode<P>, capacity: usize, execute: F) -> Result<TraversalStats, ArenaError>
where
    T: Copy + Default,
    P: Dataset<T>,
    F: FnMut(&DependencyNode<P>, &VisitContext<'_, T>) -> Result<(), String>,
{
    let mut arena = Arena::new(capacity);
    ttcache_run_in(root, &mut arena, execute)
}

/// Same as [`ttcache_run`] in a caller-owned arena; the arena offset is the
/// same before and after.
pub fn ttcache_run_in<T, P, F>(
    root: &DependencyNode<P>,
    arena: &mut Arena<T>,
    mut execute: F,
) -> Result<TraversalStats, ArenaError>
where
    T: Copy + Default,
    P: Dataset<T>,
    F: FnMut(&DependencyNode<P>, &VisitContext<'_, T>) -> Result<(), String>,
{
    let need = plan_check::<T, P>(root);
    if arena.offset() + need > arena.capacity() {
        return Err(ArenaError::CapacityExceeded { offset: arena.offset(), size: need, capacity: arena.capacity() });
    }
    let before = arena.offset();
    let mut stats = TraversalStats::default();
    let mut path = Vec::new();
    visit(root, arena, &mut path, &mut stats, &mut execute)?;
    stats.peak_offset -= before;
    stats.final_offset = arena.offset() - before;
    Ok(stats)
}
