//! Factorization of a term list into block operators.
//!
//! Every term is cut at each bond `b` (between sites `b-1` and `b`) into a
//! part left of the cut and a part right of it. The cut is labelled by a
//! channel: `Start` when nothing has been applied yet, `Finish` when
//! everything has, otherwise the elementary operators on the shorter side
//! (ties go left). Terms that share the operators on the shorter side share
//! the channel, so for two-body Hamiltonians at most `O(N²)` channels cross
//! any bond. The coefficient of a term is attached to the single site where
//! its channel switches from a left-keyed to a right-keyed label; all other
//! transitions are pure operator factors.
//!
//! The result is stored as transfer matrices `W_s[a, b]` whose entries are
//! local operators, i.e. an MPO in which the channels are the auxiliary
//! index.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DMatrix;

use super::{ElemOp, LocalSpace, Model, SiteKind};
use crate::error::ModelError;
use crate::qn::QuantumNumber;
use crate::sector::DENSIFY_GUARD;

/// Label of a partially applied operator string crossing a bond.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChannelKey {
    Start,
    /// Operators already applied on the left of the bond.
    Left(Vec<(usize, ElemOp)>),
    /// Operators still to be applied on the right of the bond.
    Right(Vec<(usize, ElemOp)>),
    Finish,
}

impl ChannelKey {
    fn is_left_side(&self) -> bool {
        matches!(self, ChannelKey::Start | ChannelKey::Left(_))
    }

    fn fermionic_parity(&self) -> bool {
        match self {
            ChannelKey::Left(ops) | ChannelKey::Right(ops) => ops.iter().filter(|(_, o)| o.is_fermionic()).count() % 2 == 1,
            _ => false,
        }
    }

    /// QN shift of the part of the string left of the bond.
    fn delta(&self) -> QuantumNumber {
        match self {
            ChannelKey::Start | ChannelKey::Finish => QuantumNumber::ZERO,
            ChannelKey::Left(ops) => ops.iter().fold(QuantumNumber::ZERO, |q, (_, o)| q + o.delta()),
            ChannelKey::Right(ops) => -ops.iter().fold(QuantumNumber::ZERO, |q, (_, o)| q + o.delta()),
        }
    }
}

/// One nonzero transfer-matrix entry `W_s[from, to]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MpoEntry {
    pub from: usize,
    pub to: usize,
    pub op: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct Mpo {
    pub n_sites: usize,
    pub local: LocalSpace,
    /// Channels per bond `0..=n_sites`, sorted.
    pub channels: Vec<Vec<ChannelKey>>,
    /// Left-part QN shift of every channel.
    pub deltas: Vec<Vec<QuantumNumber>>,
    /// Transfer entries per site, sorted by `(from, to)`.
    pub sites: Vec<Vec<MpoEntry>>,
}

/// A term with operators sorted by site, fermion sign folded into the
/// coefficient and same-site products combined.
struct NormTerm {
    coeff: f64,
    ops: Vec<(usize, ElemOp)>,
    /// `(site, first op index, end op index)` per occupied site.
    groups: Vec<(usize, usize, usize)>,
}

impl NormTerm {
    /// Key of the segment covering bonds `lo..=hi` after `applied`
    /// operators. Ties go to the shorter side of the chain.
    fn key(&self, applied: usize, lo: usize, hi: usize, n_sites: usize) -> ChannelKey {
        let n = self.ops.len();
        let left = if applied * 2 == n { lo + hi <= n_sites } else { applied < n - applied };
        if applied == 0 {
            ChannelKey::Start
        } else if applied == n {
            ChannelKey::Finish
        } else if left {
            ChannelKey::Left(self.ops[..applied].to_vec())
        } else {
            ChannelKey::Right(self.ops[applied..].to_vec())
        }
    }

    /// `(bond range, key)` segments covering bonds `0..=n_sites`; segment
    /// `g` ends at the site of group `g`.
    fn segments(&self, n_sites: usize) -> Vec<(usize, usize, ChannelKey)> {
        let mut out = Vec::with_capacity(self.groups.len() + 1);
        let mut lo = 0;
        for &(site, a, _) in &self.groups {
            out.push((lo, site, self.key(a, lo, site, n_sites)));
            lo = site + 1;
        }
        out.push((lo, n_sites, ChannelKey::Finish));
        out
    }
}

fn normalize(model: &Model) -> Result<Vec<NormTerm>, ModelError> {
    let mut out = Vec::with_capacity(model.terms.len());
    for term in &model.terms {
        if term.ops.is_empty() {
            return Err(ModelError::Invalid("empty operator string; use the model constant".into()));
        }
        let mut ops = term.ops.clone();
        let mut sign = 1.0;
        for &(s, _) in &ops {
            if s >= model.n_sites {
                return Err(ModelError::Invalid(format!("operator on site {s} of {}", model.n_sites)));
            }
        }
        // stable insertion sort; swapping two fermion operators flips the sign
        for i in 1..ops.len() {
            let mut j = i;
            while j > 0 && ops[j - 1].0 > ops[j].0 {
                if ops[j - 1].1.is_fermionic() && ops[j].1.is_fermionic() {
                    sign = -sign;
                }
                ops.swap(j - 1, j);
                j -= 1;
            }
        }
        let total = ops.iter().fold(QuantumNumber::ZERO, |q, (_, o)| q + o.delta());
        if total != QuantumNumber::ZERO {
            return Err(ModelError::Invalid(format!("term does not conserve quantum numbers (shift {total})")));
        }
        if ops.iter().filter(|(_, o)| o.is_fermionic()).count() % 2 == 1 {
            return Err(ModelError::Invalid("odd number of fermion operators in a term".into()));
        }
        let mut groups = Vec::new();
        let mut a = 0;
        while a < ops.len() {
            let mut b = a;
            while b < ops.len() && ops[b].0 == ops[a].0 {
                b += 1;
            }
            groups.push((ops[a].0, a, b));
            a = b;
        }
        let nt = NormTerm { coeff: sign * term.coeff, ops, groups };
        let zero = nt.groups.iter().any(|&(_, a, b)| local_product(&nt.ops[a..b]).iter().all(|x| *x == 0.0));
        if !zero && nt.coeff != 0.0 {
            out.push(nt);
        }
    }
    Ok(out)
}

fn local_product(ops: &[(usize, ElemOp)]) -> DMatrix<f64> {
    let mut m = ops[0].1.matrix();
    for (_, o) in &ops[1..] {
        m *= o.matrix();
    }
    m
}

fn channel_sets(model: &Model, terms: &[NormTerm]) -> Vec<BTreeSet<ChannelKey>> {
    let n = model.n_sites;
    let mut sets = vec![BTreeSet::new(); n + 1];
    sets[0].insert(ChannelKey::Start);
    sets[n].insert(ChannelKey::Finish);
    if model.constant != 0.0 {
        for s in sets.iter_mut().skip(1) {
            s.insert(ChannelKey::Finish);
        }
    }
    for t in terms {
        for (lo, hi, key) in t.segments(n) {
            for set in &mut sets[lo..=hi] {
                if !set.contains(&key) {
                    set.insert(key.clone());
                }
            }
        }
    }
    sets
}

/// Number of channels crossing every bond `0..=n_sites`.
pub fn auxiliary_counts(model: &Model) -> Result<Vec<usize>, ModelError> {
    let terms = normalize(model)?;
    Ok(channel_sets(model, &terms).iter().map(BTreeSet::len).collect())
}

/// Number of distinct block operators crossing `boundary` (the bond left of
/// site `boundary`).
pub fn auxiliary_count(model: &Model, boundary: usize) -> Result<usize, ModelError> {
    let counts = auxiliary_counts(model)?;
    counts
        .get(boundary)
        .copied()
        .ok_or_else(|| ModelError::Partition(format!("boundary {boundary} outside 0..={}", model.n_sites)))
}

impl Mpo {
    pub fn build(model: &Model) -> Result<Self, ModelError> {
        let n = model.n_sites;
        let d = model.local.dim();
        let terms = normalize(model)?;
        let sets = channel_sets(model, &terms);
        let channels: Vec<Vec<ChannelKey>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let index: Vec<HashMap<&ChannelKey, usize>> =
            channels.iter().map(|cs| cs.iter().enumerate().map(|(i, k)| (k, i)).collect()).collect();
        let deltas = channels.iter().map(|cs| cs.iter().map(ChannelKey::delta).collect()).collect();

        let parity = &model.local.parity;
        let identity = DMatrix::<f64>::identity(d, d);
        let fermion = model.local.kind == SiteKind::Fermion;
        let mut entries: Vec<BTreeMap<(usize, usize), DMatrix<f64>>> = vec![BTreeMap::new(); n];

        for s in 0..n {
            for (a, key) in channels[s].iter().enumerate() {
                if let Some(&b) = index[s + 1].get(key) {
                    let op = if fermion && key.fermionic_parity() { parity.clone() } else { identity.clone() };
                    entries[s].insert((a, b), op);
                }
            }
        }
        if model.constant != 0.0 {
            let a = index[0][&ChannelKey::Start];
            let b = index[1][&ChannelKey::Finish];
            *entries[0].entry((a, b)).or_insert_with(|| DMatrix::zeros(d, d)) += model.constant * &identity;
        }
        for t in &terms {
            let nf = t.ops.iter().filter(|(_, o)| o.is_fermionic()).count();
            let mut ferm_applied = 0;
            let segs = t.segments(n);
            for (g, &(site, a, b)) in t.groups.iter().enumerate() {
                let from = &segs[g].2;
                let to = &segs[g + 1].2;
                ferm_applied += t.ops[a..b].iter().filter(|(_, o)| o.is_fermionic()).count();
                let mut op = local_product(&t.ops[a..b]);
                if fermion && (nf - ferm_applied) % 2 == 1 {
                    op *= parity;
                }
                let ia = index[site][from];
                let ib = index[site + 1][to];
                if from.is_left_side() && !to.is_left_side() {
                    *entries[site].entry((ia, ib)).or_insert_with(|| DMatrix::zeros(d, d)) += t.coeff * op;
                } else {
                    entries[site].insert((ia, ib), op);
                }
            }
        }
        let sites = entries
            .into_iter()
            .map(|m| m.into_iter().map(|((from, to), op)| MpoEntry { from, to, op }).collect())
            .collect();
        Ok(Mpo { n_sites: n, local: model.local.clone(), channels, deltas, sites })
    }

    pub fn auxiliary_count(&self, boundary: usize) -> usize {
        self.channels[boundary].len()
    }

    pub fn max_auxiliary_count(&self) -> usize {
        self.channels.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Dense operators of every channel at `boundary` acting on sites
    /// `0..boundary` (site 0 is the fastest index).
    pub fn dense_left(&self, boundary: usize) -> Result<Vec<DMatrix<f64>>, ModelError> {
        let d = self.local.dim();
        guard(d, boundary)?;
        let mut cur = vec![DMatrix::from_element(1, 1, 1.0)];
        for s in 0..boundary {
            let dim = cur[0].nrows() * d;
            let mut next = vec![DMatrix::zeros(dim, dim); self.channels[s + 1].len()];
            for e in &self.sites[s] {
                next[e.to] += kron_fast(&cur[e.from], &e.op);
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Dense operators of every channel at `boundary` acting on sites
    /// `boundary..n_sites`.
    pub fn dense_right(&self, boundary: usize) -> Result<Vec<DMatrix<f64>>, ModelError> {
        let d = self.local.dim();
        guard(d, self.n_sites - boundary)?;
        let mut cur = vec![DMatrix::from_element(1, 1, 1.0)];
        for s in (boundary..self.n_sites).rev() {
            let dim = cur[0].nrows() * d;
            let mut next = vec![DMatrix::zeros(dim, dim); self.channels[s].len()];
            for e in &self.sites[s] {
                next[e.from] += kron_fast(&e.op, &cur[e.to]);
            }
            cur = next;
        }
        Ok(cur)
    }

    /// The full Hamiltonian contracted densely from the transfer matrices.
    pub fn dense_hamiltonian(&self) -> Result<DMatrix<f64>, ModelError> {
        let left = self.dense_left(self.n_sites)?;
        Ok(left.into_iter().next().expect("single finish channel"))
    }

    /// Operator table of the two-site partition at sites `(s, s+1)`.
    pub fn operator_table(&self, partition: &Partition) -> Result<OperatorTable, ModelError> {
        if partition.n_sites != self.n_sites {
            return Err(ModelError::Partition("partition built for a different chain".into()));
        }
        let s = partition.site;
        let d = self.local.dim();
        let mut acc: BTreeMap<(usize, usize), DMatrix<f64>> = BTreeMap::new();
        let mut by_from: HashMap<usize, Vec<&MpoEntry>> = HashMap::new();
        for e in &self.sites[s + 1] {
            by_from.entry(e.from).or_default().push(e);
        }
        for e1 in &self.sites[s] {
            for e2 in by_from.get(&e1.to).map(Vec::as_slice).unwrap_or(&[]) {
                *acc.entry((e1.from, e2.to)).or_insert_with(|| DMatrix::zeros(d * d, d * d)) +=
                    kron_fast(&e1.op, &e2.op);
            }
        }
        let rows = acc
            .into_iter()
            .filter_map(|((left, right), m)| {
                let mut factors = Vec::new();
                for c in 0..m.ncols() {
                    for r in 0..m.nrows() {
                        if m[(r, c)] != 0.0 {
                            factors.push((r, c, m[(r, c)]));
                        }
                    }
                }
                (!factors.is_empty()).then_some(OperatorTableRow { left, right, factors })
            })
            .collect();
        Ok(OperatorTable { partition: *partition, local_dim: d, rows })
    }
}

fn guard(d: usize, sites: usize) -> Result<(), ModelError> {
    let dim = d.checked_pow(sites as u32).unwrap_or(usize::MAX);
    if dim > DENSIFY_GUARD {
        return Err(ModelError::Invalid(format!("dense dimension {dim} exceeds {DENSIFY_GUARD}")));
    }
    Ok(())
}

/// Tensor product with `left` as the fast index: `(i, j) ↦ i + j·dim(left)`.
pub fn kron_fast(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    right.kronecker(left)
}

/// Four-way split of the chain: `0..site`, `site`, `site + 1`,
/// `site + 2..n_sites`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Partition {
    pub n_sites: usize,
    pub site: usize,
}

impl Partition {
    pub fn two_site(n_sites: usize, site: usize) -> Result<Self, ModelError> {
        if n_sites < 2 || site + 1 >= n_sites {
            return Err(ModelError::Partition(format!("sites ({site}, {}) outside a chain of {n_sites}", site + 1)));
        }
        Ok(Partition { n_sites, site })
    }

    /// Validates an explicit split into left modes, two sites and right modes.
    pub fn from_sets(n_sites: usize, left: &[usize], s1: usize, s2: usize, right: &[usize]) -> Result<Self, ModelError> {
        let expected: Vec<usize> = (0..n_sites).collect();
        let mut order: Vec<usize> = left.to_vec();
        order.push(s1);
        order.push(s2);
        order.extend_from_slice(right);
        if order != expected {
            return Err(ModelError::Partition(
                "partition must cover the chain contiguously as left, s, s+1, right".into(),
            ));
        }
        Self::two_site(n_sites, s1)
    }

    pub fn left_len(&self) -> usize {
        self.site
    }

    pub fn right_len(&self) -> usize {
        self.n_sites - self.site - 2
    }
}

/// `M[out, in] = factor`, with two-site index `σ₁ + d·σ₂`.
pub type SiteFactor = (usize, usize, f64);

/// `H = Σ_rows L_left ⊗ (Σ factors |out⟩⟨in|) ⊗ R_right`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorTableRow {
    /// Channel index at bond `site`.
    pub left: usize,
    /// Channel index at bond `site + 2`.
    pub right: usize,
    /// Scalar two-site factors with coupling coefficients folded in.
    pub factors: Vec<SiteFactor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorTable {
    pub partition: Partition,
    pub local_dim: usize,
    pub rows: Vec<OperatorTableRow>,
}

impl OperatorTable {
    pub fn n_factors(&self) -> usize {
        self.rows.iter().map(|r| r.factors.len()).sum()
    }

    /// Dense Hamiltonian reassembled from the table rows.
    pub fn assemble_dense(&self, mpo: &Mpo) -> Result<DMatrix<f64>, ModelError> {
        let s = self.partition.site;
        let d = self.local_dim;
        guard(d, self.partition.n_sites)?;
        let left = mpo.dense_left(s)?;
        let right = mpo.dense_right(s + 2)?;
        let dim = d.pow(self.partition.n_sites as u32);
        let mut h = DMatrix::zeros(dim, dim);
        for row in &self.rows {
            let mut m = DMatrix::zeros(d * d, d * d);
            for &(r, c, x) in &row.factors {
                m[(r, c)] = x;
            }
            h += kron_fast(&kron_fast(&left[row.left], &m), &right[row.right]);
        }
        Ok(h)
    }
}

/// Operator table of the partition `(0..s, s, s+1, s+2..N)`, with the
/// channel counts of all bonds.
pub fn factorize(model: &Model, partition: &Partition) -> Result<(Mpo, OperatorTable), ModelError> {
    let mpo = Mpo::build(model)?;
    let table = mpo.operator_table(partition)?;
    Ok((mpo, table))
}
