//! One- and two-body integrals and their plain-text file format.
//!
//! ```text
//! # comment
//! N 4
//! T 1 1 -1.0
//! T 1 2 -0.5
//! V 1 1 1 1 2.0
//! E0 0.25
//! ```
//!
//! Indices are 1-based. The header may also be a bare integer. Numeric
//! record codes are accepted in place of the labels: `1 i j v` for `T`,
//! `2 i j k l v` for `V`, `0 v` for `E0`. Only one of `T i j` / `T j i` needs
//! to be given; if both are, they must agree within 1e-12. Repeated entries
//! are summed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::ModelError;

pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// `H = E0 + Σ T_ij Σ_σ c†_iσ c_jσ + Σ V_ijkl Σ_στ c†_iσ c†_jτ c_kτ c_lσ`
/// over spatial orbitals.
#[derive(Clone, Debug, PartialEq)]
pub struct Integrals {
    n_modes: usize,
    t: Vec<f64>,
    v: BTreeMap<[usize; 4], f64>,
    pub core_energy: f64,
}

impl Integrals {
    pub fn new(n_modes: usize) -> Self {
        Integrals { n_modes, t: vec![0.0; n_modes * n_modes], v: BTreeMap::new(), core_energy: 0.0 }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn t(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.n_modes + j]
    }

    /// Sets `T_ij` and `T_ji`.
    pub fn set_t(&mut self, i: usize, j: usize, value: f64) {
        self.t[i * self.n_modes + j] = value;
        self.t[j * self.n_modes + i] = value;
    }

    /// Adds to `V_ijkl`.
    pub fn add_v(&mut self, i: usize, j: usize, k: usize, l: usize, value: f64) {
        *self.v.entry([i, j, k, l]).or_insert(0.0) += value;
    }

    pub fn v(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.v.get(&[i, j, k, l]).copied().unwrap_or(0.0)
    }

    /// Stored two-body entries in index order.
    pub fn two_body(&self) -> impl Iterator<Item = ([usize; 4], f64)> + '_ {
        self.v.iter().map(|(k, v)| (*k, *v))
    }

    pub fn n_two_body(&self) -> usize {
        self.v.len()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n_modes;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.t(i, j) - self.t(j, i)).abs());
            }
        }
        worst
    }

    /// Nearest-neighbour Hubbard chain: `T_{i,i+1} = -t`, `V_iiii = U/2`.
    pub fn hubbard_chain(n: usize, t: f64, u: f64) -> Self {
        let mut ints = Integrals::new(n);
        for i in 0..n.saturating_sub(1) {
            ints.set_t(i, i + 1, -t);
        }
        if u != 0.0 {
            for i in 0..n {
                ints.add_v(i, i, i, i, u / 2.0);
            }
        }
        ints
    }

    /// Dense random integrals with Hermitian-symmetric `V_ijkl = V_lkji`.
    pub fn random_dense<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut ints = Integrals::new(n);
        for i in 0..n {
            for j in i..n {
                ints.set_t(i, j, rng.random_range(-1.0..1.0));
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mirror = [l, k, j, i];
                        if mirror < [i, j, k, l] {
                            continue;
                        }
                        let x = 0.1 * rng.random_range(-1.0..1.0);
                        ints.v.insert([i, j, k, l], x);
                        ints.v.insert(mirror, x);
                    }
                }
            }
        }
        ints
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut n_modes: Option<usize> = None;
        let mut t_raw: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut v: BTreeMap<[usize; 4], f64> = BTreeMap::new();
        let mut core = 0.0;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            let perr = |message: String| ModelError::Parse { line, message };

            let Some(n) = n_modes else {
                let value = match tokens.as_slice() {
                    [label, value] if label.eq_ignore_ascii_case("n") => value,
                    [value] => value,
                    _ => return Err(perr(format!("expected header `N <modes>`, found `{content}`"))),
                };
                let n: usize = value.parse().map_err(|_| perr(format!("bad mode count `{value}`")))?;
                if n == 0 {
                    return Err(perr("mode count must be positive".into()));
                }
                n_modes = Some(n);
                continue;
            };

            let index = |tok: &str| -> Result<usize, ModelError> {
                let i: usize = tok.parse().map_err(|_| perr(format!("bad index `{tok}`")))?;
                if i == 0 || i > n {
                    return Err(ModelError::IndexRange { line, index: i, modes: n });
                }
                Ok(i - 1)
            };
            let value = |tok: &str| -> Result<f64, ModelError> {
                let x: f64 = tok.parse().map_err(|_| perr(format!("bad value `{tok}`")))?;
                if !x.is_finite() {
                    return Err(perr(format!("non-finite value `{tok}`")));
                }
                Ok(x)
            };

            let label = tokens[0];
            let args = &tokens[1..];
            match (label, args.len()) {
                ("T" | "t" | "1", 3) => {
                    let key = (index(args[0])?, index(args[1])?);
                    *t_raw.entry(key).or_insert(0.0) += value(args[2])?;
                }
                ("V" | "v" | "2", 5) => {
                    let key = [index(args[0])?, index(args[1])?, index(args[2])?, index(args[3])?];
                    *v.entry(key).or_insert(0.0) += value(args[4])?;
                }
                ("E0" | "e0" | "0", 1) => core += value(args[0])?,
                _ => return Err(perr(format!("unrecognized record `{content}`"))),
            }
        }

        let n = n_modes.ok_or(ModelError::Parse { line: 0, message: "missing header".into() })?;
        let mut ints = Integrals::new(n);
        ints.core_energy = core;
        ints.v = v;
        for (&(i, j), &x) in &t_raw {
            if let Some(&y) = t_raw.get(&(j, i)) {
                if (x - y).abs() > SYMMETRY_TOLERANCE {
                    return Err(ModelError::Symmetry { i, j, diff: x - y });
                }
            }
            ints.t[i * n + j] = x;
            if !t_raw.contains_key(&(j, i)) {
                ints.t[j * n + i] = x;
            }
        }
        Ok(ints)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Serializes with shortest round-trip float formatting; `parse` of the
    /// result reproduces `self` exactly.
    pub fn to_text(&self) -> String {
        let n = self.n_modes;
        let mut s = String::new();
        let _ = writeln!(s, "N {n}");
        if self.core_energy != 0.0 {
            let _ = writeln!(s, "E0 {:?}", self.core_energy);
        }
        for i in 0..n {
            for j in i..n {
                let x = self.t(i, j);
                if x != 0.0 {
                    let _ = writeln!(s, "T {} {} {:?}", i + 1, j + 1, x);
                }
            }
        }
        for ([i, j, k, l], x) in self.two_body() {
            let _ = writeln!(s, "V {} {} {} {} {:?}", i + 1, j + 1, k + 1, l + 1, x);
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_text()).map_err(|source| ModelError::Io { path: path.to_path_buf(), source })
    }
}
