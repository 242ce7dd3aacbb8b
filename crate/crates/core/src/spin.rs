//! Spin-1/2 stand-in for an M-scheme configuration space.
//!
//! For `n` spin-1/2 particles the basis of fixed total projection `M` is the
//! set of `n`-bit patterns (bit set = spin up) with `n/2 + M` bits set, in
//! ascending integer order. The total spin squared `S^2` is block diagonal
//! over `M` and has eigenvalues exactly `S(S+1)`; a Heisenberg Hamiltonian
//! commutes with it. This reproduces the structure the fixed-J algorithms
//! rely on (blocks by `M`, a known target eigenvalue, block dimensions that
//! vary widely) with exact combinatorial answers for testing.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::SymmetricOperatorBlock;

/// Largest particle count accepted by the basis generator.
pub const MAX_PARTICLES: u32 = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("M = {m} is not attainable with {n} spin-1/2 particles")]
    InfeasibleProjection { n: u32, m: HalfInt },
    #[error("S = {s} is not a valid total spin for {n} particles")]
    InvalidSpin { n: u32, s: HalfInt },
    #[error("expected {expected} couplings, got {got}")]
    CouplingCount { expected: usize, got: usize },
    #[error("particle count must be in 1..={MAX_PARTICLES}, got {0}")]
    ParticleCount(u32),
    #[error("'{0}' is not an integer or half-integer")]
    NotHalfInteger(String),
}

/// A half-integer quantum number stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const ZERO: Self = Self(0);

    pub fn from_twice(twice: i32) -> Self {
        Self(twice)
    }

    pub fn from_int(v: i32) -> Self {
        Self(2 * v)
    }

    /// Accepts values whose double is an integer, e.g. `1.5`.
    pub fn from_f64(v: f64) -> Option<Self> {
        let t = 2.0 * v;
        (t.is_finite() && t.fract() == 0.0 && t.abs() < i32::MAX as f64).then_some(Self(t as i32))
    }

    pub fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub fn abs(self) -> Self {
        Self(self.0.abs())
    }

    /// `J(J+1)`, exact for half-integers.
    pub fn casimir(self) -> f64 {
        f64::from(self.0) * f64::from(self.0 + 2) / 4.0
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl std::str::FromStr for HalfInt {
    type Err = SpinError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SpinError::NotHalfInteger(s.to_string());
        if let Some((num, den)) = s.split_once('/') {
            let num: i32 = num.trim().parse().map_err(|_| bad())?;
            return match den.trim() {
                "2" => Ok(Self(num)),
                "1" => Ok(Self(2 * num)),
                _ => Err(bad()),
            };
        }
        s.trim().parse::<f64>().ok().and_then(Self::from_f64).ok_or_else(bad)
    }
}

/// Basis states of fixed `M`, ascending as integers.
#[derive(Debug, Clone, PartialEq)]
pub struct MSchemeBasis {
    pub n: u32,
    pub m: HalfInt,
    pub states: Vec<u64>,
}

impl MSchemeBasis {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, state: u64) -> Option<usize> {
        self.states.binary_search(&state).ok()
    }

    fn label(&self) -> String {
        format!("M={}", self.m)
    }
}

fn check_n(n: u32) -> Result<(), SpinError> {
    if n == 0 || n > MAX_PARTICLES {
        return Err(SpinError::ParticleCount(n));
    }
    Ok(())
}

/// Number of up spins for projection `m`, if attainable.
fn ups_for(n: u32, m: HalfInt) -> Option<u32> {
    let twice_ups = n as i32 + m.twice();
    (twice_ups >= 0 && twice_ups % 2 == 0 && twice_ups / 2 <= n as i32).then_some((twice_ups / 2) as u32)
}

pub fn build_basis(n: u32, m: HalfInt) -> Result<MSchemeBasis, SpinError> {
    check_n(n)?;
    let ups = ups_for(n, m).ok_or(SpinError::InfeasibleProjection { n, m })?;
    let mut states = Vec::with_capacity(binomial(n, ups) as usize);
    if ups == 0 {
        states.push(0);
    } else {
        // Gosper's hack enumerates fixed-popcount patterns in ascending order.
        let mut v: u64 = (1u64 << ups) - 1;
        let limit = 1u64 << n;
        while v < limit {
            states.push(v);
            let c = v & v.wrapping_neg();
            let r = v + c;
            v = (((r ^ v) >> 2) / c) | r;
        }
    }
    Ok(MSchemeBasis { n, m, states })
}

/// All attainable projections for `n` particles, ascending.
pub fn projections(n: u32) -> Vec<HalfInt> {
    (0..=n as i32).map(|ups| HalfInt::from_twice(2 * ups - n as i32)).collect()
}

/// `S^2` restricted to the basis.
///
/// Diagonal: `3n/4 + (aligned_pairs - antialigned_pairs) / 2`, which only
/// depends on the up/down counts. Off-diagonal: `1` between states related by
/// exchanging one up and one down spin.
pub fn build_jsq_block(basis: &MSchemeBasis) -> SymmetricOperatorBlock {
    let n = basis.n as usize;
    let ups = ups_for(basis.n, basis.m).unwrap_or(0) as i64;
    let downs = n as i64 - ups;
    let aligned = ups * (ups - 1) / 2 + downs * (downs - 1) / 2;
    let anti = ups * downs;
    let diag = 0.75 * n as f64 + (aligned - anti) as f64 / 2.0;
    let mut triplets = Vec::new();
    for (a, &s) in basis.states.iter().enumerate() {
        triplets.push((a, a, diag));
        for i in 0..n {
            for j in (i + 1)..n {
                if ((s >> i) ^ (s >> j)) & 1 == 1 {
                    let t = s ^ ((1 << i) | (1 << j));
                    if t > s {
                        let b = basis.index_of(t).expect("exchange preserves M");
                        triplets.push((a, b, 1.0));
                    }
                }
            }
        }
    }
    SymmetricOperatorBlock::from_triplets(basis.label(), basis.dim(), triplets)
        .expect("generated entries are unique and in range")
}

/// Bonds of a chain (`n - 1`) or ring (`n`).
pub fn bonds(n: u32, periodic: bool) -> Vec<(usize, usize)> {
    let n = n as usize;
    let mut b: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    if periodic {
        b.push((n - 1, 0));
    }
    b
}

/// Heisenberg Hamiltonian `sum_b J_b s_i . s_j` restricted to the basis.
pub fn build_heisenberg(
    basis: &MSchemeBasis,
    couplings: &[f64],
    periodic: bool,
) -> Result<SymmetricOperatorBlock, SpinError> {
    let bonds = bonds(basis.n, periodic);
    if couplings.len() != bonds.len() {
        return Err(SpinError::CouplingCount { expected: bonds.len(), got: couplings.len() });
    }
    let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (a, &s) in basis.states.iter().enumerate() {
        for (&(i, j), &coupling) in bonds.iter().zip(couplings) {
            if i == j {
                continue;
            }
            let antiparallel = ((s >> i) ^ (s >> j)) & 1 == 1;
            *entries.entry((a, a)).or_insert(0.0) += if antiparallel { -0.25 } else { 0.25 } * coupling;
            if antiparallel {
                let t = s ^ ((1 << i) | (1 << j));
                if t > s {
                    let b = basis.index_of(t).expect("exchange preserves M");
                    *entries.entry((a, b)).or_insert(0.0) += 0.5 * coupling;
                }
            }
        }
    }
    Ok(SymmetricOperatorBlock::from_triplets(
        basis.label(),
        basis.dim(),
        entries.into_iter().map(|((a, b), v)| (a, b, v)),
    )
    .expect("accumulated entries are unique and in range"))
}

pub fn binomial(n: u32, k: u32) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u64;
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n as u64 - i) / (i + 1);
    }
    acc
}

/// Number of total-spin-`s` multiplets of `n` spins, which is also the
/// dimension of the `S = s` eigenspace inside any block with `|M| <= s`.
pub fn multiplicity(n: u32, s: HalfInt) -> Result<u64, SpinError> {
    check_n(n)?;
    let twice_low = n as i32 - s.twice();
    if s.twice() < 0 || twice_low < 0 || twice_low % 2 != 0 {
        return Err(SpinError::InvalidSpin { n, s });
    }
    let low = (twice_low / 2) as u32;
    let below = if low == 0 { 0 } else { binomial(n, low - 1) };
    Ok(binomial(n, low) - below)
}

/// An operator that is block diagonal over `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedOperator {
    blocks: Vec<(HalfInt, SymmetricOperatorBlock)>,
}

impl BlockedOperator {
    /// `blocks` must have strictly increasing `M`.
    pub fn new(blocks: Vec<(HalfInt, SymmetricOperatorBlock)>) -> Option<Self> {
        blocks.windows(2).all(|w| w[0].0 < w[1].0).then_some(Self { blocks })
    }

    pub fn blocks(&self) -> &[(HalfInt, SymmetricOperatorBlock)] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|(_, b)| b.dim()).sum()
    }

    /// Offsets of each block in the concatenated basis.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.blocks
            .iter()
            .map(|(_, b)| {
                let o = acc;
                acc += b.dim();
                o
            })
            .collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|(_, b)| b.dim()).collect()
    }
}

/// A chain or ring of spin-1/2 particles with Heisenberg couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinChain {
    pub n: u32,
    pub couplings: Vec<f64>,
    pub periodic: bool,
}

impl SpinChain {
    pub fn uniform(n: u32, coupling: f64, periodic: bool) -> Self {
        let count = bonds(n, periodic).len();
        Self { n, couplings: vec![coupling; count], periodic }
    }

    pub fn jsq(&self) -> Result<BlockedOperator, SpinError> {
        let mut blocks = Vec::new();
        for m in projections(self.n) {
            blocks.push((m, build_jsq_block(&build_basis(self.n, m)?)));
        }
        Ok(BlockedOperator::new(blocks).expect("projections ascend"))
    }

    pub fn hamiltonian(&self) -> Result<BlockedOperator, SpinError> {
        let mut blocks = Vec::new();
        for m in projections(self.n) {
            let basis = build_basis(self.n, m)?;
            blocks.push((m, build_heisenberg(&basis, &self.couplings, self.periodic)?));
        }
        Ok(BlockedOperator::new(blocks).expect("projections ascend"))
    }
}
