//! Torus geometry, bit-packed configurations and the local moves.

use std::io::{self, Read, Write};

use num_traits::Zero;
use thiserror::Error;

use crate::exact::{rational_from_int, ExactVector};
use crate::velocity::{Quadruple, VelocitySet};

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("sites {x} and {y} are not nearest neighbours")]
    NotNeighbors { x: usize, y: usize },
    #[error("collision {q:?} is not enabled at site {x}")]
    CollisionNotEnabled { x: usize, q: Quadruple },
    #[error("box of radius {m} does not fit in a torus of side {n}")]
    BoxTooLarge { m: usize, n: usize },
    #[error("invalid torus: dimension {d}, side {n}")]
    InvalidTorus { d: usize, n: usize },
    #[error("species count {got} does not match the velocity set ({expected})")]
    SpeciesMismatch { expected: usize, got: usize },
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Discrete torus `𝕋_N^d` with row-major site indices (coordinate 0 fastest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Torus {
    d: usize,
    n: usize,
    sites: usize,
    strides: Vec<usize>,
    /// `2d` entries per site: `x + e_j` at `2j`, `x − e_j` at `2j + 1`.
    neighbors: Vec<u32>,
}

impl Torus {
    pub fn new(d: usize, n: usize) -> Result<Self, LatticeError> {
        let sites = n.checked_pow(d as u32).filter(|&s| d >= 1 && n >= 1 && s <= u32::MAX as usize);
        let Some(sites) = sites else {
            return Err(LatticeError::InvalidTorus { d, n });
        };
        let strides: Vec<usize> = (0..d).map(|j| n.pow(j as u32)).collect();
        let mut t = Self { d, n, sites, strides, neighbors: Vec::with_capacity(2 * d * sites) };
        for x in 0..sites {
            for j in 0..d {
                t.neighbors.push(t.shift(x, j, 1) as u32);
                t.neighbors.push(t.shift(x, j, -1) as u32);
            }
        }
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn coord(&self, x: usize) -> Vec<usize> {
        (0..self.d).map(|j| (x / self.strides[j]) % self.n).collect()
    }

    pub fn index(&self, coord: &[usize]) -> usize {
        coord.iter().zip(&self.strides).map(|(c, s)| (c % self.n) * s).sum()
    }

    /// `x + step·e_axis` with wrap-around.
    pub fn shift(&self, x: usize, axis: usize, step: isize) -> usize {
        let c = (x / self.strides[axis]) % self.n;
        let nc = (c as isize + step).rem_euclid(self.n as isize) as usize;
        x + nc * self.strides[axis] - c * self.strides[axis]
    }

    /// Precomputed neighbour; `dir = 2·axis` for `+e_axis`, `2·axis + 1` for `−e_axis`.
    #[inline]
    pub fn neighbor(&self, x: usize, dir: usize) -> usize {
        self.neighbors[2 * self.d * x + dir] as usize
    }

    pub fn neighbors(&self, x: usize) -> &[u32] {
        &self.neighbors[2 * self.d * x..2 * self.d * (x + 1)]
    }

    /// Directions `dir` with `neighbor(x, dir) == y` (two of them when `N = 2`).
    pub fn directions(&self, x: usize, y: usize) -> Vec<usize> {
        (0..2 * self.d).filter(|&dir| self.neighbor(x, dir) == y).collect()
    }
}

/// Unit displacement `(axis, ±1)` of a direction index.
#[inline]
pub fn direction_step(dir: usize) -> (usize, f64) {
    (dir / 2, if dir.is_multiple_of(2) { 1.0 } else { -1.0 })
}

/// Occupancies `η_x(v)` packed species-major: bit `v·N^d + x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    torus: Torus,
    species: usize,
    bits: Vec<u64>,
    counts: Vec<u64>,
}

impl Configuration {
    pub fn empty(torus: Torus, species: usize) -> Self {
        let nbits = torus.sites() * species;
        Self { torus, species, bits: vec![0; nbits.div_ceil(64)], counts: vec![0; species] }
    }

    pub fn full(torus: Torus, species: usize) -> Self {
        let mut c = Self::empty(torus, species);
        for v in 0..species {
            for x in 0..c.torus.sites() {
                c.set(x, v, true);
            }
        }
        c
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn species(&self) -> usize {
        self.species
    }

    pub fn bit_len(&self) -> usize {
        self.torus.sites() * self.species
    }

    #[inline]
    fn bit(&self, x: usize, v: usize) -> usize {
        v * self.torus.sites() + x
    }

    #[inline]
    pub fn get(&self, x: usize, v: usize) -> bool {
        let b = self.bit(x, v);
        (self.bits[b >> 6] >> (b & 63)) & 1 == 1
    }

    /// In-place write; keeps the per-species counts current.
    #[inline]
    pub fn set(&mut self, x: usize, v: usize, on: bool) {
        let b = self.bit(x, v);
        let mask = 1u64 << (b & 63);
        let word = &mut self.bits[b >> 6];
        let was = *word & mask != 0;
        if was != on {
            *word ^= mask;
            if on {
                self.counts[v] += 1;
            } else {
                self.counts[v] -= 1;
            }
        }
    }

    /// Species occupied at `x` as a bit mask (bit `v`).
    pub fn site_mask(&self, x: usize) -> u64 {
        (0..self.species).fold(0, |m, v| m | (u64::from(self.get(x, v)) << v))
    }

    /// Per-species particle counts `K_v`.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `Σ_x 𝐈(η_x)` evaluated from the cached counts.
    pub fn totals(&self, vs: &VelocitySet) -> Vec<f64> {
        let mut t = vec![0.0; vs.dim() + 1];
        for (v, &k) in self.counts.iter().enumerate() {
            t.iter_mut().zip(vs.lifted(v)).for_each(|(ti, li)| *ti += k as f64 * li);
        }
        t
    }

    /// `Σ_x 𝐈(η_x)` in exact symbol arithmetic.
    pub fn totals_exact(&self, vs: &VelocitySet) -> ExactVector {
        exact_mass_momentum(vs, &self.counts)
    }

    /// Recompute the counts from the bits and compare with the cache.
    pub fn verify_totals(&self) -> bool {
        (0..self.species).all(|v| {
            let k = (0..self.torus.sites()).filter(|&x| self.get(x, v)).count() as u64;
            k == self.counts[v]
        })
    }

    /// `𝐈(η_x) = Σ_v 𝐯 η_x(v)`.
    pub fn local_mass_momentum(&self, vs: &VelocitySet, x: usize) -> Vec<f64> {
        let mut out = vec![0.0; vs.dim() + 1];
        for v in 0..self.species {
            if self.get(x, v) {
                out.iter_mut().zip(vs.lifted(v)).for_each(|(o, l)| *o += l);
            }
        }
        out
    }

    /// Mean of `𝐈` over the wrapped box `x + Λ_M`.
    pub fn block_average(&self, vs: &VelocitySet, x: usize, m: usize) -> Result<Vec<f64>, LatticeError> {
        let bx = LatticeBox::new(&self.torus, x, m)?;
        let mut out = vec![0.0; vs.dim() + 1];
        for &z in bx.members() {
            out.iter_mut().zip(self.local_mass_momentum(vs, z)).for_each(|(o, l)| *o += l);
        }
        let size = bx.members().len() as f64;
        out.iter_mut().for_each(|o| *o /= size);
        Ok(out)
    }

    /// Exchange the occupancies of species `v` at neighbouring sites `x`, `y`.
    pub fn apply_swap(&mut self, x: usize, y: usize, v: usize) -> Result<(), LatticeError> {
        if x == y || self.torus.directions(x, y).is_empty() {
            return Err(LatticeError::NotNeighbors { x, y });
        }
        self.swap_unchecked(x, y, v);
        Ok(())
    }

    #[inline]
    pub(crate) fn swap_unchecked(&mut self, x: usize, y: usize, v: usize) {
        let (a, b) = (self.get(x, v), self.get(y, v));
        if a != b {
            self.set(x, v, b);
            self.set(y, v, a);
        }
    }

    /// `p(x, q, η) = η_x(v) η_x(w) (1 − η_x(v')) (1 − η_x(w'))`.
    #[inline]
    pub fn collision_indicator(&self, x: usize, q: Quadruple) -> bool {
        self.get(x, q.v) && self.get(x, q.w) && !self.get(x, q.v_out) && !self.get(x, q.w_out)
    }

    pub fn apply_collision(&mut self, x: usize, q: Quadruple) -> Result<(), LatticeError> {
        if !self.collision_indicator(x, q) {
            return Err(LatticeError::CollisionNotEnabled { x, q });
        }
        self.collide_unchecked(x, q);
        Ok(())
    }

    #[inline]
    pub(crate) fn collide_unchecked(&mut self, x: usize, q: Quadruple) {
        self.set(x, q.v, false);
        self.set(x, q.w, false);
        self.set(x, q.v_out, true);
        self.set(x, q.w_out, true);
    }

    /// Occupancy bits read as an integer (bit `v·N^d + x`); at most 64 bits.
    pub fn to_index(&self) -> u64 {
        assert!(self.bit_len() <= 64, "configuration has more than 64 bits");
        self.bits.first().copied().unwrap_or(0)
    }

    pub fn from_index(torus: Torus, species: usize, index: u64) -> Self {
        let mut c = Self::empty(torus, species);
        assert!(c.bit_len() <= 64, "configuration has more than 64 bits");
        for b in 0..c.bit_len() {
            if (index >> b) & 1 == 1 {
                c.set(b % c.torus.sites(), b / c.torus.sites(), true);
            }
        }
        c
    }

    /// Binary snapshot; see [`read_snapshot`] for the layout.
    pub fn write_snapshot<W: Write>(&self, vs: &VelocitySet, mut w: W) -> Result<(), LatticeError> {
        if vs.len() != self.species {
            return Err(LatticeError::SpeciesMismatch { expected: vs.len(), got: self.species });
        }
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.torus.dim() as u16).to_le_bytes())?;
        w.write_all(&(self.torus.side() as u32).to_le_bytes())?;
        w.write_all(&(self.species as u16).to_le_bytes())?;
        for v in vs.velocities() {
            let label = vs.render(v);
            w.write_all(&(label.len() as u16).to_le_bytes())?;
            w.write_all(label.as_bytes())?;
        }
        let n = self.bit_len();
        w.write_all(&(n as u64).to_le_bytes())?;
        let mut bytes = vec![0u8; n.div_ceil(8)];
        for (i, byte) in bytes.iter_mut().enumerate() {
            *byte = (self.bits[i / 8] >> (8 * (i % 8))) as u8;
        }
        w.write_all(&bytes)?;
        Ok(())
    }
}

/// `Σ_v K_v 𝐯` in exact arithmetic, as a `(d+1)`-vector.
pub fn exact_mass_momentum(vs: &VelocitySet, counts: &[u64]) -> ExactVector {
    let b = vs.basis().len();
    let mut mass = vec![rational_from_int(0); b];
    mass[0] = rational_from_int(counts.iter().sum::<u64>() as i64);
    let mut momentum = ExactVector::zero(vs.dim(), b);
    for (v, &k) in counts.iter().enumerate() {
        if !k.is_zero() {
            momentum = &momentum + &vs.velocities()[v].scale(&rational_from_int(k as i64));
        }
    }
    let mut rows = vec![mass];
    rows.extend(momentum.coeffs().iter().cloned());
    ExactVector::from_coeffs(rows)
}

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"LGKC";
pub const SNAPSHOT_VERSION: u16 = 1;

/// Read a snapshot written by [`Configuration::write_snapshot`].
///
/// Layout, all integers little-endian:
///
/// | field | type |
/// |---|---|
/// | magic `LGKC` | 4 bytes |
/// | version | u16 |
/// | d | u16 |
/// | N | u32 |
/// | species count S | u16 |
/// | S labels | u16 length + UTF-8 |
/// | bit count `S·N^d` | u64 |
/// | bits | `⌈bits/8⌉` bytes, bit `v·N^d + x` at byte `b/8`, position `b%8` (LSB first) |
pub fn read_snapshot<R: Read>(mut r: R) -> Result<(Configuration, Vec<String>), LatticeError> {
    let bad = |m: &str| LatticeError::Snapshot(m.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u16b = [0u8; 2];
    let mut read_u16 = |r: &mut R| -> io::Result<u16> {
        r.read_exact(&mut u16b)?;
        Ok(u16::from_le_bytes(u16b))
    };
    if read_u16(&mut r)? != SNAPSHOT_VERSION {
        return Err(bad("unsupported version"));
    }
    let d = read_u16(&mut r)? as usize;
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let n = u32::from_le_bytes(u32b) as usize;
    let s = read_u16(&mut r)? as usize;
    let mut labels = Vec::with_capacity(s);
    for _ in 0..s {
        let len = read_u16(&mut r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        labels.push(String::from_utf8(buf).map_err(|_| bad("label is not UTF-8"))?);
    }
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u64b)?;
    let nbits = u64::from_le_bytes(u64b) as usize;
    let torus = Torus::new(d, n)?;
    let mut cfg = Configuration::empty(torus, s);
    if nbits != cfg.bit_len() {
        return Err(bad("bit count does not match header"));
    }
    let mut bytes = vec![0u8; nbits.div_ceil(8)];
    r.read_exact(&mut bytes)?;
    for b in 0..nbits {
        if (bytes[b / 8] >> (b % 8)) & 1 == 1 {
            let sites = cfg.torus.sites();
            cfg.set(b % sites, b / sites, true);
        }
    }
    Ok((cfg, labels))
}

/// Box `x + Λ_M` on the torus, `Λ_M = {−M, …, M}^d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeBox {
    center: usize,
    radius: usize,
    members: Vec<usize>,
}

impl LatticeBox {
    pub fn new(torus: &Torus, center: usize, radius: usize) -> Result<Self, LatticeError> {
        if 2 * radius + 1 > torus.side() {
            return Err(LatticeError::BoxTooLarge { m: radius, n: torus.side() });
        }
        let d = torus.dim();
        let side = 2 * radius + 1;
        let mut members = Vec::with_capacity(side.pow(d as u32));
        for k in 0..side.pow(d as u32) {
            let mut x = center;
            let mut rest = k;
            for j in 0..d {
                let off = (rest % side) as isize - radius as isize;
                rest /= side;
                x = torus.shift(x, j, off);
            }
            members.push(x);
        }
        Ok(Self { center, radius, members })
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity::presets::{model_one, root_two};

    fn ring(n: usize, s: usize) -> Configuration {
        Configuration::empty(Torus::new(1, n).unwrap(), s)
    }

    #[test]
    fn torus_coordinates_round_trip() {
        let t = Torus::new(3, 4).unwrap();
        for x in 0..t.sites() {
            assert_eq!(t.index(&t.coord(x)), x);
            for j in 0..3 {
                assert_eq!(t.shift(t.shift(x, j, 1), j, -1), x);
                assert_eq!(t.neighbor(x, 2 * j), t.shift(x, j, 1));
                assert_eq!(t.neighbor(x, 2 * j + 1), t.shift(x, j, -1));
            }
            assert_eq!(t.shift(t.shift(x, 0, 3), 0, 2), t.shift(x, 0, 5));
        }
        assert!(Torus::new(0, 4).is_err());
    }

    #[test]
    fn local_mass_momentum_examples() {
        let vs = model_one(1);
        let mut c = ring(5, 2);
        assert_eq!(c.local_mass_momentum(&vs, 2), vec![0.0, 0.0]);
        c.set(2, 0, true);
        assert_eq!(c.local_mass_momentum(&vs, 2), vec![1.0, 1.0]);
        c.set(2, 1, true);
        assert_eq!(c.local_mass_momentum(&vs, 2), vec![2.0, 0.0]);
    }

    #[test]
    fn block_average_examples() {
        let vs = model_one(1);
        let full = Configuration::full(Torus::new(1, 7).unwrap(), 2);
        for m in 0..=3 {
            assert_eq!(full.block_average(&vs, 3, m).unwrap(), vec![2.0, 0.0]);
        }
        let mut c = ring(7, 2);
        c.set(1, 0, true);
        c.set(4, 1, true);
        assert_eq!(c.block_average(&vs, 1, 0).unwrap(), c.local_mass_momentum(&vs, 1));
        let whole = c.block_average(&vs, 0, 3).unwrap();
        let t = c.totals(&vs);
        assert!(whole.iter().zip(&t).all(|(a, b)| (a - b / 7.0).abs() < 1e-15));
        assert!(matches!(c.block_average(&vs, 0, 4), Err(LatticeError::BoxTooLarge { .. })));
    }

    #[test]
    fn swap_is_an_involution() {
        let vs = root_two();
        let mut c = ring(6, 4);
        c.set(2, 1, true);
        c.set(3, 2, true);
        let before = c.clone();
        c.apply_swap(2, 3, 1).unwrap();
        assert!(c.get(3, 1) && !c.get(2, 1));
        assert_eq!(c.totals_exact(&vs), before.totals_exact(&vs));
        c.apply_swap(2, 3, 1).unwrap();
        assert_eq!(c, before);
        c.apply_swap(0, 5, 0).unwrap();
        assert_eq!(c, before);
        assert!(matches!(c.apply_swap(0, 2, 0), Err(LatticeError::NotNeighbors { .. })));
    }

    #[test]
    fn collision_moves_and_reverses() {
        let vs = root_two();
        let q = Quadruple { v: 0, w: 1, v_out: 2, w_out: 3 };
        let mut c = ring(3, 4);
        c.set(1, 0, true);
        c.set(1, 1, true);
        let before = c.clone();
        assert_eq!(c.local_mass_momentum(&vs, 1), vec![2.0, 0.0]);
        c.apply_collision(1, q).unwrap();
        assert!(c.get(1, 2) && c.get(1, 3) && !c.get(1, 0) && !c.get(1, 1));
        assert_eq!(c.local_mass_momentum(&vs, 1), vec![2.0, 0.0]);
        c.apply_collision(1, q.reverse()).unwrap();
        assert_eq!(c, before);
        c.set(1, 2, true);
        assert!(matches!(c.apply_collision(1, q), Err(LatticeError::CollisionNotEnabled { .. })));
    }

    #[test]
    fn indicator_reverse_identity_on_all_site_patterns() {
        let vs = root_two();
        for pattern in 0u64..16 {
            for &q in vs.collision_set() {
                let mut c = ring(3, 4);
                for v in 0..4 {
                    c.set(0, v, (pattern >> v) & 1 == 1);
                }
                if c.collision_indicator(0, q) {
                    c.collide_unchecked(0, q);
                    assert!(c.collision_indicator(0, q.reverse()));
                    c.collide_unchecked(0, q.reverse());
                    assert_eq!(c.site_mask(0), pattern);
                }
            }
        }
    }

    #[test]
    fn indicator_examples() {
        let q = Quadruple { v: 0, w: 1, v_out: 2, w_out: 3 };
        let mut c = ring(3, 4);
        assert!(!c.collision_indicator(0, q));
        c.set(0, 0, true);
        c.set(0, 1, true);
        assert!(c.collision_indicator(0, q));
        c.set(0, 2, true);
        assert!(!c.collision_indicator(0, q));
    }

    #[test]
    fn index_round_trip() {
        let t = Torus::new(1, 3).unwrap();
        for idx in 0..64u64 {
            let c = Configuration::from_index(t.clone(), 2, idx);
            assert_eq!(c.to_index(), idx);
            assert!(c.verify_totals());
        }
    }

    #[test]
    fn snapshot_golden_bytes() {
        let vs = model_one(1);
        let mut c = ring(5, 2);
        c.set(0, 0, true);
        c.set(4, 0, true);
        c.set(2, 1, true);
        let mut buf = Vec::new();
        c.write_snapshot(&vs, &mut buf).unwrap();
        let mut want = Vec::new();
        want.extend_from_slice(b"LGKC");
        want.extend_from_slice(&[1, 0, 1, 0, 5, 0, 0, 0, 2, 0]);
        want.extend_from_slice(&[3, 0]);
        want.extend_from_slice(b"(1)");
        want.extend_from_slice(&[4, 0]);
        want.extend_from_slice(b"(-1)");
        want.extend_from_slice(&[10, 0, 0, 0, 0, 0, 0, 0]);
        // bits 0, 4 (species 0) and 5 + 2 = 7 (species 1)
        want.extend_from_slice(&[0b1001_0001, 0b0000_0000]);
        assert_eq!(buf, want);
        let (back, labels) = read_snapshot(&buf[..]).unwrap();
        assert_eq!(back, c);
        assert_eq!(labels, vec!["(1)".to_string(), "(-1)".to_string()]);
        assert!(read_snapshot(&b"XXXX"[..]).is_err());
    }
}
