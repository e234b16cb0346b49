//! Mode-indexed containers for the truncated Fourier basis `e^{ikx}`, `|k| <= K`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Japanese bracket `<k> = |k| + 1`.
#[inline]
pub fn bracket(k: i64) -> f64 {
    k.unsigned_abs() as f64 + 1.0
}

/// Truncation parameters: spatial cutoff `K` and middle-block half-width `N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeGrid {
    k_max: usize,
    n_mid: usize,
}

impl ModeGrid {
    pub fn new(k_max: usize, n_mid: usize) -> Result<Self> {
        if n_mid < 1 || n_mid >= k_max {
            return Err(Error::InvalidGrid(format!("need 1 <= N < K, got K = {k_max}, N = {n_mid}")));
        }
        Ok(Self { k_max, n_mid })
    }

    /// Grid used where no middle block is involved (propagation only).
    pub fn with_cutoff(k_max: usize) -> Result<Self> {
        Self::new(k_max, (k_max / 3).max(1))
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn n_mid(&self) -> usize {
        self.n_mid
    }

    pub fn dim(&self) -> usize {
        2 * self.k_max + 1
    }

    pub fn contains(&self, k: i64) -> bool {
        k.unsigned_abs() as usize <= self.k_max
    }

    /// Offset map `k -> k + K`.
    #[inline]
    pub fn index(&self, k: i64) -> usize {
        debug_assert!(self.contains(k));
        (k + self.k_max as i64) as usize
    }

    #[inline]
    pub fn mode(&self, index: usize) -> i64 {
        index as i64 - self.k_max as i64
    }

    pub fn modes(&self) -> impl DoubleEndedIterator<Item = i64> + Clone {
        let k = self.k_max as i64;
        -k..=k
    }

    pub fn check_mode(&self, k: i64) -> Result<()> {
        if self.contains(k) {
            Ok(())
        } else {
            Err(Error::ModeOutOfRange { k, k_max: self.k_max })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    Lab,
    Rotating,
}

/// Mode amplitudes `psi_k`, `k in [-K, K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    k_max: usize,
    amplitudes: Vec<C64>,
    frame: Frame,
}

impl StateVector {
    pub fn zeros(k_max: usize, frame: Frame) -> Self {
        Self { k_max, amplitudes: vec![C64::new(0.0, 0.0); 2 * k_max + 1], frame }
    }

    /// Kronecker delta at mode `k0`, lab frame.
    pub fn basis(k_max: usize, k0: i64) -> Self {
        let mut s = Self::zeros(k_max, Frame::Lab);
        s.set(k0, C64::new(1.0, 0.0));
        s
    }

    pub fn from_amplitudes(k_max: usize, amplitudes: Vec<C64>, frame: Frame) -> Result<Self> {
        if amplitudes.len() != 2 * k_max + 1 {
            return Err(Error::DimensionMismatch(format!(
                "state of length {} on a grid with K = {k_max}",
                amplitudes.len()
            )));
        }
        Ok(Self { k_max, amplitudes, frame })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    /// Amplitude at mode `k`; zero outside the grid.
    pub fn get(&self, k: i64) -> C64 {
        if k.unsigned_abs() as usize > self.k_max {
            return C64::new(0.0, 0.0);
        }
        self.amplitudes[(k + self.k_max as i64) as usize]
    }

    pub fn set(&mut self, k: i64, value: C64) {
        let i = (k + self.k_max as i64) as usize;
        self.amplitudes[i] = value;
    }

    /// Multiplies mode `k` by `e^{(t/(ih)) k^2}` (rotating -> lab) or its inverse.
    pub fn to_frame(&self, target: Frame, t: f64, h: f64) -> Self {
        if target == self.frame {
            return self.clone();
        }
        let sign = match target {
            Frame::Lab => -1.0,
            Frame::Rotating => 1.0,
        };
        let k_max = self.k_max as i64;
        let amplitudes = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let k = i as i64 - k_max;
                a * C64::from_polar(1.0, sign * t * (k * k) as f64 / h)
            })
            .collect();
        Self { k_max: self.k_max, amplitudes, frame: target }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// Dense complex `(2K+1) x (2K+1)` matrix addressed by mode pairs `(j, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    k_max: usize,
    label: String,
    entries: DMatrix<C64>,
}

impl OperatorMatrix {
    pub fn zeros(k_max: usize, label: impl Into<String>) -> Self {
        let n = 2 * k_max + 1;
        Self { k_max, label: label.into(), entries: DMatrix::zeros(n, n) }
    }

    pub fn identity(k_max: usize, label: impl Into<String>) -> Self {
        let n = 2 * k_max + 1;
        Self { k_max, label: label.into(), entries: DMatrix::identity(n, n) }
    }

    pub fn from_diagonal(k_max: usize, label: impl Into<String>, f: impl Fn(i64) -> C64) -> Self {
        let mut m = Self::zeros(k_max, label);
        for k in -(k_max as i64)..=k_max as i64 {
            m.set(k, k, f(k));
        }
        m
    }

    pub fn from_fn(k_max: usize, label: impl Into<String>, f: impl Fn(i64, i64) -> C64) -> Self {
        let n = 2 * k_max + 1;
        let off = k_max as i64;
        let entries = DMatrix::from_fn(n, n, |r, c| f(r as i64 - off, c as i64 - off));
        Self { k_max, label: label.into(), entries }
    }

    pub fn from_matrix(k_max: usize, label: impl Into<String>, entries: DMatrix<C64>) -> Result<Self> {
        let n = 2 * k_max + 1;
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix on a grid with K = {k_max}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self { k_max, label: label.into(), entries })
    }

    /// Assembles a matrix from lab-frame columns ordered `k0 = -K..=K`.
    pub fn from_columns(k_max: usize, label: impl Into<String>, columns: &[StateVector]) -> Result<Self> {
        let n = 2 * k_max + 1;
        if columns.len() != n || columns.iter().any(|c| c.k_max() != k_max) {
            return Err(Error::DimensionMismatch("column count or length".into()));
        }
        let entries = DMatrix::from_fn(n, n, |r, c| columns[c].amplitudes()[r]);
        Ok(Self { k_max, label: label.into(), entries })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn dim(&self) -> usize {
        2 * self.k_max + 1
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.entries
    }

    #[inline]
    pub fn get(&self, j: i64, k: i64) -> C64 {
        let off = self.k_max as i64;
        self.entries[((j + off) as usize, (k + off) as usize)]
    }

    #[inline]
    pub fn set(&mut self, j: i64, k: i64, value: C64) {
        let off = self.k_max as i64;
        self.entries[((j + off) as usize, (k + off) as usize)] = value;
    }

    pub fn column(&self, k: i64) -> StateVector {
        let c = (k + self.k_max as i64) as usize;
        let amps = self.entries.column(c).iter().copied().collect();
        StateVector::from_amplitudes(self.k_max, amps, Frame::Lab).expect("column length")
    }

    pub fn adjoint(&self) -> Self {
        Self { k_max: self.k_max, label: format!("{}*", self.label), entries: self.entries.adjoint() }
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.k_max, rhs.k_max, "grid mismatch in product");
        Self {
            k_max: self.k_max,
            label: format!("{}.{}", self.label, rhs.label),
            entries: &self.entries * &rhs.entries,
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.k_max, rhs.k_max, "grid mismatch in sum");
        Self {
            k_max: self.k_max,
            label: format!("{}+{}", self.label, rhs.label),
            entries: &self.entries + &rhs.entries,
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!(self.k_max, rhs.k_max, "grid mismatch in difference");
        Self {
            k_max: self.k_max,
            label: format!("{}-{}", self.label, rhs.label),
            entries: &self.entries - &rhs.entries,
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self { k_max: self.k_max, label: self.label.clone(), entries: &self.entries * factor }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest `|entry|` over `|j|, |k| <= limit`.
    pub fn max_abs_within(&self, limit: usize) -> f64 {
        self.entries_within(limit).map(|(_, _, z)| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other).max_abs()
    }

    pub fn max_abs_diff_within(&self, other: &Self, limit: usize) -> f64 {
        self.sub(other).max_abs_within(limit)
    }

    /// Iterates `(j, k, entry)` over `|j|, |k| <= limit`.
    pub fn entries_within(&self, limit: usize) -> impl Iterator<Item = (i64, i64, C64)> + '_ {
        let l = limit.min(self.k_max) as i64;
        (-l..=l).flat_map(move |k| (-l..=l).map(move |j| (j, k, self.get(j, k))))
    }

    pub fn iter_entries(&self) -> impl Iterator<Item = (i64, i64, C64)> + '_ {
        self.entries_within(self.k_max)
    }

    /// Copy of the `|j|, |k| <= limit` block as a plain matrix.
    pub fn block(&self, limit: usize) -> DMatrix<C64> {
        let off = self.k_max - limit;
        let n = 2 * limit + 1;
        self.entries.view((off, off), (n, n)).into_owned()
    }

    /// Embeds a centred square block into a copy of `self`, overwriting entries.
    pub fn with_block(&self, block: &DMatrix<C64>) -> Self {
        let n = block.nrows();
        let off = self.k_max - (n - 1) / 2;
        let mut out = self.clone();
        out.entries.view_mut((off, off), (n, n)).copy_from(block);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_offset_map_is_a_bijection() {
        let g = ModeGrid::new(5, 1).unwrap();
        let idx: Vec<usize> = g.modes().map(|k| g.index(k)).collect();
        assert_eq!(idx, (0..11).collect::<Vec<_>>());
        assert!(g.modes().all(|k| g.mode(g.index(k)) == k));
    }

    #[test]
    fn grid_rejects_bad_block() {
        assert!(ModeGrid::new(4, 4).is_err());
        assert!(ModeGrid::new(4, 0).is_err());
    }

    #[test]
    fn frame_round_trip() {
        let amps = (0..9).map(|i| C64::new(i as f64, 1.0 - i as f64)).collect();
        let s = StateVector::from_amplitudes(4, amps, Frame::Lab).unwrap();
        let back = s.to_frame(Frame::Rotating, 1.3, 0.7).to_frame(Frame::Lab, 1.3, 0.7);
        assert!(s.max_abs_diff(&back) < 1e-14);
    }

    #[test]
    fn block_round_trip() {
        let m = OperatorMatrix::from_fn(4, "m", |j, k| C64::new(j as f64, k as f64));
        let b = m.block(2);
        assert_eq!(b[(0, 0)], m.get(-2, -2));
        assert_eq!(m.with_block(&b), m);
    }
}
