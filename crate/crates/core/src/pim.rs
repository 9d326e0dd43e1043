//! Bit-level model of the L1 array in compute mode.
//!
//! Coefficients are stored as two's-complement words. A dot product runs
//! bit-serially over the bits of X: every read of an array row ANDs each
//! stored bit with the X bit broadcast on its read word line, the per-word
//! shift-add unit recombines the 16 bit positions, and the per-bank adder
//! reduction sums the words. X bit `p` is served by replica bank
//! `p % x_bits` of the row's bank group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheGeometry {
    pub banks: usize,
    pub rows: usize,
    pub cols: usize,
    pub word_bits: u32,
    pub line_bytes: usize,
    pub x_bits: usize,
}

impl Default for CacheGeometry {
    fn default() -> Self {
        Self { banks: 16, rows: 256, cols: 256, word_bits: 16, line_bytes: 64, x_bits: 2 }
    }
}

impl CacheGeometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(format!("geometry: {m}")));
        if self.banks == 0 || self.rows == 0 || self.cols == 0 || self.line_bytes == 0 || self.x_bits == 0 {
            return bad("all dimensions must be positive");
        }
        if !(2..=32).contains(&self.word_bits) {
            return bad("word_bits must be in 2..=32");
        }
        if self.cols % self.word_bits as usize != 0 {
            return bad("cols must be a multiple of word_bits");
        }
        if (self.line_bytes * 8) % self.word_bits as usize != 0 {
            return bad("line size must hold whole words");
        }
        if self.words_per_line() % self.words_per_row() != 0 {
            return bad("a line must span whole array rows");
        }
        if self.banks % self.x_bits != 0 {
            return bad("banks must be a multiple of x_bits");
        }
        Ok(())
    }

    pub fn words_per_row(&self) -> usize {
        self.cols / self.word_bits as usize
    }

    pub fn words_per_line(&self) -> usize {
        self.line_bytes * 8 / self.word_bits as usize
    }

    pub fn rows_per_line(&self) -> usize {
        self.words_per_line() / self.words_per_row()
    }

    /// Bank groups; each group holds `x_bits` identical replicas.
    pub fn groups(&self) -> usize {
        self.banks / self.x_bits
    }

    pub fn capacity_lines(&self) -> usize {
        self.groups() * (self.rows / self.rows_per_line())
    }

    pub fn lines_for(&self, words: usize) -> usize {
        words.div_ceil(self.words_per_line()).max(1)
    }

    /// Bank group and first array row holding `line`.
    pub fn line_slot(&self, line: usize) -> (usize, usize) {
        (line % self.groups(), (line / self.groups()) * self.rows_per_line())
    }
}

/// Placement of one stored row (coefficients followed by its rhs word).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub first_line: usize,
    pub lines: usize,
    pub words: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mapping {
    pub placements: Vec<Placement>,
    pub total_lines: usize,
    pub overflow: bool,
}

impl Mapping {
    pub fn lines_of(&self, row: usize) -> std::ops::Range<usize> {
        let p = self.placements[row];
        p.first_line..p.first_line + p.lines
    }

    /// Replica banks serving `line`.
    pub fn replicas(geometry: &CacheGeometry, line: usize) -> std::ops::Range<usize> {
        let (group, _) = geometry.line_slot(line);
        group * geometry.x_bits..(group + 1) * geometry.x_bits
    }
}

/// Raw array contents, `banks × rows × words_per_row` words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankState {
    pub geometry: CacheGeometry,
    words: Vec<u32>,
}

impl BankState {
    pub fn new(geometry: CacheGeometry) -> Self {
        let len = geometry.banks * geometry.rows * geometry.words_per_row();
        Self { geometry, words: vec![0; len] }
    }

    fn index(&self, bank: usize, row: usize, word: usize) -> usize {
        (bank * self.geometry.rows + row) * self.geometry.words_per_row() + word
    }

    pub fn word(&self, bank: usize, row: usize, word: usize) -> u32 {
        self.words[self.index(bank, row, word)]
    }

    pub fn row_words(&self, bank: usize, row: usize) -> &[u32] {
        let start = self.index(bank, row, 0);
        &self.words[start..start + self.geometry.words_per_row()]
    }

    fn set(&mut self, bank: usize, row: usize, word: usize, v: u32) {
        let i = self.index(bank, row, word);
        self.words[i] = v;
    }
}

fn encode(value: i64, width: u32) -> Result<u32> {
    let half = 1i64 << (width - 1);
    if value < -half || value >= half {
        return Err(Error::Quantization { value: value as i128, width });
    }
    Ok((value as u64 & ((1u64 << width) - 1)) as u32)
}

fn decode(word: u32, width: u32) -> i64 {
    let shift = 64 - width;
    ((word as i64) << shift) >> shift
}

/// Store `rows` top to bottom, each starting on a fresh line. Lines past
/// the array capacity are left unplaced and flag an overflow.
pub fn store_coefficients(rows: &[Vec<i64>], geometry: &CacheGeometry) -> Result<(Mapping, BankState)> {
    geometry.validate()?;
    let mut state = BankState::new(*geometry);
    let mut placements = Vec::with_capacity(rows.len());
    let mut line = 0;
    let cap = geometry.capacity_lines();
    let (wpl, wpr) = (geometry.words_per_line(), geometry.words_per_row());
    for row in rows {
        let lines = geometry.lines_for(row.len());
        placements.push(Placement { first_line: line, lines, words: row.len() });
        for (w, &v) in row.iter().enumerate() {
            let word = encode(v, geometry.word_bits)?;
            let l = line + w / wpl;
            if l >= cap {
                continue;
            }
            let (_, base_row) = geometry.line_slot(l);
            let arow = base_row + (w % wpl) / wpr;
            for bank in Mapping::replicas(geometry, l) {
                state.set(bank, arow, w % wpr, word);
            }
        }
        line += lines;
    }
    Ok((Mapping { placements, total_lines: line, overflow: line > cap }, state))
}

/// One 8T cell on the compute port: the read bit line falls below the
/// sense threshold only when both the stored bit and the word-line bit are
/// set; that is the one case that counts as a discharge.
pub fn bitcell_and(stored_bit: u8, x_bit: u8, discharges: &mut u64) -> u8 {
    let out = stored_bit & x_bit & 1;
    *discharges += out as u64;
    out
}

/// Row buffer after one compute read of an array row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowBuffer {
    /// `coefficient × x_bit` per word.
    pub partials: Vec<i64>,
    pub discharges: u64,
}

pub fn row_dot_product(state: &BankState, bank: usize, row: usize, x_bits: &[u8]) -> Result<RowBuffer> {
    let wpr = state.geometry.words_per_row();
    if x_bits.len() != wpr {
        return Err(Error::DimensionMismatch { expected: wpr, got: x_bits.len() });
    }
    let width = state.geometry.word_bits;
    let mut discharges = 0;
    let partials = state
        .row_words(bank, row)
        .iter()
        .zip(x_bits)
        .map(|(&word, &xb)| {
            // shift-add over the word's columns; the top column carries the
            // negative two's-complement weight
            (0..width).fold(0i64, |acc, k| {
                let bit = bitcell_and(((word >> k) & 1) as u8, xb, &mut discharges) as i64;
                if k == width - 1 {
                    acc - (bit << k)
                } else {
                    acc + (bit << k)
                }
            })
        })
        .collect();
    Ok(RowBuffer { partials, discharges })
}

/// Bit format of the X operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct XFormat {
    pub width: u32,
    pub signed: bool,
}

impl XFormat {
    pub fn check(&self, v: i64) -> Result<()> {
        let ok = if self.signed {
            let half = 1i128 << (self.width - 1);
            (-half..half).contains(&(v as i128))
        } else {
            v >= 0 && (v as i128) < (1i128 << self.width)
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Quantization { value: v as i128, width: self.width })
        }
    }

    fn bit(&self, v: i64, p: u32) -> u8 {
        ((v >> p) & 1) as u8
    }

    fn weight_negative(&self, p: u32) -> bool {
        self.signed && p == self.width - 1
    }

    /// Array passes needed when `x_bits` bits are processed per pass.
    pub fn slices(&self, x_bits: usize) -> u64 {
        (self.width as u64).div_ceil(x_bits as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MacResult {
    pub value: i128,
    pub discharges: u64,
    pub slices: u64,
}

/// Bit-serial dot product of stored row `row` against `x`. The row's rhs
/// word (and anything past `x.len()`) sees a zero word-line bit.
pub fn mac_vector(state: &BankState, mapping: &Mapping, row: usize, x: &[i64], fmt: XFormat) -> Result<MacResult> {
    let g = &state.geometry;
    let p = *mapping.placements.get(row).ok_or(Error::NotResident(row))?;
    if p.first_line + p.lines > g.capacity_lines() {
        return Err(Error::NotResident(row));
    }
    if x.len() > p.words {
        return Err(Error::DimensionMismatch { expected: p.words, got: x.len() });
    }
    for &v in x {
        fmt.check(v)?;
    }
    let (wpl, wpr) = (g.words_per_line(), g.words_per_row());
    let mut value = 0i128;
    let mut discharges = 0;
    for bit in 0..fmt.width {
        let replica = bit as usize % g.x_bits;
        let mut bank_sum = 0i128;
        for li in 0..p.lines {
            let line = p.first_line + li;
            let (group, base_row) = g.line_slot(line);
            let bank = group * g.x_bits + replica;
            for r in 0..g.rows_per_line() {
                let first_word = li * wpl + r * wpr;
                let xb: Vec<u8> = (0..wpr)
                    .map(|w| x.get(first_word + w).map_or(0, |&v| fmt.bit(v, bit)))
                    .collect();
                if xb.iter().all(|b| *b == 0) {
                    continue;
                }
                let buf = row_dot_product(state, bank, base_row + r, &xb)?;
                discharges += buf.discharges;
                // adder reduction over the row buffer
                bank_sum += buf.partials.iter().map(|v| *v as i128).sum::<i128>();
            }
        }
        let weighted = bank_sum << bit;
        value += if fmt.weight_negative(bit) { -weighted } else { weighted };
    }
    Ok(MacResult { value, discharges, slices: fmt.slices(g.x_bits) })
}

/// Same result and discharge count as [`mac_vector`], computed from word
/// popcounts instead of walking the array.
pub fn mac_fast(coeffs: &[i64], x: &[i64], fmt: XFormat, word_bits: u32, x_bits: usize) -> Result<MacResult> {
    if x.len() > coeffs.len() {
        return Err(Error::DimensionMismatch { expected: coeffs.len(), got: x.len() });
    }
    let xmask = if fmt.width >= 64 { u64::MAX } else { (1u64 << fmt.width) - 1 };
    let mut value = 0i128;
    let mut discharges = 0;
    for (&c, &v) in coeffs.iter().zip(x) {
        fmt.check(v)?;
        let word = encode(c, word_bits)?;
        value += c as i128 * v as i128;
        discharges += word.count_ones() as u64 * (v as u64 & xmask).count_ones() as u64;
    }
    Ok(MacResult { value, discharges, slices: fmt.slices(x_bits) })
}

pub fn decode_word(word: u32, width: u32) -> i64 {
    decode(word, width)
}

#[cfg(test)]
mod tests {
    use super::*;

    const X2: XFormat = XFormat { width: 2, signed: false };

    #[test]
    fn geometry_derived_sizes() {
        let g = CacheGeometry::default();
        g.validate().unwrap();
        assert_eq!(g.words_per_row(), 16);
        assert_eq!(g.words_per_line(), 32);
        assert_eq!(g.rows_per_line(), 2);
        assert_eq!(g.groups(), 8);
        assert_eq!(g.capacity_lines(), 1024);
    }

    #[test]
    fn one_line_for_32_words() {
        let g = CacheGeometry::default();
        let (m, _) = store_coefficients(&[vec![1; 32]], &g).unwrap();
        assert_eq!(m.total_lines, 1);
        let (m, _) = store_coefficients(&[vec![1; 33]], &g).unwrap();
        assert_eq!(m.total_lines, 2);
    }

    #[test]
    fn replicas_hold_identical_bits() {
        let g = CacheGeometry::default();
        let rows: Vec<Vec<i64>> = (0..20).map(|i| (0..40).map(|j| (i * 7 + j * 3) % 61 - 30).collect()).collect();
        let (m, s) = store_coefficients(&rows, &g).unwrap();
        for line in 0..m.total_lines {
            let (_, base) = g.line_slot(line);
            let banks: Vec<usize> = Mapping::replicas(&g, line).collect();
            assert_eq!(banks.len(), 2);
            for r in base..base + g.rows_per_line() {
                assert_eq!(s.row_words(banks[0], r), s.row_words(banks[1], r));
            }
        }
        assert_eq!(decode_word(s.word(0, 0, 0), 16), rows[0][0]);
    }

    #[test]
    fn tiny_geometry_overflows() {
        let g = CacheGeometry { rows: 2, banks: 2, ..CacheGeometry::default() };
        let (m, _) = store_coefficients(&[vec![1], vec![2], vec![3]], &g).unwrap();
        assert!(m.overflow);
    }

    #[test]
    fn bitcell_truth_table() {
        let mut d = 0;
        assert_eq!(bitcell_and(1, 1, &mut d), 1);
        assert_eq!(bitcell_and(1, 0, &mut d), 0);
        assert_eq!(bitcell_and(0, 1, &mut d), 0);
        assert_eq!(bitcell_and(0, 0, &mut d), 0);
        assert_eq!(d, 1);
    }

    #[test]
    fn row_dot_partials() {
        let g = CacheGeometry::default();
        let row: Vec<i64> = (0..16).map(|i| i - 5).collect();
        let (_, s) = store_coefficients(&[vec![3], row.clone()], &g).unwrap();
        let mut xb = vec![0u8; 16];
        xb[0] = 1;
        let buf = row_dot_product(&s, 0, 0, &xb).unwrap();
        assert_eq!(buf.partials[0], 3);
        assert_eq!(buf.discharges, 2);
        let buf = row_dot_product(&s, 0, 0, &[0; 16]).unwrap();
        assert!(buf.partials.iter().all(|v| *v == 0));
        assert_eq!(buf.discharges, 0);
        // second stored row lives on line 1 → group 1, bank 2
        let buf = row_dot_product(&s, 2, 0, &[1; 16]).unwrap();
        assert_eq!(buf.partials, row);
    }

    #[test]
    fn mac_small_cases() {
        let g = CacheGeometry::default();
        let (m, s) = store_coefficients(&[vec![1, 1, 4], vec![7, -3, 0]], &g).unwrap();
        assert_eq!(mac_vector(&s, &m, 0, &[1, 1], X2).unwrap().value, 2);
        assert_eq!(mac_vector(&s, &m, 1, &[2, 3], X2).unwrap().value, 5);
        assert!(mac_vector(&s, &m, 0, &[4, 0], X2).is_err());
    }

    #[test]
    fn fast_and_bit_serial_agree() {
        let g = CacheGeometry::default();
        let fmt = XFormat { width: 12, signed: true };
        let row: Vec<i64> = vec![-32768, 32767, -1, 0, 1234, -777, 5];
        let x: Vec<i64> = vec![-2048, 2047, -1, 9, 100, -3, 0];
        let (m, s) = store_coefficients(&[row.clone()], &g).unwrap();
        let a = mac_vector(&s, &m, 0, &x, fmt).unwrap();
        let b = mac_fast(&row, &x, fmt, 16, 2).unwrap();
        assert_eq!(a, b);
        let want: i128 = row.iter().zip(&x).map(|(c, v)| *c as i128 * *v as i128).sum();
        assert_eq!(a.value, want);
        assert_eq!(a.slices, 6);
    }

    #[test]
    fn all_zero_row_has_no_events() {
        let g = CacheGeometry::default();
        let (m, s) = store_coefficients(&[vec![0; 8]], &g).unwrap();
        let r = mac_vector(&s, &m, 0, &[3; 8], X2).unwrap();
        assert_eq!((r.value, r.discharges), (0, 0));
    }
}
