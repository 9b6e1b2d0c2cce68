//! Seeded standard-normal path matrices.
//!
//! Draw `(j, i)` is a pure function of `(seed, j, i)`: a Philox4x32-10 block
//! keyed by the seed and indexed by path and input pair, mapped to an open
//! `(0, 1)` uniform and then through the AS241 inverse normal CDF. Any path
//! can therefore be produced independently of the others, in any order and
//! on any thread, with bit-identical results.

use ndarray::{s, Array2, ArrayView2, CowArray, Ix2};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const GENERATOR_ID: &str = "philox4x32-10/as241";

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Philox4x32 with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let p0 = u64::from(PHILOX_M0) * u64::from(c[0]);
        let p1 = u64::from(PHILOX_M1) * u64::from(c[2]);
        let (hi0, lo0) = ((p0 >> 32) as u32, p0 as u32);
        let (hi1, lo1) = ((p1 >> 32) as u32, p1 as u32);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Maps 64 random bits to a uniform strictly inside `(0, 1)`.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

// PPND16 coefficients, constant term first.
const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_445_9e-7,
    2.044_263_103_389_939_7e-15,
];

#[inline(always)]
fn horner(c: &[f64; 8], r: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * r + k)
}

/// Inverse of the standard normal CDF (Wichura, AS241 `PPND16`).
///
/// Relative accuracy is about 1e-16 over `(0, 1)`.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * horner(&A, r) / horner(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        let r = r - 1.6;
        horner(&C, r) / horner(&D, r)
    } else {
        let r = r - 5.0;
        horner(&E, r) / horner(&F, r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Fills `row` with the draws of path `path` under `seed`.
pub fn fill_path(seed: u64, path: u64, row: &mut [f64]) {
    let key = [seed as u32, (seed >> 32) as u32];
    for (pair, out) in row.chunks_mut(2).enumerate() {
        let block = philox4x32_10([pair as u32, path as u32, (path >> 32) as u32, 0], key);
        let a = u64::from(block[0]) | (u64::from(block[1]) << 32);
        let b = u64::from(block[2]) | (u64::from(block[3]) << 32);
        out[0] = inverse_normal_cdf(open_unit(a));
        if let Some(second) = out.get_mut(1) {
            *second = inverse_normal_cdf(open_unit(b));
        }
    }
}

/// `N_mc × N` matrix of i.i.d. standard normals, one row per path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    draws: Array2<f64>,
    seed: u64,
}

impl PathBatch {
    /// Materializes `n_paths` rows of `n_inputs` draws.
    ///
    /// At least two paths are required because the lagged estimators pair
    /// each path with its predecessor.
    pub fn generate(seed: u64, n_paths: usize, n_inputs: usize) -> Result<Self> {
        if n_paths < 2 {
            return Err(Error::invalid(
                "n_paths",
                format!("got {n_paths}; the lagged-path and running-mean estimators need at least 2 paths"),
            ));
        }
        Self::generate_any(seed, n_paths, n_inputs)
    }

    pub(crate) fn generate_any(seed: u64, n_paths: usize, n_inputs: usize) -> Result<Self> {
        if n_inputs == 0 {
            return Err(Error::invalid("n_inputs", "need at least one random input per path"));
        }
        const ROWS_PER_TASK: usize = 4096;
        let mut data = vec![0.0; n_paths * n_inputs];
        data.par_chunks_mut(ROWS_PER_TASK * n_inputs)
            .enumerate()
            .for_each(|(task, block)| {
                for (r, row) in block.chunks_mut(n_inputs).enumerate() {
                    fill_path(seed, (task * ROWS_PER_TASK + r) as u64, row);
                }
            });
        let draws = Array2::from_shape_vec((n_paths, n_inputs), data).expect("shape matches data");
        Ok(Self { draws, seed })
    }

    /// Wraps an explicit matrix, e.g. hand-picked test points.
    pub fn from_draws(draws: Array2<f64>, seed: u64) -> Self {
        Self { draws, seed }
    }

    pub fn n_paths(&self) -> usize {
        self.draws.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.draws.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn generator_id(&self) -> &'static str {
        GENERATOR_ID
    }

    pub fn draws(&self) -> ArrayView2<'_, f64> {
        self.draws.view()
    }

    pub fn path(&self, j: usize) -> &[f64] {
        self.draws.row(j).to_slice().expect("rows are contiguous")
    }

    /// Splits the paths into blocks of `width` rows in path order.
    pub fn chunks(&self, width: usize) -> Chunks<'_> {
        self.chunks_in(width, 0..self.n_paths())
    }

    /// Chunks covering only `range`, starting at `range.start`.
    pub fn chunks_in(&self, width: usize, range: std::ops::Range<usize>) -> Chunks<'_> {
        assert!(width > 0, "chunk width must be positive");
        assert!(range.end <= self.n_paths());
        Chunks {
            batch: self,
            width,
            next: range.start,
            end: range.end,
        }
    }
}

/// One `c × N` block of consecutive paths.
///
/// A final ragged block is padded up to `c` rows by repeating its last real
/// path; lanes at or beyond [`Chunk::active`] are inactive.
#[derive(Debug, Clone)]
pub struct Chunk<'a> {
    first_path: usize,
    active: usize,
    block: CowArray<'a, f64, Ix2>,
}

impl Chunk<'_> {
    pub fn first_path(&self) -> usize {
        self.first_path
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn width(&self) -> usize {
        self.block.nrows()
    }

    pub fn is_active(&self, lane: usize) -> bool {
        lane < self.active
    }

    pub fn block(&self) -> ArrayView2<'_, f64> {
        self.block.view()
    }

    /// Only the active rows.
    pub fn active_rows(&self) -> ArrayView2<'_, f64> {
        self.block.slice(s![..self.active, ..])
    }
}

#[derive(Debug, Clone)]
pub struct Chunks<'a> {
    batch: &'a PathBatch,
    width: usize,
    next: usize,
    end: usize,
}

impl<'a> Iterator for Chunks<'a> {
    type Item = Chunk<'a>;

    fn next(&mut self) -> Option<Chunk<'a>> {
        let n = self.end;
        if self.next >= n {
            return None;
        }
        let start = self.next;
        let end = (start + self.width).min(n);
        self.next = end;
        let active = end - start;
        let rows = self.batch.draws.slice(s![start..end, ..]);
        let block = if active == self.width {
            CowArray::from(rows)
        } else {
            let last = rows.row(active - 1);
            let padded = Array2::from_shape_fn((self.width, rows.ncols()), |(r, i)| {
                if r < active {
                    rows[[r, i]]
                } else {
                    last[i]
                }
            });
            CowArray::from(padded)
        };
        Some(Chunk {
            first_path: start,
            active,
            block,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end - self.next).div_ceil(self.width);
        (left, Some(left))
    }
}

impl ExactSizeIterator for Chunks<'_> {}

/// Seed for a derived stream, e.g. the `k`-th optimizer step.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32_10([0; 4], [0; 2]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn open_unit_stays_inside() {
        assert!(open_unit(0) > 0.0);
        assert!(open_unit(u64::MAX) < 1.0);
    }

    #[test]
    fn inverse_cdf_symmetry_and_center() {
        assert_eq!(inverse_normal_cdf(0.5), 0.0);
        for p in [0.01, 0.2, 0.424, 0.426, 0.49] {
            let (lo, hi) = (inverse_normal_cdf(p), inverse_normal_cdf(1.0 - p));
            assert!((lo + hi).abs() < 1e-12, "p = {p}: {lo} vs {hi}");
        }
    }

    #[test]
    fn inverse_cdf_against_statrs() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let n = Normal::standard();
        let mut p = 1e-12;
        while p < 1.0 - 1e-12 {
            let got = inverse_normal_cdf(p);
            let want = n.inverse_cdf(p);
            assert!((got - want).abs() <= 1e-9, "p = {p}: {got} vs {want}");
            // round-trip through the forward CDF as a second check
            assert!((n.cdf(got) - p).abs() <= 1e-12 + 1e-9 * p, "p = {p}");
            p = if p < 0.5 { p * 1.7 } else { 1.0 - (1.0 - p) / 1.7 };
            if (p - 0.5).abs() < 0.3 {
                p += 0.013;
            }
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let a = PathBatch::generate(42, 4, 1).unwrap();
        let b = PathBatch::generate(42, 4, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.generator_id(), GENERATOR_ID);
        let c = PathBatch::generate(43, 4, 1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn small_batch_shape() {
        let b = PathBatch::generate(7, 2, 3).unwrap();
        assert_eq!(b.draws().dim(), (2, 3));
        assert_ne!(b.path(0), b.path(1));
    }

    #[test]
    fn too_few_paths() {
        let err = PathBatch::generate(1, 1, 3).unwrap_err();
        assert!(err.to_string().contains("at least 2 paths"));
        assert!(PathBatch::generate(1, 4, 0).is_err());
    }

    #[test]
    fn chunk_sizes() {
        let b = PathBatch::generate(1, 10, 2).unwrap();
        let chunks: Vec<_> = b.chunks(4).collect();
        assert_eq!(chunks.iter().map(Chunk::active).collect::<Vec<_>>(), vec![4, 4, 2]);
        assert!(chunks.iter().all(|c| c.width() == 4));
        let last = &chunks[2];
        assert!(last.is_active(1) && !last.is_active(2));
        assert_eq!(last.block().row(3), b.draws().row(9));

        let b = PathBatch::generate(1, 8, 2).unwrap();
        assert_eq!(b.chunks(8).len(), 1);
    }

    #[test]
    fn path_addressing_matches_matrix() {
        let b = PathBatch::generate(99, 17, 5).unwrap();
        let mut row = [0.0; 5];
        fill_path(99, 11, &mut row);
        assert_eq!(b.path(11), &row);
    }
}
