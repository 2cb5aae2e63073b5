//! Algebraic structure of the drift: block layout, canonical form,
//! hypoellipticity, dilation exponents and homogeneous dimension.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{integrate_matrix_adaptive, matrix_exp, numerical_rank};

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructureError {
    #[error("invalid block partition: {0}")]
    InvalidBlocks(String),
    #[error("drift matrix is {rows}x{cols} but the blocks sum to {n}")]
    DimensionMismatch { rows: usize, cols: usize, n: usize },
    #[error("drift matrix is not canonical: entry ({row}, {col}) = {value:e} must vanish")]
    NotCanonical { row: usize, col: usize, value: f64 },
    #[error("block B_{0} is rank deficient")]
    RankDeficient(usize),
    #[error("Kalman rank ({kalman_rank}) and covariance positivity (min eig {min_eig:e}) disagree")]
    InternalInconsistency { kalman_rank: usize, min_eig: f64 },
}

/// Block sizes `m_0 ≥ … ≥ m_κ` with the derived dilation data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockStructure {
    blocks: Vec<usize>,
    n: usize,
    q: usize,
    alpha: Vec<u32>,
}

impl BlockStructure {
    pub fn new(blocks: Vec<usize>) -> Result<Self, StructureError> {
        if blocks.is_empty() {
            return Err(StructureError::InvalidBlocks("no blocks".into()));
        }
        if blocks.contains(&0) {
            return Err(StructureError::InvalidBlocks("block sizes must be positive".into()));
        }
        if blocks.windows(2).any(|w| w[1] > w[0]) {
            return Err(StructureError::InvalidBlocks(format!("{blocks:?} is not non-increasing")));
        }
        let n = blocks.iter().sum();
        let q = blocks.iter().enumerate().map(|(j, m)| (2 * j + 1) * m).sum();
        let alpha = homogeneity_exponents(&blocks);
        Ok(Self { blocks, n, q, alpha })
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    /// Spatial dimension `N`.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of lower blocks.
    pub fn kappa(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn m0(&self) -> usize {
        self.blocks[0]
    }

    /// Homogeneous dimension `Q`; Lebesgue measure on `R^{N+1}` scales as `r^{Q+2}`.
    pub fn q(&self) -> usize {
        self.q
    }

    /// Dilation exponent of every spatial coordinate.
    pub fn alpha(&self) -> &[u32] {
        &self.alpha
    }

    /// Coordinate ranges of the blocks.
    pub fn ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.blocks
            .iter()
            .map(|&m| {
                let r = start..start + m;
                start += m;
                r
            })
            .collect()
    }
}

impl TryFrom<Vec<usize>> for BlockStructure {
    type Error = StructureError;
    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<BlockStructure> for Vec<usize> {
    fn from(b: BlockStructure) -> Self {
        b.blocks
    }
}

/// The constant drift matrix `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DriftMatrix(pub DMatrix<f64>);

impl DriftMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        Self::from(rows.to_vec())
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    /// The kinetic prototype `[[0,0],[1,0]]`.
    pub fn prototype() -> Self {
        Self(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

impl From<Vec<Vec<f64>>> for DriftMatrix {
    fn from(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        Self(DMatrix::from_fn(n, m, |i, j| rows[i].get(j).copied().unwrap_or(f64::NAN)))
    }
}

impl From<DriftMatrix> for Vec<Vec<f64>> {
    fn from(b: DriftMatrix) -> Self {
        (0..b.0.nrows()).map(|i| b.0.row(i).iter().copied().collect()).collect()
    }
}

/// `alpha[i] = 2j+1` for every coordinate `i` of block `j`.
pub fn homogeneity_exponents(blocks: &[usize]) -> Vec<u32> {
    blocks
        .iter()
        .enumerate()
        .flat_map(|(j, &m)| std::iter::repeat_n(2 * j as u32 + 1, m))
        .collect()
}

/// Checks that `b` has the lower block-bidiagonal layout for `blocks` and that
/// every sub-diagonal block `B_j` (size `m_j × m_{j-1}`) has full rank `m_j`.
pub fn detect_canonical_form(b: &DriftMatrix, blocks: &[usize]) -> Result<BlockStructure, StructureError> {
    let structure = BlockStructure::new(blocks.to_vec())?;
    let m = b.matrix();
    let n = structure.dim();
    if m.nrows() != n || m.ncols() != n {
        return Err(StructureError::DimensionMismatch { rows: m.nrows(), cols: m.ncols(), n });
    }
    let zero_tol = RANK_TOL * m.amax().max(1.0);
    let ranges = structure.ranges();
    for (bi, rows) in ranges.iter().enumerate() {
        for (bj, cols) in ranges.iter().enumerate() {
            if bi >= 1 && bj == bi - 1 {
                continue;
            }
            for r in rows.clone() {
                for c in cols.clone() {
                    if m[(r, c)].abs() > zero_tol || !m[(r, c)].is_finite() {
                        return Err(StructureError::NotCanonical { row: r, col: c, value: m[(r, c)] });
                    }
                }
            }
        }
    }
    for j in 1..ranges.len() {
        let sub = m.view((ranges[j].start, ranges[j - 1].start), (ranges[j].len(), ranges[j - 1].len())).into_owned();
        if numerical_rank(&sub, RANK_TOL) < structure.blocks()[j] {
            return Err(StructureError::RankDeficient(j));
        }
    }
    Ok(structure)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypoReport {
    pub kalman_rank: usize,
    /// Smallest eigenvalue of `C(1)` built with `A0 = I`.
    pub c_min_eig: f64,
    pub hypoelliptic: bool,
}

/// Kalman rank of `[D, BD, …, B^{N-1}D]` with `D` the injection of the first
/// `m0` coordinates, cross-checked against positivity of `C(1)`.
pub fn check_hypoellipticity(b: &DriftMatrix, m0: usize) -> Result<HypoReport, StructureError> {
    let m = b.matrix();
    let n = m.nrows();
    if m.ncols() != n || m0 == 0 || m0 > n {
        return Err(StructureError::InvalidBlocks(format!("m0 = {m0} incompatible with a {n}x{} drift", m.ncols())));
    }
    let mut kalman = DMatrix::<f64>::zeros(n, n * m0);
    let mut power = DMatrix::<f64>::identity(n, n).columns(0, m0).into_owned();
    for k in 0..n {
        kalman.columns_mut(k * m0, m0).copy_from(&power);
        power = m * power;
    }
    let kalman_rank = numerical_rank(&kalman, RANK_TOL);

    let mut abar = DMatrix::<f64>::zeros(n, n);
    abar.view_mut((0, 0), (m0, m0)).fill_with_identity();
    let c1 = integrate_matrix_adaptive(0.0, 1.0, 1e-13, &|s| {
        let e = matrix_exp(m, -s, None);
        &e * &abar * e.transpose()
    });
    let c1 = (&c1 + c1.transpose()) * 0.5;
    let eig = c1.symmetric_eigenvalues();
    let min_eig = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_eig = eig.iter().cloned().fold(0.0, f64::max);
    let positive = min_eig > 1e-13 * max_eig.max(f64::MIN_POSITIVE);
    let full_rank = kalman_rank == n;
    if positive != full_rank {
        return Err(StructureError::InternalInconsistency { kalman_rank, min_eig });
    }
    Ok(HypoReport { kalman_rank, c_min_eig: min_eig, hypoelliptic: full_rank })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prototype_is_canonical() {
        let s = detect_canonical_form(&DriftMatrix::prototype(), &[1, 1]).unwrap();
        assert_eq!(s.q(), 4);
        assert_eq!(s.alpha(), &[1, 3]);
        assert_eq!(s.kappa(), 1);
    }

    #[test]
    fn zero_drift_single_block_is_parabolic() {
        let s = detect_canonical_form(&DriftMatrix::zeros(3), &[3]).unwrap();
        assert_eq!(s.q(), 3);
        assert_eq!(s.alpha(), &[1, 1, 1]);
        assert_eq!(s.kappa(), 0);
    }

    #[test]
    fn zero_subblock_is_rank_deficient() {
        assert_eq!(
            detect_canonical_form(&DriftMatrix::zeros(2), &[1, 1]),
            Err(StructureError::RankDeficient(1))
        );
    }

    #[test]
    fn off_pattern_entry_is_rejected() {
        let b = DriftMatrix::from_rows(&[vec![0.0, 1e-3], vec![1.0, 0.0]]);
        assert!(matches!(
            detect_canonical_form(&b, &[1, 1]),
            Err(StructureError::NotCanonical { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn bad_blocks() {
        assert!(BlockStructure::new(vec![1, 2]).is_err());
        assert!(BlockStructure::new(vec![]).is_err());
        assert!(BlockStructure::new(vec![2, 0]).is_err());
    }

    #[test]
    fn exponents() {
        assert_eq!(homogeneity_exponents(&[1, 1]), vec![1, 3]);
        assert_eq!(homogeneity_exponents(&[2, 1]), vec![1, 1, 3]);
        assert_eq!(homogeneity_exponents(&[1, 1, 1]), vec![1, 3, 5]);
    }

    #[test]
    fn hypoellipticity_examples() {
        let r = check_hypoellipticity(&DriftMatrix::prototype(), 1).unwrap();
        assert_eq!(r.kalman_rank, 2);
        assert!(r.hypoelliptic);
        // C(1) = [[1, -1/2], [-1/2, 1/3]], min eigenvalue (4 - sqrt(13))/6.
        assert!((r.c_min_eig - (4.0 - 13f64.sqrt()) / 6.0).abs() < 1e-12);

        let heat = check_hypoellipticity(&DriftMatrix::zeros(3), 3).unwrap();
        assert!(heat.hypoelliptic);
        assert!((heat.c_min_eig - 1.0).abs() < 1e-12);

        let degenerate = check_hypoellipticity(&DriftMatrix::zeros(2), 1).unwrap();
        assert_eq!(degenerate.kalman_rank, 1);
        assert!(!degenerate.hypoelliptic);
    }

    #[test]
    fn serde_round_trip() {
        let s = BlockStructure::new(vec![2, 1]).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, "[2,1]");
        let back: BlockStructure = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<BlockStructure>("[1,2]").is_err());
    }
}
