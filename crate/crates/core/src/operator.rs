//! Operators on the joint space.
//!
//! Besides the dense [`OperatorMatrix`], two structured forms are used by the
//! integrators: [`SparseOp`] (triplet list, for jump operators and the
//! dissipative drift) and [`Spectral`], a block eigendecomposition of a
//! Hermitian matrix from which exact unitary propagators are built.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Elementary, Truncation, EXCITED, GROUND};
use crate::C64;

/// Tolerance used to validate the Hermiticity flag.
pub const TOL_HERM: f64 = 1e-12;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMatrix {
    entries: DMatrix<C64>,
    hermitian: bool,
}

impl OperatorMatrix {
    /// Wraps a matrix. A `hermitian` claim is checked against [`TOL_HERM`]
    /// (relative to the largest entry).
    pub fn new(entries: DMatrix<C64>, hermitian: bool) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch { expected: entries.nrows(), found: entries.ncols() });
        }
        let op = Self { entries, hermitian };
        if hermitian {
            let scale = op.entries.iter().map(|z| z.norm()).fold(1.0, f64::max);
            let err = op.hermiticity_error();
            if err > TOL_HERM * scale {
                return Err(Error::invalid("hermitian_flag", format!("matrix is not Hermitian (deviation {err:.3e})")));
            }
        }
        Ok(op)
    }

    /// Builds a matrix known to be Hermitian by construction.
    pub(crate) fn hermitian_unchecked(entries: DMatrix<C64>) -> Self {
        Self { entries, hermitian: true }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { entries: DMatrix::zeros(dim, dim), hermitian: true }
    }

    pub fn identity(dim: usize) -> Self {
        Self { entries: DMatrix::identity(dim, dim), hermitian: true }
    }

    /// Matrix of a ladder or Pauli operator on the joint space.
    pub fn elementary(op: Elementary, trunc: Truncation) -> Self {
        let d = trunc.dim();
        let nm = trunc.n_max();
        let mut m = DMatrix::zeros(d, d);
        for q in 0..2 {
            for n in 0..=nm {
                let col = trunc.index(q, n);
                match op {
                    Elementary::Annihilate if n > 0 => m[(trunc.index(q, n - 1), col)] = C64::new((n as f64).sqrt(), 0.0),
                    Elementary::Create if n < nm => m[(trunc.index(q, n + 1), col)] = C64::new(((n + 1) as f64).sqrt(), 0.0),
                    Elementary::Number => m[(col, col)] = C64::new(n as f64, 0.0),
                    Elementary::SigmaMinus if q == EXCITED => m[(trunc.index(GROUND, n), col)] = C64::new(1.0, 0.0),
                    Elementary::SigmaPlus if q == GROUND => m[(trunc.index(EXCITED, n), col)] = C64::new(1.0, 0.0),
                    Elementary::SigmaZ => m[(col, col)] = C64::new(if q == EXCITED { 1.0 } else { -1.0 }, 0.0),
                    _ => {}
                }
            }
        }
        let hermitian = matches!(op, Elementary::Number | Elementary::SigmaZ);
        Self { entries: m, hermitian }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|j| (0..d).all(|i| i == j || self.entries[(i, j)] == ZERO))
    }

    pub fn adjoint(&self) -> Self {
        Self { entries: self.entries.adjoint(), hermitian: self.hermitian }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { entries: self.entries.scale(s), hermitian: self.hermitian }
    }

    pub fn apply(&self, v: &DVector<C64>) -> Result<DVector<C64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: v.len() });
        }
        Ok(&self.entries * v)
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &OperatorMatrix) -> Result<DMatrix<C64>> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(&self.entries * &other.entries - &other.entries * &self.entries)
    }

    /// `(M + M†)/2`.
    pub fn hermitian_part(&self) -> OperatorMatrix {
        Self::hermitian_unchecked((&self.entries + self.entries.adjoint()).scale(0.5))
    }

    /// `(M − M†)/(2i)`, so that `M = H + iA` with both Hermitian.
    pub fn antihermitian_part(&self) -> OperatorMatrix {
        let d = &self.entries - self.entries.adjoint();
        Self::hermitian_unchecked(d * C64::new(0.0, -0.5))
    }

    pub fn to_sparse(&self) -> SparseOp {
        SparseOp::from_dense(&self.entries)
    }
}

impl std::ops::Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { entries: &self.entries + &rhs.entries, hermitian: self.hermitian && rhs.hermitian }
    }
}

/// Sparse square operator stored as `(row, col, value)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    dim: usize,
    triplets: Vec<(usize, usize, C64)>,
    diagonal: bool,
}

impl SparseOp {
    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let mut triplets = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let z = m[(i, j)];
                if z != ZERO {
                    triplets.push((i, j, z));
                }
            }
        }
        let diagonal = triplets.iter().all(|&(i, j, _)| i == j);
        Self { dim: m.nrows(), triplets, diagonal }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn triplets(&self) -> &[(usize, usize, C64)] {
        &self.triplets
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, z) in &self.triplets {
            m[(i, j)] += z;
        }
        m
    }

    /// `out = self · v`.
    pub fn apply_into(&self, v: &DVector<C64>, out: &mut DVector<C64>) {
        out.fill(ZERO);
        for &(i, j, z) in &self.triplets {
            out[i] += z * v[j];
        }
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(self.dim);
        self.apply_into(v, &mut out);
        out
    }

    /// `⟨v|self|v⟩`.
    pub fn expectation(&self, v: &DVector<C64>) -> C64 {
        let mut acc = ZERO;
        for &(i, j, z) in &self.triplets {
            acc += v[i].conj() * z * v[j];
        }
        acc
    }

    /// `out += self · ρ · self†`.
    pub fn add_sandwich(&self, rho: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        for &(j, b, l2) in &self.triplets {
            let l2c = l2.conj();
            for &(i, a, l1) in &self.triplets {
                out[(i, j)] += l1 * rho[(a, b)] * l2c;
            }
        }
    }

    /// `out += self · ρ + ρ · self†` (`self` need not be Hermitian).
    pub fn add_left_right(&self, rho: &DMatrix<C64>, out: &mut DMatrix<C64>, scale: f64) {
        let d = self.dim;
        for &(i, a, z) in &self.triplets {
            let zs = z * scale;
            let zc = zs.conj();
            for c in 0..d {
                out[(i, c)] += zs * rho[(a, c)];
                out[(c, i)] += rho[(c, a)] * zc;
            }
        }
    }
}

/// Block eigendecomposition `H = ⊕_b V_b diag(λ_b) V_b†` of a Hermitian
/// matrix, with blocks given by the connected components of its sparsity
/// pattern. Jaynes-Cummings and dispersive Hamiltonians split into blocks of
/// size at most 2.
#[derive(Debug, Clone)]
pub struct Spectral {
    dim: usize,
    blocks: Vec<SpectralBlock>,
}

#[derive(Debug, Clone)]
struct SpectralBlock {
    indices: Vec<usize>,
    vectors: DMatrix<C64>,
    values: Vec<f64>,
}

impl Spectral {
    pub fn new(h: &OperatorMatrix) -> Result<Self> {
        if !h.is_hermitian() {
            return Err(Error::invalid("hamiltonian", "spectral propagation requires a Hermitian operator"));
        }
        let m = h.entries();
        let d = m.nrows();
        let mut blocks = Vec::new();
        for indices in connected_components(m) {
            let k = indices.len();
            let sub = DMatrix::from_fn(k, k, |a, b| m[(indices[a], indices[b])]);
            let (values, vectors) = if k == 1 {
                (vec![sub[(0, 0)].re], DMatrix::identity(1, 1))
            } else {
                let herm = (&sub + sub.adjoint()).scale(0.5);
                let eig = herm.symmetric_eigen();
                (eig.eigenvalues.iter().cloned().collect(), eig.eigenvectors)
            };
            blocks.push(SpectralBlock { indices, vectors, values });
        }
        Ok(Self { dim: d, blocks })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_block(&self) -> usize {
        self.blocks.iter().map(|b| b.indices.len()).max().unwrap_or(0)
    }

    /// Exact `e^{−iHs}`.
    pub fn propagator(&self, s: f64) -> BlockUnitary {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let k = b.indices.len();
                let phases = DVector::from_iterator(k, b.values.iter().map(|&l| C64::from_polar(1.0, -l * s)));
                let u = &b.vectors * DMatrix::from_diagonal(&phases) * b.vectors.adjoint();
                (b.indices.clone(), u)
            })
            .collect();
        BlockUnitary { dim: self.dim, blocks }
    }
}

fn connected_components(m: &DMatrix<C64>) -> Vec<Vec<usize>> {
    let d = m.nrows();
    let mut label = vec![usize::MAX; d];
    let mut comps = Vec::new();
    for start in 0..d {
        if label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        label[start] = id;
        while let Some(i) = stack.pop() {
            members.push(i);
            for j in 0..d {
                if label[j] == usize::MAX && (m[(i, j)] != ZERO || m[(j, i)] != ZERO) {
                    label[j] = id;
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps
}

/// Block-diagonal (up to a permutation) unitary.
#[derive(Debug, Clone)]
pub struct BlockUnitary {
    dim: usize,
    blocks: Vec<(Vec<usize>, DMatrix<C64>)>,
}

impl BlockUnitary {
    pub fn identity(dim: usize) -> Self {
        Self { dim, blocks: (0..dim).map(|i| (vec![i], DMatrix::identity(1, 1))).collect() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply_into(&self, v: &DVector<C64>, out: &mut DVector<C64>) {
        for (idx, u) in &self.blocks {
            for (a, &i) in idx.iter().enumerate() {
                let mut acc = ZERO;
                for (b, &j) in idx.iter().enumerate() {
                    acc += u[(a, b)] * v[j];
                }
                out[i] = acc;
            }
        }
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(self.dim);
        self.apply_into(v, &mut out);
        out
    }

    /// `U ρ U†`.
    pub fn conjugate(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let d = self.dim;
        let mut left = DMatrix::<C64>::zeros(d, d);
        for (idx, u) in &self.blocks {
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    let z = u[(a, b)];
                    for c in 0..d {
                        left[(i, c)] += z * rho[(j, c)];
                    }
                }
            }
        }
        let mut out = DMatrix::zeros(d, d);
        for (idx, u) in &self.blocks {
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    let z = u[(a, b)].conj();
                    for r in 0..d {
                        out[(r, i)] += left[(r, j)] * z;
                    }
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (idx, u) in &self.blocks {
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    m[(i, j)] = u[(a, b)];
                }
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{apply_elementary, JointState};
    use proptest::prelude::*;

    fn random_vec(seed: &[f64], d: usize) -> DVector<C64> {
        DVector::from_fn(d, |i, _| C64::new(seed[(2 * i) % seed.len()], seed[(2 * i + 1) % seed.len()]))
    }

    #[test]
    fn elementary_matrices_match_direct_action() {
        let t = Truncation::new(4).unwrap();
        let coeffs: Vec<f64> = (0..40).map(|k| ((k * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let v = random_vec(&coeffs, t.dim());
        let s = JointState::from_amplitudes(v.clone(), t).unwrap();
        for op in [
            Elementary::Annihilate,
            Elementary::Create,
            Elementary::Number,
            Elementary::SigmaMinus,
            Elementary::SigmaPlus,
            Elementary::SigmaZ,
        ] {
            let m = OperatorMatrix::elementary(op, t);
            let (direct, _) = apply_elementary(op, &s);
            assert!((m.apply(&v).unwrap() - direct.amplitudes()).norm() < 1e-14, "{op:?}");
        }
        let a = OperatorMatrix::elementary(Elementary::Annihilate, t);
        let ad = OperatorMatrix::elementary(Elementary::Create, t);
        assert!((a.adjoint().entries() - ad.entries()).norm() == 0.0);
    }

    #[test]
    fn hermitian_flag_is_validated() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        assert!(OperatorMatrix::new(m.clone(), true).is_err());
        assert!(OperatorMatrix::new(m.clone(), false).is_ok());
        m[(1, 0)] = C64::new(1.0, 0.0);
        assert!(OperatorMatrix::new(m, true).is_ok());
    }

    #[test]
    fn sparse_sandwich_matches_dense() {
        let t = Truncation::new(3).unwrap();
        let a = OperatorMatrix::elementary(Elementary::Annihilate, t);
        let d = t.dim();
        let rho = DMatrix::from_fn(d, d, |i, j| C64::new((i * d + j) as f64 * 0.01, (i as f64 - j as f64) * 0.02));
        let mut out = DMatrix::zeros(d, d);
        a.to_sparse().add_sandwich(&rho, &mut out);
        let dense = a.entries() * &rho * a.entries().adjoint();
        assert!((out - dense).norm() < 1e-13);

        let k = OperatorMatrix::elementary(Elementary::Number, t).to_sparse();
        let mut lr = DMatrix::zeros(d, d);
        k.add_left_right(&rho, &mut lr, 0.5);
        let n = OperatorMatrix::elementary(Elementary::Number, t);
        let dense = (n.entries() * &rho + &rho * n.entries()).scale(0.5);
        assert!((lr - dense).norm() < 1e-13);
    }

    #[test]
    fn block_propagator_is_exact_exponential() {
        // 2×2 block with known exponent plus a detached diagonal entry
        let mut h = DMatrix::zeros(3, 3);
        h[(0, 0)] = C64::new(0.3, 0.0);
        h[(0, 2)] = C64::new(0.0, 0.7);
        h[(2, 0)] = C64::new(0.0, -0.7);
        h[(2, 2)] = C64::new(-0.3, 0.0);
        h[(1, 1)] = C64::new(1.1, 0.0);
        let op = OperatorMatrix::new(h.clone(), true).unwrap();
        let spec = Spectral::new(&op).unwrap();
        assert_eq!(spec.max_block(), 2);
        let s = 1.7;
        let u = spec.propagator(s).to_dense();
        // Taylor series reference
        let x = h * C64::new(0.0, -s);
        let mut term = DMatrix::<C64>::identity(3, 3);
        let mut sum = term.clone();
        for k in 1..60 {
            term = &term * &x / C64::new(k as f64, 0.0);
            sum += &term;
        }
        assert!((u - sum).norm() < 1e-13);
    }

    proptest! {
        #[test]
        fn conjugate_matches_dense(seed in proptest::collection::vec(-1.0f64..1.0, 16)) {
            let t = Truncation::new(3).unwrap();
            let d = t.dim();
            let mut h = DMatrix::zeros(d, d);
            for n in 0..t.n_max() {
                let (i, j) = (t.index(EXCITED, n), t.index(GROUND, n + 1));
                h[(i, j)] = C64::new(seed[n], seed[n + 4]);
                h[(j, i)] = h[(i, j)].conj();
                h[(i, i)] = C64::new(seed[n + 8], 0.0);
            }
            let spec = Spectral::new(&OperatorMatrix::new(h, true).unwrap()).unwrap();
            let u = spec.propagator(0.37);
            let rho = DMatrix::from_fn(d, d, |i, j| C64::new(seed[(i + j) % 16], seed[(3 * i + j) % 16]));
            let ud = u.to_dense();
            let dense = &ud * &rho * ud.adjoint();
            prop_assert!((u.conjugate(&rho) - dense).norm() < 1e-12);
            let v = DVector::from_fn(d, |i, _| C64::new(seed[i % 16], -seed[(i + 5) % 16]));
            prop_assert!((u.apply(&v) - &ud * &v).norm() < 1e-13);
            prop_assert!(((ud.adjoint() * &ud) - DMatrix::<C64>::identity(d, d)).norm() < 1e-12);
        }
    }
}
