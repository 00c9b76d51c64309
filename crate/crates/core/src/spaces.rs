//! Ambient norms, finite biorthogonal systems and coordinate projections.
//!
//! Elements of the span `X` of a system are carried as [`CoeffVec`]s holding
//! the values of the dual functionals; ambient coordinates are produced on
//! demand by [`MinimalSystem::synthesize`]. All indices are 0-based system
//! positions. External labels (e.g. indices starting at 2), when a construction has them, live in
//! [`MinimalSystem::labels`].

use std::ops::{Deref, DerefMut};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|x_i'(x_j) - δ_ij|`.
pub const BIORTHOGONALITY_TOL: f64 = 1e-10;
/// Relative singular-value cutoff used for the numerical rank.
pub const RANK_TOL: f64 = 1e-9;

/// Ambient norm on `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NormSpec {
    Lp { p: f64 },
    Linf,
    WeightedLp { p: f64, weights: Vec<f64> },
}

impl NormSpec {
    pub fn l1() -> Self {
        NormSpec::Lp { p: 1.0 }
    }

    pub fn l2() -> Self {
        NormSpec::Lp { p: 2.0 }
    }

    pub fn lp(p: f64) -> Self {
        NormSpec::Lp { p }
    }

    /// Checks `p >= 1`, positive weights and (when given) the weight count.
    pub fn check(&self, dim: Option<usize>) -> Result<()> {
        match self {
            NormSpec::Linf => Ok(()),
            NormSpec::Lp { p } => check_exponent(*p),
            NormSpec::WeightedLp { p, weights } => {
                check_exponent(*p)?;
                if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
                    return Err(Error::InvalidNorm(format!("weight {w} is not positive")));
                }
                if let Some(n) = dim {
                    if weights.len() != n {
                        return Err(Error::InvalidNorm(format!(
                            "{} weights for ambient dimension {n}",
                            weights.len()
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Exponent of the norm, `None` for the sup norm.
    pub fn exponent(&self) -> Option<f64> {
        match self {
            NormSpec::Linf => None,
            NormSpec::Lp { p } | NormSpec::WeightedLp { p, .. } => Some(*p),
        }
    }

    pub fn weights(&self) -> Option<&[f64]> {
        match self {
            NormSpec::WeightedLp { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn norm(&self, v: &[f64]) -> Result<f64> {
        if let Some(w) = self.weights() {
            if w.len() != v.len() {
                return Err(Error::DimensionMismatch {
                    expected: w.len(),
                    found: v.len(),
                });
            }
        }
        Ok(self.norm_unchecked(v))
    }

    pub(crate) fn norm_unchecked(&self, v: &[f64]) -> f64 {
        match self {
            NormSpec::Linf => sup_norm(v),
            NormSpec::Lp { p } => lp_norm(v.iter().copied(), *p),
            NormSpec::WeightedLp { p, weights } => lp_norm(v.iter().zip(weights).map(|(x, w)| x * w.powf(1.0 / p)), *p),
        }
    }

    /// Norm of the covector `y` acting by the standard pairing, as a
    /// functional on the whole ambient space.
    pub fn dual_norm(&self, y: &[f64]) -> Result<f64> {
        if let Some(w) = self.weights() {
            if w.len() != y.len() {
                return Err(Error::DimensionMismatch {
                    expected: w.len(),
                    found: y.len(),
                });
            }
        }
        Ok(match self {
            NormSpec::Linf => y.iter().map(|x| x.abs()).sum(),
            NormSpec::Lp { p } => lp_norm(y.iter().copied(), conjugate(*p)),
            NormSpec::WeightedLp { p, weights } => {
                lp_norm(y.iter().zip(weights).map(|(x, w)| x * w.powf(-1.0 / p)), conjugate(*p))
            }
        })
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidNorm(format!(
            "exponent p = {p} must satisfy 1 <= p < inf"
        )))
    }
}

/// Hölder conjugate; `1` maps to `inf`.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

fn lp_norm<I: Iterator<Item = f64> + Clone>(v: I, p: f64) -> f64 {
    if p.is_infinite() {
        return v.fold(0.0_f64, |acc, x| acc.max(x.abs()));
    }
    if p == 1.0 {
        return v.map(f64::abs).sum();
    }
    let scale = v.clone().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = v.map(|x| (x.abs() / scale).powf(p)).sum();
    scale * s.powf(1.0 / p)
}

/// Coefficients `x_i'(x)` of an element of `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoeffVec(pub Vec<f64>);

impl CoeffVec {
    pub fn zeros(n: usize) -> Self {
        CoeffVec(vec![0.0; n])
    }

    /// The `i`-th unit coefficient vector of length `n`.
    pub fn delta(n: usize, i: usize) -> Self {
        let mut c = vec![0.0; n];
        c[i] = 1.0;
        CoeffVec(c)
    }

    pub fn support(&self) -> IndexSet {
        IndexSet::from_sorted_unchecked(
            self.0
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(i, _)| i)
                .collect(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| *c == 0.0)
    }

    pub fn max_modulus(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for CoeffVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for CoeffVec {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for CoeffVec {
    fn from(v: Vec<f64>) -> Self {
        CoeffVec(v)
    }
}

/// Sorted set of 0-based system positions.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut v: Vec<usize> = indices.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        IndexSet(v)
    }

    pub fn empty() -> Self {
        IndexSet(Vec::new())
    }

    pub fn full(n: usize) -> Self {
        IndexSet((0..n).collect())
    }

    pub(crate) fn from_sorted_unchecked(v: Vec<usize>) -> Self {
        debug_assert!(v.windows(2).all(|w| w[0] < w[1]));
        IndexSet(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    pub fn difference(&self, other: &IndexSet) -> IndexSet {
        IndexSet(self.iter().filter(|i| !other.contains(*i)).collect())
    }

    pub fn check_range(&self, size: usize) -> Result<()> {
        match self.0.last() {
            Some(&i) if i >= size => Err(Error::IndexOutOfRange { index: i, size }),
            _ => Ok(()),
        }
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        IndexSet::new(iter)
    }
}

/// `P_A`: keeps the coefficients on `set`, zeroes the rest.
pub fn project(c: &CoeffVec, set: &IndexSet) -> Result<CoeffVec> {
    set.check_range(c.len())?;
    let mut out = vec![0.0; c.len()];
    for i in set.iter() {
        out[i] = c[i];
    }
    Ok(CoeffVec(out))
}

/// `x - P_A(x)` in coefficient space.
pub fn residual(c: &CoeffVec, set: &IndexSet) -> Result<CoeffVec> {
    set.check_range(c.len())?;
    let mut out = c.clone();
    for i in set.iter() {
        out[i] = 0.0;
    }
    Ok(out)
}

/// A finite system `(x_i)` with biorthogonal covectors `(x_i')` inside a
/// normed `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalSystem {
    ambient_dim: usize,
    norm: NormSpec,
    basis: Vec<Vec<f64>>,
    duals: Vec<Vec<f64>>,
    labels: Option<Vec<usize>>,
}

impl MinimalSystem {
    /// Builds a system after shape and finiteness checks. Biorthogonality
    /// and rank are not enforced here; see [`MinimalSystem::validate`].
    pub fn new(norm: NormSpec, basis: Vec<Vec<f64>>, duals: Vec<Vec<f64>>) -> Result<Self> {
        let n = basis
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidSystem("system has no vectors".into()))?;
        if n == 0 {
            return Err(Error::InvalidSystem("ambient dimension is zero".into()));
        }
        norm.check(Some(n))?;
        if basis.len() > n {
            return Err(Error::InvalidSystem(format!(
                "{} vectors cannot be independent in dimension {n}",
                basis.len()
            )));
        }
        if duals.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: duals.len(),
            });
        }
        for row in basis.iter().chain(duals.iter()) {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidSystem("non-finite entry".into()));
            }
        }
        Ok(MinimalSystem {
            ambient_dim: n,
            norm,
            basis,
            duals,
            labels: None,
        })
    }

    /// Square system whose duals are the coefficient functionals, i.e. the
    /// rows of `(B^T)^{-1}`.
    pub fn from_square_basis(norm: NormSpec, basis: Vec<Vec<f64>>) -> Result<Self> {
        let n = basis.first().map(Vec::len).unwrap_or(0);
        if basis.len() != n {
            return Err(Error::InvalidSystem(format!(
                "duals can only be derived for a square system, got {} vectors in dimension {n}",
                basis.len()
            )));
        }
        if basis.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidSystem("ragged basis".into()));
        }
        let b = DMatrix::from_fn(n, n, |i, j| basis[i][j]);
        let inv = b
            .try_inverse()
            .ok_or_else(|| Error::InvalidSystem("basis matrix is singular".into()))?;
        // D B^T = I  =>  D = (B^{-1})^T, row i of D is column i of B^{-1}.
        let duals = (0..n).map(|i| (0..n).map(|j| inv[(j, i)]).collect()).collect();
        MinimalSystem::new(norm, basis, duals)
    }

    /// Unit vector basis of `R^n` under `norm`.
    pub fn unit_basis(norm: NormSpec, n: usize) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| CoeffVec::delta(n, i).0).collect();
        MinimalSystem::new(norm, rows.clone(), rows)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.size() {
            return Err(Error::DimensionMismatch {
                expected: self.size(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn size(&self) -> usize {
        self.basis.len()
    }

    pub fn norm_spec(&self) -> &NormSpec {
        &self.norm
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn duals(&self) -> &[Vec<f64>] {
        &self.duals
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Label of position `i`, falling back to the 1-based position.
    pub fn label(&self, i: usize) -> usize {
        self.labels.as_ref().map_or(i + 1, |l| l[i])
    }

    fn check_len(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.size() {
            return Err(Error::DimensionMismatch {
                expected: self.size(),
                found: c.len(),
            });
        }
        Ok(())
    }

    /// `sum_i c_i x_i` in ambient coordinates.
    pub fn synthesize(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check_len(c)?;
        Ok(self.synthesize_unchecked(c))
    }

    pub(crate) fn synthesize_unchecked(&self, c: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.ambient_dim];
        for (ci, row) in c.iter().zip(&self.basis) {
            if *ci != 0.0 {
                for (vj, bj) in v.iter_mut().zip(row) {
                    *vj += ci * bj;
                }
            }
        }
        v
    }

    /// Applies every dual functional to an ambient vector.
    pub fn analyze(&self, v: &[f64]) -> Result<CoeffVec> {
        if v.len() != self.ambient_dim {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim,
                found: v.len(),
            });
        }
        Ok(CoeffVec(self.duals.iter().map(|d| dot(d, v)).collect()))
    }

    /// `‖sum_i c_i x_i‖`.
    pub fn norm_of(&self, c: &[f64]) -> Result<f64> {
        self.check_len(c)?;
        Ok(self.norm_of_unchecked(c))
    }

    pub(crate) fn norm_of_unchecked(&self, c: &[f64]) -> f64 {
        self.norm.norm_unchecked(&self.synthesize_unchecked(c))
    }

    pub fn basis_norm(&self, i: usize) -> f64 {
        self.norm.norm_unchecked(&self.basis[i])
    }

    /// Ambient dual norm of `x_i'`, an upper bound for its norm on `X`.
    pub fn dual_upper(&self, i: usize) -> f64 {
        self.norm
            .dual_norm(&self.duals[i])
            .expect("dual dimensions checked at construction")
    }

    pub fn validate(&self) -> ValidationReport {
        validate_system(self)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower and upper bound for a quantity that is not computed exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
}

/// Bounds on `‖x_i'‖` as a functional on `X`. The lower bound comes from
/// the corpus, the upper bound is the exact ambient dual norm.
pub fn dual_norm_bounds(sys: &MinimalSystem, i: usize, corpus: &[CoeffVec]) -> Result<Bracket> {
    if i >= sys.size() {
        return Err(Error::IndexOutOfRange {
            index: i,
            size: sys.size(),
        });
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut lower = 0.0_f64;
    for c in corpus {
        let nx = sys.norm_of(c)?;
        if nx > 0.0 {
            lower = lower.max(c[i].abs() / nx);
        }
    }
    Ok(Bracket {
        lower,
        upper: sys.dual_upper(i),
    })
}

/// Witness for the lower end of [`basis_constant_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisConstantBounds {
    pub bracket: Bracket,
    /// Corpus vector and cut position `k` (the projection `S_k` keeps
    /// positions `0..k`) attaining the lower bound; `None` when `k = N`.
    pub witness: Option<(CoeffVec, usize)>,
}

/// Brackets `K_b = max_k ‖S_k‖` for the partial-sum projections.
pub fn basis_constant_bounds(sys: &MinimalSystem, corpus: &[CoeffVec]) -> Result<BasisConstantBounds> {
    let n = sys.size();
    let mut lower = 1.0_f64;
    let mut witness = None;
    for c in corpus {
        sys.check_len(c)?;
        let nx = sys.norm_of_unchecked(c);
        if nx == 0.0 {
            continue;
        }
        let mut head = vec![0.0; n];
        for k in 1..n {
            head[k - 1] = c[k - 1];
            let r = sys.norm_of_unchecked(&head) / nx;
            if r > lower {
                lower = r;
                witness = Some((c.clone(), k));
            }
        }
    }
    let mut upper = 0.0_f64;
    let mut acc = 0.0;
    for i in 0..n {
        acc += sys.basis_norm(i) * sys.dual_upper(i);
        upper = upper.max(acc);
    }
    Ok(BasisConstantBounds {
        bracket: Bracket { lower, upper },
        witness,
    })
}

/// Adjoins `x_0 = s e_{n+1}` with `x_0' = e_{n+1}' / s` where
/// `s = max_i ‖x_i‖`. The new vector is placed at position 0; it carries
/// label 0 and the remaining labels are kept (or become `1..=N`).
pub fn extend_with_apex(sys: &MinimalSystem) -> Result<MinimalSystem> {
    if matches!(sys.norm, NormSpec::WeightedLp { .. }) {
        return Err(Error::Unsupported(
            "apex extension of a weighted norm leaves the new weight undefined".into(),
        ));
    }
    let n = sys.ambient_dim;
    let s = (0..sys.size()).map(|i| sys.basis_norm(i)).fold(0.0, f64::max);
    let pad = |row: &Vec<f64>| {
        let mut r = row.clone();
        r.push(0.0);
        r
    };
    let mut apex = vec![0.0; n + 1];
    apex[n] = s;
    let mut apex_dual = vec![0.0; n + 1];
    apex_dual[n] = 1.0 / s;
    let basis = std::iter::once(apex).chain(sys.basis.iter().map(pad)).collect();
    let duals = std::iter::once(apex_dual).chain(sys.duals.iter().map(pad)).collect();
    let labels = std::iter::once(0)
        .chain((0..sys.size()).map(|i| sys.label(i)))
        .collect();
    MinimalSystem::new(sys.norm.clone(), basis, duals)?.with_labels(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub size: usize,
    pub ambient_dim: usize,
    /// `max_ij |x_i'(x_j) - δ_ij|`.
    pub biorthogonality_residual: f64,
    pub biorthogonal: bool,
    pub rank: usize,
    pub full_rank: bool,
    pub min_basis_norm: f64,
    pub max_basis_norm: f64,
    pub dual_upper_bounds: Vec<f64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.biorthogonal && self.full_rank
    }
}

pub fn validate_system(sys: &MinimalSystem) -> ValidationReport {
    let n = sys.size();
    let mut resid = 0.0_f64;
    for (i, d) in sys.duals.iter().enumerate() {
        for (j, b) in sys.basis.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            resid = resid.max((dot(d, b) - target).abs());
        }
    }
    let m = DMatrix::from_fn(n, sys.ambient_dim, |i, j| sys.basis[i][j]);
    let sv = m.singular_values();
    let smax = sv.iter().fold(0.0_f64, |a, s| a.max(*s));
    let rank = sv.iter().filter(|s| **s > RANK_TOL * smax.max(1.0)).count();
    let norms: Vec<f64> = (0..n).map(|i| sys.basis_norm(i)).collect();
    ValidationReport {
        size: n,
        ambient_dim: sys.ambient_dim,
        biorthogonality_residual: resid,
        biorthogonal: resid <= BIORTHOGONALITY_TOL,
        rank,
        full_rank: rank == n,
        min_basis_norm: norms.iter().copied().fold(f64::INFINITY, f64::min),
        max_basis_norm: norms.iter().copied().fold(0.0, f64::max),
        dual_upper_bounds: (0..n).map(|i| sys.dual_upper(i)).collect(),
    }
}
