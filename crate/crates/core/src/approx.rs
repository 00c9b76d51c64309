//! Chebyshev approximants over a fixed support and exact best `m`-term
//! errors by support enumeration.
//!
//! `sigma_m` only enumerates supports of exactly `min(m, N)` elements: the
//! span over a smaller support is contained in the span over any superset,
//! so smaller supports never give a smaller error. `sigma_tilde_m` has no
//! such monotonicity (projections are not nested in norm) and enumerates
//! every cardinality up to `m`.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greedy::{binomial, check_cap};
use crate::lp::{self, StandardLp};
use crate::spaces::{conjugate, residual, CoeffVec, IndexSet, MinimalSystem, NormSpec};

/// Values at or below this are treated as an exactly vanishing error.
pub const ZERO_ERROR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Normal equations (ℓ2 and weighted ℓ2).
    LeastSquares,
    /// Exact linear program (ℓ1, weighted ℓ1, ℓ∞).
    Simplex,
    /// Subgradient descent with a Newton polish (other exponents).
    Subgradient,
}

impl Backend {
    pub fn for_norm(norm: &NormSpec) -> Backend {
        match norm.exponent() {
            None => Backend::Simplex,
            Some(1.0) => Backend::Simplex,
            Some(2.0) => Backend::LeastSquares,
            Some(_) => Backend::Subgradient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebSolution {
    pub support: IndexSet,
    /// Coefficients on `support`, in its ascending order.
    pub coeffs: Vec<f64>,
    pub error: f64,
    pub backend: Backend,
    /// Upper bound on `error - optimum`; zero for the exact backends.
    pub certificate: f64,
}

impl ChebSolution {
    /// Full-length coefficient vector of the approximant.
    pub fn approximant(&self, n: usize) -> CoeffVec {
        let mut c = vec![0.0; n];
        for (i, a) in self.support.iter().zip(&self.coeffs) {
            c[i] = *a;
        }
        CoeffVec(c)
    }
}

/// Settings for the subgradient backend.
#[derive(Debug, Clone, Copy)]
pub struct SubgradientConfig {
    pub max_iter: usize,
    /// Certificate target, relative to `max(1, ‖x‖)`.
    pub rel_gap: f64,
    pub check_every: usize,
    pub polish_iter: usize,
}

impl Default for SubgradientConfig {
    fn default() -> Self {
        SubgradientConfig {
            max_iter: 10_000,
            rel_gap: 1e-6,
            check_every: 25,
            polish_iter: 60,
        }
    }
}

pub fn chebyshev_approximant(sys: &MinimalSystem, x: &CoeffVec, support: &IndexSet) -> Result<ChebSolution> {
    chebyshev_with(sys, x, support, Backend::for_norm(sys.norm_spec()))
}

/// Solves with an explicit backend. `LeastSquares` requires `p = 2`,
/// `Simplex` requires `p = 1` or the sup norm, `Subgradient` any `p > 1`.
pub fn chebyshev_with(sys: &MinimalSystem, x: &CoeffVec, support: &IndexSet, backend: Backend) -> Result<ChebSolution> {
    if x.len() != sys.size() {
        return Err(Error::DimensionMismatch {
            expected: sys.size(),
            found: x.len(),
        });
    }
    support.check_range(sys.size())?;
    let norm = sys.norm_spec();
    match (backend, norm.exponent()) {
        (Backend::LeastSquares, Some(2.0)) => {}
        (Backend::Simplex, None) => {}
        (Backend::Simplex, Some(1.0)) => {}
        (Backend::Subgradient, Some(p)) if p > 1.0 => {}
        _ => return Err(Error::Unsupported(format!("{backend:?} backend for norm {norm:?}"))),
    }
    let v = sys.synthesize_unchecked(x);
    let proj_resid = residual(x, support)?;
    let proj_err = sys.norm_of_unchecked(&proj_resid);
    let start: Vec<f64> = support.iter().map(|i| x[i]).collect();
    if support.is_empty() || proj_err == 0.0 {
        return Ok(ChebSolution {
            support: support.clone(),
            coeffs: start,
            error: proj_err,
            backend,
            certificate: 0.0,
        });
    }
    let problem = Problem::new(sys, &v, support);
    let (coeffs, certificate) = match backend {
        Backend::LeastSquares => problem.least_squares(),
        Backend::Simplex => match norm.exponent() {
            None => (problem.linf_lp()?, 0.0),
            Some(_) => (problem.l1_lp()?, 0.0),
        },
        Backend::Subgradient => {
            let p = norm.exponent().expect("checked above");
            let min_norm = support.iter().map(|i| sys.basis_norm(i)).fold(f64::INFINITY, f64::min);
            let scale = 2.0 * sys.norm_of_unchecked(x) / min_norm;
            problem.subgradient(
                p,
                &start,
                scale,
                sys.norm_of_unchecked(x),
                &SubgradientConfig::default(),
            )
        }
    };
    let error = problem.error_in(sys, x, &coeffs);
    if error <= proj_err {
        Ok(ChebSolution {
            support: support.clone(),
            coeffs,
            error,
            backend,
            certificate,
        })
    } else {
        // solver returned something worse than the feasible projection
        Ok(ChebSolution {
            support: support.clone(),
            coeffs: start,
            error: proj_err,
            backend,
            certificate: certificate + (proj_err - error).abs(),
        })
    }
}

/// The Chebyshev problem `min_a ‖v - B a‖` in weight-scaled coordinates,
/// where the weighted norm has become the plain ℓp norm.
struct Problem {
    target: Vec<f64>,
    /// columns[j] is the scaled ambient image of the j-th support vector
    columns: Vec<Vec<f64>>,
    support: Vec<usize>,
    weights_l1: Option<Vec<f64>>,
}

impl Problem {
    fn new(sys: &MinimalSystem, v: &[f64], support: &IndexSet) -> Self {
        let norm = sys.norm_spec();
        let scale: Vec<f64> = match norm {
            NormSpec::WeightedLp { p, weights } if *p != 1.0 => weights.iter().map(|w| w.powf(1.0 / p)).collect(),
            _ => vec![1.0; v.len()],
        };
        let weights_l1 = match norm {
            NormSpec::WeightedLp { p, weights } if *p == 1.0 => Some(weights.clone()),
            _ => None,
        };
        Problem {
            target: v.iter().zip(&scale).map(|(a, s)| a * s).collect(),
            columns: support
                .iter()
                .map(|i| sys.basis()[i].iter().zip(&scale).map(|(a, s)| a * s).collect())
                .collect(),
            support: support.iter().collect(),
            weights_l1,
        }
    }

    fn dim(&self) -> usize {
        self.target.len()
    }

    fn residual(&self, a: &[f64]) -> Vec<f64> {
        let mut r = self.target.clone();
        for (col, aj) in self.columns.iter().zip(a) {
            for (ri, ci) in r.iter_mut().zip(col) {
                *ri -= aj * ci;
            }
        }
        r
    }

    fn error_in(&self, sys: &MinimalSystem, x: &CoeffVec, a: &[f64]) -> f64 {
        let mut c = x.clone();
        for (i, aj) in self.support.iter().zip(a) {
            c[*i] -= aj;
        }
        sys.norm_of_unchecked(&c)
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), self.columns.len(), |i, j| self.columns[j][i])
    }

    fn least_squares(&self) -> (Vec<f64>, f64) {
        let b = self.matrix();
        let gram = b.transpose() * &b;
        let rhs = b.transpose() * DVector::from_column_slice(&self.target);
        let a = gram
            .svd(true, true)
            .solve(&rhs, 1e-13)
            .expect("SVD computed with both factors");
        let a: Vec<f64> = a.iter().copied().collect();
        let cert = self.certificate(2.0, &a);
        (a, cert)
    }

    /// min sum w_i (u_i + s_i)  s.t.  B a+ - B a- + u - s = v.
    fn l1_lp(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let k = self.columns.len();
        let cols = 2 * k + 2 * n;
        let mut a = vec![vec![0.0; cols]; n];
        for (i, row) in a.iter_mut().enumerate() {
            for j in 0..k {
                row[j] = self.columns[j][i];
                row[k + j] = -self.columns[j][i];
            }
            row[2 * k + i] = 1.0;
            row[2 * k + n + i] = -1.0;
        }
        let mut c = vec![0.0; cols];
        for i in 0..n {
            let w = self.weights_l1.as_ref().map_or(1.0, |w| w[i]);
            c[2 * k + i] = w;
            c[2 * k + n + i] = w;
        }
        let sol = lp::solve(&StandardLp {
            a,
            b: self.target.clone(),
            c,
        })?;
        Ok((0..k).map(|j| sol.z[j] - sol.z[k + j]).collect())
    }

    /// min t  s.t.  (B a)_i + t - s_i = v_i,  (B a)_i - t + s'_i = v_i.
    fn linf_lp(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let k = self.columns.len();
        let t = 2 * k;
        let cols = 2 * k + 1 + 2 * n;
        let mut a = vec![vec![0.0; cols]; 2 * n];
        for i in 0..n {
            for j in 0..k {
                a[i][j] = self.columns[j][i];
                a[i][k + j] = -self.columns[j][i];
                a[n + i][j] = self.columns[j][i];
                a[n + i][k + j] = -self.columns[j][i];
            }
            a[i][t] = 1.0;
            a[i][t + 1 + i] = -1.0;
            a[n + i][t] = -1.0;
            a[n + i][t + 1 + n + i] = 1.0;
        }
        let mut c = vec![0.0; cols];
        c[t] = 1.0;
        let mut b = self.target.clone();
        b.extend_from_slice(&self.target);
        let sol = lp::solve(&StandardLp { a, b, c })?;
        Ok((0..k).map(|j| sol.z[j] - sol.z[k + j]).collect())
    }

    /// Dual lower bound from the normalized gradient of the ℓp norm at the
    /// residual, projected onto the annihilator of the support columns.
    /// Returns `‖r‖ - bound`, clamped at zero.
    fn certificate(&self, p: f64, a: &[f64]) -> f64 {
        let r = self.residual(a);
        let err = lp_norm(&r, p);
        if err == 0.0 {
            return 0.0;
        }
        let lower = self.dual_lower_bound(p, &r, err);
        (err - lower).max(0.0)
    }

    fn dual_lower_bound(&self, p: f64, r: &[f64], err: f64) -> f64 {
        let y: Vec<f64> = r
            .iter()
            .map(|ri| ri.signum() * (ri.abs() / err).powf(p - 1.0))
            .collect();
        let b = self.matrix();
        let yv = DVector::from_column_slice(&y);
        let gram = b.transpose() * &b;
        let bty = b.transpose() * &yv;
        let Ok(coef) = gram.svd(true, true).solve(&bty, 1e-13) else {
            return 0.0;
        };
        let yhat = yv - b * coef;
        let qn = lp_norm(yhat.as_slice(), conjugate(p));
        if qn == 0.0 {
            return 0.0;
        }
        let pairing: f64 = yhat.iter().zip(&self.target).map(|(a, b)| a * b).sum();
        (pairing / qn).max(0.0)
    }

    /// Normalized subgradient steps `scale / sqrt(k)` with best-iterate
    /// tracking, then Newton steps on `‖r‖_p^p` if the certificate target
    /// was not met.
    fn subgradient(&self, p: f64, start: &[f64], scale: f64, xnorm: f64, cfg: &SubgradientConfig) -> (Vec<f64>, f64) {
        let tol = cfg.rel_gap * xnorm.max(1.0);
        let b = self.matrix();
        let mut a = start.to_vec();
        let mut best = a.clone();
        let mut best_val = lp_norm(&self.residual(&a), p);
        let mut best_lower = 0.0_f64;
        for k in 1..=cfg.max_iter {
            let r = self.residual(&a);
            let val = lp_norm(&r, p);
            if val < best_val {
                best_val = val;
                best.clone_from(&a);
            }
            if val == 0.0 {
                return (best, 0.0);
            }
            if k % cfg.check_every == 1 {
                best_lower = best_lower.max(self.dual_lower_bound(p, &r, val));
                if best_val - best_lower <= tol {
                    break;
                }
            }
            let y: Vec<f64> = r
                .iter()
                .map(|ri| ri.signum() * (ri.abs() / val).powf(p - 1.0))
                .collect();
            // gradient of ‖v - B a‖ is -B^T y
            let g: Vec<f64> = (0..a.len())
                .map(|j| -(0..self.dim()).map(|i| b[(i, j)] * y[i]).sum::<f64>())
                .collect();
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn == 0.0 {
                break;
            }
            let step = scale / (k as f64).sqrt();
            for (aj, gj) in a.iter_mut().zip(&g) {
                *aj -= step * gj / gn;
            }
        }
        let r = self.residual(&best);
        best_lower = best_lower.max(self.dual_lower_bound(p, &r, best_val));
        if best_val - best_lower > 1e-3 * tol {
            let (polished, val) = self.newton_polish(p, &best, cfg.polish_iter, 1e-3 * tol);
            if val < best_val {
                best_val = val;
                best = polished;
            }
            let r = self.residual(&best);
            best_lower = best_lower.max(self.dual_lower_bound(p, &r, best_val));
        }
        (best, (best_val - best_lower).max(0.0))
    }

    fn newton_polish(&self, p: f64, start: &[f64], iters: usize, tol: f64) -> (Vec<f64>, f64) {
        let b = self.matrix();
        let k = start.len();
        let phi = |a: &[f64]| -> f64 { self.residual(a).iter().map(|r| r.abs().powf(p)).sum() };
        let mut a = start.to_vec();
        let mut f = phi(&a);
        for _ in 0..iters {
            let r = self.residual(&a);
            let rmax = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if rmax == 0.0 {
                break;
            }
            let floor = 1e-10 * rmax;
            let mut grad = DVector::<f64>::zeros(k);
            let mut hess = DMatrix::<f64>::zeros(k, k);
            for i in 0..self.dim() {
                let ri = r[i];
                let g = -p * ri.signum() * ri.abs().powf(p - 1.0);
                let h = p * (p - 1.0) * ri.abs().max(floor).powf(p - 2.0);
                for j in 0..k {
                    grad[j] += g * b[(i, j)];
                    for l in 0..k {
                        hess[(j, l)] += h * b[(i, j)] * b[(i, l)];
                    }
                }
            }
            let ridge = 1e-14 * hess.diagonal().amax().max(1e-300);
            for j in 0..k {
                hess[(j, j)] += ridge;
            }
            let Ok(dir) = hess.svd(true, true).solve(&(-&grad), 1e-15) else {
                break;
            };
            let slope = grad.dot(&dir);
            if slope >= 0.0 {
                break;
            }
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..50 {
                let trial: Vec<f64> = a.iter().zip(dir.iter()).map(|(x, d)| x + t * d).collect();
                let ft = phi(&trial);
                if ft <= f + 1e-4 * t * slope {
                    a = trial;
                    moved = ft < f;
                    f = ft;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
            let val = f.powf(1.0 / p);
            let r = self.residual(&a);
            if val - self.dual_lower_bound(p, &r, val) <= tol {
                break;
            }
        }
        let val = lp_norm(&self.residual(&a), p);
        (a, val)
    }
}

fn lp_norm(v: &[f64], p: f64) -> f64 {
    NormSpec::Lp { p }.norm_unchecked(v)
}

/// Best `m`-term error, with the minimizing support and coefficients
/// (`σ_m`) or minimizing projection set (`σ̃_m`, `coeffs = None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MTermError {
    pub m: usize,
    pub value: f64,
    pub support: IndexSet,
    pub coeffs: Option<Vec<f64>>,
}

fn check_m(sys: &MinimalSystem, x: &CoeffVec, m: usize) -> Result<()> {
    if x.len() != sys.size() {
        return Err(Error::DimensionMismatch {
            expected: sys.size(),
            found: x.len(),
        });
    }
    if m > sys.size() {
        return Err(Error::TermCountOutOfRange {
            m,
            min: 0,
            max: sys.size(),
        });
    }
    Ok(())
}

/// `σ_m(x)`: minimum Chebyshev error over supports of size `min(m, N)`,
/// ties resolved toward the lexicographically smallest support.
pub fn sigma_m(sys: &MinimalSystem, x: &CoeffVec, m: usize) -> Result<MTermError> {
    check_m(sys, x, m)?;
    let n = sys.size();
    check_cap(binomial(n, m))?;
    let mut best: Option<MTermError> = None;
    for combo in (0..n).combinations(m) {
        let support = IndexSet::new(combo);
        let sol = chebyshev_approximant(sys, x, &support)?;
        if best.as_ref().is_none_or(|b| sol.error < b.value) {
            let done = sol.error == 0.0;
            best = Some(MTermError {
                m,
                value: sol.error,
                support,
                coeffs: Some(sol.coeffs),
            });
            if done {
                break;
            }
        }
    }
    Ok(best.expect("at least one support of each size exists"))
}

/// `σ̃_m(x)`: minimum of `‖x - P_A x‖` over every `|A| <= m`, enumerated by
/// cardinality and then lexicographically; the first minimizer is kept.
pub fn sigma_tilde_m(sys: &MinimalSystem, x: &CoeffVec, m: usize) -> Result<MTermError> {
    check_m(sys, x, m)?;
    let n = sys.size();
    check_cap((0..=m).map(|k| binomial(n, k)).sum())?;
    let mut best = MTermError {
        m,
        value: sys.norm_of_unchecked(x),
        support: IndexSet::empty(),
        coeffs: None,
    };
    for k in 1..=m {
        for combo in (0..n).combinations(k) {
            let set = IndexSet::new(combo);
            let val = sys.norm_of_unchecked(&residual(x, &set)?);
            if val < best.value {
                best.value = val;
                best.support = set;
            }
        }
    }
    Ok(best)
}

/// `σ_m(x)` for every `m = 0..=N`.
pub fn sigma_profile(sys: &MinimalSystem, x: &CoeffVec) -> Result<Vec<MTermError>> {
    (0..=sys.size()).map(|m| sigma_m(sys, x, m)).collect()
}

/// `σ̃_m(x)` for every `m = 0..=N`, from a single pass over all subsets.
pub fn sigma_tilde_profile(sys: &MinimalSystem, x: &CoeffVec) -> Result<Vec<MTermError>> {
    check_m(sys, x, 0)?;
    let n = sys.size();
    check_cap(1u128 << n.min(127))?;
    let mut per_card: Vec<MTermError> = (0..=n)
        .map(|k| MTermError {
            m: k,
            value: f64::INFINITY,
            support: IndexSet::empty(),
            coeffs: None,
        })
        .collect();
    for (k, best) in per_card.iter_mut().enumerate() {
        for combo in (0..n).combinations(k) {
            let set = IndexSet::new(combo);
            let val = sys.norm_of_unchecked(&residual(x, &set)?);
            if val < best.value {
                best.value = val;
                best.support = set;
            }
        }
    }
    let mut out: Vec<MTermError> = Vec::with_capacity(n + 1);
    for (m, cand) in per_card.into_iter().enumerate() {
        let best = match out.last() {
            Some(prev) if prev.value <= cand.value => MTermError { m, ..prev.clone() },
            _ => MTermError { m, ..cand },
        };
        out.push(best);
    }
    Ok(out)
}

/// Outcome of the null-approximant check for one `(x, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullApproximantCheck {
    pub m: usize,
    pub sigma: f64,
    pub support_size: usize,
    /// `‖x - P_supp(x) x‖`, recorded when `σ_m` vanished.
    pub projection_defect: Option<f64>,
    pub consistent: bool,
}

/// A vanishing `σ_m(x)` must come with `|supp(x)| <= m` and
/// `x = P_supp(x)(x)`; conversely a larger support forces `σ_m(x) > 0`.
pub fn null_approximant_check(sys: &MinimalSystem, x: &CoeffVec, m: usize) -> Result<NullApproximantCheck> {
    let sigma = sigma_m(sys, x, m)?.value;
    let supp = x.support();
    let vanished = sigma <= ZERO_ERROR_TOL;
    let (defect, consistent) = if vanished {
        let d = sys.norm_of_unchecked(&residual(x, &supp)?);
        (Some(d), supp.len() <= m && d <= 1e-8)
    } else {
        (None, supp.len() > m)
    };
    Ok(NullApproximantCheck {
        m,
        sigma,
        support_size: supp.len(),
        projection_defect: defect,
        consistent,
    })
}
