//! Signature matrices for IDAE systems: the DAE part, the integral part with
//! its smoothing indices, and their elementwise combination. Degeneration of
//! smoothing expressions is detected numerically at caller-supplied points.

use crate::error::IdaeError;
use crate::expr::{Expr, JetVar, VarKind};
use crate::model::{IdaeSystem, IntegralTerm};
use std::collections::BTreeMap;

/// Entry of a signature matrix; `None` encodes -infinity.
pub type SigEntry = Option<i64>;

/// Dense matrix over Z union {-inf}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureMatrix {
    pub rows: usize,
    pub cols: usize,
    entries: Vec<SigEntry>,
}

impl SignatureMatrix {
    pub fn filled(rows: usize, cols: usize, v: SigEntry) -> Self {
        SignatureMatrix { rows, cols, entries: vec![v; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<SigEntry>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c));
        SignatureMatrix { rows: r, cols: c, entries: rows.into_iter().flatten().collect() }
    }

    pub fn get(&self, i: usize, j: usize) -> SigEntry {
        self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: SigEntry) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[SigEntry] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    /// Elementwise max.
    pub fn max(&self, other: &SignatureMatrix) -> SignatureMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        SignatureMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| match (a, b) {
                    (None, x) => *x,
                    (x, None) => *x,
                    (Some(a), Some(b)) => Some(*(a.max(b))),
                })
                .collect(),
        }
    }

    pub fn to_vecs(&self) -> Vec<Vec<SigEntry>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Smoothing index: the smallest admissible derivative count, or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upsilon {
    Finite(u32),
    Infinite,
}

impl Upsilon {
    pub fn as_option(&self) -> Option<u32> {
        match self {
            Upsilon::Finite(v) => Some(*v),
            Upsilon::Infinite => None,
        }
    }
}

/// Per-(equation, variable) smoothing data.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingEntry {
    pub upsilon: Upsilon,
    pub omega: u32,
    pub degenerate: bool,
}

impl SmoothingEntry {
    fn absent() -> Self {
        SmoothingEntry { upsilon: Upsilon::Infinite, omega: 0, degenerate: false }
    }
}

/// Tunables for the smoothing computation.
#[derive(Debug, Clone)]
pub struct SmoothingOptions {
    pub upsilon_cap: usize,
    pub omega_cap: usize,
    pub degeneration_tol: f64,
}

impl Default for SmoothingOptions {
    fn default() -> Self {
        SmoothingOptions { upsilon_cap: 10, omega_cap: 10, degeneration_tol: 1e-8 }
    }
}

/// Evaluation point for degeneration testing.
pub type EvalPoint = BTreeMap<JetVar, f64>;

/// The combined structural data of one analysis pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureAnalysis {
    pub sigma_dae: SignatureMatrix,
    pub sigma_iae: SignatureMatrix,
    pub sigma: SignatureMatrix,
    pub upsilon: Vec<Vec<Upsilon>>,
    pub omega: Vec<Vec<u32>>,
    pub degenerate: Vec<Vec<bool>>,
}

impl SignatureAnalysis {
    pub fn n(&self) -> usize {
        self.sigma.rows
    }

    /// Per-variable maximum of omega over all equations.
    pub fn omega_col_max(&self) -> Vec<u32> {
        let n = self.n();
        (0..n)
            .map(|j| (0..n).map(|i| self.omega[i][j]).max().unwrap_or(0))
            .collect()
    }
}

/// Signature matrix of the DAE parts: entry (i,j) is the leading derivative
/// order of variable j in the i-th DAE part.
pub fn dae_signature(phi: &[Expr]) -> SignatureMatrix {
    let n = phi.len();
    let mut m = SignatureMatrix::filled(n, n, None);
    for (i, e) in phi.iter().enumerate() {
        for j in 0..n {
            m.set(i, j, e.leading_order(j).map(|k| k as i64));
        }
    }
    m
}

/// Smoothing indices of one equation's integral terms with respect to
/// variable `j`.
///
/// The chain expression at derivative count p is the p-th formal t-derivative
/// of kernel * integrand restricted to s = t, summed over the equation's
/// terms. Its gradient with respect to the jets of variable j decides:
/// upsilon is the smallest p+1 whose gradient is symbolically nonzero and does
/// not vanish at every supplied evaluation point; omega is the largest p+1
/// whose gradient is symbolically nonzero.
pub fn smoothing_indices(
    terms: &[IntegralTerm],
    j: usize,
    eval_points: &[EvalPoint],
    opts: &SmoothingOptions,
) -> Result<SmoothingEntry, IdaeError> {
    if terms.is_empty() {
        return Ok(SmoothingEntry::absent());
    }
    let max_degree = terms.iter().map(IntegralTerm::degree).max().unwrap_or(0);
    let p_stop = max_degree.min(opts.upsilon_cap.max(opts.omega_cap));

    let mut upsilon = Upsilon::Infinite;
    let mut omega = 0u32;
    let mut degenerate = false;

    for p in 0..=p_stop {
        let mut chain = Expr::zero();
        for term in terms {
            chain = chain.add(&term.diagonal_chain(p));
        }
        if chain.is_zero() {
            continue;
        }
        let grads: Vec<Expr> = chain
            .jet_vars()
            .into_iter()
            .filter(|v| v.index == j && v.kind != VarKind::EmbeddedXi)
            .map(|v| chain.partial(&v))
            .filter(|g| !g.is_zero())
            .collect();
        if grads.is_empty() {
            continue;
        }
        omega = (p + 1) as u32;
        if matches!(upsilon, Upsilon::Infinite) {
            let alive = if eval_points.is_empty() {
                true
            } else {
                let mut seen_value = false;
                let mut any_alive = false;
                for pt in eval_points {
                    for g in &grads {
                        match g.eval_point(pt, 0.0) {
                            Ok(v) => {
                                seen_value = true;
                                if v.abs() >= opts.degeneration_tol {
                                    any_alive = true;
                                }
                            }
                            Err(_) => {
                                // Points that do not carry every jet cannot
                                // veto a symbolically nonzero gradient.
                                any_alive = true;
                                seen_value = true;
                            }
                        }
                    }
                }
                any_alive || !seen_value
            };
            if alive {
                upsilon = Upsilon::Finite((p + 1) as u32);
            } else {
                degenerate = true;
            }
        }
    }

    if max_degree > opts.upsilon_cap.max(opts.omega_cap) {
        // Kernel degree beyond the caps: the chain may continue past where we
        // searched. Report the unresolved search.
        return Err(IdaeError::SmoothingCapExceeded {
            equation: usize::MAX,
            variable: j,
            cap: opts.upsilon_cap,
        });
    }

    Ok(SmoothingEntry { upsilon, omega, degenerate })
}

/// Signature matrix of the integral parts: entry (i,j) is the leading order of
/// variable j over equation i's integrands minus the smoothing index, or -inf
/// when the variable is absent or infinitely smoothing.
pub fn iae_signature(
    integrals: &[Vec<IntegralTerm>],
    upsilon: &[Vec<Upsilon>],
) -> SignatureMatrix {
    let n = integrals.len();
    let mut m = SignatureMatrix::filled(n, n, None);
    for (i, terms) in integrals.iter().enumerate() {
        for (j, ups) in upsilon[i].iter().enumerate() {
            let ld = terms
                .iter()
                .filter_map(|t| t.integrand.leading_order(j))
                .max();
            let entry = match (ld, ups) {
                (Some(ld), Upsilon::Finite(u)) => Some(ld as i64 - *u as i64),
                _ => None,
            };
            m.set(i, j, entry);
        }
    }
    m
}

/// Build the full signature analysis of a system. `eval_points` feed the
/// degeneration test; pass none for the purely symbolic verdict.
pub fn combined_signature(
    sys: &IdaeSystem,
    eval_points: &[EvalPoint],
    opts: &SmoothingOptions,
) -> Result<SignatureAnalysis, IdaeError> {
    let (phi, integrals) = sys.decompose();
    let n = sys.n();
    let sigma_dae = dae_signature(&phi);

    let mut upsilon = vec![vec![Upsilon::Infinite; n]; n];
    let mut omega = vec![vec![0u32; n]; n];
    let mut degenerate = vec![vec![false; n]; n];
    for (i, terms) in integrals.iter().enumerate() {
        for (j, slot) in upsilon[i].iter_mut().enumerate() {
            let entry = smoothing_indices(terms, j, eval_points, opts).map_err(|e| match e {
                IdaeError::SmoothingCapExceeded { variable, cap, .. } => {
                    IdaeError::SmoothingCapExceeded { equation: i, variable, cap }
                }
                other => other,
            })?;
            *slot = entry.upsilon;
            omega[i][j] = entry.omega;
            degenerate[i][j] = entry.degenerate;
        }
    }

    let sigma_iae = iae_signature(&integrals, &upsilon);
    let sigma = sigma_dae.max(&sigma_iae);
    for i in 0..n {
        if sigma.row(i).iter().all(Option::is_none) {
            return Err(IdaeError::SingularRow { row: i });
        }
    }
    Ok(SignatureAnalysis { sigma_dae, sigma_iae, sigma, upsilon, omega, degenerate })
}
