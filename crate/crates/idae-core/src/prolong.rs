//! Prolongation of a system up to per-equation orders c, the triangular block
//! partition, and the symbolic Jacobian of the top block.

use crate::error::IdaeError;
use crate::expr::{Expr, JetVar};
use crate::model::{IdaeEquation, IdaeSystem, IntegralTerm};
use crate::offsets::OffsetSolution;
use crate::signature::SignatureMatrix;
use nalgebra::DMatrix;
use std::collections::BTreeMap;

/// One equation of the prolonged system with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProlongedEq {
    pub dae: Expr,
    pub integrals: Vec<IntegralTerm>,
    /// Index of the source equation in the base system.
    pub source: usize,
    /// How many total derivatives were applied.
    pub order: u32,
}

impl ProlongedEq {
    /// Leibniz-aware total derivative: integral terms contribute a boundary
    /// expression plus a lower-degree kernel.
    pub fn derive(&self) -> Result<ProlongedEq, IdaeError> {
        let mut dae = self.dae.total_derivative()?;
        let mut integrals = Vec::new();
        for term in &self.integrals {
            let (boundary, rest) = term.leibniz_derivative();
            dae = dae.add(&boundary);
            if let Some(rest) = rest {
                integrals.push(rest);
            }
        }
        Ok(ProlongedEq { dae, integrals, source: self.source, order: self.order + 1 })
    }

    pub fn as_equation(&self) -> IdaeEquation {
        IdaeEquation::new(self.dae.clone(), self.integrals.clone())
    }
}

/// The prolonged system F^(c) with its block structure.
#[derive(Debug, Clone)]
pub struct ProlongedSystem {
    /// `chains[i][k]` is the k-th derivative of equation i, for k = 0..=c_i.
    pub chains: Vec<Vec<ProlongedEq>>,
    pub c: Vec<i64>,
    pub d: Vec<i64>,
    pub k_c: i64,
    pub k_d: i64,
    /// Leading jet variable x_j^(d_j) per dependent variable.
    pub leading: Vec<JetVar>,
}

impl ProlongedSystem {
    pub fn n(&self) -> usize {
        self.chains.len()
    }

    pub fn equation_count(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    /// Block B_p = { F_j^(p + c_j - k_c) : p + c_j - k_c >= 0 }.
    pub fn block(&self, p: i64) -> Vec<&ProlongedEq> {
        let mut rows = Vec::new();
        for (j, chain) in self.chains.iter().enumerate() {
            let k = p + self.c[j] - self.k_c;
            if (0..=self.c[j]).contains(&k) {
                rows.push(&chain[k as usize]);
            }
        }
        rows
    }

    pub fn top_block(&self) -> Vec<&ProlongedEq> {
        self.block(self.k_c)
    }

    /// All equations strictly below the top block (the constraints F^(c-1)).
    pub fn constraints(&self) -> Vec<&ProlongedEq> {
        let mut rows = Vec::new();
        for (j, chain) in self.chains.iter().enumerate() {
            for k in 0..self.c[j] {
                let _ = j;
                rows.push(&chain[k as usize]);
            }
        }
        rows
    }

    /// Row indices (into the variable list) of block p's sub-Jacobian in the
    /// top-block Jacobian, per the sub-matrix chain.
    pub fn sub_jacobian_index(&self, p: i64) -> (Vec<usize>, Vec<usize>) {
        let rows = (0..self.n())
            .filter(|&i| p + self.c[i] - self.k_c >= 0)
            .collect();
        let cols = (0..self.n())
            .filter(|&j| p + self.d[j] - self.k_c >= 0)
            .collect();
        (rows, cols)
    }
}

/// Prolong a system by the offset vector c.
pub fn prolong(sys: &IdaeSystem, offsets: &OffsetSolution) -> Result<ProlongedSystem, IdaeError> {
    let n = sys.n();
    assert_eq!(offsets.c.len(), n);
    let mut chains = Vec::with_capacity(n);
    for (i, eq) in sys.equations.iter().enumerate() {
        let mut chain = vec![ProlongedEq {
            dae: eq.dae.clone(),
            integrals: eq.integrals.clone(),
            source: i,
            order: 0,
        }];
        for _ in 0..offsets.c[i] {
            let next = chain.last().unwrap().derive()?;
            chain.push(next);
        }
        chains.push(chain);
    }
    let k_c = offsets.c.iter().copied().max().unwrap_or(0);
    let k_d = offsets.d.iter().copied().max().unwrap_or(0);
    let leading = (0..n)
        .map(|j| JetVar {
            kind: sys.variables[j].kind,
            index: j,
            order: offsets.d[j] as u32,
        })
        .collect();
    Ok(ProlongedSystem { chains, c: offsets.c.clone(), d: offsets.d.clone(), k_c, k_d, leading })
}

/// Symbolic Jacobian of the top block with respect to the leading variables.
/// Integral terms carry no leading jets at time t and contribute nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockJacobian {
    pub entries: Vec<Vec<Expr>>,
    pub leading: Vec<JetVar>,
}

impl BlockJacobian {
    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn evaluate(
        &self,
        sys: &IdaeSystem,
        point: &BTreeMap<JetVar, f64>,
        t: f64,
    ) -> Result<DMatrix<f64>, IdaeError> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let v = sys
                    .eval_equation_dae(&self.entries[i][j], point, t)
                    .map_err(|e| IdaeError::RankEvaluation(format!(
                        "Jacobian entry ({i},{j}): {e}"
                    )))?;
                if !v.is_finite() {
                    return Err(IdaeError::RankEvaluation(format!(
                        "Jacobian entry ({i},{j}) is not finite"
                    )));
                }
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }
}

pub fn block_jacobian(prolonged: &ProlongedSystem) -> BlockJacobian {
    let top = prolonged.top_block();
    let entries = top
        .iter()
        .map(|row| {
            prolonged
                .leading
                .iter()
                .map(|lv| row.dae.partial(lv))
                .collect()
        })
        .collect();
    BlockJacobian { entries, leading: prolonged.leading.clone() }
}

/// Signature matrix of a list of prolonged equations viewed as a fresh system
/// (integrands included through their own leading orders). Used by invariants
/// and the embedding re-analysis.
pub fn block_signature(rows: &[&ProlongedEq], n: usize) -> SignatureMatrix {
    let mut m = SignatureMatrix::filled(rows.len(), n, None);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..n {
            let mut best = row.dae.leading_order(j).map(|k| k as i64);
            for term in &row.integrals {
                if let Some(k) = term.integrand.leading_order(j) {
                    let k = k as i64;
                    best = Some(best.map_or(k, |b| b.max(k)));
                }
            }
            m.set(i, j, best);
        }
    }
    m
}
