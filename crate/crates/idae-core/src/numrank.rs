//! Numerical rank via singular values, with deterministic pivot selection by
//! complete pivoting and grouping of evaluation points by rank signature.

use crate::error::IdaeError;
use nalgebra::DMatrix;

/// Relative rank tolerance (against the largest singular value).
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    pub row_pivots: Vec<usize>,
    pub col_pivots: Vec<usize>,
    pub singular_values: Vec<f64>,
    pub tolerance_used: f64,
}

/// Rank decided by the singular value spectrum: r is the number of singular
/// values above `tol` relative to the largest. Pivot rows/columns are chosen
/// by complete-pivot elimination so the leading r x r minor is well
/// conditioned; ties resolve to the smallest indices.
pub fn numeric_rank(m: &DMatrix<f64>, tol: f64) -> Result<RankReport, IdaeError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(IdaeError::RankEvaluation("matrix has non-finite entries".into()));
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let s1 = sv.first().copied().unwrap_or(0.0);
    let rank = if s1 <= 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s / s1 > tol).count()
    };

    let mut work = m.clone();
    let mut row_pivots = Vec::with_capacity(rank);
    let mut col_pivots = Vec::with_capacity(rank);
    let mut row_used = vec![false; m.nrows()];
    let mut col_used = vec![false; m.ncols()];
    for _ in 0..rank {
        let mut best = (0usize, 0usize, -1.0f64);
        for i in 0..m.nrows() {
            if row_used[i] {
                continue;
            }
            for j in 0..m.ncols() {
                if col_used[j] {
                    continue;
                }
                let a = work[(i, j)].abs();
                if a > best.2 {
                    best = (i, j, a);
                }
            }
        }
        let (pi, pj, mag) = best;
        if mag <= 0.0 {
            break;
        }
        row_pivots.push(pi);
        col_pivots.push(pj);
        row_used[pi] = true;
        col_used[pj] = true;
        let pivot = work[(pi, pj)];
        for i in 0..m.nrows() {
            if row_used[i] {
                continue;
            }
            let factor = work[(i, pj)] / pivot;
            for j in 0..m.ncols() {
                if !col_used[j] {
                    work[(i, j)] -= factor * work[(pi, j)];
                }
            }
            work[(i, pj)] = 0.0;
        }
    }

    Ok(RankReport { rank, row_pivots, col_pivots, singular_values: sv, tolerance_used: tol })
}

/// One evaluation point's rank data with a grouping key.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRank {
    pub point_index: usize,
    pub report: RankReport,
}

impl PointRank {
    /// Grouping key: rank plus the sorted pivot-column set.
    pub fn key(&self) -> (usize, Vec<usize>) {
        let mut cols = self.report.col_pivots.clone();
        cols.sort_unstable();
        (self.report.rank, cols)
    }
}

/// Rank plus sorted pivot-column set.
pub type RankKey = (usize, Vec<usize>);

/// Group evaluated Jacobians by (rank, pivot-column set). Points sharing a key
/// are candidates for the same component.
pub fn group_by_rank(reports: Vec<PointRank>) -> Vec<(usize, Vec<usize>, Vec<PointRank>)> {
    let mut groups: Vec<(RankKey, Vec<PointRank>)> = Vec::new();
    for r in reports {
        let key = r.key();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((rank, cols), members)| (rank, cols, members))
        .collect()
}

/// Require every point of an assumed-connected group to agree on rank and
/// pivot columns; names the offenders otherwise.
pub fn check_group_consistency(reports: &[PointRank]) -> Result<(), IdaeError> {
    if let Some(first) = reports.first() {
        let key = first.key();
        for r in &reports[1..] {
            if r.key() != key {
                return Err(IdaeError::ConstantRankViolation(format!(
                    "point {} has rank {} with pivots {:?}, point {} has rank {} with pivots {:?}",
                    first.point_index,
                    first.report.rank,
                    first.report.col_pivots,
                    r.point_index,
                    r.report.rank,
                    r.report.col_pivots,
                )));
            }
        }
    }
    Ok(())
}
