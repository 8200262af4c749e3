//! Serializable analysis report (schema 1). Signature entries of -infinity
//! and infinite smoothing indices encode as JSON null.

use crate::expr::rat_to_f64;
use crate::pipeline::PipelineResult;
use crate::signature::Upsilon;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub schema: u32,
    pub system: SystemEcho,
    pub signature: SignatureReport,
    pub offsets: OffsetsReport,
    pub blocks: Vec<BlockReport>,
    pub witness: Option<WitnessReport>,
    pub components: Vec<ComponentReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemEcho {
    pub name: String,
    pub variables: Vec<String>,
    pub t0: f64,
    pub equations: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SignatureReport {
    pub dae: Vec<Vec<Option<i64>>>,
    pub iae: Vec<Vec<Option<i64>>>,
    pub combined: Vec<Vec<Option<i64>>>,
    pub upsilon: Vec<Vec<Option<u32>>>,
    pub omega: Vec<Vec<u32>>,
    pub degenerate: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OffsetsReport {
    pub c: Vec<i64>,
    pub d: Vec<i64>,
    pub delta: i64,
    pub hvt: Vec<usize>,
    pub dof: i64,
    pub exposure: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub level: i64,
    pub equations: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessReport {
    pub paths_tracked: usize,
    pub path_failures: usize,
    pub slices_added: usize,
    pub points: Vec<WitnessPointReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessPointReport {
    pub coords: BTreeMap<String, f64>,
    pub residual: f64,
    pub component: usize,
    pub refined: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentReport {
    pub id: usize,
    pub rank: usize,
    pub method: String,
    pub iterations: usize,
    pub dof: i64,
    pub replaced: Vec<String>,
    pub kept_rows: Vec<String>,
    pub witness_residual: f64,
    pub trace: Vec<IterationReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationReport {
    pub c: Vec<i64>,
    pub d: Vec<i64>,
    pub delta: i64,
    pub dof: i64,
    pub rank: usize,
    pub size: usize,
    pub replaced: Vec<String>,
}

pub fn build_report(result: &PipelineResult) -> AnalysisReport {
    let sys = &result.system;
    let system = SystemEcho {
        name: sys.name.clone(),
        variables: sys.variables.iter().map(|v| v.name.clone()).collect(),
        t0: rat_to_f64(&sys.t0),
        equations: sys
            .equations
            .iter()
            .map(|eq| format!("{} = 0", sys.equation_string(eq)))
            .collect(),
    };
    let signature = SignatureReport {
        dae: result.analysis.sigma_dae.to_vecs(),
        iae: result.analysis.sigma_iae.to_vecs(),
        combined: result.analysis.sigma.to_vecs(),
        upsilon: result
            .analysis
            .upsilon
            .iter()
            .map(|row| row.iter().map(Upsilon::as_option).collect())
            .collect(),
        omega: result.analysis.omega.clone(),
        degenerate: result.analysis.degenerate.clone(),
    };
    let offsets = OffsetsReport {
        c: result.offsets.c.clone(),
        d: result.offsets.d.clone(),
        delta: result.offsets.delta,
        hvt: result.offsets.hvt.clone(),
        dof: result.dof,
        exposure: result.offsets.exposure,
    };
    let blocks = (0..=result.prolonged.k_c)
        .map(|p| BlockReport {
            level: p,
            equations: result
                .prolonged
                .block(p)
                .iter()
                .map(|row| {
                    format!(
                        "eq{}^({}): {} = 0",
                        row.source + 1,
                        row.order,
                        sys.equation_string(&row.as_equation())
                    )
                })
                .collect(),
        })
        .collect();
    let witness = result.witness.as_ref().map(|(points, summary)| WitnessReport {
        paths_tracked: summary.paths_tracked,
        path_failures: summary.path_failures,
        slices_added: summary.slices_added,
        points: points
            .iter()
            .map(|p| WitnessPointReport {
                coords: p
                    .coords
                    .iter()
                    .map(|(var, value)| (sys.var_name(var), *value))
                    .collect(),
                residual: p.residual,
                component: p.component_id,
                refined: p.refined,
            })
            .collect(),
    });
    let components = result
        .components
        .iter()
        .map(|c| ComponentReport {
            id: c.id,
            rank: c.initial_rank,
            method: c.method.clone(),
            iterations: c.augmentations,
            dof: c.dof,
            replaced: c.replaced.clone(),
            kept_rows: c.kept_rows.clone(),
            witness_residual: c.witness_residual,
            trace: c
                .regularized
                .iterations
                .iter()
                .map(|it| IterationReport {
                    c: it.c.clone(),
                    d: it.d.clone(),
                    delta: it.delta,
                    dof: it.dof,
                    rank: it.rank,
                    size: it.size,
                    replaced: it.replaced.clone(),
                })
                .collect(),
        })
        .collect();
    AnalysisReport {
        schema: 1,
        system,
        signature,
        offsets,
        blocks,
        witness,
        components,
        warnings: result.warnings.clone(),
    }
}
