//! Error types shared across the analysis pipeline.

use thiserror::Error;

/// Which phase of the combinatorial-relaxation loop an error belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Phase 1: signature / assignment / offsets.
    Structural,
    /// Phase 2: numeric rank evaluation at points.
    Rank,
    /// Phase 3: embedding / augmentation.
    Embedding,
    /// Numerical solution stage.
    Numeric,
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::Structural => "phase 1 (structural)",
            Phase::Rank => "phase 2 (rank)",
            Phase::Embedding => "phase 3 (embedding)",
            Phase::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum IdaeError {
    #[error("{0}")]
    Parse(#[from] ParseError),

    #[error("system is not square: {equations} equations, {variables} variables")]
    NonSquare { equations: usize, variables: usize },

    #[error("equation {index} is empty")]
    EmptyEquation { index: usize },

    #[error("equation {index}: kernel degree {degree} exceeds cap {cap}")]
    KernelDegree { index: usize, degree: usize, cap: usize },

    #[error("equation {index}: integrand contains bare t; all t-dependence must live in the kernel")]
    BareTInIntegrand { index: usize },

    #[error("equation {equation} references unknown variable {var}")]
    UnknownVariable { equation: usize, var: String },

    #[error("phase 1 (structural): row {row} of the signature matrix is entirely -inf; system is structurally singular")]
    SingularRow { row: usize },

    #[error("phase 1 (structural): the signature matrix does not admit a perfect matching")]
    NoPerfectMatching,

    #[error("phase 1 (structural): smoothing search for equation {equation}, variable {variable} exceeded cap {cap}")]
    SmoothingCapExceeded { equation: usize, variable: usize, cap: usize },

    #[error("phase 2 (rank): {0}")]
    RankEvaluation(String),

    #[error("phase 2 (rank): mixed ranks within one component group: {0}")]
    ConstantRankViolation(String),

    #[error("phase 3 (embedding): {0}")]
    Embedding(String),

    #[error("phase 3 (embedding): degrees of freedom would drop below zero; no consistent regularization on this component")]
    DofUnderflow,

    #[error("phase 3 (embedding): iteration cap reached after {0} augmentations")]
    IterationCap(usize),

    #[error("numeric: {0}")]
    Numeric(String),

    #[error("expression error: {0}")]
    Expr(#[from] crate::expr::ExprError),
}

impl IdaeError {
    pub fn phase(&self) -> Phase {
        match self {
            IdaeError::Parse(_)
            | IdaeError::NonSquare { .. }
            | IdaeError::EmptyEquation { .. }
            | IdaeError::KernelDegree { .. }
            | IdaeError::BareTInIntegrand { .. }
            | IdaeError::UnknownVariable { .. }
            | IdaeError::SingularRow { .. }
            | IdaeError::NoPerfectMatching
            | IdaeError::SmoothingCapExceeded { .. } => Phase::Structural,
            IdaeError::RankEvaluation(_) | IdaeError::ConstantRankViolation(_) => Phase::Rank,
            IdaeError::Embedding(_) | IdaeError::DofUnderflow | IdaeError::IterationCap(_) => {
                Phase::Embedding
            }
            IdaeError::Numeric(_) | IdaeError::Expr(_) => Phase::Numeric,
        }
    }

    /// Exit-code class: 2 = structural failure, 3 = numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self.phase() {
            Phase::Structural | Phase::Embedding => 2,
            Phase::Rank | Phase::Numeric => 3,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("parse error at {line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError { line, column, message: message.into() }
    }
}
