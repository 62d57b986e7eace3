//! Linear algebra compiler: maps matrix equations onto sequences of
//! BLAS/LAPACK-style kernel calls, ranks them by symbolic cost, schedules
//! them inside loop nests and validates them against a direct evaluation.

pub mod codegen;
pub mod cost;
pub mod derivation;
pub mod expr;
pub mod kernels;
pub mod problem;
pub mod properties;
pub mod refexec;
pub mod report;
pub mod rewrite;
pub mod seqloop;
