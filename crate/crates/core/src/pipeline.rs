//! End-to-end orchestration: validate, index, build the call graph, find
//! candidates, analyze each one, and assemble the report.
//!
//! Candidate analyses are independent, so they run on a small worker pool.
//! Workers pull candidate indices from a shared counter and keep their
//! results tagged with those indices; the merge step reorders them into
//! input order before the report is built. Reports are therefore
//! byte-identical for any worker count.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::callgraph::{build_call_graph, CallGraph};
use crate::candidates::{find_candidates, Candidate};
use crate::index::{index_factory, CompiledPolicy, FactoryIndex, IndexError};
use crate::ingest::Policy;
use crate::model::{validate_factory, Factory, Severity, Violation};
use crate::report::{build_report, Report};
use crate::roleflow::{analyze_candidate, CandidateAnalysis, Limits};

/// Tuning for one [`analyze_factory`] run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisOptions {
    pub max_atoms: usize,
    pub max_paths: usize,
    pub max_summary_states: usize,
    /// Worker threads for candidate analysis; clamped to at least 1.
    pub jobs: usize,
    /// Timestamp to stamp into the report, if any. Kept out of the report
    /// by default so identical inputs give identical bytes.
    pub generated_at: Option<String>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        let limits = Limits::default();
        AnalysisOptions {
            max_atoms: limits.max_atoms,
            max_paths: limits.max_paths,
            max_summary_states: limits.max_summary_states,
            jobs: 1,
            generated_at: None,
        }
    }
}

/// Everything one run produces: the report plus the artifacts the run
/// had to build anyway.
#[derive(Debug)]
pub struct FactoryAnalysis {
    pub report: Report,
    pub graph: CallGraph,
    /// Non-blocking validation findings (orphan actions and the like).
    pub warnings: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error("factory failed validation with {} blocking violation(s)", .0.len())]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Index(#[from] IndexError),
}

pub fn analyze_factory(
    factory: &Factory,
    policy: &Policy,
    options: &AnalysisOptions,
) -> Result<FactoryAnalysis, PipelineError> {
    let mut violations = validate_factory(factory);
    if violations.iter().any(|v| v.severity == Severity::Error) {
        violations.retain(|v| v.severity == Severity::Error);
        return Err(PipelineError::Invalid(violations));
    }

    let index = index_factory(factory)?;
    let compiled = index.compile_policy(policy)?;
    let graph = build_call_graph(&index);
    let candidates = find_candidates(&graph, &index, &compiled, options.max_paths);

    let limits = Limits {
        max_atoms: options.max_atoms,
        max_summary_states: options.max_summary_states,
        max_paths: options.max_paths,
    };
    let analyses = run_candidates(&index, &candidates, &compiled, &limits, options.jobs);
    let report = build_report(&index, &candidates, &analyses, options.generated_at.as_deref());

    Ok(FactoryAnalysis {
        report,
        graph,
        warnings: violations,
    })
}

fn run_candidates(
    index: &FactoryIndex<'_>,
    candidates: &[Candidate],
    policy: &CompiledPolicy,
    limits: &Limits,
    jobs: usize,
) -> Vec<CandidateAnalysis> {
    let jobs = jobs.max(1).min(candidates.len().max(1));
    if jobs == 1 {
        return candidates
            .iter()
            .map(|c| analyze_candidate(index, c, policy, limits))
            .collect();
    }

    let next = AtomicUsize::new(0);
    let mut tagged: Vec<(usize, CandidateAnalysis)> = std::thread::scope(|scope| {
        let workers: Vec<_> = (0..jobs)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(candidate) = candidates.get(i) else {
                            return local;
                        };
                        local.push((i, analyze_candidate(index, candidate, policy, limits)));
                    }
                })
            })
            .collect();
        workers
            .into_iter()
            .flat_map(|w| w.join().expect("analysis worker panicked"))
            .collect()
    });

    tagged.sort_by_key(|(i, _)| *i);
    debug_assert!(tagged.iter().enumerate().all(|(k, (i, _))| k == *i));
    tagged.into_iter().map(|(_, a)| a).collect()
}
