//! Data-parallel sweeps over independent inputs: scenario cohorts, random
//! network checks, codec round trips.
//!
//! With the `parallel` feature, [`Execution::Parallel`] uses the rayon pool.
//! Without it, both modes run sequentially.

use crate::guideline::GuidelineDefinition;
use crate::scenario::{run_scenario, Scenario, ScenarioError, ScenarioReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether `Parallel` actually uses more than one thread in this build.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Maps `f` over `items`, keeping input order.
pub fn par_map<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => items.iter().map(f).collect(),
        Execution::Parallel => parallel_map(items, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Runs each scenario against its own runtime.
pub fn run_scenarios(
    jobs: &[(&GuidelineDefinition, &Scenario)],
    exec: Execution,
) -> Vec<Result<ScenarioReport, ScenarioError>> {
    par_map(jobs, exec, |(def, sc)| run_scenario(def, sc))
}
