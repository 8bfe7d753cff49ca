//! Instance pools: generated from seed ranges or loaded from a directory.

use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use resplit_core::admm::SolverConfig;
use resplit_core::problem::{make_instance, GeneratorConfig, ProblemError, ProblemInstance, ScaleClass};

use crate::BenchError;

/// An instance with the identifier used in result tables.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedInstance {
    pub id: String,
    pub instance: ProblemInstance,
}

/// Generates `count` instances from consecutive seeds starting at
/// `first_seed`, identified as `<prefix><seed>`. Seeds whose sampling is infeasible are skipped and replaced by
/// the next seeds in order, so the result depends only on the arguments.
pub fn generate(
    prefix: &str,
    first_seed: u64,
    count: usize,
    rho: f64,
    scale: ScaleClass,
    generator: &GeneratorConfig,
    solver: &SolverConfig,
) -> Result<Vec<NamedInstance>, BenchError> {
    let mut out = Vec::with_capacity(count);
    let mut next = first_seed;
    let budget = first_seed + 10 * count.max(1) as u64;
    while out.len() < count {
        if next >= budget {
            return Err(BenchError::Infeasible(format!(
                "only {} of {count} {scale} instances at density {rho} could be generated",
                out.len()
            )));
        }
        let want = (count - out.len()) as u64;
        let seeds: Vec<u64> = (next..(next + want).min(budget)).collect();
        next += seeds.len() as u64;
        let made: Vec<(u64, Result<ProblemInstance, ProblemError>)> = seeds
            .into_par_iter()
            .map(|seed| (seed, make_instance(seed, rho, scale, generator, solver)))
            .collect();
        for (seed, result) in made {
            match result {
                Ok(instance) => out.push(NamedInstance {
                    id: format!("{prefix}{seed}"),
                    instance,
                }),
                Err(ProblemError::Infeasible(msg)) => warn!("skipping seed {seed}: {msg}"),
                Err(e) => return Err(BenchError::Problem(e)),
            }
        }
    }
    info!("generated {count} {scale} instances at density {rho}");
    Ok(out)
}

/// Loads every `*.json` instance in `dir`, ordered by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<NamedInstance>, BenchError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| BenchError::Infeasible(format!("cannot read instance pool {}: {e}", dir.display())))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(BenchError::Infeasible(format!("no instance files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let instance = ProblemInstance::load(p)
                .map_err(|e| BenchError::Infeasible(format!("{}: {e}", p.display())))?;
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(NamedInstance { id, instance })
        })
        .collect()
}

/// Writes each instance to `dir/<id>.json`.
pub fn save_dir(instances: &[NamedInstance], dir: &Path) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir)?;
    for named in instances {
        named.instance.save(&dir.join(format!("{}.json", named.id)))?;
    }
    Ok(())
}
