use std::hint::black_box;

use carepath_core::batch::{par_map, run_scenarios, Execution};
use carepath_core::dsl;
use carepath_core::guideline::GuidelineDefinition;
use carepath_core::runtime::Runtime;
use carepath_core::scenario::Scenario;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[path = "../tests/support/netgen.rs"]
mod netgen;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn networks(n: u64) -> Vec<(u64, GuidelineDefinition)> {
    (0..n)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (seed, dsl::parse(&netgen::random_document(&mut rng, 10)).unwrap())
        })
        .collect()
}

fn check_network((seed, def): &(u64, GuidelineDefinition)) -> bool {
    let rt = Runtime::virtual_at(netgen::t0());
    rt.deploy(def.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let case = netgen::drive(&rt, def, &mut rng).unwrap();
    netgen::check_case(def, &rt.case_events(&case)).is_ok()
}

fn random_networks(c: &mut Criterion) {
    let nets = networks(200);
    let mut group = c.benchmark_group("random_networks");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| black_box(par_map(&nets, mode, check_network)))
        });
    }
    group.finish();
}

fn scenario_cohort(c: &mut Criterion) {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures");
    let def = dsl::parse(&std::fs::read_to_string(format!("{root}/guidelines/chest_pain.json")).unwrap()).unwrap();
    let scenarios: Vec<Scenario> = ["good_good", "bad_results", "low_risk", "mid_pathway"]
        .iter()
        .map(|n| serde_json::from_str(&std::fs::read_to_string(format!("{root}/scenarios/{n}.json")).unwrap()).unwrap())
        .collect();
    let jobs: Vec<_> = scenarios.iter().cycle().take(256).map(|s| (&def, s)).collect();
    let mut group = c.benchmark_group("scenario_cohort");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| black_box(run_scenarios(&jobs, mode)))
        });
    }
    group.finish();
}

criterion_group!(benches, random_networks, scenario_cohort);
criterion_main!(benches);
