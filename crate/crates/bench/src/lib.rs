//! Benchmark inputs shared by the bench targets.

use qdmr_sparql::testgen::{self, Instance};

/// A fixed set of generated instances, one per category cycle.
pub fn workload(n: usize) -> Vec<Instance> {
    testgen::instances(testgen::DEFAULT_SEED, n)
}
