//! Benchmark fixtures shared by the `kernels` bench.

use cosetsle_core::{make_family, CosetSpec, Family};

/// Built-in coset, panicking on an invalid `n`.
pub fn family(family: Family, n: u32) -> CosetSpec {
    make_family(family, n).expect("valid family")
}
