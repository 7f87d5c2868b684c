#![allow(dead_code)]

use proptest::prelude::*;
use trslab::generators::{generate, GenSpec};
use trslab::model::CaseKind;
use trslab::{PlantedInstance, SymMatrix, TrsInstance};

/// Symmetric matrix from an unconstrained upper triangle.
pub fn sym_from_upper(n: usize, upper: &[f64]) -> SymMatrix {
    let mut data = vec![0.0; n * n];
    let mut it = upper.iter();
    for i in 0..n {
        for j in i..n {
            let v = *it.next().expect("enough entries");
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    SymMatrix::new(n, data).unwrap()
}

pub fn sym_matrix(max_n: usize) -> impl Strategy<Value = SymMatrix> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(-5.0f64..5.0, n * (n + 1) / 2).prop_map(move |u| sym_from_upper(n, &u))
    })
}

pub fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

/// Dense random instance with `2 ≤ n ≤ max_n` and `A ≠ 0`.
pub fn instance(max_n: usize) -> impl Strategy<Value = TrsInstance> {
    (2..=max_n).prop_flat_map(|n| {
        (prop::collection::vec(-5.0f64..5.0, n * (n + 1) / 2), vector(n))
            .prop_filter_map("zero matrix", move |(u, b)| TrsInstance::new(sym_from_upper(n, &u), b).ok())
    })
}

pub fn case_kind() -> impl Strategy<Value = CaseKind> {
    prop::sample::select(CaseKind::ALL.to_vec())
}

pub fn planted(kind: CaseKind, n: usize, seed: u64) -> PlantedInstance {
    generate::<f64>(&GenSpec::new(n, kind, seed)).unwrap()
}

/// Point drawn from a direction and a radius in `[0, 1]`.
pub fn ball_point(dir: &[f64], r: f64) -> Vec<f64> {
    let nd = trslab::linalg::norm(dir);
    if nd == 0.0 {
        return vec![0.0; dir.len()];
    }
    dir.iter().map(|v| r * v / nd).collect()
}

pub fn planted_k(kind: CaseKind, n: usize, k: usize, seed: u64) -> PlantedInstance {
    generate::<f64>(&GenSpec { mult_k: k, ..GenSpec::new(n, kind, seed) }).unwrap()
}
