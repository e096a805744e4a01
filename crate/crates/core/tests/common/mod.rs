//! Shared test oracles, independent of the library's implementation paths.

#![allow(dead_code)]

use flowseg::{GridDomain, ScalarField};

/// Binary cut energy computed from first principles: foreground pixels pay the
/// sink capacity, background pixels the source capacity, and each 4-neighbour
/// label change pays the edge capacity of the pixel owning the forward
/// difference. This matches the anisotropic TV discretization but is written
/// independently of the library's field operators.
pub fn oracle_cut_energy(
    label: &[u8],
    height: usize,
    width: usize,
    c_source: &[f64],
    c_sink: &[f64],
    c_edge: &[f64],
) -> f64 {
    assert_eq!(label.len(), height * width);
    let mut e = 0.0;
    for i in 0..label.len() {
        e += if label[i] == 1 { c_sink[i] } else { c_source[i] };
    }
    for row in 0..height {
        for col in 0..width {
            let i = row * width + col;
            if col + 1 < width {
                e += c_edge[i] * (label[i] as i32 - label[i + 1] as i32).abs() as f64;
            }
            if row + 1 < height {
                e += c_edge[i] * (label[i] as i32 - label[i + width] as i32).abs() as f64;
            }
        }
    }
    e
}

/// Exhaustive minimum of [`oracle_cut_energy`] over all 2^(h·w) labelings.
pub fn brute_force_min_cut(
    height: usize,
    width: usize,
    c_source: &[f64],
    c_sink: &[f64],
    c_edge: &[f64],
) -> (f64, Vec<u8>) {
    let n = height * width;
    assert!(n <= 20, "exhaustive enumeration limited to 2^20 labelings");
    let mut best = f64::INFINITY;
    let mut best_label = vec![0u8; n];
    for bits in 0u32..(1u32 << n) {
        let label: Vec<u8> = (0..n).map(|i| ((bits >> i) & 1) as u8).collect();
        let e = oracle_cut_energy(&label, height, width, c_source, c_sink, c_edge);
        if e < best {
            best = e;
            best_label = label;
        }
    }
    (best, best_label)
}

/// Random capacities in [0,1] on a grid, seeded.
pub fn random_caps_01(
    domain: GridDomain,
    rng: &mut impl rand::Rng,
) -> (ScalarField, ScalarField, ScalarField) {
    let mut draw = |_: usize| ScalarField::from_fn(domain, |_, _| rng.gen_range(0.0..1.0));
    (draw(0), draw(1), draw(2))
}
