//! Φ and G against a 50-digit reference grid (tests/data, generated by
//! gen_normal_reference.py with mpmath).

use pairscreen::normal::{gauss_tail_inverse, gauss_two_sided_tail, normal_cdf};

pub struct ReferenceRow {
    pub x: f64,
    pub cdf: f64,
    pub tail: Option<f64>,
}

pub fn reference_grid() -> Vec<ReferenceRow> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/normal_cdf_reference.csv");
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            ReferenceRow {
                x: r[0].parse().unwrap(),
                cdf: r[1].parse().unwrap(),
                tail: (!r[2].is_empty()).then(|| r[2].parse().unwrap()),
            }
        })
        .collect()
}

#[test]
fn cdf_matches_reference() {
    let grid = reference_grid();
    assert_eq!(grid.len(), 1001);
    for row in &grid {
        let got = normal_cdf(row.x).unwrap().value();
        assert!((got - row.cdf).abs() <= 1e-12, "x = {}: {got} vs {}", row.x, row.cdf);
    }
}

#[test]
fn two_sided_tail_matches_reference() {
    for row in reference_grid() {
        if let Some(tail) = row.tail {
            let got = gauss_two_sided_tail(row.x).unwrap().value();
            assert!((got - tail).abs() <= 1e-12 * tail.max(1e-300).max(1.0));
            assert!((got - tail).abs() <= 1e-10 * tail, "x = {}", row.x);
        }
    }
}

#[test]
fn tail_inverse_round_trip() {
    let mut q = 1.0;
    while q > 1e-300 {
        for f in [1.0, 0.7, 0.3] {
            let target = q * f;
            let back = gauss_two_sided_tail(gauss_tail_inverse(target).unwrap()).unwrap().value();
            assert!((back - target).abs() <= 1e-10 * target, "q = {target}: {back}");
        }
        q *= 0.1;
    }
}
