//! Values produced by the independent oracles in `tests/oracles/` and frozen
//! here.

use enhp::data::{split_dataset, Dataset, Split};
use enhp::nn::{InputTransform, KernelNet};
use enhp::simulate::{spectral_radius, HawkesGroundTruth};
use enhp::{Event, EventSequence};

/// Parameters shared with `oracles/kernel_forward.py`.
fn oracle_net() -> KernelNet {
    let mut net = KernelNet::zeros(2, 8, InputTransform::Log1p);
    net.hidden_w = vec![0.83, -1.21, 0.47, 1.9, -0.35, 0.06, -2.4, 1.15];
    net.hidden_b = vec![0.1, 0.9, -0.2, -0.05, 0.3, 0.01, 1.2, -0.6];
    net.out_w = [
        [0.5, -0.3, 0.8, 0.12, -0.9, 1.4, 0.2, -0.45],
        [-0.7, 0.25, 0.05, -1.1, 0.6, 0.33, -0.15, 0.9],
        [1.05, -0.4, -0.6, 0.7, 0.2, -0.25, 0.45, 0.1],
        [0.0, 0.65, -0.85, 0.3, -0.2, 0.75, -1.3, 0.55],
    ]
    .concat();
    net.out_b = vec![-0.3, 0.2, -1.5, 0.7];
    net
}

#[test]
fn kernel_forward_matches_extended_precision_oracle() {
    let expected = [
        0.575_589_211_110_547_794_6,
        0.485_765_083_310_453_847_2,
        0.398_618_167_384_826_712_6,
        1.042_502_678_194_432_778_6,
    ];
    let tape = oracle_net().forward(0.37).unwrap();
    for (got, want) in tape.output().iter().zip(expected) {
        assert!((got - want).abs() <= 4.0 * f64::EPSILON * want, "{got} vs {want}");
    }
}

#[test]
fn three_type_branching_matrix_and_radius() {
    let gt = HawkesGroundTruth::three_type();
    let b = gt.branching_matrix();
    let expected = [[0.0, 0.25, 0.0], [0.0, 2.0, 0.0], [3.0, 0.0, 3.0]];
    for (row, want) in b.iter().zip(expected) {
        for (x, w) in row.iter().zip(want) {
            assert!((x - w).abs() < 1e-12, "{b:?}");
        }
    }
    // Characteristic-polynomial eigenvalues are {0, 2, 3}.
    assert!((gt.spectral_radius() - 3.0).abs() < 1e-8);
    assert!((spectral_radius(&b) - 3.0).abs() < 1e-8);
}

#[test]
fn three_type_linear_rates_are_not_a_stationary_solution() {
    // (I - Bᵀ)⁻¹ μ = (0, -0.05, -0.1): negative, so no stationary regime exists.
    let rates = HawkesGroundTruth::three_type().stationary_rates().unwrap();
    let expected = [0.0, -0.05, -0.1];
    for (r, e) in rates.iter().zip(expected) {
        assert!((r - e).abs() < 1e-12, "{rates:?}");
    }
}

#[test]
fn split_sizes_round_each_fraction() {
    let seqs: Vec<EventSequence> = (0..34_432)
        .map(|i| EventSequence::new(format!("s{i}"), 1.0, vec![Event::new(0.5, 0)]))
        .collect();
    let ds = split_dataset(&Dataset::new(seqs, 1).unwrap(), (0.7, 0.15, 0.15), 7).unwrap();
    let count = |s| ds.splits().iter().filter(|&&x| x == s).count();
    assert_eq!(
        (count(Split::Train), count(Split::Val), count(Split::Test)),
        (24_102, 5_165, 5_165)
    );
}
