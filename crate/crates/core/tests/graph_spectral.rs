mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;

use common::{random_graph, random_tree, rng, uniform, weighted_sum, FD_STEP};
use streamgconv::gradcheck::check;
use streamgconv::graph::{chebyshev_conv, scaled_laplacian, Edge, SensorGraph};
use streamgconv::{Tape, Tensor};

fn conv(graph: &SensorGraph, x: &Tensor, theta: &Tensor, k: usize) -> Tensor {
    let lap = scaled_laplacian(graph).unwrap();
    let tape = Tape::new();
    chebyshev_conv(tape.constant(x.clone()), &lap.bind(&tape), tape.constant(theta.clone()), k)
        .unwrap()
        .value()
}

/// Relabels node `i` as `perm[i]`.
fn permute_graph(graph: &SensorGraph, perm: &[usize]) -> SensorGraph {
    let n = graph.num_nodes();
    let mut ids = vec![String::new(); n];
    for i in 0..n {
        ids[perm[i]] = graph.sensor_id(i).to_string();
    }
    let edges = graph
        .edges()
        .iter()
        .map(|e| Edge {
            src: perm[e.src],
            dst: perm[e.dst],
            weight: e.weight,
        })
        .collect();
    SensorGraph::new(ids, edges, perm[graph.outlet()]).unwrap()
}

fn permute_rows(x: &Tensor, perm: &[usize]) -> Tensor {
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let mut out = Tensor::zeros(vec![n, f]);
    for i in 0..n {
        out.data_mut()[perm[i] * f..(perm[i] + 1) * f].copy_from_slice(&x.data()[i * f..(i + 1) * f]);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn chebyshev_conv_is_permutation_equivariant(n in 2usize..9, k in 1usize..6, seed in any::<u64>()) {
        let mut g = rng(seed);
        let graph = random_graph(&mut g, n);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut g);
        let x = uniform(&mut g, &[n, 2], -1.0, 1.0);
        let theta = uniform(&mut g, &[k, 2, 3], -1.0, 1.0);
        let out = conv(&graph, &x, &theta, k);
        let permuted = conv(&permute_graph(&graph, &perm), &permute_rows(&x, &perm), &theta, k);
        let expected = permute_rows(&out, &perm);
        for (a, b) in permuted.data().iter().zip(expected.data()) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn scaled_laplacian_ignores_uniform_weight_scale(n in 2usize..9, scale in 0.01f64..100.0, seed in any::<u64>()) {
        let graph = random_graph(&mut rng(seed), n);
        let scaled_edges = graph
            .edges()
            .iter()
            .map(|e| Edge { weight: e.weight * scale, ..*e })
            .collect();
        let ids = (0..n).map(|i| graph.sensor_id(i).to_string()).collect();
        let rescaled = SensorGraph::new(ids, scaled_edges, graph.outlet()).unwrap();
        let a = scaled_laplacian(&graph).unwrap();
        let b = scaled_laplacian(&rescaled).unwrap();
        for (x, y) in a.matrix().data().iter().zip(b.matrix().data()) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn chebyshev_conv_gradients_match_finite_differences(n in 1usize..7, k in 1usize..6, seed in any::<u64>()) {
        let mut g = rng(seed);
        let graph = random_graph(&mut g, n);
        let lap = scaled_laplacian(&graph).unwrap();
        let x = uniform(&mut g, &[n, 2], -1.0, 1.0);
        let theta = uniform(&mut g, &[k, 2, 2], -1.0, 1.0);
        let res = check(&[x, theta], FD_STEP, |tape, v| {
            weighted_sum(chebyshev_conv(v[0], &lap.bind(tape), v[1], k)?, seed)
        })
        .unwrap();
        prop_assert!(res.max_rel_err < 1e-5, "{res:?}");
    }
}

#[test]
fn single_node_folds_even_orders() {
    let mut g = rng(1);
    let graph = random_tree(&mut g, 1);
    assert!(scaled_laplacian(&graph).unwrap().matrix().data().iter().all(|&v| v == 0.0));
    for k in 1..=6 {
        let x = uniform(&mut g, &[1, 3], -1.0, 1.0);
        let theta = uniform(&mut g, &[k, 3, 2], -1.0, 1.0);
        let out = conv(&graph, &x, &theta, k);
        // T_j(0) is 1, 0, -1, 0, ... so only even orders survive, with alternating sign.
        let mut folded = vec![0.0; 6];
        for j in (0..k).step_by(2) {
            let sign = if j % 4 == 0 { 1.0 } else { -1.0 };
            for (f, t) in folded.iter_mut().zip(&theta.data()[j * 6..(j + 1) * 6]) {
                *f += sign * t;
            }
        }
        let want = x.matmul(&Tensor::new(vec![3, 2], folded).unwrap()).unwrap();
        for (a, b) in out.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12, "K={k}");
        }
    }
}

#[test]
fn scaled_spectrum_lies_in_unit_interval() {
    let mut g = rng(2);
    for n in 2..9 {
        let lap = scaled_laplacian(&random_graph(&mut g, n)).unwrap();
        let m = nalgebra::DMatrix::from_row_slice(n, n, lap.matrix().data());
        let eig = m.symmetric_eigen().eigenvalues;
        let hi = eig.max();
        let lo = eig.min();
        assert!((hi - 1.0).abs() < 1e-6, "largest eigenvalue {hi}");
        assert!(lo >= -1.0 - 1e-9, "smallest eigenvalue {lo}");
    }
}
