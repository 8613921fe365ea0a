mod common;

use proptest::prelude::*;

use common::{away_from_zero, rng, uniform, weighted_sum, FD_STEP};
use streamgconv::gradcheck::check;
use streamgconv::{Tape, Tensor, Var};

const TOL: f64 = 1e-5;

fn shape2() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..6, 1usize..6, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn elementwise_chain_matches_finite_differences((r, c, seed) in shape2()) {
        let mut g = rng(seed);
        let x = uniform(&mut g, &[r, c], -2.0, 2.0);
        let y = uniform(&mut g, &[r, c], -2.0, 2.0);
        let res = check(&[x, y], FD_STEP, |_, v| {
            let a = v[0].mul(v[1])?.tanh();
            let b = v[0].sub(v[1])?.sigmoid().scale(3.0);
            weighted_sum(a.add(b)?.neg(), seed)
        })
        .unwrap();
        prop_assert!(res.max_rel_err < TOL, "{res:?}");
    }

    #[test]
    fn abs_matches_finite_differences((r, c, seed) in shape2()) {
        let x = away_from_zero(&mut rng(seed), &[r, c]);
        let res = check(&[x], FD_STEP, |_, v| weighted_sum(v[0].abs(), seed)).unwrap();
        prop_assert!(res.max_rel_err < TOL, "{res:?}");
    }

    #[test]
    fn matmul_and_bias_match_finite_differences((r, c, seed) in shape2(), inner in 1usize..6) {
        let mut g = rng(seed);
        let a = uniform(&mut g, &[r, inner], -1.0, 1.0);
        let b = uniform(&mut g, &[inner, c], -1.0, 1.0);
        let bias = uniform(&mut g, &[c], -1.0, 1.0);
        let res = check(&[a, b, bias], FD_STEP, |_, v| {
            weighted_sum(v[0].matmul(v[1])?.add_row(v[2])?.transpose()?, seed)
        })
        .unwrap();
        prop_assert!(res.max_rel_err < TOL, "{res:?}");
    }

    #[test]
    fn conv1d_matches_finite_differences(
        c_in in 1usize..4, c_out in 1usize..4, t in 2usize..9, half in 0usize..3, seed in any::<u64>()
    ) {
        let mut g = rng(seed);
        let k = 2 * half + 1;
        let x = uniform(&mut g, &[c_in, t], -1.0, 1.0);
        let w = uniform(&mut g, &[c_out, c_in, k], -1.0, 1.0);
        let b = uniform(&mut g, &[c_out], -1.0, 1.0);
        let res = check(&[x, w, b], FD_STEP, |_, v| weighted_sum(v[0].conv1d(v[1], Some(v[2]))?, seed)).unwrap();
        prop_assert!(res.max_rel_err < TOL, "{res:?}");
    }

    #[test]
    fn shape_ops_match_finite_differences((r, c, seed) in shape2()) {
        let mut g = rng(seed);
        let x = uniform(&mut g, &[r, c], -1.0, 1.0);
        let y = uniform(&mut g, &[r, c], -1.0, 1.0);
        let res = check(&[x, y], FD_STEP, |_, v| {
            let s = Var::stack(&[v[0], v[1]], 1)?.reshape(vec![2 * r * c])?.slice(0, 1, 2 * r * c)?;
            let cat = Var::concat(&[v[0], v[1]], 0)?.mean();
            weighted_sum(s.tanh(), seed)?.add(cat)
        })
        .unwrap();
        prop_assert!(res.max_rel_err < TOL, "{res:?}");
    }
}

#[test]
fn fan_out_accumulates_gradients() {
    let tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, -2.0, 3.0]).unwrap());
    let y = x.add(x).unwrap();
    let w = tape.constant(Tensor::vector(vec![0.5, 2.0, -1.0]).unwrap());
    let loss = y.mul(w).unwrap().sum();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[1.0, 4.0, -2.0]);
}

#[test]
fn ops_leave_inputs_untouched_and_repeat_bit_identically() {
    let mut g = rng(3);
    let a = uniform(&mut g, &[3, 4], -1.0, 1.0);
    let b = uniform(&mut g, &[4, 2], -1.0, 1.0);
    let run = || {
        let tape = Tape::new();
        let va = tape.param(a.clone());
        let vb = tape.param(b.clone());
        let out = va.matmul(vb).unwrap().tanh().add(va.matmul(vb).unwrap()).unwrap();
        let loss = out.abs().sum();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(va.value(), a);
        assert_eq!(vb.value(), b);
        (out.value(), grads.get_or_zeros(va), grads.get_or_zeros(vb))
    };
    let first = run();
    let second = run();
    assert_eq!(first, second);
}
