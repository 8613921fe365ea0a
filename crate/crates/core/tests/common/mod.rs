#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streamgconv::cells::{
    BidirectionalGru, GConvGruCell, GConvGruConfig, GruCell, GruConfig, Linear, TemporalConv, TemporalConvConfig,
};
use streamgconv::dataset::{build_cache, GraphOptions, Snapshot, SnapshotCache, SplitBoundaries};
use streamgconv::gradcheck::{check, GradCheck, REL_ERR_FLOOR};
use streamgconv::graph::{chebyshev_conv, scaled_laplacian, Edge, ScaledLaplacian, SensorGraph};
use streamgconv::models::{ConvBiGru, ConvBiGruConfig, StreamConfig, StreamGConvGru};
use streamgconv::synthetic::{generate, SyntheticConfig, SyntheticData};
use streamgconv::training::masked_outlet_loss;
use streamgconv::{ParamBinder, Parameterized, Result, Tape, Tensor, Var};

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Entries with magnitude in `[0.1, 1)` and random sign, so `|x|` has no kink
/// within a finite-difference step.
pub fn away_from_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Random connected tree on `n` nodes (outlet `n − 1`) with positive weights.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> SensorGraph {
    let edges = (0..n.saturating_sub(1))
        .map(|i| Edge {
            src: i,
            dst: rng.gen_range(i + 1..n),
            weight: rng.gen_range(0.2..2.0),
        })
        .collect();
    SensorGraph::new((0..n).map(|i| format!("n{i}")).collect(), edges, n - 1).unwrap()
}

/// Random graph with extra cross edges on top of a tree.
pub fn random_graph(rng: &mut impl Rng, n: usize) -> SensorGraph {
    let tree = random_tree(rng, n);
    let mut edges = tree.edges().to_vec();
    for a in 0..n {
        for b in a + 1..n {
            let exists = edges
                .iter()
                .any(|e| (e.src == a && e.dst == b) || (e.src == b && e.dst == a));
            if !exists && rng.gen_bool(0.2) {
                edges.push(Edge {
                    src: a,
                    dst: b,
                    weight: rng.gen_range(0.2..2.0),
                });
            }
        }
    }
    SensorGraph::new((0..n).map(|i| format!("n{i}")).collect(), edges, n - 1).unwrap()
}

/// `Σ v ⊙ w` for a fixed random `w`; gives every entry of `v` a distinct
/// sensitivity.
pub fn weighted_sum<'t>(v: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let w = uniform(&mut rng(seed), &v.shape(), -1.0, 1.0);
    v.mul(v.tape().constant(w))?.sum().reshape(Vec::<usize>::new())
}

/// Finite-difference check of the gradient with respect to every parameter
/// of `model`.
pub fn param_check<M, F>(model: &M, h: f64, loss: F) -> Result<GradCheck>
where
    M: Parameterized + Clone,
    F: for<'t> Fn(&M, &mut ParamBinder<'t>) -> Result<Var<'t>>,
{
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let mut b = ParamBinder::new(&tape, true);
        let l = loss(model, &mut b)?;
        let grads = tape.backward(l)?;
        b.leaves().iter().map(|v| grads.get_or_zeros(*v)).collect()
    };
    let eval = |m: &M| -> Result<f64> {
        let tape = Tape::new();
        let mut b = ParamBinder::new(&tape, false);
        loss(m, &mut b)?.value().item()
    };
    let mut probe = model.clone();
    let mut worst = GradCheck {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
    };
    let count = model.named_params().len();
    assert_eq!(count, analytic.len(), "binding order must cover every parameter");
    for p in 0..count {
        let numel = model.named_params()[p].1.numel();
        for i in 0..numel {
            let orig = model.named_params()[p].1.data()[i];
            probe.named_params_mut()[p].1.data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe.named_params_mut()[p].1.data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe.named_params_mut()[p].1.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let exact = analytic[p].data()[i];
            let abs = (numeric - exact).abs();
            worst.max_abs_err = worst.max_abs_err.max(abs);
            worst.max_rel_err = worst
                .max_rel_err
                .max(abs / numeric.abs().max(exact.abs()).max(REL_ERR_FLOOR));
        }
    }
    Ok(worst)
}

pub struct GradCase {
    pub name: String,
    pub result: GradCheck,
}

fn case(name: impl Into<String>, result: Result<GradCheck>) -> GradCase {
    let name = name.into();
    let result = result.unwrap_or_else(|e| panic!("{name}: {e}"));
    GradCase { name, result }
}

/// The randomized gradient-check catalog: every differentiable operation and
/// layer over `repeats` random draws.
pub fn gradient_cases(seed: u64, repeats: usize) -> Vec<GradCase> {
    let mut out = Vec::new();
    for r in 0..repeats {
        let s = seed.wrapping_mul(1000).wrapping_add(r as u64);
        let mut g = rng(s);
        let rows = g.gen_range(1..4);
        let cols = g.gen_range(1..5);
        let x = uniform(&mut g, &[rows, cols], -2.0, 2.0);
        let y = uniform(&mut g, &[rows, cols], -2.0, 2.0);
        let xa = away_from_zero(&mut g, &[rows, cols]);
        let h = FD_STEP;

        out.push(case("add", check(&[x.clone(), y.clone()], h, |_, v| weighted_sum(v[0].add(v[1])?, s))));
        out.push(case("sub", check(&[x.clone(), y.clone()], h, |_, v| weighted_sum(v[0].sub(v[1])?, s))));
        out.push(case("mul", check(&[x.clone(), y.clone()], h, |_, v| weighted_sum(v[0].mul(v[1])?, s))));
        out.push(case("neg", check(&[x.clone()], h, |_, v| weighted_sum(v[0].neg(), s))));
        out.push(case("abs", check(&[xa.clone()], h, |_, v| weighted_sum(v[0].abs(), s))));
        out.push(case("sigmoid", check(&[x.clone()], h, |_, v| weighted_sum(v[0].sigmoid(), s))));
        out.push(case("tanh", check(&[x.clone()], h, |_, v| weighted_sum(v[0].tanh(), s))));
        out.push(case("scale", check(&[x.clone()], h, |_, v| weighted_sum(v[0].scale(-1.7), s))));
        out.push(case("mean", check(&[x.clone()], h, |_, v| Ok(v[0].mul(v[0])?.mean()))));

        let inner = g.gen_range(1..5);
        let a = uniform(&mut g, &[rows, inner], -1.0, 1.0);
        let b = uniform(&mut g, &[inner, cols], -1.0, 1.0);
        out.push(case("matmul", check(&[a, b], h, |_, v| weighted_sum(v[0].matmul(v[1])?, s))));
        let bias = uniform(&mut g, &[cols], -1.0, 1.0);
        out.push(case(
            "add_row",
            check(&[x.clone(), bias], h, |_, v| weighted_sum(v[0].add_row(v[1])?, s)),
        ));
        out.push(case("transpose", check(&[x.clone()], h, |_, v| weighted_sum(v[0].transpose()?, s))));
        out.push(case(
            "reshape_slice_concat",
            check(&[x.clone(), y.clone()], h, |_, v| {
                let flat = v[0].reshape(vec![rows * cols])?;
                let part = flat.slice(0, 0, (rows * cols + 1) / 2)?;
                let joined = Var::concat(&[v[1], v[0]], 1)?;
                let stacked = Var::stack(&[v[0], v[1]], 0)?;
                weighted_sum(part, s)?
                    .add(weighted_sum(joined, s + 1)?)?
                    .add(weighted_sum(stacked.tanh(), s + 2)?)
            }),
        ));

        let c_in = g.gen_range(1..4);
        let c_out = g.gen_range(1..4);
        let t = g.gen_range(3..8);
        let ks = [1, 3, 5][r % 3];
        let seq = uniform(&mut g, &[c_in, t], -1.0, 1.0);
        let w = uniform(&mut g, &[c_out, c_in, ks], -1.0, 1.0);
        let cb = uniform(&mut g, &[c_out], -0.5, 0.5);
        out.push(case(
            format!("conv1d_k{ks}"),
            check(&[seq.clone(), w, cb], h, |_, v| weighted_sum(v[0].conv1d(v[1], Some(v[2]))?, s)),
        ));

        let n = g.gen_range(2..7);
        let graph = random_graph(&mut g, n);
        let lap = scaled_laplacian(&graph).unwrap();
        let k = g.gen_range(1..5);
        let f_in = g.gen_range(1..4);
        let f_out = g.gen_range(1..4);
        let gx = uniform(&mut g, &[n, f_in], -1.0, 1.0);
        let theta = uniform(&mut g, &[k, f_in, f_out], -1.0, 1.0);
        out.push(case(
            format!("chebyshev_conv_k{k}"),
            check(&[gx, theta], h, |tape, v| {
                let bl = lap.bind(tape);
                weighted_sum(chebyshev_conv(v[0], &bl, v[1], k)?, s)
            }),
        ));

        let pred = uniform(&mut g, &[n, 3], -1.0, 1.0);
        let offsets = away_from_zero(&mut g, &[n, 3]);
        let target = pred
            .data()
            .iter()
            .zip(offsets.data())
            .map(|(p, o)| p + o)
            .collect::<Vec<_>>();
        let target = Tensor::new(vec![n, 3], target).unwrap();
        out.push(case(
            "l1_loss",
            check(&[pred.clone()], h, |tape, v| v[0].l1_loss(tape.constant(target.clone()))),
        ));
        let outlet = g.gen_range(0..n);
        out.push(case(
            "masked_outlet_l1",
            check(&[pred], h, |tape, v| masked_outlet_loss(v[0], tape.constant(target.clone()), outlet)),
        ));

        // Layers: inputs and parameters.
        let hid = g.gen_range(1..4);
        let lin = Linear::init(cols, hid, &mut g).unwrap();
        let lin = randomize(lin, &mut g);
        out.push(case(
            "linear_input",
            check(&[x.clone()], h, |tape, v| {
                let mut b = ParamBinder::new(tape, false);
                weighted_sum(lin.bind(&mut b).forward(v[0])?, s)
            }),
        ));
        let xc = x.clone();
        out.push(case(
            "linear_params",
            param_check(&lin, h, |m, b| {
                let input = b.tape().constant(xc.clone());
                weighted_sum(m.bind(b).forward(input)?, s)
            }),
        ));

        let tconv = randomize(
            TemporalConv::init(
                TemporalConvConfig {
                    in_channels: c_in,
                    out_channels: c_out,
                    kernel_size: ks,
                },
                &mut g,
            )
            .unwrap(),
            &mut g,
        );
        let seq_c = seq.clone();
        out.push(case(
            "temporal_conv_params",
            param_check(&tconv, h, |m, b| {
                let input = b.tape().constant(seq_c.clone());
                weighted_sum(m.bind(b).forward(input)?, s)
            }),
        ));

        let gru_cfg = GruConfig {
            input_size: f_in,
            hidden_size: hid,
        };
        let gru = randomize(GruCell::init(gru_cfg, &mut g).unwrap(), &mut g);
        let gx1 = uniform(&mut g, &[2, f_in], -1.0, 1.0);
        let gh1 = uniform(&mut g, &[2, hid], -0.9, 0.9);
        out.push(case(
            "gru_step_inputs",
            check(&[gx1.clone(), gh1.clone()], h, |tape, v| {
                let mut b = ParamBinder::new(tape, false);
                weighted_sum(gru.bind(&mut b)?.step(v[0], v[1])?, s)
            }),
        ));
        let gseq = uniform(&mut g, &[t, f_in], -1.0, 1.0);
        let gseq_c = gseq.clone();
        out.push(case(
            "gru_unroll_params",
            param_check(&gru, h, |m, b| {
                let input = b.tape().constant(gseq_c.clone());
                let (states, last) = m.bind(b)?.unroll(input, None)?;
                weighted_sum(states, s)?.add(weighted_sum(last, s + 3)?)
            }),
        ));
        let bigru = randomize(BidirectionalGru::init(gru_cfg, &mut g).unwrap(), &mut g);
        out.push(case(
            "bigru_unroll",
            check(&[gseq.clone()], h, |tape, v| {
                let mut b = ParamBinder::new(tape, false);
                let o = bigru.bind(&mut b)?.unroll(v[0])?;
                weighted_sum(o.outputs, s)?.add(weighted_sum(Var::concat(&[o.final_forward, o.final_backward], 1)?, s + 1)?)
            }),
        ));

        let gc_cfg = GConvGruConfig {
            cheb_k: k,
            input_size: f_in,
            hidden_size: hid,
            bias: r % 2 == 0,
        };
        let gcell = randomize(GConvGruCell::init(gc_cfg, &mut g).unwrap(), &mut g);
        let nx = uniform(&mut g, &[n, f_in], -1.0, 1.0);
        let nh = uniform(&mut g, &[n, hid], -0.9, 0.9);
        out.push(case(
            "gconv_gru_step_inputs",
            check(&[nx, nh], h, |tape, v| {
                let mut b = ParamBinder::new(tape, false);
                let bl = lap.bind(tape);
                weighted_sum(gcell.bind(&mut b)?.step(v[0], v[1], &bl)?, s)
            }),
        ));
        let nseq = uniform(&mut g, &[t.min(4), n, f_in], -1.0, 1.0);
        let nseq_c = nseq.clone();
        out.push(case(
            "gconv_gru_unroll_inputs",
            check(&[nseq], h, |tape, v| {
                let mut b = ParamBinder::new(tape, false);
                let bl = lap.bind(tape);
                let (states, last) = gcell.bind(&mut b)?.unroll(v[0], &bl, None)?;
                weighted_sum(states, s)?.add(weighted_sum(last, s + 5)?)
            }),
        ));
        let lap_c = lap.clone();
        out.push(case(
            "gconv_gru_unroll_params",
            param_check(&gcell, h, |m, b| {
                let bl = lap_c.bind(b.tape());
                let input = b.tape().constant(nseq_c.clone());
                weighted_sum(m.bind(b)?.unroll_final(input, &bl, None)?, s)
            }),
        ));
    }
    out.extend(model_cases(seed));
    out
}

/// Whole-model checks through the training loss.
fn model_cases(seed: u64) -> Vec<GradCase> {
    let mut g = rng(seed ^ 0x00de_c0de);
    let n = 4;
    let graph = random_tree(&mut g, n);
    let lap = scaled_laplacian(&graph).unwrap();
    let cfg = StreamConfig {
        hidden_size: 2,
        cheb_k: 2,
        layers: 1,
        bias: true,
        t_in: 3,
        t_out: 2,
    };
    let model = randomize(StreamGConvGru::init(cfg, &lap, seed).unwrap(), &mut g);
    let input = uniform(&mut g, &[n, 3, 3], 0.0, 2.0);
    let pred = model.predict(&input, &lap).unwrap();
    let offsets = away_from_zero(&mut g, &[n, 2]);
    let target = Tensor::new(
        vec![n, 2],
        pred.data().iter().zip(offsets.data()).map(|(p, o)| p + o).collect(),
    )
    .unwrap();
    let outlet = n - 1;
    let mut out = Vec::new();
    let (i2, t2) = (input.clone(), target.clone());
    out.push(case(
        "stream_gconvgru_params",
        param_check(&model, FD_STEP, |m, b| {
            let bl = lap.bind(b.tape());
            let tape = b.tape();
            let p = m.bind(b)?.forward(tape.constant(i2.clone()), &bl)?;
            masked_outlet_loss(p, tape.constant(t2.clone()), outlet)
        }),
    ));
    out.push(case(
        "stream_gconvgru_input",
        check(&[input.clone()], FD_STEP, |tape, v| {
            let mut b = ParamBinder::new(tape, false);
            let bl = lap.bind(tape);
            let p = model.bind(&mut b)?.forward(v[0], &bl)?;
            masked_outlet_loss(p, tape.constant(target.clone()), outlet)
        }),
    ));

    let ccfg = ConvBiGruConfig {
        in_channels: 3 * n,
        conv_channels: 2,
        kernel_size: 3,
        hidden_size: 2,
        t_in: 3,
        t_out: 2,
    };
    let conv = randomize(ConvBiGru::init(ccfg, seed).unwrap(), &mut g);
    let cp = conv.predict(&input).unwrap();
    let coff = away_from_zero(&mut g, &[2]);
    let ctarget = Tensor::new(vec![2], cp.data().iter().zip(coff.data()).map(|(p, o)| p + o).collect()).unwrap();
    out.push(case(
        "conv_bigru_params",
        param_check(&conv, FD_STEP, |m, b| {
            let tape = b.tape();
            let p = m.bind(b)?.forward(tape.constant(input.clone()))?;
            p.l1_loss(tape.constant(ctarget.clone()))
        }),
    ));
    out
}

/// Replaces every parameter (biases included) with uniform draws so that no
/// gradient path is hidden behind a zero.
pub fn randomize<M: Parameterized>(mut model: M, rng: &mut impl Rng) -> M {
    for (_, t) in model.named_params_mut() {
        for v in t.data_mut() {
            *v = rng.gen_range(-0.8..0.8);
        }
    }
    model
}

/// Default synthetic benchmark: data, graph, and the 36/36 snapshot cache
/// split 75/12.5/12.5 by time.
pub fn benchmark(seed: u64) -> (SyntheticData, SensorGraph, SnapshotCache) {
    benchmark_with(&SyntheticConfig::default(), seed)
}

pub fn benchmark_with(config: &SyntheticConfig, seed: u64) -> (SyntheticData, SensorGraph, SnapshotCache) {
    let data = generate(config, seed).unwrap();
    let series = data.series_set().unwrap();
    let graph = data.graph_file().to_graph(GraphOptions::default()).unwrap();
    let b = SplitBoundaries::by_fraction(config.start, config.hours, 0.75, 0.125).unwrap();
    let cache = build_cache(&series, &graph, 36, 36, b).unwrap();
    (data, graph, cache)
}

pub fn laplacian(graph: &SensorGraph) -> ScaledLaplacian {
    scaled_laplacian(graph).unwrap()
}

/// Ten consecutive training snapshots from the middle of the training split.
pub fn overfit_snapshots(cache: &SnapshotCache) -> Vec<Snapshot> {
    let train = &cache.splits.train.snapshots;
    train[train.len() / 2..train.len() / 2 + 10].to_vec()
}
