use aote_core::tensor::gradcheck::{max_relative_error, numeric_gradients, STEP};
use aote_core::tensor::{Graph, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: u64 = 20;
const TOL: f64 = 1e-4;

/// Builds a scalar from `inputs` on a fresh graph and returns (loss value, analytic grads).
fn analytic<F>(inputs: &[Tensor], build: F) -> (f64, Vec<Tensor>)
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Var,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
    let root = build(&mut g, &vars);
    let value = g.value(root).item();
    let grads = g.backward(root).unwrap();
    let out = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    (value, out)
}

fn forward_only<F>(inputs: &[Tensor], build: &F) -> f64
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Var,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let root = build(&mut g, &vars);
    g.value(root).item()
}

fn check_op<F>(name: &str, mut make_inputs: impl FnMut(&mut ChaCha8Rng) -> Vec<Tensor>, build: F)
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Var,
{
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE + seed);
        let inputs = make_inputs(&mut rng);
        let (_, grads) = analytic(&inputs, &build);
        let numeric = numeric_gradients(&inputs, STEP, |ts| forward_only(ts, &build));
        worst = worst.max(max_relative_error(&grads, &numeric));
    }
    assert!(worst <= TOL, "{name}: max relative error {worst:e}");
}

fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::uniform(shape, 1.0, rng)
}

/// Weighted sum so every output entry gets a distinct upstream adjoint.
fn weighted_sum(g: &mut Graph<'_>, v: Var) -> Var {
    let n = g.value(v).len();
    let shape = g.shape(v).to_vec();
    let w = Tensor::new(shape, (0..n).map(|i| 0.3 + 0.17 * i as f64).collect()).unwrap();
    let wv = g.constant(w);
    let p = g.mul(v, wv).unwrap();
    g.sum(p).unwrap()
}

#[test]
fn gradcheck_matmul() {
    check_op(
        "matmul",
        |r| vec![rand_t(r, &[3, 4]), rand_t(r, &[4, 2])],
        |g, v| {
            let m = g.matmul(v[0], v[1]).unwrap();
            weighted_sum(g, m)
        },
    );
}

#[test]
fn gradcheck_elementwise() {
    check_op(
        "add/sub/mul",
        |r| vec![rand_t(r, &[2, 3]), rand_t(r, &[2, 3])],
        |g, v| {
            let a = g.add(v[0], v[1]).unwrap();
            let s = g.sub(v[0], v[1]).unwrap();
            let m = g.mul(a, s).unwrap();
            let m = g.scale(m, 1.7).unwrap();
            weighted_sum(g, m)
        },
    );
    check_op(
        "tanh/sigmoid",
        |r| vec![rand_t(r, &[5])],
        |g, v| {
            let t = g.tanh(v[0]).unwrap();
            let s = g.sigmoid(v[0]).unwrap();
            let m = g.mul(t, s).unwrap();
            weighted_sum(g, m)
        },
    );
    check_op(
        "add_row",
        |r| vec![rand_t(r, &[3, 4]), rand_t(r, &[4])],
        |g, v| {
            let a = g.add_row(v[0], v[1]).unwrap();
            let t = g.tanh(a).unwrap();
            weighted_sum(g, t)
        },
    );
}

#[test]
fn gradcheck_softmax_and_cross_entropy() {
    check_op(
        "softmax",
        |r| vec![rand_t(r, &[6])],
        |g, v| {
            let s = g.softmax(v[0]).unwrap();
            weighted_sum(g, s)
        },
    );
    check_op(
        "softmax rows + cross_entropy",
        |r| vec![rand_t(r, &[4, 5])],
        |g, v| {
            let s = g.softmax(v[0]).unwrap();
            g.cross_entropy(s, &[0, 4, 2, 2]).unwrap()
        },
    );
}

#[test]
fn gradcheck_structural_ops() {
    check_op(
        "concat/slice/row/stack/reshape",
        |r| vec![rand_t(r, &[2, 3]), rand_t(r, &[2, 2])],
        |g, v| {
            let c = g.concat(&[v[0], v[1]]).unwrap();
            let s = g.slice_last(c, 1, 3).unwrap();
            let r0 = g.row(s, 0).unwrap();
            let r1 = g.row(s, 1).unwrap();
            let st = g.stack_rows(&[r1, r0, r1]).unwrap();
            let flat = g.reshape(st, &[9]).unwrap();
            let t = g.tanh(flat).unwrap();
            weighted_sum(g, t)
        },
    );
    check_op(
        "sum/mean",
        |r| vec![rand_t(r, &[7])],
        |g, v| {
            let sq = g.mul(v[0], v[0]).unwrap();
            let m = g.mean(sq).unwrap();
            let s = g.sum(v[0]).unwrap();
            let p = g.mul(m, s).unwrap();
            g.sum(p).unwrap()
        },
    );
    check_op(
        "gather_rows",
        |r| vec![rand_t(r, &[5, 3])],
        |g, v| {
            let rows = g.gather_rows(v[0], &[4, 1, 1, 0]).unwrap();
            let t = g.tanh(rows).unwrap();
            weighted_sum(g, t)
        },
    );
}

#[test]
fn gradcheck_dropout_fixed_mask() {
    // Re-seeding per evaluation keeps the mask identical across the difference quotient.
    check_op(
        "dropout",
        |r| vec![rand_t(r, &[12])],
        |g, v| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let d = g.dropout(v[0], 0.4, true, &mut rng).unwrap();
            let t = g.tanh(d).unwrap();
            weighted_sum(g, t)
        },
    );
}

#[test]
fn gradcheck_bilinear() {
    check_op(
        "bilinear_rows",
        |r| vec![rand_t(r, &[3, 4]), rand_t(r, &[2, 4, 4]), rand_t(r, &[4])],
        |g, v| {
            let b = g.bilinear_rows(v[0], v[1], v[2]).unwrap();
            let t = g.tanh(b).unwrap();
            weighted_sum(g, t)
        },
    );
    check_op(
        "bilinear",
        |r| vec![rand_t(r, &[3]), rand_t(r, &[2, 3, 3]), rand_t(r, &[3])],
        |g, v| {
            let b = g.bilinear(v[0], v[1], v[2]).unwrap();
            weighted_sum(g, b)
        },
    );
}

#[test]
fn gradcheck_segmented_bilinear_and_row_blocks() {
    check_op(
        "bilinear_segments",
        |r| vec![rand_t(r, &[5, 3]), rand_t(r, &[2, 3, 3]), rand_t(r, &[3, 3])],
        |g, v| {
            let b = g.bilinear_segments(v[0], v[1], v[2], &[0, 0, 2, 1, 2]).unwrap();
            let t = g.tanh(b).unwrap();
            weighted_sum(g, t)
        },
    );
    check_op(
        "concat_rows/slice_rows",
        |r| vec![rand_t(r, &[2, 3]), rand_t(r, &[3, 3])],
        |g, v| {
            let c = g.concat_rows(&[v[1], v[0], v[1]]).unwrap();
            let s = g.slice_rows(c, 2, 4).unwrap();
            let t = g.tanh(s).unwrap();
            weighted_sum(g, t)
        },
    );
}

#[test]
fn segmented_bilinear_equals_per_row_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let d = rng.random_range(1..5);
        let k = rng.random_range(1..4);
        let s = rng.random_range(1..4);
        let n = rng.random_range(1..6);
        let h = rand_t(&mut rng, &[n, d]);
        let t = rand_t(&mut rng, &[k, d, d]);
        let u = rand_t(&mut rng, &[s, d]);
        let seg: Vec<usize> = (0..n).map(|_| rng.random_range(0..s)).collect();
        let mut g = Graph::new();
        let (hv, tv, uv) = (g.constant(h.clone()), g.constant(t.clone()), g.constant(u.clone()));
        let out = g.bilinear_segments(hv, tv, uv, &seg).unwrap();
        for r in 0..n {
            let hr = Tensor::vector(h.row(r).to_vec());
            let ur = Tensor::vector(u.row(seg[r]).to_vec());
            for (a, b) in g.value(out).row(r).iter().zip(naive_bilinear(&hr, &t, &ur)) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn segmented_bilinear_rejects_bad_segments() {
    let mut g = Graph::new();
    let h = g.constant(Tensor::zeros(&[2, 2]));
    let t = g.constant(Tensor::zeros(&[1, 2, 2]));
    let u = g.constant(Tensor::zeros(&[1, 2]));
    assert!(g.bilinear_segments(h, t, u, &[0, 1]).is_err());
    assert!(g.bilinear_segments(h, t, u, &[0]).is_err());
}

fn naive_bilinear(h: &Tensor, t: &Tensor, u: &Tensor) -> Vec<f64> {
    let k = t.shape()[0];
    let d = h.len();
    (0..k)
        .map(|kk| {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += h.data()[i] * t.get(&[kk, i, j]) * u.data()[j];
                }
            }
            s
        })
        .collect()
}

#[test]
fn bilinear_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let d = rng.random_range(1..6);
        let k = rng.random_range(1..4);
        let h = rand_t(&mut rng, &[d]);
        let t = rand_t(&mut rng, &[k, d, d]);
        let u = rand_t(&mut rng, &[d]);
        let mut g = Graph::new();
        let (hv, tv, uv) = (g.constant(h.clone()), g.constant(t.clone()), g.constant(u.clone()));
        let out = g.bilinear(hv, tv, uv).unwrap();
        for (a, b) in g.value(out).data().iter().zip(naive_bilinear(&h, &t, &u)) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn bilinear_frozen_case() {
    // Exact rational evaluation of the triple sum: [97/200, 41/100].
    let h = Tensor::vector(vec![0.5, -1.0, 2.0]);
    let u = Tensor::vector(vec![0.3, 0.7, -1.2]);
    let t = Tensor::new(
        vec![2, 3, 3],
        [1., -2., 3., 0., 4., -1., 2., 2., -3., -5., 1., 0., 3., -2., 6., 1., -1., 1.]
            .iter()
            .map(|v| v / 10.0)
            .collect(),
    )
    .unwrap();
    let mut g = Graph::new();
    let (hv, tv, uv) = (g.constant(h), g.constant(t), g.constant(u));
    let out = g.bilinear(hv, tv, uv).unwrap();
    let got = g.value(out).data();
    assert!((got[0] - 0.485).abs() < 1e-12);
    assert!((got[1] - 0.41).abs() < 1e-12);
}

#[test]
fn softmax_frozen_case() {
    let p = aote_core::tensor::softmax(&[1.0, 2.0, 3.0]).unwrap();
    let expected = [0.09003057317038046, 0.24472847105479764, 0.6652409557748218];
    for (a, b) in p.iter().zip(expected) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn cross_entropy_mixed_rows() {
    // (-ln 0.7 - ln 0.5) / 2
    let mut g = Graph::new();
    let p = g.constant(Tensor::from_rows(&[vec![0.7, 0.2, 0.1], vec![0.25, 0.25, 0.5]]).unwrap());
    let l = g.cross_entropy(p, &[0, 2]).unwrap();
    assert!((g.value(l).item() - 0.5249110622493389).abs() < 1e-14);
}

#[test]
fn matmul_annihilator() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = Tensor::zeros(&[2, 3]);
    let b = rand_t(&mut rng, &[3, 4]);
    let c = z.matmul(&b).unwrap();
    assert_eq!(c, Tensor::zeros(&[2, 4]));
}

#[test]
fn graph_results_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = rand_t(&mut rng, &[4, 3]);
        let w = rand_t(&mut rng, &[3, 3]);
        let mut g = Graph::new();
        let (xv, wv) = (g.param(&x), g.param(&w));
        let m = g.matmul(xv, wv).unwrap();
        let d = g.dropout(m, 0.3, true, &mut rng).unwrap();
        let s = g.softmax(d).unwrap();
        let l = g.cross_entropy(s, &[0, 1, 2, 0]).unwrap();
        let v = g.value(l).item();
        let grads = g.backward(l).unwrap();
        (v.to_bits(), grads.get(wv).unwrap().data().iter().map(|x| x.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(x in prop::collection::vec(-15.0f64..15.0, 1..40)) {
        let p = aote_core::tensor::softmax(&x).unwrap();
        let total: f64 = p.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0 || x.len() == 1));
    }

    #[test]
    fn softmax_shift_invariance(x in prop::collection::vec(-10.0f64..10.0, 1..20), c in -50.0f64..50.0) {
        let p = aote_core::tensor::softmax(&x).unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let q = aote_core::tensor::softmax(&shifted).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
