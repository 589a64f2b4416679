use std::sync::Arc;

use gradguard::autodiff::{analytic_gradient, check_grad, max_relative_error, numeric_gradient};
use gradguard::{Graph, NodeId, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POINTS: usize = 100;
const STEP: f64 = 1e-5;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Weights bounded away from zero, with random signs, so every component of
/// the probed gradient is well above finite-difference roundoff.
fn probe_weights(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.random_range(0.5..1.5);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `sum(op(inputs) * R)` for a fixed random `R`, which makes the root's
/// gradient the op's vector-Jacobian product with `R`.
fn probe(
    graph: &mut Graph,
    out: NodeId,
    r: &Tensor,
) -> Result<NodeId> {
    let rn = graph.constant(r.clone());
    let m = graph.mul(out, rn)?;
    graph.sum(m)
}

/// Runs the finite-difference check at `POINTS` random points. `sample`
/// draws the inputs and returns `None` to ask for a resample.
fn check_op(
    name: &str,
    seed: u64,
    sample: impl Fn(&mut ChaCha8Rng) -> Option<Vec<Tensor>>,
    op: impl Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < POINTS {
        let Some(point) = sample(&mut rng) else { continue };
        let mut g = Graph::new();
        let ids: Vec<NodeId> = point.iter().map(|t| g.variable(t.clone())).collect();
        let out = op(&mut g, &ids).unwrap();
        let shape = g.value(out).shape().to_vec();
        let r = probe_weights(&mut rng, &shape);
        let builder = |g: &mut Graph, ids: &[NodeId]| {
            let out = op(g, ids)?;
            probe(g, out, &r)
        };
        let err = check_grad(&builder, &point, STEP).unwrap();
        worst = worst.max(err);
        done += 1;
    }
    assert!(worst <= 1e-6, "{name}: max relative error {worst:e}");
}

fn away_from_zero(t: &Tensor) -> bool {
    t.data().iter().all(|v| v.abs() >= 1e-3)
}

#[test]
fn matmul_vjp() {
    check_op(
        "matmul",
        1,
        |rng| Some(vec![uniform(rng, &[2, 3], -2.0, 2.0), uniform(rng, &[3, 4], -2.0, 2.0)]),
        |g, x| g.matmul(x[0], x[1]),
    );
}

#[test]
fn transpose_vjp() {
    check_op("transpose", 2, |rng| Some(vec![uniform(rng, &[2, 3], -2.0, 2.0)]), |g, x| {
        g.transpose(x[0])
    });
}

#[test]
fn add_sub_mul_vjp() {
    let two = |rng: &mut ChaCha8Rng| {
        Some(vec![uniform(rng, &[3, 2], -2.0, 2.0), uniform(rng, &[3, 2], -2.0, 2.0)])
            .filter(|p| p.iter().all(away_from_zero))
    };
    check_op("add", 3, two, |g, x| g.add(x[0], x[1]));
    check_op("sub", 4, two, |g, x| g.sub(x[0], x[1]));
    check_op("multiply", 5, two, |g, x| g.mul(x[0], x[1]));
}

#[test]
fn scale_square_exp_vjp() {
    let one = |rng: &mut ChaCha8Rng| Some(vec![uniform(rng, &[2, 3], -2.0, 2.0)]).filter(|p| away_from_zero(&p[0]));
    check_op("scale", 6, one, |g, x| g.scale(x[0], -1.7));
    check_op("square", 7, one, |g, x| g.square(x[0]));
    check_op("exp", 8, one, |g, x| g.exp(x[0]));
}

#[test]
fn log_and_recip_vjp() {
    let positive = |rng: &mut ChaCha8Rng| Some(vec![uniform(rng, &[2, 3], 0.25, 2.0)]);
    check_op("log", 9, positive, |g, x| g.log(x[0]));
    check_op("recip", 10, positive, |g, x| g.recip(x[0]));
}

#[test]
fn relu_vjp_away_from_kink() {
    check_op(
        "relu",
        11,
        |rng| Some(vec![uniform(rng, &[3, 3], -2.0, 2.0)]).filter(|p| away_from_zero(&p[0])),
        |g, x| g.relu(x[0]),
    );
}

#[test]
fn select_vjp() {
    let mask = Arc::new(Tensor::matrix(2, 3, vec![1.0, 0.0, 1.0, 1.0, 1.0, 0.0]).unwrap());
    check_op("select", 12, |rng| Some(vec![uniform(rng, &[2, 3], -2.0, 2.0)]), move |g, x| {
        g.select(x[0], mask.clone())
    });
}

#[test]
fn log_softmax_vjp() {
    check_op("exp-normalize", 13, |rng| Some(vec![uniform(rng, &[3, 4], -2.0, 2.0)]), |g, x| {
        g.log_softmax(x[0])
    });
}

#[test]
fn reductions_and_broadcasts_vjp() {
    let m = |rng: &mut ChaCha8Rng| Some(vec![uniform(rng, &[3, 4], -2.0, 2.0)]);
    check_op("sum", 14, m, |g, x| g.sum(x[0]));
    check_op("sum_rows", 15, m, |g, x| g.sum_rows(x[0]));
    check_op("row_sums", 16, m, |g, x| g.row_sums(x[0]));
    let v = |rng: &mut ChaCha8Rng| Some(vec![uniform(rng, &[4], -2.0, 2.0)]);
    check_op("broadcast_rows", 17, v, |g, x| g.broadcast_rows(x[0], 3));
    check_op("broadcast_cols", 18, v, |g, x| g.broadcast_cols(x[0], 2));
    check_op("broadcast_scalar", 19, |rng| Some(vec![uniform(rng, &[], -2.0, 2.0)]), |g, x| {
        g.broadcast_scalar(x[0], &[2, 2])
    });
    check_op(
        "add_row",
        20,
        |rng| Some(vec![uniform(rng, &[3, 4], -2.0, 2.0), uniform(rng, &[4], -2.0, 2.0)]),
        |g, x| g.add_row(x[0], x[1]),
    );
}

#[test]
fn gradient_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = uniform(&mut rng, &[2, 3], -2.0, 2.0);
    let r1 = uniform(&mut rng, &[2, 3], -1.0, 1.0);
    let r2 = uniform(&mut rng, &[2, 3], -1.0, 1.0);
    let (a, b) = (0.7, -2.3);
    let f = |g: &mut Graph, x: NodeId| -> Result<NodeId> {
        let e = g.exp(x)?;
        probe(g, e, &r1)
    };
    let h = |g: &mut Graph, x: NodeId| -> Result<NodeId> {
        let l = g.log_softmax(x)?;
        probe(g, l, &r2)
    };
    let combined = analytic_gradient(
        &|g: &mut Graph, ids: &[NodeId]| {
            let fa = f(g, ids[0])?;
            let fa = g.scale(fa, a)?;
            let hb = h(g, ids[0])?;
            let hb = g.scale(hb, b)?;
            g.add(fa, hb)
        },
        &[x.clone()],
    )
    .unwrap();
    let df = analytic_gradient(&|g: &mut Graph, ids: &[NodeId]| f(g, ids[0]), &[x.clone()]).unwrap();
    let dh = analytic_gradient(&|g: &mut Graph, ids: &[NodeId]| h(g, ids[0]), &[x]).unwrap();
    for ((c, f), h) in combined[0].data().iter().zip(df[0].data()).zip(dh[0].data()) {
        assert!((c - (a * f + b * h)).abs() <= 1e-12);
    }
}

/// `f(x) = ||x W||²` for a row `x`, so `H = 2 W Wᵀ` and the nested gradient of
/// `∇f · v` is `H v` exactly.
#[test]
fn nested_gradient_gives_exact_hessian_vector_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (n, m) = (4, 3);
    let w = uniform(&mut rng, &[n, m], -1.0, 1.0);
    let x = uniform(&mut rng, &[1, n], -1.0, 1.0);
    let v = uniform(&mut rng, &[1, n], -1.0, 1.0);

    let mut g = Graph::new();
    let xn = g.variable(x);
    let wn = g.constant(w.clone());
    let xw = g.matmul(xn, wn).unwrap();
    let sq = g.square(xw).unwrap();
    let f = g.sum(sq).unwrap();
    let grad = g.grad(f, &[xn]).unwrap()[0];
    let vn = g.constant(v.clone());
    let gv = g.mul(grad, vn).unwrap();
    let gv = g.sum(gv).unwrap();
    let hv = g.gradient(gv, &[xn]).unwrap().remove(0);

    for i in 0..n {
        let mut expect = 0.0;
        for j in 0..n {
            let wwt: f64 = (0..m).map(|k| w.get(i, k) * w.get(j, k)).sum();
            expect += 2.0 * wwt * v.data()[j];
        }
        assert!((hv.data()[i] - expect).abs() <= 1e-10, "{i}: {} vs {expect}", hv.data()[i]);
    }
}

fn sum_log_softmax_of_wx(g: &mut Graph, w: NodeId, x: NodeId) -> Result<NodeId> {
    // Row-vector form: x (1×3) times Wᵀ.
    let wt = g.transpose(w)?;
    let z = g.matmul(x, wt)?;
    let l = g.log_softmax(z)?;
    g.sum(l)
}

#[test]
fn log_softmax_of_linear_map_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let w = uniform(&mut rng, &[3, 3], -1.0, 1.0);
    let x = uniform(&mut rng, &[1, 3], -1.0, 1.0);
    let err = check_grad(
        &|g: &mut Graph, ids: &[NodeId]| sum_log_softmax_of_wx(g, ids[0], ids[1]),
        &[w, x],
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-6, "{err:e}");
}

#[test]
fn double_backprop_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let w = uniform(&mut rng, &[3, 3], -1.0, 1.0);
    let x = uniform(&mut rng, &[1, 3], -1.0, 1.0);
    let builder = |g: &mut Graph, ids: &[NodeId]| {
        let root = sum_log_softmax_of_wx(g, ids[0], ids[1])?;
        let gx = g.grad(root, &[ids[1]])?[0];
        let sq = g.square(gx)?;
        g.sum(sq)
    };
    let point = [w, x];
    let analytic = analytic_gradient(&builder, &point).unwrap();
    let numeric = numeric_gradient(&builder, &point, 1e-5).unwrap();
    let err = max_relative_error(&analytic[..1], &numeric[..1]);
    assert!(err <= 1e-4, "{err:e}");
}
