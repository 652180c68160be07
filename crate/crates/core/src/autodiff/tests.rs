use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference check of every parameter element. Returns the worst
/// relative error, with magnitudes below `1e-4` treated as `1e-4`.
fn fd_check(graph: &mut Graph, loss: NodeId, params: &mut ParamSet) -> f64 {
    let h = 1e-4;
    params.zero_grad();
    graph.forward(params).unwrap();
    graph.backward(loss, params).unwrap();
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad.clone()).collect();
    let mut worst: f64 = 0.0;
    let ids: Vec<ParamId> = (0..params.len()).map(ParamId).collect();
    for (pi, id) in ids.iter().enumerate() {
        for e in 0..params.get(*id).len() {
            let orig = params.get(*id).values[e];
            params.get_mut(*id).values[e] = orig + h;
            graph.forward(params).unwrap();
            let up = graph.scalar(loss);
            params.get_mut(*id).values[e] = orig - h;
            graph.forward(params).unwrap();
            let down = graph.scalar(loss);
            params.get_mut(*id).values[e] = orig;
            let num = (up - down) / (2.0 * h);
            let a = analytic[pi][e];
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    worst
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-r..r)).collect()
}

#[test]
fn sum_of_parameter_has_unit_gradient() {
    let mut ps = ParamSet::new();
    let p = ps.add(vec![1.0, -2.0, 3.5]);
    let mut g = Graph::new();
    let x = g.push(Op::Param(p), &ps).unwrap();
    let s = g.push(Op::Sum(x), &ps).unwrap();
    g.forward(&ps).unwrap();
    g.backward(s, &mut ps).unwrap();
    assert_eq!(ps.get(p).grad, vec![1.0; 3]);
}

#[test]
fn half_square_gradient() {
    let mut ps = ParamSet::new();
    let p = ps.add(vec![3.0]);
    let mut g = Graph::new();
    let x = g.push(Op::Param(p), &ps).unwrap();
    let sq = g.push(Op::Mul(x, x), &ps).unwrap();
    let half = g.push(Op::Scale(sq, 0.5), &ps).unwrap();
    let loss = g.push(Op::Sum(half), &ps).unwrap();
    g.forward(&ps).unwrap();
    assert_eq!(g.scalar(loss), 4.5);
    g.backward(loss, &mut ps).unwrap();
    assert_eq!(ps.get(p).grad, vec![3.0]);
}

#[test]
fn backward_requires_forward() {
    let mut ps = ParamSet::new();
    let p = ps.add(vec![1.0]);
    let mut g = Graph::new();
    let x = g.push(Op::Param(p), &ps).unwrap();
    let s = g.push(Op::Sum(x), &ps).unwrap();
    assert!(matches!(g.backward(s, &mut ps), Err(Error::GraphNotEvaluated)));
    g.forward(&ps).unwrap();
    assert!(g.backward(x, &mut ps).is_ok());
    let input = g.push(Op::Input(1), &ps).unwrap();
    let _ = g.push(Op::Add(x, input), &ps).unwrap();
    assert!(matches!(g.backward(s, &mut ps), Err(Error::GraphNotEvaluated)));
}

#[test]
fn shape_errors() {
    let mut ps = ParamSet::new();
    let a = ps.add(vec![0.0; 3]);
    let b = ps.add(vec![0.0; 4]);
    let mut g = Graph::new();
    let x = g.push(Op::Param(a), &ps).unwrap();
    let y = g.push(Op::Param(b), &ps).unwrap();
    assert!(g.push(Op::Add(x, y), &ps).is_err());
    assert!(g.push(Op::Gather { x, index: vec![Some(3)] }, &ps).is_err());
    let i = g.push(Op::Input(2), &ps).unwrap();
    assert!(g.set_input(i, &[1.0]).is_err());
    assert!(g.set_input(x, &[1.0, 2.0, 3.0]).is_err());
}

#[test]
fn relu_gradient_at_zero_is_zero() {
    let mut ps = ParamSet::new();
    let p = ps.add(vec![0.0, 1.0, -1.0]);
    let mut g = Graph::new();
    let x = g.push(Op::Param(p), &ps).unwrap();
    let r = g.push(Op::Relu(x), &ps).unwrap();
    let s = g.push(Op::Sum(r), &ps).unwrap();
    g.forward(&ps).unwrap();
    g.backward(s, &mut ps).unwrap();
    assert_eq!(ps.get(p).grad, vec![0.0, 1.0, 0.0]);
}

#[test]
fn noise_input_passes_gradient_through() {
    let mut ps = ParamSet::new();
    let p = ps.add(vec![0.3, -1.2]);
    let mut g = Graph::new();
    let x = g.push(Op::Param(p), &ps).unwrap();
    let u = g.push(Op::Input(2), &ps).unwrap();
    let noisy = g.push(Op::Add(x, u), &ps).unwrap();
    let w = g.push(Op::Input(2), &ps).unwrap();
    let prod = g.push(Op::Mul(noisy, w), &ps).unwrap();
    let s = g.push(Op::Sum(prod), &ps).unwrap();
    g.set_input(u, &[0.4, -0.1]).unwrap();
    g.set_input(w, &[2.0, -3.0]).unwrap();
    g.forward(&ps).unwrap();
    assert!((g.value(noisy)[0] - 0.7).abs() < 1e-15);
    g.backward(s, &mut ps).unwrap();
    assert_eq!(ps.get(p).grad, vec![2.0, -3.0]);
}

/// 20-element input through a two-layer ReLU MLP.
#[test]
fn mlp_graph_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut tried = 0;
    let mut checked = 0;
    while checked < 10 {
        tried += 1;
        assert!(tried < 200);
        let mut ps = ParamSet::new();
        let xin = ps.add(random_vec(&mut rng, 20, 1.0));
        let w1 = ps.add(random_vec(&mut rng, 6 * 4, 1.0));
        let b1 = ps.add(random_vec(&mut rng, 6, 0.5));
        let w2 = ps.add(random_vec(&mut rng, 2 * 6, 1.0));
        let b2 = ps.add(random_vec(&mut rng, 2, 0.5));
        let mut g = Graph::new();
        let x = g.push(Op::Param(xin), &ps).unwrap();
        let (w1n, b1n) = (g.push(Op::Param(w1), &ps).unwrap(), g.push(Op::Param(b1), &ps).unwrap());
        let h = g.push(Op::Affine { x, w: w1n, b: b1n, in_dim: 4, out_dim: 6 }, &ps).unwrap();
        let r = g.push(Op::Relu(h), &ps).unwrap();
        let (w2n, b2n) = (g.push(Op::Param(w2), &ps).unwrap(), g.push(Op::Param(b2), &ps).unwrap());
        let y = g.push(Op::Affine { x: r, w: w2n, b: b2n, in_dim: 6, out_dim: 2 }, &ps).unwrap();
        let loss = g.push(Op::Mse { pred: y, target: random_vec(&mut rng, 10, 1.0) }, &ps).unwrap();
        g.forward(&ps).unwrap();
        if g.value(h).iter().any(|v| v.abs() < 1e-2) {
            continue;
        }
        assert!(fd_check(&mut g, loss, &mut ps) < 1e-3);
        checked += 1;
    }
}

#[test]
fn upsample_and_gather_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..5 {
        let mut ps = ParamSet::new();
        let p = ps.add(random_vec(&mut rng, 3 * 4, 2.0));
        let mut g = Graph::new();
        let x = g.push(Op::Param(p), &ps).unwrap();
        let up = g.push(Op::Upsample2x { x, h: 3, w: 4, out_h: 5, out_w: 8 }, &ps).unwrap();
        let sl = g.push(Op::Slice { x: up, start: 3, len: 30 }, &ps).unwrap();
        let index: Vec<Option<usize>> = (0..40).map(|i| (i % 7 != 0).then_some((i * 13) % 30)).collect();
        let ga = g.push(Op::Gather { x: sl, index }, &ps).unwrap();
        let st = g.push(Op::Concat(vec![ga, ga]), &ps).unwrap();
        let loss = g.push(Op::Mse { pred: st, target: random_vec(&mut rng, 80, 1.0) }, &ps).unwrap();
        assert!(fd_check(&mut g, loss, &mut ps) < 1e-3);
    }
}

#[test]
fn laplace_bits_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..10 {
        let mut ps = ParamSet::new();
        let vals = ps.add(random_vec(&mut rng, 8, 3.0));
        let mp: Vec<f64> = (0..8).flat_map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.5)]).collect();
        let mpid = ps.add(mp);
        let mut g = Graph::new();
        let v = g.push(Op::Param(vals), &ps).unwrap();
        let m = g.push(Op::Param(mpid), &ps).unwrap();
        let loss = g.push(Op::LaplaceBits { values: v, params: m }, &ps).unwrap();
        assert!(fd_check(&mut g, loss, &mut ps) < 1e-3);
    }
}

#[test]
fn adam_first_step_has_unit_magnitude() {
    let mut ps = ParamSet::new();
    let p = ps.add(vec![1.0, 5.0]);
    let mut opt = Adam::new(0.1, &ps);
    ps.get_mut(p).grad = vec![1.0, 1.0];
    opt.step(&mut ps).unwrap();
    for v in &ps.get(p).values {
        let moved = [1.0, 5.0].iter().map(|o| (o - v).abs()).fold(f64::MAX, f64::min);
        assert!((moved - 0.1).abs() < 1e-6);
    }
    assert_eq!(ps.get(p).grad, vec![1.0, 1.0]);
    assert_eq!(opt.steps(), 1);
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let mut ps = ParamSet::new();
    let p = ps.add(vec![0.7]);
    let mut opt = Adam::new(0.1, &ps);
    opt.step(&mut ps).unwrap();
    assert_eq!(ps.get(p).values, vec![0.7]);
}

#[test]
fn adam_rejects_nan() {
    let mut ps = ParamSet::new();
    let p = ps.add(vec![0.7, 0.2]);
    let mut opt = Adam::new(0.1, &ps);
    ps.get_mut(p).grad = vec![0.5, f64::NAN];
    assert!(matches!(opt.step(&mut ps), Err(Error::NonFinite(_))));
    assert_eq!(ps.get(p).values, vec![0.7, 0.2]);
    assert_eq!(opt.steps(), 0);
}

#[test]
fn adam_minimizes_quadratic() {
    // f(p) = (p - 2)^2 from p = 0, lr 0.1, 100 steps. A direct run of this
    // recursion (done once in double precision) ends at p = 2.00842.
    let mut ps = ParamSet::new();
    let p = ps.add(vec![0.0]);
    let mut g = Graph::new();
    let x = g.push(Op::Param(p), &ps).unwrap();
    let loss = g.push(Op::Mse { pred: x, target: vec![2.0] }, &ps).unwrap();
    let mut opt = Adam::new(0.1, &ps);
    for _ in 0..100 {
        ps.zero_grad();
        g.forward(&ps).unwrap();
        g.backward(loss, &mut ps).unwrap();
        opt.step(&mut ps).unwrap();
    }
    let end = ps.get(p).values[0];
    assert!((end - 2.0).abs() < 0.05, "{end}");
    assert!((end - 2.008_422_800_41).abs() < 1e-9);
}
