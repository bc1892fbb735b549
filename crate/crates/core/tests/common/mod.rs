#![allow(dead_code)]

use semcond::condgan::{critic_loss_with, CondGanModel, RealBatch};
use semcond::config::GanConfig;
use semcond::{Graph, NodeId, Result, SeededRng, Tensor};

pub const FD_STEP: f64 = 1e-5;

/// Relative error with a small floor so near-zero gradients compare on an
/// absolute scale.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

pub fn random_tensor(rng: &mut SeededRng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| rng.uniform_range(lo, hi))
}

type Build = Box<dyn Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>>;

/// A differentiable expression of some input tensors. The scalar objective
/// is `sum(weights * build(inputs))` for fixed random weights.
pub struct Case {
    pub name: &'static str,
    pub inputs: Vec<Tensor<f64>>,
    pub build: Build,
}

fn objective(case: &Case, weights: &Tensor<f64>, inputs: &[Tensor<f64>]) -> Result<(Graph<f64>, NodeId, Vec<NodeId>)> {
    let mut g = Graph::new();
    let vars: Vec<NodeId> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = (case.build)(&mut g, &vars)?;
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w)?;
    let loss = g.sum(prod)?;
    Ok((g, loss, vars))
}

/// Worst relative error between reverse-mode and central-difference
/// gradients over every input entry of the case.
pub fn check_case(case: &Case, rng: &mut SeededRng) -> f64 {
    let probe = {
        let mut g = Graph::new();
        let vars: Vec<NodeId> = case.inputs.iter().map(|t| g.variable(t.clone())).collect();
        let out = (case.build)(&mut g, &vars).expect("case builds");
        g.value(out).shape()
    };
    let weights = random_tensor(rng, probe[0], probe[1], -1.0, 1.0);
    let (mut g, loss, vars) = objective(case, &weights, &case.inputs).unwrap();
    let grads = g.gradients(loss, &vars).unwrap();
    let eval = |inputs: &[Tensor<f64>]| {
        let (g, loss, _) = objective(case, &weights, inputs).unwrap();
        g.value(loss).item().unwrap()
    };
    let mut worst: f64 = 0.0;
    for (k, input) in case.inputs.iter().enumerate() {
        for i in 0..input.len() {
            let mut plus = case.inputs.clone();
            plus[k].data_mut()[i] += FD_STEP;
            let mut minus = case.inputs.clone();
            minus[k].data_mut()[i] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads[k].data()[i], numeric));
        }
    }
    worst
}

fn dims(rng: &mut SeededRng) -> (usize, usize) {
    (1 + rng.index(4), 1 + rng.index(4))
}

/// Random case of the given kind, cycling through every differentiable op.
pub fn make_case(kind: usize, rng: &mut SeededRng) -> Case {
    let (r, c) = dims(rng);
    match kind % 12 {
        0 => {
            // Small MLP with a scalar head, mixing leaky and identity layers.
            let depth = 1 + rng.index(3);
            let mut widths = vec![c];
            for _ in 0..depth {
                widths.push(1 + rng.index(4));
            }
            widths.push(1);
            let mut inputs = vec![random_tensor(rng, r, c, -2.0, 2.0)];
            for w in widths.windows(2) {
                inputs.push(random_tensor(rng, w[1], w[0], -1.0, 1.0));
                inputs.push(random_tensor(rng, 1, w[1], -0.5, 0.5));
            }
            let layers = widths.len() - 1;
            Case {
                name: "mlp",
                inputs,
                build: Box::new(move |g, v| {
                    let mut h = v[0];
                    for l in 0..layers {
                        let wt = g.transpose(v[1 + 2 * l])?;
                        let z = g.matmul(h, wt)?;
                        let z = g.add_row(z, v[2 + 2 * l])?;
                        h = if l + 1 < layers { g.leaky_relu(z, 0.2)? } else { z };
                    }
                    Ok(h)
                }),
            }
        }
        1 => {
            let k = 1 + rng.index(4);
            Case {
                name: "matmul",
                inputs: vec![random_tensor(rng, r, k, -2.0, 2.0), random_tensor(rng, k, c, -2.0, 2.0)],
                build: Box::new(|g, v| g.matmul(v[0], v[1])),
            }
        }
        2 => Case {
            name: "add_sub_mul",
            inputs: vec![random_tensor(rng, r, c, -2.0, 2.0), random_tensor(rng, r, c, -2.0, 2.0)],
            build: Box::new(|g, v| {
                let s = g.add(v[0], v[1])?;
                let d = g.sub(v[0], v[1])?;
                g.mul(s, d)
            }),
        },
        3 => Case {
            name: "safe_div",
            inputs: vec![random_tensor(rng, r, c, -2.0, 2.0), random_tensor(rng, r, c, 0.5, 2.0)],
            build: Box::new(|g, v| g.safe_div(v[0], v[1])),
        },
        4 => Case {
            name: "leaky_relu",
            inputs: vec![random_tensor(rng, r, c, -2.0, 2.0)],
            build: Box::new(|g, v| g.leaky_relu(v[0], 0.2)),
        },
        5 => Case {
            name: "sqrt",
            inputs: vec![random_tensor(rng, r, c, 0.2, 3.0)],
            build: Box::new(|g, v| g.sqrt(v[0])),
        },
        6 => Case {
            name: "exp",
            inputs: vec![random_tensor(rng, r, c, -2.0, 2.0)],
            build: Box::new(|g, v| g.exp(v[0])),
        },
        7 => Case {
            name: "log_softmax",
            inputs: vec![random_tensor(rng, r, c, -3.0, 3.0)],
            build: Box::new(|g, v| g.log_softmax(v[0])),
        },
        8 => Case {
            name: "row_norm",
            inputs: vec![random_tensor(rng, r, c, 0.3, 2.0)],
            build: Box::new(|g, v| g.row_norm(v[0])),
        },
        9 => Case {
            name: "broadcast_reduce",
            inputs: vec![random_tensor(rng, r, c, -2.0, 2.0), random_tensor(rng, 1, r, -1.0, 1.0)],
            build: Box::new(move |g, v| {
                let t = g.transpose(v[0])?;
                let shifted = g.add_row(t, v[1])?;
                let cols = g.sum_rows(shifted)?;
                let rows = g.sum_cols(shifted)?;
                let a = g.broadcast_rows(cols, c)?;
                let b = g.broadcast_cols(rows, r)?;
                let ab = g.mul(a, b)?;
                let m = g.mean(shifted)?;
                let mb = g.broadcast_scalar(m, c, r)?;
                g.add(ab, mb)
            }),
        },
        10 => {
            let c2 = 1 + rng.index(3);
            Case {
                name: "concat_slice",
                inputs: vec![
                    random_tensor(rng, r, c, -2.0, 2.0),
                    random_tensor(rng, r, c2, -2.0, 2.0),
                ],
                build: Box::new(move |g, v| {
                    let cat = g.concat_cols(v[0], v[1])?;
                    let sq = g.square(cat)?;
                    let right = g.slice_cols(sq, c, c2)?;
                    let left = g.slice_cols(cat, 0, c)?;
                    let total = g.sum(left)?;
                    let tb = g.broadcast_scalar(total, r, c2)?;
                    g.mul(right, tb)
                }),
            }
        }
        _ => Case {
            name: "square_scale_shift",
            inputs: vec![random_tensor(rng, r, c, -2.0, 2.0)],
            build: Box::new(|g, v| {
                let sq = g.square(v[0])?;
                let s = g.scale(sq, 0.7)?;
                g.add_scalar(s, -1.3)
            }),
        },
    }
}

/// Runs `n` random first-order cases; returns the worst relative error and
/// the name of the case that produced it.
pub fn first_order_suite(n: usize, seed: u64) -> (f64, &'static str) {
    let mut rng = SeededRng::new(seed);
    let mut worst = (0.0, "");
    for k in 0..n {
        let case = make_case(k, &mut rng);
        let e = check_case(&case, &mut rng);
        if e > worst.0 {
            worst = (e, case.name);
        }
    }
    worst
}

fn gan_model(rng: &mut SeededRng, b: usize, d: usize) -> CondGanModel<f64> {
    let cfg = GanConfig {
        noise_dim: 2,
        generator_hidden: vec![3],
        discriminator_hidden: vec![2 + rng.index(4)],
        ..GanConfig::default()
    };
    CondGanModel::init(b, d, &cfg, rng)
}

/// Critic parameter gradients vs central differences, both for the full
/// critic objective and for the penalty alone (fake rows equal to real rows
/// make the Wasserstein term vanish and `x_hat` the real rows).
pub fn penalty_suite(n: usize, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let mut worst: f64 = 0.0;
    for case in 0..n {
        let (b, d, rows) = (1 + rng.index(3), 1 + rng.index(3), 1 + rng.index(4));
        let model = gan_model(&mut rng, b, d);
        let real = RealBatch {
            features: random_tensor(&mut rng, rows, b, -2.0, 2.0),
            semantics: random_tensor(&mut rng, rows, d, -1.0, 1.0),
        };
        let penalty_only = case % 2 == 0;
        let (fake, lambda) = if penalty_only {
            (real.features.clone(), 1.0)
        } else {
            (random_tensor(&mut rng, rows, b, -2.0, 2.0), 10.0)
        };
        let alpha: Vec<f64> = (0..rows).map(|_| rng.uniform()).collect();
        let analytic = critic_loss_with(&model, &real, &fake, &alpha, lambda).unwrap();
        if penalty_only {
            assert_eq!(analytic.wasserstein_gap, 0.0);
        }
        let n_tensors = model.discriminator.tensors().count();
        for t in 0..n_tensors {
            let len = model.discriminator.tensors().nth(t).unwrap().len();
            for i in 0..len {
                let eval = |delta: f64| {
                    let mut m = model.clone();
                    m.discriminator.tensors_mut().nth(t).unwrap().data_mut()[i] += delta;
                    critic_loss_with(&m, &real, &fake, &alpha, lambda).unwrap().loss
                };
                let numeric = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
                worst = worst.max(rel_err(analytic.grads[t].data()[i], numeric));
            }
        }
    }
    worst
}
