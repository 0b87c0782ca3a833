//! Finite-difference checks of every layer's backward pass, in f64, over ten
//! seeds each. Each check contracts the layer output with a fixed random
//! cotangent `r`, so the scalar under test is `sum(r * layer(x))`, and returns
//! the worst relative error of every individual check.

use micunet::encoders::{Baseline, BaselineInput, CrossModal, PtmEncoder, SpecEncoder, WIDTH};
use micunet::fusion::{Fusion, Gate, Variant};
use micunet::gradcheck::{all_coords, grad_check, grad_check_params, ParamCoord};
use micunet::heads::{multitask_loss, Heads};
use micunet::manifold::{hyp_exp0, hyp_exp0_vjp, hyp_log0, hyp_log0_vjp, sph_exp_n, sph_exp_n_vjp, sph_log_n, sph_log_n_vjp};
use micunet::model::{MiCuNet, ModelConfig};
use micunet::nn::{cross_entropy, Attention, BatchNorm, Conv1d, Conv3d, Dense, Dropout, MaxPool, Mode, Module, Relu, Tanh};
use micunet::Tensor;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const SEEDS: u64 = 10;
pub const TOL: f64 = 1e-6;
const H: f64 = 1e-6;
/// The full network accumulates about 5e-13 of rounding noise in its loss,
/// which at `H` alone would eat the whole tolerance; this step sits near the
/// cube root of machine epsilon, the usual central-difference optimum.
const H_MODEL: f64 = 3e-6;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.sample(StandardNormal)).collect()).unwrap()
}

fn contract(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    assert_eq!(y.shape(), r.shape());
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn with_data(like: &Tensor<f64>, v: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(like.shape(), v.to_vec()).unwrap()
}

/// Input gradient of `f` at `x` against the analytic `dx`.
fn input_err(x: &Tensor<f64>, r: &Tensor<f64>, dx: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> Tensor<f64>) -> f64 {
    grad_check(|v| contract(&f(&with_data(x, v)), r), x.data(), dx.data(), H).unwrap()
}

/// At most `k` coordinates drawn from every parameter tensor.
fn sample_coords<M: Module<f64> + ?Sized>(m: &mut M, k: usize, r: &mut ChaCha8Rng) -> Vec<ParamCoord> {
    let all = all_coords(m);
    let mut out = Vec::new();
    let n_params = all.iter().map(|c| c.param + 1).max().unwrap_or(0);
    for p in 0..n_params {
        let mut of_p: Vec<ParamCoord> = all.iter().copied().filter(|c| c.param == p).collect();
        of_p.shuffle(r);
        out.extend(of_p.into_iter().take(k));
    }
    out
}

pub fn dense() -> Vec<f64> {
    let mut errs = vec![];
    for s in 0..SEEDS {
        let mut g = rng(s);
        let mut l = Dense::<f64>::new("d", 5, 4, &mut g);
        let x = normal(&[3, 5], &mut g);
        let r = normal(&[3, 4], &mut g);
        l.forward(&x).unwrap();
        let dx = l.backward(&r).unwrap();
        errs.push(input_err(&x, &r, &dx, |x| l.forward(x).unwrap()));
        let coords = all_coords(&mut l);
        errs.push(
            grad_check_params(&mut l, &coords, H, |l, back| {
                l.zero_grad();
                let y = l.forward(&x).unwrap();
                if back {
                    l.backward(&r).unwrap();
                }
                contract(&y, &r)
            })
            .unwrap(),
        );
    }
    errs
}

pub fn conv1d() -> Vec<f64> {
    let mut errs = vec![];
    for s in 0..SEEDS {
        let mut g = rng(100 + s);
        let mut l = Conv1d::<f64>::new("c", 2, 3, &mut g);
        let x = normal(&[2, 2, 7], &mut g);
        let r = normal(&[2, 3, 7], &mut g);
        l.forward(&x).unwrap();
        let dx = l.backward(&r).unwrap();
        errs.push(input_err(&x, &r, &dx, |x| l.forward(x).unwrap()));
        let coords = all_coords(&mut l);
        errs.push(
            grad_check_params(&mut l, &coords, H, |l, back| {
                l.zero_grad();
                let y = l.forward(&x).unwrap();
                if back {
                    l.backward(&r).unwrap();
                }
                contract(&y, &r)
            })
            .unwrap(),
        );
        // the parameter-only path must agree with the full backward
        let mut a = l.clone();
        a.zero_grad();
        a.forward(&x).unwrap();
        a.backward_params(&r).unwrap();
        let mut b = l.clone();
        b.zero_grad();
        b.forward(&x).unwrap();
        b.backward(&r).unwrap();
        let (mut ga, mut gb) = (vec![], vec![]);
        a.visit_params(&mut |p| ga.extend_from_slice(p.grad.data()));
        b.visit_params(&mut |p| gb.extend_from_slice(p.grad.data()));
        assert_eq!(ga, gb);
    }
    errs
}

pub fn conv3d() -> Vec<f64> {
    let mut errs = vec![];
    for s in 0..SEEDS {
        let mut g = rng(200 + s);
        let mut l = Conv3d::<f64>::new("c", 2, 2, &mut g);
        let x = normal(&[2, 2, 4, 3, 2], &mut g);
        let r = normal(&[2, 2, 4, 3, 2], &mut g);
        l.forward(&x).unwrap();
        let dx = l.backward(&r).unwrap();
        errs.push(input_err(&x, &r, &dx, |x| l.forward(x).unwrap()));
        let coords = all_coords(&mut l);
        errs.push(
            grad_check_params(&mut l, &coords, H, |l, back| {
                l.zero_grad();
                let y = l.forward(&x).unwrap();
                if back {
                    l.backward(&r).unwrap();
                }
                contract(&y, &r)
            })
            .unwrap(),
        );
    }
    errs
}

pub fn batch_norm_train_mode() -> Vec<f64> {
    let mut errs = vec![];
    for s in 0..SEEDS {
        let mut g = rng(300 + s);
        let mut l = BatchNorm::<f64>::new("bn", 3);
        l.visit_params(&mut |p| p.value.data_mut().iter_mut().for_each(|v| *v += g.random_range(-0.5..0.5)));
        let x = normal(&[4, 3, 2, 3, 1], &mut g);
        let r = normal(&[4, 3, 2, 3, 1], &mut g);
        l.forward(&x, Mode::Train).unwrap();
        let dx = l.backward(&r).unwrap();
        errs.push(input_err(&x, &r, &dx, |x| l.forward(x, Mode::Train).unwrap()));
        let coords = all_coords(&mut l);
        errs.push(
            grad_check_params(&mut l, &coords, H, |l, back| {
                l.zero_grad();
                let y = l.forward(&x, Mode::Train).unwrap();
                if back {
                    l.backward(&r).unwrap();
                }
                contract(&y, &r)
            })
            .unwrap(),
        );
    }
    errs
}

pub fn activations_pool_and_dropout() -> Vec<f64> {
    let mut errs = vec![];
    for s in 0..SEEDS {
        let mut g = rng(400 + s);
        let x = normal(&[3, 2, 6], &mut g);
        let r = normal(&[3, 2, 6], &mut g);

        let mut relu = Relu::new();
        relu.forward(&x);
        let dx = relu.backward(&r).unwrap();
        errs.push(input_err(&x, &r, &dx, |x| relu.forward(x)));

        let mut tanh = Tanh::<f64>::new();
        tanh.forward(&x);
        let dx = tanh.backward(&r).unwrap();
        errs.push(input_err(&x, &r, &dx, |x| tanh.forward(x)));

        let mut drop = Dropout::new(0.4, s);
        let state = drop.rng_state();
        drop.forward(&x, Mode::Train);
        let dx = drop.backward(&r).unwrap();
        errs.push(input_err(&x, &r, &dx, |x| {
            drop.set_rng_state(state);
            drop.forward(x, Mode::Train)
        }));

        let mut pool = MaxPool::new();
        let r1 = normal(&[3, 2, 3], &mut g);
        pool.forward(&x).unwrap();
        let dx = pool.backward(&r1).unwrap();
        errs.push(input_err(&x, &r1, &dx, |x| pool.forward(x).unwrap()));

        let x3 = normal(&[2, 2, 4, 5, 1], &mut g);
        let r3 = normal(&[2, 2, 2, 2, 1], &mut g);
        pool.forward(&x3).unwrap();
        let dx = pool.backward(&r3).unwrap();
        errs.push(input_err(&x3, &r3, &dx, |x| pool.forward(x).unwrap()));
    }
    errs
}

pub fn attention() -> Vec<f64> {
    let mut errs = vec![];
    for s in 0..SEEDS {
        let mut g = rng(500 + s);
        let mut l = Attention::<f64>::new("a", 4, &mut g);
        let q = normal(&[2, 3, 4], &mut g);
        let kv = normal(&[2, 5, 4], &mut g);
        let r = normal(&[2, 3, 4], &mut g);
        l.forward(&q, &kv).unwrap();
        let (dq, dkv) = l.backward(&r).unwrap();
        errs.push(input_err(&q, &r, &dq, |q| l.forward(q, &kv).unwrap()));
        errs.push(input_err(&kv, &r, &dkv, |kv| l.forward(&q, kv).unwrap()));
        let coords = all_coords(&mut l);
        errs.push(
            grad_check_params(&mut l, &coords, H, |l, back| {
                l.zero_grad();
                let y = l.forward(&q, &kv).unwrap();
                if back {
                    l.backward(&r).unwrap();
                }
                contract(&y, &r)
            })
            .unwrap(),
        );
    }
    errs
}

pub fn cross_entropy_and_multitask_loss() -> Vec<f64> {
    let mut errs = vec![];
    for s in 0..SEEDS {
        let mut g = rng(600 + s);
        let logits = normal(&[4, 5], &mut g);
        let labels: Vec<usize> = (0..4).map(|_| g.random_range(0..5)).collect();
        let w = g.random_range(0.1..2.0);
        let (_, dl) = cross_entropy("t", &logits, &labels, w).unwrap();
        errs.push(grad_check(|v| cross_entropy("t", &with_data(&logits, v), &labels, w).unwrap().0, logits.data(), dl.data(), H).unwrap());

        let ls = [normal(&[3, 5], &mut g), normal(&[3, 5], &mut g), normal(&[3, 7], &mut g)];
        let lab: [Vec<usize>; 3] = [5, 5, 7].map(|k| (0..3).map(|_| g.random_range(0..k)).collect());
        let lambda = [g.random_range(0.0..2.0), g.random_range(0.0..2.0), g.random_range(0.0..2.0)];
        let (_, _, grads) = multitask_loss(&ls, [&lab[0], &lab[1], &lab[2]], lambda).unwrap();
        for t in 0..3 {
            let dl = grads[t].clone().unwrap();
            errs.push(
                grad_check(
                    |v| {
                        let mut l = ls.to_vec();
                        l[t] = with_data(&ls[t], v);
                        multitask_loss(&l, [&lab[0], &lab[1], &lab[2]], lambda).unwrap().0
                    },
                    ls[t].data(),
                    dl.data(),
                    H,
                )
                .unwrap(),
            );
        }
    }
    errs
}

pub fn manifold_maps() -> Vec<f64> {
    let mut errs = vec![];
    for s in 0..SEEDS {
        let mut g = rng(700 + s);
        let c = g.random_range(0.1..2.0);
        let v: Vec<f64> = (0..5).map(|_| g.random_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..5).map(|_| g.sample(StandardNormal)).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut pt = v.clone();
        pt.push(c);

        let (dv, dc) = hyp_exp0_vjp(&v, c, &r);
        let mut an = dv;
        an.push(dc);
        errs.push(grad_check(|p| dot(&hyp_exp0(&p[..5], p[5]), &r), &pt, &an, H).unwrap());

        let x = hyp_exp0(&v, c);
        let (dx, dc) = hyp_log0_vjp(&x, c, &r);
        let mut pt = x.clone();
        pt.push(c);
        let mut an = dx;
        an.push(dc);
        errs.push(grad_check(|p| dot(&hyp_log0(&p[..5], p[5]), &r), &pt, &an, 1e-7).unwrap());

        let mut t = v.clone();
        t[0] = 0.0;
        let dt = sph_exp_n_vjp(&t, &r);
        errs.push(grad_check(|p| dot(&sph_exp_n(p), &r), &t, &dt, H).unwrap());

        let y = sph_exp_n(&t);
        let dy = sph_log_n_vjp(&y, &r);
        errs.push(grad_check(|p| dot(&sph_log_n(p), &r), &y, &dy, 1e-7).unwrap());
    }
    errs
}

pub fn gate_and_fusion_all_variants() -> Vec<f64> {
    let mut errs = vec![];
    for s in 0..SEEDS {
        let mut g = rng(800 + s);
        let mut gate = Gate::<f64>::new("g", 6, 3, &mut g);
        // the output layer starts at zero; move off that point
        gate.visit_params(&mut |p| p.value.data_mut().iter_mut().for_each(|v| *v += 0.3 * g.sample::<f64, _>(StandardNormal)));
        let z = normal(&[3, 6], &mut g);
        let r = normal(&[3, 3], &mut g);
        gate.forward(&z).unwrap();
        let dz = gate.backward(&r).unwrap();
        errs.push(input_err(&z, &r, &dz, |z| gate.forward(z).unwrap()));
        let coords = all_coords(&mut gate);
        errs.push(
            grad_check_params(&mut gate, &coords, H, |l, back| {
                l.zero_grad();
                let y = l.forward(&z).unwrap();
                if back {
                    l.backward(&r).unwrap();
                }
                contract(&y, &r)
            })
            .unwrap(),
        );

        for v in Variant::ALL {
            let mut f = Fusion::<f64>::new(v, 6, 4, &mut g);
            f.visit_params(&mut |p| p.value.data_mut().iter_mut().for_each(|v| *v += 0.2 * g.sample::<f64, _>(StandardNormal)));
            let r = normal(&[3, 4], &mut g);
            f.forward(&z).unwrap();
            let dz = f.backward(&r).unwrap();
            errs.push(input_err(&z, &r, &dz, |z| f.forward(z).unwrap()));
            let coords = all_coords(&mut f);
            errs.push(
                grad_check_params(&mut f, &coords, H, |l, back| {
                    l.zero_grad();
                    let y = l.forward(&z).unwrap();
                    if back {
                        l.backward(&r).unwrap();
                    }
                    contract(&y, &r)
                })
                .unwrap(),
            );
        }
    }
    errs
}

pub fn heads() -> Vec<f64> {
    let mut errs = vec![];
    for s in 0..SEEDS {
        let mut g = rng(900 + s);
        let mut h = Heads::<f64>::new(6, [3, 4, 5], 0.3, &mut g).unwrap();
        let z = normal(&[3, 6], &mut g);
        let rs = [normal(&[3, 3], &mut g), normal(&[3, 4], &mut g), normal(&[3, 5], &mut g)];
        let states = h.dropout_states();
        let run = |h: &mut Heads<f64>, z: &Tensor<f64>| {
            h.set_dropout_states(&states).unwrap();
            let ys = h.forward(z, Mode::Train).unwrap();
            ys.iter().zip(&rs).map(|(y, r)| contract(y, r)).sum::<f64>()
        };
        run(&mut h, &z);
        let dz = h.backward(&rs.iter().cloned().map(Some).collect::<Vec<_>>()).unwrap();
        errs.push(grad_check(|v| run(&mut h, &with_data(&z, v)), z.data(), dz.data(), H).unwrap());
        let coords = all_coords(&mut h);
        errs.push(
            grad_check_params(&mut h, &coords, H, |h, back| {
                h.zero_grad();
                let v = run(h, &z);
                if back {
                    h.backward(&rs.iter().cloned().map(Some).collect::<Vec<_>>()).unwrap();
                }
                v
            })
            .unwrap(),
        );
    }
    errs
}

pub fn encoders_and_alignment() -> Vec<f64> {
    let mut errs = vec![];
    for s in 0..SEEDS {
        let mut g = rng(1000 + s);

        let mut ptm = PtmEncoder::<f64>::new("p", 12, &mut g).unwrap();
        let x = normal(&[2, 12], &mut g);
        let y = ptm.forward(&x).unwrap();
        let r = normal(y.shape(), &mut g);
        let dx = ptm.backward(&r).unwrap();
        errs.push(input_err(&x, &r, &dx, |x| ptm.forward(x).unwrap()));
        let coords = sample_coords(&mut ptm, 6, &mut g);
        errs.push(
            grad_check_params(&mut ptm, &coords, H, |l, back| {
                l.zero_grad();
                let y = l.forward(&x).unwrap();
                if back {
                    l.backward_params(&r).unwrap();
                }
                contract(&y, &r)
            })
            .unwrap(),
        );

        let mut spec = SpecEncoder::<f64>::new("s", [4, 6, 2], &mut g).unwrap();
        let x = normal(&[2, 4, 6, 2], &mut g);
        let y = spec.forward(&x, Mode::Train).unwrap();
        let r = normal(y.shape(), &mut g);
        let dx = spec.backward(&r).unwrap();
        errs.push(input_err(&x, &r, &dx, |x| spec.forward(x, Mode::Train).unwrap()));
        let coords = sample_coords(&mut spec, 6, &mut g);
        errs.push(
            grad_check_params(&mut spec, &coords, H, |l, back| {
                l.zero_grad();
                let y = l.forward(&x, Mode::Train).unwrap();
                if back {
                    l.backward_params(&r).unwrap();
                }
                contract(&y, &r)
            })
            .unwrap(),
        );

        let mut cm = CrossModal::<f64>::new("x", &mut g);
        let p = normal(&[2, 3, WIDTH], &mut g);
        let q = normal(&[2, 2, WIDTH], &mut g);
        let rp = normal(&[2, WIDTH], &mut g);
        let rq = normal(&[2, WIDTH], &mut g);
        let run = |cm: &mut CrossModal<f64>, p: &Tensor<f64>, q: &Tensor<f64>| {
            let (a, b) = cm.forward(p, q).unwrap();
            contract(&a, &rp) + contract(&b, &rq)
        };
        run(&mut cm, &p, &q);
        let (dp, dq) = cm.backward(&rp, &rq).unwrap();
        errs.push(grad_check(|v| run(&mut cm, &with_data(&p, v), &q), p.data(), dp.data(), H).unwrap());
        errs.push(grad_check(|v| run(&mut cm, &p, &with_data(&q, v)), q.data(), dq.data(), H).unwrap());
        let coords = sample_coords(&mut cm, 8, &mut g);
        errs.push(
            grad_check_params(&mut cm, &coords, H, |l, back| {
                l.zero_grad();
                let v = run(l, &p, &q);
                if back {
                    l.backward(&rp, &rq).unwrap();
                }
                v
            })
            .unwrap(),
        );
    }
    errs
}

pub fn baselines() -> Vec<f64> {
    let mut errs = vec![];
    for s in 0..SEEDS {
        let mut g = rng(1100 + s);
        for (input, shape) in [(BaselineInput::Ptm { dim: 8 }, vec![2, 8]), (BaselineInput::Spec { dims: [4, 4, 2] }, vec![2, 4, 4, 2])] {
            let mut b = Baseline::<f64>::new(input, 3, 0.0, &mut g).unwrap();
            let x = normal(&shape, &mut g);
            let r = normal(&[2, 3], &mut g);
            b.forward(&x, Mode::Train).unwrap();
            let dx = b.backward(&r).unwrap();
            errs.push(input_err(&x, &r, &dx, |x| b.forward(x, Mode::Train).unwrap()));
            let coords = sample_coords(&mut b, 6, &mut g);
            errs.push(
                grad_check_params(&mut b, &coords, H, |l, back| {
                    l.zero_grad();
                    let y = l.forward(&x, Mode::Train).unwrap();
                    if back {
                        l.backward_params(&r).unwrap();
                    }
                    contract(&y, &r)
                })
                .unwrap(),
            );
        }
    }
    errs
}

/// The whole network under the multitask loss, at least 200 parameter
/// coordinates per seed, spread over every parameter tensor.
pub fn full_model_multitask_loss() -> Vec<f64> {
    let cfg = ModelConfig { ptm_dim: 12, spec_dims: [4, 6, 2], d_m: 6, ..Default::default() };
    let mut errs = vec![];
    let mut checked = 0;
    for s in 0..SEEDS {
        let mut g = rng(1200 + s);
        let mut m = MiCuNet::<f64>::new(&cfg, s).unwrap();
        // move the gate off its zero start so its gradient path is exercised
        m.fusion.visit_params(&mut |p| {
            if p.name.starts_with("fusion.gate") {
                p.value.data_mut().iter_mut().for_each(|v| *v += 0.2 * g.sample::<f64, _>(StandardNormal));
            }
        });
        let p = normal(&[3, 12], &mut g);
        let x = normal(&[3, 4, 6, 2], &mut g);
        let labels: [Vec<usize>; 3] = [5, 5, 7].map(|k| (0..3).map(|_| g.random_range(0..k)).collect());
        let lambda = [1.0, 0.7, 1.3];
        let states = m.dropout_states();
        let mut coords = sample_coords(&mut m, 4, &mut g);
        let rest: Vec<ParamCoord> = all_coords(&mut m).into_iter().filter(|c| !coords.contains(c)).collect();
        coords.extend(rest.choose_multiple(&mut g, 200usize.saturating_sub(coords.len())).copied());
        assert!(coords.len() >= 200);
        checked += coords.len();
        errs.push(
            grad_check_params(&mut m, &coords, H_MODEL, |m, back| {
                m.zero_grad();
                m.set_dropout_states(&states).unwrap();
                let out = m.forward(&p, &x, Mode::Train).unwrap();
                let (loss, _, grads) = multitask_loss(&out.logits, [&labels[0], &labels[1], &labels[2]], lambda).unwrap();
                if back {
                    m.backward(&grads).unwrap();
                }
                loss
            })
            .unwrap(),
        );
    }
    assert!(checked >= 200 * SEEDS as usize);
    errs
}


/// Every check with its label.
pub const CHECKS: &[(&str, fn() -> Vec<f64>)] = &[
    ("dense", dense),
    ("conv1d", conv1d),
    ("conv3d", conv3d),
    ("batch norm", batch_norm_train_mode),
    ("relu, tanh, dropout, max pool", activations_pool_and_dropout),
    ("attention", attention),
    ("cross entropy and multitask loss", cross_entropy_and_multitask_loss),
    ("manifold maps", manifold_maps),
    ("gate and fusion", gate_and_fusion_all_variants),
    ("heads", heads),
    ("encoders and alignment", encoders_and_alignment),
    ("baselines", baselines),
    ("full model", full_model_multitask_loss),
];
