mod common;

use fsnet::jets::{tanh_jet, Jet3};
use fsnet::network::{block_forward, init_parameters, loss_gradient, ModelSpec, Network};
use fsnet::orthopoly::BasisKind;
use fsnet::problem::{collocation_points, loss, FlowConfig, Sampling};
use rand::Rng;

fn check_against_differences(jet: Jet3, f: impl Fn(f64) -> f64, x: f64, what: &str) {
    assert_eq!(jet.d0, f(x), "{what}: value at {x}");
    let fd = common::derivatives(&f, x);
    for (k, (&exact, &(approx, bound))) in [jet.d1, jet.d2, jet.d3].iter().zip(&fd).enumerate() {
        let err = (exact - approx).abs() / exact.abs().max(1e-3);
        assert!(
            err <= 1e-5,
            "{what}: d{} at x={x}: jet {exact} vs fd {approx} +- {bound:e} (rel {err:e})",
            k + 1
        );
    }
}

#[test]
fn composite_jets_match_finite_differences() {
    let mut rng = common::rng(21);
    for _ in 0..20 {
        let c: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
        let jet_f = |x: Jet3| {
            let inner = tanh_jet(x.scale(c[0]) + Jet3::constant(c[1]));
            let lin = x.scale(c[2]) + Jet3::constant(c[3]);
            inner * lin + tanh_jet(tanh_jet(x) * inner.scale(c[4])).scale(c[5])
        };
        let plain = |x: f64| jet_f(Jet3::constant(x)).d0;
        for _ in 0..5 {
            let x = rng.random_range(0.0..6.0);
            check_against_differences(jet_f(Jet3::seed(x)), plain, x, "composite");
        }
    }
}

#[test]
fn network_jets_match_finite_differences() {
    let mut rng = common::rng(22);
    for m in 0..10 {
        let spec = common::random_model(&mut rng);
        let net = Network::new(spec).unwrap();
        let params = common::random_params(net.param_count(), 1.0, &mut rng);
        for _ in 0..10 {
            let x = rng.random_range(0.0..6.0);
            let jet = net.forward_jet(&params, x);
            check_against_differences(
                jet,
                |x| net.forward_value(&params, x),
                x,
                &format!("model {m}"),
            );
        }
    }
}

#[test]
fn default_models_match_finite_differences() {
    for spec in [ModelSpec::ldnn(), ModelSpec::lcdnn()] {
        let net = Network::new(spec).unwrap();
        let params = init_parameters(net.spec(), 3);
        for i in 0..100 {
            let x = 6.0 * i as f64 / 99.0;
            check_against_differences(
                net.forward_jet(&params, x),
                |x| net.forward_value(&params, x),
                x,
                &net.spec().name,
            );
        }
    }
}

#[test]
fn blocks_match_recurrence_in_jets() {
    let mut rng = common::rng(23);
    for basis in [BasisKind::Legendre, BasisKind::Chebyshev] {
        for order in 0..=10 {
            for _ in 0..20 {
                let width = rng.random_range(1..=5);
                let input: Vec<Jet3> = (0..width)
                    .map(|_| Jet3::from_array(std::array::from_fn(|_| rng.random_range(-1.0..1.0))))
                    .collect();
                let w = common::random_params(width, 1.0, &mut rng);
                let b = rng.random_range(-0.5..0.5);
                let got = block_forward(basis, order, &w, b, &input);

                let mut enc = Jet3::constant(b);
                for (wi, xi) in w.iter().zip(&input) {
                    enc += xi.scale(*wi);
                }
                let want = common::recurrence_jets(basis, order, tanh_jet(enc));
                assert_eq!(got.len(), order + 1);
                for (k, (g, r)) in got.iter().zip(&want).enumerate() {
                    for (a, e) in g.to_array().iter().zip(r.to_array()) {
                        assert!(
                            (a - e).abs() <= 1e-10,
                            "{basis} order {order} entry {k}: {g:?} vs {r:?}"
                        );
                    }
                }
            }
        }
    }
}

fn gradient_check(spec: ModelSpec, seed: u64, flow: &FlowConfig) -> f64 {
    let net = Network::new(spec).unwrap();
    let mut rng = common::rng(seed);
    let params = common::random_params(net.param_count(), 0.8, &mut rng);
    let points = collocation_points(flow).unwrap();
    let exact = loss_gradient(&net, &params, flow, &points).unwrap();
    let f = |p: &[f64]| loss(&net.bind(p), flow, &points).unwrap();
    assert!((exact.loss - f(&params)).abs() <= 1e-12 * exact.loss.max(1.0));
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let h = 1e-6 * params[i].abs().max(1.0);
        let mut p = params.clone();
        p[i] = params[i] + h;
        let plus = f(&p);
        p[i] = params[i] - h;
        let minus = f(&p);
        let fd = (plus - minus) / (2.0 * h);
        let err = (exact.grad[i] - fd).abs() / fd.abs().max(1e-8);
        let abs_ok = (exact.grad[i] - fd).abs() <= 1e-8;
        if !abs_ok {
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn lcdnn_gradient_matches_finite_differences() {
    let flow = FlowConfig {
        alpha: 0.5,
        beta: 0.0,
        x_max: 6.0,
        n_points: 20,
        sampling: Sampling::Equidistant,
    };
    for seed in 0..5 {
        let worst = gradient_check(ModelSpec::lcdnn(), seed, &flow);
        assert!(worst <= 1e-5, "seed {seed}: max relative error {worst:e}");
    }
}

#[test]
fn random_model_gradients_match_finite_differences() {
    let mut rng = common::rng(24);
    let flow = FlowConfig {
        alpha: 1.0,
        beta: 1.0,
        x_max: 4.0,
        n_points: 15,
        sampling: Sampling::Random { seed: 9 },
    };
    for seed in 0..5 {
        let spec = common::random_model(&mut rng);
        let worst = gradient_check(spec, 100 + seed, &flow);
        assert!(worst <= 1e-5, "seed {seed}: max relative error {worst:e}");
    }
}
