mod common;

use common::{config, quadratic};
use palsgd::algorithms::{run_training, Variant};
use palsgd::experiments::{emit_record, parse_record, LossKind, MetricsRecord};
use palsgd::optim::{
    inner_step, outer_step, InnerConfig, InnerOptimizer, OuterConfig, OuterOptimizer,
};
use palsgd::vecmath::{axpy, mean_of, mix};
use palsgd::workloads::{Sample, WorkloadSpec};
use palsgd::ParamVector;
use proptest::prelude::*;

fn vec_of(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, dim)
}

fn pv(v: Vec<f64>) -> ParamVector {
    ParamVector::new(v).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mix_equals_gradient_form((x, anchor) in (1usize..20).prop_flat_map(|d| (vec_of(d), vec_of(d))), beta in 0.0f64..1.0) {
        let x = pv(x);
        let anchor = pv(anchor);
        let ema = mix(&x, &anchor, beta).unwrap();
        let grad_form = axpy(-beta, &x.sub(&anchor).unwrap(), &x).unwrap();
        for (a, b) in ema.as_slice().iter().zip(grad_form.as_slice()) {
            prop_assert!(close(*a, *b, 1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn contraction_factor((x, anchor) in (1usize..20).prop_flat_map(|d| (vec_of(d), vec_of(d))), beta in 0.0f64..1.0) {
        let x = pv(x);
        let anchor = pv(anchor);
        let mut y = x.clone();
        y.contract_toward(&anchor, beta).unwrap();
        let before = x.distance_sq(&anchor).unwrap().sqrt();
        let after = y.distance_sq(&anchor).unwrap().sqrt();
        prop_assert!(close(after, (1.0 - beta).abs() * before, 1e-12));
    }

    #[test]
    fn mean_is_permutation_invariant(vs in (1usize..6, 1usize..9).prop_flat_map(|(d, k)| prop::collection::vec(vec_of(d), k)), seed in any::<u64>()) {
        let vectors: Vec<ParamVector> = vs.into_iter().map(pv).collect();
        let mean = mean_of(&vectors).unwrap();
        let mut shuffled = vectors.clone();
        palsgd::RngStream::new(seed, 0, palsgd::Purpose::Probe).shuffle(&mut shuffled);
        let other = mean_of(&shuffled).unwrap();
        for (a, b) in mean.as_slice().iter().zip(other.as_slice()) {
            prop_assert!(close(*a, *b, 1e-12));
        }
        prop_assert_eq!(mean_of(&vectors).unwrap(), mean);
    }

    #[test]
    fn sgd_step_is_linear((x, g) in (1usize..10).prop_flat_map(|d| (vec_of(d), vec_of(d))), a in -10.0f64..10.0, lr in 1e-4f64..1.0) {
        let state = InnerOptimizer::new(InnerConfig::sgd(), x.len());
        let (y, _) = inner_step(&state, &pv(x.clone()), &pv(g.clone()), lr).unwrap();
        let ax = pv(x.iter().map(|v| a * v).collect());
        let ag = pv(g.iter().map(|v| a * v).collect());
        let (ay, _) = inner_step(&state, &ax, &ag, lr).unwrap();
        for (l, r) in ay.as_slice().iter().zip(y.as_slice()) {
            prop_assert!((l - a * r).abs() <= 1e-12 * (a.abs() * 200.0).max(1.0));
        }
    }

    #[test]
    fn adamw_matches_independent_recomputation(
        (x, gs) in (1usize..6).prop_flat_map(|d| (vec_of(d), prop::collection::vec(vec_of(d), 1..6))),
        lr in 1e-4f64..0.1,
        wd in 0.0f64..0.1,
    ) {
        let mut cfg = InnerConfig::adamw();
        cfg.weight_decay = wd;
        let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.eps);
        let mut opt = InnerOptimizer::new(cfg, x.len());
        let mut got = pv(x.clone());
        let mut want = x.clone();
        let mut m = vec![0.0; x.len()];
        let mut v = vec![0.0; x.len()];
        for (n, g) in gs.iter().enumerate() {
            opt.step(&mut got, &pv(g.clone()), lr).unwrap();
            let n = (n + 1) as i32;
            for i in 0..x.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / (1.0 - b1.powi(n));
                let v_hat = v[i] / (1.0 - b2.powi(n));
                want[i] -= lr * wd * want[i];
                want[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        for (a, b) in got.as_slice().iter().zip(&want) {
            prop_assert!(close(*a, *b, 1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn nesterov_without_momentum_is_sgd((x, deltas) in (1usize..6).prop_flat_map(|d| (vec_of(d), prop::collection::vec(vec_of(d), 1..5))), lr in 0.01f64..2.0) {
        let mut nesterov = OuterOptimizer::new(OuterConfig::nesterov(lr, 0.0), x.len());
        let mut sgd_cfg = OuterConfig::averaging();
        sgd_cfg.lr = lr;
        let mut sgd = OuterOptimizer::new(sgd_cfg, x.len());
        let mut a = pv(x.clone());
        let mut b = pv(x);
        for d in deltas {
            let d = pv(d);
            let (na, ns) = outer_step(&nesterov, &a, &d).unwrap();
            nesterov = ns;
            a = na;
            sgd.step(&mut b, &d).unwrap();
        }
        prop_assert_eq!(a, b);
    }

    #[test]
    fn metrics_round_trip(
        t in any::<u64>(),
        sim in 0.0f64..1e9,
        loss in prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), Just(f64::INFINITY)],
        eval in prop::option::of(-1e6f64..1e6),
        acc in prop::option::of(0.0f64..1.0),
        xi in 0.0f64..1e12,
        dist in 0.0f64..1e12,
        sync in any::<u64>(),
        comm in 0.0f64..1e6,
        suboptimality in any::<bool>(),
    ) {
        let r = MetricsRecord {
            schema_version: palsgd::experiments::metrics::SCHEMA_VERSION,
            t,
            sim_time_s: sim,
            loss_kind: if suboptimality { LossKind::Suboptimality } else { LossKind::TrainLoss },
            loss,
            eval_loss: eval,
            eval_accuracy: acc,
            xi,
            mean_model_distance: dist,
            sync_count: sync,
            comm_seconds: comm,
        };
        prop_assert_eq!(parse_record(&emit_record(&r).unwrap()).unwrap(), r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn palsgd_without_mixing_is_local_sgd(k in 1usize..6, h in 1u64..12, steps in 1u64..80, seed in any::<u64>()) {
        let workload = quadratic(5, 1.0, 3.0, 1.0, seed);
        let local = run_training(&workload, &config(Variant::LocalSgd, 0.05, 0.0, 1.0, h, steps, k, seed)).unwrap();
        let mut cfg = config(Variant::Palsgd, 0.05, 0.0, 1.0, h, steps, k, seed);
        cfg.inner = InnerConfig::sgd();
        cfg.outer = OuterConfig::averaging();
        let pal = run_training(&workload, &cfg).unwrap();
        prop_assert_eq!(&local.final_global, &pal.final_global);
        prop_assert_eq!(&local.diagnostics, &pal.diagnostics);
        prop_assert_eq!(&local.events, &pal.events);
    }

    #[test]
    fn local_sgd_every_step_is_ddp(k in 1usize..6, steps in 1u64..60, seed in any::<u64>()) {
        let workload = quadratic(4, 1.0, 2.0, 1.0, seed);
        let local = run_training(&workload, &config(Variant::LocalSgd, 0.05, 0.0, 1.0, 1, steps, k, seed)).unwrap();
        let ddp = run_training(&workload, &config(Variant::Ddp, 0.05, 0.0, 1.0, 1, steps, k, seed)).unwrap();
        for (a, b) in local.diagnostics.records.iter().zip(&ddp.diagnostics.records) {
            prop_assert!(close(a.loss, b.loss, 1e-12));
        }
        for (a, b) in local.final_global.as_slice().iter().zip(ddp.final_global.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn quadratic_gradient_consistency_and_witnesses() {
    let workload = quadratic(12, 0.5, 6.0, 2.0, 3);
    let q = workload.quadratic().unwrap();
    let mut rng = palsgd::RngStream::new(1, 0, palsgd::Purpose::Probe);
    let draw = |rng: &mut palsgd::RngStream| {
        let mut v = vec![0.0; 12];
        rng.fill_gaussian(&mut v, 2.0);
        pv(v)
    };
    for _ in 0..100 {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        // Zero shift is the noise mean, and the gradient is affine in the shift.
        assert_eq!(
            q.stochastic_gradient(&x, &[0.0; 12]).unwrap(),
            q.full_gradient(&x).unwrap()
        );
        let s = draw(&mut rng);
        let neg: Vec<f64> = s.as_slice().iter().map(|v| -v).collect();
        let g_plus = q.stochastic_gradient(&x, s.as_slice()).unwrap();
        let g_minus = q.stochastic_gradient(&x, &neg).unwrap();
        let full = q.full_gradient(&x).unwrap();
        for ((p, m), f) in g_plus
            .as_slice()
            .iter()
            .zip(g_minus.as_slice())
            .zip(full.as_slice())
        {
            assert!(close((p + m) / 2.0, *f, 1e-12));
        }

        // F(y) = F(x) + ∇F(x)ᵀ(y−x) + ½(y−x)ᵀA(y−x) ≥ … + (μ/2)‖y−x‖².
        let fx = q.full_objective(&x).unwrap();
        let fy = q.full_objective(&y).unwrap();
        let d = y.sub(&x).unwrap();
        let linear = full.dot(&d).unwrap();
        let curvature: f64 = 0.5
            * q.spec()
                .hessian_diag
                .iter()
                .zip(d.as_slice())
                .map(|(a, v)| a * v * v)
                .sum::<f64>();
        assert!(close(fy, fx + linear + curvature, 1e-10));
        assert!(fy >= fx + linear + 0.5 * q.mu() * d.dot(&d).unwrap() - 1e-10 * fy.abs().max(1.0));

        let gx = q.stochastic_gradient(&x, s.as_slice()).unwrap();
        let gy = q.stochastic_gradient(&y, s.as_slice()).unwrap();
        let lhs = gx.distance_sq(&gy).unwrap().sqrt();
        assert!(lhs <= q.l() * d.dot(&d).unwrap().sqrt() * (1.0 + 1e-12));
    }
}

#[test]
fn data_workloads_gradient_consistency() {
    let specs = [
        WorkloadSpec::Logistic {
            samples: 60,
            dim: 5,
            l2_reg: 0.01,
        },
        WorkloadSpec::Mlp {
            hidden: vec![8, 6],
            activation: palsgd::workloads::Activation::Tanh,
            data: palsgd::workloads::ClassificationSpec {
                classes: 3,
                dim: 4,
                samples_per_class: 20,
                eval_samples_per_class: 5,
                center_scale: 1.0,
                cluster_std: 1.0,
            },
        },
    ];
    for spec in specs {
        let w = spec.build(2).unwrap();
        let n = w.dataset_len().unwrap();
        let mut x = w.initial_point(2);
        for (i, v) in x.as_mut_slice().iter_mut().enumerate() {
            *v += 0.1 * ((i as f64) * 0.7).sin();
        }
        let mut sum = vec![0.0; w.dim()];
        for i in 0..n {
            let g = w.stochastic_gradient(&x, &Sample::Batch(vec![i])).unwrap();
            for (s, gi) in sum.iter_mut().zip(g.as_slice()) {
                *s += gi;
            }
        }
        let full = w.full_gradient(&x).unwrap();
        for (s, f) in sum.iter().zip(full.as_slice()) {
            assert!(close(s / n as f64, *f, 1e-10), "{} vs {f}", s / n as f64);
        }
    }
}
