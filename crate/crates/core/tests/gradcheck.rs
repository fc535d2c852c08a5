mod common;

use common::*;
use procnutri::nn::{FusionModel, HeadConfig};
use procnutri::rng;

#[test]
fn full_gradient_check_eval_and_train_mode() {
    for variant in VARIANTS {
        for mode in POOL_MODES {
            for n in [1, 5] {
                for seed in 0..3u64 {
                    let model = FusionModel::init(variant, small_config(16, mode), seed);
                    let mut r = rng::seeded(1000 + seed);
                    let z_d = random_vec(&mut r, 16);
                    let bag = random_bag(&mut r, n, 16);
                    let t = random_vec(&mut r, 4);
                    let target = [t[0] * 2.0, t[1] * 2.0, t[2] * 2.0, t[3] * 2.0];
                    for dropout in [None, Some(77 + seed)] {
                        let res = gradient_check(&model, &z_d, Some(&bag), &target, dropout, 1e-4, None);
                        assert!(
                            res.worst_rel <= 1e-4,
                            "{variant}/{mode:?} n={n} seed={seed} dropout={dropout:?}: rel err {} at {:?}",
                            res.worst_rel,
                            res.worst_at
                        );
                        assert_eq!(res.checked, model.params().num_params());
                    }
                }
            }
        }
    }
}

#[test]
fn sampled_gradient_check_at_default_width() {
    for variant in VARIANTS {
        let model = FusionModel::init(variant, HeadConfig::new(16), 5);
        let mut r = rng::seeded(55);
        let z_d = random_vec(&mut r, 16);
        let bag = random_bag(&mut r, 5, 16);
        let res = gradient_check(&model, &z_d, Some(&bag), &[1.5, -0.5, 2.0, -3.0], None, 1e-4, Some(40));
        assert!(res.worst_rel <= 1e-4, "{variant}: {} at {:?}", res.worst_rel, res.worst_at);
    }
}

#[test]
fn gate_gradient_vanishes_for_symmetric_inputs() {
    let mut model = FusionModel::init(procnutri::nn::Variant::Gated, small_config(8, procnutri::nn::PoolMode::Mean), 3);
    let p = model.params_mut();
    p.proj_proc = p.proj_dish.clone();
    let mut r = rng::seeded(8);
    let z = random_vec(&mut r, 8);
    let bag = vec![z.clone()];
    let (y, cache) = model.forward(&z, Some(&bag), None).unwrap();
    let (_, g) = procnutri::nn::smooth_l1(&y, &[3.0, -1.0, 0.5, 2.0], 1.0);
    let grads = model.backward(&cache, &g).unwrap();
    assert_eq!(grads.gate, Some(0.0));
}
