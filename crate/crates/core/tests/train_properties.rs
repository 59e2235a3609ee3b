mod common;

use nmsat::model::{LayerSpec, LinearShape, Model};
use nmsat::nm::{round_half, unpack_nm, DenseMatrix, NmConfig};
use nmsat::train::{
    count_flops, run_training, sgd_momentum_step, MethodKind, OptimizerState, Precision, SgdConfig,
    TrainConfig, Trainer, TrainingMethod, WeightOperand,
};
use nmsat::Error;
use proptest::prelude::*;

use common::column_mask;

fn toy(steps: u64) -> TrainConfig {
    let mut cfg = TrainConfig::load(&common::models_dir().join("toy_mlp.json")).unwrap();
    cfg.steps = steps;
    cfg
}

fn linear(batch: usize, i: usize, o: usize) -> LayerSpec {
    LayerSpec::linear(LinearShape {
        batch,
        tokens: 1,
        in_features: i,
        out_features: o,
    })
}

proptest! {
    #[test]
    fn sgd_step_matches_f64_reference(
        w in prop::collection::vec(-2.0f32..2.0, 1..40),
        gs in prop::collection::vec(-500.0f32..500.0, 40),
        lr in 0.001f32..0.5, mu in 0.0f32..0.99, wd in 0.0f32..0.01, steps in 1usize..4
    ) {
        let n = w.len();
        let cfg = SgdConfig { lr, momentum: mu, weight_decay: wd };
        let mut state = OptimizerState::new(cfg, 1024.0, vec![w.clone()]);
        let mut w64: Vec<f64> = w.iter().map(|&x| x as f64).collect();
        let mut v64 = vec![0f64; n];
        for s in 0..steps {
            let g: Vec<f32> = (0..n).map(|i| gs[(i + s) % gs.len()]).collect();
            sgd_momentum_step(&mut state, std::slice::from_ref(&g)).unwrap();
            for i in 0..n {
                let gi = g[i] as f64 / 1024.0 + wd as f64 * w64[i];
                v64[i] = mu as f64 * v64[i] + gi;
                w64[i] -= lr as f64 * v64[i];
            }
        }
        prop_assert_eq!(state.step(), steps as u64);
        for (got, want) in state.master()[0].iter().zip(&w64) {
            prop_assert!((*got as f64 - want).abs() <= 1e-5 * (1.0 + want.abs()), "{} vs {}", got, want);
        }
    }

    #[test]
    fn flops_ratio_without_exemptions(
        widths in prop::collection::vec(1usize..9, 2..5), batch in 1usize..64,
        m in prop_oneof![Just(4usize), Just(8), Just(16)], n in 1usize..16
    ) {
        let n = n.min(m);
        let layers: Vec<LayerSpec> = widths.windows(2).map(|p| linear(batch, p[0] * 16, p[1] * 16)).collect();
        let model = Model::new(layers).unwrap();
        let table = count_flops(&model, &TrainingMethod::bdwp(NmConfig::new(n, m).unwrap()));
        let want = (2.0 * n as f64 / m as f64 + 1.0) / 3.0;
        prop_assert!((table.ratio - want).abs() < 1e-12);
        prop_assert_eq!(count_flops(&model, &TrainingMethod::dense()).ratio, 1.0);
    }

    #[test]
    fn operands_follow_master_weights(seed in any::<u64>(), scale in 0.1f32..10.0) {
        let model = Model::new(vec![linear(4, 16, 8), linear(4, 8, 4)]).unwrap();
        let nm = NmConfig::new(2, 4).unwrap();
        let sgd = SgdConfig { lr: 0.1, momentum: 0.0, weight_decay: 0.0 };
        let mut t = Trainer::new(model, TrainingMethod::bdwp(nm), Precision::Mixed { loss_scale: 1024.0 }, sgd, seed).unwrap();
        let w = t.master_weight(0).map(|v| v * scale);
        t.set_master_weight(0, &w).unwrap();
        let (ff, bp) = t.layer_operands(0).unwrap();
        let wh = w.map(round_half);
        let (WeightOperand::Packed(ff), WeightOperand::Packed(bp)) = (ff, bp) else {
            panic!("bdwp operands must be packed");
        };
        let keep = column_mask(wh.data(), wh.rows(), wh.cols(), 2, 4);
        let masked: Vec<f32> = wh.data().iter().zip(&keep).map(|(&v, &k)| if k { v } else { 0.0 }).collect();
        prop_assert_eq!(unpack_nm(&ff).data().to_vec(), masked);
        let wt = wh.transpose();
        let keep = column_mask(wt.data(), wt.rows(), wt.cols(), 2, 4);
        let masked: Vec<f32> = wt.data().iter().zip(&keep).map(|(&v, &k)| if k { v } else { 0.0 }).collect();
        prop_assert_eq!(unpack_nm(&bp).data().to_vec(), masked);
    }
}

#[test]
fn training_is_deterministic() {
    let cfg = toy(25);
    let a = run_training(&cfg).unwrap();
    let b = run_training(&cfg).unwrap();
    let bits = |o: &nmsat::train::TrainOutcome| {
        o.records
            .iter()
            .map(|r| r.loss.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.final_loss.to_bits(), b.final_loss.to_bits());
    let c = run_training(&cfg.clone().with_seed(cfg.seed + 1)).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn full_density_pattern_is_dense_training() {
    let cfg = toy(20);
    let dense = run_training(&cfg.clone().with_method(MethodKind::Dense, None)).unwrap();
    for kind in [
        MethodKind::Srste,
        MethodKind::Sdwp,
        MethodKind::Sdgp,
        MethodKind::Bdwp,
    ] {
        let run = run_training(
            &cfg.clone()
                .with_method(kind, Some(NmConfig::new(8, 8).unwrap())),
        )
        .unwrap();
        for (x, y) in dense.records.iter().zip(&run.records) {
            assert_eq!(x.loss.to_bits(), y.loss.to_bits(), "{kind}");
        }
    }
}

#[test]
fn every_method_reduces_loss() {
    let cfg = toy(150);
    for kind in MethodKind::ALL {
        let run = run_training(
            &cfg.clone()
                .with_method(kind, Some(NmConfig::new(2, 8).unwrap())),
        );
        let run = match (kind, run) {
            (_, Ok(run)) => run,
            // Gradient pruning at 2:8 is unstable at this learning rate.
            (MethodKind::Sdgp, Err(Error::Divergence { .. })) => continue,
            (_, Err(e)) => panic!("{kind}: {e}"),
        };
        let first = run.records[0].loss;
        assert!(
            run.final_train_loss < first,
            "{kind}: {first} -> {}",
            run.final_train_loss
        );
    }
}

#[test]
fn divergence_reports_the_step() {
    let mut cfg = toy(50);
    cfg.lr = 1e30;
    cfg.momentum = 0.0;
    match run_training(&cfg) {
        Err(Error::Divergence { step, .. }) => assert!(step < 50),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.final_loss)),
    }
}

#[test]
fn invalid_settings_are_rejected() {
    let model = Model::new(vec![linear(2, 4, 2)]).unwrap();
    let bad = SgdConfig {
        lr: -1.0,
        momentum: 0.0,
        weight_decay: 0.0,
    };
    assert!(Trainer::new(
        model.clone(),
        TrainingMethod::dense(),
        Precision::Single,
        bad,
        0
    )
    .is_err());
    let good = SgdConfig {
        lr: 0.1,
        momentum: 0.5,
        weight_decay: 0.0,
    };
    assert!(Trainer::new(
        model.clone(),
        TrainingMethod::dense(),
        Precision::Mixed { loss_scale: 0.0 },
        good,
        0
    )
    .is_err());
    let mut t = Trainer::new(model, TrainingMethod::dense(), Precision::Single, good, 0).unwrap();
    assert!(t.set_master_weight(0, &DenseMatrix::zeros(2, 4)).is_err());
    let mut cfg = toy(1);
    cfg.nm = None;
    assert!(run_training(&cfg).is_err());
}
