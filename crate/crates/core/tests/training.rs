use csi2image::nn::{bce_loss, mse_loss, DiscriminatorConfig, GeneratorConfig, Mode, Tensor};
use csi2image::scene::{gen_split, Dataset, Scenario, SimConfig, Split, IMAGE_SIDE};
use csi2image::training::{
    generate_images, generate_with, run_training, train_gan_only, train_generator_only, train_hybrid, TrainConfig,
    TrainMode, Trainer, TrainingData, REAL,
};

fn data(scenario: Scenario, n: usize) -> Dataset {
    gen_split(scenario, n, 11, Split::Train, &SimConfig::default(), 1).unwrap()
}

fn tiny(mode: TrainMode, iterations: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        mode,
        iterations,
        batch_size: 4,
        seed,
        generator: GeneratorConfig::width_divided(64),
        discriminator: DiscriminatorConfig::width_divided(8),
        ..Default::default()
    }
}

#[test]
fn one_regression_step_descends() {
    let d = TrainingData::from_dataset(&data(Scenario::Exp1, 16)).unwrap();
    let (csi, real) = d.batch(&[0, 3, 5, 7, 9, 11, 13, 15]);
    let mut wins = 0;
    for seed in 0..20 {
        let mut t = Trainer::new(tiny(TrainMode::GeneratorOnly, 1, seed)).unwrap();
        let before = mse_loss(&t.generator.forward(&csi, Mode::Frozen).unwrap(), &real).unwrap().0;
        t.regression_step(&csi, &real).unwrap();
        let after = mse_loss(&t.generator.forward(&csi, Mode::Frozen).unwrap(), &real).unwrap().0;
        wins += (after < before) as usize;
    }
    assert!(wins > 10, "{wins}/20 seeds descended");
}

#[test]
fn one_gan_iteration_moves_discriminator_the_right_way() {
    let d = TrainingData::from_dataset(&data(Scenario::Exp1, 16)).unwrap();
    let (csi, real) = d.batch(&[1, 2, 4, 6, 8, 10, 12, 14]);
    let mean = |t: &Tensor<f32>| t.data().iter().map(|&v| v as f64).sum::<f64>() / t.len() as f64;
    let (mut up, mut down) = (0, 0);
    for seed in 0..20 {
        let mut cfg = tiny(TrainMode::GanOnly, 1, seed);
        cfg.discriminator.dropout = 0.0;
        let mut t = Trainer::new(cfg).unwrap();
        let fake = t.generator.forward(&csi, Mode::Infer).unwrap();
        let probe = |t: &mut Trainer, x: &Tensor<f32>| mean(&t.discriminator.as_mut().unwrap().forward(x, Mode::Frozen).unwrap());
        let (r0, f0) = (probe(&mut t, &real), probe(&mut t, &fake));
        t.discriminator_step(&real, 1.0).unwrap();
        t.discriminator_step(&fake, 0.0).unwrap();
        let (r1, f1) = (probe(&mut t, &real), probe(&mut t, &fake));
        up += (r1 > r0) as usize;
        down += (f1 < f0) as usize;
    }
    assert!(up > 10 && down > 10, "real up {up}/20, fake down {down}/20");
}

#[test]
fn generality_step_pushes_toward_real() {
    let d = TrainingData::from_dataset(&data(Scenario::Exp1, 16)).unwrap();
    let (csi, _) = d.batch(&[0, 1, 2, 3, 4, 5, 6, 7]);
    let mut wins = 0;
    for seed in 0..20 {
        let mut cfg = tiny(TrainMode::Hybrid, 1, seed);
        cfg.discriminator.dropout = 0.0;
        let mut t = Trainer::new(cfg).unwrap();
        let loss = |t: &mut Trainer| {
            let y = t.generator.forward(&csi, Mode::Frozen).unwrap();
            let p = t.discriminator.as_mut().unwrap().forward(&y, Mode::Frozen).unwrap();
            bce_loss(&p, &Tensor::full(&[8, 1], REAL)).unwrap().0
        };
        let before = loss(&mut t);
        let d_digest = t.discriminator.as_ref().unwrap().net.digest();
        t.generality_step(&csi).unwrap();
        assert_eq!(t.discriminator.as_ref().unwrap().net.digest(), d_digest);
        wins += (loss(&mut t) < before) as usize;
    }
    assert!(wins > 10, "{wins}/20");
}

#[test]
fn runs_are_bitwise_reproducible() {
    let d = data(Scenario::Exp2, 20);
    for mode in [TrainMode::GeneratorOnly, TrainMode::GanOnly, TrainMode::Hybrid] {
        let cfg = TrainConfig { k: 2, ..tiny(mode, 6, 5) };
        let a = run_training(&d, &cfg, |_| Ok(()), |_, _| Ok(())).unwrap();
        let b = run_training(&d, &cfg, |_| Ok(()), |_, _| Ok(())).unwrap();
        assert_eq!(a.checkpoint.encode().unwrap(), b.checkpoint.encode().unwrap(), "{mode}");
        let strip = |r: &[csi2image::training::TrainLogRecord]| r.iter().map(|x| x.without_timing().to_line()).collect::<Vec<_>>();
        assert_eq!(strip(&a.records), strip(&b.records));
        let c = run_training(&d, &TrainConfig { seed: 6, ..cfg.clone() }, |_| Ok(()), |_, _| Ok(())).unwrap();
        assert_ne!(a.checkpoint.encode().unwrap(), c.checkpoint.encode().unwrap());
    }
}

#[test]
fn generality_step_counts() {
    let d = data(Scenario::Exp1, 8);
    for (n, k, want) in [(16, 8, 2), (5, 1, 5), (4, 9, 0), (17, 8, 2)] {
        let out = train_hybrid(&d, &TrainConfig { k, ..tiny(TrainMode::Hybrid, n, 1) }).unwrap();
        assert_eq!(out.generality_steps, want, "N={n} K={k}");
        assert_eq!(out.records.iter().filter(|r| r.generality_bce.is_some()).count(), want);
        assert!(out.records.iter().all(|r| r.generator_mse.is_some() && r.discriminator_bce.is_some()));
    }
}

#[test]
fn mode_specific_bookkeeping() {
    let d = data(Scenario::Exp1, 8);
    let g = train_generator_only(&d, &tiny(TrainMode::GeneratorOnly, 3, 1)).unwrap();
    assert!(g.checkpoint.names().all(|n| n.starts_with("gen.")));
    assert!(g.checkpoint.optimizer.as_ref().unwrap().iter().all(|(n, _)| n.starts_with("gen_opt")));
    assert!(g.records.iter().all(|r| r.discriminator_bce.is_none() && r.generality_bce.is_none()));

    let a = train_gan_only(&d, &tiny(TrainMode::GanOnly, 3, 1)).unwrap();
    assert!(a.records.iter().all(|r| r.generator_mse.is_none() && r.generality_bce.is_some()));
    assert!(a.checkpoint.names().any(|n| n.starts_with("disc.")));

    assert!(train_hybrid(&d, &tiny(TrainMode::GanOnly, 1, 1)).is_err());
}

#[test]
fn frozen_networks_stay_frozen() {
    let d = data(Scenario::Exp2, 10);
    for mode in [TrainMode::GeneratorOnly, TrainMode::GanOnly, TrainMode::Hybrid] {
        let cfg = TrainConfig {
            k: 2,
            check_freeze: true,
            ..tiny(mode, 4, 2)
        };
        run_training(&d, &cfg, |_| Ok(()), |_, _| Ok(())).unwrap();
    }
}

#[test]
fn checkpoint_cadence() {
    let d = data(Scenario::Exp1, 8);
    let mut at = Vec::new();
    let cfg = TrainConfig {
        checkpoint_every: 3,
        ..tiny(TrainMode::GeneratorOnly, 7, 1)
    };
    run_training(&d, &cfg, |_| Ok(()), |i, _| {
        at.push(i);
        Ok(())
    })
    .unwrap();
    assert_eq!(at, vec![3, 6, 7]);
}

#[test]
fn restore_reproduces_state() {
    let d = data(Scenario::Exp1, 8);
    let cfg = tiny(TrainMode::Hybrid, 3, 4);
    let out = run_training(&d, &cfg, |_| Ok(()), |_, _| Ok(())).unwrap();
    let bytes = out.checkpoint.encode().unwrap();
    let mut fresh = Trainer::new(cfg).unwrap();
    fresh.restore(&csi2image::nn::Checkpoint::decode(&bytes).unwrap()).unwrap();
    assert_eq!(fresh.checkpoint().encode().unwrap(), bytes);
}

#[test]
fn generated_images_are_valid_and_batch_independent() {
    let d = data(Scenario::Exp2, 40);
    let out = run_training(&d, &tiny(TrainMode::GeneratorOnly, 3, 9), |_| Ok(()), |_, _| Ok(())).unwrap();
    let feats: Vec<_> = d.samples.iter().map(|s| s.features.clone()).collect();
    let all = generate_images(&out.checkpoint, &feats).unwrap();
    assert_eq!(all.len(), 40);
    assert!(all.iter().all(|i| i.pixels().len() == IMAGE_SIDE * IMAGE_SIDE * 3));
    assert_eq!(generate_images(&out.checkpoint, &feats).unwrap(), all);
    let mut g = csi2image::training::load_generator(&out.checkpoint).unwrap();
    for (i, f) in feats.iter().enumerate().step_by(7) {
        assert_eq!(generate_with(&mut g, std::slice::from_ref(f)).unwrap()[0], all[i]);
    }
    let mut broken = out.checkpoint.clone();
    broken.tensors.retain(|(n, _)| n != "gen.bn2.running_var");
    match generate_images(&broken, &feats) {
        Err(csi2image::Error::Checkpoint { tensor, .. }) => assert_eq!(tensor, "gen.bn2.running_var"),
        other => panic!("{:?}", other.map(|v| v.len())),
    }
}

#[test]
fn feature_width_mismatch_is_rejected() {
    let d = data(Scenario::Exp1, 4);
    let mut cfg = tiny(TrainMode::GeneratorOnly, 1, 1);
    cfg.generator.input_dim = 100;
    assert!(matches!(
        run_training(&d, &cfg, |_| Ok(()), |_, _| Ok(())),
        Err(csi2image::Error::InvalidArgument(_))
    ));
    assert!(run_training(&Dataset::default(), &tiny(TrainMode::GeneratorOnly, 1, 1), |_| Ok(()), |_, _| Ok(())).is_err());
}

/// Desk-scale pilot: regression alone reduces the training loss tenfold.
#[test]
fn generator_only_pilot_reduces_mse() {
    let d = gen_split(Scenario::Exp1, 180, 1, Split::Train, &SimConfig::default(), 1).unwrap();
    let cfg = TrainConfig {
        mode: TrainMode::GeneratorOnly,
        iterations: 2_000,
        generator: GeneratorConfig::width_divided(16),
        ..Default::default()
    };
    let out = run_training(&d, &cfg, |_| Ok(()), |_, _| Ok(())).unwrap();
    let first = out.records[0].generator_mse.unwrap();
    let last: f64 = out.records[out.records.len() - 50..].iter().map(|r| r.generator_mse.unwrap()).sum::<f64>() / 50.0;
    assert!(last < 0.1 * first, "first {first:.4}, last-50 mean {last:.4}");
}
