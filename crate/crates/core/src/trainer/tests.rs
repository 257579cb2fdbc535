use std::collections::HashSet;

use super::*;
use crate::lfcore::{rgb_to_y, ColorSpace};
use crate::lfdfnet::Variant;
use crate::synthlf::{render_scene, SceneSpec};

fn tiny_net() -> NetworkConfig {
    NetworkConfig {
        angular: 3,
        channels: 4,
        adams: 1,
        imdbs: 1,
        alpha: 2,
        fem_aspp_blocks: 1,
        fem_res_blocks: 0,
        ofb_aspp_blocks: 1,
        imdb_stages: 2,
        ..Default::default()
    }
}

fn tiny_train() -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        lr0: 1e-3,
        total_epochs: 2,
        patch_size: 4,
        stride: 8,
        seed: 7,
        ..Default::default()
    }
}

fn patches() -> Vec<LightField> {
    let scenes: Vec<Scene> = (0..2)
        .map(|i| render_scene(&SceneSpec::random(i, 3, [16, 16]), 1).unwrap())
        .collect();
    prepare_patches(&scenes, 3, 8, 8).unwrap()
}

#[test]
fn learning_rate_schedule() {
    let c = TrainConfig::default();
    assert_eq!(c.lr_at(0).unwrap(), 2e-4);
    assert_eq!(c.lr_at(14).unwrap(), 2e-4);
    assert_eq!(c.lr_at(15).unwrap(), 1e-4);
    assert_eq!(c.lr_at(45).unwrap(), 2.5e-5);
    assert_eq!(c.lr_at(49).unwrap(), 2.5e-5);
    assert!(c.lr_at(50).is_err());
}

#[test]
fn default_patches_match_the_low_resolution_size() {
    let c = TrainConfig::default();
    assert_eq!(c.patch_size, 32);
    assert_eq!(c.hr_patch_size(2), 64);
    assert_eq!(c.hr_patch_size(4), 128);
}

#[test]
fn invalid_train_configs_are_rejected() {
    for f in [
        |c: &mut TrainConfig| c.batch_size = 0,
        |c: &mut TrainConfig| c.lr0 = 0.0,
        |c: &mut TrainConfig| c.decay_factor = 1.5,
        |c: &mut TrainConfig| c.decay_every = 0,
    ] {
        let mut c = TrainConfig::default();
        f(&mut c);
        assert!(c.validate(2).is_err());
    }
    let err = serde_json::from_str::<TrainConfig>(r#"{"batch": 3}"#);
    assert!(err.is_err());
}

#[test]
fn adam_first_step_moves_by_lr_against_the_gradient() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::from_vec(&[2], vec![1.0, -1.0]));
    let mut adam = Adam::new(&store);
    let target = Tensor::from_vec(&[2], vec![0.0, 0.0]);
    let grads = {
        let mut g = Graph::new(&store);
        let w = g.param(id);
        let l = g.l1_loss(w, target);
        g.backward(l)
    };
    adam.step(&mut store, &grads, 0.1);
    let w = store.get(id).data();
    assert!((w[0] - 0.9).abs() < 1e-6);
    assert!((w[1] + 0.9).abs() < 1e-6);
}

#[test]
fn adam_minimises_a_scalar_l1() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::from_vec(&[1], vec![3.0]));
    let mut adam = Adam::new(&store);
    for _ in 0..400 {
        let grads = {
            let mut g = Graph::new(&store);
            let w = g.param(id);
            let l = g.l1_loss(w, Tensor::from_vec(&[1], vec![-0.5]));
            g.backward(l)
        };
        adam.step(&mut store, &grads, 0.02);
    }
    assert!((store.get(id).data()[0] + 0.5).abs() < 0.05);
}

#[test]
fn l1_loss_values() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = Tensor::from_vec(&[1, 1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]);
    let v = g.input(x.clone());
    let l = g.l1_loss(v, x.clone());
    assert_eq!(g.value(l).data()[0], 0.0);
    let l = g.l1_loss(v, x.map(|a| a + 0.25));
    assert!((g.value(l).data()[0] - 0.25).abs() < 1e-12);
}

#[test]
fn init_is_seeded_and_zeroes_offset_heads() {
    let mk = |seed| {
        let mut m = LfDfNet::new(tiny_net()).unwrap();
        init_weights(&mut m, seed);
        m
    };
    let (a, b, c) = (mk(1), mk(1), mk(2));
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
    for h in a.offset_heads() {
        assert!(a.params().get(h.weight).data().iter().all(|&x| x == 0.0));
        assert!(a.params().get(h.bias).data().iter().all(|&x| x == 0.0));
    }
    for conv in a.convs() {
        assert!(a.params().get(conv.bias).data().iter().all(|&x| x == 0.0));
    }
    let fem = a.convs()[0];
    assert!(a.params().get(fem.weight).data().iter().any(|&x| x != 0.0));
}

#[test]
fn kaiming_std_matches_fan_in() {
    let cfg = NetworkConfig {
        channels: 32,
        ..tiny_net()
    };
    let slope: f64 = cfg.leaky_slope;
    for (scheme, gain2) in [
        (InitScheme::KaimingUniform, 1.0 / 3.0),
        (InitScheme::KaimingNormal, 2.0 / (1.0 + slope * slope)),
    ] {
        let mut m = LfDfNet::new(cfg.clone()).unwrap();
        init_weights_with(&mut m, 3, scheme);
        let conv = m
            .convs()
            .into_iter()
            .max_by_key(|c| m.params().get(c.weight).len())
            .unwrap();
        let w = m.params().get(conv.weight).data();
        let var = w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64;
        let fan_in = (conv.in_channels * conv.kernel * conv.kernel) as f64;
        let expected = gain2 / fan_in;
        assert!(
            (var / expected - 1.0).abs() < 0.1,
            "{scheme:?}: var {var} vs {expected}"
        );
        if scheme == InitScheme::KaimingUniform {
            let bound = 1.0 / fan_in.sqrt();
            assert!(w.iter().all(|x| x.abs() <= bound));
        }
    }
}

#[test]
fn sampler_covers_all_symmetries_and_permutes() {
    let t = Trainer::new(tiny_net(), tiny_train()).unwrap();
    let mut seen = HashSet::new();
    for epoch in 0..4 {
        let (order, syms) = t.epoch_plan(epoch, 64);
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(sorted, (0..64).collect::<Vec<_>>());
        seen.extend(syms.iter().map(|s| s.index()));
    }
    assert_eq!(seen.len(), 8);
    let (a, _) = t.epoch_plan(0, 64);
    let (b, _) = t.epoch_plan(1, 64);
    assert_ne!(a, b);
    assert_eq!(a, t.epoch_plan(0, 64).0);

    let mut off = tiny_train();
    off.augment = false;
    let t = Trainer::new(tiny_net(), off).unwrap();
    assert!(t
        .epoch_plan(0, 16)
        .1
        .iter()
        .all(|s| *s == Symmetry::identity()));
}

#[test]
fn batches_pair_degraded_inputs_with_targets() {
    let p = patches();
    let refs: Vec<&LightField> = p.iter().take(2).collect();
    let syms = [Symmetry::identity(), Symmetry::all()[3]];
    let (lr, hr) = make_batch(&refs, &syms, 2).unwrap();
    assert_eq!(lr.shape(), &[18, 1, 4, 4]);
    assert_eq!(hr.shape(), &[18, 1, 8, 8]);
    let expect = lf_to_tensor(&degrade(&syms[1].apply(refs[1]).unwrap(), 2).unwrap()).unwrap();
    assert_eq!(&lr.data()[9 * 16..], expect.data());
}

#[test]
fn checkpoint_roundtrip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(tiny_net(), tiny_train()).unwrap();
    t.run_epoch(&patches(), None).unwrap();
    let ck = t.checkpoint();
    let path = ck.save(dir.path()).unwrap();
    assert_eq!(path, checkpoint_paths(dir.path(), 1).1);
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    let bits = |c: &Checkpoint| -> Vec<u64> {
        c.params
            .ids()
            .flat_map(|id| {
                c.params
                    .get(id)
                    .data()
                    .iter()
                    .map(|x| x.to_bits())
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    assert_eq!(bits(&back), bits(&ck));
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let t = Trainer::new(tiny_net(), tiny_train()).unwrap();
    let path = t.checkpoint().save(dir.path()).unwrap();
    let bin = path.with_extension("bin");
    let mut bytes = std::fs::read(&bin).unwrap();
    let n = bytes.len();
    bytes[n - 1] ^= 1;
    std::fs::write(&bin, bytes).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
}

#[test]
fn checkpoint_for_another_layout_is_rejected() {
    let t = Trainer::new(tiny_net(), tiny_train()).unwrap();
    let mut ck = t.checkpoint();
    ck.meta.network.variant = Variant::NoDcn;
    assert!(Trainer::from_checkpoint(ck, None).is_err());
}

#[test]
fn resume_matches_uninterrupted_training() {
    let p = patches();
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        total_epochs: 3,
        ..tiny_train()
    };
    let mut straight = Trainer::new(tiny_net(), cfg.clone()).unwrap();
    straight.fit(&p, None).unwrap();

    let mut first = Trainer::new(
        tiny_net(),
        TrainConfig {
            total_epochs: 1,
            ..cfg.clone()
        },
    )
    .unwrap();
    first.fit(&p, Some(dir.path())).unwrap();
    let ck = Checkpoint::load(&checkpoint_paths(dir.path(), 1).1).unwrap();
    let mut resumed = Trainer::from_checkpoint(ck, Some(cfg)).unwrap();
    resumed.fit(&p, Some(dir.path())).unwrap();

    assert_eq!(resumed.model.params(), straight.model.params());
    assert_eq!(resumed.adam.state, straight.adam.state);
    assert_eq!(resumed.history, straight.history);
    assert_eq!(resumed.step, straight.step);

    let log = read_log(&dir.path().join(LOG_FILE)).unwrap();
    let steps: Vec<u64> = log.iter().map(|r| r.step).collect();
    assert_eq!(steps, (1..=straight.step).collect::<Vec<_>>());
    for e in 0..=3 {
        assert!(checkpoint_paths(dir.path(), e).1.exists());
    }
}

#[test]
fn training_reduces_loss_on_a_fixed_batch() {
    let p: Vec<LightField> = patches().into_iter().take(2).collect();
    let cfg = TrainConfig {
        total_epochs: 40,
        augment: false,
        lr0: 2e-3,
        ..tiny_train()
    };
    let mut t = Trainer::new(tiny_net(), cfg).unwrap();
    t.fit(&p, None).unwrap();
    let first = t.history[0].mean_loss;
    let last = t.history.last().unwrap().mean_loss;
    assert!(last < 0.8 * first, "{first} -> {last}");
}

#[test]
fn prepare_converts_to_luma_and_crops() {
    let scenes = vec![render_scene(&SceneSpec::random(4, 5, [16, 12]), 1).unwrap()];
    let p = prepare_patches(&scenes, 3, 4, 4).unwrap();
    assert_eq!(p.len(), 12);
    assert_eq!(p[0].angular(), (3, 3));
    assert_eq!(p[0].color_space(), ColorSpace::Y);
    let y = rgb_to_y(&scenes[0].lf).unwrap();
    assert_eq!(p[0].at(0, 0, 0, 0, 0), y.at(1, 1, 0, 0, 0));
    assert!(prepare_patches(&scenes, 3, 32, 32).is_err());
}

#[test]
fn overfits_a_single_patch() {
    let scenes = vec![render_scene(&SceneSpec::random(11, 3, [32, 32]), 1).unwrap()];
    let p = prepare_patches(&scenes, 3, 32, 32).unwrap();
    assert_eq!(p.len(), 1);
    let net = NetworkConfig {
        channels: 8,
        ..tiny_net()
    };
    let cfg = TrainConfig {
        batch_size: 1,
        total_epochs: 500,
        decay_every: 250,
        lr0: 3e-3,
        augment: false,
        ..tiny_train()
    };
    let (lr, hr) = make_batch(&[&p[0]], &[Symmetry::identity()], 2).unwrap();
    let up = bicubic_upscale(&lr, 2).unwrap();
    let bicubic_l1 = up
        .data()
        .iter()
        .zip(hr.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / hr.len() as f64;
    let mut t = Trainer::new(net, cfg).unwrap();
    t.fit(&p, None).unwrap();
    let first = t.history[0].losses[0];
    let last = t.history.last().unwrap().losses[0];
    assert!(last < first, "{first} -> {last}");
    assert!(last <= 0.5 * bicubic_l1, "{last} vs bicubic {bicubic_l1}");
}
