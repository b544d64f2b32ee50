use rand::SeedableRng;

use super::*;
use crate::agents::{tanh_gaussian_log_prob, LOG_VAR_MAX, LOG_VAR_MIN};
use crate::estimators::History;
use crate::models::Design;

fn small_arch() -> Architecture {
    Architecture {
        summary_dim: 8,
        encoder_hidden: vec![16],
        head_hidden: vec![16],
        critic_hidden: vec![16],
    }
}

fn lingauss_episode(model: &Model, designs: &[f64], rewards: &[f64]) -> StoredEpisode {
    let mut h = History::new();
    for (i, d) in designs.iter().enumerate() {
        h.push(Design::Continuous(vec![*d]), 0.1 * i as f64 - 0.3);
    }
    StoredEpisode::new(model, h, rewards.to_vec())
}

fn learner(model: &Model, gamma: f64, target_rate: f64, seed: u64) -> Learner {
    let mut rng = StreamRng::seed_from_u64(seed);
    let actor = Actor::new(model, small_arch(), &mut rng);
    let critics = CriticEnsemble::new(model.feature_dim(), actor.action_dim(), 2, &small_arch(), &mut rng).unwrap();
    Learner::new(
        actor,
        critics,
        LearnerConfig {
            gamma,
            target_rate,
            m_subset: 2,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            alpha_lr: 3e-4,
            init_alpha: 0.1,
            target_entropy: -1.0,
            tune_alpha: false,
        },
    )
    .unwrap()
}

#[test]
fn eviction_drops_whole_oldest_episodes() {
    let model = Model::new(ModelId::LinGauss);
    let mut buf = ReplayBuffer::new(5);
    for k in 0..3 {
        buf.push(lingauss_episode(&model, &[k as f64, 1.0], &[0.0, 1.0]));
    }
    assert_eq!(buf.len_episodes(), 2);
    assert_eq!(buf.len_transitions(), 4);
    assert_eq!(buf.evicted(), 1);
    assert_eq!(buf.episode(0).history.designs()[0], Design::Continuous(vec![1.0]));
}

#[test]
fn empty_and_oversized_batches_are_errors() {
    let model = Model::new(ModelId::LinGauss);
    let mut buf = ReplayBuffer::new(100);
    let mut rng = StreamRng::seed_from_u64(1);
    assert!(matches!(buf.sample_batch(1, &mut rng), Err(TrainError::EmptyBuffer)));
    buf.push(lingauss_episode(&model, &[1.0, 2.0], &[0.0, 0.0]));
    match buf.sample_batch(3, &mut rng) {
        Err(TrainError::BatchTooLarge { requested, stored }) => assert_eq!((requested, stored), (3, 2)),
        other => panic!("expected BatchTooLarge, got {other:?}"),
    }
}

#[test]
fn single_episode_prefixes_rebuild_its_histories() {
    let model = Model::new(ModelId::LinGauss);
    let mut buf = ReplayBuffer::new(100);
    let ep = lingauss_episode(&model, &[0.5, -1.0, 2.0], &[0.1, 0.2, 0.3]);
    buf.push(ep.clone());
    let mut rng = StreamRng::seed_from_u64(2);
    for item in buf.sample_batch(3, &mut rng).unwrap() {
        assert!(item.t < 3);
        let tr = buf.transition(item);
        assert_eq!(tr.history, ep.history.prefix(item.t));
        assert_eq!(tr.next_history, ep.history.prefix(item.t + 1));
        assert_eq!(tr.reward, ep.rewards[item.t]);
        assert_eq!(tr.done, item.t == 2);
    }
}

#[test]
fn sampling_is_uniform_over_episodes() {
    let model = Model::new(ModelId::LinGauss);
    let mut buf = ReplayBuffer::new(1000);
    for k in 0..10 {
        buf.push(lingauss_episode(&model, &[k as f64 * 0.1; 3], &[0.0; 3]));
    }
    let mut rng = StreamRng::seed_from_u64(3);
    let n = 100_000;
    let mut counts = [0usize; 10];
    for _ in 0..n / 25 {
        for item in buf.sample_batch(25, &mut rng).unwrap() {
            counts[item.episode] += 1;
        }
    }
    let p: f64 = 0.1;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() < 5.0 * sd, "{counts:?}");
    }
}

#[test]
fn prepared_features_rebuild_each_prefix_encoding() {
    let model = Model::new(ModelId::LinGauss);
    let l = learner(&model, 0.9, 0.5, 4);
    let mut buf = ReplayBuffer::new(100);
    buf.push(lingauss_episode(&model, &[0.5, -1.0, 2.0], &[0.0; 3]));
    buf.push(lingauss_episode(&model, &[2.5, 1.5], &[0.0; 2]));
    let items = [
        BatchItem { episode: 1, t: 1 },
        BatchItem { episode: 0, t: 2 },
        BatchItem { episode: 1, t: 0 },
    ];
    let batch = l.prepare(&buf, &items);
    assert_eq!(batch.features.shape(), &[5, 2]);
    let mut g = crate::autodiff::Graph::new();
    let bound = l.actor.store().bind_frozen(&mut g);
    let feats = g.constant(batch.features.clone());
    let s = l.actor.encoder().forward_prefixes(&mut g, &bound, feats, batch.next_states.clone()).unwrap();
    let s = g.value(s).clone();
    for (row, item) in items.iter().enumerate() {
        let h = buf.episode(item.episode).history.prefix(item.t + 1);
        let direct = l.actor.encode_history(&model, &h);
        for (a, b) in s.row(row).iter().zip(&direct.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert_eq!(batch.not_done, vec![0.0, 0.0, 1.0]);
}

#[test]
fn zero_discount_targets_are_the_rewards() {
    let model = Model::new(ModelId::LinGauss);
    let l = learner(&model, 0.0, 0.5, 5);
    let mut buf = ReplayBuffer::new(100);
    buf.push(lingauss_episode(&model, &[0.5, -1.0, 2.0], &[0.25, -1.5, 3.0]));
    let items: Vec<_> = (0..3).map(|t| BatchItem { episode: 0, t }).collect();
    let batch = l.prepare(&buf, &items);
    let mut rng = StreamRng::seed_from_u64(0);
    assert_eq!(l.critic_targets(&batch, &mut rng).unwrap(), vec![0.25, -1.5, 3.0]);
}

#[test]
fn terminal_rows_drop_the_bootstrap() {
    let model = Model::new(ModelId::LinGauss);
    let l = learner(&model, 0.9, 0.5, 6);
    let mut buf = ReplayBuffer::new(100);
    buf.push(lingauss_episode(&model, &[0.5, -1.0], &[0.25, 0.75]));
    let batch = l.prepare(&buf, &[BatchItem { episode: 0, t: 0 }, BatchItem { episode: 0, t: 1 }]);
    let mut rng = StreamRng::seed_from_u64(0);
    let y = l.critic_targets(&batch, &mut rng).unwrap();
    assert_eq!(y[1], 0.75);
    assert!(y[0] != 0.25 && y[0].is_finite());
}

#[test]
fn two_of_two_subset_is_the_plain_minimum() {
    let model = Model::new(ModelId::LinGauss);
    let l = learner(&model, 0.9, 0.5, 7);
    let mut buf = ReplayBuffer::new(100);
    buf.push(lingauss_episode(&model, &[0.5, -1.0], &[0.0, 0.0]));
    let batch = l.prepare(&buf, &[BatchItem { episode: 0, t: 0 }]);
    let mut rng = StreamRng::seed_from_u64(11);
    let y = l.critic_targets(&batch, &mut rng).unwrap()[0];

    // Replay the same draws by hand.
    let mut rng = StreamRng::seed_from_u64(11);
    let _ = rand::seq::index::sample(&mut rng, 2, 2);
    let next = buf.episode(0).history.prefix(1);
    let summary = l.actor.encode_history(&model, &next);
    let u: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
    let (mean, log_var) = {
        let out = l.actor.head().forward_row(l.actor.store(), &summary.values);
        (out[0], out[1].clamp(LOG_VAR_MIN, LOG_VAR_MAX))
    };
    let pre = mean + (0.5 * log_var).exp() * u;
    let a = pre.tanh();
    let log_pi = tanh_gaussian_log_prob(&[pre], &[mean], &[0.5 * log_var]) - 3.0f64.ln();
    let mut csum = crate::agents::Summary::zeros(8);
    for (d, yv) in next.iter() {
        let e = l.critics.encoder().mlp().forward_row(l.critics.target(), &model.features(d, yv));
        for (s, v) in csum.values.iter_mut().zip(e) {
            *s += v;
        }
    }
    let q = l.critics.q_row(true, &csum.values, &[a]);
    let expect = 0.9 * (q[0].min(q[1]) - 0.1 * log_pi);
    assert!((y - expect).abs() < 1e-9, "{y} vs {expect}");
}

#[test]
fn unit_target_rate_copies_online_weights() {
    let model = Model::new(ModelId::LinGauss);
    let mut l = learner(&model, 0.9, 1.0, 8);
    let mut buf = ReplayBuffer::new(100);
    buf.push(lingauss_episode(&model, &[0.5, -1.0], &[0.3, 0.2]));
    let batch = l.prepare(&buf, &[BatchItem { episode: 0, t: 0 }, BatchItem { episode: 0, t: 1 }]);
    let mut rng = StreamRng::seed_from_u64(0);
    let before = l.critics.target().clone();
    l.critic_update(&batch, &mut rng).unwrap();
    assert_ne!(&before, l.critics.target());
    assert_eq!(l.critics.store(), l.critics.target());
}

#[test]
fn critics_regress_a_constant_reward() {
    let model = Model::new(ModelId::LinGauss);
    let mut l = learner(&model, 0.0, 0.01, 9);
    let mut buf = ReplayBuffer::new(100);
    buf.push(lingauss_episode(&model, &[0.5, -1.0, 2.0], &[1.5; 3]));
    buf.push(lingauss_episode(&model, &[-2.0, 0.0, 1.0], &[1.5; 3]));
    let items: Vec<_> = (0..2).flat_map(|e| (0..3).map(move |t| BatchItem { episode: e, t })).collect();
    let batch = l.prepare(&buf, &items);
    let mut rng = StreamRng::seed_from_u64(0);
    let first = l.critic_update(&batch, &mut rng).unwrap();
    let mut last = first;
    for _ in 0..2000 {
        last = l.critic_update(&batch, &mut rng).unwrap();
    }
    assert!(last < 1e-3 && last < first, "{first} -> {last}");
}

#[test]
fn large_temperature_pushes_entropy_up() {
    let model = Model::new(ModelId::LinGauss);
    let mut l = learner(&model, 0.0, 0.5, 10);
    l.set_alpha(1e3);
    // Start from a narrow policy, well below the squashed-Gaussian entropy maximum.
    let id = l.actor.store().find("actor.head.l1.b").unwrap();
    l.actor.store_mut().get_mut(id).values_mut()[1] = -8.0;
    let mut buf = ReplayBuffer::new(100);
    buf.push(lingauss_episode(&model, &[0.5, -1.0], &[0.0, 0.0]));
    let batch = l.prepare(&buf, &[BatchItem { episode: 0, t: 0 }, BatchItem { episode: 0, t: 1 }]);
    let summaries: Vec<_> = (0..2).map(|t| l.actor.encode_history(&model, &buf.episode(0).history.prefix(t))).collect();
    let log_std = |l: &Learner| -> f64 {
        summaries
            .iter()
            .map(|s| l.actor.head().forward_row(l.actor.store(), &s.values)[1].clamp(LOG_VAR_MIN, LOG_VAR_MAX))
            .sum()
    };
    let before = log_std(&l);
    let mut rng = StreamRng::seed_from_u64(0);
    for _ in 0..20 {
        l.actor_update(&batch, &mut rng).unwrap();
    }
    assert!(log_std(&l) > before + 0.1, "{before} -> {}", log_std(&l));
}

#[test]
fn constant_critic_leaves_only_the_entropy_gradient() {
    let model = Model::new(ModelId::Prey);
    let mut l = learner(&model, 0.0, 0.5, 12);
    // Zero the last layer of every critic head so Q is identically its bias.
    let names: Vec<String> = l.critics.store().iter().map(|(n, _)| n.to_string()).collect();
    for name in names.iter().filter(|n| n.starts_with("critic.q") && n.ends_with(".l1.w")) {
        let id = l.critics.store().find(name).unwrap();
        l.critics.store_mut().get_mut(id).values_mut().fill(0.0);
    }
    let mut h = History::new();
    h.push(Design::Discrete(3), 2.0);
    h.push(Design::Discrete(7), 1.0);
    let mut buf = ReplayBuffer::new(100);
    buf.push(StoredEpisode::new(&model, h, vec![0.0, 0.0]));
    let batch = l.prepare(&buf, &[BatchItem { episode: 0, t: 0 }, BatchItem { episode: 0, t: 1 }]);
    let (_, with_q, _) = l.actor_gradients(&batch, &mut StreamRng::seed_from_u64(5)).unwrap();
    let alpha = l.alpha();
    l.set_alpha(alpha * 2.0);
    let (_, doubled, _) = l.actor_gradients(&batch, &mut StreamRng::seed_from_u64(5)).unwrap();
    for (a, b) in with_q.iter().zip(&doubled) {
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((2.0 * x - y).abs() < 1e-10 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn adam_first_step_is_bounded_by_lr() {
    let model = Model::new(ModelId::LinGauss);
    let mut l = learner(&model, 0.9, 0.5, 13);
    let mut buf = ReplayBuffer::new(100);
    buf.push(lingauss_episode(&model, &[0.5, -1.0], &[0.3, 0.2]));
    let batch = l.prepare(&buf, &[BatchItem { episode: 0, t: 0 }, BatchItem { episode: 0, t: 1 }]);
    let before = l.actor.store().clone();
    l.actor_update(&batch, &mut StreamRng::seed_from_u64(0)).unwrap();
    let mut moved = false;
    for (a, b) in before.arrays().iter().zip(l.actor.store().arrays()) {
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-3 * (1.0 + 1e-6));
            moved |= x != y;
        }
    }
    assert!(moved);
}

#[test]
fn config_rejects_bad_values_and_unknown_keys() {
    let mut c = TrainConfig::for_model(ModelId::Prey, Profile::Paper);
    assert_eq!((c.n_critics, c.iterations, c.contrastive, c.gamma), (10, 40_000, 10_000, 0.95));
    c.m_subset = 11;
    assert!(matches!(c.validate(), Err(TrainError::InvalidConfig(_))));
    let desk = TrainConfig::for_model(ModelId::Source, Profile::Desk);
    assert_eq!((desk.iterations, desk.contrastive), (2000, 1000));
    let prey_desk = TrainConfig::for_model(ModelId::Prey, Profile::Desk);
    assert_eq!((prey_desk.iterations, prey_desk.contrastive), (4000, 1000));

    let mut json = serde_json::to_value(&desk).unwrap();
    json["learning_rate"] = serde_json::json!(0.1);
    assert!(serde_json::from_value::<TrainConfig>(json).is_err());
    assert_ne!(desk.digest(), prey_desk.digest());
    assert_eq!(desk.digest(), desk.clone().digest());
}

fn tiny_config(model: ModelId, iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        contrastive: 64,
        batch_size: 16,
        log_every: 5,
        architecture: small_arch(),
        ..TrainConfig::for_model(model, Profile::Desk)
    }
}

#[test]
fn same_seed_gives_identical_runs() {
    for model in [ModelId::LinGauss, ModelId::Prey] {
        let c = tiny_config(model, 20);
        let a = train(&c).unwrap();
        let b = train(&c).unwrap();
        let csv = |r: &TrainResult| {
            let mut out = Vec::new();
            r.log.write_csv(&mut out).unwrap();
            out
        };
        assert_eq!(csv(&a), csv(&b));
        assert_eq!(a.actor().store(), b.actor().store());
        assert_eq!(a.log.rows.len(), 4);
        assert!(a.log.rows.iter().all(|r| r.seconds == 0.0));
        let mut other = c.clone();
        other.seed = 1;
        assert_ne!(train(&other).unwrap().episode_returns, a.episode_returns);
    }
}

#[test]
fn sparse_and_dense_store_equal_returns() {
    let mut dense = tiny_config(ModelId::Ces, 6);
    dense.horizon = 4;
    let mut sparse = dense.clone();
    sparse.reward_mode = RewardMode::Sparse;
    // Before the first update the two runs act identically.
    dense.batch_size = 1000;
    sparse.batch_size = 1000;
    dense.buffer_size = 1000;
    sparse.buffer_size = 1000;
    let a = train(&dense).unwrap();
    let b = train(&sparse).unwrap();
    for (x, y) in a.episode_returns.iter().zip(&b.episode_returns) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn log_csv_has_the_expected_columns() {
    let r = train(&tiny_config(ModelId::LinGauss, 10)).unwrap();
    let mut out = Vec::new();
    r.log.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("iteration,mean_return,return_stderr,critic_loss,actor_loss,alpha,seconds\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn table_echo_uses_published_notation() {
    let row = hyperparameter_row(ModelId::Source);
    let text: Vec<String> = row.table_entries().iter().map(|(k, v)| format!("{k}={v}")).collect();
    assert_eq!(
        text.join(" "),
        "N=2 M=2 training iterations=2e4 contrastive samples=1e5 T=30 gamma=0.9 tau=1e-3 \
         policy learning rate=1e-4 critic learning rate=3e-4 buffer size=1e7"
    );
    assert_eq!(compact(0.95), "0.95");
    assert_eq!(compact(5e-3), "5e-3");
    assert_eq!(compact(40_000.0), "4e4");
    assert_eq!(compact(1234.0), "1234");
}
