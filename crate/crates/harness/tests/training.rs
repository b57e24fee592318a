mod common;

use common::{fixture, micro, train_config};
use tse_core::checkpoint::save_checkpoint;
use tse_core::datagen::manifest::Split;
use tse_core::{ExtractionModel, FusionMode, MultitaskMode};
use tse_harness::config_hash;
use tse_harness::train::{adapt_model, adaptation_schedule, resume_checkpoint, train_model, TrainJob};

fn curve(h: &[tse_harness::train::EpochLog]) -> Vec<[f64; 4]> {
    h.iter().map(|e| [e.train_loss, e.sdr_loss, e.aux_loss, e.dev_si_sdr]).collect()
}

#[test]
fn same_seed_gives_identical_curves_and_best_is_selected() {
    let fx = fixture(1);
    let (train, dev) = (fx.split(Split::Train), fx.split(Split::Dev));
    let job = TrainJob::new(micro(FusionMode::NormAttention, MultitaskMode::Guided), train_config(3));
    let a = train_model(&job.clone().with_output(fx.dir.path().join("a"), "m"), None, &train, &dev).unwrap();
    let b = train_model(&job.clone().with_output(fx.dir.path().join("b"), "m"), None, &train, &dev).unwrap();
    assert_eq!(curve(&a.history), curve(&b.history));
    assert_eq!(
        std::fs::read(a.best_path.as_ref().unwrap()).unwrap(),
        std::fs::read(b.best_path.as_ref().unwrap()).unwrap()
    );

    assert_eq!(a.history.len(), 3);
    let best = a.history.iter().map(|e| e.dev_si_sdr).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.best_dev_si_sdr, best);
    assert!(a.best_dev_si_sdr >= a.history[0].dev_si_sdr);
    assert_eq!(a.history[a.best_epoch - 1].dev_si_sdr, best);
    assert!(a.last_path.as_ref().unwrap().exists());

    let log = std::fs::read_to_string(a.log_path.as_ref().unwrap()).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next().unwrap(), format!("# config_hash={}", a.config_hash));
    assert!(lines.next().unwrap().starts_with("epoch,train_loss"));
    assert_eq!(lines.count(), 3);

    let other = TrainJob::new(job.model.clone(), tse_harness::TrainConfig { seed: 9, ..train_config(1) });
    let c = train_model(&other, None, &train, &dev).unwrap();
    assert_ne!(c.history[0].train_loss, a.history[0].train_loss);
}

#[test]
fn resume_checks_the_config_hash() {
    let fx = fixture(2);
    let cfg = micro(FusionMode::Attention, MultitaskMode::None);
    let t = train_config(1);
    let model = ExtractionModel::<f32>::new(cfg.clone(), 0).unwrap();
    let path = fx.dir.path().join("init.tsf");
    let hash = config_hash(&cfg, &t);
    save_checkpoint(&path, &model, &hash).unwrap();
    assert!(resume_checkpoint(&path, &hash).is_ok());
    let moved = config_hash(&cfg, &tse_harness::TrainConfig { learning_rate: 1e-2, ..t });
    let err = resume_checkpoint(&path, &moved).unwrap_err();
    assert!(format!("{err:#}").contains("config hash"));
}

#[test]
fn nan_loss_aborts_with_provenance() {
    let fx = fixture(3);
    let mut train = fx.split(Split::Train);
    for it in &mut train {
        it.mixture[100] = f32::NAN;
    }
    let job = TrainJob::new(micro(FusionMode::Sum, MultitaskMode::None), train_config(1));
    let err = format!("{:#}", train_model(&job, None, &train, &[]).unwrap_err());
    assert!(err.contains("epoch 1") && err.contains("batch"), "{err}");
}

#[test]
fn zero_epoch_adaptation_is_identity_and_schedule_follows_labels() {
    let fx = fixture(4);
    let items = fx.split(Split::AdaptTrain);
    let cfg = micro(FusionMode::NormAttention, MultitaskMode::Guided);
    let t = train_config(1);
    let model = ExtractionModel::<f32>::new(cfg.clone(), 3).unwrap();
    let out = tse_harness::train::RunOutput::new(fx.dir.path().join("adapt"), "a");
    let adapted = adapt_model(model.clone(), &t, 0, &items, Some(out)).unwrap();

    let hash = config_hash(&cfg, &t);
    let input = fx.dir.path().join("input.tsf");
    save_checkpoint(&input, &model, &hash).unwrap();
    let output = fx.dir.path().join("adapt/a_last.tsf");
    assert_eq!(std::fs::read(&input).unwrap(), std::fs::read(&output).unwrap());
    assert!(adapted.history.is_empty());

    assert_eq!(adapted.schedule.len(), items.len());
    for (row, it) in adapted.schedule.iter().zip(&items) {
        assert_eq!(row.condition, it.entry.condition);
        let (oracle, alpha) = match row.condition.as_str() {
            "without_occlusion" => (Some([0.5, 0.5]), t.alpha),
            "full_occlusion" => (Some([1.0, 0.0]), t.alpha),
            "intermittent" => (None, 0.0),
            other => panic!("unexpected label {other}"),
        };
        assert_eq!((row.oracle, row.alpha), (oracle, alpha));
    }
    let logged = std::fs::read_to_string(fx.dir.path().join("adapt/a_alpha_schedule.csv")).unwrap();
    assert_eq!(logged.lines().count(), items.len() + 1);
    for label in ["without_occlusion", "full_occlusion", "intermittent"] {
        assert!(adapted.schedule.iter().any(|r| r.condition == label));
    }
}

#[test]
fn adaptation_moves_weights_and_rejects_unknown_labels() {
    let fx = fixture(5);
    let mut items = fx.split(Split::AdaptTrain);
    let cfg = micro(FusionMode::NormAttention, MultitaskMode::Guided);
    let model = ExtractionModel::<f32>::new(cfg, 3).unwrap();
    let adapted = adapt_model(model.clone(), &train_config(1), 1, &items, None).unwrap();
    assert_eq!(adapted.history.len(), 1);
    let moved = model.params().iter().zip(adapted.model.params().iter()).any(|(a, b)| a.value.data() != b.value.data());
    assert!(moved);

    items[0].entry.condition = "mystery".into();
    let err = format!("{:#}", adaptation_schedule(&items, train_config(1).loss_weights()).unwrap_err());
    assert!(err.contains("mystery"));
}
