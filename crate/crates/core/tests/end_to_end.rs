use framemae::model::{Autoencoder, ModelConfig};
use framemae::numerics::SeedStream;
use framemae::score::{score_video, ScoringConfig};
use framemae::synthetic::{synthetic_corpus, SyntheticSpec};
use framemae::train::{train, Corpus, StridePolicy, TrainConfig};

fn fit(
    spec: &SyntheticSpec,
    cfg: &TrainConfig,
) -> (Autoencoder<f32>, Vec<f64>, Vec<framemae::synthetic::SyntheticVideo>) {
    let videos = synthetic_corpus(spec).unwrap();
    let corpus = Corpus::new(videos.iter().map(|v| v.features.clone()).collect(), true).unwrap();
    let mut model = Autoencoder::new(ModelConfig::tiny(), &SeedStream::new(cfg.seed)).unwrap();
    let trace = train(&mut model, &corpus, cfg, |_| Ok(())).unwrap();
    (model, trace.iter().map(|r| r.loss).collect(), videos)
}

#[test]
fn loss_drops_tenfold_in_500_iterations() {
    let cfg = TrainConfig {
        epochs: 320,
        batch_size: 128,
        base_lr: 1e-2,
        warmup_epochs: 16.0,
        stride: StridePolicy::UniformRandom { lo: 1, hi: 2 },
        ..TrainConfig::default()
    };
    let (_, losses, _) = fit(&SyntheticSpec::default(), &cfg);
    assert_eq!(losses.len(), 500);
    assert!(losses.iter().all(|l| l.is_finite()));
    let tail = losses[losses.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(tail < 0.1 * losses[0], "initial {} final {tail}", losses[0]);
}

#[test]
fn outliers_in_repeated_pattern_score_highest() {
    let spec = SyntheticSpec {
        videos: 1,
        min_frames: 60,
        max_frames: 60,
        motifs: 1,
        seed: 5,
        ..SyntheticSpec::default()
    };
    let cfg = TrainConfig {
        epochs: 3200,
        batch_size: 64,
        base_lr: 1e-2,
        warmup_epochs: 160.0,
        stride: StridePolicy::UniformRandom { lo: 1, hi: 2 },
        ..TrainConfig::default()
    };
    let (model, _, videos) = fit(&spec, &cfg);
    let video = &videos[0];
    assert_eq!(video.outliers.len(), 3);
    let scoring = ScoringConfig {
        stride: 2,
        clip_len: 6,
        target_slot: None,
    };
    let curve = score_video(&model, &video.features, &scoring).unwrap();
    let mut order: Vec<usize> = (0..curve.len()).collect();
    order.sort_by(|&a, &b| curve.scores[b].total_cmp(&curve.scores[a]));
    let mut top = order[..3].to_vec();
    top.sort_unstable();
    assert_eq!(top, video.outliers, "scores {:?}", curve.scores);
}
