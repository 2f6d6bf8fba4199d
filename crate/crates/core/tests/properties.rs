//! Property tests over whole-model invariants.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use san::autodiff::Tensor;
use san::data::{batch_indices, generate_dataset, AnswerVocab, GeneratorConfig};
use san::image::RegionFeatureMap;
use san::model::{Checkpoint, ModelConfig, SanModel};
use san::question::EncoderKind;
use san::viz::{parse_pgm, pgm_bytes, upsample_attention};

fn random_features(g: usize, raw: usize, seed: u64) -> RegionFeatureMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..g * g * raw).map(|_| rng.gen_range(-3.0..3.0)).collect();
    RegionFeatureMap::new(Tensor::matrix(g * g, raw, data).unwrap()).unwrap()
}

fn model(cnn: bool, layers: usize, raw: usize, seed: u64) -> SanModel {
    SanModel::new(ModelConfig {
        encoder: if cnn { EncoderKind::Cnn } else { EncoderKind::Lstm },
        layers,
        vocab_size: 12,
        answer_count: 5,
        raw_dim: raw,
        embed_dim: 4,
        hidden: 5,
        cnn_filters: [2, 2, 1],
        init_seed: seed,
        ..ModelConfig::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn every_layer_emits_a_distribution(
        cnn in any::<bool>(), layers in 1usize..=4, g in 1usize..5, seed in 0u64..1000,
        tokens in prop::collection::vec(2usize..12, 1..7),
    ) {
        let m = model(cnn, layers, 3, seed);
        let (p_ans, trace) = m.forward(&random_features(g, 3, seed), &tokens, tokens.len()).unwrap();
        prop_assert_eq!(trace.layers.len(), layers);
        for layer in &trace.layers {
            prop_assert_eq!(layer.p.len(), g * g);
            prop_assert!((layer.p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(layer.p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
        prop_assert!((p_ans.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn query_is_question_plus_glimpses(cnn in any::<bool>(), layers in 1usize..=4, seed in 0u64..1000) {
        let m = model(cnn, layers, 4, seed);
        let (_, trace) = m.forward(&random_features(3, 4, seed + 1), &[3, 4, 5], 3).unwrap();
        let mut u = trace.v_q.clone();
        for layer in &trace.layers {
            for (a, b) in u.iter_mut().zip(&layer.v_tilde) {
                *a += b;
            }
            prop_assert_eq!(&layer.u, &u);
        }
    }

    #[test]
    fn padding_beyond_the_mask_is_ignored(cnn in any::<bool>(), seed in 0u64..1000, pad in 1usize..5) {
        let m = model(cnn, 2, 3, seed);
        let f = random_features(2, 3, seed);
        let tokens = vec![4, 7, 9];
        let mut padded = tokens.clone();
        padded.extend(std::iter::repeat_n(san::question::PAD, pad));
        prop_assert_eq!(m.forward(&f, &tokens, 3).unwrap(), m.forward(&f, &padded, 3).unwrap());
    }

    #[test]
    fn checkpoints_round_trip(cnn in any::<bool>(), layers in 1usize..=4, seed in 0u64..1000) {
        let ds = generate_dataset(&GeneratorConfig::default(), 1, 0, seed).unwrap();
        let mut m = model(cnn, layers, 16, seed);
        m.config.vocab_size = ds.vocab.len();
        m.config.answer_count = AnswerVocab::standard().len();
        let m = SanModel::new(m.config.clone()).unwrap();
        let ck = Checkpoint { model: m, vocab: ds.vocab.clone(), answers: AnswerVocab::standard() };
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert!(back == ck);
    }

    #[test]
    fn feature_files_round_trip(g in 1usize..6, raw in 1usize..9, seed in 0u64..1000) {
        let f = random_features(g, raw, seed);
        let bytes = f.to_bytes();
        prop_assert_eq!(bytes.len(), 16 + 4 * g * g * raw);
        prop_assert_eq!(RegionFeatureMap::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn batches_partition_the_dataset(n in 0usize..200, batch in 1usize..40, seed in 0u64..1000) {
        let batches = batch_indices(n, batch, seed).unwrap();
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= batch));
        prop_assert_eq!(batches, batch_indices(n, batch, seed).unwrap());
    }

    #[test]
    fn heatmaps_survive_pgm_export(g in 1usize..6, scale in 1usize..8, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..g * g).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let h = upsample_attention(&p, g, g * scale).unwrap();
        let (w, hgt, pixels) = parse_pgm(&pgm_bytes(&h)).unwrap();
        prop_assert_eq!((w, hgt), (g * scale, g * scale));
        prop_assert_eq!(pixels.iter().copied().max(), Some(255));
    }
}
