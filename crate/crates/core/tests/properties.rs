//! Property suites for the crate's cross-module invariants.

use std::collections::BTreeMap;

use proptest::prelude::*;

use cotlab_core::answers::{equivalent, extract_boxed, normalize, DEFAULT_TOLERANCE};
use cotlab_core::corpus::{render_qfft, render_sft, whitespace_token_count, TraceRecord};
use cotlab_core::metrics::{pass_at_1, rak, ConfusionMatrix};
use cotlab_core::patterns::{classify_pattern, split_at_boundary, Lexicon, PatternLabel};
use cotlab_core::toylm::{GrammarSpec, Layer, ModelParams, NGramModel, Vocab};
use cotlab_core::transforms::{
    alpha_mix_keep_count, apply_alpha_mix, apply_noise, apply_qfft,
};

fn record_strategy() -> impl Strategy<Value = TraceRecord> {
    (
        "[a-z][a-z0-9]{0,8}",
        ".{0,40}",
        "[^\u{0}]{1,60}",
        "[0-9]{1,4}",
        0u32..8,
    )
        .prop_map(|(id, question, response, gold, idx)| {
            TraceRecord::new(id, question, response, gold).with_sample_index(idx)
        })
}

proptest! {
    // Question-free rendering ignores the question entirely.
    #[test]
    fn qfft_render_invariant_under_question_mutation(
        record in record_strategy(),
        mutated_question in ".{0,60}",
    ) {
        let base = render_qfft(&record).unwrap();
        let mut mutated = record.clone();
        mutated.question = mutated_question;
        let other = render_qfft(&mutated).unwrap();
        prop_assert_eq!(base, other);
    }

    // The supervised loss span covers exactly the same response tokens that
    // question-free rendering trains on.
    #[test]
    fn sft_loss_tokens_equal_qfft_target_tokens(mut record in record_strategy()) {
        if record.question.is_empty() {
            record.question = "q".into();
        }
        let sft = render_sft(&record, "sys").unwrap();
        let qfft = render_qfft(&record).unwrap();
        prop_assert_eq!(&sft.target_text, &qfft.target_text);
        prop_assert_eq!(
            sft.loss_span.1 - sft.loss_span.0,
            whitespace_token_count(&qfft.target_text) as usize
        );
        prop_assert_eq!(sft.loss_span, qfft.loss_span);
    }

    // Marker-free text is Short; injecting a marker flips it to Long; the
    // three split pieces always reconstruct the original.
    #[test]
    fn marker_injection_monotonicity_and_reconstruction(
        pre in "[a-vx-z0-9 .,!?]{0,60}",
        post in "[a-vx-z0-9 .,!?]{0,60}",
    ) {
        let lexicon = Lexicon::default();
        let short_text = format!("{pre} {post}");
        prop_assert_eq!(classify_pattern(&short_text, &lexicon).label, PatternLabel::Short);

        let long_text = format!("{pre} wait {post}");
        let annotation = classify_pattern(&long_text, &lexicon);
        prop_assert_eq!(annotation.label, PatternLabel::Long);
        let (offset, marker) = annotation.boundary.unwrap();
        prop_assert!(offset < long_text.chars().count());
        prop_assert_eq!(marker.to_lowercase(), "wait");

        let split = split_at_boundary(&long_text, &lexicon).unwrap();
        prop_assert_eq!(
            format!("{}{}{}", split.pre_text, split.marker_text, split.post_text),
            long_text.clone()
        );

        // Determinism.
        prop_assert_eq!(classify_pattern(&long_text, &lexicon), classify_pattern(&long_text, &lexicon));
    }

    // Balanced payloads embedded in backslash-free noise always come back.
    #[test]
    fn boxed_parser_recovers_payload(
        payload in balanced_braces(),
        prefix in "[a-z0-9 .,{}()=+-]{0,30}",
        suffix in "[a-z0-9 .,{}()=+-]{0,30}",
    ) {
        let text = format!("{prefix}\\boxed{{{payload}}}{suffix}");
        let extracted = extract_boxed(&text);
        prop_assert_eq!(extracted.raw, payload);
    }

    // Equivalence is symmetric and reflexive.
    #[test]
    fn equivalence_symmetry(a in numeric_answer(), b in numeric_answer()) {
        let ab = equivalent(&a, &b, DEFAULT_TOLERANCE);
        let ba = equivalent(&b, &a, DEFAULT_TOLERANCE);
        prop_assert_eq!(ab.equal, ba.equal);
        let aa = equivalent(&a, &a, DEFAULT_TOLERANCE);
        prop_assert!(aa.equal);
    }

    #[test]
    fn normalize_is_idempotent(raw in "[a-zA-Z0-9 ,.$/\\\\{}]{0,40}") {
        let once = normalize(&raw);
        prop_assert_eq!(normalize(&once), once);
    }

    // Chance-corrected agreement stays in [-1, 1] and matches the algebraic
    // two-route evaluation; swapping predicted labels flips observed
    // agreement.
    #[test]
    fn rak_bounds_and_label_swap(tp in 0u64..500, fn_ in 0u64..500, fp in 0u64..500, tn in 0u64..500) {
        prop_assume!(tp + fn_ + fp + tn > 0);
        let cm = ConfusionMatrix::new(tp, fn_, fp, tn);
        let result = rak::<f64>(&cm).unwrap();
        prop_assert!(result.rak >= -1.0 - 1e-12 && result.rak <= 1.0 + 1e-12);

        let swapped = ConfusionMatrix::new(fn_, tp, tn, fp);
        let flipped = rak::<f64>(&swapped).unwrap();
        prop_assert!((result.p_o + flipped.p_o - 1.0).abs() < 1e-12);

        // Independent algebraic route.
        let den = ((tp + fp) * (fp + tn) + (tp + fn_) * (fn_ + tn)) as f64;
        if den > 0.0 {
            let expected = 2.0 * (tp as f64 * tn as f64 - fn_ as f64 * fp as f64) / den;
            prop_assert!((result.rak - expected).abs() < 1e-12);
        }
    }

    // Holding token reduction fixed, the score never rises as accuracy
    // change falls through zero.
    #[test]
    fn aes_is_monotone_in_accuracy_change(
        deltas in proptest::collection::vec(-0.5f64..0.5, 2..6),
    ) {
        let cfg = cotlab_core::AesConfig::default();
        let base = (80.0, 1000.0);
        let mut sorted = deltas.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut last = f64::NEG_INFINITY;
        for delta in sorted {
            let model = (80.0 * (1.0 + delta), 500.0);
            let result = cotlab_core::metrics::aes(base, model, &cfg).unwrap();
            prop_assert!(result.aes >= last - 1e-12);
            last = result.aes;
        }
    }

    // Sample order inside a question never changes pass@1.
    #[test]
    fn pass_at_1_is_permutation_invariant(
        flags in proptest::collection::vec(any::<bool>(), 1..24),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut groups = BTreeMap::new();
        groups.insert("q".to_string(), flags.clone());
        let a = pass_at_1::<f64>(&groups).unwrap();
        let mut shuffled = flags;
        shuffled.shuffle(&mut rand_chacha::ChaCha12Rng::seed_from_u64(seed));
        let mut groups2 = BTreeMap::new();
        groups2.insert("q".to_string(), shuffled);
        let b = pass_at_1::<f64>(&groups2).unwrap();
        prop_assert_eq!(a.overall_pct, b.overall_pct);
    }

    // Alpha-mix keeps exactly the round-half-up count and is a pure
    // function of (input, seed); nullification is idempotent.
    #[test]
    fn alpha_mix_count_and_purity(n in 0usize..400, alpha in 0.0f64..=1.0, seed in any::<u64>()) {
        let records: Vec<TraceRecord> = (0..n)
            .map(|i| TraceRecord::new(format!("q{i}"), "question", "resp", "g"))
            .collect();
        let out = apply_alpha_mix(&records, alpha, seed).unwrap();
        let kept = out.iter().filter(|r| !r.question.is_empty()).count();
        prop_assert_eq!(kept, alpha_mix_keep_count(n, alpha));
        let again = apply_alpha_mix(&records, alpha, seed).unwrap();
        prop_assert_eq!(out, again);

        let nullified = apply_qfft(&records);
        prop_assert_eq!(apply_qfft(&nullified.clone()), nullified);
    }

    // Level 4 never leaves a response in place, over arbitrary seeds.
    #[test]
    fn level4_is_always_a_derangement(n in 2usize..30, seed in any::<u64>()) {
        let records: Vec<TraceRecord> = (0..n)
            .map(|i| TraceRecord::new(format!("q{i}"), "q", format!("resp-{i}"), "g"))
            .collect();
        let out = apply_noise(&records, 4, seed).unwrap();
        for (before, after) in records.iter().zip(&out) {
            prop_assert_ne!(&before.response, &after.response);
        }
        let again = apply_noise(&records, 4, seed).unwrap();
        prop_assert_eq!(out, again);
    }

    // Smoothed next-token distributions always sum to one, at seen and
    // unseen contexts, across both count layers.
    #[test]
    fn next_token_distributions_normalize(
        sequences in proptest::collection::vec(
            proptest::collection::vec(0u32..10, 1..12),
            0..8,
        ),
        context in proptest::collection::vec(0u32..10, 0..6),
        w in 0.0f64..8.0,
    ) {
        let vocab = Vocab::build((0..7).map(|i| format!("s{i}"))).unwrap();
        let mut model = NGramModel::<f64>::new(
            vocab,
            ModelParams { order: 3, smoothing_k: 0.1, finetune_weight: w },
        ).unwrap();
        let clip = |seq: Vec<u32>| -> Vec<u32> { seq.into_iter().map(|t| t % 10).collect() };
        let (base, fine): (Vec<_>, Vec<_>) = sequences.into_iter().map(clip).enumerate()
            .partition(|(i, _)| i % 2 == 0);
        let base: Vec<Vec<u32>> = base.into_iter().map(|(_, s)| s).collect();
        let fine: Vec<Vec<u32>> = fine.into_iter().map(|(_, s)| s).collect();
        model.train_counts(&base, Layer::Base).unwrap();
        model.train_counts(&fine, Layer::Finetune).unwrap();
        let dist = model.next_token_dist(&context);
        let sum: f64 = dist.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9, "sum {}", sum);
        prop_assert!(dist.iter().all(|&p| p > 0.0));
    }
}

/// Balanced-brace payloads without backslashes.
fn balanced_braces() -> impl Strategy<Value = String> {
    let leaf = "[a-z0-9 ,./+=-]{0,12}";
    leaf.prop_recursive(3, 24, 4, |inner| {
        (inner.clone(), "[a-z0-9 ]{0,6}", inner)
            .prop_map(|(a, mid, b)| format!("{a}{{{mid}}}{b}"))
    })
}

/// Numeric-looking answers: integers, decimals, simple fractions.
fn numeric_answer() -> impl Strategy<Value = String> {
    prop_oneof![
        (-10_000i64..10_000).prop_map(|n| n.to_string()),
        (-10_000i64..10_000, 1u32..1000).prop_map(|(n, d)| format!("{n}.{d:03}")),
        (-100i32..100, 1i32..100).prop_map(|(n, d)| format!("{n}/{d}")),
        "[a-z]{1,6}",
    ]
}

// The question-mixing equivalences at the endpoints, checked outside
// proptest for a fixed grammar corpus.
#[test]
fn alpha_mix_endpoint_equivalences_on_grammar_corpus() {
    let corpus = cotlab_core::toylm::generate_grammar_corpus(&GrammarSpec::default()).unwrap();
    let vocab = cotlab_core::toylm::grammar_vocab(&GrammarSpec::default()).unwrap();
    let sample: Vec<TraceRecord> = corpus.finetune.into_iter().take(50).collect();
    let params = ModelParams::<f64>::default();

    let mut qfft = NGramModel::new(vocab.clone(), params).unwrap();
    qfft.finetune(&sample, cotlab_core::toylm::FinetuneMode::Qfft).unwrap();
    let mut mix0 = NGramModel::new(vocab.clone(), params).unwrap();
    mix0.finetune(&sample, cotlab_core::toylm::FinetuneMode::AlphaMix { alpha: 0.0, seed: 3 })
        .unwrap();
    assert_eq!(qfft, mix0);

    let mut sft = NGramModel::new(vocab.clone(), params).unwrap();
    sft.finetune(&sample, cotlab_core::toylm::FinetuneMode::Sft).unwrap();
    let mut mix1 = NGramModel::new(vocab, params).unwrap();
    mix1.finetune(&sample, cotlab_core::toylm::FinetuneMode::AlphaMix { alpha: 1.0, seed: 3 })
        .unwrap();
    assert_eq!(sft, mix1);
}

// After supervised fine-tuning, the first reflective token is strictly more
// probable at a hard prompt than after question-free fine-tuning on the
// same data and weight.
#[test]
fn sft_and_qfft_diverge_on_hard_prompts() {
    let spec = GrammarSpec::default();
    let corpus = cotlab_core::toylm::generate_grammar_corpus(&spec).unwrap();
    let vocab = cotlab_core::toylm::grammar_vocab(&spec).unwrap();
    let params = ModelParams::<f64>::default();
    let base_sequences: Vec<Vec<u32>> = corpus
        .pretrain
        .iter()
        .map(|r| cotlab_core::toylm::sft_sequence(&vocab, r).unwrap())
        .collect();

    let mut sft = NGramModel::new(vocab.clone(), params).unwrap();
    sft.train_counts(&base_sequences, Layer::Base).unwrap();
    sft.finetune(&corpus.finetune, cotlab_core::toylm::FinetuneMode::Sft).unwrap();

    let mut qfft = NGramModel::new(vocab.clone(), params).unwrap();
    qfft.train_counts(&base_sequences, Layer::Base).unwrap();
    qfft.finetune(&corpus.finetune, cotlab_core::toylm::FinetuneMode::Qfft).unwrap();

    let wait_id = vocab.id("wait").unwrap() as usize;
    for hard in corpus.finetune.iter().step_by(397) {
        let prompt = cotlab_core::toylm::prompt_sequence(&vocab, &hard.question).unwrap();
        let p_sft = sft.next_token_dist(&prompt)[wait_id];
        let p_qfft = qfft.next_token_dist(&prompt)[wait_id];
        assert!(
            p_sft > p_qfft,
            "P(marker | hard prompt) should rise under supervised tuning: {p_sft} vs {p_qfft}"
        );
    }
}
