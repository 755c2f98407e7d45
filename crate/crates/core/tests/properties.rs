mod common;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use softctc::cn::{build_cn, count_variant_paths, prepare_target};
use softctc::compile::compile_nbest;
use softctc::decoder::{decode_to_cn, greedy_decode, segment_line, Strategy as Decode};
use softctc::oracle::enumerate_cn_strings;
use softctc::{
    compile_cn, soft_ctc, CompiledTarget, ConfusionNetwork, ConfusionSet, DecodeConfig, Labeling, NBestList,
};

fn seeded() -> impl Strategy<Value = u64> {
    any::<u64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn compiled_targets_are_well_formed(seed in seeded()) {
        let mut rng = rng(seed);
        let cn = random_cn(&mut rng, 6, 4, 8);
        let t: CompiledTarget = compile_cn(&cn, BLANK).unwrap();
        t.check_structure().unwrap();
    }

    #[test]
    fn likelihood_is_a_probability(seed in seeded()) {
        let mut rng = rng(seed);
        let width = rng.gen_range(2..=6);
        let frames = rng.gen_range(1..=15);
        let y = random_posteriors(&mut rng, frames, width);
        let target = compile_cn(&random_cn(&mut rng, 5, 3, width), BLANK).unwrap();
        if let Ok(r) = soft_ctc(&y, &target) {
            prop_assert!(r.loss >= -1e-12);
        }
    }

    // p is linear in each row, so Σ_k y_t(k) ∂(-ln p)/∂y_t(k) = -1 at every frame.
    #[test]
    fn gradient_satisfies_euler_identity(seed in seeded()) {
        let mut rng = rng(seed);
        let width = rng.gen_range(2..=6);
        let frames = rng.gen_range(1..=15);
        let y = random_posteriors(&mut rng, frames, width);
        let target = compile_cn(&random_cn(&mut rng, 5, 3, width), BLANK).unwrap();
        if let Ok(r) = soft_ctc(&y, &target) {
            for t in 0..frames {
                let s: f64 = y.row(t).iter().zip(r.grad_row(t)).map(|(a, b)| a * b).sum();
                prop_assert!((s + 1.0).abs() < 1e-10, "frame {}: {}", t, s);
            }
        }
    }

    #[test]
    fn loss_ignores_alternative_order(seed in seeded()) {
        let mut rng = rng(seed);
        let width = rng.gen_range(3..=6);
        let frames = rng.gen_range(1..=12);
        let y = random_posteriors(&mut rng, frames, width);
        let cn = random_cn(&mut rng, 5, 4, width);
        let shuffled = ConfusionNetwork::normalized(
            cn.sets()
                .iter()
                .map(|s| {
                    let mut alts = s.alternatives().to_vec();
                    alts.shuffle(&mut rng);
                    ConfusionSet::new(alts, s.null_prob()).unwrap()
                })
                .collect(),
        )
        .unwrap();
        let a = soft_ctc(&y, &compile_cn(&cn, BLANK).unwrap());
        let b = soft_ctc(&y, &compile_cn(&shuffled, BLANK).unwrap());
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!((a.loss - b.loss).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn nbest_order_does_not_change_the_loss(seed in seeded()) {
        let mut rng = rng(seed);
        let width = rng.gen_range(2..=5);
        let frames = rng.gen_range(1..=10);
        let y = random_posteriors(&mut rng, frames, width);
        let mut entries: Vec<(Labeling, f64)> = Vec::new();
        for _ in 0..6 {
            let l = random_labeling(&mut rng, 4, width);
            if !entries.iter().any(|(e, _)| *e == l) {
                entries.push((l, rng.gen_range(0.05..1.0)));
            }
        }
        let a = soft_ctc(&y, &compile_nbest(&NBestList::new(entries.clone()).unwrap(), BLANK).unwrap());
        entries.reverse();
        let b = soft_ctc(&y, &compile_nbest(&NBestList::new(entries).unwrap(), BLANK).unwrap());
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!((a.loss - b.loss).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn every_hypothesis_is_a_network_path(seed in seeded()) {
        let mut rng = rng(seed);
        let width = rng.gen_range(2..=5);
        let mut entries: Vec<(Labeling, f64)> = Vec::new();
        for _ in 0..5 {
            let l = random_labeling(&mut rng, 5, width);
            if !entries.iter().any(|(e, _)| *e == l) {
                entries.push((l, rng.gen_range(0.05..1.0)));
            }
        }
        let cn = build_cn(&NBestList::new(entries.clone()).unwrap()).unwrap();
        let strings = enumerate_cn_strings(&cn).unwrap();
        for (l, _) in &entries {
            prop_assert!(strings.merged.iter().any(|(s, _)| s == l), "{} missing", l);
        }
        let total: f64 = strings.merged.iter().map(|(_, w)| w).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert_eq!(count_variant_paths(&cn), (strings.paths.len() as u64).into());
    }

    #[test]
    fn greedy_labeling_is_always_representable(seed in seeded(), partial in any::<bool>()) {
        let mut rng = rng(seed);
        let width = rng.gen_range(2..=4);
        let frames = rng.gen_range(1..=8);
        let y = random_posteriors(&mut rng, frames, width);
        let strategy = if partial { Decode::PartialLine } else { Decode::FullLine };
        let cfg = DecodeConfig::new(rng.gen_range(1..=4), 0.99, strategy).unwrap();
        let cn = decode_to_cn(&y, BLANK, &cfg).unwrap();
        let greedy = greedy_decode(&y, BLANK);
        let strings = enumerate_cn_strings(&cn).unwrap();
        prop_assert!(strings.merged.iter().any(|(s, _)| *s == greedy));
    }

    #[test]
    fn segments_partition_the_line(seed in seeded()) {
        let mut rng = rng(seed);
        let width = rng.gen_range(2..=5);
        let frames = rng.gen_range(1..=40);
        // mix of peaked and flat frames
        let mut rows = Vec::new();
        for _ in 0..frames {
            let mut r = vec![0.001 / (width - 1) as f64; width];
            if rng.gen_bool(0.7) {
                r[rng.gen_range(0..width)] = 0.999;
            } else {
                r = vec![1.0 / width as f64; width];
            }
            rows.push(r);
        }
        let y = softctc::PosteriorMatrix::from_rows(&rows).unwrap();
        let segs = segment_line(&y, BLANK, 0.99);
        prop_assert_eq!(segs[0].start, 0);
        prop_assert_eq!(segs.last().unwrap().end, frames);
        for w in segs.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert!(w[0].kind != w[1].kind);
        }
    }

    #[test]
    fn pruning_then_smoothing_keeps_networks_normalized(seed in seeded(), n in 1.0f64..8.0) {
        let mut rng = rng(seed);
        let cn = random_cn(&mut rng, 6, 4, 8);
        let out = prepare_target(&cn, Some(0.2), Some(n)).unwrap();
        prop_assert!(out.is_normalized());
        for s in out.sets() {
            prop_assert!((s.total() - 1.0).abs() < 1e-12);
        }
    }
}
