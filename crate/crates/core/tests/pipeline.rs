//! End-to-end behavior of rendering, augmentation and the agent loop.

use std::sync::Arc;

use retouch_core::agent::{Agent, AgentConfig, MemoryBank};
use retouch_core::augment::{prepare_dataset, semantic_replace_traced, AugmentConfig, TrainingPair};
use retouch_core::instruction::{parse, Instruction};
use retouch_core::parammap::{build_map, set_region_score};
use retouch_core::retouch::{render, render_detailed, solve_strength, TransferConfig};
use retouch_core::rng;
use retouch_core::scoring::score_region;
use retouch_core::{Attribute, AttributeVector, Image, SegmentationMap};

fn textured(w: u32, h: u32, base: [u8; 3]) -> Image {
    Image::from_fn(w, h, |x, y| {
        let n = ((x * 7 + y * 13) % 41) as i32 - 20;
        base.map(|c| (c as i32 + n * 2).clamp(0, 255) as u8)
    })
    .unwrap()
}

/// Independent per-channel noise around `base`, so every score sits mid-range.
fn mottled(w: u32, h: u32, base: [u8; 3], spread: i32) -> Image {
    Image::from_fn(w, h, |x, y| {
        let mut out = [0u8; 3];
        for (c, v) in out.iter_mut().enumerate() {
            let hsh = (x.wrapping_mul(73_856_093) ^ y.wrapping_mul(19_349_663) ^ (c as u32).wrapping_mul(83_492_791))
                .wrapping_mul(2_654_435_761);
            let n = (hsh >> 24) as i32 - 128;
            *v = (base[c] as i32 + n * spread / 128).clamp(0, 255) as u8;
        }
        out
    })
    .unwrap()
}

fn halves(w: u32, h: u32) -> Arc<SegmentationMap> {
    let labels = (0..h).flat_map(|_| (0..w).map(move |x| u32::from(x >= w / 2))).collect();
    Arc::new(SegmentationMap::from_labels(w, h, labels, vec!["left".into(), "right".into()]).unwrap())
}

#[test]
fn closed_loop_targets_within_tolerance() {
    let img = mottled(48, 48, [128, 128, 128], 60);
    let seg = Arc::new(SegmentationMap::single(48, 48, "all").unwrap());
    let cfg = TransferConfig::default();
    let measured = score_region(&img, &seg, 0);
    assert!(measured.to_array().iter().all(|v| v.abs() < 0.6), "{measured:?}");
    for attr in Attribute::ALL {
        for off in [-0.3, -0.15, 0.0, 0.15, 0.3] {
            let target = measured.get(attr) + off;
            let sol = solve_strength(&img, &seg, 0, attr, target, &cfg).unwrap();
            assert!(!sol.saturated, "{attr} {off}");
            let pm = set_region_score(&build_map(&img, seg.clone()).unwrap(), 0, attr, target).unwrap();
            let out = render(&img, &pm, &cfg).unwrap();
            let got = score_region(&out, &seg, 0).get(attr);
            assert!((got - target).abs() <= 0.05, "{attr} {off}: {got} vs {target}");
        }
    }
}

#[test]
fn edits_stay_inside_their_region() {
    let (w, h) = (64, 32);
    let img = textured(w, h, [120, 125, 118]);
    let seg = halves(w, h);
    let cfg = TransferConfig::default();
    let sigma = cfg.feather_sigma_for(w, h);
    let base = build_map(&img, seg.clone()).unwrap();
    for attr in Attribute::ALL {
        let v = base.get(0, attr).unwrap();
        let pm = set_region_score(&base, 0, attr, (v + 0.3).clamp(-1.0, 1.0)).unwrap();
        let report = render_detailed(&img, &pm, &cfg).unwrap();
        let boundary = (w / 2) as f64;
        for y in 0..h {
            for x in 0..w {
                if (x as f64) > boundary + 4.0 * sigma {
                    let (a, b) = (img.get(x, y), report.image.get(x, y));
                    for c in 0..3 {
                        assert!(a[c].abs_diff(b[c]) <= 1, "{attr} at ({x},{y})");
                    }
                }
            }
        }
    }
}

#[test]
fn full_replacement_copies_the_donor() {
    let cfg = TransferConfig::default();
    let seg = Arc::new(SegmentationMap::single(32, 32, "all").unwrap());
    let a = TrainingPair::from_input(mottled(32, 32, [120, 125, 130], 70), seg.clone(), &cfg).unwrap();
    // donor differs from the source in brightness only
    let target_b = a.map.get(0, Attribute::Brightness).unwrap() + 0.3;
    let donor_map = set_region_score(&a.map, 0, Attribute::Brightness, target_b).unwrap();
    let b = TrainingPair {
        input: a.input.clone(),
        target: render(&a.input, &donor_map, &cfg).unwrap(),
        map: donor_map,
    };
    let aug = AugmentConfig {
        replacement_probability: 1.0,
        ..AugmentConfig::default()
    };
    let (out, rec) = semantic_replace_traced(&a, std::slice::from_ref(&b), &aug, &mut rng::seeded(5)).unwrap();
    let rec = rec.expect("replacement happens at probability 1");
    assert_eq!(out.map.scores()[0], b.map.scores()[0]);
    assert_eq!(rec.scores, b.map.scores()[0]);
    let rescored = score_region(&out.target, out.map.seg(), 0);
    assert!((rescored.brightness - target_b).abs() <= 0.05, "{} vs {target_b}", rescored.brightness);
}

fn sample_inputs() -> Vec<(Image, SegmentationMap)> {
    (0..5)
        .map(|i| {
            let img = textured(24, 20, [60 + 30 * i as u8, 140 - 10 * i as u8, 90 + 20 * i as u8]);
            let seg = halves(24, 20).as_ref().clone();
            (img, seg)
        })
        .collect()
}

#[test]
fn dataset_is_deterministic_and_thread_independent() {
    let inputs = sample_inputs();
    let cfg = AugmentConfig {
        replacement_probability: 0.6,
        seed: 99,
        ..AugmentConfig::default()
    };
    let a = prepare_dataset(&inputs, &cfg).unwrap();
    let b = prepare_dataset(&inputs, &cfg).unwrap();
    assert_eq!(a.pairs, b.pairs);
    assert_eq!(a.perturbed, b.perturbed);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| prepare_dataset(&inputs, &cfg).unwrap());
    assert_eq!(a.pairs, c.pairs);
    assert_eq!(a.perturbed, c.perturbed);
    assert_eq!(a.replacements, c.replacements);
    assert!(a.replacements.iter().any(Option::is_some));
}

#[test]
fn disabled_augmentation_reproduces_plain_targets() {
    let inputs = sample_inputs();
    let cfg = AugmentConfig {
        replacement_probability: 0.0,
        jitter_amplitude: 0.0,
        blur_sigma_range: [0.0, 0.0],
        ..AugmentConfig::default()
    };
    let d = prepare_dataset(&inputs, &cfg).unwrap();
    for ((img, seg), pair) in inputs.iter().zip(&d.pairs) {
        let pm = build_map(img, Arc::new(seg.clone())).unwrap();
        assert_eq!(pair.map, pm);
        assert_eq!(pair.target, render(img, &pm, &cfg.transfer).unwrap());
    }
}

#[test]
fn rethinking_error_does_not_grow() {
    let agent = Agent::new(AgentConfig::default()).unwrap();
    let img = textured(40, 40, [100, 100, 100]);
    let seg = halves(40, 40);
    let bank = MemoryBank::in_memory();
    for text in [
        "increase right brightness significantly",
        "decrease left contrast significantly",
        "increase global temperature moderately",
        "decrease right colorfulness slightly",
    ] {
        let Instruction::Strong(instr) = parse(text).unwrap() else { unreachable!() };
        let out = agent.strong_edit(&img, seg.clone(), &bank, &instr, None).unwrap();
        for w in out.error_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{text}: {:?}", out.error_trace);
        }
        assert!(out.rounds <= 8);
        // the returned map reproduces the returned image
        assert_eq!(agent.generator().render(&img, &out.map).unwrap(), out.image);
    }
}

#[test]
fn memory_preference_shifts_weak_edits() {
    let agent = Agent::new(AgentConfig::default()).unwrap();
    let img = textured(32, 32, [110, 110, 110]);
    let seg = halves(32, 32);
    let mut bank = MemoryBank::in_memory();
    let measured = build_map(&img, seg.clone()).unwrap();
    let brighter = measured
        .scores()
        .iter()
        .map(|v| AttributeVector { brightness: v.brightness + 0.3, ..*v })
        .collect();
    let edited = retouch_core::ParameterMap::new(seg.clone(), brighter).unwrap();
    let tags = agent.scene_tags(&img, &[]);
    retouch_core::agent::confirm(&mut bank, &tags, &edited, &measured, &retouch_core::agent::Scope::Global).unwrap();
    let weak = agent.weak_edit(&img, seg, &bank, &[]).unwrap();
    let before = retouch_core::scoring::score_image(&img).brightness;
    let after = retouch_core::scoring::score_image(&weak.image).brightness;
    assert!((after - before - 0.3).abs() <= 0.05, "{before} -> {after}");
}
