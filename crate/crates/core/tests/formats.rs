//! Round-trip properties of every interchange format.

use std::sync::Arc;

use chrono::{DateTime, Utc};
use proptest::prelude::*;
use retouch_core::agent::{MemoryBank, MemoryRecord, SceneTags, Scope};
use retouch_core::instruction::{format, is_reserved, parse, parse_bytes, Action, Instruction, Magnitude, StrongInstruction, Target};
use retouch_core::{Attribute, AttributeVector, ParameterMap, SegmentationMap};

fn compact(labels: Vec<u32>) -> (Vec<u32>, usize) {
    let mut remap = std::collections::HashMap::new();
    let out = labels
        .into_iter()
        .map(|l| {
            let next = remap.len() as u32;
            *remap.entry(l).or_insert(next)
        })
        .collect();
    (out, remap.len())
}

fn arb_seg() -> impl Strategy<Value = SegmentationMap> {
    (1u32..20, 1u32..20, 1u32..6)
        .prop_flat_map(|(w, h, k)| (Just(w), Just(h), prop::collection::vec(0..k, (w * h) as usize)))
        .prop_map(|(w, h, raw)| {
            let (labels, n) = compact(raw);
            let names = (0..n).map(|i| format!("region_{i}")).collect();
            SegmentationMap::from_labels(w, h, labels, names).unwrap()
        })
}

fn arb_scores() -> impl Strategy<Value = AttributeVector> {
    prop::array::uniform4(-1.0f64..=1.0).prop_map(AttributeVector::from_array)
}

fn arb_pmap() -> impl Strategy<Value = ParameterMap> {
    arb_seg().prop_flat_map(|seg| {
        let n = seg.region_count();
        (Just(seg), prop::collection::vec(arb_scores(), n))
            .prop_map(|(seg, scores)| ParameterMap::new(Arc::new(seg), scores).unwrap())
    })
}

fn arb_label() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_-]{0,9}".prop_filter("reserved", |s| !is_reserved(s) && s != "a")
}

fn arb_record() -> impl Strategy<Value = MemoryRecord> {
    (
        0i64..4_000_000_000,
        0u32..1_000_000_000,
        prop::collection::btree_set("[a-z]{1,8}", 1..5),
        arb_scores(),
        prop::option::of(arb_label()),
    )
        .prop_map(|(secs, nanos, tags, scores, region)| MemoryRecord {
            ts: DateTime::<Utc>::from_timestamp(secs, nanos).unwrap(),
            tags: SceneTags::new(tags).unwrap(),
            scores,
            scope: region.map_or(Scope::Global, Scope::Region),
        })
}

fn arb_instruction() -> impl Strategy<Value = Instruction> {
    let target = prop_oneof![Just(Target::Global), arb_label().prop_map(Target::Region)];
    let attribute = prop::sample::select(Attribute::ALL.to_vec());
    let magnitude = prop::sample::select(Magnitude::ALL.to_vec());
    let action = prop_oneof![
        magnitude.clone().prop_map(Action::Increase),
        magnitude.prop_map(Action::Decrease),
        (-1.0f64..=1.0).prop_map(Action::Set),
        prop::sample::select(vec![-1.0, 0.0, 1.0, 0.5, -0.25]).prop_map(Action::Set),
    ];
    prop_oneof![
        1 => Just(Instruction::Weak),
        6 => (target, attribute, action).prop_map(|(target, attribute, action)| {
            Instruction::Strong(StrongInstruction { target, attribute, action })
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn segmentation_rle_round_trips(seg in arb_seg()) {
        let text = seg.to_json();
        let back = SegmentationMap::from_json(&text).unwrap();
        prop_assert_eq!(&back, &seg);
        prop_assert_eq!(back.to_json(), text);
        let total: u64 = seg.regions().iter().map(|r| r.area).sum();
        prop_assert_eq!(total, u64::from(seg.width()) * u64::from(seg.height()));
    }

    #[test]
    fn pmap_round_trips(pm in arb_pmap()) {
        let text = pm.to_json();
        let back = ParameterMap::from_json(&text).unwrap();
        prop_assert_eq!(&back, &pm);
        for (a, b) in back.scores().iter().zip(pm.scores()) {
            for (x, y) in a.to_array().iter().zip(b.to_array()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        prop_assert_eq!(back.to_json(), text);
    }

    #[test]
    fn memory_line_round_trips(rec in arb_record()) {
        let line = rec.to_line();
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(MemoryRecord::from_line(&line).unwrap(), rec);
    }

    #[test]
    fn dsl_format_parse_round_trips(instr in arb_instruction()) {
        let text = format(&instr);
        prop_assert_eq!(parse(&text).unwrap(), instr);
    }

    #[test]
    fn dsl_parse_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..48)) {
        if let Ok(instr) = parse_bytes(&bytes) {
            prop_assert_eq!(parse(&format(&instr)).unwrap(), instr);
        }
    }

    #[test]
    fn dsl_parse_never_panics_on_wordy_text(text in "[a-zA-Z0-9 .!+-]{0,40}") {
        if let Ok(instr) = parse(&text) {
            prop_assert_eq!(parse(&format(&instr)).unwrap(), instr);
        }
    }

    #[test]
    fn segmentation_decoder_never_panics(text in ".{0,80}") {
        let _ = SegmentationMap::from_json(&text);
        let _ = ParameterMap::from_json(&text);
        let _ = MemoryRecord::from_line(&text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn memory_file_reload_is_exact(records in prop::collection::vec(arb_record(), 0..12)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let mut bank = MemoryBank::open(&path).unwrap();
        for r in records {
            bank.append(r).unwrap();
        }
        let reloaded = MemoryBank::open(&path).unwrap();
        prop_assert_eq!(reloaded.records(), bank.records());
        for pair in bank.records().windows(2) {
            prop_assert!(pair[0].ts <= pair[1].ts);
        }
    }

    #[test]
    fn truncated_memory_file_reloads_a_prefix(
        records in prop::collection::vec(arb_record(), 1..8),
        cut in 0.0f64..1.0,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let mut bank = MemoryBank::open(&path).unwrap();
        for r in records {
            bank.append(r).unwrap();
        }
        let bytes = std::fs::read(&path).unwrap();
        let keep = (bytes.len() as f64 * cut) as usize;
        std::fs::write(&path, &bytes[..keep]).unwrap();
        let reloaded = MemoryBank::open(&path).unwrap();
        let n = reloaded.len();
        prop_assert_eq!(reloaded.records(), &bank.records()[..n]);
    }
}

#[test]
fn invalid_segmentations_are_rejected() {
    let cases = [
        r#"{"width":2,"height":1,"regions":[{"id":0,"label":"a","rle":[[0,1]]}]}"#,
        r#"{"width":2,"height":1,"regions":[{"id":0,"label":"a","rle":[[0,2]]},{"id":1,"label":"b","rle":[[1,1]]}]}"#,
        r#"{"width":2,"height":1,"regions":[{"id":1,"label":"a","rle":[[0,2]]}]}"#,
        r#"{"width":2,"height":1,"regions":[{"id":0,"label":"a","rle":[[0,3]]}]}"#,
        r#"{"width":2,"height":1,"regions":[{"id":0,"label":"a","rle":[[0,2]]}],"extra":1}"#,
    ];
    for text in cases {
        assert!(SegmentationMap::from_json(text).is_err(), "{text}");
    }
}
