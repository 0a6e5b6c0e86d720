//! Scorers against direct per-pixel reference implementations.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use retouch_core::scoring::{score_brightness, score_colorfulness, score_contrast, score_temperature};
use retouch_core::{Image, SegmentationMap};

fn pixels_of(img: &Image, seg: &SegmentationMap, region: u32) -> Vec<[f64; 3]> {
    seg.labels()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == region)
        .map(|(i, _)| img.pixel(i).map(f64::from))
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pstd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn luma(p: &[f64; 3]) -> f64 {
    (0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2]) / 255.0
}

fn ref_brightness(px: &[[f64; 3]]) -> f64 {
    let l: Vec<f64> = px.iter().map(luma).collect();
    (2.0 * mean(&l) - 1.0).clamp(-1.0, 1.0)
}

fn ref_contrast(px: &[[f64; 3]]) -> f64 {
    let l: Vec<f64> = px.iter().map(luma).collect();
    2.0 * (pstd(&l) / 0.30).min(1.0) - 1.0
}

fn ref_colorfulness(px: &[[f64; 3]]) -> f64 {
    let rg: Vec<f64> = px.iter().map(|p| p[0] - p[1]).collect();
    let yb: Vec<f64> = px.iter().map(|p| 0.5 * (p[0] + p[1]) - p[2]).collect();
    let m = (pstd(&rg).powi(2) + pstd(&yb).powi(2)).sqrt() + 0.3 * (mean(&rg).powi(2) + mean(&yb).powi(2)).sqrt();
    2.0 * (m / 109.0).min(1.0) - 1.0
}

fn ref_temperature(px: &[[f64; 3]]) -> f64 {
    let d: Vec<f64> = px.iter().map(|p| p[0] - p[2]).collect();
    (mean(&d) / 128.0).clamp(-1.0, 1.0)
}

fn random_case(rng: &mut SplitMix64) -> (Image, SegmentationMap) {
    let palette_size = rng.random_range(1..=256);
    let palette: Vec<[u8; 3]> = (0..palette_size).map(|_| rng.random()).collect();
    let img = Image::from_fn(16, 16, |_, _| palette[rng.random_range(0..palette.len())]).unwrap();
    // two regions split at a random column so both are non-empty
    let split = rng.random_range(1..16);
    let labels = (0..16).flat_map(|_| (0..16).map(move |x| u32::from(x >= split))).collect();
    let seg = SegmentationMap::from_labels(16, 16, labels, vec!["left".into(), "right".into()]).unwrap();
    (img, seg)
}

#[test]
fn scorers_match_reference_on_random_regions() {
    let mut rng = SplitMix64::seed_from_u64(0x0005_c04e);
    for case in 0..50 {
        let (img, seg) = random_case(&mut rng);
        for region in 0..2 {
            let px = pixels_of(&img, &seg, region);
            let checks = [
                ("brightness", score_brightness(&img, &seg, region), ref_brightness(&px)),
                ("contrast", score_contrast(&img, &seg, region), ref_contrast(&px)),
                ("colorfulness", score_colorfulness(&img, &seg, region), ref_colorfulness(&px)),
                ("temperature", score_temperature(&img, &seg, region), ref_temperature(&px)),
            ];
            for (name, got, want) in checks {
                assert!((got - want).abs() <= 1e-9, "case {case} region {region} {name}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn constant_regions_hit_closed_forms() {
    let seg = SegmentationMap::single(16, 16, "all").unwrap();
    let gray = Image::filled(16, 16, [128, 128, 128]).unwrap();
    assert!((score_brightness(&gray, &seg, 0) - (2.0 * 128.0 / 255.0 - 1.0)).abs() < 1e-12);
    assert_eq!(score_contrast(&gray, &seg, 0), -1.0);
    assert_eq!(score_colorfulness(&gray, &seg, 0), -1.0);
    assert_eq!(score_temperature(&gray, &seg, 0), 0.0);

    let checker = Image::from_fn(16, 16, |x, y| if (x + y) % 2 == 0 { [0; 3] } else { [255; 3] }).unwrap();
    assert_eq!(score_contrast(&checker, &seg, 0), 1.0);
    assert!(score_brightness(&checker, &seg, 0).abs() < 1e-12);
}
