#![allow(dead_code)]

use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use retouch_core::{Image, SegmentationMap};

/// Independent per-channel hash noise around `base`.
pub fn mottled(w: u32, h: u32, base: [u8; 3], spread: i32, salt: u32) -> Image {
    Image::from_fn(w, h, |x, y| {
        let mut out = [0u8; 3];
        for (c, v) in out.iter_mut().enumerate() {
            let hsh = (x.wrapping_mul(73_856_093)
                ^ y.wrapping_mul(19_349_663)
                ^ (c as u32 + 3 * salt).wrapping_mul(83_492_791))
            .wrapping_mul(2_654_435_761);
            let n = (hsh >> 24) as i32 - 128;
            *v = (base[c] as i32 + n * spread / 128).clamp(0, 255) as u8;
        }
        out
    })
    .unwrap()
}

pub fn halves(w: u32, h: u32, left: &str, right: &str) -> SegmentationMap {
    let labels = (0..h).flat_map(|_| (0..w).map(move |x| u32::from(x >= w / 2))).collect();
    SegmentationMap::from_labels(w, h, labels, vec![left.into(), right.into()]).unwrap()
}

pub fn b64_png(img: &Image) -> String {
    B64.encode(img.encode_png().unwrap())
}

pub fn decode_b64_png(text: &str) -> Image {
    Image::decode(&B64.decode(text).unwrap()).unwrap()
}

/// Writes `<stem>.png` and `<stem>.mask.json` under `dir`.
pub fn write_pair(dir: &Path, stem: &str, img: &Image, seg: &SegmentationMap) -> (PathBuf, PathBuf) {
    let image = dir.join(format!("{stem}.png"));
    let mask = dir.join(format!("{stem}.mask.json"));
    img.save_png(&image).unwrap();
    std::fs::write(&mask, seg.to_json()).unwrap();
    (image, mask)
}

/// Sorted (relative path, bytes) listing of every file under `root`.
pub fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}
