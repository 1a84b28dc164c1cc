use std::time::Instant;

use egohoi_core::dataset::{replay, synth_corpus, SynthParams};

#[test]
fn real_time_replay_paces_at_fps() {
    let dir = tempfile::tempdir().unwrap();
    let p = SynthParams { videos: 1, frames_per_video: 301, contacts_per_video: 3, ..Default::default() };
    let c = synth_corpus(&p, 1, dir.path()).unwrap();
    let mut stamps = Vec::with_capacity(301);
    for f in replay(&c, "v000", 1.0).unwrap() {
        f.unwrap();
        stamps.push(Instant::now());
    }
    assert_eq!(stamps.len(), 301);
    let expected = 1.0 / 30.0;
    let gaps: Vec<f64> = stamps.windows(2).map(|w| (w[1] - w[0]).as_secs_f64()).collect();
    for (i, g) in gaps.iter().enumerate() {
        assert!((g - expected).abs() <= 0.2 * expected, "gap {i} was {g}");
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!((mean - expected).abs() <= 0.02 * expected, "mean gap {mean}");
}
