//! End-to-end MFCCs against the naive definition-level implementation.

mod common;

use common::{max_relative_gap, naive_mfcc, random_clip};
use emoaugnet::audio_io::{AudioClip, CANONICAL_LEN, CANONICAL_RATE};
use emoaugnet::features::{FeatureConfig, mfcc};

#[test]
fn random_canonical_clips_match_the_naive_pipeline() {
    let cfg = FeatureConfig::default();
    for seed in 0..20u64 {
        let samples = random_clip(1000 + seed, CANONICAL_LEN, CANONICAL_RATE);
        let fast = mfcc(&AudioClip::new(samples.clone(), CANONICAL_RATE), &cfg).unwrap();
        let slow = naive_mfcc(&samples, CANONICAL_RATE);
        assert_eq!(fast.len(), 20);
        assert_eq!(fast[0].len(), 108);
        let gap = max_relative_gap(&fast, &slow);
        assert!(gap < 1e-6, "clip {seed}: relative gap {gap:e}");
    }
}

#[test]
fn oracle_agrees_on_a_clip_with_silent_stretches() {
    let mut samples = random_clip(7, CANONICAL_LEN, CANONICAL_RATE);
    samples[10_000..30_000].iter_mut().for_each(|v| *v = 0.0);
    let fast = mfcc(&AudioClip::new(samples.clone(), CANONICAL_RATE), &FeatureConfig::default()).unwrap();
    let gap = max_relative_gap(&fast, &naive_mfcc(&samples, CANONICAL_RATE));
    assert!(gap < 1e-6, "relative gap {gap:e}");
}
