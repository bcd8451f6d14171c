use tamperlens::matching::{good_match_count, hamming, MatchParams};
use tamperlens::orb::{describe, keypoint_orientation, OrbExtractor, OrbParams, SamplingPattern};
use tamperlens::synth::{gaussian_blur, rotate_image, textured_fixture};
use tamperlens::GrayImage;

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Square fixture with odd side, so the rotation centre is a pixel centre.
fn square_fixture(side: usize, seed: u64) -> GrayImage {
    textured_fixture(side, side, seed)
}

// rotate_image turns content counter-clockwise on screen, which is clockwise
// in the y-down coordinates the orientation is measured in, so a feature's
// angle moves by -θ.
#[test]
fn orientation_follows_rotation() {
    let params = OrbParams::default();
    let radius = params.patch_size / 2;
    for seed in [1, 2, 3] {
        let img = square_fixture(161, seed);
        let original = keypoint_orientation(&img, 80, 80, radius);
        for theta in [30.0, 90.0, 150.0] {
            let rotated = rotate_image(&img, theta);
            let got = keypoint_orientation(&rotated, 80, 80, radius);
            let err = angle_diff(got, original - theta);
            assert!(
                err < 10.0,
                "seed {seed} θ={theta}: {got} vs {original} - θ (err {err})"
            );
        }
    }
}

#[test]
fn steered_descriptor_survives_rotation() {
    let params = OrbParams::default();
    let pattern = SamplingPattern::generate(params.patch_size, params.pattern_seed);
    let radius = params.patch_size / 2;
    let img = square_fixture(161, 7);
    let rotated = rotate_image(&img, 30.0);
    let a0 = keypoint_orientation(&img, 80, 80, radius);
    let a1 = keypoint_orientation(&rotated, 80, 80, radius);
    let d0 = describe(&img, 80, 80, a0, &pattern).unwrap();
    let d1 = describe(&rotated, 80, 80, a1, &pattern).unwrap();
    let unsteered = describe(&rotated, 80, 80, a0, &pattern).unwrap();
    assert!(
        hamming(&d0, &d1) < 64,
        "steered distance {}",
        hamming(&d0, &d1)
    );
    assert!(hamming(&d0, &d1) < hamming(&d0, &unsteered));
}

#[test]
fn descriptor_is_translation_invariant() {
    let params = OrbParams::default();
    let pattern = SamplingPattern::generate(params.patch_size, params.pattern_seed);
    let img = textured_fixture(120, 100, 11);
    let (dx, dy) = (37, 45);
    let shifted = GrayImage::from_fn(img.width() + dx, img.height() + dy, |x, y| {
        if x >= dx && y >= dy {
            img.get(x - dx, y - dy)
        } else {
            0
        }
    });
    for (x, y) in [(40, 40), (60, 50), (75, 60)] {
        let angle = keypoint_orientation(&img, x, y, 15);
        assert_eq!(angle, keypoint_orientation(&shifted, x + dx, y + dy, 15));
        assert_eq!(
            describe(&img, x, y, angle, &pattern),
            describe(&shifted, x + dx, y + dy, angle, &pattern)
        );
    }
}

#[test]
fn quarter_turn_keeps_enough_matches() {
    let extractor = OrbExtractor::new(OrbParams::default()).unwrap();
    let img = textured_fixture(240, 240, 2024);
    let a = extractor.extract(&img);
    let b = extractor.extract(&rotate_image(&img, 90.0));
    let good = good_match_count(&b, &a, &MatchParams::default());
    assert!(good >= 20, "only {good} good matches");
}

#[test]
fn blurring_reduces_matches() {
    let extractor = OrbExtractor::new(OrbParams::default()).unwrap();
    let img = textured_fixture(320, 240, 2024);
    let f = extractor.extract(&img);
    let blurred = extractor.extract(&gaussian_blur(&img, 4.0).unwrap());
    let params = MatchParams::default();
    assert!(good_match_count(&blurred, &f, &params) < good_match_count(&f, &f, &params));
}

#[test]
fn extraction_is_bounded_and_deterministic() {
    let params = OrbParams::default();
    let extractor = OrbExtractor::new(params).unwrap();
    let img = textured_fixture(320, 240, 5);
    let f = extractor.extract(&img);
    assert!(!f.is_empty() && f.len() <= params.max_features);
    for kp in f.iter().map(|f| f.keypoint) {
        assert!(kp.x >= 0.0 && kp.x < 320.0 && kp.y >= 0.0 && kp.y < 240.0);
        assert!((0.0..360.0).contains(&kp.angle_deg));
    }
    assert_eq!(f, extractor.extract(&img));
    assert!(extractor
        .extract(&GrayImage::filled(320, 240, 90))
        .is_empty());
}
