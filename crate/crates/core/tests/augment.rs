//! Augmentation pipeline: geometric and photometric ops against direct
//! evaluations, blur against the analytic kernel, and the sampling contract.

use vtcc::augment::{
    adjust_brightness, augment_view, blur_kernel_size, color_jitter, eval_view, gaussian_blur, grayscale, hflip,
    normalize, random_resized_crop, resize, sample_crop, view_pair, view_rng, AugmentationSpec,
};
use vtcc::image::Image;
use vtcc::rng::SeededRng;

fn noise_image(channels: usize, side: usize, seed: u64) -> Image {
    let mut rng = SeededRng::new(seed);
    let n = channels * side * side;
    Image::new(channels, side, side, (0..n).map(|_| rng.uniform() as f32).collect()).unwrap()
}

#[test]
fn output_shape_and_range_hold_for_any_seed() {
    let spec = AugmentationSpec {
        output_side: 24,
        ..Default::default()
    };
    for seed in 0..40 {
        let side = 16 + (seed as usize % 5) * 7;
        let img = noise_image(3, side, seed);
        for view in 0..2 {
            let (v, _) = augment_view(&img, &spec, view, &mut view_rng(seed, 0, 0, view));
            assert_eq!((v.channels, v.height, v.width), (3, 24, 24));
            assert!(v.data.iter().all(|p| (0.0..=1.0).contains(p)), "seed {seed}");
        }
    }
}

#[test]
fn identity_crop_is_full_image_resize() {
    let img = noise_image(3, 20, 1);
    let spec = AugmentationSpec {
        crop_scale: (1.0, 1.0),
        crop_ratio: (1.0, 1.0),
        output_side: 13,
        ..Default::default()
    };
    let mut rng = SeededRng::new(5);
    assert_eq!(random_resized_crop(&img, &spec, &mut rng), resize(&img, 13));
}

#[test]
fn crop_rectangle_is_reproducible_and_in_bounds() {
    for seed in 0..200 {
        let a = sample_crop(30, 30, (0.08, 1.0), (0.75, 4.0 / 3.0), &mut SeededRng::new(seed));
        let b = sample_crop(30, 30, (0.08, 1.0), (0.75, 4.0 / 3.0), &mut SeededRng::new(seed));
        assert_eq!(a, b);
        assert!(a.height >= 1 && a.width >= 1);
        assert!(a.top + a.height <= 30 && a.left + a.width <= 30);
    }
}

#[test]
fn flip_maps_column_j_to_mirror_column() {
    let side = 7;
    let data: Vec<f32> = (0..2 * side * side).map(|i| (i % side) as f32 + 100.0 * (i / side) as f32).collect();
    let img = Image::new(2, side, side, data).unwrap();
    let f = hflip(&img);
    for c in 0..2 {
        for y in 0..side {
            for x in 0..side {
                assert_eq!(f.at(c, y, x), img.at(c, y, side - 1 - x));
            }
        }
    }
    assert_eq!(hflip(&f), img);
}

#[test]
fn flip_probability_extremes() {
    let img = noise_image(3, 16, 2);
    let base = AugmentationSpec {
        flip_prob: 0.0,
        ..AugmentationSpec::identity(16)
    };
    let always = AugmentationSpec { flip_prob: 1.0, ..base.clone() };
    for seed in 0..20 {
        let (v, a) = augment_view(&img, &base, 0, &mut SeededRng::new(seed));
        assert!(!a.flipped);
        assert_eq!(v, img);
        let (v, a) = augment_view(&img, &always, 0, &mut SeededRng::new(seed));
        assert!(a.flipped);
        assert_eq!(v, hflip(&img));
    }
}

#[test]
fn photometric_ops_on_constant_images() {
    let img = Image::filled(3, 8, 8, 0.4);
    let bright = adjust_brightness(&img, 1.5);
    assert!(bright.data.iter().all(|&v| (v - 0.6).abs() < 1e-6));
    let g = grayscale(&noise_image(3, 8, 3));
    assert_eq!(g.plane(0), g.plane(1));
    assert_eq!(g.plane(1), g.plane(2));
    let mut rng = SeededRng::new(0);
    assert_eq!(color_jitter(&noise_image(3, 8, 4), [0.0; 4], &mut rng), noise_image(3, 8, 4));
}

#[test]
fn blur_keeps_constants_and_the_mean() {
    let constant = Image::filled(3, 17, 17, 0.3);
    let blurred = gaussian_blur(&constant, 5, 1.3);
    assert!(blurred.data.iter().all(|&v| (v - 0.3).abs() < 1e-6));
    for seed in 0..10 {
        let img = noise_image(3, 32, seed);
        for (size, sigma) in [(3, 0.5), (5, 1.0), (7, 2.0)] {
            let b = gaussian_blur(&img, size, sigma);
            assert!((b.mean() - img.mean()).abs() < 1e-4);
        }
    }
}

#[test]
fn impulse_response_is_the_analytic_gaussian() {
    let side = 21;
    let c = side / 2;
    for (size, sigma) in [(5, 0.7), (7, 1.5), (9, 2.0)] {
        let mut img = Image::filled(1, side, side, 0.0);
        *img.at_mut(0, c, c) = 1.0;
        let out = gaussian_blur(&img, size, sigma);
        let r = (size / 2) as i64;
        let raw: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let z: f64 = raw.iter().sum();
        for y in 0..side {
            for x in 0..side {
                let (dy, dx) = (y as i64 - c as i64, x as i64 - c as i64);
                let want = if dy.abs() <= r && dx.abs() <= r {
                    raw[(dy + r) as usize] * raw[(dx + r) as usize] / (z * z)
                } else {
                    0.0
                };
                assert!((out.at(0, y, x) as f64 - want).abs() < 1e-6, "size {size} at ({y},{x})");
            }
        }
    }
}

#[test]
fn degenerate_spec_gives_equal_views() {
    let img = noise_image(3, 20, 6);
    let spec = AugmentationSpec::identity(20);
    let (a, b) = view_pair(&img, &spec, 1, 0, 0);
    assert_eq!(a, b);
    assert_eq!(a, normalize(&resize(&img, 20), &spec));
    assert_eq!(a, eval_view(&img, &spec));
}

#[test]
fn views_are_deterministic_and_per_sample() {
    let images: Vec<Image> = (0..6).map(|s| noise_image(3, 24, s)).collect();
    let spec = AugmentationSpec {
        output_side: 24,
        ..Default::default()
    };
    let forward: Vec<_> = (0..6).map(|i| view_pair(&images[i], &spec, 9, 3, i as u64)).collect();
    let backward: Vec<_> = (0..6).rev().map(|i| view_pair(&images[i], &spec, 9, 3, i as u64)).collect();
    for i in 0..6 {
        assert_eq!(forward[i], backward[5 - i]);
    }
    assert_ne!(forward[0].0, forward[0].1);
    assert_ne!(view_pair(&images[0], &spec, 9, 4, 0), forward[0]);
}

#[test]
fn blur_fires_per_view_at_the_configured_rate() {
    let img = noise_image(3, 16, 7);
    let spec = AugmentationSpec {
        output_side: 16,
        ..Default::default()
    };
    let trials = 1000;
    let mut counts = [0usize; 2];
    let mut solarized = [0usize; 2];
    for t in 0..trials {
        for view in 0..2 {
            let (_, applied) = augment_view(&img, &spec, view, &mut view_rng(21, 0, t, view));
            counts[view] += applied.blurred as usize;
            solarized[view] += applied.solarized as usize;
        }
    }
    assert_eq!(counts[0], trials as usize);
    let rate = counts[1] as f64 / trials as f64;
    assert!((rate - 0.1).abs() <= 0.03, "view b blur rate {rate}");
    assert_eq!(solarized[0], 0);
    let rate = solarized[1] as f64 / trials as f64;
    assert!((rate - 0.2).abs() <= 0.04, "view b solarize rate {rate}");
}

#[test]
fn blur_kernel_tracks_a_tenth_of_the_side() {
    assert_eq!(blur_kernel_size(32), 5);
    assert_eq!(blur_kernel_size(224), 23);
    assert!((1..300).all(|s| blur_kernel_size(s) % 2 == 1));
}
