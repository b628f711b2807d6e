//! Property tests over the geometric and composition invariants.

use mixpl_core::augment::{
    apply_color_op, apply_pipeline, rand_augment, AffineTransform, AugmentSpace, AugmentSpec,
    ColorOp, Filter,
};
use mixpl_core::dataset::{CategoryId, Detection, ImageId};
use mixpl_core::geom::BBox;
use mixpl_core::pipeline::{filter_by_threshold, pseudo_mixup, pseudo_mosaic};
use mixpl_core::raster::ImageRaster;
use mixpl_core::rng;

use proptest::prelude::*;

fn arb_box() -> impl Strategy<Value = BBox> {
    (0.0f64..500.0, 0.0f64..500.0, 2.0f64..200.0, 2.0f64..200.0)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn arb_detections(max: usize) -> impl Strategy<Value = Vec<Detection>> {
    proptest::collection::vec(
        (arb_box(), 1u32..8, 0.0f64..=1.0).prop_map(|(bbox, c, score)| Detection {
            bbox,
            category: CategoryId(c),
            score,
        }),
        0..max,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let ab = a.iou(&b);
        let ba = b.iou(&a);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((a.iou(&a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clip_is_idempotent(b in arb_box(), w in 50.0f64..600.0, h in 50.0f64..600.0) {
        if let Some(once) = b.clip(w, h) {
            prop_assert_eq!(once.clip(w, h), Some(once));
        }
    }

    #[test]
    fn affine_inverse_round_trips(
        sx in 0.2f64..4.0,
        sy in 0.2f64..4.0,
        shear in -0.3f64..0.3,
        dx in -200.0f64..200.0,
        deg in -30.0f64..30.0,
    ) {
        let t = AffineTransform::rotate_about(deg, 100.0, 80.0)
            .compose(&AffineTransform::shear(shear, 0.0))
            .compose(&AffineTransform::translate(dx, -dx))
            .compose(&AffineTransform::scale(sx, sy));
        let round = t.inverse().unwrap().compose(&t);
        prop_assert!(round.is_identity_within(1e-6), "m = {:?}", round.m);
    }

    #[test]
    fn threshold_filter_monotone(dets in arb_detections(64), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(filter_by_threshold(&dets, hi).len() <= filter_by_threshold(&dets, lo).len());
    }

    #[test]
    fn mixup_conserves_labels(
        la in arb_detections(16),
        lb in arb_detections(16),
        alpha in 0.0f64..=1.0,
        wa in 8u32..64,
        ha in 8u32..64,
        wb in 8u32..64,
        hb in 8u32..64,
    ) {
        let a = ImageRaster::filled(wa, ha, [10, 20, 30]);
        let b = ImageRaster::filled(wb, hb, [90, 80, 70]);
        let (out, labels) = pseudo_mixup((&a, &la), (&b, &lb), alpha).unwrap();
        prop_assert_eq!(labels.len(), la.len() + lb.len());
        prop_assert_eq!(out.width(), wa.max(wb));
        prop_assert_eq!(out.height(), ha.max(hb));
    }

    #[test]
    fn mosaic_conserves_labels_pre_clip(seed in 0u64..1000, long in 40u32..120) {
        let mut r = rng::seeded(seed);
        let mk = |w: u32, h: u32| ImageRaster::filled(w, h, [50, 50, 50]);
        let rasters = [mk(100, 80), mk(90, 100), mk(100, 100), mk(70, 60)];
        let labels: Vec<Vec<Detection>> = (0..4)
            .map(|i| {
                (0..=i)
                    .map(|k| Detection {
                        bbox: BBox::new(5.0 + 10.0 * k as f64, 5.0, 14.0 + 10.0 * k as f64, 25.0)
                            .unwrap(),
                        category: CategoryId(1),
                        score: 0.9,
                    })
                    .collect()
            })
            .collect();
        let inputs: Vec<(&ImageRaster, &[Detection], ImageId)> = (0..4)
            .map(|i| (&rasters[i], labels[i].as_slice(), ImageId(i as u64)))
            .collect();
        let out = pseudo_mosaic(&inputs, (long, long + 20), &mut r, Filter::Nearest).unwrap();
        let total: usize = labels.iter().map(Vec::len).sum();
        prop_assert_eq!(out.labels.len() + out.dropped, total);
    }

    #[test]
    fn color_ops_never_move_boxes(seed in 0u64..500) {
        let mut raster = ImageRaster::filled(40, 30, [0, 0, 0]);
        for y in 0..30 {
            for x in 0..40 {
                raster.set_pixel(x, y, [(x * 6) as u8, (y * 8) as u8, 123]);
            }
        }
        let labels = vec![Detection {
            bbox: BBox::new(3.0, 4.0, 20.0, 25.0).unwrap(),
            category: CategoryId(2),
            score: 0.7,
        }];
        let mut r = rng::seeded(seed);
        let (_, out, t) = rand_augment(&raster, &labels, &mut r, AugmentSpace::Color, Filter::Bilinear);
        prop_assert!(t.is_none());
        prop_assert_eq!(out, labels);
    }

    #[test]
    fn color_ops_preserve_dimensions(mag in 0.1f64..1.9) {
        let raster = ImageRaster::filled(17, 9, [100, 150, 200]);
        for op in ColorOp::ALL {
            let out = apply_color_op(op, mag, &raster);
            prop_assert_eq!((out.width(), out.height()), (17, 9));
        }
    }

    #[test]
    fn pipelines_are_pure_functions_of_seed(seed in 0u64..200, image_id in 0u64..50) {
        let mut raster = ImageRaster::filled(60, 45, [0, 0, 0]);
        for y in 0..45 {
            for x in 0..60 {
                raster.set_pixel(x, y, [(x * 4) as u8, (y * 5) as u8, ((x + y) * 3) as u8]);
            }
        }
        let labels = vec![Detection {
            bbox: BBox::new(10.0, 10.0, 40.0, 35.0).unwrap(),
            category: CategoryId(1),
            score: 0.9,
        }];
        let spec = AugmentSpec {
            seed,
            resize_short: (30, 80),
            resize_long_cap: 100,
            ..AugmentSpec::strong()
        };
        let a = apply_pipeline(&spec, &raster, &labels, &mut spec.stream(image_id, 0));
        let b = apply_pipeline(&spec, &raster, &labels, &mut spec.stream(image_id, 0));
        prop_assert_eq!(a.raster, b.raster);
        prop_assert_eq!(a.labels, b.labels);
        prop_assert_eq!(a.transform.m, b.transform.m);
    }

    #[test]
    fn pad_round_trip_preserves_samples(w in 2u32..32, h in 2u32..32, dw in 0u32..16, dh in 0u32..16, seed in 0u64..100) {
        let mut r = rng::seeded(seed);
        use rand::Rng;
        let mut raster = ImageRaster::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                raster.set_pixel(x, y, [r.random(), r.random(), r.random()]);
            }
        }
        let padded = raster.pad_to(w + dw, h + dh).unwrap();
        prop_assert_eq!(padded.unpad().unwrap(), raster);
    }
}

/// The geometric hull mapping agrees with a brute-force point-grid oracle
/// (non-proptest version lives in the acceptance suite with 10^3 cases).
#[test]
fn split_fraction_count_matches_manifest() {
    // a 1000-image synthetic set at 10% must yield exactly 100 labeled
    // images, the count an independent manifest of the split would show
    let spec = mixpl_core::synthetic::SyntheticSpec {
        num_images: 1000,
        ..Default::default()
    };
    let idx = spec.generate().unwrap();
    let (labeled, unlabeled) = mixpl_core::coco::split_dataset(&idx, 0.1, 9).unwrap();
    assert_eq!(labeled.len(), 100);
    assert_eq!(unlabeled.len(), 900);
}
