mod common;

use std::path::PathBuf;

use proptest::prelude::*;

use perturbench::buffer::ImageBuffer;
use perturbench::corpus::{load_frame, select_frames, Family, Label, Manifest, ManifestEntry};
use perturbench::detector::{high_frequency_energy, mock_score, parse_scores, BatchItem, DetectorError};
use perturbench::metrics::{evaluate_run, EvalOptions, LabeledScore};
use perturbench::operators::kernel::Kernel1D;
use perturbench::operators::{apply_pipeline, gamma_correct, make_gaussian_kernel, parse_pipeline, Operator, PipelineSpec};
use perturbench::report::{build_table, emit_report, EvalReport, Format, Grouping, OperationInfo, RunMetadata};
use perturbench::runner::cache_key;
use perturbench::seed::stage_rng;

fn image() -> impl Strategy<Value = ImageBuffer> {
    (2usize..20, 2usize..20).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f32..=1.0, w * h * 3).prop_map(move |data| ImageBuffer::from_samples(w, h, data).unwrap())
    })
}

fn operator() -> impl Strategy<Value = Operator> {
    let ks = prop::sample::select(vec![3usize, 5, 7]);
    prop_oneof![
        Just(Operator::Identity),
        (1u32..=100).prop_map(|quality| Operator::Jpeg { quality }),
        ks.clone().prop_map(|ks| Operator::GaussianBlur { ks }),
        ks.clone().prop_map(|ks| Operator::MeanBlur { ks }),
        ks.prop_map(|ks| Operator::MedianBlur { ks }),
        (-0.2f64..0.2, 0.0f64..0.1).prop_map(|(mean, var)| Operator::GaussianNoise { mean, var }),
        (0.1f64..5.0).prop_map(|g| Operator::Gamma { g }),
        (0.5f64..2.0).prop_map(|scale| Operator::Resize { scale }),
    ]
}

fn deterministic_operator() -> impl Strategy<Value = Operator> {
    operator().prop_filter("deterministic", |op| !op.is_stochastic())
}

fn pipeline() -> impl Strategy<Value = PipelineSpec> {
    prop::collection::vec(operator(), 1..4).prop_map(|stages| PipelineSpec::new(stages).unwrap())
}

fn manifest() -> impl Strategy<Value = Manifest> {
    prop::collection::vec((0usize..4, 0u64..12, 0usize..5), 1..30).prop_map(|frames| {
        let families = [Family::Pristine, Family::Deepfake, Family::Faceswap, Family::Face2face, Family::Neuraltextures];
        let mut seen = std::collections::BTreeSet::new();
        let entries = frames
            .into_iter()
            .filter(|(v, i, _)| seen.insert((*v, *i)))
            .map(|(v, i, _)| {
                // a video's family is fixed by its id
                let family = families[v % families.len()];
                ManifestEntry {
                    frame_id: format!("vid{v}_{i}"),
                    video_id: format!("vid{v}"),
                    frame_index: i,
                    label: if family == Family::Pristine { Label::Real } else { Label::Fake },
                    family,
                    path: PathBuf::from(format!("frames/vid{v}/{i:03}.png")),
                }
            })
            .collect();
        Manifest::new(entries).unwrap()
    })
}

fn in_unit_range(img: &ImageBuffer) -> bool {
    img.samples().iter().all(|s| (0.0..=1.0).contains(s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn selection_is_idempotent(m in manifest(), n in 1usize..6) {
        let once = select_frames(&m, n);
        prop_assert_eq!(select_frames(&once, n), once);
    }

    #[test]
    fn manifest_text_is_a_fixed_point(m in manifest()) {
        let text = m.to_csv();
        let parsed = Manifest::parse(&text).unwrap();
        prop_assert_eq!(&parsed, &m);
        prop_assert_eq!(parsed.to_csv(), text);
    }

    #[test]
    fn png_round_trip_keeps_bytes(img in image()) {
        let tmp = tempfile::tempdir().unwrap();
        let entry = ManifestEntry {
            frame_id: "f".into(),
            video_id: "v".into(),
            frame_index: 0,
            label: Label::Real,
            family: Family::Pristine,
            path: "f.png".into(),
        };
        img.write_png(&tmp.path().join("f.png")).unwrap();
        prop_assert_eq!(load_frame(&entry, tmp.path()).unwrap().to_rgb8(), img.to_rgb8());
    }

    #[test]
    fn operators_stay_in_range_and_keep_shape(img in image(), op in operator()) {
        let out = op.apply(&img, || stage_rng(7, "frame", 0)).unwrap();
        prop_assert!(in_unit_range(&out));
        match op {
            Operator::Resize { scale } => {
                prop_assert_eq!(out.width(), ((img.width() as f64 * scale).round() as usize).max(1));
                prop_assert_eq!(out.height(), ((img.height() as f64 * scale).round() as usize).max(1));
            }
            _ => prop_assert_eq!((out.width(), out.height()), (img.width(), img.height())),
        }
    }

    #[test]
    fn pipelines_are_deterministic(img in image(), spec in pipeline(), seed in any::<u64>()) {
        let a = apply_pipeline(&spec, &img, seed, "vid_001").unwrap();
        let b = apply_pipeline(&spec, &img, seed, "vid_001").unwrap();
        prop_assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn pipeline_text_round_trips(spec in pipeline()) {
        let text = spec.to_string();
        let reparsed = parse_pipeline(&text).unwrap();
        prop_assert_eq!(reparsed.to_string(), text);
        prop_assert_eq!(reparsed.stages().len(), spec.stages().len());
    }

    #[test]
    fn composition_applies_stages_in_order(img in image(), a in pipeline(), b in deterministic_operator()) {
        let b = PipelineSpec::new(vec![b]).unwrap();
        let combined = apply_pipeline(&a.then(&b), &img, 3, "f").unwrap();
        let sequential = apply_pipeline(&b, &apply_pipeline(&a, &img, 3, "f").unwrap(), 3, "f").unwrap();
        prop_assert_eq!(combined.samples(), sequential.samples());
    }

    #[test]
    fn gamma_inverts_in_float_domain(img in image(), g in 0.2f64..5.0) {
        let back = gamma_correct(&gamma_correct(&img, g).unwrap(), 1.0 / g).unwrap();
        for (x, y) in img.samples().iter().zip(back.samples()) {
            prop_assert!((x - y).abs() <= 1e-6 || *x < 1e-4, "{} vs {}", x, y);
        }
    }

    #[test]
    fn mock_score_orders_like_energy(a in image(), b in image()) {
        let (ea, eb) = (high_frequency_energy(&a), high_frequency_energy(&b));
        let (sa, sb) = (mock_score(&a), mock_score(&b));
        prop_assert!((0.0..=1.0).contains(&sa));
        if ea < eb {
            prop_assert!(sa <= sb);
        }
    }

    #[test]
    fn scores_parse_to_batch_order_or_fail(
        n in 1usize..12,
        order in Just(()).prop_perturb(|_, mut rng| rng.random::<u64>()),
        drop in prop::option::of(0usize..12),
    ) {
        let batch: Vec<BatchItem> = (0..n).map(|i| BatchItem { frame_id: format!("f{i}"), path: format!("{i}.png").into() }).collect();
        let mut ids: Vec<usize> = (0..n).collect();
        ids.rotate_left((order % n as u64) as usize);
        let dropped = drop.filter(|d| *d < n);
        let stdout: String = ids
            .iter()
            .filter(|i| Some(**i) != dropped)
            .map(|i| format!("{{\"frame_id\":\"f{i}\",\"score\":{}}}\n", *i as f64 / n as f64))
            .collect();
        match (parse_scores(&stdout, &batch), dropped) {
            (Ok(records), None) => {
                prop_assert_eq!(records.len(), n);
                for (i, r) in records.iter().enumerate() {
                    prop_assert_eq!(&r.frame_id, &batch[i].frame_id);
                }
            }
            (Err(DetectorError::Missing { missing, .. }), Some(d)) => prop_assert_eq!(missing, vec![format!("f{d}")]),
            (other, d) => prop_assert!(false, "dropped {:?}: {:?}", d, other),
        }
    }

    #[test]
    fn every_row_is_rendered_once(cats in prop::collection::vec(0usize..8, 1..12)) {
        let categories = ["video_compression", "image_transcoding", "image_smoothing", "additive_noise",
            "gamma_correction", "combination", "resizing", "ai_based_compression"];
        let data: Vec<LabeledScore> = (0..6)
            .map(|i| LabeledScore::new(format!("f{i}"), if i % 2 == 0 { Label::Fake } else { Label::Real }, i as f64 / 6.0))
            .collect();
        let mut labels = vec!["raw".to_string()];
        labels.extend((0..cats.len()).map(|i| format!("op{i}")));
        let scores: Vec<(String, Vec<LabeledScore>)> = labels.iter().map(|l| (l.clone(), data.clone())).collect();
        let evaluated = evaluate_run(&scores, &EvalOptions::default()).unwrap();
        let mut infos = vec![OperationInfo { label: "raw".into(), category: "raw".into(), pipeline: "identity".into() }];
        infos.extend(cats.iter().enumerate().map(|(i, c)| OperationInfo {
            label: format!("op{i}"),
            category: categories[*c].into(),
            pipeline: format!("gamma:g={}", i + 1),
        }));
        let meta = RunMetadata {
            run_id: "r".into(), seed: 0, detector: "d".into(), corpus_digest: "c".into(),
            timestamp: "t".into(), threshold: 0.5, aggregation: "frame".into(),
        };
        let report = EvalReport::from_evaluation(evaluated, &infos, meta).unwrap();
        let table = build_table(&report, Grouping::ByCategory).unwrap();
        let mut rendered: Vec<&str> = table.rows.iter().map(|r| r.operation.as_str()).collect();
        rendered.sort_unstable();
        let mut expected: Vec<&str> = labels.iter().map(String::as_str).collect();
        expected.sort_unstable();
        prop_assert_eq!(rendered, expected);
        for format in [Format::Csv, Format::Markdown, Format::Json] {
            prop_assert_eq!(emit_report(&table, format), emit_report(&build_table(&report, Grouping::ByCategory).unwrap(), format));
        }
        let csv = String::from_utf8(emit_report(&table, Format::Csv)).unwrap();
        prop_assert_eq!(csv.lines().count(), labels.len() + 1);
    }

    #[test]
    fn cache_key_separates_fields(a in "[a-z_]{0,8}", b in "[a-z_]{0,8}", seed in any::<u64>()) {
        prop_assume!(!b.is_empty());
        let joined = format!("{a}{b}");
        prop_assert_ne!(cache_key(&a, &b, seed, "h"), cache_key(&joined, "", seed, "h"));
        prop_assert_ne!(cache_key(&a, &b, seed, "h"), cache_key(&a, &b, seed.wrapping_add(1), "h"));
        prop_assert_eq!(cache_key(&a, &b, seed, "h").len(), 64);
    }
}

#[test]
fn kernels_are_normalized_and_symmetric() {
    let check = |k: &Kernel1D| {
        let taps = k.taps();
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(taps.iter().zip(taps.iter().rev()).all(|(a, b)| a == b));
    };
    for ks in (1..=31).step_by(2) {
        check(&make_gaussian_kernel(ks).unwrap());
        check(&Kernel1D::box_filter(ks).unwrap());
    }
}
