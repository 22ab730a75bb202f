use std::collections::BTreeSet;

use blockbench::blockir::{
    build_network, instantiate_block, propagate_shapes, Activation, Bottleneck, ConvKind, ConvRole, LayerKind,
    LayerSpec, NetworkSpec, Stage,
};
use blockbench::costmodel::{
    bundled_profile, estimate_latency, layer_cost, layer_latency, roofline_seconds, LayerClass, LayerCost,
};
use blockbench::designspace::{quantize_widths, sample, widths_per_block, DesignSpaceParams, SamplingRanges};
use blockbench::stats::{edf, kneedle, pareto_front, Knee, SampleRecord, WeightScheme};
use blockbench::{BlockTemplate, TensorShape};
use proptest::prelude::*;

fn template() -> impl Strategy<Value = BlockTemplate> {
    let conv = prop_oneof![
        Just(ConvKind::Standard),
        Just(ConvKind::DepthwiseSeparable),
        prop::sample::select(vec![2u32, 4, 8]).prop_map(|groups| ConvKind::Grouped { groups }),
    ];
    let bottleneck = prop_oneof![
        Just(Bottleneck::None),
        (0.1f64..=1.0).prop_map(|ratio| Bottleneck::Regular { ratio }),
        (1.0f64..8.0).prop_map(|expansion| Bottleneck::Inverted { expansion }),
    ];
    (conv, bottleneck, any::<bool>(), prop::sample::select(vec![1u32, 3, 5])).prop_map(|(c, b, se, k)| {
        let t = BlockTemplate::new(c, b);
        let t = if se { t.with_se(4) } else { t };
        BlockTemplate { kernel_size: k, ..t }
    })
}

fn records(max: usize) -> impl Strategy<Value = Vec<SampleRecord>> {
    prop::collection::vec((1u32..50, 0u32..=20, 0u32..=16), 1..max).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (c, e, w))| {
                SampleRecord::new(format!("m{i:03}"), e as f64 / 20.0)
                    .with_metric("macs", c as f64)
                    .with_weight(w as f64 / 4.0)
            })
            .collect()
    })
}

fn front_ids(r: &[SampleRecord]) -> BTreeSet<String> {
    pareto_front(r, "macs").unwrap().model_ids().into_iter().map(String::from).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn widths_are_affine(d in 1u32..40, w0 in 8.0f64..200.0, wa in 0.0f64..64.0) {
        let u = widths_per_block(d, w0, wa);
        prop_assert_eq!(u.len(), d as usize);
        for pair in u.windows(2) {
            let tol = 4.0 * f64::EPSILON * pair[1].abs();
            prop_assert!((pair[1] - pair[0] - wa).abs() <= tol);
        }
    }

    #[test]
    fn quantized_plans_are_well_formed(d in 4u32..30, w0 in 1u32..=12, wa in 0.0f64..48.0, wm in 1.05f64..4.0) {
        let w0 = (w0 * 8) as f64;
        if let Ok(plan) = quantize_widths(&widths_per_block(d, w0, wa), w0, wm) {
            let w = plan.widths();
            prop_assert!(!w.is_empty() && w.len() <= 4);
            prop_assert!(w.windows(2).all(|p| p[0] <= p[1]));
            prop_assert!(w.iter().all(|x| x % 8 == 0));
            prop_assert_eq!(plan.total_depth(), d);
        }
    }

    #[test]
    fn sampling_is_reproducible_and_valid(seed in any::<u64>()) {
        let ranges = SamplingRanges::default().with_seed(seed);
        let a = sample(&ranges, 16).unwrap();
        prop_assert_eq!(&a, &sample(&ranges, 16).unwrap());
        prop_assert_ne!(&a, &sample(&ranges.with_seed(seed.wrapping_add(1)), 16).unwrap());
        for p in &a {
            prop_assert!(p.validate().is_ok());
            prop_assert!((6..=20).contains(&p.depth));
            prop_assert!(p.initial_width % 8 == 0 && (8..=96).contains(&p.initial_width));
            prop_assert!((0.0..=32.0).contains(&p.slope) && (1.5..=3.0).contains(&p.quantization));
            prop_assert!(p.stage_plan().is_ok());
        }
    }

    #[test]
    fn blocks_propagate_and_residuals_follow_the_rule(
        t in template(),
        cin in 1u32..=8,
        cout in 1u32..=8,
        stride in 1u32..=2,
        side in 1u32..=20,
    ) {
        let (cin, cout) = (cin * 8, cout * 8);
        let input = TensorShape::square(side, cin).unwrap();
        let layers = instantiate_block(&t, cin, cout, stride, input).unwrap();
        let shapes = propagate_shapes(&layers, input).unwrap();
        prop_assert_eq!(shapes.last().unwrap().1.channels, cout);
        let has_add = layers.iter().any(|l| matches!(l.kind, LayerKind::Add { .. }));
        prop_assert_eq!(has_add, stride == 1 && cin == cout);
    }

    #[test]
    fn plain_dwsep_block_is_one_depthwise_and_one_pointwise(
        cin in 1u32..=8, cout in 1u32..=8, stride in 1u32..=2, se in any::<bool>(), k in prop::sample::select(vec![3u32, 5]),
    ) {
        let (cin, cout) = (cin * 8, cout * 8);
        let mut t = BlockTemplate { kernel_size: k, ..BlockTemplate::depthwise_separable() };
        if se {
            t = t.with_se(4);
        }
        let layers = instantiate_block(&t, cin, cout, stride, TensorShape::square(16, cin).unwrap()).unwrap();
        let roles: Vec<ConvRole> = layers.iter().filter_map(LayerSpec::conv_role).collect();
        prop_assert_eq!(roles.iter().filter(|r| **r == ConvRole::Depthwise).count(), 1);
        prop_assert_eq!(roles.iter().filter(|r| **r == ConvRole::Pointwise).count(), 1);
        prop_assert_eq!(roles.len(), 2);
    }

    #[test]
    fn network_json_round_trips(t in template(), seed in any::<u64>()) {
        let ranges = SamplingRanges::default().with_seed(seed);
        let params = sample(&ranges, 1).unwrap()[0];
        let stages: Vec<Stage> = params.stage_plan().unwrap().to_four_stages().unwrap();
        let net = build_network(&stages, &t, TensorShape::square(64, 3).unwrap(), 2).unwrap().with_origin(params);
        let back = NetworkSpec::from_json(&net.to_json()).unwrap();
        prop_assert_eq!(back, net);
    }

    #[test]
    fn conv_counts_match_loop_oracle(
        k in prop::sample::select(vec![1u32, 3, 5]),
        stride in 1u32..=2,
        g in prop::sample::select(vec![1u32, 2, 3, 4]),
        cin in 1u32..=6,
        cout in 1u32..=6,
        h in 1u32..=12,
        w in 1u32..=12,
    ) {
        let (cin, cout) = (cin * g, cout * g);
        let layer = LayerSpec::conv(k, stride, cin, cout, g, Activation::Relu);
        let c = layer_cost(&layer, TensorShape::new(h, w, cin).unwrap()).unwrap();
        let mut macs = 0u64;
        for _y in (0..h).step_by(stride as usize) {
            for _x in (0..w).step_by(stride as usize) {
                for _o in 0..cout {
                    for _i in 0..cin / g {
                        for _t in 0..k * k {
                            macs += 1;
                        }
                    }
                }
            }
        }
        prop_assert_eq!(c.macs, macs);
        prop_assert_eq!(c.params, (k * k * (cin / g) * cout) as u64);
    }

    #[test]
    fn grouped_macs_do_not_increase_with_groups(c in 1u32..=8, side in 1u32..=16, k in prop::sample::select(vec![1u32, 3])) {
        let ch = c * 24;
        let input = TensorShape::square(side, ch).unwrap();
        let divisors: Vec<u32> = (1..=ch).filter(|g| ch % g == 0).collect();
        let macs: Vec<u64> = divisors
            .iter()
            .map(|&g| layer_cost(&LayerSpec::conv(k, 1, ch, ch, g, Activation::Relu), input).unwrap().macs)
            .collect();
        prop_assert!(macs.windows(2).all(|m| m[1] <= m[0]));
    }

    #[test]
    fn latency_is_additive_over_layers(t in template(), seed in any::<u64>()) {
        let params = sample(&SamplingRanges::default().with_seed(seed), 1).unwrap()[0];
        let stages = params.stage_plan().unwrap().to_four_stages().unwrap();
        let net = build_network(&stages, &t, TensorShape::square(96, 3).unwrap(), 2).unwrap();
        for name in ["mobile_cpu", "vpu"] {
            let p = bundled_profile(name).unwrap();
            let total = estimate_latency(&net, &p).unwrap().seconds;
            let sum: f64 = net.layers.iter().map(|l| layer_latency(&l.spec, l.input, &p).unwrap().0).sum();
            prop_assert!((total - sum).abs() <= 1e-12 * sum.max(1e-300));
        }
    }

    #[test]
    fn roofline_is_monotone(
        macs in 0u64..1_000_000_000,
        bytes in 0u64..100_000_000,
        dm in 0u64..1_000_000,
        db in 0u64..1_000_000,
        class in prop::sample::select(LayerClass::ALL.to_vec()),
    ) {
        let p = bundled_profile("embedded_gpu").unwrap();
        let base = LayerCost { macs, params: 0, output_activations: 0, bytes_moved: bytes };
        let more = LayerCost { macs: macs + dm, bytes_moved: bytes + db, ..base };
        prop_assert!(roofline_seconds(&more, class, &p).unwrap() >= roofline_seconds(&base, class, &p).unwrap());
    }

    #[test]
    fn memory_bound_profile_penalizes_depthwise_per_mac(seed in any::<u64>()) {
        let params: DesignSpaceParams = sample(&SamplingRanges::default().with_seed(seed), 1).unwrap()[0];
        let stages = params.stage_plan().unwrap().to_four_stages().unwrap();
        let input = TensorShape::square(160, 3).unwrap();
        let vpu = bundled_profile("vpu").unwrap();
        let per_mac = |t: &BlockTemplate| {
            let net = build_network(&stages, t, input, 2).unwrap();
            let macs = blockbench::costmodel::network_totals(&net).unwrap().macs as f64;
            estimate_latency(&net, &vpu).unwrap().seconds / macs
        };
        prop_assert!(per_mac(&BlockTemplate::depthwise_separable()) > per_mac(&BlockTemplate::standard()));
    }

    #[test]
    fn edf_is_a_cdf(recs in records(60)) {
        let f = edf(&recs, &WeightScheme::Uniform).unwrap();
        prop_assert_eq!(f.points.last().unwrap().fraction, 1.0);
        let mut prev = 0.0;
        for p in &f.points {
            prop_assert!(p.fraction >= prev && p.fraction <= 1.0);
            prev = p.fraction;
        }
        prop_assert_eq!(f.eval(-1.0), 0.0);
        if let Ok(w) = edf(&recs, &WeightScheme::Recorded) {
            prop_assert!(w.points.windows(2).all(|p| p[0].fraction <= p[1].fraction));
            prop_assert!(w.points.iter().all(|p| (0.0..=1.0).contains(&p.fraction)));
        }
    }

    #[test]
    fn pareto_matches_dominance_and_is_idempotent(recs in records(200)) {
        let got = front_ids(&recs);
        let key = |r: &SampleRecord| (r.metric("macs").unwrap(), r.error);
        let brute: BTreeSet<String> = recs
            .iter()
            .filter(|a| {
                let (ca, ea) = key(a);
                !recs.iter().any(|b| {
                    let (cb, eb) = key(b);
                    cb <= ca && eb <= ea && (cb < ca || eb < ea || b.model_id < a.model_id)
                })
            })
            .map(|r| r.model_id.clone())
            .collect();
        prop_assert_eq!(&got, &brute);
        let kept: Vec<SampleRecord> = recs.iter().filter(|r| got.contains(&r.model_id)).cloned().collect();
        prop_assert_eq!(front_ids(&kept), got.clone());
        let squashed: Vec<SampleRecord> = recs
            .iter()
            .map(|r| SampleRecord::new(r.model_id.clone(), r.error).with_metric("macs", r.metric("macs").unwrap().powi(3) + 1.0))
            .collect();
        prop_assert_eq!(front_ids(&squashed), got);
    }

    #[test]
    fn kneedle_is_mirror_consistent(n in 10usize..120, b in 2.0f64..15.0, amp in 0.5f64..5.0) {
        let pts: Vec<(f64, f64)> = (0..n).map(|i| {
            let x = i as f64 / (n - 1) as f64;
            (x, amp * (-b * x).exp())
        }).collect();
        let mirrored: Vec<(f64, f64)> = pts.iter().rev().map(|&(x, y)| (-x, y)).collect();
        match (kneedle(&pts, 1.0).unwrap(), kneedle(&mirrored, 1.0).unwrap()) {
            (Knee::Elbow { x: a, .. }, Knee::Elbow { x: m, .. }) => prop_assert_eq!(a, -m),
            (Knee::NoElbow, Knee::NoElbow) => {}
            other => prop_assert!(false, "inconsistent: {:?}", other),
        }
    }
}
