//! Randomized property suites for the model-side invariants. Everything
//! here runs offline with proptest's deterministic RNG.

use iddp_core::cuts::LowerModel;
use iddp_core::saturation::SaturationMap;
use proptest::prelude::*;

fn box_point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n)
}

proptest! {
    /// Points sharing a cell are within epsilon in Euclidean norm.
    #[test]
    fn cell_keys_certify_distance(
        a in box_point(3),
        b in box_point(3),
        eps in 0.05f64..0.9,
    ) {
        let map = SaturationMap::new(eps, 4, &[0.0; 3], &[1.0; 3]).unwrap();
        let ka = map.cell_of(&a).unwrap();
        let kb = map.cell_of(&b).unwrap();
        if ka == kb {
            let dist: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            prop_assert!(dist <= eps + 1e-12, "same cell but distance {dist} > {eps}");
        }
    }

    /// Levels at any fixed point never increase along an update sequence,
    /// and the potential drop only grows.
    #[test]
    fn levels_monotone_under_updates(
        updates in prop::collection::vec((box_point(2), 0usize..6), 1..60),
        probe in box_point(2),
    ) {
        let mut map = SaturationMap::new(0.21, 6, &[0.0; 2], &[1.0; 2]).unwrap();
        let mut last_level = map.level(&probe).unwrap();
        let mut last_drop = 0usize;
        for (x, t) in updates {
            map.lower_level(&x, t).unwrap();
            let lvl = map.level(&probe).unwrap();
            prop_assert!(lvl <= last_level);
            last_level = lvl;
            let drop = map.potential_drop();
            prop_assert!(drop >= last_drop);
            last_drop = drop;
        }
    }

    /// Adding cuts never lowers the model anywhere; with zero slack the
    /// model at the anchor reaches at least the recorded value.
    #[test]
    fn cut_model_monotone_and_tight_at_anchor(
        cuts in prop::collection::vec(
            (-1.0f64..1.0, prop::collection::vec(-2.0f64..2.0, 2), box_point(2)),
            1..20,
        ),
        probes in prop::collection::vec(box_point(2), 8),
    ) {
        let mut model = LowerModel::with_constant(-3.0);
        let mut before: Vec<f64> = probes.iter().map(|p| model.evaluate(p)).collect();
        for (k, (value, grad, anchor)) in cuts.into_iter().enumerate() {
            model
                .add_averaged_cut(&[value], &[grad], &anchor, 0.0, k)
                .unwrap();
            prop_assert!(model.evaluate(&anchor) >= value - 1e-9);
            let after: Vec<f64> = probes.iter().map(|p| model.evaluate(p)).collect();
            for (b, a) in before.iter().zip(&after) {
                prop_assert!(a >= &(b - 1e-12));
            }
            before = after;
        }
    }

    /// The averaged cut equals the scenario average at every point.
    #[test]
    fn averaged_cut_is_scenario_mean(
        values in prop::collection::vec(-2.0f64..2.0, 3),
        grads in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 3),
        anchor in box_point(2),
        probe in box_point(2),
    ) {
        let mut model = LowerModel::with_constant(f64::NEG_INFINITY);
        model.add_averaged_cut(&values, &grads, &anchor, 0.0, 1).unwrap();
        let mut expect = 0.0;
        for (v, g) in values.iter().zip(&grads) {
            expect += v
                + g.iter()
                    .zip(probe.iter().zip(&anchor))
                    .map(|(gi, (p, a))| gi * (p - a))
                    .sum::<f64>();
        }
        expect /= values.len() as f64;
        let got = model.cuts[0].evaluate(&probe);
        prop_assert!((got - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
    }
}
