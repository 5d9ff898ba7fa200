use proptest::prelude::*;

use coco_core::editing::{plan_deactivate, plan_ne};
use coco_core::harness::{evaluate_ea, EvalOptions, ScenarioItem, ScenarioSet};
use coco_core::model::{apply_edit, gen_synthetic, MatrixKind, ModelConfig, NeuronId, WeightStore};

fn small_model() -> WeightStore {
    gen_synthetic(&ModelConfig::new(2, 2, 8, 12, 8).unwrap(), 42).unwrap()
}

fn neuron() -> impl Strategy<Value = NeuronId> {
    (0usize..2, prop::sample::select(MatrixKind::ALL.to_vec()), 0usize..8).prop_map(|(l, k, c)| NeuronId::new(l, k, c))
}

fn max_abs_diff(a: &WeightStore, b: &WeightStore) -> f64 {
    let (pa, pb) = (a.parts(), b.parts());
    pa.layers
        .iter()
        .zip(&pb.layers)
        .flat_map(|(la, lb)| {
            MatrixKind::ALL.into_iter().flat_map(move |k| {
                la.projection(k)
                    .data()
                    .iter()
                    .zip(lb.projection(k).data())
                    .map(|(x, y)| (x - y).abs())
                    .collect::<Vec<_>>()
            })
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_delta_is_bitwise_identity(ns in prop::collection::btree_set(neuron(), 0..6)) {
        let w = small_model();
        let e = apply_edit(&w, &plan_ne(ns.into_iter().collect(), 0.0).unwrap()).unwrap();
        prop_assert!(e.bit_eq(&w));
    }

    #[test]
    fn minus_one_equals_zeroing(ns in prop::collection::btree_set(neuron(), 1..6)) {
        let w = small_model();
        let ns: Vec<NeuronId> = ns.into_iter().collect();
        let e = apply_edit(&w, &plan_deactivate(ns.clone()).unwrap()).unwrap();
        let mut parts = w.parts().clone();
        for n in &ns {
            let m = parts.layers[n.layer].projection_mut(n.kind);
            for r in 0..m.rows() {
                m.set(r, n.col, 0.0);
            }
        }
        prop_assert!(e.bit_eq(&WeightStore::new(parts).unwrap()));
        prop_assert!(apply_edit(&w, &plan_ne(ns, -1.0).unwrap()).unwrap().bit_eq(&e));
    }

    #[test]
    fn inverse_restores(ns in prop::collection::btree_set(neuron(), 1..6), delta in -0.9f64..3.0) {
        let w = small_model();
        let plan = plan_ne(ns.into_iter().collect(), delta).unwrap();
        let back = apply_edit(&apply_edit(&w, &plan).unwrap(), &plan.inverse().unwrap()).unwrap();
        prop_assert!(max_abs_diff(&w, &back) < 1e-12);
    }

    #[test]
    fn disjoint_plans_commute(
        ns in prop::collection::btree_set(neuron(), 2..8),
        d1 in -1.0f64..2.0,
        d2 in -1.0f64..2.0,
    ) {
        let ns: Vec<NeuronId> = ns.into_iter().collect();
        let (a, b) = ns.split_at(ns.len() / 2);
        let pa = plan_ne(a.to_vec(), d1).unwrap();
        let pb = plan_ne(b.to_vec(), d2).unwrap();
        let w = small_model();
        let ab = apply_edit(&apply_edit(&w, &pa).unwrap(), &pb).unwrap();
        let ba = apply_edit(&apply_edit(&w, &pb).unwrap(), &pa).unwrap();
        prop_assert!(ab.bit_eq(&ba));
    }

    #[test]
    fn ea_ignores_item_order(seed in any::<u64>()) {
        let w = small_model();
        let items: Vec<ScenarioItem> = (0..10u32)
            .map(|i| ScenarioItem {
                id: format!("i{i}"),
                category: "c".into(),
                prompt: vec![i % 12, (i * 7) % 12],
                options: vec![vec![(i * 3) % 12], vec![(i * 5 + 1) % 12], vec![2, 3]],
                unbiased_index: (i % 3) as usize,
                polarity: None,
                split: None,
            })
            .collect();
        let mut shuffled = items.clone();
        let mut r = coco_core::rng::SplitMix64::new(seed);
        for i in (1..shuffled.len()).rev() {
            let j = (r.next_f64() * (i + 1) as f64) as usize;
            shuffled.swap(i, j);
        }
        let opts = EvalOptions::default();
        let a = evaluate_ea(&w, &ScenarioSet::new(items, None).unwrap(), &opts).unwrap();
        let b = evaluate_ea(&w, &ScenarioSet::new(shuffled, None).unwrap(), &opts).unwrap();
        prop_assert_eq!(a, b);
    }
}
