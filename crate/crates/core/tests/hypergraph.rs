mod common;

use hyperspread::hypergraph::{combinations, interaction_value, DirectedHypergraph, NodeSet};
use hyperspread::scenario::HypergraphSpec;
use proptest::prelude::*;

/// Mean-field value of an "at least m of the heads" rule straight from its definition:
/// the average over m-subsets of the product of head states.
fn subset_average(x: &[f64], heads: &[usize], m: usize) -> f64 {
    let subsets = combinations(heads.len(), m);
    let total: f64 = subsets.iter().map(|s| s.iter().map(|&p| x[heads[p]]).product::<f64>()).sum();
    total / subsets.len() as f64
}

fn partial_edge() -> impl Strategy<Value = (usize, Vec<usize>, usize, f64, Vec<f64>)> {
    (2usize..=4).prop_flat_map(|k| {
        (
            0usize..7,
            proptest::sample::subsequence((0..7).collect::<Vec<usize>>(), k + 1).prop_shuffle(),
            1..k,
            0.1f64..1.0,
            proptest::collection::vec(0.0f64..=1.0, 7),
        )
            .prop_map(|(pick, nodes, m, w, x)| {
                let tail = nodes[pick % nodes.len()];
                let heads = nodes.into_iter().filter(|&v| v != tail).collect();
                (tail, heads, m, w, x)
            })
    })
}

proptest! {
    #[test]
    fn expansion_preserves_interaction((tail, heads, m, w, x) in partial_edge()) {
        let mut h = DirectedHypergraph::new(NodeSet::new(7, 0).unwrap());
        h.add_edge(tail, &heads, w, m).unwrap();
        let (edge, rule) = h.edges().next().unwrap();
        let direct = interaction_value(&edge, rule, 1.0, &x).unwrap();
        prop_assert!((direct - w * subset_average(&x, &heads, m)).abs() < 1e-12);
        let expanded = h.expand_to_full_order();
        prop_assert!(expanded.is_full_order());
        let p = expanded.pressure(&x).unwrap();
        prop_assert!((p[tail] - direct).abs() < 1e-12);
        prop_assert!(p.iter().enumerate().all(|(i, v)| i == tail || *v == 0.0));
    }

    #[test]
    fn spec_round_trip(seed in 0u64..500) {
        let sc = common::scenario(seed, 1);
        let h = sc.hypergraph.build(sc.nodes).unwrap();
        prop_assert_eq!(HypergraphSpec::from_hypergraph(&h), sc.hypergraph.clone());
    }
}

#[test]
fn partial_rule_on_mixed_states() {
    let mut h = DirectedHypergraph::new(NodeSet::new(4, 0).unwrap());
    h.add_edge(0, &[1, 2, 3], 0.6, 2).unwrap();
    let x = [0.0, 0.5, 0.2, 1.0];
    // (0.5·0.2 + 0.5·1 + 0.2·1) / 3
    let expected = 0.6 * 0.8 / 3.0;
    assert!((h.pressure(&x).unwrap()[0] - expected).abs() < 1e-15);
    assert_eq!(h.expand_to_full_order().edge_count(), 3);
}
