use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sector_dmrg::ttcache::{naive_prefix_copies, plan_check, ttcache_run, DependencyNode};

/// Random tree of at most `max_nodes` nodes whose payloads hold their own id.
fn random_tree(seed: u64, max_nodes: usize) -> DependencyNode<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(1..=max_nodes);
    let mut parent = vec![usize::MAX; count];
    for (i, p) in parent.iter_mut().enumerate().skip(1) {
        *p = rng.random_range(0..i);
    }
    let sizes: Vec<usize> = (0..count).map(|_| rng.random_range(0..20)).collect();
    fn build(id: usize, parent: &[usize], sizes: &[usize]) -> DependencyNode<Vec<u32>> {
        let kids = (0..parent.len()).filter(|&c| parent[c] == id).map(|c| build(c, parent, sizes)).collect();
        DependencyNode::with_children(id, vec![id as u32; sizes[id]], kids)
    }
    build(0, &parent, &sizes)
}

/// Some node with at least one child carries data.
fn shares_data(n: &DependencyNode<Vec<u32>>) -> bool {
    (!n.children.is_empty() && !n.payload.is_empty()) || n.children.iter().any(shares_data)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn traversal_invariants(seed in any::<u64>()) {
        let tree = random_tree(seed, 64);
        let need = plan_check::<u32, _>(&tree);
        let mut visited = Vec::new();
        let stats = ttcache_run(&tree, need, |node, ctx| {
            // Every ancestor region still holds its own payload.
            for level in 0..ctx.path.len() {
                let anc = ctx.ancestor(level);
                if let Some(&first) = anc.first() {
                    if anc.iter().any(|&x| x != first) {
                        return Err("ancestor data overwritten".into());
                    }
                }
            }
            if ctx.own().iter().any(|&x| x != node.id as u32) {
                return Err("own data wrong".into());
            }
            visited.push(node.id);
            Ok(())
        }).unwrap();
        let nodes = tree.node_count();
        prop_assert_eq!(stats.loads, nodes);
        prop_assert_eq!(visited.len(), nodes);
        prop_assert_eq!(stats.peak_offset, need);
        prop_assert_eq!(stats.final_offset, 0);
        let naive = naive_prefix_copies::<u32, _>(&tree);
        prop_assert!(stats.elements_copied <= naive);
        if shares_data(&tree) {
            prop_assert!(stats.elements_copied < naive);
        } else {
            prop_assert_eq!(stats.elements_copied, naive);
        }
    }

    #[test]
    fn capacity_below_plan_fails_without_running(seed in any::<u64>()) {
        let tree = random_tree(seed, 64);
        let need = plan_check::<u32, _>(&tree);
        prop_assume!(need > 0);
        let mut ran = false;
        let res = ttcache_run(&tree, need - 1, |_, _| { ran = true; Ok(()) });
        prop_assert!(res.is_err());
        prop_assert!(!ran);
    }
}
