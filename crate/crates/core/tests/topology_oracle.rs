//! Circle search and cut detection against exhaustive path enumeration on small
//! random graphs.

use proptest::prelude::*;
use robcomm_core::topology::{find_cut_vertex, two_disjoint_paths};
use robcomm_core::Network;

/// Node 0 is the sender, node n-1 the receiver; the two are never adjacent.
fn graph(n: usize, mask: u64) -> (Network, Vec<Vec<usize>>) {
    let names: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let mut adj = vec![Vec::new(); n];
    let mut edges = Vec::new();
    let mut bit = 0;
    for a in 0..n {
        for b in a + 1..n {
            let on = mask >> (bit % 64) & 1 == 1;
            bit += 1;
            if on && !(a == 0 && b == n - 1) {
                adj[a].push(b);
                adj[b].push(a);
                edges.push((names[a].clone(), names[b].clone()));
            }
        }
    }
    let net = Network::new(
        names.iter().map(String::as_str),
        edges.iter().map(|(a, b)| (a.as_str(), b.as_str())),
        "0",
        &names[n - 1],
    )
    .unwrap();
    (net, adj)
}

fn simple_paths(adj: &[Vec<usize>], s: usize, r: usize) -> Vec<Vec<usize>> {
    fn go(adj: &[Vec<usize>], r: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let last = *path.last().unwrap();
        if last == r {
            out.push(path.clone());
            return;
        }
        for &q in &adj[last] {
            if !path.contains(&q) {
                path.push(q);
                go(adj, r, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(adj, r, &mut vec![s], &mut out);
    out
}

/// Fewest nodes over all pairs of internally disjoint S-R paths.
fn brute_min_circle(adj: &[Vec<usize>]) -> Option<usize> {
    let r = adj.len() - 1;
    let paths = simple_paths(adj, 0, r);
    let mut best: Option<usize> = None;
    for (i, p) in paths.iter().enumerate() {
        for q in &paths[i + 1..] {
            let inner = |x: &Vec<usize>| x[1..x.len() - 1].to_vec();
            if inner(p).iter().all(|v| !inner(q).contains(v)) {
                let nc = p.len() + q.len() - 2;
                best = Some(best.map_or(nc, |b: usize| b.min(nc)));
            }
        }
    }
    best
}

fn connected_without(adj: &[Vec<usize>], removed: Option<usize>) -> bool {
    let r = adj.len() - 1;
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &q in &adj[v] {
            if Some(q) != removed && !seen[q] {
                seen[q] = true;
                stack.push(q);
            }
        }
    }
    seen[r]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn circle_is_minimal(n in 4usize..=8, mask in any::<u64>()) {
        let (net, adj) = graph(n, mask);
        let found = two_disjoint_paths(&net);
        prop_assert_eq!(found.as_ref().map(|c| c.nc()), brute_min_circle(&adj));
        if let Some(c) = found {
            prop_assert!(c.validate(&net).is_ok());
            let (l, r) = (c.left(), c.right());
            prop_assert!(l[1..l.len() - 1].iter().all(|v| !r.contains(v)));
        }
    }

    #[test]
    fn circle_or_cut_vertex(n in 3usize..=7, mask in any::<u64>()) {
        let (net, adj) = graph(n, mask);
        let circle = two_disjoint_paths(&net).is_some();
        let cut = find_cut_vertex(&net);
        if !connected_without(&adj, None) {
            prop_assert!(!circle && cut.is_none());
            return Ok(());
        }
        prop_assert!(circle != cut.is_some());
        let brute_cut = (1..n - 1).any(|v| !connected_without(&adj, Some(v)));
        prop_assert_eq!(brute_cut, cut.is_some());
        if let Some(v) = cut {
            prop_assert!(!connected_without(&adj, Some(v)));
        }
    }
}
