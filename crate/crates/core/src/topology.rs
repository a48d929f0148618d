//! Networks, circles (two vertex-disjoint sender-receiver paths) and cut vertices.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

/// Dense index of a node inside a [`Network`].
pub type NodeIx = usize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopologyError {
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("edge references unknown node `{0}`")]
    DanglingEdge(String),
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("unknown endpoint `{0}`")]
    UnknownEndpoint(String),
    #[error("sender and receiver must be distinct")]
    SenderIsReceiver,
    #[error("sender and receiver are directly connected")]
    SenderReceiverAdjacent,
    #[error("node `{0}` is not on the circle")]
    NotOnCircle(String),
    #[error("invalid circle: {0}")]
    InvalidCircle(&'static str),
}

/// Undirected communication network with a distinguished sender and receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    names: Vec<String>,
    index: BTreeMap<String, NodeIx>,
    adj: Vec<Vec<NodeIx>>,
    sender: NodeIx,
    receiver: NodeIx,
}

impl Network {
    pub fn new<N, E>(nodes: N, edges: E, sender: &str, receiver: &str) -> Result<Self, TopologyError>
    where
        N: IntoIterator,
        N::Item: AsRef<str>,
        E: IntoIterator<Item = (N::Item, N::Item)>,
    {
        let mut names = Vec::new();
        let mut index = BTreeMap::new();
        for n in nodes {
            let n = n.as_ref().to_string();
            if index.contains_key(&n) {
                return Err(TopologyError::DuplicateNode(n));
            }
            index.insert(n.clone(), names.len());
            names.push(n);
        }
        let mut adj = vec![Vec::new(); names.len()];
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            let ia = *index.get(a).ok_or_else(|| TopologyError::DanglingEdge(a.to_string()))?;
            let ib = *index.get(b).ok_or_else(|| TopologyError::DanglingEdge(b.to_string()))?;
            if ia == ib {
                return Err(TopologyError::SelfLoop(a.to_string()));
            }
            if !adj[ia].contains(&ib) {
                adj[ia].push(ib);
                adj[ib].push(ia);
            }
        }
        for list in &mut adj {
            list.sort_by(|x, y| names[*x].cmp(&names[*y]));
        }
        let s = *index.get(sender).ok_or_else(|| TopologyError::UnknownEndpoint(sender.to_string()))?;
        let r = *index.get(receiver).ok_or_else(|| TopologyError::UnknownEndpoint(receiver.to_string()))?;
        if s == r {
            return Err(TopologyError::SenderIsReceiver);
        }
        if adj[s].contains(&r) {
            return Err(TopologyError::SenderReceiverAdjacent);
        }
        Ok(Network { names, index, adj, sender: s, receiver: r })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn sender(&self) -> NodeIx {
        self.sender
    }

    pub fn receiver(&self) -> NodeIx {
        self.receiver
    }

    pub fn name(&self, ix: NodeIx) -> &str {
        &self.names[ix]
    }

    pub fn ix(&self, name: &str) -> Option<NodeIx> {
        self.index.get(name).copied()
    }

    /// Neighbours sorted by name.
    pub fn neighbors(&self, ix: NodeIx) -> &[NodeIx] {
        &self.adj[ix]
    }

    pub fn adjacent(&self, a: NodeIx, b: NodeIx) -> bool {
        self.adj[a].contains(&b)
    }

    /// Node indices sorted by name.
    pub fn nodes_by_name(&self) -> Vec<NodeIx> {
        self.index.values().copied().collect()
    }

    /// Edges as name-ordered pairs, sorted.
    pub fn edges(&self) -> Vec<(NodeIx, NodeIx)> {
        let mut out = Vec::new();
        for a in 0..self.len() {
            for &b in &self.adj[a] {
                if self.names[a] < self.names[b] {
                    out.push((a, b));
                }
            }
        }
        out.sort_by(|x, y| (&self.names[x.0], &self.names[x.1]).cmp(&(&self.names[y.0], &self.names[y.1])));
        out
    }

    /// Compare two node sequences lexicographically by name.
    pub fn cmp_paths(&self, a: &[NodeIx], b: &[NodeIx]) -> core::cmp::Ordering {
        let an = a.iter().map(|x| self.names[*x].as_str());
        let bn = b.iter().map(|x| self.names[*x].as_str());
        an.cmp(bn)
    }
}

/// Two vertex-disjoint paths between the same endpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circle {
    left: Vec<NodeIx>,
    right: Vec<NodeIx>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Sender,
    Receiver,
    Left,
    Right,
}

/// A decode orientation: content is read from `pred`, blocking triplets from `succ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Orientation {
    pub pred: NodeIx,
    pub succ: NodeIx,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CircleRole {
    pub node: NodeIx,
    pub side: Side,
    /// Protocol broadcast pair: (pred, succ) for interior nodes, (i1, j1) for the
    /// sender and (iK, jK') for the receiver.
    pub links: [NodeIx; 2],
    /// Successors whose content this node reports on.
    pub monitored: Vec<NodeIx>,
    pub decode: Vec<Orientation>,
}

impl CircleRole {
    pub fn pred(&self) -> Option<NodeIx> {
        match self.side {
            Side::Left | Side::Right => Some(self.links[0]),
            _ => None,
        }
    }

    pub fn succ(&self) -> Option<NodeIx> {
        match self.side {
            Side::Left | Side::Right => Some(self.links[1]),
            _ => None,
        }
    }

    pub fn is_link(&self, q: NodeIx) -> bool {
        self.links.contains(&q)
    }
}

/// Result of re-rooting a circle at a new sender/receiver pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rerooted {
    Circle(Circle),
    /// The two endpoints are consecutive on the cycle.
    Adjacent,
}

impl Circle {
    pub fn new(net: &Network, left: Vec<NodeIx>, right: Vec<NodeIx>) -> Result<Self, TopologyError> {
        let c = Circle { left, right };
        c.validate(net)?;
        Ok(c)
    }

    pub fn validate(&self, net: &Network) -> Result<(), TopologyError> {
        let (l, r) = (&self.left, &self.right);
        if l.len() < 3 || r.len() < 3 {
            return Err(TopologyError::InvalidCircle("each path needs at least one interior node"));
        }
        if l[0] != r[0] || l[l.len() - 1] != r[r.len() - 1] {
            return Err(TopologyError::InvalidCircle("paths must share both endpoints"));
        }
        let mut seen = vec![false; net.len()];
        for &v in l.iter().chain(r[1..r.len() - 1].iter()) {
            if v >= net.len() {
                return Err(TopologyError::InvalidCircle("unknown node"));
            }
            if seen[v] {
                return Err(TopologyError::InvalidCircle("paths are not vertex-disjoint"));
            }
            seen[v] = true;
        }
        for p in [l, r] {
            if p.windows(2).any(|w| !net.adjacent(w[0], w[1])) {
                return Err(TopologyError::InvalidCircle("consecutive nodes are not adjacent"));
            }
        }
        Ok(())
    }

    pub fn left(&self) -> &[NodeIx] {
        &self.left
    }

    pub fn right(&self) -> &[NodeIx] {
        &self.right
    }

    pub fn sender(&self) -> NodeIx {
        self.left[0]
    }

    pub fn receiver(&self) -> NodeIx {
        self.left[self.left.len() - 1]
    }

    pub fn nc(&self) -> usize {
        self.left.len() + self.right.len() - 2
    }

    pub fn contains(&self, p: NodeIx) -> bool {
        self.left.contains(&p) || self.right.contains(&p)
    }

    /// All circle nodes: sender, left interior, receiver, right interior.
    pub fn members(&self) -> Vec<NodeIx> {
        let mut out = self.left.clone();
        out.extend_from_slice(&self.right[1..self.right.len() - 1]);
        out
    }

    /// Cycle order S, i1..iK, R, jK'..j1.
    pub fn cycle(&self) -> Vec<NodeIx> {
        let mut out = self.left.clone();
        out.extend(self.right[1..self.right.len() - 1].iter().rev());
        out
    }

    /// Re-roots the underlying cycle at `sender` → `receiver`. The forward cycle arc
    /// becomes the left path.
    pub fn reroot(&self, sender: NodeIx, receiver: NodeIx) -> Option<Rerooted> {
        let cyc = self.cycle();
        let n = cyc.len();
        let ps = cyc.iter().position(|x| *x == sender)?;
        let pr = cyc.iter().position(|x| *x == receiver)?;
        if ps == pr {
            return None;
        }
        let mut fwd = vec![cyc[ps]];
        let mut i = ps;
        while i != pr {
            i = (i + 1) % n;
            fwd.push(cyc[i]);
        }
        let mut bwd = vec![cyc[ps]];
        let mut i = ps;
        while i != pr {
            i = (i + n - 1) % n;
            bwd.push(cyc[i]);
        }
        if fwd.len() < 3 || bwd.len() < 3 {
            return Some(Rerooted::Adjacent);
        }
        Some(Rerooted::Circle(Circle { left: fwd, right: bwd }))
    }
}

/// Predecessor/successor orientation of `p` on the circle.
pub fn circle_roles(circle: &Circle, p: NodeIx) -> Option<CircleRole> {
    let (l, r) = (&circle.left, &circle.right);
    let (kl, kr) = (l.len() - 1, r.len() - 1);
    if p == circle.sender() {
        return Some(CircleRole {
            node: p,
            side: Side::Sender,
            links: [l[1], r[1]],
            monitored: vec![l[1], r[1]],
            decode: Vec::new(),
        });
    }
    if p == circle.receiver() {
        let (ik, jk) = (l[kl - 1], r[kr - 1]);
        return Some(CircleRole {
            node: p,
            side: Side::Receiver,
            links: [ik, jk],
            monitored: vec![ik, jk],
            decode: vec![Orientation { pred: ik, succ: jk }, Orientation { pred: jk, succ: ik }],
        });
    }
    for (path, side) in [(l, Side::Left), (r, Side::Right)] {
        if let Some(k) = path.iter().position(|x| *x == p) {
            let (pred, succ) = (path[k - 1], path[k + 1]);
            return Some(CircleRole {
                node: p,
                side,
                links: [pred, succ],
                monitored: vec![succ],
                decode: vec![Orientation { pred, succ }],
            });
        }
    }
    None
}

/// Two vertex-disjoint S-R paths minimising the node count, ties broken by the
/// lexicographically smallest (left, right) pair of name sequences.
pub fn two_disjoint_paths(net: &Network) -> Option<Circle> {
    let (s, r) = (net.sender, net.receiver);
    let mut used = vec![false; net.len()];
    used[s] = true;
    let best = pair_cost(net, s, &used)?;
    let mut left = vec![s];
    let mut spent = 0usize;
    while *left.last().unwrap() != r {
        let last = *left.last().unwrap();
        let need = best - spent - 1;
        let mut chosen = None;
        for &v in net.neighbors(last) {
            if used[v] {
                continue;
            }
            let ok = if v == r {
                single_cost(net, &used) == Some(need)
            } else {
                used[v] = true;
                let c = pair_cost(net, v, &used);
                used[v] = false;
                c == Some(need)
            };
            if ok {
                chosen = Some(v);
                break;
            }
        }
        let v = chosen.expect("a minimal completion always exists");
        if v != r {
            used[v] = true;
        }
        left.push(v);
        spent += 1;
    }
    let right = smallest_shortest_path(net, &used)?;
    debug_assert_eq!(left.len() + right.len() - 2, best);
    Some(Circle { left, right })
}

/// Some interior node separating S from R, when exactly one vertex-disjoint path exists.
pub fn find_cut_vertex(net: &Network) -> Option<NodeIx> {
    let (s, r) = (net.sender, net.receiver);
    let banned = {
        let mut b = vec![false; net.len()];
        b[s] = true;
        b
    };
    let mut g = SplitGraph::build(net, &banned);
    let src = g.source;
    g.flow.add_edge(src, out_node(s), 2, 0);
    let sink = in_node(r);
    let units = g.flow.augment(src, sink, 2);
    if units != 1 {
        return None;
    }
    let reach = g.flow.reachable(src);
    (0..net.len()).find(|&v| v != s && v != r && reach[in_node(v)] && !reach[out_node(v)])
}

/// `k` vertex-disjoint S-R paths of minimum total length, sorted by name sequence.
pub fn disjoint_paths(net: &Network, k: usize) -> Option<Vec<Vec<NodeIx>>> {
    let (s, r) = (net.sender, net.receiver);
    let mut banned = vec![false; net.len()];
    banned[s] = true;
    let mut g = SplitGraph::build(net, &banned);
    let src = g.source;
    g.flow.add_edge(src, out_node(s), k as i32, 0);
    if g.flow.augment(src, in_node(r), k) != k {
        return None;
    }
    let mut paths = Vec::new();
    for _ in 0..k {
        let mut path = vec![s];
        let mut cur = s;
        while cur != r {
            let next = g.take_flow_edge(out_node(cur))?;
            path.push(next);
            cur = next;
        }
        paths.push(path);
    }
    paths.sort_by(|a, b| net.cmp_paths(a, b));
    Some(paths)
}

fn in_node(v: NodeIx) -> usize {
    2 * v
}

fn out_node(v: NodeIx) -> usize {
    2 * v + 1
}

/// Minimum total edge count of two disjoint paths `start → R` and `S → R`, where nodes
/// marked in `used` may not be entered. `start == S` asks for two paths out of S.
fn pair_cost(net: &Network, start: NodeIx, used: &[bool]) -> Option<usize> {
    let (s, r) = (net.sender, net.receiver);
    let mut g = SplitGraph::build(net, used);
    let src = g.source;
    if start == s {
        g.flow.add_edge(src, out_node(s), 2, 0);
    } else {
        g.flow.add_edge(src, out_node(s), 1, 0);
        g.flow.add_edge(src, out_node(start), 1, 0);
    }
    if g.flow.augment(src, in_node(r), 2) != 2 {
        return None;
    }
    Some(g.flow.total_cost as usize)
}

/// Length of a shortest S → R path avoiding `used` nodes.
fn single_cost(net: &Network, used: &[bool]) -> Option<usize> {
    let d = bfs_to_receiver(net, used);
    net.neighbors(net.sender).iter().filter_map(|v| d[*v]).min().map(|x| x + 1)
}

fn bfs_to_receiver(net: &Network, used: &[bool]) -> Vec<Option<usize>> {
    let r = net.receiver;
    let mut dist = vec![None; net.len()];
    dist[r] = Some(0);
    let mut queue = alloc::collections::VecDeque::from([r]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for &v in net.neighbors(u) {
            if used[v] || dist[v].is_some() {
                continue;
            }
            dist[v] = Some(du + 1);
            queue.push_back(v);
        }
    }
    dist
}

fn smallest_shortest_path(net: &Network, used: &[bool]) -> Option<Vec<NodeIx>> {
    let d = bfs_to_receiver(net, used);
    let (s, r) = (net.sender, net.receiver);
    let total = single_cost(net, used)?;
    let mut path = vec![s];
    let mut remaining = total;
    let mut cur = s;
    while cur != r {
        let next = net
            .neighbors(cur)
            .iter()
            .copied()
            .find(|v| !used[*v] && d[*v] == Some(remaining - 1))?;
        path.push(next);
        cur = next;
        remaining -= 1;
    }
    Some(path)
}

struct SplitGraph {
    flow: Flow,
    source: usize,
}

impl SplitGraph {
    /// Node-split graph: `in(v) → out(v)` capacity 1 for every node not in `banned`
    /// (other than the receiver, whose `in` is the sink), undirected edges become
    /// `out(u) → in(v)` arcs of unit cost.
    fn build(net: &Network, banned: &[bool]) -> Self {
        let n = net.len();
        let mut flow = Flow::new(2 * n + 1);
        for v in 0..n {
            if !banned[v] && v != net.receiver {
                flow.add_edge(in_node(v), out_node(v), 1, 0);
            }
        }
        for (a, b) in net.edges() {
            flow.add_edge(out_node(a), in_node(b), 2, 1);
            flow.add_edge(out_node(b), in_node(a), 2, 1);
        }
        SplitGraph { flow, source: 2 * n }
    }

    /// Consumes one unit of flow leaving `out(v)` and returns the node it enters.
    fn take_flow_edge(&mut self, from: usize) -> Option<NodeIx> {
        for &e in &self.flow.adj[from] {
            let edge = &self.flow.edges[e];
            if e % 2 == 0 && edge.cost == 1 && edge.flow > 0 {
                let to = edge.to;
                self.flow.edges[e].flow -= 1;
                return Some(to / 2);
            }
        }
        None
    }
}

#[derive(Clone)]
struct FlowEdge {
    to: usize,
    cap: i32,
    flow: i32,
    cost: i32,
}

/// Small min-cost flow solver (successive shortest paths, Bellman-Ford).
struct Flow {
    edges: Vec<FlowEdge>,
    adj: Vec<Vec<usize>>,
    total_cost: i64,
}

impl Flow {
    fn new(n: usize) -> Self {
        Flow { edges: Vec::new(), adj: vec![Vec::new(); n], total_cost: 0 }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: i32, cost: i32) {
        self.adj[from].push(self.edges.len());
        self.edges.push(FlowEdge { to, cap, flow: 0, cost });
        self.adj[to].push(self.edges.len());
        self.edges.push(FlowEdge { to: from, cap: 0, flow: 0, cost: -cost });
    }

    fn residual(&self, e: usize) -> i32 {
        self.edges[e].cap - self.edges[e].flow
    }

    /// Pushes up to `k` unit augmentations; returns the number pushed.
    fn augment(&mut self, src: usize, sink: usize, k: usize) -> usize {
        let n = self.adj.len();
        for pushed in 0..k {
            let mut dist = vec![i64::MAX; n];
            let mut prev = vec![usize::MAX; n];
            dist[src] = 0;
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    if dist[u] == i64::MAX {
                        continue;
                    }
                    for &e in &self.adj[u] {
                        if self.residual(e) <= 0 {
                            continue;
                        }
                        let v = self.edges[e].to;
                        let nd = dist[u] + self.edges[e].cost as i64;
                        if nd < dist[v] {
                            dist[v] = nd;
                            prev[v] = e;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if dist[sink] == i64::MAX {
                return pushed;
            }
            let mut v = sink;
            while v != src {
                let e = prev[v];
                self.edges[e].flow += 1;
                self.edges[e ^ 1].flow -= 1;
                v = self.edges[e ^ 1].to;
            }
            self.total_cost += dist[sink];
        }
        k
    }

    fn reachable(&self, src: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut stack = vec![src];
        seen[src] = true;
        while let Some(u) = stack.pop() {
            for &e in &self.adj[u] {
                let v = self.edges[e].to;
                if self.residual(e) > 0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> Network {
        Network::new(["S", "1", "2", "R"], [("S", "1"), ("S", "2"), ("1", "R"), ("2", "R")], "S", "R").unwrap()
    }

    #[test]
    fn diamond_circle() {
        let net = diamond();
        let c = two_disjoint_paths(&net).unwrap();
        let names = |p: &[NodeIx]| p.iter().map(|x| net.name(*x)).collect::<Vec<_>>();
        assert_eq!(names(c.left()), ["S", "1", "R"]);
        assert_eq!(names(c.right()), ["S", "2", "R"]);
        assert_eq!(c.nc(), 4);
        assert_eq!(find_cut_vertex(&net), None);
    }

    #[test]
    fn path_has_cut() {
        let net = Network::new(["S", "1", "R"], [("S", "1"), ("1", "R")], "S", "R").unwrap();
        assert!(two_disjoint_paths(&net).is_none());
        assert_eq!(find_cut_vertex(&net), net.ix("1"));
    }

    #[test]
    fn rejects_bad_networks() {
        let e = Network::new(["S", "R"], [("S", "X")], "S", "R").unwrap_err();
        assert_eq!(e, TopologyError::DanglingEdge("X".into()));
        let e = Network::new(["S", "R"], [("S", "R")], "S", "R").unwrap_err();
        assert_eq!(e, TopologyError::SenderReceiverAdjacent);
        let e = Network::new(["S", "S"], [], "S", "S").unwrap_err();
        assert_eq!(e, TopologyError::DuplicateNode("S".into()));
    }

    #[test]
    fn roles_on_diamond() {
        let net = diamond();
        let c = two_disjoint_paths(&net).unwrap();
        let ix = |n| net.ix(n).unwrap();
        let r1 = circle_roles(&c, ix("1")).unwrap();
        assert_eq!((r1.pred(), r1.succ(), r1.side), (Some(ix("S")), Some(ix("R")), Side::Left));
        let rr = circle_roles(&c, ix("R")).unwrap();
        assert_eq!(
            rr.decode,
            vec![Orientation { pred: ix("1"), succ: ix("2") }, Orientation { pred: ix("2"), succ: ix("1") }]
        );
        let rs = circle_roles(&c, ix("S")).unwrap();
        assert_eq!(rs.monitored, vec![ix("1"), ix("2")]);
    }

    #[test]
    fn reroot_diamond() {
        let net = diamond();
        let c = two_disjoint_paths(&net).unwrap();
        let ix = |n| net.ix(n).unwrap();
        assert_eq!(c.reroot(ix("1"), ix("R")), Some(Rerooted::Adjacent));
        match c.reroot(ix("1"), ix("2")) {
            Some(Rerooted::Circle(cc)) => {
                assert_eq!(cc.left(), &[ix("1"), ix("R"), ix("2")]);
                assert_eq!(cc.right(), &[ix("1"), ix("S"), ix("2")]);
                cc.validate(&net).unwrap();
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
