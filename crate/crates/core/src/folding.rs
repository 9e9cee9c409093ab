//! Stallings folding of labelled graphs over a free alphabet.
//!
//! Edges carry a *formal* label: a reduced word in abstract generator
//! symbols. Every node `v` has an implicit position word `τ(v)` and an edge
//! `u --x--> v` with label `W` records the identity `τ(u)·x = W·τ(v)`, so that
//! reading a closed path at the base node multiplies out to a product of
//! the abstract generators equal to the path label.

use std::collections::VecDeque;

use crate::words::{Letter, Word};

#[derive(Clone, Debug)]
struct FoldEdge {
    from: usize,
    to: usize,
    x: Letter,
    w: Word,
    alive: bool,
}

/// Mutable graph under construction.
#[derive(Clone, Debug, Default)]
pub struct Folder {
    edges: Vec<FoldEdge>,
    adj: Vec<Vec<usize>>,
    parent: Vec<usize>,
}

impl Folder {
    pub fn new() -> Self {
        let mut f = Folder::default();
        f.add_node();
        f
    }

    pub fn base(&self) -> usize {
        0
    }

    pub fn add_node(&mut self) -> usize {
        self.adj.push(Vec::new());
        self.parent.push(self.parent.len());
        self.parent.len() - 1
    }

    pub fn add_edge(&mut self, from: usize, x: Letter, to: usize, w: Word) {
        let id = self.edges.len();
        self.edges.push(FoldEdge { from, to, x, w, alive: true });
        self.adj[from].push(id);
        if to != from {
            self.adj[to].push(id);
        }
    }

    /// Adds a path spelling `word` from `from` to `to`; the last edge carries
    /// `label`. An empty word identifies the two endpoints.
    pub fn add_path(&mut self, from: usize, word: &Word, to: usize, label: Word) {
        let letters = word.letters();
        if letters.is_empty() {
            let (a, b) = (self.find(from), self.find(to));
            if a != b {
                let (keep, gone) = (a.min(b), a.max(b));
                self.merge(gone, keep, Word::empty());
            }
            return;
        }
        let mut cur = from;
        for (i, &x) in letters.iter().enumerate() {
            if i + 1 == letters.len() {
                self.add_edge(cur, x, to, label.clone());
            } else {
                let next = self.add_node();
                self.add_edge(cur, x, next, Word::empty());
                cur = next;
            }
        }
    }

    /// Adds a petal at the base for generator `index` of the formal alphabet.
    pub fn add_generator(&mut self, word: &Word, index: usize) {
        let label = Word::letter(Letter::new(index, false));
        self.add_path(0, word, 0, label);
    }

    pub fn find(&self, mut v: usize) -> usize {
        while self.parent[v] != v {
            v = self.parent[v];
        }
        v
    }

    /// Identifies `gone` with `keep` given `τ(gone) = P·τ(keep)`.
    fn merge(&mut self, gone: usize, keep: usize, p: Word) {
        let pinv = p.inverse();
        let ids = std::mem::take(&mut self.adj[gone]);
        for id in ids {
            let e = &mut self.edges[id];
            if !e.alive {
                continue;
            }
            let mut moved = false;
            if e.from == gone {
                e.from = keep;
                e.w = pinv.mul(&e.w);
                moved = true;
            }
            if e.to == gone {
                e.to = keep;
                e.w = e.w.mul(&p);
                moved = true;
            }
            if moved && !self.adj[keep].contains(&id) {
                self.adj[keep].push(id);
            }
        }
        self.parent[gone] = keep;
    }

    /// Half-edges leaving `u`: `(edge id, letter, target, label)`.
    fn half_edges(&self, u: usize) -> Vec<(usize, Letter, usize, Word)> {
        let mut out = Vec::new();
        for &id in &self.adj[u] {
            let e = &self.edges[id];
            if !e.alive {
                continue;
            }
            if e.from == u {
                out.push((id, e.x, e.to, e.w.clone()));
            }
            if e.to == u {
                out.push((id, e.x.inverse(), e.from, e.w.inverse()));
            }
        }
        out
    }

    fn fold_at(&mut self, u: usize) -> Option<usize> {
        let half = self.half_edges(u);
        for i in 0..half.len() {
            for j in i + 1..half.len() {
                let (id1, x1, v1, w1) = &half[i];
                let (id2, x2, v2, w2) = &half[j];
                if x1 != x2 || id1 == id2 {
                    continue;
                }
                if v1 == v2 {
                    self.edges[*id2].alive = false;
                    return Some(u);
                }
                // τ(v1) = W1⁻¹·W2·τ(v2)
                if v1 < v2 {
                    let p = w2.inverse().mul(w1);
                    self.merge(*v2, *v1, p);
                    return Some(*v1);
                } else {
                    let p = w1.inverse().mul(w2);
                    self.merge(*v1, *v2, p);
                    return Some(*v2);
                }
            }
        }
        None
    }

    /// Folds until deterministic and returns the compacted graph together
    /// with the map from builder node ids to graph node ids.
    pub fn fold(mut self, rank: usize) -> (Graph, Vec<usize>) {
        let mut work: Vec<usize> = (0..self.adj.len()).rev().collect();
        while let Some(u) = work.pop() {
            let u = self.find(u);
            if let Some(touched) = self.fold_at(u) {
                work.push(u);
                work.push(touched);
            }
        }
        let mut ids = vec![usize::MAX; self.adj.len()];
        let mut count = 0;
        for v in 0..self.adj.len() {
            if self.parent[v] == v {
                ids[v] = count;
                count += 1;
            }
        }
        let mut graph = Graph::with_nodes(rank, count);
        for e in self.edges.iter().filter(|e| e.alive) {
            let (a, b) = (ids[e.from], ids[e.to]);
            graph.set(a, e.x, b, e.w.clone());
            graph.set(b, e.x.inverse(), a, e.w.inverse());
        }
        let map = (0..self.adj.len()).map(|v| ids[self.find(v)]).collect();
        (graph, map)
    }
}

/// A folded (deterministic) labelled graph with base node `0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    rank: usize,
    trans: Vec<Vec<Option<(usize, Word)>>>,
}

impl Graph {
    pub fn with_nodes(rank: usize, n: usize) -> Self {
        Graph { rank, trans: vec![vec![None; 2 * rank]; n] }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn node_count(&self) -> usize {
        self.trans.len()
    }

    pub fn edge_count(&self) -> usize {
        self.trans.iter().map(|t| t.iter().filter(|e| e.is_some()).count()).sum::<usize>() / 2
    }

    pub fn add_node(&mut self) -> usize {
        self.trans.push(vec![None; 2 * self.rank]);
        self.trans.len() - 1
    }

    pub fn set(&mut self, from: usize, x: Letter, to: usize, w: Word) {
        self.trans[from][x.code()] = Some((to, w));
    }

    pub fn step(&self, v: usize, x: Letter) -> Option<usize> {
        self.trans[v][x.code()].as_ref().map(|(t, _)| *t)
    }

    pub fn edge(&self, v: usize, x: Letter) -> Option<&(usize, Word)> {
        self.trans[v][x.code()].as_ref()
    }

    /// Outgoing `(letter, target)` pairs of `v` in letter order.
    pub fn out(&self, v: usize) -> impl Iterator<Item = (Letter, usize)> + '_ {
        self.trans[v]
            .iter()
            .enumerate()
            .filter_map(|(c, e)| e.as_ref().map(|(t, _)| (Letter::from_code(c), *t)))
    }

    pub fn degree(&self, v: usize) -> usize {
        self.trans[v].iter().filter(|e| e.is_some()).count()
    }

    /// Reads `w` from `from` as far as possible: `(end node, letters read,
    /// product of formal labels)`.
    pub fn read(&self, from: usize, w: &Word) -> (usize, usize, Word) {
        let mut v = from;
        let mut stack: Vec<Letter> = Vec::new();
        for (i, &x) in w.letters().iter().enumerate() {
            match &self.trans[v][x.code()] {
                Some((t, l)) => {
                    for &y in l.letters() {
                        if stack.last() == Some(&y.inverse()) {
                            stack.pop();
                        } else {
                            stack.push(y);
                        }
                    }
                    v = *t;
                }
                None => return (v, i, Word::from_letters(stack)),
            }
        }
        (v, w.len(), Word::from_letters(stack))
    }

    /// Breadth-first distances from `from` (`usize::MAX` if unreachable).
    pub fn distances(&self, from: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        dist[from] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            for (_, t) in self.out(v) {
                if dist[t] == usize::MAX {
                    dist[t] = dist[v] + 1;
                    queue.push_back(t);
                }
            }
        }
        dist
    }

    /// Shortlex-least shortest path words from `from` to every node.
    pub fn shortest_words(&self, from: usize) -> Vec<Option<Word>> {
        let mut words: Vec<Option<Word>> = vec![None; self.node_count()];
        words[from] = Some(Word::empty());
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            let base = words[v].clone().expect("visited");
            for (x, t) in self.out(v) {
                if words[t].is_none() {
                    words[t] = Some(base.mul_letter(x));
                    queue.push_back(t);
                }
            }
        }
        words
    }

    /// Removes non-protected nodes of degree at most one, repeatedly, and
    /// compacts. Returns the map from old ids to new ids.
    pub fn trim(&self, protected: &[usize]) -> (Graph, Vec<Option<usize>>) {
        let n = self.node_count();
        let mut alive = vec![true; n];
        let mut deg: Vec<usize> = (0..n).map(|v| self.degree(v)).collect();
        let mut stack: Vec<usize> = (0..n).filter(|v| deg[*v] <= 1 && !protected.contains(v)).collect();
        while let Some(v) = stack.pop() {
            if !alive[v] {
                continue;
            }
            alive[v] = false;
            for (_, t) in self.out(v) {
                if alive[t] && t != v {
                    deg[t] -= 1;
                    if deg[t] <= 1 && !protected.contains(&t) {
                        stack.push(t);
                    }
                }
            }
        }
        let mut map = vec![None; n];
        let mut count = 0;
        for v in 0..n {
            if alive[v] {
                map[v] = Some(count);
                count += 1;
            }
        }
        let mut g = Graph::with_nodes(self.rank, count);
        for v in 0..n {
            let Some(a) = map[v] else { continue };
            for (c, e) in self.trans[v].iter().enumerate() {
                if let Some((t, w)) = e {
                    if let Some(b) = map[*t] {
                        g.trans[a][c] = Some((b, w.clone()));
                    }
                }
            }
        }
        (g, map)
    }

    /// Relabels letters through `f` (which must be a permutation of letters
    /// commuting with inversion).
    pub fn map_letters(&self, f: impl Fn(Letter) -> Letter) -> Graph {
        let mut g = Graph::with_nodes(self.rank, self.node_count());
        for v in 0..self.node_count() {
            for (c, e) in self.trans[v].iter().enumerate() {
                if let Some(e) = e {
                    g.trans[v][f(Letter::from_code(c)).code()] = Some(e.clone());
                }
            }
        }
        g
    }

    /// Number of independent cycles of the component of `from`.
    pub fn cycle_rank(&self, from: usize) -> usize {
        let dist = self.distances(from);
        let v = dist.iter().filter(|d| **d != usize::MAX).count();
        let e: usize = (0..self.node_count())
            .filter(|u| dist[*u] != usize::MAX)
            .map(|u| self.degree(u))
            .sum::<usize>()
            / 2;
        e + 1 - v
    }

    /// A free basis of the loops at `from`: `p(u)·x·p(v)⁻¹` for every edge
    /// outside a breadth-first spanning tree, one per inverse pair, in
    /// shortlex order.
    pub fn loop_basis(&self, from: usize) -> Vec<Word> {
        let words = self.shortest_words(from);
        let mut parent: Vec<Option<(usize, Letter)>> = vec![None; self.node_count()];
        for v in 0..self.node_count() {
            if let Some(w) = &words[v] {
                if let Some(x) = w.last() {
                    let (p, _, _) = self.read(from, &w.prefix(w.len() - 1));
                    parent[v] = Some((p, x));
                }
            }
        }
        let mut out = Vec::new();
        for u in 0..self.node_count() {
            let Some(pu) = &words[u] else { continue };
            for (x, v) in self.out(u) {
                if x.is_inverse() {
                    continue;
                }
                if parent[v] == Some((u, x)) || parent[u] == Some((v, x.inverse())) {
                    continue;
                }
                let pv = words[v].as_ref().expect("reachable");
                out.push(pu.mul_letter(x).mul(&pv.inverse()));
            }
        }
        out.sort();
        out
    }

    /// Reduced closed-or-open paths from `from` to `to` of length at most
    /// `max_len`, by label, in no particular order. Stops after `cap` labels.
    pub fn reduced_paths(&self, from: usize, to: usize, max_len: usize, cap: usize) -> Option<Vec<Word>> {
        let mut out = Vec::new();
        let mut stack: Vec<(usize, Vec<Letter>)> = vec![(from, Vec::new())];
        while let Some((v, w)) = stack.pop() {
            if v == to {
                out.push(Word::from_letters(w.iter().copied()));
                if out.len() > cap {
                    return None;
                }
            }
            if w.len() == max_len {
                continue;
            }
            for (x, t) in self.out(v) {
                if w.last() == Some(&x.inverse()) {
                    continue;
                }
                let mut w2 = w.clone();
                w2.push(x);
                stack.push((t, w2));
            }
        }
        Some(out)
    }
}

/// Folds the given words as generators of a subgroup of the free group of
/// the given rank. Edge labels are formal words in generator indices.
pub fn fold_generators(rank: usize, gens: &[Word]) -> Graph {
    let mut f = Folder::new();
    for (i, w) in gens.iter().enumerate() {
        if !w.is_empty() {
            f.add_generator(w, i);
        }
    }
    f.fold(rank).0
}

/// A folded graph with a distinguished base (node 0) and target node; the
/// labels of reduced paths from base to target are exactly a coset `S·c` of
/// the subgroup `S` read by loops at the base.
#[derive(Clone, Debug)]
pub struct Pointed {
    pub graph: Graph,
    pub target: usize,
}

impl Pointed {
    /// The coset `S·c` where `S` is the subgroup of the folded graph.
    pub fn coset(graph: &Graph, c: &Word) -> Pointed {
        let mut graph = graph.clone();
        let (mut v, read, _) = graph.read(0, c);
        for &x in &c.letters()[read..] {
            let t = graph.add_node();
            graph.set(v, x, t, Word::empty());
            graph.set(t, x.inverse(), v, Word::empty());
            v = t;
        }
        Pointed { graph, target: v }
    }

    /// Intersection of two cosets `S₁c₁ ∩ S₂c₂`, or `None` when empty.
    pub fn intersect(&self, other: &Pointed) -> Option<Pointed> {
        let (graph, index) = product(&self.graph, &other.graph);
        let target = *index.get(&(self.target, other.target))?;
        Some(Pointed { graph, target })
    }
}

/// The component of `(0, 0)` in the fiber product of two folded graphs, with
/// the index of every reached pair. Labels are dropped.
pub fn product(a: &Graph, b: &Graph) -> (Graph, std::collections::HashMap<(usize, usize), usize>) {
    use std::collections::HashMap;
    let mut index: HashMap<(usize, usize), usize> = HashMap::from([((0, 0), 0)]);
    let mut pairs = vec![(0usize, 0usize)];
    let mut g = Graph::with_nodes(a.rank, 1);
    let mut i = 0;
    while i < pairs.len() {
        let (u, v) = pairs[i];
        for (x, ut) in a.out(u) {
            if let Some(vt) = b.step(v, x) {
                let id = match index.get(&(ut, vt)) {
                    Some(&id) => id,
                    None => {
                        let id = g.add_node();
                        index.insert((ut, vt), id);
                        pairs.push((ut, vt));
                        id
                    }
                };
                g.set(i, x, id, Word::empty());
            }
        }
        i += 1;
    }
    (g, index)
}
