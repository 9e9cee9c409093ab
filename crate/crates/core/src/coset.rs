//! Bounded pieces of the coset graph `Cayley(G,H)` and the geodesic core.
//!
//! Cosets are right cosets `Hg`; a path labelled `w` from `Hg` ends at `Hgw`,
//! so `w` labels a loop at `Hg` exactly when `gwg⁻¹ ∈ H`.

use crate::error::{Error, Result};
use crate::group::Element;
use crate::subgroup::{CosetIndex, Membership, Subgroup};
use crate::words::{Letter, Word};

/// The ball of radius `R` about `H·1` in the coset graph.
#[derive(Clone, Debug)]
pub struct CosetNeighborhood {
    pub radius: usize,
    /// Shortlex-least shortest word reaching each vertex; vertex 0 is `H·1`.
    pub reps: Vec<Word>,
    pub elements: Vec<Element>,
    pub distance: Vec<usize>,
    /// `edges[v][x.code()]`, present when both ends lie in the ball.
    pub edges: Vec<Vec<Option<usize>>>,
    /// Set when some vertex identification rested on bounded membership.
    pub bounded: bool,
}

impl CosetNeighborhood {
    pub fn vertex_count(&self) -> usize {
        self.reps.len()
    }

    pub fn step(&self, v: usize, x: Letter) -> Option<usize> {
        self.edges[v][x.code()]
    }
}

pub fn coset_equal(h: &Subgroup, g1: &Word, g2: &Word) -> Result<Membership> {
    h.membership(&g1.mul(&g2.inverse()))
}

/// `Hg₁H = Hg₂H`; `bound` limits the search when membership is not exact.
pub fn double_coset_equal(h: &Subgroup, g1: &Word, g2: &Word, bound: usize) -> Result<(bool, bool)> {
    let g = h.group();
    h.double_coset_equal_elements(&g.evaluate(g1)?, &g.evaluate(g2)?, bound)
}

/// Membership of `g·w·g⁻¹`, i.e. whether `w` labels a loop at `Hg`.
pub fn loop_label_conjugation_test(h: &Subgroup, g: &Word, w: &Word) -> Result<Membership> {
    h.membership(&g.mul(w).mul(&g.inverse()))
}

pub fn build_neighborhood(h: &Subgroup, radius: usize) -> Result<CosetNeighborhood> {
    let group = h.group();
    if radius > h.budget().radius_cap {
        return Err(Error::RadiusCap { cap: h.budget().radius_cap });
    }
    let letters: Vec<(Letter, Element)> =
        group.letters().map(|x| Ok((x, group.evaluate(&Word::letter(x))?))).collect::<Result<_>>()?;
    let width = 2 * group.alphabet().rank();
    let mut index = CosetIndex::new(h);
    let mut nb = CosetNeighborhood {
        radius,
        reps: vec![Word::empty()],
        elements: vec![Element::identity()],
        distance: vec![0],
        edges: vec![vec![None; width]],
        bounded: false,
    };
    index.insert(h, &Element::identity(), 0)?;
    let mut v = 0;
    while v < nb.reps.len() {
        for (x, xe) in &letters {
            if nb.edges[v][x.code()].is_some() {
                continue;
            }
            let e = group.multiply(&nb.elements[v], xe)?;
            let (found, bounded) = index.find(h, &e)?;
            nb.bounded |= bounded;
            let target = match found {
                Some(u) => u,
                None if nb.distance[v] < radius => {
                    let u = nb.reps.len();
                    index.insert(h, &e, u)?;
                    nb.reps.push(nb.reps[v].mul_letter(*x));
                    nb.elements.push(e);
                    nb.distance.push(nb.distance[v] + 1);
                    nb.edges.push(vec![None; width]);
                    if nb.reps.len() > h.budget().element_cap {
                        return Err(Error::ResourceCap(format!("coset neighborhood of radius {radius}")));
                    }
                    u
                }
                None => continue,
            };
            nb.edges[v][x.code()] = Some(target);
            match nb.edges[target][x.inverse().code()] {
                Some(back) if back != v => {
                    return Err(Error::InternalConsistency(format!(
                        "coset graph edge {} from vertex {} has two targets",
                        group.alphabet().format_letter(x.inverse()),
                        target
                    )))
                }
                _ => nb.edges[target][x.inverse().code()] = Some(v),
            }
        }
        v += 1;
    }
    Ok(nb)
}

/// A deterministic automaton whose loops at the base state spell geodesic
/// words of elements of `H`.
#[derive(Clone, Debug)]
pub struct CoreAutomaton {
    pub reps: Vec<Word>,
    pub elements: Vec<Element>,
    /// Coset-graph distance to `H·1`, when known exactly.
    pub distance: Vec<Option<usize>>,
    pub trans: Vec<Vec<Option<usize>>>,
    /// Set when stabilization was not reached within budget or vertex
    /// identification was bounded.
    pub bounded: bool,
    /// Largest length of traced subgroup elements (0 for folded cores).
    pub rounds: usize,
}

impl CoreAutomaton {
    pub fn state_count(&self) -> usize {
        self.reps.len()
    }

    pub fn edge_count(&self) -> usize {
        self.trans.iter().map(|t| t.iter().filter(|e| e.is_some()).count()).sum::<usize>() / 2
    }

    pub fn step(&self, v: usize, x: Letter) -> Option<usize> {
        self.trans[v][x.code()]
    }

    pub fn accepts(&self, w: &Word) -> bool {
        let mut v = 0;
        for &x in w.letters() {
            match self.step(v, x) {
                Some(t) => v = t,
                None => return false,
            }
        }
        v == 0
    }

    /// Largest known distance of a state from the base.
    pub fn depth(&self) -> Option<usize> {
        self.distance.iter().copied().collect::<Option<Vec<_>>>().map(|d| d.into_iter().max().unwrap_or(0))
    }

    /// All words labelling loops at the base of length at most `max_len`.
    pub fn loops(&self, max_len: usize) -> Vec<Word> {
        let mut out = Vec::new();
        let mut stack: Vec<(usize, Word)> = vec![(0, Word::empty())];
        while let Some((v, w)) = stack.pop() {
            if v == 0 && !w.is_empty() {
                out.push(w.clone());
            }
            if w.len() == max_len {
                continue;
            }
            for (c, t) in self.trans[v].iter().enumerate() {
                let x = Letter::from_code(c);
                if let Some(t) = t {
                    if w.last() != Some(x.inverse()) {
                        stack.push((*t, w.mul_letter(x)));
                    }
                }
            }
        }
        out.sort();
        out
    }
}

pub fn geodesic_core(h: &Subgroup) -> Result<CoreAutomaton> {
    let group = h.group();
    if h.in_kernel() {
        if let Some(graph) = h.kernel_graph() {
            let (graph, _) = graph.trim(&[0]);
            let words = graph.shortest_words(0);
            let dist = graph.distances(0);
            let width = 2 * group.alphabet().rank();
            let mut trans = vec![vec![None; width]; graph.node_count()];
            for (v, row) in trans.iter_mut().enumerate() {
                for (x, t) in graph.out(v) {
                    row[x.code()] = Some(t);
                }
            }
            let reps: Vec<Word> = words.into_iter().map(|w| w.expect("connected")).collect();
            let elements = reps.iter().map(|w| group.evaluate(w)).collect::<Result<_>>()?;
            return Ok(CoreAutomaton {
                reps,
                elements,
                distance: dist.into_iter().map(Some).collect(),
                trans,
                bounded: false,
                rounds: 0,
            });
        }
    }
    traced_core(h)
}

/// Traces every geodesic word of every element of `H ∩ ball(L)` through
/// the coset graph for `L = 1, 2, …` until `L` covers the generators and
/// two consecutive rounds add nothing.
fn traced_core(h: &Subgroup) -> Result<CoreAutomaton> {
    let group = h.group();
    let budget = h.budget();
    let width = 2 * group.alphabet().rank();
    let letters: Vec<Element> =
        group.letters().map(|x| group.evaluate(&Word::letter(x))).collect::<Result<_>>()?;
    let gen_len = h.generators().iter().map(|w| group.word_length(w)).collect::<Result<Vec<_>>>()?;
    let max_gen = gen_len.into_iter().max().unwrap_or(0);
    let limit = (max_gen + budget.depth_cap).min(budget.radius_cap);
    let mut index = CosetIndex::new(h);
    index.insert(h, &Element::identity(), 0)?;
    let mut core = CoreAutomaton {
        reps: vec![Word::empty()],
        elements: vec![Element::identity()],
        distance: vec![Some(0)],
        trans: vec![vec![None; width]],
        bounded: false,
        rounds: 0,
    };
    let mut quiet = 0;
    let mut stable = false;
    for l in 1..=limit {
        let (ball, bounded) = h.subgroup_ball(l)?;
        core.bounded |= bounded;
        let before = (core.state_count(), core.edge_count());
        for (e, _) in ball.iter().filter(|(e, _)| group.geodesic_length(e) == l) {
            for w in group.geodesic_representatives(e, budget.element_cap)? {
                let mut v = 0;
                for &x in w.letters() {
                    let next = match core.trans[v][x.code()] {
                        Some(t) => t,
                        None => {
                            let pe = group.multiply(&core.elements[v], &letters[x.code()])?;
                            let (found, b) = index.find(h, &pe)?;
                            core.bounded |= b;
                            let t = match found {
                                Some(t) => t,
                                None => {
                                    let t = core.reps.len();
                                    index.insert(h, &pe, t)?;
                                    let (rep, b) = h.coset_representative(&pe)?;
                                    core.bounded |= b;
                                    core.reps.push(rep);
                                    core.distance.push(h.coset_length(&pe)?);
                                    core.elements.push(pe);
                                    core.trans.push(vec![None; width]);
                                    t
                                }
                            };
                            core.trans[v][x.code()] = Some(t);
                            core.trans[t][x.inverse().code()] = Some(v);
                            t
                        }
                    };
                    v = next;
                }
                if v != 0 {
                    return Err(Error::InternalConsistency(format!(
                        "geodesic {} of a subgroup element does not close up in the coset graph",
                        group.format(&w)
                    )));
                }
            }
        }
        core.rounds = l;
        if (core.state_count(), core.edge_count()) == before {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if l >= max_gen && quiet >= 2 {
            stable = true;
            break;
        }
    }
    core.bounded |= !stable;
    Ok(core)
}

/// Whether every core state lies within distance `K` of `H·1`. The second
/// component flags answers resting on bounded data.
pub fn check_quasiconvexity(h: &Subgroup, core: &CoreAutomaton) -> Result<(bool, bool)> {
    if let Some(depth) = core.depth() {
        return Ok((depth <= h.k(), core.bounded));
    }
    let nb = build_neighborhood(h, h.k())?;
    let mut bounded = core.bounded || nb.bounded;
    for e in &core.elements {
        let mut inside = false;
        for u in &nb.elements {
            let (same, b) = h.coset_equal_elements(e, u)?;
            bounded |= b;
            if same {
                inside = true;
                break;
            }
        }
        if !inside {
            return Ok((false, bounded));
        }
    }
    Ok((true, bounded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Delta, Group};
    use crate::words::Alphabet;
    use std::sync::Arc;

    fn f2() -> Arc<Group> {
        Arc::new(Group::free(Alphabet::new(["a", "b"]).unwrap(), Delta::whole(0)))
    }

    fn g6() -> Arc<Group> {
        let a = Alphabet::new(["x1", "x2", "x3", "x4", "t"]).unwrap();
        Arc::new(Group::semidirect(a, Delta::whole(1), "t", 4, &[2, 3, 4, 1]).unwrap())
    }

    fn sub(g: &Arc<Group>, gens: &[&str], k: usize) -> Subgroup {
        Subgroup::new(g.clone(), gens.iter().map(|s| g.parse(s).unwrap()).collect(), k).unwrap()
    }

    #[test]
    fn neighborhood_examples() {
        let f = f2();
        let h = sub(&f, &["a"], 0);
        let nb = build_neighborhood(&h, 1).unwrap();
        assert_eq!(nb.vertex_count(), 3);
        let reps: Vec<String> = nb.reps.iter().map(|w| f.format(w)).collect();
        assert_eq!(reps, vec!["", "b", "b^-1"]);
        assert_eq!(build_neighborhood(&h, 0).unwrap().vertex_count(), 1);
        for r in 1..6 {
            let m = build_neighborhood(&h, r).unwrap().vertex_count();
            assert!(m as u128 <= 4 * 3u128.pow(r as u32 - 1));
        }
        // the crude estimate fails once H is small compared to the ball
        let trivial = Subgroup::trivial(f.clone());
        assert_eq!(build_neighborhood(&trivial, 2).unwrap().vertex_count(), 17);
    }

    #[test]
    fn core_examples() {
        let f = f2();
        let c = geodesic_core(&sub(&f, &["a"], 0)).unwrap();
        assert_eq!((c.state_count(), c.edge_count()), (1, 1));
        assert!(c.accepts(&f.parse("a^-3").unwrap()));
        let h = sub(&f, &["a^2", "b"], 1);
        let c = geodesic_core(&h).unwrap();
        assert_eq!(c.state_count(), 2);
        assert_eq!(check_quasiconvexity(&h, &c).unwrap(), (true, false));
        let h0 = sub(&f, &["a^2", "b"], 0);
        assert_eq!(check_quasiconvexity(&h0, &c).unwrap(), (false, false));
        let g = g6();
        let h1 = sub(&g, &["x1", "x2"], 0);
        let c = geodesic_core(&h1).unwrap();
        assert_eq!((c.state_count(), c.edge_count()), (1, 2));
    }

    #[test]
    fn traced_core_for_torsion_subgroup() {
        let g = g6();
        let h = sub(&g, &["x1 t^2"], 1);
        let c = geodesic_core(&h).unwrap();
        assert!(!c.bounded);
        for w in c.loops(4) {
            assert!(h.membership(&w).unwrap().is_in(), "{}", g.format(&w));
        }
        let (ball, _) = h.subgroup_ball(5).unwrap();
        for (_, w) in ball {
            assert!(c.accepts(&w), "{}", g.format(&w));
        }
    }

    #[test]
    fn loop_test_examples() {
        let g = g6();
        let h1 = sub(&g, &["x1", "x2"], 0);
        let w = |s: &str| g.parse(s).unwrap();
        assert!(loop_label_conjugation_test(&h1, &w("t"), &w("x2")).unwrap().is_in());
        assert!(!loop_label_conjugation_test(&h1, &w("t^2"), &w("x1")).unwrap().is_in());
        assert!(loop_label_conjugation_test(&h1, &Word::empty(), &w("x1 x2")).unwrap().is_in());
        assert!(coset_equal(&h1, &w("x1 t"), &w("t")).unwrap().is_in());
        assert!(double_coset_equal(&h1, &w("x3 t^3"), &w("t^3"), 4).unwrap().0);
    }
}
