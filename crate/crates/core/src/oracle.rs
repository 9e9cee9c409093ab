//! Slow reference computations built only from group arithmetic and
//! products of the given generators. Nothing here calls the subgroup
//! engines, so agreement with them is meaningful.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::group::{Element, Group};
use crate::subgroup::Subgroup;
use crate::words::{Letter, Word};

#[derive(Clone, Debug)]
pub struct EnumeratedSubgroupBall {
    pub radius: usize,
    pub depth: usize,
    /// Element to formal witness (letters index the generators).
    pub elements: BTreeMap<Element, Word>,
    /// No new element within the radius appeared at the last depth.
    pub stable: bool,
}

impl EnumeratedSubgroupBall {
    pub fn contains(&self, e: &Element) -> bool {
        self.elements.contains_key(e)
    }
}

/// All products of at most `depth` generators and inverses whose value has
/// geodesic length at most `radius`.
pub fn oracle_subgroup_ball(h: &Subgroup, radius: usize, depth: usize) -> Result<EnumeratedSubgroupBall> {
    let g = h.group();
    let cap = h.budget().element_cap;
    let gens: Vec<(Letter, Element)> = h
        .generators()
        .iter()
        .enumerate()
        .flat_map(|(i, w)| [(Letter::new(i, false), w.clone()), (Letter::new(i, true), w.inverse())])
        .map(|(x, w)| Ok((x, g.evaluate(&w)?)))
        .collect::<Result<_>>()?;
    let mut seen: HashMap<Element, Word> = HashMap::from([(Element::identity(), Word::empty())]);
    let mut frontier = vec![(Element::identity(), Word::empty())];
    let mut last_new_inside = false;
    let mut truncated = false;
    for _ in 0..depth {
        let mut next = Vec::new();
        last_new_inside = false;
        for (e, f) in &frontier {
            for (x, s) in &gens {
                let Some(y) = g.product_within_cap(&[e, s])? else {
                    truncated = true;
                    continue;
                };
                if seen.contains_key(&y) {
                    continue;
                }
                let fy = f.mul_letter(*x);
                if g.geodesic_length(&y) <= radius {
                    last_new_inside = true;
                }
                seen.insert(y.clone(), fy.clone());
                next.push((y, fy));
                if seen.len() > cap {
                    return Err(Error::ResourceCap(format!("oracle product expansion past {cap} elements")));
                }
            }
        }
        frontier = next;
    }
    let elements =
        seen.into_iter().filter(|(e, _)| g.geodesic_length(e) <= radius).collect::<BTreeMap<Element, Word>>();
    Ok(EnumeratedSubgroupBall { radius, depth, elements, stable: !truncated && (depth == 0 || !last_new_inside) })
}

#[derive(Clone, Debug)]
pub struct OracleIntersection {
    /// Elements `e` with `e ∈ H` and `g·e·g⁻¹ ∈ H`, sorted by canonical word.
    pub elements: Vec<(Element, Word)>,
    pub stable: bool,
}

impl OracleIntersection {
    /// Some element has infinite order, read off from `x^m ≠ 1`.
    pub fn has_infinite_order_element(&self, group: &Group) -> Result<bool> {
        let m = group.torsion_order().max(1);
        for (e, _) in &self.elements {
            let mut p = Element::identity();
            for _ in 0..m {
                p = group.multiply(&p, e)?;
            }
            if !p.is_identity() {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// `H ∩ g⁻¹Hg` inside the radius, both memberships read from enumerated
/// product balls; the conjugated side uses radius `radius + 2|g|`.
pub fn oracle_intersection(h: &Subgroup, g: &Word, radius: usize, depth: usize) -> Result<OracleIntersection> {
    let grp = h.group();
    let ge = grp.evaluate(g)?;
    let ginv = grp.inverse(&ge)?;
    let inner = oracle_subgroup_ball(h, radius, depth)?;
    let outer = oracle_subgroup_ball(h, radius + 2 * grp.geodesic_length(&ge), depth)?;
    let mut elements = Vec::new();
    let mut stable = inner.stable && outer.stable;
    for e in inner.elements.keys() {
        let Some(c) = grp.product_within_cap(&[&ge, e, &ginv])? else {
            stable = false;
            continue;
        };
        if outer.contains(&c) {
            elements.push((e.clone(), grp.canonical_word(e)?));
        }
    }
    elements.sort_by(|a, b| a.1.cmp(&b.1));
    Ok(OracleIntersection { elements, stable })
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.parent[a.max(b)] = a.min(b);
        }
    }
}

/// Classes of `ball(radius)` joined by left and right multiplication with
/// generators of `H`, allowing excursions up to `radius + slack`. Classes
/// are listed by their shortlex-least member.
pub fn oracle_double_cosets(h: &Subgroup, radius: usize, slack: usize) -> Result<Vec<Vec<Word>>> {
    let g = h.group();
    let ball = g.ball(radius + slack)?;
    let index: HashMap<&Element, usize> = ball.iter().enumerate().map(|(i, (e, _))| (e, i)).collect();
    let gens: Vec<Element> = h
        .generators()
        .iter()
        .flat_map(|w| [w.clone(), w.inverse()])
        .map(|w| g.evaluate(&w))
        .collect::<Result<_>>()?;
    let mut uf = UnionFind::new(ball.len());
    for (i, (e, _)) in ball.iter().enumerate() {
        for s in &gens {
            for y in [g.multiply(s, e)?, g.multiply(e, s)?] {
                if let Some(&j) = index.get(&y) {
                    uf.union(i, j);
                }
            }
        }
    }
    let mut classes: BTreeMap<usize, Vec<Word>> = BTreeMap::new();
    for (i, (e, w)) in ball.iter().enumerate() {
        if g.geodesic_length(e) <= radius {
            let r = uf.find(i);
            classes.entry(r).or_default().push(w.clone());
        }
    }
    let mut out: Vec<Vec<Word>> = classes
        .into_values()
        .map(|mut c| {
            c.sort();
            c
        })
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct CheckCount {
    pub checks: usize,
    pub disagreements: usize,
}

#[derive(Clone, Debug, Default)]
pub struct CrossCheck {
    pub membership: CheckCount,
    pub cosets: CheckCount,
    pub double_cosets: CheckCount,
    pub intersections: CheckCount,
    pub mismatches: Vec<String>,
    /// Some fast-path answer was bounded; those checks still count.
    pub bounded: bool,
}

impl CrossCheck {
    pub fn total_disagreements(&self) -> usize {
        self.membership.disagreements
            + self.cosets.disagreements
            + self.double_cosets.disagreements
            + self.intersections.disagreements
    }
}

fn tally(count: &mut CheckCount, mismatches: &mut Vec<String>, agree: bool, what: impl FnOnce() -> String) {
    count.checks += 1;
    if !agree {
        count.disagreements += 1;
        mismatches.push(what());
    }
}

/// Compares the subgroup engines with the oracles on every element of
/// `ball(radius)`, all pairs from `ball(pair_radius)`, the double-coset
/// partition of `ball(pair_radius)`, the `extra` words and the intersections
/// with each conjugator, enumerated up to `2K + 8δ + 2 + 2|c|` or `radius`.
pub fn cross_check(
    h: &Subgroup,
    radius: usize,
    pair_radius: usize,
    depth: usize,
    extra: &[Word],
    conjugators: &[Word],
) -> Result<CrossCheck> {
    let g = h.group();
    let mut out = CrossCheck::default();
    let longest_extra = extra.iter().map(|w| g.word_length(w)).collect::<Result<Vec<_>>>()?.into_iter().max();
    let member_radius = radius.max(2 * pair_radius).max(longest_extra.unwrap_or(0));
    let oracle = oracle_subgroup_ball(h, member_radius, depth)?;
    let fmt = |e: &Element| g.format(&g.word_of(e));

    let mut targets: Vec<Element> = g.ball(radius)?.into_iter().map(|(e, _)| e).collect();
    for w in extra {
        targets.push(g.evaluate(w)?);
    }
    // a product of generators found by the engine counts as found by the oracle
    let oracle_member = |e: &Element| -> Result<bool> {
        if oracle.contains(e) {
            return Ok(true);
        }
        match h.member_element(e)?.witness {
            Some(f) => Ok(&g.evaluate(&h.formal_to_word(&f))? == e),
            None => Ok(false),
        }
    };
    for e in &targets {
        let (fast, b) = h.contains(e)?;
        out.bounded |= b;
        tally(&mut out.membership, &mut out.mismatches, fast == oracle_member(e)?, || {
            format!("membership of {}: engine {fast}", fmt(e))
        });
    }

    let pairs = g.ball(pair_radius)?;
    for (i, (x, _)) in pairs.iter().enumerate() {
        for (y, _) in &pairs[i + 1..] {
            let (fast, b) = h.coset_equal_elements(x, y)?;
            out.bounded |= b;
            let o = oracle_member(&g.multiply(x, &g.inverse(y)?)?)?;
            tally(&mut out.cosets, &mut out.mismatches, fast == o, || {
                format!("coset equality of {} and {}: engine {fast}", fmt(x), fmt(y))
            });
        }
    }

    let slack = 2 * h.generators().iter().map(Word::len).max().unwrap_or(0) + 2 * h.k();
    let classes = oracle_double_cosets(h, pair_radius, slack)?;
    let class_of: HashMap<Word, usize> =
        classes.iter().enumerate().flat_map(|(c, ws)| ws.iter().map(move |w| (w.clone(), c))).collect();
    let bound = 2 * pair_radius + slack;
    for (i, (x, wx)) in pairs.iter().enumerate() {
        for (y, wy) in &pairs[i + 1..] {
            let (fast, b) = h.double_coset_equal_elements(x, y, bound)?;
            out.bounded |= b;
            let o = class_of[wx] == class_of[wy];
            tally(&mut out.double_cosets, &mut out.mismatches, fast == o, || {
                format!("double coset equality of {} and {}: engine {fast}", g.format(wx), g.format(wy))
            });
        }
    }

    for c in conjugators {
        let ce = g.evaluate(c)?;
        if h.contains(&ce)?.0 {
            continue;
        }
        let (fast, b) = crate::intersections::multi_intersection_elements(h, std::slice::from_ref(&ce))?;
        out.bounded |= b;
        let reach = radius.max(2 * h.k() + g.delta().times(8) + 2) + 2 * g.word_length(c)?;
        let o = oracle_intersection(h, c, reach, depth)?;
        let agree = match fast {
            crate::intersections::Finiteness::Infinite => o.has_infinite_order_element(g)?,
            crate::intersections::Finiteness::Finite(n) => o.elements.len() == n && !o.has_infinite_order_element(g)?,
            crate::intersections::Finiteness::FiniteBounded => !o.has_infinite_order_element(g)?,
        };
        tally(&mut out.intersections, &mut out.mismatches, agree, || {
            format!("intersection with conjugate by {}: engine {}, oracle found {}", g.format(c), fast.label(), o.elements.len())
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Delta;
    use crate::words::Alphabet;
    use std::sync::Arc;

    fn g6() -> Arc<Group> {
        let a = Alphabet::new(["x1", "x2", "x3", "x4", "t"]).unwrap();
        Arc::new(Group::semidirect(a, Delta::whole(1), "t", 4, &[2, 3, 4, 1]).unwrap())
    }

    fn f2() -> Arc<Group> {
        Arc::new(Group::free(Alphabet::new(["a", "b"]).unwrap(), Delta::whole(0)))
    }

    fn sub(g: &Arc<Group>, gens: &[&str]) -> Subgroup {
        Subgroup::new(g.clone(), gens.iter().map(|s| g.parse(s).unwrap()).collect(), 0).unwrap()
    }

    fn words(g: &Group, b: &EnumeratedSubgroupBall) -> Vec<String> {
        let mut v: Vec<Word> = b.elements.keys().map(|e| g.canonical_word(e).unwrap()).collect();
        v.sort();
        v.iter().map(|w| g.format(w)).collect()
    }

    #[test]
    fn product_balls() {
        let f = f2();
        let h = sub(&f, &["a^2", "b"]);
        let b = oracle_subgroup_ball(&h, 2, 4).unwrap();
        assert_eq!(words(&f, &b), vec!["", "b", "b^-1", "a a", "a^-1 a^-1", "b b", "b^-1 b^-1"]);
        assert!(b.stable);
        for (e, formal) in &b.elements {
            assert_eq!(&f.evaluate(&h.formal_to_word(formal)).unwrap(), e);
        }
        assert_eq!(words(&f, &oracle_subgroup_ball(&h, 5, 0).unwrap()), vec![""]);
        assert_eq!(words(&f, &oracle_subgroup_ball(&Subgroup::trivial(f.clone()), 5, 3).unwrap()), vec![""]);
        let small = oracle_subgroup_ball(&h, 3, 2).unwrap();
        let large = oracle_subgroup_ball(&h, 3, 3).unwrap();
        assert!(small.elements.keys().all(|e| large.contains(e)));
    }

    #[test]
    fn intersections() {
        let g = g6();
        let h1 = sub(&g, &["x1", "x2"]);
        let fmt = |r: &OracleIntersection| r.elements.iter().map(|(_, w)| g.format(w)).collect::<Vec<_>>();
        let r = oracle_intersection(&h1, &g.parse("t").unwrap(), 3, 4).unwrap();
        assert_eq!(
            fmt(&r),
            vec!["", "x2", "x2^-1", "x2 x2", "x2^-1 x2^-1", "x2 x2 x2", "x2^-1 x2^-1 x2^-1"]
        );
        assert!(r.has_infinite_order_element(&g).unwrap());
        let r = oracle_intersection(&h1, &g.parse("t^2").unwrap(), 3, 4).unwrap();
        assert_eq!(fmt(&r), vec![""]);
        let f = f2();
        let r = oracle_intersection(&sub(&f, &["a"]), &f.parse("b").unwrap(), 4, 5).unwrap();
        assert_eq!(r.elements.len(), 1);
    }

    #[test]
    fn double_coset_partitions() {
        let f = f2();
        let classes = oracle_double_cosets(&sub(&f, &["a"]), 1, 2).unwrap();
        let fmt: Vec<Vec<String>> = classes.iter().map(|c| c.iter().map(|w| f.format(w)).collect()).collect();
        assert_eq!(fmt, vec![vec!["", "a", "a^-1"], vec!["b"], vec!["b^-1"]]);
        assert_eq!(oracle_double_cosets(&sub(&f, &["a"]), 0, 2).unwrap().len(), 1);
        let g = g6();
        let classes = oracle_double_cosets(&sub(&g, &["x1", "x2"]), 2, 2).unwrap();
        let firsts: Vec<String> = classes.iter().map(|c| g.format(&c[0])).collect();
        for rep in ["", "t", "t t", "t^-1"] {
            assert!(firsts.contains(&rep.to_string()), "{rep}");
        }
    }

    #[test]
    fn engines_agree_with_oracles() {
        let f = f2();
        for gens in [vec!["a"], vec!["a^2", "b"], vec!["a b", "b a^-1"]] {
            let h = sub(&f, &gens);
            let conj: Vec<Word> = ["b", "a", "a b"].iter().map(|w| f.parse(w).unwrap()).collect();
            let r = cross_check(&h, 4, 2, 8, &[], &conj).unwrap();
            assert_eq!(r.mismatches, Vec::<String>::new(), "{gens:?}");
            assert!(r.membership.checks > 100);
        }
        let g = g6();
        let h1 = sub(&g, &["x1", "x2"]);
        let conj: Vec<Word> = ["t", "t^2", "t^-1", "x3 t"].iter().map(|w| g.parse(w).unwrap()).collect();
        let r = cross_check(&h1, 3, 1, 6, &[], &conj).unwrap();
        assert_eq!(r.mismatches, Vec::<String>::new());
    }
}
