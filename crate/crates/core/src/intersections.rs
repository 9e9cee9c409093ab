//! Intersections of conjugates `H ∩ g⁻¹Hg`, their finiteness, the loop
//! splitting procedure and fiber products of subgroup graphs.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use crate::coset::build_neighborhood;
use crate::error::{Error, Result};
use crate::folding::{product, Pointed};
use crate::group::Element;
use crate::subgroup::{CosetKey, Subgroup};
use crate::words::Word;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Finiteness {
    Finite(usize),
    Infinite,
    FiniteBounded,
}

impl Finiteness {
    pub fn is_infinite(self) -> bool {
        self == Finiteness::Infinite
    }

    pub fn label(self) -> String {
        match self {
            Finiteness::Finite(n) => format!("finite({n})"),
            Finiteness::Infinite => "infinite".into(),
            Finiteness::FiniteBounded => "finite_bounded".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct IntersectionReport {
    /// Generators in shortlex order, each certified to lie in both subgroups.
    pub generating_set: Vec<Word>,
    /// Every certified element found by enumeration (enumeration route).
    pub elements: Vec<Word>,
    /// Coset count `M` of the neighborhood used for the length bound.
    pub m: Option<usize>,
    /// The theoretical length bound; generators are shorter than this.
    pub length_bound: Option<u128>,
    /// Largest geodesic length actually enumerated.
    pub swept_length: usize,
    pub theoretical_bound_swept: bool,
    /// Free basis of the kernel part (fiber-product route).
    pub basis: Option<Vec<Word>>,
    pub rank: Option<usize>,
    pub finiteness: Option<Finiteness>,
    pub bounded: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitResult {
    pub h1: Word,
    pub h2: Word,
    pub i: usize,
    pub j: usize,
    pub m: usize,
}

fn ensure_outside(h: &Subgroup, g: &Word) -> Result<()> {
    if h.membership(g)?.is_in() {
        return Err(Error::InvalidConjugator(format!("{} lies in H", h.group().format(g))));
    }
    Ok(())
}

/// Coset count of `N_{2δ+K+|g|}(H·1)`, or `None` when it exceeds budget.
pub fn theorem_m(h: &Subgroup, g: &Word) -> Result<Option<usize>> {
    let group = h.group();
    let radius = group.delta().halves() as usize + h.k() + group.word_length(g)?;
    match build_neighborhood(h, radius) {
        Ok(nb) => Ok(Some(nb.vertex_count())),
        Err(Error::ResourceCap(_)) | Err(Error::RadiusCap { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Generators of `H ∩ g⁻¹Hg` by enumerating `H` up to the theorem's length
/// bound `2|g| + 2M² + 1`, capped at the budget's `max_gen_length`.
pub fn conjugate_intersection_generators(h: &Subgroup, g: &Word) -> Result<IntersectionReport> {
    ensure_outside(h, g)?;
    let group = h.group();
    let glen = group.word_length(g)?;
    let m = theorem_m(h, g)?;
    let bound = m.map(|m| 2 * glen as u128 + 2 * (m as u128) * (m as u128) + 1);
    let cap = h.budget().max_gen_length;
    let swept_length = match bound {
        Some(b) => (b - 1).min(cap as u128) as usize,
        None => cap,
    };
    let theoretical_bound_swept = bound.is_some_and(|b| b - 1 <= cap as u128);
    let (ball, mut bounded) = h.subgroup_ball(swept_length)?;
    let ge = group.evaluate(g)?;
    let ginv = group.inverse(&ge)?;
    let mut elements = Vec::new();
    for (s, w) in ball {
        if s.is_identity() {
            continue;
        }
        let conj = group.multiply(&group.multiply(&ge, &s)?, &ginv)?;
        let (inside, b) = h.contains(&conj)?;
        bounded |= b;
        if inside {
            elements.push(w);
        }
    }
    let generating_set = independent_generators(h, &elements)?;
    Ok(IntersectionReport {
        generating_set,
        elements,
        m,
        length_bound: bound,
        swept_length,
        theoretical_bound_swept,
        basis: None,
        rank: None,
        finiteness: None,
        bounded,
    })
}

/// Keeps each element not already in the subgroup generated by the
/// previously kept ones.
fn independent_generators(h: &Subgroup, elements: &[Word]) -> Result<Vec<Word>> {
    let mut kept: Vec<Word> = Vec::new();
    for w in elements {
        let sub = Subgroup::new(h.group().clone(), kept.clone(), 0)?.with_budget(h.budget());
        if !sub.membership(w)?.is_in() {
            kept.push(w.clone());
        }
    }
    Ok(kept)
}

/// `A ∩ B` through the fiber product of Stallings graphs of the kernel
/// parts, plus one element per common torsion slice.
pub fn fiber_product_intersection(a: &Subgroup, b: &Subgroup) -> Result<IntersectionReport> {
    let group = a.group();
    if !Arc::ptr_eq(group, b.group()) {
        return Err(Error::Precondition("subgroups of different groups".into()));
    }
    let (Some(ga), Some(gb)) = (a.kernel_graph(), b.kernel_graph()) else {
        return Err(Error::Precondition("fiber products need exact membership".into()));
    };
    let (prod, _) = product(ga, gb);
    let (core, _) = prod.trim(&[0]);
    let basis_words = core.loop_basis(0);
    let rank = basis_words.len();
    let mut gens: Vec<Element> = basis_words.iter().map(|w| Element { kernel: w.clone(), twist: 0 }).collect();
    let image_b: HashSet<u32> = b.image().into_iter().collect();
    let mut slices = 0;
    for j in a.image() {
        if !image_b.contains(&j) {
            continue;
        }
        let pa = Pointed::coset(ga, &a.transversal(j).expect("image").kernel);
        let pb = Pointed::coset(gb, &b.transversal(j).expect("image").kernel);
        if let Some(p) = pa.intersect(&pb) {
            slices += 1;
            if j != 0 {
                let x = p.graph.shortest_words(0)[p.target].clone().expect("target reachable");
                gens.push(Element { kernel: x, twist: j });
            }
        }
    }
    let mut generating_set = Vec::new();
    for e in &gens {
        let w = group.canonical_word(e)?;
        if !(a.contains(e)?.0 && b.contains(e)?.0) {
            return Err(Error::InternalConsistency(format!(
                "fiber-product generator {} is not in both subgroups",
                group.format(&w)
            )));
        }
        generating_set.push(w);
    }
    generating_set.sort();
    let finiteness = if rank > 0 { Finiteness::Infinite } else { Finiteness::Finite(slices) };
    Ok(IntersectionReport {
        generating_set,
        elements: Vec::new(),
        m: None,
        length_bound: None,
        swept_length: 0,
        theoretical_bound_swept: true,
        basis: Some(basis_words),
        rank: Some(rank),
        finiteness: Some(finiteness),
        bounded: false,
    })
}

/// `⟨a⟩ = ⟨b⟩` by mutual containment of generators (exact engines).
pub fn same_subgroup(h: &Subgroup, a: &[Word], b: &[Word]) -> Result<bool> {
    let group = h.group();
    let sa = Subgroup::new(group.clone(), a.to_vec(), 0)?.with_budget(h.budget());
    let sb = Subgroup::new(group.clone(), b.to_vec(), 0)?.with_budget(h.budget());
    if !sa.is_exact() {
        return Err(Error::Precondition("subgroup equality needs exact membership".into()));
    }
    for w in b {
        if !sa.membership(w)?.is_in() {
            return Ok(false);
        }
    }
    for w in a {
        if !sb.membership(w)?.is_in() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Finiteness of `H ∩ g⁻¹Hg`, with a flag for bounded answers.
pub fn is_intersection_infinite(h: &Subgroup, g: &Word) -> Result<(Finiteness, bool)> {
    ensure_outside(h, g)?;
    let e = h.group().evaluate(g)?;
    multi_intersection_elements(h, &[e])
}

/// Finiteness of `H ∩ ⋂ cᵢ⁻¹Hcᵢ` for conjugators in pairwise distinct
/// cosets, none of them in `H`.
pub fn multi_intersection_infinite(h: &Subgroup, conjugators: &[Word]) -> Result<(Finiteness, bool)> {
    let group = h.group();
    let elems: Vec<Element> = conjugators.iter().map(|c| group.evaluate(c)).collect::<Result<_>>()?;
    let mut all = vec![Element::identity()];
    all.extend(elems.iter().cloned());
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            if h.coset_equal_elements(&all[i], &all[j])?.0 {
                return Err(Error::Precondition(format!(
                    "conjugators {} and {} lie in the same coset",
                    group.format(&group.word_of(&all[i])),
                    group.format(&group.word_of(&all[j]))
                )));
            }
        }
    }
    multi_intersection_elements(h, &elems)
}

/// As [`multi_intersection_infinite`] without the coset precondition check.
pub fn multi_intersection_elements(h: &Subgroup, conjugators: &[Element]) -> Result<(Finiteness, bool)> {
    if h.is_exact() {
        let mut all = vec![Element::identity()];
        all.extend(conjugators.iter().cloned());
        let mut order = 0;
        let mut infinite = false;
        for j in h.image() {
            let mut acc: Option<Pointed> = None;
            let mut empty = false;
            for c in &all {
                let slice = h.conjugate_slice(c, j)?.expect("residue in image");
                acc = match acc.take() {
                    None => Some(slice),
                    Some(p) => match p.intersect(&slice) {
                        Some(q) => Some(q),
                        None => {
                            empty = true;
                            break;
                        }
                    },
                };
            }
            if empty {
                continue;
            }
            order += 1;
            if j == 0 && acc.expect("nonempty").graph.cycle_rank(0) > 0 {
                infinite = true;
            }
        }
        return Ok((if infinite { Finiteness::Infinite } else { Finiteness::Finite(order) }, false));
    }
    saturation_intersection(h, conjugators)
}

/// Enumerates `H ∩ ⋂ cᵢ⁻¹Hcᵢ` inside the capped ball and decides finiteness
/// by closing the found elements under multiplication.
fn saturation_intersection(h: &Subgroup, conjugators: &[Element]) -> Result<(Finiteness, bool)> {
    let group = h.group();
    let cap = h.budget().max_gen_length;
    let reach = conjugators.iter().map(|c| 2 * group.geodesic_length(c)).max().unwrap_or(0);
    let (ball, mut bounded) = h.subgroup_ball(cap)?;
    let outer = h.ball_set(cap + reach)?;
    bounded |= outer.bounded;
    let mut found: Vec<Element> = Vec::new();
    'outer: for (s, _) in ball {
        if s.is_identity() {
            continue;
        }
        for c in conjugators {
            let Some(conj) = group.product_within_cap(&[c, &s, &group.inverse(c)?])? else {
                bounded = true;
                continue 'outer;
            };
            if !outer.elements.contains(&conj) {
                continue 'outer;
            }
        }
        found.push(s);
    }
    let c = group.finite_order_bound().max(1);
    let mut seen: HashSet<Element> = HashSet::from([Element::identity()]);
    let mut queue = VecDeque::from([Element::identity()]);
    while let Some(e) = queue.pop_front() {
        for s in &found {
            let x = group.multiply(&e, s)?;
            if seen.insert(x.clone()) {
                if seen.len() > c {
                    return Ok((Finiteness::Infinite, bounded));
                }
                queue.push_back(x);
            }
        }
    }
    Ok((Finiteness::FiniteBounded, true))
}

/// The conjugate `g⁻¹Hg` with generators `g⁻¹sg` and constant
/// `K + 2δ + 2|g|`.
pub fn conjugate_handle(h: &Subgroup, g: &Word) -> Result<Subgroup> {
    let group = h.group();
    let gens: Vec<Word> = h.generators().iter().map(|s| g.inverse().mul(s).mul(g)).collect();
    let k = h.k() + group.delta().halves() as usize + 2 * group.word_length(g)?;
    Ok(Subgroup::new(group.clone(), gens, k)?.with_budget(h.budget()))
}

/// `(M_A·M_B, M_A, M_B)` for neighborhoods of radius `max(K_A, K_B)`.
pub fn intersection_quasiconvexity_constant(a: &Subgroup, b: &Subgroup) -> Result<(usize, usize, usize, bool)> {
    let k = a.k().max(b.k());
    let na = build_neighborhood(a, k)?;
    let nb = build_neighborhood(b, k)?;
    Ok((na.vertex_count() * nb.vertex_count(), na.vertex_count(), nb.vertex_count(), na.bounded || nb.bounded))
}

/// All nontrivial elements of `H` of length at most `2K + 1`.
pub fn short_generator_set(h: &Subgroup) -> Result<(Vec<Word>, bool)> {
    let (ball, bounded) = h.subgroup_ball(2 * h.k() + 1)?;
    Ok((ball.into_iter().filter(|(e, _)| !e.is_identity()).map(|(_, w)| w).collect(), bounded))
}

/// Splits `w ∈ H ∩ g⁻¹Hg` with `|w| > M²` as `w = h₁h₂` where both factors
/// lie in `H ∩ g⁻¹Hg`, `|h₁| < 2M² + 1` and `|h₂| < |w|`.
pub fn split_long_loop(h: &Subgroup, g: &Word, w: &Word) -> Result<SplitResult> {
    ensure_outside(h, g)?;
    let group = h.group();
    let ge = group.evaluate(g)?;
    let ginv = group.inverse(&ge)?;
    let we = group.evaluate(w)?;
    let conj = |x: &Element| -> Result<Element> { group.multiply(&group.multiply(&ge, x)?, &ginv) };
    if !h.contains(&we)?.0 || !h.contains(&conj(&we)?)?.0 {
        return Err(Error::Precondition("w must lie in H and g·w·g⁻¹ in H".into()));
    }
    let m = theorem_m(h, g)?.ok_or_else(|| Error::ResourceCap("coset neighborhood for M".into()))?;
    let n = group.geodesic_length(&we);
    if n <= m * m {
        return Err(Error::Precondition(format!("|w| = {n} does not exceed M² = {}", m * m)));
    }
    let w0 = group.canonical_word(&we)?;
    let mut prefix = Element::identity();
    let mut keyed: HashMap<(CosetKey, CosetKey), usize> = HashMap::new();
    let mut scanned: Vec<(Element, Element)> = Vec::new();
    let mut pair = None;
    for pos in 0..=(m * m) {
        if pos > 0 {
            prefix = group.multiply(&prefix, &group.evaluate(&Word::letter(w0.letters()[pos - 1]))?)?;
        }
        let shifted = group.multiply(&ge, &prefix)?;
        if let (Some(k1), Some(k2)) = (h.coset_key(&prefix)?, h.coset_key(&shifted)?) {
            if let Some(&i) = keyed.get(&(k1.clone(), k2.clone())) {
                pair = Some((i, pos));
                break;
            }
            keyed.insert((k1, k2), pos);
            continue;
        }
        let mut hit = None;
        for (i, (e1, e2)) in scanned.iter().enumerate() {
            if h.coset_equal_elements(e1, &prefix)?.0 && h.coset_equal_elements(e2, &shifted)?.0 {
                hit = Some(i);
                break;
            }
        }
        if let Some(i) = hit {
            pair = Some((i, pos));
            break;
        }
        scanned.push((prefix.clone(), shifted));
    }
    let Some((i, j)) = pair else {
        return Err(Error::InternalConsistency(format!(
            "no repeated vertex pair among the first {} positions of a loop of length {n}",
            m * m + 1
        )));
    };
    let t1 = w0.prefix(i);
    let t2 = Word::from_letters(w0.letters()[i..j].iter().copied());
    let t3 = w0.suffix_from(j);
    let h1 = t1.mul(&t2).mul(&t1.inverse());
    let h2 = t1.mul(&t3);
    let e1 = group.evaluate(&h1)?;
    let e2 = group.evaluate(&h2)?;
    let checks = [
        group.multiply(&e1, &e2)? == we,
        h.contains(&e1)?.0,
        h.contains(&e2)?.0,
        h.contains(&conj(&e1)?)?.0,
        h.contains(&conj(&e2)?)?.0,
        group.geodesic_length(&e1) < 2 * m * m + 1,
        group.geodesic_length(&e2) < n,
    ];
    if checks.iter().any(|ok| !ok) {
        return Err(Error::InternalConsistency(format!("split of {} failed its certificates", group.format(w))));
    }
    Ok(SplitResult { h1, h2, i, j, m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Delta, Group};
    use crate::words::Alphabet;

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

    fn fmt(g: &Group, ws: &[Word]) -> Vec<String> {
        ws.iter().map(|w| g.format(w)).collect()
    }

    #[test]
    fn conjugate_intersections_in_example_group() {
        let g = g6();
        let h1 = sub(&g, &["x1", "x2"], 0);
        let w = |s: &str| g.parse(s).unwrap();
        let r = conjugate_intersection_generators(&h1, &w("t")).unwrap();
        assert_eq!(fmt(&g, &r.generating_set), vec!["x2"]);
        let r = conjugate_intersection_generators(&h1, &w("t^2")).unwrap();
        assert!(r.generating_set.is_empty());
        assert_eq!(is_intersection_infinite(&h1, &w("t")).unwrap().0, Finiteness::Infinite);
        assert_eq!(is_intersection_infinite(&h1, &w("t^2")).unwrap().0, Finiteness::Finite(1));
        assert!(matches!(is_intersection_infinite(&h1, &w("x1")), Err(Error::InvalidConjugator(_))));
    }

    #[test]
    fn free_group_examples() {
        let f = f2();
        let w = |s: &str| f.parse(s).unwrap();
        let a = sub(&f, &["a"], 0);
        assert!(conjugate_intersection_generators(&a, &w("b")).unwrap().generating_set.is_empty());
        assert_eq!(is_intersection_infinite(&a, &w("b")).unwrap().0, Finiteness::Finite(1));
        let r = fiber_product_intersection(&sub(&f, &["a^2"], 1), &sub(&f, &["a^3"], 2)).unwrap();
        assert_eq!(fmt(&f, &r.generating_set), vec!["a a a a a a"]);
        let r = fiber_product_intersection(&a, &sub(&f, &["a^2", "b"], 1)).unwrap();
        assert_eq!(fmt(&f, &r.generating_set), vec!["a a"]);
        let r = fiber_product_intersection(&sub(&f, &["a", "b"], 0), &sub(&f, &["b"], 0)).unwrap();
        assert_eq!(fmt(&f, &r.generating_set), vec!["b"]);
        let p = |ws: &[&str]| ws.iter().map(|w| f.parse(w).unwrap()).collect::<Vec<_>>();
        assert!(same_subgroup(&a, &p(&["a b", "b"]), &p(&["a", "b^-1"])).unwrap());
        assert!(!same_subgroup(&a, &p(&["a^2"]), &p(&["a"])).unwrap());
        assert!(same_subgroup(&a, &[], &[]).unwrap());
        let whole = sub(&f, &["a", "b"], 0);
        assert!(matches!(
            split_long_loop(&whole, &w("a"), &w("a^20")),
            Err(Error::InvalidConjugator(_))
        ));
    }

    #[test]
    fn conjugate_handles() {
        let f = f2();
        let h = sub(&f, &["a"], 0);
        let c = conjugate_handle(&h, &f.parse("a b a").unwrap()).unwrap();
        assert_eq!(c.k(), 6);
        let c = conjugate_handle(&h, &Word::empty()).unwrap();
        assert_eq!((c.k(), c.generators().to_vec()), (0, h.generators().to_vec()));
        let g = g6();
        let h1 = sub(&g, &["x1", "x2"], 0);
        let h2 = conjugate_handle(&h1, &g.parse("t").unwrap()).unwrap();
        let gens: Vec<String> = h2.generators().iter().map(|w| g.format(&g.geodesic_word(w).unwrap())).collect();
        assert_eq!(gens, vec!["x2", "x3"]);
    }

    #[test]
    fn multi_intersections() {
        let g = g6();
        let l1 = sub(&g, &["x1", "x2", "x3"], 0);
        let w = |s: &str| g.parse(s).unwrap();
        assert_eq!(multi_intersection_infinite(&l1, &[w("t"), w("t^2")]).unwrap().0, Finiteness::Infinite);
        assert_eq!(multi_intersection_infinite(&l1, &[w("t"), w("t^2"), w("t^3")]).unwrap().0, Finiteness::Finite(1));
        assert_eq!(multi_intersection_infinite(&l1, &[]).unwrap().0, Finiteness::Infinite);
        assert!(multi_intersection_infinite(&l1, &[w("t"), w("x1 t")]).is_err());
    }

    #[test]
    fn quasiconvexity_constants_and_short_sets() {
        let f = f2();
        let a = sub(&f, &["a"], 0);
        assert_eq!(intersection_quasiconvexity_constant(&a, &a).unwrap().0, 1);
        assert_eq!(intersection_quasiconvexity_constant(&a, &sub(&f, &["b"], 0)).unwrap().0, 1);
        assert_eq!(fmt(&f, &short_generator_set(&a).unwrap().0), vec!["a", "a^-1"]);
        let h = sub(&f, &["a^2", "b"], 1);
        let short = fmt(&f, &short_generator_set(&h).unwrap().0);
        for s in ["b", "b^-1", "a a", "a^-1 a^-1"] {
            assert!(short.contains(&s.to_string()), "{s}");
        }
        assert!(short_generator_set(&Subgroup::trivial(f.clone())).unwrap().0.is_empty());
    }

    #[test]
    fn torsion_intersections_count_slices() {
        let g = g6();
        let h = sub(&g, &["t"], 0);
        // ⟨t⟩ ∩ x1⁻¹⟨t⟩x1 is trivial; ⟨t⟩ ∩ (x1x2x3x4)⁻¹⟨t⟩(x1x2x3x4) contains t
        assert_eq!(is_intersection_infinite(&h, &g.parse("x1").unwrap()).unwrap().0, Finiteness::Finite(1));
        let c = g.parse("x1 x2 x3 x4").unwrap();
        let conj = g.evaluate(&c.mul(&g.parse("t").unwrap()).mul(&c.inverse())).unwrap();
        let expect = if h.contains(&conj).unwrap().0 { 4 } else { 1 };
        assert_eq!(is_intersection_infinite(&h, &c).unwrap().0, Finiteness::Finite(expect));
        let r = fiber_product_intersection(&h, &h).unwrap();
        assert_eq!(r.finiteness, Some(Finiteness::Finite(4)));
    }

    #[test]
    fn split_example() {
        let g = g6();
        let h1 = sub(&g, &["x1", "x2"], 0);
        let t = g.parse("t").unwrap();
        let m = theorem_m(&h1, &t).unwrap().unwrap();
        let long = g.parse(&format!("x2^{}", m * m + 1)).unwrap();
        // g·w·g⁻¹ with g = t sends x2 to x1
        let s = split_long_loop(&h1, &t, &long).unwrap();
        assert_eq!(s.h1.mul(&s.h2), long);
        assert!(matches!(split_long_loop(&h1, &t, &g.parse("x2^3").unwrap()), Err(Error::Precondition(_))));
    }
}
