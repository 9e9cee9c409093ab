//! Finitely generated subgroups: membership with certificates, coset
//! identification and double cosets.
//!
//! Two engines back a [`Subgroup`]:
//!
//! * **folded** (free and semidirect backends): `H_F = H ∩ F` is computed
//!   by Reidemeister–Schreier from a transversal of `H` over its image in
//!   `Z/m`, and folded into a Stallings graph. Everything is exact.
//! * **saturation** (Dehn backend): elements of `H` are found by closing the
//!   short set `Δ = H ∩ ball(2K+1)` inside balls, which is complete for
//!   `K`-quasiconvex `H` once `Δ` is complete; negative answers are bounded.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::{Arc, Mutex};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::folding::{fold_generators, Graph, Pointed};
use crate::group::{BackendKind, Element, Group};
use crate::words::{Letter, Word};

/// Run budgets shared by all searches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    pub radius_cap: usize,
    pub depth_cap: usize,
    pub max_gen_length: usize,
    pub element_cap: usize,
    pub candidate_radius_cap: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { radius_cap: 24, depth_cap: 8, max_gen_length: 8, element_cap: 4_000_000, candidate_radius_cap: 4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    In,
    Out,
    OutBounded,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::In => "in",
            Verdict::Out => "out",
            Verdict::OutBounded => "out_bounded",
        }
    }
}

/// Answer to a membership query. For `In`, `witness` is a formal word in
/// the generators (`Letter::new(i, inv)` stands for generator `i`) whose
/// evaluation has been checked to equal the queried element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Membership {
    pub verdict: Verdict,
    pub witness: Option<Word>,
    pub bound: Option<usize>,
}

impl Membership {
    pub fn is_in(&self) -> bool {
        self.verdict == Verdict::In
    }

    pub fn is_bounded(&self) -> bool {
        self.verdict == Verdict::OutBounded
    }
}

/// Exact identifier of a right coset `Hg` for the folded engine: the node
/// where the kernel part leaves the Stallings graph, the remaining tail and
/// the normalized twist.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CosetKey {
    pub node: usize,
    pub tail: Word,
    pub twist: u32,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgroupConfig {
    pub generators: Vec<String>,
    #[serde(rename = "K")]
    pub k: usize,
}

impl SubgroupConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("subgroup config: {e}")))
    }

    pub fn build(&self, group: Arc<Group>) -> Result<Subgroup> {
        let gens = self.generators.iter().map(|g| group.parse(g)).collect::<Result<Vec<_>>>()?;
        Subgroup::new(group, gens, self.k)
    }
}

#[derive(Debug)]
struct Kernel {
    graph: Graph,
    dist: Vec<usize>,
    /// Kernel word and formal expression of each Schreier generator.
    schreier: Vec<(Word, Word)>,
    step: u32,
    transversal: Vec<Option<(Element, Word)>>,
}

#[derive(Debug)]
struct ShortSet {
    elements: Vec<(Element, Word)>,
    stable: bool,
}

#[derive(Debug, Default)]
struct Saturation {
    short: Mutex<Option<Arc<ShortSet>>>,
    balls: Mutex<HashMap<usize, Arc<BallSet>>>,
}

/// Elements of `H` of geodesic length at most some radius.
#[derive(Debug)]
pub struct BallSet {
    pub elements: HashSet<Element>,
    pub bounded: bool,
}

#[derive(Debug)]
enum Engine {
    Folded(Kernel),
    Saturation(Saturation),
}

#[derive(Debug)]
pub struct Subgroup {
    group: Arc<Group>,
    generators: Vec<Word>,
    elements: Vec<Element>,
    k: usize,
    budget: Budget,
    engine: Engine,
}

impl Subgroup {
    pub fn new(group: Arc<Group>, generators: Vec<Word>, k: usize) -> Result<Self> {
        let mut elements = Vec::with_capacity(generators.len());
        for g in &generators {
            let e = group.evaluate(g)?;
            if e.is_identity() {
                return Err(Error::InvalidConfig(format!(
                    "subgroup generator {:?} is the identity",
                    group.format(g)
                )));
            }
            elements.push(e);
        }
        let engine = if group.has_free_kernel() {
            Engine::Folded(Kernel::build(&group, &elements)?)
        } else {
            Engine::Saturation(Saturation::default())
        };
        Ok(Subgroup { group, generators, elements, k, budget: Budget::default(), engine })
    }

    pub fn trivial(group: Arc<Group>) -> Self {
        Subgroup::new(group, Vec::new(), 0).expect("trivial subgroup")
    }

    pub fn with_budget(mut self, budget: Budget) -> Self {
        self.budget = budget;
        self.reset_caches();
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self.reset_caches();
        self
    }

    fn reset_caches(&mut self) {
        if let Engine::Saturation(sat) = &mut self.engine {
            *sat = Saturation::default();
        }
    }

    /// `H ∩ ball(radius)` as a set, memoized for the saturation engine.
    pub fn ball_set(&self, radius: usize) -> Result<Arc<BallSet>> {
        if let Engine::Saturation(sat) = &self.engine {
            if let Some(b) = sat.balls.lock().expect("ball cache lock").get(&radius) {
                return Ok(b.clone());
            }
        }
        let (ball, bounded) = self.subgroup_ball(radius)?;
        let set = Arc::new(BallSet { elements: ball.into_iter().map(|(e, _)| e).collect(), bounded });
        if let Engine::Saturation(sat) = &self.engine {
            sat.balls.lock().expect("ball cache lock").insert(radius, set.clone());
        }
        Ok(set)
    }

    pub fn group(&self) -> &Arc<Group> {
        &self.group
    }

    pub fn generators(&self) -> &[Word] {
        &self.generators
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    /// `true` when membership and coset identity are decided exactly.
    pub fn is_exact(&self) -> bool {
        matches!(self.engine, Engine::Folded(_))
    }

    /// `true` when the subgroup lies in the free kernel (always true for the
    /// free backend).
    pub fn in_kernel(&self) -> bool {
        match &self.engine {
            Engine::Folded(k) => k.step as usize == k.transversal.len(),
            Engine::Saturation(_) => self.group.kind() == BackendKind::Free,
        }
    }

    /// Stallings graph of `H ∩ F` (folded engine only).
    pub fn kernel_graph(&self) -> Option<&Graph> {
        match &self.engine {
            Engine::Folded(k) => Some(&k.graph),
            Engine::Saturation(_) => None,
        }
    }

    /// Residues of the torsion quotient hit by `H`.
    pub fn image(&self) -> Vec<u32> {
        match &self.engine {
            Engine::Folded(k) => (0..k.transversal.len() as u32).step_by(k.step as usize).collect(),
            Engine::Saturation(_) => vec![0],
        }
    }

    /// Element of `H` with the given twist chosen as transversal (kernel
    /// word, twist).
    pub fn transversal(&self, r: u32) -> Option<&Element> {
        match &self.engine {
            Engine::Folded(k) => k.transversal.get(r as usize)?.as_ref().map(|(e, _)| e),
            Engine::Saturation(_) => (r == 0).then_some(&IDENTITY),
        }
    }

    /// Evaluates a formal word in the generators to a group word.
    pub fn formal_to_word(&self, formal: &Word) -> Word {
        Word::from_letters(formal.letters().iter().flat_map(|x| {
            let g = &self.generators[x.generator()];
            if x.is_inverse() { g.inverse() } else { g.clone() }.into_letters()
        }))
    }

    /// The factors of a formal witness as words (`g` or `g⁻¹`).
    pub fn witness_factors(&self, formal: &Word) -> Vec<Word> {
        formal
            .letters()
            .iter()
            .map(|x| {
                let g = &self.generators[x.generator()];
                if x.is_inverse() {
                    g.inverse()
                } else {
                    g.clone()
                }
            })
            .collect()
    }

    fn certify(&self, e: &Element, formal: Word) -> Result<Membership> {
        let value = self.group.evaluate(&self.formal_to_word(&formal))?;
        if &value != e {
            return Err(Error::InternalConsistency(format!(
                "membership witness evaluates to {} instead of {}",
                self.group.format(&self.group.word_of(&value)),
                self.group.format(&self.group.word_of(e))
            )));
        }
        Ok(Membership { verdict: Verdict::In, witness: Some(formal), bound: None })
    }

    pub fn membership(&self, w: &Word) -> Result<Membership> {
        self.member_element(&self.group.evaluate(w)?)
    }

    pub fn member_element(&self, e: &Element) -> Result<Membership> {
        if e.is_identity() {
            return Ok(Membership { verdict: Verdict::In, witness: Some(Word::empty()), bound: None });
        }
        match &self.engine {
            Engine::Folded(k) => match k.witness(&self.group, e)? {
                Some(f) => self.certify(e, f),
                None => Ok(Membership { verdict: Verdict::Out, witness: None, bound: None }),
            },
            Engine::Saturation(_) => {
                let radius = self.group.geodesic_length(e) + self.k;
                let short = self.short_set()?;
                let mut found = None;
                self.close_under(&short.elements, radius, |x, f| {
                    if x == e {
                        found = Some(f.clone());
                        true
                    } else {
                        false
                    }
                })?;
                match found {
                    Some(f) => self.certify(e, f),
                    None => Ok(Membership { verdict: Verdict::OutBounded, witness: None, bound: Some(radius) }),
                }
            }
        }
    }

    /// `(is member, verdict was bounded)`.
    pub fn contains(&self, e: &Element) -> Result<(bool, bool)> {
        let m = self.member_element(e)?;
        Ok((m.is_in(), m.is_bounded()))
    }

    pub fn contains_word(&self, w: &Word) -> Result<(bool, bool)> {
        self.contains(&self.group.evaluate(w)?)
    }

    /// `Hg₁ = Hg₂`, tested as `g₁g₂⁻¹ ∈ H`.
    pub fn coset_equal_elements(&self, g1: &Element, g2: &Element) -> Result<(bool, bool)> {
        let d = self.group.multiply(g1, &self.group.inverse(g2)?)?;
        self.contains(&d)
    }

    // ---- saturation engine ----

    fn short_set(&self) -> Result<Arc<ShortSet>> {
        let Engine::Saturation(sat) = &self.engine else {
            return Err(Error::Precondition("short set is only used by the saturation engine".into()));
        };
        let mut guard = sat.short.lock().expect("short set lock");
        if let Some(s) = guard.as_ref() {
            return Ok(s.clone());
        }
        let target = 2 * self.k + 1;
        let mut gens: Vec<(Element, Word)> = Vec::new();
        for (i, e) in self.elements.iter().enumerate() {
            gens.push((e.clone(), Word::letter(Letter::new(i, false))));
            gens.push((self.group.inverse(e)?, Word::letter(Letter::new(i, true))));
        }
        let start = target.max(self.elements.iter().map(|e| self.group.geodesic_length(e)).max().unwrap_or(0));
        let mut prev: Option<usize> = None;
        let mut quiet = 0;
        let mut stable = false;
        let mut last: Vec<(Element, Word)> = Vec::new();
        let mut radius = start;
        while radius <= self.budget.radius_cap.min(self.group.limits().radius_cap) {
            let mut found: Vec<(Element, Word)> = Vec::new();
            let truncated = self.close_under(&gens, radius, |x, f| {
                if self.group.geodesic_length(x) <= target {
                    found.push((x.clone(), f.clone()));
                }
                false
            })?;
            found.sort_by(|a, b| a.0.cmp(&b.0));
            let n = found.len();
            last = found;
            if truncated {
                break;
            }
            if prev == Some(n) {
                quiet += 1;
                if quiet >= 2 {
                    stable = true;
                    break;
                }
            } else {
                quiet = 0;
            }
            prev = Some(n);
            radius += 1;
        }
        let set = Arc::new(ShortSet { elements: last, stable });
        *guard = Some(set.clone());
        Ok(set)
    }

    /// Breadth-first closure of `{1}` under right multiplication by `steps`
    /// inside `ball(radius)`. `visit` is called on every element reached and
    /// may stop the search by returning `true`. Returns whether products past
    /// the group's tabulated radius were skipped.
    fn close_under(
        &self,
        steps: &[(Element, Word)],
        radius: usize,
        mut visit: impl FnMut(&Element, &Word) -> bool,
    ) -> Result<bool> {
        let mut seen: HashSet<Element> = HashSet::from([Element::identity()]);
        let mut queue: VecDeque<(Element, Word)> = VecDeque::from([(Element::identity(), Word::empty())]);
        if visit(&Element::identity(), &Word::empty()) {
            return Ok(false);
        }
        let mut truncated = false;
        while let Some((e, f)) = queue.pop_front() {
            for (s, fs) in steps {
                let x = match self.group.multiply(&e, s) {
                    Ok(x) => x,
                    Err(Error::RadiusCap { .. }) => {
                        truncated = true;
                        continue;
                    }
                    Err(err) => return Err(err),
                };
                if self.group.geodesic_length(&x) > radius || seen.contains(&x) {
                    continue;
                }
                let fx = f.mul(fs);
                if visit(&x, &fx) {
                    return Ok(truncated);
                }
                seen.insert(x.clone());
                if seen.len() > self.budget.element_cap {
                    return Err(Error::ResourceCap(format!("subgroup closure inside ball({radius})")));
                }
                queue.push_back((x, fx));
            }
        }
        Ok(truncated)
    }

    // ---- cosets ----

    /// Exact coset key (folded engine only).
    pub fn coset_key(&self, e: &Element) -> Result<Option<CosetKey>> {
        match &self.engine {
            Engine::Folded(k) => Ok(Some(k.key(&self.group, e)?)),
            Engine::Saturation(_) => Ok(None),
        }
    }

    /// Distance from `H·1` to `Hg` in the coset graph, when exact.
    pub fn coset_length(&self, e: &Element) -> Result<Option<usize>> {
        match &self.engine {
            Engine::Folded(k) => Ok(Some(k.slices(&self.group, e)?.into_iter().map(|s| s.length).min().unwrap_or(0))),
            Engine::Saturation(_) => Ok(None),
        }
    }

    /// Shortlex-least word among the shortest elements of `Hg`, with a flag
    /// set when the answer rests on bounded membership.
    pub fn coset_representative(&self, e: &Element) -> Result<(Word, bool)> {
        match &self.engine {
            Engine::Folded(k) => {
                let slices = k.slices(&self.group, e)?;
                let best = slices.iter().map(|s| s.length).min().unwrap_or(0);
                let mut out: Option<Word> = None;
                for s in slices.iter().filter(|s| s.length == best) {
                    for p in k.shortest_paths(s.node, self.budget.element_cap)? {
                        let elem = Element { kernel: p.mul(&s.tail), twist: s.twist };
                        let w = self.group.canonical_word(&elem)?;
                        if out.as_ref().map_or(true, |o| w < *o) {
                            out = Some(w);
                        }
                    }
                }
                Ok((out.unwrap_or_default(), false))
            }
            Engine::Saturation(_) => {
                let n = self.group.geodesic_length(e);
                let mut bounded = false;
                for (u, w) in self.group.ball(n)? {
                    let (same, b) = self.coset_equal_elements(&u, e)?;
                    bounded |= b;
                    if same {
                        return Ok((w, bounded));
                    }
                }
                Err(Error::InternalConsistency("coset has no representative within its own length".into()))
            }
        }
    }

    /// `HgH = Hg'H`, exactly when the engine is exact. The second component
    /// flags bounded answers.
    pub fn double_coset_equal_elements(&self, g1: &Element, g2: &Element, bound: usize) -> Result<(bool, bool)> {
        match &self.engine {
            Engine::Folded(k) => Ok((k.double_coset_contains(&self.group, g1, g2)?, false)),
            Engine::Saturation(_) => {
                // g₂ ∈ H g₁ H iff g₁⁻¹ h g₂ ∈ H for some h; search h in H ∩ ball(bound)
                let (hs, mut bounded) = self.subgroup_ball(bound)?;
                let g1inv = self.group.inverse(g1)?;
                for (h, _) in hs {
                    let Some(x) = self.group.product_within_cap(&[&g1inv, &h, g2])? else {
                        bounded = true;
                        continue;
                    };
                    let (inside, b) = self.contains(&x)?;
                    bounded |= b;
                    if inside {
                        return Ok((true, bounded));
                    }
                }
                Ok((false, true))
            }
        }
    }

    /// Minimal geodesic length over `HgH` and an element attaining it
    /// (folded engine only).
    pub fn double_coset_min(&self, g: &Element) -> Result<Option<(usize, Element)>> {
        match &self.engine {
            Engine::Folded(k) => Ok(Some(k.double_coset_min(&self.group, g)?)),
            Engine::Saturation(_) => Ok(None),
        }
    }

    /// All elements of `H` of geodesic length at most `radius` with their
    /// shortlex-least geodesic words, in shortlex order; the flag marks
    /// possibly incomplete enumerations.
    pub fn subgroup_ball(&self, radius: usize) -> Result<(Vec<(Element, Word)>, bool)> {
        let mut out: Vec<(Element, Word)> = Vec::new();
        let mut bounded = false;
        match &self.engine {
            Engine::Folded(k) => {
                out = self
                    .folded_ball(k, radius, self.budget.element_cap)?
                    .ok_or_else(|| Error::ResourceCap(format!("subgroup ball of radius {radius}")))?;
            }
            Engine::Saturation(_) => {
                let short = self.short_set()?;
                let g = &self.group;
                let truncated = self.close_under(&short.elements, radius + self.k, |x, _| {
                    if g.geodesic_length(x) <= radius {
                        out.push((x.clone(), Word::empty()));
                    }
                    false
                })?;
                bounded = !short.stable || truncated;
                for (e, w) in out.iter_mut() {
                    *w = g.canonical_word(e)?;
                }
            }
        }
        out.sort_by(|a, b| a.1.cmp(&b.1));
        Ok((out, bounded))
    }

    /// [`Subgroup::subgroup_ball`] for the folded engine, or `None` when the
    /// ball has more than `limit` elements or the engine is not exact.
    pub fn subgroup_ball_within(&self, radius: usize, limit: usize) -> Result<Option<Vec<(Element, Word)>>> {
        let Engine::Folded(k) = &self.engine else { return Ok(None) };
        let Some(mut out) = self.folded_ball(k, radius, limit)? else { return Ok(None) };
        out.sort_by(|a, b| a.1.cmp(&b.1));
        Ok(Some(out))
    }

    fn folded_ball(&self, k: &Kernel, radius: usize, limit: usize) -> Result<Option<Vec<(Element, Word)>>> {
        let m = self.group.torsion_order();
        let mut out = Vec::new();
        for r in (0..m).step_by(k.step as usize) {
            let Some((a, _)) = &k.transversal[r as usize] else { continue };
            let tw = r.min(m - r) as usize;
            if tw > radius {
                continue;
            }
            let p = Pointed::coset(&k.graph, &a.kernel);
            let Some(paths) = p.graph.reduced_paths(0, p.target, radius - tw, limit) else { return Ok(None) };
            if out.len() + paths.len() > limit {
                return Ok(None);
            }
            for c in paths {
                let e = Element { kernel: c, twist: r };
                let w = self.group.canonical_word(&e)?;
                out.push((e, w));
            }
        }
        Ok(Some(out))
    }

    /// Whether `HxH` meets `gHg⁻¹` (folded engine only).
    pub fn double_coset_meets_conjugate(&self, x: &Element, g: &Element) -> Result<Option<bool>> {
        let Engine::Folded(k) = &self.engine else { return Ok(None) };
        let gw = self.group.canonical_word(g)?;
        let gens: Vec<Word> = self.generators.iter().map(|s| gw.mul(s).mul(&gw.inverse())).collect();
        let conj = Subgroup::new(self.group.clone(), gens, self.k)?;
        let Engine::Folded(ck) = &conj.engine else { unreachable!("same backend") };
        let m = self.group.torsion_order();
        for j in (0..m).step_by(ck.step as usize) {
            let (sigma, _) = ck.transversal[j as usize].as_ref().expect("image residue");
            let coset = Pointed::coset(&ck.graph, &sigma.kernel);
            for c in k.double_pieces(&self.group, x, j)? {
                if k.double_automaton(&self.group, &c, j).meets(&coset) {
                    return Ok(Some(true));
                }
            }
        }
        Ok(Some(false))
    }

    /// `Some(order)` when `H` is finite, `None` when infinite; the flag marks
    /// answers relying on the configured finite-order bound.
    pub fn finiteness(&self) -> Result<(Option<usize>, bool)> {
        match &self.engine {
            Engine::Folded(k) => {
                if k.graph.edge_count() > 0 {
                    Ok((None, false))
                } else {
                    Ok((Some(self.image().len()), false))
                }
            }
            Engine::Saturation(_) => {
                let c = self.group.finite_order_bound().max(1);
                let mut seen: HashSet<Element> = HashSet::from([Element::identity()]);
                let mut queue = VecDeque::from([Element::identity()]);
                while let Some(e) = queue.pop_front() {
                    for s in &self.elements {
                        for x in [self.group.multiply(&e, s)?, self.group.multiply(&e, &self.group.inverse(s)?)?] {
                            if seen.insert(x.clone()) {
                                if seen.len() > c {
                                    return Ok((None, false));
                                }
                                queue.push_back(x);
                            }
                        }
                    }
                }
                Ok((Some(seen.len()), false))
            }
        }
    }

    /// Stallings graph of `g⁻¹(H ∩ F)g` (folded engine only).
    pub fn conjugate_kernel_graph(&self, g: &Element) -> Result<Graph> {
        let Engine::Folded(k) = &self.engine else {
            return Err(Error::Precondition("conjugate kernel graphs need the folded engine".into()));
        };
        let m = self.group.torsion_order();
        let back = (m - g.twist % m) % m;
        let gens: Vec<Word> = k
            .schreier
            .iter()
            .map(|(s, _)| self.group.twist_kernel(&g.kernel.inverse().mul(s).mul(&g.kernel), back))
            .collect();
        Ok(fold_generators(self.group.alphabet().rank(), &gens))
    }

    /// The slice `g⁻¹Hg ∩ F·t^j` as a pointed coset graph, or `None` when
    /// `j` is not in the image (folded engine only).
    pub fn conjugate_slice(&self, g: &Element, j: u32) -> Result<Option<Pointed>> {
        let Engine::Folded(k) = &self.engine else {
            return Err(Error::Precondition("slices need the folded engine".into()));
        };
        let Some(Some((a, _))) = k.transversal.get(j as usize) else { return Ok(None) };
        let graph = self.conjugate_kernel_graph(g)?;
        let ginv = self.group.inverse(g)?;
        let beta = self.group.multiply(&self.group.multiply(&ginv, a)?, g)?;
        Ok(Some(Pointed::coset(&graph, &beta.kernel)))
    }
}

static IDENTITY: Element = Element { kernel: Word::EMPTY, twist: 0 };

struct Slice {
    node: usize,
    tail: Word,
    twist: u32,
    length: usize,
}

impl Kernel {
    fn build(group: &Group, elements: &[Element]) -> Result<Self> {
        let m = group.torsion_order();
        let mut transversal: Vec<Option<(Element, Word)>> = vec![None; m as usize];
        transversal[0] = Some((Element::identity(), Word::empty()));
        let mut queue = VecDeque::from([0u32]);
        let mut steps: Vec<(Element, Word)> = Vec::new();
        for (i, e) in elements.iter().enumerate() {
            steps.push((e.clone(), Word::letter(Letter::new(i, false))));
            steps.push((group.inverse(e)?, Word::letter(Letter::new(i, true))));
        }
        while let Some(r) = queue.pop_front() {
            let (a, fa) = transversal[r as usize].clone().expect("visited residue");
            for (s, fs) in &steps {
                let x = group.multiply(&a, s)?;
                let r2 = x.twist as usize;
                if transversal[r2].is_none() {
                    queue.push_back(x.twist);
                    transversal[r2] = Some((x, fa.mul(fs)));
                }
            }
        }
        let step = (1..m).find(|r| transversal[*r as usize].is_some()).unwrap_or(m);
        let mut schreier: Vec<(Word, Word)> = Vec::new();
        for r in (0..m).step_by(step as usize) {
            let (a, fa) = transversal[r as usize].clone().expect("image residue");
            for (i, s) in elements.iter().enumerate() {
                let x = group.multiply(&a, s)?;
                let (b, fb) = transversal[x.twist as usize].clone().expect("image residue");
                let y = group.multiply(&x, &group.inverse(&b)?)?;
                debug_assert_eq!(y.twist, 0);
                if y.kernel.is_empty() || schreier.iter().any(|(w, _)| *w == y.kernel) {
                    continue;
                }
                let f = fa.mul_letter(Letter::new(i, false)).mul(&fb.inverse());
                schreier.push((y.kernel, f));
            }
        }
        let gens: Vec<Word> = schreier.iter().map(|(w, _)| w.clone()).collect();
        let graph = fold_generators(group.alphabet().rank(), &gens);
        let dist = graph.distances(0);
        Ok(Kernel { graph, dist, schreier, step, transversal })
    }

    fn substitute(&self, w: &Word) -> Word {
        Word::from_letters(w.letters().iter().flat_map(|x| {
            let f = &self.schreier[x.generator()].1;
            if x.is_inverse() { f.inverse() } else { f.clone() }.into_letters()
        }))
    }

    fn witness(&self, group: &Group, e: &Element) -> Result<Option<Word>> {
        let Some((a, fa)) = &self.transversal[e.twist as usize] else { return Ok(None) };
        let c = group.multiply(e, &group.inverse(a)?)?;
        let (end, read, label) = self.graph.read(0, &c.kernel);
        if end != 0 || read != c.kernel.len() {
            return Ok(None);
        }
        Ok(Some(self.substitute(&label).mul(fa)))
    }

    fn key(&self, group: &Group, e: &Element) -> Result<CosetKey> {
        let m = group.torsion_order();
        let j0 = e.twist % self.step;
        let r = (j0 + m - e.twist) % m;
        let (a, _) = self.transversal[r as usize].as_ref().expect("image residue");
        let c = group.multiply(a, e)?;
        let (node, read, _) = self.graph.read(0, &c.kernel);
        Ok(CosetKey { node, tail: c.kernel.suffix_from(read), twist: c.twist })
    }

    fn slices(&self, group: &Group, e: &Element) -> Result<Vec<Slice>> {
        let m = group.torsion_order();
        let mut out = Vec::new();
        for r in (0..m).step_by(self.step as usize) {
            let (a, _) = self.transversal[r as usize].as_ref().expect("image residue");
            let c = group.multiply(a, e)?;
            let (node, read, _) = self.graph.read(0, &c.kernel);
            let tail = c.kernel.suffix_from(read);
            let tw = c.twist.min(m - c.twist) as usize;
            out.push(Slice { node, length: self.dist[node] + tail.len() + tw, tail, twist: c.twist });
        }
        Ok(out)
    }

    fn shortest_paths(&self, target: usize, cap: usize) -> Result<Vec<Word>> {
        let mut out = Vec::new();
        let mut stack: Vec<(usize, Word)> = vec![(0, Word::empty())];
        while let Some((v, w)) = stack.pop() {
            if v == target {
                out.push(w);
                if out.len() > cap {
                    return Err(Error::ResourceCap("shortest coset paths".into()));
                }
                continue;
            }
            for (x, t) in self.graph.out(v) {
                if self.dist[t] == self.dist[v] + 1 && self.dist[t] <= self.dist[target] {
                    stack.push((t, w.mul_letter(x)));
                }
            }
        }
        Ok(out)
    }

    /// Automaton for `A·c·B` with `A = H_F` and `B = ψ^j(H_F)`.
    fn double_automaton(&self, group: &Group, c: &Word, j: u32) -> DoubleAutomaton {
        let gens: Vec<Word> = self.schreier.iter().map(|(s, _)| group.twist_kernel(s, j)).collect();
        DoubleAutomaton::new(&self.graph, c, &fold_generators(group.alphabet().rank(), &gens))
    }

    /// Pairs `(a_{r₁}·g·a_{r₂}, j)` covering `HgH ∩ F·t^j`.
    fn double_pieces(&self, group: &Group, g: &Element, j: u32) -> Result<Vec<Word>> {
        let m = group.torsion_order();
        let mut out = Vec::new();
        if (j + m - g.twist) % m % self.step != 0 {
            return Ok(out);
        }
        for r1 in (0..m).step_by(self.step as usize) {
            let r2 = (2 * m + j - g.twist - r1) % m;
            let (a1, _) = self.transversal[r1 as usize].as_ref().expect("image residue");
            let (a2, _) = self.transversal[r2 as usize].as_ref().expect("image residue");
            let c = group.multiply(&group.multiply(a1, g)?, a2)?;
            debug_assert_eq!(c.twist, j);
            out.push(c.kernel);
        }
        Ok(out)
    }

    fn double_coset_contains(&self, group: &Group, g: &Element, g2: &Element) -> Result<bool> {
        for c in self.double_pieces(group, g, g2.twist)? {
            if self.double_automaton(group, &c, g2.twist).accepts(&g2.kernel) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn double_coset_min(&self, group: &Group, g: &Element) -> Result<(usize, Element)> {
        let m = group.torsion_order();
        let mut best: Option<(usize, Element)> = None;
        for j in 0..m {
            let tw = j.min(m - j) as usize;
            for c in self.double_pieces(group, g, j)? {
                let w = self.double_automaton(group, &c, j).shortest();
                let cand = (w.len() + tw, Element { kernel: w, twist: j });
                if best.as_ref().map_or(true, |b| cand.0 < b.0 || (cand.0 == b.0 && cand.1 < b.1)) {
                    best = Some(cand);
                }
            }
        }
        Ok(best.expect("double coset is nonempty"))
    }
}

/// Nondeterministic automaton whose accepted words freely reduce onto
/// `A·c·B`: the graph of `A` at `α`, a path reading `c`, the graph of `B` at
/// `β`, closed under empty moves along paths that reduce to the identity.
struct DoubleAutomaton {
    edges: Vec<Vec<(Letter, usize)>>,
    eps: Vec<Vec<bool>>,
    beta: usize,
}

impl DoubleAutomaton {
    fn new(a: &Graph, c: &Word, b: &Graph) -> Self {
        let stem = c.len().saturating_sub(1);
        let n = a.node_count() + stem + b.node_count();
        let beta = a.node_count() + stem;
        let mut edges: Vec<Vec<(Letter, usize)>> = vec![Vec::new(); n];
        for v in 0..a.node_count() {
            edges[v].extend(a.out(v));
        }
        for v in 0..b.node_count() {
            edges[beta + v].extend(b.out(v).map(|(x, t)| (x, beta + t)));
        }
        let mut eps = vec![vec![false; n]; n];
        for (v, row) in eps.iter_mut().enumerate() {
            row[v] = true;
        }
        if c.is_empty() {
            eps[0][beta] = true;
        }
        let mut prev = 0;
        for (i, &x) in c.letters().iter().enumerate() {
            let next = if i + 1 == c.len() { beta } else { a.node_count() + i };
            edges[prev].push((x, next));
            prev = next;
        }
        let mut out = DoubleAutomaton { edges, eps, beta };
        out.saturate();
        out
    }

    fn saturate(&mut self) {
        let n = self.edges.len();
        loop {
            for k in 0..n {
                for i in 0..n {
                    if self.eps[i][k] {
                        for j in 0..n {
                            if self.eps[k][j] {
                                self.eps[i][j] = true;
                            }
                        }
                    }
                }
            }
            let mut changed = false;
            for p in 0..n {
                for &(x, p1) in &self.edges[p] {
                    for q1 in 0..n {
                        if !self.eps[p1][q1] {
                            continue;
                        }
                        for &(y, q) in &self.edges[q1] {
                            if y == x.inverse() && !self.eps[p][q] {
                                self.eps[p][q] = true;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                return;
            }
        }
    }

    fn closure(&self, states: &[bool]) -> Vec<bool> {
        let n = self.edges.len();
        let mut out = vec![false; n];
        for (p, _) in states.iter().enumerate().filter(|(_, s)| **s) {
            for q in 0..n {
                out[q] |= self.eps[p][q];
            }
        }
        out
    }

    /// Whether some accepted element lies in the coset read by `coset`.
    fn meets(&self, coset: &Pointed) -> bool {
        let mut seen: HashSet<(usize, usize)> = HashSet::from([(0, 0)]);
        let mut queue = VecDeque::from([(0usize, 0usize)]);
        while let Some((p, v)) = queue.pop_front() {
            if p == self.beta && v == coset.target {
                return true;
            }
            let eps = (0..self.edges.len()).filter(|&q| self.eps[p][q]).map(|q| (q, v));
            let letters = self.edges[p].iter().filter_map(|&(x, q)| coset.graph.step(v, x).map(|u| (q, u)));
            for next in eps.chain(letters).collect::<Vec<_>>() {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        false
    }

    fn accepts(&self, w: &Word) -> bool {
        let n = self.edges.len();
        let mut states = vec![false; n];
        states[0] = true;
        states = self.closure(&states);
        for &x in w.letters() {
            let mut next = vec![false; n];
            for (p, _) in states.iter().enumerate().filter(|(_, s)| **s) {
                for &(y, q) in &self.edges[p] {
                    if y == x {
                        next[q] = true;
                    }
                }
            }
            states = self.closure(&next);
        }
        states[self.beta]
    }

    /// A shortest element of the accepted set.
    fn shortest(&self) -> Word {
        let n = self.edges.len();
        let mut dist = vec![usize::MAX; n];
        let mut prev: Vec<Option<(usize, Option<Letter>)>> = vec![None; n];
        let mut queue = VecDeque::from([0usize]);
        dist[0] = 0;
        while let Some(p) = queue.pop_front() {
            for q in 0..n {
                if self.eps[p][q] && dist[p] < dist[q] {
                    dist[q] = dist[p];
                    prev[q] = Some((p, None));
                    queue.push_front(q);
                }
            }
            for &(x, q) in &self.edges[p] {
                if dist[p] + 1 < dist[q] {
                    dist[q] = dist[p] + 1;
                    prev[q] = Some((p, Some(x)));
                    queue.push_back(q);
                }
            }
        }
        let mut letters = Vec::new();
        let mut v = self.beta;
        while let Some((p, x)) = prev[v] {
            letters.extend(x);
            v = p;
        }
        letters.reverse();
        let w = Word::from_letters(letters);
        debug_assert_eq!(w.len(), dist[self.beta]);
        w
    }
}

/// Coset-key index used to identify vertices of coset graphs: exact keys
/// for the folded engine, pairwise membership scans otherwise.
pub(crate) enum CosetIndex {
    Keyed(HashMap<CosetKey, usize>),
    Scan(Vec<Element>),
}

impl CosetIndex {
    pub(crate) fn new(h: &Subgroup) -> Self {
        if h.is_exact() {
            CosetIndex::Keyed(HashMap::new())
        } else {
            CosetIndex::Scan(Vec::new())
        }
    }

    /// Finds the vertex of `Hg`; the flag marks bounded comparisons.
    pub(crate) fn find(&self, h: &Subgroup, g: &Element) -> Result<(Option<usize>, bool)> {
        match self {
            CosetIndex::Keyed(map) => {
                let key = h.coset_key(g)?.expect("keyed index needs exact engine");
                Ok((map.get(&key).copied(), false))
            }
            CosetIndex::Scan(reps) => {
                let mut bounded = false;
                for (i, r) in reps.iter().enumerate() {
                    let (same, b) = h.coset_equal_elements(g, r)?;
                    bounded |= b;
                    if same {
                        return Ok((Some(i), bounded));
                    }
                }
                Ok((None, bounded))
            }
        }
    }

    /// Registers `Hg` under the next vertex id (must not be present).
    pub(crate) fn insert(&mut self, h: &Subgroup, g: &Element, id: usize) -> Result<()> {
        match self {
            CosetIndex::Keyed(map) => {
                let key = h.coset_key(g)?.expect("keyed index needs exact engine");
                map.insert(key, id);
            }
            CosetIndex::Scan(reps) => {
                debug_assert_eq!(reps.len(), id);
                reps.push(g.clone());
            }
        }
        Ok(())
    }
}
