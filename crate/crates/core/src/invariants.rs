//! Weak width, width and height of a quasiconvex subgroup, the candidate
//! sets for the width search, almost-malnormality and the constants report.

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::group::{Element, Group};
use crate::intersections::{multi_intersection_elements, theorem_m, Finiteness};
use crate::subgroup::Subgroup;
use crate::words::Word;

/// Above this many ball elements the full double-coset list is not built.
pub const DOUBLE_COSET_LIST_LIMIT: usize = 4000;

/// Largest subgroup ball swept at the full candidate radius when that radius
/// exceeds the budget cap.
pub const CANDIDATE_BALL_LIMIT: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    PaperGreedy,
    ExactSearch,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::PaperGreedy => "paper",
            Mode::ExactSearch => "exact",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub subject: Vec<Word>,
    pub verdict: Finiteness,
    pub bounded: bool,
}

#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub g_i: Word,
    pub radius: usize,
    /// The radius reached `8K + 24δ`.
    pub swept: bool,
    /// Swept, or certified empty without a search.
    pub complete: bool,
    pub candidates: Vec<Word>,
}

#[derive(Clone, Debug)]
pub struct InvariantReport {
    pub mode: Mode,
    /// Order of `H` when it is finite.
    pub finite_order: Option<usize>,
    pub ball_radius: usize,
    pub l_prime_count: usize,
    pub l_prime: Option<Vec<Word>>,
    pub l_double: Option<Vec<Word>>,
    pub l: Vec<Word>,
    pub weak_width: usize,
    pub l1: Option<Vec<Word>>,
    pub candidates: Vec<CandidateSet>,
    pub l_w: Option<Vec<Word>>,
    pub width: Option<usize>,
    pub width_paper: Option<usize>,
    pub width_exact: Option<usize>,
    pub l_h: Option<Vec<Word>>,
    pub height: Option<usize>,
    pub height_paper: Option<usize>,
    pub height_exact: Option<usize>,
    pub certificates: Vec<Certificate>,
    pub bounded: bool,
}

impl InvariantReport {
    pub fn to_json(&self, group: &Group) -> Value {
        let list = |ws: &[Word]| -> Vec<String> { ws.iter().map(|w| group.format(w)).collect() };
        let opt = |ws: &Option<Vec<Word>>| ws.as_ref().map(|v| list(v));
        json!({
            "mode": self.mode.as_str(),
            "finite_order": self.finite_order,
            "ball_radius": self.ball_radius,
            "L_prime_count": self.l_prime_count,
            "L_prime": opt(&self.l_prime),
            "L_double": opt(&self.l_double),
            "L": list(&self.l),
            "weak_width": self.weak_width,
            "L1": opt(&self.l1),
            "A": self.candidates.iter().map(|c| json!({
                "g_i": group.format(&c.g_i),
                "radius": c.radius,
                "swept": c.swept,
                "complete": c.complete,
                "candidates": list(&c.candidates),
            })).collect::<Vec<_>>(),
            "L_w": opt(&self.l_w),
            "width": self.width,
            "width_paper": self.width_paper,
            "width_exact": self.width_exact,
            "L_h": opt(&self.l_h),
            "height": self.height,
            "height_paper": self.height_paper,
            "height_exact": self.height_exact,
            "certificates": self.certificates.iter().map(|c| json!({
                "subject": list(&c.subject),
                "verdict": c.verdict.label(),
                "bounded": c.bounded,
            })).collect::<Vec<_>>(),
            "bounded": self.bounded,
        })
    }
}

#[derive(Clone, Debug)]
pub struct WidthDecomposition {
    pub h_i: Word,
    pub s_i: Word,
    pub k_i: Word,
    pub target: Word,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MalnormalityVerdict {
    MalnormalUpToBudget { radius: usize },
    NotMalnormal { witness: Word, element: Option<Word> },
}

/// A nonnegative multiple of one half, stored as the count of halves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct HalfInt(pub u64);

impl HalfInt {
    pub fn whole(n: u64) -> Self {
        HalfInt(2 * n)
    }

    /// Integer when whole, otherwise the exact string `"n/2"`.
    pub fn to_json(self) -> Value {
        if self.0 % 2 == 0 {
            json!(self.0 / 2)
        } else {
            json!(format!("{}/2", self.0))
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConstantsReport {
    pub k: usize,
    pub delta: HalfInt,
    pub g_length: usize,
    pub k_g: HalfInt,
    pub m_exact: Option<usize>,
    pub m_crude: Option<u128>,
    pub short_generator_bound: usize,
    pub weak_width_radius: HalfInt,
    pub small_intersection_radius: HalfInt,
    pub s_bound: HalfInt,
    pub k_bound: HalfInt,
    pub candidate_radius: HalfInt,
}

impl ConstantsReport {
    pub fn to_json(&self) -> Value {
        json!({
            "K": self.k,
            "delta": self.delta.to_json(),
            "g_length": self.g_length,
            "K_g": self.k_g.to_json(),
            "M": self.m_exact,
            "M_crude_bound": self.m_crude.map(|m| m.to_string()),
            "short_generator_bound": self.short_generator_bound,
            "weak_width_radius": self.weak_width_radius.to_json(),
            "small_intersection_radius": self.small_intersection_radius.to_json(),
            "s_bound": self.s_bound.to_json(),
            "k_bound": self.k_bound.to_json(),
            "candidate_radius": self.candidate_radius.to_json(),
        })
    }
}

/// `H ∩ a⁻¹Ha ∩ b⁻¹Hb ∩ …` for the members of `set` other than the identity.
fn set_verdict(h: &Subgroup, set: &[Element]) -> Result<(Finiteness, bool)> {
    let others: Vec<Element> = set.iter().filter(|e| !e.is_identity()).cloned().collect();
    multi_intersection_elements(h, &others)
}

/// `a⁻¹Ha ∩ b⁻¹Hb`, conjugated to `H ∩ (ba⁻¹)⁻¹H(ba⁻¹)`.
fn pair_verdict(h: &Subgroup, a: &Element, b: &Element) -> Result<(Finiteness, bool)> {
    let g = h.group();
    let c = g.multiply(b, &g.inverse(a)?)?;
    multi_intersection_elements(h, &[c])
}

struct Universe {
    words: Vec<Word>,
    elements: Vec<Element>,
    /// `adj[i][j]`: the pair intersection is infinite.
    adj: Vec<Vec<bool>>,
}

impl Universe {
    fn build(h: &Subgroup, words: Vec<Word>, certs: &mut Vec<Certificate>, bounded: &mut bool) -> Result<Self> {
        let g = h.group();
        let elements: Vec<Element> = words.iter().map(|w| g.evaluate(w)).collect::<Result<_>>()?;
        let n = words.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let verdicts: Vec<(Finiteness, bool)> = pairs
            .par_iter()
            .map(|&(i, j)| pair_verdict(h, &elements[i], &elements[j]))
            .collect::<Result<_>>()?;
        let mut adj = vec![vec![false; n]; n];
        for (&(i, j), &(v, b)) in pairs.iter().zip(&verdicts) {
            *bounded |= b || v == Finiteness::FiniteBounded;
            adj[i][j] = v.is_infinite();
            adj[j][i] = v.is_infinite();
            certs.push(Certificate { subject: vec![words[i].clone(), words[j].clone()], verdict: v, bounded: b });
        }
        Ok(Universe { words, elements, adj })
    }

    fn max_clique(&self, cap: usize) -> Result<Vec<usize>> {
        let mut best = Vec::new();
        let mut cur = Vec::new();
        let mut visited = 0usize;
        let all: Vec<usize> = (0..self.words.len()).collect();
        self.clique_rec(&all, &mut cur, &mut best, &mut visited, cap)?;
        Ok(best)
    }

    fn clique_rec(
        &self,
        cand: &[usize],
        cur: &mut Vec<usize>,
        best: &mut Vec<usize>,
        visited: &mut usize,
        cap: usize,
    ) -> Result<()> {
        *visited += 1;
        if *visited > cap {
            return Err(Error::ResourceCap("clique search".into()));
        }
        if cur.len() > best.len() {
            *best = cur.clone();
        }
        for (pos, &v) in cand.iter().enumerate() {
            if cur.len() + cand.len() - pos <= best.len() {
                return Ok(());
            }
            let next: Vec<usize> = cand[pos + 1..].iter().copied().filter(|&u| self.adj[v][u]).collect();
            cur.push(v);
            self.clique_rec(&next, cur, best, visited, cap)?;
            cur.pop();
        }
        Ok(())
    }
}

fn sorted(mut ws: Vec<Word>) -> Vec<Word> {
    ws.sort();
    ws
}

fn empty_report(mode: Mode, order: usize, bounded: bool) -> InvariantReport {
    InvariantReport {
        mode,
        finite_order: Some(order),
        ball_radius: 0,
        l_prime_count: 0,
        l_prime: None,
        l_double: None,
        l: Vec::new(),
        weak_width: 0,
        l1: None,
        candidates: Vec::new(),
        l_w: None,
        width: None,
        width_paper: None,
        width_exact: None,
        l_h: None,
        height: None,
        height_paper: None,
        height_exact: None,
        certificates: Vec::new(),
        bounded,
    }
}

/// The weak width and the list `L` of double-coset representatives with
/// infinite intersection, in shortlex order.
pub fn weak_width(h: &Subgroup) -> Result<InvariantReport> {
    weak_width_mode(h, Mode::ExactSearch)
}

fn weak_width_mode(h: &Subgroup, mode: Mode) -> Result<InvariantReport> {
    let g = h.group();
    let (order, fin_bounded) = h.finiteness()?;
    if let Some(n) = order {
        return Ok(empty_report(mode, n, fin_bounded));
    }
    let radius = 2 * h.k() + g.delta().halves() as usize;
    let ball = g.ball(radius)?;
    let membership: Vec<(bool, bool)> = ball.par_iter().map(|(e, _)| h.contains(e)).collect::<Result<_>>()?;
    let mut bounded = fin_bounded;
    let outside: Vec<&(Element, Word)> = ball
        .iter()
        .zip(&membership)
        .filter(|(_, &(inside, b))| {
            bounded |= b;
            !inside
        })
        .map(|(x, _)| x)
        .collect();
    let verdicts: Vec<(Finiteness, bool)> =
        outside.par_iter().map(|(e, _)| multi_intersection_elements(h, std::slice::from_ref(e))).collect::<Result<_>>()?;
    let dc_bound = 4 * h.k() + 2 * g.delta().halves() as usize;
    let mut reps: Vec<(Element, Word)> = Vec::new();
    let mut certificates = Vec::new();
    for ((e, w), &(v, b)) in outside.iter().zip(&verdicts) {
        bounded |= b || v == Finiteness::FiniteBounded;
        if !v.is_infinite() {
            continue;
        }
        let mut seen = false;
        for (r, _) in &reps {
            let (same, b) = h.double_coset_equal_elements(r, e, dc_bound)?;
            bounded |= b;
            if same {
                seen = true;
                break;
            }
        }
        if !seen {
            certificates.push(Certificate { subject: vec![w.clone()], verdict: v, bounded: b });
            reps.push((e.clone(), w.clone()));
        }
    }
    let mut l = vec![Word::empty()];
    l.extend(reps.iter().map(|(_, w)| w.clone()));
    let l = sorted(l);

    let (l_prime, l_double) = if ball.len() <= DOUBLE_COSET_LIST_LIMIT {
        let mut dreps: Vec<(Element, Word)> = Vec::new();
        for (e, w) in &ball {
            let mut seen = false;
            for (r, _) in &dreps {
                if h.double_coset_equal_elements(r, e, dc_bound)?.0 {
                    seen = true;
                    break;
                }
            }
            if !seen {
                dreps.push((e.clone(), w.clone()));
            }
        }
        let mut check = vec![Word::empty()];
        for (e, w) in &dreps {
            if !e.is_identity() && multi_intersection_elements(h, std::slice::from_ref(e))?.0.is_infinite() {
                check.push(w.clone());
            }
        }
        if sorted(check) != l {
            return Err(Error::InternalConsistency("weak-width list depends on the pruning order".into()));
        }
        (
            Some(ball.iter().map(|(_, w)| w.clone()).collect()),
            Some(sorted(dreps.into_iter().map(|(_, w)| w).collect())),
        )
    } else {
        (None, None)
    };

    Ok(InvariantReport {
        mode,
        finite_order: None,
        ball_radius: radius,
        l_prime_count: ball.len(),
        l_prime,
        l_double,
        weak_width: l.len(),
        l,
        l1: None,
        candidates: Vec::new(),
        l_w: None,
        width: None,
        width_paper: None,
        width_exact: None,
        l_h: None,
        height: None,
        height_paper: None,
        height_exact: None,
        certificates,
        bounded,
    })
}

/// Cosets `Hg` inside `Hg_iH` other than `Hg_i` whose conjugate meets
/// `g_i⁻¹Hg_i` infinitely, with `g` the coset representative. The search
/// runs over `Hg_iu` for `u ∈ H` up to `8K + 24δ`, or up to the budget cap
/// when that ball is too large, which flags the answer as bounded.
///
/// Exact engines first test whether any candidate exists at all: `Hg_iu`
/// qualifies iff `g_iug_i⁻¹` lies in a double coset `HxH ≠ H` with `H ∩
/// x⁻¹Hx` infinite, so the set is empty when no such `HxH` meets
/// `g_iHg_i⁻¹`.
pub fn candidate_set(h: &Subgroup, g_i: &Word) -> Result<(CandidateSet, bool)> {
    let weak = weak_width(h)?;
    candidate_set_from(h, g_i, &weak.l, weak.bounded)
}

fn candidate_set_from(h: &Subgroup, g_i: &Word, l: &[Word], l_bounded: bool) -> Result<(CandidateSet, bool)> {
    let g = h.group();
    let gi = g.evaluate(g_i)?;
    if h.contains(&gi)?.0 {
        return Err(Error::Precondition(format!("{} lies in H", g.format(g_i))));
    }
    let full = 8 * h.k() + g.delta().times(24);
    if h.is_exact() && !l_bounded {
        let mut empty = true;
        for x in l.iter().filter(|w| !w.is_empty()) {
            if h.double_coset_meets_conjugate(&g.evaluate(x)?, &gi)? != Some(false) {
                empty = false;
                break;
            }
        }
        if empty {
            let set = CandidateSet { g_i: g_i.clone(), radius: 0, swept: false, complete: true, candidates: Vec::new() };
            return Ok((set, false));
        }
    }
    let cap = h.budget().candidate_radius_cap;
    let (radius, ball, mut bounded) = if full <= cap {
        let (ball, b) = h.subgroup_ball(full)?;
        (full, ball, b)
    } else if let Some(ball) = h.subgroup_ball_within(full, CANDIDATE_BALL_LIMIT)? {
        (full, ball, false)
    } else {
        let (ball, b) = h.subgroup_ball(cap)?;
        (cap, ball, b)
    };
    let swept = radius >= full;
    bounded |= !swept;
    let mut reps: Vec<(Element, Word)> = Vec::new();
    for (u, _) in ball {
        let x = g.multiply(&gi, &u)?;
        if h.coset_equal_elements(&x, &gi)?.0 {
            continue;
        }
        let (rep, b) = h.coset_representative(&x)?;
        bounded |= b;
        let e = g.evaluate(&rep)?;
        let mut seen = false;
        for (r, w) in &reps {
            if *w == rep || (!h.is_exact() && h.coset_equal_elements(r, &e)?.0) {
                seen = true;
                break;
            }
        }
        if !seen {
            reps.push((e, rep));
        }
    }
    let verdicts: Vec<(Finiteness, bool)> =
        reps.par_iter().map(|(e, _)| pair_verdict(h, &gi, e)).collect::<Result<_>>()?;
    let mut candidates = Vec::new();
    for ((_, w), &(v, b)) in reps.iter().zip(&verdicts) {
        bounded |= b || v == Finiteness::FiniteBounded;
        if v.is_infinite() {
            candidates.push(w.clone());
        }
    }
    Ok((CandidateSet { g_i: g_i.clone(), radius, swept, complete: swept, candidates: sorted(candidates) }, bounded))
}

/// Width and height in both modes; `mode` selects the reported values.
pub fn width(h: &Subgroup, mode: Mode) -> Result<InvariantReport> {
    let mut report = weak_width_mode(h, mode)?;
    if report.finite_order.is_some() {
        report.width = Some(0);
        report.width_paper = Some(0);
        report.width_exact = Some(0);
        report.height = Some(0);
        report.height_paper = Some(0);
        report.height_exact = Some(0);
        return Ok(report);
    }
    let g = h.group();
    let cap = h.budget().element_cap;
    let mut bounded = report.bounded;
    let mut certs = Vec::new();

    // L₁: drop later entries meeting an earlier kept one finitely
    let l = report.l.clone();
    let lu = Universe::build(h, l.clone(), &mut certs, &mut bounded)?;
    let mut keep = vec![true; l.len()];
    for i in 0..l.len() {
        if !keep[i] {
            continue;
        }
        for j in i + 1..l.len() {
            if keep[j] && !lu.adj[i][j] {
                keep[j] = false;
            }
        }
    }
    let l1: Vec<Word> = l.iter().zip(&keep).filter(|(_, &k)| k).map(|(w, _)| w.clone()).collect();

    let sources: Vec<Word> = l.iter().filter(|w| !w.is_empty()).cloned().collect();
    let sets: Vec<(CandidateSet, bool)> = sources.iter().map(|gi| candidate_set_from(h, gi, &l, report.bounded)).collect::<Result<_>>()?;
    let mut candidates = Vec::new();
    for (c, b) in sets {
        bounded |= b;
        candidates.push(c);
    }

    // paper mode: add each candidate from the L₁ sets meeting all of L₁ infinitely
    let mut l_w_paper = l1.clone();
    let l1_elems: Vec<Element> = l1.iter().map(|w| g.evaluate(w)).collect::<Result<_>>()?;
    for c in candidates.iter().filter(|c| l1.contains(&c.g_i)) {
        for a in &c.candidates {
            if l_w_paper.contains(a) {
                continue;
            }
            let ae = g.evaluate(a)?;
            let mut all = true;
            for (x, w) in l1_elems.iter().zip(&l1) {
                let (v, b) = pair_verdict(h, x, &ae)?;
                bounded |= b || v == Finiteness::FiniteBounded;
                certs.push(Certificate { subject: vec![w.clone(), a.clone()], verdict: v, bounded: b });
                if !v.is_infinite() {
                    all = false;
                    break;
                }
            }
            if all {
                l_w_paper.push(a.clone());
            }
        }
    }

    // exact mode: maximum clique over L and all candidate sets
    let mut words = l.clone();
    for c in &candidates {
        for a in &c.candidates {
            let ae = g.evaluate(a)?;
            let mut seen = false;
            for w in &words {
                if h.coset_equal_elements(&g.evaluate(w)?, &ae)?.0 {
                    seen = true;
                    break;
                }
            }
            if !seen {
                words.push(a.clone());
            }
        }
    }
    let words = sorted(words);
    let universe = Universe::build(h, words, &mut certs, &mut bounded)?;
    let clique = universe.max_clique(cap)?;
    let l_w_exact: Vec<Word> = sorted(clique.iter().map(|&i| universe.words[i].clone()).collect());

    // heights: greedy sweep of the greedy width list, exhaustive search over the universe
    let mut l_h_paper = vec![Word::empty()];
    let mut l_h_elems = vec![Element::identity()];
    for w in l_w_paper.iter().filter(|w| !w.is_empty()) {
        let e = g.evaluate(w)?;
        let mut trial = l_h_elems.clone();
        trial.push(e.clone());
        let (v, b) = set_verdict(h, &trial)?;
        bounded |= b || v == Finiteness::FiniteBounded;
        if v.is_infinite() {
            l_h_paper.push(w.clone());
            l_h_elems = trial;
        }
    }
    let (l_h_exact, b) = exact_height(h, &universe, cap)?;
    bounded |= b;

    let (l_w, l_h) = match mode {
        Mode::PaperGreedy => (sorted(l_w_paper.clone()), sorted(l_h_paper.clone())),
        Mode::ExactSearch => (l_w_exact.clone(), l_h_exact.clone()),
    };
    report.l1 = Some(l1);
    report.candidates = candidates;
    report.width_paper = Some(l_w_paper.len());
    report.width_exact = Some(l_w_exact.len());
    report.width = Some(l_w.len());
    report.l_w = Some(l_w);
    report.height_paper = Some(l_h_paper.len());
    report.height_exact = Some(l_h_exact.len());
    report.height = Some(l_h.len());
    report.l_h = Some(l_h);
    report.certificates.extend(certs);
    report.bounded = bounded;
    Ok(report)
}

/// Height is computed alongside width; the report is the same.
pub fn height(h: &Subgroup, mode: Mode) -> Result<InvariantReport> {
    width(h, mode)
}

/// Largest set containing the identity whose conjugates have infinite
/// common intersection, by depth-first search over cliques of the universe.
fn exact_height(h: &Subgroup, u: &Universe, cap: usize) -> Result<(Vec<Word>, bool)> {
    let root = u.words.iter().position(|w| w.is_empty()).expect("identity in universe");
    let mut best = vec![root];
    let mut bounded = false;
    let mut visited = 0usize;
    let mut stack: Vec<(Vec<usize>, usize)> = vec![(vec![root], 0)];
    while let Some((set, from)) = stack.pop() {
        for v in from..u.words.len() {
            if set.contains(&v) || !set.iter().all(|&s| u.adj[s][v]) {
                continue;
            }
            visited += 1;
            if visited > cap {
                return Err(Error::ResourceCap("height search".into()));
            }
            let mut next = set.clone();
            next.push(v);
            let elems: Vec<Element> = next.iter().map(|&i| u.elements[i].clone()).collect();
            let (verdict, b) = set_verdict(h, &elems)?;
            bounded |= b || verdict == Finiteness::FiniteBounded;
            if !verdict.is_infinite() {
                continue;
            }
            if next.len() > best.len() {
                best = next.clone();
            }
            stack.push((next, v + 1));
        }
    }
    Ok((sorted(best.iter().map(|&i| u.words[i].clone()).collect()), bounded))
}

/// `(weak width == 1, bounded)`.
pub fn almost_malnormal(h: &Subgroup) -> Result<(bool, bool)> {
    let r = weak_width(h)?;
    if r.finite_order.is_some() {
        return Err(Error::Precondition("almost-malnormality is asked of infinite subgroups".into()));
    }
    Ok((r.weak_width == 1, r.bounded))
}

/// Searches `g` of length at most `radius` with `H ∩ g⁻¹Hg` nontrivial, in
/// shortlex order. Exact engines decide each intersection; otherwise the
/// intersection is enumerated up to length `2K + 8δ + 2`.
pub fn malnormality_semidecision(h: &Subgroup, radius: usize) -> Result<MalnormalityVerdict> {
    let g = h.group();
    let small = 2 * h.k() + g.delta().times(8) + 2;
    let (short, _) = h.subgroup_ball(small)?;
    for (e, w) in g.ball(radius)? {
        if h.contains(&e)?.0 {
            continue;
        }
        let einv = g.inverse(&e)?;
        let mut element = None;
        for (s, sw) in &short {
            if s.is_identity() {
                continue;
            }
            let conj = g.multiply(&g.multiply(&e, s)?, &einv)?;
            if h.contains(&conj)?.0 {
                element = Some(sw.clone());
                break;
            }
        }
        let nontrivial = if h.is_exact() {
            match multi_intersection_elements(h, std::slice::from_ref(&e))?.0 {
                Finiteness::Finite(n) => n > 1,
                _ => true,
            }
        } else {
            element.is_some()
        };
        if nontrivial {
            return Ok(MalnormalityVerdict::NotMalnormal { witness: w, element });
        }
    }
    Ok(MalnormalityVerdict::MalnormalUpToBudget { radius })
}

/// The width decomposition `g_i g⁻¹ = h_i s_i k_i` with `h_i, k_i ∈ H`,
/// `|s_i| ≤ 2K + 3δ`, `|k_i| < 6K + 21δ`, minimizing `|s_i| + |k_i|`.
pub fn check_width_decomposition(h: &Subgroup, g_i: &Word, g: &Word) -> Result<WidthDecomposition> {
    let grp = h.group();
    let gi = grp.evaluate(g_i)?;
    let ge = grp.evaluate(g)?;
    if h.contains(&gi)?.0 {
        return Err(Error::Precondition("g_i lies in H".into()));
    }
    if h.coset_equal_elements(&gi, &ge)?.0 {
        return Err(Error::Precondition("Hg = Hg_i".into()));
    }
    let (rep, _) = h.coset_representative(&ge)?;
    if rep.len() != grp.geodesic_length(&ge) {
        return Err(Error::Precondition("g is not shortest in Hg".into()));
    }
    let dc_bound = 4 * h.k() + 2 * grp.delta().halves() as usize + 2 * grp.geodesic_length(&ge);
    if !h.double_coset_equal_elements(&gi, &ge, dc_bound)?.0 {
        return Err(Error::Precondition("g is not in Hg_iH".into()));
    }
    if !pair_verdict(h, &gi, &ge)?.0.is_infinite() {
        return Err(Error::Precondition("the conjugates of H by g and g_i meet finitely".into()));
    }
    let delta = grp.delta();
    let s_max = 2 * h.k() + delta.times(3);
    // |k| < 6K + 21δ
    let k_exact = 6 * h.k() + delta.times(21);
    let k_max = if (21 * delta.halves()) % 2 == 0 { k_exact.saturating_sub(1) } else { k_exact };
    let k_swept = k_max.min(h.budget().max_gen_length);
    let target = grp.multiply(&gi, &grp.inverse(&ge)?)?;
    let (ks, _) = h.subgroup_ball(k_swept)?;
    let mut best: Option<(usize, Word, Word, Word)> = None;
    for (k, kw) in ks {
        let x = grp.multiply(&target, &grp.inverse(&k)?)?;
        let (srep_inv, _) = h.coset_representative(&x)?;
        if srep_inv.len() > s_max {
            continue;
        }
        let total = srep_inv.len() + kw.len();
        if best.as_ref().is_some_and(|b| b.0 <= total) {
            continue;
        }
        let s = srep_inv.inverse();
        let hi = grp.multiply(&x, &grp.evaluate(&srep_inv)?)?;
        // h_i = target·k⁻¹·s⁻¹
        if !h.contains(&hi)?.0 {
            return Err(Error::InternalConsistency("coset representative left the coset".into()));
        }
        best = Some((total, grp.canonical_word(&hi)?, grp.geodesic_word(&s)?, kw));
    }
    match best {
        Some((_, h_i, s_i, k_i)) => {
            let check = grp.evaluate(&h_i.mul(&s_i).mul(&k_i))?;
            if check != target {
                return Err(Error::InternalConsistency("decomposition does not multiply out".into()));
            }
            Ok(WidthDecomposition { h_i, s_i, k_i, target: grp.canonical_word(&target)? })
        }
        None if k_swept < k_max => Err(Error::RadiusCap { cap: k_swept }),
        None => Err(Error::InternalConsistency(format!(
            "no decomposition of {} with |s| <= {s_max} and |k| <= {k_max}",
            grp.format(&grp.canonical_word(&target)?)
        ))),
    }
}

pub fn constants_report(h: &Subgroup, g: &Word) -> Result<ConstantsReport> {
    let grp = h.group();
    let k = h.k() as u64;
    let d = grp.delta().halves() as u64;
    let glen = grp.word_length(g)?;
    let l = grp.alphabet().rank() as u128;
    // 2δ + K + |g| - 1, an integer since 2δ is
    let exponent = d as i64 + k as i64 + glen as i64 - 1;
    let m_crude = u32::try_from(exponent)
        .ok()
        .and_then(|e| (2 * l - 1).checked_pow(e))
        .and_then(|p| p.checked_mul(2 * l));
    let kh = 2 * k;
    Ok(ConstantsReport {
        k: k as usize,
        delta: HalfInt(d),
        g_length: glen,
        k_g: HalfInt(kh + 2 * d + 4 * glen as u64),
        m_exact: theorem_m(h, g)?,
        m_crude,
        short_generator_bound: 2 * k as usize + 1,
        weak_width_radius: HalfInt(2 * kh + 2 * d),
        small_intersection_radius: HalfInt(2 * kh + 8 * d + 4),
        s_bound: HalfInt(2 * kh + 3 * d),
        k_bound: HalfInt(6 * kh + 21 * d),
        candidate_radius: HalfInt(8 * kh + 24 * d),
    })
}
