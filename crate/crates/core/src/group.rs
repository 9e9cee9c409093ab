//! Exact arithmetic for the ambient group.
//!
//! Three backends share one [`Group`] type:
//!
//! * free groups, where elements are reduced words;
//! * semidirect products `F_n ⋊ Z/m` in which the torsion letter `t` acts on
//!   the free generators by a permutation `σ` through `t⁻¹ x_i t = x_σ(i)`;
//!   elements are stored as `w·t^k` with `w` a reduced word over the `x_i`;
//! * Dehn presentations, where elements are stored as their shortlex-least
//!   geodesic word and equality is decided by Dehn's algorithm.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Mutex;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::words::{enumerate_reduced, Alphabet, Letter, Word};

/// A non-negative half-integer hyperbolicity constant, stored as `2δ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Delta {
    halves: u32,
}

impl Delta {
    pub fn from_halves(halves: u32) -> Self {
        Delta { halves }
    }

    pub fn whole(d: u32) -> Self {
        Delta { halves: 2 * d }
    }

    pub fn halves(self) -> u32 {
        self.halves
    }

    /// `⌊n·δ⌋`.
    pub fn times(self, n: usize) -> usize {
        n * self.halves as usize / 2
    }

    pub fn is_whole(self) -> bool {
        self.halves % 2 == 0
    }

    pub fn plus(self, d: u32) -> Self {
        Delta { halves: self.halves + 2 * d }
    }
}

impl fmt::Display for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_whole() {
            write!(f, "{}", self.halves / 2)
        } else {
            write!(f, "{}.5", self.halves / 2)
        }
    }
}

/// A group element in backend normal form.
///
/// `kernel` is the reduced free part (the whole reduced word for free groups,
/// the shortlex-least geodesic for Dehn groups); `twist` is the exponent of
/// the torsion letter and is always zero outside the semidirect backend.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element {
    pub kernel: Word,
    pub twist: u32,
}

impl Element {
    pub fn identity() -> Self {
        Element { kernel: Word::empty(), twist: 0 }
    }

    pub fn is_identity(&self) -> bool {
        self.kernel.is_empty() && self.twist == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendKind {
    Free,
    Semidirect,
    Dehn,
}

#[derive(Debug)]
pub struct Semidirect {
    torsion_gen: usize,
    order: u32,
    /// Group generator index of `x_j`.
    free_gens: Vec<usize>,
    /// Inverse of `free_gens`.
    free_index: Vec<Option<usize>>,
    /// `perm[j]` is `σ(j)`, zero-based.
    perm: Vec<usize>,
    /// `twist_table[k][j]` is the free index of `t^k x_j t^{-k}`, i.e. `σ^{-k}(j)`.
    twist_table: Vec<Vec<usize>>,
}

impl Semidirect {
    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn torsion_gen(&self) -> usize {
        self.torsion_gen
    }

    pub fn free_gens(&self) -> &[usize] {
        &self.free_gens
    }

    /// The automorphism as given, one-based.
    pub fn automorphism(&self) -> Vec<usize> {
        self.perm.iter().map(|&p| p + 1).collect()
    }

    fn twist_letter(&self, x: Letter, k: u32) -> Letter {
        let j = self.free_index[x.generator()].expect("kernel letter");
        let j2 = self.twist_table[(k % self.order) as usize][j];
        Letter::new(self.free_gens[j2], x.is_inverse())
    }
}

/// Default radius up to which the Dehn backend tabulates canonical words.
pub const DEHN_BALL_RADIUS: usize = 12;

#[derive(Debug)]
pub struct Dehn {
    relators: Vec<Word>,
    symmetrized: Vec<Word>,
    moduli: Vec<i64>,
    ball_radius: usize,
    cache: Mutex<DehnCache>,
}

#[derive(Debug, Default)]
struct DehnCache {
    /// Canonical (shortlex-least geodesic) words grouped by length.
    layers: Vec<Vec<Word>>,
    members: HashSet<Word>,
    /// Canonical words keyed by abelian image and each short suffix.
    by_suffix: HashMap<(Vec<i64>, Word), Vec<Word>>,
    canonical: HashMap<Word, Word>,
}

impl DehnCache {
    fn insert(&mut self, w: Word, image: Vec<i64>, key_max: usize) {
        let l = w.letters();
        for k in 1..=key_max.min(l.len()) {
            let key = Word::from_letters(l[l.len() - k..].iter().copied());
            self.by_suffix.entry((image.clone(), key)).or_default().push(w.clone());
        }
        self.members.insert(w);
    }

    fn candidates(&self, image: &[i64], keys: &[Word]) -> Vec<&Word> {
        let mut out = Vec::new();
        for k in keys {
            if let Some(v) = self.by_suffix.get(&(image.to_vec(), k.clone())) {
                out.extend(v);
            }
        }
        out
    }
}

/// Suffixes one of which any Dehn-reduced word equal to `u` (and different
/// from it as a word) must end with: after cancelling the common prefix, the
/// trivial word `u' c'^-1` contains more than half of a relator across the
/// junction.
fn dehn_candidate_keys(symmetrized: &[Word], u: &Word) -> Vec<Word> {
    let ul = u.letters();
    let mut keys: Vec<Word> = Vec::new();
    for r in symmetrized {
        let rl = r.letters();
        let half = rl.len() / 2;
        for a in 1..=half.min(ul.len()) {
            if ul[ul.len() - a..] != rl[..a] {
                continue;
            }
            let b = (half + 1 - a).max(1);
            keys.push(Word::from_letters(rl[a..a + b].iter().copied()).inverse());
        }
    }
    keys.sort();
    keys.dedup();
    keys
}

impl Dehn {
    /// Exponent sums, reduced modulo the gcd of the relators' exponent sums
    /// (0 meaning no reduction). A homomorphism, so equal elements agree.
    fn abelian_image(&self, w: &Word) -> Vec<i64> {
        let mut v = vec![0i64; self.moduli.len()];
        for x in w.letters() {
            v[x.generator()] += if x.is_inverse() { -1 } else { 1 };
        }
        for (e, &m) in v.iter_mut().zip(&self.moduli) {
            if m != 0 {
                *e = e.rem_euclid(m);
            }
        }
        v
    }
}

fn abelian_moduli(relators: &[Word], rank: usize) -> Vec<i64> {
    let mut moduli = vec![0i64; rank];
    for r in relators {
        let mut v = vec![0i64; rank];
        for x in r.letters() {
            v[x.generator()] += if x.is_inverse() { -1 } else { 1 };
        }
        for (m, e) in moduli.iter_mut().zip(v) {
            *m = gcd(*m, e.abs());
        }
    }
    moduli
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn suffix_key_max(symmetrized: &[Word]) -> usize {
    symmetrized.iter().map(|r| r.len() / 2).max().unwrap_or(1).max(1)
}

#[derive(Debug)]
enum Backend {
    Free,
    Semidirect(Semidirect),
    Dehn(Dehn),
}

/// Resource limits for group-level searches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub radius_cap: usize,
    pub element_cap: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { radius_cap: 24, element_cap: 4_000_000 }
    }
}

#[derive(Debug)]
pub struct Group {
    alphabet: Alphabet,
    delta: Delta,
    backend: Backend,
    finite_order_bound: usize,
    limits: Limits,
}

impl Group {
    pub fn free(alphabet: Alphabet, delta: Delta) -> Self {
        Group { alphabet, delta, backend: Backend::Free, finite_order_bound: 1, limits: Limits::default() }
    }

    /// `F_n ⋊ Z/m` with `t⁻¹ x_j t = x_{automorphism[j]}` (one-based).
    /// The alphabet must consist of the free generators followed or
    /// interleaved with the single torsion letter.
    pub fn semidirect(
        alphabet: Alphabet,
        delta: Delta,
        torsion_letter: &str,
        order: u32,
        automorphism: &[usize],
    ) -> Result<Self> {
        let torsion_gen = alphabet
            .index_of(torsion_letter)
            .ok_or_else(|| Error::InvalidConfig(format!("torsion_letter {torsion_letter:?} is not a generator")))?;
        if order == 0 {
            return Err(Error::InvalidConfig("torsion_order must be positive".into()));
        }
        let free_gens: Vec<usize> = (0..alphabet.rank()).filter(|&g| g != torsion_gen).collect();
        let n = free_gens.len();
        if automorphism.len() != n {
            return Err(Error::InvalidConfig(format!("automorphism has {} entries, free rank is {n}", automorphism.len())));
        }
        let mut seen = vec![false; n];
        for &a in automorphism {
            if a == 0 || a > n || seen[a - 1] {
                return Err(Error::InvalidConfig("automorphism is not a permutation of 1..n".into()));
            }
            seen[a - 1] = true;
        }
        let perm: Vec<usize> = automorphism.iter().map(|a| a - 1).collect();
        let mut inv = vec![0; n];
        for (j, &p) in perm.iter().enumerate() {
            inv[p] = j;
        }
        let mut power = vec![0; n];
        for k in 0..n {
            power[k] = k;
        }
        let mut twist_table = Vec::with_capacity(order as usize);
        for _ in 0..order {
            twist_table.push(power.clone());
            power = power.iter().map(|&j| inv[j]).collect();
        }
        if power.iter().enumerate().any(|(j, &p)| p != j) {
            return Err(Error::InvalidConfig(format!("automorphism order does not divide torsion_order {order}")));
        }
        let mut free_index = vec![None; alphabet.rank()];
        for (j, &g) in free_gens.iter().enumerate() {
            free_index[g] = Some(j);
        }
        Ok(Group {
            alphabet,
            delta,
            backend: Backend::Semidirect(Semidirect { torsion_gen, order, free_gens, free_index, perm, twist_table }),
            finite_order_bound: 2 * order as usize,
            limits: Limits::default(),
        })
    }

    /// A group given by a Dehn presentation. The presentation is accepted when
    /// it satisfies the C'(1/6) small cancellation condition (which implies the
    /// Dehn property) or when `assume_dehn` is set; in both cases a bounded
    /// falsification search over short relation words must also pass.
    pub fn dehn(
        alphabet: Alphabet,
        delta: Delta,
        relators: Vec<Word>,
        assume_dehn: bool,
        check_length: usize,
    ) -> Result<Self> {
        let mut cyclic = Vec::new();
        for r in &relators {
            let r = cyclically_reduce(r);
            if r.is_empty() {
                return Err(Error::UnsupportedPresentation("relator reduces to the empty word".into()));
            }
            cyclic.push(r);
        }
        let symmetrized = symmetrize(&cyclic);
        let moduli = abelian_moduli(&cyclic, alphabet.rank());
        let group = Group {
            alphabet,
            delta,
            backend: Backend::Dehn(Dehn { relators: cyclic, symmetrized, moduli, ball_radius: DEHN_BALL_RADIUS, cache: Mutex::new(DehnCache::default()) }),
            finite_order_bound: 0,
            limits: Limits::default(),
        };
        let Backend::Dehn(d) = &group.backend else { unreachable!() };
        if !assume_dehn {
            if let Some((a, b)) = small_cancellation_violation(&d.symmetrized) {
                return Err(Error::UnsupportedPresentation(format!(
                    "relators {} and {} share a piece of length >= 1/6 of a relator; set assume_dehn to override",
                    group.alphabet.format(&a),
                    group.alphabet.format(&b)
                )));
            }
        }
        group.check_dehn_up_to(check_length)?;
        let max_rel = d.relators.iter().map(Word::len).max().unwrap_or(1);
        let bound = 2 * max_rel.max(2);
        Ok(Group { finite_order_bound: bound, ..group })
    }

    pub fn with_limits(mut self, limits: Limits) -> Self {
        self.limits = limits;
        self
    }

    /// Radius of the tabulated Dehn ball; words whose Dehn reduction is
    /// longer fail with a radius-cap error. No effect on other backends.
    pub fn with_dehn_ball_radius(mut self, radius: usize) -> Self {
        if let Backend::Dehn(d) = &mut self.backend {
            d.ball_radius = radius;
        }
        self
    }

    pub fn with_finite_order_bound(mut self, c: usize) -> Self {
        self.finite_order_bound = c;
        self
    }

    pub fn with_delta(mut self, delta: Delta) -> Self {
        self.delta = delta;
        self
    }

    /// Product of `parts`, or `None` when an intermediate result lies past
    /// the radius the backend can represent.
    pub fn product_within_cap(&self, parts: &[&Element]) -> Result<Option<Element>> {
        let mut acc = Element::identity();
        for p in parts {
            acc = match self.multiply(&acc, p) {
                Ok(x) => x,
                Err(Error::RadiusCap { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
        }
        Ok(Some(acc))
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn delta(&self) -> Delta {
        self.delta
    }

    pub fn kind(&self) -> BackendKind {
        match self.backend {
            Backend::Free => BackendKind::Free,
            Backend::Semidirect(_) => BackendKind::Semidirect,
            Backend::Dehn(_) => BackendKind::Dehn,
        }
    }

    pub fn semidirect_data(&self) -> Option<&Semidirect> {
        match &self.backend {
            Backend::Semidirect(s) => Some(s),
            _ => None,
        }
    }

    pub fn relators(&self) -> &[Word] {
        match &self.backend {
            Backend::Dehn(d) => &d.relators,
            _ => &[],
        }
    }

    /// Bound `C` on the order of finite subgroups used by finiteness tests.
    pub fn finite_order_bound(&self) -> usize {
        self.finite_order_bound
    }

    /// Order of the torsion quotient (`1` unless semidirect).
    pub fn torsion_order(&self) -> u32 {
        match &self.backend {
            Backend::Semidirect(s) => s.order,
            _ => 1,
        }
    }

    /// `true` when arithmetic and subgroup membership can be decided exactly
    /// through folded graphs over a free kernel.
    pub fn has_free_kernel(&self) -> bool {
        !matches!(self.backend, Backend::Dehn(_))
    }

    /// `true` for letters of the free kernel (every letter in a free group).
    pub fn is_kernel_letter(&self, x: Letter) -> bool {
        match &self.backend {
            Backend::Semidirect(s) => x.generator() != s.torsion_gen,
            _ => true,
        }
    }

    /// Letters spanning the free kernel, in shortlex order.
    pub fn kernel_letters(&self) -> Vec<Letter> {
        self.alphabet.letters().filter(|&x| self.is_kernel_letter(x)).collect()
    }

    pub fn letters(&self) -> impl Iterator<Item = Letter> + Clone {
        self.alphabet.letters()
    }

    pub fn parse(&self, text: &str) -> Result<Word> {
        self.alphabet.parse(text)
    }

    pub fn format(&self, w: &Word) -> String {
        self.alphabet.format(w)
    }

    pub fn identity(&self) -> Element {
        Element::identity()
    }

    /// Applies `w ↦ t^k w t^{-k}` to a kernel word.
    pub fn twist_kernel(&self, w: &Word, k: u32) -> Word {
        match &self.backend {
            Backend::Semidirect(s) if k % s.order != 0 => w.map_letters(|x| s.twist_letter(x, k)),
            _ => w.clone(),
        }
    }

    pub fn evaluate(&self, w: &Word) -> Result<Element> {
        match &self.backend {
            Backend::Free => Ok(Element { kernel: w.clone(), twist: 0 }),
            Backend::Semidirect(s) => {
                let mut kernel: Vec<Letter> = Vec::with_capacity(w.len());
                let mut k = 0u32;
                for &x in w.letters() {
                    if x.generator() == s.torsion_gen {
                        k = if x.is_inverse() { (k + s.order - 1) % s.order } else { (k + 1) % s.order };
                    } else {
                        let y = s.twist_letter(x, k);
                        if kernel.last() == Some(&y.inverse()) {
                            kernel.pop();
                        } else {
                            kernel.push(y);
                        }
                    }
                }
                Ok(Element { kernel: Word::from_letters(kernel), twist: k })
            }
            Backend::Dehn(d) => Ok(Element { kernel: self.dehn_canonical(d, w)?, twist: 0 }),
        }
    }

    pub fn multiply(&self, a: &Element, b: &Element) -> Result<Element> {
        match &self.backend {
            Backend::Free => Ok(Element { kernel: a.kernel.mul(&b.kernel), twist: 0 }),
            Backend::Semidirect(s) => Ok(Element {
                kernel: a.kernel.mul(&self.twist_kernel(&b.kernel, a.twist)),
                twist: (a.twist + b.twist) % s.order,
            }),
            Backend::Dehn(d) => Ok(Element { kernel: self.dehn_canonical(d, &a.kernel.mul(&b.kernel))?, twist: 0 }),
        }
    }

    pub fn inverse(&self, a: &Element) -> Result<Element> {
        match &self.backend {
            Backend::Free => Ok(Element { kernel: a.kernel.inverse(), twist: 0 }),
            Backend::Semidirect(s) => {
                let back = (s.order - a.twist % s.order) % s.order;
                Ok(Element { kernel: self.twist_kernel(&a.kernel.inverse(), back), twist: back })
            }
            Backend::Dehn(d) => Ok(Element { kernel: self.dehn_canonical(d, &a.kernel.inverse())?, twist: 0 }),
        }
    }

    /// Some word representing `e` (not necessarily geodesic).
    pub fn word_of(&self, e: &Element) -> Word {
        match &self.backend {
            Backend::Semidirect(s) => {
                let t = Letter::new(s.torsion_gen, false);
                e.kernel.mul(&Word::letter(t).pow(e.twist as i64))
            }
            _ => e.kernel.clone(),
        }
    }

    pub fn is_identity(&self, w: &Word) -> Result<bool> {
        match &self.backend {
            Backend::Dehn(d) => Ok(dehn_reduce(&d.symmetrized, w).is_empty()),
            _ => Ok(self.evaluate(w)?.is_identity()),
        }
    }

    pub fn equal(&self, u: &Word, v: &Word) -> Result<bool> {
        self.is_identity(&u.mul(&v.inverse()))
    }

    /// Minimal word length over the generators and their inverses.
    pub fn geodesic_length(&self, e: &Element) -> usize {
        match &self.backend {
            Backend::Semidirect(s) => {
                let k = e.twist % s.order;
                e.kernel.len() + k.min(s.order - k) as usize
            }
            _ => e.kernel.len(),
        }
    }

    pub fn word_length(&self, w: &Word) -> Result<usize> {
        Ok(self.geodesic_length(&self.evaluate(w)?))
    }

    /// Geodesic length by bidirectional breadth-first search over the Cayley
    /// graph, using only multiplication and equality of normal forms.
    pub fn geodesic_length_bfs(&self, e: &Element) -> Result<usize> {
        if e.is_identity() {
            return Ok(0);
        }
        let letters: Vec<Element> =
            self.letters().map(|x| self.evaluate(&Word::letter(x))).collect::<Result<_>>()?;
        let mut seen_a: HashMap<Element, usize> = HashMap::from([(Element::identity(), 0)]);
        let mut seen_b: HashMap<Element, usize> = HashMap::from([(e.clone(), 0)]);
        let mut front_a = vec![Element::identity()];
        let mut front_b = vec![e.clone()];
        let (mut da, mut db) = (0usize, 0usize);
        while da + db < self.limits.radius_cap {
            let grow_a = front_a.len() <= front_b.len();
            let (front, seen, other, depth) = if grow_a {
                (&mut front_a, &mut seen_a, &seen_b, &mut da)
            } else {
                (&mut front_b, &mut seen_b, &seen_a, &mut db)
            };
            *depth += 1;
            let mut next = Vec::new();
            for u in front.iter() {
                for x in &letters {
                    let v = self.multiply(u, x)?;
                    if let Some(&d) = other.get(&v) {
                        return Ok(*depth + d);
                    }
                    if !seen.contains_key(&v) {
                        seen.insert(v.clone(), *depth);
                        next.push(v);
                    }
                }
            }
            if seen.len() + other.len() > self.limits.element_cap {
                return Err(Error::ResourceCap("bidirectional geodesic search".into()));
            }
            *front = next;
        }
        Err(Error::RadiusCap { cap: self.limits.radius_cap })
    }

    /// The shortlex-least geodesic word for `e`.
    pub fn canonical_word(&self, e: &Element) -> Result<Word> {
        match &self.backend {
            Backend::Semidirect(s) => {
                // A geodesic is the kernel word cut into pieces separated by
                // tw(k) torsion letters of one sign, each piece twisted back.
                let m = s.order;
                let k = e.twist % m;
                let mut remaining = k.min(m - k) as usize;
                let signs: &[bool] = match (k, 2 * k == m, k < m - k) {
                    (0, _, _) => &[],
                    (_, true, _) => &[false, true],
                    (_, false, true) => &[false],
                    _ => &[true],
                };
                let mut sign: Option<bool> = if signs.len() == 1 { Some(signs[0]) } else { None };
                let kernel = e.kernel.letters();
                let mut out = Vec::with_capacity(kernel.len() + remaining);
                let mut pos = 0;
                let mut placed: u32 = 0;
                while pos < kernel.len() || remaining > 0 {
                    let next_kernel = (pos < kernel.len()).then(|| {
                        let back = match sign {
                            Some(true) => placed % m,
                            _ => (m - placed % m) % m,
                        };
                        s.twist_letter(kernel[pos], back)
                    });
                    let next_t = (remaining > 0).then(|| {
                        let inv = sign.unwrap_or(signs[0]);
                        Letter::new(s.torsion_gen, inv)
                    });
                    match (next_kernel, next_t) {
                        (Some(x), Some(t)) if t < x => {
                            sign = Some(t.is_inverse());
                            out.push(t);
                            placed += 1;
                            remaining -= 1;
                        }
                        (Some(x), _) => {
                            out.push(x);
                            pos += 1;
                        }
                        (None, Some(t)) => {
                            sign = Some(t.is_inverse());
                            out.push(t);
                            placed += 1;
                            remaining -= 1;
                        }
                        (None, None) => unreachable!(),
                    }
                }
                Ok(Word::from_letters(out))
            }
            _ => Ok(e.kernel.clone()),
        }
    }

    /// Shortlex-least geodesic for the element represented by `w`.
    pub fn geodesic_word(&self, w: &Word) -> Result<Word> {
        self.canonical_word(&self.evaluate(w)?)
    }

    /// All geodesic words for `e`, in shortlex order (at most `cap`).
    pub fn geodesic_representatives(&self, e: &Element, cap: usize) -> Result<Vec<Word>> {
        let n = self.geodesic_length(e);
        if n > self.limits.radius_cap {
            return Err(Error::RadiusCap { cap: self.limits.radius_cap });
        }
        let inverses: Vec<(Letter, Element)> = self
            .letters()
            .map(|x| Ok((x, self.evaluate(&Word::letter(x.inverse()))?)))
            .collect::<Result<_>>()?;
        let mut memo: HashMap<Element, Vec<Vec<Letter>>> = HashMap::new();
        let reps = self.geodesic_reps_rec(e, n, &inverses, &mut memo, cap)?;
        Ok(reps.into_iter().map(Word::from_letters).collect())
    }

    fn geodesic_reps_rec(
        &self,
        e: &Element,
        n: usize,
        inverses: &[(Letter, Element)],
        memo: &mut HashMap<Element, Vec<Vec<Letter>>>,
        cap: usize,
    ) -> Result<Vec<Vec<Letter>>> {
        if n == 0 {
            return Ok(vec![Vec::new()]);
        }
        if let Some(r) = memo.get(e) {
            return Ok(r.clone());
        }
        let mut out = Vec::new();
        for (x, xinv) in inverses {
            let rest = self.multiply(xinv, e)?;
            if self.geodesic_length(&rest) + 1 != n {
                continue;
            }
            for tail in self.geodesic_reps_rec(&rest, n - 1, inverses, memo, cap)? {
                let mut w = Vec::with_capacity(n);
                w.push(*x);
                w.extend(tail);
                out.push(w);
                if out.len() > cap {
                    return Err(Error::ResourceCap(format!("more than {cap} geodesic representatives")));
                }
            }
        }
        memo.insert(e.clone(), out.clone());
        Ok(out)
    }

    /// All elements of geodesic length at most `radius`, each with its
    /// shortlex-least geodesic, listed in shortlex order of those words.
    pub fn ball(&self, radius: usize) -> Result<Vec<(Element, Word)>> {
        if radius > self.limits.radius_cap {
            return Err(Error::RadiusCap { cap: self.limits.radius_cap });
        }
        let letters: Vec<(Letter, Element)> = self
            .letters()
            .map(|x| Ok((x, self.evaluate(&Word::letter(x))?)))
            .collect::<Result<_>>()?;
        let mut seen: HashSet<Element> = HashSet::from([Element::identity()]);
        let mut out = vec![(Element::identity(), Word::empty())];
        let mut layer_start = 0;
        for _ in 0..radius {
            let layer_end = out.len();
            for i in layer_start..layer_end {
                for (x, xe) in &letters {
                    let (e, w) = &out[i];
                    if w.last() == Some(x.inverse()) {
                        continue;
                    }
                    let v = self.multiply(e, xe)?;
                    if seen.insert(v.clone()) {
                        let w2 = w.mul_letter(*x);
                        out.push((v, w2));
                        if out.len() > self.limits.element_cap {
                            return Err(Error::ResourceCap(format!("ball of radius {radius}")));
                        }
                    }
                }
            }
            if out.len() == layer_end {
                break;
            }
            layer_start = layer_end;
        }
        Ok(out)
    }

    // ---- Dehn backend ----

    fn dehn_canonical(&self, d: &Dehn, w: &Word) -> Result<Word> {
        let r = dehn_reduce(&d.symmetrized, w);
        if r.is_empty() {
            return Ok(r);
        }
        let mut cache = d.cache.lock().expect("dehn cache poisoned");
        if let Some(c) = cache.canonical.get(&r) {
            return Ok(c.clone());
        }
        let cap = self.limits.radius_cap.min(d.ball_radius);
        if r.len() > cap {
            return Err(Error::RadiusCap { cap });
        }
        self.extend_dehn_layers(d, &mut cache, r.len())?;
        if cache.members.contains(&r) {
            return Ok(r);
        }
        let rinv = r.inverse();
        let keys = dehn_candidate_keys(&d.symmetrized, &r);
        let found = cache
            .candidates(&d.abelian_image(&r), &keys)
            .into_iter()
            .find(|v| v.len() <= r.len() && dehn_reduce(&d.symmetrized, &v.mul(&rinv)).is_empty())
            .cloned();
        if let Some(v) = found {
            cache.canonical.insert(r, v.clone());
            return Ok(v);
        }
        Err(Error::InternalConsistency(format!(
            "Dehn-reduced word {} not found in ball of its own length",
            self.alphabet.format(&r)
        )))
    }

    fn extend_dehn_layers(&self, d: &Dehn, cache: &mut DehnCache, radius: usize) -> Result<()> {
        let key_max = suffix_key_max(&d.symmetrized);
        if cache.layers.is_empty() {
            cache.layers.push(vec![Word::empty()]);
            cache.insert(Word::empty(), d.abelian_image(&Word::empty()), key_max);
        }
        while cache.layers.len() <= radius {
            let n = cache.layers.len();
            let prev = cache.layers[n - 1].clone();
            let mut next: Vec<Word> = Vec::new();
            let mut total: usize = cache.layers.iter().map(Vec::len).sum();
            for v in &prev {
                for x in self.alphabet.letters() {
                    if v.last() == Some(x.inverse()) {
                        continue;
                    }
                    let u = v.mul_letter(x);
                    if dehn_reduce(&d.symmetrized, &u).len() < u.len() {
                        continue;
                    }
                    let keys = dehn_candidate_keys(&d.symmetrized, &u);
                    let image = d.abelian_image(&u);
                    let known = cache
                        .candidates(&image, &keys)
                        .iter()
                        .any(|c| dehn_reduce(&d.symmetrized, &u.mul(&c.inverse())).is_empty());
                    if !known {
                        total += 1;
                        if total > self.limits.element_cap {
                            return Err(Error::ResourceCap("Dehn ball".into()));
                        }
                        cache.insert(u.clone(), image, key_max);
                        next.push(u);
                    }
                }
            }
            cache.layers.push(next);
        }
        Ok(())
    }

    /// Bounded search for a relation word that Dehn's algorithm fails to
    /// reduce: single relators, products of two relators, and conjugates of
    /// such products by single letters, all up to length `max_len`.
    fn check_dehn_up_to(&self, max_len: usize) -> Result<()> {
        let Backend::Dehn(d) = &self.backend else { return Ok(()) };
        let mut conjugators = vec![Word::empty()];
        conjugators.extend(self.alphabet.letters().map(Word::letter));
        let mut candidates: Vec<Word> = d.symmetrized.clone();
        for a in &d.symmetrized {
            for b in &d.symmetrized {
                let ab = a.mul(b);
                if ab.len() <= max_len + 2 {
                    candidates.push(ab);
                }
            }
        }
        for w in candidates {
            for c in &conjugators {
                let cw = c.inverse().mul(&w).mul(c);
                if cw.len() <= max_len && !dehn_reduce(&d.symmetrized, &cw).is_empty() {
                    return Err(Error::UnsupportedPresentation(format!(
                        "Dehn's algorithm does not reduce the relation word {}",
                        self.alphabet.format(&cw)
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn cyclically_reduce(w: &Word) -> Word {
    let l = w.letters();
    let mut i = 0;
    let mut j = l.len();
    while j > i + 1 && l[i] == l[j - 1].inverse() {
        i += 1;
        j -= 1;
    }
    Word::from_letters(l[i..j].iter().copied())
}

/// All cyclic permutations of the relators and their inverses, deduplicated.
pub fn symmetrize(relators: &[Word]) -> Vec<Word> {
    let mut out: Vec<Word> = Vec::new();
    for r in relators {
        for base in [r.clone(), r.inverse()] {
            let l = base.letters();
            for i in 0..l.len() {
                let rot = Word::from_letters(l[i..].iter().chain(&l[..i]).copied());
                if !out.contains(&rot) {
                    out.push(rot);
                }
            }
        }
    }
    out.sort();
    out
}

fn small_cancellation_violation(symmetrized: &[Word]) -> Option<(Word, Word)> {
    for (i, a) in symmetrized.iter().enumerate() {
        for b in &symmetrized[i + 1..] {
            let piece = a.letters().iter().zip(b.letters()).take_while(|(x, y)| x == y).count();
            if 6 * piece >= a.len() || 6 * piece >= b.len() {
                if piece > 0 {
                    return Some((a.clone(), b.clone()));
                }
            }
        }
    }
    None
}

/// Dehn's algorithm: repeatedly replace a subword that is more than half of a
/// symmetrized relator `uv` by `v⁻¹`.
pub fn dehn_reduce(symmetrized: &[Word], w: &Word) -> Word {
    let mut cur = w.letters().to_vec();
    'outer: loop {
        for start in 0..cur.len() {
            for r in symmetrized {
                let rl = r.letters();
                let need = rl.len() / 2 + 1;
                if start + need > cur.len() {
                    continue;
                }
                let matched = cur[start..].iter().zip(rl).take_while(|(a, b)| a == b).count();
                if matched >= need {
                    let replacement = Word::from_letters(rl[matched..].iter().copied()).inverse();
                    let mut next: Vec<Letter> = cur[..start].to_vec();
                    next.extend(replacement.letters());
                    next.extend(&cur[start + matched..]);
                    cur = Word::from_letters(next).into_letters();
                    continue 'outer;
                }
            }
        }
        return Word::from_letters(cur);
    }
}

// ---- JSON configuration ----

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub backend: String,
    pub generators: Vec<String>,
    #[serde(default)]
    pub delta: Option<serde_json::Number>,
    #[serde(default)]
    pub free_rank: Option<usize>,
    #[serde(default)]
    pub torsion_order: Option<u32>,
    #[serde(default)]
    pub torsion_letter: Option<String>,
    #[serde(default)]
    pub automorphism: Option<Vec<usize>>,
    #[serde(default)]
    pub relators: Option<Vec<String>>,
    #[serde(default)]
    pub finite_order_bound: Option<usize>,
    #[serde(default)]
    pub assume_dehn: Option<bool>,
    #[serde(default)]
    pub dehn_check_length: Option<usize>,
    #[serde(default)]
    pub dehn_ball_radius: Option<usize>,
}

impl GroupConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("group config: {e}")))
    }

    pub fn build(&self) -> Result<Group> {
        let alphabet = Alphabet::new(self.generators.iter().cloned())?;
        let delta = match &self.delta {
            None => return Err(Error::InvalidConfig("key \"delta\" is required".into())),
            Some(n) => parse_delta(n)?,
        };
        let reject = |key: &str, present: bool| -> Result<()> {
            if present {
                Err(Error::InvalidConfig(format!("key {key:?} not valid for backend {:?}", self.backend)))
            } else {
                Ok(())
            }
        };
        let group = match self.backend.as_str() {
            "free" => {
                reject("free_rank", self.free_rank.is_some_and(|r| r != alphabet.rank()))?;
                reject("torsion_order", self.torsion_order.is_some())?;
                reject("automorphism", self.automorphism.is_some())?;
                reject("relators", self.relators.is_some())?;
                reject("dehn_ball_radius", self.dehn_ball_radius.is_some())?;
                Group::free(alphabet, delta)
            }
            "semidirect" => {
                reject("relators", self.relators.is_some())?;
                reject("dehn_ball_radius", self.dehn_ball_radius.is_some())?;
                let letter = match &self.torsion_letter {
                    Some(t) => t.clone(),
                    None => alphabet
                        .names()
                        .last()
                        .cloned()
                        .ok_or_else(|| Error::InvalidConfig("key \"generators\" is empty".into()))?,
                };
                let order = self
                    .torsion_order
                    .ok_or_else(|| Error::InvalidConfig("key \"torsion_order\" is required".into()))?;
                let automorphism = self
                    .automorphism
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("key \"automorphism\" is required".into()))?;
                if let Some(n) = self.free_rank {
                    if n + 1 != alphabet.rank() {
                        return Err(Error::InvalidConfig(format!(
                            "key \"free_rank\" is {n} but {} generators were given",
                            alphabet.rank()
                        )));
                    }
                }
                Group::semidirect(alphabet, delta, &letter, order, automorphism)?
            }
            "dehn" => {
                reject("automorphism", self.automorphism.is_some())?;
                reject("torsion_order", self.torsion_order.is_some())?;
                let relators = self
                    .relators
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("key \"relators\" is required".into()))?
                    .iter()
                    .map(|r| alphabet.parse(r))
                    .collect::<Result<Vec<_>>>()?;
                Group::dehn(
                    alphabet,
                    delta,
                    relators,
                    self.assume_dehn.unwrap_or(false),
                    self.dehn_check_length.unwrap_or(8),
                )?
                .with_dehn_ball_radius(self.dehn_ball_radius.unwrap_or(DEHN_BALL_RADIUS))
            }
            other => return Err(Error::InvalidConfig(format!("key \"backend\": unknown backend {other:?}"))),
        };
        Ok(match self.finite_order_bound {
            Some(c) => group.with_finite_order_bound(c),
            None => group,
        })
    }
}

fn parse_delta(n: &serde_json::Number) -> Result<Delta> {
    if let Some(d) = n.as_u64() {
        return Ok(Delta::whole(d as u32));
    }
    let f = n.as_f64().unwrap_or(-1.0);
    let twice = f * 2.0;
    if f >= 0.0 && twice.fract() == 0.0 {
        Ok(Delta::from_halves(twice as u32))
    } else {
        Err(Error::InvalidConfig(format!("key \"delta\" must be a non-negative half-integer, got {n}")))
    }
}

/// Enumerates reduced words over the group alphabet up to `max_len`.
pub fn reduced_words(group: &Group, max_len: usize) -> Result<Vec<Word>> {
    enumerate_reduced(group.alphabet().rank(), max_len, group.limits().element_cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn example_group() -> Group {
        let a = Alphabet::new(["x1", "x2", "x3", "x4", "t"]).unwrap();
        Group::semidirect(a, Delta::whole(1), "t", 4, &[2, 3, 4, 1]).unwrap()
    }

    fn free2() -> Group {
        Group::free(Alphabet::new(["a", "b"]).unwrap(), Delta::whole(0))
    }

    fn z3z3() -> Group {
        let a = Alphabet::new(["a", "b"]).unwrap();
        let rels = vec![a.parse("a^3").unwrap(), a.parse("b^3").unwrap()];
        Group::dehn(a, Delta::whole(1), rels, false, 8).unwrap()
    }

    #[test]
    fn semidirect_evaluate_examples() {
        let g = example_group();
        let e = g.evaluate(&g.parse("t^-1 x1 t").unwrap()).unwrap();
        assert_eq!(e, Element { kernel: g.parse("x2").unwrap(), twist: 0 });
        assert!(g.evaluate(&g.parse("t t t t").unwrap()).unwrap().is_identity());
        assert!(g.is_identity(&g.parse("t^-1 x1 t x2^-1").unwrap()).unwrap());
        assert!(!g.is_identity(&g.parse("x1 x2 x1^-1 x2^-1").unwrap()).unwrap());
    }

    #[test]
    fn semidirect_relations_hold() {
        let g = example_group();
        let sd = g.semidirect_data().unwrap();
        let t = Word::letter(Letter::new(sd.torsion_gen(), false));
        assert!(g.is_identity(&t.pow(4)).unwrap());
        for (j, &gen) in sd.free_gens().iter().enumerate() {
            let x = Word::letter(Letter::new(gen, false));
            let target = Word::letter(Letter::new(sd.free_gens()[(j + 1) % 4], false));
            assert!(g.equal(&t.conjugate(&x), &target).unwrap());
        }
    }

    #[test]
    fn free_examples() {
        let g = free2();
        let e = g.evaluate(&g.parse("a b b^-1").unwrap()).unwrap();
        assert_eq!(g.format(&e.kernel), "a");
        assert!(!g.is_identity(&g.parse("a b a^-1 b^-1").unwrap()).unwrap());
        assert_eq!(g.word_length(&g.parse("a b a").unwrap()).unwrap(), 3);
        let e = g.evaluate(&g.parse("a b").unwrap()).unwrap();
        let reps = g.geodesic_representatives(&e, 100).unwrap();
        assert_eq!(reps, vec![g.parse("a b").unwrap()]);
        assert_eq!(g.geodesic_representatives(&Element::identity(), 10).unwrap(), vec![Word::empty()]);
    }

    #[test]
    fn torsion_geodesics() {
        let g = example_group();
        let t3 = g.evaluate(&g.parse("t^3").unwrap()).unwrap();
        assert_eq!(g.geodesic_length(&t3), 1);
        assert_eq!(g.geodesic_length_bfs(&t3).unwrap(), 1);
        assert_eq!(g.format(&g.canonical_word(&t3).unwrap()), "t^-1");
        let reps = g.geodesic_representatives(&t3, 100).unwrap();
        assert!(reps.contains(&g.parse("t^-1").unwrap()));
        assert_eq!(g.geodesic_length(&Element::identity()), 0);
    }

    #[test]
    fn balls() {
        assert_eq!(free2().ball(1).unwrap().len(), 5);
        assert_eq!(example_group().ball(1).unwrap().len(), 11);
        assert_eq!(example_group().ball(0).unwrap().len(), 1);
        assert_eq!(z3z3().ball(0).unwrap().len(), 1);
        // Z/3 * Z/3: alternating normal forms, 4 of length 1 and 8 of length 2
        assert_eq!(z3z3().ball(2).unwrap().len(), 13);
    }

    #[test]
    fn closed_form_length_matches_bfs() {
        let g = example_group();
        for (e, w) in g.ball(3).unwrap() {
            assert_eq!(g.geodesic_length(&e), w.len());
            assert_eq!(g.geodesic_length_bfs(&e).unwrap(), w.len());
            assert_eq!(g.canonical_word(&e).unwrap(), w, "{}", g.format(&w));
            let reps = g.geodesic_representatives(&e, 10_000).unwrap();
            assert_eq!(reps[0], w);
            for r in &reps {
                assert_eq!(g.evaluate(r).unwrap(), e);
            }
        }
    }

    #[test]
    fn dehn_matches_ball_equality() {
        let g = z3z3();
        let words = reduced_words(&g, 6).unwrap();
        let elems: Vec<Element> = words.iter().map(|w| g.evaluate(w).unwrap()).collect();
        // normal forms in Z/3*Z/3 are alternating words in a^±1, b^±1
        let normal = |w: &Word| {
            let mut out: Vec<(usize, i32)> = Vec::new();
            for x in w.letters() {
                let s = if x.is_inverse() { -1 } else { 1 };
                match out.last_mut() {
                    Some((gen, e)) if *gen == x.generator() => *e += s,
                    _ => out.push((x.generator(), s)),
                }
                let (_, e) = *out.last().unwrap();
                let m = e.rem_euclid(3);
                if m == 0 {
                    out.pop();
                } else {
                    out.last_mut().unwrap().1 = if m == 2 { -1 } else { 1 };
                }
                // merge if popping exposed two equal generators
                while out.len() >= 2 && out[out.len() - 1].0 == out[out.len() - 2].0 {
                    let (_, e2) = out.pop().unwrap();
                    let last = out.last_mut().unwrap();
                    let m = (last.1 + e2).rem_euclid(3);
                    if m == 0 {
                        out.pop();
                    } else {
                        last.1 = if m == 2 { -1 } else { 1 };
                    }
                }
            }
            out
        };
        for (i, u) in words.iter().enumerate().step_by(7) {
            for (j, v) in words.iter().enumerate().step_by(5) {
                assert_eq!(elems[i] == elems[j], normal(u) == normal(v));
            }
        }
    }

    #[test]
    fn dehn_canonical_forms_on_surface_group() {
        let a = Alphabet::new(["a", "b", "c", "d"]).unwrap();
        let rels = vec![a.parse("a b a^-1 b^-1 c d c^-1 d^-1").unwrap()];
        let g = Group::dehn(a, Delta::whole(2), rels.clone(), false, 6).unwrap();
        let sym = symmetrize(&rels);
        let ball = g.ball(3).unwrap();
        for (i, (_, u)) in ball.iter().enumerate() {
            for (_, v) in &ball[i + 1..] {
                assert!(!dehn_reduce(&sym, &u.mul(&v.inverse())).is_empty());
            }
        }
        for w in reduced_words(&g, 4).unwrap() {
            let c = g.geodesic_word(&w).unwrap();
            assert!(c.len() <= w.len());
            assert!(dehn_reduce(&sym, &w.mul(&c.inverse())).is_empty());
            assert!(ball.iter().any(|(_, b)| *b == c) || c.len() == 4);
        }
    }

    #[test]
    fn dehn_ball_radius_caps_products() {
        let g = z3z3().with_dehn_ball_radius(3);
        let x = g.evaluate(&g.parse("a b a").unwrap()).unwrap();
        let y = g.evaluate(&g.parse("b a").unwrap()).unwrap();
        assert!(matches!(g.multiply(&x, &y), Err(Error::RadiusCap { cap: 3 })));
        assert_eq!(g.product_within_cap(&[&x, &y]).unwrap(), None);
        let z = g.evaluate(&g.parse("a^-1").unwrap()).unwrap();
        assert!(g.product_within_cap(&[&x, &z]).unwrap().is_some());
    }

    #[test]
    fn dehn_rejects_bad_presentation() {
        let a = Alphabet::new(["a", "b"]).unwrap();
        // Z^2 is not hyperbolic and the commutator relator is not Dehn
        let rels = vec![a.parse("a b a^-1 b^-1").unwrap()];
        assert!(matches!(Group::dehn(a, Delta::whole(1), rels, false, 8), Err(Error::UnsupportedPresentation(_))));
    }

    #[test]
    fn config_parsing() {
        let cfg = GroupConfig::from_json(
            r#"{"backend":"semidirect","generators":["x1","x2","x3","x4","t"],"delta":1,
                "free_rank":4,"torsion_order":4,"torsion_letter":"t","automorphism":[2,3,4,1]}"#,
        )
        .unwrap();
        let g = cfg.build().unwrap();
        assert_eq!(g.kind(), BackendKind::Semidirect);
        assert_eq!(g.finite_order_bound(), 8);
        assert!(GroupConfig::from_json(r#"{"backend":"free","generators":["a"],"delta":0,"bogus":1}"#).is_err());
        let half = GroupConfig::from_json(r#"{"backend":"free","generators":["a"],"delta":1.5}"#).unwrap();
        assert_eq!(half.build().unwrap().delta(), Delta::from_halves(3));
        let bad = GroupConfig::from_json(r#"{"backend":"free","generators":["a"],"delta":0.3}"#).unwrap();
        assert!(bad.build().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn word(l: usize, max: usize) -> impl Strategy<Value = Word> {
            prop::collection::vec((0..2 * l).prop_map(Letter::from_code), 0..=max).prop_map(Word::from_letters)
        }

        proptest! {
            #[test]
            fn evaluate_is_homomorphism(u in word(5, 8), v in word(5, 8)) {
                let g = example_group();
                let lhs = g.multiply(&g.evaluate(&u).unwrap(), &g.evaluate(&v).unwrap()).unwrap();
                prop_assert_eq!(lhs, g.evaluate(&u.mul(&v)).unwrap());
            }

            #[test]
            fn length_symmetric_and_subadditive(u in word(5, 8), v in word(5, 8)) {
                let g = example_group();
                let e = g.evaluate(&u).unwrap();
                let f = g.evaluate(&v).unwrap();
                prop_assert_eq!(g.geodesic_length(&e), g.geodesic_length(&g.inverse(&e).unwrap()));
                let ef = g.multiply(&e, &f).unwrap();
                prop_assert!(g.geodesic_length(&ef) <= g.geodesic_length(&e) + g.geodesic_length(&f));
                prop_assert!(g.geodesic_length(&e) <= u.len());
            }

            #[test]
            fn dehn_homomorphism(u in word(2, 6), v in word(2, 6)) {
                let g = z3z3();
                let lhs = g.multiply(&g.evaluate(&u).unwrap(), &g.evaluate(&v).unwrap()).unwrap();
                prop_assert_eq!(lhs, g.evaluate(&u.mul(&v)).unwrap());
            }
        }
    }
}
