//! Alphabets, signed letters and freely reduced words.
//!
//! A [`Letter`] packs a generator index and a sign into one integer so that the
//! natural integer order is the shortlex letter order: generators in
//! declaration order, each generator immediately followed by its inverse.
//! [`Word`] values are freely reduced on construction and compare in shortlex
//! order.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// A generator or the formal inverse of a generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter(u32);

impl Letter {
    pub fn new(generator: usize, inverse: bool) -> Self {
        Letter((generator as u32) << 1 | inverse as u32)
    }

    /// Builds a letter from its code in `0..2l`.
    pub fn from_code(code: usize) -> Self {
        Letter(code as u32)
    }

    pub fn code(self) -> usize {
        self.0 as usize
    }

    pub fn generator(self) -> usize {
        (self.0 >> 1) as usize
    }

    pub fn is_inverse(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn sign(self) -> i8 {
        if self.is_inverse() {
            -1
        } else {
            1
        }
    }

    pub fn inverse(self) -> Self {
        Letter(self.0 ^ 1)
    }
}

/// A freely reduced word. The derived order is shortlex.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Word(Vec<Letter>);

impl Word {
    pub const EMPTY: Word = Word(Vec::new());

    pub fn empty() -> Self {
        Word(Vec::new())
    }

    /// Freely reduces an arbitrary letter sequence.
    pub fn from_letters<I: IntoIterator<Item = Letter>>(letters: I) -> Self {
        let mut out: Vec<Letter> = Vec::new();
        for x in letters {
            push_reduced(&mut out, x);
        }
        Word(out)
    }

    pub fn letter(letter: Letter) -> Self {
        Word(vec![letter])
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Self {
        Word(self.0.iter().rev().map(|x| x.inverse()).collect())
    }

    /// The reduced form of `self · other`.
    pub fn mul(&self, other: &Word) -> Self {
        let mut out = self.0.clone();
        for &x in &other.0 {
            push_reduced(&mut out, x);
        }
        Word(out)
    }

    /// The reduced form of `self · x`.
    pub fn mul_letter(&self, x: Letter) -> Self {
        let mut out = self.0.clone();
        push_reduced(&mut out, x);
        Word(out)
    }

    /// Reduced form of `self^n` for an integer exponent.
    pub fn pow(&self, n: i64) -> Self {
        let base = if n < 0 { self.inverse() } else { self.clone() };
        Word::from_letters((0..n.unsigned_abs()).flat_map(|_| base.0.iter().copied()))
    }

    /// Reduced `self⁻¹ · w · self`.
    pub fn conjugate(&self, w: &Word) -> Self {
        self.inverse().mul(w).mul(self)
    }

    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n].to_vec())
    }

    pub fn suffix_from(&self, n: usize) -> Word {
        Word(self.0[n..].to_vec())
    }

    pub fn last(&self) -> Option<Letter> {
        self.0.last().copied()
    }

    pub fn first(&self) -> Option<Letter> {
        self.0.first().copied()
    }

    /// Applies a letter substitution that maps letters to letters and
    /// commutes with inversion (a generator permutation).
    pub fn map_letters(&self, f: impl Fn(Letter) -> Letter) -> Self {
        Word::from_letters(self.0.iter().map(|&x| f(x)))
    }

    /// `true` iff `self` is shortlex-smaller than `other`.
    pub fn shortlex_less(&self, other: &Word) -> bool {
        self < other
    }

    pub(crate) fn into_letters(self) -> Vec<Letter> {
        self.0
    }
}

fn push_reduced(out: &mut Vec<Letter>, x: Letter) {
    if out.last() == Some(&x.inverse()) {
        out.pop();
    } else {
        out.push(x);
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FromIterator<Letter> for Word {
    fn from_iter<I: IntoIterator<Item = Letter>>(iter: I) -> Self {
        Word::from_letters(iter)
    }
}

/// Ordered list of generator names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    names: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == '^') {
                return Err(Error::InvalidConfig(format!("invalid generator name {name:?}")));
            }
            if names[..i].contains(name) {
                return Err(Error::InvalidConfig(format!("duplicate generator name {name:?}")));
            }
        }
        Ok(Alphabet { names })
    }

    /// Number of generators `l`.
    pub fn rank(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// All `2l` letters in shortlex order.
    pub fn letters(&self) -> impl Iterator<Item = Letter> + Clone {
        (0..2 * self.rank()).map(Letter::from_code)
    }

    /// Reduces a sequence of `(generator index, ±1)` pairs, rejecting indices
    /// outside the alphabet.
    pub fn reduce(&self, raw: &[(usize, i8)]) -> Result<Word> {
        let mut letters = Vec::with_capacity(raw.len());
        for &(g, s) in raw {
            if g >= self.rank() || (s != 1 && s != -1) {
                return Err(Error::MalformedWord(format!("letter ({g}, {s}) outside alphabet of rank {}", self.rank())));
            }
            letters.push(Letter::new(g, s < 0));
        }
        Ok(Word::from_letters(letters))
    }

    /// Parses whitespace-separated `name`, `name^-1` or `name^k` tokens.
    pub fn parse(&self, text: &str) -> Result<Word> {
        let mut letters = Vec::new();
        for token in text.split_whitespace() {
            let (name, exp) = match token.split_once('^') {
                Some((name, exp)) => {
                    let k: i64 = exp
                        .parse()
                        .map_err(|_| Error::MalformedWord(format!("bad exponent in {token:?}")))?;
                    if k == 0 {
                        return Err(Error::MalformedWord(format!("zero exponent in {token:?}")));
                    }
                    (name, k)
                }
                None => (token, 1),
            };
            let g = self
                .index_of(name)
                .ok_or_else(|| Error::MalformedWord(format!("unknown generator {name:?}")))?;
            let x = Letter::new(g, exp < 0);
            letters.extend(std::iter::repeat(x).take(exp.unsigned_abs() as usize));
        }
        Ok(Word::from_letters(letters))
    }

    pub fn format_letter(&self, x: Letter) -> String {
        let name = &self.names[x.generator()];
        if x.is_inverse() {
            format!("{name}^-1")
        } else {
            name.clone()
        }
    }

    /// Space-separated letters; the identity renders as the empty string.
    pub fn format(&self, w: &Word) -> String {
        w.letters()
            .iter()
            .map(|&x| self.format_letter(x))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn display<'a>(&'a self, w: &'a Word) -> impl fmt::Display + 'a {
        struct D<'a>(&'a Alphabet, &'a Word);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0.format(self.1))
            }
        }
        D(self, w)
    }
}

/// Number of freely reduced words of length exactly `n` over `l` generators.
pub fn reduced_word_count(l: usize, n: usize) -> u128 {
    if n == 0 {
        return 1;
    }
    if l == 0 {
        return 0;
    }
    let mut c = 2 * l as u128;
    for _ in 1..n {
        c = c.saturating_mul(2 * l as u128 - 1);
    }
    c
}

/// All freely reduced words of length at most `max_len`, in shortlex order.
pub fn enumerate_reduced(rank: usize, max_len: usize, cap: usize) -> Result<Vec<Word>> {
    let total: u128 = (0..=max_len).map(|n| reduced_word_count(rank, n)).fold(0u128, |a, b| a.saturating_add(b));
    if total > cap as u128 {
        return Err(Error::EnumerationTooLarge { requested: total, cap });
    }
    let mut out = vec![Word::empty()];
    let mut layer = vec![Word::empty()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(layer.len() * 2 * rank);
        for w in &layer {
            for code in 0..2 * rank {
                let x = Letter::from_code(code);
                if w.last() == Some(x.inverse()) {
                    continue;
                }
                let mut letters = w.letters().to_vec();
                letters.push(x);
                next.push(Word(letters));
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Alphabet {
        Alphabet::new(["x1", "x2", "x3"]).unwrap()
    }

    /// Stack-free reference: repeatedly delete the first cancelling pair.
    fn naive_reduce(mut v: Vec<Letter>) -> Vec<Letter> {
        loop {
            let pos = v.windows(2).position(|p| p[0] == p[1].inverse());
            match pos {
                Some(i) => {
                    v.drain(i..i + 2);
                }
                None => return v,
            }
        }
    }

    #[test]
    fn reduce_examples() {
        let a = abc();
        assert_eq!(a.format(&a.parse("x1 x1^-1").unwrap()), "");
        assert_eq!(a.format(&a.parse("x1 x2 x2^-1 x1").unwrap()), "x1 x1");
        let raw = [(1, 1), (0, -1), (0, 1), (1, -1), (2, 1)];
        let letters: Vec<Letter> = raw.iter().map(|&(g, s)| Letter::new(g, s < 0)).collect();
        assert_eq!(naive_reduce(letters.clone()), vec![Letter::new(2, false)]);
        assert_eq!(a.format(&a.reduce(&raw).unwrap()), "x3");
    }

    #[test]
    fn reduce_rejects_out_of_range() {
        assert!(matches!(abc().reduce(&[(3, 1)]), Err(Error::MalformedWord(_))));
        assert!(matches!(abc().parse("y"), Err(Error::MalformedWord(_))));
    }

    #[test]
    fn invert_examples() {
        let a = abc();
        assert_eq!(a.format(&a.parse("x1 x2").unwrap().inverse()), "x2^-1 x1^-1");
        assert_eq!(a.format(&Word::empty().inverse()), "");
        assert_eq!(a.format(&a.parse("x1 x1 x2^-1").unwrap().inverse()), "x2 x1^-1 x1^-1");
    }

    #[test]
    fn power_syntax() {
        let a = abc();
        assert_eq!(a.parse("x1^3 x2^-2").unwrap(), a.parse("x1 x1 x1 x2^-1 x2^-1").unwrap());
        assert!(a.parse("x1^0").is_err());
    }

    #[test]
    fn shortlex_examples() {
        let a = abc();
        let p = |s| a.parse(s).unwrap();
        assert!(p("").shortlex_less(&p("x1")));
        assert!(p("x1").shortlex_less(&p("x1^-1")));
        assert!(p("x2").shortlex_less(&p("x1 x1")));
        assert!(!p("x1").shortlex_less(&p("x1")));
    }

    #[test]
    fn enumerate_counts() {
        let two = enumerate_reduced(2, 1, 1000).unwrap();
        assert_eq!(two.len(), 5);
        let a = Alphabet::new(["x1", "x2"]).unwrap();
        let names: Vec<String> = two.iter().map(|w| a.format(w)).collect();
        assert_eq!(names, ["", "x1", "x1^-1", "x2", "x2^-1"]);
        assert_eq!(enumerate_reduced(2, 2, 1000).unwrap().len(), 17);
        let one = enumerate_reduced(1, 3, 1000).unwrap();
        assert_eq!(one.len(), 7);
        assert!(matches!(enumerate_reduced(3, 10, 100), Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn reduce_idempotent_exhaustive() {
        // every letter sequence over l = 2 up to length 8 (4^8 sequences)
        let l = 2;
        for len in 0..=8u32 {
            for n in 0..(4usize.pow(len)) {
                let mut k = n;
                let mut v = Vec::new();
                for _ in 0..len {
                    v.push(Letter::from_code(k % (2 * l)));
                    k /= 2 * l;
                }
                let w = Word::from_letters(v.clone());
                assert_eq!(w.letters(), naive_reduce(v).as_slice());
                assert_eq!(Word::from_letters(w.letters().to_vec()), w);
                assert_eq!(w.inverse().inverse(), w);
                assert!(w.mul(&w.inverse()).is_empty());
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn raw_letters() -> impl Strategy<Value = Vec<Letter>> {
            prop::collection::vec((0usize..6).prop_map(Letter::from_code), 0..12)
        }

        proptest! {
            #[test]
            fn reduce_is_idempotent(v in raw_letters()) {
                let w = Word::from_letters(v);
                prop_assert_eq!(Word::from_letters(w.letters().to_vec()), w.clone());
                prop_assert!(w.letters().windows(2).all(|p| p[0] != p[1].inverse()));
            }

            #[test]
            fn inverse_is_involution(v in raw_letters()) {
                let w = Word::from_letters(v);
                prop_assert_eq!(w.inverse().len(), w.len());
                prop_assert_eq!(w.inverse().inverse(), w);
            }

            #[test]
            fn enumeration_strictly_increasing(l in 1usize..4, n in 0usize..5) {
                let words = enumerate_reduced(l, n, 1 << 20).unwrap();
                let expected: u128 = (0..=n).map(|k| reduced_word_count(l, k)).sum();
                prop_assert_eq!(words.len() as u128, expected);
                prop_assert!(words.windows(2).all(|p| p[0] < p[1]));
            }
        }
    }
}
