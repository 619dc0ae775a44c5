//! Overlap polynomials over labeled replicas.
//!
//! Observables are real linear combinations of monomials `Π q_{kl}^{e}` with
//! `k ≠ l`. Replica labels start at 1. The text form is
//!
//! ```text
//! 2 q1,2*q2,3 - q1,2^2 + 0.5
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Label sets larger than this are canonicalized by iterated
/// first-appearance relabeling instead of an exhaustive orbit search.
const EXHAUSTIVE_LABEL_LIMIT: usize = 8;

/// Product of overlap factors; pairs are stored as `(k, l)` with `k < l`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OverlapMonomial {
    factors: BTreeMap<(u32, u32), u32>,
}

impl OverlapMonomial {
    pub fn one() -> Self {
        Self::default()
    }

    /// Single factor `q_{k,l}^exponent`.
    pub fn pair(k: u32, l: u32, exponent: u32) -> Result<Self> {
        let mut m = Self::one();
        m.mul_pair(k, l, exponent)?;
        Ok(m)
    }

    pub fn from_pairs<I: IntoIterator<Item = (u32, u32)>>(pairs: I) -> Result<Self> {
        let mut m = Self::one();
        for (k, l) in pairs {
            m.mul_pair(k, l, 1)?;
        }
        Ok(m)
    }

    pub fn mul_pair(&mut self, k: u32, l: u32, exponent: u32) -> Result<()> {
        if k == l {
            return Err(Error::usage(format!(
                "self-overlap q{k},{k} is identically 1; fold it into the coefficient"
            )));
        }
        if k == 0 || l == 0 {
            return Err(Error::usage("replica labels start at 1"));
        }
        if exponent > 0 {
            *self.factors.entry((k.min(l), k.max(l))).or_insert(0) += exponent;
        }
        Ok(())
    }

    pub fn mul(&self, other: &OverlapMonomial) -> OverlapMonomial {
        let mut out = self.clone();
        for (&pair, &e) in &other.factors {
            *out.factors.entry(pair).or_insert(0) += e;
        }
        out
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    /// `(k, l, exponent)` with `k < l`, in lexicographic pair order.
    pub fn factors(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        self.factors.iter().map(|(&(k, l), &e)| (k, l, e))
    }

    pub fn degree(&self) -> u32 {
        self.factors.values().sum()
    }

    pub fn labels(&self) -> BTreeSet<u32> {
        self.factors.keys().flat_map(|&(k, l)| [k, l]).collect()
    }

    /// Largest label used, 0 for the constant monomial.
    pub fn max_label(&self) -> u32 {
        self.factors.keys().map(|&(_, l)| l).max().unwrap_or(0)
    }

    fn relabel(&self, map: &BTreeMap<u32, u32>) -> OverlapMonomial {
        let mut out = OverlapMonomial::one();
        for (&(k, l), &e) in &self.factors {
            let (a, b) = (map[&k], map[&l]);
            out.factors.insert((a.min(b), a.max(b)), e);
        }
        out
    }

    /// Renames labels to `1..` in order of first appearance along the
    /// lexicographically sorted pair list.
    fn first_appearance(&self) -> OverlapMonomial {
        let mut map = BTreeMap::new();
        for &(k, l) in self.factors.keys() {
            for x in [k, l] {
                let next = map.len() as u32 + 1;
                map.entry(x).or_insert(next);
            }
        }
        self.relabel(&map)
    }

    fn key(&self) -> Vec<(u32, u32, u32)> {
        self.factors().collect()
    }
}

/// Representative of the monomial's orbit under replica relabeling.
///
/// Among all relabelings followed by first-appearance renaming, the
/// lexicographically greatest pair list is chosen, so `q1,3*q3,2` becomes
/// `q1,2*q2,3`. The result depends only on the orbit, which makes the map
/// idempotent and lets exchangeable monomials share one evaluation.
pub fn canonicalize(m: &OverlapMonomial) -> OverlapMonomial {
    let labels: Vec<u32> = m.labels().into_iter().collect();
    if labels.len() > EXHAUSTIVE_LABEL_LIMIT {
        let mut cur = m.first_appearance();
        for _ in 0..64 {
            let next = cur.first_appearance();
            if next == cur {
                break;
            }
            cur = next;
        }
        return cur;
    }
    let mut best: Option<(Vec<(u32, u32, u32)>, OverlapMonomial)> = None;
    let mut perm: Vec<u32> = (1..=labels.len() as u32).collect();
    loop {
        let map: BTreeMap<u32, u32> = labels.iter().copied().zip(perm.iter().copied()).collect();
        let cand = m.relabel(&map).first_appearance();
        let key = cand.key();
        if best.as_ref().is_none_or(|(k, _)| key > *k) {
            best = Some((key, cand));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    best.map(|(_, c)| c).unwrap_or_default()
}

fn next_permutation(p: &mut [u32]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Finite real combination of overlap monomials. Zero coefficients are
/// never stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OverlapPolynomial {
    terms: BTreeMap<OverlapMonomial, f64>,
}

impl OverlapPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial(OverlapMonomial::one(), c)
    }

    pub fn monomial(m: OverlapMonomial, coefficient: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(m, coefficient);
        p
    }

    /// `q_{k,l}` with coefficient 1.
    pub fn q(k: u32, l: u32) -> Result<Self> {
        Ok(Self::monomial(OverlapMonomial::pair(k, l, 1)?, 1.0))
    }

    pub fn add_term(&mut self, m: OverlapMonomial, coefficient: f64) {
        let c = self.terms.entry(m.clone()).or_insert(0.0);
        *c += coefficient;
        if *c == 0.0 {
            self.terms.remove(&m);
        }
    }

    pub fn add(&self, other: &OverlapPolynomial) -> OverlapPolynomial {
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn scale(&self, a: f64) -> OverlapPolynomial {
        let mut out = Self::zero();
        for (m, &c) in &self.terms {
            out.add_term(m.clone(), a * c);
        }
        out
    }

    /// Product with a single monomial.
    pub fn mul_monomial(&self, m: &OverlapMonomial, coefficient: f64) -> OverlapPolynomial {
        let mut out = Self::zero();
        for (t, &c) in &self.terms {
            out.add_term(t.mul(m), c * coefficient);
        }
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = (&OverlapMonomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coefficient(&self, m: &OverlapMonomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(OverlapMonomial::is_one)
    }

    /// Sum of absolute coefficients; bounds `sup|G|` since `|q| ≤ 1`.
    pub fn sup_norm_bound(&self) -> f64 {
        self.terms.values().map(|c| c.abs()).sum()
    }

    pub fn max_label(&self) -> u32 {
        self.terms.keys().map(OverlapMonomial::max_label).max().unwrap_or(0)
    }

    /// Sum of canonical monomials with merged coefficients.
    pub fn canonicalized(&self) -> OverlapPolynomial {
        let mut out = Self::zero();
        for (m, &c) in &self.terms {
            out.add_term(canonicalize(m), c);
        }
        out
    }
}

/// Number of replicas `R` the polynomial lives on; constants count as 1.
pub fn replica_count(poly: &OverlapPolynomial) -> u32 {
    poly.max_label().max(1)
}

/// The image `ΔG` whose quenched mean is `d/dλ ⟨G⟩_λ`:
///
/// `2ΔG = Σ_{k≠l≤R} G q_{lk} − 2R G Σ_{l≤R} q_{l,R+1} + R(R+1) G q_{R+1,R+2}`
///
/// with `R = replica_count(G)`. The ordered-pair sum visits each unordered
/// pair twice, so after halving it contributes `G q_{kl}` once per pair.
pub fn delta_g(g: &OverlapPolynomial) -> OverlapPolynomial {
    let r = replica_count(g);
    let r_f = f64::from(r);
    let pair = |k, l| OverlapMonomial::pair(k, l, 1).expect("distinct positive labels");
    let mut out = OverlapPolynomial::zero();
    for k in 1..=r {
        for l in (k + 1)..=r {
            out = out.add(&g.mul_monomial(&pair(k, l), 1.0));
        }
    }
    for l in 1..=r {
        out = out.add(&g.mul_monomial(&pair(l, r + 1), -r_f));
    }
    out.add(&g.mul_monomial(&pair(r + 1, r + 2), r_f * (r_f + 1.0) / 2.0))
}

impl fmt::Display for OverlapMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_one() {
            return write!(f, "1");
        }
        let mut first = true;
        for (k, l, e) in self.factors() {
            if !first {
                write!(f, "*")?;
            }
            first = false;
            write!(f, "q{k},{l}")?;
            if e != 1 {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for OverlapPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, &c)) in self.terms.iter().enumerate() {
            let (neg, mag) = (c < 0.0, c.abs());
            match (i, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            if m.is_one() {
                write!(f, "{mag:?}")?;
            } else if mag == 1.0 {
                write!(f, "{m}")?;
            } else {
                write!(f, "{mag:?} {m}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for OverlapPolynomial {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse(s)
    }
}

/// Parses the textual observable grammar.
pub fn parse(text: &str) -> Result<OverlapPolynomial> {
    Parser::new(text).polynomial()
}

/// Inverse of [`parse`] on canonical polynomials.
pub fn format(poly: &OverlapPolynomial) -> String {
    poly.to_string()
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            src: text.as_bytes(),
            pos: 0,
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            pos: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.src.get(self.pos).is_some_and(u8::is_ascii_whitespace) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn polynomial(&mut self) -> Result<OverlapPolynomial> {
        let mut poly = OverlapPolynomial::zero();
        let mut first = true;
        loop {
            let sign = match self.peek() {
                None if first => return self.err("empty observable"),
                None => break,
                Some(b'+') => {
                    self.pos += 1;
                    1.0
                }
                Some(b'-') => {
                    self.pos += 1;
                    -1.0
                }
                Some(_) if first => 1.0,
                Some(c) => return self.err(format!("expected '+' or '-', found '{}'", c as char)),
            };
            first = false;
            let (coef, mono) = self.term()?;
            poly.add_term(mono, sign * coef);
        }
        Ok(poly)
    }

    fn term(&mut self) -> Result<(f64, OverlapMonomial)> {
        let mut coef = 1.0;
        let mut mono = OverlapMonomial::one();
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                coef = self.number()?;
                match self.peek() {
                    Some(b'*') => {
                        self.pos += 1;
                        if self.peek() != Some(b'q') {
                            return self.err("expected overlap factor after '*'");
                        }
                    }
                    Some(b'q') => {}
                    _ => return Ok((coef, mono)),
                }
            }
            Some(b'q') => {}
            Some(c) => return self.err(format!("unexpected '{}'", c as char)),
            None => return self.err("expected a term"),
        }
        loop {
            self.factor(&mut mono)?;
            if self.peek() == Some(b'*') {
                self.pos += 1;
            } else {
                return Ok((coef, mono));
            }
        }
    }

    fn factor(&mut self, mono: &mut OverlapMonomial) -> Result<()> {
        if self.peek() != Some(b'q') {
            return self.err("expected overlap factor 'q<k>,<l>'");
        }
        let start = self.pos;
        self.pos += 1;
        let k = self.integer()?;
        if self.peek() != Some(b',') {
            return self.err("expected ',' between replica labels");
        }
        self.pos += 1;
        let l = self.integer()?;
        let mut e = 1;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            e = self.integer()?;
            if e == 0 {
                return self.err("exponent must be positive");
            }
        }
        mono.mul_pair(k, l, e).map_err(|err| Error::Syntax {
            pos: start,
            message: match err {
                Error::Usage(m) => m,
                other => other.to_string(),
            },
        })
    }

    fn integer(&mut self) -> Result<u32> {
        self.skip_ws();
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected integer");
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse().or_else(|_| {
            self.pos = start;
            self.err("integer out of range")
        })
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.src.get(p.pos).is_some_and(u8::is_ascii_digit) {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if exp_start == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        text.parse().or_else(|_| {
            self.pos = start;
            self.err(format!("invalid number '{text}'"))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mono(pairs: &[(u32, u32)]) -> OverlapMonomial {
        OverlapMonomial::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(canonicalize(&mono(&[(2, 3)])), mono(&[(1, 2)]));
        assert_eq!(canonicalize(&mono(&[(1, 3), (3, 2)])), mono(&[(1, 2), (2, 3)]));
        assert_eq!(canonicalize(&mono(&[(1, 2), (1, 3)])), mono(&[(1, 2), (2, 3)]));
        assert_eq!(canonicalize(&mono(&[(2, 4), (1, 3)])), mono(&[(1, 2), (3, 4)]));
        assert_eq!(canonicalize(&OverlapMonomial::one()), OverlapMonomial::one());
    }

    #[test]
    fn canonicalize_keeps_exponents() {
        let m = OverlapMonomial::pair(3, 5, 2).unwrap().mul(&mono(&[(5, 7)]));
        let c = canonicalize(&m);
        assert_eq!(c.degree(), 3);
        assert_eq!(c.labels().len(), 3);
        assert_eq!(canonicalize(&c), c);
    }

    #[test]
    fn parse_examples() {
        let p = parse("q1,2").unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.coefficient(&mono(&[(1, 2)])), 1.0);

        let p = parse("2 q1,2*q2,3 - q1,2^2").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.coefficient(&mono(&[(1, 2), (2, 3)])), 2.0);
        assert_eq!(p.coefficient(&OverlapMonomial::pair(1, 2, 2).unwrap()), -1.0);

        let p = parse("  -0.5*q2,1 + 1.5e-1 + q1,2*q1,2 ").unwrap();
        assert_eq!(p.coefficient(&mono(&[(1, 2)])), -0.5);
        assert_eq!(p.coefficient(&OverlapMonomial::one()), 0.15);
        assert_eq!(p.coefficient(&OverlapMonomial::pair(1, 2, 2).unwrap()), 1.0);
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse("q1,1") {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 0),
            other => panic!("{other:?}"),
        }
        match parse("q1,2 + q3") {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 9),
            other => panic!("{other:?}"),
        }
        for bad in ["", "q", "q1,2 q2,3", "q0,1", "2 *", "q1,2^0", "x", "q1,2 +"] {
            assert!(matches!(parse(bad), Err(Error::Syntax { .. })), "{bad}");
        }
    }

    #[test]
    fn cancelling_terms_are_dropped() {
        let p = parse("q1,2 - q2,1").unwrap();
        assert!(p.is_empty());
        assert_eq!(format(&p), "0");
    }

    #[test]
    fn delta_g_of_single_overlap() {
        let g = OverlapPolynomial::q(1, 2).unwrap();
        let d = delta_g(&g);
        let expected = parse("q1,2^2 - 2 q1,2*q1,3 - 2 q1,2*q2,3 + 3 q1,2*q3,4").unwrap();
        assert_eq!(d, expected);
    }

    #[test]
    fn delta_g_of_constant() {
        let d = delta_g(&OverlapPolynomial::constant(1.0));
        assert_eq!(d, parse("q2,3 - q1,2").unwrap());
    }

    #[test]
    fn delta_g_coefficients_sum_to_zero() {
        for text in ["q1,2", "q1,2*q2,3", "q1,3^2", "q1,2*q3,4*q2,5", "1"] {
            let g = parse(text).unwrap();
            let total: f64 = delta_g(&g).terms().map(|(_, c)| c).sum();
            assert_eq!(total, 0.0, "{text}");
        }
        for r in 1..20i64 {
            assert_eq!(r * (r - 1) - 2 * r * r + r * (r + 1), 0);
        }
    }

    #[test]
    fn replica_counts() {
        assert_eq!(replica_count(&parse("q1,2*q2,3").unwrap()), 3);
        assert_eq!(replica_count(&parse("q1,2").unwrap()), 2);
        assert_eq!(replica_count(&OverlapPolynomial::constant(2.0)), 1);
        assert_eq!(replica_count(&parse("q1,4").unwrap()), 4);
    }

    fn arb_monomial(max_label: u32) -> impl Strategy<Value = OverlapMonomial> {
        prop::collection::vec((1..=max_label, 1..=max_label, 1u32..3), 0..6).prop_map(|fs| {
            let mut m = OverlapMonomial::one();
            for (k, l, e) in fs {
                if k != l {
                    m.mul_pair(k, l, e).unwrap();
                }
            }
            m
        })
    }

    fn arb_polynomial() -> impl Strategy<Value = OverlapPolynomial> {
        prop::collection::vec((arb_monomial(5), -4i32..5, 1u32..5), 0..5).prop_map(|ts| {
            let mut p = OverlapPolynomial::zero();
            for (m, num, den) in ts {
                p.add_term(m, f64::from(num) / f64::from(den));
            }
            p
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn canonicalize_idempotent(m in arb_monomial(6)) {
            let c = canonicalize(&m);
            prop_assert_eq!(canonicalize(&c), c.clone());
            prop_assert_eq!(c.degree(), m.degree());
            prop_assert_eq!(c.labels().len(), m.labels().len());
        }

        #[test]
        fn canonicalize_is_orbit_invariant(m in arb_monomial(5), shift in 1u32..5) {
            let map: BTreeMap<u32, u32> = (1..=5).map(|x| (x, (x - 1 + shift) % 5 + 1)).collect();
            prop_assert_eq!(canonicalize(&m.relabel(&map)), canonicalize(&m));
        }

        #[test]
        fn format_parse_round_trip(p in arb_polynomial()) {
            if !p.is_empty() {
                let text = format(&p);
                prop_assert_eq!(parse(&text).unwrap(), p);
            }
        }

        #[test]
        fn delta_g_is_linear(a in -3i32..4, b in -3i32..4, m1 in arb_monomial(3), m2 in arb_monomial(3)) {
            // force a shared replica count R = 3
            let pin = OverlapMonomial::pair(1, 3, 1).unwrap();
            let g1 = OverlapPolynomial::monomial(m1.mul(&pin), 1.0);
            let g2 = OverlapPolynomial::monomial(m2.mul(&pin), 1.0);
            let (a, b) = (f64::from(a), f64::from(b));
            let combined = g1.scale(a).add(&g2.scale(b));
            prop_assume!(replica_count(&combined) == 3);
            let lhs = delta_g(&combined);
            let rhs = delta_g(&g1).scale(a).add(&delta_g(&g2).scale(b));
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn delta_g_monomial_coefficients_cancel(m in arb_monomial(4)) {
            let total: f64 = delta_g(&OverlapPolynomial::monomial(m, 1.0)).terms().map(|(_, c)| c).sum();
            prop_assert_eq!(total, 0.0);
        }
    }
}
