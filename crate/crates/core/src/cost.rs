//! Exact symbolic FLOP counts.
//!
//! A [`CostPolynomial`] maps monomials over size symbols to rational
//! coefficients. [`Regime`] ranks the symbols by growth so that leading
//! terms and asymptotic comparisons can be computed.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::expr::Rational;

/// Product of symbols with positive exponents.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial(BTreeMap<String, u32>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(BTreeMap::new())
    }

    pub fn var(s: &str, pow: u32) -> Self {
        let mut m = BTreeMap::new();
        if pow > 0 {
            m.insert(s.to_string(), pow);
        }
        Monomial(m)
    }

    pub fn from_pairs(pairs: &[(&str, u32)]) -> Self {
        pairs
            .iter()
            .fold(Monomial::one(), |m, (s, k)| m.mul(&Monomial::var(s, *k)))
    }

    pub fn degree(&self, s: &str) -> u32 {
        self.0.get(s).copied().unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn symbols(&self) -> impl Iterator<Item = (&String, &u32)> {
        self.0.iter()
    }

    pub fn mul(&self, o: &Monomial) -> Monomial {
        let mut out = self.0.clone();
        for (s, k) in &o.0 {
            *out.entry(s.clone()).or_insert(0) += k;
        }
        Monomial(out)
    }

    /// Drops `s` from the monomial (substitution `s = 1`).
    pub fn without(&self, s: &str) -> Monomial {
        let mut out = self.0.clone();
        out.remove(s);
        Monomial(out)
    }

    fn factors(&self) -> Vec<&str> {
        self.0
            .iter()
            .flat_map(|(s, k)| std::iter::repeat_n(s.as_str(), *k as usize))
            .collect()
    }

    /// Renders symbols in the given order (others alphabetically after).
    pub fn render(&self, order: &[String]) -> String {
        let mut names: Vec<&String> = self.0.keys().collect();
        names.sort_by_key(|s| (order.iter().position(|o| o == *s).unwrap_or(usize::MAX), (*s).clone()));
        let parts: Vec<String> = names
            .iter()
            .map(|s| match self.0[*s] {
                1 => (*s).clone(),
                k => format!("{s}^{k}"),
            })
            .collect();
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join(" ")
        }
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&[]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CostError {
    #[error("leading terms of the zero polynomial")]
    Zero,
    #[error("unbound size symbol `{0}`")]
    Unbound(String),
}

/// Polynomial with exact rational coefficients; zero coefficients are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct CostPolynomial(BTreeMap<Monomial, Rational>);

impl CostPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Rational) -> Self {
        Self::term(c, Monomial::one())
    }

    pub fn term(c: Rational, m: Monomial) -> Self {
        let mut out = Self::zero();
        out.add_term(c, m);
        out
    }

    pub fn var(s: &str) -> Self {
        Self::term(Rational::one(), Monomial::var(s, 1))
    }

    fn add_term(&mut self, c: Rational, m: Monomial) {
        if c.is_zero() {
            return;
        }
        let slot = self.0.entry(m.clone()).or_insert_with(Rational::zero);
        *slot += c;
        if slot.is_zero() {
            self.0.remove(&m);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.0.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> Rational {
        self.0.get(m).copied().unwrap_or_else(Rational::zero)
    }

    pub fn add(&self, o: &CostPolynomial) -> CostPolynomial {
        let mut out = self.clone();
        for (m, c) in &o.0 {
            out.add_term(*c, m.clone());
        }
        out
    }

    pub fn mul(&self, o: &CostPolynomial) -> CostPolynomial {
        let mut out = Self::zero();
        for (m1, c1) in &self.0 {
            for (m2, c2) in &o.0 {
                out.add_term(c1 * c2, m1.mul(m2));
            }
        }
        out
    }

    pub fn scale(&self, k: Rational) -> CostPolynomial {
        let mut out = Self::zero();
        for (m, c) in &self.0 {
            out.add_term(c * k, m.clone());
        }
        out
    }

    /// Multiplies by the product of the given extent symbols.
    pub fn mul_by_extent<S: AsRef<str>>(&self, extents: &[S]) -> CostPolynomial {
        let m = extents
            .iter()
            .fold(Monomial::one(), |m, s| m.mul(&Monomial::var(s.as_ref(), 1)));
        self.mul(&Self::term(Rational::one(), m))
    }

    /// Substitutes `s = 1`.
    pub fn set_one(&self, s: &str) -> CostPolynomial {
        let mut out = Self::zero();
        for (m, c) in &self.0 {
            out.add_term(*c, m.without(s));
        }
        out
    }

    /// Exact evaluation.
    pub fn eval(&self, values: &BTreeMap<String, i64>) -> Result<Rational, CostError> {
        let mut total = Rational::zero();
        for (m, c) in &self.0 {
            let mut v = *c;
            for (s, k) in m.symbols() {
                let x = values.get(s).ok_or_else(|| CostError::Unbound(s.clone()))?;
                v *= Rational::from_integer(*x).pow(*k as i32);
            }
            total += v;
        }
        Ok(total)
    }

    pub fn eval_f64(&self, values: &BTreeMap<String, i64>) -> Result<f64, CostError> {
        let r = self.eval(values)?;
        Ok(*r.numer() as f64 / *r.denom() as f64)
    }

    /// True when every coefficient of `self - o` is non-positive.
    pub fn coefficientwise_le(&self, o: &CostPolynomial) -> bool {
        self.add(&o.scale(-Rational::one()))
            .0
            .values()
            .all(|c| !c.is_positive())
    }

    /// Maximal monomials under the regime's dominance order.
    pub fn leading_terms(&self, regime: &Regime) -> Result<Vec<Monomial>, CostError> {
        if self.is_zero() {
            return Err(CostError::Zero);
        }
        let monos: Vec<&Monomial> = self.0.keys().collect();
        let mut out: Vec<Monomial> = monos
            .iter()
            .filter(|a| !monos.iter().any(|b| regime.dominated(a, b)))
            .map(|m| (*m).clone())
            .collect();
        regime.sort_terms(&mut out);
        Ok(out)
    }

    pub fn render(&self, order: &[String]) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut terms: Vec<(&Monomial, &Rational)> = self.0.iter().collect();
        terms.sort_by(|a, b| b.0.total_degree().cmp(&a.0.total_degree()).then(a.0.cmp(b.0)));
        let mut out = String::new();
        for (k, (m, c)) in terms.iter().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            if k == 0 {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            let mono = m.render(order);
            let coef = if mag.is_integer() {
                mag.numer().to_string()
            } else {
                format!("{}/{}", mag.numer(), mag.denom())
            };
            match (mag.is_one(), mono.as_str()) {
                (_, "1") => out.push_str(&coef),
                (true, _) => out.push_str(&mono),
                (false, _) => out.push_str(&format!("{coef} {mono}")),
            }
        }
        out
    }
}

impl fmt::Display for CostPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&[]))
    }
}

/// Growth classes of size symbols: rank 0 grows fastest. A factor `x` of one
/// monomial is covered by a factor `y` of another when `y == x` or `y` has a
/// strictly smaller rank.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Regime {
    ranks: BTreeMap<String, u8>,
}

/// Outcome of comparing two costs asymptotically.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Asymptotic {
    Less,
    Greater,
    Equal,
    Incomparable,
}

impl Regime {
    pub fn new(ranks: &[(&str, u8)]) -> Self {
        Regime {
            ranks: ranks.iter().map(|(s, r)| (s.to_string(), *r)).collect(),
        }
    }

    /// The GWAS regime: n dominates m and t, which dominate p.
    pub fn gwas() -> Self {
        Self::new(&[("n", 0), ("m", 1), ("t", 1), ("p", 2)])
    }

    pub fn set_rank(&mut self, s: &str, r: u8) {
        self.ranks.insert(s.to_string(), r);
    }

    pub fn rank(&self, s: &str) -> u8 {
        self.ranks.get(s).copied().unwrap_or(1)
    }

    fn covers(&self, y: &str, x: &str) -> bool {
        y == x || self.rank(y) < self.rank(x)
    }

    /// `a` is covered factor-by-factor by distinct factors of `b`.
    pub fn covered(&self, a: &Monomial, b: &Monomial) -> bool {
        let fa = a.factors();
        let fb = b.factors();
        if fa.len() > fb.len() {
            return false;
        }
        // bipartite matching (Kuhn)
        let mut owner: Vec<Option<usize>> = vec![None; fb.len()];
        fn augment(
            i: usize,
            fa: &[&str],
            fb: &[&str],
            reg: &Regime,
            seen: &mut [bool],
            owner: &mut [Option<usize>],
        ) -> bool {
            for j in 0..fb.len() {
                if seen[j] || !reg.covers(fb[j], fa[i]) {
                    continue;
                }
                seen[j] = true;
                if owner[j].is_none() || augment(owner[j].unwrap(), fa, fb, reg, seen, owner) {
                    owner[j] = Some(i);
                    return true;
                }
            }
            false
        }
        (0..fa.len()).all(|i| {
            let mut seen = vec![false; fb.len()];
            augment(i, &fa, &fb, self, &mut seen, &mut owner)
        })
    }

    /// `a` is strictly dominated by `b`.
    pub fn dominated(&self, a: &Monomial, b: &Monomial) -> bool {
        a != b && self.covered(a, b)
    }

    /// Symbol order used for rendering: middle ranks first, then slower,
    /// then the dominant symbols, alphabetical within a rank.
    pub fn symbol_order(&self) -> Vec<String> {
        let mut syms: Vec<(&String, &u8)> = self.ranks.iter().collect();
        let class = |r: u8| -> u8 {
            match r {
                0 => 2,
                1 => 0,
                _ => 1,
            }
        };
        syms.sort_by(|a, b| class(*a.1).cmp(&class(*b.1)).then(b.1.cmp(a.1)).then(a.0.cmp(b.0)));
        syms.into_iter().map(|(s, _)| s.clone()).collect()
    }

    /// Orders monomials by total degree in rank-1 symbols (ascending), then
    /// by degree in rank-0 symbols (descending).
    pub fn sort_terms(&self, terms: &mut [Monomial]) {
        let deg = |m: &Monomial, rank: u8| -> u32 {
            m.symbols().filter(|(s, _)| self.rank(s) == rank).map(|(_, k)| *k).sum()
        };
        terms.sort_by(|a, b| deg(a, 1).cmp(&deg(b, 1)).then(deg(b, 0).cmp(&deg(a, 0))).then(a.cmp(b)));
    }

    /// `O(...)` string of a set of leading monomials.
    pub fn big_o(&self, terms: &[Monomial]) -> String {
        let order = self.symbol_order();
        let mut ts = terms.to_vec();
        self.sort_terms(&mut ts);
        let body: Vec<String> = ts.iter().map(|m| m.render(&order)).collect();
        format!("O({})", body.join(" + "))
    }
}

/// Compares two costs by their leading terms: `Less` when every leading term
/// of `a` is covered by one of `b` but not conversely.
pub fn compare_asymptotic(a: &CostPolynomial, b: &CostPolynomial, regime: &Regime) -> Asymptotic {
    let (Ok(la), Ok(lb)) = (a.leading_terms(regime), b.leading_terms(regime)) else {
        return Asymptotic::Incomparable;
    };
    let below = |x: &[Monomial], y: &[Monomial]| x.iter().all(|m| y.iter().any(|n| regime.covered(m, n)));
    match (below(&la, &lb), below(&lb, &la)) {
        (true, true) => Asymptotic::Equal,
        (true, false) => Asymptotic::Less,
        (false, true) => Asymptotic::Greater,
        (false, false) => Asymptotic::Incomparable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(a: i64, b: i64) -> Rational {
        Rational::new(a, b)
    }

    fn mono(p: &[(&str, u32)]) -> Monomial {
        Monomial::from_pairs(p)
    }

    /// (numerator, denominator, monomial)
    type Term<'a> = (i64, i64, &'a [(&'a str, u32)]);

    fn poly(terms: &[Term]) -> CostPolynomial {
        terms.iter().fold(CostPolynomial::zero(), |acc, (a, b, m)| {
            acc.add(&CostPolynomial::term(r(*a, *b), mono(m)))
        })
    }

    #[test]
    fn extent_product_and_evaluation() {
        let c = poly(&[(1, 3, &[("n", 3)]), (1, 1, &[("n", 2), ("p", 1)])]);
        let got = c.mul_by_extent(&["m"]);
        let want = poly(&[(1, 3, &[("m", 1), ("n", 3)]), (1, 1, &[("m", 1), ("n", 2), ("p", 1)])]);
        assert_eq!(got, want);
        assert_eq!(c.add(&CostPolynomial::zero()), c);
        let vals: BTreeMap<String, i64> = [("n".to_string(), 10), ("p".to_string(), 2)].into();
        assert_eq!(
            CostPolynomial::term(r(1, 1), mono(&[("n", 2), ("p", 1)]))
                .eval(&vals)
                .unwrap(),
            r(200, 1)
        );
        assert!(matches!(c.eval(&BTreeMap::new()), Err(CostError::Unbound(_))));
    }

    #[test]
    fn leading_terms_under_gwas_regime() {
        let reg = Regime::gwas();
        let chol_1d = poly(&[
            (1, 3, &[("n", 3)]),
            (2, 1, &[("n", 2)]),
            (1, 1, &[("m", 1), ("p", 1), ("n", 2)]),
            (1, 1, &[("m", 1), ("p", 2), ("n", 1)]),
            (1, 3, &[("m", 1), ("p", 3)]),
        ]);
        let lt = chol_1d.leading_terms(&reg).unwrap();
        assert_eq!(lt, vec![mono(&[("n", 3)]), mono(&[("m", 1), ("p", 1), ("n", 2)])]);
        assert_eq!(reg.big_o(&lt), "O(n^3 + m p n^2)");
        let single = CostPolynomial::term(r(2, 1), mono(&[("n", 2), ("p", 1)]));
        assert_eq!(single.leading_terms(&reg).unwrap(), vec![mono(&[("n", 2), ("p", 1)])]);
        assert_eq!(CostPolynomial::zero().leading_terms(&reg), Err(CostError::Zero));
        let eig = vec![
            mono(&[("n", 3)]),
            mono(&[("m", 1), ("p", 1), ("n", 2)]),
            mono(&[("m", 1), ("t", 1), ("p", 2), ("n", 1)]),
        ];
        assert_eq!(reg.big_o(&eig), "O(n^3 + m p n^2 + m t p^2 n)");
    }

    #[test]
    fn asymptotic_comparison() {
        let reg = Regime::gwas();
        let eig = poly(&[
            (9, 1, &[("n", 3)]),
            (2, 1, &[("m", 1), ("p", 1), ("n", 2)]),
            (2, 1, &[("m", 1), ("t", 1), ("p", 2), ("n", 1)]),
        ]);
        let chol = poly(&[
            (1, 3, &[("t", 1), ("n", 3)]),
            (1, 1, &[("m", 1), ("t", 1), ("p", 1), ("n", 2)]),
        ]);
        assert_eq!(compare_asymptotic(&eig, &chol, &reg), Asymptotic::Less);
        assert_eq!(compare_asymptotic(&chol, &eig, &reg), Asymptotic::Greater);
        assert_eq!(compare_asymptotic(&chol, &chol, &reg), Asymptotic::Equal);
    }

    #[test]
    fn rendering() {
        let c = poly(&[(2, 1, &[("n", 1), ("p", 2)]), (-2, 3, &[("p", 3)]), (1, 1, &[])]);
        assert_eq!(c.to_string(), "2 n p^2 - 2/3 p^3 + 1");
    }
}
