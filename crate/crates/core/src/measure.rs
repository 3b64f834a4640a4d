//! Finite atomic probability measures.

use std::fmt;

use crate::diffusion::ScaleTable;
use crate::{Error, Result};

/// Largest tolerated deviation of a split or reconstruction from the exact
/// masses.
pub const MASS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub value: f64,
    pub weight: f64,
}

/// A probability measure with finitely many atoms.
///
/// Atom values are strictly increasing and weights are positive and sum to
/// one. Instances are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMeasure {
    atoms: Vec<Atom>,
}

impl TargetMeasure {
    /// Sorts, merges equal values and normalises the weights.
    pub fn from_atoms<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut raw: Vec<(f64, f64)> = pairs.into_iter().collect();
        if raw.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        for &(value, weight) in &raw {
            // NaN weights fail this test too
            if !(weight > 0.0) || !weight.is_finite() || !value.is_finite() {
                return Err(Error::NegativeWeight { value, weight });
            }
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut atoms: Vec<Atom> = Vec::with_capacity(raw.len());
        for (value, weight) in raw {
            match atoms.last_mut() {
                Some(last) if last.value == value => last.weight += weight,
                _ => atoms.push(Atom { value, weight }),
            }
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        for a in &mut atoms {
            a.weight /= total;
        }
        Ok(Self { atoms })
    }

    pub fn point_mass(value: f64) -> Self {
        Self {
            atoms: vec![Atom { value, weight: 1.0 }],
        }
    }

    /// Discretises a quantile function on the midpoint grid `(k - 1/2)/n`.
    pub fn from_quantile<F>(n: usize, mut quantile: F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        if n == 0 {
            return Err(Error::EmptyMeasure);
        }
        let w = 1.0 / n as f64;
        let mut pairs = Vec::with_capacity(n);
        for k in 0..n {
            let level = (k as f64 + 0.5) * w;
            pairs.push((quantile(level)?, w));
        }
        Self::from_atoms(pairs)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_point_mass(&self) -> bool {
        self.atoms.len() == 1
    }

    pub fn support_lo(&self) -> f64 {
        self.atoms[0].value
    }

    pub fn support_hi(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].value
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight * a.value).sum()
    }

    /// `mu([x, inf))`.
    pub fn mass_geq(&self, x: f64) -> f64 {
        let i = self.atoms.partition_point(|a| a.value < x);
        self.atoms[i..].iter().map(|a| a.weight).sum()
    }

    /// `mu((x, inf))`.
    pub fn mass_gt(&self, x: f64) -> f64 {
        let i = self.atoms.partition_point(|a| a.value <= x);
        self.atoms[i..].iter().map(|a| a.weight).sum()
    }

    /// `mu((-inf, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        let i = self.atoms.partition_point(|a| a.value <= x);
        self.atoms[..i].iter().map(|a| a.weight).sum()
    }

    /// `mu((-inf, x))`.
    pub fn mass_lt(&self, x: f64) -> f64 {
        let i = self.atoms.partition_point(|a| a.value < x);
        self.atoms[..i].iter().map(|a| a.weight).sum()
    }

    /// Weight of the atom at exactly `x`, or zero.
    pub fn mass_at(&self, x: f64) -> f64 {
        self.atoms
            .binary_search_by(|a| a.value.total_cmp(&x))
            .map(|i| self.atoms[i].weight)
            .unwrap_or(0.0)
    }

    /// The law of `-X`.
    pub fn reflect(&self) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .rev()
                .map(|a| Atom {
                    value: -a.value,
                    weight: a.weight,
                })
                .collect(),
        }
    }

    /// The law of `X - origin`.
    pub fn shift(&self, origin: f64) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    value: a.value - origin,
                    weight: a.weight,
                })
                .collect(),
        }
    }

    /// Conditions the law on its upper `p`-quantile and lower
    /// `(1 - p)`-quantile, dividing any atom at `u` so that
    /// `p * upper + (1 - p) * lower = mu`.
    pub fn quantile_split(&self, p: f64, u: f64) -> Result<(Self, Self)> {
        let above = self.mass_gt(u);
        let at_or_above = self.mass_geq(u);
        let mismatch = Error::QuantileMismatch {
            p,
            u,
            lower: above,
            upper: at_or_above,
        };
        if !(p > 0.0 && p < 1.0) || p < above - MASS_TOL || p > at_or_above + MASS_TOL {
            return Err(mismatch);
        }
        let below = self.mass_lt(u);

        let mut upper = Vec::new();
        let mut lower = Vec::new();
        let upper_at_u = 1.0 - above / p;
        let lower_at_u = 1.0 - below / (1.0 - p);
        for a in &self.atoms {
            if a.value > u {
                upper.push(a.value_weight(a.weight / p));
            } else if a.value < u {
                lower.push(a.value_weight(a.weight / (1.0 - p)));
            } else {
                if upper_at_u > MASS_TOL {
                    upper.push(a.value_weight(upper_at_u));
                }
                if lower_at_u > MASS_TOL {
                    lower.push(a.value_weight(lower_at_u));
                }
            }
        }
        if upper.is_empty() || lower.is_empty() {
            return Err(mismatch);
        }
        Ok((Self::from_atoms(upper)?, Self::from_atoms(lower)?))
    }

    /// Image of the law under the scale map.
    pub fn pushforward(&self, scale: &ScaleTable) -> Result<Self> {
        let (lo, hi) = scale.domain();
        let mut pairs = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            if !(a.value > lo && a.value < hi) {
                return Err(Error::OutOfDomain { value: a.value, lo, hi });
            }
            pairs.push((scale.eval(a.value)?, a.weight));
        }
        Self::from_atoms(pairs)
    }

    /// Parses the text format: one `value weight` pair per line, `#` starts
    /// a comment.
    pub fn parse_text(text: &str) -> std::result::Result<Self, String> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(v), Some(w), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(format!("line {}: expected `value weight`", lineno + 1));
            };
            let v: f64 = v
                .parse()
                .map_err(|_| format!("line {}: bad value `{v}`", lineno + 1))?;
            let w: f64 = w
                .parse()
                .map_err(|_| format!("line {}: bad weight `{w}`", lineno + 1))?;
            pairs.push((v, w));
        }
        Self::from_atoms(pairs).map_err(|e| e.to_string())
    }
}

impl Atom {
    fn value_weight(&self, weight: f64) -> (f64, f64) {
        (self.value, weight)
    }
}

impl fmt::Display for TargetMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({}, {})", a.value, a.weight)?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(pairs: &[(f64, f64)]) -> TargetMeasure {
        TargetMeasure::from_atoms(pairs.iter().copied()).unwrap()
    }

    fn pairs(mu: &TargetMeasure) -> Vec<(f64, f64)> {
        mu.atoms().iter().map(|a| (a.value, a.weight)).collect()
    }

    #[test]
    fn construction_normalises_sorts_and_merges() {
        assert_eq!(pairs(&m(&[(-1.0, 1.0), (1.0, 1.0)])), vec![(-1.0, 0.5), (1.0, 0.5)]);
        assert_eq!(pairs(&m(&[(2.0, 0.5), (0.0, 0.5)])), vec![(0.0, 0.5), (2.0, 0.5)]);
        assert_eq!(pairs(&m(&[(1.0, 0.3), (1.0, 0.7)])), vec![(1.0, 1.0)]);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            TargetMeasure::from_atoms(Vec::<(f64, f64)>::new()),
            Err(Error::EmptyMeasure)
        );
        assert!(matches!(
            TargetMeasure::from_atoms([(0.0, 1.0), (1.0, 0.0)]),
            Err(Error::NegativeWeight { .. })
        ));
        assert!(matches!(
            TargetMeasure::from_atoms([(0.0, -1.0)]),
            Err(Error::NegativeWeight { .. })
        ));
    }

    #[test]
    fn means() {
        assert_eq!(m(&[(-1.0, 0.5), (1.0, 0.5)]).mean(), 0.0);
        assert_eq!(m(&[(-2.0, 0.5), (0.0, 0.5)]).mean(), -1.0);
        assert_eq!(m(&[(0.0, 0.5), (2.0, 0.5)]).mean(), 1.0);
    }

    #[test]
    fn mass_geq_includes_left_endpoint() {
        let mu = m(&[(-1.0, 0.5), (1.0, 0.5)]);
        assert_eq!(mu.mass_geq(0.0), 0.5);
        assert_eq!(mu.mass_geq(-1.0), 1.0);
        assert_eq!(mu.mass_geq(1.5), 0.0);
        assert_eq!(mu.mass_gt(-1.0), 0.5);
    }

    #[test]
    fn quantile_split_examples() {
        let (up, lo) = m(&[(0.0, 0.5), (2.0, 0.5)]).quantile_split(0.5, 0.0).unwrap();
        assert_eq!(pairs(&up), vec![(2.0, 1.0)]);
        assert_eq!(pairs(&lo), vec![(0.0, 1.0)]);

        let (up, lo) = m(&[(-1.0, 0.5), (1.0, 0.5)]).quantile_split(0.5, -1.0).unwrap();
        assert_eq!(pairs(&up), vec![(1.0, 1.0)]);
        assert_eq!(pairs(&lo), vec![(-1.0, 1.0)]);

        let (up, lo) = TargetMeasure::point_mass(0.0).quantile_split(0.5, 0.0).unwrap();
        assert_eq!(pairs(&up), vec![(0.0, 1.0)]);
        assert_eq!(pairs(&lo), vec![(0.0, 1.0)]);
    }

    #[test]
    fn quantile_split_divides_boundary_atom() {
        let mu = m(&[(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]);
        let (up, lo) = mu.quantile_split(0.5, 0.0).unwrap();
        assert_eq!(pairs(&up), vec![(0.0, 0.5), (1.0, 0.5)]);
        assert_eq!(pairs(&lo), vec![(-1.0, 0.5), (0.0, 0.5)]);
    }

    #[test]
    fn quantile_split_rejects_bad_level() {
        let mu = m(&[(0.0, 0.5), (2.0, 0.5)]);
        assert!(matches!(mu.quantile_split(0.7, 2.0), Err(Error::QuantileMismatch { .. })));
        assert!(matches!(mu.quantile_split(0.0, 0.0), Err(Error::QuantileMismatch { .. })));
    }

    #[test]
    fn text_format() {
        let mu = TargetMeasure::parse_text("# target\n-1 1\n\n1 1 # right\n").unwrap();
        assert_eq!(pairs(&mu), vec![(-1.0, 0.5), (1.0, 0.5)]);
        assert!(TargetMeasure::parse_text("1 2 3").is_err());
        assert!(TargetMeasure::parse_text("# nothing").is_err());
    }

    fn arb_measure() -> impl Strategy<Value = TargetMeasure> {
        prop::collection::vec((-20i32..20, 1u32..100), 1..8).prop_map(|v| {
            TargetMeasure::from_atoms(v.into_iter().map(|(x, w)| (x as f64 * 0.5, w as f64))).unwrap()
        })
    }

    proptest! {
        #[test]
        fn split_reconstructs(mu in arb_measure(), k in 0usize..8, t in 0.0f64..1.0) {
            let k = k % mu.len();
            let u = mu.atoms()[k].value;
            let p = mu.mass_gt(u) + t * mu.mass_at(u);
            prop_assume!(p > 1e-6 && p < 1.0 - 1e-6);
            let (up, lo) = mu.quantile_split(p, u).unwrap();
            for a in mu.atoms() {
                let rebuilt = p * up.mass_at(a.value) + (1.0 - p) * lo.mass_at(a.value);
                prop_assert!((rebuilt - a.weight).abs() < 1e-12);
            }
            prop_assert!(up.mean() >= mu.mean() - 1e-12);
            prop_assert!(mu.mean() >= lo.mean() - 1e-12);
        }

        #[test]
        fn mass_geq_is_monotone_step(mu in arb_measure(), x in -12.0f64..12.0, d in 0.0f64..3.0) {
            prop_assert!(mu.mass_geq(x + d) <= mu.mass_geq(x) + 1e-15);
            let between = mu.atoms().iter().any(|a| a.value >= x && a.value < x + d);
            if !between {
                prop_assert_eq!(mu.mass_geq(x), mu.mass_geq(x + d));
            }
        }
    }
}
