//! ANOVA term structures, hyperparameters and dense Gram assembly.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernels::GramMatrix;

/// Largest `n` accepted by dense computations.
pub const DENSE_LIMIT: usize = 5000;

/// A model term: a set of zero-based dimension indices.
///
/// The empty set is the constant term. Terms print and parse with one-based
/// dimension numbers joined by `:`, and `0` for the constant term.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Term(Vec<usize>);

impl Term {
    pub fn constant() -> Self {
        Term(Vec::new())
    }

    pub fn new(dims: impl IntoIterator<Item = usize>) -> Self {
        let set: BTreeSet<usize> = dims.into_iter().collect();
        Term(set.into_iter().collect())
    }

    pub fn single(dim: usize) -> Self {
        Term(vec![dim])
    }

    /// The full set `{0, ..., d-1}`.
    pub fn full(d: usize) -> Self {
        Term((0..d).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn is_constant(&self) -> bool {
        self.0.is_empty()
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, dim: usize) -> bool {
        self.0.binary_search(&dim).is_ok()
    }

    pub fn is_subset_of(&self, other: &Term) -> bool {
        self.0.iter().all(|l| other.contains(*l))
    }

    /// All nonempty proper subsets, in canonical order.
    pub fn proper_subsets(&self) -> Vec<Term> {
        let k = self.0.len();
        let mut out: Vec<Term> = (1..(1usize << k).saturating_sub(1))
            .map(|mask| Term((0..k).filter(|b| mask >> b & 1 == 1).map(|b| self.0[b]).collect()))
            .collect();
        out.sort();
        out
    }
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.0.iter().map(|l| (l + 1).to_string()).collect();
        write!(f, "{}", parts.join(":"))
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "0" {
            return Ok(Term::constant());
        }
        let mut dims = Vec::new();
        for part in s.split(':') {
            let l: usize = part.trim().parse().map_err(|_| Error::InvalidTerms(format!("cannot parse term `{s}`")))?;
            if l == 0 {
                return Err(Error::InvalidTerms(format!("term `{s}`: dimensions are numbered from 1 and `0` stands alone")));
            }
            dims.push(l - 1);
        }
        let term = Term::new(dims.iter().copied());
        if term.order() != dims.len() {
            return Err(Error::InvalidTerms(format!("term `{s}` repeats a dimension")));
        }
        Ok(term)
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermMode {
    Hierarchical,
    TensorOnly,
}

/// The set of terms defining a model over `d` dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TermCollection {
    d: usize,
    terms: Vec<Term>,
    mode: TermMode,
}

/// Why a term collection is not valid for its mode.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ViolationReport {
    pub missing: Vec<Term>,
    pub problems: Vec<String>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty() && self.problems.is_empty()
    }
}

impl fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.problems.clone();
        if !self.missing.is_empty() {
            let names: Vec<String> = self.missing.iter().map(|t| t.to_string()).collect();
            parts.push(format!("missing required terms {}", names.join(", ")));
        }
        write!(f, "{}", parts.join("; "))
    }
}

impl TermCollection {
    /// Builds a collection, sorting terms canonically. Structural problems
    /// (out-of-range dimensions, duplicates) are errors; hierarchy is
    /// checked separately by [`validate_terms`].
    pub fn new(d: usize, terms: impl IntoIterator<Item = Term>, mode: TermMode) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidTerms("a model needs at least one dimension".into()));
        }
        let mut terms: Vec<Term> = terms.into_iter().collect();
        if let Some(t) = terms.iter().find(|t| t.dims().iter().any(|&l| l >= d)) {
            return Err(Error::InvalidTerms(format!("term {t} refers to a dimension beyond d = {d}")));
        }
        terms.sort();
        if let Some(w) = terms.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidTerms(format!("term {} is listed twice", w[0])));
        }
        Ok(TermCollection { d, terms, mode })
    }

    /// Builds and validates a collection, failing with the violation report.
    pub fn validated(d: usize, terms: impl IntoIterator<Item = Term>, mode: TermMode) -> Result<Self> {
        let tc = Self::new(d, terms, mode)?;
        validate_terms(&tc).map_err(|r| Error::InvalidTerms(r.to_string()))?;
        Ok(tc)
    }

    /// Parses term strings. A lone full-set term without the constant is
    /// taken as the tensor-only model.
    pub fn parse(d: usize, terms: &[impl AsRef<str>]) -> Result<Self> {
        let parsed: Vec<Term> = terms.iter().map(|s| s.as_ref().parse()).collect::<Result<_>>()?;
        let mode = if parsed.len() == 1 && parsed[0] == Term::full(d) && d > 0 && !parsed[0].is_constant() {
            TermMode::TensorOnly
        } else {
            TermMode::Hierarchical
        };
        Self::validated(d, parsed, mode)
    }

    pub fn main_effects(d: usize) -> Self {
        let terms = std::iter::once(Term::constant()).chain((0..d).map(Term::single));
        Self::new(d, terms, TermMode::Hierarchical).expect("main effects are well formed")
    }

    /// All `2^d` subsets.
    pub fn saturated(d: usize) -> Self {
        let terms = (0..1usize << d).map(|mask| Term::new((0..d).filter(|l| mask >> l & 1 == 1)));
        Self::new(d, terms, TermMode::Hierarchical).expect("saturated model is well formed")
    }

    pub fn tensor_only(d: usize) -> Self {
        Self::new(d, [Term::full(d)], TermMode::TensorOnly).expect("tensor model is well formed")
    }

    /// Named presets: `model1`..`model5` for `d = 3`, and `main`,
    /// `saturated`, `tensor` for any `d`.
    pub fn preset(name: &str, d: usize) -> Result<Self> {
        match name {
            "main" => return Ok(Self::main_effects(d)),
            "saturated" => return Ok(Self::saturated(d)),
            "tensor" => return Ok(Self::tensor_only(d)),
            _ => {}
        }
        let presets = model_presets();
        let found = presets.into_iter().find(|(n, _)| n == name);
        match found {
            Some(_) if d != 3 => Err(Error::Config(format!("preset {name} is defined for three dimensions only"))),
            Some((_, tc)) => Ok(tc),
            None => Err(Error::Config(format!("unknown model preset `{name}`"))),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn mode(&self) -> TermMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, term: &Term) -> bool {
        self.terms.binary_search(term).is_ok()
    }

    pub fn has_constant(&self) -> bool {
        self.contains(&Term::constant())
    }

    /// Dimensions appearing in at least one non-constant term.
    pub fn active_dims(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.terms.iter().flat_map(|t| t.dims().iter().copied()).collect();
        set.into_iter().collect()
    }

    pub fn term_strings(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.to_string()).collect()
    }
}

impl fmt::Display for TermCollection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.term_strings().join(", "))
    }
}

/// Checks the invariants of the collection's mode.
pub fn validate_terms(tc: &TermCollection) -> std::result::Result<(), ViolationReport> {
    let mut report = ViolationReport::default();
    match tc.mode {
        TermMode::Hierarchical => {
            if tc.terms.is_empty() {
                report.problems.push("no terms".into());
            }
            let mut required: BTreeSet<Term> = BTreeSet::new();
            required.insert(Term::constant());
            required.extend((0..tc.d).map(Term::single));
            for t in &tc.terms {
                required.extend(t.proper_subsets());
            }
            report.missing = required.into_iter().filter(|t| !tc.contains(t)).collect();
        }
        TermMode::TensorOnly => {
            if tc.terms != [Term::full(tc.d)] {
                report.problems.push(format!("tensor-only models consist of exactly the term {}", Term::full(tc.d)));
            }
        }
    }
    if report.is_empty() {
        Ok(())
    } else {
        Err(report)
    }
}

/// The five models used for three-dimensional space-day-hour data.
pub fn model_presets() -> Vec<(String, TermCollection)> {
    let t = |s: &str| -> Term { s.parse().expect("preset term") };
    let m1 = ["0", "1", "2", "3"];
    let m2 = ["0", "1", "2", "3", "1:2", "1:3"];
    let m3 = ["0", "1", "2", "3", "1:2", "1:3", "2:3"];
    let m4 = ["0", "1", "2", "3", "1:2", "1:3", "2:3", "1:2:3"];
    let h = |names: &[&str]| TermCollection::new(3, names.iter().map(|s| t(s)), TermMode::Hierarchical).expect("preset");
    vec![
        ("model1".into(), h(&m1)),
        ("model2".into(), h(&m2)),
        ("model3".into(), h(&m3)),
        ("model4".into(), h(&m4)),
        ("model5".into(), TermCollection::tensor_only(3)),
    ]
}

/// Overall scale, per-dimension scales and noise standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha0: f64,
    pub alpha: Vec<f64>,
    pub sigma: f64,
}

impl HyperParams {
    pub fn new(alpha0: f64, alpha: Vec<f64>, sigma: f64) -> Self {
        HyperParams { alpha0, alpha, sigma }
    }

    pub fn ones(d: usize) -> Self {
        HyperParams { alpha0: 1.0, alpha: vec![1.0; d], sigma: 1.0 }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.alpha.len() != d {
            return Err(Error::Shape(format!("expected {d} per-dimension scales, got {}", self.alpha.len())));
        }
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.alpha0) || !ok(self.sigma) || !self.alpha.iter().all(|&a| ok(a)) {
            return Err(Error::Config(format!("hyperparameters must be positive and finite: {self:?}")));
        }
        Ok(())
    }

    /// `(alpha0, alpha_1, ..., alpha_d, sigma)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.alpha.len() + 2);
        v.push(self.alpha0);
        v.extend_from_slice(&self.alpha);
        v.push(self.sigma);
        v
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// `alpha0^2 * prod_{l in term} alpha_l^2`.
    pub fn term_scale(&self, term: &Term) -> f64 {
        let a0 = self.alpha0 * self.alpha0;
        term.dims().iter().fold(a0, |s, &l| s * self.alpha[l] * self.alpha[l])
    }
}

/// Dense Kronecker product.
pub fn dense_kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Dense `alpha0^2 * sum_terms kron_l B_l` with `B_l = alpha_l^2 K_l` for
/// dimensions in the term and the all-ones matrix otherwise. Dimension `0`
/// is the outermost Kronecker factor.
pub fn assemble_dense_gram(tc: &TermCollection, grams: &[GramMatrix], hp: &HyperParams) -> Result<DMatrix<f64>> {
    let d = tc.d();
    if grams.len() != d {
        return Err(Error::Shape(format!("expected {d} Gram matrices, got {}", grams.len())));
    }
    hp.validate(d)?;
    let sizes: Vec<usize> = grams.iter().map(|g| g.size()).collect();
    let n: usize = sizes.iter().product();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { n, limit: DENSE_LIMIT });
    }
    let mut total = DMatrix::zeros(n, n);
    for term in tc.terms() {
        let mut prod = DMatrix::from_element(1, 1, hp.alpha0 * hp.alpha0);
        for l in 0..d {
            let factor = if term.contains(l) {
                &grams[l].values * (hp.alpha[l] * hp.alpha[l])
            } else {
                DMatrix::from_element(sizes[l], sizes[l], 1.0)
            };
            prod = dense_kron(&prod, &factor);
        }
        total += prod;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn terms(list: &[&str]) -> Vec<Term> {
        list.iter().map(|s| s.parse().unwrap()).collect()
    }

    #[test]
    fn term_strings_round_trip() {
        for s in ["0", "1", "2:3", "1:2:3"] {
            let t: Term = s.parse().unwrap();
            assert_eq!(t.to_string(), s);
        }
        assert_eq!("3:1".parse::<Term>().unwrap().to_string(), "1:3");
        assert!("1:1".parse::<Term>().is_err());
        assert!("0:1".parse::<Term>().is_err());
        assert!("x".parse::<Term>().is_err());
        let json = serde_json::to_string(&Term::new([0, 2])).unwrap();
        assert_eq!(json, "\"1:3\"");
        assert_eq!(serde_json::from_str::<Term>(&json).unwrap(), Term::new([0, 2]));
    }

    #[test]
    fn canonical_order_is_cardinality_then_lexicographic() {
        let tc = TermCollection::new(3, terms(&["2:3", "1", "0", "1:2:3", "3", "1:3", "2", "1:2"]), TermMode::Hierarchical).unwrap();
        assert_eq!(tc.term_strings(), ["0", "1", "2", "3", "1:2", "1:3", "2:3", "1:2:3"]);
    }

    #[test]
    fn validation_examples() {
        let sat2 = TermCollection::new(2, terms(&["0", "1", "2", "1:2"]), TermMode::Hierarchical).unwrap();
        assert!(validate_terms(&sat2).is_ok());

        let gap = TermCollection::new(2, terms(&["0", "1", "1:2"]), TermMode::Hierarchical).unwrap();
        let report = validate_terms(&gap).unwrap_err();
        assert_eq!(report.missing, vec![Term::single(1)]);

        let tensor = TermCollection::new(3, terms(&["1:2:3"]), TermMode::TensorOnly).unwrap();
        assert!(validate_terms(&tensor).is_ok());

        let three_four = TermCollection::new(4, terms(&["0", "1", "2", "3", "4", "1:2", "1:2:3"]), TermMode::Hierarchical).unwrap();
        let report = validate_terms(&three_four).unwrap_err();
        assert_eq!(report.missing, terms(&["1:3", "2:3"]));
    }

    #[test]
    fn structural_errors() {
        assert!(TermCollection::new(2, terms(&["0", "3"]), TermMode::Hierarchical).is_err());
        assert!(TermCollection::new(2, terms(&["1", "1"]), TermMode::Hierarchical).is_err());
        let not_tensor = TermCollection::new(2, terms(&["0", "1", "2"]), TermMode::TensorOnly).unwrap();
        assert!(validate_terms(&not_tensor).is_err());
    }

    #[test]
    fn presets_have_expected_shape() {
        let p = model_presets();
        let names: Vec<&str> = p.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["model1", "model2", "model3", "model4", "model5"]);
        assert_eq!(p[3].1.len(), 8);
        assert!(!p[1].1.contains(&"2:3".parse().unwrap()));
        assert_eq!(p[4].1.mode(), TermMode::TensorOnly);
        for (_, tc) in &p {
            assert!(validate_terms(tc).is_ok());
        }
        assert_eq!(TermCollection::saturated(3), p[3].1);
        assert_eq!(TermCollection::main_effects(3), p[0].1);
        assert!(TermCollection::preset("model2", 2).is_err());
        assert_eq!(TermCollection::parse(3, &["1:2:3"]).unwrap().mode(), TermMode::TensorOnly);
    }

    fn centred2() -> GramMatrix {
        GramMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1., -1., -1., 1.])).unwrap()
    }

    #[test]
    fn saturated_equals_product_form() {
        let tc = TermCollection::saturated(2);
        let k = assemble_dense_gram(&tc, &[centred2(), centred2()], &HyperParams::ones(2)).unwrap();
        let ones = DMatrix::from_element(2, 2, 1.0);
        let f = &ones + &centred2().values;
        let want = f.kronecker(&f);
        assert_eq!(k, want);
    }

    #[test]
    fn constant_only_model() {
        let tc = TermCollection::new(2, [Term::constant()], TermMode::Hierarchical).unwrap();
        let hp = HyperParams::new(3.0, vec![2.0, 5.0], 1.0);
        let k = assemble_dense_gram(&tc, &[centred2(), centred2()], &hp).unwrap();
        assert_eq!(k, DMatrix::from_element(4, 4, 9.0));
    }

    #[test]
    fn model1_matches_naive_loop() {
        let mk = |n: usize, seed: f64| {
            let m = DMatrix::from_fn(n, n, |i, j| ((i + 1) as f64 * seed + (j + 1) as f64 * seed).sin());
            GramMatrix::from_matrix((&m + m.transpose()) * 0.5).unwrap()
        };
        let grams = [mk(2, 0.3), mk(3, 0.7), mk(2, 1.1)];
        let hp = HyperParams::new(1.5, vec![0.5, 2.0, 1.2], 1.0);
        let tc = TermCollection::main_effects(3);
        let k = assemble_dense_gram(&tc, &grams, &hp).unwrap();
        let a0 = hp.alpha0 * hp.alpha0;
        let a: Vec<f64> = hp.alpha.iter().map(|x| x * x).collect();
        let idx = |i: usize| (i / 6, (i / 2) % 3, i % 2);
        for i in 0..12 {
            for j in 0..12 {
                let (a1, a2, a3) = idx(i);
                let (b1, b2, b3) = idx(j);
                let want =
                    a0 * (1.0 + a[0] * grams[0].values[(a1, b1)] + a[1] * grams[1].values[(a2, b2)] + a[2] * grams[2].values[(a3, b3)]);
                assert_relative_eq!(k[(i, j)], want, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn dense_guard() {
        let big = GramMatrix::from_matrix(DMatrix::zeros(80, 80)).unwrap();
        let tc = TermCollection::main_effects(2);
        let err = assemble_dense_gram(&tc, &[big.clone(), big], &HyperParams::ones(2)).unwrap_err();
        assert!(matches!(err, Error::TooLarge { n: 6400, .. }));
    }
}
