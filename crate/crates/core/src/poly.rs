//! Polynomials `Φ(x) = ⟨ν^x, φ⟩` for bounded test functions `φ` of the
//! first `n` sampled distances and marks, their products, and the
//! countable product-form family used as a convergence-determining panel.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dmat::{exact_law, sample_with, DistanceMatrixLaw, DistanceMatrixSample, SampleView};
use crate::numeric::{stream_rng, Welford};
use crate::space::{FiniteMmmSpace, Mark, MarkSpace};
use crate::{Error, Result};

/// Declared smoothness class `k` of the test function; reported, not checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Smoothness {
    Finite(u32),
    Infinite,
}

impl fmt::Display for Smoothness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smoothness::Finite(k) => write!(f, "{k}"),
            Smoothness::Infinite => write!(f, "inf"),
        }
    }
}

type Body = Arc<dyn Fn(&SampleView<'_>) -> f64 + Send + Sync>;

/// A degree-`n` polynomial. The body only ever receives an `n`-point view.
#[derive(Clone)]
pub struct Polynomial {
    degree: usize,
    smoothness: Smoothness,
    bound: f64,
    description: String,
    body: Body,
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Polynomial")
            .field("degree", &self.degree)
            .field("smoothness", &self.smoothness)
            .field("bound", &self.bound)
            .field("description", &self.description)
            .finish()
    }
}

impl Polynomial {
    pub fn new(
        degree: usize,
        smoothness: Smoothness,
        bound: f64,
        description: impl Into<String>,
        body: impl Fn(&SampleView<'_>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Polynomial {
            degree,
            smoothness,
            bound,
            description: description.into(),
            body: Arc::new(body),
        }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::new(0, Smoothness::Infinite, c.abs(), format!("{c}"), move |_| c)
    }

    /// `r_{k,l}` (0-based), bounded by `bound` on the spaces it is used with.
    pub fn distance(k: usize, l: usize, bound: f64) -> Self {
        Polynomial::new(
            k.max(l) + 1,
            Smoothness::Infinite,
            bound,
            format!("r{}{}", k + 1, l + 1),
            move |v| v.r(k, l),
        )
    }

    /// `1{u_k = mark}` (0-based `k`).
    pub fn mark_indicator(k: usize, mark: Mark) -> Self {
        let desc = format!("1{{u{}={:?}}}", k + 1, mark);
        Polynomial::new(k + 1, Smoothness::Infinite, 1.0, desc, move |v| {
            if *v.u(k) == mark {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn with_description(mut self, d: impl Into<String>) -> Self {
        self.description = d.into();
        self
    }

    /// Body on the first `degree` points of the view.
    pub fn eval(&self, view: &SampleView<'_>) -> f64 {
        (self.body)(&view.restrict(self.degree))
    }

    pub fn eval_sample(&self, s: &DistanceMatrixSample) -> Result<f64> {
        if s.order() < self.degree {
            return Err(Error::IndexOutOfRange {
                index: self.degree,
                order: s.order(),
            });
        }
        Ok(self.eval(&s.view()))
    }

    fn checked(&self, value: f64) -> Result<f64> {
        if value.abs() > self.bound || !value.is_finite() {
            return Err(Error::BoundViolated {
                description: self.description.clone(),
                value,
                bound: self.bound,
            });
        }
        Ok(value)
    }

    /// `φ ∘ R_σ`: the body applied to the sample re-indexed by `σ`
    /// (0-based), i.e. `r'_{ij} = r_{σ(i)σ(j)}`.
    pub fn precompose(&self, sigma: Vec<usize>) -> Polynomial {
        assert!(sigma.len() >= self.degree, "index map shorter than the degree");
        let inner = self.clone();
        let degree = sigma.iter().map(|&k| k + 1).max().unwrap_or(0);
        Polynomial::new(
            degree,
            self.smoothness,
            self.bound,
            format!("({})∘σ{:?}", self.description, sigma),
            move |v| inner.eval(&v.select(&sigma).view()),
        )
    }
}

/// `Σ_atoms p · φ(atom)` over an exact law of order at least `phi.degree()`.
pub fn evaluate_on_law(phi: &Polynomial, law: &DistanceMatrixLaw) -> Result<f64> {
    if law.order() < phi.degree() {
        return Err(Error::IndexOutOfRange {
            index: phi.degree(),
            order: law.order(),
        });
    }
    let mut total = 0.0;
    for (atom, p) in law.atoms() {
        total += p * phi.checked(phi.eval(&atom.view()))?;
    }
    Ok(total)
}

/// `⟨ν^x, φ⟩` by enumerating the order-`n` law.
pub fn evaluate_exact(phi: &Polynomial, space: &FiniteMmmSpace) -> Result<f64> {
    let law = exact_law(space, phi.degree())?;
    evaluate_on_law(phi, &law)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: u64,
}

/// Samples per Monte Carlo chunk; chunk `c` draws from stream `c`.
pub const MC_CHUNK: usize = 4096;

/// Mean and standard error of `φ` over `m` independent order-`n` samples.
pub fn evaluate_mc(phi: &Polynomial, space: &FiniteMmmSpace, m: usize, seed: u64) -> Result<McEstimate> {
    if m < 2 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least 2 samples".into()));
    }
    let chunks = m.div_ceil(MC_CHUNK);
    let parts: Vec<Result<Welford>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let count = MC_CHUNK.min(m - c * MC_CHUNK);
            let mut w = Welford::default();
            for _ in 0..count {
                let s = sample_with(space, phi.degree(), &mut rng)?;
                w.push(phi.checked(phi.eval(&s.view()))?);
            }
            Ok(w)
        })
        .collect();
    let mut total = Welford::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(McEstimate {
        estimate: total.mean,
        stderr: total.stderr(),
        samples: total.count,
    })
}

/// The product polynomial: `φ` on the first `n` points times `ψ` on the
/// next `m`, so that its value is `Φ(x) · Ψ(x)`.
pub fn multiply(a: &Polynomial, b: &Polynomial) -> Polynomial {
    let n = a.degree;
    let (fa, fb) = (a.clone(), b.clone());
    Polynomial::new(
        a.degree + b.degree,
        a.smoothness.min(b.smoothness),
        a.bound * b.bound,
        format!("({})·({})∘shift{}", a.description, b.description, n),
        move |v| fa.eval(&v.restrict(n)) * fb.eval(&v.shift(n)),
    )
}

/// A function of one mark.
#[derive(Clone, Debug, PartialEq)]
pub enum MarkFn {
    One,
    Indicator(Mark),
    /// `u ↦ exp(-|⟨θ, u⟩|)`.
    CoordExp(Vec<f64>),
}

impl MarkFn {
    pub fn eval(&self, u: &Mark) -> f64 {
        match self {
            MarkFn::One => 1.0,
            MarkFn::Indicator(m) => {
                if u == m {
                    1.0
                } else {
                    0.0
                }
            }
            MarkFn::CoordExp(theta) => match u {
                Mark::Point(p) => (-theta.iter().zip(p).map(|(t, x)| t * x).sum::<f64>().abs()).exp(),
                Mark::Label(_) => 1.0,
            },
        }
    }

    fn describe(&self, k: usize, ms: &MarkSpace) -> Option<String> {
        match self {
            MarkFn::One => None,
            MarkFn::Indicator(m) => {
                let name = ms.label_name(m).map_or_else(|| format!("{m:?}"), str::to_string);
                Some(format!("1{{u{k}={name}}}"))
            }
            MarkFn::CoordExp(theta) => Some(format!("exp(-|<{theta:?},u{k}>|)")),
        }
    }
}

/// A bounded smooth function of one distance.
#[derive(Clone, Debug, PartialEq)]
pub enum PairFn {
    One,
    /// `s ↦ exp(-λ s)`.
    Exp(f64),
}

impl PairFn {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            PairFn::One => 1.0,
            PairFn::Exp(lambda) => (-lambda * s).exp(),
        }
    }

    fn describe(&self, k: usize, l: usize) -> Option<String> {
        match self {
            PairFn::One => None,
            PairFn::Exp(lambda) => Some(format!("exp(-{lambda}·r{k}{l})")),
        }
    }
}

/// Degree and dictionaries of a product family
/// `Π_k g_k(u_k) Π_{k<l} f_kl(r_kl)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductFamilySpec {
    pub degree: usize,
    pub marks: Vec<MarkFn>,
    pub pairs: Vec<PairFn>,
    pub mark_space: MarkSpace,
}

/// `[1, 1{u=label}...]` for discrete marks, `[1, exp(-|⟨s·e_i, u⟩|)...]`
/// with `s ∈ {½, 1, 2}` for Euclidean ones.
pub fn default_mark_dictionary(mark_space: &MarkSpace) -> Vec<MarkFn> {
    let mut d = vec![MarkFn::One];
    match mark_space {
        MarkSpace::Discrete { labels } => {
            d.extend((0..labels.len()).map(|i| MarkFn::Indicator(Mark::Label(i as u32))));
        }
        MarkSpace::Euclidean { dim } => {
            for i in 0..*dim {
                for s in [0.5, 1.0, 2.0] {
                    let mut theta = vec![0.0; *dim];
                    theta[i] = s;
                    d.push(MarkFn::CoordExp(theta));
                }
            }
        }
    }
    d
}

/// `exp(-λ s)` for `λ ∈ {½, 1, 2, 4}`.
pub fn default_pair_dictionary() -> Vec<PairFn> {
    [0.5, 1.0, 2.0, 4.0].into_iter().map(PairFn::Exp).collect()
}

/// The members of one product family, enumerated in mixed radix over the
/// digit string `(g_1, …, g_n, f_12, f_13, …, f_(n-1)n)` with the last
/// digit varying fastest. Dictionary entry 0 comes first in every slot.
#[derive(Clone, Debug)]
pub struct ProductFamily {
    spec: Arc<ProductFamilySpec>,
    len: u128,
    next: u128,
}

pub fn product_family(spec: ProductFamilySpec) -> Result<ProductFamily> {
    if spec.marks.is_empty() || spec.pairs.is_empty() {
        return Err(Error::Empty("product family dictionaries"));
    }
    let pairs = spec.degree * spec.degree.saturating_sub(1) / 2;
    let len = (spec.marks.len() as u128)
        .checked_pow(spec.degree as u32)
        .and_then(|g| g.checked_mul((spec.pairs.len() as u128).checked_pow(pairs as u32)?))
        .ok_or_else(|| Error::InvalidParameter("product family too large to index".into()))?;
    Ok(ProductFamily {
        spec: Arc::new(spec),
        len,
        next: 0,
    })
}

impl ProductFamily {
    pub fn len(&self) -> u128 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Digits `(g indices, f indices)` of member `index`.
    pub fn digits(&self, index: u128) -> (Vec<usize>, Vec<usize>) {
        let n = self.spec.degree;
        let pairs = n * n.saturating_sub(1) / 2;
        let (gr, fr) = (self.spec.marks.len() as u128, self.spec.pairs.len() as u128);
        let mut rest = index;
        let mut f = vec![0; pairs];
        for slot in f.iter_mut().rev() {
            *slot = (rest % fr) as usize;
            rest /= fr;
        }
        let mut g = vec![0; n];
        for slot in g.iter_mut().rev() {
            *slot = (rest % gr) as usize;
            rest /= gr;
        }
        (g, f)
    }

    pub fn get(&self, index: u128) -> Option<Polynomial> {
        if index >= self.len {
            return None;
        }
        let (g, f) = self.digits(index);
        let spec = &self.spec;
        let n = spec.degree;
        let gs: Vec<MarkFn> = g.iter().map(|&i| spec.marks[i].clone()).collect();
        let fs: Vec<PairFn> = f.iter().map(|&i| spec.pairs[i].clone()).collect();

        let mut parts: Vec<String> = gs
            .iter()
            .enumerate()
            .filter_map(|(k, gk)| gk.describe(k + 1, &spec.mark_space))
            .collect();
        let mut c = 0;
        for k in 0..n {
            for l in k + 1..n {
                if let Some(d) = fs[c].describe(k + 1, l + 1) {
                    parts.push(d);
                }
                c += 1;
            }
        }
        let description = if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("·")
        };
        Some(Polynomial::new(n, Smoothness::Infinite, 1.0, description, move |v| {
            let mut x = 1.0;
            for (k, gk) in gs.iter().enumerate() {
                x *= gk.eval(v.u(k));
            }
            let mut c = 0;
            for k in 0..n {
                for l in k + 1..n {
                    x *= fs[c].eval(v.r(k, l));
                    c += 1;
                }
            }
            x
        }))
    }

    /// True when every mark slot uses dictionary entry 0.
    fn marks_trivial(&self, index: u128) -> bool {
        self.digits(index).0.iter().all(|&g| g == 0)
    }
}

impl Iterator for ProductFamily {
    type Item = Polynomial;

    fn next(&mut self) -> Option<Polynomial> {
        let p = self.get(self.next)?;
        self.next += 1;
        Some(p)
    }
}

/// The first `size` members of the default panel up to degree `n_max`.
///
/// Order: first the pure distance members (all mark functions ≡ 1) of the
/// default families for degrees `2..=n_max`, then the remaining
/// non-constant members for degrees `1..=n_max`, each family in its own
/// enumeration order.
pub fn default_panel(mark_space: &MarkSpace, n_max: usize, size: usize) -> Result<Vec<Polynomial>> {
    let family = |degree| {
        product_family(ProductFamilySpec {
            degree,
            marks: default_mark_dictionary(mark_space),
            pairs: default_pair_dictionary(),
            mark_space: mark_space.clone(),
        })
    };
    let mut out = Vec::with_capacity(size);
    for degree in 2..=n_max {
        let fam = family(degree)?;
        let mut i = 0;
        while out.len() < size && i < fam.len() && fam.marks_trivial(i) {
            out.extend(fam.get(i));
            i += 1;
        }
    }
    for degree in 1..=n_max {
        let fam = family(degree)?;
        let mut i = 0;
        while out.len() < size && i < fam.len() {
            if !fam.marks_trivial(i) {
                out.extend(fam.get(i));
            }
            i += 1;
        }
    }
    Ok(out)
}
