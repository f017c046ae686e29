//! Relative-compactness diagnostics: the modulus of mass distribution,
//! tails of the distance and mark distributions, their suprema over a
//! family of spaces, and sampled versions of the first-mark, first-distance
//! and ball-mass functionals.
//!
//! Balls are open: `B_ε(i) = {j : r(i,j) < ε}`. Verdicts are diagnostics on
//! finitely many members and grid points; they are consistent with
//! tightness or not, never a proof of it.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dmat::mark_marginal;
use crate::numeric::{round_sig12, seeded_rng, FixedSum};
use crate::space::{draw_indices, FiniteMmmSpace, Mark, MarkSpace};
use crate::{Error, Result};

/// Default threshold for the modulus and tail verdicts.
pub const DEFAULT_THRESHOLD: f64 = 0.05;

/// `μ(B_ε(i) × I)` for every point `i`, clamped to 1 against rounding in
/// the weights.
pub fn ball_masses(space: &FiniteMmmSpace, eps: f64) -> Vec<f64> {
    (0..space.len())
        .map(|i| {
            (0..space.len())
                .filter(|&j| space.distance(i, j) < eps)
                .map(|j| space.weight(j))
                .collect::<FixedSum>()
                .value()
                .min(1.0)
        })
        .collect()
}

/// Mass of the points whose open `eps`-ball carries mass at most `delta`.
pub fn modulus_mass(space: &FiniteMmmSpace, eps: f64, delta: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("ball radius {eps} must be positive")));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!("mass level {delta} is outside [0, 1]")));
    }
    let m = ball_masses(space, eps);
    Ok((0..space.len())
        .filter(|&i| m[i] <= delta)
        .map(|i| space.weight(i))
        .collect::<FixedSum>()
        .value())
}

fn check_grid(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter(format!("{what} grid is empty")));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{what} grid must be finite and increasing"
        )));
    }
    Ok(())
}

/// A tail curve: `mass` is the tail probability beyond `at`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailPoint {
    pub at: f64,
    pub mass: f64,
}

/// `P(r₁₂ > t)` under two independent draws, for each `t` of the grid.
pub fn distance_tail(space: &FiniteMmmSpace, grid: &[f64]) -> Result<Vec<TailPoint>> {
    check_grid(grid, "distance")?;
    Ok(grid
        .iter()
        .map(|&t| {
            let mut s = FixedSum::default();
            for i in 0..space.len() {
                for j in 0..space.len() {
                    if space.distance(i, j) > t {
                        s.add(space.weight(i) * space.weight(j));
                    }
                }
            }
            TailPoint { at: t, mass: s.value() }
        })
        .collect())
}

/// The sets whose complements define the mark tail.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MarkTailGrid {
    /// Closed balls `{u : |u| ≤ R}` around the origin of a Euclidean mark space.
    Radii { radii: Vec<f64> },
    /// Nested label sets, each given by its label names.
    Labels { sets: Vec<Vec<String>> },
}

impl MarkTailGrid {
    /// Radii `1, 2, 4, 8, 16` for Euclidean marks; the label prefixes
    /// `{l₀}, {l₀, l₁}, …` for discrete ones.
    pub fn default_for(mark_space: &MarkSpace) -> MarkTailGrid {
        match mark_space {
            MarkSpace::Euclidean { .. } => MarkTailGrid::Radii {
                radii: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            },
            MarkSpace::Discrete { labels } => MarkTailGrid::Labels {
                sets: (1..=labels.len()).map(|k| labels[..k].to_vec()).collect(),
            },
        }
    }
}

/// Mark mass outside each set of the grid. Label curves use the set size
/// as their `at` coordinate.
pub fn mark_tail(space: &FiniteMmmSpace, grid: &MarkTailGrid) -> Result<Vec<TailPoint>> {
    let marginal = mark_marginal(space);
    let ms = space.mark_space();
    let outside = |keep: &dyn Fn(&Mark) -> bool| {
        marginal
            .iter()
            .filter(|(m, _)| !keep(m))
            .map(|(_, &w)| w)
            .collect::<FixedSum>()
            .value()
    };
    match grid {
        MarkTailGrid::Radii { radii } => {
            check_grid(radii, "mark radius")?;
            if ms.is_discrete() {
                return Err(Error::InvalidParameter("radius grid needs Euclidean marks".into()));
            }
            Ok(radii
                .iter()
                .map(|&r| TailPoint {
                    at: r,
                    mass: outside(&|m| match m {
                        Mark::Point(p) => p.iter().map(|x| x * x).sum::<f64>().sqrt() <= r,
                        Mark::Label(_) => false,
                    }),
                })
                .collect())
        }
        MarkTailGrid::Labels { sets } => {
            if sets.is_empty() {
                return Err(Error::InvalidParameter("label grid is empty".into()));
            }
            let mut curve = Vec::with_capacity(sets.len());
            let mut prev: Vec<Mark> = Vec::new();
            for set in sets {
                let marks = set
                    .iter()
                    .map(|name| {
                        ms.label_index(name)
                            .ok_or_else(|| Error::InvalidParameter(format!("unknown label {name:?}")))
                    })
                    .collect::<Result<Vec<Mark>>>()?;
                if !prev.iter().all(|m| marks.contains(m)) {
                    return Err(Error::InvalidParameter("label sets must be nested".into()));
                }
                curve.push(TailPoint {
                    at: marks.len() as f64,
                    mass: outside(&|m| marks.contains(m)),
                });
                prev = marks;
            }
            Ok(curve)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct TightnessConfig {
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
    pub distance_grid: Vec<f64>,
    /// Defaults to [`MarkTailGrid::default_for`] the family's mark space.
    pub mark_grid: Option<MarkTailGrid>,
    pub modulus_threshold: f64,
    pub tail_threshold: f64,
}

impl TightnessConfig {
    pub fn new(eps: Vec<f64>, delta: Vec<f64>, distance_grid: Vec<f64>) -> Self {
        TightnessConfig {
            eps,
            delta,
            distance_grid,
            mark_grid: None,
            modulus_threshold: DEFAULT_THRESHOLD,
            tail_threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModulusPoint {
    pub eps: f64,
    pub delta: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdicts {
    /// Sup-modulus at the smallest `δ` is at most the threshold for every `ε`.
    pub modulus: bool,
    /// Sup distance tail at the largest grid point is at most the threshold.
    pub distance_tail: bool,
    /// Sup mark tail at the largest grid set is at most the threshold.
    pub mark_tail: bool,
    pub tightness_consistent: bool,
    pub modulus_threshold: f64,
    pub tail_threshold: f64,
}

/// Pointwise suprema over a family of spaces.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TightnessReport {
    pub members: usize,
    pub distance_tail: Vec<TailPoint>,
    pub modulus: Vec<ModulusPoint>,
    pub mark_tail: Vec<TailPoint>,
    pub verdicts: Verdicts,
}

struct Curves {
    distance_tail: Vec<TailPoint>,
    modulus: Vec<ModulusPoint>,
    mark_tail: Vec<TailPoint>,
}

fn sup_into(acc: &mut [TailPoint], other: &[TailPoint]) {
    for (a, b) in acc.iter_mut().zip(other) {
        a.mass = a.mass.max(b.mass);
    }
}

pub fn family_tightness(spaces: &[FiniteMmmSpace], config: &TightnessConfig) -> Result<TightnessReport> {
    let first = spaces.first().ok_or(Error::Empty("space family"))?;
    if spaces.iter().any(|s| s.mark_space() != first.mark_space()) {
        return Err(Error::InvalidParameter(
            "family members use different mark spaces".into(),
        ));
    }
    check_grid(&config.eps, "eps")?;
    check_grid(&config.delta, "delta")?;
    let mark_grid = config
        .mark_grid
        .clone()
        .unwrap_or_else(|| MarkTailGrid::default_for(first.mark_space()));
    let curves: Vec<Result<Curves>> = spaces
        .par_iter()
        .map(|s| {
            let mut modulus = Vec::with_capacity(config.eps.len() * config.delta.len());
            for &eps in &config.eps {
                for &delta in &config.delta {
                    modulus.push(ModulusPoint {
                        eps,
                        delta,
                        mass: modulus_mass(s, eps, delta)?,
                    });
                }
            }
            Ok(Curves {
                distance_tail: distance_tail(s, &config.distance_grid)?,
                modulus,
                mark_tail: mark_tail(s, &mark_grid)?,
            })
        })
        .collect();
    let mut it = curves.into_iter();
    let mut acc = it.next().expect("family is nonempty")?;
    for c in it {
        let c = c?;
        sup_into(&mut acc.distance_tail, &c.distance_tail);
        sup_into(&mut acc.mark_tail, &c.mark_tail);
        for (a, b) in acc.modulus.iter_mut().zip(&c.modulus) {
            a.mass = a.mass.max(b.mass);
        }
    }
    let finest = config.delta[0];
    let modulus_ok = acc
        .modulus
        .iter()
        .filter(|p| p.delta == finest)
        .all(|p| p.mass <= config.modulus_threshold);
    let tail_ok = |c: &[TailPoint]| c.last().is_some_and(|p| p.mass <= config.tail_threshold);
    let verdicts = Verdicts {
        modulus: modulus_ok,
        distance_tail: tail_ok(&acc.distance_tail),
        mark_tail: tail_ok(&acc.mark_tail),
        tightness_consistent: modulus_ok && tail_ok(&acc.distance_tail) && tail_ok(&acc.mark_tail),
        modulus_threshold: config.modulus_threshold,
        tail_threshold: config.tail_threshold,
    };
    Ok(TightnessReport {
        members: spaces.len(),
        distance_tail: acc.distance_tail,
        modulus: acc.modulus,
        mark_tail: acc.mark_tail,
        verdicts,
    })
}

/// A finitely supported law on the reals, as sorted `(value, mass)` pairs.
pub type RealLaw = Vec<(f64, f64)>;

fn real_law(values: impl IntoIterator<Item = (f64, f64)>) -> RealLaw {
    let mut acc: BTreeMap<u64, FixedSum> = BTreeMap::new();
    // Values here are nonnegative, and such doubles order like their bits.
    for (x, w) in values {
        acc.entry(round_sig12(x).max(0.0).to_bits()).or_default().add(w);
    }
    acc.into_iter().map(|(k, s)| (f64::from_bits(k), s.value())).collect()
}

/// Empirical laws of the first mark `v`, the first distance `w`, and the
/// ball mass `z_ε` of the first sampled point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampledFunctionals {
    pub samples: usize,
    pub eps: f64,
    pub v: Vec<(Mark, f64)>,
    pub w: RealLaw,
    pub z: RealLaw,
}

/// For a finite space the ball frequency of a sample anchored at point `i`
/// converges almost surely to `μ(B_ε(i) × I)`; that limit is used as `z_ε`.
pub fn sampled_functionals(
    space: &FiniteMmmSpace,
    n_samples: usize,
    eps: f64,
    seed: u64,
) -> Result<SampledFunctionals> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("at least one sample is needed".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("ball radius {eps} must be positive")));
    }
    let masses = ball_masses(space, eps);
    let mut rng = seeded_rng(seed);
    let share = 1.0 / n_samples as f64;
    let mut v: BTreeMap<Mark, FixedSum> = BTreeMap::new();
    let mut w = Vec::with_capacity(n_samples);
    let mut z = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let idx = draw_indices(space, 2, &mut rng)?;
        v.entry(space.mark(idx[0]).clone()).or_default().add(share);
        w.push((space.distance(idx[0], idx[1]), share));
        z.push((masses[idx[0]], share));
    }
    Ok(SampledFunctionals {
        samples: n_samples,
        eps,
        v: v.into_iter().map(|(m, s)| (m, s.value())).collect(),
        w: real_law(w),
        z: real_law(z),
    })
}

/// Exact law of `z_ε`: point `i` contributes its weight at its ball mass.
pub fn ball_mass_law(space: &FiniteMmmSpace, eps: f64) -> RealLaw {
    let masses = ball_masses(space, eps);
    real_law(masses.into_iter().zip(space.weights().iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn reference() -> FiniteMmmSpace {
        FiniteMmmSpace::new(
            Matrix::from_upper(2, &[1.0]).unwrap(),
            vec![Mark::Label(0), Mark::Label(1)],
            vec![0.5, 0.5],
            MarkSpace::discrete_range(2),
        )
        .unwrap()
    }

    #[test]
    fn modulus_examples() {
        let x = reference();
        assert_eq!(modulus_mass(&x, 0.5, 0.25).unwrap(), 0.0);
        assert_eq!(modulus_mass(&x, 0.5, 0.5).unwrap(), 1.0);
        let one = FiniteMmmSpace::point(Mark::Label(0), MarkSpace::discrete_range(1)).unwrap();
        assert_eq!(modulus_mass(&one, 3.0, 0.99).unwrap(), 0.0);
        assert!(modulus_mass(&x, 0.0, 0.5).is_err());
        assert!(modulus_mass(&x, 1.0, 1.5).is_err());
    }

    #[test]
    fn open_balls_exclude_the_boundary() {
        // At ε = 1 the other point sits exactly on the boundary.
        assert_eq!(ball_masses(&reference(), 1.0), vec![0.5, 0.5]);
        assert_eq!(ball_masses(&reference(), 1.0 + 1e-9), vec![1.0, 1.0]);
    }

    #[test]
    fn tails_on_reference() {
        let t = distance_tail(&reference(), &[0.5, 1.0]).unwrap();
        assert_eq!(t[0].mass, 0.5);
        assert_eq!(t[1].mass, 0.0);
        assert!(distance_tail(&reference(), &[1.0, 0.5]).is_err());
        let m = mark_tail(&reference(), &MarkTailGrid::default_for(reference().mark_space())).unwrap();
        assert_eq!(m.iter().map(|p| p.mass).collect::<Vec<_>>(), vec![0.5, 0.0]);
    }

    #[test]
    fn constant_marks_have_no_tail() {
        let s = reference()
            .with_marks(vec![Mark::Label(0); 2], MarkSpace::discrete_range(1))
            .unwrap();
        let m = mark_tail(&s, &MarkTailGrid::default_for(s.mark_space())).unwrap();
        assert_eq!(m[0].mass, 0.0);
    }

    #[test]
    fn euclidean_mark_tail() {
        let s = FiniteMmmSpace::uniform(
            Matrix::from_upper(2, &[1.0]).unwrap(),
            vec![Mark::Point(vec![0.5]), Mark::Point(vec![-3.0])],
            MarkSpace::euclidean(1),
        )
        .unwrap();
        let m = mark_tail(&s, &MarkTailGrid::Radii { radii: vec![1.0, 3.0] }).unwrap();
        assert_eq!((m[0].mass, m[1].mass), (0.5, 0.0));
    }

    #[test]
    fn sampled_functionals_on_reference() {
        let f = sampled_functionals(&reference(), 20_000, 0.5, 4).unwrap();
        assert_eq!(f.z, vec![(0.5, 1.0)]);
        for (_, p) in &f.v {
            assert!((p - 0.5).abs() < 0.02);
        }
        assert_eq!(f.w.len(), 2);
        assert!((f.w[0].1 - 0.5).abs() < 0.02);
        assert_eq!(ball_mass_law(&reference(), 0.5), vec![(0.5, 1.0)]);
    }
}
