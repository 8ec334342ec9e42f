//! Monotone growth laws, break-even concentrations and species ordering.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative bisection tolerance for break-even roots.
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;
/// Relative tolerance under which two break-even concentrations are packed together.
pub const DEFAULT_EQ_TOL: f64 = 1e-9;
/// The probe for a finite root stops at `DEFAULT_PROBE_FACTOR * S_in`.
pub const DEFAULT_PROBE_FACTOR: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrowthError {
    #[error("concentration must be non-negative, got {0}")]
    NegativeConcentration(f64),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("growth law is not increasing: mu({hi}) = {mu_hi} < mu({lo}) = {mu_lo}")]
    NotMonotone {
        lo: f64,
        hi: f64,
        mu_lo: f64,
        mu_hi: f64,
    },
}

/// A specific growth rate `mu(s)`, increasing in the substrate `s` with `mu(0) = 0`.
///
/// Tables are interpolated linearly between nodes, held at the first node's
/// rate below it, and extrapolated with the slope of the last segment
/// (clamped at zero) beyond the final node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GrowthFunction {
    Monod { mu_max: f64, k: f64 },
    Hill { mu_max: f64, k: f64, p: f64 },
    Table { points: Vec<(f64, f64)> },
}

impl GrowthFunction {
    pub fn monod(mu_max: f64, k: f64) -> Result<Self, GrowthError> {
        check_positive("mu_max", mu_max)?;
        check_positive("k", k)?;
        Ok(GrowthFunction::Monod { mu_max, k })
    }

    pub fn hill(mu_max: f64, k: f64, p: f64) -> Result<Self, GrowthError> {
        check_positive("mu_max", mu_max)?;
        check_positive("k", k)?;
        if !(p.is_finite() && p >= 1.0) {
            return Err(GrowthError::Parameter(format!(
                "hill exponent p must be >= 1, got {p}"
            )));
        }
        Ok(GrowthFunction::Hill { mu_max, k, p })
    }

    /// Builds a tabulated law. Nodes must have strictly increasing, non-negative
    /// abscissae and finite, non-negative rates; monotonicity of the rates and
    /// the presence of `(0, 0)` are left to [`validate_growth`].
    pub fn table(points: Vec<(f64, f64)>) -> Result<Self, GrowthError> {
        if points.len() < 2 {
            return Err(GrowthError::Parameter(
                "table needs at least two points".into(),
            ));
        }
        for (idx, &(s, mu)) in points.iter().enumerate() {
            if !(s.is_finite() && s >= 0.0 && mu.is_finite() && mu >= 0.0) {
                return Err(GrowthError::Parameter(format!(
                    "table point {idx} = ({s}, {mu}) must be finite and non-negative"
                )));
            }
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(GrowthError::Parameter(
                "table abscissae must be strictly increasing".into(),
            ));
        }
        Ok(GrowthFunction::Table { points })
    }

    /// Re-runs the constructor checks; used after deserialization.
    pub fn validated(self) -> Result<Self, GrowthError> {
        match self {
            GrowthFunction::Monod { mu_max, k } => Self::monod(mu_max, k),
            GrowthFunction::Hill { mu_max, k, p } => Self::hill(mu_max, k, p),
            GrowthFunction::Table { points } => Self::table(points),
        }
    }

    pub fn eval(&self, s: f64) -> Result<f64, GrowthError> {
        if s.is_nan() || s < 0.0 {
            return Err(GrowthError::NegativeConcentration(s));
        }
        Ok(self.rate(s))
    }

    /// Unchecked evaluation for the hot path; negative inputs are treated as zero.
    #[inline]
    pub fn rate(&self, s: f64) -> f64 {
        let s = if s > 0.0 { s } else { 0.0 };
        match *self {
            GrowthFunction::Monod { mu_max, k } => {
                if s.is_infinite() {
                    mu_max
                } else {
                    mu_max * s / (k + s)
                }
            }
            GrowthFunction::Hill { mu_max, k, p } => {
                if s.is_infinite() {
                    return mu_max;
                }
                // (s/k)^p / (1 + (s/k)^p), rearranged to stay finite for large s
                let q = (k / s).powf(p);
                if q.is_infinite() {
                    0.0
                } else {
                    mu_max / (1.0 + q)
                }
            }
            GrowthFunction::Table { ref points } => table_rate(points, s),
        }
    }

    /// Least upper bound of the rate over `[0, s_max]`, used to decide the
    /// infinite break-even sentinel for laws that are increasing.
    fn supremum_hint(&self) -> Option<f64> {
        match *self {
            GrowthFunction::Monod { mu_max, .. } | GrowthFunction::Hill { mu_max, .. } => {
                Some(mu_max)
            }
            GrowthFunction::Table { .. } => None,
        }
    }

    /// Natural abscissa scale of the law, the starting point of the bracket search.
    fn scale(&self) -> f64 {
        match *self {
            GrowthFunction::Monod { k, .. } | GrowthFunction::Hill { k, .. } => k,
            GrowthFunction::Table { ref points } => {
                points[points.len() - 1].0.max(f64::MIN_POSITIVE)
            }
        }
    }
}

impl fmt::Display for GrowthFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthFunction::Monod { mu_max, k } => write!(f, "monod(mu_max={mu_max}, k={k})"),
            GrowthFunction::Hill { mu_max, k, p } => {
                write!(f, "hill(mu_max={mu_max}, k={k}, p={p})")
            }
            GrowthFunction::Table { points } => write!(f, "table({} points)", points.len()),
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), GrowthError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(GrowthError::Parameter(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

fn table_rate(points: &[(f64, f64)], s: f64) -> f64 {
    let n = points.len();
    let (s0, mu0) = points[0];
    if s <= s0 {
        return mu0;
    }
    let idx = points.partition_point(|&(sx, _)| sx <= s);
    let (a, b) = if idx >= n {
        (points[n - 2], points[n - 1])
    } else {
        (points[idx - 1], points[idx])
    };
    let w = (s - a.0) / (b.0 - a.0);
    let v = a.1 + w * (b.1 - a.1);
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Break-even concentration `lambda` with `mu(lambda) = D`, or the infinite sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BreakEven {
    Finite(f64),
    Infinite,
}

impl BreakEven {
    pub fn value(self) -> f64 {
        match self {
            BreakEven::Finite(v) => v,
            BreakEven::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, BreakEven::Finite(_))
    }

    fn total_cmp(self, other: Self) -> Ordering {
        self.value().total_cmp(&other.value())
    }
}

impl fmt::Display for BreakEven {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BreakEven::Finite(v) => write!(f, "{v}"),
            BreakEven::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakEvenOptions {
    pub root_tol: f64,
    /// Absolute upper end of the probe for a finite root.
    pub s_probe_max: f64,
}

impl BreakEvenOptions {
    pub fn for_inflow(s_in: f64) -> Self {
        BreakEvenOptions {
            root_tol: DEFAULT_ROOT_TOL,
            s_probe_max: DEFAULT_PROBE_FACTOR * s_in,
        }
    }
}

/// Solves `mu(s) = D` by bracketing from the origin and bisecting.
pub fn break_even(
    g: &GrowthFunction,
    d: f64,
    opts: &BreakEvenOptions,
) -> Result<BreakEven, GrowthError> {
    if !(d.is_finite() && d > 0.0) {
        return Err(GrowthError::Parameter(format!(
            "removal rate D must be > 0, got {d}"
        )));
    }
    if !(opts.s_probe_max.is_finite() && opts.s_probe_max > 0.0) {
        return Err(GrowthError::Parameter(format!(
            "probe bound must be finite and > 0, got {}",
            opts.s_probe_max
        )));
    }
    if let Some(sup) = g.supremum_hint() {
        if sup <= d {
            return Ok(BreakEven::Infinite);
        }
    }

    // A piecewise-linear law is monotone iff its nodes are.
    if let GrowthFunction::Table { points } = g {
        for w in points.windows(2) {
            if w[1].1 < w[0].1 {
                return Err(GrowthError::NotMonotone {
                    lo: w[0].0,
                    hi: w[1].0,
                    mu_lo: w[0].1,
                    mu_hi: w[1].1,
                });
            }
        }
    }

    // Parametric laws are increasing by construction, tables were checked
    // above; comparing rates here would only trip on rounding noise.
    let mut lo = 0.0;
    let mut mu_lo = g.rate(0.0);
    let mut hi = g.scale().min(opts.s_probe_max);
    loop {
        let mu_hi = g.rate(hi);
        if mu_hi > d {
            break;
        }
        if hi >= opts.s_probe_max {
            return Ok(BreakEven::Infinite);
        }
        lo = hi;
        mu_lo = mu_hi;
        hi = (2.0 * hi).min(opts.s_probe_max);
    }
    if mu_lo >= d && lo > 0.0 {
        // mu reached D exactly at a bracket node
        return Ok(BreakEven::Finite(lo));
    }

    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let mu_mid = g.rate(mid);
        if mu_mid == d {
            return Ok(BreakEven::Finite(mid));
        }
        if mu_mid < d {
            lo = mid;
        } else {
            hi = mid;
        }
        // three orders below root_tol keeps mu(lambda (1 -/+ 10 root_tol)) on the right side of D
        if hi - lo <= opts.root_tol * hi * 1e-3 {
            break;
        }
    }
    let mu_lo_gap = d - g.rate(lo);
    let mu_hi_gap = g.rate(hi) - d;
    Ok(BreakEven::Finite(if mu_lo_gap <= mu_hi_gap {
        lo
    } else {
        hi
    }))
}

/// One entry of an [`OrderedSpecies`] list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedSpecies {
    pub id: String,
    /// Position in the caller's input list.
    pub original_index: usize,
    pub growth: GrowthFunction,
    pub lambda: BreakEven,
}

/// Species sorted by ascending break-even concentration, grouped into packs
/// of (numerically) equal break-even values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderedSpecies {
    pub d: f64,
    pub species: Vec<RankedSpecies>,
    /// Indices into `species`; contiguous, in ascending order.
    pub packs: Vec<Vec<usize>>,
}

impl OrderedSpecies {
    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    /// Break-even value shared by a pack (its first member's).
    pub fn pack_lambda(&self, pack: usize) -> BreakEven {
        self.species[self.packs[pack][0]].lambda
    }

    /// Permutation mapping sorted position to original index.
    pub fn permutation(&self) -> Vec<usize> {
        self.species.iter().map(|sp| sp.original_index).collect()
    }

    /// Original indices of the members of a pack.
    pub fn pack_members(&self, pack: usize) -> Vec<usize> {
        self.packs[pack]
            .iter()
            .map(|&k| self.species[k].original_index)
            .collect()
    }

    pub fn growths_of_pack(&self, pack: usize) -> impl Iterator<Item = &GrowthFunction> {
        self.packs[pack]
            .iter()
            .map(move |&k| &self.species[k].growth)
    }
}

pub fn order_species(
    species: &[(String, GrowthFunction)],
    d: f64,
    eq_tol: f64,
    opts: &BreakEvenOptions,
) -> Result<OrderedSpecies, GrowthError> {
    if species.is_empty() {
        return Err(GrowthError::Parameter(
            "at least one species is required".into(),
        ));
    }
    let mut ranked = species
        .iter()
        .enumerate()
        .map(|(idx, (id, g))| {
            Ok(RankedSpecies {
                id: id.clone(),
                original_index: idx,
                growth: g.clone(),
                lambda: break_even(g, d, opts)?,
            })
        })
        .collect::<Result<Vec<_>, GrowthError>>()?;
    // sort_by is stable, so equal values keep their input order
    ranked.sort_by(|a, b| a.lambda.total_cmp(b.lambda));

    let mut packs: Vec<Vec<usize>> = Vec::new();
    for (k, sp) in ranked.iter().enumerate() {
        let joins = packs.last().is_some_and(|pack| {
            let head = ranked[pack[0]].lambda;
            same_lambda(head, sp.lambda, eq_tol)
        });
        if joins {
            packs.last_mut().unwrap().push(k);
        } else {
            packs.push(vec![k]);
        }
    }
    Ok(OrderedSpecies {
        d,
        species: ranked,
        packs,
    })
}

fn same_lambda(a: BreakEven, b: BreakEven, eq_tol: f64) -> bool {
    match (a, b) {
        (BreakEven::Infinite, BreakEven::Infinite) => true,
        (BreakEven::Finite(x), BreakEven::Finite(y)) => {
            (x - y).abs() <= eq_tol * x.abs().max(y.abs())
        }
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum GrowthViolation {
    /// `mu(0)` differs from zero.
    NonzeroAtOrigin {
        mu0: f64,
    },
    /// A table whose first node is not `(0, 0)`.
    MissingOrigin {
        first: (f64, f64),
    },
    /// `mu` fails to increase on the grid segment `[lo, hi]`.
    NotIncreasing {
        lo: f64,
        hi: f64,
        mu_lo: f64,
        mu_hi: f64,
    },
    NonFinite {
        s: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthValidation {
    pub grid_points: usize,
    pub violations: Vec<GrowthViolation>,
}

impl GrowthValidation {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `mu(0) = 0` and strict increase on a uniform grid of `grid_n + 1` points over `[0, s_max]`.
///
/// Table nodes inside the range are added to the grid so that a decrease
/// between two nodes is never stepped over.
pub fn validate_growth(g: &GrowthFunction, s_max: f64, grid_n: usize) -> GrowthValidation {
    let grid_n = grid_n.max(2);
    let mut violations = Vec::new();
    let mut grid: Vec<f64> = (0..=grid_n)
        .map(|j| s_max * j as f64 / grid_n as f64)
        .collect();
    if let GrowthFunction::Table { points } = g {
        if points[0] != (0.0, 0.0) {
            violations.push(GrowthViolation::MissingOrigin { first: points[0] });
        }
        grid.extend(points.iter().map(|p| p.0).filter(|&s| s <= s_max));
        grid.sort_by(f64::total_cmp);
        grid.dedup();
    }

    let mu0 = g.rate(0.0);
    if mu0 != 0.0 {
        violations.push(GrowthViolation::NonzeroAtOrigin { mu0 });
    }
    let values: Vec<f64> = grid.iter().map(|&s| g.rate(s)).collect();
    for (s, v) in grid.iter().zip(&values) {
        if !v.is_finite() {
            violations.push(GrowthViolation::NonFinite { s: *s });
        }
    }
    for j in 0..grid.len() - 1 {
        if !(values[j] < values[j + 1]) {
            violations.push(GrowthViolation::NotIncreasing {
                lo: grid[j],
                hi: grid[j + 1],
                mu_lo: values[j],
                mu_hi: values[j + 1],
            });
        }
    }
    GrowthValidation {
        grid_points: grid.len(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> BreakEvenOptions {
        BreakEvenOptions::for_inflow(10.0)
    }

    fn monod_closed_form(mu_max: f64, k: f64, d: f64) -> f64 {
        k * d / (mu_max - d)
    }

    #[test]
    fn eval_examples() {
        let g = GrowthFunction::monod(1.0, 1.0).unwrap();
        assert_eq!(g.eval(0.0).unwrap(), 0.0);
        let g = GrowthFunction::monod(3.0, 1.0).unwrap();
        assert_eq!(g.eval(1.0).unwrap(), 1.5);
        let t = GrowthFunction::table(vec![(0.0, 0.0), (1.0, 0.5), (10.0, 0.9)]).unwrap();
        assert_eq!(t.eval(1.0).unwrap(), 0.5);
        assert!(matches!(
            g.eval(-1.0),
            Err(GrowthError::NegativeConcentration(_))
        ));
    }

    #[test]
    fn hill_is_finite_everywhere() {
        let g = GrowthFunction::hill(2.0, 1.5, 4.0).unwrap();
        assert_eq!(g.rate(0.0), 0.0);
        assert!((g.rate(1.5) - 1.0).abs() < 1e-15);
        assert_eq!(g.rate(1e300), 2.0);
        assert!(g.rate(1e-200) >= 0.0);
        assert!(GrowthFunction::hill(2.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn table_extrapolates_with_last_slope() {
        let t = GrowthFunction::table(vec![(0.0, 0.0), (1.0, 0.5), (2.0, 0.75)]).unwrap();
        assert_eq!(t.rate(3.0), 1.0);
        assert_eq!(t.rate(1.5), 0.625);
        let t = GrowthFunction::table(vec![(1.0, 0.5), (2.0, 1.0)]).unwrap();
        assert_eq!(t.rate(0.5), 0.5);
    }

    #[test]
    fn break_even_examples() {
        let g = GrowthFunction::monod(3.0, 1.0).unwrap();
        let lam = break_even(&g, 1.0, &opts()).unwrap().value();
        assert!((lam - 0.5).abs() < 1e-12);

        let id = GrowthFunction::table(vec![(0.0, 0.0), (1.0, 1.0)]).unwrap();
        let lam = break_even(&id, 0.5, &opts()).unwrap().value();
        assert!((lam - 0.5).abs() < 1e-12);

        let g = GrowthFunction::monod(1.0, 1.0).unwrap();
        assert_eq!(break_even(&g, 1.0, &opts()).unwrap(), BreakEven::Infinite);
    }

    #[test]
    fn break_even_one_sided_inequalities() {
        let cases = [
            GrowthFunction::monod(3.0, 1.0).unwrap(),
            GrowthFunction::hill(2.0, 0.7, 3.0).unwrap(),
            GrowthFunction::table(vec![(0.0, 0.0), (0.3, 0.8), (5.0, 1.6)]).unwrap(),
        ];
        for g in &cases {
            let lam = break_even(g, 1.0, &opts()).unwrap().value();
            let tol = DEFAULT_ROOT_TOL;
            assert!(
                (g.rate(lam) - 1.0).abs() <= tol,
                "{g}: mu(lam) = {}",
                g.rate(lam)
            );
            assert!(g.rate(lam * (1.0 - 10.0 * tol)) < 1.0);
            assert!(g.rate(lam * (1.0 + 10.0 * tol)) > 1.0);
        }
    }

    #[test]
    fn break_even_infinite_for_table_below_d_up_to_probe() {
        let flat = GrowthFunction::table(vec![(0.0, 0.0), (1.0, 0.5), (2.0, 0.5)]).unwrap();
        assert_eq!(
            break_even(&flat, 1.0, &opts()).unwrap(),
            BreakEven::Infinite
        );
        // a linear law crosses D beyond the probe bound
        let slow = GrowthFunction::table(vec![(0.0, 0.0), (1.0, 1e-9)]).unwrap();
        let o = BreakEvenOptions {
            root_tol: 1e-12,
            s_probe_max: 1e3,
        };
        assert_eq!(break_even(&slow, 1.0, &o).unwrap(), BreakEven::Infinite);
    }

    #[test]
    fn break_even_rejects_bad_rate_and_non_monotone() {
        let g = GrowthFunction::monod(3.0, 1.0).unwrap();
        assert!(matches!(
            break_even(&g, 0.0, &opts()),
            Err(GrowthError::Parameter(_))
        ));
        assert!(matches!(
            break_even(&g, -1.0, &opts()),
            Err(GrowthError::Parameter(_))
        ));
        let bumpy =
            GrowthFunction::table(vec![(0.0, 0.0), (1.0, 0.9), (2.0, 0.2), (8.0, 3.0)]).unwrap();
        assert!(matches!(
            break_even(&bumpy, 1.0, &opts()),
            Err(GrowthError::NotMonotone { .. })
        ));
    }

    #[test]
    fn order_monod_triple() {
        let sp = vec![
            ("a".to_string(), GrowthFunction::monod(3.0, 1.0).unwrap()),
            ("b".to_string(), GrowthFunction::monod(4.0, 2.0).unwrap()),
            ("c".to_string(), GrowthFunction::monod(5.0, 3.0).unwrap()),
        ];
        let ord = order_species(&sp, 1.0, DEFAULT_EQ_TOL, &opts()).unwrap();
        assert_eq!(ord.permutation(), vec![0, 1, 2]);
        assert_eq!(ord.packs, vec![vec![0], vec![1], vec![2]]);
        let expect = [
            monod_closed_form(3.0, 1.0, 1.0),
            monod_closed_form(4.0, 2.0, 1.0),
            monod_closed_form(5.0, 3.0, 1.0),
        ];
        for (sp, e) in ord.species.iter().zip(expect) {
            assert!((sp.lambda.value() - e).abs() < 1e-10);
        }
    }

    #[test]
    fn order_packs_identical_and_sorts_infinite_last() {
        let g = GrowthFunction::monod(3.0, 1.0).unwrap();
        let sp = vec![
            ("w".to_string(), GrowthFunction::monod(1.0, 1.0).unwrap()),
            ("x".to_string(), g.clone()),
            ("y".to_string(), g),
        ];
        let ord = order_species(&sp, 1.0, DEFAULT_EQ_TOL, &opts()).unwrap();
        assert_eq!(ord.permutation(), vec![1, 2, 0]);
        assert_eq!(ord.packs, vec![vec![0, 1], vec![2]]);
        assert!((ord.pack_lambda(0).value() - 0.5).abs() < 1e-12);
        assert_eq!(ord.pack_lambda(1), BreakEven::Infinite);
    }

    #[test]
    fn validate_examples() {
        let g = GrowthFunction::monod(1.0, 1.0).unwrap();
        assert!(validate_growth(&g, 10.0, 100).is_valid());

        let t = GrowthFunction::table(vec![(0.0, 0.0), (1.0, 0.5), (2.0, 0.4)]).unwrap();
        let v = validate_growth(&t, 2.0, 4);
        assert!(v.violations.iter().any(|x| matches!(
            x,
            GrowthViolation::NotIncreasing { lo, hi, .. } if *lo >= 1.0 && *hi <= 2.0
        )));

        let t = GrowthFunction::table(vec![(0.5, 0.2), (1.0, 0.5)]).unwrap();
        let v = validate_growth(&t, 1.0, 10);
        assert!(v
            .violations
            .contains(&GrowthViolation::MissingOrigin { first: (0.5, 0.2) }));
        assert!(v
            .violations
            .contains(&GrowthViolation::NonzeroAtOrigin { mu0: 0.2 }));
    }
}
