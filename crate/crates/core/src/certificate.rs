//! Constructive constants of the exclusion argument: widened intervals
//! `[s_i^-, s_i^+]` on which each species strictly dominates every later one,
//! the uniform separation margin `nu`, the rate bounds `gamma^-`, `gamma^+`,
//! the shifted removal rates `D^-`, `D^+`, and the nested absorbing intervals
//! `I_i = [s_1^-, s_i^+]`.
//!
//! All indices here are pack indices of an [`OrderedSpecies`]; only packs with
//! a finite break-even concentration take part.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::ChemostatParams;
use crate::growth::{BreakEven, OrderedSpecies};

pub const DEFAULT_GRID_N: usize = 2048;
/// `delta_min = DEFAULT_DELTA_MIN_FACTOR * lambda_1`.
pub const DEFAULT_DELTA_MIN_FACTOR: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertificateError {
    #[error("washout scenario: lambda_1 = {lambda1} is not below S_in = {s_in}")]
    Washout { lambda1: f64, s_in: f64 },
    #[error("pack {pack} needs a successor pack with finite break-even concentration")]
    MissingSuccessor { pack: usize },
    #[error(
        "growth graphs of pack {pack} and pack {competitor} touch on [lambda_{pack}, lambda_{next}] \
         (gap {gap:e} at s = {s}); the break-even ordering is contradicted",
        next = pack + 1
    )]
    GraphsTouch {
        pack: usize,
        competitor: usize,
        s: f64,
        gap: f64,
    },
    #[error("no positive separation gap for pack {pack} down to delta = {delta_min:e} (last gap {gap:e})")]
    MarginNotFound {
        pack: usize,
        delta_min: f64,
        gap: f64,
    },
    #[error("separation margin nu = {0:e} is not positive")]
    NonPositiveNu(f64),
    #[error("{which} = {value:e} is not positive (at pack {i}, competitor {j})")]
    NonPositiveGamma {
        which: &'static str,
        value: f64,
        i: usize,
        j: usize,
    },
    #[error("invalid margins: {0}")]
    InvalidMargins(String),
    #[error("certificate re-check failed: {0}")]
    Recheck(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateOptions {
    /// Grid intervals per scanned range (the grid has `grid_n + 1` points).
    pub grid_n: usize,
    pub delta_min_factor: f64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        CertificateOptions {
            grid_n: DEFAULT_GRID_N,
            delta_min_factor: DEFAULT_DELTA_MIN_FACTOR,
        }
    }
}

/// Widened interval `[lower, upper]` around `[lambda_i, lambda_{i+1}]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub lower: f64,
    pub upper: f64,
}

/// Minimum of `mu_a(s) - mu_b(s)` over a grid on `[lo, hi]`, `a` in pack `i`
/// and `b` in any later certified pack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapScan {
    pub gap: f64,
    pub at: f64,
    pub competitor: usize,
}

fn certified_packs(ordered: &OrderedSpecies) -> usize {
    (0..ordered.packs.len())
        .take_while(|&p| ordered.pack_lambda(p).is_finite())
        .count()
}

fn finite_lambda(ordered: &OrderedSpecies, pack: usize) -> f64 {
    match ordered.pack_lambda(pack) {
        BreakEven::Finite(v) => v,
        BreakEven::Infinite => f64::INFINITY,
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(1);
    (0..=n).map(move |k| {
        if k == n {
            hi
        } else {
            lo + (hi - lo) * k as f64 / n as f64
        }
    })
}

pub fn separation_gap(
    ordered: &OrderedSpecies,
    pack: usize,
    lo: f64,
    hi: f64,
    grid_n: usize,
) -> GapScan {
    let k = certified_packs(ordered);
    let mut best = GapScan {
        gap: f64::INFINITY,
        at: lo,
        competitor: pack + 1,
    };
    for s in grid(lo, hi, grid_n) {
        let top = ordered
            .growths_of_pack(pack)
            .map(|g| g.rate(s))
            .fold(f64::INFINITY, f64::min);
        for later in pack + 1..k {
            let rival = ordered
                .growths_of_pack(later)
                .map(|g| g.rate(s))
                .fold(f64::NEG_INFINITY, f64::max);
            let gap = top - rival;
            if gap < best.gap {
                best = GapScan {
                    gap,
                    at: s,
                    competitor: later,
                };
            }
        }
    }
    best
}

/// Finds `s_i^- < lambda_i` and `s_i^+ > lambda_{i+1}` with a positive
/// grid-checked domination gap.
///
/// Starts from `delta_0 = (lambda_{i+1} - lambda_i) / 2` (also capped by half the
/// next gap so that the resulting intervals stay nested) and halves `delta`
/// until the gap is positive. The lower extension never exceeds `lambda_i / 2`.
pub fn separation_margins(
    ordered: &OrderedSpecies,
    pack: usize,
    opts: &CertificateOptions,
) -> Result<Margin, CertificateError> {
    let k = certified_packs(ordered);
    if pack + 1 >= k {
        return Err(CertificateError::MissingSuccessor { pack });
    }
    let lam = finite_lambda(ordered, pack);
    let next = finite_lambda(ordered, pack + 1);
    if !(lam > 0.0) {
        return Err(CertificateError::InvalidMargins(format!(
            "lambda of pack {pack} must be positive, got {lam}"
        )));
    }
    let mut delta = 0.5 * (next - lam);
    if pack + 2 < k {
        delta = delta.min(0.5 * (finite_lambda(ordered, pack + 2) - next));
    }
    let delta_min = opts.delta_min_factor * finite_lambda(ordered, 0);

    let mut last_gap = f64::NEG_INFINITY;
    while delta >= delta_min {
        let lower = lam - delta.min(0.5 * lam);
        let upper = next + delta;
        let scan = separation_gap(ordered, pack, lower, upper, opts.grid_n);
        if scan.gap > 0.0 {
            return Ok(Margin { lower, upper });
        }
        last_gap = scan.gap;
        delta *= 0.5;
    }

    let core = separation_gap(ordered, pack, lam, next, opts.grid_n);
    if core.gap <= 0.0 {
        return Err(CertificateError::GraphsTouch {
            pack,
            competitor: core.competitor,
            s: core.at,
            gap: core.gap,
        });
    }
    Err(CertificateError::MarginNotFound {
        pack,
        delta_min,
        gap: last_gap,
    })
}

/// Half of the smallest domination gap over all widened intervals.
pub fn compute_nu(
    ordered: &OrderedSpecies,
    margins: &[Margin],
    grid_n: usize,
) -> Result<f64, CertificateError> {
    if margins.is_empty() {
        return Err(CertificateError::InvalidMargins(
            "nu needs at least one pair of packs".into(),
        ));
    }
    let min_gap = margins
        .iter()
        .enumerate()
        .map(|(i, m)| separation_gap(ordered, i, m.lower, m.upper, grid_n).gap)
        .fold(f64::INFINITY, f64::min);
    let nu = 0.5 * min_gap;
    if nu > 0.0 {
        Ok(nu)
    } else {
        Err(CertificateError::NonPositiveNu(nu))
    }
}

/// `gamma^- = D - mu_1(s_1^-)` and
/// `gamma^+ = min_{2<=i<=n} min_{j<i} mu_j(s_{i-1}^+) - D`.
///
/// Packs enter through their least favourable member: the largest rate in
/// the first pack for `gamma^-`, the smallest rate of each pack for `gamma^+`.
pub fn gamma_bounds(
    ordered: &OrderedSpecies,
    margins: &[Margin],
) -> Result<(f64, f64), CertificateError> {
    let Some(first) = margins.first() else {
        return Err(CertificateError::InvalidMargins(
            "gamma bounds need at least one margin".into(),
        ));
    };
    let d = ordered.d;
    let top_rate = ordered
        .growths_of_pack(0)
        .map(|g| g.rate(first.lower))
        .fold(f64::NEG_INFINITY, f64::max);
    let gamma_minus = d - top_rate;
    if !(gamma_minus > 0.0) {
        return Err(CertificateError::NonPositiveGamma {
            which: "gamma_minus",
            value: gamma_minus,
            i: 0,
            j: 0,
        });
    }

    let mut gamma_plus = f64::INFINITY;
    let mut worst = (0, 0);
    for i in 1..=margins.len() {
        let s_plus = margins[i - 1].upper;
        for j in 0..i {
            let low = ordered
                .growths_of_pack(j)
                .map(|g| g.rate(s_plus))
                .fold(f64::INFINITY, f64::min);
            if low - d < gamma_plus {
                gamma_plus = low - d;
                worst = (i, j);
            }
        }
    }
    if !(gamma_plus > 0.0) {
        return Err(CertificateError::NonPositiveGamma {
            which: "gamma_plus",
            value: gamma_plus,
            i: worst.0,
            j: worst.1,
        });
    }
    Ok((gamma_minus, gamma_plus))
}

/// `D^- = D - gamma^-/2`, `D^+ = D + gamma^+/2`.
pub fn dilution_bounds(
    gamma_minus: f64,
    gamma_plus: f64,
    d: f64,
) -> Result<(f64, f64), CertificateError> {
    for (which, value) in [("gamma_minus", gamma_minus), ("gamma_plus", gamma_plus)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(CertificateError::NonPositiveGamma {
                which,
                value,
                i: 0,
                j: 0,
            });
        }
    }
    let d_minus = d - 0.5 * gamma_minus;
    if !(d_minus > 0.0) {
        return Err(CertificateError::InvalidMargins(format!(
            "D^- = {d_minus} must stay positive"
        )));
    }
    Ok((d_minus, d + 0.5 * gamma_plus))
}

/// Constants that exist only when at least two certified packs are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofBounds {
    pub s_minus: Vec<f64>,
    pub s_plus: Vec<f64>,
    pub nu: f64,
    pub gamma_minus: f64,
    pub gamma_plus: f64,
    pub d_minus: f64,
    pub d_plus: f64,
    /// `I_i = [s_1^-, s_i^+]` for `i = 1..n-1`.
    pub intervals: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub d: f64,
    pub s_in: f64,
    /// Break-even concentration of each certified pack, ascending.
    pub lambdas: Vec<f64>,
    /// Species ids of each certified pack.
    pub packs: Vec<Vec<String>>,
    /// Ids of species left out because their break-even concentration is infinite.
    pub excluded: Vec<String>,
    pub grid_n: usize,
    /// `None` for a degenerate certificate (a single certified pack).
    pub bounds: Option<ProofBounds>,
    pub notes: Vec<String>,
}

pub fn build_certificate(
    ordered: &OrderedSpecies,
    params: &ChemostatParams,
    opts: &CertificateOptions,
) -> Result<Certificate, CertificateError> {
    let lambda1 = ordered.pack_lambda(0).value();
    if !(lambda1 < params.s_in) {
        return Err(CertificateError::Washout {
            lambda1,
            s_in: params.s_in,
        });
    }
    let k = certified_packs(ordered);
    let ids = |p: usize| -> Vec<String> {
        ordered.packs[p]
            .iter()
            .map(|&i| ordered.species[i].id.clone())
            .collect()
    };
    let mut notes = Vec::new();
    let excluded: Vec<String> = (k..ordered.packs.len()).flat_map(ids).collect();
    if !excluded.is_empty() {
        notes.push(format!(
            "species with infinite break-even concentration excluded: {}",
            excluded.join(",")
        ));
    }
    if let Some(p) = ordered.packs[..k].iter().position(|pk| pk.len() > 1) {
        notes.push(format!(
            "pack {} groups {} species with equal break-even concentration",
            p + 1,
            ordered.packs[p].len()
        ));
    }

    let mut cert = Certificate {
        d: params.d,
        s_in: params.s_in,
        lambdas: (0..k).map(|p| finite_lambda(ordered, p)).collect(),
        packs: (0..k).map(ids).collect(),
        excluded,
        grid_n: opts.grid_n,
        bounds: None,
        notes,
    };
    if k < 2 {
        cert.notes
            .push("single certified pack: no competitor, interval list empty".into());
        return Ok(cert);
    }

    let margins = (0..k - 1)
        .map(|i| separation_margins(ordered, i, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let nu = compute_nu(ordered, &margins, opts.grid_n)?;
    let (gamma_minus, gamma_plus) = gamma_bounds(ordered, &margins)?;
    let (d_minus, d_plus) = dilution_bounds(gamma_minus, gamma_plus, params.d)?;
    let s_minus: Vec<f64> = margins.iter().map(|m| m.lower).collect();
    let s_plus: Vec<f64> = margins.iter().map(|m| m.upper).collect();
    let intervals = s_plus.iter().map(|&hi| (s_minus[0], hi)).collect();
    cert.bounds = Some(ProofBounds {
        s_minus,
        s_plus,
        nu,
        gamma_minus,
        gamma_plus,
        d_minus,
        d_plus,
        intervals,
    });

    let violations = cert.recheck(ordered, opts.grid_n);
    if let Some(first) = violations.first() {
        return Err(CertificateError::Recheck(format!(
            "{} ({} violations)",
            first,
            violations.len()
        )));
    }
    Ok(cert)
}

impl Certificate {
    pub fn is_degenerate(&self) -> bool {
        self.bounds.is_none()
    }

    /// Re-verifies every certificate inequality on a grid of `grid_n + 1`
    /// points per interval and returns a description of each failure.
    pub fn recheck(&self, ordered: &OrderedSpecies, grid_n: usize) -> Vec<String> {
        let mut out = Vec::new();
        let Some(b) = &self.bounds else {
            return out;
        };
        let k = self.lambdas.len();
        if b.s_minus.len() != k - 1 || b.s_plus.len() != k - 1 || b.intervals.len() != k - 1 {
            out.push(format!("expected {} margins", k - 1));
            return out;
        }
        let d = self.d;
        for i in 0..k - 1 {
            let (lo, hi) = (b.s_minus[i], b.s_plus[i]);
            if !(lo > 0.0 && lo < self.lambdas[i]) {
                out.push(format!("s_{}^- = {lo} not in (0, lambda_{})", i + 1, i + 1));
            }
            if !(hi > self.lambdas[i + 1]) {
                out.push(format!("s_{}^+ = {hi} not above lambda_{}", i + 1, i + 2));
            }
            for s in grid(lo, hi, grid_n) {
                for a in ordered.growths_of_pack(i) {
                    for later in i + 1..k {
                        for c in ordered.growths_of_pack(later) {
                            let (ma, mc) = (a.rate(s), c.rate(s));
                            if !(ma > mc + b.nu) {
                                out.push(format!(
                                    "mu_{}({s}) = {ma} not above mu_{}({s}) + nu = {}",
                                    i + 1,
                                    later + 1,
                                    mc + b.nu
                                ));
                            }
                        }
                    }
                }
            }
            // mu_j(s_i^+) > D for every pack up to i + 1
            for j in 0..=i + 1 {
                for g in ordered.growths_of_pack(j) {
                    if !(g.rate(hi) > d) {
                        out.push(format!(
                            "mu_{}(s_{}^+) = {} not above D",
                            j + 1,
                            i + 1,
                            g.rate(hi)
                        ));
                    }
                }
            }
            if b.intervals[i] != (b.s_minus[0], hi) {
                out.push(format!("I_{} != [s_1^-, s_{}^+]", i + 1, i + 1));
            }
            if i > 0 && b.s_plus[i] < b.s_plus[i - 1] {
                out.push(format!("I_{} not contained in I_{}", i, i + 1));
            }
        }
        if !(b.nu > 0.0) {
            out.push(format!("nu = {} not positive", b.nu));
        }
        let margins: Vec<Margin> = b
            .s_minus
            .iter()
            .zip(&b.s_plus)
            .map(|(&lower, &upper)| Margin { lower, upper })
            .collect();
        match gamma_bounds(ordered, &margins) {
            Ok((gm, gp)) => {
                if (gm - b.gamma_minus).abs() > 1e-12 * d {
                    out.push(format!(
                        "gamma^- = {} differs from D - mu_1(s_1^-) = {gm}",
                        b.gamma_minus
                    ));
                }
                if (gp - b.gamma_plus).abs() > 1e-12 * d {
                    out.push(format!(
                        "gamma^+ = {} differs from recomputed {gp}",
                        b.gamma_plus
                    ));
                }
            }
            Err(e) => out.push(e.to_string()),
        }
        if !(b.gamma_minus > 0.0 && b.gamma_plus > 0.0) {
            out.push("gamma bounds not positive".into());
        }
        if (b.d_minus - (d - 0.5 * b.gamma_minus)).abs() > 1e-12 * d
            || (b.d_plus - (d + 0.5 * b.gamma_plus)).abs() > 1e-12 * d
        {
            out.push(format!(
                "D^- = {}, D^+ = {} inconsistent with gamma bounds",
                b.d_minus, b.d_plus
            ));
        }
        if !(0.0 < b.d_minus && b.d_minus < d && d < b.d_plus) {
            out.push(format!(
                "0 < D^- < D < D^+ fails: {} {} {}",
                b.d_minus, d, b.d_plus
            ));
        }
        out
    }

    /// Plain `key: value` report, one item per line.
    pub fn to_text(&self) -> String {
        let mut t = String::new();
        let _ = writeln!(t, "D: {}", self.d);
        let _ = writeln!(t, "S_in: {}", self.s_in);
        for (i, (lam, ids)) in self.lambdas.iter().zip(&self.packs).enumerate() {
            let _ = writeln!(t, "lambda_{}: {}  [{}]", i + 1, lam, ids.join(","));
        }
        if !self.excluded.is_empty() {
            let _ = writeln!(t, "excluded: {}", self.excluded.join(","));
        }
        let _ = writeln!(t, "grid_n: {}", self.grid_n);
        match &self.bounds {
            None => {
                let _ = writeln!(t, "degenerate: true");
            }
            Some(b) => {
                for (i, (lo, hi)) in b.s_minus.iter().zip(&b.s_plus).enumerate() {
                    let _ = writeln!(t, "s_{}^-: {}", i + 1, lo);
                    let _ = writeln!(t, "s_{}^+: {}", i + 1, hi);
                }
                let _ = writeln!(t, "nu: {}", b.nu);
                let _ = writeln!(t, "gamma^-: {}", b.gamma_minus);
                let _ = writeln!(t, "gamma^+: {}", b.gamma_plus);
                let _ = writeln!(t, "D^-: {}", b.d_minus);
                let _ = writeln!(t, "D^+: {}", b.d_plus);
                for (i, (lo, hi)) in b.intervals.iter().enumerate() {
                    let _ = writeln!(t, "I_{}: [{}, {}]", i + 1, lo, hi);
                }
            }
        }
        for note in &self.notes {
            let _ = writeln!(t, "note: {note}");
        }
        t
    }
}

/// Replacement values for certificate constants, applied after construction.
/// Used to inject deliberately wrong constants into a verification run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateOverride {
    pub nu: Option<f64>,
    pub gamma_minus: Option<f64>,
    pub gamma_plus: Option<f64>,
    pub d_minus: Option<f64>,
    pub d_plus: Option<f64>,
    pub s_minus: Option<Vec<f64>>,
    pub s_plus: Option<Vec<f64>>,
}

impl CertificateOverride {
    pub fn is_empty(&self) -> bool {
        *self == CertificateOverride::default()
    }

    /// Applies the overrides; intervals are rebuilt from the (possibly new) margins.
    pub fn apply(&self, cert: &mut Certificate) {
        let Some(b) = cert.bounds.as_mut() else {
            return;
        };
        if let Some(v) = self.nu {
            b.nu = v;
        }
        if let Some(v) = self.gamma_minus {
            b.gamma_minus = v;
        }
        if let Some(v) = self.gamma_plus {
            b.gamma_plus = v;
        }
        if let Some(v) = self.d_minus {
            b.d_minus = v;
        }
        if let Some(v) = self.d_plus {
            b.d_plus = v;
        }
        if let Some(v) = &self.s_minus {
            b.s_minus = v.clone();
        }
        if let Some(v) = &self.s_plus {
            b.s_plus = v.clone();
        }
        if let Some(&lo) = b.s_minus.first() {
            b.intervals = b.s_plus.iter().map(|&hi| (lo, hi)).collect();
        }
        cert.notes
            .push("constants overridden after construction".into());
    }
}
