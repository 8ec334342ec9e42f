//! Finite-horizon checks of the exclusion argument on a simulated trajectory.
//!
//! Limits ("tends to zero", "for any future time") are tested through explicit
//! proxies: a horizon, thresholds, and persistence up to the horizon. Every
//! [`ClaimResult`] records the proxies it used next to what it measured.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::certificate::{build_certificate, Certificate, CertificateError};
use crate::dynamics::{predicted_limit_for, Chemostat, ChemostatParams, LimitPrediction};
use crate::growth::{order_species, GrowthError, OrderedSpecies};
use crate::integrate::{first_persistent_entry, sample, simulate, IntegrateError, Trajectory};
use crate::scenario::Scenario;

/// Ratios below this are left out of log-linear fits.
pub const RATIO_FLOOR: f64 = 1e-300;

/// The substrate frame must be in place from this fraction of the horizon on.
///
/// `s' = b (D z - mu_bar)` exactly, so once `D z` lies in `[D^-, D^+]` the
/// bounds on `s'` follow sample by sample; the finite-time part is what can fail.
pub const FRAME_DEADLINE_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimResult {
    pub id: String,
    pub status: ClaimStatus,
    pub measured: BTreeMap<String, f64>,
    pub thresholds: BTreeMap<String, f64>,
    pub note: String,
}

impl ClaimResult {
    fn new(id: impl Into<String>) -> Self {
        ClaimResult {
            id: id.into(),
            status: ClaimStatus::NotApplicable,
            measured: BTreeMap::new(),
            thresholds: BTreeMap::new(),
            note: String::new(),
        }
    }

    fn not_applicable(id: impl Into<String>, note: impl Into<String>) -> Self {
        ClaimResult {
            note: note.into(),
            ..ClaimResult::new(id)
        }
    }

    fn measure(mut self, key: &str, v: f64) -> Self {
        self.measured.insert(key.into(), v);
        self
    }

    fn threshold(mut self, key: &str, v: f64) -> Self {
        self.thresholds.insert(key.into(), v);
        self
    }

    fn decide(mut self, pass: bool) -> Self {
        self.status = if pass {
            ClaimStatus::Pass
        } else {
            ClaimStatus::Fail
        };
        self
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.status == ClaimStatus::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == ClaimStatus::Fail
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Total mass tends to `S_in`.
///
/// The closed form predicts the time `t_eps = ln(|m(0) - S_in| / eps) / D`
/// after which `|m - S_in| <= eps`; the claim passes when every sample after
/// the predicted time is within `eps` (up to integration noise) and the
/// empirical crossing lies within 5% of the prediction.
pub fn check_mass_convergence(
    traj: &Trajectory,
    params: &ChemostatParams,
    eps: f64,
) -> ClaimResult {
    let s_in = params.s_in;
    let dev = |k: usize| (traj.channels[k].m - s_in).abs();
    let dev0 = dev(0);
    let t_pred = if dev0 <= eps {
        0.0
    } else {
        (dev0 / eps).ln() / params.d
    };
    let noise = 100.0 * traj.stats.rel_tol * (1.0 + s_in);

    let n = traj.len();
    let last_out = (0..n).rev().find(|&k| dev(k) > eps);
    let t_emp = match last_out {
        None => Some(0.0),
        Some(k) if k + 1 == n => None,
        Some(k) => {
            let (mut a, mut b) = (traj.times[k], traj.times[k + 1]);
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let st = sample(traj, mid).expect("inside range");
                if (st.mass() - s_in).abs() > eps {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            Some(b)
        }
    };
    let late_violations = (0..n)
        .filter(|&k| traj.times[k] >= t_pred && dev(k) > eps + noise)
        .count();
    let allowance = 0.05 * t_pred + 1e-9 * traj.horizon;

    let mut res = ClaimResult::new("mass.convergence")
        .measure("t_eps_predicted", t_pred)
        .measure("late_violations", late_violations as f64)
        .measure("final_deviation", dev(n - 1))
        .threshold("eps", eps)
        .threshold("relative_time_tolerance", 0.05)
        .threshold("noise_allowance", noise);
    let pass = match t_emp {
        None => {
            res = res.with_note("mass never settles within eps before the horizon");
            false
        }
        Some(te) => {
            res = res.measure("t_eps_empirical", te);
            t_pred <= traj.horizon && late_violations == 0 && (te - t_pred).abs() <= allowance
        }
    };
    res.decide(pass)
}

/// Species with break-even concentration at or above `S_in` die out.
pub fn check_washout_species(
    traj: &Trajectory,
    ordered: &OrderedSpecies,
    s_in: f64,
    eps: f64,
) -> ClaimResult {
    let doomed: Vec<_> = ordered
        .species
        .iter()
        .filter(|sp| sp.lambda.value() >= s_in)
        .collect();
    let id = "washout.species";
    if doomed.is_empty() {
        return ClaimResult::not_applicable(id, "no species with break-even concentration >= S_in");
    }
    let n = traj.len();
    let tail_start = n - (n / 10).max(2).min(n);
    let slack = traj.stats.abs_tol;
    let mut res = ClaimResult::new(id)
        .threshold("eps", eps)
        .threshold("monotone_slack", slack);
    let mut pass = true;
    for sp in doomed {
        let j = sp.original_index;
        let last = traj.last().x[j];
        let decreasing = traj.states[tail_start..]
            .windows(2)
            .all(|w| w[1].x[j] <= w[0].x[j] + slack);
        res = res.measure(&format!("final_x[{}]", sp.id), last).measure(
            &format!("tail_decreasing[{}]", sp.id),
            f64::from(u8::from(decreasing)),
        );
        pass &= last < eps && decreasing;
    }
    res.decide(pass)
}

/// Total biomass stays above a positive floor once some viable species is present.
pub fn check_biomass_floor(
    traj: &Trajectory,
    ordered: &OrderedSpecies,
    s_in: f64,
    eps_floor: f64,
) -> ClaimResult {
    let id = "biomass.floor";
    let x0 = &traj.states[0];
    let viable = ordered
        .species
        .iter()
        .any(|sp| sp.lambda.value() < s_in && x0.x[sp.original_index] > 0.0);
    if !viable {
        return ClaimResult::not_applicable(id, "no initially present species with lambda < S_in");
    }
    let t_burn = 0.1 * traj.horizon;
    let floor = traj
        .times
        .iter()
        .zip(&traj.channels)
        .filter(|(t, _)| **t >= t_burn)
        .map(|(_, c)| c.b)
        .fold(f64::INFINITY, f64::min);
    ClaimResult::new(id)
        .measure("floor", floor)
        .threshold("eps_floor", eps_floor)
        .threshold("t_burn", t_burn)
        .decide(floor >= eps_floor)
}

fn winner_present(traj: &Trajectory, ordered: &OrderedSpecies) -> bool {
    ordered
        .pack_members(0)
        .iter()
        .any(|&o| traj.states[0].x[o] > 0.0)
}

/// `s' = b (D z - mu_bar)` lies between `Phi^- = (D^- - mu_bar) b` and
/// `Phi^+ = (D^+ - mu_bar) b` from the time `D z` settles inside `[D^-, D^+]`,
/// where `z = (S_in - s) / b`. The frame time must not exceed
/// [`FRAME_DEADLINE_FRACTION`] of the horizon.
pub fn check_substrate_frame(
    traj: &Trajectory,
    model: &Chemostat,
    ordered: &OrderedSpecies,
    cert: &Certificate,
    t_from: f64,
) -> ClaimResult {
    let id = "frame.substrate";
    let Some(bounds) = &cert.bounds else {
        return ClaimResult::not_applicable(id, "degenerate certificate (no D^-, D^+)");
    };
    if !winner_present(traj, ordered) {
        return ClaimResult::not_applicable(id, "species with minimal break-even absent initially");
    }
    let ChemostatParams { d, s_in } = model.params;
    let dz = |k: usize| {
        let b = traj.channels[k].b;
        if b > 0.0 {
            d * (s_in - traj.states[k].s) / b
        } else {
            f64::NAN
        }
    };
    let in_frame = |v: f64| v >= bounds.d_minus && v <= bounds.d_plus;
    let n = traj.len();
    let first = traj.times.partition_point(|&t| t < t_from);
    let deadline = FRAME_DEADLINE_FRACTION * traj.horizon;
    let mut res = ClaimResult::new(id)
        .threshold("D_minus", bounds.d_minus)
        .threshold("D_plus", bounds.d_plus)
        .threshold("t_from", t_from)
        .threshold("t_frame_max", deadline);
    if first >= n || !in_frame(dz(n - 1)) {
        let tail: Vec<f64> = (first.min(n - 1)..n)
            .map(dz)
            .filter(|v| v.is_finite())
            .collect();
        let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return res
            .measure("dz_min", lo)
            .measure("dz_max", hi)
            .with_note("D z never settles inside [D^-, D^+] before the horizon")
            .decide(false);
    }
    let mut start = n - 1;
    while start > first && in_frame(dz(start - 1)) {
        start -= 1;
    }
    let t_frame = traj.times[start];

    let slack = 100.0 * traj.stats.rel_tol * (d * s_in).max(1.0);
    let mut dy = vec![0.0; n_dim(traj)];
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let (mut dz_lo, mut dz_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in start..n {
        let st = &traj.states[k];
        let ch = &traj.channels[k];
        let Some(p) = &ch.p else {
            violations += 1;
            continue;
        };
        model.rhs_into(&st.to_vec(), &mut dy);
        let s_dot = dy[0];
        let mu_bar = model.mean_rate(st.s, p);
        let phi_minus = (bounds.d_minus - mu_bar) * ch.b;
        let phi_plus = (bounds.d_plus - mu_bar) * ch.b;
        let excess = (phi_minus - slack - s_dot).max(s_dot - phi_plus - slack);
        worst = worst.max(excess);
        if excess > 0.0 {
            violations += 1;
        }
        let v = dz(k);
        dz_lo = dz_lo.min(v);
        dz_hi = dz_hi.max(v);
    }
    res = res
        .measure("t_frame", t_frame)
        .measure("samples_checked", (n - start) as f64)
        .measure("violations", violations as f64)
        .measure("worst_excess", worst)
        .measure("dz_min", dz_lo)
        .measure("dz_max", dz_hi)
        .threshold("slack", slack);
    if t_frame > deadline {
        res = res.with_note("frame established too late");
    }
    res.decide(violations == 0 && t_frame <= deadline)
}

fn n_dim(traj: &Trajectory) -> usize {
    traj.n_species() + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InductionOptions {
    pub eps_p: f64,
    pub persistence_grace: f64,
    /// Fraction of `nu` by which a fitted slope may exceed `-nu`.
    pub slope_slack: f64,
}

/// Entry of the substrate into each absorbing interval and exponential decay
/// of the ratios of the later packs to the winning pack.
///
/// For `i = n-1` down to `1`: the substrate must settle in `I_i` at a finite
/// time `T_i`, and for every later pack `j > i` the least-squares slope of
/// `ln(x_j / x_1)` over `[T_i, horizon]` must not exceed `-nu (1 - slope_slack)`
/// while its final proportion stays below `eps_p`. Packs are summed.
/// Entry times must satisfy `T_1 >= T_2 >= ... >= T_{n-1}`.
pub fn check_induction_properties(
    traj: &Trajectory,
    ordered: &OrderedSpecies,
    cert: &Certificate,
    opts: &InductionOptions,
) -> Vec<ClaimResult> {
    let Some(bounds) = &cert.bounds else {
        return vec![ClaimResult::not_applicable(
            "interval.induction",
            "degenerate certificate: a single certified pack",
        )];
    };
    if !winner_present(traj, ordered) {
        return vec![ClaimResult::not_applicable(
            "interval.induction",
            "species with minimal break-even absent initially",
        )];
    }
    let k = cert.lambdas.len();
    let members: Vec<Vec<usize>> = (0..k).map(|p| ordered.pack_members(p)).collect();
    let pack_sum =
        |p: usize, idx: usize| -> f64 { members[p].iter().map(|&o| traj.states[idx].x[o]).sum() };
    let nu = bounds.nu;
    let slope_max = -nu + opts.slope_slack * nu;

    let mut out = Vec::new();
    let mut entries = vec![None; k - 1];
    for i in (0..k - 1).rev() {
        let rec = first_persistent_entry(traj, bounds.intervals[i], opts.persistence_grace);
        entries[i] = rec.entry_time;
        let mut entry = ClaimResult::new(format!("interval.I{}.entry", i + 1))
            .threshold("interval_lo", rec.interval.0)
            .threshold("interval_hi", rec.interval.1)
            .threshold("persistence_grace", opts.persistence_grace)
            .measure("excursions", rec.excursions as f64);
        if let Some(t) = rec.entry_time {
            entry = entry
                .measure("entry_time", t)
                .with_note("persistent up to horizon");
        } else {
            entry = entry.with_note("substrate does not settle in the interval before the horizon");
        }
        out.push(entry.decide(rec.persistent));

        for j in i + 1..k {
            let id = format!("interval.I{}.decay[{}]", i + 1, cert.packs[j].join("+"));
            let mut res = ClaimResult::new(id)
                .threshold("nu", nu)
                .threshold("max_slope", slope_max)
                .threshold("eps_p", opts.eps_p);
            let p_final = {
                let last = traj.len() - 1;
                let b = traj.channels[last].b;
                if b > 0.0 {
                    pack_sum(j, last) / b
                } else {
                    f64::NAN
                }
            };
            res = res.measure("p_final", p_final);
            let Some(t_i) = rec.entry_time else {
                out.push(res.with_note("no entry time").decide(false));
                continue;
            };
            let (mut ts, mut ls) = (Vec::new(), Vec::new());
            for idx in 0..traj.len() {
                if traj.times[idx] < t_i {
                    continue;
                }
                let r = pack_sum(j, idx) / pack_sum(0, idx);
                if r.is_finite() && r > RATIO_FLOOR {
                    ts.push(traj.times[idx]);
                    ls.push(r.ln());
                }
            }
            match fit_slope(&ts, &ls) {
                Some(slope) if ts.len() >= 3 => {
                    res = res
                        .measure("slope", slope)
                        .measure("fit_points", ts.len() as f64);
                    out.push(res.decide(slope <= slope_max && p_final < opts.eps_p));
                }
                _ => out.push(
                    res.with_note("too few positive ratio samples after entry")
                        .decide(false),
                ),
            }
        }
    }

    let mut order = ClaimResult::new("interval.entry_order");
    for (i, t) in entries.iter().enumerate() {
        order = order.measure(&format!("T{}", i + 1), t.unwrap_or(f64::NAN));
    }
    let ordered_times = entries.iter().all(Option::is_some)
        && entries.windows(2).all(|w| w[0].unwrap() >= w[1].unwrap());
    out.push(order.decide(ordered_times));
    out
}

/// Within a pack of identical growth laws, member ratios stay constant.
pub fn check_pack_ratios(
    traj: &Trajectory,
    ordered: &OrderedSpecies,
    tol: f64,
) -> Vec<ClaimResult> {
    let mut out = Vec::new();
    for (p, pack) in ordered.packs.iter().enumerate() {
        if pack.len() < 2 {
            continue;
        }
        let lead = &ordered.species[pack[0]];
        let id = format!(
            "packing.ratio[{}]",
            pack.iter()
                .map(|&k| ordered.species[k].id.as_str())
                .collect::<Vec<_>>()
                .join("+")
        );
        if pack
            .iter()
            .any(|&k| ordered.species[k].growth != lead.growth)
        {
            out.push(ClaimResult::not_applicable(
                id,
                "pack members have different growth laws",
            ));
            continue;
        }
        let a = lead.original_index;
        let x0 = &traj.states[0].x;
        let mut res = ClaimResult::new(id).threshold("relative_tol", tol);
        let mut worst = 0.0f64;
        let mut checked = false;
        for &k in &pack[1..] {
            let b = ordered.species[k].original_index;
            if x0[a] <= 0.0 || x0[b] <= 0.0 {
                continue;
            }
            checked = true;
            let r0 = x0[b] / x0[a];
            for st in &traj.states {
                if st.x[a] > RATIO_FLOOR && st.x[b] > RATIO_FLOOR {
                    worst = worst.max((st.x[b] / st.x[a] / r0 - 1.0).abs());
                }
            }
        }
        if !checked {
            out.push(ClaimResult::not_applicable(
                res.id,
                format!("pack {} has fewer than two present members", p + 1),
            ));
            continue;
        }
        res = res.measure("max_relative_drift", worst);
        out.push(res.decide(worst <= tol));
    }
    out
}

/// The final state is within `eps` of the predicted limit.
pub fn check_final_convergence(
    traj: &Trajectory,
    predicted: &LimitPrediction,
    eps: f64,
) -> ClaimResult {
    let last = traj.last();
    let s_err = (last.s - predicted.s).abs();
    let winner_sum: f64 = predicted.winners.iter().map(|&w| last.x[w]).sum();
    let b_err = (winner_sum - predicted.winner_biomass).abs();
    let others = (0..last.dim())
        .filter(|j| !predicted.winners.contains(j))
        .map(|j| last.x[j])
        .fold(0.0f64, f64::max);
    let id = if predicted.is_washout() {
        "limit.washout"
    } else {
        "limit.winner"
    };
    ClaimResult::new(id)
        .measure("s_error", s_err)
        .measure("winner_biomass_error", b_err)
        .measure("max_other_density", others)
        .threshold("eps", eps)
        .threshold("predicted_s", predicted.s)
        .threshold("predicted_winner_biomass", predicted.winner_biomass)
        .decide(s_err <= eps && b_err <= eps && others <= eps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CertificateSummary {
    Certified { certificate: Box<Certificate> },
    Refused { reason: String },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub scenario_digest: String,
    pub scenario_name: Option<String>,
    pub certificate: CertificateSummary,
    pub integrator: crate::integrate::IntegratorStats,
    pub claims: Vec<ClaimResult>,
    pub overall_pass: bool,
}

impl VerificationReport {
    pub fn claim(&self, id: &str) -> Option<&ClaimResult> {
        self.claims.iter().find(|c| c.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut t = String::new();
        let _ = writeln!(
            t,
            "scenario: {}",
            self.scenario_name.as_deref().unwrap_or("-")
        );
        let _ = writeln!(t, "digest:   {}", self.scenario_digest);
        match &self.certificate {
            CertificateSummary::Certified { certificate } => match &certificate.bounds {
                Some(b) => {
                    let _ = writeln!(
                        t,
                        "certificate: nu={:.6e} gamma-={:.6e} gamma+={:.6e} D-={:.6} D+={:.6}",
                        b.nu, b.gamma_minus, b.gamma_plus, b.d_minus, b.d_plus
                    );
                }
                None => {
                    let _ = writeln!(t, "certificate: degenerate (single pack)");
                }
            },
            CertificateSummary::Refused { reason } => {
                let _ = writeln!(t, "certificate: refused ({reason})");
            }
            CertificateSummary::Failed { reason } => {
                let _ = writeln!(t, "certificate: FAILED ({reason})");
            }
        }
        let width = self
            .claims
            .iter()
            .map(|c| c.id.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let _ = writeln!(t, "{:<width$}  {:<6}  measured", "claim", "status");
        for c in &self.claims {
            let status = match c.status {
                ClaimStatus::Pass => "pass",
                ClaimStatus::Fail => "FAIL",
                ClaimStatus::NotApplicable => "n/a",
            };
            let measured: Vec<String> = c
                .measured
                .iter()
                .map(|(k, v)| format!("{k}={v:.6e}"))
                .collect();
            let _ = write!(t, "{:<width$}  {:<6}  {}", c.id, status, measured.join(" "));
            if !c.note.is_empty() {
                let _ = write!(t, "  ({})", c.note);
            }
            t.push('\n');
        }
        let _ = writeln!(
            t,
            "overall: {}",
            if self.overall_pass { "PASS" } else { "FAIL" }
        );
        t
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Growth(#[from] GrowthError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// Simulates the scenario once and evaluates every applicable claim.
pub fn run_report(scenario: &Scenario) -> Result<VerificationReport, ReportError> {
    let model = scenario.model();
    let params = scenario.params;
    let tol = &scenario.tolerances;
    let ordered = order_species(
        &scenario.named_growths(),
        params.d,
        scenario.certificate.eq_tol,
        &scenario.break_even_options(),
    )?;
    let traj = simulate(&model, &scenario.initial, &scenario.integrator_settings())?;

    let mut claims = vec![
        check_mass_convergence(&traj, &params, tol.eps_mass),
        check_washout_species(&traj, &ordered, params.s_in, tol.eps_washout),
        check_biomass_floor(&traj, &ordered, params.s_in, tol.eps_floor),
    ];

    let certificate = match build_certificate(&ordered, &params, &scenario.certificate_options()) {
        Ok(mut cert) => {
            if let Some(ov) = &scenario.certificate_override {
                ov.apply(&mut cert);
            }
            let finer = 10 * scenario.certificate.grid_n;
            let violations = cert.recheck(&ordered, finer);
            let mut recheck = ClaimResult::new("certificate.recheck")
                .measure("violations", violations.len() as f64)
                .threshold("grid_n", finer as f64);
            if let Some(first) = violations.first() {
                recheck = recheck.with_note(first.clone());
            }
            claims.push(recheck.decide(violations.is_empty()));
            claims.push(check_substrate_frame(&traj, &model, &ordered, &cert, 0.0));
            claims.extend(check_induction_properties(
                &traj,
                &ordered,
                &cert,
                &InductionOptions {
                    eps_p: tol.eps_p,
                    persistence_grace: tol.persistence_grace,
                    slope_slack: tol.slope_slack,
                },
            ));
            CertificateSummary::Certified {
                certificate: Box::new(cert),
            }
        }
        Err(e @ CertificateError::Washout { .. }) => CertificateSummary::Refused {
            reason: e.to_string(),
        },
        Err(e) => {
            claims.push(
                ClaimResult::new("certificate.build")
                    .with_note(e.to_string())
                    .decide(false),
            );
            CertificateSummary::Failed {
                reason: e.to_string(),
            }
        }
    };
    claims.extend(check_pack_ratios(&traj, &ordered, tol.pack_ratio_tol));
    let prediction = predicted_limit_for(&params, &ordered, Some(&scenario.initial));
    claims.push(check_final_convergence(&traj, &prediction, tol.eps_final));

    let overall_pass = claims.iter().all(|c| !c.failed());
    Ok(VerificationReport {
        scenario_digest: scenario.digest(),
        scenario_name: scenario.name.clone(),
        certificate,
        integrator: traj.stats,
        claims,
        overall_pass,
    })
}
