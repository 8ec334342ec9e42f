//! Adaptive Dormand-Prince 5(4) integration of the chemostat with
//! continuous output, plus persistent interval-entry detection on the result.

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{Chemostat, DerivedChannels, DynamicsError, State};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("invalid integration setting: {0}")]
    Setting(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("step size underflow at t = {t} (h = {h:e}); state {state:?}")]
    Stiffness { t: f64, h: f64, state: Vec<f64> },
    #[error("non-finite state at t = {t}: {state:?}")]
    Divergence { t: f64, state: Vec<f64> },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("time {t} outside the trajectory range [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorSettings {
    pub horizon: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub dense_dt: f64,
    pub max_steps: usize,
}

impl IntegratorSettings {
    /// Settings with `dense_dt = horizon / 2000`.
    pub fn new(horizon: f64, rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorSettings {
            horizon,
            rel_tol,
            abs_tol,
            dense_dt: horizon / 2000.0,
            max_steps: 5_000_000,
        }
    }

    fn validate(&self) -> Result<(), IntegrateError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(IntegrateError::Setting(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(IntegrateError::Setting(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        if !(self.dense_dt > 0.0 && self.dense_dt <= self.horizon) {
            return Err(IntegrateError::Setting(format!(
                "dense_dt must lie in (0, horizon], got {}",
                self.dense_dt
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejections: usize,
    pub rhs_evaluations: usize,
    /// Most negative component value removed by clipping (0 when none).
    pub max_undershoot: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

/// Continuous extension of one accepted step.
#[derive(Debug, Clone, PartialEq)]
struct Segment {
    t0: f64,
    h: f64,
    /// Five coefficient blocks of length `dim`, flattened.
    coeffs: Vec<f64>,
}

impl Segment {
    fn eval(&self, t: f64, dim: usize, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let c = &self.coeffs;
        for i in 0..dim {
            out[i] = c[i]
                + th * (c[dim + i]
                    + th1 * (c[2 * dim + i] + th * (c[3 * dim + i] + th1 * c[4 * dim + i])));
        }
    }
}

/// Dense solution samples with derived channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub channels: Vec<DerivedChannels>,
    pub stats: IntegratorStats,
    pub horizon: f64,
    pub dense_dt: f64,
    segments: Vec<Segment>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_species(&self) -> usize {
        self.states[0].dim()
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory is never empty")
    }

    /// Substrate values at the dense samples.
    pub fn substrate(&self) -> Vec<f64> {
        self.states.iter().map(|st| st.s).collect()
    }
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// PI step control
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], s: &IntegratorSettings) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = s.abs_tol + s.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

fn initial_step(model: &Chemostat, y0: &[f64], f0: &[f64], s: &IntegratorSettings) -> f64 {
    let dim = y0.len();
    let scale = |i: usize| s.abs_tol + s.rel_tol * y0[i].abs();
    let d0 = ((0..dim).map(|i| (y0[i] / scale(i)).powi(2)).sum::<f64>() / dim as f64).sqrt();
    let d1 = ((0..dim).map(|i| (f0[i] / scale(i)).powi(2)).sum::<f64>() / dim as f64).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(s.horizon);
    let y1: Vec<f64> = (0..dim).map(|i| y0[i] + h0 * f0[i]).collect();
    let mut f1 = vec![0.0; dim];
    model.rhs_into(&y1, &mut f1);
    let d2 = ((0..dim)
        .map(|i| ((f1[i] - f0[i]) / scale(i)).powi(2))
        .sum::<f64>()
        / dim as f64)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(s.horizon)
}

fn clip(y: &mut [f64]) -> f64 {
    let mut worst = 0.0f64;
    for v in y.iter_mut() {
        if *v < 0.0 {
            worst = worst.min(*v);
            *v = 0.0;
        }
    }
    worst
}

/// Integrates the model from `x0` over `[0, horizon]`.
///
/// Samples are taken every `dense_dt` (plus the horizon itself) from the
/// method's continuous extension. Negative components left by a step are
/// clipped to zero; the largest such undershoot is recorded in the stats.
pub fn simulate(
    model: &Chemostat,
    x0: &State,
    settings: &IntegratorSettings,
) -> Result<Trajectory, IntegrateError> {
    settings.validate()?;
    if x0.dim() != model.n_species() {
        return Err(DynamicsError::Dimension(format!(
            "initial state has {} species, model has {}",
            x0.dim(),
            model.n_species()
        ))
        .into());
    }
    x0.check_orthant()?;

    let dim = x0.dim() + 1;
    let horizon = settings.horizon;
    let ratios = x0.x.first().is_some_and(|&x1| x1 > 0.0);
    let sample_times = sample_grid(horizon, settings.dense_dt);

    let mut stats = IntegratorStats {
        rel_tol: settings.rel_tol,
        abs_tol: settings.abs_tol,
        ..Default::default()
    };
    let mut times = Vec::with_capacity(sample_times.len());
    let mut states = Vec::with_capacity(sample_times.len());
    times.push(0.0);
    states.push(x0.clone());
    let mut next_sample = 1;

    let mut y = x0.to_vec();
    let mut k1 = vec![0.0; dim];
    model.rhs_into(&y, &mut k1);
    stats.rhs_evaluations += 1;
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
    );
    let mut ys = vec![0.0; dim];
    let mut y1 = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    let mut segments = Vec::new();

    let mut t = 0.0;
    let mut h = initial_step(model, &y, &k1, settings);
    stats.rhs_evaluations += 1;
    let mut fac_old = 1e-4f64;
    let mut last_rejected = false;

    while t < horizon {
        if stats.steps + stats.rejections >= settings.max_steps {
            return Err(IntegrateError::TooManySteps(settings.max_steps));
        }
        let last = t + 1.01 * h >= horizon;
        if last {
            h = horizon - t;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(IntegrateError::Stiffness {
                t,
                h,
                state: y.clone(),
            });
        }

        for i in 0..dim {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        model.rhs_into(&ys, &mut k2);
        for i in 0..dim {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        model.rhs_into(&ys, &mut k3);
        for i in 0..dim {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        model.rhs_into(&ys, &mut k4);
        for i in 0..dim {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        model.rhs_into(&ys, &mut k5);
        for i in 0..dim {
            ys[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        model.rhs_into(&ys, &mut k6);
        for i in 0..dim {
            y1[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        model.rhs_into(&y1, &mut k7);
        stats.rhs_evaluations += 6;
        for i in 0..dim {
            err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        if y1.iter().any(|v| !v.is_finite()) {
            if !last_rejected && h > 1e-10 {
                // retry once with a much smaller step before giving up
                h *= 0.1;
                stats.rejections += 1;
                last_rejected = true;
                continue;
            }
            return Err(IntegrateError::Divergence {
                t: t + h,
                state: y1.clone(),
            });
        }

        let e = error_norm(&err, &y, &y1, settings);
        let fac11 = e.powf(EXPO);
        if e <= 1.0 {
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            fac_old = e.max(1e-4);
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;

            let mut coeffs = vec![0.0; 5 * dim];
            for i in 0..dim {
                let ydiff = y1[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                coeffs[i] = y[i];
                coeffs[dim + i] = ydiff;
                coeffs[2 * dim + i] = bspl;
                coeffs[3 * dim + i] = ydiff - h * k7[i] - bspl;
                coeffs[4 * dim + i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let seg = Segment { t0: t, h, coeffs };
            let t_new = if last { horizon } else { t + h };
            stats.steps += 1;

            let undershoot = clip(&mut y1);
            stats.max_undershoot = stats.max_undershoot.min(undershoot);
            if undershoot < 0.0 {
                model.rhs_into(&y1, &mut k1);
                stats.rhs_evaluations += 1;
            } else {
                std::mem::swap(&mut k1, &mut k7);
            }

            while next_sample < sample_times.len() && sample_times[next_sample] <= t_new {
                let ts = sample_times[next_sample];
                if ts == t_new {
                    buf.copy_from_slice(&y1);
                } else {
                    seg.eval(ts, dim, &mut buf);
                    let u = clip(&mut buf);
                    stats.max_undershoot = stats.max_undershoot.min(u);
                }
                times.push(ts);
                states.push(State::from_slice(&buf));
                next_sample += 1;
            }
            segments.push(seg);
            std::mem::swap(&mut y, &mut y1);
            t = t_new;
            h = h_new;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_rejected = true;
            stats.rejections += 1;
        }
    }

    let channels = states
        .iter()
        .map(|st| DerivedChannels::of(st, ratios))
        .collect();
    Ok(Trajectory {
        times,
        states,
        channels,
        stats,
        horizon,
        dense_dt: settings.dense_dt,
        segments,
    })
}

/// `0, dt, 2 dt, ...` up to the horizon, which is always the final sample.
fn sample_grid(horizon: f64, dt: f64) -> Vec<f64> {
    let n = (horizon / dt).ceil() as usize;
    let mut out: Vec<f64> = (0..=n)
        .map(|k| k as f64 * dt)
        .filter(|&t| t < horizon)
        .collect();
    // the last multiple may land a rounding error away from the horizon
    if let Some(&tail) = out.last() {
        if horizon - tail < 1e-9 * dt {
            out.pop();
        }
    }
    out.push(horizon);
    out
}

/// State at an arbitrary time, from the continuous extension of the step containing it.
pub fn sample(traj: &Trajectory, t: f64) -> Result<State, IntegrateError> {
    if !(t >= 0.0 && t <= traj.horizon) {
        return Err(IntegrateError::OutOfRange {
            t,
            horizon: traj.horizon,
        });
    }
    if let Ok(k) = traj.times.binary_search_by(|x| x.total_cmp(&t)) {
        return Ok(traj.states[k].clone());
    }
    let dim = traj.n_species() + 1;
    let idx = traj
        .segments
        .partition_point(|seg| seg.t0 + seg.h < t)
        .min(traj.segments.len() - 1);
    let mut out = vec![0.0; dim];
    traj.segments[idx].eval(t, dim, &mut out);
    clip(&mut out);
    Ok(State::from_slice(&out))
}

/// When (and whether) the substrate settles inside an interval for good.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntryRecord {
    pub interval: (f64, f64),
    /// Start of the final stay inside the interval, if it lasts to the horizon.
    pub entry_time: Option<f64>,
    /// True when the substrate stays inside from `entry_time` up to the horizon.
    pub persistent: bool,
    /// Exits from the interval before the persistent entry.
    pub excursions: usize,
}

/// Finds the infimum of times after which `s` stays inside `[lo, hi]` up to
/// the horizon. Membership is scanned on the dense samples and the last
/// crossing is refined by bisection on the continuous extension. Stays
/// outside lasting no longer than `grace` are ignored.
pub fn first_persistent_entry(traj: &Trajectory, interval: (f64, f64), grace: f64) -> EntryRecord {
    let (lo, hi) = interval;
    let inside = |s: f64| s >= lo && s <= hi;
    let member: Vec<bool> = traj.states.iter().map(|st| inside(st.s)).collect();
    let n = member.len();

    let absent = EntryRecord {
        interval,
        entry_time: None,
        persistent: false,
        excursions: member.windows(2).filter(|w| w[0] && !w[1]).count(),
    };
    if !member[n - 1] {
        return absent;
    }

    // Walk back over the final inside-run, swallowing short outside runs.
    let mut start = n - 1;
    loop {
        while start > 0 && member[start - 1] {
            start -= 1;
        }
        if start == 0 {
            break;
        }
        let mut out_begin = start - 1;
        while out_begin > 0 && !member[out_begin - 1] {
            out_begin -= 1;
        }
        let span = traj.times[start] - traj.times[out_begin];
        if grace > 0.0 && span <= grace && out_begin > 0 {
            start = out_begin - 1;
            continue;
        }
        break;
    }

    let entry = if start == 0 {
        0.0
    } else {
        // refine between the last outside sample and the first inside one
        let (mut a, mut b) = (traj.times[start - 1], traj.times[start]);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            match sample(traj, mid) {
                Ok(st) if inside(st.s) => b = mid,
                _ => a = mid,
            }
        }
        b
    };
    let excursions = if start == 0 {
        0
    } else {
        member[..start].windows(2).filter(|w| w[0] && !w[1]).count()
    };
    EntryRecord {
        interval,
        entry_time: Some(entry),
        persistent: true,
        excursions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{mass_closed_form, ChemostatParams};
    use crate::growth::GrowthFunction;

    fn single() -> Chemostat {
        Chemostat::new(
            ChemostatParams::new(1.0, 10.0).unwrap(),
            vec![GrowthFunction::monod(3.0, 1.0).unwrap()],
        )
    }

    #[test]
    fn single_species_reaches_equilibrium() {
        let traj = simulate(
            &single(),
            &State::new(10.0, vec![0.1]),
            &IntegratorSettings::new(60.0, 1e-8, 1e-10),
        )
        .unwrap();
        let last = traj.last();
        assert!((last.s - 0.5).abs() < 1e-6, "{last:?}");
        assert!((last.x[0] - 9.5).abs() < 1e-6);
        assert_eq!(traj.len(), 2001);
        assert_eq!(*traj.times.last().unwrap(), 60.0);
    }

    #[test]
    fn no_biomass_follows_linear_washout() {
        let model = single();
        let x0 = State::new(2.0, vec![0.0]);
        let settings = IntegratorSettings::new(10.0, 1e-8, 1e-10);
        let traj = simulate(&model, &x0, &settings).unwrap();
        for (t, st) in traj.times.iter().zip(&traj.states) {
            assert_eq!(st.x[0], 0.0);
            let exact = mass_closed_form(2.0, &model.params, *t);
            assert!((st.s - exact).abs() < 10.0 * 1e-8 * 10.0, "t = {t}");
        }
        // between samples
        for t in [0.0123, 1.37, 4.4444, 9.999] {
            let st = sample(&traj, t).unwrap();
            let exact = mass_closed_form(2.0, &model.params, t);
            assert!((st.s - exact).abs() <= 10.0 * 1e-8 * exact, "t = {t}");
        }
    }

    #[test]
    fn sample_nodes_and_range() {
        let traj = simulate(
            &single(),
            &State::new(10.0, vec![0.1]),
            &IntegratorSettings::new(5.0, 1e-8, 1e-10),
        )
        .unwrap();
        assert_eq!(sample(&traj, 0.0).unwrap(), State::new(10.0, vec![0.1]));
        assert_eq!(sample(&traj, traj.times[17]).unwrap(), traj.states[17]);
        assert!(matches!(
            sample(&traj, 5.5),
            Err(IntegrateError::OutOfRange { .. })
        ));
        assert!(matches!(
            sample(&traj, -0.1),
            Err(IntegrateError::OutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_bad_settings() {
        let bad = IntegratorSettings::new(-1.0, 1e-8, 1e-10);
        assert!(matches!(
            simulate(&single(), &State::new(1.0, vec![0.1]), &bad),
            Err(IntegrateError::Setting(_))
        ));
        let bad = IntegratorSettings::new(1.0, 2.0, 1e-10);
        assert!(simulate(&single(), &State::new(1.0, vec![0.1]), &bad).is_err());
        let ok = IntegratorSettings::new(1.0, 1e-6, 1e-8);
        assert!(matches!(
            simulate(&single(), &State::new(1.0, vec![-0.1]), &ok),
            Err(IntegrateError::Dynamics(_))
        ));
    }

    #[test]
    fn entry_detection() {
        let traj = simulate(
            &single(),
            &State::new(10.0, vec![0.1]),
            &IntegratorSettings::new(40.0, 1e-8, 1e-10),
        )
        .unwrap();
        // always inside
        let rec = first_persistent_entry(&traj, (0.0, 20.0), 0.0);
        assert_eq!(rec.entry_time, Some(0.0));
        assert!(rec.persistent && rec.excursions == 0);
        // disjoint
        let rec = first_persistent_entry(&traj, (20.0, 30.0), 0.0);
        assert_eq!(rec.entry_time, None);
        assert!(!rec.persistent);
        // a neighbourhood of the equilibrium is entered at a finite time
        let rec = first_persistent_entry(&traj, (0.4, 0.6), 0.0);
        let t_in = rec.entry_time.unwrap();
        assert!(t_in > 0.0 && t_in < 40.0);
        let st = sample(&traj, t_in).unwrap();
        assert!(st.s >= 0.4 && st.s <= 0.6);
        let before = sample(&traj, t_in - 1e-6).unwrap();
        assert!(before.s < 0.4 || before.s > 0.6);
    }

    #[test]
    fn sample_grid_includes_horizon() {
        let g = sample_grid(80.0, 0.04);
        assert_eq!(g.len(), 2001);
        assert_eq!(*g.last().unwrap(), 80.0);
        let g = sample_grid(1.0, 0.3);
        assert_eq!(g, vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
    }
}
