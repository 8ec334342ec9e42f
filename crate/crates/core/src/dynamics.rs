//! Chemostat vector fields in the original `(s, x)` chart and the
//! `(s, b, p)` chart of total biomass and proportions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::growth::{BreakEven, GrowthFunction, OrderedSpecies};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("state component {component} is negative ({value})")]
    NegativeComponent { component: String, value: f64 },
    #[error("chart undefined: {0}")]
    Chart(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Operating parameters: removal rate `D` and inflow concentration `S_in`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChemostatParams {
    pub d: f64,
    pub s_in: f64,
}

impl ChemostatParams {
    pub fn new(d: f64, s_in: f64) -> Result<Self, DynamicsError> {
        if !(d.is_finite() && d > 0.0) {
            return Err(DynamicsError::Parameter(format!("D must be > 0, got {d}")));
        }
        if !(s_in.is_finite() && s_in > 0.0) {
            return Err(DynamicsError::Parameter(format!(
                "S_in must be > 0, got {s_in}"
            )));
        }
        Ok(ChemostatParams { d, s_in })
    }
}

/// Substrate and species densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub s: f64,
    pub x: Vec<f64>,
}

impl State {
    pub fn new(s: f64, x: Vec<f64>) -> Self {
        State { s, x }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn biomass(&self) -> f64 {
        self.x.iter().sum()
    }

    pub fn mass(&self) -> f64 {
        self.s + self.biomass()
    }

    pub fn check_orthant(&self) -> Result<(), DynamicsError> {
        if !(self.s >= 0.0) {
            return Err(DynamicsError::NegativeComponent {
                component: "s".into(),
                value: self.s,
            });
        }
        for (i, &v) in self.x.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(DynamicsError::NegativeComponent {
                    component: format!("x{}", i + 1),
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Packs the state as `[s, x1, .., xn]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.x.len() + 1);
        y.push(self.s);
        y.extend_from_slice(&self.x);
        y
    }

    pub fn from_slice(y: &[f64]) -> Self {
        State {
            s: y[0],
            x: y[1..].to_vec(),
        }
    }
}

/// Substrate, total biomass `b` and proportion vector `p` (summing to one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedState {
    pub s: f64,
    pub b: f64,
    pub p: Vec<f64>,
}

/// Total mass `m = s + b` and ratios `r_i = x_i / x_1` for `i >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedChannels {
    pub b: f64,
    /// `None` where the biomass is too small to divide by.
    pub p: Option<Vec<f64>>,
    pub m: f64,
    /// `None` when `x_1` vanishes (or vanished initially).
    pub r: Option<Vec<f64>>,
}

/// Biomass below which proportions are reported as undefined.
pub const BIOMASS_FLOOR: f64 = 1e-12;

impl DerivedChannels {
    pub fn of(state: &State, ratios_enabled: bool) -> Self {
        let b = state.biomass();
        let p = (b >= BIOMASS_FLOOR).then(|| state.x.iter().map(|&xi| xi / b).collect());
        let r = (ratios_enabled && state.x.first().is_some_and(|&x1| x1 > 0.0))
            .then(|| state.x[1..].iter().map(|&xi| xi / state.x[0]).collect());
        DerivedChannels {
            b,
            p,
            m: state.s + b,
            r,
        }
    }
}

/// The model: parameters plus one growth law per species.
#[derive(Debug, Clone, PartialEq)]
pub struct Chemostat {
    pub params: ChemostatParams,
    pub growths: Vec<GrowthFunction>,
}

impl Chemostat {
    pub fn new(params: ChemostatParams, growths: Vec<GrowthFunction>) -> Self {
        Chemostat { params, growths }
    }

    pub fn n_species(&self) -> usize {
        self.growths.len()
    }

    /// Right-hand side on packed `[s, x..]`, written into `dy`.
    ///
    /// Negative substrate values (possible inside Runge-Kutta stages) are
    /// evaluated as zero by the growth laws.
    pub fn rhs_into(&self, y: &[f64], dy: &mut [f64]) {
        let ChemostatParams { d, s_in } = self.params;
        let s = y[0];
        let mut uptake = 0.0;
        for (i, g) in self.growths.iter().enumerate() {
            let mu = g.rate(s);
            let xi = y[i + 1];
            uptake += mu * xi;
            dy[i + 1] = (mu - d) * xi;
        }
        dy[0] = d * (s_in - s) - uptake;
    }

    /// `mu_bar(s, p) = sum_i p_i mu_i(s)`.
    pub fn mean_rate(&self, s: f64, p: &[f64]) -> f64 {
        self.growths
            .iter()
            .zip(p)
            .map(|(g, &pi)| pi * g.rate(s))
            .sum()
    }

    fn check_dim(&self, n: usize) -> Result<(), DynamicsError> {
        if n != self.growths.len() {
            return Err(DynamicsError::Dimension(format!(
                "state has {n} species, model has {}",
                self.growths.len()
            )));
        }
        Ok(())
    }
}

/// `s' = D(S_in - s) - sum mu_i(s) x_i`, `x_i' = (mu_i(s) - D) x_i` with unit yields.
pub fn rhs_original(model: &Chemostat, state: &State) -> Result<State, DynamicsError> {
    model.check_dim(state.dim())?;
    state.check_orthant()?;
    let y = state.to_vec();
    let mut dy = vec![0.0; y.len()];
    model.rhs_into(&y, &mut dy);
    Ok(State::from_slice(&dy))
}

/// The same field in `(s, b, p)` coordinates.
pub fn rhs_transformed(
    model: &Chemostat,
    ts: &TransformedState,
) -> Result<TransformedState, DynamicsError> {
    model.check_dim(ts.p.len())?;
    if !(ts.b > 0.0) {
        return Err(DynamicsError::Chart(format!(
            "total biomass must be > 0, got {}",
            ts.b
        )));
    }
    let ChemostatParams { d, s_in } = model.params;
    let rates: Vec<f64> = model.growths.iter().map(|g| g.rate(ts.s)).collect();
    let mu_bar: f64 = rates.iter().zip(&ts.p).map(|(m, p)| m * p).sum();
    Ok(TransformedState {
        s: d * (s_in - ts.s) - mu_bar * ts.b,
        b: (mu_bar - d) * ts.b,
        p: ts
            .p
            .iter()
            .zip(&rates)
            .map(|(&pi, &mu)| pi * (mu - mu_bar))
            .collect(),
    })
}

pub fn to_transformed(state: &State) -> Result<TransformedState, DynamicsError> {
    let b = state.biomass();
    if !(b > 0.0) {
        return Err(DynamicsError::Chart(format!(
            "total biomass must be > 0, got {b}"
        )));
    }
    Ok(TransformedState {
        s: state.s,
        b,
        p: state.x.iter().map(|&xi| xi / b).collect(),
    })
}

pub fn from_transformed(ts: &TransformedState) -> Result<State, DynamicsError> {
    if !(ts.b > 0.0) {
        return Err(DynamicsError::Chart(format!(
            "total biomass must be > 0, got {}",
            ts.b
        )));
    }
    let total: f64 = ts.p.iter().sum();
    if (total - 1.0).abs() > 1e-12 || ts.p.iter().any(|&p| p < 0.0) {
        return Err(DynamicsError::Chart(format!(
            "proportions must be non-negative and sum to 1, sum = {total}"
        )));
    }
    Ok(State {
        s: ts.s,
        x: ts.p.iter().map(|&pi| pi * ts.b).collect(),
    })
}

/// Solution of `m' = D(S_in - m)` from `m(0) = m0`.
pub fn mass_closed_form(m0: f64, params: &ChemostatParams, t: f64) -> f64 {
    params.s_in + (m0 - params.s_in) * (-params.d * t).exp()
}

/// Limit point of the dynamics: substrate level and the biomass held by the
/// winning pack. The split of that biomass among the pack's members is not
/// determined by the dynamics and is not predicted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitPrediction {
    pub s: f64,
    /// Original indices of the species sharing the limiting biomass; empty on washout.
    pub winners: Vec<usize>,
    pub winner_biomass: f64,
    pub n_species: usize,
}

impl LimitPrediction {
    pub fn is_washout(&self) -> bool {
        self.winners.is_empty()
    }

    /// Full state when the limit is unique (washout or a single winner).
    pub fn as_state(&self) -> Option<State> {
        let mut x = vec![0.0; self.n_species];
        match self.winners.as_slice() {
            [] => {}
            [w] => x[*w] = self.winner_biomass,
            _ => return None,
        }
        Some(State { s: self.s, x })
    }
}

/// Predicted limit assuming every species is present initially.
pub fn predicted_limit(params: &ChemostatParams, ordered: &OrderedSpecies) -> LimitPrediction {
    predicted_limit_for(params, ordered, None)
}

/// Predicted limit restricted to species with positive initial density.
///
/// The minimal-break-even pack among present species wins when its
/// break-even concentration lies below `S_in`; otherwise all biomass washes out.
pub fn predicted_limit_for(
    params: &ChemostatParams,
    ordered: &OrderedSpecies,
    initial: Option<&State>,
) -> LimitPrediction {
    let present = |orig: usize| initial.is_none_or(|st| st.x[orig] > 0.0);
    let n_species = ordered.len();
    for pack in 0..ordered.packs.len() {
        let members: Vec<usize> = ordered
            .pack_members(pack)
            .into_iter()
            .filter(|&o| present(o))
            .collect();
        if members.is_empty() {
            continue;
        }
        return match ordered.pack_lambda(pack) {
            BreakEven::Finite(lam) if lam < params.s_in => LimitPrediction {
                s: lam,
                winners: members,
                winner_biomass: params.s_in - lam,
                n_species,
            },
            _ => washout(params, n_species),
        };
    }
    washout(params, n_species)
}

fn washout(params: &ChemostatParams, n_species: usize) -> LimitPrediction {
    LimitPrediction {
        s: params.s_in,
        winners: Vec::new(),
        winner_biomass: 0.0,
        n_species,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::{order_species, BreakEvenOptions, DEFAULT_EQ_TOL};

    fn triple() -> Chemostat {
        Chemostat::new(
            ChemostatParams::new(1.0, 10.0).unwrap(),
            vec![
                GrowthFunction::monod(3.0, 1.0).unwrap(),
                GrowthFunction::monod(4.0, 2.0).unwrap(),
                GrowthFunction::monod(5.0, 3.0).unwrap(),
            ],
        )
    }

    fn ordered(model: &Chemostat) -> OrderedSpecies {
        let sp: Vec<_> = model
            .growths
            .iter()
            .enumerate()
            .map(|(i, g)| (format!("sp{i}"), g.clone()))
            .collect();
        order_species(
            &sp,
            model.params.d,
            DEFAULT_EQ_TOL,
            &BreakEvenOptions::for_inflow(model.params.s_in),
        )
        .unwrap()
    }

    #[test]
    fn washout_equilibrium_is_stationary() {
        let m = triple();
        let d = rhs_original(&m, &State::new(10.0, vec![0.0; 3])).unwrap();
        assert_eq!(d, State::new(0.0, vec![0.0; 3]));
    }

    #[test]
    fn positive_equilibrium_single_species() {
        let m = Chemostat::new(
            ChemostatParams::new(1.0, 10.0).unwrap(),
            vec![GrowthFunction::monod(3.0, 1.0).unwrap()],
        );
        let d = rhs_original(&m, &State::new(0.5, vec![9.5])).unwrap();
        assert!(d.s.abs() < 1e-15 && d.x[0].abs() < 1e-15);
    }

    #[test]
    fn rhs_at_inflow_matches_direct_evaluation() {
        let m = triple();
        let d = rhs_original(&m, &State::new(10.0, vec![1.0; 3])).unwrap();
        let mus = [30.0 / 11.0, 40.0 / 12.0, 50.0 / 13.0];
        assert!((d.s + mus.iter().sum::<f64>()).abs() < 1e-13);
        for (dx, mu) in d.x.iter().zip(mus) {
            assert!((dx - (mu - 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn rhs_rejects_negative_and_mismatched_states() {
        let m = triple();
        assert!(matches!(
            rhs_original(&m, &State::new(1.0, vec![1.0, -1.0, 0.0])),
            Err(DynamicsError::NegativeComponent { .. })
        ));
        assert!(matches!(
            rhs_original(&m, &State::new(1.0, vec![1.0])),
            Err(DynamicsError::Dimension(_))
        ));
    }

    #[test]
    fn transformed_single_and_identical() {
        let m = Chemostat::new(
            ChemostatParams::new(1.0, 10.0).unwrap(),
            vec![GrowthFunction::monod(3.0, 1.0).unwrap()],
        );
        let ts = TransformedState {
            s: 2.0,
            b: 3.0,
            p: vec![1.0],
        };
        assert_eq!(rhs_transformed(&m, &ts).unwrap().p, vec![0.0]);

        let g = GrowthFunction::monod(3.0, 1.0).unwrap();
        let m = Chemostat::new(ChemostatParams::new(1.0, 10.0).unwrap(), vec![g.clone(), g]);
        let ts = TransformedState {
            s: 2.0,
            b: 3.0,
            p: vec![0.5, 0.5],
        };
        assert_eq!(rhs_transformed(&m, &ts).unwrap().p, vec![0.0, 0.0]);
        let bad = TransformedState {
            s: 2.0,
            b: 0.0,
            p: vec![0.5, 0.5],
        };
        assert!(matches!(
            rhs_transformed(&m, &bad),
            Err(DynamicsError::Chart(_))
        ));
    }

    #[test]
    fn chart_maps() {
        let ts = to_transformed(&State::new(1.0, vec![2.0, 2.0])).unwrap();
        assert_eq!(ts.b, 4.0);
        assert_eq!(ts.p, vec![0.5, 0.5]);
        assert_eq!(
            from_transformed(&ts).unwrap(),
            State::new(1.0, vec![2.0, 2.0])
        );
        assert!(matches!(
            to_transformed(&State::new(1.0, vec![0.0, 0.0])),
            Err(DynamicsError::Chart(_))
        ));
    }

    #[test]
    fn derived_channels_rules() {
        let c = DerivedChannels::of(&State::new(1.0, vec![2.0, 4.0]), true);
        assert_eq!(c.m, 7.0);
        assert_eq!(c.r, Some(vec![2.0]));
        let c = DerivedChannels::of(&State::new(1.0, vec![0.0, 0.0]), true);
        assert!(c.p.is_none() && c.r.is_none());
        let c = DerivedChannels::of(&State::new(1.0, vec![2.0, 4.0]), false);
        assert!(c.r.is_none());
    }

    #[test]
    fn mass_closed_form_examples() {
        let p = ChemostatParams::new(1.0, 10.0).unwrap();
        assert_eq!(mass_closed_form(10.0, &p, 7.0), 10.0);
        assert_eq!(mass_closed_form(3.0, &p, 0.0), 3.0);
        assert!((mass_closed_form(0.0, &p, std::f64::consts::LN_2) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn predicted_limits() {
        let m = triple();
        let ord = ordered(&m);
        let lim = predicted_limit(&m.params, &ord);
        let st = lim.as_state().unwrap();
        assert!((st.s - 0.5).abs() < 1e-12);
        assert!((st.x[0] - 9.5).abs() < 1e-12);
        assert_eq!(&st.x[1..], &[0.0, 0.0]);

        let low = ChemostatParams::new(1.0, 0.4).unwrap();
        let ord_low = order_species(
            &[("a".into(), GrowthFunction::monod(3.0, 1.0).unwrap())],
            1.0,
            DEFAULT_EQ_TOL,
            &BreakEvenOptions::for_inflow(0.4),
        )
        .unwrap();
        let lim = predicted_limit(&low, &ord_low);
        assert!(lim.is_washout());
        assert_eq!(lim.as_state().unwrap(), State::new(0.4, vec![0.0]));

        // species 1 absent: species 2 wins
        let init = State::new(10.0, vec![0.0, 0.1, 0.1]);
        let lim = predicted_limit_for(&m.params, &ord, Some(&init));
        assert_eq!(lim.winners, vec![1]);
        assert!((lim.s - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn predicted_limit_for_pack_reports_sum_only() {
        let g = GrowthFunction::monod(3.0, 1.0).unwrap();
        let m = Chemostat::new(ChemostatParams::new(1.0, 10.0).unwrap(), vec![g.clone(), g]);
        let ord = ordered(&m);
        let lim = predicted_limit(&m.params, &ord);
        assert_eq!(lim.winners, vec![0, 1]);
        assert!((lim.winner_biomass - 9.5).abs() < 1e-12);
        assert!(lim.as_state().is_none());
    }
}
