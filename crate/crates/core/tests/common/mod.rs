#![allow(dead_code)]

use std::path::PathBuf;

use chemostat::certificate::{build_certificate, Certificate};
use chemostat::growth::{order_species, OrderedSpecies};
use chemostat::integrate::{simulate, Trajectory};
use chemostat::scenario::{parse_scenario_str, Scenario, Tolerances};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

/// Loads a fixture with built-in default tolerances, ignoring the environment.
pub fn fixture(name: &str) -> Scenario {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture readable");
    parse_scenario_str(&text, &Tolerances::default()).expect("fixture parses")
}

pub struct Run {
    pub scenario: Scenario,
    pub ordered: OrderedSpecies,
    pub traj: Trajectory,
}

impl Run {
    pub fn of(scenario: Scenario) -> Self {
        let ordered = order_species(
            &scenario.named_growths(),
            scenario.params.d,
            scenario.certificate.eq_tol,
            &scenario.break_even_options(),
        )
        .expect("species order");
        let traj = simulate(
            &scenario.model(),
            &scenario.initial,
            &scenario.integrator_settings(),
        )
        .expect("simulation succeeds");
        Run {
            scenario,
            ordered,
            traj,
        }
    }

    pub fn certificate(&self) -> Certificate {
        build_certificate(
            &self.ordered,
            &self.scenario.params,
            &self.scenario.certificate_options(),
        )
        .expect("certificate builds")
    }
}
