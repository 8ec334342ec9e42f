//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification or certification failure, 2 bad input.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::certificate::{build_certificate, CertificateError};
use crate::growth::order_species;
use crate::integrate::{simulate, Trajectory};
use crate::scenario::{parse_scenario, Scenario};
use crate::verify::run_report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "chemostat",
    version,
    about = "Chemostat competition simulator and verifier"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a scenario and write the dense trajectory as CSV.
    Simulate {
        scenario: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compute the separation certificate of a scenario.
    Certificate {
        scenario: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Simulate and check every claim; prints a table and optionally writes JSON.
    Verify {
        scenario: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Tabulate the growth laws on a grid of substrate values.
    Curves {
        scenario: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Number of grid points.
        #[arg(long, default_value_t = 1001)]
        points: usize,
    },
    /// Verify several scenarios concurrently, one line per scenario.
    Sweep {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn input_error(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: e.to_string(),
    }
}

fn failure(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_FAIL,
        message: e.to_string(),
    }
}

/// Parses `std::env::args` and runs the command.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    parse_scenario(path).map_err(input_error)
}

fn emit(output: Option<&PathBuf>, bytes: &[u8]) -> Result<(), Failure> {
    match output {
        Some(path) => {
            fs::write(path, bytes).map_err(|e| input_error(format!("{}: {e}", path.display())))
        }
        None => io::stdout().write_all(bytes).map_err(failure),
    }
}

fn execute(cmd: &Command) -> Result<i32, Failure> {
    match cmd {
        Command::Simulate { scenario, output } => {
            let sc = load(scenario)?;
            let traj =
                simulate(&sc.model(), &sc.initial, &sc.integrator_settings()).map_err(failure)?;
            let mut buf = Vec::new();
            write_trajectory_csv(&traj, &mut buf).map_err(failure)?;
            emit(output.as_ref(), &buf)?;
            Ok(EXIT_OK)
        }
        Command::Certificate { scenario, output } => {
            let sc = load(scenario)?;
            let ordered = order_species(
                &sc.named_growths(),
                sc.params.d,
                sc.certificate.eq_tol,
                &sc.break_even_options(),
            )
            .map_err(input_error)?;
            match build_certificate(&ordered, &sc.params, &sc.certificate_options()) {
                Ok(mut cert) => {
                    if let Some(ov) = &sc.certificate_override {
                        ov.apply(&mut cert);
                    }
                    emit(output.as_ref(), cert.to_text().as_bytes())?;
                    Ok(EXIT_OK)
                }
                Err(e @ CertificateError::Washout { .. }) => {
                    Err(failure(format!("certificate refused: {e}")))
                }
                Err(e) => Err(failure(e)),
            }
        }
        Command::Verify { scenario, output } => {
            let sc = load(scenario)?;
            let report = run_report(&sc).map_err(failure)?;
            print!("{}", report.to_text());
            if let Some(path) = output {
                fs::write(path, report.to_json())
                    .map_err(|e| input_error(format!("{}: {e}", path.display())))?;
            }
            Ok(if report.overall_pass {
                EXIT_OK
            } else {
                EXIT_FAIL
            })
        }
        Command::Curves {
            scenario,
            output,
            points,
        } => {
            let sc = load(scenario)?;
            if *points < 2 {
                return Err(input_error("--points must be at least 2"));
            }
            let ordered = order_species(
                &sc.named_growths(),
                sc.params.d,
                sc.certificate.eq_tol,
                &sc.break_even_options(),
            )
            .map_err(input_error)?;
            let mut buf = Vec::new();
            write_curves_csv(&sc, *points, &mut buf).map_err(failure)?;
            emit(output.as_ref(), &buf)?;

            let mut lam = String::from("id,lambda\n");
            for sp in &ordered.species {
                lam.push_str(&format!("{},{}\n", sp.id, sp.lambda));
            }
            match output {
                Some(path) => {
                    let companion = path.with_extension("lambda.csv");
                    fs::write(&companion, lam)
                        .map_err(|e| input_error(format!("{}: {e}", companion.display())))?;
                }
                None => eprint!("{lam}"),
            }
            Ok(EXIT_OK)
        }
        Command::Sweep { scenarios } => {
            let results: Vec<Result<i32, Failure>> = std::thread::scope(|scope| {
                let handles: Vec<_> = scenarios
                    .iter()
                    .map(|path| {
                        scope.spawn(move || {
                            let sc = load(path)?;
                            let report = run_report(&sc).map_err(failure)?;
                            Ok(if report.overall_pass {
                                EXIT_OK
                            } else {
                                EXIT_FAIL
                            })
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker panicked"))
                    .collect()
            });
            let mut worst = EXIT_OK;
            for (path, res) in scenarios.iter().zip(results) {
                let code = match res {
                    Ok(code) => {
                        println!(
                            "{}\t{}",
                            path.display(),
                            if code == EXIT_OK { "PASS" } else { "FAIL" }
                        );
                        code
                    }
                    Err(f) => {
                        println!("{}\tERROR", path.display());
                        eprintln!("error: {}: {}", path.display(), f.message);
                        f.code
                    }
                };
                worst = worst.max(code);
            }
            Ok(worst)
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `t,s,x1..xn,b,p1..pn,m,r2..rn`; undefined channels are empty fields.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> csv::Result<()> {
    let n = traj.n_species();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "s".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.push("b".into());
    header.extend((1..=n).map(|i| format!("p{i}")));
    header.push("m".into());
    header.extend((2..=n).map(|i| format!("r{i}")));
    w.write_record(&header)?;

    for ((t, st), ch) in traj.times.iter().zip(&traj.states).zip(&traj.channels) {
        let mut row = vec![num(*t), num(st.s)];
        row.extend(st.x.iter().map(|&v| num(v)));
        row.push(num(ch.b));
        match &ch.p {
            Some(p) => row.extend(p.iter().map(|&v| num(v))),
            None => row.extend(std::iter::repeat_n(String::new(), n)),
        }
        row.push(num(ch.m));
        match &ch.r {
            Some(r) => row.extend(r.iter().map(|&v| num(v))),
            None => row.extend(std::iter::repeat_n(String::new(), n.saturating_sub(1))),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `s,mu_<id>...` on a uniform grid over `[0, S_in]`.
pub fn write_curves_csv<W: Write>(sc: &Scenario, points: usize, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["s".to_string()];
    header.extend(sc.species.iter().map(|sp| format!("mu_{}", sp.id)));
    w.write_record(&header)?;
    let s_max = sc.params.s_in;
    for k in 0..points {
        let s = s_max * k as f64 / (points - 1) as f64;
        let mut row = vec![num(s)];
        row.extend(sc.species.iter().map(|sp| num(sp.growth.rate(s))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
