use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fhwpt::design::{
    achievable_band, build_frequency_table, calibrate_entry, select_capacitors, table_to_csv, DesignBand, SenseMode,
};
use fhwpt::harness::metrics::{analyze, metrics_csv, LockTime};
use fhwpt::harness::report::emit_report;
use fhwpt::harness::scenario::{quantity, Scenario};
use fhwpt::harness::sweep::{duty_sweep, sweep_csv};
use fhwpt::harness::{check_run, run_all, Thresholds};
use fhwpt::sim::Trace;
use fhwpt::Error;

#[derive(Parser)]
#[command(name = "fhwpt", version, about = "Frequency-hopping wireless power transfer attack simulator")]
struct Cli {
    /// Root directory for run artifacts.
    #[arg(long, global = true, env = "FHWPT_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Capacitor bounds for a design band.
    Design {
        #[arg(long, default_value = "38uH")]
        l_r: String,
        #[arg(long, default_value = "147nF")]
        c_r2: String,
        #[arg(long, default_value = "65kHz")]
        f_low: String,
        #[arg(long, default_value = "125kHz")]
        f_high: String,
        #[arg(long, default_value = "0.75us")]
        t_filter: String,
        /// capacitor-voltage or load-voltage
        #[arg(long, default_value = "capacitor-voltage")]
        mode: String,
        /// Candidate C_R1 to check against the bounds.
        #[arg(long)]
        c_r1: Option<String>,
    },
    /// Build (and optionally calibrate) the frequency table of a scenario.
    Table {
        /// Scenario file, or `table3` for the bundled one.
        #[arg(long, default_value = "table3")]
        scenario: String,
        /// Override the scenario's table frequencies.
        #[arg(long, value_delimiter = ',')]
        freqs: Vec<String>,
        #[arg(long)]
        calibrate: bool,
    },
    /// Run scenarios and write their reports.
    Simulate {
        #[arg(required = true)]
        scenarios: Vec<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Exit with status 3 when a hop misses the lock or power bounds.
        #[arg(long)]
        check: bool,
    },
    /// Steady intruder current against the switch off-time.
    Sweep {
        #[arg(long, default_value = "table3")]
        scenario: String,
        #[arg(long, default_value = "65kHz")]
        freq: String,
        /// START:STOP:COUNT off-time grid.
        #[arg(long, default_value = "0.4us:3.2us:15")]
        t_off: String,
    },
    /// Recompute metrics from a saved trace.
    Analyze { trace: PathBuf },
}

enum Failure {
    Usage(String),
    Numeric(String),
    Threshold(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse { .. } | Error::Io { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Threshold(m)) => {
            eprintln!("threshold violated:\n{m}");
            ExitCode::from(3)
        }
    }
}

fn q(text: &str, unit: &str, what: &str) -> Result<f64, Failure> {
    quantity(text, unit).map_err(|m| Failure::Usage(format!("{what}: {m}")))
}

fn load_scenario(name: &str) -> Result<Scenario, Failure> {
    if name == "table3" && !Path::new(name).exists() {
        return Ok(Scenario::table3());
    }
    Ok(Scenario::load(Path::new(name))?)
}

fn write_out(path: &Path, body: &str) -> Result<(), Failure> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(|e| Failure::Usage(format!("{}: {e}", d.display())))?;
    }
    std::fs::write(path, body).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Command::Design {
            l_r,
            c_r2,
            f_low,
            f_high,
            t_filter,
            mode,
            c_r1,
        } => {
            let sense_mode = SenseMode::parse(&mode).ok_or_else(|| Failure::Usage(format!("unknown mode '{mode}'")))?;
            let band = DesignBand {
                f_l: q(&f_low, "Hz", "f-low")?,
                f_h: q(&f_high, "Hz", "f-high")?,
                t_filter: q(&t_filter, "s", "t-filter")?,
                sense_mode,
            };
            let l_r = q(&l_r, "H", "l-r")?;
            let c_r2 = q(&c_r2, "F", "c-r2")?;
            let sel = select_capacitors(&band, l_r, c_r2)?;
            println!("mode,{}", sense_mode.as_str());
            println!("c_r1_max_f,{:e}", sel.c_r1_max);
            println!("c_sum_min_f,{:e}", sel.c_sum_min);
            if let Some(c) = c_r1 {
                let c = q(&c, "F", "c-r1")?;
                let (lo, hi) = achievable_band(l_r, c, c_r2);
                println!("c_r2_min_f,{:e}", sel.c_r2_min(c));
                println!("band_hz,{lo:.1},{hi:.1}");
                println!("feasible,{}", sel.admits(c));
                if !sel.admits(c) {
                    return Err(Failure::Numeric(format!("C_R1 = {c:e} F does not cover the band")));
                }
            }
            Ok(())
        }
        Command::Table {
            scenario,
            freqs,
            calibrate,
        } => {
            let sc = load_scenario(&scenario)?;
            let p = sc.plant.params;
            let config = sc.attacker.as_ref().map(|a| a.config.clone()).unwrap_or_default();
            let freqs = if freqs.is_empty() {
                sc.attacker.as_ref().map(|a| a.table_freqs.clone()).unwrap_or_default()
            } else {
                freqs.iter().map(|f| q(f, "Hz", "freqs")).collect::<Result<_, _>>()?
            };
            let mut table = build_frequency_table(&freqs, p.l_r, p.c_r1, p.c_r2)?;
            if calibrate {
                table = table
                    .iter()
                    .map(|e| calibrate_entry(e, &p, &config, sc.sim.dt))
                    .collect::<Result<_, _>>()?;
            }
            let csv = table_to_csv(&table);
            write_out(&cli.out_dir.join(&sc.output_dir).join("table.csv"), &csv)?;
            print!("{csv}");
            Ok(())
        }
        Command::Simulate { scenarios, jobs, check } => {
            let list = scenarios.iter().map(|s| load_scenario(s)).collect::<Result<Vec<_>, _>>()?;
            for sc in &list {
                for w in &sc.warnings {
                    eprintln!("warning [{}]: {w}", sc.name);
                }
            }
            let runs = run_all(&list, jobs);
            let mut violations = Vec::new();
            for (sc, run) in list.iter().zip(runs) {
                let run = run?;
                let dir = cli.out_dir.join(&sc.output_dir);
                emit_report(&run, &dir)?;
                println!("{} -> {}", sc.name, dir.display());
                for (k, h) in run.metrics.hops.iter().enumerate() {
                    let lock = match h.lock {
                        LockTime::Locked { seconds, cycles } => format!("{:.1} us / {cycles:.1} cycles", seconds * 1e6),
                        LockTime::NotLocked => "not locked".into(),
                    };
                    let stolen = h.stolen_ratio.map_or("NA".into(), |r| format!("{r:.3}"));
                    println!("  hop {k:>3} {:>9.0} Hz  lock {lock:<28} stolen {stolen}", h.freq);
                }
                if check {
                    violations.extend(check_run(&run, &Thresholds::default()).into_iter().map(|v| format!("{}: {v}", sc.name)));
                }
            }
            if violations.is_empty() {
                Ok(())
            } else {
                Err(Failure::Threshold(violations.join("\n")))
            }
        }
        Command::Sweep { scenario, freq, t_off } => {
            let sc = load_scenario(&scenario)?;
            let f = q(&freq, "Hz", "freq")?;
            let parts: Vec<&str> = t_off.split(':').collect();
            let [a, b, n] = parts[..] else {
                return Err(Failure::Usage("t-off must be START:STOP:COUNT".into()));
            };
            let (a, b) = (q(a, "s", "t-off")?, q(b, "s", "t-off")?);
            let n: usize = n.parse().map_err(|_| Failure::Usage(format!("bad count '{n}'")))?;
            if n < 2 {
                return Err(Failure::Usage("t-off count must be >= 2".into()));
            }
            let grid: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
            let pts = duty_sweep(&sc, f, &grid)?;
            let csv = sweep_csv(&pts);
            write_out(&cli.out_dir.join(&sc.output_dir).join("sweep.csv"), &csv)?;
            print!("{csv}");
            Ok(())
        }
        Command::Analyze { trace } => {
            let tr = Trace::load_csv(&trace)?;
            print!("{}", metrics_csv(&analyze(&tr)?));
            Ok(())
        }
    }
}
