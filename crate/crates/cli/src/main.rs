use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use physexfil::angle::wrap;
use physexfil::detector::{
    chi2_detect_scores, detrend, euclidean_gate, extrema_detect, threshold_detect, variance_compare, whiteness_test,
    DetectorVerdict, ThresholdBand,
};
use physexfil::harness::{
    calibrate_noise, parse_axis_values, plan_attack, report, run_scenario_with, sweep, ResultFile, RunOptions,
    ScenarioResult,
};
use physexfil::observer::{decode_scheme1, decode_scheme2, Scheme1Decoder};
use physexfil::plant::{arm_forward_kinematics, ArmGeometry};
use physexfil::protocol::{deframe, FrameFormat};
use physexfil::{BitString, Error, ObservationSequence, Result, ScenarioConfig, Trace};

#[derive(Parser)]
#[command(
    name = "physexfil",
    version,
    about = "Covert exfiltration through physical actuation: simulate, encode, decode, detect"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Override the master seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for written artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Override the number of Monte Carlo trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Send and expect frames without the CRC byte.
    #[arg(long, global = true)]
    no_crc: bool,
    /// Machine-readable output on stdout instead of tables.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Run trials one at a time.
    #[arg(long, global = true)]
    serial: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trace, observation and result.
    Simulate { config: PathBuf },
    /// Attacker-side planning.
    Exfil {
        #[command(subcommand)]
        action: ExfilAction,
    },
    /// Decode bits from an observation CSV (t,value,valid).
    Decode(DecodeArgs),
    /// Run a defender detector over a trace CSV.
    Detect(DetectArgs),
    /// Run one scenario per value of a config field.
    Sweep {
        config: PathBuf,
        /// Dotted config path, e.g. attacker.rate_hz.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
    /// Fit x/y/z process noise to target error variances (m^2).
    Calibrate {
        config: PathBuf,
        /// Comma-separated x,y,z variances.
        #[arg(long)]
        targets: String,
    },
    /// Render tables from result JSON files.
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ExfilAction {
    /// Emit the perturbation schedule for the configured message.
    Plan { config: PathBuf },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecodeScheme {
    #[value(name = "1", alias = "deflect-return")]
    DeflectReturn,
    #[value(name = "2", alias = "hold-duration")]
    HoldDuration,
}

#[derive(Args)]
struct DecodeArgs {
    obs: PathBuf,
    #[arg(long, value_enum)]
    scheme: DecodeScheme,
    /// Bit rate (Hz). For scheme 2 the hold defaults to its inverse.
    #[arg(long)]
    rate: f64,
    /// Expected deflection in observation units; estimated from the data if absent.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Scheme-2 hold per bit (s).
    #[arg(long)]
    hold: Option<f64>,
    /// Time the first symbol starts (s); first frame if absent.
    #[arg(long)]
    start: Option<f64>,
    /// Number of bits to decode (scheme 1).
    #[arg(long)]
    bits: Option<usize>,
    /// Shift of bit windows (s).
    #[arg(long, default_value_t = 0.0)]
    delay: f64,
    /// Deframe a payload of this many bytes; exits 4 on integrity failure.
    #[arg(long)]
    payload_bytes: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DetectorKind {
    Chi2,
    Threshold,
    Extrema,
    Whiteness,
    Variance,
    Euclidean,
}

#[derive(Args)]
struct DetectArgs {
    trace: PathBuf,
    #[arg(long, value_enum)]
    detector: DetectorKind,
    #[arg(long)]
    alpha: Option<f64>,
    /// Chi-square averaging window (samples).
    #[arg(long, default_value_t = 10)]
    window: usize,
    /// Threshold band half-width.
    #[arg(long)]
    half_width: Option<f64>,
    /// Bit rate used to pick the default threshold band (Hz).
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    #[arg(long)]
    min_prominence: Option<f64>,
    #[arg(long)]
    min_separation: Option<f64>,
    /// Extrema detrending window (s); eight bit periods if absent, 0 disables.
    #[arg(long)]
    detrend: Option<f64>,
    #[arg(long, default_value_t = 10)]
    max_lag: usize,
    /// Trace column to scan; yaw error or arm deviation if absent.
    #[arg(long)]
    signal: Option<String>,
    /// Reference trace for the variance comparison.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Euclidean gate radius (m).
    #[arg(long, default_value_t = 0.004)]
    epsilon: f64,
    /// Euclidean gate sample times (s); last row if absent.
    #[arg(long, value_delimiter = ',')]
    at: Vec<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate { config } => simulate(g, config),
        Command::Exfil {
            action: ExfilAction::Plan { config },
        } => exfil_plan(g, config),
        Command::Decode(a) => decode(g, a),
        Command::Detect(a) => detect(g, a),
        Command::Sweep { config, axis, values } => run_sweep(g, config, axis, values),
        Command::Calibrate { config, targets } => calibrate(g, config, targets),
        Command::Report { results } => run_report(g, results),
    }
}

fn opts(g: &Global) -> RunOptions {
    RunOptions {
        parallel: !g.serial,
        keep_trace: false,
    }
}

fn load_config(g: &Global, path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let mut cfg = ScenarioConfig::from_toml(&text)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(n) = g.trials {
        cfg.n_trials = n;
    }
    if g.no_crc {
        cfg.attacker.crc = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_path(g: &Global, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&g.out_dir)?;
    Ok(g.out_dir.join(name))
}

fn write_file(g: &Global, name: &str, contents: &str) -> Result<PathBuf> {
    let p = out_path(g, name)?;
    fs::write(&p, contents)?;
    Ok(p)
}

fn print(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
}

fn metrics_csv(r: &ScenarioResult) -> String {
    let mut s = String::from("metric,mean,ci_low,ci_high,std,n\n");
    for (k, m) in &r.metrics {
        s += &format!("{k},{},{},{},{},{}\n", m.mean, m.ci_low, m.ci_high, m.std, m.n);
    }
    s
}

fn simulate(g: &Global, config: &Path) -> Result<u8> {
    let cfg = load_config(g, config)?;
    let r = run_scenario_with(
        &cfg,
        RunOptions {
            keep_trace: true,
            ..opts(g)
        },
    )?;
    if let Some(t) = &r.trace {
        let mut f = fs::File::create(out_path(g, "trace.csv")?)?;
        t.write_csv(&mut f)?;
    }
    if let Some(o) = &r.observation {
        o.write_csv(fs::File::create(out_path(g, "observation.csv")?)?)?;
    }
    let file = ResultFile::Scenario(r.clone());
    let json = file.to_json();
    write_file(g, "result.json", &json)?;
    match g.format {
        Some(Format::Json) => print(&json),
        Some(Format::Csv) => print(&metrics_csv(&r)),
        None => print(&report(&[file])?.text),
    }
    Ok(match r.example.integrity.as_deref() {
        Some(tag) if tag != "ok" => {
            eprintln!("integrity failure in trial 0: {tag}");
            4
        }
        _ => 0,
    })
}

fn exfil_plan(g: &Global, config: &Path) -> Result<u8> {
    let cfg = load_config(g, config)?;
    let plan = plan_attack(&cfg)?;
    let json = serde_json::to_string_pretty(&plan)? + "\n";
    write_file(g, "schedule.json", &json)?;
    match g.format {
        Some(Format::Csv) => {
            let mut s = String::from("t_start,t_end,channel,offset\n");
            for e in &plan.schedule.entries {
                let ch = serde_json::to_value(e.channel)?;
                s += &format!(
                    "{},{},{},{}\n",
                    e.t_start,
                    e.t_end,
                    ch.as_str().unwrap_or("?"),
                    e.offset
                );
            }
            print(&s);
        }
        _ => print(&json),
    }
    Ok(0)
}

/// Half the 5-95 percentile spread of valid frames about their median.
fn estimate_amplitude(obs: &ObservationSequence) -> Result<f64> {
    let mut v: Vec<f64> = obs.frames.iter().filter_map(|f| f.value).collect();
    if v.is_empty() {
        return Err(Error::EmptyTrace);
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
    let a = (q(0.95) - q(0.05)) / 2.0;
    if a > 0.0 {
        Ok(a)
    } else {
        Err(Error::config(
            "--amplitude",
            "observation is flat; give the amplitude explicitly",
        ))
    }
}

fn decode(g: &Global, a: &DecodeArgs) -> Result<u8> {
    let obs = ObservationSequence::read_csv(fs::File::open(&a.obs)?)?;
    let amplitude = match a.amplitude {
        Some(x) => x,
        None => estimate_amplitude(&obs)?,
    };
    let decoded = match a.scheme {
        DecodeScheme::DeflectReturn => {
            let start = a
                .start
                .or_else(|| obs.frames.first().map(|f| f.t))
                .ok_or(Error::EmptyTrace)?;
            let mut dec = Scheme1Decoder::new(a.rate, amplitude, start);
            dec.n_bits = a.bits;
            dec.delay_s = a.delay;
            decode_scheme1(&obs, &dec)?
        }
        DecodeScheme::HoldDuration => {
            if a.rate.is_nan() || a.rate <= 0.0 {
                return Err(Error::config("--rate", "must be > 0"));
            }
            decode_scheme2(&obs, amplitude, a.hold.unwrap_or(1.0 / a.rate))?
        }
    };
    let bits = decoded.symbols.to_string();
    let mut code = 0;
    let mut payload_hex = None;
    let mut integrity = None;
    if let Some(n) = a.payload_bytes {
        let fmt = FrameFormat { crc: !g.no_crc };
        match deframe(&decoded.symbols, Some(n), fmt) {
            Ok(d) => {
                payload_hex = Some(hex::encode(&d.payload));
                integrity = Some("ok".to_string());
            }
            Err(e @ (Error::CrcMismatch { .. } | Error::NoPreamble)) => {
                if let Error::CrcMismatch { payload, .. } = &e {
                    payload_hex = Some(hex::encode(payload));
                }
                integrity = Some(e.to_string());
                code = 4;
            }
            Err(e) => return Err(e),
        }
    }
    match g.format {
        Some(Format::Json) => {
            let v = serde_json::json!({
                "bits": bits,
                "confidence": decoded.confidence,
                "payload_hex": payload_hex,
                "integrity": integrity,
            });
            print(&(serde_json::to_string_pretty(&v)? + "\n"));
        }
        Some(Format::Csv) => {
            let mut s = String::from("index,symbol,confidence\n");
            for (i, (sym, c)) in bits.chars().zip(&decoded.confidence).enumerate() {
                s += &format!("{i},{sym},{c}\n");
            }
            print(&s);
        }
        None => {
            print(&format!("{bits}\n"));
            if let Some(p) = &payload_hex {
                print(&format!("payload {p}\n"));
            }
        }
    }
    if code == 4 {
        eprintln!("integrity failure: {}", integrity.unwrap_or_default());
    }
    Ok(code)
}

fn load_trace(p: &Path) -> Result<Trace> {
    Trace::read_csv(fs::File::open(p)?)
}

fn default_signal(t: &Trace) -> Result<Vec<f64>> {
    if let (Ok(m), Ok(r)) = (t.column("meas_yaw"), t.column("ref_yaw")) {
        return Ok(m.iter().zip(r).map(|(a, b)| wrap(a - b)).collect());
    }
    Ok(t.column("deviation")?.to_vec())
}

fn residual_columns(t: &Trace) -> Vec<String> {
    t.columns().iter().filter(|c| c.starts_with("res_")).cloned().collect()
}

fn error_columns(t: &Trace) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    for ch in ["x", "y", "z", "ex", "ey"] {
        if let (Ok(v), Ok(r)) = (t.column(ch), t.column(&format!("ref_{ch}"))) {
            out.push((ch.to_string(), v.iter().zip(r).map(|(a, b)| a - b).collect()));
        }
    }
    if out.is_empty() {
        return Err(Error::config("trace", "no position/reference column pairs"));
    }
    Ok(out)
}

struct Verdicts {
    rows: Vec<DetectorVerdict>,
    bits: Option<BitString>,
    attacked: bool,
}

fn detect(g: &Global, a: &DetectArgs) -> Result<u8> {
    let trace = load_trace(&a.trace)?;
    let times = trace.times().to_vec();
    let signal = || match &a.signal {
        Some(c) => trace.column(c).map(<[f64]>::to_vec),
        None => default_signal(&trace),
    };
    let v = match a.detector {
        DetectorKind::Chi2 => {
            let dof = residual_columns(&trace).len().max(1);
            let rows = chi2_detect_scores(trace.column("nis")?, &times, dof, a.alpha.unwrap_or(0.01), a.window)?;
            let attacked = rows.iter().any(|r| r.attacked);
            Verdicts {
                rows,
                bits: None,
                attacked,
            }
        }
        DetectorKind::Threshold => {
            let band = match a.half_width {
                Some(h) => ThresholdBand::symmetric(h)?,
                None => ThresholdBand::for_rate(a.rate),
            };
            let rec = threshold_detect(&times, &signal()?, band)?;
            Verdicts {
                attacked: rec.attacked(),
                bits: Some(rec.bits),
                rows: rec.verdicts,
            }
        }
        DetectorKind::Extrema => {
            let s = detrend(&times, &signal()?, a.detrend.unwrap_or(8.0 / a.rate))?;
            let prom = match a.min_prominence {
                Some(p) => p,
                None => s.iter().fold(0.0f64, |m, v| m.max(v.abs())) / 2.0,
            };
            let sep = a.min_separation.unwrap_or(0.5 / a.rate);
            let rec = extrema_detect(&times, &s, prom, sep)?;
            Verdicts {
                attacked: rec.attacked(),
                bits: Some(rec.bits),
                rows: rec.verdicts,
            }
        }
        DetectorKind::Whiteness => {
            let cols = residual_columns(&trace);
            if cols.is_empty() {
                return Err(Error::config("trace", "no res_* columns"));
            }
            let alpha = a.alpha.unwrap_or(0.05) / cols.len() as f64;
            let mut rows = Vec::new();
            for c in &cols {
                let w = whiteness_test(trace.column(c)?, a.max_lag, alpha)?;
                rows.push(DetectorVerdict {
                    attacked: !w.white,
                    score: w.statistic,
                    threshold: w.threshold,
                    t_window: (times[0], times[times.len() - 1]),
                    decoded_bits: None,
                });
            }
            let attacked = rows.iter().any(|r| r.attacked);
            Verdicts {
                rows,
                bits: None,
                attacked,
            }
        }
        DetectorKind::Variance => {
            let base_path = a
                .baseline
                .as_ref()
                .ok_or_else(|| Error::config("--baseline", "variance comparison needs a baseline trace"))?;
            let base = error_columns(&load_trace(base_path)?)?;
            let test = error_columns(&trace)?;
            let mut rows = Vec::new();
            for ((_, b), (_, t)) in base.iter().zip(&test) {
                let c = variance_compare(b, t, a.alpha.unwrap_or(0.05))?;
                rows.push(DetectorVerdict {
                    attacked: c.flagged,
                    score: c.ratio,
                    threshold: c.p_value,
                    t_window: (times[0], times[times.len() - 1]),
                    decoded_bits: None,
                });
            }
            let attacked = rows.iter().any(|r| r.attacked);
            Verdicts {
                rows,
                bits: None,
                attacked,
            }
        }
        DetectorKind::Euclidean => {
            let geom = ArmGeometry::default();
            let (e1, e2) = (trace.column("est_theta1")?, trace.column("est_theta2")?);
            let (ex, ey) = (trace.column("ex")?, trace.column("ey")?);
            let (t1, t2) = (trace.column("theta1")?, trace.column("theta2")?);
            let targets = if a.at.is_empty() {
                vec![times[times.len() - 1]]
            } else {
                a.at.clone()
            };
            let mut rows = Vec::new();
            for t in targets {
                let i = times.partition_point(|x| *x < t - 1e-9).min(times.len() - 1);
                let (ej, ee) = arm_forward_kinematics(&geom, e1[i], e2[i]);
                let (aj, _) = arm_forward_kinematics(&geom, t1[i], t2[i]);
                let pass = euclidean_gate([ee, ej], [[ex[i], ey[i]], aj], a.epsilon);
                let d = ((ee[0] - ex[i]).powi(2) + (ee[1] - ey[i]).powi(2)).sqrt();
                rows.push(DetectorVerdict {
                    attacked: !pass,
                    score: d,
                    threshold: a.epsilon,
                    t_window: (times[i], times[i]),
                    decoded_bits: None,
                });
            }
            let attacked = rows.iter().any(|r| r.attacked);
            Verdicts {
                rows,
                bits: None,
                attacked,
            }
        }
    };
    match g.format {
        Some(Format::Json) => {
            let j = serde_json::json!({
                "attacked": v.attacked,
                "bits": v.bits.as_ref().map(|b| b.to_string()),
                "verdicts": v.rows,
            });
            print(&(serde_json::to_string_pretty(&j)? + "\n"));
        }
        _ => {
            let mut s = String::from("t_start,t_end,score,threshold,attacked\n");
            for r in &v.rows {
                s += &format!(
                    "{},{},{},{},{}\n",
                    r.t_window.0, r.t_window.1, r.score, r.threshold, r.attacked as u8
                );
            }
            if g.format.is_none() {
                s += &format!("attacked: {}\n", v.attacked);
                if let Some(b) = &v.bits {
                    s += &format!("bits: {b}\n");
                }
            }
            print(&s);
        }
    }
    Ok(0)
}

fn run_sweep(g: &Global, config: &Path, axis: &str, values: &str) -> Result<u8> {
    let cfg = load_config(g, config)?;
    let vals = parse_axis_values(values)?;
    let sw = sweep(&cfg, axis, &vals, opts(g))?;
    let file = ResultFile::Sweep(sw);
    let json = file.to_json();
    write_file(g, "sweep.json", &json)?;
    match g.format {
        Some(Format::Json) => print(&json),
        Some(Format::Csv) => {
            let ResultFile::Sweep(sw) = &file else { unreachable!() };
            let mut s = String::from("value,metric,mean,ci_low,ci_high,n\n");
            for (v, c) in sw.values.iter().zip(&sw.cells) {
                for (k, m) in &c.metrics {
                    s += &format!("{v},{k},{},{},{},{}\n", m.mean, m.ci_low, m.ci_high, m.n);
                }
            }
            print(&s);
        }
        None => print(&report(&[file])?.text),
    }
    Ok(0)
}

fn calibrate(g: &Global, config: &Path, targets: &str) -> Result<u8> {
    let cfg = load_config(g, config)?;
    let t: Vec<f64> = targets
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::config("--targets", e.to_string()))
        })
        .collect::<Result<_>>()?;
    let c = calibrate_noise(&cfg, &t, opts(g))?;
    write_file(g, "calibrated.toml", &c.apply(&cfg).to_toml())?;
    let file = ResultFile::Calibration(c);
    let json = file.to_json();
    write_file(g, "calibration.json", &json)?;
    match g.format {
        Some(Format::Json) => print(&json),
        Some(Format::Csv) => {
            let ResultFile::Calibration(c) = &file else {
                unreachable!()
            };
            let mut s = String::from("channel,target,achieved,process_var\n");
            for (i, ch) in ["x", "y", "z"].iter().enumerate() {
                s += &format!("{ch},{},{},{}\n", c.targets[i], c.achieved[i], c.process_var[i]);
            }
            print(&s);
        }
        None => print(&report(&[file])?.text),
    }
    Ok(0)
}

fn run_report(g: &Global, results: &[PathBuf]) -> Result<u8> {
    let entries: Vec<ResultFile> = results
        .iter()
        .map(|p| ResultFile::from_json(&fs::read_to_string(p)?))
        .collect::<Result<_>>()?;
    let rep = report(&entries)?;
    let json = rep.to_json();
    write_file(g, "report.json", &json)?;
    write_file(g, "report.txt", &rep.text)?;
    match g.format {
        Some(Format::Json) => print(&json),
        _ => print(&rep.text),
    }
    Ok(0)
}
