use effcap::channel::{effective_capacity, ChannelSpec};
use effcap::energy::{ebn0_point, energy_metrics, MetricsProvenance};
use effcap::exec::map_range;
use effcap::queuesim::{simulate_queue, varsigma_estimate, SimConfig, TailPoint};
use effcap::sources::Source;
use effcap::throughput::{capacity_at, db_to_linear, max_avg_rate, throughput_sweep, CapacityMode};
use effcap::Execution;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::args::{CapacityArgs, Cli, Command, EbwArgs, EcapArgs, EnergyArgs, Format, Method, SimulateArgs, ThroughputArgs};
use crate::output::{json_bytes, Cell, Sink, Table};
use crate::params::{self, grid, required, scalar, FileParams};
use crate::CliError;

const DEFAULT_MC_SAMPLES: usize = 200_000;
const DEFAULT_SIM_BLOCKS: usize = 1_000_000;

struct Ctx {
    seed: Option<u64>,
    format: Format,
    /// Resolved parameters, recorded in the manifest.
    resolved: Map<String, Value>,
}

impl Ctx {
    fn record(&mut self, key: &str, value: impl Serialize) {
        self.resolved.insert(key.to_string(), serde_json::to_value(value).expect("plain data"));
    }

    fn require_seed(&mut self, why: &str) -> Result<u64, CliError> {
        let seed = self
            .seed
            .ok_or_else(|| CliError::Validation(format!("seed: {why} needs an explicit --seed")))?;
        self.record("seed", seed);
        Ok(seed)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let name = cli.command.name();
    let file = match &cli.config {
        Some(path) => params::load_file(path, name)?,
        None => FileParams::default(),
    };
    let mut ctx = Ctx {
        seed: cli.seed.or(file.seed),
        format: cli.format.or(file.format).unwrap_or(Format::Csv),
        resolved: Map::new(),
    };
    ctx.record("format", ctx.format);
    let mut sink = Sink::new(cli.out_dir.clone())?;
    match cli.command {
        Command::Ebw(a) => ebw(a, file, &mut ctx, &mut sink)?,
        Command::Ecap(a) => ecap(a, file, &mut ctx, &mut sink)?,
        Command::Throughput(a) => throughput(a, file, &mut ctx, &mut sink)?,
        Command::Energy(a) => energy(a, file, &mut ctx, &mut sink)?,
        Command::Simulate(a) => simulate(a, file, &mut ctx, &mut sink)?,
    }
    let seed = ctx.resolved.get("seed").and_then(Value::as_u64);
    sink.finish(name, Value::Object(ctx.resolved), seed)
}

fn err_cell<T>(r: &Result<T, effcap::Error>) -> Cell {
    match r {
        Ok(_) => Cell::Empty,
        Err(e) => Cell::Text(e.to_string()),
    }
}

fn ok_num<T>(r: &Result<T, effcap::Error>, f: impl Fn(&T) -> f64) -> Cell {
    r.as_ref().map_or(Cell::Empty, |v| Cell::Num(f(v)))
}

fn label<T: Serialize>(v: T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn thetas(flag: Option<Vec<f64>>, file: &mut FileParams, ctx: &mut Ctx) -> Result<Vec<f64>, CliError> {
    let t = grid(required(flag, file.theta.take().map(|v| v.into_vec()), "theta")?, "theta", true)?;
    ctx.record("theta", &t);
    Ok(t)
}

fn snrs_db(flag: Option<Vec<f64>>, file: &mut FileParams, ctx: &mut Ctx) -> Result<Vec<f64>, CliError> {
    let s = grid(required(flag, file.snr_db.take().map(|v| v.into_vec()), "snr_db")?, "snr_db", false)?;
    ctx.record("snr_db", &s);
    Ok(s)
}

fn source(flag: Option<String>, file: &mut FileParams, ctx: &mut Ctx) -> Result<Source, CliError> {
    let (cfg, src) = params::source(flag.as_deref(), file.source.take())?;
    ctx.record("source", cfg.to_json());
    Ok(src)
}

fn channel(flag: Option<String>, file: &mut FileParams, ctx: &mut Ctx) -> Result<ChannelSpec, CliError> {
    let (cfg, spec) = params::channel(flag.as_deref(), file.channel.take())?;
    ctx.record("channel", cfg);
    Ok(spec)
}

fn capacity_mode(a: CapacityArgs, file: &FileParams, ctx: &mut Ctx) -> Result<CapacityMode, CliError> {
    let method = a.method.or(file.method).unwrap_or(Method::Closed);
    ctx.record("method", method);
    match method {
        Method::Closed => Ok(CapacityMode::Deterministic),
        Method::Mc => {
            let seed = ctx.require_seed("--method mc")?;
            let n_samples = a.n_samples.or(file.n_samples).unwrap_or(DEFAULT_MC_SAMPLES);
            if n_samples == 0 {
                return Err(CliError::Validation("n_samples: must be at least 1".into()));
            }
            ctx.record("n_samples", n_samples);
            Ok(CapacityMode::MonteCarlo { n_samples, seed })
        }
    }
}

fn ebw(a: EbwArgs, mut file: FileParams, ctx: &mut Ctx, sink: &mut Sink) -> Result<(), CliError> {
    let src = source(a.source.source, &mut file, ctx)?;
    let thetas = thetas(a.theta, &mut file, ctx)?;
    let mut table = Table::new(&["theta", "a_star", "a_star_spectral", "error"]);
    for theta in thetas {
        let closed = src.effective_bandwidth(theta);
        let spectral = src.effective_bandwidth_spectral(theta);
        let error = match (&closed, &spectral) {
            (Err(e), _) | (_, Err(e)) => Cell::Text(e.to_string()),
            _ => Cell::Empty,
        };
        table.push(vec![Cell::Input(theta), ok_num(&closed, |x| *x), ok_num(&spectral, |x| *x), error]);
    }
    emit_table(sink, "ebw", &table, ctx.format)
}

fn ecap(a: EcapArgs, mut file: FileParams, ctx: &mut Ctx, sink: &mut Sink) -> Result<(), CliError> {
    let spec = channel(a.channel.channel, &mut file, ctx)?;
    let thetas = thetas(a.theta, &mut file, ctx)?;
    let snrs = snrs_db(a.snr_db, &mut file, ctx)?;
    let mode = capacity_mode(a.capacity, &file, ctx)?;
    let cells = map_range(thetas.len() * snrs.len(), Execution::Parallel, |k| {
        let (theta, snr_db) = (thetas[k / snrs.len()], snrs[k % snrs.len()]);
        (theta, snr_db, capacity_at(&spec, db_to_linear(snr_db), theta, mode))
    });
    let mut table = Table::new(&["theta", "snr_db", "c_e", "c_e_std_error", "method", "error"]);
    for (theta, snr_db, r) in cells {
        table.push(vec![
            Cell::Input(theta),
            Cell::Input(snr_db),
            ok_num(&r, |c| c.value),
            ok_num(&r, |c| c.std_error),
            r.as_ref().map_or(Cell::Empty, |c| Cell::Text(label(c.method))),
            err_cell(&r),
        ]);
    }
    emit_table(sink, "ecap", &table, ctx.format)
}

fn throughput(a: ThroughputArgs, mut file: FileParams, ctx: &mut Ctx, sink: &mut Sink) -> Result<(), CliError> {
    let src = source(a.source.source, &mut file, ctx)?;
    let spec = channel(a.channel.channel, &mut file, ctx)?;
    let thetas = thetas(a.theta, &mut file, ctx)?;
    let snrs = snrs_db(a.snr_db, &mut file, ctx)?;
    let mode = capacity_mode(a.capacity, &file, ctx)?;
    let linear: Vec<f64> = snrs.iter().map(|&d| db_to_linear(d)).collect();
    let cells = throughput_sweep(&src, &spec, &thetas, &linear, mode, Execution::Parallel);
    let mut table = Table::new(&[
        "theta",
        "snr_db",
        "c_e",
        "c_e_std_error",
        "r_avg_star",
        "lambda_star",
        "ce_method",
        "rate_method",
        "error",
    ]);
    for (k, cell) in cells.iter().enumerate() {
        let r = &cell.result;
        table.push(vec![
            Cell::Input(cell.theta),
            Cell::Input(snrs[k % snrs.len()]),
            ok_num(r, |x| x.ce),
            ok_num(r, |x| x.ce_std_error),
            ok_num(r, |x| x.r_avg_star),
            ok_num(r, |x| x.lambda_star),
            r.as_ref().map_or(Cell::Empty, |x| Cell::Text(label(x.ce_method))),
            r.as_ref().map_or(Cell::Empty, |x| Cell::Text(label(x.rate_method))),
            err_cell(r),
        ]);
    }
    emit_table(sink, "throughput", &table, ctx.format)
}

fn energy(a: EnergyArgs, mut file: FileParams, ctx: &mut Ctx, sink: &mut Sink) -> Result<(), CliError> {
    let src = source(a.source.source, &mut file, ctx)?;
    let spec = channel(a.channel.channel, &mut file, ctx)?;
    let file_theta = file.theta.take().map(|v| scalar(v, "theta")).transpose()?;
    let theta = grid(vec![required(a.theta, file_theta, "theta")?], "theta", true)?[0];
    ctx.record("theta", theta);
    let snrs = snrs_db(a.snr_db, &mut file, ctx)?;
    let kind = label(src.family());

    let linear: Vec<f64> = snrs.iter().map(|&d| db_to_linear(d)).collect();
    let cells = throughput_sweep(&src, &spec, &[theta], &linear, CapacityMode::Deterministic, Execution::Parallel);
    let mut curve = Table::new(&["kind", "theta", "snr_db", "ebn0_db", "rate_per_symbol", "error"]);
    for (cell, &snr_db) in cells.iter().zip(&snrs) {
        let point = cell.result.as_ref().ok().map(|r| (r.r_avg_star, ebn0_point(cell.snr, spec.m, r.r_avg_star)));
        let (ebn0, rate, error) = match (&cell.result, point) {
            (Err(e), _) => (Cell::Empty, Cell::Empty, Cell::Text(e.to_string())),
            (Ok(_), Some((_, Some(p)))) => (Cell::Num(p.ebn0_db), Cell::Num(p.normalized_rate), Cell::Empty),
            (Ok(_), _) => (Cell::Empty, Cell::Num(0.0), Cell::Text("zero throughput".into())),
        };
        curve.push(vec![Cell::Text(kind.clone()), Cell::Input(theta), Cell::Input(snr_db), ebn0, rate, error]);
    }

    let metrics = match energy_metrics(&src, &spec, theta) {
        Ok(m) => json!({
            "kind": kind,
            "theta": theta,
            "ebn0_min_linear": m.ebn0_min_linear,
            "ebn0_min_db": m.ebn0_min_db,
            "wideband_slope": m.wideband_slope,
            "provenance": m.provenance,
            "error": null,
        }),
        Err(e) => {
            let attempted = if src.has_closed_form() {
                MetricsProvenance::ClosedForm
            } else {
                MetricsProvenance::Numeric
            };
            json!({
                "kind": kind,
                "theta": theta,
                "ebn0_min_linear": null,
                "ebn0_min_db": null,
                "wideband_slope": null,
                "provenance": attempted,
                "error": e.to_string(),
            })
        }
    };
    eprintln!(
        "ebn0_min_db {} wideband_slope {} ({})",
        metrics["ebn0_min_db"], metrics["wideband_slope"], metrics["provenance"].as_str().unwrap_or("")
    );
    if sink.to_files() {
        emit_table(sink, "energy_curve", &curve, ctx.format)?;
        sink.emit("energy_metrics.json", &json_bytes(&metrics)?)
    } else {
        match ctx.format {
            Format::Csv => sink.emit("", &curve.to_csv()?),
            Format::Json => sink.emit("", &json_bytes(&json!({ "metrics": metrics, "curve": curve.to_json() }))?),
        }
    }
}

#[derive(Serialize)]
struct SimOutput {
    theta: Option<f64>,
    lambda: Option<f64>,
    effective_capacity: Option<f64>,
    predicted_delay_slope: Option<f64>,
    report: effcap::queuesim::QueueSimReport,
    varsigma: effcap::queuesim::VarsigmaEstimate,
}

fn simulate(a: SimulateArgs, mut file: FileParams, ctx: &mut Ctx, sink: &mut Sink) -> Result<(), CliError> {
    let src = source(a.source.source, &mut file, ctx)?;
    let spec = channel(a.channel.channel, &mut file, ctx)?;
    let file_snr = file.snr_db.take().map(|v| scalar(v, "snr_db")).transpose()?;
    let snr_db = grid(vec![required(a.snr_db, file_snr, "snr_db")?], "snr_db", false)?[0];
    ctx.record("snr_db", snr_db);
    let file_theta = file.theta.take().map(|v| scalar(v, "theta")).transpose()?;
    let theta = match a.theta.or(file_theta) {
        Some(t) => Some(grid(vec![t], "theta", true)?[0]),
        None => None,
    };
    ctx.record("theta", theta);
    let n_blocks = a.n_blocks.or(file.n_blocks).unwrap_or(DEFAULT_SIM_BLOCKS);
    ctx.record("n_blocks", n_blocks);
    let seed = ctx.require_seed("simulate")?;
    let q_thresholds = a.q_thresholds.or(file.q_thresholds.take());
    let d_thresholds = a.d_thresholds.or(file.d_thresholds.take());
    if let Some(q) = &q_thresholds {
        ctx.record("q_thresholds", q);
    }
    if let Some(d) = &d_thresholds {
        ctx.record("d_thresholds", d);
    }

    let snr = db_to_linear(snr_db);
    let (src, lambda, ce) = match theta {
        Some(t) => {
            let ce = effective_capacity(&spec, snr, t)?.value;
            let r = max_avg_rate(&src, t, ce)?;
            (src.at_lambda(r.lambda_star), Some(r.lambda_star), Some(ce))
        }
        None => (src, None, None),
    };
    let cfg = SimConfig {
        q_thresholds,
        d_thresholds,
        ..SimConfig::new(src, spec, snr, n_blocks, seed)
    };
    let report = simulate_queue(&cfg)?;
    let out = SimOutput {
        theta,
        lambda,
        effective_capacity: ce,
        predicted_delay_slope: theta.zip(ce).map(|(t, c)| t * c),
        varsigma: varsigma_estimate(&report),
        report,
    };
    eprintln!("{}", summary(&out));

    let tail = |cols: &'static [&'static str], pts: &[TailPoint]| {
        let mut t = Table::new(cols);
        for p in pts {
            t.push(vec![Cell::Input(p.threshold), Cell::Num(p.probability), Cell::Int(p.events)]);
        }
        t
    };
    if sink.to_files() {
        sink.emit("simulate_report.json", &json_bytes(&out)?)?;
        emit_table(sink, "simulate_overflow", &tail(&["q", "probability", "events"], &out.report.overflow_points), ctx.format)?;
        emit_table(sink, "simulate_delay", &tail(&["d", "probability", "events"], &out.report.delay_points), ctx.format)
    } else {
        match ctx.format {
            Format::Json => sink.emit("", &json_bytes(&out)?),
            Format::Csv => {
                let mut t = Table::new(&["tail", "threshold", "probability", "events"]);
                for (name, pts) in [("overflow", &out.report.overflow_points), ("delay", &out.report.delay_points)] {
                    for p in pts.iter() {
                        t.push(vec![
                            Cell::Text(name.into()),
                            Cell::Input(p.threshold),
                            Cell::Num(p.probability),
                            Cell::Int(p.events),
                        ]);
                    }
                }
                sink.emit("", &t.to_csv()?)
            }
        }
    }
}

fn summary(out: &SimOutput) -> String {
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    let rel = |sim: Option<f64>, want: Option<f64>| match (sim, want) {
        (Some(s), Some(w)) => format!(" ({:+.1}%)", 100.0 * (s / w - 1.0)),
        _ => String::new(),
    };
    format!(
        "theta_sim {} vs theta {}{}; delay slope {} vs {}{}; varsigma {:.4} (ratio {:.4})",
        fmt(out.report.theta_sim),
        fmt(out.theta),
        rel(out.report.theta_sim, out.theta),
        fmt(out.report.delay_slope_sim),
        fmt(out.predicted_delay_slope),
        rel(out.report.delay_slope_sim, out.predicted_delay_slope),
        out.varsigma.empirical,
        out.varsigma.ratio_approx,
    )
}

fn emit_table(sink: &mut Sink, stem: &str, table: &Table, format: Format) -> Result<(), CliError> {
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    sink.emit(&format!("{stem}.{ext}"), &table.render(format)?)
}
