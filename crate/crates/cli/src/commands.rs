use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use ssolab::dynamics::gfc::GfcParams;
use ssolab::modal_id::{self, PronyEstimate};
use ssolab::netmodel::spec::{bundled, parse_system};
use ssolab::netmodel::{initialize_states, run_power_flow, Prepared};
use ssolab::report::{self, CompassRow, ModeRecord, PronyReport, RunManifest};
use ssolab::smallsignal::{self, classify_grouping, GroupingLabel, SsoBand};
use ssolab::timedomain::{self, ChannelKind, Scenario};
use ssolab::{Framework, SystemSpec};

use crate::error::CliError;
use crate::{Cli, Command, FrameworkArg};

/// Prominence (dB) a σ_max peak needs to count as a resonance.
const PEAK_PROMINENCE_DB: f64 = 3.0;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if !(1..=3).contains(&cli.pade) {
        return Err(CliError::Usage(format!("--pade must be 1, 2 or 3, got {}", cli.pade)));
    }
    match &cli.command {
        Command::Pf { spec } => cmd_pf(cli, spec),
        Command::Modes { spec, threshold } => cmd_modes(cli, spec, *threshold),
        Command::Sv { spec, fmin, fmax, points } => cmd_sv(cli, spec, *fmin, *fmax, *points),
        Command::Sweep { spec, tau } => cmd_sweep(cli, spec, &tau.0),
        Command::Sim { spec, scenario } => cmd_sim(cli, spec, scenario.as_deref()),
        Command::Prony {
            csv,
            channel,
            window,
            order,
            pencil,
        } => cmd_prony(cli, csv, channel, *window, *order, *pencil),
        Command::Classify { compass, threshold } => cmd_classify(cli, compass, *threshold),
    }
}

fn jobs(cli: &Cli) -> usize {
    cli.jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn now() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Reads a configuration file; a bare bundled case name (`case4` or
/// `case4.json`) that is not a file falls back to the embedded copy.
fn load_spec(arg: &str) -> Result<SystemSpec, CliError> {
    let path = Path::new(arg);
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            let stem = arg.strip_suffix(".json").unwrap_or(arg);
            match bundled::by_name(stem) {
                Some(doc) if !arg.contains(['/', '\\']) => doc.to_string(),
                _ => return Err(CliError::Usage(format!("{arg}: {e}"))),
            }
        }
    };
    Ok(parse_system(&text)?)
}

fn framework_of(arg: Option<FrameworkArg>, spec: &SystemSpec) -> Result<Framework, CliError> {
    match arg {
        None => Ok(spec.framework),
        Some(FrameworkArg::Spc) => Ok(Framework::Spc),
        Some(FrameworkArg::Qpc) => Ok(Framework::Qpc),
        Some(FrameworkArg::Both) => Err(CliError::Usage("--framework both is only valid for sv".into())),
    }
}

/// Applies the global overrides; returns the effective droop delay.
fn configure(cli: &Cli, spec: &mut SystemSpec, framework: Framework) -> f64 {
    spec.framework = framework;
    if let Some(t) = cli.tau_p {
        spec.set_tau_p(t);
    }
    spec.machines
        .iter()
        .find_map(|m| m.gfc_params().map(|p| p.tau_p))
        .unwrap_or(spec.defaults.gfc.tau_p)
}

#[derive(Serialize)]
struct LedgerInput<'a> {
    command: &'a str,
    spec: Value,
    framework: &'a str,
    tau_p: f64,
    pade: usize,
    args: Value,
}

/// Output directory bookkeeping for one command.
struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn start(cli: &Cli, command: &str, source: &str, framework: &str, tau_p: f64, spec: Value, args: Value) -> Result<Run, CliError> {
        let hash = report::ledger_hash(&LedgerInput {
            command,
            spec,
            framework,
            tau_p,
            pade: cli.pade,
            args,
        })?;
        fs::create_dir_all(&cli.out_dir).map_err(|e| CliError::Usage(format!("{}: {e}", cli.out_dir.display())))?;
        Ok(Run {
            dir: cli.out_dir.clone(),
            manifest: RunManifest {
                spec_path: source.to_string(),
                framework: framework.to_string(),
                tau_p,
                command: command.to_string(),
                ledger_hash: hash,
                outputs: Vec::new(),
                started: now(),
                finished: 0,
            },
        })
    }

    fn hash(&self) -> &str {
        &self.manifest.ledger_hash
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn write_svg(&mut self, name: &str, svg: &str) -> Result<(), CliError> {
        let tagged = svg.replacen('\n', &format!("\n<!-- ledger_hash={} -->\n", self.hash()), 1);
        self.write(name, &tagged)
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.manifest.finished = now();
        let text = report::to_json(&self.manifest)?;
        let path = self.dir.join(format!("{}.manifest.json", self.manifest.command));
        fs::write(&path, text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Ok(())
    }
}

fn spec_value(spec: &SystemSpec) -> Result<Value, CliError> {
    serde_json::to_value(spec).map_err(|e| CliError::Usage(e.to_string()))
}

fn cmd_pf(cli: &Cli, arg: &str) -> Result<(), CliError> {
    let mut spec = load_spec(arg)?;
    let fw = framework_of(cli.framework, &spec)?;
    let tau = configure(cli, &mut spec, fw);
    let mut run = Run::start(cli, "pf", arg, fw.as_str(), tau, spec_value(&spec)?, Value::Null)?;
    let pf = run_power_flow(&spec)?;
    let rep = pf.report();
    println!("converged in {} iterations, mismatch {:.3e} pu", rep.iterations, rep.mismatch);
    println!("tie-line flow {:.4} pu", rep.tie_flow_pu);
    let doc = json!({ "ledger_hash": run.hash(), "power_flow": rep });
    run.write("pf.json", &report::to_json(&doc)?)?;
    run.finish()
}

fn prepare(spec: &SystemSpec) -> Result<Prepared, CliError> {
    Ok(initialize_states(spec)?)
}

fn gfc_params(p: &Prepared) -> Vec<(String, GfcParams)> {
    p.model.gfcs.iter().map(|g| (g.id.clone(), g.params.clone())).collect()
}

#[derive(Serialize)]
struct ModesDoc {
    ledger_hash: String,
    framework: Framework,
    tau_p: f64,
    pade: usize,
    band: SsoBand,
    threshold: f64,
    n_states: usize,
    defective: bool,
    sso_modes: usize,
    gfc_params: Vec<(String, GfcParams)>,
    modes: Vec<ModeRecord>,
}

fn cmd_modes(cli: &Cli, arg: &str, threshold: f64) -> Result<(), CliError> {
    let mut spec = load_spec(arg)?;
    let fw = framework_of(cli.framework, &spec)?;
    let tau = configure(cli, &mut spec, fw);
    let mut run = Run::start(cli, "modes", arg, fw.as_str(), tau, spec_value(&spec)?, json!({ "threshold": threshold }))?;
    let p = prepare(&spec)?;
    let lin = smallsignal::linearize(&p.model, &p.op, cli.pade)?;
    let ma = smallsignal::eig_modes(&lin)?;
    let band = SsoBand::default();
    let mut records = Vec::new();
    let mut compass = Vec::new();
    for (k, m) in ma.modes.iter().enumerate() {
        let mode_id = k + 1;
        let sso = band.contains(m);
        let mut grouping = None;
        let grouped = m.is_oscillatory() && m.zeta < band.zeta_max && m.f_hz <= band.f_max;
        if grouped && !ma.defective() {
            let shape = smallsignal::mode_shape(&lin, &ma, m)?;
            if sso {
                compass.extend(CompassRow::from_shape(mode_id, m, &shape));
            }
            grouping = Some(classify_grouping(&shape, threshold));
        }
        records.push(ModeRecord {
            mode_id,
            f_hz: m.f_hz,
            zeta_pct: m.zeta_pct(),
            sigma: m.sigma,
            omega: m.omega,
            sso,
            dominant_states: smallsignal::dominant_states(&lin, &ma, m.index, 5),
            grouping,
        });
    }
    let sso_count = records.iter().filter(|r| r.sso).count();
    println!("{} states, {} modes, {} in the SSO band", lin.n_states(), records.len(), sso_count);
    for r in records.iter().filter(|r| r.sso) {
        let label = r.grouping.as_ref().map_or("-", |g| g.kind.as_str());
        println!("  mode {:>3}: {:8.3} Hz  zeta {:+7.3} %  {label}", r.mode_id, r.f_hz, r.zeta_pct);
    }
    if ma.defective() {
        eprintln!("warning: state matrix is defective; shapes and grouping omitted");
    }
    let doc = ModesDoc {
        ledger_hash: run.hash().to_string(),
        framework: fw,
        tau_p: tau,
        pade: cli.pade,
        band,
        threshold,
        n_states: lin.n_states(),
        defective: ma.defective(),
        sso_modes: sso_count,
        gfc_params: gfc_params(&p),
        modes: records,
    };
    run.write("modes.json", &report::to_json(&doc)?)?;
    let text = report::compass_csv(&compass, run.hash())?;
    run.write("compass.csv", &text)?;
    run.finish()
}

fn cmd_sv(cli: &Cli, arg: &str, fmin: f64, fmax: f64, points: usize) -> Result<(), CliError> {
    if !(fmin > 0.0) || !(fmin < fmax) || points == 0 {
        return Err(CliError::Usage(format!("need 0 < fmin < fmax and points >= 1 (got {fmin}, {fmax}, {points})")));
    }
    let mut spec = load_spec(arg)?;
    let frameworks = match cli.framework {
        None | Some(FrameworkArg::Both) => vec![Framework::Spc, Framework::Qpc],
        Some(a) => vec![framework_of(Some(a), &spec)?],
    };
    let label = if frameworks.len() == 2 { "both" } else { frameworks[0].as_str() };
    let tau = configure(cli, &mut spec, frameworks[0]);
    let args = json!({ "fmin": fmin, "fmax": fmax, "points": points });
    let mut run = Run::start(cli, "sv", arg, label, tau, spec_value(&spec)?, args)?;
    let grid = smallsignal::log_grid(fmin, fmax, points);
    let band = SsoBand::default();
    let base = prepare(&spec)?;
    let mut curves = Vec::new();
    for fw in frameworks {
        let p = if fw == base.spec.framework { base.clone() } else { base.with_framework(fw)? };
        let lin = smallsignal::linearize(&p.model, &p.op, cli.pade)?;
        let curve = smallsignal::sigma_max_db(&lin, &grid, jobs(cli))?;
        let (xs, ys): (Vec<f64>, Vec<f64>) = curve.iter().copied().unzip();
        let resonances: Vec<String> = smallsignal::peaks(&xs, &ys)
            .into_iter()
            .filter(|pk| pk.x >= band.f_min && pk.x <= band.f_max && pk.prominence >= PEAK_PROMINENCE_DB)
            .map(|pk| format!("{:.2} Hz ({:.1} dB prominence)", pk.x, pk.prominence))
            .collect();
        println!("{}: {} in-band resonance(s) {}", fw.as_str().to_uppercase(), resonances.len(), resonances.join(", "));
        let text = report::sv_csv(&curve, run.hash())?;
        run.write(&format!("sv_{}.csv", fw.as_str()), &text)?;
        curves.push((fw.as_str().to_uppercase(), curve));
    }
    run.write_svg("sv.svg", &report::sv_plot(&curves, (band.f_min, band.f_max)).to_svg())?;
    run.finish()
}

fn cmd_sweep(cli: &Cli, arg: &str, taus: &[f64]) -> Result<(), CliError> {
    let mut spec = load_spec(arg)?;
    let fw = framework_of(cli.framework, &spec)?;
    let tau = configure(cli, &mut spec, fw);
    let mut run = Run::start(cli, "sweep", arg, fw.as_str(), tau, spec_value(&spec)?, json!({ "taus": taus }))?;
    let p = prepare(&spec)?;
    let sweep = smallsignal::delay_sweep(&p.model, &p.op, taus, cli.pade, SsoBand::default(), jobs(cli))?;
    if sweep.points.is_empty() {
        eprintln!("warning: no SSO-band mode at the first delay; nothing to track");
    }
    for id in sweep.mode_ids() {
        let row: Vec<String> = sweep
            .track(id)
            .iter()
            .map(|pt| format!("{:.0}ms {:.2}Hz/{:+.2}%{}", pt.tau * 1e3, pt.f_hz, 100.0 * pt.zeta, if pt.discontinuity { "!" } else { "" }))
            .collect();
        println!("mode {id}: {}", row.join("  "));
    }
    if sweep.has_discontinuity() {
        eprintln!("warning: tracking lost at flagged rows (frequency jump > 5 Hz)");
    }
    let text = report::loci_csv(&sweep, run.hash())?;
    run.write("loci.csv", &text)?;
    run.write_svg("loci.svg", &report::loci_plot(&sweep).to_svg())?;
    run.finish()
}

fn cmd_sim(cli: &Cli, arg: &str, scenario: Option<&Path>) -> Result<(), CliError> {
    let scn: Scenario = match scenario {
        Some(path) => serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
        None => Scenario::new(1.0),
    };
    let mut spec = load_spec(arg)?;
    let fw = framework_of(cli.framework, &spec)?;
    let tau = configure(cli, &mut spec, fw);
    let args = serde_json::to_value(&scn).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut run = Run::start(cli, "sim", arg, fw.as_str(), tau, spec_value(&spec)?, args)?;
    let p = prepare(&spec)?;
    let mut ts = timedomain::simulate(&p.model, &p.op, &scn)?;
    let ids: Vec<String> = p.model.gfcs.iter().map(|g| g.id.clone()).collect();
    for id in &ids {
        let c = timedomain::derive_channel(&ts, ChannelKind::Frequency, id)?;
        ts.channels.push(c);
    }
    let doc = json!({
        "ledger_hash": run.hash(),
        "meta": ts.meta,
        "diverged": ts.diverged,
        "samples": ts.time.len(),
        "channels": ts.channels.iter().map(|c| json!({ "name": c.name, "unit": c.unit })).collect::<Vec<_>>(),
    });
    let text = report::timeseries_csv(&ts, run.hash())?;
    run.write("timeseries.csv", &text)?;
    run.write("timeseries.json", &report::to_json(&doc)?)?;
    run.write_svg("freq.svg", &report::freq_plot(&ts).to_svg())?;
    let t_end = ts.time.last().copied().unwrap_or(0.0);
    println!("{} samples to t = {t_end:.4} s, {} channels", ts.time.len(), ts.channels.len());
    let diverged = ts.diverged;
    run.finish()?;
    if diverged {
        return Err(CliError::Numeric(format!("timedomain: simulation diverged at t = {t_end:.4} s")));
    }
    Ok(())
}

fn cmd_prony(cli: &Cli, csv: &Path, channel: &str, window: (f64, f64), order: usize, pencil: bool) -> Result<(), CliError> {
    let text = read_text(csv)?;
    let source = csv.display().to_string();
    let args = json!({ "data": report::ledger_hash(&text)?, "channel": channel, "window": window, "order": order, "pencil": pencil });
    let mut run = Run::start(cli, "prony", &source, "", 0.0, Value::Null, args)?;
    let (time, values) = report::csv_channel(&text, channel)?;
    let est: PronyEstimate = if pencil {
        modal_id::matrix_pencil(&time, &values, window, order)?
    } else {
        modal_id::prony_fit(&time, &values, window, order)?
    };
    let dominant = modal_id::dominant_mode(&est, modal_id::SSO_BAND).ok();
    match &dominant {
        Some(m) => println!("dominant SSO mode {:.4} Hz, zeta {:+.4} %", m.f_hz, 100.0 * m.zeta),
        None => println!("no SSO-band mode"),
    }
    let doc = PronyReport {
        source,
        channel: channel.to_string(),
        ledger_hash: run.hash().to_string(),
        estimate: &est,
        dominant_sso: dominant,
    };
    run.write("prony.json", &report::to_json(&doc)?)?;
    run.finish()
}

#[derive(Serialize)]
struct GroupingEntry {
    mode_id: usize,
    f_hz: f64,
    zeta_pct: f64,
    label: GroupingLabel,
}

fn cmd_classify(cli: &Cli, compass: &Path, threshold: f64) -> Result<(), CliError> {
    let text = read_text(compass)?;
    let source = compass.display().to_string();
    let args = json!({ "data": report::ledger_hash(&text)?, "threshold": threshold });
    let mut run = Run::start(cli, "classify", &source, "", 0.0, Value::Null, args)?;
    let rows = report::read_compass_csv(&text)?;
    let mut ids: Vec<usize> = rows.iter().map(|r| r.mode_id).collect();
    ids.dedup();
    let entries: Vec<GroupingEntry> = ids
        .into_iter()
        .map(|id| {
            let mine: Vec<&CompassRow> = rows.iter().filter(|r| r.mode_id == id).collect();
            let shape: Vec<_> = mine.iter().map(|r| r.shape_component()).collect();
            GroupingEntry {
                mode_id: id,
                f_hz: mine[0].f_hz,
                zeta_pct: mine[0].zeta_pct,
                label: classify_grouping(&shape, threshold),
            }
        })
        .collect();
    for e in &entries {
        println!(
            "mode {:>3}: {:8.3} Hz  {}  {{{}}} vs {{{}}}",
            e.mode_id,
            e.f_hz,
            e.label.kind.as_str(),
            e.label.group_a.join(","),
            e.label.group_b.join(",")
        );
    }
    let doc = json!({ "ledger_hash": run.hash(), "source": source, "threshold": threshold, "modes": entries });
    run.write("grouping.json", &report::to_json(&doc)?)?;
    run.finish()
}
