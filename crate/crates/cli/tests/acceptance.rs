//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any of them fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssolab::modal_id::{dominant_mode, envelope_ratio, prony_fit, SSO_BAND};
use ssolab::netmodel::spec::{bundled, parse_system};
use ssolab::netmodel::{initialize_states, Prepared};
use ssolab::phasor::{from_space_phasor, inverse_park_matrix, park_matrix, to_space_phasor, zero_sequence};
use ssolab::smallsignal::{
    self, classify_grouping, delay_sweep, eig_matrix, log_grid, modes_at, normalize_shape, pade_delay, peaks, sigma_max_db, GroupingKind,
    Mode, ShapeComponent, SsoBand, GROUPING_THRESHOLD,
};
use ssolab::timedomain::{simulate, Scenario};
use ssolab::{Framework, SystemSpec};

const BIN: &str = env!("CARGO_BIN_EXE_ssolab");
const TAUS: [f64; 6] = [0.0, 1e-3, 2e-3, 3e-3, 5e-3, 10e-3];
const PRONY_WINDOW: (f64, f64) = (0.12, 0.6);
const PRONY_ORDER: usize = 40;
const SIM_LENGTH: f64 = 0.6;
const ENVELOPE_MAX: f64 = 8.0;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn spec(case: &str) -> SystemSpec {
    parse_system(bundled::by_name(case).unwrap()).unwrap()
}

fn prepared(case: &str, fw: Framework) -> Prepared {
    let mut s = spec(case);
    s.framework = fw;
    initialize_states(&s).unwrap()
}

fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn unit_checks() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut park = 0.0f64;
    for _ in 0..1000 {
        let abc = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let rho = rng.gen_range(-10.0..10.0);
        let back = from_space_phasor(to_space_phasor(abc, rho), zero_sequence(abc), rho);
        let (p, q) = (park_matrix(rho), inverse_park_matrix(rho));
        for i in 0..3 {
            park = park.max((back[i] - abc[i]).abs());
            for j in 0..3 {
                let pq: f64 = (0..3).map(|k| q[i][k] * p[k][j]).sum();
                park = park.max((pq - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    check(park <= 1e-12, format!("park round trip {park:e}"))?;

    let ma = eig_matrix(&mat(&[&[0.0, 1.0], &[-4.0, 0.0]])).map_err(|e| e.to_string())?;
    for i in 0..2 {
        let pf = ma.participation_column(i).unwrap();
        let bad = (ma.eigenvalues[i].im.abs() - 2.0).abs() > 1e-12 || ma.eigenvalues[i].re.abs() > 1e-12 || pf.iter().any(|p| (p - 0.5).norm() > 1e-12);
        check(!bad, "harmonic oscillator eigen/participation")?;
    }
    let ma = eig_matrix(&mat(&[&[-1.0, 3.0], &[0.0, -2.0]])).map_err(|e| e.to_string())?;
    let mut lams: Vec<f64> = ma.eigenvalues.iter().map(|l| l.re).collect();
    lams.sort_by(f64::total_cmp);
    check((lams[0] + 2.0).abs() <= 1e-12 && (lams[1] + 1.0).abs() <= 1e-12, "triangular eigenvalues")?;
    for i in 0..2 {
        let pf = ma.participation_column(i).unwrap();
        let k = if (ma.eigenvalues[i].re + 1.0).abs() < 1e-9 { 0 } else { 1 };
        check((pf[k] - 1.0).norm() <= 1e-12 && pf[1 - k].norm() <= 1e-12, "triangular participation")?;
    }

    let (tau, w) = (2e-3, 2.0 * PI * 40.0);
    let mut gain = 0.0f64;
    for order in 1..=3 {
        let p = pade_delay(tau, order).map_err(|e| e.to_string())?;
        for k in 1..=200 {
            gain = gain.max((p.response(Complex64::new(0.0, k as f64 * 10.0)).norm() - 1.0).abs());
        }
    }
    check(gain <= 1e-12, format!("pade gain {gain:e}"))?;
    let ph = pade_delay(tau, 2).unwrap().response(Complex64::new(0.0, w)).arg();
    let phase_err = (ph + w * tau).abs() / (w * tau);
    check(phase_err <= 2e-3, format!("pade phase error {phase_err:e}"))?;

    let (f, zeta): (f64, f64) = (40.0, 0.00199);
    let wn = 2.0 * PI * f / (1.0 - zeta * zeta).sqrt();
    let time: Vec<f64> = (0..=1000).map(|k| k as f64 * 1e-3).collect();
    let y: Vec<f64> = time.iter().map(|t| (-zeta * wn * t).exp() * (2.0 * PI * f * t + 0.3).cos()).collect();
    let est = prony_fit(&time, &y, (0.0, 1.0), 2).map_err(|e| e.to_string())?;
    let m = dominant_mode(&est, SSO_BAND).map_err(|e| e.to_string())?;
    let (ef, ez) = ((m.f_hz / f - 1.0).abs(), (m.zeta / zeta - 1.0).abs());
    check(ef <= 1e-6 && ez <= 1e-6, format!("prony rel error f {ef:e} zeta {ez:e}"))?;

    let secs = t0.elapsed().as_secs_f64();
    check(secs < 5.0, format!("unit checks took {secs:.2} s"))?;
    Ok(format!("park {park:.1e}, pade gain {gain:.1e} phase {:.3}%, prony {ef:.1e}/{ez:.1e}, {secs:.2} s", 100.0 * phase_err))
}

fn equilibrium() -> Outcome {
    let t0 = Instant::now();
    let mut worst_res = 0.0f64;
    let mut worst_drift = 0.0f64;
    let mut runs = 0;
    for (case, _) in bundled::all() {
        for fw in [Framework::Spc, Framework::Qpc] {
            let p = prepared(case, fw);
            let r = p.model.equilibrium_residual(&p.op);
            check(r <= 1e-8, format!("{case} {fw:?} residual {r:e}"))?;
            worst_res = worst_res.max(r);
            let mut scn = Scenario::new(5.0);
            scn.record = p.model.state_names();
            scn.record.extend(p.model.gfcs.iter().map(|g| format!("{}.omega_c", g.id)));
            let ts = simulate(&p.model, &p.op, &scn).map_err(|e| e.to_string())?;
            check(!ts.diverged, format!("{case} {fw:?} diverged"))?;
            for c in &ts.channels {
                let drift = c.values.iter().fold(0.0f64, |m, v| m.max((v - c.values[0]).abs()));
                check(drift <= 1e-6, format!("{case} {fw:?} {} drifted {drift:e}", c.name))?;
                worst_drift = worst_drift.max(drift);
            }
            runs += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check(secs < 120.0, format!("took {secs:.1} s"))?;
    Ok(format!("{runs} runs, residual {worst_res:.1e}, 5 s drift {worst_drift:.1e}, {secs:.1} s"))
}

/// Eigen SSO modes and the pulse response at one delay.
struct DelayPoint {
    tau: f64,
    eig: Vec<Mode>,
    prony: Option<(f64, f64)>,
    envelope: f64,
}

fn delay_points(p: &Prepared) -> Result<Vec<DelayPoint>, String> {
    let band = SsoBand::default();
    let mut out = Vec::new();
    for tau in TAUS {
        let mut model = p.model.clone();
        model.set_tau_p(tau);
        let modes = modes_at(&model, &p.op, tau, 2).map_err(|e| e.to_string())?;
        let eig: Vec<Mode> = band.select(&modes).into_iter().cloned().collect();
        let scn = Scenario::pulse(SIM_LENGTH, "GFC1", 1e-3, 0.01, 0.01);
        let ts = simulate(&model, &p.op, &scn).map_err(|e| e.to_string())?;
        let y = &ts.channel("GFC1.omega_c").ok_or("no GFC1.omega_c")?.values;
        let prony = prony_fit(&ts.time, y, PRONY_WINDOW, PRONY_ORDER)
            .ok()
            .and_then(|est| dominant_mode(&est, SSO_BAND).ok())
            .map(|m| (m.f_hz, m.zeta));
        let weakest = eig.iter().min_by(|a, b| a.zeta.total_cmp(&b.zeta)).ok_or(format!("no SSO mode at {tau}"))?;
        // observe for about four time constants of the weakest mode
        let length = (4.0 / weakest.sigma.abs()).clamp(SIM_LENGTH, ENVELOPE_MAX);
        let long;
        let (time, y) = if length > SIM_LENGTH {
            long = simulate(&model, &p.op, &Scenario::pulse(length, "GFC1", 1e-3, 0.01, 0.01)).map_err(|e| e.to_string())?;
            (&long.time, &long.channel("GFC1.omega_c").ok_or("no GFC1.omega_c")?.values)
        } else {
            (&ts.time, y)
        };
        let early = (0.4 * length, 0.4 * length + 0.1);
        let envelope = envelope_ratio(time, y, weakest.f_hz, early, (length - 0.12, length - 0.02)).map_err(|e| e.to_string())?;
        out.push(DelayPoint { tau, eig, prony, envelope });
    }
    Ok(out)
}

fn linear_vs_nonlinear(points: &[DelayPoint]) -> Outcome {
    let (a, b) = (serde_json::to_value(grid_spec(&GRID[0])).unwrap(), serde_json::to_value(spec("case4")).unwrap());
    check(a == b, "first grid entry is not the bundled default")?;
    let mut worst = (0.0f64, 0.0f64);
    for pt in points {
        let (pf, pz) = pt.prony.ok_or(format!("no Prony mode at {} ms", pt.tau * 1e3))?;
        let m = pt.eig.iter().min_by(|a, b| (a.f_hz - pf).abs().total_cmp(&(b.f_hz - pf).abs())).unwrap();
        let df = (pf / m.f_hz - 1.0).abs();
        let dz = 100.0 * (pz - m.zeta).abs();
        check(
            df <= 0.02 && dz <= 0.5,
            format!("{} ms: prony {pf:.3} Hz/{:.3}% vs eig {:.3} Hz/{:.3}%", pt.tau * 1e3, 100.0 * pz, m.f_hz, m.zeta_pct()),
        )?;
        worst = (worst.0.max(df), worst.1.max(dz));
    }
    Ok(format!("{} delays, max |df| {:.2}%, max |dzeta| {:.3} pp", points.len(), 100.0 * worst.0, worst.1))
}

/// Droop-converter tunings (k_pv, k_iv, k_pc, f_c Hz, m_p); the first is
/// the bundled default.
const GRID: [GridSet; 6] = [
    (0.9, 10.0, 1.0, 100.0, 0.03),
    (0.8, 10.0, 1.0, 100.0, 0.03),
    (0.7, 5.0, 1.27, 100.0, 0.03),
    (1.0, 20.0, 1.0, 100.0, 0.03),
    (0.9, 10.0, 1.27, 100.0, 0.04),
    (0.9, 5.0, 2.0, 100.0, 0.03),
];

type GridSet = (f64, f64, f64, f64, f64);

fn grid_spec(&(kpv, kiv, kpc, fc, mp): &GridSet) -> SystemSpec {
    let mut s = spec("case4");
    s.map_gfc(|g| {
        g.k_pv = kpv;
        g.k_iv = kiv;
        g.k_pc = kpc;
        g.omega_f = 2.0 * PI * fc;
        g.m_p = mp;
    });
    s
}

fn grid_tag(&(kpv, kiv, kpc, fc, mp): &GridSet) -> String {
    format!("k_pv {kpv} k_iv {kiv} k_pc {kpc} f_c {fc} m_p {mp}")
}

fn resonances(p: &Prepared, band: SsoBand) -> Result<usize, String> {
    let lin = smallsignal::linearize(&p.model, &p.op, 2).map_err(|e| e.to_string())?;
    let curve = sigma_max_db(&lin, &log_grid(1.0, 100.0, 600), 1).map_err(|e| e.to_string())?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = curve.into_iter().unzip();
    Ok(peaks(&xs, &ys).iter().filter(|pk| pk.x >= band.f_min && pk.x <= band.f_max && pk.prominence >= 3.0).count())
}

fn framework_contrast() -> Outcome {
    let band = SsoBand::default();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let results = smallsignal::parallel_map(&GRID, jobs, |set| -> Result<(), String> {
        let mut s = grid_spec(set);
        s.set_tau_p(2e-3);
        let tag = grid_tag(set);
        s.framework = Framework::Spc;
        let spc = initialize_states(&s).map_err(|e| e.to_string())?;
        let spc_modes = modes_at(&spc.model, &spc.op, 2e-3, 2).map_err(|e| e.to_string())?;
        check(band.select(&spc_modes).len() >= 2, format!("{tag}: SPC lacks an SSO pair"))?;
        check(resonances(&spc, band)? >= 1, format!("{tag}: no SPC sigma_max peak"))?;
        let qpc = spc.with_framework(Framework::Qpc).map_err(|e| e.to_string())?;
        for tau in TAUS {
            let q = modes_at(&qpc.model, &qpc.op, tau, 2).map_err(|e| e.to_string())?;
            check(band.select(&q).is_empty(), format!("{tag}: QPC SSO mode at {} ms", tau * 1e3))?;
        }
        check(resonances(&qpc, band)? == 0, format!("{tag}: QPC sigma_max peak"))?;
        Ok(())
    });
    for r in results {
        r?;
    }
    Ok(format!("{} parameter sets: SPC pair and peak, QPC none", GRID.len()))
}

fn damping_trend(grid_points: &[Result<Vec<DelayPoint>, String>]) -> Outcome {
    let mut checked = Vec::new();
    let mut ratios = Vec::new();
    for (set, points) in GRID.iter().zip(grid_points) {
        let tag = grid_tag(set);
        let points = points.as_ref().map_err(|e| format!("{tag}: {e}"))?;
        let weakest = |pt: &DelayPoint| pt.eig.iter().map(|m| m.zeta).fold(f64::INFINITY, f64::min);
        if weakest(&points[0]) >= 0.0 {
            continue;
        }
        let mut s = grid_spec(set);
        s.framework = Framework::Spc;
        let p = initialize_states(&s).map_err(|e| e.to_string())?;
        let sweep = delay_sweep(&p.model, &p.op, &TAUS, 2, SsoBand::default(), 1).map_err(|e| e.to_string())?;
        let ids = sweep.mode_ids();
        check(!ids.is_empty(), format!("{tag}: empty sweep"))?;
        for id in &ids {
            let track = sweep.track(*id);
            check(track.len() == TAUS.len(), format!("{tag}: mode {id} lost"))?;
            check(track.windows(2).all(|w| w[1].zeta > w[0].zeta), format!("{tag}: mode {id} damping not increasing"))?;
        }
        for pt in points {
            let zeta = weakest(pt);
            check(
                (pt.envelope > 1.0) == (zeta < 0.0),
                format!("{tag}, {} ms: zeta {:.2}% but envelope ratio {:.3}", pt.tau * 1e3, 100.0 * zeta, pt.envelope),
            )?;
        }
        if checked.is_empty() {
            ratios = points.iter().map(|pt| format!("{:.2}", pt.envelope)).collect();
        }
        checked.push(tag);
    }
    check(!checked.is_empty(), "no parameter set is unstable at zero delay")?;
    Ok(format!("{} of {} sets unstable at 0 ms, all tracks increasing, default envelope ratios [{}]", checked.len(), GRID.len(), ratios.join(", ")))
}

fn shapes_of(p: &Prepared, tau: f64) -> Result<Vec<(Mode, Vec<ShapeComponent>)>, String> {
    let mut model = p.model.clone();
    model.set_tau_p(tau);
    let lin = smallsignal::linearize(&model, &p.op, 2).map_err(|e| e.to_string())?;
    let ma = smallsignal::eig_modes(&lin).map_err(|e| e.to_string())?;
    ma.modes
        .iter()
        .filter(|m| m.is_oscillatory() && m.omega > 0.0 && m.zeta < 0.2 && m.f_hz <= 55.0)
        .map(|m| smallsignal::mode_shape(&lin, &ma, m).map(|s| (m.clone(), s)).map_err(|e| e.to_string()))
        .collect()
}

fn comp(machine: &str, area: u32, deg: f64, mag: f64) -> ShapeComponent {
    ShapeComponent {
        machine: machine.into(),
        area,
        value: Complex64::from_polar(mag, deg.to_radians()),
    }
}

fn grouping() -> Outcome {
    use GroupingKind::*;
    let synthetic: Vec<(&str, Vec<ShapeComponent>, GroupingKind, &[&str])> = vec![
        ("cross 1-4/2-3", vec![comp("GFC1", 1, 0.0, 1.0), comp("GFC4", 2, 10.0, 0.9), comp("GFC2", 1, 178.0, 0.8), comp("GFC3", 2, 185.0, 0.7)], CrossArea, &["GFC1", "GFC4"]),
        ("cross 1-3/2-4", vec![comp("GFC3", 2, 40.0, 0.6), comp("GFC2", 1, 150.0, 0.9), comp("GFC1", 1, -30.0, 1.0), comp("GFC4", 2, -160.0, 0.5)], CrossArea, &["GFC3", "GFC1"]),
        ("intra area 1", vec![comp("GFC1", 1, 0.0, 1.0), comp("GFC2", 1, 180.0, 0.9), comp("GFC3", 2, 30.0, 0.05)], IntraArea, &["GFC1"]),
        ("intra area 2", vec![comp("GFC4", 2, 90.0, 0.7), comp("GFC3", 2, -80.0, 1.0), comp("GFC1", 1, 0.0, 0.1)], IntraArea, &["GFC3"]),
        ("inter", vec![comp("G1", 1, 0.0, 1.0), comp("G2", 1, 20.0, 0.9), comp("G3", 2, 170.0, 0.8), comp("G4", 2, 200.0, 0.6)], InterArea, &["G1", "G2"]),
        ("inter pair", vec![comp("GFC2", 1, 0.0, 0.5), comp("GFC4", 2, 175.0, 1.0)], InterArea, &["GFC4"]),
    ];
    for (name, s, kind, a) in &synthetic {
        let l = classify_grouping(s, GROUPING_THRESHOLD);
        check(l.kind == *kind && l.group_a == *a, format!("{name}: {} {:?}/{:?}", l.kind.as_str(), l.group_a, l.group_b))?;
    }
    let mut fixtures: Vec<(String, Vec<ShapeComponent>, GroupingKind)> = synthetic.into_iter().map(|(n, s, k, _)| (n.to_string(), s, k)).collect();

    let p = prepared("case4", Framework::Spc);
    let band = SsoBand::default();
    let sso: Vec<_> = shapes_of(&p, 2e-3)?.into_iter().filter(|(m, _)| band.contains(m)).collect();
    check(sso.len() >= 2, "case4 lacks an SSO pair")?;
    for (m, s) in sso {
        fixtures.push((format!("case4 {:.2} Hz", m.f_hz), s, GroupingKind::CrossArea));
    }

    let all_sg = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/all_sg.json");
    let sg = initialize_states(&parse_system(&fs::read_to_string(all_sg).unwrap()).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut sg_kinds = Vec::new();
    for (m, s) in shapes_of(&sg, 0.0)? {
        let kind = classify_grouping(&s, GROUPING_THRESHOLD).kind;
        check(matches!(kind, GroupingKind::InterArea | GroupingKind::IntraArea), format!("pure SG {:.2} Hz is {}", m.f_hz, kind.as_str()))?;
        sg_kinds.push(kind);
        fixtures.push((format!("all_sg {:.2} Hz", m.f_hz), s, kind));
    }
    check(sg_kinds.contains(&GroupingKind::InterArea) && sg_kinds.contains(&GroupingKind::IntraArea), "pure SG misses inter or intra")?;

    for (name, s, want) in &fixtures {
        let got = classify_grouping(s, GROUPING_THRESHOLD).kind;
        check(got == *want, format!("{name}: {} instead of {}", got.as_str(), want.as_str()))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trials = 1000;
    for k in 0..trials {
        let (name, s, _) = &fixtures[k % fixtures.len()];
        let key = |l: smallsignal::GroupingLabel| (l.kind, l.group_a, l.group_b);
        let base = key(classify_grouping(s, GROUPING_THRESHOLD));
        let z = Complex64::from_polar(rng.gen_range(0.01..100.0), rng.gen_range(0.0..2.0 * PI));
        let moved: Vec<ShapeComponent> = s.iter().map(|c| ShapeComponent { value: c.value * z, ..c.clone() }).collect();
        check(key(classify_grouping(&moved, GROUPING_THRESHOLD)) == base, format!("{name}: label changed under rotation/scaling"))?;
        check(key(classify_grouping(&normalize_shape(moved), GROUPING_THRESHOLD)) == base, format!("{name}: label changed after normalization"))?;
    }
    Ok(format!("{} fixtures, {trials} random rotations and scalings", fixtures.len()))
}

fn tie_flow() -> Outcome {
    let mut flows = Vec::new();
    for (case, _) in bundled::all() {
        let p = prepared(case, Framework::Spc);
        let t = p.pf.tie_flow();
        check((t / 4.0 - 1.0).abs() <= 0.05, format!("{case}: tie flow {t:.4} pu"))?;
        flows.push(format!("{case} {t:.4}"));
    }
    Ok(format!("tie flow pu: {}", flows.join(", ")))
}

fn cli_run(dir: &Path, args: &[&str]) -> Result<(), String> {
    let o = Command::new(BIN)
        .current_dir(dir)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .args(["--out-dir", "."])
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(o.status.success(), format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
}

fn reproducible() -> Outcome {
    let scn = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/pulse_gfc1.json");
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, jobs) in dirs.iter().zip(["1", "3"]) {
        let d = d.path();
        fs::copy(&scn, d.join("pulse.json")).map_err(|e| e.to_string())?;
        cli_run(d, &["--jobs", jobs, "pf", "case4"])?;
        cli_run(d, &["--jobs", jobs, "--tau-p", "2ms", "modes", "case4"])?;
        cli_run(d, &["--jobs", jobs, "sv", "case4", "--points", "300"])?;
        cli_run(d, &["--jobs", jobs, "sweep", "case4", "--tau", "0,1,2,3,5,10ms"])?;
        cli_run(d, &["--jobs", jobs, "--tau-p", "0ms", "sim", "case4", "--scenario", "pulse.json"])?;
        cli_run(d, &["prony", "timeseries.csv", "--channel", "GFC1.omega_c", "--window", "0.12,0.6", "--order", "40"])?;
        cli_run(d, &["classify", "compass.csv"])?;
    }
    let list = |d: &Path| -> Vec<(String, Vec<u8>)> {
        let mut v: Vec<_> = fs::read_dir(d)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
            })
            .collect();
        v.sort();
        v
    };
    let (a, b) = (list(dirs[0].path()), list(dirs[1].path()));
    check(a.len() == b.len(), "different file sets")?;
    for (x, y) in a.iter().zip(&b) {
        check(x.0 == y.0 && x.1 == y.1, format!("{} differs", x.0))?;
    }
    Ok(format!("{} files byte-identical across two runs", a.len()))
}

fn main() {
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let t0 = Instant::now();
    let grid_points = smallsignal::parallel_map(&GRID, jobs, |set| {
        let mut s = grid_spec(set);
        s.framework = Framework::Spc;
        delay_points(&initialize_states(&s).map_err(|e| e.to_string())?)
    });
    let sim_secs = t0.elapsed().as_secs_f64();
    let results: Vec<(&str, Outcome)> = vec![
        ("unit checks", unit_checks()),
        ("equilibrium and flat start", equilibrium()),
        (
            "linear vs nonlinear",
            match &grid_points[0] {
                Ok(p) => linear_vs_nonlinear(p).map(|m| format!("{m}, {sim_secs:.1} s")),
                Err(e) => Err(e.clone()),
            },
        ),
        ("SPC vs QPC", framework_contrast()),
        ("delay damping trend", damping_trend(&grid_points)),
        ("grouping", grouping()),
        ("tie flow", tie_flow()),
        ("reproducibility", reproducible()),
    ];
    let mut failed = 0;
    for (k, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(msg) => println!("[PASS] {} {name}: {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] {} {name}: {msg}", k + 1)
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
