//! `cutstack`: build, certify and probe cutting-and-stacking towers from a JSON config.
//!
//! Exit codes: 0 success, 1 output I/O failure, 2 invalid input or config, 3 size cap
//! reached (a partial trace is written), 4 corrupt trace, 5 failed certificate or
//! hard invariant.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cutstack::config::RunConfig;
use cutstack::engine::geometric_grid;
use cutstack::manifest::TowerManifest;
use cutstack::scalar::{Mode, Rational, Scalar};
use cutstack::skyscraper::{
    are_diagnostic, check_duality, check_inversion, default_n_grid, hitting_total, integerize, occupation_distribution,
};
use cutstack::splitting::build_split_sequence;
use cutstack::tower::{build_tower, certify_theorem1, dist_csv, TowerTrace};
use cutstack::Error;

#[derive(Parser)]
#[command(name = "cutstack", version, about = "Cutting-and-stacking towers with exact certification")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Run config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in config: example1, twopoint, pareto1 or lognormal.
    #[arg(long, global = true, conflicts_with = "config")]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,
    /// Arithmetic mode (default: exact unless the config forces float).
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Size cap on block lengths.
    #[arg(long, global = true)]
    cap: Option<u64>,
    /// Trace to read (default: DIR/tower.json).
    #[arg(long, global = true, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Replace the first integer block by ones before the skyscraper checks.
    #[arg(long, global = true, hide = true)]
    corrupt_weights: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Cmd {
    /// Dyadic approximation sequence and its cost table.
    Split,
    /// Build the tower and write tower.json.
    Build,
    /// Rebuild a trace, compare and certify the S_k laws.
    Verify,
    /// Skyscraper checks over the integerized tower.
    Skyscraper,
    /// split, build, verify and skyscraper in one run.
    All,
}

struct Failure {
    code: u8,
    msg: String,
}

type Run<T> = std::result::Result<T, Failure>;

fn fail(code: u8, msg: impl Into<String>) -> Failure {
    Failure { code, msg: msg.into() }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse(_) | Error::InvalidParameter(_) | Error::Domain(_) | Error::InvalidSplitting(_) => 2,
            Error::SizeCap { .. } => 3,
            Error::CorruptTrace(_) => 4,
            Error::Io(_) => 1,
            _ => 5,
        };
        fail(code, e.to_string())
    }
}

fn write(path: &Path, contents: &str) -> Run<()> {
    fs::write(path, contents).map_err(|e| fail(1, format!("writing {}: {e}", path.display())))
}

fn write_report(path: &Path, cfg_hash: &str, mode: Mode, body: serde_json::Value) -> Run<()> {
    let doc = serde_json::json!({ "config_hash": cfg_hash, "mode": mode, "report": body });
    write(path, &(serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"))
}

fn load_config(cli: &Cli) -> Run<RunConfig> {
    let mut c = match (&cli.config, &cli.preset) {
        (Some(p), _) => {
            let s = fs::read_to_string(p).map_err(|e| fail(2, format!("reading {}: {e}", p.display())))?;
            RunConfig::from_json(&s)?
        }
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => return Err(fail(2, "no config: pass --config PATH or --preset NAME")),
    };
    if let Some(m) = cli.mode {
        c.mode = Some(m);
    }
    if let Some(cap) = cli.cap {
        c.tower.cap = cap;
    }
    c.validate()?;
    Ok(c)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Run<()> {
    let out = &cli.out;
    let trace_path = cli.trace.clone().unwrap_or_else(|| out.join("tower.json"));
    let needs_config = matches!(cli.cmd, Cmd::Split | Cmd::Build | Cmd::All);
    let cfg = if needs_config || cli.config.is_some() || cli.preset.is_some() { Some(load_config(cli)?) } else { None };
    fs::create_dir_all(out).map_err(|e| fail(1, format!("creating {}: {e}", out.display())))?;

    match cli.cmd {
        Cmd::Split => split(cfg.as_ref().unwrap(), out),
        Cmd::Build => {
            let cfg = cfg.as_ref().unwrap();
            dispatch(cfg.resolve_mode()?, |m| match m {
                Mode::Exact => build::<Rational>(cfg, out).map(|_| ()),
                Mode::Float => build::<f64>(cfg, out).map(|_| ()),
            })
        }
        Cmd::Verify | Cmd::Skyscraper => {
            let text = fs::read_to_string(&trace_path)
                .map_err(|e| fail(4, format!("reading trace {}: {e}", trace_path.display())))?;
            let manifest = TowerManifest::from_json(&text)?;
            let checks = cfg.unwrap_or_else(|| manifest.config.clone());
            match manifest.mode {
                Mode::Exact => from_manifest::<Rational>(cli, &manifest, &checks, out),
                Mode::Float => from_manifest::<f64>(cli, &manifest, &checks, out),
            }
        }
        Cmd::All => {
            let cfg = cfg.as_ref().unwrap();
            split(cfg, out)?;
            match cfg.resolve_mode()? {
                Mode::Exact => all::<Rational>(cli, cfg, out),
                Mode::Float => all::<f64>(cli, cfg, out),
            }
        }
    }
}

fn dispatch(mode: Mode, f: impl FnOnce(Mode) -> Run<()>) -> Run<()> {
    eprintln!("mode: {}", mode.as_str());
    f(mode)
}

fn all<W: Scalar>(cli: &Cli, cfg: &RunConfig, out: &Path) -> Run<()> {
    let trace = build::<W>(cfg, out)?;
    let v = verify_trace(&trace, cfg, out);
    let s = skyscraper(&trace, cfg, out, cli.corrupt_weights);
    v.and(s)
}

fn from_manifest<W: Scalar>(cli: &Cli, manifest: &TowerManifest, checks: &RunConfig, out: &Path) -> Run<()> {
    if !manifest.complete {
        return Err(fail(3, format!("trace is partial: {}", manifest.incomplete.as_deref().unwrap_or("size cap"))));
    }
    eprintln!("rebuilding the trace from its config");
    let trace = build_tower::<W>(&manifest.config.target_dist()?, &manifest.config.tower_params()?)?;
    manifest.ensure_matches(&TowerManifest::from_trace(&trace, &manifest.config))?;
    eprintln!("trace matches its rebuild (top {})", trace.top());
    let mut cfg = manifest.config.clone();
    cfg.verify = checks.verify.clone();
    cfg.skyscraper = checks.skyscraper.clone();
    match cli.cmd {
        Cmd::Verify => verify_trace(&trace, &cfg, out),
        _ => skyscraper(&trace, &cfg, out, cli.corrupt_weights),
    }
}

fn split(cfg: &RunConfig, out: &Path) -> Run<()> {
    let target = cfg.target_dist()?;
    let mode = cfg.resolve_mode()?;
    let eps = cfg.split_report_eps.iter().map(|l| l.as_f64()).collect::<cutstack::Result<Vec<_>>>()?;
    let body = match mode {
        Mode::Exact => split_body::<Rational>(&target, &eps)?,
        Mode::Float => split_body::<f64>(&target, &eps)?,
    };
    let mut csv = String::from("from_depth,to_depth,cost\n");
    for row in body["costs"].as_array().expect("cost rows") {
        csv.push_str(&format!("{},{},{}\n", row["from_depth"], row["to_depth"], row["cost"]));
    }
    write_report(&out.join("split.json"), &cfg.hash(), mode, body)?;
    write(&out.join("split_costs.csv"), &csv)?;
    eprintln!("split: wrote split.json and split_costs.csv");
    Ok(())
}

const MAX_LISTED: usize = 4096;

fn split_body<W: Scalar>(target: &cutstack::splitting::TargetDist, eps: &[f64]) -> Run<serde_json::Value> {
    let mut s = build_split_sequence::<W>(target, eps, 20, 8, false)?;
    if W::MODE == Mode::Exact && s.reps.iter().any(|r| r.rep.finite_values().is_err()) {
        s = build_split_sequence::<W>(target, eps, 20, 8, true)?;
    }
    let seq: Vec<_> = s
        .reps
        .iter()
        .map(|r| {
            let values =
                (r.rep.size() <= MAX_LISTED).then(|| r.rep.values().iter().map(|v| v.render()).collect::<Vec<_>>());
            serde_json::json!({ "depth": r.depth, "size": r.rep.size(), "values": values })
        })
        .collect();
    let costs: Vec<_> = s
        .reps
        .windows(2)
        .zip(&s.costs)
        .map(|(w, c)| serde_json::json!({ "from_depth": w[0].depth, "to_depth": w[1].depth, "cost": c }))
        .collect();
    Ok(serde_json::json!({
        "eps": eps,
        "sequence": seq,
        "costs": costs,
        "tail_proxies": s.tail_proxies,
        "floor_r": s.floor_r.render(),
        "truncated": s.truncated,
    }))
}

fn build<W: Scalar>(cfg: &RunConfig, out: &Path) -> Run<TowerTrace<W>> {
    let target = cfg.target_dist()?;
    let trace = build_tower::<W>(&target, &cfg.tower_params()?)?;
    let manifest = TowerManifest::from_trace(&trace, cfg);
    write(&out.join("tower.json"), &(manifest.to_json() + "\n"))?;
    if let Some(why) = &trace.incomplete {
        return Err(fail(3, format!("partial trace written: {why}")));
    }
    eprintln!("build: {} stages, top {}", trace.stages.len(), trace.top());
    if let Some(s) = trace.stages.iter().find(|s| !s.summary.passed) {
        return Err(fail(5, format!("stage {} certificate failed", s.summary.index)));
    }
    Ok(trace)
}

fn verify_trace<W: Scalar>(trace: &TowerTrace<W>, cfg: &RunConfig, out: &Path) -> Run<()> {
    if !trace.complete {
        return Err(fail(3, "trace is partial"));
    }
    let grid = trace.k_grid(&cfg.verify.k_grid);
    if grid.is_empty() {
        return Err(fail(2, "empty k-grid"));
    }
    eprintln!("verify: certifying {} values of k", grid.len());
    let rep = certify_theorem1(trace, &grid, &cfg.verify.theorem)?;
    let picks: Vec<u64> = if grid.len() <= cfg.verify.csv_points {
        grid.clone()
    } else {
        let idx = geometric_grid(1, grid.len() as u64, cfg.verify.csv_points);
        idx.iter().map(|&i| grid[i as usize - 1]).collect()
    };
    for &k in &picks {
        let d = trace.sk_distribution(k)?;
        write(&out.join(format!("skdist_{k}.csv")), &dist_csv(&d.dist))?;
    }
    let summary = serde_json::json!({
        "k_points": grid.len(),
        "csv_k": picks,
        "passed": rep.passed,
        "v_pass": rep.v_pass,
        "bicycle_pass": rep.bicycle_pass,
        "bicycle_gated": rep.bicycle_gated,
        "ratio_pass": rep.ratio_pass,
        "theorem": rep,
    });
    write_report(&out.join("verify_report.json"), &cfg.hash(), W::MODE, summary)?;
    eprintln!(
        "verify: 𝔳 {} · (🚲) {}{} · b(2k)/b(k) {}",
        verdict(rep.v_pass),
        verdict(rep.bicycle_pass),
        if rep.bicycle_gated { "" } else { " (not gated: Δ_1 ≥ min Y/9)" },
        verdict(rep.ratio_pass)
    );
    if rep.passed {
        Ok(())
    } else {
        Err(fail(5, format!("certificate failed; first witness {:?}", rep.witness)))
    }
}

fn verdict(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "FAIL"
    }
}

fn skyscraper<W: Scalar>(trace: &TowerTrace<W>, cfg: &RunConfig, out: &Path, corrupt: bool) -> Run<()> {
    let sc = &cfg.skyscraper;
    let mut it = integerize(trace, sc.eta_int)?;
    eprintln!("skyscraper: integer scale {} (exact {})", it.scale, it.exact_scale);
    if corrupt {
        it.flatten_block(0)?;
    }

    // duality and the two a_1 computations on a tower small enough for exhaustive checks
    let small = if it.height() <= sc.duality_max_height { it.clone() } else { it.prefix_tower(sc.duality_max_height)? };
    let duality = check_duality(&small, sc.duality_max_height)?;
    let horizon = small.blocks().iter().map(|b| b.iter().sum::<u64>()).max().unwrap_or(1) * 2;
    let mut a1_rows = Vec::new();
    for n in geometric_grid(1, horizon, 6) {
        let occ: u64 = small.occupation_counts(n).iter().map(|&(s, c)| s * c).sum();
        let hit = hitting_total(&small, n)?;
        a1_rows.push(serde_json::json!({ "n": n, "from_occupation": occ, "from_hitting": hit, "equal": occ == hit }));
    }
    let a1_ok = a1_rows.iter().all(|r| r["equal"] == true);

    let grid = default_n_grid(&it, sc.n_points, sc.n_top_points)?;
    let inv = check_inversion(&it, &grid, sc.inversion_tol, &sc.tail_x, sc.tail_constant)?;
    for &n in &grid.top {
        let occ = occupation_distribution(&it, n, &[], sc.tail_constant)?;
        write(&out.join(format!("occupation_{n}.csv")), &occ.csv())?;
    }
    let mut alphas = sc.alphas.clone();
    if sc.sup_norm {
        alphas.push(f64::INFINITY);
    }
    let are = are_diagnostic(&it, &alphas, &grid, &sc.t_grid, sc.tail_constant)?;
    let ratio_ok = are.tables.iter().filter_map(|t| t.top_ratio_gap).all(|g| g <= sc.moment_tol);
    let sup_ok = are.tables.iter().all(|t| t.sup_checks.iter().all(|s| s.pass));

    let body = serde_json::json!({
        "scale": it.scale,
        "exact_scale": it.exact_scale,
        "perturbation": it.perturbation,
        "corrupted": corrupt,
        "duality": { "height": small.height(), "report": duality },
        "a1_consistency": a1_rows,
        "n_grid": grid,
        "inversion": inv,
        "conservative": true,
    });
    write_report(&out.join("inversion_report.json"), &cfg.hash(), W::MODE, body)?;
    let are_body = serde_json::json!({ "tables": are.tables, "moment_tol": sc.moment_tol, "ratio_pass": ratio_ok, "sup_pass": sup_ok });
    write_report(&out.join("are_report.json"), &cfg.hash(), W::MODE, are_body)?;
    eprintln!(
        "skyscraper: duality {} · a_1 {} · (✈) {} · 𝔳 trend {} (top max {:.4}) · moment ratios {} · u_α bounds {}",
        verdict(duality.failures == 0),
        verdict(a1_ok),
        verdict(inv.tail_pass),
        verdict(inv.trend_pass),
        inv.top_max_v,
        verdict(ratio_ok),
        verdict(sup_ok)
    );
    if duality.failures > 0 {
        return Err(fail(5, format!("duality fails at {:?}", duality.witness)));
    }
    if !a1_ok {
        return Err(fail(5, "a_1 computations disagree"));
    }
    if !inv.tail_pass {
        let w = inv
            .rows
            .iter()
            .find_map(|r| r.tail_checks.iter().find(|t| !t.pass).map(|t| (r.n, t.x, t.lhs.clone(), t.rhs)));
        return Err(fail(5, format!("tail bound violated at (n, x, lhs, rhs) = {w:?}")));
    }
    Ok(())
}
