//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::besov::{
    extrapolate_limit, fit_exponent, onsager_conditions_with_tolerance, richardson_polynomial, scale_ladder, spacetime_vs_space, structure_function,
    StructureMode,
};
use crate::budgets::{compute_budgets, dissipation_fields, pointwise_thermo, smear, viscous_pointwise, BudgetOptions, TestFunction};
use crate::error::{Error, Result};
use crate::fields::{FieldBlock, IBox, Subdomain};
use crate::filter::{build_kernel, Engine};
use crate::io::{read_snapshot, write_snapshot, CsvTable, Provenance, RunConfig};
use crate::report::run_acceptance;
use crate::solver::{becker_profile, integrate_with, preflight, rh_jump, Init, ShockSetup};
use crate::thermo::EosSpec;

/// Margin band within which an exponent condition counts as critical.
const CRITICAL_BAND: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "onsager-lab", version, about = "Coarse-grained budgets, Besov exponents and shock oracles for compressible flow")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to the config's `output_dir`, then `.`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "ONSAGER_LAB_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the configured run and write a snapshot plus metadata.
    Simulate,
    /// Smear every budget term at each configured scale and extrapolate ℓ → 0.
    ScanEll(DataArgs),
    /// Run each configured viscosity and report the smeared dissipation measures.
    ScanEps,
    /// Structure functions, exponent fits and exponent-condition verdicts.
    Besov(DataArgs),
    /// Exact oracles.
    #[command(subcommand)]
    Oracle(Oracle),
    /// Full acceptance run.
    Report {
        /// Exit with status 4 when any criterion fails.
        #[arg(long)]
        check: bool,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Existing snapshot to analyse instead of simulating.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Oracle {
    /// Rankine-Hugoniot states of a stationary shock; `--config` with a shock
    /// initial condition overrides the flags.
    Rh {
        #[arg(long, default_value_t = 2.0)]
        mach: f64,
        /// Ideal-gas `α` (`γ = 1 + 1/α`).
        #[arg(long, default_value_t = 2.5)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        pressure: f64,
    },
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::config("--config", "this command needs a run configuration"))?;
    RunConfig::load(path)
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    let dir = cli.out.clone().or_else(|| cfg.and_then(|c| c.output_dir.as_ref().map(PathBuf::from))).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Shortest round-trip form.
fn num(x: f64) -> String {
    format!("{x:e}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn run(cli: &Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("--threads", "must be >= 1"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Simulate => simulate(cli),
        Command::ScanEll(d) => scan_ell(cli, d),
        Command::ScanEps => scan_eps(cli),
        Command::Besov(d) => besov(cli, d),
        Command::Oracle(Oracle::Rh { mach, alpha, rho, pressure }) => oracle_rh(cli, *mach, *alpha, *rho, *pressure),
        Command::Report { check } => report(cli, *check),
    }
}

fn simulate_block(cfg: &RunConfig) -> Result<(FieldBlock, crate::solver::Diagnostics)> {
    let ns = cfg.ns_config();
    preflight(&ns)?;
    let out = integrate_with(&ns, &cfg.schedule)?;
    Ok((out.block, out.diagnostics))
}

fn simulate(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let prov = Provenance::new(&cfg, cli.seed);
    let (block, diag) = simulate_block(&cfg)?;
    write_snapshot(&dir.join("snapshot.osgf"), &block, &cfg.eos)?;
    write_json(&dir.join("metadata.json"), &json!({ "provenance": prov, "config": cfg, "diagnostics": diag }))?;
    println!("wrote {} snapshots to {}", block.grid.nt, dir.join("snapshot.osgf").display());
    Ok(0)
}

fn load_data(cfg: &RunConfig, data: &DataArgs) -> Result<FieldBlock> {
    match &data.data {
        Some(p) => {
            let (h, block) = read_snapshot(p)?;
            if h.eos != cfg.eos {
                return Err(Error::config("eos", "snapshot was written with a different equation of state"));
            }
            Ok(block)
        }
        None => Ok(simulate_block(cfg)?.0),
    }
}

fn test_functions(cfg: &RunConfig, block: &FieldBlock) -> Result<Vec<TestFunction>> {
    if cfg.analysis.test_functions.is_empty() {
        return Err(Error::config("analysis.test_functions", "at least one test function is required"));
    }
    cfg.analysis.test_functions.iter().map(|t| t.build(&block.grid)).collect()
}

fn support_union(phis: &[TestFunction]) -> IBox {
    phis.iter().skip(1).fold(phis[0].support, |mut b, p| {
        for a in 0..3 {
            b.lo[a] = b.lo[a].min(p.support.lo[a]);
            b.hi[a] = b.hi[a].max(p.support.hi[a]);
        }
        b
    })
}

fn limit_json(xs: &[f64], ys: &[f64]) -> serde_json::Value {
    match extrapolate_limit(xs, ys) {
        Ok(l) => json!({ "limit": l.y_inf, "rate": l.q, "confidence": l.confidence, "hull": l.hull, "clipped": l.clipped }),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn scan_ell(cli: &Cli, data: &DataArgs) -> Result<i32> {
    let cfg = load_config(cli)?;
    if cfg.analysis.ells.is_empty() {
        return Err(Error::config("analysis.ells", "scan-ell needs at least one scale"));
    }
    let dir = out_dir(cli, Some(&cfg))?;
    let prov = Provenance::new(&cfg, cli.seed);
    let block = load_data(&cfg, data)?;
    let phis = test_functions(&cfg, &block)?;
    let opts = BudgetOptions { region: Some(support_union(&phis)), require_viscous: false, engine: Engine::Auto };
    let mut ells = cfg.analysis.ells.clone();
    ells.sort_by(f64::total_cmp);
    let mut series: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for &ell in &ells {
        let k = build_kernel(cfg.analysis.kernel, ell, &block.grid)?;
        let set = compute_budgets(&block, &k, &cfg.eos, &cfg.transport, &opts)?;
        for s in set.smeared(&phis)? {
            series.entry((s.equation, s.term, s.test_fn)).or_default().push(s.value);
        }
    }
    let mut table = CsvTable::new(&["ell", "equation", "term", "test_fn", "value"]);
    let mut limits = Vec::new();
    for ((eq, term, tf), ys) in &series {
        for (l, y) in ells.iter().zip(ys) {
            table.push(vec![num(*l), eq.clone(), term.clone(), tf.clone(), num(*y)]);
        }
        limits.push(json!({ "equation": eq, "term": term, "test_fn": tf, "values": ys, "extrapolation": limit_json(&ells, ys) }));
    }
    std::fs::write(dir.join("scan_ell.csv"), table.render(&prov))?;
    write_json(&dir.join("scan_ell.json"), &json!({ "provenance": prov, "ells": ells, "series": limits }))?;
    println!("{} rows written to {}", table.len(), dir.join("scan_ell.csv").display());
    Ok(0)
}

fn scan_eps(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli)?;
    let mut eps = cfg.analysis.eps_list.clone();
    if eps.len() < 2 {
        return Err(Error::InsufficientScan);
    }
    eps.sort_by(|a, b| b.total_cmp(a));
    let dir = out_dir(cli, Some(&cfg))?;
    let prov = Provenance::new(&cfg, cli.seed);
    let names = ["Sigma", "Q", "p_theta"];
    let mut series: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut oracle = serde_json::Map::new();
    for &e in &eps {
        let run = cfg.with_eps(e);
        let (block, _) = simulate_block(&run)?;
        let phis = test_functions(&run, &block)?;
        let dis = dissipation_fields(&block, &run.eos, &run.transport)?;
        let (p, _) = pointwise_thermo(&block, &run.eos)?;
        let ptheta = p.mul(&viscous_pointwise(&block, &run.eos, &run.transport)?.theta);
        for phi in &phis {
            for (name, f) in names.iter().zip([&dis.sigma, &dis.q, &ptheta]) {
                series.entry((name.to_string(), phi.name.clone())).or_default().push(smear(f, phi)?);
            }
            if let Init::Shock { setup, .. } = &run.init {
                let rh = rh_jump(setup, &run.eos)?;
                let prof = becker_profile(setup, &run.eos, &run.transport, e)?;
                let ti = phi.time_integral_at(0.0, 0.0);
                oracle.insert(
                    phi.name.clone(),
                    json!({ "Sigma": rh.anomaly_entropy * ti, "Q": prof.integrated_q * ti, "p_theta": prof.integrated_p_dilatation * ti }),
                );
            }
        }
    }
    let mut table = CsvTable::new(&["eps", "quantity", "test_fn", "value"]);
    let mut out = Vec::new();
    for ((q, tf), ys) in &series {
        for (e, y) in eps.iter().zip(ys) {
            table.push(vec![num(*e), q.clone(), tf.clone(), num(*y)]);
        }
        let cauchy: Vec<f64> = ys.windows(2).map(|w| (w[1] - w[0]).abs() / w[0].abs()).collect();
        let limit = match richardson_polynomial(&eps, ys) {
            Ok((v, err)) => json!({ "limit": v, "error_estimate": err }),
            Err(e) => json!({ "error": e.to_string() }),
        };
        out.push(json!({ "quantity": q, "test_fn": tf, "values": ys, "successive_relative_change": cauchy, "extrapolation": limit }));
    }
    std::fs::write(dir.join("scan_eps.csv"), table.render(&prov))?;
    write_json(&dir.join("scan_eps.json"), &json!({ "provenance": prov, "eps": eps, "series": out, "oracle": oracle }))?;
    println!("{} rows written to {}", table.len(), dir.join("scan_eps.csv").display());
    Ok(0)
}

fn besov(cli: &Cli, data: &DataArgs) -> Result<i32> {
    let cfg = load_config(cli)?;
    if cfg.analysis.subdomains.is_empty() {
        return Err(Error::config("analysis.subdomains", "besov needs at least one subdomain"));
    }
    let dir = out_dir(cli, Some(&cfg))?;
    let prov = Provenance::new(&cfg, cli.seed);
    let block = load_data(&cfg, data)?;
    let g = block.grid;
    let range = match (cfg.analysis.fit_range, cfg.analysis.ells.is_empty()) {
        (Some(r), _) => r,
        (None, false) => {
            let lo = cfg.analysis.ells.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = cfg.analysis.ells.iter().cloned().fold(0.0, f64::max);
            [lo, hi]
        }
        (None, true) => return Err(Error::config("analysis.fit_range", "give a fit range or a list of scales")),
    };
    let ells = scale_ladder(g.dx[0], range[0], range[1], 12);
    let mut table = CsvTable::new(&["subdomain", "field", "p", "mode", "ell", "value"]);
    let mut summary = Vec::new();
    for sd in &cfg.analysis.subdomains {
        let o = Subdomain::new(&g, sd.index_box(&g)?, &g.full_box())?;
        for &p in &cfg.analysis.p_values {
            let mut fits = BTreeMap::new();
            let mut space_sigma = Vec::new();
            for mode in [StructureMode::SpaceOnly, StructureMode::SpaceTime] {
                let tag = match mode {
                    StructureMode::SpaceOnly => "space",
                    StructureMode::SpaceTime => "spacetime",
                };
                for (f, id) in [(&block.u, "u"), (&block.rho, "rho"), (&block.v[0], "v")] {
                    let key = format!("{tag}:{id}");
                    let sf = match structure_function(f, &o, p, &ells, mode, id) {
                        Ok(sf) => sf,
                        Err(e) => {
                            fits.insert(key, json!({ "error": e.to_string() }));
                            continue;
                        }
                    };
                    for (l, v) in sf.ells.iter().zip(&sf.values) {
                        table.push(vec![sd.name.clone(), id.into(), num(p), tag.into(), num(*l), num(*v)]);
                    }
                    match fit_exponent(&sf, range) {
                        Ok(fit) => {
                            if mode == StructureMode::SpaceOnly {
                                space_sigma.push(fit.sigma);
                            }
                            let mut v = serde_json::to_value(fit).map_err(|e| Error::Format(e.to_string()))?;
                            v["lattice_spacing"] = json!(sf.lattice_spacing);
                            v["shifts"] = json!(sf.shifts);
                            fits.insert(key, v);
                        }
                        Err(e) => {
                            fits.insert(key, json!({ "error": e.to_string() }));
                        }
                    }
                }
            }
            let verdict =
                (space_sigma.len() == 3).then(|| onsager_conditions_with_tolerance(space_sigma[0], space_sigma[1], space_sigma[2], CRITICAL_BAND));
            let comparison = match spacetime_vs_space(&block, &o, p, &ells, range) {
                Ok(c) => json!({ "predicted": c.predicted, "consistent": c.consistent }),
                Err(e) => json!({ "error": e.to_string() }),
            };
            summary.push(json!({ "subdomain": sd.name, "p": p, "fits": fits, "exponent_conditions": verdict, "space_vs_spacetime": comparison }));
        }
    }
    std::fs::write(dir.join("besov.csv"), table.render(&prov))?;
    write_json(&dir.join("besov.json"), &json!({ "provenance": prov, "fit_range": range, "ells": ells, "results": summary }))?;
    println!("{} rows written to {}", table.len(), dir.join("besov.csv").display());
    Ok(0)
}

fn oracle_rh(cli: &Cli, mach: f64, alpha: f64, rho: f64, pressure: f64) -> Result<i32> {
    let (setup, eos, prov) = match &cli.config {
        Some(_) => {
            let cfg = load_config(cli)?;
            match &cfg.init {
                Init::Shock { setup, .. } => (*setup, cfg.eos, Provenance::new(&cfg, cli.seed)),
                _ => return Err(Error::config("init", "oracle rh needs a shock initial condition")),
            }
        }
        None => {
            let eos = EosSpec::ideal_gas(alpha);
            eos.validate()?;
            for (v, n) in [(mach, "--mach"), (rho, "--rho"), (pressure, "--pressure")] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(n, "must be finite and > 0"));
                }
            }
            let setup = ShockSetup::stationary(rho, pressure, mach, &eos);
            (setup, eos, Provenance::new(&json!({ "mach": mach, "alpha": alpha, "rho": rho, "pressure": pressure }), cli.seed))
        }
    };
    let rh = rh_jump(&setup, &eos)?;
    let doc = json!({ "provenance": prov, "setup": setup, "eos": eos, "jump": rh });
    println!("{}", serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))?);
    if cli.out.is_some() {
        write_json(&out_dir(cli, None)?.join("oracle_rh.json"), &doc)?;
    }
    Ok(0)
}

fn report(cli: &Cli, check: bool) -> Result<i32> {
    let dir = out_dir(cli, None)?;
    let prov = Provenance::new(&json!({ "report": "acceptance" }), cli.seed);
    let rep = run_acceptance(cli.seed)?;
    for c in &rep.criteria {
        println!("criterion {}: {} ({})", c.id, if c.passed { "PASS" } else { "FAIL" }, c.name);
        for k in c.checks.iter().filter(|k| !k.passed) {
            println!("    {} = {:e}, expected {}", k.what, k.value, k.bound);
        }
    }
    write_json(&dir.join("report.json"), &json!({ "provenance": prov, "report": rep }))?;
    Ok(if check && !rep.passed { 4 } else { 0 })
}
