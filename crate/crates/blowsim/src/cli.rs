//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or validation error, 2 numerical
//! fault (NaN, overflow, factorization or quadrature failure), 3 a proven
//! inequality or distributional identity was violated by the simulation.

use crate::config::AppConfig;
use crate::error::{Error, Result};
use crate::functionals::{Cc4Status, HittingTime};
use crate::montecarlo::{
    self, cdf_estimates, run_bound_suite, run_sandwich_batch, BoundReport, PathSampler, Relation,
    SandwichBatch, TauRecord,
};
use crate::noise::TimeGrid;
use crate::spde::{self, SolveOptions, SpectralDomain};
use clap::{Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_VIOLATION: u8 = 3;

/// Maps an error to the process exit code: bad inputs are 1, numerical
/// faults are 2. Inequality violations are not errors; commands return 3
/// for them explicitly.
pub fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::GridMismatch(_) | Error::GridCap { .. } => {
            EXIT_CONFIG
        }
        Error::Overflow { .. }
        | Error::NumericalFault { .. }
        | Error::CholeskyFailed { .. }
        | Error::Quadrature(_)
        | Error::Convergence(_) => EXIT_NUMERICAL,
    }
}

#[derive(Parser)]
#[command(
    name = "blowsim",
    version,
    about = "Finite-time blowup statistics for a stochastic heat equation with mixed Brownian / fractional Brownian noise"
)]
struct Cli {
    /// Configuration file (key=value lines, # comments)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed; overrides mc.seed from the configuration
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads for path-parallel commands (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Output directory for reports and CSV exports (default: .)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample (B, B^H, N) paths and export them as CSV
    Noise {
        /// Number of paths to export
        #[arg(long, default_value_t = 1)]
        paths: usize,
    },
    /// Hitting-time ensemble: tau_*, tau*, the node criterion, and the
    /// integrability tail status per path
    Tau,
    /// Evaluate every applicable analytic bound against Monte Carlo
    Bounds,
    /// Integrate one noise path through the spectral solver
    Solve {
        /// Trajectory index to integrate
        #[arg(long, default_value_t = 0)]
        path_index: u64,
        /// Track the pathwise envelope while solving
        #[arg(long)]
        envelope: bool,
    },
    /// Verify the exponential-functional law of drifted Brownian motion
    Dycheck {
        /// Gamma shape parameter (drift)
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        /// Number of sampled paths
        #[arg(long, default_value_t = 10000)]
        paths: usize,
        /// Truncation horizon for the time integral
        #[arg(long, default_value_t = 30.0)]
        horizon: f64,
    },
    /// Full report: configuration echo, hitting-time summary, bound table,
    /// and a solver sandwich batch
    Suite,
}

pub fn run() -> u8 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn execute(cli: Cli) -> Result<u8> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        // Ignore the error when a pool already exists (in-process reuse);
        // the pool size then stays as first configured.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let mut cfg = match &cli.config {
        Some(p) => AppConfig::from_file(p)?,
        None => AppConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out_dir = cli.out.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    match cli.cmd {
        Command::Noise { paths } => cmd_noise(&cfg, &out_dir, paths),
        Command::Tau => cmd_tau(&cfg, &out_dir),
        Command::Bounds => cmd_bounds(&cfg, &out_dir),
        Command::Solve {
            path_index,
            envelope,
        } => cmd_solve(&cfg, &out_dir, path_index, envelope),
        Command::Dycheck { mu, paths, horizon } => {
            cmd_dycheck(&cfg, &out_dir, mu, paths, horizon)
        }
        Command::Suite => cmd_suite(&cfg, &out_dir),
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.12e}"),
        None => "n/a".into(),
    }
}

fn fmt_ht(h: HittingTime) -> String {
    match h {
        HittingTime::Finite { value, .. } => format!("{value:.9}"),
        HittingTime::Censored { horizon } => format!(">{horizon:.9}"),
    }
}

fn ht_columns(h: HittingTime) -> (String, u8) {
    match h {
        HittingTime::Finite { value, .. } => (format!("{value:.12e}"), 0),
        HittingTime::Censored { horizon } => (format!("{horizon:.12e}"), 1),
    }
}

fn fmt_cc4(s: Cc4Status) -> &'static str {
    match s {
        Cc4Status::HoldsAtHorizon => "holds",
        Cc4Status::Violated => "violated",
        Cc4Status::Inconclusive => "inconclusive",
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_noise(cfg: &AppConfig, out: &Path, paths: usize) -> Result<u8> {
    if paths == 0 {
        return Err(Error::Config("--paths must be at least 1".into()));
    }
    let exp = cfg.experiment()?;
    let sampler = PathSampler::new(exp.grid, &exp.params, exp.dependence, exp.master_seed)?;
    let mut csv = String::new();
    if sampler.fbm_unused() {
        csv.push_str("# b = 0: the fbm column does not enter N and is reported as zero\n");
    }
    csv.push_str("path,t,bm,fbm,n\n");
    for k in 0..paths as u64 {
        let (bm, fbm, n) = sampler.noise_triplet(&exp.params, k)?;
        for i in 0..=exp.grid.n_steps() {
            let _ = writeln!(
                csv,
                "{k},{:.12e},{:.12e},{:.12e},{:.12e}",
                exp.grid.node(i),
                bm.value(i),
                fbm.value(i),
                n.value(i)
            );
        }
    }
    let path = out.join("noise.csv");
    write_file(&path, &csv)?;
    println!(
        "wrote {paths} path(s), {} nodes each, to {}",
        exp.grid.n_steps() + 1,
        path.display()
    );
    Ok(EXIT_OK)
}

fn tau_summary(recs: &[TauRecord], grid: TimeGrid) -> (String, usize) {
    let n = recs.len();
    let taus: Vec<HittingTime> = recs.iter().map(|r| r.tau_star).collect();
    let horizon = grid.horizon();
    let t_values = [0.25 * horizon, 0.5 * horizon, horizon];
    let cdf = cdf_estimates(&taus, &t_values, n);
    let mut s = String::new();
    let finite_star = recs.iter().filter(|r| !r.tau_star.is_censored()).count();
    let finite_lower = recs.iter().filter(|r| !r.tau_lower.is_censored()).count();
    let finite_cond2 = recs.iter().filter(|r| !r.cond2.is_censored()).count();
    let cc4_holds = recs
        .iter()
        .filter(|r| matches!(r.cc4, Cc4Status::HoldsAtHorizon))
        .count();
    // tau_* <= tau* is a theorem; a crossing of the estimates is a bug, so
    // count it as a violation.
    let mut order_violations = 0usize;
    for r in recs {
        if let (HittingTime::Finite { value: lo, .. }, HittingTime::Finite { value: hi, .. }) =
            (r.tau_lower, r.tau_star)
        {
            if lo > hi + grid.dt() {
                order_violations += 1;
            }
        }
        if let (HittingTime::Censored { horizon: h0 }, HittingTime::Finite { value: hi, .. }) =
            (r.tau_lower, r.tau_star)
        {
            if hi + grid.dt() < h0 {
                order_violations += 1;
            }
        }
    }
    let _ = writeln!(s, "paths                    {n}");
    let _ = writeln!(
        s,
        "tau* finite              {finite_star} ({:.4})",
        finite_star as f64 / n as f64
    );
    let _ = writeln!(
        s,
        "tau_* finite             {finite_lower} ({:.4})",
        finite_lower as f64 / n as f64
    );
    let _ = writeln!(
        s,
        "node criterion fired     {finite_cond2} ({:.4})",
        finite_cond2 as f64 / n as f64
    );
    let _ = writeln!(
        s,
        "integrability tail holds {cc4_holds} ({:.4})",
        cc4_holds as f64 / n as f64
    );
    let _ = writeln!(s, "ordering violations      {order_violations}");
    for (t, est) in t_values.iter().zip(cdf.iter()) {
        let _ = writeln!(
            s,
            "P(tau* <= {t:.6})  = {:.12e}  ci [{:.12e}, {:.12e}]",
            est.estimate, est.ci.0, est.ci.1
        );
    }
    (s, order_violations)
}

fn cmd_tau(cfg: &AppConfig, out: &Path) -> Result<u8> {
    let exp = cfg.experiment()?;
    let recs = montecarlo::tau_records(&exp)?;
    let mut csv = String::from(
        "path,tau_lower,tau_lower_censored,tau_star,tau_star_censored,cond2,cond2_censored,cc4\n",
    );
    for (k, r) in recs.iter().enumerate() {
        let (lo, lo_c) = ht_columns(r.tau_lower);
        let (hi, hi_c) = ht_columns(r.tau_star);
        let (w, w_c) = ht_columns(r.cond2);
        let _ = writeln!(csv, "{k},{lo},{lo_c},{hi},{hi_c},{w},{w_c},{}", fmt_cc4(r.cc4));
    }
    let path = out.join("tau.csv");
    write_file(&path, &csv)?;
    let (summary, violations) = tau_summary(&recs, exp.grid);
    print!("{summary}");
    println!("wrote {}", path.display());
    Ok(if violations > 0 { EXIT_VIOLATION } else { EXIT_OK })
}

fn bound_table(report: &BoundReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<34} {:<11} {:>18} {:>18} {:>40} {:>9}",
        "bound", "relation", "value", "mc estimate", "mc 95% ci", "violated"
    );
    for row in &report.rows {
        let rel = match row.relation {
            Relation::UpperBound => "upper",
            Relation::LowerBoundProxy => "lower-proxy",
            Relation::Equality => "equality",
        };
        let ci = match &row.mc {
            Some(est) => format!("[{:.12e}, {:.12e}]", est.ci.0, est.ci.1),
            None => "n/a".into(),
        };
        let _ = writeln!(
            s,
            "{:<34} {:<11} {:>18} {:>18} {:>40} {:>9}",
            row.name,
            rel,
            fmt_opt(row.value),
            fmt_opt(row.mc.as_ref().map(|e| e.estimate)),
            ci,
            if row.violation { "YES" } else { "no" }
        );
        if row.vacuous {
            let _ = writeln!(s, "{:<34} (vacuous)", "");
        }
        if !row.note.is_empty() {
            let _ = writeln!(s, "{:<34} note: {}", "", row.note);
        }
    }
    s
}

fn bound_csv(report: &BoundReport, header: &str) -> String {
    let mut csv = String::new();
    for line in header.lines() {
        let _ = writeln!(csv, "# {line}");
    }
    csv.push_str(
        "name,relation,value,vacuous,mc_estimate,mc_ci_lo,mc_ci_hi,censored_fraction,violation,note\n",
    );
    for row in &report.rows {
        let rel = match row.relation {
            Relation::UpperBound => "upper",
            Relation::LowerBoundProxy => "lower-proxy",
            Relation::Equality => "equality",
        };
        let (est, lo, hi, cf) = match &row.mc {
            Some(e) => (
                format!("{:.12e}", e.estimate),
                format!("{:.12e}", e.ci.0),
                format!("{:.12e}", e.ci.1),
                format!("{:.6}", e.censored_fraction),
            ),
            None => ("n/a".into(), "n/a".into(), "n/a".into(), "n/a".into()),
        };
        let _ = writeln!(
            csv,
            "{},{rel},{},{},{est},{lo},{hi},{cf},{},{}",
            csv_field(&row.name),
            fmt_opt(row.value),
            row.vacuous,
            row.violation,
            csv_field(&row.note)
        );
    }
    csv
}

fn cmd_bounds(cfg: &AppConfig, out: &Path) -> Result<u8> {
    let exp = cfg.experiment()?;
    let report = run_bound_suite(&exp)?;
    let table = bound_table(&report);
    print!("{table}");
    let csv = bound_csv(&report, &cfg.echo());
    let path = out.join("bounds.csv");
    write_file(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(if report.violations() > 0 {
        EXIT_VIOLATION
    } else {
        EXIT_OK
    })
}

fn cmd_solve(cfg: &AppConfig, out: &Path, path_index: u64, envelope: bool) -> Result<u8> {
    let exp = cfg.experiment()?;
    let sampler = PathSampler::new(exp.grid, &exp.params, exp.dependence, exp.master_seed)?;
    let noise = sampler.mixed(&exp.params, path_index)?;
    let domain = SpectralDomain::new(cfg.n_modes)?;
    let phi = domain.eigen_initial(exp.params.p_scale);
    let opts = SolveOptions {
        threshold: cfg.threshold,
        substeps: cfg.substeps,
        check_envelope: envelope,
        ..SolveOptions::default()
    };
    let record = spde::solve_rpde(&phi, &exp.params, &noise, &domain, &opts)?;
    let mut csv = String::from("time,sup_norm_v,sup_norm_u,pairing_v,N_t\n");
    for i in 0..record.times.len() {
        let _ = writeln!(
            csv,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            record.times[i], record.sup_v[i], record.sup_u[i], record.pairing_v[i], record.noise[i]
        );
    }
    let path = out.join("trace.csv");
    write_file(&path, &csv)?;
    match record.tau_num {
        HittingTime::Finite { value, bracket } => println!(
            "blowup: ||u||_inf crossed {:.3e} at t = {:.9} (bracket [{:.9}, {:.9}])",
            record.threshold, value, bracket.0, bracket.1
        ),
        HittingTime::Censored { horizon } => {
            println!("no blowup by the horizon t = {horizon:.9}")
        }
    }
    let mut code = EXIT_OK;
    if let Some(env) = &record.envelope {
        println!(
            "envelope: {} nodes checked, worst upper excess {:.3e}, worst lower excess {:.3e} (tolerance {:.1e})",
            env.nodes_checked, env.worst_upper_excess, env.worst_lower_excess, opts.envelope_tol
        );
        if env.nodes_checked > 0
            && (env.worst_upper_excess > opts.envelope_tol
                || env.worst_lower_excess > opts.envelope_tol)
        {
            println!("envelope VIOLATED");
            code = EXIT_VIOLATION;
        }
    }
    println!("wrote {}", path.display());
    Ok(code)
}

fn cmd_dycheck(cfg: &AppConfig, out: &Path, mu: f64, paths: usize, horizon: f64) -> Result<u8> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Config(format!(
            "--horizon must be positive, got {horizon}"
        )));
    }
    // Target step 2e-3: fine enough that the trapezoid error sits well under
    // the KS allowance.
    let n_steps = ((horizon / 2e-3).ceil() as usize).max(2);
    let grid = TimeGrid::new(horizon, n_steps)?;
    let report = montecarlo::dufresne_yor_check(mu, paths, grid, cfg.seed)?;
    let mut text = String::new();
    let _ = writeln!(text, "exponential-functional law check");
    let _ = writeln!(text, "mu                 {mu}");
    let _ = writeln!(text, "paths              {}", report.n_paths);
    let _ = writeln!(text, "horizon            {}", report.horizon);
    let _ = writeln!(text, "ks statistic       {:.12e}", report.ks);
    let _ = writeln!(text, "ks 95% critical    {:.12e}", report.ks_critical_95);
    let _ = writeln!(text, "grid allowance     {:.12e}", report.grid_allowance);
    let _ = writeln!(text, "sample median      {:.12e}", report.median);
    let _ = writeln!(text, "pass               {}", report.pass);
    print!("{text}");
    let path = out.join("dycheck.txt");
    write_file(&path, &text)?;
    println!("wrote {}", path.display());
    Ok(if report.pass { EXIT_OK } else { EXIT_VIOLATION })
}

fn sandwich_table(batch: &SandwichBatch) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6} {:>15} {:>15} {:>15} {:>15} {:>6}",
        "path", "tau_*", "tau_num", "tau*", "node bound", "pass"
    );
    for row in &batch.rows {
        let _ = writeln!(
            s,
            "{:<6} {:>15} {:>15} {:>15} {:>15} {:>6}",
            row.path,
            fmt_ht(row.tau_lower),
            fmt_ht(row.tau_num),
            fmt_ht(row.tau_star),
            fmt_ht(row.cond2),
            if row.report.pass { "ok" } else { "FAIL" }
        );
    }
    let _ = writeln!(
        s,
        "sandwich failures: {} of {}",
        batch.failures,
        batch.rows.len()
    );
    s
}

fn cmd_suite(cfg: &AppConfig, out: &Path) -> Result<u8> {
    let exp = cfg.experiment()?;
    let echo = cfg.echo();

    let recs = montecarlo::tau_records(&exp)?;
    let (tau_text, order_violations) = tau_summary(&recs, exp.grid);

    let report = run_bound_suite(&exp)?;

    let domain = SpectralDomain::new(cfg.n_modes)?;
    let opts = SolveOptions {
        threshold: cfg.threshold,
        substeps: cfg.substeps,
        ..SolveOptions::default()
    };
    let n_solve = exp.n_paths.min(16);
    let batch = run_sandwich_batch(&exp, n_solve, &domain, &opts)?;

    let mut text = String::new();
    let _ = writeln!(text, "================ blowsim suite report ================");
    let _ = writeln!(text, "---- configuration ----");
    text.push_str(&echo);
    let _ = writeln!(text, "---- hitting times ----");
    text.push_str(&tau_text);
    let _ = writeln!(text, "---- bounds ----");
    text.push_str(&bound_table(&report));
    let _ = writeln!(text, "---- solver sandwich ({n_solve} paths) ----");
    text.push_str(&sandwich_table(&batch));
    let violations = report.violations() + batch.failures + order_violations;
    let _ = writeln!(text, "---- verdict ----");
    let _ = writeln!(text, "violations: {violations}");

    let txt_path = out.join("suite_report.txt");
    write_file(&txt_path, &text)?;
    let csv_path = out.join("suite_report.csv");
    write_file(&csv_path, &bound_csv(&report, &echo))?;
    print!("{text}");
    println!("wrote {} and {}", txt_path.display(), csv_path.display());
    Ok(if violations > 0 { EXIT_VIOLATION } else { EXIT_OK })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::EstimateResult;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn estimate_formatting_is_stable() {
        let est = EstimateResult {
            estimate: 0.5,
            ci: (0.4, 0.6),
            n_effective: 100,
            censored_fraction: 0.25,
        };
        let report = BoundReport {
            horizon: 1.0,
            rows: vec![montecarlo::BoundRow {
                name: "row".into(),
                relation: Relation::UpperBound,
                value: Some(0.75),
                vacuous: false,
                note: "has, comma".into(),
                mc: Some(est),
                violation: false,
            }],
        };
        let csv = bound_csv(&report, "h = 1");
        assert!(csv.contains("\"has, comma\""));
        assert!(csv.starts_with("# h = 1\n"));
    }
}
