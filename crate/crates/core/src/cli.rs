//! Command-line front end.
//!
//! Exit codes: 0 success, 1 `check` discrepancy, 2 usage or model-file
//! error, 3 solver error.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::ldqbd::{
    solve_rate_sequence, stationary_product, tails_lu_ld_auto, LdQbdModel, SeriesOptions,
};
use crate::modelfile::{parse_model_file, Kind, ModelFile, ModelSpec, RateLists};
use crate::models::{
    meanfield_ode, mn_mn_1_ldqbd, mn_mn_1_tails, repairable_qbd, repairable_tails, retrial_ldqbd,
    retrial_tails, supermarket_tail, vacation_qbd, vacation_tails, MeanFieldParams,
    RepairableRoute,
};
use crate::oracle::{truncate_and_solve, BlockProvider, MAX_UNKNOWNS};
use crate::qbd::{
    check_stable, tails_lu, tails_matrix_geometric, tails_ul, FixedPointOptions, LuOptions,
    QbdModel,
};
use crate::skipfree::{
    gim1_stationary, gim1_tails, mg1_stationary, mg1_tails, solve_g_series, solve_r_series,
    Gim1Route, Mg1Route, SkipFreeModel,
};
use crate::tails::{Method, TailSeries};

/// Pairwise agreement required by `check`.
pub const CHECK_TOL: f64 = 1e-6;
/// Default truncation level of the oracle in `check`.
pub const DEFAULT_ORACLE_LEVELS: usize = 400;
/// Default horizon for models whose level dependence never settles.
pub const DEFAULT_HORIZON: usize = 200;

#[derive(Parser, Debug)]
#[command(
    name = "qbd-tails",
    version,
    about = "Stationary and tail vectors of structured Markov chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute tails π_1..π_K for a model file.
    Solve {
        file: PathBuf,
        #[arg(long)]
        levels: usize,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_enum, default_value = "csv")]
        output: OutputArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every applicable method plus the truncation oracle and compare.
    Check {
        file: PathBuf,
        #[arg(long)]
        levels: usize,
        #[arg(long = "oracle-levels")]
        oracle_levels: Option<usize>,
    },
    /// Integrate the supermarket mean-field ODE and compare with the fixed point.
    Meanfield {
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        d: u32,
        #[arg(long)]
        levels: usize,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Mg,
    Ul,
    Lu,
    Product,
    Iterative,
}

impl MethodArg {
    fn label(self) -> &'static str {
        match self {
            MethodArg::Mg => "mg",
            MethodArg::Ul => "ul",
            MethodArg::Lu => "lu",
            MethodArg::Product => "product",
            MethodArg::Iterative => "iterative",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutputArg {
    Csv,
    Json,
}

enum Failure {
    Usage(String),
    Solver(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

/// Run with process arguments (first item is the program name).
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I: IntoIterator<Item = String>>(
    args: I,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve {
            file,
            levels,
            method,
            tol,
            output,
            out: path,
        } => cmd_solve(&file, levels, method, tol, output, path.as_deref(), out),
        Command::Check {
            file,
            levels,
            oracle_levels,
        } => cmd_check(&file, levels, oracle_levels, out),
        Command::Meanfield {
            rho,
            d,
            levels,
            t_end,
        } => cmd_meanfield(rho, d, levels, t_end, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
        Err(Failure::Solver(e)) => {
            let _ = writeln!(err, "error: {}: {e}", e.name());
            3
        }
    }
}

fn load(path: &std::path::Path) -> Result<ModelFile, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    parse_model_file(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn check_levels(levels: usize) -> Result<(), Failure> {
    if levels == 0 {
        Err(Failure::Usage("--levels must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn check_tol(tol: f64) -> Result<f64, Failure> {
    if tol.is_finite() && tol > 0.0 {
        Ok(tol)
    } else {
        Err(Failure::Usage(format!(
            "--tol must be a positive number, got {tol}"
        )))
    }
}

/// A named way of computing the tails of one model file.
struct Route {
    label: &'static str,
    arg: Option<MethodArg>,
}

const fn route(label: &'static str, arg: Option<MethodArg>) -> Route {
    Route { label, arg }
}

/// Every route for a kind; the first is the default for `solve`.
fn routes(kind: Kind) -> Vec<Route> {
    use MethodArg::*;
    match kind {
        Kind::Qbd => vec![
            route("mg", Some(Mg)),
            route("ul", Some(Ul)),
            route("lu", Some(Lu)),
        ],
        Kind::Ldqbd => vec![route("product", Some(Product)), route("lu", Some(Lu))],
        Kind::Gim1 => vec![route("mg", Some(Mg)), route("ul", Some(Ul))],
        Kind::Mg1 => vec![route("iterative", Some(Iterative)), route("ul", Some(Ul))],
        Kind::Retrial => vec![
            route("ul", Some(Ul)),
            route("product", Some(Product)),
            route("lu", Some(Lu)),
        ],
        Kind::Mnmn1 => vec![
            route("series", None),
            route("product", Some(Product)),
            route("lu", Some(Lu)),
        ],
        Kind::Vacation => {
            vec![
                route("recursion", None),
                route("mg", Some(Mg)),
                route("ul", Some(Ul)),
                route("lu", Some(Lu)),
            ]
        }
        Kind::Repairable => vec![
            route("iterative", Some(Iterative)),
            route("mg", Some(Mg)),
            route("qbd-mg", None),
            route("ul", Some(Ul)),
            route("lu", Some(Lu)),
        ],
        Kind::Supermarket => vec![route("closed-form", None), route("meanfield", None)],
    }
}

fn column_names(spec: &ModelSpec) -> Vec<String> {
    match spec {
        ModelSpec::Retrial(_) => vec!["W".into(), "I".into()],
        ModelSpec::Vacation(_) => vec!["V".into(), "W".into()],
        ModelSpec::Repairable(_) => vec!["W".into(), "R".into()],
        ModelSpec::MnMn1(_) | ModelSpec::Supermarket { .. } => vec!["pi".into()],
        ModelSpec::Qbd(q) => phase_names(q.m()),
        ModelSpec::LdQbd(l) => phase_names(l.m()),
        ModelSpec::Gim1(s) | ModelSpec::Mg1(s) => phase_names(s.m()),
    }
}

fn phase_names(m: usize) -> Vec<String> {
    if m == 1 {
        vec!["pi".into()]
    } else {
        (1..=m).map(|i| format!("p{i}")).collect()
    }
}

fn qbd_routes(q: &QbdModel, label: &str, levels: usize, tol: f64) -> Result<TailSeries, Error> {
    let opts = FixedPointOptions {
        tol,
        ..FixedPointOptions::default()
    };
    let (r, boundary) = q.stationary(opts)?;
    match label {
        "mg" | "qbd-mg" => tails_matrix_geometric(&boundary.x0, &boundary.x1, &r.matrix, levels),
        "ul" => tails_ul(q, &r.matrix, &boundary, levels),
        "lu" => tails_lu(q, &boundary.x0, levels, LuOptions::default()),
        _ => unreachable!("unknown QBD route {label}"),
    }
}

fn ld_routes(
    model: &LdQbdModel,
    label: &str,
    levels: usize,
    tol: f64,
) -> Result<TailSeries, Error> {
    let rates = solve_rate_sequence(model, tol, 10_000)?;
    let product = stationary_product(model, &rates, levels)?;
    match label {
        "product" => Ok(product),
        "lu" => tails_lu_ld_auto(model, &product.x0, levels, SeriesOptions::default()),
        _ => unreachable!("unknown LD-QBD route {label}"),
    }
}

fn gim1_route(
    model: &SkipFreeModel,
    label: &str,
    levels: usize,
    tol: f64,
) -> Result<TailSeries, Error> {
    let r = solve_r_series(
        model.a_blocks(),
        FixedPointOptions {
            tol,
            ..FixedPointOptions::default()
        },
    )?;
    check_stable(&r.matrix)?;
    let (x0, meas) = gim1_stationary(model, &r.matrix)?;
    let route = if label == "mg" {
        Gim1Route::MatrixGeometric
    } else {
        Gim1Route::UlRg
    };
    gim1_tails(model, &meas, &x0, levels, route)
}

fn mg1_route(
    model: &SkipFreeModel,
    label: &str,
    levels: usize,
    tol: f64,
) -> Result<TailSeries, Error> {
    let g = solve_g_series(
        model.a_blocks(),
        FixedPointOptions {
            tol,
            ..FixedPointOptions::default()
        },
    )?;
    let (xs, meas) = mg1_stationary(model, &g.matrix, 0)?;
    let route = if label == "iterative" {
        Mg1Route::Iterative
    } else {
        Mg1Route::UlRg
    };
    mg1_tails(model, &meas, &xs[0], levels, route, tol)
}

fn rate_lists_ldqbd(rates: &RateLists, horizon: usize) -> Result<LdQbdModel, Error> {
    let (a, b) = (rates.clone(), rates.clone());
    mn_mn_1_ldqbd(move |n| a.lambda_at(n), move |n| b.mu_at(n), horizon)
}

fn rate_lists_horizon(rates: &RateLists) -> usize {
    rates.lambda.len().max(rates.mu.len() + 1).max(2)
}

fn run_route(file: &ModelFile, label: &str, levels: usize, tol: f64) -> Result<TailSeries, Error> {
    let horizon = file.horizon;
    match &file.spec {
        ModelSpec::Qbd(q) => qbd_routes(q, label, levels, tol),
        ModelSpec::LdQbd(m) => ld_routes(m, label, levels, tol),
        ModelSpec::Gim1(m) => gim1_route(m, label, levels, tol),
        ModelSpec::Mg1(m) => mg1_route(m, label, levels, tol),
        ModelSpec::Retrial(p) => {
            let h = horizon.unwrap_or(DEFAULT_HORIZON);
            if label == "ul" {
                retrial_tails(*p, levels, h, tol)
            } else {
                ld_routes(
                    &retrial_ldqbd(*p, h.max(levels).max(2))?,
                    label,
                    levels,
                    tol,
                )
            }
        }
        ModelSpec::MnMn1(rates) => {
            if label == "series" {
                mn_mn_1_tails(|n| rates.lambda_at(n), |n| rates.mu_at(n), levels, tol)
            } else {
                let h = horizon.unwrap_or_else(|| rate_lists_horizon(rates));
                ld_routes(&rate_lists_ldqbd(rates, h)?, label, levels, tol)
            }
        }
        ModelSpec::Vacation(p) => {
            if label == "recursion" {
                vacation_tails(*p, levels)
            } else {
                qbd_routes(&vacation_qbd(*p)?, label, levels, tol)
            }
        }
        ModelSpec::Repairable(p) => match label {
            "iterative" => repairable_tails(*p, levels, RepairableRoute::Iterative),
            "mg" => repairable_tails(*p, levels, RepairableRoute::MatrixGeometric),
            other => qbd_routes(&repairable_qbd(*p)?, other, levels, tol),
        },
        ModelSpec::Supermarket { rho, d } => {
            let (rho, d) = (*rho, *d);
            let pis = match label {
                "closed-form" => (1..=levels)
                    .map(|k| supermarket_tail(rho, d, k).map(|v| vec![v]))
                    .collect::<Result<Vec<_>, _>>()?,
                _ => {
                    let traj =
                        meanfield_ode(MeanFieldParams::new(rho, d, meanfield_components(levels)))?;
                    traj.final_state[..levels]
                        .iter()
                        .map(|v| vec![*v])
                        .collect()
                }
            };
            let x0 = vec![1.0 - pis[0][0]];
            let method = if label == "closed-form" {
                Method::ClosedForm
            } else {
                Method::Series
            };
            Ok(TailSeries::new(pis, x0, method))
        }
    }
}

/// Components integrated for `K` reported supermarket tails.
fn meanfield_components(levels: usize) -> usize {
    (levels + 10).max(40)
}

fn oracle_provider(
    file: &ModelFile,
    oracle_levels: usize,
) -> Result<Option<Box<dyn BlockProvider>>, Error> {
    Ok(match &file.spec {
        ModelSpec::Qbd(q) => Some(Box::new(q.clone())),
        ModelSpec::LdQbd(m) => Some(Box::new(m.clone())),
        ModelSpec::Gim1(m) | ModelSpec::Mg1(m) => Some(Box::new(m.clone())),
        ModelSpec::Retrial(p) => Some(Box::new(retrial_ldqbd(*p, oracle_levels + 1)?)),
        ModelSpec::MnMn1(rates) => Some(Box::new(rate_lists_ldqbd(
            rates,
            rate_lists_horizon(rates).max(oracle_levels + 1),
        )?)),
        ModelSpec::Vacation(p) => Some(Box::new(vacation_qbd(*p)?)),
        ModelSpec::Repairable(p) => Some(Box::new(repairable_qbd(*p)?)),
        ModelSpec::Supermarket { .. } => None,
    })
}

fn level_size(spec: &ModelSpec) -> usize {
    match spec {
        ModelSpec::Qbd(q) => q.m(),
        ModelSpec::LdQbd(l) => l.m(),
        ModelSpec::Gim1(s) | ModelSpec::Mg1(s) => s.m(),
        ModelSpec::Retrial(_) | ModelSpec::Vacation(_) | ModelSpec::Repairable(_) => 2,
        ModelSpec::MnMn1(_) | ModelSpec::Supermarket { .. } => 1,
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn render_csv(names: &[String], tails: &TailSeries) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "k,{}", names.join(","));
    for k in 1..=tails.len() {
        let row: Vec<String> = tails.pi(k).iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(s, "{k},{}", row.join(","));
    }
    s
}

fn render_json(tails: &TailSeries) -> String {
    let rows: Vec<serde_json::Value> = (1..=tails.len())
        .map(|k| serde_json::json!({ "k": k, "pi": tails.pi(k) }))
        .collect();
    let mut s = serde_json::to_string_pretty(&rows).unwrap_or_default();
    s.push('\n');
    s
}

fn cmd_solve(
    path: &std::path::Path,
    levels: usize,
    method: Option<MethodArg>,
    tol: Option<f64>,
    output: OutputArg,
    out_path: Option<&std::path::Path>,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    check_levels(levels)?;
    let file = load(path)?;
    let tol = check_tol(tol.or(file.tol).unwrap_or(FixedPointOptions::default().tol))?;
    let all = routes(file.kind);
    let chosen = match method {
        None => &all[0],
        Some(m) => all.iter().find(|r| r.arg == Some(m)).ok_or_else(|| {
            let names: Vec<&str> = all
                .iter()
                .filter_map(|r| r.arg.map(MethodArg::label))
                .collect();
            Failure::Usage(format!(
                "method `{}` does not apply to kind `{}` (available: {})",
                m.label(),
                file.kind.label(),
                names.join(", ")
            ))
        })?,
    };
    let tails = run_route(&file, chosen.label, levels, tol)?;
    let text = match output {
        OutputArg::Csv => render_csv(&column_names(&file.spec), &tails),
        OutputArg::Json => render_json(&tails),
    };
    match out_path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display())))?,
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Usage(format!("cannot write output: {e}")))?,
    }
    Ok(0)
}

fn cmd_check(
    path: &std::path::Path,
    levels: usize,
    oracle_levels: Option<usize>,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    check_levels(levels)?;
    let file = load(path)?;
    let tol = check_tol(file.tol.unwrap_or(FixedPointOptions::default().tol))?;
    let m = level_size(&file.spec);
    let cap = MAX_UNKNOWNS / m - 1;
    let oracle_l = oracle_levels
        .unwrap_or(DEFAULT_ORACLE_LEVELS.min(cap))
        .max(levels);
    if oracle_l > cap {
        return Err(Failure::Usage(format!(
            "--oracle-levels {oracle_l} exceeds the limit of {cap} for {m} phases"
        )));
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        "model: {} ({} phases), tails k = 1..{}",
        file.kind.label(),
        m,
        levels
    );
    let mut results: Vec<(String, TailSeries)> = Vec::new();
    let mut failed = false;
    for r in routes(file.kind) {
        match run_route(&file, r.label, levels, tol) {
            Ok(t) => {
                let _ = writeln!(s, "method {:<12} {:<16} ok", r.label, t.method.label());
                results.push((r.label.to_string(), t));
            }
            Err(e) => {
                failed = true;
                let _ = writeln!(s, "method {:<12} failed: {}: {e}", r.label, e.name());
            }
        }
    }
    if let Some(provider) = oracle_provider(&file, oracle_l)? {
        match truncate_and_solve(provider.as_ref(), oracle_l) {
            Ok(sol) => {
                let _ = writeln!(
                    s,
                    "oracle L = {oracle_l}, boundary mass {:.3e}, rounding floor {:.3e}",
                    sol.boundary_mass, sol.rounding_floor
                );
                results.push(("oracle".to_string(), sol.tails));
            }
            Err(e) => {
                failed = true;
                let _ = writeln!(s, "oracle failed: {}: {e}", e.name());
            }
        }
    }

    let width = results
        .iter()
        .map(|(n, _)| n.len())
        .max()
        .unwrap_or(6)
        .max(9)
        + 2;
    let _ = writeln!(s, "max |pi_a(k) - pi_b(k)| over k = 1..{levels}");
    let _ = write!(s, "{:width$}", "");
    for (n, _) in &results {
        let _ = write!(s, "{n:>width$}");
    }
    let _ = writeln!(s);
    let mut worst: f64 = 0.0;
    for (na, a) in &results {
        let _ = write!(s, "{na:width$}");
        for (_, b) in &results {
            let d = a.max_abs_diff(b, levels);
            let d = if d.is_nan() { f64::INFINITY } else { d };
            worst = worst.max(d);
            let _ = write!(s, "{:>width$}", format!("{d:.3e}"));
        }
        let _ = writeln!(s);
    }
    for (n, t) in &results {
        for key in ["closed_form.max_gap"] {
            if let Some(v) = t.report.get(key) {
                let _ = writeln!(s, "note: {n} {key} = {v:.3e} (informational)");
            }
        }
    }
    let pass = !failed && results.len() >= 2 && worst < CHECK_TOL;
    let _ = writeln!(
        s,
        "max discrepancy {worst:.3e} (threshold {CHECK_TOL:.0e}): {}",
        if pass { "PASS" } else { "FAIL" }
    );
    out.write_all(s.as_bytes())
        .map_err(|e| Failure::Usage(format!("cannot write output: {e}")))?;
    Ok(if pass {
        0
    } else if failed {
        3
    } else {
        1
    })
}

fn cmd_meanfield(
    rho: f64,
    d: u32,
    levels: usize,
    t_end: Option<f64>,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    check_levels(levels)?;
    supermarket_tail(rho, d, 1).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut params = MeanFieldParams::new(rho, d, levels);
    if let Some(t) = t_end {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::Usage(format!(
                "--t-end must be a positive number, got {t}"
            )));
        }
        params.t_end = t;
    }
    let traj = meanfield_ode(params)?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "supermarket rho = {rho}, d = {d}, K = {levels}, stopped at t = {:.2} ({})",
        traj.final_time,
        if traj.settled {
            "settled"
        } else {
            "t_end reached"
        }
    );
    let _ = writeln!(
        s,
        "{:>4} {:>24} {:>24} {:>10}",
        "k", "ode", "closed-form", "diff"
    );
    let mut worst: f64 = 0.0;
    for (i, u) in traj.final_state.iter().enumerate() {
        let exact = supermarket_tail(rho, d, i + 1)?;
        worst = worst.max((u - exact).abs());
        let _ = writeln!(
            s,
            "{:>4} {:>24} {:>24} {:>10.3e}",
            i + 1,
            fmt_num(*u),
            fmt_num(exact),
            (u - exact).abs()
        );
    }
    let _ = writeln!(s, "max diff {worst:.3e}, monotone {}", traj.monotone);
    out.write_all(s.as_bytes())
        .map_err(|e| Failure::Usage(format!("cannot write output: {e}")))?;
    Ok(0)
}
