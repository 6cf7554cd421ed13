use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use wardrop::braess::{
    bp_demand_bound, check_v_relations, default_candidates, detect_flow_losing, detect_slope_increase,
    extension_gap, scan_unnecessary, CostGap, ScanEntry, GAP_TOL,
};
use wardrop::io::{self, Series};
use wardrop::{
    compute_we, final_interval, trace_curve, BpReport, Caps, Condition, Error, ModifiedGame, PathCostModel,
    PiecewiseAffineCurve, RoutingGame, Tolerances, Verdict,
};

/// Wardrop equilibria, equilibrium cost curves and Braess paradox checks for affine routing games.
#[derive(Parser, Debug)]
#[command(name = "wardrop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Directory for output files; printed to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output formats, comma separated.
    #[arg(long, global = true, value_delimiter = ',', default_value = "text")]
    format: Vec<Format>,
    /// Optimality tolerance of the LP and QP solvers
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol_kkt: f64,
    /// Feasibility tolerance of the LP and QP solvers
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol_feas: f64,
    /// Relative tolerance for active and used path classification
    #[arg(long, global = true, default_value_t = 1e-7)]
    tol_class: f64,
    /// Maximum number of enumerated paths
    #[arg(long, global = true, default_value_t = 10_000)]
    cap_paths: usize,
    /// Maximum number of traced breakpoints
    #[arg(long, global = true, default_value_t = 10_000)]
    cap_breakpoints: usize,
    /// Maximum number of removed sets in a subset scan
    #[arg(long, global = true, default_value_t = 4096)]
    cap_subsets: usize,
    /// Maximum solver iterations
    #[arg(long, global = true, default_value_t = 50_000)]
    cap_iterations: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Svg,
    Json,
}

#[derive(Args, Debug)]
struct GameArgs {
    /// Network JSON file.
    #[arg(long)]
    network: PathBuf,
    /// Paths to remove, as labels (`p3`) or 1-based numbers, comma separated.
    #[arg(long, value_delimiter = ',')]
    remove: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Equilibrium at one demand.
    Solve {
        #[command(flatten)]
        game: GameArgs,
        #[arg(long)]
        demand: f64,
    },
    /// Equilibrium cost curve over all demands.
    Sweep {
        #[command(flatten)]
        game: GameArgs,
        /// Largest demand to trace and tabulate.
        #[arg(long)]
        dmax: Option<f64>,
    },
    /// Braess paradox checks at one demand.
    Braess {
        #[command(flatten)]
        game: GameArgs,
        #[arg(long)]
        demand: f64,
        /// JSON list of removed path sets to try, e.g. `[["p3"], ["p3", "p4"]]`.
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Largest removed set size for the unnecessary-set scan; 0 disables it.
        #[arg(long, default_value_t = 1)]
        scan_max: usize,
    },
    /// Cost difference integrals J and W of a modified game.
    Measures {
        #[command(flatten)]
        game: GameArgs,
        /// Upper limit of the integrals
        #[arg(long)]
        dmax: f64,
    },
    /// Final interval of the equilibrium cost curve.
    Final {
        #[command(flatten)]
        game: GameArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::NotPsd(_)
            | Error::Infeasible
            | Error::Unbounded
            | Error::MaxIterations(_)
            | Error::MaxBreakpoints(_)
            | Error::Numerical(_),
        ) => 3,
        _ => 2,
    }
}

struct Output {
    dir: Option<PathBuf>,
    formats: Vec<Format>,
}

impl Output {
    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn emit(&self, name: &str, content: &str) -> anyhow::Result<()> {
        match &self.dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join(name);
                std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
                info!("wrote {}", path.display());
            }
            None => print!("{content}"),
        }
        Ok(())
    }

    /// Human-readable text always goes to stdout.
    fn text(&self, content: &str) {
        if self.wants(Format::Text) {
            print!("{content}");
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let r = &cli.run;
    let tol = Tolerances { kkt: r.tol_kkt, feas: r.tol_feas, class: r.tol_class };
    let caps = Caps {
        paths: r.cap_paths,
        breakpoints: r.cap_breakpoints,
        subsets: r.cap_subsets,
        solver_iterations: r.cap_iterations,
    };
    let config = wardrop::io::RunConfig { tolerances: tol, caps, out_dir: r.out.clone(), formats: Vec::new() };
    config.validate()?;
    let out = Output { dir: r.out.clone(), formats: r.format.clone() };

    let game_args = match &cli.command {
        Command::Solve { game, .. }
        | Command::Sweep { game, .. }
        | Command::Braess { game, .. }
        | Command::Measures { game, .. }
        | Command::Final { game } => game,
    };
    let file = io::parse_network(&game_args.network).with_context(|| format!("loading {}", game_args.network.display()))?;
    let model = file.cost_model(caps.paths)?;
    let base = RoutingGame::new(&model).with_config(tol, caps);
    let removed = parse_labels(&game_args.remove, model.n_paths())?;

    match cli.command {
        Command::Solve { demand, .. } => solve(&game_for(&base, &removed)?, demand, &out),
        Command::Sweep { dmax, .. } => sweep(&game_for(&base, &removed)?, dmax, &out),
        Command::Final { .. } => final_report(&game_for(&base, &removed)?, &out),
        Command::Braess { demand, candidates, scan_max, .. } => {
            let mut user = match candidates {
                Some(path) => read_candidates(&path, model.n_paths())?,
                None => Vec::new(),
            };
            if !removed.is_empty() {
                user.insert(0, removed);
            }
            braess(&base, demand, &user, scan_max, &out)
        }
        Command::Measures { dmax, .. } => {
            if removed.is_empty() {
                bail!(Error::InvalidPathSet("measures needs --remove".into()));
            }
            measures(&base, &removed, dmax, &out)
        }
    }
}

fn game_for<'a>(base: &RoutingGame<'a>, removed: &[usize]) -> anyhow::Result<RoutingGame<'a>> {
    Ok(if removed.is_empty() { base.clone() } else { ModifiedGame::new(base, removed)?.game })
}

fn parse_label(label: &str, n: usize) -> anyhow::Result<usize> {
    let t = label.trim();
    let digits = t.strip_prefix(['p', 'P']).unwrap_or(t);
    let k: usize = digits.parse().map_err(|_| Error::InvalidPathSet(format!("bad path label `{t}`")))?;
    if k == 0 || k > n {
        bail!(Error::InvalidPathSet(format!("path `{t}` does not exist; the network has {n} paths")));
    }
    Ok(k - 1)
}

fn parse_labels(labels: &[String], n: usize) -> anyhow::Result<Vec<usize>> {
    let mut out = labels.iter().filter(|l| !l.trim().is_empty()).map(|l| parse_label(l, n)).collect::<anyhow::Result<Vec<_>>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn read_candidates(path: &FsPath, n: usize) -> anyhow::Result<Vec<Vec<usize>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column())))?;
    let sets = value.as_array().ok_or_else(|| Error::Parse("candidates must be a list of path lists".into()))?;
    sets.iter()
        .map(|set| {
            let items = set.as_array().ok_or_else(|| Error::Parse("each candidate must be a list".into()))?;
            let labels = items
                .iter()
                .map(|v| match v {
                    serde_json::Value::String(s) => Ok(s.clone()),
                    serde_json::Value::Number(k) => Ok(k.to_string()),
                    _ => Err(anyhow!(Error::Parse(format!("bad path entry {v}")))),
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            parse_labels(&labels, n)
        })
        .collect()
}

/// Number for text output: nine decimals, trailing zeros trimmed.
fn num(x: f64) -> String {
    if !x.is_finite() {
        return if x > 0.0 { "inf".into() } else { x.to_string() };
    }
    let s = format!("{x:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn nums(xs: &[f64]) -> String {
    format!("[{}]", xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", "))
}

fn labels(set: &[usize]) -> String {
    let v: Vec<String> = set.iter().map(|&p| PathCostModel::label(p)).collect();
    format!("{{{}}}", v.join(","))
}

fn csv_labels(set: &[usize]) -> String {
    set.iter().map(|&p| PathCostModel::label(p)).collect::<Vec<_>>().join(";")
}

fn solve(game: &RoutingGame, demand: f64, out: &Output) -> anyhow::Result<()> {
    let snap = compute_we(game, demand)?;
    let mut t = String::new();
    writeln!(t, "demand          {}", num(snap.demand))?;
    writeln!(t, "equilibrium     {}", num(snap.we_cost))?;
    writeln!(t, "beckmann        {}", num(snap.beckmann))?;
    writeln!(t, "active          {}", labels(&snap.active))?;
    writeln!(t, "used            {}", labels(&snap.used))?;
    writeln!(t, "{:<6} {:<16} {:>14} {:>14}", "path", "edges", "flow", "cost")?;
    for p in 0..game.n_paths() {
        let edges: Vec<String> = game.model.paths[p].edges.iter().map(|e| format!("e{}", e + 1)).collect();
        let mark = if game.is_retained(p) { "" } else { " (removed)" };
        writeln!(t, "{:<6} {:<16} {:>14.9} {:>14.9}{mark}", PathCostModel::label(p), edges.join(","), snap.flow[p], snap.cost[p])?;
    }
    out.text(&t);
    if out.wants(Format::Csv) {
        let n = game.n_paths();
        let mut c = String::from("D,lambda_we");
        for p in 0..n {
            write!(c, ",f_{}", PathCostModel::label(p))?;
        }
        for p in 0..n {
            write!(c, ",lambda_{}", PathCostModel::label(p))?;
        }
        write!(c, "\n{},{}", snap.demand, snap.we_cost)?;
        for x in snap.flow.iter().chain(snap.cost.iter()) {
            write!(c, ",{x}")?;
        }
        c.push('\n');
        out.emit("solve.csv", &c)?;
    }
    if out.wants(Format::Json) {
        out.emit("solve.json", &(serde_json::to_string_pretty(&snap)? + "\n"))?;
    }
    Ok(())
}

/// Upper end for tables and plots when no demand cap is given.
fn default_span(curve: &PiecewiseAffineCurve) -> f64 {
    let last = curve.breakpoint_demands().last().copied().unwrap_or(0.0);
    if last > 0.0 { 1.5 * last } else { 1.0 }
}

fn sweep(game: &RoutingGame, dmax: Option<f64>, out: &Output) -> anyhow::Result<()> {
    if let Some(d) = dmax {
        if !(d.is_finite() && d >= 0.0) {
            bail!(Error::InvalidDemand(d));
        }
    }
    let curve = trace_curve(game, dmax)?;
    let hi = dmax.unwrap_or_else(|| default_span(&curve));
    let mut t = String::new();
    writeln!(t, "breakpoints     {}{}", nums(&curve.breakpoint_demands()), if curve.complete { "" } else { " (truncated)" })?;
    for iv in &curve.intervals {
        let end = iv.end.map_or("inf".into(), num);
        let (s, b) = iv.affine();
        writeln!(t, "[{}, {end}): lambda = {}·D + {}  active {}  used {}", num(iv.start), num(s), num(b), labels(&iv.active), labels(&iv.used))?;
    }
    for r in detect_slope_increase(&curve) {
        writeln!(t, "BP on [{}, {}): {}", num(r.demand_lo), num(r.demand_hi), r.detail)?;
    }
    out.text(&t);
    if out.wants(Format::Csv) {
        let mut buf = Vec::new();
        io::emit_intervals_csv(&curve, &mut buf)?;
        out.emit("intervals.csv", &String::from_utf8(buf)?)?;
        let mut buf = Vec::new();
        io::emit_curve_csv(&curve, 0.0, hi, &mut buf)?;
        out.emit("curve.csv", &String::from_utf8(buf)?)?;
    }
    if out.wants(Format::Svg) {
        let mut series = vec![io::we_cost_series(&curve, hi, "equilibrium")];
        series.extend(game.retained().into_iter().map(|p| io::path_cost_series(&curve, p, hi)));
        out.emit("curve.svg", &io::render_svg(&series, &curve.breakpoint_demands(), "Equilibrium and path costs"))?;
    }
    if out.wants(Format::Json) {
        out.emit("curve.json", &(serde_json::to_string_pretty(&curve)? + "\n"))?;
    }
    Ok(())
}

fn final_report(game: &RoutingGame, out: &Output) -> anyhow::Result<()> {
    let f = final_interval(game)?;
    let mut t = String::new();
    writeln!(t, "last breakpoint {}", num(f.last_breakpoint))?;
    writeln!(t, "slope           {}", num(f.slope))?;
    writeln!(t, "intercept       {}", num(f.beta_bar))?;
    writeln!(t, "active          {}", labels(&f.active))?;
    writeln!(t, "cost slopes     {}", nums(&f.cost_slope))?;
    out.text(&t);
    if out.wants(Format::Csv) {
        let c = format!(
            "last_breakpoint,slope,intercept,active\n{},{},{},{}\n",
            f.last_breakpoint,
            f.slope,
            f.beta_bar,
            csv_labels(&f.active)
        );
        out.emit("final.csv", &c)?;
    }
    if out.wants(Format::Json) {
        out.emit("final.json", &(serde_json::to_string_pretty(&f)? + "\n"))?;
    }
    Ok(())
}

fn braess(base: &RoutingGame, demand: f64, user: &[Vec<usize>], scan_max: usize, out: &Output) -> anyhow::Result<()> {
    if !(demand.is_finite() && demand >= 0.0) {
        bail!(Error::InvalidDemand(demand));
    }
    let curve = trace_curve(base, None)?;
    let lambda = curve.we_cost(demand);
    let mut reports: Vec<BpReport> = detect_slope_increase(&curve);
    reports.push(detect_flow_losing(base, &compute_we(base, demand)?)?);
    let candidates = default_candidates(base, &curve, user);
    reports.extend(extension_gap(base, &curve, &candidates, demand));
    for removed in &candidates {
        let mg = ModifiedGame::new(base, removed)?;
        let lt = compute_we(&mg.game, demand)?.we_cost;
        let detected = lambda - lt > GAP_TOL * (1.0 + lambda.abs());
        reports.push(BpReport {
            verdict: if detected { Verdict::BpDetected } else { Verdict::NoEvidence },
            condition: Condition::ExplicitModifiedGame,
            demand_lo: demand,
            demand_hi: demand,
            witness: detected.then(|| removed.clone()),
            candidate: Some(removed.clone()),
            cost_gap: Some(lambda - lt),
            detail: format!("modified equilibrium cost {lt:.6}"),
        });
    }
    let scan = if scan_max > 0 { scan_unnecessary(base, demand, scan_max)? } else { Vec::new() };

    let mut t = String::new();
    writeln!(t, "demand {}, equilibrium cost {}", num(demand), num(lambda))?;
    writeln!(t, "{:<12} {:<24} {:<22} {:<14} {:<14} {:>12}  detail", "verdict", "condition", "demand", "candidate", "witness", "gap")?;
    for r in &reports {
        let span =
            if r.demand_lo == r.demand_hi { num(r.demand_lo) } else { format!("[{}, {})", num(r.demand_lo), num(r.demand_hi)) };
        writeln!(
            t,
            "{:<12} {:<24} {:<22} {:<14} {:<14} {:>12}  {}",
            verdict_name(r.verdict),
            condition_name(r.condition),
            span,
            r.candidate.as_deref().map_or("-".into(), labels),
            r.witness.as_deref().map_or("-".into(), labels),
            r.cost_gap.map_or("-".into(), num),
            r.detail
        )?;
    }
    for e in &scan {
        writeln!(t, "unnecessary {}: {}", labels(&e.removed), describe_scan(e))?;
    }
    out.text(&t);
    if out.wants(Format::Csv) {
        let mut c = String::from("verdict,condition,demand_lo,demand_hi,candidate,witness,cost_gap,detail\n");
        for r in &reports {
            writeln!(
                c,
                "{},{},{},{},{},{},{},\"{}\"",
                verdict_name(r.verdict),
                condition_name(r.condition),
                r.demand_lo,
                r.demand_hi,
                r.candidate.as_deref().map_or(String::new(), csv_labels),
                r.witness.as_deref().map_or(String::new(), csv_labels),
                r.cost_gap.map_or(String::new(), |g| g.to_string()),
                r.detail.replace('"', "'")
            )?;
        }
        out.emit("braess.csv", &c)?;
    }
    if out.wants(Format::Json) {
        let doc = serde_json::json!({ "demand": demand, "we_cost": lambda, "reports": reports, "scan": scan });
        out.emit("braess.json", &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    }
    Ok(())
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::BpDetected => "bp_detected",
        Verdict::NoEvidence => "no_evidence",
    }
}

fn condition_name(c: Condition) -> &'static str {
    match c {
        Condition::SlopeIncrease => "slope_increase",
        Condition::FlowLosing => "flow_losing",
        Condition::ExtensionGap => "extension_gap",
        Condition::ExplicitModifiedGame => "explicit_modified_game",
    }
}

fn describe_scan(e: &ScanEntry) -> String {
    let fmt = |ws: &[(f64, Option<f64>)]| {
        ws.iter().map(|&(a, b)| format!("({}, {})", num(a), b.map_or("inf".into(), num))).collect::<Vec<_>>().join(" ")
    };
    let mut s = format!(
        "unnecessary on [{}, {}]",
        num(e.unnecessary_from),
        e.unnecessary_to.map_or("inf".into(), num)
    );
    if !e.bp_windows.is_empty() {
        write!(s, ", BP on {}", fmt(&e.bp_windows)).unwrap();
    }
    if !e.benefit_windows.is_empty() {
        write!(s, ", beneficial on {}", fmt(&e.benefit_windows)).unwrap();
    }
    if let Some(d) = e.necessary_again_from {
        write!(s, ", necessary again beyond {}", num(d)).unwrap();
    }
    s
}

fn measures(base: &RoutingGame, removed: &[usize], dmax: f64, out: &Output) -> anyhow::Result<()> {
    if !(dmax.is_finite() && dmax >= 0.0) {
        bail!(Error::InvalidDemand(dmax));
    }
    let mg = ModifiedGame::new(base, removed)?;
    let curve = trace_curve(base, Some(dmax))?;
    let mcurve = trace_curve(&mg.game, Some(dmax))?;
    let gap = CostGap::new(&curve, &mcurve);
    let rel = check_v_relations(&mg, base, dmax)?;
    let bound = bp_demand_bound(base, &mg)?;

    let mut t = String::new();
    writeln!(t, "removed         {}", labels(&mg.removed))?;
    writeln!(t, "J({})  {}", num(dmax), num(gap.integral(dmax)))?;
    writeln!(t, "W({})  {}", num(dmax), num(gap.weighted_integral(dmax)))?;
    writeln!(t, "V = {}, modified V = {}, equal: {}", num(rel.v), num(rel.v_modified), rel.equal)?;
    if bound.is_finite() {
        writeln!(t, "no BP from this removal beyond demand {}", num(bound))?;
    } else {
        writeln!(t, "the modified game stays cheaper for all large demands")?;
    }
    out.text(&t);

    let mut ds: Vec<f64> = io::sample_demands(&curve, 0.0, dmax).into_iter().map(|(d, _)| d).collect();
    ds.extend(io::sample_demands(&mcurve, 0.0, dmax).into_iter().map(|(d, _)| d));
    ds.sort_by(f64::total_cmp);
    ds.dedup();
    if out.wants(Format::Csv) {
        let mut c = String::from("D,lambda,lambda_modified,J,W\n");
        for &d in &ds {
            writeln!(c, "{d},{},{},{},{}", curve.we_cost(d), mcurve.we_cost(d), gap.integral(d), gap.weighted_integral(d))?;
        }
        out.emit("measures.csv", &c)?;
    }
    if out.wants(Format::Svg) {
        let mut ticks = curve.breakpoint_demands();
        ticks.extend(mcurve.breakpoint_demands());
        ticks.sort_by(f64::total_cmp);
        ticks.dedup();
        let cost = vec![
            Series::new("full game", ds.iter().map(|&d| (d, curve.we_cost(d))).collect()),
            Series::new("modified", ds.iter().map(|&d| (d, mcurve.we_cost(d))).collect()),
        ];
        out.emit("costs.svg", &io::render_svg(&cost, &ticks, "Equilibrium cost"))?;
        let pot = vec![
            Series::new("V", ds.iter().map(|&d| (d, curve.beckmann(d))).collect()),
            Series::new("modified V", ds.iter().map(|&d| (d, mcurve.beckmann(d))).collect()),
        ];
        out.emit("potential.svg", &io::render_svg(&pot, &ticks, "Beckmann potential"))?;
    }
    if out.wants(Format::Json) {
        let doc = serde_json::json!({
            "removed": mg.removed,
            "dmax": dmax,
            "J": gap.integral(dmax),
            "W": gap.weighted_integral(dmax),
            "v_relation": rel,
            "bp_demand_bound": bound,
        });
        out.emit("measures.json", &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    }
    Ok(())
}
