//! The `factorplan` command line. [`run`] is the whole program; `main` only
//! wires it to the process streams.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use factorplan::analysis::{
    ingest_manifest, manifest_provenance, pairwise_table, per_value_success, rates_document,
    tier_values, PairwiseTable, TierReport, ValueRate,
};
use factorplan::budgeting::{declared_cost, CostRow};
use factorplan::coverage::{
    all_pairwise_grids, coverage_report, eval_sample, evaluation_document, pairwise_grid,
};
use factorplan::session::{setup_instructions, SessionEvent, SessionState};
use factorplan::similarity::{select_values_for_budget, Metric};
use factorplan::simulator::{compare_strategies, CompareMode, Comparison, ModelDocument};
use factorplan::{
    generate_plan, parse_space, plan_at_rate, FactorConfig, FactorSpace, Model, PlanDocument,
    PlanParams, Strategy,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "factorplan", version, about = "Plan and score data collection over factor spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a collection plan
    Plan(PlanArgs),
    /// Factor-change cost of a plan, as CSV
    Cost(CostArgs),
    /// Value and combination coverage of a plan or manifest
    Coverage(CoverageArgs),
    /// Pairwise evaluation grids or a uniform evaluation sample
    Grid(GridArgs),
    /// Pick representative values per factor for a change budget
    Select(SelectArgs),
    /// Compare strategies under a generalization model
    Simulate(SimulateArgs),
    /// Pairwise tables, per-value success and tiers from a manifest
    Analyze(AnalyzeArgs),
    /// Step through a plan during collection
    #[command(subcommand)]
    Session(SessionCommand),
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long)]
    space: PathBuf,
    /// complete, random, single_factor:<i>, diagonal, l, stair, no_variation
    #[arg(long)]
    strategy: Strategy,
    /// Total demonstrations to spread over the entries
    #[arg(long)]
    demos: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Truncate to what fits in this many factor changes
    #[arg(long, conflicts_with_all = ["no_dedupe", "configs"])]
    budget: Option<usize>,
    #[arg(long)]
    no_dedupe: bool,
    /// Number of configurations for the random strategy
    #[arg(long)]
    configs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CostArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Resolve the plan against its space instead of reading it standalone
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    plan: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    space: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long)]
    space: PathBuf,
    /// `all`, or two factors by name or index, e.g. `0,3`
    #[arg(long, default_value = "all", conflicts_with = "sample")]
    pairs: String,
    /// Draw this many configurations uniformly from the whole space instead
    #[arg(long, requires = "seed")]
    sample: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    budget: usize,
    #[arg(long)]
    strategy: Strategy,
    /// `auto`, one metric for every factor, or a comma list with one per factor
    #[arg(long, default_value = "auto")]
    metric: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the reduced space
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    strategies: Vec<Strategy>,
    #[arg(long, value_delimiter = ',', required = true)]
    budgets: Vec<usize>,
    #[arg(long)]
    demos: usize,
    /// Comma list and/or half-open ranges, e.g. `0..20` or `1,5,9`
    #[arg(long, default_value = "0")]
    seeds: String,
    /// Score by Monte Carlo with this many draws instead of exactly
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    space: PathBuf,
    #[arg(long, default_value_t = 3)]
    tiers: usize,
    /// Also write the pairwise table as CSV
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum SessionCommand {
    /// Start a session and write its checkpoint
    Init {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        state: PathBuf,
        /// Overwrite an existing checkpoint
        #[arg(long)]
        force: bool,
    },
    /// Record one event and checkpoint
    Step {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        state: PathBuf,
        /// demo_done, skip_entry or status
        #[arg(long, default_value = "demo_done")]
        event: SessionEvent,
    },
    /// Print where the session stands without recording anything
    Status {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        state: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Invalid(String),
}

impl From<factorplan::Error> for Failure {
    fn from(e: factorplan::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn emit(&mut self, path: Option<&Path>, text: &str) -> CliResult {
        match path {
            Some(p) => write_file(p, text),
            None => self
                .out
                .write_all(text.as_bytes())
                .map_err(|e| Failure::Invalid(format!("stdout: {e}"))),
        }
    }

    fn note(&mut self, text: impl AsRef<str>) {
        let _ = writeln!(self.err, "{}", text.as_ref());
    }
}

/// Runs one invocation and returns its exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let mut io = Io { out, err };
    let result = match cli.command {
        Command::Plan(a) => plan(a, &mut io),
        Command::Cost(a) => cost(a, &mut io),
        Command::Coverage(a) => coverage(a, &mut io),
        Command::Grid(a) => grid(a, &mut io),
        Command::Select(a) => select(a, &mut io),
        Command::Simulate(a) => simulate(a, &mut io),
        Command::Analyze(a) => analyze(a, &mut io),
        Command::Session(c) => session(c, &mut io),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            io.note(format!("error: {msg}"));
            EXIT_USAGE
        }
        Err(Failure::Invalid(msg)) => {
            io.note(format!("error: {msg}"));
            EXIT_INVALID
        }
    }
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

/// Writes through a sibling temp file so an interrupted write never leaves
/// a truncated file behind.
fn write_file(path: &Path, text: &str) -> CliResult {
    let fail = |e: std::io::Error| Failure::Invalid(format!("{}: {e}", path.display()));
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, text).map_err(fail)?;
    fs::rename(&tmp, path).map_err(fail)
}

/// Runs `f` and prefixes any error with the file it came from.
fn at<T>(path: &Path, f: impl FnOnce() -> factorplan::Result<T>) -> CliResult<T> {
    f().map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn load_space(path: &Path) -> CliResult<FactorSpace> {
    let text = read_file(path)?;
    at(path, || parse_space(&text))
}

fn load_plan_document(path: &Path) -> CliResult<PlanDocument> {
    let text = read_file(path)?;
    at(path, || PlanDocument::parse(&text))
}

fn load_manifest(path: &Path, space: &FactorSpace) -> CliResult<Vec<factorplan::analysis::EpisodeRecord>> {
    let text = read_file(path)?;
    at(path, || ingest_manifest(&text, space))
}

fn to_csv<R: Serialize>(rows: &[R]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| Failure::Invalid(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Failure::Invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

fn plan(a: PlanArgs, io: &mut Io) -> CliResult {
    let space = load_space(&a.space)?;
    let plan = match a.budget {
        Some(budget) => plan_at_rate(&space, a.strategy, budget, a.demos, a.seed)?,
        None => {
            if a.configs.is_some() && a.strategy != Strategy::Random {
                return Err(Failure::Usage("--configs only applies to the random strategy".into()));
            }
            let params = PlanParams {
                num_configs: a.configs,
                dedupe: !a.no_dedupe,
            };
            generate_plan(&space, a.strategy, params, a.demos, a.seed)?
        }
    };
    io.emit(a.out.as_deref(), &plan.to_document(&space).to_json())?;
    io.note(format!(
        "{} entries, {} demos",
        plan.entries.len(),
        plan.total_demos()
    ));
    Ok(())
}

fn cost(a: CostArgs, io: &mut Io) -> CliResult {
    let doc = load_plan_document(&a.plan)?;
    let plan = match &a.space {
        Some(path) => {
            let space = load_space(path)?;
            at(&a.plan, || doc.to_plan(&space))?
        }
        None => at(&a.plan, || doc.to_detached_plan())?,
    };
    let row = at(&a.plan, || CostRow::for_plan(&plan))?;
    io.emit(a.out.as_deref(), &to_csv(&[row])?)?;
    if let Some(nominal) = declared_cost(&plan)?.nominal_total {
        io.note(format!(
            "note: counting one change per enumerated config gives {nominal}"
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct CoverageRow<'a> {
    factor: &'a str,
    values_total: usize,
    values_seen: usize,
    coverage: f64,
}

fn coverage(a: CoverageArgs, io: &mut Io) -> CliResult {
    let space = load_space(&a.space)?;
    let configs: Vec<FactorConfig> = match (&a.plan, &a.manifest) {
        (Some(path), _) => {
            let doc = load_plan_document(path)?;
            let entries = doc.entries.iter().map(|e| space.config_from_ids(&e.config));
            at(path, || entries.collect())?
        }
        (None, Some(path)) => load_manifest(path, &space)?
            .into_iter()
            .map(|r| r.config)
            .collect(),
        (None, None) => return Err(Failure::Usage("one of --plan or --manifest is required".into())),
    };
    let doc = coverage_report(&configs, &space)?.to_document(&space);
    let text = match a.format {
        Format::Json => doc.to_json(),
        Format::Csv => to_csv(
            &doc.factors
                .iter()
                .map(|f| CoverageRow {
                    factor: &f.factor,
                    values_total: f.values_total,
                    values_seen: f.values_seen,
                    coverage: f.coverage,
                })
                .collect::<Vec<_>>(),
        )?,
    };
    io.emit(a.out.as_deref(), &text)
}

fn factor_ref(space: &FactorSpace, token: &str) -> CliResult<usize> {
    let token = token.trim();
    if let Ok(i) = token.parse::<usize>() {
        if i < space.num_factors() {
            return Ok(i);
        }
    }
    space
        .factor_index(token)
        .ok_or_else(|| Failure::Usage(format!("no factor `{token}` in the space")))
}

fn grid(a: GridArgs, io: &mut Io) -> CliResult {
    let space = load_space(&a.space)?;
    let (kind, seed, configs) = if let Some(n) = a.sample {
        let seed = a.seed.unwrap_or(0);
        ("sample".to_string(), seed, eval_sample(&space, n, seed)?)
    } else if a.pairs == "all" {
        let configs = all_pairwise_grids(&space)
            .into_iter()
            .flat_map(|(_, g)| g)
            .collect();
        ("grid:all".to_string(), 0, configs)
    } else {
        let parts: Vec<&str> = a.pairs.split(',').collect();
        let [i, j] = parts.as_slice() else {
            return Err(Failure::Usage(format!("--pairs expects `all` or `i,j`, got `{}`", a.pairs)));
        };
        let pair = (factor_ref(&space, i)?, factor_ref(&space, j)?);
        let configs = pairwise_grid(&space, pair)?;
        let kind = format!(
            "grid:{},{}",
            space.factor(pair.0).name,
            space.factor(pair.1).name
        );
        (kind, 0, configs)
    };
    let doc = evaluation_document(&space, &kind, seed, &configs);
    io.emit(a.out.as_deref(), &doc.to_json())?;
    io.note(format!("{} configs", configs.len()));
    Ok(())
}

fn select(a: SelectArgs, io: &mut Io) -> CliResult {
    let space = load_space(&a.space)?;
    let tokens: Vec<&str> = a.metric.split(',').map(str::trim).collect();
    let metrics: Vec<Metric> = match tokens.as_slice() {
        ["auto"] => space.factors().iter().map(Metric::infer).collect(),
        [one] => {
            let m: Metric = one.parse().map_err(Failure::Usage)?;
            vec![m; space.num_factors()]
        }
        many if many.len() == space.num_factors() => many
            .iter()
            .enumerate()
            .map(|(i, t)| match *t {
                "auto" => Ok(Metric::infer(space.factor(i))),
                t => t.parse().map_err(Failure::Usage),
            })
            .collect::<CliResult<_>>()?,
        many => {
            return Err(Failure::Usage(format!(
                "--metric lists {} metrics for {} factors",
                many.len(),
                space.num_factors()
            )))
        }
    };
    let (reduced, report) =
        select_values_for_budget::<f64>(&space, a.strategy, a.budget, &metrics, a.seed)?;
    write_file(&a.out, &reduced.to_json())?;
    io.emit(None, &report.to_json())
}

fn parse_seeds(text: &str) -> CliResult<Vec<u64>> {
    let bad = || Failure::Usage(format!("--seeds: cannot read `{text}`"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((lo, hi)) => {
                let lo: u64 = lo.parse().map_err(|_| bad())?;
                let hi: u64 = hi.parse().map_err(|_| bad())?;
                seeds.extend(lo..hi);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[derive(Serialize)]
struct SimulateRow {
    strategy: String,
    budget: usize,
    seed_count: usize,
    mean: f64,
    stderr: Option<f64>,
    compositional_mean: Option<f64>,
}

fn simulate(a: SimulateArgs, io: &mut Io) -> CliResult {
    let space = load_space(&a.space)?;
    let model_text = read_file(&a.model)?;
    let (model, warnings): (Model, _) = at(&a.model, || {
        ModelDocument::parse(&model_text)?.into_model(&space)
    })?;
    for w in warnings {
        io.note(format!("warning: {w}"));
    }
    let seeds = parse_seeds(&a.seeds)?;
    let mode = match a.mc_samples {
        Some(samples) => CompareMode::MonteCarlo { samples },
        None => CompareMode::Exact,
    };
    let rows = compare_strategies(&Comparison {
        space: &space,
        model: &model,
        budgets: &a.budgets,
        total_demos: a.demos,
        strategies: &a.strategies,
        seeds: &seeds,
        mode,
    })?;
    let rows: Vec<SimulateRow> = rows
        .into_iter()
        .map(|r| SimulateRow {
            strategy: r.strategy.to_string(),
            budget: r.budget,
            seed_count: r.seed_count,
            mean: r.mean,
            stderr: r.stderr,
            compositional_mean: r.compositional_mean,
        })
        .collect();
    io.emit(a.out.as_deref(), &to_csv(&rows)?)
}

#[derive(Serialize)]
struct AnalysisDocument {
    episodes: usize,
    pairwise: PairwiseTable,
    per_value: BTreeMap<String, BTreeMap<String, ValueRate>>,
    tiers: TierReport,
}

fn analyze(a: AnalyzeArgs, io: &mut Io) -> CliResult {
    if a.tiers == 0 {
        return Err(Failure::Usage("--tiers must be at least 1".into()));
    }
    let space = load_space(&a.space)?;
    let records = load_manifest(&a.manifest, &space)?;
    let table = pairwise_table(&records, &space);
    let rates = per_value_success(&records, &space);
    let mut tiers = tier_values(&rates, &space, a.tiers);
    tiers.provenance = manifest_provenance(&records);
    for w in &tiers.warnings {
        io.note(format!("warning: {w}"));
    }
    if let Some(path) = &a.table {
        write_file(path, &table.to_csv(&space))?;
    }
    let doc = AnalysisDocument {
        episodes: records.len(),
        per_value: rates_document(&rates, &space),
        pairwise: table,
        tiers,
    };
    io.emit(a.out.as_deref(), &pretty(&doc))
}

fn load_state(path: &Path, plan: &PlanDocument) -> CliResult<SessionState> {
    let text = read_file(path)?;
    at(path, || SessionState::load(&text, plan))
}

fn session(cmd: SessionCommand, io: &mut Io) -> CliResult {
    match cmd {
        SessionCommand::Init { plan, state, force } => {
            let doc = load_plan_document(&plan)?;
            if state.exists() && !force {
                return Err(Failure::Invalid(format!(
                    "{}: checkpoint already exists (use --force to restart)",
                    state.display()
                )));
            }
            let st = at(&plan, || SessionState::start(&doc))?;
            write_file(&state, &st.to_json())?;
            let mut text = String::from("setup:\n");
            for line in setup_instructions(&doc) {
                text.push_str(&format!("  {line}\n"));
            }
            text.push_str(&st.status_line(&doc));
            text.push('\n');
            io.emit(None, &text)
        }
        SessionCommand::Step { plan, state, event } => {
            let doc = load_plan_document(&plan)?;
            let mut st = load_state(&state, &doc)?;
            let out = st.step(&doc, event)?;
            write_file(&state, &st.to_json())?;
            io.emit(None, &(out.text + "\n"))
        }
        SessionCommand::Status { plan, state } => {
            let doc = load_plan_document(&plan)?;
            let st = load_state(&state, &doc)?;
            io.emit(None, &(st.status_line(&doc) + "\n"))
        }
    }
}
