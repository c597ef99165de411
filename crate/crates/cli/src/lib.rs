//! The `agrodw` command line. [`run`] parses an argument vector, drives an
//! [`Engine`] and returns the process exit code: 0 on success, 1 on user
//! errors (bad arguments, unreadable inputs, query errors), 2 when `--strict`
//! and a load quarantined or rejected records.
//!
//! Results go to stdout and diagnostics to stderr. Without `--store` the
//! engine lives in memory for the duration of the command.

use std::io::{self, BufRead, IsTerminal, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use agrodw_core::cube::CubePolicy;
use agrodw_core::datagen::{self, default_config, DEFAULT_SEED};
use agrodw_core::engine::{CubeSummary, Engine, EngineError, IngestOutcome};
use agrodw_core::etl::{DuplicateAction, QualityReport, TransformPolicy, UnresolvedAction};
use agrodw_core::olap::{dice, drill_down, roll_up, ExecOptions, Query, ResultGrid};
use agrodw_core::schema::{builtin_schema, load_schema, parse_schema, validate_schema, ConstellationSchema};
use agrodw_core::storage::Partition;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "agrodw", version, about = "Precision-agriculture data warehouse")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Store directory; the engine is in-memory when omitted.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// `builtin` or a path to a schema file. Defaults to the stored schema,
    /// or the builtin one for a new store.
    #[arg(long, global = true)]
    schema: Option<String>,
    /// Output format; defaults to `table` on a terminal and `csv` otherwise.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Quarantine unresolved references and duplicates, and exit 2 when a
    /// load quarantines or rejects anything.
    #[arg(long, global = true)]
    strict: bool,
    /// Log to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inspect or check a schema.
    #[command(subcommand)]
    Schema(SchemaCmd),
    /// Load a CSV source into one table, or a whole dataset directory.
    Load(LoadArgs),
    /// Print the quality report.
    Quality,
    /// Build, list, refresh or export cubes.
    #[command(subcommand)]
    Cube(CubeCmd),
    /// Run one query; `-` reads the query text from stdin.
    Query {
        text: String,
        /// Ignore cubes and scan the fact partitions.
        #[arg(long)]
        scan: bool,
    },
    /// Write a synthetic dataset.
    Gen(GenArgs),
    /// Serve the HTTP API until interrupted.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
    },
    /// Interactive query loop.
    Repl,
}

#[derive(Debug, Subcommand)]
enum SchemaCmd {
    Show,
    Validate,
}

#[derive(Debug, Args)]
struct LoadArgs {
    /// Target table; requires `--input`.
    #[arg(long, requires = "input", conflicts_with = "dataset")]
    table: Option<String>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// A directory with `dim/<Dim>.csv` and `fact/<Fact>.base.csv` files.
    #[arg(long, required_unless_present = "table")]
    dataset: Option<PathBuf>,
    /// Fact partition to load into; dimensions always go to base.
    #[arg(long, default_value = "base")]
    partition: Partition,
}

#[derive(Debug, Subcommand)]
enum CubeCmd {
    /// Materialize a fact's cuboids; the policy is `full` or `cap:N`.
    Build {
        #[arg(long)]
        fact: String,
        #[arg(long, default_value = "full")]
        policy: CubePolicy,
    },
    /// List built cubes and whether they are stale.
    List,
    /// Move a fact's delta rows into base.
    MergeDelta {
        #[arg(long)]
        fact: String,
    },
    /// Write one canonical CSV per cuboid.
    Export {
        #[arg(long)]
        fact: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Target rows per fact table.
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    farmers: Option<usize>,
    #[arg(long)]
    unknown_ref_rate: Option<f64>,
    #[arg(long)]
    null_rate: Option<f64>,
}

#[derive(Debug)]
enum Failure {
    User(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::User(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Failure::User(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::User(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Runs the command line with the process's standard streams.
pub fn run(args: Vec<String>) -> i32 {
    let stdin = io::stdin();
    let tty = io::stdout().is_terminal();
    run_with(args, &mut stdin.lock(), &mut io::stdout().lock(), &mut io::stderr(), tty)
}

/// Runs the command line against explicit streams. `tty` selects the default
/// output format.
pub fn run_with(args: Vec<String>, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write, tty: bool) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    init_logging(cli.global.verbose);
    let format = cli.global.format.unwrap_or(if tty { Format::Table } else { Format::Csv });
    let mut ctx = Ctx {
        global: &cli.global,
        format,
        out,
        err,
    };
    let result = match cli.command {
        Command::Schema(cmd) => ctx.schema(cmd),
        Command::Load(args) => ctx.load(args),
        Command::Quality => ctx.quality(),
        Command::Cube(cmd) => ctx.cube(cmd),
        Command::Query { text, scan } => ctx.query(text, scan, input),
        Command::Gen(args) => ctx.gen(args),
        Command::Serve { port, bind } => ctx.serve(SocketAddr::new(bind, port)),
        Command::Repl => ctx.repl(input),
    };
    let _ = ctx.out.flush();
    match result {
        Ok(()) => 0,
        Err(f) => {
            let (Failure::User(m) | Failure::Data(m)) = &f;
            let _ = writeln!(ctx.err, "error: {m}");
            f.code()
        }
    }
}

fn init_logging(verbose: u8) {
    if verbose == 0 {
        return;
    }
    let level = if verbose == 1 { "info" } else { "debug" };
    let _ = tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::new(level))
        .try_init();
}

struct Ctx<'a> {
    global: &'a Global,
    format: Format,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::User(format!("cannot read {}: {e}", path.display())))
}

impl Ctx<'_> {
    /// The schema named by `--schema`, unvalidated, if one was given.
    fn schema_source(&self) -> Result<Option<ConstellationSchema>, Failure> {
        match self.global.schema.as_deref() {
            None => Ok(None),
            Some("builtin") => Ok(Some(builtin_schema())),
            Some(path) => {
                let bytes = read_file(Path::new(path))?;
                let text = String::from_utf8(bytes).map_err(|_| Failure::User(format!("{path} is not UTF-8")))?;
                parse_schema(&text).map(Some).map_err(|e| Failure::User(format!("{path}: {e}")))
            }
        }
    }

    fn engine(&self) -> Result<Engine, Failure> {
        let schema = match self.global.schema.as_deref() {
            None | Some("builtin") => self.schema_source()?,
            Some(path) => {
                let text = String::from_utf8(read_file(Path::new(path))?)
                    .map_err(|_| Failure::User(format!("{path} is not UTF-8")))?;
                Some(load_schema(&text).map_err(|e| Failure::User(format!("{path}: {e}")))?)
            }
        };
        let engine = match &self.global.store {
            Some(root) => Engine::open(root, schema)?,
            None => Engine::in_memory(schema.unwrap_or_else(builtin_schema))?,
        };
        if self.global.strict {
            let policy = TransformPolicy {
                unresolved: UnresolvedAction::Quarantine,
                duplicates: DuplicateAction::Quarantine,
                ..TransformPolicy::default()
            };
            return Ok(engine.with_policy(policy)?);
        }
        Ok(engine)
    }

    fn emit_json(&mut self, body: &str) -> Outcome {
        self.out.write_all(body.as_bytes())?;
        Ok(())
    }

    fn emit_table(&mut self, header: &[&str], rows: &[Vec<String>]) -> Outcome {
        match self.format {
            Format::Csv | Format::Json => {
                let mut w = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .from_writer(&mut *self.out);
                let io = |e: csv::Error| Failure::User(e.to_string());
                w.write_record(header).map_err(io)?;
                for r in rows {
                    w.write_record(r).map_err(io)?;
                }
                w.flush()?;
            }
            Format::Table => {
                let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
                for r in rows {
                    for (w, c) in widths.iter_mut().zip(r) {
                        *w = (*w).max(c.chars().count());
                    }
                }
                let line = |cells: Vec<&str>| {
                    let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
                    padded.join("  ").trim_end().to_string()
                };
                writeln!(self.out, "{}", line(header.to_vec()))?;
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                writeln!(self.out, "{}", rule.join("  "))?;
                for r in rows {
                    writeln!(self.out, "{}", line(r.iter().map(String::as_str).collect()))?;
                }
            }
        }
        Ok(())
    }

    fn emit_grid(&mut self, grid: &ResultGrid) -> Outcome {
        if self.format == Format::Json {
            return self.emit_json(&grid.to_json());
        }
        let mut header: Vec<&str> = grid.row_axes.iter().chain(&grid.col_axes).map(String::as_str).collect();
        header.extend(grid.measures.iter().map(String::as_str));
        let missing = if self.format == Format::Table { "-" } else { "" };
        let rows: Vec<Vec<String>> = grid
            .cells
            .iter()
            .map(|c| {
                let mut r: Vec<String> = grid.rows[c.r].iter().chain(&grid.cols[c.c]).map(|v| v.render()).collect();
                r.extend(c.values.iter().map(|v| v.as_ref().map_or(missing.to_string(), |v| v.render())));
                r
            })
            .collect();
        self.emit_table(&header, &rows)
    }

    fn schema(&mut self, cmd: SchemaCmd) -> Outcome {
        match cmd {
            SchemaCmd::Show => {
                let engine = self.engine()?;
                let schema = engine.schema();
                if self.format == Format::Json {
                    let body = serde_json::to_string(schema.as_ref()).expect("schema serializes");
                    return self.emit_json(&body);
                }
                writeln!(
                    self.out,
                    "{}: {} facts, {} dimensions",
                    schema.name,
                    schema.facts.len(),
                    schema.dimensions.len()
                )?;
                let mut rows = Vec::new();
                for f in schema.facts.values() {
                    let measures: Vec<&str> = f.measures.iter().map(|m| m.name.as_str()).collect();
                    rows.push(vec!["fact".into(), f.name.clone(), f.dimensions.join(" "), measures.join(" ")]);
                }
                for d in schema.dimensions.values() {
                    let path: Vec<String> = d.drill_path().iter().map(|l| l.to_string()).collect();
                    rows.push(vec!["dimension".into(), d.name.clone(), path.join(" > "), d.attributes.len().to_string()]);
                }
                self.emit_table(&["kind", "name", "dimensions / drill path", "measures / attributes"], &rows)
            }
            SchemaCmd::Validate => {
                let schema = match self.schema_source()? {
                    Some(s) => s,
                    None => self.engine()?.schema().as_ref().clone(),
                };
                let report = validate_schema(&schema);
                if self.format == Format::Json {
                    let body = serde_json::to_string(&report).expect("report serializes");
                    self.emit_json(&body)?;
                } else if report.is_clean() {
                    writeln!(self.out, "schema `{}` is valid", schema.name)?;
                } else {
                    for f in &report.findings {
                        writeln!(self.out, "{f}")?;
                    }
                }
                if report.is_clean() {
                    Ok(())
                } else {
                    Err(Failure::User(format!("{} schema finding(s)", report.findings.len())))
                }
            }
        }
    }

    fn load(&mut self, args: LoadArgs) -> Outcome {
        let engine = self.engine()?;
        let outcomes = match (&args.table, &args.input, &args.dataset) {
            (Some(table), Some(input), _) => {
                let data = read_file(input)?;
                vec![engine.ingest(table, &data, &input.display().to_string(), args.partition)?]
            }
            (_, _, Some(dir)) => engine.ingest_dataset(dir, args.partition)?,
            _ => return Err(Failure::User("give --table with --input, or --dataset".into())),
        };
        self.report_loads(&outcomes)?;
        let dirty: Vec<&IngestOutcome> = outcomes.iter().filter(|o| !o.load.is_clean()).collect();
        if self.global.strict && !dirty.is_empty() {
            let tables: Vec<&str> = dirty.iter().map(|o| o.load.table.as_str()).collect();
            return Err(Failure::Data(format!("records were quarantined or rejected in {}", tables.join(", "))));
        }
        Ok(())
    }

    fn report_loads(&mut self, outcomes: &[IngestOutcome]) -> Outcome {
        if self.format == Format::Json {
            let body = serde_json::to_string(outcomes).expect("report serializes");
            return self.emit_json(&body);
        }
        let rows: Vec<Vec<String>> = outcomes
            .iter()
            .map(|o| {
                let r = &o.load;
                vec![
                    r.table.clone(),
                    r.partition.to_string(),
                    r.input_rows.to_string(),
                    r.load.inserted.to_string(),
                    r.quarantined().to_string(),
                    r.load.rejected.to_string(),
                ]
            })
            .collect();
        self.emit_table(&["table", "partition", "input", "inserted", "quarantined", "rejected"], &rows)
    }

    fn quality(&mut self) -> Outcome {
        let report = self.engine()?.quality();
        if self.format == Format::Json {
            let body = serde_json::to_string(&report).expect("report serializes");
            return self.emit_json(&body);
        }
        self.emit_table(
            &["table", "completeness", "referential_integrity", "duplicates", "consistency", "timeliness"],
            &quality_rows(&report),
        )
    }

    fn cube(&mut self, cmd: CubeCmd) -> Outcome {
        let engine = self.engine()?;
        match cmd {
            CubeCmd::Build { fact, policy } => {
                let summary = engine.build_cube(&fact, policy)?;
                self.emit_cubes(&[summary], false)
            }
            CubeCmd::List => {
                let list = engine.cubes()?;
                self.emit_cubes(&list, true)
            }
            CubeCmd::MergeDelta { fact } => {
                let absorbed = engine.merge_delta(&fact)?;
                if self.format == Format::Json {
                    return self.emit_json(&serde_json::json!({ "absorbed": absorbed }).to_string());
                }
                self.emit_table(&["fact", "absorbed"], &[vec![fact, absorbed.to_string()]])
            }
            CubeCmd::Export { fact, out } => {
                let files = engine.export_cube(&fact, &out)?;
                for f in files {
                    writeln!(self.out, "{}", f.display())?;
                }
                Ok(())
            }
        }
    }

    fn emit_cubes(&mut self, list: &[CubeSummary], as_list: bool) -> Outcome {
        if self.format == Format::Json {
            let body = if as_list {
                serde_json::to_string(list)
            } else {
                serde_json::to_string(&list[0])
            };
            return self.emit_json(&body.expect("summary serializes"));
        }
        let rows: Vec<Vec<String>> = list
            .iter()
            .map(|s| {
                vec![
                    s.fact.clone(),
                    s.policy.to_string(),
                    s.cuboids.to_string(),
                    s.skipped.to_string(),
                    s.entries.to_string(),
                    s.base_rows.to_string(),
                    s.stale.to_string(),
                ]
            })
            .collect();
        self.emit_table(&["fact", "policy", "cuboids", "skipped", "entries", "base_rows", "stale"], &rows)
    }

    fn query(&mut self, text: String, scan: bool, input: &mut dyn BufRead) -> Outcome {
        let text = if text == "-" {
            let mut s = String::new();
            input.read_to_string(&mut s)?;
            s
        } else {
            text
        };
        let engine = self.engine()?;
        let q = engine.compile(&text)?;
        let grid = engine.query(&q, ExecOptions { force_scan: scan })?;
        self.emit_grid(&grid)
    }

    fn gen(&mut self, args: GenArgs) -> Outcome {
        let mut config = default_config();
        config.seed = args.seed;
        if let Some(n) = args.rows {
            config.rows_per_fact = n;
        }
        if let Some(n) = args.farmers {
            config.farmers = n;
        }
        if let Some(r) = args.unknown_ref_rate {
            config.unknown_ref_rate = r;
        }
        if let Some(r) = args.null_rate {
            config.null_rate = r;
        }
        let summary = datagen::generate(&config, &args.out).map_err(|e| Failure::User(e.to_string()))?;
        if self.format == Format::Json {
            let body = serde_json::to_string(&summary).expect("summary serializes");
            return self.emit_json(&body);
        }
        let rows: Vec<Vec<String>> = summary.rows.iter().map(|(t, n)| vec![t.clone(), n.to_string()]).collect();
        self.emit_table(&["table", "rows"], &rows)?;
        writeln!(
            self.err,
            "wrote {} (seed {}, {} dangling references, {} null cells)",
            args.out.display(),
            config.seed,
            summary.dangling_references,
            summary.null_cells
        )?;
        Ok(())
    }

    fn serve(&mut self, addr: SocketAddr) -> Outcome {
        let engine = Arc::new(self.engine()?);
        let rt = tokio::runtime::Runtime::new()?;
        rt.block_on(async {
            let handle = agrodw_server::start(engine, addr)
                .await
                .map_err(|e| Failure::User(e.to_string()))?;
            writeln!(self.out, "listening on http://{}", handle.addr)?;
            self.out.flush()?;
            let _ = tokio::signal::ctrl_c().await;
            handle.shutdown().await.map_err(|e| Failure::User(e.to_string()))
        })
    }

    fn repl(&mut self, input: &mut dyn BufRead) -> Outcome {
        let engine = self.engine()?;
        let schema = engine.schema();
        let mut current: Option<Query> = None;
        let mut line = String::new();
        loop {
            write!(self.err, "agrodw> ")?;
            self.err.flush()?;
            line.clear();
            if input.read_line(&mut line)? == 0 {
                writeln!(self.err)?;
                return Ok(());
            }
            let cmd = line.trim();
            if cmd.is_empty() {
                continue;
            }
            if cmd == ":quit" || cmd == ":q" {
                return Ok(());
            }
            if cmd == ":help" {
                writeln!(self.err, "{REPL_HELP}")?;
                continue;
            }
            let next = match repl_step(&engine, &schema, current.as_ref(), cmd) {
                Ok(Step::Show) => {
                    match &current {
                        Some(q) => writeln!(self.out, "{q}")?,
                        None => writeln!(self.err, "no current query")?,
                    }
                    continue;
                }
                Ok(Step::Run(q)) => q,
                Err(m) => {
                    writeln!(self.err, "error: {m}")?;
                    continue;
                }
            };
            match engine.query(&next, ExecOptions::default()) {
                Ok(grid) => {
                    self.emit_grid(&grid)?;
                    if self.format == Format::Json {
                        writeln!(self.out)?;
                    }
                    current = Some(next);
                }
                Err(e) => writeln!(self.err, "error: {e}")?,
            }
        }
    }
}

const REPL_HELP: &str = "from ...                 run a query and make it current
:up <Dim>                roll the current query up along <Dim>
:down <Dim>              drill the current query down along <Dim>
:slice <Dim>.<level> <op> <literal>
                         add a filter to the current query
:show                    print the current query
:quit                    leave";

enum Step {
    Show,
    Run(Query),
}

fn repl_step(engine: &Engine, schema: &ConstellationSchema, current: Option<&Query>, cmd: &str) -> Result<Step, String> {
    if !cmd.starts_with(':') {
        return engine.compile(cmd).map(Step::Run).map_err(|e| e.to_string());
    }
    let (op, arg) = cmd.split_once(char::is_whitespace).unwrap_or((cmd, ""));
    let arg = arg.trim();
    if op == ":show" {
        return Ok(Step::Show);
    }
    let q = current.ok_or("no current query; start with `from <Fact> ...`")?;
    let need = |what: &str| if arg.is_empty() { Err(format!("{op} needs {what}")) } else { Ok(()) };
    let next = match op {
        ":up" => {
            need("a dimension")?;
            roll_up(schema, q, arg)
        }
        ":down" => {
            need("a dimension")?;
            drill_down(schema, q, arg)
        }
        ":slice" => {
            need("a condition")?;
            // The parser conforms and checks the literal against the level.
            let probe = engine
                .compile(&format!("from {} where {arg} measure row_count", q.fact))
                .map_err(|e| e.to_string())?;
            dice(schema, q, &probe.filters)
        }
        _ => return Err(format!("unknown command {op}; try :help")),
    };
    next.map(Step::Run).map_err(|e| e.to_string())
}

fn fmt_fraction(x: f64) -> String {
    format!("{x:.4}")
}

fn quality_rows(report: &QualityReport) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = report
        .tables
        .iter()
        .map(|(name, t)| {
            vec![
                name.clone(),
                fmt_fraction(t.completeness),
                fmt_fraction(t.referential_integrity),
                t.duplicates.to_string(),
                fmt_fraction(t.consistency),
                t.timeliness.map(fmt_fraction).unwrap_or_default(),
            ]
        })
        .collect();
    let o = &report.overall;
    rows.push(vec![
        "(overall)".into(),
        fmt_fraction(o.completeness),
        fmt_fraction(o.referential_integrity),
        o.duplicates.to_string(),
        fmt_fraction(o.consistency),
        fmt_fraction(o.timeliness),
    ]);
    rows
}
