//! `medsql` subcommands. [`run`] returns the process exit code.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use medsql_core::demo_store::{ingest_demos, DemoRecord};
use medsql_core::eval_harness::{
    load_jsonl, preprocess_dataset, render_table, run_eval, split_dataset, write_jsonl, write_report, EqualityOptions,
    EvalItem, RawItem,
};
use medsql_core::execution_sandbox::open_read_only;
use medsql_core::sql_postprocess::{guardrail_check, GuardrailOptions};
use medsql_core::{DemoStore, ExecLimits, PipelineContext, PipelineFlags};
use medsql_dialect::{TranspileError, Transpiler};

use crate::config::AppConfig;
use crate::service::{build_embedder, AppState, FlagOverrides, QueryRequest};

#[derive(Debug, Parser)]
#[command(name = "medsql", version, about = "Natural-language questions over a local clinical database")]
pub struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true, default_value = "medsql.toml")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer one question and print the response as JSON.
    Query(QueryArgs),
    /// Rewrite a source-dialect query for the execution engine.
    Transpile {
        /// Reads stdin when absent.
        file: Option<PathBuf>,
    },
    /// Transpile and check a raw dataset against a database.
    Preprocess {
        #[arg(long)]
        db_file: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Where to write the dropped items and their reasons.
        #[arg(long)]
        dropped: Option<PathBuf>,
    },
    /// Seeded validation/test split of a JSON-lines file.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        validation_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        validation: f64,
        #[arg(long, default_value_t = 0.9)]
        test: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a dataset. List-valued flags are swept over their product.
    Eval(EvalArgs),
    /// Load a demo file, reporting errors; with --database, also check each
    /// query against that database's schema.
    IngestDemos {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        database: Option<String>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Built web client to serve at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub database: String,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub k_demos: Option<usize>,
    #[arg(long)]
    pub include_schema: Option<bool>,
    #[arg(long)]
    pub include_cot: Option<bool>,
    #[arg(long)]
    pub max_attempts: Option<usize>,
    #[arg(long)]
    pub repair_dialect: Option<bool>,
    #[arg(required = true, num_args = 1..)]
    pub question: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub database: String,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub model: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub k_demos: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub include_schema: Vec<bool>,
    #[arg(long, value_delimiter = ',')]
    pub include_cot: Vec<bool>,
    #[arg(long, value_delimiter = ',')]
    pub max_attempts: Vec<usize>,
    #[arg(long)]
    pub order_sensitive: bool,
}

fn or_default<T: Clone>(v: &[T], d: T) -> Vec<T> {
    if v.is_empty() {
        vec![d]
    } else {
        v.to_vec()
    }
}

impl EvalArgs {
    /// Every combination of the listed values, unlisted ones from `base`.
    pub fn sweep(&self, base: &PipelineFlags, default_model: &str) -> Vec<(String, PipelineFlags)> {
        let mut out = Vec::new();
        for m in or_default(&self.model, default_model.to_string()) {
            for s in or_default(&self.include_schema, base.include_schema) {
                for k in or_default(&self.k_demos, base.k_demos) {
                    for a in or_default(&self.max_attempts, base.max_attempts) {
                        for c in or_default(&self.include_cot, base.include_cot) {
                            out.push((
                                m.clone(),
                                PipelineFlags {
                                    k_demos: k,
                                    include_schema: s,
                                    include_cot: c,
                                    max_attempts: a,
                                    repair_dialect: base.repair_dialect,
                                },
                            ));
                        }
                    }
                }
            }
        }
        out
    }
}

fn load_config(path: &Path) -> anyhow::Result<AppConfig> {
    AppConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

pub fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Transpile { file } => transpile(file.as_deref()),
        Command::Preprocess {
            db_file,
            input,
            output,
            dropped,
        } => {
            let conn = open_read_only(&db_file)?;
            let items: Vec<RawItem> = load_jsonl(&input)?;
            let pre = preprocess_dataset(&items, &conn, ExecLimits::default());
            write_jsonl(&output, &pre.kept)?;
            if let Some(path) = dropped {
                write_jsonl(&path, &pre.dropped)?;
            }
            println!("kept {} of {}", pre.kept.len(), items.len());
            let mut reasons = std::collections::BTreeMap::new();
            for d in &pre.dropped {
                *reasons.entry(d.reason.as_str()).or_insert(0) += 1;
            }
            for (reason, n) in reasons {
                println!("dropped {n}: {reason}");
            }
            Ok(0)
        }
        Command::Split {
            input,
            validation_out,
            test_out,
            validation,
            test,
            seed,
        } => {
            let items: Vec<serde_json::Value> = load_jsonl(&input)?;
            let split = split_dataset(&items, validation, test, seed)?;
            write_jsonl(&validation_out, &split.validation)?;
            write_jsonl(&test_out, &split.test)?;
            println!("validation {} test {}", split.validation.len(), split.test.len());
            Ok(0)
        }
        Command::IngestDemos { input, database } => ingest(&cli.config, &input, database.as_deref()),
        Command::Query(args) => {
            let state = AppState::from_config(&load_config(&cli.config)?)?;
            let req = QueryRequest {
                session_id: None,
                question: args.question.join(" "),
                database: args.database,
                model: args.model,
                flags: FlagOverrides {
                    k_demos: args.k_demos,
                    include_schema: args.include_schema,
                    include_cot: args.include_cot,
                    max_attempts: args.max_attempts,
                    repair_dialect: args.repair_dialect,
                },
            };
            let resp = state.handle_query(req)?;
            println!("{}", serde_json::to_string_pretty(&resp)?);
            Ok(0)
        }
        Command::Eval(args) => eval(&cli.config, &args),
        Command::Serve { addr, static_dir } => {
            let state = Arc::new(AppState::from_config(&load_config(&cli.config)?)?);
            serve(state, &addr, static_dir.as_deref())?;
            Ok(0)
        }
    }
}

fn transpile(file: Option<&Path>) -> anyhow::Result<i32> {
    let sql = match file {
        Some(p) => std::fs::read_to_string(p).with_context(|| p.display().to_string())?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    match Transpiler::new().transpile(sql.trim()) {
        Ok(out) => {
            println!("{out}");
            Ok(0)
        }
        Err(e @ TranspileError::Unsupported { .. }) => {
            eprintln!("{e}");
            Ok(2)
        }
        Err(e) => {
            eprintln!("{e}");
            Ok(1)
        }
    }
}

fn ingest(config_path: &Path, input: &Path, database: Option<&str>) -> anyhow::Result<i32> {
    let config = if config_path.exists() {
        load_config(config_path)?
    } else {
        AppConfig::default()
    };
    let embedder = build_embedder(&config);
    let mut store = DemoStore::new(embedder.dimension());
    let n = ingest_demos(input, &mut store, embedder.as_ref())?;
    println!("{n} demos");
    let Some(db_id) = database else { return Ok(0) };
    let path = config
        .databases
        .get(db_id)
        .with_context(|| format!("unknown database {db_id:?}"))?;
    let conn = open_read_only(path)?;
    let catalog = medsql_core::schema_catalog::introspect(&conn, db_id)?;
    let records: Vec<DemoRecord> = load_jsonl(input)?;
    let transpiler = Transpiler::new();
    let mut bad = 0;
    for r in &records {
        let problem = match transpiler.transpile(&r.sql) {
            Err(e) => Some(e.to_string()),
            Ok(sql) => guardrail_check(&sql, &catalog, GuardrailOptions::default()).failure_message(),
        };
        if let Some(p) = problem {
            bad += 1;
            println!("{}: {p}", r.id);
        }
    }
    Ok(if bad == 0 { 0 } else { 1 })
}

fn eval(config_path: &Path, args: &EvalArgs) -> anyhow::Result<i32> {
    let config = load_config(config_path)?;
    let state = AppState::from_config(&config)?;
    let db = state.database(&args.database)?;
    let items: Vec<EvalItem> = load_jsonl(&args.dataset)?;
    let options = EqualityOptions {
        order_sensitive: args.order_sensitive,
    };
    let mut runs = Vec::new();
    for (model, flags) in args.sweep(&state.flags, config.default_model_name()) {
        let model = state.model(Some(&model))?;
        if flags.max_attempts == 0 {
            bail!("max_attempts must be at least 1");
        }
        let conn = db.connection()?;
        let ctx = PipelineContext {
            catalog: &db.catalog,
            demos: state.demos(),
            embedder: state.embedder(),
            model,
            gateway: state.gateway(),
            conn: &conn,
            limits: state.limits,
            flags,
        };
        let run = run_eval(&items, &ctx, options)?;
        tracing::info!(rs0 = run.report.rs0, "run finished");
        if !run.cassette_misses.is_empty() {
            eprintln!("no recording for {} item(s): {}", run.cassette_misses.len(), run.cassette_misses.join(", "));
        }
        runs.push(run);
    }
    let mut out = std::io::stdout().lock();
    write!(out, "{}", render_table(&runs))?;
    if let Some(path) = &args.report {
        write_report(path, &runs)?;
    }
    Ok(0)
}

fn serve(state: Arc<AppState>, addr: &str, static_dir: Option<&Path>) -> anyhow::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, crate::http::app(state, static_dir))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
