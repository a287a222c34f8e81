//! Command-line entry points: run/replay scripts, export and summarize
//! traces, and quick compile checks.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backends::{Backend, HttpBackend, MockBackend};
use crate::compiler::{compile, dump_ir};
use crate::error::{FrontendError, RuntimeError};
use crate::frontend::{ast_size, parse_source};
use crate::futures::{WorkerPool, DEFAULT_WORKERS};
use crate::interpreter::{default_tools, promptify, run_program, RuntimeEnv, Value};
use crate::trace::{export_chrome_trace, report, ReplayCache, ReplayMode, TraceLog, TraceRecorder};

#[derive(Parser)]
#[command(name = "appl", about = "Compile and run APPL-script programs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile and run a script.
    Run(RunArgs),
    /// Re-run a script, serving generations from a recorded trace.
    Replay(ReplayArgs),
    /// Trace utilities.
    Trace {
        #[command(subcommand)]
        command: TraceCommand,
    },
    /// Print a human-readable summary of a recorded trace.
    Report { log: PathBuf },
    /// Print the number of AST nodes in a script.
    AstSize { script: PathBuf },
    /// Compile a script without running it.
    Check {
        script: PathBuf,
        /// Print the compiled IR.
        #[arg(long)]
        emit_ir: bool,
    },
}

#[derive(Subcommand)]
enum TraceCommand {
    /// Convert a trace log to Chrome trace-event JSON.
    Export {
        log: PathBuf,
        /// Output path (default: `<log stem>.chrome.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Mock,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReplayModeArg {
    Strict,
    Nonstrict,
}

#[derive(Args)]
struct RunArgs {
    script: PathBuf,
    /// Entry function name.
    #[arg(long, default_value = "main")]
    entry: String,
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendKind,
    /// Seed for deterministic mock responses.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker pool size.
    #[arg(long, default_value_t = DEFAULT_WORKERS)]
    workers: usize,
    /// Injected per-request latency for the mock backend.
    #[arg(long, default_value_t = 0)]
    latency_ms: u64,
    /// Scripted-response file for the mock backend.
    #[arg(long)]
    script_responses: Option<PathBuf>,
    /// Write a JSONL trace log here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Shorthand for --workers 1.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Recorded trace log to replay against.
    #[arg(long)]
    log: PathBuf,
    #[arg(long, value_enum, default_value = "strict")]
    mode: ReplayModeArg,
    /// On a strict-mode mismatch, fall back to a live call instead of failing.
    #[arg(long)]
    replay_fallback: Option<String>,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Parse argv and dispatch; returns the process exit code.
pub fn run_cli() -> i32 {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => cmd_run(&args, None),
        Command::Replay(args) => cmd_replay(&args),
        Command::Trace {
            command: TraceCommand::Export { log, out },
        } => cmd_trace_export(&log, out.as_deref()),
        Command::Report { log } => cmd_report(&log),
        Command::AstSize { script } => cmd_ast_size(&script),
        Command::Check { script, emit_ir } => cmd_check(&script, emit_ir),
    }
}

fn read_script(path: &Path) -> Result<String, i32> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        EXIT_USAGE
    })
}

fn compile_script(path: &Path) -> Result<crate::compiler::IrProgram, i32> {
    let source = read_script(path)?;
    compile(&source).map_err(|e: FrontendError| {
        eprintln!("error: {e}");
        EXIT_USAGE
    })
}

fn build_backend(args: &RunArgs) -> Result<Arc<dyn Backend>, i32> {
    match args.backend {
        BackendKind::Mock => {
            let mut mock = MockBackend::new(args.seed, Duration::from_millis(args.latency_ms));
            if let Some(path) = &args.script_responses {
                let json = read_script(path)?;
                let script = MockBackend::load_script(&json).map_err(|e| {
                    eprintln!("error: bad response script {}: {e}", path.display());
                    EXIT_USAGE
                })?;
                mock = mock.with_script(script);
            }
            Ok(Arc::new(mock))
        }
        BackendKind::Http => {
            let base_url = std::env::var("APPL_BASE_URL").map_err(|_| {
                eprintln!("error: the http backend requires APPL_BASE_URL");
                EXIT_USAGE
            })?;
            let api_key = std::env::var("APPL_API_KEY").unwrap_or_default();
            Ok(Arc::new(HttpBackend::new(base_url, api_key)))
        }
    }
}

fn runtime_exit(err: &RuntimeError) -> i32 {
    eprintln!("error: {err}");
    EXIT_RUNTIME
}

fn print_result(value: &Value) -> Result<(), RuntimeError> {
    match value {
        Value::None => Ok(()),
        other => {
            let text = promptify(other, "\n")?.materialize()?;
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_run(args: &RunArgs, replay: Option<Arc<ReplayCache>>) -> i32 {
    let program = match compile_script(&args.script) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let backend = match build_backend(args) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let trace = match TraceRecorder::new(args.trace.as_deref(), args.seed) {
        Ok(t) => Arc::new(t),
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let workers = if args.sequential { 1 } else { args.workers.max(1) };
    let replay_for_pool = replay.clone();
    let pool = WorkerPool::new(workers, backend, trace.clone(), replay_for_pool);
    let mut env = RuntimeEnv::new(pool, trace);
    for tool in default_tools() {
        env.register_tool(tool);
    }
    match run_program(&program, &args.entry, Vec::new(), &env) {
        Ok(value) => match print_result(&value) {
            Ok(()) => {
                if let Some(cache) = &replay {
                    println!("hits: {}, live: {}", cache.hits(), cache.live());
                }
                EXIT_OK
            }
            Err(e) => runtime_exit(&e),
        },
        Err(e) => runtime_exit(&e),
    }
}

fn cmd_replay(args: &ReplayArgs) -> i32 {
    let log = match TraceLog::load(&args.log) {
        Ok(log) => log,
        Err(e) => {
            eprintln!("error: cannot load {}: {e}", args.log.display());
            return EXIT_USAGE;
        }
    };
    let mode = match args.mode {
        ReplayModeArg::Strict => ReplayMode::Strict,
        ReplayModeArg::Nonstrict => ReplayMode::NonStrict,
    };
    let fallback_live = match args.replay_fallback.as_deref() {
        None => false,
        Some("live") => true,
        Some(other) => {
            eprintln!("error: unknown replay fallback '{other}' (expected 'live')");
            return EXIT_USAGE;
        }
    };
    let cache = Arc::new(ReplayCache::from_log(&log, mode, fallback_live));
    cmd_run(&args.run, Some(cache))
}

fn cmd_trace_export(log_path: &Path, out: Option<&Path>) -> i32 {
    let log = match TraceLog::load(log_path) {
        Ok(log) => log,
        Err(e) => {
            eprintln!("error: cannot load {}: {e}", log_path.display());
            return EXIT_USAGE;
        }
    };
    let default_out = {
        let stem = log_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trace".into());
        let stem = stem.strip_suffix(".trace").unwrap_or(&stem).to_string();
        log_path.with_file_name(format!("{stem}.chrome.json"))
    };
    let out = out.map(Path::to_path_buf).unwrap_or(default_out);
    let json = export_chrome_trace(&log);
    match std::fs::write(&out, serde_json::to_string_pretty(&json).unwrap()) {
        Ok(()) => {
            println!("wrote {}", out.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: cannot write {}: {e}", out.display());
            EXIT_RUNTIME
        }
    }
}

fn cmd_report(log_path: &Path) -> i32 {
    match TraceLog::load(log_path) {
        Ok(log) => {
            print!("{}", report(&log));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: cannot load {}: {e}", log_path.display());
            EXIT_USAGE
        }
    }
}

fn cmd_ast_size(script: &Path) -> i32 {
    let source = match read_script(script) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match parse_source(&source) {
        Ok(module) => {
            println!("{}", ast_size(&module));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn cmd_check(script: &Path, emit_ir: bool) -> i32 {
    match compile_script(script) {
        Ok(program) => {
            if emit_ir {
                print!("{}", dump_ir(&program));
            }
            EXIT_OK
        }
        Err(code) => code,
    }
}
