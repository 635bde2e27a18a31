//! Command-line front end. Records go to stdout as JSON lines; the human
//! summary goes to stderr. Exit codes: 0 success, 1 invalid input, 2
//! internal error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use evmfuse::cfg::{build_cfg, export_coo, export_dot};
use evmfuse::evm::{assemble, disassemble, parse_hex, to_hex, EvmError};
use evmfuse::harness::{
    evaluate_with, gen_synthetic, load_dataset, robustness_eval, save_dataset, train_with,
    Averaging, Config, HarnessError, Model, Transforms,
};
use evmfuse::obfuscate::{
    obf_source, obfuscate_and_verify, parse_passes, BytecodePass, ObfError, ObfuscationReport,
    SourcePass, DEFAULT_JUNK_DENSITY,
};
use evmfuse::preprocess::{normalize_opcodes, normalize_source, DEFAULT_STOPWORDS};

#[derive(Parser)]
#[command(
    name = "evmfuse",
    version,
    about = "EVM contract analysis and multi-modal vulnerability detection"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Bytecode,
    Source,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormLevel {
    Opcode,
    Source,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphFormat {
    Dot,
    Coo,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print one instruction per line as `<offset>: <MNEMONIC> [<immediate>]`.
    Disasm {
        /// File holding hex bytecode, with or without 0x.
        hexfile: PathBuf,
        /// Emit one JSON record per instruction instead of the listing.
        #[arg(long)]
        json: bool,
    },
    /// Normalised opcode stream or normalised source text.
    Normalize {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "opcode")]
        level: NormLevel,
        /// Comma-separated stopwords for source normalisation.
        #[arg(long)]
        stopwords: Option<String>,
    },
    /// Control-flow graph of a hex bytecode file.
    Cfg {
        hexfile: PathBuf,
        #[arg(long, value_enum, default_value = "dot")]
        format: GraphFormat,
    },
    /// Apply semantics-preserving transforms.
    Obfuscate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        level: Level,
        /// Comma-separated pass names; all passes of the level when omitted.
        #[arg(long)]
        passes: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random inputs used to check bytecode equivalence.
        #[arg(long, default_value_t = 10)]
        verify: usize,
        #[arg(long, default_value_t = DEFAULT_JUNK_DENSITY)]
        density: f64,
        /// Write the transformed artifact here instead of into the record.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic labelled corpus.
    GenData {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        labels: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and save a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=value` overrides applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Macro instead of micro averaging for precision, recall and F1.
        #[arg(long = "macro")]
        macro_avg: bool,
    },
    /// Clean versus obfuscated Hamming score.
    Robustness {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Bytecode passes; `all` for the full composition.
        #[arg(long, default_value = "all")]
        passes: String,
        /// Source passes, none by default.
        #[arg(long, default_value = "")]
        source_passes: String,
        #[arg(long, default_value_t = DEFAULT_JUNK_DENSITY)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
}

enum Failure {
    Invalid(String),
    Internal(String),
}

type Outcome = Result<(), Failure>;

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Invalid(e.to_string())
}

impl From<EvmError> for Failure {
    fn from(e: EvmError) -> Self {
        invalid(e)
    }
}

impl From<ObfError> for Failure {
    fn from(e: ObfError) -> Self {
        invalid(e)
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Encode(_) | HarnessError::Io(_) => Failure::Internal(e.to_string()),
            _ => invalid(e),
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))
}

fn read_bytecode(path: &Path) -> Result<Vec<u8>, Failure> {
    Ok(parse_hex(read_text(path)?.trim())?)
}

fn record(value: serde_json::Value) {
    println!("{value}");
}

fn bytecode_passes(csv: &str) -> Result<Vec<BytecodePass>, Failure> {
    parse_passes(csv, &BytecodePass::ALL).map_err(invalid)
}

fn source_passes(csv: &str) -> Result<Vec<SourcePass>, Failure> {
    parse_passes(csv, &SourcePass::ALL).map_err(invalid)
}

fn run(cmd: Cmd) -> Outcome {
    match cmd {
        Cmd::Disasm { hexfile, json } => {
            let program = disassemble(&read_bytecode(&hexfile)?);
            if json {
                for ins in &program.instructions {
                    record(json!({
                        "offset": ins.offset,
                        "mnemonic": ins.opcode.mnemonic(),
                        "immediate": to_hex(&ins.immediate),
                        "truncated": ins.truncated,
                    }));
                }
            } else {
                print!("{}", program.listing());
            }
            eprintln!("{} instructions, {} bytes", program.len(), program.byte_len);
        }
        Cmd::Normalize {
            input,
            level,
            stopwords,
        } => match level {
            NormLevel::Opcode => {
                let ops = normalize_opcodes(&disassemble(&read_bytecode(&input)?));
                record(json!({ "level": "opcode", "text": ops.text() }));
                eprintln!("{} opcodes", ops.mnemonics.len());
            }
            NormLevel::Source => {
                let words: Vec<String> = match stopwords {
                    Some(csv) => csv
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect(),
                    None => DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
                };
                let words: Vec<&str> = words.iter().map(String::as_str).collect();
                let out = normalize_source(&read_text(&input)?, &words);
                record(json!({ "level": "source", "text": out.text }));
                eprintln!("{} lines", out.text.lines().count());
            }
        },
        Cmd::Cfg { hexfile, format } => {
            let cfg = build_cfg(&disassemble(&read_bytecode(&hexfile)?));
            match format {
                GraphFormat::Dot => print!("{}", export_dot(&cfg)),
                GraphFormat::Coo => record(json!({ "edge_index": export_coo(&cfg).rows })),
                GraphFormat::Json => {
                    for b in &cfg.blocks {
                        record(json!({
                            "id": b.id,
                            "start_offset": b.start_offset,
                            "end_offset": b.end_offset,
                            "opcode_text": b.opcode_text,
                            "successors": cfg.successors(b.id).collect::<Vec<_>>(),
                        }));
                    }
                }
            }
            eprintln!("{} blocks, {} edges", cfg.blocks.len(), cfg.edges.len());
        }
        Cmd::Obfuscate {
            input,
            level,
            passes,
            seed,
            verify,
            density,
            out,
        } => {
            let (artifact, report) = match level {
                Level::Bytecode => {
                    let passes = bytecode_passes(passes.as_deref().unwrap_or("all"))?;
                    let program = disassemble(&read_bytecode(&input)?);
                    let (obf, report) =
                        obfuscate_and_verify(&program, &passes, seed, density, verify)?;
                    (to_hex(&assemble(&obf)?), report)
                }
                Level::Source => {
                    let passes = source_passes(passes.as_deref().unwrap_or("all"))?;
                    let src = read_text(&input)?;
                    let obf = obf_source(&src, seed, &passes).map_err(invalid)?;
                    let report = ObfuscationReport {
                        transform: passes
                            .iter()
                            .map(|p| p.name())
                            .collect::<Vec<_>>()
                            .join("+"),
                        size_before: src.len(),
                        size_after: obf.len(),
                        verified: false,
                        trials: 0,
                    };
                    (obf, report)
                }
            };
            match &out {
                Some(path) => {
                    write_text(path, &artifact)?;
                    record(json!({ "report": report, "out": path }));
                }
                None => record(json!({ "report": report, "artifact": artifact })),
            }
            eprintln!(
                "{}: {} -> {} bytes, verified={} over {} trials",
                report.transform,
                report.size_before,
                report.size_after,
                report.verified,
                report.trials
            );
            if matches!(level, Level::Bytecode) && !report.verified {
                return Err(invalid("obfuscated bytecode diverged from the original"));
            }
        }
        Cmd::GenData {
            n,
            seed,
            labels,
            out,
        } => {
            if n == 0 {
                return Err(invalid("--n must be at least 1"));
            }
            let set = gen_synthetic(n, seed, labels);
            save_dataset(&out, &set).map_err(|e| Failure::Internal(e.to_string()))?;
            let positives: Vec<usize> = (0..labels)
                .map(|k| set.iter().filter(|s| s.labels[k]).count())
                .collect();
            record(
                json!({ "n": n, "seed": seed, "labels": labels, "positives": positives, "out": out }),
            );
            eprintln!("wrote {n} samples to {}", out.display());
        }
        Cmd::Train {
            data,
            config,
            overrides,
            out,
        } => {
            let mut cfg = match config {
                Some(path) => Config::load(&path).map_err(invalid)?,
                None => Config::default(),
            };
            for kv in &overrides {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| invalid(format!("override `{kv}` is not key=value")))?;
                cfg.set(k.trim(), v.trim()).map_err(invalid)?;
            }
            cfg.validate().map_err(invalid)?;
            let set = load_dataset(&data, cfg.labels).map_err(invalid)?;
            let outcome = train_with(&cfg, &set, |e| {
                record(serde_json::to_value(e).expect("plain struct"));
                eprintln!(
                    "epoch {:>3}  loss {:.4}  holdout hs {}",
                    e.epoch,
                    e.train_loss,
                    e.holdout_hs.map_or("-".into(), |h| format!("{h:.4}"))
                );
            })?;
            outcome.model.save(&out)?;
            eprintln!("saved {}", out.display());
        }
        Cmd::Eval {
            checkpoint,
            data,
            macro_avg,
        } => {
            let model = Model::load(&checkpoint)?;
            let set = load_dataset(&data, model.config.labels).map_err(invalid)?;
            let avg = if macro_avg {
                Averaging::Macro
            } else {
                Averaging::Micro
            };
            let report = evaluate_with(&model, &set, avg)?;
            record(serde_json::to_value(&report).expect("plain struct"));
            eprintln!(
                "n={} hs={:.4} precision={:.4} recall={:.4} f1={:.4}",
                report.n, report.hs, report.precision, report.recall, report.f1
            );
        }
        Cmd::Robustness {
            checkpoint,
            data,
            passes,
            source_passes: sp,
            density,
            seed,
            trials,
        } => {
            let model = Model::load(&checkpoint)?;
            let set = load_dataset(&data, model.config.labels).map_err(invalid)?;
            if !(0.0..=1.0).contains(&density) {
                return Err(invalid(format!("density {density} is outside [0, 1]")));
            }
            let transforms = Transforms {
                bytecode: bytecode_passes(&passes)?,
                source: source_passes(&sp)?,
                density,
            };
            let r = robustness_eval(&model, &set, &transforms, seed, trials)?;
            record(serde_json::to_value(&r).expect("plain struct"));
            eprintln!(
                "{}: hs {:.4} -> {:.4}, degradation {:+.4} ({} retained, {} excluded)",
                r.transforms, r.hs_base, r.hs_obf, r.degradation, r.retained, r.excluded
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli.cmd)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Invalid(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Ok(Err(Failure::Internal(msg))) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
        Err(_) => ExitCode::from(2),
    }
}
