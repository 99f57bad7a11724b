use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use swiftvad::pipeline::{self, Command, RunConfig};
use swiftvad::Error;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Gen,
    Pretrain,
    Distill,
    Eval,
    Bench,
    Ablate,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Gen => Command::Gen,
            Cmd::Pretrain => Command::Pretrain,
            Cmd::Distill => Command::Distill,
            Cmd::Eval => Command::Eval,
            Cmd::Bench => Command::Bench,
            Cmd::Ablate => Command::Ablate,
        }
    }
}

/// Frame-level video anomaly detection by multi-teacher distillation.
#[derive(Debug, Parser)]
#[command(name = "swiftvad", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `paths.root`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fail(code: u8, kind: &str, message: &str) -> ExitCode {
    let line = message.replace('\n', " ");
    eprintln!("error kind={kind} msg={}", serde_json::to_string(&line).unwrap_or_default());
    ExitCode::from(code)
}

fn runtime_or_config(e: &Error) -> ExitCode {
    if e.is_config() {
        fail(2, "config", &e.to_string())
    } else {
        fail(3, "runtime", &e.to_string())
    }
}

fn summary(cmd: Command, cfg: &RunConfig) -> swiftvad::Result<String> {
    Ok(match cmd {
        Command::Gen => {
            let ds = pipeline::cmd_gen(cfg)?;
            format!("train={} distill={} test={}", ds.train.len(), ds.distill.len(), ds.test.len())
        }
        Command::Pretrain => {
            let r = pipeline::cmd_pretrain(cfg)?;
            format!("batches={} last_l_ae={}", r.rows.len(), r.rows.last().and_then(|x| x.l_ae).unwrap_or(f64::NAN))
        }
        Command::Distill => {
            let r = pipeline::cmd_distill(cfg)?;
            format!("batches={} last_l_total={}", r.rows.len(), r.rows.last().and_then(|x| x.l_total).unwrap_or(f64::NAN))
        }
        Command::Eval => {
            let r = pipeline::cmd_eval(cfg)?;
            format!("micro_auc={} macro_auc={}", r.micro.auc, r.macro_.auc)
        }
        Command::Bench => {
            let r = pipeline::cmd_bench(cfg)?;
            r.iter().map(|b| format!("{}={:.1}", b.id(), b.model_fps)).collect::<Vec<_>>().join(" ")
        }
        Command::Ablate => {
            let r = pipeline::cmd_ablate(cfg)?;
            format!("rows={}", r.len())
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
            return fail(1, "usage", first.trim_start_matches("error: "));
        }
    };
    let cfg = match RunConfig::load(&cli.config) {
        Ok(c) => c.with_overrides(cli.seed, cli.out.as_deref()),
        Err(e) => return fail(2, "config", &e.to_string()),
    };
    let cmd = Command::from(cli.command);
    match summary(cmd, &cfg) {
        Ok(line) => {
            println!("{} ok {line}", cmd.name());
            ExitCode::SUCCESS
        }
        Err(e) => runtime_or_config(&e),
    }
}
