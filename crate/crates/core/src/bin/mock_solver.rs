//! Stand-in solver that replays recorded answers.
//!
//! Answer lookup, first hit wins: `--print`, then `<replay-dir>/<sha256 of the
//! problem file>.out`, then `<replay-dir>/<problem file stem>.out`, else
//! `unknown`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "verimux-mock-solver", about = "Replays canned solver answers")]
struct Args {
    /// Directory with recorded answers.
    #[arg(long)]
    replay_dir: Option<PathBuf>,
    /// Print this text instead of looking up an answer.
    #[arg(long)]
    print: Option<String>,
    /// Seconds to sleep before answering.
    #[arg(long, default_value_t = 0.0)]
    sleep: f64,
    /// Exit status.
    #[arg(long, default_value_t = 0)]
    exit: u8,
    problem: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read(&args.problem) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", args.problem.display());
            return ExitCode::from(1);
        }
    };
    if args.sleep > 0.0 {
        std::thread::sleep(Duration::from_secs_f64(args.sleep));
    }
    let answer = args.print.clone().or_else(|| {
        let dir = args.replay_dir.as_ref()?;
        let hash: String = Sha256::digest(&text).iter().map(|b| format!("{b:02x}")).collect();
        let stem = args.problem.file_stem()?.to_string_lossy().into_owned();
        [hash, stem].iter().find_map(|name| std::fs::read_to_string(dir.join(format!("{name}.out"))).ok())
    });
    let answer = answer.unwrap_or_else(|| "unknown".into());
    print!("{answer}");
    if !answer.ends_with('\n') {
        println!();
    }
    ExitCode::from(args.exit)
}
