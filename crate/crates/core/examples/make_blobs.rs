//! Writes a two-blob dataset directory: `make_blobs <dir> [n] [f] [separation] [seed]`.

use std::path::PathBuf;
use std::process::ExitCode;

use celltop::data::{save_dataset, two_blobs};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(dir) = args.first().map(PathBuf::from) else {
        eprintln!("usage: make_blobs <dir> [n] [f] [separation] [seed]");
        return ExitCode::from(1);
    };
    let num = |i: usize, default: f64| args.get(i).map_or(Ok(default), |s| s.parse::<f64>());
    let (Ok(n), Ok(f), Ok(sep), Ok(seed)) = (num(1, 100.0), num(2, 8.0), num(3, 4.0), num(4, 0.0)) else {
        eprintln!("numeric arguments expected");
        return ExitCode::from(1);
    };
    match save_dataset(&two_blobs(n as usize, f as usize, sep, seed as u64), &dir) {
        Ok(()) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
