use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{RunSummary, SweepResult};
use super::run::RunResult;
use crate::allocators::Strategy;
use crate::error::{Error, Result};
use crate::portfolio::ReturnHistory;

pub const ROUNDS_HEADER: &str = "seed,round,strategy,budget,client_id,reward,r_i,R_p,cum_U";
pub const SWEEP_HEADER: &str =
    "budget,strategy,n_seeds,mean_U,std_U,mean_first10_R,std_first10_R";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonLines,
}

/// One line of the rounds table: a client in a round of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub seed: u64,
    pub round: usize,
    pub strategy: Strategy,
    pub budget: f64,
    pub client_id: usize,
    pub reward: f64,
    pub r_i: f64,
    #[serde(rename = "R_p")]
    pub r_p: f64,
    #[serde(rename = "cum_U")]
    pub cum_u: f64,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn round_rows(run: &RunResult) -> impl Iterator<Item = RoundRow> + '_ {
    run.records.iter().flat_map(move |rec| {
        rec.returns.iter().enumerate().map(move |(id, &r)| RoundRow {
            seed: run.seed,
            round: rec.round,
            strategy: run.strategy,
            budget: run.budget,
            client_id: id,
            reward: rec.rewards[id],
            r_i: r,
            r_p: rec.global,
            cum_u: rec.cum_utility,
        })
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes round records, replacing any existing file.
pub fn persist(runs: &[RunResult], path: &Path, format: Format) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    match format {
        Format::Csv => {
            writeln!(w, "{ROUNDS_HEADER}").map_err(io)?;
            for row in runs.iter().flat_map(round_rows) {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    row.seed,
                    row.round,
                    row.strategy,
                    fmt_f64(row.budget),
                    row.client_id,
                    fmt_f64(row.reward),
                    fmt_f64(row.r_i),
                    fmt_f64(row.r_p),
                    fmt_f64(row.cum_u),
                )
                .map_err(io)?;
            }
        }
        Format::JsonLines => {
            for row in runs.iter().flat_map(round_rows) {
                let line = serde_json::to_string(&row).expect("row serializes");
                writeln!(w, "{line}").map_err(io)?;
            }
        }
    }
    finish(path, w)
}

pub fn read_rounds_csv(path: &Path) -> Result<Vec<RoundRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if i == 0 {
            if line != ROUNDS_HEADER {
                return Err(parse_err(lineno, format!("expected header {ROUNDS_HEADER:?}")));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(parse_err(lineno, format!("expected 9 fields, got {}", f.len())));
        }
        let num = |k: usize| -> Result<f64> {
            f[k].parse().map_err(|_| parse_err(lineno, format!("bad number {:?}", f[k])))
        };
        let int = |k: usize| -> Result<u64> {
            f[k].parse().map_err(|_| parse_err(lineno, format!("bad integer {:?}", f[k])))
        };
        rows.push(RoundRow {
            seed: int(0)?,
            round: int(1)? as usize,
            strategy: f[2].parse().map_err(|e: Error| parse_err(lineno, e.to_string()))?,
            budget: num(3)?,
            client_id: int(4)? as usize,
            reward: num(5)?,
            r_i: num(6)?,
            r_p: num(7)?,
            cum_u: num(8)?,
        });
    }
    Ok(rows)
}

/// Per-client return series of the first (seed, strategy, budget) run in
/// `rows`, ordered by round.
pub fn history_from_rows(rows: &[RoundRow]) -> Result<ReturnHistory> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InsufficientHistory("rounds table is empty".into()))?;
    let key = (first.seed, first.strategy, first.budget.to_bits());
    let mut run: Vec<&RoundRow> = rows
        .iter()
        .filter(|r| (r.seed, r.strategy, r.budget.to_bits()) == key)
        .collect();
    run.sort_by_key(|r| (r.client_id, r.round));
    let n = run.iter().map(|r| r.client_id).max().unwrap_or(0) + 1;
    let mut series = vec![Vec::new(); n];
    for r in run {
        series[r.client_id].push(r.r_i);
    }
    ReturnHistory::new(series)
}

pub fn write_summaries_jsonl(path: &Path, runs: &[RunSummary]) -> Result<()> {
    let mut w = create(path)?;
    for r in runs {
        let line = serde_json::to_string(r).expect("summary serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    finish(path, w)
}

pub fn write_sweep_csv(path: &Path, result: &SweepResult) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    writeln!(w, "{SWEEP_HEADER}").map_err(io)?;
    for r in &result.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.budget),
            r.strategy,
            r.n_seeds,
            fmt_f64(r.mean_utility),
            opt(r.std_utility),
            fmt_f64(r.mean_early),
            opt(r.std_early),
        )
        .map_err(io)?;
    }
    finish(path, w)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
