//! Output files. Every artifact carries the scenario hash; wall-clock data
//! lives only in `meta.json`, so reruns produce identical artifacts.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::ValueEnum;
use mbsde_core::solver::{BsdeSolution, SolverConfig};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

/// Magic bytes of a solution dump.
pub const MAGIC: &[u8; 4] = b"MBSD";
pub const DUMP_VERSION: u32 = 1;

pub struct Artifacts {
    dir: PathBuf,
    hash: String,
    format: Format,
    command: &'static str,
    written: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    scenario_hash: &'a str,
    command: &'a str,
    report: &'a T,
}

#[derive(Serialize)]
struct Schema<'a> {
    scenario_hash: &'a str,
    file: String,
    columns: Vec<Column<'a>>,
}

#[derive(Serialize)]
struct Column<'a> {
    name: &'a str,
    description: &'a str,
}

impl Artifacts {
    pub fn new(dir: &Path, hash: &str, format: Format, command: &'static str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            format,
            command,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    /// `<name>.json` holding `{scenario_hash, command, report}`.
    pub fn json<T: Serialize>(&mut self, name: &str, report: &T) -> Result<()> {
        if !self.format.json() {
            return Ok(());
        }
        let path = self.dir.join(format!("{name}.json"));
        let env = Envelope {
            scenario_hash: &self.hash,
            command: self.command,
            report,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.record(path);
        Ok(())
    }

    /// `<name>.csv`, preceded by a `# scenario_hash=` comment line, and its
    /// column description `<name>.schema.json`.
    pub fn csv(&mut self, name: &str, columns: &[(&str, &str)], rows: &[Vec<f64>]) -> Result<()> {
        if !self.format.csv() {
            return Ok(());
        }
        let path = self.dir.join(format!("{name}.csv"));
        let mut file =
            fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        writeln!(file, "# scenario_hash={}", self.hash)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(columns.iter().map(|c| c.0))?;
        for row in rows {
            ensure!(
                row.len() == columns.len(),
                "row width does not match the columns of {name}"
            );
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        self.record(path);

        let schema = Schema {
            scenario_hash: &self.hash,
            file: format!("{name}.csv"),
            columns: columns
                .iter()
                .map(|(n, d)| Column {
                    name: n,
                    description: d,
                })
                .collect(),
        };
        let path = self.dir.join(format!("{name}.schema.json"));
        let mut text = serde_json::to_string_pretty(&schema)?;
        text.push('\n');
        fs::write(&path, text)?;
        self.record(path);
        Ok(())
    }

    /// Binary dump of a solution, independent of the format flag.
    pub fn solution(&mut self, name: &str, sol: &BsdeSolution) -> Result<()> {
        let path = self.dir.join(format!("{name}.mbsd"));
        fs::write(&path, encode_solution(sol, &self.hash)?)?;
        self.record(path);
        Ok(())
    }

    /// `meta.json`: everything that legitimately differs between reruns.
    pub fn meta(&mut self, threads: usize) -> Result<()> {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let meta = serde_json::json!({
            "scenario_hash": self.hash,
            "command": self.command,
            "unix_time": secs,
            "threads": threads,
            "version": env!("CARGO_PKG_VERSION"),
        });
        let path = self.dir.join("meta.json");
        fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")?;
        self.record(path);
        Ok(())
    }
}

fn put_u64(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, v: &[f64]) {
    put_u64(buf, v.len());
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

/// Layout (little endian): magic, version `u32`, 64 hex bytes of the
/// scenario hash, `n`, `d_w`, `n_paths`, `n_steps` as `u64`, then the
/// length-prefixed `f64` columns `times`, `x`, `z`, `picard_residuals`,
/// then `terminal_error` and a converged byte. The solver configuration is
/// appended as JSON.
pub fn encode_solution(sol: &BsdeSolution, hash: &str) -> Result<Vec<u8>> {
    ensure!(hash.len() == 64, "scenario hash must be 64 hex digits");
    let mut buf = Vec::with_capacity(8 * (sol.x.len() + sol.z.len()) + 256);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    buf.extend_from_slice(hash.as_bytes());
    for v in [sol.n, sol.d_w, sol.n_paths, sol.n_steps] {
        put_u64(&mut buf, v);
    }
    put_f64s(&mut buf, &sol.times);
    put_f64s(&mut buf, &sol.x);
    put_f64s(&mut buf, &sol.z);
    put_f64s(&mut buf, &sol.picard_residuals);
    buf.extend_from_slice(&sol.terminal_error.to_le_bytes());
    buf.push(sol.converged as u8);
    buf.extend_from_slice(serde_json::to_string(&sol.config)?.as_bytes());
    Ok(buf)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        ensure!(self.pos + n <= self.buf.len(), "solution dump is truncated");
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into()?) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into()?))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()?;
        ensure!(n <= self.buf.len() / 8, "solution dump is corrupt");
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Decodes a dump and returns it with its scenario hash.
pub fn decode_solution(buf: &[u8]) -> Result<(BsdeSolution, String)> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != MAGIC {
        bail!("not a solution dump");
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into()?);
    ensure!(
        version == DUMP_VERSION,
        "unsupported dump version {version}"
    );
    let hash = String::from_utf8(c.take(64)?.to_vec())?;
    let (n, d_w, n_paths, n_steps) = (c.u64()?, c.u64()?, c.u64()?, c.u64()?);
    let times = c.f64s()?;
    let x = c.f64s()?;
    let z = c.f64s()?;
    let picard_residuals = c.f64s()?;
    let terminal_error = c.f64()?;
    let converged = c.take(1)?[0] != 0;
    let config: SolverConfig = serde_json::from_slice(&buf[c.pos..])?;
    ensure!(
        times.len() == n_steps + 1
            && x.len() == n_paths * (n_steps + 1) * n
            && z.len() == n_paths * n_steps * n * d_w,
        "solution dump has inconsistent sizes"
    );
    Ok((
        BsdeSolution {
            n,
            d_w,
            n_paths,
            n_steps,
            times,
            x,
            z,
            picard_residuals,
            converged,
            terminal_error,
            config,
        },
        hash,
    ))
}

/// Reads a dump and refuses it unless it was produced from `expected_hash`.
pub fn read_solution(path: &Path, expected_hash: &str) -> Result<BsdeSolution> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_end(&mut buf)?;
    let (sol, hash) =
        decode_solution(&buf).with_context(|| format!("reading {}", path.display()))?;
    if hash != expected_hash {
        bail!(
            "{} was produced from scenario {hash}, not {expected_hash}; refusing to mix artifacts",
            path.display()
        );
    }
    Ok(sol)
}
