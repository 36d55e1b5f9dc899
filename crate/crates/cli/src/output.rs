//! Output directory handling: CSV tables, check results and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use harmlil_core::suites::CriterionReport;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Floats at 17 significant digits, so every value round-trips.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Table {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).map_err(io_csv)?;
        for r in &self.rows {
            w.write_record(r).map_err(io_csv)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }
}

fn io_csv(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measurements: Vec<(String, f64)>,
    pub failures: Vec<String>,
}

impl Check {
    pub fn new(name: impl Into<String>) -> Check {
        Check { name: name.into(), passed: true, measurements: Vec::new(), failures: Vec::new() }
    }

    pub fn measure(&mut self, key: impl Into<String>, v: f64) {
        self.measurements.push((key.into(), v));
    }

    pub fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.passed = false;
            self.failures.push(what());
        }
    }

    pub fn from_report(r: &CriterionReport) -> Check {
        Check {
            name: format!("criterion_{}", r.id),
            passed: r.passed,
            measurements: r.measurements.clone(),
            failures: r.failures.clone(),
        }
    }
}

/// One invocation: its output directory, emitted files and checks.
pub struct Run {
    dir: PathBuf,
    command: String,
    config_text: String,
    started: Instant,
    files: Vec<(String, String)>,
    pub checks: Vec<Check>,
}

impl Run {
    pub fn new(dir: &Path, command: &str, config_text: String) -> Result<Run, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let mut run = Run {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config_text,
            started: Instant::now(),
            files: Vec::new(),
            checks: Vec::new(),
        };
        let text = run.config_text.clone();
        run.write("config.ini", text.as_bytes())?;
        Ok(run)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push((name.to_string(), hex::encode(Sha256::digest(bytes))));
        Ok(())
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        let bytes = table.to_bytes()?;
        self.write(name, &bytes)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Prints one line per check and writes `manifest.txt`. Returns whether all passed.
    pub fn finish(self) -> Result<bool, CliError> {
        for c in &self.checks {
            println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
            for (k, v) in &c.measurements {
                println!("    {k} = {v:e}");
            }
            for f in &c.failures {
                println!("    failed: {f}");
            }
        }
        let passed = self.passed();
        let mut m = String::new();
        let _ = writeln!(m, "command = {}", self.command);
        let _ = writeln!(m, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(m, "config_sha256 = {}", hex::encode(Sha256::digest(self.config_text.as_bytes())));
        let _ = writeln!(m, "wall_clock_s = {:.3}", self.started.elapsed().as_secs_f64());
        let _ = writeln!(m, "status = {}", if passed { "pass" } else { "fail" });
        for c in &self.checks {
            let _ = writeln!(m, "\n[check {}]\npassed = {}", c.name, c.passed);
            for (k, v) in &c.measurements {
                let _ = writeln!(m, "{k} = {}", num(*v));
            }
            for f in &c.failures {
                let _ = writeln!(m, "failure = {f}");
            }
        }
        m.push_str("\n[files]\n");
        for (name, hash) in &self.files {
            let _ = writeln!(m, "{name} = {hash}");
        }
        let path = self.dir.join("manifest.txt");
        fs::write(&path, m).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(passed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(num(-2.0), "-2.0000000000000000e0");
    }

    #[test]
    fn manifest_lists_every_file_with_its_hash() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = Run::new(dir.path(), "test", "seed = 1\n".into()).unwrap();
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), num(0.5)]);
        run.write_table("t.csv", &t).unwrap();
        let mut c = Check::new("c");
        c.require(false, || "nope".into());
        run.checks.push(c);
        assert!(!run.finish().unwrap());
        let m = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        let csv = fs::read(dir.path().join("t.csv")).unwrap();
        assert_eq!(String::from_utf8(csv.clone()).unwrap(), "a,b\n1,5.0000000000000000e-1\n");
        assert!(m.contains(&format!("t.csv = {}", hex::encode(Sha256::digest(&csv)))));
        assert!(m.contains("config.ini = ") && m.contains("status = fail") && m.contains("failure = nope"));
    }
}
