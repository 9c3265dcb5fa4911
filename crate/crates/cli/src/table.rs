//! Trajectory CSV files: a `t` column followed by one column per state.
//!
//! Values are written with 17 significant digits so a file read back
//! reproduces every `f64` exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use dtemt::solvers::{Observer, RunResult, Sample};

/// Streams accepted samples to a CSV file, keeping every n-th grid point.
pub struct CsvWriter {
    out: BufWriter<File>,
    every: usize,
    line: String,
    rows: usize,
    error: Option<std::io::Error>,
}

impl CsvWriter {
    pub fn create(path: &Path, names: &[String], every: usize) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("cannot create `{}`", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "t,{}", names.join(",")).with_context(|| format!("cannot write `{}`", path.display()))?;
        Ok(Self {
            out,
            every,
            line: String::new(),
            rows: 0,
            error: None,
        })
    }

    /// Flush the file and report any write error met while streaming.
    pub fn finish(mut self) -> std::io::Result<usize> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.rows)
    }
}

fn push_value(line: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(line, "{v:.16e}");
}

impl Observer for CsvWriter {
    fn observe(&mut self, s: &Sample<'_>) -> std::ops::ControlFlow<()> {
        use dtemt::solvers::SampleKind;
        if let SampleKind::Grid(n) = s.kind {
            if n % self.every != 0 {
                return std::ops::ControlFlow::Continue(());
            }
        }
        self.line.clear();
        push_value(&mut self.line, s.t);
        for v in s.x {
            self.line.push(',');
            push_value(&mut self.line, *v);
        }
        self.line.push('\n');
        if let Err(e) = self.out.write_all(self.line.as_bytes()) {
            self.error = Some(e);
            return std::ops::ControlFlow::Break(());
        }
        self.rows += 1;
        std::ops::ControlFlow::Continue(())
    }
}

/// Read a trajectory CSV into a [`RunResult`].
pub fn read_run(path: &Path) -> Result<RunResult> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot open `{}`", path.display()))?;
    let headers = reader.headers().with_context(|| format!("cannot read `{}`", path.display()))?.clone();
    if headers.get(0) != Some("t") {
        bail!("`{}`: first column must be `t`", path.display());
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut run = RunResult::empty(names);
    let mut row = Vec::with_capacity(run.dim());
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("`{}`: malformed row {}", path.display(), i + 2))?;
        row.clear();
        for field in &record {
            let v: f64 = field
                .trim()
                .parse()
                .with_context(|| format!("`{}`: row {}: `{field}` is not a number", path.display(), i + 2))?;
            row.push(v);
        }
        run.push(row[0], &row[1..]);
    }
    Ok(run)
}
