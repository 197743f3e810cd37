//! CSV output: one long-format file per experiment and a summary of checks.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Reals are written with 17 significant digits.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Builds `key=value;key=value` parameter strings. Reals use the shortest
/// representation that round-trips.
#[derive(Debug, Clone, Default)]
pub struct Params(String);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        if !self.0.is_empty() {
            self.0.push(';');
        }
        let _ = write!(self.0, "{key}={value}");
        self
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Params {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub section: String,
    pub params: String,
    pub quantity: String,
    pub value: f64,
}

/// A single `lhs ≤ rhs` assertion.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
        }
    }

    /// `lhs ≥ rhs`, stored as `rhs ≤ lhs`.
    pub fn at_least(name: impl Into<String>, value: f64, floor: f64) -> Self {
        Self::new(name, floor, value)
    }

    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn pass(&self) -> bool {
        self.lhs <= self.rhs
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub id: String,
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
}

impl ExperimentOutput {
    pub fn new(id: &str) -> Self {
        Self {
            id: id.to_string(),
            ..Self::default()
        }
    }

    pub fn row(&mut self, section: &str, params: &Params, quantity: &str, value: f64) {
        self.rows.push(Row {
            section: section.to_string(),
            params: params.to_string(),
            quantity: quantity.to_string(),
            value,
        });
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::pass)
    }

    pub fn checks_named<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a Check> + 'a {
        self.checks.iter().filter(move |c| c.name.starts_with(prefix))
    }
}

pub const EXPERIMENT_HEADER: [&str; 5] = ["experiment", "section", "params", "quantity", "value"];
pub const SUMMARY_HEADER: [&str; 6] = ["experiment", "check_name", "lhs", "rhs", "margin", "pass"];

pub fn experiment_csv(out: &ExperimentOutput) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EXPERIMENT_HEADER)?;
    for r in &out.rows {
        w.write_record([out.id.as_str(), &r.section, &r.params, &r.quantity, &real(r.value)])?;
    }
    Ok(w.into_inner()?)
}

pub fn summary_csv(outputs: &[ExperimentOutput]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for o in outputs {
        for c in &o.checks {
            w.write_record([
                o.id.as_str(),
                &c.name,
                &real(c.lhs),
                &real(c.rhs),
                &real(c.margin()),
                if c.pass() { "true" } else { "false" },
            ])?;
        }
    }
    Ok(w.into_inner()?)
}

/// Writes `<id>.csv` for every experiment and `summary.csv` into `dir`.
pub fn write_all(dir: &Path, outputs: &[ExperimentOutput]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for o in outputs {
        let path = dir.join(format!("{}.csv", o.id.to_ascii_lowercase()));
        std::fs::write(&path, experiment_csv(o)?).with_context(|| format!("writing {}", path.display()))?;
    }
    let path = dir.join("summary.csv");
    std::fs::write(&path, summary_csv(outputs)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// One stored summary row that disagrees with its own `lhs`/`rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub line: usize,
    pub check: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Verification {
    pub rows: usize,
    pub failing: Vec<String>,
    pub mismatches: Vec<Mismatch>,
}

/// Re-derives `pass` and `margin` of every row of a summary file.
pub fn verify_summary(bytes: &[u8]) -> Result<Verification> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != SUMMARY_HEADER {
        bail!("not a summary file: header is {:?}", header.iter().collect::<Vec<_>>());
    }
    let mut v = Verification::default();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let name = format!("{}/{}", &rec[0], &rec[1]);
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .with_context(|| format!("line {line}: bad number '{}'", &rec[i]))
        };
        let (lhs, rhs, margin) = (parse(2)?, parse(3)?, parse(4)?);
        let stored = match &rec[5] {
            "true" => true,
            "false" => false,
            other => bail!("line {line}: bad pass flag '{other}'"),
        };
        let c = Check::new(name.clone(), lhs, rhs);
        if c.pass() != stored {
            v.mismatches.push(Mismatch {
                line,
                check: name.clone(),
                reason: format!("stored pass={stored} but lhs <= rhs is {}", c.pass()),
            });
        }
        let expect = c.margin();
        if !(margin == expect || (margin.is_nan() && expect.is_nan()) || real(margin) == real(expect)) {
            v.mismatches.push(Mismatch {
                line,
                check: name.clone(),
                reason: format!("stored margin {margin} but rhs - lhs = {expect}"),
            });
        }
        if !c.pass() {
            v.failing.push(name);
        }
        v.rows += 1;
    }
    Ok(v)
}
