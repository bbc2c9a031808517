//! CSV tables with unit-annotated headers such as `R [a0]`.

use std::path::Path;

use anyhow::{bail, Context};

/// Shortest round-trip decimal form; `nan` for NaN.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// A CSV file read back into memory.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r.records().collect::<Result<Vec<_>, _>>().with_context(|| format!("parsing {}", path.display()))?;
        Ok(Table { header, rows })
    }

    /// Index of the column whose name, without its unit suffix, is `name`.
    pub fn column(&self, name: &str) -> anyhow::Result<usize> {
        match self.header.iter().position(|h| h.split(" [").next() == Some(name)) {
            Some(i) => Ok(i),
            None => bail!("no column {name} in table"),
        }
    }

    pub fn f64s(&self, name: &str) -> anyhow::Result<Vec<f64>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .map(|r| r[c].parse::<f64>().with_context(|| format!("column {name}: {:?} is not a number", &r[c])))
            .collect()
    }

    pub fn strings(&self, name: &str) -> anyhow::Result<Vec<String>> {
        let c = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[c].to_string()).collect())
    }
}
