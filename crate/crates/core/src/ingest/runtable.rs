use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Cross-run table: one row per trained model, first column its id, the
/// remaining columns named reals (metrics and the validation-loss target).
#[derive(Debug, Clone, PartialEq)]
pub struct RunTable {
    pub columns: Vec<String>,
    pub run_ids: Vec<String>,
    /// Row-major, `run_ids.len() × columns.len()`.
    pub values: Vec<Vec<f64>>,
}

impl RunTable {
    pub fn len(&self) -> usize {
        self.run_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.run_ids.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Usage(format!("no column named {name:?}")))?;
        Ok(self.values.iter().map(|row| row[idx]).collect())
    }
}

pub fn read_run_table<R: Read>(source: R) -> Result<RunTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Format(
            "run table needs a run id column and at least one value column".into(),
        ));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut run_ids = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        run_ids.push(rec.get(0).unwrap_or_default().to_owned());
        let mut parsed = Vec::with_capacity(columns.len());
        for (col, field) in columns.iter().zip(rec.iter().skip(1)) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Data(format!("run table row {row}, column {col}: {field:?} is not a number")))?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "run table row {row}, column {col}: non-finite value"
                )));
            }
            parsed.push(v);
        }
        if parsed.len() != columns.len() {
            return Err(Error::Data(format!("run table row {row}: missing values")));
        }
        values.push(parsed);
    }
    Ok(RunTable {
        columns,
        run_ids,
        values,
    })
}

pub fn write_run_table<W: Write>(table: &RunTable, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["run_id".to_owned()];
    header.extend(table.columns.iter().cloned());
    w.write_record(&header)?;
    for (id, row) in table.run_ids.iter().zip(&table.values) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_columns() {
        let csv = "run,cdnv,val_loss\na,0.5,2.1\nb,0.25,2.0\nc,0.125,1.9\n";
        let t = read_run_table(csv.as_bytes()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.column("cdnv").unwrap(), vec![0.5, 0.25, 0.125]);
        assert!(t.column("nope").is_err());
    }

    #[test]
    fn missing_value_is_data_error() {
        let csv = "run,cdnv,val_loss\na,0.5,\n";
        assert!(matches!(read_run_table(csv.as_bytes()), Err(Error::Data(_))));
    }

    #[test]
    fn write_then_read() {
        let t = RunTable {
            columns: vec!["m".into(), "y".into()],
            run_ids: vec!["r0".into(), "r1".into()],
            values: vec![vec![0.1, 3.0], vec![1e-7, -2.5]],
        };
        let mut buf = Vec::new();
        write_run_table(&t, &mut buf).unwrap();
        assert_eq!(read_run_table(&buf[..]).unwrap(), t);
    }
}
