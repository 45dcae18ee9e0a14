//! CSV rows and the optional gnuplot script.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

pub const CSV_HEADER: &str = "experiment,method,sweep_value,trial,rate_bits,iterations,mc_outage,status,seed";

/// One CSV line. Empty cells mean "not applicable": no rate for failed
/// runs and validation checks, no outage estimate when none was drawn.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub sweep_value: f64,
    pub trial: usize,
    pub rate_bits: Option<f64>,
    pub iterations: Option<usize>,
    pub mc_outage: Option<f64>,
    pub status: String,
    pub seed: u64,
}

pub fn write_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Gnuplot script plotting the per-method mean of `rate_bits` against
/// `sweep_value` (`smooth unique` averages rows sharing an x value).
pub fn gnuplot_script(csv_path: &Path, xlabel: &str, methods: &[&str]) -> String {
    let file = csv_path.file_name().map_or_else(|| csv_path.display().to_string(), |f| f.to_string_lossy().into_owned());
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str(&format!("set xlabel '{xlabel}'\n"));
    s.push_str("set ylabel 'sum secrecy rate (bits/s/Hz)'\n");
    s.push_str("set key left top\n");
    let curves: Vec<String> = methods
        .iter()
        .map(|m| {
            format!("'{file}' every ::1 using 3:(strcol(2) eq '{m}' ? $5 : NaN) smooth unique with linespoints title '{m}'")
        })
        .collect();
    s.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
    s
}
