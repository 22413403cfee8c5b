use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub const CSV_HEADER: &str = "scheme,snr_db,param,mean_se,stderr,n,feedback_bits,wall_ms";

/// One aggregated (scheme, SNR, sweep parameter) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheme: String,
    pub snr_db: f64,
    /// Swept quantity (cluster count or RF-chain count); empty for plain sweeps.
    pub param: Option<usize>,
    pub mean_se: f64,
    pub stderr: f64,
    pub n: usize,
    /// Empty for schemes without quantized feedback.
    pub feedback_bits: Option<u64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// CSV with a fixed column order. Numbers use Rust's `Display`, which always
    /// writes `.` as the decimal point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let param = r.param.map(|p| p.to_string()).unwrap_or_default();
            let bits = r.feedback_bits.map(|b| b.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.scheme, r.snr_db, param, r.mean_se, r.stderr, r.n, bits, r.wall_ms
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep result serialization cannot fail") + "\n"
    }

    /// Rows of one scheme, in output order.
    pub fn scheme_rows<'a>(&'a self, scheme: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.scheme == scheme)
    }

    pub fn find(&self, scheme: &str, snr_db: f64, param: Option<usize>) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.snr_db == snr_db && r.param == param)
    }
}

/// Mean and standard error of the mean.
pub(crate) fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_result_is_header_only() {
        assert_eq!(SweepResult::default().to_csv(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn csv_formatting() {
        let r = SweepResult {
            rows: vec![SweepRow {
                scheme: "svd_unitary".into(),
                snr_db: -2.5,
                param: Some(3),
                mean_se: 1.25,
                stderr: 0.5,
                n: 4,
                feedback_bits: None,
                wall_ms: 0.0,
            }],
        };
        let csv = r.to_csv();
        assert_eq!(csv.lines().nth(1).unwrap(), "svd_unitary,-2.5,3,1.25,0.5,4,,0");
        let back: SweepResult = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn standard_error() {
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_stderr(&[5.0]), (5.0, 0.0));
    }
}
