use std::fmt;
use std::io::{BufRead, Write};

use serde::Serialize;

use super::HarnessError;

pub const CSV_HEADER: &str = "step,episode,episode_return,critic_loss,actor_loss,wall_ms";

/// One line of a metrics CSV. Losses are NaN when no update contributed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub episode: u64,
    pub episode_return: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub wall_ms: u64,
}

impl MetricsRow {
    /// Same row with `wall_ms` zeroed, for run-to-run comparisons.
    pub fn without_wall_time(mut self) -> Self {
        self.wall_ms = 0;
        self
    }

    /// Fields compare equal, treating NaN as equal to NaN.
    pub fn same_as(&self, other: &MetricsRow) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.step == other.step
            && self.episode == other.episode
            && eq(self.episode_return, other.episode_return)
            && eq(self.critic_loss, other.critic_loss)
            && eq(self.actor_loss, other.actor_loss)
            && self.wall_ms == other.wall_ms
    }
}

impl fmt::Display for MetricsRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{}",
            self.step, self.episode, self.episode_return, self.critic_loss, self.actor_loss, self.wall_ms
        )
    }
}

pub fn write_csv<W: Write>(mut w: W, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    Ok(())
}

/// Parses a metrics CSV; errors carry 1-based line numbers.
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (idx, line) in r.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| HarnessError::Csv {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.trim();
        if !saw_header {
            if line != CSV_HEADER {
                return Err(HarnessError::Csv {
                    line: line_no,
                    message: format!("expected header '{CSV_HEADER}'"),
                });
            }
            saw_header = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        rows.push(parse_row(line).map_err(|message| HarnessError::Csv { line: line_no, message })?);
    }
    if !saw_header {
        return Err(HarnessError::Csv {
            line: 1,
            message: "empty file".into(),
        });
    }
    Ok(rows)
}

fn parse_row(line: &str) -> Result<MetricsRow, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 6 {
        return Err(format!("expected 6 fields, found {}", fields.len()));
    }
    let int = |i: usize, name: &str| fields[i].trim().parse::<u64>().map_err(|_| format!("{name}: cannot parse '{}'", fields[i]));
    let real = |i: usize, name: &str| fields[i].trim().parse::<f64>().map_err(|_| format!("{name}: cannot parse '{}'", fields[i]));
    Ok(MetricsRow {
        step: int(0, "step")?,
        episode: int(1, "episode")?,
        episode_return: real(2, "episode_return")?,
        critic_loss: real(3, "critic_loss")?,
        actor_loss: real(4, "actor_loss")?,
        wall_ms: int(5, "wall_ms")?,
    })
}

/// Mean and sample standard deviation across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    /// Set when only one value was aggregated; `std` is then 0.
    pub single_seed: bool,
}

impl SummaryStat {
    /// `mean±std` with one decimal.
    pub fn render(&self) -> String {
        format!("{:.1}±{:.1}", self.mean, self.std)
    }
}

impl fmt::Display for SummaryStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Welford accumulation of mean and `n − 1` variance.
pub fn aggregate_seeds(values: &[f64]) -> Result<SummaryStat, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Empty("nothing to aggregate".into()));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    let n = values.len();
    let std = if n > 1 { (m2 / (n - 1) as f64).max(0.0).sqrt() } else { 0.0 };
    Ok(SummaryStat {
        mean,
        std,
        n,
        single_seed: n == 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregation_examples() {
        let s = aggregate_seeds(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std, s.n, s.single_seed), (2.0, 1.0, 3, false));
        assert_eq!(s.render(), "2.0±1.0");
        let s = aggregate_seeds(&[5.0]).unwrap();
        assert!(s.single_seed);
        assert_eq!(s.render(), "5.0±0.0");
        let s = aggregate_seeds(&[-1.0, 1.0]).unwrap();
        assert_eq!(s.mean, 0.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert!(aggregate_seeds(&[]).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let rows = vec![
            MetricsRow {
                step: 200,
                episode: 0,
                episode_return: -1234.5678901234,
                critic_loss: f64::NAN,
                actor_loss: 0.1,
                wall_ms: 17,
            },
            MetricsRow {
                step: 400,
                episode: 1,
                episode_return: 1e-300,
                critic_loss: 3.0,
                actor_loss: -2.5,
                wall_ms: 40,
            },
        ];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert!(rows.iter().zip(&back).all(|(a, b)| a.same_as(b)));

        let bad = format!("{CSV_HEADER}\n1,0,2.0,0,0,5\n2,x,1,1,1,1\n");
        match read_csv(bad.as_bytes()) {
            Err(HarnessError::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(read_csv("a,b\n".as_bytes()).is_err());
    }
}
