//! Per-slot result CSVs.

use std::io::{Read, Write};
use std::path::Path;

use crate::agents::Evaluation;
use crate::error::{Error, Result};

pub const HEADER: [&str; 8] = [
    "strategy",
    "episode",
    "slot",
    "activity",
    "reward",
    "relevance",
    "cost",
    "alpha_mask",
];

/// One evaluated slot as written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub strategy: String,
    pub episode: usize,
    pub slot: usize,
    pub activity: usize,
    pub reward: f64,
    pub relevance: f64,
    pub cost: f64,
    /// Selected metrics, metric 0 in the least significant bit.
    pub alpha_mask: u64,
}

impl ResultRow {
    /// Checks `reward = relevance - lambda * cost` to within `1e-9`.
    pub fn check(&self, lambda: f64) -> Result<()> {
        let expected = self.relevance - lambda * self.cost;
        if (self.reward - expected).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "{} episode {} slot {}: reward {} but relevance - lambda * cost = {expected}",
                self.strategy, self.episode, self.slot, self.reward
            )));
        }
        Ok(())
    }
}

pub fn rows_from_evaluation(strategy: &str, eval: &Evaluation<f64>) -> Vec<ResultRow> {
    eval.slots
        .iter()
        .map(|s| ResultRow {
            strategy: strategy.to_owned(),
            episode: s.episode,
            slot: s.slot,
            activity: s.info.activity.0,
            reward: s.reward,
            relevance: s.info.relevance,
            cost: s.info.cost,
            alpha_mask: s.info.alpha.mask(),
        })
        .collect()
}

/// Shortest exact representation; parsing it back yields the same `f64`.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_results_to<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.strategy.clone(),
            r.episode.to_string(),
            r.slot.to_string(),
            r.activity.to_string(),
            format_float(r.reward),
            format_float(r.relevance),
            format_float(r.cost),
            r.alpha_mask.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::from(e).context(format!("creating {}", path.display())))?;
    write_results_to(rows, std::io::BufWriter::new(file))
        .map_err(|e| e.context(format!("writing {}", path.display())))
}

pub fn read_results_from<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(Error::invalid(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |i: usize| {
            Error::invalid(format!(
                "row {}: bad {} `{}`",
                line + 1,
                HEADER[i],
                field(i)
            ))
        };
        let int = |i: usize| field(i).parse::<usize>().map_err(|_| bad(i));
        let float = |i: usize| field(i).parse::<f64>().map_err(|_| bad(i));
        rows.push(ResultRow {
            strategy: field(0).to_owned(),
            episode: int(1)?,
            slot: int(2)?,
            activity: int(3)?,
            reward: float(4)?,
            relevance: float(5)?,
            cost: float(6)?,
            alpha_mask: field(7).parse().map_err(|_| bad(7))?,
        });
    }
    Ok(rows)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::from(e).context(format!("opening {}", path.display())))?;
    read_results_from(file).map_err(|e| e.context(format!("reading {}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SelectionVector;

    fn row(reward: f64) -> ResultRow {
        ResultRow {
            strategy: "fixed".into(),
            episode: 1,
            slot: 2,
            activity: 3,
            reward,
            relevance: 0.9,
            cost: 0.4004,
            alpha_mask: 5,
        }
    }

    #[test]
    fn empty_rows_give_header_only() {
        let mut buf = Vec::new();
        write_results_to(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "strategy,episode,slot,activity,reward,relevance,cost,alpha_mask\n"
        );
    }

    #[test]
    fn round_trip_recovers_values() {
        let rows = vec![row(0.4996), row(1.0 / 3.0), row(-2.5e-17), row(0.1 + 0.2)];
        let mut buf = Vec::new();
        write_results_to(&rows, &mut buf).unwrap();
        let back = read_results_from(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        for (a, b) in back.iter().zip(&rows) {
            assert_eq!(a.reward.to_bits(), b.reward.to_bits());
        }
    }

    #[test]
    fn reward_has_enough_digits() {
        let text = format_float(0.123456789012345);
        let mantissa = text.split('e').next().unwrap().replace(['.', '-'], "");
        assert!(mantissa.len() >= 12, "{text}");
    }

    #[test]
    fn mask_encoding() {
        assert_eq!(
            SelectionVector::from_mask(5, 3).as_slice(),
            &[true, false, true]
        );
        assert_eq!(SelectionVector::from_mask(5, 3).mask(), 5);
    }

    #[test]
    fn decomposition_check() {
        assert!(row(0.9 - 0.4004).check(1.0).is_ok());
        assert!(row(0.9).check(1.0).is_err());
    }

    #[test]
    fn bad_input_rejected() {
        assert!(read_results_from("a,b\n1,2\n".as_bytes()).is_err());
        let text =
            "strategy,episode,slot,activity,reward,relevance,cost,alpha_mask\nx,1,2,3,oops,0,0,0\n";
        assert!(read_results_from(text.as_bytes()).is_err());
    }
}
