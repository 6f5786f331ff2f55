use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::market_sim::{RfqRecord, Side, Status, PRICE_DECIMALS};

use super::{atomic_write, read_to_string};

pub const DATASET_HEADER: [&str; 11] = [
    "Time",
    "Bond",
    "Side",
    "Notional",
    "CounterParty",
    "MidPrice",
    "QuotedPrice",
    "Competition",
    "Status",
    "NextMidPrice",
    "Live",
];

/// The dataset as CSV text, prices with six decimals.
pub fn render_dataset(records: &[RfqRecord]) -> String {
    let dp = PRICE_DECIMALS as usize;
    let mut out = DATASET_HEADER.join(",");
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{:.dp$},{:.dp$},{},{},{:.dp$},{}",
            r.time,
            r.bond,
            r.side.code(),
            r.notional,
            r.counterparty,
            r.mid_price,
            r.quoted_price,
            r.competition,
            r.status.code(),
            r.next_mid_price,
            r.live as u8,
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn write_dataset(path: &Path, records: &[RfqRecord]) -> Result<()> {
    atomic_write(path, render_dataset(records).as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Vec<RfqRecord>> {
    parse_dataset(&read_to_string(path)?, &path.display().to_string())
}

struct RowParser<'a> {
    source: &'a str,
    line: usize,
    record: &'a csv::StringRecord,
}

impl RowParser<'_> {
    fn err(&self, column: usize, message: String) -> Error {
        Error::Parse {
            path: self.source.to_string(),
            row: self.line,
            column: DATASET_HEADER[column].to_string(),
            message,
        }
    }

    fn field<T: FromStr>(&self, column: usize) -> Result<T> {
        let raw = self.record.get(column).unwrap_or("").trim();
        raw.parse()
            .map_err(|_| self.err(column, format!("cannot parse `{raw}`")))
    }

    fn ranged(&self, column: usize, lo: u8, hi: u8) -> Result<u8> {
        let v: u8 = self.field(column)?;
        if v < lo || v > hi {
            return Err(self.err(column, format!("{v} outside {lo}..={hi}")));
        }
        Ok(v)
    }

    fn price(&self, column: usize) -> Result<f64> {
        let v: f64 = self.field(column)?;
        if !(v.is_finite() && v > 0.0) {
            return Err(self.err(column, format!("{v} is not a positive price")));
        }
        Ok(v)
    }
}

/// Parses dataset CSV text; `source` names the input in error messages.
pub fn parse_dataset(text: &str, source: &str) -> Result<Vec<RfqRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    for (i, expected) in DATASET_HEADER.iter().enumerate() {
        let got = header.get(i).map(str::trim);
        if got != Some(*expected) {
            return Err(Error::Parse {
                path: source.to_string(),
                row: 1,
                column: got.unwrap_or("<missing>").to_string(),
                message: format!("expected header column `{expected}`"),
            });
        }
    }
    if header.len() != DATASET_HEADER.len() {
        return Err(Error::Parse {
            path: source.to_string(),
            row: 1,
            column: header.get(DATASET_HEADER.len()).unwrap_or("").to_string(),
            message: format!("expected {} columns", DATASET_HEADER.len()),
        });
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let record = row?;
        let p = RowParser {
            source,
            line: i + 2,
            record: &record,
        };
        records.push(RfqRecord {
            time: p.field(0)?,
            bond: p.field(1)?,
            side: Side::from_code(p.ranged(2, 0, 1)?).expect("range checked"),
            notional: p.field(3)?,
            counterparty: p.ranged(4, 0, 3)?,
            mid_price: p.price(5)?,
            quoted_price: p.price(6)?,
            competition: p.ranged(7, 1, 4)?,
            status: Status::from_code(p.ranged(8, 0, 1)?).expect("range checked"),
            next_mid_price: p.price(9)?,
            live: p.ranged(10, 0, 1)? == 1,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_sim::{gen_rfq_dataset, SimConfig};

    fn small() -> Vec<RfqRecord> {
        gen_rfq_dataset(&SimConfig {
            n_records: 200,
            ..SimConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let records = small();
        let text = render_dataset(&records);
        assert_eq!(parse_dataset(&text, "mem").unwrap(), records);
    }

    #[test]
    fn renamed_header_column() {
        let text = render_dataset(&small()).replacen("MidPrice", "Mid", 1);
        match parse_dataset(&text, "mem") {
            Err(Error::Parse { column, row, .. }) => {
                assert_eq!(column, "Mid");
                assert_eq!(row, 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn competition_out_of_range() {
        let records = small();
        let mut lines: Vec<String> = render_dataset(&records).lines().map(String::from).collect();
        let mut cells: Vec<String> = lines[4].split(',').map(String::from).collect();
        cells[7] = "5".into();
        lines[4] = cells.join(",");
        match parse_dataset(&lines.join("\n"), "mem") {
            Err(Error::Parse { column, row, .. }) => {
                assert_eq!(column, "Competition");
                assert_eq!(row, 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell() {
        let text = render_dataset(&small()[..3]).replacen(",1000", ",lots", 1);
        assert!(matches!(
            parse_dataset(&text, "mem"),
            Err(Error::Parse { .. })
        ));
    }
}
