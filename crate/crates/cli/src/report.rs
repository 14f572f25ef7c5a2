use std::path::PathBuf;

use spinobs::rational::{fmt_rational, fmt_real, Rational};

/// A CSV table with a fixed header. Rationals are written as `p/q` and
/// reals with 17 significant digits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

pub(crate) fn q(r: &Rational) -> String {
    fmt_rational(r)
}

pub(crate) fn f(x: f64) -> String {
    fmt_real(x)
}

/// Result of one pipeline before serialisation.
#[derive(Debug, Default)]
pub(crate) struct Outcome {
    pub summary: Vec<(String, String)>,
    pub table: Option<Table>,
    pub files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outcome {
    pub fn kv(&mut self, key: &str, value: impl SummaryValue) {
        self.summary.push((key.to_string(), value.render()));
    }

    pub fn summary_text(&self) -> String {
        self.summary.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// Rendering of summary values. Reals use the shortest round-trip form,
/// switching to exponent notation outside [1e-4, 1e16).
pub(crate) trait SummaryValue {
    fn render(&self) -> String;
}

impl SummaryValue for f64 {
    fn render(&self) -> String {
        let a = self.abs();
        if a != 0.0 && a.is_finite() && !(1e-4..1e16).contains(&a) {
            format!("{self:e}")
        } else {
            format!("{self}")
        }
    }
}

macro_rules! display_value {
    ($($t:ty),*) => { $( impl SummaryValue for $t { fn render(&self) -> String { self.to_string() } } )* };
}

display_value!(String, str, usize, u64, u32, bool, num::BigUint, std::sync::Arc<spinobs::gadgets::Recipe>);

impl<T: SummaryValue + ?Sized> SummaryValue for &T {
    fn render(&self) -> String {
        (**self).render()
    }
}
