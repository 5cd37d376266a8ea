use std::fmt;

use serde::{Deserialize, Serialize};

use crate::astro::{semi_major_axis_from_mean_motion_rev_day, Epoch, OrbitalElements};
use crate::constants::SECONDS_PER_DAY;

const LINE_LEN: usize = 69;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TleError {
    #[error("line {line}: expected {LINE_LEN} characters, found {length}")]
    LineLength { line: u8, length: usize },
    #[error("line {line}: column 1 should be '{line}', found {found:?}")]
    LineNumber { line: u8, found: String },
    #[error("line {line}: checksum in column 69 is {expected} but the line sums to {computed}")]
    Checksum { line: u8, expected: u32, computed: u32 },
    #[error("line {line}, columns {first}-{last} ({field}): cannot parse {text:?}")]
    Field {
        line: u8,
        first: usize,
        last: usize,
        field: &'static str,
        text: String,
    },
    #[error("catalog number {line1} on line 1 does not match {line2} on line 2")]
    CatalogMismatch { line1: u32, line2: u32 },
    #[error("{field} = {value} cannot be written in its TLE column")]
    Unrepresentable { field: &'static str, value: f64 },
}

/// One decoded two-line element set. Angles in degrees, mean motion in rev/day,
/// bstar in inverse Earth radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TleRecord {
    pub name: Option<String>,
    pub catalog_number: u32,
    pub classification: char,
    pub international_designator: String,
    /// Four-digit year (two-digit years 57-99 map to 19xx).
    pub epoch_year: i32,
    /// Fractional day of year, 1.0 = Jan 1 00:00.
    pub epoch_day: f64,
    /// First derivative of mean motion divided by two, rev/day².
    pub mean_motion_dot: f64,
    /// Second derivative of mean motion divided by six, rev/day³.
    pub mean_motion_ddot: f64,
    pub bstar: f64,
    pub ephemeris_type: u8,
    pub element_set_number: u32,
    pub inclination: f64,
    pub raan: f64,
    pub eccentricity: f64,
    pub arg_perigee: f64,
    pub mean_anomaly: f64,
    pub mean_motion: f64,
    pub revolution_number: u32,
    pub line1_checksum_ok: bool,
    pub line2_checksum_ok: bool,
}

/// Modulo-10 checksum over the first 68 columns: digits count their value,
/// minus signs count one.
pub fn tle_checksum(line: &str) -> u32 {
    line.chars()
        .take(LINE_LEN - 1)
        .map(|c| match c {
            '0'..='9' => c as u32 - '0' as u32,
            '-' => 1,
            _ => 0,
        })
        .sum::<u32>()
        % 10
}

fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

impl TleRecord {
    /// Epoch as days since 1970-01-01T00:00 UTC.
    pub fn epoch_unix_days(&self) -> f64 {
        days_from_civil(self.epoch_year as i64, 1, 1) as f64 + self.epoch_day - 1.0
    }

    /// Epoch in seconds relative to a reference instant given in Unix days.
    pub fn epoch_relative_to(&self, reference_unix_days: f64) -> Epoch {
        Epoch::from_seconds((self.epoch_unix_days() - reference_unix_days) * SECONDS_PER_DAY)
    }

    /// Mean elements as Keplerian elements (radians, km) at `epoch`.
    pub fn to_elements(&self, epoch: Epoch) -> Result<OrbitalElements, crate::astro::AstroError> {
        OrbitalElements::new(
            semi_major_axis_from_mean_motion_rev_day(self.mean_motion),
            self.eccentricity,
            self.inclination.to_radians(),
            self.raan.to_radians(),
            self.arg_perigee.to_radians(),
            self.mean_anomaly.to_radians(),
            epoch,
            self.bstar,
        )
    }
}

fn check_line(line: &str, number: u8, verify: bool) -> Result<bool, TleError> {
    let length = line.chars().count();
    if length != LINE_LEN || !line.is_ascii() {
        return Err(TleError::LineLength { line: number, length });
    }
    let first = &line[..1];
    if first != number.to_string() {
        return Err(TleError::LineNumber {
            line: number,
            found: first.to_string(),
        });
    }
    let expected = line[68..69].parse::<u32>().map_err(|_| TleError::Field {
        line: number,
        first: 69,
        last: 69,
        field: "checksum",
        text: line[68..69].to_string(),
    })?;
    let computed = tle_checksum(line);
    if verify && expected != computed {
        return Err(TleError::Checksum {
            line: number,
            expected,
            computed,
        });
    }
    Ok(expected == computed)
}

struct Columns<'a> {
    line: &'a str,
    number: u8,
}

impl<'a> Columns<'a> {
    /// Columns are 1-based and inclusive, as in the format description.
    fn raw(&self, first: usize, last: usize) -> &'a str {
        &self.line[first - 1..last]
    }

    fn err(&self, first: usize, last: usize, field: &'static str) -> TleError {
        TleError::Field {
            line: self.number,
            first,
            last,
            field,
            text: self.raw(first, last).to_string(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, first: usize, last: usize, field: &'static str) -> Result<T, TleError> {
        self.raw(first, last)
            .trim()
            .parse()
            .map_err(|_| self.err(first, last, field))
    }

    /// Fields like " .00016717" or "-.00002182".
    fn decimal(&self, first: usize, last: usize, field: &'static str) -> Result<f64, TleError> {
        let t = self.raw(first, last).trim();
        let (neg, body) = match t.strip_prefix('-') {
            Some(b) => (true, b),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let body = if body.starts_with('.') { format!("0{body}") } else { body.to_string() };
        let v: f64 = body.parse().map_err(|_| self.err(first, last, field))?;
        Ok(if neg { -v } else { v })
    }

    /// Implied-decimal mantissa with exponent, e.g. " 10270-3" = 0.10270e-3.
    fn exponent(&self, first: usize, last: usize, field: &'static str) -> Result<f64, TleError> {
        let t = self.raw(first, last).trim();
        if t.len() < 3 {
            return Err(self.err(first, last, field));
        }
        let (mant, exp) = t.split_at(t.len() - 2);
        let (neg, digits) = match mant.strip_prefix('-') {
            Some(d) => (true, d),
            None => (false, mant.strip_prefix('+').unwrap_or(mant)),
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(self.err(first, last, field));
        }
        let m: f64 = format!("0.{digits}").parse().map_err(|_| self.err(first, last, field))?;
        let e: i32 = exp.parse().map_err(|_| self.err(first, last, field))?;
        let v = m * 10f64.powi(e);
        Ok(if neg { -v } else { v })
    }
}

/// Decodes a line-1/line-2 pair, rejecting checksum failures.
pub fn parse_tle(line1: &str, line2: &str) -> Result<TleRecord, TleError> {
    parse_tle_with(line1, line2, true)
}

/// As [`parse_tle`]; with `verify = false` checksum failures are only
/// recorded in the `line*_checksum_ok` flags.
pub fn parse_tle_with(line1: &str, line2: &str, verify: bool) -> Result<TleRecord, TleError> {
    let line1 = line1.trim_end_matches(['\r', '\n']);
    let line2 = line2.trim_end_matches(['\r', '\n']);
    let ok1 = check_line(line1, 1, verify)?;
    let ok2 = check_line(line2, 2, verify)?;
    let c1 = Columns { line: line1, number: 1 };
    let c2 = Columns { line: line2, number: 2 };

    let cat1: u32 = c1.parse(3, 7, "catalog number")?;
    let cat2: u32 = c2.parse(3, 7, "catalog number")?;
    if cat1 != cat2 {
        return Err(TleError::CatalogMismatch { line1: cat1, line2: cat2 });
    }
    let yy: i32 = c1.parse(19, 20, "epoch year")?;
    let epoch_year = if yy < 57 { 2000 + yy } else { 1900 + yy };
    let ecc_text = c2.raw(27, 33).trim();
    if ecc_text.is_empty() || !ecc_text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(c2.err(27, 33, "eccentricity"));
    }
    let eccentricity: f64 = format!("0.{ecc_text}").parse().map_err(|_| c2.err(27, 33, "eccentricity"))?;
    let eph = c1.raw(63, 63).trim();

    Ok(TleRecord {
        name: None,
        catalog_number: cat1,
        classification: line1.as_bytes()[7] as char,
        international_designator: c1.raw(10, 17).trim().to_string(),
        epoch_year,
        epoch_day: c1.parse(21, 32, "epoch day")?,
        mean_motion_dot: c1.decimal(34, 43, "mean motion derivative")?,
        mean_motion_ddot: c1.exponent(45, 52, "mean motion second derivative")?,
        bstar: c1.exponent(54, 61, "bstar")?,
        ephemeris_type: if eph.is_empty() { 0 } else { c1.parse(63, 63, "ephemeris type")? },
        element_set_number: c1.parse(65, 68, "element set number")?,
        inclination: c2.parse(9, 16, "inclination")?,
        raan: c2.parse(18, 25, "raan")?,
        eccentricity,
        arg_perigee: c2.parse(35, 42, "argument of perigee")?,
        mean_anomaly: c2.parse(44, 51, "mean anomaly")?,
        mean_motion: c2.parse(53, 63, "mean motion")?,
        revolution_number: c2.parse(64, 68, "revolution number")?,
        line1_checksum_ok: ok1,
        line2_checksum_ok: ok2,
    })
}

fn fmt_decimal(field: &'static str, v: f64) -> Result<String, TleError> {
    let body = format!("{:.8}", v.abs());
    if !body.starts_with("0.") {
        return Err(TleError::Unrepresentable { field, value: v });
    }
    let sign = if v < 0.0 && body != "0.00000000" { '-' } else { ' ' };
    Ok(format!("{sign}{}", &body[1..]))
}

fn fmt_exponent(field: &'static str, v: f64) -> Result<String, TleError> {
    if !v.is_finite() {
        return Err(TleError::Unrepresentable { field, value: v });
    }
    let a = v.abs();
    if a == 0.0 {
        return Ok(" 00000-0".to_string());
    }
    let mut exp = a.log10().floor() as i32 + 1;
    let mut mant = (a / 10f64.powi(exp) * 1e5).round() as i64;
    if mant >= 100_000 {
        mant /= 10;
        exp += 1;
    }
    if exp < -9 {
        return Ok(" 00000-0".to_string());
    }
    if exp > 9 {
        return Err(TleError::Unrepresentable { field, value: v });
    }
    let sign = if v < 0.0 { '-' } else { ' ' };
    let esign = if exp < 0 { '-' } else { '+' };
    Ok(format!("{sign}{mant:05}{esign}{}", exp.abs()))
}

fn with_checksum(mut line: String) -> String {
    let c = tle_checksum(&line);
    line.push(char::from_digit(c, 10).unwrap());
    line
}

/// Encodes a record as its two 69-column lines with fresh checksums.
pub fn format_tle(r: &TleRecord) -> Result<(String, String), TleError> {
    let angle = |field: &'static str, v: f64| {
        if (0.0..1000.0).contains(&v) {
            Ok(v)
        } else {
            Err(TleError::Unrepresentable { field, value: v })
        }
    };
    if r.catalog_number > 99_999 {
        return Err(TleError::Unrepresentable {
            field: "catalog number",
            value: r.catalog_number as f64,
        });
    }
    if !(0.0..1.0).contains(&r.eccentricity) {
        return Err(TleError::Unrepresentable {
            field: "eccentricity",
            value: r.eccentricity,
        });
    }
    let mut ecc = (r.eccentricity * 1e7).round() as u32;
    if ecc > 9_999_999 {
        ecc = 9_999_999;
    }
    let l1 = format!(
        "1 {:05}{} {:<8} {:02}{:012.8} {} {} {} {} {:>4}",
        r.catalog_number,
        r.classification,
        r.international_designator,
        r.epoch_year.rem_euclid(100),
        r.epoch_day,
        fmt_decimal("mean motion derivative", r.mean_motion_dot)?,
        fmt_exponent("mean motion second derivative", r.mean_motion_ddot)?,
        fmt_exponent("bstar", r.bstar)?,
        r.ephemeris_type,
        r.element_set_number % 10_000,
    );
    let l2 = format!(
        "2 {:05} {:8.4} {:8.4} {:07} {:8.4} {:8.4} {:11.8}{:5}",
        r.catalog_number,
        angle("inclination", r.inclination)?,
        angle("raan", r.raan)?,
        ecc,
        angle("argument of perigee", r.arg_perigee)?,
        angle("mean anomaly", r.mean_anomaly)?,
        r.mean_motion,
        r.revolution_number % 100_000,
    );
    let (l1, l2) = (with_checksum(l1), with_checksum(l2));
    if l1.len() != LINE_LEN || l2.len() != LINE_LEN {
        return Err(TleError::Unrepresentable {
            field: "record",
            value: f64::NAN,
        });
    }
    Ok((l1, l2))
}

impl fmt::Display for TleRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (l1, l2) = format_tle(self).map_err(|_| fmt::Error)?;
        if let Some(name) = &self.name {
            writeln!(f, "{name}")?;
        }
        write!(f, "{l1}\n{l2}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogMode {
    /// Abort on the first bad record.
    Strict,
    /// Skip bad records and report them.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("catalog line {line}: {error}")]
pub struct CatalogError {
    pub line: usize,
    pub error: TleError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    /// 1-based line number of the record's first line.
    pub line: usize,
    pub record: TleRecord,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CatalogRead {
    pub entries: Vec<CatalogEntry>,
    pub skipped: Vec<CatalogError>,
}

impl CatalogRead {
    pub fn records(&self) -> impl Iterator<Item = &TleRecord> {
        self.entries.iter().map(|e| &e.record)
    }
}

/// Reads consecutive line-1/line-2 pairs, each optionally preceded by a name line.
pub fn read_catalog(text: &str, mode: CatalogMode) -> Result<CatalogRead, CatalogError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let mut out = CatalogRead::default();
    let mut name: Option<String> = None;
    let mut i = 0;
    let fail = |out: &mut CatalogRead, e: CatalogError| -> Result<(), CatalogError> {
        match mode {
            CatalogMode::Strict => Err(e),
            CatalogMode::Lenient => {
                out.skipped.push(e);
                Ok(())
            }
        }
    };
    while i < lines.len() {
        let (n1, l1) = lines[i];
        if l1.starts_with("1 ") {
            let Some(&(n2, l2)) = lines.get(i + 1).filter(|(_, l)| l.starts_with("2 ")) else {
                let found = lines.get(i + 1).map(|(_, l)| l.chars().take(1).collect()).unwrap_or_default();
                fail(
                    &mut out,
                    CatalogError {
                        line: lines.get(i + 1).map_or(n1, |(n, _)| *n),
                        error: TleError::LineNumber { line: 2, found },
                    },
                )?;
                name = None;
                i += 1;
                continue;
            };
            match parse_tle(l1, l2) {
                Ok(mut record) => {
                    record.name = name.take();
                    out.entries.push(CatalogEntry { line: n1, record });
                }
                Err(error) => {
                    let line = match &error {
                        TleError::LineLength { line: 2, .. }
                        | TleError::LineNumber { line: 2, .. }
                        | TleError::Checksum { line: 2, .. }
                        | TleError::Field { line: 2, .. } => n2,
                        _ => n1,
                    };
                    name = None;
                    fail(&mut out, CatalogError { line, error })?;
                }
            }
            i += 2;
        } else if l1.starts_with("2 ") {
            fail(
                &mut out,
                CatalogError {
                    line: n1,
                    error: TleError::LineNumber {
                        line: 1,
                        found: "2".into(),
                    },
                },
            )?;
            name = None;
            i += 1;
        } else {
            let trimmed = l1.strip_prefix("0 ").unwrap_or(l1).trim();
            name = Some(trimmed.to_string());
            i += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const L1: &str = "1 25544U 98067A   21316.58314353 -.00007551  00000-0 -13101-3 0  9994";
    const L2: &str = "2 25544  51.6442 328.9484 0004731 186.1225 318.0089 15.48559922311590";

    #[test]
    fn checksum_of_published_lines() {
        assert_eq!(tle_checksum(L1), 4);
        assert_eq!(tle_checksum(L2), 0);
    }

    #[test]
    fn exponent_fields() {
        let c = Columns {
            line: " 10270-3",
            number: 1,
        };
        assert!((c.exponent(1, 8, "x").unwrap() - 1.027e-4).abs() < 1e-18);
        assert_eq!(fmt_exponent("x", 1.027e-4).unwrap(), " 10270-3");
        assert_eq!(fmt_exponent("x", -1.3101e-4).unwrap(), "-13101-3");
        assert_eq!(fmt_exponent("x", 0.0).unwrap(), " 00000-0");
        assert_eq!(fmt_exponent("x", 0.999999e-3).unwrap(), " 10000-2");
    }

    #[test]
    fn decimal_field() {
        assert_eq!(fmt_decimal("x", -0.00007551).unwrap(), "-.00007551");
        assert_eq!(fmt_decimal("x", 0.00016717).unwrap(), " .00016717");
        assert!(fmt_decimal("x", 1.5).is_err());
    }

    #[test]
    fn civil_days() {
        assert_eq!(days_from_civil(1970, 1, 1), 0);
        assert_eq!(days_from_civil(2000, 3, 1), 11_017);
    }
}
